use super::DiscretePdf1D;
use crate::Real;

/// A joint sample on the unit square with its square-measure density.
#[derive(Clone, Copy, Debug)]
pub struct SquareSample<T: Real = f32> {
    pub eps1: T,
    pub eps2: T,
    /// Joint density `p(eps1) * p(eps2 | eps1)` over the unit square.
    pub pdf: T,
}

/// Joint density of the marginal in `eps1` and a conditional evaluated at
/// that `eps1`. The caller is responsible for `conditional` actually being
/// conditioned on `eps1`.
pub fn product_eval<T: Real>(
    marginal: &DiscretePdf1D<T>,
    conditional: &DiscretePdf1D<T>,
    eps1: T,
    eps2: T,
) -> T {
    marginal.eval(eps1) * conditional.eval(eps2)
}

/// Samples the marginal, instantiates the conditional at the sampled `eps1`,
/// then samples it; the returned density is exact for this two-stage scheme.
pub fn product_sample<T: Real>(
    marginal: &DiscretePdf1D<T>,
    conditional_at: impl FnOnce(T) -> DiscretePdf1D<T>,
    u1: T,
    u2: T,
) -> SquareSample<T> {
    let (eps1, p1) = marginal.sample(u1);
    let conditional = conditional_at(eps1);
    let (eps2, p2) = conditional.sample(u2);
    SquareSample {
        eps1,
        eps2,
        pdf: p1 * p2,
    }
}

/// Joint density evaluated on all bin centers, one text row per `eps2` bin,
/// columns over `eps1` bins. Used for debug dumps of learned distributions.
pub fn dump_joint<T: Real>(
    marginal: &DiscretePdf1D<T>,
    mut conditional_at: impl FnMut(T) -> DiscretePdf1D<T>,
    m2: usize,
) -> String {
    let m1 = marginal.len();
    let mut rows = vec![vec![0.0f64; m1]; m2];
    for i in 0..m1 {
        let eps1 = T::of((i as f64 + 0.5) / m1 as f64);
        let p1 = marginal.eval(eps1);
        let conditional = conditional_at(eps1);
        assert_eq!(conditional.len(), m2);
        for (j, row) in rows.iter_mut().enumerate() {
            let eps2 = T::of((j as f64 + 0.5) / m2 as f64);
            row[i] = (p1 * conditional.eval(eps2)).to_f64();
        }
    }
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().map(|x| format!("{x:.6e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}
