//! Discretized 1D densities over [0,1] predicted as softmax logits, with
//! nearest or linear interpolation between bin values, exact CDF inversion,
//! and the square-to-sphere warp that turns a pair of them into a directional
//! distribution.

mod product;
mod warp;

pub use product::{dump_joint, product_eval, product_sample, SquareSample};
pub use warp::{solid_pdf_to_square, sphere_to_square, square_pdf_to_solid, square_to_sphere};

use crate::Real;

/// How bin values are read between bin centers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum InterpMode {
    Nearest,
    Linear,
}

/// Linear-mode treatment of the outer half-bins. `Wrap` treats the domain as
/// periodic (azimuth), `Clamp` holds the nearest bin value constant (polar).
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Boundary {
    Wrap,
    Clamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PdfError {
    NonFiniteLogits,
    Empty,
}

impl std::fmt::Display for PdfError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PdfError::NonFiniteLogits => write!(f, "non-finite logits"),
            PdfError::Empty => write!(f, "empty bin vector"),
        }
    }
}

impl std::error::Error for PdfError {}

/// Multiplicative floor keeping every bin strictly positive: bins never fall
/// below `1e-8 * M` so inverse-CDF sampling and log-density stay finite.
pub const BIN_FLOOR_SCALE: f64 = 1e-8;

/// Piecewise density on [0,1] stored as `M` bin values with `sum(v) = M`, so
/// the density integrates to one under both interpolation modes.
#[derive(Clone, Debug)]
pub struct DiscretePdf1D<T: Real = f32> {
    v: Vec<T>,
    mode: InterpMode,
    boundary: Boundary,
}

impl<T: Real> DiscretePdf1D<T> {
    /// Builds bin values `M * softmax(logits)`, floored at `1e-8 * M` and
    /// renormalized so the sum stays exactly `M` up to rounding.
    pub fn from_logits(
        logits: &[T],
        mode: InterpMode,
        boundary: Boundary,
    ) -> Result<Self, PdfError> {
        if logits.is_empty() {
            return Err(PdfError::Empty);
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(PdfError::NonFiniteLogits);
        }
        let m = T::of(logits.len() as f64);
        let floor = T::of(BIN_FLOOR_SCALE) * m;
        let max = logits.iter().cloned().fold(T::neg_infinity(), T::max);
        let mut v: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
        let sum: T = v.iter().cloned().fold(T::zero(), |a, b| a + b);
        let scale = m / sum;
        for x in v.iter_mut() {
            *x = (*x * scale).max(floor);
        }
        let sum: T = v.iter().cloned().fold(T::zero(), |a, b| a + b);
        let scale = m / sum;
        for x in v.iter_mut() {
            *x = (*x * scale).max(floor);
        }
        Ok(DiscretePdf1D { v, mode, boundary })
    }

    /// Wraps explicit bin values, rescaling so they sum to `M`.
    /// Panics on non-positive or non-finite input.
    pub fn from_bin_values(values: &[T], mode: InterpMode, boundary: Boundary) -> Self {
        assert!(!values.is_empty());
        assert!(
            values.iter().all(|x| x.is_finite() && *x > T::zero()),
            "bin values must be finite and positive"
        );
        let m = T::of(values.len() as f64);
        let sum: T = values.iter().cloned().fold(T::zero(), |a, b| a + b);
        let scale = m / sum;
        let v = values.iter().map(|&x| x * scale).collect();
        DiscretePdf1D { v, mode, boundary }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.v
    }

    pub fn mode(&self) -> InterpMode {
        self.mode
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Density at `eps` in [0,1]. Callers may pass exactly 1.0.
    pub fn eval(&self, eps: T) -> T {
        let [(i0, w0), (i1, w1)] = self.stencil(eps);
        w0 * self.v[i0] + w1 * self.v[i1]
    }

    /// Sparse interpolation weights at `eps`: `eval` is their dot product with
    /// the bin values, and gradients of `eval` w.r.t. bins flow through them.
    /// Nearest mode and clamped boundaries yield a single active entry.
    pub fn stencil(&self, eps: T) -> [(usize, T); 2] {
        let m = self.v.len();
        let mf = T::of(m as f64);
        debug_assert!(eps >= T::zero() && eps <= T::one());
        match self.mode {
            InterpMode::Nearest => {
                let i = (eps * mf).to_f64().floor() as usize;
                let i = i.min(m - 1);
                [(i, T::one()), (i, T::zero())]
            }
            InterpMode::Linear => {
                let x = eps * mf - T::of(0.5);
                let f = x.floor();
                let a = x - f;
                let if_ = f.to_f64() as isize;
                match self.boundary {
                    Boundary::Wrap => {
                        let i0 = if_.rem_euclid(m as isize) as usize;
                        let i1 = (i0 + 1) % m;
                        [(i0, T::one() - a), (i1, a)]
                    }
                    Boundary::Clamp => {
                        if if_ < 0 {
                            [(0, T::one()), (0, T::zero())]
                        } else if if_ >= m as isize - 1 {
                            [(m - 1, T::one()), (m - 1, T::zero())]
                        } else {
                            let i0 = if_ as usize;
                            [(i0, T::one() - a), (i0 + 1, a)]
                        }
                    }
                }
            }
        }
    }

    /// Densities at the two ends of linear-mode segment `s` (of `M + 1`
    /// segments: the two outer half-bins plus `M - 1` center-to-center spans).
    fn segment(&self, s: usize) -> (T, T, T, T) {
        let m = self.v.len();
        let mf = T::of(m as f64);
        let h = T::of(0.5) / mf;
        let half = T::of(0.5);
        let (start, width, pa, pb) = if s == 0 {
            let pa = match self.boundary {
                Boundary::Wrap => (self.v[m - 1] + self.v[0]) * half,
                Boundary::Clamp => self.v[0],
            };
            (T::zero(), h, pa, self.v[0])
        } else if s == m {
            let pb = match self.boundary {
                Boundary::Wrap => (self.v[m - 1] + self.v[0]) * half,
                Boundary::Clamp => self.v[m - 1],
            };
            (T::one() - h, h, self.v[m - 1], pb)
        } else {
            let start = (T::of(s as f64) - half) / mf;
            (start, T::one() / mf, self.v[s - 1], self.v[s])
        };
        (start, width, pa, pb)
    }

    fn segment_mass(&self, s: usize) -> T {
        let (_, w, pa, pb) = self.segment(s);
        w * (pa + pb) * T::of(0.5)
    }

    /// Exact CDF of the interpolated density.
    pub fn cdf(&self, eps: T) -> T {
        let eps = eps.max(T::zero()).min(T::one());
        let m = self.v.len();
        let mf = T::of(m as f64);
        match self.mode {
            InterpMode::Nearest => {
                let i = ((eps * mf).to_f64().floor() as usize).min(m - 1);
                let mut acc = T::zero();
                for j in 0..i {
                    acc += self.v[j] / mf;
                }
                acc + self.v[i] * (eps - T::of(i as f64) / mf)
            }
            InterpMode::Linear => {
                let s = ((eps * mf + T::of(0.5)).to_f64().floor() as usize).min(m);
                let mut acc = T::zero();
                for j in 0..s {
                    acc += self.segment_mass(j);
                }
                let (start, width, pa, pb) = self.segment(s);
                let t = ((eps - start) / width).max(T::zero()).min(T::one());
                acc + width * t * (pa + (pb - pa) * t * T::of(0.5))
            }
        }
    }

    /// Inverse-CDF sample: returns `(eps, density at eps)`. `u` is clamped
    /// into [0, 1) so `u = 1` maps into the last segment.
    pub fn sample(&self, u: T) -> (T, T) {
        let one_minus = T::one() - T::epsilon();
        let u = u.max(T::zero()).min(one_minus);
        let eps = match self.mode {
            InterpMode::Nearest => self.sample_nearest(u),
            InterpMode::Linear => self.sample_linear(u),
        };
        let eps = eps.max(T::zero()).min(one_minus);
        (eps, self.eval(eps))
    }

    fn sample_nearest(&self, u: T) -> T {
        let m = self.v.len();
        let mf = T::of(m as f64);
        let mut acc = T::zero();
        for i in 0..m {
            let mass = self.v[i] / mf;
            if u < acc + mass || i == m - 1 {
                return T::of(i as f64) / mf + (u - acc) / self.v[i];
            }
            acc += mass;
        }
        unreachable!()
    }

    fn sample_linear(&self, u: T) -> T {
        let m = self.v.len();
        let mut acc = T::zero();
        let mut seg = m;
        for s in 0..=m {
            let mass = self.segment_mass(s);
            if u < acc + mass || s == m {
                seg = s;
                break;
            }
            acc += mass;
        }
        let (start, width, pa, pb) = self.segment(seg);
        let r = u - acc;
        let d = pb - pa;
        // Invert w*(pa*t + d*t^2/2) = r; the c/q root of the stable quadratic
        // formula avoids cancellation and degrades gracefully to the linear
        // inverse as d -> 0.
        let t = if d.abs() < T::of(1e-9) {
            r / (width * pa)
        } else {
            let disc = (pa * pa + T::of(2.0) * d * r / width).max(T::zero());
            T::of(2.0) * r / (width * (pa + disc.sqrt()))
        };
        let t = t.max(T::zero()).min(T::one());
        let eps = start + t * width;
        if (self.cdf(eps) - u).abs() <= T::of(1e-6) {
            eps
        } else {
            self.bisect(start, start + width, u)
        }
    }

    fn bisect(&self, mut lo: T, mut hi: T, u: T) -> T {
        for _ in 0..80 {
            let mid = (lo + hi) * T::of(0.5);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo + hi) * T::of(0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pdf<T: Real>(v: &[f64], mode: InterpMode, boundary: Boundary) -> DiscretePdf1D<T> {
        let v: Vec<T> = v.iter().map(|&x| T::of(x)).collect();
        DiscretePdf1D::from_bin_values(&v, mode, boundary)
    }

    #[test]
    fn from_logits_zero_gives_uniform_bins() {
        let p = DiscretePdf1D::<f64>::from_logits(&[0.0; 8], InterpMode::Nearest, Boundary::Clamp)
            .unwrap();
        for &x in p.values() {
            assert!((x - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn from_logits_matches_softmax_arithmetic() {
        // softmax([ln 2, 0, 0, 0]) = [0.4, 0.2, 0.2, 0.2], scaled by M = 4.
        let logits = [2.0f64.ln(), 0.0, 0.0, 0.0];
        let p =
            DiscretePdf1D::<f64>::from_logits(&logits, InterpMode::Nearest, Boundary::Clamp)
                .unwrap();
        let want = [1.6, 0.8, 0.8, 0.8];
        for (got, want) in p.values().iter().zip(want) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn from_logits_rejects_non_finite() {
        let err = DiscretePdf1D::<f32>::from_logits(
            &[f32::NAN, 0.0],
            InterpMode::Nearest,
            Boundary::Clamp,
        )
        .unwrap_err();
        assert_eq!(err, PdfError::NonFiniteLogits);
    }

    #[test]
    fn from_logits_extreme_spread_keeps_floor_and_sum() {
        let mut logits = vec![0.0f64; 32];
        logits[3] = 60.0;
        let p = DiscretePdf1D::<f64>::from_logits(&logits, InterpMode::Linear, Boundary::Wrap)
            .unwrap();
        let m = 32.0;
        let floor = BIN_FLOOR_SCALE * m;
        for &x in p.values() {
            assert!(x >= floor, "bin {x} below floor");
        }
        let sum: f64 = p.values().iter().sum();
        assert!((sum - m).abs() < 1e-4 * m);
    }

    #[test]
    fn eval_nearest_reads_containing_bin() {
        let p = pdf::<f64>(&[2.0, 1.0, 0.5, 0.5], InterpMode::Nearest, Boundary::Clamp);
        assert_eq!(p.eval(0.10), 2.0);
        assert_eq!(p.eval(0.30), 1.0);
        assert_eq!(p.eval(1.0), 0.5, "eps = 1 falls in the last bin");
    }

    #[test]
    fn eval_linear_interpolates_between_bin_centers() {
        // M = 2, centers at 0.25 and 0.75.
        let p = pdf::<f64>(&[1.5, 0.5], InterpMode::Linear, Boundary::Clamp);
        assert!((p.eval(0.25) - 1.5).abs() < 1e-12);
        assert!((p.eval(0.5) - 1.0).abs() < 1e-12);
        assert!((p.eval(0.1) - 1.5).abs() < 1e-12, "clamped outer half-bin");
    }

    #[test]
    fn eval_linear_wrap_interpolates_across_ends() {
        let p = pdf::<f64>(&[1.5, 1.0, 0.5], InterpMode::Linear, Boundary::Wrap);
        // eps = 0 sits halfway between the last and first bin centers.
        assert!((p.eval(0.0) - (0.5 + 1.5) / 2.0).abs() < 1e-12);
        assert_eq!(p.eval(0.0), p.eval(1.0), "periodic ends agree exactly");
    }

    #[test]
    fn linear_eval_is_continuous_at_segment_joints() {
        // Segments meet exactly at the bin centers.
        let v = [0.3, 2.2, 0.9, 0.1, 1.5];
        for boundary in [Boundary::Wrap, Boundary::Clamp] {
            let p = pdf::<f64>(&v, InterpMode::Linear, boundary);
            let m = v.len() as f64;
            let d = 1e-9;
            for k in 0..v.len() {
                let joint = (k as f64 + 0.5) / m;
                let l = p.eval(joint - d);
                let r = p.eval(joint + d);
                assert!((l - r).abs() < 1e-6, "jump at {joint}: {l} vs {r}");
            }
        }
    }

    #[test]
    fn sample_nearest_matches_prefix_sum_inversion() {
        let p = pdf::<f64>(&[2.0, 1.0, 0.5, 0.5], InterpMode::Nearest, Boundary::Clamp);
        // Bin masses 0.5, 0.25, 0.125, 0.125: u = 0.6 lands in bin 1.
        let (eps, d) = p.sample(0.6);
        assert!((eps - 0.35).abs() < 1e-12, "got {eps}");
        assert_eq!(d, 1.0);
    }

    #[test]
    fn sample_uniform_density_is_identity() {
        for mode in [InterpMode::Nearest, InterpMode::Linear] {
            let p = pdf::<f64>(&[1.0; 16], mode, Boundary::Wrap);
            for u in [0.0, 0.123, 0.5, 0.875, 0.999999] {
                let (eps, d) = p.sample(u);
                assert!((eps - u).abs() < 1e-9, "{mode:?}: {eps} vs {u}");
                assert!((d - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sample_clamps_u_one_into_domain() {
        let p = pdf::<f32>(&[0.5, 1.5], InterpMode::Linear, Boundary::Clamp);
        let (eps, _) = p.sample(1.0);
        assert!(eps < 1.0);
        let (eps, _) = p.sample(0.0);
        assert!((0.0..1.0).contains(&eps));
    }

    #[test]
    fn cdf_hits_both_ends() {
        for mode in [InterpMode::Nearest, InterpMode::Linear] {
            for boundary in [Boundary::Wrap, Boundary::Clamp] {
                let p = pdf::<f64>(&[0.2, 1.8, 0.7, 1.3], mode, boundary);
                assert!(p.cdf(0.0).abs() < 1e-12);
                assert!((p.cdf(1.0) - 1.0).abs() < 1e-12, "{mode:?}/{boundary:?}");
            }
        }
    }

    #[test]
    fn stencil_weights_reproduce_eval() {
        let p = pdf::<f64>(&[0.2, 1.8, 0.7, 1.3], InterpMode::Linear, Boundary::Wrap);
        for eps in [0.0, 0.05, 0.37, 0.62, 0.91, 1.0] {
            let [(i0, w0), (i1, w1)] = p.stencil(eps);
            let via = w0 * p.values()[i0] + w1 * p.values()[i1];
            assert_eq!(via, p.eval(eps));
            assert!((w0 + w1 - 1.0).abs() < 1e-12);
        }
    }
}
