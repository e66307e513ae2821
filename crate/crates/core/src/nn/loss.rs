use crate::Real;

/// Relative L2 regression loss for radiance: per-channel squared error
/// divided by the squared luminance of the prediction plus `eps_rel`. The
/// denominator is treated as a constant (stop-gradient), matching how
/// radiance caches are normally trained. Returns the loss (mean over the
/// three channels) and d(loss)/d(pred).
pub fn relative_l2<T: Real>(pred: [T; 3], target: [T; 3], eps_rel: T) -> (T, [T; 3]) {
    let lum = T::of(0.2126) * pred[0] + T::of(0.7152) * pred[1] + T::of(0.0722) * pred[2];
    let denom = lum * lum + eps_rel;
    let third = T::of(1.0 / 3.0);
    let mut loss = T::zero();
    let mut grad = [T::zero(); 3];
    for c in 0..3 {
        let d = pred[c] - target[c];
        loss += d * d / denom * third;
        grad[c] = T::of(2.0) * d / denom * third;
    }
    (loss, grad)
}

/// Log of the interpolated bin density `p = sum_i w_i, v_i` together with its
/// gradient with respect to the logits that produced `v = M * softmax(z)`.
/// `stencil` holds the active interpolation weights; the softmax Jacobian is
/// folded in analytically, so `d_logits[j] = w_j v_j / p - v_j / M` (the
/// first term only where the stencil is active). Writes (overwrites) all of
/// `d_logits` and returns `ln p`.
pub fn log_interp_density_grad<T: Real>(
    v: &[T],
    stencil: &[(usize, T); 2],
    d_logits: &mut [T],
) -> T {
    assert_eq!(v.len(), d_logits.len());
    let m = T::of(v.len() as f64);
    let p = stencil.iter().fold(T::zero(), |acc, &(i, w)| acc + w * v[i]);
    for (d, &vi) in d_logits.iter_mut().zip(v) {
        *d = -vi / m;
    }
    for &(i, w) in stencil {
        d_logits[i] += w * v[i] / p;
    }
    p.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_l2_on_equal_inputs_is_zero() {
        let (loss, grad) = relative_l2([0.3, 0.7, 0.1], [0.3, 0.7, 0.1], 0.01);
        assert_eq!(loss, 0.0);
        assert_eq!(grad, [0.0; 3]);
    }

    #[test]
    fn relative_l2_matches_direct_arithmetic() {
        // pred 2, target 1 on all channels: luminance 2, denominator 4.01.
        let (loss, grad) = relative_l2([2.0f64; 3], [1.0f64; 3], 0.01);
        assert!((loss - 1.0 / 4.01).abs() < 1e-12);
        for g in grad {
            assert!((g - 2.0 / 4.01 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn relative_l2_is_stable_at_black() {
        let (loss, grad) = relative_l2([0.0f32; 3], [0.0f32; 3], 0.01);
        assert_eq!(loss, 0.0);
        assert_eq!(grad, [0.0; 3]);
    }

    #[test]
    fn log_density_grad_sums_to_zero() {
        // Softmax shift invariance: the logit gradient always sums to 0.
        let v = [1.6f64, 0.8, 0.8, 0.8];
        let stencil = [(1usize, 0.75f64), (2usize, 0.25f64)];
        let mut d = [0.0f64; 4];
        let logp = log_interp_density_grad(&v, &stencil, &mut d);
        assert!((logp - (0.75f64 * 0.8 + 0.25 * 0.8).ln()).abs() < 1e-12);
        assert!(d.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn log_density_grad_matches_finite_differences_through_softmax() {
        let logits = [0.3f64, -1.2, 0.7, 0.05, -0.4];
        let stencil_ix = [(0usize, 0.4f64), (4usize, 0.6f64)];
        let eval = |z: &[f64]| {
            let m = z.len() as f64;
            let mx = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|x| (x - mx).exp()).collect();
            let s: f64 = e.iter().sum();
            let v: Vec<f64> = e.iter().map(|x| m * x / s).collect();
            stencil_ix.iter().map(|&(i, w)| w * v[i]).sum::<f64>().ln()
        };
        let m = logits.len() as f64;
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|x| (x - mx).exp()).collect();
        let s: f64 = e.iter().sum();
        let v: Vec<f64> = e.iter().map(|x| m * x / s).collect();
        let mut d = [0.0f64; 5];
        log_interp_density_grad(&v, &stencil_ix, &mut d);
        let h = 1e-6;
        for j in 0..5 {
            let mut zp = logits;
            zp[j] += h;
            let up = eval(&zp);
            zp[j] = logits[j] - h;
            let dn = eval(&zp);
            let fd = (up - dn) / (2.0 * h);
            assert!(
                (fd - d[j]).abs() < 1e-6 * fd.abs().max(1.0),
                "logit {j}: fd {fd} vs {}",
                d[j]
            );
        }
    }
}
