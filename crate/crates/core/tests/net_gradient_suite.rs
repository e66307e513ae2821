//! Central finite differences in f64 against the hand-written backward pass.
//! Probes cover every parameter class (grid features, hidden layers, output
//! layer) and both training heads: the interpolated log-density over softmax
//! bins and the relative-L2 radiance regression.

use glint_core::math::{Aabb, Vec3};
use glint_core::nn::{
    log_interp_density_grad, relative_l2, EncodeInput, EncodedNet, EncodingConfig,
};
use glint_core::pdf::{Boundary, DiscretePdf1D, InterpMode};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const REL_TOL: f64 = 1e-4;

fn test_net(output: usize, with_eps1: bool, seed: u64) -> EncodedNet<f64> {
    let cfg = EncodingConfig {
        grid_resolutions: [4, 6, 8],
        ..EncodingConfig::default()
    };
    let bounds = Aabb::new(Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0));
    let mut rng = StdRng::seed_from_u64(seed);
    let mut net = EncodedNet::new(cfg, bounds, with_eps1, &[16, 16], output, 1e-2, &mut rng);
    // The output layer starts at zero, which would block gradient flow into
    // the hidden layers; take a few optimizer steps on a dummy objective so
    // every layer participates.
    let mut scratch = net.scratch();
    for step in 0..3 {
        let input = random_input(with_eps1, &mut rng);
        net.forward(&input, &mut scratch);
        let mut grads = net.grads();
        let d_out: Vec<f64> = (0..output).map(|o| ((o + step) % 3) as f64 - 1.0).collect();
        net.backward(&mut scratch, &d_out, &mut grads);
        net.apply_gradients(&grads);
    }
    net
}

fn random_input(with_eps1: bool, rng: &mut StdRng) -> EncodeInput {
    let dir = Vec3::new(
        rng.gen_range(-1.0f32..1.0),
        rng.gen_range(-1.0f32..1.0),
        rng.gen_range(-1.0f32..1.0),
    )
    .normalized();
    let nrm = Vec3::new(
        rng.gen_range(-1.0f32..1.0),
        rng.gen_range(-1.0f32..1.0),
        rng.gen_range(0.1f32..1.0),
    )
    .normalized();
    EncodeInput {
        position: Vec3::new(
            rng.gen_range(-0.9f32..0.9),
            rng.gen_range(-0.9f32..0.9),
            rng.gen_range(-0.9f32..0.9),
        ),
        direction: dir,
        normal: nrm,
        roughness: rng.gen_range(0.05f32..1.0),
        eps1: with_eps1.then(|| rng.gen_range(0.0f32..1.0)),
    }
}

/// Checks `analytic` against central differences of `objective` at a spread
/// of parameter indices: the strongest gradients of each class plus a few
/// zero-gradient entries. Returns how many probes ran.
fn fd_probe(
    net: &mut EncodedNet<f64>,
    analytic: &[f64],
    grid_len: usize,
    objective: &mut dyn FnMut(&EncodedNet<f64>) -> f64,
    label: &str,
) -> usize {
    let params = net.params_to_vec();
    assert_eq!(params.len(), analytic.len());

    // Strongest |gradient| indices, split between grid features and layers
    // so trilinear scatter and dense matmul paths are both covered.
    let mut by_mag: Vec<usize> = (0..params.len()).collect();
    by_mag.sort_by(|&a, &b| analytic[b].abs().total_cmp(&analytic[a].abs()));
    let mut picks: Vec<usize> = Vec::new();
    let mut grid_taken = 0;
    let mut layer_taken = 0;
    for &i in &by_mag {
        if i < grid_len && grid_taken < 12 {
            picks.push(i);
            grid_taken += 1;
        } else if i >= grid_len && layer_taken < 24 {
            picks.push(i);
            layer_taken += 1;
        }
        if grid_taken == 12 && layer_taken == 24 {
            break;
        }
    }
    // A few entries whose gradient should be exactly zero (grid vertices far
    // from the evaluated cell).
    for &i in by_mag.iter().rev().take(4) {
        assert_eq!(analytic[i], 0.0, "{label}: weakest gradient should be zero");
        picks.push(i);
    }

    let mut v = params.clone();
    for &i in &picks {
        let h = 1e-6 * params[i].abs().max(1.0);
        v[i] = params[i] + h;
        net.set_params(&v);
        let up = objective(net);
        v[i] = params[i] - h;
        net.set_params(&v);
        let dn = objective(net);
        v[i] = params[i];
        let fd = (up - dn) / (2.0 * h);
        let an = analytic[i];
        assert!(
            (fd - an).abs() <= REL_TOL * fd.abs().max(an.abs()).max(1e-7),
            "{label} param {i}: fd {fd} vs analytic {an}"
        );
    }
    net.set_params(&params);
    picks.len()
}

#[test]
fn weighted_output_head_matches_finite_differences() {
    let mut net = test_net(5, false, 21);
    let mut rng = StdRng::seed_from_u64(77);
    let grid_len = net.encoder.grid.features.len();
    let mut total = 0;
    for probe in 0..2 {
        let input = random_input(false, &mut rng);
        let weights: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut scratch = net.scratch();
        net.forward(&input, &mut scratch);
        let mut grads = net.grads();
        net.backward(&mut scratch, &weights, &mut grads);
        let analytic = grads.to_vec();
        let mut objective = |n: &EncodedNet<f64>| -> f64 {
            let mut s = n.scratch();
            let out = n.forward(&input, &mut s);
            out.iter().zip(&weights).map(|(o, w)| o * w).sum()
        };
        total += fd_probe(
            &mut net,
            &analytic,
            grid_len,
            &mut objective,
            &format!("weighted head {probe}"),
        );
    }
    assert!(total >= 60, "ran {total} probes");
}

#[test]
fn log_density_head_matches_finite_differences() {
    // Full trainer composition: network logits -> softmax bins -> linear
    // interpolation -> log density at a fixed coordinate. The bin floor is
    // inactive for these moderate logits, so the analytic softmax Jacobian
    // is exact.
    let m = 16usize;
    let mut rng = StdRng::seed_from_u64(5);
    let mut total = 0;
    for (mode, boundary) in [
        (InterpMode::Linear, Boundary::Wrap),
        (InterpMode::Linear, Boundary::Clamp),
        (InterpMode::Nearest, Boundary::Wrap),
    ] {
        let mut net = test_net(m, true, 13 + total as u64);
        let grid_len = net.encoder.grid.features.len();
        let input = random_input(true, &mut rng);
        let eps: f64 = rng.gen();

        let mut scratch = net.scratch();
        let logits = net.forward(&input, &mut scratch).to_vec();
        let pdf = DiscretePdf1D::from_logits(&logits, mode, boundary).unwrap();
        let mut d_logits = vec![0.0f64; m];
        log_interp_density_grad(pdf.values(), &pdf.stencil(eps), &mut d_logits);
        let mut grads = net.grads();
        net.backward(&mut scratch, &d_logits, &mut grads);
        let analytic = grads.to_vec();

        let mut objective = |n: &EncodedNet<f64>| -> f64 {
            let mut s = n.scratch();
            let out = n.forward(&input, &mut s);
            let p = DiscretePdf1D::from_logits(out, mode, boundary).unwrap();
            p.eval(eps).ln()
        };
        total += fd_probe(
            &mut net,
            &analytic,
            grid_len,
            &mut objective,
            &format!("log density {mode:?}/{boundary:?}"),
        );
    }
    assert!(total >= 100, "ran {total} probes");
}

#[test]
fn relative_l2_head_matches_finite_differences() {
    // The loss denominator is defined with stopped gradients, so the finite
    // difference runs on the surrogate with the denominator frozen at the
    // linearization point.
    let mut net = test_net(3, false, 3);
    let mut rng = StdRng::seed_from_u64(91);
    let grid_len = net.encoder.grid.features.len();
    let mut total = 0;
    for probe in 0..2 {
        let input = random_input(false, &mut rng);
        let target = [
            rng.gen_range(0.0..2.0),
            rng.gen_range(0.0..2.0),
            rng.gen_range(0.0..2.0),
        ];
        let mut scratch = net.scratch();
        let out = net.forward(&input, &mut scratch);
        let pred = [out[0], out[1], out[2]];
        let lum = 0.2126 * pred[0] + 0.7152 * pred[1] + 0.0722 * pred[2];
        let denom = lum * lum + 0.01;
        let (_, grad) = relative_l2(pred, target, 0.01);
        let mut grads = net.grads();
        net.backward(&mut scratch, &grad, &mut grads);
        let analytic = grads.to_vec();

        let mut objective = |n: &EncodedNet<f64>| -> f64 {
            let mut s = n.scratch();
            let o = n.forward(&input, &mut s);
            (0..3).map(|c| (o[c] - target[c]).powi(2) / denom).sum::<f64>() / 3.0
        };
        total += fd_probe(
            &mut net,
            &analytic,
            grid_len,
            &mut objective,
            &format!("relative L2 {probe}"),
        );
    }
    assert!(total >= 60, "ran {total} probes");
}
