//! Between-wave training. Each frame shuffles the collected path-vertex
//! records, splits them into equal mini-batches, and per batch runs a cache
//! regression step followed by a guide density step, so the guide's target
//! always reads the freshest cache.

use super::{CacheMode, GuidingSystem, PathVertexRecord};
use crate::math::Rgb;
use crate::nn::{log_interp_density_grad, relative_l2};
use crate::pdf::sphere_to_square;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;
use std::f32::consts::PI;
use std::sync::atomic::Ordering;

/// Records per parallel gradient chunk. Chunk results are folded in index
/// order, so totals do not depend on the thread count.
const CHUNK: usize = 512;

/// Summary of one training frame for logs and tests.
#[derive(Clone, Copy, Debug, Default, serde::Serialize)]
pub struct FrameStats {
    pub wave: u32,
    pub records: usize,
    pub dropped: usize,
    pub batches: usize,
    /// Mean relative-L2 regression loss of the cache over the frame.
    pub cache_loss: f32,
    /// Mean importance-weighted negative log guide density; a divergence
    /// surrogate that is comparable between frames of the same scene.
    pub guide_loss: f32,
    pub cache_trained: bool,
    pub guide_trained: bool,
}

/// Unnormalized target density for one record: estimated product of BSDF,
/// incident radiance, and cosine, over the reflected-luminance normalizer.
pub fn target_density(rec: &PathVertexRecord, li: Rgb, norm_lum: f32) -> f32 {
    (rec.bsdf * li).luminance() * rec.cos_theta / norm_lum
}

fn usable(rec: &PathVertexRecord, min_pdf: f32) -> bool {
    rec.pdf.is_finite()
        && rec.pdf >= min_pdf
        && rec.cos_theta.is_finite()
        && rec.bsdf.is_finite()
        && rec.li_suffix.is_finite()
        && rec.emitted_next.is_finite()
        && rec.next_weight.is_finite()
}

/// Caps each score weight at a generous multiple of the batch's typical
/// positive weight (the top percent is excluded from the scale estimate).
/// The gradient estimator is exact whenever the cap does not bind, and it
/// binds only on records whose inverse-density weight dwarfs the rest of
/// the batch; uncapped, one such record captures the entire step and a few
/// of them in a row can lock the guide onto noise. With k positive weights
/// max/mean is at most k, so small batches are never capped.
fn score_weight_cap(ratios: &[f32]) -> f32 {
    const FACTOR: f64 = 32.0;
    let mut pos: Vec<f32> = ratios.iter().copied().filter(|&r| r > 0.0).collect();
    if pos.is_empty() {
        return f32::INFINITY;
    }
    pos.sort_unstable_by(f32::total_cmp);
    let keep = pos.len() - pos.len() / 100;
    let mean = pos[..keep].iter().map(|&r| r as f64).sum::<f64>() / keep as f64;
    ((FACTOR * mean) as f32).max(f32::MIN_POSITIVE)
}

/// Decorrelates the shuffle between waves without disturbing the render
/// RNG stream (splitmix64 finalizer).
fn frame_seed(seed: u64, wave: u32) -> u64 {
    let mut z = seed ^ 0x9E3779B97F4A7C15u64.wrapping_mul(wave as u64 + 1);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

impl GuidingSystem {
    /// Incident-radiance estimate and luminance normalizer for a record
    /// under the configured cache mode.
    pub fn record_target(
        &self,
        rec: &PathVertexRecord,
        s: &mut super::GuideScratch,
    ) -> f32 {
        let li = match self.cfg.cache {
            CacheMode::Off => rec.li_suffix,
            CacheMode::LiOnly | CacheMode::Full => {
                let reflected = match &rec.next {
                    Some(q) => rec.next_weight * self.cache_query(q, s),
                    None => Rgb::BLACK,
                };
                rec.emitted_next + reflected
            }
        };
        let norm = match self.cfg.cache {
            CacheMode::Full => self
                .cache_query(&rec.query, s)
                .luminance()
                .max(self.cfg.delta_norm),
            _ => 1.0,
        };
        target_density(rec, li, norm)
    }

    /// Trains cache and guide on one wave's records. Mutates network
    /// parameters; rendering must not run concurrently.
    pub fn run_training_frame(&mut self, records: &[PathVertexRecord], wave: u32) -> FrameStats {
        let mut stats = FrameStats {
            wave,
            records: records.len(),
            cache_trained: self.cfg.cache != CacheMode::Off,
            guide_trained: self.cfg.guide_active(wave),
            ..FrameStats::default()
        };
        let min_pdf = self.cfg.min_pdf;
        let mut order: Vec<u32> = (0..records.len() as u32)
            .filter(|&i| usable(&records[i as usize], min_pdf))
            .collect();
        stats.dropped = records.len() - order.len();
        self.counters
            .dropped_low_pdf
            .fetch_add(stats.dropped as u64, Ordering::Relaxed);
        if order.is_empty() || (!stats.cache_trained && !stats.guide_trained) {
            return stats;
        }

        let mut rng = StdRng::seed_from_u64(frame_seed(self.cfg.seed, wave));
        order.shuffle(&mut rng);
        let n = order.len();
        let batches = self.cfg.min_batches.max(n / self.cfg.batch_target).min(n);
        stats.batches = batches;

        let mut cache_loss = 0.0f64;
        let mut guide_loss = 0.0f64;
        for b in 0..batches {
            let batch = &order[b * n / batches..(b + 1) * n / batches];
            if stats.cache_trained {
                cache_loss += self.cache_step(records, batch);
            }
            if stats.guide_trained {
                guide_loss += self.guide_step(records, batch);
            }
        }
        stats.cache_loss = (cache_loss / n as f64) as f32;
        stats.guide_loss = (guide_loss / n as f64) as f32;
        stats
    }

    /// One cache mini-batch: regress raw predictions onto the Monte Carlo
    /// reflected-radiance estimate of each record. Returns the summed loss.
    fn cache_step(&mut self, records: &[PathVertexRecord], idx: &[u32]) -> f64 {
        let inv_n = 1.0 / idx.len() as f32;
        let eps_rel = self.cfg.eps_rel;
        let sys = &*self;
        let parts: Vec<_> = idx
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut s = sys.scratch();
                let mut grads = sys.cache.grads();
                let mut loss = 0.0f64;
                for &i in chunk {
                    let rec = &records[i as usize];
                    let target = rec.bsdf * rec.li_suffix * (rec.cos_theta / rec.pdf);
                    let pred = sys.cache_raw(&rec.query, &mut s);
                    let (l, g) =
                        relative_l2(pred, [target.r, target.g, target.b], eps_rel);
                    loss += l as f64;
                    let d_out = [g[0] * inv_n, g[1] * inv_n, g[2] * inv_n];
                    sys.cache.backward(&mut s.cache, &d_out, &mut grads);
                }
                (grads, loss)
            })
            .collect();
        let mut total = self.cache.grads();
        let mut loss = 0.0f64;
        for (g, l) in &parts {
            total.add_scaled(g, 1.0);
            loss += l;
        }
        self.cache.apply_gradients(&total);
        loss
    }

    /// One guide mini-batch: score-function gradient of the divergence
    /// between the cache-stabilized target and the factorized density.
    /// Returns the summed diagnostic loss.
    fn guide_step(&mut self, records: &[PathVertexRecord], idx: &[u32]) -> f64 {
        let sys = &*self;
        // First pass: importance ratio target/pdf per record. Only the cache
        // runs here, so the ratios are independent of this step's update.
        let ratio_chunks: Vec<Vec<f32>> = idx
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut s = sys.scratch();
                chunk
                    .iter()
                    .map(|&i| {
                        let rec = &records[i as usize];
                        let p_hat = sys.record_target(rec, &mut s);
                        if p_hat.is_finite() && p_hat > 0.0 {
                            p_hat / rec.pdf
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let ratios: Vec<f32> = ratio_chunks.into_iter().flatten().collect();
        let cap = score_weight_cap(&ratios);

        let inv_n = 1.0 / idx.len() as f32;
        let parts: Vec<_> = idx
            .par_chunks(CHUNK)
            .zip(ratios.par_chunks(CHUNK))
            .map(|(chunk, chunk_ratios)| {
                let mut s = sys.scratch();
                let mut g_marg = sys.marginal.grads();
                let mut g_cond = sys.conditional.grads();
                let mut d1 = vec![0.0f32; sys.cfg.m1];
                let mut d2 = vec![0.0f32; sys.cfg.m2];
                let mut loss = 0.0f64;
                for (&i, &ratio) in chunk.iter().zip(chunk_ratios) {
                    if ratio <= 0.0 {
                        continue;
                    }
                    let rec = &records[i as usize];
                    let ratio = ratio.min(cap);
                    // Negated score times the importance-weighted target:
                    // descending this lowers the divergence to the target.
                    let w = -ratio * inv_n;
                    let (e1, e2) = sphere_to_square(rec.wi);

                    let marginal = sys.marginal_pdf(&rec.query, &mut s);
                    let lp1 =
                        log_interp_density_grad(marginal.values(), &marginal.stencil(e1), &mut d1);
                    for d in &mut d1 {
                        *d *= w;
                    }
                    sys.marginal.backward(&mut s.marginal, &d1, &mut g_marg);

                    let conditional = sys.conditional_pdf(&rec.query, e1, &mut s);
                    let lp2 = log_interp_density_grad(
                        conditional.values(),
                        &conditional.stencil(e2),
                        &mut d2,
                    );
                    for d in &mut d2 {
                        *d *= w;
                    }
                    sys.conditional.backward(&mut s.conditional, &d2, &mut g_cond);

                    let ln_solid = lp1 + lp2 - (4.0 * PI).ln();
                    loss -= (ratio * ln_solid) as f64;
                }
                (g_marg, g_cond, loss)
            })
            .collect();
        let mut t_marg = self.marginal.grads();
        let mut t_cond = self.conditional.grads();
        let mut loss = 0.0f64;
        for (gm, gc, l) in &parts {
            t_marg.add_scaled(gm, 1.0);
            t_cond.add_scaled(gc, 1.0);
            loss += l;
        }
        self.marginal.apply_gradients(&t_marg);
        self.conditional.apply_gradients(&t_cond);
        loss
    }
}

#[cfg(test)]
mod tests {
    use super::super::{GuidingConfig, GuidingSystem, VertexQuery};
    use super::*;
    use crate::math::{Aabb, Vec3};
    use crate::pdf::square_to_sphere;
    use rand::Rng;

    fn bounds() -> Aabb {
        Aabb::new(Vec3::ZERO, Vec3::splat(1.0))
    }

    fn query() -> VertexQuery {
        VertexQuery {
            position: Vec3::splat(0.5),
            wo: Vec3::Z,
            normal: Vec3::Z,
            roughness: 1.0,
        }
    }

    /// Records drawn uniformly over the sphere with a target density that
    /// favors the upper polar cap.
    fn cap_records(n: usize, rng: &mut impl Rng) -> Vec<PathVertexRecord> {
        let uniform = 1.0 / (4.0 * std::f32::consts::PI);
        (0..n)
            .map(|_| {
                let (e1, e2) = (rng.gen::<f32>(), rng.gen::<f32>());
                let wi = square_to_sphere(e1, e2);
                let value = if wi.z > 0.8 { 1.0 } else { 0.05 };
                PathVertexRecord {
                    query: query(),
                    wi,
                    bsdf: Rgb::WHITE,
                    cos_theta: 1.0,
                    pdf: uniform,
                    next: None,
                    next_weight: Rgb::WHITE,
                    emitted_next: Rgb::BLACK,
                    li_suffix: Rgb::splat(value),
                }
            })
            .collect()
    }

    fn harness() -> GuidingSystem {
        let cfg = GuidingConfig {
            cache: CacheMode::Off,
            warmup_waves: 0,
            seed: 7,
            ..GuidingConfig::default()
        };
        GuidingSystem::new(cfg, bounds())
    }

    #[test]
    fn target_density_is_luminance_times_cosine_over_norm() {
        let mut recs = cap_records(1, &mut rand::rngs::StdRng::seed_from_u64(0));
        let rec = &mut recs[0];
        rec.bsdf = Rgb::new(0.5, 0.25, 0.125);
        rec.cos_theta = 0.5;
        let li = Rgb::splat(2.0);
        let want = (rec.bsdf * li).luminance() * 0.5 / 0.25;
        assert!((target_density(rec, li, 0.25) - want).abs() < 1e-6);
    }

    #[test]
    fn training_raises_density_where_target_is_bright() {
        let mut sys = harness();
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let mut s = sys.scratch();
        let up = Vec3::new(0.0, 0.1, 1.0).normalized();
        let down = -up;
        let before_up = sys.guide_pdf(&query(), up, &mut s);
        let before_down = sys.guide_pdf(&query(), down, &mut s);
        for wave in 0..30 {
            let recs = cap_records(2048, &mut rng);
            let stats = sys.run_training_frame(&recs, wave);
            assert_eq!(stats.dropped, 0);
            assert!(stats.guide_trained);
        }
        let mut s = sys.scratch();
        let after_up = sys.guide_pdf(&query(), up, &mut s);
        let after_down = sys.guide_pdf(&query(), down, &mut s);
        assert!(
            after_up > 2.0 * before_up,
            "cap density should grow: {before_up} -> {after_up}"
        );
        assert!(
            after_down < before_down,
            "anti-cap density should shrink: {before_down} -> {after_down}"
        );
    }

    #[test]
    fn frame_stats_counts_batches_and_drops() {
        let mut sys = harness();
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let mut recs = cap_records(100, &mut rng);
        recs[17].pdf = 0.0;
        recs[42].pdf = f32::NAN;
        let stats = sys.run_training_frame(&recs, 0);
        assert_eq!(stats.records, 100);
        assert_eq!(stats.dropped, 2);
        assert_eq!(stats.batches, 4);
        assert!(stats.guide_trained);
        assert!(!stats.cache_trained);
    }

    #[test]
    fn cache_regresses_toward_constant_radiance() {
        let cfg = GuidingConfig {
            cache: CacheMode::Full,
            warmup_waves: u32::MAX,
            seed: 5,
            ..GuidingConfig::default()
        };
        let mut sys = GuidingSystem::new(cfg, bounds());
        let uniform = 1.0 / (4.0 * std::f32::consts::PI);
        let mut rng = rand::rngs::StdRng::seed_from_u64(2);
        // Constant unit incident radiance and white BSDF over the sphere:
        // reflected radiance estimate is exactly 1 for every record.
        let recs: Vec<PathVertexRecord> = (0..4096)
            .map(|_| {
                let wi = square_to_sphere(rng.gen(), rng.gen());
                PathVertexRecord {
                    query: query(),
                    wi,
                    bsdf: Rgb::splat(uniform),
                    cos_theta: 1.0,
                    pdf: uniform,
                    next: None,
                    next_weight: Rgb::WHITE,
                    emitted_next: Rgb::BLACK,
                    li_suffix: Rgb::WHITE,
                }
            })
            .collect();
        let mut last = f32::INFINITY;
        for wave in 0..40 {
            let stats = sys.run_training_frame(&recs, wave);
            assert!(stats.cache_trained && !stats.guide_trained);
            last = stats.cache_loss;
        }
        let mut s = sys.scratch();
        let got = sys.cache_query(&query(), &mut s);
        assert!(
            (got.luminance() - 1.0).abs() < 0.05,
            "cache luminance {} after loss {last}",
            got.luminance()
        );
    }

    #[test]
    fn guide_params_move_only_after_warmup() {
        let cfg = GuidingConfig {
            cache: CacheMode::Full,
            warmup_waves: 1,
            seed: 9,
            ..GuidingConfig::default()
        };
        let mut sys = GuidingSystem::new(cfg, bounds());
        let mut recs = cap_records(256, &mut rand::rngs::StdRng::seed_from_u64(1));
        for r in &mut recs {
            // Emitter-hit records, so the cache-based target is non-zero.
            r.emitted_next = r.li_suffix;
        }
        let [m0, c0, k0] = sys.param_hashes();
        sys.run_training_frame(&recs, 0);
        let [m1, c1, k1] = sys.param_hashes();
        assert_eq!(m0, m1);
        assert_eq!(c0, c1);
        assert_ne!(k0, k1, "cache must train during warmup");
        sys.run_training_frame(&recs, 1);
        let [m2, c2, _] = sys.param_hashes();
        assert_ne!(m1, m2);
        assert_ne!(c1, c2);
    }

    #[test]
    fn same_seed_same_frame_results() {
        let run = || {
            let mut sys = harness();
            let recs = cap_records(1500, &mut rand::rngs::StdRng::seed_from_u64(4));
            for wave in 0..3 {
                sys.run_training_frame(&recs, wave);
            }
            sys.param_hashes()
        };
        assert_eq!(run(), run());
    }
}
