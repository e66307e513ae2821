//! Online neural path guiding: two small MLPs predict a factorized
//! marginal/conditional directional density over the unit square, warped onto
//! the sphere; a third network caches reflected radiance to stabilize the
//! training target. Inference is read-only and thread-safe; training happens
//! in exclusive phases between waves.

mod record;
mod trainer;

pub use record::{DirectionSample, PathVertexRecord, VertexQuery};
pub use trainer::{target_density, FrameStats};

use crate::math::{Aabb, Rgb, Vec3};
use crate::nn::{EncodeInput, EncodedNet, EncodingConfig, NetScratch};
use crate::pdf::{
    sphere_to_square, square_pdf_to_solid, square_to_sphere, Boundary, DiscretePdf1D, InterpMode,
};
use rand::rngs::StdRng;
use rand::SeedableRng;
use std::sync::atomic::{AtomicU64, Ordering};

/// Which radiance estimates feed the guide's training target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum CacheMode {
    /// No cache: raw Monte Carlo suffix radiance, no normalization.
    Off,
    /// Cache replaces the incident radiance; no normalization.
    LiOnly,
    /// Cache replaces incident radiance and normalizes by predicted
    /// reflected radiance at the vertex.
    Full,
}

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct GuidingConfig {
    /// Azimuth bins of the marginal density.
    pub m1: usize,
    /// Polar bins of the conditional density.
    pub m2: usize,
    pub mode: InterpMode,
    pub cache: CacheMode,
    /// Probability of drawing from the guide rather than the BSDF.
    pub guide_fraction: f32,
    /// Fraction of the sample budget that trains.
    pub train_fraction: f32,
    /// Initial waves that sample purely from the BSDF and train only the
    /// cache, so the guide's first update sees a minimally informed target.
    pub warmup_waves: u32,
    pub min_batches: usize,
    /// Preferred records per mini-batch once above `min_batches`.
    pub batch_target: usize,
    pub guide_lr: f32,
    pub cache_lr: f32,
    /// Relative-L2 denominator offset for cache regression.
    pub eps_rel: f32,
    /// Floor on the normalizing reflected-radiance luminance.
    pub delta_norm: f32,
    /// Records sampled with a smaller density than this are dropped.
    pub min_pdf: f32,
    pub encoding: EncodingConfig,
    pub seed: u64,
}

impl Default for GuidingConfig {
    fn default() -> Self {
        GuidingConfig {
            m1: 32,
            m2: 16,
            mode: InterpMode::Linear,
            cache: CacheMode::Full,
            guide_fraction: 0.7,
            train_fraction: 0.3,
            warmup_waves: 1,
            min_batches: 4,
            batch_target: 8192,
            guide_lr: 3e-2,
            cache_lr: 1e-2,
            eps_rel: 0.01,
            delta_norm: 1e-4,
            min_pdf: 1e-12,
            encoding: EncodingConfig::default(),
            seed: 0,
        }
    }
}

impl GuidingConfig {
    /// Number of leading waves (at one sample per pixel each) that train.
    pub fn training_waves(&self, spp_budget: u32) -> u32 {
        (self.train_fraction as f64 * spp_budget as f64).floor() as u32
    }

    /// Guided sampling and guide training both start after the warmup.
    pub fn guide_active(&self, wave: u32) -> bool {
        wave >= self.warmup_waves
    }
}

/// BSDF hooks for mixture sampling, implemented by the renderer's materials.
/// Directions are world-space; densities are per solid angle.
pub trait BsdfSampler {
    /// Draws a continuation direction; `None` when the sample is invalid
    /// (e.g. it fell below the geometric surface).
    fn sample(&self, u1: f32, u2: f32) -> Option<DirectionSample>;
    fn pdf(&self, wi: Vec3) -> f32;
}

/// Counters of recoverable anomalies, kept rendering-concurrent.
#[derive(Default)]
pub struct Counters {
    pub clamped_positions: AtomicU64,
    pub dropped_low_pdf: AtomicU64,
    pub rejected_zero_pdf: AtomicU64,
}

pub struct GuidingSystem {
    pub cfg: GuidingConfig,
    pub(crate) marginal: EncodedNet<f32>,
    pub(crate) conditional: EncodedNet<f32>,
    pub(crate) cache: EncodedNet<f32>,
    pub counters: Counters,
}

/// Per-thread buffers for guide and cache inference.
pub struct GuideScratch {
    marginal: NetScratch<f32>,
    conditional: NetScratch<f32>,
    cache: NetScratch<f32>,
}

const HIDDEN: [usize; 3] = [64, 64, 64];

impl GuidingSystem {
    pub fn new(cfg: GuidingConfig, scene_bounds: Aabb) -> Self {
        let mut rng = StdRng::seed_from_u64(cfg.seed);
        let marginal = EncodedNet::new(
            cfg.encoding,
            scene_bounds,
            false,
            &HIDDEN,
            cfg.m1,
            cfg.guide_lr,
            &mut rng,
        );
        let conditional = EncodedNet::new(
            cfg.encoding,
            scene_bounds,
            true,
            &HIDDEN,
            cfg.m2,
            cfg.guide_lr,
            &mut rng,
        );
        let cache = EncodedNet::new(
            cfg.encoding,
            scene_bounds,
            false,
            &HIDDEN,
            3,
            cfg.cache_lr,
            &mut rng,
        );
        GuidingSystem {
            cfg,
            marginal,
            conditional,
            cache,
            counters: Counters::default(),
        }
    }

    pub fn scratch(&self) -> GuideScratch {
        GuideScratch {
            marginal: self.marginal.scratch(),
            conditional: self.conditional.scratch(),
            cache: self.cache.scratch(),
        }
    }

    fn encode_input(q: &VertexQuery, eps1: Option<f32>) -> EncodeInput {
        EncodeInput {
            position: q.position,
            direction: q.wo,
            normal: q.normal,
            roughness: q.roughness,
            eps1,
        }
    }

    fn note_clamp(&self, clamped: bool) {
        if clamped {
            self.counters.clamped_positions.fetch_add(1, Ordering::Relaxed);
        }
    }

    /// Marginal azimuth density for a shading point (periodic boundary).
    pub(crate) fn marginal_pdf(&self, q: &VertexQuery, s: &mut GuideScratch) -> DiscretePdf1D {
        let logits = self
            .marginal
            .forward(&Self::encode_input(q, None), &mut s.marginal);
        let pdf = DiscretePdf1D::from_logits(logits, self.cfg.mode, Boundary::Wrap)
            .expect("marginal logits non-finite");
        self.note_clamp(s.marginal.clamped);
        pdf
    }

    /// Conditional polar density at a given azimuth (clamped boundary).
    pub(crate) fn conditional_pdf(
        &self,
        q: &VertexQuery,
        eps1: f32,
        s: &mut GuideScratch,
    ) -> DiscretePdf1D {
        let logits = self
            .conditional
            .forward(&Self::encode_input(q, Some(eps1)), &mut s.conditional);
        let pdf = DiscretePdf1D::from_logits(logits, self.cfg.mode, Boundary::Clamp)
            .expect("conditional logits non-finite");
        self.note_clamp(s.conditional.clamped);
        pdf
    }

    fn pdf_given_marginal(
        &self,
        q: &VertexQuery,
        marginal: &DiscretePdf1D,
        wi: Vec3,
        s: &mut GuideScratch,
    ) -> f32 {
        let (e1, e2) = sphere_to_square(wi);
        let conditional = self.conditional_pdf(q, e1, s);
        square_pdf_to_solid(marginal.eval(e1) * conditional.eval(e2))
    }

    /// Solid-angle guide density of `wi` at a shading point.
    pub fn guide_pdf(&self, q: &VertexQuery, wi: Vec3, s: &mut GuideScratch) -> f32 {
        let marginal = self.marginal_pdf(q, s);
        self.pdf_given_marginal(q, &marginal, wi, s)
    }

    /// Draws a direction from the learned factorized density. The returned
    /// pdf is evaluated at the direction's canonical square coordinates, so
    /// it is exactly what `guide_pdf` reports for `wi`.
    pub fn guide_sample(
        &self,
        q: &VertexQuery,
        u1: f32,
        u2: f32,
        s: &mut GuideScratch,
    ) -> DirectionSample {
        let marginal = self.marginal_pdf(q, s);
        self.sample_given_marginal(q, &marginal, u1, u2, s)
    }

    fn sample_given_marginal(
        &self,
        q: &VertexQuery,
        marginal: &DiscretePdf1D,
        u1: f32,
        u2: f32,
        s: &mut GuideScratch,
    ) -> DirectionSample {
        let (e1, _) = marginal.sample(u1);
        let conditional = self.conditional_pdf(q, e1, s);
        let (e2, _) = conditional.sample(u2);
        let wi = square_to_sphere(e1, e2);
        let pdf = self.pdf_given_marginal(q, marginal, wi, s);
        DirectionSample { wi, pdf }
    }

    /// One-sample mixture of guide and BSDF: picks a technique with
    /// `u_select`, then reports the combined density
    /// `alpha * p_guide + (1 - alpha) * p_bsdf` for the drawn direction.
    /// `None` means the sample was rejected (counted).
    pub fn mixed_sample(
        &self,
        q: &VertexQuery,
        bsdf: &dyn BsdfSampler,
        u_select: f32,
        u1: f32,
        u2: f32,
        s: &mut GuideScratch,
    ) -> Option<DirectionSample> {
        let alpha = self.cfg.guide_fraction;
        let marginal = self.marginal_pdf(q, s);
        let (wi, p_guide, p_bsdf) = if u_select < alpha {
            let g = self.sample_given_marginal(q, &marginal, u1, u2, s);
            let pb = bsdf.pdf(g.wi);
            (g.wi, g.pdf, pb)
        } else {
            let Some(b) = bsdf.sample(u1, u2) else {
                self.counters.rejected_zero_pdf.fetch_add(1, Ordering::Relaxed);
                return None;
            };
            let pg = self.pdf_given_marginal(q, &marginal, b.wi, s);
            (b.wi, pg, b.pdf)
        };
        let pdf = alpha * p_guide + (1.0 - alpha) * p_bsdf;
        if !(pdf > 0.0) || !pdf.is_finite() {
            self.counters.rejected_zero_pdf.fetch_add(1, Ordering::Relaxed);
            return None;
        }
        Some(DirectionSample { wi, pdf })
    }

    /// Mixture density of an externally chosen direction.
    pub fn mixed_pdf(
        &self,
        q: &VertexQuery,
        bsdf: &dyn BsdfSampler,
        wi: Vec3,
        s: &mut GuideScratch,
    ) -> f32 {
        let alpha = self.cfg.guide_fraction;
        alpha * self.guide_pdf(q, wi, s) + (1.0 - alpha) * bsdf.pdf(wi)
    }

    /// Predicted reflected radiance, clamped non-negative for use as a
    /// radiance estimate.
    pub fn cache_query(&self, q: &VertexQuery, s: &mut GuideScratch) -> Rgb {
        let out = self.cache.forward(&Self::encode_input(q, None), &mut s.cache);
        let rgb = Rgb::new(out[0], out[1], out[2]);
        self.note_clamp(s.cache.clamped);
        rgb.max(0.0)
    }

    /// Raw (unclamped) cache output; training regresses this.
    pub(crate) fn cache_raw(&self, q: &VertexQuery, s: &mut GuideScratch) -> [f32; 3] {
        let out = self.cache.forward(&Self::encode_input(q, None), &mut s.cache);
        let raw = [out[0], out[1], out[2]];
        self.note_clamp(s.cache.clamped);
        raw
    }

    /// Joint guided density over the bin centers as a debug text matrix.
    pub fn dump_joint(&self, q: &VertexQuery) -> String {
        let mut s = self.scratch();
        let marginal = self.marginal_pdf(q, &mut s);
        crate::pdf::dump_joint(
            &marginal,
            |e1| self.conditional_pdf(q, e1, &mut s),
            self.cfg.m2,
        )
    }

    pub fn param_hashes(&self) -> [u64; 3] {
        [
            self.marginal.param_hash(),
            self.conditional.param_hash(),
            self.cache.param_hash(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_system(mode: InterpMode) -> GuidingSystem {
        let cfg = GuidingConfig {
            mode,
            seed: 42,
            ..GuidingConfig::default()
        };
        GuidingSystem::new(cfg, Aabb::new(Vec3::ZERO, Vec3::splat(1.0)))
    }

    fn probe() -> VertexQuery {
        VertexQuery {
            position: Vec3::new(0.4, 0.5, 0.6),
            wo: Vec3::new(0.0, 0.6, 0.8),
            normal: Vec3::Z,
            roughness: 1.0,
        }
    }

    #[test]
    fn fresh_guide_is_exactly_uniform() {
        // Zero-initialized output layers mean uniform logits.
        let sys = test_system(InterpMode::Linear);
        let mut s = sys.scratch();
        let uniform = 1.0 / (4.0 * std::f32::consts::PI);
        for wi in [Vec3::Z, -Vec3::Z, Vec3::X, Vec3::new(0.6, -0.64, 0.48)] {
            let p = sys.guide_pdf(&probe(), wi, &mut s);
            assert!(
                (p - uniform).abs() < 0.02 * uniform,
                "pdf {p} vs uniform {uniform}"
            );
        }
    }

    #[test]
    fn fresh_guide_sample_maps_midpoint_to_equator() {
        let sys = test_system(InterpMode::Nearest);
        let mut s = sys.scratch();
        let d = sys.guide_sample(&probe(), 0.25, 0.5, &mut s);
        assert!((d.wi - Vec3::Y).length() < 1e-3, "{:?}", d.wi);
        let uniform = 1.0 / (4.0 * std::f32::consts::PI);
        assert!((d.pdf - uniform).abs() < 0.02 * uniform);
    }

    #[test]
    fn sampled_pdf_matches_guide_pdf_bitwise() {
        for mode in [InterpMode::Nearest, InterpMode::Linear] {
            let sys = test_system(mode);
            let mut s = sys.scratch();
            let q = probe();
            let mut u = 0.013;
            for _ in 0..64 {
                let a = sys.guide_sample(&q, u, 1.0 - u, &mut s);
                let b = sys.guide_pdf(&q, a.wi, &mut s);
                assert_eq!(a.pdf, b, "{mode:?} at u = {u}");
                u = (u + 0.0371).fract();
            }
        }
    }

    #[test]
    fn fresh_cache_is_black() {
        let sys = test_system(InterpMode::Linear);
        let mut s = sys.scratch();
        assert_eq!(sys.cache_query(&probe(), &mut s), Rgb::BLACK);
    }

    struct FakeLobe;
    impl BsdfSampler for FakeLobe {
        fn sample(&self, u1: f32, _u2: f32) -> Option<DirectionSample> {
            // A fixed up direction with a made-up density.
            let _ = u1;
            Some(DirectionSample { wi: Vec3::Z, pdf: 0.5 })
        }
        fn pdf(&self, wi: Vec3) -> f32 {
            if wi.z > 0.0 {
                0.5
            } else {
                0.0
            }
        }
    }

    #[test]
    fn mixture_with_zero_guide_fraction_is_pure_bsdf() {
        let mut sys = test_system(InterpMode::Linear);
        sys.cfg.guide_fraction = 0.0;
        let mut s = sys.scratch();
        let d = sys
            .mixed_sample(&probe(), &FakeLobe, 0.9, 0.3, 0.7, &mut s)
            .unwrap();
        assert_eq!(d.pdf, 0.5);
        assert_eq!(d.wi, Vec3::Z);
    }

    #[test]
    fn mixture_with_uniform_guide_blends_densities() {
        let sys = test_system(InterpMode::Linear);
        let mut s = sys.scratch();
        let q = probe();
        let d = sys
            .mixed_sample(&q, &FakeLobe, 0.9, 0.3, 0.7, &mut s)
            .unwrap();
        let want = 0.7 * sys.guide_pdf(&q, Vec3::Z, &mut s) + 0.3 * 0.5;
        assert!((d.pdf - want).abs() < 1e-7);
    }

    #[test]
    fn dump_joint_has_configured_shape() {
        let sys = test_system(InterpMode::Linear);
        let text = sys.dump_joint(&probe());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 16);
        assert!(lines.iter().all(|l| l.split_whitespace().count() == 32));
    }
}

