use crate::math::{Rgb, Vec3};

/// Inputs identifying one shading point for the guiding and cache networks.
#[derive(Clone, Copy, Debug)]
pub struct VertexQuery {
    pub position: Vec3,
    /// Unit outgoing direction (toward the previous vertex / camera).
    pub wo: Vec3,
    /// Unit shading normal.
    pub normal: Vec3,
    /// Material roughness in [0,1]; 1 for diffuse, 0 for delta lobes.
    pub roughness: f32,
}

/// A sampled world-space direction with its solid-angle density.
#[derive(Clone, Copy, Debug)]
pub struct DirectionSample {
    pub wi: Vec3,
    pub pdf: f32,
}

/// Everything the trainer needs from one non-delta path vertex. Produced by
/// the integrator while tracing; the radiance fields are filled in by a
/// backward sweep once the whole path is known.
#[derive(Clone, Copy, Debug)]
pub struct PathVertexRecord {
    pub query: VertexQuery,
    /// Sampled continuation direction (world space, unit).
    pub wi: Vec3,
    /// BSDF value f_s(wo, wi) at this vertex.
    pub bsdf: Rgb,
    /// |n . wi|, zero if the sample fell below the surface.
    pub cos_theta: f32,
    /// Solid-angle density the direction was actually drawn with (the full
    /// guide/BSDF mixture when guiding was active).
    pub pdf: f32,
    /// Keys of the first non-delta vertex the continuation reached, if any.
    /// Delta (mirror) vertices are skipped through, never queried.
    pub next: Option<VertexQuery>,
    /// Product of delta scatter weights between this vertex and `next`;
    /// white when the continuation hit `next` directly.
    pub next_weight: Rgb,
    /// Radiance emitted toward this vertex by events up to and including
    /// `next`: surface emission along the delta chain (weighted by the
    /// partial chain products) plus environment radiance if it escaped.
    pub emitted_next: Rgb,
    /// Monte Carlo estimate of the full incident radiance along `wi`
    /// (emission at the next event plus its reflected suffix).
    pub li_suffix: Rgb,
}
