//! Core numerics for the guided path tracer: small vector math, tiny MLPs with
//! hand-rolled backprop, factorized discretized directional PDFs, and the
//! online trainer that fits those PDFs to path-traced radiance.

pub mod guiding;
pub mod math;
pub mod nn;
pub mod pdf;

pub use math::real::Real;
