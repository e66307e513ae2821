//! A deterministic CPU path tracer. Unidirectional, no next-event estimation
//! and no Russian roulette: every path carries up to six segments and divides
//! by the exact density its directions were drawn with, which keeps the
//! estimator trivially unbiased and lets a learned guiding distribution slot
//! into direction sampling without touching the rest of the pipeline.

pub mod bsdf;
pub mod bvh;
pub mod camera;
pub mod film;
pub mod integrator;
pub mod scene;

pub use bvh::Ray;
pub use film::Film;
pub use integrator::{render, RenderJob, RenderMode, RenderResult};
pub use scene::{load_scene, Scene, SceneError};
