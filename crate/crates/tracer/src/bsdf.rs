//! Reflection models in the local shading frame (+z is the shading normal,
//! `wo.z > 0` guaranteed by the caller). Densities are per solid angle.

use glint_core::math::{Rgb, Vec3};
use std::f32::consts::PI;

#[derive(Clone, Copy, Debug)]
pub enum Bsdf {
    Diffuse { albedo: Rgb },
    /// GGX microfacet conductor; `alpha` is squared perceptual roughness.
    Conductor { alpha: f32, f0: Rgb },
    Mirror { reflectance: Rgb },
}

#[derive(Clone, Copy, Debug)]
pub struct LocalSample {
    pub wi: Vec3,
    /// Solid-angle density; 1.0 for delta lobes (a technique probability,
    /// never part of a mixable density).
    pub pdf: f32,
    /// BSDF value for area lobes; full throughput weight for delta lobes.
    pub value: Rgb,
    pub delta: bool,
}

fn ggx_d(alpha: f32, h: Vec3) -> f32 {
    if h.z <= 0.0 {
        return 0.0;
    }
    let a2 = alpha * alpha;
    let d = h.z * h.z * (a2 - 1.0) + 1.0;
    a2 / (PI * d * d)
}

fn smith_g1(alpha: f32, v: Vec3) -> f32 {
    let a2 = alpha * alpha;
    2.0 * v.z / (v.z + (a2 + (1.0 - a2) * v.z * v.z).sqrt())
}

fn schlick(f0: Rgb, cos: f32) -> Rgb {
    let c = (1.0 - cos).clamp(0.0, 1.0);
    let c5 = c * c * c * c * c;
    f0 + (Rgb::WHITE - f0) * c5
}

impl Bsdf {
    pub fn is_delta(&self) -> bool {
        matches!(self, Bsdf::Mirror { .. })
    }

    /// Roughness key for the guiding networks: 1 for diffuse, the perceptual
    /// roughness for glossy lobes, 0 for delta lobes.
    pub fn guide_roughness(&self) -> f32 {
        match self {
            Bsdf::Diffuse { .. } => 1.0,
            Bsdf::Conductor { alpha, .. } => alpha.sqrt(),
            Bsdf::Mirror { .. } => 0.0,
        }
    }

    pub fn eval(&self, wo: Vec3, wi: Vec3) -> Rgb {
        if wo.z <= 0.0 || wi.z <= 0.0 {
            return Rgb::BLACK;
        }
        match *self {
            Bsdf::Diffuse { albedo } => albedo * (1.0 / PI),
            Bsdf::Conductor { alpha, f0 } => {
                let h = (wo + wi).normalized();
                let d = ggx_d(alpha, h);
                let g = smith_g1(alpha, wo) * smith_g1(alpha, wi);
                let f = schlick(f0, wi.dot(h));
                f * (d * g / (4.0 * wo.z * wi.z))
            }
            Bsdf::Mirror { .. } => Rgb::BLACK,
        }
    }

    pub fn pdf(&self, wo: Vec3, wi: Vec3) -> f32 {
        if wo.z <= 0.0 || wi.z <= 0.0 {
            return 0.0;
        }
        match *self {
            Bsdf::Diffuse { .. } => wi.z / PI,
            Bsdf::Conductor { alpha, .. } => {
                let h = (wo + wi).normalized();
                let woh = wo.dot(h);
                if woh <= 0.0 {
                    return 0.0;
                }
                ggx_d(alpha, h) * h.z / (4.0 * woh)
            }
            Bsdf::Mirror { .. } => 0.0,
        }
    }

    pub fn sample(&self, wo: Vec3, u1: f32, u2: f32) -> Option<LocalSample> {
        if wo.z <= 0.0 {
            return None;
        }
        match *self {
            Bsdf::Diffuse { albedo } => {
                let phi = 2.0 * PI * u1;
                let r = u2.sqrt();
                let z = (1.0 - u2).max(0.0).sqrt();
                let wi = Vec3::new(r * phi.cos(), r * phi.sin(), z);
                let pdf = z / PI;
                if pdf <= 0.0 {
                    return None;
                }
                Some(LocalSample {
                    wi,
                    pdf,
                    value: albedo * (1.0 / PI),
                    delta: false,
                })
            }
            Bsdf::Conductor { alpha, .. } => {
                // Sample the normal distribution: cos^2 = (1-u)/(u(a^2-1)+1).
                let a2 = alpha * alpha;
                let c2 = ((1.0 - u1) / (u1 * (a2 - 1.0) + 1.0)).clamp(0.0, 1.0);
                let cos_h = c2.sqrt();
                let sin_h = (1.0 - c2).max(0.0).sqrt();
                let phi = 2.0 * PI * u2;
                let h = Vec3::new(sin_h * phi.cos(), sin_h * phi.sin(), cos_h);
                let woh = wo.dot(h);
                if woh <= 0.0 {
                    return None;
                }
                let wi = h * (2.0 * woh) - wo;
                if wi.z <= 0.0 {
                    return None;
                }
                let pdf = ggx_d(alpha, h) * h.z / (4.0 * woh);
                if !(pdf > 0.0) || !pdf.is_finite() {
                    return None;
                }
                Some(LocalSample {
                    wi,
                    pdf,
                    value: self.eval(wo, wi),
                    delta: false,
                })
            }
            Bsdf::Mirror { reflectance } => Some(LocalSample {
                wi: Vec3::new(-wo.x, -wo.y, wo.z),
                pdf: 1.0,
                value: reflectance,
                delta: true,
            }),
        }
    }
}
