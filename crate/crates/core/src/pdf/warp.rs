use crate::math::Vec3;

/// Area-preserving map from the unit square to the unit sphere around +z:
/// `eps1` is azimuth, `eps2` the cylindrical height, so a uniform square maps
/// to a uniform sphere and the Jacobian is the constant `4 * pi`.
pub fn square_to_sphere(eps1: f32, eps2: f32) -> Vec3 {
    let phi = 2.0 * std::f64::consts::PI * eps1 as f64;
    let z = 1.0 - 2.0 * eps2 as f64;
    let s = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(
        (s * phi.cos()) as f32,
        (s * phi.sin()) as f32,
        z as f32,
    )
}

/// Inverse of [`square_to_sphere`]; `w` must be unit length.
/// The poles map to `eps1 = 0` (azimuth degenerates there).
pub fn sphere_to_square(w: Vec3) -> (f32, f32) {
    let phi = (w.y as f64).atan2(w.x as f64);
    let mut eps1 = phi / (2.0 * std::f64::consts::PI);
    if eps1 < 0.0 {
        eps1 += 1.0;
    }
    let eps2 = (1.0 - w.z as f64) * 0.5;
    (
        (eps1 as f32).clamp(0.0, 1.0 - f32::EPSILON),
        (eps2 as f32).clamp(0.0, 1.0),
    )
}

/// Converts a density over the unit square to one over solid angle.
pub fn square_pdf_to_solid(pdf_square: f32) -> f32 {
    pdf_square / (4.0 * std::f32::consts::PI)
}

pub fn solid_pdf_to_square(pdf_solid: f32) -> f32 {
    pdf_solid * 4.0 * std::f32::consts::PI
}
