pub mod real;
mod rgb;
mod vec3;

pub use rgb::Rgb;
pub use vec3::{Onb, Vec3};

/// Axis-aligned box, used for scene bounds and grid-encoder normalization.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub const EMPTY: Aabb = Aabb {
        min: Vec3::splat(f32::INFINITY),
        max: Vec3::splat(f32::NEG_INFINITY),
    };

    pub fn new(min: Vec3, max: Vec3) -> Self {
        Aabb { min, max }
    }

    pub fn grow(&mut self, p: Vec3) {
        self.min = self.min.min(p);
        self.max = self.max.max(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }

    pub fn diagonal(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn surface_area(&self) -> f32 {
        let d = self.diagonal().max(Vec3::splat(0.0));
        2.0 * (d.x * d.y + d.y * d.z + d.z * d.x)
    }

    pub fn centroid(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    /// Maps `p` into [0,1]^3 relative to the box, clamping outside points.
    /// Returns the unit coordinates and whether clamping occurred.
    pub fn normalize_clamped(&self, p: Vec3) -> (Vec3, bool) {
        let d = self.diagonal();
        let safe = |x: f32| if x > 0.0 { x } else { 1.0 };
        let u = Vec3::new(
            (p.x - self.min.x) / safe(d.x),
            (p.y - self.min.y) / safe(d.y),
            (p.z - self.min.z) / safe(d.z),
        );
        let c = u.clamp01();
        (c, c != u)
    }
}

/// FNV-1a over raw little-endian bytes; used to fingerprint parameter state.
pub fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
