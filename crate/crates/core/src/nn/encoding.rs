use crate::math::{Aabb, Vec3};
use crate::Real;
use rand::Rng;

/// Fixed input-feature layout shared by the guiding and cache networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EncodingConfig {
    /// Per-level lattice resolutions of the learnable position grid.
    pub grid_resolutions: [usize; 3],
    /// Learnable features per grid vertex.
    pub grid_features: usize,
    /// Spherical-harmonics bands for unit directions (degree 4 = 16 values).
    pub sh_degree: usize,
    /// One-blob bins for normals (per component) and roughness.
    pub blob_bins: usize,
    /// Triangle-wave frequencies for the azimuth coordinate.
    pub tri_frequencies: usize,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig {
            grid_resolutions: [8, 16, 32],
            grid_features: 2,
            sh_degree: 4,
            blob_bins: 4,
            tri_frequencies: 12,
        }
    }
}

/// Real spherical harmonics up to degree 4 (bands l = 0..3), evaluated for a
/// unit direction. The only supported degree is 4.
pub fn sh_basis<T: Real>(d: Vec3, out: &mut [T]) {
    assert_eq!(out.len(), 16);
    let (x, y, z) = (d.x as f64, d.y as f64, d.z as f64);
    let (x2, y2, z2) = (x * x, y * y, z * z);
    let vals = [
        0.28209479177387814,
        -0.48860251190291987 * y,
        0.48860251190291987 * z,
        -0.48860251190291987 * x,
        1.0925484305920792 * x * y,
        -1.0925484305920792 * y * z,
        0.94617469575755997 * z2 - 0.31539156525251999,
        -1.0925484305920792 * x * z,
        0.54627421529603959 * (x2 - y2),
        -0.59004358992664352 * y * (3.0 * x2 - y2),
        2.8906114426405538 * x * y * z,
        -0.45704579946446572 * y * (5.0 * z2 - 1.0),
        0.37317633259011546 * z * (5.0 * z2 - 3.0),
        -0.45704579946446572 * x * (5.0 * z2 - 1.0),
        1.4453057213202769 * z * (x2 - y2),
        -0.59004358992664352 * x * (x2 - 3.0 * y2),
    ];
    for (o, v) in out.iter_mut().zip(vals) {
        *o = T::of(v);
    }
}

/// Gaussian bump of width `1/bins` sampled at the bin centers; every output
/// lies in (0, 1] and the response is symmetric around `x`.
pub fn one_blob<T: Real>(x: f32, out: &mut [T]) {
    let bins = out.len();
    let x = x.clamp(0.0, 1.0) as f64;
    let sigma = 1.0 / bins as f64;
    let inv = 1.0 / (2.0 * sigma * sigma);
    for (i, o) in out.iter_mut().enumerate() {
        let c = (i as f64 + 0.5) / bins as f64;
        let d = x - c;
        *o = T::of((-d * d * inv).exp());
    }
}

/// Triangle wave of period 1: 0 at integers, 1 at half-integers.
pub fn triangle(t: f64) -> f64 {
    1.0 - 2.0 * (t.fract() - 0.5).abs()
}

/// Per frequency `2^k`, the pair `(triangle(x 2^k), triangle(x 2^k + 1/4))`.
/// Every frequency stays periodic in `x` with period 1, so the encoding
/// agrees at the two ends of a wrapped coordinate. The quarter-period
/// partner is required: the triangle wave is even, so a single phase obeys
/// `triangle(2^k x) = triangle(2^k (1 - x))` at every frequency and the
/// encoding would be blind to the reflection `x <-> 1 - x`.
pub fn triangle_wave<T: Real>(x: f32, out: &mut [T]) {
    debug_assert_eq!(out.len() % 2, 0);
    let x = x.clamp(0.0, 1.0) as f64;
    let mut f = 1.0;
    for pair in out.chunks_exact_mut(2) {
        pair[0] = T::of(triangle(x * f));
        pair[1] = T::of(triangle(x * f + 0.25));
        f *= 2.0;
    }
}

struct GridLevel {
    res: usize,
    offset: usize,
}

/// Multi-level dense feature lattice over the unit cube with trilinear
/// interpolation. Features are learnable and belong to the owning network's
/// parameter vector.
pub struct DenseGrid<T: Real> {
    levels: Vec<GridLevel>,
    n_features: usize,
    pub features: Vec<T>,
}

impl<T: Real> DenseGrid<T> {
    pub fn new(cfg: &EncodingConfig, rng: &mut impl Rng) -> Self {
        let mut levels = Vec::new();
        let mut offset = 0;
        for &res in &cfg.grid_resolutions {
            assert!(res >= 2);
            levels.push(GridLevel { res, offset });
            offset += res * res * res * cfg.grid_features;
        }
        let features = (0..offset)
            .map(|_| T::of(rng.gen_range(-1e-4..1e-4)))
            .collect();
        DenseGrid {
            levels,
            n_features: cfg.grid_features,
            features,
        }
    }

    pub fn output_width(&self) -> usize {
        self.levels.len() * self.n_features
    }

    pub fn param_count(&self) -> usize {
        self.features.len()
    }

    /// Visits the 8 lattice corners around `p` (unit-cube coordinates) on one
    /// level with their trilinear weights.
    fn corners(level: &GridLevel, n_features: usize, p: Vec3, mut f: impl FnMut(usize, f64)) {
        let r = level.res;
        let scale = (r - 1) as f64;
        let u = [p.x as f64 * scale, p.y as f64 * scale, p.z as f64 * scale];
        let mut i = [0usize; 3];
        let mut fr = [0.0f64; 3];
        for a in 0..3 {
            let cell = u[a].floor().min(scale - 1.0).max(0.0);
            i[a] = cell as usize;
            fr[a] = (u[a] - cell).clamp(0.0, 1.0);
        }
        for corner in 0..8 {
            let (dx, dy, dz) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
            let w = (if dx == 1 { fr[0] } else { 1.0 - fr[0] })
                * (if dy == 1 { fr[1] } else { 1.0 - fr[1] })
                * (if dz == 1 { fr[2] } else { 1.0 - fr[2] });
            let vertex = (i[0] + dx) + (i[1] + dy) * r + (i[2] + dz) * r * r;
            f(level.offset + vertex * n_features, w);
        }
    }

    /// Interpolated features for `p` in [0,1]^3, one group per level.
    pub fn encode(&self, p: Vec3, out: &mut [T]) {
        assert_eq!(out.len(), self.output_width());
        out.fill(T::zero());
        for (li, level) in self.levels.iter().enumerate() {
            let base = li * self.n_features;
            Self::corners(level, self.n_features, p, |at, w| {
                let w = T::of(w);
                for k in 0..self.n_features {
                    out[base + k] += w * self.features[at + k];
                }
            });
        }
    }

    /// Accumulates d(output)/d(features) * `d_out` into `grad`.
    pub fn backward(&self, p: Vec3, d_out: &[T], grad: &mut [T]) {
        assert_eq!(grad.len(), self.features.len());
        for (li, level) in self.levels.iter().enumerate() {
            let base = li * self.n_features;
            Self::corners(level, self.n_features, p, |at, w| {
                let w = T::of(w);
                for k in 0..self.n_features {
                    grad[at + k] += w * d_out[base + k];
                }
            });
        }
    }
}

/// One shading-point input group before encoding.
#[derive(Clone, Copy, Debug)]
pub struct EncodeInput {
    pub position: Vec3,
    /// Unit direction (outgoing, toward the previous vertex).
    pub direction: Vec3,
    /// Unit shading normal.
    pub normal: Vec3,
    /// Material roughness in [0,1].
    pub roughness: f32,
    /// Azimuth square coordinate; encoded only by conditional networks.
    pub eps1: Option<f32>,
}

/// Assembles the network input: grid(position) | sh(direction) |
/// one-blob(normal xyz) | one-blob(roughness) | triangle-wave(eps1).
pub struct Encoder<T: Real> {
    pub grid: DenseGrid<T>,
    cfg: EncodingConfig,
    bounds: Aabb,
    with_eps1: bool,
}

impl<T: Real> Encoder<T> {
    pub fn new(cfg: EncodingConfig, bounds: Aabb, with_eps1: bool, rng: &mut impl Rng) -> Self {
        assert_eq!(cfg.sh_degree, 4, "only degree-4 SH is implemented");
        Encoder {
            grid: DenseGrid::new(&cfg, rng),
            cfg,
            bounds,
            with_eps1,
        }
    }

    pub fn output_width(&self) -> usize {
        self.grid.output_width()
            + 16
            + 3 * self.cfg.blob_bins
            + self.cfg.blob_bins
            + if self.with_eps1 {
                2 * self.cfg.tri_frequencies
            } else {
                0
            }
    }

    pub fn grid_width(&self) -> usize {
        self.grid.output_width()
    }

    /// Encodes into `out`; returns the grid-normalized position (needed for
    /// the grid backward pass) and whether the position was clamped.
    pub fn encode(&self, input: &EncodeInput, out: &mut [T]) -> (Vec3, bool) {
        assert_eq!(out.len(), self.output_width());
        let (p, clamped) = self.bounds.normalize_clamped(input.position);
        let gw = self.grid.output_width();
        self.grid.encode(p, &mut out[..gw]);
        let mut at = gw;
        sh_basis(input.direction, &mut out[at..at + 16]);
        at += 16;
        let b = self.cfg.blob_bins;
        for c in [input.normal.x, input.normal.y, input.normal.z] {
            one_blob((c + 1.0) * 0.5, &mut out[at..at + b]);
            at += b;
        }
        one_blob(input.roughness, &mut out[at..at + b]);
        at += b;
        if self.with_eps1 {
            let e1 = input.eps1.expect("encoder built with eps1 input");
            let tw = 2 * self.cfg.tri_frequencies;
            triangle_wave(e1, &mut out[at..at + tw]);
            at += tw;
        }
        debug_assert_eq!(at, self.output_width());
        (p, clamped)
    }
}
