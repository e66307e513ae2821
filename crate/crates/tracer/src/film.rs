use glint_core::math::Rgb;
use std::io::{self, Write};
use std::path::Path;

/// Accumulation film. Sums are kept in f64 with per-pixel squared sums so
/// tests can form Monte Carlo confidence intervals; splatting is add-only.
pub struct Film {
    pub width: usize,
    pub height: usize,
    sum: Vec<[f64; 3]>,
    sum_sq: Vec<[f64; 3]>,
    count: Vec<u64>,
}

impl Film {
    pub fn new(width: usize, height: usize) -> Film {
        Film {
            width,
            height,
            sum: vec![[0.0; 3]; width * height],
            sum_sq: vec![[0.0; 3]; width * height],
            count: vec![0; width * height],
        }
    }

    pub fn splat(&mut self, idx: usize, c: Rgb) {
        let v = [c.r as f64, c.g as f64, c.b as f64];
        for k in 0..3 {
            self.sum[idx][k] += v[k];
            self.sum_sq[idx][k] += v[k] * v[k];
        }
        self.count[idx] += 1;
    }

    /// Disjoint row bands for deterministic parallel splatting: band `i`
    /// covers rows `[i * rows_per_band, ...)` regardless of thread schedule.
    pub fn bands(&mut self, rows_per_band: usize) -> Vec<FilmBand<'_>> {
        let w = self.width;
        let chunk = rows_per_band * w;
        self.sum
            .chunks_mut(chunk)
            .zip(self.sum_sq.chunks_mut(chunk))
            .zip(self.count.chunks_mut(chunk))
            .enumerate()
            .map(|(i, ((sum, sum_sq), count))| FilmBand {
                first_pixel: i * chunk,
                sum,
                sum_sq,
                count,
            })
            .collect()
    }

    pub fn mean(&self, idx: usize) -> [f64; 3] {
        let n = self.count[idx].max(1) as f64;
        [self.sum[idx][0] / n, self.sum[idx][1] / n, self.sum[idx][2] / n]
    }

    /// Unbiased per-channel variance of the per-pixel mean.
    pub fn variance_of_mean(&self, idx: usize) -> [f64; 3] {
        let n = self.count[idx] as f64;
        if n < 2.0 {
            return [f64::INFINITY; 3];
        }
        let mut out = [0.0; 3];
        for k in 0..3 {
            let mean = self.sum[idx][k] / n;
            let var = (self.sum_sq[idx][k] / n - mean * mean).max(0.0) * n / (n - 1.0);
            out[k] = var / n;
        }
        out
    }

    pub fn mean_image(&self) -> Vec<[f64; 3]> {
        (0..self.sum.len()).map(|i| self.mean(i)).collect()
    }

    /// Mean image as f32 triples, the interchange format for PFM and metrics.
    pub fn to_rgb32(&self) -> Vec<[f32; 3]> {
        self.mean_image()
            .into_iter()
            .map(|p| [p[0] as f32, p[1] as f32, p[2] as f32])
            .collect()
    }
}

/// One mutable horizontal band of the film.
pub struct FilmBand<'a> {
    pub first_pixel: usize,
    sum: &'a mut [[f64; 3]],
    sum_sq: &'a mut [[f64; 3]],
    count: &'a mut [u64],
}

impl FilmBand<'_> {
    pub fn len(&self) -> usize {
        self.sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sum.is_empty()
    }

    pub fn splat(&mut self, offset: usize, c: Rgb) {
        let v = [c.r as f64, c.g as f64, c.b as f64];
        for k in 0..3 {
            self.sum[offset][k] += v[k];
            self.sum_sq[offset][k] += v[k] * v[k];
        }
        self.count[offset] += 1;
    }
}

/// Writes a color PFM: `PF`, dimensions, negative scale for little-endian,
/// then rows bottom-up as f32 triples.
pub fn write_pfm(path: &Path, width: usize, height: usize, pixels: &[[f32; 3]]) -> io::Result<()> {
    assert_eq!(pixels.len(), width * height);
    let mut out = Vec::with_capacity(32 + pixels.len() * 12);
    write!(out, "PF\n{} {}\n-1.0\n", width, height)?;
    for y in (0..height).rev() {
        for x in 0..width {
            for c in pixels[y * width + x] {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    std::fs::write(path, out)
}

pub fn read_pfm(path: &Path) -> io::Result<(usize, usize, Vec<[f32; 3]>)> {
    let data = std::fs::read(path)?;
    let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    let mut tokens = Vec::new();
    let mut pos = 0;
    while tokens.len() < 4 && pos < data.len() {
        while pos < data.len() && data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        tokens.push(std::str::from_utf8(&data[start..pos]).map_err(|_| bad("header"))?);
    }
    if tokens.len() < 4 || tokens[0] != "PF" {
        return Err(bad("not a color PFM"));
    }
    let width: usize = tokens[1].parse().map_err(|_| bad("width"))?;
    let height: usize = tokens[2].parse().map_err(|_| bad("height"))?;
    let scale: f32 = tokens[3].parse().map_err(|_| bad("scale"))?;
    if scale >= 0.0 {
        return Err(bad("big-endian PFM unsupported"));
    }
    pos += 1; // single whitespace byte after the scale
    let need = width * height * 12;
    if data.len() < pos + need {
        return Err(bad("truncated pixel data"));
    }
    let mut pixels = vec![[0.0f32; 3]; width * height];
    for y in (0..height).rev() {
        for x in 0..width {
            let mut px = [0.0f32; 3];
            for c in &mut px {
                *c = f32::from_le_bytes(data[pos..pos + 4].try_into().unwrap());
                pos += 4;
            }
            pixels[y * width + x] = px;
        }
    }
    Ok((width, height, pixels))
}

/// Tone-mapped 8-bit preview: Reinhard `x / (1 + x)` then gamma 2.2.
pub fn write_png(path: &Path, width: usize, height: usize, pixels: &[[f32; 3]]) -> io::Result<()> {
    assert_eq!(pixels.len(), width * height);
    let mut bytes = Vec::with_capacity(pixels.len() * 3);
    for px in pixels {
        for &c in px {
            let c = c.max(0.0);
            let mapped = (c / (1.0 + c)).powf(1.0 / 2.2);
            bytes.push((mapped * 255.0 + 0.5).min(255.0) as u8);
        }
    }
    let file = std::fs::File::create(path)?;
    let mut encoder = png::Encoder::new(io::BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(io::Error::other)?;
    writer.write_image_data(&bytes).map_err(io::Error::other)?;
    Ok(())
}
