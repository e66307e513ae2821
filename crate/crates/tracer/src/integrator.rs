//! Wave-based rendering loop. Every wave traces one camera sample per pixel;
//! during training waves each path also drafts records at its non-delta
//! vertices, and the guiding system consumes the whole wave's records
//! between waves. Pixel radiance and record radiance come from the same
//! backward sweep over the path's events, so the two can never disagree.

use crate::bsdf::Bsdf;
use crate::bvh::Ray;
use crate::film::Film;
use crate::scene::Scene;
use glint_core::guiding::{
    BsdfSampler, DirectionSample, FrameStats, GuideScratch, GuidingConfig, GuidingSystem,
    PathVertexRecord, VertexQuery,
};
use glint_core::math::{Onb, Rgb, Vec3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use std::sync::atomic::{AtomicU64, Ordering};

/// Longest path in segments (rays); the camera ray is the first.
pub const MAX_SEGMENTS: usize = 6;

#[derive(Clone, Debug)]
pub enum RenderMode {
    /// Plain BSDF-sampled path tracing.
    Pt,
    /// Mixture of BSDF and learned directional densities, trained online.
    Guided(GuidingConfig),
}

#[derive(Clone, Debug)]
pub struct RenderJob {
    pub width: usize,
    pub height: usize,
    pub spp: u32,
    pub seed: u64,
    pub mode: RenderMode,
    /// Keep records from one pixel in this many per training wave; the
    /// offset rotates with the wave so every pixel contributes over time.
    pub record_stride: u32,
    /// Sample counts at which to snapshot the running mean image.
    pub checkpoints: Vec<u32>,
}

pub struct RenderResult {
    pub film: Film,
    pub frames: Vec<FrameStats>,
    /// Paths discarded whole because a scatter weight went non-finite.
    pub killed_paths: u64,
    pub guiding: Option<GuidingSystem>,
    /// Mean images captured at the requested checkpoint sample counts.
    pub snapshots: Vec<(u32, Vec<[f64; 3]>)>,
}

/// One vertex (or escape) of a traced path, in forward order.
struct Event {
    /// Radiance emitted toward the previous vertex at this event.
    emitted: Rgb,
    /// Throughput factor of the continuation; black ends the path.
    scatter: Rgb,
    delta: bool,
    /// Guiding keys of the vertex; present at every non-delta surface hit,
    /// absent for delta vertices and environment escapes.
    query: Option<VertexQuery>,
    /// Absolute index of the record drafted here, -1 when none.
    draft: i32,
}

/// World-space sampling hooks over one local-frame lobe.
struct Lobe<'a> {
    bsdf: &'a Bsdf,
    frame: &'a Onb,
    wo_l: Vec3,
}

impl BsdfSampler for Lobe<'_> {
    fn sample(&self, u1: f32, u2: f32) -> Option<DirectionSample> {
        let s = self.bsdf.sample(self.wo_l, u1, u2)?;
        Some(DirectionSample {
            wi: self.frame.to_world(s.wi),
            pdf: s.pdf,
        })
    }

    fn pdf(&self, wi: Vec3) -> f32 {
        self.bsdf.pdf(self.wo_l, self.frame.to_local(wi))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent deterministic stream per (seed, wave, pixel).
fn path_seed(seed: u64, wave: u32, pixel: u64) -> u64 {
    splitmix64(seed ^ splitmix64(((wave as u64) << 40) ^ pixel))
}

/// Backward sweep: fills every drafted record's suffix radiance and its
/// delta-chain linkage, and returns the path's pixel radiance.
fn resolve_radiance(events: &[Event], records: &mut [PathVertexRecord]) -> Rgb {
    let mut li = Rgb::BLACK;
    for ev in events.iter().rev() {
        if ev.draft >= 0 {
            records[ev.draft as usize].li_suffix = li;
        }
        li = ev.emitted + ev.scatter * li;
    }
    for (k, ev) in events.iter().enumerate() {
        if ev.draft < 0 {
            continue;
        }
        let rec = &mut records[ev.draft as usize];
        let mut weight = Rgb::WHITE;
        let mut emitted = Rgb::BLACK;
        for chained in &events[k + 1..] {
            emitted += weight * chained.emitted;
            if !chained.delta {
                rec.next = chained.query;
                break;
            }
            weight = weight * chained.scatter;
        }
        rec.next_weight = weight;
        rec.emitted_next = emitted;
    }
    li
}

/// Traces one camera path. Drafted records are appended to `records`;
/// returns the pixel radiance and whether the path was killed (non-finite
/// scatter weight, in which case its records are dropped too).
fn trace_path(
    scene: &Scene,
    mut ray: Ray,
    rng: &mut StdRng,
    mut guided: Option<(&GuidingSystem, &mut GuideScratch)>,
    want_records: bool,
    records: &mut Vec<PathVertexRecord>,
) -> (Rgb, bool) {
    let first_record = records.len();
    let mut events: Vec<Event> = Vec::with_capacity(MAX_SEGMENTS + 1);
    for depth in 0..MAX_SEGMENTS {
        let Some(hit) = scene.intersect(&ray) else {
            events.push(Event {
                emitted: scene.environment,
                scatter: Rgb::BLACK,
                delta: false,
                query: None,
                draft: -1,
            });
            break;
        };
        let mat = scene.materials[hit.material as usize];
        let wo = -ray.d;
        // Emitters radiate from their winding side only.
        let emitted = if !mat.emission.is_black() && hit.normal_geo.dot(wo) > 0.0 {
            mat.emission
        } else {
            Rgb::BLACK
        };
        let delta = mat.bsdf.is_delta();
        // Shading frame flipped toward the viewer, so wo_l.z >= 0.
        let nf = if hit.normal_shading.dot(wo) >= 0.0 {
            hit.normal_shading
        } else {
            -hit.normal_shading
        };
        let frame = Onb::from_w(nf);
        let wo_l = frame.to_local(wo);
        let query = (!delta).then(|| VertexQuery {
            position: hit.position,
            wo,
            normal: nf,
            roughness: mat.bsdf.guide_roughness(),
        });

        if depth + 1 == MAX_SEGMENTS || wo_l.z <= 0.0 {
            events.push(Event {
                emitted,
                scatter: Rgb::BLACK,
                delta,
                query,
                draft: -1,
            });
            break;
        }

        // Continuation direction: delta lobes bypass the mixture.
        let sampled = if delta {
            mat.bsdf
                .sample(wo_l, rng.gen(), rng.gen())
                .map(|s| (frame.to_world(s.wi), s.wi, s.pdf, s.value))
        } else {
            match guided.as_mut() {
                Some((g, s)) => {
                    let lobe = Lobe {
                        bsdf: &mat.bsdf,
                        frame: &frame,
                        wo_l,
                    };
                    let q = query.as_ref().expect("non-delta vertices carry a query");
                    g.mixed_sample(q, &lobe, rng.gen(), rng.gen(), rng.gen(), s)
                        .map(|d| {
                            let wi_l = frame.to_local(d.wi);
                            (d.wi, wi_l, d.pdf, mat.bsdf.eval(wo_l, wi_l))
                        })
                }
                None => mat
                    .bsdf
                    .sample(wo_l, rng.gen(), rng.gen())
                    .map(|s| (frame.to_world(s.wi), s.wi, s.pdf, s.value)),
            }
        };
        let Some((wi, wi_l, pdf, value)) = sampled else {
            events.push(Event {
                emitted,
                scatter: Rgb::BLACK,
                delta,
                query,
                draft: -1,
            });
            break;
        };

        let cos = wi_l.z.max(0.0);
        let scatter = if delta { value } else { value * (cos / pdf) };
        if !scatter.is_finite() {
            records.truncate(first_record);
            return (Rgb::BLACK, true);
        }
        let mut draft = -1;
        if want_records && !delta {
            records.push(PathVertexRecord {
                query: *query.as_ref().expect("non-delta vertices carry a query"),
                wi,
                bsdf: value,
                cos_theta: cos,
                pdf,
                next: None,
                next_weight: Rgb::WHITE,
                emitted_next: Rgb::BLACK,
                li_suffix: Rgb::BLACK,
            });
            draft = records.len() as i32 - 1;
        }
        events.push(Event {
            emitted,
            scatter,
            delta,
            query,
            draft,
        });
        if scatter.is_black() {
            break;
        }
        // Spawn from just above the surface. Lifting the origin (rather than
        // clipping a full epsilon off the ray) keeps hits on perpendicular
        // geometry near edges, which a bare t_min would tunnel through.
        ray = Ray {
            o: hit.position + nf * scene.eps_ray,
            d: wi,
            t_min: scene.eps_ray * 1e-2,
            t_max: f32::INFINITY,
        };
    }
    (resolve_radiance(&events, records), false)
}

pub fn render(scene: &Scene, job: &RenderJob) -> RenderResult {
    assert!(job.record_stride >= 1, "record stride must be at least 1");
    let mut film = Film::new(job.width, job.height);
    let mut frames = Vec::new();
    let mut snapshots = Vec::new();
    let killed = AtomicU64::new(0);
    let (mut guiding, training_waves) = match &job.mode {
        RenderMode::Pt => (None, 0),
        RenderMode::Guided(cfg) => (
            Some(GuidingSystem::new(*cfg, scene.bounds)),
            cfg.training_waves(job.spp),
        ),
    };

    for wave in 0..job.spp {
        let collect = wave < training_waves;
        let guide_ref = guiding.as_ref();
        let (width, height) = (job.width, job.height);
        let wave_records: Vec<Vec<PathVertexRecord>> = film
            .bands(1)
            .into_par_iter()
            .map(|mut band| {
                let mut scratch = guide_ref.map(|g| g.scratch());
                let mut recs = Vec::new();
                for offset in 0..band.len() {
                    let pixel = band.first_pixel + offset;
                    let mut rng =
                        StdRng::seed_from_u64(path_seed(job.seed, wave, pixel as u64));
                    let (jx, jy) = (rng.gen(), rng.gen());
                    let ray = scene
                        .camera
                        .ray(pixel % width, pixel / width, jx, jy, width, height);
                    let want = collect
                        && (pixel as u64 + wave as u64) % job.record_stride as u64 == 0;
                    let ctx = match (guide_ref, scratch.as_mut()) {
                        (Some(g), Some(s)) if g.cfg.guide_active(wave) => Some((g, s)),
                        _ => None,
                    };
                    let (color, dead) = trace_path(scene, ray, &mut rng, ctx, want, &mut recs);
                    if dead {
                        killed.fetch_add(1, Ordering::Relaxed);
                    }
                    band.splat(offset, color);
                }
                recs
            })
            .collect();
        if collect {
            let flat: Vec<PathVertexRecord> = wave_records.into_iter().flatten().collect();
            let g = guiding.as_mut().expect("only guided renders collect");
            frames.push(g.run_training_frame(&flat, wave));
        }
        if job.checkpoints.contains(&(wave + 1)) {
            snapshots.push((wave + 1, film.mean_image()));
        }
    }

    RenderResult {
        film,
        frames,
        killed_paths: killed.into_inner(),
        guiding,
        snapshots,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvh::{Bvh, Triangle};
    use crate::camera::Camera;
    use crate::scene::Material;
    use glint_core::math::Aabb;

    fn quad(corners: [Vec3; 4], material: u32, out: &mut Vec<Triangle>) {
        out.push(Triangle {
            p0: corners[0],
            p1: corners[1],
            p2: corners[2],
            material,
        });
        out.push(Triangle {
            p0: corners[0],
            p1: corners[2],
            p2: corners[3],
            material,
        });
    }

    /// Camera at +2z looking at the origin; a 45 degree mirror there bounces
    /// the view up into a downward-facing emitter at y = 1.5.
    fn periscope() -> Scene {
        let mut triangles = Vec::new();
        quad(
            [
                Vec3::new(-1.0, -1.0, 1.0),
                Vec3::new(1.0, -1.0, 1.0),
                Vec3::new(1.0, 1.0, -1.0),
                Vec3::new(-1.0, 1.0, -1.0),
            ],
            0,
            &mut triangles,
        );
        quad(
            [
                Vec3::new(-0.5, 1.5, -0.5),
                Vec3::new(0.5, 1.5, -0.5),
                Vec3::new(0.5, 1.5, 0.5),
                Vec3::new(-0.5, 1.5, 0.5),
            ],
            1,
            &mut triangles,
        );
        let materials = vec![
            Material {
                bsdf: Bsdf::Mirror {
                    reflectance: Rgb::splat(0.8),
                },
                emission: Rgb::BLACK,
            },
            Material {
                bsdf: Bsdf::Diffuse { albedo: Rgb::BLACK },
                emission: Rgb::new(2.0, 1.0, 0.5),
            },
        ];
        let mut bounds = Aabb::EMPTY;
        for t in &triangles {
            bounds = bounds.union(&t.bounds());
        }
        let bvh = Bvh::build(&triangles);
        let eps_ray = 1e-4 * bounds.diagonal().length();
        Scene {
            name: "periscope".to_string(),
            triangles,
            materials,
            environment: Rgb::BLACK,
            camera: Camera::new(
                Vec3::new(0.0, 0.0, 2.0),
                Vec3::ZERO,
                Vec3::Y,
                10.0,
            ),
            probes: Vec::new(),
            bounds,
            bvh,
            eps_ray,
            warnings: Vec::new(),
        }
    }

    #[test]
    fn mirror_carries_the_emitter_exactly() {
        let scene = periscope();
        let job = RenderJob {
            width: 3,
            height: 3,
            spp: 4,
            seed: 7,
            mode: RenderMode::Pt,
            record_stride: 1,
            checkpoints: Vec::new(),
        };
        let out = render(&scene, &job);
        assert_eq!(out.killed_paths, 0);
        let img = out.film.mean_image();
        let expect = Rgb::new(2.0, 1.0, 0.5) * 0.8;
        for px in &img {
            assert!((px[0] - expect.r as f64).abs() < 1e-6, "{px:?}");
            assert!((px[1] - expect.g as f64).abs() < 1e-6);
            assert!((px[2] - expect.b as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn emitter_back_side_is_dark() {
        let mut scene = periscope();
        // Look at the emitter quad from above: its winding faces down, so a
        // camera above must see nothing.
        scene.camera = Camera::new(Vec3::new(0.0, 3.0, 0.0), Vec3::new(0.0, 1.5, 0.0), Vec3::Z, 10.0);
        let job = RenderJob {
            width: 2,
            height: 2,
            spp: 1,
            seed: 3,
            mode: RenderMode::Pt,
            record_stride: 1,
            checkpoints: Vec::new(),
        };
        let img = render(&scene, &job).film.mean_image();
        assert!(img.iter().all(|p| p.iter().all(|&c| c == 0.0)), "{img:?}");
    }

    #[test]
    fn records_chain_through_delta_vertices() {
        let q0 = VertexQuery {
            position: Vec3::ZERO,
            wo: Vec3::Z,
            normal: Vec3::Z,
            roughness: 1.0,
        };
        let q2 = VertexQuery {
            position: Vec3::X,
            wo: Vec3::Y,
            normal: Vec3::Y,
            roughness: 1.0,
        };
        let emitter = Rgb::new(4.0, 2.0, 1.0);
        let mut records = vec![PathVertexRecord {
            query: q0,
            wi: Vec3::Y,
            bsdf: Rgb::splat(0.5),
            cos_theta: 1.0,
            pdf: 1.0,
            next: None,
            next_weight: Rgb::WHITE,
            emitted_next: Rgb::BLACK,
            li_suffix: Rgb::BLACK,
        }];
        let events = vec![
            Event {
                emitted: Rgb::BLACK,
                scatter: Rgb::splat(0.5),
                delta: false,
                query: Some(q0),
                draft: 0,
            },
            Event {
                emitted: Rgb::BLACK,
                scatter: Rgb::splat(0.25),
                delta: true,
                query: None,
                draft: -1,
            },
            Event {
                emitted: emitter,
                scatter: Rgb::BLACK,
                delta: false,
                query: Some(q2),
                draft: -1,
            },
        ];
        let pixel = resolve_radiance(&events, &mut records);
        let rec = &records[0];
        assert!((rec.li_suffix.r - 1.0).abs() < 1e-6, "{:?}", rec.li_suffix);
        assert_eq!(rec.next_weight.r, 0.25);
        assert_eq!(rec.emitted_next.r, 1.0);
        let next = rec.next.expect("chain ends at a non-delta vertex");
        assert_eq!(next.position.x, q2.position.x);
        // Pixel carries the diffuse scatter weight on top of the suffix.
        assert!((pixel.r - 0.5).abs() < 1e-6);
    }

    #[test]
    fn same_seed_reproduces_film_and_parameters() {
        let scene = periscope();
        let cfg = GuidingConfig {
            seed: 11,
            ..GuidingConfig::default()
        };
        let job = RenderJob {
            width: 4,
            height: 3,
            spp: 8,
            seed: 99,
            mode: RenderMode::Guided(cfg),
            record_stride: 1,
            checkpoints: Vec::new(),
        };
        let a = render(&scene, &job);
        let b = render(&scene, &job);
        let (ia, ib) = (a.film.mean_image(), b.film.mean_image());
        for (x, y) in ia.iter().zip(&ib) {
            for c in 0..3 {
                assert_eq!(x[c].to_bits(), y[c].to_bits());
            }
        }
        assert_eq!(
            a.guiding.unwrap().param_hashes(),
            b.guiding.unwrap().param_hashes()
        );
        assert_eq!(a.frames.len(), b.frames.len());
        assert!(!a.frames.is_empty());
    }
}
