//! The acceleration structure must be a pure speedup: for any ray it has to
//! report exactly the hit a linear scan over the triangles reports.

use glint_core::math::Vec3;
use glint_tracer::bvh::{intersect_brute, Ray};
use glint_tracer::load_scene;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::path::{Path, PathBuf};

fn scene_path(name: &str) -> PathBuf {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenes")).join(name)
}

fn sphere_dir(rng: &mut StdRng) -> Vec3 {
    let z = 1.0 - 2.0 * rng.gen::<f32>();
    let phi = 2.0 * std::f32::consts::PI * rng.gen::<f32>();
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

#[test]
fn bvh_matches_brute_force_on_every_scene() {
    for name in [
        "cornell-flipped.json",
        "veach-door-mini.json",
        "furnace.json",
        "glossy-spot.json",
    ] {
        let scene = load_scene(&scene_path(name)).unwrap();
        assert!(scene.warnings.is_empty(), "{name}: {:?}", scene.warnings);
        let span = scene.bounds.max - scene.bounds.min;
        let lo = scene.bounds.min - span * 0.2;
        let mut rng = StdRng::seed_from_u64(0x9e00 + scene.triangles.len() as u64);
        let mut hits = 0usize;
        for i in 0..10_000 {
            let o = lo
                + Vec3::new(
                    rng.gen::<f32>() * span.x * 1.4,
                    rng.gen::<f32>() * span.y * 1.4,
                    rng.gen::<f32>() * span.z * 1.4,
                );
            let ray = Ray {
                o,
                d: sphere_dir(&mut rng),
                t_min: if i % 3 == 0 { scene.eps_ray } else { 0.0 },
                t_max: if i % 7 == 0 { 1.5 } else { f32::INFINITY },
            };
            let fast = scene.bvh.intersect(&scene.triangles, &ray);
            let slow = intersect_brute(&scene.triangles, &ray);
            match (fast, slow) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    assert_eq!(a.tri, b.tri, "{name} ray {i}");
                    assert_eq!(a.t.to_bits(), b.t.to_bits(), "{name} ray {i}");
                    hits += 1;
                }
                (a, b) => panic!("{name} ray {i}: bvh {a:?} vs brute {b:?}"),
            }
        }
        assert!(hits > 2_000, "{name}: only {hits} hits, rays too easy");
    }
}

#[test]
fn spawn_epsilon_prevents_self_intersection() {
    let scene = load_scene(&scene_path("furnace.json")).unwrap();
    let mut rng = StdRng::seed_from_u64(5);
    // Rays leaving a point on the floor in the upper hemisphere must never
    // report the floor itself, and the closed box guarantees a hit.
    let o = Vec3::new(0.31, 0.0, 1.62);
    for _ in 0..1_000 {
        let mut d = sphere_dir(&mut rng);
        d.y = d.y.abs().max(1e-3);
        let ray = Ray {
            o,
            d: d.normalized(),
            t_min: scene.eps_ray,
            t_max: f32::INFINITY,
        };
        let hit = scene.bvh.intersect(&scene.triangles, &ray);
        let hit = hit.expect("the box is closed");
        assert!(hit.t > scene.eps_ray);
        let p = ray.at(hit.t);
        assert!(
            p.y > 1e-3 || (p - o).length() > 0.05,
            "self hit at {p:?} from {o:?}"
        );
    }
}
