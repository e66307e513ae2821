use crate::bsdf::Bsdf;
use crate::bvh::{Bvh, Hit, Ray, Triangle};
use crate::camera::Camera;
use glint_core::guiding::VertexQuery;
use glint_core::math::{Aabb, Rgb, Vec3};
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("mesh {file} line {line}: {what}")]
    BadMesh {
        file: String,
        line: usize,
        what: String,
    },
    #[error("mesh {0} references unknown material {1}")]
    UnknownMaterial(String, String),
    #[error("material {0} has negative emission")]
    NegativeEmission(String),
    #[error("no geometry")]
    NoGeometry,
}

#[derive(Deserialize)]
struct SceneDesc {
    name: String,
    camera: CameraDesc,
    #[serde(default)]
    environment: [f32; 3],
    materials: Vec<MaterialDesc>,
    meshes: Vec<MeshRef>,
    #[serde(default)]
    probes: Vec<ProbeDesc>,
}

#[derive(Deserialize)]
struct CameraDesc {
    position: [f32; 3],
    look_at: [f32; 3],
    #[serde(default = "default_up")]
    up: [f32; 3],
    fov_y_degrees: f32,
}

fn default_up() -> [f32; 3] {
    [0.0, 1.0, 0.0]
}

#[derive(Deserialize)]
struct MeshRef {
    file: String,
    material: String,
}

#[derive(Deserialize)]
struct MaterialDesc {
    name: String,
    #[serde(flatten)]
    kind: MaterialKindDesc,
    #[serde(default)]
    emission: [f32; 3],
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
enum MaterialKindDesc {
    Diffuse { albedo: [f32; 3] },
    Conductor { roughness: f32, f0: [f32; 3] },
    Mirror { reflectance: [f32; 3] },
}

#[derive(Deserialize, Clone)]
struct ProbeDesc {
    name: String,
    position: [f32; 3],
    wo: [f32; 3],
    normal: [f32; 3],
    roughness: f32,
}

#[derive(Clone, Copy, Debug)]
pub struct Material {
    pub bsdf: Bsdf,
    pub emission: Rgb,
}

/// A named shading point at which learned distributions are inspected.
#[derive(Clone, Debug)]
pub struct Probe {
    pub name: String,
    pub query: VertexQuery,
}

pub struct Scene {
    pub name: String,
    pub triangles: Vec<Triangle>,
    pub materials: Vec<Material>,
    pub environment: Rgb,
    pub camera: Camera,
    pub probes: Vec<Probe>,
    pub bounds: Aabb,
    pub bvh: Bvh,
    /// Minimum parametric distance for spawned rays: 1e-4 x scene diagonal.
    pub eps_ray: f32,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug)]
pub struct Intersection {
    pub position: Vec3,
    /// Geometric normal following the mesh winding.
    pub normal_geo: Vec3,
    /// Shading normal (these meshes are flat, so it equals the geometric).
    pub normal_shading: Vec3,
    pub material: u32,
    pub uv: (f32, f32),
    pub t: f32,
}

impl Scene {
    pub fn intersect(&self, ray: &Ray) -> Option<Intersection> {
        let hit = self.bvh.intersect(&self.triangles, ray)?;
        Some(self.resolve(ray, hit))
    }

    pub fn resolve(&self, ray: &Ray, hit: Hit) -> Intersection {
        let tri = &self.triangles[hit.tri as usize];
        let n = tri.normal();
        Intersection {
            position: ray.at(hit.t),
            normal_geo: n,
            normal_shading: n,
            material: tri.material,
            uv: (hit.u, hit.v),
            t: hit.t,
        }
    }
}

fn vec(a: [f32; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn rgb(a: [f32; 3]) -> Rgb {
    Rgb::new(a[0], a[1], a[2])
}

pub fn load_scene(path: &Path) -> Result<Scene, SceneError> {
    let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let desc: SceneDesc = serde_json::from_str(&text).map_err(|source| SceneError::Json {
        path: path.display().to_string(),
        source,
    })?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut warnings = Vec::new();

    let mut materials = Vec::new();
    for m in &desc.materials {
        let emission = rgb(m.emission);
        if m.emission.iter().any(|&e| e < 0.0) {
            return Err(SceneError::NegativeEmission(m.name.clone()));
        }
        let bsdf = match m.kind {
            MaterialKindDesc::Diffuse { albedo } => Bsdf::Diffuse {
                albedo: rgb(albedo),
            },
            MaterialKindDesc::Conductor { roughness, f0 } => {
                let r = if (0.0..=1.0).contains(&roughness) {
                    roughness
                } else {
                    let c = roughness.clamp(0.0, 1.0);
                    warnings.push(format!(
                        "material {}: roughness {roughness} clamped to {c}",
                        m.name
                    ));
                    c
                };
                Bsdf::Conductor {
                    alpha: (r * r).max(1e-4),
                    f0: rgb(f0),
                }
            }
            MaterialKindDesc::Mirror { reflectance } => Bsdf::Mirror {
                reflectance: rgb(reflectance),
            },
        };
        materials.push(Material { bsdf, emission });
    }

    let mut triangles = Vec::new();
    for mesh in &desc.meshes {
        let mat = desc
            .materials
            .iter()
            .position(|m| m.name == mesh.material)
            .ok_or_else(|| {
                SceneError::UnknownMaterial(mesh.file.clone(), mesh.material.clone())
            })? as u32;
        let obj_path = dir.join(&mesh.file);
        let obj = std::fs::read_to_string(&obj_path).map_err(|source| SceneError::Io {
            path: obj_path.display().to_string(),
            source,
        })?;
        load_obj(&obj, &mesh.file, mat, &mut triangles, &mut warnings)?;
    }
    if triangles.is_empty() {
        return Err(SceneError::NoGeometry);
    }

    let mut bounds = Aabb::EMPTY;
    for t in &triangles {
        bounds = bounds.union(&t.bounds());
    }
    let bvh = Bvh::build(&triangles);
    let eps_ray = 1e-4 * bounds.diagonal().length();
    let camera = Camera::new(
        vec(desc.camera.position),
        vec(desc.camera.look_at),
        vec(desc.camera.up),
        desc.camera.fov_y_degrees,
    );
    let probes = desc
        .probes
        .iter()
        .map(|p| Probe {
            name: p.name.clone(),
            query: VertexQuery {
                position: vec(p.position),
                wo: vec(p.wo).normalized(),
                normal: vec(p.normal).normalized(),
                roughness: p.roughness,
            },
        })
        .collect();

    Ok(Scene {
        name: desc.name,
        triangles,
        materials,
        environment: rgb(desc.environment),
        camera,
        probes,
        bounds,
        bvh,
        eps_ray,
        warnings,
    })
}

/// Minimal OBJ reader: `v` positions and `f` faces (fan-triangulated);
/// texture/normal slots and other statements are ignored.
fn load_obj(
    text: &str,
    file: &str,
    material: u32,
    out: &mut Vec<Triangle>,
    warnings: &mut Vec<String>,
) -> Result<(), SceneError> {
    let bad = |line: usize, what: &str| SceneError::BadMesh {
        file: file.to_string(),
        line,
        what: what.to_string(),
    };
    let mut verts: Vec<Vec3> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let mut it = raw.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut p = [0.0f32; 3];
                for c in &mut p {
                    *c = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad(line, "vertex needs three coordinates"))?;
                }
                if !p.iter().all(|c| c.is_finite()) {
                    return Err(bad(line, "non-finite vertex"));
                }
                verts.push(Vec3::new(p[0], p[1], p[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in it {
                    let first = tok.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| bad(line, "face index is not an integer"))?;
                    let resolved = if i > 0 {
                        i as usize - 1
                    } else if i < 0 {
                        let back = verts.len() as i64 + i;
                        if back < 0 {
                            return Err(bad(line, "relative index out of range"));
                        }
                        back as usize
                    } else {
                        return Err(bad(line, "face index 0"));
                    };
                    if resolved >= verts.len() {
                        return Err(bad(line, "face index out of range"));
                    }
                    idx.push(resolved);
                }
                if idx.len() < 3 {
                    return Err(bad(line, "face needs at least three vertices"));
                }
                for k in 1..idx.len() - 1 {
                    let tri = Triangle {
                        p0: verts[idx[0]],
                        p1: verts[idx[k]],
                        p2: verts[idx[k + 1]],
                        material,
                    };
                    if tri.area() > 0.0 {
                        out.push(tri);
                    } else {
                        warnings.push(format!("{file}:{line}: degenerate face skipped"));
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}
