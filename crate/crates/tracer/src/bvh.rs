use glint_core::math::{Aabb, Vec3};

#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub o: Vec3,
    pub d: Vec3,
    pub t_min: f32,
    pub t_max: f32,
}

impl Ray {
    pub fn new(o: Vec3, d: Vec3) -> Ray {
        Ray {
            o,
            d,
            t_min: 0.0,
            t_max: f32::INFINITY,
        }
    }

    pub fn at(&self, t: f32) -> Vec3 {
        self.o + self.d * t
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Triangle {
    pub p0: Vec3,
    pub p1: Vec3,
    pub p2: Vec3,
    pub material: u32,
}

impl Triangle {
    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::EMPTY;
        b.grow(self.p0);
        b.grow(self.p1);
        b.grow(self.p2);
        b
    }

    pub fn centroid(&self) -> Vec3 {
        (self.p0 + self.p1 + self.p2) / 3.0
    }

    /// Geometric normal following the winding order (right-handed).
    pub fn normal(&self) -> Vec3 {
        (self.p1 - self.p0).cross(self.p2 - self.p0).normalized()
    }

    pub fn area(&self) -> f32 {
        (self.p1 - self.p0).cross(self.p2 - self.p0).length() * 0.5
    }

    /// Moller-Trumbore; returns (t, u, v) with barycentrics of p1/p2.
    pub fn intersect(&self, ray: &Ray) -> Option<(f32, f32, f32)> {
        let e1 = self.p1 - self.p0;
        let e2 = self.p2 - self.p0;
        let pv = ray.d.cross(e2);
        let det = e1.dot(pv);
        if det.abs() < 1e-12 {
            return None;
        }
        let inv = 1.0 / det;
        let tv = ray.o - self.p0;
        let u = tv.dot(pv) * inv;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let qv = tv.cross(e1);
        let v = ray.d.dot(qv) * inv;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let t = e2.dot(qv) * inv;
        if t > ray.t_min && t < ray.t_max {
            Some((t, u, v))
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f32,
    pub tri: u32,
    pub u: f32,
    pub v: f32,
}

struct Node {
    bounds: Aabb,
    /// Leaf when `count > 0`: triangles `order[start..start + count]`.
    /// Inner otherwise: children at `start` and `start + 1` in `nodes`.
    start: u32,
    count: u32,
}

/// Median-split bounding volume hierarchy over a fixed triangle list.
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn build(triangles: &[Triangle]) -> Bvh {
        assert!(!triangles.is_empty());
        let mut order: Vec<u32> = (0..triangles.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * triangles.len());
        nodes.push(Node {
            bounds: Aabb::EMPTY,
            start: 0,
            count: triangles.len() as u32,
        });
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let (start, count) = (nodes[ni].start as usize, nodes[ni].count as usize);
            let mut bounds = Aabb::EMPTY;
            let mut cbounds = Aabb::EMPTY;
            for &ti in &order[start..start + count] {
                bounds = bounds.union(&triangles[ti as usize].bounds());
                cbounds.grow(triangles[ti as usize].centroid());
            }
            nodes[ni].bounds = bounds;
            let axis = cbounds.diagonal().max_axis();
            if count <= LEAF_SIZE || cbounds.diagonal().axis(axis) <= 0.0 {
                continue; // stays a leaf
            }
            let seg = &mut order[start..start + count];
            let mid = count / 2;
            seg.select_nth_unstable_by(mid, |&a, &b| {
                let ca = triangles[a as usize].centroid().axis(axis);
                let cb = triangles[b as usize].centroid().axis(axis);
                ca.partial_cmp(&cb).unwrap().then(a.cmp(&b))
            });
            let child = nodes.len() as u32;
            nodes.push(Node {
                bounds: Aabb::EMPTY,
                start: start as u32,
                count: mid as u32,
            });
            nodes.push(Node {
                bounds: Aabb::EMPTY,
                start: (start + mid) as u32,
                count: (count - mid) as u32,
            });
            nodes[ni].start = child;
            nodes[ni].count = 0;
            stack.push(child as usize);
            stack.push(child as usize + 1);
        }
        Bvh { nodes, order }
    }

    pub fn intersect(&self, triangles: &[Triangle], ray: &Ray) -> Option<Hit> {
        let inv = Vec3::new(1.0 / ray.d.x, 1.0 / ray.d.y, 1.0 / ray.d.z);
        let mut best: Option<Hit> = None;
        let mut t_max = ray.t_max;
        let mut stack = [0u32; 64];
        let mut top = 1usize;
        while top > 0 {
            top -= 1;
            let node = &self.nodes[stack[top] as usize];
            if !slab_hit(&node.bounds, ray, inv, t_max) {
                continue;
            }
            if node.count > 0 {
                for &ti in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let clipped = Ray { t_max, ..*ray };
                    if let Some((t, u, v)) = triangles[ti as usize].intersect(&clipped) {
                        t_max = t;
                        best = Some(Hit { t, tri: ti, u, v });
                    }
                }
            } else {
                stack[top] = node.start + 1;
                stack[top + 1] = node.start;
                top += 2;
            }
        }
        best
    }
}

fn slab_hit(b: &Aabb, ray: &Ray, inv: Vec3, t_max: f32) -> bool {
    let mut t0 = ray.t_min;
    let mut t1 = t_max;
    for a in 0..3 {
        let lo = (b.min.axis(a) - ray.o.axis(a)) * inv.axis(a);
        let hi = (b.max.axis(a) - ray.o.axis(a)) * inv.axis(a);
        let (near, far) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        t0 = t0.max(near);
        t1 = t1.min(far);
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Linear scan reference, the correctness oracle for the tree.
pub fn intersect_brute(triangles: &[Triangle], ray: &Ray) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    let mut clipped = *ray;
    for (i, tri) in triangles.iter().enumerate() {
        if let Some((t, u, v)) = tri.intersect(&clipped) {
            clipped.t_max = t;
            best = Some(Hit {
                t,
                tri: i as u32,
                u,
                v,
            });
        }
    }
    best
}
