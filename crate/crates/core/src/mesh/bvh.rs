//! Axis-aligned bounding-volume hierarchy over the faces of one mesh.

use super::{TriangleMesh, Vec3};

const LEAF_SIZE: usize = 4;

/// Barycentric slack for ray hits so rays through shared edges are not lost.
const RAY_BARY_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn merge(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    fn contains(&self, other: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= other.min[a] && self.max[a] >= other.max[a])
    }

    fn distance_squared(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for a in 0..3 {
            let excess = (self.min[a] - p[a]).max(p[a] - self.max[a]).max(0.0);
            d += excess * excess;
        }
        d
    }

    /// Entry parameter of the ray into the box, if it hits within `t_max`.
    fn ray_entry(&self, origin: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for a in 0..3 {
            // Inflate slightly so grazing hits on the box surface survive rounding.
            let pad = 1e-9 * (self.max[a] - self.min[a]).abs().max(1.0);
            let (lo, hi) = (self.min[a] - pad, self.max[a] + pad);
            if inv_dir[a].is_infinite() {
                if origin[a] < lo || origin[a] > hi {
                    return None;
                }
                continue;
            }
            let ta = (lo - origin[a]) * inv_dir[a];
            let tb = (hi - origin[a]) * inv_dir[a];
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

#[derive(Debug, Clone, Copy)]
enum NodeKind {
    Leaf { start: u32, count: u32 },
    Inner { left: u32, right: u32 },
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    kind: NodeKind,
}

/// Built once per mesh; queries take `&self` and may run concurrently.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    /// Face indices, permuted so each leaf owns a contiguous range.
    order: Vec<usize>,
    face_count: usize,
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Bvh {
        let mut boxes = Vec::with_capacity(mesh.faces.len());
        let mut centroids = Vec::with_capacity(mesh.faces.len());
        for f in 0..mesh.faces.len() {
            let tri = mesh.triangle(f);
            let mut b = Aabb::empty();
            tri.iter().for_each(|p| b.grow(p));
            boxes.push(b);
            centroids.push((tri[0] + tri[1] + tri[2]) / 3.0);
        }
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * mesh.faces.len() / LEAF_SIZE + 1),
            order: (0..mesh.faces.len()).collect(),
            face_count: mesh.faces.len(),
        };
        if !bvh.order.is_empty() {
            bvh.build_node(0, mesh.faces.len(), &boxes, &centroids);
        }
        bvh
    }

    fn build_node(&mut self, start: usize, end: usize, boxes: &[Aabb], centroids: &[Vec3]) -> u32 {
        let mut bounds = Aabb::empty();
        let mut spread = Aabb::empty();
        for &f in &self.order[start..end] {
            bounds = bounds.merge(&boxes[f]);
            spread.grow(&centroids[f]);
        }
        let id = self.nodes.len() as u32;
        let count = end - start;
        if count <= LEAF_SIZE {
            self.nodes.push(Node {
                bounds,
                kind: NodeKind::Leaf {
                    start: start as u32,
                    count: count as u32,
                },
            });
            return id;
        }
        let extent = spread.max - spread.min;
        let axis = extent.imax();
        let mid = start + count / 2;
        self.order[start..end].select_nth_unstable_by(count / 2, |&a, &b| {
            centroids[a][axis].total_cmp(&centroids[b][axis])
        });
        self.nodes.push(Node {
            bounds,
            kind: NodeKind::Leaf { start: 0, count: 0 },
        });
        let left = self.build_node(start, mid, boxes, centroids);
        let right = self.build_node(mid, end, boxes, centroids);
        self.nodes[id as usize].kind = NodeKind::Inner { left, right };
        id
    }

    pub fn face_count(&self) -> usize {
        self.face_count
    }

    /// Checks the structural invariants: every face in exactly one leaf and
    /// parent boxes containing their children.
    pub fn check_invariants(&self, mesh: &TriangleMesh) -> bool {
        let mut seen = vec![0u32; self.face_count];
        let mut ok = true;
        for node in &self.nodes {
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for &f in &self.order[start as usize..(start + count) as usize] {
                        seen[f] += 1;
                        let tri = mesh.triangle(f);
                        let mut b = Aabb::empty();
                        tri.iter().for_each(|p| b.grow(p));
                        ok &= node.bounds.contains(&b);
                    }
                }
                NodeKind::Inner { left, right } => {
                    ok &= node.bounds.contains(&self.nodes[left as usize].bounds);
                    ok &= node.bounds.contains(&self.nodes[right as usize].bounds);
                }
            }
        }
        ok && seen.iter().all(|&n| n == 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestHit {
    pub point: Vec3,
    pub face_index: usize,
    pub distance: f64,
    pub barycentric: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub face_index: usize,
    pub barycentric: [f64; 3],
    pub t: f64,
}

/// Closest point on triangle `abc` to `p`, with its barycentric coordinates
/// (region classification after Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}

/// Möller–Trumbore; returns `(t, barycentric)` for hits with `t > 0`.
/// Hits within a tiny barycentric slack of an edge count, and the returned
/// coordinates are clamped back into the triangle.
pub fn ray_triangle(
    origin: &Vec3,
    dir: &Vec3,
    a: &Vec3,
    b: &Vec3,
    c: &Vec3,
) -> Option<(f64, [f64; 3])> {
    let e1 = b - a;
    let e2 = c - a;
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = origin - a;
    let u = tvec.dot(&pvec) * inv;
    if !(-RAY_BARY_EPS..=1.0 + RAY_BARY_EPS).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv;
    if v < -RAY_BARY_EPS || u + v > 1.0 + RAY_BARY_EPS {
        return None;
    }
    let t = e2.dot(&qvec) * inv;
    if !(t > 0.0) {
        return None;
    }
    let (u, v) = (u.max(0.0), v.max(0.0));
    let s = u + v;
    let (u, v) = if s > 1.0 { (u / s, v / s) } else { (u, v) };
    Some((t, [1.0 - u - v, u, v]))
}

/// Nearest point on the mesh surface to `query`.
pub fn closest_point(bvh: &Bvh, mesh: &TriangleMesh, query: &Vec3) -> Option<ClosestHit> {
    if bvh.nodes.is_empty() {
        return None;
    }
    let mut best: Option<ClosestHit> = None;
    let mut best_d2 = f64::INFINITY;
    let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
    stack.push((0, bvh.nodes[0].bounds.distance_squared(query)));
    while let Some((id, lb)) = stack.pop() {
        if lb > best_d2 {
            continue;
        }
        let node = &bvh.nodes[id as usize];
        match node.kind {
            NodeKind::Leaf { start, count } => {
                for &f in &bvh.order[start as usize..(start + count) as usize] {
                    let [a, b, c] = mesh.triangle(f);
                    let (p, bary) = closest_point_on_triangle(query, &a, &b, &c);
                    let d2 = (p - query).norm_squared();
                    let better = match &best {
                        None => true,
                        Some(h) => d2 < best_d2 || (d2 == best_d2 && f < h.face_index),
                    };
                    if better {
                        best_d2 = d2;
                        best = Some(ClosestHit {
                            point: p,
                            face_index: f,
                            distance: d2.sqrt(),
                            barycentric: bary,
                        });
                    }
                }
            }
            NodeKind::Inner { left, right } => {
                let dl = bvh.nodes[left as usize].bounds.distance_squared(query);
                let dr = bvh.nodes[right as usize].bounds.distance_squared(query);
                // Visit the nearer child first.
                if dl <= dr {
                    stack.push((right, dr));
                    stack.push((left, dl));
                } else {
                    stack.push((left, dl));
                    stack.push((right, dr));
                }
            }
        }
    }
    best
}

/// Nearest hit with `t > 0` along `origin + t * direction`.
pub fn ray_intersect(bvh: &Bvh, mesh: &TriangleMesh, origin: &Vec3, direction: &Vec3) -> Option<RayHit> {
    if bvh.nodes.is_empty() {
        return None;
    }
    let inv_dir = direction.map(|d| 1.0 / d);
    let mut best: Option<RayHit> = None;
    let mut t_best = f64::INFINITY;
    let mut stack: Vec<u32> = Vec::with_capacity(64);
    stack.push(0);
    while let Some(id) = stack.pop() {
        let node = &bvh.nodes[id as usize];
        if node.bounds.ray_entry(origin, &inv_dir, t_best * (1.0 + 1e-12)).is_none() {
            continue;
        }
        match node.kind {
            NodeKind::Leaf { start, count } => {
                for &f in &bvh.order[start as usize..(start + count) as usize] {
                    let [a, b, c] = mesh.triangle(f);
                    if let Some((t, bary)) = ray_triangle(origin, direction, &a, &b, &c) {
                        let better = match &best {
                            None => true,
                            Some(h) => t < t_best || (t == t_best && f < h.face_index),
                        };
                        if better {
                            t_best = t;
                            best = Some(RayHit {
                                face_index: f,
                                barycentric: bary,
                                t,
                            });
                        }
                    }
                }
            }
            NodeKind::Inner { left, right } => {
                stack.push(right);
                stack.push(left);
            }
        }
    }
    best
}
