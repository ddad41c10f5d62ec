//! Indexed triangle meshes and the geometric plumbing shared by every stage
//! of the codec: file I/O, topology checks, normalization, area-weighted
//! surface sampling and BVH-accelerated spatial queries.

mod bvh;
pub mod io;
mod sampling;

use std::collections::HashMap;

use nalgebra::Vector3;
use thiserror::Error;

pub use bvh::{
    closest_point, closest_point_on_triangle, ray_intersect, ray_triangle, Bvh, ClosestHit,
    RayHit,
};
pub use io::{load_mesh, save_mesh, MeshFormat};
pub use sampling::{sample_surface_uniform, uniform_barycentric, FaceSampler, SurfaceSample};

/// Points and vectors in model space.
pub type Vec3 = Vector3<f64>;

/// Vertex-index triple, counter-clockwise when seen from outside.
pub type Face = [usize; 3];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("mesh has no faces")]
    Empty,
    #[error("face {face} references vertex {index} but the mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        vertex_count: usize,
    },
    #[error("degenerate bounding box: all vertices coincide")]
    DegenerateBounds,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<Face>,
}

impl TriangleMesh {
    /// Builds a mesh, checking that every face index is in range.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<Face>) -> Result<Self, MeshError> {
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&index) = f.iter().find(|&&i| i >= n) {
                return Err(MeshError::IndexOutOfRange {
                    face: fi,
                    index,
                    vertex_count: n,
                });
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    #[inline]
    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalized normal (twice the area, oriented by winding).
    #[inline]
    pub fn face_cross(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(&(c - a))
    }

    pub fn face_area(&self, face: usize) -> f64 {
        0.5 * self.face_cross(face).norm()
    }

    pub fn face_normal(&self, face: usize) -> Vec3 {
        let n = self.face_cross(face);
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vec3::zeros()
        }
    }

    pub fn face_areas(&self) -> Vec<f64> {
        (0..self.faces.len()).map(|f| self.face_area(f)).collect()
    }

    pub fn surface_area(&self) -> f64 {
        self.face_areas().iter().sum()
    }

    /// Barycentric combination of the corners of `face`.
    #[inline]
    pub fn interpolate(&self, face: usize, bary: [f64; 3]) -> Vec3 {
        let [a, b, c] = self.triangle(face);
        a * bary[0] + b * bary[1] + c * bary[2]
    }

    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| {
            (lo.inf(v), hi.sup(v))
        }))
    }

    /// Sorted, deduplicated 1-ring of every vertex.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut rings = vec![Vec::new(); self.vertices.len()];
        for &[a, b, c] in &self.faces {
            for (i, j) in [(a, b), (b, c), (c, a)] {
                rings[i].push(j);
                rings[j].push(i);
            }
        }
        for ring in &mut rings {
            ring.sort_unstable();
            ring.dedup();
        }
        rings
    }

    /// Undirected edge -> number of incident faces.
    pub fn edge_incidence(&self) -> HashMap<(usize, usize), usize> {
        let mut edges = HashMap::with_capacity(self.faces.len() * 3 / 2);
        for &[a, b, c] in &self.faces {
            for (i, j) in [(a, b), (b, c), (c, a)] {
                *edges.entry((i.min(j), i.max(j))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// Removes faces with repeated indices or (numerically) zero area.
    /// Returns how many faces were dropped.
    pub fn drop_degenerate_faces(&mut self) -> usize {
        let diag = self
            .bounding_box()
            .map(|(lo, hi)| (hi - lo).norm())
            .unwrap_or(0.0);
        let min_area = 1e-14 * diag * diag;
        let before = self.faces.len();
        let vertices = &self.vertices;
        self.faces.retain(|&[a, b, c]| {
            if a == b || b == c || a == c {
                return false;
            }
            let cross = (vertices[b] - vertices[a]).cross(&(vertices[c] - vertices[a]));
            0.5 * cross.norm() > min_area
        });
        before - self.faces.len()
    }

    pub fn transformed(&self, f: impl FnMut(&Vec3) -> Vec3) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(f).collect(),
            faces: self.faces.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TopologyReport {
    pub is_watertight: bool,
    pub euler_characteristic: i64,
    /// Only defined for watertight meshes.
    pub genus: Option<i64>,
    pub boundary_edge_count: usize,
    /// Edges shared by more than two faces.
    pub non_manifold_edge_count: usize,
}

impl TopologyReport {
    pub fn is_genus_zero(&self) -> bool {
        self.is_watertight && self.genus == Some(0)
    }
}

pub fn validate_topology(mesh: &TriangleMesh) -> TopologyReport {
    let edges = mesh.edge_incidence();
    let boundary = edges.values().filter(|&&n| n == 1).count();
    let non_manifold = edges.values().filter(|&&n| n > 2).count();
    let is_watertight = boundary == 0 && non_manifold == 0 && !mesh.faces.is_empty();

    // Isolated vertices do not take part in the surface.
    let mut used = vec![false; mesh.vertices.len()];
    for f in &mesh.faces {
        for &i in f {
            used[i] = true;
        }
    }
    let v = used.iter().filter(|&&u| u).count() as i64;
    let chi = v - edges.len() as i64 + mesh.faces.len() as i64;
    TopologyReport {
        is_watertight,
        euler_characteristic: chi,
        genus: is_watertight.then(|| (2 - chi) / 2),
        boundary_edge_count: boundary,
        non_manifold_edge_count: non_manifold,
    }
}

/// Affine map taking model space to the unit-diagonal frame:
/// `normalized = (p - offset) * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub scale: f64,
    pub offset: Vec3,
}

impl Normalization {
    pub const IDENTITY: Normalization = Normalization {
        scale: 1.0,
        offset: Vector3::new(0.0, 0.0, 0.0),
    };

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        (p - self.offset) * self.scale
    }

    #[inline]
    pub fn invert(&self, p: &Vec3) -> Vec3 {
        p / self.scale + self.offset
    }
}

/// Centers the mesh on its bounding-box center and scales it so the box
/// diagonal has unit length.
pub fn normalize_mesh(mesh: &TriangleMesh) -> Result<(TriangleMesh, Normalization), MeshError> {
    let (lo, hi) = mesh.bounding_box().ok_or(MeshError::Empty)?;
    let diag = (hi - lo).norm();
    if !(diag > 0.0) || !diag.is_finite() {
        return Err(MeshError::DegenerateBounds);
    }
    let norm = Normalization {
        scale: 1.0 / diag,
        offset: (lo + hi) * 0.5,
    };
    Ok((mesh.transformed(|p| norm.apply(p)), norm))
}
