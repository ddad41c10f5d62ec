//! Spherical parameterization of genus-zero meshes and the barycentric
//! correspondence between the original surface, its sphere image and its
//! smoothed (coarse) version. All three share one face list, so a point is
//! carried between them by reusing its face index and barycentric weights.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{self, validate_topology, Bvh, Face, TriangleMesh, Vec3};

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("topology: {0}")]
    Topology(String),
    #[error("no fold-free spherical embedding found; {flipped} faces still flipped")]
    Failed { flipped: usize },
    #[error("sphere candidate connectivity does not match the mesh: {0}")]
    ConnectivityMismatch(String),
    #[error("spherical embedding is not bijective: {} flipped faces (first: {:?}), origin inside: {origin_inside}", flipped_faces.len(), flipped_faces.iter().take(8).collect::<Vec<_>>())]
    NotBijective {
        flipped_faces: Vec<usize>,
        origin_inside: bool,
    },
    #[error("direction {0:?} did not hit the sphere mesh")]
    LocateFailed([f64; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamOptions {
    pub max_iterations: usize,
    /// Initial smoothing step (fraction of the way to the 1-ring mean).
    pub step_size: f64,
    /// Give up once backtracking shrinks the step below this.
    pub tolerance: f64,
}

impl Default for ParamOptions {
    fn default() -> Self {
        ParamOptions {
            max_iterations: 2000,
            step_size: 0.5,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BijectivityReport {
    pub ok: bool,
    pub flipped_faces: Vec<usize>,
    pub origin_inside: bool,
    /// Winding number of the mesh around the origin.
    pub winding: f64,
}

/// `det[a, b, c]`: orientation of the chordal triangle seen from the origin.
#[inline]
fn orientation(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    a.dot(&b.cross(c))
}

/// Signed solid angle of triangle `abc` seen from the origin
/// (Van Oosterom & Strackee).
fn solid_angle(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let num = orientation(a, b, c);
    let den = la * lb * lc + a.dot(b) * lc + a.dot(c) * lb + b.dot(c) * la;
    2.0 * num.atan2(den)
}

/// Flags faces whose orientation about the origin disagrees with the
/// majority, and checks the mesh winds exactly once around the origin.
pub fn check_bijectivity(sphere: &TriangleMesh) -> BijectivityReport {
    let dets: Vec<f64> = sphere
        .faces
        .iter()
        .map(|&[a, b, c]| orientation(&sphere.vertices[a], &sphere.vertices[b], &sphere.vertices[c]))
        .collect();
    let positive = dets.iter().filter(|&&d| d > 0.0).count();
    let negative = dets.iter().filter(|&&d| d < 0.0).count();
    let majority = if positive >= negative { 1.0 } else { -1.0 };
    let flipped_faces: Vec<usize> = dets
        .iter()
        .enumerate()
        .filter(|(_, &d)| !(d * majority > 0.0))
        .map(|(i, _)| i)
        .collect();
    let total: f64 = sphere
        .faces
        .iter()
        .map(|&[a, b, c]| solid_angle(&sphere.vertices[a], &sphere.vertices[b], &sphere.vertices[c]))
        .sum();
    let winding = total / (4.0 * std::f64::consts::PI);
    let origin_inside = (winding.abs() - 1.0).abs() < 0.5;
    BijectivityReport {
        ok: flipped_faces.is_empty() && origin_inside,
        flipped_faces,
        origin_inside,
        winding,
    }
}

pub fn require_genus_zero(mesh: &TriangleMesh) -> Result<(), ParamError> {
    let topo = validate_topology(mesh);
    if !topo.is_watertight {
        return Err(ParamError::Topology(format!(
            "mesh is not watertight ({} boundary, {} non-manifold edges); genus undefined",
            topo.boundary_edge_count, topo.non_manifold_edge_count
        )));
    }
    if topo.genus != Some(0) {
        return Err(ParamError::Topology(format!(
            "mesh has genus {} (Euler characteristic {}); only genus 0 is supported",
            topo.genus.unwrap_or(-1),
            topo.euler_characteristic
        )));
    }
    Ok(())
}

fn area_centroid(mesh: &TriangleMesh) -> Vec3 {
    let mut acc = Vec3::zeros();
    let mut total = 0.0;
    for f in 0..mesh.face_count() {
        let [a, b, c] = mesh.triangle(f);
        let w = mesh.face_area(f);
        acc += (a + b + c) * (w / 3.0);
        total += w;
    }
    if total > 0.0 {
        acc / total
    } else {
        mesh.vertices.iter().sum::<Vec3>() / mesh.vertex_count() as f64
    }
}

fn project(v: Vec3) -> Vec3 {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        Vec3::z()
    }
}

/// One smoothing sweep in ambient space, re-centred and projected back to
/// the unit sphere.
fn smooth_on_sphere(points: &[Vec3], rings: &[Vec<usize>], step: f64) -> Vec<Vec3> {
    let moved: Vec<Vec3> = points
        .iter()
        .zip(rings)
        .map(|(p, ring)| {
            if ring.is_empty() {
                return *p;
            }
            let mean = ring.iter().map(|&j| points[j]).sum::<Vec3>() / ring.len() as f64;
            project(p + (mean - p) * step)
        })
        .collect();
    // Re-centring keeps the relaxation from collapsing toward one pole.
    let center = moved.iter().sum::<Vec3>() / moved.len() as f64;
    moved.into_iter().map(|p| project(p - center)).collect()
}

/// Maps a watertight genus-0 mesh onto the unit sphere: central projection
/// about the surface centroid, followed by smooth-and-project relaxation
/// (with step backtracking) until no face is folded.
pub fn spherical_parameterize(
    mesh: &TriangleMesh,
    opts: &ParamOptions,
) -> Result<TriangleMesh, ParamError> {
    require_genus_zero(mesh)?;
    let center = area_centroid(mesh);
    let mut sphere = mesh.transformed(|p| project(p - center));
    let mut report = check_bijectivity(&sphere);
    if report.ok {
        return Ok(sphere);
    }
    let rings = mesh.vertex_neighbors();
    let mut step = opts.step_size;
    let mut flipped = report.flipped_faces.len();
    for iteration in 0..opts.max_iterations {
        let candidate = smooth_on_sphere(&sphere.vertices, &rings, step);
        let trial = TriangleMesh {
            vertices: candidate,
            faces: sphere.faces.clone(),
        };
        let r = check_bijectivity(&trial);
        if r.flipped_faces.len() > flipped {
            step *= 0.5;
            if step < opts.tolerance {
                break;
            }
            continue;
        }
        sphere = trial;
        flipped = r.flipped_faces.len();
        report = r;
        if report.ok {
            log::debug!("spherical embedding converged after {} sweeps", iteration + 1);
            return Ok(sphere);
        }
    }
    Err(ParamError::Failed {
        flipped: report.flipped_faces.len().max(usize::from(!report.origin_inside)),
    })
}

/// Accepts an externally computed spherical embedding with the same
/// connectivity as `mesh`.
pub fn import_parameterization(
    mesh: &TriangleMesh,
    candidate: &TriangleMesh,
) -> Result<TriangleMesh, ParamError> {
    if candidate.vertex_count() != mesh.vertex_count() {
        return Err(ParamError::ConnectivityMismatch(format!(
            "{} vertices vs {}",
            candidate.vertex_count(),
            mesh.vertex_count()
        )));
    }
    if candidate.faces != mesh.faces {
        let first = candidate
            .faces
            .iter()
            .zip(&mesh.faces)
            .position(|(a, b)| a != b)
            .unwrap_or(candidate.face_count().min(mesh.face_count()));
        return Err(ParamError::ConnectivityMismatch(format!(
            "face lists differ (first difference at face {first})"
        )));
    }
    let sphere = candidate.transformed(|p| project(*p));
    let report = check_bijectivity(&sphere);
    if !report.ok {
        return Err(ParamError::NotBijective {
            flipped_faces: report.flipped_faces,
            origin_inside: report.origin_inside,
        });
    }
    Ok(sphere)
}

/// Uniform (umbrella) Laplacian smoothing: every vertex moves `lambda` of
/// the way toward its 1-ring mean, `iterations` times (Jacobi updates).
pub fn laplacian_smooth(mesh: &TriangleMesh, iterations: usize, lambda: f64) -> TriangleMesh {
    let rings = mesh.vertex_neighbors();
    let mut current = mesh.vertices.clone();
    let mut next = current.clone();
    for _ in 0..iterations {
        for (i, ring) in rings.iter().enumerate() {
            if ring.is_empty() {
                next[i] = current[i];
                continue;
            }
            let mean = ring.iter().map(|&j| current[j]).sum::<Vec3>() / ring.len() as f64;
            next[i] = current[i] + (mean - current[i]) * lambda;
        }
        std::mem::swap(&mut current, &mut next);
    }
    TriangleMesh {
        vertices: current,
        faces: mesh.faces.clone(),
    }
}

/// Finds which sphere-mesh face a direction from the origin passes through.
#[derive(Debug, Clone)]
pub struct SphereLocator {
    sphere: TriangleMesh,
    bvh: Bvh,
}

impl SphereLocator {
    pub fn new(sphere: TriangleMesh) -> Self {
        let bvh = Bvh::build(&sphere);
        SphereLocator { sphere, bvh }
    }

    pub fn sphere(&self) -> &TriangleMesh {
        &self.sphere
    }

    pub fn locate_direction(&self, direction: &Vec3) -> Result<(usize, [f64; 3]), ParamError> {
        mesh::ray_intersect(&self.bvh, &self.sphere, &Vec3::zeros(), direction)
            .map(|hit| (hit.face_index, hit.barycentric))
            .ok_or(ParamError::LocateFailed([direction.x, direction.y, direction.z]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Original,
    Sphere,
    Coarse,
}

/// The original mesh, its sphere image and its coarse version over one
/// shared face list.
#[derive(Debug, Clone)]
pub struct ParameterizedShape {
    faces: Vec<Face>,
    original: Vec<Vec3>,
    sphere: Vec<Vec3>,
    coarse: Vec<Vec3>,
}

impl ParameterizedShape {
    pub fn new(
        original: TriangleMesh,
        sphere: TriangleMesh,
        coarse: TriangleMesh,
    ) -> Result<Self, ParamError> {
        if original.faces != sphere.faces || original.faces != coarse.faces {
            return Err(ParamError::ConnectivityMismatch(
                "original, sphere and coarse meshes must share one face list".into(),
            ));
        }
        let n = original.vertex_count();
        if sphere.vertex_count() != n || coarse.vertex_count() != n {
            return Err(ParamError::ConnectivityMismatch(
                "vertex counts differ".into(),
            ));
        }
        if let Some(i) = sphere.vertices.iter().position(|v| (v.norm() - 1.0).abs() > 1e-6) {
            return Err(ParamError::ConnectivityMismatch(format!(
                "sphere vertex {i} is not unit length"
            )));
        }
        Ok(ParameterizedShape {
            faces: original.faces,
            original: original.vertices,
            sphere: sphere.vertices,
            coarse: coarse.vertices,
        })
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn vertices(&self, target: Target) -> &[Vec3] {
        match target {
            Target::Original => &self.original,
            Target::Sphere => &self.sphere,
            Target::Coarse => &self.coarse,
        }
    }

    pub fn mesh(&self, target: Target) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices(target).to_vec(),
            faces: self.faces.clone(),
        }
    }

    /// Barycentric combination of `face`'s corners on `target`; with
    /// `Original` this is the inverse parameterization, with `Coarse` its
    /// smoothed counterpart.
    #[inline]
    pub fn correspond(&self, target: Target, face: usize, bary: [f64; 3]) -> Vec3 {
        let v = self.vertices(target);
        let [a, b, c] = self.faces[face];
        v[a] * bary[0] + v[b] * bary[1] + v[c] * bary[2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::make_icosphere;
    use crate::mesh::tests::{icosahedron, torus};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn icosahedron_embeds_directly() {
        let ico = icosahedron().transformed(|p| p * 3.0);
        let s = spherical_parameterize(&ico, &ParamOptions::default()).unwrap();
        assert_eq!(s.faces, ico.faces);
        for (a, b) in s.vertices.iter().zip(&ico.vertices) {
            assert!((a - b.normalize()).norm() < 1e-12);
        }
        assert!(check_bijectivity(&s).ok);
    }

    #[test]
    fn noisy_icosphere_embeds_without_folds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = make_icosphere(3)
            .mesh
            .transformed(|p| p * (1.0 + rng.gen_range(-0.1..0.1)));
        let s = spherical_parameterize(&m, &ParamOptions::default()).unwrap();
        assert!(check_bijectivity(&s).ok);
        assert!(s.vertices.iter().all(|v| (v.norm() - 1.0).abs() < 1e-6));
    }

    #[test]
    fn folded_embedding_is_relaxed() {
        // Push one vertex of an icosphere far across the sphere so its fan
        // folds over; relaxation must untangle it.
        let mut m = make_icosphere(2).mesh;
        let target = m.vertices[0];
        m.vertices[5] = (target + m.vertices[5] * 0.05).normalize() * 0.6;
        let naive = m.transformed(|p| p.normalize());
        assert!(!check_bijectivity(&naive).ok);
        let s = spherical_parameterize(&m, &ParamOptions::default()).unwrap();
        assert!(check_bijectivity(&s).ok);
    }

    #[test]
    fn torus_is_a_topology_error() {
        let err = spherical_parameterize(&torus(8, 8), &ParamOptions::default()).unwrap_err();
        assert!(matches!(err, ParamError::Topology(_)));
        assert!(err.to_string().contains("genus"));
    }

    #[test]
    fn reflected_vertex_flips_faces() {
        let mut s = icosahedron();
        assert!(check_bijectivity(&s).ok);
        assert!(check_bijectivity(&s).flipped_faces.is_empty());
        s.vertices[0] = -s.vertices[0];
        let r = check_bijectivity(&s);
        assert!(!r.flipped_faces.is_empty());
        assert!(!r.ok);
    }

    #[test]
    fn translated_sphere_does_not_contain_origin() {
        let s = icosahedron().transformed(|p| p + Vec3::new(2.0, 0.0, 0.0));
        let r = check_bijectivity(&s);
        assert!(!r.origin_inside);
        assert!(r.winding.abs() < 1e-9);
    }

    #[test]
    fn import_accepts_own_output_and_rejects_folds() {
        let m = make_icosphere(2).mesh.transformed(|p| p * 2.0);
        let s = spherical_parameterize(&m, &ParamOptions::default()).unwrap();
        let back = import_parameterization(&m, &s).unwrap();
        assert_eq!(back.faces, s.faces);
        for (a, b) in back.vertices.iter().zip(&s.vertices) {
            assert!((a - b).norm() < 1e-15);
        }

        let mut folded = s.clone();
        folded.vertices.swap(0, 30);
        match import_parameterization(&m, &folded) {
            Err(ParamError::NotBijective { flipped_faces, .. }) => assert!(!flipped_faces.is_empty()),
            other => panic!("expected bijectivity error, got {other:?}"),
        }

        let mut reordered = s.clone();
        reordered.faces.swap(0, 1);
        assert!(matches!(
            import_parameterization(&m, &reordered),
            Err(ParamError::ConnectivityMismatch(_))
        ));
    }

    #[test]
    fn smoothing_zero_iterations_is_identity() {
        let m = make_icosphere(2).mesh;
        assert_eq!(laplacian_smooth(&m, 0, 0.5), m);
    }

    #[test]
    fn icosphere_shrinks_but_stays_round() {
        // Levels >= 1 have valence-5 and valence-6 vertices, so rings are
        // not exactly symmetric; the icosahedron is.
        let m = icosahedron();
        let s = laplacian_smooth(&m, 10, 0.5);
        let r0 = s.vertices[0].norm();
        assert!(r0 < 1.0);
        assert!(s.vertices.iter().all(|v| (v.norm() - r0).abs() < 1e-12));
    }

    #[test]
    fn smoothing_damps_high_frequency_bumps() {
        let base = make_icosphere(4).mesh;
        let bumpy = base.transformed(|p| {
            let (theta, phi) = (p.y.atan2(p.x), p.z.clamp(-1.0, 1.0).acos());
            p * (1.0 + 0.05 * (12.0 * theta).sin() * phi.sin().powi(2) * (9.0 * phi).cos())
        });
        let deviation = |m: &TriangleMesh| {
            let r: Vec<f64> = m.vertices.iter().map(|v| v.norm()).collect();
            let mean = r.iter().sum::<f64>() / r.len() as f64;
            r.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max)
        };
        let smoothed = laplacian_smooth(&bumpy, 20, 0.5);
        assert!(deviation(&bumpy) >= 5.0 * deviation(&smoothed));
        assert_eq!(smoothed.faces, bumpy.faces);
        assert_eq!(
            validate_topology(&smoothed).euler_characteristic,
            validate_topology(&bumpy).euler_characteristic
        );
    }

    #[test]
    fn locate_vertex_and_centroid_directions() {
        let s = make_icosphere(1).mesh;
        let loc = SphereLocator::new(s.clone());
        let (f, b) = loc.locate_direction(&s.vertices[7]).unwrap();
        assert!(s.faces[f].contains(&7));
        assert!(b.iter().any(|&w| (w - 1.0).abs() < 1e-9));
        for face in 0..s.face_count() {
            let [a, b, c] = s.triangle(face);
            let (f, bary) = loc.locate_direction(&((a + b + c) / 3.0).normalize()).unwrap();
            assert_eq!(f, face);
            assert!(bary.iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-9));
        }
    }

    #[test]
    fn correspondence_is_barycentric() {
        let sphere = make_icosphere(2).mesh;
        let original = sphere.transformed(|p| p * 2.0 + Vec3::x());
        let coarse = laplacian_smooth(&original, 5, 0.5);
        let shape = ParameterizedShape::new(original.clone(), sphere.clone(), coarse).unwrap();
        let [a, _, _] = original.faces[3];
        assert_eq!(shape.correspond(Target::Original, 3, [1.0, 0.0, 0.0]), original.vertices[a]);
        let t = original.triangle(3);
        let c = shape.correspond(Target::Original, 3, [1.0 / 3.0; 3]);
        assert!((c - (t[0] + t[1] + t[2]) / 3.0).norm() < 1e-12);
        // Affine in the weights.
        let (b1, b2) = ([0.2, 0.3, 0.5], [0.6, 0.1, 0.3]);
        let mix = [0.5 * (b1[0] + b2[0]), 0.5 * (b1[1] + b2[1]), 0.5 * (b1[2] + b2[2])];
        for target in [Target::Original, Target::Coarse] {
            let lhs = shape.correspond(target, 9, mix);
            let rhs = (shape.correspond(target, 9, b1) + shape.correspond(target, 9, b2)) * 0.5;
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn identity_shape_self_maps() {
        let sphere = make_icosphere(2).mesh;
        let shape = ParameterizedShape::new(sphere.clone(), sphere.clone(), sphere.clone()).unwrap();
        let b = [0.1, 0.7, 0.2];
        assert_eq!(
            shape.correspond(Target::Original, 11, b),
            sphere.interpolate(11, b)
        );
    }

    #[test]
    fn locate_round_trip_recovers_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let m = make_icosphere(3)
            .mesh
            .transformed(|p| p * (1.0 + rng.gen_range(-0.05..0.05)));
        let s = spherical_parameterize(&m, &ParamOptions::default()).unwrap();
        let loc = SphereLocator::new(s.clone());
        for sample in mesh::sample_surface_uniform(&s, 2000, 4) {
            if sample.barycentric.iter().any(|&w| w < 1e-3) {
                continue;
            }
            let (f, b) = loc.locate_direction(&sample.position.normalize()).unwrap();
            assert_eq!(f, sample.face_index);
            assert!((s.interpolate(f, b) - sample.position).norm() < 1e-5);
        }
    }
}
