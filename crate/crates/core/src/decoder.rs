//! Mesh reconstruction from a compressed model: icosphere template, optional
//! conforming refinement where the coarse map stretches faces, then coarse
//! projection plus fine displacement.

use std::collections::{HashMap, HashSet};

use ndarray::Array2;

use crate::mesh::{Face, TriangleMesh, Vec3};
use crate::nn::{encode_batch, CompressedModel, Mlp, NnError, SurfaceMap};

/// Icosphere template; `ancestor[f]` is the level-0 face `f` descends from.
#[derive(Debug, Clone, PartialEq)]
pub struct Icosphere {
    pub mesh: TriangleMesh,
    pub level: usize,
    pub ancestor: Vec<u32>,
}

fn icosahedron() -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    TriangleMesh {
        vertices: raw.iter().map(|p| Vec3::from(*p).normalize()).collect(),
        faces,
    }
}

/// Creates (or reuses) the unit-sphere midpoint of edge `(a, b)`.
struct Midpoints {
    map: HashMap<(usize, usize), usize>,
}

impl Midpoints {
    fn new(capacity: usize) -> Self {
        Midpoints {
            map: HashMap::with_capacity(capacity),
        }
    }

    fn get(&mut self, a: usize, b: usize, vertices: &mut Vec<Vec3>) -> usize {
        let key = (a.min(b), a.max(b));
        *self.map.entry(key).or_insert_with(|| {
            vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
            vertices.len() - 1
        })
    }
}

/// 1-to-4 split keeping the winding: corners first, center last.
#[inline]
fn red_split([a, b, c]: Face, ab: usize, bc: usize, ca: usize) -> [Face; 4] {
    [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
}

/// Unit icosahedron subdivided `level` times with midpoints pushed to the
/// sphere: `10·4^k + 2` vertices, `20·4^k` faces.
pub fn make_icosphere(level: usize) -> Icosphere {
    let mut mesh = icosahedron();
    let mut ancestor: Vec<u32> = (0..20).collect();
    for _ in 0..level {
        let mut mids = Midpoints::new(mesh.faces.len() * 3 / 2);
        let mut faces = Vec::with_capacity(mesh.faces.len() * 4);
        let mut next_ancestor = Vec::with_capacity(mesh.faces.len() * 4);
        let mut vertices = std::mem::take(&mut mesh.vertices);
        vertices.reserve(mesh.faces.len() * 3 / 2);
        for (f, &[a, b, c]) in mesh.faces.iter().enumerate() {
            let ab = mids.get(a, b, &mut vertices);
            let bc = mids.get(b, c, &mut vertices);
            let ca = mids.get(c, a, &mut vertices);
            faces.extend_from_slice(&red_split([a, b, c], ab, bc, ca));
            next_ancestor.extend_from_slice(&[ancestor[f]; 4]);
        }
        mesh = TriangleMesh { vertices, faces };
        ancestor = next_ancestor;
    }
    Icosphere {
        mesh,
        level,
        ancestor,
    }
}

fn image_areas(faces: &[Face], images: &[Vec3]) -> Vec<f64> {
    faces
        .iter()
        .map(|&[a, b, c]| 0.5 * (images[b] - images[a]).cross(&(images[c] - images[a])).norm())
        .collect()
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *m
}

fn max_ratio(areas: &[f64]) -> f64 {
    let med = median(areas);
    let max = areas.iter().cloned().fold(0.0, f64::max);
    if med > 0.0 {
        max / med
    } else {
        f64::INFINITY
    }
}

/// Red-green refinement: every `red` face is split 1-to-4; faces left with
/// two or more split edges are promoted to red until stable, and faces with
/// exactly one split edge are bisected (green) so no T-junction remains.
fn conforming_split(sphere: &Icosphere, red: &[bool]) -> Icosphere {
    let faces = &sphere.mesh.faces;
    let mut red = red.to_vec();
    let mut marked: HashSet<(usize, usize)> = HashSet::new();
    let edge = |a: usize, b: usize| (a.min(b), a.max(b));
    for (f, &[a, b, c]) in faces.iter().enumerate() {
        if red[f] {
            marked.extend([edge(a, b), edge(b, c), edge(c, a)]);
        }
    }
    loop {
        let mut changed = false;
        for (f, &[a, b, c]) in faces.iter().enumerate() {
            if red[f] {
                continue;
            }
            let n = [edge(a, b), edge(b, c), edge(c, a)]
                .iter()
                .filter(|e| marked.contains(e))
                .count();
            if n >= 2 {
                red[f] = true;
                marked.extend([edge(a, b), edge(b, c), edge(c, a)]);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut vertices = sphere.mesh.vertices.clone();
    let mut mids = Midpoints::new(marked.len());
    let mut out_faces = Vec::with_capacity(faces.len() + 3 * marked.len());
    let mut ancestor = Vec::with_capacity(out_faces.capacity());
    for (f, &[a, b, c]) in faces.iter().enumerate() {
        let anc = sphere.ancestor[f];
        if red[f] {
            let ab = mids.get(a, b, &mut vertices);
            let bc = mids.get(b, c, &mut vertices);
            let ca = mids.get(c, a, &mut vertices);
            out_faces.extend_from_slice(&red_split([a, b, c], ab, bc, ca));
            ancestor.extend_from_slice(&[anc; 4]);
            continue;
        }
        // Rotate so the (single) marked edge, if any, is (i, j).
        let rotations = [[a, b, c], [b, c, a], [c, a, b]];
        match rotations.iter().find(|[i, j, _]| marked.contains(&edge(*i, *j))) {
            Some(&[i, j, k]) => {
                let m = mids.get(i, j, &mut vertices);
                out_faces.push([i, m, k]);
                out_faces.push([m, j, k]);
                ancestor.extend_from_slice(&[anc; 2]);
            }
            None => {
                out_faces.push([a, b, c]);
                ancestor.push(anc);
            }
        }
    }
    Icosphere {
        mesh: TriangleMesh {
            vertices,
            faces: out_faces,
        },
        level: sphere.level,
        ancestor,
    }
}

/// Splits faces whose image under `map` has more than `ratio_threshold`
/// times the median image area, repeating up to `max_rounds` times. A round
/// is only kept if it lowers the maximum area/median ratio.
pub fn adaptive_refine(
    sphere: &Icosphere,
    map: &dyn SurfaceMap,
    ratio_threshold: f64,
    max_rounds: usize,
) -> Icosphere {
    let mut current = sphere.clone();
    if !ratio_threshold.is_finite() {
        return current;
    }
    let mut images = map.eval_many(&current.mesh.vertices);
    let mut areas = image_areas(&current.mesh.faces, &images);
    for round in 0..max_rounds {
        let med = median(&areas);
        let flagged: Vec<bool> = areas.iter().map(|&a| a > ratio_threshold * med).collect();
        let count = flagged.iter().filter(|&&f| f).count();
        if count == 0 {
            break;
        }
        let before = max_ratio(&areas);
        let candidate = conforming_split(&current, &flagged);
        // Only the new vertices need evaluating.
        let n_old = current.mesh.vertex_count();
        let mut new_images = images.clone();
        new_images.extend(map.eval_many(&candidate.mesh.vertices[n_old..]));
        let new_areas = image_areas(&candidate.mesh.faces, &new_images);
        let after = max_ratio(&new_areas);
        log::debug!(
            "refine round {round}: {count} faces flagged, max area ratio {before:.2} -> {after:.2}"
        );
        if !(after < before) {
            break;
        }
        current = candidate;
        images = new_images;
        areas = new_areas;
    }
    current
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeOptions {
    pub level: usize,
    pub adaptive: bool,
    pub ratio_threshold: f64,
    pub max_rounds: usize,
    /// Add the fine displacement field (off gives the coarse surface alone).
    pub apply_fine: bool,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            level: 6,
            adaptive: false,
            ratio_threshold: 4.0,
            max_rounds: 3,
            apply_fine: true,
        }
    }
}

fn to_rows(points: &[Vec3]) -> Array2<f32> {
    Array2::from_shape_fn((points.len(), 3), |(i, k)| points[i][k] as f32)
}

/// Evaluates `q_c`, and optionally `q_f` on the encoded coarse points, at
/// every sphere vertex; returns positions in the normalized frame.
pub fn reconstruct_points(
    coarse: &Mlp<f32>,
    fine: Option<&Mlp<f32>>,
    sphere_points: &[Vec3],
) -> Result<Vec<Vec3>, NnError> {
    let coarse_out = coarse.forward_par(to_rows(sphere_points).view())?;
    let out = match fine {
        Some(fine) => {
            let levels = fine.architecture().positional_levels;
            let encoded = encode_batch(coarse_out.view(), levels);
            let disp = fine.forward_par(encoded.view())?;
            coarse_out + disp
        }
        None => coarse_out,
    };
    Ok(out
        .rows()
        .into_iter()
        .map(|r| Vec3::new(r[0] as f64, r[1] as f64, r[2] as f64))
        .collect())
}

/// Reconstructs a mesh in the original model frame.
pub fn decode(model: &CompressedModel, opts: &DecodeOptions) -> Result<TriangleMesh, NnError> {
    let coarse = model.coarse().to_mlp();
    let fine = model.fine().to_mlp();
    let mut sphere = make_icosphere(opts.level);
    if opts.adaptive {
        sphere = adaptive_refine(&sphere, &coarse, opts.ratio_threshold, opts.max_rounds);
    }
    let points = reconstruct_points(
        &coarse,
        opts.apply_fine.then_some(&fine),
        &sphere.mesh.vertices,
    )?;
    let norm = model.normalization();
    Ok(TriangleMesh {
        vertices: points.iter().map(|p| norm.invert(p)).collect(),
        faces: sphere.mesh.faces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::validate_topology;
    use nalgebra::Matrix3;

    struct Identity;
    impl SurfaceMap for Identity {
        fn eval(&self, p: &Vec3) -> Vec3 {
            *p
        }
        fn jacobian(&self, _: &Vec3) -> Matrix3<f64> {
            Matrix3::identity()
        }
    }

    /// Radially scales a cap around +z by 3 (about 9x area), blending to
    /// identity between polar angles 0.5 and 0.6.
    struct CapStretch;
    impl CapStretch {
        fn factor(p: &Vec3) -> f64 {
            let polar = p.z.clamp(-1.0, 1.0).acos();
            let t = ((polar - 0.5) / 0.1).clamp(0.0, 1.0);
            3.0 * (1.0 - t) + t
        }
    }
    impl SurfaceMap for CapStretch {
        fn eval(&self, p: &Vec3) -> Vec3 {
            p * Self::factor(p)
        }
        fn jacobian(&self, _: &Vec3) -> Matrix3<f64> {
            unimplemented!("not needed for refinement")
        }
    }

    #[test]
    fn icosphere_counts_follow_closed_form() {
        for k in 0..=5 {
            let s = make_icosphere(k);
            let p = 4usize.pow(k as u32);
            assert_eq!(s.mesh.vertex_count(), 10 * p + 2);
            assert_eq!(s.mesh.face_count(), 20 * p);
            assert_eq!(s.ancestor.len(), s.mesh.face_count());
            let t = validate_topology(&s.mesh);
            assert!(t.is_watertight);
            assert_eq!(t.euler_characteristic, 2);
            assert!(s.mesh.vertices.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        }
        assert_eq!(make_icosphere(3).mesh.vertex_count(), 642);
    }

    #[test]
    fn icosphere_faces_point_outward() {
        let s = make_icosphere(2).mesh;
        for f in 0..s.face_count() {
            let [a, b, c] = s.triangle(f);
            assert!(s.face_cross(f).dot(&(a + b + c)) > 0.0);
        }
    }

    #[test]
    fn ancestors_are_consistent() {
        let s = make_icosphere(2);
        for (f, &anc) in s.ancestor.iter().enumerate() {
            assert_eq!(anc as usize, f / 16);
        }
    }

    #[test]
    fn identity_map_needs_no_refinement() {
        let s = make_icosphere(3);
        assert_eq!(adaptive_refine(&s, &Identity, 4.0, 3), s);
        assert_eq!(adaptive_refine(&s, &CapStretch, f64::INFINITY, 3), s);
    }

    #[test]
    fn stretched_cap_is_refined_conformingly() {
        let s = make_icosphere(3);
        let r = adaptive_refine(&s, &CapStretch, 4.0, 3);
        assert!(r.mesh.face_count() > s.mesh.face_count());
        let t = validate_topology(&r.mesh);
        assert!(t.is_watertight);
        assert_eq!(t.euler_characteristic, 2);
        // Every new vertex lies in or next to the stretched cap.
        for v in &r.mesh.vertices[s.mesh.vertex_count()..] {
            assert!(v.z.acos() < 0.9, "refined outside the cap at polar {}", v.z.acos());
        }
        // Original faces away from the cap survive untouched.
        let kept: HashSet<Face> = r.mesh.faces.iter().cloned().collect();
        for (f, face) in s.mesh.faces.iter().enumerate() {
            let [a, b, c] = s.mesh.triangle(f);
            if ((a + b + c) / 3.0).normalize().z.acos() > 1.0 {
                assert!(kept.contains(face));
            }
        }
    }

    #[test]
    fn conforming_split_handles_isolated_faces() {
        let s = make_icosphere(1);
        let mut red = vec![false; s.mesh.face_count()];
        red[0] = true;
        red[40] = true;
        let r = conforming_split(&s, &red);
        let t = validate_topology(&r.mesh);
        assert!(t.is_watertight);
        assert_eq!(t.euler_characteristic, 2);
        // Each red face gains 3 faces; each of its 3 neighbours gains 1.
        assert_eq!(r.mesh.face_count(), s.mesh.face_count() + 2 * (3 + 3));
    }
}
