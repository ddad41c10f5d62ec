//! Reconstruction quality: mean point-to-mesh distance and mean normal
//! deviation, estimated from uniform surface samples.

use rayon::prelude::*;
use serde::Serialize;

use crate::mesh::{closest_point, sample_surface_uniform, Bvh, TriangleMesh};

pub const DEFAULT_SAMPLES: usize = 100_000;

/// Reported point-to-mesh values are scaled by this factor.
pub const D_PM_SCALE: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ReconToRef,
    RefToRecon,
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    /// Mean closest-point distance, in model units.
    pub d_pm_mean: f64,
    pub d_n_mean_degrees: f64,
    pub n_samples: usize,
    pub direction: Direction,
}

impl MetricsReport {
    pub fn d_pm_scaled(&self) -> f64 {
        self.d_pm_mean * D_PM_SCALE
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        format!(
            "d_pm_mean = {:e}\nd_pm_x1e4 = {:.4}\nd_n_mean_degrees = {:.4}\nn_samples = {}\ndirection = {:?}\n",
            self.d_pm_mean,
            self.d_pm_scaled(),
            self.d_n_mean_degrees,
            self.n_samples,
            self.direction
        )
    }
}

/// Per-direction sums from one sampling pass.
#[derive(Debug, Clone, Copy)]
struct OneSided {
    mean_distance: f64,
    mean_angle: f64,
    max_distance: f64,
}

fn one_sided(source: &TriangleMesh, reference: &TriangleMesh, n: usize, seed: u64) -> OneSided {
    if n == 0 || source.face_count() == 0 {
        return OneSided {
            mean_distance: 0.0,
            mean_angle: 0.0,
            max_distance: 0.0,
        };
    }
    let bvh = Bvh::build(reference);
    let samples = sample_surface_uniform(source, n, seed);
    let per_sample: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|s| {
            let hit = closest_point(&bvh, reference, &s.position)
                .expect("reference mesh has at least one face");
            let ns = source.face_normal(s.face_index);
            let nr = reference.face_normal(hit.face_index);
            let angle = ns.dot(&nr).clamp(-1.0, 1.0).acos().to_degrees();
            (hit.distance, angle)
        })
        .collect();
    let count = per_sample.len() as f64;
    OneSided {
        mean_distance: per_sample.iter().map(|p| p.0).sum::<f64>() / count,
        mean_angle: per_sample.iter().map(|p| p.1).sum::<f64>() / count,
        max_distance: per_sample.iter().map(|p| p.0).fold(0.0, f64::max),
    }
}

/// Mean distance from `n` uniform samples of `source` to `reference`.
pub fn point_to_mesh_error(source: &TriangleMesh, reference: &TriangleMesh, n: usize, seed: u64) -> f64 {
    one_sided(source, reference, n, seed).mean_distance
}

/// Mean angle (degrees) between the source face normal at each sample and
/// the reference face normal at its closest point.
pub fn normal_error(source: &TriangleMesh, reference: &TriangleMesh, n: usize, seed: u64) -> f64 {
    one_sided(source, reference, n, seed).mean_angle
}

/// Sampled Hausdorff distance: the larger of the two one-sided maxima.
pub fn hausdorff_estimate(a: &TriangleMesh, b: &TriangleMesh, n: usize, seed: u64) -> f64 {
    one_sided(a, b, n, seed)
        .max_distance
        .max(one_sided(b, a, n, seed).max_distance)
}

/// Both metrics in the requested direction. The symmetric mode averages the
/// two directions, each sampled with the same seed.
pub fn evaluate(
    recon: &TriangleMesh,
    reference: &TriangleMesh,
    n: usize,
    seed: u64,
    direction: Direction,
) -> MetricsReport {
    let (d_pm, d_n) = match direction {
        Direction::ReconToRef => {
            let r = one_sided(recon, reference, n, seed);
            (r.mean_distance, r.mean_angle)
        }
        Direction::RefToRecon => {
            let r = one_sided(reference, recon, n, seed);
            (r.mean_distance, r.mean_angle)
        }
        Direction::Symmetric => {
            let a = one_sided(recon, reference, n, seed);
            let b = one_sided(reference, recon, n, seed);
            (
                0.5 * (a.mean_distance + b.mean_distance),
                0.5 * (a.mean_angle + b.mean_angle),
            )
        }
    };
    MetricsReport {
        d_pm_mean: d_pm,
        d_n_mean_degrees: d_n,
        n_samples: n,
        direction,
    }
}
