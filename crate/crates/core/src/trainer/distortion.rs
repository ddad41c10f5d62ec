//! Metric distortion of a sphere-to-surface map, and the face sampler built
//! from it.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use rand::Rng;
use rayon::prelude::*;

use super::TrainError;
use crate::decoder::{make_icosphere, Icosphere};
use crate::mesh::{uniform_barycentric, FaceSampler, Vec3};
use crate::nn::SurfaceMap;

/// Floor on `sin^2 v` so the ratio stays finite at the poles.
pub const POLE_EPS: f64 = 1e-12;

/// Spherical coordinates `(u, v)` with azimuth `u` in `[0, 2 pi)` and polar
/// angle `v` in `[0, pi]`. At the poles `u` is 0.
pub fn sphere_uv(p: &Vec3) -> (f64, f64) {
    let p = p.normalize();
    let v = p.z.clamp(-1.0, 1.0).acos();
    let u = if p.x == 0.0 && p.y == 0.0 {
        0.0
    } else {
        let a = p.y.atan2(p.x);
        if a < 0.0 {
            a + 2.0 * PI
        } else {
            a
        }
    };
    (u, v)
}

pub fn sphere_point(u: f64, v: f64) -> Vec3 {
    Vec3::new(v.sin() * u.cos(), v.sin() * u.sin(), v.cos())
}

/// First fundamental form of `map` composed with the spherical chart.
pub fn metric_tensor(map: &dyn SurfaceMap, u: f64, v: f64) -> Matrix2<f64> {
    let j = map.jacobian(&sphere_point(u, v));
    let (su, cu, sv, cv) = (u.sin(), u.cos(), v.sin(), v.cos());
    let du = Vec3::new(-sv * su, sv * cu, 0.0);
    let dv = Vec3::new(cv * cu, cv * su, -sv);
    let qu = j * du;
    let qv = j * dv;
    let f = qu.dot(&qv);
    Matrix2::new(qu.dot(&qu), f, f, qv.dot(&qv))
}

/// Area stretch of the map relative to the sphere's own area element.
pub fn distortion_ratio(metric: &Matrix2<f64>, v: f64) -> f64 {
    let det = metric.determinant().max(0.0);
    (det / v.sin().powi(2).max(POLE_EPS)).sqrt()
}

/// Per-face sampling weights on an icosphere, proportional to the
/// distortion ratio at each face's (projected) centroid.
#[derive(Debug, Clone)]
pub struct DistortionTable {
    pub icosphere: Icosphere,
    pub ratios: Vec<f64>,
    sampler: FaceSampler,
}

impl DistortionTable {
    pub fn probability(&self, face: usize) -> f64 {
        self.sampler.probability(face)
    }

    pub fn draw_face<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler.draw(rng)
    }

    /// A direction on the unit sphere: weighted face, then a uniform
    /// barycentric point projected outward.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        let f = self.draw_face(rng);
        let b = uniform_barycentric(rng);
        self.icosphere.mesh.interpolate(f, b).normalize()
    }
}

fn face_center(sphere: &Icosphere, face: usize) -> Vec3 {
    let [a, b, c] = sphere.mesh.triangle(face);
    ((a + b + c) / 3.0).normalize()
}

/// Distortion ratio at every face of a level-`level` icosphere. With
/// `area_weighted` each weight is also multiplied by the face's area.
pub fn build_distortion_table(
    map: &dyn SurfaceMap,
    level: usize,
    area_weighted: bool,
) -> Result<DistortionTable, TrainError> {
    let icosphere = make_icosphere(level);
    let ratios: Vec<f64> = (0..icosphere.mesh.face_count())
        .into_par_iter()
        .map(|f| {
            let (u, v) = sphere_uv(&face_center(&icosphere, f));
            distortion_ratio(&metric_tensor(map, u, v), v)
        })
        .collect();
    let weights: Vec<f64> = if area_weighted {
        ratios
            .iter()
            .enumerate()
            .map(|(f, r)| r * icosphere.mesh.face_area(f))
            .collect()
    } else {
        ratios.clone()
    };
    let sampler = FaceSampler::new(&weights).ok_or(TrainError::DegenerateDistortion)?;
    Ok(DistortionTable {
        icosphere,
        ratios,
        sampler,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Linear(Matrix3<f64>);

    impl SurfaceMap for Linear {
        fn eval(&self, p: &Vec3) -> Vec3 {
            self.0 * p
        }
        fn jacobian(&self, _: &Vec3) -> Matrix3<f64> {
            self.0
        }
    }

    #[test]
    fn uv_round_trip() {
        for (u, v) in [(0.3, 0.2), (3.0, 1.5), (6.0, 2.9), (1e-3, 3.1)] {
            let (u2, v2) = sphere_uv(&sphere_point(u, v));
            assert!((u - u2).abs() < 1e-12 && (v - v2).abs() < 1e-12);
        }
        assert_eq!(sphere_uv(&Vec3::new(0.0, 0.0, -2.0)), (0.0, PI));
    }

    #[test]
    fn identity_metric_is_round_sphere() {
        let id = Linear(Matrix3::identity());
        for v in [0.1, 0.7, 1.5, 2.8] {
            let m = metric_tensor(&id, 0.9, v);
            assert!((m[(0, 0)] - v.sin().powi(2)).abs() < 1e-12);
            assert!(m[(0, 1)].abs() < 1e-12);
            assert!((m[(1, 1)] - 1.0).abs() < 1e-12);
            assert!((distortion_ratio(&m, v) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_scale_multiplies_ratio_by_square() {
        let s = Linear(Matrix3::identity() * 2.0);
        let m = metric_tensor(&s, 2.0, 1.1);
        assert!((distortion_ratio(&m, 1.1) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn axis_stretch_matches_projected_area_oracle() {
        // diag(1, 1, 3) stretches area by |M^{-T} n| det M at unit normal n.
        let m = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, 3.0));
        let map = Linear(m);
        for (u, v) in [(0.4, 0.3), (2.0, 1.2), (5.0, 2.5)] {
            let n = sphere_point(u, v);
            let oracle = m.determinant() * (m.try_inverse().unwrap().transpose() * n).norm();
            let got = distortion_ratio(&metric_tensor(&map, u, v), v);
            assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
        }
    }

    #[test]
    fn pole_ratio_is_finite() {
        let id = Linear(Matrix3::identity());
        let m = metric_tensor(&id, 0.0, 0.0);
        assert!(distortion_ratio(&m, 0.0).is_finite());
    }

    #[test]
    fn identity_table_is_near_uniform() {
        let t = build_distortion_table(&Linear(Matrix3::identity()), 2, false).unwrap();
        let n = t.icosphere.mesh.face_count() as f64;
        for f in 0..t.icosphere.mesh.face_count() {
            assert!((t.probability(f) * n - 1.0).abs() < 1e-9);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert!((t.draw(&mut rng).norm() - 1.0).abs() < 1e-12);
        }
    }
}
