use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{TriangleMesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub face_index: usize,
    pub barycentric: [f64; 3],
    pub position: Vec3,
}

/// Draws indices with probability proportional to non-negative weights
/// (inverse-CDF lookup by binary search).
#[derive(Debug, Clone)]
pub struct FaceSampler {
    cumulative: Vec<f64>,
}

impl FaceSampler {
    /// `None` if the weights are empty, contain a negative/non-finite value
    /// or sum to zero.
    pub fn new(weights: &[f64]) -> Option<Self> {
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(weights.len());
        for &w in weights {
            if !(w >= 0.0) || !w.is_finite() {
                return None;
            }
            acc += w;
            cumulative.push(acc);
        }
        if !(acc > 0.0) {
            return None;
        }
        for c in &mut cumulative {
            *c /= acc;
        }
        let last = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
        for c in &mut cumulative[last..] {
            *c = 1.0;
        }
        Some(Self { cumulative })
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn probability(&self, index: usize) -> f64 {
        let lo = if index == 0 { 0.0 } else { self.cumulative[index - 1] };
        self.cumulative[index] - lo
    }

    /// Maps a uniform `u` in [0, 1) to an index.
    pub fn pick(&self, u: f64) -> usize {
        let i = self.cumulative.partition_point(|&c| c <= u);
        // Skip zero-weight entries that share the same cumulative value.
        i.min(self.cumulative.len() - 1)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.pick(rng.gen::<f64>())
    }
}

/// Uniform point in a triangle via the square-root transform.
#[inline]
pub fn uniform_barycentric<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let r1: f64 = rng.gen();
    let r2: f64 = rng.gen();
    let s = r1.sqrt();
    [1.0 - s, s * (1.0 - r2), s * r2]
}

/// Area-weighted uniform samples on the surface; deterministic for a seed.
pub fn sample_surface_uniform(mesh: &TriangleMesh, n: usize, seed: u64) -> Vec<SurfaceSample> {
    let Some(sampler) = FaceSampler::new(&mesh.face_areas()) else {
        return Vec::new();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let face_index = sampler.draw(&mut rng);
            let barycentric = uniform_barycentric(&mut rng);
            SurfaceSample {
                face_index,
                barycentric,
                position: mesh.interpolate(face_index, barycentric),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::tests::icosahedron;

    fn two_faces() -> TriangleMesh {
        // Areas 1 and 3.
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(10.0, 0.0, 0.0),
            Vec3::new(13.0, 0.0, 0.0),
            Vec3::new(10.0, 2.0, 0.0),
        ];
        TriangleMesh::new(v, vec![[0, 1, 2], [3, 4, 5]]).unwrap()
    }

    #[test]
    fn face_frequency_follows_area() {
        let m = two_faces();
        assert!((m.face_area(0) - 1.0).abs() < 1e-12);
        assert!((m.face_area(1) - 3.0).abs() < 1e-12);
        let n = 1_000_000;
        let s = sample_surface_uniform(&m, n, 7);
        let hits = s.iter().filter(|s| s.face_index == 1).count();
        // Binomial std at p = 0.75 is ~4.3e-4, so 0.002 is > 4 sigma.
        assert!((hits as f64 / n as f64 - 0.75).abs() < 0.002);
    }

    #[test]
    fn barycentric_mean_is_centroid() {
        let m = TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let s = sample_surface_uniform(&m, 100_000, 3);
        let mut mean = [0.0; 3];
        for x in &s {
            for k in 0..3 {
                assert!(x.barycentric[k] >= 0.0);
                mean[k] += x.barycentric[k] / s.len() as f64;
            }
            let sum: f64 = x.barycentric.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            let p = m.interpolate(x.face_index, x.barycentric);
            assert!((p - x.position).norm() <= 1e-6 * p.norm().max(1.0));
        }
        for k in mean {
            assert!((k - 1.0 / 3.0).abs() < 0.01);
        }
    }

    #[test]
    fn same_seed_same_samples() {
        let m = icosahedron();
        assert_eq!(sample_surface_uniform(&m, 500, 11), sample_surface_uniform(&m, 500, 11));
        assert_ne!(sample_surface_uniform(&m, 500, 11), sample_surface_uniform(&m, 500, 12));
    }

    #[test]
    fn sampler_rejects_bad_weights_and_skips_zeros() {
        assert!(FaceSampler::new(&[]).is_none());
        assert!(FaceSampler::new(&[0.0, 0.0]).is_none());
        assert!(FaceSampler::new(&[1.0, -1.0]).is_none());
        assert!(FaceSampler::new(&[1.0, f64::NAN]).is_none());
        let s = FaceSampler::new(&[0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        for i in 0..1000 {
            let k = s.pick(i as f64 / 1000.0);
            assert!(k == 1 || k == 3, "picked zero-weight index {k}");
        }
        assert!((s.probability(3) - 0.5).abs() < 1e-15);
    }
}
