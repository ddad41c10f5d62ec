use ndarray::{Array2, ArrayView2};

use super::Real;

/// `[x, y, z, sin(2^0 pi x), cos(2^0 pi x), sin(2^0 pi y), ..., cos(2^(L-1) pi z)]`.
pub fn positional_encode<T: Real>(point: [T; 3], levels: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(3 + 6 * levels);
    out.extend_from_slice(&point);
    for level in 0..levels {
        let freq = T::of(std::f64::consts::PI * (1u64 << level) as f64);
        for &x in &point {
            let (s, c) = (freq * x).sin_cos();
            out.push(s);
            out.push(c);
        }
    }
    out
}

/// Row-wise [`positional_encode`] of an `n x 3` batch.
pub fn encode_batch<T: Real>(points: ArrayView2<T>, levels: usize) -> Array2<T> {
    let width = 3 + 6 * levels;
    let mut out = Array2::zeros((points.nrows(), width));
    for (src, mut dst) in points.rows().into_iter().zip(out.rows_mut()) {
        let enc = positional_encode([src[0], src[1], src[2]], levels);
        dst.as_slice_mut().unwrap().copy_from_slice(&enc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_levels_is_identity() {
        assert_eq!(positional_encode([0.1, 0.2, 0.3], 0), vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn origin_encodes_to_zero_sines_and_unit_cosines() {
        let e = positional_encode([0.0f64; 3], 10);
        assert_eq!(e.len(), 63);
        for (k, v) in e.iter().enumerate().skip(3) {
            let expect = if (k - 3) % 2 == 0 { 0.0 } else { 1.0 };
            assert_eq!(*v, expect);
        }
    }

    #[test]
    fn unit_x_closed_form() {
        let e = positional_encode([1.0f64, 0.0, 0.0], 2);
        assert_eq!(e.len(), 15);
        let pi = std::f64::consts::PI;
        // x slots at level 0: 3, 4; level 1: 9, 10.
        assert!((e[3] - pi.sin()).abs() < 1e-15 && e[3].abs() < 1e-15);
        assert!((e[4] + 1.0).abs() < 1e-15);
        assert!(e[9].abs() < 1e-15);
        assert!((e[10] - 1.0).abs() < 1e-15);
        // y and z slots are sin(0) = 0, cos(0) = 1.
        assert_eq!((e[5], e[6], e[7], e[8]), (0.0, 1.0, 0.0, 1.0));
    }

    #[test]
    fn batch_matches_pointwise() {
        let pts = array![[0.1f32, -0.4, 0.25], [0.0, 0.5, -0.5]];
        let b = encode_batch(pts.view(), 3);
        for (i, row) in pts.rows().into_iter().enumerate() {
            let e = positional_encode([row[0], row[1], row[2]], 3);
            assert_eq!(b.row(i).to_vec(), e);
        }
    }
}
