use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{NnError, Real};

/// Rows per worker chunk for batched inference. Fixed so results do not
/// depend on the thread count.
const INFERENCE_CHUNK: usize = 2048;

/// Residual MLP shape: `input -> W` then `H - 1` residual `W -> W` blocks,
/// then `W -> 3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub output_dim: usize,
    /// Positional-encoding frequency levels applied to the 3D input (0 = none).
    pub positional_levels: usize,
}

impl MlpArchitecture {
    /// The coarse network: 20 layers of 12 units on raw sphere points.
    pub const COARSE: MlpArchitecture = MlpArchitecture {
        input_dim: 3,
        hidden_layers: 20,
        hidden_width: 12,
        output_dim: 3,
        positional_levels: 0,
    };

    pub fn new(hidden_layers: usize, hidden_width: usize, positional_levels: usize) -> Self {
        MlpArchitecture {
            input_dim: 3 + 6 * positional_levels,
            hidden_layers,
            hidden_width,
            output_dim: 3,
            positional_levels,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::InvalidArchitecture(m.to_string()));
        if self.hidden_layers == 0 || self.hidden_width == 0 {
            return bad("hidden layers and width must be positive");
        }
        if self.output_dim != 3 {
            return bad("output dimension must be 3");
        }
        if self.input_dim != 3 + 6 * self.positional_levels {
            return bad("input dimension must equal 3 + 6 * positional levels");
        }
        Ok(())
    }

    /// `(rows, cols)` of every weight matrix, in evaluation order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let w = self.hidden_width;
        let mut shapes = vec![(w, self.input_dim)];
        shapes.extend(std::iter::repeat((w, w)).take(self.hidden_layers - 1));
        shapes.push((self.output_dim, w));
        shapes
    }

    pub fn param_count(&self) -> usize {
        let (i, h, w, o) = (
            self.input_dim,
            self.hidden_layers,
            self.hidden_width,
            self.output_dim,
        );
        (i * w + w) + (h - 1) * (w * w + w) + (o * w + o)
    }
}

/// One affine layer; `weight` is `out x in`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Dense<T> {
    fn zeros(rows: usize, cols: usize) -> Self {
        Dense {
            weight: Array2::zeros((rows, cols)),
            bias: Array1::zeros(rows),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    arch: MlpArchitecture,
    pub layers: Vec<Dense<T>>,
}

/// Parameter-shaped container for dL/dθ.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn slices(&self) -> Vec<&[T]> {
        layer_slices(&self.layers)
    }
}

fn layer_slices<T>(layers: &[Dense<T>]) -> Vec<&[T]> {
    layers
        .iter()
        .flat_map(|l| [l.weight.as_slice().unwrap(), l.bias.as_slice().unwrap()])
        .collect()
}

#[inline]
fn sigmoid<T: Real>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

#[inline]
fn silu<T: Real>(z: T) -> T {
    z * sigmoid(z)
}

#[inline]
fn silu_prime<T: Real>(z: T) -> T {
    let s = sigmoid(z);
    s * (T::one() + z * (T::one() - s))
}

/// `x W^T + b` for a row batch.
fn affine<T: Real>(x: &ArrayView2<T>, layer: &Dense<T>) -> Array2<T> {
    let mut z = Array2::zeros((x.nrows(), layer.weight.nrows()));
    general_mat_mul(T::one(), x, &layer.weight.t(), T::zero(), &mut z);
    z += &layer.bias;
    z
}

impl<T: Real> Mlp<T> {
    /// Uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)) weights and zero biases.
    /// Residual-block weights are further scaled by `1/sqrt(H-1)` and the
    /// output layer by 1e-2, so the network starts near zero.
    pub fn new(arch: MlpArchitecture, seed: u64) -> Result<Self, NnError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = arch.layer_shapes();
        let last = shapes.len() - 1;
        let residual_scale = 1.0 / ((arch.hidden_layers.max(2) - 1) as f64).sqrt();
        let layers = shapes
            .iter()
            .enumerate()
            .map(|(k, &(rows, cols))| {
                let bound = (6.0 / cols as f64).sqrt();
                let scale = if k == last {
                    1e-2
                } else if k > 0 {
                    residual_scale
                } else {
                    1.0
                };
                let weight = Array2::from_shape_fn((rows, cols), |_| {
                    T::of(rng.gen_range(-bound..bound) * scale)
                });
                Dense {
                    weight,
                    bias: Array1::zeros(rows),
                }
            })
            .collect();
        Ok(Mlp { arch, layers })
    }

    pub fn zeros(arch: MlpArchitecture) -> Result<Self, NnError> {
        arch.validate()?;
        let layers = arch
            .layer_shapes()
            .iter()
            .map(|&(r, c)| Dense::zeros(r, c))
            .collect();
        Ok(Mlp { arch, layers })
    }

    /// Rebuilds a network from parameters in serialization order
    /// (layer-major, weights row-major then biases).
    pub fn from_flat(arch: MlpArchitecture, params: &[T]) -> Result<Self, NnError> {
        let mut mlp = Self::zeros(arch)?;
        if params.len() != arch.param_count() {
            return Err(NnError::InvalidArchitecture(format!(
                "expected {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        let mut cursor = 0;
        for s in mlp.slices_mut() {
            s.copy_from_slice(&params[cursor..cursor + s.len()]);
            cursor += s.len();
        }
        Ok(mlp)
    }

    pub fn architecture(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn param_count(&self) -> usize {
        self.arch.param_count()
    }

    pub fn slices(&self) -> Vec<&[T]> {
        layer_slices(&self.layers)
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().unwrap(),
                    l.bias.as_slice_mut().unwrap(),
                ]
            })
            .collect()
    }

    pub fn flat(&self) -> Vec<T> {
        self.slices().concat()
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp {
            arch: self.arch,
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: l.weight.mapv(|v| U::of(v.to_f64_lossless())),
                    bias: l.bias.mapv(|v| U::of(v.to_f64_lossless())),
                })
                .collect(),
        }
    }

    fn check_width(&self, cols: usize) -> Result<(), NnError> {
        if cols != self.arch.input_dim {
            return Err(NnError::DimensionMismatch {
                expected: self.arch.input_dim,
                got: cols,
            });
        }
        Ok(())
    }

    /// Evaluates a batch of rows: `n x input_dim -> n x 3`.
    pub fn forward(&self, batch: ArrayView2<T>) -> Result<Array2<T>, NnError> {
        self.check_width(batch.ncols())?;
        let out = self.forward_unchecked(batch);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite("network output"));
        }
        Ok(out)
    }

    fn forward_unchecked(&self, batch: ArrayView2<T>) -> Array2<T> {
        let h = self.arch.hidden_layers;
        let mut x = affine(&batch, &self.layers[0]);
        x.mapv_inplace(silu);
        for layer in &self.layers[1..h] {
            let mut z = affine(&x.view(), layer);
            z.mapv_inplace(silu);
            x += &z;
        }
        affine(&x.view(), &self.layers[h])
    }

    /// Same as [`Mlp::forward`], split into fixed-size row chunks evaluated
    /// in parallel. Output is identical for any worker count.
    pub fn forward_par(&self, batch: ArrayView2<T>) -> Result<Array2<T>, NnError> {
        self.check_width(batch.ncols())?;
        let n = batch.nrows();
        if n <= INFERENCE_CHUNK {
            return self.forward(batch);
        }
        let chunks: Vec<Array2<T>> = (0..n)
            .step_by(INFERENCE_CHUNK)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|start| {
                let end = (start + INFERENCE_CHUNK).min(n);
                self.forward_unchecked(batch.slice(ndarray::s![start..end, ..]))
            })
            .collect();
        let views: Vec<_> = chunks.iter().map(|c| c.view()).collect();
        let out = ndarray::concatenate(Axis(0), &views).expect("chunks share width");
        if out.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite("network output"));
        }
        Ok(out)
    }

    /// Mean squared Euclidean error over the batch and its exact gradient.
    pub fn forward_backward(
        &self,
        batch: ArrayView2<T>,
        targets: ArrayView2<T>,
    ) -> Result<(T, Gradients<T>), NnError> {
        self.check_width(batch.ncols())?;
        if targets.ncols() != self.arch.output_dim || targets.nrows() != batch.nrows() {
            return Err(NnError::DimensionMismatch {
                expected: self.arch.output_dim,
                got: targets.ncols(),
            });
        }
        let n = batch.nrows();
        let h = self.arch.hidden_layers;

        // acts[i]: output of hidden layer i; slopes[i]: silu'(z_i).
        let mut acts: Vec<Array2<T>> = Vec::with_capacity(h);
        let mut slopes: Vec<Array2<T>> = Vec::with_capacity(h);
        for (i, layer) in self.layers[..h].iter().enumerate() {
            let z = if i == 0 {
                affine(&batch, layer)
            } else {
                affine(&acts[i - 1].view(), layer)
            };
            slopes.push(z.mapv(silu_prime));
            let mut a = z;
            a.mapv_inplace(silu);
            if i > 0 {
                a += &acts[i - 1];
            }
            acts.push(a);
        }
        let out = affine(&acts[h - 1].view(), &self.layers[h]);

        let mut g = out - &targets;
        let loss = g.iter().map(|&e| e * e).sum::<T>() / T::of(n as f64);
        if !loss.is_finite() {
            return Err(NnError::NonFinite("loss"));
        }
        g.mapv_inplace(|e| e * T::of(2.0 / n as f64));

        let mut grads: Vec<Dense<T>> = self
            .layers
            .iter()
            .map(|l| Dense::zeros(l.weight.nrows(), l.weight.ncols()))
            .collect();

        general_mat_mul(T::one(), &g.t(), &acts[h - 1], T::zero(), &mut grads[h].weight);
        grads[h].bias = g.sum_axis(Axis(0));
        let mut gx = g.dot(&self.layers[h].weight);

        for i in (0..h).rev() {
            let gz = &gx * &slopes[i];
            let input = if i == 0 { batch.view() } else { acts[i - 1].view() };
            general_mat_mul(T::one(), &gz.t(), &input, T::zero(), &mut grads[i].weight);
            grads[i].bias = gz.sum_axis(Axis(0));
            if i > 0 {
                // Residual path carries gx through unchanged.
                general_mat_mul(T::one(), &gz, &self.layers[i].weight, T::one(), &mut gx);
            }
        }
        Ok((loss, Gradients { layers: grads }))
    }

    /// Exact `3 x input_dim` Jacobian of the output w.r.t. the input,
    /// propagating all input tangents forward at once.
    pub fn input_jacobian(&self, point: ArrayView1<T>) -> Result<Array2<T>, NnError> {
        self.check_width(point.len())?;
        let h = self.arch.hidden_layers;
        let first = &self.layers[0];
        let z = first.weight.dot(&point) + &first.bias;
        // tangent: width x input_dim
        let mut tangent = &first.weight * &z.mapv(silu_prime).insert_axis(Axis(1));
        let mut y = z.mapv(silu);
        for layer in &self.layers[1..h] {
            let z = layer.weight.dot(&y) + &layer.bias;
            let wt = layer.weight.dot(&tangent);
            tangent = tangent + wt * &z.mapv(silu_prime).insert_axis(Axis(1));
            y = y + z.mapv(silu);
        }
        Ok(self.layers[h].weight.dot(&tangent))
    }
}

impl<T: Real> super::SurfaceMap for Mlp<T> {
    fn eval(&self, p: &crate::mesh::Vec3) -> crate::mesh::Vec3 {
        let row = Array2::from_shape_fn((1, 3), |(_, k)| T::of(p[k]));
        let out = self.forward_unchecked(row.view());
        crate::mesh::Vec3::new(
            out[[0, 0]].to_f64_lossless(),
            out[[0, 1]].to_f64_lossless(),
            out[[0, 2]].to_f64_lossless(),
        )
    }

    fn jacobian(&self, p: &crate::mesh::Vec3) -> nalgebra::Matrix3<f64> {
        let x = Array1::from_shape_fn(3, |k| T::of(p[k]));
        let j = self
            .input_jacobian(x.view())
            .expect("surface maps take 3D input");
        nalgebra::Matrix3::from_fn(|r, c| j[[r, c]].to_f64_lossless())
    }

    fn eval_many(&self, points: &[crate::mesh::Vec3]) -> Vec<crate::mesh::Vec3> {
        let batch = Array2::from_shape_fn((points.len(), 3), |(i, k)| T::of(points[i][k]));
        let out = match self.forward_par(batch.view()) {
            Ok(out) => out,
            // Non-finite outputs are passed through and surface downstream.
            Err(_) => {
                let chunks: Vec<_> = batch
                    .axis_chunks_iter(Axis(0), INFERENCE_CHUNK)
                    .map(|c| self.forward_unchecked(c))
                    .collect();
                let views: Vec<_> = chunks.iter().map(|c| c.view()).collect();
                ndarray::concatenate(Axis(0), &views).expect("chunks share width")
            }
        };
        out.rows()
            .into_iter()
            .map(|r| {
                crate::mesh::Vec3::new(
                    r[0].to_f64_lossless(),
                    r[1].to_f64_lossless(),
                    r[2].to_f64_lossless(),
                )
            })
            .collect()
    }
}
