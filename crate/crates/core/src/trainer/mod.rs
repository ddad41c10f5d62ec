//! Two-stage fitting: `q_c` learns the sphere-to-coarse map, then `q_f`
//! learns the displacement from the coarse surface to the original one,
//! sampled where the coarse map stretches the sphere most.

mod config;
mod distortion;

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error as ThisError;

pub use config::{FineSampling, JsonLines, Preset, Progress, ProgressSink, Silent, Stage, TrainConfig};
pub use distortion::{
    build_distortion_table, distortion_ratio, metric_tensor, sphere_point, sphere_uv,
    DistortionTable, POLE_EPS,
};

use crate::mesh::{normalize_mesh, uniform_barycentric, FaceSampler, Normalization, TriangleMesh, Vec3};
use crate::nn::{
    cosine_lr, encode_batch, quantize, CompressedModel, Mlp, NnError, OptimizerState,
    Smoothing,
};
use crate::param::{
    import_parameterization, laplacian_smooth, require_genus_zero, spherical_parameterize,
    ParamError, ParameterizedShape, SphereLocator, Target,
};
use crate::Error;

#[derive(Debug, ThisError)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{stage} stage diverged at iteration {iteration}")]
    Diverged { stage: Stage, iteration: usize },
    #[error("distortion weights are all zero or non-finite")]
    DegenerateDistortion,
    #[error("sphere has no area to sample")]
    EmptySphere,
    #[error("{0}")]
    Network(#[from] NnError),
    #[error("{0}")]
    Locate(#[from] ParamError),
}

/// A trained network and its mean loss over the last logging window.
#[derive(Debug, Clone)]
pub struct Fit {
    pub mlp: Mlp<f32>,
    pub final_loss: Option<f64>,
}

fn stage_seed(seed: u64, stage: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stage)
}

fn stage_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn rows(points: &[Vec3]) -> Array2<f32> {
    Array2::from_shape_fn((points.len(), 3), |(i, k)| points[i][k] as f32)
}

/// Runs `iterations` AdamW steps with a cosine schedule on batches produced
/// by `next_batch`.
fn optimize(
    mlp: &mut Mlp<f32>,
    stage: Stage,
    iterations: usize,
    config: &TrainConfig,
    sink: &mut dyn ProgressSink,
    mut next_batch: impl FnMut() -> Result<(Array2<f32>, Array2<f32>), TrainError>,
) -> Result<Option<f64>, TrainError> {
    let mut opt = OptimizerState::new(mlp, config.adamw, config.learning_rate, iterations);
    let mut window = 0.0;
    let mut window_len = 0usize;
    let mut last = None;
    for t in 0..iterations {
        let (x, y) = next_batch()?;
        let (loss, grads) = mlp
            .forward_backward(x.view(), y.view())
            .map_err(|_| TrainError::Diverged { stage, iteration: t })?;
        let lr = cosine_lr(t, iterations, config.learning_rate);
        opt.adamw_step(mlp, &grads, lr);
        window += loss as f64;
        window_len += 1;
        if (t + 1) % config.log_every == 0 || t + 1 == iterations {
            let mean = window / window_len as f64;
            sink.record(&Progress {
                stage,
                iteration: t + 1,
                loss: mean,
                lr,
            });
            log::debug!("{stage} {}/{iterations}: loss {mean:.3e}, lr {lr:.2e}", t + 1);
            last = Some(mean);
            window = 0.0;
            window_len = 0;
        }
    }
    if mlp.slices().iter().any(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(TrainError::Diverged {
            stage,
            iteration: iterations,
        });
    }
    Ok(last)
}

/// Fits `q_c`: sphere points drawn uniformly by area, targets at the same
/// barycentric location on the coarse mesh.
pub fn train_coarse(
    shape: &ParameterizedShape,
    config: &TrainConfig,
    sink: &mut dyn ProgressSink,
) -> Result<Fit, TrainError> {
    let sphere = shape.mesh(Target::Sphere);
    let sampler = FaceSampler::new(&sphere.face_areas()).ok_or(TrainError::EmptySphere)?;
    let mut mlp = Mlp::new(config.coarse_architecture(), stage_seed(config.seed, 1))?;
    let mut rng = stage_rng(config.seed, 1);
    let n = config.batch_size;
    let final_loss = optimize(
        &mut mlp,
        Stage::Coarse,
        config.coarse_iterations,
        config,
        sink,
        || {
            let mut x = Array2::zeros((n, 3));
            let mut y = Array2::zeros((n, 3));
            for i in 0..n {
                let f = sampler.draw(&mut rng);
                let b = uniform_barycentric(&mut rng);
                let p = shape.correspond(Target::Sphere, f, b).normalize();
                let q = shape.correspond(Target::Coarse, f, b);
                for k in 0..3 {
                    x[[i, k]] = p[k] as f32;
                    y[[i, k]] = q[k] as f32;
                }
            }
            Ok((x, y))
        },
    )?;
    Ok(Fit { mlp, final_loss })
}

/// Where fine-stage sphere points come from.
pub enum FineSampler<'a> {
    Distortion(&'a DistortionTable),
    UniformSphere,
}

impl FineSampler<'_> {
    fn draw<R: Rng>(&self, rng: &mut R) -> Vec3 {
        match self {
            FineSampler::Distortion(table) => table.draw(rng),
            FineSampler::UniformSphere => loop {
                let g = Vec3::new(
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                );
                let n = g.norm();
                if n > 1e-12 {
                    break g / n;
                }
            },
        }
    }
}

/// Fits `q_f` on top of a frozen `q_c`: input is the encoded coarse point,
/// target is the original-surface point minus the coarse point.
pub fn train_fine(
    shape: &ParameterizedShape,
    locator: &SphereLocator,
    coarse: &Mlp<f32>,
    sampler: &FineSampler<'_>,
    config: &TrainConfig,
    sink: &mut dyn ProgressSink,
) -> Result<Fit, TrainError> {
    let arch = config.fine_architecture()?;
    let mut mlp = Mlp::new(arch, stage_seed(config.seed, 2))?;
    let mut rng = stage_rng(config.seed, 2);
    let n = config.batch_size;
    let levels = arch.positional_levels;
    let final_loss = optimize(
        &mut mlp,
        Stage::Fine,
        config.fine_iterations,
        config,
        sink,
        || {
            let dirs: Vec<Vec3> = (0..n).map(|_| sampler.draw(&mut rng)).collect();
            let originals = dirs
                .par_iter()
                .map(|d| {
                    let (f, b) = locator.locate_direction(d)?;
                    Ok(shape.correspond(Target::Original, f, b))
                })
                .collect::<Result<Vec<Vec3>, ParamError>>()?;
            let c = coarse.forward(rows(&dirs).view())?;
            let mut y = Array2::zeros((n, 3));
            for i in 0..n {
                for k in 0..3 {
                    y[[i, k]] = (originals[i][k] - c[[i, k]] as f64) as f32;
                }
            }
            Ok((encode_batch(c.view(), levels), y))
        },
    )?;
    Ok(Fit { mlp, final_loss })
}

/// Normalizes `mesh`, embeds it on the sphere (or validates `import`) and
/// smooths it into the coarse target.
pub fn prepare_shape(
    mesh: &TriangleMesh,
    config: &TrainConfig,
    import: Option<&TriangleMesh>,
) -> Result<(ParameterizedShape, Normalization), Error> {
    config.validate()?;
    require_genus_zero(mesh)?;
    let (normalized, norm) = normalize_mesh(mesh)?;
    let sphere = match import {
        Some(candidate) => import_parameterization(&normalized, candidate)?,
        None => spherical_parameterize(&normalized, &config.parameterization)?,
    };
    let coarse = laplacian_smooth(&normalized, config.smoothing_iterations, config.smoothing_lambda);
    Ok((ParameterizedShape::new(normalized, sphere, coarse)?, norm))
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct EncodeReport {
    pub parameterize_secs: f64,
    pub coarse_secs: f64,
    pub fine_secs: f64,
    pub coarse_loss: Option<f64>,
    pub fine_loss: Option<f64>,
    pub model_bytes: usize,
}

/// Result of a full encode; the full-precision networks are kept alongside
/// the (possibly quantized) model. When quantizing, `fine` was trained on
/// top of the quantized `coarse`.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub model: CompressedModel,
    pub coarse: Mlp<f32>,
    pub fine: Mlp<f32>,
    pub report: EncodeReport,
}

/// Trains both stages on a prepared shape and packs the result.
pub fn encode_shape(
    shape: &ParameterizedShape,
    norm: Normalization,
    config: &TrainConfig,
    sink: &mut dyn ProgressSink,
) -> Result<Encoded, Error> {
    config.validate()?;
    let mut report = EncodeReport::default();

    let t = Instant::now();
    let coarse = train_coarse(shape, config, sink)?;
    report.coarse_secs = t.elapsed().as_secs_f64();
    report.coarse_loss = coarse.final_loss;

    let t = Instant::now();
    // The fine stage corrects the coarse network as the decoder will see it,
    // so with quantization on it is fitted against the fp16 round trip.
    let stored_coarse = if config.quantize {
        quantize(&coarse.mlp)?.dequantize()
    } else {
        coarse.mlp.clone()
    };
    let locator = SphereLocator::new(shape.mesh(Target::Sphere));
    let table;
    let sampler = match config.fine_sampling {
        FineSampling::Distortion => {
            table = build_distortion_table(
                &stored_coarse,
                config.distortion_level,
                config.area_weighted_distortion,
            )?;
            FineSampler::Distortion(&table)
        }
        FineSampling::UniformSphere => FineSampler::UniformSphere,
    };
    let fine = train_fine(shape, &locator, &stored_coarse, &sampler, config, sink)?;
    report.fine_secs = t.elapsed().as_secs_f64();
    report.fine_loss = fine.final_loss;

    let model = CompressedModel::new(
        &coarse.mlp,
        &fine.mlp,
        config.quantize,
        Smoothing {
            iterations: config.smoothing_iterations,
            lambda: config.smoothing_lambda,
        },
        norm,
    )?;
    report.model_bytes = model.byte_len();
    Ok(Encoded {
        model,
        coarse: coarse.mlp,
        fine: fine.mlp,
        report,
    })
}

/// Mesh in, compressed model out.
pub fn encode(
    mesh: &TriangleMesh,
    config: &TrainConfig,
    import: Option<&TriangleMesh>,
    sink: &mut dyn ProgressSink,
) -> Result<Encoded, Error> {
    let t = Instant::now();
    let (shape, norm) = prepare_shape(mesh, config, import)?;
    let parameterize_secs = t.elapsed().as_secs_f64();
    let mut encoded = encode_shape(&shape, norm, config, sink)?;
    encoded.report.parameterize_secs = parameterize_secs;
    Ok(encoded)
}
