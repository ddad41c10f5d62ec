//! Hierarchical neural surface codec.
//!
//! A genus-zero triangle mesh is mapped onto the unit sphere, smoothed into a
//! coarse version sharing the same connectivity, and then encoded as two tiny
//! residual MLPs: `q_c` maps sphere points onto the coarse surface and `q_f`
//! adds a displacement field on top of it. Decoding evaluates both networks
//! on an icosphere of any level, so the output resolution is chosen at
//! decode time.
//!
//! Modules, bottom-up:
//!
//! * [`mesh`]: triangle meshes, OBJ/PLY I/O, topology, sampling, BVH queries
//! * [`param`]: spherical parameterization, smoothing and barycentric correspondence
//! * [`nn`]: the MLP engine, AdamW, fp16 quantization and the `.hnsc` container
//! * [`trainer`]: coarse/fine fitting and the distortion-driven sampler
//! * [`decoder`]: icosphere templates, adaptive refinement and reconstruction
//! * [`metrics`]: point-to-mesh and normal error

pub mod decoder;
pub mod mesh;
pub mod metrics;
pub mod nn;
pub mod param;
pub mod trainer;

use thiserror::Error;

/// Any failure of the encode/decode pipeline, tagged by the stage it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh: {0}")]
    Mesh(#[from] mesh::MeshError),
    #[error("parameterization: {0}")]
    Param(#[from] param::ParamError),
    #[error("network: {0}")]
    Nn(#[from] nn::NnError),
    #[error("container: {0}")]
    Format(#[from] nn::FormatError),
    #[error("training: {0}")]
    Train(#[from] trainer::TrainError),
}
