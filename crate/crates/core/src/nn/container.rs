//! The `.hnsc` container. Little-endian throughout:
//!
//! ```text
//! magic "HNSC" | version u16 | flags u16 (bit 0: fp16)
//! q_c: input_dim u16, hidden_layers u16, hidden_width u16, levels u16
//! q_f: input_dim u16, hidden_layers u16, hidden_width u16, levels u16
//! smoothing iterations u16 | smoothing lambda f32
//! normalization scale f32 | offset 3 x f32
//! q_c parameters | q_f parameters   (fp16 or fp32 per flags)
//! ```
//!
//! Parameters are layer-major, each layer's weights row-major followed by
//! its biases.

use thiserror::Error;

use super::{quantize, HalfMlp, Mlp, MlpArchitecture, NnError};
use crate::mesh::{Normalization, Vec3};

pub const MAGIC: [u8; 4] = *b"HNSC";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 46;
const FLAG_FP16: u16 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("bad magic: not an HNSC container")]
    BadMagic,
    #[error("unsupported version {0} (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u16),
    #[error("unknown flag bits {0:#06x}")]
    UnknownFlags(u16),
    #[error("truncation: header declares {expected} bytes but the file has {actual}")]
    Truncation { expected: usize, actual: usize },
    #[error("invalid {net} architecture: {reason}")]
    InvalidArchitecture { net: &'static str, reason: String },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("smoothing iteration count {0} does not fit in u16")]
    SmoothingOutOfRange(usize),
}

/// Network parameters as stored: full fp32 or binary16.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredMlp {
    Full(Mlp<f32>),
    Half(HalfMlp),
}

impl StoredMlp {
    pub fn architecture(&self) -> MlpArchitecture {
        match self {
            StoredMlp::Full(m) => *m.architecture(),
            StoredMlp::Half(h) => h.arch,
        }
    }

    /// The network in working precision (dequantized if needed).
    pub fn to_mlp(&self) -> Mlp<f32> {
        match self {
            StoredMlp::Full(m) => m.clone(),
            StoredMlp::Half(h) => h.dequantize(),
        }
    }

    pub fn payload_bytes(&self) -> usize {
        match self {
            StoredMlp::Full(m) => m.param_count() * 4,
            StoredMlp::Half(h) => h.payload_bytes(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothing {
    pub iterations: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedModel {
    coarse: StoredMlp,
    fine: StoredMlp,
    smoothing: Smoothing,
    normalization: Normalization,
}

impl CompressedModel {
    pub fn new(
        coarse: &Mlp<f32>,
        fine: &Mlp<f32>,
        quantized: bool,
        smoothing: Smoothing,
        normalization: Normalization,
    ) -> Result<Self, NnError> {
        let (coarse, fine) = if quantized {
            (StoredMlp::Half(quantize(coarse)?), StoredMlp::Half(quantize(fine)?))
        } else {
            (StoredMlp::Full(coarse.clone()), StoredMlp::Full(fine.clone()))
        };
        Ok(CompressedModel {
            coarse,
            fine,
            smoothing,
            normalization,
        })
    }

    pub fn coarse(&self) -> &StoredMlp {
        &self.coarse
    }

    pub fn fine(&self) -> &StoredMlp {
        &self.fine
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self.coarse, StoredMlp::Half(_))
    }

    /// Total container length in bytes.
    pub fn byte_len(&self) -> usize {
        HEADER_LEN + self.coarse.payload_bytes() + self.fine.payload_bytes()
    }
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32(out: &mut Vec<u8>, v: f32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_arch(out: &mut Vec<u8>, a: &MlpArchitecture) {
    for v in [a.input_dim, a.hidden_layers, a.hidden_width, a.positional_levels] {
        put_u16(out, v as u16);
    }
}

fn put_params(out: &mut Vec<u8>, m: &StoredMlp) {
    match m {
        StoredMlp::Full(mlp) => {
            for s in mlp.slices() {
                for &v in s {
                    put_f32(out, v);
                }
            }
        }
        StoredMlp::Half(h) => {
            for &b in &h.bits {
                put_u16(out, b);
            }
        }
    }
}

pub fn serialize(model: &CompressedModel) -> Result<Vec<u8>, FormatError> {
    let c = model.smoothing.iterations;
    if c > u16::MAX as usize {
        return Err(FormatError::SmoothingOutOfRange(c));
    }
    for (net, m) in [("q_c", &model.coarse), ("q_f", &model.fine)] {
        let a = m.architecture();
        let fields = [a.input_dim, a.hidden_layers, a.hidden_width, a.positional_levels];
        if fields.iter().any(|&v| v > u16::MAX as usize) {
            return Err(FormatError::InvalidArchitecture {
                net,
                reason: "dimension exceeds u16".into(),
            });
        }
    }
    let mut out = Vec::with_capacity(model.byte_len());
    out.extend_from_slice(&MAGIC);
    put_u16(&mut out, FORMAT_VERSION);
    put_u16(&mut out, if model.is_quantized() { FLAG_FP16 } else { 0 });
    put_arch(&mut out, &model.coarse.architecture());
    put_arch(&mut out, &model.fine.architecture());
    put_u16(&mut out, c as u16);
    put_f32(&mut out, model.smoothing.lambda as f32);
    let n = model.normalization;
    put_f32(&mut out, n.scale as f32);
    for k in 0..3 {
        put_f32(&mut out, n.offset[k] as f32);
    }
    debug_assert_eq!(out.len(), HEADER_LEN);
    put_params(&mut out, &model.coarse);
    put_params(&mut out, &model.fine);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u16(&mut self) -> u16 {
        let v = u16::from_le_bytes([self.bytes[self.pos], self.bytes[self.pos + 1]]);
        self.pos += 2;
        v
    }

    fn f32(&mut self) -> f32 {
        let v = f32::from_le_bytes(self.bytes[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        v
    }

    fn arch(&mut self, net: &'static str) -> Result<MlpArchitecture, FormatError> {
        let input_dim = self.u16() as usize;
        let hidden_layers = self.u16() as usize;
        let hidden_width = self.u16() as usize;
        let positional_levels = self.u16() as usize;
        let a = MlpArchitecture {
            input_dim,
            hidden_layers,
            hidden_width,
            output_dim: 3,
            positional_levels,
        };
        a.validate().map_err(|e| FormatError::InvalidArchitecture {
            net,
            reason: e.to_string(),
        })?;
        Ok(a)
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<CompressedModel, FormatError> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(FormatError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::Truncation {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u16();
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let flags = r.u16();
    if flags & !FLAG_FP16 != 0 {
        return Err(FormatError::UnknownFlags(flags));
    }
    let half = flags & FLAG_FP16 != 0;
    let coarse_arch = r.arch("q_c")?;
    let fine_arch = r.arch("q_f")?;
    let iterations = r.u16() as usize;
    let lambda = r.f32();
    let scale = r.f32();
    let offset = Vec3::new(r.f32() as f64, r.f32() as f64, r.f32() as f64);
    if !lambda.is_finite() {
        return Err(FormatError::NonFinite("smoothing lambda"));
    }
    if !(scale.is_finite() && scale > 0.0) || offset.iter().any(|v| !v.is_finite()) {
        return Err(FormatError::NonFinite("normalization"));
    }

    let width = if half { 2 } else { 4 };
    let expected =
        HEADER_LEN + (coarse_arch.param_count() + fine_arch.param_count()) * width;
    if bytes.len() != expected {
        return Err(FormatError::Truncation {
            expected,
            actual: bytes.len(),
        });
    }

    let mut read_net = |arch: MlpArchitecture, net: &'static str| -> Result<StoredMlp, FormatError> {
        let n = arch.param_count();
        if half {
            let bits: Vec<u16> = (0..n).map(|_| r.u16()).collect();
            if bits.iter().any(|&b| b & 0x7c00 == 0x7c00) {
                return Err(FormatError::NonFinite(net));
            }
            Ok(StoredMlp::Half(HalfMlp { arch, bits }))
        } else {
            let params: Vec<f32> = (0..n).map(|_| r.f32()).collect();
            if params.iter().any(|v| !v.is_finite()) {
                return Err(FormatError::NonFinite(net));
            }
            Ok(StoredMlp::Full(
                Mlp::from_flat(arch, &params).expect("count checked above"),
            ))
        }
    };
    let coarse = read_net(coarse_arch, "q_c parameters")?;
    let fine = read_net(fine_arch, "q_f parameters")?;
    Ok(CompressedModel {
        coarse,
        fine,
        smoothing: Smoothing {
            iterations,
            lambda: lambda as f64,
        },
        normalization: Normalization {
            scale: scale as f64,
            offset,
        },
    })
}
