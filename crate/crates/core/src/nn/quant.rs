use half::f16;

use super::{Mlp, MlpArchitecture, NnError};

/// Binary16 parameters of a network, in serialization order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HalfMlp {
    pub arch: MlpArchitecture,
    pub bits: Vec<u16>,
}

impl HalfMlp {
    pub fn dequantize(&self) -> Mlp<f32> {
        let params: Vec<f32> = self.bits.iter().map(|&b| dequantize_value(b)).collect();
        Mlp::from_flat(self.arch, &params).expect("quantized block matches its architecture")
    }

    pub fn payload_bytes(&self) -> usize {
        self.bits.len() * 2
    }
}

/// Round-to-nearest-even conversion; `None` when the value would overflow.
pub fn quantize_value(v: f32) -> Option<u16> {
    if !v.is_finite() || v.abs() > f16::MAX.to_f32() {
        return None;
    }
    Some(f16::from_f32(v).to_bits())
}

pub fn dequantize_value(bits: u16) -> f32 {
    f16::from_bits(bits).to_f32()
}

pub fn quantize(mlp: &Mlp<f32>) -> Result<HalfMlp, NnError> {
    let mut bits = Vec::with_capacity(mlp.param_count());
    for (layer, l) in mlp.layers.iter().enumerate() {
        let weights = l.weight.as_slice().unwrap();
        let values = weights.iter().chain(l.bias.iter());
        for (index, &v) in values.enumerate() {
            bits.push(quantize_value(v).ok_or(NnError::Fp16Overflow {
                layer,
                index,
                value: v,
            })?);
        }
    }
    Ok(HalfMlp {
        arch: *mlp.architecture(),
        bits,
    })
}
