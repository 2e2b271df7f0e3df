//! Dense row-major tensors with FP32 and INT8 storage.
//!
//! INT8 tensors carry per-tensor asymmetric affine quantization parameters,
//! so `v = (q - zero_point) * scale`. The storage enum ties the parameters to
//! the dtype: an FP32 tensor can never carry them and an INT8 tensor always
//! does.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape {shape:?} holds {expected} scalars but buffer has {actual}")]
    ShapeMismatch {
        shape: Vec<u32>,
        expected: usize,
        actual: usize,
    },
    #[error("tensor contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("tensor has no quantization parameters")]
    MissingQuantParams,
    #[error("invalid quantization parameters: {0}")]
    InvalidQuantParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    F32,
    I8,
}

impl DType {
    pub fn size_bytes(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::I8 => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    scale: f32,
    zero_point: i8,
}

impl QuantParams {
    pub fn new(scale: f32, zero_point: i8) -> Result<Self, TensorError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(TensorError::InvalidQuantParams(format!(
                "scale must be positive and finite, got {scale}"
            )));
        }
        Ok(Self { scale, zero_point })
    }

    pub fn scale(&self) -> f32 {
        self.scale
    }

    pub fn zero_point(&self) -> i8 {
        self.zero_point
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Storage {
    F32(Vec<f32>),
    I8 { data: Vec<i8>, quant: QuantParams },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<u32>,
    storage: Storage,
}

fn element_count(shape: &[u32]) -> usize {
    shape.iter().map(|&d| d as usize).product()
}

impl Tensor {
    pub fn from_f32(shape: Vec<u32>, data: Vec<f32>) -> Result<Self, TensorError> {
        Self::new(shape, Storage::F32(data))
    }

    pub fn from_i8(shape: Vec<u32>, data: Vec<i8>, quant: QuantParams) -> Result<Self, TensorError> {
        Self::new(shape, Storage::I8 { data, quant })
    }

    pub fn new(shape: Vec<u32>, storage: Storage) -> Result<Self, TensorError> {
        let expected = element_count(&shape);
        let actual = match &storage {
            Storage::F32(d) => d.len(),
            Storage::I8 { data, .. } => data.len(),
        };
        if expected != actual {
            return Err(TensorError::ShapeMismatch {
                shape,
                expected,
                actual,
            });
        }
        Ok(Self { shape, storage })
    }

    pub fn zeros(shape: Vec<u32>) -> Self {
        let n = element_count(&shape);
        Self {
            shape,
            storage: Storage::F32(vec![0.0; n]),
        }
    }

    pub fn shape(&self) -> &[u32] {
        &self.shape
    }

    pub fn dtype(&self) -> DType {
        match self.storage {
            Storage::F32(_) => DType::F32,
            Storage::I8 { .. } => DType::I8,
        }
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn len(&self) -> usize {
        element_count(&self.shape)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn quant(&self) -> Option<QuantParams> {
        match self.storage {
            Storage::F32(_) => None,
            Storage::I8 { quant, .. } => Some(quant),
        }
    }

    /// FP32 view of the data, `None` for INT8 tensors.
    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.storage {
            Storage::F32(d) => Some(d),
            Storage::I8 { .. } => None,
        }
    }

    pub fn as_i8(&self) -> Option<&[i8]> {
        match &self.storage {
            Storage::F32(_) => None,
            Storage::I8 { data, .. } => Some(data),
        }
    }

    pub fn into_f32(self) -> Option<Vec<f32>> {
        match self.storage {
            Storage::F32(d) => Some(d),
            Storage::I8 { .. } => None,
        }
    }

    /// Bytes occupied by the scalars. Quantization parameters are not counted.
    pub fn memory_bytes(&self) -> usize {
        self.len() * self.dtype().size_bytes()
    }
}

/// Per-tensor asymmetric affine quantization to INT8.
pub fn quantize_linear(t: &Tensor) -> Result<Tensor, TensorError> {
    let values = t.as_f32().ok_or_else(|| {
        TensorError::InvalidQuantParams("input is already quantized".to_string())
    })?;
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(TensorError::NonFinite(i));
    }

    let (min, max) = values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let quant = if values.is_empty() {
        QuantParams::new(1.0, 0)?
    } else if max == min {
        QuantParams::new(max.abs().max(1e-8) / 127.0, 0)?
    } else {
        // the range must contain 0 so the zero point stays representable
        let (min, max) = (min.min(0.0), max.max(0.0));
        let scale = (max - min) / 255.0;
        // min maps to -128
        let zp = (-128.0 - (min / scale).round()).clamp(-128.0, 127.0);
        QuantParams::new(scale, zp as i8)?
    };

    let data = values
        .iter()
        .map(|&v| quantize_scalar(v, quant))
        .collect();
    Tensor::from_i8(t.shape.clone(), data, quant)
}

fn quantize_scalar(v: f32, q: QuantParams) -> i8 {
    let level = (v / q.scale).round() + f32::from(q.zero_point);
    level.clamp(-128.0, 127.0) as i8
}

pub fn dequantize(t: &Tensor) -> Result<Tensor, TensorError> {
    match &t.storage {
        Storage::F32(_) => Err(TensorError::MissingQuantParams),
        Storage::I8 { data, quant } => {
            let zp = i32::from(quant.zero_point);
            let out = data
                .iter()
                .map(|&q| (i32::from(q) - zp) as f32 * quant.scale)
                .collect();
            Tensor::from_f32(t.shape.clone(), out)
        }
    }
}

pub fn memory_bytes(t: &Tensor) -> usize {
    t.memory_bytes()
}
