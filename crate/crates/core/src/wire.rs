//! Binary framing for tensors crossing the edge-cloud boundary.
//!
//! ```text
//! offset  size      field
//! 0       4         magic "CSC1"
//! 4       1         version (1)
//! 5       1         task   1=STT 2=TTS
//! 6       1         kind   1=features 2=hidden_states 3=error
//! 7       1         dtype  1=FP32 2=INT8
//! 8       1         ndim   (<= 8)
//! 9       3         reserved, zero
//! 12      4*ndim    dims, u32 LE
//! ..      5         INT8 only: scale f32 LE, zero_point i8
//! ..      n*size    payload, row-major, LE
//! ..      4         crc32 (IEEE) over every preceding byte, LE
//! ```
//!
//! All multi-byte fields are little-endian.

use thiserror::Error;

use crate::model::Task;
use crate::tensor::{DType, QuantParams, Storage, Tensor};

pub const MAGIC: [u8; 4] = *b"CSC1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 12;
pub const QUANT_LEN: usize = 5;
pub const CRC_LEN: usize = 4;
pub const MAX_DIMS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("tensor has {0} dims, at most 8 are encodable")]
    TooManyDims(usize),
    #[error("tensor size overflows the frame length")]
    DimOverflow,
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported frame version {0}")]
    UnsupportedVersion(u8),
    #[error("crc mismatch: frame says {expected:08x}, computed {actual:08x}")]
    CrcMismatch { expected: u32, actual: u32 },
    #[error("truncated frame: need {expected} bytes, have {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("frame has {actual} bytes, layout accounts for {expected}")]
    TrailingBytes { expected: usize, actual: usize },
    #[error("unknown {field} code {value}")]
    UnknownEnum { field: &'static str, value: u8 },
    #[error("reserved header bytes are not zero")]
    ReservedNonZero,
    #[error("invalid quantization parameters in frame")]
    BadQuantParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    Features,
    HiddenStates,
    Error,
}

impl FrameKind {
    pub fn code(self) -> u8 {
        match self {
            FrameKind::Features => 1,
            FrameKind::HiddenStates => 2,
            FrameKind::Error => 3,
        }
    }

    fn from_code(v: u8) -> Result<Self, WireError> {
        match v {
            1 => Ok(FrameKind::Features),
            2 => Ok(FrameKind::HiddenStates),
            3 => Ok(FrameKind::Error),
            value => Err(WireError::UnknownEnum { field: "kind", value }),
        }
    }
}

/// Codes carried by error frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    Malformed,
    Shape,
    Version,
    TooLarge,
}

impl ErrorCode {
    pub fn code(self) -> u8 {
        match self {
            ErrorCode::Malformed => 1,
            ErrorCode::Shape => 2,
            ErrorCode::Version => 3,
            ErrorCode::TooLarge => 4,
        }
    }

    pub fn from_code(v: u8) -> Option<Self> {
        match v {
            1 => Some(ErrorCode::Malformed),
            2 => Some(ErrorCode::Shape),
            3 => Some(ErrorCode::Version),
            4 => Some(ErrorCode::TooLarge),
            _ => None,
        }
    }
}

pub fn task_code(task: Task) -> u8 {
    match task {
        Task::Stt => 1,
        Task::Tts => 2,
    }
}

fn task_from_code(v: u8) -> Result<Task, WireError> {
    match v {
        1 => Ok(Task::Stt),
        2 => Ok(Task::Tts),
        value => Err(WireError::UnknownEnum { field: "task", value }),
    }
}

fn dtype_code(d: DType) -> u8 {
    match d {
        DType::F32 => 1,
        DType::I8 => 2,
    }
}

fn dtype_from_code(v: u8) -> Result<DType, WireError> {
    match v {
        1 => Ok(DType::F32),
        2 => Ok(DType::I8),
        value => Err(WireError::UnknownEnum { field: "dtype", value }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub task: Task,
    pub kind: FrameKind,
    pub tensor: Tensor,
}

impl Frame {
    /// The code of an error frame, `None` for other kinds.
    pub fn error_code(&self) -> Option<u8> {
        if self.kind != FrameKind::Error {
            return None;
        }
        self.tensor.as_i8().and_then(|d| d.first()).map(|&c| c as u8)
    }
}

/// Exact encoded length for a tensor of `elements` scalars.
pub fn frame_len(ndim: usize, dtype: DType, elements: usize) -> usize {
    let quant = if dtype == DType::I8 { QUANT_LEN } else { 0 };
    HEADER_LEN + 4 * ndim + quant + elements * dtype.size_bytes() + CRC_LEN
}

pub fn encode_frame(task: Task, kind: FrameKind, t: &Tensor) -> Result<Vec<u8>, WireError> {
    let ndim = t.shape().len();
    if ndim > MAX_DIMS {
        return Err(WireError::TooManyDims(ndim));
    }
    let elements = t
        .shape()
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .ok_or(WireError::DimOverflow)?;
    elements
        .checked_mul(t.dtype().size_bytes())
        .and_then(|b| b.checked_add(HEADER_LEN + 4 * ndim + QUANT_LEN + CRC_LEN))
        .ok_or(WireError::DimOverflow)?;

    let mut out = Vec::with_capacity(frame_len(ndim, t.dtype(), elements));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&[
        VERSION,
        task_code(task),
        kind.code(),
        dtype_code(t.dtype()),
        ndim as u8,
        0,
        0,
        0,
    ]);
    for &d in t.shape() {
        out.extend_from_slice(&d.to_le_bytes());
    }
    match t.storage() {
        Storage::F32(data) => {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Storage::I8 { data, quant } => {
            out.extend_from_slice(&quant.scale().to_le_bytes());
            out.push(quant.zero_point() as u8);
            out.extend(data.iter().map(|&q| q as u8));
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub fn decode_frame(bytes: &[u8]) -> Result<Frame, WireError> {
    if bytes.len() < HEADER_LEN {
        return Err(WireError::Truncated {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
    if magic != MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    if bytes[4] != VERSION {
        return Err(WireError::UnsupportedVersion(bytes[4]));
    }
    let task = task_from_code(bytes[5])?;
    let kind = FrameKind::from_code(bytes[6])?;
    let dtype = dtype_from_code(bytes[7])?;
    let ndim = bytes[8] as usize;
    if ndim > MAX_DIMS {
        return Err(WireError::TooManyDims(ndim));
    }
    let dims_end = HEADER_LEN + 4 * ndim;
    if bytes.len() < dims_end {
        return Err(WireError::Truncated {
            expected: dims_end,
            actual: bytes.len(),
        });
    }
    let shape: Vec<u32> = (0..ndim).map(|i| read_u32(bytes, HEADER_LEN + 4 * i)).collect();
    let expected = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .and_then(|n| n.checked_mul(dtype.size_bytes()))
        .and_then(|p| p.checked_add(frame_len(ndim, dtype, 0)))
        .unwrap_or(usize::MAX);
    if bytes.len() < expected {
        return Err(WireError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(WireError::TrailingBytes {
            expected,
            actual: bytes.len(),
        });
    }
    let body = &bytes[..expected - CRC_LEN];
    let stored = read_u32(bytes, expected - CRC_LEN);
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(WireError::CrcMismatch {
            expected: stored,
            actual: computed,
        });
    }
    if bytes[9..12] != [0, 0, 0] {
        return Err(WireError::ReservedNonZero);
    }

    let payload = &body[dims_end..];
    let tensor = match dtype {
        DType::F32 => {
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Tensor::from_f32(shape, data)
        }
        DType::I8 => {
            let scale = f32::from_le_bytes([payload[0], payload[1], payload[2], payload[3]]);
            let quant = QuantParams::new(scale, payload[4] as i8).map_err(|_| WireError::BadQuantParams)?;
            let data = payload[QUANT_LEN..].iter().map(|&b| b as i8).collect();
            Tensor::from_i8(shape, data, quant)
        }
    }
    .expect("payload length derived from shape");
    Ok(Frame { task, kind, tensor })
}

/// An error frame carrying `code`.
pub fn error_frame(task: Task, code: ErrorCode) -> Vec<u8> {
    let quant = QuantParams::new(1.0, 0).expect("unit scale");
    let t = Tensor::from_i8(vec![1], vec![code.code() as i8], quant).expect("one scalar");
    encode_frame(task, FrameKind::Error, &t).expect("one-dim tensor encodes")
}
