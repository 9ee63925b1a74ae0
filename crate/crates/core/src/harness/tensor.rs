//! SCTN binary tensors.
//!
//! Layout, all little endian:
//!
//! | offset | size      | field                                   |
//! |--------|-----------|-----------------------------------------|
//! | 0      | 4         | magic `SCTN`                            |
//! | 4      | 1         | version, 1                              |
//! | 5      | 1         | dtype: 1 f32, 2 f64, 3 c64, 4 c128      |
//! | 6      | 1         | ndim                                    |
//! | 7      | 1         | padding, 0                              |
//! | 8      | 8 * ndim  | dims as u64                             |
//! | ...    | ...       | row-major payload, complex as (re, im)  |

use super::atomic_write;
use crate::error::{Error, Result};
use num_complex::{Complex32, Complex64};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"SCTN";
pub const VERSION: u8 = 1;
pub const HEADER_FIXED: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F32 = 1,
    F64 = 2,
    C64 = 3,
    C128 = 4,
}

impl DType {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Self::F32),
            2 => Some(Self::F64),
            3 => Some(Self::C64),
            4 => Some(Self::C128),
            _ => None,
        }
    }

    pub fn elem_size(self) -> usize {
        match self {
            Self::F32 => 4,
            Self::F64 | Self::C64 => 8,
            Self::C128 => 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    C64(Vec<Complex32>),
    C128(Vec<Complex64>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            Self::F32(_) => DType::F32,
            Self::F64(_) => DType::F64,
            Self::C64(_) => DType::C64,
            Self::C128(_) => DType::C128,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::F32(v) => v.len(),
            Self::F64(v) => v.len(),
            Self::C64(v) => v.len(),
            Self::C128(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u64>,
    pub data: TensorData,
}

impl Tensor {
    pub fn new(dims: Vec<u64>, data: TensorData) -> Result<Self> {
        if dims.len() > u8::MAX as usize {
            return Err(Error::Validation(format!("tensor rank {} exceeds 255", dims.len())));
        }
        let count = dims
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Validation("tensor dims overflow".into()))?;
        if count != data.len() as u64 {
            return Err(Error::Validation(format!(
                "dims {dims:?} describe {count} elements, data has {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn real(dims: Vec<u64>, values: Vec<f64>) -> Result<Self> {
        Self::new(dims, TensorData::F64(values))
    }

    pub fn complex(dims: Vec<u64>, values: Vec<Complex64>) -> Result<Self> {
        Self::new(dims, TensorData::C128(values))
    }

    /// Real payload widened to f64; `None` for complex tensors.
    pub fn to_f64(&self) -> Option<Vec<f64>> {
        match &self.data {
            TensorData::F32(v) => Some(v.iter().map(|&x| x as f64).collect()),
            TensorData::F64(v) => Some(v.clone()),
            _ => None,
        }
    }

    /// Payload as complex double; real tensors get zero imaginary parts.
    pub fn to_c128(&self) -> Vec<Complex64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| Complex64::new(x as f64, 0.0)).collect(),
            TensorData::F64(v) => v.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            TensorData::C64(v) => v.iter().map(|z| Complex64::new(z.re as f64, z.im as f64)).collect(),
            TensorData::C128(v) => v.clone(),
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_FIXED + 8 * self.dims.len() + self.data.dtype().elem_size() * self.data.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&[VERSION, self.data.dtype() as u8, self.dims.len() as u8, 0]);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::C64(v) => v.iter().for_each(|z| {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }),
            TensorData::C128(v) => v.iter().for_each(|z| {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let fail = |offset: usize, msg: String| Error::Format {
            offset: offset as u64,
            msg,
        };
        if bytes.len() < HEADER_FIXED {
            return Err(fail(bytes.len(), format!("header truncated at {} bytes", bytes.len())));
        }
        if bytes[..4] != MAGIC {
            return Err(fail(0, format!("bad magic {:02x?}", &bytes[..4])));
        }
        if bytes[4] != VERSION {
            return Err(fail(4, format!("unsupported version {}", bytes[4])));
        }
        let dtype = DType::from_code(bytes[5]).ok_or_else(|| fail(5, format!("unknown dtype {}", bytes[5])))?;
        let ndim = bytes[6] as usize;
        if bytes[7] != 0 {
            return Err(fail(7, format!("nonzero padding byte {}", bytes[7])));
        }
        let dims_end = HEADER_FIXED + 8 * ndim;
        if bytes.len() < dims_end {
            return Err(fail(bytes.len(), format!("dims truncated: need {dims_end} header bytes")));
        }
        let dims: Vec<u64> = bytes[HEADER_FIXED..dims_end]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let count = dims
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| fail(HEADER_FIXED, "dims overflow".into()))?;
        let payload_len = count
            .checked_mul(dtype.elem_size() as u64)
            .ok_or_else(|| fail(HEADER_FIXED, "payload size overflow".into()))?;
        let available = (bytes.len() - dims_end) as u64;
        if available < payload_len {
            return Err(fail(
                bytes.len(),
                format!("payload truncated: expected {payload_len} bytes, found {available}"),
            ));
        }
        if available > payload_len {
            return Err(fail(
                dims_end + payload_len as usize,
                format!("{} trailing bytes after payload", available - payload_len),
            ));
        }
        let payload = &bytes[dims_end..];
        let f32s = |p: &[u8]| -> Vec<f32> {
            p.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
                .collect()
        };
        let f64s = |p: &[u8]| -> Vec<f64> {
            p.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect()
        };
        let data = match dtype {
            DType::F32 => TensorData::F32(f32s(payload)),
            DType::F64 => TensorData::F64(f64s(payload)),
            DType::C64 => TensorData::C64(f32s(payload).chunks_exact(2).map(|c| Complex32::new(c[0], c[1])).collect()),
            DType::C128 => TensorData::C128(f64s(payload).chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()),
        };
        Ok(Self { dims, data })
    }
}

/// Writes atomically through a temporary file in the target directory.
pub fn write_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    atomic_write(path, &tensor.encode())
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    Tensor::decode(&std::fs::read(path)?)
}
