//! NIfTI-1 single-file reader (`.nii`, optionally gzip-compressed).
//!
//! Only the embedded-data variant (magic `n+1\0`) is accepted. Detached
//! `.hdr/.img` pairs and NIfTI-2 are rejected with [`NiftiError::BadMagic`].
//! Both byte orders are handled; the order is detected from `sizeof_hdr`.

use std::io::Read;

use flate2::read::GzDecoder;
use thiserror::Error;

use super::{diagonal_affine, Volume3D};

pub const HEADER_SIZE: usize = 348;
pub const MIN_VOX_OFFSET: usize = 352;
pub const MAGIC_SINGLE_FILE: &[u8; 4] = b"n+1\0";

pub const DT_INT16: i16 = 4;
pub const DT_FLOAT32: i16 = 16;
pub const DT_FLOAT64: i16 = 64;

#[derive(Debug, Error, PartialEq)]
pub enum NiftiError {
    #[error("stream too short for a NIfTI-1 header ({0} bytes)")]
    TruncatedHeader(usize),
    #[error("sizeof_hdr is not 348 in either byte order")]
    BadHeaderSize,
    #[error("bad magic {0:?}; only single-file NIfTI-1 (n+1) is supported")]
    BadMagic([u8; 4]),
    #[error("unsupported datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("unsupported dimensions {0:?}; expected a 3D volume")]
    UnsupportedDims([i16; 8]),
    #[error("invalid voxel spacing {0:?}")]
    InvalidSpacing([f32; 3]),
    #[error("vox_offset {0} is invalid (must be >= 352)")]
    BadVoxOffset(f32),
    #[error("payload has {got} bytes but the header implies {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("non-finite voxel value after scaling at index {0}")]
    NonFiniteAfterScaling(usize),
    #[error("gzip stream could not be decoded: {0}")]
    Gzip(String),
}

#[derive(Clone, Copy)]
enum Endian {
    Little,
    Big,
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl HeaderReader<'_> {
    fn arr<const N: usize>(&self, off: usize) -> [u8; N] {
        let mut a = [0u8; N];
        a.copy_from_slice(&self.bytes[off..off + N]);
        a
    }

    fn i16(&self, off: usize) -> i16 {
        match self.endian {
            Endian::Little => i16::from_le_bytes(self.arr(off)),
            Endian::Big => i16::from_be_bytes(self.arr(off)),
        }
    }

    fn f32(&self, off: usize) -> f32 {
        match self.endian {
            Endian::Little => f32::from_le_bytes(self.arr(off)),
            Endian::Big => f32::from_be_bytes(self.arr(off)),
        }
    }

    fn f64_at(&self, off: usize) -> f64 {
        match self.endian {
            Endian::Little => f64::from_le_bytes(self.arr(off)),
            Endian::Big => f64::from_be_bytes(self.arr(off)),
        }
    }
}

/// Parses a NIfTI-1 stream into a [`Volume3D`].
///
/// Voxel data is converted to `f32`; when `scl_slope` is non-zero each value
/// becomes `value * scl_slope + scl_inter`, evaluated in 32-bit arithmetic
/// for integer and float32 inputs and in 64-bit for float64 inputs.
pub fn read_nifti(bytes: &[u8]) -> Result<Volume3D, NiftiError> {
    if bytes.len() >= 2 && bytes[0] == 0x1F && bytes[1] == 0x8B {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| NiftiError::Gzip(e.to_string()))?;
        return parse(&out);
    }
    parse(bytes)
}

fn parse(bytes: &[u8]) -> Result<Volume3D, NiftiError> {
    if bytes.len() < HEADER_SIZE {
        return Err(NiftiError::TruncatedHeader(bytes.len()));
    }
    let size_bytes: [u8; 4] = bytes[0..4].try_into().unwrap();
    let endian = if i32::from_le_bytes(size_bytes) == HEADER_SIZE as i32 {
        Endian::Little
    } else if i32::from_be_bytes(size_bytes) == HEADER_SIZE as i32 {
        Endian::Big
    } else {
        return Err(NiftiError::BadHeaderSize);
    };
    let h = HeaderReader { bytes, endian };

    let magic: [u8; 4] = h.arr(344);
    if &magic != MAGIC_SINGLE_FILE {
        return Err(NiftiError::BadMagic(magic));
    }

    let mut dim = [0i16; 8];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = h.i16(40 + 2 * i);
    }
    let ndim_ok = dim[0] == 3 || (dim[0] == 4 && dim[4] == 1);
    if !ndim_ok || dim[1..4].iter().any(|&d| d < 1) {
        return Err(NiftiError::UnsupportedDims(dim));
    }
    // (depth, height, width) = (dim[3], dim[2], dim[1])
    let shape = [dim[3] as usize, dim[2] as usize, dim[1] as usize];

    let datatype = h.i16(70);
    let elem_size = match datatype {
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        other => return Err(NiftiError::UnsupportedDatatype(other)),
    };

    let pixdim = [h.f32(76 + 12), h.f32(76 + 8), h.f32(76 + 4)];
    if pixdim.iter().any(|p| !p.is_finite() || *p <= 0.0) {
        return Err(NiftiError::InvalidSpacing(pixdim));
    }
    let spacing = pixdim.map(f64::from);

    let vox_offset = h.f32(108);
    if !vox_offset.is_finite() || vox_offset < MIN_VOX_OFFSET as f32 {
        return Err(NiftiError::BadVoxOffset(vox_offset));
    }
    let offset = vox_offset as usize;

    let n = shape[0] * shape[1] * shape[2];
    let expected = offset.saturating_add(n * elem_size);
    if bytes.len() < expected {
        return Err(NiftiError::DimMismatch { expected, got: bytes.len() });
    }
    let payload = &bytes[offset..expected];

    let slope = h.f32(112);
    let inter = h.f32(116);
    let scaled = slope != 0.0 && slope.is_finite();

    let data: Vec<f32> = match datatype {
        DT_INT16 => payload
            .chunks_exact(2)
            .map(|c| {
                let raw = match endian {
                    Endian::Little => i16::from_le_bytes([c[0], c[1]]),
                    Endian::Big => i16::from_be_bytes([c[0], c[1]]),
                } as f32;
                if scaled {
                    raw * slope + inter
                } else {
                    raw
                }
            })
            .collect(),
        DT_FLOAT32 => payload
            .chunks_exact(4)
            .map(|c| {
                let b = [c[0], c[1], c[2], c[3]];
                let raw = match endian {
                    Endian::Little => f32::from_le_bytes(b),
                    Endian::Big => f32::from_be_bytes(b),
                };
                if scaled {
                    raw * slope + inter
                } else {
                    raw
                }
            })
            .collect(),
        _ => {
            let local = HeaderReader { bytes: payload, endian };
            (0..n)
                .map(|i| {
                    let raw = local.f64_at(8 * i);
                    if scaled {
                        (raw * f64::from(slope) + f64::from(inter)) as f32
                    } else {
                        raw as f32
                    }
                })
                .collect()
        }
    };
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(NiftiError::NonFiniteAfterScaling(i));
    }

    let sform_code = h.i16(254);
    let affine = if sform_code > 0 {
        let mut a = [[0.0f64; 4]; 4];
        for (r, row) in a.iter_mut().take(3).enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = f64::from(h.f32(280 + 16 * r + 4 * c));
            }
        }
        a[3][3] = 1.0;
        a
    } else {
        diagonal_affine(spacing)
    };

    Ok(Volume3D::with_affine(shape, spacing, affine, data).expect("validated above"))
}

/// Builds little-endian single-file NIfTI-1 streams.
///
/// Used by the synthetic cohort generator and by tests that need headers
/// with specific datatype, scaling or magic values.
#[derive(Debug, Clone)]
pub struct NiftiBuilder {
    pub shape: [usize; 3],
    pub spacing: [f32; 3],
    pub datatype: i16,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub magic: [u8; 4],
    pub srow: Option<[[f32; 4]; 3]>,
}

impl NiftiBuilder {
    pub fn new(shape: [usize; 3], spacing: [f32; 3]) -> Self {
        Self {
            shape,
            spacing,
            datatype: DT_FLOAT32,
            scl_slope: 0.0,
            scl_inter: 0.0,
            magic: *MAGIC_SINGLE_FILE,
            srow: None,
        }
    }

    pub fn header(&self) -> Vec<u8> {
        let mut h = vec![0u8; MIN_VOX_OFFSET];
        let put_i16 = |h: &mut Vec<u8>, off: usize, v: i16| h[off..off + 2].copy_from_slice(&v.to_le_bytes());
        let put_f32 = |h: &mut Vec<u8>, off: usize, v: f32| h[off..off + 4].copy_from_slice(&v.to_le_bytes());
        h[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
        let dims = [3, self.shape[2] as i16, self.shape[1] as i16, self.shape[0] as i16, 1, 1, 1, 1];
        for (i, d) in dims.iter().enumerate() {
            put_i16(&mut h, 40 + 2 * i, *d);
        }
        let (bitpix, dt) = match self.datatype {
            DT_INT16 => (16, DT_INT16),
            DT_FLOAT64 => (64, DT_FLOAT64),
            other => (32, other),
        };
        put_i16(&mut h, 70, dt);
        put_i16(&mut h, 72, bitpix);
        let pixdim = [1.0, self.spacing[2], self.spacing[1], self.spacing[0], 1.0, 1.0, 1.0, 1.0];
        for (i, p) in pixdim.iter().enumerate() {
            put_f32(&mut h, 76 + 4 * i, *p);
        }
        put_f32(&mut h, 108, MIN_VOX_OFFSET as f32);
        put_f32(&mut h, 112, self.scl_slope);
        put_f32(&mut h, 116, self.scl_inter);
        h[123] = 2; // xyzt_units: mm
        if let Some(srow) = self.srow {
            put_i16(&mut h, 254, 1);
            for (r, row) in srow.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    put_f32(&mut h, 280 + 16 * r + 4 * c, *v);
                }
            }
        }
        h[344..348].copy_from_slice(&self.magic);
        h
    }

    pub fn encode_f32(&self, data: &[f32]) -> Vec<u8> {
        let mut b = Self { datatype: DT_FLOAT32, ..self.clone() }.header();
        b.reserve(data.len() * 4);
        for v in data {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    pub fn encode_i16(&self, data: &[i16]) -> Vec<u8> {
        let mut b = Self { datatype: DT_INT16, ..self.clone() }.header();
        for v in data {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    pub fn encode_f64(&self, data: &[f64]) -> Vec<u8> {
        let mut b = Self { datatype: DT_FLOAT64, ..self.clone() }.header();
        for v in data {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }
}
