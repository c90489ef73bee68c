//! `T4F8` binary tensor format: the ASCII magic `T4F8`, four little-endian
//! `u64` dims (C, T, H, W), then `C*T*H*W` little-endian `f64` values.

use std::io::{Read, Write};

use super::{Dims4, ParamTensor, Tensor4};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"T4F8";

/// Writes raw dims and values. Used for both tensors and parameters.
pub(crate) fn write_block<W: Write>(out: &mut W, dims: [u64; 4], values: &[f64]) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    for d in dims {
        out.write_all(&d.to_le_bytes())?;
    }
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_block<R: Read>(input: &mut R) -> std::io::Result<([u64; 4], Vec<f64>)> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("bad magic {magic:?}, expected T4F8"),
        ));
    }
    let mut dims = [0u64; 4];
    let mut buf = [0u8; 8];
    for d in &mut dims {
        input.read_exact(&mut buf)?;
        *d = u64::from_le_bytes(buf);
    }
    let n = dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n <= (1 << 34))
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "tensor too large"))?;
    let mut values = Vec::with_capacity(n as usize);
    for _ in 0..n {
        input.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    Ok((dims, values))
}

pub fn write_tensor<W: Write>(out: &mut W, t: &Tensor4) -> std::io::Result<()> {
    let d = t.dims();
    write_block(out, [d.c as u64, d.t as u64, d.h as u64, d.w as u64], t.data())
}

pub fn read_tensor<R: Read>(input: &mut R) -> std::io::Result<Tensor4> {
    let (dims, values) = read_block(input)?;
    let d = Dims4::new(dims[0] as usize, dims[1] as usize, dims[2] as usize, dims[3] as usize);
    Tensor4::from_vec(d, values)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))
}

/// Parameters are padded with trailing ones to four dims.
pub fn write_param<W: Write>(out: &mut W, p: &ParamTensor) -> std::io::Result<()> {
    let mut dims = [1u64; 4];
    assert!(p.shape().len() <= 4, "parameter rank above 4");
    for (d, s) in dims.iter_mut().zip(p.shape()) {
        *d = *s as u64;
    }
    write_block(out, dims, &p.value)
}

/// Reads a parameter block and checks it against the expected shape.
pub fn read_param<R: Read>(input: &mut R, expected: &[usize]) -> std::io::Result<ParamTensor> {
    let (dims, values) = read_block(input)?;
    let mut want = [1u64; 4];
    for (d, s) in want.iter_mut().zip(expected) {
        *d = *s as u64;
    }
    if dims != want {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("parameter dims {dims:?} do not match expected {expected:?}"),
        ));
    }
    ParamTensor::from_values(expected, values)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))
}

pub fn save_tensor(path: &std::path::Path, t: &Tensor4) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    write_tensor(&mut f, t).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: &std::path::Path) -> Result<Tensor4> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path).map_err(|e| Error::io(path, e))?);
    read_tensor(&mut f).map_err(|e| match e.kind() {
        std::io::ErrorKind::InvalidData | std::io::ErrorKind::UnexpectedEof => Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        },
        _ => Error::io(path, e),
    })
}
