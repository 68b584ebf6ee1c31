//! Binary model format, little-endian throughout.
//!
//! ```text
//! BinarySvmModel:  "SVMB" u32 version
//!                  u8 kernel kind, u32 theta, f64 C, f64 bias, u64 n
//!                  n x (u64 support index, f64 alpha, i8 label)
//! LinearSvmModel:  "LSVM" u32 version, u64 dim, dim x f64 w, f64 v
//! ```
//!
//! Floats are stored as raw IEEE bits, so a round trip is bit-exact.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kernels::{KernelKind, KernelParams};

use super::{BinarySvmModel, LinearSvmModel};

pub const FORMAT_VERSION: u32 = 1;

/// Cursor over a byte slice with typed little-endian reads.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("unexpected end of data".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        usize::try_from(n).map_err(|_| Error::Format("length overflow".into()))
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(magic)
            )));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn kind_code(kind: KernelKind) -> u8 {
    match kind {
        KernelKind::Linear => 0,
        KernelKind::Poly => 1,
        KernelKind::PolyNorm => 2,
        KernelKind::Even => 3,
        KernelKind::Omega => 4,
    }
}

fn kind_from_code(code: u8) -> Result<KernelKind> {
    Ok(match code {
        0 => KernelKind::Linear,
        1 => KernelKind::Poly,
        2 => KernelKind::PolyNorm,
        3 => KernelKind::Even,
        4 => KernelKind::Omega,
        other => return Err(Error::Format(format!("unknown kernel code {other}"))),
    })
}

pub fn write_binary_model(out: &mut Vec<u8>, m: &BinarySvmModel) {
    out.extend_from_slice(b"SVMB");
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(kind_code(m.kernel.kind));
    out.extend_from_slice(&m.kernel.theta.to_le_bytes());
    out.extend_from_slice(&m.c.to_le_bytes());
    out.extend_from_slice(&m.bias.to_le_bytes());
    out.extend_from_slice(&(m.support.len() as u64).to_le_bytes());
    for k in 0..m.support.len() {
        out.extend_from_slice(&(m.support[k] as u64).to_le_bytes());
        out.extend_from_slice(&m.alphas[k].to_le_bytes());
        out.push(m.labels[k] as u8);
    }
}

pub fn read_binary_model(r: &mut Reader<'_>) -> Result<BinarySvmModel> {
    r.expect_magic(b"SVMB")?;
    let kind = kind_from_code(r.u8()?)?;
    let theta = r.u32()?;
    let c = r.f64()?;
    let bias = r.f64()?;
    let n = r.len()?;
    let mut m = BinarySvmModel::constant(bias, KernelParams { kind, theta }, c);
    for _ in 0..n {
        m.support.push(r.len()?);
        m.alphas.push(r.f64()?);
        let label = r.u8()? as i8;
        if label != 1 && label != -1 {
            return Err(Error::Format(format!("bad label {label}")));
        }
        m.labels.push(label);
    }
    Ok(m)
}

pub fn write_linear_model(out: &mut Vec<u8>, m: &LinearSvmModel) {
    out.extend_from_slice(b"LSVM");
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.w.len() as u64).to_le_bytes());
    for w in &m.w {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out.extend_from_slice(&m.v.to_le_bytes());
}

pub fn read_linear_model(r: &mut Reader<'_>) -> Result<LinearSvmModel> {
    r.expect_magic(b"LSVM")?;
    let n = r.len()?;
    let w = (0..n).map(|_| r.f64()).collect::<Result<Vec<f64>>>()?;
    let v = r.f64()?;
    Ok(LinearSvmModel { w, v })
}

/// Human-readable summary written next to binary model files.
pub fn manifest_text(m: &BinarySvmModel) -> String {
    let mut s = String::new();
    writeln!(s, "kernel={:?}", m.kernel.kind).unwrap();
    writeln!(s, "theta={}", m.kernel.theta).unwrap();
    writeln!(s, "C={}", m.c).unwrap();
    writeln!(s, "bias={:e}", m.bias).unwrap();
    writeln!(s, "support_vectors={}", m.support.len()).unwrap();
    s
}
