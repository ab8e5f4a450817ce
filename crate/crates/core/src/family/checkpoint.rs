//! Binary `λ` checkpoints.
//!
//! Layout (little-endian): magic `CVIL`, `u16` version, `u64` m, `u64` k,
//! `u8` transform code, `u8` skew flag, a 16-byte ASCII tag (zero padded,
//! used for the experiment hash), `u64` count, then `count` `f64` values in
//! layout order.

use std::io::{Read, Write};

use super::FamilySpec;
use crate::error::{Error, Result};
use crate::transforms::TransformKind;

const MAGIC: &[u8; 4] = b"CVIL";
const VERSION: u16 = 1;
pub const TAG_LEN: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: FamilySpec,
    pub lambda: Vec<f64>,
    /// Empty when the writer supplied no tag.
    pub tag: String,
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    spec: &FamilySpec,
    lambda: &[f64],
    tag: &str,
) -> Result<()> {
    if tag.len() > TAG_LEN || !tag.is_ascii() || tag.contains('\0') {
        return Err(Error::Checkpoint(format!(
            "tag must be at most {TAG_LEN} ASCII characters"
        )));
    }
    if lambda.len() != spec.param_count() {
        return Err(Error::DimensionMismatch {
            expected: spec.param_count(),
            actual: lambda.len(),
            context: "checkpoint parameters",
        });
    }
    let mut buf = Vec::with_capacity(32 + 8 * lambda.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(spec.m as u64).to_le_bytes());
    buf.extend_from_slice(&(spec.k as u64).to_le_bytes());
    buf.push(spec.transform.code());
    buf.push(spec.skew as u8);
    let mut tag_bytes = [0u8; TAG_LEN];
    tag_bytes[..tag.len()].copy_from_slice(tag.as_bytes());
    buf.extend_from_slice(&tag_bytes);
    buf.extend_from_slice(&(lambda.len() as u64).to_le_bytes());
    for v in lambda {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
        .map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let m = cur.u64()? as usize;
    let k = cur.u64()? as usize;
    let code = cur.take(1)?[0];
    let transform = TransformKind::from_code(code)
        .ok_or_else(|| Error::Checkpoint(format!("unknown transform code {code}")))?;
    let skew = match cur.take(1)?[0] {
        0 => false,
        1 => true,
        other => return Err(Error::Checkpoint(format!("bad skew flag {other}"))),
    };
    let spec = FamilySpec::new(m, k, transform, skew)?;
    let raw = cur.take(TAG_LEN)?;
    let end = raw.iter().position(|&b| b == 0).unwrap_or(TAG_LEN);
    let tag = std::str::from_utf8(&raw[..end])
        .ok()
        .filter(|t| t.is_ascii())
        .ok_or_else(|| Error::Checkpoint("tag is not ASCII".into()))?
        .to_string();
    let n = cur.u64()? as usize;
    if n != spec.param_count() {
        return Err(Error::Checkpoint(format!(
            "header declares {n} values but the family has {}",
            spec.param_count()
        )));
    }
    let lambda = (0..n)
        .map(|_| Ok(f64::from_le_bytes(cur.take(8)?.try_into().unwrap())))
        .collect::<Result<Vec<_>>>()?;
    if cur.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(Checkpoint { spec, lambda, tag })
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let out = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
