//! `.aoaf` feature files.
//!
//! Little-endian layout: magic `AOAF`, `u16` version (1), `u32` image
//! count, then per image a `u16` id length, the UTF-8 id, `u32 k`,
//! `u32 D_in` and `k·D_in` row-major `f32` values.

use std::path::Path;

use crate::error::{Error, FormatErrorKind, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"AOAF";
pub const VERSION: u16 = 1;

/// Raw feature rows of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub image_id: String,
    /// `k×D_in`, `k ≥ 1`.
    pub features: Tensor,
}

pub fn encode_features(sets: &[FeatureSet]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(sets.len() as u32).to_le_bytes());
    for s in sets {
        let id = s.image_id.as_bytes();
        let len = u16::try_from(id.len())
            .map_err(|_| Error::Data(format!("image id too long: {}", s.image_id)))?;
        let (k, d) = s.features.dims2();
        if k == 0 {
            return Err(Error::Data(format!("image {} has no feature rows", s.image_id)));
        }
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(&(k as u32).to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        for v in s.features.data() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn err(&self, kind: FormatErrorKind, offset: usize, detail: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            kind,
            offset: offset as u64,
            detail: detail.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(
                FormatErrorKind::Truncated,
                self.pos,
                format!("need {n} bytes for {what}, {} left", self.bytes.len() - self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Parses `.aoaf` bytes; `path` is only used in error messages.
pub fn decode_features(bytes: &[u8], path: &Path) -> Result<Vec<FeatureSet>> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4, "magic")? != MAGIC {
        return Err(r.err(FormatErrorKind::BadMagic, 0, "expected AOAF"));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(r.err(FormatErrorKind::BadVersion, 4, format!("version {version}")));
    }
    let count = r.u32("image count")? as usize;
    let mut sets = Vec::with_capacity(count.min(1 << 16));
    let mut width = None;
    for _ in 0..count {
        let id_at = r.pos;
        let len = r.u16("id length")? as usize;
        let id = std::str::from_utf8(r.take(len, "image id")?)
            .map_err(|e| r.err(FormatErrorKind::Malformed, id_at + 2, format!("image id is not UTF-8: {e}")))?
            .to_string();
        let shape_at = r.pos;
        let k = r.u32("k")? as usize;
        let d = r.u32("D_in")? as usize;
        if k == 0 || d == 0 {
            return Err(r.err(
                FormatErrorKind::ShapeMismatch,
                shape_at,
                format!("image {id} has empty shape {k}x{d}"),
            ));
        }
        if *width.get_or_insert(d) != d {
            return Err(r.err(
                FormatErrorKind::ShapeMismatch,
                shape_at + 4,
                format!("image {id} has width {d}, earlier images {}", width.unwrap()),
            ));
        }
        let n = k.checked_mul(d).and_then(|n| n.checked_mul(4)).ok_or_else(|| {
            r.err(FormatErrorKind::ShapeMismatch, shape_at, "shape overflows")
        })?;
        let raw = r.take(n, "feature values")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        sets.push(FeatureSet {
            image_id: id,
            features: Tensor::matrix(k, d, data)?,
        });
    }
    if r.pos != bytes.len() {
        return Err(r.err(
            FormatErrorKind::Malformed,
            r.pos,
            format!("{} trailing bytes", bytes.len() - r.pos),
        ));
    }
    Ok(sets)
}

pub fn write_features(path: &Path, sets: &[FeatureSet]) -> Result<()> {
    std::fs::write(path, encode_features(sets)?).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureSet>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes, path)
}
