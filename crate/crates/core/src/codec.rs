//! Little-endian binary framing shared by the model file formats.
//!
//! Every file is `magic (8 bytes) | version (u32) | payload | crc32 (u32)`,
//! where the CRC covers everything before it.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub(crate) fn new(magic: &[u8; 8], version: u32) -> Self {
        let mut buf = Vec::with_capacity(1024);
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&version.to_le_bytes());
        Encoder { buf }
    }

    pub(crate) fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn f64s(&mut self, vs: &[f64]) {
        self.buf.reserve(vs.len() * 8);
        for &v in vs {
            self.f64(v);
        }
    }

    pub(crate) fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf
    }
}

pub(crate) struct Decoder<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    /// Validates magic and version. The checksum is checked separately by
    /// [`Decoder::finish`] once the payload length is known.
    pub(crate) fn new(
        bytes: &'a [u8],
        magic: &[u8; 8],
        version: u32,
        kind: &'static str,
    ) -> Result<Self> {
        let mut d = Decoder { bytes, pos: 0 };
        let head = d.take(8)?;
        if head != magic {
            return Err(Error::BadMagic { expected: kind });
        }
        let found = d.u32()?;
        if found != version {
            return Err(Error::VersionMismatch {
                found,
                expected: version,
            });
        }
        Ok(d)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.saturating_add(n);
        if end > self.bytes.len() {
            return Err(Error::Truncated {
                offset: self.pos,
                needed: end.saturating_sub(self.bytes.len()),
            });
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    /// Fails with `Truncated` unless `n` more bytes (plus the trailing CRC) remain.
    pub(crate) fn require(&self, n: usize) -> Result<()> {
        let needed = n.saturating_add(4);
        let left = self.bytes.len().saturating_sub(self.pos);
        if left < needed {
            return Err(Error::Truncated {
                offset: self.pos,
                needed: needed - left,
            });
        }
        Ok(())
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        self.require(n.saturating_mul(8))?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub(crate) fn finish(mut self) -> Result<()> {
        let body_end = self.pos;
        let stored = self.u32()?;
        if self.pos != self.bytes.len() {
            return Err(Error::Shape(format!(
                "{} trailing bytes after checksum",
                self.bytes.len() - self.pos
            )));
        }
        let computed = crc32fast::hash(&self.bytes[..body_end]);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        Ok(())
    }
}

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = match dir {
        Some(d) => d.join(format!(".{file_name}.tmp")),
        None => Path::new(&format!(".{file_name}.tmp")).to_path_buf(),
    };
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}
