//! `HRGF` v1 feature container.
//!
//! ```text
//! "HRGF"  u32 version = 1  u32 record count  u32 N  u32 D
//! u32 num_classes  u32 num_fine_classes (0 = absent)
//! per record:
//!   u16 id length, UTF-8 id
//!   u32 coarse label
//!   u32 fine label (0xFFFFFFFF = absent)
//!   N × D f64, row-major
//! ```
//!
//! Little-endian throughout. Encoding is canonical, so decode → encode
//! reproduces the input bytes.

use std::path::Path;

use crate::codec::{put_f64s, put_string, put_u32, to_u32, ByteReader};
use crate::nn::Matrix;
use crate::{Error, Result};

use super::{FeatureDataset, ShapeRecord};

pub const HRGF_MAGIC: &[u8; 4] = b"HRGF";
pub const HRGF_VERSION: u32 = 1;
pub const NO_FINE_LABEL: u32 = u32::MAX;

impl FeatureDataset {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let payload = self.num_views * self.dim * 8;
        let mut out = Vec::with_capacity(28 + self.records.len() * (payload + 32));
        out.extend_from_slice(HRGF_MAGIC);
        put_u32(&mut out, HRGF_VERSION);
        put_u32(&mut out, to_u32(self.records.len(), "record count")?);
        put_u32(&mut out, to_u32(self.num_views, "N")?);
        put_u32(&mut out, to_u32(self.dim, "D")?);
        put_u32(&mut out, to_u32(self.num_classes, "num_classes")?);
        put_u32(&mut out, to_u32(self.num_fine_classes.unwrap_or(0), "num_fine_classes")?);
        for r in &self.records {
            put_string(&mut out, &r.id)?;
            put_u32(&mut out, to_u32(r.coarse_label, "coarse label")?);
            let fine = match r.fine_label {
                Some(f) => to_u32(f, "fine label")?,
                None => NO_FINE_LABEL,
            };
            put_u32(&mut out, fine);
            put_f64s(&mut out, r.views.data());
        }
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf);
        r.magic(HRGF_MAGIC)?;
        let at = r.position();
        let version = r.u32("version")?;
        if version != HRGF_VERSION {
            return Err(Error::Parse {
                offset: at,
                message: format!("unsupported HRGF version {version}"),
            });
        }
        let count_at = r.position();
        let count = r.u32("record count")? as usize;
        let n = r.u32("N")? as usize;
        let d = r.u32("D")? as usize;
        let num_classes = r.u32("num_classes")? as usize;
        let fine_raw = r.u32("num_fine_classes")? as usize;
        let num_fine = (fine_raw != 0).then_some(fine_raw);

        // Each record needs at least 2 + 4 + 4 + 8·N·D bytes.
        let min_record = n
            .checked_mul(d)
            .and_then(|nd| nd.checked_mul(8))
            .and_then(|p| p.checked_add(10))
            .ok_or_else(|| Error::Parse {
                offset: count_at,
                message: format!("record size overflows for N={n}, D={d}"),
            })?;
        if count.saturating_mul(min_record) > r.remaining() {
            return Err(Error::Parse {
                offset: count_at,
                message: format!(
                    "header declares {count} records of at least {min_record} bytes, only {} bytes follow",
                    r.remaining()
                ),
            });
        }

        let mut records = Vec::with_capacity(count);
        for index in 0..count {
            let id = r.string("record id")?;
            let coarse_label = r.u32("coarse label")? as usize;
            let fine = r.u32("fine label")?;
            let fine_label = (fine != NO_FINE_LABEL).then_some(fine as usize);
            let values = r.f64_vec(n * d, "view payload").map_err(|e| match e {
                Error::Parse { offset, message } => Error::Parse {
                    offset,
                    message: format!("record {index} ({id}): {message}"),
                },
                other => other,
            })?;
            let views = Matrix::new(n, d, values)?;
            records.push(ShapeRecord {
                id,
                views,
                coarse_label,
                fine_label,
            });
        }
        r.finish()?;
        Self::with_geometry(records, num_classes, num_fine, n, d)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&buf)
    }
}
