//! Model checkpoints: a fixed header followed by every parameter block in
//! declaration order.
//!
//! ```text
//! "HRGM"  u32 version = 1
//! u32 views  u32 stride  u32 depth  u32 width  u32 hidden  u32 offset
//! u32 variant tag  u32 num_classes  u32 block count
//! per block: u16 name length, UTF-8 name, u32 value count, count × f64
//! ```
//!
//! All integers and floats are little-endian.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{put_f64s, put_string, put_u32, to_u32, ByteReader};
use crate::nn::{params_prefixed, ParamBlock, Parameterized};
use crate::trainer::Classifier;
use crate::{Error, Result};

use super::{Geometry, HrgeModel, Layout, NeighborKind, Variant};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HRGM";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained network: the embedding model plus its classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: HrgeModel,
    pub classifier: Classifier,
}

impl Checkpoint {
    pub fn new(model: HrgeModel, classifier: Classifier) -> Result<Self> {
        if classifier.in_dim() != model.descriptor_len() {
            return Err(Error::shape(
                "checkpoint classifier",
                format!("input width {}", model.descriptor_len()),
                classifier.in_dim(),
            ));
        }
        Ok(Self { model, classifier })
    }

    fn blocks(&mut self) -> Vec<ParamBlock<'_>> {
        let mut out = self.model.param_blocks();
        out.extend(params_prefixed("classifier", self.classifier.param_blocks()));
        out
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let g = *self.model.geometry();
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        for (v, what) in [
            (g.num_views, "views"),
            (g.stride, "stride"),
            (g.depth, "depth"),
            (g.width, "width"),
            (g.hidden, "hidden"),
            (g.offset, "offset"),
        ] {
            put_u32(&mut out, to_u32(v, what)?);
        }
        put_u32(&mut out, self.model.variant().tag());
        put_u32(&mut out, to_u32(self.classifier.num_classes(), "num_classes")?);
        let mut copy = self.clone();
        let blocks = copy.blocks();
        put_u32(&mut out, to_u32(blocks.len(), "block count")?);
        for b in &blocks {
            put_string(&mut out, &b.name)?;
            put_u32(&mut out, to_u32(b.value.len(), "block length")?);
            put_f64s(&mut out, b.value);
        }
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf);
        r.magic(CHECKPOINT_MAGIC)?;
        let version_at = r.position();
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Parse {
                offset: version_at,
                message: format!("unsupported checkpoint version {version}"),
            });
        }
        let header_at = r.position();
        let mut field = |what: &str| -> Result<usize> { Ok(r.u32(what)? as usize) };
        let geometry = Geometry {
            num_views: field("views")?,
            stride: field("stride")?,
            depth: field("depth")?,
            width: field("width")?,
            hidden: field("hidden")?,
            offset: field("offset")?,
        };
        let tag_at = r.position();
        let tag = r.u32("variant tag")?;
        let variant = Variant::from_tag(tag).ok_or_else(|| Error::Parse {
            offset: tag_at,
            message: format!("unknown variant tag {tag}"),
        })?;
        let classes_at = r.position();
        let num_classes = r.u32("num_classes")? as usize;

        let header_err = |offset: usize, e: Error| Error::Parse {
            offset,
            message: format!("invalid header: {e}"),
        };
        // Bound sizes before allocating the skeleton.
        let parameters = estimated_params(&geometry, variant, num_classes);
        if parameters.is_none_or(|p| p.saturating_mul(8) > r.remaining()) {
            return Err(Error::Parse {
                offset: header_at,
                message: "header describes more parameters than the file holds".into(),
            });
        }
        if num_classes == 0 {
            return Err(Error::Parse {
                offset: classes_at,
                message: "num_classes must be positive".into(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = HrgeModel::new(geometry, variant, &mut rng).map_err(|e| header_err(header_at, e))?;
        if model.geometry().depth != geometry.depth {
            return Err(Error::Parse {
                offset: header_at,
                message: format!("depth {} inconsistent with variant {variant}", geometry.depth),
            });
        }
        let classifier = Classifier::new(model.descriptor_len(), num_classes, &mut rng);
        let mut ckpt = Checkpoint { model, classifier };

        let count_at = r.position();
        let count = r.u32("block count")? as usize;
        let mut blocks = ckpt.blocks();
        if count != blocks.len() {
            return Err(Error::Parse {
                offset: count_at,
                message: format!("expected {} parameter blocks, found {count}", blocks.len()),
            });
        }
        for block in blocks.iter_mut() {
            let at = r.position();
            let name = r.string("block name")?;
            if name != block.name {
                return Err(Error::Parse {
                    offset: at,
                    message: format!("expected block {:?}, found {name:?}", block.name),
                });
            }
            let len_at = r.position();
            let len = r.u32("block length")? as usize;
            if len != block.value.len() {
                return Err(Error::Parse {
                    offset: len_at,
                    message: format!("block {name} should hold {} values, header says {len}", block.value.len()),
                });
            }
            let values = r.f64_vec(len, "parameter block")?;
            block.value.copy_from_slice(&values);
        }
        drop(blocks);
        r.finish()?;
        Ok(ckpt)
    }

    /// Human-readable summary of the header and block layout.
    pub fn manifest(&self) -> String {
        let g = self.model.geometry();
        let mut s = String::new();
        let _ = writeln!(s, "format=HRGM");
        let _ = writeln!(s, "version={CHECKPOINT_VERSION}");
        let _ = writeln!(s, "variant={}", self.model.variant());
        let _ = writeln!(s, "views={}", g.num_views);
        let _ = writeln!(s, "stride={}", g.stride);
        let _ = writeln!(s, "depth={}", g.depth);
        let _ = writeln!(s, "width={}", g.width);
        let _ = writeln!(s, "hidden={}", g.hidden);
        let _ = writeln!(s, "offset={}", g.offset);
        let _ = writeln!(s, "num_classes={}", self.classifier.num_classes());
        let _ = writeln!(s, "descriptor_len={}", self.model.descriptor_len());
        let mut copy = self.clone();
        let blocks = copy.blocks();
        let _ = writeln!(s, "blocks={}", blocks.len());
        let mut total = 0;
        for b in &blocks {
            total += b.value.len();
            let _ = writeln!(s, "block {} {}", b.name, b.value.len());
        }
        let _ = writeln!(s, "parameters={total}");
        s
    }

    /// Writes the checkpoint and a `<path>.manifest.txt` next to it.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<PathBuf> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))?;
        let manifest = manifest_path(path);
        std::fs::write(&manifest, self.manifest()).map_err(|e| Error::io(&manifest, e))?;
        Ok(manifest)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&buf)
    }
}

fn manifest_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.txt");
    PathBuf::from(name)
}

// Upper bound on parameter count implied by a header, `None` on overflow.
/// Exact scalar parameter count of a checkpoint with this header, or `None`
/// on overflow.
fn estimated_params(g: &Geometry, variant: Variant, classes: usize) -> Option<usize> {
    let spec = variant.spec(g.depth);
    let (w, h) = (g.width, g.hidden);
    let linear = |i: usize, o: usize| i.checked_mul(o)?.checked_add(o);
    let pairwise = linear(w.checked_mul(2)?, h)?
        .checked_add(linear(h, h)?)?
        .checked_add(linear(h, w)?)?
        .checked_add(linear(w.checked_mul(2)?, w)?)?;
    let neighbor = match spec.neighbor {
        NeighborKind::Learned => linear(w.checked_mul(3)?, w)?,
        _ => 0,
    };
    let (levels, blocks) = match spec.layout {
        Layout::Hierarchical => (
            pairwise.checked_add(neighbor)?.checked_mul(spec.depth)?,
            spec.depth.checked_add(1)?,
        ),
        Layout::PairwiseOnly => (pairwise, 1),
        Layout::NeighborOnly => (neighbor, 1),
    };
    levels.checked_add(linear(blocks.checked_mul(w)?, classes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(variant: Variant) -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let model = HrgeModel::new(Geometry::six_view(3), variant, &mut rng).unwrap();
        let classifier = Classifier::new(model.descriptor_len(), 4, &mut rng);
        Checkpoint::new(model, classifier).unwrap()
    }

    #[test]
    fn size_bound_is_exact() {
        for v in Variant::ALL {
            let mut c = sample(v);
            let actual: usize = c.blocks().iter().map(|b| b.value.len()).sum();
            assert_eq!(estimated_params(c.model.geometry(), v, 4), Some(actual), "{v}");
        }
    }

    #[test]
    fn round_trips_every_variant() {
        for v in Variant::ALL {
            let c = sample(v);
            let bytes = c.encode().unwrap();
            let back = Checkpoint::decode(&bytes).unwrap();
            assert_eq!(back, c, "{v}");
            assert_eq!(back.encode().unwrap(), bytes);
        }
    }

    #[test]
    fn truncation_is_located() {
        let bytes = sample(Variant::Full).encode().unwrap();
        let cut = bytes.len() - 5;
        match Checkpoint::decode(&bytes[..cut]) {
            Err(Error::Parse { offset, .. }) => assert!(offset <= cut),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_tag() {
        let mut bytes = sample(Variant::Full).encode().unwrap();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::decode(&bytes), Err(Error::Parse { offset: 0, .. })));
        let mut bytes = sample(Variant::Full).encode().unwrap();
        bytes[32] = 77;
        assert!(matches!(Checkpoint::decode(&bytes), Err(Error::Parse { offset: 32, .. })));
    }

    #[test]
    fn manifest_lists_blocks() {
        let m = sample(Variant::Full).manifest();
        assert!(m.contains("variant=hrge"));
        assert!(m.contains("block level0.pairwise.relation.layer0.weight 18"));
        assert!(m.contains("block classifier.head.bias 4"));
    }
}
