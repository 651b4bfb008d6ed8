use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// The ablation architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Max-pool of the input views, no graph embedding.
    Baseline,
    /// Pairwise relation module, then pooling.
    Pairwise,
    /// Neighboring relation module, then pooling.
    Neighboring,
    /// Full hierarchy truncated to one embedding stage.
    OneLevel,
    /// Full hierarchy.
    Full,
    /// Full hierarchy without per-block normalization.
    WithoutNorm,
    /// Neighboring function replaced by an element-wise max over the triplet.
    MaxPool,
    /// Neighboring function replaced by an element-wise mean over the triplet.
    AvgPool,
    /// Neighboring function replaced by the center feature.
    Identity,
}

/// How each node is combined with its ring neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborKind {
    Learned,
    Max,
    Avg,
    Identity,
}

/// Which stages run and where descriptor blocks are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// `depth` rounds of pairwise → pool → neighboring → coarsen, then a final pool.
    Hierarchical,
    /// One pairwise stage, pooled.
    PairwiseOnly,
    /// One neighboring stage on the raw views, pooled.
    NeighborOnly,
}

/// Resolved wiring for a variant on a given geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariantSpec {
    pub variant: Variant,
    pub layout: Layout,
    pub depth: usize,
    pub normalize: bool,
    pub neighbor: NeighborKind,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::Baseline,
        Variant::Pairwise,
        Variant::Neighboring,
        Variant::OneLevel,
        Variant::Full,
        Variant::WithoutNorm,
        Variant::MaxPool,
        Variant::AvgPool,
        Variant::Identity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Pairwise => "pr",
            Variant::Neighboring => "nr",
            Variant::OneLevel => "hrge-1l",
            Variant::Full => "hrge",
            Variant::WithoutNorm => "hrge-won",
            Variant::MaxPool => "hrge-mp",
            Variant::AvgPool => "hrge-ap",
            Variant::Identity => "hrge-id",
        }
    }

    /// Stable numeric tag used in checkpoints.
    pub fn tag(self) -> u32 {
        Self::ALL.iter().position(|&v| v == self).expect("listed") as u32
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }

    /// Wiring of this variant when the configured hierarchy depth is `depth`.
    pub fn spec(self, depth: usize) -> VariantSpec {
        let base = VariantSpec {
            variant: self,
            layout: Layout::Hierarchical,
            depth,
            normalize: true,
            neighbor: NeighborKind::Learned,
        };
        match self {
            Variant::Baseline => VariantSpec { depth: 0, ..base },
            Variant::Pairwise => VariantSpec {
                layout: Layout::PairwiseOnly,
                depth: 0,
                ..base
            },
            Variant::Neighboring => VariantSpec {
                layout: Layout::NeighborOnly,
                depth: 0,
                ..base
            },
            Variant::OneLevel => VariantSpec { depth: 1, ..base },
            Variant::Full => base,
            Variant::WithoutNorm => VariantSpec {
                normalize: false,
                ..base
            },
            Variant::MaxPool => VariantSpec {
                neighbor: NeighborKind::Max,
                ..base
            },
            Variant::AvgPool => VariantSpec {
                neighbor: NeighborKind::Avg,
                ..base
            },
            Variant::Identity => VariantSpec {
                neighbor: NeighborKind::Identity,
                ..base
            },
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    /// Accepts the canonical names plus the table spellings, e.g.
    /// `HRGE-Net-1L`, `HRGE-Net (w/o N)`, `full`.
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        let key = key
            .strip_prefix("hrgenet")
            .or_else(|| key.strip_prefix("hrge"))
            .unwrap_or(&key);
        let v = match key {
            "baseline" => Variant::Baseline,
            "pr" => Variant::Pairwise,
            "nr" => Variant::Neighboring,
            "1l" => Variant::OneLevel,
            "" | "full" => Variant::Full,
            "won" | "wonorm" => Variant::WithoutNorm,
            "mp" => Variant::MaxPool,
            "ap" => Variant::AvgPool,
            "id" => Variant::Identity,
            _ => return Err(Error::Config(format!("unknown variant {s:?}"))),
        };
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_table_spellings() {
        assert_eq!("HRGE-Net-1L".parse::<Variant>().unwrap(), Variant::OneLevel);
        assert_eq!("HRGE-Net(w/o N)".parse::<Variant>().unwrap(), Variant::WithoutNorm);
        assert_eq!("full".parse::<Variant>().unwrap(), Variant::Full);
        assert_eq!("HRGE-Net".parse::<Variant>().unwrap(), Variant::Full);
        assert_eq!("Baseline".parse::<Variant>().unwrap(), Variant::Baseline);
        assert!("resnet".parse::<Variant>().is_err());
    }

    #[test]
    fn names_and_tags_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            assert_eq!(Variant::from_tag(v.tag()), Some(v));
        }
        assert_eq!(Variant::from_tag(9), None);
    }

    #[test]
    fn one_level_overrides_depth() {
        assert_eq!(Variant::OneLevel.spec(2).depth, 1);
        assert_eq!(Variant::Full.spec(2).depth, 2);
        assert!(!Variant::WithoutNorm.spec(2).normalize);
        assert_eq!(Variant::Identity.spec(2).neighbor, NeighborKind::Identity);
    }
}
