use crate::{Error, Result};

/// Shape of the view hierarchy and layer widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    /// Number of input views `N` (ring size at level 0).
    pub num_views: usize,
    /// Coarsening stride `s`.
    pub stride: usize,
    /// Number of relational embedding stages `L`.
    pub depth: usize,
    /// View feature width, preserved across levels.
    pub width: usize,
    /// Width of the hidden layers of the pairwise relation MLP.
    pub hidden: usize,
    /// Phase of the coarsening selection; 0 keeps ring positions `s, 2s, …` (1-based).
    pub offset: usize,
}

impl Geometry {
    /// 12 views, stride 2, hierarchy 12 → 6 → 3.
    pub fn twelve_view(width: usize) -> Self {
        Self {
            num_views: 12,
            stride: 2,
            depth: 2,
            width,
            hidden: width,
            offset: 0,
        }
    }

    /// 6 views, stride 2, hierarchy 6 → 3.
    pub fn six_view(width: usize) -> Self {
        Self {
            num_views: 6,
            depth: 1,
            ..Self::twelve_view(width)
        }
    }

    /// Deepest hierarchy for `num_views` and `stride` that keeps every
    /// embedded ring at three or more nodes.
    pub fn max_depth(num_views: usize, stride: usize) -> usize {
        if stride < 2 {
            return 0;
        }
        let mut depth = 0;
        let mut nodes = num_views;
        while nodes >= 3 && nodes.is_multiple_of(stride) {
            nodes /= stride;
            depth += 1;
        }
        depth
    }

    /// Node counts `[N_0, …, N_L]`.
    pub fn node_counts(&self) -> Vec<usize> {
        let mut counts = vec![self.num_views];
        let mut n = self.num_views;
        for _ in 0..self.depth {
            n /= self.stride.max(1);
            counts.push(n);
        }
        counts
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_views == 0 || self.width == 0 || self.hidden == 0 {
            return Err(Error::Config(format!(
                "views, width and hidden width must be positive: {self:?}"
            )));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be >= 1".into()));
        }
        if self.offset >= self.stride {
            return Err(Error::Config(format!(
                "coarsening offset {} must be smaller than stride {}",
                self.offset, self.stride
            )));
        }
        let factor = u32::try_from(self.depth)
            .ok()
            .and_then(|d| self.stride.checked_pow(d))
            .ok_or_else(|| Error::Config(format!("stride {}^{} overflows", self.stride, self.depth)))?;
        if !self.num_views.is_multiple_of(factor) {
            return Err(Error::Config(format!(
                "{} views are not divisible by stride^depth = {}^{} = {}",
                self.num_views, self.stride, self.depth, factor
            )));
        }
        if self.depth > 0 {
            let counts = self.node_counts();
            let smallest_embedded = counts[self.depth - 1];
            if smallest_embedded < 3 {
                return Err(Error::RingTooSmall {
                    nodes: smallest_embedded,
                });
            }
        }
        Ok(())
    }
}
