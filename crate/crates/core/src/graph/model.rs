use rand::Rng;

use crate::nn::{params_prefixed, Matrix, ParamBlock, Parameterized};
use crate::{Error, Result};

use super::geometry::Geometry;
use super::modules::{
    coarsen_indices, neighbor_backward, neighbor_forward, pairwise_backward, pairwise_forward, pool_backward,
    pool_forward, Neighboring, NeighborTrace, PairwiseParams, PairwiseTrace, PoolTrace,
};
use super::variant::{Layout, Variant, VariantSpec};

/// Parameters of one embedding stage. Stages of reduced variants leave one
/// of the modules out.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelParams {
    pub pairwise: Option<PairwiseParams>,
    pub neighboring: Option<Neighboring>,
}

impl Parameterized for LevelParams {
    fn param_blocks(&mut self) -> Vec<ParamBlock<'_>> {
        let mut out = Vec::new();
        if let Some(p) = &mut self.pairwise {
            out.extend(params_prefixed("pairwise", p.param_blocks()));
        }
        if let Some(n) = &mut self.neighboring {
            out.extend(params_prefixed("neighboring", n.param_blocks()));
        }
        out
    }
}

/// Per-level descriptor blocks `[F_0, …, F_L]` of one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalDescriptor {
    pub blocks: Vec<Vec<f64>>,
    /// Blocks whose pooled feature had (near-)zero norm and were left as is.
    pub degenerate: Vec<bool>,
}

impl GlobalDescriptor {
    pub fn concat(&self) -> Vec<f64> {
        self.blocks.concat()
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The relational graph embedding network for one variant and geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct HrgeModel {
    geometry: Geometry,
    spec: VariantSpec,
    levels: Vec<LevelParams>,
}

impl HrgeModel {
    /// Builds the wiring of `variant`. For hierarchical variants the depth is
    /// taken from the variant (fixed for the baseline and one-level variants)
    /// or from `geometry.depth`.
    pub fn new<R: Rng + ?Sized>(geometry: Geometry, variant: Variant, rng: &mut R) -> Result<Self> {
        let spec = variant.spec(geometry.depth);
        let geometry = Geometry {
            depth: spec.depth,
            ..geometry
        };
        geometry.validate()?;
        let w = geometry.width;
        let levels = match spec.layout {
            Layout::Hierarchical => (0..spec.depth)
                .map(|_| LevelParams {
                    pairwise: Some(PairwiseParams::new(w, geometry.hidden, rng)),
                    neighboring: Some(Neighboring::new(spec.neighbor, w, rng)),
                })
                .collect(),
            Layout::PairwiseOnly => vec![LevelParams {
                pairwise: Some(PairwiseParams::new(w, geometry.hidden, rng)),
                neighboring: None,
            }],
            Layout::NeighborOnly => {
                if geometry.num_views < 3 {
                    return Err(Error::RingTooSmall {
                        nodes: geometry.num_views,
                    });
                }
                vec![LevelParams {
                    pairwise: None,
                    neighboring: Some(Neighboring::new(spec.neighbor, w, rng)),
                }]
            }
        };
        Ok(Self { geometry, spec, levels })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn variant(&self) -> Variant {
        self.spec.variant
    }

    pub fn spec(&self) -> &VariantSpec {
        &self.spec
    }

    pub fn levels(&self) -> &[LevelParams] {
        &self.levels
    }

    pub fn levels_mut(&mut self) -> &mut [LevelParams] {
        &mut self.levels
    }

    pub fn num_blocks(&self) -> usize {
        match self.spec.layout {
            Layout::Hierarchical => self.spec.depth + 1,
            Layout::PairwiseOnly | Layout::NeighborOnly => 1,
        }
    }

    pub fn descriptor_len(&self) -> usize {
        self.num_blocks() * self.geometry.width
    }

    /// Descriptor of a single shape (`views` is `N × width`).
    pub fn forward(&self, views: &Matrix) -> Result<GlobalDescriptor> {
        let (blocks, degenerate, _) = self.run(&[views])?;
        Ok(GlobalDescriptor {
            blocks: blocks.iter().map(|b| b.row(0).to_vec()).collect(),
            degenerate: degenerate.into_iter().map(|d| d[0]).collect(),
        })
    }

    /// Concatenated descriptors of a batch, one row per shape.
    pub fn forward_batch(&self, views: &[&Matrix]) -> Result<Matrix> {
        let (blocks, _, _) = self.run(views)?;
        Matrix::hcat(&blocks.iter().collect::<Vec<_>>())
    }

    /// Like [`forward_batch`](Self::forward_batch) but keeps what
    /// [`backward`](Self::backward) needs.
    pub fn forward_traced(&self, views: &[&Matrix]) -> Result<(Matrix, ForwardTrace)> {
        let (blocks, _, trace) = self.run(views)?;
        let out = Matrix::hcat(&blocks.iter().collect::<Vec<_>>())?;
        Ok((out, ForwardTrace { inner: Some(trace) }))
    }

    /// Accumulates parameter gradients given `dL/dF` (`batch × descriptor_len`)
    /// and returns the gradient with respect to the stacked input views.
    pub fn backward(&mut self, trace: &mut ForwardTrace, grad: &Matrix) -> Result<Matrix> {
        let t = trace.inner.take().ok_or(Error::StaleCache)?;
        let w = self.geometry.width;
        if grad.rows() != t.batch || grad.cols() != self.descriptor_len() {
            return Err(Error::shape(
                "HRGE backward",
                format!("{}x{}", t.batch, self.descriptor_len()),
                format!("{}x{}", grad.rows(), grad.cols()),
            ));
        }
        let block_grad = |k: usize| -> Matrix {
            let mut m = Matrix::zeros(t.batch, w);
            for b in 0..t.batch {
                m.row_mut(b).copy_from_slice(&grad.row(b)[k * w..(k + 1) * w]);
            }
            m
        };
        let last_block = self.num_blocks() - 1;

        let mut gx = Matrix::zeros(t.final_rows, w);
        pool_backward(&t.final_pool, &block_grad(last_block), &mut gx);

        for (l, (lt, params)) in t.levels.into_iter().zip(self.levels.iter_mut()).enumerate().rev() {
            let LevelTrace {
                pairwise,
                pool,
                neighbor,
                coarsen,
            } = lt;
            let mut g = match coarsen {
                Some((idx, rows_before, nodes_after)) => {
                    let nodes_before = rows_before / t.batch;
                    let mut scattered = Matrix::zeros(rows_before, w);
                    for r in 0..gx.rows() {
                        let (b, i) = (r / nodes_after, r % nodes_after);
                        let src = b * nodes_before + idx[i];
                        scattered.row_mut(src).copy_from_slice(gx.row(r));
                    }
                    scattered
                }
                None => gx,
            };
            if let (Some(nt), Some(h)) = (neighbor, params.neighboring.as_mut()) {
                g = neighbor_backward(h, &nt, &g)?;
            }
            if let Some(pt) = pool {
                pool_backward(&pt, &block_grad(l), &mut g);
            }
            if let (Some(mut pt), Some(p)) = (pairwise, params.pairwise.as_mut()) {
                g = pairwise_backward(p, &mut pt, &g)?;
            }
            gx = g;
        }
        Ok(gx)
    }

    fn run(&self, views: &[&Matrix]) -> Result<(Vec<Matrix>, Vec<Vec<bool>>, Trace)> {
        let n = self.geometry.num_views;
        let w = self.geometry.width;
        if views.is_empty() {
            return Err(Error::EmptyInput("forward over an empty batch"));
        }
        for v in views {
            if v.rows() != n || v.cols() != w {
                return Err(Error::shape(
                    "HRGE input views",
                    format!("{n}x{w}"),
                    format!("{}x{}", v.rows(), v.cols()),
                ));
            }
        }
        let batch = views.len();
        let normalize = self.spec.normalize;
        let hierarchical = self.spec.layout == Layout::Hierarchical;

        let mut x = Matrix::vcat(views)?;
        let mut nodes = n;
        let mut blocks = Vec::with_capacity(self.num_blocks());
        let mut degenerate = Vec::with_capacity(self.num_blocks());
        let mut level_traces = Vec::with_capacity(self.levels.len());

        for level in &self.levels {
            let mut lt = LevelTrace {
                pairwise: None,
                pool: None,
                neighbor: None,
                coarsen: None,
            };
            let x_tilde = match &level.pairwise {
                Some(p) => {
                    let (out, t) = pairwise_forward(p, &x, nodes)?;
                    lt.pairwise = Some(t);
                    out
                }
                None => x,
            };
            if hierarchical {
                let (block, deg, t) = pool_forward(&x_tilde, nodes, normalize)?;
                blocks.push(block);
                degenerate.push(deg);
                lt.pool = Some(t);
            }
            let x_hat = match &level.neighboring {
                Some(h) => {
                    let (out, t) = neighbor_forward(h, &x_tilde, nodes)?;
                    lt.neighbor = Some(t);
                    out
                }
                None => x_tilde,
            };
            x = if hierarchical {
                let idx = coarsen_indices(nodes, self.geometry.stride, self.geometry.offset)?;
                let next = idx.len();
                let rows: Vec<usize> = (0..batch).flat_map(|b| idx.iter().map(move |&i| b * nodes + i)).collect();
                let coarse = x_hat.select_rows(&rows);
                lt.coarsen = Some((idx, x_hat.rows(), next));
                nodes = next;
                coarse
            } else {
                x_hat
            };
            level_traces.push(lt);
        }

        let (block, deg, final_pool) = pool_forward(&x, nodes, normalize)?;
        blocks.push(block);
        degenerate.push(deg);
        let trace = Trace {
            batch,
            final_rows: x.rows(),
            final_pool,
            levels: level_traces,
        };
        Ok((blocks, degenerate, trace))
    }
}

impl Parameterized for HrgeModel {
    fn param_blocks(&mut self) -> Vec<ParamBlock<'_>> {
        self.levels
            .iter_mut()
            .enumerate()
            .flat_map(|(l, p)| params_prefixed(&format!("level{l}"), p.param_blocks()).collect::<Vec<_>>())
            .collect()
    }
}

/// Cached intermediates of one [`HrgeModel::forward_traced`] call. Drives a
/// single backward pass.
#[derive(Debug)]
pub struct ForwardTrace {
    inner: Option<Trace>,
}

impl ForwardTrace {
    pub fn is_spent(&self) -> bool {
        self.inner.is_none()
    }
}

#[derive(Debug)]
struct Trace {
    batch: usize,
    final_rows: usize,
    final_pool: PoolTrace,
    levels: Vec<LevelTrace>,
}

#[derive(Debug)]
struct LevelTrace {
    pairwise: Option<PairwiseTrace>,
    pool: Option<PoolTrace>,
    neighbor: Option<NeighborTrace>,
    // (selected node indices, rows before coarsening, nodes after)
    coarsen: Option<(Vec<usize>, usize, usize)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn views(rng: &mut ChaCha8Rng, n: usize, w: usize) -> Matrix {
        Matrix::new(n, w, (0..n * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn descriptor_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m12 = HrgeModel::new(Geometry::twelve_view(5), Variant::Full, &mut rng).unwrap();
        let d = m12.forward(&views(&mut rng, 12, 5)).unwrap();
        assert_eq!(d.blocks.len(), 3);
        assert_eq!(d.len(), 15);

        let m6 = HrgeModel::new(Geometry::six_view(5), Variant::Full, &mut rng).unwrap();
        assert_eq!(m6.forward(&views(&mut rng, 6, 5)).unwrap().len(), 10);

        for v in Variant::ALL {
            let m = HrgeModel::new(Geometry::twelve_view(3), v, &mut rng).unwrap();
            assert_eq!(m.forward(&views(&mut rng, 12, 3)).unwrap().len(), m.descriptor_len(), "{v}");
        }
    }

    #[test]
    fn rejects_wrong_view_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = HrgeModel::new(Geometry::six_view(4), Variant::Full, &mut rng).unwrap();
        assert!(matches!(m.forward(&Matrix::zeros(5, 4)), Err(Error::Shape { .. })));
    }

    #[test]
    fn batch_rows_match_single_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = HrgeModel::new(Geometry::twelve_view(4), Variant::Full, &mut rng).unwrap();
        let a = views(&mut rng, 12, 4);
        let b = views(&mut rng, 12, 4);
        let batch = m.forward_batch(&[&a, &b]).unwrap();
        assert_eq!(batch.row(0), m.forward(&a).unwrap().concat().as_slice());
        assert_eq!(batch.row(1), m.forward(&b).unwrap().concat().as_slice());
    }

    #[test]
    fn backward_twice_is_stale() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = HrgeModel::new(Geometry::six_view(3), Variant::Full, &mut rng).unwrap();
        let v = views(&mut rng, 6, 3);
        let (out, mut trace) = m.forward_traced(&[&v]).unwrap();
        let g = Matrix::new(1, out.cols(), vec![1.0; out.cols()]).unwrap();
        m.backward(&mut trace, &g).unwrap();
        assert!(matches!(m.backward(&mut trace, &g), Err(Error::StaleCache)));
    }

    #[test]
    fn baseline_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = HrgeModel::new(Geometry::twelve_view(4), Variant::Baseline, &mut rng).unwrap();
        let v = views(&mut rng, 12, 4);
        let perm = [3, 11, 0, 5, 7, 1, 2, 9, 10, 4, 6, 8];
        assert_eq!(m.forward(&v).unwrap(), m.forward(&v.select_rows(&perm)).unwrap());
    }

    #[test]
    fn same_seed_same_model() {
        let a = HrgeModel::new(Geometry::twelve_view(4), Variant::Full, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = HrgeModel::new(Geometry::twelve_view(4), Variant::Full, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }
}
