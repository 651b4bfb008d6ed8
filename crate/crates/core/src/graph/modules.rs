use rand::Rng;

use crate::nn::{
    l2_normalize, l2_normalize_backward, maxpool_rows, Activation, Linear, Matrix, Mlp, MlpTrace, Normalized,
    ParamBlock, Parameterized,
};
use crate::nn::params_prefixed;
use crate::{Error, Result};

use super::variant::NeighborKind;

/// Node features of one level of the view hierarchy, in ring order.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewGraph {
    pub level: usize,
    pub features: Matrix,
}

impl ViewGraph {
    pub fn new(level: usize, features: Matrix) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::EmptyInput("view graph with no nodes"));
        }
        Ok(Self { level, features })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn width(&self) -> usize {
        self.features.cols()
    }
}

/// Parameters of the pairwise relation module: the relation MLP over
/// concatenated node pairs and the fusion layer over `[x_i, R_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseParams {
    pub relation: Mlp,
    pub fusion: Linear,
}

impl PairwiseParams {
    /// Relation MLP `2w → hidden → hidden → w`, fusion `2w → w`.
    pub fn new<R: Rng + ?Sized>(width: usize, hidden: usize, rng: &mut R) -> Self {
        let relation = Mlp::new(&[2 * width, hidden, hidden, width], Activation::Relu, rng)
            .expect("dims are valid");
        let fusion = Linear::new(2 * width, width, rng);
        Self { relation, fusion }
    }

    pub fn width(&self) -> usize {
        self.fusion.out_dim()
    }

    fn check(&self, width: usize) -> Result<()> {
        let w = self.width();
        if self.relation.in_dim() != 2 * w || self.relation.out_dim() != w || self.fusion.in_dim() != 2 * w {
            return Err(Error::shape(
                "pairwise params",
                format!("relation {}→{}, fusion {}→{w}", 2 * w, w, 2 * w),
                format!(
                    "relation {}→{}, fusion {}→{}",
                    self.relation.in_dim(),
                    self.relation.out_dim(),
                    self.fusion.in_dim(),
                    self.fusion.out_dim()
                ),
            ));
        }
        if width != w {
            return Err(Error::shape("pairwise relation", format!("width {w}"), format!("width {width}")));
        }
        Ok(())
    }
}

impl Parameterized for PairwiseParams {
    fn param_blocks(&mut self) -> Vec<ParamBlock<'_>> {
        let mut out: Vec<_> = params_prefixed("relation", self.relation.param_blocks()).collect();
        out.extend(params_prefixed("fusion", self.fusion.param_blocks()));
        out
    }
}

/// Neighboring relation function applied to `[x_{i-1}, x_i, x_{i+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Neighboring {
    /// Affine `3w → w` followed by the rectifier.
    Learned(Linear),
    Max,
    Avg,
    Identity,
}

impl Neighboring {
    pub fn new<R: Rng + ?Sized>(kind: NeighborKind, width: usize, rng: &mut R) -> Self {
        match kind {
            NeighborKind::Learned => Neighboring::Learned(Linear::new(3 * width, width, rng)),
            NeighborKind::Max => Neighboring::Max,
            NeighborKind::Avg => Neighboring::Avg,
            NeighborKind::Identity => Neighboring::Identity,
        }
    }

    pub fn kind(&self) -> NeighborKind {
        match self {
            Neighboring::Learned(_) => NeighborKind::Learned,
            Neighboring::Max => NeighborKind::Max,
            Neighboring::Avg => NeighborKind::Avg,
            Neighboring::Identity => NeighborKind::Identity,
        }
    }
}

impl Parameterized for Neighboring {
    fn param_blocks(&mut self) -> Vec<ParamBlock<'_>> {
        match self {
            Neighboring::Learned(l) => l.param_blocks(),
            _ => Vec::new(),
        }
    }
}

/// Pairwise relation on a single graph: `r_ij = f([x_i, x_j])` over ordered
/// pairs `i ≠ j`, `R_i = Σ_j r_ij`, `x̃_i = g([x_i, R_i])`.
pub fn pairwise_relation(g: &ViewGraph, p: &PairwiseParams) -> Result<ViewGraph> {
    let (out, _) = pairwise_forward(p, &g.features, g.num_nodes())?;
    ViewGraph::new(g.level, out)
}

/// Neighboring relation on a single ring with cyclic wrap at both ends.
pub fn neighboring_relation(g: &ViewGraph, h: &Neighboring) -> Result<ViewGraph> {
    let (out, _) = neighbor_forward(h, &g.features, g.num_nodes())?;
    ViewGraph::new(g.level, out)
}

/// Keeps every `stride`-th node. With 1-based ring positions and `offset = 0`
/// new node `i` is old node `stride · i`.
pub fn coarsen(g: &ViewGraph, stride: usize, offset: usize) -> Result<ViewGraph> {
    let idx = coarsen_indices(g.num_nodes(), stride, offset)?;
    ViewGraph::new(g.level + 1, g.features.select_rows(&idx))
}

/// 0-based source rows selected by [`coarsen`].
pub fn coarsen_indices(nodes: usize, stride: usize, offset: usize) -> Result<Vec<usize>> {
    if stride == 0 || nodes == 0 || !nodes.is_multiple_of(stride) {
        return Err(Error::Coarsen { nodes, stride });
    }
    Ok((0..nodes / stride)
        .map(|i| (stride * (i + 1) - 1 + offset) % nodes)
        .collect())
}

/// Max-pool over nodes followed by L2 normalization.
pub fn level_descriptor(features: &Matrix) -> Result<Normalized> {
    Ok(l2_normalize(&maxpool_rows(features)?.values))
}

// ---------------------------------------------------------------------------
// Batched kernels with traces for the backward pass.

fn check_batch(x: &Matrix, nodes: usize, context: &'static str) -> Result<usize> {
    if nodes == 0 || !x.rows().is_multiple_of(nodes) {
        return Err(Error::shape(
            context,
            format!("a multiple of {nodes} rows"),
            format!("{} rows", x.rows()),
        ));
    }
    Ok(x.rows() / nodes)
}

#[derive(Debug)]
pub(crate) struct PairwiseTrace {
    nodes: usize,
    relation: MlpTrace,
    fusion_in: Matrix,
    fusion_pre: Matrix,
}

pub(crate) fn pairwise_forward(p: &PairwiseParams, x: &Matrix, nodes: usize) -> Result<(Matrix, PairwiseTrace)> {
    let batch = check_batch(x, nodes, "pairwise relation")?;
    let w = x.cols();
    p.check(w)?;
    let partners = nodes - 1;

    let mut pairs = Matrix::zeros(batch * nodes * partners, 2 * w);
    for b in 0..batch {
        for i in 0..nodes {
            for k in 0..partners {
                let j = if k < i { k } else { k + 1 };
                let row = pairs.row_mut((b * nodes + i) * partners + k);
                row[..w].copy_from_slice(x.row(b * nodes + i));
                row[w..].copy_from_slice(x.row(b * nodes + j));
            }
        }
    }
    let (relations, relation_trace) = p.relation.forward_traced(&pairs)?;

    // Summands are added in sorted order so R_i is bit-identical under any
    // relabeling of the other nodes.
    let mut gathered = Matrix::zeros(batch * nodes, w);
    let mut terms = Vec::with_capacity(partners);
    for node in 0..batch * nodes {
        for col in 0..w {
            terms.clear();
            terms.extend((0..partners).map(|k| relations.get(node * partners + k, col)));
            terms.sort_unstable_by(f64::total_cmp);
            gathered.set(node, col, terms.iter().sum());
        }
    }

    let fusion_in = Matrix::hcat(&[x, &gathered])?;
    let fusion_pre = p.fusion.forward(&fusion_in)?;
    let out = Activation::Relu.apply(&fusion_pre);
    Ok((
        out,
        PairwiseTrace {
            nodes,
            relation: relation_trace,
            fusion_in,
            fusion_pre,
        },
    ))
}

pub(crate) fn pairwise_backward(p: &mut PairwiseParams, trace: &mut PairwiseTrace, grad_out: &Matrix) -> Result<Matrix> {
    let nodes = trace.nodes;
    let partners = nodes - 1;
    let mut g = grad_out.clone();
    Activation::Relu.backward(&trace.fusion_pre, &mut g);
    let g_in = p.fusion.backward(&trace.fusion_in, &g)?;
    let w = g_in.cols() / 2;
    let (mut gx, g_gathered) = g_in.split_cols(w);

    let total = gx.rows();
    let mut g_rel = Matrix::zeros(total * partners, w);
    for node in 0..total {
        for k in 0..partners {
            g_rel.row_mut(node * partners + k).copy_from_slice(g_gathered.row(node));
        }
    }
    let g_pairs = p.relation.backward(&mut trace.relation, &g_rel)?;

    for node in 0..total {
        let (b, i) = (node / nodes, node % nodes);
        for k in 0..partners {
            let j = if k < i { k } else { k + 1 };
            let row = g_pairs.row(node * partners + k);
            for (a, v) in gx.row_mut(node).iter_mut().zip(&row[..w]) {
                *a += v;
            }
            for (a, v) in gx.row_mut(b * nodes + j).iter_mut().zip(&row[w..]) {
                *a += v;
            }
        }
    }
    Ok(gx)
}

#[derive(Debug)]
pub(crate) enum NeighborTrace {
    Learned { nodes: usize, input: Matrix, pre: Matrix },
    // Which triplet member (0 = prev, 1 = center, 2 = next) won each element.
    Max { nodes: usize, source: Vec<u8> },
    Avg { nodes: usize },
    Identity,
}

#[inline]
fn ring_neighbors(i: usize, nodes: usize) -> (usize, usize) {
    ((i + nodes - 1) % nodes, (i + 1) % nodes)
}

pub(crate) fn neighbor_forward(h: &Neighboring, x: &Matrix, nodes: usize) -> Result<(Matrix, NeighborTrace)> {
    let batch = check_batch(x, nodes, "neighboring relation")?;
    if nodes < 3 {
        return Err(Error::RingTooSmall { nodes });
    }
    let w = x.cols();
    let triplet = |b: usize, i: usize| {
        let (prev, next) = ring_neighbors(i, nodes);
        (x.row(b * nodes + prev), x.row(b * nodes + i), x.row(b * nodes + next))
    };

    match h {
        Neighboring::Learned(layer) => {
            if layer.in_dim() != 3 * w || layer.out_dim() != w {
                return Err(Error::shape(
                    "neighboring relation",
                    format!("{}→{w}", 3 * w),
                    format!("{}→{}", layer.in_dim(), layer.out_dim()),
                ));
            }
            let mut input = Matrix::zeros(x.rows(), 3 * w);
            for b in 0..batch {
                for i in 0..nodes {
                    let (p, c, n) = triplet(b, i);
                    let row = input.row_mut(b * nodes + i);
                    row[..w].copy_from_slice(p);
                    row[w..2 * w].copy_from_slice(c);
                    row[2 * w..].copy_from_slice(n);
                }
            }
            let pre = layer.forward(&input)?;
            let out = Activation::Relu.apply(&pre);
            Ok((out, NeighborTrace::Learned { nodes, input, pre }))
        }
        Neighboring::Max => {
            let mut out = Matrix::zeros(x.rows(), w);
            let mut source = vec![0u8; x.rows() * w];
            for b in 0..batch {
                for i in 0..nodes {
                    let (p, c, n) = triplet(b, i);
                    let r = b * nodes + i;
                    for col in 0..w {
                        let mut best = p[col];
                        let mut who = 0u8;
                        if c[col] > best {
                            best = c[col];
                            who = 1;
                        }
                        if n[col] > best {
                            best = n[col];
                            who = 2;
                        }
                        out.set(r, col, best);
                        source[r * w + col] = who;
                    }
                }
            }
            Ok((out, NeighborTrace::Max { nodes, source }))
        }
        Neighboring::Avg => {
            let mut out = Matrix::zeros(x.rows(), w);
            for b in 0..batch {
                for i in 0..nodes {
                    let (p, c, n) = triplet(b, i);
                    for (col, o) in out.row_mut(b * nodes + i).iter_mut().enumerate() {
                        *o = (p[col] + c[col] + n[col]) / 3.0;
                    }
                }
            }
            Ok((out, NeighborTrace::Avg { nodes }))
        }
        Neighboring::Identity => Ok((x.clone(), NeighborTrace::Identity)),
    }
}

pub(crate) fn neighbor_backward(h: &mut Neighboring, trace: &NeighborTrace, grad_out: &Matrix) -> Result<Matrix> {
    let w = grad_out.cols();
    let rows = grad_out.rows();
    // Scatter per-member gradients (prev, center, next) back onto ring rows.
    let scatter = |nodes: usize, member: &dyn Fn(usize, usize) -> [f64; 3]| {
        let mut gx = Matrix::zeros(rows, w);
        for r in 0..rows {
            let (b, i) = (r / nodes, r % nodes);
            let (prev, next) = ring_neighbors(i, nodes);
            for col in 0..w {
                let [gp, gc, gn] = member(r, col);
                let d = gx.data_mut();
                d[(b * nodes + prev) * w + col] += gp;
                d[(b * nodes + i) * w + col] += gc;
                d[(b * nodes + next) * w + col] += gn;
            }
        }
        gx
    };
    match (h, trace) {
        (Neighboring::Learned(layer), NeighborTrace::Learned { nodes, input, pre }) => {
            let mut g = grad_out.clone();
            Activation::Relu.backward(pre, &mut g);
            let g_in = layer.backward(input, &g)?;
            Ok(scatter(*nodes, &|r, col| {
                let row = g_in.row(r);
                [row[col], row[w + col], row[2 * w + col]]
            }))
        }
        (Neighboring::Max, NeighborTrace::Max { nodes, source }) => Ok(scatter(*nodes, &|r, col| {
            let mut m = [0.0; 3];
            m[source[r * w + col] as usize] = grad_out.get(r, col);
            m
        })),
        (Neighboring::Avg, NeighborTrace::Avg { nodes }) => Ok(scatter(*nodes, &|r, col| {
            let g = grad_out.get(r, col) / 3.0;
            [g, g, g]
        })),
        (Neighboring::Identity, NeighborTrace::Identity) => Ok(grad_out.clone()),
        _ => Err(Error::Config("neighboring trace does not match the module kind".into())),
    }
}

#[derive(Debug)]
pub(crate) struct PoolTrace {
    nodes: usize,
    argmax: Vec<Vec<usize>>,
    norms: Option<Vec<Normalized>>,
}

/// Per-shape max-pool (+ optional normalization). Returns a `batch × w` block
/// and per-shape degenerate flags.
pub(crate) fn pool_forward(x: &Matrix, nodes: usize, normalize: bool) -> Result<(Matrix, Vec<bool>, PoolTrace)> {
    let batch = check_batch(x, nodes, "level pooling")?;
    let w = x.cols();
    let mut block = Matrix::zeros(batch, w);
    let mut argmax = Vec::with_capacity(batch);
    let mut norms = Vec::with_capacity(batch);
    let mut degenerate = Vec::with_capacity(batch);
    for b in 0..batch {
        let rows: Vec<usize> = (b * nodes..(b + 1) * nodes).collect();
        let pooled = maxpool_rows(&x.select_rows(&rows))?;
        if normalize {
            let n = l2_normalize(&pooled.values);
            block.row_mut(b).copy_from_slice(&n.values);
            degenerate.push(n.degenerate);
            norms.push(n);
        } else {
            block.row_mut(b).copy_from_slice(&pooled.values);
            degenerate.push(false);
        }
        argmax.push(pooled.argmax);
    }
    let trace = PoolTrace {
        nodes,
        argmax,
        norms: normalize.then_some(norms),
    };
    Ok((block, degenerate, trace))
}

/// Routes a `batch × w` block gradient to the winning rows.
pub(crate) fn pool_backward(trace: &PoolTrace, grad_block: &Matrix, into: &mut Matrix) {
    let w = grad_block.cols();
    for (b, argmax) in trace.argmax.iter().enumerate() {
        let g = match &trace.norms {
            Some(norms) => l2_normalize_backward(&norms[b], grad_block.row(b)),
            None => grad_block.row(b).to_vec(),
        };
        for col in 0..w {
            let r = b * trace.nodes + argmax[col];
            into.data_mut()[r * w + col] += g[col];
        }
    }
}
