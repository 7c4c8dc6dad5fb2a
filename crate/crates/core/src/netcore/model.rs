use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adapter::{AdapterBlock, BlockGrads, BlockTrace, Linear, LinearGrads};
use crate::error::{shape_err, DsidError, Result};
use crate::independence::{FeaturePair, HsicGrad};
use crate::kernels::l2_normalize;
use crate::matrix::{dot, Matrix};

/// Number of emotion classes in both label spaces.
pub const NUM_CLASSES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelDims {
    pub d_emb: usize,
    pub d_shared: usize,
    pub d_feat: usize,
    pub c_true: usize,
    pub c_disg: usize,
    /// Adapter blocks per adapter.
    pub depth: usize,
}

impl ModelDims {
    pub fn new(d_emb: usize, d_shared: usize, d_feat: usize) -> Self {
        Self {
            d_emb,
            d_shared,
            d_feat,
            c_true: NUM_CLASSES,
            c_disg: NUM_CLASSES,
            depth: 1,
        }
    }

    pub fn with_default_hidden(d_emb: usize) -> Self {
        Self::new(d_emb, 256, 128)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.d_emb,
            self.d_shared,
            self.d_feat,
            self.c_true,
            self.c_disg,
            self.depth,
        ];
        if all.contains(&0) {
            return Err(DsidError::InvalidConfig(format!(
                "all model dimensions must be ≥ 1: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Whether the disguised branch exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Topology {
    DualStream,
    /// Masked adapter → one branch adapter → one head.
    SingleStream,
}

/// A stack of adapter blocks; the first maps `input → output`, the rest `output → output`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adapter {
    pub blocks: Vec<AdapterBlock>,
}

impl Adapter {
    fn init(input: usize, output: usize, depth: usize, dropout_p: f64, rng: &mut ChaCha8Rng) -> Self {
        let blocks = (0..depth)
            .map(|i| {
                let fan_in = if i == 0 { input } else { output };
                AdapterBlock::init(fan_in, output, dropout_p, rng)
            })
            .collect();
        Self { blocks }
    }

    fn forward_train(&self, x: &Matrix, rng: &mut ChaCha8Rng) -> (Matrix, Vec<BlockTrace>) {
        let mut traces = Vec::with_capacity(self.blocks.len());
        let mut h = x.clone();
        for b in &self.blocks {
            let (out, t) = b.forward_train(&h, rng);
            traces.push(t);
            h = out;
        }
        (h, traces)
    }

    fn forward_eval(&self, x: &Matrix) -> Matrix {
        self.blocks
            .iter()
            .fold(x.clone(), |h, b| b.forward_eval(&h))
    }

    fn backward(&self, traces: &[BlockTrace], grad: Matrix) -> Result<(Vec<BlockGrads>, Matrix)> {
        if traces.len() != self.blocks.len() {
            return Err(shape_err("adapter depth", self.blocks.len(), traces.len()));
        }
        let mut grads = Vec::with_capacity(self.blocks.len());
        let mut g = grad;
        for (b, t) in self.blocks.iter().zip(traces).rev() {
            let (bg, dx) = b.backward(t, &g)?;
            grads.push(bg);
            g = dx;
        }
        grads.reverse();
        Ok((grads, g))
    }

    fn commit(&mut self, traces: &[BlockTrace], rows: usize) {
        for (b, t) in self.blocks.iter_mut().zip(traces) {
            b.commit_running_stats(t, rows);
        }
    }

    pub fn set_dropout(&mut self, p: f64) {
        self.blocks.iter_mut().for_each(|b| b.dropout_p = p);
    }
}

/// Masked-expression adapter feeding two parallel branch adapters, each with its own head.
#[derive(Debug, Clone, PartialEq)]
pub struct DsidModel {
    pub dims: ModelDims,
    pub masked_adapter: Adapter,
    pub true_adapter: Adapter,
    pub disguised_adapter: Option<Adapter>,
    pub true_head: Linear,
    pub disguised_head: Option<Linear>,
}

/// Independent dropout streams per adapter, so that one branch's masks never
/// depend on whether the other branch exists.
#[derive(Debug, Clone)]
pub struct DropoutRngs {
    masked: ChaCha8Rng,
    true_branch: ChaCha8Rng,
    disguised: ChaCha8Rng,
}

impl DropoutRngs {
    pub fn new(seed: u64) -> Self {
        Self {
            masked: stream(seed, 11),
            true_branch: stream(seed, 12),
            disguised: stream(seed, 13),
        }
    }

    /// Exchanges the two branch streams, mirroring [`DsidModel::swap_branches`].
    pub fn swap_branches(&mut self) {
        std::mem::swap(&mut self.true_branch, &mut self.disguised);
    }
}

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
struct BranchTrace {
    blocks: Vec<BlockTrace>,
    features: Matrix,
    norms: Vec<f64>,
    degenerate: Vec<bool>,
}

/// Intermediate state recorded by [`DsidModel::forward`]; consumed by one backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub mode: ForwardMode,
    rows: usize,
    masked: Vec<BlockTrace>,
    true_branch: BranchTrace,
    disguised: Option<BranchTrace>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub true_logits: Matrix,
    pub disguised_logits: Option<Matrix>,
    /// L2-normalized branch features; empty for a single-stream model.
    pub pairs: Vec<FeaturePair>,
    pub trace: ForwardTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub masked_adapter: Vec<BlockGrads>,
    pub true_adapter: Vec<BlockGrads>,
    pub disguised_adapter: Option<Vec<BlockGrads>>,
    pub true_head: LinearGrads,
    pub disguised_head: Option<LinearGrads>,
}

/// Whether Adam applies L2 weight decay to a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    LinearWeight,
    LinearBias,
    BnScale,
    BnShift,
}

impl ParamKind {
    pub fn decays(self) -> bool {
        matches!(self, ParamKind::LinearWeight | ParamKind::LinearBias)
    }
}

fn push_block<'a>(b: &'a mut AdapterBlock, out: &mut Vec<(ParamKind, &'a mut [f64])>) {
    let AdapterBlock { linear, bn, .. } = b;
    out.push((ParamKind::LinearWeight, linear.weight.as_mut_slice()));
    out.push((ParamKind::LinearBias, linear.bias.as_mut_slice()));
    out.push((ParamKind::BnScale, bn.gamma.as_mut_slice()));
    out.push((ParamKind::BnShift, bn.beta.as_mut_slice()));
}

fn push_linear<'a>(h: &'a mut Linear, out: &mut Vec<(ParamKind, &'a mut [f64])>) {
    let Linear { weight, bias } = h;
    out.push((ParamKind::LinearWeight, weight.as_mut_slice()));
    out.push((ParamKind::LinearBias, bias.as_mut_slice()));
}

impl DsidModel {
    /// Seeded initialization. Each adapter and head draws from its own stream,
    /// so a single-stream model matches the true branch of a dual-stream model
    /// built from the same seed.
    pub fn init(dims: ModelDims, topology: Topology, dropout_p: f64, seed: u64) -> Result<Self> {
        dims.validate()?;
        if !(0.0..1.0).contains(&dropout_p) {
            return Err(DsidError::InvalidConfig(format!(
                "dropout probability must lie in [0, 1), got {dropout_p}"
            )));
        }
        let masked_adapter = Adapter::init(dims.d_emb, dims.d_shared, dims.depth, dropout_p, &mut stream(seed, 1));
        let true_adapter = Adapter::init(dims.d_shared, dims.d_feat, dims.depth, dropout_p, &mut stream(seed, 2));
        let true_head = Linear::init(dims.d_feat, dims.c_true, &mut stream(seed, 4));
        let (disguised_adapter, disguised_head) = match topology {
            Topology::DualStream => (
                Some(Adapter::init(dims.d_shared, dims.d_feat, dims.depth, dropout_p, &mut stream(seed, 3))),
                Some(Linear::init(dims.d_feat, dims.c_disg, &mut stream(seed, 5))),
            ),
            Topology::SingleStream => (None, None),
        };
        Ok(Self {
            dims,
            masked_adapter,
            true_adapter,
            disguised_adapter,
            true_head,
            disguised_head,
        })
    }

    pub fn topology(&self) -> Topology {
        if self.disguised_adapter.is_some() {
            Topology::DualStream
        } else {
            Topology::SingleStream
        }
    }

    pub fn set_dropout(&mut self, p: f64) {
        self.masked_adapter.set_dropout(p);
        self.true_adapter.set_dropout(p);
        if let Some(a) = &mut self.disguised_adapter {
            a.set_dropout(p);
        }
    }

    /// Exchanges the two branches (adapters and heads). Requires a dual-stream model.
    pub fn swap_branches(&mut self) {
        if let (Some(a), Some(h)) = (&mut self.disguised_adapter, &mut self.disguised_head) {
            std::mem::swap(&mut self.true_adapter, a);
            std::mem::swap(&mut self.true_head, h);
            std::mem::swap(&mut self.dims.c_true, &mut self.dims.c_disg);
        }
    }

    pub fn forward(
        &self,
        batch: &Matrix,
        mode: ForwardMode,
        rngs: &mut DropoutRngs,
    ) -> Result<ForwardOutput> {
        let n = batch.rows();
        if n == 0 {
            return Err(DsidError::EmptyBatch);
        }
        if batch.cols() != self.dims.d_emb {
            return Err(shape_err("forward input width", self.dims.d_emb, batch.cols()));
        }
        if mode == ForwardMode::Train && n < 2 {
            return Err(DsidError::BatchStatisticsUndefined);
        }

        let (shared, masked) = match mode {
            ForwardMode::Train => self.masked_adapter.forward_train(batch, &mut rngs.masked),
            ForwardMode::Eval => (self.masked_adapter.forward_eval(batch), Vec::new()),
        };
        let run_branch = |adapter: &Adapter, rng: &mut ChaCha8Rng| -> BranchTrace {
            let (features, blocks) = match mode {
                ForwardMode::Train => adapter.forward_train(&shared, rng),
                ForwardMode::Eval => (adapter.forward_eval(&shared), Vec::new()),
            };
            BranchTrace {
                blocks,
                features,
                norms: Vec::new(),
                degenerate: Vec::new(),
            }
        };
        let mut true_branch = run_branch(&self.true_adapter, &mut rngs.true_branch);
        let mut disguised = self
            .disguised_adapter
            .as_ref()
            .map(|a| run_branch(a, &mut rngs.disguised));

        let true_logits = self.true_head.forward(&true_branch.features);
        let disguised_logits = match (&self.disguised_head, &disguised) {
            (Some(h), Some(b)) => Some(h.forward(&b.features)),
            _ => None,
        };

        let mut pairs = Vec::new();
        if let Some(dis) = &mut disguised {
            pairs.reserve(n);
            for i in 0..n {
                let nx = l2_normalize(true_branch.features.row(i));
                let ny = l2_normalize(dis.features.row(i));
                true_branch.norms.push(nx.norm);
                true_branch.degenerate.push(nx.degenerate);
                dis.norms.push(ny.norm);
                dis.degenerate.push(ny.degenerate);
                pairs.push(FeaturePair {
                    x_hat: nx.vector,
                    y_hat: ny.vector,
                    x_degenerate: nx.degenerate,
                    y_degenerate: ny.degenerate,
                });
            }
        }

        Ok(ForwardOutput {
            true_logits,
            disguised_logits,
            pairs,
            trace: ForwardTrace {
                mode,
                rows: n,
                masked,
                true_branch,
                disguised,
            },
        })
    }

    /// Eval-mode forward that needs no RNG.
    pub fn predict(&self, batch: &Matrix) -> Result<ForwardOutput> {
        // eval mode never draws from the streams
        let mut rngs = DropoutRngs::new(0);
        self.forward(batch, ForwardMode::Eval, &mut rngs)
    }

    pub fn backward(
        &self,
        trace: ForwardTrace,
        grad_true_logits: &Matrix,
        grad_disg_logits: Option<&Matrix>,
        grad_pairs: Option<&HsicGrad>,
    ) -> Result<ParamGrads> {
        if trace.mode != ForwardMode::Train {
            return Err(DsidError::InvalidConfig(
                "backward requires a training-mode trace".into(),
            ));
        }
        let n = trace.rows;
        if grad_true_logits.shape() != (n, self.dims.c_true) {
            return Err(shape_err(
                "true logit gradient",
                format!("{n}x{}", self.dims.c_true),
                format!("{}x{}", grad_true_logits.rows(), grad_true_logits.cols()),
            ));
        }
        if let Some(g) = grad_pairs {
            if g.x.len() != n || g.y.len() != n {
                return Err(shape_err("pair gradient count", n, g.x.len()));
            }
        }

        let (true_head, mut d_true) = self
            .true_head
            .backward(&trace.true_branch.features, grad_true_logits);
        if let Some(g) = grad_pairs {
            add_normalization_grad(&mut d_true, &trace.true_branch, &g.x)?;
        }
        let (true_adapter, mut d_shared) =
            self.true_adapter.backward(&trace.true_branch.blocks, d_true)?;

        let mut disguised_adapter = None;
        let mut disguised_head = None;
        if let (Some(adapter), Some(head), Some(branch)) =
            (&self.disguised_adapter, &self.disguised_head, &trace.disguised)
        {
            let zeros;
            let g_logits = match grad_disg_logits {
                Some(g) => g,
                None => {
                    zeros = Matrix::zeros(n, self.dims.c_disg);
                    &zeros
                }
            };
            if g_logits.shape() != (n, self.dims.c_disg) {
                return Err(shape_err(
                    "disguised logit gradient",
                    format!("{n}x{}", self.dims.c_disg),
                    format!("{}x{}", g_logits.rows(), g_logits.cols()),
                ));
            }
            let (hg, mut d_disg) = head.backward(&branch.features, g_logits);
            if let Some(g) = grad_pairs {
                add_normalization_grad(&mut d_disg, branch, &g.y)?;
            }
            let (ag, d_from_disg) = adapter.backward(&branch.blocks, d_disg)?;
            for (a, b) in d_shared.as_mut_slice().iter_mut().zip(d_from_disg.as_slice()) {
                *a += b;
            }
            disguised_adapter = Some(ag);
            disguised_head = Some(hg);
        } else if grad_disg_logits.is_some() || trace.disguised.is_some() != self.disguised_adapter.is_some() {
            return Err(shape_err("branch topology", "dual-stream", "single-stream"));
        }

        let (masked_adapter, _) = self.masked_adapter.backward(&trace.masked, d_shared)?;
        Ok(ParamGrads {
            masked_adapter,
            true_adapter,
            disguised_adapter,
            true_head,
            disguised_head,
        })
    }

    /// Folds a training batch's statistics into the BatchNorm running estimates.
    pub fn commit_running_stats(&mut self, trace: &ForwardTrace) {
        let n = trace.rows;
        self.masked_adapter.commit(&trace.masked, n);
        self.true_adapter.commit(&trace.true_branch.blocks, n);
        if let (Some(a), Some(b)) = (&mut self.disguised_adapter, &trace.disguised) {
            a.commit(&b.blocks, n);
        }
    }

    /// Trainable tensors in declaration order, paired with their kind.
    pub fn trainable_mut(&mut self) -> Vec<(ParamKind, &mut [f64])> {
        let Self {
            masked_adapter,
            true_adapter,
            disguised_adapter,
            true_head,
            disguised_head,
            ..
        } = self;
        let mut out = Vec::new();
        let adapters = [Some(masked_adapter), Some(true_adapter), disguised_adapter.as_mut()];
        for a in adapters.into_iter().flatten() {
            for b in a.blocks.iter_mut() {
                push_block(b, &mut out);
            }
        }
        push_linear(true_head, &mut out);
        if let Some(h) = disguised_head {
            push_linear(h, &mut out);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        let block = |b: &AdapterBlock| b.linear.weight.as_slice().len() + 3 * b.linear.bias.len();
        let adapters = [Some(&self.masked_adapter), Some(&self.true_adapter), self.disguised_adapter.as_ref()];
        let heads = [Some(&self.true_head), self.disguised_head.as_ref()];
        adapters.into_iter().flatten().flat_map(|a| &a.blocks).map(block).sum::<usize>()
            + heads
                .into_iter()
                .flatten()
                .map(|h| h.weight.as_slice().len() + h.bias.len())
                .sum::<usize>()
    }
}

/// ∂x̂/∂x = (I − x̂x̂ᵀ)/‖x‖; zero for degenerate features.
fn add_normalization_grad(dst: &mut Matrix, branch: &BranchTrace, grads: &[Vec<f64>]) -> Result<()> {
    for (i, g) in grads.iter().enumerate() {
        if branch.degenerate[i] {
            continue;
        }
        if g.len() != dst.cols() {
            return Err(shape_err("pair gradient width", dst.cols(), g.len()));
        }
        let norm = branch.norms[i];
        let x = branch.features.row(i);
        let proj = dot(x, g) / norm;
        for ((d, &gj), &xj) in dst.row_mut(i).iter_mut().zip(g).zip(x) {
            *d += (gj - (xj / norm) * proj) / norm;
        }
    }
    Ok(())
}

impl ParamGrads {
    /// Gradient tensors in the same order as [`DsidModel::trainable_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        let mut adapters = vec![&self.masked_adapter, &self.true_adapter];
        if let Some(a) = &self.disguised_adapter {
            adapters.push(a);
        }
        for a in adapters {
            for b in a {
                out.push(b.linear.weight.as_slice());
                out.push(&b.linear.bias);
                out.push(&b.gamma);
                out.push(&b.beta);
            }
        }
        out.push(self.true_head.weight.as_slice());
        out.push(&self.true_head.bias);
        if let Some(h) = &self.disguised_head {
            out.push(h.weight.as_slice());
            out.push(&h.bias);
        }
        out
    }

    pub fn is_all_zero(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0))
    }
}
