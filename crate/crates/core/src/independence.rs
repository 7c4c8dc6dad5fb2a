//! HSIC independence losses between the two branch feature sets.
//!
//! Two estimators are provided. [`HsicMode::PaperPerSample`] evaluates, for each
//! sample, `(k(x̂, ŷ) − k(x̂, x̂)·k(ŷ, ŷ))²` and averages over the batch. With the
//! RBF kernel on unit vectors the self-kernels are identically 1, so this reduces
//! to `(k(x̂, ŷ) − 1)²`: it is zero when `x̂ = ŷ` and grows as the two features
//! move apart. [`HsicMode::ClassicalBiased`] is the usual biased batch estimator
//! `tr(K H L H) / (N − 1)²` over the two Gram matrices, which is zero when the
//! feature sets are independent across the batch.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{DsidError, Result};
use crate::kernels::{kernel_eval, kernel_eval_grad, KernelConfig};

/// Normalized true-branch / disguised-branch features for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePair {
    pub x_hat: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub x_degenerate: bool,
    pub y_degenerate: bool,
}

impl FeaturePair {
    /// Pair of already-normalized (or deliberately free) vectors.
    pub fn new(x_hat: Vec<f64>, y_hat: Vec<f64>) -> Self {
        Self {
            x_hat,
            y_hat,
            x_degenerate: false,
            y_degenerate: false,
        }
    }

    /// Normalizes both raw features, recording zero-norm inputs.
    pub fn from_raw(x: &[f64], y: &[f64]) -> Self {
        let nx = crate::kernels::l2_normalize(x);
        let ny = crate::kernels::l2_normalize(y);
        Self {
            x_hat: nx.vector,
            y_hat: ny.vector,
            x_degenerate: nx.degenerate,
            y_degenerate: ny.degenerate,
        }
    }

    pub fn dim(&self) -> usize {
        self.x_hat.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum HsicMode {
    #[default]
    PaperPerSample,
    ClassicalBiased,
}

impl HsicMode {
    pub fn as_str(self) -> &'static str {
        match self {
            HsicMode::PaperPerSample => "paper",
            HsicMode::ClassicalBiased => "classical",
        }
    }
}

impl std::str::FromStr for HsicMode {
    type Err = DsidError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(HsicMode::PaperPerSample),
            "classical" => Ok(HsicMode::ClassicalBiased),
            other => Err(DsidError::InvalidConfig(format!("unknown HSIC mode {other:?}"))),
        }
    }
}

/// Gradients of a batch HSIC loss with respect to every normalized feature.
#[derive(Debug, Clone, PartialEq)]
pub struct HsicGrad {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

impl HsicGrad {
    fn zeros(n: usize, d: usize) -> Self {
        Self {
            x: vec![vec![0.0; d]; n],
            y: vec![vec![0.0; d]; n],
        }
    }
}

pub fn hsic_per_sample(pair: &FeaturePair, cfg: &KernelConfig) -> Result<f64> {
    let kxy = kernel_eval(&pair.x_hat, &pair.y_hat, cfg)?;
    let kxx = kernel_eval(&pair.x_hat, &pair.x_hat, cfg)?;
    let kyy = kernel_eval(&pair.y_hat, &pair.y_hat, cfg)?;
    let r = kxy - kxx * kyy;
    Ok(r * r)
}

fn check_batch(pairs: &[FeaturePair], mode: HsicMode) -> Result<()> {
    if pairs.is_empty() {
        return Err(DsidError::EmptyBatch);
    }
    if mode == HsicMode::ClassicalBiased && pairs.len() < 2 {
        return Err(DsidError::CenteringUndersized(pairs.len()));
    }
    Ok(())
}

pub fn hsic_batch_loss(pairs: &[FeaturePair], cfg: &KernelConfig, mode: HsicMode) -> Result<f64> {
    check_batch(pairs, mode)?;
    match mode {
        HsicMode::PaperPerSample => {
            let mut total = 0.0;
            for p in pairs {
                total += hsic_per_sample(p, cfg)?;
            }
            Ok(total / pairs.len() as f64)
        }
        HsicMode::ClassicalBiased => {
            let xs: Vec<&[f64]> = pairs.iter().map(|p| p.x_hat.as_slice()).collect();
            let ys: Vec<&[f64]> = pairs.iter().map(|p| p.y_hat.as_slice()).collect();
            hsic_biased(&xs, &ys, cfg)
        }
    }
}

pub fn hsic_batch_grad(
    pairs: &[FeaturePair],
    cfg: &KernelConfig,
    mode: HsicMode,
) -> Result<HsicGrad> {
    check_batch(pairs, mode)?;
    let n = pairs.len();
    let d = pairs[0].dim();
    let mut grad = HsicGrad::zeros(n, d);
    match mode {
        HsicMode::PaperPerSample => {
            let scale = 1.0 / n as f64;
            for (i, p) in pairs.iter().enumerate() {
                let kxy = kernel_eval(&p.x_hat, &p.y_hat, cfg)?;
                let kxx = kernel_eval(&p.x_hat, &p.x_hat, cfg)?;
                let kyy = kernel_eval(&p.y_hat, &p.y_hat, cfg)?;
                let outer = 2.0 * (kxy - kxx * kyy) * scale;
                let (dxy_x, dxy_y) = kernel_eval_grad(&p.x_hat, &p.y_hat, cfg)?;
                // a self-kernel depends on its vector through both arguments
                let (sx_u, sx_v) = kernel_eval_grad(&p.x_hat, &p.x_hat, cfg)?;
                let (sy_u, sy_v) = kernel_eval_grad(&p.y_hat, &p.y_hat, cfg)?;
                for j in 0..d {
                    grad.x[i][j] = outer * (dxy_x[j] - kyy * (sx_u[j] + sx_v[j]));
                    grad.y[i][j] = outer * (dxy_y[j] - kxx * (sy_u[j] + sy_v[j]));
                }
            }
        }
        HsicMode::ClassicalBiased => {
            let xs: Vec<&[f64]> = pairs.iter().map(|p| p.x_hat.as_slice()).collect();
            let ys: Vec<&[f64]> = pairs.iter().map(|p| p.y_hat.as_slice()).collect();
            let k = gram(&xs, cfg)?;
            let l = gram(&ys, cfg)?;
            let norm = 1.0 / ((n - 1) * (n - 1)) as f64;
            // ∂/∂K tr(KHLH) = HLH, and symmetrically for L
            let dk = center(&l, n);
            let dl = center(&k, n);
            accumulate_gram_grad(&xs, &dk, norm, cfg, &mut grad.x)?;
            accumulate_gram_grad(&ys, &dl, norm, cfg, &mut grad.y)?;
        }
    }
    Ok(grad)
}

fn accumulate_gram_grad(
    points: &[&[f64]],
    upstream: &[f64],
    scale: f64,
    cfg: &KernelConfig,
    out: &mut [Vec<f64>],
) -> Result<()> {
    let n = points.len();
    for i in 0..n {
        for j in 0..n {
            let w = upstream[i * n + j] * scale;
            if w == 0.0 {
                continue;
            }
            let (du, dv) = kernel_eval_grad(points[i], points[j], cfg)?;
            for (o, g) in out[i].iter_mut().zip(&du) {
                *o += w * g;
            }
            for (o, g) in out[j].iter_mut().zip(&dv) {
                *o += w * g;
            }
        }
    }
    Ok(())
}

/// Row-major `N × N` Gram matrix.
pub fn gram<P: AsRef<[f64]>>(points: &[P], cfg: &KernelConfig) -> Result<Vec<f64>> {
    let n = points.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = kernel_eval(points[i].as_ref(), points[j].as_ref(), cfg)?;
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    Ok(k)
}

/// `H M H` with `H = I − 𝟙𝟙ᵀ/N`, for a row-major square `M`.
pub fn center(m: &[f64], n: usize) -> Vec<f64> {
    let inv = 1.0 / n as f64;
    let row_means: Vec<f64> = (0..n)
        .map(|i| m[i * n..(i + 1) * n].iter().sum::<f64>() * inv)
        .collect();
    let col_means: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| m[i * n + j]).sum::<f64>() * inv)
        .collect();
    let grand = row_means.iter().sum::<f64>() * inv;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = m[i * n + j] - row_means[i] - col_means[j] + grand;
        }
    }
    out
}

/// Biased HSIC estimate `tr(K H L H) / (N − 1)²` between two equally sized sets.
pub fn hsic_biased<P: AsRef<[f64]>>(xs: &[P], ys: &[P], cfg: &KernelConfig) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(DsidError::SetSizeMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n == 0 {
        return Err(DsidError::EmptyBatch);
    }
    if n < 2 {
        return Err(DsidError::CenteringUndersized(n));
    }
    let kc = center(&gram(xs, cfg)?, n);
    let l = gram(ys, cfg)?;
    let tr: f64 = kc.iter().zip(&l).map(|(a, b)| a * b).sum();
    Ok(tr / ((n - 1) * (n - 1)) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// Permutation test of independence using the biased HSIC statistic.
///
/// The null distribution comes from permuting the rows of `y_set`; the p-value is
/// `(1 + #{permuted ≥ observed}) / (1 + n_perm)`.
pub fn permutation_independence_test<P: AsRef<[f64]>>(
    x_set: &[P],
    y_set: &[P],
    cfg: &KernelConfig,
    n_perm: usize,
    seed: u64,
) -> Result<PermutationTest> {
    if x_set.len() != y_set.len() {
        return Err(DsidError::SetSizeMismatch(x_set.len(), y_set.len()));
    }
    let n = x_set.len();
    if n < 5 || n_perm < 100 {
        return Err(DsidError::PermutationUndersized { n, n_perm });
    }
    let kc = center(&gram(x_set, cfg)?, n);
    let l = gram(y_set, cfg)?;
    let norm = 1.0 / ((n - 1) * (n - 1)) as f64;
    // tr(K H L H) = Σᵢⱼ (HKH)ᵢⱼ Lᵢⱼ; permuting y reindexes L only
    let stat_for = |perm: &[usize]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            let pi = perm[i];
            for j in 0..n {
                s += kc[i * n + j] * l[pi * n + perm[j]];
            }
        }
        s * norm
    };
    let identity: Vec<usize> = (0..n).collect();
    let statistic = stat_for(&identity);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm = identity;
    let mut exceed = 0usize;
    for _ in 0..n_perm {
        perm.shuffle(&mut rng);
        if stat_for(&perm) >= statistic {
            exceed += 1;
        }
    }
    Ok(PermutationTest {
        statistic,
        p_value: (exceed + 1) as f64 / (n_perm + 1) as f64,
    })
}
