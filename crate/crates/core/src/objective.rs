//! Classification losses and the weighted total `L_T + β·L_D + α·L_HSIC`.

use crate::error::{shape_err, DsidError, Result};
use crate::independence::{hsic_batch_grad, hsic_batch_loss, FeaturePair, HsicGrad, HsicMode};
use crate::kernels::{median_bandwidth, KernelConfig, KernelKind};
use crate::matrix::Matrix;

/// How the RBF bandwidth is chosen for each batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Bandwidth {
    /// Use `KernelConfig::sigma` as given.
    #[default]
    Fixed,
    /// Median pairwise distance over the batch's normalized features, divided by √2.
    /// Treated as a constant when differentiating.
    MedianHeuristic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub alpha: f64,
    pub beta: f64,
    pub kernel: KernelConfig,
    pub bandwidth: Bandwidth,
    pub hsic_mode: HsicMode,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 1.0,
            kernel: KernelConfig::default(),
            bandwidth: Bandwidth::Fixed,
            hsic_mode: HsicMode::PaperPerSample,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !v.is_finite() || v < 0.0 {
                return Err(DsidError::InvalidConfig(format!(
                    "{name} must be finite and ≥ 0, got {v}"
                )));
            }
        }
        self.kernel.validate()
    }

    /// Kernel settings for one batch, with the bandwidth resolved.
    pub fn resolve_kernel(&self, pairs: &[FeaturePair]) -> KernelConfig {
        let mut k = self.kernel;
        if k.kind == KernelKind::Rbf && self.bandwidth == Bandwidth::MedianHeuristic {
            let pts: Vec<&[f64]> = pairs
                .iter()
                .flat_map(|p| {
                    let x = (!p.x_degenerate).then_some(p.x_hat.as_slice());
                    let y = (!p.y_degenerate).then_some(p.y_hat.as_slice());
                    x.into_iter().chain(y)
                })
                .collect();
            if let Some(s) = median_bandwidth(&pts) {
                k.sigma = s;
            }
        }
        k
    }
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (n, c) = logits.shape();
    if n == 0 {
        return Err(DsidError::EmptyBatch);
    }
    if labels.len() != n {
        return Err(shape_err("cross-entropy labels", n, labels.len()));
    }
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(n, c);
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(DsidError::LabelOutOfRange { label: y, classes: c });
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        loss += log_z - row[y];
        let g = grad.row_mut(i);
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = (v - log_z).exp() * inv_n;
        }
        g[y] -= inv_n;
    }
    Ok((loss * inv_n, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossComponents {
    pub true_ce: f64,
    pub disguised_ce: f64,
    pub hsic: f64,
}

/// Gradients of the total loss with respect to the network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveGrads {
    pub true_logits: Matrix,
    pub disguised_logits: Matrix,
    pub pairs: HsicGrad,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TotalLoss {
    pub total: f64,
    pub components: LossComponents,
    pub grads: ObjectiveGrads,
    /// Kernel actually used for this batch.
    pub kernel: KernelConfig,
}

pub fn total_loss(
    true_logits: &Matrix,
    disg_logits: &Matrix,
    pairs: &[FeaturePair],
    true_labels: &[usize],
    disg_labels: &[usize],
    cfg: &ObjectiveConfig,
) -> Result<TotalLoss> {
    let n = true_logits.rows();
    if disg_logits.rows() != n || pairs.len() != n {
        return Err(shape_err(
            "objective batch size",
            n,
            format!("{} logits / {} pairs", disg_logits.rows(), pairs.len()),
        ));
    }
    let (l_t, g_t) = cross_entropy(true_logits, true_labels)?;
    let (l_d, g_d) = cross_entropy(disg_logits, disg_labels)?;
    let kernel = cfg.resolve_kernel(pairs);
    let l_h = hsic_batch_loss(pairs, &kernel, cfg.hsic_mode)?;
    let mut g_h = hsic_batch_grad(pairs, &kernel, cfg.hsic_mode)?;

    for row in g_h.x.iter_mut().chain(g_h.y.iter_mut()) {
        row.iter_mut().for_each(|v| *v *= cfg.alpha);
    }
    Ok(TotalLoss {
        total: l_t + cfg.beta * l_d + cfg.alpha * l_h,
        components: LossComponents {
            true_ce: l_t,
            disguised_ce: l_d,
            hsic: l_h,
        },
        grads: ObjectiveGrads {
            true_logits: g_t,
            disguised_logits: g_d.scale(cfg.beta),
            pairs: g_h,
        },
        kernel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_logits(n: usize, c: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_vec(n, c, (0..n * c).map(|_| rng.random_range(-3.0..3.0)).collect())
    }

    fn random_pairs(n: usize, d: usize, seed: u64) -> Vec<FeaturePair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let y: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                FeaturePair::from_raw(&x, &y)
            })
            .collect()
    }

    #[test]
    fn cross_entropy_examples() {
        let (l, g) = cross_entropy(&Matrix::zeros(3, 6), &[0, 3, 5]).unwrap();
        assert!((l - 6f64.ln()).abs() < 1e-15);
        assert!((l - 1.7917595).abs() < 1e-7);
        for r in g.iter_rows() {
            assert!(r.iter().sum::<f64>().abs() < 1e-16);
        }

        let mut sat = Matrix::zeros(2, 6);
        sat.set(0, 2, 1000.0);
        sat.set(1, 4, 1000.0);
        let (l, _) = cross_entropy(&sat, &[2, 4]).unwrap();
        assert!((0.0..1e-9).contains(&l));

        let logits = random_logits(5, 6, 1);
        let (l, g) = cross_entropy(&logits, &[0, 1, 2, 3, 4]).unwrap();
        assert!(l > 0.0);
        for r in g.iter_rows() {
            assert!(r.iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn cross_entropy_errors() {
        let err = cross_entropy(&Matrix::zeros(2, 6), &[0, 6]).unwrap_err();
        assert_eq!(err, DsidError::LabelOutOfRange { label: 6, classes: 6 });
        assert!(cross_entropy(&Matrix::zeros(2, 6), &[0]).is_err());
        assert!(cross_entropy(&Matrix::zeros(0, 6), &[]).is_err());
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let logits = random_logits(4, 6, 2);
        let labels = [5, 0, 2, 2];
        let (_, g) = cross_entropy(&logits, &labels).unwrap();
        let h = 1e-6;
        for idx in 0..24 {
            let mut p = logits.clone();
            let mut m = logits.clone();
            p.as_mut_slice()[idx] += h;
            m.as_mut_slice()[idx] -= h;
            let fd = (cross_entropy(&p, &labels).unwrap().0 - cross_entropy(&m, &labels).unwrap().0) / (2.0 * h);
            assert!((fd - g.as_slice()[idx]).abs() < 1e-9);
        }
    }

    fn setup() -> (Matrix, Matrix, Vec<FeaturePair>, Vec<usize>, Vec<usize>) {
        (
            random_logits(5, 6, 3),
            random_logits(5, 6, 4),
            random_pairs(5, 4, 5),
            vec![0, 1, 2, 3, 4],
            vec![1, 2, 3, 4, 5],
        )
    }

    #[test]
    fn total_reduces_to_true_loss_without_weights() {
        let (t, d, p, yt, yd) = setup();
        let cfg = ObjectiveConfig {
            alpha: 0.0,
            beta: 0.0,
            ..Default::default()
        };
        let out = total_loss(&t, &d, &p, &yt, &yd, &cfg).unwrap();
        assert_eq!(out.total, out.components.true_ce);
        assert_eq!(out.total, cross_entropy(&t, &yt).unwrap().0);
    }

    #[test]
    fn weighted_sum_arithmetic() {
        // L_T = 1.0, L_D = 0.5, L_HSIC = 0.2 at α = 0.5, β = 1.0
        let c = LossComponents {
            true_ce: 1.0,
            disguised_ce: 0.5,
            hsic: 0.2,
        };
        let cfg = ObjectiveConfig::default();
        let total = c.true_ce + cfg.beta * c.disguised_ce + cfg.alpha * c.hsic;
        assert!((total - 1.6).abs() < 1e-15);
    }

    #[test]
    fn components_do_not_depend_on_weights_and_grads_combine_linearly() {
        let (t, d, p, yt, yd) = setup();
        let base = ObjectiveConfig {
            hsic_mode: HsicMode::ClassicalBiased,
            ..Default::default()
        };
        let a = total_loss(&t, &d, &p, &yt, &yd, &base).unwrap();
        let other = ObjectiveConfig {
            alpha: 0.9,
            beta: 0.3,
            ..base
        };
        let b = total_loss(&t, &d, &p, &yt, &yd, &other).unwrap();
        assert_eq!(a.components, b.components);

        let (_, gd) = cross_entropy(&d, &yd).unwrap();
        let gh = hsic_batch_grad(&p, &base.kernel, base.hsic_mode).unwrap();
        assert_eq!(b.grads.true_logits, cross_entropy(&t, &yt).unwrap().1);
        assert_eq!(b.grads.disguised_logits, gd.scale(0.3));
        for (row, raw) in b.grads.pairs.x.iter().zip(&gh.x) {
            for (v, r) in row.iter().zip(raw) {
                assert_eq!(*v, 0.9 * r);
            }
        }
    }

    #[test]
    fn median_bandwidth_is_resolved_per_batch() {
        let (_, _, p, _, _) = setup();
        let cfg = ObjectiveConfig {
            bandwidth: Bandwidth::MedianHeuristic,
            ..Default::default()
        };
        let k = cfg.resolve_kernel(&p);
        assert_ne!(k.sigma, 1.0);
        assert!(k.sigma > 0.0 && k.sigma < 2.0);
        let fixed = ObjectiveConfig::default().resolve_kernel(&p);
        assert_eq!(fixed.sigma, 1.0);
    }

    #[test]
    fn validation() {
        assert!(ObjectiveConfig::default().validate().is_ok());
        let bad = ObjectiveConfig {
            alpha: -0.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ObjectiveConfig {
            beta: f64::NAN,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
