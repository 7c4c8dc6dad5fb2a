//! Kernel evaluations and the L2 normalization applied before them.

use crate::error::{DsidError, Result};
use crate::matrix::dot;

/// Below this Euclidean norm a vector is treated as zero by [`l2_normalize`].
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Rbf,
    Linear,
}

impl KernelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Rbf => "rbf",
            KernelKind::Linear => "linear",
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = DsidError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rbf" => Ok(KernelKind::Rbf),
            "linear" => Ok(KernelKind::Linear),
            other => Err(DsidError::InvalidConfig(format!("unknown kernel {other:?}"))),
        }
    }
}

/// Kernel choice plus RBF bandwidth. `sigma` is ignored by the linear kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub sigma: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self::rbf(1.0)
    }
}

impl KernelConfig {
    pub fn rbf(sigma: f64) -> Self {
        Self {
            kind: KernelKind::Rbf,
            sigma,
        }
    }

    pub fn linear() -> Self {
        Self {
            kind: KernelKind::Linear,
            sigma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == KernelKind::Rbf && !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(DsidError::InvalidConfig(format!(
                "RBF sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Result of [`l2_normalize`]: the unit vector, or zeros with `degenerate` set.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub vector: Vec<f64>,
    pub norm: f64,
    pub degenerate: bool,
}

pub fn l2_normalize(x: &[f64]) -> Normalized {
    let norm = dot(x, x).sqrt();
    if norm <= NORM_EPS {
        Normalized {
            vector: vec![0.0; x.len()],
            norm,
            degenerate: true,
        }
    } else {
        Normalized {
            vector: x.iter().map(|v| v / norm).collect(),
            norm,
            degenerate: false,
        }
    }
}

fn check_dims(u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() || u.is_empty() {
        return Err(DsidError::KernelDimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    Ok(())
}

fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn kernel_eval(u: &[f64], v: &[f64], cfg: &KernelConfig) -> Result<f64> {
    check_dims(u, v)?;
    Ok(match cfg.kind {
        KernelKind::Rbf => (-squared_distance(u, v) / (2.0 * cfg.sigma * cfg.sigma)).exp(),
        KernelKind::Linear => dot(u, v),
    })
}

/// Partial derivatives of `k(u, v)` with respect to `u` and to `v`.
pub fn kernel_eval_grad(u: &[f64], v: &[f64], cfg: &KernelConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(u, v)?;
    Ok(match cfg.kind {
        KernelKind::Rbf => {
            let s2 = cfg.sigma * cfg.sigma;
            let k = (-squared_distance(u, v) / (2.0 * s2)).exp();
            let du: Vec<f64> = u.iter().zip(v).map(|(a, b)| k * (b - a) / s2).collect();
            let dv = du.iter().map(|g| -g).collect();
            (du, dv)
        }
        KernelKind::Linear => (v.to_vec(), u.to_vec()),
    })
}

/// Median-heuristic bandwidth: median pairwise distance over `points`, divided by √2.
///
/// Returns `None` when there are fewer than two points or the median is zero.
pub fn median_bandwidth<P: AsRef<[f64]>>(points: &[P]) -> Option<f64> {
    let mut dists = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            dists.push(squared_distance(points[i].as_ref(), points[j].as_ref()).sqrt());
        }
    }
    if dists.is_empty() {
        return None;
    }
    dists.sort_by(f64::total_cmp);
    let m = dists.len();
    let median = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    (median > 0.0).then(|| median / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn normalize_examples() {
        let n = l2_normalize(&[3.0, 4.0]);
        assert!(!n.degenerate);
        assert!(close(n.vector[0], 0.6, 1e-15) && close(n.vector[1], 0.8, 1e-15));

        let z = l2_normalize(&[0.0, 0.0]);
        assert!(z.degenerate);
        assert_eq!(z.vector, vec![0.0, 0.0]);

        let q = l2_normalize(&[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(q.norm, 2.0);
        assert_eq!(q.vector, vec![0.5; 4]);
    }

    #[test]
    fn kernel_examples() {
        let rbf = KernelConfig::rbf(1.0);
        for sigma in [0.1, 1.0, 7.5] {
            let v = [0.3, -2.0, 5.0];
            assert_eq!(kernel_eval(&v, &v, &KernelConfig::rbf(sigma)).unwrap(), 1.0);
        }
        let k = kernel_eval(&[1.0, 0.0], &[0.0, 1.0], &rbf).unwrap();
        assert!(close(k, 0.3678794412, 1e-10));
        assert!(close(k, (-1.0f64).exp(), 1e-15));

        let lin = kernel_eval(&[0.6, 0.8], &[0.6, 0.8], &KernelConfig::linear()).unwrap();
        assert!(close(lin, 1.0, 1e-15));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = kernel_eval(&[1.0], &[1.0, 2.0], &KernelConfig::rbf(1.0)).unwrap_err();
        assert!(err.to_string().contains("kernel dimension mismatch"));
        assert!(kernel_eval_grad(&[1.0], &[], &KernelConfig::linear()).is_err());
    }

    #[test]
    fn gradient_examples() {
        let cfg = KernelConfig::rbf(1.0);
        let (du, dv) = kernel_eval_grad(&[0.2, 0.4], &[0.2, 0.4], &cfg).unwrap();
        assert!(du.iter().chain(&dv).all(|&g| g == 0.0));

        let e = (-1.0f64).exp();
        let (du, dv) = kernel_eval_grad(&[1.0, 0.0], &[0.0, 1.0], &cfg).unwrap();
        assert!(close(du[0], -e, 1e-15) && close(du[1], e, 1e-15));
        assert!(close(dv[0], e, 1e-15) && close(dv[1], -e, 1e-15));
    }

    #[test]
    fn median_bandwidth_of_unit_square() {
        // distances: four sides of 1, two diagonals of √2 → median 1
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let s = median_bandwidth(&pts).unwrap();
        assert!(close(s, 1.0 / std::f64::consts::SQRT_2, 1e-15));
        assert!(median_bandwidth(&[[1.0, 1.0], [1.0, 1.0]]).is_none());
        assert!(median_bandwidth(&[[1.0]]).is_none());
    }

    fn central_difference(
        f: impl Fn(&[f64]) -> f64,
        x: &[f64],
        h: f64,
    ) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut p = x.to_vec();
                let mut m = x.to_vec();
                p[i] += h;
                m[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn gradient_matches_finite_differences_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..100 {
            let d = 1 + trial % 7;
            let u: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
            for cfg in [KernelConfig::rbf(0.5 + trial as f64 * 0.02), KernelConfig::linear()] {
                let (du, dv) = kernel_eval_grad(&u, &v, &cfg).unwrap();
                let fu = central_difference(|p| kernel_eval(p, &v, &cfg).unwrap(), &u, 1e-6);
                let fv = central_difference(|p| kernel_eval(&u, p, &cfg).unwrap(), &v, 1e-6);
                for (a, b) in du.iter().zip(&fu).chain(dv.iter().zip(&fv)) {
                    assert!(rel_err(*a, *b) < 1e-6, "trial {trial}: {a} vs {b}");
                }
            }
        }
    }

    fn vec_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..12).prop_flat_map(|d| {
            (
                prop::collection::vec(-10.0f64..10.0, d),
                prop::collection::vec(-10.0f64..10.0, d),
            )
        })
    }

    proptest! {
        #[test]
        fn kernels_are_symmetric((u, v) in vec_strategy(), sigma in 0.05f64..5.0) {
            for cfg in [KernelConfig::rbf(sigma), KernelConfig::linear()] {
                prop_assert_eq!(
                    kernel_eval(&u, &v, &cfg).unwrap().to_bits(),
                    kernel_eval(&v, &u, &cfg).unwrap().to_bits()
                );
            }
        }

        #[test]
        fn rbf_range_on_normalized_inputs((u, v) in vec_strategy(), sigma in 0.2f64..5.0) {
            let cfg = KernelConfig::rbf(sigma);
            let k = kernel_eval(&u, &v, &cfg).unwrap();
            prop_assert!((0.0..=1.0).contains(&k));
            let (nu, nv) = (l2_normalize(&u), l2_normalize(&v));
            prop_assume!(!nu.degenerate && !nv.degenerate);
            let k = kernel_eval(&nu.vector, &nv.vector, &cfg).unwrap();
            prop_assert!(k > 0.0 && k <= 1.0);
            prop_assert!(k >= (-2.0 / (sigma * sigma)).exp() * (1.0 - 1e-12));
        }

        #[test]
        fn normalize_is_idempotent((u, _v) in vec_strategy()) {
            let once = l2_normalize(&u);
            prop_assume!(!once.degenerate);
            let twice = l2_normalize(&once.vector);
            prop_assert!((once.vector.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
            for (a, b) in once.vector.iter().zip(&twice.vector) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
