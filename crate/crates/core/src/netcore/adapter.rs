use rand::{Rng, RngCore};

use crate::error::{shape_err, Result};
use crate::matrix::Matrix;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Fully connected layer, `y = x Wᵀ + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    /// Uniform(−√(6/fan_in), √(6/fan_in)) weights, zero bias.
    pub fn init(input: usize, output: usize, rng: &mut impl RngCore) -> Self {
        let bound = init_bound(input);
        let data = (0..input * output)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Self {
            weight: Matrix::from_vec(output, input, data),
            bias: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        x.affine(&self.weight, &self.bias)
    }

    /// Returns (parameter gradients, gradient w.r.t. the input).
    pub fn backward(&self, x: &Matrix, grad_out: &Matrix) -> (LinearGrads, Matrix) {
        let grads = LinearGrads {
            weight: grad_out.t_matmul(x),
            bias: grad_out.column_sums(),
        };
        (grads, grad_out.matmul(&self.weight))
    }
}

pub fn init_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl LinearGrads {
    pub fn zeros_like(layer: &Linear) -> Self {
        Self {
            weight: Matrix::zeros(layer.output_dim(), layer.input_dim()),
            bias: vec![0.0; layer.output_dim()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: vec![1.0; features],
            beta: vec![0.0; features],
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }
}

/// Linear → BatchNorm → ReLU → Dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterBlock {
    pub linear: Linear,
    pub bn: BatchNorm,
    pub dropout_p: f64,
}

/// Everything one block's backward pass needs from its forward pass.
#[derive(Debug, Clone)]
pub struct BlockTrace {
    input: Matrix,
    normalized: Matrix,
    inv_std: Vec<f64>,
    pre_relu: Matrix,
    /// Inverted-dropout multipliers (0 or 1/(1−p)); `None` when dropout is inactive.
    mask: Option<Vec<f64>>,
    pub(crate) batch_mean: Vec<f64>,
    pub(crate) batch_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrads {
    pub linear: LinearGrads,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl AdapterBlock {
    pub fn init(input: usize, output: usize, dropout_p: f64, rng: &mut impl RngCore) -> Self {
        Self {
            linear: Linear::init(input, output, rng),
            bn: BatchNorm::new(output),
            dropout_p,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.linear.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.linear.output_dim()
    }

    /// Training-mode forward pass using batch statistics. Requires at least two rows.
    pub fn forward_train(&self, x: &Matrix, rng: &mut impl RngCore) -> (Matrix, BlockTrace) {
        let n = x.rows();
        debug_assert!(n >= 2);
        let z = self.linear.forward(x);
        let f = z.cols();
        let inv_n = 1.0 / n as f64;
        let mean: Vec<f64> = z.column_sums().into_iter().map(|s| s * inv_n).collect();
        let mut var = vec![0.0; f];
        for r in z.iter_rows() {
            for ((v, &zj), &mj) in var.iter_mut().zip(r).zip(&mean) {
                *v += (zj - mj) * (zj - mj);
            }
        }
        var.iter_mut().for_each(|v| *v *= inv_n);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.bn.eps).sqrt()).collect();

        let mut normalized = Matrix::zeros(n, f);
        let mut pre_relu = Matrix::zeros(n, f);
        for i in 0..n {
            let zr = z.row(i);
            for j in 0..f {
                let xh = (zr[j] - mean[j]) * inv_std[j];
                normalized.set(i, j, xh);
                pre_relu.set(i, j, self.bn.gamma[j] * xh + self.bn.beta[j]);
            }
        }

        let mut out = pre_relu.map(|v| v.max(0.0));
        let mask = if self.dropout_p > 0.0 {
            let keep_scale = 1.0 / (1.0 - self.dropout_p);
            let m: Vec<f64> = (0..n * f)
                .map(|_| {
                    if rng.random::<f64>() < self.dropout_p {
                        0.0
                    } else {
                        keep_scale
                    }
                })
                .collect();
            for (o, &mk) in out.as_mut_slice().iter_mut().zip(&m) {
                *o *= mk;
            }
            Some(m)
        } else {
            None
        };

        let trace = BlockTrace {
            input: x.clone(),
            normalized,
            inv_std,
            pre_relu,
            mask,
            batch_mean: mean,
            batch_var: var,
        };
        (out, trace)
    }

    /// Inference-mode forward pass: running statistics, no dropout.
    pub fn forward_eval(&self, x: &Matrix) -> Matrix {
        let mut z = self.linear.forward(x);
        let scale: Vec<f64> = self
            .bn
            .running_var
            .iter()
            .map(|v| 1.0 / (v + self.bn.eps).sqrt())
            .collect();
        for i in 0..z.rows() {
            for (j, v) in z.row_mut(i).iter_mut().enumerate() {
                let xh = (*v - self.bn.running_mean[j]) * scale[j];
                *v = (self.bn.gamma[j] * xh + self.bn.beta[j]).max(0.0);
            }
        }
        z
    }

    pub fn backward(&self, trace: &BlockTrace, grad_out: &Matrix) -> Result<(BlockGrads, Matrix)> {
        let (n, f) = trace.pre_relu.shape();
        if grad_out.shape() != (n, f) || f != self.output_dim() {
            return Err(shape_err(
                "adapter backward",
                format!("{n}x{}", self.output_dim()),
                format!("{}x{}", grad_out.rows(), grad_out.cols()),
            ));
        }
        // through dropout and ReLU
        let mut dy = grad_out.clone();
        if let Some(mask) = &trace.mask {
            for (g, &m) in dy.as_mut_slice().iter_mut().zip(mask) {
                *g *= m;
            }
        }
        for (g, &y) in dy.as_mut_slice().iter_mut().zip(trace.pre_relu.as_slice()) {
            if y <= 0.0 {
                *g = 0.0;
            }
        }

        let mut dgamma = vec![0.0; f];
        let dbeta = dy.column_sums();
        for i in 0..n {
            for (j, dg) in dgamma.iter_mut().enumerate() {
                *dg += dy.get(i, j) * trace.normalized.get(i, j);
            }
        }

        // batch-statistics chain: dz = inv_std/N · (N·dx̂ − Σdx̂ − x̂·Σ(dx̂·x̂))
        let nf = n as f64;
        let mut dz = Matrix::zeros(n, f);
        for j in 0..f {
            let g = self.bn.gamma[j];
            let mut sum_dxh = 0.0;
            let mut sum_dxh_xh = 0.0;
            for i in 0..n {
                let dxh = dy.get(i, j) * g;
                sum_dxh += dxh;
                sum_dxh_xh += dxh * trace.normalized.get(i, j);
            }
            let k = trace.inv_std[j] / nf;
            for i in 0..n {
                let dxh = dy.get(i, j) * g;
                dz.set(
                    i,
                    j,
                    k * (nf * dxh - sum_dxh - trace.normalized.get(i, j) * sum_dxh_xh),
                );
            }
        }

        let (linear, dx) = self.linear.backward(&trace.input, &dz);
        Ok((
            BlockGrads {
                linear,
                gamma: dgamma,
                beta: dbeta,
            },
            dx,
        ))
    }

    /// running ← (1 − momentum)·running + momentum·batch, with the unbiased batch variance.
    pub fn commit_running_stats(&mut self, trace: &BlockTrace, batch_rows: usize) {
        let m = self.bn.momentum;
        let correction = batch_rows as f64 / (batch_rows as f64 - 1.0);
        for j in 0..self.bn.features() {
            self.bn.running_mean[j] = (1.0 - m) * self.bn.running_mean[j] + m * trace.batch_mean[j];
            self.bn.running_var[j] =
                (1.0 - m) * self.bn.running_var[j] + m * trace.batch_var[j] * correction;
        }
    }
}
