use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One bias-corrected Adam update with coupled L2 decay (`g ← g + wd·θ`).
///
/// `params` pairs each tensor with whether it decays; `grads` must follow the
/// same order and shapes. Moment buffers are allocated on the first call.
pub fn adam_step(
    params: &mut [(bool, &mut [f64])],
    grads: &[&[f64]],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(shape_err("adam tensor count", params.len(), grads.len()));
    }
    for (i, ((_, p), g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() {
            return Err(shape_err("adam tensor length", p.len(), format!("{} (tensor {i})", g.len())));
        }
    }
    if state.m.is_empty() && state.step == 0 {
        state.m = params.iter().map(|(_, p)| vec![0.0; p.len()]).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != params.len() || state.m.iter().zip(params.iter()).any(|(m, (_, p))| m.len() != p.len()) {
        return Err(shape_err("adam state", state.m.len(), params.len()));
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (((decays, p), g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let wd = if *decays { cfg.weight_decay } else { 0.0 };
        for j in 0..p.len() {
            let gj = g[j] + wd * p[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
