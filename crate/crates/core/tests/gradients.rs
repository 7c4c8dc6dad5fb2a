//! Analytic gradients of the total objective against central finite differences.

use dsid_core::independence::HsicMode;
use dsid_core::kernels::KernelConfig;
use dsid_core::matrix::Matrix;
use dsid_core::netcore::{DropoutRngs, DsidModel, ForwardMode, ModelDims, Topology};
use dsid_core::objective::{total_loss, ObjectiveConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Problem {
    x: Matrix,
    yt: Vec<usize>,
    yd: Vec<usize>,
}

fn problem(seed: u64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Matrix::from_vec(4, 16, (0..64).map(|_| rng.random_range(-1.0..1.0)).collect());
    Problem {
        x,
        yt: vec![0, 3, 5, 1],
        yd: vec![2, 4, 0, 3],
    }
}

fn objective(model: &DsidModel, p: &Problem, cfg: &ObjectiveConfig) -> f64 {
    let out = model.forward(&p.x, ForwardMode::Train, &mut DropoutRngs::new(0)).unwrap();
    total_loss(
        &out.true_logits,
        out.disguised_logits.as_ref().unwrap(),
        &out.pairs,
        &p.yt,
        &p.yd,
        cfg,
    )
    .unwrap()
    .total
}

/// Largest relative error over all parameters; returns (error, tensor, index).
fn check(model: &DsidModel, p: &Problem, cfg: &ObjectiveConfig) -> (f64, usize, usize) {
    let out = model.forward(&p.x, ForwardMode::Train, &mut DropoutRngs::new(0)).unwrap();
    let loss = total_loss(
        &out.true_logits,
        out.disguised_logits.as_ref().unwrap(),
        &out.pairs,
        &p.yt,
        &p.yd,
        cfg,
    )
    .unwrap();
    let grads = model
        .backward(
            out.trace,
            &loss.grads.true_logits,
            Some(&loss.grads.disguised_logits),
            Some(&loss.grads.pairs),
        )
        .unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();

    let h = 1e-5;
    let mut worst = (0.0, 0, 0);
    let sizes: Vec<usize> = analytic.iter().map(|t| t.len()).collect();
    for (t, &len) in sizes.iter().enumerate() {
        for j in 0..len {
            let mut plus = model.clone();
            let mut minus = model.clone();
            plus.trainable_mut()[t].1[j] += h;
            minus.trainable_mut()[t].1[j] -= h;
            let numeric = (objective(&plus, p, cfg) - objective(&minus, p, cfg)) / (2.0 * h);
            let a = analytic[t][j];
            // floor sits above central-difference roundoff on structurally zero entries
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-5);
            if err > worst.0 {
                worst = (err, t, j);
            }
        }
    }
    worst
}

fn model(seed: u64) -> DsidModel {
    let dims = ModelDims::new(16, 12, 8);
    let mut m = DsidModel::init(dims, Topology::DualStream, 0.0, seed).unwrap();
    // non-trivial BatchNorm affine parameters
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    for (kind, t) in m.trainable_mut() {
        if !kind.decays() {
            t.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
        }
    }
    m
}

#[test]
fn full_model_gradient_matches_finite_differences() {
    let p = problem(5);
    let m = model(9);
    for mode in [HsicMode::PaperPerSample, HsicMode::ClassicalBiased] {
        for kernel in [KernelConfig::rbf(1.0), KernelConfig::rbf(0.5), KernelConfig::linear()] {
            let cfg = ObjectiveConfig {
                alpha: 0.5,
                beta: 1.0,
                kernel,
                hsic_mode: mode,
                ..Default::default()
            };
            let (err, t, j) = check(&m, &p, &cfg);
            assert!(err < 1e-4, "{mode:?} {kernel:?}: rel err {err} at tensor {t}[{j}]");
        }
    }
}

#[test]
fn heavy_hsic_weight_gradient() {
    // the HSIC path dominates when α is large
    let p = problem(6);
    let m = model(10);
    for mode in [HsicMode::PaperPerSample, HsicMode::ClassicalBiased] {
        let cfg = ObjectiveConfig {
            alpha: 50.0,
            beta: 0.3,
            kernel: KernelConfig::rbf(0.7),
            hsic_mode: mode,
            ..Default::default()
        };
        let (err, t, j) = check(&m, &p, &cfg);
        assert!(err < 1e-4, "{mode:?}: rel err {err} at tensor {t}[{j}]");
    }
}
