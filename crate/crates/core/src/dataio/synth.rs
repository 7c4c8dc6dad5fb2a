//! Synthetic masked-expression embeddings.
//!
//! Each sample mixes a true-emotion code and a disguised-emotion code:
//!
//! ```text
//! e = (1 − λ)·A·u_t + λ·B·v_g + s_subject + ε
//! ```
//!
//! `u_t`, `v_g` are one-hot, so `A·u_t` is column `t` of `A`. The columns of
//! `A` and `B` are Gaussian directions rescaled to unit length. `s_subject` is
//! a per-subject offset drawn once, `ε` is per-sample noise. Low λ (onset-like)
//! keeps the true emotion visible; high λ (apex-like) buries it under the
//! disguise.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{Dataset, EmbeddingRecord, FrameType};
use crate::error::{DsidError, Result};
use crate::netcore::{stream, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub samples_per_subject: usize,
    pub d_emb: usize,
    /// Disguise intensity in [0, 1].
    pub lambda: f64,
    pub noise_sigma: f64,
    pub subject_bias_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 12,
            samples_per_subject: 40,
            d_emb: 64,
            lambda: 0.8,
            noise_sigma: 0.6,
            subject_bias_sigma: 0.3,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(DsidError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.lambda) {
            return invalid(format!("lambda out of range [0, 1]: {}", self.lambda));
        }
        if self.n_subjects == 0 || self.samples_per_subject == 0 || self.d_emb == 0 {
            return invalid("subjects, samples per subject and d_emb must be ≥ 1".into());
        }
        if self.n_subjects > u16::MAX as usize {
            return invalid(format!("at most {} subjects", u16::MAX));
        }
        for (name, v) in [("noise_sigma", self.noise_sigma), ("subject_bias_sigma", self.subject_bias_sigma)] {
            if !(v.is_finite() && v >= 0.0) {
                return invalid(format!("{name} must be finite and ≥ 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// The 30 valid (true, disguised) label combinations, true-major.
pub fn class_pairs() -> Vec<(u8, u8)> {
    let c = NUM_CLASSES as u8;
    (0..c)
        .flat_map(|t| (0..c).filter(move |&g| g != t).map(move |g| (t, g)))
        .collect()
}

fn unit_columns(d: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..NUM_CLASSES)
        .map(|_| {
            let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 0.0 {
                v.iter_mut().for_each(|x| *x /= n);
            }
            v
        })
        .collect()
}

fn gaussian(sigma: f64, d: usize, rng: &mut impl Rng) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; d];
    }
    let dist = Normal::new(0.0, sigma).expect("validated sigma");
    (0..d).map(|_| dist.sample(rng)).collect()
}

/// Subjects are numbered 1..=n_subjects and emitted in that order.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let d = cfg.d_emb;
    let mut mixing_rng = stream(cfg.seed, 1);
    let true_codes = unit_columns(d, &mut mixing_rng);
    let disguise_codes = unit_columns(d, &mut mixing_rng);
    let mut subject_rng = stream(cfg.seed, 2);
    let mut sample_rng = stream(cfg.seed, 3);
    let pairs = class_pairs();
    let frame_type = if cfg.lambda >= 0.5 { FrameType::Apex } else { FrameType::Onset };

    let mut records = Vec::with_capacity(cfg.n_subjects * cfg.samples_per_subject);
    for s in 0..cfg.n_subjects {
        let bias = gaussian(cfg.subject_bias_sigma, d, &mut subject_rng);
        for _ in 0..cfg.samples_per_subject {
            let (t, g) = pairs[sample_rng.random_range(0..pairs.len())];
            let noise = gaussian(cfg.noise_sigma, d, &mut sample_rng);
            let a = &true_codes[t as usize];
            let b = &disguise_codes[g as usize];
            let embedding = (0..d)
                .map(|j| ((1.0 - cfg.lambda) * a[j] + cfg.lambda * b[j] + bias[j] + noise[j]) as f32)
                .collect();
            records.push(EmbeddingRecord {
                subject_id: (s + 1) as u16,
                true_label: t,
                disguised_label: g,
                frame_type,
                embedding,
            });
        }
    }
    Ok(Dataset { d_emb: d, records })
}
