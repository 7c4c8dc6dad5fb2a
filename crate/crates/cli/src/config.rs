//! Run settings assembled from defaults, a `key = value` file, then flags.

use std::path::Path;
use std::str::FromStr;

use dsid_core::dataio::SynthConfig;
use dsid_core::kernels::KernelKind;
use dsid_core::{Bandwidth, HsicMode, ModelDims, Monitor, ObjectiveConfig, TrainConfig};

use crate::error::{CliError, CliResult};

/// Keys that shape training runs, in manifest order.
pub const TRAINING_KEYS: &[&str] = &[
    "seed",
    "alpha",
    "beta",
    "hsic_mode",
    "kernel",
    "sigma",
    "bandwidth",
    "monitor",
    "jobs",
    "epochs",
    "batch_size",
    "patience",
    "lr",
    "weight_decay",
    "dropout",
    "d_shared",
    "d_feat",
    "depth",
];

/// Keys that shape synthetic data generation, in manifest order.
pub const SYNTH_KEYS: &[&str] = &[
    "seed",
    "lambda",
    "subjects",
    "samples",
    "d_emb",
    "noise_sigma",
    "subject_bias_sigma",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub objective: ObjectiveConfig,
    pub train: TrainConfig,
    pub d_shared: usize,
    pub d_feat: usize,
    pub depth: usize,
    pub synth: SynthConfig,
}

impl Default for Settings {
    fn default() -> Self {
        let dims = ModelDims::with_default_hidden(1);
        Self {
            seed: 0,
            objective: ObjectiveConfig::default(),
            train: TrainConfig::default(),
            d_shared: dims.d_shared,
            d_feat: dims.d_feat,
            depth: dims.depth,
            synth: SynthConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .parse()
        .map_err(|_| CliError::args(format!("invalid value {value:?} for {key}")))
}

fn non_negative(key: &str, value: &str) -> CliResult<f64> {
    let v: f64 = parse(key, value)?;
    if !v.is_finite() || v < 0.0 {
        return Err(CliError::args(format!("{key} must be finite and ≥ 0, got {value}")));
    }
    Ok(v)
}

impl Settings {
    /// Applies one override; unknown keys and malformed values are argument errors.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let value = value.trim();
        let o = &mut self.objective;
        let t = &mut self.train;
        let s = &mut self.synth;
        match key {
            "seed" => self.seed = parse(key, value)?,
            "alpha" => o.alpha = non_negative(key, value)?,
            "beta" => o.beta = non_negative(key, value)?,
            "hsic_mode" => o.hsic_mode = HsicMode::from_str(value).map_err(|e| CliError::args(e.to_string()))?,
            "kernel" => o.kernel.kind = KernelKind::from_str(value).map_err(|e| CliError::args(e.to_string()))?,
            "sigma" => o.kernel.sigma = parse(key, value)?,
            "bandwidth" => {
                o.bandwidth = match value.to_ascii_lowercase().as_str() {
                    "fixed" => Bandwidth::Fixed,
                    "median" => Bandwidth::MedianHeuristic,
                    _ => return Err(CliError::args(format!("unknown bandwidth {value:?}"))),
                }
            }
            "monitor" => t.monitor = Monitor::from_str(value).map_err(|e| CliError::args(e.to_string()))?,
            "jobs" => t.jobs = parse(key, value)?,
            "epochs" => t.max_epochs = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "patience" => t.patience = parse(key, value)?,
            "lr" => t.adam.lr = parse(key, value)?,
            "weight_decay" => t.adam.weight_decay = parse(key, value)?,
            "dropout" => t.dropout_p = parse(key, value)?,
            "d_shared" => self.d_shared = parse(key, value)?,
            "d_feat" => self.d_feat = parse(key, value)?,
            "depth" => self.depth = parse(key, value)?,
            "lambda" => s.lambda = parse(key, value)?,
            "subjects" => s.n_subjects = parse(key, value)?,
            "samples" => s.samples_per_subject = parse(key, value)?,
            "d_emb" => s.d_emb = parse(key, value)?,
            "noise_sigma" => s.noise_sigma = parse(key, value)?,
            "subject_bias_sigma" => s.subject_bias_sigma = parse(key, value)?,
            _ => return Err(CliError::args(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let o = &self.objective;
        let t = &self.train;
        let s = &self.synth;
        Some(match key {
            "seed" => self.seed.to_string(),
            "alpha" => o.alpha.to_string(),
            "beta" => o.beta.to_string(),
            "hsic_mode" => o.hsic_mode.as_str().into(),
            "kernel" => o.kernel.kind.as_str().into(),
            "sigma" => o.kernel.sigma.to_string(),
            "bandwidth" => match o.bandwidth {
                Bandwidth::Fixed => "fixed".into(),
                Bandwidth::MedianHeuristic => "median".into(),
            },
            "monitor" => t.monitor.as_str().into(),
            "jobs" => t.jobs.to_string(),
            "epochs" => t.max_epochs.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "patience" => t.patience.to_string(),
            "lr" => t.adam.lr.to_string(),
            "weight_decay" => t.adam.weight_decay.to_string(),
            "dropout" => t.dropout_p.to_string(),
            "d_shared" => self.d_shared.to_string(),
            "d_feat" => self.d_feat.to_string(),
            "depth" => self.depth.to_string(),
            "lambda" => s.lambda.to_string(),
            "subjects" => s.n_subjects.to_string(),
            "samples" => s.samples_per_subject.to_string(),
            "d_emb" => s.d_emb.to_string(),
            "noise_sigma" => s.noise_sigma.to_string(),
            "subject_bias_sigma" => s.subject_bias_sigma.to_string(),
            _ => return None,
        })
    }

    /// `(key, value)` for each of `keys`.
    pub fn entries(&self, keys: &[&'static str]) -> Vec<(&'static str, String)> {
        keys.iter().map(|&k| (k, self.get(k).expect("known key"))).collect()
    }

    /// Loads `path` on top of the current values.
    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
        for (key, value, line) in parse_config(&text)? {
            self.set(&key, &value)
                .map_err(|e| e.with_context(format!("{}:{line}", path.display())))?;
        }
        Ok(())
    }

    pub fn dims(&self, d_emb: usize) -> ModelDims {
        ModelDims {
            depth: self.depth,
            ..ModelDims::new(d_emb, self.d_shared, self.d_feat)
        }
    }

    /// Training settings with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            ..self.synth
        }
    }

    pub fn validate_training(&self) -> CliResult<()> {
        self.objective.validate()?;
        self.train_config().validate()?;
        if self.train.jobs == 0 {
            return Err(CliError::args("jobs must be ≥ 1"));
        }
        self.dims(1).validate()?;
        Ok(())
    }
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
/// Returns `(key, value, 1-based line number)`.
pub fn parse_config(text: &str) -> CliResult<Vec<(String, String, usize)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::args(format!("line {}: expected key = value", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(CliError::args(format!("line {}: empty key", i + 1)));
        }
        out.push((k.to_string(), v.trim().to_string(), i + 1));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let text = "# run\nalpha = 0.3  # weight\n\n  kernel=linear\n";
        let kv = parse_config(text).unwrap();
        assert_eq!(
            kv,
            vec![("alpha".into(), "0.3".into(), 2), ("kernel".into(), "linear".into(), 4)]
        );
        assert!(parse_config("alpha 0.3").is_err());
        assert!(parse_config(" = 3").is_err());
    }

    #[test]
    fn every_key_round_trips() {
        let mut s = Settings::default();
        s.set("seed", "9").unwrap();
        s.set("lambda", "0.25").unwrap();
        s.set("bandwidth", "median").unwrap();
        let mut back = Settings::default();
        for keys in [TRAINING_KEYS, SYNTH_KEYS] {
            for (k, v) in s.entries(keys) {
                back.set(k, &v).unwrap();
            }
        }
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_bad_values() {
        let mut s = Settings::default();
        assert_eq!(s.set("alpha", "-1").unwrap_err().kind, crate::error::ExitKind::InvalidArgs);
        assert!(s.set("kernel", "poly").is_err());
        assert!(s.set("epochs", "many").is_err());
        assert!(s.set("colour", "red").is_err());
        s.set("hsic_mode", "classical").unwrap();
        assert_eq!(s.objective.hsic_mode, HsicMode::ClassicalBiased);
    }

    #[test]
    fn file_then_override() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        std::fs::write(&p, "alpha = 0.9\nbeta = 0.2\n").unwrap();
        let mut s = Settings::default();
        s.apply_file(&p).unwrap();
        s.set("alpha", "0.1").unwrap();
        assert_eq!((s.objective.alpha, s.objective.beta), (0.1, 0.2));
        std::fs::write(&p, "alpha = x\n").unwrap();
        let err = Settings::default().apply_file(&p).unwrap_err();
        assert!(err.message.contains("run.cfg:1"), "{}", err.message);
    }
}
