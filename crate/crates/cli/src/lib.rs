//! `dsid` command-line front end: synthetic data, single folds, LOSO tables,
//! weight sweeps, ablations and file inspection.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid arguments, 3 data invariant violation.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod table;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_ablate, cmd_inspect, cmd_loso, cmd_sweep, cmd_synth, cmd_train, Method, SweepParam};
pub use config::Settings;
pub use error::{CliError, CliResult, ExitKind};
pub use manifest::Manifest;
pub use table::Table;

#[derive(Debug, Parser)]
#[command(name = "dsid", version, about = "Dual-stream independence decoupling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every training command. Flags override the config file.
#[derive(Debug, Args, Default)]
struct Common {
    /// `key = value` settings file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (file for `synth`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite an existing manifest or output file
    #[arg(long)]
    force: bool,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    /// paper | classical
    #[arg(long)]
    hsic_mode: Option<String>,
    /// rbf | linear
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    /// fixed | median
    #[arg(long)]
    bandwidth: Option<String>,
    /// heldout | inner
    #[arg(long)]
    monitor: Option<String>,
    /// Folds trained concurrently
    #[arg(long)]
    jobs: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    patience: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    weight_decay: Option<String>,
    #[arg(long)]
    dropout: Option<String>,
    #[arg(long)]
    d_shared: Option<String>,
    #[arg(long)]
    d_feat: Option<String>,
    #[arg(long)]
    depth: Option<String>,
    /// Extra `key=value` override; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn flag_overrides(&self) -> Vec<(&'static str, &str)> {
        let flags: [(&'static str, &Option<String>); 18] = [
            ("seed", &self.seed),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("hsic_mode", &self.hsic_mode),
            ("kernel", &self.kernel),
            ("sigma", &self.sigma),
            ("bandwidth", &self.bandwidth),
            ("monitor", &self.monitor),
            ("jobs", &self.jobs),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("patience", &self.patience),
            ("lr", &self.lr),
            ("weight_decay", &self.weight_decay),
            ("dropout", &self.dropout),
            ("d_shared", &self.d_shared),
            ("d_feat", &self.d_feat),
            ("depth", &self.depth),
        ];
        flags
            .into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }

    /// Defaults, then the config file, then `extra`, then flags, then `--set`.
    fn settings(&self, extra: &[(&'static str, &str)]) -> CliResult<Settings> {
        let mut s = Settings::default();
        if let Some(path) = &self.config {
            s.apply_file(path)?;
        }
        for (k, v) in extra.iter().chain(&self.flag_overrides()) {
            s.set(k, v)?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::args(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            s.set(k.trim(), v)?;
        }
        Ok(s)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic embedding file
    Synth {
        #[arg(long)]
        lambda: Option<String>,
        #[arg(long)]
        subjects: Option<String>,
        #[arg(long)]
        samples: Option<String>,
        #[arg(long)]
        d_emb: Option<String>,
        #[arg(long)]
        noise_sigma: Option<String>,
        #[arg(long)]
        subject_bias_sigma: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Train one fold with a single held-out subject
    Train {
        data: PathBuf,
        #[arg(long)]
        holdout: u16,
        /// vit | dsid-nohsic | dsid
        #[arg(long, default_value = "dsid")]
        method: String,
        #[command(flatten)]
        common: Common,
    },
    /// Leave-one-subject-out evaluation
    Loso {
        data: PathBuf,
        /// Comma-separated: vit, dsid-nohsic, dsid
        #[arg(long, default_value = "dsid")]
        methods: String,
        #[command(flatten)]
        common: Common,
    },
    /// LOSO over a grid of alpha or beta values
    Sweep {
        data: PathBuf,
        /// alpha | beta
        #[arg(long, default_value = "alpha")]
        param: String,
        /// Comma-separated weights
        #[arg(long, default_value = "0.1,0.3,0.5,0.7,0.9,1.0", allow_hyphen_values = true)]
        values: String,
        #[command(flatten)]
        common: Common,
    },
    /// Baseline, DSID without HSIC and full DSID with shared seeds
    Ablate {
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Summarise an embedding file, CSV file or checkpoint
    Inspect { path: PathBuf },
}

fn dispatch(command: Command) -> CliResult<String> {
    match command {
        Command::Synth {
            lambda,
            subjects,
            samples,
            d_emb,
            noise_sigma,
            subject_bias_sigma,
            common,
        } => {
            let extra: Vec<(&'static str, &str)> = [
                ("lambda", &lambda),
                ("subjects", &subjects),
                ("samples", &samples),
                ("d_emb", &d_emb),
                ("noise_sigma", &noise_sigma),
                ("subject_bias_sigma", &subject_bias_sigma),
            ]
            .into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect();
            let settings = common.settings(&extra)?;
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("synth.dse"));
            cmd_synth(&settings, &out, common.force)
        }
        Command::Train {
            data,
            holdout,
            method,
            common,
        } => {
            let settings = common.settings(&[])?;
            let method: Method = method.parse()?;
            let out = common.out.clone().unwrap_or_else(|| commands::default_out("train"));
            cmd_train(&data, holdout, method, &settings, &out, common.force)
        }
        Command::Loso { data, methods, common } => {
            let settings = common.settings(&[])?;
            let methods = commands::parse_methods(&methods)?;
            let out = common.out.clone().unwrap_or_else(|| commands::default_out("loso"));
            cmd_loso("loso", &data, &methods, &settings, &out, common.force).map(|t| t.to_text())
        }
        Command::Sweep {
            data,
            param,
            values,
            common,
        } => {
            let settings = common.settings(&[])?;
            let param: SweepParam = param.parse()?;
            let values = commands::parse_values(&values)?;
            let out = common.out.clone().unwrap_or_else(|| commands::default_out("sweep"));
            cmd_sweep(&data, param, &values, &settings, &out, common.force).map(|t| t.to_text())
        }
        Command::Ablate { data, common } => {
            let settings = common.settings(&[])?;
            let out = common.out.clone().unwrap_or_else(|| commands::default_out("ablate"));
            cmd_ablate(&data, &settings, &out, common.force).map(|t| t.to_text())
        }
        Command::Inspect { path } => cmd_inspect(&path),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Normal output goes to `stdout`, diagnostics to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                ExitKind::InvalidArgs.code()
            } else {
                let _ = write!(stdout, "{}", e.render());
                0
            };
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(text) => {
            let _ = write!(stdout, "{text}");
            0
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.kind.code()
        }
    }
}
