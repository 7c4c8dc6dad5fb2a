//! Subcommand implementations. Each returns the text printed on success and
//! writes its artifacts under the requested output location.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dsid_core::dataio::{decode_embeddings, import_csv, read_embeddings, split_by_subject, synth_generate, write_embeddings};
use dsid_core::netcore::{decode_model, save_model, MODEL_MAGIC};
use dsid_core::trainer::{run_loso, train_fold, TrainedFold};
use dsid_core::{Dataset, DsidModel, FoldResult, LosoRun, ObjectiveConfig, PooledScore, Task, Topology, Variant};

use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::manifest::{ensure_writable, Manifest};
use crate::table::{fmt_metric, Table};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const TABLE_TEXT_FILE: &str = "table.txt";
pub const TABLE_CSV_FILE: &str = "table.csv";

/// Methods compared in result tables; the declaration order is the row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// Single-stream classifiers, one per task.
    Baseline,
    /// Dual-stream model with the HSIC weight forced to zero.
    DsidNoHsic,
    Dsid,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Baseline, Method::DsidNoHsic, Method::Dsid];

    pub fn label(self) -> &'static str {
        match self {
            Method::Baseline => "ViT-equivalent",
            Method::DsidNoHsic => "DSID w/o HSIC",
            Method::Dsid => "DSID",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Method::Baseline => "vit",
            Method::DsidNoHsic => "dsid-nohsic",
            Method::Dsid => "dsid",
        }
    }

    /// The objective this method trains with.
    pub fn objective(self, base: &ObjectiveConfig) -> ObjectiveConfig {
        match self {
            Method::DsidNoHsic => ObjectiveConfig { alpha: 0.0, ..*base },
            _ => *base,
        }
    }
}

impl FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.slug() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| CliError::args(format!("unknown method {s:?} (expected vit, dsid-nohsic or dsid)")))
    }
}

/// Parses a comma-separated method list into table order, without duplicates.
pub fn parse_methods(list: &str) -> CliResult<Vec<Method>> {
    let mut v: Vec<Method> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(Method::from_str)
        .collect::<CliResult<_>>()?;
    v.sort();
    v.dedup();
    if v.is_empty() {
        return Err(CliError::args("no methods requested"));
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Alpha,
    Beta,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Beta => "beta",
        }
    }

    pub fn companion(self) -> &'static str {
        match self {
            SweepParam::Alpha => "beta",
            SweepParam::Beta => "alpha",
        }
    }
}

impl FromStr for SweepParam {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "alpha" => Ok(SweepParam::Alpha),
            "beta" => Ok(SweepParam::Beta),
            _ => Err(CliError::args(format!("unknown sweep parameter {s:?}"))),
        }
    }
}

pub const DEFAULT_SWEEP_GRID: [f64; 6] = [0.1, 0.3, 0.5, 0.7, 0.9, 1.0];

/// Parses a comma-separated list of non-negative weights.
pub fn parse_values(list: &str) -> CliResult<Vec<f64>> {
    let v: Vec<f64> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            let x: f64 = s
                .trim()
                .parse()
                .map_err(|_| CliError::args(format!("invalid sweep value {s:?}")))?;
            if !x.is_finite() || x < 0.0 {
                return Err(CliError::args(format!("sweep values must be finite and ≥ 0, got {s}")));
            }
            Ok(x)
        })
        .collect::<CliResult<_>>()?;
    if v.is_empty() {
        return Err(CliError::args("at least one sweep value is required"));
    }
    Ok(v)
}

/// Reads a `DSE1` file, or CSV when the extension is `.csv`.
pub fn load_dataset(path: &Path) -> CliResult<Dataset> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let ds = if is_csv { import_csv(path) } else { read_embeddings(path) };
    ds.map_err(|e| CliError::from(e).with_context(path.display()))
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn save_checkpoint(model: &DsidModel, path: &Path) -> CliResult<()> {
    save_model(model, path).map_err(|e| CliError::from(e).with_context(path.display()))
}

fn push_settings(m: &mut Manifest, settings: &Settings) {
    for (k, v) in settings.entries(crate::config::TRAINING_KEYS) {
        m.push(k, v);
    }
}

fn push_pooled(m: &mut Manifest, prefix: &str, task: &str, p: Option<&PooledScore>) {
    m.push(format!("{prefix}{task}_accuracy"), fmt_metric(p.map(|p| p.micro.accuracy)));
    m.push(format!("{prefix}{task}_macro_f1"), fmt_metric(p.map(|p| p.micro.macro_f1)));
    m.push(
        format!("{prefix}{task}_fold_mean_accuracy"),
        fmt_metric(p.map(|p| p.fold_mean_accuracy)),
    );
    m.push(
        format!("{prefix}{task}_fold_mean_macro_f1"),
        fmt_metric(p.map(|p| p.fold_mean_macro_f1)),
    );
}

fn dataset_entries(m: &mut Manifest, data: &Path, ds: &Dataset) {
    let subjects = ds.subjects();
    m.push("data", data.display())
        .push("records", ds.len())
        .push("d_emb", ds.d_emb)
        .push("subjects", subjects.len());
}

pub fn cmd_synth(settings: &Settings, out: &Path, force: bool) -> CliResult<String> {
    let cfg = settings.synth_config();
    cfg.validate()?;
    ensure_writable(out, force)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let ds = synth_generate(&cfg)?;
    write_embeddings(&ds, out).map_err(|e| CliError::from(e).with_context(out.display()))?;
    let frame = ds.records.first().map_or("-", |r| r.frame_type.as_str());
    Ok(format!(
        "wrote {} records to {}: {} subjects × {} samples, d_emb {}, lambda {}, frame {}, seed {}\n",
        ds.len(),
        out.display(),
        cfg.n_subjects,
        cfg.samples_per_subject,
        cfg.d_emb,
        cfg.lambda,
        frame,
        cfg.seed
    ))
}

/// One trained model of a method and the label of the task it covers.
struct Part {
    tag: &'static str,
    variant: Variant,
}

fn parts(method: Method) -> Vec<Part> {
    match method {
        Method::Baseline => vec![
            Part {
                tag: "ter",
                variant: Variant::SingleStream(Task::Ter),
            },
            Part {
                tag: "der",
                variant: Variant::SingleStream(Task::Der),
            },
        ],
        Method::DsidNoHsic | Method::Dsid => vec![Part {
            tag: "joint",
            variant: Variant::Dsid,
        }],
    }
}

/// Pooled scores of one method together with the runs behind them.
pub struct MethodRun {
    pub method: Method,
    pub objective: ObjectiveConfig,
    pub runs: Vec<(&'static str, LosoRun)>,
    pub ter: Option<PooledScore>,
    pub der: Option<PooledScore>,
}

pub fn run_method(ds: &Dataset, settings: &Settings, method: Method, objective: ObjectiveConfig) -> CliResult<MethodRun> {
    let dims = settings.dims(ds.d_emb);
    let train = settings.train_config();
    let mut runs = Vec::new();
    for p in parts(method) {
        runs.push((p.tag, run_loso(ds, dims, p.variant, &objective, &train)?));
    }
    let find = |task: Task| runs.iter().find_map(|(_, r)| r.pooled(task).cloned());
    Ok(MethodRun {
        method,
        objective,
        ter: find(Task::Ter),
        der: find(Task::Der),
        runs,
    })
}

fn fold_manifest(
    label: &str,
    tag: &str,
    base_seed: u64,
    fold: &FoldResult,
    n_test: usize,
    n_train: usize,
    checkpoint: &str,
) -> Manifest {
    let mut m = Manifest::new();
    m.push("method", label)
        .push("part", tag)
        .push("subject", fold.subject_id)
        .push("fold_seed", base_seed.wrapping_add(fold.subject_id as u64))
        .push("train_records", n_train)
        .push("test_records", n_test)
        .push("epochs_ran", fold.epochs_ran)
        .push("best_epoch", fold.best_epoch)
        .push("best_monitor_accuracy", format!("{:.4}", fold.best_monitor_accuracy));
    for (task, o) in [("ter", &fold.ter), ("der", &fold.der)] {
        m.push(format!("{task}_accuracy"), fmt_metric(o.as_ref().map(|o| o.score.accuracy)));
        m.push(format!("{task}_macro_f1"), fmt_metric(o.as_ref().map(|o| o.score.macro_f1)));
    }
    m.push("checkpoint", checkpoint);
    m
}

/// Writes `<dir>/subject-<id>[-<part>].{txt,dsm}` for every fold of every part.
fn write_folds(dir: &Path, label: &str, run: &MethodRun, ds: &Dataset, seed: u64) -> CliResult<()> {
    create_dir(dir)?;
    let counts: BTreeMap<u16, usize> = ds.records.iter().fold(BTreeMap::new(), |mut m, r| {
        *m.entry(r.subject_id).or_default() += 1;
        m
    });
    let single = run.runs.len() == 1;
    for (tag, loso) in &run.runs {
        for (fold, model) in loso.folds.iter().zip(&loso.models) {
            let stem = if single {
                format!("subject-{:03}", fold.subject_id)
            } else {
                format!("subject-{:03}-{tag}", fold.subject_id)
            };
            let ckpt = format!("{stem}.dsm");
            save_checkpoint(model, &dir.join(&ckpt))?;
            let n_test = counts[&fold.subject_id];
            fold_manifest(label, tag, seed, fold, n_test, ds.len() - n_test, &ckpt).write(&dir.join(format!("{stem}.txt")))?;
        }
    }
    Ok(())
}

fn prepare_out_dir(out: &Path, force: bool) -> CliResult<()> {
    ensure_writable(&out.join(MANIFEST_FILE), force)?;
    create_dir(out)
}

fn write_tables(out: &Path, table: &Table) -> CliResult<()> {
    write_file(&out.join(TABLE_TEXT_FILE), &table.to_text())?;
    write_file(&out.join(TABLE_CSV_FILE), &table.to_csv())
}

/// Leave-one-subject-out evaluation of `methods`, one table row each.
pub fn cmd_loso(
    command: &str,
    data: &Path,
    methods: &[Method],
    settings: &Settings,
    out: &Path,
    force: bool,
) -> CliResult<Table> {
    settings.validate_training()?;
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    if methods.is_empty() {
        return Err(CliError::args("no methods requested"));
    }
    let ds = load_dataset(data)?;
    prepare_out_dir(out, force)?;

    let mut table = Table::new("method");
    let mut m = Manifest::new();
    m.push("command", command);
    dataset_entries(&mut m, data, &ds);
    push_settings(&mut m, settings);
    m.push("methods", methods.iter().map(|m| m.slug()).collect::<Vec<_>>().join(","));
    for &method in &methods {
        let run = run_method(&ds, settings, method, method.objective(&settings.objective))?;
        table.push_scores(method.label(), run.ter.as_ref(), run.der.as_ref());
        let prefix = format!("{}.", method.slug());
        m.push(format!("{prefix}label"), method.label())
            .push(format!("{prefix}seed"), settings.seed)
            .push(format!("{prefix}alpha"), run.objective.alpha)
            .push(format!("{prefix}beta"), run.objective.beta)
            .push(
                format!("{prefix}topology"),
                match method {
                    Method::Baseline => "single-stream",
                    _ => "dual-stream",
                },
            );
        push_pooled(&mut m, &prefix, "ter", run.ter.as_ref());
        push_pooled(&mut m, &prefix, "der", run.der.as_ref());
        write_folds(&out.join("folds").join(method.slug()), method.label(), &run, &ds, settings.seed)?;
    }
    write_tables(out, &table)?;
    m.stamp_clock();
    m.write(&out.join(MANIFEST_FILE))?;
    Ok(table)
}

pub fn cmd_ablate(data: &Path, settings: &Settings, out: &Path, force: bool) -> CliResult<Table> {
    cmd_loso("ablate", data, &Method::ALL, settings, out, force)
}

/// One DSID LOSO run per value of `param`, the other weight held at its configured value.
pub fn cmd_sweep(
    data: &Path,
    param: SweepParam,
    values: &[f64],
    settings: &Settings,
    out: &Path,
    force: bool,
) -> CliResult<Table> {
    settings.validate_training()?;
    if values.is_empty() {
        return Err(CliError::args("at least one sweep value is required"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(CliError::args(format!("sweep values must be finite and ≥ 0, got {v}")));
    }
    let ds = load_dataset(data)?;
    prepare_out_dir(out, force)?;

    let companion = match param {
        SweepParam::Alpha => settings.objective.beta,
        SweepParam::Beta => settings.objective.alpha,
    };
    let mut table = Table::new(param.name());
    let mut m = Manifest::new();
    m.push("command", "sweep");
    dataset_entries(&mut m, data, &ds);
    push_settings(&mut m, settings);
    m.push("sweep_param", param.name())
        .push("sweep_values", values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
        .push(format!("fixed_{}", param.companion()), companion);
    for &v in values {
        let mut obj = settings.objective;
        match param {
            SweepParam::Alpha => obj.alpha = v,
            SweepParam::Beta => obj.beta = v,
        }
        let run = run_method(&ds, settings, Method::Dsid, obj)?;
        let label = v.to_string();
        table.push_scores(&label, run.ter.as_ref(), run.der.as_ref());
        let prefix = format!("{}={label}.", param.name());
        push_pooled(&mut m, &prefix, "ter", run.ter.as_ref());
        push_pooled(&mut m, &prefix, "der", run.der.as_ref());
        let dir = out.join("folds").join(format!("{}={label}", param.name()));
        write_folds(&dir, Method::Dsid.label(), &run, &ds, settings.seed)?;
    }
    write_tables(out, &table)?;
    m.stamp_clock();
    m.write(&out.join(MANIFEST_FILE))?;
    Ok(table)
}

/// Trains one fold with `holdout` as the test subject.
pub fn cmd_train(
    data: &Path,
    holdout: u16,
    method: Method,
    settings: &Settings,
    out: &Path,
    force: bool,
) -> CliResult<String> {
    settings.validate_training()?;
    let ds = load_dataset(data)?;
    let (train, test) = split_by_subject(&ds, holdout)?;
    prepare_out_dir(out, force)?;

    let dims = settings.dims(ds.d_emb);
    let cfg = settings.train_config();
    let obj = method.objective(&settings.objective);
    let mut m = Manifest::new();
    m.push("command", "train");
    dataset_entries(&mut m, data, &ds);
    push_settings(&mut m, settings);
    m.push("method", method.slug())
        .push("holdout", holdout)
        .push("train_records", train.len())
        .push("test_records", test.len())
        .push("alpha_used", obj.alpha);

    let mut report = String::new();
    for p in parts(method) {
        let TrainedFold { result, model } = train_fold(&train, &test, dims, p.variant, &obj, &cfg)?;
        let ckpt = format!("model-{}.dsm", p.tag);
        save_checkpoint(&model, &out.join(&ckpt))?;
        let prefix = format!("{}.", p.tag);
        m.push(format!("{prefix}checkpoint"), &ckpt)
            .push(format!("{prefix}epochs_ran"), result.epochs_ran)
            .push(format!("{prefix}best_epoch"), result.best_epoch);
        for (task, o) in [("ter", &result.ter), ("der", &result.der)] {
            if let Some(o) = o {
                m.push(format!("{prefix}{task}_accuracy"), fmt_metric(Some(o.score.accuracy)));
                m.push(format!("{prefix}{task}_macro_f1"), fmt_metric(Some(o.score.macro_f1)));
                let _ = writeln!(
                    report,
                    "{} {} subject {holdout}: {} accuracy {:.4}, macro-F1 {:.4} (epochs {}, best {})",
                    method.label(),
                    p.tag,
                    task.to_uppercase(),
                    o.score.accuracy,
                    o.score.macro_f1,
                    result.epochs_ran,
                    result.best_epoch
                );
            }
        }
    }
    m.stamp_clock();
    m.write(&out.join(MANIFEST_FILE))?;
    Ok(report)
}

fn histogram(values: impl Iterator<Item = u8>) -> String {
    let mut counts = [0usize; dsid_core::netcore::NUM_CLASSES];
    for v in values {
        counts[v as usize] += 1;
    }
    counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
}

/// Summarises an embedding file, CSV file or model checkpoint.
pub fn cmd_inspect(path: &Path) -> CliResult<String> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        return Ok(describe_dataset("CSV", &load_dataset(path)?));
    }
    let bytes = std::fs::read(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    if bytes.starts_with(MODEL_MAGIC) {
        let model = decode_model(&bytes).map_err(|e| CliError::from(e).with_context(path.display()))?;
        return Ok(describe_model(&model));
    }
    let ds = decode_embeddings(&bytes).map_err(|e| CliError::from(e).with_context(path.display()))?;
    Ok(describe_dataset("DSE1", &ds))
}

fn describe_dataset(format: &str, ds: &Dataset) -> String {
    let subjects = ds.subjects();
    let apex = ds
        .records
        .iter()
        .filter(|r| r.frame_type == dsid_core::FrameType::Apex)
        .count();
    let pairs: std::collections::BTreeSet<(u8, u8)> =
        ds.records.iter().map(|r| (r.true_label, r.disguised_label)).collect();
    let mut s = String::new();
    let _ = writeln!(s, "format     {format}");
    let _ = writeln!(s, "records    {}", ds.len());
    let _ = writeln!(s, "d_emb      {}", ds.d_emb);
    let _ = writeln!(
        s,
        "subjects   {} ({})",
        subjects.len(),
        match (subjects.first(), subjects.last()) {
            (Some(a), Some(b)) => format!("{a}..{b}"),
            _ => "-".into(),
        }
    );
    let _ = writeln!(s, "frames     onset {}, apex {apex}", ds.len() - apex);
    let _ = writeln!(s, "true       {}", histogram(ds.records.iter().map(|r| r.true_label)));
    let _ = writeln!(s, "disguised  {}", histogram(ds.records.iter().map(|r| r.disguised_label)));
    let _ = writeln!(s, "pairs      {} distinct", pairs.len());
    s
}

fn describe_model(model: &DsidModel) -> String {
    let d = model.dims;
    let dropout = model.masked_adapter.blocks.first().map_or(0.0, |b| b.dropout_p);
    let mut s = String::new();
    let _ = writeln!(s, "format      DSM1");
    let _ = writeln!(
        s,
        "topology    {}",
        match model.topology() {
            Topology::DualStream => "dual-stream",
            Topology::SingleStream => "single-stream",
        }
    );
    let _ = writeln!(
        s,
        "dims        d_emb {}, d_shared {}, d_feat {}, classes {}/{}, depth {}",
        d.d_emb, d.d_shared, d.d_feat, d.c_true, d.c_disg, d.depth
    );
    let _ = writeln!(s, "dropout     {dropout}");
    let _ = writeln!(s, "parameters  {}", model.parameter_count());
    s
}

/// Default output directory for a command.
pub fn default_out(command: &str) -> PathBuf {
    PathBuf::from(format!("dsid-{command}"))
}
