//! Command-line driver for the embedding compression pipeline.
//!
//! Every phase reads and writes artifacts in a run directory:
//!
//! ```text
//! config.cfg          canonical config, written by `prepare`
//! dataset.oeds        encoded dataset and schema
//! supernet-N.ckpt     supernet snapshot + supernet-N.tsv epoch metrics
//! search-N.mask       best dimension mask + search-N.tsv evaluation log
//! final-N.ckpt        retrained compressed model
//! baseline-N.ckpt     retrained full model + retrain-N.tsv epoch metrics
//! evaluate-N.tsv      test-split metrics
//! report-N.tsv        metrics table, with scatter-N.tsv and correlation-N.tsv
//! ```
//!
//! Artifacts are never overwritten; re-running a phase writes version `N + 1`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use embtab::checkpoint::{load_retrained, load_supernet, save_retrained, save_supernet};
use embtab::data::{read_dataset, split, write_dataset, EncodedDataset, FieldSchema, Split};
use embtab::io::write_atomic;
use embtab::metrics::sparsity;
use embtab::pipeline::{
    evaluate, load_raw, prepare_dataset, retrain, search_dimensions, train_supernet, EpochRecord,
    EvalMetrics, Retrained, Supernet, TrainSettings,
};
use embtab::prune::norm_frequency_report;
use embtab::{DimensionMask, EmbeddingMask, Rng, RunConfig};

const CONFIG_FILE: &str = "config.cfg";
const DATASET_FILE: &str = "dataset.oeds";
const METRICS_HEADER: &str = "phase\tstep\tauc\tlogloss\tsparsity\tkept_rows\tmean_dim\n";

#[derive(Parser, Debug)]
#[command(
    name = "embtab",
    version,
    about = "Embedding-table pruning and dimension search for CTR models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Shorthand for `--set seed=N`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run directory (default: latest `runs/<config hash>-<time>`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Load or generate the dataset, build the vocabulary and cache the encoding.
    Prepare,
    /// Train the supernet with row pruning and sampled dimensions.
    TrainSupernet,
    /// Evolutionary search for per-field dimensions.
    Search,
    /// Retrain the compressed model and the full-table baseline.
    Retrain,
    /// Score the retrained models on the test split.
    Evaluate,
    /// Print the metrics table and write plot data.
    Report,
    /// Write the synthetic dataset as delimited text.
    Synth,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<embtab::Error> for CliError {
    fn from(e: embtab::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn missing(what: &str, prerequisite: &str) -> CliError {
    CliError::Runtime(format!("requires {what} (run `{prerequisite}` first)"))
}

/// Runs the CLI on `argv` (program name first). Returns the process exit code:
/// 0 on success, 1 on usage errors, 2 on runtime errors.
pub fn run<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if code == 0 {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return code;
        }
    };
    match dispatch(&cli, out, err) {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            1
        }
        Err(CliError::Runtime(m)) => {
            let _ = writeln!(err, "error: {m}");
            2
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let requested = resolve_config(cli)?;
    let dir = match cli.command {
        Command::Prepare | Command::Synth => match &cli.out {
            Some(d) => d.clone(),
            None => new_run_dir(&requested)?,
        },
        _ => match &cli.out {
            Some(d) => d.clone(),
            None => latest_run_dir(&requested)?,
        },
    };
    let cfg = match cli.command {
        Command::Prepare | Command::Synth => requested,
        _ => {
            let stored = load_run_config(&dir)?;
            if flags_given(cli) && stored.hash() != requested.hash() {
                return Err(CliError::Usage(format!(
                    "config (hash {}) differs from the run's prepared config (hash {})",
                    requested.hash(),
                    stored.hash()
                )));
            }
            stored
        }
    };
    writeln!(err, "run directory: {}", dir.display())?;
    writeln!(err, "config {}:\n{}", cfg.hash(), cfg.canonical())?;
    let run = RunDir { path: dir };
    match cli.command {
        Command::Prepare => prepare(&run, &cfg, out),
        Command::Synth => synth(&run, &cfg, out, err),
        Command::TrainSupernet => phase_supernet(&run, &cfg, out),
        Command::Search => phase_search(&run, &cfg, out),
        Command::Retrain => phase_retrain(&run, &cfg, out),
        Command::Evaluate => phase_evaluate(&run, &cfg, out),
        Command::Report => phase_report(&run, &cfg, out, err),
    }
}

fn flags_given(cli: &Cli) -> bool {
    cli.config.is_some() || !cli.overrides.is_empty() || cli.seed.is_some()
}

fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let text = match &cli.config {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut overrides = cli.overrides.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    RunConfig::parse(&text, &overrides).map_err(|e| CliError::Usage(e.to_string()))
}

fn load_run_config(dir: &Path) -> CliResult<RunConfig> {
    let path = dir.join(CONFIG_FILE);
    if !path.exists() {
        return Err(missing("prepared dataset", "prepare"));
    }
    Ok(RunConfig::parse(&fs::read_to_string(path)?, &[])?)
}

fn new_run_dir(cfg: &RunConfig) -> CliResult<PathBuf> {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let base = format!("{}-{secs:012}", cfg.hash());
    let mut path = Path::new("runs").join(&base);
    let mut k = 1;
    while path.exists() {
        k += 1;
        path = Path::new("runs").join(format!("{base}.{k}"));
    }
    Ok(path)
}

fn latest_run_dir(cfg: &RunConfig) -> CliResult<PathBuf> {
    let prefix = format!("{}-", cfg.hash());
    let mut dirs: Vec<String> = match fs::read_dir("runs") {
        Ok(rd) => rd
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| n.starts_with(&prefix))
            .collect(),
        Err(_) => Vec::new(),
    };
    dirs.sort();
    match dirs.pop() {
        Some(d) => Ok(Path::new("runs").join(d)),
        None => Err(CliError::Runtime(format!(
            "no run directory for config hash {} (run `prepare` first, or pass --out)",
            cfg.hash()
        ))),
    }
}

/// Versioned artifact files inside a run directory.
struct RunDir {
    path: PathBuf,
}

impl RunDir {
    fn versions(&self, prefix: &str, ext: &str) -> Vec<u32> {
        let mut v: Vec<u32> = fs::read_dir(&self.path)
            .into_iter()
            .flatten()
            .filter_map(|e| e.ok()?.file_name().into_string().ok())
            .filter_map(|n| {
                n.strip_prefix(prefix)?
                    .strip_prefix('-')?
                    .strip_suffix(ext)?
                    .strip_suffix('.')?
                    .parse()
                    .ok()
            })
            .collect();
        v.sort_unstable();
        v
    }

    fn latest(&self, prefix: &str, ext: &str) -> Option<u32> {
        self.versions(prefix, ext).last().copied()
    }

    fn next(&self, prefix: &str, ext: &str) -> u32 {
        self.latest(prefix, ext).map_or(1, |v| v + 1)
    }

    fn file(&self, prefix: &str, version: u32, ext: &str) -> PathBuf {
        self.path.join(format!("{prefix}-{version}.{ext}"))
    }

    fn write(&self, prefix: &str, version: u32, ext: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.file(prefix, version, ext);
        write_atomic(&path, bytes)?;
        Ok(path)
    }
}

struct Prepared {
    schema: FieldSchema,
    split: Split,
}

fn load_prepared(run: &RunDir, cfg: &RunConfig) -> CliResult<Prepared> {
    let path = run.path.join(DATASET_FILE);
    if !path.exists() {
        return Err(missing("prepared dataset", "prepare"));
    }
    let (schema, full) = read_dataset(&path)?;
    let split = split(&full, cfg.split, cfg.seed)?;
    Ok(Prepared { schema, split })
}

fn prepare(run: &RunDir, cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    fs::create_dir_all(&run.path)?;
    let cfg_path = run.path.join(CONFIG_FILE);
    if cfg_path.exists() {
        let stored = RunConfig::parse(&fs::read_to_string(&cfg_path)?, &[])?;
        if stored.hash() != cfg.hash() {
            return Err(CliError::Runtime(format!(
                "{} already holds a run with config hash {}",
                run.path.display(),
                stored.hash()
            )));
        }
    }
    let (schema, ds) = prepare_dataset(cfg)?;
    let bytes = embtab::data::dataset_to_bytes(&schema, &ds);
    let data_path = run.path.join(DATASET_FILE);
    if data_path.exists() {
        if fs::read(&data_path)? != bytes {
            return Err(CliError::Runtime(format!(
                "{} exists with different contents",
                data_path.display()
            )));
        }
    } else {
        write_dataset(&data_path, &schema, &ds)?;
    }
    if !cfg_path.exists() {
        write_atomic(&cfg_path, cfg.canonical().as_bytes())?;
    }
    let s = split(&ds, cfg.split, cfg.seed)?;
    writeln!(out, "rows\t{}", ds.len())?;
    writeln!(
        out,
        "split\t{}\t{}\t{}",
        s.train.len(),
        s.val.len(),
        s.test.len()
    )?;
    writeln!(out, "fields\t{}", schema.n_fields())?;
    writeln!(out, "total_rows\t{}", schema.total_rows())?;
    writeln!(out, "field\tname\tkind\tcardinality")?;
    for (i, f) in schema.fields.iter().enumerate() {
        writeln!(out, "{i}\t{}\t{:?}\t{}", f.name, f.kind, f.cardinality())?;
    }
    Ok(())
}

fn synth(run: &RunDir, cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let mut cfg = cfg.clone();
    cfg.data_source = embtab::config::DataSource::Synth;
    let raw = load_raw(&cfg)?;
    fs::create_dir_all(&run.path)?;
    let v = run.next("synth", "csv");
    let path = run.write(
        "synth",
        v,
        "csv",
        raw.to_delimited(cfg.data_delimiter).as_bytes(),
    )?;
    writeln!(out, "rows\t{}", raw.rows.len())?;
    writeln!(err, "wrote {}", path.display())?;
    Ok(())
}

fn metrics_line(
    phase: &str,
    step: &str,
    auc: f64,
    logloss: Option<f64>,
    sparsity: f64,
    kept: usize,
    mean_dim: f64,
) -> String {
    let ll = logloss.map_or_else(|| "-".to_string(), |v| v.to_string());
    format!("{phase}\t{step}\t{auc}\t{ll}\t{sparsity}\t{kept}\t{mean_dim}\n")
}

fn history_tsv(phase: &str, history: &[EpochRecord], mean_dim: f64) -> String {
    history
        .iter()
        .map(|h| {
            metrics_line(
                phase,
                &h.epoch.to_string(),
                h.val_auc,
                Some(h.val_logloss),
                h.sparsity,
                h.kept_rows,
                mean_dim,
            )
        })
        .collect()
}

fn load_latest_supernet(run: &RunDir, p: &Prepared) -> CliResult<(u32, Supernet<f64>)> {
    let v = run
        .latest("supernet", "ckpt")
        .ok_or_else(|| missing("supernet checkpoint", "train-supernet"))?;
    let (_, net) = load_supernet::<f64>(&run.file("supernet", v, "ckpt"), &p.schema)?;
    Ok((v, net))
}

fn phase_supernet(run: &RunDir, cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let p = load_prepared(run, cfg)?;
    let settings = TrainSettings::from(cfg);
    let mut rng = Rng::derive(cfg.seed, "supernet");
    let net = train_supernet::<f64>(&p.schema, &p.split.train, &p.split.val, &settings, &mut rng)?;
    let v = run.next("supernet", "ckpt");
    save_supernet(
        &run.file("supernet", v, "ckpt"),
        &cfg.canonical(),
        &p.schema,
        &net,
    )?;
    let tsv = format!(
        "{METRICS_HEADER}{}",
        history_tsv("supernet", &net.history, cfg.dim as f64)
    );
    run.write("supernet", v, "tsv", tsv.as_bytes())?;

    writeln!(
        out,
        "epoch\ttrain_loss\tval_auc\tval_logloss\tkept_rows\tsparsity"
    )?;
    for h in &net.history {
        writeln!(
            out,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{:.4}",
            h.epoch, h.train_loss, h.val_auc, h.val_logloss, h.kept_rows, h.sparsity
        )?;
    }
    writeln!(
        out,
        "best epoch {} (val auc {:.6}), kept {} of {} rows",
        net.best_epoch,
        net.val_auc(),
        net.m_e.kept_count(),
        net.m_e.len()
    )?;
    Ok(())
}

fn phase_search(run: &RunDir, cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let p = load_prepared(run, cfg)?;
    let (sv, net) = load_latest_supernet(run, &p)?;
    let mut rng = Rng::derive(cfg.seed, "search");
    let outcome = search_dimensions(
        &net,
        &p.schema,
        &p.split.val,
        &cfg.search,
        cfg.eval_batch,
        &mut rng,
    )?;
    let v = run.next("search", "mask");
    run.write("search", v, "tsv", outcome.log_tsv().as_bytes())?;
    let mask_text = format!("# supernet-{sv}\n{}\n", outcome.best.mask);
    run.write("search", v, "mask", mask_text.as_bytes())?;

    writeln!(out, "iteration\tbest_fitness")?;
    for (i, f) in outcome.best_history.iter().enumerate() {
        writeln!(out, "{i}\t{f:.6}")?;
    }
    let s = sparsity(&net.m_e, &outcome.best.mask, &p.schema, cfg.dim)?;
    writeln!(
        out,
        "best mask {} (val auc {:.6}, sparsity {:.4})",
        outcome.best.mask, outcome.best.fitness, s
    )?;
    Ok(())
}

/// The latest search result and the supernet version it was run against.
fn load_search(run: &RunDir, cfg: &RunConfig) -> CliResult<(u32, DimensionMask)> {
    let v = run
        .latest("search", "mask")
        .ok_or_else(|| missing("search result", "search"))?;
    let text = fs::read_to_string(run.file("search", v, "mask"))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let sv = header
        .strip_prefix("# supernet-")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| CliError::Runtime(format!("search-{v}.mask: malformed header")))?;
    let mask = DimensionMask::parse(lines.next().unwrap_or_default(), cfg.dim)?;
    Ok((sv, mask))
}

fn phase_retrain(run: &RunDir, cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let p = load_prepared(run, cfg)?;
    if run.latest("supernet", "ckpt").is_none() {
        return Err(missing("supernet checkpoint", "train-supernet"));
    }
    let (sv, m_d) = load_search(run, cfg)?;
    let (_, net) = load_supernet::<f64>(&run.file("supernet", sv, "ckpt"), &p.schema)?;
    m_d.check_schema(&p.schema)?;
    let settings = TrainSettings::from(cfg);
    let inherited = evaluate(
        &net.model,
        &net.m_e,
        &m_d,
        &p.schema,
        &p.split.val,
        cfg.eval_batch,
    )?;

    let final_model = retrain::<f64>(
        &p.schema,
        &p.split.train,
        &p.split.val,
        &net.m_e,
        &m_d,
        &settings,
        &mut Rng::derive(cfg.seed, "retrain"),
    )?;
    let identity_e = EmbeddingMask::ones(p.schema.total_rows());
    let identity_d = DimensionMask::full(p.schema.n_fields(), cfg.dim);
    let baseline = retrain::<f64>(
        &p.schema,
        &p.split.train,
        &p.split.val,
        &identity_e,
        &identity_d,
        &settings,
        &mut Rng::derive(cfg.seed, "retrain"),
    )?;

    let v = run.next("final", "ckpt").max(run.next("baseline", "ckpt"));
    save_retrained(
        &run.file("final", v, "ckpt"),
        &cfg.canonical(),
        &p.schema,
        &final_model,
    )?;
    save_retrained(
        &run.file("baseline", v, "ckpt"),
        &cfg.canonical(),
        &p.schema,
        &baseline,
    )?;
    let s = sparsity(&net.m_e, &m_d, &p.schema, cfg.dim)?;
    let mut tsv = String::from(METRICS_HEADER);
    tsv.push_str(&metrics_line(
        "inherited",
        "-",
        inherited.auc,
        Some(inherited.logloss),
        s,
        net.m_e.kept_count(),
        m_d.mean_dim(),
    ));
    tsv.push_str(&history_tsv(
        "compressed",
        &final_model.history,
        m_d.mean_dim(),
    ));
    tsv.push_str(&history_tsv("baseline", &baseline.history, cfg.dim as f64));
    run.write("retrain", v, "tsv", tsv.as_bytes())?;

    writeln!(out, "model\tbest_epoch\tval_auc\tsparsity")?;
    writeln!(out, "inherited\t-\t{:.6}\t{:.4}", inherited.auc, s)?;
    writeln!(
        out,
        "compressed\t{}\t{:.6}\t{:.4}",
        final_model.best_epoch,
        final_model.val_auc(),
        s
    )?;
    writeln!(
        out,
        "baseline\t{}\t{:.6}\t{:.4}",
        baseline.best_epoch,
        baseline.val_auc(),
        0.0
    )?;
    Ok(())
}

fn load_retrained_pair(
    run: &RunDir,
    p: &Prepared,
) -> CliResult<Option<(Retrained<f64>, Retrained<f64>)>> {
    let Some(v) = run.latest("final", "ckpt") else {
        return Ok(None);
    };
    let (_, f) = load_retrained::<f64>(&run.file("final", v, "ckpt"), &p.schema)?;
    let (_, b) = load_retrained::<f64>(&run.file("baseline", v, "ckpt"), &p.schema)?;
    Ok(Some((f, b)))
}

fn eval_retrained(
    r: &Retrained<f64>,
    p: &Prepared,
    ds: &EncodedDataset,
    cfg: &RunConfig,
) -> CliResult<EvalMetrics> {
    Ok(evaluate(
        &r.model,
        &r.m_e,
        &r.m_d,
        &p.schema,
        ds,
        cfg.eval_batch,
    )?)
}

fn phase_evaluate(run: &RunDir, cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let p = load_prepared(run, cfg)?;
    let (f, b) =
        load_retrained_pair(run, &p)?.ok_or_else(|| missing("retrained model", "retrain"))?;
    let mut tsv = String::from(METRICS_HEADER);
    writeln!(out, "model\ttest_auc\ttest_logloss\tsparsity")?;
    for (name, r) in [("baseline", &b), ("compressed", &f)] {
        let m = eval_retrained(r, &p, &p.split.test, cfg)?;
        let s = sparsity(&r.m_e, &r.m_d, &p.schema, cfg.dim)?;
        tsv.push_str(&metrics_line(
            name,
            "test",
            m.auc,
            Some(m.logloss),
            s,
            r.m_e.kept_count(),
            r.m_d.mean_dim(),
        ));
        writeln!(out, "{name}\t{:.6}\t{:.6}\t{:.4}", m.auc, m.logloss, s)?;
    }
    let v = run.next("evaluate", "tsv");
    run.write("evaluate", v, "tsv", tsv.as_bytes())?;
    Ok(())
}

struct ReportRow {
    model: &'static str,
    split: &'static str,
    values: Option<(EvalMetrics, f64, usize, f64)>,
}

fn phase_report(
    run: &RunDir,
    cfg: &RunConfig,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult<()> {
    let has_any = ["supernet", "final"]
        .iter()
        .any(|k| run.latest(k, "ckpt").is_some());
    if !run.path.join(DATASET_FILE).exists() || !has_any {
        return Err(CliError::Runtime(format!(
            "nothing to report in {}: requires supernet checkpoint (run `train-supernet` first)",
            run.path.display()
        )));
    }
    let p = load_prepared(run, cfg)?;
    let supernet = match run.latest("supernet", "ckpt") {
        Some(_) => Some(load_latest_supernet(run, &p)?.1),
        None => None,
    };
    let searched = match run.latest("search", "mask") {
        Some(_) => {
            let (sv, m_d) = load_search(run, cfg)?;
            Some((
                load_supernet::<f64>(&run.file("supernet", sv, "ckpt"), &p.schema)?.1,
                m_d,
            ))
        }
        None => None,
    };
    let retrained = load_retrained_pair(run, &p)?;
    let full = DimensionMask::full(p.schema.n_fields(), cfg.dim);

    let mut rows = Vec::new();
    for (split_name, ds) in [("val", &p.split.val), ("test", &p.split.test)] {
        let score = |model: &embtab::CtrModel64,
                     m_e: &EmbeddingMask,
                     m_d: &DimensionMask|
         -> CliResult<_> {
            let m = evaluate(model, m_e, m_d, &p.schema, ds, cfg.eval_batch)?;
            Ok((
                m,
                sparsity(m_e, m_d, &p.schema, cfg.dim)?,
                m_e.kept_count(),
                m_d.mean_dim(),
            ))
        };
        rows.push(ReportRow {
            model: "baseline",
            split: split_name,
            values: retrained
                .as_ref()
                .map(|(_, b)| score(&b.model, &b.m_e, &b.m_d))
                .transpose()?,
        });
        rows.push(ReportRow {
            model: "supernet",
            split: split_name,
            values: supernet
                .as_ref()
                .map(|n| score(&n.model, &n.m_e, &full))
                .transpose()?,
        });
        rows.push(ReportRow {
            model: "search",
            split: split_name,
            values: searched
                .as_ref()
                .map(|(n, m_d)| score(&n.model, &n.m_e, m_d))
                .transpose()?,
        });
        rows.push(ReportRow {
            model: "compressed",
            split: split_name,
            values: retrained
                .as_ref()
                .map(|(f, _)| score(&f.model, &f.m_e, &f.m_d))
                .transpose()?,
        });
    }
    rows.sort_by_key(|r| {
        ["baseline", "supernet", "search", "compressed"]
            .iter()
            .position(|m| *m == r.model)
    });

    let mut tsv = String::from("model\tsplit\tauc\tlogloss\tsparsity\tkept_rows\tmean_dim\n");
    let mut table = format!(
        "{:<10} {:<5} {:>9} {:>9} {:>9} {:>9} {:>8}\n",
        "model", "split", "auc", "logloss", "sparsity", "kept_rows", "mean_dim"
    );
    for r in &rows {
        match &r.values {
            Some((m, s, kept, md)) => {
                writeln!(
                    tsv,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    r.model, r.split, m.auc, m.logloss, s, kept, md
                )
                .unwrap();
                writeln!(
                    table,
                    "{:<10} {:<5} {:>9.6} {:>9.6} {:>9.4} {:>9} {:>8.3}",
                    r.model, r.split, m.auc, m.logloss, s, kept, md
                )
                .unwrap();
            }
            None => {
                writeln!(
                    tsv,
                    "{}\t{}\tabsent\tabsent\tabsent\tabsent\tabsent",
                    r.model, r.split
                )
                .unwrap();
                writeln!(table, "{:<10} {:<5} {:>9}", r.model, r.split, "absent").unwrap();
            }
        }
    }

    // Norm/frequency data come from the baseline table when it exists.
    let table_for_scatter = match (&retrained, &supernet) {
        (Some((_, b)), _) => Some(("baseline", &b.model.embedding.weights)),
        (None, Some(n)) => Some(("supernet", &n.model.embedding.weights)),
        _ => None,
    };
    let v = run.next("report", "tsv");
    if let Some((source, weights)) = table_for_scatter {
        let freqs = p.split.train.frequencies(p.schema.total_rows());
        let nf = norm_frequency_report(weights, &freqs, &p.schema)?;
        run.write("scatter", v, "tsv", nf.scatter_tsv().as_bytes())?;
        let mut corr = String::from("field\tname\tcardinality\tpoints\tcorrelation\tdegenerate\n");
        writeln!(
            table,
            "\nnorm/frequency correlation ({source} table, train frequencies)"
        )
        .unwrap();
        for c in &nf.fields {
            let f = &p.schema.fields[c.field];
            writeln!(
                corr,
                "{}\t{}\t{}\t{}\t{}\t{}",
                c.field,
                f.name,
                f.cardinality(),
                c.n_points,
                c.correlation,
                c.degenerate
            )
            .unwrap();
            writeln!(
                table,
                "{:<4} {:<10} {:>8.4}{}",
                c.field,
                f.name,
                c.correlation,
                if c.degenerate { " (degenerate)" } else { "" }
            )
            .unwrap();
        }
        run.write("correlation", v, "tsv", corr.as_bytes())?;
    }
    let path = run.write("report", v, "tsv", tsv.as_bytes())?;
    out.write_all(table.as_bytes())?;
    writeln!(err, "wrote {}", path.display())?;
    Ok(())
}
