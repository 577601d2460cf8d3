//! Run configuration as a flat `key = value` text file.
//!
//! Lines starting with `#` are comments. Unknown keys are rejected. The
//! canonical form lists every key in sorted order with normalized values and
//! is what gets hashed and embedded in checkpoints.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::data::{LogBase, SynthSpec};
use crate::error::{Error, Result};
use crate::search::SearchParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Synth,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,

    pub data_source: DataSource,
    pub data_path: String,
    pub data_delimiter: char,
    pub numeric_fields: Vec<String>,
    pub min_count: usize,
    pub split: (f64, f64, f64),
    pub log_base: LogBase,

    pub synth_cardinalities: Vec<usize>,
    pub synth_informative: usize,
    pub synth_rows: usize,
    pub synth_noise: f64,
    pub synth_weight_scale: f64,
    pub synth_bias: f64,
    pub synth_zipf: f64,

    pub dim: usize,
    pub mlp: Vec<usize>,
    pub batchnorm: bool,

    pub lr: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,

    pub lr_t: f64,
    pub alpha: f64,
    pub t_init: f64,

    pub search: SearchParams,
    pub eval_batch: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            data_source: DataSource::Synth,
            data_path: String::new(),
            data_delimiter: ',',
            numeric_fields: Vec::new(),
            min_count: 2,
            split: (0.8, 0.1, 0.1),
            log_base: LogBase::Natural,
            synth_cardinalities: vec![100, 60, 50, 20, 100, 60, 50, 20],
            synth_informative: 4,
            synth_rows: 50_000,
            synth_noise: 0.5,
            synth_weight_scale: 0.8,
            synth_bias: -0.5,
            synth_zipf: 1.1,
            dim: 8,
            mlp: vec![64, 32, 16],
            batchnorm: true,
            lr: 1e-3,
            l2: 1e-6,
            batch_size: 256,
            max_epochs: 30,
            patience: 2,
            lr_t: 1e-2,
            alpha: 1e-4,
            t_init: 0.0,
            search: SearchParams::default(),
            eval_batch: 4096,
        }
    }
}

const KEYS: &[&str] = &[
    "seed",
    "data.source",
    "data.path",
    "data.delimiter",
    "data.numeric_fields",
    "data.min_count",
    "data.split",
    "discretize.log_base",
    "synth.cardinalities",
    "synth.n_informative",
    "synth.n_rows",
    "synth.noise_level",
    "synth.weight_scale",
    "synth.bias",
    "synth.zipf_exponent",
    "model.dim",
    "model.mlp",
    "model.batchnorm",
    "train.lr",
    "train.l2",
    "train.batch_size",
    "train.max_epochs",
    "train.patience",
    "prune.lr_t",
    "prune.alpha",
    "prune.t_init",
    "search.n_mutation",
    "search.n_crossover",
    "search.iterations",
    "search.prob",
    "search.topk",
    "search.eval_batch",
];

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<V: FromStr>(key: &str, value: &str) -> Result<Vec<V>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join<V: ToString>(xs: &[V]) -> String {
    xs.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Parses config text and applies `overrides` (`key=value`) on top.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected `key = value`, got {line:?}"),
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "data.source" => {
                self.data_source = match value {
                    "synth" => DataSource::Synth,
                    "csv" => DataSource::Csv,
                    _ => {
                        return Err(Error::Config(format!(
                            "data.source must be synth or csv, got {value:?}"
                        )))
                    }
                }
            }
            "data.path" => self.data_path = value.to_string(),
            "data.delimiter" => {
                self.data_delimiter = match value {
                    "tab" | "\\t" => '\t',
                    v if v.chars().count() == 1 => v.chars().next().unwrap(),
                    _ => {
                        return Err(Error::Config(format!(
                            "data.delimiter must be one character or `tab`, got {value:?}"
                        )))
                    }
                }
            }
            "data.numeric_fields" => {
                self.numeric_fields = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            "data.min_count" => self.min_count = parse(key, value)?,
            "data.split" => {
                let v: Vec<f64> = parse_list(key, value)?;
                if v.len() != 3 {
                    return Err(Error::Config("data.split needs three ratios".into()));
                }
                self.split = (v[0], v[1], v[2]);
            }
            "discretize.log_base" => self.log_base = value.parse()?,
            "synth.cardinalities" => self.synth_cardinalities = parse_list(key, value)?,
            "synth.n_informative" => self.synth_informative = parse(key, value)?,
            "synth.n_rows" => self.synth_rows = parse(key, value)?,
            "synth.noise_level" => self.synth_noise = parse(key, value)?,
            "synth.weight_scale" => self.synth_weight_scale = parse(key, value)?,
            "synth.bias" => self.synth_bias = parse(key, value)?,
            "synth.zipf_exponent" => self.synth_zipf = parse(key, value)?,
            "model.dim" => self.dim = parse(key, value)?,
            "model.mlp" => self.mlp = parse_list(key, value)?,
            "model.batchnorm" => self.batchnorm = parse(key, value)?,
            "train.lr" => self.lr = parse(key, value)?,
            "train.l2" => self.l2 = parse(key, value)?,
            "train.batch_size" => self.batch_size = parse(key, value)?,
            "train.max_epochs" => self.max_epochs = parse(key, value)?,
            "train.patience" => self.patience = parse(key, value)?,
            "prune.lr_t" => self.lr_t = parse(key, value)?,
            "prune.alpha" => self.alpha = parse(key, value)?,
            "prune.t_init" => self.t_init = parse(key, value)?,
            "search.n_mutation" => self.search.n_mutation = parse(key, value)?,
            "search.n_crossover" => self.search.n_crossover = parse(key, value)?,
            "search.iterations" => self.search.iterations = parse(key, value)?,
            "search.prob" => self.search.prob = parse(key, value)?,
            "search.topk" => self.search.topk = parse(key, value)?,
            "search.eval_batch" => self.eval_batch = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.to_string()))
            }
        };
        check(self.dim >= 1, "model.dim must be >= 1")?;
        check(
            self.mlp.iter().all(|&w| w >= 1),
            "model.mlp widths must be >= 1",
        )?;
        check(
            self.lr > 0.0 && self.lr.is_finite(),
            "train.lr must be positive",
        )?;
        check(
            self.l2 >= 0.0 && self.l2.is_finite(),
            "train.l2 must be >= 0",
        )?;
        check(self.batch_size >= 2, "train.batch_size must be >= 2")?;
        check(self.max_epochs >= 1, "train.max_epochs must be >= 1")?;
        check(self.patience >= 1, "train.patience must be >= 1")?;
        check(
            self.lr_t >= 0.0 && self.lr_t.is_finite(),
            "prune.lr_t must be >= 0",
        )?;
        check(
            self.alpha >= 0.0 && self.alpha.is_finite(),
            "prune.alpha must be >= 0",
        )?;
        check(self.t_init.is_finite(), "prune.t_init must be finite")?;
        check(self.min_count >= 1, "data.min_count must be >= 1")?;
        let (a, b, c) = self.split;
        check(
            (a + b + c - 1.0).abs() < 1e-9 && a >= 0.0 && b >= 0.0 && c >= 0.0,
            "data.split must be non-negative and sum to 1",
        )?;
        check(
            self.search.n_mutation + self.search.n_crossover >= 1,
            "search population must be non-empty",
        )?;
        check(
            (0.0..=1.0).contains(&self.search.prob),
            "search.prob must be in [0, 1]",
        )?;
        check(self.search.topk >= 1, "search.topk must be >= 1")?;
        check(self.eval_batch >= 1, "search.eval_batch must be >= 1")?;
        check(
            !self.synth_cardinalities.is_empty(),
            "synth.cardinalities must be non-empty",
        )?;
        check(
            self.synth_informative <= self.synth_cardinalities.len(),
            "synth.n_informative exceeds field count",
        )?;
        if self.data_source == DataSource::Csv {
            check(
                !self.data_path.is_empty(),
                "data.path is required when data.source = csv",
            )?;
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        match key {
            "seed" => self.seed.to_string(),
            "data.source" => match self.data_source {
                DataSource::Synth => "synth".into(),
                DataSource::Csv => "csv".into(),
            },
            "data.path" => self.data_path.clone(),
            "data.delimiter" => match self.data_delimiter {
                '\t' => "tab".into(),
                c => c.to_string(),
            },
            "data.numeric_fields" => self.numeric_fields.join(","),
            "data.min_count" => self.min_count.to_string(),
            "data.split" => join(&[self.split.0, self.split.1, self.split.2]),
            "discretize.log_base" => self.log_base.as_str().into(),
            "synth.cardinalities" => join(&self.synth_cardinalities),
            "synth.n_informative" => self.synth_informative.to_string(),
            "synth.n_rows" => self.synth_rows.to_string(),
            "synth.noise_level" => self.synth_noise.to_string(),
            "synth.weight_scale" => self.synth_weight_scale.to_string(),
            "synth.bias" => self.synth_bias.to_string(),
            "synth.zipf_exponent" => self.synth_zipf.to_string(),
            "model.dim" => self.dim.to_string(),
            "model.mlp" => join(&self.mlp),
            "model.batchnorm" => self.batchnorm.to_string(),
            "train.lr" => self.lr.to_string(),
            "train.l2" => self.l2.to_string(),
            "train.batch_size" => self.batch_size.to_string(),
            "train.max_epochs" => self.max_epochs.to_string(),
            "train.patience" => self.patience.to_string(),
            "prune.lr_t" => self.lr_t.to_string(),
            "prune.alpha" => self.alpha.to_string(),
            "prune.t_init" => self.t_init.to_string(),
            "search.n_mutation" => self.search.n_mutation.to_string(),
            "search.n_crossover" => self.search.n_crossover.to_string(),
            "search.iterations" => self.search.iterations.to_string(),
            "search.prob" => self.search.prob.to_string(),
            "search.topk" => self.search.topk.to_string(),
            "search.eval_batch" => self.eval_batch.to_string(),
            _ => unreachable!("key list and getter agree"),
        }
    }

    /// Every key in sorted order, one `key = value` per line.
    pub fn canonical(&self) -> String {
        let sorted: BTreeMap<&str, String> = KEYS.iter().map(|&k| (k, self.get(k))).collect();
        let mut out = String::new();
        for (k, v) in sorted {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            n_fields: self.synth_cardinalities.len(),
            cardinalities: self.synth_cardinalities.clone(),
            n_informative: self.synth_informative,
            n_rows: self.synth_rows,
            noise_level: self.synth_noise,
            weight_scale: self.synth_weight_scale,
            bias: self.synth_bias,
            zipf_exponent: self.synth_zipf,
        }
    }
}
