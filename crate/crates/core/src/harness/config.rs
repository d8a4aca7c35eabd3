//! Experiment configuration: a flat, diff-friendly text format of dotted
//! `key = value` lines.
//!
//! The same key set drives config files and CLI overrides, so a flag named
//! after a key replaces the file's value one-to-one. `emit` writes keys in a
//! canonical order and `parse(emit(c)) == c` holds for every valid config.

use crate::error::{Error, Result};
use crate::fedcore::{ModelKind, ModelSpec, TrainConfig};
use crate::partition::{PartitionSpec, SkewKind};
use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DatasetKind {
    Synthetic,
    Cifar10,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartitionKind {
    Quantity,
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelStyle {
    Softmax,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    FedEntOpt,
    Random,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::FedEntOpt => "fedentopt",
            Strategy::Random => "random",
        }
    }
}

/// Cohort size, either absolute or as a participation rate over `K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Participation {
    Count(usize),
    Rate(f64),
}

/// Every key the config file and the CLI understand, in canonical order.
pub const CONFIG_KEYS: &[&str] = &[
    "dataset.kind",
    "dataset.path",
    "dataset.synthetic.classes",
    "dataset.synthetic.dims",
    "dataset.synthetic.per_class",
    "dataset.synthetic.separation",
    "partition.kind",
    "partition.j",
    "partition.beta",
    "clients.k",
    "select.strategy",
    "select.m",
    "select.rate",
    "select.q_fraction",
    "dp.enabled",
    "dp.epsilon",
    "train.epochs",
    "train.batch",
    "train.lr",
    "train.momentum",
    "train.weight_decay",
    "train.lr_decay",
    "train.rounds",
    "model.kind",
    "model.hidden",
    "run.seeds",
    "run.outdir",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset_kind: DatasetKind,
    pub dataset_path: Option<String>,
    pub synthetic_classes: usize,
    pub synthetic_dims: usize,
    pub synthetic_per_class: usize,
    pub synthetic_separation: f64,
    pub partition_kind: PartitionKind,
    pub partition_j: usize,
    pub partition_beta: f64,
    pub num_clients: usize,
    pub strategy: Strategy,
    pub participation: Participation,
    pub q_fraction: f64,
    pub dp_enabled: bool,
    pub dp_epsilon: f64,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_decay: f64,
    pub rounds: usize,
    pub model_style: ModelStyle,
    pub model_hidden: usize,
    pub seeds: Vec<u64>,
    pub outdir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset_kind: DatasetKind::Synthetic,
            dataset_path: None,
            synthetic_classes: 10,
            synthetic_dims: 20,
            synthetic_per_class: 200,
            synthetic_separation: 4.0,
            partition_kind: PartitionKind::Quantity,
            partition_j: 2,
            partition_beta: 0.1,
            num_clients: 100,
            strategy: Strategy::FedEntOpt,
            participation: Participation::Rate(0.1),
            q_fraction: 0.7,
            dp_enabled: false,
            dp_epsilon: 0.5,
            epochs: 5,
            batch: 64,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            lr_decay: 0.98,
            rounds: 100,
            model_style: ModelStyle::Mlp,
            model_hidden: 32,
            seeds: vec![1, 2, 3],
            outdir: PathBuf::from("runs/exp"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("{key}: cannot parse {value:?}")))
}

impl ExperimentConfig {
    /// Parse a config document: `key = value` lines, `#` comments, blank
    /// lines ignored. Unset keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!(
                    "line {}: expected `key = value`, got {raw:?}",
                    line_no + 1
                ))
            })?;
            config.apply_key(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    /// Set one dotted key from its text value. Shared by the file parser and
    /// the CLI flag overrides.
    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset.kind" => {
                self.dataset_kind = match value {
                    "synthetic" => DatasetKind::Synthetic,
                    "cifar10" => DatasetKind::Cifar10,
                    other => {
                        return Err(Error::Format(format!(
                            "dataset.kind: unknown kind {other:?}"
                        )))
                    }
                }
            }
            "dataset.path" => self.dataset_path = Some(value.to_string()),
            "dataset.synthetic.classes" => self.synthetic_classes = parse_num(key, value)?,
            "dataset.synthetic.dims" => self.synthetic_dims = parse_num(key, value)?,
            "dataset.synthetic.per_class" => self.synthetic_per_class = parse_num(key, value)?,
            "dataset.synthetic.separation" => self.synthetic_separation = parse_num(key, value)?,
            "partition.kind" => {
                self.partition_kind = match value {
                    "quantity" => PartitionKind::Quantity,
                    "dirichlet" => PartitionKind::Dirichlet,
                    other => {
                        return Err(Error::Format(format!(
                            "partition.kind: unknown kind {other:?}"
                        )))
                    }
                }
            }
            "partition.j" => self.partition_j = parse_num(key, value)?,
            "partition.beta" => self.partition_beta = parse_num(key, value)?,
            "clients.k" => self.num_clients = parse_num(key, value)?,
            "select.strategy" => {
                self.strategy = match value {
                    "fedentopt" => Strategy::FedEntOpt,
                    "random" => Strategy::Random,
                    other => {
                        return Err(Error::Format(format!(
                            "select.strategy: unknown strategy {other:?}"
                        )))
                    }
                }
            }
            "select.m" => self.participation = Participation::Count(parse_num(key, value)?),
            "select.rate" => self.participation = Participation::Rate(parse_num(key, value)?),
            "select.q_fraction" => self.q_fraction = parse_num(key, value)?,
            "dp.enabled" => {
                self.dp_enabled = match value {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(Error::Format(format!(
                            "dp.enabled: expected true/false, got {other:?}"
                        )))
                    }
                }
            }
            "dp.epsilon" => self.dp_epsilon = parse_num(key, value)?,
            "train.epochs" => self.epochs = parse_num(key, value)?,
            "train.batch" => self.batch = parse_num(key, value)?,
            "train.lr" => self.lr = parse_num(key, value)?,
            "train.momentum" => self.momentum = parse_num(key, value)?,
            "train.weight_decay" => self.weight_decay = parse_num(key, value)?,
            "train.lr_decay" => self.lr_decay = parse_num(key, value)?,
            "train.rounds" => self.rounds = parse_num(key, value)?,
            "model.kind" => {
                self.model_style = match value {
                    "softmax" => ModelStyle::Softmax,
                    "mlp" => ModelStyle::Mlp,
                    other => {
                        return Err(Error::Format(format!("model.kind: unknown kind {other:?}")))
                    }
                }
            }
            "model.hidden" => self.model_hidden = parse_num(key, value)?,
            "run.seeds" => {
                let seeds: Result<Vec<u64>> = value.split(',').map(|s| parse_num(key, s)).collect();
                let seeds = seeds?;
                if seeds.is_empty() {
                    return Err(Error::Format("run.seeds: need at least one seed".into()));
                }
                self.seeds = seeds;
            }
            "run.outdir" => self.outdir = PathBuf::from(value),
            other => return Err(Error::Format(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Emit the canonical text form (round-trips through [`parse`]).
    pub fn emit(&self) -> String {
        let mut out = String::new();
        let mut line = |key: &str, value: String| {
            let _ = writeln!(out, "{key} = {value}");
        };
        line(
            "dataset.kind",
            match self.dataset_kind {
                DatasetKind::Synthetic => "synthetic".into(),
                DatasetKind::Cifar10 => "cifar10".into(),
            },
        );
        if let Some(path) = &self.dataset_path {
            line("dataset.path", path.clone());
        }
        line(
            "dataset.synthetic.classes",
            self.synthetic_classes.to_string(),
        );
        line("dataset.synthetic.dims", self.synthetic_dims.to_string());
        line(
            "dataset.synthetic.per_class",
            self.synthetic_per_class.to_string(),
        );
        line(
            "dataset.synthetic.separation",
            self.synthetic_separation.to_string(),
        );
        line(
            "partition.kind",
            match self.partition_kind {
                PartitionKind::Quantity => "quantity".into(),
                PartitionKind::Dirichlet => "dirichlet".into(),
            },
        );
        line("partition.j", self.partition_j.to_string());
        line("partition.beta", self.partition_beta.to_string());
        line("clients.k", self.num_clients.to_string());
        line("select.strategy", self.strategy.name().into());
        match self.participation {
            Participation::Count(m) => line("select.m", m.to_string()),
            Participation::Rate(r) => line("select.rate", r.to_string()),
        }
        line("select.q_fraction", self.q_fraction.to_string());
        line("dp.enabled", self.dp_enabled.to_string());
        line("dp.epsilon", self.dp_epsilon.to_string());
        line("train.epochs", self.epochs.to_string());
        line("train.batch", self.batch.to_string());
        line("train.lr", self.lr.to_string());
        line("train.momentum", self.momentum.to_string());
        line("train.weight_decay", self.weight_decay.to_string());
        line("train.lr_decay", self.lr_decay.to_string());
        line("train.rounds", self.rounds.to_string());
        line(
            "model.kind",
            match self.model_style {
                ModelStyle::Softmax => "softmax".into(),
                ModelStyle::Mlp => "mlp".into(),
            },
        );
        line("model.hidden", self.model_hidden.to_string());
        line(
            "run.seeds",
            self.seeds
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        line("run.outdir", self.outdir.display().to_string());
        out
    }

    /// Cohort size `M`: a rate resolves to `max(1, round_half_up(r * K))`.
    pub fn cohort_size(&self) -> Result<usize> {
        match self.participation {
            Participation::Count(m) => {
                if m == 0 {
                    return Err(Error::Domain("select.m must be at least 1".into()));
                }
                Ok(m)
            }
            Participation::Rate(rate) => {
                if !(rate > 0.0 && rate <= 1.0) {
                    return Err(Error::Domain(format!(
                        "select.rate must be in (0, 1], got {rate}"
                    )));
                }
                Ok(((rate * self.num_clients as f64 + 0.5).floor() as usize).max(1))
            }
        }
    }

    /// Buffer capacity `Q = floor(q_fraction * K)`.
    pub fn buffer_capacity(&self) -> Result<usize> {
        if !(0.0..=1.0).contains(&self.q_fraction) {
            return Err(Error::Domain(format!(
                "select.q_fraction must be in [0, 1], got {}",
                self.q_fraction
            )));
        }
        Ok((self.q_fraction * self.num_clients as f64).floor() as usize)
    }

    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        Ok(TrainConfig {
            local_epochs: self.epochs,
            batch_size: self.batch,
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            lr_decay_per_round: self.lr_decay,
            rounds: self.rounds,
            cohort_size: self.cohort_size()?,
            seed,
        })
    }

    pub fn partition_spec(&self, seed: u64) -> PartitionSpec {
        let kind = match self.partition_kind {
            PartitionKind::Quantity => SkewKind::Quantity {
                labels_per_client: self.partition_j,
            },
            PartitionKind::Dirichlet => SkewKind::Dirichlet {
                beta: self.partition_beta,
            },
        };
        PartitionSpec {
            kind,
            num_clients: self.num_clients,
            seed,
        }
    }

    pub fn model_spec(&self, input_dim: usize, num_classes: usize) -> ModelSpec {
        let kind = match self.model_style {
            ModelStyle::Softmax => ModelKind::SoftmaxRegression,
            ModelStyle::Mlp => ModelKind::Mlp {
                hidden: self.model_hidden,
            },
        };
        ModelSpec {
            kind,
            input_dim,
            num_classes,
        }
    }

    /// Full cross-field validation, run before any experiment starts.
    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::Domain("clients.k must be at least 1".into()));
        }
        if self.dataset_kind == DatasetKind::Cifar10 && self.dataset_path.is_none() {
            return Err(Error::Domain(
                "dataset.kind = cifar10 requires dataset.path".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::Domain("run.seeds must not be empty".into()));
        }
        let m = self.cohort_size()?;
        if m > self.num_clients {
            return Err(Error::Domain(format!(
                "cohort size {m} exceeds clients.k = {}",
                self.num_clients
            )));
        }
        let q = self.buffer_capacity()?;
        if self.strategy == Strategy::FedEntOpt && q > self.num_clients - m {
            return Err(Error::Domain(format!(
                "buffer capacity {q} exceeds K - M = {}; selection would starve",
                self.num_clients - m
            )));
        }
        if self.dp_enabled && (self.dp_epsilon.is_nan() || self.dp_epsilon <= 0.0) {
            return Err(Error::Domain(format!(
                "dp.epsilon must be > 0, got {}",
                self.dp_epsilon
            )));
        }
        if self.model_style == ModelStyle::Mlp && self.model_hidden == 0 {
            return Err(Error::Domain("model.hidden must be at least 1".into()));
        }
        self.train_config(0)?.validate()?;
        self.partition_spec(0)
            .validate(self.dataset_num_classes())?;
        Ok(())
    }

    /// Class count implied by the dataset source.
    pub fn dataset_num_classes(&self) -> usize {
        match self.dataset_kind {
            DatasetKind::Synthetic => self.synthetic_classes,
            DatasetKind::Cifar10 => 10,
        }
    }
}
