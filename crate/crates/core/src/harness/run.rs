//! The experiment driver: per-seed state construction, the round loop, trace
//! generation, and sweeps.
//!
//! Stream derivation map (all from the per-run seed): `data-train` and
//! `data-test` for synthetic generation, `partition` for the skew split,
//! `dp` indexed by client for privatization, `init` for the global model,
//! `select` indexed by round, and `train` indexed by (round, client) for
//! local batch shuffles. Rounds are sequential; client training within a
//! round fans out in parallel and joins before aggregation, which runs in
//! ascending client-id order.

use crate::error::{Error, Result};
use crate::fedcore::{
    aggregate_params, evaluate, gen_synthetic, load_cifar10_bin, local_train, Dataset, ModelParams,
    ModelSpec, RoundMetrics, TrainConfig,
};
use crate::harness::config::{DatasetKind, ExperimentConfig, Strategy};
use crate::harness::metrics::{mean_std, trailing_mean_accuracy, write_metrics_csv};
use crate::labelstats::{self, ClientId, LabelCounts};
use crate::partition::{counts_from_partition, generate, Partition};
use crate::privacy::{privatize_counts, PrivacyBudget};
use crate::rng::{derive_rng, derive_seed};
use crate::selection::{
    select_fedentopt, select_random, trace_rows, ClientRegistry, SelectionResult, SelectionState,
    TraceRow,
};
use rayon::prelude::*;
use std::fs;
use std::io::Write as _;
use std::path::Path;

/// Number of trailing rounds that enter the accuracy summary.
pub const SUMMARY_WINDOW: usize = 10;

/// Everything one seed's run needs, set up once before round 0.
pub struct RoundState {
    pub seed: u64,
    pub spec: ModelSpec,
    pub train_cfg: TrainConfig,
    pub strategy: Strategy,
    pub registry: ClientRegistry,
    pub true_counts: Vec<LabelCounts>,
    pub train_data: Dataset,
    pub test_data: Dataset,
    pub partition: Partition,
    pub selection_state: SelectionState,
    pub global_params: ModelParams,
}

/// Build datasets, partition, counts (privatized when DP is on), registry,
/// and the initial global model for one seed.
pub fn init_round_state(config: &ExperimentConfig, seed: u64) -> Result<RoundState> {
    config.validate()?;
    let (train_data, test_data) = load_datasets(config, seed)?;
    let num_classes = train_data.num_classes();

    let partition = generate(
        train_data.labels(),
        num_classes,
        &config.partition_spec(derive_seed(seed, "partition", &[])),
    )?;
    let true_counts = counts_from_partition(&partition, train_data.labels(), num_classes)?;

    // In DP mode the registry only ever sees the privatized vectors; the raw
    // counts stay on the evaluation side (entropy_true_bits).
    let registry_counts = if config.dp_enabled {
        let budget = PrivacyBudget::new(config.dp_epsilon)?;
        true_counts
            .iter()
            .enumerate()
            .map(|(client, counts)| {
                privatize_counts(
                    counts,
                    budget,
                    &mut derive_rng(seed, "dp", &[client as u64]),
                )
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        true_counts.clone()
    };
    let registry = ClientRegistry::new(registry_counts)?;

    let spec = config.model_spec(train_data.dims(), num_classes);
    spec.validate()?;
    let global_params = spec.init_params(&mut derive_rng(seed, "init", &[]));

    Ok(RoundState {
        seed,
        spec,
        train_cfg: config.train_config(seed)?,
        strategy: config.strategy,
        registry,
        true_counts,
        train_data,
        test_data,
        partition,
        selection_state: SelectionState::new(config.buffer_capacity()?),
        global_params,
    })
}

/// Build (train, test) datasets for one seed from the configured source.
pub fn load_datasets(config: &ExperimentConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    match config.dataset_kind {
        DatasetKind::Synthetic => {
            let train = gen_synthetic(
                config.synthetic_classes,
                config.synthetic_dims,
                config.synthetic_per_class,
                config.synthetic_separation,
                derive_seed(seed, "data-train", &[]),
            )?;
            let test = gen_synthetic(
                config.synthetic_classes,
                config.synthetic_dims,
                config.synthetic_per_class,
                config.synthetic_separation,
                derive_seed(seed, "data-test", &[]),
            )?;
            Ok((train, test))
        }
        DatasetKind::Cifar10 => {
            let root = config
                .dataset_path
                .as_ref()
                .ok_or_else(|| Error::Domain("dataset.path is required for cifar10".into()))?;
            let root = Path::new(root);
            let train_files: Vec<_> = {
                let mut found: Vec<_> = fs::read_dir(root)
                    .map_err(|e| Error::Io {
                        path: root.display().to_string(),
                        source: e,
                    })?
                    .filter_map(|entry| entry.ok().map(|e| e.path()))
                    .filter(|p| {
                        p.file_name()
                            .and_then(|n| n.to_str())
                            .is_some_and(|n| n.starts_with("data_batch") && n.ends_with(".bin"))
                    })
                    .collect();
                found.sort();
                found
            };
            if train_files.is_empty() {
                return Err(Error::Format(format!(
                    "no data_batch*.bin files under {}",
                    root.display()
                )));
            }
            let mut train: Option<Dataset> = None;
            for file in &train_files {
                let part = load_cifar10_bin(file)?;
                train = Some(match train {
                    None => part,
                    Some(existing) => concat_datasets(existing, part)?,
                });
            }
            let test = load_cifar10_bin(&root.join("test_batch.bin"))?;
            Ok((train.expect("at least one train file"), test))
        }
    }
}

fn concat_datasets(a: Dataset, b: Dataset) -> Result<Dataset> {
    if a.dims() != b.dims() || a.num_classes() != b.num_classes() {
        return Err(Error::Dimension {
            expected: a.dims(),
            got: b.dims(),
        });
    }
    let dims = a.dims();
    let num_classes = a.num_classes();
    let mut features = Vec::with_capacity((a.len() + b.len()) * dims);
    let mut labels = Vec::with_capacity(a.len() + b.len());
    for data in [a, b] {
        for sample in 0..data.len() {
            features.extend_from_slice(data.features_of(sample));
            labels.push(data.label_of(sample));
        }
    }
    Dataset::new(features, labels, dims, num_classes)
}

fn select_cohort(state: &mut RoundState, round: usize) -> Result<SelectionResult> {
    let mut rng = derive_rng(state.seed, "select", &[round as u64]);
    match state.strategy {
        Strategy::FedEntOpt => select_fedentopt(
            &state.registry,
            state.train_cfg.cohort_size,
            &mut state.selection_state,
            &mut rng,
        ),
        Strategy::Random => select_random(&state.registry, state.train_cfg.cohort_size, &mut rng),
    }
}

/// Execute one communication round: select, train the cohort in parallel,
/// aggregate in ascending client-id order, evaluate.
pub fn run_round(state: &mut RoundState, round: usize) -> Result<RoundMetrics> {
    let lr = state.train_cfg.effective_lr(round);
    let selection = select_cohort(state, round).map_err(|e| e.in_round(round))?;

    let true_cohort_counts = labelstats::aggregate_counts(
        selection
            .cohort
            .iter()
            .map(|id| &state.true_counts[id.index()]),
    )
    .map_err(|e| e.in_round(round))?;
    let entropy_true_bits = labelstats::entropy(
        &labelstats::normalize(&true_cohort_counts).map_err(|e| e.in_round(round))?,
    );

    // Training always runs on the clients' true local data; DP only ever
    // affects what the selector saw.
    let mut cohort = selection.cohort.clone();
    cohort.sort_unstable();
    let updates: Vec<(ClientId, ModelParams, f64)> = cohort
        .par_iter()
        .map(|&id| {
            let samples = state.partition.client_samples(id.index());
            let mut rng = derive_rng(state.seed, "train", &[round as u64, id.0]);
            let params = local_train(
                &state.spec,
                &state.global_params,
                &state.train_data,
                samples,
                &state.train_cfg,
                lr,
                &mut rng,
            )?;
            Ok((id, params, samples.len() as f64))
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_round(round))?;

    let weighted: Vec<(ModelParams, f64)> = updates
        .into_iter()
        .map(|(_, params, n)| (params, n))
        .collect();
    state.global_params = aggregate_params(&weighted).map_err(|e| e.in_round(round))?;

    let (test_accuracy, test_loss) = evaluate(&state.spec, &state.global_params, &state.test_data)
        .map_err(|e| e.in_round(round))?;

    Ok(RoundMetrics {
        round,
        cohort: selection.cohort,
        entropy_bits: selection.cohort_entropy,
        entropy_true_bits,
        test_accuracy,
        test_loss,
        lr,
    })
}

/// Run all rounds for one seed.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<Vec<RoundMetrics>> {
    let mut state = init_round_state(config, seed)?;
    (0..config.rounds)
        .map(|round| run_round(&mut state, round))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: Vec<RoundMetrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub runs: Vec<SeedRun>,
    /// Mean accuracy over the last [`SUMMARY_WINDOW`] rounds, per seed.
    pub per_seed_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

/// Run the experiment for every configured seed, writing one metrics CSV per
/// seed plus a summary file into `run.outdir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    fs::create_dir_all(&config.outdir).map_err(|e| Error::Io {
        path: config.outdir.display().to_string(),
        source: e,
    })?;

    let mut runs = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let metrics = run_seed(config, seed)?;
        let path = config.outdir.join(format!("metrics_seed{seed}.csv"));
        let mut file = fs::File::create(&path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        write_metrics_csv(&mut file, config.strategy.name(), &metrics).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        runs.push(SeedRun { seed, metrics });
    }

    let report = summarize(runs);
    let path = config.outdir.join("summary.txt");
    let mut file = fs::File::create(&path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    write_summary(&mut file, config, &report).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(report)
}

fn summarize(runs: Vec<SeedRun>) -> ExperimentReport {
    let per_seed_accuracy: Vec<f64> = runs
        .iter()
        .map(|run| trailing_mean_accuracy(&run.metrics, SUMMARY_WINDOW))
        .collect();
    let (mean_accuracy, std_accuracy) = mean_std(&per_seed_accuracy);
    ExperimentReport {
        runs,
        per_seed_accuracy,
        mean_accuracy,
        std_accuracy,
    }
}

/// Summary file: dotted keys, same dialect as the config format.
pub fn write_summary<W: std::io::Write>(
    writer: &mut W,
    config: &ExperimentConfig,
    report: &ExperimentReport,
) -> std::io::Result<()> {
    writeln!(writer, "summary.selector = {}", config.strategy.name())?;
    let seeds: Vec<String> = report.runs.iter().map(|r| r.seed.to_string()).collect();
    writeln!(writer, "summary.seeds = {}", seeds.join(","))?;
    for (run, accuracy) in report.runs.iter().zip(&report.per_seed_accuracy) {
        writeln!(
            writer,
            "summary.seed.{}.last10_mean_accuracy = {:.6}",
            run.seed, accuracy
        )?;
    }
    writeln!(
        writer,
        "summary.accuracy.mean = {:.6}",
        report.mean_accuracy
    )?;
    writeln!(writer, "summary.accuracy.std = {:.6}", report.std_accuracy)?;
    Ok(())
}

/// Per-strategy selection traces over a shared registry, no training.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTrace {
    pub seed: u64,
    pub fedentopt_rows: Vec<TraceRow>,
    pub random_rows: Vec<TraceRow>,
    /// Final (cohort) entropy of each round, per strategy.
    pub fedentopt_round_entropy: Vec<f64>,
    pub random_round_entropy: Vec<f64>,
}

/// Run only the selection loop for `rounds` rounds, with both strategies on
/// the same registry built from `seed`.
pub fn select_trace(config: &ExperimentConfig, rounds: usize, seed: u64) -> Result<SelectionTrace> {
    if rounds == 0 {
        return Err(Error::Domain("trace needs at least one round".into()));
    }
    let (train_data, _) = load_datasets(config, seed)?;
    let num_classes = train_data.num_classes();
    let partition = generate(
        train_data.labels(),
        num_classes,
        &config.partition_spec(derive_seed(seed, "partition", &[])),
    )?;
    let true_counts = counts_from_partition(&partition, train_data.labels(), num_classes)?;
    let registry_counts = if config.dp_enabled {
        let budget = PrivacyBudget::new(config.dp_epsilon)?;
        true_counts
            .iter()
            .enumerate()
            .map(|(client, counts)| {
                privatize_counts(
                    counts,
                    budget,
                    &mut derive_rng(seed, "dp", &[client as u64]),
                )
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        true_counts
    };
    let registry = ClientRegistry::new(registry_counts)?;
    let cohort_size = config.cohort_size()?;

    let mut fed_state = SelectionState::new(config.buffer_capacity()?);
    let mut fedentopt_rows = Vec::new();
    let mut random_rows = Vec::new();
    let mut fedentopt_round_entropy = Vec::with_capacity(rounds);
    let mut random_round_entropy = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let mut rng = derive_rng(seed, "select", &[round as u64]);
        let fed = select_fedentopt(&registry, cohort_size, &mut fed_state, &mut rng)
            .map_err(|e| e.in_round(round))?;
        fedentopt_rows.extend(trace_rows(round, &fed));
        fedentopt_round_entropy.push(fed.cohort_entropy);

        let mut rng = derive_rng(seed, "select", &[round as u64]);
        let random =
            select_random(&registry, cohort_size, &mut rng).map_err(|e| e.in_round(round))?;
        random_rows.extend(trace_rows(round, &random));
        random_round_entropy.push(random.cohort_entropy);
    }
    Ok(SelectionTrace {
        seed,
        fedentopt_rows,
        random_rows,
        fedentopt_round_entropy,
        random_round_entropy,
    })
}

/// One cell of a sweep grid.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub rate: f64,
    pub strategy: Strategy,
    /// `None` runs without differential privacy.
    pub epsilon: Option<f64>,
    pub name: String,
    pub report: ExperimentReport,
}

/// Grid over participation rates, DP epsilons, and selectors. Each cell runs
/// the full experiment into `outdir/<cell name>/`, and a `sweep_summary.csv`
/// collects the per-cell summary statistics.
pub fn run_sweep(
    base: &ExperimentConfig,
    rates: &[f64],
    epsilons: &[Option<f64>],
    strategies: &[Strategy],
) -> Result<Vec<SweepCell>> {
    if rates.is_empty() || epsilons.is_empty() || strategies.is_empty() {
        return Err(Error::Domain("sweep axes must not be empty".into()));
    }
    let mut cells = Vec::new();
    for &rate in rates {
        for &strategy in strategies {
            for &epsilon in epsilons {
                let dp_tag = match epsilon {
                    Some(eps) => format!("eps{eps}"),
                    None => "nodp".to_string(),
                };
                let name = format!("rate{rate}_{}_{}", strategy.name(), dp_tag);
                let mut config = base.clone();
                config.participation = super::config::Participation::Rate(rate);
                config.strategy = strategy;
                match epsilon {
                    Some(eps) => {
                        config.dp_enabled = true;
                        config.dp_epsilon = eps;
                    }
                    None => config.dp_enabled = false,
                }
                config.outdir = base.outdir.join(&name);
                let report = run_experiment(&config)?;
                cells.push(SweepCell {
                    rate,
                    strategy,
                    epsilon,
                    name,
                    report,
                });
            }
        }
    }

    let path = base.outdir.join("sweep_summary.csv");
    let mut file = fs::File::create(&path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    writeln!(file, "rate,selector,epsilon,mean_accuracy,std_accuracy").map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    for cell in &cells {
        let epsilon = cell.epsilon.map_or("off".to_string(), |e| e.to_string());
        writeln!(
            file,
            "{},{},{},{:.6},{:.6}",
            cell.rate,
            cell.strategy.name(),
            epsilon,
            cell.report.mean_accuracy,
            cell.report.std_accuracy
        )
        .map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    Ok(cells)
}
