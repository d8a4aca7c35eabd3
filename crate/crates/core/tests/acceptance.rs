//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Run with:
//!
//! ```text
//! cargo test -p fedsim-core --test acceptance -- --nocapture
//! ```
//!
//! Criteria 6 and 7 share one set of training runs (see [`ORDERING`]); the
//! ordering criterion first evaluates three seeds against the 3-point
//! margin and, if any seed misses it, escalates to five seeds requiring a
//! positive mean improvement with a per-seed majority.

use fedsim_core::fedcore::{forward_loss_grad, local_train, ModelKind, ModelSpec};
use fedsim_core::harness::{
    self, ExperimentConfig, Participation, SelectionTrace, Strategy, SUMMARY_WINDOW,
};
use fedsim_core::labelstats::{all_labels_present_threshold, ClientId, LabelCounts};
use fedsim_core::partition::{counts_from_partition, partition_dirichlet, partition_quantity};
use fedsim_core::privacy::{laplace_sample, PrivacyBudget};
use fedsim_core::rng::derive_rng;
use fedsim_core::selection::{
    greedy_step_oracle, select_fedentopt, ClientRegistry, SelectionState,
};
use rand::Rng;
use std::sync::LazyLock;
use std::time::{Duration, Instant};

fn report(number: u8, name: &str, pass: bool, detail: &str, started: Instant) {
    println!(
        "criterion {number:>2} [{}] {name}: {detail} ({:.2?})",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed()
    );
    assert!(pass, "criterion {number} ({name}) failed: {detail}");
}

fn assert_runtime(number: u8, started: Instant, budget: Duration) {
    let elapsed = started.elapsed();
    assert!(
        elapsed < budget,
        "criterion {number} exceeded its runtime budget: {elapsed:.2?} >= {budget:.2?}"
    );
}

/// The shared trace setup: K=100 synthetic clients holding exactly two of
/// ten labels, M=10, Q=70, 100 selection rounds, three seeds.
fn trace_config() -> ExperimentConfig {
    ExperimentConfig {
        participation: Participation::Count(10),
        q_fraction: 0.7,
        ..ExperimentConfig::default()
    }
}

static TRACES: LazyLock<Vec<SelectionTrace>> = LazyLock::new(|| {
    let config = trace_config();
    [1u64, 2, 3]
        .iter()
        .map(|&seed| harness::select_trace(&config, 100, seed).expect("trace run"))
        .collect()
});

#[test]
fn criterion_01_entropy_threshold() {
    let started = Instant::now();
    let threshold = all_labels_present_threshold(10).unwrap();
    assert!(
        (threshold - 3.17).abs() < 0.005,
        "threshold sanity: {threshold}"
    );

    let mut detail = String::new();
    let mut pass = true;
    for trace in TRACES.iter() {
        let (fed_mean, _) = harness::mean_std(&trace.fedentopt_round_entropy);
        let (rand_mean, _) = harness::mean_std(&trace.random_round_entropy);
        pass &= fed_mean > threshold && rand_mean < fed_mean;
        detail.push_str(&format!(
            "seed {}: fedentopt {fed_mean:.4}, random {rand_mean:.4}; ",
            trace.seed
        ));
    }
    detail.push_str(&format!("threshold {threshold:.4}"));
    report(1, "entropy threshold", pass, &detail, started);
    assert_runtime(1, started, Duration::from_secs(10));
}

#[test]
fn criterion_02_entropy_variance_shape() {
    let started = Instant::now();
    let mut detail = String::new();
    let mut pass = true;
    for trace in TRACES.iter() {
        let (_, fed_std) = harness::mean_std(&trace.fedentopt_round_entropy);
        let (_, rand_std) = harness::mean_std(&trace.random_round_entropy);
        pass &= fed_std < rand_std;
        detail.push_str(&format!(
            "seed {}: std {fed_std:.4} vs {rand_std:.4}; ",
            trace.seed
        ));
    }
    report(
        2,
        "entropy variance shape",
        pass,
        detail.trim_end_matches("; "),
        started,
    );
    assert_runtime(2, started, Duration::from_secs(10));
}

#[test]
fn criterion_03_greedy_oracle_equivalence() {
    let started = Instant::now();
    let mut instances = 0usize;
    let mut picks_checked = 0usize;
    let mut mismatches = 0usize;

    for case in 0..1000u64 {
        let mut rng = derive_rng(0xACCE97, "oracle-instances", &[case]);
        let num_clients = rng.random_range(2..=20usize);
        let num_classes = rng.random_range(2..=8usize);
        let counts: Vec<LabelCounts> = (0..num_clients)
            .map(|_| {
                let mut row: Vec<f64> = (0..num_classes)
                    .map(|_| rng.random_range(0.0..50.0))
                    .collect();
                let anchor = rng.random_range(0..num_classes);
                row[anchor] += 1.0; // guarantee positive mass
                LabelCounts::new(row).unwrap()
            })
            .collect();
        let registry = ClientRegistry::new(counts).unwrap();
        let cohort_size = rng.random_range(1..=num_clients);
        let capacity = rng.random_range(0..=num_clients - cohort_size);

        let mut state = SelectionState::new(capacity);
        let result = select_fedentopt(&registry, cohort_size, &mut state, &mut rng).unwrap();

        // Independent replay of the round: oracle pick by pick, with its own
        // FIFO bookkeeping.
        let mut buffer: Vec<ClientId> = Vec::new();
        let mut running = LabelCounts::zeros(num_classes);
        for (ix, &pick) in result.cohort.iter().enumerate() {
            if ix > 0 {
                let expected =
                    greedy_step_oracle(&registry, &result.cohort[..ix], &buffer, &running).unwrap();
                picks_checked += 1;
                if expected != pick {
                    mismatches += 1;
                }
            }
            if capacity > 0 {
                if buffer.len() >= capacity {
                    buffer.remove(0);
                }
                buffer.push(pick);
            }
            running.add_assign(registry.counts(pick)).unwrap();
        }
        instances += 1;
    }

    let detail =
        format!("{instances} registries, {picks_checked} greedy picks, {mismatches} mismatches");
    report(
        3,
        "greedy oracle equivalence",
        mismatches == 0 && instances >= 1000,
        &detail,
        started,
    );
    assert_runtime(3, started, Duration::from_secs(30));
}

#[test]
fn criterion_04_gradient_check() {
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut instances = 0usize;

    for kind_ix in 0..2 {
        for case in 0..50u64 {
            let mut rng = derive_rng(0xACCE97, "grad-instances", &[kind_ix as u64, case]);
            let dims = rng.random_range(2..=6usize);
            let classes = rng.random_range(2..=5usize);
            let kind = if kind_ix == 0 {
                ModelKind::SoftmaxRegression
            } else {
                ModelKind::Mlp {
                    hidden: rng.random_range(1..=8usize),
                }
            };
            let spec = ModelSpec {
                kind,
                input_dim: dims,
                num_classes: classes,
            };
            let data = fedsim_core::fedcore::gen_synthetic(classes, dims, 4, 2.0, case).unwrap();
            let params = spec.init_params(&mut rng);
            let batch_len = rng.random_range(1..=4usize);
            let batch: Vec<usize> = (0..batch_len)
                .map(|_| rng.random_range(0..data.len()))
                .collect();

            let (_, grad) = forward_loss_grad(&spec, &params, &data, &batch).unwrap();
            let mut probe = params.clone();
            let step = 1e-5;
            for (ix, g) in grad.iter().enumerate() {
                let original = probe.values()[ix];
                probe.values_mut()[ix] = original + step;
                let (plus, _) = forward_loss_grad(&spec, &probe, &data, &batch).unwrap();
                probe.values_mut()[ix] = original - step;
                let (minus, _) = forward_loss_grad(&spec, &probe, &data, &batch).unwrap();
                probe.values_mut()[ix] = original;
                worst = worst.max((g - (plus - minus) / (2.0 * step)).abs());
            }
            instances += 1;
        }
    }

    let detail = format!("{instances} instances, max abs error {worst:.3e}");
    report(
        4,
        "gradient finite differences",
        worst < 1e-6 && instances == 100,
        &detail,
        started,
    );
    assert_runtime(4, started, Duration::from_secs(10));
}

#[test]
fn criterion_05_fedavg_degenerate_equivalence() {
    let started = Instant::now();
    let config = ExperimentConfig {
        synthetic_classes: 10,
        synthetic_dims: 8,
        synthetic_per_class: 30,
        partition_j: 10, // the single client holds every label
        num_clients: 1,
        participation: Participation::Count(1),
        q_fraction: 0.0,
        epochs: 1,
        rounds: 20,
        seeds: vec![17],
        ..ExperimentConfig::default()
    };
    let seed = 17u64;

    // Federated route.
    let mut state = harness::init_round_state(&config, seed).unwrap();
    let mut fl_metrics = Vec::new();
    for round in 0..config.rounds {
        fl_metrics.push(harness::run_round(&mut state, round).unwrap());
    }

    // Centralized route: plain mini-batch SGD over the whole dataset with
    // the same derived streams and learning-rate schedule.
    let (train, test) = harness::load_datasets(&config, seed).unwrap();
    let spec = config.model_spec(train.dims(), train.num_classes());
    let train_cfg = config.train_config(seed).unwrap();
    let mut params = spec.init_params(&mut derive_rng(seed, "init", &[]));
    let all: Vec<usize> = (0..train.len()).collect();
    let mut pass = true;
    for (round, fl_row) in fl_metrics.iter().enumerate() {
        params = local_train(
            &spec,
            &params,
            &train,
            &all,
            &train_cfg,
            train_cfg.effective_lr(round),
            &mut derive_rng(seed, "train", &[round as u64, 0]),
        )
        .unwrap();
        let (accuracy, loss) = fedsim_core::fedcore::evaluate(&spec, &params, &test).unwrap();
        pass &= accuracy == fl_row.test_accuracy && loss == fl_row.test_loss;
    }
    let bitwise_params = params.values() == state.global_params.values();
    pass &= bitwise_params;

    let detail = format!(
        "20 rounds, params bit-identical: {bitwise_params}, final accuracy {:.4}",
        fl_metrics.last().unwrap().test_accuracy
    );
    report(
        5,
        "degenerate FedAvg equals centralized SGD",
        pass,
        &detail,
        started,
    );
    assert_runtime(5, started, Duration::from_secs(10));
}

/// Pinned setup for the ordering criteria: C=10, d=20, 200 samples/class,
/// separation 4 sigma, K=100, two labels per client, M=10, MLP hidden 32,
/// 100 rounds.
fn ordering_config(strategy: Strategy, dp: bool) -> ExperimentConfig {
    ExperimentConfig {
        strategy,
        dp_enabled: dp,
        dp_epsilon: 0.5,
        participation: Participation::Count(10),
        ..ExperimentConfig::default()
    }
}

struct OrderingRuns {
    seeds: Vec<u64>,
    fed: Vec<f64>,
    random: Vec<f64>,
    dp: Vec<f64>,
    escalated: bool,
}

fn last10(config: &ExperimentConfig, seed: u64) -> f64 {
    let metrics = harness::run_seed(config, seed).expect("training run");
    harness::trailing_mean_accuracy(&metrics, SUMMARY_WINDOW)
}

static ORDERING: LazyLock<OrderingRuns> = LazyLock::new(|| {
    let fed_config = ordering_config(Strategy::FedEntOpt, false);
    let random_config = ordering_config(Strategy::Random, false);
    let dp_config = ordering_config(Strategy::FedEntOpt, true);

    let mut seeds: Vec<u64> = vec![1, 2, 3];
    let mut fed: Vec<f64> = seeds.iter().map(|&s| last10(&fed_config, s)).collect();
    let mut random: Vec<f64> = seeds.iter().map(|&s| last10(&random_config, s)).collect();

    // Stage 1: every seed must clear the 3-point margin; otherwise escalate
    // to five seeds.
    let stage1 = fed.iter().zip(&random).all(|(f, r)| f - r >= 0.03);
    let escalated = !stage1;
    if escalated {
        for seed in [4u64, 5] {
            seeds.push(seed);
            fed.push(last10(&fed_config, seed));
            random.push(last10(&random_config, seed));
        }
    }
    let dp = seeds.iter().map(|&s| last10(&dp_config, s)).collect();
    OrderingRuns {
        seeds,
        fed,
        random,
        dp,
        escalated,
    }
});

#[test]
fn criterion_06_end_to_end_ordering() {
    let started = Instant::now();
    let runs = &*ORDERING;

    let gaps: Vec<f64> = runs
        .fed
        .iter()
        .zip(&runs.random)
        .map(|(f, r)| f - r)
        .collect();
    let pass = if !runs.escalated {
        true // stage 1 held: every seed cleared 3 points
    } else {
        let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let improving = gaps.iter().filter(|g| **g > 0.0).count();
        mean_gap > 0.0 && improving * 2 > gaps.len()
    };

    let detail = format!(
        "seeds {:?}, gaps (points) {:?}, {}",
        runs.seeds,
        gaps.iter()
            .map(|g| (g * 1000.0).round() / 10.0)
            .collect::<Vec<_>>(),
        if runs.escalated {
            "5-seed fallback (mean > 0, majority)"
        } else {
            "3-point margin on every seed"
        }
    );
    report(6, "end-to-end ordering", pass, &detail, started);
    assert_runtime(6, started, Duration::from_secs(600));
}

#[test]
fn criterion_07_dp_robustness() {
    let started = Instant::now();
    let runs = &*ORDERING;

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let fed_mean = mean(&runs.fed);
    let dp_mean = mean(&runs.dp);
    let random_mean = mean(&runs.random);

    let within_one_point = (dp_mean - fed_mean).abs() <= 0.01;
    let above_random = dp_mean > random_mean;
    let detail = format!(
        "fedentopt {fed_mean:.4}, dp {dp_mean:.4}, random {random_mean:.4} over seeds {:?}",
        runs.seeds
    );
    report(
        7,
        "differential privacy robustness",
        within_one_point && above_random,
        &detail,
        started,
    );
    assert_runtime(7, started, Duration::from_secs(600));
}

#[test]
fn criterion_08_laplace_mechanism_statistics() {
    let started = Instant::now();
    let budget = PrivacyBudget::new(0.5).unwrap();
    let scale = budget.noise_scale();
    assert_eq!(scale, 2.0);

    let n = 100_000usize;
    let mut rng = derive_rng(0xACCE97, "laplace-stats", &[]);
    let mut draws: Vec<f64> = (0..n)
        .map(|_| laplace_sample(scale, &mut rng).unwrap())
        .collect();

    let mean = draws.iter().sum::<f64>() / n as f64;
    let variance = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64;

    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cdf = |x: f64| {
        if x < 0.0 {
            0.5 * (x / scale).exp()
        } else {
            1.0 - 0.5 * (-x / scale).exp()
        }
    };
    let mut ks = 0.0f64;
    for (i, x) in draws.iter().enumerate() {
        let f = cdf(*x);
        ks = ks
            .max((f - i as f64 / n as f64).abs())
            .max(((i + 1) as f64 / n as f64 - f).abs());
    }
    let critical = (-(0.005f64).ln() / 2.0).sqrt() / (n as f64).sqrt();

    let variance_ok = (variance - 8.0).abs() <= 0.025 * 8.0;
    let ks_ok = ks < critical;
    let detail = format!(
        "KS {ks:.5} < {critical:.5}: {ks_ok}; variance {variance:.3} within 2.5% of 8: {variance_ok}"
    );
    report(
        8,
        "laplace mechanism statistics",
        ks_ok && variance_ok,
        &detail,
        started,
    );
    assert_runtime(8, started, Duration::from_secs(5));
}

#[test]
fn criterion_09_partition_contracts() {
    let started = Instant::now();
    let mut checked = 0usize;
    let mut pass = true;

    // Quantity regime: disjoint-exhaustive and exactly j nonzero components.
    for (num_classes, num_clients, j, per_class) in [
        (10, 100, 2usize, 200),
        (10, 50, 3, 40),
        (4, 8, 1, 30),
        (6, 6, 6, 12),
    ] {
        for seed in 0..5u64 {
            let labels: Vec<usize> = (0..num_classes * per_class)
                .map(|ix| ix % num_classes)
                .collect();
            let partition = partition_quantity(&labels, num_classes, num_clients, j, seed).unwrap();
            let mut all: Vec<usize> = partition.assignment().iter().flatten().copied().collect();
            all.sort_unstable();
            pass &= all == (0..labels.len()).collect::<Vec<_>>();
            let counts = counts_from_partition(&partition, &labels, num_classes).unwrap();
            pass &= counts.iter().all(|c| c.nonzero_components() == j);
            checked += 1;
        }
    }

    // Dirichlet regime: disjoint-exhaustive and exact class-total conservation.
    for (num_classes, num_clients, beta, per_class) in
        [(10, 20, 0.1, 101), (5, 13, 0.5, 77), (3, 4, 100.0, 50)]
    {
        for seed in 0..5u64 {
            let labels: Vec<usize> = (0..num_classes * per_class)
                .map(|ix| ix % num_classes)
                .collect();
            let partition =
                partition_dirichlet(&labels, num_classes, num_clients, beta, seed).unwrap();
            let mut all: Vec<usize> = partition.assignment().iter().flatten().copied().collect();
            all.sort_unstable();
            pass &= all == (0..labels.len()).collect::<Vec<_>>();
            let counts = counts_from_partition(&partition, &labels, num_classes).unwrap();
            for class in 0..num_classes {
                let total: f64 = counts.iter().map(|c| c.as_slice()[class]).sum();
                pass &= total == per_class as f64;
            }
            checked += 1;
        }
    }

    let detail = format!("{checked} generated partitions");
    report(
        9,
        "partition contracts",
        pass && checked == 35,
        &detail,
        started,
    );
    assert_runtime(9, started, Duration::from_secs(10));
}

#[test]
fn criterion_10_reproducibility() {
    let started = Instant::now();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let base = ExperimentConfig {
        synthetic_classes: 5,
        synthetic_dims: 8,
        synthetic_per_class: 40,
        num_clients: 20,
        participation: Participation::Count(5),
        q_fraction: 0.5,
        epochs: 2,
        rounds: 8,
        model_hidden: 8,
        seeds: vec![1, 2],
        ..ExperimentConfig::default()
    };

    let mut config_a = base.clone();
    config_a.outdir = dir_a.path().to_path_buf();
    harness::run_experiment(&config_a).unwrap();
    let mut config_b = base;
    config_b.outdir = dir_b.path().to_path_buf();
    harness::run_experiment(&config_b).unwrap();

    let mut pass = true;
    for name in ["metrics_seed1.csv", "metrics_seed2.csv", "summary.txt"] {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        pass &= a == b;
    }
    report(
        10,
        "byte-identical reruns",
        pass,
        "metrics and summary bytes match",
        started,
    );
    assert_runtime(10, started, Duration::from_secs(60));
}
