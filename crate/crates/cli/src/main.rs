//! `fedsim`: drive label-skew federated learning experiments from the
//! command line.
//!
//! Subcommands: `partition` (emit partition + label-count files),
//! `select-trace` (selection loop only, both strategies), `train` (full
//! experiment), `sweep` (grid over rates / epsilons / selectors).
//!
//! Every config key doubles as a long flag (`--clients.k 50`); flags
//! override values read from `--config <file>`.

use anyhow::{bail, Context, Result};
use clap::{Arg, ArgAction, ArgMatches, Command};
use fedsim_core::harness::{self, ExperimentConfig, Strategy, CONFIG_KEYS};
use fedsim_core::partition::{counts_from_partition, generate, write_partition};
use fedsim_core::rng::derive_seed;
use fedsim_core::selection::write_selection_trace;
use std::fs;
use std::io::Write as _;
use std::path::Path;

fn config_args(command: Command) -> Command {
    let mut command = command.arg(
        Arg::new("config")
            .long("config")
            .short('c')
            .value_name("FILE")
            .help("Experiment config file (dotted key = value lines)"),
    );
    for &key in CONFIG_KEYS {
        command = command.arg(
            Arg::new(key)
                .long(key)
                .value_name("VALUE")
                .help("Override this config key")
                .action(ArgAction::Set),
        );
    }
    command
}

/// Load the config file (if any), then apply flag overrides in key order.
fn resolve_config(matches: &ArgMatches) -> Result<ExperimentConfig> {
    let mut config = match matches.get_one::<String>("config") {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
            ExperimentConfig::parse(&text).with_context(|| format!("parsing {path}"))?
        }
        None => ExperimentConfig::default(),
    };
    for &key in CONFIG_KEYS {
        if let Some(value) = matches.get_one::<String>(key) {
            config
                .apply_key(key, value)
                .with_context(|| format!("flag --{key}"))?;
        }
    }
    Ok(config)
}

fn cli() -> Command {
    Command::new("fedsim")
        .about("Deterministic federated learning simulator with entropy-based client selection")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(config_args(Command::new("partition").about(
            "Generate label-skew partitions and per-client label counts",
        )))
        .subcommand(config_args(
            Command::new("select-trace")
                .about("Run only the selection loop for both strategies and emit trace CSVs")
                .arg(
                    Arg::new("rounds")
                        .long("rounds")
                        .value_name("N")
                        .help("Number of selection rounds (defaults to train.rounds)"),
                ),
        ))
        .subcommand(config_args(
            Command::new("train").about("Run the full federated training experiment"),
        ))
        .subcommand(config_args(
            Command::new("sweep")
                .about("Run a grid of experiments over rates, epsilons, and selectors")
                .arg(
                    Arg::new("rates")
                        .long("rates")
                        .value_name("R1,R2,...")
                        .help("Participation rates (defaults to the config's rate)"),
                )
                .arg(
                    Arg::new("epsilons")
                        .long("epsilons")
                        .value_name("E1,off,...")
                        .help(
                            "DP epsilons; `off` disables DP (defaults to the config's DP setting)",
                        ),
                )
                .arg(
                    Arg::new("selectors")
                        .long("selectors")
                        .value_name("S1,S2")
                        .help("Selection strategies (default: fedentopt,random)"),
                ),
        ))
}

fn main() -> Result<()> {
    let matches = cli().get_matches();
    match matches.subcommand() {
        Some(("partition", sub)) => cmd_partition(sub),
        Some(("select-trace", sub)) => cmd_select_trace(sub),
        Some(("train", sub)) => cmd_train(sub),
        Some(("sweep", sub)) => cmd_sweep(sub),
        _ => unreachable!("subcommand required"),
    }
}

fn ensure_outdir(config: &ExperimentConfig) -> Result<&Path> {
    fs::create_dir_all(&config.outdir)
        .with_context(|| format!("creating {}", config.outdir.display()))?;
    Ok(config.outdir.as_path())
}

fn cmd_partition(matches: &ArgMatches) -> Result<()> {
    let config = resolve_config(matches)?;
    config.validate()?;
    let outdir = ensure_outdir(&config)?;
    for &seed in &config.seeds {
        let (train, _) = harness::load_datasets(&config, seed)?;
        let num_classes = train.num_classes();
        let partition = generate(
            train.labels(),
            num_classes,
            &config.partition_spec(derive_seed(seed, "partition", &[])),
        )?;
        let counts = counts_from_partition(&partition, train.labels(), num_classes)?;

        let partition_path = outdir.join(format!("partition_seed{seed}.tsv"));
        let mut file = fs::File::create(&partition_path)?;
        write_partition(&partition, &mut file)?;

        let counts_path = outdir.join(format!("label_counts_seed{seed}.tsv"));
        let mut file = fs::File::create(&counts_path)?;
        for (client, c) in counts.iter().enumerate() {
            let joined: Vec<String> = c.as_slice().iter().map(|v| format!("{v}")).collect();
            writeln!(file, "{client}\t{}", joined.join(","))?;
        }
        println!(
            "seed {seed}: wrote {} and {}",
            partition_path.display(),
            counts_path.display()
        );
    }
    Ok(())
}

fn cmd_select_trace(matches: &ArgMatches) -> Result<()> {
    let config = resolve_config(matches)?;
    config.validate()?;
    let rounds = match matches.get_one::<String>("rounds") {
        Some(raw) => raw.parse().context("--rounds")?,
        None => config.rounds,
    };
    let outdir = ensure_outdir(&config)?;
    for &seed in &config.seeds {
        let trace = harness::select_trace(&config, rounds, seed)?;
        for (name, rows) in [
            ("fedentopt", &trace.fedentopt_rows),
            ("random", &trace.random_rows),
        ] {
            let path = outdir.join(format!("trace_{name}_seed{seed}.csv"));
            let mut file = fs::File::create(&path)?;
            write_selection_trace(&mut file, rows)?;
        }
        let (fed_mean, fed_std) = harness::mean_std(&trace.fedentopt_round_entropy);
        let (rand_mean, rand_std) = harness::mean_std(&trace.random_round_entropy);
        println!(
            "seed {seed}: fedentopt entropy {fed_mean:.4} +- {fed_std:.4} bits, \
             random {rand_mean:.4} +- {rand_std:.4} bits over {rounds} rounds"
        );
    }
    Ok(())
}

fn cmd_train(matches: &ArgMatches) -> Result<()> {
    let config = resolve_config(matches)?;
    let report = harness::run_experiment(&config)?;
    for (run, accuracy) in report.runs.iter().zip(&report.per_seed_accuracy) {
        println!("seed {}: last-10-round accuracy {:.4}", run.seed, accuracy);
    }
    println!(
        "{}: accuracy {:.4} +- {:.4} over {} seed(s); outputs in {}",
        config.strategy.name(),
        report.mean_accuracy,
        report.std_accuracy,
        report.runs.len(),
        config.outdir.display()
    );
    Ok(())
}

fn parse_strategies(raw: &str) -> Result<Vec<Strategy>> {
    raw.split(',')
        .map(|s| match s.trim() {
            "fedentopt" => Ok(Strategy::FedEntOpt),
            "random" => Ok(Strategy::Random),
            other => bail!("unknown selector {other:?}"),
        })
        .collect()
}

fn cmd_sweep(matches: &ArgMatches) -> Result<()> {
    let config = resolve_config(matches)?;
    config.validate()?;

    let rates: Vec<f64> = match matches.get_one::<String>("rates") {
        Some(raw) => raw
            .split(',')
            .map(|s| s.trim().parse().context("--rates"))
            .collect::<Result<_>>()?,
        None => match config.participation {
            harness::Participation::Rate(rate) => vec![rate],
            harness::Participation::Count(m) => {
                vec![m as f64 / config.num_clients as f64]
            }
        },
    };
    let epsilons: Vec<Option<f64>> = match matches.get_one::<String>("epsilons") {
        Some(raw) => raw
            .split(',')
            .map(|s| {
                let s = s.trim();
                if s == "off" {
                    Ok(None)
                } else {
                    s.parse().map(Some).context("--epsilons")
                }
            })
            .collect::<Result<_>>()?,
        None => vec![if config.dp_enabled {
            Some(config.dp_epsilon)
        } else {
            None
        }],
    };
    let strategies = match matches.get_one::<String>("selectors") {
        Some(raw) => parse_strategies(raw)?,
        None => vec![Strategy::FedEntOpt, Strategy::Random],
    };

    let cells = harness::run_sweep(&config, &rates, &epsilons, &strategies)?;
    println!("rate,selector,epsilon,mean_accuracy,std_accuracy");
    for cell in &cells {
        let epsilon = cell.epsilon.map_or("off".to_string(), |e| e.to_string());
        println!(
            "{},{},{},{:.4},{:.4}",
            cell.rate,
            cell.strategy.name(),
            epsilon,
            cell.report.mean_accuracy,
            cell.report.std_accuracy
        );
    }
    println!("outputs in {}", config.outdir.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        cli().debug_assert();
    }

    #[test]
    fn strategies_parse() {
        assert_eq!(
            parse_strategies("fedentopt,random").unwrap(),
            vec![Strategy::FedEntOpt, Strategy::Random]
        );
        assert!(parse_strategies("nope").is_err());
    }
}
