use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedboost::config::{self, ExperimentConfig, Mode, CONFIG_REFERENCE, PRESET_NAMES};
use fedboost::experiment;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "fedboost",
    version,
    about = "Asynchronous federated AdaBoost simulator",
    after_help = CONFIG_REFERENCE
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured mode and the synchronous baseline, write traces and reports.
    #[command(after_help = CONFIG_REFERENCE)]
    Run(RunArgs),
    /// List the built-in presets.
    PresetList,
    /// Parse and validate a configuration without running it.
    #[command(after_help = CONFIG_REFERENCE)]
    Validate(Source),
}

#[derive(Args)]
struct Source {
    /// TOML configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset name, or `all` (run only).
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Override every seed in the config.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Seed sweep: `1..5`, `1..=5` or `1,2,3`.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory.
    #[arg(long, env = "FEDBOOST_OUT", default_value = "results")]
    out: PathBuf,
    /// Override the mode: synchronous | async_fixed | async_adaptive.
    #[arg(long)]
    mode: Option<Mode>,
    /// Exit with status 3 if any run fails to converge.
    #[arg(long)]
    require_convergence: bool,
}

fn load(source: &Source, allow_all: bool) -> Result<Vec<ExperimentConfig>, String> {
    match (&source.config, source.preset.as_deref()) {
        (Some(path), None) => config::parse_config(path)
            .map(|c| vec![c])
            .map_err(|e| e.to_string()),
        (None, Some("all")) if allow_all => PRESET_NAMES
            .iter()
            .map(|n| config::preset(n).map_err(|e| e.to_string()))
            .collect(),
        (None, Some(name)) => config::preset(name)
            .map(|c| vec![c])
            .map_err(|e| e.to_string()),
        (None, None) => Ok(vec![ExperimentConfig::default()]),
        (Some(_), Some(_)) => Err("--config and --preset are mutually exclusive".into()),
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn run(args: RunArgs) -> ExitCode {
    let mut configs = match load(&args.source, true) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    for c in &mut configs {
        if let Some(mode) = args.mode {
            *c = c.clone().with_mode(mode);
        }
        if let Some(seed) = args.seed {
            *c = c.clone().with_seed(seed);
        }
        if let Err(e) = c.validate() {
            return fail(EXIT_CONFIG, format!("{}: {e}", c.name));
        }
    }
    let seeds = match args.seeds.as_deref().map(experiment::parse_seeds) {
        Some(Ok(s)) => Some(s),
        Some(Err(e)) => return fail(EXIT_CONFIG, e),
        None => None,
    };

    let converged = if seeds.is_none() && configs.len() == 1 {
        match experiment::run_experiment(&configs[0], &args.out) {
            Ok(o) => {
                print!("{}", fedboost::metrics::report_table(&o.report));
                o.converged()
            }
            Err(e) => return fail(EXIT_RUNTIME, e),
        }
    } else {
        // Without --seeds, each config keeps its own seed.
        let result = match &seeds {
            Some(seeds) => experiment::run_sweep(&configs, seeds, Some(&args.out)),
            None => configs
                .iter()
                .map(|c| single_seed_sweep(c, &args.out))
                .collect::<Result<Vec<_>, _>>()
                .map(|parts| experiment::SweepResult {
                    summaries: parts.iter().flat_map(|p| p.summaries.clone()).collect(),
                    runs: parts.into_iter().flat_map(|p| p.runs).collect(),
                }),
        };
        match result {
            Ok(r) => {
                if seeds.is_none() {
                    if let Err(e) = write_summary(&args.out, &r.summaries) {
                        return fail(EXIT_RUNTIME, e);
                    }
                }
                print!("{}", experiment::summary_table(&r.summaries));
                r.all_converged()
            }
            Err(e) => return fail(EXIT_RUNTIME, e),
        }
    };
    println!("results written to {}", args.out.display());
    if args.require_convergence && !converged {
        return fail(EXIT_NOT_CONVERGED, "at least one run did not converge");
    }
    ExitCode::SUCCESS
}

fn single_seed_sweep(
    c: &ExperimentConfig,
    out: &Path,
) -> fedboost::Result<experiment::SweepResult> {
    let seed = c.dataset.seed;
    let res = experiment::run_sweep(std::slice::from_ref(c), &[seed], None)?;
    let (_, _, outcome) = &res.runs[0];
    experiment::write_outputs(outcome, &experiment::seed_dir(out, &c.name, seed))?;
    Ok(res)
}

fn write_summary(out: &Path, summaries: &[experiment::SweepSummary]) -> std::io::Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(
        out.join("summary.csv"),
        experiment::summary_csv_string(summaries),
    )?;
    std::fs::write(
        out.join("summary.txt"),
        experiment::summary_table(summaries),
    )
}

fn validate(source: Source) -> ExitCode {
    match load(&source, false).and_then(|cs| {
        cs.into_iter()
            .map(|c| c.validate().map(|_| c).map_err(|e| e.to_string()))
            .collect::<Result<Vec<_>, _>>()
    }) {
        Ok(cs) => {
            for c in cs {
                println!("{}: ok ({})", c.name, c.mode);
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_CONFIG, e),
    }
}

fn preset_list() -> ExitCode {
    for name in PRESET_NAMES {
        let c = config::preset(name).expect("built-in preset");
        println!(
            "{name:<12} clients {:>2}  n {:>5}  latency {}-{} s  compute {}-{} s  dropout {}-{} (burst {})  imbalance 1:{}",
            c.partition.clients,
            c.dataset.n,
            c.clients.link_latency.lo,
            c.clients.link_latency.hi,
            c.clients.compute_time.lo,
            c.clients.compute_time.hi,
            c.clients.dropout.lo,
            c.clients.dropout.hi,
            c.clients.dropout_burst,
            c.dataset.imbalance_ratio,
        );
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(args),
        Command::PresetList => preset_list(),
        Command::Validate(source) => validate(source),
    }
}
