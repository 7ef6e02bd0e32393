//! Experiment orchestration: run a candidate mode next to the synchronous
//! baseline, write traces and the comparison report, and summarize sweeps
//! over presets and seeds.
//!
//! Output layout for a single run:
//!
//! ```text
//! <out>/config.toml
//! <out>/trace_<adaptive|fixed>.csv
//! <out>/trace_baseline.csv
//! <out>/report.csv
//! <out>/report.txt
//! ```
//!
//! A sweep writes one such directory per `<out>/<name>/seed_<seed>/` plus
//! `<out>/summary.csv` and `<out>/summary.txt`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{ExperimentConfig, Mode};
use crate::error::{Error, Result};
use crate::metrics::{self, ComparisonReport};
use crate::sim::{Federation, SimTrace, Simulation};

/// Seeds whose accuracy delta falls outside this band are flagged.
pub const ACCURACY_BAND_PP: f64 = 1.5;

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub config: ExperimentConfig,
    pub candidate: SimTrace,
    pub baseline: SimTrace,
    pub report: ComparisonReport,
}

impl RunOutcome {
    pub fn converged(&self) -> bool {
        self.report.deltas().is_some()
    }

    /// True when the run is comparable but its accuracy delta is out of band.
    pub fn accuracy_flagged(&self) -> bool {
        self.report
            .deltas()
            .is_some_and(|d| d.accuracy_delta_pp.abs() > ACCURACY_BAND_PP)
    }
}

/// Runs `config.mode` and the synchronous baseline on the same data.
/// When the requested mode is itself synchronous the baseline is compared
/// with itself.
pub fn execute(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let federation = Federation::build(config)?;
    let sim = Simulation::new(config).with_federation(&federation);
    let baseline = sim.run_mode(Mode::Synchronous)?;
    let candidate = match config.mode {
        Mode::Synchronous => baseline.clone(),
        mode => sim.run_mode(mode)?,
    };
    let report = metrics::compare_modes(&config.name, &candidate, &baseline, &config.convergence);
    Ok(RunOutcome {
        config: config.clone(),
        candidate,
        baseline,
        report,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes the config, both traces and the report into `dir`.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write(&dir.join("config.toml"), &outcome.config.to_toml_string())?;
    if outcome.config.mode != Mode::Synchronous {
        let name = format!("trace_{}.csv", outcome.config.mode.file_tag());
        metrics::export_trace_csv(&outcome.candidate.records, dir.join(name))?;
    }
    metrics::export_trace_csv(&outcome.baseline.records, dir.join("trace_baseline.csv"))?;
    metrics::export_report(
        &outcome.report,
        dir.join("report.csv"),
        dir.join("report.txt"),
    )
}

pub fn run_experiment(
    config: &ExperimentConfig,
    output_dir: impl AsRef<Path>,
) -> Result<RunOutcome> {
    let outcome = execute(config)?;
    write_outputs(&outcome, output_dir.as_ref())?;
    Ok(outcome)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(Stat { mean, min, max })
    }
}

/// Aggregate over the seeds of one configuration. Only comparable seeds
/// enter the statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub name: String,
    pub mode: Mode,
    pub seeds: Vec<u64>,
    pub non_comparable: Vec<u64>,
    pub accuracy_flagged: Vec<u64>,
    pub training_time: Option<Stat>,
    pub comm_overhead: Option<Stat>,
    pub convergence_rounds: Option<Stat>,
    pub accuracy_delta: Option<Stat>,
}

impl SweepSummary {
    pub fn from_runs(name: &str, runs: &[(u64, &RunOutcome)]) -> SweepSummary {
        let mut cols: [Vec<f64>; 4] = Default::default();
        let mut non_comparable = Vec::new();
        let mut flagged = Vec::new();
        for &(seed, run) in runs {
            match run.report.deltas() {
                Some(d) => {
                    cols[0].push(d.training_time_reduction_pct);
                    cols[1].push(d.comm_overhead_reduction_pct);
                    cols[2].push(d.convergence_rounds_reduction_pct);
                    cols[3].push(d.accuracy_delta_pp);
                    if run.accuracy_flagged() {
                        flagged.push(seed);
                    }
                }
                None => non_comparable.push(seed),
            }
        }
        SweepSummary {
            name: name.to_string(),
            mode: runs
                .first()
                .map(|(_, r)| r.config.mode)
                .unwrap_or(Mode::AsyncAdaptive),
            seeds: runs.iter().map(|(s, _)| *s).collect(),
            non_comparable,
            accuracy_flagged: flagged,
            training_time: Stat::of(&cols[0]),
            comm_overhead: Stat::of(&cols[1]),
            convergence_rounds: Stat::of(&cols[2]),
            accuracy_delta: Stat::of(&cols[3]),
        }
    }

    /// Mean accuracy delta within the band.
    pub fn accuracy_within_band(&self) -> bool {
        self.accuracy_delta
            .is_some_and(|s| s.mean.abs() <= ACCURACY_BAND_PP)
    }
}

pub const SUMMARY_HEADER: &str = "name,mode,seeds,comparable,\
training_time_reduction_mean,training_time_reduction_min,training_time_reduction_max,\
comm_overhead_reduction_mean,comm_overhead_reduction_min,comm_overhead_reduction_max,\
convergence_rounds_reduction_mean,convergence_rounds_reduction_min,convergence_rounds_reduction_max,\
accuracy_delta_pp_mean,accuracy_delta_pp_min,accuracy_delta_pp_max,\
non_comparable_seeds,accuracy_flagged_seeds";

fn seed_list(seeds: &[u64]) -> String {
    seeds
        .iter()
        .map(u64::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

fn stat_cells(s: Option<Stat>) -> [String; 3] {
    match s {
        Some(s) => [s.mean.to_string(), s.min.to_string(), s.max.to_string()],
        None => Default::default(),
    }
}

pub fn summary_csv_string(summaries: &[SweepSummary]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for s in summaries {
        let mut cells = vec![
            s.name.replace(',', ";"),
            s.mode.to_string(),
            seed_list(&s.seeds),
            (s.seeds.len() - s.non_comparable.len()).to_string(),
        ];
        for st in [
            s.training_time,
            s.comm_overhead,
            s.convergence_rounds,
            s.accuracy_delta,
        ] {
            cells.extend(stat_cells(st));
        }
        cells.push(seed_list(&s.non_comparable));
        cells.push(seed_list(&s.accuracy_flagged));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn summary_table(summaries: &[SweepSummary]) -> String {
    let mut out = String::new();
    for s in summaries {
        let comparable = s.seeds.len() - s.non_comparable.len();
        let _ = writeln!(
            out,
            "{} ({} vs synchronous), seeds [{}], {}/{} comparable",
            s.name,
            s.mode,
            seed_list(&s.seeds),
            comparable,
            s.seeds.len()
        );
        let rows = [
            ("training time reduction", s.training_time, "%"),
            ("comm overhead reduction", s.comm_overhead, "%"),
            ("convergence reduction", s.convergence_rounds, "%"),
            ("accuracy delta", s.accuracy_delta, " pp"),
        ];
        for (label, st, unit) in rows {
            match st {
                Some(st) => {
                    let _ = writeln!(
                        out,
                        "  {label:<24} mean {:>8.2}{unit}  min {:>8.2}{unit}  max {:>8.2}{unit}",
                        st.mean, st.min, st.max
                    );
                }
                None => {
                    let _ = writeln!(out, "  {label:<24} n/a");
                }
            }
        }
        if !s.non_comparable.is_empty() {
            let _ = writeln!(
                out,
                "  did not converge: seeds [{}]",
                seed_list(&s.non_comparable)
            );
        }
        if !s.accuracy_flagged.is_empty() {
            let _ = writeln!(
                out,
                "  FLAG accuracy delta outside +/-{ACCURACY_BAND_PP} pp: seeds [{}]",
                seed_list(&s.accuracy_flagged)
            );
        }
    }
    out
}

/// One configuration run over several seeds.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub summaries: Vec<SweepSummary>,
    /// `(name, seed, outcome)` in sweep order.
    pub runs: Vec<(String, u64, RunOutcome)>,
}

impl SweepResult {
    pub fn all_converged(&self) -> bool {
        self.runs.iter().all(|(_, _, r)| r.converged())
    }
}

/// `<out>/<name>/seed_<seed>`, with `name` reduced to `[A-Za-z0-9_-]`.
pub fn seed_dir(out: &Path, name: &str, seed: u64) -> PathBuf {
    let safe: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    out.join(safe).join(format!("seed_{seed}"))
}

/// Runs every config under every seed (in parallel), writes per-run
/// directories when `out` is given, and summarizes per config.
pub fn run_sweep(
    configs: &[ExperimentConfig],
    seeds: &[u64],
    out: Option<&Path>,
) -> Result<SweepResult> {
    if seeds.is_empty() {
        return Err(Error::invalid("a sweep needs at least one seed"));
    }
    let jobs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let outcomes: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let config = configs[c].clone().with_seed(seed);
            let outcome = execute(&config)?;
            if let Some(out) = out {
                write_outputs(&outcome, &seed_dir(out, &config.name, seed))?;
            }
            Ok(outcome)
        })
        .collect::<Result<_>>()?;

    let runs: Vec<(String, u64, RunOutcome)> = jobs
        .iter()
        .zip(outcomes)
        .map(|(&(c, seed), o)| (configs[c].name.clone(), seed, o))
        .collect();
    let summaries = configs
        .iter()
        .enumerate()
        .map(|(c, cfg)| {
            let mine: Vec<(u64, &RunOutcome)> = jobs
                .iter()
                .zip(&runs)
                .filter(|((ci, _), _)| *ci == c)
                .map(|((_, seed), (_, _, o))| (*seed, o))
                .collect();
            SweepSummary::from_runs(&cfg.name, &mine)
        })
        .collect::<Vec<_>>();

    if let Some(out) = out {
        create_dir(out)?;
        write(&out.join("summary.csv"), &summary_csv_string(&summaries))?;
        write(&out.join("summary.txt"), &summary_table(&summaries))?;
    }
    Ok(SweepResult { summaries, runs })
}

/// Parses `a..b` (inclusive), `a..=b`, a comma list, or a single seed.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || {
        Error::invalid(format!(
            "invalid seed list `{text}` (expected e.g. 1..5 or 1,2,3)"
        ))
    };
    let text = text.trim();
    if let Some((a, b)) = text.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let lo: u64 = a.trim().parse().map_err(|_| bad())?;
        let hi: u64 = b.trim().parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    let seeds = text
        .split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}
