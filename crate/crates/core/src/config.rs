//! Experiment configuration: TOML schema, defaults, validation and the
//! named domain presets.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::boost::DEFAULT_EPS_FLOOR;
use crate::error::{Error, Result};
use crate::scheduler::SchedulerParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Synchronous,
    AsyncFixed,
    AsyncAdaptive,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Synchronous => "synchronous",
            Mode::AsyncFixed => "async_fixed",
            Mode::AsyncAdaptive => "async_adaptive",
        }
    }

    /// Short tag used in output file names.
    pub fn file_tag(&self) -> &'static str {
        match self {
            Mode::Synchronous => "baseline",
            Mode::AsyncFixed => "fixed",
            Mode::AsyncAdaptive => "adaptive",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synchronous" => Ok(Mode::Synchronous),
            "async_fixed" => Ok(Mode::AsyncFixed),
            "async_adaptive" => Ok(Mode::AsyncAdaptive),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (expected synchronous, async_fixed or async_adaptive)"
            ))),
        }
    }
}

/// Closed interval `[lo, hi]` written as a two-element array.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    pub const fn fixed(v: f64) -> Self {
        Range { lo: v, hi: v }
    }
}

impl From<[f64; 2]> for Range {
    fn from(v: [f64; 2]) -> Self {
        Range { lo: v[0], hi: v[1] }
    }
}

impl From<Range> for [f64; 2] {
    fn from(r: Range) -> Self {
        [r.lo, r.hi]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub n: usize,
    pub dimension: usize,
    pub sigma: f64,
    /// Negative samples per positive sample.
    pub imbalance_ratio: f64,
    /// Share of generated samples held out on the server for validation.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            n: 2000,
            dimension: 2,
            sigma: 0.8,
            imbalance_ratio: 1.0,
            validation_fraction: 0.2,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionSpec {
    pub clients: usize,
    pub concentration: f64,
    pub seed: u64,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        PartitionSpec {
            clients: 5,
            concentration: 0.5,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClientSpec {
    /// Seconds per local boosting round.
    pub compute_time: Range,
    /// One-way link latency in seconds.
    pub link_latency: Range,
    /// Per-round dropout probability.
    pub dropout: Range,
    /// Rounds lost per dropout event (1 = independent dropouts).
    pub dropout_burst: u32,
    pub seed: u64,
}

impl Default for ClientSpec {
    fn default() -> Self {
        ClientSpec {
            compute_time: Range::new(0.5, 2.0),
            link_latency: Range::new(0.1, 1.0),
            dropout: Range::fixed(0.1),
            dropout_burst: 1,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmSpec {
    /// Staleness decay constant.
    pub lambda: f64,
    pub eps_floor: f64,
    pub initial_interval: u32,
}

impl Default for AlgorithmSpec {
    fn default() -> Self {
        AlgorithmSpec {
            lambda: 0.1,
            eps_floor: DEFAULT_EPS_FLOOR,
            initial_interval: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StopSpec {
    pub max_aggregations: u64,
    /// Virtual seconds.
    pub max_virtual_time: f64,
    pub stop_at_convergence: bool,
}

impl Default for StopSpec {
    fn default() -> Self {
        StopSpec {
            max_aggregations: 5000,
            max_virtual_time: 86_400.0,
            stop_at_convergence: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationUnit {
    Aggregations,
    LocalRounds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceParams {
    pub target_error: f64,
    pub plateau_tol: f64,
    pub window: usize,
    /// What "convergence iterations" counts in reports.
    pub iteration_unit: IterationUnit,
}

impl Default for ConvergenceParams {
    fn default() -> Self {
        ConvergenceParams {
            target_error: 0.10,
            plateau_tol: 1e-4,
            window: 5,
            iteration_unit: IterationUnit::Aggregations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub name: String,
    pub mode: Mode,
    pub dataset: DatasetSpec,
    pub partition: PartitionSpec,
    pub clients: ClientSpec,
    pub algorithm: AlgorithmSpec,
    pub scheduler: SchedulerParams,
    pub stop: StopSpec,
    pub convergence: ConvergenceParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "default".into(),
            mode: Mode::AsyncAdaptive,
            dataset: DatasetSpec::default(),
            partition: PartitionSpec::default(),
            clients: ClientSpec::default(),
            algorithm: AlgorithmSpec::default(),
            scheduler: SchedulerParams::default(),
            stop: StopSpec::default(),
            convergence: ConvergenceParams::default(),
        }
    }
}

/// Every config key with its default, as shown by `--help`.
pub const CONFIG_REFERENCE: &str = "\
CONFIG FILE (TOML; unknown keys are rejected)
  name = \"default\"                 label copied into reports
  mode = \"async_adaptive\"          synchronous | async_fixed | async_adaptive
  [dataset]
    n = 2000                       generated samples (before the validation split)
    dimension = 2                  features per sample
    sigma = 0.8                    per-coordinate std-dev around (+1,..) / (-1,..)
    imbalance_ratio = 1.0          negatives per positive
    validation_fraction = 0.2      server-held validation share
    seed = 42                      'data' and 'split' streams
  [partition]
    clients = 5                    number of clients
    concentration = 0.5            Dirichlet label-skew concentration
    seed = 42                      'partition' stream
  [clients]
    compute_time = [0.5, 2.0]      seconds per local round, drawn per client
    link_latency = [0.1, 1.0]      one-way seconds, drawn per client
    dropout = [0.1, 0.1]           per-round dropout probability, drawn per client
    dropout_burst = 1              rounds lost per dropout event
    seed = 42                      'latency' and 'dropout/<id>' streams
  [algorithm]
    lambda = 0.1                   staleness decay constant
    eps_floor = 1e-6               error clamp for learner weights
    initial_interval = 1           local rounds between uploads at start
  [scheduler]
    theta1 = 0.0                   grow interval when error change < theta1
    theta2 = 0.005                 shrink interval when error change > theta2
    step_up = 1                    growth step
    step_down = 2                  shrink step
    i_min = 1                      lower interval bound
    i_max = 16                     upper interval bound
  [stop]
    max_aggregations = 5000        server aggregation budget
    max_virtual_time = 86400.0     virtual seconds
    stop_at_convergence = true     end the run once converged
  [convergence]
    target_error = 0.10            validation error target
    plateau_tol = 1e-4             |change| counted as flat
    window = 5                     consecutive flat steps for a plateau
    iteration_unit = \"aggregations\"  aggregations | local_rounds
";

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

fn check_range(name: &str, r: &Range, min: f64) -> Result<()> {
    check(r.lo.is_finite() && r.hi.is_finite(), || {
        format!("{name} must be finite")
    })?;
    check(r.lo <= r.hi, || {
        format!("{name}: lower bound {} exceeds upper bound {}", r.lo, r.hi)
    })?;
    check(r.lo >= min, || format!("{name}: values must be >= {min}"))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Sets every seed in the config.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.dataset.seed = seed;
        self.partition.seed = seed;
        self.clients.seed = seed;
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    /// Scheduler parameters in effect for `mode`.
    pub fn effective_scheduler(&self, mode: Mode) -> SchedulerParams {
        match mode {
            Mode::AsyncAdaptive => self.scheduler,
            Mode::AsyncFixed | Mode::Synchronous => self.scheduler.frozen(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        check(d.n >= 2, || {
            format!("dataset.n must be at least 2, got {}", d.n)
        })?;
        check(d.dimension >= 1, || {
            "dataset.dimension must be positive".into()
        })?;
        check(d.sigma > 0.0 && d.sigma.is_finite(), || {
            format!("dataset.sigma must be positive, got {}", d.sigma)
        })?;
        check(
            d.imbalance_ratio > 0.0 && d.imbalance_ratio.is_finite(),
            || {
                format!(
                    "dataset.imbalance_ratio must be positive, got {}",
                    d.imbalance_ratio
                )
            },
        )?;
        check(
            d.validation_fraction > 0.0 && d.validation_fraction < 1.0,
            || {
                format!(
                    "dataset.validation_fraction must be in (0, 1), got {}",
                    d.validation_fraction
                )
            },
        )?;
        let (pos, neg) = crate::datagen::class_counts(d.n, d.imbalance_ratio);
        let train_share = 1.0 - d.validation_fraction;
        let expected_min = ((pos.min(neg) as f64) * train_share).floor() as usize;

        let p = &self.partition;
        check(p.clients >= 1, || {
            "partition.clients must be positive".into()
        })?;
        check(p.concentration > 0.0 && p.concentration.is_finite(), || {
            format!(
                "partition.concentration must be positive, got {}",
                p.concentration
            )
        })?;
        check(p.clients <= expected_min.max(1), || {
            format!(
                "partition.clients ({}) exceeds the expected smallest per-label training count ({expected_min})",
                p.clients
            )
        })?;

        let c = &self.clients;
        check_range("clients.compute_time", &c.compute_time, 0.0)?;
        check(c.compute_time.lo > 0.0, || {
            "clients.compute_time must be positive".into()
        })?;
        check_range("clients.link_latency", &c.link_latency, 0.0)?;
        check_range("clients.dropout", &c.dropout, 0.0)?;
        check(c.dropout.hi <= 1.0, || {
            "clients.dropout must be <= 1".into()
        })?;
        check(c.dropout_burst >= 1, || {
            "clients.dropout_burst must be positive".into()
        })?;

        let a = &self.algorithm;
        check(a.lambda >= 0.0 && a.lambda.is_finite(), || {
            format!("algorithm.lambda must be nonnegative, got {}", a.lambda)
        })?;
        check(a.eps_floor > 0.0 && a.eps_floor < 0.5, || {
            format!(
                "algorithm.eps_floor must be in (0, 0.5), got {}",
                a.eps_floor
            )
        })?;
        check(a.initial_interval >= 1, || {
            "algorithm.initial_interval must be positive".into()
        })?;

        self.scheduler.validate()?;
        check(
            (self.scheduler.i_min..=self.scheduler.i_max).contains(&a.initial_interval),
            || {
                format!(
                    "algorithm.initial_interval ({}) must lie within [scheduler.i_min, scheduler.i_max]",
                    a.initial_interval
                )
            },
        )?;

        let s = &self.stop;
        check(
            s.max_virtual_time > 0.0 && s.max_virtual_time.is_finite(),
            || "stop.max_virtual_time must be positive and finite".into(),
        )?;

        let v = &self.convergence;
        check((0.0..=1.0).contains(&v.target_error), || {
            format!(
                "convergence.target_error must be in [0, 1], got {}",
                v.target_error
            )
        })?;
        check(v.plateau_tol >= 0.0, || {
            "convergence.plateau_tol must be nonnegative".into()
        })?;
        check(v.window >= 1, || {
            "convergence.window must be positive".into()
        })?;
        Ok(())
    }
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_toml_str(&text)
        .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(e))))
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

pub const PRESET_NAMES: [&str; 5] = ["edge_vision", "blockchain", "mobile", "iot", "healthcare"];

/// Named domain configurations. Each encodes one qualitative stressor;
/// the numbers are modelling choices, not measured deployments.
///
/// | preset      | clients | link latency (s) | dropout        | other                   |
/// |-------------|---------|------------------|----------------|-------------------------|
/// | edge_vision | 5       | 0.1 - 1.0        | 0.1            |                         |
/// | blockchain  | 5       | 1.0 - 10.0       | 0.05           |                         |
/// | mobile      | 20      | 0.2 - 1.5        | 0.3            | 4000 samples            |
/// | iot         | 10      | 0.1 - 0.8        | 0.15, burst 4  | 1000 samples            |
/// | healthcare  | 4       | 0.1 - 0.5        | 0.02           | 1:4 imbalance, 4000 s.  |
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let base = ExperimentConfig::default();
    let mut c = match name {
        "edge_vision" => base,
        "blockchain" => ExperimentConfig {
            clients: ClientSpec {
                link_latency: Range::new(1.0, 10.0),
                dropout: Range::fixed(0.05),
                ..ClientSpec::default()
            },
            ..base
        },
        "mobile" => ExperimentConfig {
            dataset: DatasetSpec {
                n: 4000,
                ..DatasetSpec::default()
            },
            partition: PartitionSpec {
                clients: 20,
                ..PartitionSpec::default()
            },
            clients: ClientSpec {
                compute_time: Range::new(0.5, 3.0),
                link_latency: Range::new(0.2, 1.5),
                dropout: Range::fixed(0.3),
                ..ClientSpec::default()
            },
            ..base
        },
        "iot" => ExperimentConfig {
            dataset: DatasetSpec {
                n: 1000,
                ..DatasetSpec::default()
            },
            partition: PartitionSpec {
                clients: 10,
                ..PartitionSpec::default()
            },
            clients: ClientSpec {
                compute_time: Range::new(0.2, 1.0),
                link_latency: Range::new(0.1, 0.8),
                dropout: Range::fixed(0.15),
                dropout_burst: 4,
                ..ClientSpec::default()
            },
            ..base
        },
        "healthcare" => ExperimentConfig {
            dataset: DatasetSpec {
                n: 4000,
                imbalance_ratio: 4.0,
                ..DatasetSpec::default()
            },
            partition: PartitionSpec {
                clients: 4,
                concentration: 1.0,
                ..PartitionSpec::default()
            },
            clients: ClientSpec {
                compute_time: Range::new(1.0, 3.0),
                link_latency: Range::new(0.1, 0.5),
                dropout: Range::fixed(0.02),
                ..ClientSpec::default()
            },
            ..base
        },
        other => {
            return Err(Error::Config(format!(
                "unknown preset `{other}`; valid presets: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    c.name = name.to_string();
    c.validate()?;
    Ok(c)
}
