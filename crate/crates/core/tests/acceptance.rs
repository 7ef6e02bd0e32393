//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any criterion fails.

mod common;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use fedboost::boost::{decayed_weight, learner_weight, update_distribution};
use fedboost::config::{preset, ExperimentConfig, Mode, Range};
use fedboost::datagen::{Dataset, Sample};
use fedboost::experiment::{self, ACCURACY_BAND_PP};
use fedboost::rng::Stream;
use fedboost::scheduler::{next_interval, SchedulerParams, SchedulerState};
use fedboost::sim::{Federation, SimTrace, Simulation};
use fedboost::stump::{DistributionVector, Stump};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check, Duration);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Criterion 1: One client, interval 1, no decay, no dropout: the simulator's rounds
/// equal textbook AdaBoost.
fn classical_equivalence() -> Check {
    let mut cfg = ExperimentConfig::default().with_mode(Mode::AsyncFixed);
    cfg.dataset.n = 200;
    cfg.dataset.seed = 42;
    cfg.partition.clients = 1;
    cfg.clients.dropout = Range::fixed(0.0);
    cfg.algorithm.lambda = 0.0;
    cfg.algorithm.initial_interval = 1;
    cfg.stop.stop_at_convergence = false;
    cfg.stop.max_aggregations = 10;
    let fed = Federation::build(&cfg).map_err(|e| e.to_string())?;
    let trace = Simulation::new(&cfg)
        .with_federation(&fed)
        .record_distributions(true)
        .run()
        .map_err(|e| e.to_string())?;

    let shard = &fed.shards[0];
    let xs: Vec<Vec<f64>> = shard.samples().iter().map(|s| s.features.clone()).collect();
    let ys: Vec<i8> = shard.samples().iter().map(|s| s.label).collect();
    let oracle = common::classical_adaboost(&xs, &ys, 10, cfg.algorithm.eps_floor);
    ensure(trace.learners.len() >= 10, || {
        format!("only {} learners", trace.learners.len())
    })?;
    let tol = 1e-12;
    for (t, (got, want)) in trace.learners.iter().zip(&oracle).enumerate() {
        let s = Stump::new(want.feature, want.threshold, want.polarity);
        ensure(got.stump.same_as(&s), || {
            format!("round {t}: stump {:?} vs {s:?}", got.stump)
        })?;
        ensure(
            common::rel_close(got.raw_epsilon, want.epsilon, tol),
            || format!("round {t}: eps {} vs {}", got.raw_epsilon, want.epsilon),
        )?;
        ensure(common::rel_close(got.alpha, want.alpha, tol), || {
            format!("round {t}: alpha {} vs {}", got.alpha, want.alpha)
        })?;
        let d = got
            .distribution
            .as_ref()
            .ok_or("distribution not recorded")?;
        for (i, (a, b)) in d.iter().zip(&want.dist).enumerate() {
            ensure(common::rel_close(*a, *b, tol), || {
                format!("round {t}: D[{i}] {a} vs {b}")
            })?;
        }
    }
    // The global ensemble carries the same learners with undecayed weights.
    for (m, want) in trace.ensemble.members().iter().zip(&oracle) {
        ensure(
            m.tau == 0 && common::rel_close(m.effective_weight, want.alpha, tol),
            || {
                format!(
                    "member tau {} weight {} vs {}",
                    m.tau, m.effective_weight, want.alpha
                )
            },
        )?;
    }
    Ok(format!(
        "10 rounds on {} samples match exactly",
        shard.len()
    ))
}

/// Criterion 2: Random update_distribution calls always return a distribution.
fn normalization() -> Check {
    let mut rng = Stream::new(2024, "normalization");
    let calls = 12_000;
    let mut worst: f64 = 0.0;
    for call in 0..calls {
        let n = 1 + rng.below(150);
        let dim = 1 + rng.below(3);
        let samples = (0..n)
            .map(|_| {
                let f = (0..dim).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
                let l = if rng.uniform() < 0.5 { -1 } else { 1 };
                Sample::new(f, l).unwrap()
            })
            .collect();
        let ds = Dataset::new(samples).unwrap();
        // Mix flat, skewed and nearly degenerate weight vectors.
        let raw: Vec<f64> = match call % 3 {
            0 => (0..n).map(|_| rng.uniform()).collect(),
            1 => (0..n).map(|_| (30.0 * rng.uniform()).exp()).collect(),
            _ => (0..n)
                .map(|i| if i == 0 { 1.0 } else { 1e-300 * rng.uniform() })
                .collect(),
        };
        let sum: f64 = raw.iter().sum();
        let dist = DistributionVector::new(raw.iter().map(|w| w / sum).collect())
            .map_err(|e| format!("call {call}: bad input {e}"))?;
        let threshold = match rng.below(4) {
            0 => f64::NEG_INFINITY,
            1 => f64::INFINITY,
            _ => rng.uniform_range(-3.0, 3.0),
        };
        let stump = Stump::new(
            rng.below(dim),
            threshold,
            if rng.uniform() < 0.5 { 1 } else { -1 },
        );
        let alpha = match rng.below(3) {
            0 => learner_weight(rng.uniform() * 0.5, 1e-6).unwrap(),
            1 => rng.uniform_range(-40.0, 40.0),
            _ => learner_weight(0.0, 1e-6).unwrap(),
        };
        let out = update_distribution(&dist, &stump, alpha, &ds)
            .map_err(|e| format!("call {call}: {e}"))?;
        let w = out.dist.weights();
        ensure(w.iter().all(|&v| v >= 0.0 && v.is_finite()), || {
            format!("call {call}: negative weight")
        })?;
        let dev = (w.iter().sum::<f64>() - 1.0).abs();
        worst = worst.max(dev);
        ensure(dev <= 1e-9, || format!("call {call}: sum off by {dev:e}"))?;
    }
    Ok(format!("{calls} calls, worst |sum - 1| = {worst:.2e}"))
}

/// Criterion 3: Decay law on the grid.
fn decay_law() -> Check {
    let mut points = 0;
    for lambda in [0.0, 0.05, 0.1, 0.5] {
        for alpha in [0.0, 0.1, 1.0, 3.0] {
            let mut prev = f64::INFINITY;
            for tau in 0..=20u64 {
                let got = decayed_weight(alpha, tau, lambda);
                let want = alpha * (-lambda * tau as f64).exp();
                ensure(common::rel_close(got, want, 1e-12), || {
                    format!("lambda {lambda} alpha {alpha} tau {tau}: {got} vs {want}")
                })?;
                if alpha > 0.0 && lambda > 0.0 {
                    ensure(got < prev, || {
                        format!("not decreasing at lambda {lambda} alpha {alpha} tau {tau}")
                    })?;
                }
                prev = got;
                points += 1;
            }
        }
    }
    Ok(format!("{points} grid points"))
}

/// Criterion 4: Interval controller: worked examples plus a fuzz against the rule.
fn scheduler_rule() -> Check {
    let p = SchedulerParams::default();
    let st = |interval, last| SchedulerState {
        interval,
        last_error: Some(last),
    };
    let cases = [
        (4, 0.20, 0.19, 5),
        (4, 0.20, 0.21, 2),
        (4, 0.20, 0.203, 4),
        (16, 0.20, 0.10, 16),
    ];
    for (i, last, eps, want) in cases {
        let got = next_interval(st(i, last), &p, eps).interval;
        ensure(got == want, || {
            format!("I={i} last={last} eps={eps}: {got} != {want}")
        })?;
    }
    let first = next_interval(SchedulerState::new(4, &p), &p, 0.3);
    ensure(first.interval == 4 && first.last_error == Some(0.3), || {
        "first evaluation moved the interval".into()
    })?;

    let mut rng = Stream::new(7, "scheduler-fuzz");
    let params = SchedulerParams {
        theta1: -0.002,
        theta2: 0.004,
        step_up: 2,
        step_down: 3,
        i_min: 2,
        i_max: 11,
    };
    let mut s = SchedulerState::new(5, &params);
    let mut err = 0.4;
    let mut branches = [0usize; 3];
    for step in 0..1000 {
        err = (err + rng.uniform_range(-0.01, 0.01)).clamp(0.0, 1.0);
        let before = s;
        s = next_interval(s, &params, err);
        let want = match before.last_error {
            None => before.interval,
            Some(last) => {
                let d = err - last;
                let raw = if d < params.theta1 {
                    branches[0] += 1;
                    before.interval + params.step_up
                } else if d > params.theta2 {
                    branches[1] += 1;
                    before.interval.saturating_sub(params.step_down).max(1)
                } else {
                    branches[2] += 1;
                    before.interval
                };
                raw.clamp(params.i_min, params.i_max)
            }
        };
        ensure(s.interval == want, || {
            format!("step {step}: {} != {want}", s.interval)
        })?;
        ensure((params.i_min..=params.i_max).contains(&s.interval), || {
            format!("step {step} out of bounds")
        })?;
    }
    ensure(branches.iter().all(|&b| b > 0), || {
        format!("fuzz missed a branch: {branches:?}")
    })?;
    Ok(format!(
        "4 examples, 1000 fuzz steps (grow/shrink/hold = {branches:?})"
    ))
}

/// Criterion 5: Default experiment over seeds 1..5 against the synchronous baseline.
fn default_experiment() -> Check {
    let cfg = ExperimentConfig::default();
    let seeds: Vec<u64> = (1..=5).collect();
    let res = experiment::run_sweep(&[cfg], &seeds, None).map_err(|e| e.to_string())?;
    for (_, seed, run) in &res.runs {
        match run.report.deltas() {
            Some(d) => println!(
                "    seed {seed}: time {:+.1}%  bytes {:+.1}%  aggregations {:+.1}%  accuracy {:+.2} pp{}",
                d.training_time_reduction_pct,
                d.comm_overhead_reduction_pct,
                d.convergence_rounds_reduction_pct,
                d.accuracy_delta_pp,
                if run.accuracy_flagged() { "  [outside accuracy band]" } else { "" }
            ),
            None => println!("    seed {seed}: not comparable"),
        }
    }
    let s = &res.summaries[0];
    ensure(s.non_comparable.is_empty(), || {
        format!("seeds {:?} did not converge", s.non_comparable)
    })?;
    let time = s.training_time.unwrap().mean;
    let bytes = s.comm_overhead.unwrap().mean;
    let acc = s.accuracy_delta.unwrap().mean;
    let summary = format!(
        "mean time reduction {time:.1}% (>= 10), bytes {bytes:.1}% (>= 20), accuracy {acc:+.2} pp (within {ACCURACY_BAND_PP}); flagged seeds {:?}",
        s.accuracy_flagged
    );
    if time >= 10.0 && bytes >= 20.0 && s.accuracy_within_band() {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn multiset(trace: &SimTrace) -> Vec<(usize, u64, i8, u64)> {
    let mut v: Vec<_> = trace
        .ensemble
        .members()
        .iter()
        .map(|m| {
            let s = m.learner.stump;
            (
                s.feature,
                s.threshold.to_bits(),
                s.polarity,
                m.effective_weight.to_bits(),
            )
        })
        .collect();
    v.sort();
    v
}

/// Criterion 6: Without decay, latency or dropout, async with interval 1 builds the
/// same ensemble as the synchronous baseline.
fn async_sync_limit() -> Check {
    let rounds = 8u64;
    let mut total = 0;
    for (seed, clients) in [(42u64, 4usize), (3, 5), (11, 2)] {
        let mut cfg = ExperimentConfig::default().with_seed(seed);
        cfg.dataset.n = 600;
        cfg.partition.clients = clients;
        cfg.algorithm.lambda = 0.0;
        cfg.algorithm.initial_interval = 1;
        cfg.clients.link_latency = Range::fixed(0.0);
        cfg.clients.compute_time = Range::fixed(1.0);
        cfg.clients.dropout = Range::fixed(0.0);
        cfg.stop.stop_at_convergence = false;
        let fed = Federation::build(&cfg).map_err(|e| e.to_string())?;

        let mut sync_cfg = cfg.clone();
        sync_cfg.stop.max_aggregations = rounds;
        let sync = Simulation::new(&sync_cfg)
            .with_federation(&fed)
            .run_mode(Mode::Synchronous)
            .map_err(|e| e.to_string())?;
        let mut async_cfg = cfg.clone();
        async_cfg.stop.max_aggregations = rounds * clients as u64;
        let asy = Simulation::new(&async_cfg)
            .with_federation(&fed)
            .run_mode(Mode::AsyncFixed)
            .map_err(|e| e.to_string())?;

        let (a, b) = (multiset(&asy), multiset(&sync));
        ensure(!a.is_empty(), || "empty ensemble".into())?;
        ensure(a == b, || {
            format!(
                "seed {seed}: async {} members vs sync {} members differ",
                a.len(),
                b.len()
            )
        })?;
        total += a.len();
    }
    Ok(format!(
        "3 federations, {total} (stump, alpha) pairs identical"
    ))
}

fn read_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Criterion 7: Identical inputs give byte-identical output directories.
fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = 0;
    for name in ["edge_vision", "iot"] {
        let cfg = preset(name).map_err(|e| e.to_string())?;
        let mut trees = Vec::new();
        for rep in 0..2 {
            let single = tmp.path().join(format!("{name}-single-{rep}"));
            experiment::run_experiment(&cfg.clone().with_seed(42), &single)
                .map_err(|e| e.to_string())?;
            let sweep = tmp.path().join(format!("{name}-sweep-{rep}"));
            experiment::run_sweep(std::slice::from_ref(&cfg), &[1, 2, 3], Some(&sweep))
                .map_err(|e| e.to_string())?;
            trees.push((read_tree(&single), read_tree(&sweep)));
        }
        ensure(trees[0] == trees[1], || {
            format!("{name}: output trees differ")
        })?;
        ensure(!trees[0].0.is_empty(), || "nothing written".into())?;
        files += trees[0].0.len() + trees[0].1.len();
    }
    Ok(format!("2 presets, {files} files identical across repeats"))
}

/// Criterion 8: High-latency preset: the adaptive mode converges and uploads less
/// often than a fixed interval of 1.
fn blockchain_rate() -> Check {
    let cfg = preset("blockchain").map_err(|e| e.to_string())?;
    let fed = Federation::build(&cfg).map_err(|e| e.to_string())?;
    let converging = Simulation::new(&cfg)
        .with_federation(&fed)
        .run_mode(Mode::AsyncAdaptive)
        .map_err(|e| e.to_string())?;
    ensure(converging.converged_at.is_some(), || {
        "async_adaptive did not converge".into()
    })?;

    // Rates over one virtual hour of continued training.
    let mut horizon = cfg.clone();
    horizon.stop.stop_at_convergence = false;
    horizon.stop.max_virtual_time = 3600.0;
    let adaptive = Simulation::new(&horizon)
        .with_federation(&fed)
        .run_mode(Mode::AsyncAdaptive)
        .map_err(|e| e.to_string())?;
    let mut fixed_cfg = horizon.clone();
    fixed_cfg.algorithm.initial_interval = 1;
    let fixed = Simulation::new(&fixed_cfg)
        .with_federation(&fed)
        .run_mode(Mode::AsyncFixed)
        .map_err(|e| e.to_string())?;
    let rate = |t: &SimTrace| {
        let r = t.final_record();
        r.cumulative_uploads as f64 * 3600.0 / r.virtual_time
    };
    let (ra, rf) = (rate(&adaptive), rate(&fixed));
    let msg = format!(
        "converged at aggregation {}; uploads/virtual hour adaptive {ra:.0} vs fixed(1) {rf:.0}",
        converging.converged_at.unwrap()
    );
    if ra < rf {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        (
            "1 classical equivalence",
            classical_equivalence,
            Duration::from_secs(1),
        ),
        ("2 normalization", normalization, Duration::from_secs(5)),
        ("3 decay law", decay_law, Duration::from_secs(1)),
        ("4 scheduler rule", scheduler_rule, Duration::from_secs(1)),
        (
            "5 default experiment vs baseline",
            default_experiment,
            Duration::from_secs(60),
        ),
        (
            "6 async/sync equivalence limit",
            async_sync_limit,
            Duration::from_secs(5),
        ),
        ("7 determinism", determinism, Duration::from_secs(30)),
        (
            "8 blockchain upload rate",
            blockchain_rate,
            Duration::from_secs(30),
        ),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, check, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if took <= budget => (true, d),
            Ok(d) => (false, format!("{d}; took {took:.2?}, budget {budget:?}")),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {detail} [{took:.2?}]",
            if ok { "PASS" } else { "FAIL" }
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
