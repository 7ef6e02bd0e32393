//! Synthetic datasets, non-IID client shards, and the dataset CSV format.
//!
//! CSV layout: header `f0,...,f{d-1},label`, comma separated, no quoting.
//! Feature values are written with 17 significant digits so that a
//! write/read cycle reproduces every finite `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Resampling attempts before shard repair falls back to moving samples.
pub const PARTITION_RETRIES: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: i8,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: i8) -> Result<Self> {
        if label != 1 && label != -1 {
            return Err(Error::invalid(format!(
                "label must be -1 or +1, got {label}"
            )));
        }
        Ok(Sample { features, label })
    }
}

/// A nonempty, ordered collection of samples sharing one dimension.
/// Sample positions are stable identifiers.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dimension: usize,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::invalid("dataset must contain at least one sample"))?;
        let dimension = first.features.len();
        if dimension == 0 {
            return Err(Error::invalid("dataset dimension must be positive"));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dimension {
                return Err(Error::invalid(format!(
                    "sample {i} has {} features, expected {dimension}",
                    s.features.len()
                )));
            }
            if s.label != 1 && s.label != -1 {
                return Err(Error::invalid(format!("sample {i} has label {}", s.label)));
            }
        }
        Ok(Dataset { dimension, samples })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn label_count(&self, label: i8) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }

    /// Dataset made of the samples at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(indices.iter().map(|&i| self.samples[i].clone()).collect())
    }

    /// Concatenation of several datasets of the same dimension.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Dataset>) -> Result<Dataset> {
        let samples = parts
            .into_iter()
            .flat_map(|d| d.samples.iter().cloned())
            .collect();
        Dataset::new(samples)
    }
}

/// Balanced two-Gaussian dataset: `n / 2` samples of class +1 around
/// `(+1, ..., +1)` followed by `n / 2` samples of class -1 around
/// `(-1, ..., -1)`.
pub fn generate_gaussians(n: usize, dimension: usize, sigma: f64, seed: u64) -> Result<Dataset> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "n must be even and at least 2, got {n}"
        )));
    }
    generate_two_class(n / 2, n / 2, dimension, sigma, seed)
}

/// Same generator with explicit class counts, used for label imbalance.
/// Draws come from the `"data"` stream: all positive samples first, each
/// sample's coordinates in order.
pub fn generate_two_class(
    positives: usize,
    negatives: usize,
    dimension: usize,
    sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    if positives == 0 || negatives == 0 {
        return Err(Error::invalid("both classes need at least one sample"));
    }
    if dimension == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let mut rng = Stream::new(seed, "data");
    let mut samples = Vec::with_capacity(positives + negatives);
    for (label, count) in [(1i8, positives), (-1i8, negatives)] {
        let center = f64::from(label);
        for _ in 0..count {
            let features = (0..dimension)
                .map(|_| center + sigma * rng.normal())
                .collect();
            samples.push(Sample { features, label });
        }
    }
    Dataset::new(samples)
}

/// Class counts for `n` samples at a given negatives-per-positive ratio.
pub fn class_counts(n: usize, imbalance_ratio: f64) -> (usize, usize) {
    let positives = ((n as f64) / (1.0 + imbalance_ratio)).round() as usize;
    let positives = positives.clamp(1, n.saturating_sub(1).max(1));
    (positives, n - positives)
}

/// Random disjoint split into `(train, holdout)` with `round(fraction * n)`
/// holdout samples, drawn from the `"split"` stream. Both sides keep the
/// original relative order.
pub fn split_holdout(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!(
            "holdout fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n = dataset.len();
    let holdout = ((n as f64) * fraction).round() as usize;
    if holdout == 0 || holdout >= n {
        return Err(Error::invalid(format!(
            "holdout fraction {fraction} leaves an empty side for {n} samples"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Stream::new(seed, "split").shuffle(&mut order);
    let mut held: Vec<usize> = order[..holdout].to_vec();
    let mut kept: Vec<usize> = order[holdout..].to_vec();
    held.sort_unstable();
    kept.sort_unstable();
    Ok((dataset.subset(&kept)?, dataset.subset(&held)?))
}

/// Label-skewed split into `clients` shards.
///
/// For each label (-1 first, then +1) the indices of that label are
/// shuffled and cut into `clients` contiguous runs whose sizes follow a
/// symmetric Dirichlet draw. The whole draw is repeated up to
/// [`PARTITION_RETRIES`] times until every shard holds both labels; after
/// that, missing labels are filled by moving one sample at a time from the
/// shard holding the most samples of that label. Shards list their samples
/// in original dataset order.
pub fn partition_dirichlet(
    dataset: &Dataset,
    clients: usize,
    concentration: f64,
    seed: u64,
) -> Result<Vec<Dataset>> {
    let assignment = partition_assignment(dataset, clients, concentration, seed)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); clients];
    for (i, &shard) in assignment.iter().enumerate() {
        members[shard].push(i);
    }
    members.iter().map(|idx| dataset.subset(idx)).collect()
}

/// Shard index for every sample; see [`partition_dirichlet`].
pub fn partition_assignment(
    dataset: &Dataset,
    clients: usize,
    concentration: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    if clients == 0 {
        return Err(Error::invalid("client count must be positive"));
    }
    if !(concentration.is_finite() && concentration > 0.0) {
        return Err(Error::invalid(format!(
            "concentration must be positive, got {concentration}"
        )));
    }
    let by_label: Vec<Vec<usize>> = [-1i8, 1]
        .iter()
        .map(|&l| {
            (0..dataset.len())
                .filter(|&i| dataset.samples[i].label == l)
                .collect()
        })
        .collect();
    let min_count = by_label.iter().map(Vec::len).min().unwrap_or(0);
    if min_count == 0 {
        return Err(Error::Partition("dataset must contain both labels".into()));
    }
    if clients > min_count {
        return Err(Error::Partition(format!(
            "{clients} clients exceed the smallest label count {min_count}"
        )));
    }
    if clients == 1 {
        return Ok(vec![0; dataset.len()]);
    }

    let mut rng = Stream::new(seed, "partition");
    let mut assignment = vec![0usize; dataset.len()];
    for _ in 0..PARTITION_RETRIES {
        for indices in &by_label {
            let mut shuffled = indices.clone();
            rng.shuffle(&mut shuffled);
            let props = rng.dirichlet(concentration, clients);
            let n = shuffled.len();
            let mut start = 0usize;
            let mut cumulative = 0.0;
            for (shard, p) in props.iter().enumerate() {
                cumulative += p;
                let end = if shard + 1 == clients {
                    n
                } else {
                    ((cumulative * n as f64).floor() as usize).clamp(start, n)
                };
                for &i in &shuffled[start..end] {
                    assignment[i] = shard;
                }
                start = end;
            }
        }
        if missing_labels(dataset, &assignment, clients).is_empty() {
            return Ok(assignment);
        }
    }

    repair(dataset, &mut assignment, clients)?;
    Ok(assignment)
}

fn label_slot(label: i8) -> usize {
    usize::from(label == 1)
}

fn label_counts(dataset: &Dataset, assignment: &[usize], clients: usize) -> Vec<[usize; 2]> {
    let mut counts = vec![[0usize; 2]; clients];
    for (s, &shard) in dataset.samples.iter().zip(assignment) {
        counts[shard][label_slot(s.label)] += 1;
    }
    counts
}

fn missing_labels(dataset: &Dataset, assignment: &[usize], clients: usize) -> Vec<(usize, i8)> {
    let counts = label_counts(dataset, assignment, clients);
    let mut missing = Vec::new();
    for (shard, c) in counts.iter().enumerate() {
        for label in [-1i8, 1] {
            if c[label_slot(label)] == 0 {
                missing.push((shard, label));
            }
        }
    }
    missing
}

fn repair(dataset: &Dataset, assignment: &mut [usize], clients: usize) -> Result<()> {
    loop {
        let missing = missing_labels(dataset, assignment, clients);
        let Some(&(target, label)) = missing.first() else {
            return Ok(());
        };
        let counts = label_counts(dataset, assignment, clients);
        let slot = label_slot(label);
        // Donor: most samples of this label, lowest shard index on ties.
        let donor = (0..clients)
            .filter(|&s| counts[s][slot] >= 2)
            .max_by(|&a, &b| counts[a][slot].cmp(&counts[b][slot]).then(b.cmp(&a)))
            .ok_or_else(|| {
                Error::Partition(format!(
                    "cannot give shard {target} a sample of label {label}"
                ))
            })?;
        // Move the donor's last sample of that label.
        let moved = (0..assignment.len())
            .rev()
            .find(|&i| assignment[i] == donor && dataset.samples[i].label == label)
            .expect("donor holds at least two samples of the label");
        assignment[moved] = target;
    }
}

fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let header: Vec<String> = (0..dataset.dimension).map(|j| format!("f{j}")).collect();
    out.push_str(&header.join(","));
    out.push_str(",label\n");
    for s in &dataset.samples {
        for x in &s.features {
            out.push_str(&format_real(*x));
            out.push(',');
        }
        let _ = writeln!(out, "{}", s.label);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let Some((_, header)) = lines.next() else {
        return Err(Error::NoSamples {
            path: path.to_path_buf(),
        });
    };
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.len() < 2 || columns.last() != Some(&"label") {
        return Err(parse_err(1, "header must be f0,...,f{d-1},label".into()));
    }
    for (j, c) in columns[..columns.len() - 1].iter().enumerate() {
        if *c != format!("f{j}") {
            return Err(parse_err(1, format!("unexpected column name `{c}`")));
        }
    }
    let width = columns.len();

    let mut samples = Vec::new();
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != width {
            return Err(parse_err(
                line_no,
                format!("expected {width} columns, found {}", fields.len()),
            ));
        }
        let features = fields[..width - 1]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(line_no, format!("invalid number `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let label = match fields[width - 1] {
            "1" | "+1" => 1,
            "-1" => -1,
            other => {
                return Err(parse_err(
                    line_no,
                    format!("label must be -1 or +1, got `{other}`"),
                ))
            }
        };
        samples.push(Sample { features, label });
    }
    if samples.is_empty() {
        return Err(Error::NoSamples {
            path: path.to_path_buf(),
        });
    }
    Dataset::new(samples)
}
