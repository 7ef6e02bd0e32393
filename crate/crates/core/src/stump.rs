//! Weighted decision stumps.

use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};

/// Tolerance on the sum of a [`DistributionVector`].
pub const DIST_SUM_TOL: f64 = 1e-9;

/// One-split classifier: `polarity` where `x[feature] > threshold`,
/// `-polarity` elsewhere. Thresholds of `-inf` / `+inf` give the constant
/// predictors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub polarity: i8,
}

impl Stump {
    pub fn new(feature: usize, threshold: f64, polarity: i8) -> Self {
        debug_assert!(polarity == 1 || polarity == -1);
        Stump {
            feature,
            threshold,
            polarity,
        }
    }

    #[inline]
    pub fn predict(&self, features: &[f64]) -> Result<i8> {
        let x = features.get(self.feature).ok_or(Error::DimensionMismatch {
            expected: self.feature + 1,
            actual: features.len(),
        })?;
        Ok(self.predict_unchecked(*x))
    }

    #[inline]
    pub(crate) fn predict_unchecked(&self, x: f64) -> i8 {
        if x > self.threshold {
            self.polarity
        } else {
            -self.polarity
        }
    }

    /// Bitwise identity, so that `-0.0` and `0.0` thresholds differ and
    /// infinite sentinels compare equal.
    pub fn same_as(&self, other: &Stump) -> bool {
        self.feature == other.feature
            && self.polarity == other.polarity
            && self.threshold.to_bits() == other.threshold.to_bits()
    }
}

/// Per-sample weights forming a probability distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionVector(Vec<f64>);

impl DistributionVector {
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "distribution over an empty dataset");
        DistributionVector(vec![1.0 / n as f64; n])
    }

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("distribution must be nonempty"));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::invalid(format!(
                "distribution weight {w} is not a finite nonnegative number"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > DIST_SUM_TOL {
            return Err(Error::invalid(format!("distribution sums to {sum}, not 1")));
        }
        Ok(DistributionVector(weights))
    }

    /// Skips validation; callers guarantee normalization.
    pub(crate) fn from_normalized(weights: Vec<f64>) -> Self {
        DistributionVector(weights)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    fn check_against(&self, dataset: &Dataset) -> Result<()> {
        if self.len() != dataset.len() {
            return Err(Error::invalid(format!(
                "distribution has {} weights for {} samples",
                self.len(),
                dataset.len()
            )));
        }
        Ok(())
    }
}

pub fn predict(stump: &Stump, features: &[f64]) -> Result<i8> {
    stump.predict(features)
}

/// `sum_i dist[i] * [h(x_i) != y_i]`, summed in index order.
pub fn weighted_error(stump: &Stump, dataset: &Dataset, dist: &DistributionVector) -> Result<f64> {
    dist.check_against(dataset)?;
    if stump.feature >= dataset.dimension() {
        return Err(Error::DimensionMismatch {
            expected: stump.feature + 1,
            actual: dataset.dimension(),
        });
    }
    Ok(dataset
        .samples()
        .iter()
        .zip(dist.weights())
        .filter(|(s, _)| stump.predict_unchecked(s.features[stump.feature]) != s.label)
        .map(|(_, w)| *w)
        .sum())
}

/// Midpoint between two consecutive distinct sorted values, kept strictly
/// below `hi` so that `hi` lands on the `>` side.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

/// Slack for the cumulative sweep before exact re-evaluation.
const SWEEP_SLACK: f64 = 1e-9;

/// Finds the stump with minimum weighted 0-1 error.
///
/// Candidates per feature: a `-inf` sentinel, the midpoints between
/// consecutive distinct sorted values, and a `+inf` sentinel, each with
/// both polarities. Ties go to the lower feature index, then the lower
/// threshold, then polarity +1. A cumulative sweep shortlists near-optimal
/// candidates which are then re-scored with [`weighted_error`], so the
/// returned error is exactly `weighted_error(stump, dataset, dist)`.
pub fn train_stump(dataset: &Dataset, dist: &DistributionVector) -> Result<(Stump, f64)> {
    dist.check_against(dataset)?;
    let weights = dist.weights();
    let samples = dataset.samples();
    let n = samples.len();

    let neg_total: f64 = samples
        .iter()
        .zip(weights)
        .filter(|(s, _)| s.label == -1)
        .map(|(_, w)| *w)
        .sum();
    let total: f64 = weights.iter().sum();

    // (approximate error, candidate) for every candidate, in tie-break order.
    let mut scored: Vec<(f64, Stump)> = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    for feature in 0..dataset.dimension() {
        order.sort_by(|&a, &b| {
            samples[a].features[feature].total_cmp(&samples[b].features[feature])
        });
        // err_plus: error of polarity +1 at the current threshold.
        let mut err_plus = neg_total;
        let mut push = |threshold: f64, err_plus: f64| {
            scored.push((err_plus, Stump::new(feature, threshold, 1)));
            scored.push((total - err_plus, Stump::new(feature, threshold, -1)));
        };
        push(f64::NEG_INFINITY, err_plus);
        let mut i = 0;
        while i < n {
            let value = samples[order[i]].features[feature];
            let mut j = i;
            while j < n && samples[order[j]].features[feature] == value {
                let s = order[j];
                if samples[s].label == 1 {
                    err_plus += weights[s];
                } else {
                    err_plus -= weights[s];
                }
                j += 1;
            }
            if j < n {
                let next = samples[order[j]].features[feature];
                push(midpoint(value, next), err_plus);
            }
            i = j;
        }
        push(f64::INFINITY, err_plus);
    }

    let best_approx = scored.iter().map(|(e, _)| *e).fold(f64::INFINITY, f64::min);
    let mut best: Option<(f64, Stump)> = None;
    for (approx, stump) in &scored {
        if *approx > best_approx + SWEEP_SLACK {
            continue;
        }
        let exact = weighted_error(stump, dataset, dist)?;
        // Strict `<` keeps the earliest candidate in tie-break order.
        if best.is_none_or(|(e, _)| exact < e) {
            best = Some((exact, *stump));
        }
    }
    let (err, stump) = best.expect("candidate set is never empty");
    Ok((stump, err))
}
