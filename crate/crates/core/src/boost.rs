//! Boosting arithmetic: learner weights, staleness decay, distribution
//! updates and weighted-ensemble prediction.
//!
//! Staleness is counted in server aggregation events. Clients reweight
//! their local samples with the undecayed weight (a client cannot know how
//! stale its learner will be when it arrives); the decay only affects the
//! learner's vote in the global ensemble.

use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::stump::{DistributionVector, Stump};

pub const DEFAULT_EPS_FLOOR: f64 = 1e-6;

/// `0.5 * ln((1 - eps) / eps)` after clamping `eps` into
/// `[eps_floor, 1 - eps_floor]`.
pub fn learner_weight(epsilon: f64, eps_floor: f64) -> Result<f64> {
    let eps = clamp_epsilon(epsilon, eps_floor)?;
    Ok(0.5 * ((1.0 - eps) / eps).ln())
}

pub fn clamp_epsilon(epsilon: f64, eps_floor: f64) -> Result<f64> {
    if !(eps_floor > 0.0 && eps_floor < 0.5) {
        return Err(Error::invalid(format!(
            "eps_floor must be in (0, 0.5), got {eps_floor}"
        )));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::invalid(format!(
            "epsilon must be in [0, 1], got {epsilon}"
        )));
    }
    Ok(epsilon.clamp(eps_floor, 1.0 - eps_floor))
}

/// `alpha * exp(-lambda * tau)`.
pub fn decayed_weight(alpha: f64, tau: u64, lambda: f64) -> f64 {
    alpha * (-lambda * tau as f64).exp()
}

/// Result of one reweighting step.
#[derive(Clone, Debug)]
pub struct DistributionUpdate {
    pub dist: DistributionVector,
    /// Normalizer, reported on the unshifted scale `sum_i D(i) exp(-a y h)`.
    pub z: f64,
}

/// `D'(i) = D(i) exp(-alpha_eff * y_i * h(x_i)) / Z`.
///
/// Exponents are shifted by their maximum before exponentiation.
pub fn update_distribution(
    dist: &DistributionVector,
    stump: &Stump,
    alpha_eff: f64,
    dataset: &Dataset,
) -> Result<DistributionUpdate> {
    if dist.len() != dataset.len() {
        return Err(Error::invalid(format!(
            "distribution has {} weights for {} samples",
            dist.len(),
            dataset.len()
        )));
    }
    if !alpha_eff.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite learner weight {alpha_eff}"
        )));
    }
    if alpha_eff == 0.0 {
        return Ok(DistributionUpdate {
            dist: dist.clone(),
            z: 1.0,
        });
    }
    let exponents: Vec<f64> = dataset
        .samples()
        .iter()
        .map(|s| {
            let h = stump.predict(&s.features)?;
            Ok(-alpha_eff * f64::from(s.label) * f64::from(h))
        })
        .collect::<Result<_>>()?;
    let shift = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnormalized: Vec<f64> = dist
        .weights()
        .iter()
        .zip(&exponents)
        .map(|(w, e)| w * (e - shift).exp())
        .collect();
    let z_shifted: f64 = unnormalized.iter().sum();
    if !(z_shifted.is_finite() && z_shifted > 0.0) {
        return Err(Error::Numeric(format!("normalizer is {z_shifted}")));
    }
    let weights = unnormalized.into_iter().map(|w| w / z_shifted).collect();
    Ok(DistributionUpdate {
        dist: DistributionVector::from_normalized(weights),
        z: z_shifted * shift.exp(),
    })
}

/// A weak learner as held in a client buffer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BufferedLearner {
    pub stump: Stump,
    /// Clamped weighted error.
    pub epsilon: f64,
    pub alpha: f64,
    pub client_id: usize,
    /// Server aggregation count when the client last synchronized.
    pub snapshot_round: u64,
    pub local_seq: u64,
}

impl BufferedLearner {
    /// Builds a learner from its raw training error; `alpha` follows
    /// [`learner_weight`] with the same floor.
    pub fn from_raw(
        stump: Stump,
        raw_epsilon: f64,
        eps_floor: f64,
        client_id: usize,
        snapshot_round: u64,
        local_seq: u64,
    ) -> Result<Self> {
        Ok(BufferedLearner {
            stump,
            epsilon: clamp_epsilon(raw_epsilon, eps_floor)?,
            alpha: learner_weight(raw_epsilon, eps_floor)?,
            client_id,
            snapshot_round,
            local_seq,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub learner: BufferedLearner,
    pub tau: u64,
    pub effective_weight: f64,
    /// Aggregation that appended this member (1-based).
    pub aggregation: u64,
}

/// Weighted vote `sign(sum_t w_t h_t(x))` with `sign(0) = +1`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    members: Vec<EnsembleMember>,
    lambda: f64,
}

impl Ensemble {
    pub fn new(lambda: f64) -> Self {
        Ensemble {
            members: Vec::new(),
            lambda,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn members(&self) -> &[EnsembleMember] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Appends a learner with staleness `tau`, decaying its weight.
    pub fn push(
        &mut self,
        learner: BufferedLearner,
        tau: u64,
        aggregation: u64,
    ) -> &EnsembleMember {
        let effective_weight = decayed_weight(learner.alpha, tau, self.lambda);
        self.members.push(EnsembleMember {
            learner,
            tau,
            effective_weight,
            aggregation,
        });
        self.members.last().expect("just pushed")
    }

    /// Appends a member with an explicit weight; for hand-built ensembles.
    pub fn push_weighted(&mut self, stump: Stump, effective_weight: f64) {
        let learner = BufferedLearner {
            stump,
            epsilon: 0.5,
            alpha: effective_weight,
            client_id: 0,
            snapshot_round: 0,
            local_seq: self.members.len() as u64,
        };
        self.members.push(EnsembleMember {
            learner,
            tau: 0,
            effective_weight,
            aggregation: 0,
        });
    }

    pub fn margin(&self, features: &[f64]) -> Result<f64> {
        let mut margin = 0.0;
        for m in &self.members {
            margin += m.effective_weight * f64::from(m.learner.stump.predict(features)?);
        }
        Ok(margin)
    }

    pub fn predict(&self, features: &[f64]) -> Result<i8> {
        Ok(sign(self.margin(features)?))
    }

    /// Unweighted misclassification rate over `dataset`.
    pub fn error(&self, dataset: &Dataset) -> Result<f64> {
        let mut wrong = 0usize;
        for s in dataset.samples() {
            if self.predict(&s.features)? != s.label {
                wrong += 1;
            }
        }
        Ok(wrong as f64 / dataset.len() as f64)
    }
}

#[inline]
pub fn sign(margin: f64) -> i8 {
    if margin >= 0.0 {
        1
    } else {
        -1
    }
}

pub fn ensemble_predict(ensemble: &Ensemble, features: &[f64]) -> Result<i8> {
    ensemble.predict(features)
}

pub fn ensemble_error(ensemble: &Ensemble, dataset: &Dataset) -> Result<f64> {
    ensemble.error(dataset)
}

/// Running ensemble margins over a fixed dataset, updated as members are
/// appended. Accumulates in the same order as [`Ensemble::margin`], so the
/// error it reports matches [`ensemble_error`] exactly.
#[derive(Clone, Debug)]
pub struct MarginCache {
    margins: Vec<f64>,
}

impl MarginCache {
    pub fn new(dataset: &Dataset) -> Self {
        MarginCache {
            margins: vec![0.0; dataset.len()],
        }
    }

    pub fn add(&mut self, dataset: &Dataset, stump: &Stump, weight: f64) -> Result<()> {
        for (m, s) in self.margins.iter_mut().zip(dataset.samples()) {
            *m += weight * f64::from(stump.predict(&s.features)?);
        }
        Ok(())
    }

    pub fn error(&self, dataset: &Dataset) -> f64 {
        let wrong = self
            .margins
            .iter()
            .zip(dataset.samples())
            .filter(|(m, s)| sign(**m) != s.label)
            .count();
        wrong as f64 / dataset.len() as f64
    }
}
