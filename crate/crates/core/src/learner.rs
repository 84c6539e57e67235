//! Stateless Q-learners with Boltzmann action selection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Action;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerParams {
    /// Learning rate, in `[0, 1]`.
    pub alpha: f64,
    /// Discount rate, in `[0, 1)`.
    pub gamma: f64,
    /// Boltzmann temperature, `> 0`.
    pub temperature: f64,
}

impl LearnerParams {
    pub fn new(alpha: f64, gamma: f64, temperature: f64) -> Result<Self> {
        let params = Self {
            alpha,
            gamma,
            temperature,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config("alpha", "must be in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("gamma", "must be in [0, 1)"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config("temperature", "must be > 0"));
        }
        Ok(())
    }
}

/// Inherited marker used to follow a mutant lineage; it has no effect on learning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lineage {
    #[default]
    Resident,
    Mutant,
}

/// Probabilities of `[contribute, defect]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Policy([f64; 2]);

impl Policy {
    pub fn new(probs: [f64; 2]) -> Result<Self> {
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (probs[0] + probs[1] - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("malformed policy {probs:?}")));
        }
        Ok(Self(probs))
    }

    pub fn contribute(&self) -> f64 {
        self.0[0]
    }

    pub fn defect(&self) -> f64 {
        self.0[1]
    }

    pub fn probs(&self) -> [f64; 2] {
        self.0
    }
}

/// Softmax of `q / temperature`, shifted by the larger Q-value so it never overflows.
pub fn boltzmann_policy(q_values: [f64; 2], temperature: f64) -> Result<Policy> {
    if !(temperature > 0.0) {
        return Err(Error::domain(format!("temperature must be > 0, got {temperature}")));
    }
    if q_values.iter().any(|q| !q.is_finite()) {
        return Err(Error::domain(format!("non-finite Q-values {q_values:?}")));
    }
    let top = q_values[0].max(q_values[1]);
    let w = q_values.map(|q| ((q - top) / temperature).exp());
    let z = w[0] + w[1];
    Ok(Policy([w[0] / z, w[1] / z]))
}

/// Draws one action, consuming exactly one uniform variate.
pub fn sample_action<R: Rng + ?Sized>(policy: &Policy, rng: &mut R) -> Action {
    let u: f64 = rng.random();
    if u < policy.contribute() {
        Action::Contribute
    } else {
        Action::Defect
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    /// `[Q(contribute), Q(defect)]`.
    pub q_values: [f64; 2],
    pub params: LearnerParams,
    pub cumulative_payoff: f64,
    pub interactions: u64,
    pub birth_step: u64,
    pub lineage: Lineage,
}

impl AgentState {
    /// A fresh learner with `Q = (0, 0)`, i.e. an initial policy of one half.
    pub fn newborn(params: LearnerParams, birth_step: u64) -> Self {
        Self {
            q_values: [0.0, 0.0],
            params,
            cumulative_payoff: 0.0,
            interactions: 0,
            birth_step,
            lineage: Lineage::Resident,
        }
    }

    pub fn with_lineage(mut self, lineage: Lineage) -> Self {
        self.lineage = lineage;
        self
    }

    pub fn temperature(&self) -> f64 {
        self.params.temperature
    }

    pub fn policy(&self) -> Policy {
        // params are validated at construction and Q stays finite for finite rewards
        boltzmann_policy(self.q_values, self.params.temperature).expect("valid learner state")
    }

    /// Boltzmann probability of contributing.
    pub fn strategy(&self) -> f64 {
        self.policy().contribute()
    }

    /// Lifetime average payoff, or 0 before the first interaction.
    pub fn average_payoff(&self) -> f64 {
        if self.interactions == 0 {
            0.0
        } else {
            self.cumulative_payoff / self.interactions as f64
        }
    }

    /// `Q_a += alpha * (reward + gamma * max Q - Q_a)`, bootstrapping on the
    /// single state's own Q-values, and records the payoff.
    pub fn q_update(&mut self, action: Action, reward: f64) -> Result<()> {
        if !reward.is_finite() {
            return Err(Error::domain(format!("non-finite reward {reward}")));
        }
        let LearnerParams { alpha, gamma, .. } = self.params;
        let best = self.q_values[0].max(self.q_values[1]);
        let q = &mut self.q_values[action.index()];
        *q += alpha * (reward + gamma * best - *q);
        self.cumulative_payoff += reward;
        self.interactions += 1;
        Ok(())
    }
}
