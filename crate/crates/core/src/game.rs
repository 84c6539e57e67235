//! The public goods game.
//!
//! Each of `N` players either contributes (paying a cost of one) or defects.
//! Every player then receives the per-individual reward `f(k)`, where `k` is
//! the number of contributors. Reward vectors are stored per individual, so
//! the `1/N` redistribution is already folded into `f`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cost paid by a contributor.
pub const CONTRIBUTION_COST: f64 = 1.0;

/// The two actions available to every player.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Contribute,
    Defect,
}

impl Action {
    pub fn is_contribution(self) -> bool {
        matches!(self, Action::Contribute)
    }

    /// Index into a `[contribute, defect]` pair.
    pub fn index(self) -> usize {
        match self {
            Action::Contribute => 0,
            Action::Defect => 1,
        }
    }
}

/// Per-individual reward `[f(0), f(1), ..., f(N)]` indexed by the number of contributors.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardFunction {
    values: Vec<f64>,
}

impl RewardFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::domain(format!(
                "reward vector needs at least 2 entries (group size >= 1), got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("reward value f({i}) is not finite")));
        }
        Ok(Self { values })
    }

    /// Like [`RewardFunction::new`], but also requires `f` to be weakly increasing.
    pub fn new_monotone(values: Vec<f64>) -> Result<Self> {
        let reward = Self::new(values)?;
        if !reward.is_monotone() {
            return Err(Error::domain("reward vector is not weakly increasing"));
        }
        Ok(reward)
    }

    /// `f(k) = k * slope` for a group of `group_size`.
    pub fn linear(slope: f64, group_size: usize) -> Result<Self> {
        if group_size < 2 {
            return Err(Error::domain(format!(
                "invalid group size {group_size}: need at least 2 players"
            )));
        }
        if !slope.is_finite() {
            return Err(Error::domain("linear reward slope is not finite"));
        }
        Self::new((0..=group_size).map(|i| slope * i as f64).collect())
    }

    /// Three-player reward `[0, j0, j0 + j1, m]`.
    pub fn from_jumps(point: RewardSpacePoint) -> Self {
        let RewardSpacePoint { j0, j1, m_max } = point;
        Self {
            values: vec![0.0, j0, j0 + j1, m_max],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn group_size(&self) -> usize {
        self.values.len() - 1
    }

    pub fn value(&self, contributors: usize) -> f64 {
        self.values[contributors]
    }

    /// Net gain of becoming the `(k+1)`-th contributor: `f(k+1) - 1 - f(k)`.
    pub fn net_jump(&self, k: usize) -> f64 {
        self.values[k + 1] - CONTRIBUTION_COST - self.values[k]
    }

    pub fn is_monotone(&self) -> bool {
        self.values.windows(2).all(|w| w[1] >= w[0])
    }

    /// Largest `|net_jump|`, a bound on `|expected_gain|`.
    pub fn max_abs_net_jump(&self) -> f64 {
        (0..self.group_size())
            .map(|k| self.net_jump(k).abs())
            .fold(0.0, f64::max)
    }
}

/// How a reward function is written in config files: either the full vector
/// or a linear slope that is expanded once the group size is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, try_from = "RawRewardSpec")]
pub enum RewardSpec {
    Values { reward_values: Vec<f64> },
    Linear { linear_k: f64 },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRewardSpec {
    reward_values: Option<Vec<f64>>,
    linear_k: Option<f64>,
}

impl TryFrom<RawRewardSpec> for RewardSpec {
    type Error = String;

    fn try_from(raw: RawRewardSpec) -> std::result::Result<Self, String> {
        match (raw.reward_values, raw.linear_k) {
            (Some(reward_values), None) => Ok(RewardSpec::Values { reward_values }),
            (None, Some(linear_k)) => Ok(RewardSpec::Linear { linear_k }),
            (Some(_), Some(_)) => Err("reward: give either reward_values or linear_k, not both".into()),
            (None, None) => Err("reward: one of reward_values or linear_k is required".into()),
        }
    }
}

impl RewardSpec {
    pub fn resolve(&self, group_size: usize) -> Result<RewardFunction> {
        match self {
            RewardSpec::Values { reward_values } => {
                let reward = RewardFunction::new(reward_values.clone())?;
                if reward.group_size() != group_size {
                    return Err(Error::config(
                        "reward.reward_values",
                        format!(
                            "must have group_size + 1 = {} entries, got {}",
                            group_size + 1,
                            reward_values.len()
                        ),
                    ));
                }
                Ok(reward)
            }
            RewardSpec::Linear { linear_k } => RewardFunction::linear(*linear_k, group_size),
        }
    }
}

impl From<&RewardFunction> for RewardSpec {
    fn from(reward: &RewardFunction) -> Self {
        RewardSpec::Values {
            reward_values: reward.values.clone(),
        }
    }
}

/// A point `(j0, j1)` of the three-player reward space `[0, j0, j0 + j1, m]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSpacePoint {
    pub j0: f64,
    pub j1: f64,
    pub m_max: f64,
}

impl RewardSpacePoint {
    pub fn new(j0: f64, j1: f64, m_max: f64) -> Result<Self> {
        if !(m_max > 0.0 && m_max.is_finite()) {
            return Err(Error::domain(format!("m_max must be > 0, got {m_max}")));
        }
        if !(0.0..=m_max).contains(&j0) {
            return Err(Error::domain(format!("j0 = {j0} outside [0, {m_max}]")));
        }
        if !(j1 >= 0.0 && j1 <= m_max - j0) {
            return Err(Error::domain(format!(
                "j1 = {j1} outside [0, m_max - j0 = {}]",
                m_max - j0
            )));
        }
        Ok(Self { j0, j1, m_max })
    }

    pub fn reward(&self) -> RewardFunction {
        RewardFunction::from_jumps(*self)
    }
}

/// Realized contributions `c_i` of one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionProfile {
    contributions: Vec<bool>,
}

impl ActionProfile {
    /// Builds a profile from 0/1 contribution indicators.
    pub fn from_indicators(indicators: &[u8]) -> Result<Self> {
        let contributions = indicators
            .iter()
            .map(|&c| match c {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::domain(format!("contribution must be 0 or 1, got {other}"))),
            })
            .collect::<Result<_>>()?;
        Ok(Self { contributions })
    }

    pub fn from_actions(actions: &[Action]) -> Self {
        Self {
            contributions: actions.iter().map(|a| a.is_contribution()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.contributions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contributions.is_empty()
    }

    pub fn contributors(&self) -> usize {
        self.contributions.iter().filter(|&&c| c).count()
    }

    pub fn contributes(&self, player: usize) -> bool {
        self.contributions[player]
    }
}

/// Realized payoff of every player: `f(total) - c_j`.
pub fn payoffs(profile: &ActionProfile, reward: &RewardFunction) -> Result<Vec<f64>> {
    if profile.len() != reward.group_size() {
        return Err(Error::domain(format!(
            "action profile has {} players but reward is for {}",
            profile.len(),
            reward.group_size()
        )));
    }
    let shared = reward.value(profile.contributors());
    Ok(profile
        .contributions
        .iter()
        .map(|&c| if c { shared - CONTRIBUTION_COST } else { shared })
        .collect())
}

pub(crate) fn check_probability(p: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} = {p} is not a probability in [0, 1]")))
    }
}

/// Distribution of the number of successes among independent Bernoulli
/// trials given as `(p, 1 - p)` pairs. Passing the complement explicitly keeps
/// precision when `p` is within rounding of 1.
pub(crate) fn count_distribution_split<I>(trials: I) -> Vec<f64>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let mut dist = vec![1.0];
    for (p, q) in trials {
        dist.push(0.0);
        for k in (0..dist.len()).rev() {
            let stay = dist[k] * q;
            let moved = if k > 0 { dist[k - 1] * p } else { 0.0 };
            dist[k] = stay + moved;
        }
    }
    dist
}

/// Poisson-binomial distribution of the number of contributors among players
/// who contribute independently with the given probabilities.
pub fn contributor_distribution(probs: &[f64]) -> Result<Vec<f64>> {
    for (i, &p) in probs.iter().enumerate() {
        check_probability(p, &format!("probability[{i}]"))?;
    }
    Ok(count_distribution_split(probs.iter().map(|&p| (p, 1.0 - p))))
}

/// `E[g(K)]` for a count distribution over `0..dist.len()`.
pub(crate) fn expectation(dist: &[f64], g: impl Fn(usize) -> f64) -> f64 {
    dist.iter().enumerate().map(|(k, w)| w * g(k)).sum()
}

/// Expected payoff advantage of contributing over defecting, when the other
/// `N - 1` players contribute independently with `other_probs`.
///
/// Sums `f(|S|+1) - 1 - f(|S|)` over subsets `S` of contributing co-players,
/// grouped by `|S|` so the cost is `O(N^2)` rather than `O(2^N)`.
pub fn expected_gain(other_probs: &[f64], reward: &RewardFunction) -> Result<f64> {
    if other_probs.len() + 1 != reward.group_size() {
        return Err(Error::domain(format!(
            "expected {} co-player probabilities, got {}",
            reward.group_size() - 1,
            other_probs.len()
        )));
    }
    let dist = contributor_distribution(other_probs)?;
    Ok(gain_from_distribution(&dist, reward))
}

pub(crate) fn gain_from_distribution(dist: &[f64], reward: &RewardFunction) -> f64 {
    expectation(dist, |k| reward.net_jump(k))
}
