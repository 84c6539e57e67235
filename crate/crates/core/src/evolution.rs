//! A probabilistic Moran death-birth process running alongside learning.
//!
//! One iteration is a round of the public goods game (every agent acts and
//! learns) followed by a replacement step in which every agent independently
//! dies with probability `r`. Each vacancy is filled by a newborn whose parent
//! is drawn from the other members of the pre-step population with weight
//! `exp(beta * average payoff)`. Newborns inherit temperature (optionally
//! mutated) and lineage, never Q-values.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SimulationConfig;
use crate::error::{Error, Result};
use crate::game::{payoffs, Action, ActionProfile, RewardFunction};
use crate::learner::{sample_action, AgentState, LearnerParams, Lineage};
use crate::seeds::{self, SimRng};

/// Stream namespaces so that different kinds of runs never share a seed.
const SIMULATION_STREAM: u64 = 0;
const FIXATION_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionParams {
    /// Per-step death probability `r`.
    pub replacement_rate: f64,
    /// Selection strength `beta` in fitness `exp(beta * payoff)`.
    pub selection_strength: f64,
    /// Probability that a newborn's temperature is perturbed.
    pub mutation_prob: f64,
    /// Standard deviation of the Gaussian temperature perturbation.
    pub mutation_sigma: f64,
    pub temperature_bounds: [f64; 2],
}

impl EvolutionParams {
    /// No deaths, no mutation.
    pub fn frozen() -> Self {
        Self {
            replacement_rate: 0.0,
            selection_strength: 1.0,
            mutation_prob: 0.0,
            mutation_sigma: 0.0,
            temperature_bounds: [f64::MIN_POSITIVE, f64::MAX],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.replacement_rate) {
            return Err(Error::config("replacement_rate", "must be in [0, 1]"));
        }
        if !(self.selection_strength >= 0.0) {
            return Err(Error::config("beta", "must be ≥ 0"));
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return Err(Error::config("mutation_prob", "must be in [0, 1]"));
        }
        if !(self.mutation_sigma >= 0.0 && self.mutation_sigma.is_finite()) {
            return Err(Error::config("mutation_sigma", "must be finite and ≥ 0"));
        }
        let [lo, hi] = self.temperature_bounds;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::config("temperature_bounds", "must satisfy 0 < T_min ≤ T_max"));
        }
        Ok(())
    }
}

/// Realized actions of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub actions: Vec<Action>,
    pub payoffs: Vec<f64>,
}

impl RoundOutcome {
    pub fn contribution_rate(&self) -> f64 {
        let n = self.actions.len() as f64;
        self.actions.iter().filter(|a| a.is_contribution()).count() as f64 / n
    }
}

#[derive(Debug, Clone)]
pub struct PopulationState {
    pub agents: Vec<AgentState>,
    pub step: u64,
    rng: SimRng,
}

impl PopulationState {
    pub fn new(agents: Vec<AgentState>, rng: SimRng) -> Result<Self> {
        if agents.len() < 2 {
            return Err(Error::config("group_size", "must be ≥ 2"));
        }
        Ok(Self { agents, step: 0, rng })
    }

    /// `n` identical newborn learners.
    pub fn uniform(n: usize, params: LearnerParams, rng: SimRng) -> Result<Self> {
        Self::new(vec![AgentState::newborn(params, 0); n], rng)
    }

    pub fn size(&self) -> usize {
        self.agents.len()
    }

    pub fn rng_mut(&mut self) -> &mut SimRng {
        &mut self.rng
    }

    pub fn strategies(&self) -> Vec<f64> {
        self.agents.iter().map(AgentState::strategy).collect()
    }

    pub fn mean_strategy(&self) -> f64 {
        self.agents.iter().map(AgentState::strategy).sum::<f64>() / self.size() as f64
    }

    pub fn mean_temperature(&self) -> f64 {
        self.agents.iter().map(AgentState::temperature).sum::<f64>() / self.size() as f64
    }

    pub fn count_lineage(&self, lineage: Lineage) -> usize {
        self.agents.iter().filter(|a| a.lineage == lineage).count()
    }

    /// Every agent samples from its Boltzmann policy, is paid, and learns.
    pub fn play_round(&mut self, reward: &RewardFunction) -> Result<RoundOutcome> {
        if reward.group_size() != self.size() {
            return Err(Error::domain(format!(
                "population of {} cannot play a {}-player game",
                self.size(),
                reward.group_size()
            )));
        }
        let actions: Vec<Action> = self
            .agents
            .iter()
            .map(|a| a.policy())
            .collect::<Vec<_>>()
            .iter()
            .map(|p| sample_action(p, &mut self.rng))
            .collect();
        let pay = payoffs(&ActionProfile::from_actions(&actions), reward)?;
        for ((agent, &action), &p) in self.agents.iter_mut().zip(&actions).zip(&pay) {
            agent.q_update(action, p)?;
        }
        Ok(RoundOutcome { actions, payoffs: pay })
    }

    /// Independent deaths followed by fitness-proportional births. Returns the
    /// number of replaced agents.
    pub fn replacement_step(&mut self, evo: &EvolutionParams) -> Result<usize> {
        evo.validate()?;
        if evo.replacement_rate == 0.0 {
            return Ok(0);
        }
        let n = self.size();
        let dead: Vec<bool> = (0..n)
            .map(|_| self.rng.random::<f64>() < evo.replacement_rate)
            .collect();
        let deaths = dead.iter().filter(|&&d| d).count();
        if deaths == 0 {
            return Ok(0);
        }

        let fitness_exponents: Vec<f64> = self
            .agents
            .iter()
            .map(|a| evo.selection_strength * a.average_payoff())
            .collect();
        let normal = Normal::new(0.0, evo.mutation_sigma).expect("sigma validated");
        let [t_min, t_max] = evo.temperature_bounds;

        let mut next = self.agents.clone();
        for slot in (0..n).filter(|&i| dead[i]) {
            let parent = &self.agents[pick_parent(&fitness_exponents, slot, &mut self.rng)];
            let mut temperature = parent.temperature();
            if evo.mutation_prob > 0.0 && self.rng.random::<f64>() < evo.mutation_prob {
                temperature = (temperature + normal.sample(&mut self.rng)).clamp(t_min, t_max);
            }
            let params = LearnerParams {
                temperature,
                ..parent.params
            };
            next[slot] = AgentState::newborn(params, self.step).with_lineage(parent.lineage);
        }
        self.agents = next;
        Ok(deaths)
    }

    /// One iteration: a round of play, then replacement.
    pub fn advance(&mut self, reward: &RewardFunction, evo: &EvolutionParams) -> Result<RoundOutcome> {
        let outcome = self.play_round(reward)?;
        self.replacement_step(evo)?;
        self.step += 1;
        Ok(outcome)
    }
}

/// Draws a parent index other than `excluded`, with weights
/// `exp(exponent - max)` over the remaining agents.
fn pick_parent(exponents: &[f64], excluded: usize, rng: &mut SimRng) -> usize {
    let top = exponents
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != excluded)
        .map(|(_, &e)| e)
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = exponents
        .iter()
        .enumerate()
        .map(|(j, &e)| if j == excluded { 0.0 } else { (e - top).exp() })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    let mut last = excluded;
    for (j, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last = j;
            if target < w {
                return j;
            }
            target -= w;
        }
    }
    last
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub step: u64,
    /// Mean Boltzmann probability of contributing, after the step.
    pub mean_strategy: f64,
    pub mean_temperature: f64,
    /// Fraction of agents that actually contributed in this step's round.
    pub contribution_rate: f64,
    pub strategies: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub replica: u64,
    pub seed: u64,
    pub points: Vec<TrajectoryPoint>,
    pub final_strategies: Vec<f64>,
    pub final_temperatures: Vec<f64>,
}

impl Trajectory {
    pub fn final_mean_strategy(&self) -> f64 {
        self.points.last().map_or(0.5, |p| p.mean_strategy)
    }

    pub fn final_mean_temperature(&self) -> f64 {
        self.points.last().map_or(f64::NAN, |p| p.mean_temperature)
    }
}

/// Runs one replica of the configured simulation.
pub fn run_simulation(config: &SimulationConfig, replica: u64) -> Result<Trajectory> {
    let seed = seeds::derive_seed(config.master_seed, &[SIMULATION_STREAM, replica]);
    run_seeded(config, seed, replica)
}

/// Runs the configured simulation from an explicit seed.
pub fn run_seeded(config: &SimulationConfig, seed: u64, replica: u64) -> Result<Trajectory> {
    config.validate()?;
    let reward = config.reward_function()?;
    let evo = config.evolution_params()?;
    let mut pop = PopulationState::uniform(
        config.group_size,
        config.learner_params()?,
        rand::SeedableRng::seed_from_u64(seed),
    )?;

    let interval = config.agent_sample_interval;
    let mut points = Vec::with_capacity(config.iterations as usize);
    for _ in 0..config.iterations {
        let outcome = pop.advance(&reward, &evo)?;
        let sampled = interval > 0 && (pop.step % interval == 0 || pop.step == config.iterations);
        points.push(TrajectoryPoint {
            step: pop.step,
            mean_strategy: pop.mean_strategy(),
            mean_temperature: pop.mean_temperature(),
            contribution_rate: outcome.contribution_rate(),
            strategies: sampled.then(|| pop.strategies()),
        });
    }
    Ok(Trajectory {
        replica,
        seed,
        points,
        final_strategies: pop.strategies(),
        final_temperatures: pop.agents.iter().map(AgentState::temperature).collect(),
    })
}

/// All configured replicas, in replica order regardless of scheduling.
pub fn run_replicas(config: &SimulationConfig) -> Result<Vec<Trajectory>> {
    (0..config.replicas as u64)
        .into_par_iter()
        .map(|r| run_simulation(config, r))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixationOutcome {
    Fixation,
    Extinction,
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixationEstimate {
    pub resident_t: f64,
    pub mutant_t: f64,
    pub trials: u64,
    pub fixations: u64,
    pub extinctions: u64,
    pub censored: u64,
    /// Fixations over non-censored trials; NaN if every trial was censored.
    pub p_hat: f64,
    /// Binomial standard error of `p_hat`.
    pub se: f64,
}

/// Runs one fixation trial: a single mutant among `N - 1` residents.
pub fn fixation_trial(
    resident_t: f64,
    mutant_t: f64,
    config: &SimulationConfig,
    reward: &RewardFunction,
    evo: &EvolutionParams,
    trial: u64,
) -> Result<FixationOutcome> {
    let n = config.group_size;
    let mut rng = seeds::stream(config.master_seed, &[FIXATION_STREAM, trial]);
    let mutant_slot = rng.random_range(0..n);
    let base = LearnerParams {
        temperature: resident_t,
        ..config.learner_params()?
    };
    let agents = (0..n)
        .map(|i| {
            if i == mutant_slot {
                AgentState::newborn(LearnerParams { temperature: mutant_t, ..base }, 0)
                    .with_lineage(Lineage::Mutant)
            } else {
                AgentState::newborn(base, 0)
            }
        })
        .collect();
    let mut pop = PopulationState::new(agents, rng)?;
    for _ in 0..config.max_fixation_steps {
        pop.advance(reward, evo)?;
        match pop.count_lineage(Lineage::Mutant) {
            0 => return Ok(FixationOutcome::Extinction),
            k if k == n => return Ok(FixationOutcome::Fixation),
            _ => {}
        }
    }
    Ok(FixationOutcome::Censored)
}

/// Monte Carlo estimate of the probability that one mutant with temperature
/// `mutant_t` takes over a resident population at `resident_t`.
pub fn estimate_fixation(
    resident_t: f64,
    mutant_t: f64,
    config: &SimulationConfig,
    trials: u64,
) -> Result<FixationEstimate> {
    if trials == 0 {
        return Err(Error::domain("fixation needs at least one trial"));
    }
    for (name, t) in [("resident_t", resident_t), ("mutant_t", mutant_t)] {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::config(name, "must be > 0"));
        }
    }
    config.validate()?;
    if config.replacement_rate == 0.0 {
        return Err(Error::config(
            "replacement_rate",
            "must be > 0 for fixation (no turnover otherwise)",
        ));
    }
    let reward = config.reward_function()?;
    let evo = EvolutionParams {
        mutation_prob: 0.0,
        ..config.evolution_params()?
    };

    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| fixation_trial(resident_t, mutant_t, config, &reward, &evo, t))
        .collect::<Result<Vec<_>>>()?;
    let count = |o| outcomes.iter().filter(|&&x| x == o).count() as u64;
    let fixations = count(FixationOutcome::Fixation);
    let extinctions = count(FixationOutcome::Extinction);
    let censored = count(FixationOutcome::Censored);
    let decided = fixations + extinctions;
    let (p_hat, se) = if decided == 0 {
        (f64::NAN, f64::NAN)
    } else {
        let p = fixations as f64 / decided as f64;
        (p, (p * (1.0 - p) / decided as f64).sqrt())
    };
    Ok(FixationEstimate {
        resident_t,
        mutant_t,
        trials,
        fixations,
        extinctions,
        censored,
        p_hat,
        se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::RewardSpec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::collections::BTreeSet;

    fn params(alpha: f64, t: f64) -> LearnerParams {
        LearnerParams::new(alpha, 0.0, t).unwrap()
    }

    fn evo(r: f64, beta: f64) -> EvolutionParams {
        EvolutionParams {
            replacement_rate: r,
            selection_strength: beta,
            mutation_prob: 0.0,
            mutation_sigma: 0.0,
            temperature_bounds: [0.01, 2.0],
        }
    }

    fn fig1_config(t: f64) -> SimulationConfig {
        SimulationConfig {
            group_size: 5,
            reward: Some(RewardSpec::Values {
                reward_values: vec![0.0, 0.0, 0.0, 2.0, 4.0, 6.0],
            }),
            alpha: 0.1,
            gamma: 0.0,
            temperature: t,
            replacement_rate: 0.0,
            beta: 1.0,
            mutation_prob: 0.0,
            mutation_sigma: 0.05,
            temperature_bounds: [0.01, 2.0],
            iterations: 500,
            replicas: 1,
            master_seed: 11,
            max_fixation_steps: 1_000_000,
            agent_sample_interval: 0,
            output: None,
        }
    }

    #[test]
    fn exploiting_contributors_all_contribute() {
        let reward = RewardFunction::new(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let mut agent = AgentState::newborn(params(0.1, 1e-3), 0);
        agent.q_values = [1.0, 0.0];
        let mut pop = PopulationState::new(vec![agent; 3], SimRng::seed_from_u64(1)).unwrap();
        let out = pop.play_round(&reward).unwrap();
        assert!(out.actions.iter().all(|a| a.is_contribution()));
        assert_eq!(out.payoffs, vec![2.0; 3]);
        assert!(pop.agents.iter().all(|a| a.average_payoff() == 2.0));
    }

    #[test]
    fn frozen_learners_keep_q() {
        let reward = RewardFunction::new(vec![0.0, 0.0, 0.0, 2.0, 4.0, 6.0]).unwrap();
        let mut pop = PopulationState::uniform(5, params(0.0, 0.5), SimRng::seed_from_u64(3)).unwrap();
        for _ in 0..20 {
            pop.play_round(&reward).unwrap();
        }
        assert!(pop.agents.iter().all(|a| a.q_values == [0.0, 0.0]));
        assert!(pop.agents.iter().all(|a| a.interactions == 20));
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let reward = RewardFunction::new(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let mut pop = PopulationState::uniform(4, params(0.1, 0.5), SimRng::seed_from_u64(3)).unwrap();
        assert!(pop.play_round(&reward).is_err());
        assert!(PopulationState::uniform(1, params(0.1, 0.5), SimRng::seed_from_u64(3)).is_err());
    }

    #[test]
    fn no_deaths_without_replacement() {
        let mut pop = PopulationState::uniform(5, params(0.1, 0.5), SimRng::seed_from_u64(5)).unwrap();
        pop.agents[2].q_values = [3.0, 1.0];
        let before = pop.agents.clone();
        assert_eq!(pop.replacement_step(&evo(0.0, 1.0)).unwrap(), 0);
        assert_eq!(pop.agents, before);
    }

    #[test]
    fn neutral_full_replacement_draws_uniform_other_parents() {
        // tag each agent by a distinct temperature to identify parents
        let n = 4;
        let mut counts = vec![vec![0usize; n]; n];
        let mut rng = SimRng::seed_from_u64(17);
        let trials = 20_000;
        for _ in 0..trials {
            let agents = (0..n)
                .map(|i| AgentState::newborn(params(0.1, 0.1 * (i + 1) as f64), 0))
                .collect();
            let mut pop = PopulationState::new(agents, SimRng::seed_from_u64(rng.random())).unwrap();
            assert_eq!(pop.replacement_step(&evo(1.0, 0.0)).unwrap(), n);
            for (slot, a) in pop.agents.iter().enumerate() {
                let parent = (a.temperature() / 0.1).round() as usize - 1;
                counts[slot][parent] += 1;
                assert_eq!(a.q_values, [0.0, 0.0]);
                assert_eq!(a.interactions, 0);
            }
        }
        for (slot, row) in counts.iter().enumerate() {
            assert_eq!(row[slot], 0, "an agent parented its own slot");
            let expected = trials as f64 / (n - 1) as f64;
            let sd = (expected * (1.0 - 1.0 / (n - 1) as f64)).sqrt();
            for (j, &c) in row.iter().enumerate().filter(|&(j, _)| j != slot) {
                assert!((c as f64 - expected).abs() < 5.0 * sd, "slot {slot} parent {j}: {c}");
            }
        }
    }

    #[test]
    fn strong_selection_picks_the_best() {
        let mut rng = SimRng::seed_from_u64(23);
        for _ in 0..200 {
            let mut agents: Vec<AgentState> = (0..5)
                .map(|i| AgentState::newborn(params(0.1, 0.1 * (i + 1) as f64), 0))
                .collect();
            for (i, a) in agents.iter_mut().enumerate() {
                a.cumulative_payoff = i as f64;
                a.interactions = 1;
            }
            let mut pop = PopulationState::new(agents, SimRng::seed_from_u64(rng.random())).unwrap();
            pop.replacement_step(&evo(1.0, 1e6)).unwrap();
            for (slot, a) in pop.agents.iter().enumerate() {
                let best = if slot == 4 { 0.4 } else { 0.5 };
                assert!((a.temperature() - best).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mutation_respects_bounds() {
        let e = EvolutionParams {
            replacement_rate: 1.0,
            selection_strength: 1.0,
            mutation_prob: 1.0,
            mutation_sigma: 5.0,
            temperature_bounds: [0.2, 0.8],
        };
        let mut pop = PopulationState::uniform(6, params(0.1, 0.5), SimRng::seed_from_u64(8)).unwrap();
        let mut seen = BTreeSet::new();
        for _ in 0..50 {
            pop.replacement_step(&e).unwrap();
            for a in &pop.agents {
                assert!((0.2..=0.8).contains(&a.temperature()));
                seen.insert(a.temperature().to_bits());
            }
        }
        assert!(seen.len() > 10);
    }

    #[test]
    fn simulation_shape_and_determinism() {
        let mut c = fig1_config(0.5);
        c.iterations = 50;
        c.agent_sample_interval = 10;
        let a = run_simulation(&c, 0).unwrap();
        let b = run_simulation(&c, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.points.len(), 50);
        assert_eq!(a.points.iter().filter(|p| p.strategies.is_some()).count(), 5);
        let other = run_simulation(&c, 1).unwrap();
        assert_ne!(a.points, other.points);
    }

    #[test]
    fn fixation_preconditions() {
        let mut c = fig1_config(0.5);
        assert!(matches!(estimate_fixation(0.5, 1.0, &c, 10), Err(Error::Config { .. })));
        c.replacement_rate = 0.05;
        assert!(matches!(estimate_fixation(0.5, 1.0, &c, 0), Err(Error::Domain(_))));
        assert!(estimate_fixation(0.5, 0.0, &c, 10).is_err());
    }

    #[test]
    fn censored_trials_are_reported() {
        let mut c = fig1_config(0.5);
        c.replacement_rate = 0.01;
        c.max_fixation_steps = 1;
        let est = estimate_fixation(0.5, 1.0, &c, 50).unwrap();
        assert_eq!(est.fixations + est.extinctions + est.censored, 50);
        assert!(est.censored > 0);
    }

    #[test]
    fn zero_selection_mutant_count_is_a_martingale() {
        // beta = 0, mu = 0: expected change of the mutant count per step is zero
        let reward = RewardFunction::new(vec![0.0, 0.0, 0.0, 2.0, 4.0, 6.0]).unwrap();
        let e = evo(0.3, 0.0);
        let mut rng = SimRng::seed_from_u64(99);
        let mut changes = Vec::new();
        for _ in 0..4000 {
            let mut agents = vec![AgentState::newborn(params(0.1, 0.5), 0); 5];
            agents[0] = agents[0].clone().with_lineage(Lineage::Mutant);
            agents[1] = agents[1].clone().with_lineage(Lineage::Mutant);
            let mut pop = PopulationState::new(agents, SimRng::seed_from_u64(rng.random())).unwrap();
            for _ in 0..5 {
                let before = pop.count_lineage(Lineage::Mutant) as f64;
                pop.advance(&reward, &e).unwrap();
                changes.push(pop.count_lineage(Lineage::Mutant) as f64 - before);
            }
        }
        let n = changes.len() as f64;
        let mean = changes.iter().sum::<f64>() / n;
        let var = changes.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 4.0 * (var / n).sqrt(), "mean change {mean}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn size_is_constant_and_no_new_temperatures(seed in any::<u64>(), r in 0.0f64..=1.0, beta in 0.0f64..5.0) {
            let reward = RewardFunction::new(vec![0.0, 0.5, 3.0, 4.0]).unwrap();
            let agents = vec![
                AgentState::newborn(params(0.2, 0.3), 0),
                AgentState::newborn(params(0.2, 0.7), 0),
                AgentState::newborn(params(0.2, 1.1), 0),
            ];
            let initial: BTreeSet<u64> = agents.iter().map(|a| a.temperature().to_bits()).collect();
            let mut pop = PopulationState::new(agents, SimRng::seed_from_u64(seed)).unwrap();
            for _ in 0..40 {
                pop.advance(&reward, &evo(r, beta)).unwrap();
                prop_assert_eq!(pop.size(), 3);
                for a in &pop.agents {
                    prop_assert!(initial.contains(&a.temperature().to_bits()));
                }
            }
        }
    }
}
