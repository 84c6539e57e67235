//! Parameter sweeps with replication, and their aggregation.
//!
//! A sweep is a cartesian grid over one or more parameters. Every
//! `(cell, replica)` pair is an independent simulation whose seed is derived
//! from the master seed, a sweep tag and the cell's grid indices, so results
//! are identical whatever the thread count.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SimulationConfig;
use crate::dynamics::{self, AdaptiveSettings, Classification};
use crate::error::{Error, Result};
use crate::evolution;
use crate::game::{RewardFunction, RewardSpacePoint, RewardSpec};
use crate::seeds;

/// Reward used by the temperature/replacement sweep when none is given.
pub const DEFAULT_TEMP_SWEEP_REWARD: [f64; 6] = [0.0, 0.0, 0.0, 2.0, 4.0, 6.0];

const LEARNING_SWEEP_TAG: u64 = 10;
const TEMP_SWEEP_TAG: u64 = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Alpha,
    Gamma,
    Temperature,
    ReplacementRate,
    Beta,
    /// Slope of a linear reward `f(k) = k * slope`.
    LinearK,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Gamma => "gamma",
            SweepParam::Temperature => "temperature",
            SweepParam::ReplacementRate => "replacement_rate",
            SweepParam::Beta => "beta",
            SweepParam::LinearK => "linear_k",
        }
    }

    fn apply(self, config: &mut SimulationConfig, value: f64) {
        match self {
            SweepParam::Alpha => config.alpha = value,
            SweepParam::Gamma => config.gamma = value,
            SweepParam::Temperature => config.temperature = value,
            SweepParam::ReplacementRate => config.replacement_rate = value,
            SweepParam::Beta => config.beta = value,
            SweepParam::LinearK => config.reward = Some(RewardSpec::Linear { linear_k: value }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub axes: Vec<(SweepParam, Vec<f64>)>,
    pub replicas: u32,
    pub iterations: u64,
    pub base: SimulationConfig,
    pub master_seed: u64,
    /// Separates the seed streams of different sweep kinds.
    pub stream_tag: u64,
}

impl SweepSpec {
    /// Grid indices of every cell, last axis fastest.
    pub fn cells(&self) -> Vec<Vec<usize>> {
        let mut cells = vec![Vec::new()];
        for (_, values) in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|prefix| {
                    (0..values.len()).map(move |i| {
                        let mut c = prefix.clone();
                        c.push(i);
                        c
                    })
                })
                .collect();
        }
        cells
    }

    fn cell_params(&self, cell: &[usize]) -> Vec<(SweepParam, f64)> {
        self.axes.iter().zip(cell).map(|((p, values), &i)| (*p, values[i])).collect()
    }

    /// The base config with one cell's parameters applied, validated.
    pub fn cell_config(&self, cell: &[usize]) -> Result<SimulationConfig> {
        let mut config = self.base.clone();
        config.iterations = self.iterations;
        config.replicas = self.replicas;
        config.master_seed = self.master_seed;
        config.agent_sample_interval = 0;
        for (p, v) in self.cell_params(cell) {
            p.apply(&mut config, v);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicas < 1 {
            return Err(Error::config("replicas", "must be ≥ 1"));
        }
        if self.iterations < 1 {
            return Err(Error::config("iterations", "must be ≥ 1"));
        }
        if self.axes.is_empty() || self.axes.iter().any(|(_, v)| v.is_empty()) {
            return Err(Error::config("axes", "must be nonempty"));
        }
        for (p, values) in &self.axes {
            for &v in values {
                let mut config = self.base.clone();
                p.apply(&mut config, v);
                config.validate()?;
            }
        }
        Ok(())
    }

    pub fn seed(&self, cell: &[usize], replica: u32) -> u64 {
        let mut coords = vec![self.stream_tag];
        coords.extend(cell.iter().map(|&i| i as u64));
        coords.push(replica as u64);
        seeds::derive_seed(self.master_seed, &coords)
    }
}

/// One simulation inside a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub cell: Vec<usize>,
    pub params: Vec<(SweepParam, f64)>,
    pub replica: u32,
    pub seed: u64,
    /// Mean Boltzmann contribution probability after the last iteration.
    pub final_mean_strategy: f64,
    /// Time average of the mean strategy over all iterations.
    pub time_avg_strategy: f64,
    /// Fraction of realized actions that were contributions.
    pub empirical_contribution: f64,
    pub mean_temperature: f64,
    pub runtime_secs: f64,
}

/// Runs every `(cell, replica)` of a sweep. Records come back in grid order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    let jobs: Vec<(Vec<usize>, u32)> = spec
        .cells()
        .into_iter()
        .flat_map(|c| (0..spec.replicas).map(move |r| (c.clone(), r)))
        .collect();
    jobs.into_par_iter()
        .map(|(cell, replica)| {
            let start = Instant::now();
            let config = spec.cell_config(&cell)?;
            let seed = spec.seed(&cell, replica);
            let traj = evolution::run_seeded(&config, seed, replica as u64)?;
            let steps = traj.points.len() as f64;
            Ok(RunRecord {
                params: spec.cell_params(&cell),
                cell,
                replica,
                seed,
                final_mean_strategy: traj.final_mean_strategy(),
                time_avg_strategy: traj.points.iter().map(|p| p.mean_strategy).sum::<f64>() / steps,
                empirical_contribution: traj.points.iter().map(|p| p.contribution_rate).sum::<f64>() / steps,
                mean_temperature: traj.final_mean_temperature(),
                runtime_secs: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (zero for a single value).
    pub sd: f64,
    pub se: f64,
}

impl Stats {
    /// Order-independent: values are summed in sorted order.
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("statistics of an empty sample"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mean = sorted.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Ok(Self { n, mean, sd: 0.0, se: 0.0 });
        }
        let mut sq: Vec<f64> = sorted.iter().map(|v| (v - mean).powi(2)).collect();
        sq.sort_by(f64::total_cmp);
        let sd = (sq.iter().sum::<f64>() / (n - 1) as f64).sqrt();
        Ok(Self {
            n,
            mean,
            sd,
            se: sd / (n as f64).sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub cell: Vec<usize>,
    pub params: Vec<(SweepParam, f64)>,
    pub strategy: Stats,
    pub empirical_contribution: Stats,
    pub mean_temperature: f64,
    /// Only one replica: the standard error is reported as 0 but is undefined.
    pub se_undefined: bool,
}

/// Per-cell statistics of the final mean strategy, in grid order.
pub fn aggregate(records: &[RunRecord]) -> Result<Vec<CellSummary>> {
    if records.is_empty() {
        return Err(Error::domain("cannot aggregate an empty record set"));
    }
    let mut cells: BTreeMap<&[usize], Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        cells.entry(&r.cell).or_default().push(r);
    }
    cells
        .into_values()
        .map(|mut group| {
            group.sort_by_key(|r| r.replica);
            let strategies: Vec<f64> = group.iter().map(|r| r.final_mean_strategy).collect();
            let empirical: Vec<f64> = group.iter().map(|r| r.empirical_contribution).collect();
            let temps: Vec<f64> = group.iter().map(|r| r.mean_temperature).collect();
            let strategy = Stats::of(&strategies)?;
            if group.len() == 1 {
                log::warn!("cell {:?} has a single replica; standard error undefined", group[0].cell);
            }
            Ok(CellSummary {
                cell: group[0].cell.clone(),
                params: group[0].params.clone(),
                strategy,
                empirical_contribution: Stats::of(&empirical)?,
                mean_temperature: Stats::of(&temps)?.mean,
                se_undefined: group.len() == 1,
            })
        })
        .collect()
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

/// Learning rates `0, 1/9, ..., 1`.
pub fn default_alphas() -> Vec<f64> {
    linspace(0.0, 1.0, 10)
}

/// Discount factors `0, 0.1, ..., 0.9`.
pub fn default_gammas() -> Vec<f64> {
    (0..10).map(|i| i as f64 / 10.0).collect()
}

pub fn default_sweep_temperatures() -> Vec<f64> {
    vec![0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 2.0, 5.0, 20.0]
}

pub fn default_sweep_replacement_rates() -> Vec<f64> {
    vec![0.0, 0.01, 0.02, 0.05, 0.1]
}

/// Learning-parameter grid with replacement switched off.
pub fn sweep_learning_params(alphas: &[f64], gammas: &[f64], config: &SimulationConfig) -> Result<Vec<CellSummary>> {
    let base = SimulationConfig {
        replacement_rate: 0.0,
        ..config.clone()
    };
    let spec = SweepSpec {
        axes: vec![(SweepParam::Alpha, alphas.to_vec()), (SweepParam::Gamma, gammas.to_vec())],
        replicas: config.replicas,
        iterations: config.iterations,
        master_seed: config.master_seed,
        base,
        stream_tag: LEARNING_SWEEP_TAG,
    };
    aggregate(&run_sweep(&spec)?)
}

/// Temperature by replacement-rate grid with temperature mutation switched
/// off. Returns the summaries and whether the default reward was assumed.
pub fn sweep_temperature_replacement(
    temperatures: &[f64],
    replacement_rates: &[f64],
    config: &SimulationConfig,
) -> Result<(Vec<CellSummary>, bool)> {
    let mut base = SimulationConfig {
        mutation_prob: 0.0,
        ..config.clone()
    };
    let assumed_reward = base.reward.is_none();
    if assumed_reward {
        base.group_size = DEFAULT_TEMP_SWEEP_REWARD.len() - 1;
        base.reward = Some(RewardSpec::Values {
            reward_values: DEFAULT_TEMP_SWEEP_REWARD.to_vec(),
        });
    }
    let spec = SweepSpec {
        axes: vec![
            (SweepParam::Temperature, temperatures.to_vec()),
            (SweepParam::ReplacementRate, replacement_rates.to_vec()),
        ],
        replicas: config.replicas,
        iterations: config.iterations,
        master_seed: config.master_seed,
        base,
        stream_tag: TEMP_SWEEP_TAG,
    };
    Ok((aggregate(&run_sweep(&spec)?)?, assumed_reward))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardSpaceCell {
    pub j0: f64,
    pub j1: f64,
    pub final_t: f64,
    pub classification: Classification,
    pub moves: usize,
    pub converged: bool,
}

/// Adaptive dynamics of temperature over the reward functions
/// `[0, j0, j0 + j1, m_max]`, on a `resolution`-per-axis triangular grid.
pub fn sweep_reward_space(m_max: f64, resolution: usize, settings: &AdaptiveSettings) -> Result<Vec<RewardSpaceCell>> {
    if !(m_max > 0.0 && m_max.is_finite()) {
        return Err(Error::config("m_max", "must be > 0"));
    }
    if resolution < 2 {
        return Err(Error::config("resolution", "must be ≥ 2"));
    }
    dynamics::triangle_cells(m_max, resolution)
        .into_par_iter()
        .map(|(j0, j1)| {
            let reward = RewardFunction::from_jumps(RewardSpacePoint { j0, j1, m_max });
            let out = dynamics::adaptive_trajectory(&reward, settings)?;
            Ok(RewardSpaceCell {
                j0,
                j1,
                final_t: out.final_t,
                classification: out.classification,
                moves: out.trace.len() - 1,
                converged: out.converged,
            })
        })
        .collect()
}

/// Presets for the published experiment setups.
pub mod presets {
    use super::*;
    use crate::config::parse_config_str;

    fn parse(json: &str) -> SimulationConfig {
        parse_config_str(json).expect("preset config is valid").config
    }

    /// Trajectories of five learners, `f = [0, 0, 0, 2, 4, 6]`, no replacement.
    pub fn trajectories(temperature: f64) -> SimulationConfig {
        SimulationConfig {
            temperature,
            ..parse(
                r#"{"group_size": 5, "reward": {"reward_values": [0, 0, 0, 2, 4, 6]},
                    "alpha": 0.1, "gamma": 0.0, "temperature": 0.5, "replacement_rate": 0.0,
                    "iterations": 500, "replicas": 20, "master_seed": 1,
                    "agent_sample_interval": 1}"#,
            )
        }
    }

    /// Learning-parameter sweep with linear reward of slope `k`.
    pub fn learning_sweep(k: f64) -> SimulationConfig {
        SimulationConfig {
            reward: Some(RewardSpec::Linear { linear_k: k }),
            ..parse(
                r#"{"group_size": 5, "reward": {"linear_k": 0.9}, "alpha": 0.5,
                    "temperature": 0.5, "replacement_rate": 0.0, "iterations": 500,
                    "replicas": 100, "master_seed": 2}"#,
            )
        }
    }

    /// Temperature by replacement-rate sweep.
    pub fn temperature_sweep() -> SimulationConfig {
        parse(
            r#"{"group_size": 5, "reward": {"reward_values": [0, 0, 0, 2, 4, 6]},
                "alpha": 0.1, "temperature": 0.5, "replacement_rate": 0.05,
                "iterations": 1000, "replicas": 20, "master_seed": 3}"#,
        )
    }
}
