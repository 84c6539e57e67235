//! Deterministic learning dynamics and adaptive dynamics of temperature.
//!
//! An agent's strategy `x` (probability of contributing) follows
//!
//! ```text
//! x' = x (1 - x) (gain / T - ln(x / (1 - x)))
//! ```
//!
//! with time in units of `1 / alpha` and `gain` the expected advantage of
//! contributing given the co-players' strategies. In logit coordinates
//! `y = ln(x / (1 - x))` this is the relaxation `y' = gain / T - y`, which is
//! how strategies are stored and integrated: equilibria at low temperature lie
//! far closer to 0 or 1 than an `f64` probability can express.
//!
//! The adaptive-dynamics layer compares one mutant temperature against `N - 1`
//! residents. Both systems start from `x = 1/2`, are run to equilibrium, and
//! the mutant's equilibrium payoff is compared with the payoff of a resident
//! in a monomorphic group.

use std::ops::ControlFlow;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{self, count_distribution_split, expectation, RewardFunction, CONTRIBUTION_COST};
use crate::ode::{self, OdeStatus, Tolerances};

fn sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

/// A mixed strategy stored by its logit.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct Strategy {
    logit: f64,
}

impl Strategy {
    pub const HALF: Strategy = Strategy { logit: 0.0 };

    pub fn from_logit(logit: f64) -> Self {
        Self { logit }
    }

    pub fn from_prob(x: f64) -> Result<Self> {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::domain(format!("strategy {x} is not in (0, 1)")));
        }
        Ok(Self {
            logit: (x / (1.0 - x)).ln(),
        })
    }

    pub fn logit(self) -> f64 {
        self.logit
    }

    /// Probability of contributing.
    pub fn prob(self) -> f64 {
        sigmoid(self.logit)
    }

    /// Probability of defecting, accurate even when `prob()` rounds to 1.
    pub fn defect_prob(self) -> f64 {
        sigmoid(-self.logit)
    }

    fn split(self) -> (f64, f64) {
        (self.prob(), self.defect_prob())
    }

    /// `self.prob() - other.prob()` without cancellation.
    pub fn prob_diff(self, other: Strategy) -> f64 {
        if self.logit == other.logit {
            return 0.0;
        }
        -sigmoid(self.logit) * sigmoid(-other.logit) * (other.logit - self.logit).exp_m1()
    }
}

/// One mutant and `N - 1` residents, each group sharing one strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrategyPair {
    pub mutant: Strategy,
    pub resident: Strategy,
    pub t_mutant: f64,
    pub t_resident: f64,
}

impl StrategyPair {
    /// Both strategies at one half, the uninformed starting point.
    pub fn at_half(t_mutant: f64, t_resident: f64) -> Result<Self> {
        Self::new(Strategy::HALF, Strategy::HALF, t_mutant, t_resident)
    }

    pub fn new(mutant: Strategy, resident: Strategy, t_mutant: f64, t_resident: f64) -> Result<Self> {
        for (name, t) in [("t_mutant", t_mutant), ("t_resident", t_resident)] {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::domain(format!("{name} must be > 0, got {t}")));
            }
        }
        Ok(Self {
            mutant,
            resident,
            t_mutant,
            t_resident,
        })
    }

    pub fn x_mutant(&self) -> f64 {
        self.mutant.prob()
    }

    pub fn x_resident(&self) -> f64 {
        self.resident.prob()
    }

    fn with_logits(&self, y: [f64; 2]) -> Self {
        Self {
            mutant: Strategy::from_logit(y[0]),
            resident: Strategy::from_logit(y[1]),
            ..*self
        }
    }

    fn logits(&self) -> [f64; 2] {
        [self.mutant.logit, self.resident.logit]
    }

    fn temperatures(&self) -> [f64; 2] {
        [self.t_mutant, self.t_resident]
    }
}

/// Single-agent learning rate `x (1 - x) (gain - T ln(x / (1 - x)))`.
pub fn learning_derivative(x: f64, gain: f64, temperature: f64) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::domain(format!("x = {x} is not in (0, 1)")));
    }
    if !(temperature > 0.0) {
        return Err(Error::domain(format!("temperature must be > 0, got {temperature}")));
    }
    Ok(x * (1.0 - x) * (gain - temperature * (x / (1.0 - x)).ln()))
}

fn check_group(reward: &RewardFunction) -> Result<usize> {
    let n = reward.group_size();
    if n < 2 {
        return Err(Error::domain(format!("group size {n} < 2")));
    }
    Ok(n)
}

fn gain_of(co_players: impl IntoIterator<Item = Strategy>, reward: &RewardFunction) -> f64 {
    let dist = count_distribution_split(co_players.into_iter().map(Strategy::split));
    game::gain_from_distribution(&dist, reward)
}

/// Contribution gains `[mutant, resident]`: the mutant faces `N - 1`
/// residents, a resident faces the mutant and `N - 2` other residents.
fn pair_gains(pair: &StrategyPair, reward: &RewardFunction, n: usize) -> [f64; 2] {
    let mutant = gain_of(std::iter::repeat_n(pair.resident, n - 1), reward);
    let resident = gain_of(
        std::iter::once(pair.mutant).chain(std::iter::repeat_n(pair.resident, n - 2)),
        reward,
    );
    [mutant, resident]
}

/// `[y_m', y_r']` in logit coordinates.
fn logit_rates(pair: &StrategyPair, reward: &RewardFunction, n: usize) -> [f64; 2] {
    let gains = pair_gains(pair, reward, n);
    let y = pair.logits();
    let t = pair.temperatures();
    [gains[0] / t[0] - y[0], gains[1] / t[1] - y[1]]
}

/// `max_i |gain_i - T_i ln(x_i / (1 - x_i))|`, zero exactly at a fixed point.
pub fn fixed_point_residual(pair: &StrategyPair, reward: &RewardFunction) -> Result<f64> {
    let n = check_group(reward)?;
    let gains = pair_gains(pair, reward, n);
    let y = pair.logits();
    let t = pair.temperatures();
    Ok((gains[0] - t[0] * y[0]).abs().max((gains[1] - t[1] * y[1]).abs()))
}

/// `[x_m', x_r']` with each agent's time scaled by its own temperature:
/// `x_i' = x_i (1 - x_i) (gain_i / T_i - ln(x_i / (1 - x_i)))`.
pub fn pair_derivative(pair: &StrategyPair, reward: &RewardFunction) -> Result<[f64; 2]> {
    let n = check_group(reward)?;
    let rates = logit_rates(pair, reward, n);
    let xs = [pair.mutant, pair.resident];
    Ok([0, 1].map(|i| xs[i].prob() * xs[i].defect_prob() * rates[i]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverSettings {
    /// Equilibrium is declared once the fixed-point residual drops below this.
    pub tolerance: f64,
    /// The flow is followed until the residual drops below this, then the
    /// equilibrium it is approaching is refined with Newton's method.
    pub polish_below: f64,
    /// Upper limit on scaled time.
    pub max_time: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            polish_below: 1e-6,
            max_time: 1e6,
            rtol: 1e-8,
            atol: 1e-10,
            max_steps: 2_000_000,
        }
    }
}

impl SolverSettings {
    fn tolerances(&self) -> Tolerances {
        Tolerances {
            rtol: self.rtol,
            atol: self.atol,
            max_steps: self.max_steps,
            // the relaxation rate is about 1, so longer steps leave the
            // stability region and stall just short of the fixed point
            max_step: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::domain("solver tolerance must be > 0"));
        }
        if !(self.max_time > 0.0) {
            return Err(Error::domain("solver max_time must be > 0"));
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::domain("solver rtol and atol must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumResult {
    pub strategies: StrategyPair,
    /// Fixed-point residual at the final state.
    pub residual: f64,
    pub converged: bool,
    pub elapsed_scaled_time: f64,
}

/// Integrates the pair system from `initial` until the fixed-point residual
/// is below `settings.tolerance` or `settings.max_time` is reached.
pub fn solve_equilibrium(
    initial: StrategyPair,
    reward: &RewardFunction,
    settings: &SolverSettings,
) -> Result<EquilibriumResult> {
    settings.validate()?;
    let n = check_group(reward)?;
    let temps = initial.temperatures();
    let rates = |y: &[f64; 2]| logit_rates(&initial.with_logits(*y), reward, n);
    let bracket = |y: &[f64; 2]| {
        let dy = rates(y);
        [temps[0] * dy[0], temps[1] * dy[1]]
    };
    let residual_of = |dy: &[f64; 2]| (temps[0] * dy[0]).abs().max((temps[1] * dy[1]).abs());
    let run = |y0: [f64; 2], span: f64, below: f64| {
        ode::dopri5(rates, y0, span, &settings.tolerances(), |_, _, dy| {
            if residual_of(dy) < below {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
    };

    let handoff = settings.polish_below.max(settings.tolerance);
    let coarse = run(initial.logits(), settings.max_time, handoff);
    let finish = |y: [f64; 2], t: f64, halted: bool| {
        let residual = residual_of(&rates(&y));
        EquilibriumResult {
            strategies: initial.with_logits(y),
            residual,
            converged: halted && residual < settings.tolerance,
            elapsed_scaled_time: t,
        }
    };
    if coarse.status != OdeStatus::Halted {
        return Ok(finish(coarse.y, coarse.t, false));
    }
    if let Some(y) = newton_polish(coarse.y, bracket, settings.tolerance) {
        return Ok(finish(y, coarse.t, true));
    }
    let fine = run(coarse.y, settings.max_time - coarse.t, settings.tolerance);
    Ok(finish(fine.y, coarse.t + fine.t, fine.status == OdeStatus::Halted))
}

/// Newton's method on the fixed-point bracket, started from a point the flow
/// has already brought close to an equilibrium. Gives up rather than wander
/// off to a different root.
fn newton_polish(start: [f64; 2], f: impl Fn(&[f64; 2]) -> [f64; 2], tol: f64) -> Option<[f64; 2]> {
    let mut y = start;
    for _ in 0..30 {
        let r = f(&y);
        if r[0].abs().max(r[1].abs()) < tol {
            return Some(y);
        }
        let mut jac = [[0.0; 2]; 2];
        for k in 0..2 {
            let h = 1e-6 * y[k].abs().max(1.0);
            let (mut up, mut down) = (y, y);
            up[k] += h;
            down[k] -= h;
            let (fu, fd) = (f(&up), f(&down));
            for i in 0..2 {
                jac[i][k] = (fu[i] - fd[i]) / (2.0 * h);
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        y[0] -= (r[0] * jac[1][1] - r[1] * jac[0][1]) / det;
        y[1] -= (jac[0][0] * r[1] - jac[1][0] * r[0]) / det;
        if !(y[0] - start[0]).abs().max((y[1] - start[1]).abs()).is_finite()
            || (y[0] - start[0]).abs().max((y[1] - start[1]).abs()) > 1e-2
        {
            return None;
        }
    }
    None
}

/// Runs the pair system for `duration` scaled time (negative runs backwards)
/// and reports every accepted step.
pub fn integrate(
    initial: StrategyPair,
    reward: &RewardFunction,
    duration: f64,
    settings: &SolverSettings,
    mut observe: impl FnMut(f64, &StrategyPair),
) -> Result<StrategyPair> {
    settings.validate()?;
    let n = check_group(reward)?;
    let out = ode::dopri5(
        |y| logit_rates(&initial.with_logits(*y), reward, n),
        initial.logits(),
        duration,
        &settings.tolerances(),
        |t, y, _| {
            observe(t, &initial.with_logits(*y));
            ControlFlow::Continue(())
        },
    );
    if out.status != OdeStatus::Finished {
        return Err(Error::domain(format!("integration stopped early: {:?}", out.status)));
    }
    Ok(initial.with_logits(out.y))
}

/// Expected per-round payoff of a focal player contributing with `focal_x`
/// among co-players contributing independently with `others`.
pub fn expected_payoff(focal_x: f64, others: &[f64], reward: &RewardFunction) -> Result<f64> {
    if others.len() + 1 != reward.group_size() {
        return Err(Error::domain(format!(
            "expected {} co-players, got {}",
            reward.group_size() - 1,
            others.len()
        )));
    }
    game::check_probability(focal_x, "focal_x")?;
    let dist = game::contributor_distribution(others)?;
    Ok(payoff_from_distribution(focal_x, 1.0 - focal_x, &dist, reward))
}

fn payoff_from_distribution(x: f64, not_x: f64, dist: &[f64], reward: &RewardFunction) -> f64 {
    let contribute = expectation(dist, |k| reward.value(k + 1)) - CONTRIBUTION_COST;
    let defect = expectation(dist, |k| reward.value(k));
    x * contribute + not_x * defect
}

/// Expected payoff of `players[0]` against `players[1..]`.
fn group_payoff(players: &[Strategy], reward: &RewardFunction) -> f64 {
    let dist = count_distribution_split(players[1..].iter().map(|s| s.split()));
    let (x, not_x) = players[0].split();
    payoff_from_distribution(x, not_x, &dist, reward)
}

/// `payoff(a) - payoff(b)` for two strategy profiles (focal first).
///
/// The payoff is multilinear in the players' probabilities, so the difference
/// telescopes into `sum_i (a_i - b_i) * dF/dx_i` with each partial evaluated
/// at a mixed profile. The differences `a_i - b_i` come straight from the
/// logits, so tiny but real payoff differences keep their sign.
fn payoff_difference(a: &[Strategy], b: &[Strategy], reward: &RewardFunction) -> f64 {
    let pinned = |s: f64| Strategy::from_logit(s);
    let mut mixed: Vec<Strategy> = a.to_vec();
    let mut total = 0.0;
    for i in 0..a.len() {
        let delta = a[i].prob_diff(b[i]);
        if delta != 0.0 {
            mixed[i] = pinned(f64::INFINITY);
            let high = group_payoff(&mixed, reward);
            mixed[i] = pinned(f64::NEG_INFINITY);
            let low = group_payoff(&mixed, reward);
            total += delta * (high - low);
        }
        mixed[i] = b[i];
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvasionFitness {
    pub mutant_t: f64,
    pub resident_t: f64,
    /// `E(m, r) - E(r, r)`.
    pub value: f64,
    /// Both equilibria converged.
    pub converged: bool,
    pub mixed: EquilibriumResult,
    pub monomorphic: EquilibriumResult,
}

/// Equilibrium of a group where everyone has temperature `resident_t`.
pub fn monomorphic_equilibrium(
    resident_t: f64,
    reward: &RewardFunction,
    settings: &SolverSettings,
) -> Result<EquilibriumResult> {
    solve_equilibrium(StrategyPair::at_half(resident_t, resident_t)?, reward, settings)
}

fn invasion_against(
    mutant_t: f64,
    monomorphic: &EquilibriumResult,
    reward: &RewardFunction,
    settings: &SolverSettings,
) -> Result<InvasionFitness> {
    let n = reward.group_size();
    let resident_t = monomorphic.strategies.t_resident;
    let mixed = solve_equilibrium(StrategyPair::at_half(mutant_t, resident_t)?, reward, settings)?;
    let with_mutant: Vec<Strategy> = std::iter::once(mixed.strategies.mutant)
        .chain(std::iter::repeat_n(mixed.strategies.resident, n - 1))
        .collect();
    let without = vec![monomorphic.strategies.resident; n];
    Ok(InvasionFitness {
        mutant_t,
        resident_t,
        value: payoff_difference(&with_mutant, &without, reward),
        converged: mixed.converged && monomorphic.converged,
        mixed,
        monomorphic: *monomorphic,
    })
}

/// Invasion fitness of a single mutant temperature in a resident group:
/// the mutant's equilibrium payoff minus a resident's payoff in a group
/// without the mutant. Equilibria are those reached from `x = 1/2`.
pub fn invasion_fitness(
    mutant_t: f64,
    resident_t: f64,
    reward: &RewardFunction,
    settings: &SolverSettings,
) -> Result<InvasionFitness> {
    check_group(reward)?;
    let mono = monomorphic_equilibrium(resident_t, reward, settings)?;
    invasion_against(mutant_t, &mono, reward, settings)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// Temperature climbs to the upper bound.
    PositiveSelection,
    /// Temperature is pushed to the lower bound.
    NegativeSelection,
    /// Neither neighbour can invade.
    Attractor,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::PositiveSelection => "positive_selection",
            Classification::NegativeSelection => "negative_selection",
            Classification::Attractor => "attractor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Up,
    Down,
    Stop,
}

impl Decision {
    pub fn as_str(&self) -> &'static str {
        match self {
            Decision::Up => "up",
            Decision::Down => "down",
            Decision::Stop => "stop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdaptiveStep {
    pub resident_t: f64,
    /// Fitness of the next temperature up, if inside the bounds.
    pub fitness_up: Option<f64>,
    pub fitness_down: Option<f64>,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptiveOutcome {
    pub final_t: f64,
    pub classification: Classification,
    pub trace: Vec<AdaptiveStep>,
    /// Every equilibrium behind the trace converged.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdaptiveSettings {
    pub start_t: f64,
    pub bounds: [f64; 2],
    pub step: f64,
    pub solver: SolverSettings,
}

impl Default for AdaptiveSettings {
    fn default() -> Self {
        Self {
            start_t: 0.05,
            bounds: [0.05, 1.0],
            step: 0.01,
            solver: SolverSettings::default(),
        }
    }
}

/// Follows the resident temperature through a sequence of nearby mutant
/// invasions, moving up when a slightly hotter mutant invades, otherwise down
/// when a slightly colder one does, and stopping when neither can.
pub fn adaptive_trajectory(reward: &RewardFunction, settings: &AdaptiveSettings) -> Result<AdaptiveOutcome> {
    let AdaptiveSettings {
        start_t,
        bounds: [t_min, t_max],
        step,
        ref solver,
    } = *settings;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::domain(format!("step must be > 0, got {step}")));
    }
    if !(t_min > 0.0 && t_min <= t_max) {
        return Err(Error::domain(format!("invalid temperature bounds [{t_min}, {t_max}]")));
    }
    if !(t_min..=t_max).contains(&start_t) {
        return Err(Error::domain(format!("start {start_t} outside [{t_min}, {t_max}]")));
    }
    check_group(reward)?;

    // Residents live on the lattice start + k * step, clipped to the bounds.
    let at = |k: i64| (start_t + k as f64 * step).clamp(t_min, t_max);
    let mut k: i64 = 0;
    let mut previous: Option<i64> = None;
    let mut trace = Vec::new();
    let mut converged = true;
    let max_moves = 4 * ((t_max - t_min) / step).ceil() as usize + 8;

    loop {
        let resident_t = at(k);
        let mono = monomorphic_equilibrium(resident_t, reward, solver)?;
        converged &= mono.converged;
        let mut probe = |j: i64| -> Result<Option<f64>> {
            let mutant_t = at(j);
            if mutant_t == resident_t {
                return Ok(None);
            }
            let f = invasion_against(mutant_t, &mono, reward, solver)?;
            converged &= f.converged;
            Ok(Some(f.value))
        };
        let fitness_up = probe(k + 1)?;
        let fitness_down = probe(k - 1)?;

        let invades = |f: Option<f64>| f.is_some_and(|v| v > 0.0);
        let mut decision = if invades(fitness_up) {
            Decision::Up
        } else if invades(fitness_down) {
            Decision::Down
        } else {
            Decision::Stop
        };
        let target = match decision {
            Decision::Up => k + 1,
            Decision::Down => k - 1,
            Decision::Stop => k,
        };
        // mutual invasibility: do not bounce back to the previous resident
        if decision != Decision::Stop && Some(target) == previous {
            decision = Decision::Stop;
        }
        trace.push(AdaptiveStep {
            resident_t,
            fitness_up,
            fitness_down,
            decision,
        });
        if decision == Decision::Stop || trace.len() >= max_moves {
            let negative = |f: Option<f64>| f.is_some_and(|v| v < 0.0);
            let classification = if resident_t == t_max && negative(fitness_down) {
                Classification::PositiveSelection
            } else if resident_t == t_min && negative(fitness_up) {
                Classification::NegativeSelection
            } else {
                Classification::Attractor
            };
            return Ok(AdaptiveOutcome {
                final_t: resident_t,
                classification,
                trace,
                converged,
            });
        }
        previous = Some(k);
        k = target;
    }
}

/// Symmetric equilibrium of a group whose members all share one strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymmetricRoot {
    pub strategy: Strategy,
    /// `|gain(x*) - T ln(x*/(1-x*))|` at the root.
    pub residual: f64,
    /// This is the equilibrium the symmetric flow reaches from `x = 1/2`.
    pub reached_from_half: bool,
}

/// Contribution gain when all `N - 1` co-players play `s`.
pub fn symmetric_gain(s: Strategy, reward: &RewardFunction) -> f64 {
    gain_of(std::iter::repeat_n(s, reward.group_size() - 1), reward)
}

/// All roots of `gain(x) - T ln(x / (1 - x))` on `(0, 1)`, found by a sign
/// scan at resolution `1e-3` in `x` (plus outer brackets that cover roots
/// beyond `0.001` and `0.999`) refined by bisection on the logit.
pub fn symmetric_equilibria(reward: &RewardFunction, temperature: f64) -> Result<Vec<SymmetricRoot>> {
    check_group(reward)?;
    if !(temperature > 0.0) {
        return Err(Error::domain(format!("temperature must be > 0, got {temperature}")));
    }
    let h = |y: f64| symmetric_gain(Strategy::from_logit(y), reward) - temperature * y;
    // |gain| <= G, so h > 0 below -G/T and h < 0 above G/T
    let reach = reward.max_abs_net_jump() / temperature + 1.0;
    let mut grid: Vec<f64> = (1..1000)
        .map(|i| {
            let x = i as f64 * 1e-3;
            (x / (1.0 - x)).ln()
        })
        .collect();
    grid[499] = 0.0;
    grid.insert(0, -reach.max(-grid[0] + 1.0));
    grid.push(reach.max(grid[grid.len() - 1] + 1.0));

    let values: Vec<f64> = grid.iter().map(|&y| h(y)).collect();
    let mut roots = Vec::new();
    for i in 0..grid.len() {
        if values[i] == 0.0 {
            roots.push(grid[i]);
        }
        if i + 1 < grid.len() && values[i] * values[i + 1] < 0.0 {
            roots.push(bisect(&h, grid[i], grid[i + 1], values[i]));
        }
    }

    let at_half = h(0.0);
    let from_half = if at_half > 0.0 {
        roots.iter().copied().filter(|&y| y > 0.0).reduce(f64::min)
    } else if at_half < 0.0 {
        roots.iter().copied().filter(|&y| y < 0.0).reduce(f64::max)
    } else {
        Some(0.0)
    };

    Ok(roots
        .into_iter()
        .map(|y| SymmetricRoot {
            strategy: Strategy::from_logit(y),
            residual: h(y).abs(),
            reached_from_half: Some(y) == from_half,
        })
        .collect())
}

fn bisect(h: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, h_lo: f64) -> f64 {
    let lo_positive = h_lo > 0.0;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = h(mid);
        if v == 0.0 {
            return mid;
        }
        if (v > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if h(lo).abs() <= h(hi).abs() {
        lo
    } else {
        hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ManifoldPoint {
    pub j0: f64,
    pub j1: f64,
    pub root_index: usize,
    pub x_star: f64,
    pub logit: f64,
    pub residual: f64,
    /// Sign of the symmetric learning rate at `x = 1/2`.
    pub initial_derivative_sign: i8,
    pub reached_from_half: bool,
}

/// Symmetric equilibria over the three-player reward space `[0, j0, j0 + j1, m]`.
///
/// The grid has `resolution` points per axis from 0 to `m_max`; only points
/// with `j0 + j1 <= m_max` are evaluated. Grid rows are independent and run in
/// parallel; output order is `(j0, j1, root)` regardless.
pub fn null_manifold(m_max: f64, temperature: f64, resolution: usize) -> Result<Vec<ManifoldPoint>> {
    use rayon::prelude::*;

    if !(m_max > 0.0 && m_max.is_finite()) {
        return Err(Error::domain(format!("m_max must be > 0, got {m_max}")));
    }
    if !(temperature > 0.0) {
        return Err(Error::domain(format!("temperature must be > 0, got {temperature}")));
    }
    if resolution < 2 {
        return Err(Error::domain("manifold resolution must be ≥ 2"));
    }
    let cells = triangle_cells(m_max, resolution);
    let per_cell = cells
        .par_iter()
        .map(|&(j0, j1)| {
            let reward = RewardFunction::from_jumps(crate::game::RewardSpacePoint { j0, j1, m_max });
            let sign = symmetric_gain(Strategy::HALF, &reward);
            let roots = symmetric_equilibria(&reward, temperature)?;
            Ok(roots
                .into_iter()
                .enumerate()
                .map(|(i, r)| ManifoldPoint {
                    j0,
                    j1,
                    root_index: i,
                    x_star: r.strategy.prob(),
                    logit: r.strategy.logit(),
                    residual: r.residual,
                    initial_derivative_sign: if sign > 0.0 { 1 } else if sign < 0.0 { -1 } else { 0 },
                    reached_from_half: r.reached_from_half,
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_cell.into_iter().flatten().collect())
}

/// Grid points `(j0, j1)` with `j = i * m / (resolution - 1)` and
/// `j0 + j1 <= m`, decided on the integer indices.
pub fn triangle_cells(m_max: f64, resolution: usize) -> Vec<(f64, f64)> {
    let last = resolution - 1;
    let coord = |i: usize| {
        if i == last {
            m_max
        } else {
            m_max * i as f64 / last as f64
        }
    };
    let mut cells = Vec::new();
    for i0 in 0..=last {
        for i1 in 0..=(last - i0) {
            let j0 = coord(i0);
            // keep j0 + j1 <= m exactly on the boundary
            let j1 = if i0 + i1 == last { m_max - j0 } else { coord(i1).min(m_max - j0) };
            cells.push((j0, j1));
        }
    }
    cells
}
