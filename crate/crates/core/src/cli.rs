//! Command-line interface.
//!
//! Every subcommand writes one CSV (to `--output`, or stdout) and, when
//! writing to a file, a `<stem>.meta.json` sidecar holding everything needed to
//! rerun it. Exit status: 0 on success, 1 on a domain or configuration error,
//! 2 when an equilibrium failed to converge (output is still written), 64 on
//! a usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{parse_config_str, ParsedConfig, SimulationConfig};
use crate::dynamics::{self, AdaptiveSettings, SolverSettings, Strategy, StrategyPair};
use crate::error::{Error, Result};
use crate::evolution;
use crate::experiments::{self, CellSummary, SweepParam};
use crate::game::RewardFunction;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "evoq", version, about = "Evolution of learning in public goods games")]
pub struct Cli {
    /// Worker threads for replicas, trials and grid cells.
    #[arg(long, global = true, env = "EVOQ_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the learning population and write its trajectory.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Estimate the fixation probability of a single temperature mutant.
    Fixation {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        resident_t: f64,
        #[arg(long)]
        mutant_t: f64,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Equilibrium of one mutant among residents.
    OdeEquilibrium {
        #[command(flatten)]
        reward: RewardArgs,
        #[arg(long)]
        mutant_t: f64,
        /// Defaults to the mutant temperature.
        #[arg(long)]
        resident_t: Option<f64>,
        #[arg(long, default_value_t = 0.5)]
        x_mutant: f64,
        #[arg(long, default_value_t = 0.5)]
        x_resident: f64,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Invasion fitness of a mutant temperature.
    Invasion {
        #[command(flatten)]
        reward: RewardArgs,
        #[arg(long)]
        mutant_t: f64,
        #[arg(long)]
        resident_t: f64,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Adaptive dynamics of temperature from a starting resident.
    Adaptive {
        #[command(flatten)]
        reward: RewardArgs,
        #[command(flatten)]
        adaptive: AdaptiveArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Grid over learning rate and discount factor, without replacement.
    SweepLearning {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        gammas: Option<Vec<f64>>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Grid over temperature and replacement rate, without mutation.
    SweepTempReplacement {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_delimiter = ',')]
        temperatures: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        replacement_rates: Option<Vec<f64>>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Adaptive dynamics over three-player rewards [0, j0, j0 + j1, m].
    SweepRewardSpace {
        #[arg(long, default_value_t = 10.0)]
        m_max: f64,
        #[arg(long, default_value_t = 20)]
        resolution: usize,
        #[command(flatten)]
        adaptive: AdaptiveArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Symmetric equilibria over three-player rewards [0, j0, j0 + j1, m].
    Manifold {
        #[arg(long, default_value_t = 3.0)]
        m_max: f64,
        #[arg(long, default_value_t = 0.1)]
        temperature: f64,
        #[arg(long, default_value_t = 31)]
        resolution: usize,
        #[command(flatten)]
        out: OutputArgs,
    },
}

/// A JSON config file plus per-field overrides.
#[derive(Debug, Default, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub group_size: Option<usize>,
    /// Reward values f(0),...,f(N), comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, conflicts_with = "linear_k")]
    pub reward: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true)]
    pub linear_k: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub replacement_rate: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub mutation_prob: Option<f64>,
    #[arg(long)]
    pub mutation_sigma: Option<f64>,
    /// Lower and upper temperature bound, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub temperature_bounds: Option<Vec<f64>>,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub replicas: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_fixation_steps: Option<u64>,
    #[arg(long)]
    pub agent_sample_interval: Option<u64>,
}

#[derive(Debug, Default, Args)]
pub struct RewardArgs {
    /// Read `group_size` and `reward` from a full config file.
    #[arg(long, conflicts_with_all = ["reward", "linear_k"])]
    pub config: Option<PathBuf>,
    /// Reward values f(0),...,f(N), comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, conflicts_with = "linear_k")]
    pub reward: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true, requires = "group_size")]
    pub linear_k: Option<f64>,
    #[arg(long)]
    pub group_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 1e6)]
    pub max_time: f64,
}

#[derive(Debug, Args)]
pub struct AdaptiveArgs {
    #[arg(long, default_value_t = 0.05)]
    pub start_t: f64,
    #[arg(long, default_value_t = 0.05)]
    pub t_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
}

#[derive(Debug, Default, Args)]
pub struct OutputArgs {
    /// CSV destination; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

impl SolverArgs {
    fn settings(&self) -> SolverSettings {
        SolverSettings {
            tolerance: self.tolerance,
            max_time: self.max_time,
            ..SolverSettings::default()
        }
    }
}

impl AdaptiveArgs {
    fn settings(&self, solver: &SolverArgs) -> AdaptiveSettings {
        AdaptiveSettings {
            start_t: self.start_t,
            bounds: [self.t_min, self.t_max],
            step: self.step,
            solver: solver.settings(),
        }
    }
}

impl ConfigArgs {
    /// Merges the overrides into the config file (or an empty one) and
    /// validates the result.
    pub fn load(&self) -> Result<ParsedConfig> {
        let mut doc: Map<String, Value> = match &self.config {
            Some(path) => {
                let text = read(path)?;
                serde_json::from_str(&text).map_err(|e| Error::config("config", e.to_string()))?
            }
            None => Map::new(),
        };
        let mut set = |key: &str, value: Option<Value>| {
            if let Some(v) = value {
                doc.insert(key.to_string(), v);
            }
        };
        set("group_size", self.group_size.map(Value::from));
        set("reward", self.reward.as_ref().map(|v| json!({ "reward_values": v })));
        set("reward", self.linear_k.map(|k| json!({ "linear_k": k })));
        set("alpha", self.alpha.map(Value::from));
        set("gamma", self.gamma.map(Value::from));
        set("temperature", self.temperature.map(Value::from));
        set("replacement_rate", self.replacement_rate.map(Value::from));
        set("beta", self.beta.map(Value::from));
        set("mutation_prob", self.mutation_prob.map(Value::from));
        set("mutation_sigma", self.mutation_sigma.map(Value::from));
        set("temperature_bounds", self.temperature_bounds.as_ref().map(|v| json!(v)));
        set("iterations", self.iterations.map(Value::from));
        set("replicas", self.replicas.map(Value::from));
        set("master_seed", self.seed.map(Value::from));
        set("max_fixation_steps", self.max_fixation_steps.map(Value::from));
        set("agent_sample_interval", self.agent_sample_interval.map(Value::from));
        if let (None, Some(Value::Object(r))) = (doc.get("group_size"), doc.get("reward")) {
            if let Some(Value::Array(values)) = r.get("reward_values") {
                let n = values.len().saturating_sub(1);
                doc.insert("group_size".into(), Value::from(n));
            }
        }
        parse_config_str(&Value::Object(doc).to_string())
    }
}

impl RewardArgs {
    fn resolve(&self) -> Result<RewardFunction> {
        if let Some(path) = &self.config {
            return parse_config_str(&read(path)?)?.config.reward_function();
        }
        let reward = match (&self.reward, self.linear_k) {
            (Some(values), _) => RewardFunction::new(values.clone())?,
            (None, Some(k)) => RewardFunction::linear(k, self.group_size.unwrap_or(0))?,
            (None, None) => return Err(Error::config("reward", "is required (--reward, --linear-k or --config)")),
        };
        if let Some(n) = self.group_size {
            if n != reward.group_size() {
                return Err(Error::config(
                    "reward",
                    format!("has {} entries but group_size is {n}", reward.values().len()),
                ));
            }
        }
        Ok(reward)
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

/// One finished command: a table plus its metadata.
struct Report {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    meta: Value,
    converged: bool,
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    version: &'a str,
    parameters: &'a Value,
    results: &'a Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<&'a SimulationConfig>,
    defaults_applied: &'a [&'static str],
    #[serde(skip_serializing_if = "Option::is_none")]
    master_seed: Option<u64>,
    assumptions: &'a [String],
    converged: bool,
}

/// `out.csv` becomes `out.meta.json`.
pub fn sidecar_path(output: &Path) -> PathBuf {
    output.with_extension("meta.json")
}

fn write_table(dest: Option<&Path>, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let sink: Box<dyn Write> = match dest {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Box::new(std::fs::File::create(path)?)
        }
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

struct Context<'a> {
    name: &'a str,
    parameters: Value,
    parsed: Option<&'a ParsedConfig>,
    assumptions: Vec<String>,
}

fn emit(ctx: Context, output: Option<&Path>, report: Report) -> Result<bool> {
    write_table(output, &report.header, &report.rows)?;
    if let Some(path) = output {
        let meta = Metadata {
            command: ctx.name,
            version: env!("CARGO_PKG_VERSION"),
            parameters: &ctx.parameters,
            results: &report.meta,
            config: ctx.parsed.map(|p| &p.config),
            defaults_applied: ctx.parsed.map_or(&[], |p| &p.defaults_applied),
            master_seed: ctx.parsed.map(|p| p.config.master_seed),
            assumptions: &ctx.assumptions,
            converged: report.converged,
        };
        let mut text = serde_json::to_string_pretty(&meta)?;
        text.push('\n');
        std::fs::write(sidecar_path(path), text)?;
    }
    Ok(report.converged)
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn simulate(parsed: &ParsedConfig) -> Result<Report> {
    let config = &parsed.config;
    let runs = evolution::run_replicas(config)?;
    let mut head = header(&["replica", "step", "mean_strategy", "mean_temperature", "contribution_rate"]);
    let per_agent = config.agent_sample_interval > 0;
    if per_agent {
        head.extend((0..config.group_size).map(|i| format!("agent_{i}")));
    }
    let mut rows = Vec::new();
    for run in &runs {
        for p in &run.points {
            let mut row = vec![
                run.replica.to_string(),
                p.step.to_string(),
                fmt(p.mean_strategy),
                fmt(p.mean_temperature),
                fmt(p.contribution_rate),
            ];
            if per_agent {
                match &p.strategies {
                    Some(s) => row.extend(s.iter().map(|&v| fmt(v))),
                    None => row.extend(std::iter::repeat_n(String::new(), config.group_size)),
                }
            }
            rows.push(row);
        }
    }
    let seeds: Vec<u64> = runs.iter().map(|r| r.seed).collect();
    let finals: Vec<f64> = runs.iter().map(|r| r.final_mean_strategy()).collect();
    Ok(Report {
        header: head,
        rows,
        meta: json!({ "replica_seeds": seeds, "final_mean_strategy": finals }),
        converged: true,
    })
}

fn fixation(parsed: &ParsedConfig, resident_t: f64, mutant_t: f64, trials: u64) -> Result<Report> {
    let est = evolution::estimate_fixation(resident_t, mutant_t, &parsed.config, trials)?;
    Ok(Report {
        header: header(&[
            "resident_T",
            "mutant_T",
            "trials",
            "fixations",
            "extinctions",
            "censored",
            "p_hat",
            "se",
        ]),
        rows: vec![vec![
            fmt(est.resident_t),
            fmt(est.mutant_t),
            est.trials.to_string(),
            est.fixations.to_string(),
            est.extinctions.to_string(),
            est.censored.to_string(),
            fmt(est.p_hat),
            fmt(est.se),
        ]],
        meta: json!({ "neutral_expectation": 1.0 / parsed.config.group_size as f64 }),
        converged: true,
    })
}

fn ode_equilibrium(reward: &RewardFunction, initial: StrategyPair, solver: &SolverSettings) -> Result<Report> {
    let eq = dynamics::solve_equilibrium(initial, reward, solver)?;
    let s = eq.strategies;
    Ok(Report {
        header: header(&[
            "mutant_T",
            "resident_T",
            "x_mutant",
            "x_resident",
            "logit_mutant",
            "logit_resident",
            "residual",
            "converged",
            "elapsed_scaled_time",
        ]),
        rows: vec![vec![
            fmt(s.t_mutant),
            fmt(s.t_resident),
            fmt(s.x_mutant()),
            fmt(s.x_resident()),
            fmt(s.mutant.logit()),
            fmt(s.resident.logit()),
            fmt(eq.residual),
            eq.converged.to_string(),
            fmt(eq.elapsed_scaled_time),
        ]],
        meta: json!({}),
        converged: eq.converged,
    })
}

fn invasion(reward: &RewardFunction, mutant_t: f64, resident_t: f64, solver: &SolverSettings) -> Result<Report> {
    let f = dynamics::invasion_fitness(mutant_t, resident_t, reward, solver)?;
    Ok(Report {
        header: header(&[
            "mutant_T",
            "resident_T",
            "fitness",
            "x_mutant",
            "x_resident_with_mutant",
            "x_resident_alone",
            "converged",
        ]),
        rows: vec![vec![
            fmt(f.mutant_t),
            fmt(f.resident_t),
            fmt(f.value),
            fmt(f.mixed.strategies.x_mutant()),
            fmt(f.mixed.strategies.x_resident()),
            fmt(f.monomorphic.strategies.x_resident()),
            f.converged.to_string(),
        ]],
        meta: json!({}),
        converged: f.converged,
    })
}

fn adaptive(reward: &RewardFunction, settings: &AdaptiveSettings) -> Result<Report> {
    let out = dynamics::adaptive_trajectory(reward, settings)?;
    let rows = out
        .trace
        .iter()
        .map(|s| {
            vec![
                fmt(s.resident_t),
                fmt_opt(s.fitness_up),
                fmt_opt(s.fitness_down),
                s.decision.as_str().to_string(),
            ]
        })
        .collect();
    Ok(Report {
        header: header(&["resident_T", "fitness_up", "fitness_down", "decision"]),
        rows,
        meta: json!({ "final_T": out.final_t, "classification": out.classification }),
        converged: out.converged,
    })
}

fn summary_rows(cells: &[CellSummary]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut head: Vec<String> = cells
        .first()
        .map(|c| c.params.iter().map(|(p, _)| p.name().to_string()).collect())
        .unwrap_or_default();
    head.extend(header(&[
        "replicas",
        "mean_strategy",
        "sd",
        "se",
        "se_undefined",
        "empirical_contribution",
        "mean_temperature",
    ]));
    let rows = cells
        .iter()
        .map(|c| {
            let mut row: Vec<String> = c.params.iter().map(|&(_, v)| fmt(v)).collect();
            row.extend([
                c.strategy.n.to_string(),
                fmt(c.strategy.mean),
                fmt(c.strategy.sd),
                fmt(c.strategy.se),
                c.se_undefined.to_string(),
                fmt(c.empirical_contribution.mean),
                fmt(c.mean_temperature),
            ]);
            row
        })
        .collect();
    (head, rows)
}

fn sweep_report(cells: &[CellSummary], axes: &[(SweepParam, &[f64])]) -> Report {
    let (head, rows) = summary_rows(cells);
    let axes: Map<String, Value> = axes.iter().map(|(p, v)| (p.name().to_string(), json!(v))).collect();
    Report {
        header: head,
        rows,
        meta: json!({ "axes": axes }),
        converged: true,
    }
}

fn reward_space(m_max: f64, resolution: usize, settings: &AdaptiveSettings) -> Result<Report> {
    let cells = experiments::sweep_reward_space(m_max, resolution, settings)?;
    let converged = cells.iter().all(|c| c.converged);
    let rows = cells
        .iter()
        .map(|c| {
            vec![
                fmt(c.j0),
                fmt(c.j1),
                fmt(c.final_t),
                c.classification.as_str().to_string(),
                c.moves.to_string(),
                c.converged.to_string(),
            ]
        })
        .collect();
    Ok(Report {
        header: header(&["j0", "j1", "final_T", "classification", "moves", "converged"]),
        rows,
        meta: json!({}),
        converged,
    })
}

fn manifold(m_max: f64, temperature: f64, resolution: usize) -> Result<Report> {
    let points = dynamics::null_manifold(m_max, temperature, resolution)?;
    let rows = points
        .iter()
        .map(|p| {
            vec![
                fmt(p.j0),
                fmt(p.j1),
                p.root_index.to_string(),
                fmt(p.x_star),
                p.initial_derivative_sign.to_string(),
                p.reached_from_half.to_string(),
                fmt(p.logit),
                fmt(p.residual),
            ]
        })
        .collect();
    Ok(Report {
        header: header(&[
            "j0",
            "j1",
            "root_index",
            "x_star",
            "initial_derivative_sign",
            "reached_from_half",
            "logit",
            "residual",
        ]),
        rows,
        meta: json!({}),
        converged: true,
    })
}

fn resolved_output(flag: &OutputArgs, parsed: Option<&ParsedConfig>) -> Option<PathBuf> {
    flag.output.clone().or_else(|| parsed.and_then(|p| p.config.output.clone()))
}

/// Runs a parsed command; `Ok(false)` means some equilibrium did not converge.
pub fn dispatch(command: &Command) -> Result<bool> {
    let ctx = |name, parameters, parsed, assumptions| Context {
        name,
        parameters,
        parsed,
        assumptions,
    };
    match command {
        Command::Simulate { config, out } => {
            let parsed = config.load()?;
            let report = simulate(&parsed)?;
            let dest = resolved_output(out, Some(&parsed));
            emit(ctx("simulate", json!({}), Some(&parsed), vec![]), dest.as_deref(), report)
        }
        Command::Fixation {
            config,
            resident_t,
            mutant_t,
            trials,
            out,
        } => {
            let parsed = config.load()?;
            let report = fixation(&parsed, *resident_t, *mutant_t, *trials)?;
            let params = json!({ "resident_T": resident_t, "mutant_T": mutant_t, "trials": trials });
            let dest = resolved_output(out, Some(&parsed));
            emit(ctx("fixation", params, Some(&parsed), vec![]), dest.as_deref(), report)
        }
        Command::OdeEquilibrium {
            reward,
            mutant_t,
            resident_t,
            x_mutant,
            x_resident,
            solver,
            out,
        } => {
            let r = reward.resolve()?;
            let resident_t = resident_t.unwrap_or(*mutant_t);
            let initial = StrategyPair::new(
                Strategy::from_prob(*x_mutant)?,
                Strategy::from_prob(*x_resident)?,
                *mutant_t,
                resident_t,
            )?;
            let settings = solver.settings();
            let report = ode_equilibrium(&r, initial, &settings)?;
            let params = json!({ "reward": r.values(), "solver": settings,
                "x_mutant_0": x_mutant, "x_resident_0": x_resident });
            emit(ctx("ode-equilibrium", params, None, vec![]), out.output.as_deref(), report)
        }
        Command::Invasion {
            reward,
            mutant_t,
            resident_t,
            solver,
            out,
        } => {
            let r = reward.resolve()?;
            let settings = solver.settings();
            let report = invasion(&r, *mutant_t, *resident_t, &settings)?;
            let params = json!({ "reward": r.values(), "solver": settings });
            emit(ctx("invasion", params, None, vec![]), out.output.as_deref(), report)
        }
        Command::Adaptive {
            reward,
            adaptive: a,
            solver,
            out,
        } => {
            let r = reward.resolve()?;
            let settings = a.settings(solver);
            let report = adaptive(&r, &settings)?;
            let params = json!({ "reward": r.values(), "adaptive": settings });
            emit(ctx("adaptive", params, None, vec![]), out.output.as_deref(), report)
        }
        Command::SweepLearning {
            config,
            alphas,
            gammas,
            out,
        } => {
            let parsed = config.load()?;
            let alphas = alphas.clone().unwrap_or_else(experiments::default_alphas);
            let gammas = gammas.clone().unwrap_or_else(experiments::default_gammas);
            let cells = experiments::sweep_learning_params(&alphas, &gammas, &parsed.config)?;
            let report = sweep_report(&cells, &[(SweepParam::Alpha, &alphas), (SweepParam::Gamma, &gammas)]);
            let notes = vec!["replacement_rate forced to 0".to_string()];
            let dest = resolved_output(out, Some(&parsed));
            emit(ctx("sweep-learning", json!({}), Some(&parsed), notes), dest.as_deref(), report)
        }
        Command::SweepTempReplacement {
            config,
            temperatures,
            replacement_rates,
            out,
        } => {
            let parsed = config.load()?;
            let temps = temperatures.clone().unwrap_or_else(experiments::default_sweep_temperatures);
            let rates = replacement_rates
                .clone()
                .unwrap_or_else(experiments::default_sweep_replacement_rates);
            let (cells, assumed) = experiments::sweep_temperature_replacement(&temps, &rates, &parsed.config)?;
            let report = sweep_report(
                &cells,
                &[(SweepParam::Temperature, &temps), (SweepParam::ReplacementRate, &rates)],
            );
            let mut notes = vec!["mutation_prob forced to 0".to_string()];
            if assumed {
                notes.push(format!(
                    "reward not configured; assumed {:?}",
                    experiments::DEFAULT_TEMP_SWEEP_REWARD
                ));
            }
            let dest = resolved_output(out, Some(&parsed));
            emit(ctx("sweep-temp-replacement", json!({}), Some(&parsed), notes), dest.as_deref(), report)
        }
        Command::SweepRewardSpace {
            m_max,
            resolution,
            adaptive: a,
            solver,
            out,
        } => {
            let settings = a.settings(solver);
            let report = reward_space(*m_max, *resolution, &settings)?;
            let params = json!({ "m_max": m_max, "resolution": resolution, "adaptive": settings });
            emit(ctx("sweep-reward-space", params, None, vec![]), out.output.as_deref(), report)
        }
        Command::Manifold {
            m_max,
            temperature,
            resolution,
            out,
        } => {
            let report = manifold(*m_max, *temperature, *resolution)?;
            let params = json!({ "m_max": m_max, "temperature": temperature, "resolution": resolution });
            emit(ctx("manifold", params, None, vec![]), out.output.as_deref(), report)
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_ERROR;
        }
    };
    match pool.install(|| dispatch(&cli.command)) {
        Ok(true) => EXIT_OK,
        Ok(false) => {
            eprintln!("warning: equilibrium did not converge; output written");
            EXIT_NOT_CONVERGED
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("evoq").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn usage_errors_exit_64() {
        assert_eq!(run(["evoq", "no-such-command"]), EXIT_USAGE);
        assert_eq!(run(["evoq"]), EXIT_USAGE);
        assert_eq!(run(["evoq", "manifold", "--bogus"]), EXIT_USAGE);
    }

    #[test]
    fn overrides_merge_into_config() {
        let cli = parse(&[
            "simulate",
            "--reward",
            "0,0,3,4",
            "--alpha",
            "0.1",
            "--temperature",
            "0.5",
            "--replacement-rate",
            "0",
            "--iterations",
            "10",
            "--seed",
            "3",
        ]);
        let Command::Simulate { config, .. } = cli.command else {
            panic!()
        };
        let parsed = config.load().unwrap();
        assert_eq!(parsed.config.group_size, 3);
        assert_eq!(parsed.config.master_seed, 3);
        assert!(parsed.defaults_applied.contains(&"beta"));
    }

    #[test]
    fn config_errors_name_the_field() {
        let args = ConfigArgs {
            reward: Some(vec![0.0, 1.0, 2.0]),
            alpha: Some(0.1),
            temperature: Some(0.0),
            replacement_rate: Some(0.0),
            iterations: Some(5),
            seed: Some(1),
            ..ConfigArgs::default()
        };
        let err = args.load().unwrap_err().to_string();
        assert!(err.contains("temperature must be > 0"), "{err}");
        let missing = ConfigArgs::default().load().unwrap_err().to_string();
        assert!(missing.contains("is required"));
    }

    #[test]
    fn reward_args() {
        let r = RewardArgs {
            linear_k: Some(0.5),
            group_size: Some(3),
            ..RewardArgs::default()
        };
        assert_eq!(r.resolve().unwrap().values(), &[0.0, 0.5, 1.0, 1.5]);
        let mismatch = RewardArgs {
            reward: Some(vec![0.0, 1.0]),
            group_size: Some(3),
            ..RewardArgs::default()
        };
        assert!(mismatch.resolve().is_err());
        assert!(RewardArgs::default().resolve().is_err());
    }

    #[test]
    fn sidecar_naming() {
        assert_eq!(sidecar_path(Path::new("out/run.csv")), PathBuf::from("out/run.meta.json"));
    }
}
