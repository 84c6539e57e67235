//! Run configuration: JSON ingestion with strict key checking, defaults and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::EvolutionParams;
use crate::game::{RewardFunction, RewardSpec};
use crate::learner::LearnerParams;

pub const DEFAULT_BETA: f64 = 1.0;
pub const DEFAULT_GAMMA: f64 = 0.0;
pub const DEFAULT_TEMPERATURE_BOUNDS: [f64; 2] = [0.01, 2.0];
pub const DEFAULT_MUTATION_PROB: f64 = 0.0;
pub const DEFAULT_MUTATION_SIGMA: f64 = 0.05;
pub const DEFAULT_REPLICAS: u32 = 1;
pub const DEFAULT_MAX_FIXATION_STEPS: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub group_size: usize,
    /// Optional only so that sweeps with a documented default reward can omit it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<RewardSpec>,
    pub alpha: f64,
    pub gamma: f64,
    pub temperature: f64,
    pub replacement_rate: f64,
    pub beta: f64,
    pub mutation_prob: f64,
    pub mutation_sigma: f64,
    pub temperature_bounds: [f64; 2],
    pub iterations: u64,
    pub replicas: u32,
    pub master_seed: u64,
    pub max_fixation_steps: u64,
    /// Record every agent's strategy on steps divisible by this; 0 disables.
    pub agent_sample_interval: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// The on-disk form, where every defaultable field may be missing.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    group_size: Option<usize>,
    reward: Option<RewardSpec>,
    alpha: Option<f64>,
    gamma: Option<f64>,
    temperature: Option<f64>,
    replacement_rate: Option<f64>,
    beta: Option<f64>,
    mutation_prob: Option<f64>,
    mutation_sigma: Option<f64>,
    temperature_bounds: Option<[f64; 2]>,
    iterations: Option<u64>,
    replicas: Option<u32>,
    master_seed: Option<u64>,
    max_fixation_steps: Option<u64>,
    agent_sample_interval: Option<u64>,
    output: Option<PathBuf>,
}

/// A validated config plus the names of the fields that were filled by defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub config: SimulationConfig,
    pub defaults_applied: Vec<&'static str>,
}

fn required<T>(value: Option<T>, field: &str) -> Result<T> {
    value.ok_or_else(|| Error::config(field, "is required"))
}

fn defaulted<T>(value: Option<T>, default: T, field: &'static str, applied: &mut Vec<&'static str>) -> T {
    value.unwrap_or_else(|| {
        applied.push(field);
        default
    })
}

pub fn parse_config_str(json: &str) -> Result<ParsedConfig> {
    let raw: RawConfig = serde_json::from_str(json).map_err(|e| Error::config("config", e.to_string()))?;
    let mut applied = Vec::new();
    let config = SimulationConfig {
        group_size: required(raw.group_size, "group_size")?,
        reward: raw.reward,
        alpha: required(raw.alpha, "alpha")?,
        gamma: defaulted(raw.gamma, DEFAULT_GAMMA, "gamma", &mut applied),
        temperature: required(raw.temperature, "temperature")?,
        replacement_rate: required(raw.replacement_rate, "replacement_rate")?,
        beta: defaulted(raw.beta, DEFAULT_BETA, "beta", &mut applied),
        mutation_prob: defaulted(raw.mutation_prob, DEFAULT_MUTATION_PROB, "mutation_prob", &mut applied),
        mutation_sigma: defaulted(raw.mutation_sigma, DEFAULT_MUTATION_SIGMA, "mutation_sigma", &mut applied),
        temperature_bounds: defaulted(
            raw.temperature_bounds,
            DEFAULT_TEMPERATURE_BOUNDS,
            "temperature_bounds",
            &mut applied,
        ),
        iterations: required(raw.iterations, "iterations")?,
        replicas: defaulted(raw.replicas, DEFAULT_REPLICAS, "replicas", &mut applied),
        master_seed: required(raw.master_seed, "master_seed")?,
        max_fixation_steps: defaulted(
            raw.max_fixation_steps,
            DEFAULT_MAX_FIXATION_STEPS,
            "max_fixation_steps",
            &mut applied,
        ),
        agent_sample_interval: defaulted(raw.agent_sample_interval, 0, "agent_sample_interval", &mut applied),
        output: raw.output,
    };
    config.validate()?;
    Ok(ParsedConfig {
        config,
        defaults_applied: applied,
    })
}

pub fn parse_config(path: &Path) -> Result<ParsedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::config("group_size", "must be ≥ 2"));
        }
        if let Some(spec) = &self.reward {
            spec.resolve(self.group_size)?;
        }
        self.learner_params()?;
        self.evolution_params()?;
        if self.iterations < 1 {
            return Err(Error::config("iterations", "must be ≥ 1"));
        }
        if self.replicas < 1 {
            return Err(Error::config("replicas", "must be ≥ 1"));
        }
        if self.max_fixation_steps < 1 {
            return Err(Error::config("max_fixation_steps", "must be ≥ 1"));
        }
        Ok(())
    }

    pub fn learner_params(&self) -> Result<LearnerParams> {
        let params = LearnerParams {
            alpha: self.alpha,
            gamma: self.gamma,
            temperature: self.temperature,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn evolution_params(&self) -> Result<EvolutionParams> {
        let params = EvolutionParams {
            replacement_rate: self.replacement_rate,
            selection_strength: self.beta,
            mutation_prob: self.mutation_prob,
            mutation_sigma: self.mutation_sigma,
            temperature_bounds: self.temperature_bounds,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn reward_function(&self) -> Result<RewardFunction> {
        self.reward
            .as_ref()
            .ok_or_else(|| Error::config("reward", "is required for this command"))?
            .resolve(self.group_size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: &str = r#"{
        "group_size": 5,
        "reward": {"reward_values": [0, 0, 0, 2, 4, 6]},
        "alpha": 0.1,
        "temperature": 0.5,
        "replacement_rate": 0.0,
        "iterations": 500,
        "master_seed": 42
    }"#;

    #[test]
    fn defaults_are_applied_and_listed() {
        let parsed = parse_config_str(FIG1).unwrap();
        let c = &parsed.config;
        assert_eq!(c.beta, 1.0);
        assert_eq!(c.gamma, 0.0);
        assert_eq!(c.temperature_bounds, [0.01, 2.0]);
        assert_eq!(c.mutation_prob, 0.0);
        assert_eq!(c.mutation_sigma, 0.05);
        for field in ["beta", "gamma", "temperature_bounds", "mutation_prob", "mutation_sigma"] {
            assert!(parsed.defaults_applied.contains(&field), "{field}");
        }
        assert!(!parsed.defaults_applied.contains(&"alpha"));
    }

    #[test]
    fn round_trip_adds_only_defaults() {
        let parsed = parse_config_str(FIG1).unwrap();
        let text = serde_json::to_string(&parsed.config).unwrap();
        let again = parse_config_str(&text).unwrap();
        assert_eq!(again.config, parsed.config);
        assert!(again.defaults_applied.is_empty());

        let original: serde_json::Value = serde_json::from_str(FIG1).unwrap();
        let written: serde_json::Value = serde_json::from_str(&text).unwrap();
        for (k, v) in original.as_object().unwrap() {
            let w = &written[k];
            if v.is_number() {
                assert_eq!(v.as_f64(), w.as_f64(), "{k}");
            } else {
                assert_eq!(
                    serde_json::to_string(v).unwrap().replace(' ', ""),
                    serde_json::to_string(w).unwrap().replace(".0", "")
                );
            }
        }
    }

    fn with(field: &str, value: &str) -> String {
        let mut v: serde_json::Value = serde_json::from_str(FIG1).unwrap();
        v[field] = serde_json::from_str(value).unwrap();
        v.to_string()
    }

    fn err_text(json: &str) -> String {
        parse_config_str(json).unwrap_err().to_string()
    }

    #[test]
    fn invalid_fields_are_named() {
        assert!(err_text(&with("group_size", "1")).contains("group_size must be ≥ 2"));
        assert!(err_text(&with("temperature", "0")).contains("temperature must be > 0"));
        assert!(err_text(&with("alpha", "1.5")).contains("alpha"));
        assert!(err_text(&with("gamma", "1.0")).contains("gamma"));
        assert!(err_text(&with("replacement_rate", "2")).contains("replacement_rate"));
        assert!(err_text(&with("temperature_bounds", "[0, 1]")).contains("temperature_bounds"));
        assert!(err_text(&with("reward", r#"{"reward_values": [0, 1]}"#)).contains("reward"));
        assert!(err_text(&with("iterations", "0")).contains("iterations"));
    }

    #[test]
    fn unknown_and_missing_keys_rejected() {
        assert!(err_text(&with("temprature", "0.5")).contains("unknown field"));
        let mut v: serde_json::Value = serde_json::from_str(FIG1).unwrap();
        v.as_object_mut().unwrap().remove("alpha");
        assert!(err_text(&v.to_string()).contains("alpha is required"));
    }

    #[test]
    fn linear_shorthand() {
        let c = parse_config_str(&with("reward", r#"{"linear_k": 0.9}"#)).unwrap().config;
        assert_eq!(c.reward_function().unwrap().group_size(), 5);
        assert!((c.reward_function().unwrap().value(5) - 4.5).abs() < 1e-12);
    }
}
