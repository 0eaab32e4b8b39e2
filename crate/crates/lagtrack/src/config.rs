//! `key = value` configuration files.
//!
//! Keys are grouped by prefix: `det.`, `move.`, `div.`, `app.`, `dis.`
//! for cost coefficients, `solver.` for the dual solver and `gen.` for the
//! synthetic generator. Unknown keys are errors.

use lagtrack_core::bca::{PrimalMode, SolverConfig};
use lagtrack_core::cost_model::CostParams;
use lagtrack_core::primal::PrimalDirections;
use lagtrack_core::synth::GenParams;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Config {
    pub costs: CostParams,
    pub solver: SolverConfig,
    pub generator: GenParams,
}

fn parse_value<T: std::str::FromStr>(value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("invalid value `{value}`"))
}

impl Config {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let c = &mut self.costs;
        let float: &mut f64 = match key {
            "det.alpha" => &mut c.detection.alpha,
            "det.beta" => &mut c.detection.beta,
            "det.gamma" => &mut c.detection.gamma,
            "det.area_limit" => &mut c.detection.area_limit,
            "move.alpha" => &mut c.movement.alpha,
            "move.beta" => &mut c.movement.beta,
            "div.alpha" => &mut c.division.alpha,
            "div.beta" => &mut c.division.beta,
            "div.gamma" => &mut c.division.gamma,
            "div.kappa" => &mut c.division.kappa,
            "div.rho" => &mut c.division.rho,
            "div.sigma" => &mut c.division.sigma,
            "div.tau" => &mut c.division.tau,
            "app.alpha" => &mut c.appearance.alpha,
            "app.beta" => &mut c.appearance.beta,
            "app.gamma" => &mut c.appearance.gamma,
            "dis.alpha" => &mut c.disappearance.alpha,
            "dis.beta" => &mut c.disappearance.beta,
            "dis.gamma" => &mut c.disappearance.gamma,
            "solver.gap_tolerance" => &mut self.solver.gap_tolerance,
            "solver.stall_tolerance" => &mut self.solver.stall_tolerance,
            "gen.division_prob" => &mut self.generator.division_prob,
            "gen.motion_sigma" => &mut self.generator.motion_sigma,
            "gen.candidate_radius" => &mut self.generator.candidate_radius,
            "gen.arena_size" => &mut self.generator.arena_size,
            _ => return self.set_other(key, value),
        };
        *float = parse_value(value)?;
        Ok(())
    }

    fn set_other(&mut self, key: &str, value: &str) -> Result<(), String> {
        let s = &mut self.solver;
        let g = &mut self.generator;
        match key {
            "solver.max_sweeps" => s.max_sweeps = parse_value(value)?,
            "solver.primal_period" => s.primal_period = parse_value(value)?,
            "solver.check_monotonicity" => s.check_monotonicity = parse_value(value)?,
            "solver.primal_directions" => s.primal_directions = parse_directions(value)?,
            "solver.primal_mode" => {
                s.primal_mode = match value {
                    "synchronized" => PrimalMode::FrameSynchronized,
                    "whole" => PrimalMode::WholeProblem,
                    _ => return Err(format!("invalid primal mode `{value}`")),
                }
            }
            "gen.frames" => g.frames = parse_value(value)?,
            "gen.initial_objects" => g.initial_objects = parse_value(value)?,
            "gen.hypotheses_per_object" => g.hypotheses_per_object = parse_value(value)?,
            "gen.seed" => g.seed = parse_value(value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.costs.is_valid() {
            return Err(ConfigError::Invalid(
                "cost coefficients must be finite, area limit positive, boundary coefficients non-negative".into(),
            ));
        }
        self.solver
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !self.generator.is_valid() {
            return Err(ConfigError::Invalid("invalid generator parameters".into()));
        }
        Ok(())
    }
}

pub fn parse_directions(value: &str) -> Result<PrimalDirections, String> {
    match value {
        "both" => Ok(PrimalDirections::Both),
        "forward" => Ok(PrimalDirections::Forward),
        "backward" => Ok(PrimalDirections::Backward),
        _ => Err(format!("invalid direction `{value}`")),
    }
}

/// Parses a configuration on top of the defaults.
pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let mut config = Config::default();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Line {
            line,
            message: "expected `key = value`".into(),
        })?;
        config
            .set(key.trim(), value.trim())
            .map_err(|message| ConfigError::Line { line, message })?;
    }
    config.validate()?;
    Ok(config)
}
