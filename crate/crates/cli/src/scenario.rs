//! Scenario files: target configuration plus design and simulation settings.

use std::path::Path;

use serde::Deserialize;
use urf_core::framework::{random_generic, regular_polygon, Configuration, DEFAULT_EDGE_TOL};
use urf_core::problem::{Hyperparams, DEFAULT_BETA, DEFAULT_GAMMA};
use urf_core::sim::{InitMode, SimConfig};
use urf_core::solver::SolveParams;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub dimension: Option<usize>,
    pub positions: Option<Vec<Vec<f64>>>,
    pub generator: Option<Generator>,
    pub alpha: Option<f64>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub sim: SimSpec,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

fn default_tau() -> f64 {
    DEFAULT_EDGE_TOL
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Generator {
    Polygon { n: usize, radius: f64 },
    Random { n: usize, d: usize, seed: u64 },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub rho: Option<f64>,
    pub max_iter: Option<usize>,
    pub eps_abs: Option<f64>,
    pub eps_rel: Option<f64>,
    pub over_relaxation: Option<f64>,
}

impl SolverSpec {
    pub fn params(&self) -> SolveParams {
        let d = SolveParams::default();
        SolveParams {
            rho: self.rho.unwrap_or(d.rho),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            eps_abs: self.eps_abs.unwrap_or(d.eps_abs),
            eps_rel: self.eps_rel.unwrap_or(d.eps_rel),
            over_relaxation: self.over_relaxation.unwrap_or(d.over_relaxation),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InitSpec {
    AtTarget,
    PerturbedOrthogonal,
    PerturbedFree,
}

impl From<InitSpec> for InitMode {
    fn from(v: InitSpec) -> Self {
        match v {
            InitSpec::AtTarget => InitMode::AtTarget,
            InitSpec::PerturbedOrthogonal => InitMode::PerturbedOrthogonal,
            InitSpec::PerturbedFree => InitMode::PerturbedFree,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub t_end: Option<f64>,
    pub samples: Option<usize>,
    pub init: Option<InitSpec>,
    pub perturbation_scale: Option<f64>,
    pub seed: Option<u64>,
}

impl SimSpec {
    pub fn config(&self) -> SimConfig {
        let d = SimConfig::default();
        SimConfig {
            t_end: self.t_end.unwrap_or(d.t_end),
            samples: self.samples.unwrap_or(d.samples),
            init: self.init.map(InitMode::from).unwrap_or(d.init),
            perturbation_scale: self.perturbation_scale.or(d.perturbation_scale),
            seed: self.seed.unwrap_or(d.seed),
        }
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| {
            CliError::Input(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        scenario.check()?;
        Ok(scenario)
    }

    fn check(&self) -> Result<(), CliError> {
        match (&self.positions, &self.generator) {
            (Some(_), Some(_)) => {
                return Err(CliError::Input(
                    "give either `positions` or `generator`, not both".into(),
                ))
            }
            (None, None) => {
                return Err(CliError::Input("missing `positions` or `generator`".into()))
            }
            _ => {}
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(CliError::Input(format!(
                "`tau` must lie in (0, 1), got {}",
                self.tau
            )));
        }
        self.hyperparams()
            .validate()
            .map_err(|e| CliError::Input(format!("hyperparameters: {e}")))?;
        self.solver
            .params()
            .validate()
            .map_err(|e| CliError::Input(format!("`solver`: {e}")))?;
        self.sim
            .config()
            .validate()
            .map_err(|e| CliError::Input(format!("`sim`: {e}")))?;
        Ok(())
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
        }
    }

    /// Builds the configuration; `seed_override` replaces a random generator's seed.
    pub fn configuration(&self, seed_override: Option<u64>) -> Result<Configuration, CliError> {
        let config = match (&self.positions, &self.generator) {
            (Some(points), _) => Configuration::from_points(points),
            (None, Some(Generator::Polygon { n, radius })) => regular_polygon(*n, *radius),
            (None, Some(Generator::Random { n, d, seed })) => {
                random_generic(*n, *d, seed_override.unwrap_or(*seed))
            }
            (None, None) => unreachable!("checked at parse time"),
        }
        .map_err(|e| CliError::Input(format!("configuration: {e}")))?;
        if let Some(d) = self.dimension {
            if d != config.dim() {
                return Err(CliError::Input(format!(
                    "`dimension` is {d} but the positions are {}-dimensional",
                    config.dim()
                )));
            }
        }
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polygon_defaults() {
        let s = Scenario::parse(
            r#"{"dimension": 2, "generator": {"polygon": {"n": 10, "radius": 1.0}}}"#,
        )
        .unwrap();
        assert_eq!(s.beta, 1.0);
        assert_eq!(s.gamma, 0.1);
        assert_eq!(s.tau, 1e-6);
        assert!(s.alpha.is_none());
        assert_eq!(s.configuration(None).unwrap().len(), 10);
    }

    #[test]
    fn unknown_field_rejected() {
        let err = Scenario::parse(r#"{"positions": [[0,0],[1,0],[0,1],[1,1]], "alhpa": 0.5}"#)
            .unwrap_err();
        assert!(err.to_string().contains("alhpa"), "{err}");
    }

    #[test]
    fn both_or_neither_rejected() {
        assert!(Scenario::parse(r#"{"alpha": 0.5}"#).is_err());
        assert!(Scenario::parse(
            r#"{"positions": [[0,0],[1,0],[0,1],[1,1]], "generator": {"random": {"n": 6, "d": 2, "seed": 1}}}"#
        )
        .is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let s =
            Scenario::parse(r#"{"dimension": 3, "positions": [[0,0],[1,0],[0,1],[1,1]]}"#).unwrap();
        assert!(s.configuration(None).is_err());
    }

    #[test]
    fn seed_override_applies() {
        let s =
            Scenario::parse(r#"{"generator": {"random": {"n": 6, "d": 2, "seed": 1}}}"#).unwrap();
        let a = s.configuration(None).unwrap();
        let b = s.configuration(Some(2)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn bad_hyperparameters() {
        let err = Scenario::parse(r#"{"positions": [[0,0],[1,0],[0,1],[1,1]], "beta": 0.05}"#)
            .unwrap_err();
        assert!(matches!(err, CliError::Input(_)));
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = Scenario::parse("{\n  \"alpha\": ,\n}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
