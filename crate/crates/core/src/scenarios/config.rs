use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PceError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Decay,
    Enzyme,
    Converge,
    Mc,
}

/// Model sampled by the Monte Carlo reference runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Decay,
    Enzyme,
}

/// Enzyme parameter correlation: the estimated matrix, full correlation,
/// independence, or an explicit matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationSetting {
    Paper,
    Full,
    None,
    Matrix(Vec<Vec<f64>>),
}

impl CorrelationSetting {
    pub fn label(&self) -> &'static str {
        match self {
            CorrelationSetting::Paper => "paper",
            CorrelationSetting::Full => "full",
            CorrelationSetting::None => "none",
            CorrelationSetting::Matrix(_) => "matrix",
        }
    }
}

/// Every knob of a scenario run. The output directory is deliberately not
/// part of it, so the hash identifies results rather than locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub mc_model: ModelKind,
    /// Decay-problem correlations.
    pub rho: Vec<f64>,
    /// Enzyme-problem correlation.
    pub correlation: CorrelationSetting,
    /// Expansion order; 8 for the decay problem and 4 for the enzyme by default.
    pub order: Option<u32>,
    /// Draws behind Monte Carlo moment tables.
    pub moment_samples: usize,
    /// Draws for the Monte Carlo reference runner.
    pub mc_samples: usize,
    pub seed: u64,
    /// End of the time span; 1 for the decay problem and 20 for the enzyme.
    pub t_end: Option<f64>,
    pub grid_points: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Convergence study with the closed-form Hermite basis (independent case only).
    pub hermite: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: ScenarioKind::Decay,
            mc_model: ModelKind::Decay,
            rho: vec![0.0, 0.5, -0.5, 0.9, -0.9, 1.0, -1.0],
            correlation: CorrelationSetting::Paper,
            order: None,
            moment_samples: crate::moments::DEFAULT_MC_MOMENT_SAMPLES,
            mc_samples: 100_000,
            seed: 1,
            t_end: None,
            grid_points: 200,
            abs_tol: 1e-6,
            rel_tol: 1e-6,
            hermite: false,
        }
    }
}

impl ScenarioConfig {
    pub fn for_scenario(scenario: ScenarioKind) -> Self {
        let mut c = ScenarioConfig {
            scenario,
            ..Default::default()
        };
        if scenario == ScenarioKind::Converge {
            c.rho = vec![0.0, 0.5, -0.5, 0.9, -0.9];
        }
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: ScenarioConfig =
            toml::from_str(text).map_err(|e| PceError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| PceError::Config(e.to_string()))
    }

    fn uses_enzyme(&self) -> bool {
        self.scenario == ScenarioKind::Enzyme
            || self.scenario == ScenarioKind::Mc && self.mc_model == ModelKind::Enzyme
    }

    pub fn order(&self) -> u32 {
        self.order.unwrap_or(if self.uses_enzyme() { 4 } else { 8 })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
            .unwrap_or(if self.uses_enzyme() { 20.0 } else { 1.0 })
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.rho.iter().find(|r| !(r.abs() <= 1.0)) {
            return Err(PceError::Config(format!("correlation {r} outside [-1, 1]")));
        }
        if !(self.t_end() > 0.0) {
            return Err(PceError::Config("time span must be non-degenerate".into()));
        }
        if self.grid_points < 2 {
            return Err(PceError::Config(
                "output grid needs at least two points".into(),
            ));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(PceError::Config("tolerances must be positive".into()));
        }
        if self.scenario == ScenarioKind::Mc && self.mc_samples < 1000 {
            return Err(PceError::Config(
                "Monte Carlo reference needs at least 1000 samples".into(),
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut c = ScenarioConfig::for_scenario(ScenarioKind::Enzyme);
        c.correlation = CorrelationSetting::Matrix(vec![vec![1.0, 0.2], vec![0.2, 1.0]]);
        let back = ScenarioConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn defaults_per_scenario() {
        let d = ScenarioConfig::for_scenario(ScenarioKind::Decay);
        assert_eq!((d.order(), d.t_end()), (8, 1.0));
        let e = ScenarioConfig::for_scenario(ScenarioKind::Enzyme);
        assert_eq!((e.order(), e.t_end()), (4, 20.0));
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let c =
            ScenarioConfig::from_toml("scenario = \"enzyme\"\ncorrelation = \"full\"\n").unwrap();
        assert_eq!(c.correlation, CorrelationSetting::Full);
        assert_eq!(c.grid_points, 200);
        assert!(ScenarioConfig::from_toml("rho = [1.5]").is_err());
        assert!(ScenarioConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ScenarioConfig::default();
        let mut b = a.clone();
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }
}
