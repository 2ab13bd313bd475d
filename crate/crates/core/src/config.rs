//! Run configuration: tolerances, resolutions, outputs.
//!
//! Config files are JSON with strict parsing — unknown keys are rejected.
//! Every field has a default, so a config file may override any subset.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Every numerical threshold used by the pipeline, in one place.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// On-manifold constraint residual.
    pub tau_on: f64,
    /// Relative tangency bound for tangent vectors.
    pub tau_tan: f64,
    /// Critical-point gradient-norm gate.
    pub tau_crit: f64,
    /// Smallest admissible |Hessian eigenvalue| (Morse gate).
    pub tau_morse: f64,
    /// Invariance gate max |Φ(g·x) − Φ(x)|.
    pub tau_inv: f64,
    /// Flow-equivariance certificate bound.
    pub tau_equiv: f64,
    /// Energy-flatness slack near limits.
    pub tau_flat: f64,
    /// Capture radius for limit classification.
    pub r_cap: f64,
    /// Flow time budget.
    pub t_max: f64,
    /// Radius counting as "near" an intermediate critical point.
    pub dwell_radius: f64,
    /// Dwell time beyond which a trajectory is reported as shadowing.
    pub dwell_budget: f64,
    /// Deduplication radius for enumerated points.
    pub dedup_radius: f64,
    /// Newton refinement gradient target.
    pub newton_target: f64,
    /// Circle-certificate orbit Hausdorff bound (radians).
    pub tau_orbit: f64,
    /// Rotation-certificate angle bound (radians).
    pub tau_angle: f64,
    /// Stabilizer principal-angle bound (radians).
    pub tau_principal_angle: f64,
    /// Transversality smallest-principal-value bound.
    pub tau_transv: f64,
    /// Generator-field norm bound for the fixed-point test.
    pub tau_fixed: f64,
    /// Integrator relative tolerance.
    pub rtol: f64,
    /// Integrator absolute tolerance.
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tau_on: 1e-9,
            tau_tan: 1e-8,
            tau_crit: 1e-8,
            tau_morse: 1e-6,
            tau_inv: 1e-9,
            tau_equiv: 1e-6,
            tau_flat: 1e-12,
            r_cap: 1e-6,
            t_max: 1e3,
            dwell_radius: 1e-2,
            dwell_budget: 400.0,
            dedup_radius: 1e-5,
            newton_target: 1e-12,
            tau_orbit: 1e-2 * std::f64::consts::PI,
            tau_angle: 1e-3,
            tau_principal_angle: 1e-4,
            tau_transv: 1e-3,
            tau_fixed: 1e-8,
            rtol: 1e-9,
            atol: 1e-11,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("tau_on", self.tau_on),
            ("tau_tan", self.tau_tan),
            ("tau_crit", self.tau_crit),
            ("tau_morse", self.tau_morse),
            ("tau_inv", self.tau_inv),
            ("tau_equiv", self.tau_equiv),
            ("tau_flat", self.tau_flat),
            ("r_cap", self.r_cap),
            ("t_max", self.t_max),
            ("dwell_radius", self.dwell_radius),
            ("dwell_budget", self.dwell_budget),
            ("dedup_radius", self.dedup_radius),
            ("newton_target", self.newton_target),
            ("tau_orbit", self.tau_orbit),
            ("tau_angle", self.tau_angle),
            ("tau_principal_angle", self.tau_principal_angle),
            ("tau_transv", self.tau_transv),
            ("tau_fixed", self.tau_fixed),
            ("rtol", self.rtol),
            ("atol", self.atol),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Sampling and grid resolutions.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Resolution {
    /// Angular grid on circle sections.
    pub circle_directions: usize,
    /// Quasi-uniform sample size on higher-dimensional direction spheres.
    pub sphere_directions: usize,
    /// Verified sweep size for targeted components.
    pub sweep_directions: usize,
    /// Shooting offset ε.
    pub epsilon: f64,
    /// θ-grid for the rotation certificate.
    pub theta_grid: usize,
    /// Sample count for the equivariance certificate.
    pub equivariance_samples: usize,
    /// Samples for gates (invariance, metric, hygiene).
    pub gate_samples: usize,
    /// Multistart override; scenario default when zero.
    pub multistart: usize,
    /// Members examined by the stabilizer certificate.
    pub stabilizer_members: usize,
    /// Minimum cluster size before certification.
    pub min_cluster: usize,
    /// Targeted-search seed count for interior pairs.
    pub targeted_seeds: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution {
            circle_directions: 720,
            sphere_directions: 512,
            sweep_directions: 360,
            epsilon: 1e-4,
            theta_grid: 180,
            equivariance_samples: 120,
            gate_samples: 128,
            multistart: 0,
            stabilizer_members: 8,
            min_cluster: 12,
            targeted_seeds: 4,
        }
    }
}

impl Resolution {
    pub fn validate(&self) -> Result<()> {
        if self.circle_directions < 16
            || self.sphere_directions < 16
            || self.sweep_directions < 16
            || self.theta_grid < 16
        {
            return Err(Error::Config("resolution grids must have at least 16 points".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if self.min_cluster < 2 {
            return Err(Error::Config("min_cluster must be at least 2".into()));
        }
        Ok(())
    }

    /// Doubled shooting resolution, for the stability criteria.
    pub fn doubled(&self) -> Resolution {
        Resolution {
            circle_directions: self.circle_directions * 2,
            sphere_directions: self.sphere_directions * 2,
            sweep_directions: self.sweep_directions * 2,
            ..*self
        }
    }
}

/// Output routing.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Report path; stdout when absent.
    pub report: Option<PathBuf>,
    pub dump_trajectories: bool,
    pub dump_directions: bool,
}

/// Full configuration of one certification run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub resolution: Resolution,
    #[serde(default)]
    pub outputs: OutputConfig,
}

impl ScenarioConfig {
    pub fn new(scenario: impl Into<String>) -> Self {
        ScenarioConfig {
            scenario: scenario.into(),
            seed: 0,
            tolerances: Tolerances::default(),
            resolution: Resolution::default(),
            outputs: OutputConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.tolerances.validate()?;
        self.resolution.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ScenarioConfig::new("sphere-height").validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let r = ScenarioConfig::from_json(r#"{"scenario": "sphere-height", "tipo": 1}"#);
        assert!(r.is_err());
        let r = ScenarioConfig::from_json(
            r#"{"scenario": "sphere-height", "tolerances": {"tau_onn": 1.0}}"#,
        );
        assert!(r.is_err());
    }

    #[test]
    fn partial_overrides_merge_with_defaults() {
        let cfg = ScenarioConfig::from_json(
            r#"{"scenario": "sphere-height", "seed": 9, "tolerances": {"tau_inv": 1e-7}}"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.tolerances.tau_inv, 1e-7);
        assert_eq!(cfg.tolerances.tau_on, 1e-9);
    }

    #[test]
    fn nonpositive_tolerance_rejected() {
        let r = ScenarioConfig::from_json(
            r#"{"scenario": "sphere-height", "tolerances": {"tau_inv": -1.0}}"#,
        );
        assert!(r.is_err());
    }
}
