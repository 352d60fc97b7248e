use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ReferenceSpec;
use crate::barrier::{EcbfPolicy, SmcbfPolicy};
use crate::error::{Error, Result};
use crate::plants::{perturb, FurutaParams, MaglevParams, Perturbable};
use crate::qp::HildrethOptions;

/// Everything needed to reproduce one closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub plant: PlantConfig,
    pub controller: ControllerConfig,
    pub filter: FilterConfig,
    /// One reference per output channel.
    pub references: Vec<ReferenceSpec>,
    pub initial_state: Vec<f64>,
    pub dt: f64,
    pub duration: f64,
    /// Barrier constraints enter the QP from this time on.
    pub barrier_enable_time: f64,
    #[serde(default)]
    pub qp: HildrethOptions,
}

/// Catalogue parameters plus the scale factors applied to the simulated
/// plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantConfig {
    Furuta {
        params: FurutaParams,
        #[serde(default)]
        perturbation: BTreeMap<String, f64>,
    },
    Maglev {
        params: MaglevParams,
        #[serde(default)]
        perturbation: BTreeMap<String, f64>,
    },
}

impl PlantConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            PlantConfig::Furuta { .. } => "furuta",
            PlantConfig::Maglev { .. } => "maglev",
        }
    }

    pub fn perturbation_mut(&mut self) -> &mut BTreeMap<String, f64> {
        match self {
            PlantConfig::Furuta { perturbation, .. } | PlantConfig::Maglev { perturbation, .. } => {
                perturbation
            }
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            PlantConfig::Furuta { .. } => 4,
            PlantConfig::Maglev { .. } => 6,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            PlantConfig::Furuta { .. } => 2,
            PlantConfig::Maglev { .. } => 3,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            PlantConfig::Furuta { .. } => 1,
            PlantConfig::Maglev { .. } => 3,
        }
    }

    pub fn state_names(&self) -> &'static [&'static str] {
        match self {
            PlantConfig::Furuta { .. } => &["theta0", "theta1", "dtheta0", "dtheta1"],
            PlantConfig::Maglev { .. } => {
                &["x_v", "theta_p", "theta_r", "dx_v", "dtheta_p", "dtheta_r"]
            }
        }
    }

    pub fn output_names(&self) -> &'static [&'static str] {
        match self {
            PlantConfig::Furuta { .. } => &["theta0", "theta1"],
            PlantConfig::Maglev { .. } => &["r1", "r2", "r3"],
        }
    }

    pub fn input_names(&self) -> &'static [&'static str] {
        match self {
            PlantConfig::Furuta { .. } => &["duty"],
            PlantConfig::Maglev { .. } => &["F1", "F2", "F3"],
        }
    }

    fn check<P: Perturbable>(params: &P, perturbation: &BTreeMap<String, f64>) -> Result<()> {
        params.validate()?;
        perturb(params, perturbation).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControllerConfig {
    /// Infinite-horizon LQR on the linearization, `Q = diag(q_diag)`.
    Lqr { q_diag: [f64; 4], r: f64 },
    /// Sliding-mode tracking of the three gaps.
    Smc {
        lambda: [f64; 3],
        eta: [f64; 3],
        phi: [f64; 3],
        /// Explicit switching gain; derived from `mass_scale_bound` when absent.
        #[serde(default)]
        gain: Option<[f64; 3]>,
        /// Largest plate-mass ratio the derived gain must cover.
        #[serde(default = "unit_scale")]
        mass_scale_bound: f64,
        /// Gaps of the rest poses at which the derived gain is evaluated.
        #[serde(default)]
        operating_gaps: Vec<[f64; 3]>,
    },
}

fn unit_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    None,
    Ecbf,
    Smcbf,
}

impl FilterMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FilterMode::None => "none",
            FilterMode::Ecbf => "ecbf",
            FilterMode::Smcbf => "smcbf",
        }
    }
}

/// Barriers are evaluated and logged in every mode; they only enter the QP
/// when `mode` is not `none`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub mode: FilterMode,
    pub constraints: Vec<ConstraintConfig>,
}

/// `h = limit² − (y[channel] − center)²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    /// Output channel the barrier acts on.
    pub channel: usize,
    pub limit: f64,
    pub center: f64,
    pub ecbf_gain: Vec<f64>,
    pub smcbf: SmcbfConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmcbfConfig {
    pub lambda: f64,
    pub eta: f64,
    pub phi: f64,
    pub h_d: f64,
    pub delta_max: f64,
}

impl SmcbfConfig {
    pub fn policy(&self) -> Result<SmcbfPolicy> {
        SmcbfPolicy::new(self.lambda, self.eta, self.phi, self.h_d, self.delta_max)
    }
}

fn scoped(prefix: &str, err: Error) -> Error {
    match err {
        Error::InvalidParameter { field, reason } => Error::InvalidParameter {
            field: format!("{prefix}.{field}"),
            reason,
        },
        other => other,
    }
}

impl Scenario {
    /// Number of integration steps; the log holds one more record.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid("dt", format!("{} must be positive", self.dt)));
        }
        if !(self.duration >= self.dt) || !self.duration.is_finite() {
            return Err(Error::invalid(
                "duration",
                format!("{} must be at least dt", self.duration),
            ));
        }
        let n = self.steps();
        if ((n as f64) * self.dt - self.duration).abs() > 1e-9 * self.duration {
            return Err(Error::invalid(
                "duration",
                "must be an integer multiple of dt",
            ));
        }
        if !(self.barrier_enable_time >= 0.0 && self.barrier_enable_time <= self.duration) {
            return Err(Error::invalid(
                "barrier_enable_time",
                "must lie in [0, duration]",
            ));
        }
        if self.qp.tol <= 0.0 || self.qp.max_iter == 0 {
            return Err(Error::invalid("qp", "tol and max_iter must be positive"));
        }

        match &self.plant {
            PlantConfig::Furuta {
                params,
                perturbation,
            } => PlantConfig::check(params, perturbation),
            PlantConfig::Maglev {
                params,
                perturbation,
            } => PlantConfig::check(params, perturbation),
        }
        .map_err(|e| scoped("plant", e))?;

        if self.initial_state.len() != self.plant.state_dim() {
            return Err(Error::invalid(
                "initial_state",
                format!(
                    "expected {} entries, got {}",
                    self.plant.state_dim(),
                    self.initial_state.len()
                ),
            ));
        }
        if self.initial_state.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("initial_state", "must be finite"));
        }
        if self.references.len() != self.plant.output_dim() {
            return Err(Error::invalid(
                "references",
                format!(
                    "expected {} channels, got {}",
                    self.plant.output_dim(),
                    self.references.len()
                ),
            ));
        }
        for (i, r) in self.references.iter().enumerate() {
            r.validate().map_err(|e| scoped(&format!("references[{i}]"), e))?;
        }

        match (&self.plant, &self.controller) {
            (PlantConfig::Furuta { .. }, ControllerConfig::Lqr { q_diag, r }) => {
                if q_diag.iter().any(|q| !(*q >= 0.0)) {
                    return Err(Error::invalid("controller.q_diag", "must be non-negative"));
                }
                if !(*r > 0.0) {
                    return Err(Error::invalid("controller.r", "must be positive"));
                }
            }
            (
                PlantConfig::Maglev { .. },
                ControllerConfig::Smc {
                    lambda,
                    eta,
                    phi,
                    gain,
                    mass_scale_bound,
                    ..
                },
            ) => {
                for (name, v) in [("lambda", lambda), ("eta", eta), ("phi", phi)] {
                    if v.iter().any(|x| !(*x > 0.0)) {
                        return Err(Error::invalid(
                            format!("controller.{name}"),
                            "entries must be positive",
                        ));
                    }
                }
                if let Some(k) = gain {
                    if k.iter().zip(eta).any(|(k, e)| !(k >= e)) {
                        return Err(Error::invalid("controller.gain", "must be at least eta"));
                    }
                }
                if !(*mass_scale_bound >= 1.0) {
                    return Err(Error::invalid(
                        "controller.mass_scale_bound",
                        "must be at least 1",
                    ));
                }
            }
            (plant, _) => {
                return Err(Error::invalid(
                    "controller.kind",
                    format!("not available for the {} plant", plant.kind()),
                ))
            }
        }

        for (i, c) in self.filter.constraints.iter().enumerate() {
            let field = |f: &str| format!("filter.constraints[{i}].{f}");
            let valid_channel = match self.plant {
                PlantConfig::Furuta { .. } => c.channel == 1,
                PlantConfig::Maglev { .. } => c.channel < 3,
            };
            if !valid_channel {
                return Err(Error::invalid(
                    field("channel"),
                    format!("{} is not a constrained output of this plant", c.channel),
                ));
            }
            if !(c.limit > 0.0) {
                return Err(Error::invalid(field("limit"), "must be positive"));
            }
            if !c.center.is_finite() {
                return Err(Error::invalid(field("center"), "must be finite"));
            }
            if matches!(self.plant, PlantConfig::Furuta { .. }) && c.center != 0.0 {
                return Err(Error::invalid(
                    field("center"),
                    "the pendulum barrier is centred on the upright position",
                ));
            }
            if c.ecbf_gain.len() != 2 {
                return Err(Error::invalid(
                    field("ecbf_gain"),
                    "barriers have relative degree two; give two gains",
                ));
            }
            EcbfPolicy::from_gain(c.ecbf_gain.clone()).map_err(|e| scoped(&field("ecbf_gain"), e))?;
            c.smcbf.policy().map_err(|e| scoped(&field("smcbf"), e))?;
        }
        Ok(())
    }
}
