//! Built-in experiments.
//!
//! Reference amplitudes, timings, step sizes and durations are not given by
//! the experiment descriptions these mirror; the values below are invented
//! defaults and every one of them can be overridden through a config file.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::plants::{FurutaParams, MaglevParams};
use crate::qp::HildrethOptions;
use crate::sim::{
    ConstraintConfig, ControllerConfig, FilterConfig, FilterMode, PlantConfig, ReferenceSpec,
    Scenario, SmcbfConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    FurutaLqr,
    FurutaEcbfNominal,
    FurutaEcbfReal,
    FurutaSmcbfReal,
    MaglevSmc,
    MaglevEcbfNominal,
    MaglevEcbfReal,
    MaglevSmcbfReal,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 8] = [
        ExperimentId::FurutaLqr,
        ExperimentId::FurutaEcbfNominal,
        ExperimentId::FurutaEcbfReal,
        ExperimentId::FurutaSmcbfReal,
        ExperimentId::MaglevSmc,
        ExperimentId::MaglevEcbfNominal,
        ExperimentId::MaglevEcbfReal,
        ExperimentId::MaglevSmcbfReal,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentId::FurutaLqr => "furuta-lqr",
            ExperimentId::FurutaEcbfNominal => "furuta-ecbf-nominal",
            ExperimentId::FurutaEcbfReal => "furuta-ecbf-real",
            ExperimentId::FurutaSmcbfReal => "furuta-smcbf-real",
            ExperimentId::MaglevSmc => "maglev-smc",
            ExperimentId::MaglevEcbfNominal => "maglev-ecbf-nominal",
            ExperimentId::MaglevEcbfReal => "maglev-ecbf-real",
            ExperimentId::MaglevSmcbfReal => "maglev-smcbf-real",
        }
    }

    pub fn figure(&self) -> u8 {
        match self {
            ExperimentId::FurutaLqr => 2,
            ExperimentId::FurutaEcbfNominal => 3,
            ExperimentId::FurutaEcbfReal => 4,
            ExperimentId::FurutaSmcbfReal => 5,
            ExperimentId::MaglevSmc => 7,
            ExperimentId::MaglevEcbfNominal => 8,
            ExperimentId::MaglevEcbfReal => 9,
            ExperimentId::MaglevSmcbfReal => 10,
        }
    }

    pub fn description(&self) -> String {
        let what = match self {
            ExperimentId::FurutaLqr => "Furuta pendulum, LQR only, masses x1.6",
            ExperimentId::FurutaEcbfNominal => "Furuta pendulum, LQR + pole-placement ECBF, nominal masses",
            ExperimentId::FurutaEcbfReal => "Furuta pendulum, LQR + pole-placement ECBF, masses x1.6 (constraint breaks)",
            ExperimentId::FurutaSmcbfReal => "Furuta pendulum, LQR + sliding-mode CBF, masses x1.6",
            ExperimentId::MaglevSmc => "MAGLEV plate, sliding-mode tracking only, plate mass x1.3",
            ExperimentId::MaglevEcbfNominal => "MAGLEV plate, SMC + pole-placement ECBFs, nominal mass",
            ExperimentId::MaglevEcbfReal => "MAGLEV plate, SMC + pole-placement ECBFs, plate mass x1.3 (constraints break)",
            ExperimentId::MaglevSmcbfReal => "MAGLEV plate, SMC + sliding-mode CBFs, plate mass x1.3",
        };
        format!("{what}; mirrors Fig. {}", self.figure())
    }

    /// Whether the filter in this experiment is expected to keep `h ≥ 0`.
    pub fn promises_safety(&self) -> bool {
        matches!(self, ExperimentId::FurutaSmcbfReal | ExperimentId::MaglevSmcbfReal)
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        ExperimentId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<_> = ExperimentId::ALL.iter().map(|id| id.as_str()).collect();
                Error::Config(format!("unknown experiment `{s}` (known: {})", known.join(", ")))
            })
    }
}

pub const FURUTA_MASS_SCALE: f64 = 1.6;
pub const MAGLEV_MASS_SCALE: f64 = 1.3;

pub const FURUTA_THETA1_MAX: f64 = 0.087;
pub const FURUTA_INITIAL_THETA1: f64 = 0.069;
pub const FURUTA_SQUARE_AMPLITUDE: f64 = 0.5;
pub const FURUTA_SQUARE_PERIOD: f64 = 10.0;
pub const FURUTA_PULSE_AMPLITUDE: f64 = 0.14;
pub const FURUTA_PULSE_WIDTH: f64 = 0.3;
pub const FURUTA_PULSE_TIMES: [f64; 2] = [15.0, 25.0];

pub const MAGLEV_INITIAL_GAP: f64 = 0.05;
pub const MAGLEV_CENTERS: [f64; 3] = [-0.05, -0.07, -0.09];
pub const MAGLEV_R_MAX: f64 = 0.01;
/// Reference offset from the constraint centres during the excursion window;
/// positive gaps point away from the magnets.
pub const MAGLEV_EXCURSION: f64 = 0.015;
pub const MAGLEV_EXCURSION_WINDOW: (f64, f64) = (2.0, 4.0);

fn furuta_scenario(id: ExperimentId) -> Scenario {
    let (mode, real) = match id {
        ExperimentId::FurutaLqr => (FilterMode::None, true),
        ExperimentId::FurutaEcbfNominal => (FilterMode::Ecbf, false),
        ExperimentId::FurutaEcbfReal => (FilterMode::Ecbf, true),
        _ => (FilterMode::Smcbf, true),
    };
    let perturbation: BTreeMap<String, f64> = if real {
        [("m0", FURUTA_MASS_SCALE), ("m1", FURUTA_MASS_SCALE)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    } else {
        BTreeMap::new()
    };
    Scenario {
        name: id.as_str().into(),
        plant: PlantConfig::Furuta {
            params: FurutaParams::nominal(),
            perturbation,
        },
        controller: ControllerConfig::Lqr {
            q_diag: [500.0; 4],
            r: 1.0,
        },
        filter: FilterConfig {
            mode,
            constraints: vec![ConstraintConfig {
                channel: 1,
                limit: FURUTA_THETA1_MAX,
                center: 0.0,
                ecbf_gain: vec![3000.0, 180.0],
                smcbf: SmcbfConfig {
                    lambda: 10.0,
                    eta: 5.0,
                    phi: 0.1,
                    h_d: 1e-4,
                    delta_max: 1.0,
                },
            }],
        },
        references: vec![
            ReferenceSpec::Square {
                amplitude: FURUTA_SQUARE_AMPLITUDE,
                period: FURUTA_SQUARE_PERIOD,
            },
            ReferenceSpec::Pulses {
                amplitude: FURUTA_PULSE_AMPLITUDE,
                width: FURUTA_PULSE_WIDTH,
                times: FURUTA_PULSE_TIMES.to_vec(),
            },
        ],
        initial_state: vec![0.0, FURUTA_INITIAL_THETA1, 0.0, 0.0],
        dt: 1e-3,
        duration: 40.0,
        barrier_enable_time: 0.0,
        qp: HildrethOptions::default(),
    }
}

fn maglev_scenario(id: ExperimentId) -> Scenario {
    let (mode, real) = match id {
        ExperimentId::MaglevSmc => (FilterMode::None, true),
        ExperimentId::MaglevEcbfNominal => (FilterMode::Ecbf, false),
        ExperimentId::MaglevEcbfReal => (FilterMode::Ecbf, true),
        _ => (FilterMode::Smcbf, true),
    };
    let perturbation: BTreeMap<String, f64> = if real {
        BTreeMap::from([("M".to_string(), MAGLEV_MASS_SCALE)])
    } else {
        BTreeMap::new()
    };
    let ecbf_gains = [[2000.0, 200.0], [2000.0, 200.0], [2000.0, 500.0]];
    let phis = [0.8, 0.3, 0.3];
    let (t_out, t_back) = MAGLEV_EXCURSION_WINDOW;
    Scenario {
        name: id.as_str().into(),
        plant: PlantConfig::Maglev {
            params: MaglevParams::nominal(),
            perturbation,
        },
        controller: ControllerConfig::Smc {
            lambda: [50.0; 3],
            eta: [30.0; 3],
            phi: [0.05; 3],
            gain: None,
            mass_scale_bound: MAGLEV_MASS_SCALE,
            operating_gaps: vec![[MAGLEV_INITIAL_GAP; 3], MAGLEV_CENTERS],
        },
        filter: FilterConfig {
            mode,
            constraints: (0..3)
                .map(|j| ConstraintConfig {
                    channel: j,
                    limit: MAGLEV_R_MAX,
                    center: MAGLEV_CENTERS[j],
                    ecbf_gain: ecbf_gains[j].to_vec(),
                    smcbf: SmcbfConfig {
                        lambda: 500.0,
                        eta: 500.0,
                        phi: phis[j],
                        h_d: 1e-5,
                        delta_max: 10.0,
                    },
                })
                .collect(),
        },
        references: MAGLEV_CENTERS
            .iter()
            .map(|&c| ReferenceSpec::Steps {
                times: vec![0.0, t_out, t_back],
                values: vec![c, c + MAGLEV_EXCURSION, c],
            })
            .collect(),
        initial_state: vec![MAGLEV_INITIAL_GAP, 0.0, 0.0, 0.0, 0.0, 0.0],
        dt: 1e-4,
        duration: 10.0,
        barrier_enable_time: 1.0,
        qp: HildrethOptions::default(),
    }
}

/// Fully specified scenario for a built-in experiment.
pub fn builtin_scenario(id: ExperimentId) -> Scenario {
    match id {
        ExperimentId::FurutaLqr
        | ExperimentId::FurutaEcbfNominal
        | ExperimentId::FurutaEcbfReal
        | ExperimentId::FurutaSmcbfReal => furuta_scenario(id),
        _ => maglev_scenario(id),
    }
}
