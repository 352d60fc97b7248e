use serde::{Deserialize, Serialize};

use super::run::TrajectoryLog;
use super::scenario::FilterMode;
use crate::barrier::{check_sliding_condition, SlidingReport};

/// Residual above which a checked step counts as a sliding-condition
/// violation.
pub const SLIDING_TOL: f64 = 1e-6;

/// Largest negative `h` still treated as safe.
pub const SAFETY_TOL: f64 = 1e-6;

/// Maximal run of consecutive samples with `h < 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationInterval {
    pub start: f64,
    pub end: f64,
    pub steps: usize,
    /// `steps · Δt`.
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintMetrics {
    pub channel: usize,
    /// Over samples at or after the enable time.
    pub min_h: Option<f64>,
    /// Largest `|y − center|` at or after the enable time.
    pub max_deviation: Option<f64>,
    pub violations: Vec<ViolationInterval>,
    pub violation_time: f64,
    pub active_steps: usize,
    /// Only for the sliding-mode filter.
    pub sliding: Option<SlidingReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: String,
    pub plant: String,
    pub filter_mode: FilterMode,
    pub steps: usize,
    pub dt: f64,
    pub barrier_enable_time: f64,
    pub constraints: Vec<ConstraintMetrics>,
    pub min_h: Option<f64>,
    /// Root-mean-square `y − y_ref` per output channel over the whole run.
    pub tracking_rms: Vec<f64>,
    pub qp_fallbacks: usize,
    pub clamp_hits: usize,
    pub constraint_active_steps: usize,
    /// The sliding-mode filter is expected to keep every `h ≥ 0`.
    pub promises_safety: bool,
    pub safety_violated: bool,
}

pub fn compute_metrics(log: &TrajectoryLog) -> Metrics {
    let recs = &log.records;
    let enabled: Vec<bool> = recs.iter().map(|r| log.enabled_at(r.t)).collect();

    let constraints = log
        .constraints
        .iter()
        .enumerate()
        .map(|(i, info)| {
            let mut min_h: Option<f64> = None;
            let mut max_dev: Option<f64> = None;
            let mut violations = Vec::new();
            let mut run: Option<(f64, f64, usize)> = None;
            for (r, on) in recs.iter().zip(&enabled) {
                let b = &r.barriers[i];
                if !on {
                    continue;
                }
                min_h = Some(min_h.map_or(b.h, |m| m.min(b.h)));
                let dev = (r.outputs[info.channel] - info.center).abs();
                max_dev = Some(max_dev.map_or(dev, |m| m.max(dev)));
                if b.h < 0.0 {
                    run = Some(match run {
                        Some((start, _, n)) => (start, r.t, n + 1),
                        None => (r.t, r.t, 1),
                    });
                } else if let Some((start, end, steps)) = run.take() {
                    violations.push(interval(start, end, steps, log.dt));
                }
            }
            if let Some((start, end, steps)) = run {
                violations.push(interval(start, end, steps, log.dt));
            }
            let sliding = (log.filter_mode == FilterMode::Smcbf && recs.len() >= 2).then(|| {
                let s: Vec<f64> = recs.iter().map(|r| r.barriers[i].s).collect();
                // The filter bounds the virtual input from below only, so the
                // reaching condition is guaranteed where the row binds or on
                // the unsafe side of the surface.
                let mask: Vec<bool> = recs
                    .iter()
                    .zip(&enabled)
                    .map(|(r, on)| *on && (r.barriers[i].active || r.barriers[i].s < 0.0))
                    .collect();
                check_sliding_condition(
                    &s,
                    log.dt,
                    info.smcbf.eta,
                    info.smcbf.phi,
                    Some(&mask),
                    SLIDING_TOL,
                )
                .expect("trace, mask and step are consistent")
            });
            ConstraintMetrics {
                channel: info.channel,
                min_h,
                max_deviation: max_dev,
                violation_time: violations.iter().map(|v| v.duration).sum(),
                violations,
                active_steps: recs.iter().filter(|r| r.barriers[i].active).count(),
                sliding,
            }
        })
        .collect::<Vec<_>>();

    let n_out = log.output_names.len();
    let tracking_rms = (0..n_out)
        .map(|j| {
            let sum: f64 = recs
                .iter()
                .map(|r| (r.outputs[j] - r.references[j]).powi(2))
                .sum();
            (sum / recs.len().max(1) as f64).sqrt()
        })
        .collect();

    let min_h = constraints
        .iter()
        .filter_map(|c| c.min_h)
        .fold(None, |acc: Option<f64>, h| Some(acc.map_or(h, |m| m.min(h))));
    let promises_safety = log.filter_mode == FilterMode::Smcbf;
    Metrics {
        scenario: log.scenario.clone(),
        plant: log.plant.to_string(),
        filter_mode: log.filter_mode,
        steps: recs.len().saturating_sub(1),
        dt: log.dt,
        barrier_enable_time: log.barrier_enable_time,
        min_h,
        tracking_rms,
        qp_fallbacks: recs.iter().filter(|r| r.qp_fallback).count(),
        clamp_hits: recs.iter().filter(|r| r.clamp_hit).count(),
        constraint_active_steps: recs.iter().filter(|r| r.constraint_active).count(),
        promises_safety,
        safety_violated: promises_safety && min_h.is_some_and(|h| h < -SAFETY_TOL),
        constraints,
    }
}

fn interval(start: f64, end: f64, steps: usize, dt: f64) -> ViolationInterval {
    ViolationInterval {
        start,
        end,
        steps,
        duration: steps as f64 * dt,
    }
}
