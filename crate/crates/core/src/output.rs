//! Run artifacts: trajectory CSV, metrics and manifest JSON, SVG charts,
//! and parsing of scenario documents.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sim::{FilterMode, Metrics, Scenario, TrajectoryLog};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to repeat a run and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub experiment: Option<String>,
    pub config_path: Option<String>,
    pub output_dir: String,
    pub scenario: Scenario,
    /// File name → lowercase hex SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

/// A config file holds either a bare scenario or a manifest of an earlier run.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigDocument {
    Scenario(Scenario),
    Manifest(RunManifest),
}

impl ConfigDocument {
    pub fn into_scenario(self) -> Scenario {
        match self {
            ConfigDocument::Scenario(s) => s,
            ConfigDocument::Manifest(m) => m.scenario,
        }
    }
}

fn located<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::Config(format!(
            "at `{path}` (line {}, column {}): {inner}",
            inner.line(),
            inner.column()
        ))
    })
}

/// Parses and validates a scenario or manifest document.
pub fn parse_config(text: &str) -> Result<ConfigDocument> {
    let probe: serde_json::Value = located(text)?;
    let doc = if probe.get("scenario").is_some() && probe.get("artifacts").is_some() {
        ConfigDocument::Manifest(located(text)?)
    } else {
        ConfigDocument::Scenario(located(text)?)
    };
    match &doc {
        ConfigDocument::Scenario(s) => s.validate(),
        ConfigDocument::Manifest(m) => m.scenario.validate(),
    }
    .map_err(|e| Error::Config(format!("invalid scenario: {e}")))?;
    Ok(doc)
}

pub fn load_config(path: &Path) -> Result<ConfigDocument> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// 17 significant digits: exact round trip for binary64.
fn num(out: &mut String, v: f64) {
    if v.is_nan() {
        out.push_str("NaN");
    } else {
        let _ = write!(out, "{v:.16e}");
    }
}

fn flag(out: &mut String, b: bool) {
    out.push(if b { '1' } else { '0' });
}

pub fn csv_header(log: &TrajectoryLog) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend(log.state_names.iter().map(|n| format!("x.{n}")));
    cols.extend(log.output_names.iter().map(|n| format!("y.{n}")));
    cols.extend(log.output_names.iter().map(|n| format!("ref.{n}")));
    for prefix in ["u_nominal", "u_filtered", "u_applied"] {
        cols.extend(log.input_names.iter().map(|n| format!("{prefix}.{n}")));
    }
    for i in 0..log.constraints.len() {
        for field in ["h", "h_dot", "s", "mu_lo", "active"] {
            cols.push(format!("barrier{i}.{field}"));
        }
    }
    cols.extend(
        ["qp_status", "qp_iterations", "constraint_active", "qp_fallback", "clamp_hit"]
            .map(String::from),
    );
    cols
}

pub fn write_trajectory_csv<W: Write>(log: &TrajectoryLog, mut w: W) -> Result<()> {
    writeln!(w, "{}", csv_header(log).join(","))?;
    let mut line = String::new();
    for r in &log.records {
        line.clear();
        num(&mut line, r.t);
        for v in r
            .state
            .iter()
            .chain(&r.outputs)
            .chain(&r.references)
            .chain(&r.u_nominal)
            .chain(&r.u_filtered)
            .chain(&r.u_applied)
        {
            line.push(',');
            num(&mut line, *v);
        }
        for b in &r.barriers {
            for v in [b.h, b.h_dot, b.s, b.mu_lo] {
                line.push(',');
                num(&mut line, v);
            }
            line.push(',');
            flag(&mut line, b.active);
        }
        line.push(',');
        line.push_str(r.qp_status.map_or("", |s| s.as_str()));
        let _ = write!(line, ",{}", r.qp_iterations);
        for b in [r.constraint_active, r.qp_fallback, r.clamp_hit] {
            line.push(',');
            flag(&mut line, b);
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_artifact(dir: &Path, name: &str, bytes: &[u8], sums: &mut BTreeMap<String, String>) -> Result<()> {
    fs::write(dir.join(name), bytes)?;
    sums.insert(name.to_string(), sha256_hex(bytes));
    Ok(())
}

/// Where a run came from, for the manifest.
#[derive(Debug, Clone, Default)]
pub struct RunOrigin {
    pub experiment: Option<String>,
    pub config_path: Option<PathBuf>,
}

/// Writes the CSV, metrics, optional charts and finally the manifest.
pub fn write_run_artifacts(
    dir: &Path,
    scenario: &Scenario,
    log: &TrajectoryLog,
    metrics: &Metrics,
    origin: &RunOrigin,
    plots: bool,
) -> Result<RunManifest> {
    fs::create_dir_all(dir)?;
    let mut sums = BTreeMap::new();
    let mut csv = Vec::new();
    write_trajectory_csv(log, &mut csv)?;
    write_artifact(dir, TRAJECTORY_FILE, &csv, &mut sums)?;
    let metrics_json = serde_json::to_vec_pretty(metrics)?;
    write_artifact(dir, METRICS_FILE, &metrics_json, &mut sums)?;
    if plots {
        for (name, svg) in render_charts(log) {
            write_artifact(dir, &name, svg.as_bytes(), &mut sums)?;
        }
    }
    let manifest = RunManifest {
        experiment: origin.experiment.clone(),
        config_path: origin
            .config_path
            .as_ref()
            .map(|p| p.display().to_string()),
        output_dir: dir.display().to_string(),
        scenario: scenario.clone(),
        artifacts: sums,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

struct Series {
    label: String,
    values: Vec<f64>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const MAX_POINTS: usize = 2000;

/// Line chart of several series sharing the time axis.
fn line_chart(title: &str, t: &[f64], series: &[Series], hlines: &[f64]) -> String {
    let (w, h) = (800.0, 320.0);
    let (left, right, top, bottom) = (70.0, 20.0, 30.0, 40.0);
    let finite = series
        .iter()
        .flat_map(|s| s.values.iter())
        .chain(hlines)
        .copied()
        .filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        (lo, hi) = (-1.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        lo -= 0.5;
        hi += 0.5;
    }
    let (t0, t1) = (t[0], *t.last().unwrap());
    let span = if t1 > t0 { t1 - t0 } else { 1.0 };
    let px = |tv: f64| left + (tv - t0) / span * (w - left - right);
    let py = |v: f64| top + (hi - v) / (hi - lo) * (h - top - bottom);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="18" font-size="13">{title}</text>"#, left);
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - left - right,
        h - top - bottom
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let tv = t0 + span * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r##"<text x="{}" y="{:.1}" text-anchor="end">{v:.3e}</text><line x1="{left}" x2="{}" y1="{:.1}" y2="{:.1}" stroke="#ddd"/>"##,
            left - 4.0,
            py(v) + 4.0,
            w - right,
            py(v),
            py(v)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{tv:.2}</text>"#,
            px(tv),
            h - bottom + 14.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{}" text-anchor="middle">t [s]</text>"#,
        (left + w - right) / 2.0,
        h - 8.0
    );
    for v in hlines {
        let _ = writeln!(
            svg,
            r#"<line x1="{left}" x2="{}" y1="{:.2}" y2="{:.2}" stroke="black" stroke-dasharray="4 3"/>"#,
            w - right,
            py(*v),
            py(*v)
        );
    }
    let stride = t.len().div_ceil(MAX_POINTS).max(1);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut points = String::new();
        for k in (0..t.len()).step_by(stride).chain(std::iter::once(t.len() - 1)) {
            let v = s.values[k];
            if v.is_finite() {
                let _ = write!(points, "{:.2},{:.2} ", px(t[k]), py(v));
            }
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            points.trim_end()
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            left + 8.0 + 130.0 * i as f64,
            top + 14.0,
            s.label
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// One chart per group: states, outputs against references, inputs,
/// barrier values and (sliding-mode filter only) sliding variables.
pub fn render_charts(log: &TrajectoryLog) -> Vec<(String, String)> {
    let t: Vec<f64> = log.records.iter().map(|r| r.t).collect();
    let col = |f: &dyn Fn(&crate::sim::StepRecord) -> f64| -> Vec<f64> {
        log.records.iter().map(f).collect()
    };
    let mut charts = Vec::new();

    let states = log
        .state_names
        .iter()
        .enumerate()
        .map(|(i, n)| Series {
            label: n.to_string(),
            values: col(&|r| r.state[i]),
        })
        .collect::<Vec<_>>();
    charts.push(("states.svg".to_string(), line_chart("States", &t, &states, &[])));

    let mut outputs = Vec::new();
    for (i, n) in log.output_names.iter().enumerate() {
        outputs.push(Series {
            label: n.to_string(),
            values: col(&|r| r.outputs[i]),
        });
        outputs.push(Series {
            label: format!("{n} ref"),
            values: col(&|r| r.references[i]),
        });
    }
    let bands: Vec<f64> = log
        .constraints
        .iter()
        .flat_map(|c| [c.center - c.limit, c.center + c.limit])
        .collect();
    charts.push((
        "outputs.svg".to_string(),
        line_chart("Outputs and references", &t, &outputs, &bands),
    ));

    let mut inputs = Vec::new();
    for (i, n) in log.input_names.iter().enumerate() {
        inputs.push(Series {
            label: format!("{n} nominal"),
            values: col(&|r| r.u_nominal[i]),
        });
        inputs.push(Series {
            label: format!("{n} applied"),
            values: col(&|r| r.u_applied[i]),
        });
    }
    charts.push(("inputs.svg".to_string(), line_chart("Inputs", &t, &inputs, &[])));

    if !log.constraints.is_empty() {
        let hs = (0..log.constraints.len())
            .map(|i| Series {
                label: format!("h{i}"),
                values: col(&|r| r.barriers[i].h),
            })
            .collect::<Vec<_>>();
        charts.push(("barriers.svg".to_string(), line_chart("Barrier values", &t, &hs, &[0.0])));
        if log.filter_mode == FilterMode::Smcbf {
            let ss = (0..log.constraints.len())
                .map(|i| Series {
                    label: format!("S{i}"),
                    values: col(&|r| r.barriers[i].s),
                })
                .collect::<Vec<_>>();
            let layers: Vec<f64> = log
                .constraints
                .iter()
                .flat_map(|c| [-c.smcbf.phi, c.smcbf.phi])
                .collect();
            charts.push((
                "sliding.svg".to_string(),
                line_chart("Sliding variables", &t, &ss, &layers),
            ));
        }
    }
    charts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{builtin_scenario, ExperimentId};
    use crate::sim::{compute_metrics, run_closed_loop};

    fn short_log(id: ExperimentId) -> (Scenario, TrajectoryLog) {
        let mut s = builtin_scenario(id);
        s.duration = 0.05;
        s.barrier_enable_time = s.barrier_enable_time.min(s.duration);
        let log = run_closed_loop(&s).unwrap();
        (s, log)
    }

    #[test]
    fn csv_has_header_and_exact_numbers() {
        let (_, log) = short_log(ExperimentId::MaglevSmcbfReal);
        let mut buf = Vec::new();
        write_trajectory_csv(&log, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(header, csv_header(&log));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), log.records.len());
        for (row, rec) in rows.iter().zip(&log.records) {
            let cells: Vec<&str> = row.split(',').collect();
            assert_eq!(cells.len(), header.len());
            assert_eq!(cells[0].parse::<f64>().unwrap().to_bits(), rec.t.to_bits());
            for (k, v) in rec.state.iter().enumerate() {
                assert_eq!(cells[1 + k].parse::<f64>().unwrap().to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn config_errors_name_the_field() {
        let s = builtin_scenario(ExperimentId::FurutaLqr);
        let mut v = serde_json::to_value(&s).unwrap();
        v["filter"]["constraints"][0]["limit"] = serde_json::json!("wide");
        let text = serde_json::to_string_pretty(&v).unwrap();
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("filter.constraints[0].limit"), "{err}");
        assert!(err.contains("line"), "{err}");

        let mut s = builtin_scenario(ExperimentId::FurutaLqr);
        s.dt = -1.0;
        let err = parse_config(&serde_json::to_string(&s).unwrap()).unwrap_err().to_string();
        assert!(err.contains("`dt`"), "{err}");
    }

    #[test]
    fn artifacts_and_manifest_round_trip() {
        let (s, log) = short_log(ExperimentId::FurutaSmcbfReal);
        let m = compute_metrics(&log);
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_run_artifacts(
            dir.path(),
            &s,
            &log,
            &m,
            &RunOrigin {
                experiment: Some("furuta-smcbf-real".into()),
                config_path: None,
            },
            true,
        )
        .unwrap();
        for name in ["trajectory.csv", "metrics.json", "states.svg", "sliding.svg"] {
            let bytes = fs::read(dir.path().join(name)).unwrap();
            assert_eq!(manifest.artifacts[name], sha256_hex(&bytes));
        }
        let back: Metrics =
            serde_json::from_slice(&fs::read(dir.path().join(METRICS_FILE)).unwrap()).unwrap();
        assert_eq!(back, m);
        let doc = load_config(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert!(matches!(doc, ConfigDocument::Manifest(_)));
        assert_eq!(doc.into_scenario(), s);
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let (_, log) = short_log(ExperimentId::MaglevEcbfNominal);
        let charts = render_charts(&log);
        let names: Vec<&str> = charts.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["states.svg", "outputs.svg", "inputs.svg", "barriers.svg"]);
        for (_, svg) in charts {
            assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
            assert!(!svg.contains("NaN"));
        }
    }
}
