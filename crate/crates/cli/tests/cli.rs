use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use safe_control::experiments::{builtin_scenario, ExperimentId};
use safe_control::output::{parse_config, sha256_hex, RunManifest};
use safe_control::sim::ReferenceSpec;

fn safectl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_safectl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn examples_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn shipped_configs_match_builtin_experiments() {
    for id in ExperimentId::ALL {
        let path = examples_dir().join(format!("{id}.json"));
        let text = fs::read_to_string(&path).unwrap();
        let doc = parse_config(&text).unwrap();
        assert_eq!(doc.into_scenario(), builtin_scenario(id), "{}", path.display());
    }
}

#[test]
fn list_names_every_experiment_and_figure() {
    let o = safectl(&["list"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for id in ExperimentId::ALL {
        let line = text.lines().find(|l| l.starts_with(id.as_str())).unwrap();
        assert!(line.contains(&format!("Fig. {}", id.figure())), "{line}");
    }
}

#[test]
fn config_run_writes_artifacts_and_manifest_reproduces_it() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let config = examples_dir().join("maglev-smcbf-real.json");
    let o = safectl(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--duration",
        "1.2",
        "--plot",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let manifest_path = first.join("manifest.json");
    let manifest: RunManifest =
        serde_json::from_str(&fs::read_to_string(&manifest_path).unwrap()).unwrap();
    assert_eq!(manifest.scenario.duration, 1.2);
    assert_eq!(manifest.config_path.as_deref(), config.to_str());
    for (name, sum) in &manifest.artifacts {
        assert_eq!(&sha256_hex(&fs::read(first.join(name)).unwrap()), sum, "{name}");
    }
    assert!(manifest.artifacts.contains_key("sliding.svg"));

    let second = dir.path().join("second");
    let o = safectl(&[
        "run",
        "--config",
        manifest_path.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(first.join("trajectory.csv")).unwrap(),
        fs::read(second.join("trajectory.csv")).unwrap()
    );
}

#[test]
fn bad_config_names_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(examples_dir().join("furuta-lqr.json"))
        .unwrap()
        .replace("\"dt\": 0.001", "\"dt\": \"fast\"");
    let path = dir.path().join("bad.json");
    fs::write(&path, text).unwrap();
    let o = safectl(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("`dt`") && err.contains("line"), "{err}");

    let o = safectl(&["run", "furuta-lqr", "--dt=-1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dt"));

    let o = safectl(&["run", "no-such-run"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("furuta-smcbf-real"));

    let o = safectl(&["run", "furuta-lqr", "--perturb", "m9=2", "--duration", "0.1"]);
    assert_eq!(o.status.code(), Some(1));

    let o = safectl(&["run", "furuta-lqr", "--dt", "-1"]);
    assert_eq!(o.status.code(), Some(1), "usage errors must not look like unsafe runs");
    assert!(safectl(&["--help"]).status.success());
}

#[test]
fn unsafe_sliding_mode_run_exits_with_two() {
    // A held 0.5 s pulse pushes the heavier pendulum through the constraint.
    let mut s = builtin_scenario(ExperimentId::FurutaSmcbfReal);
    s.references[1] = ReferenceSpec::Pulses {
        amplitude: 0.14,
        width: 0.5,
        times: vec![15.0],
    };
    s.duration = 20.0;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wide-pulse.json");
    fs::write(&path, serde_json::to_string(&s).unwrap()).unwrap();
    let out = dir.path().join("out");
    let o = safectl(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("UNSAFE"));
    assert!(out.join("metrics.json").exists());
}

#[test]
fn run_all_writes_one_directory_per_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let o = safectl(&[
        "run",
        "--all",
        "--duration",
        "1.0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for id in ExperimentId::ALL {
        let sub = dir.path().join(id.as_str());
        for name in ["trajectory.csv", "metrics.json", "manifest.json"] {
            assert!(sub.join(name).exists(), "{}/{name}", id);
        }
    }
}
