//! `safectl`: run the built-in experiments or a scenario file and write
//! the trajectory, metrics, manifest and optional charts.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use clap::{Args, Parser, Subcommand};
use safe_control::experiments::{builtin_scenario, ExperimentId};
use safe_control::output::{load_config, write_run_artifacts, RunOrigin};
use safe_control::sim::{compute_metrics, run_closed_loop, Metrics, Scenario};
use safe_control::{Error, Result};

/// Exit status when a sliding-mode filtered run ends up with `h < 0`.
const EXIT_UNSAFE: u8 = 2;

#[derive(Parser)]
#[command(name = "safectl", version, about = "CBF safety-filter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in experiments.
    List,
    /// Print the resolved scenario of a built-in experiment as JSON.
    Config { experiment: String },
    /// Run one experiment, a scenario/manifest file, or everything.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Built-in experiment id (see `safectl list`).
    #[arg(conflicts_with_all = ["config", "all"], required_unless_present_any = ["config", "all"])]
    experiment: Option<String>,
    /// Scenario JSON, or the manifest.json of an earlier run.
    #[arg(long, conflicts_with = "all")]
    config: Option<PathBuf>,
    /// Run every built-in experiment concurrently, one subdirectory each.
    #[arg(long)]
    all: bool,
    /// Output directory [default: runs/<scenario name>, or runs/ with --all].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the integration step [s].
    #[arg(long)]
    dt: Option<f64>,
    /// Override the simulated duration [s].
    #[arg(long)]
    duration: Option<f64>,
    /// Scale a plant parameter of the simulated plant, e.g. `m1=1.6`.
    #[arg(long, value_name = "FIELD=SCALE", value_parser = parse_perturbation)]
    perturb: Vec<(String, f64)>,
    /// Also write SVG charts.
    #[arg(long)]
    plot: bool,
}

fn parse_perturbation(s: &str) -> std::result::Result<(String, f64), String> {
    let (field, scale) = s
        .split_once('=')
        .ok_or_else(|| format!("expected FIELD=SCALE, got `{s}`"))?;
    let scale: f64 = scale
        .trim()
        .parse()
        .map_err(|e| format!("bad scale in `{s}`: {e}"))?;
    Ok((field.trim().to_string(), scale))
}

struct Job {
    scenario: Scenario,
    origin: RunOrigin,
    out: PathBuf,
}

fn apply_overrides(s: &mut Scenario, args: &RunArgs) -> Result<()> {
    if let Some(dt) = args.dt {
        s.dt = dt;
    }
    if let Some(d) = args.duration {
        s.duration = d;
    }
    for (field, scale) in &args.perturb {
        s.plant.perturbation_mut().insert(field.clone(), *scale);
    }
    s.validate()
}

fn jobs(args: &RunArgs) -> Result<Vec<Job>> {
    let base = |name: &str| match &args.out {
        Some(dir) if !args.all => dir.clone(),
        Some(dir) => dir.join(name),
        None => Path::new("runs").join(name),
    };
    let mut jobs = Vec::new();
    if args.all {
        for id in ExperimentId::ALL {
            jobs.push(Job {
                scenario: builtin_scenario(id),
                origin: RunOrigin {
                    experiment: Some(id.as_str().into()),
                    config_path: None,
                },
                out: base(id.as_str()),
            });
        }
    } else if let Some(path) = &args.config {
        let scenario = load_config(path)?.into_scenario();
        jobs.push(Job {
            out: base(&scenario.name),
            scenario,
            origin: RunOrigin {
                experiment: None,
                config_path: Some(path.clone()),
            },
        });
    } else if let Some(name) = &args.experiment {
        let id: ExperimentId = name.parse()?;
        jobs.push(Job {
            scenario: builtin_scenario(id),
            origin: RunOrigin {
                experiment: Some(id.as_str().into()),
                config_path: None,
            },
            out: base(id.as_str()),
        });
    }
    for job in &mut jobs {
        apply_overrides(&mut job.scenario, args)?;
    }
    Ok(jobs)
}

fn execute(job: &Job, plot: bool) -> Result<Metrics> {
    let log = run_closed_loop(&job.scenario)?;
    let metrics = compute_metrics(&log);
    write_run_artifacts(&job.out, &job.scenario, &log, &metrics, &job.origin, plot)?;
    Ok(metrics)
}

fn summary(job: &Job, m: &Metrics) -> String {
    let min_h = m.min_h.map_or("n/a".to_string(), |h| format!("{h:.3e}"));
    let mut line = format!(
        "{:<22} filter={:<6} min_h={min_h:<11} fallbacks={} clamps={} -> {}",
        m.scenario,
        m.filter_mode.as_str(),
        m.qp_fallbacks,
        m.clamp_hits,
        job.out.display()
    );
    if m.safety_violated {
        line.push_str("  UNSAFE");
    }
    line
}

fn run(args: &RunArgs) -> Result<bool> {
    let jobs = jobs(args)?;
    let results: Vec<Result<Metrics>> = thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|job| scope.spawn(move || execute(job, args.plot)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Config("run panicked".into()))))
            .collect()
    });
    let mut unsafe_run = false;
    let mut first_err = None;
    for (job, res) in jobs.iter().zip(results) {
        match res {
            Ok(m) => {
                println!("{}", summary(job, &m));
                unsafe_run |= m.safety_violated;
            }
            Err(e) => {
                eprintln!("{}: {e}", job.scenario.name);
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(unsafe_run),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Usage errors exit 1 so that 2 always means an unsafe run.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::List => {
            for id in ExperimentId::ALL {
                println!("{:<22} {}", id.as_str(), id.description());
            }
            ExitCode::SUCCESS
        }
        Command::Config { experiment } => match experiment.parse::<ExperimentId>() {
            Ok(id) => {
                let text = serde_json::to_string_pretty(&builtin_scenario(id))
                    .expect("scenarios serialize");
                println!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
        Command::Run(args) => match run(&args) {
            Ok(false) => ExitCode::SUCCESS,
            Ok(true) => ExitCode::from(EXIT_UNSAFE),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
    }
}
