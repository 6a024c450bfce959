//! `pflock` command line: simulate, check, sweep and list presets.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::analysis::compute_diagnostics;
use crate::integrator::{integrate, OutputSpec, SimConfig, Trajectory};
use crate::io::{
    export_trajectory, format_report, load_config, parse_config, set_key, write_report, CheckReportDocument, Format,
    IoError, RunConfig, CONFIG_TOML, REPORT_JSON,
};
use crate::scenarios::{build_scenario, SCENARIO_NAMES};
use crate::suite::{run_checks, CheckContext, CheckResult, KNOWN_CHECKS};

/// Exit status when a requested check fails or errors.
pub const EXIT_CHECK_FAILED: i32 = 1;
/// Exit status for bad arguments, configuration or I/O.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "pflock",
    version,
    about = "Simulate and check p-Laplacian flocking with Rayleigh friction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one configuration and export the trajectory.
    Simulate(RunArgs),
    /// Integrate, then evaluate the requested checks (exit 1 if any fails).
    Check(RunArgs),
    /// Run a cartesian grid of parameter values, one output directory per point.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// `key=v1,v2,...` with a dotted key such as `model.a` or `weight.beta`.
        #[arg(long = "set", value_name = "KEY=VALUES", required = true)]
        set: Vec<String>,
    },
    /// Preset scenarios.
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
}

#[derive(Debug, Subcommand)]
enum ScenarioAction {
    /// Print the preset names.
    List,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Configuration document (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset scenario name.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output formats, comma separated.
    #[arg(long, value_delimiter = ',')]
    format: Vec<Format>,
    /// Override the simulated horizon.
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Check identifiers, comma separated.
    #[arg(long, value_delimiter = ',')]
    checks: Vec<String>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug)]
struct CliError(String);

impl<E: std::fmt::Display> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError(e.to_string())
    }
}

/// Keeps the existing output spacing when the horizon changes.
fn retime(sim: &mut SimConfig, t_end: f64) {
    if let OutputSpec::Times(ts) = &mut sim.output {
        let step = match ts.as_slice() {
            [.., a, b] => b - a,
            [a] => *a,
            [] => 0.05,
        };
        ts.retain(|&t| t < t_end);
        let mut t = ts.last().copied().unwrap_or(0.0) + step;
        while t < t_end - 1e-9 * t_end.max(1.0) {
            ts.push(t);
            t += step;
        }
        ts.push(t_end);
    }
    sim.t_end = t_end;
}

fn resolve(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match (&args.config, &args.scenario) {
        (Some(_), Some(_)) => return Err(CliError("give either --config or --scenario, not both".into())),
        (Some(path), None) => {
            let mut cfg = load_config(path)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            cfg
        }
        (None, Some(name)) => RunConfig::from_scenario(&build_scenario(name, args.seed.unwrap_or(0))?),
        (None, None) => return Err(CliError("need --config or --scenario".into())),
    };
    if let Some(t) = args.t_end {
        if !(t.is_finite() && t > 0.0) {
            return Err(CliError(format!("--t-end must be positive, got {t}")));
        }
        retime(&mut cfg.sim, t);
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if !args.format.is_empty() {
        cfg.formats = args.format.clone();
    }
    if !args.checks.is_empty() {
        if let Some(bad) = args.checks.iter().find(|c| !KNOWN_CHECKS.contains(&c.as_str())) {
            return Err(CliError(format!(
                "unknown check `{bad}` (known: {})",
                KNOWN_CHECKS.join(", ")
            )));
        }
        cfg.checks = args.checks.clone();
    }
    cfg.sim.validate()?;
    Ok(cfg)
}

fn simulate(cfg: &RunConfig) -> Result<Trajectory, CliError> {
    let initial = cfg.initial_state()?;
    Ok(integrate(&initial, &cfg.params, &cfg.weight, &cfg.sim)?)
}

fn export(cfg: &RunConfig, traj: &Trajectory, dir: &Path) -> Result<usize, CliError> {
    let diag = compute_diagnostics(traj, &cfg.weight);
    let files = export_trajectory(traj, &diag, &cfg.formats, dir)?;
    let p = dir.join(CONFIG_TOML);
    fs::write(&p, cfg.to_toml()).map_err(|e| IoError::Io { path: p, source: e })?;
    Ok(files.len() + 1)
}

fn check(cfg: &RunConfig, traj: &Trajectory, dir: &Path) -> Result<Vec<CheckResult>, CliError> {
    let ctx = CheckContext {
        params: &cfg.params,
        weight: &cfg.weight,
        sim: &cfg.sim,
        expected: &cfg.expected,
    };
    let results = run_checks(&cfg.checks, traj, &ctx);
    fs::create_dir_all(dir).map_err(|e| IoError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let doc = CheckReportDocument::new(cfg, traj.last().time(), results);
    write_report(&doc, &dir.join(REPORT_JSON))?;
    Ok(doc.results)
}

fn summary(traj: &Trajectory) -> String {
    let last = traj.last();
    let speeds: Vec<f64> = (0..last.n_agents()).map(|i| last.speed(i)).collect();
    let lo = speeds.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = speeds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let flock = traj
        .flocking_event_time()
        .map_or("not detected".to_string(), |t| format!("t = {t:.6}"));
    format!(
        "t_end = {}, {} samples, {} steps ({} rejected), flocking {flock}, final speeds in [{lo:.6}, {hi:.6}]",
        last.time(),
        traj.samples.len(),
        traj.stats.accepted,
        traj.stats.rejected
    )
}

/// Splits `v1,v2,[a,b]` at top-level commas.
fn split_values(s: &str) -> Vec<String> {
    let (mut out, mut cur, mut depth) = (Vec::new(), String::new(), 0i32);
    for ch in s.chars() {
        match ch {
            '[' | '{' => depth += 1,
            ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                out.push(std::mem::take(&mut cur).trim().to_string());
                continue;
            }
            _ => {}
        }
        cur.push(ch);
    }
    out.push(cur.trim().to_string());
    out
}

fn sweep_grid(sets: &[String]) -> Result<Vec<Vec<(String, String)>>, CliError> {
    let mut axes = Vec::new();
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError(format!("--set expects KEY=VALUES, got `{s}`")))?;
        let vals = split_values(v);
        if k.trim().is_empty() || vals.iter().any(String::is_empty) {
            return Err(CliError(format!("--set `{s}` has an empty key or value")));
        }
        axes.push((k.trim().to_string(), vals));
    }
    let mut grid: Vec<Vec<(String, String)>> = vec![vec![]];
    for (k, vals) in &axes {
        grid = grid
            .into_iter()
            .flat_map(|pt| {
                vals.iter().map(move |v| {
                    let mut p = pt.clone();
                    p.push((k.clone(), v.clone()));
                    p
                })
            })
            .collect();
    }
    Ok(grid)
}

fn point_dir(index: usize, point: &[(String, String)]) -> String {
    let label: String = point
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join("_")
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._=-".contains(c) {
                c
            } else {
                '-'
            }
        })
        .collect();
    format!("{index:04}_{label}")
}

struct PointOutcome {
    dir: String,
    line: String,
    failed: bool,
}

fn sweep(base: &RunConfig, sets: &[String]) -> Result<Vec<PointOutcome>, CliError> {
    let grid = sweep_grid(sets)?;
    let base_doc: toml::Table = toml::from_str(&base.to_toml())?;
    let mut configs = Vec::with_capacity(grid.len());
    for (i, point) in grid.iter().enumerate() {
        let mut doc = base_doc.clone();
        for (k, v) in point {
            set_key(&mut doc, k, v)?;
        }
        let text = toml::to_string(&doc)?;
        let mut cfg = parse_config(&text).map_err(|e| CliError(format!("grid point {}: {e}", point_dir(i, point))))?;
        cfg.scenario = base.scenario.clone();
        cfg.expected = base.expected.clone();
        let dir = point_dir(i, point);
        cfg.out = base.out.join(&dir);
        configs.push((dir, cfg));
    }
    Ok(configs
        .par_iter()
        .map(|(dir, cfg)| {
            let run = || -> Result<(String, bool), CliError> {
                let traj = simulate(cfg)?;
                export(cfg, &traj, &cfg.out)?;
                let results = if cfg.checks.is_empty() {
                    vec![]
                } else {
                    check(cfg, &traj, &cfg.out)?
                };
                let failed: Vec<&str> = results.iter().filter(|r| r.failed()).map(|r| r.id.as_str()).collect();
                let line = if failed.is_empty() {
                    summary(&traj)
                } else {
                    format!("{}; failed: {}", summary(&traj), failed.join(", "))
                };
                Ok((line, !failed.is_empty()))
            };
            match run() {
                Ok((line, failed)) => PointOutcome {
                    dir: dir.clone(),
                    line,
                    failed,
                },
                Err(e) => PointOutcome {
                    dir: dir.clone(),
                    line: format!("error: {}", e.0),
                    failed: true,
                },
            }
        })
        .collect())
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    match cli.command {
        Command::Scenario {
            action: ScenarioAction::List,
        } => {
            for name in SCENARIO_NAMES {
                writeln!(out, "{name}")?;
            }
            Ok(0)
        }
        Command::Simulate(args) => {
            let cfg = resolve(&args)?;
            let traj = simulate(&cfg)?;
            let n = export(&cfg, &traj, &cfg.out)?;
            if !args.quiet {
                writeln!(out, "{}", summary(&traj))?;
                writeln!(out, "wrote {n} files to {}", cfg.out.display())?;
            }
            Ok(0)
        }
        Command::Check(args) => {
            let cfg = resolve(&args)?;
            if cfg.checks.is_empty() {
                return Err(CliError(
                    "no checks requested (use --checks or a [checks] section)".into(),
                ));
            }
            let traj = simulate(&cfg)?;
            let results = check(&cfg, &traj, &cfg.out)?;
            let failed = results.iter().any(CheckResult::failed);
            if !args.quiet {
                writeln!(out, "{}", summary(&traj))?;
                write!(out, "{}", format_report(&results))?;
                writeln!(out, "report written to {}", cfg.out.join(REPORT_JSON).display())?;
            }
            Ok(if failed { EXIT_CHECK_FAILED } else { 0 })
        }
        Command::Sweep { run, set } => {
            let cfg = resolve(&run)?;
            let points = sweep(&cfg, &set)?;
            let mut index = String::from("point,status,summary\n");
            for p in &points {
                let status = if p.failed { "failed" } else { "ok" };
                index.push_str(&format!("{},{status},\"{}\"\n", p.dir, p.line.replace('"', "'")));
                if !run.quiet {
                    writeln!(out, "{} [{status}] {}", p.dir, p.line)?;
                }
            }
            let p = cfg.out.join("sweep.csv");
            fs::create_dir_all(&cfg.out)?;
            fs::write(&p, index)?;
            Ok(if points.iter().any(|p| p.failed) {
                EXIT_CHECK_FAILED
            } else {
                0
            })
        }
    }
}

/// Runs the command line and returns the process exit status.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return if code == 0 { 0 } else { EXIT_USAGE };
        }
    };
    match dispatch(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.0);
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run_cli(std::iter::once("pflock").chain(args.iter().copied()), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn lists_presets() {
        let (code, out, _) = run(&["scenario", "list"]);
        assert_eq!(code, 0);
        assert_eq!(out.lines().collect::<Vec<_>>(), SCENARIO_NAMES.to_vec());
    }

    #[test]
    fn missing_config_fails() {
        let (code, _, err) = run(&["simulate", "--config", "definitely-missing.cfg"]);
        assert_ne!(code, 0);
        assert!(err.contains("definitely-missing.cfg"), "{err}");
    }

    #[test]
    fn unknown_check_is_a_usage_error() {
        let (code, _, err) = run(&["check", "--scenario", "single_agent", "--checks", "nope"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("unknown check"));
    }

    #[test]
    fn split_respects_brackets() {
        assert_eq!(split_values("0.1,[0.1, 0.01],x"), vec!["0.1", "[0.1, 0.01]", "x"]);
    }

    #[test]
    fn grid_is_cartesian() {
        let g = sweep_grid(&["a=1,2".into(), "b=x,y,z".into()]).unwrap();
        assert_eq!(g.len(), 6);
        assert!(sweep_grid(&["a".into()]).is_err());
    }

    #[test]
    fn retime_keeps_spacing() {
        let mut sim = SimConfig {
            t_end: 1.0,
            output: OutputSpec::uniform(1.0, 0.25),
            ..SimConfig::default()
        };
        retime(&mut sim, 1.6);
        let OutputSpec::Times(ts) = &sim.output else { panic!() };
        assert_eq!(ts.len(), 7);
        assert_eq!(*ts.last().unwrap(), 1.6);
        retime(&mut sim, 0.6);
        let OutputSpec::Times(ts) = &sim.output else { panic!() };
        assert_eq!(ts, &vec![0.25, 0.5, 0.6]);
    }
}
