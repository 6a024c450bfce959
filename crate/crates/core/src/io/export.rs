use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Format, IoError, RunConfig, SCHEMA_VERSION};
use crate::analysis::DiagnosticSeries;
use crate::integrator::{Event, RunningIntegrals, StepStats, Trajectory};
use crate::model::{AgentEnsemble, Matrix};
use crate::suite::{CheckResult, Outcome};

pub const STATES_CSV: &str = "states.csv";
pub const DIAGNOSTICS_CSV: &str = "diagnostics.csv";
pub const TRAJECTORY_JSON: &str = "trajectory.json";
pub const REPORT_JSON: &str = "report.json";
pub const CONFIG_TOML: &str = "config.toml";

/// Shortest representation that parses back to the same `f64`.
fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn states_header(dim: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "agent".to_string()];
    h.extend((1..=dim).map(|k| format!("x{k}")));
    h.extend((1..=dim).map(|k| format!("v{k}")));
    h
}

pub fn diagnostics_header(dim: usize, n_agents: usize) -> Vec<String> {
    let mut h: Vec<String> = ["t", "vel_diameter_2", "pos_diameter", "psi_min"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=dim).map(|k| format!("vM_{k}")));
    h.extend((1..=dim).map(|k| format!("vm_{k}")));
    h.extend((1..=n_agents).map(|i| format!("speed_{i}")));
    h
}

/// One row per agent per sample, time-major, 1-based agent index.
pub fn write_states_csv<W: Write>(traj: &Trajectory, w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    let dim = traj.samples.first().map_or(0, AgentEnsemble::dim);
    out.write_record(states_header(dim))?;
    for s in &traj.samples {
        for i in 0..s.n_agents() {
            let mut row = vec![num(s.time()), (i + 1).to_string()];
            row.extend(s.position(i).iter().map(|&x| num(x)));
            row.extend(s.velocity(i).iter().map(|&x| num(x)));
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_diagnostics_csv<W: Write>(diag: &DiagnosticSeries, w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    let dim = diag.v_max.first().map_or(0, Vec::len);
    let n = diag.speed_norms.first().map_or(0, Vec::len);
    out.write_record(diagnostics_header(dim, n))?;
    for j in 0..diag.len() {
        let mut row = vec![
            num(diag.times[j]),
            num(diag.vel_diameter_2[j]),
            num(diag.pos_diameter[j]),
            num(diag.psi_min[j]),
        ];
        row.extend(diag.v_max[j].iter().map(|&x| num(x)));
        row.extend(diag.v_min[j].iter().map(|&x| num(x)));
        row.extend(diag.speed_norms[j].iter().map(|&x| num(x)));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Rebuilds the samples of a trajectory from a states file. Events, step
/// statistics and running integrals are not part of the CSV layout.
pub fn read_states_csv<R: Read>(r: R) -> Result<Trajectory, IoError> {
    let bad = |m: String| IoError::Format(m);
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.len() < 4 || header.len() % 2 != 0 || &header[0] != "t" || &header[1] != "agent" {
        return Err(bad(format!(
            "unexpected states header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let dim = (header.len() - 2) / 2;
    let expected = states_header(dim);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(bad(format!(
            "unexpected states header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut samples = Vec::new();
    let mut cur: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let flush = |c: (f64, Vec<f64>, Vec<f64>), samples: &mut Vec<AgentEnsemble>| -> Result<(), IoError> {
        let n = c.1.len() / dim;
        let s = AgentEnsemble::new(
            Matrix::from_vec(n, dim, c.1).map_err(|e| bad(e.to_string()))?,
            Matrix::from_vec(n, dim, c.2).map_err(|e| bad(e.to_string()))?,
            c.0,
        )
        .map_err(|e| bad(e.to_string()))?;
        samples.push(s);
        Ok(())
    };
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |k: usize| -> Result<f64, IoError> {
            rec[k]
                .parse::<f64>()
                .map_err(|e| bad(format!("row {}: column {}: {e}", line + 2, &header[k])))
        };
        let t = field(0)?;
        let agent: usize = rec[1]
            .parse()
            .map_err(|e| bad(format!("row {}: agent: {e}", line + 2)))?;
        if cur.as_ref().is_some_and(|c| c.0.to_bits() != t.to_bits()) {
            flush(cur.take().expect("checked above"), &mut samples)?;
        }
        let c = cur.get_or_insert_with(|| (t, Vec::new(), Vec::new()));
        if agent != c.1.len() / dim + 1 {
            return Err(bad(format!(
                "row {}: agents must be listed 1, 2, … within each time",
                line + 2
            )));
        }
        for k in 0..dim {
            c.1.push(field(2 + k)?);
        }
        for k in 0..dim {
            c.2.push(field(2 + dim + k)?);
        }
    }
    if let Some(c) = cur {
        flush(c, &mut samples)?;
    }
    if samples.is_empty() {
        return Err(bad("states file has no rows".into()));
    }
    Ok(Trajectory {
        samples,
        running: vec![],
        events: vec![],
        stats: StepStats::default(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDocument {
    pub schema_version: u32,
    pub n_agents: usize,
    pub dim: usize,
    pub times: Vec<f64>,
    /// `positions[j][i]` is agent `i` at sample `j`.
    pub positions: Vec<Vec<Vec<f64>>>,
    pub velocities: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub running: Vec<RunningIntegrals>,
    #[serde(default)]
    pub events: Vec<Event>,
    #[serde(default)]
    pub stats: StepStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticSeries>,
}

impl TrajectoryDocument {
    pub fn new(traj: &Trajectory, diag: Option<&DiagnosticSeries>) -> Self {
        let first = traj.samples.first();
        Self {
            schema_version: SCHEMA_VERSION,
            n_agents: first.map_or(0, AgentEnsemble::n_agents),
            dim: first.map_or(0, AgentEnsemble::dim),
            times: traj.times(),
            positions: traj.samples.iter().map(|s| s.positions().to_rows()).collect(),
            velocities: traj.samples.iter().map(|s| s.velocities().to_rows()).collect(),
            running: traj.running.clone(),
            events: traj.events.clone(),
            stats: traj.stats.clone(),
            diagnostics: diag.cloned(),
        }
    }

    pub fn into_trajectory(self) -> Result<Trajectory, IoError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(IoError::Format(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.positions.len() != self.times.len() || self.velocities.len() != self.times.len() {
            return Err(IoError::Format(
                "times, positions and velocities differ in length".into(),
            ));
        }
        let samples = self
            .times
            .iter()
            .zip(self.positions.iter().zip(&self.velocities))
            .map(|(&t, (x, v))| AgentEnsemble::from_rows(x, v).map(|s| s.with_time(t)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| IoError::Format(e.to_string()))?;
        Ok(Trajectory {
            samples,
            running: self.running,
            events: self.events,
            stats: self.stats,
        })
    }
}

pub fn read_trajectory_json<R: Read>(r: R) -> Result<Trajectory, IoError> {
    let doc: TrajectoryDocument = serde_json::from_reader(r).map_err(|e| IoError::Format(e.to_string()))?;
    doc.into_trajectory()
}

fn create(path: &Path) -> Result<fs::File, IoError> {
    fs::File::create(path).map_err(|e| IoError::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> IoError {
    IoError::Format(format!("{}: {e}", path.display()))
}

/// Writes the requested formats into `dir` and returns the files written.
pub fn export_trajectory(
    traj: &Trajectory,
    diag: &DiagnosticSeries,
    formats: &[Format],
    dir: &Path,
) -> Result<Vec<PathBuf>, IoError> {
    fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let mut written = Vec::new();
    for f in formats {
        match f {
            Format::Csv => {
                let p = dir.join(STATES_CSV);
                write_states_csv(traj, std::io::BufWriter::new(create(&p)?)).map_err(|e| csv_err(&p, e))?;
                written.push(p);
                let p = dir.join(DIAGNOSTICS_CSV);
                write_diagnostics_csv(diag, std::io::BufWriter::new(create(&p)?)).map_err(|e| csv_err(&p, e))?;
                written.push(p);
            }
            Format::Json => {
                let p = dir.join(TRAJECTORY_JSON);
                let doc = TrajectoryDocument::new(traj, Some(diag));
                serde_json::to_writer(std::io::BufWriter::new(create(&p)?), &doc)
                    .map_err(|e| IoError::Format(format!("{}: {e}", p.display())))?;
                written.push(p);
            }
        }
    }
    Ok(written)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReportDocument {
    pub schema_version: u32,
    pub scenario: Option<String>,
    pub seed: u64,
    pub t_end: f64,
    pub all_passed: bool,
    pub results: Vec<CheckResult>,
}

impl CheckReportDocument {
    pub fn new(cfg: &RunConfig, t_end: f64, results: Vec<CheckResult>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario: cfg.scenario.clone(),
            seed: cfg.seed,
            t_end,
            all_passed: !results.iter().any(CheckResult::failed),
            results,
        }
    }
}

pub fn write_report(doc: &CheckReportDocument, path: &Path) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(doc).map_err(|e| IoError::Format(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| IoError::io(path, e))
}

/// Plain-text listing: one line per check, then indented condition details.
pub fn format_report(results: &[CheckResult]) -> String {
    let mut s = String::new();
    for r in results {
        let tag = match r.outcome {
            Outcome::Pass => "PASS",
            Outcome::Fail => "FAIL",
            Outcome::Skipped => "SKIP",
            Outcome::Error => "ERROR",
        };
        s.push_str(&format!("{tag:<5} {:<24} {}\n", r.id, r.message));
        for c in &r.conditions {
            let horizon = match c.horizon {
                crate::weights::Horizon::Finite(t) => format!("t = {t}"),
                crate::weights::Horizon::Infinite => "t = inf".to_string(),
            };
            s.push_str(&format!(
                "      {}: lhs {:.6e} {} rhs {:.6e} [{}, {:?}]\n",
                c.name,
                c.lhs,
                c.relation.symbol(),
                c.rhs,
                horizon,
                c.source
            ));
            for a in &c.advisories {
                s.push_str(&format!("        advisory: {a}\n"));
            }
        }
    }
    s
}
