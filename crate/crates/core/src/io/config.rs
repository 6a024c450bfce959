use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::Spanned;

use super::IoError;
use crate::integrator::{OutputSpec, Scheme, SimConfig};
use crate::model::{AgentEnsemble, ModelError, ModelParams, Variant};
use crate::scenarios::{build_scenario, Expectation, InitialSpec, Scenario, ScenarioError};
use crate::suite::KNOWN_CHECKS;
use crate::weights::CommWeight;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

/// A fully resolved, validated run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Preset the run started from, if any.
    pub scenario: Option<String>,
    pub seed: u64,
    pub params: ModelParams,
    pub weight: CommWeight,
    pub initial: InitialSpec,
    pub sim: SimConfig,
    pub out: PathBuf,
    pub formats: Vec<Format>,
    pub checks: Vec<String>,
    pub expected: Vec<Expectation>,
}

impl RunConfig {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            scenario: Some(s.name.clone()),
            seed: s.seed,
            params: s.params.clone(),
            weight: s.weight.clone(),
            initial: s.initial_spec.clone(),
            sim: s.sim.clone(),
            out: PathBuf::from("out"),
            formats: vec![Format::Csv],
            checks: s.checks.clone(),
            expected: s.expected.clone(),
        }
    }

    pub fn initial_state(&self) -> Result<AgentEnsemble, ScenarioError> {
        self.initial.realize(self.seed)
    }

    /// Inline document that parses back to this configuration.
    pub fn to_toml(&self) -> String {
        let doc = Document {
            scenario: None,
            seed: Some(self.seed),
            out: Some(self.out.clone()),
            formats: Some(
                self.formats
                    .iter()
                    .map(|f| Spanned::new(0..0, format_name(*f).to_string()))
                    .collect(),
            ),
            model: Some(RawModel {
                variant: Some(Spanned::new(0..0, self.params.variant)),
                p: Some(Spanned::new(0..0, self.params.p)),
                q: Some(Spanned::new(0..0, self.params.q)),
                r: Some(Spanned::new(0..0, self.params.r)),
                a: Some(Spanned::new(0..0, OneOrMany::Many(self.params.a.clone()))),
                b: Some(Spanned::new(0..0, OneOrMany::Many(self.params.b.clone()))),
                coupling_scale: Some(Spanned::new(0..0, self.params.coupling_scale)),
            }),
            weight: Some(Spanned::new(0..0, self.weight.clone())),
            initial: Some(Spanned::new(0..0, self.initial.clone())),
            sim: Some(RawSim {
                t_end: Some(Spanned::new(0..0, self.sim.t_end)),
                scheme: Some(Spanned::new(0..0, self.sim.scheme.clone())),
                output_dt: None,
                output: Some(Spanned::new(0..0, self.sim.output.clone())),
                consensus_eps: Some(Spanned::new(0..0, self.sim.consensus_eps)),
                clamp_on_consensus: Some(self.sim.clamp_on_consensus),
            }),
            checks: Some(RawChecks {
                list: self.checks.iter().map(|c| Spanned::new(0..0, c.clone())).collect(),
            }),
            expected: self.expected.clone(),
        };
        toml::to_string(&doc).expect("configuration serializes")
    }
}

fn format_name(f: Format) -> &'static str {
    match f {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    #[serde(skip_serializing_if = "Option::is_none")]
    variant: Option<Spanned<Variant>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<Spanned<OneOrMany>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<Spanned<OneOrMany>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coupling_scale: Option<Spanned<f64>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    #[serde(skip_serializing_if = "Option::is_none")]
    t_end: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scheme: Option<Spanned<Scheme>>,
    /// Shorthand for a uniform output grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    output_dt: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<Spanned<OutputSpec>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    consensus_eps: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    clamp_on_consensus: Option<bool>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChecks {
    list: Vec<Spanned<String>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    #[serde(skip_serializing_if = "Option::is_none")]
    scenario: Option<Spanned<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    formats: Option<Vec<Spanned<String>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<RawModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weight: Option<Spanned<CommWeight>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial: Option<Spanned<InitialSpec>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sim: Option<RawSim>,
    #[serde(skip_serializing_if = "Option::is_none")]
    checks: Option<RawChecks>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    expected: Vec<Expectation>,
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn invalid<T>(
        &self,
        span: Option<std::ops::Range<usize>>,
        field: &str,
        message: impl Into<String>,
    ) -> Result<T, IoError> {
        Err(IoError::Validation {
            line: span.map(|s| line_of(self.text, s.start)),
            field: field.to_string(),
            message: message.into(),
            file: None,
        })
    }
}

fn take<T: Clone>(raw: &Option<Spanned<T>>, base: Option<&T>) -> Option<T> {
    raw.as_ref().map(|s| s.get_ref().clone()).or_else(|| base.cloned())
}

fn span_of<T>(raw: &Option<Spanned<T>>) -> Option<std::ops::Range<usize>> {
    raw.as_ref().map(Spanned::span)
}

/// Parses and validates a configuration document.
///
/// With `scenario = "..."` the preset supplies every field and the sections
/// override individual values; without it, `[model]`, `[weight]` and
/// `[initial]` are required.
pub fn parse_config(text: &str) -> Result<RunConfig, IoError> {
    let doc: Document = toml::from_str(text).map_err(|e| {
        let (line, col) = e
            .span()
            .map(|s| {
                let line = line_of(text, s.start);
                let line_start = text[..s.start.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
                (line, s.start - line_start + 1)
            })
            .unwrap_or((0, 0));
        IoError::Syntax {
            line,
            column: col,
            message: e.message().to_string(),
            file: None,
        }
    })?;
    let cx = Ctx { text };
    let seed = doc.seed.unwrap_or(0);

    let base = match &doc.scenario {
        Some(name) => Some(build_scenario(name.get_ref(), seed).or_else(|e| match e {
            ScenarioError::Unknown(_) => cx.invalid(Some(name.span()), "scenario", e.to_string()),
            other => cx.invalid(Some(name.span()), "scenario", other.to_string()),
        })?),
        None => None,
    };
    if base.is_none() && doc.model.is_none() {
        return cx.invalid(None, "scenario", "no scenario named and no [model] section");
    }

    let m = doc.model.unwrap_or_default();
    let bp = base.as_ref().map(|s| &s.params);
    let need = |v: Option<f64>, raw: &Option<Spanned<f64>>, name: &str| -> Result<f64, IoError> {
        v.ok_or(())
            .or_else(|_| cx.invalid(span_of(raw), &format!("model.{name}"), "missing"))
    };
    let variant =
        take(&m.variant, bp.map(|p| &p.variant)).map_or_else(|| cx.invalid(None, "model.variant", "missing"), Ok)?;
    let p = need(take(&m.p, bp.map(|p| &p.p)), &m.p, "p")?;
    let q = need(take(&m.q, bp.map(|p| &p.q)), &m.q, "q")?;
    let r = need(take(&m.r, bp.map(|p| &p.r)), &m.r, "r")?;
    let a =
        m.a.as_ref()
            .map(|s| s.get_ref().clone().into_vec())
            .or_else(|| bp.map(|p| p.a.clone()))
            .map_or_else(|| cx.invalid(None, "model.a", "missing"), Ok)?;
    let b =
        m.b.as_ref()
            .map(|s| s.get_ref().clone().into_vec())
            .or_else(|| bp.map(|p| p.b.clone()))
            .map_or_else(|| cx.invalid(None, "model.b", "missing"), Ok)?;
    let coupling_scale = take(&m.coupling_scale, bp.map(|p| &p.coupling_scale)).unwrap_or(1.0);
    let params = ModelParams {
        variant,
        p,
        q,
        r,
        a,
        b,
        coupling_scale,
    };

    let weight = take(&doc.weight, base.as_ref().map(|s| &s.weight))
        .map_or_else(|| cx.invalid(None, "weight", "missing [weight] section"), Ok)?;
    if let Err(e) = weight.validate() {
        return cx.invalid(span_of(&doc.weight), "weight", e.to_string());
    }

    let initial = take(&doc.initial, base.as_ref().map(|s| &s.initial_spec))
        .map_or_else(|| cx.invalid(None, "initial", "missing [initial] section"), Ok)?;
    let state = initial
        .realize(seed)
        .or_else(|e| cx.invalid(span_of(&doc.initial), "initial", e.to_string()))?;

    if let Err(e) = params.validate(Some(state.dim())) {
        let (field, span) = match &e {
            ModelError::InvalidParam { name, .. } => {
                let span = match *name {
                    "p" => span_of(&m.p),
                    "q" => span_of(&m.q),
                    "r" => span_of(&m.r),
                    "a" => span_of(&m.a),
                    "b" => span_of(&m.b),
                    "coupling_scale" => span_of(&m.coupling_scale),
                    _ => span_of(&m.variant),
                };
                (format!("model.{name}"), span)
            }
            _ => ("model".to_string(), None),
        };
        return cx.invalid(span, &field, e.to_string());
    }

    let s = doc.sim.unwrap_or_default();
    let bs = base.as_ref().map(|s| &s.sim);
    let mut sim = bs.cloned().unwrap_or_default();
    if let Some(t) = &s.t_end {
        sim.t_end = *t.get_ref();
        // A preset's output grid belongs to its own horizon.
        if s.output.is_none() && s.output_dt.is_none() {
            sim.output = match base {
                Some(_) => crate::scenarios::output_grid(sim.t_end),
                None => OutputSpec::uniform(sim.t_end, 0.05),
            };
        }
    } else if base.is_none() {
        sim.output = OutputSpec::uniform(sim.t_end, 0.05);
    }
    if let Some(sc) = &s.scheme {
        sim.scheme = sc.get_ref().clone();
    }
    match (&s.output, &s.output_dt) {
        (Some(_), Some(dt)) => {
            return cx.invalid(
                Some(dt.span()),
                "sim.output_dt",
                "give either output or output_dt, not both",
            )
        }
        (Some(o), None) => sim.output = o.get_ref().clone(),
        (None, Some(dt)) => {
            let dt = *dt.get_ref();
            if !(dt > 0.0 && dt.is_finite()) {
                return cx.invalid(span_of(&s.output_dt), "sim.output_dt", "must be positive");
            }
            sim.output = OutputSpec::uniform(sim.t_end, dt);
        }
        (None, None) => {}
    }
    if let Some(e) = &s.consensus_eps {
        sim.consensus_eps = *e.get_ref();
    }
    if let Some(c) = s.clamp_on_consensus {
        sim.clamp_on_consensus = c;
    }
    if let Err(e) = sim.validate() {
        let span = span_of(&s.t_end).or(span_of(&s.scheme)).or(span_of(&s.output));
        return cx.invalid(span, "sim", e.to_string());
    }

    let formats = match &doc.formats {
        Some(list) => {
            let mut out = Vec::new();
            for f in list {
                let parsed: Format = f
                    .get_ref()
                    .parse()
                    .or_else(|m: String| cx.invalid(Some(f.span()), "formats", m))?;
                if !out.contains(&parsed) {
                    out.push(parsed);
                }
            }
            if out.is_empty() {
                return cx.invalid(None, "formats", "select at least one output format");
            }
            out
        }
        None => vec![Format::Csv],
    };

    let checks = match &doc.checks {
        Some(c) => {
            for id in &c.list {
                if !KNOWN_CHECKS.contains(&id.get_ref().as_str()) {
                    return cx.invalid(
                        Some(id.span()),
                        "checks.list",
                        format!("unknown check `{}` (known: {})", id.get_ref(), KNOWN_CHECKS.join(", ")),
                    );
                }
            }
            c.list.iter().map(|s| s.get_ref().clone()).collect()
        }
        None => base.as_ref().map(|s| s.checks.clone()).unwrap_or_default(),
    };

    let expected = if doc.expected.is_empty() {
        base.as_ref().map(|s| s.expected.clone()).unwrap_or_default()
    } else {
        doc.expected
    };

    Ok(RunConfig {
        scenario: doc.scenario.map(Spanned::into_inner),
        seed,
        params,
        weight,
        initial,
        sim,
        out: doc.out.unwrap_or_else(|| PathBuf::from("out")),
        formats,
        checks,
        expected,
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_config(&text).map_err(|e| e.in_file(path))
}

/// Sets a dotted key (`model.a`, `weight.beta`, `seed`) in a TOML document,
/// creating tables as needed. Values are parsed as TOML, falling back to a
/// string.
pub fn set_key(doc: &mut toml::Table, key: &str, value: &str) -> Result<(), IoError> {
    let parsed: toml::Value = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut table = doc;
    for p in path {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| IoError::Validation {
            line: None,
            field: key.to_string(),
            message: format!("`{p}` is not a table"),
            file: None,
        })?;
    }
    table.insert(last.to_string(), parsed);
    Ok(())
}
