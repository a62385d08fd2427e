//! Experiment descriptions in TOML, their execution and the verification
//! suite.
//!
//! ```toml
//! name = "pair-conservative"
//! t_end = 4.5
//! initial = { closed_form = { p0 = 1.0, q0 = -0.2876820724517809 } }
//! policy = { kind = "conservative_reflection" }
//! t0_list = ["T"]
//! B_list = ["[-1,1]", "{0}"]
//! ```
//!
//! `initial` is either a list of `[p, q]` pairs (sorted by `q`), a
//! `closed_form` pair, or a `pair_creation` pair (zero data at `t = 0`).

pub mod run;
pub mod verify;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::characteristics::{default_deltas, Flavor, SetSpec};
use crate::error::{Error, Result};
use crate::measures::{default_gaps, MeasureOptions};
use crate::peakon::{ClosedFormPair, IntegrateOptions, PeakonState, DEFAULT_EPS_GAP};
use crate::prolongation::ProlongationPolicy;

pub const DEFAULT_ODE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    Peakons(PeakonState),
    ClosedForm(ClosedFormPair),
    /// Zero data from which the given pair emerges.
    PairCreation(ClosedFormPair),
}

impl InitialData {
    pub fn closed_form(&self) -> Option<ClosedFormPair> {
        match self {
            Self::Peakons(s) => s.as_antisymmetric_pair(),
            Self::ClosedForm(p) | Self::PairCreation(p) => Some(*p),
        }
    }

    pub fn state(&self) -> PeakonState {
        match self {
            Self::Peakons(s) => s.clone(),
            Self::ClosedForm(p) => p.initial_state(),
            Self::PairCreation(_) => PeakonState::zero(0.0),
        }
    }
}

/// Characteristic output requested by a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharRequest {
    pub zeta0: f64,
    pub t0: f64,
    pub t1: f64,
    #[serde(default = "generic")]
    pub flavor: Flavor,
}

fn generic() -> Flavor {
    Flavor::Generic
}

/// A measure base time: a number or `"T"` for the first singular time.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum TimeSpec {
    At(f64),
    Symbol(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    initial: toml::Value,
    policy: Option<ProlongationPolicy>,
    t_end: f64,
    ode_tol: Option<f64>,
    #[serde(default)]
    t0_list: Vec<TimeSpec>,
    #[serde(rename = "B_list", default)]
    b_list: Vec<String>,
    output_dir: Option<PathBuf>,
    delta_seq: Option<Vec<f64>>,
    t_seq: Option<Vec<f64>>,
    #[serde(default)]
    characteristics: Vec<CharRequest>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub initial: InitialData,
    pub policy: ProlongationPolicy,
    pub t_end: f64,
    pub ode_tol: f64,
    pub t0_list: Vec<f64>,
    pub b_list: Vec<SetSpec>,
    pub output_dir: Option<PathBuf>,
    /// Offsets of the δ-families.
    pub delta_seq: Vec<f64>,
    /// Time gaps of the one-sided limits.
    pub t_seq: Vec<f64>,
    pub characteristics: Vec<CharRequest>,
    /// First collision time of the closed form, when there is one.
    pub t_break: Option<f64>,
}

fn schema(field: &str, reason: impl Into<String>) -> Error {
    Error::Schema {
        field: field.into(),
        reason: reason.into(),
    }
}

fn number(v: &toml::Value, field: &str) -> Result<f64> {
    match v {
        toml::Value::Float(x) => Ok(*x),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(schema(field, "expected a number")),
    }
}

fn pair_table(v: &toml::Value, field: &str) -> Result<ClosedFormPair> {
    let t = v.as_table().ok_or_else(|| schema(field, "expected a table {p0, q0}"))?;
    if let Some(k) = t.keys().find(|k| *k != "p0" && *k != "q0") {
        return Err(schema(&format!("{field}.{k}"), "unknown field"));
    }
    let get = |k: &str| {
        let name = format!("{field}.{k}");
        t.get(k).ok_or_else(|| schema(&name, "missing")).and_then(|v| number(v, &name))
    };
    ClosedFormPair::new(get("p0")?, get("q0")?).map_err(|e| schema(field, e.to_string()))
}

fn parse_initial(v: &toml::Value) -> Result<InitialData> {
    match v {
        toml::Value::Array(items) => {
            let mut q = Vec::with_capacity(items.len());
            let mut p = Vec::with_capacity(items.len());
            for (i, item) in items.iter().enumerate() {
                let field = format!("initial[{i}]");
                let pair = item.as_array().filter(|a| a.len() == 2).ok_or_else(|| schema(&field, "expected [p, q]"))?;
                p.push(number(&pair[0], &field)?);
                q.push(number(&pair[1], &field)?);
            }
            if q.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(schema("initial", "positions q must be strictly increasing"));
            }
            if let Some(gap) = q.windows(2).map(|w| w[1] - w[0]).find(|g| *g < DEFAULT_EPS_GAP) {
                return Err(schema("initial", format!("peakons closer than {DEFAULT_EPS_GAP:e} (gap {gap:e})")));
            }
            PeakonState::new(0.0, q, p)
                .map(InitialData::Peakons)
                .map_err(|e| schema("initial", e.to_string()))
        }
        toml::Value::Table(t) => {
            if t.len() != 1 {
                return Err(schema("initial", "expected exactly one of closed_form, pair_creation"));
            }
            let (k, v) = t.iter().next().expect("one entry");
            match k.as_str() {
                "closed_form" => pair_table(v, "initial.closed_form").map(InitialData::ClosedForm),
                "pair_creation" => pair_table(v, "initial.pair_creation").map(InitialData::PairCreation),
                other => Err(schema(&format!("initial.{other}"), "unknown initial data kind")),
            }
        }
        _ => Err(schema("initial", "expected a list of [p, q] pairs or a table")),
    }
}

fn decreasing_positive(v: &[f64], field: &str, min_len: usize) -> Result<()> {
    if v.len() < min_len {
        return Err(schema(field, format!("need at least {min_len} entries")));
    }
    if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) || v.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(schema(field, "entries must be positive and strictly decreasing"));
    }
    Ok(())
}

// Pulls the field name out of serde messages such as "unknown field `foo`".
fn toml_error(e: toml::de::Error) -> Error {
    let msg = e.message().to_string();
    let field = msg
        .split('`')
        .nth(1)
        .filter(|_| msg.contains("field"))
        .unwrap_or("<document>")
        .to_string();
    Error::Schema { field, reason: msg }
}

/// Parse and validate a scenario document.
pub fn parse_scenario(document: &str) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(document).map_err(toml_error)?;
    if raw.name.trim().is_empty() {
        return Err(schema("name", "must not be empty"));
    }
    if !(raw.t_end > 0.0 && raw.t_end.is_finite()) {
        return Err(schema("t_end", format!("must be positive, got {}", raw.t_end)));
    }
    let ode_tol = raw.ode_tol.unwrap_or(DEFAULT_ODE_TOL);
    if !(ode_tol > 0.0 && ode_tol <= 1e-2) {
        return Err(schema("ode_tol", format!("must lie in (0, 1e-2], got {ode_tol}")));
    }
    let initial = parse_initial(&raw.initial)?;
    let t_break = initial.closed_form().map(|p| match initial {
        InitialData::PairCreation(_) => 0.0,
        _ => p.t_break,
    });
    let policy = match (&initial, raw.policy) {
        (InitialData::PairCreation(_), None | Some(ProlongationPolicy::ConservativeReflection)) => {
            ProlongationPolicy::ConservativeReflection
        }
        (InitialData::PairCreation(_), Some(p)) => {
            return Err(Error::UnsupportedPolicy {
                policy: p.name().into(),
                reason: "pair creation is defined by the reflected closed form".into(),
            })
        }
        (_, Some(p)) => p,
        (_, None) => ProlongationPolicy::DissipativeMerge {
            eps_gap: DEFAULT_EPS_GAP,
        },
    };
    if let ProlongationPolicy::DissipativeMerge { eps_gap } = policy {
        if !(eps_gap > 0.0) {
            return Err(schema("policy.eps_gap", "must be positive"));
        }
    }
    let mut t0_list = Vec::with_capacity(raw.t0_list.len());
    for (i, t) in raw.t0_list.iter().enumerate() {
        let field = format!("t0_list[{i}]");
        let v = match t {
            TimeSpec::At(x) => *x,
            TimeSpec::Symbol(s) if s == "T" => t_break.ok_or_else(|| schema(&field, "`T` needs closed-form data"))?,
            TimeSpec::Symbol(s) => return Err(schema(&field, format!("expected a number or \"T\", got {s:?}"))),
        };
        if !(0.0..=raw.t_end).contains(&v) {
            return Err(schema(&field, format!("{v} outside [0, t_end]")));
        }
        t0_list.push(v);
    }
    let b_list = raw
        .b_list
        .iter()
        .enumerate()
        .map(|(i, s)| SetSpec::parse(s).map_err(|e| schema(&format!("B_list[{i}]"), e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let delta_seq = raw.delta_seq.unwrap_or_else(default_deltas);
    decreasing_positive(&delta_seq, "delta_seq", 3)?;
    let t_seq = raw.t_seq.unwrap_or_else(default_gaps);
    decreasing_positive(&t_seq, "t_seq", 3)?;
    for (i, c) in raw.characteristics.iter().enumerate() {
        if ![c.zeta0, c.t0, c.t1].iter().all(|v| v.is_finite()) || c.t0 == c.t1 {
            return Err(schema(&format!("characteristics[{i}]"), "need finite zeta0 and t0 != t1"));
        }
    }
    Ok(Scenario {
        name: raw.name,
        initial,
        policy,
        t_end: raw.t_end,
        ode_tol,
        t0_list,
        b_list,
        output_dir: raw.output_dir,
        delta_seq,
        t_seq,
        characteristics: raw.characteristics,
        t_break,
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

impl Scenario {
    pub fn integrate_options(&self) -> IntegrateOptions {
        let mut o = IntegrateOptions::with_tol(self.ode_tol);
        if let ProlongationPolicy::DissipativeMerge { eps_gap } = self.policy {
            o.eps_gap = eps_gap;
        }
        o
    }

    pub fn measure_options(&self) -> MeasureOptions {
        let mut m = MeasureOptions {
            gaps: self.t_seq.clone(),
            ..Default::default()
        };
        m.extremal.deltas = self.delta_seq.clone();
        m
    }

    /// The pair-creation scenario built on `pair`.
    pub fn pair_creation(pair: ClosedFormPair, t_end: f64) -> Self {
        Self {
            name: "pair-creation".into(),
            initial: InitialData::PairCreation(pair),
            policy: ProlongationPolicy::ConservativeReflection,
            t_end,
            ode_tol: DEFAULT_ODE_TOL,
            t0_list: vec![0.0],
            b_list: vec![SetSpec::closed(-1.0, 1.0)],
            output_dir: None,
            delta_seq: default_deltas(),
            t_seq: default_gaps(),
            characteristics: Vec::new(),
            t_break: Some(0.0),
        }
    }
}

/// Scenario whose evolution is the reflected closed form of `pair`, started
/// from `u ≡ 0`.
pub fn pair_creation_scenario(pair: ClosedFormPair) -> Scenario {
    Scenario::pair_creation(pair, pair.t_break)
}
