//! Running a scenario: trajectory, energy ledger, characteristics and
//! measures, written as flat CSV/JSON files plus a report of checks.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{InitialData, Scenario};
use crate::characteristics::{extremal_char, integrate_char, CharPath, ExtremalOptions, Flavor, Side};
use crate::error::Result;
use crate::field::{Density, Field};
use crate::measures::{mu_minus, mu_plus, MeasureEstimate, Method, Sign};
use crate::peakon::{integrate_dense, Integration};
use crate::prolongation::{ledger_energy, pair_creation, prolong, Prolongation, ProlongationPolicy};
use crate::solution::Solution;

/// One measured quantity with its acceptance bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub quantity: String,
    pub expected: String,
    pub observed: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Measurement {
    /// Passes when `observed <= bound`.
    pub fn at_most(quantity: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self {
            quantity: quantity.into(),
            expected: format!("<= {bound:e}"),
            observed,
            tolerance: bound,
            passed: observed <= bound,
        }
    }

    /// Passes when `observed >= bound`.
    pub fn at_least(quantity: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self {
            quantity: quantity.into(),
            expected: format!(">= {bound:e}"),
            observed,
            tolerance: bound,
            passed: observed >= bound,
        }
    }

    /// Passes when `|observed - target| <= tol`.
    pub fn near(quantity: impl Into<String>, observed: f64, target: f64, tol: f64) -> Self {
        Self {
            quantity: quantity.into(),
            expected: format!("{target:?}"),
            observed,
            tolerance: tol,
            passed: (observed - target).abs() <= tol,
        }
    }

    /// A value reported for the record; passes when finite.
    pub fn recorded(quantity: impl Into<String>, observed: f64) -> Self {
        Self {
            quantity: quantity.into(),
            expected: "finite".into(),
            observed,
            tolerance: f64::INFINITY,
            passed: observed.is_finite(),
        }
    }

    pub fn failed(quantity: impl Into<String>, error: impl std::fmt::Display) -> Self {
        Self {
            quantity: quantity.into(),
            expected: format!("no error ({error})"),
            observed: f64::NAN,
            tolerance: f64::NAN,
            passed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    pub claim: String,
    pub measurements: Vec<Measurement>,
    pub passed: bool,
}

impl Check {
    pub fn new(id: impl Into<String>, claim: impl Into<String>, measurements: Vec<Measurement>) -> Self {
        let passed = !measurements.is_empty() && measurements.iter().all(|m| m.passed);
        Self {
            id: id.into(),
            claim: claim.into(),
            measurements,
            passed,
        }
    }

    /// A check whose computation failed before anything could be measured.
    pub fn errored(id: impl Into<String>, claim: impl Into<String>, error: impl std::fmt::Display) -> Self {
        Self::new(id, claim, vec![Measurement::failed("computation", error)])
    }
}

/// Outcome of a run or a verification suite. Wall-clock timings are kept
/// out of it so that repeated runs serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub passed: bool,
}

impl RunReport {
    pub fn new(scenario: impl Into<String>, checks: Vec<Check>, notes: Vec<String>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        Self {
            scenario: scenario.into(),
            checks,
            notes,
            passed,
        }
    }

    pub fn failing(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.id.as_str()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// claim / expected / observed / tolerance / verdict, one row per
    /// measurement.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.scenario);
        let _ = writeln!(
            out,
            "{:<28} {:<44} {:<22} {:>24} {:>12}  verdict",
            "check", "quantity", "expected", "observed", "tolerance"
        );
        for c in &self.checks {
            for m in &c.measurements {
                let _ = writeln!(
                    out,
                    "{:<28} {:<44} {:<22} {:>24} {:>12}  {}",
                    c.id,
                    m.quantity,
                    m.expected,
                    format!("{:?}", m.observed),
                    format!("{:e}", m.tolerance),
                    if m.passed { "PASS" } else { "FAIL" }
                );
            }
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        let _ = writeln!(
            out,
            "{} checks, {} failed",
            self.checks.len(),
            self.checks.iter().filter(|c| !c.passed).count()
        );
        out
    }
}

/// Measure record as written to `measures.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasureRecord {
    Estimate(MeasureEstimate),
    Failed {
        t0: f64,
        #[serde(rename = "B")]
        set: String,
        sign: Sign,
        method: Method,
        error: String,
    },
}

pub struct RunOutput {
    pub report: RunReport,
    pub prolongation: Option<Prolongation>,
    pub measures: Vec<MeasureRecord>,
    pub characteristics: Vec<std::result::Result<CharPath, String>>,
}

/// Trajectory CSV: `t, q_0..q_{N-1}, p_0..p_{N-1}` with N the largest
/// peakon count; rows with fewer peakons leave the missing fields empty.
pub fn write_trajectory_csv<W: Write>(mut w: W, source: &dyn Solution, times: &[f64]) -> Result<()> {
    let states = times.iter().map(|&t| source.state_at(t)).collect::<Result<Vec<_>>>()?;
    let n = states.iter().map(|s| s.len()).max().unwrap_or(0);
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("q_{i}")));
    header.extend((0..n).map(|i| format!("p_{i}")));
    writeln!(w, "{}", header.join(","))?;
    for s in &states {
        let mut row = vec![format!("{:?}", s.t)];
        for v in [&s.q, &s.p] {
            row.extend((0..n).map(|i| v.get(i).map(|x| format!("{x:?}")).unwrap_or_default()));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// The trajectory and energy ledger of a scenario.
pub fn build(scenario: &Scenario) -> Result<Prolongation> {
    match &scenario.initial {
        InitialData::PairCreation(pair) => pair_creation(pair, scenario.t_end),
        init => prolong(&init.state(), scenario.policy, scenario.t_end, &scenario.integrate_options()),
    }
}

fn char_path(source: &dyn Solution, scenario: &Scenario, i: usize) -> Result<CharPath> {
    let req = &scenario.characteristics[i];
    let ext = ExtremalOptions {
        deltas: scenario.delta_seq.clone(),
        ..Default::default()
    };
    match req.flavor {
        Flavor::Leftmost | Flavor::LeftmostBackward => {
            extremal_char(source, req.t0, req.zeta0, req.t1, Side::Left, &ext).map(|e| e.path)
        }
        Flavor::Rightmost | Flavor::RightmostBackward => {
            extremal_char(source, req.t0, req.zeta0, req.t1, Side::Right, &ext).map(|e| e.path)
        }
        _ => integrate_char(source, req.t0, req.zeta0, req.t1, &ext.chars),
    }
}

fn ledger_checks(scenario: &Scenario, pr: &Prolongation) -> Vec<Check> {
    let mut checks = Vec::new();
    let ledger = &pr.ledger;
    let mut consistency = 0.0f64;
    for (t, e) in ledger.t_samples.iter().zip(&ledger.energy) {
        match pr.trajectory.state_at(*t) {
            Ok(s) => {
                let q = 0.5 * Field::new(&s).integrate(Density::Energy, f64::NEG_INFINITY, f64::INFINITY);
                consistency = consistency.max((q - e).abs());
            }
            Err(_) => consistency = f64::INFINITY,
        }
    }
    checks.push(Check::new(
        "ledger_consistency",
        "ledger energy equals the region-wise integral of (u^2 + u_x^2)/2",
        vec![Measurement::at_most("max |E_ledger - E_integral|", consistency, 1e-9)],
    ));
    match (&scenario.initial, pr.policy) {
        (InitialData::PairCreation(pair), _) => {
            let e = ledger_energy(&pair.initial_state());
            let dev = ledger
                .t_samples
                .iter()
                .zip(&ledger.energy)
                .filter(|(t, _)| **t > 0.0)
                .map(|(_, x)| (x - e).abs())
                .fold(0.0, f64::max);
            checks.push(Check::new(
                "energy_conservation",
                "after creation the energy equals the pair energy",
                vec![Measurement::at_most("max |E(t) - E_pair|, t > 0", dev, 1e-6)],
            ));
        }
        (_, ProlongationPolicy::ConservativeReflection) => {
            let e0 = ledger.initial();
            let dev = ledger.energy.iter().map(|x| (x - e0).abs()).fold(0.0, f64::max);
            checks.push(Check::new(
                "energy_conservation",
                "conservative reflection keeps the energy",
                vec![Measurement::at_most("max |E(t) - E(0)|", dev, 1e-6)],
            ));
        }
        _ => {
            let mut ms = vec![Measurement::at_most("max E(t) - E(0)", ledger.max_excess(), 1e-6)];
            let worst_jump = ledger.jumps.iter().map(|j| j.delta_e).fold(f64::NEG_INFINITY, f64::max);
            if worst_jump.is_finite() {
                ms.push(Measurement::at_most("largest energy jump", worst_jump, 0.0));
            }
            checks.push(Check::new(
                "weak_energy_condition",
                "dissipative continuation never gains energy",
                ms,
            ));
            if let Some(o) = &pr.oleinik {
                checks.push(Check::new(
                    "oleinik_constant",
                    "max of u_x * min(t, 1) on a 200x200 grid (recorded)",
                    vec![Measurement::recorded("empirical constant", o.constant)],
                ));
            }
        }
    }
    checks
}

fn oracle_check(scenario: &Scenario) -> Option<Check> {
    let pair = match &scenario.initial {
        InitialData::PairCreation(_) => return None,
        init => init.closed_form()?,
    };
    let t_stop = (0.9 * pair.t_break).min(scenario.t_end);
    let init = pair.initial_state();
    let res = integrate_dense(&init, t_stop, &scenario.integrate_options()).and_then(|run| {
        let n = 200;
        let mut err = 0.0f64;
        for k in 0..=n {
            let t = t_stop * k as f64 / n as f64;
            let y = if k == 0 {
                init.q.iter().chain(&init.p).copied().collect()
            } else {
                run.dense.eval(t).unwrap_or_else(|| vec![f64::NAN; 4])
            };
            let exact = pair.eval(t)?;
            for (a, b) in y.iter().zip(exact.q.iter().chain(&exact.p)) {
                err = err.max((a - b).abs());
            }
        }
        if let Integration::Breaking(ev) = run.outcome {
            err = err.max(if ev.t_break < t_stop { f64::INFINITY } else { 0.0 });
        }
        Ok(err)
    });
    let claim = "integrated pair matches the closed form on [0, 0.9T]";
    Some(match res {
        Ok(err) => Check::new(
            "closed_form_oracle",
            claim,
            vec![Measurement::at_most("sup |y_ode - y_exact|", err, 1e3 * scenario.ode_tol)],
        ),
        Err(e) => Check::errored("closed_form_oracle", claim, e),
    })
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-4 {
        (a - b).abs() / 1e-4 * 0.02
    } else {
        (a - b).abs() / scale
    }
}

fn measure_checks(records: &[MeasureRecord]) -> Vec<Check> {
    let mut ms = Vec::new();
    let find = |t0: f64, set: &str, sign: Sign, method: Method| {
        records.iter().find_map(|r| match r {
            MeasureRecord::Estimate(e) if e.t0 == t0 && e.set == set && e.sign == sign && e.method == method => Some(e),
            _ => None,
        })
    };
    for r in records {
        match r {
            MeasureRecord::Estimate(e) if e.method == Method::TestFunction => {
                if let Some(pf) = find(e.t0, &e.set, e.sign, Method::Pushforward) {
                    ms.push(Measurement::at_most(
                        format!("mu_{:?} t0={:?} B={} tf vs pf", e.sign, e.t0, e.set).to_lowercase(),
                        relative_gap(e.value, pf.value),
                        0.02,
                    ));
                }
            }
            MeasureRecord::Failed {
                t0,
                set,
                sign,
                method,
                error,
            } => ms.push(Measurement::failed(format!("{sign:?} {method:?} t0={t0:?} B={set}").to_lowercase(), error)),
            _ => {}
        }
    }
    if ms.is_empty() {
        return Vec::new();
    }
    vec![Check::new(
        "measure_agreement",
        "test-function and pushforward estimates agree (2% or 1e-4 absolute)",
        ms,
    )]
}

/// Compute everything a scenario asks for. Numerical failures after the
/// trajectory is built end up in the report.
pub fn execute(scenario: &Scenario) -> RunOutput {
    let mut checks = Vec::new();
    let pr = match build(scenario) {
        Ok(p) => p,
        Err(e) => {
            checks.push(Check::errored("trajectory", "trajectory can be built", e));
            return RunOutput {
                report: RunReport::new(&scenario.name, checks, Vec::new()),
                prolongation: None,
                measures: Vec::new(),
                characteristics: Vec::new(),
            };
        }
    };
    checks.extend(oracle_check(scenario));
    checks.extend(ledger_checks(scenario, &pr));

    let src: &dyn Solution = &pr.trajectory;
    let characteristics: Vec<_> = (0..scenario.characteristics.len())
        .map(|i| char_path(src, scenario, i).map_err(|e| e.to_string()))
        .collect();
    if !characteristics.is_empty() {
        let ms = characteristics
            .iter()
            .enumerate()
            .map(|(i, c)| match c {
                Ok(p) => Measurement::at_least(format!("characteristic {i} samples"), p.len() as f64, 1.0),
                Err(e) => Measurement::failed(format!("characteristic {i}"), e),
            })
            .collect();
        checks.push(Check::new("characteristics", "requested characteristics computed", ms));
    }

    let opts = scenario.measure_options();
    let start = src.time_span().0;
    let mut measures = Vec::new();
    for &t0 in &scenario.t0_list {
        for set in &scenario.b_list {
            for method in [Method::TestFunction, Method::Pushforward] {
                for sign in [Sign::Plus, Sign::Minus] {
                    if sign == Sign::Minus && !(t0 > start) {
                        continue;
                    }
                    let res = match sign {
                        Sign::Plus => mu_plus(src, t0, set, method, &opts),
                        Sign::Minus => mu_minus(src, t0, set, method, &opts),
                    };
                    measures.push(match res {
                        Ok(e) => MeasureRecord::Estimate(e),
                        Err(e) => MeasureRecord::Failed {
                            t0,
                            set: set.to_string(),
                            sign,
                            method,
                            error: e.to_string(),
                        },
                    });
                }
            }
        }
    }
    checks.extend(measure_checks(&measures));
    RunOutput {
        report: RunReport::new(&scenario.name, checks, Vec::new()),
        prolongation: Some(pr),
        measures,
        characteristics,
    }
}

/// Write the artifacts of a run into `dir`.
pub fn write_artifacts(out: &RunOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    if let Some(pr) = &out.prolongation {
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &pr.trajectory, &pr.ledger.t_samples)?;
        fs::write(dir.join("trajectory.csv"), buf)?;
        let mut buf = Vec::new();
        pr.ledger.write_csv(&mut buf)?;
        fs::write(dir.join("energy.csv"), buf)?;
    }
    for (i, c) in out.characteristics.iter().enumerate() {
        if let Ok(path) = c {
            let mut buf = Vec::new();
            path.write_csv(&mut buf)?;
            fs::write(dir.join(format!("char_{i}.csv")), buf)?;
        }
    }
    if !out.measures.is_empty() {
        fs::write(dir.join("measures.json"), serde_json::to_string_pretty(&out.measures)?)?;
    }
    fs::write(dir.join("report.json"), out.report.to_json())?;
    Ok(())
}

/// Execute a scenario and write its artifacts to `out_dir` (or the
/// scenario's own `output_dir`).
pub fn run(scenario: &Scenario, out_dir: Option<&Path>) -> Result<RunReport> {
    let out = execute(scenario);
    if let Some(dir) = out_dir.or(scenario.output_dir.as_deref()) {
        write_artifacts(&out, dir)?;
    }
    Ok(out.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    const R0: &str = "name = \"r0\"\nt_end = 4.5\ninitial = { closed_form = { p0 = 1.0, q0 = -0.2876820724517809 } }\n";

    #[test]
    fn single_peakon_moves_at_its_speed() {
        let s = parse_scenario("name = \"one\"\ninitial = [[1.5, 0.25]]\nt_end = 2").unwrap();
        let out = execute(&s);
        assert!(out.report.passed, "{}", out.report.table());
        let mut buf = Vec::new();
        let pr = out.prolongation.unwrap();
        write_trajectory_csv(&mut buf, &pr.trajectory, &pr.ledger.t_samples).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,q_0,p_0"));
        for l in lines {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            assert!((v[1] - (0.25 + 1.5 * v[0])).abs() < 1e-9, "{l}");
            assert_eq!(v[2], 1.5);
        }
    }

    #[test]
    fn conservative_ledger_is_flat() {
        let doc = format!("{R0}policy = {{ kind = \"conservative_reflection\" }}\n");
        let out = execute(&parse_scenario(&doc).unwrap());
        assert!(out.report.passed, "{}", out.report.table());
        let l = &out.prolongation.unwrap().ledger;
        let e0 = l.initial();
        assert!(l.energy.iter().all(|e| (e - e0).abs() < 1e-6));
    }

    #[test]
    fn dissipative_ledger_has_one_full_jump() {
        let doc = format!("{R0}policy = {{ kind = \"dissipative_zero\" }}\n");
        let out = execute(&parse_scenario(&doc).unwrap());
        assert!(out.report.passed, "{}", out.report.table());
        let l = &out.prolongation.unwrap().ledger;
        assert_eq!(l.jumps.len(), 1);
        assert!((l.jumps[0].delta_e + l.initial()).abs() < 1e-12);
    }

    #[test]
    fn artifacts_and_measures() {
        let doc = format!(
            "{R0}policy = {{ kind = \"conservative_reflection\" }}\nt0_list = [\"T\"]\nB_list = [\"[-1,1]\", \"[1,2]\"]\n\
             [[characteristics]]\nzeta0 = 0.0\nt0 = 0.0\nt1 = 1.0\n"
        );
        let s = parse_scenario(&doc).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let report = run(&s, Some(dir.path())).unwrap();
        assert!(report.passed, "{}", report.table());
        for f in ["trajectory.csv", "energy.csv", "char_0.csv", "measures.json", "report.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let recs: Vec<MeasureRecord> =
            serde_json::from_str(&fs::read_to_string(dir.path().join("measures.json")).unwrap()).unwrap();
        assert_eq!(recs.len(), 8);
        let again = tempfile::tempdir().unwrap();
        run(&s, Some(again.path())).unwrap();
        for f in ["trajectory.csv", "energy.csv", "char_0.csv", "measures.json", "report.json"] {
            assert_eq!(fs::read(dir.path().join(f)).unwrap(), fs::read(again.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn reflection_on_general_data_is_reported() {
        let s = parse_scenario(
            "name = \"g\"\ninitial = [[1, -1], [-0.3, 0.5]]\nt_end = 1\npolicy = { kind = \"conservative_reflection\" }",
        )
        .unwrap();
        let out = execute(&s);
        assert!(!out.report.passed);
        assert_eq!(out.report.failing(), vec!["trajectory"]);
    }
}
