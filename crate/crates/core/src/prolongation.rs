//! Continuation of peakon solutions past collisions and the bookkeeping of
//! the energy that is lost or restored there.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::characteristics::SetSpec;
use crate::error::{Error, Result};
use crate::extrapolate::limit_linear;
use crate::field::{energy_total, eval_ux, Field};
use crate::measures::{mu_plus, MeasureEstimate, MeasureOptions, Method};
use crate::peakon::{integrate_dense, ClosedFormPair, IntegrateOptions, Integration, PeakonState, DEFAULT_EPS_GAP};
use crate::solution::{Continuation, OdeTrajectory, PairSolution, Segment, Solution};

fn default_merge_gap() -> f64 {
    DEFAULT_EPS_GAP
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProlongationPolicy {
    /// `u(t) = -u(2T - t)`; antisymmetric pairs only.
    ConservativeReflection,
    /// `u ≡ 0` after the collision; antisymmetric pairs only.
    DissipativeZero,
    /// Colliding peakons are replaced by one peakon carrying their summed
    /// momentum at the midpoint of the cluster.
    DissipativeMerge {
        #[serde(default = "default_merge_gap")]
        eps_gap: f64,
    },
}

impl ProlongationPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ConservativeReflection => "conservative_reflection",
            Self::DissipativeZero => "dissipative_zero",
            Self::DissipativeMerge { .. } => "dissipative_merge",
        }
    }

    pub fn is_dissipative(&self) -> bool {
        !matches!(self, Self::ConservativeReflection)
    }
}

/// A solution produced by [`prolong`].
#[derive(Debug, Clone)]
pub enum Trajectory {
    Pair(PairSolution),
    Ode(OdeTrajectory),
}

impl Solution for Trajectory {
    fn state_at(&self, t: f64) -> Result<PeakonState> {
        match self {
            Self::Pair(s) => s.state_at(t),
            Self::Ode(s) => s.state_at(t),
        }
    }
    fn breaking_times(&self) -> Vec<f64> {
        match self {
            Self::Pair(s) => s.breaking_times(),
            Self::Ode(s) => s.breaking_times(),
        }
    }
    fn time_span(&self) -> (f64, f64) {
        match self {
            Self::Pair(s) => s.time_span(),
            Self::Ode(s) => s.time_span(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyJump {
    /// Time at which the policy acted.
    pub t: f64,
    /// Collision time from the closed form, when one exists.
    pub t_analytic: Option<f64>,
    /// Collision time detected by the integrator.
    pub t_detected: Option<f64>,
    pub e_before: f64,
    pub e_after: f64,
    pub delta_e: f64,
}

/// `E(t) = ½∫(u² + u_x²)` on a time grid plus the jumps at policy events.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub t_samples: Vec<f64>,
    pub energy: Vec<f64>,
    pub jumps: Vec<EnergyJump>,
}

/// `½∫(u² + u_x²)` of a state.
pub fn ledger_energy(state: &PeakonState) -> f64 {
    0.5 * energy_total(state)
}

impl EnergyLedger {
    pub fn sample(source: &dyn Solution, times: &[f64]) -> Result<Self> {
        let energy = times
            .iter()
            .map(|&t| source.state_at(t).map(|s| ledger_energy(&s)))
            .collect::<Result<_>>()?;
        Ok(Self {
            t_samples: times.to_vec(),
            energy,
            jumps: Vec::new(),
        })
    }

    pub fn initial(&self) -> f64 {
        self.energy.first().copied().unwrap_or(0.0)
    }

    /// `max_t E(t) - E(0)`.
    pub fn max_excess(&self) -> f64 {
        self.energy.iter().map(|e| e - self.initial()).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Rows `t,E,event,dE` in time order; event rows carry the jump.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,E,event,dE")?;
        let mut jumps = self.jumps.iter().peekable();
        for (t, e) in self.t_samples.iter().zip(&self.energy) {
            while let Some(j) = jumps.next_if(|j| j.t < *t) {
                writeln!(w, "{:?},{:?},1,{:?}", j.t, j.e_after, j.delta_e)?;
            }
            writeln!(w, "{t:?},{e:?},0,0.0")?;
        }
        for j in jumps {
            writeln!(w, "{:?},{:?},1,{:?}", j.t, j.e_after, j.delta_e)?;
        }
        Ok(())
    }
}

/// Maximum of `u_x(t, x) · min(t, 1)` over a regular grid of `(0, t_end] × [x_lo, x_hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OleinikReport {
    pub constant: f64,
    pub n_t: usize,
    pub n_x: usize,
    pub t_range: (f64, f64),
    pub x_range: (f64, f64),
}

pub fn oleinik_constant(source: &dyn Solution, t_start: f64, t_end: f64, n_t: usize, n_x: usize) -> Result<OleinikReport> {
    let times: Vec<f64> = (1..=n_t).map(|k| t_start + (t_end - t_start) * k as f64 / n_t as f64).collect();
    let states: Vec<PeakonState> = times.iter().map(|&t| source.state_at(t)).collect::<Result<_>>()?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in &states {
        for &q in &s.q {
            lo = lo.min(q);
            hi = hi.max(q);
        }
    }
    if lo > hi {
        (lo, hi) = (0.0, 0.0);
    }
    let (lo, hi) = (lo - 3.0, hi + 3.0);
    let mut constant = f64::NEG_INFINITY;
    for (t, s) in times.iter().zip(&states) {
        let w = (t - t_start).min(1.0);
        for k in 0..n_x {
            let x = lo + (hi - lo) * k as f64 / (n_x - 1) as f64;
            constant = constant.max(eval_ux(s, x) * w);
        }
    }
    Ok(OleinikReport {
        constant,
        n_t,
        n_x,
        t_range: (t_start, t_end),
        x_range: (lo, hi),
    })
}

#[derive(Debug, Clone)]
pub struct Prolongation {
    pub policy: ProlongationPolicy,
    pub trajectory: Trajectory,
    pub ledger: EnergyLedger,
    /// Present for dissipative policies.
    pub oleinik: Option<OleinikReport>,
}

/// Replace every cluster of peakons closer than `eps_gap` by one peakon at
/// the cluster midpoint carrying the summed momentum. Peakons whose merged
/// momentum vanishes are dropped.
pub fn merge_clusters(state: &PeakonState, eps_gap: f64) -> PeakonState {
    let mut q = Vec::new();
    let mut p = Vec::new();
    let mut i = 0;
    while i < state.len() {
        let mut j = i;
        while j + 1 < state.len() && state.q[j + 1] - state.q[j] < eps_gap {
            j += 1;
        }
        let m: f64 = state.p[i..=j].iter().sum();
        if m != 0.0 {
            q.push(0.5 * (state.q[i] + state.q[j]));
            p.push(m);
        }
        i = j + 1;
    }
    PeakonState { t: state.t, q, p }
}

fn sample_grid(t_start: f64, t_end: f64, n: usize, avoid: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|k| t_start + (t_end - t_start) * k as f64 / (n - 1) as f64)
        .filter(|t| !avoid.contains(t))
        .collect()
}

const LEDGER_SAMPLES: usize = 401;
const OLEINIK_GRID: usize = 200;

fn detected_break(state: &PeakonState, t_end: f64, opts: &IntegrateOptions) -> Result<Option<f64>> {
    match integrate_dense(state, t_end, opts)?.outcome {
        Integration::Breaking(ev) => Ok(Some(ev.t_break)),
        Integration::Reached(_) => Ok(None),
    }
}

/// Evolve `initial` to `t_end`, applying `policy` at every collision.
pub fn prolong(initial: &PeakonState, policy: ProlongationPolicy, t_end: f64, opts: &IntegrateOptions) -> Result<Prolongation> {
    if !(t_end > initial.t) {
        return Err(Error::InvalidArgument(format!("t_end {t_end} must exceed {}", initial.t)));
    }
    let t_start = initial.t;
    let (trajectory, jumps) = match policy {
        ProlongationPolicy::ConservativeReflection | ProlongationPolicy::DissipativeZero => {
            let pair = initial.as_antisymmetric_pair().ok_or_else(|| Error::UnsupportedPolicy {
                policy: policy.name().into(),
                reason: "needs antisymmetric two-peakon data q = [-a, a], p = [c, -c], c > 0".into(),
            })?;
            let cont = match policy {
                ProlongationPolicy::ConservativeReflection => Continuation::Conservative,
                _ => Continuation::Dissipative,
            };
            let sol = PairSolution {
                pair,
                continuation: cont,
                offset: t_start,
                t_start,
            };
            let tb = sol.collision_time();
            let mut jumps = Vec::new();
            if tb <= t_end {
                let e0 = ledger_energy(initial);
                let e_after = match cont {
                    Continuation::Conservative => e0,
                    Continuation::Dissipative => 0.0,
                };
                jumps.push(EnergyJump {
                    t: tb,
                    t_analytic: Some(tb),
                    t_detected: detected_break(initial, t_end, opts)?,
                    e_before: e0,
                    e_after,
                    delta_e: e_after - e0,
                });
            }
            (Trajectory::Pair(sol), jumps)
        }
        ProlongationPolicy::DissipativeMerge { eps_gap } => {
            let opts = IntegrateOptions { eps_gap, ..*opts };
            let analytic = initial.as_antisymmetric_pair().map(|p| t_start + p.t_break);
            let mut segments = Vec::new();
            let mut events = Vec::new();
            let mut jumps = Vec::new();
            let mut state = initial.clone();
            loop {
                let run = integrate_dense(&state, t_end, &opts)?;
                let seg_start = state.clone();
                match run.outcome {
                    Integration::Reached(s) => {
                        segments.push(Segment {
                            t_start: seg_start.t,
                            t_end: s.t,
                            n: run.n,
                            start: seg_start,
                            dense: run.dense,
                        });
                        break;
                    }
                    Integration::Breaking(ev) => {
                        let t = ev.t_break;
                        if t > seg_start.t {
                            segments.push(Segment {
                                t_start: seg_start.t,
                                t_end: t,
                                n: run.n,
                                start: seg_start,
                                dense: run.dense,
                            });
                        }
                        let merged = merge_clusters(&ev.state, eps_gap);
                        let (e_before, e_after) = (ledger_energy(&ev.state), ledger_energy(&merged));
                        jumps.push(EnergyJump {
                            t,
                            t_analytic: if events.is_empty() { analytic } else { None },
                            t_detected: Some(t),
                            e_before,
                            e_after,
                            delta_e: e_after - e_before,
                        });
                        events.push(t);
                        state = merged;
                        if state.is_empty() || t >= t_end {
                            segments.push(Segment {
                                t_start: t,
                                t_end: t_end.max(t),
                                n: 0,
                                start: state.clone(),
                                dense: Default::default(),
                            });
                            break;
                        }
                    }
                }
            }
            (Trajectory::Ode(OdeTrajectory { segments, events }), jumps)
        }
    };
    let avoid: Vec<f64> = jumps.iter().map(|j| j.t).collect();
    let mut ledger = EnergyLedger::sample(&trajectory, &sample_grid(t_start, t_end, LEDGER_SAMPLES, &avoid))?;
    ledger.jumps = jumps;
    let oleinik = if policy.is_dissipative() {
        Some(oleinik_constant(&trajectory, t_start, t_end, OLEINIK_GRID, OLEINIK_GRID)?)
    } else {
        None
    };
    Ok(Prolongation {
        policy,
        trajectory,
        ledger,
        oleinik,
    })
}

/// The pair-creation solution `w(t) = u(t + T)` on `[0, t_end]`: zero data
/// whose energy jumps to the full pair energy at `t = 0`.
pub fn pair_creation(pair: &ClosedFormPair, t_end: f64) -> Result<Prolongation> {
    if !(t_end > 0.0) {
        return Err(Error::InvalidArgument(format!("t_end {t_end} must be positive")));
    }
    let trajectory = Trajectory::Pair(PairSolution::creation(*pair));
    let mut ledger = EnergyLedger::sample(&trajectory, &sample_grid(0.0, t_end, LEDGER_SAMPLES, &[]))?;
    let e = ledger_energy(&pair.initial_state());
    ledger.jumps.push(EnergyJump {
        t: 0.0,
        t_analytic: Some(0.0),
        t_detected: None,
        e_before: 0.0,
        e_after: e,
        delta_e: e,
    });
    Ok(Prolongation {
        policy: ProlongationPolicy::ConservativeReflection,
        trajectory,
        ledger,
        oleinik: None,
    })
}

/// `e^{H0 T} + 1`, the bound on `t |w_x|` for the pair-creation solution.
pub fn creation_bound(pair: &ClosedFormPair) -> f64 {
    (pair.h0 * pair.t_break).exp() + 1.0
}

/// `max t · sup_x |w_x(t, x)|` over `n_t` times in `(0, t_max]`.
pub fn creation_slope_constant(pair: &ClosedFormPair, t_max: f64, n_t: usize) -> Result<f64> {
    let w = PairSolution::creation(*pair);
    let mut c = 0.0f64;
    for k in 1..=n_t {
        let t = t_max * k as f64 / n_t as f64;
        let (lo, hi) = Field::new(&w.state_at(t)?).slope_range();
        c = c.max(t * lo.abs().max(hi.abs()));
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonVerdict {
    Strict,
    Inconclusive,
    Violated,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipationComparison {
    pub t0: f64,
    pub mu_plus: MeasureEstimate,
    /// Lower estimate of `liminf_{t -> t0⁺} E(u(t))`.
    pub liminf_accreting: f64,
    /// Upper estimate of `limsup_{t -> t0⁺} E(ū(t))`.
    pub limsup_alternative: f64,
    pub margin: f64,
    pub required_margin: f64,
    pub error: f64,
    pub verdict: ComparisonVerdict,
}

fn right_limit_energy(source: &dyn Solution, t0: f64, gaps: &[f64]) -> Result<(f64, f64)> {
    let e: Vec<f64> = gaps
        .iter()
        .map(|g| source.state_at(t0 + g).map(|s| ledger_energy(&s)))
        .collect::<Result<_>>()?;
    let lim = limit_linear(gaps, &e);
    Ok((lim.value, lim.error))
}

/// Compare the right-limits of the energy of an accreting solution and of a
/// dissipative alternative with the same data at `t0`. The strict gap is
/// required to be at least `μ⁺(t0, B) / 4`.
pub fn max_dissipation_compare(
    accreting: &dyn Solution,
    alternative: &dyn Solution,
    t0: f64,
    set: &SetSpec,
    opts: &MeasureOptions,
) -> Result<DissipationComparison> {
    let mu = mu_plus(accreting, t0, set, Method::Pushforward, opts)?;
    let mut limit = opts.gaps[0];
    for s in [accreting, alternative] {
        if let Some(tb) = s.next_breaking_after(t0) {
            limit = limit.min(0.5 * (tb - t0));
        }
    }
    let gaps: Vec<f64> = opts.gaps.iter().map(|g| g * limit / opts.gaps[0]).collect();
    let (ea, erra) = right_limit_energy(accreting, t0, &gaps)?;
    let (eb, errb) = right_limit_energy(alternative, t0, &gaps)?;
    let liminf_accreting = ea - erra;
    let limsup_alternative = eb + errb;
    let margin = liminf_accreting - limsup_alternative;
    let required_margin = mu.value / 4.0;
    let error = erra + errb + mu.extrapolation_error;
    let verdict = if mu.vanishing {
        ComparisonVerdict::NotApplicable
    } else if margin >= required_margin + mu.extrapolation_error / 4.0 {
        ComparisonVerdict::Strict
    } else if margin + error >= required_margin {
        ComparisonVerdict::Inconclusive
    } else {
        ComparisonVerdict::Violated
    };
    Ok(DissipationComparison {
        t0,
        mu_plus: mu,
        liminf_accreting,
        limsup_alternative,
        margin,
        required_margin,
        error,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{eval_u, Density};
    use crate::solution::ZeroSolution;

    fn r0() -> ClosedFormPair {
        ClosedFormPair::new(1.0, 0.75f64.ln()).unwrap()
    }

    fn opts() -> IntegrateOptions {
        IntegrateOptions::with_tol(1e-10)
    }

    #[test]
    fn conservative_reflection_mirror_and_energy() {
        let pair = r0();
        let tb = pair.t_break;
        let pr = prolong(&pair.initial_state(), ProlongationPolicy::ConservativeReflection, 2.0 * tb, &opts()).unwrap();
        for s in [0.05, 0.4, 1.1, 2.0] {
            let a = pr.trajectory.state_at(tb + s).unwrap();
            let b = pr.trajectory.state_at(tb - s).unwrap();
            for x in [-3.0, -0.2, 0.0, 0.01, 1.5] {
                assert!((eval_u(&a, x) + eval_u(&b, x)).abs() < 1e-8);
            }
        }
        let l = &pr.ledger;
        let e0 = l.initial();
        assert!((l.energy.last().unwrap() - e0).abs() < 1e-6);
        assert!(l.energy.iter().all(|e| (e - e0).abs() < 1e-6));
        assert_eq!(l.jumps.len(), 1);
        assert_eq!(l.jumps[0].delta_e, 0.0);
        let det = l.jumps[0].t_detected.unwrap();
        assert!((det - tb).abs() < 1e-3, "{det} vs {tb}");
        assert!(pr.oleinik.is_none());
    }

    #[test]
    fn dissipative_zero_loses_all_energy() {
        let pair = r0();
        let tb = pair.t_break;
        let pr = prolong(&pair.initial_state(), ProlongationPolicy::DissipativeZero, 2.0 * tb, &opts()).unwrap();
        assert!(pr.trajectory.state_at(tb + 0.1).unwrap().is_empty());
        let j = &pr.ledger.jumps[0];
        assert!((j.delta_e + ledger_energy(&pair.initial_state())).abs() < 1e-15);
        assert!(pr.ledger.max_excess() <= 1e-6);
        assert!(pr.oleinik.as_ref().unwrap().constant.is_finite());
    }

    #[test]
    fn merge_matches_zero_for_antisymmetric_pair() {
        let pair = r0();
        let tb = pair.t_break;
        let init = pair.initial_state();
        let merge = prolong(&init, ProlongationPolicy::DissipativeMerge { eps_gap: 1e-8 }, 2.0 * tb, &opts()).unwrap();
        let zero = prolong(&init, ProlongationPolicy::DissipativeZero, 2.0 * tb, &opts()).unwrap();
        for k in 0..=40 {
            let t = 2.0 * tb * k as f64 / 40.0;
            if (t - tb).abs() < 0.05 {
                continue;
            }
            let a = merge.trajectory.state_at(t).unwrap();
            let b = zero.trajectory.state_at(t).unwrap();
            for x in [-2.0, -0.3, 0.0, 0.4, 2.5] {
                assert!((eval_u(&a, x) - eval_u(&b, x)).abs() < 1e-6, "t={t} x={x}");
            }
        }
        assert!(merge.trajectory.state_at(tb + 0.1).unwrap().is_empty());
        let j = &merge.ledger.jumps[0];
        assert!((j.t - tb).abs() < 1e-3);
        assert_eq!(j.t_analytic, Some(tb));
        assert!(j.delta_e < 0.0);
    }

    #[test]
    fn merge_of_overtaking_peakons_keeps_momentum() {
        // a fast peakon catching a slower one of opposite sign
        let init = PeakonState::new(0.0, vec![-2.0, 0.0, 3.0], vec![2.0, -0.5, 0.3]).unwrap();
        let pr = prolong(&init, ProlongationPolicy::DissipativeMerge { eps_gap: 1e-8 }, 6.0, &opts()).unwrap();
        let total0: f64 = init.p.iter().sum();
        let ev = pr.trajectory.breaking_times();
        assert!(!ev.is_empty());
        let after = pr.trajectory.state_at(ev[0] + 1e-3).unwrap();
        assert!(after.len() < 3);
        let total1: f64 = after.p.iter().sum();
        assert!((total0 - total1).abs() < 1e-6);
        let e0 = pr.ledger.initial();
        assert!(pr.ledger.energy.iter().all(|e| *e <= e0 + 1e-6));
        assert!(pr.ledger.jumps.iter().all(|j| j.delta_e <= 0.0));
    }

    #[test]
    fn reflection_rejects_general_data() {
        let init = PeakonState::new(0.0, vec![-1.0, 0.5], vec![1.0, -0.3]).unwrap();
        for pol in [ProlongationPolicy::ConservativeReflection, ProlongationPolicy::DissipativeZero] {
            assert!(matches!(prolong(&init, pol, 1.0, &opts()), Err(Error::UnsupportedPolicy { .. })));
        }
    }

    #[test]
    fn merge_clusters_rules() {
        let s = PeakonState {
            t: 1.0,
            q: vec![0.0, 1e-9, 2e-9, 1.0],
            p: vec![1.0, 2.0, -0.5, 0.7],
        };
        let m = merge_clusters(&s, 1e-8);
        assert_eq!(m.p, vec![2.5, 0.7]);
        assert_eq!(m.q, vec![1e-9, 1.0]);
        let z = merge_clusters(&PeakonState { t: 0.0, q: vec![0.0, 1e-9], p: vec![1.0, -1.0] }, 1e-8);
        assert!(z.is_empty());
    }

    #[test]
    fn ledger_matches_quadrature() {
        let pair = r0();
        let pr = prolong(&pair.initial_state(), ProlongationPolicy::DissipativeZero, 1.5 * pair.t_break, &opts()).unwrap();
        for (t, e) in pr.ledger.t_samples.iter().zip(&pr.ledger.energy) {
            let s = pr.trajectory.state_at(*t).unwrap();
            let q = 0.5 * Field::new(&s).integrate(Density::Energy, f64::NEG_INFINITY, f64::INFINITY);
            assert!((q - e).abs() < 1e-9, "t={t}");
        }
        let mut buf = Vec::new();
        pr.ledger.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,E,event,dE\n"));
        assert_eq!(text.lines().filter(|l| l.split(',').nth(2) == Some("1")).count(), 1);
    }

    #[test]
    fn creation_bound_holds() {
        let pair = r0();
        assert!((creation_bound(&pair) - 4.0).abs() < 1e-12);
        let c = creation_slope_constant(&pair, 1.0, 200).unwrap();
        assert!(c <= 4.0, "{c}");
        assert!(PairSolution::creation(pair).state_at(0.0).unwrap().is_empty());
    }

    #[test]
    fn comparison_verdicts() {
        let pair = r0();
        let opts = MeasureOptions::default();
        let set = SetSpec::closed(-1.0, 1.0);
        let w = PairSolution::creation(pair);
        let c = max_dissipation_compare(&w, &ZeroSolution, 0.0, &set, &opts).unwrap();
        assert_eq!(c.verdict, ComparisonVerdict::Strict, "{c:?}");
        assert!(c.margin >= c.required_margin);
        let d = PairSolution::new(pair, Continuation::Dissipative);
        let n = max_dissipation_compare(&d, &ZeroSolution, pair.t_break, &set, &opts).unwrap();
        assert_eq!(n.verdict, ComparisonVerdict::NotApplicable);
    }
}
