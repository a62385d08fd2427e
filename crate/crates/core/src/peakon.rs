//! Multipeakon states, the N-peakon system and the exact antisymmetric pair.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field;
use crate::ode::{self, OdeOptions, OdeSystem, StepControl};

/// Default collision threshold on adjacent peakon gaps.
pub const DEFAULT_EPS_GAP: f64 = 1e-8;

/// Positions and momenta of N peakons at one instant.
///
/// `q` is kept sorted; momenta travel with their positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakonState {
    pub t: f64,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PeakonState {
    pub fn new(t: f64, q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::InvalidState(format!(
                "{} positions but {} momenta",
                q.len(),
                p.len()
            )));
        }
        if !t.is_finite() || q.iter().chain(&p).any(|v| !v.is_finite()) {
            return Err(Error::InvalidState("non-finite entry".into()));
        }
        let mut pairs: Vec<(f64, f64)> = q.into_iter().zip(p).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (q, p) = pairs.into_iter().unzip();
        Ok(Self { t, q, p })
    }

    pub fn zero(t: f64) -> Self {
        Self {
            t,
            q: Vec::new(),
            p: Vec::new(),
        }
    }

    pub fn single(t: f64, q: f64, p: f64) -> Self {
        Self {
            t,
            q: vec![q],
            p: vec![p],
        }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Smallest adjacent gap and the index of its left peakon.
    pub fn min_gap(&self) -> Option<(usize, f64)> {
        self.q
            .windows(2)
            .enumerate()
            .map(|(i, w)| (i, w[1] - w[0]))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Same profile with all momenta negated (used for time reversal).
    pub fn negated(&self) -> Self {
        Self {
            t: self.t,
            q: self.q.clone(),
            p: self.p.iter().map(|p| -p).collect(),
        }
    }

    /// Data of the form q = [-a, a], p = [c, -c] with c > 0 and a > 0.
    pub fn as_antisymmetric_pair(&self) -> Option<ClosedFormPair> {
        if self.len() != 2 {
            return None;
        }
        let (q, p) = (&self.q, &self.p);
        let sym = (q[0] + q[1]).abs() <= 1e-12 * q[1].abs().max(1.0)
            && (p[0] + p[1]).abs() <= 1e-12 * p[0].abs().max(1.0);
        if !sym || p[0] <= 0.0 || q[1] <= q[0] {
            return None;
        }
        ClosedFormPair::new(2.0 * p[0], q[0] - q[1]).ok()
    }
}

/// Exact peakon-antipeakon solution with total momentum `p(t)` and
/// separation `q(t) < 0` (the peakon sits at `q/2`, the antipeakon at `-q/2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormPair {
    pub p0: f64,
    pub q0: f64,
    pub h0: f64,
    pub t_break: f64,
}

impl ClosedFormPair {
    pub fn new(p0: f64, q0: f64) -> Result<Self> {
        if !(p0 > 0.0 && p0.is_finite()) {
            return Err(Error::InvalidArgument(format!("p0 must be positive, got {p0}")));
        }
        if !(q0 < 0.0 && q0.is_finite()) {
            return Err(Error::InvalidArgument(format!("q0 must be negative, got {q0}")));
        }
        let h0 = p0 * (-q0.exp_m1()).sqrt();
        let t_break = 2.0 / h0 * (h0 / p0).atanh();
        Ok(Self { p0, q0, h0, t_break })
    }

    /// `p^2 (1 - e^q)`, conserved along the exact solution.
    pub fn invariant(p: f64, q: f64) -> f64 {
        -p * p * q.exp_m1()
    }

    /// `(p, q)` at remaining time `tau = T - t`. Valid for any `tau > 0`,
    /// including `tau > T` (the backward continuation).
    pub fn pq_at_remaining(&self, tau: f64) -> (f64, f64) {
        let x = 0.5 * self.h0 * tau;
        let p = self.h0 / x.tanh();
        let s = (0.5 * x).sinh();
        let q = -2.0 * (2.0 * s * s).ln_1p();
        (p, q)
    }

    pub fn pq(&self, t: f64) -> Result<(f64, f64)> {
        if !(0.0..self.t_break).contains(&t) {
            return Err(Error::Domain {
                t,
                t_break: self.t_break,
            });
        }
        if t == 0.0 {
            return Ok((self.p0, self.q0));
        }
        Ok(self.pq_at_remaining(self.t_break - t))
    }

    pub fn state_from_pq(t: f64, p: f64, q: f64) -> PeakonState {
        PeakonState {
            t,
            q: vec![0.5 * q, -0.5 * q],
            p: vec![0.5 * p, -0.5 * p],
        }
    }

    pub fn initial_state(&self) -> PeakonState {
        Self::state_from_pq(0.0, self.p0, self.q0)
    }

    /// Closed-form two-peakon state at `t` in `[0, T)`.
    pub fn eval(&self, t: f64) -> Result<PeakonState> {
        let (p, q) = self.pq(t)?;
        Ok(Self::state_from_pq(t, p, q))
    }

    /// Total energy `∫(u² + u_x²) dx`, equal to `H0²`.
    pub fn energy_total(&self) -> f64 {
        self.h0 * self.h0
    }
}

/// Closed-form evaluation at `t`.
pub fn closed_form_eval(pair: &ClosedFormPair, t: f64) -> Result<PeakonState> {
    pair.eval(t)
}

fn npeakon_rhs_into(q: &[f64], p: &[f64], dq: &mut [f64], dp: &mut [f64]) {
    let n = q.len();
    for i in 0..n {
        let mut sq = 0.0;
        let mut sp = 0.0;
        for j in 0..n {
            let d = q[i] - q[j];
            let e = (-d.abs()).exp();
            sq += p[j] * e;
            if d > 0.0 {
                sp += p[j] * e;
            } else if d < 0.0 {
                sp -= p[j] * e;
            }
        }
        dq[i] = sq;
        dp[i] = p[i] * sp;
    }
}

/// Right-hand side of the N-peakon system.
pub fn npeakon_rhs(state: &PeakonState, eps_gap: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some((i, gap)) = state.min_gap() {
        if gap < eps_gap {
            return Err(Error::Collision {
                i,
                j: i + 1,
                gap,
                eps: eps_gap,
            });
        }
    }
    let n = state.len();
    let mut dq = vec![0.0; n];
    let mut dp = vec![0.0; n];
    npeakon_rhs_into(&state.q, &state.p, &mut dq, &mut dp);
    Ok((dq, dp))
}

/// The N-peakon system on `y = [q_0..q_{N-1}, p_0..p_{N-1}]`.
/// Trial stages that reorder the positions are refused.
pub struct PeakonSystem {
    pub n: usize,
}

impl OdeSystem for PeakonSystem {
    fn dim(&self) -> usize {
        2 * self.n
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> std::result::Result<(), ()> {
        let (q, p) = y.split_at(self.n);
        if q.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(());
        }
        let (dq, dp) = dy.split_at_mut(self.n);
        npeakon_rhs_into(q, p, dq, dp);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IntegrateOptions {
    pub rtol: f64,
    pub atol: f64,
    pub eps_gap: f64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self::with_tol(1e-9)
    }
}

impl IntegrateOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: 1e-2 * tol,
            eps_gap: DEFAULT_EPS_GAP,
        }
    }

    fn ode(&self) -> OdeOptions {
        OdeOptions::with_tol(self.rtol, self.atol)
    }
}

/// Detected collision of two adjacent peakons.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BreakingEvent {
    pub t_break: f64,
    pub indices: (usize, usize),
    pub gap_at_stop: f64,
    pub vmin_at_stop: f64,
    pub state: PeakonState,
}

#[derive(Debug, Clone)]
pub enum Integration {
    Reached(PeakonState),
    Breaking(BreakingEvent),
}

impl Integration {
    pub fn final_state(&self) -> &PeakonState {
        match self {
            Integration::Reached(s) => s,
            Integration::Breaking(ev) => &ev.state,
        }
    }
}

/// Integration result together with the continuous extension of the run.
#[derive(Debug, Clone)]
pub struct DenseRun {
    pub outcome: Integration,
    pub dense: ode::DenseOutput,
    pub n: usize,
}

fn split(t: f64, y: &[f64], n: usize) -> PeakonState {
    PeakonState {
        t,
        q: y[..n].to_vec(),
        p: y[n..].to_vec(),
    }
}

/// Integrate and keep the dense output.
pub fn integrate_dense(state: &PeakonState, t_end: f64, opts: &IntegrateOptions) -> Result<DenseRun> {
    if !(t_end >= state.t) {
        return Err(Error::InvalidArgument(format!("t_end {t_end} precedes state time {}", state.t)));
    }
    if !(opts.rtol > 0.0 && opts.rtol <= 1e-2) {
        return Err(Error::InvalidArgument(format!("tolerance {} outside (0, 1e-2]", opts.rtol)));
    }
    let n = state.len();
    if let Some((i, gap)) = state.min_gap() {
        if gap < opts.eps_gap {
            return Ok(DenseRun {
                outcome: Integration::Breaking(BreakingEvent {
                    t_break: state.t,
                    indices: (i, i + 1),
                    gap_at_stop: gap.max(0.0),
                    vmin_at_stop: field::slope_range(state).0,
                    state: state.clone(),
                }),
                dense: ode::DenseOutput::default(),
                n,
            });
        }
    }
    let sys = PeakonSystem { n };
    let y0: Vec<f64> = state.q.iter().chain(&state.p).copied().collect();
    let mut vmin = field::slope_range(state).0;
    let mut hit: Option<(usize, f64)> = None;
    let mut last_t = state.t;
    let mut last_y = y0.clone();
    let mut dense = ode::DenseOutput::default();
    let res = ode::dopri5(&sys, state.t, &y0, t_end, &opts.ode(), |step, y| {
        dense.push(step.clone());
        last_t = step.t1();
        last_y.copy_from_slice(y);
        let s = split(step.t1(), y, n);
        vmin = vmin.min(field::slope_range(&s).0);
        match s.min_gap() {
            Some((i, gap)) if gap < opts.eps_gap => {
                hit = Some((i, gap));
                StepControl::Stop
            }
            _ => StepControl::Continue,
        }
    });
    let outcome = match res {
        Ok(out) => {
            let s = split(out.t, &out.y, n);
            match hit {
                Some((i, gap)) => Integration::Breaking(BreakingEvent {
                    t_break: out.t,
                    indices: (i, i + 1),
                    gap_at_stop: gap.max(0.0),
                    vmin_at_stop: vmin,
                    state: s,
                }),
                None => Integration::Reached(s),
            }
        }
        // Step collapse can only come from trial stages reordering the
        // positions or from blowup of the momenta, i.e. from a collision.
        Err(Error::StepUnderflow { .. }) | Err(Error::NonFinite { .. }) if n >= 2 => {
            let s = split(last_t, &last_y, n);
            let (i, gap) = s.min_gap().expect("n >= 2");
            Integration::Breaking(BreakingEvent {
                t_break: last_t,
                indices: (i, i + 1),
                gap_at_stop: gap.max(0.0),
                vmin_at_stop: vmin,
                state: s,
            })
        }
        Err(e) => return Err(e),
    };
    Ok(DenseRun { outcome, dense, n })
}

/// Integrate the N-peakon system to `t_end`, stopping at the first collision.
pub fn integrate(state: &PeakonState, t_end: f64, opts: &IntegrateOptions) -> Result<Integration> {
    integrate_dense(state, t_end, opts).map(|r| r.outcome)
}

/// First collision time after `state.t`: exact for antisymmetric pairs,
/// otherwise from integration up to `state.t + horizon`.
pub fn breaking_time_estimate(state: &PeakonState, horizon: f64, opts: &IntegrateOptions) -> Result<f64> {
    if let Some(pair) = state.as_antisymmetric_pair() {
        return Ok(state.t + pair.t_break);
    }
    match integrate(state, state.t + horizon, opts)? {
        Integration::Breaking(ev) => Ok(ev.t_break),
        Integration::Reached(_) => Err(Error::NoBreaking {
            horizon: state.t + horizon,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r0() -> ClosedFormPair {
        ClosedFormPair::new(1.0, 0.75f64.ln()).unwrap()
    }

    // Formula written the way it is usually stated, in terms of e^{H0 t}.
    fn textbook(pair: &ClosedFormPair, t: f64) -> (f64, f64) {
        let (p0, h0) = (pair.p0, pair.h0);
        let e = (h0 * t).exp();
        let p = h0 * ((p0 + h0) + (p0 - h0) * e) / ((p0 + h0) - (p0 - h0) * e);
        let arg = ((p0 + h0) * (-h0 * t / 2.0).exp() + (p0 - h0) * (h0 * t / 2.0).exp()) / (2.0 * p0);
        (p, pair.q0 - 2.0 * arg.ln())
    }

    #[test]
    fn r0_constants() {
        let pair = r0();
        assert!((pair.h0 - 0.5).abs() < 1e-15);
        assert!((pair.t_break - 2.0 * 3f64.ln()).abs() < 1e-14);
        assert!((pair.t_break - 2.1972245773).abs() < 1e-10);
        let log_form = (1.0 / pair.h0) * ((pair.p0 + pair.h0) / (pair.p0 - pair.h0)).ln();
        assert!((pair.t_break - log_form).abs() <= 1e-12 * log_form);
    }

    #[test]
    fn closed_form_initial_data() {
        let s = r0().eval(0.0).unwrap();
        let a = 0.5 * 0.75f64.ln();
        assert_eq!(s.q, vec![a, -a]);
        assert_eq!(s.p, vec![0.5, -0.5]);
    }

    #[test]
    fn stable_form_matches_textbook_form() {
        let pair = r0();
        for k in 0..=200 {
            let t = 0.95 * pair.t_break * k as f64 / 200.0;
            let (p, q) = pair.pq(t).unwrap();
            let (pe, qe) = textbook(&pair, t);
            assert!((p - pe).abs() <= 1e-12 * pe.abs(), "t={t}: {p} vs {pe}");
            assert!((q - qe).abs() <= 1e-12 * qe.abs().max(1e-3), "t={t}: {q} vs {qe}");
        }
    }

    #[test]
    fn closed_form_domain() {
        let pair = r0();
        assert!(matches!(pair.eval(pair.t_break), Err(Error::Domain { .. })));
        assert!(matches!(pair.eval(-1e-3), Err(Error::Domain { .. })));
    }

    #[test]
    fn blowup_rate_near_breaking() {
        let pair = r0();
        for k in 1..=6 {
            let tau = 10f64.powi(-k);
            let (p, _) = pair.pq(pair.t_break - tau).unwrap();
            // p (T - t) -> 2 as t -> T
            assert!((1.9..=2.1).contains(&(p * tau)), "tau={tau}: {}", p * tau);
        }
        let fits: Vec<f64> = (3..8)
            .map(|k| {
                let tau = 10f64.powi(-k);
                pair.pq_at_remaining(tau).0 * tau
            })
            .collect();
        assert!((fits.last().unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn invariant_on_closed_form_grid() {
        let pair = r0();
        let h2 = pair.h0 * pair.h0;
        for k in 0..1000 {
            let t = 0.999 * pair.t_break * k as f64 / 999.0;
            let (p, q) = pair.pq(t).unwrap();
            let inv = ClosedFormPair::invariant(p, q);
            assert!((inv - h2).abs() <= 1e-10 * h2, "t={t}: {inv}");
        }
    }

    #[test]
    fn rhs_single_peakon() {
        let (dq, dp) = npeakon_rhs(&PeakonState::single(0.0, 0.0, 1.0), DEFAULT_EPS_GAP).unwrap();
        assert_eq!(dq, vec![1.0]);
        assert_eq!(dp, vec![0.0]);
    }

    #[test]
    fn rhs_antisymmetric_pair() {
        let a = -0.3;
        let s = PeakonState::new(0.0, vec![a, -a], vec![0.5, -0.5]).unwrap();
        let (dq, dp) = npeakon_rhs(&s, DEFAULT_EPS_GAP).unwrap();
        assert_eq!(dp[0], -dp[1]);
        // mirror symmetry: the pair approaches with opposite velocities
        assert_eq!(dq[0], -dq[1]);
        assert!(dq[0] > 0.0);
    }

    #[test]
    fn rhs_collision_error() {
        let s = PeakonState::new(0.0, vec![0.0, 1e-10], vec![1.0, -1.0]).unwrap();
        assert!(matches!(npeakon_rhs(&s, 1e-8), Err(Error::Collision { i: 0, j: 1, .. })));
    }

    #[test]
    fn integrate_single_peakon() {
        let s = PeakonState::single(0.0, 0.0, 1.0);
        let out = integrate(&s, 2.0, &IntegrateOptions::default()).unwrap();
        let f = out.final_state();
        assert!((f.q[0] - 2.0).abs() < 1e-9);
        assert!((f.p[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn integrate_r0_to_one() {
        let pair = r0();
        let out = integrate(&pair.initial_state(), 1.0, &IntegrateOptions::with_tol(1e-10)).unwrap();
        let Integration::Reached(s) = out else { panic!("unexpected breaking") };
        let cf = pair.eval(1.0).unwrap();
        let err = s.q.iter().zip(&cf.q).chain(s.p.iter().zip(&cf.p)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-7, "sup error {err:e}");
    }

    #[test]
    fn integrate_r0_past_breaking() {
        let pair = r0();
        let out = integrate(&pair.initial_state(), 1.1 * pair.t_break, &IntegrateOptions::with_tol(1e-10)).unwrap();
        let Integration::Breaking(ev) = out else { panic!("no breaking") };
        assert!(ev.t_break >= pair.t_break - 1e-3 && ev.t_break <= pair.t_break, "{}", ev.t_break);
        assert_eq!(ev.indices, (0, 1));
        assert!(ev.gap_at_stop >= 0.0 && ev.gap_at_stop < DEFAULT_EPS_GAP);
        assert!(ev.vmin_at_stop < -100.0);
        // antisymmetry is preserved by the scheme
        let s = &ev.state;
        assert!((s.q[0] + s.q[1]).abs() < 1e-9 && (s.p[0] + s.p[1]).abs() < 1e-9 * s.p[0].abs());
    }

    #[test]
    fn breaking_estimates() {
        let opts = IntegrateOptions::default();
        let t = breaking_time_estimate(&r0().initial_state(), 10.0, &opts).unwrap();
        assert!((t - 2.0 * 3f64.ln()).abs() < 1e-6 * t);
        let single = PeakonState::single(0.0, 0.0, 1.0);
        assert!(matches!(breaking_time_estimate(&single, 50.0, &opts), Err(Error::NoBreaking { .. })));
        let ordered = PeakonState::new(0.0, vec![0.0, 5.0], vec![1.0, 2.0]).unwrap();
        assert!(matches!(breaking_time_estimate(&ordered, 10.0, &opts), Err(Error::NoBreaking { .. })));
    }

    #[test]
    fn generic_pair_breaking_agrees_with_integration() {
        let pair = ClosedFormPair::new(1.3, -0.4).unwrap();
        let s = pair.initial_state();
        let opts = IntegrateOptions::with_tol(1e-10);
        let Integration::Breaking(ev) = integrate(&s, 10.0, &opts).unwrap() else { panic!() };
        assert!((ev.t_break - pair.t_break).abs() < 1e-3);
    }

    #[test]
    fn new_sorts_positions() {
        let s = PeakonState::new(0.0, vec![2.0, -1.0], vec![3.0, 4.0]).unwrap();
        assert_eq!(s.q, vec![-1.0, 2.0]);
        assert_eq!(s.p, vec![4.0, 3.0]);
        assert!(PeakonState::new(0.0, vec![0.0], vec![]).is_err());
        assert!(PeakonState::new(0.0, vec![f64::NAN], vec![1.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn integrator_keeps_antisymmetry(p0 in 0.2f64..2.0, q0 in -3.0f64..-0.05) {
            let pair = ClosedFormPair::new(p0, q0).unwrap();
            let t_end = 0.9 * pair.t_break;
            let run = integrate_dense(&pair.initial_state(), t_end, &IntegrateOptions::with_tol(1e-10)).unwrap();
            for step in run.dense.steps() {
                let y = step.eval(step.t1());
                prop_assert!((y[0] + y[1]).abs() <= 1e-9);
                prop_assert!((y[2] + y[3]).abs() <= 1e-9);
            }
            let s = run.outcome.final_state();
            let cf = pair.eval(t_end).unwrap();
            prop_assert!((s.p[0] - cf.p[0]).abs() <= 1e-6 * cf.p[0]);
        }

        #[test]
        fn closed_form_invariant(p0 in 0.1f64..5.0, q0 in -6.0f64..-1e-3, frac in 0.0f64..0.999) {
            let pair = ClosedFormPair::new(p0, q0).unwrap();
            let (p, q) = pair.pq(frac * pair.t_break).unwrap();
            let h2 = pair.h0 * pair.h0;
            prop_assert!((ClosedFormPair::invariant(p, q) - h2).abs() <= 1e-10 * h2);
        }
    }
}
