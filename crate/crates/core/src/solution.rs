//! Time-indexed access to peakon solutions.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ode::DenseOutput;
use crate::peakon::{ClosedFormPair, PeakonState};

/// A weak solution given as a peakon state at every time of its span.
pub trait Solution: Send + Sync {
    fn state_at(&self, t: f64) -> Result<PeakonState>;

    /// Times at which the solution is singular (collisions, creation).
    fn breaking_times(&self) -> Vec<f64>;

    fn time_span(&self) -> (f64, f64);

    fn check_time(&self, t: f64) -> Result<()> {
        let (a, b) = self.time_span();
        if t < a || t > b || !t.is_finite() {
            return Err(Error::Domain { t, t_break: b });
        }
        Ok(())
    }

    /// First singular time strictly after `t`.
    fn next_breaking_after(&self, t: f64) -> Option<f64> {
        self.breaking_times()
            .into_iter()
            .filter(|b| *b > t)
            .min_by(f64::total_cmp)
    }
}

impl<S: Solution + ?Sized> Solution for Arc<S> {
    fn state_at(&self, t: f64) -> Result<PeakonState> {
        (**self).state_at(t)
    }
    fn breaking_times(&self) -> Vec<f64> {
        (**self).breaking_times()
    }
    fn time_span(&self) -> (f64, f64) {
        (**self).time_span()
    }
}

impl<S: Solution + ?Sized> Solution for &S {
    fn state_at(&self, t: f64) -> Result<PeakonState> {
        (**self).state_at(t)
    }
    fn breaking_times(&self) -> Vec<f64> {
        (**self).breaking_times()
    }
    fn time_span(&self) -> (f64, f64) {
        (**self).time_span()
    }
}

/// `u ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroSolution;

impl Solution for ZeroSolution {
    fn state_at(&self, t: f64) -> Result<PeakonState> {
        Ok(PeakonState::zero(t))
    }
    fn breaking_times(&self) -> Vec<f64> {
        Vec::new()
    }
    fn time_span(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
}

/// How the antisymmetric pair continues after it annihilates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Continuation {
    /// `u(t) = -u(2T - t)`: the pair reappears with its energy restored.
    Conservative,
    /// `u ≡ 0` after the collision.
    Dissipative,
}

/// The exact peakon-antipeakon solution, optionally shifted in time.
/// `u(t) = base(t - offset)` for `t >= t_start`.
#[derive(Debug, Clone, Copy)]
pub struct PairSolution {
    pub pair: ClosedFormPair,
    pub continuation: Continuation,
    pub offset: f64,
    pub t_start: f64,
}

impl PairSolution {
    pub fn new(pair: ClosedFormPair, continuation: Continuation) -> Self {
        Self {
            pair,
            continuation,
            offset: 0.0,
            t_start: 0.0,
        }
    }

    /// `w(t) = u(t + T)` under the conservative continuation: zero data at
    /// `t = 0` from which a peakon-antipeakon pair emerges.
    pub fn creation(pair: ClosedFormPair) -> Self {
        Self {
            pair,
            continuation: Continuation::Conservative,
            offset: -pair.t_break,
            t_start: 0.0,
        }
    }

    pub fn collision_time(&self) -> f64 {
        self.pair.t_break + self.offset
    }
}

impl Solution for PairSolution {
    fn state_at(&self, t: f64) -> Result<PeakonState> {
        self.check_time(t)?;
        let s = t - self.offset;
        let tb = self.pair.t_break;
        if s < tb {
            let (p, q) = if s == 0.0 {
                (self.pair.p0, self.pair.q0)
            } else {
                self.pair.pq_at_remaining(tb - s)
            };
            return Ok(ClosedFormPair::state_from_pq(t, p, q));
        }
        if s == tb || self.continuation == Continuation::Dissipative {
            return Ok(PeakonState::zero(t));
        }
        let (p, q) = self.pair.pq_at_remaining(s - tb);
        Ok(ClosedFormPair::state_from_pq(t, -p, q))
    }

    fn breaking_times(&self) -> Vec<f64> {
        let tc = self.collision_time();
        if tc >= self.t_start {
            vec![tc]
        } else {
            Vec::new()
        }
    }

    fn time_span(&self) -> (f64, f64) {
        (self.t_start, f64::INFINITY)
    }
}

/// `v(s) = -u(t0 - s)`, again a weak solution; used for backward questions.
#[derive(Clone)]
pub struct TimeReversed<S = Arc<dyn Solution>> {
    pub inner: S,
    pub t0: f64,
}

impl<S: Solution> TimeReversed<S> {
    pub fn new(inner: S, t0: f64) -> Self {
        Self { inner, t0 }
    }
}

impl<S: Solution> Solution for TimeReversed<S> {
    fn state_at(&self, s: f64) -> Result<PeakonState> {
        self.check_time(s)?;
        let mut st = self.inner.state_at(self.t0 - s)?.negated();
        st.t = s;
        Ok(st)
    }

    fn breaking_times(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.inner.breaking_times().into_iter().map(|b| self.t0 - b).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    fn time_span(&self) -> (f64, f64) {
        let (a, b) = self.inner.time_span();
        (self.t0 - b, self.t0 - a)
    }
}

/// One piece of a numerically integrated trajectory between events.
#[derive(Debug, Clone)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub n: usize,
    pub start: PeakonState,
    pub dense: DenseOutput,
}

impl Segment {
    fn state_at(&self, t: f64) -> PeakonState {
        if self.n == 0 || t == self.t_start || self.dense.is_empty() {
            let mut s = self.start.clone();
            s.t = t;
            return s;
        }
        let y = self
            .dense
            .eval(t.clamp(self.dense.t_start().unwrap(), self.dense.t_end().unwrap()))
            .expect("time clamped into the dense span");
        PeakonState {
            t,
            q: y[..self.n].to_vec(),
            p: y[self.n..].to_vec(),
        }
    }
}

/// Piecewise trajectory produced by the integrator and a collision policy.
/// At an event time the post-event state is reported.
#[derive(Debug, Clone)]
pub struct OdeTrajectory {
    pub segments: Vec<Segment>,
    pub events: Vec<f64>,
}

impl OdeTrajectory {
    pub fn segment_at(&self, t: f64) -> Option<&Segment> {
        let idx = self.segments.partition_point(|s| s.t_end <= t);
        self.segments
            .get(idx)
            .or_else(|| self.segments.last().filter(|s| s.t_end == t))
    }
}

impl Solution for OdeTrajectory {
    fn state_at(&self, t: f64) -> Result<PeakonState> {
        self.check_time(t)?;
        let seg = self.segment_at(t).ok_or(Error::Domain {
            t,
            t_break: self.time_span().1,
        })?;
        Ok(seg.state_at(t))
    }

    fn breaking_times(&self) -> Vec<f64> {
        self.events.clone()
    }

    fn time_span(&self) -> (f64, f64) {
        match (self.segments.first(), self.segments.last()) {
            (Some(a), Some(b)) => (a.t_start, b.t_end),
            _ => (0.0, 0.0),
        }
    }
}
