//! Adaptive Dormand–Prince 5(4) driver with continuous (dense) output.
//!
//! The right-hand side may refuse a stage evaluation by returning `Err(())`
//! (used by the peakon system when a trial stage reorders positions); the
//! step is then rejected and retried with a smaller step.

use crate::error::{Error, Result};

/// A first-order system `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    /// Evaluate `f(t, y)` into `dy`. `Err(())` rejects the current trial step.
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> std::result::Result<(), ()>;
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-9,
            h_init: None,
            h_max: f64::INFINITY,
            h_min: 1e-15,
            max_steps: 500_000,
        }
    }
}

impl OdeOptions {
    pub fn with_tol(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }
}

/// Continuous extension of one accepted step.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    rcont: [Vec<f64>; 5],
}

impl DenseStep {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let theta = if self.h == 0.0 { 0.0 } else { (t - self.t0) / self.h };
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        for i in 0..out.len() {
            out[i] = r1[i] + theta * (r2[i] + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i])));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.rcont[0].len()];
        self.eval_into(t, &mut out);
        out
    }
}

/// Sequence of dense steps covering `[t_start, t_end]`.
#[derive(Debug, Clone, Default)]
pub struct DenseOutput {
    steps: Vec<DenseStep>,
}

impl DenseOutput {
    pub fn push(&mut self, step: DenseStep) {
        self.steps.push(step);
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn t_start(&self) -> Option<f64> {
        self.steps.first().map(|s| s.t0)
    }

    pub fn t_end(&self) -> Option<f64> {
        self.steps.last().map(|s| s.t1())
    }

    pub fn steps(&self) -> &[DenseStep] {
        &self.steps
    }

    /// Interpolated state at `t`; `None` outside the covered span.
    pub fn eval(&self, t: f64) -> Option<Vec<f64>> {
        let (a, b) = (self.t_start()?, self.t_end()?);
        if t < a || t > b {
            return None;
        }
        let idx = self.steps.partition_point(|s| s.t1() < t).min(self.steps.len() - 1);
        Some(self.steps[idx].eval(t))
    }
}

pub enum StepControl {
    Continue,
    Stop,
}

#[derive(Debug, Clone)]
pub struct OdeOutcome {
    pub t: f64,
    pub y: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    /// The observer requested the stop before `t_end`.
    pub stopped: bool,
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn err_norm(err: &[f64], y0: &[f64], y1: &[f64], opts: &OdeOptions) -> f64 {
    let n = err.len().max(1) as f64;
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sk = opts.atol + opts.rtol * a.abs().max(b.abs());
            (e / sk).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn initial_step<S: OdeSystem>(sys: &S, t0: f64, y0: &[f64], f0: &[f64], span: f64, opts: &OdeOptions) -> f64 {
    let n = y0.len().max(1) as f64;
    let sk: Vec<f64> = y0.iter().map(|y| opts.atol + opts.rtol * y.abs()).collect();
    let d0 = (y0.iter().zip(&sk).map(|(y, s)| (y / s).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (f0.iter().zip(&sk).map(|(f, s)| (f / s).powi(2)).sum::<f64>() / n).sqrt();
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(span).min(opts.h_max);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    if sys.rhs(t0 + h, &y1, &mut f1).is_err() {
        return h * 1e-3;
    }
    let d2 = (f1
        .iter()
        .zip(f0)
        .zip(&sk)
        .map(|((a, b), s)| ((a - b) / s).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h;
    let dmax = d1.max(d2);
    let h1 = if dmax <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / dmax).powf(0.2)
    };
    (100.0 * h).min(h1).min(span).min(opts.h_max)
}

/// Integrate from `t0` to `t_end >= t0`. The observer sees every accepted step
/// and may stop the integration early.
pub fn dopri5<S, F>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
    mut observer: F,
) -> Result<OdeOutcome>
where
    S: OdeSystem,
    F: FnMut(&DenseStep, &[f64]) -> StepControl,
{
    let n = sys.dim();
    assert_eq!(y0.len(), n, "initial state has wrong dimension");
    if !(t_end >= t0) {
        return Err(Error::InvalidArgument(format!("t_end {t_end} < t0 {t0}")));
    }
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut outcome = OdeOutcome {
        t,
        y: y.clone(),
        accepted: 0,
        rejected: 0,
        stopped: false,
    };
    if t_end == t0 || n == 0 {
        outcome.t = t_end;
        return Ok(outcome);
    }

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut err = vec![0.0; n];

    if sys.rhs(t, &y, &mut k1).is_err() {
        return Err(Error::NonFinite { t });
    }
    let span = t_end - t0;
    let mut h = opts
        .h_init
        .unwrap_or_else(|| initial_step(sys, t, &y, &k1, span, opts))
        .min(opts.h_max);
    let mut last_rejected = false;
    let mut steps = 0usize;

    loop {
        if steps >= opts.max_steps {
            return Err(Error::TooManySteps {
                t,
                max_steps: opts.max_steps,
            });
        }
        steps += 1;
        let remaining = t_end - t;
        let last = h >= remaining * (1.0 - 1e-12);
        if last {
            h = remaining;
        }
        if h < opts.h_min * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t });
        }

        let stages = (|| -> std::result::Result<(), ()> {
            for i in 0..n {
                ytmp[i] = y[i] + h * A21 * k1[i];
            }
            sys.rhs(t + C2 * h, &ytmp, &mut k2)?;
            for i in 0..n {
                ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            sys.rhs(t + C3 * h, &ytmp, &mut k3)?;
            for i in 0..n {
                ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            sys.rhs(t + C4 * h, &ytmp, &mut k4)?;
            for i in 0..n {
                ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            sys.rhs(t + C5 * h, &ytmp, &mut k5)?;
            for i in 0..n {
                ytmp[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            let t_next = if last { t_end } else { t + h };
            sys.rhs(t_next, &ytmp, &mut k6)?;
            for i in 0..n {
                y1[i] = y[i]
                    + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            sys.rhs(t_next, &y1, &mut k7)?;
            Ok(())
        })();

        let e = match stages {
            Ok(()) => {
                for i in 0..n {
                    err[i] = h
                        * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                }
                let e = err_norm(&err, &y, &y1, opts);
                if e.is_finite() {
                    e
                } else {
                    f64::INFINITY
                }
            }
            Err(()) => f64::INFINITY,
        };

        if e <= 1.0 {
            let t_new = if last { t_end } else { t + h };
            let mut rcont: [Vec<f64>; 5] = Default::default();
            rcont[0] = y.clone();
            rcont[1] = y1.iter().zip(&y).map(|(a, b)| a - b).collect();
            rcont[2] = (0..n).map(|i| h * k1[i] - rcont[1][i]).collect();
            rcont[3] = (0..n).map(|i| rcont[1][i] - h * k7[i] - rcont[2][i]).collect();
            rcont[4] = (0..n)
                .map(|i| {
                    h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
                })
                .collect();
            let step = DenseStep {
                t0: t,
                h: t_new - t,
                rcont,
            };
            t = t_new;
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k7);
            outcome.accepted += 1;
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { t });
            }
            let control = observer(&step, &y);
            if last || matches!(control, StepControl::Stop) {
                outcome.t = t;
                outcome.y = y;
                outcome.stopped = !last;
                return Ok(outcome);
            }
            let mut fac = if e == 0.0 { 5.0 } else { 0.9 * e.powf(-0.2) };
            fac = fac.clamp(0.2, 5.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h = (h * fac).min(opts.h_max);
            last_rejected = false;
        } else {
            outcome.rejected += 1;
            let fac = if e.is_finite() {
                (0.9 * e.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.25
            };
            h *= fac;
            last_rejected = true;
        }
    }
}

/// Integrate and keep the continuous extension of every accepted step.
pub fn dopri5_dense<S, F>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
    mut observer: F,
) -> Result<(OdeOutcome, DenseOutput)>
where
    S: OdeSystem,
    F: FnMut(&DenseStep, &[f64]) -> StepControl,
{
    let mut dense = DenseOutput::default();
    let out = dopri5(sys, t0, y0, t_end, opts, |step, y| {
        dense.push(step.clone());
        observer(step, y)
    })?;
    Ok((out, dense))
}
