//! Characteristics `ζ' = u(t, ζ)`, the slope equation along them, extremal
//! characteristics via one-sided δ-families, and thick pushforwards of
//! finite unions of intervals.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extrapolate::richardson;
use crate::field::{eval_u, eval_ux, Field};
use crate::ode::{dopri5_dense, OdeOptions, OdeSystem, StepControl};
use crate::solution::Solution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    Generic,
    Leftmost,
    Rightmost,
    LeftRightmost,
    RightLeftmost,
    LeftmostBackward,
    RightmostBackward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy)]
pub struct CharOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Number of uniform samples when no explicit times are given.
    pub samples: usize,
    /// Paths stop this far before a singular time.
    pub break_margin: f64,
}

impl Default for CharOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-11,
            atol: 1e-13,
            samples: 401,
            break_margin: 1e-6,
        }
    }
}

/// A sampled characteristic. `u` is the velocity carried by the ODE
/// (`U' = -P_x`), `v` the field slope `u_x(t, ζ(t))` and `v_riccati` the
/// solution of `v' = u² - ½v² - P` started from the initial slope.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharPath {
    pub t: Vec<f64>,
    pub zeta: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub v_riccati: Vec<f64>,
    pub flavor: Flavor,
    pub truncated: bool,
    pub t_break: Option<f64>,
    /// Per-sample extrapolation error of `zeta` (extremal paths only).
    pub zeta_error: Vec<f64>,
}

impl CharPath {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn last_zeta(&self) -> f64 {
        *self.zeta.last().expect("non-empty path")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,zeta,u,v")?;
        for i in 0..self.len() {
            writeln!(w, "{:?},{:?},{:?},{:?}", self.t[i], self.zeta[i], self.u[i], self.v[i])?;
        }
        Ok(())
    }
}

struct CharSystem<'a> {
    source: &'a dyn Solution,
    t0: f64,
    dir: f64,
}

impl OdeSystem for CharSystem<'_> {
    fn dim(&self) -> usize {
        3
    }

    fn rhs(&self, s: f64, y: &[f64], dy: &mut [f64]) -> std::result::Result<(), ()> {
        let t = self.t0 + self.dir * s;
        let state = self.source.state_at(t).map_err(|_| ())?;
        let field = Field::new(&state);
        let u = eval_u(&state, y[0]);
        let (p, px) = field.p_px(y[0]);
        dy[0] = self.dir * u;
        dy[1] = -self.dir * px;
        dy[2] = self.dir * (u * u - 0.5 * y[2] * y[2] - p);
        if dy.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(())
        }
    }
}

fn uniform_times(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|k| if k + 1 == n { t1 } else { t0 + (t1 - t0) * k as f64 / (n - 1) as f64 })
        .collect()
}

/// Integrate the characteristic through `(t0, zeta0)` and sample it at
/// `times`, which must all lie on one side of `t0`, ordered away from it.
pub fn integrate_char_at(
    source: &dyn Solution,
    t0: f64,
    zeta0: f64,
    times: &[f64],
    opts: &CharOptions,
) -> Result<CharPath> {
    let far = *times
        .iter()
        .max_by(|a, b| (*a - t0).abs().total_cmp(&(*b - t0).abs()))
        .ok_or_else(|| Error::InvalidArgument("no sample times".into()))?;
    let dir = if far < t0 { -1.0 } else { 1.0 };
    if times.iter().any(|t| (t - t0) * dir < 0.0) {
        return Err(Error::InvalidArgument("sample times on both sides of t0".into()));
    }
    if times.windows(2).any(|w| (w[1] - w[0]) * dir < 0.0) {
        return Err(Error::InvalidArgument("sample times must move away from t0".into()));
    }
    let t_break = source
        .breaking_times()
        .into_iter()
        .filter(|b| (b - t0) * dir > 0.0 && (far - b) * dir >= 0.0)
        .min_by(|a, b| (a - t0).abs().total_cmp(&(b - t0).abs()));
    let s_stop = match t_break {
        Some(b) => ((b - t0).abs() - opts.break_margin).max(0.0),
        None => (far - t0).abs(),
    };
    let kept: Vec<f64> = times.iter().copied().filter(|t| (t - t0).abs() <= s_stop).collect();

    let state0 = source.state_at(t0)?;
    let u0 = eval_u(&state0, zeta0);
    let v0 = eval_ux(&state0, zeta0);
    let sys = CharSystem { source, t0, dir };
    let ode_opts = OdeOptions::with_tol(opts.rtol, opts.atol);
    let y0 = [zeta0, u0, v0];
    let (_, dense) = dopri5_dense(&sys, 0.0, &y0, s_stop, &ode_opts, |_, _| StepControl::Continue)?;

    let mut path = CharPath {
        t: Vec::with_capacity(kept.len()),
        zeta: Vec::with_capacity(kept.len()),
        u: Vec::with_capacity(kept.len()),
        v: Vec::with_capacity(kept.len()),
        v_riccati: Vec::with_capacity(kept.len()),
        flavor: Flavor::Generic,
        truncated: kept.len() < times.len(),
        t_break,
        zeta_error: Vec::new(),
    };
    for &t in &kept {
        let s = (t - t0).abs();
        let y = if s == 0.0 || dense.is_empty() {
            y0.to_vec()
        } else {
            dense.eval(s.min(dense.t_end().unwrap())).expect("within span")
        };
        let st = source.state_at(t)?;
        path.t.push(t);
        path.zeta.push(y[0]);
        path.u.push(y[1]);
        path.v.push(eval_ux(&st, y[0]));
        path.v_riccati.push(y[2]);
    }
    Ok(path)
}

/// Characteristic from `(t0, zeta0)` to `t1` on a uniform sample grid.
pub fn integrate_char(source: &dyn Solution, t0: f64, zeta0: f64, t1: f64, opts: &CharOptions) -> Result<CharPath> {
    integrate_char_at(source, t0, zeta0, &uniform_times(t0, t1, opts.samples), opts)
}

/// Cumulative integral of samples `f(t_i)`: on each interval the average of
/// the two neighbouring three-point interpolants (a cubic rule on uniform
/// grids), a single quadratic at the ends.
pub fn cumulative_integral(t: &[f64], f: &[f64]) -> Vec<f64> {
    let n = t.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = 0.5 * (t[1] - t[0]) * (f[0] + f[1]);
        return out;
    }
    for i in 0..n - 1 {
        let (a, b) = (t[i], t[i + 1]);
        let left = (i >= 1).then(|| quad3(&t[i - 1..i + 2], &f[i - 1..i + 2], a, b));
        let right = (i + 2 < n).then(|| quad3(&t[i..i + 3], &f[i..i + 3], a, b));
        let piece = match (left, right) {
            (Some(l), Some(r)) => 0.5 * (l + r),
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (None, None) => 0.5 * (b - a) * (f[i] + f[i + 1]),
        };
        out[i + 1] = out[i] + piece;
    }
    out
}

// Integral over [a, b] of the quadratic through three points.
fn quad3(x: &[f64], f: &[f64], a: f64, b: f64) -> f64 {
    let (x0, x1, x2) = (x[0], x[1], x[2]);
    let d1 = (f[1] - f[0]) / (x1 - x0);
    let d2 = ((f[2] - f[1]) / (x2 - x1) - d1) / (x2 - x0);
    let h1 = x1 - x0;
    let prim = |x: f64| {
        let y = x - x0;
        f[0] * y + d1 * y * y / 2.0 + d2 * (y * y * y / 3.0 - h1 * y * y / 2.0)
    };
    prim(b) - prim(a)
}

/// `sup_i |v(t_i) - v(t_0) - ∫_{t_0}^{t_i} (u² - ½v² - P) ds|` along the path,
/// with `u, P` evaluated from the source at the sampled positions.
pub fn riccati_residual(path: &CharPath, source: &dyn Solution) -> Result<f64> {
    if path.is_empty() {
        return Ok(0.0);
    }
    let mut g = Vec::with_capacity(path.len());
    for i in 0..path.len() {
        let st = source.state_at(path.t[i])?;
        let u = eval_u(&st, path.zeta[i]);
        let (p, _) = Field::new(&st).p_px(path.zeta[i]);
        g.push(u * u - 0.5 * path.v[i] * path.v[i] - p);
    }
    let integral = cumulative_integral(&path.t, &g);
    Ok((0..path.len())
        .map(|i| (path.v[i] - path.v[0] - integral[i]).abs())
        .fold(0.0, f64::max))
}

/// `exp(∫ v ds)` along the path: the derivative of the flow map with respect
/// to the starting point.
pub fn cov_jacobian(path: &CharPath) -> Result<f64> {
    if path.truncated {
        return Err(Error::Truncated {
            t_stop: path.t.last().copied().unwrap_or(f64::NAN),
            t_break: path.t_break.unwrap_or(f64::NAN),
        });
    }
    if path.is_empty() {
        return Err(Error::InvalidArgument("empty path".into()));
    }
    let int = cumulative_integral(&path.t, &path.v);
    Ok(int.last().copied().unwrap_or(0.0).exp())
}

/// Geometric offsets `1e-2 · 2^{-k}`, `k = 0..=8`.
pub fn default_deltas() -> Vec<f64> {
    (0..=8).map(|k| 1e-2 * 0.5f64.powi(k)).collect()
}

#[derive(Debug, Clone)]
pub struct ExtremalOptions {
    pub deltas: Vec<f64>,
    /// Allowed violation of the ordering of the δ-family.
    pub mono_tol: f64,
    pub chars: CharOptions,
    /// Restart offsets for the compound flavors.
    pub etas: Vec<f64>,
}

impl Default for ExtremalOptions {
    fn default() -> Self {
        Self {
            deltas: default_deltas(),
            mono_tol: 1e-8,
            chars: CharOptions::default(),
            etas: (0..4).map(|k| 1e-3 * 0.5f64.powi(k)).collect(),
        }
    }
}

/// Extrapolated extremal characteristic with its δ-family diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Extremal {
    pub path: CharPath,
    pub deltas: Vec<f64>,
    /// `ζ^{±δ}` at the last sample, one per δ.
    pub members_final: Vec<f64>,
    /// Extrapolants of the final position from consecutive δ-windows.
    pub levels_final: Vec<f64>,
    /// Largest extrapolation error over the samples.
    pub max_error: f64,
}

fn flavor_for(side: Side, backward: bool) -> Flavor {
    match (side, backward) {
        (Side::Left, false) => Flavor::Leftmost,
        (Side::Right, false) => Flavor::Rightmost,
        (Side::Left, true) => Flavor::LeftmostBackward,
        (Side::Right, true) => Flavor::RightmostBackward,
    }
}

/// Extremal characteristic through `(t0, zeta0)`: characteristics from
/// `zeta0 ± δ` (sign from `side`) are sampled at `times` and extrapolated
/// quadratically to `δ = 0` at every sample.
pub fn extremal_char_at(
    source: &dyn Solution,
    t0: f64,
    zeta0: f64,
    times: &[f64],
    side: Side,
    opts: &ExtremalOptions,
) -> Result<Extremal> {
    let deltas = &opts.deltas;
    if deltas.len() < 3 || deltas.windows(2).any(|w| !(w[1] < w[0]) || w[1] <= 0.0) {
        return Err(Error::InvalidArgument(
            "delta sequence must be positive, strictly decreasing, with at least 3 entries".into(),
        ));
    }
    let sign = match side {
        Side::Left => -1.0,
        Side::Right => 1.0,
    };
    let members: Vec<CharPath> = deltas
        .par_iter()
        .map(|d| integrate_char_at(source, t0, zeta0 + sign * d, times, &opts.chars))
        .collect::<Result<Vec<_>>>()?;
    let n = members.iter().map(|m| m.len()).min().unwrap_or(0);
    let backward = times.iter().any(|t| *t < t0);

    // Shrinking δ moves the family monotonically towards the extremal path.
    for w in members.windows(2) {
        for i in 0..n {
            let violation = sign * (w[1].zeta[i] - w[0].zeta[i]);
            if violation > opts.mono_tol * (1.0 + w[0].zeta[i].abs()) {
                return Err(Error::NonMonotone {
                    t: w[0].t[i],
                    violation,
                });
            }
        }
    }

    let mut path = CharPath {
        t: members[0].t[..n].to_vec(),
        zeta: Vec::with_capacity(n),
        u: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        v_riccati: Vec::with_capacity(n),
        flavor: flavor_for(side, backward),
        truncated: members.iter().any(|m| m.truncated),
        t_break: members[0].t_break,
        zeta_error: Vec::with_capacity(n),
    };
    let mut max_error = 0.0f64;
    let mut levels_final = Vec::new();
    let mut col = vec![0.0; members.len()];
    for i in 0..n {
        let mut extrap = |pick: &dyn Fn(&CharPath) -> f64| {
            for (c, m) in col.iter_mut().zip(&members) {
                *c = pick(m);
            }
            richardson(deltas, &col, 2)
        };
        let z = extrap(&|m| m.zeta[i]);
        let u = extrap(&|m| m.u[i]);
        let v = extrap(&|m| m.v[i]);
        let vr = extrap(&|m| m.v_riccati[i]);
        max_error = max_error.max(z.error);
        path.zeta.push(z.value);
        path.zeta_error.push(z.error);
        path.u.push(u.value);
        path.v.push(v.value);
        path.v_riccati.push(vr.value);
        if i + 1 == n {
            levels_final = z.levels;
        }
    }
    let members_final = members.iter().map(|m| m.zeta[n - 1]).collect();
    Ok(Extremal {
        path,
        deltas: deltas.clone(),
        members_final,
        levels_final,
        max_error,
    })
}

pub fn extremal_char(
    source: &dyn Solution,
    t0: f64,
    zeta0: f64,
    t1: f64,
    side: Side,
    opts: &ExtremalOptions,
) -> Result<Extremal> {
    let times = uniform_times(t0, t1, opts.chars.samples);
    extremal_char_at(source, t0, zeta0, &times, side, opts)
}

/// Compound extremal characteristic: follow the `first` extremal up to
/// `t0 + η`, then the opposite extremal from there. The infimum (for
/// left-rightmost) or supremum (right-leftmost) over the η-sequence is
/// returned, sampled at `times` (on one side of `t0`, moving away from it).
pub fn compound_char_at(
    source: &dyn Solution,
    t0: f64,
    zeta0: f64,
    times: &[f64],
    first: Side,
    opts: &ExtremalOptions,
) -> Result<(Vec<f64>, f64, bool)> {
    let dir = if times.iter().any(|t| *t < t0) { -1.0 } else { 1.0 };
    let then = match first {
        Side::Right => Side::Left,
        Side::Left => Side::Right,
    };
    let mut results: Vec<Vec<f64>> = Vec::new();
    let mut truncated = false;
    for &eta in &opts.etas {
        let t_branch = t0 + dir * eta;
        let head = extremal_char_at(source, t0, zeta0, &[t_branch], first, opts)?;
        if head.path.truncated || head.path.is_empty() {
            truncated = true;
            continue;
        }
        let z_branch = head.path.last_zeta();
        let later: Vec<f64> = times.iter().copied().filter(|t| (t - t_branch) * dir > 0.0).collect();
        let mut vals: Vec<f64> = Vec::with_capacity(times.len());
        let early: Vec<f64> = times.iter().copied().filter(|t| (t - t_branch) * dir <= 0.0).collect();
        if !early.is_empty() {
            let e = extremal_char_at(source, t0, zeta0, &early, first, opts)?;
            vals.extend(&e.path.zeta);
        }
        if !later.is_empty() {
            let tail = extremal_char_at(source, t_branch, z_branch, &later, then, opts)?;
            truncated |= tail.path.truncated;
            vals.extend(&tail.path.zeta);
        }
        results.push(vals);
    }
    let Some(n) = results.iter().map(|r| r.len()).min() else {
        return Err(Error::Truncated {
            t_stop: t0,
            t_break: source.next_breaking_after(t0).unwrap_or(f64::NAN),
        });
    };
    let pick = |a: f64, b: f64| if first == Side::Right { a.min(b) } else { a.max(b) };
    let vals: Vec<f64> = (0..n)
        .map(|i| results.iter().map(|r| r[i]).reduce(pick).unwrap())
        .collect();
    let k = results.len();
    let spread = if k >= 2 {
        let tail = &results[k.saturating_sub(3)..];
        (0..n)
            .map(|i| {
                let lo = tail.iter().map(|r| r[i]).fold(f64::INFINITY, f64::min);
                let hi = tail.iter().map(|r| r[i]).fold(f64::NEG_INFINITY, f64::max);
                hi - lo
            })
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok((vals, spread, truncated || n < times.len()))
}

/// One connected component of a set built from intervals and points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SetPiece {
    Closed { a: f64, b: f64 },
    Open { a: f64, b: f64 },
    Point { a: f64 },
}

impl fmt::Display for SetPiece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetPiece::Closed { a, b } => write!(f, "[{a},{b}]"),
            SetPiece::Open { a, b } => write!(f, "({a},{b})"),
            SetPiece::Point { a } => write!(f, "{{{a}}}"),
        }
    }
}

/// Finite union of closed intervals, open intervals and points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSpec {
    pub pieces: Vec<SetPiece>,
}

impl fmt::Display for SetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.pieces.iter().map(|p| p.to_string()).collect();
        write!(f, "{}", parts.join(" U "))
    }
}

impl SetSpec {
    pub fn closed(a: f64, b: f64) -> Self {
        Self {
            pieces: vec![SetPiece::Closed { a, b }],
        }
    }

    pub fn point(a: f64) -> Self {
        Self {
            pieces: vec![SetPiece::Point { a }],
        }
    }

    /// Parses `[a,b]`, `(a,b)`, `{a}` and unions joined by `U` or `∪`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::SetSpec(text.to_string());
        let mut pieces = Vec::new();
        for part in text.split(['U', '∪']) {
            let part = part.trim();
            if part.len() < 3 {
                return Err(bad());
            }
            let open = part.chars().next().unwrap();
            let close = part.chars().last().unwrap();
            let inner = &part[open.len_utf8()..part.len() - close.len_utf8()];
            let nums: Vec<f64> = inner
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<_>>()?;
            if nums.iter().any(|v| !v.is_finite()) {
                return Err(bad());
            }
            let piece = match (open, close, nums.as_slice()) {
                ('[', ']', [a, b]) if a <= b => SetPiece::Closed { a: *a, b: *b },
                ('(', ')', [a, b]) if a < b => SetPiece::Open { a: *a, b: *b },
                ('{', '}', [a]) => SetPiece::Point { a: *a },
                _ => return Err(bad()),
            };
            pieces.push(piece);
        }
        Ok(Self { pieces })
    }

    /// Closed hull pieces `[a, b]` (points as degenerate intervals).
    pub fn hull_pieces(&self) -> Vec<(f64, f64)> {
        merge(
            self.pieces
                .iter()
                .map(|p| match *p {
                    SetPiece::Closed { a, b } | SetPiece::Open { a, b } => (a, b),
                    SetPiece::Point { a } => (a, a),
                })
                .collect(),
        )
    }
}

// Endpoints that cross by less than the extrapolation error describe a point.
fn collapse(v: &[(f64, f64)], tol: f64) -> Vec<(f64, f64)> {
    v.iter()
        .map(|&(a, b)| {
            if b < a && a - b <= tol {
                let m = 0.5 * (a + b);
                (m, m)
            } else {
                (a, b)
            }
        })
        .collect()
}

fn merge(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.retain(|(a, b)| b >= a);
    v.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Image of a set at one time under all characteristics issued from it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Pushforward {
    pub t: f64,
    /// Disjoint sorted intervals approximating `B(t)` (inner approximation
    /// for open pieces).
    pub pieces: Vec<(f64, f64)>,
    /// Outer approximation; differs from `pieces` only for open pieces.
    pub outer: Vec<(f64, f64)>,
    pub source: String,
    pub truncated: bool,
    /// Largest endpoint extrapolation error.
    pub error: f64,
}

/// Thick pushforward of `set` from `t0` to each of `times` (all on one side
/// of `t0`; earlier times give the pushbackward).
pub fn thick_pushforward_at(
    source: &dyn Solution,
    t0: f64,
    set: &SetSpec,
    times: &[f64],
    opts: &ExtremalOptions,
    with_outer: bool,
) -> Result<Vec<Pushforward>> {
    let n_t = times.len();
    let mut inner: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n_t];
    let mut outer: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n_t];
    let mut error = 0.0f64;
    let mut kept = n_t;
    let ext = |z: f64, side: Side| -> Result<Extremal> { extremal_char_at(source, t0, z, times, side, opts) };
    for piece in &set.pieces {
        let closed = match *piece {
            SetPiece::Closed { a, b } => Some((a, b)),
            SetPiece::Point { a } => Some((a, a)),
            SetPiece::Open { .. } => None,
        };
        if let Some((a, b)) = closed {
            let lo = ext(a, Side::Left)?;
            let hi = ext(b, Side::Right)?;
            kept = kept.min(lo.path.len()).min(hi.path.len());
            error = error.max(lo.max_error).max(hi.max_error);
            for i in 0..lo.path.len().min(hi.path.len()) {
                let iv = (lo.path.zeta[i], hi.path.zeta[i]);
                inner[i].push(iv);
                outer[i].push(iv);
            }
            continue;
        }
        match *piece {
            SetPiece::Open { a, b } => {
                let ar = ext(a, Side::Right)?;
                let bl = ext(b, Side::Left)?;
                kept = kept.min(ar.path.len()).min(bl.path.len());
                error = error.max(ar.max_error).max(bl.max_error);
                for i in 0..ar.path.len().min(bl.path.len()) {
                    inner[i].push((ar.path.zeta[i], bl.path.zeta[i]));
                }
                if with_outer {
                    let (arl, e1, tr1) = compound_char_at(source, t0, a, times, Side::Right, opts)?;
                    let (blr, e2, tr2) = compound_char_at(source, t0, b, times, Side::Left, opts)?;
                    if tr1 || tr2 {
                        kept = kept.min(arl.len()).min(blr.len());
                    }
                    error = error.max(e1).max(e2);
                    for i in 0..arl.len().min(blr.len()) {
                        outer[i].push((arl[i], blr[i]));
                    }
                } else {
                    for i in 0..ar.path.len().min(bl.path.len()) {
                        outer[i].push((ar.path.zeta[i], bl.path.zeta[i]));
                    }
                }
            }
            _ => unreachable!("closed pieces handled above"),
        }
    }
    let tol = 10.0 * error + 1e-12;
    Ok((0..kept)
        .map(|i| Pushforward {
            t: times[i],
            pieces: merge(collapse(&inner[i], tol)),
            outer: merge(collapse(&outer[i], tol)),
            source: set.to_string(),
            truncated: kept < n_t,
            error,
        })
        .chain((kept..n_t).map(|i| Pushforward {
            t: times[i],
            pieces: Vec::new(),
            outer: Vec::new(),
            source: set.to_string(),
            truncated: true,
            error,
        }))
        .collect())
}

pub fn thick_pushforward(
    source: &dyn Solution,
    t0: f64,
    set: &SetSpec,
    t: f64,
    opts: &ExtremalOptions,
) -> Result<Pushforward> {
    if t == t0 {
        return Ok(Pushforward {
            t,
            pieces: set.hull_pieces(),
            outer: set.hull_pieces(),
            source: set.to_string(),
            truncated: false,
            error: 0.0,
        });
    }
    Ok(thick_pushforward_at(source, t0, set, &[t], opts, true)?.remove(0))
}
