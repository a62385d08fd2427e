//! Exact evaluation of multipeakon fields.
//!
//! Between two consecutive peak positions `a <= y <= b` the field is
//! `u = L e^{-(y-a)} + R e^{y-b}` where `L` collects the peakons at or left
//! of `a` and `R` those at or right of `b`. Every density built from `u` and
//! `u_x` is a sum of at most three exponentials per region, so integrals and
//! the convolution `P = ½ e^{-|x|} * (u² + ½u_x²)` are evaluated in closed
//! form. Exponents are always anchored at the end of the integration range
//! where they are largest, which keeps everything cancellation free even
//! when two peaks are 1e-9 apart.

use serde::{Deserialize, Serialize};

use crate::peakon::PeakonState;
use crate::quadrature::gl8_integrate;

/// Field values at one point. `ux` uses `sgn(0) = 0` at peaks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldPoint {
    pub u: f64,
    pub ux: f64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "Px")]
    pub px: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyReport {
    /// `∫(u² + u_x²)` over the real line.
    pub total: f64,
    /// `∫(u² + u_x²)` over the requested interval.
    pub on_interval: f64,
    pub u_sq: f64,
    pub ux_sq: f64,
    /// `∫(u_x⁻)²` over the interval.
    pub neg_part: f64,
    /// `∫(u_x⁺)²` over the interval.
    pub pos_part: f64,
}

/// Densities that can be integrated in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Density {
    /// u² + u_x²
    Energy,
    USq,
    UxSq,
    /// (u_x⁺)²
    UxPosSq,
    /// (u_x⁻)²
    UxNegSq,
}

pub fn eval_u(state: &PeakonState, x: f64) -> f64 {
    state
        .q
        .iter()
        .zip(&state.p)
        .fold(0.0, |acc, (q, p)| acc + p * (-(x - q).abs()).exp())
}

pub fn eval_ux(state: &PeakonState, x: f64) -> f64 {
    let mut s = 0.0;
    for (q, p) in state.q.iter().zip(&state.p) {
        let d = x - q;
        let e = p * (-d.abs()).exp();
        if d > 0.0 {
            s -= e;
        } else if d < 0.0 {
            s += e;
        }
    }
    s
}

/// ∫_lo^hi c·exp(λ1 (y - r1) + λ2 (y - r2)) dy, anchored at the end where the
/// exponent is largest. Infinite ends are allowed when the integral converges.
fn int_exp2(c: f64, l1: f64, r1: f64, l2: f64, r2: f64, lo: f64, hi: f64) -> f64 {
    if c == 0.0 || !(hi > lo) {
        return 0.0;
    }
    let mu = l1 + l2;
    let g = |y: f64| {
        let a = if l1 == 0.0 { 0.0 } else { l1 * (y - r1) };
        let b = if l2 == 0.0 { 0.0 } else { l2 * (y - r2) };
        a + b
    };
    if mu > 0.0 {
        c * g(hi).exp() * (-(-mu * (hi - lo)).exp_m1()) / mu
    } else if mu < 0.0 {
        c * g(lo).exp() * (-(mu * (hi - lo)).exp_m1()) / (-mu)
    } else {
        c * g(lo).exp() * (hi - lo)
    }
}

fn int_exp(c: f64, lam: f64, r: f64, lo: f64, hi: f64) -> f64 {
    int_exp2(c, lam, r, 0.0, 0.0, lo, hi)
}

/// One region between consecutive peaks: `u = L e^{-(y-lo)} + R e^{y-hi}`.
/// The unbounded outer regions have `L = 0` (left) or `R = 0` (right).
#[derive(Debug, Clone, Copy)]
pub struct Region {
    pub lo: f64,
    pub hi: f64,
    pub l: f64,
    pub r: f64,
}

impl Region {
    fn cross(&self) -> f64 {
        if self.l == 0.0 || self.r == 0.0 {
            0.0
        } else {
            self.l * self.r * (-(self.hi - self.lo)).exp()
        }
    }

    fn el(&self, y: f64) -> f64 {
        if self.l == 0.0 {
            0.0
        } else {
            self.l * (-(y - self.lo)).exp()
        }
    }

    fn er(&self, y: f64) -> f64 {
        if self.r == 0.0 {
            0.0
        } else {
            self.r * (y - self.hi).exp()
        }
    }

    pub fn u(&self, y: f64) -> f64 {
        self.el(y) + self.er(y)
    }

    pub fn ux(&self, y: f64) -> f64 {
        self.er(y) - self.el(y)
    }

    /// Interior zero of `u_x` if any.
    pub fn ux_zero(&self) -> Option<f64> {
        self.zero_of(1.0)
    }

    /// Interior zero of `u` if any.
    pub fn u_zero(&self) -> Option<f64> {
        self.zero_of(-1.0)
    }

    // Solves L e^{-(y-lo)} = sign·R e^{y-hi}.
    fn zero_of(&self, sign: f64) -> Option<f64> {
        if self.l == 0.0 || self.r == 0.0 {
            return None;
        }
        let ratio = sign * self.l / self.r;
        if ratio <= 0.0 {
            return None;
        }
        let y = 0.5 * (ratio.ln() + self.lo + self.hi);
        (y > self.lo && y < self.hi).then_some(y)
    }

    /// ∫_a^b of `L² e^{-2(y-lo)} + R² e^{2(y-hi)}` and of the constant cross
    /// term `L R e^{-(hi-lo)}`.
    fn square_parts(&self, a: f64, b: f64) -> (f64, f64) {
        let sq = int_exp(self.l * self.l, -2.0, self.lo, a, b) + int_exp(self.r * self.r, 2.0, self.hi, a, b);
        let cross = if b > a { self.cross() * (b - a) } else { 0.0 };
        (sq, cross)
    }

    fn integrate(&self, dens: Density, a: f64, b: f64) -> f64 {
        let a = a.max(self.lo);
        let b = b.min(self.hi);
        if !(b > a) {
            return 0.0;
        }
        match dens {
            Density::Energy => 2.0 * self.square_parts(a, b).0,
            Density::USq => {
                let (sq, cross) = self.square_parts(a, b);
                sq + 2.0 * cross
            }
            Density::UxSq => {
                let (sq, cross) = self.square_parts(a, b);
                (sq - 2.0 * cross).max(0.0)
            }
            Density::UxPosSq | Density::UxNegSq => {
                let want_pos = dens == Density::UxPosSq;
                let mut cuts = vec![a];
                if let Some(z) = self.ux_zero() {
                    if z > a && z < b {
                        cuts.push(z);
                    }
                }
                cuts.push(b);
                cuts.windows(2)
                    .map(|w| {
                        let probe = sample_point(w[0], w[1]);
                        let positive = self.ux(probe) > 0.0;
                        if positive == want_pos {
                            let (sq, cross) = self.square_parts(w[0], w[1]);
                            (sq - 2.0 * cross).max(0.0)
                        } else {
                            0.0
                        }
                    })
                    .sum()
            }
        }
    }
}

fn sample_point(a: f64, b: f64) -> f64 {
    match (a.is_finite(), b.is_finite()) {
        (true, true) => 0.5 * (a + b),
        (false, true) => b - 1.0,
        (true, false) => a + 1.0,
        (false, false) => 0.0,
    }
}

/// Region decomposition of a peakon state.
#[derive(Debug, Clone)]
pub struct Field {
    regions: Vec<Region>,
}

impl Field {
    pub fn new(state: &PeakonState) -> Self {
        let (q, p) = (&state.q, &state.p);
        let n = q.len();
        if n == 0 {
            return Self { regions: Vec::new() };
        }
        // left[k] = Σ_{i<=k} p_i e^{q_i - q_k}, right[k] = Σ_{i>=k} p_i e^{q_k - q_i}
        let mut left = vec![0.0; n];
        let mut right = vec![0.0; n];
        left[0] = p[0];
        for k in 1..n {
            left[k] = left[k - 1] * (-(q[k] - q[k - 1])).exp() + p[k];
        }
        right[n - 1] = p[n - 1];
        for k in (0..n - 1).rev() {
            right[k] = right[k + 1] * (-(q[k + 1] - q[k])).exp() + p[k];
        }
        let mut regions = Vec::with_capacity(n + 1);
        regions.push(Region {
            lo: f64::NEG_INFINITY,
            hi: q[0],
            l: 0.0,
            r: right[0],
        });
        for k in 0..n - 1 {
            regions.push(Region {
                lo: q[k],
                hi: q[k + 1],
                l: left[k],
                r: right[k + 1],
            });
        }
        regions.push(Region {
            lo: q[n - 1],
            hi: f64::INFINITY,
            l: left[n - 1],
            r: 0.0,
        });
        Self { regions }
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn is_zero(&self) -> bool {
        self.regions.is_empty()
    }

    /// Region containing `x`; peaks belong to the region on their right.
    pub fn region_at(&self, x: f64) -> Option<&Region> {
        if self.regions.is_empty() {
            return None;
        }
        let idx = self.regions.partition_point(|r| r.hi <= x);
        self.regions.get(idx.min(self.regions.len() - 1))
    }

    /// `(P, P_x)` at `x`.
    pub fn p_px(&self, x: f64) -> (f64, f64) {
        let mut left = 0.0;
        let mut right = 0.0;
        for reg in &self.regions {
            let c_l = 1.5 * reg.l * reg.l;
            let c_r = 1.5 * reg.r * reg.r;
            let c_x = reg.cross();
            // y < x: kernel e^{y - x}
            let (a, b) = (reg.lo, reg.hi.min(x));
            if b > a {
                left += int_exp2(c_l, -2.0, reg.lo, 1.0, x, a, b)
                    + int_exp2(c_r, 2.0, reg.hi, 1.0, x, a, b)
                    + int_exp2(c_x, 0.0, 0.0, 1.0, x, a, b);
            }
            // y > x: kernel e^{x - y}
            let (a, b) = (reg.lo.max(x), reg.hi);
            if b > a {
                right += int_exp2(c_l, -2.0, reg.lo, -1.0, x, a, b)
                    + int_exp2(c_r, 2.0, reg.hi, -1.0, x, a, b)
                    + int_exp2(c_x, 0.0, 0.0, -1.0, x, a, b);
            }
        }
        (0.5 * (left + right), 0.5 * (right - left))
    }

    /// Closed-form integral of a density over `[a, b]` (infinite ends allowed).
    pub fn integrate(&self, dens: Density, a: f64, b: f64) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        self.regions.iter().map(|r| r.integrate(dens, a, b)).sum()
    }

    /// `∫ w(x) ρ(x) dx` for a compactly supported piecewise-linear weight.
    /// Gauss–Legendre on pieces cut at peaks, slope zeros and weight
    /// breakpoints, each at most 0.25 wide.
    pub fn integrate_weighted(&self, dens: Density, weight: &PiecewiseLinear) -> f64 {
        let mut total = 0.0;
        for seg in weight.xs.windows(2).zip(weight.ys.windows(2)) {
            let ((x0, x1), (w0, w1)) = ((seg.0[0], seg.0[1]), (seg.1[0], seg.1[1]));
            if !(x1 > x0) || (w0 == 0.0 && w1 == 0.0) {
                continue;
            }
            let slope = (w1 - w0) / (x1 - x0);
            for reg in &self.regions {
                let (a, b) = (reg.lo.max(x0), reg.hi.min(x1));
                if !(b > a) {
                    continue;
                }
                let mut cuts = vec![a];
                if let Some(z) = reg.ux_zero() {
                    if z > a && z < b {
                        cuts.push(z);
                    }
                }
                cuts.push(b);
                for w in cuts.windows(2) {
                    let (c, d) = (w[0], w[1]);
                    let pieces = ((d - c) / 0.25).ceil().max(1.0) as usize;
                    let h = (d - c) / pieces as f64;
                    for k in 0..pieces {
                        let lo = c + h * k as f64;
                        let hi = if k + 1 == pieces { d } else { lo + h };
                        total += gl8_integrate(lo, hi, |y| (w0 + slope * (y - x0)) * density(reg, dens, y));
                    }
                }
            }
        }
        total
    }

    /// Extreme one-sided slopes over the line: `(min u_x, max u_x)`.
    pub fn slope_range(&self) -> (f64, f64) {
        let mut lo = 0.0f64;
        let mut hi = 0.0f64;
        for reg in &self.regions {
            let mut probe = |v: f64| {
                lo = lo.min(v);
                hi = hi.max(v);
            };
            if reg.lo.is_finite() {
                probe(reg.ux(reg.lo));
            }
            if reg.hi.is_finite() {
                probe(reg.ux(reg.hi));
            }
            if let Some(z) = reg.u_zero() {
                probe(reg.ux(z));
            }
        }
        (lo, hi)
    }
}

fn density(reg: &Region, dens: Density, y: f64) -> f64 {
    let u = reg.u(y);
    let ux = reg.ux(y);
    match dens {
        Density::Energy => u * u + ux * ux,
        Density::USq => u * u,
        Density::UxSq => ux * ux,
        Density::UxPosSq => ux.max(0.0).powi(2),
        Density::UxNegSq => (-ux).max(0.0).powi(2),
    }
}

/// Piecewise-linear function through `(xs[i], ys[i])`, zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if n == 0 || x < self.xs[0] || x > self.xs[n - 1] {
            return 0.0;
        }
        let i = self.xs.partition_point(|v| *v <= x).clamp(1, n - 1);
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        if x1 == x0 {
            return self.ys[i];
        }
        self.ys[i - 1] + (self.ys[i] - self.ys[i - 1]) * (x - x0) / (x1 - x0)
    }
}

pub fn eval_p_px(state: &PeakonState, x: f64) -> (f64, f64) {
    Field::new(state).p_px(x)
}

pub fn eval_point(state: &PeakonState, x: f64) -> FieldPoint {
    let (p, px) = eval_p_px(state, x);
    FieldPoint {
        u: eval_u(state, x),
        ux: eval_ux(state, x),
        p,
        px,
    }
}

/// `2 Σ_{i,j} p_i p_j e^{-|q_i - q_j|}`, written so that it keeps full
/// relative accuracy when peaks of opposite sign nearly coincide.
pub fn energy_total(state: &PeakonState) -> f64 {
    let (q, p) = (&state.q, &state.p);
    let sum: f64 = p.iter().sum();
    let mut cross = 0.0;
    for i in 0..q.len() {
        for j in i + 1..q.len() {
            cross += p[i] * p[j] * (-(q[j] - q[i]).abs()).exp_m1();
        }
    }
    (2.0 * (sum * sum + 2.0 * cross)).max(0.0)
}

/// Energy split over `[a, b]` (infinite ends allowed).
pub fn energy(state: &PeakonState, a: f64, b: f64) -> EnergyReport {
    let f = Field::new(state);
    let total = energy_total(state);
    if !(b > a) {
        return EnergyReport {
            total,
            ..Default::default()
        };
    }
    EnergyReport {
        total,
        on_interval: f.integrate(Density::Energy, a, b),
        u_sq: f.integrate(Density::USq, a, b),
        ux_sq: f.integrate(Density::UxSq, a, b),
        neg_part: f.integrate(Density::UxNegSq, a, b),
        pos_part: f.integrate(Density::UxPosSq, a, b),
    }
}

/// `(min u_x, max u_x)` over the line, including one-sided limits at peaks.
pub fn slope_range(state: &PeakonState) -> (f64, f64) {
    Field::new(state).slope_range()
}

pub fn sup_abs_ux(state: &PeakonState) -> f64 {
    let (lo, hi) = slope_range(state);
    lo.abs().max(hi.abs())
}

/// `sup |u|`, attained at a peak.
pub fn sup_abs_u(state: &PeakonState) -> f64 {
    state.q.iter().map(|&q| eval_u(state, q).abs()).fold(0.0, f64::max)
}
