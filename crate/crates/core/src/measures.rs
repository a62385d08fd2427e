//! Measures of energy accretion (μ⁺) and dissipation (μ⁻) at a base time,
//! estimated both with hat test functions and through thick pushforwards.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characteristics::{thick_pushforward_at, ExtremalOptions, SetSpec};
use crate::error::{Error, Result};
use crate::extrapolate::{limit_linear, Extrapolation};
use crate::field::{Density, Field, PiecewiseLinear};
use crate::peakon::PeakonState;
use crate::solution::{Solution, TimeReversed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    TestFunction,
    Pushforward,
}

#[derive(Debug, Clone)]
pub struct MeasureOptions {
    /// Decreasing gaps `|t - t0|` of the one-sided time sequence; scaled
    /// down as a whole when the first one reaches too close to a singular
    /// time.
    pub gaps: Vec<f64>,
    /// Hat widths, decreasing.
    pub eps: Vec<f64>,
    pub extremal: ExtremalOptions,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self {
            gaps: default_gaps(),
            eps: (0..=5).map(|k| 0.1 * 0.5f64.powi(k)).collect(),
            extremal: ExtremalOptions::default(),
        }
    }
}

/// `0.1 · 2^{-k}`, `k = 0..=10`.
pub fn default_gaps() -> Vec<f64> {
    (0..=10).map(|k| 0.1 * 0.5f64.powi(k)).collect()
}

/// Threshold below which an estimate counts as zero.
pub fn vanishing_threshold(extrapolation_error: f64) -> f64 {
    1e-4f64.max(10.0 * extrapolation_error)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub t0: f64,
    #[serde(rename = "B")]
    pub set: String,
    pub value: f64,
    pub method: Method,
    pub sign: Sign,
    pub t_sequence: Vec<f64>,
    pub extrapolation_error: f64,
    /// The one-sided limit of the integral before subtracting the base term.
    pub limit: f64,
    /// Integral at the base time.
    pub base: f64,
    pub reliable: bool,
    pub vanishing: bool,
}

impl MeasureEstimate {
    pub const CSV_HEADER: &'static str = "t0,B,sign,method,value,extrapolation_error,limit,base,reliable,vanishing";

    pub fn csv_row(&self) -> String {
        format!(
            "{:?},\"{}\",{},{},{:?},{:?},{:?},{:?},{},{}",
            self.t0,
            self.set,
            match self.sign {
                Sign::Plus => "plus",
                Sign::Minus => "minus",
            },
            match self.method {
                Method::TestFunction => "test_function",
                Method::Pushforward => "pushforward",
            },
            self.value,
            self.extrapolation_error,
            self.limit,
            self.base,
            self.reliable,
            self.vanishing
        )
    }
}

pub fn write_estimates_csv<W: Write>(mut w: W, estimates: &[MeasureEstimate]) -> std::io::Result<()> {
    writeln!(w, "{}", MeasureEstimate::CSV_HEADER)?;
    for e in estimates {
        writeln!(w, "{}", e.csv_row())?;
    }
    Ok(())
}

/// Gaps and times of the one-sided sequence after `t0`, shrunk to stay
/// clear of the next singular time and inside the time span.
fn time_sequence(source: &dyn Solution, t0: f64, opts: &MeasureOptions) -> Result<(Vec<f64>, Vec<f64>)> {
    let (a, b) = source.time_span();
    if t0 < a || t0 >= b {
        return Err(Error::Domain { t: t0, t_break: b });
    }
    if opts.gaps.len() < 3 || opts.gaps.windows(2).any(|w| !(w[1] < w[0]) || w[1] <= 0.0) {
        return Err(Error::InvalidArgument("need at least 3 decreasing positive time gaps".into()));
    }
    let mut limit = opts.gaps[0];
    if let Some(tb) = source.next_breaking_after(t0) {
        limit = limit.min(0.5 * (tb - t0));
    }
    if b.is_finite() {
        limit = limit.min(0.5 * (b - t0));
    }
    let scale = limit / opts.gaps[0];
    let gaps: Vec<f64> = opts.gaps.iter().map(|g| g * scale).collect();
    let times = gaps.iter().map(|g| t0 + g).collect();
    Ok((gaps, times))
}

/// Plateau `[α-ε, β+ε]`, linear ramps down to zero at `α-2ε` and `β+2ε`.
pub fn hat(alpha: f64, beta: f64, eps: f64) -> PiecewiseLinear {
    PiecewiseLinear {
        xs: vec![alpha - 2.0 * eps, alpha - eps, beta + eps, beta + 2.0 * eps],
        ys: vec![0.0, 1.0, 1.0, 0.0],
    }
}

// Hull pieces whose hats would overlap at width eps are joined.
fn hat_pieces(set: &SetSpec, eps: f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (a, b) in set.hull_pieces() {
        match out.last_mut() {
            Some(last) if a - 2.0 * eps <= last.1 + 2.0 * eps => last.1 = b,
            _ => out.push((a, b)),
        }
    }
    out
}

fn finish(
    t0: f64,
    set: &SetSpec,
    method: Method,
    sign: Sign,
    times: Vec<f64>,
    limit: Extrapolation,
    base: f64,
    extra_error: f64,
) -> MeasureEstimate {
    let value = limit.value - base;
    let error = limit.error + extra_error;
    MeasureEstimate {
        t0,
        set: set.to_string(),
        value,
        method,
        sign,
        t_sequence: times,
        extrapolation_error: error,
        limit: limit.value,
        base,
        reliable: error <= 0.01 * value.abs().max(0.01),
        vanishing: value.abs() < vanishing_threshold(error),
    }
}

/// μ⁺(t0, B) from hat test functions: for each width ε the limit
/// `t -> t0⁺` of `∫φ^ε (u_x⁺)²(t)` minus `∫φ^ε (u_x⁺)²(t0)`, then `ε -> 0`.
pub fn mu_plus_testfn(source: &dyn Solution, t0: f64, set: &SetSpec, opts: &MeasureOptions) -> Result<MeasureEstimate> {
    let (gaps, times) = time_sequence(source, t0, opts)?;
    if opts.eps.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 hat widths".into()));
    }
    let hats: Vec<Vec<PiecewiseLinear>> = opts
        .eps
        .iter()
        .map(|&e| hat_pieces(set, e).into_iter().map(|(a, b)| hat(a, b, e)).collect())
        .collect();
    let weighted = |state: &PeakonState| -> Vec<f64> {
        let f = Field::new(state);
        hats.iter()
            .map(|hs| hs.iter().map(|h| f.integrate_weighted(Density::UxPosSq, h)).sum())
            .collect()
    };
    let base_state = source.state_at(t0)?;
    let base = weighted(&base_state);
    let rows: Vec<Vec<f64>> = times
        .par_iter()
        .map(|&t| source.state_at(t).map(|s| weighted(&s)))
        .collect::<Result<_>>()?;

    let mut diffs = Vec::with_capacity(opts.eps.len());
    let mut t_err = 0.0f64;
    let mut limits = Vec::with_capacity(opts.eps.len());
    for j in 0..opts.eps.len() {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let lim = limit_linear(&gaps, &col);
        t_err = t_err.max(lim.error);
        diffs.push(lim.value - base[j]);
        limits.push(lim.value);
    }
    let eps_limit = limit_linear(&opts.eps, &diffs);
    let limit_at_eps = limit_linear(&opts.eps, &limits);
    let base_limit = limit_at_eps.value - eps_limit.value;
    let limit = Extrapolation {
        value: limit_at_eps.value,
        error: eps_limit.error,
        levels: eps_limit.levels,
    };
    Ok(finish(t0, set, Method::TestFunction, Sign::Plus, times, limit, base_limit, t_err))
}

/// μ⁺(t0, B) as the limit of `∫_{B(t)} (u_x⁺)²(t)` over the thick
/// pushforward minus `∫_B (u_x⁺)²(t0)`.
pub fn mu_plus_pushforward(
    source: &dyn Solution,
    t0: f64,
    set: &SetSpec,
    opts: &MeasureOptions,
) -> Result<MeasureEstimate> {
    let (gaps, times) = time_sequence(source, t0, opts)?;
    // integrate forward with samples ordered away from t0
    let asc: Vec<f64> = times.iter().rev().copied().collect();
    let pfs = thick_pushforward_at(source, t0, set, &asc, &opts.extremal, false)?;
    if let Some(pf) = pfs.iter().find(|p| p.truncated) {
        return Err(Error::Truncated {
            t_stop: pf.t,
            t_break: source.next_breaking_after(t0).unwrap_or(f64::NAN),
        });
    }
    let mut values: Vec<f64> = pfs
        .par_iter()
        .map(|pf| {
            let f = Field::new(&source.state_at(pf.t)?);
            Ok(pf.pieces.iter().map(|&(a, b)| f.integrate(Density::UxPosSq, a, b)).sum())
        })
        .collect::<Result<_>>()?;
    values.reverse();
    let base_field = Field::new(&source.state_at(t0)?);
    let base: f64 = set
        .hull_pieces()
        .iter()
        .map(|&(a, b)| base_field.integrate(Density::UxPosSq, a, b))
        .sum();
    let limit = limit_linear(&gaps, &values);
    Ok(finish(t0, set, Method::Pushforward, Sign::Plus, times, limit, base, 0.0))
}

pub fn mu_plus(source: &dyn Solution, t0: f64, set: &SetSpec, method: Method, opts: &MeasureOptions) -> Result<MeasureEstimate> {
    match method {
        Method::TestFunction => mu_plus_testfn(source, t0, set, opts),
        Method::Pushforward => mu_plus_pushforward(source, t0, set, opts),
    }
}

/// μ⁻(t0, B) through the time reversal `v(s) = -u(t0 - s)`, which turns the
/// left limit of the negative-slope energy into a right limit of the
/// positive-slope energy: μ⁻_u(t0) = -μ⁺_v(0).
pub fn mu_minus(source: &dyn Solution, t0: f64, set: &SetSpec, method: Method, opts: &MeasureOptions) -> Result<MeasureEstimate> {
    let (a, _) = source.time_span();
    if !(t0 > a) {
        return Err(Error::InvalidArgument(format!("mu_minus needs t0 > {a}, got {t0}")));
    }
    let rev = TimeReversed::new(source, t0);
    let est = mu_plus(&rev, 0.0, set, method, opts)?;
    Ok(MeasureEstimate {
        t0,
        value: -est.value + 0.0,
        sign: Sign::Minus,
        t_sequence: est.t_sequence.iter().map(|s| t0 - s).collect(),
        limit: est.limit,
        base: est.base,
        ..est
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationProfile {
    pub x_star: f64,
    pub side: Sign,
    pub radii: Vec<f64>,
    pub masses: Vec<f64>,
    pub t_sequence: Vec<f64>,
}

impl ConcentrationProfile {
    /// `mass(r_{k+1}) / mass(r_k)` over the last three radii (worst case).
    pub fn plateau_ratio(&self) -> f64 {
        let n = self.masses.len();
        if n < 3 {
            return f64::NAN;
        }
        self.masses[n - 3..]
            .windows(2)
            .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "radius,mass")?;
        for (r, m) in self.radii.iter().zip(&self.masses) {
            writeln!(w, "{r:?},{m:?}")?;
        }
        Ok(())
    }
}

/// Radii `2^{-k}`, `k = 0..=20`.
pub fn default_radii() -> Vec<f64> {
    (0..=20).map(|k| 0.5f64.powi(k)).collect()
}

/// Masses of a slope density in balls around `x_star` at one instant.
pub fn concentration_snapshot(state: &PeakonState, x_star: f64, radii: &[f64], side: Sign) -> Vec<f64> {
    let f = Field::new(state);
    let dens = match side {
        Sign::Plus => Density::UxPosSq,
        Sign::Minus => Density::UxNegSq,
    };
    radii.iter().map(|r| f.integrate(dens, x_star - r, x_star + r)).collect()
}

/// Size of the jump of `∫_{|x-x*|<r} (u_x^±)²` at `t0` for each radius:
/// from the right for `Plus`, from the left for `Minus`.
pub fn concentration_profile(
    source: &dyn Solution,
    t0: f64,
    side: Sign,
    x_star: f64,
    radii: &[f64],
    opts: &MeasureOptions,
) -> Result<ConcentrationProfile> {
    if radii.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("radii must be strictly decreasing".into()));
    }
    let rev;
    let (src, base_t): (&dyn Solution, f64) = match side {
        Sign::Plus => (source, t0),
        Sign::Minus => {
            rev = TimeReversed::new(source, t0);
            (&rev, 0.0)
        }
    };
    let (gaps, times) = time_sequence(src, base_t, opts)?;
    // reversal turns u_x⁻ into v_x⁺
    let rows: Vec<Vec<f64>> = times
        .par_iter()
        .map(|&t| src.state_at(t).map(|s| concentration_snapshot(&s, x_star, radii, Sign::Plus)))
        .collect::<Result<_>>()?;
    let base = concentration_snapshot(&src.state_at(base_t)?, x_star, radii, Sign::Plus);
    let n = gaps.len();
    let masses = (0..radii.len())
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            (limit_linear(&gaps[n - 3..], &col[n - 3..]).value - base[j]).abs()
        })
        .collect();
    let t_sequence = match side {
        Sign::Plus => times,
        Sign::Minus => times.iter().map(|s| t0 - s).collect(),
    };
    Ok(ConcentrationProfile {
        x_star,
        side,
        radii: radii.to_vec(),
        masses,
        t_sequence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomScanEntry {
    pub t: f64,
    pub mu_plus: f64,
    pub mu_minus: Option<f64>,
    pub magnitude: f64,
    pub error: f64,
}

/// μ⁺ and μ⁻ (test-function method) of `set` at each grid time.
pub fn atom_time_scan(source: &dyn Solution, t_grid: &[f64], set: &SetSpec, opts: &MeasureOptions) -> Result<Vec<AtomScanEntry>> {
    let (start, _) = source.time_span();
    t_grid
        .par_iter()
        .map(|&t| {
            let plus = mu_plus_testfn(source, t, set, opts)?;
            let minus = if t > start {
                Some(mu_minus(source, t, set, Method::TestFunction, opts)?)
            } else {
                None
            };
            let mm = minus.as_ref().map(|m| m.value);
            Ok(AtomScanEntry {
                t,
                mu_plus: plus.value,
                mu_minus: mm,
                magnitude: plus.value.abs() + mm.map_or(0.0, f64::abs),
                error: plus.extrapolation_error + minus.map_or(0.0, |m| m.extrapolation_error),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::energy;
    use crate::peakon::ClosedFormPair;
    use crate::solution::{Continuation, PairSolution, ZeroSolution};

    fn pair() -> ClosedFormPair {
        ClosedFormPair::new(1.0, 0.75f64.ln()).unwrap()
    }

    fn conservative() -> PairSolution {
        PairSolution::new(pair(), Continuation::Conservative)
    }

    #[test]
    fn zero_solution_measures() {
        let opts = MeasureOptions::default();
        let set = SetSpec::closed(-1.0, 1.0);
        let p = mu_plus_pushforward(&ZeroSolution, 0.3, &set, &opts).unwrap();
        assert_eq!(p.value, 0.0);
        let m = mu_minus(&ZeroSolution, 0.3, &set, Method::TestFunction, &opts).unwrap();
        assert_eq!(m.value, 0.0);
        let c = concentration_profile(&ZeroSolution, 0.3, Sign::Plus, 0.0, &default_radii(), &opts).unwrap();
        assert!(c.masses.iter().all(|m| *m == 0.0));
    }

    #[test]
    fn hat_shape() {
        let h = hat(-1.0, 1.0, 0.1);
        assert_eq!(h.eval(0.0), 1.0);
        assert_eq!(h.eval(1.1), 1.0);
        assert!((h.eval(1.15) - 0.5).abs() < 1e-12);
        assert_eq!(h.eval(1.25), 0.0);
    }

    #[test]
    fn smooth_time_has_no_measure() {
        let sol = conservative();
        let opts = MeasureOptions::default();
        let t0 = 0.5 * pair().t_break;
        let set = SetSpec::closed(-1.0, 1.0);
        let p = mu_plus_testfn(&sol, t0, &set, &opts).unwrap();
        assert!(p.vanishing, "{p:?}");
        let m = mu_minus(&sol, t0, &set, Method::TestFunction, &opts).unwrap();
        assert!(m.vanishing, "{m:?}");
    }

    #[test]
    fn conservative_atom_at_breaking() {
        let sol = conservative();
        let opts = MeasureOptions::default();
        let tb = pair().t_break;
        let set = SetSpec::closed(-1.0, 1.0);
        let tf = mu_plus_testfn(&sol, tb, &set, &opts).unwrap();
        let pf = mu_plus_pushforward(&sol, tb, &set, &opts).unwrap();
        let h2 = pair().h0.powi(2);
        assert!((tf.value - h2).abs() < 0.01 * h2, "{tf:?}");
        assert!((pf.value - h2).abs() < 0.01 * h2, "{pf:?}");
        let mm = mu_minus(&sol, tb, &set, Method::Pushforward, &opts).unwrap();
        assert!((mm.value + h2).abs() < 0.01 * h2, "{mm:?}");
        // pre-breaking limit of the negative-slope energy
        let pre = energy(&sol.state_at(tb - 1e-6).unwrap(), -1.0, 1.0).neg_part;
        assert!((pre - h2).abs() < 1e-4);
    }

    #[test]
    fn dissipative_has_no_accretion() {
        let sol = PairSolution::new(pair(), Continuation::Dissipative);
        let opts = MeasureOptions::default();
        let tb = pair().t_break;
        let set = SetSpec::closed(-1.0, 1.0);
        let tf = mu_plus_testfn(&sol, tb, &set, &opts).unwrap();
        assert!(tf.value.abs() < 1e-12);
        let m = mu_minus(&sol, tb, &set, Method::TestFunction, &opts).unwrap();
        assert!((m.value + pair().h0.powi(2)).abs() < 2.5e-3);
    }

    #[test]
    fn profile_plateaus_at_atom() {
        let sol = conservative();
        let opts = MeasureOptions::default();
        let tb = pair().t_break;
        let c = concentration_profile(&sol, tb, Sign::Minus, 0.0, &default_radii(), &opts).unwrap();
        assert!(c.plateau_ratio() >= 0.9, "{:?}", c.masses);
        assert!(c.masses.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        let off = concentration_profile(&sol, tb, Sign::Minus, 3.0, &default_radii()[4..], &opts).unwrap();
        assert!(off.masses.iter().all(|m| *m < 1e-4), "{:?}", off.masses);
    }
}
