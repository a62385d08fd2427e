//! Limits of sampled sequences: polynomial extrapolation to zero and
//! least-squares fits in the step variable.

use serde::{Deserialize, Serialize};

/// Value of the interpolating polynomial through `(h_i, f_i)` at `h = 0`
/// (Neville's scheme).
pub fn neville_at_zero(h: &[f64], f: &[f64]) -> f64 {
    assert_eq!(h.len(), f.len());
    assert!(!h.is_empty());
    let mut p = f.to_vec();
    let n = h.len();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (h[i + m] * p[i] - h[i] * p[i + 1]) / (h[i + m] - h[i]);
        }
    }
    p[0]
}

/// Sequence of level estimates: the extrapolant through each consecutive
/// window of `order + 1` points, plus the spread of the last two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub value: f64,
    pub error: f64,
    pub levels: Vec<f64>,
}

pub fn richardson(h: &[f64], f: &[f64], order: usize) -> Extrapolation {
    let w = order + 1;
    assert!(h.len() >= w, "need at least {w} samples");
    let levels: Vec<f64> = (0..=h.len() - w)
        .map(|i| neville_at_zero(&h[i..i + w], &f[i..i + w]))
        .collect();
    let value = *levels.last().unwrap();
    let error = if levels.len() >= 2 {
        (value - levels[levels.len() - 2]).abs()
    } else {
        0.0
    };
    Extrapolation { value, error, levels }
}

/// Least-squares line `f ≈ a + b h` through the points.
pub fn linear_fit(h: &[f64], f: &[f64]) -> (f64, f64, f64) {
    let n = h.len() as f64;
    let mh = h.iter().sum::<f64>() / n;
    let mf = f.iter().sum::<f64>() / n;
    let sxx: f64 = h.iter().map(|x| (x - mh).powi(2)).sum();
    let sxy: f64 = h.iter().zip(f).map(|(x, y)| (x - mh) * (y - mf)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = mf - b * mh;
    let resid = h
        .iter()
        .zip(f)
        .map(|(x, y)| (y - a - b * x).abs())
        .fold(0.0, f64::max);
    (a, b, resid)
}

/// One-sided limit `h -> 0⁺` from samples ordered by decreasing `h`:
/// a linear fit through the last three points. The error bar combines the fit
/// residual with the distance to the two-point Richardson value.
pub fn limit_linear(h: &[f64], f: &[f64]) -> Extrapolation {
    let n = h.len();
    assert!(n >= 2);
    if n == 2 {
        let v = neville_at_zero(h, f);
        return Extrapolation {
            value: v,
            error: (v - f[1]).abs(),
            levels: vec![v],
        };
    }
    let levels: Vec<f64> = (0..=n - 3).map(|i| linear_fit(&h[i..i + 3], &f[i..i + 3]).0).collect();
    let (a, _, resid) = linear_fit(&h[n - 3..], &f[n - 3..]);
    let two_point = neville_at_zero(&h[n - 2..], &f[n - 2..]);
    let error = resid + (a - two_point).abs();
    Extrapolation {
        value: a,
        error,
        levels,
    }
}
