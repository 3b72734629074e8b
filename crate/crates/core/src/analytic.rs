//! Closed-form regret of best-only pricing curves and its relaxations.
//!
//! Notation: values `x_1 >= ... >= x_n`, earliest acceptance times
//! `θ_i = g(x_i)`. The exact regret is
//!
//! ```text
//! x_1 θ_1 + Σ_{i=2..n} (x_1 - x_i) [ (1 - θ_i)^i / i - Σ_{k=i+1..n} (1/(k-1) - 1/k) (1 - θ_k)^k ]
//! ```
//!
//! `R_q` keeps the inner cross-terms only for `i < q`, and `R̃_q` further fixes
//! `x_q = x_{q+1} = ...` and lets `n -> ∞`, which collapses both infinite
//! tails into logarithms.

use serde::{Deserialize, Serialize};

use crate::certifier::Box5;
use crate::error::{Error, Result};
use crate::model::{Instance, RegretReport};
use crate::policies::ThresholdCurve;

/// The exponential rate the Lipschitz coefficients were derived for.
pub const CERTIFIED_C: f64 = 0.472;

/// Per-coordinate slopes bounding how fast `R̃_5` can grow when `x_1`
/// decreases or `x_2..x_5` increase, valid for `f(t) = exp(-t/0.472)`.
pub const LIPSCHITZ_COEFFS: [f64; 5] = [0.472, 0.444, 0.195, 0.128, 0.294];

/// Values paired with their earliest acceptance times.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaVector {
    pub values: Vec<f64>,
    pub thetas: Vec<f64>,
}

impl ThetaVector {
    pub fn new(values: Vec<f64>, thetas: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInstance);
        }
        if values.len() != thetas.len() {
            return Err(Error::OrderViolation);
        }
        let values_sorted = values.windows(2).all(|w| w[0] >= w[1]);
        let thetas_sorted = thetas.windows(2).all(|w| w[0] <= w[1]);
        let in_range = thetas.iter().all(|t| (0.0..=1.0).contains(t));
        if !(values_sorted && thetas_sorted && in_range) {
            return Err(Error::OrderViolation);
        }
        Ok(Self { values, thetas })
    }

    /// `θ_i = g(x_i)`. Every value must clear `f(1)`.
    pub fn from_curve(curve: &ThresholdCurve, values: &[f64]) -> Result<Self> {
        let floor = curve.floor();
        let thetas = values
            .iter()
            .map(|&x| if x < floor { Err(Error::PreprocessRequired { value: x, floor }) } else { curve.inverse(x) })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { values: values.to_vec(), thetas })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `Σ_{k=i+1..n} (1/(k-1) - 1/k)(1-θ_k)^k` for every 1-based `i`, stored at
/// `i - 1`.
fn cross_suffix(thetas: &[f64]) -> Vec<f64> {
    let n = thetas.len();
    let mut suffix = vec![0.0; n];
    let mut acc = 0.0;
    for i in (1..n).rev() {
        let k = i + 1;
        let kf = k as f64;
        acc += (1.0 / (kf - 1.0) - 1.0 / kf) * (1.0 - thetas[k - 1]).powi(k as i32);
        suffix[i - 1] = acc;
    }
    suffix
}

/// Exact regret from values and acceptance times; `q` limits the cross-terms
/// to `i < q` (pass `n` for the exact value).
fn relaxed_from_thetas(tv: &ThetaVector, q: usize) -> f64 {
    let x = &tv.values;
    let th = &tv.thetas;
    let x1 = x[0];
    let suffix = cross_suffix(th);
    let mut r = x1 * th[0];
    for i in 2..=x.len() {
        let gap = x1 - x[i - 1];
        if gap == 0.0 {
            continue;
        }
        r += gap * (1.0 - th[i - 1]).powi(i as i32) / i as f64;
        if i < q {
            r -= gap * suffix[i - 1];
        }
    }
    r
}

/// Exact regret for given acceptance times.
pub fn regret_from_thetas(tv: &ThetaVector) -> f64 {
    relaxed_from_thetas(tv, tv.len())
}

/// Exact regret of the best-only pricing curve. All values must be at least
/// `f(1)`; see [`bopc_regret`] for arbitrary instances.
pub fn bopc_exact_regret(curve: &ThresholdCurve, inst: &Instance) -> Result<RegretReport> {
    curve.check_best_only_assumptions()?;
    let tv = ThetaVector::from_curve(curve, inst.values())?;
    Ok(RegretReport::exact(regret_from_thetas(&tv)))
}

/// Exact regret for any instance: values below `f(1)` are never accepted and
/// never block a larger value, so they are dropped first.
pub fn bopc_regret(curve: &ThresholdCurve, inst: &Instance) -> Result<RegretReport> {
    curve.check_best_only_assumptions()?;
    let floor = curve.floor();
    let kept: Vec<f64> = inst.values().iter().copied().filter(|&x| x >= floor).collect();
    if kept.is_empty() {
        return Ok(RegretReport::exact(inst.best()));
    }
    let tv = ThetaVector::from_curve(curve, &kept)?;
    Ok(RegretReport::exact(regret_from_thetas(&tv)))
}

/// Regret of the pricing curve on a single value: it is taken iff it arrives
/// after `g(x)`, so the regret is `x · g(x)` (or `x` below `f(1)`).
pub fn pricing_single_value_regret(curve: &ThresholdCurve, x: f64) -> Result<RegretReport> {
    curve.validate()?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::ValueOutOfRange { index: 0, value: x });
    }
    Ok(RegretReport::exact(x * curve.inverse_unchecked(x).min(1.0)))
}

/// `R_q`: the exact regret with the cross-terms for `i >= q` dropped.
pub fn relaxed_regret_rq(curve: &ThresholdCurve, inst: &Instance, q: usize) -> Result<f64> {
    curve.check_best_only_assumptions()?;
    let n = inst.len();
    if q < 2 || q > n {
        return Err(Error::InvalidOrder { q, n });
    }
    let tv = ThetaVector::from_curve(curve, inst.values())?;
    Ok(relaxed_from_thetas(&tv, q))
}

/// `R̃_q` for head values `x_1..x_q` with the tail equalised at `x_q`.
pub fn relaxed_regret_rtilde(curve: &ThresholdCurve, head: &[f64], q: usize) -> Result<f64> {
    curve.check_best_only_assumptions()?;
    if q < 2 || head.len() != q {
        return Err(Error::InvalidOrder { q, n: head.len() });
    }
    if head.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::OrderViolation);
    }
    let tv = ThetaVector::from_curve(curve, head)?;
    rtilde_from_thetas(&tv.values, &tv.thetas)
}

/// `R̃_q` with `q = values.len()`, evaluated in closed form using
/// `Σ_{i>=1} z^i / i = -ln(1-z)` and `Σ_{k>=2} z^k / (k(k-1)) = (1-z)ln(1-z) + z`.
pub fn rtilde_from_thetas(values: &[f64], thetas: &[f64]) -> Result<f64> {
    let q = values.len();
    debug_assert!(q >= 2 && thetas.len() == q);
    let theta_q = thetas[q - 1];
    if theta_q <= 0.0 {
        return Err(Error::SeriesDomain);
    }
    let x1 = values[0];
    let z = 1.0 - theta_q;

    let mut head = x1 * thetas[0];
    let mut gap_sum = 0.0;
    for i in 2..q {
        let gap = x1 - values[i - 1];
        gap_sum += gap;
        let mut term = (1.0 - thetas[i - 1]).powi(i as i32) / i as f64;
        for k in (i + 1)..q {
            let kf = k as f64;
            term -= (1.0 - thetas[k - 1]).powi(k as i32) / (kf * (kf - 1.0));
        }
        head += gap * term;
    }

    // Σ_{i>=q} z^i / i and Σ_{k>=q} z^k / (k(k-1)).
    let mut tail_harmonic = -theta_q.ln();
    let mut tail_pairs = theta_q * theta_q.ln() + z;
    let mut zp = 1.0;
    for i in 1..q {
        zp *= z;
        let fi = i as f64;
        tail_harmonic -= zp / fi;
        if i >= 2 {
            tail_pairs -= zp / (fi * (fi - 1.0));
        }
    }

    Ok(head + (x1 - values[q - 1]) * tail_harmonic - gap_sum * tail_pairs)
}

/// `R̃_5` for `f(t) = exp(-t/c)` without allocation; `x` must be sorted.
#[inline]
pub fn rtilde5_exponential(c: f64, x: &[f64; 5]) -> Result<f64> {
    let thetas = x.map(|v| (-c * v.ln()).clamp(0.0, 1.0));
    rtilde_from_thetas(x, &thetas)
}

/// Per-coordinate pieces of `R̃_5` for `f(t) = exp(-t/c)`: `[x, p, q]` where
/// `p`, `q` depend on the coordinate's position. Combining five of these
/// with [`rtilde5_combine`] is pure arithmetic.
#[inline]
pub fn rtilde5_terms(dim: usize, c: f64, x: f64) -> [f64; 3] {
    let th = (-c * x.ln()).clamp(0.0, 1.0);
    let z = 1.0 - th;
    match dim {
        0 => [x, x * th, 0.0],
        1 => [x, z * z / 2.0, 0.0],
        2 => [x, z.powi(3) / 3.0, z.powi(3) / 6.0],
        3 => [x, z.powi(4) / 4.0, z.powi(4) / 12.0],
        _ => {
            if th <= 0.0 {
                return [x, f64::INFINITY, 0.0];
            }
            let (z2, z3, z4) = (z * z, z * z * z, z * z * z * z);
            let ln = th.ln();
            let harmonic = -ln - z - z2 / 2.0 - z3 / 3.0 - z4 / 4.0;
            let pairs = th * ln + z - z2 / 2.0 - z3 / 6.0 - z4 / 12.0;
            [x, harmonic, pairs]
        }
    }
}

#[inline]
pub fn rtilde5_combine(t: &[[f64; 3]; 5]) -> f64 {
    let x1 = t[0][0];
    let (g2, g3, g4, g5) = (x1 - t[1][0], x1 - t[2][0], x1 - t[3][0], x1 - t[4][0]);
    let head = t[0][1] + g2 * (t[1][1] - t[2][2] - t[3][2]) + g3 * (t[2][1] - t[3][2]) + g4 * t[3][1];
    let tail = if g5 == 0.0 { 0.0 } else { g5 * t[4][1] };
    head + tail - (g2 + g3 + g4) * t[4][2]
}

/// Upper bound on `sup R̃_5` over `bx` for `f(t) = exp(-t/0.472)`: the value at
/// the corner `(r_1, l_2, l_3, l_4, l_5)` plus the Lipschitz slack.
pub fn lipschitz_box_bound(bx: &Box5) -> Result<f64> {
    let floor = (-1.0 / CERTIFIED_C).exp();
    let eps = 1e-12;
    for i in 0..5 {
        let (l, r) = (bx.lows[i], bx.highs[i]);
        if !(l <= r && l >= floor - eps && r <= 1.0 + eps) {
            return Err(Error::BoxOutOfDomain);
        }
    }
    let corner = bx.corner();
    let value = match rtilde5_exponential(CERTIFIED_C, &corner) {
        Ok(v) => v,
        Err(Error::SeriesDomain) => return Ok(f64::INFINITY),
        Err(e) => return Err(e),
    };
    Ok(value + lipschitz_slack(bx))
}

#[inline]
fn lipschitz_slack(bx: &Box5) -> f64 {
    (0..5).map(|i| LIPSCHITZ_COEFFS[i] * (bx.highs[i] - bx.lows[i])).sum()
}

/// The four nested hard instances `(a,b,c,d)`, `(b,c,d)`, `(c,d)`, `(d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundInstance {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for LowerBoundInstance {
    fn default() -> Self {
        Self { a: 1.0, b: 0.61, c: 0.48, d: 0.44 }
    }
}

impl LowerBoundInstance {
    /// Regret of the best-only curve with acceptance times `thetas` on each of
    /// the four instances.
    pub fn regrets(&self, thetas: [f64; 4]) -> Result<[f64; 4]> {
        let [ta, tb, tc, td] = thetas;
        if !(0.0 <= ta && ta <= tb && tb <= tc && tc <= td && td <= 1.0) {
            return Err(Error::OrderViolation);
        }
        let vals = [self.a, self.b, self.c, self.d];
        if vals.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::OrderViolation);
        }
        let mut out = [0.0; 4];
        for (start, slot) in out.iter_mut().enumerate() {
            *slot = regret_small(&vals[start..], &thetas[start..]);
        }
        Ok(out)
    }

    pub fn objective(&self, thetas: [f64; 4]) -> Result<f64> {
        Ok(self.regrets(thetas)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
    }
}

/// Exact regret for a short instance, without allocation.
#[inline]
fn regret_small(x: &[f64], th: &[f64]) -> f64 {
    let n = x.len();
    let x1 = x[0];
    let mut r = x1 * th[0];
    for i in 2..=n {
        let mut term = (1.0 - th[i - 1]).powi(i as i32) / i as f64;
        for k in (i + 1)..=n {
            let kf = k as f64;
            term -= (1.0 - th[k - 1]).powi(k as i32) / (kf * (kf - 1.0));
        }
        r += (x1 - x[i - 1]) * term;
    }
    r
}

/// Worst regret over the four default instances for the given acceptance times.
pub fn bopc_lowerbound_objective(thetas: [f64; 4]) -> Result<f64> {
    LowerBoundInstance::default().objective(thetas)
}
