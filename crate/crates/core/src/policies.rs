//! Stopping rules: α-laws, pricing curves and best-only pricing curves, plus
//! the threshold-curve families they are parameterised by.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Arrival, History, Policy, PolicyDecision, PolicyShape};

/// Number of segments used by [`ThresholdCurve::piecewise_uniform`].
pub const DEFAULT_SEGMENTS: usize = 10;

/// A non-increasing threshold function `f: [0, 1] -> [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ThresholdCurve {
    /// `f(t) = 1 - t`.
    Linear,
    /// `f(t) = exp(-t / c)`.
    Exponential { c: f64 },
    /// `f(t) = (1 - t)^c`.
    Power { c: f64 },
    /// Linear interpolation of `knots` placed at equally spaced times
    /// `0, 1/m, ..., 1` where `m = knots.len() - 1`.
    #[serde(rename = "piecewise")]
    PiecewiseLinear { knots: Vec<f64> },
}

impl ThresholdCurve {
    pub fn exponential(c: f64) -> Result<Self> {
        let curve = ThresholdCurve::Exponential { c };
        curve.validate()?;
        Ok(curve)
    }

    pub fn power(c: f64) -> Result<Self> {
        let curve = ThresholdCurve::Power { c };
        curve.validate()?;
        Ok(curve)
    }

    pub fn piecewise(knots: Vec<f64>) -> Result<Self> {
        let curve = ThresholdCurve::PiecewiseLinear { knots };
        curve.validate()?;
        Ok(curve)
    }

    /// Piecewise-linear curve through `(i / 10, f(i / 10))` for another curve.
    pub fn piecewise_uniform(f: impl Fn(f64) -> f64) -> Result<Self> {
        let m = DEFAULT_SEGMENTS;
        Self::piecewise((0..=m).map(|i| f(i as f64 / m as f64)).collect())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ThresholdCurve::Linear => Ok(()),
            ThresholdCurve::Exponential { c } | ThresholdCurve::Power { c } => {
                if c.is_finite() && *c > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidCurve(format!("parameter c must be positive, got {c}")))
                }
            }
            ThresholdCurve::PiecewiseLinear { knots } => {
                if knots.len() < 2 {
                    return Err(Error::InvalidCurve("piecewise curve needs at least two knots".into()));
                }
                if knots.iter().any(|k| !(0.0..=1.0).contains(k)) {
                    return Err(Error::InvalidCurve("knots must lie in [0, 1]".into()));
                }
                if knots.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::InvalidCurve("knots must be non-increasing".into()));
                }
                Ok(())
            }
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        match self {
            ThresholdCurve::Linear => 1.0 - t,
            ThresholdCurve::Exponential { c } => (-t / c).exp(),
            ThresholdCurve::Power { c } => (1.0 - t).powf(*c),
            ThresholdCurve::PiecewiseLinear { knots } => {
                let m = knots.len() - 1;
                let pos = t * m as f64;
                let j = (pos.floor() as usize).min(m - 1);
                let frac = pos - j as f64;
                knots[j] + (knots[j + 1] - knots[j]) * frac
            }
        }
    }

    /// `f(1)`, the lowest threshold ever posted.
    pub fn floor(&self) -> f64 {
        self.value(1.0)
    }

    /// Checks continuity (implied by the families), `f(0) = 1` and strict
    /// decrease on a 1000-step grid.
    pub fn check_best_only_assumptions(&self) -> Result<()> {
        self.validate()?;
        if (self.value(0.0) - 1.0).abs() > 1e-12 {
            return Err(Error::CurveAssumptionViolated(format!("f(0) = {} != 1", self.value(0.0))));
        }
        let steps = 1000;
        let mut prev = self.value(0.0);
        for i in 1..=steps {
            let cur = self.value(i as f64 / steps as f64);
            if cur >= prev {
                return Err(Error::CurveAssumptionViolated(format!(
                    "f is not strictly decreasing near t = {}",
                    i as f64 / steps as f64
                )));
            }
            prev = cur;
        }
        Ok(())
    }

    /// Earliest acceptance time `g(x) = inf { t : x >= f(t) }` for `x` in
    /// `[f(1), 1]`.
    pub fn inverse(&self, x: f64) -> Result<f64> {
        let lo = self.floor();
        if !(x >= lo && x <= 1.0) {
            return Err(Error::DomainError { x, lo, hi: 1.0 });
        }
        Ok(self.inverse_unchecked(x))
    }

    /// As [`inverse`](Self::inverse) without the domain check; values below
    /// `f(1)` map to `+inf` and values at or above `f(0)` to 0.
    #[inline]
    pub fn inverse_unchecked(&self, x: f64) -> f64 {
        if x < self.floor() {
            return f64::INFINITY;
        }
        let t = match self {
            ThresholdCurve::Linear => 1.0 - x,
            ThresholdCurve::Exponential { c } => -c * x.ln(),
            ThresholdCurve::Power { c } => 1.0 - x.powf(1.0 / c),
            ThresholdCurve::PiecewiseLinear { knots } => {
                let m = knots.len() - 1;
                let h = 1.0 / m as f64;
                let mut t = 1.0;
                for j in 0..m {
                    let (y0, y1) = (knots[j], knots[j + 1]);
                    if y0 <= x {
                        t = j as f64 * h;
                        break;
                    }
                    if y1 <= x {
                        t = (j as f64 + (y0 - x) / (y0 - y1)) * h;
                        break;
                    }
                }
                t
            }
        };
        t.clamp(0.0, 1.0)
    }
}

/// The inverse `g` of a threshold curve, restricted to `[f(1), 1]`.
#[derive(Debug, Clone, Copy)]
pub struct CurveInverse<'a> {
    curve: &'a ThresholdCurve,
}

impl CurveInverse<'_> {
    pub fn eval(&self, x: f64) -> Result<f64> {
        self.curve.inverse(x)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.curve.floor(), 1.0)
    }
}

/// Inverse of a strictly decreasing continuous curve.
pub fn curve_inverse(curve: &ThresholdCurve) -> Result<CurveInverse<'_>> {
    curve.check_best_only_assumptions()?;
    Ok(CurveInverse { curve })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AcceptAll;

impl Policy for AcceptAll {
    fn decide(&self, _: &Arrival, _: &History) -> PolicyDecision {
        PolicyDecision::ACCEPT
    }
    fn shape(&self) -> PolicyShape<'_> {
        PolicyShape::AcceptAll
    }
    fn name(&self) -> String {
        "accept-all".into()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AcceptNone;

impl Policy for AcceptNone {
    fn decide(&self, _: &Arrival, _: &History) -> PolicyDecision {
        PolicyDecision::SKIP
    }
    fn shape(&self) -> PolicyShape<'_> {
        PolicyShape::AcceptNone
    }
    fn name(&self) -> String {
        "accept-none".into()
    }
}

/// Observe until `alpha`, then take the first value beating everything seen.
#[derive(Debug, Clone, Copy)]
pub struct AlphaLaw {
    pub alpha: f64,
}

pub fn alpha_law(alpha: f64) -> AlphaLaw {
    AlphaLaw { alpha }
}

impl Policy for AlphaLaw {
    fn decide(&self, arrival: &Arrival, history: &History) -> PolicyDecision {
        PolicyDecision::from_bool(arrival.time >= self.alpha && history.is_running_max(arrival))
    }
    fn shape(&self) -> PolicyShape<'_> {
        PolicyShape::AlphaLaw(self.alpha)
    }
    fn name(&self) -> String {
        format!("alpha-law({})", self.alpha)
    }
}

/// Accept the first value at or above the posted threshold.
#[derive(Debug, Clone)]
pub struct PricingCurve {
    pub curve: ThresholdCurve,
}

pub fn pricing_curve_policy(curve: ThresholdCurve) -> PricingCurve {
    PricingCurve { curve }
}

impl Policy for PricingCurve {
    fn decide(&self, arrival: &Arrival, _: &History) -> PolicyDecision {
        PolicyDecision::from_bool(arrival.value >= self.curve.value(arrival.time))
    }
    fn shape(&self) -> PolicyShape<'_> {
        PolicyShape::Pricing(&self.curve)
    }
    fn name(&self) -> String {
        format!("pricing({})", curve_label(&self.curve))
    }
}

/// Accept the first value that clears the threshold and is the best so far.
#[derive(Debug, Clone)]
pub struct BestOnly {
    pub curve: ThresholdCurve,
}

pub fn best_only_policy(curve: ThresholdCurve) -> Result<BestOnly> {
    curve.check_best_only_assumptions()?;
    Ok(BestOnly { curve })
}

impl Policy for BestOnly {
    fn decide(&self, arrival: &Arrival, history: &History) -> PolicyDecision {
        PolicyDecision::from_bool(arrival.value >= self.curve.value(arrival.time) && history.is_running_max(arrival))
    }
    fn shape(&self) -> PolicyShape<'_> {
        PolicyShape::BestOnly(&self.curve)
    }
    fn name(&self) -> String {
        format!("best-only({})", curve_label(&self.curve))
    }
}

fn curve_label(curve: &ThresholdCurve) -> String {
    match curve {
        ThresholdCurve::Linear => "1-t".into(),
        ThresholdCurve::Exponential { c } => format!("exp(-t/{c})"),
        ThresholdCurve::Power { c } => format!("(1-t)^{c}"),
        ThresholdCurve::PiecewiseLinear { knots } => format!("piecewise[{}]", knots.len() - 1),
    }
}

/// JSON policy description, e.g. `{"policy": "best-only", "curve": {"family": "exponential", "c": 0.472}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum PolicySpec {
    AcceptAll,
    AcceptNone,
    AlphaLaw { alpha: f64 },
    Pricing { curve: ThresholdCurve },
    BestOnly { curve: ThresholdCurve },
}

impl PolicySpec {
    pub fn build(&self) -> Result<Box<dyn Policy>> {
        Ok(match self {
            PolicySpec::AcceptAll => Box::new(AcceptAll),
            PolicySpec::AcceptNone => Box::new(AcceptNone),
            PolicySpec::AlphaLaw { alpha } => Box::new(alpha_law(*alpha)),
            PolicySpec::Pricing { curve } => {
                curve.validate()?;
                Box::new(pricing_curve_policy(curve.clone()))
            }
            PolicySpec::BestOnly { curve } => Box::new(best_only_policy(curve.clone())?),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{run_policy, ArrivalSample, Instance};
    use approx::assert_abs_diff_eq;

    fn run(policy: &dyn Policy, values: Vec<f64>, times: Vec<f64>) -> f64 {
        run_policy(policy, &Instance::new(values).unwrap(), &ArrivalSample::from_times(times)).unwrap()
    }

    #[test]
    fn inverse_closed_forms() {
        let e = ThresholdCurve::exponential(0.472).unwrap();
        assert_eq!(e.inverse(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(e.inverse(0.5).unwrap(), -0.472 * 0.5f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(ThresholdCurve::Linear.inverse(0.4).unwrap(), 0.6, epsilon = 1e-15);
        let p = ThresholdCurve::power(2.0).unwrap();
        assert_abs_diff_eq!(p.inverse(0.25).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn inverse_domain_errors() {
        let e = ThresholdCurve::exponential(0.472).unwrap();
        let floor = e.floor();
        assert!(matches!(e.inverse(floor * 0.99), Err(Error::DomainError { .. })));
        assert!(matches!(e.inverse(1.01), Err(Error::DomainError { .. })));
        assert_abs_diff_eq!(e.inverse(floor).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn piecewise_inverse_is_segmentwise() {
        let pw = ThresholdCurve::piecewise_uniform(|t| (-t / 0.472f64).exp()).unwrap();
        for i in 0..=1000 {
            let t = i as f64 / 1000.0;
            assert_abs_diff_eq!(pw.inverse(pw.value(t)).unwrap(), t, epsilon = 1e-9);
        }
        let pw = ThresholdCurve::piecewise(vec![1.0, 0.5, 0.5, 0.0]).unwrap();
        assert_abs_diff_eq!(pw.inverse(0.5).unwrap(), 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pw.inverse(0.75).unwrap(), 1.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn curve_validation() {
        assert!(ThresholdCurve::exponential(0.0).is_err());
        assert!(ThresholdCurve::piecewise(vec![1.0]).is_err());
        assert!(ThresholdCurve::piecewise(vec![0.5, 0.7]).is_err());
        assert!(ThresholdCurve::piecewise(vec![1.2, 0.7]).is_err());
    }

    #[test]
    fn best_only_assumptions() {
        assert!(best_only_policy(ThresholdCurve::exponential(0.472).unwrap()).is_ok());
        assert!(best_only_policy(ThresholdCurve::Linear).is_ok());
        let flat = ThresholdCurve::piecewise(vec![1.0, 0.5, 0.5, 0.0]).unwrap();
        assert!(matches!(best_only_policy(flat), Err(Error::CurveAssumptionViolated(_))));
        let low = ThresholdCurve::piecewise(vec![0.9, 0.1]).unwrap();
        assert!(matches!(best_only_policy(low), Err(Error::CurveAssumptionViolated(_))));
    }

    #[test]
    fn alpha_law_definition() {
        let law = alpha_law(1.0 / std::f64::consts::E);
        assert_eq!(run(&law, vec![0.8], vec![0.5]), 0.8);
        assert_eq!(run(&law, vec![0.8], vec![0.3]), 0.0);
        // 0.6 is seen during the window; 0.5 does not beat it, 0.9 does.
        assert_eq!(run(&law, vec![0.9, 0.6, 0.5], vec![0.9, 0.1, 0.5]), 0.9);
        let zero = alpha_law(0.0);
        assert_eq!(run(&zero, vec![0.9, 0.2], vec![0.7, 0.05]), 0.2);
    }

    #[test]
    fn pricing_curve_examples() {
        let pc = pricing_curve_policy(ThresholdCurve::Linear);
        assert_eq!(run(&pc, vec![1.0], vec![0.3]), 1.0);
        assert_eq!(run(&pc, vec![0.5], vec![0.49]), 0.0);
        assert_eq!(run(&pc, vec![0.5], vec![0.5]), 0.5);
        // 0.5 clears the threshold at 0.6 before 1.0 arrives.
        assert_eq!(run(&pc, vec![1.0, 0.5], vec![0.8, 0.6]), 0.5);
    }

    #[test]
    fn best_only_needs_running_max() {
        let bo = best_only_policy(ThresholdCurve::Linear).unwrap();
        // 0.6 arrives early (rejected, below threshold) and blocks 0.5.
        assert_eq!(run(&bo, vec![1.0, 0.6, 0.5], vec![0.95, 0.1, 0.7]), 1.0);
        let pc = pricing_curve_policy(ThresholdCurve::Linear);
        assert_eq!(run(&pc, vec![1.0, 0.6, 0.5], vec![0.95, 0.1, 0.7]), 0.5);
        // Single value: accepted iff t >= g(x).
        assert_eq!(run(&bo, vec![0.3], vec![0.71]), 0.3);
        assert_eq!(run(&bo, vec![0.3], vec![0.69]), 0.0);
    }

    #[test]
    fn policy_spec_json() {
        let spec = PolicySpec::from_json(r#"{"policy": "best-only", "curve": {"family": "exponential", "c": 0.472}}"#).unwrap();
        assert_eq!(spec, PolicySpec::BestOnly { curve: ThresholdCurve::Exponential { c: 0.472 } });
        let spec = PolicySpec::from_json(r#"{"policy": "pricing", "curve": {"family": "linear"}}"#).unwrap();
        assert_eq!(spec.build().unwrap().name(), "pricing(1-t)");
        let spec =
            PolicySpec::from_json(r#"{"policy": "pricing", "curve": {"family": "piecewise", "knots": [1, 0.5, 0]}}"#).unwrap();
        assert!(spec.build().is_ok());
        assert!(PolicySpec::from_json(r#"{"policy": "alpha-law"}"#).is_err());
        let bad = PolicySpec::BestOnly { curve: ThresholdCurve::Power { c: -1.0 } };
        assert!(bad.build().is_err());
    }
}
