//! Seeded Monte Carlo estimation of regret.
//!
//! Sample `s` always draws from `StreamRng::new(seed, s)` and samples are
//! reduced in fixed blocks, so estimates are bit-identical for any number of
//! worker threads.
//!
//! Policies with a known [`PolicyShape`] can be simulated on the run-length
//! form of an instance without materialising every arrival:
//!
//! * accept-all takes a uniformly random item;
//! * pricing curves take, per value class of size `m`, the first time at or
//!   after `θ`, which is `θ + 1 - U^{1/m}` (none if above 1);
//! * the α-law looks at the best item arriving before `α`;
//! * best-only curves walk the chain of running maxima backwards in time
//!   from the overall best item.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dp_lower::MixtureInstance;
use crate::error::{Error, Result};
use crate::model::{replay_index, ArrivalSample, Instance, Policy, PolicyShape, RegretReport, ValueClasses};
use crate::rng::{derive_key, StreamRng};

const BLOCK: u64 = 1 << 14;

/// Instances up to this size are replayed arrival by arrival under
/// [`SimMethod::Auto`].
pub const AUTO_DIRECT_MAX_N: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMethod {
    #[default]
    Auto,
    Direct,
    Compressed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub samples: u64,
    pub seed: u64,
    pub confidence: f64,
    #[serde(default)]
    pub method: SimMethod,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { samples: 1_000_000, seed: 42, confidence: 0.999, method: SimMethod::Auto }
    }
}

impl SimConfig {
    pub fn new(samples: u64, seed: u64) -> Self {
        Self { samples, seed, ..Self::default() }
    }

    pub fn with_method(mut self, method: SimMethod) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidConfig("samples must be at least 1".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidConfig(format!("confidence {} not in (0, 1)", self.confidence)));
        }
        Ok(())
    }

    /// Two-sided normal quantile for the configured confidence.
    pub fn z(&self) -> f64 {
        Normal::standard().inverse_cdf(1.0 - (1.0 - self.confidence) / 2.0)
    }
}

/// Regret estimate plus how often the best value (and nothing) was picked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub regret: RegretReport,
    pub p_best: f64,
    pub p_none: f64,
}

enum Plan<'p, P: ?Sized> {
    Direct(&'p P),
    AcceptNone,
    AcceptAll,
    AlphaLaw(f64),
    Pricing(Vec<f64>),
    BestOnly(Vec<f64>),
}

fn plan<'p, P: Policy + ?Sized>(policy: &'p P, classes: &ValueClasses, n: usize, method: SimMethod) -> Result<Plan<'p, P>> {
    let shape = policy.shape();
    let known = !matches!(shape, PolicyShape::Opaque);
    let compressed = match method {
        SimMethod::Direct => false,
        SimMethod::Compressed if !known => {
            return Err(Error::InvalidConfig(format!("policy {} has no compressed sampler", policy.name())))
        }
        SimMethod::Compressed => true,
        SimMethod::Auto => known && n > AUTO_DIRECT_MAX_N,
    };
    if !compressed {
        return Ok(Plan::Direct(policy));
    }
    let thetas = |curve: &crate::policies::ThresholdCurve| -> Vec<f64> {
        classes.values.iter().map(|&x| curve.inverse_unchecked(x)).collect()
    };
    Ok(match shape {
        PolicyShape::AcceptNone => Plan::AcceptNone,
        PolicyShape::AcceptAll => Plan::AcceptAll,
        PolicyShape::AlphaLaw(a) => Plan::AlphaLaw(a),
        PolicyShape::Pricing(curve) => Plan::Pricing(thetas(curve)),
        PolicyShape::BestOnly(curve) => Plan::BestOnly(thetas(curve)),
        PolicyShape::Opaque => unreachable!(),
    })
}

/// Per-block scratch for arrival-by-arrival replay.
#[derive(Default)]
struct Scratch {
    times: Vec<f64>,
    keys: Vec<f64>,
    order: Vec<usize>,
}

/// Class of the picked item for one sample, or `None`.
fn sample_class<P: Policy + ?Sized>(
    plan: &Plan<'_, P>,
    inst: &Instance,
    classes: &ValueClasses,
    rng: &mut StreamRng,
    scratch: &mut Scratch,
) -> Option<usize> {
    let n = classes.total();
    match plan {
        Plan::Direct(policy) => {
            let values = inst.values();
            ArrivalSample::redraw_into(values.len(), rng, &mut scratch.times, &mut scratch.keys);
            let arrival = ArrivalSample { times: std::mem::take(&mut scratch.times), keys: std::mem::take(&mut scratch.keys) };
            scratch.order.clear();
            scratch.order.extend(0..values.len());
            scratch.order.sort_unstable_by(|&a, &b| arrival.times[a].total_cmp(&arrival.times[b]));
            let picked = replay_index(*policy, values, &arrival, &scratch.order);
            scratch.times = arrival.times;
            scratch.keys = arrival.keys;
            picked.map(|i| classes.class_of_rank(i as u64))
        }
        Plan::AcceptNone => None,
        Plan::AcceptAll => Some(classes.class_of_rank(rng.below(n))),
        Plan::AlphaLaw(alpha) => {
            let first_seen = rng.geometric(*alpha);
            if first_seen >= n {
                Some(classes.class_of_rank(rng.below(n)))
            } else if first_seen == 0 {
                None
            } else {
                Some(classes.class_of_rank(rng.below(first_seen)))
            }
        }
        Plan::Pricing(thetas) => {
            let mut best: Option<(f64, usize)> = None;
            for (j, (&theta, &m)) in thetas.iter().zip(&classes.counts).enumerate() {
                // θ = 1 is met only at t = 1, a null event.
                if theta >= 1.0 {
                    continue;
                }
                let u = rng.uniform_open0();
                let s = if m == 1 { theta + 1.0 - u } else { theta + 1.0 - (u.ln() / m as f64).exp() };
                if s <= 1.0 && best.is_none_or(|(b, _)| s < b) {
                    best = Some((s, j));
                }
            }
            best.map(|(_, j)| j)
        }
        Plan::BestOnly(thetas) => {
            let mut rank = 0u64;
            let mut t = rng.uniform();
            let mut class = 0;
            if t < thetas[0] {
                return None;
            }
            loop {
                let next = rank.saturating_add(1).saturating_add(rng.geometric(t));
                if next >= n {
                    return Some(class);
                }
                let t_next = t * rng.uniform();
                let c = classes.class_of_rank(next);
                if t_next < thetas[c] {
                    return Some(class);
                }
                rank = next;
                t = t_next;
                class = c;
            }
        }
    }
}

/// Mean and sum of squared deviations, merged with Chan's formula.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
    best: u64,
    none: u64,
}

impl Moments {
    /// Block summary from plain sums; values are bounded, so the
    /// cancellation in `Σx² - (Σx)²/n` is harmless at block size.
    fn from_sums(n: u64, sum: f64, sum_sq: f64, best: u64, none: u64) -> Self {
        if n == 0 {
            return Self::default();
        }
        let mean = sum / n as f64;
        Self { n, mean, m2: (sum_sq - sum * mean).max(0.0), best, none }
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0 {
            return o;
        }
        if o.n == 0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n as f64 / n as f64,
            m2: self.m2 + o.m2 + d * d * self.n as f64 * o.n as f64 / n as f64,
            best: self.best + o.best,
            none: self.none + o.none,
        }
    }
}

fn simulate<P: Policy + ?Sized>(policy: &P, inst: &Instance, cfg: &SimConfig) -> Result<Outcome> {
    cfg.validate()?;
    let classes = inst.classes();
    let plan = plan(policy, &classes, inst.len(), cfg.method)?;
    let top = inst.best();
    let blocks = cfg.samples.div_ceil(BLOCK);
    let parts: Vec<Moments> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut scratch = Scratch::default();
            let (mut sum, mut sum_sq, mut best, mut none) = (0.0, 0.0, 0u64, 0u64);
            let start = b * BLOCK;
            let end = ((b + 1) * BLOCK).min(cfg.samples);
            for s in start..end {
                let mut rng = StreamRng::new(cfg.seed, s);
                let picked = sample_class(&plan, inst, &classes, &mut rng, &mut scratch);
                let r = top - picked.map_or(0.0, |j| classes.values[j]);
                sum += r;
                sum_sq += r * r;
                match picked {
                    Some(0) => best += 1,
                    None => none += 1,
                    _ => {}
                }
            }
            Moments::from_sums(end - start, sum, sum_sq, best, none)
        })
        .collect();
    let total = parts.into_iter().fold(Moments::default(), Moments::merge);
    Ok(summarize(&total, cfg))
}

fn summarize(m: &Moments, cfg: &SimConfig) -> Outcome {
    let n = m.n as f64;
    let var = if m.n > 1 { m.m2 / (n - 1.0) } else { 0.0 };
    // A zero-variance run still gets a positive interval of order 1/n.
    let sd = var.sqrt().max(1.0 / n.sqrt());
    let half = cfg.z() * sd / n.sqrt();
    Outcome { regret: RegretReport::monte_carlo(m.mean, half, m.n), p_best: m.best as f64 / n, p_none: m.none as f64 / n }
}

/// Mean of `x_1 - picked value` over `cfg.samples` independent arrival orders.
pub fn estimate_regret<P: Policy + ?Sized>(policy: &P, inst: &Instance, cfg: &SimConfig) -> Result<RegretReport> {
    Ok(simulate(policy, inst, cfg)?.regret)
}

/// As [`estimate_regret`], also reporting how often the best value and
/// nothing at all were picked.
pub fn estimate_outcome<P: Policy + ?Sized>(policy: &P, inst: &Instance, cfg: &SimConfig) -> Result<Outcome> {
    simulate(policy, inst, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub worst_index: usize,
    pub worst_instance: Vec<f64>,
    /// Estimate for the winner from the scan itself.
    pub scan_report: RegretReport,
    /// Fresh estimate for the winner at four times the samples.
    pub report: RegretReport,
    pub scanned: usize,
}

/// Estimates every instance with common random numbers and re-estimates the
/// worst one with an independent stream at four times the samples.
pub fn worst_case_scan<P: Policy + ?Sized>(policy: &P, family: &[Instance], cfg: &SimConfig) -> Result<ScanResult> {
    if family.is_empty() {
        return Err(Error::InvalidConfig("empty instance family".into()));
    }
    let reports: Vec<RegretReport> = family.par_iter().map(|inst| estimate_regret(policy, inst, cfg)).collect::<Result<_>>()?;
    let (worst_index, scan_report) = reports
        .iter()
        .enumerate()
        .fold(None::<(usize, &RegretReport)>, |acc, (i, r)| match acc {
            Some((_, b)) if b.value >= r.value => acc,
            _ => Some((i, r)),
        })
        .expect("non-empty family");
    let confirm = SimConfig { samples: cfg.samples.saturating_mul(4), seed: derive_key(cfg.seed, u64::MAX), ..*cfg };
    let report = estimate_regret(policy, &family[worst_index], &confirm)?;
    Ok(ScanResult {
        worst_index,
        worst_instance: family[worst_index].values().to_vec(),
        scan_report: scan_report.clone(),
        report,
        scanned: family.len(),
    })
}

/// `{(x_1, x_2)}` on a grid of step `step`, `x_1 >= x_2`, with `n - 1` copies
/// of `x_2`.
pub fn two_value_family(step: f64, n: usize) -> Result<Vec<Instance>> {
    let k = (1.0 / step).round() as usize;
    let mut out = Vec::with_capacity((k + 1) * (k + 2) / 2);
    for i in 0..=k {
        for j in 0..=i {
            out.push(Instance::two_valued(i as f64 / k as f64, j as f64 / k as f64, n - 1)?);
        }
    }
    Ok(out)
}

/// `count` instances with `n` uniform in `1..=max_n` and i.i.d. values drawn
/// from `[lo, 1]`.
pub fn random_family(count: usize, max_n: usize, lo: f64, seed: u64) -> Result<Vec<Instance>> {
    (0..count)
        .map(|i| {
            let mut rng = StreamRng::new(seed, i as u64);
            let n = 1 + rng.below(max_n as u64) as usize;
            Instance::new((0..n).map(|_| lo + (1.0 - lo) * rng.uniform()).collect())
        })
        .collect()
}

/// Regret under a padded mixture: `Σ_k p_k (max V_k - E_k[pick])`, each
/// branch simulated separately with its own derived seed.
pub fn estimate_mixture_regret<P: Policy + ?Sized>(policy: &P, mix: &MixtureInstance, cfg: &SimConfig) -> Result<RegretReport> {
    mix.validate()?;
    let (mut value, mut var) = (0.0, 0.0);
    for (k, br) in mix.branches.iter().enumerate() {
        let inst = Instance::with_zeros(&br.values, mix.m - br.values.len())?;
        let branch_cfg = SimConfig { seed: derive_key(cfg.seed, k as u64), ..*cfg };
        let r = estimate_regret(policy, &inst, &branch_cfg)?;
        value += br.p * r.value;
        var += (br.p * r.ci_halfwidth).powi(2);
    }
    Ok(RegretReport::monte_carlo(value, var.sqrt(), cfg.samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::{alpha_law, best_only_policy, pricing_curve_policy, AcceptAll, AcceptNone, ThresholdCurve};

    #[test]
    fn accept_nothing_regret_is_top_value() {
        let inst = Instance::new(vec![0.7]).unwrap();
        let r = estimate_regret(&AcceptNone, &inst, &SimConfig::new(1000, 1)).unwrap();
        approx::assert_abs_diff_eq!(r.value, 0.7, epsilon = 1e-12);
        assert!(r.ci_halfwidth > 0.0);
    }

    #[test]
    fn one_over_e_law_on_single_spike() {
        let inst = Instance::with_zeros(&[1.0], 999).unwrap();
        let cfg = SimConfig::new(200_000, 7);
        let r = estimate_regret(&alpha_law((-1f64).exp()), &inst, &cfg).unwrap();
        // Tie-broken zeros act as distinct tiny values, so this is the classic
        // secretary setting: the spike is found with probability about 1/e.
        let limit = 1.0 - (-1f64).exp();
        assert!((r.value - limit).abs() < 3.0 * r.ci_halfwidth + 2e-3, "{r:?}");
    }

    #[test]
    fn reproducible_and_thread_independent() {
        let inst = Instance::new(vec![0.9, 0.7, 0.7, 0.4, 0.2]).unwrap();
        let policy = best_only_policy(ThresholdCurve::exponential(0.472).unwrap()).unwrap();
        let cfg = SimConfig::new(50_000, 3).with_method(SimMethod::Direct);
        let a = estimate_regret(&policy, &inst, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| estimate_regret(&policy, &inst, &cfg)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn compressed_requires_known_shape() {
        struct Opaque;
        impl Policy for Opaque {
            fn decide(&self, _: &crate::model::Arrival, _: &crate::model::History) -> crate::model::PolicyDecision {
                crate::model::PolicyDecision::ACCEPT
            }
        }
        let inst = Instance::new(vec![0.5]).unwrap();
        let cfg = SimConfig::new(10, 1).with_method(SimMethod::Compressed);
        assert!(estimate_regret(&Opaque, &inst, &cfg).is_err());
    }

    #[test]
    fn compressed_matches_direct_on_small_instance() {
        let inst = Instance::new(vec![0.95, 0.8, 0.8, 0.55, 0.3, 0.3, 0.1]).unwrap();
        let curve = ThresholdCurve::exponential(0.611).unwrap();
        let policies: Vec<Box<dyn Policy>> = vec![
            Box::new(AcceptAll),
            Box::new(alpha_law(0.3)),
            Box::new(pricing_curve_policy(curve.clone())),
            Box::new(best_only_policy(curve).unwrap()),
        ];
        for p in &policies {
            let d = estimate_outcome(p, &inst, &SimConfig::new(200_000, 11).with_method(SimMethod::Direct)).unwrap();
            let c = estimate_outcome(p, &inst, &SimConfig::new(200_000, 12).with_method(SimMethod::Compressed)).unwrap();
            let tol = 1.5 * (d.regret.ci_halfwidth + c.regret.ci_halfwidth);
            assert!((d.regret.value - c.regret.value).abs() < tol, "{}: {d:?} vs {c:?}", p.name());
            assert!((d.p_best - c.p_best).abs() < 0.01, "{}", p.name());
        }
    }

    #[test]
    fn two_value_family_size() {
        let fam = two_value_family(0.01, 10).unwrap();
        assert_eq!(fam.len(), 5151);
        assert!(fam.iter().all(|i| i.len() == 10));
    }

    #[test]
    fn scan_singletons() {
        // Linear pricing on [v] picks v iff t >= 1 - v: regret v(1 - v).
        let fam: Vec<Instance> = (1..=10).map(|k| Instance::new(vec![k as f64 / 10.0]).unwrap()).collect();
        let res = worst_case_scan(&pricing_curve_policy(ThresholdCurve::Linear), &fam, &SimConfig::new(100_000, 5)).unwrap();
        assert!((res.worst_instance[0] - 0.5).abs() <= 0.1 + 1e-12, "{res:?}");
        assert!(res.report.agrees_with(0.25, 4.0) || (res.report.value - 0.25).abs() < 0.01);
    }
}
