//! Choosing up to `k` values online; regret is the top-`k` sum minus the sum
//! of the chosen values.
//!
//! The policy is the recursive-halving scheme: on a time interval with budget
//! `k`, recurse on the first half with budget `⌊k/2⌋`, then on the second
//! half accept every value beating the `⌊k/2⌋`-th largest first-half value
//! until the budget is spent. Budget 1 runs the classic `1/e` rule on the
//! interval.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::model::{ArrivalSample, RegretReport};
use crate::montecarlo::SimConfig;
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelectInstance {
    pub values: Vec<f64>,
    pub k: usize,
}

impl KSelectInstance {
    pub fn new(values: Vec<f64>, k: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInstance);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::ValueOutOfRange { index, value });
        }
        if k == 0 || k > values.len() {
            return Err(Error::InvalidConfig(format!("k = {k} must lie in 1..={}", values.len())));
        }
        Ok(Self { values, k })
    }

    pub fn top_k_sum(&self) -> f64 {
        let mut v = self.values.clone();
        v.sort_by(|a, b| b.total_cmp(a));
        v[..self.k].iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KSelectPolicy {
    pub k: usize,
}

pub fn kselect_policy(k: usize) -> Result<KSelectPolicy> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    Ok(KSelectPolicy { k })
}

/// An arrival seen by the k-select policy, ordered by `(value, key)`.
#[derive(Debug, Clone, Copy)]
struct Item {
    time: f64,
    value: f64,
    key: f64,
    index: usize,
}

impl Item {
    fn beats(&self, other: &Item) -> bool {
        (self.value, self.key) > (other.value, other.key)
    }
}

impl KSelectPolicy {
    /// Indices (into `values`) accepted for one arrival sample.
    pub fn run(&self, values: &[f64], arrival: &ArrivalSample) -> Result<Vec<usize>> {
        arrival.validate(values.len())?;
        let mut items: Vec<Item> = (0..values.len())
            .map(|i| Item { time: arrival.times[i], value: values[i], key: arrival.keys[i], index: i })
            .collect();
        items.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(self.run_sorted(&items))
    }

    fn run_sorted(&self, items: &[Item]) -> Vec<usize> {
        if self.k >= items.len() {
            return items.iter().map(|it| it.index).collect();
        }
        let mut accepted = Vec::with_capacity(self.k);
        select(items, 0.0, 1.0, self.k, &mut accepted);
        accepted
    }
}

/// `items` are sorted by time and all lie in `[lo, hi)`.
fn select(items: &[Item], lo: f64, hi: f64, k: usize, accepted: &mut Vec<usize>) {
    if k == 0 || items.is_empty() {
        return;
    }
    if k == 1 {
        let cutoff = lo + (hi - lo) / std::f64::consts::E;
        let split = items.partition_point(|it| it.time < cutoff);
        let best = items[..split].iter().copied().reduce(|a, b| if b.beats(&a) { b } else { a });
        if let Some(it) = items[split..].iter().find(|it| best.is_none_or(|b| it.beats(&b))) {
            accepted.push(it.index);
        }
        return;
    }
    let mid = 0.5 * (lo + hi);
    let split = items.partition_point(|it| it.time < mid);
    let (first, second) = items.split_at(split);
    let half = k / 2;
    let before = accepted.len();
    select(first, lo, mid, half, accepted);
    let mut remaining = k - (accepted.len() - before);

    let threshold = if first.len() >= half {
        let mut sorted: Vec<Item> = first.to_vec();
        sorted.select_nth_unstable_by(half - 1, |a, b| (b.value, b.key).partial_cmp(&(a.value, a.key)).unwrap());
        Some(sorted[half - 1])
    } else {
        None
    };
    for it in second {
        if remaining == 0 {
            break;
        }
        if threshold.is_none_or(|t| it.beats(&t)) {
            accepted.push(it.index);
            remaining -= 1;
        }
    }
}

/// Number of one-halves in the hard mixture: `√k/5` rounded, at least 1.
pub fn hard_mixture_halves(k: usize) -> usize {
    (((k as f64).sqrt() / 5.0).round() as usize).max(1)
}

/// The two-case hard input for k-select: `2k` values, each case with
/// probability 1/2.
///
/// * Case 1: `k` ones, `k - h` zeros, `h` one-halves.
/// * Case 2: `k - h` ones, `k` zeros, `h` one-halves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KSelectHardMixture {
    pub k: usize,
    pub halves: usize,
}

impl KSelectHardMixture {
    /// Uses `h = √k/5` exactly; `√k` must be a multiple of 20.
    pub fn exact(k: usize) -> Result<Self> {
        let r = (k as f64).sqrt().round() as usize;
        if r * r != k || !r.is_multiple_of(20) {
            return Err(Error::InvalidConfig(format!("√k must be a multiple of 20, got k = {k}")));
        }
        Ok(Self { k, halves: r / 5 })
    }

    /// Any `k >= 1`, with `h` from [`hard_mixture_halves`].
    pub fn rounded(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        Ok(Self { k, halves: hard_mixture_halves(k).min(k) })
    }

    pub fn case_values(&self, case: usize) -> Vec<f64> {
        let (k, h) = (self.k, self.halves);
        let (ones, zeros) = if case == 1 { (k, k - h) } else { (k - h, k) };
        let mut v = vec![1.0; ones];
        v.extend(std::iter::repeat_n(0.5, h));
        v.extend(std::iter::repeat_n(0.0, zeros));
        v
    }

    /// `P_case(a, b)`: the first `k` of the `2k` arrivals hold `a` ones and
    /// `b` one-halves.
    pub fn first_half_probability(&self, case: usize, a: usize, b: usize) -> f64 {
        let (k, h) = (self.k as u64, self.halves as u64);
        let (ones, zeros) = if case == 1 { (k, k - h) } else { (k - h, k) };
        let (a, b) = (a as u64, b as u64);
        if a > ones || b > h || a + b > k || k - a - b > zeros {
            return 0.0;
        }
        (ln_binomial(ones, a) + ln_binomial(h, b) + ln_binomial(zeros, k - a - b) - ln_binomial(2 * k, k)).exp()
    }

    /// `P[b < bound]` in Case 1.
    pub fn prob_halves_below(&self, bound: f64) -> f64 {
        (0..=self.halves)
            .filter(|&b| (b as f64) < bound)
            .map(|b| (0..=self.k).map(|a| self.first_half_probability(1, a, b)).sum::<f64>())
            .sum()
    }

    /// `P[a > bound]` in Case 1.
    pub fn prob_ones_above(&self, bound: f64) -> f64 {
        (0..=self.k)
            .filter(|&a| (a as f64) > bound)
            .map(|a| (0..=self.halves).map(|b| self.first_half_probability(1, a, b)).sum::<f64>())
            .sum()
    }
}

fn draw_items(values: &[f64], rng: &mut StreamRng) -> Vec<Item> {
    let arrival = ArrivalSample::draw(values.len(), rng);
    let mut items: Vec<Item> =
        (0..values.len()).map(|i| Item { time: arrival.times[i], value: values[i], key: arrival.keys[i], index: i }).collect();
    items.sort_by(|a, b| a.time.total_cmp(&b.time));
    items
}

fn regret_report(samples: &[f64], cfg: &SimConfig) -> RegretReport {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 { samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let sd = var.sqrt().max(1.0 / n.sqrt());
    RegretReport::monte_carlo(mean, cfg.z() * sd / n.sqrt(), samples.len() as u64)
}

/// Mean of top-`k` sum minus chosen sum over random arrival orders.
pub fn estimate_kselect_regret(policy: &KSelectPolicy, inst: &KSelectInstance, cfg: &SimConfig) -> Result<RegretReport> {
    cfg.validate()?;
    let top = inst.top_k_sum();
    let samples: Vec<f64> = (0..cfg.samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = StreamRng::new(cfg.seed, s);
            let items = draw_items(&inst.values, &mut rng);
            let got: f64 = policy.run_sorted(&items).iter().map(|&i| inst.values[i]).sum();
            top - got
        })
        .collect();
    Ok(regret_report(&samples, cfg))
}

/// Regret of `policy` (budget `mix.k`) on the hard mixture.
pub fn estimate_kselect_mixture_regret(
    policy: &KSelectPolicy,
    mix: &KSelectHardMixture,
    cfg: &SimConfig,
) -> Result<RegretReport> {
    cfg.validate()?;
    let cases = [mix.case_values(1), mix.case_values(2)];
    let tops = [mix.k as f64, (mix.k - mix.halves) as f64 + 0.5 * mix.halves as f64];
    let samples: Vec<f64> = (0..cfg.samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = StreamRng::new(cfg.seed, s);
            let case = rng.below(2) as usize;
            let values = &cases[case];
            let items = draw_items(values, &mut rng);
            let got: f64 = policy.run_sorted(&items).iter().map(|&i| values[i]).sum();
            tops[case] - got
        })
        .collect();
    Ok(regret_report(&samples, cfg))
}
