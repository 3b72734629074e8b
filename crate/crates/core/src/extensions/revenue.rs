//! Posted-price revenue: buyers arrive in random order and the first one whose
//! value meets the posted price pays it. The benchmark is the largest value.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::E;

use crate::error::{Error, Result};
use crate::model::RegretReport;
use crate::montecarlo::SimConfig;
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevenueInstance {
    pub values: Vec<f64>,
}

impl RevenueInstance {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInstance);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::ValueOutOfRange { index, value });
        }
        Ok(Self { values })
    }

    pub fn best(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Posts the same price `e^α`, `α ~ U[-1, 0]`, to every buyer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RandomizedUniformPrice;

pub fn randomized_uniform_price() -> RandomizedUniformPrice {
    RandomizedUniformPrice
}

impl RandomizedUniformPrice {
    pub fn draw_price(&self, rng: &mut StreamRng) -> f64 {
        (rng.uniform() - 1.0).exp()
    }

    /// Revenue for a fixed price: some buyer meets it regardless of order.
    pub fn revenue_at(&self, inst: &RevenueInstance, price: f64) -> f64 {
        if inst.values.iter().any(|&x| x >= price) {
            price
        } else {
            0.0
        }
    }

    /// `∫_{-1}^{0} e^α 1[z >= e^α] dα = max(z - 1/e, 0)`.
    pub fn expected_revenue(&self, inst: &RevenueInstance) -> f64 {
        (inst.best() - 1.0 / E).max(0.0)
    }

    pub fn exact_regret(&self, inst: &RevenueInstance) -> RegretReport {
        RegretReport::exact(inst.best() - self.expected_revenue(inst))
    }
}

/// Mean of `max value - revenue` over random prices.
pub fn estimate_revenue_regret(policy: &RandomizedUniformPrice, inst: &RevenueInstance, cfg: &SimConfig) -> Result<RegretReport> {
    cfg.validate()?;
    let z = inst.best();
    let samples: Vec<f64> = (0..cfg.samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = StreamRng::new(cfg.seed, s);
            z - policy.revenue_at(inst, policy.draw_price(&mut rng))
        })
        .collect();
    Ok(mean_report(&samples, cfg))
}

/// One draw from `F(x) = 1 - 1/(e x)` on `[1/e, 1)` with an atom of `1/e` at 1.
pub fn revenue_hard_distribution_sample(rng: &mut StreamRng) -> f64 {
    let u = rng.uniform();
    if u >= 1.0 - 1.0 / E {
        1.0
    } else {
        1.0 / (E * (1.0 - u))
    }
}

/// Expected revenue of a fixed price against one buyer from the hard
/// distribution: `p` below `1/e`, and `p · 1/(e p) = 1/e` on `[1/e, 1]`.
pub fn hard_distribution_fixed_price_revenue(p: f64) -> f64 {
    if p <= 1.0 / E {
        p
    } else if p <= 1.0 {
        p * (1.0 / (E * p))
    } else {
        0.0
    }
}

/// Sample mean of the hard distribution (expected `2/e`).
pub fn estimate_hard_distribution_mean(cfg: &SimConfig) -> Result<RegretReport> {
    cfg.validate()?;
    let samples: Vec<f64> =
        (0..cfg.samples).into_par_iter().map(|s| revenue_hard_distribution_sample(&mut StreamRng::new(cfg.seed, s))).collect();
    Ok(mean_report(&samples, cfg))
}

fn mean_report(samples: &[f64], cfg: &SimConfig) -> RegretReport {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 { samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let sd = var.sqrt().max(1.0 / n.sqrt());
    RegretReport::monte_carlo(mean, cfg.z() * sd / n.sqrt(), samples.len() as u64)
}
