//! One row per published numeric claim, recomputed from scratch.

use std::f64::consts::E;
use std::time::Instant;

use serde::Serialize;

use secretary_regret::analytic::{bopc_exact_regret, pricing_single_value_regret, LowerBoundInstance};
use secretary_regret::certifier::{
    certify_sup_below, optimize_bopc_lowerbound, optimize_rtilde2, CertificateStatus, CertifyOptions,
};
use secretary_regret::dp_lower::{backward_dp, mixture_regret, MixtureInstance};
use secretary_regret::extensions::kselect::{estimate_kselect_mixture_regret, kselect_policy, KSelectHardMixture};
use secretary_regret::extensions::revenue::{
    estimate_hard_distribution_mean, estimate_revenue_regret, hard_distribution_fixed_price_revenue, randomized_uniform_price,
    RevenueInstance,
};
use secretary_regret::montecarlo::{
    estimate_outcome, estimate_regret, random_family, two_value_family, worst_case_scan, SimConfig, SimMethod,
};
use secretary_regret::policies::{best_only_policy, pricing_curve_policy};
use secretary_regret::rng::{derive_key, StreamRng};
use secretary_regret::{Instance, Result, ThresholdCurve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// `computed <= expected + tolerance`
    AtMost,
    /// `computed >= expected - tolerance`
    AtLeast,
    /// `|computed - expected| <= tolerance`
    Within,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReproductionRow {
    pub claim: String,
    pub quantity: String,
    pub expected: f64,
    pub computed: f64,
    pub tolerance: f64,
    pub direction: Direction,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_s: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, Copy)]
pub struct Scale {
    pub scan_step: f64,
    pub scan_samples: u64,
    pub family_samples: u64,
    pub random_scan_instances: usize,
    pub random_scan_samples: u64,
    pub closed_form_instances: usize,
    pub closed_form_samples: u64,
    pub narrative_samples: u64,
    pub revenue_samples: u64,
    pub hard_samples: u64,
    pub kselect_trials: u64,
}

impl Scale {
    pub fn full() -> Self {
        Self {
            scan_step: 0.01,
            scan_samples: 1_000_000,
            family_samples: 1_000_000,
            random_scan_instances: 10_000,
            random_scan_samples: 20_000,
            closed_form_instances: 50,
            closed_form_samples: 10_000_000,
            narrative_samples: 1_000_000,
            revenue_samples: 1_000_000,
            hard_samples: 10_000_000,
            kselect_trials: 20_000,
        }
    }

    pub fn quick() -> Self {
        Self {
            scan_step: 0.05,
            scan_samples: 20_000,
            family_samples: 100_000,
            random_scan_instances: 200,
            random_scan_samples: 5_000,
            closed_form_instances: 10,
            closed_form_samples: 100_000,
            narrative_samples: 100_000,
            revenue_samples: 100_000,
            hard_samples: 1_000_000,
            kselect_trials: 2_000,
        }
    }
}

struct Ctx {
    seed: u64,
    timings: bool,
    rows: Vec<ReproductionRow>,
}

struct Claim {
    quantity: &'static str,
    expected: f64,
    computed: f64,
    tolerance: f64,
    direction: Direction,
    detail: String,
}

fn claim(quantity: &'static str, expected: f64, computed: f64, tolerance: f64, direction: Direction) -> Claim {
    Claim { quantity, expected, computed, tolerance, direction, detail: String::new() }
}

impl Claim {
    fn detail(mut self, d: impl Into<String>) -> Self {
        self.detail = d.into();
        self
    }
}

fn passes(c: &Claim) -> bool {
    match c.direction {
        Direction::AtMost => c.computed <= c.expected + c.tolerance,
        Direction::AtLeast => c.computed >= c.expected - c.tolerance,
        Direction::Within => (c.computed - c.expected).abs() <= c.tolerance,
    }
}

impl Ctx {
    fn cfg(&self, samples: u64, stream: u64) -> SimConfig {
        SimConfig::new(samples, derive_key(self.seed, stream))
    }

    /// Runs `f` and records its claims; an error becomes a failed row.
    fn run(&mut self, id: &str, f: impl FnOnce(&Ctx) -> Result<Vec<Claim>>) {
        let start = Instant::now();
        let out = f(self);
        let runtime = self.timings.then(|| start.elapsed().as_secs_f64());
        match out {
            Ok(claims) => {
                for c in claims {
                    self.rows.push(ReproductionRow {
                        claim: id.to_string(),
                        quantity: c.quantity.to_string(),
                        expected: c.expected,
                        computed: c.computed,
                        tolerance: c.tolerance,
                        direction: c.direction,
                        pass: passes(&c),
                        runtime_s: runtime,
                        detail: c.detail,
                    });
                }
            }
            Err(e) => self.rows.push(ReproductionRow {
                claim: id.to_string(),
                quantity: "error".into(),
                expected: f64::NAN,
                computed: f64::NAN,
                tolerance: 0.0,
                direction: Direction::Within,
                pass: false,
                runtime_s: runtime,
                detail: e.to_string(),
            }),
        }
    }
}

pub fn reproduce_all(scale: Scale, seed: u64, timings: bool, mut log: impl FnMut(&str)) -> Vec<ReproductionRow> {
    let mut ctx = Ctx { seed, timings, rows: Vec::new() };
    let linear = ThresholdCurve::Linear;
    let c472 = ThresholdCurve::Exponential { c: 0.472 };

    log("two-value scan of f(t) = 1 - t");
    ctx.run("linear-scan", |ctx| {
        let fam = two_value_family(scale.scan_step, 1000)?;
        let res = worst_case_scan(&pricing_curve_policy(linear.clone()), &fam, &ctx.cfg(scale.scan_samples, 1))?;
        Ok(vec![claim("worst scanned regret", 0.25, res.report.value, 0.005, Direction::Within).detail(format!(
            "x1={} x2={} ci={:.2e}",
            res.worst_instance[0],
            res.worst_instance.get(1).copied().unwrap_or(0.0),
            res.report.ci_halfwidth
        ))])
    });

    log("hard instances for f(t) = 1 - t");
    ctx.run("linear-hard", |ctx| {
        let single = pricing_single_value_regret(&linear, 0.5)?.value;
        let inst = Instance::two_valued(1.0, 0.5, 999)?;
        let r = estimate_regret(&pricing_curve_policy(linear.clone()), &inst, &ctx.cfg(scale.family_samples, 2))?;
        Ok(vec![
            claim("regret on [0.5]", 0.25, single, 1e-12, Direction::Within),
            claim("regret on [1, 0.5 x 999]", 0.25, r.value, 0.01, Direction::Within)
                .detail(format!("ci={:.2e}", r.ci_halfwidth)),
        ])
    });

    log("R~2 optimization at c = 0.611");
    ctx.run("rtilde2-optimum", |_| {
        let opt = optimize_rtilde2(0.611)?;
        let c1 = opt.case1.ok_or_else(|| secretary_regret::Error::InvalidConfig("case 1 empty".into()))?;
        let c2 = opt.case2.ok_or_else(|| secretary_regret::Error::InvalidConfig("case 2 empty".into()))?;
        Ok(vec![
            claim("max R~2", 0.229, opt.value, 1e-3, Direction::AtMost),
            claim("case-1 argmax x2", 0.7448, c1.x2, 1e-3, Direction::Within),
            claim("case-2 argmax x1", 0.4132, c2.x1, 1e-3, Direction::Within),
            claim("case-2 argmax x2", 0.3303, c2.x2, 1e-3, Direction::Within),
        ])
    });

    log("certification of sup R~5 < 0.190 at c = 0.472");
    ctx.run("certify-0.190", |ctx| {
        let cert = certify_sup_below(&c472, 0.190, CertifyOptions::default())?;
        let certified = if cert.status == CertificateStatus::Certified { 1.0 } else { 0.0 };
        let fam = random_family(scale.random_scan_instances, 10, 0.0, derive_key(ctx.seed, 40))?;
        let cfg = ctx.cfg(scale.random_scan_samples, 4);
        let res = worst_case_scan(&best_only_policy(c472.clone())?, &fam, &cfg)?;
        let sigma = res.report.ci_halfwidth / cfg.z();
        Ok(vec![
            claim("certified (1 = yes)", 1.0, certified, 0.0, Direction::Within).detail(format!(
                "boxes={} max corner={:.6} depth={}",
                cert.boxes_processed, cert.max_corner_value, cert.max_depth_reached
            )),
            claim("worst scanned regret", 0.190, res.report.value, 3.0 * sigma, Direction::AtMost).detail(format!(
                "n={} instances={}",
                res.worst_instance.len(),
                res.scanned
            )),
        ])
    });

    log("four-instance lower bound");
    ctx.run("lower-bound", |_| {
        let opt = optimize_bopc_lowerbound(&LowerBoundInstance::default())?;
        let t = opt.thetas;
        Ok(vec![
            claim("worst regret at optimum", 0.1712, opt.worst_regret, 1e-3, Direction::AtLeast),
            claim("theta_a", 0.0, t[0], 2e-3, Direction::Within),
            claim("theta_b", 0.21728, t[1], 2e-3, Direction::Within),
            claim("theta_c", 0.33677, t[2], 2e-3, Direction::Within),
            claim("theta_d", 0.38633, t[3], 2e-3, Direction::Within),
        ])
    });

    log("backward DP on the hard mixture, M = 100000");
    ctx.run("dp-mixture", |_| {
        let mix = MixtureInstance::hard_example(100_000);
        let tables = backward_dp(&mix)?;
        let (b, c) = (0.59, 0.38);
        let th = |s: &[f64], v: f64| tables.threshold(s, v).map_or(f64::NAN, |i| i as f64);
        Ok(vec![
            claim("threshold A(∅,b)", 29396.0, th(&[], b), 0.0, Direction::Within),
            claim("threshold A(∅,c)", 40051.0, th(&[], c), 0.0, Direction::Within),
            claim("threshold A({b},c)", 64026.0, th(&[b], c), 0.0, Direction::Within),
            claim("threshold A({c},b)", 15538.0, th(&[c], b), 0.0, Direction::Within),
            claim("mixture regret", 0.1529, mixture_regret(&mix, &tables)?.value, 1e-4, Direction::AtLeast),
        ])
    });

    log("closed form against simulation");
    ctx.run("closed-form-mc", |ctx| {
        let mut worst = 0.0f64;
        for i in 0..scale.closed_form_instances {
            let c = if i % 2 == 0 { 0.472 } else { 0.611 };
            let curve = ThresholdCurve::Exponential { c };
            let floor = curve.floor();
            let mut rng = StreamRng::new(derive_key(ctx.seed, 70), i as u64);
            let n = 1 + rng.below(8) as usize;
            let inst = Instance::new((0..n).map(|_| floor + (1.0 - floor) * rng.uniform()).collect())?;
            let exact = bopc_exact_regret(&curve, &inst)?.value;
            let cfg = ctx.cfg(scale.closed_form_samples, 7_000 + i as u64).with_method(SimMethod::Direct);
            let mc = estimate_regret(&best_only_policy(curve)?, &inst, &cfg)?;
            worst = worst.max((mc.value - exact).abs() / mc.ci_halfwidth);
        }
        Ok(vec![claim("max |exact - MC| / ci", 0.0, worst, 3.0, Direction::AtMost)
            .detail(format!("{} instances", scale.closed_form_instances))])
    });

    log("best-only c = 0.472 on {1} and 1000 values near 0.5");
    ctx.run("best-only-halves", |ctx| {
        let inst = Instance::two_valued(1.0, 0.5, 1000)?;
        let out = estimate_outcome(&best_only_policy(c472.clone())?, &inst, &ctx.cfg(scale.narrative_samples, 8))?;
        Ok(vec![
            claim("P[accept 1]", 0.66, out.p_best, 0.0, Direction::AtLeast),
            claim("regret", 0.17, out.regret.value, 0.0, Direction::AtMost),
        ])
    });

    log("posted-price revenue");
    ctx.run("posted-price", |ctx| {
        let policy = randomized_uniform_price();
        let mut worst = 0.0f64;
        for i in 0..20u64 {
            let mut rng = StreamRng::new(derive_key(ctx.seed, 90), i);
            let n = 1 + rng.below(10) as usize;
            let mut values: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
            values[0] = 1.0 / E + (1.0 - 1.0 / E) * rng.uniform();
            let inst = RevenueInstance::new(values)?;
            let cfg = ctx.cfg(scale.revenue_samples, 900 + i);
            let r = estimate_revenue_regret(&policy, &inst, &cfg)?;
            let sigma = r.ci_halfwidth / cfg.z();
            worst = worst.max((r.value - 1.0 / E).abs() / sigma);
        }
        Ok(vec![claim("max |regret - 1/e| / sigma", 0.0, worst, 3.0, Direction::AtMost).detail("20 instances")])
    });
    ctx.run("hard-distribution", |ctx| {
        let cfg = ctx.cfg(scale.hard_samples, 10);
        let mean = estimate_hard_distribution_mean(&cfg)?;
        let sigma = mean.ci_halfwidth / cfg.z();
        let spread = (0..=1000)
            .map(|i| 1.0 / E + (1.0 - 1.0 / E) * i as f64 / 1000.0)
            .map(|p| (hard_distribution_fixed_price_revenue(p) - 1.0 / E).abs())
            .fold(0.0, f64::max);
        Ok(vec![
            claim("hard-distribution mean", 2.0 / E, mean.value, 3.0 * sigma, Direction::Within),
            claim("max |fixed-price revenue - 1/e|", 0.0, spread, 1e-12, Direction::AtMost),
        ])
    });

    log("k-select scaling and tail bounds");
    ctx.run("kselect-scaling", |ctx| {
        let mut ratios = Vec::new();
        for (j, k) in [16usize, 64, 256, 1024].into_iter().enumerate() {
            let mix = KSelectHardMixture::rounded(k)?;
            let r = estimate_kselect_mixture_regret(&kselect_policy(k)?, &mix, &ctx.cfg(scale.kselect_trials, 110 + j as u64))?;
            ratios.push(r.value / (k as f64).sqrt());
        }
        let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(vec![claim("max/min regret/sqrt(k)", 3.0, hi / lo, 0.0, Direction::AtMost)
            .detail(format!("ratios {:?}", ratios.iter().map(|r| (r * 1e4).round() / 1e4).collect::<Vec<_>>()))])
    });
    ctx.run("kselect-tails", |_| {
        let mut out = Vec::new();
        for k in [400usize, 1600] {
            let mix = KSelectHardMixture::exact(k)?;
            let s = (k as f64).sqrt();
            out.push(
                claim("P[b < sqrt(k)/20]", 0.25, mix.prob_halves_below(s / 20.0), 0.0, Direction::AtMost)
                    .detail(format!("k={k}")),
            );
            out.push(
                claim("P[a > k/2 - sqrt(k)/10]", 0.65, mix.prob_ones_above(k as f64 / 2.0 - s / 10.0), 0.0, Direction::AtMost)
                    .detail(format!("k={k}")),
            );
        }
        Ok(out)
    });

    log("relaxations: exact <= R_q <= R_q' and Lipschitz soundness");
    ctx.run("relaxation-chain", |ctx| {
        Ok(vec![claim("violations", 0.0, relaxation_violations(ctx.seed)? as f64, 0.0, Direction::Within)])
    });

    ctx.rows
}

/// Counts relaxation-chain and Lipschitz-bound violations over random draws.
fn relaxation_violations(seed: u64) -> Result<usize> {
    use secretary_regret::analytic::{lipschitz_box_bound, relaxed_regret_rq, rtilde5_exponential, CERTIFIED_C};
    use secretary_regret::certifier::Box5;

    let mut violations = 0;
    let curve = ThresholdCurve::Exponential { c: CERTIFIED_C };
    let floor = curve.floor();
    for i in 0..1000u64 {
        let mut rng = StreamRng::new(derive_key(seed, 120), i);
        let n = 2 + rng.below(11) as usize;
        let inst = Instance::new((0..n).map(|_| floor + (1.0 - floor) * rng.uniform()).collect())?;
        let exact = bopc_exact_regret(&curve, &inst)?.value;
        let mut prev = exact;
        for q in (2..=n).rev() {
            let r = relaxed_regret_rq(&curve, &inst, q)?;
            if r < prev - 1e-12 {
                violations += 1;
            }
            prev = r;
        }
    }
    for i in 0..10_000u64 {
        let mut rng = StreamRng::new(derive_key(seed, 121), i);
        let mut lows = [0.0; 5];
        let mut highs = [0.0; 5];
        for d in 0..5 {
            let a = floor + (1.0 - floor) * rng.uniform();
            let w = 0.2 * rng.uniform();
            lows[d] = a;
            highs[d] = (a + w).min(1.0);
        }
        let bx = Box5 { lows, highs };
        let bound = lipschitz_box_bound(&bx)?;
        let mut y: [f64; 5] = std::array::from_fn(|d| lows[d] + (highs[d] - lows[d]) * rng.uniform());
        y.sort_by(|a, b| b.total_cmp(a));
        if !bx.contains(&y) {
            continue;
        }
        let v = rtilde5_exponential(CERTIFIED_C, &y)?;
        if v > bound + 1e-12 {
            violations += 1;
        }
    }
    Ok(violations)
}
