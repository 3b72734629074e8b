//! Acceptance criteria at full scale. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

use std::f64::consts::E;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use secretary_regret::analytic::{
    bopc_exact_regret, lipschitz_box_bound, pricing_single_value_regret, relaxed_regret_rq, rtilde5_exponential,
    LowerBoundInstance, CERTIFIED_C,
};
use secretary_regret::certifier::{
    certify_sup_below, optimize_bopc_lowerbound, optimize_rtilde2, Box5, CertificateStatus, CertifyOptions,
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
use secretary_regret::rng::StreamRng;
use secretary_regret::{Instance, ThresholdCurve};

type Criterion = (&'static str, fn(&mut Checks));

/// Named checks for one criterion.
#[derive(Default)]
struct Checks(Vec<(bool, String)>);

impl Checks {
    fn check(&mut self, ok: bool, what: String) {
        self.0.push((ok, what));
    }

    fn within(&mut self, name: &str, got: f64, want: f64, tol: f64) {
        self.check((got - want).abs() <= tol, format!("{name} {} vs {} ± {}", g(got), g(want), g(tol)));
    }

    fn at_most(&mut self, name: &str, got: f64, bound: f64) {
        self.check(got <= bound, format!("{name} {} <= {}", g(got), g(bound)));
    }

    fn at_least(&mut self, name: &str, got: f64, bound: f64) {
        self.check(got >= bound, format!("{name} {} >= {}", g(got), g(bound)));
    }
}

fn g(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-3 {
        format!("{x:.3e}")
    } else {
        format!("{x:.6}")
    }
}

fn sigma(halfwidth: f64, cfg: &SimConfig) -> f64 {
    halfwidth / cfg.z()
}

fn two_value_scan(c: &mut Checks) {
    let fam = two_value_family(0.01, 1000).unwrap();
    let cfg = SimConfig::new(1_000_000, 1);
    let res = worst_case_scan(&pricing_curve_policy(ThresholdCurve::Linear), &fam, &cfg).unwrap();
    c.check(res.scanned == 5151, format!("{} instances", res.scanned));
    c.within("max regret", res.report.value, 0.25, 0.005);
}

fn linear_hard_instances(c: &mut Checks) {
    let single = pricing_single_value_regret(&ThresholdCurve::Linear, 0.5).unwrap().value;
    c.within("regret on [0.5]", single, 0.25, 1e-15);
    let inst = Instance::two_valued(1.0, 0.5, 999).unwrap();
    let r = estimate_regret(&pricing_curve_policy(ThresholdCurve::Linear), &inst, &SimConfig::new(1_000_000, 2)).unwrap();
    c.within("regret on [1, 0.5 x 999]", r.value, 0.25, 0.01);
}

fn rtilde2_optimum(c: &mut Checks) {
    let opt = optimize_rtilde2(0.611).unwrap();
    c.at_most("max", opt.value, 0.229 + 1e-3);
    let (c1, c2) = (opt.case1.unwrap(), opt.case2.unwrap());
    c.within("case-1 x2", c1.x2, 0.7448, 1e-3);
    c.within("case-2 x1", c2.x1, 0.4132, 1e-3);
    c.within("case-2 x2", c2.x2, 0.3303, 1e-3);
}

fn certification(c: &mut Checks) {
    let curve = ThresholdCurve::Exponential { c: CERTIFIED_C };
    let target = 0.190;
    let cert = certify_sup_below(&curve, target, CertifyOptions::default()).unwrap();
    c.check(
        cert.status == CertificateStatus::Certified,
        format!("status {:?} after {} boxes (depth {})", cert.status, cert.boxes_processed, cert.max_depth_reached),
    );
    if cert.status == CertificateStatus::Certified {
        let lo = curve.floor();
        let mut worst = 0.0f64;
        for s in 0..1_000_000u64 {
            let mut rng = StreamRng::new(404, s);
            let mut x: [f64; 5] = std::array::from_fn(|_| lo + (1.0 - lo) * rng.uniform());
            x.sort_by(|a, b| b.total_cmp(a));
            if x[4] < 1.0 {
                worst = worst.max(rtilde5_exponential(CERTIFIED_C, &x).unwrap());
            }
        }
        c.check(worst < target, format!("10^6 random points max {worst:.6} < {target}"));
    }
    let fam = random_family(10_000, 10, 0.0, 405).unwrap();
    let cfg = SimConfig::new(20_000, 4);
    let res = worst_case_scan(&best_only_policy(curve).unwrap(), &fam, &cfg).unwrap();
    c.at_most("MC worst-case scan", res.report.value, target + 3.0 * sigma(res.report.ci_halfwidth, &cfg));
}

fn lower_bound_optimum(c: &mut Checks) {
    let opt = optimize_bopc_lowerbound(&LowerBoundInstance::default()).unwrap();
    c.at_least("worst regret", opt.worst_regret, 0.1712 - 1e-3);
    for (i, want) in [0.0, 0.21728, 0.33677, 0.38633].into_iter().enumerate() {
        c.within(&format!("theta[{i}]"), opt.thetas[i], want, 2e-3);
    }
}

fn dp_hard_mixture(c: &mut Checks) {
    let start = Instant::now();
    let mix = MixtureInstance::hard_example(100_000);
    let tables = backward_dp(&mix).unwrap();
    let (b, cc) = (0.59, 0.38);
    for (name, s, v, want) in [
        ("A(∅,b)", vec![], b, 29396),
        ("A(∅,c)", vec![], cc, 40051),
        ("A({b},c)", vec![b], cc, 64026),
        ("A({c},b)", vec![cc], b, 15538),
    ] {
        let got = tables.threshold(&s, v);
        c.check(got == Some(want), format!("{name} = {got:?}, want {want}"));
    }
    let regret = mixture_regret(&mix, &tables).unwrap().value;
    c.at_least("regret", regret, 0.1529 - 1e-4);
    let secs = start.elapsed().as_secs_f64();
    c.check(secs < 60.0, format!("runtime {secs:.2}s < 60s"));
}

fn closed_form_vs_simulation(c: &mut Checks) {
    let mut worst = 0.0f64;
    let mut failures = 0;
    for i in 0..50u64 {
        let cval = if i % 2 == 0 { 0.472 } else { 0.611 };
        let curve = ThresholdCurve::Exponential { c: cval };
        let lo = curve.floor();
        let mut rng = StreamRng::new(700, i);
        let n = 1 + rng.below(8) as usize;
        let inst = Instance::new((0..n).map(|_| lo + (1.0 - lo) * rng.uniform()).collect()).unwrap();
        let exact = bopc_exact_regret(&curve, &inst).unwrap().value;
        let cfg = SimConfig::new(10_000_000, 7_000 + i).with_method(SimMethod::Direct);
        let mc = estimate_regret(&best_only_policy(curve).unwrap(), &inst, &cfg).unwrap();
        let ratio = (mc.value - exact).abs() / mc.ci_halfwidth;
        worst = worst.max(ratio);
        if ratio > 3.0 {
            failures += 1;
        }
    }
    c.check(failures == 0, format!("{failures} of 50 outside 3 half-widths (worst {worst:.3})"));
}

fn narrative(c: &mut Checks) {
    let inst = Instance::two_valued(1.0, 0.5, 1000).unwrap();
    let out = estimate_outcome(
        &best_only_policy(ThresholdCurve::Exponential { c: 0.472 }).unwrap(),
        &inst,
        &SimConfig::new(1_000_000, 8),
    )
    .unwrap();
    c.check(out.p_best > 0.66, format!("P[accept 1] {:.4} > 0.66", out.p_best));
    c.check(out.regret.value < 0.17, format!("regret {:.4} < 0.17", out.regret.value));
}

fn revenue(c: &mut Checks) {
    let policy = randomized_uniform_price();
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let mut rng = StreamRng::new(900, i);
        let n = 1 + rng.below(10) as usize;
        let mut values: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        values[0] = 1.0 / E + (1.0 - 1.0 / E) * rng.uniform();
        let inst = RevenueInstance::new(values).unwrap();
        let cfg = SimConfig::new(1_000_000, 900 + i);
        let r = estimate_revenue_regret(&policy, &inst, &cfg).unwrap();
        worst = worst.max((r.value - 1.0 / E).abs() / sigma(r.ci_halfwidth, &cfg));
    }
    c.at_most("max |regret - 1/e| in sigmas over 20 instances", worst, 3.0);

    let cfg = SimConfig::new(10_000_000, 10);
    let mean = estimate_hard_distribution_mean(&cfg).unwrap();
    c.within("hard-distribution mean", mean.value, 2.0 / E, 3.0 * sigma(mean.ci_halfwidth, &cfg));

    let spread = (0..=10_000)
        .map(|i| 1.0 / E + (1.0 - 1.0 / E) * i as f64 / 10_000.0)
        .map(|p| (hard_distribution_fixed_price_revenue(p) - 1.0 / E).abs())
        .fold(0.0, f64::max);
    c.at_most("fixed-price revenue spread", spread, 1e-12);
}

fn kselect(c: &mut Checks) {
    let mut ratios = Vec::new();
    for (j, k) in [16usize, 64, 256, 1024].into_iter().enumerate() {
        let mix = KSelectHardMixture::rounded(k).unwrap();
        let r =
            estimate_kselect_mixture_regret(&kselect_policy(k).unwrap(), &mix, &SimConfig::new(20_000, 110 + j as u64)).unwrap();
        ratios.push(r.value / (k as f64).sqrt());
    }
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    c.at_most(&format!("max/min regret/sqrt(k) over {ratios:.4?}"), hi / lo, 3.0);
    for k in [400usize, 1600] {
        let mix = KSelectHardMixture::exact(k).unwrap();
        let s = (k as f64).sqrt();
        c.at_most(&format!("k={k} P[b < sqrt(k)/20]"), mix.prob_halves_below(s / 20.0), 0.25);
        c.at_most(&format!("k={k} P[a > k/2 - sqrt(k)/10]"), mix.prob_ones_above(k as f64 / 2.0 - s / 10.0), 0.65);
    }
}

fn relaxation_chain(c: &mut Checks) {
    let curve = ThresholdCurve::Exponential { c: CERTIFIED_C };
    let lo = curve.floor();
    let mut chain = 0;
    for i in 0..10_000u64 {
        let mut rng = StreamRng::new(1100, i);
        let n = 2 + rng.below(11) as usize;
        let inst = Instance::new((0..n).map(|_| lo + (1.0 - lo) * rng.uniform()).collect()).unwrap();
        let mut prev = bopc_exact_regret(&curve, &inst).unwrap().value;
        for q in (2..=n).rev() {
            let r = relaxed_regret_rq(&curve, &inst, q).unwrap();
            if r < prev - 1e-12 {
                chain += 1;
            }
            prev = r;
        }
    }
    c.check(chain == 0, format!("{chain} chain violations on 10^4 instances"));

    let mut lipschitz = 0;
    for i in 0..10_000u64 {
        let mut rng = StreamRng::new(1101, i);
        let lows: [f64; 5] = std::array::from_fn(|_| lo + (1.0 - lo) * rng.uniform());
        let highs: [f64; 5] = std::array::from_fn(|d| (lows[d] + 0.2 * rng.uniform()).min(1.0));
        let bx = Box5 { lows, highs };
        let bound = lipschitz_box_bound(&bx).unwrap();
        let mut y: [f64; 5] = std::array::from_fn(|d| lows[d] + (highs[d] - lows[d]) * rng.uniform());
        y.sort_by(|a, b| b.total_cmp(a));
        if bx.contains(&y) && y[4] < 1.0 && rtilde5_exponential(CERTIFIED_C, &y).unwrap() > bound + 1e-12 {
            lipschitz += 1;
        }
    }
    c.check(lipschitz == 0, format!("{lipschitz} Lipschitz violations on 10^4 (box, point) pairs"));
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("linear pricing curve, two-value scan", two_value_scan),
        ("linear pricing curve, hard instances", linear_hard_instances),
        ("R~2 optimum at c = 0.611", rtilde2_optimum),
        ("certified sup R~5 < 0.190 at c = 0.472", certification),
        ("four-instance lower bound", lower_bound_optimum),
        ("backward DP on the hard mixture", dp_hard_mixture),
        ("closed form vs simulation", closed_form_vs_simulation),
        ("best-only on {1} and 1000 halves", narrative),
        ("posted-price revenue", revenue),
        ("k-select scaling and tails", kselect),
        ("relaxation chain and Lipschitz soundness", relaxation_chain),
    ];
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        for i in 1..=criteria.len() {
            println!("criterion {i}: test");
        }
        return;
    }
    let filter: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = format!("criterion {}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| **f == (i + 1).to_string()) {
            continue;
        }
        let start = Instant::now();
        let mut checks = Checks::default();
        let outcome = catch_unwind(AssertUnwindSafe(|| run(&mut checks)));
        let secs = start.elapsed().as_secs_f64();
        let pass = outcome.is_ok() && checks.0.iter().all(|(ok, _)| *ok);
        if !pass {
            failed += 1;
        }
        println!("{id} ({name}): {} [{secs:.1}s]", if pass { "PASS" } else { "FAIL" });
        for (ok, what) in &checks.0 {
            println!("    {} {what}", if *ok { "ok  " } else { "FAIL" });
        }
        if outcome.is_err() {
            println!("    FAIL panicked");
        }
    }
    println!("acceptance: {} failed", failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
