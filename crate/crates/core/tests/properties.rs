use proptest::prelude::*;

use secretary_regret::analytic::{
    bopc_exact_regret, bopc_regret, lipschitz_box_bound, relaxed_regret_rq, relaxed_regret_rtilde, rtilde5_exponential,
    CERTIFIED_C,
};
use secretary_regret::certifier::Box5;
use secretary_regret::extensions::kselect::kselect_policy;
use secretary_regret::extensions::revenue::{randomized_uniform_price, RevenueInstance};
use secretary_regret::model::ArrivalSample;
use secretary_regret::rng::StreamRng;
use secretary_regret::{Instance, ThresholdCurve};

fn floor(c: f64) -> f64 {
    (-1.0 / c).exp()
}

/// Sorted values in `[f(1), 1]` for `c`, length `2..=max`.
fn feasible_values(c: f64, max: usize) -> impl Strategy<Value = Vec<f64>> {
    let lo = floor(c);
    prop::collection::vec(lo..=1.0, 2..=max).prop_map(|mut v| {
        v.sort_by(|a, b| b.total_cmp(a));
        v
    })
}

/// `sup_y R̃_q(head, y)` over tail levels `y` in `[f(1), x_{q-1}]`: a grid,
/// then golden-section refinement around the best grid point.
fn sup_equalised_tail(curve: &ThresholdCurve, head: &[f64], q: usize) -> f64 {
    let lo = curve.floor();
    let hi = head[q - 2];
    let eval = |y: f64| {
        let mut h = head.to_vec();
        h.push(y);
        relaxed_regret_rtilde(curve, &h, q).unwrap_or(f64::NEG_INFINITY)
    };
    let steps = 2000;
    let at = |k: usize| lo + (hi - lo) * k as f64 / steps as f64;
    let k = (0..=steps).max_by(|&a, &b| eval(at(a)).total_cmp(&eval(at(b)))).unwrap();
    let (mut a, mut b) = (at(k.saturating_sub(1)), at((k + 1).min(steps)));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-12 {
        let (m1, m2) = (b - phi * (b - a), a + phi * (b - a));
        if eval(m1) < eval(m2) {
            a = m1;
        } else {
            b = m2;
        }
    }
    eval(at(k)).max(eval((a + b) / 2.0))
}

fn curve_c() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.472), Just(0.611), 0.3..0.9f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn relaxation_chain((c, values) in curve_c().prop_flat_map(|c| (Just(c), feasible_values(c, 12)))) {
        let curve = ThresholdCurve::Exponential { c };
        let inst = Instance::new(values).unwrap();
        let exact = bopc_exact_regret(&curve, &inst).unwrap().value;
        let n = inst.len();
        let mut prev = exact;
        for q in (2..=n).rev() {
            let r = relaxed_regret_rq(&curve, &inst, q).unwrap();
            prop_assert!(r >= prev - 1e-12, "R_{} = {} < {}", q, r, prev);
            prev = r;
        }
        prop_assert!((relaxed_regret_rq(&curve, &inst, n).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn equalised_tail_dominates(
        (c, values) in curve_c().prop_flat_map(|c| (Just(c), feasible_values(c, 10))),
        q in 2usize..6,
    ) {
        let curve = ThresholdCurve::Exponential { c };
        prop_assume!(values.len() >= q && values[q - 2] < 1.0);
        let inst = Instance::new(values.clone()).unwrap();
        let rq = relaxed_regret_rq(&curve, &inst, q).unwrap();
        let best = sup_equalised_tail(&curve, &values[..q - 1], q);
        prop_assert!(best >= rq - 1e-9, "sup R~ {} < R {}", best, rq);
    }

    #[test]
    fn exact_regret_is_between_zero_and_best(
        c in curve_c(),
        values in prop::collection::vec(0.0..=1.0f64, 1..15),
    ) {
        let curve = ThresholdCurve::Exponential { c };
        let inst = Instance::new(values).unwrap();
        let r = bopc_regret(&curve, &inst).unwrap().value;
        prop_assert!(r >= -1e-12 && r <= inst.best() + 1e-12);
    }

    #[test]
    fn lipschitz_bound_dominates_points(
        lows in prop::array::uniform5(0.0..1.0f64),
        widths in prop::array::uniform5(0.0..0.3f64),
        seed in any::<u64>(),
    ) {
        let lo = floor(CERTIFIED_C);
        let lows = lows.map(|u| lo + (1.0 - lo) * u);
        let highs: [f64; 5] = std::array::from_fn(|d| (lows[d] + widths[d]).min(1.0));
        let bx = Box5 { lows, highs };
        let bound = lipschitz_box_bound(&bx).unwrap();
        let mut rng = StreamRng::new(seed, 0);
        for _ in 0..100 {
            let mut y: [f64; 5] = std::array::from_fn(|d| lows[d] + (highs[d] - lows[d]) * rng.uniform());
            y.sort_by(|a, b| b.total_cmp(a));
            if !bx.contains(&y) {
                continue;
            }
            let v = rtilde5_exponential(CERTIFIED_C, &y).unwrap();
            prop_assert!(v <= bound + 1e-12, "{} > {}", v, bound);
        }
    }

    #[test]
    fn kselect_respects_budget(
        values in prop::collection::vec(0.0..=1.0f64, 1..200),
        k in 1usize..40,
        seed in any::<u64>(),
    ) {
        let policy = kselect_policy(k).unwrap();
        let arrival = ArrivalSample::draw(values.len(), &mut StreamRng::new(seed, 0));
        let picked = policy.run(&values, &arrival).unwrap();
        prop_assert!(picked.len() <= k);
        let mut sorted = picked.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), picked.len());
        prop_assert!(picked.iter().all(|&i| i < values.len()));
    }

    #[test]
    fn posted_price_regret_is_one_over_e_above_threshold(
        top in (1.0 / std::f64::consts::E)..=1.0f64,
        rest in prop::collection::vec(0.0..=1.0f64, 0..10),
    ) {
        let mut values = vec![top];
        values.extend(rest.into_iter().map(|v| v * top));
        let inst = RevenueInstance::new(values).unwrap();
        let r = randomized_uniform_price().exact_regret(&inst).value;
        prop_assert!((r - 1.0 / std::f64::consts::E).abs() < 1e-12);
    }
}
