//! Branch-and-bound certification of `sup R̃_5` and small optimizers.
//!
//! Boxes live on a dyadic grid over `[f(1), 1]^5`: a box at depth `d` is the
//! product of cells `u_i` of width `(1 - f(1)) / 2^d`, so its integer
//! coordinates double as a reproducible box ID.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{
    rtilde5_combine, rtilde5_exponential, rtilde5_terms, rtilde_from_thetas, LowerBoundInstance, CERTIFIED_C, LIPSCHITZ_COEFFS,
};
use crate::error::{Error, Result};
use crate::policies::ThresholdCurve;
use crate::rng::StreamRng;

pub const DEFAULT_MAX_DEPTH: u32 = 40;
pub const DEFAULT_BOX_BUDGET: u64 = 10_000_000_000;

/// Breadth-first expansion stops once the frontier is this large; each
/// frontier box is then explored depth-first.
const FRONTIER_LIMIT: usize = 1 << 15;
/// Frontier boxes per parallel batch in the depth-first phase.
const BATCH: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box5 {
    pub lows: [f64; 5],
    pub highs: [f64; 5],
}

impl Box5 {
    /// `[f(1), 1]^5` for `f(t) = exp(-t/c)`.
    pub fn root(c: f64) -> Self {
        let floor = (-1.0 / c).exp();
        Self { lows: [floor; 5], highs: [1.0; 5] }
    }

    /// `(r_1, l_2, l_3, l_4, l_5)`, where `R̃_5` is largest on a sorted box.
    pub fn corner(&self) -> [f64; 5] {
        let mut c = self.lows;
        c[0] = self.highs[0];
        c
    }

    pub fn widths(&self) -> [f64; 5] {
        std::array::from_fn(|i| self.highs[i] - self.lows[i])
    }

    pub fn contains(&self, x: &[f64; 5]) -> bool {
        (0..5).all(|i| self.lows[i] <= x[i] && x[i] <= self.highs[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateStatus {
    Certified,
    Refuted,
    BudgetExceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub target: f64,
    pub curve: ThresholdCurve,
    pub boxes_processed: u64,
    pub max_corner_value: f64,
    pub max_corner: [f64; 5],
    pub max_depth_reached: u32,
    pub status: CertificateStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub max_depth: u32,
    pub box_budget: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { max_depth: DEFAULT_MAX_DEPTH, box_budget: DEFAULT_BOX_BUDGET }
    }
}

/// A dyadic box: depth and the five cell indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Cell {
    depth: u32,
    u: [u64; 5],
}

/// Geometry shared by every box of one run.
struct Grid {
    floor: f64,
    span: f64,
    c: f64,
}

impl Grid {
    fn width(&self, depth: u32) -> f64 {
        self.span / (1u64 << depth) as f64
    }

    fn low(&self, u: u64, depth: u32) -> f64 {
        self.floor + u as f64 * self.width(depth)
    }

    fn high(&self, u: u64, depth: u32) -> f64 {
        if u + 1 == 1u64 << depth {
            1.0
        } else {
            self.floor + (u + 1) as f64 * self.width(depth)
        }
    }

    fn to_box(&self, cell: &Cell) -> Box5 {
        Box5 { lows: cell.u.map(|u| self.low(u, cell.depth)), highs: cell.u.map(|u| self.high(u, cell.depth)) }
    }

    /// Lipschitz slack of any box at `depth`; all sides have equal width.
    fn slack(&self, depth: u32) -> f64 {
        let coeff: f64 = LIPSCHITZ_COEFFS.iter().sum();
        coeff * self.width(depth) * (1.0 + 1e-12)
    }

    fn corner_value(&self, cell: &Cell) -> f64 {
        rtilde5_exponential(self.c, &self.to_box(cell).corner()).unwrap_or(f64::INFINITY)
    }
}

/// A sorted point `x_1 >= ... >= x_5` lies in a cell whose indices are
/// non-increasing, so every other cell can be dropped.
fn sorted_cell(u: &[u64; 5]) -> bool {
    u.windows(2).all(|w| w[0] >= w[1])
}

/// Children in lexicographic order of the low/high bits, skipping those that
/// cannot hold a sorted point.
#[cfg(test)]
fn children(cell: &Cell) -> impl Iterator<Item = (usize, Cell)> + '_ {
    (0..32usize).filter_map(move |bits| {
        let u: [u64; 5] = std::array::from_fn(|i| 2 * cell.u[i] + ((bits >> (4 - i)) & 1) as u64);
        sorted_cell(&u).then_some((bits, Cell { depth: cell.depth + 1, u }))
    })
}

#[derive(Debug, Clone, Copy)]
struct Tally {
    boxes: u64,
    max_value: f64,
    max_corner: [f64; 5],
    depth: u32,
    open_at_limit: bool,
    refuted: bool,
    over_budget: bool,
}

impl Tally {
    fn empty() -> Self {
        Self {
            boxes: 0,
            max_value: f64::NEG_INFINITY,
            max_corner: [0.0; 5],
            depth: 0,
            open_at_limit: false,
            refuted: false,
            over_budget: false,
        }
    }

    fn see(&mut self, value: f64, corner: impl FnOnce() -> [f64; 5], depth: u32) {
        self.boxes += 1;
        self.depth = self.depth.max(depth);
        if value > self.max_value {
            self.max_value = value;
            self.max_corner = corner();
        }
    }

    /// Ties keep the earlier corner, so merging in a fixed order is
    /// deterministic.
    fn merge(mut self, other: Tally) -> Tally {
        self.boxes += other.boxes;
        self.depth = self.depth.max(other.depth);
        if other.max_value > self.max_value {
            self.max_value = other.max_value;
            self.max_corner = other.max_corner;
        }
        self.open_at_limit |= other.open_at_limit;
        self.refuted |= other.refuted;
        self.over_budget |= other.over_budget;
        self
    }
}

/// Evaluates every sorted child of an open `cell`, appending the children
/// that stay open to `open`. Returns `true` on a refutation.
fn expand(grid: &Grid, cell: &Cell, target: f64, tally: &mut Tally, open: &mut Vec<Cell>) -> bool {
    let d = cell.depth + 1;
    // Child corners use the high edge in x_1 and low edges elsewhere; each
    // coordinate has only two candidates.
    let terms: [[[f64; 3]; 2]; 5] = std::array::from_fn(|i| {
        std::array::from_fn(|b| {
            let idx = 2 * cell.u[i] + b as u64;
            let x = if i == 0 { grid.high(idx, d) } else { grid.low(idx, d) };
            rtilde5_terms(i, grid.c, x)
        })
    });
    let slack = grid.slack(d);
    for bits in 0..32usize {
        let b: [usize; 5] = std::array::from_fn(|i| (bits >> (4 - i)) & 1);
        let u: [u64; 5] = std::array::from_fn(|i| 2 * cell.u[i] + b[i] as u64);
        if !sorted_cell(&u) {
            continue;
        }
        let t: [[f64; 3]; 5] = std::array::from_fn(|i| terms[i][b[i]]);
        let value = rtilde5_combine(&t);
        tally.see(value, || t.map(|x| x[0]), d);
        if value >= target {
            tally.refuted = true;
            return true;
        }
        if value + slack >= target {
            open.push(Cell { depth: d, u });
        }
    }
    false
}

/// Depth-first search below an open `root`, stopping at the first refutation
/// or once `budget` boxes have been processed in this subtree.
fn explore(grid: &Grid, root: Cell, target: f64, opts: &CertifyOptions, budget: u64) -> Tally {
    let mut tally = Tally::empty();
    let mut stack = vec![root];
    let mut open = Vec::with_capacity(32);
    while let Some(cell) = stack.pop() {
        if cell.depth >= opts.max_depth {
            tally.open_at_limit = true;
            break;
        }
        if tally.boxes >= budget {
            tally.over_budget = true;
            break;
        }
        open.clear();
        if expand(grid, &cell, target, &mut tally, &mut open) {
            break;
        }
        // Reverse so the lexicographically first child is explored first.
        stack.extend(open.drain(..).rev());
    }
    tally
}

/// Snapshot passed to the progress callback after each breadth-first level
/// and each depth-first batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub boxes_processed: u64,
    pub open_boxes: usize,
    pub depth: u32,
    pub max_corner_value: f64,
}

/// Certifies `sup R̃_5 < target` over sorted points of `[f(1), 1]^5` for
/// `f(t) = exp(-t/0.472)`.
pub fn certify_sup_below(curve: &ThresholdCurve, target: f64, opts: CertifyOptions) -> Result<Certificate> {
    certify_sup_below_with_progress(curve, target, opts, |_| {})
}

pub fn certify_sup_below_with_progress(
    curve: &ThresholdCurve,
    target: f64,
    opts: CertifyOptions,
    mut progress: impl FnMut(Progress),
) -> Result<Certificate> {
    let c = match curve {
        ThresholdCurve::Exponential { c } if (*c - CERTIFIED_C).abs() < 1e-12 => *c,
        ThresholdCurve::Exponential { c } => return Err(Error::UnsupportedCurve(*c)),
        _ => return Err(Error::UnsupportedCurve(f64::NAN)),
    };
    if target.is_nan() || target <= 0.0 {
        return Err(Error::InvalidConfig(format!("target must be positive, got {target}")));
    }
    let floor = (-1.0 / c).exp();
    let grid = Grid { floor, span: 1.0 - floor, c };

    let root = Cell { depth: 0, u: [0; 5] };
    let root_value = grid.corner_value(&root);
    let mut tally = Tally::empty();
    tally.see(root_value, || grid.to_box(&root).corner(), 0);
    if root_value >= target {
        tally.refuted = true;
        return Ok(finish(curve, target, tally));
    }
    let mut frontier = if root_value + grid.slack(0) >= target { vec![root] } else { Vec::new() };

    // Breadth-first phase: level by level, so a refutation stops the whole
    // run at the same point regardless of thread count.
    while !frontier.is_empty() && frontier.len() < FRONTIER_LIMIT {
        let parts: Vec<(Tally, Vec<Cell>)> = frontier
            .par_iter()
            .map(|cell| {
                let mut t = Tally::empty();
                let mut next = Vec::new();
                if cell.depth >= opts.max_depth {
                    t.open_at_limit = true;
                } else {
                    expand(&grid, cell, target, &mut t, &mut next);
                }
                (t, next)
            })
            .collect();
        frontier = Vec::new();
        for (t, next) in parts {
            tally = tally.merge(t);
            frontier.extend(next);
        }
        progress(Progress {
            boxes_processed: tally.boxes,
            open_boxes: frontier.len(),
            depth: tally.depth,
            max_corner_value: tally.max_value,
        });
        if tally.refuted || tally.open_at_limit {
            return Ok(finish(curve, target, tally));
        }
        if tally.boxes >= opts.box_budget {
            tally.over_budget = true;
            return Ok(finish(curve, target, tally));
        }
    }

    // Depth-first phase over fixed batches; each subtree's cap is the budget
    // left before its batch, so the outcome does not depend on scheduling.
    for (done, batch) in frontier.chunks(BATCH).enumerate() {
        let remaining = opts.box_budget.saturating_sub(tally.boxes);
        let parts: Vec<Tally> = batch.par_iter().map(|&cell| explore(&grid, cell, target, &opts, remaining)).collect();
        for t in parts {
            tally = tally.merge(t);
        }
        if tally.boxes >= opts.box_budget && !tally.refuted {
            tally.over_budget = true;
        }
        progress(Progress {
            boxes_processed: tally.boxes,
            open_boxes: frontier.len().saturating_sub((done + 1) * BATCH),
            depth: tally.depth,
            max_corner_value: tally.max_value,
        });
        if tally.refuted || tally.over_budget || tally.open_at_limit {
            break;
        }
    }
    Ok(finish(curve, target, tally))
}

fn finish(curve: &ThresholdCurve, target: f64, tally: Tally) -> Certificate {
    let status = if tally.refuted {
        CertificateStatus::Refuted
    } else if tally.over_budget || tally.open_at_limit {
        CertificateStatus::BudgetExceeded
    } else {
        CertificateStatus::Certified
    };
    Certificate {
        target,
        curve: curve.clone(),
        boxes_processed: tally.boxes,
        max_corner_value: tally.max_value,
        max_corner: tally.max_corner,
        max_depth_reached: tally.depth,
        status,
    }
}

/// Heuristic (not certified) maximum of `R̃_5` for `f(t) = exp(-t/c)`:
/// random sorted starts refined by coordinate pattern search.
pub fn heuristic_rtilde5_max(c: f64, starts: usize, seed: u64) -> ([f64; 5], f64) {
    let floor = (-1.0 / c).exp();
    let eval = |x: &[f64; 5]| -> f64 {
        if x.windows(2).any(|w| w[0] < w[1]) || x[4] < floor || x[0] > 1.0 {
            return f64::NEG_INFINITY;
        }
        rtilde5_exponential(c, x).unwrap_or(f64::NEG_INFINITY)
    };
    (0..starts)
        .into_par_iter()
        .map(|s| {
            let mut rng = StreamRng::new(seed, s as u64);
            let mut x: [f64; 5] = std::array::from_fn(|_| floor + (1.0 - floor) * rng.uniform());
            x.sort_by(|a, b| b.total_cmp(a));
            let mut best = eval(&x);
            let mut step = 0.05;
            while step > 1e-9 {
                let mut improved = false;
                for i in 0..5 {
                    for dir in [-1.0, 1.0] {
                        let mut y = x;
                        y[i] += dir * step;
                        let v = eval(&y);
                        if v > best {
                            best = v;
                            x = y;
                            improved = true;
                        }
                    }
                }
                // Moving x_2..x_5 together follows the ridge where they coincide.
                for k in 1..5 {
                    for dir in [-1.0, 1.0] {
                        let mut y = x;
                        for yi in y.iter_mut().skip(k) {
                            *yi += dir * step;
                        }
                        let v = eval(&y);
                        if v > best {
                            best = v;
                            x = y;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            (x, best)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(([0.0; 5], f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
}

/// Exploratory, uncertified outer search: heuristic `sup R̃_5` for each `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveScanPoint {
    pub c: f64,
    pub heuristic_max: f64,
    pub certified: bool,
}

pub fn scan_exponential_curves(lo: f64, hi: f64, step: f64, starts: usize, seed: u64) -> Vec<CurveScanPoint> {
    let count = ((hi - lo) / step).round() as usize + 1;
    (0..count)
        .map(|k| {
            let c = lo + k as f64 * step;
            let (_, v) = heuristic_rtilde5_max(c, starts, seed);
            CurveScanPoint { c, heuristic_max: v, certified: false }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseOptimum {
    pub x1: f64,
    pub x2: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rtilde2Optimum {
    pub c: f64,
    pub case1: Option<CaseOptimum>,
    pub case2: Option<CaseOptimum>,
    pub value: f64,
}

fn rtilde2_exp(c: f64, x1: f64, x2: f64) -> f64 {
    let th = [-c * x1.ln(), -c * x2.ln()];
    rtilde_from_thetas(&[x1, x2], &th).unwrap_or(f64::INFINITY)
}

/// `-c - ln θ_2 - (1 - θ_2)`: the sign of `∂R̃_2/∂x_1` at fixed `x_2`.
fn case_split(c: f64, x2: f64) -> f64 {
    let t2 = -c * x2.ln();
    -c - t2.ln() - (1.0 - t2)
}

/// Maximizer of `R̃_2` over `x_1` for fixed `x_2`.
fn best_x1(c: f64, x2: f64) -> f64 {
    let h = case_split(c, x2);
    if h > 0.0 {
        1.0
    } else {
        (h / c).exp().clamp(x2, 1.0)
    }
}

/// Grid scan followed by golden-section refinement of a unimodal-near-peak
/// function on `[lo, hi]`.
fn maximize_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const GRID: usize = 2000;
    let h = (hi - lo) / GRID as f64;
    let (mut k_best, mut v_best) = (0, f64::NEG_INFINITY);
    for k in 0..=GRID {
        let v = f(lo + k as f64 * h);
        if v > v_best {
            v_best = v;
            k_best = k;
        }
    }
    let mut a = lo + k_best.saturating_sub(1) as f64 * h;
    let mut b = (lo + (k_best + 1) as f64 * h).min(hi);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (a + b);
    let v = f(x);
    if v >= v_best {
        (x, v)
    } else {
        (lo + k_best as f64 * h, v_best)
    }
}

/// Root of an increasing function on `[lo, hi]` by bisection.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Maximizes `R̃_2` for `f(t) = exp(-t/c)` separately over the two regions
/// `x_1 = 1` (split positive) and the interior stationary `x_1` (split ≤ 0).
pub fn optimize_rtilde2(c: f64) -> Result<Rtilde2Optimum> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidCurve(format!("c must be positive, got {c}")));
    }
    let floor = (-1.0 / c).exp();
    // Stay off x_2 = 1 where θ_2 = 0 and the tail diverges.
    let top = 1.0 - 1e-12;
    let split = |x2: f64| case_split(c, x2);
    let boundary = if split(floor) > 0.0 {
        floor
    } else if split(top) <= 0.0 {
        top
    } else {
        bisect(split, floor, top)
    };

    let case1 = (boundary < top).then(|| {
        let (x2, value) = maximize_1d(|x2| rtilde2_exp(c, 1.0, x2), boundary, top, 1e-9);
        CaseOptimum { x1: 1.0, x2, value }
    });
    let case2 = (boundary > floor).then(|| {
        let (x2, value) = maximize_1d(|x2| rtilde2_exp(c, best_x1(c, x2), x2), floor, boundary, 1e-9);
        CaseOptimum { x1: best_x1(c, x2), x2, value }
    });
    let value = [case1, case2].iter().flatten().map(|o| o.value).fold(f64::NEG_INFINITY, f64::max);
    Ok(Rtilde2Optimum { c, case1, case2, value })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundOptimum {
    pub thetas: [f64; 4],
    pub worst_regret: f64,
    pub regrets: [f64; 4],
}

/// Minimizes the worst of the four regrets over ordered `θ`: a coarse 0.01
/// grid, then pattern search from the incumbent.
pub fn optimize_bopc_lowerbound(inst: &LowerBoundInstance) -> Result<LowerBoundOptimum> {
    let obj = |t: [f64; 4]| inst.objective(t).unwrap_or(f64::INFINITY);

    let coarse: Vec<([f64; 4], f64)> = (0..=100u32)
        .into_par_iter()
        .map(|i| {
            let ta = i as f64 / 100.0;
            let mut best = ([ta; 4], f64::INFINITY);
            for j in i..=100 {
                for k in j..=100 {
                    for l in k..=100 {
                        let t = [ta, j as f64 / 100.0, k as f64 / 100.0, l as f64 / 100.0];
                        let v = obj(t);
                        if v < best.1 {
                            best = (t, v);
                        }
                    }
                }
            }
            best
        })
        .collect();
    let (mut t, mut v) = coarse.into_iter().fold(([0.0; 4], f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });

    let (tt, vv) = pattern_search(&obj, t, 0.01, 1e-9);
    if vv < v {
        t = tt;
        v = vv;
    }
    let regrets = inst.regrets(t)?;
    Ok(LowerBoundOptimum { thetas: t, worst_regret: v, regrets })
}

/// Derivative-free minimization over the ordered simplex with moves in
/// `{-1, 0, 1}^4`.
pub fn pattern_search(obj: &dyn Fn([f64; 4]) -> f64, start: [f64; 4], step0: f64, tol: f64) -> ([f64; 4], f64) {
    let mut t = start;
    let mut v = obj(t);
    let mut step = step0;
    let dirs: Vec<[f64; 4]> =
        (0..81).filter(|&m| m != 40).map(|m: i32| std::array::from_fn(|i| ((m / 3i32.pow(i as u32)) % 3 - 1) as f64)).collect();
    while step > tol {
        let mut improved = false;
        for d in &dirs {
            let cand: [f64; 4] = std::array::from_fn(|i| t[i] + step * d[i]);
            let cv = obj(cand);
            if cv < v {
                t = cand;
                v = cv;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (t, v)
}

/// Pattern search from `starts` random ordered points.
pub fn multistart_bopc_lowerbound(inst: &LowerBoundInstance, starts: usize, seed: u64) -> Vec<LowerBoundOptimum> {
    let obj = |t: [f64; 4]| inst.objective(t).unwrap_or(f64::INFINITY);
    (0..starts)
        .into_par_iter()
        .map(|s| {
            let mut rng = StreamRng::new(seed, s as u64);
            let mut t: [f64; 4] = std::array::from_fn(|_| rng.uniform());
            t.sort_by(f64::total_cmp);
            let (t, v) = pattern_search(&obj, t, 0.05, 1e-9);
            LowerBoundOptimum { thetas: t, worst_regret: v, regrets: inst.regrets(t).unwrap_or([f64::NAN; 4]) }
        })
        .collect()
}
