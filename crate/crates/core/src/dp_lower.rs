//! Optimal stopping on a known mixture of padded inputs.
//!
//! Branch `k` (probability `p_k`) places the values `V_k` uniformly at random
//! among `M` slots and fills the rest with zeros. The optimal policy only
//! needs the set `S` of nonzero values seen so far and the slot index `i`;
//! backward induction over `i` gives both the decision `A*(S, v, i)` and the
//! per-branch continuation `E(k, S, i)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RegretReport;

/// Largest supported `|V|`; subsets are bitmasks.
pub const MAX_SUPPORT: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub p: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureInstance {
    pub support: Vec<f64>,
    pub branches: Vec<Branch>,
    #[serde(rename = "M")]
    pub m: usize,
}

impl MixtureInstance {
    /// The hard three-branch mixture with `a = 1, b = 0.59, c = 0.38`.
    pub fn hard_example(m: usize) -> Self {
        let (a, b, c) = (1.0, 0.59, 0.38);
        Self {
            support: vec![a, b, c],
            branches: vec![
                Branch { p: 0.46, values: vec![a, b, c] },
                Branch { p: 0.27, values: vec![b, c] },
                Branch { p: 0.27, values: vec![c] },
            ],
            m,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mix: Self = serde_json::from_str(s)?;
        mix.validate()?;
        Ok(mix)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidMixture(msg));
        if self.support.is_empty() {
            return bad("empty support".into());
        }
        if self.support.len() > MAX_SUPPORT {
            return Err(Error::StateSpaceTooLarge(format!("|V| = {} exceeds {MAX_SUPPORT}", self.support.len())));
        }
        for (i, &v) in self.support.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("support value {v} is not positive"));
            }
            if self.support[..i].contains(&v) {
                return bad(format!("support value {v} repeated"));
            }
        }
        if self.branches.is_empty() {
            return bad("no branches".into());
        }
        let mut total = 0.0;
        for (k, br) in self.branches.iter().enumerate() {
            if !(br.p >= 0.0 && br.p.is_finite()) {
                return bad(format!("branch {k} has probability {}", br.p));
            }
            total += br.p;
            if br.values.is_empty() {
                return bad(format!("branch {k} has no values"));
            }
            if br.values.len() > self.m {
                return bad(format!("branch {k} has more values than slots"));
            }
            self.mask_of(&br.values)?;
        }
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("probabilities sum to {total}"));
        }
        if self.m == 0 || self.m > u32::MAX as usize {
            return bad(format!("slot count {} out of range", self.m));
        }
        Ok(())
    }

    /// Bitmask of a set of support values.
    pub fn mask_of(&self, values: &[f64]) -> Result<u32> {
        let mut mask = 0u32;
        for &v in values {
            let j = self
                .support
                .iter()
                .position(|&s| s == v)
                .ok_or_else(|| Error::InvalidMixture(format!("{v} is not in the support")))?;
            if mask & (1 << j) != 0 {
                return Err(Error::InvalidMixture(format!("{v} repeated within a branch")));
            }
            mask |= 1 << j;
        }
        Ok(mask)
    }

    fn branch_masks(&self) -> Vec<u32> {
        self.branches.iter().map(|b| self.mask_of(&b.values).expect("validated")).collect()
    }
}

/// `P(n, m) / P(d, m)` as a product of ratios; zero when `m > n`.
fn falling_ratio(n: usize, d: usize, m: usize) -> f64 {
    if m > n {
        return 0.0;
    }
    (0..m).map(|j| (n - j) as f64 / (d - j) as f64).product()
}

/// Probability that the input is branch `k`, the values `S` occupy slots
/// before `i`, and `v` sits in slot `i` (1-based):
/// `p_k P(i-1, |S|) P(M-i, |V_k|-|S|-1) / P(M, |V_k|)`.
pub fn arrival_probability(mix: &MixtureInstance, k: usize, s: u32, v: usize, i: usize) -> f64 {
    let vk = mix.mask_of(&mix.branches[k].values).unwrap_or(0);
    arrival_probability_masks(mix.branches[k].p, vk, mix.m, s, v, i)
}

fn arrival_probability_masks(p: f64, vk: u32, m: usize, s: u32, v: usize, i: usize) -> f64 {
    let sv = s | (1 << v);
    if s & (1 << v) != 0 || sv & !vk != 0 || i == 0 || i > m {
        return 0.0;
    }
    let size = vk.count_ones() as usize;
    let seen = s.count_ones() as usize;
    let later = size - seen - 1;
    // Split P(M, |V_k|) into P(M, |S|) · P(M-|S|, later) · (M - |S| - later).
    p * falling_ratio(i - 1, m, seen) * falling_ratio(m - i, m - seen, later) / (m - seen - later) as f64
}

/// Decision runs for one `(S, v)`: ascending `(first slot, accept)` pairs
/// covering `1..=M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRule {
    pub runs: Vec<(u32, bool)>,
}

impl DecisionRule {
    pub fn accepts(&self, i: usize) -> bool {
        let pos = self.runs.partition_point(|&(start, _)| start as usize <= i);
        pos > 0 && self.runs[pos - 1].1
    }

    /// Reject-then-accept (or always one of the two).
    pub fn is_monotone(&self) -> bool {
        matches!(self.runs.as_slice(), [_] | [(_, false), (_, true)])
    }

    /// First slot from which the rule accepts through `M`, if it ends accepting.
    pub fn threshold(&self) -> Option<usize> {
        self.runs.last().filter(|r| r.1).map(|r| r.0 as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DPTables {
    pub mixture: MixtureInstance,
    /// `E(k, ∅, 1)` per branch.
    pub initial_values: Vec<f64>,
    /// Indexed by `S * |V| + v`; `None` when `v ∈ S` or `S ∪ {v}` fits no branch.
    pub rules: Vec<Option<DecisionRule>>,
}

impl DPTables {
    pub fn rule(&self, s: u32, v: usize) -> Option<&DecisionRule> {
        self.rules.get(s as usize * self.mixture.support.len() + v)?.as_ref()
    }

    /// `A*(S, v, i)`; unreachable states accept.
    pub fn accepts(&self, s: u32, v: usize, i: usize) -> bool {
        self.rule(s, v).is_none_or(|r| r.accepts(i))
    }

    pub fn threshold(&self, s: &[f64], v: f64) -> Option<usize> {
        let mask = self.mixture.mask_of(s).ok()?;
        let j = self.mixture.support.iter().position(|&x| x == v)?;
        self.rule(mask, j)?.threshold()
    }
}

/// Backward induction from slot `M` to slot 1.
pub fn backward_dp(mix: &MixtureInstance) -> Result<DPTables> {
    mix.validate()?;
    let nv = mix.support.len();
    let m = mix.m;
    let masks = mix.branch_masks();
    let nk = masks.len();
    let nsets = 1usize << nv;
    let idx = |k: usize, s: usize| k * nsets + s;
    let invalid = f64::NEG_INFINITY;

    // E for slot i + 1 (`next`) and slot i (`cur`).
    let mut next = vec![invalid; nk * nsets];
    let mut cur = vec![invalid; nk * nsets];
    for (k, &vk) in masks.iter().enumerate() {
        for s in 0..nsets as u32 {
            if s & !vk != 0 {
                continue;
            }
            let rest = vk & !s;
            next[idx(k, s as usize)] = match rest.count_ones() {
                0 => 0.0,
                1 => mix.support[rest.trailing_zeros() as usize],
                _ => invalid,
            };
        }
    }

    let mut decisions: Vec<Option<Vec<(u32, bool)>>> = vec![None; nsets * nv];
    let mut record = |s: usize, v: usize, i: usize, accept: bool| {
        let runs = decisions[s * nv + v].get_or_insert_with(Vec::new);
        match runs.last_mut() {
            Some(last) if last.1 == accept => last.0 = i as u32,
            _ => runs.push((i as u32, accept)),
        }
    };
    for s in 0..nsets {
        for v in 0..nv {
            if s & (1 << v) == 0 && masks.iter().any(|&vk| (s | 1 << v) as u32 & !vk == 0) {
                record(s, v, m, true);
            }
        }
    }

    let mut accept = vec![true; nsets * nv];
    for i in (1..m).rev() {
        // Decisions at slot i from the continuation at slot i + 1.
        for s in 0..nsets as u32 {
            for v in 0..nv {
                if s & (1 << v) != 0 {
                    continue;
                }
                let sv = (s | 1 << v) as usize;
                let (mut num, mut den) = (0.0, 0.0);
                for (k, &vk) in masks.iter().enumerate() {
                    let w = arrival_probability_masks(mix.branches[k].p, vk, m, s, v, i);
                    if w > 0.0 {
                        num += w * next[idx(k, sv)];
                        den += w;
                    }
                }
                if den > 0.0 {
                    let take = mix.support[v] >= num / den;
                    accept[s as usize * nv + v] = take;
                    record(s as usize, v, i, take);
                }
            }
        }
        // E(k, S, i): a nonzero value or a zero arrives at slot i.
        let slots_left = (m - i + 1) as f64;
        for (k, &vk) in masks.iter().enumerate() {
            for s in 0..nsets as u32 {
                let e = &mut cur[idx(k, s as usize)];
                *e = invalid;
                if s & !vk != 0 {
                    continue;
                }
                let rest = vk & !s;
                let left = rest.count_ones() as usize;
                if left > m - i + 1 {
                    continue;
                }
                let mut total = 0.0;
                for v in 0..nv {
                    if rest & (1 << v) == 0 {
                        continue;
                    }
                    total += if accept[s as usize * nv + v] { mix.support[v] } else { next[idx(k, (s | 1 << v) as usize)] };
                }
                let zeros = (m - i + 1 - left) as f64;
                if zeros > 0.0 {
                    total += zeros * next[idx(k, s as usize)];
                }
                *e = total / slots_left;
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }

    let initial_values = (0..nk).map(|k| next[idx(k, 0)]).collect();
    let rules = decisions
        .into_iter()
        .map(|runs| {
            runs.map(|mut runs| {
                runs.reverse();
                DecisionRule { runs }
            })
        })
        .collect();
    Ok(DPTables { mixture: mix.clone(), initial_values, rules })
}

/// `Σ_k p_k (max V_k - E(k, ∅, 1))`.
pub fn mixture_regret(mix: &MixtureInstance, tables: &DPTables) -> Result<RegretReport> {
    if &tables.mixture != mix {
        return Err(Error::TableMismatch);
    }
    let regret = mix
        .branches
        .iter()
        .zip(&tables.initial_values)
        .map(|(br, &e)| br.p * (br.values.iter().copied().fold(f64::NEG_INFINITY, f64::max) - e))
        .sum();
    Ok(RegretReport::exact(regret))
}
