//! Domain types shared by every module: instances, arrival samples, the
//! policy interface and regret reports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// The adversary's values, kept in non-increasing order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Instance {
    values: Vec<f64>,
}

impl Instance {
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyInstance);
        }
        if let Some((index, &value)) = raw.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::ValueOutOfRange { index, value });
        }
        let mut values = raw;
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { values })
    }

    /// `head` followed by `zeros` zero values.
    pub fn with_zeros(head: &[f64], zeros: usize) -> Result<Self> {
        let mut raw = Vec::with_capacity(head.len() + zeros);
        raw.extend_from_slice(head);
        raw.resize(head.len() + zeros, 0.0);
        Self::new(raw)
    }

    /// `top` followed by `copies` copies of `rest`.
    pub fn two_valued(top: f64, rest: f64, copies: usize) -> Result<Self> {
        let mut raw = vec![rest; copies];
        raw.push(top);
        Self::new(raw)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Hindsight optimum `x_1`.
    pub fn best(&self) -> f64 {
        self.values[0]
    }

    /// Distinct values with multiplicities, largest first.
    pub fn classes(&self) -> ValueClasses {
        ValueClasses::from_sorted(&self.values)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.into_instance()
    }
}

/// On-disk instance format: `{"values": [...], "pad_zeros": 99997}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub values: Vec<f64>,
    #[serde(default)]
    pub pad_zeros: usize,
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<Instance> {
        Instance::with_zeros(&self.values, self.pad_zeros)
    }
}

/// Run-length view of an instance. Used by simulators that do not need to
/// materialise every copy of a repeated value.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueClasses {
    pub values: Vec<f64>,
    pub counts: Vec<u64>,
    /// `cumulative[j]` = number of items in classes `0..=j`.
    pub cumulative: Vec<u64>,
}

impl ValueClasses {
    fn from_sorted(sorted: &[f64]) -> Self {
        let mut values: Vec<f64> = Vec::new();
        let mut counts: Vec<u64> = Vec::new();
        for &v in sorted {
            match values.last() {
                Some(&last) if last == v => *counts.last_mut().unwrap() += 1,
                _ => {
                    values.push(v);
                    counts.push(1);
                }
            }
        }
        let cumulative = counts
            .iter()
            .scan(0u64, |acc, &c| {
                *acc += c;
                Some(*acc)
            })
            .collect();
        Self { values, counts, cumulative }
    }

    pub fn total(&self) -> u64 {
        *self.cumulative.last().unwrap_or(&0)
    }

    /// Class of the item at 0-based `rank` in the sorted order.
    #[inline]
    pub fn class_of_rank(&self, rank: u64) -> usize {
        self.cumulative.partition_point(|&c| c <= rank)
    }
}

/// Arrival times (aligned with the sorted values) plus one tie-break key per
/// value. Keys only matter when two equal values are compared.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalSample {
    pub times: Vec<f64>,
    pub keys: Vec<f64>,
}

impl ArrivalSample {
    pub fn draw(n: usize, rng: &mut StreamRng) -> Self {
        let mut times = Vec::with_capacity(n);
        let mut keys = Vec::with_capacity(n);
        Self::redraw_into(n, rng, &mut times, &mut keys);
        Self { times, keys }
    }

    pub(crate) fn redraw_into(n: usize, rng: &mut StreamRng, times: &mut Vec<f64>, keys: &mut Vec<f64>) {
        loop {
            times.clear();
            keys.clear();
            for _ in 0..n {
                times.push(rng.uniform());
                keys.push(rng.uniform());
            }
            if n < 2 || all_distinct(times) {
                return;
            }
        }
    }

    /// Fixed times; ties between equal values favour the lower sorted index.
    pub fn from_times(times: Vec<f64>) -> Self {
        let n = times.len();
        let keys = (0..n).map(|i| (n - i) as f64 / n as f64).collect();
        Self { times, keys }
    }

    pub fn with_keys(times: Vec<f64>, keys: Vec<f64>) -> Self {
        Self { times, keys }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.times.len() != n || self.keys.len() != n {
            return Err(Error::ArrivalMismatch(format!(
                "expected {n} times and keys, got {} and {}",
                self.times.len(),
                self.keys.len()
            )));
        }
        if self.times.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::ArrivalMismatch("arrival time outside [0, 1]".into()));
        }
        if !all_distinct(&self.times) {
            return Err(Error::ArrivalMismatch("arrival times must be distinct".into()));
        }
        Ok(())
    }

    /// Indices into the sorted values, in arrival order.
    pub fn order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.times.len()).collect();
        order.sort_by(|&a, &b| self.times[a].total_cmp(&self.times[b]));
        order
    }
}

fn all_distinct(times: &[f64]) -> bool {
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.windows(2).all(|w| w[0] != w[1])
}

/// A value together with its tie-break key; compared lexicographically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ranked {
    pub value: f64,
    pub key: f64,
}

impl Ranked {
    #[inline]
    pub fn beats(&self, other: &Ranked) -> bool {
        self.value > other.value || (self.value == other.value && self.key > other.key)
    }
}

/// What a policy sees when a value arrives.
#[derive(Debug, Clone, Copy)]
pub struct Arrival {
    pub value: f64,
    pub key: f64,
    pub time: f64,
    /// 0-based position in the arrival order.
    pub slot: usize,
    /// Position of the value in the sorted instance (not visible to a real
    /// online algorithm; exposed for diagnostics).
    pub index: usize,
}

impl Arrival {
    #[inline]
    pub fn ranked(&self) -> Ranked {
        Ranked { value: self.value, key: self.key }
    }
}

/// Everything observed strictly before the current arrival.
#[derive(Debug, Clone, Copy, Default)]
pub struct History {
    pub best: Option<Ranked>,
    pub seen: usize,
}

impl History {
    #[inline]
    pub fn record(&mut self, arrival: &Arrival) {
        let r = arrival.ranked();
        if self.best.is_none_or(|b| r.beats(&b)) {
            self.best = Some(r);
        }
        self.seen += 1;
    }

    /// True if `arrival` beats every earlier value.
    #[inline]
    pub fn is_running_max(&self, arrival: &Arrival) -> bool {
        self.best.is_none_or(|b| arrival.ranked().beats(&b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyDecision {
    pub accept: bool,
}

impl PolicyDecision {
    pub const ACCEPT: Self = Self { accept: true };
    pub const SKIP: Self = Self { accept: false };

    pub fn from_bool(accept: bool) -> Self {
        Self { accept }
    }
}

/// Structural description a simulator may exploit to avoid replaying every
/// arrival. `Opaque` policies are always simulated arrival by arrival.
#[derive(Debug, Clone, Copy)]
pub enum PolicyShape<'a> {
    Opaque,
    AcceptAll,
    AcceptNone,
    AlphaLaw(f64),
    Pricing(&'a crate::policies::ThresholdCurve),
    BestOnly(&'a crate::policies::ThresholdCurve),
}

/// A single-choice stopping rule. Implementations are immutable; all per-run
/// state lives in the [`History`] maintained by the caller.
pub trait Policy: Send + Sync {
    fn decide(&self, arrival: &Arrival, history: &History) -> PolicyDecision;

    fn shape(&self) -> PolicyShape<'_> {
        PolicyShape::Opaque
    }

    fn name(&self) -> String {
        "custom".to_string()
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn decide(&self, arrival: &Arrival, history: &History) -> PolicyDecision {
        (**self).decide(arrival, history)
    }
    fn shape(&self) -> PolicyShape<'_> {
        (**self).shape()
    }
    fn name(&self) -> String {
        (**self).name()
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn decide(&self, arrival: &Arrival, history: &History) -> PolicyDecision {
        (**self).decide(arrival, history)
    }
    fn shape(&self) -> PolicyShape<'_> {
        (**self).shape()
    }
    fn name(&self) -> String {
        (**self).name()
    }
}

/// Replay one arrival sample. Returns the accepted value, or 0 if nothing
/// was accepted.
pub fn run_policy<P: Policy + ?Sized>(policy: &P, inst: &Instance, arrival: &ArrivalSample) -> Result<f64> {
    arrival.validate(inst.len())?;
    Ok(replay(policy, inst.values(), arrival, &arrival.order()))
}

/// Unchecked replay along a precomputed arrival order.
#[inline]
pub(crate) fn replay<P: Policy + ?Sized>(policy: &P, values: &[f64], arrival: &ArrivalSample, order: &[usize]) -> f64 {
    replay_index(policy, values, arrival, order).map_or(0.0, |i| values[i])
}

/// As [`replay`], returning the sorted index of the accepted value.
#[inline]
pub(crate) fn replay_index<P: Policy + ?Sized>(
    policy: &P,
    values: &[f64],
    arrival: &ArrivalSample,
    order: &[usize],
) -> Option<usize> {
    let mut history = History::default();
    for (slot, &index) in order.iter().enumerate() {
        let a = Arrival { value: values[index], key: arrival.keys[index], time: arrival.times[index], slot, index };
        if policy.decide(&a, &history).accept {
            return Some(index);
        }
        history.record(&a);
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportKind {
    Exact,
    CertifiedUpper,
    CertifiedLower,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub value: f64,
    pub kind: ReportKind,
    pub ci_halfwidth: f64,
    pub samples: u64,
}

impl RegretReport {
    pub fn exact(value: f64) -> Self {
        Self { value, kind: ReportKind::Exact, ci_halfwidth: 0.0, samples: 0 }
    }

    pub fn certified_upper(value: f64) -> Self {
        Self { value, kind: ReportKind::CertifiedUpper, ci_halfwidth: 0.0, samples: 0 }
    }

    pub fn certified_lower(value: f64) -> Self {
        Self { value, kind: ReportKind::CertifiedLower, ci_halfwidth: 0.0, samples: 0 }
    }

    pub fn monte_carlo(value: f64, ci_halfwidth: f64, samples: u64) -> Self {
        debug_assert!(samples > 0 && ci_halfwidth > 0.0);
        Self { value, kind: ReportKind::MonteCarlo, ci_halfwidth, samples }
    }

    /// Whether `other` lies within `k` half-widths of this estimate.
    pub fn agrees_with(&self, other: f64, k: f64) -> bool {
        (self.value - other).abs() <= k * self.ci_halfwidth
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct AcceptFirst;
    impl Policy for AcceptFirst {
        fn decide(&self, _: &Arrival, _: &History) -> PolicyDecision {
            PolicyDecision::ACCEPT
        }
    }

    struct Never;
    impl Policy for Never {
        fn decide(&self, _: &Arrival, _: &History) -> PolicyDecision {
            PolicyDecision::SKIP
        }
    }

    #[test]
    fn make_instance_sorts() {
        let inst = Instance::new(vec![0.5, 1.0, 0.38]).unwrap();
        assert_eq!(inst.values(), &[1.0, 0.5, 0.38]);
        assert_eq!(Instance::new(vec![0.0]).unwrap().values(), &[0.0]);
    }

    #[test]
    fn make_instance_errors() {
        assert_eq!(Instance::new(vec![]), Err(Error::EmptyInstance));
        assert_eq!(Instance::new(vec![0.2, 1.5]), Err(Error::ValueOutOfRange { index: 1, value: 1.5 }));
        assert!(Instance::new(vec![-0.1]).is_err());
        assert!(Instance::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn padded_instance_from_json() {
        let inst = Instance::from_json(r#"{"values": [1.0, 0.59, 0.38], "pad_zeros": 99997}"#).unwrap();
        assert_eq!(inst.len(), 100_000);
        assert_eq!(&inst.values()[..4], &[1.0, 0.59, 0.38, 0.0]);
        let classes = inst.classes();
        assert_eq!(classes.values, vec![1.0, 0.59, 0.38, 0.0]);
        assert_eq!(classes.counts, vec![1, 1, 1, 99_997]);
        assert_eq!(classes.class_of_rank(0), 0);
        assert_eq!(classes.class_of_rank(2), 2);
        assert_eq!(classes.class_of_rank(3), 3);
        assert_eq!(classes.class_of_rank(99_999), 3);
    }

    #[test]
    fn first_arrival_wins_for_accept_everything() {
        let inst = Instance::new(vec![0.7, 0.2]).unwrap();
        let early_big = ArrivalSample::from_times(vec![0.1, 0.6]);
        let early_small = ArrivalSample::from_times(vec![0.6, 0.1]);
        assert_eq!(run_policy(&AcceptFirst, &inst, &early_big).unwrap(), 0.7);
        assert_eq!(run_policy(&AcceptFirst, &inst, &early_small).unwrap(), 0.2);
    }

    #[test]
    fn accept_nothing_picks_zero() {
        let inst = Instance::new(vec![0.9, 0.4, 0.1]).unwrap();
        let arr = ArrivalSample::from_times(vec![0.3, 0.2, 0.1]);
        assert_eq!(run_policy(&Never, &inst, &arr).unwrap(), 0.0);
    }

    #[test]
    fn arrival_validation() {
        let inst = Instance::new(vec![0.9, 0.4]).unwrap();
        let dup = ArrivalSample::from_times(vec![0.3, 0.3]);
        assert!(matches!(run_policy(&Never, &inst, &dup), Err(Error::ArrivalMismatch(_))));
        let short = ArrivalSample::from_times(vec![0.3]);
        assert!(run_policy(&Never, &inst, &short).is_err());
    }

    #[test]
    fn drawn_samples_are_distinct() {
        let mut rng = StreamRng::new(5, 0);
        let s = ArrivalSample::draw(1000, &mut rng);
        s.validate(1000).unwrap();
    }

    #[test]
    fn ranked_tie_break() {
        let a = Ranked { value: 0.5, key: 0.2 };
        let b = Ranked { value: 0.5, key: 0.7 };
        assert!(b.beats(&a));
        assert!(!a.beats(&b));
        assert!(!a.beats(&a));
    }
}
