//! MAP set inference from a network output.
//!
//! The exact decoder minimizes, over cardinality `m` and slot subsets of size
//! `m`,
//!
//! ```text
//! J(m, S) = -ln p(m) - m ln U - sum_{s in S} ln sigmoid(z_s)
//! ```
//!
//! For a fixed `m` the best subset is always the `m` slots with the largest
//! existence logits, so only `M + 1` candidates need scoring. `U` trades off
//! precision and recall: larger values favor larger sets.
//!
//! The approximate decoder takes `m` as the mode of the cardinality head and
//! keeps the `m` top-scoring slots.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::card_dist::{card_map, CardinalityHead};
use crate::error::{contract, Error, Result};
use crate::math::{log_sigmoid, sigmoid};
use crate::network::{NetworkOutput, SlotOutput};

/// Largest slot count accepted by [`brute_force_map`].
pub const MAX_BRUTE_FORCE_SLOTS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InferenceMode {
    #[serde(rename = "exact")]
    Exact,
    #[serde(rename = "approx")]
    Approximate,
}

impl InferenceMode {
    pub fn name(self) -> &'static str {
        match self {
            InferenceMode::Exact => "exact",
            InferenceMode::Approximate => "approx",
        }
    }
}

impl FromStr for InferenceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact" => Ok(InferenceMode::Exact),
            "approx" | "approximate" => Ok(InferenceMode::Approximate),
            other => Err(format!("unknown inference mode '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    #[serde(rename = "U")]
    pub u: f64,
    pub mode: InferenceMode,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            u: 1.0,
            mode: InferenceMode::Exact,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.u > 0.0) || !self.u.is_finite() {
            return Err(Error::Config(format!("U must be finite and > 0, got {}", self.u)));
        }
        Ok(())
    }
}

/// A decoded set: the chosen slot indices, best-scoring first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedSet {
    pub cardinality: usize,
    pub slots: Vec<usize>,
    /// Existence probability of each chosen slot.
    pub scores: Vec<f64>,
}

impl PredictedSet {
    /// Chosen slot indices in ascending order.
    pub fn sorted_slots(&self) -> Vec<usize> {
        let mut s = self.slots.clone();
        s.sort_unstable();
        s
    }
}

/// Slot indices ordered by existence logit, largest first (ties by index).
pub fn rank_slots(slots: &[SlotOutput]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..slots.len()).collect();
    order.sort_by(|&a, &b| {
        slots[b]
            .existence_logit
            .total_cmp(&slots[a].existence_logit)
            .then(a.cmp(&b))
    });
    order
}

fn check_inputs(card: &CardinalityHead, slots: &[SlotOutput], u: f64) -> Result<()> {
    if !(u > 0.0) || !u.is_finite() {
        return Err(Error::Config(format!("U must be finite and > 0, got {u}")));
    }
    if slots.iter().any(|s| s.existence_logit.is_nan()) {
        return Err(contract("existence logit is NaN"));
    }
    if card.max_card() < slots.len() && card.kind() == crate::card_dist::CardinalityKind::Categorical {
        return Err(contract("categorical cardinality head does not cover every slot count"));
    }
    Ok(())
}

fn take(slots: &[SlotOutput], order: &[usize], m: usize) -> PredictedSet {
    let chosen = order[..m].to_vec();
    PredictedSet {
        cardinality: m,
        scores: chosen.iter().map(|&s| sigmoid(slots[s].existence_logit)).collect(),
        slots: chosen,
    }
}

/// `J(m)` of the best subset of each size `m = 0..=M`.
pub fn map_objective(card: &CardinalityHead, slots: &[SlotOutput], u: f64) -> Result<Vec<f64>> {
    check_inputs(card, slots, u)?;
    let order = rank_slots(slots);
    let ln_u = u.ln();
    let mut out = Vec::with_capacity(slots.len() + 1);
    let mut acc = 0.0;
    for m in 0..=slots.len() {
        if m > 0 {
            acc -= log_sigmoid(slots[order[m - 1]].existence_logit);
        }
        out.push(-card.log_pmf(m) - m as f64 * ln_u + acc);
    }
    Ok(out)
}

/// Exact MAP set. Ties in the objective resolve to the smaller cardinality.
pub fn exact_map(card: &CardinalityHead, slots: &[SlotOutput], u: f64) -> Result<PredictedSet> {
    let j = map_objective(card, slots, u)?;
    let mut best = 0;
    for m in 1..j.len() {
        if j[m] < j[best] {
            best = m;
        }
    }
    Ok(take(slots, &rank_slots(slots), best))
}

/// Cardinality mode followed by top-`m` slots.
pub fn approx_map(card: &CardinalityHead, slots: &[SlotOutput]) -> Result<PredictedSet> {
    check_inputs(card, slots, 1.0)?;
    let m = card_map(card).min(slots.len());
    Ok(take(slots, &rank_slots(slots), m))
}

/// Reference decoder: scores every slot subset. Ties resolve to the smaller
/// cardinality, then to the subset found first in bitmask order.
pub fn brute_force_map(card: &CardinalityHead, slots: &[SlotOutput], u: f64) -> Result<PredictedSet> {
    check_inputs(card, slots, u)?;
    let n = slots.len();
    if n > MAX_BRUTE_FORCE_SLOTS {
        return Err(Error::SizeLimit {
            what: "slots for brute-force inference",
            got: n,
            limit: MAX_BRUTE_FORCE_SLOTS,
        });
    }
    let ln_u = u.ln();
    let ln_s: Vec<f64> = slots.iter().map(|s| log_sigmoid(s.existence_logit)).collect();
    let mut best: Option<(f64, usize, u32)> = None;
    for mask in 0u32..(1 << n) {
        let m = mask.count_ones() as usize;
        let mut j = -card.log_pmf(m) - m as f64 * ln_u;
        for (s, l) in ln_s.iter().enumerate() {
            if mask & (1 << s) != 0 {
                j -= l;
            }
        }
        let better = match best {
            None => true,
            Some((bj, bm, _)) => j < bj || (j == bj && m < bm),
        };
        if better {
            best = Some((j, m, mask));
        }
    }
    let (_, _, mask) = best.expect("at least the empty set");
    let order: Vec<usize> = rank_slots(slots)
        .into_iter()
        .filter(|&s| mask & (1 << s) != 0)
        .collect();
    let m = order.len();
    Ok(take(slots, &order, m))
}

/// Decodes a network output with the configured mode.
pub fn infer(out: &NetworkOutput, cfg: &InferenceConfig) -> Result<PredictedSet> {
    let card = out.cardinality()?;
    match cfg.mode {
        InferenceMode::Exact => exact_map(&card, &out.slots, cfg.u),
        InferenceMode::Approximate => approx_map(&card, &out.slots),
    }
}
