//! Composite training losses for set-valued targets.
//!
//! Every scenario combines a cardinality NLL with per-element state losses.
//! They differ in how ground-truth elements are paired with output slots:
//!
//! * scenario 1 pairs them by a fixed convention (label id, or storage order);
//! * scenario 3 pairs them by the state-loss-minimizing assignment, found
//!   with the Hungarian method on a per-instance cost matrix;
//! * scenario 2 additionally scores every full permutation of the slots with
//!   a learned permutation head and picks the joint minimizer by enumeration.
//!
//! The assignment is a constant during back-propagation: gradients flow
//! through the losses evaluated at the sampled permutation, never through the
//! argmin itself.
//!
//! Slots left unmatched are pushed toward "absent" by an existence BCE with
//! weight [`LossConfig::noobj_weight`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assignment::{
    factorial, hungarian, lehmer_decode, lehmer_encode, next_permutation, AssignmentResult,
    CostMatrix, MAX_ENUM_SLOTS,
};
use crate::card_dist::card_nll;
use crate::error::{contract, Error, Result};
use crate::geometry::{giou_loss_corner_grad, smooth_l1, AABox, BoxParams};
use crate::math::{bce_with_logit, cross_entropy, log_softmax};
use crate::network::{NetworkOutput, OutputGrad, SlotOutput};

/// A ground-truth box with its class id.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledBox {
    pub bbox: AABox,
    pub class: usize,
}

/// The training target of one instance: an unordered collection of element
/// states. The stored order carries no meaning except under scenario 1.
#[derive(Clone, Debug, PartialEq)]
pub enum GroundTruthSet {
    Labels(Vec<usize>),
    Boxes(Vec<LabeledBox>),
}

impl GroundTruthSet {
    pub fn len(&self) -> usize {
        match self {
            GroundTruthSet::Labels(l) => l.len(),
            GroundTruthSet::Boxes(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Element `k` of the result is element `order[k]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> GroundTruthSet {
        match self {
            GroundTruthSet::Labels(l) => GroundTruthSet::Labels(order.iter().map(|&i| l[i]).collect()),
            GroundTruthSet::Boxes(b) => GroundTruthSet::Boxes(order.iter().map(|&i| b[i]).collect()),
        }
    }

    /// Boxes scaled into the unit square of a `width x height` canvas.
    pub fn normalized(&self, width: f64, height: f64) -> GroundTruthSet {
        match self {
            GroundTruthSet::Labels(_) => self.clone(),
            GroundTruthSet::Boxes(b) => GroundTruthSet::Boxes(
                b.iter()
                    .map(|lb| LabeledBox {
                        bbox: lb.bbox.scaled(1.0 / width, 1.0 / height),
                        class: lb.class,
                    })
                    .collect(),
            ),
        }
    }

    pub fn boxes(&self) -> Option<&[LabeledBox]> {
        match self {
            GroundTruthSet::Boxes(b) => Some(b),
            GroundTruthSet::Labels(_) => None,
        }
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match self {
            GroundTruthSet::Labels(l) => Some(l),
            GroundTruthSet::Boxes(_) => None,
        }
    }
}

/// Weights of the state-loss terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Smooth-L1 on normalized box corners.
    pub l1_weight: f64,
    /// `1 - GIoU`.
    pub giou_weight: f64,
    /// Class cross-entropy (only when slots carry class logits).
    pub class_weight: f64,
    /// Existence BCE toward "absent" on unmatched slots.
    pub noobj_weight: f64,
    pub smooth_l1_delta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            l1_weight: 1.0,
            giou_weight: 1.0,
            class_weight: 1.0,
            noobj_weight: 0.5,
            smooth_l1_delta: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [self.l1_weight, self.giou_weight, self.class_weight, self.noobj_weight];
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config("loss weights must be finite and >= 0".into()));
        }
        if !(self.smooth_l1_delta > 0.0) {
            return Err(Error::Config("smooth_l1_delta must be > 0".into()));
        }
        Ok(())
    }
}

/// Loss value split by term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub card: f64,
    pub state: f64,
    pub perm: f64,
}

impl std::ops::AddAssign for LossBreakdown {
    fn add_assign(&mut self, o: Self) {
        self.total += o.total;
        self.card += o.card;
        self.state += o.state;
        self.perm += o.perm;
    }
}

/// A loss value with its gradient over the network output.
#[derive(Clone, Debug)]
pub struct SetLoss {
    pub loss: LossBreakdown,
    pub grad: OutputGrad,
}

#[derive(Clone, Copy)]
enum ElementRef<'a> {
    Label(usize),
    Box(&'a LabeledBox),
}

fn element(gt: &GroundTruthSet, j: usize) -> ElementRef<'_> {
    match gt {
        GroundTruthSet::Labels(l) => ElementRef::Label(l[j]),
        GroundTruthSet::Boxes(b) => ElementRef::Box(&b[j]),
    }
}

/// State loss of pairing ground-truth element `elem` with `slot`, including
/// the existence BCE toward "present". Returns `(loss, d/d state, d/d logit)`.
fn pair_loss(slot: &SlotOutput, elem: ElementRef<'_>, cfg: &LossConfig) -> Result<(f64, Vec<f64>, f64)> {
    let mut grad = vec![0.0; slot.state.len()];
    let (mut loss, d_exist) = bce_with_logit(slot.existence_logit, true);
    match elem {
        ElementRef::Label(label) => {
            if !slot.state.is_empty() {
                if label >= slot.state.len() {
                    return Err(contract(format!("label {label} outside class logits")));
                }
                let (ce, g) = cross_entropy(&slot.state, label);
                loss += cfg.class_weight * ce;
                grad.iter_mut().zip(g).for_each(|(a, b)| *a += cfg.class_weight * b);
            }
        }
        ElementRef::Box(target) => {
            if slot.state.len() < 4 {
                return Err(contract("box target needs a slot state of at least 4 values"));
            }
            let params = BoxParams::from_slice(&slot.state[..4]);
            let decoded = params.decode();
            let mut corner = [0.0; 4];
            if cfg.l1_weight > 0.0 {
                let (l1, g) = smooth_l1(&decoded.to_array(), &target.bbox.to_array(), cfg.smooth_l1_delta)?;
                loss += cfg.l1_weight * l1;
                for k in 0..4 {
                    corner[k] += cfg.l1_weight * g[k];
                }
            }
            if cfg.giou_weight > 0.0 {
                let (gl, g) = giou_loss_corner_grad(&decoded, &target.bbox);
                loss += cfg.giou_weight * gl;
                for k in 0..4 {
                    corner[k] += cfg.giou_weight * g[k];
                }
            }
            let pg = params.corner_grad_to_params(corner);
            grad[..4].copy_from_slice(&pg);
            if slot.state.len() > 4 {
                let logits = &slot.state[4..];
                if target.class >= logits.len() {
                    return Err(contract(format!("class {} outside class logits", target.class)));
                }
                let (ce, g) = cross_entropy(logits, target.class);
                loss += cfg.class_weight * ce;
                grad[4..].iter_mut().zip(g).for_each(|(a, b)| *a += cfg.class_weight * b);
            }
        }
    }
    Ok((loss, grad, d_exist))
}

fn check_fits(out: &NetworkOutput, gt: &GroundTruthSet) -> Result<()> {
    if gt.len() > out.num_slots() {
        return Err(contract(format!(
            "set of {} elements does not fit {} slots",
            gt.len(),
            out.num_slots()
        )));
    }
    Ok(())
}

/// Pairwise state-loss matrix: entry `(j, s)` is the loss of explaining
/// ground-truth element `j` with slot `s` (regression, class and existence
/// toward "present").
pub fn build_cost_matrix(out: &NetworkOutput, gt: &GroundTruthSet, cfg: &LossConfig) -> Result<CostMatrix> {
    check_fits(out, gt)?;
    let (m, cols) = (gt.len(), out.num_slots());
    let mut data = Vec::with_capacity(m * cols);
    for j in 0..m {
        for slot in &out.slots {
            data.push(pair_loss(slot, element(gt, j), cfg)?.0);
        }
    }
    CostMatrix::new(m, cols, data)
}

/// Cost matrix whose optimal assignment minimizes the full composite state
/// loss: [`build_cost_matrix`] minus the "absent" BCE each slot would incur
/// if left unmatched. The two matrices differ by a per-column constant on the
/// unmatched term, so the summed cost of an assignment plus
/// `noobj_weight * sum_s BCE(s, absent)` equals the scenario-2/3 state loss.
pub fn build_matching_cost(out: &NetworkOutput, gt: &GroundTruthSet, cfg: &LossConfig) -> Result<CostMatrix> {
    let base = build_cost_matrix(out, gt, cfg)?;
    let offsets: Vec<f64> = out
        .slots
        .iter()
        .map(|s| -cfg.noobj_weight * bce_with_logit(s.existence_logit, false).0)
        .collect();
    base.with_column_offsets(&offsets)
}

/// Scenario-3 permutation sample: the cost-minimal assignment.
pub fn sample_permutation_s3(cost: &CostMatrix) -> AssignmentResult {
    hungarian(cost)
}

/// Scenario-2 permutation sample: the full permutation `pi` of the slots
/// minimizing `-log softmax(perm_logits)[lehmer(pi)] + sum_j cost(j, pi[j])`,
/// found by exhaustive enumeration. Ties resolve to the smallest Lehmer index.
/// The returned `perm` has length `M`; its first `m` entries are the matched
/// slots and `cost` is the minimized objective.
pub fn sample_permutation_s2(cost: &CostMatrix, perm_logits: &[f64]) -> Result<AssignmentResult> {
    sample_permutation_s2_weighted(cost, perm_logits, 1.0)
}

/// [`sample_permutation_s2`] with the permutation-prior term scaled by
/// `prior_weight`. A weight of 0 leaves only the state cost, so the matched
/// prefix equals the Hungarian assignment and the prior only orders the
/// unmatched slots.
pub fn sample_permutation_s2_weighted(cost: &CostMatrix, perm_logits: &[f64], prior_weight: f64) -> Result<AssignmentResult> {
    let n = cost.cols();
    if n > MAX_ENUM_SLOTS {
        return Err(Error::SizeLimit {
            what: "slots for permutation enumeration",
            got: n,
            limit: MAX_ENUM_SLOTS,
        });
    }
    if perm_logits.len() != factorial(n) {
        return Err(contract(format!(
            "permutation head has {} logits, expected {}! = {}",
            perm_logits.len(),
            n,
            factorial(n)
        )));
    }
    if !(prior_weight >= 0.0) || !prior_weight.is_finite() {
        return Err(contract(format!("prior weight must be finite and >= 0, got {prior_weight}")));
    }
    let log_prior = log_softmax(perm_logits);
    let m = cost.rows();
    let mut perm: Vec<usize> = (0..n).collect();
    // (state cost, prior cost, index): compare the weighted sum, then the
    // prior alone so a zero weight still breaks state ties by the prior
    let mut best: Option<(f64, f64, usize)> = None;
    let mut index = 0usize;
    loop {
        let state = cost.cost_of(&perm[..m]);
        let prior = -log_prior[index];
        let objective = prior_weight * prior + state;
        let better = match best {
            None => true,
            Some((bo, bp, _)) => objective < bo || (objective == bo && prior < bp),
        };
        if better {
            best = Some((objective, prior, index));
        }
        index += 1;
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let (objective, _, index) = best.expect("at least one permutation");
    Ok(AssignmentResult {
        perm: lehmer_decode(index, n)?,
        cost: objective,
    })
}

fn check_assignment(assign: &[usize], slots: usize) -> Result<()> {
    let mut used = vec![false; slots];
    for &s in assign {
        if s >= slots || used[s] {
            return Err(contract(format!("{assign:?} is not an injection into {slots} slots")));
        }
        used[s] = true;
    }
    Ok(())
}

/// Card NLL plus matched pair losses plus `noobj_weight` times the "absent"
/// BCE of every slot not in `assign`. `assign[j]` is the slot of element `j`.
fn composite(out: &NetworkOutput, gt: &GroundTruthSet, assign: &[usize], noobj_weight: f64, cfg: &LossConfig) -> Result<SetLoss> {
    check_fits(out, gt)?;
    if assign.len() != gt.len() {
        return Err(contract("assignment length differs from set size"));
    }
    check_assignment(assign, out.num_slots())?;
    let mut grad = OutputGrad::zeros_like(out);
    let (card, g_card) = card_nll(&out.cardinality()?, gt.len())?;
    grad.alpha = g_card;

    let mut state = 0.0;
    let mut matched = vec![false; out.num_slots()];
    for (j, &s) in assign.iter().enumerate() {
        let (l, gs, ge) = pair_loss(&out.slots[s], element(gt, j), cfg)?;
        state += l;
        grad.state[s].iter_mut().zip(gs).for_each(|(a, b)| *a += b);
        grad.existence[s] += ge;
        matched[s] = true;
    }
    if noobj_weight > 0.0 {
        for (s, slot) in out.slots.iter().enumerate() {
            if !matched[s] {
                let (l, g) = bce_with_logit(slot.existence_logit, false);
                state += noobj_weight * l;
                grad.existence[s] += noobj_weight * g;
            }
        }
    }
    Ok(SetLoss {
        loss: LossBreakdown {
            total: card + state,
            card,
            state,
            perm: 0.0,
        },
        grad,
    })
}

/// Scenario-1 loss with the assignment fixed by convention.
///
/// Label sets: slot `s` stands for label `s`; every slot gets an existence
/// BCE against the label-presence indicator. Box sets: element `j` (in stored
/// order) is supervised by slot `j`; unmatched slots are pushed toward
/// "absent" with the configured `noobj_weight`.
pub fn scenario1_loss(out: &NetworkOutput, gt: &GroundTruthSet, cfg: &LossConfig) -> Result<SetLoss> {
    check_fits(out, gt)?;
    match gt {
        GroundTruthSet::Labels(labels) => {
            let mut seen = vec![false; out.num_slots()];
            for &l in labels {
                if l >= out.num_slots() || seen[l] {
                    return Err(contract(format!(
                        "label set {labels:?} must hold distinct ids below {}",
                        out.num_slots()
                    )));
                }
                seen[l] = true;
            }
            let mut grad = OutputGrad::zeros_like(out);
            let (card, g_card) = card_nll(&out.cardinality()?, labels.len())?;
            grad.alpha = g_card;
            let mut state = 0.0;
            for (s, slot) in out.slots.iter().enumerate() {
                let (l, g) = bce_with_logit(slot.existence_logit, seen[s]);
                state += l;
                grad.existence[s] = g;
            }
            Ok(SetLoss {
                loss: LossBreakdown {
                    total: card + state,
                    card,
                    state,
                    perm: 0.0,
                },
                grad,
            })
        }
        GroundTruthSet::Boxes(b) => {
            let assign: Vec<usize> = (0..b.len()).collect();
            composite(out, gt, &assign, cfg.noobj_weight, cfg)
        }
    }
}

/// Scenario-3 loss at a fixed assignment `pi_star` (slot of each element;
/// extra trailing entries, as in a full permutation, are ignored).
pub fn scenario3_loss(out: &NetworkOutput, gt: &GroundTruthSet, pi_star: &[usize], cfg: &LossConfig) -> Result<SetLoss> {
    if pi_star.len() < gt.len() {
        return Err(contract("permutation sample shorter than the set"));
    }
    composite(out, gt, &pi_star[..gt.len()], cfg.noobj_weight, cfg)
}

/// Scenario-2 loss at a full slot permutation `pi_star`: scenario-3 terms
/// plus the cross-entropy of the permutation head at `lehmer(pi_star)`.
pub fn scenario2_loss(out: &NetworkOutput, gt: &GroundTruthSet, pi_star: &[usize], cfg: &LossConfig) -> Result<SetLoss> {
    let logits = out
        .perm_logits
        .as_ref()
        .ok_or_else(|| contract("scenario 2 needs a permutation head"))?;
    if pi_star.len() != out.num_slots() {
        return Err(contract("scenario 2 needs a full permutation of the slots"));
    }
    let index = lehmer_encode(pi_star)?;
    if index >= logits.len() {
        return Err(contract("permutation index outside the permutation head"));
    }
    let mut res = scenario3_loss(out, gt, pi_star, cfg)?;
    let (ce, g) = cross_entropy(logits, index);
    res.loss.perm = ce;
    res.loss.total += ce;
    res.grad.perm = Some(g);
    Ok(res)
}

/// Cardinality NLL only (used to train a cardinality-only ablation).
pub fn cardinality_only_loss(out: &NetworkOutput, gt: &GroundTruthSet) -> Result<SetLoss> {
    check_fits(out, gt)?;
    let mut grad = OutputGrad::zeros_like(out);
    let (card, g) = card_nll(&out.cardinality()?, gt.len())?;
    grad.alpha = g;
    Ok(SetLoss {
        loss: LossBreakdown {
            total: card,
            card,
            state: 0.0,
            perm: 0.0,
        },
        grad,
    })
}

/// Per-instance counts of sampled scenario-2 permutations, keyed by Lehmer
/// index. The normalized counts approximate the permutation distribution of
/// each training instance.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PermutationHistogram {
    slots: usize,
    counts: BTreeMap<u64, BTreeMap<usize, u64>>,
}

/// One row of a dominant-permutation report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominantPermutation {
    pub instance_id: u64,
    pub lehmer_index: usize,
    pub permutation: Vec<usize>,
    pub weight: f64,
}

impl PermutationHistogram {
    pub fn new(slots: usize) -> Self {
        PermutationHistogram {
            slots,
            counts: BTreeMap::new(),
        }
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    /// Records one permutation sample for `instance_id`.
    pub fn update(&mut self, instance_id: u64, pi_star: &[usize]) -> Result<()> {
        if pi_star.len() != self.slots {
            return Err(contract(format!(
                "histogram over {} slots got a permutation of length {}",
                self.slots,
                pi_star.len()
            )));
        }
        let idx = lehmer_encode(pi_star)?;
        *self.counts.entry(instance_id).or_default().entry(idx).or_default() += 1;
        Ok(())
    }

    /// Number of recorded samples for an instance.
    pub fn total(&self, instance_id: u64) -> u64 {
        self.counts.get(&instance_id).map_or(0, |c| c.values().sum())
    }

    pub fn instances(&self) -> impl Iterator<Item = u64> + '_ {
        self.counts.keys().copied()
    }

    /// `(lehmer index, weight)` pairs for an instance, heaviest first (ties by
    /// index). Weights sum to 1 when anything was recorded.
    pub fn weights(&self, instance_id: u64) -> Vec<(usize, f64)> {
        let Some(c) = self.counts.get(&instance_id) else {
            return Vec::new();
        };
        let total: u64 = c.values().sum();
        let mut w: Vec<(usize, u64)> = c.iter().map(|(&k, &v)| (k, v)).collect();
        w.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        w.into_iter().map(|(k, v)| (k, v as f64 / total as f64)).collect()
    }

    /// The `k` heaviest permutations of every instance.
    pub fn dominant_permutations(&self, k: usize) -> Vec<DominantPermutation> {
        let mut rows = Vec::new();
        for id in self.instances() {
            for (idx, w) in self.weights(id).into_iter().take(k) {
                rows.push(DominantPermutation {
                    instance_id: id,
                    lehmer_index: idx,
                    permutation: lehmer_decode(idx, self.slots).expect("recorded index is valid"),
                    weight: w,
                });
            }
        }
        rows
    }

    /// Mean over instances of the top-1 weight.
    pub fn mean_top1_weight(&self) -> f64 {
        let tops: Vec<f64> = self
            .instances()
            .filter_map(|id| self.weights(id).first().map(|w| w.1))
            .collect();
        if tops.is_empty() {
            0.0
        } else {
            tops.iter().sum::<f64>() / tops.len() as f64
        }
    }

    /// CSV report `instance_id,lehmer_index,permutation,weight` with the
    /// permutation written as space-separated slot indices.
    pub fn to_csv(&self, k: usize) -> String {
        let mut s = String::from("instance_id,lehmer_index,permutation,weight\n");
        for r in self.dominant_permutations(k) {
            let p: Vec<String> = r.permutation.iter().map(|v| v.to_string()).collect();
            s.push_str(&format!("{},{},{},{}\n", r.instance_id, r.lehmer_index, p.join(" "), r.weight));
        }
        s
    }
}
