//! Seeded invariance checks shared by the property tests and the acceptance
//! runner. Each check draws one random case from `seed` and returns a
//! description of the first violation.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use setpred::assignment::{factorial, lehmer_decode, lehmer_encode};
use setpred::card_dist::{CardinalityHead, CardinalityKind};
use setpred::geometry::AABox;
use setpred::inference::{approx_map, exact_map};
use setpred::metrics::{captcha_accuracy, detection_pr, prf_multilabel, set_prf, ScoredBox};
use setpred::network::{HeadLayout, NetworkOutput};
use setpred::setloss::{
    build_matching_cost, sample_permutation_s2, sample_permutation_s3, scenario2_loss, scenario3_loss, GroundTruthSet,
    LabeledBox, LossConfig,
};

pub const TOL: f64 = 1e-9;

pub type Check = Result<(), String>;

fn close(what: &str, a: f64, b: f64) -> Check {
    if (a - b).abs() < TOL {
        Ok(())
    } else {
        Err(format!("{what}: {a} vs {b}"))
    }
}

pub fn rand_box(rng: &mut ChaCha8Rng) -> AABox {
    let x = rng.random_range(0.0..0.8);
    let y = rng.random_range(0.0..0.8);
    AABox::new(x, y, x + rng.random_range(0.05..0.3), y + rng.random_range(0.05..0.3)).unwrap()
}

pub fn random_output(rng: &mut ChaCha8Rng, slots: usize, perm_head: bool) -> NetworkOutput {
    let l = HeadLayout {
        card_kind: CardinalityKind::Categorical,
        slots,
        state_dim: 4,
        perm_head,
    };
    let mut raw: Vec<f64> = (0..l.output_width()).map(|_| rng.random_range(-3.0..3.0)).collect();
    for s in 0..slots {
        let o = l.card_params() + s * 5;
        raw[o] = rng.random_range(0.1..0.9);
        raw[o + 1] = rng.random_range(0.1..0.9);
        raw[o + 2] = rng.random_range(-3.0..-1.0);
        raw[o + 3] = rng.random_range(-3.0..-1.0);
    }
    l.split(&raw).unwrap()
}

pub fn random_gt(rng: &mut ChaCha8Rng, max: usize) -> GroundTruthSet {
    let m = rng.random_range(0..=max);
    GroundTruthSet::Boxes(
        (0..m)
            .map(|_| LabeledBox {
                bbox: rand_box(rng),
                class: 0,
            })
            .collect(),
    )
}

pub fn shuffled_order(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut o: Vec<usize> = (0..n).collect();
    o.shuffle(rng);
    o
}

fn s3_total(out: &NetworkOutput, gt: &GroundTruthSet) -> f64 {
    let cfg = LossConfig::default();
    let pi = sample_permutation_s3(&build_matching_cost(out, gt, &cfg).unwrap()).perm;
    scenario3_loss(out, gt, &pi, &cfg).unwrap().loss.total
}

fn s2_total(out: &NetworkOutput, gt: &GroundTruthSet) -> f64 {
    let cfg = LossConfig::default();
    let cost = build_matching_cost(out, gt, &cfg).unwrap();
    let pi = sample_permutation_s2(&cost, out.perm_logits.as_ref().unwrap()).unwrap().perm;
    scenario2_loss(out, gt, &pi, &cfg).unwrap().loss.total
}

/// Relabels permutation-head classes so that class `lehmer(pi)` of `out`
/// becomes class `lehmer(pi o sigma)`, where `sigma` reorders the first `m`
/// ground-truth positions. This is how the head must move when the stored
/// element order changes by `sigma`.
pub fn follow_shuffle(out: &NetworkOutput, sigma: &[usize]) -> NetworkOutput {
    let logits = out.perm_logits.as_ref().unwrap();
    let n = out.num_slots();
    let mut moved = vec![0.0; logits.len()];
    for (idx, &v) in logits.iter().enumerate() {
        let pi = lehmer_decode(idx, n).unwrap();
        let mut composed = pi.clone();
        for (k, &s) in sigma.iter().enumerate() {
            composed[k] = pi[s];
        }
        moved[lehmer_encode(&composed).unwrap()] = v;
    }
    NetworkOutput {
        perm_logits: Some(moved),
        ..out.clone()
    }
}

pub fn scenario3_loss_ignores_element_order(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = rng.random_range(1..=6);
    let out = random_output(&mut rng, slots, false);
    let gt = random_gt(&mut rng, slots);
    let sigma = shuffled_order(&mut rng, gt.len());
    close("scenario-3 loss", s3_total(&out, &gt), s3_total(&out, &gt.permuted(&sigma)))
}

pub fn scenario2_loss_ignores_element_order(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = rng.random_range(1..=4);
    let out = random_output(&mut rng, slots, true);
    let gt = random_gt(&mut rng, slots);
    let sigma = shuffled_order(&mut rng, gt.len());
    let shuffled = gt.permuted(&sigma);
    close(
        "scenario-2 loss, relabelled head",
        s2_total(&out, &gt),
        s2_total(&follow_shuffle(&out, &sigma), &shuffled),
    )?;
    // with a flat permutation head nothing needs to move
    let flat = NetworkOutput {
        perm_logits: Some(vec![0.5; factorial(slots)]),
        ..out
    };
    close("scenario-2 loss, flat head", s2_total(&flat, &gt), s2_total(&flat, &shuffled))
}

pub fn detection_metrics_ignore_element_order(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=5);
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for _ in 0..n {
        let g: Vec<AABox> = (0..rng.random_range(0..=4)).map(|_| rand_box(&mut rng)).collect();
        let mut boxes: Vec<AABox> = g
            .iter()
            .map(|b| b.translated(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)))
            .collect();
        for _ in 0..rng.random_range(0..=2) {
            boxes.push(rand_box(&mut rng));
        }
        let p: Vec<ScoredBox> = boxes
            .into_iter()
            .map(|bbox| ScoredBox {
                bbox,
                score: rng.random_range(0.0..1.0),
            })
            .collect();
        gts.push(g);
        preds.push(p);
    }
    let shuffled: Vec<Vec<AABox>> = gts
        .iter()
        .map(|g| shuffled_order(&mut rng, g.len()).iter().map(|&i| g[i]).collect())
        .collect();
    let a = detection_pr(&preds, &gts, 0.5);
    let b = detection_pr(&preds, &shuffled, 0.5);
    close("AP", a.ap, b.ap)?;
    close("best-F1", a.best_f1, b.best_f1)?;
    close("MR", a.mr, b.mr)?;
    let sets: Vec<Vec<AABox>> = preds.iter().map(|p| p.iter().map(|s| s.bbox).collect()).collect();
    let (p1, r1, f1) = set_prf(&sets, &gts, 0.5);
    let (p2, r2, f2) = set_prf(&sets, &shuffled, 0.5);
    close("set-P", p1, p2)?;
    close("set-R", r1, r2)?;
    close("set-F1", f1, f2)?;
    close(
        "accuracy",
        captcha_accuracy(&sets, &gts),
        captcha_accuracy(&sets, &shuffled),
    )
}

pub fn tagging_metrics_ignore_label_order(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = rng.random_range(2..=8);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<usize> {
        let k = rng.random_range(0..=labels);
        rand::seq::index::sample(rng, labels, k).into_vec()
    };
    let n = rng.random_range(1..=6);
    let preds: Vec<Vec<usize>> = (0..n).map(|_| draw(&mut rng)).collect();
    let gts: Vec<Vec<usize>> = (0..n).map(|_| draw(&mut rng)).collect();
    let shuffled: Vec<Vec<usize>> = gts
        .iter()
        .map(|g| {
            let mut g = g.clone();
            g.shuffle(&mut rng);
            g
        })
        .collect();
    let a = prf_multilabel(&preds, &gts, labels).entries();
    let b = prf_multilabel(&preds, &shuffled, labels).entries();
    for ((ka, va), (_, vb)) in a.iter().zip(&b) {
        close(ka, *va, *vb)?;
    }
    Ok(())
}

fn undo(order: &[usize], slots: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = slots.iter().map(|&s| order[s]).collect();
    v.sort_unstable();
    v
}

pub fn inference_ignores_slot_order(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = rng.random_range(1..=8);
    let out = random_output(&mut rng, slots, false);
    let order = shuffled_order(&mut rng, slots);
    let moved = out.reorder_slots(&order);
    let card = CardinalityHead::new(out.card_kind, out.alpha.clone(), slots).unwrap();
    for u in [0.5, 1.0, 2.36] {
        let a = exact_map(&card, &out.slots, u).unwrap().sorted_slots();
        let b = undo(&order, &exact_map(&card, &moved.slots, u).unwrap().slots);
        if a != b {
            return Err(format!("exact MAP at U={u}: {a:?} vs {b:?}"));
        }
    }
    let a = approx_map(&card, &out.slots).unwrap().sorted_slots();
    let b = undo(&order, &approx_map(&card, &moved.slots).unwrap().slots);
    if a != b {
        return Err(format!("approximate MAP: {a:?} vs {b:?}"));
    }
    Ok(())
}

/// Every invariance check, by name.
pub const ALL: [(&str, fn(u64) -> Check); 5] = [
    ("scenario-3 loss", scenario3_loss_ignores_element_order),
    ("scenario-2 loss", scenario2_loss_ignores_element_order),
    ("detection metrics", detection_metrics_ignore_element_order),
    ("tagging metrics", tagging_metrics_ignore_label_order),
    ("inference", inference_ignores_slot_order),
];
