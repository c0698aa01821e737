//! Finite-difference checks of every analytic loss gradient.
//!
//! Each check draws random raw outputs and targets, compares the analytic
//! gradient with central differences and reports the worst relative error
//! `|g - g_fd| / max(|g|, |g_fd|, 1e-6)`, measured as vector norms per draw.
//! Assignments are frozen at the sampled value, since the losses are only
//! differentiable for a fixed pairing.

use rand::{Rng, RngExt};
use serde::Serialize;

use crate::card_dist::{card_nll, CardinalityHead, CardinalityKind};
use crate::config::{RunConfig, Scenario, Task};
use crate::datagen::instance_rng;
use crate::error::Result;
use crate::geometry::{giou_loss_grad, smooth_l1, AABox, BoxParams};
use crate::network::HeadLayout;
use crate::setloss::{
    build_matching_cost, sample_permutation_s3, scenario1_loss, scenario2_loss, scenario3_loss, GroundTruthSet,
    LabeledBox, LossConfig,
};

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-6;

/// Worst relative error of one loss over all draws.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheck {
    pub loss: String,
    pub draws: usize,
    pub max_rel_err: f64,
}

/// Relative error between two gradient vectors.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(analytic).max(norm(numeric)).max(1e-6)
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_gradient<F: Fn(&[f64]) -> f64>(x: &[f64], f: F) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

fn random_box<R: Rng>(rng: &mut R) -> AABox {
    let (cx, cy) = (rng.random_range(0.2..0.8), rng.random_range(0.2..0.8));
    let (w, h) = (rng.random_range(0.1..0.4), rng.random_range(0.1..0.4));
    AABox::from_cxcywh(cx, cy, w, h).expect("positive size")
}

fn random_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// A random ground-truth set that fits `layout`.
fn random_gt<R: Rng>(rng: &mut R, task: Task, layout: &HeadLayout, classes: usize) -> GroundTruthSet {
    let m = rng.random_range(0..=layout.slots);
    match task {
        Task::Tagging => {
            let labels = if layout.state_dim == 0 { layout.slots } else { layout.state_dim };
            let mut ids = rand::seq::index::sample(rng, labels, m.min(labels)).into_vec();
            ids.sort_unstable();
            GroundTruthSet::Labels(ids)
        }
        Task::Detect | Task::Captcha => GroundTruthSet::Boxes(
            (0..m)
                .map(|_| LabeledBox {
                    bbox: random_box(rng),
                    class: rng.random_range(0..classes),
                })
                .collect(),
        ),
    }
}

/// Raw outputs whose decoded boxes sit near the unit square, so the draws
/// exercise overlapping and disjoint pairs rather than degenerate ones.
fn random_raw<R: Rng>(rng: &mut R, layout: &HeadLayout) -> Vec<f64> {
    let mut raw = random_vec(rng, layout.output_width(), 2.0);
    if layout.state_dim >= 4 {
        let base = layout.card_params();
        for s in 0..layout.slots {
            let o = base + s * (layout.state_dim + 1);
            raw[o] = rng.random_range(0.1..0.9);
            raw[o + 1] = rng.random_range(0.1..0.9);
            raw[o + 2] = rng.random_range(0.05f64..0.5).ln();
            raw[o + 3] = rng.random_range(0.05f64..0.5).ln();
        }
    }
    raw
}

fn check_card<R: Rng>(rng: &mut R, kind: CardinalityKind, draws: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let max_card = rng.random_range(1..=10);
        let alpha = random_vec(rng, kind.param_count(max_card), 2.0);
        let m = rng.random_range(0..=max_card);
        let head = CardinalityHead::new(kind, alpha.clone(), max_card)?;
        let (_, g) = card_nll(&head, m)?;
        let fd = numeric_gradient(&alpha, |a| {
            let h = CardinalityHead::new(kind, a.to_vec(), max_card).expect("valid head");
            card_nll(&h, m).expect("valid cardinality").0
        });
        worst = worst.max(relative_error(&g, &fd));
    }
    Ok(worst)
}

fn check_smooth_l1<R: Rng>(rng: &mut R, delta: f64, draws: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let n = rng.random_range(1..=8);
        let target = random_vec(rng, n, 2.0);
        let mut pred = random_vec(rng, n, 2.0);
        // keep clear of the kink at |d| = delta
        for (p, t) in pred.iter_mut().zip(&target) {
            if ((*p - t).abs() - delta).abs() < 1e-3 {
                *p += 1e-2;
            }
        }
        let (_, g) = smooth_l1(&pred, &target, delta)?;
        let fd = numeric_gradient(&pred, |p| smooth_l1(p, &target, delta).expect("same length").0);
        worst = worst.max(relative_error(&g, &fd));
    }
    Ok(worst)
}

fn check_giou<R: Rng>(rng: &mut R, draws: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let target = random_box(rng);
        let p = BoxParams::from_box(&random_box(rng)).to_array();
        let (_, g) = giou_loss_grad(&BoxParams::from_slice(&p), &target);
        let fd = numeric_gradient(&p, |q| giou_loss_grad(&BoxParams::from_slice(q), &target).0);
        worst = worst.max(relative_error(&g, &fd));
    }
    Ok(worst)
}

fn check_scenario<R: Rng>(rng: &mut R, cfg: &RunConfig, scenario: Scenario, draws: usize) -> Result<f64> {
    let mut c = cfg.clone();
    c.scenario = scenario;
    if scenario == Scenario::LearnedPermutation {
        c.slots = c.slots.min(5);
    }
    let layout = c.head_layout();
    let loss_cfg = c.loss_config();
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let raw = random_raw(rng, &layout);
        let gt = random_gt(rng, c.task, &layout, c.classes);
        let out = layout.split(&raw)?;
        // freeze the assignment at the sampled optimum, completed to a full
        // permutation for the permutation head
        let mut pi = sample_permutation_s3(&build_matching_cost(&out, &gt, &loss_cfg)?).perm;
        for s in 0..layout.slots {
            if !pi.contains(&s) {
                pi.push(s);
            }
        }
        let eval = |r: &[f64]| -> Result<(f64, Vec<f64>)> {
            let o = layout.split(r)?;
            let l = match scenario {
                Scenario::FixedOrder => scenario1_loss(&o, &gt, &loss_cfg)?,
                Scenario::LearnedPermutation => scenario2_loss(&o, &gt, &pi, &loss_cfg)?,
                Scenario::Orderless => scenario3_loss(&o, &gt, &pi, &loss_cfg)?,
            };
            Ok((l.loss.total, l.grad.to_flat()))
        };
        let (_, g) = eval(&raw)?;
        let fd = numeric_gradient(&raw, |r| eval(r).expect("valid output").0);
        worst = worst.max(relative_error(&g, &fd));
    }
    Ok(worst)
}

/// Runs every check with `draws` random configurations each. Scenario losses
/// use the task, slot count, classes and loss weights of `cfg`.
pub fn check_all(cfg: &RunConfig, draws: usize, seed: u64) -> Result<Vec<GradCheck>> {
    let loss_cfg: LossConfig = cfg.loss_config();
    let mut rng = instance_rng(seed, 102, 0);
    let mut out = Vec::new();
    let mut push = |name: &str, err: f64| {
        out.push(GradCheck {
            loss: name.to_string(),
            draws,
            max_rel_err: err,
        })
    };
    push("card-categorical", check_card(&mut rng, CardinalityKind::Categorical, draws)?);
    push("card-poisson", check_card(&mut rng, CardinalityKind::Poisson, draws)?);
    push("card-negative-binomial", check_card(&mut rng, CardinalityKind::NegativeBinomial, draws)?);
    push("smooth-l1", check_smooth_l1(&mut rng, loss_cfg.smooth_l1_delta, draws)?);
    push("giou", check_giou(&mut rng, draws)?);
    push("scenario1", check_scenario(&mut rng, cfg, Scenario::FixedOrder, draws)?);
    push("scenario2", check_scenario(&mut rng, cfg, Scenario::LearnedPermutation, draws)?);
    push("scenario3", check_scenario(&mut rng, cfg, Scenario::Orderless, draws)?);
    Ok(out)
}

/// `loss,draws,max_rel_err` CSV.
pub fn to_csv(checks: &[GradCheck]) -> String {
    let mut s = String::from("loss,draws,max_rel_err\n");
    for c in checks {
        s.push_str(&format!("{},{},{:e}\n", c.loss, c.draws, c.max_rel_err));
    }
    s
}
