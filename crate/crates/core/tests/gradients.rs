//! Analytic gradients of every loss against central finite differences,
//! computed here without the library's own checker.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use setpred::card_dist::{card_nll, CardinalityHead, CardinalityKind};
use setpred::geometry::{giou_loss_grad, smooth_l1, AABox, BoxParams};
use setpred::network::{grad_check, HeadLayout, Mlp, SetNetwork};
use setpred::setloss::{
    build_matching_cost, sample_permutation_s3, scenario1_loss, scenario2_loss, scenario3_loss, GroundTruthSet,
    LabeledBox, LossConfig,
};

const DRAWS: usize = 120;
const TOL: f64 = 1e-4;
const H: f64 = 1e-6;

fn fd(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += H;
            b[i] -= H;
            (f(&a) - f(&b)) / (2.0 * H)
        })
        .collect()
}

/// Norm-wise relative error with a tiny floor for vanishing gradients.
fn rel(a: &[f64], b: &[f64]) -> f64 {
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    n(&d) / n(a).max(n(b)).max(1e-6)
}

fn head_kind_check(kind: CardinalityKind) {
    let mut rng = ChaCha8Rng::seed_from_u64(kind as u64 + 1);
    for _ in 0..DRAWS {
        let max = rng.random_range(1..=12);
        let alpha: Vec<f64> = (0..kind.param_count(max)).map(|_| rng.random_range(-3.0..3.0)).collect();
        let m = rng.random_range(0..=max);
        let nll = |a: &[f64]| card_nll(&CardinalityHead::new(kind, a.to_vec(), max).unwrap(), m).unwrap().0;
        let (_, g) = card_nll(&CardinalityHead::new(kind, alpha.clone(), max).unwrap(), m).unwrap();
        let e = rel(&g, &fd(&alpha, nll));
        assert!(e < TOL, "{kind:?} m={m} err {e}");
    }
}

#[test]
fn categorical_nll() {
    head_kind_check(CardinalityKind::Categorical);
}

#[test]
fn poisson_nll() {
    head_kind_check(CardinalityKind::Poisson);
}

#[test]
fn negative_binomial_nll() {
    head_kind_check(CardinalityKind::NegativeBinomial);
}

#[test]
fn smooth_l1_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..DRAWS {
        let delta = rng.random_range(0.05..2.0);
        let t: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p: Vec<f64> = t
            .iter()
            .map(|v| {
                // stay away from the quadratic/linear switch point
                let mut d: f64 = rng.random_range(-3.0..3.0);
                if (d.abs() - delta).abs() < 1e-3 {
                    d += 0.01;
                }
                v + d
            })
            .collect();
        let (_, g) = smooth_l1(&p, &t, delta).unwrap();
        let e = rel(&g, &fd(&p, |q| smooth_l1(q, &t, delta).unwrap().0));
        assert!(e < TOL, "err {e}");
    }
}

fn rand_box(rng: &mut ChaCha8Rng) -> AABox {
    let x = rng.random_range(0.0..0.7);
    let y = rng.random_range(0.0..0.7);
    AABox::new(x, y, x + rng.random_range(0.05..0.3), y + rng.random_range(0.05..0.3)).unwrap()
}

#[test]
fn giou_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..DRAWS {
        let t = rand_box(&mut rng);
        let p = BoxParams::from_box(&rand_box(&mut rng)).to_array();
        let (_, g) = giou_loss_grad(&BoxParams::from_slice(&p), &t);
        let e = rel(&g, &fd(&p, |q| giou_loss_grad(&BoxParams::from_slice(q), &t).0));
        assert!(e < TOL, "err {e}");
    }
}

#[test]
fn giou_loss_hand_value() {
    let pred = BoxParams::from_cxcywh(0.5, 0.5, 1.0, 1.0);
    let target = AABox::from_cxcywh(1.5, 1.5, 1.0, 1.0).unwrap();
    assert!((giou_loss_grad(&pred, &target).0 - 1.5).abs() < 1e-12);
}

struct Instance {
    raw: Vec<f64>,
    gt: GroundTruthSet,
}

fn box_instance(rng: &mut ChaCha8Rng, layout: &HeadLayout) -> Instance {
    let mut raw: Vec<f64> = (0..layout.output_width()).map(|_| rng.random_range(-2.0..2.0)).collect();
    for s in 0..layout.slots {
        let o = layout.card_params() + s * (layout.state_dim + 1);
        raw[o] = rng.random_range(0.1..0.9);
        raw[o + 1] = rng.random_range(0.1..0.9);
        raw[o + 2] = rng.random_range(-3.0..-0.7);
        raw[o + 3] = rng.random_range(-3.0..-0.7);
    }
    let m = rng.random_range(0..=layout.slots);
    let gt = GroundTruthSet::Boxes(
        (0..m)
            .map(|_| LabeledBox {
                bbox: rand_box(rng),
                class: 0,
            })
            .collect(),
    );
    Instance { raw, gt }
}

fn layout(slots: usize, perm_head: bool, kind: CardinalityKind) -> HeadLayout {
    HeadLayout {
        card_kind: kind,
        slots,
        state_dim: 4,
        perm_head,
    }
}

/// Checks a composite loss with its assignment frozen at the optimum of the
/// starting point.
fn composite_check(perm_head: bool, seed: u64, loss: impl Fn(&HeadLayout, &[f64], &GroundTruthSet, &[usize]) -> (f64, Vec<f64>)) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds = [CardinalityKind::Categorical, CardinalityKind::Poisson, CardinalityKind::NegativeBinomial];
    for d in 0..DRAWS {
        let l = layout(rng.random_range(1..=4), perm_head, kinds[d % 3]);
        let inst = box_instance(&mut rng, &l);
        let out = l.split(&inst.raw).unwrap();
        let mut pi = sample_permutation_s3(&build_matching_cost(&out, &inst.gt, &LossConfig::default()).unwrap()).perm;
        for s in 0..l.slots {
            if !pi.contains(&s) {
                pi.push(s);
            }
        }
        let (_, g) = loss(&l, &inst.raw, &inst.gt, &pi);
        let e = rel(&g, &fd(&inst.raw, |r| loss(&l, r, &inst.gt, &pi).0));
        assert!(e < TOL, "draw {d}: err {e}");
    }
}

#[test]
fn scenario1_composite() {
    composite_check(false, 31, |l, raw, gt, _| {
        let r = scenario1_loss(&l.split(raw).unwrap(), gt, &LossConfig::default()).unwrap();
        (r.loss.total, r.grad.to_flat())
    });
}

#[test]
fn scenario2_composite() {
    composite_check(true, 32, |l, raw, gt, pi| {
        let r = scenario2_loss(&l.split(raw).unwrap(), gt, pi, &LossConfig::default()).unwrap();
        (r.loss.total, r.grad.to_flat())
    });
}

#[test]
fn scenario3_composite() {
    composite_check(false, 33, |l, raw, gt, pi| {
        let r = scenario3_loss(&l.split(raw).unwrap(), gt, pi, &LossConfig::default()).unwrap();
        (r.loss.total, r.grad.to_flat())
    });
}

#[test]
fn tagging_composites() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..DRAWS {
        let labels = rng.random_range(2..=6);
        let l = HeadLayout {
            card_kind: CardinalityKind::Categorical,
            slots: labels,
            state_dim: labels,
            perm_head: false,
        };
        let raw: Vec<f64> = (0..l.output_width()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let k = rng.random_range(0..=labels);
        let mut ids = rand::seq::index::sample(&mut rng, labels, k).into_vec();
        ids.sort_unstable();
        let gt = GroundTruthSet::Labels(ids);
        let out = l.split(&raw).unwrap();
        let pi = sample_permutation_s3(&build_matching_cost(&out, &gt, &LossConfig::default()).unwrap()).perm;
        let f = |r: &[f64]| {
            let res = scenario3_loss(&l.split(r).unwrap(), &gt, &pi, &LossConfig::default()).unwrap();
            (res.loss.total, res.grad.to_flat())
        };
        assert!(rel(&f(&raw).1, &fd(&raw, |r| f(r).0)) < TOL);

        // fixed-order tagging: slot index is the label, no state
        let l1 = HeadLayout { state_dim: 0, ..l.clone() };
        let raw1: Vec<f64> = (0..l1.output_width()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let f1 = |r: &[f64]| {
            let res = scenario1_loss(&l1.split(r).unwrap(), &gt, &LossConfig::default()).unwrap();
            (res.loss.total, res.grad.to_flat())
        };
        assert!(rel(&f1(&raw1).1, &fd(&raw1, |r| f1(r).0)) < TOL);
    }
}

#[test]
fn network_parameter_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let l = layout(3, false, CardinalityKind::Categorical);
    for _ in 0..10 {
        let net = SetNetwork::<f64>::new(6, &[8], l.clone(), &mut rng).unwrap();
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let inst = box_instance(&mut rng, &l);
        let out = l.split(&net.mlp.forward_one(&x).unwrap()).unwrap();
        let pi = sample_permutation_s3(&build_matching_cost(&out, &inst.gt, &LossConfig::default()).unwrap()).perm;
        let err = grad_check(&net.mlp, &x, 1e-6, |raw| {
            let r = scenario3_loss(&l.split(raw).unwrap(), &inst.gt, &pi, &LossConfig::default()).unwrap();
            (r.loss.total, r.grad.to_flat())
        })
        .unwrap();
        assert!(err < TOL, "err {err}");
    }
}

#[test]
fn quadratic_loss_on_linear_net_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let net = Mlp::<f64>::new_glorot(&[5, 3], &mut rng).unwrap();
    let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let err = grad_check(&net, &x, 1e-4, |o| (o.iter().map(|v| 0.5 * v * v).sum(), o.to_vec())).unwrap();
    assert!(err < 1e-7, "err {err}");
}
