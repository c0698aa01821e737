//! Acceptance run: every criterion prints one PASS/FAIL line, and the
//! process fails if any criterion does.
//!
//! Thresholds marked as piloted were fixed from a single pilot run on the
//! stated configuration; see the "Acceptance" chapter of the guide.

mod common;

use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use setpred::assignment::{brute_force_assignment, hungarian, CostMatrix};
use setpred::card_dist::{CardinalityHead, CardinalityKind};
use setpred::datagen::{gen_captcha, gen_multilabel, gen_toy_detection, verify_unique_solution, Dataset};
use setpred::gradcheck;
use setpred::inference::{brute_force_map, exact_map};
use setpred::metrics::EvalReport;
use setpred::network::{Checkpoint, SlotOutput};
use setpred::setloss::GroundTruthSet;
use setpred::trainer::{evaluate, init_network, train, TrainOutcome};
use setpred::{Precision, RunConfig, Scenario, Task};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(t: Instant, limit: Duration) -> (bool, String) {
    let e = t.elapsed();
    (e < limit, format!("{:.1}s of {}s", e.as_secs_f64(), limit.as_secs()))
}

fn split(all: Dataset, n_train: usize) -> (Dataset, Dataset) {
    let n = all.len();
    (all.slice(0..n_train), all.slice(n_train..n))
}

fn fit(cfg: &RunConfig, data: &Dataset) -> TrainOutcome<f32> {
    let net = init_network::<f32>(cfg, data.input_width().unwrap()).unwrap();
    train(net, data, cfg).unwrap()
}

fn eval(out: &TrainOutcome<f32>, data: &Dataset, cfg: &RunConfig) -> EvalReport {
    evaluate(&out.net, data, cfg).unwrap()
}

fn assignment_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let cols = rng.random_range(1..=7);
        let rows = rng.random_range(1..=cols);
        let data: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.random_range(-10.0..10.0)).collect())
            .collect();
        let c = CostMatrix::from_rows(&data).unwrap();
        worst = worst.max((hungarian(&c).cost - brute_force_assignment(&c).unwrap().cost).abs());
    }
    let (fast, time) = within(t, Duration::from_secs(5));
    outcome(worst <= 1e-9 && fast, format!("max cost gap {worst:.1e} on 1000 matrices, {time}"))
}

fn inference_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let kinds = [CardinalityKind::Categorical, CardinalityKind::Poisson, CardinalityKind::NegativeBinomial];
    let mut mismatches = 0;
    for i in 0..1000 {
        let m = rng.random_range(1..=10);
        let kind = kinds[i % 3];
        let alpha = (0..kind.param_count(m)).map(|_| rng.random_range(-3.0..3.0)).collect();
        let head = CardinalityHead::new(kind, alpha, m).unwrap();
        let slots: Vec<SlotOutput> = (0..m)
            .map(|_| SlotOutput {
                state: vec![],
                existence_logit: rng.random_range(-4.0..4.0),
            })
            .collect();
        let u = [0.5, 1.0, 2.36, 100.0][i % 4];
        let a = exact_map(&head, &slots, u).unwrap().sorted_slots();
        let b = brute_force_map(&head, &slots, u).unwrap().sorted_slots();
        mismatches += usize::from(a != b);
    }
    let (fast, time) = within(t, Duration::from_secs(5));
    outcome(mismatches == 0 && fast, format!("{mismatches} of 1000 sets differ, {time}"))
}

fn gradient_suite() -> Outcome {
    let t = Instant::now();
    let checks = gradcheck::check_all(&RunConfig::default(), 100, 3).unwrap();
    let worst = checks.iter().map(|c| c.max_rel_err).fold(0.0, f64::max);
    let all = checks.iter().all(|c| c.max_rel_err < 1e-4 && c.draws >= 100);
    let (fast, time) = within(t, Duration::from_secs(60));
    let names: Vec<&str> = checks.iter().map(|c| c.loss.as_str()).collect();
    outcome(
        all && fast,
        format!("{} losses ({}), worst rel. err {worst:.1e}, {time}", checks.len(), names.join(" ")),
    )
}

fn invariance_suite() -> Outcome {
    let mut failures = Vec::new();
    for (name, check) in common::ALL {
        for seed in 0..500 {
            if let Err(e) = check(seed) {
                failures.push(format!("{name} seed {seed}: {e}"));
                break;
            }
        }
    }
    let n = common::ALL.len();
    match failures.first() {
        None => outcome(true, format!("{n} properties x 500 cases")),
        Some(f) => outcome(false, f.clone()),
    }
}

fn detection_config(scenario: Scenario, seed: u64) -> RunConfig {
    RunConfig {
        task: Task::Detect,
        scenario,
        slots: 5,
        hidden: vec![256, 256],
        precision: Precision::F32,
        lr: 0.01,
        batch: 32,
        weight_decay: 0.005,
        epochs: 60,
        seed,
        ..Default::default()
    }
}

fn orderless_beats_fixed_order() -> Outcome {
    let t = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for seed in 1..=3 {
        let (train_d, test_d) = split(gen_toy_detection(5500, 5, 0.4, seed).unwrap(), 5000);
        let mut f1 = [0.0; 2];
        for (k, s) in [Scenario::FixedOrder, Scenario::Orderless].into_iter().enumerate() {
            let cfg = detection_config(s, seed);
            f1[k] = eval(&fit(&cfg, &train_d), &test_d, &cfg).best_f1.unwrap();
        }
        pass &= f1[1] - f1[0] >= 0.15;
        parts.push(format!("seed {seed}: {:.3} vs {:.3}", f1[1], f1[0]));
    }
    let (fast, time) = within(t, Duration::from_secs(15 * 60));
    outcome(pass && fast, format!("best-F1 orderless vs fixed order, {}; {time}", parts.join(", ")))
}

/// Piloted at 0.83 with this configuration.
const OCCLUSION_F1: f64 = 0.80;

fn occlusion_robustness() -> Outcome {
    let (train_d, test_d) = split(gen_toy_detection(40_500, 5, 0.6, 11).unwrap(), 40_000);
    let cfg = RunConfig {
        hidden: vec![512, 512],
        weight_decay: 0.001,
        ..detection_config(Scenario::Orderless, 11)
    };
    let f1 = eval(&fit(&cfg, &train_d), &test_d, &cfg).best_f1.unwrap();
    outcome(f1 >= OCCLUSION_F1, format!("best-F1 {f1:.3} at overlap 0.6 (threshold {OCCLUSION_F1})"))
}

/// Piloted thresholds.
const CAPTCHA_ACCURACY: f64 = 0.70;
const CAPTCHA_MARGIN: f64 = 0.30;

fn captcha_config(query_blind: bool) -> RunConfig {
    RunConfig {
        task: Task::Captcha,
        scenario: Scenario::Orderless,
        slots: 4,
        hidden: vec![512, 512],
        precision: Precision::F32,
        lr: 0.01,
        lr_decay: 0.96,
        batch: 32,
        weight_decay: 0.0001,
        epochs: 80,
        w_l1: 2.0,
        smooth_l1_delta: 0.01,
        u: 2.0,
        query_blind,
        seed: 5,
        ..Default::default()
    }
}

fn captcha() -> Outcome {
    let t = Instant::now();
    let (train_d, test_d) = split(gen_captcha(22_000, 4, 5).unwrap(), 20_000);
    let unique = train_d.instances.iter().chain(&test_d.instances).filter(|i| verify_unique_solution(i)).count();
    let mut acc = [0.0; 2];
    for (k, blind) in [false, true].into_iter().enumerate() {
        let cfg = captcha_config(blind);
        acc[k] = eval(&fit(&cfg, &train_d), &test_d, &cfg).accuracy.unwrap();
    }
    let (fast, time) = within(t, Duration::from_secs(30 * 60));
    let pass = unique == 22_000 && acc[0] >= CAPTCHA_ACCURACY && acc[0] - acc[1] >= CAPTCHA_MARGIN && fast;
    outcome(
        pass,
        format!(
            "accuracy {:.3} vs query-blind {:.3} (need >= {CAPTCHA_ACCURACY} and margin {CAPTCHA_MARGIN}), {unique}/22000 unique, {time}",
            acc[0], acc[1]
        ),
    )
}

/// Piloted threshold.
const TAGGING_MAE: f64 = 0.5;

fn cardinality_error() -> Outcome {
    let (train_d, test_d) = split(gen_multilabel(5500, 10, 13).unwrap(), 5000);
    let cfg = |card_only| RunConfig {
        task: Task::Tagging,
        scenario: Scenario::FixedOrder,
        slots: 10,
        precision: Precision::F32,
        epochs: 30,
        card_only,
        seed: 13,
        ..Default::default()
    };
    let mut mae = [(0.0, 0.0); 2];
    for (k, card_only) in [false, true].into_iter().enumerate() {
        let c = cfg(card_only);
        let r = eval(&fit(&c, &train_d), &test_d, &c);
        mae[k] = (r.card_mae.unwrap(), r.card_mae_std.unwrap());
    }
    let pass = mae[0].0 < TAGGING_MAE && mae[0].0 <= mae[1].0;
    outcome(
        pass,
        format!(
            "MAE {:.3}±{:.3} joint vs {:.3}±{:.3} cardinality only (threshold {TAGGING_MAE})",
            mae[0].0, mae[0].1, mae[1].0, mae[1].1
        ),
    )
}

/// Detection instances with exactly four objects.
fn four_object_scenes(n: usize) -> Dataset {
    let mut d = gen_toy_detection(6 * n, 4, 0.4, 17).unwrap();
    d.instances.retain(|i| i.gt.len() == 4);
    d.slice(0..n)
}

fn top1_weight(data: &Dataset, shuffle_elements: bool) -> f64 {
    let cfg = RunConfig {
        scenario: Scenario::LearnedPermutation,
        slots: 4,
        epochs: 30,
        perm_prior_weight: 0.3,
        shuffle_elements,
        ..detection_config(Scenario::LearnedPermutation, 17)
    };
    fit(&cfg, data).histogram.unwrap().mean_top1_weight()
}

fn permutation_discovery() -> Outcome {
    let orderless = four_object_scenes(3000);
    let mut planted = orderless.clone();
    for inst in &mut planted.instances {
        if let GroundTruthSet::Boxes(b) = &mut inst.gt {
            b.sort_by(|a, c| a.bbox.x1.total_cmp(&c.bbox.x1));
        }
    }
    let w_planted = top1_weight(&planted, false);
    let w_orderless = top1_weight(&orderless, true);
    outcome(
        w_planted > 0.5 && w_orderless < 0.5,
        format!("top-1 weight planted {w_planted:.3}, orderless {w_orderless:.3}"),
    )
}

fn determinism() -> Outcome {
    let (train_d, test_d) = split(gen_toy_detection(300, 4, 0.4, 19).unwrap(), 250);
    let cfg = RunConfig {
        scenario: Scenario::LearnedPermutation,
        slots: 4,
        hidden: vec![64],
        epochs: 3,
        ..detection_config(Scenario::LearnedPermutation, 19)
    };
    let run = || {
        let out = fit(&cfg, &train_d);
        let ckpt = Checkpoint::capture(&out.net, &cfg).to_json().unwrap();
        let report = serde_json::to_string(&eval(&out, &test_d, &cfg)).unwrap();
        let log = out.log.iterations_csv();
        (ckpt, report, log)
    };
    let (a, b) = (run(), run());
    outcome(a == b, format!("checkpoint {} bytes, report {} bytes", a.0.len(), a.1.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("assignment oracle", assignment_oracle),
        ("inference oracle", inference_oracle),
        ("gradient suite", gradient_suite),
        ("set invariance", invariance_suite),
        ("orderless training", orderless_beats_fixed_order),
        ("occlusion robustness", occlusion_robustness),
        ("captcha", captcha),
        ("cardinality error", cardinality_error),
        ("permutation discovery", permutation_discovery),
        ("determinism", determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {} {name}: {verdict} ({}; {:.0}s)", i + 1, o.detail, t.elapsed().as_secs_f64());
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
