//! Mini-batch SGD over a dataset for any of the three scenarios, plus
//! evaluation and run-directory output.
//!
//! Each iteration runs a forward pass over the batch, samples a permutation
//! per instance from the current outputs (scenarios 2 and 3), evaluates the
//! composite loss at that fixed permutation and takes one momentum-SGD step
//! on the batch-mean loss. The learning rate decays geometrically per epoch.

use std::borrow::Cow;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Scenario, Task};
use crate::datagen::{instance_rng, Dataset, Instance, CAPTCHA_H, CAPTCHA_W};
use crate::error::{contract, Error, Result};
use crate::geometry::BoxParams;
use crate::inference::{infer, InferenceConfig, PredictedSet};
use crate::metrics::{cardinality_mae, captcha_accuracy, detection_pr, prf_multilabel, set_prf, EvalReport, ScoredBox};
use crate::network::{Checkpoint, NetworkOutput, Real, SetNetwork, Sgd};
use crate::setloss::{
    build_matching_cost, cardinality_only_loss, sample_permutation_s2_weighted, sample_permutation_s3, scenario1_loss,
    scenario2_loss, scenario3_loss, GroundTruthSet, LossBreakdown, LossConfig, PermutationHistogram, SetLoss,
};

/// Batch-mean loss above which training is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Raw network outputs beyond this magnitude overflow box decoding
/// (`exp(log w)` squared); reaching it is treated as divergence.
pub const OUTPUT_LIMIT: f64 = 250.0;

/// Predictions evaluated per forward pass during evaluation.
const EVAL_CHUNK: usize = 256;

/// Builds a freshly initialized network for `cfg` and inputs of width
/// `input_width`. Initialization depends only on `cfg.seed`.
pub fn init_network<T: Real>(cfg: &RunConfig, input_width: usize) -> Result<SetNetwork<T>> {
    let mut rng = instance_rng(cfg.seed, 100, 0);
    SetNetwork::new(input_width, &cfg.hidden, cfg.head_layout(), &mut rng)
}

/// The model input of an instance; query-blind runs see a zeroed query.
pub fn model_input<'a>(inst: &'a Instance, cfg: &RunConfig) -> Cow<'a, [f64]> {
    if cfg.query_blind {
        let mut v = inst.input.clone();
        let scene = CAPTCHA_W * CAPTCHA_H;
        let start = scene.min(v.len());
        v[start..].iter_mut().for_each(|x| *x = 0.0);
        Cow::Owned(v)
    } else {
        Cow::Borrowed(&inst.input)
    }
}

/// Loss of one instance under `scenario`, with the sampled permutation.
/// `gt` must already be in normalized coordinates.
pub fn instance_loss(
    scenario: Scenario,
    out: &NetworkOutput,
    gt: &GroundTruthSet,
    cfg: &LossConfig,
    perm_prior_weight: f64,
    card_only: bool,
) -> Result<(SetLoss, Option<Vec<usize>>)> {
    if card_only {
        return Ok((cardinality_only_loss(out, gt)?, None));
    }
    match scenario {
        Scenario::FixedOrder => Ok((scenario1_loss(out, gt, cfg)?, None)),
        Scenario::Orderless => {
            let pi = sample_permutation_s3(&build_matching_cost(out, gt, cfg)?).perm;
            Ok((scenario3_loss(out, gt, &pi, cfg)?, Some(pi)))
        }
        Scenario::LearnedPermutation => {
            let logits = out
                .perm_logits
                .as_ref()
                .ok_or_else(|| contract("scenario 2 needs a permutation head"))?;
            let pi = sample_permutation_s2_weighted(&build_matching_cost(out, gt, cfg)?, logits, perm_prior_weight)?.perm;
            Ok((scenario2_loss(out, gt, &pi, cfg)?, Some(pi)))
        }
    }
}

/// Batch-mean losses of one SGD iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub card: f64,
    pub state: f64,
    pub perm: f64,
}

/// Instance-mean losses of one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub card: f64,
    pub state: f64,
    pub perm: f64,
}

/// Wall-clock time of one iteration in nanoseconds. Kept apart from the
/// loss records because it varies between otherwise identical runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub iteration: u64,
    pub forward_ns: u64,
    pub loss_ns: u64,
    pub backward_ns: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub iterations: Vec<IterationRecord>,
    pub epochs: Vec<EpochRecord>,
    pub timing: Vec<TimingRecord>,
}

impl RunLog {
    pub fn iterations_csv(&self) -> String {
        let mut s = String::from("iteration,epoch,lr,loss,card,state,perm\n");
        for r in &self.iterations {
            s.push_str(&format!(
                "{},{},{:?},{:?},{:?},{:?},{:?}\n",
                r.iteration, r.epoch, r.lr, r.loss, r.card, r.state, r.perm
            ));
        }
        s
    }

    pub fn epochs_csv(&self) -> String {
        let mut s = String::from("epoch,lr,loss,card,state,perm\n");
        for r in &self.epochs {
            s.push_str(&format!(
                "{},{:?},{:?},{:?},{:?},{:?}\n",
                r.epoch, r.lr, r.loss, r.card, r.state, r.perm
            ));
        }
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("iteration,forward_ns,loss_ns,backward_ns\n");
        for r in &self.timing {
            s.push_str(&format!("{},{},{},{}\n", r.iteration, r.forward_ns, r.loss_ns, r.backward_ns));
        }
        s
    }
}

pub struct TrainOutcome<T> {
    pub net: SetNetwork<T>,
    pub log: RunLog,
    /// Sampled permutations per instance id (scenario 2 only).
    pub histogram: Option<PermutationHistogram>,
}

/// State handed to the per-epoch callback of [`train_with`].
pub struct EpochEvent<'a, T> {
    pub epoch: usize,
    pub net: &'a SetNetwork<T>,
    pub record: &'a EpochRecord,
}

fn check_data(net_input: usize, data: &Dataset, cfg: &RunConfig) -> Result<()> {
    if data.task != cfg.task {
        return Err(Error::Config(format!(
            "dataset holds {} instances but the run is configured for {}",
            data.task.name(),
            cfg.task.name()
        )));
    }
    if let Some(w) = data.input_width() {
        if w != net_input {
            return Err(Error::Config(format!("inputs have {w} values, network expects {net_input}")));
        }
    }
    if data.max_cardinality() > cfg.slots {
        return Err(Error::Config(format!(
            "dataset has sets of size {} but only {} slots",
            data.max_cardinality(),
            cfg.slots
        )));
    }
    Ok(())
}

fn normalized_gt(inst: &Instance) -> GroundTruthSet {
    inst.gt.normalized(inst.width as f64, inst.height as f64)
}

pub fn train<T: Real>(net: SetNetwork<T>, data: &Dataset, cfg: &RunConfig) -> Result<TrainOutcome<T>> {
    train_with(net, data, cfg, |_| Ok(()))
}

/// Trains `net` on `data`, calling `on_epoch` after every epoch.
pub fn train_with<T: Real, F>(mut net: SetNetwork<T>, data: &Dataset, cfg: &RunConfig, mut on_epoch: F) -> Result<TrainOutcome<T>>
where
    F: FnMut(&EpochEvent<'_, T>) -> Result<()>,
{
    cfg.validate()?;
    if net.layout != cfg.head_layout() {
        return Err(Error::Config("network head layout does not match the run configuration".into()));
    }
    check_data(net.mlp.input_width(), data, cfg)?;
    let loss_cfg = cfg.loss_config();
    let mut rng = instance_rng(cfg.seed, 101, 0);
    let mut sgd = Sgd::new(&net.mlp);
    let mut histogram = (cfg.scenario == Scenario::LearnedPermutation).then(|| PermutationHistogram::new(cfg.slots));
    let mut log = RunLog::default();
    let targets: Vec<GroundTruthSet> = data.instances.iter().map(normalized_gt).collect();
    let inputs: Vec<Cow<[f64]>> = data.instances.iter().map(|i| model_input(i, cfg)).collect();
    let width = net.mlp.input_width();
    let out_width = net.layout.output_width();

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut iteration = 0u64;
    let mut lr = cfg.lr;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossBreakdown::default();
        for batch in order.chunks(cfg.batch) {
            let t0 = Instant::now();
            let mut x = Array2::<T>::zeros((batch.len(), width));
            for (r, &i) in batch.iter().enumerate() {
                x.row_mut(r).iter_mut().zip(inputs[i].iter()).for_each(|(d, &s)| *d = T::of_f64(s));
            }
            let pass = net.mlp.forward_train(&x, cfg.dropout, &mut rng)?;
            if pass.output().iter().any(|v| !(v.as_f64().abs() <= OUTPUT_LIMIT)) {
                return Err(Error::Divergence {
                    iteration,
                    loss: f64::NAN,
                });
            }
            let outs = crate::network::split_rows(&net.layout, pass.output())?;
            let t1 = Instant::now();

            let mut grad = Array2::<T>::zeros((batch.len(), out_width));
            let mut batch_loss = LossBreakdown::default();
            let scale = 1.0 / batch.len() as f64;
            for (r, &i) in batch.iter().enumerate() {
                let gt: Cow<GroundTruthSet> = if cfg.shuffle_elements {
                    let mut p: Vec<usize> = (0..targets[i].len()).collect();
                    p.shuffle(&mut rng);
                    Cow::Owned(targets[i].permuted(&p))
                } else {
                    Cow::Borrowed(&targets[i])
                };
                let (res, pi) = instance_loss(cfg.scenario, &outs[r], &gt, &loss_cfg, cfg.perm_prior_weight, cfg.card_only)?;
                if let (Some(h), Some(pi)) = (histogram.as_mut(), pi) {
                    h.update(data.instances[i].id, &pi)?;
                }
                batch_loss += res.loss;
                let flat = res.grad.to_flat();
                grad.row_mut(r).iter_mut().zip(flat).for_each(|(d, g)| *d = T::of_f64(g * scale));
            }
            let t2 = Instant::now();

            let mean = LossBreakdown {
                total: batch_loss.total * scale,
                card: batch_loss.card * scale,
                state: batch_loss.state * scale,
                perm: batch_loss.perm * scale,
            };
            if !mean.total.is_finite() || mean.total > DIVERGENCE_LIMIT {
                return Err(Error::Divergence {
                    iteration,
                    loss: mean.total,
                });
            }
            let grads = net.mlp.backward(&pass, &grad)?;
            sgd.step(&mut net.mlp, &grads, lr, cfg.momentum, cfg.weight_decay)?;
            if !net.mlp.is_finite() {
                return Err(Error::Divergence {
                    iteration,
                    loss: f64::NAN,
                });
            }
            let t3 = Instant::now();

            log.iterations.push(IterationRecord {
                iteration,
                epoch,
                lr,
                loss: mean.total,
                card: mean.card,
                state: mean.state,
                perm: mean.perm,
            });
            log.timing.push(TimingRecord {
                iteration,
                forward_ns: (t1 - t0).as_nanos() as u64,
                loss_ns: (t2 - t1).as_nanos() as u64,
                backward_ns: (t3 - t2).as_nanos() as u64,
            });
            sum += batch_loss;
            iteration += 1;
        }
        let n = data.len().max(1) as f64;
        let record = EpochRecord {
            epoch,
            lr,
            loss: sum.total / n,
            card: sum.card / n,
            state: sum.state / n,
            perm: sum.perm / n,
        };
        log.epochs.push(record);
        on_epoch(&EpochEvent {
            epoch,
            net: &net,
            record: &record,
        })?;
        lr *= cfg.lr_decay;
    }
    Ok(TrainOutcome { net, log, histogram })
}

/// A decoded prediction in canvas coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: u64,
    pub set: PredictedSet,
    /// Predicted label ids (tagging).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub labels: Option<Vec<usize>>,
    /// Predicted boxes with existence scores (box tasks).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub boxes: Option<Vec<ScoredBox>>,
    /// Every slot's box and score, used for ranking metrics.
    #[serde(skip)]
    pub all_slots: Vec<ScoredBox>,
}

fn slot_box(state: &[f64], inst: &Instance) -> crate::geometry::AABox {
    BoxParams::from_slice(&state[..4])
        .decode()
        .scaled(inst.width as f64, inst.height as f64)
}

fn slot_label(out: &NetworkOutput, slot: usize) -> usize {
    let st = &out.slots[slot].state;
    if st.is_empty() {
        return slot;
    }
    let mut best = 0;
    for (k, v) in st.iter().enumerate() {
        if *v > st[best] {
            best = k;
        }
    }
    best
}

fn decode(out: &NetworkOutput, inst: &Instance, task: Task, icfg: &InferenceConfig) -> Result<Prediction> {
    let set = infer(out, icfg)?;
    let mut pred = Prediction {
        id: inst.id,
        set,
        labels: None,
        boxes: None,
        all_slots: Vec::new(),
    };
    if task.has_boxes() {
        pred.all_slots = out
            .slots
            .iter()
            .map(|s| ScoredBox {
                bbox: slot_box(&s.state, inst),
                score: crate::math::sigmoid(s.existence_logit),
            })
            .collect();
        pred.boxes = Some(pred.set.slots.iter().map(|&s| pred.all_slots[s]).collect());
    } else {
        let mut labels: Vec<usize> = pred.set.slots.iter().map(|&s| slot_label(out, s)).collect();
        labels.sort_unstable();
        labels.dedup();
        pred.labels = Some(labels);
    }
    Ok(pred)
}

/// Decodes every instance of `data`.
pub fn predict<T: Real>(net: &SetNetwork<T>, data: &Dataset, cfg: &RunConfig, icfg: &InferenceConfig) -> Result<Vec<Prediction>> {
    icfg.validate()?;
    check_data(net.mlp.input_width(), data, cfg)?;
    let mut preds = Vec::with_capacity(data.len());
    for chunk in data.instances.chunks(EVAL_CHUNK) {
        let inputs: Vec<Cow<[f64]>> = chunk.iter().map(|i| model_input(i, cfg)).collect();
        let refs: Vec<&[f64]> = inputs.iter().map(|c| c.as_ref()).collect();
        let (_, outs) = net.forward_many(&refs)?;
        for (out, inst) in outs.iter().zip(chunk) {
            preds.push(decode(out, inst, cfg.task, icfg)?);
        }
    }
    Ok(preds)
}

/// Metrics of already decoded predictions against `data`.
pub fn score(preds: &[Prediction], data: &Dataset, num_labels: usize) -> EvalReport {
    let gt_card: Vec<usize> = data.instances.iter().map(|i| i.gt.len()).collect();
    let pred_card: Vec<usize> = preds.iter().map(|p| p.set.cardinality).collect();
    let (mae, std) = cardinality_mae(&pred_card, &gt_card);
    let mut report = match data.task {
        Task::Tagging => {
            let p: Vec<Vec<usize>> = preds.iter().map(|p| p.labels.clone().unwrap_or_default()).collect();
            let g: Vec<Vec<usize>> = data.instances.iter().map(|i| i.gt.labels().unwrap_or(&[]).to_vec()).collect();
            prf_multilabel(&p, &g, num_labels)
        }
        Task::Detect | Task::Captcha => {
            let gt_boxes: Vec<Vec<_>> = data
                .instances
                .iter()
                .map(|i| i.gt.boxes().unwrap_or(&[]).iter().map(|b| b.bbox).collect())
                .collect();
            let sets: Vec<Vec<_>> = preds
                .iter()
                .map(|p| p.boxes.as_deref().unwrap_or(&[]).iter().map(|b| b.bbox).collect())
                .collect();
            let ranked: Vec<Vec<ScoredBox>> = preds.iter().map(|p| p.all_slots.clone()).collect();
            let d = detection_pr(&ranked, &gt_boxes, 0.5);
            let (sp, sr, sf) = set_prf(&sets, &gt_boxes, 0.5);
            let mut r = EvalReport {
                ap: Some(d.ap),
                best_f1: Some(d.best_f1),
                mr: Some(d.mr),
                set_p: Some(sp),
                set_r: Some(sr),
                set_f1: Some(sf),
                instances: Some(data.len() as f64),
                ..Default::default()
            };
            if data.task == Task::Captcha {
                r.accuracy = Some(captcha_accuracy(&sets, &gt_boxes));
            }
            r
        }
    };
    report.card_mae = Some(mae);
    report.card_mae_std = Some(std);
    report
}

/// Decodes and scores `data` with the inference settings of `cfg`.
pub fn evaluate<T: Real>(net: &SetNetwork<T>, data: &Dataset, cfg: &RunConfig) -> Result<EvalReport> {
    let preds = predict(net, data, cfg, &cfg.inference_config())?;
    Ok(score(&preds, data, cfg.slots))
}

/// The headline metric used to pick `U`: O-F1 for tagging, set F1 for
/// detection and accuracy for CAPTCHA.
pub fn headline(report: &EvalReport, task: Task) -> f64 {
    match task {
        Task::Tagging => report.o_f1,
        Task::Detect => report.set_f1,
        Task::Captcha => report.accuracy,
    }
    .unwrap_or(0.0)
}

/// Picks `U` from `grid` by the headline metric on `validation`; ties go to
/// the earlier grid entry.
pub fn select_u<T: Real>(net: &SetNetwork<T>, validation: &Dataset, cfg: &RunConfig, grid: &[f64]) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &u in grid {
        let icfg = InferenceConfig { u, mode: cfg.mode };
        let preds = predict(net, validation, cfg, &icfg)?;
        let v = headline(&score(&preds, validation, cfg.slots), cfg.task);
        if best.is_none_or(|(b, _)| v > b) {
            best = Some((v, u));
        }
    }
    best.map(|b| b.1).ok_or_else(|| Error::Config("empty U grid".into()))
}

/// Default grid searched for `U`.
pub const U_GRID: [f64; 5] = [0.5, 1.0, 2.0, 4.0, 8.0];

/// Writes `checkpoint.json`, `config.txt`, `runlog.csv`, `epochs.csv`,
/// `timing.csv` and, for scenario 2, `histogram.json` and `histogram.csv`
/// into `dir`.
pub fn save_run<T: Real>(dir: &Path, outcome: &TrainOutcome<T>, cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("checkpoint.json"), Checkpoint::capture(&outcome.net, cfg).to_json()?)?;
    std::fs::write(dir.join("config.txt"), format!("# config_hash {}\n{}", cfg.hash(), cfg.serialize()))?;
    std::fs::write(dir.join("runlog.csv"), outcome.log.iterations_csv())?;
    std::fs::write(dir.join("epochs.csv"), outcome.log.epochs_csv())?;
    std::fs::write(dir.join("timing.csv"), outcome.log.timing_csv())?;
    if let Some(h) = &outcome.histogram {
        std::fs::write(dir.join("histogram.json"), serde_json::to_string(h)?)?;
        std::fs::write(dir.join("histogram.csv"), h.to_csv(3))?;
    }
    Ok(())
}
