//! Evaluation metrics for tagging, detection and CAPTCHA sets.
//!
//! Conventions: a ratio with an empty denominator is 0, F1 is the harmonic
//! mean of the reported precision and recall (0 when both are 0), and
//! per-class averages skip classes that never occur in the ground truth.
//! The one exception is per-instance scoring, where an empty prediction for
//! an empty ground-truth set counts as precision and recall 1.

use serde::{Deserialize, Serialize};

use crate::assignment::{hungarian, CostMatrix};
use crate::geometry::{iou, AABox};

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    ratio(2.0 * p * r, p + r)
}

/// Named metric values. Absent fields were not computed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "C-P", skip_serializing_if = "Option::is_none", default)]
    pub c_p: Option<f64>,
    #[serde(rename = "C-R", skip_serializing_if = "Option::is_none", default)]
    pub c_r: Option<f64>,
    #[serde(rename = "C-F1", skip_serializing_if = "Option::is_none", default)]
    pub c_f1: Option<f64>,
    #[serde(rename = "O-P", skip_serializing_if = "Option::is_none", default)]
    pub o_p: Option<f64>,
    #[serde(rename = "O-R", skip_serializing_if = "Option::is_none", default)]
    pub o_r: Option<f64>,
    #[serde(rename = "O-F1", skip_serializing_if = "Option::is_none", default)]
    pub o_f1: Option<f64>,
    #[serde(rename = "I-P", skip_serializing_if = "Option::is_none", default)]
    pub i_p: Option<f64>,
    #[serde(rename = "I-R", skip_serializing_if = "Option::is_none", default)]
    pub i_r: Option<f64>,
    #[serde(rename = "I-F1", skip_serializing_if = "Option::is_none", default)]
    pub i_f1: Option<f64>,
    #[serde(rename = "AP", skip_serializing_if = "Option::is_none", default)]
    pub ap: Option<f64>,
    #[serde(rename = "best-F1", skip_serializing_if = "Option::is_none", default)]
    pub best_f1: Option<f64>,
    #[serde(rename = "MR", skip_serializing_if = "Option::is_none", default)]
    pub mr: Option<f64>,
    #[serde(rename = "set-P", skip_serializing_if = "Option::is_none", default)]
    pub set_p: Option<f64>,
    #[serde(rename = "set-R", skip_serializing_if = "Option::is_none", default)]
    pub set_r: Option<f64>,
    #[serde(rename = "set-F1", skip_serializing_if = "Option::is_none", default)]
    pub set_f1: Option<f64>,
    #[serde(rename = "accuracy", skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<f64>,
    #[serde(rename = "card-MAE", skip_serializing_if = "Option::is_none", default)]
    pub card_mae: Option<f64>,
    #[serde(rename = "card-MAE-std", skip_serializing_if = "Option::is_none", default)]
    pub card_mae_std: Option<f64>,
    #[serde(rename = "instances", skip_serializing_if = "Option::is_none", default)]
    pub instances: Option<f64>,
}

impl EvalReport {
    /// `(name, value)` pairs of the computed metrics in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        let all = [
            ("C-P", self.c_p),
            ("C-R", self.c_r),
            ("C-F1", self.c_f1),
            ("O-P", self.o_p),
            ("O-R", self.o_r),
            ("O-F1", self.o_f1),
            ("I-P", self.i_p),
            ("I-R", self.i_r),
            ("I-F1", self.i_f1),
            ("AP", self.ap),
            ("best-F1", self.best_f1),
            ("MR", self.mr),
            ("set-P", self.set_p),
            ("set-R", self.set_r),
            ("set-F1", self.set_f1),
            ("accuracy", self.accuracy),
            ("card-MAE", self.card_mae),
            ("card-MAE-std", self.card_mae_std),
            ("instances", self.instances),
        ];
        all.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))).collect()
    }

    /// One `name,value` row per metric, with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,value\n");
        for (k, v) in self.entries() {
            s.push_str(&format!("{k},{v}\n"));
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Fills every field of `other` that is set.
    pub fn merge(&mut self, other: &EvalReport) {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(c_p, c_r, c_f1, o_p, o_r, o_f1, i_p, i_r, i_f1, ap, best_f1, mr, set_p, set_r, set_f1, accuracy, card_mae, card_mae_std, instances);
    }
}

/// Per-class, overall and per-instance precision, recall and F1 of label
/// sets over `num_labels` labels. Labels outside `0..num_labels` are ignored.
pub fn prf_multilabel(preds: &[Vec<usize>], gts: &[Vec<usize>], num_labels: usize) -> EvalReport {
    assert_eq!(preds.len(), gts.len(), "prediction and ground-truth counts differ");
    let mut tp = vec![0.0; num_labels];
    let mut fp = vec![0.0; num_labels];
    let mut fnn = vec![0.0; num_labels];
    let (mut ip, mut ir) = (0.0, 0.0);
    for (p, g) in preds.iter().zip(gts) {
        let pm = mask(p, num_labels);
        let gm = mask(g, num_labels);
        let mut t = 0.0;
        for c in 0..num_labels {
            match (pm[c], gm[c]) {
                (true, true) => {
                    tp[c] += 1.0;
                    t += 1.0;
                }
                (true, false) => fp[c] += 1.0,
                (false, true) => fnn[c] += 1.0,
                _ => {}
            }
        }
        let np = pm.iter().filter(|&&b| b).count() as f64;
        let ng = gm.iter().filter(|&&b| b).count() as f64;
        if np == 0.0 && ng == 0.0 {
            // an empty prediction of an empty set is exactly right
            ip += 1.0;
            ir += 1.0;
        } else {
            ip += ratio(t, np);
            ir += ratio(t, ng);
        }
    }
    let present: Vec<usize> = (0..num_labels).filter(|&c| tp[c] + fnn[c] > 0.0).collect();
    let k = present.len() as f64;
    let c_p = ratio(present.iter().map(|&c| ratio(tp[c], tp[c] + fp[c])).sum(), k);
    let c_r = ratio(present.iter().map(|&c| ratio(tp[c], tp[c] + fnn[c])).sum(), k);
    let (t, p, n) = (tp.iter().sum::<f64>(), fp.iter().sum::<f64>(), fnn.iter().sum::<f64>());
    let o_p = ratio(t, t + p);
    let o_r = ratio(t, t + n);
    let ni = preds.len() as f64;
    let (i_p, i_r) = (ratio(ip, ni), ratio(ir, ni));
    EvalReport {
        c_p: Some(c_p),
        c_r: Some(c_r),
        c_f1: Some(f1(c_p, c_r)),
        o_p: Some(o_p),
        o_r: Some(o_r),
        o_f1: Some(f1(o_p, o_r)),
        i_p: Some(i_p),
        i_r: Some(i_r),
        i_f1: Some(f1(i_p, i_r)),
        instances: Some(ni),
        ..Default::default()
    }
}

fn mask(labels: &[usize], n: usize) -> Vec<bool> {
    let mut m = vec![false; n];
    for &l in labels {
        if l < n {
            m[l] = true;
        }
    }
    m
}

/// Mean and population standard deviation of `|pred - gt|`.
pub fn cardinality_mae(pred: &[usize], gt: &[usize]) -> (f64, f64) {
    assert_eq!(pred.len(), gt.len(), "prediction and ground-truth counts differ");
    if pred.is_empty() {
        return (0.0, 0.0);
    }
    let e: Vec<f64> = pred.iter().zip(gt).map(|(&p, &g)| (p as f64 - g as f64).abs()).collect();
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// A detection with its confidence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub bbox: AABox,
    pub score: f64,
}

/// Ranking-based detection scores.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionScores {
    pub ap: f64,
    pub best_f1: f64,
    pub mr: f64,
}

/// Lower clamp applied to each miss rate before the geometric mean.
pub const MR_FLOOR: f64 = 1e-4;

/// One point of the ranked detection list: cumulative true and false
/// positives after each detection, highest score first.
fn ranked_hits(preds: &[Vec<ScoredBox>], gts: &[Vec<AABox>], iou_thresh: f64) -> Vec<bool> {
    let mut order: Vec<(usize, usize)> = preds
        .iter()
        .enumerate()
        .flat_map(|(i, p)| (0..p.len()).map(move |k| (i, k)))
        .collect();
    order.sort_by(|a, b| preds[b.0][b.1].score.total_cmp(&preds[a.0][a.1].score).then(a.cmp(b)));
    let mut used: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
    order
        .into_iter()
        .map(|(i, k)| {
            let det = &preds[i][k].bbox;
            let mut best: Option<(f64, usize)> = None;
            for (j, g) in gts[i].iter().enumerate() {
                if used[i][j] {
                    continue;
                }
                let v = iou(det, g);
                if v > iou_thresh && best.is_none_or(|(bv, _)| v > bv) {
                    best = Some((v, j));
                }
            }
            match best {
                Some((_, j)) => {
                    used[i][j] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// Average precision (all-point interpolation), best F1 over score
/// thresholds and log-average miss rate over 9 FPPI values log-spaced in
/// `[0.01, 1]`. Detections are matched greedily in descending score order to
/// the unmatched ground-truth box of highest IoU above `iou_thresh`.
pub fn detection_pr(preds: &[Vec<ScoredBox>], gts: &[Vec<AABox>], iou_thresh: f64) -> DetectionScores {
    assert_eq!(preds.len(), gts.len(), "prediction and ground-truth counts differ");
    let hits = ranked_hits(preds, gts, iou_thresh);
    let total_gt = gts.iter().map(|g| g.len()).sum::<usize>() as f64;
    let images = gts.len() as f64;

    let mut prec = Vec::with_capacity(hits.len());
    let mut rec = Vec::with_capacity(hits.len());
    let mut fppi = Vec::with_capacity(hits.len());
    let (mut tp, mut fp) = (0.0, 0.0);
    for &h in &hits {
        if h {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
        prec.push(ratio(tp, tp + fp));
        rec.push(ratio(tp, total_gt));
        fppi.push(ratio(fp, images));
    }

    let mut envelope = prec.clone();
    for k in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[k] = envelope[k].max(envelope[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for k in 0..rec.len() {
        ap += (rec[k] - prev_r) * envelope[k];
        prev_r = rec[k];
    }

    let best_f1 = prec.iter().zip(&rec).map(|(&p, &r)| f1(p, r)).fold(0.0, f64::max);

    let mut log_sum = 0.0;
    for i in 0..9 {
        let f = 10f64.powf(-2.0 + 2.0 * i as f64 / 8.0);
        // lowest miss rate reachable without exceeding this FPPI
        let mut miss = 1.0;
        for k in 0..rec.len() {
            if fppi[k] <= f {
                miss = f64::min(miss, 1.0 - rec[k]);
            }
        }
        log_sum += miss.clamp(MR_FLOOR, 1.0).ln();
    }
    DetectionScores {
        ap,
        best_f1,
        mr: (log_sum / 9.0).exp(),
    }
}

/// Maximum number of pairs with IoU above `iou_thresh` in a one-to-one
/// matching of `pred` against `gt`.
pub fn max_matches(pred: &[AABox], gt: &[AABox], iou_thresh: f64) -> usize {
    if pred.is_empty() || gt.is_empty() {
        return 0;
    }
    let (rows, cols, flip) = if pred.len() <= gt.len() { (pred, gt, false) } else { (gt, pred, true) };
    let mut data = Vec::with_capacity(rows.len() * cols.len());
    for r in rows {
        for c in cols {
            let v = if flip { iou(c, r) } else { iou(r, c) };
            data.push(if v > iou_thresh { 0.0 } else { 1.0 });
        }
    }
    let cost = CostMatrix::new(rows.len(), cols.len(), data).expect("rows <= cols");
    let res = hungarian(&cost);
    rows.len() - res.cost.round() as usize
}

/// Micro-averaged precision, recall and F1 of predicted box sets, where a
/// predicted box counts as correct when matched one-to-one to a ground-truth
/// box with IoU above `iou_thresh`.
pub fn set_prf(preds: &[Vec<AABox>], gts: &[Vec<AABox>], iou_thresh: f64) -> (f64, f64, f64) {
    assert_eq!(preds.len(), gts.len(), "prediction and ground-truth counts differ");
    let (mut tp, mut np, mut ng) = (0.0, 0.0, 0.0);
    for (p, g) in preds.iter().zip(gts) {
        tp += max_matches(p, g, iou_thresh) as f64;
        np += p.len() as f64;
        ng += g.len() as f64;
    }
    let (p, r) = (ratio(tp, np), ratio(tp, ng));
    (p, r, f1(p, r))
}

/// Fraction of instances whose predicted set matches the ground truth
/// exactly: same size and a perfect one-to-one matching with every IoU
/// above 0.5.
pub fn captcha_accuracy(preds: &[Vec<AABox>], gts: &[Vec<AABox>]) -> f64 {
    assert_eq!(preds.len(), gts.len(), "prediction and ground-truth counts differ");
    let correct = preds
        .iter()
        .zip(gts)
        .filter(|(p, g)| p.len() == g.len() && max_matches(p, g, 0.5) == g.len())
        .count();
    ratio(correct as f64, preds.len() as f64)
}
