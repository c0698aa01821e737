//! Run configuration: a flat `key = value` text format with typed
//! validation. Unknown or repeated keys are rejected. Every key is optional
//! and falls back to [`RunConfig::default`].
//!
//! ```text
//! # detection, orderless training
//! task = detect
//! scenario = 3
//! slots = 5
//! hidden = 256,256
//! lr = 0.01
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::card_dist::CardinalityKind;
use crate::error::{Error, Result};
use crate::inference::{InferenceConfig, InferenceMode};
use crate::network::{HeadLayout, TrainConfig};
use crate::setloss::LossConfig;

/// Which synthetic task a dataset (and a network head) belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Multi-label tagging: the set is a subset of `slots` label ids.
    Tagging,
    /// Box detection on a small canvas.
    Detect,
    /// Subset-sum CAPTCHA: boxes of the digits summing to a query digit.
    Captcha,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Tagging => "tagging",
            Task::Detect => "detect",
            Task::Captcha => "captcha",
        }
    }

    /// Whether set elements are boxes (as opposed to label ids).
    pub fn has_boxes(self) -> bool {
        !matches!(self, Task::Tagging)
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tagging" => Ok(Task::Tagging),
            "detect" | "detection" => Ok(Task::Detect),
            "captcha" => Ok(Task::Captcha),
            other => Err(format!("unknown task '{other}'")),
        }
    }
}

/// Training scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Targets are consumed in a fixed order (label id or storage order).
    FixedOrder,
    /// A permutation head is learned; the permutation sample is the joint
    /// minimizer of permutation and state losses.
    LearnedPermutation,
    /// Order does not matter; the permutation sample minimizes state loss.
    Orderless,
}

impl Scenario {
    pub fn number(self) -> u8 {
        match self {
            Scenario::FixedOrder => 1,
            Scenario::LearnedPermutation => 2,
            Scenario::Orderless => 3,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Scenario::FixedOrder),
            2 => Ok(Scenario::LearnedPermutation),
            3 => Ok(Scenario::Orderless),
            other => Err(Error::Config(format!("scenario must be 1, 2 or 3, got {other}"))),
        }
    }
}

impl Serialize for Scenario {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.number())
    }
}

impl<'de> Deserialize<'de> for Scenario {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let n = u8::deserialize(d)?;
        Scenario::from_number(n).map_err(serde::de::Error::custom)
    }
}

/// Floating-point precision used for network weights during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

/// Everything needed to build, train and evaluate one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub scenario: Scenario,
    /// Number of output slots `M`; for tagging, the number of labels.
    pub slots: usize,
    /// Number of object classes for box tasks (1 = class-agnostic).
    pub classes: usize,
    pub card: CardinalityKind,
    pub hidden: Vec<usize>,
    pub precision: Precision,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_decay: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub dropout: f64,
    pub shuffle_elements: bool,
    pub w_l1: f64,
    pub w_giou: f64,
    pub w_class: f64,
    pub lambda_noobj: f64,
    pub smooth_l1_delta: f64,
    /// Weight of the permutation-prior term when sampling scenario-2
    /// permutations (1 = exact joint minimizer).
    pub perm_prior_weight: f64,
    /// Train only the cardinality head (ablation).
    pub card_only: bool,
    /// Zero the query channel of CAPTCHA inputs (ablation).
    pub query_blind: bool,
    #[serde(rename = "U")]
    pub u: f64,
    pub mode: InferenceMode,
    /// Write a checkpoint every this many epochs (0 = only at the end).
    pub checkpoint_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let l = LossConfig::default();
        RunConfig {
            task: Task::Detect,
            scenario: Scenario::Orderless,
            slots: 5,
            classes: 1,
            card: CardinalityKind::Categorical,
            hidden: vec![256, 256],
            precision: Precision::F32,
            lr: t.lr,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            lr_decay: t.lr_decay,
            epochs: t.epochs,
            batch: t.batch_size,
            seed: t.seed,
            dropout: t.dropout,
            shuffle_elements: t.shuffle_elements,
            w_l1: l.l1_weight,
            w_giou: l.giou_weight,
            w_class: l.class_weight,
            lambda_noobj: l.noobj_weight,
            smooth_l1_delta: l.smooth_l1_delta,
            perm_prior_weight: 1.0,
            card_only: false,
            query_blind: false,
            u: 1.0,
            mode: InferenceMode::Exact,
            checkpoint_every: 0,
        }
    }
}

const KEYS: &[&str] = &[
    "task",
    "scenario",
    "slots",
    "classes",
    "card",
    "hidden",
    "precision",
    "lr",
    "momentum",
    "weight_decay",
    "lr_decay",
    "epochs",
    "batch",
    "seed",
    "dropout",
    "shuffle_elements",
    "w_l1",
    "w_giou",
    "w_class",
    "lambda_noobj",
    "smooth_l1_delta",
    "perm_prior_weight",
    "card_only",
    "query_blind",
    "U",
    "mode",
    "checkpoint_every",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| Error::Config(format!("bad value '{value}' for '{key}': {e}")))
}

impl RunConfig {
    /// Parses the text format, starting from defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key from its textual value. Used by the parser and for
    /// command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "task" => self.task = parse_value(key, value)?,
            "scenario" => self.scenario = Scenario::from_number(parse_value(key, value)?)?,
            "slots" => self.slots = parse_value(key, value)?,
            "classes" => self.classes = parse_value(key, value)?,
            "card" => self.card = parse_value(key, value)?,
            "hidden" => {
                self.hidden = if value.is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|v| parse_value(key, v.trim()))
                        .collect::<Result<_>>()?
                }
            }
            "precision" => {
                self.precision = match value {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    other => return Err(Error::Config(format!("bad precision '{other}'"))),
                }
            }
            "lr" => self.lr = parse_value(key, value)?,
            "momentum" => self.momentum = parse_value(key, value)?,
            "weight_decay" => self.weight_decay = parse_value(key, value)?,
            "lr_decay" => self.lr_decay = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch" => self.batch = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "dropout" => self.dropout = parse_value(key, value)?,
            "shuffle_elements" => self.shuffle_elements = parse_value(key, value)?,
            "w_l1" => self.w_l1 = parse_value(key, value)?,
            "w_giou" => self.w_giou = parse_value(key, value)?,
            "w_class" => self.w_class = parse_value(key, value)?,
            "lambda_noobj" => self.lambda_noobj = parse_value(key, value)?,
            "smooth_l1_delta" => self.smooth_l1_delta = parse_value(key, value)?,
            "perm_prior_weight" => self.perm_prior_weight = parse_value(key, value)?,
            "card_only" => self.card_only = parse_value(key, value)?,
            "query_blind" => self.query_blind = parse_value(key, value)?,
            "U" => self.u = parse_value(key, value)?,
            "mode" => self.mode = parse_value(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse_value(key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Canonical text form; `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let value = match *key {
                "task" => self.task.name().to_string(),
                "scenario" => self.scenario.number().to_string(),
                "slots" => self.slots.to_string(),
                "classes" => self.classes.to_string(),
                "card" => self.card.name().to_string(),
                "hidden" => self
                    .hidden
                    .iter()
                    .map(|h| h.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
                "precision" => match self.precision {
                    Precision::F32 => "f32".into(),
                    Precision::F64 => "f64".into(),
                },
                "lr" => format!("{:?}", self.lr),
                "momentum" => format!("{:?}", self.momentum),
                "weight_decay" => format!("{:?}", self.weight_decay),
                "lr_decay" => format!("{:?}", self.lr_decay),
                "epochs" => self.epochs.to_string(),
                "batch" => self.batch.to_string(),
                "seed" => self.seed.to_string(),
                "dropout" => format!("{:?}", self.dropout),
                "shuffle_elements" => self.shuffle_elements.to_string(),
                "w_l1" => format!("{:?}", self.w_l1),
                "w_giou" => format!("{:?}", self.w_giou),
                "w_class" => format!("{:?}", self.w_class),
                "lambda_noobj" => format!("{:?}", self.lambda_noobj),
                "smooth_l1_delta" => format!("{:?}", self.smooth_l1_delta),
                "perm_prior_weight" => format!("{:?}", self.perm_prior_weight),
                "card_only" => self.card_only.to_string(),
                "query_blind" => self.query_blind.to_string(),
                "U" => format!("{:?}", self.u),
                "mode" => self.mode.name().to_string(),
                "checkpoint_every" => self.checkpoint_every.to_string(),
                _ => unreachable!(),
            };
            s.push_str(key);
            s.push_str(" = ");
            s.push_str(&value);
            s.push('\n');
        }
        s
    }

    /// First 16 hex digits of the SHA-256 of the canonical text form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.serialize().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        if self.slots == 0 {
            return Err(Error::Config("slots must be positive".into()));
        }
        if self.classes == 0 {
            return Err(Error::Config("classes must be positive".into()));
        }
        if self.scenario == Scenario::LearnedPermutation
            && self.slots > crate::assignment::MAX_ENUM_SLOTS
        {
            return Err(Error::Config(format!(
                "scenario 2 enumerates slot permutations and supports at most {} slots",
                crate::assignment::MAX_ENUM_SLOTS
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if self.epochs == 0 && self.checkpoint_every > 0 {
            return Err(Error::Config("checkpoint_every needs epochs > 0".into()));
        }
        self.loss_config().validate()?;
        if !(self.perm_prior_weight >= 0.0) || !self.perm_prior_weight.is_finite() {
            return Err(Error::Config("perm_prior_weight must be finite and >= 0".into()));
        }
        self.inference_config().validate()?;
        if self.query_blind && self.task != Task::Captcha {
            return Err(Error::Config("query_blind only applies to the captcha task".into()));
        }
        Ok(())
    }

    pub fn head_layout(&self) -> HeadLayout {
        let state_dim = match self.task {
            // fixed-order tagging reads the label off the slot index; the
            // other scenarios need per-slot label logits
            Task::Tagging if self.scenario == Scenario::FixedOrder => 0,
            Task::Tagging => self.slots,
            Task::Detect | Task::Captcha => 4 + if self.classes > 1 { self.classes } else { 0 },
        };
        HeadLayout {
            card_kind: self.card,
            slots: self.slots,
            state_dim,
            perm_head: self.scenario == Scenario::LearnedPermutation,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            batch_size: self.batch,
            epochs: self.epochs,
            seed: self.seed,
            lr_decay: self.lr_decay,
            dropout: self.dropout,
            shuffle_elements: self.shuffle_elements,
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            l1_weight: self.w_l1,
            giou_weight: self.w_giou,
            class_weight: self.w_class,
            noobj_weight: self.lambda_noobj,
            smooth_l1_delta: self.smooth_l1_delta,
        }
    }

    pub fn inference_config(&self) -> InferenceConfig {
        InferenceConfig {
            u: self.u,
            mode: self.mode,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.serialize()).unwrap(), c);
    }

    #[test]
    fn parses_comments_and_lists() {
        let c = RunConfig::parse("# x\ntask = tagging\nslots=12 # labels\nhidden = 64, 32\nU = 2.36\n").unwrap();
        assert_eq!(c.task, Task::Tagging);
        assert_eq!(c.slots, 12);
        assert_eq!(c.hidden, vec![64, 32]);
        assert_eq!(c.u, 2.36);
    }

    #[test]
    fn rejects_unknown_duplicate_and_invalid() {
        assert!(RunConfig::parse("colour = red").is_err());
        assert!(RunConfig::parse("lr = 0.1\nlr = 0.2").is_err());
        assert!(RunConfig::parse("lr = -1").is_err());
        assert!(RunConfig::parse("U = 0").is_err());
        assert!(RunConfig::parse("scenario = 4").is_err());
        assert!(RunConfig::parse("scenario = 2\nslots = 9").is_err());
        assert!(RunConfig::parse("just words").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 7;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn json_round_trip() {
        let c = RunConfig::default();
        let j = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&j).unwrap(), c);
    }

    proptest! {
        #[test]
        fn text_round_trip(
            lr in 1e-5..1.0f64, seed in any::<u64>(), u in 0.01..100.0f64,
            slots in 1usize..8, hidden in proptest::collection::vec(1usize..512, 0..4),
            scenario in 1u8..=3, shuffle in any::<bool>(),
        ) {
            let mut c = RunConfig { lr, seed, u, slots, hidden, shuffle_elements: shuffle, ..RunConfig::default() };
            c.scenario = Scenario::from_number(scenario).unwrap();
            let back = RunConfig::parse(&c.serialize()).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
