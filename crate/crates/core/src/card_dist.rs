//! Cardinality distributions `p(m | x, w)` predicted by the network's
//! cardinality head, their negative log-likelihoods, and gradients with
//! respect to the raw (pre-activation) head outputs.
//!
//! | kind                 | raw params | distribution                                  |
//! |----------------------|------------|-----------------------------------------------|
//! | categorical          | `M + 1`    | `softmax(alpha)` over `0..=M`                 |
//! | Poisson              | 1          | rate `softplus(alpha0)`                       |
//! | negative binomial    | 2          | `r = softplus(alpha0)`, `p = sigmoid(alpha1)` |
//!
//! The negative binomial counts `m` "successes" of probability `p` before `r`
//! failures: `P(m) = C(m + r - 1, m) (1 - p)^r p^m`, mean `r p / (1 - p)`.
//!
//! Binomial or Dirichlet-categorical heads would slot in as further
//! [`CardinalityKind`] variants with their own `log_pmf` and gradient arms.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{contract, Result};
use crate::math::{ln_factorial, log_softmax, sigmoid, softplus, softplus_inv};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CardinalityKind {
    Categorical,
    Poisson,
    NegativeBinomial,
}

impl CardinalityKind {
    /// Number of raw head outputs for a set of at most `max_card` elements.
    pub fn param_count(self, max_card: usize) -> usize {
        match self {
            CardinalityKind::Categorical => max_card + 1,
            CardinalityKind::Poisson => 1,
            CardinalityKind::NegativeBinomial => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CardinalityKind::Categorical => "categorical",
            CardinalityKind::Poisson => "poisson",
            CardinalityKind::NegativeBinomial => "negative_binomial",
        }
    }
}

impl std::str::FromStr for CardinalityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "categorical" => Ok(CardinalityKind::Categorical),
            "poisson" => Ok(CardinalityKind::Poisson),
            "negative_binomial" | "nb" => Ok(CardinalityKind::NegativeBinomial),
            other => Err(format!("unknown cardinality kind '{other}'")),
        }
    }
}

/// A cardinality distribution over `0..=max_card` parameterized by raw head
/// outputs `alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct CardinalityHead {
    kind: CardinalityKind,
    alpha: Vec<f64>,
    max_card: usize,
}

impl CardinalityHead {
    pub fn new(kind: CardinalityKind, alpha: Vec<f64>, max_card: usize) -> Result<Self> {
        let want = kind.param_count(max_card);
        if alpha.len() != want {
            return Err(contract(format!(
                "{} head over 0..={max_card} needs {want} params, got {}",
                kind.name(),
                alpha.len()
            )));
        }
        if alpha.iter().any(|a| a.is_nan() || *a == f64::INFINITY) {
            return Err(contract("cardinality parameters must not be NaN or +inf"));
        }
        if kind != CardinalityKind::Categorical && alpha.iter().any(|a| !a.is_finite()) {
            return Err(contract("Poisson/NB parameters must be finite"));
        }
        Ok(CardinalityHead {
            kind,
            alpha,
            max_card,
        })
    }

    /// Categorical head whose softmax equals `probs` (zeros allowed; stored as
    /// `-inf` logits).
    pub fn categorical_from_probs(probs: &[f64]) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(contract("probabilities must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(contract("probabilities sum to zero"));
        }
        let logits = probs.iter().map(|p| (p / total).ln()).collect();
        Self::new(CardinalityKind::Categorical, logits, probs.len() - 1)
    }

    pub fn poisson_from_rate(rate: f64, max_card: usize) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(contract(format!("Poisson rate must be > 0, got {rate}")));
        }
        Self::new(CardinalityKind::Poisson, vec![softplus_inv(rate)], max_card)
    }

    pub fn negative_binomial_from(r: f64, p: f64, max_card: usize) -> Result<Self> {
        if !(r > 0.0) || !(p > 0.0 && p < 1.0) {
            return Err(contract(format!("invalid NB parameters r={r}, p={p}")));
        }
        let a1 = (p / (1.0 - p)).ln();
        Self::new(
            CardinalityKind::NegativeBinomial,
            vec![softplus_inv(r), a1],
            max_card,
        )
    }

    pub fn kind(&self) -> CardinalityKind {
        self.kind
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn max_card(&self) -> usize {
        self.max_card
    }

    /// Poisson rate; `None` for other kinds.
    pub fn rate(&self) -> Option<f64> {
        (self.kind == CardinalityKind::Poisson).then(|| softplus(self.alpha[0]))
    }

    /// NB `(r, p)`; `None` for other kinds.
    pub fn nb_params(&self) -> Option<(f64, f64)> {
        (self.kind == CardinalityKind::NegativeBinomial)
            .then(|| (softplus(self.alpha[0]), sigmoid(self.alpha[1])))
    }

    /// `ln p(m)`. Categorical heads return `-inf` beyond `max_card`.
    pub fn log_pmf(&self, m: usize) -> f64 {
        match self.kind {
            CardinalityKind::Categorical => {
                if m > self.max_card {
                    f64::NEG_INFINITY
                } else {
                    log_softmax(&self.alpha)[m]
                }
            }
            CardinalityKind::Poisson => {
                let lambda = softplus(self.alpha[0]);
                let mf = m as f64;
                mf * lambda.ln() - lambda - ln_factorial(m as u64)
            }
            CardinalityKind::NegativeBinomial => {
                let r = softplus(self.alpha[0]);
                let mf = m as f64;
                // ln p = -softplus(-a1), ln(1-p) = -softplus(a1)
                let ln_p = -softplus(-self.alpha[1]);
                let ln_q = -softplus(self.alpha[1]);
                ln_gamma(mf + r) - ln_gamma(r) - ln_factorial(m as u64) + r * ln_q + mf * ln_p
            }
        }
    }

    /// `ln p(m)` for every `m` in `0..=max_card`.
    pub fn log_probs(&self) -> Vec<f64> {
        match self.kind {
            CardinalityKind::Categorical => log_softmax(&self.alpha),
            _ => (0..=self.max_card).map(|m| self.log_pmf(m)).collect(),
        }
    }
}

/// Negative log-likelihood of cardinality `m` and its gradient with respect
/// to the raw parameters `alpha`.
pub fn card_nll(head: &CardinalityHead, m: usize) -> Result<(f64, Vec<f64>)> {
    match head.kind {
        CardinalityKind::Categorical => {
            if m > head.max_card {
                return Err(contract(format!(
                    "cardinality {m} exceeds categorical support 0..={}",
                    head.max_card
                )));
            }
            let lp = log_softmax(&head.alpha);
            let mut grad: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
            grad[m] -= 1.0;
            Ok((-lp[m], grad))
        }
        CardinalityKind::Poisson => {
            let a = head.alpha[0];
            let lambda = softplus(a);
            let mf = m as f64;
            let nll = lambda - mf * lambda.ln() + ln_factorial(m as u64);
            let d_lambda = 1.0 - mf / lambda;
            Ok((nll, vec![d_lambda * sigmoid(a)]))
        }
        CardinalityKind::NegativeBinomial => {
            let (a0, a1) = (head.alpha[0], head.alpha[1]);
            let r = softplus(a0);
            let p = sigmoid(a1);
            let mf = m as f64;
            let nll = -head.log_pmf(m);
            // d nll / d r = psi(r) - psi(m + r) - ln(1 - p)
            let d_r = digamma(r) - digamma(mf + r) + softplus(a1);
            // d nll / d a1 = r p - m (1 - p)
            let d_a1 = r * p - mf * (1.0 - p);
            Ok((nll, vec![d_r * sigmoid(a0), d_a1]))
        }
    }
}

/// Most probable cardinality. Ties resolve toward the smaller value; Poisson
/// and NB modes are computed in closed form and capped at `max_card`.
pub fn card_map(head: &CardinalityHead) -> usize {
    match head.kind {
        CardinalityKind::Categorical => {
            let lp = log_softmax(&head.alpha);
            let mut best = 0;
            for (m, &v) in lp.iter().enumerate() {
                if v > lp[best] {
                    best = m;
                }
            }
            best
        }
        CardinalityKind::Poisson => {
            let lambda = softplus(head.alpha[0]);
            integer_mode(lambda).min(head.max_card)
        }
        CardinalityKind::NegativeBinomial => {
            let (r, p) = head.nb_params().expect("NB head");
            if r <= 1.0 {
                0
            } else {
                integer_mode((r - 1.0) * p / (1.0 - p)).min(head.max_card)
            }
        }
    }
}

/// Mode `floor(t)` of a distribution whose pmf ratio crosses 1 at `t`; when
/// `t` is a positive integer, `t - 1` and `t` tie and the smaller wins.
fn integer_mode(t: f64) -> usize {
    if !(t > 0.0) {
        return 0;
    }
    let f = t.floor();
    if f == t {
        (f as usize).saturating_sub(1)
    } else {
        f as usize
    }
}
