//! Numerically stable scalar helpers shared by the loss modules.

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
#[inline]
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(sigmoid(x))`, finite for every finite `x`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// Log-softmax of a vector. Entries equal to `-inf` stay `-inf`.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return vec![f64::NAN; logits.len()];
    }
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// Binary cross-entropy of a logit against a 0/1 target, with its derivative
/// with respect to the logit.
#[inline]
pub fn bce_with_logit(logit: f64, target: bool) -> (f64, f64) {
    if target {
        (softplus(-logit), sigmoid(logit) - 1.0)
    } else {
        (softplus(logit), sigmoid(logit))
    }
}

/// Cross-entropy of `logits` at class `target`, with gradient `softmax - onehot`.
pub fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let lp = log_softmax(logits);
    let mut grad: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
    grad[target] -= 1.0;
    (-lp[target], grad)
}

/// `ln(n!)` for small and large `n` alike.
pub fn ln_factorial(n: u64) -> f64 {
    statrs::function::gamma::ln_gamma(n as f64 + 1.0)
}
