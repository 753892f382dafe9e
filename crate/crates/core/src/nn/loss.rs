use crate::error::{Error, Result};

/// Lower clamp on the true-class probability inside cross-entropy.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// `-ln max(p_label, PROBABILITY_FLOOR)` computed from logits.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let nll = log_sum_exp(logits) - logits[label];
    nll.min(-PROBABILITY_FLOOR.ln())
}

pub(crate) fn is_clamped(loss: f64) -> bool {
    loss >= -PROBABILITY_FLOOR.ln()
}

pub fn mean_loss(losses: &[f64]) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::Input("loss over an empty batch".into()));
    }
    check_finite(losses)?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// `(1/alpha) ln[(1/n) sum_i exp(alpha l_i)]`, evaluated around the largest term.
pub fn convexified_loss(losses: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Input(format!("risk factor alpha must be > 0, got {alpha}")));
    }
    if losses.is_empty() {
        return Err(Error::Input("loss over an empty batch".into()));
    }
    check_finite(losses)?;
    let max = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // ln(mean(exp(a(l - max)))) via expm1/ln_1p keeps precision as alpha -> 0
    let mean_m1 = losses
        .iter()
        .map(|l| (alpha * (l - max)).exp_m1())
        .sum::<f64>()
        / losses.len() as f64;
    Ok(max + mean_m1.ln_1p() / alpha)
}

/// Weights `softmax(alpha * l)` that turn per-sample gradients into the
/// gradient of [`convexified_loss`].
pub(crate) fn convexified_weights(losses: &[f64], alpha: f64) -> Vec<f64> {
    let scaled: Vec<f64> = losses.iter().map(|l| alpha * l).collect();
    softmax(&scaled)
}

fn check_finite(losses: &[f64]) -> Result<()> {
    if let Some(i) = losses.iter().position(|l| !l.is_finite()) {
        return Err(Error::Numeric(format!(
            "sample loss {i} is not finite ({})",
            losses[i]
        )));
    }
    Ok(())
}
