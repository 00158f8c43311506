use crate::{NnError, Result};

/// Elementwise floor applied to probability vectors before KL, so one-hot
/// targets never produce infinite divergence.
pub const KL_FLOOR: f64 = 1e-6;

const NORM_TOL: f64 = 1e-9;

/// Softmax with max-shift; invariant under adding a constant to all logits.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(NnError::DimMismatch {
            context: "softmax",
            expected: 1,
            actual: 0,
        });
    }
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(NnError::NonFinite("softmax logits"));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Clamps every entry to at least `floor` and renormalizes to sum 1.
pub fn floor_distribution(p: &[f64], floor: f64) -> Vec<f64> {
    let clamped: Vec<f64> = p.iter().map(|&v| v.max(floor)).collect();
    let sum: f64 = clamped.iter().sum();
    clamped.into_iter().map(|v| v / sum).collect()
}

/// `D_KL(p || q) = sum_i p_i ln(p_i / q_i)` plus the gradient w.r.t. `q`.
///
/// Both inputs must be normalized; `q` must already be floored (no entry
/// may sit below [`KL_FLOOR`], up to renormalization slack).
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<(f64, Vec<f64>)> {
    if p.len() != q.len() {
        return Err(NnError::DimMismatch {
            context: "kl_divergence",
            expected: p.len(),
            actual: q.len(),
        });
    }
    for (name, dist) in [("p", p), ("q", q)] {
        if !dist.iter().all(|v| v.is_finite()) {
            return Err(NnError::NonFinite(if name == "p" { "kl p" } else { "kl q" }));
        }
        let sum: f64 = dist.iter().sum();
        if (sum - 1.0).abs() > NORM_TOL {
            return Err(NnError::NotNormalized(sum));
        }
    }
    // Renormalizing after a floor can pull entries slightly below the floor
    // itself, hence the 0.5 slack.
    let min_q = 0.5 * KL_FLOOR;
    if let Some((i, &v)) = q.iter().enumerate().find(|(_, &v)| v < min_q) {
        return Err(NnError::BelowFloor { index: i, value: v });
    }
    let mut value = 0.0;
    let mut grad = vec![0.0; q.len()];
    for i in 0..p.len() {
        if p[i] > 0.0 {
            value += p[i] * (p[i] / q[i]).ln();
            grad[i] = -p[i] / q[i];
        }
    }
    // Tiny negative values are floating-point noise on p == q.
    if value < 0.0 && value > -1e-12 {
        value = 0.0;
    }
    Ok((value, grad))
}

/// Floors the flagged entries of a probability vector and renormalizes the
/// remaining mass over the unflagged ones, preserving their ratios.
///
/// Panics if every entry is flagged; callers guarantee at least one safe
/// action exists.
pub fn redistribute_to_unflagged(q: &[f64], flagged: &[bool], floor: f64) -> Vec<f64> {
    assert_eq!(q.len(), flagged.len());
    let k = flagged.iter().filter(|&&b| b).count();
    assert!(k < q.len(), "at least one entry must stay unflagged");
    let safe_mass: f64 = q.iter().zip(flagged).filter(|(_, &f)| !f).map(|(v, _)| v).sum();
    let budget = 1.0 - k as f64 * floor;
    q.iter()
        .zip(flagged)
        .map(|(&v, &f)| if f { floor } else { v * budget / safe_mass })
        .collect()
}

/// Importance-weighted mean squared error and its gradient w.r.t. `pred`:
/// `L = (1/n) sum_i w_i (pred_i - target_i)^2`.
pub fn mse_weighted(pred: &[f64], target: &[f64], weights: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() || pred.len() != weights.len() {
        return Err(NnError::DimMismatch {
            context: "mse_weighted",
            expected: pred.len(),
            actual: target.len().min(weights.len()),
        });
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for i in 0..pred.len() {
        let d = pred[i] - target[i];
        loss += weights[i] * d * d;
        grad[i] = 2.0 * weights[i] * d / n;
    }
    Ok((loss / n, grad))
}
