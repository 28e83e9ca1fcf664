//! Step-wise gated contrastive logit fusion: rectified evidence, candidate
//! selection from both views, audio reliance, normalized top-K entropy, the
//! gate, and the sparse logit update.

use crate::error::{Result, TcdError};
use crate::vocab::TokenId;

/// Record of one decoding step's fusion decision.
#[derive(Debug, Clone, PartialEq)]
pub struct GateTrace {
    pub step_index: usize,
    pub r_t: f64,
    pub entropy_hat: f64,
    pub gate: f64,
    /// Candidate token ids, ascending.
    pub candidate_ids: Vec<TokenId>,
    /// Nonzero logit deltas actually applied, keyed by token id, ascending.
    pub applied_bias: Vec<(TokenId, f64)>,
    pub chosen_token: TokenId,
}

/// Elementwise max(z - z_ref, 0).
pub fn rectified_diff(z: &[f64], z_ref: &[f64]) -> Result<Vec<f64>> {
    if z.len() != z_ref.len() {
        return Err(TcdError::invalid(format!(
            "logit length mismatch: {} vs {}",
            z.len(),
            z_ref.len()
        )));
    }
    Ok(z.iter().zip(z_ref).map(|(a, b)| (a - b).max(0.0)).collect())
}

/// Indices of the k largest values; ties broken by lower index.
fn top_k_ids(z: &[f64], k: usize) -> Vec<TokenId> {
    let mut ids: Vec<usize> = (0..z.len()).collect();
    ids.sort_by(|&a, &b| z[b].total_cmp(&z[a]).then(a.cmp(&b)));
    ids.truncate(k);
    ids.into_iter().map(|i| i as TokenId).collect()
}

/// Union of the top-k_orig ids of `z` and top-k_blur ids of `z_ref`,
/// returned sorted ascending.
pub fn candidate_set(z: &[f64], z_ref: &[f64], k_orig: usize, k_blur: usize) -> Result<Vec<TokenId>> {
    if z.len() != z_ref.len() {
        return Err(TcdError::invalid(format!(
            "logit length mismatch: {} vs {}",
            z.len(),
            z_ref.len()
        )));
    }
    if k_orig == 0 || k_blur == 0 {
        return Err(TcdError::invalid("candidate counts must be >= 1"));
    }
    if k_orig > z.len() || k_blur > z.len() {
        return Err(TcdError::invalid(format!(
            "candidate counts ({k_orig}, {k_blur}) exceed vocabulary {}",
            z.len()
        )));
    }
    let mut omega = top_k_ids(z, k_orig);
    omega.extend(top_k_ids(z_ref, k_blur));
    omega.sort_unstable();
    omega.dedup();
    Ok(omega)
}

/// Mean audio-attention ratio over the deepest `l_attn` decoder layers
/// (clamped to the available count).
pub fn audio_reliance(ratios_per_layer: &[f64], l_attn: usize) -> Result<f64> {
    if ratios_per_layer.is_empty() {
        return Err(TcdError::invalid("need at least one decoder layer ratio"));
    }
    if l_attn == 0 {
        return Err(TcdError::invalid("l_attn must be >= 1"));
    }
    let take = l_attn.min(ratios_per_layer.len());
    let tail = &ratios_per_layer[ratios_per_layer.len() - take..];
    Ok(tail.iter().sum::<f64>() / take as f64)
}

/// Shannon entropy of the renormalized top-k softmax probabilities, divided
/// by ln(k) so it lands in [0, 1].
pub fn topk_entropy(z: &[f64], k_ent: usize) -> Result<f64> {
    if k_ent < 2 {
        return Err(TcdError::invalid("k_ent must be >= 2"));
    }
    if k_ent > z.len() {
        return Err(TcdError::invalid(format!(
            "k_ent {k_ent} exceeds vocabulary {}",
            z.len()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(TcdError::invalid("logits must be finite"));
    }
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut top: Vec<f64> = top_k_ids(z, k_ent)
        .into_iter()
        .map(|i| exps[i as usize] / total)
        .collect();
    let mass: f64 = top.iter().sum();
    for p in &mut top {
        *p /= mass;
    }
    let entropy: f64 = top
        .iter()
        .map(|p| if *p > 0.0 { -p * p.ln() } else { 0.0 })
        .sum();
    Ok((entropy / (k_ent as f64).ln()).clamp(0.0, 1.0))
}

/// Step gate: min(gamma * r * entropy^alpha, 1). The convention alpha = 0
/// disables the entropy factor entirely (0^0 = 1).
pub fn gate(r_t: f64, entropy_hat: f64, gamma_gate: f64, alpha: f64) -> Result<f64> {
    if r_t < 0.0 || entropy_hat < 0.0 || gamma_gate < 0.0 || alpha < 0.0 {
        return Err(TcdError::invalid("gate inputs must be non-negative"));
    }
    let entropy_factor = if alpha == 0.0 {
        1.0
    } else {
        entropy_hat.powf(alpha)
    };
    Ok((gamma_gate * r_t * entropy_factor).min(1.0))
}

fn sparse_update(
    z: &[f64],
    d: &[f64],
    omega: &[TokenId],
    lambda: f64,
    g_t: f64,
) -> Result<Vec<f64>> {
    if z.len() != d.len() {
        return Err(TcdError::invalid(format!(
            "logit length mismatch: {} vs {}",
            z.len(),
            d.len()
        )));
    }
    let mut out = z.to_vec();
    for &j in omega {
        let j = j as usize;
        if j >= out.len() {
            return Err(TcdError::invalid(format!(
                "candidate id {j} outside vocabulary {}",
                out.len()
            )));
        }
        out[j] += lambda * g_t * d[j];
    }
    Ok(out)
}

/// Sparse rectified update: z'(j) = z(j) + lambda * g * d_plus(j) on the
/// candidate set, identity elsewhere. Expects `d_plus` non-negative.
pub fn apply_update(
    z: &[f64],
    d_plus: &[f64],
    omega: &[TokenId],
    lambda: f64,
    g_t: f64,
) -> Result<Vec<f64>> {
    sparse_update(z, d_plus, omega, lambda, g_t)
}

/// Sparse signed update: as [`apply_update`] but the evidence may push
/// candidate logits in either direction.
pub fn signed_update(
    z: &[f64],
    d: &[f64],
    omega: &[TokenId],
    lambda: f64,
    g_t: f64,
) -> Result<Vec<f64>> {
    sparse_update(z, d, omega, lambda, g_t)
}

/// Greedy choice with deterministic tie-breaking: highest logit, lowest id.
pub fn argmax(z: &[f64]) -> TokenId {
    let mut best = 0usize;
    for (i, v) in z.iter().enumerate().skip(1) {
        if v.total_cmp(&z[best]) == std::cmp::Ordering::Greater {
            best = i;
        }
    }
    best as TokenId
}
