//! Per-example stability of encoder trajectories: layer magnitude/flux
//! statistics, attention-weighted pooling, and the mapping from the pooled
//! score to the blur window and update scale.

use crate::config::DecodeConfig;
use crate::error::{Result, TcdError};
use crate::model::EncoderStates;

/// Statistics for one encoder layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStability {
    pub magnitude: f64,
    pub flux: f64,
    pub stability: f64,
    pub weight: f64,
}

/// Everything derived from one example's encoder states: per-layer stats and
/// softmax weights, the pooled score, and the resulting window and scale.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub per_layer: Vec<LayerStability>,
    pub pooled: f64,
    pub window_ms: f64,
    pub lambda: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Mean frame magnitude and mean consecutive-frame flux of one layer.
pub fn layer_stats(layer_states: &[Vec<f64>]) -> Result<(f64, f64)> {
    if layer_states.len() < 2 {
        return Err(TcdError::invalid(
            "layer statistics need at least 2 frames (flux is undefined on 1)",
        ));
    }
    let n = layer_states.len();
    let magnitude = layer_states.iter().map(|f| norm(f)).sum::<f64>() / n as f64;
    let flux = layer_states
        .windows(2)
        .map(|pair| {
            let diff: Vec<f64> = pair[1].iter().zip(&pair[0]).map(|(a, b)| a - b).collect();
            norm(&diff)
        })
        .sum::<f64>()
        / (n - 1) as f64;
    Ok((magnitude, flux))
}

/// Self-normalized stability of one layer: magnitude over magnitude plus
/// flux, damped by epsilon.
pub fn layer_stability(magnitude: f64, flux: f64, epsilon: f64) -> Result<f64> {
    if magnitude < 0.0 || flux < 0.0 {
        return Err(TcdError::invalid(
            "magnitude and flux must be non-negative",
        ));
    }
    if !(epsilon > 0.0) {
        return Err(TcdError::invalid("epsilon must be positive"));
    }
    Ok(magnitude / (magnitude + flux + epsilon))
}

/// Pool per-layer stabilities with softmax(tau * r) weights. Returns the
/// pooled score and the weights.
pub fn pool_stability(s_layers: &[f64], r_layers: &[f64], tau: f64) -> Result<(f64, Vec<f64>)> {
    if s_layers.is_empty() || s_layers.len() != r_layers.len() {
        return Err(TcdError::invalid(format!(
            "need equal non-empty lists, got {} stabilities and {} ratios",
            s_layers.len(),
            r_layers.len()
        )));
    }
    if !tau.is_finite() {
        return Err(TcdError::invalid("tau must be finite"));
    }
    let scaled: Vec<f64> = r_layers.iter().map(|r| tau * r).collect();
    let m = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    let weights: Vec<f64> = exps.iter().map(|e| e / total).collect();
    let pooled = weights.iter().zip(s_layers).map(|(w, s)| w * s).sum();
    Ok((pooled, weights))
}

fn check_unit(s: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&s) {
        return Err(TcdError::invalid(format!(
            "stability score must lie in [0, 1], got {s}"
        )));
    }
    Ok(())
}

/// Linear map from the pooled stability to the blur window, clamped against
/// floating-point drift.
pub fn map_window(s: f64, w_min_ms: f64, w_max_ms: f64) -> Result<f64> {
    check_unit(s)?;
    if w_min_ms > w_max_ms {
        return Err(TcdError::invalid("window bounds out of order"));
    }
    Ok((w_min_ms + (w_max_ms - w_min_ms) * s).clamp(w_min_ms, w_max_ms))
}

/// Linear map from the pooled stability to the update scale, clamped.
pub fn map_scale(s: f64, lambda_min: f64, lambda_max: f64) -> Result<f64> {
    check_unit(s)?;
    if lambda_min > lambda_max {
        return Err(TcdError::invalid("scale bounds out of order"));
    }
    Ok((lambda_min + (lambda_max - lambda_min) * s).clamp(lambda_min, lambda_max))
}

/// Pair each encoder layer with a decoder layer at matching normalized depth
/// (identity when counts agree; a single encoder layer maps to the deepest
/// decoder layer).
fn matched_ratio(enc_index: usize, enc_layers: usize, decoder_ratios: &[f64]) -> f64 {
    let last = decoder_ratios.len() - 1;
    if enc_layers == 1 {
        return decoder_ratios[last];
    }
    let depth = enc_index as f64 / (enc_layers - 1) as f64;
    let j = (depth * last as f64).round() as usize;
    decoder_ratios[j.min(last)]
}

/// Full per-example computation: layer stats over the original-audio encoder
/// states, attention-weighted pooling, and the window/scale mapping. Done
/// once per example, before any generation.
pub fn build_report(
    h: &EncoderStates,
    decoder_ratios: &[f64],
    config: &DecodeConfig,
) -> Result<StabilityReport> {
    if decoder_ratios.is_empty() {
        return Err(TcdError::invalid("need at least one decoder ratio"));
    }
    let enc_layers = h.num_layers();
    let mut stabilities = Vec::with_capacity(enc_layers);
    let mut ratios = Vec::with_capacity(enc_layers);
    let mut stats = Vec::with_capacity(enc_layers);
    for (i, layer) in h.layers().iter().enumerate() {
        let (m, f) = layer_stats(layer)?;
        stabilities.push(layer_stability(m, f, config.epsilon)?);
        ratios.push(matched_ratio(i, enc_layers, decoder_ratios));
        stats.push((m, f));
    }
    let (pooled, weights) = pool_stability(&stabilities, &ratios, config.tau)?;
    let per_layer = stats
        .into_iter()
        .zip(stabilities)
        .zip(weights)
        .map(|(((magnitude, flux), stability), weight)| LayerStability {
            magnitude,
            flux,
            stability,
            weight,
        })
        .collect();
    Ok(StabilityReport {
        per_layer,
        pooled,
        window_ms: map_window(pooled, config.w_min_ms, config.w_max_ms)?,
        lambda: map_scale(pooled, config.lambda_min, config.lambda_max)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::blur_states;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_layer(seed: u64, frames: usize, dim: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..frames)
            .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect()
    }

    #[test]
    fn constant_frames_have_zero_flux() {
        let layer = vec![vec![3.0, 4.0]; 6];
        let (m, f) = layer_stats(&layer).unwrap();
        assert!((m - 5.0).abs() < 1e-12);
        assert_eq!(f, 0.0);
    }

    #[test]
    fn alternating_frames_double_the_flux() {
        let v = vec![1.0, 2.0, 2.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let layer = vec![v.clone(), neg.clone(), v.clone(), neg];
        let (m, f) = layer_stats(&layer).unwrap();
        let vn = 3.0; // |(1,2,2)|
        assert!((m - vn).abs() < 1e-12);
        assert!((f - 2.0 * vn).abs() < 1e-12);
    }

    #[test]
    fn layer_stats_match_loop_oracle() {
        for seed in 0..10 {
            let layer = random_layer(seed, 12, 5);
            let (m, f) = layer_stats(&layer).unwrap();
            let mut m_acc = 0.0;
            for frame in &layer {
                let mut sq = 0.0;
                for v in frame {
                    sq += v * v;
                }
                m_acc += sq.sqrt();
            }
            let mut f_acc = 0.0;
            for i in 1..layer.len() {
                let mut sq = 0.0;
                for d in 0..layer[i].len() {
                    let diff = layer[i][d] - layer[i - 1][d];
                    sq += diff * diff;
                }
                f_acc += sq.sqrt();
            }
            assert!((m - m_acc / 12.0).abs() < 1e-9);
            assert!((f - f_acc / 11.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_frame_is_rejected() {
        assert!(layer_stats(&[vec![1.0]]).is_err());
    }

    #[test]
    fn stability_direct_values() {
        let s = layer_stability(1.0, 1.0, 1e-6).unwrap();
        assert!((s - 1.0 / 2.000001).abs() < 1e-15);
        assert_eq!(layer_stability(0.0, 3.0, 1e-6).unwrap(), 0.0);
        let near_one = layer_stability(1e6, 0.0, 1e-6).unwrap();
        assert!(near_one > 1.0 - 1e-11 && near_one < 1.0);
        assert!(layer_stability(-1.0, 0.0, 1e-6).is_err());
        assert!(layer_stability(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn equal_ratios_pool_to_plain_mean() {
        let s = [0.2, 0.6, 0.7];
        let (pooled, w) = pool_stability(&s, &[0.5, 0.5, 0.5], 4.0).unwrap();
        for wi in &w {
            assert!((wi - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!((pooled - 0.5).abs() < 1e-12);
        // tau = 0 is uniform regardless of ratios
        let (pooled0, w0) = pool_stability(&s, &[0.1, 0.9, 0.3], 0.0).unwrap();
        for wi in &w0 {
            assert!((wi - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!((pooled0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pooling_weights_match_softmax_oracle() {
        let (pooled, w) = pool_stability(&[0.4, 0.8], &[0.1, 0.9], 4.0).unwrap();
        // softmax(0.4, 3.6) by direct evaluation
        let e0 = (0.4f64).exp();
        let e1 = (3.6f64).exp();
        let w0 = e0 / (e0 + e1);
        let w1 = e1 / (e0 + e1);
        assert!((w[0] - w0).abs() < 1e-12);
        assert!((w[1] - w1).abs() < 1e-12);
        assert!((pooled - (w0 * 0.4 + w1 * 0.8)).abs() < 1e-12);
        let sum: f64 = w.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pooled_score_is_a_convex_combination() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let n = rng.gen_range(1..6);
            let s: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let r: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let tau = rng.gen_range(-8.0..8.0);
            let (pooled, w) = pool_stability(&s, &r, tau).unwrap();
            let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(pooled >= lo - 1e-12 && pooled <= hi + 1e-12);
            let sum: f64 = w.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn window_and_scale_hit_their_bounds() {
        assert_eq!(map_window(0.0, 8.0, 30.0).unwrap(), 8.0);
        assert_eq!(map_window(1.0, 8.0, 30.0).unwrap(), 30.0);
        assert!((map_window(0.5, 8.0, 30.0).unwrap() - 19.0).abs() < 1e-12);
        assert_eq!(map_scale(0.0, 0.3, 1.5).unwrap(), 0.3);
        assert_eq!(map_scale(1.0, 0.3, 1.5).unwrap(), 1.5);
        assert!((map_scale(0.25, 0.3, 1.5).unwrap() - 0.6).abs() < 1e-12);
        assert!(map_window(1.5, 8.0, 30.0).is_err());
        assert!(map_scale(-0.1, 0.3, 1.5).is_err());
    }

    #[test]
    fn rescaling_a_layer_leaves_stability_invariant() {
        for seed in 0..10 {
            let layer = random_layer(seed, 10, 4);
            let (m, f) = layer_stats(&layer).unwrap();
            // lift magnitude to >= 1 so the epsilon term is negligible
            let lift = 2.0 / m.max(1e-3);
            let lifted: Vec<Vec<f64>> = layer
                .iter()
                .map(|fr| fr.iter().map(|v| v * lift).collect())
                .collect();
            let (m1, f1) = layer_stats(&lifted).unwrap();
            let scaled: Vec<Vec<f64>> = lifted
                .iter()
                .map(|fr| fr.iter().map(|v| v * 7.5).collect())
                .collect();
            let (m2, f2) = layer_stats(&scaled).unwrap();
            assert!((m2 - 7.5 * m1).abs() < 1e-9 * m2.abs().max(1.0));
            assert!((f2 - 7.5 * f1).abs() < 1e-9 * f2.abs().max(1.0));
            let s1 = layer_stability(m1, f1, 1e-6).unwrap();
            let s2 = layer_stability(m2, f2, 1e-6).unwrap();
            assert!((s1 - s2).abs() < 1e-6, "seed {seed}: {s1} vs {s2}");
            let _ = (m, f);
        }
    }

    #[test]
    fn blurring_states_never_lowers_stability() {
        for seed in 0..20 {
            let layers = vec![random_layer(seed, 16, 4), random_layer(seed + 100, 16, 4)];
            let h = EncoderStates::new(layers, 50.0).unwrap();
            let blurred = blur_states(&h, 5).unwrap();
            for (orig, blur) in h.layers().iter().zip(blurred.layers()) {
                let (_, f_orig) = layer_stats(orig).unwrap();
                let (m_blur, f_blur) = layer_stats(blur).unwrap();
                assert!(
                    f_blur <= f_orig + 1e-9,
                    "seed {seed}: flux grew {f_orig} -> {f_blur}"
                );
                let (m_orig, _) = layer_stats(orig).unwrap();
                let s_orig = layer_stability(m_orig, f_orig, 1e-6).unwrap();
                let s_blur = layer_stability(m_blur, f_blur, 1e-6).unwrap();
                // flux shrinks faster than magnitude under smoothing
                assert!(s_blur >= s_orig - 1e-2, "seed {seed}: {s_orig} -> {s_blur}");
            }
        }
    }

    #[test]
    fn report_uses_depth_matched_decoder_ratios() {
        let layers = vec![random_layer(1, 8, 3), random_layer(2, 8, 3)];
        let h = EncoderStates::new(layers, 50.0).unwrap();
        let config = DecodeConfig::default();
        // 4 decoder layers: encoder layer 0 pairs with ratio[0], layer 1 with ratio[3]
        let report = build_report(&h, &[0.1, 0.4, 0.6, 0.9], &config).unwrap();
        let s: Vec<f64> = report.per_layer.iter().map(|l| l.stability).collect();
        let (expect_pooled, expect_w) = pool_stability(&s, &[0.1, 0.9], config.tau).unwrap();
        assert!((report.pooled - expect_pooled).abs() < 1e-12);
        for (l, w) in report.per_layer.iter().zip(&expect_w) {
            assert!((l.weight - w).abs() < 1e-12);
        }
        assert!(report.window_ms >= 8.0 && report.window_ms <= 30.0);
        assert!(report.lambda >= 0.3 && report.lambda <= 1.5);
        let wsum: f64 = report.per_layer.iter().map(|l| l.weight).sum();
        assert!((wsum - 1.0).abs() < 1e-9);
    }
}
