//! Randomized invariants over the signal, stability, and fusion primitives.

use proptest::prelude::*;
use tcd_core::fusion::{
    apply_update, candidate_set, gate, rectified_diff, signed_update, topk_entropy,
};
use tcd_core::signal::{
    blur_waveform, hann_kernel, noise_reference, Waveform,
};
use tcd_core::stability::{layer_stability, map_scale, map_window, pool_stability};

fn finite_logits(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-30.0f64..30.0, 2..max_len)
}

proptest! {
    #[test]
    fn hann_kernel_is_a_normalized_symmetric_lowpass(
        window_ms in 0.05f64..60.0,
        sample_rate in prop::sample::select(vec![8_000u32, 16_000, 22_050, 44_100]),
    ) {
        let k = hann_kernel(window_ms, sample_rate).unwrap();
        let w = k.weights();
        prop_assert_eq!(w.len() % 2, 1);
        prop_assert!(w.iter().all(|&t| t >= 0.0));
        let sum: f64 = w.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        for i in 0..w.len() / 2 {
            prop_assert!((w[i] - w[w.len() - 1 - i]).abs() <= 1e-12);
        }
        // Mass concentrates at the center tap.
        prop_assert!(w[k.center_index()] >= w[0]);
    }

    #[test]
    fn blurring_a_constant_signal_is_the_identity(
        level in -0.9f64..0.9,
        n in 8usize..400,
        window_ms in 0.1f64..20.0,
    ) {
        prop_assume!(level.abs() > 1e-3);
        let x = Waveform::new(vec![level; n], 16_000).unwrap();
        let y = blur_waveform(&x, window_ms).unwrap();
        prop_assert_eq!(y.len(), n);
        for (a, b) in x.samples().iter().zip(y.samples()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn rectified_evidence_is_nonnegative_and_zero_where_reference_wins(
        z in finite_logits(64),
        shift in -4.0f64..4.0,
    ) {
        let z_ref: Vec<f64> = z.iter().map(|v| v + shift).collect();
        let d = rectified_diff(&z, &z_ref).unwrap();
        prop_assert_eq!(d.len(), z.len());
        for (j, &dj) in d.iter().enumerate() {
            prop_assert!(dj >= 0.0);
            if z[j] <= z_ref[j] {
                prop_assert_eq!(dj, 0.0);
            } else {
                prop_assert!((dj - (z[j] - z_ref[j])).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn candidate_set_is_sorted_deduplicated_and_bounded(
        z in finite_logits(64),
        k_orig in 1usize..20,
        k_blur in 1usize..12,
        seed_shift in -3.0f64..3.0,
    ) {
        let z_ref: Vec<f64> = z.iter().rev().map(|v| v + seed_shift).collect();
        let k_orig = k_orig.min(z.len());
        let k_blur = k_blur.min(z.len());
        let omega = candidate_set(&z, &z_ref, k_orig, k_blur).unwrap();
        prop_assert!(!omega.is_empty());
        prop_assert!(omega.len() <= k_orig + k_blur);
        prop_assert!(omega.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(omega.iter().all(|&id| (id as usize) < z.len()));
        // The greedy choice of either branch always survives into the set.
        let top_of = |v: &[f64]| {
            let mut best = 0usize;
            for (i, x) in v.iter().enumerate() {
                if x.total_cmp(&v[best]) == std::cmp::Ordering::Greater {
                    best = i;
                }
            }
            best as u32
        };
        prop_assert!(omega.contains(&top_of(&z)));
        prop_assert!(omega.contains(&top_of(&z_ref)));
    }

    #[test]
    fn entropy_stays_normalized_and_shift_invariant(
        z in finite_logits(64),
        k in 2usize..10,
        shift in -50.0f64..50.0,
    ) {
        let k = k.min(z.len());
        let h = topk_entropy(&z, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&h));
        let shifted: Vec<f64> = z.iter().map(|v| v + shift).collect();
        let h2 = topk_entropy(&shifted, k).unwrap();
        prop_assert!((h - h2).abs() <= 1e-9);
    }

    #[test]
    fn gate_is_clamped_and_monotone_in_reliance(
        r_lo in 0.0f64..1.0,
        r_hi in 0.0f64..1.0,
        entropy in 0.0f64..1.0,
        gamma in 0.0f64..6.0,
        alpha in 0.0f64..2.0,
    ) {
        let (r_lo, r_hi) = if r_lo <= r_hi { (r_lo, r_hi) } else { (r_hi, r_lo) };
        let g_lo = gate(r_lo, entropy, gamma, alpha).unwrap();
        let g_hi = gate(r_hi, entropy, gamma, alpha).unwrap();
        prop_assert!((0.0..=1.0).contains(&g_lo));
        prop_assert!((0.0..=1.0).contains(&g_hi));
        prop_assert!(g_lo <= g_hi + 1e-12);
    }

    #[test]
    fn updates_touch_only_the_candidate_coordinates(
        z in finite_logits(64),
        lambda in 0.0f64..2.0,
        g in 0.0f64..1.0,
        picks in prop::collection::btree_set(0usize..64, 1..24),
    ) {
        let omega: Vec<u32> = picks
            .into_iter()
            .filter(|&j| j < z.len())
            .map(|j| j as u32)
            .collect();
        prop_assume!(!omega.is_empty());
        let z_ref: Vec<f64> = z.iter().map(|v| -v).collect();
        let d_plus = rectified_diff(&z, &z_ref).unwrap();
        let signed: Vec<f64> = z.iter().zip(&z_ref).map(|(a, b)| a - b).collect();

        let boosted = apply_update(&z, &d_plus, &omega, lambda, g).unwrap();
        let pushed = signed_update(&z, &signed, &omega, lambda, g).unwrap();
        for j in 0..z.len() {
            let in_omega = omega.contains(&(j as u32));
            if in_omega {
                prop_assert!(boosted[j] >= z[j] - 1e-15);
                prop_assert!((boosted[j] - (z[j] + lambda * g * d_plus[j])).abs() <= 1e-12);
                prop_assert!((pushed[j] - (z[j] + lambda * g * signed[j])).abs() <= 1e-12);
            } else {
                prop_assert_eq!(boosted[j], z[j]);
                prop_assert_eq!(pushed[j], z[j]);
            }
        }
    }

    #[test]
    fn stability_score_lives_in_the_unit_interval(
        magnitude in 0.0f64..100.0,
        flux in 0.0f64..100.0,
    ) {
        let s = layer_stability(magnitude, flux, 1e-6).unwrap();
        prop_assert!((0.0..1.0).contains(&s));
        // More flux at equal magnitude can only lower the score.
        let s_more_flux = layer_stability(magnitude, flux + 1.0, 1e-6).unwrap();
        prop_assert!(s_more_flux <= s + 1e-15);
    }

    #[test]
    fn pooled_stability_is_a_convex_combination(
        s in prop::collection::vec(0.0f64..1.0, 1..6),
        r in prop::collection::vec(0.0f64..1.0, 1..6),
        tau in 0.0f64..10.0,
    ) {
        let n = s.len().min(r.len());
        let s = &s[..n];
        let r = &r[..n];
        let (pooled, weights) = pool_stability(s, r, tau).unwrap();
        let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(pooled >= lo - 1e-12 && pooled <= hi + 1e-12);
        let wsum: f64 = weights.iter().sum();
        prop_assert!((wsum - 1.0).abs() <= 1e-9);
        prop_assert!(weights.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn window_and_scale_mappings_respect_their_bounds(s in 0.0f64..=1.0) {
        let w = map_window(s, 8.0, 30.0).unwrap();
        let l = map_scale(s, 0.3, 1.5).unwrap();
        prop_assert!((8.0..=30.0).contains(&w));
        prop_assert!((0.3..=1.5).contains(&l));
        prop_assert!((w - (8.0 + 22.0 * s)).abs() <= 1e-12);
        prop_assert!((l - (0.3 + 1.2 * s)).abs() <= 1e-12);
    }

    #[test]
    fn noise_reference_is_reproducible_per_seed(
        seed in 0u64..1000,
        sigma in 0.001f64..0.2,
        n in 4usize..200,
    ) {
        let x = Waveform::new((0..n).map(|i| (i as f64 * 0.3).sin() * 0.4).collect(), 16_000).unwrap();
        let a = noise_reference(&x, sigma, seed).unwrap();
        let b = noise_reference(&x, sigma, seed).unwrap();
        prop_assert_eq!(a.samples(), b.samples());
        let c = noise_reference(&x, sigma, seed + 1).unwrap();
        prop_assert!(a.samples() != c.samples());
    }
}
