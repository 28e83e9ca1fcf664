//! Dual-branch decoding engine: per-example stability estimation, slow-path
//! construction, the two-cache generation loop with strategy dispatch, and
//! exact forward-pass accounting.

use std::time::Instant;

use crate::config::{DecodeConfig, SlowPath, Strategy};
use crate::error::{Result, TcdError};
use crate::fusion::{self, GateTrace};
use crate::model::AudioLanguageModel;
use crate::signal::{self, Waveform};
use crate::stability::{self, StabilityReport};
use crate::vocab::{self, TokenId};

/// Forward passes attributed to one session.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SessionCounters {
    pub encoder_forwards: u64,
    pub decoder_forwards: u64,
}

/// One in-flight decoding example: the original branch, the optional
/// slow-path branch, and everything derived at session start.
pub struct Session<'m, M: AudioLanguageModel> {
    model: &'m M,
    config: DecodeConfig,
    orig_cache: M::Cache,
    slow_cache: Option<M::Cache>,
    stability: Option<StabilityReport>,
    last_token: TokenId,
    generated: Vec<TokenId>,
    traces: Vec<GateTrace>,
    counters: SessionCounters,
    stop_token: Option<TokenId>,
    finished: bool,
}

/// Build the slow-path encoder states for a non-baseline strategy.
/// Noise-reference ignores the stability window entirely.
fn slow_states<M: AudioLanguageModel>(
    model: &M,
    x: &Waveform,
    h: &crate::model::EncoderStates,
    report: &StabilityReport,
    config: &DecodeConfig,
    counters: &mut SessionCounters,
) -> Result<crate::model::EncoderStates> {
    if config.strategy == Strategy::TcdNoiseRef {
        let noisy = signal::noise_reference(x, config.noise_sigma, config.seed)?;
        counters.encoder_forwards += 1;
        return model.encode(&noisy);
    }
    match config.slow_path {
        SlowPath::Waveform => {
            let blurred = signal::blur_waveform(x, report.window_ms)?;
            counters.encoder_forwards += 1;
            model.encode(&blurred)
        }
        SlowPath::States => {
            let frames = (report.window_ms * h.frame_rate() / 1000.0).round().max(1.0) as usize;
            signal::blur_states(h, frames)
        }
    }
}

/// Encode, estimate stability, build the slow path, and prefill both
/// branches. Baseline skips everything except its single encode + prefill.
pub fn start_session<'m, M: AudioLanguageModel>(
    model: &'m M,
    x: &Waveform,
    prompt: &[TokenId],
    config: DecodeConfig,
) -> Result<Session<'m, M>> {
    config.validate()?;
    if prompt.is_empty() {
        return Err(TcdError::invalid("prompt must be non-empty"));
    }
    let mut counters = SessionCounters::default();
    let h = model.encode(x)?;
    counters.encoder_forwards += 1;

    let (stability, slow_h) = if config.strategy == Strategy::Baseline {
        (None, None)
    } else {
        let ratios = model.audio_layer_ratios(&h, prompt)?;
        let report = stability::build_report(&h, &ratios, &config)?;
        let slow = slow_states(model, x, &h, &report, &config, &mut counters)?;
        (Some(report), Some(slow))
    };

    let orig_cache = model.prefill(&h, prompt)?;
    counters.decoder_forwards += 1;
    let slow_cache = match &slow_h {
        Some(sh) => {
            let cache = model.prefill(sh, prompt)?;
            counters.decoder_forwards += 1;
            Some(cache)
        }
        None => None,
    };

    Ok(Session {
        model,
        config,
        orig_cache,
        slow_cache,
        stability,
        last_token: *prompt.last().expect("validated non-empty"),
        generated: Vec::new(),
        traces: Vec::new(),
        counters,
        stop_token: None,
        finished: false,
    })
}

impl<'m, M: AudioLanguageModel> Session<'m, M> {
    pub fn set_stop_token(&mut self, stop: Option<TokenId>) {
        self.stop_token = stop;
    }

    pub fn config(&self) -> &DecodeConfig {
        &self.config
    }

    pub fn stability(&self) -> Option<&StabilityReport> {
        self.stability.as_ref()
    }

    pub fn generated(&self) -> &[TokenId] {
        &self.generated
    }

    pub fn traces(&self) -> &[GateTrace] {
        &self.traces
    }

    pub fn counters(&self) -> SessionCounters {
        self.counters
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Both branches must always have consumed identical token sequences.
    pub fn branches_synchronized(&self) -> bool {
        match &self.slow_cache {
            Some(slow) => {
                self.model.consumed_text(&self.orig_cache) == self.model.consumed_text(slow)
            }
            None => true,
        }
    }

    /// Decode one token: run both branches on the same last token, fuse, pick
    /// the argmax, and advance the shared prefix with the fused choice.
    pub fn step(&mut self) -> Result<(TokenId, GateTrace)> {
        if self.finished {
            return Err(TcdError::state(
                "generation already reached the stop token",
            ));
        }
        let out_orig = self.model.decode_step(&mut self.orig_cache, self.last_token)?;
        self.counters.decoder_forwards += 1;
        let z = &out_orig.logits;
        let step_index = self.generated.len();
        let r_t = fusion::audio_reliance(&out_orig.audio_ratio_per_layer, self.config.l_attn)?;
        let entropy_hat = fusion::topk_entropy(z, self.config.k_ent)?;

        let trace = if let Some(slow_cache) = self.slow_cache.as_mut() {
            let out_slow = self.model.decode_step(slow_cache, self.last_token)?;
            self.counters.decoder_forwards += 1;
            let z_ref = &out_slow.logits;
            let omega = fusion::candidate_set(z, z_ref, self.config.k_orig, self.config.k_blur)?;
            let g = if self.config.strategy == Strategy::TcdNoGate {
                1.0
            } else {
                fusion::gate(r_t, entropy_hat, self.config.gamma_gate, self.config.alpha)?
            };
            let lambda = self
                .stability
                .as_ref()
                .expect("non-baseline session has a stability report")
                .lambda;
            let adjusted = if self.config.strategy == Strategy::TcdSigned {
                let d: Vec<f64> = z.iter().zip(z_ref).map(|(a, b)| a - b).collect();
                fusion::signed_update(z, &d, &omega, lambda, g)?
            } else {
                let d_plus = fusion::rectified_diff(z, z_ref)?;
                fusion::apply_update(z, &d_plus, &omega, lambda, g)?
            };
            let chosen = fusion::argmax(&adjusted);
            let applied_bias = omega
                .iter()
                .filter_map(|&j| {
                    let delta = adjusted[j as usize] - z[j as usize];
                    (delta != 0.0).then_some((j, delta))
                })
                .collect();
            GateTrace {
                step_index,
                r_t,
                entropy_hat,
                gate: g,
                candidate_ids: omega,
                applied_bias,
                chosen_token: chosen,
            }
        } else {
            GateTrace {
                step_index,
                r_t,
                entropy_hat,
                gate: 0.0,
                candidate_ids: Vec::new(),
                applied_bias: Vec::new(),
                chosen_token: fusion::argmax(z),
            }
        };

        let chosen = trace.chosen_token;
        self.generated.push(chosen);
        self.traces.push(trace.clone());
        self.last_token = chosen;
        if self.stop_token == Some(chosen) {
            self.finished = true;
        }
        Ok((chosen, trace))
    }
}

/// Finished decode of one example, with everything needed for reporting.
#[derive(Debug, Clone)]
pub struct Transcript {
    pub config: DecodeConfig,
    pub tokens: Vec<TokenId>,
    pub text: String,
    pub traces: Vec<GateTrace>,
    pub stability: Option<StabilityReport>,
    pub counters: SessionCounters,
    /// Wall-clock timings; informational only, never serialized into
    /// deterministic artifacts.
    pub prefill_seconds: f64,
    pub mean_step_seconds: f64,
}

/// Greedy generation until the stop token or `max_tokens`.
pub fn generate<M: AudioLanguageModel>(
    model: &M,
    x: &Waveform,
    prompt: &[TokenId],
    config: DecodeConfig,
    max_tokens: usize,
    stop_token: Option<TokenId>,
) -> Result<Transcript> {
    if max_tokens == 0 {
        return Err(TcdError::invalid("max_tokens must be >= 1"));
    }
    let prefill_start = Instant::now();
    let mut session = start_session(model, x, prompt, config)?;
    let prefill_seconds = prefill_start.elapsed().as_secs_f64();
    session.set_stop_token(stop_token);
    let steps_start = Instant::now();
    for _ in 0..max_tokens {
        session.step()?;
        if session.is_finished() {
            break;
        }
    }
    let steps = session.generated.len();
    let mean_step_seconds = steps_start.elapsed().as_secs_f64() / steps.max(1) as f64;
    let text = vocab::detokenize(&session.generated);
    Ok(Transcript {
        config: session.config.clone(),
        tokens: session.generated,
        text,
        traces: session.traces,
        stability: session.stability,
        counters: session.counters,
        prefill_seconds,
        mean_step_seconds,
    })
}

/// Timings and exact pass counts for one strategy's run.
#[derive(Debug, Clone)]
pub struct PhaseProfile {
    pub strategy: Strategy,
    pub prefill_seconds: f64,
    pub mean_step_seconds: f64,
    pub prefill_encoder_passes: u64,
    pub prefill_decoder_passes: u64,
    pub step_decoder_passes: u64,
    pub steps: usize,
}

/// Side-by-side baseline/contrastive accounting on identical inputs.
#[derive(Debug, Clone)]
pub struct ProfileReport {
    pub baseline: PhaseProfile,
    pub tcd: PhaseProfile,
    /// Structural pass-count ratios; exactly 2.0 by construction.
    pub prefill_encoder_ratio: f64,
    pub prefill_decoder_ratio: f64,
    pub decode_ratio: f64,
    /// Hardware-dependent wall-clock ratios; reported, never asserted.
    pub prefill_wall_ratio: f64,
    pub step_wall_ratio: f64,
    /// Peak resident set size if the platform exposes it.
    pub peak_rss_kb: Option<u64>,
}

/// Time and count one strategy on its own: prefill once, then decode
/// `n_steps` tokens greedily with no stop token.
pub fn profile_phase<M: AudioLanguageModel>(
    model: &M,
    x: &Waveform,
    prompt: &[TokenId],
    config: DecodeConfig,
    n_steps: usize,
) -> Result<PhaseProfile> {
    if n_steps == 0 {
        return Err(TcdError::invalid("n_steps must be >= 1"));
    }
    let strategy = config.strategy;
    let prefill_start = Instant::now();
    let mut session = start_session(model, x, prompt, config)?;
    let prefill_seconds = prefill_start.elapsed().as_secs_f64();
    let at_prefill = session.counters();
    let steps_start = Instant::now();
    for _ in 0..n_steps {
        session.step()?;
    }
    let mean_step_seconds = steps_start.elapsed().as_secs_f64() / n_steps as f64;
    let total = session.counters();
    Ok(PhaseProfile {
        strategy,
        prefill_seconds,
        mean_step_seconds,
        prefill_encoder_passes: at_prefill.encoder_forwards,
        prefill_decoder_passes: at_prefill.decoder_forwards,
        step_decoder_passes: total.decoder_forwards - at_prefill.decoder_forwards,
        steps: n_steps,
    })
}

fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

/// Decode `n_steps` tokens (no stop token) under baseline and the
/// contrastive strategy on identical inputs and account for every pass.
pub fn profile<M: AudioLanguageModel>(
    model: &M,
    x: &Waveform,
    prompt: &[TokenId],
    config: &DecodeConfig,
    n_steps: usize,
) -> Result<ProfileReport> {
    if n_steps == 0 {
        return Err(TcdError::invalid("n_steps must be >= 1"));
    }
    let mut baseline_cfg = config.clone();
    baseline_cfg.strategy = Strategy::Baseline;
    let mut tcd_cfg = config.clone();
    if tcd_cfg.strategy == Strategy::Baseline {
        tcd_cfg.strategy = Strategy::Tcd;
    }
    let baseline = profile_phase(model, x, prompt, baseline_cfg, n_steps)?;
    let tcd = profile_phase(model, x, prompt, tcd_cfg, n_steps)?;
    Ok(ProfileReport {
        prefill_encoder_ratio: tcd.prefill_encoder_passes as f64
            / baseline.prefill_encoder_passes as f64,
        prefill_decoder_ratio: tcd.prefill_decoder_passes as f64
            / baseline.prefill_decoder_passes as f64,
        decode_ratio: (tcd.step_decoder_passes as f64 / tcd.steps as f64)
            / (baseline.step_decoder_passes as f64 / baseline.steps as f64),
        prefill_wall_ratio: tcd.prefill_seconds / baseline.prefill_seconds.max(1e-12),
        step_wall_ratio: tcd.mean_step_seconds / baseline.mean_step_seconds.max(1e-12),
        peak_rss_kb: peak_rss_kb(),
        baseline,
        tcd,
    })
}
