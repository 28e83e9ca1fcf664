//! Abstract unified audio-LM interface: an encoder producing layered frame
//! states and an incremental decoder with per-layer audio-attention
//! introspection. Two desk-scale backends implement it: a seeded toy
//! transformer ([`toy::ToyModel`]) and a table-driven oracle
//! ([`scripted::ScriptedModel`]).

pub mod scripted;
pub mod toy;

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Result, TcdError};
use crate::signal::Waveform;
use crate::vocab::TokenId;

/// Per-layer sequences of latent frame vectors produced by an audio encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderStates {
    layers: Vec<Vec<Vec<f64>>>,
    frame_rate: f64,
}

impl EncoderStates {
    pub fn new(layers: Vec<Vec<Vec<f64>>>, frame_rate: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(TcdError::invalid("encoder states need at least one layer"));
        }
        if !(frame_rate > 0.0) {
            return Err(TcdError::invalid("frame_rate must be positive"));
        }
        let frames = layers[0].len();
        if frames == 0 {
            return Err(TcdError::invalid("encoder states need at least one frame"));
        }
        let dim = layers[0][0].len();
        if dim == 0 {
            return Err(TcdError::invalid("frame vectors must be non-empty"));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.len() != frames {
                return Err(TcdError::invalid(format!(
                    "layer {l} has {} frames, layer 0 has {frames}",
                    layer.len()
                )));
            }
            for frame in layer {
                if frame.len() != dim {
                    return Err(TcdError::invalid(format!(
                        "layer {l} has a frame of dimension {}, expected {dim}",
                        frame.len()
                    )));
                }
                if frame.iter().any(|v| !v.is_finite()) {
                    return Err(TcdError::invalid(format!(
                        "layer {l} contains non-finite values"
                    )));
                }
            }
        }
        Ok(EncoderStates { layers, frame_rate })
    }

    pub fn layers(&self) -> &[Vec<Vec<f64>>] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_frames(&self) -> usize {
        self.layers[0].len()
    }

    pub fn dim(&self) -> usize {
        self.layers[0][0].len()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    /// States of the deepest layer; what a decoder conditions on.
    pub fn top_layer(&self) -> &[Vec<f64>] {
        self.layers.last().expect("validated non-empty")
    }
}

/// One decoder forward's observable output: next-token logits plus the
/// fraction of attention mass each decoder layer put on audio positions.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub logits: Vec<f64>,
    pub audio_ratio_per_layer: Vec<f64>,
}

/// Exact forward-pass accounting, shared behind `&Model`.
#[derive(Debug, Default)]
pub struct ForwardCounters {
    encoder: AtomicU64,
    decoder: AtomicU64,
}

impl ForwardCounters {
    pub fn bump_encoder(&self) {
        self.encoder.fetch_add(1, Ordering::Relaxed);
    }

    pub fn bump_decoder(&self) {
        self.decoder.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> (u64, u64) {
        (
            self.encoder.load(Ordering::Relaxed),
            self.decoder.load(Ordering::Relaxed),
        )
    }

    pub fn reset(&self) {
        self.encoder.store(0, Ordering::Relaxed);
        self.decoder.store(0, Ordering::Relaxed);
    }
}

/// Unified audio-language model: encode audio once, then decode text
/// incrementally while attending to the audio states.
///
/// Incremental contract: `prefill(H, prompt)` runs one decoder forward over
/// the audio positions plus every prompt token except the last; the caller
/// then feeds tokens one at a time through `decode_step`, starting with the
/// prompt's final token. After feeding tokens `t_1..t_k` this way, the
/// returned logits must match a from-scratch forward over the same prefix
/// within 1e-6. `audio_layer_ratios` is a read-only introspection pass and
/// does not touch the forward counters.
pub trait AudioLanguageModel: Sync {
    type Cache: Send;

    fn vocab_size(&self) -> usize;

    fn num_decoder_layers(&self) -> usize;

    /// Deterministic layered states for a waveform. Counts one encoder
    /// forward.
    fn encode(&self, x: &Waveform) -> Result<EncoderStates>;

    /// Start an incremental decoding branch over `h` and all but the last
    /// prompt token. Counts one decoder forward.
    fn prefill(&self, h: &EncoderStates, prompt: &[TokenId]) -> Result<Self::Cache>;

    /// Feed `last_token` into the branch and return logits for the next
    /// position. Counts one decoder forward.
    fn decode_step(&self, cache: &mut Self::Cache, last_token: TokenId) -> Result<StepOutput>;

    /// Per-decoder-layer fraction of attention mass on audio positions,
    /// averaged over every prompt token position. Uncounted introspection.
    fn audio_layer_ratios(&self, h: &EncoderStates, prompt: &[TokenId]) -> Result<Vec<f64>>;

    /// Text tokens this branch has consumed so far (prefix + fed tokens).
    fn consumed_text<'a>(&self, cache: &'a Self::Cache) -> &'a [TokenId];

    /// (encoder_forwards, decoder_forwards) since construction or last reset.
    fn counters(&self) -> (u64, u64);

    fn reset_counters(&self);
}
