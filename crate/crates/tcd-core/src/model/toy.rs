//! Seeded toy transformer backend. A two-layer feature encoder over fixed
//! 20 ms frames feeds a two-layer single-head causal decoder that attends
//! jointly to audio and text positions. Small enough for exhaustive oracle
//! recomputation, structured enough for nontrivial attention patterns.
//!
//! Incremental decoding (`prefill` / `decode_step`) maintains per-layer key
//! and value caches; [`ToyModel::full_forward`] is a separate batch
//! implementation used as the recompute oracle in tests.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, TcdError};
use crate::model::{AudioLanguageModel, EncoderStates, ForwardCounters, StepOutput};
use crate::signal::Waveform;
use crate::vocab::{TokenId, VOCAB_SIZE};

/// Encoder frame rate, frames per second.
pub const FRAME_RATE: f64 = 50.0;

const D_FEAT: usize = 8;
const D_MODEL: usize = 32;
const MLP_HIDDEN: usize = 64;
const MAX_POS: usize = 512;
const NUM_ENC_LAYERS: usize = 2;
const NUM_DEC_LAYERS: usize = 2;
const LN_EPS: f64 = 1e-5;

/// Tone probes whose band amplitudes enter the frame features; chosen to
/// separate the synthetic event classes.
const PROBE_FREQS_HZ: [f64; 3] = [180.0, 1400.0, 2500.0];

const WEIGHTS_MAGIC: &[u8; 8] = b"TCDTOYW1";
const WEIGHTS_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// small dense math over Vec<f64>

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn matvec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, x)).collect()
}

fn add_inplace(x: &mut [f64], y: &[f64]) {
    for (a, b) in x.iter_mut().zip(y) {
        *a += b;
    }
}

fn tanh_inplace(x: &mut [f64]) {
    for v in x.iter_mut() {
        *v = v.tanh();
    }
}

fn layer_norm(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let denom = (var + LN_EPS).sqrt();
    x.iter().map(|v| (v - mean) / denom).collect()
}

fn softmax_inplace(x: &mut [f64]) {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

// ---------------------------------------------------------------------------
// weights

#[derive(Debug, Clone, PartialEq)]
pub struct DecLayerWeights {
    pub wq: Vec<Vec<f64>>,
    pub wk: Vec<Vec<f64>>,
    pub wv: Vec<Vec<f64>>,
    pub wo: Vec<Vec<f64>>,
    pub mlp_w1: Vec<Vec<f64>>,
    pub mlp_b1: Vec<f64>,
    pub mlp_w2: Vec<Vec<f64>>,
    pub mlp_b2: Vec<f64>,
}

/// All toy-model parameters. Fields are public so oracle tests can recompute
/// forward passes from raw tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyWeights {
    pub enc_w1: Vec<Vec<f64>>, // D_MODEL x D_FEAT
    pub enc_b1: Vec<f64>,
    pub enc_w2: Vec<Vec<f64>>, // D_MODEL x D_MODEL
    pub enc_u2: Vec<Vec<f64>>, // recurrent mix of the previous frame
    pub enc_b2: Vec<f64>,
    pub audio_proj: Vec<Vec<f64>>, // D_MODEL x D_MODEL
    pub embed: Vec<Vec<f64>>,      // VOCAB x D_MODEL
    pub pos: Vec<Vec<f64>>,        // MAX_POS x D_MODEL
    pub dec_layers: Vec<DecLayerWeights>,
    pub w_out: Vec<Vec<f64>>, // VOCAB x D_MODEL
    pub b_out: Vec<f64>,
}

fn sample_vec(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, std).expect("positive std");
    (0..n).map(|_| normal.sample(rng)).collect()
}

fn sample_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Vec<Vec<f64>> {
    (0..rows).map(|_| sample_vec(rng, cols, std)).collect()
}

impl ToyWeights {
    /// Deterministic random weights; sampling order matches the binary
    /// serialization order.
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s_feat = 1.0 / (D_FEAT as f64).sqrt();
        let s_model = 1.0 / (D_MODEL as f64).sqrt();
        let s_hidden = 1.0 / (MLP_HIDDEN as f64).sqrt();
        let enc_w1 = sample_mat(&mut rng, D_MODEL, D_FEAT, s_feat);
        let enc_b1 = sample_vec(&mut rng, D_MODEL, 0.1);
        let enc_w2 = sample_mat(&mut rng, D_MODEL, D_MODEL, s_model);
        let enc_u2 = sample_mat(&mut rng, D_MODEL, D_MODEL, s_model);
        let enc_b2 = sample_vec(&mut rng, D_MODEL, 0.1);
        let audio_proj = sample_mat(&mut rng, D_MODEL, D_MODEL, s_model);
        let embed = sample_mat(&mut rng, VOCAB_SIZE, D_MODEL, s_model);
        let pos = sample_mat(&mut rng, MAX_POS, D_MODEL, 0.1);
        let dec_layers = (0..NUM_DEC_LAYERS)
            .map(|_| DecLayerWeights {
                wq: sample_mat(&mut rng, D_MODEL, D_MODEL, s_model),
                wk: sample_mat(&mut rng, D_MODEL, D_MODEL, s_model),
                wv: sample_mat(&mut rng, D_MODEL, D_MODEL, s_model),
                wo: sample_mat(&mut rng, D_MODEL, D_MODEL, s_model),
                mlp_w1: sample_mat(&mut rng, MLP_HIDDEN, D_MODEL, s_model),
                mlp_b1: vec![0.0; MLP_HIDDEN],
                mlp_w2: sample_mat(&mut rng, D_MODEL, MLP_HIDDEN, s_hidden),
                mlp_b2: vec![0.0; D_MODEL],
            })
            .collect();
        let w_out = sample_mat(&mut rng, VOCAB_SIZE, D_MODEL, s_model);
        // small output bias keeps logits close together, so contrastive
        // updates can actually change the argmax
        let b_out = sample_vec(&mut rng, VOCAB_SIZE, 0.2);
        ToyWeights {
            enc_w1,
            enc_b1,
            enc_w2,
            enc_u2,
            enc_b2,
            audio_proj,
            embed,
            pos,
            dec_layers,
            w_out,
            b_out,
        }
    }

    fn tensors(&self) -> Vec<(&'static str, Vec<&[f64]>)> {
        let mut t: Vec<(&'static str, Vec<&[f64]>)> = vec![
            ("enc_w1", mat_rows(&self.enc_w1)),
            ("enc_b1", vec![&self.enc_b1[..]]),
            ("enc_w2", mat_rows(&self.enc_w2)),
            ("enc_u2", mat_rows(&self.enc_u2)),
            ("enc_b2", vec![&self.enc_b2[..]]),
            ("audio_proj", mat_rows(&self.audio_proj)),
            ("embed", mat_rows(&self.embed)),
            ("pos", mat_rows(&self.pos)),
        ];
        for l in &self.dec_layers {
            t.push(("wq", mat_rows(&l.wq)));
            t.push(("wk", mat_rows(&l.wk)));
            t.push(("wv", mat_rows(&l.wv)));
            t.push(("wo", mat_rows(&l.wo)));
            t.push(("mlp_w1", mat_rows(&l.mlp_w1)));
            t.push(("mlp_b1", vec![&l.mlp_b1[..]]));
            t.push(("mlp_w2", mat_rows(&l.mlp_w2)));
            t.push(("mlp_b2", vec![&l.mlp_b2[..]]));
        }
        t.push(("w_out", mat_rows(&self.w_out)));
        t.push(("b_out", vec![&self.b_out[..]]));
        t
    }

    /// Binary fixture layout: magic `TCDTOYW1`, u32 version, seven u32 dims
    /// (d_feat, d_model, vocab, enc_layers, dec_layers, mlp_hidden, max_pos),
    /// then every tensor flattened row-major as little-endian f64 in the
    /// fixed field order (encoder, projection, embeddings, decoder layers,
    /// output head).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(WEIGHTS_MAGIC)?;
        w.write_all(&WEIGHTS_VERSION.to_le_bytes())?;
        for d in dims() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for (_, rows) in self.tensors() {
            for row in rows {
                for v in row {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != WEIGHTS_MAGIC {
            return Err(TcdError::format("bad toy-weights magic"));
        }
        let version = read_u32(&mut r)?;
        if version != WEIGHTS_VERSION {
            return Err(TcdError::format(format!(
                "unsupported toy-weights version {version}"
            )));
        }
        for expect in dims() {
            let got = read_u32(&mut r)? as usize;
            if got != expect {
                return Err(TcdError::format(format!(
                    "toy-weights dimension mismatch: file has {got}, build expects {expect}"
                )));
            }
        }
        let enc_w1 = read_mat(&mut r, D_MODEL, D_FEAT)?;
        let enc_b1 = read_row(&mut r, D_MODEL)?;
        let enc_w2 = read_mat(&mut r, D_MODEL, D_MODEL)?;
        let enc_u2 = read_mat(&mut r, D_MODEL, D_MODEL)?;
        let enc_b2 = read_row(&mut r, D_MODEL)?;
        let audio_proj = read_mat(&mut r, D_MODEL, D_MODEL)?;
        let embed = read_mat(&mut r, VOCAB_SIZE, D_MODEL)?;
        let pos = read_mat(&mut r, MAX_POS, D_MODEL)?;
        let mut dec_layers = Vec::with_capacity(NUM_DEC_LAYERS);
        for _ in 0..NUM_DEC_LAYERS {
            dec_layers.push(DecLayerWeights {
                wq: read_mat(&mut r, D_MODEL, D_MODEL)?,
                wk: read_mat(&mut r, D_MODEL, D_MODEL)?,
                wv: read_mat(&mut r, D_MODEL, D_MODEL)?,
                wo: read_mat(&mut r, D_MODEL, D_MODEL)?,
                mlp_w1: read_mat(&mut r, MLP_HIDDEN, D_MODEL)?,
                mlp_b1: read_row(&mut r, MLP_HIDDEN)?,
                mlp_w2: read_mat(&mut r, D_MODEL, MLP_HIDDEN)?,
                mlp_b2: read_row(&mut r, D_MODEL)?,
            });
        }
        let w_out = read_mat(&mut r, VOCAB_SIZE, D_MODEL)?;
        let b_out = read_row(&mut r, VOCAB_SIZE)?;
        Ok(ToyWeights {
            enc_w1,
            enc_b1,
            enc_w2,
            enc_u2,
            enc_b2,
            audio_proj,
            embed,
            pos,
            dec_layers,
            w_out,
            b_out,
        })
    }
}

fn dims() -> [usize; 7] {
    [
        D_FEAT,
        D_MODEL,
        VOCAB_SIZE,
        NUM_ENC_LAYERS,
        NUM_DEC_LAYERS,
        MLP_HIDDEN,
        MAX_POS,
    ]
}

fn mat_rows(m: &[Vec<f64>]) -> Vec<&[f64]> {
    m.iter().map(|r| &r[..]).collect()
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_row(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut row = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        let v = f64::from_le_bytes(b);
        if !v.is_finite() {
            return Err(TcdError::format("non-finite weight in fixture"));
        }
        row.push(v);
    }
    Ok(row)
}

fn read_mat(r: &mut impl Read, rows: usize, cols: usize) -> Result<Vec<Vec<f64>>> {
    (0..rows).map(|_| read_row(r, cols)).collect()
}

// ---------------------------------------------------------------------------
// features

fn goertzel_amplitude(frame: &[f64], freq_hz: f64, sample_rate: f64) -> f64 {
    let n = frame.len() as f64;
    let w = 2.0 * std::f64::consts::PI * freq_hz / sample_rate;
    let coeff = 2.0 * w.cos();
    let (mut s1, mut s2) = (0.0, 0.0);
    for &x in frame {
        let s0 = x + coeff * s1 - s2;
        s2 = s1;
        s1 = s0;
    }
    let power = s1 * s1 + s2 * s2 - coeff * s1 * s2;
    power.max(0.0).sqrt() * 2.0 / n
}

fn frame_features(frame: &[f64], prev_rms: f64, sample_rate: f64) -> [f64; D_FEAT] {
    let n = frame.len() as f64;
    let mean = frame.iter().sum::<f64>() / n;
    let rms = (frame.iter().map(|s| s * s).sum::<f64>() / n).sqrt();
    let max_abs = frame.iter().fold(0.0f64, |acc, &s| acc.max(s.abs()));
    let crossings = frame.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
    let zcr = crossings as f64 / (n - 1.0).max(1.0);
    let mut feats = [mean, rms, max_abs, zcr, rms - prev_rms, 0.0, 0.0, 0.0];
    for (i, f) in PROBE_FREQS_HZ.iter().enumerate() {
        feats[5 + i] = goertzel_amplitude(frame, *f, sample_rate);
    }
    feats
}

// ---------------------------------------------------------------------------
// model

/// Incremental decoding state for one branch: per-layer key/value history
/// plus the audio prefix length and consumed text tokens.
#[derive(Debug, Clone)]
pub struct ToyCache {
    k: Vec<Vec<Vec<f64>>>,
    v: Vec<Vec<Vec<f64>>>,
    n_audio: usize,
    consumed_text: Vec<TokenId>,
}

impl ToyCache {
    fn positions(&self) -> usize {
        self.k[0].len()
    }
}

pub struct ToyModel {
    weights: ToyWeights,
    mask_audio: bool,
    counters: ForwardCounters,
}

impl ToyModel {
    pub fn new(weights: ToyWeights, mask_audio: bool) -> Self {
        ToyModel {
            weights,
            mask_audio,
            counters: ForwardCounters::default(),
        }
    }

    pub fn seeded(seed: u64) -> Self {
        Self::new(ToyWeights::seeded(seed), false)
    }

    /// Variant whose text positions cannot attend to audio; every audio
    /// ratio is exactly zero.
    pub fn seeded_audio_masked(seed: u64) -> Self {
        Self::new(ToyWeights::seeded(seed), true)
    }

    pub fn weights(&self) -> &ToyWeights {
        &self.weights
    }

    fn check_token(&self, t: TokenId) -> Result<()> {
        if (t as usize) < VOCAB_SIZE {
            Ok(())
        } else {
            Err(TcdError::invalid(format!(
                "token id {t} outside vocabulary of {VOCAB_SIZE}"
            )))
        }
    }

    fn check_states(&self, h: &EncoderStates) -> Result<()> {
        if h.dim() != D_MODEL {
            return Err(TcdError::invalid(format!(
                "encoder states dimension {} does not match decoder width {D_MODEL}",
                h.dim()
            )));
        }
        Ok(())
    }

    fn audio_input(&self, frame: &[f64], pos: usize) -> Vec<f64> {
        let mut x = matvec(&self.weights.audio_proj, frame);
        add_inplace(&mut x, &self.weights.pos[pos]);
        x
    }

    fn text_input(&self, tok: TokenId, pos: usize) -> Vec<f64> {
        let mut x = self.weights.embed[tok as usize].clone();
        add_inplace(&mut x, &self.weights.pos[pos]);
        x
    }

    /// Run the layer stack at one new position, extending the cache.
    /// Returns the final hidden state and per-layer audio-attention mass.
    fn append_position(
        &self,
        cache: &mut ToyCache,
        input: Vec<f64>,
        is_text: bool,
    ) -> (Vec<f64>, Vec<f64>) {
        let scale = 1.0 / (D_MODEL as f64).sqrt();
        let mut x = input;
        let mut ratios = Vec::with_capacity(NUM_DEC_LAYERS);
        for (l, lw) in self.weights.dec_layers.iter().enumerate() {
            let xn = layer_norm(&x);
            let q = matvec(&lw.wq, &xn);
            cache.k[l].push(matvec(&lw.wk, &xn));
            cache.v[l].push(matvec(&lw.wv, &xn));
            let keys = &cache.k[l];
            let mut included = Vec::with_capacity(keys.len());
            let mut scores = Vec::with_capacity(keys.len());
            for (j, key) in keys.iter().enumerate() {
                if self.mask_audio && is_text && j < cache.n_audio {
                    continue;
                }
                included.push(j);
                scores.push(dot(&q, key) * scale);
            }
            softmax_inplace(&mut scores);
            let mut attn = vec![0.0; D_MODEL];
            let mut audio_mass = 0.0;
            for (&j, &a) in included.iter().zip(&scores) {
                if j < cache.n_audio {
                    audio_mass += a;
                }
                for (acc, vv) in attn.iter_mut().zip(&cache.v[l][j]) {
                    *acc += a * vv;
                }
            }
            ratios.push(audio_mass);
            let proj = matvec(&lw.wo, &attn);
            add_inplace(&mut x, &proj);
            let xm = layer_norm(&x);
            let mut hidden = matvec(&lw.mlp_w1, &xm);
            add_inplace(&mut hidden, &lw.mlp_b1);
            tanh_inplace(&mut hidden);
            let mut mlp_out = matvec(&lw.mlp_w2, &hidden);
            add_inplace(&mut mlp_out, &lw.mlp_b2);
            add_inplace(&mut x, &mlp_out);
        }
        (x, ratios)
    }

    fn output_logits(&self, x: &[f64]) -> Vec<f64> {
        let xn = layer_norm(x);
        let mut logits = matvec(&self.weights.w_out, &xn);
        add_inplace(&mut logits, &self.weights.b_out);
        logits
    }

    /// Batch forward over audio plus all `tokens`, written independently of
    /// the incremental path. Returns final hidden states per position and the
    /// full attention tensor `[layer][query][key]` (masked entries zero).
    /// Does not touch the forward counters.
    pub fn full_states_and_attention(
        &self,
        h: &EncoderStates,
        tokens: &[TokenId],
    ) -> Result<(Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>)> {
        self.check_states(h)?;
        for &t in tokens {
            self.check_token(t)?;
        }
        let n_audio = h.num_frames();
        let total = n_audio + tokens.len();
        if total > MAX_POS {
            return Err(TcdError::invalid(format!(
                "sequence of {total} positions exceeds maximum {MAX_POS}"
            )));
        }
        let mut xs: Vec<Vec<f64>> = Vec::with_capacity(total);
        for (tau, frame) in h.top_layer().iter().enumerate() {
            xs.push(self.audio_input(frame, tau));
        }
        for (i, &tok) in tokens.iter().enumerate() {
            xs.push(self.text_input(tok, n_audio + i));
        }
        let scale = 1.0 / (D_MODEL as f64).sqrt();
        let mut attn_all = Vec::with_capacity(NUM_DEC_LAYERS);
        for lw in &self.weights.dec_layers {
            let xn: Vec<Vec<f64>> = xs.iter().map(|x| layer_norm(x)).collect();
            let qs: Vec<Vec<f64>> = xn.iter().map(|x| matvec(&lw.wq, x)).collect();
            let ks: Vec<Vec<f64>> = xn.iter().map(|x| matvec(&lw.wk, x)).collect();
            let vs: Vec<Vec<f64>> = xn.iter().map(|x| matvec(&lw.wv, x)).collect();
            let mut layer_attn = vec![vec![0.0; total]; total];
            for i in 0..total {
                let is_text = i >= n_audio;
                let mut cols = Vec::with_capacity(i + 1);
                let mut scores = Vec::with_capacity(i + 1);
                for j in 0..=i {
                    if self.mask_audio && is_text && j < n_audio {
                        continue;
                    }
                    cols.push(j);
                    scores.push(dot(&qs[i], &ks[j]) * scale);
                }
                softmax_inplace(&mut scores);
                let mut out = vec![0.0; D_MODEL];
                for (&j, &a) in cols.iter().zip(&scores) {
                    layer_attn[i][j] = a;
                    for (acc, vv) in out.iter_mut().zip(&vs[j]) {
                        *acc += a * vv;
                    }
                }
                let proj = matvec(&lw.wo, &out);
                add_inplace(&mut xs[i], &proj);
            }
            for x in xs.iter_mut() {
                let xm = layer_norm(x);
                let mut hidden = matvec(&lw.mlp_w1, &xm);
                add_inplace(&mut hidden, &lw.mlp_b1);
                tanh_inplace(&mut hidden);
                let mut mlp_out = matvec(&lw.mlp_w2, &hidden);
                add_inplace(&mut mlp_out, &lw.mlp_b2);
                add_inplace(x, &mlp_out);
            }
            attn_all.push(layer_attn);
        }
        Ok((xs, attn_all))
    }

    /// Recompute oracle: logits and per-layer audio ratios at the last
    /// position of `audio + tokens`, from scratch.
    pub fn full_forward(&self, h: &EncoderStates, tokens: &[TokenId]) -> Result<StepOutput> {
        if tokens.is_empty() {
            return Err(TcdError::invalid("full_forward needs at least one token"));
        }
        let n_audio = h.num_frames();
        let (xs, attn) = self.full_states_and_attention(h, tokens)?;
        let last = xs.len() - 1;
        let ratios = attn
            .iter()
            .map(|layer| layer[last][..n_audio].iter().sum())
            .collect();
        Ok(StepOutput {
            logits: self.output_logits(&xs[last]),
            audio_ratio_per_layer: ratios,
        })
    }
}

impl AudioLanguageModel for ToyModel {
    type Cache = ToyCache;

    fn vocab_size(&self) -> usize {
        VOCAB_SIZE
    }

    fn num_decoder_layers(&self) -> usize {
        NUM_DEC_LAYERS
    }

    fn encode(&self, x: &Waveform) -> Result<EncoderStates> {
        let sr = x.sample_rate();
        if sr as f64 % FRAME_RATE != 0.0 {
            return Err(TcdError::invalid(format!(
                "sample rate {sr} not divisible by frame rate {FRAME_RATE}"
            )));
        }
        let frame_len = (sr as f64 / FRAME_RATE) as usize;
        let n_frames = x.len() / frame_len;
        if n_frames == 0 {
            return Err(TcdError::invalid(format!(
                "waveform of {} samples shorter than one {frame_len}-sample frame",
                x.len()
            )));
        }
        let w = &self.weights;
        let mut h1 = Vec::with_capacity(n_frames);
        let mut prev_rms = 0.0;
        for tau in 0..n_frames {
            let frame = &x.samples()[tau * frame_len..(tau + 1) * frame_len];
            let feats = frame_features(frame, prev_rms, sr as f64);
            prev_rms = feats[1];
            let mut v = matvec(&w.enc_w1, &feats);
            add_inplace(&mut v, &w.enc_b1);
            tanh_inplace(&mut v);
            h1.push(v);
        }
        let mut h2 = Vec::with_capacity(n_frames);
        for tau in 0..n_frames {
            let mut v = matvec(&w.enc_w2, &h1[tau]);
            if tau > 0 {
                add_inplace(&mut v, &matvec(&w.enc_u2, &h1[tau - 1]));
            }
            add_inplace(&mut v, &w.enc_b2);
            tanh_inplace(&mut v);
            h2.push(v);
        }
        self.counters.bump_encoder();
        EncoderStates::new(vec![h1, h2], FRAME_RATE)
    }

    fn prefill(&self, h: &EncoderStates, prompt: &[TokenId]) -> Result<Self::Cache> {
        self.check_states(h)?;
        if prompt.is_empty() {
            return Err(TcdError::invalid("prompt must be non-empty"));
        }
        for &t in prompt {
            self.check_token(t)?;
        }
        let n_audio = h.num_frames();
        if n_audio + prompt.len() > MAX_POS {
            return Err(TcdError::invalid(format!(
                "audio frames + prompt exceed maximum {MAX_POS} positions"
            )));
        }
        let mut cache = ToyCache {
            k: vec![Vec::new(); NUM_DEC_LAYERS],
            v: vec![Vec::new(); NUM_DEC_LAYERS],
            n_audio,
            consumed_text: Vec::new(),
        };
        for (tau, frame) in h.top_layer().iter().enumerate() {
            let input = self.audio_input(frame, tau);
            self.append_position(&mut cache, input, false);
        }
        for &tok in &prompt[..prompt.len() - 1] {
            let pos = cache.positions();
            let input = self.text_input(tok, pos);
            self.append_position(&mut cache, input, true);
            cache.consumed_text.push(tok);
        }
        self.counters.bump_decoder();
        Ok(cache)
    }

    fn decode_step(&self, cache: &mut Self::Cache, last_token: TokenId) -> Result<StepOutput> {
        self.check_token(last_token)?;
        let pos = cache.positions();
        if pos >= MAX_POS {
            return Err(TcdError::state(format!(
                "cache exhausted the {MAX_POS}-position budget"
            )));
        }
        let input = self.text_input(last_token, pos);
        let (x, ratios) = self.append_position(cache, input, true);
        cache.consumed_text.push(last_token);
        self.counters.bump_decoder();
        Ok(StepOutput {
            logits: self.output_logits(&x),
            audio_ratio_per_layer: ratios,
        })
    }

    fn audio_layer_ratios(&self, h: &EncoderStates, prompt: &[TokenId]) -> Result<Vec<f64>> {
        if prompt.is_empty() {
            return Err(TcdError::invalid("prompt must be non-empty"));
        }
        let n_audio = h.num_frames();
        let (_, attn) = self.full_states_and_attention(h, prompt)?;
        let ratios = attn
            .iter()
            .map(|layer| {
                let text_rows = &layer[n_audio..];
                text_rows
                    .iter()
                    .map(|row| row[..n_audio].iter().sum::<f64>())
                    .sum::<f64>()
                    / text_rows.len() as f64
            })
            .collect();
        Ok(ratios)
    }

    fn consumed_text<'a>(&self, cache: &'a Self::Cache) -> &'a [TokenId] {
        &cache.consumed_text
    }

    fn counters(&self) -> (u64, u64) {
        self.counters.snapshot()
    }

    fn reset_counters(&self) {
        self.counters.reset();
    }
}
