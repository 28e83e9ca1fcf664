//! Audio views: Hann-window temporal blur (waveform- and state-level),
//! the Gaussian-noise reference view, and deterministic synthetic event audio.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, TcdError};
use crate::model::EncoderStates;

/// Sample rate used by [`synth_event_audio`].
pub const SYNTH_SAMPLE_RATE: u32 = 16_000;

/// Mono audio signal with samples nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(TcdError::invalid("waveform must be non-empty"));
        }
        if sample_rate == 0 {
            return Err(TcdError::invalid("sample_rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(TcdError::invalid("waveform contains non-finite samples"));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / self.sample_rate as f64
    }

    /// Root-mean-square amplitude.
    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }
}

fn rms(samples: &[f64]) -> f64 {
    let sq: f64 = samples.iter().map(|s| s * s).sum();
    (sq / samples.len() as f64).sqrt()
}

/// Normalized, non-negative, symmetric smoothing kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    weights: Vec<f64>,
    center_index: usize,
}

impl BlurKernel {
    fn from_weights(mut weights: Vec<f64>) -> Self {
        let sum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= sum;
        }
        let center_index = weights.len() / 2;
        BlurKernel {
            weights,
            center_index,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn center_index(&self) -> usize {
        self.center_index
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Odd-length Hann taps, zero at the endpoints, normalized to sum 1.
/// `n = 1` degenerates to the single tap `[1.0]`.
fn hann_taps(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let nm1 = (n - 1) as f64;
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / nm1).cos()))
        .collect()
}

fn odd_tap_count(count: f64) -> usize {
    let n = count.ceil().max(1.0) as usize;
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}

/// Hann smoothing kernel covering `window_ms` at the given sample rate.
///
/// The tap count is the smallest odd sample count covering the window, so a
/// window shorter than one sample period degenerates to the identity kernel.
pub fn hann_kernel(window_ms: f64, sample_rate: u32) -> Result<BlurKernel> {
    if !(window_ms > 0.0) {
        return Err(TcdError::invalid(format!(
            "window_ms must be positive, got {window_ms}"
        )));
    }
    if sample_rate == 0 {
        return Err(TcdError::invalid("sample_rate must be positive"));
    }
    let n = odd_tap_count(window_ms * sample_rate as f64 / 1000.0);
    Ok(BlurKernel::from_weights(hann_taps(n)))
}

/// Hann kernel over a frame neighborhood of `window_frames` frames
/// (rounded up to odd so the kernel stays symmetric).
pub fn frame_kernel(window_frames: usize) -> Result<BlurKernel> {
    if window_frames == 0 {
        return Err(TcdError::invalid("window_frames must be >= 1"));
    }
    let n = if window_frames % 2 == 0 {
        window_frames + 1
    } else {
        window_frames
    };
    Ok(BlurKernel::from_weights(hann_taps(n)))
}

/// Same-length smoothing of `values` with `kernel`; kernels that overhang the
/// signal edges are renormalized over their in-range taps so constants stay
/// fixed points.
fn convolve_renorm(values: &[f64], kernel: &BlurKernel) -> Vec<f64> {
    let n = values.len();
    let k = kernel.weights();
    let c = kernel.center_index() as isize;
    let mut out = vec![0.0; n];
    for (t, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for (i, &w) in k.iter().enumerate() {
            let j = t as isize + i as isize - c;
            if j >= 0 && (j as usize) < n {
                acc += w * values[j as usize];
                wsum += w;
            }
        }
        *o = acc / wsum;
    }
    out
}

/// Temporal blur without amplitude correction. Exposed separately because the
/// convolution itself is linear; [`blur_waveform`] adds the RMS rescale.
pub fn blur_waveform_unscaled(x: &Waveform, window_ms: f64) -> Result<Waveform> {
    let kernel = hann_kernel(window_ms, x.sample_rate())?;
    Waveform::new(convolve_renorm(x.samples(), &kernel), x.sample_rate())
}

/// Slow-path waveform view: Hann blur over `window_ms` followed by an RMS
/// rescale so global amplitude is preserved. Silent input (zero RMS either
/// side) skips the rescale.
pub fn blur_waveform(x: &Waveform, window_ms: f64) -> Result<Waveform> {
    let blurred = blur_waveform_unscaled(x, window_ms)?;
    let rms_in = x.rms();
    let rms_out = blurred.rms();
    if rms_in == 0.0 || rms_out == 0.0 {
        return Ok(blurred);
    }
    let scale = rms_in / rms_out;
    let samples = blurred.samples().iter().map(|s| s * scale).collect();
    Waveform::new(samples, x.sample_rate())
}

/// State-level blur: per-layer, per-dimension Hann-weighted average over the
/// local frame neighborhood, boundary neighborhoods renormalized.
/// `window_frames = 1` is the identity.
pub fn blur_states(h: &EncoderStates, window_frames: usize) -> Result<EncoderStates> {
    let frames = h.num_frames();
    if window_frames > 2 * frames {
        return Err(TcdError::invalid(format!(
            "window_frames {window_frames} larger than 2x sequence length {frames}"
        )));
    }
    let kernel = frame_kernel(window_frames)?;
    let dim = h.dim();
    let mut layers = Vec::with_capacity(h.num_layers());
    for layer in h.layers() {
        // smooth each dimension's trajectory independently
        let mut blurred = vec![vec![0.0; dim]; frames];
        for d in 0..dim {
            let series: Vec<f64> = layer.iter().map(|frame| frame[d]).collect();
            let smoothed = convolve_renorm(&series, &kernel);
            for (tau, value) in smoothed.into_iter().enumerate() {
                blurred[tau][d] = value;
            }
        }
        layers.push(blurred);
    }
    EncoderStates::new(layers, h.frame_rate())
}

/// Ablation reference view: the original waveform plus seeded Gaussian noise
/// of standard deviation `sigma`.
pub fn noise_reference(x: &Waveform, sigma: f64, seed: u64) -> Result<Waveform> {
    if !(sigma >= 0.0) {
        return Err(TcdError::invalid(format!(
            "sigma must be non-negative, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma validated above");
    let samples = x
        .samples()
        .iter()
        .map(|s| s + normal.sample(&mut rng))
        .collect();
    Waveform::new(samples, x.sample_rate())
}

/// Class of a synthetic transient event; each class maps to a tone frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventClass {
    Ring,
    Beep,
    Knock,
}

impl EventClass {
    pub fn name(&self) -> &'static str {
        match self {
            EventClass::Ring => "ring",
            EventClass::Beep => "beep",
            EventClass::Knock => "knock",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(EventClass::Ring),
            "beep" => Ok(EventClass::Beep),
            "knock" => Ok(EventClass::Knock),
            other => Err(TcdError::format(format!("unknown event class: {other:?}"))),
        }
    }

    /// Tone frequency of the burst, Hz.
    pub fn frequency_hz(&self) -> f64 {
        match self {
            EventClass::Ring => 1400.0,
            EventClass::Beep => 2500.0,
            EventClass::Knock => 180.0,
        }
    }
}

/// One scripted transient event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub onset_ms: f64,
    pub length_ms: f64,
    pub class: EventClass,
}

/// Deterministic recipe for test audio: tone bursts over a noise floor.
#[derive(Debug, Clone, PartialEq)]
pub struct EventScript {
    pub duration_ms: f64,
    pub events: Vec<Event>,
    pub noise_floor: f64,
    pub seed: u64,
}

impl EventScript {
    pub fn new(duration_ms: f64, events: Vec<Event>, noise_floor: f64, seed: u64) -> Result<Self> {
        if !(duration_ms > 0.0) {
            return Err(TcdError::invalid("duration_ms must be positive"));
        }
        if !(noise_floor >= 0.0) {
            return Err(TcdError::invalid("noise_floor must be non-negative"));
        }
        let mut prev_onset = f64::NEG_INFINITY;
        for (i, ev) in events.iter().enumerate() {
            if !(ev.onset_ms >= 0.0 && ev.length_ms > 0.0) {
                return Err(TcdError::invalid(format!(
                    "event {i}: onset must be >= 0 and length positive"
                )));
            }
            if ev.onset_ms + ev.length_ms > duration_ms {
                return Err(TcdError::invalid(format!(
                    "event {i} extends past duration ({} + {} > {duration_ms} ms)",
                    ev.onset_ms, ev.length_ms
                )));
            }
            if ev.onset_ms <= prev_onset {
                return Err(TcdError::invalid(format!(
                    "event {i}: onsets must be strictly increasing"
                )));
            }
            prev_onset = ev.onset_ms;
        }
        Ok(EventScript {
            duration_ms,
            events,
            noise_floor,
            seed,
        })
    }

    /// Line-delimited text form: `key=value` lines for the scalar fields,
    /// then one `onset_ms,length_ms,class` line per event.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("duration_ms={}\n", self.duration_ms));
        out.push_str(&format!("noise_floor={}\n", self.noise_floor));
        out.push_str(&format!("seed={}\n", self.seed));
        for ev in &self.events {
            out.push_str(&format!(
                "{},{},{}\n",
                ev.onset_ms,
                ev.length_ms,
                ev.class.name()
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut duration_ms = None;
        let mut noise_floor = 0.0;
        let mut seed = 0u64;
        let mut events = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((key, value)) = line.split_once('=') {
                let key = key.trim();
                let value = value.trim();
                match key {
                    "duration_ms" => {
                        duration_ms = Some(parse_num(value, lineno)?);
                    }
                    "noise_floor" => noise_floor = parse_num(value, lineno)?,
                    "seed" => {
                        seed = value.parse().map_err(|_| {
                            TcdError::format(format!("line {}: bad seed {value:?}", lineno + 1))
                        })?
                    }
                    other => {
                        return Err(TcdError::format(format!(
                            "line {}: unknown key {other:?}",
                            lineno + 1
                        )))
                    }
                }
            } else {
                let parts: Vec<&str> = line.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(TcdError::format(format!(
                        "line {}: expected onset_ms,length_ms,class",
                        lineno + 1
                    )));
                }
                events.push(Event {
                    onset_ms: parse_num(parts[0], lineno)?,
                    length_ms: parse_num(parts[1], lineno)?,
                    class: EventClass::parse(parts[2])?,
                });
            }
        }
        let duration_ms =
            duration_ms.ok_or_else(|| TcdError::format("missing duration_ms line"))?;
        EventScript::new(duration_ms, events, noise_floor, seed)
    }
}

fn parse_num(s: &str, lineno: usize) -> Result<f64> {
    s.parse()
        .map_err(|_| TcdError::format(format!("line {}: bad number {s:?}", lineno + 1)))
}

/// Render an event script to audio at [`SYNTH_SAMPLE_RATE`]: seeded Gaussian
/// noise floor plus one tone burst per event, with 5 ms raised-cosine ramps on
/// each burst so onsets are transient but band-limited.
pub fn synth_event_audio(spec: &EventScript) -> Result<Waveform> {
    // Overlap is rejected here rather than in the constructor so scripts can
    // be carried around partially built; synthesis is where overlap breaks.
    for pair in spec.events.windows(2) {
        if pair[0].onset_ms + pair[0].length_ms > pair[1].onset_ms {
            return Err(TcdError::invalid(format!(
                "events overlap: one ending at {} ms overlaps onset {} ms",
                pair[0].onset_ms + pair[0].length_ms,
                pair[1].onset_ms
            )));
        }
    }
    let sr = SYNTH_SAMPLE_RATE;
    let n = ((spec.duration_ms / 1000.0) * sr as f64).round() as usize;
    if n == 0 {
        return Err(TcdError::invalid("duration too short for one sample"));
    }
    let mut samples = vec![0.0; n];
    if spec.noise_floor > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_floor).expect("noise_floor validated");
        for s in &mut samples {
            *s = normal.sample(&mut rng);
        }
    }
    const BURST_AMPLITUDE: f64 = 0.5;
    const RAMP_MS: f64 = 5.0;
    for ev in &spec.events {
        let start = ((ev.onset_ms / 1000.0) * sr as f64).round() as usize;
        let len = ((ev.length_ms / 1000.0) * sr as f64).round() as usize;
        let ramp = ((RAMP_MS / 1000.0) * sr as f64).round() as usize;
        let ramp = ramp.min(len / 2);
        let freq = ev.class.frequency_hz();
        for i in 0..len {
            let idx = start + i;
            if idx >= n {
                break;
            }
            let t = i as f64 / sr as f64;
            let mut env = 1.0;
            if ramp > 0 {
                if i < ramp {
                    env = 0.5 * (1.0 - (std::f64::consts::PI * i as f64 / ramp as f64).cos());
                } else if i >= len - ramp {
                    let j = len - 1 - i;
                    env = 0.5 * (1.0 - (std::f64::consts::PI * j as f64 / ramp as f64).cos());
                }
            }
            samples[idx] += BURST_AMPLITUDE * env * (2.0 * std::f64::consts::PI * freq * t).sin();
        }
    }
    Waveform::new(samples, sr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn seeded_wave(seed: u64, n: usize) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Waveform::new(samples, 16_000).unwrap()
    }

    #[test]
    fn waveform_rejects_bad_input() {
        assert!(Waveform::new(vec![], 16_000).is_err());
        assert!(Waveform::new(vec![0.0], 0).is_err());
        assert!(Waveform::new(vec![f64::NAN], 16_000).is_err());
    }

    #[test]
    fn hann_kernel_degenerates_to_single_tap() {
        // window shorter than one sample period
        let k = hann_kernel(0.01, 16_000).unwrap();
        assert_eq!(k.weights(), &[1.0]);
        assert_eq!(k.center_index(), 0);
    }

    #[test]
    fn hann_kernel_three_taps_is_center_spike() {
        // 3 samples cover 0.15 ms at 16 kHz; endpoints of an odd Hann are zero
        let k = hann_kernel(0.15, 16_000).unwrap();
        assert_eq!(k.len(), 3);
        assert_eq!(k.weights(), &[0.0, 1.0, 0.0]);
        let sum: f64 = k.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hann_kernel_matches_closed_form() {
        // 8 ms at 16 kHz covers 128 samples -> 129 taps
        let k = hann_kernel(8.0, 16_000).unwrap();
        assert_eq!(k.len(), 129);
        assert_eq!(k.center_index(), 64);
        let mut expected: Vec<f64> = (0..129)
            .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / 128.0).cos()))
            .collect();
        let sum: f64 = expected.iter().sum();
        for e in &mut expected {
            *e /= sum;
        }
        for (a, b) in k.weights().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let total: f64 = k.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        // symmetry about the center
        for i in 0..k.len() {
            let mirror = k.len() - 1 - i;
            assert!((k.weights()[i] - k.weights()[mirror]).abs() < 1e-12);
        }
    }

    #[test]
    fn hann_kernel_rejects_bad_args() {
        assert!(hann_kernel(0.0, 16_000).is_err());
        assert!(hann_kernel(-1.0, 16_000).is_err());
        assert!(hann_kernel(8.0, 0).is_err());
    }

    #[test]
    fn blur_keeps_constants_fixed() {
        let x = Waveform::new(vec![0.25; 400], 16_000).unwrap();
        let y = blur_waveform(&x, 8.0).unwrap();
        assert_eq!(y.len(), x.len());
        assert_eq!(y.sample_rate(), x.sample_rate());
        for s in y.samples() {
            assert!((s - 0.25).abs() < 1e-9, "constant not preserved: {s}");
        }
    }

    #[test]
    fn blur_impulse_matches_direct_convolution_oracle() {
        let mut samples = vec![0.0; 801];
        samples[400] = 1.0;
        let x = Waveform::new(samples, 16_000).unwrap();
        let window_ms = 8.0;
        let y = blur_waveform(&x, window_ms).unwrap();

        // oracle: direct convolution with boundary renormalization + RMS match
        let k = hann_kernel(window_ms, 16_000).unwrap();
        let n = x.len() as isize;
        let c = k.center_index() as isize;
        let mut expect = vec![0.0; x.len()];
        for t in 0..n {
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for (i, &w) in k.weights().iter().enumerate() {
                let j = t + i as isize - c;
                if j >= 0 && j < n {
                    acc += w * x.samples()[j as usize];
                    wsum += w;
                }
            }
            expect[t as usize] = acc / wsum;
        }
        let rin = rms(x.samples());
        let rout = rms(&expect);
        for e in &mut expect {
            *e *= rin / rout;
        }
        for (a, b) in y.samples().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    /// Band energy above `cutoff_hz` by direct DFT.
    fn highpass_energy(x: &Waveform, cutoff_hz: f64) -> f64 {
        let n = x.len();
        let sr = x.sample_rate() as f64;
        let mut energy = 0.0;
        for bin in 0..n / 2 {
            let f = bin as f64 * sr / n as f64;
            if f <= cutoff_hz {
                continue;
            }
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &s) in x.samples().iter().enumerate() {
                let phase = -2.0 * std::f64::consts::PI * bin as f64 * i as f64 / n as f64;
                re += s * phase.cos();
                im += s * phase.sin();
            }
            energy += re * re + im * im;
        }
        energy
    }

    #[test]
    fn blur_attenuates_transient_click() {
        // two low tones plus a 5 ms high-frequency click
        let sr = 16_000u32;
        let n = 1600; // 100 ms
        let mut samples: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / sr as f64;
                0.3 * (2.0 * std::f64::consts::PI * 100.0 * t).sin()
                    + 0.3 * (2.0 * std::f64::consts::PI * 200.0 * t).sin()
            })
            .collect();
        for i in 800..880 {
            let t = i as f64 / sr as f64;
            samples[i] += 0.6 * (2.0 * std::f64::consts::PI * 4000.0 * t).sin();
        }
        let x = Waveform::new(samples, sr).unwrap();
        let y = blur_waveform(&x, 8.0).unwrap();
        let before = highpass_energy(&x, 2000.0);
        let after = highpass_energy(&y, 2000.0);
        assert!(
            after < before,
            "high-band energy must strictly decrease: {after} vs {before}"
        );
        // amplitude preserved globally
        assert!((y.rms() - x.rms()).abs() < 1e-6 * x.rms().max(1.0));
    }

    #[test]
    fn blur_is_linear_without_rescale() {
        let x = seeded_wave(11, 500);
        let y = seeded_wave(12, 500);
        let (a, b) = (0.7, -1.3);
        let combo = Waveform::new(
            x.samples()
                .iter()
                .zip(y.samples())
                .map(|(xs, ys)| a * xs + b * ys)
                .collect(),
            16_000,
        )
        .unwrap();
        let lhs = blur_waveform_unscaled(&combo, 8.0).unwrap();
        let bx = blur_waveform_unscaled(&x, 8.0).unwrap();
        let by = blur_waveform_unscaled(&y, 8.0).unwrap();
        for i in 0..lhs.len() {
            let rhs = a * bx.samples()[i] + b * by.samples()[i];
            assert!((lhs.samples()[i] - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn blur_preserves_rms() {
        for seed in 0..5 {
            let x = seeded_wave(seed, 700);
            let y = blur_waveform(&x, 12.0).unwrap();
            assert!((x.rms() - y.rms()).abs() < 1e-6);
        }
    }

    fn random_states(seed: u64, layers: usize, frames: usize, dim: usize) -> EncoderStates {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = (0..layers)
            .map(|_| {
                (0..frames)
                    .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect()
            })
            .collect();
        EncoderStates::new(layers, 50.0).unwrap()
    }

    #[test]
    fn blur_states_window_one_is_identity() {
        let h = random_states(3, 2, 10, 4);
        let b = blur_states(&h, 1).unwrap();
        assert_eq!(h, b);
    }

    #[test]
    fn blur_states_constant_unchanged() {
        let layers = vec![vec![vec![0.5, -1.0]; 8]];
        let h = EncoderStates::new(layers, 50.0).unwrap();
        let b = blur_states(&h, 5).unwrap();
        for (orig, blur) in h.layers()[0].iter().zip(&b.layers()[0]) {
            for (a, c) in orig.iter().zip(blur) {
                assert!((a - c).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn blur_states_matches_weighted_sum_oracle() {
        let h = random_states(7, 2, 12, 3);
        let window = 5usize;
        let b = blur_states(&h, window).unwrap();
        let kernel = frame_kernel(window).unwrap();
        let c = kernel.center_index() as isize;
        for (l, layer) in h.layers().iter().enumerate() {
            let frames = layer.len() as isize;
            for tau in 0..frames {
                for d in 0..h.dim() {
                    let mut acc = 0.0;
                    let mut wsum = 0.0;
                    for (i, &w) in kernel.weights().iter().enumerate() {
                        let j = tau + i as isize - c;
                        if j >= 0 && j < frames {
                            acc += w * layer[j as usize][d];
                            wsum += w;
                        }
                    }
                    let expect = acc / wsum;
                    let got = b.layers()[l][tau as usize][d];
                    assert!((got - expect).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn blur_states_rejects_oversized_window() {
        let h = random_states(1, 1, 4, 2);
        assert!(blur_states(&h, 9).is_err());
        assert!(blur_states(&h, 8).is_ok());
        assert!(blur_states(&h, 0).is_err());
    }

    #[test]
    fn noise_reference_sigma_zero_is_identity() {
        let x = seeded_wave(5, 100);
        let y = noise_reference(&x, 0.0, 99).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn noise_reference_is_deterministic() {
        let x = seeded_wave(5, 100);
        let a = noise_reference(&x, 0.01, 42).unwrap();
        let b = noise_reference(&x, 0.01, 42).unwrap();
        assert_eq!(a, b);
        let c = noise_reference(&x, 0.01, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noise_reference_mean_matches_statistical_oracle() {
        let n = 100_000;
        let x = Waveform::new(vec![0.0; n], 16_000).unwrap();
        let sigma = 0.01;
        let y = noise_reference(&x, sigma, 7).unwrap();
        let mean: f64 = y
            .samples()
            .iter()
            .zip(x.samples())
            .map(|(a, b)| a - b)
            .sum::<f64>()
            / n as f64;
        let bound = 3.0 * sigma / (n as f64).sqrt();
        assert!(
            mean.abs() < bound,
            "noise mean {mean} outside +/- {bound}"
        );
    }

    /// Short-time energy oracle: count disjoint regions where windowed RMS
    /// exceeds `threshold`.
    fn energetic_regions(x: &Waveform, window: usize, threshold: f64) -> usize {
        let mut regions = 0;
        let mut inside = false;
        let mut i = 0;
        while i + window <= x.len() {
            let e = rms(&x.samples()[i..i + window]);
            if e > threshold {
                if !inside {
                    regions += 1;
                    inside = true;
                }
            } else {
                inside = false;
            }
            i += window / 2;
        }
        regions
    }

    #[test]
    fn synth_empty_script_is_noise_floor_only() {
        let spec = EventScript::new(200.0, vec![], 0.01, 3).unwrap();
        let x = synth_event_audio(&spec).unwrap();
        assert_eq!(x.len(), 3200);
        assert_eq!(energetic_regions(&x, 160, 0.02), 0);
    }

    #[test]
    fn synth_three_rings_gives_three_energetic_regions() {
        let events = vec![
            Event { onset_ms: 100.0, length_ms: 80.0, class: EventClass::Ring },
            Event { onset_ms: 400.0, length_ms: 80.0, class: EventClass::Ring },
            Event { onset_ms: 700.0, length_ms: 80.0, class: EventClass::Ring },
        ];
        let spec = EventScript::new(1000.0, events, 0.01, 3).unwrap();
        let x = synth_event_audio(&spec).unwrap();
        let regions = energetic_regions(&x, 160, 2.0 * 0.01);
        assert_eq!(regions, 3, "expected exactly 3 energetic regions");
    }

    #[test]
    fn synth_is_deterministic() {
        let spec = EventScript::new(
            500.0,
            vec![Event { onset_ms: 50.0, length_ms: 60.0, class: EventClass::Beep }],
            0.02,
            9,
        )
        .unwrap();
        let a = synth_event_audio(&spec).unwrap();
        let b = synth_event_audio(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synth_rejects_overlapping_events() {
        let events = vec![
            Event { onset_ms: 100.0, length_ms: 200.0, class: EventClass::Ring },
            Event { onset_ms: 250.0, length_ms: 80.0, class: EventClass::Ring },
        ];
        let spec = EventScript::new(1000.0, events, 0.01, 1).unwrap();
        assert!(synth_event_audio(&spec).is_err());
    }

    #[test]
    fn script_validation_rejects_bad_events() {
        let out_of_range = vec![Event { onset_ms: 950.0, length_ms: 100.0, class: EventClass::Ring }];
        assert!(EventScript::new(1000.0, out_of_range, 0.0, 0).is_err());
        let non_increasing = vec![
            Event { onset_ms: 100.0, length_ms: 10.0, class: EventClass::Ring },
            Event { onset_ms: 100.0, length_ms: 10.0, class: EventClass::Beep },
        ];
        assert!(EventScript::new(1000.0, non_increasing, 0.0, 0).is_err());
    }

    #[test]
    fn event_script_text_roundtrip() {
        let spec = EventScript::new(
            750.0,
            vec![
                Event { onset_ms: 10.0, length_ms: 40.0, class: EventClass::Ring },
                Event { onset_ms: 100.5, length_ms: 25.0, class: EventClass::Knock },
            ],
            0.015,
            21,
        )
        .unwrap();
        let text = spec.to_text();
        let parsed = EventScript::from_text(&text).unwrap();
        assert_eq!(spec, parsed);
        assert!(EventScript::from_text("nonsense").is_err());
        assert!(EventScript::from_text("duration_ms=100\n1,2\n").is_err());
    }
}
