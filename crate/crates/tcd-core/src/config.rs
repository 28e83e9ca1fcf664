//! Decoding configuration: hyperparameter defaults, validation, and a flat
//! `key=value` text form that round-trips exactly.

use crate::error::{Result, TcdError};

/// Decoding strategy. `Baseline` is single-branch greedy decoding; the
/// others are contrastive variants differing in reference view or gating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Baseline,
    Tcd,
    TcdNoGate,
    TcdSigned,
    TcdNoiseRef,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Baseline,
        Strategy::Tcd,
        Strategy::TcdNoGate,
        Strategy::TcdSigned,
        Strategy::TcdNoiseRef,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::Tcd => "tcd",
            Strategy::TcdNoGate => "tcd_no_gate",
            Strategy::TcdSigned => "tcd_signed",
            Strategy::TcdNoiseRef => "tcd_noise_ref",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|v| v.name() == s)
            .ok_or_else(|| TcdError::config("strategy", format!("unknown strategy {s:?}")))
    }
}

/// Which operator builds the slow-path view: blur the waveform and re-encode
/// (the default), or blur the encoder states directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlowPath {
    Waveform,
    States,
}

impl SlowPath {
    pub fn name(&self) -> &'static str {
        match self {
            SlowPath::Waveform => "waveform",
            SlowPath::States => "states",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "waveform" => Ok(SlowPath::Waveform),
            "states" => Ok(SlowPath::States),
            other => Err(TcdError::config(
                "slow_path",
                format!("unknown slow path {other:?}"),
            )),
        }
    }
}

/// All decoding hyperparameters plus the strategy selector.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeConfig {
    /// Blur window bounds, milliseconds.
    pub w_min_ms: f64,
    pub w_max_ms: f64,
    /// Update-scale bounds.
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Candidate counts from the original and slow-path logits.
    pub k_orig: usize,
    pub k_blur: usize,
    /// Top-K size for the normalized entropy.
    pub k_ent: usize,
    /// Gate gain and entropy exponent.
    pub gamma_gate: f64,
    pub alpha: f64,
    /// Softmax temperature for layer weighting.
    pub tau: f64,
    /// How many top decoder layers feed the audio-reliance mean.
    pub l_attn: usize,
    pub epsilon: f64,
    pub strategy: Strategy,
    pub slow_path: SlowPath,
    /// Noise standard deviation for the noise-reference strategy.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            w_min_ms: 8.0,
            w_max_ms: 30.0,
            lambda_min: 0.3,
            lambda_max: 1.5,
            k_orig: 16,
            k_blur: 8,
            k_ent: 5,
            gamma_gate: 2.0,
            alpha: 0.5,
            tau: 4.0,
            l_attn: 4,
            epsilon: 1e-6,
            strategy: Strategy::Tcd,
            slow_path: SlowPath::Waveform,
            noise_sigma: 0.01,
            seed: 0,
        }
    }
}

fn bad(key: &str, msg: impl Into<String>) -> TcdError {
    TcdError::config(key, msg)
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_min_ms > 0.0) {
            return Err(bad("W_min", "must be positive"));
        }
        if self.w_max_ms < self.w_min_ms {
            return Err(bad("W_max", "must be >= W_min"));
        }
        if !(self.lambda_min >= 0.0) {
            return Err(bad("lambda_min", "must be non-negative"));
        }
        if self.lambda_max < self.lambda_min {
            return Err(bad("lambda_max", "must be >= lambda_min"));
        }
        if self.k_orig < 1 {
            return Err(bad("K_orig", "must be >= 1"));
        }
        if self.k_blur < 1 {
            return Err(bad("K_blur", "must be >= 1"));
        }
        if self.k_ent < 2 {
            return Err(bad("K_ent", "must be >= 2"));
        }
        if !(self.gamma_gate >= 0.0) {
            return Err(bad("gamma_gate", "must be non-negative"));
        }
        if !(self.alpha >= 0.0) {
            return Err(bad("alpha", "must be non-negative"));
        }
        if !self.tau.is_finite() {
            return Err(bad("tau", "must be finite"));
        }
        if self.l_attn < 1 {
            return Err(bad("L_attn", "must be >= 1"));
        }
        if !(self.epsilon > 0.0) {
            return Err(bad("epsilon", "must be positive"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(bad("noise_sigma", "must be non-negative"));
        }
        Ok(())
    }

    /// Apply one `key=value` override. Keys use the ASCII hyperparameter
    /// names that also appear in config files and trace headers.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<()> {
        fn real(key: &str, value: &str) -> Result<f64> {
            value
                .parse()
                .map_err(|_| bad(key, format!("not a number: {value:?}")))
        }
        fn count(key: &str, value: &str) -> Result<usize> {
            value
                .parse()
                .map_err(|_| bad(key, format!("not a non-negative integer: {value:?}")))
        }
        match key {
            "W_min" => self.w_min_ms = real(key, value)?,
            "W_max" => self.w_max_ms = real(key, value)?,
            "lambda_min" => self.lambda_min = real(key, value)?,
            "lambda_max" => self.lambda_max = real(key, value)?,
            "K_orig" => self.k_orig = count(key, value)?,
            "K_blur" => self.k_blur = count(key, value)?,
            "K_ent" => self.k_ent = count(key, value)?,
            "gamma_gate" => self.gamma_gate = real(key, value)?,
            "alpha" => self.alpha = real(key, value)?,
            "tau" => self.tau = real(key, value)?,
            "L_attn" => self.l_attn = count(key, value)?,
            "epsilon" => self.epsilon = real(key, value)?,
            "strategy" => self.strategy = Strategy::parse(value)?,
            "slow_path" => self.slow_path = SlowPath::parse(value)?,
            "noise_sigma" => self.noise_sigma = real(key, value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| bad(key, format!("not a non-negative integer: {value:?}")))?
            }
            other => return Err(bad(other, "unknown configuration key")),
        }
        Ok(())
    }

    /// Fixed-order pairs used by both the text form and trace headers.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("W_min", format!("{:?}", self.w_min_ms)),
            ("W_max", format!("{:?}", self.w_max_ms)),
            ("lambda_min", format!("{:?}", self.lambda_min)),
            ("lambda_max", format!("{:?}", self.lambda_max)),
            ("K_orig", self.k_orig.to_string()),
            ("K_blur", self.k_blur.to_string()),
            ("K_ent", self.k_ent.to_string()),
            ("gamma_gate", format!("{:?}", self.gamma_gate)),
            ("alpha", format!("{:?}", self.alpha)),
            ("tau", format!("{:?}", self.tau)),
            ("L_attn", self.l_attn.to_string()),
            ("epsilon", format!("{:?}", self.epsilon)),
            ("strategy", self.strategy.name().to_string()),
            ("slow_path", self.slow_path.name().to_string()),
            ("noise_sigma", format!("{:?}", self.noise_sigma)),
            ("seed", self.seed.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    /// Parse a config file body: defaults overlaid with `key=value` lines.
    /// Unknown keys, malformed values, and inconsistent bounds are rejected.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = DecodeConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                TcdError::format(format!("line {}: expected key=value", lineno + 1))
            })?;
            cfg.set_key(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_hold_the_documented_values() {
        let c = DecodeConfig::default();
        assert_eq!(c.w_min_ms, 8.0);
        assert_eq!(c.w_max_ms, 30.0);
        assert_eq!(c.lambda_min, 0.3);
        assert_eq!(c.lambda_max, 1.5);
        assert_eq!(c.k_orig, 16);
        assert_eq!(c.k_blur, 8);
        assert_eq!(c.k_ent, 5);
        assert_eq!(c.gamma_gate, 2.0);
        assert_eq!(c.alpha, 0.5);
        assert_eq!(c.tau, 4.0);
        assert_eq!(c.l_attn, 4);
        assert_eq!(c.epsilon, 1e-6);
        assert_eq!(c.strategy, Strategy::Tcd);
        assert_eq!(c.slow_path, SlowPath::Waveform);
        c.validate().unwrap();
    }

    #[test]
    fn text_roundtrip_is_exact() {
        let mut c = DecodeConfig::default();
        c.set_key("gamma_gate", "0").unwrap();
        c.set_key("strategy", "tcd_signed").unwrap();
        c.set_key("epsilon", "1e-9").unwrap();
        let text = c.to_text();
        let reparsed = DecodeConfig::from_text(&text).unwrap();
        assert_eq!(c, reparsed);
        assert_eq!(text, reparsed.to_text());
    }

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(DecodeConfig::from_text("").unwrap(), DecodeConfig::default());
    }

    #[test]
    fn unknown_and_malformed_keys_are_rejected_by_name() {
        let err = DecodeConfig::from_text("gammma=2\n").unwrap_err().to_string();
        assert!(err.contains("gammma"), "got: {err}");
        let err = DecodeConfig::from_text("tau=abc\n").unwrap_err().to_string();
        assert!(err.contains("tau"), "got: {err}");
    }

    #[test]
    fn inverted_window_bounds_are_rejected() {
        let err = DecodeConfig::from_text("W_min=40\n").unwrap_err().to_string();
        assert!(err.contains("W_max"), "got: {err}");
    }

    #[test]
    fn all_strategies_parse() {
        for s in Strategy::ALL {
            assert_eq!(Strategy::parse(s.name()).unwrap(), s);
        }
        assert!(Strategy::parse("tdc").is_err());
    }
}
