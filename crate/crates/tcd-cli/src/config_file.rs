//! Decode-config files: flat `key=value` lines over the built-in defaults.

use std::fs;
use std::path::Path;

use tcd_core::config::DecodeConfig;
use tcd_core::error::{Result, TcdError};

/// Apply `key=value` lines (`#` comments, blank lines allowed) on top of an
/// existing config. Unknown keys are rejected with the offending name.
pub fn apply_config_lines(config: &mut DecodeConfig, text: &str) -> Result<()> {
    for (i, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            TcdError::format(format!("line {}: expected key=value, got {line:?}", i + 1))
        })?;
        config.set_key(key.trim(), value.trim())?;
    }
    Ok(())
}

/// Defaults, then the optional file, then explicit overrides, validated.
pub fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<DecodeConfig> {
    let mut config = DecodeConfig::default();
    if let Some(path) = path {
        let text = fs::read_to_string(path)?;
        apply_config_lines(&mut config, &text)?;
    }
    for (key, value) in overrides {
        config.set_key(key, value)?;
    }
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tcd_core::config::Strategy;

    #[test]
    fn no_file_and_no_overrides_gives_defaults() {
        let config = load_config(None, &[]).unwrap();
        assert_eq!(config, DecodeConfig::default());
        assert_eq!(config.l_attn, 4);
        assert_eq!(config.tau, 4.0);
        assert_eq!(config.w_min_ms, 8.0);
        assert_eq!(config.w_max_ms, 30.0);
        assert_eq!(config.lambda_min, 0.3);
        assert_eq!(config.lambda_max, 1.5);
        assert_eq!(config.k_orig, 16);
        assert_eq!(config.k_blur, 8);
        assert_eq!(config.gamma_gate, 2.0);
        assert_eq!(config.alpha, 0.5);
        assert_eq!(config.k_ent, 5);
        assert_eq!(config.epsilon, 1e-6);
    }

    #[test]
    fn file_then_overrides_apply_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("decode.cfg");
        fs::write(&path, "# turn the gate off\ngamma_gate=0\nstrategy=tcd_signed\n").unwrap();
        let overrides = vec![("strategy".to_string(), "tcd".to_string())];
        let config = load_config(Some(&path), &overrides).unwrap();
        assert_eq!(config.gamma_gate, 0.0);
        assert_eq!(config.strategy, Strategy::Tcd);
    }

    #[test]
    fn unknown_keys_and_bad_ranges_are_named() {
        let mut config = DecodeConfig::default();
        let err = apply_config_lines(&mut config, "mystery=1\n").unwrap_err();
        assert!(err.to_string().contains("mystery"));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cfg");
        fs::write(&path, "W_min=50.0\nW_max=10.0\n").unwrap();
        let err = load_config(Some(&path), &[]).unwrap_err();
        assert!(err.to_string().contains("W_m"), "got: {err}");
    }
}
