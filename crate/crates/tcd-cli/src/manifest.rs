//! Flat text manifests describing a batch of decoding cases.
//!
//! Format, one item per line, `#` starts a comment:
//!
//! ```text
//! out=results                  # output directory (default tcd-out; --out wins)
//! seed=3                       # decoding seed, shorthand for config.seed
//! model_seed=7                 # toy-model weight seed (default 0)
//! max_tokens=8                 # decode budget per case (default 8)
//! strategies=baseline,tcd      # strategies to compare (default baseline,tcd)
//! config.gamma_gate=2.0        # any decode-config key, applied over the base
//! case=NAME|script:PATH|PROMPT WORDS|EXPECTED WORDS
//! case=NAME|wav:PATH|PROMPT WORDS|EXPECTED WORDS
//! ```
//!
//! Audio paths are resolved against the manifest's directory; the output
//! directory is resolved against the invoking directory. Prompts and expected
//! answers are whitespace-separated vocabulary names.

use std::fs;
use std::path::{Path, PathBuf};

use tcd_core::config::Strategy;
use tcd_core::error::{Result, TcdError};
use tcd_core::vocab::{self, TokenId};

/// Where a case's audio comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AudioSource {
    /// Event-script text rendered by the synthesizer.
    Script(PathBuf),
    /// Mono 16-bit PCM WAV file.
    Wav(PathBuf),
}

/// One named decoding task: audio, prompt, and the answer prefix that counts
/// as correct.
#[derive(Debug, Clone)]
pub struct CaseSpec {
    pub name: String,
    pub audio: AudioSource,
    pub prompt: Vec<TokenId>,
    pub expected: Vec<TokenId>,
}

/// A parsed experiment manifest.
#[derive(Debug, Clone)]
pub struct ExperimentManifest {
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub model_seed: u64,
    pub max_tokens: usize,
    pub strategies: Vec<Strategy>,
    /// Decode-config keys applied over the base config, in file order.
    pub overrides: Vec<(String, String)>,
    pub cases: Vec<CaseSpec>,
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| TcdError::config(key, format!("not a valid number: {value:?}")))
}

fn valid_case_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn parse_case(value: &str, base_dir: &Path, line_no: usize) -> Result<CaseSpec> {
    let parts: Vec<&str> = value.split('|').collect();
    if parts.len() != 4 {
        return Err(TcdError::format(format!(
            "line {line_no}: case needs 4 |-separated fields (name|audio|prompt|expected), got {}",
            parts.len()
        )));
    }
    let name = parts[0].trim();
    if !valid_case_name(name) {
        return Err(TcdError::format(format!(
            "line {line_no}: case name {name:?} must be non-empty [A-Za-z0-9_-]"
        )));
    }
    let audio_field = parts[1].trim();
    let resolve = |p: &str| {
        let path = PathBuf::from(p);
        if path.is_absolute() {
            path
        } else {
            base_dir.join(path)
        }
    };
    let audio = if let Some(p) = audio_field.strip_prefix("script:") {
        AudioSource::Script(resolve(p))
    } else if let Some(p) = audio_field.strip_prefix("wav:") {
        AudioSource::Wav(resolve(p))
    } else {
        return Err(TcdError::format(format!(
            "line {line_no}: audio field must start with script: or wav:, got {audio_field:?}"
        )));
    };
    let prompt = vocab::tokenize(parts[2].trim())
        .map_err(|e| TcdError::format(format!("line {line_no}: prompt: {e}")))?;
    if prompt.is_empty() {
        return Err(TcdError::format(format!("line {line_no}: empty prompt")));
    }
    let expected = vocab::tokenize(parts[3].trim())
        .map_err(|e| TcdError::format(format!("line {line_no}: expected answer: {e}")))?;
    if expected.is_empty() {
        return Err(TcdError::format(format!(
            "line {line_no}: empty expected answer"
        )));
    }
    Ok(CaseSpec {
        name: name.to_string(),
        audio,
        prompt,
        expected,
    })
}

impl ExperimentManifest {
    pub fn from_text(text: &str, base_dir: &Path) -> Result<Self> {
        let mut manifest = ExperimentManifest {
            out_dir: PathBuf::from("tcd-out"),
            seed: None,
            model_seed: 0,
            max_tokens: 8,
            strategies: vec![Strategy::Baseline, Strategy::Tcd],
            overrides: Vec::new(),
            cases: Vec::new(),
        };
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                TcdError::format(format!("line {line_no}: expected key=value, got {line:?}"))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "out" => {
                    if value.is_empty() {
                        return Err(TcdError::format(format!("line {line_no}: empty out path")));
                    }
                    manifest.out_dir = PathBuf::from(value);
                }
                "seed" => manifest.seed = Some(parse_num(key, value)?),
                "model_seed" => manifest.model_seed = parse_num(key, value)?,
                "max_tokens" => {
                    manifest.max_tokens = parse_num(key, value)?;
                    if manifest.max_tokens == 0 {
                        return Err(TcdError::config("max_tokens", "must be >= 1"));
                    }
                }
                "strategies" => {
                    let parsed: Result<Vec<Strategy>> =
                        value.split(',').map(|s| Strategy::parse(s.trim())).collect();
                    manifest.strategies = parsed?;
                    if manifest.strategies.is_empty() {
                        return Err(TcdError::format(format!(
                            "line {line_no}: empty strategy list"
                        )));
                    }
                }
                "case" => manifest.cases.push(parse_case(value, base_dir, line_no)?),
                _ => {
                    if let Some(cfg_key) = key.strip_prefix("config.") {
                        manifest
                            .overrides
                            .push((cfg_key.to_string(), value.to_string()));
                    } else {
                        return Err(TcdError::format(format!(
                            "line {line_no}: unknown manifest key {key:?}"
                        )));
                    }
                }
            }
        }
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_text(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cases.is_empty() {
            return Err(TcdError::format("manifest has no cases"));
        }
        for (i, a) in self.cases.iter().enumerate() {
            for b in &self.cases[i + 1..] {
                if a.name == b.name {
                    return Err(TcdError::format(format!(
                        "duplicate case name {:?}",
                        a.name
                    )));
                }
            }
        }
        let mut seen = Vec::new();
        for s in &self.strategies {
            if seen.contains(s) {
                return Err(TcdError::format(format!(
                    "strategy {} listed twice",
                    s.name()
                )));
            }
            seen.push(*s);
        }
        Ok(())
    }
}
