//! Line-delimited step-trace files: a session header (config echo plus the
//! stability report), one record per decoding step, and a token summary.
//! Numeric fields print with 9 significant digits so reruns are
//! byte-identical; wall-clock timings are deliberately excluded.

use crate::engine::Transcript;
use crate::error::{Result, TcdError};
use crate::fusion::GateTrace;
use crate::stability::{LayerStability, StabilityReport};
use crate::vocab::TokenId;

const HEADER: &str = "# tcd trace v1";

fn real(v: f64) -> String {
    format!("{v:.8e}")
}

/// Render a finished transcript as the canonical trace text.
pub fn render_transcript(t: &Transcript) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    let pairs: Vec<String> = t
        .config
        .entries()
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    out.push_str(&format!("config {}\n", pairs.join(" ")));
    match &t.stability {
        None => out.push_str("stability none\n"),
        Some(report) => {
            out.push_str(&format!(
                "stability pooled={} window_ms={} lambda={}\n",
                real(report.pooled),
                real(report.window_ms),
                real(report.lambda)
            ));
            for (i, layer) in report.per_layer.iter().enumerate() {
                out.push_str(&format!(
                    "layer index={i} M={} F={} S={} w={}\n",
                    real(layer.magnitude),
                    real(layer.flux),
                    real(layer.stability),
                    real(layer.weight)
                ));
            }
        }
    }
    for step in &t.traces {
        let omega = if step.candidate_ids.is_empty() {
            "-".to_string()
        } else {
            step.candidate_ids
                .iter()
                .map(|id| id.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let bias = if step.applied_bias.is_empty() {
            "-".to_string()
        } else {
            step.applied_bias
                .iter()
                .map(|(id, v)| format!("{id}:{}", real(*v)))
                .collect::<Vec<_>>()
                .join(",")
        };
        out.push_str(&format!(
            "step index={} r={} entropy={} gate={} token={} omega={omega} bias={bias}\n",
            step.step_index,
            real(step.r_t),
            real(step.entropy_hat),
            real(step.gate),
            step.chosen_token
        ));
    }
    let tokens: Vec<String> = t.tokens.iter().map(|id| id.to_string()).collect();
    out.push_str(&format!("tokens {}\n", tokens.join(" ")));
    out.push_str(&format!("text {}\n", t.text));
    out
}

/// A trace file read back, at print precision.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub config: Vec<(String, String)>,
    pub stability: Option<StabilityReport>,
    pub steps: Vec<GateTrace>,
    pub tokens: Vec<TokenId>,
    pub text: String,
}

fn field<'a>(part: &'a str, key: &str, line: usize) -> Result<&'a str> {
    part.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| TcdError::format(format!("line {line}: expected {key}=...")))
}

fn parse_real(s: &str, line: usize) -> Result<f64> {
    s.parse()
        .map_err(|_| TcdError::format(format!("line {line}: bad number {s:?}")))
}

fn parse_id(s: &str, line: usize) -> Result<TokenId> {
    s.parse()
        .map_err(|_| TcdError::format(format!("line {line}: bad token id {s:?}")))
}

pub fn parse_trace(text: &str) -> Result<ParsedTrace> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l == HEADER => {}
        _ => return Err(TcdError::format("missing trace header")),
    }
    let mut config = Vec::new();
    let mut stability = None;
    let mut layers: Vec<LayerStability> = Vec::new();
    let mut pooled_line: Option<(f64, f64, f64)> = None;
    let mut steps = Vec::new();
    let mut tokens = Vec::new();
    let mut dump_text = String::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        let (kind, rest) = line.split_once(' ').unwrap_or((line, ""));
        match kind {
            "config" => {
                for pair in rest.split_whitespace() {
                    let (k, v) = pair.split_once('=').ok_or_else(|| {
                        TcdError::format(format!("line {line_no}: bad config pair {pair:?}"))
                    })?;
                    config.push((k.to_string(), v.to_string()));
                }
            }
            "stability" => {
                if rest == "none" {
                    stability = None;
                    pooled_line = None;
                } else {
                    let parts: Vec<&str> = rest.split_whitespace().collect();
                    if parts.len() != 3 {
                        return Err(TcdError::format(format!(
                            "line {line_no}: expected pooled/window_ms/lambda"
                        )));
                    }
                    pooled_line = Some((
                        parse_real(field(parts[0], "pooled", line_no)?, line_no)?,
                        parse_real(field(parts[1], "window_ms", line_no)?, line_no)?,
                        parse_real(field(parts[2], "lambda", line_no)?, line_no)?,
                    ));
                }
            }
            "layer" => {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 5 {
                    return Err(TcdError::format(format!(
                        "line {line_no}: expected 5 layer fields"
                    )));
                }
                layers.push(LayerStability {
                    magnitude: parse_real(field(parts[1], "M", line_no)?, line_no)?,
                    flux: parse_real(field(parts[2], "F", line_no)?, line_no)?,
                    stability: parse_real(field(parts[3], "S", line_no)?, line_no)?,
                    weight: parse_real(field(parts[4], "w", line_no)?, line_no)?,
                });
            }
            "step" => {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 7 {
                    return Err(TcdError::format(format!(
                        "line {line_no}: expected 7 step fields"
                    )));
                }
                let omega_text = field(parts[5], "omega", line_no)?;
                let candidate_ids = if omega_text == "-" {
                    Vec::new()
                } else {
                    omega_text
                        .split(',')
                        .map(|s| parse_id(s, line_no))
                        .collect::<Result<Vec<_>>>()?
                };
                let bias_text = field(parts[6], "bias", line_no)?;
                let applied_bias = if bias_text == "-" {
                    Vec::new()
                } else {
                    bias_text
                        .split(',')
                        .map(|pair| {
                            let (id, v) = pair.split_once(':').ok_or_else(|| {
                                TcdError::format(format!("line {line_no}: bad bias {pair:?}"))
                            })?;
                            Ok((parse_id(id, line_no)?, parse_real(v, line_no)?))
                        })
                        .collect::<Result<Vec<_>>>()?
                };
                steps.push(GateTrace {
                    step_index: field(parts[0], "index", line_no)?
                        .parse()
                        .map_err(|_| TcdError::format(format!("line {line_no}: bad index")))?,
                    r_t: parse_real(field(parts[1], "r", line_no)?, line_no)?,
                    entropy_hat: parse_real(field(parts[2], "entropy", line_no)?, line_no)?,
                    gate: parse_real(field(parts[3], "gate", line_no)?, line_no)?,
                    chosen_token: parse_id(field(parts[4], "token", line_no)?, line_no)?,
                    candidate_ids,
                    applied_bias,
                });
            }
            "tokens" => {
                tokens = rest
                    .split_whitespace()
                    .map(|s| parse_id(s, line_no))
                    .collect::<Result<Vec<_>>>()?;
            }
            "text" => dump_text = rest.to_string(),
            other => {
                return Err(TcdError::format(format!(
                    "line {line_no}: unknown record {other:?}"
                )))
            }
        }
    }
    if let Some((pooled, window_ms, lambda)) = pooled_line {
        stability = Some(StabilityReport {
            per_layer: layers,
            pooled,
            window_ms,
            lambda,
        });
    }
    Ok(ParsedTrace {
        config,
        stability,
        steps,
        tokens,
        text: dump_text,
    })
}
