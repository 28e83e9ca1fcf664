//! Batch execution: every (case × strategy) pair is decoded greedily on the
//! toy model, in parallel, and a single collector writes the artifacts in
//! manifest order so reruns are byte-identical.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use tcd_core::config::{DecodeConfig, Strategy};
use tcd_core::engine::generate;
use tcd_core::error::Result;
use tcd_core::model::toy::ToyModel;
use tcd_core::signal::{synth_event_audio, EventScript, Waveform};
use tcd_core::trace::render_transcript;
use tcd_core::vocab::EOS;
use tcd_core::wav::read_wav;

use crate::manifest::{AudioSource, CaseSpec, ExperimentManifest};
use crate::report::{CaseRow, ComparisonReport};

/// A step counts as gate-active when its gate exceeds this.
pub const GATE_ACTIVE_THRESHOLD: f64 = 1e-12;

/// Resolve the base config for a manifest: apply its `config.*` overrides,
/// then its `seed=` shorthand.
pub fn manifest_config(manifest: &ExperimentManifest, base: &DecodeConfig) -> Result<DecodeConfig> {
    let mut config = base.clone();
    for (key, value) in &manifest.overrides {
        config.set_key(key, value)?;
    }
    if let Some(seed) = manifest.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn load_audio(source: &AudioSource) -> Result<Waveform> {
    match source {
        AudioSource::Script(path) => {
            let text = fs::read_to_string(path)?;
            synth_event_audio(&EventScript::from_text(&text)?)
        }
        AudioSource::Wav(path) => read_wav(path),
    }
}

/// Decode one case under one strategy. Failures land in the row's `error`
/// field rather than aborting the batch.
pub fn run_case(
    model: &ToyModel,
    case: &CaseSpec,
    config: &DecodeConfig,
    strategy: Strategy,
    max_tokens: usize,
) -> CaseRow {
    let mut row = CaseRow {
        case: case.name.clone(),
        strategy,
        answer: Vec::new(),
        expected: case.expected.clone(),
        correct: false,
        gate_rate: 0.0,
        mean_candidates: 0.0,
        error: None,
        trace: None,
    };
    let mut config = config.clone();
    config.strategy = strategy;
    let audio = match load_audio(&case.audio) {
        Ok(a) => a,
        Err(e) => {
            row.error = Some(format!("audio: {e}"));
            return row;
        }
    };
    match generate(model, &audio, &case.prompt, config, max_tokens, Some(EOS)) {
        Ok(transcript) => {
            let answer = match transcript.tokens.split_last() {
                Some((&last, head)) if last == EOS => head.to_vec(),
                _ => transcript.tokens.clone(),
            };
            row.correct = answer.len() >= case.expected.len()
                && answer[..case.expected.len()] == case.expected[..];
            row.answer = answer;
            let steps = transcript.traces.len().max(1) as f64;
            row.gate_rate = transcript
                .traces
                .iter()
                .filter(|t| t.gate > GATE_ACTIVE_THRESHOLD)
                .count() as f64
                / steps;
            row.mean_candidates = transcript
                .traces
                .iter()
                .map(|t| t.candidate_ids.len() as f64)
                .sum::<f64>()
                / steps;
            row.trace = Some(render_transcript(&transcript));
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Run the whole manifest against `base` (defaults plus any config file).
/// Rows come back in manifest order: cases outermost, strategies inner.
pub fn run_experiment(
    manifest: &ExperimentManifest,
    base: &DecodeConfig,
) -> Result<ComparisonReport> {
    let config = manifest_config(manifest, base)?;
    let model = ToyModel::seeded(manifest.model_seed);
    let jobs: Vec<(&CaseSpec, Strategy)> = manifest
        .cases
        .iter()
        .flat_map(|case| manifest.strategies.iter().map(move |&s| (case, s)))
        .collect();
    let rows: Vec<CaseRow> = jobs
        .par_iter()
        .map(|&(case, strategy)| run_case(&model, case, &config, strategy, manifest.max_tokens))
        .collect();
    ComparisonReport::new(rows, &manifest.strategies, manifest.cases.len())
}

/// Write report.csv, cases.csv, report.txt, and one trace file per
/// successful row under `out_dir/traces/`.
pub fn write_outputs(report: &ComparisonReport, out_dir: &Path) -> Result<()> {
    let traces = out_dir.join("traces");
    fs::create_dir_all(&traces)?;
    fs::write(out_dir.join("report.csv"), report.report_csv())?;
    fs::write(out_dir.join("cases.csv"), report.cases_csv())?;
    fs::write(out_dir.join("report.txt"), report.text_table())?;
    for row in &report.rows {
        if let Some(trace) = &row.trace {
            let name = format!("{}__{}.trace", row.case, row.strategy.name());
            fs::write(traces.join(name), trace)?;
        }
    }
    Ok(())
}
