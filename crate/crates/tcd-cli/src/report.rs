//! Roll-up of a batch run: one row per (case × strategy) plus per-strategy
//! summaries, rendered as CSV and as an aligned text table. All numeric
//! fields print with fixed precision so identical runs produce identical
//! bytes.

use tcd_core::config::Strategy;
use tcd_core::error::{Result, TcdError};
use tcd_core::vocab::{detokenize, TokenId};

/// Outcome of decoding one case under one strategy.
#[derive(Debug, Clone)]
pub struct CaseRow {
    pub case: String,
    pub strategy: Strategy,
    /// Generated tokens with the trailing stop token stripped.
    pub answer: Vec<TokenId>,
    pub expected: Vec<TokenId>,
    /// Answer starts with the expected tokens.
    pub correct: bool,
    /// Fraction of steps whose gate was effectively open (> 1e-12).
    pub gate_rate: f64,
    /// Mean candidate-set size over steps (0 for baseline).
    pub mean_candidates: f64,
    /// Failure message if this run errored; such rows are never correct.
    pub error: Option<String>,
    /// Rendered trace text for successful runs.
    pub trace: Option<String>,
}

/// Aggregates for one strategy across every case in the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub cases: usize,
    pub correct: usize,
    pub errors: usize,
    /// correct / cases; errored cases count as incorrect.
    pub accuracy: f64,
    /// Means over the cases that ran without error.
    pub mean_gate_rate: f64,
    pub mean_candidates: f64,
}

/// Everything a batch run produces, ready for rendering.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub rows: Vec<CaseRow>,
    pub summaries: Vec<StrategySummary>,
}

fn summarize(strategy: Strategy, rows: &[CaseRow]) -> StrategySummary {
    let mine: Vec<&CaseRow> = rows.iter().filter(|r| r.strategy == strategy).collect();
    let cases = mine.len();
    let correct = mine.iter().filter(|r| r.correct).count();
    let ran: Vec<&&CaseRow> = mine.iter().filter(|r| r.error.is_none()).collect();
    let mean = |f: fn(&CaseRow) -> f64| {
        if ran.is_empty() {
            0.0
        } else {
            ran.iter().map(|r| f(r)).sum::<f64>() / ran.len() as f64
        }
    };
    StrategySummary {
        strategy,
        cases,
        correct,
        errors: cases - ran.len(),
        accuracy: if cases == 0 {
            0.0
        } else {
            correct as f64 / cases as f64
        },
        mean_gate_rate: mean(|r| r.gate_rate),
        mean_candidates: mean(|r| r.mean_candidates),
    }
}

impl ComparisonReport {
    /// Build summaries from rows and cross-check them against an independent
    /// recount; `case_count` is the number of cases in the manifest.
    pub fn new(rows: Vec<CaseRow>, strategies: &[Strategy], case_count: usize) -> Result<Self> {
        let summaries: Vec<StrategySummary> =
            strategies.iter().map(|&s| summarize(s, &rows)).collect();
        let report = ComparisonReport { rows, summaries };
        report.verify(case_count)?;
        Ok(report)
    }

    /// Recount accuracy per strategy straight from the answer rows and fail
    /// if the stored summaries disagree or a count is off.
    pub fn verify(&self, case_count: usize) -> Result<()> {
        for summary in &self.summaries {
            let mut cases = 0usize;
            let mut correct = 0usize;
            for row in &self.rows {
                if row.strategy != summary.strategy {
                    continue;
                }
                cases += 1;
                let recheck = row.error.is_none()
                    && row.answer.len() >= row.expected.len()
                    && row.answer[..row.expected.len()] == row.expected[..];
                if recheck != row.correct {
                    return Err(TcdError::state(format!(
                        "row {}/{} marked correct={} but answers say {}",
                        row.case,
                        row.strategy.name(),
                        row.correct,
                        recheck
                    )));
                }
                if recheck {
                    correct += 1;
                }
            }
            if cases != case_count {
                return Err(TcdError::state(format!(
                    "strategy {} covers {cases} cases, manifest has {case_count}",
                    summary.strategy.name()
                )));
            }
            let accuracy = correct as f64 / case_count.max(1) as f64;
            if summary.cases != cases
                || summary.correct != correct
                || summary.accuracy != accuracy
            {
                return Err(TcdError::state(format!(
                    "summary for {} disagrees with recount ({}/{} vs {}/{})",
                    summary.strategy.name(),
                    summary.correct,
                    summary.cases,
                    correct,
                    cases
                )));
            }
            if !(0.0..=1.0).contains(&summary.accuracy) {
                return Err(TcdError::state("accuracy outside [0,1]"));
            }
        }
        Ok(())
    }

    pub fn any_error(&self) -> bool {
        self.rows.iter().any(|r| r.error.is_some())
    }

    /// Per-strategy CSV.
    pub fn report_csv(&self) -> String {
        let mut out =
            String::from("strategy,cases,correct,errors,accuracy,mean_gate_rate,mean_candidates\n");
        for s in &self.summaries {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},{:.6}\n",
                s.strategy.name(),
                s.cases,
                s.correct,
                s.errors,
                s.accuracy,
                s.mean_gate_rate,
                s.mean_candidates
            ));
        }
        out
    }

    /// Per-case CSV. Answers are vocabulary names; error text is flattened
    /// so rows stay one line.
    pub fn cases_csv(&self) -> String {
        let mut out =
            String::from("case,strategy,correct,answer,expected,gate_rate,mean_candidates,error\n");
        for r in &self.rows {
            let sanitize = |s: &str| s.replace(['\n', '\r'], " ").replace(',', ";");
            out.push_str(&format!(
                "{},{},{},{},{},{:.6},{:.6},{}\n",
                r.case,
                r.strategy.name(),
                r.correct,
                sanitize(&detokenize(&r.answer)),
                sanitize(&detokenize(&r.expected)),
                r.gate_rate,
                r.mean_candidates,
                sanitize(r.error.as_deref().unwrap_or(""))
            ));
        }
        out
    }

    /// Both sections as one aligned, human-readable table.
    pub fn text_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<14} {:>5} {:>7} {:>6} {:>9} {:>10} {:>11}\n",
            "strategy", "cases", "correct", "errors", "accuracy", "gate-rate", "candidates"
        ));
        for s in &self.summaries {
            out.push_str(&format!(
                "{:<14} {:>5} {:>7} {:>6} {:>9.3} {:>10.3} {:>11.2}\n",
                s.strategy.name(),
                s.cases,
                s.correct,
                s.errors,
                s.accuracy,
                s.mean_gate_rate,
                s.mean_candidates
            ));
        }
        out.push('\n');
        let name_w = self
            .rows
            .iter()
            .map(|r| r.case.len())
            .max()
            .unwrap_or(4)
            .max(4);
        out.push_str(&format!(
            "{:<name_w$} {:<14} {:<3} {:<18} {:<10} note\n",
            "case", "strategy", "ok", "answer", "expected"
        ));
        for r in &self.rows {
            let note = r.error.as_deref().unwrap_or("");
            out.push_str(&format!(
                "{:<name_w$} {:<14} {:<3} {:<18} {:<10} {}\n",
                r.case,
                r.strategy.name(),
                if r.correct { "yes" } else { "no" },
                detokenize(&r.answer),
                detokenize(&r.expected),
                note.replace(['\n', '\r'], " ")
            ));
        }
        out
    }
}
