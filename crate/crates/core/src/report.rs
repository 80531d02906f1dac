//! Per-phrase and per-region interpretability reports.
//!
//! A phrase's score is its best similarity to any region (its precision
//! contribution); a region's score is its best similarity to any phrase (its
//! recall contribution). Scores above the threshold flag the phrase as
//! correct or the region as mentioned.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::ReportError;
use crate::model::EvalBundle;
use crate::parallel::{self, Execution};
use crate::scoring::{breakdown, region_phrase_matrix, ScoreBreakdown};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhraseFlag {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionFlag {
    Mentioned,
    Unmentioned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseVerdict {
    pub phrase_index: usize,
    pub text: String,
    pub score: f64,
    pub flag: PhraseFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionVerdict {
    pub region_id: String,
    pub score: f64,
    pub flag: RegionFlag,
    /// Best-matching phrase, lowest index on ties; only for mentioned regions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_phrase_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretReport {
    pub bundle_id: String,
    pub threshold: f64,
    pub breakdown: ScoreBreakdown,
    pub phrases: Vec<PhraseVerdict>,
    pub regions: Vec<RegionVerdict>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    /// Pretty-printed JSON, lossless.
    #[default]
    Structured,
    Markdown,
}

pub fn build_report(b: &EvalBundle, threshold: f64) -> Result<InterpretReport, ReportError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ReportError::Threshold(threshold));
    }
    let breakdown = breakdown(b)?;
    let s = region_phrase_matrix(b)?;

    let phrases = b
        .candidate
        .phrases
        .iter()
        .zip(s.column_maxima())
        .enumerate()
        .map(|(m, (p, score))| PhraseVerdict {
            phrase_index: m,
            text: p.text.clone(),
            score,
            flag: if score > threshold {
                PhraseFlag::Correct
            } else {
                PhraseFlag::Incorrect
            },
        })
        .collect();

    let regions = b
        .regions
        .iter()
        .zip(s.row_maxima())
        .enumerate()
        .map(|(n, (r, score))| {
            let mentioned = score > threshold;
            RegionVerdict {
                region_id: r.region_id.clone(),
                score,
                flag: if mentioned {
                    RegionFlag::Mentioned
                } else {
                    RegionFlag::Unmentioned
                },
                matched_phrase_index: mentioned.then(|| s.row_argmax(n)),
            }
        })
        .collect();

    Ok(InterpretReport {
        bundle_id: b.bundle_id.clone(),
        threshold,
        breakdown,
        phrases,
        regions,
    })
}

/// Builds reports for many bundles, results in input order.
pub fn build_reports(
    bundles: &[EvalBundle],
    threshold: f64,
    exec: Execution,
) -> Vec<Result<InterpretReport, ReportError>> {
    parallel::map(exec, bundles, |b| build_report(b, threshold))
}

fn fmt_score(v: f64) -> String {
    format!("{v:.4}")
}

fn escape_cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

fn render_markdown(r: &InterpretReport) -> String {
    let b = &r.breakdown;
    let mut out = String::new();
    let _ = writeln!(out, "# Caption report: {}\n", escape_cell(&r.bundle_id));
    let _ = writeln!(out, "Threshold: {}\n", r.threshold);
    out.push_str("## Scores\n\n| component | value |\n|---|---|\n");
    let mut rows: Vec<(&str, f64)> = vec![
        ("gITC", b.g_itc),
        ("lITC precision", b.l_itc_precision),
        ("lITC recall", b.l_itc_recall),
        ("lITC", b.l_itc),
    ];
    let ttc = [
        ("gTTC", b.g_ttc),
        ("lTTC precision", b.l_ttc_precision),
        ("lTTC recall", b.l_ttc_recall),
        ("lTTC", b.l_ttc),
    ];
    rows.extend(ttc.iter().filter_map(|(k, v)| v.map(|v| (*k, v))));
    rows.push(("HICE", b.hice));
    if let Some(v) = b.ref_hice {
        rows.push(("RefHICE", v));
    }
    for (k, v) in rows {
        let _ = writeln!(out, "| {k} | {} |", fmt_score(v));
    }

    out.push_str("\n## Phrases\n\n| # | phrase | score | verdict |\n|---|---|---|---|\n");
    for p in &r.phrases {
        let verdict = match p.flag {
            PhraseFlag::Correct => "correct",
            PhraseFlag::Incorrect => "incorrect",
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {verdict} |",
            p.phrase_index,
            escape_cell(&p.text),
            fmt_score(p.score)
        );
    }

    out.push_str(
        "\n## Regions\n\n| region | score | verdict | matched phrase |\n|---|---|---|---|\n",
    );
    for g in &r.regions {
        let (verdict, matched) = match (g.flag, g.matched_phrase_index) {
            (RegionFlag::Mentioned, Some(m)) => {
                let text = r
                    .phrases
                    .get(m)
                    .map(|p| escape_cell(&p.text))
                    .unwrap_or_default();
                ("mentioned", format!("{m}: {text}"))
            }
            (RegionFlag::Mentioned, None) => ("mentioned", String::new()),
            (RegionFlag::Unmentioned, _) => ("unmentioned", "-".to_string()),
        };
        let _ = writeln!(
            out,
            "| {} | {} | {verdict} | {matched} |",
            escape_cell(&g.region_id),
            fmt_score(g.score)
        );
    }
    out
}

pub fn render_report(r: &InterpretReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Structured => {
            let mut s = serde_json::to_string_pretty(r).expect("report is serializable");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => render_markdown(r),
    }
}
