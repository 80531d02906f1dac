//! Global and local compatibility scores and their fusions.
//!
//! Image-text compatibility (ITC) compares the image with the candidate
//! caption; text-text compatibility (TTC) compares human references with the
//! candidate. Each comes in a global flavour (one embedding per side) and a
//! local flavour (region / phrase sets matched by precision and recall).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ScoreError;
use crate::model::{Embedding, EvalBundle};
use crate::parallel::{self, Execution};
use crate::similarity::{clamp01, cosine, harmonic_mean, set_precision, set_recall, SimMatrix};

/// Precision, recall and their harmonic mean for one set-to-set comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalScore {
    pub precision: f64,
    pub recall: f64,
    pub fused: f64,
}

impl LocalScore {
    pub fn from_matrix(s: &SimMatrix) -> Self {
        let precision = set_precision(s);
        let recall = set_recall(s);
        Self {
            precision,
            recall,
            fused: harmonic_mean(&[precision, recall]),
        }
    }
}

/// Every component score for one bundle. Reference fields are `None` for
/// reference-free scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub g_itc: f64,
    pub l_itc_precision: f64,
    pub l_itc_recall: f64,
    pub l_itc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_ttc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_ttc_precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_ttc_recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_ttc: Option<f64>,
    pub hice: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_hice: Option<f64>,
}

/// Which single number an ablation run reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    GlobalOnly,
    LocalOnly,
    Fused,
}

impl AblationMode {
    pub fn pick(self, breakdown: &ScoreBreakdown) -> f64 {
        match self {
            AblationMode::GlobalOnly => breakdown.g_itc,
            AblationMode::LocalOnly => breakdown.l_itc,
            AblationMode::Fused => breakdown.hice,
        }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AblationMode::GlobalOnly => "global_only",
            AblationMode::LocalOnly => "local_only",
            AblationMode::Fused => "fused",
        })
    }
}

impl FromStr for AblationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "global_only" => Ok(AblationMode::GlobalOnly),
            "local_only" => Ok(AblationMode::LocalOnly),
            "fused" => Ok(AblationMode::Fused),
            other => Err(format!("unknown ablation mode `{other}`")),
        }
    }
}

fn region_embeddings(b: &EvalBundle) -> Vec<&Embedding> {
    b.regions.iter().map(|r| &r.embedding).collect()
}

fn candidate_phrase_embeddings(b: &EvalBundle) -> Vec<&Embedding> {
    b.candidate.phrases.iter().map(|p| &p.embedding).collect()
}

/// Similarity matrix with regions as rows and candidate phrases as columns.
pub fn region_phrase_matrix(b: &EvalBundle) -> Result<SimMatrix, ScoreError> {
    SimMatrix::between(&region_embeddings(b), &candidate_phrase_embeddings(b))
}

pub fn global_itc(b: &EvalBundle) -> Result<f64, ScoreError> {
    Ok(clamp01(cosine(&b.image_global, &b.candidate.global)?))
}

/// Best clamped cosine between the candidate sentence and any reference.
pub fn global_ttc(b: &EvalBundle) -> Result<f64, ScoreError> {
    if b.references.is_empty() {
        return Err(ScoreError::NoReferences);
    }
    let mut best = 0.0f64;
    for r in &b.references {
        best = best.max(clamp01(cosine(&r.global, &b.candidate.global)?));
    }
    Ok(best)
}

pub fn local_itc(b: &EvalBundle) -> Result<LocalScore, ScoreError> {
    Ok(LocalScore::from_matrix(&region_phrase_matrix(b)?))
}

/// Local TTC over the pooled phrases of all references.
pub fn local_ttc(b: &EvalBundle) -> Result<LocalScore, ScoreError> {
    if b.references.is_empty() {
        return Err(ScoreError::NoReferences);
    }
    let pool: Vec<&Embedding> = b
        .references
        .iter()
        .flat_map(|r| r.phrases.iter().map(|p| &p.embedding))
        .collect();
    let s = SimMatrix::between(&pool, &candidate_phrase_embeddings(b))?;
    Ok(LocalScore::from_matrix(&s))
}

/// Reference-free breakdown. References in the bundle are ignored.
pub fn hice_score(b: &EvalBundle) -> Result<ScoreBreakdown, ScoreError> {
    let g_itc = global_itc(b)?;
    let local = local_itc(b)?;
    Ok(ScoreBreakdown {
        g_itc,
        l_itc_precision: local.precision,
        l_itc_recall: local.recall,
        l_itc: local.fused,
        g_ttc: None,
        l_ttc_precision: None,
        l_ttc_recall: None,
        l_ttc: None,
        hice: harmonic_mean(&[g_itc, local.fused]),
        ref_hice: None,
    })
}

/// Full breakdown including the reference-based terms.
pub fn ref_hice_score(b: &EvalBundle) -> Result<ScoreBreakdown, ScoreError> {
    if b.references.is_empty() {
        return Err(ScoreError::NoReferences);
    }
    let mut out = hice_score(b)?;
    let g_ttc = global_ttc(b)?;
    let local = local_ttc(b)?;
    out.g_ttc = Some(g_ttc);
    out.l_ttc_precision = Some(local.precision);
    out.l_ttc_recall = Some(local.recall);
    out.l_ttc = Some(local.fused);
    out.ref_hice = Some(harmonic_mean(&[out.g_itc, out.l_itc, g_ttc, local.fused]));
    Ok(out)
}

/// Reference-based breakdown when the bundle has references, reference-free otherwise.
pub fn breakdown(b: &EvalBundle) -> Result<ScoreBreakdown, ScoreError> {
    if b.references.is_empty() {
        hice_score(b)
    } else {
        ref_hice_score(b)
    }
}

pub fn ablation_score(b: &EvalBundle, mode: AblationMode) -> Result<f64, ScoreError> {
    Ok(mode.pick(&hice_score(b)?))
}

/// Scores a batch, returning results in input order.
pub fn score_batch(
    bundles: &[EvalBundle],
    with_references: bool,
    exec: Execution,
) -> Vec<Result<ScoreBreakdown, ScoreError>> {
    parallel::map(exec, bundles, |b| {
        if with_references {
            ref_hice_score(b)
        } else {
            hice_score(b)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::Embedding;

    #[test]
    fn worked_bundle_scores() {
        let b = worked_bundle();
        let s = hice_score(&b).unwrap();
        assert!((s.g_itc - 0.6).abs() < 1e-12);
        assert!((s.l_itc_precision - 0.85355).abs() < 1e-4);
        assert!((s.l_itc_recall - 0.85355).abs() < 1e-4);
        assert!((s.l_itc - 0.85355).abs() < 1e-4);
        assert!((s.hice - 0.70466).abs() < 1e-4);
        assert!(s.ref_hice.is_none() && s.g_ttc.is_none());

        assert!((ablation_score(&b, AblationMode::GlobalOnly).unwrap() - 0.6).abs() < 1e-12);
        assert!((ablation_score(&b, AblationMode::LocalOnly).unwrap() - 0.85355).abs() < 1e-4);
        assert_eq!(ablation_score(&b, AblationMode::Fused).unwrap(), s.hice);
    }

    #[test]
    fn global_itc_examples() {
        let mut b = worked_bundle();
        b.candidate.global = b.image_global.clone();
        assert_eq!(global_itc(&b).unwrap(), 1.0);
        b.candidate.global = Embedding::new(vec![1.0, 0.0, 0.0]);
        assert_eq!(global_itc(&b).unwrap(), 0.0);
        b.image_global = Embedding::new(vec![1.0, 1.0, 0.0]);
        assert!((global_itc(&b).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn global_ttc_takes_best_reference() {
        let mut b = worked_bundle();
        assert_eq!(global_ttc(&b), Err(ScoreError::NoReferences));
        b.candidate.global = Embedding::new(vec![1.0, 0.0, 0.0]);
        b.references = vec![
            side("r", vec![0.3, 0.91f64.sqrt(), 0.0], vec![]),
            side("r", vec![0.8, 0.6, 0.0], vec![]),
        ];
        assert!((global_ttc(&b).unwrap() - 0.8).abs() < 1e-12);

        b.references = vec![side("r", vec![1.0, 0.0, 0.0], vec![])];
        assert_eq!(global_ttc(&b).unwrap(), 1.0);
        b.references = vec![
            side("r", vec![0.0, 1.0, 0.0], vec![]),
            side("s", vec![0.0, 0.0, 1.0], vec![]),
        ];
        assert_eq!(global_ttc(&b).unwrap(), 0.0);
    }

    #[test]
    fn local_itc_edge_cases() {
        let mut b = worked_bundle();
        b.regions.truncate(1);
        b.candidate.phrases.truncate(1);
        let l = local_itc(&b).unwrap();
        assert_eq!((l.precision, l.recall, l.fused), (1.0, 1.0, 1.0));

        b.candidate.phrases[0].embedding = Embedding::new(vec![0.0, 1.0, 0.0]);
        let l = local_itc(&b).unwrap();
        assert_eq!((l.precision, l.recall, l.fused), (0.0, 0.0, 0.0));
    }

    #[test]
    fn local_ttc_examples() {
        let mut b = worked_bundle();
        b.candidate.phrases.truncate(1); // {e1}
        b.references = vec![
            side(
                "a",
                vec![1.0, 0.0, 0.0],
                vec![phrase("x", vec![1.0, 0.0, 0.0])],
            ),
            side(
                "b",
                vec![0.0, 1.0, 0.0],
                vec![phrase("y", vec![0.0, 1.0, 0.0])],
            ),
        ];
        let l = local_ttc(&b).unwrap();
        assert_eq!(l.precision, 1.0);
        assert_eq!(l.recall, 0.5);
        assert!((l.fused - 0.66667).abs() < 1e-5);

        b.references = vec![side(
            "a",
            vec![1.0, 0.0, 0.0],
            vec![phrase("x", vec![1.0, 0.0, 0.0])],
        )];
        let l = local_ttc(&b).unwrap();
        assert_eq!((l.precision, l.recall, l.fused), (1.0, 1.0, 1.0));

        b.references = vec![side(
            "a",
            vec![1.0, 0.0, 0.0],
            vec![phrase("x", vec![0.0, 0.0, 1.0])],
        )];
        let l = local_ttc(&b).unwrap();
        assert_eq!((l.precision, l.recall, l.fused), (0.0, 0.0, 0.0));
    }

    #[test]
    fn ref_hice_fuses_four_terms() {
        let mut b = worked_bundle();
        assert_eq!(ref_hice_score(&b), Err(ScoreError::NoReferences));
        b.references = vec![side(
            "ref",
            vec![0.0, 0.8, 0.6],
            vec![phrase("x", vec![1.0, 0.0, 0.0])],
        )];
        let s = ref_hice_score(&b).unwrap();
        let expected = harmonic_mean(&[s.g_itc, s.l_itc, s.g_ttc.unwrap(), s.l_ttc.unwrap()]);
        assert_eq!(s.ref_hice, Some(expected));
        assert_eq!(s.g_ttc, Some(1.0));
        // reference-free part untouched
        assert_eq!(s.hice, hice_score(&b.without_references()).unwrap().hice);
    }

    #[test]
    fn zero_component_vetoes_fusion() {
        let mut b = worked_bundle();
        b.candidate.phrases = vec![phrase("p", vec![0.0, 0.0, 1.0])];
        let s = hice_score(&b).unwrap();
        assert_eq!(s.l_itc, 0.0);
        assert_eq!(s.hice, 0.0);
    }

    #[test]
    fn batch_preserves_order() {
        let mut other = worked_bundle();
        other.candidate.global = Embedding::new(vec![0.0, 0.0, 1.0]);
        let bundles = vec![worked_bundle(), other.clone(), worked_bundle()];
        let seq = score_batch(&bundles, false, Execution::Sequential);
        let par = score_batch(&bundles, false, Execution::Parallel);
        assert_eq!(seq, par);
        assert_eq!(seq[1].as_ref().unwrap(), &hice_score(&other).unwrap());
    }

    #[test]
    fn ablation_mode_parse_roundtrip() {
        for m in [
            AblationMode::GlobalOnly,
            AblationMode::LocalOnly,
            AblationMode::Fused,
        ] {
            assert_eq!(m.to_string().parse::<AblationMode>().unwrap(), m);
        }
        assert!("both".parse::<AblationMode>().is_err());
    }
}
