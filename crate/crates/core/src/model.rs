//! Domain types shared by every other module, and bundle validation.
//!
//! Types are plain data. They can hold invalid values (a zero vector, a
//! mismatched dimension) so that [`validate_bundle`] can describe what is
//! wrong instead of failing on the first problem.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::triplets::Triplet;

/// Region id given to the synthetic region inserted when a bundle has none.
pub const FULL_IMAGE_REGION: &str = "FULL_IMAGE";

/// A vector in the shared image/text embedding space.
///
/// Values are kept exactly as produced; normalization happens inside
/// [`cosine`](crate::similarity::cosine).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Multiplies every component by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }
}

impl From<Vec<f64>> for Embedding {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

/// One semantic region of the image, represented by its masked embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionEntry {
    pub region_id: String,
    pub embedding: Embedding,
    /// Fraction of the image covered by the mask, in (0, 1].
    pub area_frac: Option<f64>,
    /// Relative `[x, y, w, h]` box around the mask.
    pub bbox: Option<[f64; 4]>,
}

/// A rendered subject-predicate-object phrase and its text embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseEntry {
    pub triplet: Triplet,
    pub text: String,
    pub embedding: Embedding,
}

/// A caption or reference sentence with its global and phrase embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct TextSide {
    pub text: String,
    pub global: Embedding,
    pub phrases: Vec<PhraseEntry>,
}

impl TextSide {
    /// Inserts the whole sentence as the only phrase when no phrase exists.
    pub fn apply_phrase_fallback(&mut self) {
        if self.phrases.is_empty() {
            self.phrases.push(PhraseEntry {
                triplet: Triplet::degenerate(self.text.clone()),
                text: self.text.clone(),
                embedding: self.global.clone(),
            });
        }
    }
}

/// Everything needed to score one image-caption instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalBundle {
    pub bundle_id: String,
    pub dim: usize,
    pub image_id: String,
    /// Embedding of the whole image (full-one mask).
    pub image_global: Embedding,
    pub regions: Vec<RegionEntry>,
    pub candidate: TextSide,
    pub references: Vec<TextSide>,
}

impl EvalBundle {
    /// Applies the empty-set fallbacks: a `FULL_IMAGE` region mirroring the
    /// global image embedding, and a whole-sentence phrase for every text
    /// side without phrases.
    pub fn apply_fallbacks(&mut self) {
        if self.regions.is_empty() {
            self.regions.push(RegionEntry {
                region_id: FULL_IMAGE_REGION.to_string(),
                embedding: self.image_global.clone(),
                area_frac: None,
                bbox: None,
            });
        }
        self.candidate.apply_phrase_fallback();
        for reference in &mut self.references {
            reference.apply_phrase_fallback();
        }
    }

    /// Copy of the bundle keeping only the references at `indices`, in that order.
    pub fn with_reference_subset(&self, indices: &[usize]) -> Self {
        Self {
            references: indices
                .iter()
                .map(|&i| self.references[i].clone())
                .collect(),
            ..self.clone()
        }
    }

    /// Copy of the bundle with all references dropped.
    pub fn without_references(&self) -> Self {
        Self {
            references: Vec::new(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Warning => f.write_str("warning"),
            Severity::Error => f.write_str("error"),
        }
    }
}

/// The invariant a [`ValidationIssue`] reports as broken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum Rule {
    NonPositiveDim,
    DimensionMismatch { expected: usize, found: usize },
    NonFinite,
    ZeroVector,
    DuplicateRegionId,
    AreaOutOfRange,
    BboxOutOfRange,
    EmptySet,
    EmptyText,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::NonPositiveDim => f.write_str("dim must be at least 1"),
            Rule::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch (found {found}, expected {expected})")
            }
            Rule::NonFinite => f.write_str("non-finite value"),
            Rule::ZeroVector => f.write_str("zero vector"),
            Rule::DuplicateRegionId => f.write_str("duplicate region_id"),
            Rule::AreaOutOfRange => f.write_str("area_frac outside (0, 1]"),
            Rule::BboxOutOfRange => f.write_str("bbox outside [0, 1] or non-positive extent"),
            Rule::EmptySet => f.write_str("empty set"),
            Rule::EmptyText => f.write_str("empty text"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationIssue {
    /// Location in bundle-file terms, e.g. `regions[0].embedding`.
    pub field: String,
    #[serde(flatten)]
    pub rule: Rule,
    pub severity: Severity,
}

impl ValidationIssue {
    fn error(field: impl Into<String>, rule: Rule) -> Self {
        Self {
            field: field.into(),
            rule,
            severity: Severity::Error,
        }
    }

    fn warning(field: impl Into<String>, rule: Rule) -> Self {
        Self {
            field: field.into(),
            rule,
            severity: Severity::Warning,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.severity, self.field, self.rule)
    }
}

fn check_embedding(field: String, emb: &Embedding, dim: usize, issues: &mut Vec<ValidationIssue>) {
    if emb.dim() != dim {
        issues.push(ValidationIssue::error(
            field,
            Rule::DimensionMismatch {
                expected: dim,
                found: emb.dim(),
            },
        ));
    } else if !emb.is_finite() {
        issues.push(ValidationIssue::error(field, Rule::NonFinite));
    } else if emb.norm() <= 0.0 {
        issues.push(ValidationIssue::error(field, Rule::ZeroVector));
    }
}

fn check_text_side(prefix: &str, side: &TextSide, dim: usize, issues: &mut Vec<ValidationIssue>) {
    if side.text.trim().is_empty() {
        issues.push(ValidationIssue::warning(
            format!("{prefix}.text"),
            Rule::EmptyText,
        ));
    }
    check_embedding(format!("{prefix}.global"), &side.global, dim, issues);
    if side.phrases.is_empty() {
        issues.push(ValidationIssue::error(
            format!("{prefix}.phrases"),
            Rule::EmptySet,
        ));
    }
    for (m, phrase) in side.phrases.iter().enumerate() {
        if phrase.text.trim().is_empty() {
            issues.push(ValidationIssue::error(
                format!("{prefix}.phrases[{m}].text"),
                Rule::EmptyText,
            ));
        }
        check_embedding(
            format!("{prefix}.phrases[{m}].embedding"),
            &phrase.embedding,
            dim,
            issues,
        );
    }
}

/// Checks every bundle invariant and returns the issues found, in the order
/// image, regions by index, candidate, references by index.
///
/// A bundle with no `Error`-severity issue scores without error.
pub fn validate_bundle(b: &EvalBundle) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    if b.dim == 0 {
        issues.push(ValidationIssue::error("dim", Rule::NonPositiveDim));
    }
    check_embedding(
        "image.global".to_string(),
        &b.image_global,
        b.dim,
        &mut issues,
    );

    if b.regions.is_empty() {
        issues.push(ValidationIssue::error("image.regions", Rule::EmptySet));
    }
    let mut seen = std::collections::HashSet::new();
    for (k, region) in b.regions.iter().enumerate() {
        if !seen.insert(region.region_id.as_str()) {
            issues.push(ValidationIssue::error(
                format!("regions[{k}].region_id"),
                Rule::DuplicateRegionId,
            ));
        }
        if let Some(a) = region.area_frac {
            if !(a > 0.0 && a <= 1.0) {
                issues.push(ValidationIssue::error(
                    format!("regions[{k}].area_frac"),
                    Rule::AreaOutOfRange,
                ));
            }
        }
        if let Some([x, y, w, h]) = region.bbox {
            let in_unit = [x, y, w, h].iter().all(|v| (0.0..=1.0).contains(v));
            if !in_unit || w <= 0.0 || h <= 0.0 {
                issues.push(ValidationIssue::error(
                    format!("regions[{k}].bbox"),
                    Rule::BboxOutOfRange,
                ));
            }
        }
        check_embedding(
            format!("regions[{k}].embedding"),
            &region.embedding,
            b.dim,
            &mut issues,
        );
    }

    check_text_side("candidate", &b.candidate, b.dim, &mut issues);
    for (h, reference) in b.references.iter().enumerate() {
        check_text_side(&format!("references[{h}]"), reference, b.dim, &mut issues);
    }
    issues
}

/// True when `issues` contains at least one error.
pub fn has_errors(issues: &[ValidationIssue]) -> bool {
    issues.iter().any(ValidationIssue::is_error)
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn valid_bundle_has_no_issues() {
        assert!(validate_bundle(&worked_bundle()).is_empty());
    }

    #[test]
    fn dimension_mismatch_is_named() {
        let mut b = worked_bundle();
        b.dim = 768;
        b.image_global = Embedding::new(vec![1.0; 768]);
        b.candidate.global = Embedding::new(vec![1.0; 768]);
        for p in &mut b.candidate.phrases {
            p.embedding = Embedding::new(vec![1.0; 768]);
        }
        b.regions[0].embedding = Embedding::new(vec![1.0; 768]);
        b.regions[1].embedding = Embedding::new(vec![1.0; 512]);
        let issues = validate_bundle(&b);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].field, "regions[1].embedding");
        assert_eq!(
            issues[0].rule,
            Rule::DimensionMismatch {
                expected: 768,
                found: 512
            }
        );
        assert!(issues[0].is_error());
    }

    #[test]
    fn zero_vector_rejected() {
        let mut b = worked_bundle();
        b.regions[0].embedding = Embedding::new(vec![0.0; 3]);
        let issues = validate_bundle(&b);
        assert_eq!(
            issues,
            vec![ValidationIssue::error(
                "regions[0].embedding",
                Rule::ZeroVector
            )]
        );
    }

    #[test]
    fn nan_and_duplicate_ids() {
        let mut b = worked_bundle();
        b.regions[1].region_id = "r0".into();
        b.candidate.phrases[0].embedding = Embedding::new(vec![f64::NAN, 0.0, 1.0]);
        let issues = validate_bundle(&b);
        let fields: Vec<_> = issues.iter().map(|i| i.field.as_str()).collect();
        assert_eq!(
            fields,
            ["regions[1].region_id", "candidate.phrases[0].embedding"]
        );
        assert_eq!(issues[1].rule, Rule::NonFinite);
    }

    #[test]
    fn metadata_ranges() {
        let mut b = worked_bundle();
        b.regions[0].area_frac = Some(0.0);
        b.regions[1].bbox = Some([0.1, 0.1, 0.0, 0.5]);
        let issues = validate_bundle(&b);
        assert_eq!(issues.len(), 2);
        assert_eq!(issues[0].rule, Rule::AreaOutOfRange);
        assert_eq!(issues[1].rule, Rule::BboxOutOfRange);

        b.regions[0].area_frac = Some(1.0);
        b.regions[1].bbox = Some([0.0, 0.0, 1.0, 1.0]);
        assert!(validate_bundle(&b).is_empty());
    }

    #[test]
    fn empty_caption_text_is_only_a_warning() {
        let mut b = worked_bundle();
        b.candidate.text.clear();
        let issues = validate_bundle(&b);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].severity, Severity::Warning);
        assert!(!has_errors(&issues));
    }

    #[test]
    fn fallbacks_fill_empty_sets() {
        let mut b = worked_bundle();
        b.regions.clear();
        b.candidate.phrases.clear();
        assert!(has_errors(&validate_bundle(&b)));
        b.apply_fallbacks();
        assert!(validate_bundle(&b).is_empty());
        assert_eq!(b.regions[0].region_id, FULL_IMAGE_REGION);
        assert_eq!(b.regions[0].embedding, b.image_global);
        assert_eq!(b.candidate.phrases[0].text, b.candidate.text);
        assert_eq!(b.candidate.phrases[0].embedding, b.candidate.global);
    }

    #[test]
    fn validation_is_deterministic() {
        let mut b = worked_bundle();
        b.regions[0].embedding = Embedding::new(vec![0.0; 3]);
        b.references.push(side("", vec![0.0; 2], vec![]));
        let first = validate_bundle(&b);
        assert_eq!(first, validate_bundle(&b));
        let fields: Vec<_> = first.iter().map(|i| i.field.as_str()).collect();
        assert_eq!(
            fields,
            [
                "regions[0].embedding",
                "references[0].text",
                "references[0].global",
                "references[0].phrases"
            ]
        );
    }
}
