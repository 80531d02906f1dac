//! Newline-delimited JSON record files for the benchmark protocols.
//!
//! Bundle paths inside a record file are resolved relative to the directory
//! holding that file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::BenchmarkError;

/// One bundle with a human quality judgment on its dataset's native scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgmentRecord {
    pub bundle_path: PathBuf,
    pub human_score: f64,
}

/// Two candidate captions for one image, with human votes for each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub bundle_a: PathBuf,
    pub bundle_b: PathBuf,
    pub votes_a: u32,
    pub votes_b: u32,
}

/// A correct caption and its foiled near-duplicate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoilRecord {
    pub bundle_correct: PathBuf,
    pub bundle_foil: PathBuf,
}

/// Record types that can be checked and re-rooted after parsing.
pub trait Record: DeserializeOwned {
    fn check(&self) -> Result<(), String>;
    fn resolve(&mut self, base: &Path);
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl Record for JudgmentRecord {
    fn check(&self) -> Result<(), String> {
        if self.human_score.is_finite() {
            Ok(())
        } else {
            Err("human_score must be finite".into())
        }
    }

    fn resolve(&mut self, base: &Path) {
        rebase(base, &mut self.bundle_path);
    }
}

impl Record for PairRecord {
    fn check(&self) -> Result<(), String> {
        if self.votes_a + self.votes_b >= 1 {
            Ok(())
        } else {
            Err("votes_a + votes_b must be at least 1".into())
        }
    }

    fn resolve(&mut self, base: &Path) {
        rebase(base, &mut self.bundle_a);
        rebase(base, &mut self.bundle_b);
    }
}

impl Record for FoilRecord {
    fn check(&self) -> Result<(), String> {
        Ok(())
    }

    fn resolve(&mut self, base: &Path) {
        rebase(base, &mut self.bundle_correct);
        rebase(base, &mut self.bundle_foil);
    }
}

/// Parses record lines; blank lines are skipped. `path` is used for error
/// messages and as the base for relative bundle paths.
pub fn parse_records<R: Record>(source: &str, path: &Path) -> Result<Vec<R>, BenchmarkError> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| BenchmarkError::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let mut rec: R = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        rec.check().map_err(bad)?;
        rec.resolve(base);
        out.push(rec);
    }
    Ok(out)
}

pub fn read_records<R: Record>(path: impl AsRef<Path>) -> Result<Vec<R>, BenchmarkError> {
    let path = path.as_ref();
    let source = fs::read_to_string(path).map_err(|source| crate::error::BundleError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_records(&source, path)
}
