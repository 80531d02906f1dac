//! Evaluation protocols: rank correlation with human judgments, pairwise
//! preference accuracy, and foil (hallucination) detection accuracy.
//!
//! Each protocol has an in-memory form taking bundles directly and a
//! file-based `run_*` form that reads a record file, loads the referenced
//! bundles and produces a [`BenchmarkRun`].
//!
//! Bundle loading and scoring may run in parallel. Everything that consumes
//! randomness runs sequentially in input order on per-run ChaCha streams
//! derived from the seed, so results do not depend on the thread count.

mod kendall;
mod records;

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use kendall::{kendall_tau_b, kendall_tau_c, pair_counts, PairCounts};
pub use records::{parse_records, read_records, FoilRecord, JudgmentRecord, PairRecord, Record};

use crate::bundle_io::read_bundle;
use crate::error::{BenchmarkError, ScoreError};
use crate::model::EvalBundle;
use crate::parallel::{self, Execution};
use crate::scoring::{hice_score, ref_hice_score};

/// The score a protocol ranks bundles by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    Hice,
    RefHice,
    GlobalOnly,
    LocalOnly,
}

impl Scorer {
    pub fn uses_references(self) -> bool {
        self == Scorer::RefHice
    }

    pub fn score(self, b: &EvalBundle) -> Result<f64, ScoreError> {
        match self {
            Scorer::RefHice => Ok(ref_hice_score(b)?
                .ref_hice
                .expect("reference score present")),
            Scorer::Hice => Ok(hice_score(b)?.hice),
            Scorer::GlobalOnly => Ok(hice_score(b)?.g_itc),
            Scorer::LocalOnly => Ok(hice_score(b)?.l_itc),
        }
    }
}

impl fmt::Display for Scorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scorer::Hice => "hice",
            Scorer::RefHice => "ref_hice",
            Scorer::GlobalOnly => "global_only",
            Scorer::LocalOnly => "local_only",
        })
    }
}

impl FromStr for Scorer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hice" => Ok(Scorer::Hice),
            "ref_hice" => Ok(Scorer::RefHice),
            "global_only" => Ok(Scorer::GlobalOnly),
            "local_only" => Ok(Scorer::LocalOnly),
            other => Err(format!("unknown scorer `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    TauB,
    TauC,
}

impl Statistic {
    pub fn compute(self, x: &[f64], y: &[f64]) -> Result<f64, BenchmarkError> {
        match self {
            Statistic::TauB => kendall_tau_b(x, y),
            Statistic::TauC => kendall_tau_c(x, y),
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Statistic::TauB => "tau_b",
            Statistic::TauC => "tau_c",
        })
    }
}

impl FromStr for Statistic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tau_b" => Ok(Statistic::TauB),
            "tau_c" => Ok(Statistic::TauC),
            other => Err(format!("unknown statistic `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Correlation,
    Pairs,
    Foil,
}

/// Result object written by every protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub protocol: Protocol,
    pub scorer: Scorer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stat: Option<Statistic>,
    pub n: usize,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// A report plus non-fatal diagnostics (such as image id mismatches).
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRun {
    pub report: BenchmarkReport,
    pub warnings: Vec<String>,
}

/// Settings of the pairwise protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairwiseOptions {
    /// Number of reference draws averaged for reference-based scorers.
    pub draws: usize,
    /// References sampled per bundle and draw (all of them when fewer exist).
    pub refs_per_draw: usize,
    pub seed: u64,
}

impl Default for PairwiseOptions {
    fn default() -> Self {
        Self {
            draws: 5,
            refs_per_draw: 5,
            seed: 42,
        }
    }
}

/// One pairwise comparison held in memory.
#[derive(Debug, Clone, Copy)]
pub struct PairItem<'a> {
    pub a: &'a EvalBundle,
    pub b: &'a EvalBundle,
    pub votes_a: u32,
    pub votes_b: u32,
}

fn collect_scores<I>(results: I) -> Result<Vec<f64>, BenchmarkError>
where
    I: IntoIterator<Item = (String, Result<f64, ScoreError>)>,
{
    results
        .into_iter()
        .map(|(bundle, r)| r.map_err(|source| BenchmarkError::Score { bundle, source }))
        .collect()
}

fn score_all(
    bundles: &[&EvalBundle],
    scorer: Scorer,
    exec: Execution,
) -> Result<Vec<f64>, BenchmarkError> {
    let results = parallel::map(exec, bundles, |b| (b.bundle_id.clone(), scorer.score(b)));
    collect_scores(results)
}

/// Kendall correlation between bundle scores and human judgments.
pub fn correlation(
    items: &[(&EvalBundle, f64)],
    scorer: Scorer,
    stat: Statistic,
    exec: Execution,
) -> Result<f64, BenchmarkError> {
    if items.len() < 2 {
        return Err(BenchmarkError::DegenerateInput(
            "need at least two records".into(),
        ));
    }
    let bundles: Vec<&EvalBundle> = items.iter().map(|(b, _)| *b).collect();
    let human: Vec<f64> = items.iter().map(|(_, h)| *h).collect();
    let scores = score_all(&bundles, scorer, exec)?;
    stat.compute(&scores, &human)
}

fn sample_subset(rng: &mut ChaCha8Rng, available: usize, wanted: usize) -> Vec<usize> {
    let mut idx = rand::seq::index::sample(rng, available, wanted.min(available)).into_vec();
    idx.sort_unstable();
    idx
}

/// Fraction of pairs where the higher-scored side matches the human majority.
///
/// Vote ties and exact score ties are settled by a seeded coin flip. For
/// reference-based scorers each of `draws` rounds samples `refs_per_draw`
/// references per bundle (the same indices for both sides when they have
/// equally many references) and the per-round accuracies are averaged.
pub fn pairwise(
    items: &[PairItem<'_>],
    scorer: Scorer,
    opts: &PairwiseOptions,
    exec: Execution,
) -> Result<f64, BenchmarkError> {
    if items.is_empty() {
        return Err(BenchmarkError::InvalidArgument("no pairs".into()));
    }
    if opts.draws == 0 || opts.refs_per_draw == 0 {
        return Err(BenchmarkError::InvalidArgument(
            "draws and refs_per_draw must be positive".into(),
        ));
    }
    let mut tie_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    tie_rng.set_stream(1);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    sample_rng.set_stream(0);

    let truth: Vec<bool> = items
        .iter()
        .map(|p| match p.votes_a.cmp(&p.votes_b) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => tie_rng.gen_bool(0.5),
        })
        .collect();

    let rounds = if scorer.uses_references() {
        opts.draws
    } else {
        1
    };
    let mut accuracy_sum = 0.0;
    for _ in 0..rounds {
        let scored: Vec<(String, Result<f64, ScoreError>)> = if scorer.uses_references() {
            let subsets: Vec<(EvalBundle, EvalBundle)> = items
                .iter()
                .map(|p| {
                    let ia =
                        sample_subset(&mut sample_rng, p.a.references.len(), opts.refs_per_draw);
                    let ib = if p.b.references.len() == p.a.references.len() {
                        ia.clone()
                    } else {
                        sample_subset(&mut sample_rng, p.b.references.len(), opts.refs_per_draw)
                    };
                    (
                        p.a.with_reference_subset(&ia),
                        p.b.with_reference_subset(&ib),
                    )
                })
                .collect();
            parallel::map(exec, &subsets, |(a, b)| {
                [
                    (a.bundle_id.clone(), scorer.score(a)),
                    (b.bundle_id.clone(), scorer.score(b)),
                ]
            })
            .into_iter()
            .flatten()
            .collect()
        } else {
            parallel::map(exec, items, |p| {
                [
                    (p.a.bundle_id.clone(), scorer.score(p.a)),
                    (p.b.bundle_id.clone(), scorer.score(p.b)),
                ]
            })
            .into_iter()
            .flatten()
            .collect()
        };
        let scores = collect_scores(scored)?;
        let mut correct = 0usize;
        for (pair, a_wins) in scores.chunks_exact(2).zip(&truth) {
            let predicted_a = match pair[0].partial_cmp(&pair[1]) {
                Some(std::cmp::Ordering::Greater) => true,
                Some(std::cmp::Ordering::Less) => false,
                _ => tie_rng.gen_bool(0.5),
            };
            if predicted_a == *a_wins {
                correct += 1;
            }
        }
        accuracy_sum += correct as f64 / items.len() as f64;
    }
    Ok(accuracy_sum / rounds as f64)
}

/// Fraction of (correct, foil) pairs where the correct caption scores
/// strictly higher. Ties count as failures.
pub fn foil(
    items: &[(&EvalBundle, &EvalBundle)],
    scorer: Scorer,
    exec: Execution,
) -> Result<f64, BenchmarkError> {
    if items.is_empty() {
        return Err(BenchmarkError::InvalidArgument("no foil records".into()));
    }
    let scored = parallel::map(exec, items, |(c, f)| {
        [
            (c.bundle_id.clone(), scorer.score(c)),
            (f.bundle_id.clone(), scorer.score(f)),
        ]
    });
    let scores = collect_scores(scored.into_iter().flatten())?;
    let wins = scores.chunks_exact(2).filter(|p| p[0] > p[1]).count();
    Ok(wins as f64 / items.len() as f64)
}

/// Loads each distinct path once. The first failure in input order aborts.
pub fn load_bundles(
    paths: &[&Path],
    exec: Execution,
) -> Result<HashMap<PathBuf, EvalBundle>, BenchmarkError> {
    let mut unique: Vec<PathBuf> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for p in paths {
        if seen.insert(*p) {
            unique.push(p.to_path_buf());
        }
    }
    let loaded = parallel::map(exec, &unique, |p| read_bundle(p));
    let mut out = HashMap::with_capacity(unique.len());
    for (path, result) in unique.into_iter().zip(loaded) {
        out.insert(path, result?);
    }
    Ok(out)
}

fn require_references(
    scorer: Scorer,
    bundles: &HashMap<PathBuf, EvalBundle>,
    order: &[&Path],
) -> Result<(), BenchmarkError> {
    if !scorer.uses_references() {
        return Ok(());
    }
    match order.iter().find(|p| bundles[**p].references.is_empty()) {
        Some(p) => Err(BenchmarkError::Score {
            bundle: p.display().to_string(),
            source: ScoreError::NoReferences,
        }),
        None => Ok(()),
    }
}

fn image_mismatch(a: &Path, b: &Path, bundles: &HashMap<PathBuf, EvalBundle>) -> Option<String> {
    let (ia, ib) = (&bundles[a].image_id, &bundles[b].image_id);
    (ia != ib).then(|| {
        format!(
            "image_id mismatch: {} has `{ia}`, {} has `{ib}`",
            a.display(),
            b.display()
        )
    })
}

pub fn run_correlation(
    records_path: impl AsRef<Path>,
    scorer: Scorer,
    stat: Statistic,
    exec: Execution,
) -> Result<BenchmarkRun, BenchmarkError> {
    let records: Vec<JudgmentRecord> = read_records(records_path)?;
    let order: Vec<&Path> = records.iter().map(|r| r.bundle_path.as_path()).collect();
    let bundles = load_bundles(&order, exec)?;
    require_references(scorer, &bundles, &order)?;
    let items: Vec<(&EvalBundle, f64)> = records
        .iter()
        .map(|r| (&bundles[&r.bundle_path], r.human_score))
        .collect();
    let value = correlation(&items, scorer, stat, exec)?;
    Ok(BenchmarkRun {
        report: BenchmarkReport {
            protocol: Protocol::Correlation,
            scorer,
            stat: Some(stat),
            n: records.len(),
            value,
            seed: None,
        },
        warnings: Vec::new(),
    })
}

pub fn run_pairwise(
    records_path: impl AsRef<Path>,
    scorer: Scorer,
    opts: &PairwiseOptions,
    exec: Execution,
) -> Result<BenchmarkRun, BenchmarkError> {
    let records: Vec<PairRecord> = read_records(records_path)?;
    let order: Vec<&Path> = records
        .iter()
        .flat_map(|r| [r.bundle_a.as_path(), r.bundle_b.as_path()])
        .collect();
    let bundles = load_bundles(&order, exec)?;
    require_references(scorer, &bundles, &order)?;
    let warnings = records
        .iter()
        .filter_map(|r| image_mismatch(&r.bundle_a, &r.bundle_b, &bundles))
        .collect();
    let items: Vec<PairItem<'_>> = records
        .iter()
        .map(|r| PairItem {
            a: &bundles[&r.bundle_a],
            b: &bundles[&r.bundle_b],
            votes_a: r.votes_a,
            votes_b: r.votes_b,
        })
        .collect();
    let value = pairwise(&items, scorer, opts, exec)?;
    Ok(BenchmarkRun {
        report: BenchmarkReport {
            protocol: Protocol::Pairs,
            scorer,
            stat: None,
            n: records.len(),
            value,
            seed: Some(opts.seed),
        },
        warnings,
    })
}

pub fn run_foil(
    records_path: impl AsRef<Path>,
    scorer: Scorer,
    exec: Execution,
) -> Result<BenchmarkRun, BenchmarkError> {
    let records: Vec<FoilRecord> = read_records(records_path)?;
    let order: Vec<&Path> = records
        .iter()
        .flat_map(|r| [r.bundle_correct.as_path(), r.bundle_foil.as_path()])
        .collect();
    let bundles = load_bundles(&order, exec)?;
    require_references(scorer, &bundles, &order)?;
    let warnings = records
        .iter()
        .filter_map(|r| image_mismatch(&r.bundle_correct, &r.bundle_foil, &bundles))
        .collect();
    let items: Vec<(&EvalBundle, &EvalBundle)> = records
        .iter()
        .map(|r| (&bundles[&r.bundle_correct], &bundles[&r.bundle_foil]))
        .collect();
    let value = foil(&items, scorer, exec)?;
    Ok(BenchmarkRun {
        report: BenchmarkReport {
            protocol: Protocol::Foil,
            scorer,
            stat: None,
            n: records.len(),
            value,
            seed: None,
        },
        warnings,
    })
}
