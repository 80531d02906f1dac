//! Shared fixtures and brute-force oracles for the integration tests.
//!
//! Oracles here are written from the definitions and share no code with the
//! library paths they check.

#![allow(dead_code)]

use hice_core::model::{Embedding, EvalBundle, PhraseEntry, RegionEntry, TextSide};
use hice_core::Triplet;
use rand::seq::SliceRandom;
use rand::Rng;

pub const H: f64 = std::f64::consts::FRAC_1_SQRT_2;

pub fn emb(values: &[f64]) -> Embedding {
    Embedding::new(values.to_vec())
}

fn random_vec(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        // shifted range keeps many cosines positive so fused scores are rarely zero
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.5..1.0)).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

fn random_side(rng: &mut impl Rng, dim: usize, tag: &str, max_phrases: usize) -> TextSide {
    let n = rng.gen_range(1..=max_phrases);
    TextSide {
        text: format!("{tag} sentence"),
        global: Embedding::new(random_vec(rng, dim)),
        phrases: (0..n)
            .map(|m| PhraseEntry {
                triplet: Triplet::new(format!("{tag}{m}"), "with", "thing"),
                text: format!("{tag}{m} with thing"),
                embedding: Embedding::new(random_vec(rng, dim)),
            })
            .collect(),
    }
}

/// A valid bundle with random sizes, optional metadata and 0-3 references.
pub fn random_bundle(rng: &mut impl Rng, id: usize) -> EvalBundle {
    let dim = rng.gen_range(2..=24);
    let n_regions = rng.gen_range(1..=8);
    let regions = (0..n_regions)
        .map(|k| RegionEntry {
            region_id: format!("r{k}"),
            embedding: Embedding::new(random_vec(rng, dim)),
            area_frac: rng.gen_bool(0.5).then(|| rng.gen_range(0.01..=1.0)),
            bbox: rng.gen_bool(0.5).then(|| {
                let (x, y) = (rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.5));
                [x, y, rng.gen_range(0.01..0.5), rng.gen_range(0.01..0.5)]
            }),
        })
        .collect();
    let n_refs = rng.gen_range(0..=3);
    EvalBundle {
        bundle_id: format!("b{id}"),
        dim,
        image_id: format!("img{id}"),
        image_global: Embedding::new(random_vec(rng, dim)),
        regions,
        candidate: random_side(rng, dim, "c", 8),
        references: (0..n_refs)
            .map(|h| random_side(rng, dim, &format!("ref{h}_"), 5))
            .collect(),
    }
}

/// Same as [`random_bundle`] but with at least one reference.
pub fn random_bundle_with_refs(rng: &mut impl Rng, id: usize) -> EvalBundle {
    let mut b = random_bundle(rng, id);
    if b.references.is_empty() {
        b.references.push(random_side(rng, b.dim, "ref_", 5));
    }
    b
}

/// Shuffles regions, phrases and references, and rescales every embedding
/// by an independent positive factor.
pub fn permute_and_scale(rng: &mut impl Rng, b: &EvalBundle) -> EvalBundle {
    let mut out = b.clone();
    let scale = |e: &mut Embedding, rng: &mut dyn rand::RngCore| {
        let f = 10f64.powf(rng.gen_range(-3.0..3.0));
        *e = e.scaled(f);
    };
    out.regions.shuffle(rng);
    out.candidate.phrases.shuffle(rng);
    out.references.shuffle(rng);
    scale(&mut out.image_global, rng);
    for r in &mut out.regions {
        scale(&mut r.embedding, rng);
    }
    for side in std::iter::once(&mut out.candidate).chain(out.references.iter_mut()) {
        side.phrases.shuffle(rng);
        scale(&mut side.global, rng);
        for p in &mut side.phrases {
            scale(&mut p.embedding, rng);
        }
    }
    out
}

/// Column-max mean and row-max mean of a row-major matrix, by plain loops.
pub fn oracle_precision_recall(rows: usize, cols: usize, cells: &[f64]) -> (f64, f64) {
    let mut p = 0.0;
    for c in 0..cols {
        let mut best = cells[c];
        for r in 1..rows {
            if cells[r * cols + c] > best {
                best = cells[r * cols + c];
            }
        }
        p += best;
    }
    let mut r_sum = 0.0;
    for r in 0..rows {
        let mut best = cells[r * cols];
        for c in 1..cols {
            if cells[r * cols + c] > best {
                best = cells[r * cols + c];
            }
        }
        r_sum += best;
    }
    (p / cols as f64, r_sum / rows as f64)
}

/// Concordant, discordant, tied-only-in-x and tied-only-in-y pair counts by enumeration.
pub fn oracle_pair_counts(x: &[f64], y: &[f64]) -> (u64, u64, u64, u64) {
    let (mut c, mut d, mut tx, mut ty) = (0, 0, 0, 0);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 && dy == 0.0 {
                continue;
            } else if dx == 0.0 {
                tx += 1;
            } else if dy == 0.0 {
                ty += 1;
            } else if (dx > 0.0) == (dy > 0.0) {
                c += 1;
            } else {
                d += 1;
            }
        }
    }
    (c, d, tx, ty)
}

pub fn oracle_tau_b(x: &[f64], y: &[f64]) -> f64 {
    let (c, d, tx, ty) = oracle_pair_counts(x, y);
    let s = c as i64 - d as i64;
    s as f64 / (((c + d + ty) as f64) * ((c + d + tx) as f64)).sqrt()
}

fn distinct(v: &[f64]) -> usize {
    let mut seen: Vec<f64> = Vec::new();
    for x in v {
        if !seen.iter().any(|s| s == x) {
            seen.push(*x);
        }
    }
    seen.len()
}

pub fn oracle_tau_c(x: &[f64], y: &[f64]) -> f64 {
    let (c, d, _, _) = oracle_pair_counts(x, y);
    let n = x.len() as f64;
    let m = distinct(x).min(distinct(y)) as f64;
    2.0 * m * (c as i64 - d as i64) as f64 / (n * n * (m - 1.0))
}

/// A vector of `n` values drawn from `levels` integers, so ties are common.
pub fn tie_heavy(rng: &mut impl Rng, n: usize, levels: i32) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0..levels) as f64).collect()
}

/// Independent harmonic mean: `k / Σ 1/x`, zero if any term is non-positive.
pub fn oracle_harmonic(xs: &[f64]) -> f64 {
    if xs.iter().any(|x| *x <= 0.0) {
        return 0.0;
    }
    xs.len() as f64 / xs.iter().map(|x| 1.0 / x).sum::<f64>()
}
