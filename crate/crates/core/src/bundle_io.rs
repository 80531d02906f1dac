//! The evaluation-bundle file format.
//!
//! A bundle is a JSON object (version 1). Embeddings are written either as
//! decimal number arrays or as `{"b64": ...}`, the base64 of little-endian
//! `f32` values. Field and array order are fixed, so packed output is
//! byte-deterministic.
//!
//! ```text
//! { "version": 1, "bundle_id": str, "image_id": str, "dim": int,
//!   "image": { "global": EMB,
//!              "regions": [ { "region_id": str, "area_frac": num?,
//!                             "bbox": [x, y, w, h]?, "embedding": EMB } ] },
//!   "candidate": { "text": str, "global": EMB,
//!                  "phrases": [ { "triplet": [s, p, o], "text": str, "embedding": EMB } ] },
//!   "references": [ same shape as candidate ] }
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::BundleError;
use crate::model::{
    has_errors, validate_bundle, Embedding, EvalBundle, PhraseEntry, RegionEntry, TextSide,
};
use crate::parallel::{self, Execution};
use crate::triplets::Triplet;

pub const FORMAT_VERSION: u64 = 1;

/// How embedding vectors are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Encoding {
    /// Plain JSON number arrays, full `f64` precision.
    #[default]
    Decimal,
    /// Base64 of little-endian `f32`; bit-exact at 32-bit precision.
    Packed,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawEmbedding {
    Decimal(Vec<f64>),
    Packed(RawPacked),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPacked {
    b64: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBundle {
    version: u64,
    bundle_id: String,
    image_id: String,
    dim: usize,
    image: RawImage,
    candidate: RawText,
    #[serde(default)]
    references: Vec<RawText>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawImage {
    global: RawEmbedding,
    regions: Vec<RawRegion>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    region_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    area_frac: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bbox: Option<[f64; 4]>,
    embedding: RawEmbedding,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawText {
    text: String,
    global: RawEmbedding,
    phrases: Vec<RawPhrase>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhrase {
    triplet: Triplet,
    text: String,
    embedding: RawEmbedding,
}

struct Decoder<'a> {
    path: &'a Path,
}

impl Decoder<'_> {
    fn schema(&self, field: impl Into<String>, message: impl Into<String>) -> BundleError {
        BundleError::Schema {
            path: self.path.to_path_buf(),
            field: field.into(),
            message: message.into(),
        }
    }

    fn embedding(&self, field: &str, raw: RawEmbedding) -> Result<Embedding, BundleError> {
        match raw {
            RawEmbedding::Decimal(values) => Ok(Embedding::new(values)),
            RawEmbedding::Packed(RawPacked { b64 }) => {
                let bytes = STANDARD.decode(b64.as_bytes()).map_err(|e| {
                    self.schema(format!("{field}.b64"), format!("invalid base64: {e}"))
                })?;
                if bytes.len() % 4 != 0 {
                    return Err(self.schema(
                        format!("{field}.b64"),
                        format!("{} bytes is not a whole number of f32 values", bytes.len()),
                    ));
                }
                Ok(Embedding::new(
                    bytes
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                        .collect(),
                ))
            }
        }
    }

    fn text(&self, field: &str, raw: RawText) -> Result<TextSide, BundleError> {
        let global = self.embedding(&format!("{field}.global"), raw.global)?;
        let phrases = raw
            .phrases
            .into_iter()
            .enumerate()
            .map(|(m, p)| {
                Ok(PhraseEntry {
                    triplet: p.triplet,
                    text: p.text,
                    embedding: self
                        .embedding(&format!("{field}.phrases[{m}].embedding"), p.embedding)?,
                })
            })
            .collect::<Result<_, BundleError>>()?;
        Ok(TextSide {
            text: raw.text,
            global,
            phrases,
        })
    }

    fn bundle(&self, raw: RawBundle) -> Result<EvalBundle, BundleError> {
        let image_global = self.embedding("image.global", raw.image.global)?;
        let regions = raw
            .image
            .regions
            .into_iter()
            .enumerate()
            .map(|(k, r)| {
                Ok(RegionEntry {
                    region_id: r.region_id,
                    embedding: self.embedding(&format!("regions[{k}].embedding"), r.embedding)?,
                    area_frac: r.area_frac,
                    bbox: r.bbox,
                })
            })
            .collect::<Result<_, BundleError>>()?;
        let candidate = self.text("candidate", raw.candidate)?;
        let references = raw
            .references
            .into_iter()
            .enumerate()
            .map(|(h, r)| self.text(&format!("references[{h}]"), r))
            .collect::<Result<_, BundleError>>()?;
        Ok(EvalBundle {
            bundle_id: raw.bundle_id,
            dim: raw.dim,
            image_id: raw.image_id,
            image_global,
            regions,
            candidate,
            references,
        })
    }
}

/// Parses bundle JSON and applies the empty-set fallbacks, without
/// validating invariants. `path` is only used in error messages.
pub fn decode_bundle(source: &str, path: &Path) -> Result<EvalBundle, BundleError> {
    let value: serde_json::Value =
        serde_json::from_str(source).map_err(|e| BundleError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    let decoder = Decoder { path };
    match value.get("version") {
        None => return Err(decoder.schema("version", "missing field")),
        Some(v) if v.as_u64() != Some(FORMAT_VERSION) => {
            return Err(decoder.schema(
                "version",
                format!("unsupported version {v}, expected {FORMAT_VERSION}"),
            ))
        }
        Some(_) => {}
    }
    let raw: RawBundle = serde_path_to_error::deserialize(value).map_err(|e| {
        let field = e.path().to_string();
        decoder.schema(field, e.into_inner().to_string())
    })?;
    let mut bundle = decoder.bundle(raw)?;
    bundle.apply_fallbacks();
    Ok(bundle)
}

/// Decodes and validates; any error-severity issue aborts.
pub fn parse_bundle(source: &str, path: &Path) -> Result<EvalBundle, BundleError> {
    let bundle = decode_bundle(source, path)?;
    let issues = validate_bundle(&bundle);
    if has_errors(&issues) {
        return Err(BundleError::Validation {
            path: path.to_path_buf(),
            issues: issues.into_iter().filter(|i| i.is_error()).collect(),
        });
    }
    Ok(bundle)
}

fn read_source(path: &Path) -> Result<String, BundleError> {
    fs::read_to_string(path).map_err(|source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a bundle file, applying fallbacks and rejecting invalid bundles.
pub fn read_bundle(path: impl AsRef<Path>) -> Result<EvalBundle, BundleError> {
    let path = path.as_ref();
    parse_bundle(&read_source(path)?, path)
}

/// Reads a bundle file with fallbacks applied but no validation.
pub fn read_bundle_unvalidated(path: impl AsRef<Path>) -> Result<EvalBundle, BundleError> {
    let path = path.as_ref();
    decode_bundle(&read_source(path)?, path)
}

/// Reads many bundles, results in input order.
pub fn read_bundles(paths: &[PathBuf], exec: Execution) -> Vec<Result<EvalBundle, BundleError>> {
    parallel::map(exec, paths, |p| read_bundle(p))
}

fn encode_embedding(e: &Embedding, encoding: Encoding) -> RawEmbedding {
    match encoding {
        Encoding::Decimal => RawEmbedding::Decimal(e.values().to_vec()),
        Encoding::Packed => {
            let bytes: Vec<u8> = e
                .values()
                .iter()
                .flat_map(|&v| (v as f32).to_le_bytes())
                .collect();
            RawEmbedding::Packed(RawPacked {
                b64: STANDARD.encode(bytes),
            })
        }
    }
}

fn encode_text(t: &TextSide, encoding: Encoding) -> RawText {
    RawText {
        text: t.text.clone(),
        global: encode_embedding(&t.global, encoding),
        phrases: t
            .phrases
            .iter()
            .map(|p| RawPhrase {
                triplet: p.triplet.clone(),
                text: p.text.clone(),
                embedding: encode_embedding(&p.embedding, encoding),
            })
            .collect(),
    }
}

/// Serializes a bundle to its canonical JSON text (pretty-printed, trailing newline).
pub fn encode_bundle(b: &EvalBundle, encoding: Encoding) -> String {
    let raw = RawBundle {
        version: FORMAT_VERSION,
        bundle_id: b.bundle_id.clone(),
        image_id: b.image_id.clone(),
        dim: b.dim,
        image: RawImage {
            global: encode_embedding(&b.image_global, encoding),
            regions: b
                .regions
                .iter()
                .map(|r| RawRegion {
                    region_id: r.region_id.clone(),
                    area_frac: r.area_frac,
                    bbox: r.bbox,
                    embedding: encode_embedding(&r.embedding, encoding),
                })
                .collect(),
        },
        candidate: encode_text(&b.candidate, encoding),
        references: b
            .references
            .iter()
            .map(|r| encode_text(r, encoding))
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&raw).expect("bundle values are serializable");
    out.push('\n');
    out
}

fn packed_overflow(b: &EvalBundle) -> Option<String> {
    let mut embeddings: Vec<(String, &Embedding)> = vec![("image.global".into(), &b.image_global)];
    for (k, r) in b.regions.iter().enumerate() {
        embeddings.push((format!("regions[{k}].embedding"), &r.embedding));
    }
    let sides = std::iter::once(("candidate".to_string(), &b.candidate)).chain(
        b.references
            .iter()
            .enumerate()
            .map(|(h, r)| (format!("references[{h}]"), r)),
    );
    for (prefix, side) in sides {
        embeddings.push((format!("{prefix}.global"), &side.global));
        for (m, p) in side.phrases.iter().enumerate() {
            embeddings.push((format!("{prefix}.phrases[{m}].embedding"), &p.embedding));
        }
    }
    embeddings
        .into_iter()
        .find(|(_, e)| e.values().iter().any(|&v| !(v as f32).is_finite()))
        .map(|(field, _)| field)
}

/// Writes a valid bundle atomically (temp file in the target directory, then rename).
pub fn write_bundle(
    b: &EvalBundle,
    path: impl AsRef<Path>,
    encoding: Encoding,
) -> Result<(), BundleError> {
    let path = path.as_ref();
    let issues = validate_bundle(b);
    if has_errors(&issues) {
        return Err(BundleError::Validation {
            path: path.to_path_buf(),
            issues: issues.into_iter().filter(|i| i.is_error()).collect(),
        });
    }
    if encoding == Encoding::Packed {
        if let Some(field) = packed_overflow(b) {
            return Err(BundleError::Schema {
                path: path.to_path_buf(),
                field,
                message: "value does not fit in a 32-bit float".into(),
            });
        }
    }
    write_atomic(path, encode_bundle(b, encoding).as_bytes())
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), BundleError> {
    let io_err = |source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}
