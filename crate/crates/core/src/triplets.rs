//! Rule-based subject-predicate-object extraction from captions.
//!
//! This is a deterministic stand-in for a learned scene-graph parser. Bundles
//! produced upstream carry their own parsed triplets and never pass through
//! here; the extractor serves tooling and quick inspection.
//!
//! Pipeline, per input text:
//!
//! 1. lowercase and tokenize; `.,;:!?` and line breaks end a clause;
//! 2. coordinating conjunctions (`and`, `but`, `or`, ...) also end a clause;
//! 3. articles are dropped;
//! 4. the first lexicon token after the clause's first token starts the
//!    predicate, which extends over the following run of lexicon tokens;
//! 5. tokens before the predicate form the subject, tokens after it the object;
//! 6. a clause without a predicate becomes a degenerate triplet holding the
//!    whole clause as its subject.
//!
//! A clause that opens with a predicate ("... and jumping over a fence")
//! borrows the subject of the previous clause when there is one.

use std::collections::HashSet;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const ARTICLES: [&str; 3] = ["a", "an", "the"];
const CONJUNCTIONS: [&str; 7] = ["and", "but", "or", "nor", "yet", "while", "whereas"];
const BUILTIN_LEXICON: &str = include_str!("../data/predicates-v1.txt");

/// A subject-predicate-object decomposition of one clause.
///
/// Serialized as a three-element array `[subject, predicate, object]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[String; 3]", into = "[String; 3]")]
pub struct Triplet {
    pub subject: String,
    /// Empty only for degenerate (predicate-less) clauses.
    pub predicate: String,
    /// Empty for intransitive clauses.
    pub object: String,
}

impl Triplet {
    pub fn new(
        subject: impl Into<String>,
        predicate: impl Into<String>,
        object: impl Into<String>,
    ) -> Self {
        Self {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
        }
    }

    /// A triplet standing for a whole clause or sentence.
    pub fn degenerate(text: impl Into<String>) -> Self {
        Self::new(text, "", "")
    }

    pub fn is_degenerate(&self) -> bool {
        self.predicate.is_empty() && self.object.is_empty()
    }
}

impl From<[String; 3]> for Triplet {
    fn from([subject, predicate, object]: [String; 3]) -> Self {
        Self {
            subject,
            predicate,
            object,
        }
    }
}

impl From<Triplet> for [String; 3] {
    fn from(t: Triplet) -> Self {
        [t.subject, t.predicate, t.object]
    }
}

impl fmt::Display for Triplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} | {} | {}", self.subject, self.predicate, self.object)
    }
}

/// Joins the non-empty parts with single spaces: `(man, with, bike)` renders
/// as `"man with bike"`.
pub fn render_phrase(t: &Triplet) -> String {
    [&t.subject, &t.predicate, &t.object]
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexiconError {
    #[error("line {line}: predicate `{entry}` must be a single token")]
    MultiToken { line: usize, entry: String },
    #[error("line {line}: `{entry}` is an article or conjunction and cannot be a predicate")]
    Reserved { line: usize, entry: String },
    #[error("lexicon has no entries")]
    Empty,
}

/// Closed set of predicate tokens, loaded from a plain-text file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    version: Option<String>,
    words: HashSet<String>,
}

impl Lexicon {
    /// Parses the lexicon format: UTF-8, one predicate per line, `#` starts a
    /// comment. A `# version: X` comment line records the lexicon version.
    pub fn parse(source: &str) -> Result<Self, LexiconError> {
        let mut version = None;
        let mut words = HashSet::new();
        for (i, raw) in source.lines().enumerate() {
            let (content, comment) = match raw.split_once('#') {
                Some((c, rest)) => (c, Some(rest)),
                None => (raw, None),
            };
            if let Some(v) = comment.and_then(|c| c.trim().strip_prefix("version:")) {
                version = Some(v.trim().to_string());
            }
            let entry = content.trim().to_lowercase();
            if entry.is_empty() {
                continue;
            }
            if entry.split_whitespace().count() > 1 {
                return Err(LexiconError::MultiToken { line: i + 1, entry });
            }
            if ARTICLES.contains(&entry.as_str()) || CONJUNCTIONS.contains(&entry.as_str()) {
                return Err(LexiconError::Reserved { line: i + 1, entry });
            }
            words.insert(entry);
        }
        if words.is_empty() {
            return Err(LexiconError::Empty);
        }
        Ok(Self { version, words })
    }

    /// The lexicon shipped with the crate.
    pub fn builtin() -> &'static Lexicon {
        static LEXICON: OnceLock<Lexicon> = OnceLock::new();
        LEXICON.get_or_init(|| Lexicon::parse(BUILTIN_LEXICON).expect("builtin lexicon is valid"))
    }

    pub fn version(&self) -> Option<&str> {
        self.version.as_deref()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Entries in sorted order.
    pub fn words(&self) -> Vec<&str> {
        let mut w: Vec<&str> = self.words.iter().map(String::as_str).collect();
        w.sort_unstable();
        w
    }
}

fn is_clause_break(c: char) -> bool {
    matches!(c, '.' | ',' | ';' | ':' | '!' | '?' | '\n' | '\r')
}

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '-'
}

/// Lowercases and splits `text` into clauses of tokens, breaking at clause
/// punctuation and conjunctions.
fn clauses(text: &str) -> Vec<Vec<String>> {
    let lower = text.to_lowercase();
    let mut out = Vec::new();
    let mut clause: Vec<String> = Vec::new();
    let mut token = String::new();

    let flush_token = |token: &mut String, clause: &mut Vec<String>, out: &mut Vec<Vec<String>>| {
        if token.is_empty() {
            return;
        }
        let t = std::mem::take(token);
        if CONJUNCTIONS.contains(&t.as_str()) {
            if !clause.is_empty() {
                out.push(std::mem::take(clause));
            }
        } else {
            clause.push(t);
        }
    };

    for c in lower.chars() {
        if is_token_char(c) {
            token.push(c);
        } else {
            flush_token(&mut token, &mut clause, &mut out);
            if is_clause_break(c) && !clause.is_empty() {
                out.push(std::mem::take(&mut clause));
            }
        }
    }
    flush_token(&mut token, &mut clause, &mut out);
    if !clause.is_empty() {
        out.push(clause);
    }
    out
}

/// Extracts triplets using a given predicate lexicon.
#[derive(Debug, Clone, Copy)]
pub struct TripletExtractor<'a> {
    lexicon: &'a Lexicon,
}

impl Default for TripletExtractor<'static> {
    fn default() -> Self {
        Self::new(Lexicon::builtin())
    }
}

impl<'a> TripletExtractor<'a> {
    pub fn new(lexicon: &'a Lexicon) -> Self {
        Self { lexicon }
    }

    pub fn extract(&self, text: &str) -> Vec<Triplet> {
        let mut out = Vec::new();
        let mut last_subject: Option<String> = None;
        for clause in clauses(text) {
            let tokens: Vec<&str> = clause
                .iter()
                .map(String::as_str)
                .filter(|t| !ARTICLES.contains(t))
                .collect();
            if tokens.is_empty() {
                continue;
            }
            let leading = tokens
                .iter()
                .take_while(|t| self.lexicon.contains(t))
                .count();
            let triplet = if leading > 0 && leading < tokens.len() && last_subject.is_some() {
                // predicate-initial clause continuing the previous subject
                Triplet::new(
                    last_subject.clone().unwrap_or_default(),
                    tokens[..leading].join(" "),
                    tokens[leading..].join(" "),
                )
            } else if let Some(start) =
                (1..tokens.len()).find(|&i| self.lexicon.contains(tokens[i]))
            {
                let end = start
                    + tokens[start..]
                        .iter()
                        .take_while(|t| self.lexicon.contains(t))
                        .count();
                Triplet::new(
                    tokens[..start].join(" "),
                    tokens[start..end].join(" "),
                    tokens[end..].join(" "),
                )
            } else {
                Triplet::degenerate(tokens.join(" "))
            };
            if !triplet.is_degenerate() {
                last_subject = Some(triplet.subject.clone());
            }
            out.push(triplet);
        }
        out
    }
}

/// Extracts triplets with the built-in lexicon.
pub fn extract_triplets(text: &str) -> Vec<Triplet> {
    TripletExtractor::default().extract(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn man_with_bike() {
        assert_eq!(
            extract_triplets("a man with a bike"),
            vec![Triplet::new("man", "with", "bike")]
        );
    }

    #[test]
    fn empty_input() {
        assert!(extract_triplets("").is_empty());
        assert!(extract_triplets("  , . the ").is_empty());
    }

    #[test]
    fn dog_chases_ball() {
        assert_eq!(
            extract_triplets("a dog chases a ball"),
            vec![Triplet::new("dog", "chases", "ball")]
        );
    }

    #[test]
    fn predicate_runs_and_adjectives() {
        assert_eq!(
            extract_triplets("The black dog is sitting on a red couch."),
            vec![Triplet::new("black dog", "is sitting on", "red couch")]
        );
    }

    #[test]
    fn conjunctions_split_clauses() {
        assert_eq!(
            extract_triplets("A man riding a horse and jumping over a fence"),
            vec![
                Triplet::new("man", "riding", "horse"),
                Triplet::new("man", "jumping over", "fence"),
            ]
        );
        assert_eq!(
            extract_triplets("a man and a woman on a bench"),
            vec![
                Triplet::degenerate("man"),
                Triplet::new("woman", "on", "bench")
            ]
        );
    }

    #[test]
    fn degenerate_and_intransitive_clauses() {
        assert_eq!(
            extract_triplets("Sunset."),
            vec![Triplet::degenerate("sunset")]
        );
        assert_eq!(
            extract_triplets("a child running"),
            vec![Triplet::new("child", "running", "")]
        );
    }

    #[test]
    fn render_examples() {
        assert_eq!(
            render_phrase(&Triplet::new("man", "with", "bike")),
            "man with bike"
        );
        assert_eq!(render_phrase(&Triplet::degenerate("dog")), "dog");
        assert_eq!(
            render_phrase(&Triplet::new("woman", "riding", "horse")),
            "woman riding horse"
        );
    }

    #[test]
    fn lexicon_parsing() {
        let lex = Lexicon::parse("# version: 7\nwith # trailing\n\nON\n").unwrap();
        assert_eq!(lex.version(), Some("7"));
        assert_eq!(lex.words(), ["on", "with"]);
        assert_eq!(
            Lexicon::parse("next to\n"),
            Err(LexiconError::MultiToken {
                line: 1,
                entry: "next to".into()
            })
        );
        assert!(matches!(
            Lexicon::parse("and\n"),
            Err(LexiconError::Reserved { .. })
        ));
        assert_eq!(Lexicon::parse("# nothing\n"), Err(LexiconError::Empty));
        assert_eq!(Lexicon::builtin().version(), Some("1"));
    }

    #[test]
    fn custom_lexicon_changes_behaviour() {
        let lex = Lexicon::parse("beside\n").unwrap();
        let ex = TripletExtractor::new(&lex);
        assert_eq!(
            ex.extract("a man with a bike"),
            vec![Triplet::degenerate("man with bike")]
        );
    }

    #[test]
    fn triplet_serializes_as_array() {
        let t = Triplet::new("man", "with", "bike");
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, r#"["man","with","bike"]"#);
        assert_eq!(serde_json::from_str::<Triplet>(&json).unwrap(), t);
    }

    #[test]
    fn every_lexicon_predicate_reparses() {
        for p in Lexicon::builtin().words() {
            let t = Triplet::new("cat", p, "mat");
            assert_eq!(
                extract_triplets(&render_phrase(&t)),
                vec![t],
                "predicate {p}"
            );
        }
    }

    fn word() -> impl Strategy<Value = String> {
        "[a-z]{2,8}".prop_filter("plain noun", |w| {
            !Lexicon::builtin().contains(w)
                && !ARTICLES.contains(&w.as_str())
                && !CONJUNCTIONS.contains(&w.as_str())
        })
    }

    fn is_subsequence(needle: &[&str], hay: &[&str]) -> bool {
        let mut it = hay.iter();
        needle.iter().all(|n| it.any(|h| h == n))
    }

    proptest! {
        #[test]
        fn simple_triplets_reparse(s in word(), o in word(), idx in 0usize..200) {
            let words = Lexicon::builtin().words();
            let p = words[idx % words.len()];
            let t = Triplet::new(s, p, o);
            prop_assert_eq!(extract_triplets(&render_phrase(&t)), vec![t]);
        }

        #[test]
        fn output_is_bounded_and_ordered(text in "[a-z ,.]{0,60}") {
            let first = extract_triplets(&text);
            prop_assert_eq!(&first, &extract_triplets(&text));
            prop_assert!(first.len() <= clauses(&text).len());
            let input: Vec<String> = clauses(&text).concat();
            let input: Vec<&str> = input.iter().map(String::as_str).collect();
            for t in &first {
                let rendered = render_phrase(t);
                prop_assert!(!rendered.is_empty());
                let toks: Vec<&str> = rendered.split(' ').collect();
                prop_assert!(is_subsequence(&toks, &input), "{:?} not in {:?}", toks, input);
            }
        }
    }
}
