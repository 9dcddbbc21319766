//! Sentence segmentation, tokenization, and projection of gold terms onto
//! per-token KEYWORD / NONKEYWORD labels.
//!
//! Tokens keep both the raw surface piece and a normalized form (lowercased,
//! leading/trailing punctuation stripped). The de-identification placeholder
//! `XXXX` survives tokenization but is never labeled KEYWORD.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Report;

/// Norm of the de-identification placeholder.
pub const PLACEHOLDER_NORM: &str = "xxxx";

#[derive(Debug, Error)]
pub enum TextprepError {
    #[error("tokens do not match report {0:?} (stale or foreign token stream)")]
    MismatchedReport(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Token label: whether the word belongs to the report's gold annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "K")]
    Keyword,
    #[serde(rename = "O")]
    NonKeyword,
}

/// One token of a report's text stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Original whitespace-delimited piece, punctuation intact.
    pub surface: String,
    /// Lowercased form with leading/trailing punctuation stripped.
    pub norm: String,
    /// 0-based sentence index within the report stream.
    pub sentence_index: usize,
    /// 0-based position within the report token stream.
    pub position: usize,
}

/// Tokenized report text with one label per token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSequence {
    pub report_id: String,
    pub tokens: Vec<Token>,
    pub labels: Vec<Label>,
}

impl LabeledSequence {
    pub fn norms(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.norm.clone()).collect()
    }
}

/// Splits text into sentences at `.`, `!`, `?` followed by whitespace or end
/// of input.
///
/// Numbered-list markers are handled specially: `1.` at the start of a
/// sentence is not a terminator, and an enumerator appearing mid-sentence
/// starts a new sentence before it (impressions use `1. ... 2. ...` as list
/// markers).
pub fn segment_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut sent_start = 0usize; // char index
    let mut word_start = 0usize;

    let push = |start: usize, end: usize, out: &mut Vec<String>| {
        let s: String = chars[start..end].iter().collect();
        let s = s.trim();
        if !s.is_empty() {
            out.push(s.to_string());
        }
    };

    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            word_start = i + 1;
            i += 1;
            continue;
        }
        if matches!(c, '.' | '!' | '?') {
            let at_boundary = i + 1 >= chars.len() || chars[i + 1].is_whitespace();
            if at_boundary {
                let word: String = chars[word_start..i].iter().collect();
                let is_enumerator = !word.is_empty() && word.chars().all(|ch| ch.is_ascii_digit());
                let first_word_of_sentence = chars[sent_start..word_start]
                    .iter()
                    .all(|ch| ch.is_whitespace());
                if is_enumerator {
                    if !first_word_of_sentence {
                        // Mid-sentence list marker: break before it.
                        push(sent_start, word_start, &mut sentences);
                        sent_start = word_start;
                    }
                    // Marker itself never terminates its own sentence.
                } else {
                    push(sent_start, i + 1, &mut sentences);
                    sent_start = i + 1;
                }
            }
        }
        i += 1;
    }
    push(sent_start, chars.len(), &mut sentences);
    sentences
}

/// Tokenizes one sentence: split on whitespace, strip leading/trailing
/// non-alphanumeric characters, lowercase. Pieces that strip to nothing are
/// dropped; internal punctuation (hyphens) is preserved.
pub fn tokenize(sentence: &str) -> Vec<Token> {
    tokenize_into(sentence, 0, &mut 0)
}

fn tokenize_into(sentence: &str, sentence_index: usize, position: &mut usize) -> Vec<Token> {
    let mut tokens = Vec::new();
    for piece in sentence.split_whitespace() {
        let stripped = piece.trim_matches(|c: char| !c.is_alphanumeric());
        if stripped.is_empty() {
            continue;
        }
        tokens.push(Token {
            surface: piece.to_string(),
            norm: stripped.to_lowercase(),
            sentence_index,
            position: *position,
        });
        *position += 1;
    }
    tokens
}

/// Tokenizes a full report: Findings sentences followed by Impression
/// sentences, with sentence indices and positions continuing across the two
/// sections.
pub fn tokenize_report(report: &Report) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut position = 0usize;
    let mut sentence_index = 0usize;
    for section in [&report.findings, &report.impression] {
        for sentence in segment_sentences(section) {
            let toks = tokenize_into(&sentence, sentence_index, &mut position);
            if !toks.is_empty() {
                sentence_index += 1;
            }
            tokens.extend(toks);
        }
    }
    tokens
}

/// Normalized words of a term list: the concatenated ordered word list plus
/// the word multiset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TermWords {
    pub words: Vec<String>,
    pub counts: BTreeMap<String, usize>,
}

impl TermWords {
    pub fn word_set(&self) -> HashSet<&str> {
        self.counts.keys().map(String::as_str).collect()
    }
}

/// Tokenizes each term with the report tokenization rule and concatenates
/// the normalized words in order.
pub fn normalize_terms<S: AsRef<str>>(terms: &[S]) -> TermWords {
    let mut out = TermWords::default();
    for term in terms {
        for token in tokenize(term.as_ref()) {
            *out.counts.entry(token.norm.clone()).or_insert(0) += 1;
            out.words.push(token.norm);
        }
    }
    out
}

/// Labels each token KEYWORD when its norm occurs in the normalized gold
/// word set of `report.mesh_terms`; the `XXXX` placeholder is always
/// NONKEYWORD.
///
/// The token stream must have been produced from this report; it is checked
/// against a fresh tokenization and rejected if it disagrees.
pub fn label_tokens(report: &Report, tokens: Vec<Token>) -> Result<LabeledSequence, TextprepError> {
    let fresh = tokenize_report(report);
    if fresh.len() != tokens.len()
        || fresh
            .iter()
            .zip(tokens.iter())
            .any(|(a, b)| a.norm != b.norm || a.position != b.position)
    {
        return Err(TextprepError::MismatchedReport(report.id.clone()));
    }

    let gold = normalize_terms(&report.mesh_terms);
    let gold_set = gold.word_set();
    let labels = tokens
        .iter()
        .map(|t| {
            if t.norm != PLACEHOLDER_NORM && gold_set.contains(t.norm.as_str()) {
                Label::Keyword
            } else {
                Label::NonKeyword
            }
        })
        .collect();

    Ok(LabeledSequence {
        report_id: report.id.clone(),
        tokens,
        labels,
    })
}

/// Convenience: tokenize a report and label it in one step.
pub fn label_report(report: &Report) -> LabeledSequence {
    let tokens = tokenize_report(report);
    // Freshly tokenized streams always match themselves.
    label_tokens(report, tokens).expect("fresh tokenization cannot mismatch")
}

#[derive(Serialize, Deserialize)]
struct LabeledRecord {
    id: String,
    tokens: Vec<String>,
    labels: Vec<Label>,
}

/// Writes labeled sequences as JSONL (`tokens` carry the normalized forms,
/// labels are `"K"` / `"O"`).
pub fn save_labeled_jsonl(
    sequences: &[LabeledSequence],
    path: impl AsRef<Path>,
) -> Result<(), TextprepError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    for seq in sequences {
        let record = LabeledRecord {
            id: seq.report_id.clone(),
            tokens: seq.norms(),
            labels: seq.labels.clone(),
        };
        serde_json::to_writer(&mut w, &record).map_err(|e| TextprepError::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads labeled sequences from JSONL. Sentence indices are not stored in
/// the file; loaded tokens carry sentence index 0 and sequential positions.
pub fn load_labeled_jsonl(path: impl AsRef<Path>) -> Result<Vec<LabeledSequence>, TextprepError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut sequences = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: LabeledRecord =
            serde_json::from_str(&line).map_err(|e| TextprepError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        if record.tokens.len() != record.labels.len() {
            return Err(TextprepError::Parse {
                line: line_no,
                message: format!(
                    "{} tokens but {} labels",
                    record.tokens.len(),
                    record.labels.len()
                ),
            });
        }
        let tokens = record
            .tokens
            .into_iter()
            .enumerate()
            .map(|(position, norm)| Token {
                surface: norm.clone(),
                norm,
                sentence_index: 0,
                position,
            })
            .collect();
        sequences.push(LabeledSequence {
            report_id: record.id,
            tokens,
            labels: record.labels,
        });
    }
    Ok(sequences)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn report(findings: &str, impression: &str, terms: &[&str]) -> Report {
        Report {
            id: "t1".into(),
            findings: findings.into(),
            impression: impression.into(),
            mesh_terms: terms.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn splits_plain_sentences() {
        assert_eq!(
            segment_sentences("No pneumothorax. No pleural effusion."),
            vec!["No pneumothorax.", "No pleural effusion."]
        );
    }

    #[test]
    fn empty_text_gives_no_sentences() {
        assert!(segment_sentences("").is_empty());
        assert!(segment_sentences("   ").is_empty());
    }

    #[test]
    fn enumerators_split_before_the_marker() {
        let sents = segment_sentences(
            "1. Cardiomegaly and small bilateral pleural effusions 2. Abnormal pulmonary opacities",
        );
        assert_eq!(
            sents,
            vec![
                "1. Cardiomegaly and small bilateral pleural effusions",
                "2. Abnormal pulmonary opacities",
            ]
        );
    }

    #[test]
    fn decimal_numbers_do_not_terminate() {
        assert_eq!(
            segment_sentences("Nodule measures 3.5 cm. Unchanged."),
            vec!["Nodule measures 3.5 cm.", "Unchanged."]
        );
    }

    #[test]
    fn tokenize_strips_trailing_punctuation() {
        let norms: Vec<String> = tokenize("calcified granuloma.")
            .into_iter()
            .map(|t| t.norm)
            .collect();
        assert_eq!(norms, vec!["calcified", "granuloma"]);
    }

    #[test]
    fn tokenize_keeps_placeholder() {
        let norms: Vec<String> = tokenize("costophrenic XXXX blunting")
            .into_iter()
            .map(|t| t.norm)
            .collect();
        assert_eq!(norms, vec!["costophrenic", "xxxx", "blunting"]);
    }

    #[test]
    fn punctuation_only_pieces_are_dropped() {
        assert!(tokenize("\u{2014}").is_empty());
        assert!(tokenize("... -- !!").is_empty());
    }

    #[test]
    fn internal_hyphens_survive() {
        let norms: Vec<String> = tokenize("non-small x-ray.")
            .into_iter()
            .map(|t| t.norm)
            .collect();
        assert_eq!(norms, vec!["non-small", "x-ray"]);
    }

    #[test]
    fn normalize_terms_flattens_words() {
        let tw = normalize_terms(&["Aorta, Thoracic", "Cicatrix", "Costophrenic Angle", "Thickening"]);
        assert_eq!(
            tw.words,
            vec!["aorta", "thoracic", "cicatrix", "costophrenic", "angle", "thickening"]
        );
    }

    #[test]
    fn normalize_terms_counts_multiset() {
        let tw = normalize_terms(&["Pleural Effusion", "Effusion"]);
        assert_eq!(tw.counts.get("effusion"), Some(&2));
        assert_eq!(tw.counts.get("pleural"), Some(&1));
        assert!(normalize_terms::<&str>(&[]).words.is_empty());
    }

    #[test]
    fn labels_follow_gold_word_set() {
        let r = report(
            "No focal airspace disease or pneumothorax. Stable calcified granuloma.",
            "",
            &["Calcified Granuloma"],
        );
        let seq = label_report(&r);
        let labeled: Vec<(&str, Label)> = seq
            .tokens
            .iter()
            .zip(seq.labels.iter())
            .map(|(t, l)| (t.norm.as_str(), *l))
            .collect();
        for (norm, label) in &labeled {
            let expected = if *norm == "calcified" || *norm == "granuloma" {
                Label::Keyword
            } else {
                Label::NonKeyword
            };
            assert_eq!(*label, expected, "token {norm}");
        }
        // "pneumothorax" appears in the text but not in gold.
        assert!(labeled.iter().any(|(n, l)| *n == "pneumothorax" && *l == Label::NonKeyword));
    }

    #[test]
    fn empty_gold_labels_everything_nonkeyword() {
        let r = report("Stable calcified granuloma.", "Normal.", &[]);
        let seq = label_report(&r);
        assert!(seq.labels.iter().all(|l| *l == Label::NonKeyword));
    }

    #[test]
    fn repeated_gold_word_labels_every_occurrence() {
        let r = report(
            "Pleural thickening on the right. Apical thickening noted.",
            "",
            &["Thickening"],
        );
        let seq = label_report(&r);
        let keyword_norms: Vec<&str> = seq
            .tokens
            .iter()
            .zip(&seq.labels)
            .filter(|(_, l)| **l == Label::Keyword)
            .map(|(t, _)| t.norm.as_str())
            .collect();
        assert_eq!(keyword_norms, vec!["thickening", "thickening"]);
    }

    #[test]
    fn placeholder_is_never_keyword() {
        let r = report("Costophrenic XXXX blunting.", "", &["XXXX", "Blunting"]);
        let seq = label_report(&r);
        for (t, l) in seq.tokens.iter().zip(&seq.labels) {
            if t.norm == PLACEHOLDER_NORM {
                assert_eq!(*l, Label::NonKeyword);
            }
        }
    }

    #[test]
    fn mismatched_tokens_are_rejected() {
        let r1 = report("Stable granuloma.", "", &[]);
        let r2 = report("No effusion.", "", &[]);
        let tokens = tokenize_report(&r2);
        assert!(matches!(
            label_tokens(&r1, tokens),
            Err(TextprepError::MismatchedReport(_))
        ));
    }

    #[test]
    fn labeling_ignores_gold_term_order() {
        let mut r = report("Opacity and cardiomegaly seen.", "", &["Opacity", "Cardiomegaly"]);
        let a = label_report(&r);
        r.mesh_terms.reverse();
        let b = label_report(&r);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn report_stream_spans_sections() {
        let r = report("One two. Three four.", "Five six.", &[]);
        let tokens = tokenize_report(&r);
        let positions: Vec<usize> = tokens.iter().map(|t| t.position).collect();
        assert_eq!(positions, (0..6).collect::<Vec<_>>());
        let sentences: Vec<usize> = tokens.iter().map(|t| t.sentence_index).collect();
        assert_eq!(sentences, vec![0, 0, 1, 1, 2, 2]);
    }

    #[test]
    fn labeled_jsonl_round_trips() {
        let r = report("No acute disease. Opacity noted.", "", &["Opacity"]);
        let seq = label_report(&r);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labeled.jsonl");
        save_labeled_jsonl(std::slice::from_ref(&seq), &path).unwrap();
        let loaded = load_labeled_jsonl(&path).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded[0].report_id, seq.report_id);
        assert_eq!(loaded[0].labels, seq.labels);
        assert_eq!(
            loaded[0].norms(),
            seq.norms()
        );
    }

    proptest! {
        #[test]
        fn norms_are_lowercase_and_nonempty(text in "[ -~]{0,80}") {
            for token in tokenize(&text) {
                prop_assert!(!token.norm.is_empty());
                prop_assert!(!token.norm.chars().any(char::is_whitespace));
                prop_assert!(!token.norm.chars().any(char::is_uppercase));
            }
        }

        #[test]
        fn label_count_matches_token_count(
            findings in "[a-zA-Z .,]{0,120}",
            terms in proptest::collection::vec("[a-zA-Z ]{1,20}", 0..4),
        ) {
            let r = Report {
                id: "p".into(),
                findings,
                impression: String::new(),
                mesh_terms: terms,
            };
            let seq = label_report(&r);
            prop_assert_eq!(seq.tokens.len(), seq.labels.len());
            // Every KEYWORD token's norm is in the gold word set.
            let gold = normalize_terms(&r.mesh_terms);
            let gold_set = gold.word_set();
            for (t, l) in seq.tokens.iter().zip(&seq.labels) {
                if *l == Label::Keyword {
                    prop_assert!(gold_set.contains(t.norm.as_str()));
                }
            }
        }
    }
}
