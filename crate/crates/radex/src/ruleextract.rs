//! Negation-aware dictionary baseline.
//!
//! A plain lexicon scan over a radiology report extracts negated findings
//! ("no pleural effusion" mentions the term but asserts its absence); this
//! module pairs longest-match phrase search with NegEx-style cue/scope
//! detection so only non-negated mentions survive.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::ops::Range;
use std::path::Path;

use thiserror::Error;

use crate::corpus::Report;
use crate::textprep::{tokenize, tokenize_report, Token};

const DEFAULT_LEXICON: &str = include_str!("../assets/lexicon_default.txt");
const DEFAULT_CUES: &str = include_str!("../assets/negation_cues.txt");
const DEFAULT_CONJUNCTIONS: &str = include_str!("../assets/negation_conjunctions.txt");

/// Longest phrase a lexicon entry may contain.
pub const MAX_ENTRY_WORDS: usize = 4;

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("lexicon entry {0:?} exceeds {MAX_ENTRY_WORDS} words")]
    EntryTooLong(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Set of normalized pathology terms, each 1–4 words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    entries: BTreeSet<String>,
    max_words: usize,
}

impl Lexicon {
    /// Builds a lexicon from raw term strings. Terms are normalized with the
    /// report tokenization rule; empties are skipped.
    pub fn from_terms<S: AsRef<str>>(terms: impl IntoIterator<Item = S>) -> Result<Self, RuleError> {
        let mut entries = BTreeSet::new();
        let mut max_words = 0;
        for term in terms {
            let norms: Vec<String> = tokenize(term.as_ref()).into_iter().map(|t| t.norm).collect();
            if norms.is_empty() {
                continue;
            }
            if norms.len() > MAX_ENTRY_WORDS {
                return Err(RuleError::EntryTooLong(term.as_ref().to_string()));
            }
            max_words = max_words.max(norms.len());
            entries.insert(norms.join(" "));
        }
        Ok(Lexicon { entries, max_words })
    }

    /// Parses `text` as one term per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, RuleError> {
        Self::from_terms(noncomment_lines(text))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RuleError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// The built-in vocabulary: single-word pathology terms plus multiword
    /// finding phrases.
    pub fn default_clinical() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("embedded lexicon is valid")
    }

    pub fn insert(&mut self, term: &str) -> Result<(), RuleError> {
        let norms: Vec<String> = tokenize(term).into_iter().map(|t| t.norm).collect();
        if norms.is_empty() {
            return Ok(());
        }
        if norms.len() > MAX_ENTRY_WORDS {
            return Err(RuleError::EntryTooLong(term.to_string()));
        }
        self.max_words = self.max_words.max(norms.len());
        self.entries.insert(norms.join(" "));
        Ok(())
    }

    pub fn contains(&self, normalized: &str) -> bool {
        self.entries.contains(normalized)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_phrase_words(&self) -> usize {
        self.max_words
    }
}

fn noncomment_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(|l| match l.find('#') {
            Some(i) => l[..i].trim(),
            None => l.trim(),
        })
        .filter(|l| !l.is_empty())
}

/// Negation cue and scope-closing conjunction vocabulary. Cues may span
/// multiple words; a multiword cue triggers only when fully present.
#[derive(Debug, Clone)]
pub struct NegationConfig {
    cues: Vec<Vec<String>>,
    conjunctions: HashSet<String>,
}

impl NegationConfig {
    pub fn new<S: AsRef<str>>(cues: &[S], conjunctions: &[S]) -> Self {
        let mut cue_seqs: Vec<Vec<String>> = cues
            .iter()
            .map(|c| tokenize(c.as_ref()).into_iter().map(|t| t.norm).collect())
            .filter(|c: &Vec<String>| !c.is_empty())
            .collect();
        // Longest cue wins when several start at the same token.
        cue_seqs.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        cue_seqs.dedup();
        NegationConfig {
            cues: cue_seqs,
            conjunctions: conjunctions
                .iter()
                .flat_map(|c| tokenize(c.as_ref()).into_iter().map(|t| t.norm))
                .collect(),
        }
    }

    /// Loads cue and conjunction vocabularies from text files, one entry per
    /// line, `#` comments.
    pub fn load(
        cues_path: impl AsRef<Path>,
        conjunctions_path: impl AsRef<Path>,
    ) -> Result<Self, RuleError> {
        let cues = fs::read_to_string(cues_path)?;
        let conjunctions = fs::read_to_string(conjunctions_path)?;
        Ok(Self::new(
            &noncomment_lines(&cues).collect::<Vec<_>>(),
            &noncomment_lines(&conjunctions).collect::<Vec<_>>(),
        ))
    }

    /// No cues at all: negation detection disabled.
    pub fn disabled() -> Self {
        NegationConfig {
            cues: Vec::new(),
            conjunctions: HashSet::new(),
        }
    }
}

impl Default for NegationConfig {
    fn default() -> Self {
        Self::new(
            &noncomment_lines(DEFAULT_CUES).collect::<Vec<_>>(),
            &noncomment_lines(DEFAULT_CONJUNCTIONS).collect::<Vec<_>>(),
        )
    }
}

/// Token span governed by one negation cue. Positions refer to
/// [`Token::position`] values; the span never crosses a sentence boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegationScope {
    pub sentence_index: usize,
    pub trigger: usize,
    pub span: Range<usize>,
}

/// Finds negation scopes with the default cue vocabulary.
pub fn detect_negation(tokens: &[Token]) -> Vec<NegationScope> {
    detect_negation_with(tokens, &NegationConfig::default())
}

/// Finds negation scopes: each cue opens a scope running from the token after
/// the cue to the end of the sentence, or up to (excluding) the first
/// scope-closing conjunction. A cue with nothing after it yields an empty
/// scope.
pub fn detect_negation_with(tokens: &[Token], config: &NegationConfig) -> Vec<NegationScope> {
    let mut scopes = Vec::new();
    for sentence in sentence_slices(tokens) {
        let mut i = 0;
        while i < sentence.len() {
            let cue_len = config.cues.iter().find_map(|cue| {
                let matches = cue.len() <= sentence.len() - i
                    && cue
                        .iter()
                        .zip(&sentence[i..i + cue.len()])
                        .all(|(c, t)| *c == t.norm);
                matches.then_some(cue.len())
            });
            match cue_len {
                Some(len) => {
                    let body = &sentence[i + len..];
                    let close = body
                        .iter()
                        .position(|t| config.conjunctions.contains(&t.norm))
                        .unwrap_or(body.len());
                    let span = if close == 0 {
                        let at = body
                            .first()
                            .map_or(sentence[i + len - 1].position + 1, |t| t.position);
                        at..at
                    } else {
                        body[0].position..body[close - 1].position + 1
                    };
                    scopes.push(NegationScope {
                        sentence_index: sentence[i].sentence_index,
                        trigger: sentence[i].position,
                        span,
                    });
                    i += len;
                }
                None => i += 1,
            }
        }
    }
    scopes
}

fn sentence_slices(tokens: &[Token]) -> Vec<&[Token]> {
    let mut slices = Vec::new();
    let mut start = 0;
    for i in 1..=tokens.len() {
        if i == tokens.len() || tokens[i].sentence_index != tokens[start].sentence_index {
            slices.push(&tokens[start..i]);
            start = i;
        }
    }
    slices
}

/// Extracts non-negated lexicon terms from a report with the default
/// negation vocabulary.
pub fn extract_dictionary(report: &Report, lexicon: &Lexicon) -> Vec<String> {
    extract_dictionary_with(report, lexicon, &NegationConfig::default())
}

/// Longest-match lexicon scan over the report's normalized token stream.
/// Matches must lie within one sentence (placeholder tokens break phrases);
/// a match wholly inside a negation scope is discarded. Surviving terms come
/// back in text order with duplicates collapsed to the first occurrence.
pub fn extract_dictionary_with(
    report: &Report,
    lexicon: &Lexicon,
    negation: &NegationConfig,
) -> Vec<String> {
    let tokens = tokenize_report(report);
    let scopes = detect_negation_with(&tokens, negation);
    let max_len = lexicon.max_phrase_words().clamp(1, MAX_ENTRY_WORDS);

    let mut found = Vec::new();
    let mut seen = HashSet::new();
    let mut i = 0;
    while i < tokens.len() {
        let mut advanced = false;
        for len in (1..=max_len.min(tokens.len() - i)).rev() {
            let window = &tokens[i..i + len];
            if window
                .iter()
                .any(|t| t.sentence_index != window[0].sentence_index)
            {
                continue;
            }
            let phrase = window
                .iter()
                .map(|t| t.norm.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            if !lexicon.contains(&phrase) {
                continue;
            }
            let start = window[0].position;
            let end = window[len - 1].position + 1;
            let negated = scopes.iter().any(|s| {
                s.sentence_index == window[0].sentence_index
                    && s.span.start <= start
                    && end <= s.span.end
            });
            if !negated && seen.insert(phrase.clone()) {
                found.push(phrase);
            }
            i += len;
            advanced = true;
            break;
        }
        if !advanced {
            i += 1;
        }
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::tokenize_report;

    fn report(findings: &str, impression: &str) -> Report {
        Report {
            id: "r".into(),
            findings: findings.into(),
            impression: impression.into(),
            mesh_terms: vec![],
        }
    }

    fn fig1_lexicon() -> Lexicon {
        Lexicon::from_terms([
            "pleural effusion",
            "pneumothorax",
            "calcified granuloma",
            "focal airspace disease",
        ])
        .unwrap()
    }

    #[test]
    fn cue_opens_scope_to_sentence_end() {
        let tokens = tokenize_report(&report("No focal airspace disease.", ""));
        let scopes = detect_negation(&tokens);
        assert_eq!(scopes.len(), 1);
        assert_eq!(scopes[0].trigger, 0);
        assert_eq!(scopes[0].span, 1..4);
    }

    #[test]
    fn no_cue_no_scope() {
        let tokens = tokenize_report(&report("Stable calcified granuloma.", ""));
        assert!(detect_negation(&tokens).is_empty());
    }

    #[test]
    fn or_does_not_close_scope() {
        let tokens = tokenize_report(&report("No pneumothorax or pleural effusion.", ""));
        let scopes = detect_negation(&tokens);
        assert_eq!(scopes.len(), 1);
        // Covers "pneumothorax or pleural effusion".
        assert_eq!(scopes[0].span, 1..5);
    }

    #[test]
    fn conjunction_closes_scope() {
        let tokens = tokenize_report(&report(
            "No pleural effusion but thickening is present.",
            "",
        ));
        let scopes = detect_negation(&tokens);
        assert_eq!(scopes.len(), 1);
        // Scope stops before "but"; "thickening" stays outside.
        assert_eq!(scopes[0].span, 1..3);
    }

    #[test]
    fn bare_cue_yields_empty_scope() {
        let tokens = tokenize_report(&report("No.", ""));
        let scopes = detect_negation(&tokens);
        assert_eq!(scopes.len(), 1);
        assert!(scopes[0].span.is_empty());
    }

    #[test]
    fn multiword_cue_requires_full_phrase() {
        // "free" alone must not negate ("free air" is a finding).
        let tokens = tokenize_report(&report("Free air under the diaphragm.", ""));
        assert!(detect_negation(&tokens).is_empty());

        let tokens = tokenize_report(&report("Lungs are free of effusion.", ""));
        let scopes = detect_negation(&tokens);
        assert_eq!(scopes.len(), 1);
        assert_eq!(scopes[0].trigger, 2);
        assert_eq!(scopes[0].span, 4..5);
    }

    #[test]
    fn scope_stays_within_sentence() {
        let tokens = tokenize_report(&report("No pneumothorax. Small pleural effusion.", ""));
        let scopes = detect_negation(&tokens);
        assert_eq!(scopes.len(), 1);
        assert_eq!(scopes[0].sentence_index, 0);
        assert_eq!(scopes[0].span, 1..2);
    }

    #[test]
    fn negated_terms_are_suppressed() {
        let r = report(
            "The lungs are clear of focal airspace disease. No pleural effusion or pneumothorax. \
             Stable calcified granuloma.",
            "",
        );
        assert_eq!(
            extract_dictionary(&r, &fig1_lexicon()),
            vec!["calcified granuloma"]
        );
    }

    #[test]
    fn disjoint_lexicon_extracts_nothing() {
        let r = report("Normal heart.", "");
        assert!(extract_dictionary(&r, &fig1_lexicon()).is_empty());
    }

    #[test]
    fn positive_mention_survives_negated_sentence_elsewhere() {
        let r = report("No pneumothorax. Small pleural effusion.", "");
        assert_eq!(
            extract_dictionary(&r, &fig1_lexicon()),
            vec!["pleural effusion"]
        );
    }

    #[test]
    fn longest_match_wins() {
        let lexicon = Lexicon::from_terms(["effusion", "pleural effusion"]).unwrap();
        let r = report("Small pleural effusion persists.", "");
        assert_eq!(extract_dictionary(&r, &lexicon), vec!["pleural effusion"]);
    }

    #[test]
    fn placeholder_breaks_phrases() {
        let lexicon = Lexicon::from_terms(["costophrenic angle"]).unwrap();
        let r = report("Mild costophrenic XXXX blunting.", "");
        assert!(extract_dictionary(&r, &lexicon).is_empty());
    }

    #[test]
    fn duplicates_collapse_to_first_occurrence() {
        let lexicon = Lexicon::from_terms(["opacity"]).unwrap();
        let r = report("Opacity in the base. Persistent opacity.", "");
        assert_eq!(extract_dictionary(&r, &lexicon), vec!["opacity"]);
    }

    #[test]
    fn disabled_negation_extracts_negated_mentions() {
        let r = report("No pneumothorax.", "");
        let with = extract_dictionary(&r, &fig1_lexicon());
        let without = extract_dictionary_with(&r, &fig1_lexicon(), &NegationConfig::disabled());
        assert!(with.is_empty());
        assert_eq!(without, vec!["pneumothorax"]);
    }

    #[test]
    fn unrelated_entry_is_monotone() {
        let r = report("No pneumothorax. Small pleural effusion.", "");
        let base = extract_dictionary(&r, &fig1_lexicon());
        let mut bigger = fig1_lexicon();
        bigger.insert("zygomatic arch fracture").unwrap();
        let grown = extract_dictionary(&r, &bigger);
        for term in &base {
            assert!(grown.contains(term));
        }
    }

    #[test]
    fn fully_negated_report_extracts_nothing() {
        let r = report(
            "No pleural effusion. No pneumothorax.",
            "Negative for focal airspace disease.",
        );
        assert!(extract_dictionary(&r, &fig1_lexicon()).is_empty());
    }

    #[test]
    fn extracted_terms_occur_contiguously() {
        let lexicon = Lexicon::default_clinical();
        let r = report(
            "Stable calcified granuloma. Costophrenic angle blunting with opacity.",
            "Tortuous thoracic aorta.",
        );
        let extracted = extract_dictionary(&r, &lexicon);
        let norms: Vec<String> = tokenize_report(&r).into_iter().map(|t| t.norm).collect();
        let stream = norms.join(" ");
        for term in &extracted {
            assert!(lexicon.contains(term));
            assert!(stream.contains(term.as_str()), "{term} not contiguous");
        }
    }

    #[test]
    fn default_lexicon_has_expected_vocabulary() {
        let lexicon = Lexicon::default_clinical();
        for term in ["opacity", "cardiomegaly", "bronchiectasis", "pleural effusion"] {
            assert!(lexicon.contains(term), "missing {term}");
        }
        assert!(lexicon.len() >= 30);
    }

    #[test]
    fn lexicon_rejects_overlong_entries() {
        assert!(matches!(
            Lexicon::from_terms(["one two three four five"]),
            Err(RuleError::EntryTooLong(_))
        ));
    }

    #[test]
    fn negation_config_loads_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let cues = dir.path().join("cues.txt");
        let conjunctions = dir.path().join("conj.txt");
        std::fs::write(&cues, "# custom cues\ndenies\nno\n").unwrap();
        std::fs::write(&conjunctions, "however\n").unwrap();
        let config = NegationConfig::load(&cues, &conjunctions).unwrap();

        let tokens = tokenize_report(&report("Patient denies pneumothorax however effusion persists.", ""));
        let scopes = detect_negation_with(&tokens, &config);
        assert_eq!(scopes.len(), 1);
        assert_eq!(scopes[0].trigger, 1);
        // Scope closes before "however".
        assert_eq!(scopes[0].span, 2..3);
    }

    #[test]
    fn lexicon_file_supports_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lex.txt");
        std::fs::write(&path, "# comment\nopacity\n\npleural effusion # trailing\n").unwrap();
        let lexicon = Lexicon::load(&path).unwrap();
        assert_eq!(lexicon.len(), 2);
        assert!(lexicon.contains("pleural effusion"));
    }
}
