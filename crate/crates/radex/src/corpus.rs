//! Report ingestion and deterministic corpus splitting.
//!
//! A corpus is an ordered collection of radiology reports, each carrying the
//! free-text Findings and Impression sections plus the gold annotation terms.
//! Reports enter either from sectioned `.txt` files or from the JSONL
//! interchange format (one object per line: `id`, `findings`, `impression`,
//! `mesh_terms`).

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{fisher_yates, SplitMix64};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("input text is blank")]
    EmptyInput,
    #[error("section header {0:?} appears twice")]
    DuplicateSection(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate report id {0:?}")]
    DuplicateId(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("split ratios must be non-negative and sum to 1 (got {0:?})")]
    InvalidRatios([f64; 3]),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One radiology report with its gold annotation terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub id: String,
    pub findings: String,
    pub impression: String,
    #[serde(default)]
    pub mesh_terms: Vec<String>,
}

impl Report {
    /// A report is usable when at least one narrative section is non-empty.
    pub fn has_text(&self) -> bool {
        !self.findings.trim().is_empty() || !self.impression.trim().is_empty()
    }
}

/// Ordered, duplicate-free collection of reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    reports: Vec<Report>,
    source: String,
}

impl Corpus {
    pub fn new(source: impl Into<String>) -> Self {
        Corpus {
            reports: Vec::new(),
            source: source.into(),
        }
    }

    pub fn from_reports(
        reports: impl IntoIterator<Item = Report>,
        source: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let mut corpus = Corpus::new(source);
        for report in reports {
            corpus.push(report)?;
        }
        Ok(corpus)
    }

    /// Appends a report, rejecting duplicate ids.
    pub fn push(&mut self, report: Report) -> Result<(), CorpusError> {
        if self.reports.iter().any(|r| r.id == report.id) {
            return Err(CorpusError::DuplicateId(report.id));
        }
        self.reports.push(report);
        Ok(())
    }

    pub fn reports(&self) -> &[Report] {
        &self.reports
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Report> {
        self.reports.iter()
    }

    pub fn get(&self, id: &str) -> Option<&Report> {
        self.reports.iter().find(|r| r.id == id)
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Report;
    type IntoIter = std::slice::Iter<'a, Report>;

    fn into_iter(self) -> Self::IntoIter {
        self.reports.iter()
    }
}

/// Seeded three-way split specification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub seed: u64,
    pub ratios: [f64; 3],
}

impl SplitSpec {
    pub fn new(seed: u64, ratios: [f64; 3]) -> Result<Self, CorpusError> {
        let sum: f64 = ratios.iter().sum();
        if ratios.iter().any(|&r| r < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidRatios(ratios));
        }
        Ok(SplitSpec { seed, ratios })
    }
}

/// Parses a sectioned report text into a [`Report`].
///
/// A header is a line of the form `NAME:` (letters and spaces, matched
/// case-insensitively, optionally followed by inline text). `FINDINGS` and
/// `IMPRESSION` are captured; any other header opens a section that is
/// ignored up to the next header. Text before the first header is ignored.
pub fn parse_sectioned_text(text: &str, id: &str) -> Result<Report, CorpusError> {
    if text.trim().is_empty() {
        return Err(CorpusError::EmptyInput);
    }

    #[derive(PartialEq)]
    enum Section {
        Findings,
        Impression,
        Ignored,
    }

    let mut findings: Option<Vec<String>> = None;
    let mut impression: Option<Vec<String>> = None;
    let mut current = Section::Ignored;

    for line in text.lines() {
        if let Some((name, rest)) = split_header(line) {
            let canonical = name.to_ascii_uppercase();
            match canonical.as_str() {
                "FINDINGS" => {
                    if findings.is_some() {
                        return Err(CorpusError::DuplicateSection(canonical));
                    }
                    findings = Some(Vec::new());
                    current = Section::Findings;
                }
                "IMPRESSION" => {
                    if impression.is_some() {
                        return Err(CorpusError::DuplicateSection(canonical));
                    }
                    impression = Some(Vec::new());
                    current = Section::Impression;
                }
                _ => current = Section::Ignored,
            }
            if !rest.trim().is_empty() {
                match current {
                    Section::Findings => findings.as_mut().unwrap().push(rest.trim().to_string()),
                    Section::Impression => {
                        impression.as_mut().unwrap().push(rest.trim().to_string())
                    }
                    Section::Ignored => {}
                }
            }
        } else {
            match current {
                Section::Findings => findings.as_mut().unwrap().push(line.trim().to_string()),
                Section::Impression => impression.as_mut().unwrap().push(line.trim().to_string()),
                Section::Ignored => {}
            }
        }
    }

    let join = |lines: Option<Vec<String>>| {
        lines
            .map(|l| l.join("\n").trim().to_string())
            .unwrap_or_default()
    };

    Ok(Report {
        id: id.to_string(),
        findings: join(findings),
        impression: join(impression),
        mesh_terms: Vec::new(),
    })
}

/// Splits `line` into `(header_name, inline_rest)` when it looks like a
/// section header: leading letters/spaces terminated by a colon.
fn split_header(line: &str) -> Option<(&str, &str)> {
    let trimmed = line.trim_start();
    let colon = trimmed.find(':')?;
    let name = &trimmed[..colon];
    if name.is_empty()
        || name.len() > 40
        || !name.chars().all(|c| c.is_ascii_alphabetic() || c == ' ')
    {
        return None;
    }
    Some((name.trim(), &trimmed[colon + 1..]))
}

/// Loads a corpus from JSONL, one report object per line. Blank lines are
/// rejected as malformed; field `mesh_terms` may be absent.
pub fn load_corpus_jsonl(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let source = path.display().to_string();
    load_corpus_reader(BufReader::new(file), source)
}

pub fn load_corpus_reader(
    reader: impl BufRead,
    source: impl Into<String>,
) -> Result<Corpus, CorpusError> {
    let mut corpus = Corpus::new(source);
    let mut seen: HashSet<String> = HashSet::new();
    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let report: Report = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if report.id.is_empty() {
            return Err(CorpusError::Parse {
                line: line_no,
                message: "empty id".to_string(),
            });
        }
        if !seen.insert(report.id.clone()) {
            return Err(CorpusError::DuplicateId(report.id));
        }
        corpus.reports.push(report);
    }
    Ok(corpus)
}

/// Writes a corpus as JSONL with LF line endings.
pub fn save_corpus_jsonl(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    for report in corpus.iter() {
        serde_json::to_writer(&mut w, report).map_err(|e| CorpusError::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Shuffles the corpus with Fisher–Yates over a [`SplitMix64`] stream seeded
/// by `spec.seed`, then partitions it with counts
/// `floor(N * r1)`, `floor(N * r2)`, remainder.
pub fn split_corpus(
    corpus: &Corpus,
    spec: &SplitSpec,
) -> Result<(Corpus, Corpus, Corpus), CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    SplitSpec::new(spec.seed, spec.ratios)?;

    let mut indices: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = SplitMix64::new(spec.seed);
    fisher_yates(&mut indices, &mut rng);

    let n = corpus.len();
    let n_train = (n as f64 * spec.ratios[0]).floor() as usize;
    let n_val = (n as f64 * spec.ratios[1]).floor() as usize;

    let part = |range: &[usize], tag: &str| Corpus {
        reports: range.iter().map(|&i| corpus.reports[i].clone()).collect(),
        source: format!("{}/{}", corpus.source, tag),
    };

    let (train_idx, rest) = indices.split_at(n_train);
    let (val_idx, test_idx) = rest.split_at(n_val.min(rest.len()));

    Ok((
        part(train_idx, "train"),
        part(val_idx, "val"),
        part(test_idx, "test"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dummy_corpus(n: usize) -> Corpus {
        let reports = (0..n).map(|i| Report {
            id: format!("r{i}"),
            findings: format!("finding {i}"),
            impression: String::new(),
            mesh_terms: vec![],
        });
        Corpus::from_reports(reports, "test").unwrap()
    }

    #[test]
    fn parses_findings_and_impression() {
        let r =
            parse_sectioned_text("FINDINGS: Stable calcified granuloma.\nIMPRESSION: No acute disease.", "x")
                .unwrap();
        assert_eq!(r.findings, "Stable calcified granuloma.");
        assert_eq!(r.impression, "No acute disease.");
    }

    #[test]
    fn empty_section_yields_empty_string() {
        let r = parse_sectioned_text("FINDINGS:\nIMPRESSION: Normal.", "x").unwrap();
        assert_eq!(r.findings, "");
        assert_eq!(r.impression, "Normal.");
    }

    #[test]
    fn unrecognized_header_is_ignored() {
        let r = parse_sectioned_text("COMPARISON: None.\nFINDINGS: Clear lungs.", "x").unwrap();
        assert_eq!(r.findings, "Clear lungs.");
        assert_eq!(r.impression, "");
    }

    #[test]
    fn multiline_section_content_is_kept() {
        let r = parse_sectioned_text(
            "FINDINGS: Heart size normal.\nLungs are clear.\nIMPRESSION: Normal chest.",
            "x",
        )
        .unwrap();
        assert_eq!(r.findings, "Heart size normal.\nLungs are clear.");
    }

    #[test]
    fn headers_match_case_insensitively() {
        let r = parse_sectioned_text("Findings: Clear.\nimpression: Normal.", "x").unwrap();
        assert_eq!(r.findings, "Clear.");
        assert_eq!(r.impression, "Normal.");
    }

    #[test]
    fn blank_input_is_an_error() {
        assert!(matches!(
            parse_sectioned_text("  \n ", "x"),
            Err(CorpusError::EmptyInput)
        ));
    }

    #[test]
    fn duplicated_section_is_an_error() {
        let err = parse_sectioned_text("FINDINGS: a\nFINDINGS: b", "x").unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateSection(s) if s == "FINDINGS"));
    }

    #[test]
    fn jsonl_preserves_order_and_terms() {
        let data = concat!(
            "{\"id\":\"a\",\"findings\":\"f\",\"impression\":\"i\",\"mesh_terms\":[\"Calcified Granuloma\"]}\n",
            "{\"id\":\"b\",\"findings\":\"g\",\"impression\":\"\"}\n",
        );
        let corpus = load_corpus_reader(data.as_bytes(), "mem").unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus.reports()[0].id, "a");
        assert_eq!(
            corpus.reports()[0].mesh_terms,
            vec!["Calcified Granuloma".to_string()]
        );
        assert!(corpus.reports()[1].mesh_terms.is_empty());
    }

    #[test]
    fn jsonl_reports_malformed_line_number() {
        let data = concat!(
            "{\"id\":\"a\",\"findings\":\"f\",\"impression\":\"i\"}\n",
            "{\"id\":\"b\",\"findings\":\"f\",\"impression\":\"i\"}\n",
            "{\"findings\":\"missing id\",\"impression\":\"\"}\n",
        );
        let err = load_corpus_reader(data.as_bytes(), "mem").unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn jsonl_rejects_duplicate_ids() {
        let data = concat!(
            "{\"id\":\"a\",\"findings\":\"f\",\"impression\":\"i\"}\n",
            "{\"id\":\"a\",\"findings\":\"g\",\"impression\":\"j\"}\n",
        );
        assert!(matches!(
            load_corpus_reader(data.as_bytes(), "mem"),
            Err(CorpusError::DuplicateId(id)) if id == "a"
        ));
    }

    #[test]
    fn jsonl_round_trip_preserves_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let mut corpus = dummy_corpus(5);
        corpus.reports[2].mesh_terms = vec!["Aorta, Thoracic".into(), "Cicatrix".into()];
        corpus.reports[3].findings = "unicode: effusion\u{00e9} \"quoted\"".into();
        save_corpus_jsonl(&corpus, &path).unwrap();
        let loaded = load_corpus_jsonl(&path).unwrap();
        assert_eq!(loaded.reports(), corpus.reports());

        // Saving again produces identical bytes.
        let path2 = dir.path().join("corpus2.jsonl");
        save_corpus_jsonl(&loaded, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let corpus = dummy_corpus(3955);
        let spec = SplitSpec::new(1, [0.8, 0.1, 0.1]).unwrap();
        let (train, val, test) = split_corpus(&corpus, &spec).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (3164, 395, 396));
    }

    #[test]
    fn split_is_deterministic() {
        let corpus = dummy_corpus(10);
        let spec = SplitSpec::new(42, [0.8, 0.1, 0.1]).unwrap();
        let a = split_corpus(&corpus, &spec).unwrap();
        let b = split_corpus(&corpus, &spec).unwrap();
        assert_eq!(a.0.reports(), b.0.reports());
        assert_eq!(a.1.reports(), b.1.reports());
        assert_eq!(a.2.reports(), b.2.reports());
    }

    #[test]
    fn degenerate_ratio_puts_everything_in_train() {
        let corpus = dummy_corpus(10);
        let spec = SplitSpec::new(0, [1.0, 0.0, 0.0]).unwrap();
        let (train, val, test) = split_corpus(&corpus, &spec).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (10, 0, 0));
    }

    #[test]
    fn empty_corpus_cannot_be_split() {
        let corpus = Corpus::new("test");
        let spec = SplitSpec::new(0, [0.8, 0.1, 0.1]).unwrap();
        assert!(matches!(
            split_corpus(&corpus, &spec),
            Err(CorpusError::EmptyCorpus)
        ));
    }

    #[test]
    fn invalid_ratios_are_rejected() {
        assert!(SplitSpec::new(0, [0.5, 0.5, 0.5]).is_err());
        assert!(SplitSpec::new(0, [-0.1, 0.6, 0.5]).is_err());
        assert!(SplitSpec::new(0, [0.8, 0.1, 0.1]).is_ok());
    }

    #[test]
    fn push_rejects_duplicate_id() {
        let mut corpus = dummy_corpus(2);
        let dup = corpus.reports()[0].clone();
        assert!(matches!(corpus.push(dup), Err(CorpusError::DuplicateId(_))));
    }

    fn arb_text(max: usize) -> impl Strategy<Value = String> {
        proptest::collection::vec(any::<char>(), 0..max).prop_map(|v| v.into_iter().collect())
    }

    proptest! {
        #[test]
        fn jsonl_round_trip_arbitrary_content(
            findings in arb_text(40),
            impression in arb_text(40),
            terms in proptest::collection::vec(arb_text(20), 0..4),
        ) {
            let report = Report {
                id: "r1".into(),
                findings,
                impression,
                mesh_terms: terms,
            };
            let corpus = Corpus::from_reports([report], "mem").unwrap();
            let mut bytes = Vec::new();
            for r in corpus.iter() {
                serde_json::to_writer(&mut bytes, r).unwrap();
                bytes.push(b'\n');
            }
            let loaded = load_corpus_reader(bytes.as_slice(), "mem").unwrap();
            prop_assert_eq!(loaded.reports(), corpus.reports());
        }

        #[test]
        fn split_parts_are_disjoint_and_cover(n in 1usize..200, seed in any::<u64>()) {
            let corpus = dummy_corpus(n);
            let spec = SplitSpec::new(seed, [0.8, 0.1, 0.1]).unwrap();
            let (train, val, test) = split_corpus(&corpus, &spec).unwrap();
            prop_assert_eq!(train.len() + val.len() + test.len(), n);
            let mut ids: Vec<&str> = train
                .iter()
                .chain(val.iter())
                .chain(test.iter())
                .map(|r| r.id.as_str())
                .collect();
            ids.sort_unstable();
            ids.dedup();
            prop_assert_eq!(ids.len(), n);
        }
    }
}
