//! Scoring protocol for term-extraction systems.
//!
//! Predicted and gold annotations are normalized to word sequences, with an
//! empty or missing prediction falling back to the single word "normal".
//! Systems are scored with macro-averaged cumulative BLEU-1..4 over the
//! joined annotation sentences, overall micro precision/recall/F1 over
//! word multisets, and per-pathology report-level precision/recall/F1.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::corpus::Corpus;
use crate::textprep::{normalize_terms, tokenize, TermWords};

/// Scoring word used when a system produced nothing for a report.
pub const FALLBACK_WORD: &str = "normal";

/// Single-word pathology vocabulary of the default per-pathology tables,
/// in report order (the source list names consolidation twice; it appears
/// once here).
pub const DEFAULT_PATHOLOGIES: [&str; 22] = [
    "opacity",
    "aorta",
    "fractures",
    "osteophyte",
    "scoliosis",
    "density",
    "pneumothorax",
    "cardiomegaly",
    "emphysema",
    "arthritis",
    "granuloma",
    "kyphosis",
    "pneumonia",
    "spondylosis",
    "deformity",
    "hypertension",
    "consolidation",
    "mass",
    "thickening",
    "hernia",
    "lucency",
    "bronchiectasis",
];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("BLEU order {0} is outside 1..=4")]
    InvalidOrder(usize),
    #[error("reference word list is empty")]
    EmptyReference,
    #[error("gold corpus is empty")]
    EmptyGold,
    #[error("pathology list is empty")]
    EmptyPathologyList,
    #[error("pathology {0:?} is not a single word")]
    InvalidPathology(String),
    #[error("report id must be non-empty")]
    EmptyReportId,
}

/// Ordered term predictions of one system, keyed by report id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PredictionSet {
    system_name: String,
    predictions: BTreeMap<String, Vec<String>>,
}

impl PredictionSet {
    pub fn new(system_name: impl Into<String>) -> Self {
        PredictionSet {
            system_name: system_name.into(),
            predictions: BTreeMap::new(),
        }
    }

    /// Stores the terms for a report, replacing any previous entry.
    pub fn insert(
        &mut self,
        report_id: impl Into<String>,
        terms: Vec<String>,
    ) -> Result<(), EvalError> {
        let id = report_id.into();
        if id.is_empty() {
            return Err(EvalError::EmptyReportId);
        }
        self.predictions.insert(id, terms);
        Ok(())
    }

    pub fn get(&self, report_id: &str) -> Option<&[String]> {
        self.predictions.get(report_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.predictions
            .iter()
            .map(|(id, terms)| (id.as_str(), terms.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn system_name(&self) -> &str {
        &self.system_name
    }

    pub fn set_system_name(&mut self, name: impl Into<String>) {
        self.system_name = name.into();
    }
}

/// Precision/recall/F1 with the underlying counts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PrfScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
}

impl PrfScore {
    pub fn from_counts(true_pos: u64, false_pos: u64, false_neg: u64) -> Self {
        let precision = ratio(true_pos, true_pos + false_pos);
        let recall = ratio(true_pos, true_pos + false_neg);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        PrfScore {
            precision,
            recall,
            f1,
            true_pos,
            false_pos,
            false_neg,
        }
    }
}

fn ratio(num: u64, denom: u64) -> f64 {
    if denom == 0 {
        0.0
    } else {
        num as f64 / denom as f64
    }
}

/// Scores of one system against one gold corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub system_name: String,
    /// Cumulative BLEU-1..4, macro-averaged over reports.
    pub bleu: [f64; 4],
    pub overall: PrfScore,
    pub per_pathology: Vec<(String, PrfScore)>,
    pub n_reports: usize,
}

/// Substitutes `["normal"]` for an empty prediction; anything else passes
/// through unchanged.
pub fn apply_fallback(terms: Vec<String>) -> Vec<String> {
    if terms.is_empty() {
        vec![FALLBACK_WORD.to_string()]
    } else {
        terms
    }
}

/// Joins a term list into the annotation-sentence form: normalized words
/// separated by single spaces with a trailing full stop. An empty input
/// becomes `"normal."`.
pub fn join_annotation<S: AsRef<str>>(terms: &[S]) -> String {
    let words = scoring_words(terms);
    format!("{}.", words.words.join(" "))
}

/// Normalized scoring words of a term list with the "normal" fallback
/// applied (the appended full stop of the sentence form never enters the
/// word list).
pub fn scoring_words<S: AsRef<str>>(terms: &[S]) -> TermWords {
    let words = normalize_terms(terms);
    if words.words.is_empty() {
        normalize_terms(&[FALLBACK_WORD])
    } else {
        words
    }
}

fn candidate_words(preds: &PredictionSet, report_id: &str) -> TermWords {
    match preds.get(report_id) {
        Some(terms) => scoring_words(terms),
        None => scoring_words::<&str>(&[]),
    }
}

/// Cumulative BLEU-n: geometric mean of the clipped modified k-gram
/// precisions for k = 1..n, times the brevity penalty
/// `BP = 1 if c > r else exp(1 - r/c)`. Any zero k-gram precision (or a
/// candidate shorter than k) zeroes the score; there is no smoothing.
pub fn bleu_n<C: AsRef<str>, R: AsRef<str>>(
    candidate: &[C],
    reference: &[R],
    n: usize,
) -> Result<f64, EvalError> {
    if !(1..=4).contains(&n) {
        return Err(EvalError::InvalidOrder(n));
    }
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let c = candidate.len();
    let r = reference.len();
    if c == 0 {
        return Ok(0.0);
    }

    let mut log_precision_sum = 0.0;
    for k in 1..=n {
        if c < k {
            return Ok(0.0);
        }
        let candidate_grams = ngram_counts(candidate, k);
        let reference_grams = ngram_counts(reference, k);
        let total: usize = candidate_grams.values().sum();
        let clipped: usize = candidate_grams
            .iter()
            .map(|(gram, &count)| count.min(reference_grams.get(gram).copied().unwrap_or(0)))
            .sum();
        if clipped == 0 {
            return Ok(0.0);
        }
        log_precision_sum += (clipped as f64 / total as f64).ln();
    }

    let bp = if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    Ok(bp * (log_precision_sum / n as f64).exp())
}

fn ngram_counts<S: AsRef<str>>(words: &[S], k: usize) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for window in words.windows(k) {
        let key = window
            .iter()
            .map(AsRef::as_ref)
            .collect::<Vec<_>>()
            .join("\u{1f}");
        *counts.entry(key).or_insert(0) += 1;
    }
    counts
}

/// Macro-averaged BLEU-n over the gold corpus. Both sides are normalized to
/// scoring words; a missing or empty prediction scores as `["normal"]`.
pub fn corpus_bleu(preds: &PredictionSet, gold: &Corpus, n: usize) -> Result<f64, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let mut sum = 0.0;
    for report in gold {
        let cand = candidate_words(preds, &report.id);
        let reference = scoring_words(&report.mesh_terms);
        sum += bleu_n(&cand.words, &reference.words, n)?;
    }
    Ok(sum / gold.len() as f64)
}

/// Corpus-pooled word-multiset precision/recall/F1. Per report, the
/// multiset intersection of candidate and reference words counts as true
/// positives; candidate excess as false positives; reference excess as
/// false negatives.
pub fn micro_prf(preds: &PredictionSet, gold: &Corpus) -> Result<PrfScore, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for report in gold {
        let cand = candidate_words(preds, &report.id).counts;
        let reference = scoring_words(&report.mesh_terms).counts;
        for (word, &c_count) in &cand {
            let r_count = reference.get(word).copied().unwrap_or(0);
            tp += c_count.min(r_count) as u64;
            fp += c_count.saturating_sub(r_count) as u64;
        }
        for (word, &r_count) in &reference {
            let c_count = cand.get(word).copied().unwrap_or(0);
            fn_ += r_count.saturating_sub(c_count) as u64;
        }
    }
    Ok(PrfScore::from_counts(tp, fp, fn_))
}

/// Report-level presence/absence scores for each pathology word. A report
/// where the pathology appears in neither word set contributes nothing.
pub fn per_pathology_prf<S: AsRef<str>>(
    preds: &PredictionSet,
    gold: &Corpus,
    pathologies: &[S],
) -> Result<Vec<(String, PrfScore)>, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    if pathologies.is_empty() {
        return Err(EvalError::EmptyPathologyList);
    }
    let normalized: Vec<String> = pathologies
        .iter()
        .map(|p| {
            let norms = tokenize(p.as_ref());
            if norms.len() != 1 {
                return Err(EvalError::InvalidPathology(p.as_ref().to_string()));
            }
            Ok(norms.into_iter().next().expect("one token").norm)
        })
        .collect::<Result<_, _>>()?;

    let mut table = Vec::with_capacity(normalized.len());
    for pathology in normalized {
        let mut tp = 0u64;
        let mut fp = 0u64;
        let mut fn_ = 0u64;
        for report in gold {
            let predicted = candidate_words(preds, &report.id)
                .counts
                .contains_key(&pathology);
            let actual = scoring_words(&report.mesh_terms)
                .counts
                .contains_key(&pathology);
            match (predicted, actual) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        table.push((pathology, PrfScore::from_counts(tp, fp, fn_)));
    }
    Ok(table)
}

/// Runs the full protocol for one system.
pub fn evaluate_system<S: AsRef<str>>(
    preds: &PredictionSet,
    gold: &Corpus,
    pathologies: &[S],
) -> Result<EvalReport, EvalError> {
    let mut bleu = [0.0; 4];
    for (i, slot) in bleu.iter_mut().enumerate() {
        *slot = corpus_bleu(preds, gold, i + 1)?;
    }
    Ok(EvalReport {
        system_name: preds.system_name().to_string(),
        bleu,
        overall: micro_prf(preds, gold)?,
        per_pathology: per_pathology_prf(preds, gold, pathologies)?,
        n_reports: gold.len(),
    })
}

/// Output format for [`render_tables`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
}

/// Renders the BLEU table, the overall P/R/F1 table, and one table per
/// pathology, with percentages at two decimals. The CSV form is a long
/// table `section,system,metric,value`.
pub fn render_tables(reports: &[EvalReport], format: TableFormat) -> String {
    match format {
        TableFormat::Markdown => render_markdown(reports),
        TableFormat::Csv => render_csv(reports),
    }
}

fn pct(value: f64) -> String {
    format!("{:.2}", value * 100.0)
}

fn pathology_names(reports: &[EvalReport]) -> Vec<String> {
    let mut names = Vec::new();
    for report in reports {
        for (name, _) in &report.per_pathology {
            if !names.contains(name) {
                names.push(name.clone());
            }
        }
    }
    names
}

fn render_markdown(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    out.push_str("## BLEU scores (%)\n\n");
    out.push_str("| System | BLEU-1 | BLEU-2 | BLEU-3 | BLEU-4 |\n");
    out.push_str("|---|---|---|---|---|\n");
    for r in reports {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            r.system_name,
            pct(r.bleu[0]),
            pct(r.bleu[1]),
            pct(r.bleu[2]),
            pct(r.bleu[3]),
        ));
    }

    out.push_str("\n## Overall precision/recall/F1 (%)\n\n");
    out.push_str("| System | Precision | Recall | F1 |\n");
    out.push_str("|---|---|---|---|\n");
    for r in reports {
        out.push_str(&format!(
            "| {} | {} | {} | {} |\n",
            r.system_name,
            pct(r.overall.precision),
            pct(r.overall.recall),
            pct(r.overall.f1),
        ));
    }

    for pathology in pathology_names(reports) {
        out.push_str(&format!("\n## {pathology} (%)\n\n"));
        out.push_str("| System | Precision | Recall | F1 |\n");
        out.push_str("|---|---|---|---|\n");
        for r in reports {
            if let Some((_, score)) = r.per_pathology.iter().find(|(n, _)| *n == pathology) {
                out.push_str(&format!(
                    "| {} | {} | {} | {} |\n",
                    r.system_name,
                    pct(score.precision),
                    pct(score.recall),
                    pct(score.f1),
                ));
            }
        }
    }
    out
}

fn render_csv(reports: &[EvalReport]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["section", "system", "metric", "value"])
        .expect("csv write to memory");
    let mut write = |section: &str, system: &str, metric: &str, value: f64| {
        writer
            .write_record([section, system, metric, &pct(value)])
            .expect("csv write to memory");
    };
    for r in reports {
        for (i, value) in r.bleu.iter().enumerate() {
            write("bleu", &r.system_name, &format!("bleu_{}", i + 1), *value);
        }
    }
    for r in reports {
        write("overall", &r.system_name, "precision", r.overall.precision);
        write("overall", &r.system_name, "recall", r.overall.recall);
        write("overall", &r.system_name, "f1", r.overall.f1);
    }
    for pathology in pathology_names(reports) {
        for r in reports {
            if let Some((_, score)) = r.per_pathology.iter().find(|(n, _)| *n == pathology) {
                let section = format!("pathology:{pathology}");
                write(&section, &r.system_name, "precision", score.precision);
                write(&section, &r.system_name, "recall", score.recall);
                write(&section, &r.system_name, "f1", score.f1);
            }
        }
    }
    String::from_utf8(writer.into_inner().expect("csv into inner")).expect("csv output is UTF-8")
}
