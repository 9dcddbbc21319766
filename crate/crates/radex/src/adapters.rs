//! Ingestion of external annotator outputs, raw gold-term string conversion,
//! and a neutral HTTP annotation client.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::evalkit::PredictionSet;
use crate::ruleextract::Lexicon;
use crate::textprep::tokenize;

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown predictions format {0:?}")]
    UnknownFormat(String),
    #[error("malformed response for report {id:?}: {message}")]
    MalformedResponse { id: String, message: String },
    #[error("annotation endpoint unreachable: all {failed} reports failed")]
    EndpointUnreachable { failed: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Supported external prediction file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExternalKind {
    /// One JSON object per line: `{"id": ..., "terms": [...]}`.
    Jsonl,
    /// Pipe-delimited batch indexer output: `ID|Term|...`, `*` comments.
    MtiBatch,
}

/// Format descriptor for [`import_predictions`]. `options` is reserved for
/// format-specific switches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalFormat {
    pub kind: ExternalKind,
    pub options: BTreeMap<String, String>,
}

impl ExternalFormat {
    pub fn jsonl() -> Self {
        ExternalFormat {
            kind: ExternalKind::Jsonl,
            options: BTreeMap::new(),
        }
    }

    pub fn mti_batch() -> Self {
        ExternalFormat {
            kind: ExternalKind::MtiBatch,
            options: BTreeMap::new(),
        }
    }

    pub fn parse(name: &str) -> Result<Self, AdapterError> {
        match name.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(Self::jsonl()),
            "mti_batch" | "mti" => Ok(Self::mti_batch()),
            other => Err(AdapterError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PredRecord {
    id: String,
    terms: Vec<String>,
}

/// Reads a predictions file in the given format. The system name is taken
/// from the file stem.
pub fn import_predictions(
    path: impl AsRef<Path>,
    format: &ExternalFormat,
) -> Result<PredictionSet, AdapterError> {
    let path = path.as_ref();
    let system_name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unknown".to_string());
    let reader = BufReader::new(File::open(path)?);
    import_predictions_reader(reader, format, system_name)
}

pub fn import_predictions_reader(
    reader: impl BufRead,
    format: &ExternalFormat,
    system_name: impl Into<String>,
) -> Result<PredictionSet, AdapterError> {
    let mut set = PredictionSet::new(system_name);
    match format.kind {
        ExternalKind::Jsonl => {
            for (i, line) in reader.lines().enumerate() {
                let line_no = i + 1;
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: PredRecord =
                    serde_json::from_str(&line).map_err(|e| AdapterError::Parse {
                        line: line_no,
                        message: e.to_string(),
                    })?;
                set.insert(record.id, record.terms)
                    .map_err(|e| AdapterError::Parse {
                        line: line_no,
                        message: e.to_string(),
                    })?;
            }
        }
        ExternalKind::MtiBatch => {
            // Grouped by id; terms keep file order. Fields beyond the
            // second are indexer metadata and are dropped.
            let mut grouped: Vec<(String, Vec<String>)> = Vec::new();
            for (i, line) in reader.lines().enumerate() {
                let line_no = i + 1;
                let line = line?;
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('*') {
                    continue;
                }
                let mut fields = trimmed.split('|');
                let id = fields.next().map(str::trim).unwrap_or_default();
                let term = fields.next().map(str::trim);
                let term = match term {
                    Some(t) if !t.is_empty() && !id.is_empty() => t,
                    _ => {
                        return Err(AdapterError::Parse {
                            line: line_no,
                            message: "expected ID|Term|...".to_string(),
                        })
                    }
                };
                match grouped.iter_mut().find(|(gid, _)| gid == id) {
                    Some((_, terms)) => terms.push(term.to_string()),
                    None => grouped.push((id.to_string(), vec![term.to_string()])),
                }
            }
            for (id, terms) in grouped {
                set.insert(id, terms).map_err(|e| AdapterError::Parse {
                    line: 0,
                    message: e.to_string(),
                })?;
            }
        }
    }
    Ok(set)
}

/// Writes a prediction set in the JSONL interchange format.
pub fn export_predictions(
    set: &PredictionSet,
    path: impl AsRef<Path>,
) -> Result<(), AdapterError> {
    let mut w = BufWriter::new(File::create(path)?);
    export_predictions_writer(set, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn export_predictions_writer(
    set: &PredictionSet,
    w: &mut impl Write,
) -> Result<(), AdapterError> {
    for (id, terms) in set.iter() {
        let record = PredRecord {
            id: id.to_string(),
            terms: terms.to_vec(),
        };
        serde_json::to_writer(&mut *w, &record).map_err(|e| AdapterError::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Splits a raw gold-term string into terms.
///
/// The separator is `;` when present, `,` otherwise. Adjacent fragments
/// `B, A` re-join to the single term `A B` when that normalized phrase is a
/// known multiword lexicon entry — recovering inverted headings such as
/// `"Aorta, Thoracic"` -> `"Thoracic Aorta"`.
pub fn convert_raw_mesh(raw: &str, known_multiword: &Lexicon) -> Vec<String> {
    if raw.trim().is_empty() {
        return Vec::new();
    }
    let separator = if raw.contains(';') { ';' } else { ',' };
    let fragments: Vec<&str> = raw
        .split(separator)
        .map(str::trim)
        .filter(|f| !f.is_empty())
        .collect();

    let mut terms = Vec::new();
    let mut i = 0;
    while i < fragments.len() {
        if i + 1 < fragments.len() {
            let rejoined = format!("{} {}", fragments[i + 1], fragments[i]);
            let normalized: Vec<String> =
                tokenize(&rejoined).into_iter().map(|t| t.norm).collect();
            if known_multiword.contains(&normalized.join(" ")) {
                terms.push(rejoined);
                i += 2;
                continue;
            }
        }
        terms.push(fragments[i].to_string());
        i += 1;
    }
    terms
}

/// HTTP annotation endpoint settings.
#[derive(Debug, Clone)]
pub struct AnnotatorEndpoint {
    pub url: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub auth_token: Option<String>,
    /// First retry delay; doubled on each further attempt.
    pub backoff_base: Duration,
}

impl AnnotatorEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        AnnotatorEndpoint {
            url: url.into(),
            timeout: Duration::from_secs(30),
            max_retries: 2,
            auth_token: None,
            backoff_base: Duration::from_secs(1),
        }
    }
}

#[derive(Serialize)]
struct AnnotateRequest<'a> {
    id: &'a str,
    text: String,
}

#[derive(Deserialize)]
struct AnnotateResponse {
    terms: Vec<String>,
}

/// Annotates every report sequentially. See [`annotate_remote_with`].
pub fn annotate_remote(
    endpoint: &AnnotatorEndpoint,
    corpus: &Corpus,
) -> Result<PredictionSet, AdapterError> {
    annotate_remote_with(endpoint, corpus, 1)
}

/// POSTs `{"id", "text"}` per report and expects `{"terms": [...]}` back.
///
/// Timeouts and 5xx responses are retried up to `max_retries` with
/// exponential backoff; 4xx responses are not retried. A report that fails
/// every attempt gets an empty term list so a long benchmark run is never
/// aborted by a flaky endpoint; if every report fails the run is treated as
/// unreachable. `max_in_flight` > 1 fans the requests out over that many
/// threads.
pub fn annotate_remote_with(
    endpoint: &AnnotatorEndpoint,
    corpus: &Corpus,
    max_in_flight: usize,
) -> Result<PredictionSet, AdapterError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(endpoint.timeout))
        .http_status_as_error(false)
        .build()
        .new_agent();

    // Per-report outcome: Ok(None) marks a report that failed every attempt.
    type Outcome = (String, Result<Option<Vec<String>>, AdapterError>);

    let workers = max_in_flight.max(1).min(corpus.len().max(1));
    let results: Vec<Outcome> = if workers <= 1 {
        corpus
            .iter()
            .map(|r| (r.id.clone(), annotate_one(&agent, endpoint, r)))
            .collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let agent = agent.clone();
                    let reports = corpus.iter().skip(w).step_by(workers);
                    scope.spawn(move || {
                        reports
                            .map(|r| (r.id.clone(), annotate_one(&agent, endpoint, r)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("annotation worker panicked"))
                .collect()
        })
    };

    let mut set = PredictionSet::new("remote");
    let mut failures = 0usize;
    for (id, outcome) in results {
        match outcome {
            Ok(Some(terms)) => set
                .insert(id, terms)
                .map_err(|e| AdapterError::Parse {
                    line: 0,
                    message: e.to_string(),
                })?,
            Ok(None) => {
                failures += 1;
                set.insert(id, Vec::new()).map_err(|e| AdapterError::Parse {
                    line: 0,
                    message: e.to_string(),
                })?;
            }
            Err(e) => return Err(e),
        }
    }
    if !corpus.is_empty() && failures == corpus.len() {
        return Err(AdapterError::EndpointUnreachable { failed: failures });
    }
    Ok(set)
}

/// One report against the endpoint. `Ok(None)` means all attempts failed
/// with retryable or client errors.
fn annotate_one(
    agent: &ureq::Agent,
    endpoint: &AnnotatorEndpoint,
    report: &crate::corpus::Report,
) -> Result<Option<Vec<String>>, AdapterError> {
    let body = AnnotateRequest {
        id: &report.id,
        text: format!("{}\n{}", report.findings, report.impression),
    };
    let attempts = endpoint.max_retries + 1;
    for attempt in 0..attempts {
        if attempt > 0 {
            std::thread::sleep(endpoint.backoff_base * 2u32.pow(attempt - 1));
        }
        let mut request = agent.post(&endpoint.url);
        if let Some(token) = &endpoint.auth_token {
            request = request.header("Authorization", format!("Bearer {token}"));
        }
        match request.send_json(&body) {
            Ok(mut response) => {
                let status = response.status().as_u16();
                if status == 200 {
                    let parsed: AnnotateResponse =
                        response.body_mut().read_json().map_err(|e| {
                            AdapterError::MalformedResponse {
                                id: report.id.clone(),
                                message: e.to_string(),
                            }
                        })?;
                    return Ok(Some(parsed.terms));
                }
                if (400..500).contains(&status) {
                    eprintln!("warning: report {} rejected with HTTP {status}", report.id);
                    return Ok(None);
                }
                // 5xx and everything else: retryable.
            }
            Err(_) => {
                // Transport error or timeout: retryable.
            }
        }
    }
    eprintln!(
        "warning: report {} failed after {attempts} attempts",
        report.id
    );
    Ok(None)
}
