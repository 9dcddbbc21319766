//! Word embedding table with a deterministic out-of-vocabulary policy.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::rng::{fnv1a_64, SplitMix64};
use crate::tagger::TaggerError;

/// OOV vectors are drawn uniformly from this symmetric interval.
const OOV_HALF_RANGE: f64 = 0.25;

/// Frozen lookup table mapping words to dense vectors.
///
/// Lookup is total: a word missing from the vocabulary receives a synthetic
/// vector derived from the word itself — its UTF-8 bytes are hashed with
/// FNV-1a 64, the hash seeds a [`SplitMix64`] stream, and each of the `dim`
/// components is drawn uniformly from `[-0.25, 0.25)`. The same word
/// therefore maps to the same vector in every run and every implementation.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Vec<f64>,
    duplicates_skipped: usize,
}

impl EmbeddingTable {
    /// Table with no stored vocabulary: every lookup goes through the OOV
    /// policy. Useful when no pretrained embedding file is supplied.
    pub fn oov_only(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            words: Vec::new(),
            index: HashMap::new(),
            matrix: Vec::new(),
            duplicates_skipped: 0,
        }
    }

    /// Rebuilds a table from row-ordered words and a row-major matrix.
    pub fn from_rows(words: Vec<String>, dim: usize, matrix: Vec<f64>) -> Result<Self, TaggerError> {
        if matrix.len() != words.len() * dim {
            return Err(TaggerError::BadModel(format!(
                "embedding matrix has {} values, expected {}",
                matrix.len(),
                words.len() * dim
            )));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(TaggerError::BadModel(format!("duplicate vocab word {w:?}")));
            }
        }
        Ok(EmbeddingTable {
            dim,
            words,
            index,
            matrix,
            duplicates_skipped: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    /// Duplicate lines skipped while loading (first occurrence wins).
    pub fn duplicates_skipped(&self) -> usize {
        self.duplicates_skipped
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// Writes the vector for `word` into `out` (length `dim`).
    pub fn lookup_into(&self, word: &str, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        match self.index.get(word) {
            Some(&row) => out.copy_from_slice(&self.matrix[row * self.dim..(row + 1) * self.dim]),
            None => self.oov_into(word, out),
        }
    }

    pub fn lookup(&self, word: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.lookup_into(word, &mut out);
        out
    }

    fn oov_into(&self, word: &str, out: &mut [f64]) {
        let mut rng = SplitMix64::new(fnv1a_64(word.as_bytes()));
        for v in out.iter_mut() {
            *v = rng.next_range(-OOV_HALF_RANGE, OOV_HALF_RANGE);
        }
    }
}

/// Loads a space-separated embedding file: one `word v1 .. vdim` per line.
/// Duplicate words keep their first occurrence; the number skipped is
/// available via [`EmbeddingTable::duplicates_skipped`].
pub fn load_embeddings(path: impl AsRef<Path>, dim: usize) -> Result<EmbeddingTable, TaggerError> {
    let file = File::open(path)?;
    load_embeddings_reader(BufReader::new(file), dim)
}

pub fn load_embeddings_reader(reader: impl BufRead, dim: usize) -> Result<EmbeddingTable, TaggerError> {
    let mut words = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut matrix = Vec::new();
    let mut duplicates_skipped = 0usize;

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-blank line has a first token");
        let values: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
        let values = values.map_err(|e| TaggerError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if values.len() != dim {
            return Err(TaggerError::DimensionMismatch { line: line_no });
        }
        if index.contains_key(word) {
            duplicates_skipped += 1;
            continue;
        }
        index.insert(word.to_string(), words.len());
        words.push(word.to_string());
        matrix.extend_from_slice(&values);
    }

    if words.is_empty() {
        return Err(TaggerError::EmptyFile);
    }

    Ok(EmbeddingTable {
        dim,
        words,
        index,
        matrix,
        duplicates_skipped,
    })
}
