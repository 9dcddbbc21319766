//! Shared fixtures for integration tests: a synthetic report grammar and an
//! independent brute-force BLEU oracle.

// Not every integration test binary uses every fixture.
#![allow(dead_code)]

use radex::corpus::{Corpus, Report};
use radex::rng::{fisher_yates, SplitMix64};

/// Fixed pathology vocabulary of the synthetic grammar; every entry is a
/// single-word term of the default lexicon.
pub const SYNTH_PATHOLOGIES: [&str; 10] = [
    "opacity",
    "aorta",
    "fractures",
    "scoliosis",
    "density",
    "pneumothorax",
    "cardiomegaly",
    "emphysema",
    "granuloma",
    "pneumonia",
];

const LOCATIONS: [&str; 4] = ["right lung", "left lung", "chest", "lung base"];

/// Generates reports of 2–4 sentences. Each sentence mentions one distinct
/// pathology, either positively (the word joins the gold terms) or inside a
/// negation ("no ...", "free of ..."), so a word-membership tagger must use
/// sentence context to match the gold labels.
pub fn synthetic_corpus(n_reports: usize, seed: u64, source: &str) -> Corpus {
    let mut rng = SplitMix64::new(seed);
    let mut reports = Vec::new();
    for i in 0..n_reports {
        let n_sentences = 2 + (rng.next_u64() % 3) as usize;
        let mut order: Vec<usize> = (0..SYNTH_PATHOLOGIES.len()).collect();
        fisher_yates(&mut order, &mut rng);

        let mut sentences = Vec::new();
        let mut gold = Vec::new();
        for s in 0..n_sentences {
            let pathology = SYNTH_PATHOLOGIES[order[s]];
            let positive = rng.next_u64().is_multiple_of(2);
            let location = LOCATIONS[(rng.next_u64() % LOCATIONS.len() as u64) as usize];
            let sentence = if positive {
                match rng.next_u64() % 4 {
                    0 => format!("There is {pathology} in the {location}."),
                    1 => format!("Stable {pathology} in the {location}."),
                    2 => format!("Mild {pathology} is seen."),
                    _ => format!("Persistent {pathology} noted."),
                }
            } else {
                match rng.next_u64() % 4 {
                    0 => format!("No {pathology} is seen."),
                    1 => format!("There is no {pathology}."),
                    2 => format!("No evidence of {pathology} in the {location}."),
                    _ => format!("Lungs are free of {pathology}."),
                }
            };
            if positive {
                gold.push(capitalize(pathology));
            }
            sentences.push(sentence);
        }

        let impression = sentences.pop().expect("at least two sentences");
        let findings = sentences.join(" ");
        reports.push(Report {
            id: format!("synth{i:04}"),
            findings,
            impression,
            mesh_terms: gold,
        });
    }
    Corpus::from_reports(reports, source).expect("synthetic ids are unique")
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Brute-force cumulative BLEU: enumerates the k-grams of both sequences,
/// clips counts by quadratic scanning, and combines precisions with
/// product + `powf`. Structurally independent of the library implementation.
pub fn oracle_bleu(candidate: &[String], reference: &[String], n: usize) -> f64 {
    let c = candidate.len();
    let r = reference.len();
    if c == 0 {
        return 0.0;
    }
    let mut precisions = Vec::new();
    for k in 1..=n {
        if c < k {
            return 0.0;
        }
        let cand_grams: Vec<&[String]> = candidate.windows(k).collect();
        let ref_grams: Vec<&[String]> = if r >= k {
            reference.windows(k).collect()
        } else {
            Vec::new()
        };
        let mut clipped = 0usize;
        let mut counted: Vec<&[String]> = Vec::new();
        for gram in cand_grams.iter().copied() {
            if counted.contains(&gram) {
                continue;
            }
            counted.push(gram);
            let in_cand = cand_grams.iter().filter(|g| ***g == *gram).count();
            let in_ref = ref_grams.iter().filter(|g| ***g == *gram).count();
            clipped += in_cand.min(in_ref);
        }
        if clipped == 0 {
            return 0.0;
        }
        precisions.push(clipped as f64 / cand_grams.len() as f64);
    }
    let bp = if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    bp * precisions.iter().product::<f64>().powf(1.0 / n as f64)
}
