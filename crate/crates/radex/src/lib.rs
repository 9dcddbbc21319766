//! radex: pathology term extraction from chest X-ray radiology reports.
//!
//! The toolkit has three legs:
//!
//! * a negation-aware dictionary baseline ([`ruleextract`]),
//! * a trainable token-level sequence tagger over frozen word embeddings
//!   ([`tagger`]),
//! * an evaluation harness scoring any term-extraction system with
//!   BLEU-1..4 over joined annotation sentences plus overall and
//!   per-pathology precision/recall/F1 ([`evalkit`]).
//!
//! Reports enter via [`corpus`] (sectioned text or JSONL), get tokenized and
//! labeled by [`textprep`], and external annotator outputs are ingested
//! through [`adapters`].

pub mod adapters;
pub mod corpus;
pub mod evalkit;
pub mod rng;
pub mod ruleextract;
pub mod tagger;
pub mod textprep;

pub use corpus::{Corpus, Report, SplitSpec};
pub use evalkit::{EvalReport, PredictionSet};
pub use ruleextract::{Lexicon, NegationConfig};
pub use tagger::{EmbeddingTable, TaggerModel, TrainConfig};
pub use textprep::{Label, LabeledSequence, Token};
