//! Command-line interface for the radex toolkit.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use radex::adapters::{
    annotate_remote_with, export_predictions, import_predictions, AnnotatorEndpoint,
    ExternalFormat,
};
use radex::corpus::{
    load_corpus_jsonl, parse_sectioned_text, save_corpus_jsonl, split_corpus, Corpus, SplitSpec,
};
use radex::evalkit::{
    evaluate_system, render_tables, PredictionSet, TableFormat, DEFAULT_PATHOLOGIES,
};
use radex::ruleextract::{extract_dictionary_with, Lexicon, NegationConfig};
use radex::tagger::{
    load_embeddings, predict_terms, train, EmbeddingTable, TaggerModel, TrainConfig,
};
use radex::textprep::{label_report, load_labeled_jsonl, save_labeled_jsonl};

#[derive(Parser)]
#[command(
    name = "radex",
    version,
    about = "Pathology term extraction and benchmarking for chest X-ray radiology reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read sectioned .txt reports (or existing corpus JSONL) into corpus JSONL
    Ingest {
        /// Input files or directories (.txt with FINDINGS:/IMPRESSION: headers, or .jsonl)
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Deterministically split a corpus into train/val/test JSONL files
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Three comma-separated fractions summing to 1, e.g. 0.8,0.1,0.1
        #[arg(long, default_value = "0.8,0.1,0.1")]
        ratios: String,
        /// Output prefix; writes <prefix>.train.jsonl, .val.jsonl, .test.jsonl
        #[arg(long)]
        output_prefix: String,
    },
    /// Project gold terms onto per-token KEYWORD/NONKEYWORD labels
    Label {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train the sequence tagger on labeled JSONL
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        /// GloVe-style embedding file; omitted = deterministic hash vectors
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        dim: usize,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 10)]
        patience: usize,
        #[arg(long, default_value_t = 5.0)]
        clip: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        model_out: PathBuf,
    },
    /// Tag a corpus with a trained model, writing predictions JSONL
    Tag {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "ner")]
        system_name: String,
    },
    /// Run the negation-aware dictionary baseline over a corpus
    Baseline {
        #[arg(long)]
        input: PathBuf,
        /// Lexicon file (one term per line); omitted = built-in vocabulary
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Disable negation scoping (plain dictionary search)
        #[arg(long)]
        no_negation: bool,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "dictionary")]
        system_name: String,
    },
    /// Convert an external annotator output file to predictions JSONL
    Import {
        #[arg(long)]
        input: PathBuf,
        /// Input format: jsonl or mti_batch
        #[arg(long, default_value = "jsonl")]
        format: String,
        #[arg(long)]
        output: PathBuf,
        /// Override the system name (default: input file stem)
        #[arg(long)]
        system_name: Option<String>,
    },
    /// Query a remote annotation endpoint for every report
    Annotate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        url: String,
        /// Request timeout in seconds
        #[arg(long, default_value_t = 30.0)]
        timeout: f64,
        #[arg(long, default_value_t = 2)]
        retries: u32,
        /// Maximum in-flight requests
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score prediction files against a gold corpus
    Eval(EvalArgs),
    /// Score several systems side by side (same tables as eval)
    Compare(EvalArgs),
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Predictions JSONL; repeat for several systems
    #[arg(long, required = true, num_args = 1..)]
    pred: Vec<PathBuf>,
    /// Gold corpus JSONL
    #[arg(long)]
    gold: PathBuf,
    /// Pathology list file, or "default23" for the built-in vocabulary
    #[arg(long, default_value = "default23")]
    pathologies: String,
    #[arg(long, value_enum, default_value_t = OutputFormat::Md)]
    format: OutputFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Md,
    Csv,
}

enum RunError {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for RunError {
    fn from(e: anyhow::Error) -> Self {
        RunError::Data(e)
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            std::process::exit(0);
        }
        Err(e) => {
            let _ = e.print();
            std::process::exit(1);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(RunError::Usage(message)) => {
            eprintln!("error: {message}");
            std::process::exit(1);
        }
        Err(RunError::Data(e)) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}

fn run(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Ingest { input, output } => ingest(&input, &output),
        Command::Split {
            input,
            seed,
            ratios,
            output_prefix,
        } => split(&input, seed, &ratios, &output_prefix),
        Command::Label { input, output } => label(&input, &output),
        Command::Train {
            train,
            val,
            embeddings,
            dim,
            hidden,
            lr,
            epochs,
            patience,
            clip,
            seed,
            model_out,
        } => train_cmd(
            &train, val.as_deref(), embeddings.as_deref(), dim, hidden, lr, epochs, patience,
            clip, seed, &model_out,
        ),
        Command::Tag {
            model,
            input,
            output,
            system_name,
        } => tag(&model, &input, &output, &system_name),
        Command::Baseline {
            input,
            lexicon,
            no_negation,
            output,
            system_name,
        } => baseline(&input, lexicon.as_deref(), no_negation, &output, &system_name),
        Command::Import {
            input,
            format,
            output,
            system_name,
        } => import(&input, &format, &output, system_name.as_deref()),
        Command::Annotate {
            input,
            url,
            timeout,
            retries,
            parallel,
            output,
        } => annotate(&input, &url, timeout, retries, parallel, &output),
        Command::Eval(args) | Command::Compare(args) => evaluate(&args),
    }
}

fn ingest(inputs: &[PathBuf], output: &Path) -> Result<(), RunError> {
    let mut corpus = Corpus::new("ingest");
    for input in inputs {
        if input.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(input)
                .with_context(|| format!("reading directory {}", input.display()))
                .map_err(RunError::Data)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "txt"))
                .collect();
            entries.sort();
            for path in entries {
                ingest_txt(&path, &mut corpus)?;
            }
        } else if input.extension().is_some_and(|x| x == "jsonl") {
            let loaded = load_corpus_jsonl(input)
                .with_context(|| format!("loading {}", input.display()))
                .map_err(RunError::Data)?;
            for report in loaded.iter() {
                corpus
                    .push(report.clone())
                    .context("merging corpora")
                    .map_err(RunError::Data)?;
            }
        } else {
            ingest_txt(input, &mut corpus)?;
        }
    }
    save_corpus_jsonl(&corpus, output)
        .with_context(|| format!("writing {}", output.display()))
        .map_err(RunError::Data)?;
    eprintln!("ingested {} reports into {}", corpus.len(), output.display());
    Ok(())
}

fn ingest_txt(path: &Path, corpus: &mut Corpus) -> Result<(), RunError> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(RunError::Data)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let report = parse_sectioned_text(&text, &id)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(RunError::Data)?;
    corpus
        .push(report)
        .context("adding report")
        .map_err(RunError::Data)?;
    Ok(())
}

fn parse_ratios(text: &str) -> Result<[f64; 3], RunError> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| RunError::Usage(format!("cannot parse --ratios {text:?}")))?;
    if parts.len() != 3 {
        return Err(RunError::Usage(format!(
            "--ratios needs three comma-separated values, got {}",
            parts.len()
        )));
    }
    Ok([parts[0], parts[1], parts[2]])
}

fn split(input: &Path, seed: u64, ratios: &str, prefix: &str) -> Result<(), RunError> {
    let ratios = parse_ratios(ratios)?;
    let spec = SplitSpec::new(seed, ratios)
        .map_err(|e| RunError::Usage(e.to_string()))?;
    let corpus = load_corpus_jsonl(input)
        .with_context(|| format!("loading {}", input.display()))
        .map_err(RunError::Data)?;
    let (train, val, test) = split_corpus(&corpus, &spec)
        .context("splitting corpus")
        .map_err(RunError::Data)?;
    for (part, tag) in [(&train, "train"), (&val, "val"), (&test, "test")] {
        let path = format!("{prefix}.{tag}.jsonl");
        save_corpus_jsonl(part, &path)
            .with_context(|| format!("writing {path}"))
            .map_err(RunError::Data)?;
    }
    eprintln!(
        "split {} reports into {}/{}/{}",
        corpus.len(),
        train.len(),
        val.len(),
        test.len()
    );
    Ok(())
}

fn label(input: &Path, output: &Path) -> Result<(), RunError> {
    let corpus = load_corpus_jsonl(input)
        .with_context(|| format!("loading {}", input.display()))
        .map_err(RunError::Data)?;
    let mut sequences = Vec::new();
    let mut skipped = 0usize;
    for report in corpus.iter() {
        let seq = label_report(report);
        if seq.tokens.is_empty() {
            skipped += 1;
            continue;
        }
        sequences.push(seq);
    }
    save_labeled_jsonl(&sequences, output)
        .with_context(|| format!("writing {}", output.display()))
        .map_err(RunError::Data)?;
    if skipped > 0 {
        eprintln!("warning: skipped {skipped} reports with no tokens");
    }
    eprintln!("labeled {} reports into {}", sequences.len(), output.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_cmd(
    train_path: &Path,
    val_path: Option<&Path>,
    embeddings: Option<&Path>,
    dim: usize,
    hidden: usize,
    lr: f64,
    epochs: usize,
    patience: usize,
    clip: f64,
    seed: u64,
    model_out: &Path,
) -> Result<(), RunError> {
    let train_set = load_labeled_jsonl(train_path)
        .with_context(|| format!("loading {}", train_path.display()))
        .map_err(RunError::Data)?;
    let val_set = match val_path {
        Some(path) => load_labeled_jsonl(path)
            .with_context(|| format!("loading {}", path.display()))
            .map_err(RunError::Data)?,
        None => Vec::new(),
    };
    let embedding = match embeddings {
        Some(path) => load_embeddings(path, dim)
            .with_context(|| format!("loading embeddings {}", path.display()))
            .map_err(RunError::Data)?,
        None => EmbeddingTable::oov_only(dim),
    };
    let cfg = TrainConfig {
        epochs,
        learning_rate: lr,
        hidden_size: hidden,
        clip_norm: clip,
        seed,
        patience,
    };
    let model = TaggerModel::new(embedding, hidden, seed)
        .context("initializing model")
        .map_err(RunError::Data)?;
    let (model, history) = train(model, &train_set, &val_set, &cfg)
        .context("training")
        .map_err(RunError::Data)?;
    for record in &history.epochs {
        eprintln!(
            "epoch {:>3}  train_loss {:.6}  val_f1 {:.4}",
            record.epoch, record.train_loss, record.val_f1
        );
    }
    if let Some(best) = history.best_epoch {
        eprintln!("best epoch: {best}");
    }
    model
        .save(model_out)
        .with_context(|| format!("writing {}", model_out.display()))
        .map_err(RunError::Data)?;
    eprintln!("model written to {}", model_out.display());
    Ok(())
}

fn tag(model: &Path, input: &Path, output: &Path, system_name: &str) -> Result<(), RunError> {
    let model = TaggerModel::load(model)
        .with_context(|| format!("loading model {}", model.display()))
        .map_err(RunError::Data)?;
    let corpus = load_corpus_jsonl(input)
        .with_context(|| format!("loading {}", input.display()))
        .map_err(RunError::Data)?;
    let mut set = PredictionSet::new(system_name);
    for report in corpus.iter() {
        let terms = predict_terms(&model, report)
            .with_context(|| format!("tagging report {}", report.id))
            .map_err(RunError::Data)?;
        set.insert(report.id.clone(), terms)
            .context("collecting predictions")
            .map_err(RunError::Data)?;
    }
    export_predictions(&set, output)
        .with_context(|| format!("writing {}", output.display()))
        .map_err(RunError::Data)?;
    eprintln!("tagged {} reports into {}", corpus.len(), output.display());
    Ok(())
}

fn baseline(
    input: &Path,
    lexicon: Option<&Path>,
    no_negation: bool,
    output: &Path,
    system_name: &str,
) -> Result<(), RunError> {
    let lexicon = match lexicon {
        Some(path) => Lexicon::load(path)
            .with_context(|| format!("loading lexicon {}", path.display()))
            .map_err(RunError::Data)?,
        None => Lexicon::default_clinical(),
    };
    let negation = if no_negation {
        NegationConfig::disabled()
    } else {
        NegationConfig::default()
    };
    let corpus = load_corpus_jsonl(input)
        .with_context(|| format!("loading {}", input.display()))
        .map_err(RunError::Data)?;
    let mut set = PredictionSet::new(system_name);
    for report in corpus.iter() {
        let terms = extract_dictionary_with(report, &lexicon, &negation);
        set.insert(report.id.clone(), terms)
            .context("collecting predictions")
            .map_err(RunError::Data)?;
    }
    export_predictions(&set, output)
        .with_context(|| format!("writing {}", output.display()))
        .map_err(RunError::Data)?;
    eprintln!(
        "extracted terms for {} reports into {}",
        corpus.len(),
        output.display()
    );
    Ok(())
}

fn import(
    input: &Path,
    format: &str,
    output: &Path,
    system_name: Option<&str>,
) -> Result<(), RunError> {
    let format = ExternalFormat::parse(format).map_err(|e| RunError::Usage(e.to_string()))?;
    let mut set = import_predictions(input, &format)
        .with_context(|| format!("importing {}", input.display()))
        .map_err(RunError::Data)?;
    if let Some(name) = system_name {
        set.set_system_name(name);
    }
    export_predictions(&set, output)
        .with_context(|| format!("writing {}", output.display()))
        .map_err(RunError::Data)?;
    eprintln!("imported {} reports into {}", set.len(), output.display());
    Ok(())
}

fn annotate(
    input: &Path,
    url: &str,
    timeout: f64,
    retries: u32,
    parallel: usize,
    output: &Path,
) -> Result<(), RunError> {
    if timeout <= 0.0 || timeout.is_nan() {
        return Err(RunError::Usage("--timeout must be positive".to_string()));
    }
    let corpus = load_corpus_jsonl(input)
        .with_context(|| format!("loading {}", input.display()))
        .map_err(RunError::Data)?;
    let endpoint = AnnotatorEndpoint {
        url: url.to_string(),
        timeout: Duration::from_secs_f64(timeout),
        max_retries: retries,
        auth_token: std::env::var("RADEX_TOKEN").ok(),
        ..AnnotatorEndpoint::new(url)
    };
    let set = annotate_remote_with(&endpoint, &corpus, parallel)
        .context("annotating")
        .map_err(RunError::Data)?;
    export_predictions(&set, output)
        .with_context(|| format!("writing {}", output.display()))
        .map_err(RunError::Data)?;
    eprintln!("annotated {} reports into {}", set.len(), output.display());
    Ok(())
}

fn load_pathologies(spec: &str) -> Result<Vec<String>, RunError> {
    if spec == "default23" {
        return Ok(DEFAULT_PATHOLOGIES.iter().map(|p| p.to_string()).collect());
    }
    let text = fs::read_to_string(spec)
        .with_context(|| format!("reading pathology list {spec}"))
        .map_err(RunError::Data)?;
    let list: Vec<String> = text
        .lines()
        .map(|l| match l.find('#') {
            Some(i) => l[..i].trim(),
            None => l.trim(),
        })
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if list.is_empty() {
        return Err(RunError::Data(anyhow::anyhow!(
            "pathology list {spec} is empty"
        )));
    }
    Ok(list)
}

fn evaluate(args: &EvalArgs) -> Result<(), RunError> {
    let gold = load_corpus_jsonl(&args.gold)
        .with_context(|| format!("loading gold corpus {}", args.gold.display()))
        .map_err(RunError::Data)?;
    if gold.is_empty() {
        return Err(RunError::Data(anyhow::anyhow!("gold corpus is empty")));
    }
    let pathologies = load_pathologies(&args.pathologies)?;
    let mut reports = Vec::new();
    for pred_path in &args.pred {
        let preds = import_predictions(pred_path, &ExternalFormat::jsonl())
            .with_context(|| format!("importing {}", pred_path.display()))
            .map_err(RunError::Data)?;
        let report = evaluate_system(&preds, &gold, &pathologies)
            .with_context(|| format!("scoring {}", preds.system_name()))
            .map_err(RunError::Data)?;
        reports.push(report);
    }
    let format = match args.format {
        OutputFormat::Md => TableFormat::Markdown,
        OutputFormat::Csv => TableFormat::Csv,
    };
    print!("{}", render_tables(&reports, format));
    Ok(())
}
