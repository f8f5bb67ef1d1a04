//! `atm` command line: train, topics, evaluate, embed, events.
//!
//! Exit status: 0 ok, 1 other failure, 2 usage or invalid configuration,
//! 3 training divergence, 4 checkpoint/vocabulary mismatch.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::checkpoint::Checkpoint;
use crate::coherence::{self, CountMode, Metric, DEFAULT_QUANTILES, DEFAULT_WINDOW};
use crate::config::{parse_concentration, RunConfig, RESOLVED_FILE};
use crate::corpus::{compute_tfidf, load_uci_bow, Vocabulary};
use crate::error::{AtmError, Result};
use crate::events::{
    extract_events, format_events_csv, format_events_text, load_entity_lexicon, DEFAULT_SLOT_WORDS,
};
use crate::network::{DiscriminatorParams, GeneratorParams};
use crate::topics::{
    export_embeddings, extract_topics, format_topics, parse_topics, pca_project, rank_words,
};
use crate::training::{train, TrainObserver, TrainRecord, TrainReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const REPORT_FILE: &str = "train_report.csv";
pub const TIMING_FILE: &str = "train_timing.log";
pub const TOPICS_FILE: &str = "topics.txt";
pub const COHERENCE_FILE: &str = "coherence.csv";
pub const COHERENCE_SUMMARY_FILE: &str = "coherence_summary.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";
pub const PCA_FILE: &str = "pca.csv";
pub const EVENTS_FILE: &str = "events.txt";
pub const EVENTS_CSV_FILE: &str = "events.csv";

#[derive(Debug, Parser)]
#[command(name = "atm", version, about = "Adversarial-neural topic model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train generator and critic on a UCI bag-of-words corpus.
    Train(TrainArgs),
    /// Write the top words of every topic.
    Topics(TopicsArgs),
    /// Score topics with UMass, UCI and NPMI coherence.
    Evaluate(EvaluateArgs),
    /// Export word embeddings and a PCA projection.
    Embed(EmbedArgs),
    /// Extract ⟨org, loc, per, key⟩ event quadruples.
    Events(EventsArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// UCI docword file.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Vocabulary file, one token per line.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// key=value file; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    topics: Option<usize>,
    #[arg(long)]
    embed: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    critic_iters: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    /// Dirichlet concentration: one value, or one per topic comma-separated.
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    leak: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    early_stop: bool,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct TopicsArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 10)]
    top_n: usize,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Topics file written by `atm topics`.
    #[arg(long, conflicts_with = "checkpoint")]
    topics: Option<PathBuf>,
    /// Score topics straight from a checkpoint instead.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// UCI docword file for document cooccurrence (UMass).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Tokenized text, one document per line, for sliding windows (UCI,
    /// NPMI); also used for UMass when --corpus is absent.
    #[arg(long)]
    text: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "umass,uci,npmi")]
    metrics: Vec<String>,
    #[arg(long = "q", value_delimiter = ',', default_values_t = DEFAULT_QUANTILES)]
    quantiles: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    /// Words scored per topic; defaults to all listed (10 from a checkpoint).
    #[arg(long)]
    top_n: Option<usize>,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Words to project, one per line; defaults to every topic's top 10.
    #[arg(long)]
    pca_words: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pca_dim: usize,
}

#[derive(Debug, Args)]
struct EventsArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    org: Option<PathBuf>,
    #[arg(long)]
    loc: Option<PathBuf>,
    #[arg(long)]
    per: Option<PathBuf>,
    #[arg(long)]
    key: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SLOT_WORDS)]
    n_slot: usize,
}

pub fn exit_code(err: &AtmError) -> i32 {
    match err {
        AtmError::Usage(_) => EXIT_USAGE,
        AtmError::Diverged { .. } => EXIT_DIVERGED,
        AtmError::Mismatch(_) => EXIT_MISMATCH,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Topics(a) => cmd_topics(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Embed(a) => cmd_embed(a),
        Command::Events(a) => cmd_events(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn require_file(path: &Path, flag: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(AtmError::Usage(format!(
            "{flag} {} is not a readable file",
            path.display()
        )))
    }
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| AtmError::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| AtmError::io(path, e))
}

fn resolve_train_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut rc = RunConfig::default();
    if let Some(path) = &a.config {
        require_file(path, "--config")?;
        rc.apply_file(path)?;
    }
    macro_rules! flag {
        ($($arg:ident => $field:ident),* $(,)?) => {
            $(if let Some(v) = a.$arg { rc.train.$field = v; })*
        };
    }
    flag!(
        topics => topics,
        embed => embed,
        hidden => hidden,
        lambda => lambda,
        critic_iters => critic_iters,
        batch_size => batch_size,
        learning_rate => learning_rate,
        beta1 => beta1,
        beta2 => beta2,
        leak => leak,
        max_iters => max_generator_iters,
        seed => seed,
        eval_every => eval_every,
    );
    if let Some(alpha) = &a.alpha {
        rc.train.dirichlet_alpha = parse_concentration(alpha)?;
    }
    if a.early_stop {
        rc.train.early_stop = true;
    }
    if a.corpus.is_some() {
        rc.corpus = a.corpus.clone();
    }
    if a.vocab.is_some() {
        rc.vocab = a.vocab.clone();
    }
    rc.train
        .validate()
        .map_err(|e| AtmError::Usage(format!("invalid training configuration: {e}")))?;
    rc.train
        .dirichlet_alpha
        .prior(rc.train.topics)
        .map_err(|e| AtmError::Usage(format!("invalid training configuration: {e}")))?;
    Ok(rc)
}

struct CheckpointWriter {
    dir: PathBuf,
    seed: u64,
    log_every: usize,
}

impl TrainObserver for CheckpointWriter {
    fn on_record(&mut self, r: &TrainRecord) {
        if r.step.is_multiple_of(self.log_every) || r.diverged {
            info!(
                "iter {}: L_d={:.6} L_gp={:.6} |grad|={:.4} gen={:.6}",
                r.step, r.l_d, r.l_gp, r.grad_norm_mean, r.gen_objective
            );
        }
    }

    fn on_checkpoint(
        &mut self,
        iteration: usize,
        gen: &GeneratorParams,
        disc: &DiscriminatorParams,
    ) -> Result<()> {
        let ckpt = Checkpoint::new(gen.clone(), disc.clone(), self.seed, iteration as u64)?;
        ckpt.save(self.dir.join(format!("checkpoint_{iteration}.bin")))
    }
}

fn write_report(out: &Path, report: &TrainReport) -> Result<()> {
    write_file(&out.join(REPORT_FILE), report.to_csv())?;
    write_file(&out.join(TIMING_FILE), report.timing_csv())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let rc = resolve_train_config(&a)?;
    let corpus = rc
        .corpus
        .clone()
        .ok_or_else(|| AtmError::Usage("missing --corpus (or corpus= in --config)".into()))?;
    let vocab_path = rc
        .vocab
        .clone()
        .ok_or_else(|| AtmError::Usage("missing --vocab (or vocab= in --config)".into()))?;
    require_file(&corpus, "--corpus")?;
    require_file(&vocab_path, "--vocab")?;
    prepare_out_dir(&a.out_dir)?;
    write_file(&a.out_dir.join(RESOLVED_FILE), rc.resolved())?;

    let (_, bow) = load_uci_bow(&corpus, &vocab_path)?;
    let tfidf = compute_tfidf(&bow)?;
    info!(
        "corpus: {} documents, vocabulary {}",
        tfidf.n_rows(),
        tfidf.vocab_size()
    );

    let ckpt_dir = a.out_dir.join("checkpoints");
    prepare_out_dir(&ckpt_dir)?;
    let mut observer = CheckpointWriter {
        dir: ckpt_dir,
        seed: rc.train.seed,
        log_every: rc.train.eval_every.clamp(1, 100),
    };
    let cfg = &rc.train;
    match train(&tfidf, cfg, &mut observer) {
        Ok(outcome) => {
            write_report(&a.out_dir, &outcome.report)?;
            let ckpt = Checkpoint::new(
                outcome.generator,
                outcome.discriminator,
                cfg.seed,
                outcome.iterations as u64,
            )?;
            ckpt.save(a.out_dir.join(CHECKPOINT_FILE))?;
            info!("trained {} generator iterations", outcome.iterations);
            Ok(())
        }
        Err(AtmError::Diverged { step, report }) => {
            write_report(&a.out_dir, &report)?;
            Err(AtmError::Diverged { step, report })
        }
        Err(e) => Err(e),
    }
}

/// Loads vocabulary and checkpoint, failing with a mismatch when their
/// vocabulary sizes disagree.
fn load_model(m: &ModelArgs) -> Result<(Vocabulary, Checkpoint)> {
    require_file(&m.checkpoint, "--checkpoint")?;
    require_file(&m.vocab, "--vocab")?;
    load_model_paths(&m.checkpoint, &m.vocab)
}

fn load_model_paths(checkpoint: &Path, vocab: &Path) -> Result<(Vocabulary, Checkpoint)> {
    let vocab = Vocabulary::from_file(vocab)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    if ckpt.dims.vocab != vocab.len() {
        return Err(AtmError::Mismatch(format!(
            "checkpoint vocabulary size {} but vocabulary file has {} tokens",
            ckpt.dims.vocab,
            vocab.len()
        )));
    }
    Ok((vocab, ckpt))
}

fn cmd_topics(a: TopicsArgs) -> Result<()> {
    let (vocab, ckpt) = load_model(&a.model)?;
    prepare_out_dir(&a.model.out_dir)?;
    let topics = extract_topics(&ckpt.generator)?;
    let text =
        format_topics(&topics, &vocab, a.top_n).map_err(|e| AtmError::Usage(e.to_string()))?;
    write_file(&a.model.out_dir.join(TOPICS_FILE), text)
}

/// One document per line, whitespace-separated tokens. Out-of-vocabulary
/// tokens keep their position (so windows stay faithful) but never match.
fn read_token_text(path: &Path, vocab: &Vocabulary) -> Result<Vec<Vec<usize>>> {
    let text = fs::read_to_string(path).map_err(|e| AtmError::io(path, e))?;
    Ok(text
        .lines()
        .map(|line| {
            line.split_whitespace()
                .map(|t| vocab.id(t).unwrap_or(usize::MAX))
                .collect()
        })
        .collect())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let metrics: Vec<Metric> = a
        .metrics
        .iter()
        .map(|m| {
            m.parse()
                .map_err(|e: AtmError| AtmError::Usage(e.to_string()))
        })
        .collect::<Result<_>>()?;
    if metrics.is_empty() {
        return Err(AtmError::Usage("--metrics lists no metric".into()));
    }
    let metrics: Vec<Metric> = metrics
        .into_iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    for &q in &a.quantiles {
        if !(q > 0.0 && q <= 100.0) {
            return Err(AtmError::Usage(format!("--q value {q} outside (0, 100]")));
        }
    }
    if a.window < 2 {
        return Err(AtmError::Usage("--window must be at least 2".into()));
    }
    let needs_windows = metrics.iter().any(|m| *m != Metric::UMass);
    if needs_windows && a.text.is_none() {
        return Err(AtmError::Usage(
            "uci and npmi need --text (tokenized documents)".into(),
        ));
    }
    if metrics.contains(&Metric::UMass) && a.corpus.is_none() && a.text.is_none() {
        return Err(AtmError::Usage("umass needs --corpus or --text".into()));
    }
    require_file(&a.vocab, "--vocab")?;
    for (p, flag) in [
        (&a.corpus, "--corpus"),
        (&a.text, "--text"),
        (&a.topics, "--topics"),
        (&a.checkpoint, "--checkpoint"),
    ] {
        if let Some(p) = p {
            require_file(p, flag)?;
        }
    }

    let (vocab, mut topic_words) = match (&a.topics, &a.checkpoint) {
        (Some(path), None) => {
            let vocab = Vocabulary::from_file(&a.vocab)?;
            let text = fs::read_to_string(path).map_err(|e| AtmError::io(path, e))?;
            let parsed = parse_topics(&text, &vocab)?;
            (vocab, parsed)
        }
        (None, Some(ckpt)) => {
            let (vocab, ckpt) = load_model_paths(ckpt, &a.vocab)?;
            let topics = extract_topics(&ckpt.generator)?;
            let n = a.top_n.unwrap_or(10);
            let listed = (0..topics.n_topics())
                .map(|k| {
                    let ids = rank_words(topics.topic(k), n)
                        .map_err(|e| AtmError::Usage(e.to_string()))?;
                    Ok((k + 1, ids.into_iter().map(|(id, _)| id).collect()))
                })
                .collect::<Result<Vec<_>>>()?;
            (vocab, listed)
        }
        _ => {
            return Err(AtmError::Usage(
                "give exactly one of --topics or --checkpoint".into(),
            ))
        }
    };
    if topic_words.is_empty() {
        return Err(AtmError::Usage("no topics to evaluate".into()));
    }
    if let Some(n) = a.top_n {
        if n < 2 {
            return Err(AtmError::Usage("--top-n must be at least 2".into()));
        }
        for (_, words) in &mut topic_words {
            words.truncate(n);
        }
    }
    prepare_out_dir(&a.out_dir)?;

    let targets: BTreeSet<usize> = topic_words
        .iter()
        .flat_map(|(_, w)| w.iter().copied())
        .collect();
    let text_docs = a
        .text
        .as_deref()
        .map(|p| read_token_text(p, &vocab))
        .transpose()?;
    let doc_table = if metrics.contains(&Metric::UMass) {
        let docs = match &a.corpus {
            Some(p) => load_uci_bow(p, &a.vocab)?.1.word_sets(),
            None => text_docs.clone().expect("checked above"),
        };
        Some(coherence::count_cooccurrences(
            &docs,
            &targets,
            CountMode::Document,
        )?)
    } else {
        None
    };
    let window_table = match &text_docs {
        Some(docs) if needs_windows => Some(coherence::count_cooccurrences(
            docs,
            &targets,
            CountMode::Window(a.window),
        )?),
        _ => None,
    };

    let mut scores: Vec<Vec<f64>> = Vec::new();
    for &metric in &metrics {
        let table = match metric {
            Metric::UMass => doc_table.as_ref(),
            _ => window_table.as_ref(),
        }
        .expect("table built for every requested metric");
        let mut column = Vec::with_capacity(topic_words.len());
        for (id, words) in &topic_words {
            let tc = coherence::score(metric, words, table)?;
            if !tc.skipped_pairs.is_empty() {
                warn!(
                    "{metric}: topic {id} skipped {} unscorable pairs",
                    tc.skipped_pairs.len()
                );
            }
            column.push(tc.score);
        }
        scores.push(column);
    }

    let mut per_topic = String::from("topic");
    for m in &metrics {
        write!(per_topic, ",{m}").unwrap();
    }
    per_topic.push('\n');
    for (i, (id, _)) in topic_words.iter().enumerate() {
        write!(per_topic, "{id}").unwrap();
        for column in &scores {
            write!(per_topic, ",{}", column[i]).unwrap();
        }
        per_topic.push('\n');
    }
    write_file(&a.out_dir.join(COHERENCE_FILE), per_topic)?;

    let mut summary = String::from("metric,q,score\n");
    for (m, column) in metrics.iter().zip(&scores) {
        for &q in &a.quantiles {
            let v = coherence::aggregate_topq(column, q)?;
            writeln!(summary, "{m},{q},{v}").unwrap();
            println!("{:<6} top {:>5}%  {:>12.6}", m.name(), q, v);
        }
    }
    write_file(&a.out_dir.join(COHERENCE_SUMMARY_FILE), summary)
}

fn cmd_embed(a: EmbedArgs) -> Result<()> {
    if let Some(p) = &a.pca_words {
        require_file(p, "--pca-words")?;
    }
    let (vocab, ckpt) = load_model(&a.model)?;
    prepare_out_dir(&a.model.out_dir)?;
    let emb = export_embeddings(&ckpt.generator, &vocab)?;
    let path = a.model.out_dir.join(EMBEDDINGS_FILE);
    let file = fs::File::create(&path).map_err(|e| AtmError::io(&path, e))?;
    emb.write_text(std::io::BufWriter::new(file))
        .map_err(|e| AtmError::io(&path, e))?;

    let ids: Vec<usize> = match &a.pca_words {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| AtmError::io(p, e))?;
            let mut ids = Vec::new();
            for token in text.lines().map(str::trim).filter(|t| !t.is_empty()) {
                match vocab.id(token) {
                    Some(id) => ids.push(id),
                    None => warn!("--pca-words token {token:?} not in vocabulary; skipped"),
                }
            }
            ids
        }
        None => {
            let topics = extract_topics(&ckpt.generator)?;
            let n = 10.min(vocab.len());
            let mut set = BTreeSet::new();
            for k in 0..topics.n_topics() {
                set.extend(
                    rank_words(topics.topic(k), n)?
                        .into_iter()
                        .map(|(id, _)| id),
                );
            }
            set.into_iter().collect()
        }
    };
    let coords = pca_project(&emb, &ids, a.pca_dim).map_err(|e| match e {
        AtmError::Value(msg) => AtmError::Usage(msg),
        other => other,
    })?;
    let mut csv = String::from("word");
    for d in 1..=a.pca_dim {
        write!(csv, ",pc{d}").unwrap();
    }
    csv.push('\n');
    for (&id, row) in ids.iter().zip(coords.rows()) {
        csv.push_str(vocab.word(id).expect("id from vocabulary"));
        for x in row {
            write!(csv, ",{x}").unwrap();
        }
        csv.push('\n');
    }
    write_file(&a.model.out_dir.join(PCA_FILE), csv)
}

fn cmd_events(a: EventsArgs) -> Result<()> {
    let lexicon_paths = match (&a.org, &a.loc, &a.per, &a.key) {
        (Some(o), Some(l), Some(p), Some(k)) => [o, l, p, k],
        _ => {
            return Err(AtmError::Usage(
                "events needs all of --org, --loc, --per and --key".into(),
            ))
        }
    };
    for (p, flag) in lexicon_paths
        .iter()
        .zip(["--org", "--loc", "--per", "--key"])
    {
        require_file(p, flag)?;
    }
    if a.n_slot == 0 {
        return Err(AtmError::Usage("--n-slot must be at least 1".into()));
    }
    let (vocab, ckpt) = load_model(&a.model)?;
    prepare_out_dir(&a.model.out_dir)?;
    let [o, l, p, k] = lexicon_paths;
    let lexicon = load_entity_lexicon(o, l, p, k, &vocab)?;
    let topics = extract_topics(&ckpt.generator)?;
    let events = extract_events(&topics, &lexicon, a.n_slot)?;
    write_file(
        &a.model.out_dir.join(EVENTS_FILE),
        format_events_text(&events, &vocab),
    )?;
    write_file(
        &a.model.out_dir.join(EVENTS_CSV_FILE),
        format_events_csv(&events, &vocab),
    )
}
