//! Post-training views of the generator: per-topic word distributions from
//! one-hot probes, ranked top words, and the output layer's word embeddings.

mod pca;

pub use pca::{pca_project, symmetric_eigen};

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use ndarray::{Array2, ArrayView1};

use crate::corpus::Vocabulary;
use crate::error::{AtmError, Result};
use crate::network::GeneratorParams;

/// Row k is the word distribution produced by the one-hot probe for topic k.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicMatrix {
    pub phi: Array2<f64>,
}

impl TopicMatrix {
    pub fn n_topics(&self) -> usize {
        self.phi.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.phi.ncols()
    }

    pub fn topic(&self, k: usize) -> ArrayView1<'_, f64> {
        self.phi.row(k)
    }
}

/// Feeds the K×K identity (all one-hot probes) through the generator in
/// inference mode.
pub fn extract_topics(gen: &GeneratorParams) -> Result<TopicMatrix> {
    let probes = Array2::eye(gen.topics());
    let (phi, _) = gen.forward_inference(probes.view())?;
    Ok(TopicMatrix { phi })
}

/// The `n` largest entries as (word id, probability), descending, ties by
/// ascending word id.
pub fn rank_words(phi_k: ArrayView1<f64>, n: usize) -> Result<Vec<(usize, f64)>> {
    if n == 0 || n > phi_k.len() {
        return Err(AtmError::Value(format!(
            "requested {n} words from a vocabulary of {}",
            phi_k.len()
        )));
    }
    let mut ranked: Vec<(usize, f64)> = phi_k.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(n);
    Ok(ranked)
}

pub fn top_words<'v>(
    phi_k: ArrayView1<f64>,
    vocab: &'v Vocabulary,
    n: usize,
) -> Result<Vec<(&'v str, f64)>> {
    if phi_k.len() != vocab.len() {
        return Err(AtmError::Mismatch(format!(
            "topic has {} entries, vocabulary {}",
            phi_k.len(),
            vocab.len()
        )));
    }
    Ok(rank_words(phi_k, n)?
        .into_iter()
        .map(|(id, p)| (vocab.word(id).expect("id < V"), p))
        .collect())
}

/// `topic_id<TAB>w1:p1 w2:p2 ...`, topic ids starting at 1.
pub fn format_topics(topics: &TopicMatrix, vocab: &Vocabulary, n: usize) -> Result<String> {
    let mut out = String::new();
    for k in 0..topics.n_topics() {
        let words = top_words(topics.topic(k), vocab, n)?;
        let body: Vec<String> = words.iter().map(|(w, p)| format!("{w}:{p:.8}")).collect();
        writeln!(out, "{}\t{}", k + 1, body.join(" ")).expect("write to String");
    }
    Ok(out)
}

/// Topic lines as (1-based topic id, word ids in listed order).
pub fn parse_topics(text: &str, vocab: &Vocabulary) -> Result<Vec<(usize, Vec<usize>)>> {
    let mut topics = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let err = |message: String| AtmError::Parse {
            path: "topics".into(),
            line: lineno + 1,
            message,
        };
        if line.trim().is_empty() {
            continue;
        }
        let (id, body) = line
            .split_once('\t')
            .ok_or_else(|| err("expected topic_id<TAB>words".into()))?;
        let id: usize = id
            .trim()
            .parse()
            .map_err(|_| err(format!("bad topic id {id:?}")))?;
        let mut words = Vec::new();
        for item in body.split_whitespace() {
            let token = item.rsplit_once(':').map_or(item, |(w, _)| w);
            let wid = vocab
                .id(token)
                .ok_or_else(|| err(format!("word {token:?} not in vocabulary")))?;
            words.push(wid);
        }
        if words.is_empty() {
            return Err(err("topic lists no words".into()));
        }
        topics.push((id, words));
    }
    Ok(topics)
}

/// Output-layer weights: row i of `W_w` embeds word i.
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddings {
    pub vectors: Array2<f64>,
    pub words: Vec<String>,
}

pub fn export_embeddings(gen: &GeneratorParams, vocab: &Vocabulary) -> Result<WordEmbeddings> {
    if gen.vocab_size() != vocab.len() {
        return Err(AtmError::Mismatch(format!(
            "generator vocabulary size {} but vocabulary file has {} tokens",
            gen.vocab_size(),
            vocab.len()
        )));
    }
    Ok(WordEmbeddings {
        vectors: gen.w_w.clone(),
        words: vocab.words().to_vec(),
    })
}

impl WordEmbeddings {
    /// One line per word: token followed by space-separated components,
    /// printed with round-trip precision.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (word, row) in self.words.iter().zip(self.vectors.rows()) {
            write!(w, "{word}")?;
            for x in row {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        w.flush()
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut words = Vec::new();
        let mut data = Vec::new();
        let mut dim = None;
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| AtmError::io("embeddings", e))?;
            let err = |message: String| AtmError::Parse {
                path: "embeddings".into(),
                line: lineno + 1,
                message,
            };
            let mut fields = line.split(' ');
            let word = fields
                .next()
                .filter(|w| !w.is_empty())
                .ok_or_else(|| err("missing token".into()))?;
            let before = data.len();
            for f in fields {
                data.push(
                    f.parse::<f64>()
                        .map_err(|_| err(format!("bad number {f:?}")))?,
                );
            }
            let n = data.len() - before;
            match dim {
                None => dim = Some(n),
                Some(d) if d != n => return Err(err(format!("{n} components, expected {d}"))),
                _ => {}
            }
            words.push(word.to_string());
        }
        let dim = dim.ok_or_else(|| AtmError::Value("empty embeddings file".into()))?;
        let vectors = Array2::from_shape_vec((words.len(), dim), data).expect("counted");
        Ok(Self { vectors, words })
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }
}
