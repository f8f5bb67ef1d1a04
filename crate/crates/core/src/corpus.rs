//! UCI bag-of-words ingestion and the TF-IDF document representation fed to
//! the discriminator as real samples.
//!
//! File ids are 1-based (UCI convention); everything in memory is 0-based.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;

use crate::error::{AtmError, Result};

/// Ordered set of unique tokens; a token's position is its word id.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(words: Vec<String>) -> Result<Self> {
        if words.len() < 2 {
            return Err(AtmError::Value(format!(
                "vocabulary needs at least 2 words, got {}",
                words.len()
            )));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (id, w) in words.iter().enumerate() {
            if w.is_empty() {
                return Err(AtmError::Value(format!("empty token at word id {id}")));
            }
            if let Some(prev) = index.insert(w.clone(), id) {
                return Err(AtmError::Value(format!(
                    "duplicate token {w:?} at word ids {prev} and {id}"
                )));
            }
        }
        Ok(Self { words, index })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| AtmError::io(path, e))?;
        let mut words = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let token = line.trim_end_matches('\r');
            if token.is_empty() {
                return Err(AtmError::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: "empty token".into(),
                });
            }
            words.push(token.to_string());
        }
        Self::new(words)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BowEntry {
    pub doc: usize,
    pub word: usize,
    pub count: u32,
}

/// Sparse document-term counts, sorted by (doc, word).
#[derive(Debug, Clone, PartialEq)]
pub struct BowCorpus {
    doc_count: usize,
    vocab_size: usize,
    entries: Vec<BowEntry>,
    doc_offsets: Vec<usize>,
    doc_freq: Vec<usize>,
}

impl BowCorpus {
    pub fn from_entries(
        doc_count: usize,
        vocab_size: usize,
        mut entries: Vec<BowEntry>,
    ) -> Result<Self> {
        if doc_count == 0 {
            return Err(AtmError::Value("corpus has no documents".into()));
        }
        if entries.is_empty() {
            return Err(AtmError::Value("no entries".into()));
        }
        for e in &entries {
            if e.doc >= doc_count {
                return Err(AtmError::Range(format!(
                    "doc id {} outside [1, {doc_count}]",
                    e.doc + 1
                )));
            }
            if e.word >= vocab_size {
                return Err(AtmError::Range(format!(
                    "word id {} outside [1, {vocab_size}]",
                    e.word + 1
                )));
            }
            if e.count < 1 {
                return Err(AtmError::Value(format!(
                    "count {} < 1 for doc {} word {}",
                    e.count,
                    e.doc + 1,
                    e.word + 1
                )));
            }
        }
        entries.sort_by_key(|e| (e.doc, e.word));
        if let Some(w) = entries
            .windows(2)
            .find(|w| (w[0].doc, w[0].word) == (w[1].doc, w[1].word))
        {
            return Err(AtmError::Value(format!(
                "duplicate entry for doc {} word {}",
                w[0].doc + 1,
                w[0].word + 1
            )));
        }

        let mut doc_offsets = vec![0usize; doc_count + 1];
        let mut doc_freq = vec![0usize; vocab_size];
        for e in &entries {
            doc_offsets[e.doc + 1] += 1;
            doc_freq[e.word] += 1;
        }
        for d in 0..doc_count {
            doc_offsets[d + 1] += doc_offsets[d];
        }
        Ok(Self {
            doc_count,
            vocab_size,
            entries,
            doc_offsets,
            doc_freq,
        })
    }

    /// Builds a corpus from per-document token id streams.
    pub fn from_token_streams(vocab_size: usize, docs: &[Vec<usize>]) -> Result<Self> {
        let mut entries = Vec::new();
        for (doc, tokens) in docs.iter().enumerate() {
            let mut counts: Vec<(usize, u32)> = Vec::new();
            let mut sorted = tokens.clone();
            sorted.sort_unstable();
            for w in sorted {
                match counts.last_mut() {
                    Some((last, c)) if *last == w => *c += 1,
                    _ => counts.push((w, 1)),
                }
            }
            entries.extend(
                counts
                    .into_iter()
                    .map(|(word, count)| BowEntry { doc, word, count }),
            );
        }
        Self::from_entries(docs.len(), vocab_size, entries)
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn entries(&self) -> &[BowEntry] {
        &self.entries
    }

    /// Entries of one document, sorted by word id.
    pub fn doc(&self, doc: usize) -> &[BowEntry] {
        &self.entries[self.doc_offsets[doc]..self.doc_offsets[doc + 1]]
    }

    /// Number of documents containing each word.
    pub fn doc_freq(&self) -> &[usize] {
        &self.doc_freq
    }

    pub fn count(&self, doc: usize, word: usize) -> u32 {
        let row = self.doc(doc);
        row.binary_search_by_key(&word, |e| e.word)
            .map(|i| row[i].count)
            .unwrap_or(0)
    }

    /// Distinct word ids per document, for document-level cooccurrence counting.
    pub fn word_sets(&self) -> Vec<Vec<usize>> {
        (0..self.doc_count)
            .map(|d| self.doc(d).iter().map(|e| e.word).collect())
            .collect()
    }
}

/// Reads a UCI `docword` file plus its `vocab` file.
pub fn load_uci_bow(
    docword_path: impl AsRef<Path>,
    vocab_path: impl AsRef<Path>,
) -> Result<(Vocabulary, BowCorpus)> {
    let docword_path = docword_path.as_ref();
    let text = fs::read_to_string(docword_path).map_err(|e| AtmError::io(docword_path, e))?;
    let corpus = parse_docword(&text, &docword_path.display().to_string())?;
    let vocab = Vocabulary::from_file(vocab_path)?;
    if vocab.len() != corpus.vocab_size() {
        return Err(AtmError::Mismatch(format!(
            "docword header declares W={} but vocabulary has {} tokens",
            corpus.vocab_size(),
            vocab.len()
        )));
    }
    Ok((vocab, corpus))
}

/// Parses the docword body; `origin` labels parse errors.
pub fn parse_docword(text: &str, origin: &str) -> Result<BowCorpus> {
    let parse_err = |line: usize, message: String| AtmError::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["D", "W", "NNZ"]) {
        let (lineno, line) = lines
            .next()
            .ok_or_else(|| parse_err(0, format!("missing header line {name}")))?;
        *slot = line.parse().map_err(|_| {
            parse_err(
                lineno,
                format!("header {name}: expected integer, got {line:?}"),
            )
        })?;
    }
    let [d, w, nnz] = header;
    if d == 0 || w == 0 {
        return Err(parse_err(1, format!("header declares D={d}, W={w}")));
    }
    if nnz == 0 {
        return Err(AtmError::Value("no entries".into()));
    }

    let mut entries = Vec::with_capacity(nnz);
    let mut last_line = 3;
    for (lineno, line) in lines {
        last_line = lineno;
        if line.is_empty() {
            continue;
        }
        if entries.len() == nnz {
            return Err(parse_err(lineno, format!("more than NNZ={nnz} entries")));
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(
                lineno,
                format!("expected \"docID wordID count\", got {line:?}"),
            ));
        }
        let mut nums = [0i64; 3];
        for (n, f) in nums.iter_mut().zip(&fields) {
            *n = f
                .parse()
                .map_err(|_| parse_err(lineno, format!("expected integer, got {f:?}")))?;
        }
        let [doc, word, count] = nums;
        if doc < 1 || doc as usize > d {
            return Err(AtmError::Range(format!(
                "line {lineno}: doc id {doc} outside [1, {d}]"
            )));
        }
        if word < 1 || word as usize > w {
            return Err(AtmError::Range(format!(
                "line {lineno}: word id {word} outside [1, {w}]"
            )));
        }
        if count < 1 || count > u32::MAX as i64 {
            return Err(AtmError::Value(format!(
                "line {lineno}: count {count} must be a positive integer"
            )));
        }
        entries.push(BowEntry {
            doc: doc as usize - 1,
            word: word as usize - 1,
            count: count as u32,
        });
    }
    if entries.len() < nnz {
        return Err(parse_err(
            last_line,
            format!("expected NNZ={nnz} entries, found {}", entries.len()),
        ));
    }
    BowCorpus::from_entries(d, w, entries)
}

/// Row-normalized TF-IDF document vectors, stored sparsely (CSR).
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfMatrix {
    vocab_size: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl TfIdfMatrix {
    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Nonzero (word id, weight) pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn row_dense(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.vocab_size];
        for (c, v) in self.row(i) {
            out[c] = v;
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows(), self.vocab_size));
        for i in 0..self.n_rows() {
            for (c, v) in self.row(i) {
                out[[i, c]] = v;
            }
        }
        out
    }

    /// Draws `m` rows uniformly with replacement into a dense `m × V` batch.
    pub fn sample_real_batch<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Array2<f64>> {
        if m == 0 {
            return Err(AtmError::Value("batch size must be at least 1".into()));
        }
        let n = self.n_rows();
        let mut batch = Array2::zeros((m, self.vocab_size));
        for r in 0..m {
            let i = rng.random_range(0..n);
            for (c, v) in self.row(i) {
                batch[[r, c]] = v;
            }
        }
        Ok(batch)
    }
}

/// tf = n/Σn, idf = ln(|C|/|C_i|), row = tf·idf renormalized to sum 1.
pub fn compute_tfidf(corpus: &BowCorpus) -> Result<TfIdfMatrix> {
    let n_docs = corpus.doc_count() as f64;
    let idf: Vec<f64> = corpus
        .doc_freq()
        .iter()
        .map(|&df| {
            if df == 0 {
                0.0
            } else {
                (n_docs / df as f64).ln()
            }
        })
        .collect();

    let mut row_ptr = Vec::with_capacity(corpus.doc_count() + 1);
    row_ptr.push(0);
    let mut cols = Vec::with_capacity(corpus.entries().len());
    let mut vals = Vec::with_capacity(corpus.entries().len());
    let mut degenerate = Vec::new();

    for d in 0..corpus.doc_count() {
        let row = corpus.doc(d);
        let total: f64 = row.iter().map(|e| e.count as f64).sum();
        let start = cols.len();
        for e in row {
            let w = (e.count as f64 / total) * idf[e.word];
            if w > 0.0 {
                cols.push(e.word);
                vals.push(w);
            }
        }
        let mass: f64 = vals[start..].iter().sum();
        if mass > 0.0 {
            vals[start..].iter_mut().for_each(|v| *v /= mass);
        } else {
            degenerate.push(d);
        }
        row_ptr.push(cols.len());
    }
    if !degenerate.is_empty() {
        return Err(AtmError::DegenerateDocument { docs: degenerate });
    }
    Ok(TfIdfMatrix {
        vocab_size: corpus.vocab_size(),
        row_ptr,
        cols,
        vals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn corpus(d: usize, w: usize, e: &[(usize, usize, u32)]) -> BowCorpus {
        let entries = e
            .iter()
            .map(|&(doc, word, count)| BowEntry { doc, word, count })
            .collect();
        BowCorpus::from_entries(d, w, entries).unwrap()
    }

    #[test]
    fn parses_small_docword() {
        let c = parse_docword("2\n3\n3\n1 1 2\n1 2 1\n2 3 4\n", "t").unwrap();
        assert_eq!(c.doc_count(), 2);
        assert_eq!(c.vocab_size(), 3);
        assert_eq!(c.count(0, 0), 2);
        assert_eq!(c.count(1, 2), 4);
        assert_eq!(c.doc_freq()[2], 1);
    }

    #[test]
    fn zero_nnz_is_rejected() {
        let err = parse_docword("2\n3\n0\n", "t").unwrap_err();
        assert!(err.to_string().contains("no entries"), "{err}");
    }

    #[test]
    fn doc_id_out_of_range_names_the_id() {
        let err = parse_docword("2\n3\n1\n3 1 1\n", "t").unwrap_err();
        assert!(matches!(err, AtmError::Range(_)));
        assert!(err.to_string().contains("doc id 3"), "{err}");
    }

    #[test]
    fn malformed_header_reports_line() {
        let err = parse_docword("2\nx\n1\n1 1 1\n", "doc.txt").unwrap_err();
        match err {
            AtmError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_count_is_a_value_error() {
        let err = parse_docword("1\n2\n1\n1 1 0\n", "t").unwrap_err();
        assert!(matches!(err, AtmError::Value(_)));
    }

    #[test]
    fn short_body_is_a_parse_error() {
        let err = parse_docword("1\n2\n2\n1 1 1\n", "t").unwrap_err();
        assert!(matches!(err, AtmError::Parse { .. }));
    }

    #[test]
    fn duplicate_pair_is_rejected() {
        let err = parse_docword("1\n2\n2\n1 1 1\n1 1 3\n", "t").unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn vocabulary_rejects_duplicates() {
        let err = Vocabulary::new(vec!["a".into(), "b".into(), "a".into()]).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn single_word_document_is_one_hot() {
        let c = corpus(2, 3, &[(0, 1, 5), (1, 2, 1)]);
        let m = compute_tfidf(&c).unwrap();
        assert_eq!(m.row_dense(0), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn word_in_every_document_drops_out() {
        // doc0={a:2,b:1}, doc1={b:1,c:4}; idf_b = ln(2/2) = 0.
        let c = corpus(2, 3, &[(0, 0, 2), (0, 1, 1), (1, 1, 1), (1, 2, 4)]);
        let m = compute_tfidf(&c).unwrap();
        assert_eq!(m.row_dense(0), vec![1.0, 0.0, 0.0]);
        assert_eq!(m.row_dense(1), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn hand_evaluated_weights() {
        // 3 docs: a in {0}, b in {0,1}, c in {1,2}.
        let c = corpus(
            3,
            3,
            &[(0, 0, 1), (0, 1, 3), (1, 1, 1), (1, 2, 1), (2, 2, 2)],
        );
        let m = compute_tfidf(&c).unwrap();
        let (ia, ib) = ((3.0f64).ln(), (1.5f64).ln());
        let (wa, wb) = (0.25 * ia, 0.75 * ib);
        let row = m.row_dense(0);
        assert!((row[0] - wa / (wa + wb)).abs() < 1e-15);
        assert!((row[1] - wb / (wa + wb)).abs() < 1e-15);
    }

    #[test]
    fn single_document_corpus_is_degenerate() {
        let c = corpus(1, 2, &[(0, 0, 1), (0, 1, 2)]);
        match compute_tfidf(&c).unwrap_err() {
            AtmError::DegenerateDocument { docs } => assert_eq!(docs, vec![0]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn one_row_batch_repeats_the_row() {
        let c = corpus(2, 3, &[(0, 1, 5), (1, 2, 1)]);
        let full = compute_tfidf(&c).unwrap();
        let single = TfIdfMatrix {
            vocab_size: 3,
            row_ptr: vec![0, 1],
            cols: vec![1],
            vals: vec![1.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = single.sample_real_batch(3, &mut rng).unwrap();
        for r in 0..3 {
            assert_eq!(b.row(r).to_vec(), vec![0.0, 1.0, 0.0]);
        }
        assert!(full.sample_real_batch(0, &mut rng).is_err());
    }

    #[test]
    fn batches_are_seed_deterministic() {
        let c = corpus(3, 3, &[(0, 0, 1), (1, 1, 1), (2, 2, 1)]);
        let m = compute_tfidf(&c).unwrap();
        let a = m
            .sample_real_batch(16, &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap();
        let b = m
            .sample_real_batch(16, &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn row_frequencies_are_uniform() {
        let c = corpus(2, 2, &[(0, 0, 1), (1, 1, 1)]);
        let m = compute_tfidf(&c).unwrap();
        let n = 10_000;
        let b = m
            .sample_real_batch(n, &mut ChaCha8Rng::seed_from_u64(3))
            .unwrap();
        let first = b.column(0).sum();
        // binomial(n, 0.5): sigma = sqrt(n)/2
        let sigma = (n as f64).sqrt() / 2.0;
        assert!((first - n as f64 / 2.0).abs() < 3.0 * sigma, "{first}");
    }
}
