//! Shared fixtures for the integration tests: a planted-topic synthetic
//! corpus, a brute-force coherence oracle, and a finite-difference helper.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;

use atm::network::ParamTensors;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

pub const SYN_TOPICS: usize = 5;
pub const SYN_VOCAB: usize = 200;
pub const SYN_SUPPORT: usize = 20;
pub const SYN_DOCS: usize = 2000;
pub const SYN_DOC_LEN: usize = 60;
pub const SYN_DOC_ALPHA: f64 = 0.1;
/// Share of each topic's mass spread uniformly over the whole vocabulary.
pub const SYN_BACKGROUND: f64 = 0.05;

/// Documents drawn from K planted topics. Topic k puts most of its mass on
/// words `[20k, 20k + 20)`; the remaining words only appear as background.
pub struct Synthetic {
    pub words: Vec<String>,
    pub supports: Vec<Vec<usize>>,
    pub docs: Vec<Vec<usize>>,
}

impl Synthetic {
    pub fn generate(n_docs: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words = (0..SYN_VOCAB).map(|i| format!("w{i:03}")).collect();
        let supports: Vec<Vec<usize>> = (0..SYN_TOPICS)
            .map(|k| (k * SYN_SUPPORT..(k + 1) * SYN_SUPPORT).collect())
            .collect();
        let phi: Vec<Vec<f64>> = supports
            .iter()
            .map(|s| {
                let mut row = vec![SYN_BACKGROUND / SYN_VOCAB as f64; SYN_VOCAB];
                for &w in s {
                    row[w] += (1.0 - SYN_BACKGROUND) / SYN_SUPPORT as f64;
                }
                row
            })
            .collect();
        let gamma = Gamma::new(SYN_DOC_ALPHA, 1.0).unwrap();
        let docs = (0..n_docs)
            .map(|_| {
                let mut theta: Vec<f64> = (0..SYN_TOPICS)
                    .map(|_| gamma.sample(&mut rng) + 1e-300)
                    .collect();
                let z: f64 = theta.iter().sum();
                theta.iter_mut().for_each(|t| *t /= z);
                (0..SYN_DOC_LEN)
                    .map(|_| {
                        let k = categorical(&theta, &mut rng);
                        categorical(&phi[k], &mut rng)
                    })
                    .collect()
            })
            .collect();
        Self {
            words,
            supports,
            docs,
        }
    }

    pub fn vocab_text(&self) -> String {
        self.words.iter().map(|w| format!("{w}\n")).collect()
    }

    pub fn token_text(&self) -> String {
        let mut out = String::new();
        for d in &self.docs {
            let line: Vec<&str> = d.iter().map(|&w| self.words[w].as_str()).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
        out
    }

    pub fn docword_text(&self) -> String {
        docword(&self.docs, SYN_VOCAB)
    }

    /// Writes `vocab.txt`, `docword.txt` and `text.txt` into `dir`.
    pub fn write_to(&self, dir: &Path) {
        std::fs::write(dir.join("vocab.txt"), self.vocab_text()).unwrap();
        std::fs::write(dir.join("docword.txt"), self.docword_text()).unwrap();
        std::fs::write(dir.join("text.txt"), self.token_text()).unwrap();
    }
}

pub fn categorical<R: Rng>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * p.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// UCI docword text (1-based ids) for token-id documents.
pub fn docword(docs: &[Vec<usize>], vocab: usize) -> String {
    let mut lines = Vec::new();
    for (d, doc) in docs.iter().enumerate() {
        let mut counts = std::collections::BTreeMap::new();
        for &w in doc {
            *counts.entry(w).or_insert(0u32) += 1;
        }
        for (w, c) in counts {
            lines.push(format!("{} {} {}", d + 1, w + 1, c));
        }
    }
    format!(
        "{}\n{}\n{}\n{}\n",
        docs.len(),
        vocab,
        lines.len(),
        lines.join("\n")
    )
}

/// Best one-to-one assignment of rows to columns by exhaustive search;
/// returns (total, column assigned to each row).
pub fn best_assignment(score: &[Vec<f64>]) -> (f64, Vec<usize>) {
    fn go(
        score: &[Vec<f64>],
        row: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<usize>,
        best: &mut (f64, Vec<usize>),
        acc: f64,
    ) {
        if row == score.len() {
            if acc > best.0 {
                *best = (acc, cur.clone());
            }
            return;
        }
        for c in 0..score[row].len() {
            if !used[c] {
                used[c] = true;
                cur.push(c);
                go(score, row + 1, used, cur, best, acc + score[row][c]);
                cur.pop();
                used[c] = false;
            }
        }
    }
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let cols = score.first().map_or(0, Vec::len);
    go(
        score,
        0,
        &mut vec![false; cols],
        &mut Vec::new(),
        &mut best,
        0.0,
    );
    best
}

/// Straight-from-the-definition coherence, scanning the corpus for every
/// probability it needs.
pub mod oracle {
    const EPS: f64 = 1e-12;

    fn doc_count(docs: &[Vec<usize>], ws: &[usize]) -> f64 {
        docs.iter()
            .filter(|d| ws.iter().all(|w| d.contains(w)))
            .count() as f64
    }

    fn windows(docs: &[Vec<usize>], size: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for d in docs {
            if d.is_empty() {
                continue;
            }
            if d.len() <= size {
                out.push(d.clone());
            } else {
                for start in 0..=d.len() - size {
                    out.push(d[start..start + size].to_vec());
                }
            }
        }
        out
    }

    pub fn umass(docs: &[Vec<usize>], words: &[usize]) -> f64 {
        let mut s = 0.0;
        for i in 1..words.len() {
            for j in 0..i {
                let dj = doc_count(docs, &[words[j]]);
                if dj > 0.0 {
                    s += ((doc_count(docs, &[words[i], words[j]]) + 1.0) / dj).ln();
                }
            }
        }
        s
    }

    fn pair_stats(docs: &[Vec<usize>], words: &[usize], size: usize) -> Vec<(f64, f64, f64)> {
        let ws = windows(docs, size);
        let n = ws.len() as f64;
        let mut out = Vec::new();
        for i in 0..words.len() {
            for j in i + 1..words.len() {
                let pa = doc_count(&ws, &[words[i]]) / n;
                let pb = doc_count(&ws, &[words[j]]) / n;
                if pa > 0.0 && pb > 0.0 {
                    out.push((doc_count(&ws, &[words[i], words[j]]) / n, pa, pb));
                }
            }
        }
        out
    }

    pub fn uci(docs: &[Vec<usize>], words: &[usize], size: usize) -> f64 {
        let stats = pair_stats(docs, words, size);
        stats
            .iter()
            .map(|&(ab, a, b)| ((ab + EPS) / (a * b)).ln())
            .sum::<f64>()
            / stats.len() as f64
    }

    pub fn npmi(docs: &[Vec<usize>], words: &[usize], size: usize) -> f64 {
        let stats = pair_stats(docs, words, size);
        stats
            .iter()
            .map(|&(ab, a, b)| {
                if ab == 1.0 {
                    1.0
                } else {
                    (((ab + EPS) / (a * b)).ln() / -(ab + EPS).ln()).clamp(-1.0, 1.0)
                }
            })
            .sum::<f64>()
            / stats.len() as f64
    }

    pub fn topq(scores: &[f64], q: f64) -> f64 {
        let mut s = scores.to_vec();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let take = ((q / 100.0) * s.len() as f64).ceil() as usize;
        s[..take].iter().sum::<f64>() / take as f64
    }
}

/// Central-difference gradient of `f` with respect to every scalar of
/// `params`, in `tensors()` order.
pub fn numeric_grad<P, F>(params: &P, h: f64, mut f: F) -> Vec<Vec<f64>>
where
    P: ParamTensors + Clone,
    F: FnMut(&P) -> f64,
{
    let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let mut out = Vec::with_capacity(shapes.len());
    for (ti, &n) in shapes.iter().enumerate() {
        let mut g = Vec::with_capacity(n);
        for i in 0..n {
            let mut plus = params.clone();
            plus.tensors_mut()[ti][i] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[ti][i] -= h;
            g.push((f(&plus) - f(&minus)) / (2.0 * h));
        }
        out.push(g);
    }
    out
}

/// Largest `|a - n| / max(|a|, |n|, floor)` over matching entries.
pub fn max_rel_err(analytic: &[&[f64]], numeric: &[Vec<f64>], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(numeric) {
        assert_eq!(a.len(), n.len());
        for (&x, &y) in a.iter().zip(n) {
            worst = worst.max((x - y).abs() / x.abs().max(y.abs()).max(floor));
        }
    }
    worst
}
