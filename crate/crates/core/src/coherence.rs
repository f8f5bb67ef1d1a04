//! In-corpus topic coherence: UMass over document cooccurrence, UCI and NPMI
//! over sliding windows, and the top-q% aggregation across topics.
//!
//! All logarithms are natural.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::error::{AtmError, Result};

pub const DEFAULT_WINDOW: usize = 10;
/// Added to joint probabilities so disjoint pairs stay finite.
pub const JOINT_EPS: f64 = 1e-12;
pub const DEFAULT_QUANTILES: [f64; 4] = [50.0, 70.0, 90.0, 100.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountMode {
    Document,
    Window(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    UMass,
    Uci,
    Npmi,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::UMass, Metric::Uci, Metric::Npmi];

    pub fn name(self) -> &'static str {
        match self {
            Metric::UMass => "umass",
            Metric::Uci => "uci",
            Metric::Npmi => "npmi",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = AtmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "umass" => Ok(Metric::UMass),
            "uci" => Ok(Metric::Uci),
            "npmi" => Ok(Metric::Npmi),
            other => Err(AtmError::Value(format!("unknown metric {other:?}"))),
        }
    }
}

/// Single and pair presence counts over counting units (documents or
/// window positions), restricted to a target word set.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceTable {
    mode: CountMode,
    singles: HashMap<usize, u64>,
    pairs: HashMap<(usize, usize), u64>,
    units: u64,
}

impl CooccurrenceTable {
    pub fn mode(&self) -> CountMode {
        self.mode
    }

    pub fn units(&self) -> u64 {
        self.units
    }

    pub fn count(&self, w: usize) -> u64 {
        self.singles.get(&w).copied().unwrap_or(0)
    }

    pub fn pair(&self, a: usize, b: usize) -> u64 {
        if a == b {
            return self.count(a);
        }
        let key = if a < b { (a, b) } else { (b, a) };
        self.pairs.get(&key).copied().unwrap_or(0)
    }

    fn add_unit(&mut self, present: &[usize]) {
        self.units += 1;
        for (i, &a) in present.iter().enumerate() {
            *self.singles.entry(a).or_insert(0) += 1;
            for &b in &present[i + 1..] {
                *self.pairs.entry((a, b)).or_insert(0) += 1;
            }
        }
    }
}

/// Counts presence of `targets` per unit. Window mode slides a window of
/// `size` tokens with stride 1; a nonempty document shorter than the window
/// forms a single unit.
pub fn count_cooccurrences(
    docs: &[Vec<usize>],
    targets: &BTreeSet<usize>,
    mode: CountMode,
) -> Result<CooccurrenceTable> {
    if docs.is_empty() {
        return Err(AtmError::Value(
            "cannot count cooccurrences in an empty corpus".into(),
        ));
    }
    if targets.is_empty() {
        return Err(AtmError::Value("no target words".into()));
    }
    if let CountMode::Window(w) = mode {
        if w < 2 {
            return Err(AtmError::Value(format!(
                "window size must be >= 2, got {w}"
            )));
        }
    }
    let mut table = CooccurrenceTable {
        mode,
        singles: HashMap::new(),
        pairs: HashMap::new(),
        units: 0,
    };
    let mut present = Vec::new();
    let collect = |tokens: &[usize], present: &mut Vec<usize>| {
        present.clear();
        present.extend(tokens.iter().copied().filter(|t| targets.contains(t)));
        present.sort_unstable();
        present.dedup();
    };
    for doc in docs {
        match mode {
            CountMode::Document => {
                collect(doc, &mut present);
                table.add_unit(&present);
            }
            CountMode::Window(w) => {
                if doc.is_empty() {
                    continue;
                }
                if doc.len() <= w {
                    collect(doc, &mut present);
                    table.add_unit(&present);
                } else {
                    for window in doc.windows(w) {
                        collect(window, &mut present);
                        table.add_unit(&present);
                    }
                }
            }
        }
    }
    if table.units == 0 {
        return Err(AtmError::Value("corpus produced no counting units".into()));
    }
    Ok(table)
}

/// A topic's coherence with the word pairs that could not be scored.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicCoherence {
    pub score: f64,
    pub skipped_pairs: Vec<(usize, usize)>,
}

fn require_words(words: &[usize]) -> Result<()> {
    if words.len() < 2 {
        return Err(AtmError::Value(format!(
            "coherence needs at least 2 words, got {}",
            words.len()
        )));
    }
    Ok(())
}

/// `Σ_{i>j} ln((D(w_i, w_j) + 1) / D(w_j))` in listed (rank) order.
pub fn umass(words: &[usize], table: &CooccurrenceTable) -> Result<TopicCoherence> {
    require_words(words)?;
    if table.mode() != CountMode::Document {
        return Err(AtmError::Value("UMass needs document-mode counts".into()));
    }
    let mut score = 0.0;
    let mut skipped_pairs = Vec::new();
    for i in 1..words.len() {
        for j in 0..i {
            let dj = table.count(words[j]);
            if dj == 0 {
                skipped_pairs.push((words[i], words[j]));
                continue;
            }
            score += ((table.pair(words[i], words[j]) as f64 + 1.0) / dj as f64).ln();
        }
    }
    Ok(TopicCoherence {
        score,
        skipped_pairs,
    })
}

fn pairwise_mean<F>(
    words: &[usize],
    table: &CooccurrenceTable,
    name: &str,
    pair_score: F,
) -> Result<TopicCoherence>
where
    F: Fn(f64, f64, f64) -> f64,
{
    require_words(words)?;
    if !matches!(table.mode(), CountMode::Window(_)) {
        return Err(AtmError::Value(format!(
            "{name} needs sliding-window counts"
        )));
    }
    let n = table.units() as f64;
    let mut total = 0.0;
    let mut scored = 0usize;
    let mut skipped_pairs = Vec::new();
    for i in 0..words.len() {
        for j in i + 1..words.len() {
            let (a, b) = (words[i], words[j]);
            let (ca, cb) = (table.count(a), table.count(b));
            if ca == 0 || cb == 0 {
                skipped_pairs.push((a, b));
                continue;
            }
            let p_ab = table.pair(a, b) as f64 / n;
            total += pair_score(p_ab, ca as f64 / n, cb as f64 / n);
            scored += 1;
        }
    }
    if scored == 0 {
        return Err(AtmError::Value(format!(
            "{name}: no pair has both words present in the reference counts"
        )));
    }
    Ok(TopicCoherence {
        score: total / scored as f64,
        skipped_pairs,
    })
}

fn pmi(p_ab: f64, p_a: f64, p_b: f64) -> f64 {
    ((p_ab + JOINT_EPS) / (p_a * p_b)).ln()
}

/// Mean pointwise mutual information over all word pairs.
pub fn uci(words: &[usize], table: &CooccurrenceTable) -> Result<TopicCoherence> {
    pairwise_mean(words, table, "UCI", pmi)
}

/// Mean normalized PMI over all word pairs; each pair value lies in [-1, 1].
pub fn npmi(words: &[usize], table: &CooccurrenceTable) -> Result<TopicCoherence> {
    pairwise_mean(words, table, "NPMI", npmi_pair)
}

pub(crate) fn npmi_pair(p_ab: f64, p_a: f64, p_b: f64) -> f64 {
    if p_ab >= 1.0 {
        // present in every unit: -ln(p_ab + eps) would flip sign
        return 1.0;
    }
    (pmi(p_ab, p_a, p_b) / -(p_ab + JOINT_EPS).ln()).clamp(-1.0, 1.0)
}

pub fn score(metric: Metric, words: &[usize], table: &CooccurrenceTable) -> Result<TopicCoherence> {
    match metric {
        Metric::UMass => umass(words, table),
        Metric::Uci => uci(words, table),
        Metric::Npmi => npmi(words, table),
    }
}

/// Mean of the best `ceil(q * K / 100)` topic scores.
pub fn aggregate_topq(scores: &[f64], q: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(AtmError::Value("no topic scores to aggregate".into()));
    }
    if !(q > 0.0 && q <= 100.0) {
        return Err(AtmError::Value(format!("q = {q} outside (0, 100]")));
    }
    let take = ((q * scores.len() as f64 / 100.0).ceil() as usize).clamp(1, scores.len());
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted[..take].iter().sum::<f64>() / take as f64)
}
