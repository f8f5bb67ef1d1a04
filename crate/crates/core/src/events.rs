//! Open-domain event extraction: each topic becomes an ⟨org, loc, per, key⟩
//! quadruple by ranking entity-typed slices of its word distribution.
//!
//! Slot probabilities are the raw φ_k entries, not renormalized within the
//! slot, so a slot's total shows how much topic mass it captures.

use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use log::warn;

use crate::corpus::Vocabulary;
use crate::error::{AtmError, Result};
use crate::topics::TopicMatrix;

pub const DEFAULT_SLOT_WORDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    Org,
    Loc,
    Per,
    Key,
}

impl Slot {
    /// Precedence order: a token listed under several types goes to the first.
    pub const ALL: [Slot; 4] = [Slot::Org, Slot::Loc, Slot::Per, Slot::Key];

    pub fn label(self) -> &'static str {
        match self {
            Slot::Org => "org",
            Slot::Loc => "loc",
            Slot::Per => "per",
            Slot::Key => "key",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A token claimed by more than one entity type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconConflict {
    pub word: usize,
    pub kept: Slot,
    pub dropped: Slot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityLexicon {
    sets: [BTreeSet<usize>; 4],
    sources: [String; 4],
    skipped: usize,
    conflicts: Vec<LexiconConflict>,
}

impl EntityLexicon {
    /// Builds disjoint slot sets from token lists given in `Slot::ALL` order.
    /// Tokens missing from the vocabulary are counted and skipped.
    pub fn from_tokens<S: AsRef<str>>(lists: [&[S]; 4], vocab: &Vocabulary) -> Result<Self> {
        Self::build(lists, vocab, Default::default())
    }

    fn build<S: AsRef<str>>(
        lists: [&[S]; 4],
        vocab: &Vocabulary,
        sources: [String; 4],
    ) -> Result<Self> {
        let mut sets: [BTreeSet<usize>; 4] = Default::default();
        let mut owner: HashMap<usize, Slot> = HashMap::new();
        let mut skipped = 0;
        let mut conflicts = Vec::new();
        for (slot, tokens) in Slot::ALL.into_iter().zip(lists) {
            for token in tokens {
                let token = token.as_ref().trim();
                if token.is_empty() {
                    continue;
                }
                let Some(id) = vocab.id(token) else {
                    skipped += 1;
                    continue;
                };
                match owner.get(&id) {
                    None => {
                        owner.insert(id, slot);
                        sets[slot.index()].insert(id);
                    }
                    Some(&kept) if kept != slot => {
                        warn!(
                            "lexicon token {token:?} listed as {kept} and {slot}; keeping {kept}"
                        );
                        conflicts.push(LexiconConflict {
                            word: id,
                            kept,
                            dropped: slot,
                        });
                    }
                    Some(_) => {}
                }
            }
        }
        if skipped > 0 {
            warn!("{skipped} lexicon tokens not in the vocabulary were skipped");
        }
        if sets.iter().all(BTreeSet::is_empty) {
            return Err(AtmError::Value(
                "entity lexicon is empty after vocabulary filtering".into(),
            ));
        }
        Ok(Self {
            sets,
            sources,
            skipped,
            conflicts,
        })
    }

    pub fn set(&self, slot: Slot) -> &BTreeSet<usize> {
        &self.sets[slot.index()]
    }

    pub fn source(&self, slot: Slot) -> &str {
        &self.sources[slot.index()]
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn conflicts(&self) -> &[LexiconConflict] {
        &self.conflicts
    }
}

/// Reads four newline-separated token files (org, loc, per, key).
pub fn load_entity_lexicon(
    org: &Path,
    loc: &Path,
    per: &Path,
    key: &Path,
    vocab: &Vocabulary,
) -> Result<EntityLexicon> {
    let paths: [&Path; 4] = [org, loc, per, key];
    let mut texts = Vec::with_capacity(4);
    for p in paths {
        texts.push(std::fs::read_to_string(p).map_err(|e| AtmError::io(p, e))?);
    }
    let lines: Vec<Vec<&str>> = texts.iter().map(|t| t.lines().collect()).collect();
    let sources = paths.map(|p| PathBuf::from(p).display().to_string());
    EntityLexicon::build(
        [&lines[0][..], &lines[1][..], &lines[2][..], &lines[3][..]],
        vocab,
        sources,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotWords {
    pub slot: Slot,
    pub words: Vec<(usize, f64)>,
    /// The slot's lexicon held fewer than `n_slot` words (possibly none).
    pub short: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventQuadruple {
    pub event_id: usize,
    pub slots: [SlotWords; 4],
}

impl EventQuadruple {
    pub fn slot(&self, slot: Slot) -> &SlotWords {
        &self.slots[slot.index()]
    }
}

pub fn extract_events(
    topics: &TopicMatrix,
    lexicon: &EntityLexicon,
    n_slot: usize,
) -> Result<Vec<EventQuadruple>> {
    if n_slot == 0 {
        return Err(AtmError::Value("n_slot must be at least 1".into()));
    }
    let v = topics.vocab_size();
    if let Some(&bad) = lexicon.sets.iter().flatten().find(|&&id| id >= v) {
        return Err(AtmError::Index { index: bad, len: v });
    }
    let events = (0..topics.n_topics())
        .map(|k| {
            let phi = topics.topic(k);
            let slots = Slot::ALL.map(|slot| {
                let set = lexicon.set(slot);
                let mut words: Vec<(usize, f64)> = set.iter().map(|&id| (id, phi[id])).collect();
                words.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                words.truncate(n_slot);
                SlotWords {
                    slot,
                    words,
                    short: set.len() < n_slot,
                }
            });
            EventQuadruple { event_id: k, slots }
        })
        .collect();
    Ok(events)
}

/// One block per event, topic ids 1-based, blank line between blocks.
pub fn format_events_text(events: &[EventQuadruple], vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for (i, ev) in events.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        writeln!(out, "event {}", ev.event_id + 1).unwrap();
        for s in &ev.slots {
            let words: Vec<&str> = s
                .words
                .iter()
                .map(|&(id, _)| vocab.word(id).unwrap_or("?"))
                .collect();
            writeln!(out, "{}: {}", s.slot, words.join(" ")).unwrap();
        }
    }
    out
}

pub fn format_events_csv(events: &[EventQuadruple], vocab: &Vocabulary) -> String {
    let mut out = String::from("event_id,slot,rank,word,prob\n");
    for ev in events {
        for s in &ev.slots {
            for (rank, &(id, p)) in s.words.iter().enumerate() {
                let word = vocab.word(id).unwrap_or("?");
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    ev.event_id + 1,
                    s.slot,
                    rank + 1,
                    word,
                    p
                )
                .unwrap();
            }
        }
    }
    out
}
