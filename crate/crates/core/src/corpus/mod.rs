//! Transcript data model: speeches grouped into agenda items and minutes.

mod io;
mod synth;

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::partition::PartitionResult;

pub use io::{
    load_corpus, read_blocks_jsonl, read_labels_csv, read_transcripts, write_blocks_jsonl,
    write_labels_csv, write_transcripts, Format,
};
pub use synth::{generate_synthetic, SynthConfig, SynthTruth};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("record {record}: missing field `{field}`")]
    MissingField { record: usize, field: String },
    #[error("record {record}: field `{field}` is malformed: {reason}")]
    BadField {
        record: usize,
        field: String,
        reason: String,
    },
    #[error("minute {minute_id}: speaking order {order} appears more than once")]
    DuplicateOrder { minute_id: String, order: u32 },
    #[error("record {0}: speech text is empty")]
    EmptyText(usize),
    #[error("minute {minute_id}: conflicting dates {first} and {second}")]
    InconsistentDate {
        minute_id: String,
        first: NaiveDate,
        second: NaiveDate,
    },
    #[error("invalid partition for {agenda}: {reason}")]
    InvalidPartition { agenda: AgendaKey, reason: String },
    #[error("unknown agenda item {0}")]
    UnknownAgenda(AgendaKey),
    #[error("unknown speech {0}")]
    UnknownSpeech(SpeechKey),
    #[error("label for {key} must be 0 or 1, got {value}")]
    BadLabel { key: SpeechKey, value: String },
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error on line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Identifies a speech: (minute_id, speaking order).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpeechKey {
    pub minute_id: String,
    pub order: u32,
}

impl SpeechKey {
    pub fn new(minute_id: impl Into<String>, order: u32) -> Self {
        Self {
            minute_id: minute_id.into(),
            order,
        }
    }
}

impl fmt::Display for SpeechKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.minute_id, self.order)
    }
}

/// Identifies an agenda item: (minute_id, agenda label).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgendaKey {
    pub minute_id: String,
    pub agenda_item: String,
}

impl AgendaKey {
    pub fn new(minute_id: impl Into<String>, agenda_item: impl Into<String>) -> Self {
        Self {
            minute_id: minute_id.into(),
            agenda_item: agenda_item.into(),
        }
    }
}

impl fmt::Display for AgendaKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.minute_id, self.agenda_item)
    }
}

/// One turn at the floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Speech {
    pub minute_id: String,
    pub date: NaiveDate,
    pub order: u32,
    pub debater: String,
    pub party: Option<String>,
    pub text: String,
    pub agenda_item: String,
    pub is_moderator: bool,
}

impl Speech {
    pub fn key(&self) -> SpeechKey {
        SpeechKey::new(self.minute_id.clone(), self.order)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgendaItem {
    pub minute_id: String,
    pub label: String,
    pub speeches: Vec<Speech>,
}

impl AgendaItem {
    pub fn key(&self) -> AgendaKey {
        AgendaKey::new(self.minute_id.clone(), self.label.clone())
    }

    pub fn len(&self) -> usize {
        self.speeches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speeches.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minute {
    pub minute_id: String,
    pub date: NaiveDate,
    pub agenda_items: Vec<AgendaItem>,
}

/// Contiguous inclusive range of speech indices within one agenda item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct SpeechBlock {
    pub start: usize,
    pub end: usize,
}

impl SpeechBlock {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, index: usize) -> bool {
        (self.start..=self.end).contains(&index)
    }
}

impl From<(usize, usize)> for SpeechBlock {
    fn from((start, end): (usize, usize)) -> Self {
        Self { start, end }
    }
}

impl From<SpeechBlock> for (usize, usize) {
    fn from(b: SpeechBlock) -> Self {
        (b.start, b.end)
    }
}

/// Checks that `blocks` are non-empty, disjoint and cover `0..len` in order.
pub fn check_blocks(blocks: &[SpeechBlock], len: usize) -> Result<(), String> {
    if len == 0 {
        return if blocks.is_empty() {
            Ok(())
        } else {
            Err("blocks given for an empty agenda item".into())
        };
    }
    let mut next = 0usize;
    for (i, b) in blocks.iter().enumerate() {
        if b.start > b.end {
            return Err(format!("block {i} is empty ({}..{})", b.start, b.end));
        }
        if b.start < next {
            return Err(format!("block {i} overlaps its predecessor at index {}", b.start));
        }
        if b.start > next {
            return Err(format!("gap before block {i}: index {next} is uncovered"));
        }
        next = b.end + 1;
    }
    if next != len {
        return Err(format!("blocks cover {next} of {len} speeches"));
    }
    Ok(())
}

/// The transcript database plus persisted labels and partitions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub minutes: Vec<Minute>,
    pub label_store: BTreeMap<SpeechKey, u8>,
    pub block_store: BTreeMap<AgendaKey, PartitionResult>,
}

impl Corpus {
    pub fn new(minutes: Vec<Minute>) -> Self {
        Self {
            minutes,
            ..Self::default()
        }
    }

    pub fn speeches(&self) -> impl Iterator<Item = &Speech> {
        self.agenda_items().flat_map(|a| a.speeches.iter())
    }

    pub fn agenda_items(&self) -> impl Iterator<Item = &AgendaItem> {
        self.minutes.iter().flat_map(|m| m.agenda_items.iter())
    }

    pub fn n_speeches(&self) -> usize {
        self.speeches().count()
    }

    pub fn agenda(&self, key: &AgendaKey) -> Option<&AgendaItem> {
        self.minutes
            .iter()
            .filter(|m| m.minute_id == key.minute_id)
            .flat_map(|m| m.agenda_items.iter())
            .find(|a| a.label == key.agenda_item)
    }

    pub fn speech(&self, key: &SpeechKey) -> Option<&Speech> {
        self.minutes
            .iter()
            .filter(|m| m.minute_id == key.minute_id)
            .flat_map(|m| m.agenda_items.iter())
            .flat_map(|a| a.speeches.iter())
            .find(|s| s.order == key.order)
    }

    /// Locates a speech together with its agenda item and index inside it.
    pub fn locate(&self, key: &SpeechKey) -> Option<(&AgendaItem, usize)> {
        self.minutes
            .iter()
            .filter(|m| m.minute_id == key.minute_id)
            .flat_map(|m| m.agenda_items.iter())
            .find_map(|a| {
                a.speeches
                    .iter()
                    .position(|s| s.order == key.order)
                    .map(|i| (a, i))
            })
    }

    /// All agenda items labelled `label`, in minute order.
    pub fn select_agenda(&self, label: &str) -> Vec<&AgendaItem> {
        self.agenda_items().filter(|a| a.label == label).collect()
    }

    /// Moderator speeches of the agenda items labelled `label`, in corpus order.
    pub fn moderator_speeches(&self, label: &str) -> Vec<&Speech> {
        self.select_agenda(label)
            .into_iter()
            .flat_map(|a| a.speeches.iter())
            .filter(|s| s.is_moderator)
            .collect()
    }

    pub fn set_label(&mut self, key: SpeechKey, label: u8) -> Result<(), CorpusError> {
        if label > 1 {
            return Err(CorpusError::BadLabel {
                key,
                value: label.to_string(),
            });
        }
        if self.speech(&key).is_none() {
            return Err(CorpusError::UnknownSpeech(key));
        }
        self.label_store.insert(key, label);
        Ok(())
    }

    /// Stores a validated partition for its agenda item. Re-saving replaces the entry.
    pub fn save_blocks(&mut self, partition: PartitionResult) -> Result<(), CorpusError> {
        let key = partition.agenda.clone();
        let item = self
            .agenda(&key)
            .ok_or_else(|| CorpusError::UnknownAgenda(key.clone()))?;
        check_blocks(&partition.blocks, item.len()).map_err(|reason| {
            CorpusError::InvalidPartition {
                agenda: key.clone(),
                reason,
            }
        })?;
        self.block_store.insert(key, partition);
        Ok(())
    }

    /// Verifies that every stored label and partition refers to existing data.
    pub fn validate_stores(&self) -> Result<(), CorpusError> {
        for key in self.label_store.keys() {
            if self.speech(key).is_none() {
                return Err(CorpusError::UnknownSpeech(key.clone()));
            }
        }
        for (key, part) in &self.block_store {
            let item = self
                .agenda(key)
                .ok_or_else(|| CorpusError::UnknownAgenda(key.clone()))?;
            check_blocks(&part.blocks, item.len()).map_err(|reason| {
                CorpusError::InvalidPartition {
                    agenda: key.clone(),
                    reason,
                }
            })?;
        }
        Ok(())
    }
}
