//! Splitting agenda items into speech blocks from the moderator's interruptions.
//!
//! One pass over the speeches of an agenda item: every moderator speech that
//! the classifier flags as a subject interruption closes the running block and
//! becomes the first speech of the next one. All other speeches join the
//! running block. Empty blocks are never emitted, so an interruption at index 0
//! simply opens the first block.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{AgendaItem, AgendaKey, Corpus, CorpusError, Speech, SpeechBlock, SpeechKey};
use crate::models::{ModelError, TrainedPipeline};

/// Anything that can score a speech as a subject interruption.
pub trait InterruptionClassifier: Sync {
    /// Probability that `speech` interrupts the current subject.
    fn probability(&self, speech: &Speech) -> Result<f64, ModelError>;

    /// Decision threshold; `p >= threshold` is an interruption.
    fn threshold(&self) -> f64 {
        0.5
    }

    fn fingerprint(&self) -> String;
}

impl InterruptionClassifier for TrainedPipeline {
    fn probability(&self, speech: &Speech) -> Result<f64, ModelError> {
        self.predict_proba(&speech.text)
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }
}

/// Answers from a fixed label table; unknown speeches score 0.
#[derive(Debug, Clone, Default)]
pub struct LabelOracle {
    pub labels: BTreeMap<SpeechKey, u8>,
}

impl LabelOracle {
    pub fn new(labels: BTreeMap<SpeechKey, u8>) -> Self {
        Self { labels }
    }
}

impl InterruptionClassifier for LabelOracle {
    fn probability(&self, speech: &Speech) -> Result<f64, ModelError> {
        Ok(f64::from(self.labels.get(&speech.key()).copied().unwrap_or(0)))
    }

    fn fingerprint(&self) -> String {
        format!("oracle:{}", crate::fingerprint::fingerprint(&self.labels.iter().collect::<Vec<_>>()))
    }
}

/// Classifier verdict on one moderator speech.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub index: usize,
    pub order: u32,
    pub probability: f64,
    pub interruption: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionResult {
    pub agenda: AgendaKey,
    pub blocks: Vec<SpeechBlock>,
    pub classifier_fingerprint: String,
    pub decisions: Vec<Decision>,
}

impl PartitionResult {
    /// Indices (> 0) at which a block starts.
    pub fn boundaries(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.start).filter(|&s| s > 0).collect()
    }
}

pub fn is_moderator(speech: &Speech) -> bool {
    speech.is_moderator
}

pub fn is_subject_interruption(pipeline: &TrainedPipeline, text: &str) -> Result<bool, ModelError> {
    pipeline.classify(text)
}

/// Partitions one agenda item. An empty item yields zero blocks.
pub fn partition_agenda<C: InterruptionClassifier + ?Sized>(
    item: &AgendaItem,
    classifier: &C,
) -> Result<PartitionResult, ModelError> {
    let threshold = classifier.threshold();
    let mut blocks = Vec::new();
    let mut decisions = Vec::new();
    let mut current: Option<usize> = None;
    for (i, speech) in item.speeches.iter().enumerate() {
        if is_moderator(speech) {
            let probability = classifier.probability(speech)?;
            let interruption = probability >= threshold;
            decisions.push(Decision {
                index: i,
                order: speech.order,
                probability,
                interruption,
            });
            if interruption {
                if let Some(start) = current.take() {
                    blocks.push(SpeechBlock::new(start, i - 1));
                }
            }
        }
        current.get_or_insert(i);
    }
    if let Some(start) = current {
        blocks.push(SpeechBlock::new(start, item.speeches.len() - 1));
    }
    Ok(PartitionResult {
        agenda: item.key(),
        blocks,
        classifier_fingerprint: classifier.fingerprint(),
        decisions,
    })
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub partitioned: usize,
    pub blocks: usize,
    pub errors: Vec<(AgendaKey, String)>,
}

/// Partitions every agenda item labelled `agenda_label` and stores the results
/// in the corpus. Failures are collected per item; other items still proceed.
pub fn partition_corpus<C: InterruptionClassifier + ?Sized>(
    corpus: &mut Corpus,
    classifier: &C,
    agenda_label: &str,
) -> PartitionSummary {
    let outcomes: Vec<(AgendaKey, Result<PartitionResult, ModelError>)> = corpus
        .select_agenda(agenda_label)
        .par_iter()
        .map(|item| (item.key(), partition_agenda(item, classifier)))
        .collect();
    let mut summary = PartitionSummary::default();
    for (key, outcome) in outcomes {
        let stored = outcome
            .map_err(|e| e.to_string())
            .and_then(|p| {
                let n = p.blocks.len();
                corpus.save_blocks(p).map(|_| n).map_err(|e: CorpusError| e.to_string())
            });
        match stored {
            Ok(n) => {
                summary.partitioned += 1;
                summary.blocks += n;
            }
            Err(e) => summary.errors.push((key, e)),
        }
    }
    summary
}

/// One line per block: index range, opening speaker and an excerpt of its first sentence.
pub fn render_report(item: &AgendaItem, partition: &PartitionResult) -> String {
    let mut out = format!("{} ({} speeches, {} blocks)\n", partition.agenda, item.len(), partition.blocks.len());
    for (i, b) in partition.blocks.iter().enumerate() {
        let opener = &item.speeches[b.start];
        let sentence = opener
            .text
            .split_inclusive(['.', '?', '!'])
            .next()
            .unwrap_or(&opener.text)
            .trim();
        let excerpt: String = sentence.chars().take(80).collect();
        let ellipsis = if sentence.chars().count() > 80 { "…" } else { "" };
        out.push_str(&format!(
            "  block {:>3}  [{:>4}..{:>4}]  {:<20}  {}{}\n",
            i, b.start, b.end, opener.debater, excerpt, ellipsis
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    struct Flags(Vec<bool>);

    impl InterruptionClassifier for Flags {
        fn probability(&self, speech: &Speech) -> Result<f64, ModelError> {
            Ok(if self.0[speech.order as usize] { 0.9 } else { 0.1 })
        }
        fn fingerprint(&self) -> String {
            "flags".into()
        }
    }

    fn item(moderator: &[bool]) -> AgendaItem {
        AgendaItem {
            minute_id: "m".into(),
            label: "political statements".into(),
            speeches: moderator
                .iter()
                .enumerate()
                .map(|(i, &m)| Speech {
                    minute_id: "m".into(),
                    date: NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
                    order: i as u32,
                    debater: if m { "chair".into() } else { format!("d{i}") },
                    party: None,
                    text: format!("Speech number {i}. More."),
                    agenda_item: "political statements".into(),
                    is_moderator: m,
                })
                .collect(),
        }
    }

    fn blocks(p: &PartitionResult) -> Vec<(usize, usize)> {
        p.blocks.iter().map(|&b| b.into()).collect()
    }

    #[test]
    fn interruption_at_three_splits_six() {
        let it = item(&[true, false, false, true, false, false]);
        let flags = Flags(vec![false, false, false, true, false, false]);
        let p = partition_agenda(&it, &flags).unwrap();
        assert_eq!(blocks(&p), vec![(0, 2), (3, 5)]);
        assert_eq!(p.decisions.len(), 2);
        assert!(p.decisions[1].interruption);
        assert_eq!(p.boundaries(), vec![3]);
    }

    #[test]
    fn no_interruptions_single_block() {
        let it = item(&[true, false, true, false]);
        let p = partition_agenda(&it, &Flags(vec![false; 4])).unwrap();
        assert_eq!(blocks(&p), vec![(0, 3)]);
    }

    #[test]
    fn leading_interruption_has_no_empty_block() {
        let it = item(&[true, false, true, false]);
        let p = partition_agenda(&it, &Flags(vec![true, false, true, false])).unwrap();
        assert_eq!(blocks(&p), vec![(0, 1), (2, 3)]);
    }

    #[test]
    fn non_moderator_flags_are_ignored() {
        let it = item(&[false, false, false]);
        let p = partition_agenda(&it, &Flags(vec![true; 3])).unwrap();
        assert_eq!(blocks(&p), vec![(0, 2)]);
        assert!(p.decisions.is_empty());
    }

    #[test]
    fn empty_item_zero_blocks() {
        let it = item(&[]);
        let p = partition_agenda(&it, &Flags(vec![])).unwrap();
        assert!(p.blocks.is_empty());
    }

    #[test]
    fn threshold_tie_counts_as_interruption() {
        struct Half;
        impl InterruptionClassifier for Half {
            fn probability(&self, _: &Speech) -> Result<f64, ModelError> {
                Ok(0.5)
            }
            fn fingerprint(&self) -> String {
                "half".into()
            }
        }
        let it = item(&[false, true, false]);
        assert_eq!(blocks(&partition_agenda(&it, &Half).unwrap()), vec![(0, 0), (1, 2)]);
    }

    #[test]
    fn report_has_one_line_per_block() {
        let it = item(&[true, false, false, true, false, false]);
        let p = partition_agenda(&it, &Flags(vec![false, false, false, true, false, false])).unwrap();
        let report = render_report(&it, &p);
        assert_eq!(report.lines().count(), 3);
        assert!(report.contains("Speech number 3."));
    }
}
