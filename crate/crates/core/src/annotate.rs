//! Semi-automatic labelling of moderator speeches.
//!
//! A small random seed set is labelled by hand, a forest is trained on it and
//! labels the rest, and a reviewer then walks the model labels, most uncertain
//! first. Label sources are ordered `model < human < reviewed`; a write never
//! lowers the source of an existing label.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, SpeechKey};
use crate::features::FeatureSpec;
use crate::models::{ClassWeight, ClassifierSpec, ForestParams, ModelError, PipelineSpec, TrainedPipeline};
use crate::rng::seeded;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("requested {requested} speeches but only {available} moderator speeches exist")]
    NotEnoughSpeeches { requested: usize, available: usize },
    #[error("need at least 2 human or reviewed labels of class {class}, have {have}")]
    InsufficientLabels { class: u8, have: usize },
    #[error("{0} is not a moderator speech")]
    NotModeratorSpeech(SpeechKey),
    #[error("label {label} for {key} is not 0 or 1")]
    InvalidLabel { key: SpeechKey, label: u8 },
    #[error("{key}: a {attempted:?} label cannot replace a {existing:?} label")]
    DowngradeForbidden {
        key: SpeechKey,
        existing: LabelSource,
        attempted: LabelSource,
    },
    #[error("labels file: {0}")]
    Csv(#[from] csv::Error),
    #[error("labels file row {row}: {reason}")]
    BadRow { row: usize, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Origin of a label, in increasing precedence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Model,
    Human,
    Reviewed,
}

impl LabelSource {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelSource::Model => "model",
            LabelSource::Human => "human",
            LabelSource::Reviewed => "reviewed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "model" => Some(LabelSource::Model),
            "human" => Some(LabelSource::Human),
            "reviewed" => Some(LabelSource::Reviewed),
            _ => None,
        }
    }

    /// Human and reviewed labels are trusted for training.
    pub fn is_trusted(self) -> bool {
        self != LabelSource::Model
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub label: u8,
    pub source: LabelSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub key: SpeechKey,
    pub label: u8,
    pub source: LabelSource,
    pub previous: Option<LabelEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSpeech {
    pub order: u32,
    pub debater: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub key: SpeechKey,
    pub debater: String,
    pub text: String,
    pub probability: f64,
    /// `|p − 0.5|`; smaller is less certain.
    pub uncertainty: f64,
    pub previous: Option<ContextSpeech>,
    pub next: Option<ContextSpeech>,
    pub current: Option<LabelEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationState {
    pub agenda_label: String,
    pub labels: BTreeMap<SpeechKey, LabelEntry>,
    pub queue: Vec<Suggestion>,
    pub model_fingerprint: Option<String>,
    pub audit: Vec<AuditEntry>,
}

impl AnnotationState {
    pub fn new(agenda_label: impl Into<String>) -> Self {
        Self {
            agenda_label: agenda_label.into(),
            ..Self::default()
        }
    }

    /// Plain label map, all sources included.
    pub fn label_map(&self) -> BTreeMap<SpeechKey, u8> {
        self.labels.iter().map(|(k, e)| (k.clone(), e.label)).collect()
    }

    /// Labels from humans or reviewers only.
    pub fn trusted_labels(&self) -> BTreeMap<SpeechKey, u8> {
        self.labels
            .iter()
            .filter(|(_, e)| e.source.is_trusted())
            .map(|(k, e)| (k.clone(), e.label))
            .collect()
    }

    /// Stores a label, enforcing source precedence, and appends to the audit log.
    pub fn apply_label(
        &mut self,
        corpus: &Corpus,
        key: &SpeechKey,
        label: u8,
        source: LabelSource,
    ) -> Result<(), AnnotateError> {
        match corpus.speech(key) {
            Some(s) if s.is_moderator => {}
            _ => return Err(AnnotateError::NotModeratorSpeech(key.clone())),
        }
        if label > 1 {
            return Err(AnnotateError::InvalidLabel { key: key.clone(), label });
        }
        let previous = self.labels.get(key).copied();
        if let Some(prev) = previous {
            if source < prev.source {
                return Err(AnnotateError::DowngradeForbidden {
                    key: key.clone(),
                    existing: prev.source,
                    attempted: source,
                });
            }
        }
        self.labels.insert(key.clone(), LabelEntry { label, source });
        self.audit.push(AuditEntry {
            seq: self.audit.len() as u64,
            key: key.clone(),
            label,
            source,
            previous,
        });
        if source.is_trusted() {
            self.queue.retain(|s| &s.key != key);
        }
        Ok(())
    }

    /// Writes model labels for every moderator speech without a trusted
    /// label. Returns the number written.
    pub fn label_with_model(&mut self, corpus: &Corpus, pipeline: &TrainedPipeline) -> Result<usize, AnnotateError> {
        let mut written = 0;
        for s in corpus.moderator_speeches(&self.agenda_label) {
            let key = s.key();
            if self.labels.get(&key).is_some_and(|e| e.source.is_trusted()) {
                continue;
            }
            let label = u8::from(pipeline.classify(&s.text)?);
            self.apply_label(corpus, &key, label, LabelSource::Model)?;
            written += 1;
        }
        self.model_fingerprint = Some(pipeline.fingerprint.clone());
        Ok(written)
    }

    /// `minute_id,order,label,source` rows in key order.
    pub fn write_labels_csv<W: Write>(&self, writer: W) -> Result<(), AnnotateError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["minute_id", "order", "label", "source"])?;
        for (key, e) in &self.labels {
            w.write_record([
                key.minute_id.as_str(),
                &key.order.to_string(),
                &e.label.to_string(),
                e.source.as_str(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads rows written by [`Self::write_labels_csv`]. A missing `source`
    /// column means human labels.
    pub fn read_labels_csv<R: Read>(reader: R) -> Result<BTreeMap<SpeechKey, LabelEntry>, AnnotateError> {
        #[derive(Deserialize)]
        struct Row {
            minute_id: String,
            order: u32,
            label: u8,
            source: Option<String>,
        }
        let mut rdr = csv::Reader::from_reader(reader);
        let mut out = BTreeMap::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row?;
            if row.label > 1 {
                return Err(AnnotateError::BadRow {
                    row: i + 1,
                    reason: format!("label {}", row.label),
                });
            }
            let source = match row.source.as_deref() {
                None | Some("") => LabelSource::Human,
                Some(s) => LabelSource::parse(s).ok_or_else(|| AnnotateError::BadRow {
                    row: i + 1,
                    reason: format!("source `{s}`"),
                })?,
            };
            out.insert(
                SpeechKey::new(row.minute_id, row.order),
                LabelEntry {
                    label: row.label,
                    source,
                },
            );
        }
        Ok(out)
    }
}

/// Uniform sample of `n` moderator speeches from the agenda items called
/// `agenda_label`, returned in corpus order.
pub fn sample_seed_set(corpus: &Corpus, agenda_label: &str, n: usize, seed: u64) -> Result<Vec<SpeechKey>, AnnotateError> {
    let pool = corpus.moderator_speeches(agenda_label);
    if n > pool.len() {
        return Err(AnnotateError::NotEnoughSpeeches {
            requested: n,
            available: pool.len(),
        });
    }
    let mut rng = seeded(seed);
    let mut picked = sample(&mut rng, pool.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| pool[i].key()).collect())
}

/// Bag-of-words random forest with balanced subsampling.
pub fn bootstrap_spec(seed: u64) -> PipelineSpec {
    PipelineSpec::new(
        FeatureSpec::bow(),
        ClassifierSpec::Forest(ForestParams {
            n_estimators: 100,
            class_weight: ClassWeight::BalancedSubsample,
            ..ForestParams::default()
        }),
    )
    .with_seed(seed)
}

/// Trains `spec` on trusted labels only.
pub fn bootstrap_train(state: &AnnotationState, corpus: &Corpus, spec: &PipelineSpec) -> Result<TrainedPipeline, AnnotateError> {
    let mut texts = Vec::new();
    let mut labels = Vec::new();
    for (key, e) in &state.labels {
        if !e.source.is_trusted() {
            continue;
        }
        if let Some(s) = corpus.speech(key) {
            texts.push(s.text.as_str());
            labels.push(e.label);
        }
    }
    for class in 0..=1u8 {
        let have = labels.iter().filter(|&&l| l == class).count();
        if have < 2 {
            return Err(AnnotateError::InsufficientLabels { class, have });
        }
    }
    Ok(TrainedPipeline::fit(spec, &texts, &labels)?)
}

/// Scores moderator speeches lacking a trusted label, most uncertain first
/// (ties in corpus order), and stores the first `limit` as the queue.
pub fn suggest(
    state: &mut AnnotationState,
    corpus: &Corpus,
    pipeline: &TrainedPipeline,
    limit: usize,
) -> Result<Vec<Suggestion>, AnnotateError> {
    let mut out = Vec::new();
    for item in corpus.select_agenda(&state.agenda_label) {
        for (i, s) in item.speeches.iter().enumerate() {
            if !s.is_moderator {
                continue;
            }
            let key = s.key();
            let current = state.labels.get(&key).copied();
            if current.is_some_and(|e| e.source.is_trusted()) {
                continue;
            }
            let p = pipeline.predict_proba(&s.text)?;
            let ctx = |j: usize| {
                item.speeches.get(j).map(|c| ContextSpeech {
                    order: c.order,
                    debater: c.debater.clone(),
                    text: c.text.clone(),
                })
            };
            out.push(Suggestion {
                key,
                debater: s.debater.clone(),
                text: s.text.clone(),
                probability: p,
                uncertainty: (p - 0.5).abs(),
                previous: i.checked_sub(1).and_then(ctx),
                next: ctx(i + 1),
                current,
            });
        }
    }
    // stable sort keeps corpus order among equal uncertainties
    out.sort_by(|a, b| a.uncertainty.total_cmp(&b.uncertainty));
    out.truncate(limit);
    state.queue = out.clone();
    state.model_fingerprint = Some(pipeline.fingerprint.clone());
    Ok(out)
}
