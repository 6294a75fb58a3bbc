//! Partitioning of moderated debates into subject-coherent speech blocks.
//!
//! A debate transcript ([`corpus::Corpus`]) is a set of minutes, each holding
//! agenda items made of ordered speeches. The moderator's utterances are
//! scored by a trained text classification pipeline ([`models::TrainedPipeline`])
//! and every utterance classified as a subject interruption opens a new
//! [`corpus::SpeechBlock`] (see [`partition`]).
//!
//! The crate also carries the machinery needed to build and select that
//! classifier: preprocessing ([`textprep`]), feature extractors
//! ([`features`]), from-scratch classifiers ([`models`]), imbalance-aware
//! evaluation and statistical comparison ([`eval`]), hyperparameter search
//! ([`search`]) and the semi-automatic annotation loop ([`annotate`]).

pub mod annotate;
pub mod corpus;
pub mod eval;
pub mod features;
pub mod fingerprint;
pub mod linalg;
pub mod models;
pub mod partition;
pub mod rng;
pub mod search;
pub mod textprep;

pub use corpus::{AgendaItem, AgendaKey, Corpus, Minute, Speech, SpeechBlock, SpeechKey};
pub use eval::{CvResult, MetricReport, PairwiseComparison};
pub use features::{FeatureExtractor, FeatureSpec};
pub use models::{ClassifierSpec, PipelineSpec, TrainedPipeline};
pub use partition::PartitionResult;

/// Default agenda label targeted by the partitioner.
pub const DEFAULT_AGENDA_LABEL: &str = "political statements";
