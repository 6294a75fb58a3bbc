use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Subcommand, ValueEnum};
use debacer_core::corpus::{
    self, generate_synthetic, load_corpus, read_blocks_jsonl, write_blocks_jsonl, write_transcripts, Corpus, Format,
    SynthConfig,
};
use debacer_core::eval::{compare_pipelines, examples_from_corpus, run_cv, stratified_multilabel_kfold, CvResult, Example};
use debacer_core::fingerprint::fingerprint_bytes;
use debacer_core::models::{ClassifierSpec, ForestParams, LogregParams, SvmParams};
use debacer_core::partition::{partition_corpus, render_report};
use debacer_core::search::{best_pipeline, random_search, ClassifierKind, FeatureKind, ParamSpace};
use debacer_core::{FeatureSpec, PartitionResult, PipelineSpec, SpeechKey, TrainedPipeline};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::RunConfig;
use crate::report::Report;
use crate::CliError;

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Validate a transcript file and write it back normalized.
    Ingest {
        /// Transcript file to read.
        #[arg(long)]
        input: PathBuf,
        /// `csv` or `jsonl`; guessed from the extension when omitted.
        #[arg(long)]
        format: Option<Format>,
        /// Normalized output (format from its extension).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with known labels and blocks.
    Synth {
        /// Directory for transcripts, labels.csv and blocks.jsonl.
        #[arg(long)]
        out_dir: PathBuf,
        /// Number of minutes to generate.
        #[arg(long)]
        minutes: Option<usize>,
        /// Chance that a content word is swapped for noise.
        #[arg(long)]
        noise_prob: Option<f64>,
        /// Transcript format.
        #[arg(long, default_value = "csv")]
        format: Format,
    },
    /// Annotation tooling.
    Annotate {
        #[command(subcommand)]
        action: AnnotateCommand,
    },
    /// Fit a pipeline on all labelled speeches and save it.
    Train {
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Model output; defaults to --model.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stratified k-fold cross-validation of one pipeline.
    Cv {
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Random hyperparameter search under cross-validation.
    Search {
        /// Search space as JSON; flags below narrow it.
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        features: Vec<FeatureChoice>,
        #[arg(long, value_delimiter = ',')]
        classifiers: Vec<ClassifierChoice>,
        /// Refit the winner on all data and save it here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise Wilcoxon/Holm comparison of cv reports.
    Compare {
        /// Reports written by `cv` on the same folds.
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
        #[arg(long, default_value_t = debacer_core::eval::DEFAULT_ALPHA)]
        alpha: f64,
    },
    /// Partition every target agenda item with a trained model.
    Partition {
        /// Blocks output (JSONL); defaults to `<reports-dir>/blocks.jsonl`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Human-readable rendering of stored blocks.
    Report {
        /// Blocks file written by `partition`.
        #[arg(long)]
        blocks: PathBuf,
        /// Only this minute.
        #[arg(long)]
        minute: Option<String>,
        /// Text output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Synth { .. } => "synth",
            Command::Annotate { .. } => "annotate",
            Command::Train { .. } => "train",
            Command::Cv { .. } => "cv",
            Command::Search { .. } => "search",
            Command::Compare { .. } => "compare",
            Command::Partition { .. } => "partition",
            Command::Report { .. } => "report",
        }
    }
}

#[derive(Debug, Clone, Subcommand)]
pub enum AnnotateCommand {
    /// Serve the annotation HTTP API until interrupted.
    Serve {
        /// Size of the uniform seed sample offered before any model exists.
        #[arg(long, default_value_t = 70)]
        seed_size: usize,
        /// Labels are written here (with sources) after every change.
        #[arg(long)]
        labels_out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureChoice {
    Bow,
    Bong,
    Word2vec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassifierChoice {
    Logreg,
    Svm,
    Forest,
}

impl From<FeatureChoice> for FeatureKind {
    fn from(c: FeatureChoice) -> Self {
        match c {
            FeatureChoice::Bow => FeatureKind::Bow,
            FeatureChoice::Bong => FeatureKind::Bong,
            FeatureChoice::Word2vec => FeatureKind::Word2vec,
        }
    }
}

impl From<ClassifierChoice> for ClassifierKind {
    fn from(c: ClassifierChoice) -> Self {
        match c {
            ClassifierChoice::Logreg => ClassifierKind::Logreg,
            ClassifierChoice::Svm => ClassifierKind::Svm,
            ClassifierChoice::Forest => ClassifierKind::Forest,
        }
    }
}

/// Pipeline selection by flags, or wholesale from a JSON spec file.
#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// JSON pipeline spec; other pipeline flags are then rejected.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "bong")]
    pub features: FeatureChoice,
    #[arg(long, value_enum, default_value = "logreg")]
    pub classifier: ClassifierChoice,
    /// Truncated SVD rank for BoNG.
    #[arg(long)]
    pub n_tsvd: Option<usize>,
    /// Inverse regularization strength (logreg, svm).
    #[arg(long)]
    pub c: Option<f64>,
    /// `l1` or `l2` (logreg).
    #[arg(long)]
    pub penalty: Option<String>,
    /// `none`, `balanced` or `balanced_subsample`.
    #[arg(long)]
    pub class_weight: Option<String>,
    /// Trees (forest).
    #[arg(long)]
    pub n_estimators: Option<usize>,
    /// `gini` or `entropy` (forest).
    #[arg(long)]
    pub criterion: Option<String>,
    /// Decision threshold on the interruption probability.
    #[arg(long)]
    pub threshold: Option<f64>,
}

fn parse_name<T: DeserializeOwned>(flag: &str, value: &str) -> Result<T, CliError> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| CliError::Config(format!("--{flag}: unsupported value `{value}`")))
}

fn not_for(flag: &str, what: &str) -> CliError {
    CliError::Config(format!("--{flag} does not apply to {what}"))
}

impl PipelineArgs {
    fn has_overrides(&self) -> bool {
        self.n_tsvd.is_some()
            || self.c.is_some()
            || self.penalty.is_some()
            || self.class_weight.is_some()
            || self.n_estimators.is_some()
            || self.criterion.is_some()
    }

    pub fn build(&self, seed: u64) -> Result<PipelineSpec, CliError> {
        if let Some(path) = &self.spec {
            if self.has_overrides() {
                return Err(CliError::Config("--spec cannot be combined with hyperparameter flags".into()));
            }
            let mut spec: PipelineSpec = read_json(path)?;
            if let Some(t) = self.threshold {
                spec.threshold = t;
            }
            spec.validate()?;
            return Ok(spec);
        }
        let features = match self.features {
            FeatureChoice::Bow => FeatureSpec::bow(),
            FeatureChoice::Bong => FeatureSpec::bong(self.n_tsvd),
            FeatureChoice::Word2vec => FeatureSpec::word2vec(),
        };
        if self.n_tsvd.is_some() && self.features != FeatureChoice::Bong {
            return Err(not_for("n-tsvd", "non-BoNG features"));
        }
        let class_weight = self.class_weight.as_deref().map(|v| parse_name("class-weight", v)).transpose()?;
        let classifier = match self.classifier {
            ClassifierChoice::Logreg => {
                if self.n_estimators.is_some() || self.criterion.is_some() {
                    return Err(not_for("n-estimators/--criterion", "logreg"));
                }
                let mut p = LogregParams::default();
                if let Some(c) = self.c {
                    p.c = c;
                }
                if let Some(v) = &self.penalty {
                    p.penalty = parse_name("penalty", v)?;
                }
                if let Some(cw) = class_weight {
                    p.class_weight = cw;
                }
                ClassifierSpec::Logreg(p)
            }
            ClassifierChoice::Svm => {
                if self.penalty.is_some() || self.class_weight.is_some() || self.n_estimators.is_some() || self.criterion.is_some() {
                    return Err(not_for("penalty/--class-weight/--n-estimators/--criterion", "svm"));
                }
                let mut p = SvmParams::default();
                if let Some(c) = self.c {
                    p.c = c;
                }
                ClassifierSpec::Svm(p)
            }
            ClassifierChoice::Forest => {
                if self.c.is_some() || self.penalty.is_some() {
                    return Err(not_for("c/--penalty", "forest"));
                }
                let mut p = ForestParams::default();
                if let Some(n) = self.n_estimators {
                    p.n_estimators = n;
                }
                if let Some(v) = &self.criterion {
                    p.criterion = parse_name("criterion", v)?;
                }
                if let Some(cw) = class_weight {
                    p.class_weight = cw;
                }
                ClassifierSpec::Forest(p)
            }
        };
        let mut spec = PipelineSpec::new(features, classifier).with_seed(seed);
        if let Some(t) = self.threshold {
            spec.threshold = t;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn file_fingerprint(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(fingerprint_bytes(&bytes))
}

fn create(path: &Path) -> Result<File, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    File::create(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn load_corpus_checked(cfg: &RunConfig, report: &mut Report) -> Result<Corpus, CliError> {
    let path = cfg.corpus_path()?;
    report.fingerprint("corpus", file_fingerprint(&path)?);
    Ok(load_corpus(&path, Format::from_path(&path))?)
}

fn load_labels(cfg: &RunConfig, report: &mut Report) -> Result<BTreeMap<SpeechKey, u8>, CliError> {
    let path = cfg.labels_path()?;
    report.fingerprint("labels", file_fingerprint(&path)?);
    Ok(corpus::read_labels_csv(open(&path)?)?)
}

/// Labelled moderator speeches of the configured agenda label.
fn load_examples(cfg: &RunConfig, report: &mut Report) -> Result<(Corpus, Vec<Example>), CliError> {
    let corpus = load_corpus_checked(cfg, report)?;
    let labels = load_labels(cfg, report)?;
    let examples = examples_from_corpus(&corpus, &cfg.agenda_label, &labels);
    if examples.is_empty() {
        return Err(CliError::Data(format!(
            "no labelled moderator speeches under agenda label `{}`",
            cfg.agenda_label
        )));
    }
    for class in 0..=1u8 {
        if !examples.iter().any(|e| e.label == class) {
            return Err(CliError::Data(format!("labels contain no examples of class {class}")));
        }
    }
    Ok((corpus, examples))
}

fn folds(cfg: &RunConfig, examples: &[Example]) -> Result<debacer_core::eval::FoldAssignment, CliError> {
    let d: Vec<&str> = examples.iter().map(|e| e.debater.as_str()).collect();
    let y: Vec<u8> = examples.iter().map(|e| e.label).collect();
    Ok(stratified_multilabel_kfold(&d, &y, cfg.k, cfg.seed)?)
}

#[derive(Serialize)]
struct IngestSummary {
    minutes: usize,
    agenda_items: usize,
    speeches: usize,
    moderator_speeches: usize,
    target_agenda_items: usize,
    target_moderator_speeches: usize,
}

fn ingest(cfg: &RunConfig, report: &mut Report, input: &Path, format: Option<Format>, out: Option<&Path>) -> Result<(), CliError> {
    let input = RunConfig::existing(Some(&input.to_path_buf()), "input")?;
    report.fingerprint("input", file_fingerprint(&input)?);
    let format = format.unwrap_or_else(|| Format::from_path(&input));
    let corpus = load_corpus(&input, format)?;
    let summary = IngestSummary {
        minutes: corpus.minutes.len(),
        agenda_items: corpus.agenda_items().count(),
        speeches: corpus.n_speeches(),
        moderator_speeches: corpus.speeches().filter(|s| s.is_moderator).count(),
        target_agenda_items: corpus.select_agenda(&cfg.agenda_label).len(),
        target_moderator_speeches: corpus.moderator_speeches(&cfg.agenda_label).len(),
    };
    if let Some(out) = out {
        write_transcripts(&corpus, create(out)?, Format::from_path(out))?;
        report.fingerprint("output", file_fingerprint(out)?);
    }
    println!(
        "{} minutes, {} speeches, {} moderator speeches under `{}`",
        summary.minutes, summary.speeches, summary.target_moderator_speeches, cfg.agenda_label
    );
    report.set_result(&summary)
}

#[derive(Serialize)]
struct SynthSummary {
    config: SynthConfig,
    transcripts: PathBuf,
    labels: PathBuf,
    blocks: PathBuf,
    speeches: usize,
    moderator_speeches: usize,
    positives: usize,
}

fn synth(
    cfg: &RunConfig,
    report: &mut Report,
    out_dir: &Path,
    minutes: Option<usize>,
    noise_prob: Option<f64>,
    format: Format,
) -> Result<(), CliError> {
    let mut config = SynthConfig {
        seed: cfg.seed,
        agenda_label: cfg.agenda_label.clone(),
        ..SynthConfig::default()
    };
    if let Some(m) = minutes {
        config.n_minutes = m;
    }
    if let Some(p) = noise_prob {
        config.noise_prob = p;
    }
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let (corpus, truth) = generate_synthetic(&config)?;
    let ext = match format {
        Format::Csv => "csv",
        Format::Jsonl => "jsonl",
    };
    let transcripts = out_dir.join(format!("transcripts.{ext}"));
    let labels = out_dir.join("labels.csv");
    let blocks = out_dir.join("blocks.jsonl");
    write_transcripts(&corpus, create(&transcripts)?, format)?;
    corpus::write_labels_csv(&truth.labels, create(&labels)?)?;
    let truth_blocks: BTreeMap<_, _> = truth
        .blocks
        .iter()
        .map(|(k, b)| {
            let p = PartitionResult {
                agenda: k.clone(),
                blocks: b.clone(),
                classifier_fingerprint: "truth".into(),
                decisions: Vec::new(),
            };
            (k.clone(), p)
        })
        .collect();
    write_blocks_jsonl(&truth_blocks, create(&blocks)?)?;
    for (name, path) in [("transcripts", &transcripts), ("labels", &labels), ("blocks", &blocks)] {
        report.fingerprint(name, file_fingerprint(path)?);
    }
    let summary = SynthSummary {
        speeches: corpus.n_speeches(),
        moderator_speeches: truth.labels.len(),
        positives: truth.n_positive(),
        config,
        transcripts,
        labels,
        blocks,
    };
    println!(
        "{} speeches, {} moderator speeches ({} interruptions) in {}",
        summary.speeches,
        summary.moderator_speeches,
        summary.positives,
        out_dir.display()
    );
    report.set_result(&summary)
}

#[derive(Serialize)]
struct TrainSummary {
    spec: PipelineSpec,
    model: PathBuf,
    model_fingerprint: String,
    examples: usize,
    positives: usize,
    converged: bool,
}

fn train(cfg: &RunConfig, report: &mut Report, pipeline: &PipelineArgs, out: Option<&Path>) -> Result<(), CliError> {
    let out = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.model.clone())
        .ok_or_else(|| CliError::Config("--out or --model is required".into()))?;
    let spec = pipeline.build(cfg.seed)?;
    report.fingerprint("spec", spec.fingerprint());
    let (_, examples) = load_examples(cfg, report)?;
    let texts: Vec<&str> = examples.iter().map(|e| e.text.as_str()).collect();
    let y: Vec<u8> = examples.iter().map(|e| e.label).collect();
    let start = Instant::now();
    let model = TrainedPipeline::fit(&spec, &texts, &y)?;
    report.timing("fit", start.elapsed().as_secs_f64());
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    model.save(&out)?;
    report.fingerprint("model", model.fingerprint.clone());
    println!("{} trained on {} examples -> {} ({})", spec.name(), examples.len(), out.display(), model.fingerprint);
    report.set_result(&TrainSummary {
        spec,
        model: out,
        model_fingerprint: model.fingerprint.clone(),
        examples: examples.len(),
        positives: y.iter().filter(|&&l| l == 1).count(),
        converged: model.metadata.converged,
    })
}

fn cv(cfg: &RunConfig, report: &mut Report, pipeline: &PipelineArgs) -> Result<(), CliError> {
    let spec = pipeline.build(cfg.seed)?;
    report.fingerprint("spec", spec.fingerprint());
    let (_, examples) = load_examples(cfg, report)?;
    let folds = folds(cfg, &examples)?;
    let result = run_cv(&spec, &examples, &folds)?;
    report.timing("cv", result.wall_seconds);
    println!(
        "{} k={}: F1 {:.4} ± {:.4}  CE {:.4} ± {:.4}  BS+ {:.4} ± {:.4}",
        result.name,
        result.k(),
        result.mean.f1,
        result.std.f1,
        result.mean.cross_entropy,
        result.std.cross_entropy,
        result.mean.brier_positive,
        result.std.brier_positive
    );
    report.set_result(&result)
}

#[derive(Serialize)]
struct TrialSummary {
    index: usize,
    name: String,
    spec: PipelineSpec,
    spec_fingerprint: String,
    mean: Option<debacer_core::eval::MetricSummary>,
    std: Option<debacer_core::eval::MetricSummary>,
    error: Option<String>,
}

#[derive(Serialize)]
struct SearchSummary {
    space: ParamSpace,
    budget: usize,
    trials: Vec<TrialSummary>,
    best: Option<PipelineSpec>,
    model: Option<PathBuf>,
    model_fingerprint: Option<String>,
}

fn search(
    cfg: &RunConfig,
    report: &mut Report,
    space_path: Option<&Path>,
    features: &[FeatureChoice],
    classifiers: &[ClassifierChoice],
    out: Option<&Path>,
) -> Result<(), CliError> {
    let mut space = match space_path {
        Some(p) => read_json(p)?,
        None => ParamSpace::default(),
    };
    if !features.is_empty() {
        space.features = features.iter().copied().map(Into::into).collect();
    }
    if !classifiers.is_empty() {
        space.classifiers = classifiers.iter().copied().map(Into::into).collect();
    }
    space.validate()?;
    let (_, examples) = load_examples(cfg, report)?;
    let folds = folds(cfg, &examples)?;
    let base = PipelineSpec::new(FeatureSpec::bow(), ClassifierSpec::Logreg(LogregParams::default())).with_seed(cfg.seed);
    let start = Instant::now();
    let trials = random_search(&space, cfg.budget, &base, &examples, &folds, cfg.seed)?;
    report.timing("search", start.elapsed().as_secs_f64());
    let best = trials.iter().find(|t| t.rank_key.is_some()).map(|t| t.spec.clone());
    let mut summary = SearchSummary {
        space,
        budget: cfg.budget,
        trials: trials
            .iter()
            .map(|t| TrialSummary {
                index: t.index,
                name: t.spec.name(),
                spec: t.spec.clone(),
                spec_fingerprint: t.spec.fingerprint(),
                mean: t.result.as_ref().map(|r| r.mean.clone()),
                std: t.result.as_ref().map(|r| r.std.clone()),
                error: t.error.clone(),
            })
            .collect(),
        best,
        model: None,
        model_fingerprint: None,
    };
    for t in &trials {
        match &t.result {
            Some(r) => println!("#{:<3} {:<16} F1 {:.4}  CE {:.4}", t.index, r.name, r.mean.f1, r.mean.cross_entropy),
            None => println!("#{:<3} {:<16} failed: {}", t.index, t.spec.name(), t.error.as_deref().unwrap_or("")),
        }
    }
    if let Some(out) = out {
        let start = Instant::now();
        let model = best_pipeline(&trials, &examples)?;
        report.timing("refit", start.elapsed().as_secs_f64());
        model.save(out)?;
        report.fingerprint("model", model.fingerprint.clone());
        summary.model = Some(out.to_path_buf());
        summary.model_fingerprint = Some(model.fingerprint.clone());
    }
    if let Some(best) = &summary.best {
        report.fingerprint("best_spec", best.fingerprint());
    }
    report.set_result(&summary)
}

fn compare(report: &mut Report, reports: &[PathBuf], alpha: f64) -> Result<(), CliError> {
    if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
        return Err(CliError::Config(format!("--alpha must lie in (0, 1), got {alpha}")));
    }
    let mut results = Vec::new();
    for path in reports {
        let r = Report::read(path)?;
        if r.command != "cv" {
            return Err(CliError::Data(format!("{} is a `{}` report, not `cv`", path.display(), r.command)));
        }
        let cv: CvResult = serde_json::from_value(r.result).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        report.fingerprint(&format!("cv:{}", path.display()), cv.spec_fingerprint.clone());
        results.push(cv);
    }
    let cmp = compare_pipelines(&results, alpha)?;
    for (i, name) in cmp.names.iter().enumerate() {
        println!("{i}: {name:<16} mean F1 {:.4}  avg rank {:.2}", cmp.mean_f1[i], cmp.average_ranks[i]);
    }
    for i in 0..cmp.names.len() {
        for j in i + 1..cmp.names.len() {
            println!("  {i} vs {j}: p = {:.4}, Holm p = {:.4}", cmp.raw_p[i][j], cmp.adjusted_p[i][j]);
        }
    }
    println!("cliques: {:?}", cmp.cliques);
    report.set_result(&cmp)
}

#[derive(Serialize)]
struct PartitionOutput {
    model_fingerprint: String,
    blocks_file: PathBuf,
    partitioned: usize,
    blocks: usize,
    errors: Vec<(String, String)>,
}

fn partition(cfg: &RunConfig, report: &mut Report, out: Option<&Path>) -> Result<(), CliError> {
    let model_path = cfg.model_path()?;
    let mut corpus = load_corpus_checked(cfg, report)?;
    let model = TrainedPipeline::load(&model_path)?;
    report.fingerprint("model", model.fingerprint.clone());
    let start = Instant::now();
    let summary = partition_corpus(&mut corpus, &model, &cfg.agenda_label);
    report.timing("partition", start.elapsed().as_secs_f64());
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.reports_dir.join("blocks.jsonl"));
    write_blocks_jsonl(&corpus.block_store, create(&out)?)?;
    report.fingerprint("blocks", file_fingerprint(&out)?);
    println!("{} agenda items, {} blocks -> {}", summary.partitioned, summary.blocks, out.display());
    if !summary.errors.is_empty() && summary.partitioned == 0 {
        return Err(CliError::Training(format!("every agenda item failed: {}", summary.errors[0].1)));
    }
    report.set_result(&PartitionOutput {
        model_fingerprint: model.fingerprint,
        blocks_file: out,
        partitioned: summary.partitioned,
        blocks: summary.blocks,
        errors: summary.errors.into_iter().map(|(k, e)| (k.to_string(), e)).collect(),
    })
}

#[derive(Serialize)]
struct RenderSummary {
    items: usize,
    blocks: usize,
    output: Option<PathBuf>,
}

fn render(cfg: &RunConfig, report: &mut Report, blocks: &Path, minute: Option<&str>, out: Option<&Path>) -> Result<(), CliError> {
    let blocks_path = RunConfig::existing(Some(&blocks.to_path_buf()), "blocks")?;
    let corpus = load_corpus_checked(cfg, report)?;
    report.fingerprint("blocks", file_fingerprint(&blocks_path)?);
    let stored = read_blocks_jsonl(open(&blocks_path)?)?;
    let mut text = String::new();
    let (mut items, mut n_blocks) = (0, 0);
    for (key, part) in &stored {
        if minute.is_some_and(|m| m != key.minute_id) {
            continue;
        }
        let item = corpus
            .agenda(key)
            .ok_or_else(|| CliError::Data(format!("{key} is not in the corpus")))?;
        corpus::check_blocks(&part.blocks, item.len()).map_err(|e| CliError::Data(format!("{key}: {e}")))?;
        text.push_str(&render_report(item, part));
        items += 1;
        n_blocks += part.blocks.len();
    }
    if let Some(m) = minute {
        if items == 0 {
            return Err(CliError::Data(format!("no stored blocks for minute `{m}`")));
        }
    }
    match out {
        Some(p) => {
            use std::io::Write;
            create(p)?
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        }
        None => print!("{text}"),
    }
    report.set_result(&RenderSummary {
        items,
        blocks: n_blocks,
        output: out.map(Path::to_path_buf),
    })
}

/// Runs `command` and writes its report; returns the report path.
pub fn execute(cfg: &RunConfig, command: &Command) -> Result<PathBuf, CliError> {
    let mut report = Report::new(command.name(), cfg);
    let start = Instant::now();
    match command {
        Command::Ingest { input, format, out } => ingest(cfg, &mut report, input, *format, out.as_deref())?,
        Command::Synth {
            out_dir,
            minutes,
            noise_prob,
            format,
        } => synth(cfg, &mut report, out_dir, *minutes, *noise_prob, *format)?,
        Command::Annotate { action } => match action {
            AnnotateCommand::Serve { seed_size, labels_out } => {
                crate::server::serve_blocking(cfg, &mut report, *seed_size, labels_out.clone())?
            }
        },
        Command::Train { pipeline, out } => train(cfg, &mut report, pipeline, out.as_deref())?,
        Command::Cv { pipeline } => cv(cfg, &mut report, pipeline)?,
        Command::Search {
            space,
            features,
            classifiers,
            out,
        } => search(cfg, &mut report, space.as_deref(), features, classifiers, out.as_deref())?,
        Command::Compare { reports, alpha } => compare(&mut report, reports, *alpha)?,
        Command::Partition { out } => partition(cfg, &mut report, out.as_deref())?,
        Command::Report { blocks, minute, out } => render(cfg, &mut report, blocks, minute.as_deref(), out.as_deref())?,
    }
    report.timing("total", start.elapsed().as_secs_f64());
    let path = cfg.report_path(command.name());
    report.write(&path)?;
    Ok(path)
}
