//! Text → probability pipelines.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    train_linear_svm, train_logreg, train_random_forest, Classifier, ForestParams, LogregParams, ModelError,
    SvmParams,
};
use crate::features::{FeatureExtractor, FeatureSpec};
use crate::fingerprint::fingerprint;
use crate::rng::derive_seed;
use crate::textprep::Preprocessor;

pub const MODEL_FORMAT: &str = "debacer-model";
pub const MODEL_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierSpec {
    Logreg(LogregParams),
    Svm(SvmParams),
    Forest(ForestParams),
}

impl ClassifierSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ClassifierSpec::Logreg(_) => "logreg",
            ClassifierSpec::Svm(_) => "svm",
            ClassifierSpec::Forest(_) => "forest",
        }
    }
}

/// Everything needed to fit a pipeline reproducibly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    #[serde(default)]
    pub preprocess: Preprocessor,
    pub features: FeatureSpec,
    pub classifier: ClassifierSpec,
    #[serde(default = "half")]
    pub threshold: f64,
    #[serde(default)]
    pub seed: u64,
}

fn half() -> f64 {
    0.5
}

impl PipelineSpec {
    pub fn new(features: FeatureSpec, classifier: ClassifierSpec) -> Self {
        Self {
            preprocess: Preprocessor::portuguese(),
            features,
            classifier,
            threshold: 0.5,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Short label such as `bong+logreg`.
    pub fn name(&self) -> String {
        format!("{}+{}", self.features.name(), self.classifier.name())
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(self)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(ModelError::InvalidParam(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        self.preprocess
            .tokenizer
            .validate()
            .map_err(|e| ModelError::InvalidParam(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub spec_fingerprint: String,
    pub data_fingerprint: String,
    pub n_examples: usize,
    pub n_positive: usize,
    /// False when the optimizer hit its iteration cap; the best iterate is kept.
    pub converged: bool,
    pub fit_seconds: f64,
}

/// A fitted, immutable pipeline. `classify(t)` is `predict_proba(t) >= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPipeline {
    pub spec: PipelineSpec,
    pub extractor: FeatureExtractor,
    pub classifier: Classifier,
    pub threshold: f64,
    pub fingerprint: String,
    pub metadata: TrainingMetadata,
}

#[derive(Serialize)]
struct FingerprintView<'a> {
    spec: &'a PipelineSpec,
    extractor: &'a FeatureExtractor,
    classifier: &'a Classifier,
    threshold: f64,
}

impl TrainedPipeline {
    pub fn fit(spec: &PipelineSpec, texts: &[&str], labels: &[u8]) -> Result<Self, ModelError> {
        let tokens: Vec<Vec<String>> = texts.par_iter().map(|t| spec.preprocess.run(t)).collect();
        Self::fit_tokens(spec, &tokens, labels)
    }

    /// Fits on documents already run through `spec.preprocess`.
    pub fn fit_tokens(spec: &PipelineSpec, tokens: &[Vec<String>], labels: &[u8]) -> Result<Self, ModelError> {
        spec.validate()?;
        if tokens.len() != labels.len() {
            return Err(ModelError::LengthMismatch {
                rows: tokens.len(),
                labels: labels.len(),
            });
        }
        if tokens.is_empty() {
            return Err(ModelError::EmptyTrainingSet);
        }
        let start = Instant::now();
        let extractor = FeatureExtractor::fit(&spec.features, tokens, derive_seed(spec.seed, 1))?;
        let x = extractor.transform_many(tokens);
        let seed = derive_seed(spec.seed, 2);
        let mut converged = true;
        let classifier = match &spec.classifier {
            ClassifierSpec::Logreg(p) => {
                let model = match train_logreg(&x, labels, p) {
                    Ok(m) => m,
                    Err(ModelError::NotConverged { best, .. }) => {
                        converged = false;
                        *best
                    }
                    Err(e) => return Err(e),
                };
                Classifier::Logreg { model }
            }
            ClassifierSpec::Svm(p) => {
                let (model, calibrator) = match train_linear_svm(&x, labels, p, seed) {
                    Ok(v) => v,
                    Err(ModelError::NotConverged {
                        best,
                        calibrator: Some(c),
                        ..
                    }) => {
                        converged = false;
                        (*best, c)
                    }
                    Err(e) => return Err(e),
                };
                Classifier::Svm { model, calibrator }
            }
            ClassifierSpec::Forest(p) => Classifier::Forest {
                forest: train_random_forest(&x, labels, p, seed)?,
            },
        };
        let metadata = TrainingMetadata {
            seed: spec.seed,
            spec_fingerprint: spec.fingerprint(),
            data_fingerprint: fingerprint(&(tokens, labels)),
            n_examples: labels.len(),
            n_positive: labels.iter().filter(|&&l| l == 1).count(),
            converged,
            fit_seconds: start.elapsed().as_secs_f64(),
        };
        let fp = fingerprint(&FingerprintView {
            spec,
            extractor: &extractor,
            classifier: &classifier,
            threshold: spec.threshold,
        });
        Ok(Self {
            spec: spec.clone(),
            extractor,
            classifier,
            threshold: spec.threshold,
            fingerprint: fp,
            metadata,
        })
    }

    /// preprocess → featurize → classify.
    pub fn predict_proba(&self, text: &str) -> Result<f64, ModelError> {
        self.predict_proba_tokens(&self.spec.preprocess.run(text))
    }

    pub fn predict_proba_tokens(&self, tokens: &[String]) -> Result<f64, ModelError> {
        let x = self.extractor.transform(tokens);
        let p = self.classifier.predict_proba(&x)?;
        if !p.is_finite() {
            return Err(ModelError::NonFinite);
        }
        Ok(p.clamp(0.0, 1.0))
    }

    pub fn classify(&self, text: &str) -> Result<bool, ModelError> {
        Ok(self.predict_proba(text)? >= self.threshold)
    }

    pub fn to_envelope(&self) -> serde_json::Value {
        serde_json::json!({
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "fingerprint": self.fingerprint,
            "pipeline": self.spec,
            "extractor": self.extractor.to_envelope(),
            "classifier_kind": self.classifier.kind(),
            "classifier": self.classifier,
            "threshold": self.threshold,
            "training": self.metadata,
        })
    }

    pub fn from_envelope(value: serde_json::Value) -> Result<Self, ModelError> {
        let format = value.get("format").and_then(|f| f.as_str());
        let version = value.get("version").and_then(|v| v.as_u64());
        if format != Some(MODEL_FORMAT) || version != Some(MODEL_VERSION) {
            return Err(ModelError::Envelope(format!("unsupported format {format:?} version {version:?}")));
        }
        let field = |name: &str| {
            value
                .get(name)
                .cloned()
                .ok_or_else(|| ModelError::Envelope(format!("missing `{name}`")))
        };
        let parse = |e: serde_json::Error| ModelError::Envelope(e.to_string());
        let spec: PipelineSpec = serde_json::from_value(field("pipeline")?).map_err(parse)?;
        let extractor = FeatureExtractor::from_envelope(field("extractor")?)?;
        let classifier: Classifier = serde_json::from_value(field("classifier")?).map_err(parse)?;
        let threshold: f64 = serde_json::from_value(field("threshold")?).map_err(parse)?;
        let metadata: TrainingMetadata = serde_json::from_value(field("training")?).map_err(parse)?;
        let stored: String = serde_json::from_value(field("fingerprint")?).map_err(parse)?;
        let fp = fingerprint(&FingerprintView {
            spec: &spec,
            extractor: &extractor,
            classifier: &classifier,
            threshold,
        });
        if fp != stored {
            return Err(ModelError::Envelope(format!("fingerprint mismatch: stored {stored}, computed {fp}")));
        }
        Ok(Self {
            spec,
            extractor,
            classifier,
            threshold,
            fingerprint: fp,
            metadata,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let io = |source| ModelError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = std::fs::File::create(path).map_err(io)?;
        serde_json::to_writer(std::io::BufWriter::new(file), &self.to_envelope())
            .map_err(|e| ModelError::Envelope(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let io = |source| ModelError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = std::fs::File::open(path).map_err(io)?;
        let value: serde_json::Value = serde_json::from_reader(std::io::BufReader::new(file))
            .map_err(|e| ModelError::Envelope(e.to_string()))?;
        Self::from_envelope(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (Vec<&'static str>, Vec<u8>) {
        let texts = vec![
            "Passamos agora às declarações políticas, tem a palavra o Sr. Deputado",
            "Segue-se a declaração política do grupo parlamentar",
            "Tem a palavra para uma declaração política a Sr.ª Deputada",
            "Para pedir esclarecimentos, tem a palavra o Sr. Deputado",
            "Tem a palavra para responder",
            "Peço que conclua, Sr. Deputado",
            "Para um pedido de esclarecimento, tem a palavra",
            "Queira terminar, Sr.ª Deputada",
        ];
        (texts, vec![1, 1, 1, 0, 0, 0, 0, 0])
    }

    #[test]
    fn classify_matches_threshold() {
        let (texts, y) = data();
        let spec = PipelineSpec::new(FeatureSpec::bow(), ClassifierSpec::Logreg(LogregParams { c: 10.0, ..Default::default() }));
        let p = TrainedPipeline::fit(&spec, &texts, &y).unwrap();
        for t in &texts {
            let prob = p.predict_proba(t).unwrap();
            assert!((0.0..=1.0).contains(&prob));
            assert_eq!(p.classify(t).unwrap(), prob >= p.threshold);
        }
        assert!(p.predict_proba("").unwrap().is_finite());
        assert!(p.predict_proba(texts[0]).unwrap() > 0.5);
        assert!(p.predict_proba(texts[4]).unwrap() < 0.5);
    }

    #[test]
    fn envelope_round_trip_all_kinds() {
        let (texts, y) = data();
        let dir = tempfile::tempdir().unwrap();
        for classifier in [
            ClassifierSpec::Logreg(LogregParams::default()),
            ClassifierSpec::Svm(SvmParams::default()),
            ClassifierSpec::Forest(ForestParams { n_estimators: 5, ..Default::default() }),
        ] {
            let spec = PipelineSpec::new(FeatureSpec::bong(None), classifier).with_seed(3);
            let p = TrainedPipeline::fit(&spec, &texts, &y).unwrap();
            let path = dir.path().join(format!("{}.json", spec.name()));
            p.save(&path).unwrap();
            let back = TrainedPipeline::load(&path).unwrap();
            assert_eq!(back.fingerprint, p.fingerprint);
            for t in &texts {
                assert_eq!(back.predict_proba(t).unwrap(), p.predict_proba(t).unwrap());
            }
        }
    }

    #[test]
    fn tampered_envelope_rejected() {
        let (texts, y) = data();
        let spec = PipelineSpec::new(FeatureSpec::bow(), ClassifierSpec::Logreg(LogregParams::default()));
        let p = TrainedPipeline::fit(&spec, &texts, &y).unwrap();
        let mut env = p.to_envelope();
        env["threshold"] = serde_json::json!(0.9);
        assert!(matches!(TrainedPipeline::from_envelope(env), Err(ModelError::Envelope(_))));
        let mut env = p.to_envelope();
        env["version"] = serde_json::json!(99);
        assert!(TrainedPipeline::from_envelope(env).is_err());
    }

    #[test]
    fn spec_serde_defaults() {
        let spec: PipelineSpec = serde_json::from_str(
            r#"{"features":{"kind":"bong","svd_components":148},"classifier":{"kind":"logreg","penalty":"l1","c":20.1}}"#,
        )
        .unwrap();
        assert_eq!(spec.threshold, 0.5);
        assert_eq!(spec.name(), "bong+logreg");
        match spec.classifier {
            ClassifierSpec::Logreg(p) => {
                assert_eq!(p.c, 20.1);
                assert_eq!(p.tol, 1e-6);
            }
            _ => panic!(),
        }
    }
}
