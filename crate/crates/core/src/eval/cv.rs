use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalError, Example, FoldAssignment, MetricReport};
use crate::models::{PipelineSpec, TrainedPipeline};
use crate::rng::derive_seed;

/// One value per metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub cross_entropy: f64,
    pub brier_positive: f64,
    pub fit_time: f64,
}

impl MetricSummary {
    fn from_fn(reports: &[MetricReport], agg: impl Fn(&[f64]) -> f64) -> Self {
        let col = |f: fn(&MetricReport) -> f64| agg(&reports.iter().map(f).collect::<Vec<_>>());
        Self {
            f1: col(|r| r.f1),
            precision: col(|r| r.precision),
            recall: col(|r| r.recall),
            cross_entropy: col(|r| r.cross_entropy),
            brier_positive: col(|r| r.brier_positive),
            fit_time: col(|r| r.fit_time),
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (N − 1 denominator); 0 for a single value.
fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub name: String,
    pub spec: PipelineSpec,
    pub spec_fingerprint: String,
    pub folds: Vec<MetricReport>,
    pub mean: MetricSummary,
    pub std: MetricSummary,
    pub assignment: FoldAssignment,
    /// Held-out probability of every example.
    pub predictions: Vec<f64>,
    pub wall_seconds: f64,
}

impl CvResult {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn fold_f1(&self) -> Vec<f64> {
        self.folds.iter().map(|r| r.f1).collect()
    }
}

fn fold_spec(spec: &PipelineSpec, fold: usize) -> PipelineSpec {
    spec.clone().with_seed(derive_seed(spec.seed, fold as u64))
}

/// Pipeline fitted on every fold except `fold`.
pub fn fold_pipeline(
    spec: &PipelineSpec,
    examples: &[Example],
    folds: &FoldAssignment,
    fold: usize,
) -> Result<TrainedPipeline, EvalError> {
    let train = folds.train_indices(fold);
    let tokens: Vec<Vec<String>> = train.iter().map(|&i| spec.preprocess.run(&examples[i].text)).collect();
    let labels: Vec<u8> = train.iter().map(|&i| examples[i].label).collect();
    TrainedPipeline::fit_tokens(&fold_spec(spec, fold), &tokens, &labels).map_err(|source| EvalError::Fold { fold, source })
}

/// K-fold cross-validation. Every fold refits preprocessing-dependent state
/// (vocabulary, projection, embeddings) on its training part only. Folds run
/// in parallel.
pub fn run_cv(spec: &PipelineSpec, examples: &[Example], folds: &FoldAssignment) -> Result<CvResult, EvalError> {
    if examples.len() != folds.folds.len() {
        return Err(EvalError::LengthMismatch(examples.len(), folds.folds.len()));
    }
    let start = Instant::now();
    let tokens: Vec<Vec<String>> = examples.par_iter().map(|e| spec.preprocess.run(&e.text)).collect();
    let labels: Vec<u8> = examples.iter().map(|e| e.label).collect();
    let per_fold: Vec<(MetricReport, Vec<(usize, f64)>)> = (0..folds.k)
        .into_par_iter()
        .map(|fold| {
            let train = folds.train_indices(fold);
            let test = folds.test_indices(fold);
            let tr_tokens: Vec<Vec<String>> = train.iter().map(|&i| tokens[i].clone()).collect();
            let tr_labels: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
            let fit_start = Instant::now();
            let pipeline = TrainedPipeline::fit_tokens(&fold_spec(spec, fold), &tr_tokens, &tr_labels)
                .map_err(|source| EvalError::Fold { fold, source })?;
            let fit_time = fit_start.elapsed().as_secs_f64();
            let probs = test
                .iter()
                .map(|&i| pipeline.predict_proba_tokens(&tokens[i]))
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|source| EvalError::Fold { fold, source })?;
            let y: Vec<u8> = test.iter().map(|&i| labels[i]).collect();
            let report = MetricReport::compute(&y, &probs, pipeline.threshold, fit_time)?;
            Ok((report, test.into_iter().zip(probs).collect()))
        })
        .collect::<Result<_, EvalError>>()?;

    let mut predictions = vec![f64::NAN; examples.len()];
    let mut reports = Vec::with_capacity(folds.k);
    for (report, preds) in per_fold {
        for (i, p) in preds {
            predictions[i] = p;
        }
        reports.push(report);
    }
    Ok(CvResult {
        name: spec.name(),
        spec: spec.clone(),
        spec_fingerprint: spec.fingerprint(),
        mean: MetricSummary::from_fn(&reports, mean),
        std: MetricSummary::from_fn(&reports, std_dev),
        folds: reports,
        assignment: folds.clone(),
        predictions,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SpeechKey;
    use crate::eval::stratified_multilabel_kfold;
    use crate::features::FeatureSpec;
    use crate::models::{ClassifierSpec, LogregParams};

    fn toy() -> Vec<Example> {
        let pos = ["tem palavra declaração política deputado", "segue declaração política bancada"];
        let neg = ["peço conclua deputado", "tem palavra esclarecimentos", "queira terminar"];
        (0..30)
            .map(|i| {
                let label = u8::from(i % 5 == 0);
                let text = if label == 1 { pos[i % 2] } else { neg[i % 3] };
                Example {
                    key: SpeechKey::new("m", i as u32),
                    text: text.into(),
                    debater: if i % 2 == 0 { "A".into() } else { "B".into() },
                    label,
                }
            })
            .collect()
    }

    #[test]
    fn std_uses_n_minus_one() {
        assert!((std_dev(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
        assert_eq!(std_dev(&[4.0]), 0.0);
    }

    #[test]
    fn cv_reports_every_fold() {
        let ex = toy();
        let d: Vec<&str> = ex.iter().map(|e| e.debater.as_str()).collect();
        let y: Vec<u8> = ex.iter().map(|e| e.label).collect();
        let folds = stratified_multilabel_kfold(&d, &y, 3, 1).unwrap();
        let spec = PipelineSpec::new(FeatureSpec::bow(), ClassifierSpec::Logreg(LogregParams { c: 10.0, ..Default::default() }));
        let r = run_cv(&spec, &ex, &folds).unwrap();
        assert_eq!(r.k(), 3);
        assert!(r.predictions.iter().all(|p| (0.0..=1.0).contains(p)));
        assert_eq!(r.mean.f1, 1.0);
        let again = run_cv(&spec, &ex, &folds).unwrap();
        assert_eq!(again.predictions, r.predictions);
    }

    #[test]
    fn vocabulary_is_fold_local() {
        let mut ex = toy();
        ex[7].text.push_str(" xilofone");
        let d: Vec<&str> = ex.iter().map(|e| e.debater.as_str()).collect();
        let y: Vec<u8> = ex.iter().map(|e| e.label).collect();
        let folds = stratified_multilabel_kfold(&d, &y, 3, 2).unwrap();
        let spec = PipelineSpec::new(FeatureSpec::bong(None), ClassifierSpec::Logreg(LogregParams::default()));
        let planted_fold = folds.folds[7];
        for f in 0..3 {
            let p = fold_pipeline(&spec, &ex, &folds, f).unwrap();
            let vocab = p.extractor.vocabulary().unwrap();
            assert_eq!(vocab.get("xilofone").is_some(), f != planted_fold, "fold {f}");
        }
    }
}
