use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::dataset::{Dataset, Sample, Split};
use super::roc::{eer, roc, vr_at_far, VerificationRate};
use crate::config::{ExtractorSpec, FusionRule, KernelSpec, PipelineConfig, Preprocessing};
use crate::error::{Error, Result, ResultExt};
use crate::fusion::{fit_llr, FusionModel, WeightedSumModel, ZNorm};
use crate::imaging::{align, histogram_equalize, Image, Landmarks};
use crate::ingi::ingi;
use crate::scoring::{score, ScoreRecord};
use crate::subspace::{fit_kpca, fit_lda, fit_pca, fit_pclda, DataMatrix, Extractor, FeatureVector, Kernel};

/// Training-set EERs are clamped to `[EER_FLOOR, 0.5]` before they become
/// weighted-sum weights; a perfectly separated training set would otherwise
/// produce an infinite weight.
pub const EER_FLOOR: f64 = 1e-3;

/// Alignment (when configured and landmarks are known) followed by the
/// configured photometric normalization.
pub fn preprocess(img: &Image, landmarks: Option<&Landmarks>, config: &PipelineConfig) -> Result<Image> {
    let aligned = match (&config.alignment, landmarks) {
        (Some(a), Some(m)) => Some(align(img, m, (a.left_eye, a.right_eye), a.size)?),
        _ => None,
    };
    let img = aligned.as_ref().unwrap_or(img);
    match &config.preprocessing {
        Preprocessing::None => Ok(img.clone()),
        Preprocessing::HistEq { levels } => histogram_equalize(img, *levels),
        Preprocessing::Ingi(p) => ingi(img, p),
    }
}

/// Preprocessed pixel vectors for every sample, in dataset order.
pub fn prepare(dataset: &Dataset, config: &PipelineConfig) -> Result<Vec<Vec<f64>>> {
    dataset
        .samples()
        .par_iter()
        .map(|s| {
            preprocess(&s.image, s.landmarks.as_ref(), config)
                .map(Image::into_pixels)
                .context(|| format!("preprocessing {}", s.id))
        })
        .collect()
}

/// Fitted extractors and fusion model together with the config that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPipeline {
    pub config: PipelineConfig,
    pub extractors: Vec<Extractor>,
    pub fusion: FusionModel,
}

impl TrainedPipeline {
    pub fn classifier_ids(&self) -> Vec<String> {
        self.extractors
            .iter()
            .enumerate()
            .map(|(i, e)| format!("{}_{i}", e.name()))
            .collect()
    }

    pub fn features(&self, x: &[f64]) -> Result<Vec<FeatureVector>> {
        self.extractors
            .iter()
            .enumerate()
            .map(|(i, e)| e.project(x).context(|| format!("extractor.{i} ({})", e.name())))
            .collect()
    }

    pub fn classifier_scores(&self, a: &[FeatureVector], b: &[FeatureVector]) -> Result<Vec<f64>> {
        a.iter().zip(b).map(|(fa, fb)| score(fa, fb, self.config.metric)).collect()
    }

    /// Preprocesses two raw images and returns `(per-classifier scores, fused score)`.
    pub fn verify(&self, a: &Image, b: &Image) -> Result<(Vec<f64>, f64)> {
        let fa = self.features(preprocess(a, None, &self.config)?.pixels())?;
        let fb = self.features(preprocess(b, None, &self.config)?.pixels())?;
        let scores = self.classifier_scores(&fa, &fb)?;
        let fused = self.fusion.fuse(&scores)?;
        Ok((scores, fused))
    }
}

fn fit_extractor(spec: &ExtractorSpec, data: &DataMatrix) -> Result<Extractor> {
    Ok(match *spec {
        ExtractorSpec::Pca { k } => Extractor::Linear(fit_pca(data, k)?),
        ExtractorSpec::Lda { k } => Extractor::Linear(fit_lda(data, k)?),
        ExtractorSpec::Pclda { pca_k, lda_k } => Extractor::Linear(fit_pclda(data, pca_k, lda_k)?),
        ExtractorSpec::Kpca { kernel, k } => {
            let kernel = match kernel {
                KernelSpec::Linear => Kernel::Linear,
                KernelSpec::Polynomial { degree, coef0 } => Kernel::Polynomial { degree, coef0 },
                KernelSpec::Rbf { gamma: Some(gamma) } => Kernel::Rbf { gamma },
                KernelSpec::Rbf { gamma: None } => Kernel::rbf_auto(data),
            };
            Extractor::Kernel(fit_kpca(data, kernel, k)?)
        }
    })
}

fn train_prepared(dataset: &Dataset, vectors: &[Vec<f64>], config: &PipelineConfig) -> Result<TrainedPipeline> {
    config.validate()?;
    let train: Vec<usize> = (0..dataset.samples().len())
        .filter(|&i| dataset.samples()[i].split == Split::Train)
        .collect();
    if train.is_empty() {
        return Err(Error::param("dataset", "train split is empty"));
    }
    // Contiguous class labels in order of first appearance.
    let mut classes: Vec<usize> = Vec::new();
    let labels: Vec<usize> = train
        .iter()
        .map(|&i| {
            let id = dataset.samples()[i].identity;
            classes.iter().position(|&c| c == id).unwrap_or_else(|| {
                classes.push(id);
                classes.len() - 1
            })
        })
        .collect();
    let rows: Vec<Vec<f64>> = train.iter().map(|&i| vectors[i].clone()).collect();
    let data = DataMatrix::from_rows(&rows)
        .context(|| "train split".into())?
        .with_labels(labels)?;

    let extractors = config
        .extractors
        .iter()
        .enumerate()
        .map(|(i, spec)| fit_extractor(spec, &data).context(|| format!("extractor.{i} ({})", spec.name())))
        .collect::<Result<Vec<_>>>()?;
    let mut pipeline = TrainedPipeline {
        config: config.clone(),
        extractors,
        fusion: FusionModel::None,
    };
    if config.fusion == FusionRule::None {
        return Ok(pipeline);
    }

    // Fusion statistics come from train x train pairs only.
    let features = rows
        .par_iter()
        .map(|x| pipeline.features(x))
        .collect::<Result<Vec<_>>>()?;
    let n = train.len();
    let n_cls = pipeline.extractors.len();
    let mut same = vec![Vec::new(); n_cls];
    let mut diff = vec![Vec::new(); n_cls];
    for a in 0..n {
        for b in a + 1..n {
            let scores = pipeline.classifier_scores(&features[a], &features[b])?;
            let genuine = dataset.samples()[train[a]].identity == dataset.samples()[train[b]].identity;
            let bucket = if genuine { &mut same } else { &mut diff };
            bucket.iter_mut().zip(scores).for_each(|(v, s)| v.push(s));
        }
    }
    if same[0].is_empty() || diff[0].is_empty() {
        return Err(Error::config(
            "fusion",
            format!(
                "training pairs give {} genuine / {} impostor scores; both are required",
                same[0].len(),
                diff[0].len()
            ),
        ));
    }
    pipeline.fusion = match config.fusion {
        FusionRule::None => unreachable!(),
        FusionRule::WeightedSum { znorm } => {
            let eers = (0..n_cls)
                .map(|c| Ok(eer(&roc(&same[c], &diff[c])?).clamp(EER_FLOOR, 0.5)))
                .collect::<Result<Vec<_>>>()?;
            let mut model = WeightedSumModel::new(eers)?;
            if znorm {
                let stats = (0..n_cls)
                    .map(|c| ZNorm::fit(&[same[c].as_slice(), diff[c].as_slice()].concat()))
                    .collect::<Result<Vec<_>>>()?;
                model = model.with_znorm(stats)?;
            }
            FusionModel::WeightedSum(model)
        }
        FusionRule::Llr => FusionModel::Llr(fit_llr(&same, &diff).context(|| "fusion (llr)".into())?),
    };
    Ok(pipeline)
}

/// Fits the configured extractors and fusion model on the train split.
pub fn train(dataset: &Dataset, config: &PipelineConfig) -> Result<TrainedPipeline> {
    let vectors = prepare(dataset, config)?;
    train_prepared(dataset, &vectors, config)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifierReport {
    pub id: String,
    pub eer: f64,
    pub verification_rates: Vec<VerificationRate>,
    pub n_genuine: usize,
    pub n_impostor: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub n_gallery: usize,
    pub n_probe: usize,
    pub classifiers: Vec<ClassifierReport>,
    pub fused: ClassifierReport,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolOutput {
    pub report: EvalReport,
    /// Pair-major: for each (gallery, probe) pair, one record per classifier
    /// followed by the fused record.
    pub scores: Vec<ScoreRecord>,
}

fn summarize(id: String, genuine: &[f64], impostor: &[f64], far_targets: &[f64]) -> Result<ClassifierReport> {
    let curve = roc(genuine, impostor).context(|| format!("classifier {id}"))?;
    Ok(ClassifierReport {
        eer: eer(&curve),
        verification_rates: far_targets.iter().map(|&t| vr_at_far(&curve, t)).collect(),
        n_genuine: genuine.len(),
        n_impostor: impostor.len(),
        id,
    })
}

fn evaluate_prepared(pipeline: &TrainedPipeline, dataset: &Dataset, vectors: &[Vec<f64>]) -> Result<ProtocolOutput> {
    let pick = |split: Split| -> Vec<usize> {
        (0..dataset.samples().len())
            .filter(|&i| dataset.samples()[i].split == split)
            .collect()
    };
    let (gallery, probe) = (pick(Split::Gallery), pick(Split::Probe));
    let needed: Vec<usize> = gallery.iter().chain(&probe).copied().collect();
    let feats: BTreeMap<usize, Vec<FeatureVector>> = needed
        .par_iter()
        .map(|&i| {
            pipeline
                .features(&vectors[i])
                .context(|| dataset.samples()[i].id.clone())
                .map(|f| (i, f))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();

    let pairs: Vec<(usize, usize)> = gallery
        .iter()
        .flat_map(|&g| probe.iter().map(move |&p| (g, p)))
        .collect();
    let scored = pairs
        .par_iter()
        .map(|&(g, p)| {
            let scores = pipeline.classifier_scores(&feats[&p], &feats[&g])?;
            let fused = pipeline.fusion.fuse(&scores)?;
            Ok((scores, fused))
        })
        .collect::<Result<Vec<_>>>()
        .context(|| "scoring gallery x probe pairs".into())?;

    let ids = pipeline.classifier_ids();
    let n_cls = ids.len();
    let mut genuine = vec![Vec::new(); n_cls + 1];
    let mut impostor = vec![Vec::new(); n_cls + 1];
    let mut records = Vec::with_capacity(pairs.len() * (n_cls + 1));
    for (&(g, p), (scores, fused)) in pairs.iter().zip(&scored) {
        let (sg, sp): (&Sample, &Sample) = (&dataset.samples()[g], &dataset.samples()[p]);
        let same = sg.identity == sp.identity;
        let bucket = if same { &mut genuine } else { &mut impostor };
        for (c, &s) in scores.iter().chain(std::iter::once(fused)).enumerate() {
            bucket[c].push(s);
            records.push(ScoreRecord {
                query_id: sp.id.clone(),
                target_id: sg.id.clone(),
                classifier_id: ids.get(c).cloned().unwrap_or_else(|| "fused".into()),
                score: s,
                same_identity_flag: same as u8,
            });
        }
    }

    let targets = &pipeline.config.far_targets;
    let classifiers = (0..n_cls)
        .map(|c| summarize(ids[c].clone(), &genuine[c], &impostor[c], targets))
        .collect::<Result<Vec<_>>>()?;
    let fused = summarize("fused".into(), &genuine[n_cls], &impostor[n_cls], targets)?;
    Ok(ProtocolOutput {
        report: EvalReport {
            seed: pipeline.config.seed,
            config: pipeline.config.entries(),
            n_gallery: gallery.len(),
            n_probe: probe.len(),
            classifiers,
            fused,
        },
        scores: records,
    })
}

/// Scores every gallery x probe pair of `dataset` with an already trained pipeline.
pub fn evaluate(pipeline: &TrainedPipeline, dataset: &Dataset) -> Result<ProtocolOutput> {
    let vectors = prepare(dataset, &pipeline.config)?;
    evaluate_prepared(pipeline, dataset, &vectors)
}

/// Train on the train split, then evaluate on gallery x probe.
pub fn run_protocol_full(dataset: &Dataset, config: &PipelineConfig) -> Result<(TrainedPipeline, ProtocolOutput)> {
    let vectors = prepare(dataset, config)?;
    let pipeline = train_prepared(dataset, &vectors, config)?;
    let out = evaluate_prepared(&pipeline, dataset, &vectors)?;
    Ok((pipeline, out))
}

pub fn run_protocol(dataset: &Dataset, config: &PipelineConfig) -> Result<EvalReport> {
    run_protocol_full(dataset, config).map(|(_, out)| out.report)
}
