//! Phase II (attribute extraction) and phase III (zero-shot fine-tuning)
//! training loops, and zero-shot evaluation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::codebooks::AttributeVectorMatrix;
use crate::encoder::{build_class_encoder, cossim_batch, ClassAttributeMatrix, ClassEncoderMatrix, SimilarityKernel};
use crate::error::{Error, Result};
use crate::io::EmbeddingTable;
use crate::linalg::Matrix;
use crate::metrics::{group_top1, topk_accuracy, wmap, GroupAccuracyReport, WmapReport, WmapWeights};
use crate::nn::{
    attribute_batch, positive_weights, zsc_batch, AdamWConfig, BatchLoss, ClassTargets, CosineSchedule,
    MlpAttributeEncoder, Parameters, ProjectionHead, TrainState,
};
use crate::rng::HdcSeed;
use crate::training::{DatasetSplit, Phase, RunConfig, RunReport, SplitMode, SplitSide};

/// Read-only inputs shared by every phase.
#[derive(Debug, Clone, Copy)]
pub struct TaskData<'a> {
    pub attributes: &'a ClassAttributeMatrix,
    pub dictionary: &'a AttributeVectorMatrix,
    pub embeddings: &'a EmbeddingTable,
}

/// Fresh head (and MLP in ablation mode) drawn from the run seed.
pub fn init_parameters(cfg: &RunConfig, d_in: usize, alpha: usize) -> Parameters {
    let mut rng = HdcSeed::new(cfg.seed, "init").rng(0);
    let head = ProjectionHead::init(d_in, cfg.dim, &mut rng);
    let mlp = cfg.mlp_hidden.map(|h| MlpAttributeEncoder::init(alpha, h, cfg.dim, &mut rng));
    Parameters {
        head,
        kernel: SimilarityKernel::with_inv_temperature(cfg.inv_temperature, cfg.learn_temperature),
        mlp,
    }
}

fn fresh_state(cfg: &RunConfig, params: Parameters, n_samples: usize) -> TrainState {
    let steps_per_epoch = n_samples.div_ceil(cfg.batch_size) as u64;
    let adamw = AdamWConfig {
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    };
    let schedule = CosineSchedule {
        lr_max: cfg.lr,
        lr_min: cfg.lr_min,
        total_steps: steps_per_epoch * cfg.epochs as u64,
    };
    let mut state = TrainState::new(params, adamw, schedule);
    state.config = cfg.to_json();
    state
}

/// Embeddings of one split side, after checking that every sample is
/// present in the table at the row the split expects.
fn gather_side(side: &SplitSide, embeddings: &EmbeddingTable) -> Result<Matrix> {
    let missing: Vec<u64> = side
        .samples
        .iter()
        .filter(|s| embeddings.row_of_sample(s.sample_id) != Some(s.row))
        .map(|s| s.sample_id)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingSamples(missing));
    }
    embeddings.gather(&side.rows())
}

/// Runs `cfg.epochs` shuffled passes over `n` samples. Returns the
/// sample-weighted mean loss of each epoch.
fn fit(
    cfg: &RunConfig,
    stream: &str,
    state: &mut TrainState,
    n: usize,
    mut batch_loss: impl FnMut(&Parameters, &[usize]) -> Result<BatchLoss>,
) -> Result<Vec<f64>> {
    let shuffle = HdcSeed::new(cfg.seed, stream);
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut shuffle.rng(epoch as u64));
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let out = batch_loss(&state.params, batch)?;
            let step = state.optimizer.step;
            if !out.loss.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            let lr = state.schedule.lr(step);
            let TrainState { params, optimizer, .. } = state;
            optimizer.step(&mut params.slots(), &out.grads.tensors(), lr)?;
            params.kernel.clamp();
            if !params.all_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            total += out.loss * batch.len() as f64;
        }
        curve.push(total / n as f64);
    }
    Ok(curve)
}

fn check_dims(cfg: &RunConfig, data: &TaskData<'_>) -> Result<()> {
    cfg.validate()?;
    if data.dictionary.dim() != cfg.dim {
        return Err(Error::DimensionMismatch {
            left: cfg.dim,
            right: data.dictionary.dim(),
        });
    }
    if data.attributes.alpha() != data.dictionary.alpha() {
        return Err(Error::Shape(format!(
            "class attributes have {} columns, the schema has {} attributes",
            data.attributes.alpha(),
            data.dictionary.alpha()
        )));
    }
    Ok(())
}

fn report(phase: Phase, cfg: &RunConfig, curve: Vec<f64>, state: &TrainState) -> RunReport {
    RunReport {
        phase,
        config: cfg.clone(),
        epoch_losses: curve,
        steps: state.optimizer.step,
        inv_temperature: state.params.kernel.inv_temperature(),
        metrics: BTreeMap::new(),
    }
}

/// Per-sample BCE targets: each sample inherits its class's attribute row,
/// optionally thresholded.
fn attribute_targets(side: &SplitSide, attributes: &ClassAttributeMatrix, binarize: Option<f64>) -> Result<Matrix> {
    let mut rows: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for &c in &side.classes {
        let mut r = attributes.row(c)?.to_vec();
        if let Some(t) = binarize {
            r.iter_mut().for_each(|v| *v = if *v >= t { 1.0 } else { 0.0 });
        }
        if let Some(v) = r.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidValue(format!("class {c} has attribute strength {v} outside [0, 1]")));
        }
        rows.insert(c, r);
    }
    let mut m = Matrix::zeros(side.samples.len(), attributes.alpha());
    for (i, s) in side.samples.iter().enumerate() {
        let r = rows.get(&s.class_id).ok_or(Error::UnknownLabel(s.class_id))?;
        m.row_mut(i).copy_from_slice(r);
    }
    Ok(m)
}

/// Phase II: trains the head so that `cos(γ(x), b_x)` predicts the class
/// attributes under weighted BCE. Only training samples and training-class
/// attribute rows are read.
pub fn train_attribute_extraction(
    cfg: &RunConfig,
    split: &DatasetSplit,
    data: &TaskData<'_>,
) -> Result<(TrainState, RunReport)> {
    check_dims(cfg, data)?;
    split.check()?;
    let side = &split.train;
    let x = gather_side(side, data.embeddings)?;
    let targets = attribute_targets(side, data.attributes, cfg.binarize)?;
    let weights = positive_weights(targets.row_iter(), targets.cols());
    let dictionary = data.dictionary.dense_f64();
    let params = init_parameters(cfg, data.embeddings.d_in(), data.dictionary.alpha());
    let mut state = fresh_state(cfg, params, side.samples.len());
    let curve = fit(cfg, "shuffle-attributes", &mut state, side.samples.len(), |p, idx| {
        attribute_batch(p, &x.select_rows(idx), &targets.select_rows(idx), &weights, &dictionary, cfg.logit_scale)
    })?;
    let r = report(Phase::AttributeExtraction, cfg, curve, &state);
    Ok((state, r))
}

/// Class embeddings the classifier is trained against.
#[derive(Debug, Clone)]
pub enum ZscTargets {
    Stationary(ClassEncoderMatrix),
    /// Class attribute rows for the trainable MLP encoder.
    Trainable { attributes: Matrix, class_ids: Vec<u32> },
}

impl ZscTargets {
    pub fn class_ids(&self) -> &[u32] {
        match self {
            Self::Stationary(phi) => &phi.class_ids,
            Self::Trainable { class_ids, .. } => class_ids,
        }
    }

    /// Targets for `class_ids` only; no other attribute rows are read.
    pub fn build(cfg: &RunConfig, data: &TaskData<'_>, class_ids: &[u32]) -> Result<Self> {
        let a = data.attributes.select(class_ids)?;
        Ok(match cfg.mlp_hidden {
            None => Self::Stationary(build_class_encoder(&a, data.dictionary)?),
            Some(_) => Self::Trainable {
                attributes: a.matrix().clone(),
                class_ids: class_ids.to_vec(),
            },
        })
    }

    fn as_class_targets(&self) -> ClassTargets<'_> {
        match self {
            Self::Stationary(phi) => ClassTargets::Stationary(&phi.phi),
            Self::Trainable { attributes, .. } => ClassTargets::Trainable(attributes),
        }
    }
}

fn labels_for(side: &SplitSide, class_ids: &[u32]) -> Result<Vec<usize>> {
    side.samples
        .iter()
        .map(|s| {
            class_ids
                .iter()
                .position(|&c| c == s.class_id)
                .ok_or(Error::UnknownLabel(s.class_id))
        })
        .collect()
}

/// Phase III on explicit targets: cross-entropy over the training classes.
/// `init` warm-starts the parameters; optimizer and schedule start fresh.
pub fn train_zsc_with_targets(
    cfg: &RunConfig,
    side: &SplitSide,
    embeddings: &EmbeddingTable,
    targets: &ZscTargets,
    init: Option<TrainState>,
) -> Result<(TrainState, RunReport)> {
    cfg.validate()?;
    let labels = labels_for(side, targets.class_ids())?;
    let x = gather_side(side, embeddings)?;
    let alpha = match targets {
        ZscTargets::Stationary(_) => 0,
        ZscTargets::Trainable { attributes, .. } => attributes.cols(),
    };
    let mut params = match init {
        Some(s) => s.params,
        None => init_parameters(cfg, embeddings.d_in(), alpha),
    };
    if params.head.d_in() != embeddings.d_in() || params.head.d_out() != cfg.dim {
        return Err(Error::Shape(format!(
            "head maps {} to {}, run expects {} to {}",
            params.head.d_in(),
            params.head.d_out(),
            embeddings.d_in(),
            cfg.dim
        )));
    }
    params.kernel.learnable = cfg.learn_temperature;
    match (targets, &params.mlp) {
        (ZscTargets::Trainable { .. }, None) => {
            let fresh = init_parameters(cfg, embeddings.d_in(), alpha);
            params.mlp = fresh.mlp;
        }
        (ZscTargets::Stationary(_), Some(_)) => params.mlp = None,
        _ => {}
    }
    let mut state = fresh_state(cfg, params, side.samples.len());
    let t = targets.as_class_targets();
    let curve = fit(cfg, "shuffle-zsc", &mut state, side.samples.len(), |p, idx| {
        let batch_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        zsc_batch(p, &x.select_rows(idx), &batch_labels, t)
    })?;
    let r = report(Phase::ZeroShot, cfg, curve, &state);
    Ok((state, r))
}

/// Phase III over the split's training classes.
pub fn train_zsc(
    cfg: &RunConfig,
    split: &DatasetSplit,
    data: &TaskData<'_>,
    init: Option<TrainState>,
) -> Result<(TrainState, RunReport)> {
    check_dims(cfg, data)?;
    split.check()?;
    let targets = ZscTargets::build(cfg, data, &split.train.classes)?;
    train_zsc_with_targets(cfg, &split.train, data.embeddings, &targets, init)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZscEvaluation {
    pub top1: f64,
    pub top5: f64,
    pub samples: usize,
    pub classes: Vec<u32>,
    pub logits: Matrix,
    pub labels: Vec<usize>,
}

/// Classifies the test side against class embeddings built here, from the
/// test classes only.
pub fn evaluate_zsc(state: &TrainState, split: &DatasetSplit, data: &TaskData<'_>) -> Result<ZscEvaluation> {
    split.check()?;
    if split.mode == SplitMode::Zs {
        // the classifier may only have been fitted on seen classes
        let seen: Vec<u32> = split.train.classes.clone();
        if let Some(c) = split.test.classes.iter().find(|c| seen.contains(c)) {
            return Err(Error::Split(format!("test class {c} was seen in training")));
        }
    }
    let side = &split.test;
    let a = data.attributes.select(&side.classes)?;
    let class_embeddings = match &state.params.mlp {
        None => build_class_encoder(&a, data.dictionary)?.phi,
        Some(mlp) => mlp.forward(a.matrix())?.0,
    };
    let x = gather_side(side, data.embeddings)?;
    let e = state.params.head.forward(&x)?;
    let logits = cossim_batch(&e, &class_embeddings, &state.params.kernel)?;
    let labels = labels_for(side, &side.classes)?;
    let k5 = 5.min(side.classes.len()).max(1);
    Ok(ZscEvaluation {
        top1: topk_accuracy(&logits, &labels, 1)?,
        top5: topk_accuracy(&logits, &labels, k5)?,
        samples: labels.len(),
        classes: side.classes.clone(),
        logits,
        labels,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeEvaluation {
    pub groups: GroupAccuracyReport,
    pub wmap: WmapReport,
    /// `cos(γ(x), b_x)` per sample.
    pub scores: Matrix,
}

/// Attribute predictions on one side of the split. Ground truth is the
/// class attribute row, positive where it reaches `threshold`.
pub fn evaluate_attributes(
    state: &TrainState,
    side: &SplitSide,
    data: &TaskData<'_>,
    threshold: f64,
    weights: &WmapWeights,
) -> Result<AttributeEvaluation> {
    let x = gather_side(side, data.embeddings)?;
    let e = state.params.head.forward(&x)?;
    let scores = cossim_batch(&e, &data.dictionary.dense_f64(), &SimilarityKernel::with_inv_temperature(1.0, false))?;
    let truth = attribute_targets(side, data.attributes, None)?;
    let labels: Vec<Vec<bool>> = truth.row_iter().map(|r| r.iter().map(|&t| t >= threshold).collect()).collect();
    Ok(AttributeEvaluation {
        groups: group_top1(&scores, &truth, data.dictionary.schema())?,
        wmap: wmap(&scores, &labels, weights)?,
        scores,
    })
}
