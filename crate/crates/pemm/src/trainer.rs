//! The mini-batch training loop: SGD with momentum and weight decay, a step
//! learning-rate schedule, per-epoch metrics, and center-geometry
//! diagnostics.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::ParamSet;
use crate::data::LabeledDataset;
use crate::energy::{CenterMatrix, DistanceStats, PeParams};
use crate::error::{Error, Result};
use crate::head::{predict, HeadConfig};
use crate::losses::{total_loss, LossConfig, LossContext, LossKind, LossReport};
use crate::model::{forward_features, init_params, MlpArch};
use crate::rng::{seeded_rng, standard_normal};
use crate::tensor::Tensor;

/// Everything a training run needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial learning rate; divided by 10 at each epoch in `lr_drops`.
    pub lr: f64,
    pub lr_drops: Vec<usize>,
    pub momentum: f64,
    /// Applied to network weights only; centers are exempt, since decay pulls
    /// them toward the origin against the energy geometry.
    pub weight_decay: f64,
    pub seed: u64,
    pub arch: MlpArch,
    pub loss_cfg: LossConfig,
    pub pe_cfg: PeParams,
    pub head_cfg: HeadConfig,
    pub loss_kind: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 120,
            batch_size: 128,
            lr: 0.01,
            lr_drops: vec![40, 80],
            momentum: 0.9,
            weight_decay: 1e-4,
            seed: 0,
            arch: MlpArch::default(),
            loss_cfg: LossConfig::default(),
            pe_cfg: PeParams::defaults(),
            head_cfg: HeadConfig::default(),
            loss_kind: LossKind::Pemm,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1".to_string()));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1".to_string()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::config(format!("weight decay must be non-negative, got {}", self.weight_decay)));
        }
        self.loss_cfg.validate()?;
        self.head_cfg.validate()?;
        Ok(())
    }
}

/// One epoch of logged diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub report: LossReport,
    /// Accuracy against the (possibly noisy) training labels.
    pub train_accuracy: f64,
    /// Accuracy against the clean test labels.
    pub test_accuracy: f64,
    pub center_stats: DistanceStats,
}

/// Learning rate at an epoch: the initial rate divided by 10 for every drop
/// epoch at or before it.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let drops = cfg.lr_drops.iter().filter(|&&d| d <= epoch).count();
    cfg.lr * 0.1f64.powi(drops as i32)
}

/// Initializes the network and the class centers. Centers start as seeded
/// random unit directions scaled to radius r0 - beta, the stable distance
/// from the origin; inter-center repulsion then spreads them out.
pub fn init_model(cfg: &TrainConfig, input_dim: usize, k: usize, seed: u64) -> Result<(ParamSet, CenterMatrix)> {
    cfg.validate()?;
    if k < 2 {
        return Err(Error::config(format!("training needs K >= 2, got K={}", k)));
    }
    let params = init_params(&cfg.arch, input_dim, seed)?;
    let m = cfg.arch.feature_dim();
    let radius = cfg.pe_cfg.stable_separation();
    let mut rng = seeded_rng(seed, "centers-init");
    let mut data = vec![0.0; k * m];
    for row in data.chunks_exact_mut(m) {
        loop {
            for x in row.iter_mut() {
                *x = standard_normal(&mut rng);
            }
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-9 {
                for x in row.iter_mut() {
                    *x *= radius / norm;
                }
                break;
            }
        }
    }
    Ok((params, CenterMatrix::new(Tensor::new(vec![k, m], data)?)?))
}

/// One SGD-with-momentum update on a single tensor:
/// `v <- momentum*v + (grad + weight_decay*param); param <- param - lr*v`.
pub fn sgd_step(
    param: &mut Tensor,
    grad: &Tensor,
    velocity: &mut Tensor,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if param.shape() != grad.shape() || param.shape() != velocity.shape() {
        return Err(Error::shape(
            "sgd_step",
            format!("param {:?} vs grad {:?} vs velocity {:?}", param.shape(), grad.shape(), velocity.shape()),
        ));
    }
    for ((p, g), v) in param.data_mut().iter_mut().zip(grad.data()).zip(velocity.data_mut()) {
        *v = momentum * *v + (g + weight_decay * *p);
        *p -= lr * *v;
        if !p.is_finite() {
            return Err(Error::non_finite("sgd_step", format!("parameter became {}", p)));
        }
    }
    Ok(())
}

/// Momentum state for a named parameter collection.
struct Sgd {
    velocity: BTreeMap<String, Tensor>,
    momentum: f64,
    weight_decay: f64,
}

impl Sgd {
    fn new(params: &ParamSet, centers: &CenterMatrix, momentum: f64, weight_decay: f64) -> Self {
        let mut velocity: BTreeMap<String, Tensor> = params
            .iter()
            .map(|(name, t)| (name.clone(), Tensor::zeros(t.shape().to_vec())))
            .collect();
        velocity.insert("centers".to_string(), Tensor::zeros(centers.tensor().shape().to_vec()));
        Sgd { velocity, momentum, weight_decay }
    }

    fn step(
        &mut self,
        params: &mut ParamSet,
        centers: &mut CenterMatrix,
        grads: &BTreeMap<String, Tensor>,
        lr: f64,
    ) -> Result<()> {
        for name in params.names() {
            let grad = grads
                .get(&name)
                .ok_or_else(|| Error::config(format!("missing gradient for '{}'", name)))?;
            let velocity = self.velocity.get_mut(&name).expect("velocity mirrors params");
            let param = params.get_mut(&name).expect("iterating existing names");
            sgd_step(param, grad, velocity, lr, self.momentum, self.weight_decay)?;
        }
        let grad = grads
            .get("centers")
            .ok_or_else(|| Error::config("missing gradient for 'centers'".to_string()))?;
        let velocity = self.velocity.get_mut("centers").expect("inserted at construction");
        sgd_step(centers.tensor_mut(), grad, velocity, lr, self.momentum, 0.0)?;
        Ok(())
    }
}

/// A trained feature extractor plus its class centers.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: ParamSet,
    pub centers: CenterMatrix,
    pub arch: MlpArch,
    pub head_cfg: HeadConfig,
}

impl TrainedModel {
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let z = forward_features(&self.params, &self.arch, x, self.head_cfg.normalize_features)?;
        predict(&z, &self.centers, &self.head_cfg)
    }

    /// Serializes the parameters with their shape manifest as JSON.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dump = ModelDump {
            arch: self.arch.clone(),
            head_cfg: self.head_cfg,
            centers: self.centers.tensor().clone(),
            params: self.params.iter().map(|(n, t)| (n.clone(), t.clone())).collect(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&dump)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let dump: ModelDump = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let mut params = ParamSet::new();
        for (name, tensor) in dump.params {
            params.insert(&name, tensor);
        }
        Ok(TrainedModel {
            params,
            centers: CenterMatrix::new(dump.centers)?,
            arch: dump.arch,
            head_cfg: dump.head_cfg,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDump {
    arch: MlpArch,
    head_cfg: HeadConfig,
    centers: Tensor,
    params: BTreeMap<String, Tensor>,
}

/// Metrics stream plus the final model.
pub struct TrainOutcome {
    pub metrics: Vec<EpochMetrics>,
    pub model: TrainedModel,
}

impl TrainOutcome {
    pub fn final_metrics(&self) -> &EpochMetrics {
        self.metrics.last().expect("at least one epoch")
    }
}

/// Runs the full training loop: per epoch, a seeded shuffle, mini-batch
/// forward/backward through the selected objective, and an SGD update of the
/// network and the centers together. Deterministic given config and seed.
pub fn train(ds_train: &LabeledDataset, ds_test: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    ds_train.validate()?;
    ds_test.validate()?;
    if ds_train.k != ds_test.k {
        return Err(Error::config(format!("train has K={}, test has K={}", ds_train.k, ds_test.k)));
    }
    if ds_train.dim() != ds_test.dim() {
        return Err(Error::config(format!("train is {}-dim, test is {}-dim", ds_train.dim(), ds_test.dim())));
    }
    let k = ds_train.k;
    let n = ds_train.n();
    if n == 0 {
        return Err(Error::config("training set is empty".to_string()));
    }

    let (mut params, mut centers) = init_model(cfg, ds_train.dim(), k, cfg.seed)?;
    let mut sgd = Sgd::new(&params, &centers, cfg.momentum, cfg.weight_decay);
    let ctx = LossContext {
        arch: &cfg.arch,
        head: &cfg.head_cfg,
        cfg: &cfg.loss_cfg,
        pe: &cfg.pe_cfg,
        kind: cfg.loss_kind,
    };

    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg);
        let mut rng = seeded_rng(cfg.seed, &format!("shuffle/{}", epoch));
        order.shuffle(&mut rng);

        let mut reports = Vec::new();
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (x, labels) = gather_batch(ds_train, batch)?;
            params.zero_grads();
            let (report, grads) = total_loss(&ctx, &x, &labels, k, &params, &centers).map_err(|e| match e {
                Error::NonFinite { op, detail } => Error::divergence(
                    format!("epoch {} batch {}", epoch, batch_idx),
                    format!("non-finite value in {}: {}", op, detail),
                ),
                other => other,
            })?;
            report.validate()?;
            for name in params.names() {
                params.accumulate_grad(&name, &grads[&name])?;
            }
            let accumulated: BTreeMap<String, Tensor> = params
                .names()
                .into_iter()
                .map(|name| {
                    let g = params.grad(&name).expect("accumulated above").clone();
                    (name, g)
                })
                .chain(std::iter::once(("centers".to_string(), grads["centers"].clone())))
                .collect();
            sgd.step(&mut params, &mut centers, &accumulated, lr)?;
            reports.push(report);
        }

        let report = LossReport::aggregate(&reports)?;
        let model = TrainedModel {
            params: params.clone(),
            centers: centers.clone(),
            arch: cfg.arch.clone(),
            head_cfg: cfg.head_cfg,
        };
        let train_accuracy = evaluate(&model, ds_train)?.accuracy;
        let test_accuracy = evaluate(&model, ds_test)?.accuracy;
        metrics.push(EpochMetrics {
            epoch,
            lr,
            report,
            train_accuracy,
            test_accuracy,
            center_stats: centers.distance_stats(),
        });
    }

    let model = TrainedModel { params, centers, arch: cfg.arch.clone(), head_cfg: cfg.head_cfg };
    Ok(TrainOutcome { metrics, model })
}

fn gather_batch(ds: &LabeledDataset, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
    let d = ds.dim();
    let mut data = Vec::with_capacity(indices.len() * d);
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        data.extend_from_slice(ds.features.row(i));
        labels.push(ds.labels[i]);
    }
    Ok((Tensor::new(vec![indices.len(), d], data)?, labels))
}

/// Fraction of correct predictions plus the per-class breakdown.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    pub per_class: Vec<f64>,
}

/// Accuracy of a prediction sequence against reference labels.
pub fn accuracy_from_predictions(preds: &[usize], labels: &[usize], k: usize) -> Result<EvalResult> {
    if preds.len() != labels.len() {
        return Err(Error::shape(
            "accuracy_from_predictions",
            format!("{} predictions vs {} labels", preds.len(), labels.len()),
        ));
    }
    let mut correct = vec![0usize; k];
    let mut counts = vec![0usize; k];
    let mut total = 0usize;
    for (&p, &y) in preds.iter().zip(labels) {
        if y >= k {
            return Err(Error::domain("accuracy_from_predictions", format!("label {} out of range for K={}", y, k)));
        }
        counts[y] += 1;
        if p == y {
            correct[y] += 1;
            total += 1;
        }
    }
    let accuracy = if labels.is_empty() { 0.0 } else { total as f64 / labels.len() as f64 };
    let per_class = correct
        .iter()
        .zip(&counts)
        .map(|(&c, &n)| if n == 0 { 0.0 } else { c as f64 / n as f64 })
        .collect();
    Ok(EvalResult { accuracy, per_class })
}

/// Evaluates argmax predictions of a model against a dataset's labels.
pub fn evaluate(model: &TrainedModel, ds: &LabeledDataset) -> Result<EvalResult> {
    let preds = model.predict(&ds.features)?;
    accuracy_from_predictions(&preds, &ds.labels, ds.k)
}

/// Writes the per-epoch metrics stream with the fixed column layout:
/// epoch, lr, ce, rce, clf, pe, total, train_acc, test_acc,
/// center_dist_min, center_dist_mean, center_dist_max, center_dist_sum.
pub fn write_metrics_csv<W: Write>(w: &mut W, metrics: &[EpochMetrics]) -> Result<()> {
    writeln!(
        w,
        "epoch,lr,ce,rce,clf,pe,total,train_acc,test_acc,center_dist_min,center_dist_mean,center_dist_max,center_dist_sum"
    )?;
    for m in metrics {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            m.epoch,
            m.lr,
            m.report.ce_term,
            m.report.rce_term,
            m.report.clf_total,
            m.report.pe_term,
            m.report.grand_total,
            m.train_accuracy,
            m.test_accuracy,
            m.center_stats.min,
            m.center_stats.mean,
            m.center_stats.max,
            m.center_stats.sum
        )?;
    }
    Ok(())
}
