//! Experiment configuration and the command entry points behind the `pemm`
//! binary: `train`, `noise`, `centersim` and `verify`.
//!
//! Configuration is a flat, line-oriented `key = value` document. Unknown
//! keys are rejected and the echoed configuration spells out every effective
//! value, defaults included, so runs are diffable.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{load_cifar10_binary, load_csv, standardize, stratified_subset, write_dataset_csv, BlobSpec, LabeledDataset};
use crate::energy::{simulate_center_dynamics, DistanceStats, PeParams};
use crate::error::{Error, Result};
use crate::head::HeadConfig;
use crate::losses::{LossConfig, LossKind};
use crate::model::MlpArch;
use crate::noise::{cifar10_asymmetric_map, write_noise_csv, NoiseKind, NoiseSpec};
use crate::rng::derive_seed;
use crate::trainer::{train, write_metrics_csv, TrainConfig};
use crate::verify::{run_battery, VerifyOptions, VerifyReport};

/// Where training data comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSource {
    Blobs,
    Cifar10,
    Csv,
}

/// Flat experiment description; one field per config key.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub out: PathBuf,
    pub seed: u64,

    pub blobs_classes: usize,
    pub blobs_dim: usize,
    pub blobs_train_per_class: usize,
    pub blobs_test_per_class: usize,
    pub blobs_center_scale: f64,
    pub blobs_stddev: f64,

    pub cifar_dir: String,
    pub cifar_train_per_class: usize,
    pub cifar_test_per_class: usize,

    pub csv_train: String,
    pub csv_test: String,
    pub csv_label_column: usize,
    pub csv_classes: usize,

    pub standardize: bool,

    /// "none", "symmetric" or "asymmetric".
    pub noise_kind: String,
    pub noise_rate: f64,
    pub noise_exact_count: bool,
    /// "src:dst" pairs separated by commas; empty selects the 10-class preset.
    pub noise_map: String,

    pub loss: String,
    pub ablate_ce: bool,
    pub ablate_rce: bool,
    pub ablate_pe: bool,

    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub gce_q: f64,
    pub rce_log_zero: f64,
    pub pe_u: u32,
    pub pe_v: u32,
    pub pe_xi: f64,

    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_drops: Vec<usize>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub normalize_features: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSource::Blobs,
            out: PathBuf::from("out"),
            seed: 0,
            blobs_classes: 4,
            blobs_dim: 16,
            blobs_train_per_class: 500,
            blobs_test_per_class: 250,
            blobs_center_scale: 1.0,
            blobs_stddev: 0.75,
            cifar_dir: String::new(),
            cifar_train_per_class: 500,
            cifar_test_per_class: 200,
            csv_train: String::new(),
            csv_test: String::new(),
            csv_label_column: 0,
            csv_classes: 2,
            standardize: true,
            noise_kind: "none".to_string(),
            noise_rate: 0.0,
            noise_exact_count: false,
            noise_map: String::new(),
            loss: "pemm".to_string(),
            ablate_ce: false,
            ablate_rce: false,
            ablate_pe: false,
            alpha: 0.1,
            beta: 0.3,
            lambda: 1.0,
            sigma: 1.0,
            gce_q: 0.7,
            rce_log_zero: -4.0,
            pe_u: 3,
            pe_v: 2,
            pe_xi: 2.0,
            epochs: 120,
            batch_size: 128,
            lr: 0.01,
            lr_drops: vec![40, 80],
            momentum: 0.9,
            weight_decay: 1e-4,
            hidden: vec![64, 64],
            feature_dim: 16,
            normalize_features: true,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("key '{}': cannot parse '{}'", key, value)))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::config(format!("key '{}': expected a boolean, got '{}'", key, other))),
    }
}

fn parse_usize_list(key: &str, value: &str) -> Result<Vec<usize>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| Error::config(format!("key '{}': bad entry '{}'", key, s))))
        .collect()
}

impl ExperimentConfig {
    /// Parses a flat `key = value` document on top of the defaults. Unknown
    /// and duplicate keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected 'key = value', got '{}'", i + 1, raw.trim())))?;
            let key = key.trim();
            let value = value.trim();
            if let Some(prev) = seen.insert(key.to_string(), i + 1) {
                return Err(Error::config(format!("line {}: duplicate key '{}' (first set on line {})", i + 1, key, prev)));
            }
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config '{}': {}", path.display(), e)))?;
        Self::parse(&text)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => {
                self.dataset = match value {
                    "blobs" => DatasetSource::Blobs,
                    "cifar10" => DatasetSource::Cifar10,
                    "csv" => DatasetSource::Csv,
                    other => return Err(Error::config(format!("unknown dataset '{}'", other))),
                }
            }
            "out" => self.out = PathBuf::from(value),
            "seed" => self.seed = parse_value(key, value)?,
            "blobs_classes" => self.blobs_classes = parse_value(key, value)?,
            "blobs_dim" => self.blobs_dim = parse_value(key, value)?,
            "blobs_train_per_class" => self.blobs_train_per_class = parse_value(key, value)?,
            "blobs_test_per_class" => self.blobs_test_per_class = parse_value(key, value)?,
            "blobs_center_scale" => self.blobs_center_scale = parse_value(key, value)?,
            "blobs_stddev" => self.blobs_stddev = parse_value(key, value)?,
            "cifar_dir" => self.cifar_dir = value.to_string(),
            "cifar_train_per_class" => self.cifar_train_per_class = parse_value(key, value)?,
            "cifar_test_per_class" => self.cifar_test_per_class = parse_value(key, value)?,
            "csv_train" => self.csv_train = value.to_string(),
            "csv_test" => self.csv_test = value.to_string(),
            "csv_label_column" => self.csv_label_column = parse_value(key, value)?,
            "csv_classes" => self.csv_classes = parse_value(key, value)?,
            "standardize" => self.standardize = parse_bool(key, value)?,
            "noise_kind" => self.noise_kind = value.to_string(),
            "noise_rate" => self.noise_rate = parse_value(key, value)?,
            "noise_exact_count" => self.noise_exact_count = parse_bool(key, value)?,
            "noise_map" => self.noise_map = value.to_string(),
            "loss" => self.loss = value.to_string(),
            "ablate_ce" => self.ablate_ce = parse_bool(key, value)?,
            "ablate_rce" => self.ablate_rce = parse_bool(key, value)?,
            "ablate_pe" => self.ablate_pe = parse_bool(key, value)?,
            "alpha" => self.alpha = parse_value(key, value)?,
            "beta" => self.beta = parse_value(key, value)?,
            "lambda" => self.lambda = parse_value(key, value)?,
            "sigma" => self.sigma = parse_value(key, value)?,
            "gce_q" => self.gce_q = parse_value(key, value)?,
            "rce_log_zero" => self.rce_log_zero = parse_value(key, value)?,
            "pe_u" => self.pe_u = parse_value(key, value)?,
            "pe_v" => self.pe_v = parse_value(key, value)?,
            "pe_xi" => self.pe_xi = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "lr" => self.lr = parse_value(key, value)?,
            "lr_drops" => self.lr_drops = parse_usize_list(key, value)?,
            "momentum" => self.momentum = parse_value(key, value)?,
            "weight_decay" => self.weight_decay = parse_value(key, value)?,
            "hidden" => self.hidden = parse_usize_list(key, value)?,
            "feature_dim" => self.feature_dim = parse_value(key, value)?,
            "normalize_features" => self.normalize_features = parse_bool(key, value)?,
            other => return Err(Error::config(format!("unknown config key '{}'", other))),
        }
        Ok(())
    }

    /// Every effective key=value pair, sorted, defaults included.
    pub fn echo(&self) -> String {
        let mut pairs: Vec<(&str, String)> = vec![
            ("ablate_ce", self.ablate_ce.to_string()),
            ("ablate_pe", self.ablate_pe.to_string()),
            ("ablate_rce", self.ablate_rce.to_string()),
            ("alpha", self.alpha.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("beta", self.beta.to_string()),
            ("blobs_center_scale", self.blobs_center_scale.to_string()),
            ("blobs_classes", self.blobs_classes.to_string()),
            ("blobs_dim", self.blobs_dim.to_string()),
            ("blobs_stddev", self.blobs_stddev.to_string()),
            ("blobs_test_per_class", self.blobs_test_per_class.to_string()),
            ("blobs_train_per_class", self.blobs_train_per_class.to_string()),
            ("cifar_dir", self.cifar_dir.clone()),
            ("cifar_test_per_class", self.cifar_test_per_class.to_string()),
            ("cifar_train_per_class", self.cifar_train_per_class.to_string()),
            ("csv_classes", self.csv_classes.to_string()),
            ("csv_label_column", self.csv_label_column.to_string()),
            ("csv_test", self.csv_test.clone()),
            ("csv_train", self.csv_train.clone()),
            (
                "dataset",
                match self.dataset {
                    DatasetSource::Blobs => "blobs".to_string(),
                    DatasetSource::Cifar10 => "cifar10".to_string(),
                    DatasetSource::Csv => "csv".to_string(),
                },
            ),
            ("epochs", self.epochs.to_string()),
            ("feature_dim", self.feature_dim.to_string()),
            ("gce_q", self.gce_q.to_string()),
            ("hidden", join_list(&self.hidden)),
            ("lambda", self.lambda.to_string()),
            ("loss", self.loss.clone()),
            ("lr", self.lr.to_string()),
            ("lr_drops", join_list(&self.lr_drops)),
            ("momentum", self.momentum.to_string()),
            ("noise_exact_count", self.noise_exact_count.to_string()),
            ("noise_kind", self.noise_kind.clone()),
            ("noise_map", self.noise_map.clone()),
            ("noise_rate", self.noise_rate.to_string()),
            ("normalize_features", self.normalize_features.to_string()),
            ("out", self.out.display().to_string()),
            ("pe_u", self.pe_u.to_string()),
            ("pe_v", self.pe_v.to_string()),
            ("pe_xi", self.pe_xi.to_string()),
            ("rce_log_zero", self.rce_log_zero.to_string()),
            ("seed", self.seed.to_string()),
            ("sigma", self.sigma.to_string()),
            ("standardize", self.standardize.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
        ];
        pairs.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{} = {}", k, v);
        }
        out
    }

    /// Resolves the loss selection including ablation flags.
    pub fn loss_kind(&self) -> Result<LossKind> {
        let base = LossKind::parse(&self.loss)?;
        let ablations = [self.ablate_ce, self.ablate_rce, self.ablate_pe].iter().filter(|&&b| b).count();
        if ablations == 0 {
            return Ok(base);
        }
        if base != LossKind::Pemm {
            return Err(Error::config("ablation flags apply only to loss = pemm".to_string()));
        }
        if ablations > 1 {
            return Err(Error::config("select at most one ablation flag".to_string()));
        }
        Ok(if self.ablate_ce {
            LossKind::PemmNoCe
        } else if self.ablate_rce {
            LossKind::PemmNoRce
        } else {
            LossKind::PemmNoPe
        })
    }

    pub fn pe_params(&self) -> Result<PeParams> {
        PeParams::new(self.pe_u, self.pe_v, self.pe_xi, self.beta)
    }

    /// Assembles the trainer configuration, validating every sub-config.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut widths = self.hidden.clone();
        widths.push(self.feature_dim);
        let cfg = TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            lr_drops: self.lr_drops.clone(),
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            seed: self.seed,
            arch: MlpArch::new(widths)?,
            loss_cfg: LossConfig {
                alpha: self.alpha,
                lambda: self.lambda,
                log_zero_value: self.rce_log_zero,
                gce_q: self.gce_q,
            },
            pe_cfg: self.pe_params()?,
            head_cfg: HeadConfig { sigma: self.sigma, normalize_features: self.normalize_features },
            loss_kind: self.loss_kind()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Noise specification for the training labels, or None when disabled.
    /// The injection seed is derived from the root seed.
    pub fn noise_spec(&self, k: usize) -> Result<Option<NoiseSpec>> {
        match self.noise_kind.as_str() {
            "none" => Ok(None),
            kind => {
                let kind = NoiseKind::parse(kind)?;
                let class_map = match kind {
                    NoiseKind::Symmetric => None,
                    NoiseKind::Asymmetric => Some(if self.noise_map.trim().is_empty() {
                        if k == 10 {
                            cifar10_asymmetric_map()
                        } else {
                            return Err(Error::config(format!(
                                "asymmetric noise on {}-class data needs an explicit noise_map",
                                k
                            )));
                        }
                    } else {
                        parse_class_map(&self.noise_map)?
                    }),
                };
                let spec = NoiseSpec {
                    kind,
                    rate: self.noise_rate,
                    class_map,
                    seed: derive_seed(self.seed, "noise"),
                    exact_count: self.noise_exact_count,
                };
                spec.validate(k)?;
                Ok(Some(spec))
            }
        }
    }
}

fn join_list(values: &[usize]) -> String {
    values.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// Parses "src:dst" pairs separated by commas.
pub fn parse_class_map(text: &str) -> Result<BTreeMap<usize, usize>> {
    let mut map = BTreeMap::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (src, dst) = part
            .split_once(':')
            .ok_or_else(|| Error::config(format!("class map entry '{}' is not 'src:dst'", part)))?;
        let src: usize = parse_value("noise_map", src.trim())?;
        let dst: usize = parse_value("noise_map", dst.trim())?;
        if map.insert(src, dst).is_some() {
            return Err(Error::config(format!("class map lists source {} twice", src)));
        }
    }
    if map.is_empty() {
        return Err(Error::config("class map is empty".to_string()));
    }
    Ok(map)
}

/// Final numbers of a training run, serialized as `summary.json`.
/// `wall_time_secs` is the one field that varies between identical runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub loss: String,
    pub final_train_accuracy: f64,
    pub final_test_accuracy: f64,
    pub realized_noise_rate: f64,
    pub center_distances: DistanceStats,
    pub epochs: usize,
    pub wall_time_secs: f64,
    pub config_echo: String,
}

fn resolve_datasets(cfg: &ExperimentConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    match cfg.dataset {
        DatasetSource::Blobs => {
            let spec = BlobSpec {
                k: cfg.blobs_classes,
                dim: cfg.blobs_dim,
                center_scale: cfg.blobs_center_scale,
                stddev: cfg.blobs_stddev,
                seed: derive_seed(cfg.seed, "data"),
            };
            Ok((spec.sample(cfg.blobs_train_per_class, "train")?, spec.sample(cfg.blobs_test_per_class, "test")?))
        }
        DatasetSource::Cifar10 => {
            if cfg.cifar_dir.is_empty() {
                return Err(Error::config("dataset = cifar10 needs cifar_dir".to_string()));
            }
            let dir = Path::new(&cfg.cifar_dir);
            let train_paths: Vec<PathBuf> =
                (1..=5).map(|i| dir.join(format!("data_batch_{}.bin", i))).collect();
            let train_full = load_cifar10_binary(&train_paths)?;
            let test_full = load_cifar10_binary(&[dir.join("test_batch.bin")])?;
            let train = stratified_subset(&train_full, cfg.cifar_train_per_class, derive_seed(cfg.seed, "cifar-train"))?;
            let test = stratified_subset(&test_full, cfg.cifar_test_per_class, derive_seed(cfg.seed, "cifar-test"))?;
            Ok((train, test))
        }
        DatasetSource::Csv => {
            if cfg.csv_train.is_empty() || cfg.csv_test.is_empty() {
                return Err(Error::config("dataset = csv needs csv_train and csv_test".to_string()));
            }
            let train = load_csv(Path::new(&cfg.csv_train), cfg.csv_label_column, cfg.csv_classes)?;
            let test = load_csv(Path::new(&cfg.csv_test), cfg.csv_label_column, cfg.csv_classes)?;
            Ok((train, test))
        }
    }
}

/// Runs a full experiment: data, optional noise, training, and the output
/// files (`config_echo.txt`, `metrics.csv`, `model.json`, `summary.json`,
/// plus `noise_audit.csv` when noise is enabled).
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainSummary> {
    let started = Instant::now();
    let train_cfg = cfg.train_config()?;
    let (mut ds_train, mut ds_test) = resolve_datasets(cfg)?;
    if cfg.standardize {
        let (train_std, stats) = standardize(&ds_train, None)?;
        let (test_std, _) = standardize(&ds_test, Some(&stats))?;
        ds_train = train_std;
        ds_test = test_std;
    }

    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("config_echo.txt"), cfg.echo())?;

    let realized_noise_rate = match cfg.noise_spec(ds_train.k)? {
        Some(spec) => {
            let audit = ds_train.apply_noise(&spec)?;
            let clean = ds_train.clean_labels.clone().expect("apply_noise stores the shadow copy");
            let mask: Vec<bool> = clean.iter().zip(&ds_train.labels).map(|(a, b)| a != b).collect();
            let mut buf = Vec::new();
            write_noise_csv(&mut buf, &clean, &ds_train.labels, &mask)?;
            fs::write(cfg.out.join("noise_audit.csv"), buf)?;
            audit.realized_rate
        }
        None => 0.0,
    };

    let outcome = train(&ds_train, &ds_test, &train_cfg)?;

    let mut metrics_buf = Vec::new();
    write_metrics_csv(&mut metrics_buf, &outcome.metrics)?;
    fs::write(cfg.out.join("metrics.csv"), metrics_buf)?;
    outcome.model.save(&cfg.out.join("model.json"))?;

    let final_m = outcome.final_metrics();
    let summary = TrainSummary {
        seed: cfg.seed,
        loss: train_cfg.loss_kind.to_string(),
        final_train_accuracy: final_m.train_accuracy,
        final_test_accuracy: final_m.test_accuracy,
        realized_noise_rate,
        center_distances: final_m.center_stats,
        epochs: train_cfg.epochs,
        wall_time_secs: started.elapsed().as_secs_f64(),
        config_echo: cfg.echo(),
    };
    fs::write(cfg.out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Arguments of the `noise` command.
#[derive(Debug, Clone)]
pub struct NoiseCmd {
    pub input: PathBuf,
    pub label_column: usize,
    pub classes: usize,
    pub spec: NoiseSpec,
    pub out: PathBuf,
}

/// What `noise` writes alongside its files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSummary {
    pub n: usize,
    pub realized_rate: f64,
    pub confusion: Vec<Vec<usize>>,
}

/// Corrupts the labels of a CSV dataset; writes `noisy.csv` (same layout,
/// labels replaced) and `noise_audit.csv` (index, clean, noisy, flipped).
pub fn cmd_noise(args: &NoiseCmd) -> Result<NoiseSummary> {
    let mut ds = load_csv(&args.input, args.label_column, args.classes)?;
    let audit = ds.apply_noise(&args.spec)?;
    fs::create_dir_all(&args.out)?;

    let mut noisy_buf = Vec::new();
    write_dataset_csv(&mut noisy_buf, &ds)?;
    fs::write(args.out.join("noisy.csv"), noisy_buf)?;

    let clean = ds.clean_labels.as_ref().expect("apply_noise stores the shadow copy");
    let mask: Vec<bool> = clean.iter().zip(&ds.labels).map(|(a, b)| a != b).collect();
    let mut audit_buf = Vec::new();
    write_noise_csv(&mut audit_buf, clean, &ds.labels, &mask)?;
    fs::write(args.out.join("noise_audit.csv"), audit_buf)?;

    let summary = NoiseSummary { n: ds.n(), realized_rate: audit.realized_rate, confusion: audit.confusion };
    fs::write(args.out.join("noise_summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Arguments of the `centersim` command.
#[derive(Debug, Clone)]
pub struct CentersimCmd {
    pub classes: usize,
    pub dim: usize,
    pub beta: f64,
    pub step: f64,
    pub iters: usize,
    pub seed: u64,
    pub stride: usize,
    pub out: PathBuf,
}

impl Default for CentersimCmd {
    fn default() -> Self {
        CentersimCmd {
            classes: 2,
            dim: 2,
            beta: 0.3,
            step: 0.01,
            iters: 20_000,
            seed: 0,
            stride: 100,
            out: PathBuf::from("out"),
        }
    }
}

/// Final state of a center relaxation, serialized as `centersim_summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CentersimSummary {
    /// `(i, j, distance)` for every pair over {origin, c1..cK}; 0 is the origin.
    pub pairwise_distances: Vec<(usize, usize, f64)>,
    pub distance_sum: f64,
    /// K(K+1)/2 * (r0 - beta).
    pub expected_distance_sum: f64,
    pub final_energy: f64,
    pub iters: usize,
    pub simplex_feasible: bool,
}

impl CentersimSummary {
    /// Human-readable distance table.
    pub fn format_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:>4} {:>4} {:>12}", "i", "j", "distance");
        for &(i, j, d) in &self.pairwise_distances {
            let _ = writeln!(out, "{:>4} {:>4} {:>12.6}", i, j, d);
        }
        let _ = writeln!(out, "sum = {:.6} (equal-distance optimum: {:.6})", self.distance_sum, self.expected_distance_sum);
        out
    }
}

/// Relaxes seeded random centers under the pair energy and writes the
/// trajectory (`trajectory.csv`) plus the final distance table.
pub fn cmd_centersim(args: &CentersimCmd) -> Result<CentersimSummary> {
    let pe = PeParams::defaults().with_beta(args.beta)?;
    let dynamics = simulate_center_dynamics(args.classes, args.dim, &pe, args.step, args.iters, args.seed, args.stride)?;
    fs::create_dir_all(&args.out)?;
    let mut buf = Vec::new();
    dynamics.write_csv(&mut buf)?;
    fs::write(args.out.join("trajectory.csv"), buf)?;

    let pairwise = dynamics.final_centers.pairwise_distances_with_origin();
    let distance_sum: f64 = pairwise.iter().map(|&(_, _, d)| d).sum();
    let k = args.classes as f64;
    let summary = CentersimSummary {
        pairwise_distances: pairwise,
        distance_sum,
        expected_distance_sum: k * (k + 1.0) / 2.0 * pe.stable_separation(),
        final_energy: dynamics.final_energy(),
        iters: args.iters,
        simplex_feasible: dynamics.simplex_feasible,
    };
    fs::write(args.out.join("centersim_summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Runs the verification battery; writes the JSON report when `out` is given.
pub fn cmd_verify(out: Option<&Path>, opts: &VerifyOptions) -> Result<VerifyReport> {
    let report = run_battery(opts)?;
    if let Some(path) = out {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        fs::write(path, report.to_json()?)?;
    }
    Ok(report)
}
