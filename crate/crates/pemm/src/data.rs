//! Dataset generation and ingestion: synthetic Gaussian blobs, the CIFAR-10
//! binary format, and plain numeric CSV.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{noise_audit, NoiseAudit, NoiseSpec};
use crate::rng::{seeded_rng, standard_normal};
use crate::tensor::Tensor;

/// Bytes per CIFAR-10 record: one label byte plus 3x32x32 planar RGB pixels.
pub const CIFAR_RECORD_BYTES: usize = 3073;
/// Pixel count per CIFAR-10 record.
pub const CIFAR_PIXELS: usize = 3072;

/// A feature matrix with integer labels and optional clean-label shadow copy
/// for noise bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Tensor,
    pub labels: Vec<usize>,
    /// Original labels, present once noise has been injected.
    pub clean_labels: Option<Vec<usize>>,
    pub k: usize,
    pub provenance: String,
}

impl LabeledDataset {
    pub fn new(features: Tensor, labels: Vec<usize>, k: usize, provenance: impl Into<String>) -> Result<Self> {
        let ds = LabeledDataset { features, labels, clean_labels: None, k, provenance: provenance.into() };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn validate(&self) -> Result<()> {
        let (rows, _) = self.features.dims2()?;
        if rows != self.labels.len() {
            return Err(Error::shape(
                "LabeledDataset",
                format!("{} feature rows vs {} labels", rows, self.labels.len()),
            ));
        }
        if let Some(clean) = &self.clean_labels {
            if clean.len() != self.labels.len() {
                return Err(Error::shape(
                    "LabeledDataset",
                    format!("{} clean labels vs {} labels", clean.len(), self.labels.len()),
                ));
            }
            if clean.iter().any(|&y| y >= self.k) {
                return Err(Error::domain("LabeledDataset", format!("clean label out of range for K={}", self.k)));
            }
        }
        if self.labels.iter().any(|&y| y >= self.k) {
            return Err(Error::domain("LabeledDataset", format!("label out of range for K={}", self.k)));
        }
        self.features.check_finite("LabeledDataset")?;
        Ok(())
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0usize; self.k];
        for &y in &self.labels {
            hist[y] += 1;
        }
        hist
    }

    /// Corrupts the labels in place, keeping the originals as the clean
    /// shadow copy, and returns the audit against them.
    pub fn apply_noise(&mut self, spec: &NoiseSpec) -> Result<NoiseAudit> {
        let (noisy, _mask) = spec.apply(&self.labels, self.k)?;
        let clean = self.labels.clone();
        let audit = noise_audit(&clean, &noisy, self.k)?;
        self.clean_labels = Some(clean);
        self.labels = noisy;
        Ok(audit)
    }
}

/// A seeded family of Gaussian blobs with shared class means, so train and
/// test splits can be drawn from the same geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub k: usize,
    pub dim: usize,
    /// Standard deviation of the class-mean draw.
    pub center_scale: f64,
    /// Isotropic standard deviation of samples around their class mean.
    pub stddev: f64,
    pub seed: u64,
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 || self.dim < 2 {
            return Err(Error::config(format!("blobs need K >= 2 and d >= 2, got K={}, d={}", self.k, self.dim)));
        }
        if !(self.stddev > 0.0) {
            return Err(Error::config(format!("blob stddev must be positive, got {}", self.stddev)));
        }
        Ok(())
    }

    /// Class means, drawn once from the seed.
    pub fn class_means(&self) -> Result<Tensor> {
        self.validate()?;
        let mut rng = seeded_rng(self.seed, "blob-means");
        let data: Vec<f64> = (0..self.k * self.dim).map(|_| self.center_scale * standard_normal(&mut rng)).collect();
        Tensor::new(vec![self.k, self.dim], data)
    }

    /// Draws `per_class` samples per class around the shared means. The
    /// purpose label separates the train and test streams.
    pub fn sample(&self, per_class: usize, purpose: &str) -> Result<LabeledDataset> {
        let means = self.class_means()?;
        let n = self.k * per_class;
        let mut rng = seeded_rng(self.seed, &format!("blob-samples/{}", purpose));
        let mut data = vec![0.0; n * self.dim];
        let mut labels = vec![0usize; n];
        for class in 0..self.k {
            let mean = means.row(class);
            for s in 0..per_class {
                let row = class * per_class + s;
                labels[row] = class;
                for t in 0..self.dim {
                    data[row * self.dim + t] = mean[t] + self.stddev * standard_normal(&mut rng);
                }
            }
        }
        LabeledDataset::new(
            Tensor::new(vec![n, self.dim], data)?,
            labels,
            self.k,
            format!("blobs(k={},d={},seed={},{})", self.k, self.dim, self.seed, purpose),
        )
    }
}

/// Seeded Gaussian blobs: class means scaled by `center_scale`, isotropic
/// samples at `stddev` around them.
pub fn make_blobs(
    k: usize,
    d: usize,
    per_class: usize,
    center_scale: f64,
    stddev: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    BlobSpec { k, dim: d, center_scale, stddev, seed }.sample(per_class, "blobs")
}

/// Parses CIFAR-10 binary files (3073-byte records: label byte then 3072
/// pixel bytes) into [0, 1]-scaled features. Files are concatenated in the
/// order given.
pub fn load_cifar10_binary(paths: &[PathBuf]) -> Result<LabeledDataset> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let bytes = std::fs::read(path)?;
        if bytes.len() % CIFAR_RECORD_BYTES != 0 {
            let offset = (bytes.len() / CIFAR_RECORD_BYTES) * CIFAR_RECORD_BYTES;
            return Err(Error::parse(
                format!("{}: byte {}", path.display(), offset),
                format!("incomplete {}-byte record ({} trailing bytes)", CIFAR_RECORD_BYTES, bytes.len() - offset),
            ));
        }
        for (record, chunk) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
            let label = chunk[0];
            if label > 9 {
                return Err(Error::parse(
                    format!("{}: byte {}", path.display(), record * CIFAR_RECORD_BYTES),
                    format!("label byte {} exceeds 9", label),
                ));
            }
            labels.push(label as usize);
            features.extend(chunk[1..].iter().map(|&b| f64::from(b) / 255.0));
        }
    }
    let n = labels.len();
    LabeledDataset::new(
        Tensor::new(vec![n, CIFAR_PIXELS], features)?,
        labels,
        10,
        format!("cifar10({} files)", paths.len()),
    )
}

/// Writes a dataset back into the CIFAR-10 binary record layout.
pub fn write_cifar10_binary(ds: &LabeledDataset, path: &Path) -> Result<()> {
    if ds.dim() != CIFAR_PIXELS {
        return Err(Error::shape(
            "write_cifar10_binary",
            format!("expected {} pixel columns, got {}", CIFAR_PIXELS, ds.dim()),
        ));
    }
    let mut bytes = Vec::with_capacity(ds.n() * CIFAR_RECORD_BYTES);
    for n in 0..ds.n() {
        if ds.labels[n] > 9 {
            return Err(Error::domain("write_cifar10_binary", format!("label {} exceeds 9", ds.labels[n])));
        }
        bytes.push(ds.labels[n] as u8);
        for &p in ds.features.row(n) {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::domain("write_cifar10_binary", format!("pixel value {} outside [0, 1]", p)));
            }
            bytes.push((p * 255.0).round() as u8);
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Loads a rectangular numeric CSV. `label_column` indexes the column holding
/// the integral class labels; the remaining columns become features.
pub fn load_csv(path: &Path, label_column: usize, k: usize) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, label_column, k, &path.display().to_string())
}

fn parse_csv(text: &str, label_column: usize, k: usize, origin: &str) -> Result<LabeledDataset> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;
    for (i, line) in text.lines().enumerate() {
        let row_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        match width {
            None => {
                if cells.len() < 2 {
                    return Err(Error::parse(
                        format!("{}: row {}", origin, row_no),
                        "need at least one feature column and one label column".to_string(),
                    ));
                }
                if label_column >= cells.len() {
                    return Err(Error::parse(
                        format!("{}: row {}", origin, row_no),
                        format!("label column {} out of range for {} columns", label_column, cells.len()),
                    ));
                }
                width = Some(cells.len());
            }
            Some(w) if cells.len() != w => {
                return Err(Error::parse(
                    format!("{}: row {}", origin, row_no),
                    format!("ragged row: {} cells, expected {}", cells.len(), w),
                ));
            }
            _ => {}
        }
        for (col, cell) in cells.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| {
                Error::parse(format!("{}: row {}", origin, row_no), format!("non-numeric cell '{}'", cell.trim()))
            })?;
            if col == label_column {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(Error::parse(
                        format!("{}: row {}", origin, row_no),
                        format!("label {} is not a non-negative integer", value),
                    ));
                }
                let label = value as usize;
                if label >= k {
                    return Err(Error::parse(
                        format!("{}: row {}", origin, row_no),
                        format!("label {} out of range for K={}", label, k),
                    ));
                }
                labels.push(label);
            } else {
                features.push(value);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::parse(origin.to_string(), "no data rows".to_string()));
    }
    let d = width.expect("rows > 0") - 1;
    LabeledDataset::new(Tensor::new(vec![rows, d], features)?, labels, k, origin.to_string())
}

/// Writes features followed by the label, one sample per row, headerless so
/// the output feeds straight back into [`load_csv`].
pub fn write_dataset_csv<W: Write>(w: &mut W, ds: &LabeledDataset) -> Result<()> {
    for n in 0..ds.n() {
        for x in ds.features.row(n) {
            write!(w, "{:.17e},", x)?;
        }
        writeln!(w, "{}", ds.labels[n])?;
    }
    Ok(())
}

/// Per-feature normalization statistics fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Shifts and scales every feature to zero mean and unit variance using
/// `stats` when given (apply train statistics to a test set) or statistics
/// fitted on `ds` otherwise. Standard deviations are floored at 1e-8, so
/// constant features map to zero.
pub fn standardize(ds: &LabeledDataset, stats: Option<&FeatureStats>) -> Result<(LabeledDataset, FeatureStats)> {
    let (n, d) = ds.features.dims2()?;
    let stats = match stats {
        Some(s) => {
            if s.mean.len() != d || s.std.len() != d {
                return Err(Error::shape(
                    "standardize",
                    format!("stats dimension {} vs features {}", s.mean.len(), d),
                ));
            }
            s.clone()
        }
        None => {
            let mut mean = vec![0.0; d];
            for i in 0..n {
                for (t, x) in ds.features.row(i).iter().enumerate() {
                    mean[t] += x;
                }
            }
            for m in mean.iter_mut() {
                *m /= n as f64;
            }
            let mut var = vec![0.0; d];
            for i in 0..n {
                for (t, x) in ds.features.row(i).iter().enumerate() {
                    var[t] += (x - mean[t]) * (x - mean[t]);
                }
            }
            let std = var.iter().map(|&v| (v / n as f64).sqrt().max(1e-8)).collect();
            FeatureStats { mean, std }
        }
    };
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        for (t, x) in ds.features.row(i).iter().enumerate() {
            data.push((x - stats.mean[t]) / stats.std[t]);
        }
    }
    let mut out = ds.clone();
    out.features = Tensor::new(vec![n, d], data)?;
    Ok((out, stats))
}

/// Draws a seeded, class-stratified subset with `per_class` samples of each
/// class, preserving the original sample order.
pub fn stratified_subset(ds: &LabeledDataset, per_class: usize, seed: u64) -> Result<LabeledDataset> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in ds.labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    let mut rng = seeded_rng(seed, "stratified-subset");
    let mut selected = Vec::with_capacity(ds.k * per_class);
    for class in 0..ds.k {
        let indices = by_class.get(&class).map(Vec::as_slice).unwrap_or(&[]);
        if indices.len() < per_class {
            return Err(Error::config(format!(
                "class {} has {} samples, need {} for the subset",
                class,
                indices.len(),
                per_class
            )));
        }
        let mut pool = indices.to_vec();
        pool.shuffle(&mut rng);
        selected.extend(pool.into_iter().take(per_class));
    }
    selected.sort_unstable();
    let d = ds.dim();
    let mut data = Vec::with_capacity(selected.len() * d);
    let mut labels = Vec::with_capacity(selected.len());
    let mut clean = ds.clean_labels.as_ref().map(|_| Vec::with_capacity(selected.len()));
    for &i in &selected {
        data.extend_from_slice(ds.features.row(i));
        labels.push(ds.labels[i]);
        if let (Some(out), Some(src)) = (clean.as_mut(), ds.clean_labels.as_ref()) {
            out.push(src[i]);
        }
    }
    let mut out = LabeledDataset::new(
        Tensor::new(vec![selected.len(), d], data)?,
        labels,
        ds.k,
        format!("{}[subset {}/class seed {}]", ds.provenance, per_class, seed),
    )?;
    out.clean_labels = clean;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_histogram_is_exactly_per_class() {
        let ds = make_blobs(4, 8, 50, 1.0, 0.5, 1).unwrap();
        assert_eq!(ds.class_histogram(), vec![50, 50, 50, 50]);
        assert_eq!(ds.n(), 200);
        assert_eq!(ds.dim(), 8);
    }

    #[test]
    fn blobs_are_deterministic_given_seed() {
        let a = make_blobs(4, 16, 100, 1.0, 0.5, 42).unwrap();
        let b = make_blobs(4, 16, 100, 1.0, 0.5, 42).unwrap();
        let c = make_blobs(4, 16, 100, 1.0, 0.5, 43).unwrap();
        assert_eq!(a.features.checksum(), b.features.checksum());
        assert_ne!(a.features.checksum(), c.features.checksum());
    }

    #[test]
    fn degenerate_spread_collapses_to_class_means() {
        let spec = BlobSpec { k: 3, dim: 4, center_scale: 1.0, stddev: 1e-300, seed: 7 };
        let ds = spec.sample(10, "train").unwrap();
        let means = spec.class_means().unwrap();
        // Nearest-mean classification is exact.
        for n in 0..ds.n() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for class in 0..3 {
                let d: f64 = ds
                    .features
                    .row(n)
                    .iter()
                    .zip(means.row(class))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d < best_d {
                    best_d = d;
                    best = class;
                }
            }
            assert_eq!(best, ds.labels[n]);
            assert!(best_d < 1e-100);
        }
    }

    #[test]
    fn train_and_test_splits_share_means_but_not_samples() {
        let spec = BlobSpec { k: 2, dim: 4, center_scale: 1.0, stddev: 0.3, seed: 5 };
        let train = spec.sample(20, "train").unwrap();
        let test = spec.sample(20, "test").unwrap();
        assert_ne!(train.features, test.features);
        // Class-0 sample clouds from both splits straddle the same mean.
        let means = spec.class_means().unwrap();
        for split in [&train, &test] {
            let mut centroid = vec![0.0; 4];
            for n in 0..20 {
                for (t, x) in split.features.row(n).iter().enumerate() {
                    centroid[t] += x / 20.0;
                }
            }
            let err: f64 = centroid
                .iter()
                .zip(means.row(0))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(err < 0.5, "centroid drifted {}", err);
        }
    }

    fn fixture_record(label: u8, first_pixel: u8) -> Vec<u8> {
        let mut rec = vec![0u8; CIFAR_RECORD_BYTES];
        rec[0] = label;
        rec[1] = first_pixel;
        for (i, b) in rec.iter_mut().enumerate().skip(2) {
            *b = (i % 251) as u8;
        }
        rec
    }

    #[test]
    fn cifar_fixture_parses_labels_and_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixture.bin");
        let mut bytes = fixture_record(3, 200);
        bytes.extend(fixture_record(7, 13));
        std::fs::write(&path, &bytes).unwrap();
        let ds = load_cifar10_binary(&[path]).unwrap();
        assert_eq!(ds.labels, vec![3, 7]);
        assert_eq!(ds.features.at(0, 0), 200.0 / 255.0);
        assert_eq!(ds.features.at(1, 0), 13.0 / 255.0);
        assert_eq!(ds.k, 10);
    }

    #[test]
    fn cifar_empty_file_is_an_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.bin");
        std::fs::write(&path, []).unwrap();
        let ds = load_cifar10_binary(&[path]).unwrap();
        assert_eq!(ds.n(), 0);
    }

    #[test]
    fn cifar_truncated_record_reports_offset_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.bin");
        std::fs::write(&path, vec![0u8; CIFAR_PIXELS]).unwrap();
        let err = load_cifar10_binary(&[path]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("byte 0"), "{}", msg);
        assert!(msg.contains("incomplete"), "{}", msg);
    }

    #[test]
    fn cifar_bad_label_reports_record_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        let mut bytes = fixture_record(1, 0);
        bytes.extend(fixture_record(11, 0));
        std::fs::write(&path, &bytes).unwrap();
        let err = load_cifar10_binary(&[path]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(&format!("byte {}", CIFAR_RECORD_BYTES)), "{}", msg);
    }

    #[test]
    fn cifar_round_trips_byte_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("orig.bin");
        let mut bytes = fixture_record(9, 255);
        bytes.extend(fixture_record(0, 1));
        bytes.extend(fixture_record(5, 128));
        std::fs::write(&path, &bytes).unwrap();
        let ds = load_cifar10_binary(&[path]).unwrap();
        let back = dir.path().join("back.bin");
        write_cifar10_binary(&ds, &back).unwrap();
        assert_eq!(std::fs::read(&back).unwrap(), bytes);
    }

    #[test]
    fn csv_fixture_shapes() {
        let ds = parse_csv("1.0,2.0,0\n3.0,4.0,1\n5.0,6.0,2\n", 2, 4, "fixture").unwrap();
        assert_eq!(ds.features.shape(), &[3, 2]);
        assert_eq!(ds.labels, vec![0, 1, 2]);
    }

    #[test]
    fn csv_label_out_of_range_names_row() {
        let err = parse_csv("1.0,2.0,0\n3.0,4.0,5\n", 2, 4, "fixture").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2"), "{}", msg);
        assert!(msg.contains("label 5"), "{}", msg);
    }

    #[test]
    fn csv_empty_file_is_an_error() {
        assert!(parse_csv("", 0, 2, "fixture").is_err());
        assert!(parse_csv("\n\n", 0, 2, "fixture").is_err());
    }

    #[test]
    fn csv_ragged_and_non_numeric_rows_name_their_row() {
        let err = parse_csv("1.0,2.0,0\n3.0,1\n", 2, 4, "fixture").unwrap_err();
        assert!(err.to_string().contains("row 2"));
        let err = parse_csv("1.0,abc,0\n", 2, 4, "fixture").unwrap_err();
        assert!(err.to_string().contains("abc"));
    }

    #[test]
    fn csv_export_round_trips() {
        let ds = make_blobs(3, 4, 5, 1.0, 0.5, 9).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &ds).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let back = parse_csv(&text, 4, 3, "roundtrip").unwrap();
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.features, ds.features);
    }

    #[test]
    fn standardize_floors_constant_features() {
        let features = Tensor::from_rows(&[vec![2.0, 1.0], vec![2.0, 3.0], vec![2.0, 5.0]]).unwrap();
        let ds = LabeledDataset::new(features, vec![0, 1, 0], 2, "const").unwrap();
        let (out, _) = standardize(&ds, None).unwrap();
        for n in 0..3 {
            assert_eq!(out.features.at(n, 0), 0.0);
        }
    }

    #[test]
    fn standardized_train_features_have_zero_mean_unit_std() {
        let ds = make_blobs(3, 6, 100, 1.0, 0.7, 13).unwrap();
        let (out, _) = standardize(&ds, None).unwrap();
        let (n, d) = out.features.dims2().unwrap();
        for t in 0..d {
            let mean: f64 = (0..n).map(|i| out.features.at(i, t)).sum::<f64>() / n as f64;
            let var: f64 = (0..n).map(|i| (out.features.at(i, t) - mean).powi(2)).sum::<f64>() / n as f64;
            assert!(mean.abs() < 1e-10, "mean {}", mean);
            assert!((var.sqrt() - 1.0).abs() < 1e-10, "std {}", var.sqrt());
        }
    }

    #[test]
    fn train_stats_applied_to_test_leave_nonzero_means() {
        let spec = BlobSpec { k: 3, dim: 6, center_scale: 1.0, stddev: 0.7, seed: 21 };
        let train = spec.sample(50, "train").unwrap();
        let test = spec.sample(50, "test").unwrap();
        let (_, stats) = standardize(&train, None).unwrap();
        let (test_std, _) = standardize(&test, Some(&stats)).unwrap();
        let (n, d) = test_std.features.dims2().unwrap();
        let mut worst: f64 = 0.0;
        for t in 0..d {
            let mean: f64 = (0..n).map(|i| test_std.features.at(i, t)).sum::<f64>() / n as f64;
            worst = worst.max(mean.abs());
        }
        assert!(worst > 1e-6, "test means suspiciously exactly zero");
    }

    #[test]
    fn standardize_rejects_mismatched_stats() {
        let ds = make_blobs(2, 4, 10, 1.0, 0.5, 3).unwrap();
        let stats = FeatureStats { mean: vec![0.0; 3], std: vec![1.0; 3] };
        assert!(standardize(&ds, Some(&stats)).is_err());
    }

    #[test]
    fn stratified_subset_is_balanced_and_deterministic() {
        let ds = make_blobs(4, 4, 100, 1.0, 0.5, 17).unwrap();
        let a = stratified_subset(&ds, 10, 23).unwrap();
        let b = stratified_subset(&ds, 10, 23).unwrap();
        assert_eq!(a.class_histogram(), vec![10, 10, 10, 10]);
        assert_eq!(a.features.checksum(), b.features.checksum());
        assert!(stratified_subset(&ds, 101, 23).is_err());
    }

    #[test]
    fn apply_noise_keeps_clean_shadow() {
        let mut ds = make_blobs(4, 4, 100, 1.0, 0.5, 19).unwrap();
        let audit = ds.apply_noise(&NoiseSpec::symmetric(0.5, 3)).unwrap();
        assert!(audit.realized_rate > 0.3);
        let clean = ds.clean_labels.as_ref().unwrap();
        let flips = clean.iter().zip(&ds.labels).filter(|(a, b)| a != b).count();
        assert_eq!(flips as f64 / ds.n() as f64, audit.realized_rate);
        ds.validate().unwrap();
    }
}
