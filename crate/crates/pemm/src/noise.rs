//! Seeded label-corruption protocols: symmetric (uniform) and asymmetric
//! (class-dependent) noise, plus audit bookkeeping.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded_rng;

/// Which corruption protocol to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Symmetric,
    Asymmetric,
}

impl NoiseKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(NoiseKind::Symmetric),
            "asymmetric" => Ok(NoiseKind::Asymmetric),
            other => Err(Error::config(format!("unknown noise kind '{}' (expected symmetric or asymmetric)", other))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseKind::Symmetric => "symmetric",
            NoiseKind::Asymmetric => "asymmetric",
        }
    }
}

/// A complete corruption request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Per-sample flip probability in [0, 1].
    pub rate: f64,
    /// Source -> target map; required for asymmetric noise.
    pub class_map: Option<BTreeMap<usize, usize>>,
    pub seed: u64,
    /// Flip exactly round(rate * eligible) samples instead of independent
    /// Bernoulli draws; for tests needing precise fractions.
    pub exact_count: bool,
}

impl NoiseSpec {
    pub fn symmetric(rate: f64, seed: u64) -> Self {
        NoiseSpec { kind: NoiseKind::Symmetric, rate, class_map: None, seed, exact_count: false }
    }

    pub fn asymmetric(class_map: BTreeMap<usize, usize>, rate: f64, seed: u64) -> Self {
        NoiseSpec { kind: NoiseKind::Asymmetric, rate, class_map: Some(class_map), seed, exact_count: false }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::config(format!("noise rate must lie in [0, 1], got {}", self.rate)));
        }
        match self.kind {
            NoiseKind::Symmetric => {
                if k < 2 {
                    return Err(Error::config(format!("symmetric noise needs K >= 2, got K={}", k)));
                }
            }
            NoiseKind::Asymmetric => {
                let map = self
                    .class_map
                    .as_ref()
                    .ok_or_else(|| Error::config("asymmetric noise needs a class map".to_string()))?;
                validate_class_map(map, k)?;
            }
        }
        Ok(())
    }

    /// Applies the spec to a label sequence.
    pub fn apply(&self, labels: &[usize], k: usize) -> Result<(Vec<usize>, Vec<bool>)> {
        self.validate(k)?;
        match self.kind {
            NoiseKind::Symmetric => {
                if self.exact_count {
                    inject_symmetric_exact(labels, k, self.rate, self.seed)
                } else {
                    inject_symmetric(labels, k, self.rate, self.seed)
                }
            }
            NoiseKind::Asymmetric => {
                let map = self.class_map.as_ref().expect("validated above");
                inject_asymmetric(labels, map, self.rate, self.seed)
            }
        }
    }
}

fn validate_class_map(map: &BTreeMap<usize, usize>, k: usize) -> Result<()> {
    if map.is_empty() {
        return Err(Error::config("asymmetric class map is empty".to_string()));
    }
    for (&src, &dst) in map {
        if src == dst {
            return Err(Error::config(format!("class map entry {} -> {} flips a class onto itself", src, dst)));
        }
        if src >= k || dst >= k {
            return Err(Error::config(format!("class map entry {} -> {} out of range for K={}", src, dst, k)));
        }
    }
    Ok(())
}

fn check_labels(labels: &[usize], k: usize, op: &str) -> Result<()> {
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::domain(op, format!("label {} at index {} out of range for K={}", y, i, k)));
        }
    }
    Ok(())
}

/// Uniform (symmetric) corruption: each sample is selected independently with
/// probability `rate`; selected labels are replaced by a uniform draw over
/// the other K-1 classes, never the original.
pub fn inject_symmetric(labels: &[usize], k: usize, rate: f64, seed: u64) -> Result<(Vec<usize>, Vec<bool>)> {
    if k < 2 {
        return Err(Error::config(format!("symmetric noise needs K >= 2, got K={}", k)));
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::config(format!("noise rate must lie in [0, 1], got {}", rate)));
    }
    check_labels(labels, k, "inject_symmetric")?;
    let mut rng = seeded_rng(seed, "noise-symmetric");
    let mut noisy = labels.to_vec();
    let mut mask = vec![false; labels.len()];
    for (i, &y) in labels.iter().enumerate() {
        if rng.random::<f64>() < rate {
            noisy[i] = flip_uniform(y, rng.random_range(0..k - 1));
            mask[i] = true;
        }
    }
    Ok((noisy, mask))
}

/// Exact-count variant: flips exactly `round(rate * N)` samples chosen by a
/// seeded shuffle.
pub fn inject_symmetric_exact(labels: &[usize], k: usize, rate: f64, seed: u64) -> Result<(Vec<usize>, Vec<bool>)> {
    if k < 2 {
        return Err(Error::config(format!("symmetric noise needs K >= 2, got K={}", k)));
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::config(format!("noise rate must lie in [0, 1], got {}", rate)));
    }
    check_labels(labels, k, "inject_symmetric_exact")?;
    let mut rng = seeded_rng(seed, "noise-symmetric-exact");
    let count = (rate * labels.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut rng);
    let mut noisy = labels.to_vec();
    let mut mask = vec![false; labels.len()];
    for &i in order.iter().take(count) {
        noisy[i] = flip_uniform(labels[i], rng.random_range(0..k - 1));
        mask[i] = true;
    }
    Ok((noisy, mask))
}

/// Maps a draw from {0..K-2} onto {0..K-1} \ {original}.
fn flip_uniform(original: usize, pick: usize) -> usize {
    if pick >= original {
        pick + 1
    } else {
        pick
    }
}

/// Class-dependent corruption: samples whose label is a map source flip to
/// the mapped target with probability `rate`; all other labels are untouched.
pub fn inject_asymmetric(
    labels: &[usize],
    class_map: &BTreeMap<usize, usize>,
    rate: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<bool>)> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::config(format!("noise rate must lie in [0, 1], got {}", rate)));
    }
    let k = 1 + labels
        .iter()
        .copied()
        .chain(class_map.keys().copied())
        .chain(class_map.values().copied())
        .max()
        .unwrap_or(0);
    validate_class_map(class_map, k)?;
    let mut rng = seeded_rng(seed, "noise-asymmetric");
    let mut noisy = labels.to_vec();
    let mut mask = vec![false; labels.len()];
    for (i, &y) in labels.iter().enumerate() {
        // One draw per sample keeps flips independent of map membership.
        let u = rng.random::<f64>();
        if let Some(&target) = class_map.get(&y) {
            if u < rate {
                noisy[i] = target;
                mask[i] = true;
            }
        }
    }
    Ok((noisy, mask))
}

/// The conventional 10-class image map: truck -> automobile, bird ->
/// airplane, deer -> horse, cat <-> dog.
pub fn cifar10_asymmetric_map() -> BTreeMap<usize, usize> {
    BTreeMap::from([(9, 1), (2, 0), (4, 7), (3, 5), (5, 3)])
}

/// Confusion counts between a clean and a corrupted label sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseAudit {
    /// `confusion[clean][noisy]` counts.
    pub confusion: Vec<Vec<usize>>,
    /// Fraction of labels that changed.
    pub realized_rate: f64,
    pub n: usize,
}

/// Counts the clean-vs-noisy confusion matrix and the realized flip rate.
pub fn noise_audit(clean: &[usize], noisy: &[usize], k: usize) -> Result<NoiseAudit> {
    if clean.len() != noisy.len() {
        return Err(Error::shape("noise_audit", format!("{} clean vs {} noisy labels", clean.len(), noisy.len())));
    }
    check_labels(clean, k, "noise_audit")?;
    check_labels(noisy, k, "noise_audit")?;
    let mut confusion = vec![vec![0usize; k]; k];
    let mut flips = 0usize;
    for (&c, &nz) in clean.iter().zip(noisy) {
        confusion[c][nz] += 1;
        if c != nz {
            flips += 1;
        }
    }
    let n = clean.len();
    let realized_rate = if n == 0 { 0.0 } else { flips as f64 / n as f64 };
    Ok(NoiseAudit { confusion, realized_rate, n })
}

/// CSV rows: index, clean_label, noisy_label, flipped.
pub fn write_noise_csv<W: Write>(w: &mut W, clean: &[usize], noisy: &[usize], mask: &[bool]) -> Result<()> {
    if clean.len() != noisy.len() || clean.len() != mask.len() {
        return Err(Error::shape(
            "write_noise_csv",
            format!("lengths differ: {} clean, {} noisy, {} mask", clean.len(), noisy.len(), mask.len()),
        ));
    }
    writeln!(w, "index,clean_label,noisy_label,flipped")?;
    for i in 0..clean.len() {
        writeln!(w, "{},{},{},{}", i, clean[i], noisy[i], u8::from(mask[i]))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced_labels(k: usize, per_class: usize) -> Vec<usize> {
        (0..k * per_class).map(|i| i % k).collect()
    }

    #[test]
    fn zero_rate_is_identity() {
        let labels = balanced_labels(4, 25);
        let (noisy, mask) = inject_symmetric(&labels, 4, 0.0, 1).unwrap();
        assert_eq!(noisy, labels);
        assert!(mask.iter().all(|&m| !m));
    }

    #[test]
    fn full_rate_never_keeps_the_original() {
        let labels = balanced_labels(4, 250);
        let (noisy, mask) = inject_symmetric(&labels, 4, 1.0, 2).unwrap();
        assert!(mask.iter().all(|&m| m));
        assert!(labels.iter().zip(&noisy).all(|(&a, &b)| a != b));
    }

    #[test]
    fn realized_rate_stays_within_binomial_bounds() {
        // 3 sigma of Binomial(1e4, 0.4) is about 0.015.
        let labels = balanced_labels(4, 2500);
        let (noisy, mask) = inject_symmetric(&labels, 4, 0.4, 3).unwrap();
        let audit = noise_audit(&labels, &noisy, 4).unwrap();
        assert!((audit.realized_rate - 0.4).abs() < 0.015, "rate {}", audit.realized_rate);
        let mask_count = mask.iter().filter(|&&m| m).count();
        assert_eq!(audit.realized_rate, mask_count as f64 / labels.len() as f64);
    }

    #[test]
    fn mask_marks_exactly_the_changed_labels() {
        let labels = balanced_labels(5, 200);
        let (noisy, mask) = inject_symmetric(&labels, 5, 0.3, 4).unwrap();
        for i in 0..labels.len() {
            assert_eq!(mask[i], labels[i] != noisy[i]);
        }
    }

    #[test]
    fn injection_is_bit_reproducible() {
        let labels = balanced_labels(6, 100);
        let a = inject_symmetric(&labels, 6, 0.37, 99).unwrap();
        let b = inject_symmetric(&labels, 6, 0.37, 99).unwrap();
        assert_eq!(a, b);
        let c = inject_symmetric(&labels, 6, 0.37, 100).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn exact_count_mode_hits_the_requested_fraction() {
        let labels = balanced_labels(4, 250);
        let (noisy, mask) = inject_symmetric_exact(&labels, 4, 0.4, 5).unwrap();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 400);
        let audit = noise_audit(&labels, &noisy, 4).unwrap();
        assert_eq!(audit.realized_rate, 0.4);
    }

    #[test]
    fn symmetric_requires_two_classes() {
        assert!(inject_symmetric(&[0, 0], 1, 0.5, 0).is_err());
    }

    #[test]
    fn flip_targets_are_uniform_over_other_classes() {
        // Chi-square against the uniform distribution over the K-1 target
        // offsets, pooled across sources. dof = 8; critical value at
        // p = 0.01 is 20.09.
        let k = 10;
        let labels = balanced_labels(k, 10_000);
        let (noisy, mask) = inject_symmetric(&labels, k, 0.5, 6).unwrap();
        let mut offset_counts = vec![0usize; k - 1];
        for i in 0..labels.len() {
            if mask[i] {
                let offset = (noisy[i] + k - labels[i]) % k;
                offset_counts[offset - 1] += 1;
            }
        }
        let total: usize = offset_counts.iter().sum();
        let expected = total as f64 / (k - 1) as f64;
        let chi2: f64 = offset_counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 20.09, "chi2 = {}", chi2);
    }

    #[test]
    fn asymmetric_deterministic_map_at_full_rate() {
        let labels = vec![0, 1, 0, 2, 0, 1];
        let map = BTreeMap::from([(0, 1)]);
        let (noisy, mask) = inject_asymmetric(&labels, &map, 1.0, 7).unwrap();
        assert_eq!(noisy, vec![1, 1, 1, 2, 1, 1]);
        assert_eq!(mask, vec![true, false, true, false, true, false]);
    }

    #[test]
    fn asymmetric_zero_rate_is_identity() {
        let labels = balanced_labels(10, 10);
        let (noisy, mask) = inject_asymmetric(&labels, &cifar10_asymmetric_map(), 0.0, 8).unwrap();
        assert_eq!(noisy, labels);
        assert!(mask.iter().all(|&m| !m));
    }

    #[test]
    fn asymmetric_per_source_rates_near_nominal() {
        let labels = balanced_labels(10, 2000);
        let map = cifar10_asymmetric_map();
        let (noisy, _) = inject_asymmetric(&labels, &map, 0.4, 9).unwrap();
        let audit = noise_audit(&labels, &noisy, 10).unwrap();
        for (&src, &dst) in &map {
            let flipped = audit.confusion[src][dst];
            let frac = flipped as f64 / 2000.0;
            assert!((frac - 0.4).abs() < 0.03, "source {} flipped at {}", src, frac);
        }
    }

    #[test]
    fn asymmetric_never_touches_unmapped_classes() {
        let labels = balanced_labels(10, 1000);
        let map = cifar10_asymmetric_map();
        let (noisy, _) = inject_asymmetric(&labels, &map, 0.9, 10).unwrap();
        for (&c, &nz) in labels.iter().zip(&noisy) {
            if !map.contains_key(&c) {
                assert_eq!(c, nz);
            }
        }
    }

    #[test]
    fn asymmetric_rejects_self_maps() {
        let map = BTreeMap::from([(3, 3)]);
        assert!(inject_asymmetric(&[0, 3], &map, 0.5, 0).is_err());
    }

    #[test]
    fn audit_identity_and_single_flip() {
        let labels = vec![0, 1, 2, 1, 0];
        let audit = noise_audit(&labels, &labels, 3).unwrap();
        assert_eq!(audit.realized_rate, 0.0);
        for (i, row) in audit.confusion.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if i != j {
                    assert_eq!(c, 0);
                }
            }
        }

        let mut one_flip = vec![0; 10];
        one_flip[0] = 1;
        let clean = vec![0; 10];
        let audit = noise_audit(&clean, &one_flip, 2).unwrap();
        assert!((audit.realized_rate - 0.1).abs() < 1e-15);
        assert_eq!(audit.confusion[0][1], 1);
        assert_eq!(audit.confusion[0][0], 9);
    }

    #[test]
    fn audit_off_diagonal_mass_splits_uniformly_at_symmetric_noise() {
        let k = 5;
        let labels = balanced_labels(k, 4000);
        let (noisy, _) = inject_symmetric(&labels, k, 0.4, 11).unwrap();
        let audit = noise_audit(&labels, &noisy, k).unwrap();
        for src in 0..k {
            let row_total: usize = (0..k).filter(|&j| j != src).map(|j| audit.confusion[src][j]).sum();
            let row_frac = row_total as f64 / 4000.0;
            assert!((row_frac - 0.4).abs() < 0.03, "row {} off-diagonal mass {}", src, row_frac);
            for j in 0..k {
                if j != src {
                    let share = audit.confusion[src][j] as f64 / row_total as f64;
                    assert!((share - 0.25).abs() < 0.06, "target share {}", share);
                }
            }
        }
    }

    #[test]
    fn audit_rejects_length_mismatch() {
        assert!(noise_audit(&[0, 1], &[0], 2).is_err());
    }

    #[test]
    fn csv_export_layout() {
        let mut buf = Vec::new();
        write_noise_csv(&mut buf, &[0, 1], &[1, 1], &[true, false]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "index,clean_label,noisy_label,flipped\n0,0,1,1\n1,1,1,0\n");
    }

    #[test]
    fn spec_validation_catches_bad_requests() {
        assert!(NoiseSpec::symmetric(1.5, 0).validate(4).is_err());
        assert!(NoiseSpec::symmetric(0.4, 0).validate(1).is_err());
        let no_map = NoiseSpec { kind: NoiseKind::Asymmetric, rate: 0.4, class_map: None, seed: 0, exact_count: false };
        assert!(no_map.validate(10).is_err());
        let preset = NoiseSpec::asymmetric(cifar10_asymmetric_map(), 0.4, 0);
        assert!(preset.validate(10).is_ok());
        assert!(preset.validate(4).is_err());
    }
}
