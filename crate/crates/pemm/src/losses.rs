//! Training losses: cross entropy, reverse cross entropy, their weighted
//! composite, the generalized-cross-entropy baseline, and assembly of the
//! per-batch total objective with its gradients.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamSet, Tape, Var};
use crate::energy::{pe_center_loss, CenterMatrix, PeParams};
use crate::error::{Error, Result};
use crate::head::{HeadConfig, Posterior};
use crate::model::{build_features, MlpArch};
use crate::tensor::Tensor;

/// Defensive floor inside logarithms. Unreachable with the exponential
/// kernel but protects refactors.
const PROB_FLOOR: f64 = 1e-30;

/// Loss hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the CE term inside the composite classifier loss.
    pub alpha: f64,
    /// Weight of the center-energy term inside the total loss.
    pub lambda: f64,
    /// Value substituted for log 0 in reverse cross entropy; negative.
    pub log_zero_value: f64,
    /// Box-Cox exponent of the GCE baseline, in (0, 1].
    pub gce_q: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { alpha: 0.1, lambda: 1.0, log_zero_value: -4.0, gce_q: 0.7 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 {
            return Err(Error::config(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        if self.lambda < 0.0 {
            return Err(Error::config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(self.log_zero_value < 0.0) {
            return Err(Error::config(format!("log_zero_value must be negative, got {}", self.log_zero_value)));
        }
        if !(self.gce_q > 0.0 && self.gce_q <= 1.0) {
            return Err(Error::config(format!("gce_q must lie in (0, 1], got {}", self.gce_q)));
        }
        Ok(())
    }
}

/// Which objective a run trains: the full composite, one of its single-term
/// baselines, or an ablation arm with one component removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// alpha*CE + RCE + lambda*PE.
    Pemm,
    /// Plain CE on the distance head.
    Ce,
    /// alpha*CE + RCE, no center energy.
    Sce,
    /// Generalized cross entropy baseline.
    Gce,
    /// CE (unit weight) + lambda*PE.
    PemmNoRce,
    /// RCE + lambda*PE.
    PemmNoCe,
    /// alpha*CE + RCE; the composite without the center energy.
    PemmNoPe,
}

impl LossKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pemm" => Ok(LossKind::Pemm),
            "ce" => Ok(LossKind::Ce),
            "sce" => Ok(LossKind::Sce),
            "gce" => Ok(LossKind::Gce),
            "pemm-no-rce" => Ok(LossKind::PemmNoRce),
            "pemm-no-ce" => Ok(LossKind::PemmNoCe),
            "pemm-no-pe" => Ok(LossKind::PemmNoPe),
            other => Err(Error::config(format!(
                "unknown loss '{}' (expected pemm, ce, sce, gce, pemm-no-rce, pemm-no-ce or pemm-no-pe)",
                other
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::Pemm => "pemm",
            LossKind::Ce => "ce",
            LossKind::Sce => "sce",
            LossKind::Gce => "gce",
            LossKind::PemmNoRce => "pemm-no-rce",
            LossKind::PemmNoCe => "pemm-no-ce",
            LossKind::PemmNoPe => "pemm-no-pe",
        }
    }

    /// Effective term weights under this kind.
    pub fn weights(&self, cfg: &LossConfig) -> LossWeights {
        match self {
            LossKind::Pemm => LossWeights { ce: cfg.alpha, rce: 1.0, gce: 0.0, pe: cfg.lambda },
            LossKind::Ce => LossWeights { ce: 1.0, rce: 0.0, gce: 0.0, pe: 0.0 },
            LossKind::Sce | LossKind::PemmNoPe => LossWeights { ce: cfg.alpha, rce: 1.0, gce: 0.0, pe: 0.0 },
            LossKind::Gce => LossWeights { ce: 0.0, rce: 0.0, gce: 1.0, pe: 0.0 },
            LossKind::PemmNoRce => LossWeights { ce: 1.0, rce: 0.0, gce: 0.0, pe: cfg.lambda },
            LossKind::PemmNoCe => LossWeights { ce: 0.0, rce: 1.0, gce: 0.0, pe: cfg.lambda },
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Multipliers actually applied to each term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub ce: f64,
    pub rce: f64,
    pub gce: f64,
    pub pe: f64,
}

/// Per-batch decomposition of the objective.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossReport {
    pub ce_term: f64,
    pub rce_term: f64,
    pub gce_term: f64,
    pub pe_term: f64,
    /// Weighted classifier loss: `ce*w.ce + rce*w.rce + gce*w.gce`.
    pub clf_total: f64,
    /// `clf_total + w.pe * pe_term`.
    pub grand_total: f64,
    pub batch_size: usize,
    pub weights: LossWeights,
}

impl LossReport {
    /// Checks the decomposition identities to 1e-12.
    pub fn validate(&self) -> Result<()> {
        let clf = self.weights.ce * self.ce_term + self.weights.rce * self.rce_term + self.weights.gce * self.gce_term;
        if (clf - self.clf_total).abs() > 1e-12 {
            return Err(Error::domain(
                "LossReport",
                format!("clf_total {} != recomposed {}", self.clf_total, clf),
            ));
        }
        let grand = self.clf_total + self.weights.pe * self.pe_term;
        if (grand - self.grand_total).abs() > 1e-12 {
            return Err(Error::domain(
                "LossReport",
                format!("grand_total {} != recomposed {}", self.grand_total, grand),
            ));
        }
        Ok(())
    }

    /// Sample-weighted average of per-batch reports; totals are recomposed
    /// from the averaged terms so the decomposition stays exact.
    pub fn aggregate(reports: &[LossReport]) -> Result<LossReport> {
        let first = reports.first().ok_or_else(|| Error::config("no reports to aggregate".to_string()))?;
        let n: usize = reports.iter().map(|r| r.batch_size).sum();
        let avg = |f: fn(&LossReport) -> f64| -> f64 {
            reports.iter().map(|r| r.batch_size as f64 * f(r)).sum::<f64>() / n as f64
        };
        let ce_term = avg(|r| r.ce_term);
        let rce_term = avg(|r| r.rce_term);
        let gce_term = avg(|r| r.gce_term);
        let pe_term = avg(|r| r.pe_term);
        let w = first.weights;
        let clf_total = w.ce * ce_term + w.rce * rce_term + w.gce * gce_term;
        Ok(LossReport {
            ce_term,
            rce_term,
            gce_term,
            pe_term,
            clf_total,
            grand_total: clf_total + w.pe * pe_term,
            batch_size: n,
            weights: w,
        })
    }
}

/// One-hot label matrix of shape B×K.
pub fn one_hot(labels: &[usize], k: usize) -> Result<Tensor> {
    let mut data = vec![0.0; labels.len() * k];
    for (n, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::domain("one_hot", format!("label {} out of range for K={}", y, k)));
        }
        data[n * k + y] = 1.0;
    }
    Tensor::new(vec![labels.len(), k], data)
}

/// Cross entropy `-sum_k q(k) log p(k)`, averaged over the batch. Accepts
/// soft label distributions; probabilities are floored at 1e-30 inside the
/// log as a defensive clamp.
pub fn ce_loss(q: &Tensor, p: &Posterior) -> Result<f64> {
    let (b, k) = p.probs().dims2()?;
    if q.shape() != [b, k] {
        return Err(Error::shape("ce_loss", format!("labels {:?} vs posterior {:?}", q.shape(), p.probs().shape())));
    }
    let mut total = 0.0;
    for n in 0..b {
        let qr = q.row(n);
        let pr = p.probs().row(n);
        let mut s = 0.0;
        for j in 0..k {
            if qr[j] != 0.0 {
                s -= qr[j] * pr[j].max(PROB_FLOOR).ln();
            }
        }
        total += s;
    }
    Ok(total / b as f64)
}

/// Cross entropy against hard labels.
pub fn ce_loss_onehot(labels: &[usize], p: &Posterior) -> Result<f64> {
    ce_loss(&one_hot(labels, p.num_classes())?, p)
}

/// Reverse cross entropy `-sum_k p(k) log q(k)` with `log 0 := a`, averaged
/// over the batch. Evaluated as the literal full sum; see
/// [`rce_loss_closed_form`] for the algebraically equal short form.
pub fn rce_loss(labels: &[usize], p: &Posterior, a: f64) -> Result<f64> {
    let (b, k) = p.probs().dims2()?;
    if labels.len() != b {
        return Err(Error::shape("rce_loss", format!("{} labels for batch of {}", labels.len(), b)));
    }
    if !(a < 0.0) {
        return Err(Error::config(format!("rce log-zero value must be negative, got {}", a)));
    }
    let mut total = 0.0;
    for (n, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::domain("rce_loss", format!("label {} out of range for K={}", y, k)));
        }
        let pr = p.probs().row(n);
        let mut s = 0.0;
        for (j, &pj) in pr.iter().enumerate() {
            // log q(j) is 0 at the labeled class (q=1) and `a` elsewhere (q=0).
            if j != y {
                s -= pj * a;
            }
        }
        total += s;
    }
    Ok(total / b as f64)
}

/// The identity `-a * (1 - p_y)` per sample, averaged over the batch.
pub fn rce_loss_closed_form(labels: &[usize], p: &Posterior, a: f64) -> Result<f64> {
    let (b, k) = p.probs().dims2()?;
    if labels.len() != b {
        return Err(Error::shape("rce_loss", format!("{} labels for batch of {}", labels.len(), b)));
    }
    let mut total = 0.0;
    for (n, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::domain("rce_loss", format!("label {} out of range for K={}", y, k)));
        }
        total += -a * (1.0 - p.probs().at(n, y));
    }
    Ok(total / b as f64)
}

/// Composite classifier loss `alpha * CE + RCE`.
pub fn clf_loss(labels: &[usize], p: &Posterior, cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(cfg.alpha * ce_loss_onehot(labels, p)? + rce_loss(labels, p, cfg.log_zero_value)?)
}

/// Generalized cross entropy `(1 - p_y^q) / q`, averaged over the batch.
pub fn gce_loss(labels: &[usize], p: &Posterior, gce_q: f64) -> Result<f64> {
    if !(gce_q > 0.0 && gce_q <= 1.0) {
        return Err(Error::config(format!("gce_q must lie in (0, 1], got {}", gce_q)));
    }
    let (b, k) = p.probs().dims2()?;
    if labels.len() != b {
        return Err(Error::shape("gce_loss", format!("{} labels for batch of {}", labels.len(), b)));
    }
    let mut total = 0.0;
    for (n, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::domain("gce_loss", format!("label {} out of range for K={}", y, k)));
        }
        total += (1.0 - p.probs().at(n, y).powf(gce_q)) / gce_q;
    }
    Ok(total / b as f64)
}

/// Everything needed to assemble the training objective for one batch.
#[derive(Debug, Clone, Copy)]
pub struct LossContext<'a> {
    pub arch: &'a MlpArch,
    pub head: &'a HeadConfig,
    pub cfg: &'a LossConfig,
    pub pe: &'a PeParams,
    pub kind: LossKind,
}

/// Tape variables of the assembled objective.
pub struct ObjectiveVars {
    pub posterior: Var,
    pub ce: Option<Var>,
    pub rce: Option<Var>,
    pub gce: Option<Var>,
    pub pe: Option<Var>,
    pub clf: Var,
    pub grand: Var,
}

/// Records the full objective on the tape: features, kernel posterior, the
/// classifier terms this kind selects, and the center-energy term. `vars`
/// must contain the network parameters and a "centers" entry.
pub fn build_objective(
    tape: &mut Tape,
    vars: &BTreeMap<String, Var>,
    x: &Tensor,
    labels: &[usize],
    k: usize,
    ctx: &LossContext<'_>,
) -> Result<ObjectiveVars> {
    ctx.cfg.validate()?;
    ctx.head.validate()?;
    let b = labels.len();
    if x.dims2()?.0 != b {
        return Err(Error::shape("build_objective", format!("{} rows of features for {} labels", x.dims2()?.0, b)));
    }
    let centers_var = *vars
        .get("centers")
        .ok_or_else(|| Error::config("objective needs a 'centers' parameter".to_string()))?;

    let xv = tape.constant(x.clone())?;
    let z = build_features(tape, vars, xv, ctx.arch, ctx.head.normalize_features)?;
    let sq = tape.pairwise_sqdist(z, centers_var)?;
    let scaled = tape.scale(sq, -1.0 / (ctx.head.sigma * ctx.head.sigma))?;
    let kernels = tape.exp(scaled)?;
    let posterior = tape.row_normalize(kernels)?;

    let w = ctx.kind.weights(ctx.cfg);

    let ce = if w.ce != 0.0 {
        let picked = tape.pick_per_row(posterior, labels)?;
        let lg = tape.log(picked)?;
        let m = tape.mean(lg)?;
        Some(tape.scale(m, -1.0)?)
    } else {
        None
    };

    let rce = if w.rce != 0.0 {
        let a = ctx.cfg.log_zero_value;
        let log_q = {
            let mut data = vec![a; b * k];
            for (n, &y) in labels.iter().enumerate() {
                if y >= k {
                    return Err(Error::domain("build_objective", format!("label {} out of range for K={}", y, k)));
                }
                data[n * k + y] = 0.0;
            }
            Tensor::new(vec![b, k], data)?
        };
        let lq = tape.constant(log_q)?;
        let prod = tape.mul(posterior, lq)?;
        let s = tape.sum(prod)?;
        Some(tape.scale(s, -1.0 / b as f64)?)
    } else {
        None
    };

    let gce = if w.gce != 0.0 {
        let picked = tape.pick_per_row(posterior, labels)?;
        let pq = tape.powf(picked, ctx.cfg.gce_q)?;
        let m = tape.mean(pq)?;
        let neg = tape.scale(m, -1.0)?;
        let shifted = tape.add_scalar(neg, 1.0)?;
        Some(tape.scale(shifted, 1.0 / ctx.cfg.gce_q)?)
    } else {
        None
    };

    let pe = if w.pe != 0.0 { Some(tape.pe_center_loss(centers_var, *ctx.pe)?) } else { None };

    let mut clf: Option<Var> = None;
    for (weight, term) in [(w.ce, ce), (w.rce, rce), (w.gce, gce)] {
        if let Some(var) = term {
            let scaled = tape.scale(var, weight)?;
            clf = Some(match clf {
                None => scaled,
                Some(acc) => tape.add(acc, scaled)?,
            });
        }
    }
    let clf = clf.ok_or_else(|| Error::config(format!("loss kind {} selects no classifier term", ctx.kind)))?;

    let grand = match pe {
        Some(pe_var) => {
            let scaled = tape.scale(pe_var, w.pe)?;
            tape.add(clf, scaled)?
        }
        None => clf,
    };

    Ok(ObjectiveVars { posterior, ce, rce, gce, pe, clf, grand })
}

/// Computes the total objective for one batch and its gradients with respect
/// to the network parameters and the centers (key "centers" in the returned
/// map). Terms a kind excludes are still evaluated for the report, at weight
/// zero.
pub fn total_loss(
    ctx: &LossContext<'_>,
    x: &Tensor,
    labels: &[usize],
    k: usize,
    params: &ParamSet,
    centers: &CenterMatrix,
) -> Result<(LossReport, BTreeMap<String, Tensor>)> {
    let mut tape = Tape::new();
    let mut vars = BTreeMap::new();
    for (name, value) in params.iter() {
        vars.insert(name.clone(), tape.param(name, value.clone())?);
    }
    vars.insert("centers".to_string(), tape.param("centers", centers.tensor().clone())?);

    let obj = build_objective(&mut tape, &vars, x, labels, k, ctx).map_err(|e| match e {
        Error::NonFinite { op, detail } => Error::non_finite(op, format!("{} (while assembling the total loss)", detail)),
        other => other,
    })?;

    let posterior = Posterior::new(tape.value(obj.posterior).clone())?;
    let w = ctx.kind.weights(ctx.cfg);
    let ce_term = match obj.ce {
        Some(var) => tape.scalar_value(var)?,
        None => ce_loss_onehot(labels, &posterior)?,
    };
    let rce_term = match obj.rce {
        Some(var) => tape.scalar_value(var)?,
        None => rce_loss(labels, &posterior, ctx.cfg.log_zero_value)?,
    };
    let gce_term = match obj.gce {
        Some(var) => tape.scalar_value(var)?,
        None => gce_loss(labels, &posterior, ctx.cfg.gce_q)?,
    };
    let pe_term = match obj.pe {
        Some(var) => tape.scalar_value(var)?,
        None => pe_center_loss(centers, ctx.pe),
    };
    let report = LossReport {
        ce_term,
        rce_term,
        gce_term,
        pe_term,
        clf_total: tape.scalar_value(obj.clf)?,
        grand_total: tape.scalar_value(obj.grand)?,
        batch_size: labels.len(),
        weights: w,
    };
    report.validate()?;

    let mut grads = tape.backward(obj.grand)?;
    for (name, tensor) in params.iter() {
        grads.entry(name.clone()).or_insert_with(|| Tensor::zeros(tensor.shape().to_vec()));
    }
    grads
        .entry("centers".to_string())
        .or_insert_with(|| Tensor::zeros(centers.tensor().shape().to_vec()));
    Ok((report, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::head::posterior;
    use crate::model::init_params;
    use crate::rng::{seeded_rng, standard_normal};

    fn posterior_from_rows(rows: &[Vec<f64>]) -> Posterior {
        Posterior::new(Tensor::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn ce_zero_on_perfect_prediction() {
        let p = posterior_from_rows(&[vec![1.0, 0.0, 0.0]]);
        assert_eq!(ce_loss_onehot(&[0], &p).unwrap(), 0.0);
    }

    #[test]
    fn ce_uniform_is_log_k() {
        let p = posterior_from_rows(&[vec![0.25; 4]]);
        let expected = 4f64.ln();
        assert!((ce_loss_onehot(&[2], &p).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 1.3862943611198906).abs() < 1e-15);
    }

    #[test]
    fn ce_of_soft_self_labels_is_entropy() {
        let probs = vec![0.5, 0.3, 0.2];
        let p = posterior_from_rows(&[probs.clone()]);
        let q = Tensor::from_rows(&[probs.clone()]).unwrap();
        let entropy: f64 = -probs.iter().map(|&x| x * x.ln()).sum::<f64>();
        assert!((ce_loss(&q, &p).unwrap() - entropy).abs() < 1e-15);
    }

    #[test]
    fn rce_zero_on_perfect_prediction() {
        let p = posterior_from_rows(&[vec![1.0, 0.0]]);
        assert_eq!(rce_loss(&[0], &p, -4.0).unwrap(), 0.0);
    }

    #[test]
    fn rce_quarter_confidence() {
        let p = posterior_from_rows(&[vec![0.25, 0.25, 0.25, 0.25]]);
        assert!((rce_loss(&[0], &p, -4.0).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rce_full_sum_equals_closed_form() {
        let mut rng = seeded_rng(41, "rce-identity");
        for _ in 0..1000 {
            let raw: Vec<f64> = (0..5).map(|_| standard_normal(&mut rng).abs() + 1e-3).collect();
            let s: f64 = raw.iter().sum();
            let p = posterior_from_rows(&[raw.iter().map(|&x| x / s).collect()]);
            let y = [2usize];
            let full = rce_loss(&y, &p, -4.0).unwrap();
            let closed = rce_loss_closed_form(&y, &p, -4.0).unwrap();
            assert!((full - closed).abs() < 1e-12, "full {} vs closed {}", full, closed);
        }
    }

    #[test]
    fn clf_composite_examples() {
        let cfg = LossConfig::default();
        let p = posterior_from_rows(&[vec![0.25; 4]]);
        // alpha = 0 reduces to RCE alone.
        let mut zero_alpha = cfg;
        zero_alpha.alpha = 0.0;
        assert_eq!(
            clf_loss(&[1], &p, &zero_alpha).unwrap(),
            rce_loss(&[1], &p, cfg.log_zero_value).unwrap()
        );
        // alpha = 0.1 on CE=ln 4 and RCE=3.
        let v = clf_loss(&[1], &p, &cfg).unwrap();
        assert!((v - (0.1 * 4f64.ln() + 3.0)).abs() < 1e-12);
        assert!((v - 3.138629436111989).abs() < 1e-12);
        // Perfect prediction zeroes both terms.
        let perfect = posterior_from_rows(&[vec![0.0, 1.0, 0.0, 0.0]]);
        assert_eq!(clf_loss(&[1], &perfect, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn clf_ce_contribution_scales_linearly_in_alpha() {
        let p = posterior_from_rows(&[vec![0.7, 0.2, 0.1]]);
        let base = LossConfig { alpha: 0.1, ..LossConfig::default() };
        let doubled = LossConfig { alpha: 0.2, ..LossConfig::default() };
        let rce = rce_loss(&[0], &p, base.log_zero_value).unwrap();
        let lo = clf_loss(&[0], &p, &base).unwrap() - rce;
        let hi = clf_loss(&[0], &p, &doubled).unwrap() - rce;
        assert_eq!(hi, 2.0 * lo);
    }

    #[test]
    fn gce_examples() {
        let perfect = posterior_from_rows(&[vec![1.0, 0.0]]);
        assert_eq!(gce_loss(&[0], &perfect, 0.7).unwrap(), 0.0);

        // q -> 1 turns the loss into 1 - p_y.
        let p = posterior_from_rows(&[vec![0.6, 0.4]]);
        assert!((gce_loss(&[0], &p, 1.0).unwrap() - 0.4).abs() < 1e-12);

        // Direct evaluation at q = 0.7, p_y = 0.5.
        let half = posterior_from_rows(&[vec![0.5, 0.5]]);
        let expected = (1.0 - 0.5f64.powf(0.7)) / 0.7;
        assert!((gce_loss(&[0], &half, 0.7).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.5491825618964884).abs() < 1e-12);
    }

    #[test]
    fn gce_stays_within_bounds() {
        let mut rng = seeded_rng(43, "gce-bounds");
        for _ in 0..200 {
            let raw: Vec<f64> = (0..4).map(|_| standard_normal(&mut rng).abs() + 1e-6).collect();
            let s: f64 = raw.iter().sum();
            let p = posterior_from_rows(&[raw.iter().map(|&x| x / s).collect()]);
            let q = 0.7;
            let v = gce_loss(&[1], &p, q).unwrap();
            assert!(v >= 0.0 && v <= 1.0 / q);
        }
    }

    #[test]
    fn losses_are_nonnegative_for_hard_labels() {
        let mut rng = seeded_rng(47, "nonneg");
        for _ in 0..200 {
            let raw: Vec<f64> = (0..3).map(|_| standard_normal(&mut rng).abs() + 1e-6).collect();
            let s: f64 = raw.iter().sum();
            let p = posterior_from_rows(&[raw.iter().map(|&x| x / s).collect()]);
            assert!(ce_loss_onehot(&[0], &p).unwrap() >= 0.0);
            assert!(rce_loss(&[0], &p, -4.0).unwrap() >= 0.0);
        }
    }

    fn small_fixture() -> (MlpArch, HeadConfig, LossConfig, PeParams, ParamSet, CenterMatrix, Tensor, Vec<usize>) {
        let arch = MlpArch::new(vec![6, 4]).unwrap();
        let head = HeadConfig::default();
        let cfg = LossConfig::default();
        let pe = PeParams::defaults();
        let params = init_params(&arch, 5, 3).unwrap();
        let mut rng = seeded_rng(3, "loss-fixture");
        let sep = pe.stable_separation();
        let centers_data: Vec<f64> = (0..3 * 4).map(|_| sep * standard_normal(&mut rng)).collect();
        let centers = CenterMatrix::new(Tensor::new(vec![3, 4], centers_data).unwrap()).unwrap();
        let x = Tensor::new(vec![8, 5], (0..40).map(|_| standard_normal(&mut rng)).collect()).unwrap();
        let labels = vec![0, 1, 2, 0, 1, 2, 0, 1];
        (arch, head, cfg, pe, params, centers, x, labels)
    }

    #[test]
    fn total_loss_report_decomposes_for_every_kind() {
        let (arch, head, cfg, pe, params, centers, x, labels) = small_fixture();
        for kind in [
            LossKind::Pemm,
            LossKind::Ce,
            LossKind::Sce,
            LossKind::Gce,
            LossKind::PemmNoRce,
            LossKind::PemmNoCe,
            LossKind::PemmNoPe,
        ] {
            let ctx = LossContext { arch: &arch, head: &head, cfg: &cfg, pe: &pe, kind };
            let (report, grads) = total_loss(&ctx, &x, &labels, 3, &params, &centers).unwrap();
            report.validate().unwrap();
            assert_eq!(report.batch_size, labels.len());
            assert!(grads.contains_key("centers"));
            assert!(grads.contains_key("w0"));
        }
    }

    #[test]
    fn total_loss_with_zero_lambda_is_classifier_only() {
        let (arch, head, mut cfg, pe, params, centers, x, labels) = small_fixture();
        cfg.lambda = 0.0;
        let ctx = LossContext { arch: &arch, head: &head, cfg: &cfg, pe: &pe, kind: LossKind::Pemm };
        let (report, _) = total_loss(&ctx, &x, &labels, 3, &params, &centers).unwrap();
        assert_eq!(report.grand_total, report.clf_total);
    }

    #[test]
    fn pe_term_at_costable_optimum_hits_pair_count_times_minimum() {
        let (arch, head, cfg, pe, params, _, x, labels) = small_fixture();
        // Two centers forming an equilateral triangle with the origin at the
        // stable separation: all three pairs sit at the energy minimum.
        let s = pe.stable_separation();
        let centers = CenterMatrix::new(
            Tensor::new(vec![2, 4], vec![s, 0.0, 0.0, 0.0, s / 2.0, s * 3f64.sqrt() / 2.0, 0.0, 0.0]).unwrap(),
        )
        .unwrap();
        let labels: Vec<usize> = labels.iter().map(|&y| y % 2).collect();
        let ctx = LossContext { arch: &arch, head: &head, cfg: &cfg, pe: &pe, kind: LossKind::Pemm };
        let (report, _) = total_loss(&ctx, &x, &labels, 2, &params, &centers).unwrap();
        let expected = 3.0 * pe.energy(pe.stable_radius()).unwrap();
        assert!((report.pe_term - expected).abs() < 1e-9, "pe_term {}", report.pe_term);
    }

    #[test]
    fn total_loss_gradients_match_finite_differences() {
        use crate::autodiff::check_graph;
        let (arch, head, cfg, pe, params, centers, x, labels) = small_fixture();
        let mut all = params.clone();
        all.insert("centers", centers.tensor().clone());
        let ctx_arch = arch.clone();
        let report = check_graph(
            &all,
            move |tape, vars| {
                let ctx = LossContext {
                    arch: &ctx_arch,
                    head: &head,
                    cfg: &cfg,
                    pe: &pe,
                    kind: LossKind::Pemm,
                };
                Ok(build_objective(tape, vars, &x, &labels, 3, &ctx)?.grand)
            },
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed, "max rel err {} ({:?})", report.max_rel_err, report.failures);
    }

    #[test]
    fn kernel_posterior_path_matches_head_functions() {
        use crate::head::kernel_distances;
        use crate::model::forward_features;
        let (arch, head, cfg, pe, params, centers, x, labels) = small_fixture();
        let ctx = LossContext { arch: &arch, head: &head, cfg: &cfg, pe: &pe, kind: LossKind::Pemm };

        let mut tape = Tape::new();
        let mut vars = BTreeMap::new();
        for (name, value) in params.iter() {
            vars.insert(name.clone(), tape.param(name, value.clone()).unwrap());
        }
        vars.insert("centers".to_string(), tape.param("centers", centers.tensor().clone()).unwrap());
        let obj = build_objective(&mut tape, &vars, &x, &labels, 3, &ctx).unwrap();

        let z = forward_features(&params, &arch, &x, head.normalize_features).unwrap();
        let plain = posterior(&kernel_distances(&z, &centers, &head).unwrap()).unwrap();
        assert_eq!(tape.value(obj.posterior), plain.probs());
    }

    #[test]
    fn loss_kind_round_trips_through_strings() {
        for kind in [
            LossKind::Pemm,
            LossKind::Ce,
            LossKind::Sce,
            LossKind::Gce,
            LossKind::PemmNoRce,
            LossKind::PemmNoCe,
            LossKind::PemmNoPe,
        ] {
            assert_eq!(LossKind::parse(kind.as_str()).unwrap(), kind);
        }
        assert!(LossKind::parse("mse").is_err());
    }

    #[test]
    fn loss_config_validation() {
        assert!(LossConfig { alpha: -0.1, ..LossConfig::default() }.validate().is_err());
        assert!(LossConfig { lambda: -1.0, ..LossConfig::default() }.validate().is_err());
        assert!(LossConfig { log_zero_value: 0.0, ..LossConfig::default() }.validate().is_err());
        assert!(LossConfig { gce_q: 1.5, ..LossConfig::default() }.validate().is_err());
        assert!(LossConfig::default().validate().is_ok());
    }
}
