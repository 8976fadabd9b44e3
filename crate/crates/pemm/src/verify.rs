//! Built-in verification battery: stable-radius minimization, gradient
//! checks for every loss term, the posterior contract, and the reverse
//! cross-entropy identity. Backs the `verify` command.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::autodiff::{evaluate_graph, finite_diff_check_coords, forward_backward, ParamSet, Tape, Var};
use crate::energy::{CenterMatrix, PeParams};
use crate::error::Result;
use crate::head::{kernel_distances, posterior, predict, HeadConfig, Posterior};
use crate::losses::{
    build_objective, rce_loss, rce_loss_closed_form, LossConfig, LossContext, LossKind, ObjectiveVars,
};
use crate::model::{init_params, MlpArch};
use crate::rng::{seeded_rng, standard_normal};
use crate::tensor::Tensor;

/// One line of the verification table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// The quantity compared against the tolerance (an error magnitude or a
    /// violation count).
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

/// Outcome of the whole battery.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub all_passed: bool,
}

impl VerifyReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Fixed-width pass/fail table for terminal output.
    pub fn format_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<28} {:>10} {:>10}  {}", "check", "measured", "tolerance", "result");
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<28} {:>10.3e} {:>10.1e}  {}",
                c.name,
                c.measured,
                c.tolerance,
                if c.passed { "pass" } else { "FAIL" }
            );
        }
        let _ = writeln!(out, "overall: {}", if self.all_passed { "pass" } else { "FAIL" });
        out
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Knobs for the battery; `perturb_gradient` injects a deliberate analytic
/// gradient error so tests can exercise the failure path.
#[derive(Debug, Clone, Copy, Default)]
pub struct VerifyOptions {
    pub perturb_gradient: bool,
}

struct Battery {
    checks: Vec<CheckResult>,
}

impl Battery {
    fn record(&mut self, name: &str, measured: f64, tolerance: f64, detail: String) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            passed: measured.is_finite() && measured <= tolerance,
            measured,
            tolerance,
            detail,
        });
    }
}

/// Runs every check and returns the collected report.
pub fn run_battery(opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut battery = Battery { checks: Vec::new() };
    check_stable_radius(&mut battery)?;
    check_gradients(&mut battery, opts)?;
    check_posterior_contract(&mut battery)?;
    check_rce_identity(&mut battery)?;
    let all_passed = battery.checks.iter().all(|c| c.passed);
    Ok(VerifyReport { checks: battery.checks, all_passed })
}

fn check_stable_radius(battery: &mut Battery) -> Result<()> {
    let p = PeParams::defaults();
    let r0 = p.stable_radius();
    battery.record(
        "stable_radius",
        (r0 - 0.75).abs(),
        1e-6,
        format!("1-D minimization over (0.01, 10) returned r0 = {:.9}", r0),
    );
    let derivative = p.energy_derivative(0.75)?.abs();
    battery.record(
        "stable_radius_derivative",
        derivative,
        1e-9,
        "analytic dE/dr evaluated at 0.75".to_string(),
    );
    Ok(())
}

/// Small fixed model used by the gradient checks.
fn gradient_fixture() -> Result<(ParamSet, MlpArch, Tensor, Vec<usize>)> {
    let arch = MlpArch::new(vec![6, 4])?;
    let mut params = init_params(&arch, 5, 2024)?;
    let mut rng = seeded_rng(2024, "verify-fixture");
    let centers: Vec<f64> = (0..3 * 4).map(|_| 0.45 * standard_normal(&mut rng)).collect();
    params.insert("centers", Tensor::new(vec![3, 4], centers)?);
    let x = Tensor::new(vec![8, 5], (0..40).map(|_| standard_normal(&mut rng)).collect())?;
    let labels = vec![0, 1, 2, 0, 1, 2, 0, 1];
    Ok((params, arch, x, labels))
}

fn objective_for(tape: &mut Tape, vars: &BTreeMap<String, Var>, arch: &MlpArch, x: &Tensor, labels: &[usize]) -> Result<ObjectiveVars> {
    let head = HeadConfig::default();
    let cfg = LossConfig::default();
    let pe = PeParams::defaults();
    let ctx = LossContext { arch, head: &head, cfg: &cfg, pe: &pe, kind: LossKind::Pemm };
    build_objective(tape, vars, x, labels, 3, &ctx)
}

fn check_gradients(battery: &mut Battery, opts: &VerifyOptions) -> Result<()> {
    let (params, arch, x, labels) = gradient_fixture()?;

    // 20 seeded random parameter coordinates per loss term.
    let coords_pool = params.coordinates();
    let mut rng = seeded_rng(2024, "verify-coords");
    let mut pick_coords = || -> Vec<(String, usize)> {
        use rand::Rng;
        (0..20).map(|_| coords_pool[rng.random_range(0..coords_pool.len())].clone()).collect()
    };

    type Pick = fn(&ObjectiveVars) -> Var;
    let losses: [(&str, Pick); 5] = [
        ("grad_ce", |o| o.ce.expect("built under pemm weights")),
        ("grad_rce", |o| o.rce.expect("built under pemm weights")),
        ("grad_clf", |o| o.clf),
        ("grad_pe", |o| o.pe.expect("built under pemm weights")),
        ("grad_total", |o| o.grand),
    ];
    for (name, pick) in losses {
        let build = |tape: &mut Tape, vars: &BTreeMap<String, Var>| -> Result<Var> {
            let obj = objective_for(tape, vars, &arch, &x, &labels)?;
            Ok(pick(&obj))
        };
        let (_, mut analytic) = forward_backward(&params, build)?;
        let mut coords = pick_coords();
        if opts.perturb_gradient && name == "grad_total" {
            let w0 = analytic.get_mut("w0").expect("fixture has w0");
            w0.data_mut()[0] += 1e-2;
            coords[0] = ("w0".to_string(), 0);
        }
        let report =
            finite_diff_check_coords(|p| evaluate_graph(p, build), &params, &analytic, &coords, 1e-5, 1e-4)?;
        battery.record(
            name,
            report.max_rel_err,
            1e-4,
            format!("central differences at h=1e-5 over {} sampled coordinates", report.coords_checked),
        );
    }
    Ok(())
}

fn check_posterior_contract(battery: &mut Battery) -> Result<()> {
    let cfg = HeadConfig::default();
    let mut rng = seeded_rng(55, "verify-posterior");
    let k = 6;
    let m = 5;
    let rows_per_trial = 100;
    let trials = 100;
    let mut worst_sum_dev = 0.0f64;
    let mut mismatches = 0usize;
    let mut total_rows = 0usize;
    for _ in 0..trials {
        let c_data: Vec<f64> = (0..k * m).map(|_| standard_normal(&mut rng)).collect();
        let centers = CenterMatrix::new(Tensor::new(vec![k, m], c_data)?)?;
        let z_data: Vec<f64> = (0..rows_per_trial * m).map(|_| standard_normal(&mut rng)).collect();
        let z = Tensor::new(vec![rows_per_trial, m], z_data)?;
        let kernels = kernel_distances(&z, &centers, &cfg)?;
        let post = posterior(&kernels)?;
        for n in 0..rows_per_trial {
            let s: f64 = post.probs().row(n).iter().sum();
            worst_sum_dev = worst_sum_dev.max((s - 1.0).abs());
        }
        let preds = predict(&z, &centers, &cfg)?;
        for n in 0..rows_per_trial {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for j in 0..k {
                let d: f64 = z.row(n).iter().zip(centers.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            if preds[n] != best {
                mismatches += 1;
            }
        }
        total_rows += rows_per_trial;
    }
    battery.record(
        "posterior_normalization",
        worst_sum_dev,
        1e-12,
        format!("max |row sum - 1| over {} rows", total_rows),
    );
    battery.record(
        "predict_nearest_center",
        mismatches as f64,
        0.0,
        format!("argmax-posterior vs brute-force nearest-center scan over {} rows", total_rows),
    );
    Ok(())
}

fn check_rce_identity(battery: &mut Battery) -> Result<()> {
    let mut rng = seeded_rng(56, "verify-rce");
    use rand::Rng;
    let mut worst = 0.0f64;
    let trials = 10_000;
    for _ in 0..trials {
        let k = 5;
        let raw: Vec<f64> = (0..k).map(|_| standard_normal(&mut rng).abs() + 1e-6).collect();
        let s: f64 = raw.iter().sum();
        let probs = Tensor::new(vec![1, k], raw.iter().map(|&x| x / s).collect())?;
        let p = Posterior::new(probs)?;
        let y = [rng.random_range(0..k)];
        let full = rce_loss(&y, &p, -4.0)?;
        let closed = rce_loss_closed_form(&y, &p, -4.0)?;
        worst = worst.max((full - closed).abs());
    }
    battery.record(
        "rce_identity",
        worst,
        1e-12,
        format!("max |full sum - closed form| over {} random posteriors (A = -4)", trials),
    );
    Ok(())
}
