//! Potential-energy regularization of class centers.
//!
//! The scalar energy `E(r) = 1/r^u - xi/r^v` of a pairwise distance has a
//! single stable radius `r0` where it is minimal. Applying it to every pair
//! of class centers (plus the origin) pulls the centers toward a co-stable
//! layout in which all pairwise distances equal `r0 - beta`. The standalone
//! simulator in this module runs that relaxation on its own, without any
//! classifier attached.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded_rng, standard_normal};
use crate::tensor::{slice_distance, Tensor};

/// Search bracket for the numeric stable-radius minimization.
const RADIUS_BRACKET: (f64, f64) = (0.01, 10.0);

/// Parameters of the potential-energy curve and the center-pair offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeParams {
    u: u32,
    v: u32,
    xi: f64,
    beta: f64,
}

impl PeParams {
    /// Validates `u > v` (so the energy has a finite minimum), `xi > 0` and
    /// `0 < beta < r0`.
    pub fn new(u: u32, v: u32, xi: f64, beta: f64) -> Result<Self> {
        if u == 0 || v == 0 || u <= v {
            return Err(Error::domain(
                "PeParams::new",
                format!("need u > v >= 1, got u={}, v={}", u, v),
            ));
        }
        if !(xi > 0.0) {
            return Err(Error::domain("PeParams::new", format!("xi must be positive, got {}", xi)));
        }
        let candidate = PeParams { u, v, xi, beta };
        let r0 = candidate.stable_radius();
        if !(beta > 0.0 && beta < r0) {
            return Err(Error::domain(
                "PeParams::new",
                format!("beta must lie in (0, r0={:.6}), got {}", r0, beta),
            ));
        }
        Ok(candidate)
    }

    /// The settings used throughout: u=3, v=2, xi=2, beta=0.3.
    pub fn defaults() -> Self {
        PeParams { u: 3, v: 2, xi: 2.0, beta: 0.3 }
    }

    pub fn with_beta(self, beta: f64) -> Result<Self> {
        PeParams::new(self.u, self.v, self.xi, beta)
    }

    pub fn u(&self) -> u32 {
        self.u
    }

    pub fn v(&self) -> u32 {
        self.v
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `E(r) = 1/r^u - xi/r^v` for `r > 0`.
    pub fn energy(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::domain("pe_energy", format!("distance must be positive, got {}", r)));
        }
        Ok(1.0 / r.powi(self.u as i32) - self.xi / r.powi(self.v as i32))
    }

    /// Analytic `dE/dr`.
    pub fn energy_derivative(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::domain("pe_energy_derivative", format!("distance must be positive, got {}", r)));
        }
        let u = self.u as f64;
        let v = self.v as f64;
        Ok(-u / r.powi(self.u as i32 + 1) + self.xi * v / r.powi(self.v as i32 + 1))
    }

    fn energy_second_derivative(&self, r: f64) -> f64 {
        let u = self.u as f64;
        let v = self.v as f64;
        u * (u + 1.0) / r.powi(self.u as i32 + 2) - self.xi * v * (v + 1.0) / r.powi(self.v as i32 + 2)
    }

    /// The argmin of `E` over (0.01, 10), found by golden-section search and
    /// polished with Newton steps on the analytic derivative. Computed
    /// numerically so non-default powers stay correct.
    pub fn stable_radius(&self) -> f64 {
        let f = |r: f64| 1.0 / r.powi(self.u as i32) - self.xi / r.powi(self.v as i32);
        let mut r = golden_section_min(RADIUS_BRACKET.0, RADIUS_BRACKET.1, f);
        for _ in 0..12 {
            let d1 = self.energy_derivative(r).expect("bracket keeps r positive");
            let d2 = self.energy_second_derivative(r);
            if d2 <= 0.0 {
                break;
            }
            let next = r - d1 / d2;
            if !(next > 0.0) || (next - r).abs() < 1e-15 {
                break;
            }
            r = next;
        }
        r
    }

    /// Equilibrium distance between centers: `r0 - beta`.
    pub fn stable_separation(&self) -> f64 {
        self.stable_radius() - self.beta
    }
}

impl Default for PeParams {
    fn default() -> Self {
        PeParams::defaults()
    }
}

fn golden_section_min(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..120 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// `E(r)` of a pairwise distance.
pub fn pe_energy(r: f64, p: &PeParams) -> Result<f64> {
    p.energy(r)
}

/// Energy of one center pair: `E(||ci - cj|| + beta)`. The beta offset keeps
/// the argument positive even for coincident centers.
pub fn pe_pair_loss(ci: &[f64], cj: &[f64], p: &PeParams) -> Result<f64> {
    let d = slice_distance(ci, cj)
        .map_err(|_| Error::shape("pe_pair_loss", format!("{} vs {} dims", ci.len(), cj.len())))?;
    p.energy(d + p.beta)
}

/// Hinge-style center separation loss: `max(0, r0 - ||ci - cj||)`. Flat past
/// `r0`, unlike the potential energy which rises again.
pub fn sq_margin_loss(ci: &[f64], cj: &[f64], r0: f64) -> Result<f64> {
    let d = slice_distance(ci, cj)
        .map_err(|_| Error::shape("sq_margin_loss", format!("{} vs {} dims", ci.len(), cj.len())))?;
    Ok((r0 - d).max(0.0))
}

/// K×m matrix of learnable class centers, one row per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterMatrix {
    centers: Tensor,
}

/// Summary of all pairwise center distances, origin included.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DistanceStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub sum: f64,
}

impl CenterMatrix {
    pub fn new(centers: Tensor) -> Result<Self> {
        let (k, _) = centers.dims2()?;
        if k == 0 {
            return Err(Error::shape("CenterMatrix::new", "need at least one center".to_string()));
        }
        centers.check_finite("CenterMatrix::new")?;
        Ok(CenterMatrix { centers })
    }

    pub fn k(&self) -> usize {
        self.centers.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.centers.shape()[1]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.centers
    }

    pub fn tensor_mut(&mut self) -> &mut Tensor {
        &mut self.centers
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.centers.row(i)
    }

    /// Distances for every unordered pair over {origin, c1, ..., cK},
    /// as `(i, j, distance)` with 0 denoting the origin and i < j.
    pub fn pairwise_distances_with_origin(&self) -> Vec<(usize, usize, f64)> {
        let k = self.k();
        let m = self.dim();
        let origin = vec![0.0; m];
        let point = |i: usize| -> &[f64] {
            if i == 0 {
                &origin
            } else {
                self.row(i - 1)
            }
        };
        let mut out = Vec::with_capacity(k * (k + 1) / 2);
        for i in 0..=k {
            for j in (i + 1)..=k {
                let d = slice_distance(point(i), point(j)).expect("equal dims by construction");
                out.push((i, j, d));
            }
        }
        out
    }

    pub fn distance_stats(&self) -> DistanceStats {
        let dists: Vec<f64> = self.pairwise_distances_with_origin().iter().map(|&(_, _, d)| d).collect();
        let sum: f64 = dists.iter().sum();
        DistanceStats {
            min: dists.iter().cloned().fold(f64::INFINITY, f64::min),
            mean: sum / dists.len() as f64,
            max: dists.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            sum,
        }
    }
}

/// Total energy over all center pairs including the origin:
/// sum over i < j of `pe_pair_loss` on {0, c1, ..., cK}, K(K+1)/2 terms.
pub fn pe_center_loss(c: &CenterMatrix, p: &PeParams) -> f64 {
    pe_center_loss_with_grad(c, p).0
}

/// Value and analytic gradient of [`pe_center_loss`] with respect to the
/// center rows. The origin is fixed and carries no gradient. At coincident
/// points the distance direction is undefined; the gradient contribution is
/// taken as zero there.
pub fn pe_center_loss_with_grad(c: &CenterMatrix, p: &PeParams) -> (f64, Tensor) {
    let k = c.k();
    let m = c.dim();
    let origin = vec![0.0; m];
    let point = |i: usize| -> &[f64] {
        if i == 0 {
            &origin
        } else {
            c.row(i - 1)
        }
    };
    let mut loss = 0.0;
    let mut grad = vec![0.0; k * m];
    for i in 0..=k {
        for j in (i + 1)..=k {
            let pi = point(i);
            let pj = point(j);
            let d = slice_distance(pi, pj).expect("equal dims by construction");
            let r = d + p.beta;
            loss += p.energy(r).expect("beta > 0 keeps r positive");
            let dphi = p.energy_derivative(r).expect("beta > 0 keeps r positive");
            if d == 0.0 {
                continue;
            }
            for t in 0..m {
                let dir = (pi[t] - pj[t]) / d;
                if i > 0 {
                    grad[(i - 1) * m + t] += dphi * dir;
                }
                if j > 0 {
                    grad[(j - 1) * m + t] -= dphi * dir;
                }
            }
        }
    }
    (loss, Tensor::new(vec![k, m], grad).expect("grad sized to centers"))
}

/// Trajectory of a center-relaxation run.
#[derive(Debug, Clone)]
pub struct CenterDynamics {
    /// `(iteration, centers)` snapshots at the configured stride, final
    /// state included.
    pub snapshots: Vec<(usize, Tensor)>,
    /// Energy before each step, plus the final energy: `iters + 1` values.
    pub energies: Vec<f64>,
    pub final_centers: CenterMatrix,
    /// Whether the all-pairs-equidistant optimum is geometrically reachable
    /// (needs `m >= K`; K+1 mutually equidistant points need that many
    /// dimensions). When false the run still reports best-effort distances.
    pub simplex_feasible: bool,
}

impl CenterDynamics {
    pub fn final_energy(&self) -> f64 {
        *self.energies.last().expect("at least the initial energy")
    }

    /// CSV rows: iter, energy, then the flattened center coordinates.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        write!(w, "iter,energy")?;
        let m = self.final_centers.dim();
        for k in 0..self.final_centers.k() {
            for t in 0..m {
                write!(w, ",c{}_{}", k + 1, t)?;
            }
        }
        writeln!(w)?;
        for &(iter, ref centers) in &self.snapshots {
            write!(w, "{},{:.17e}", iter, self.energies[iter])?;
            for x in centers.data() {
                write!(w, ",{:.17e}", x)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Plain gradient descent on [`pe_center_loss`] from seeded random starting
/// positions, mirroring how the trainer updates centers. With a small enough
/// step the energy is non-increasing after an initial transient.
///
/// The run is declared divergent when the energy turns non-finite or a single
/// update moves a center by more than 100 x r0. The beta offset keeps the
/// energy itself bounded, so the displacement guard is what catches oversized
/// steps in practice.
pub fn simulate_center_dynamics(
    k: usize,
    m: usize,
    p: &PeParams,
    step: f64,
    iters: usize,
    seed: u64,
    snapshot_stride: usize,
) -> Result<CenterDynamics> {
    if k == 0 || m == 0 {
        return Err(Error::domain("simulate_center_dynamics", format!("need K >= 1 and m >= 1, got K={}, m={}", k, m)));
    }
    if !(step > 0.0) {
        return Err(Error::domain("simulate_center_dynamics", format!("step must be positive, got {}", step)));
    }
    let stride = snapshot_stride.max(1);
    let displacement_cap = 100.0 * p.stable_radius();
    let mut rng = seeded_rng(seed, "center-sim");
    let init: Vec<f64> = (0..k * m).map(|_| 0.5 * standard_normal(&mut rng)).collect();
    let mut centers = CenterMatrix::new(Tensor::new(vec![k, m], init)?)?;

    let mut energies = Vec::with_capacity(iters + 1);
    let mut snapshots = Vec::new();
    for iter in 0..iters {
        let (e, grad) = pe_center_loss_with_grad(&centers, p);
        if !e.is_finite() {
            return Err(Error::divergence(format!("iteration {}", iter), format!("energy became {}", e)));
        }
        energies.push(e);
        if iter % stride == 0 {
            snapshots.push((iter, centers.tensor().clone()));
        }
        let worst = grad.data().iter().fold(0.0f64, |acc, g| acc.max((step * g).abs()));
        if !worst.is_finite() || worst > displacement_cap {
            return Err(Error::divergence(
                format!("iteration {}", iter),
                format!("update would move a center by {:.3e} (cap {:.3e}); reduce the step", worst, displacement_cap),
            ));
        }
        let c = centers.tensor_mut().data_mut();
        for (x, g) in c.iter_mut().zip(grad.data()) {
            *x -= step * g;
        }
    }
    let (e, _) = pe_center_loss_with_grad(&centers, p);
    if !e.is_finite() {
        return Err(Error::divergence(format!("iteration {}", iters), format!("energy became {}", e)));
    }
    energies.push(e);
    snapshots.push((iters, centers.tensor().clone()));

    Ok(CenterDynamics { snapshots, energies, simplex_feasible: m >= k, final_centers: centers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn energy_at_unit_distance() {
        let p = PeParams::defaults();
        assert_relative_eq!(p.energy(1.0).unwrap(), -1.0, max_relative = 1e-15);
    }

    #[test]
    fn energy_at_stable_radius_matches_direct_evaluation() {
        let p = PeParams::defaults();
        let expected = 1.0 / (0.75f64 * 0.75 * 0.75) - 2.0 / (0.75f64 * 0.75);
        assert!((p.energy(0.75).unwrap() - expected).abs() < 1e-12);
        assert!((expected - (-1.1851851851851851)).abs() < 1e-12);
    }

    #[test]
    fn energy_rejects_nonpositive_distance() {
        let p = PeParams::defaults();
        assert!(p.energy(0.0).is_err());
        assert!(p.energy(-1.0).is_err());
    }

    #[test]
    fn stable_radius_is_three_quarters() {
        let p = PeParams::defaults();
        let r0 = p.stable_radius();
        assert!((r0 - 0.75).abs() < 1e-9, "r0 = {}", r0);
        assert!(p.energy_derivative(r0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn stable_radius_matches_closed_form_for_other_powers() {
        // dE/dr = 0  =>  r0 = (u / (xi v))^(1/(u-v))
        for &(u, v, xi) in &[(4u32, 2u32, 1.0), (5, 3, 2.5), (6, 1, 0.5)] {
            let beta_probe = 1e-3;
            let p = PeParams::new(u, v, xi, beta_probe).unwrap();
            let closed = (u as f64 / (xi * v as f64)).powf(1.0 / (u - v) as f64);
            assert!((p.stable_radius() - closed).abs() < 1e-9, "u={} v={} xi={}", u, v, xi);
        }
    }

    #[test]
    fn params_validate_inputs() {
        assert!(PeParams::new(2, 3, 2.0, 0.3).is_err()); // u <= v
        assert!(PeParams::new(3, 2, -1.0, 0.3).is_err()); // xi <= 0
        assert!(PeParams::new(3, 2, 2.0, 0.8).is_err()); // beta >= r0
        assert!(PeParams::new(3, 2, 2.0, 0.0).is_err()); // beta <= 0
        assert!(PeParams::new(3, 2, 2.0, 0.3).is_ok());
    }

    #[test]
    fn energy_monotone_around_minimum() {
        let p = PeParams::defaults();
        let mut prev = p.energy(1e-3).unwrap();
        for i in 1..=1000 {
            let r = 1e-3 + (0.75 - 1e-3) * i as f64 / 1000.0;
            let e = p.energy(r).unwrap();
            assert!(e < prev, "not decreasing at r={}", r);
            prev = e;
        }
        for i in 1..=1000 {
            let r = 0.75 + (50.0 - 0.75) * i as f64 / 1000.0;
            let e = p.energy(r).unwrap();
            assert!(e > prev, "not increasing at r={}", r);
            prev = e;
        }
    }

    #[test]
    fn energy_limits() {
        let p = PeParams::defaults();
        assert!(p.energy(0.01).unwrap() > 1e5);
        assert!(p.energy(100.0).unwrap().abs() < 1e-3);
    }

    #[test]
    fn pair_loss_at_stable_separation_is_the_minimum() {
        let p = PeParams::defaults();
        let ci = [0.45, 0.0];
        let cj = [0.0, 0.0];
        let expected = p.energy(0.75).unwrap();
        assert!((pe_pair_loss(&ci, &cj, &p).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn pair_loss_coincident_centers_repel_strongly() {
        let p = PeParams::defaults();
        let c = [0.3, -0.2, 1.0];
        let expected = 1.0 / 0.027 - 2.0 / 0.09;
        assert!((pe_pair_loss(&c, &c, &p).unwrap() - expected).abs() < 1e-10);
        assert!(expected > 14.8);
    }

    #[test]
    fn pair_loss_reduces_to_unit_energy() {
        let p = PeParams::defaults();
        let ci = [0.7, 0.0];
        let cj = [0.0, 0.0];
        assert!((pe_pair_loss(&ci, &cj, &p).unwrap() - (-1.0)).abs() < 1e-12);
    }

    #[test]
    fn pair_loss_dimension_mismatch() {
        let p = PeParams::defaults();
        assert!(pe_pair_loss(&[1.0, 2.0], &[1.0], &p).is_err());
    }

    proptest! {
        #[test]
        fn pair_loss_is_symmetric(a in proptest::collection::vec(-3.0..3.0f64, 4),
                                  b in proptest::collection::vec(-3.0..3.0f64, 4)) {
            let p = PeParams::defaults();
            prop_assert_eq!(pe_pair_loss(&a, &b, &p).unwrap(), pe_pair_loss(&b, &a, &p).unwrap());
        }
    }

    #[test]
    fn center_loss_single_center_counts_origin_pair() {
        let p = PeParams::defaults();
        let c = CenterMatrix::new(Tensor::new(vec![1, 2], vec![0.45, 0.0]).unwrap()).unwrap();
        let expected = p.energy(0.75).unwrap();
        assert!((pe_center_loss(&c, &p) - expected).abs() < 1e-12);
    }

    #[test]
    fn center_loss_equilateral_triangle_hits_three_minima() {
        let p = PeParams::defaults();
        let s = 0.45;
        let c = CenterMatrix::new(
            Tensor::new(vec![2, 2], vec![s, 0.0, s / 2.0, s * 3f64.sqrt() / 2.0]).unwrap(),
        )
        .unwrap();
        let expected = 3.0 * p.energy(0.75).unwrap();
        assert!((pe_center_loss(&c, &p) - expected).abs() < 1e-9);
    }

    /// Gram-Schmidt a seeded random square matrix into an orthogonal one.
    fn random_orthogonal(m: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = seeded_rng(seed, "ortho");
        let mut rows: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..m).map(|_| standard_normal(&mut rng)).collect())
            .collect();
        for i in 0..m {
            for j in 0..i {
                let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                for t in 0..m {
                    rows[i][t] -= dot * rows[j][t];
                }
            }
            let norm: f64 = rows[i].iter().map(|x| x * x).sum::<f64>().sqrt();
            for t in 0..m {
                rows[i][t] /= norm;
            }
        }
        rows
    }

    #[test]
    fn center_loss_invariant_under_rotation_about_origin() {
        let p = PeParams::defaults();
        let mut rng = seeded_rng(11, "centers");
        for trial in 0..10u64 {
            let m = 3;
            let k = 4;
            let data: Vec<f64> = (0..k * m).map(|_| standard_normal(&mut rng)).collect();
            let c = CenterMatrix::new(Tensor::new(vec![k, m], data.clone()).unwrap()).unwrap();
            let q = random_orthogonal(m, 100 + trial);
            let mut rotated = vec![0.0; k * m];
            for row in 0..k {
                for col in 0..m {
                    rotated[row * m + col] = (0..m).map(|t| data[row * m + t] * q[col][t]).sum();
                }
            }
            let cr = CenterMatrix::new(Tensor::new(vec![k, m], rotated).unwrap()).unwrap();
            assert!((pe_center_loss(&c, &p) - pe_center_loss(&cr, &p)).abs() < 1e-9);
        }
    }

    #[test]
    fn sq_margin_examples() {
        let r0 = 0.75;
        let a = [r0, 0.0];
        let o = [0.0, 0.0];
        assert_eq!(sq_margin_loss(&a, &o, r0).unwrap(), 0.0);
        let far = [2.0 * r0, 0.0];
        assert_eq!(sq_margin_loss(&far, &o, r0).unwrap(), 0.0);
        assert!((sq_margin_loss(&o, &o, r0).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn hinge_flat_while_pe_rises_past_r0() {
        let p = PeParams::defaults();
        let r0 = p.stable_radius();
        let minimum = p.energy(r0).unwrap();
        let mut last_margin = 0.0;
        for &d in &[r0, 1.5 * r0, 2.0 * r0] {
            let a = [d, 0.0];
            let o = [0.0, 0.0];
            assert_eq!(sq_margin_loss(&a, &o, r0).unwrap(), 0.0);
            let margin = pe_pair_loss(&a, &o, &p).unwrap() - minimum;
            assert!(margin > last_margin, "margin not increasing at d={}", d);
            last_margin = margin;
        }
    }

    fn assert_costable(dyn_result: &CenterDynamics, p: &PeParams, tol: f64) {
        let sep = p.stable_separation();
        for (i, j, d) in dyn_result.final_centers.pairwise_distances_with_origin() {
            assert!((d - sep).abs() < tol, "pair ({}, {}) at distance {}, expected {}", i, j, d, sep);
        }
    }

    #[test]
    fn dynamics_two_centers_form_equilateral_triangle_with_origin() {
        let p = PeParams::defaults();
        let dyn_result = simulate_center_dynamics(2, 2, &p, 0.01, 20_000, 42, 1000).unwrap();
        assert_costable(&dyn_result, &p, 1e-3);
        let sum: f64 = dyn_result
            .final_centers
            .pairwise_distances_with_origin()
            .iter()
            .map(|&(_, _, d)| d)
            .sum();
        assert!((sum - 1.35).abs() < 3e-3, "distance sum {}", sum);
    }

    #[test]
    fn dynamics_three_centers_form_regular_tetrahedron_with_origin() {
        let p = PeParams::defaults();
        let dyn_result = simulate_center_dynamics(3, 3, &p, 0.01, 20_000, 7, 1000).unwrap();
        assert_eq!(dyn_result.final_centers.pairwise_distances_with_origin().len(), 6);
        assert_costable(&dyn_result, &p, 1e-3);
    }

    #[test]
    fn dynamics_energy_nonincreasing_after_transient() {
        let p = PeParams::defaults();
        let dyn_result = simulate_center_dynamics(3, 3, &p, 0.005, 5000, 3, 500).unwrap();
        for t in 500..dyn_result.energies.len() - 1 {
            assert!(
                dyn_result.energies[t + 1] <= dyn_result.energies[t] + 1e-9,
                "energy rose at iteration {}",
                t
            );
        }
    }

    #[test]
    fn dynamics_diverges_with_huge_step() {
        let p = PeParams::defaults();
        let err = simulate_center_dynamics(3, 2, &p, 10.0, 2000, 5, 100).unwrap_err();
        match err {
            Error::Divergence { location, .. } => assert!(location.contains("iteration")),
            other => panic!("expected divergence, got {}", other),
        }
    }

    #[test]
    fn dynamics_low_dimension_is_best_effort_not_an_error() {
        let p = PeParams::defaults();
        let dyn_result = simulate_center_dynamics(3, 2, &p, 0.01, 5000, 9, 500).unwrap();
        assert!(!dyn_result.simplex_feasible);
        assert!(dyn_result.final_energy().is_finite());
    }

    #[test]
    fn dynamics_snapshot_csv_has_expected_header() {
        let p = PeParams::defaults();
        let dyn_result = simulate_center_dynamics(2, 2, &p, 0.01, 10, 0, 5).unwrap();
        let mut buf = Vec::new();
        dyn_result.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,energy,c1_0,c1_1,c2_0,c2_1\n"));
        assert_eq!(text.lines().count(), 1 + dyn_result.snapshots.len());
    }
}
