//! Recorded-tape reverse-mode differentiation over [`Tensor`] values.
//!
//! The tape supports exactly the primitives the training objective composes:
//! matrix multiply, bias add, ReLU, elementwise exp/log/power, L2 row
//! normalization, row normalization by sum, squared pairwise distances,
//! per-row picks, sum/mean reductions, and the center-pair energy. Every
//! primitive's gradient is checked against central finite differences.

use std::collections::BTreeMap;

use crate::energy::{pe_center_loss_with_grad, CenterMatrix, PeParams};
use crate::error::{Error, Result};
use crate::tensor::{self, Tensor, NORM_EPS};

/// Named parameters with matching gradient accumulators.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: BTreeMap<String, Tensor>,
    grads: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        self.grads.insert(name.to_string(), Tensor::zeros(value.shape().to_vec()));
        self.params.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    /// Iterates parameters in deterministic (sorted-name) order.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn names(&self) -> Vec<String> {
        self.params.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Zeroes every gradient accumulator; called at the start of each step.
    pub fn zero_grads(&mut self) {
        for (name, g) in self.grads.iter_mut() {
            let shape = self.params[name].shape().to_vec();
            *g = Tensor::zeros(shape);
        }
    }

    /// Adds `delta` into the accumulator for `name`, enforcing equal shapes.
    pub fn accumulate_grad(&mut self, name: &str, delta: &Tensor) -> Result<()> {
        let param = self
            .params
            .get(name)
            .ok_or_else(|| Error::config(format!("unknown parameter '{}'", name)))?;
        if param.shape() != delta.shape() {
            return Err(Error::shape(
                "ParamSet::accumulate_grad",
                format!("parameter '{}' is {:?}, gradient is {:?}", name, param.shape(), delta.shape()),
            ));
        }
        let g = self.grads.get_mut(name).expect("grads mirror params");
        *g = tensor::add(g, delta)?;
        Ok(())
    }

    /// Every `(name, flat index)` coordinate, in deterministic order.
    pub fn coordinates(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        for (name, t) in &self.params {
            for i in 0..t.len() {
                out.push((name.clone(), i));
            }
        }
        out
    }

    pub fn num_coordinates(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0x811c9dc5;
        for (name, t) in &self.params {
            for &b in name.as_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x100000001b3);
            }
            h ^= t.checksum();
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}

#[derive(Debug, Clone)]
enum Op {
    Param(String),
    Const,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MatMul(usize, usize),
    BiasAdd(usize, usize),
    Relu(usize),
    Exp(usize),
    Log(usize),
    Powf(usize, f64),
    Scale(usize, f64),
    AddScalar(usize),
    RowL2Normalize(usize),
    RowNormalize(usize),
    PairwiseSqdist(usize, usize),
    Sum(usize),
    Mean(usize),
    PickPerRow(usize, Vec<usize>),
    PeCenterLoss(usize, PeParams),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Param(_) => "param",
            Op::Const => "const",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::MatMul(..) => "matmul",
            Op::BiasAdd(..) => "bias_add",
            Op::Relu(_) => "relu",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Powf(..) => "powf",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::RowL2Normalize(_) => "row_l2_normalize",
            Op::RowNormalize(_) => "row_normalize",
            Op::PairwiseSqdist(..) => "pairwise_sqdist",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::PickPerRow(..) => "pick_per_row",
            Op::PeCenterLoss(..) => "pe_center_loss",
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Forward-pass recorder; replayed in reverse for exact gradients.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> Result<f64> {
        self.nodes[v.0].value.scalar_value()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Result<Var> {
        let idx = self.nodes.len();
        value.check_finite(&format!("{}@node{}", op.name(), idx))?;
        self.nodes.push(Node { op, value });
        Ok(Var(idx))
    }

    pub fn param(&mut self, name: &str, value: Tensor) -> Result<Var> {
        self.push(Op::Param(name.to_string()), value)
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(Op::Const, value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = tensor::add(&self.nodes[a.0].value, &self.nodes[b.0].value)?;
        self.push(Op::Add(a.0, b.0), value)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = tensor::sub(&self.nodes[a.0].value, &self.nodes[b.0].value)?;
        self.push(Op::Sub(a.0, b.0), value)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = tensor::mul(&self.nodes[a.0].value, &self.nodes[b.0].value)?;
        self.push(Op::Mul(a.0, b.0), value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = tensor::matmul(&self.nodes[a.0].value, &self.nodes[b.0].value)?;
        self.push(Op::MatMul(a.0, b.0), value)
    }

    pub fn bias_add(&mut self, a: Var, bias: Var) -> Result<Var> {
        let value = tensor::bias_add(&self.nodes[a.0].value, &self.nodes[bias.0].value)?;
        self.push(Op::BiasAdd(a.0, bias.0), value)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = tensor::relu(&self.nodes[a.0].value);
        self.push(Op::Relu(a.0), value)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let value = tensor::exp(&self.nodes[a.0].value);
        self.push(Op::Exp(a.0), value)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let value = tensor::ln(&self.nodes[a.0].value);
        self.push(Op::Log(a.0), value)
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Result<Var> {
        let value = tensor::powf(&self.nodes[a.0].value, p);
        self.push(Op::Powf(a.0, p), value)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let value = tensor::scale(&self.nodes[a.0].value, s);
        self.push(Op::Scale(a.0, s), value)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        let value = tensor::add_scalar(&self.nodes[a.0].value, s);
        self.push(Op::AddScalar(a.0), value)
    }

    pub fn row_l2_normalize(&mut self, a: Var) -> Result<Var> {
        let value = tensor::row_l2_normalize(&self.nodes[a.0].value)?;
        self.push(Op::RowL2Normalize(a.0), value)
    }

    pub fn row_normalize(&mut self, a: Var) -> Result<Var> {
        let value = tensor::row_normalize(&self.nodes[a.0].value)?;
        self.push(Op::RowNormalize(a.0), value)
    }

    pub fn pairwise_sqdist(&mut self, z: Var, c: Var) -> Result<Var> {
        let value = tensor::pairwise_sqdist(&self.nodes[z.0].value, &self.nodes[c.0].value)?;
        self.push(Op::PairwiseSqdist(z.0, c.0), value)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(tensor::sum(&self.nodes[a.0].value));
        self.push(Op::Sum(a.0), value)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(tensor::mean(&self.nodes[a.0].value));
        self.push(Op::Mean(a.0), value)
    }

    pub fn pick_per_row(&mut self, a: Var, labels: &[usize]) -> Result<Var> {
        let value = tensor::pick_per_row(&self.nodes[a.0].value, labels)?;
        self.push(Op::PickPerRow(a.0, labels.to_vec()), value)
    }

    pub fn pe_center_loss(&mut self, centers: Var, p: PeParams) -> Result<Var> {
        let matrix = CenterMatrix::new(self.nodes[centers.0].value.clone())?;
        let (loss, _) = pe_center_loss_with_grad(&matrix, &p);
        self.push(Op::PeCenterLoss(centers.0, p), Tensor::scalar(loss))
    }

    /// Reverse pass from a scalar output. Returns the gradient for every
    /// parameter node reached by the sweep.
    pub fn backward(&self, output: Var) -> Result<BTreeMap<String, Tensor>> {
        if !self.nodes[output.0].value.is_scalar() {
            return Err(Error::shape(
                "Tape::backward",
                format!("output must be scalar, got shape {:?}", self.nodes[output.0].value.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let location = format!("{}@node{}", node.op.name(), idx);
            g.check_finite(&format!("gradient of {}", location))?;
            match &node.op {
                Op::Param(_) | Op::Const => {
                    grads[idx] = Some(g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g)?;
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, tensor::scale(&g, -1.0))?;
                }
                Op::Mul(a, b) => {
                    let ga = tensor::mul(&g, &self.nodes[*b].value)?;
                    let gb = tensor::mul(&g, &self.nodes[*a].value)?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::MatMul(a, b) => {
                    let bt = self.nodes[*b].value.transpose()?;
                    let at = self.nodes[*a].value.transpose()?;
                    accumulate(&mut grads, *a, tensor::matmul(&g, &bt)?)?;
                    accumulate(&mut grads, *b, tensor::matmul(&at, &g)?)?;
                }
                Op::BiasAdd(a, bias) => {
                    let (r, c) = g.dims2()?;
                    let mut col_sums = vec![0.0; c];
                    for i in 0..r {
                        for j in 0..c {
                            col_sums[j] += g.data()[i * c + j];
                        }
                    }
                    accumulate(&mut grads, *a, g)?;
                    accumulate(&mut grads, *bias, Tensor::new(vec![c], col_sums)?)?;
                }
                Op::Relu(a) => {
                    let input = &self.nodes[*a].value;
                    let data = g
                        .data()
                        .iter()
                        .zip(input.data())
                        .map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *a, Tensor::new(input.shape().to_vec(), data)?)?;
                }
                Op::Exp(a) => {
                    accumulate(&mut grads, *a, tensor::mul(&g, &node.value)?)?;
                }
                Op::Log(a) => {
                    let input = &self.nodes[*a].value;
                    let data = g.data().iter().zip(input.data()).map(|(&gi, &xi)| gi / xi).collect();
                    accumulate(&mut grads, *a, Tensor::new(input.shape().to_vec(), data)?)?;
                }
                Op::Powf(a, p) => {
                    let input = &self.nodes[*a].value;
                    let data = g
                        .data()
                        .iter()
                        .zip(input.data())
                        .map(|(&gi, &xi)| gi * p * xi.powf(p - 1.0))
                        .collect();
                    accumulate(&mut grads, *a, Tensor::new(input.shape().to_vec(), data)?)?;
                }
                Op::Scale(a, s) => {
                    accumulate(&mut grads, *a, tensor::scale(&g, *s))?;
                }
                Op::AddScalar(a) => {
                    accumulate(&mut grads, *a, g)?;
                }
                Op::RowL2Normalize(a) => {
                    let input = &self.nodes[*a].value;
                    let (r, c) = input.dims2()?;
                    let mut out = vec![0.0; r * c];
                    for i in 0..r {
                        let x = &input.data()[i * c..(i + 1) * c];
                        let gr = &g.data()[i * c..(i + 1) * c];
                        let sq: f64 = x.iter().map(|t| t * t).sum();
                        let n = (sq + NORM_EPS).sqrt();
                        let dot: f64 = x.iter().zip(gr).map(|(xt, gt)| xt * gt).sum();
                        for j in 0..c {
                            out[i * c + j] = gr[j] / n - x[j] * dot / (n * n * n);
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::new(vec![r, c], out)?)?;
                }
                Op::RowNormalize(a) => {
                    let input = &self.nodes[*a].value;
                    let (r, c) = input.dims2()?;
                    let mut out = vec![0.0; r * c];
                    for i in 0..r {
                        let x = &input.data()[i * c..(i + 1) * c];
                        let y = &node.value.data()[i * c..(i + 1) * c];
                        let gr = &g.data()[i * c..(i + 1) * c];
                        let s: f64 = x.iter().sum();
                        let dot: f64 = y.iter().zip(gr).map(|(yt, gt)| yt * gt).sum();
                        for j in 0..c {
                            out[i * c + j] = (gr[j] - dot) / s;
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::new(vec![r, c], out)?)?;
                }
                Op::PairwiseSqdist(z, c) => {
                    let zv = &self.nodes[*z].value;
                    let cv = &self.nodes[*c].value;
                    let (b, m) = zv.dims2()?;
                    let (k, _) = cv.dims2()?;
                    let mut gz = vec![0.0; b * m];
                    let mut gc = vec![0.0; k * m];
                    for n in 0..b {
                        let zr = &zv.data()[n * m..(n + 1) * m];
                        for j in 0..k {
                            let gnk = g.data()[n * k + j];
                            if gnk == 0.0 {
                                continue;
                            }
                            let cr = &cv.data()[j * m..(j + 1) * m];
                            for t in 0..m {
                                let diff = 2.0 * gnk * (zr[t] - cr[t]);
                                gz[n * m + t] += diff;
                                gc[j * m + t] -= diff;
                            }
                        }
                    }
                    accumulate(&mut grads, *z, Tensor::new(vec![b, m], gz)?)?;
                    accumulate(&mut grads, *c, Tensor::new(vec![k, m], gc)?)?;
                }
                Op::Sum(a) => {
                    let s = g.scalar_value()?;
                    let input = &self.nodes[*a].value;
                    accumulate(&mut grads, *a, Tensor::new(input.shape().to_vec(), vec![s; input.len()])?)?;
                }
                Op::Mean(a) => {
                    let s = g.scalar_value()?;
                    let input = &self.nodes[*a].value;
                    let per = s / input.len() as f64;
                    accumulate(&mut grads, *a, Tensor::new(input.shape().to_vec(), vec![per; input.len()])?)?;
                }
                Op::PickPerRow(a, labels) => {
                    let input = &self.nodes[*a].value;
                    let (r, c) = input.dims2()?;
                    let mut out = vec![0.0; r * c];
                    for (n, &y) in labels.iter().enumerate() {
                        out[n * c + y] = g.data()[n];
                    }
                    accumulate(&mut grads, *a, Tensor::new(vec![r, c], out)?)?;
                }
                Op::PeCenterLoss(c, params) => {
                    let matrix = CenterMatrix::new(self.nodes[*c].value.clone())?;
                    let (_, grad) = pe_center_loss_with_grad(&matrix, params);
                    accumulate(&mut grads, *c, tensor::scale(&grad, g.scalar_value()?))?;
                }
            }
        }

        let mut out = BTreeMap::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Param(name) = &node.op {
                let g = grads[idx].take().unwrap_or_else(|| Tensor::zeros(node.value.shape().to_vec()));
                match out.remove(name) {
                    None => {
                        out.insert(name.clone(), g);
                    }
                    Some(existing) => {
                        out.insert(name.clone(), tensor::add(&existing, &g)?);
                    }
                }
            }
        }
        Ok(out)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], idx: usize, delta: Tensor) -> Result<()> {
    match grads[idx].take() {
        None => grads[idx] = Some(delta),
        Some(existing) => grads[idx] = Some(tensor::add(&existing, &delta)?),
    }
    Ok(())
}

/// Runs a graph builder over `params`, then the reverse pass from its scalar
/// output. Returns the output value and a gradient for every parameter
/// (zeros for parameters the graph never touched).
pub fn forward_backward<F>(params: &ParamSet, build: F) -> Result<(Tensor, BTreeMap<String, Tensor>)>
where
    F: Fn(&mut Tape, &BTreeMap<String, Var>) -> Result<Var>,
{
    let mut tape = Tape::new();
    let mut vars = BTreeMap::new();
    for (name, value) in params.iter() {
        vars.insert(name.clone(), tape.param(name, value.clone())?);
    }
    let out = build(&mut tape, &vars)?;
    let value = tape.value(out).clone();
    let mut grads = tape.backward(out)?;
    for (name, tensor) in params.iter() {
        grads.entry(name.clone()).or_insert_with(|| Tensor::zeros(tensor.shape().to_vec()));
    }
    Ok((value, grads))
}

/// Runs the builder forward-only and returns the scalar output.
pub fn evaluate_graph<F>(params: &ParamSet, build: F) -> Result<f64>
where
    F: Fn(&mut Tape, &BTreeMap<String, Var>) -> Result<Var>,
{
    let mut tape = Tape::new();
    let mut vars = BTreeMap::new();
    for (name, value) in params.iter() {
        vars.insert(name.clone(), tape.param(name, value.clone())?);
    }
    let out = build(&mut tape, &vars)?;
    tape.scalar_value(out)
}

/// Outcome of comparing analytic gradients against central differences.
#[derive(Debug, Clone)]
pub struct FdReport {
    /// Max over checked coordinates of |analytic - numeric| / max(1, |numeric|).
    pub max_rel_err: f64,
    /// Per-parameter maxima.
    pub per_param: BTreeMap<String, f64>,
    pub h: f64,
    pub tol: f64,
    pub coords_checked: usize,
    pub passed: bool,
    /// Coordinates that exceeded the tolerance or were non-finite.
    pub failures: Vec<String>,
}

/// Checks a supplied analytic gradient against central finite differences of
/// `scalar_fn` at every coordinate of `params`.
pub fn finite_diff_check<F>(
    scalar_fn: F,
    params: &ParamSet,
    analytic: &BTreeMap<String, Tensor>,
    h: f64,
    tol: f64,
) -> Result<FdReport>
where
    F: Fn(&ParamSet) -> Result<f64>,
{
    let coords = params.coordinates();
    finite_diff_check_coords(scalar_fn, params, analytic, &coords, h, tol)
}

/// Same as [`finite_diff_check`] but probing only the given coordinates.
pub fn finite_diff_check_coords<F>(
    scalar_fn: F,
    params: &ParamSet,
    analytic: &BTreeMap<String, Tensor>,
    coords: &[(String, usize)],
    h: f64,
    tol: f64,
) -> Result<FdReport>
where
    F: Fn(&ParamSet) -> Result<f64>,
{
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::domain("finite_diff_check", format!("h must be in [1e-7, 1e-3], got {}", h)));
    }
    let mut report = FdReport {
        max_rel_err: 0.0,
        per_param: BTreeMap::new(),
        h,
        tol,
        coords_checked: 0,
        passed: true,
        failures: Vec::new(),
    };
    let mut probe = params.clone();
    for (name, i) in coords {
        let base = params
            .get(name)
            .ok_or_else(|| Error::config(format!("unknown parameter '{}'", name)))?
            .data()[*i];
        let eval_at = |probe: &mut ParamSet, value: f64, f: &F| -> Result<f64> {
            probe.get_mut(name).expect("cloned from params").data_mut()[*i] = value;
            f(probe)
        };
        let f_plus = eval_at(&mut probe, base + h, &scalar_fn)?;
        let f_minus = eval_at(&mut probe, base - h, &scalar_fn)?;
        eval_at(&mut probe, base, &scalar_fn)?;
        let numeric = (f_plus - f_minus) / (2.0 * h);
        let a = analytic.get(name).map_or(0.0, |t| t.data()[*i]);
        report.coords_checked += 1;
        let coord = format!("{}[{}]", name, i);
        if !a.is_finite() || !numeric.is_finite() {
            report.passed = false;
            report.failures.push(format!("{}: analytic={}, numeric={}", coord, a, numeric));
            continue;
        }
        let rel = (a - numeric).abs() / numeric.abs().max(1.0);
        let entry = report.per_param.entry(name.clone()).or_insert(0.0);
        *entry = entry.max(rel);
        report.max_rel_err = report.max_rel_err.max(rel);
        if rel > tol {
            report.passed = false;
            report.failures.push(format!("{}: analytic={}, numeric={}, rel={:.3e}", coord, a, numeric, rel));
        }
    }
    Ok(report)
}

/// Full-graph convenience: analytic gradients come from the tape, numeric
/// ones from re-running the same graph forward-only.
pub fn check_graph<F>(params: &ParamSet, build: F, h: f64, tol: f64) -> Result<FdReport>
where
    F: Fn(&mut Tape, &BTreeMap<String, Var>) -> Result<Var>,
{
    let coords = params.coordinates();
    check_graph_coords(params, build, &coords, h, tol)
}

/// [`check_graph`] restricted to sampled coordinates.
pub fn check_graph_coords<F>(
    params: &ParamSet,
    build: F,
    coords: &[(String, usize)],
    h: f64,
    tol: f64,
) -> Result<FdReport>
where
    F: Fn(&mut Tape, &BTreeMap<String, Var>) -> Result<Var>,
{
    let (_, analytic) = forward_backward(params, &build)?;
    finite_diff_check_coords(|p| evaluate_graph(p, &build), params, &analytic, coords, h, tol)
}
