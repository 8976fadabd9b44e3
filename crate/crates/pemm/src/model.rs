//! The MLP feature extractor that feeds the distance head.

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::{seeded_rng, standard_normal};
use crate::tensor::{self, Tensor};

/// Layer widths of the feature extractor. The last width is the feature
/// dimension the distance head operates in; all earlier layers use ReLU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArch {
    pub widths: Vec<usize>,
}

impl Default for MlpArch {
    fn default() -> Self {
        MlpArch { widths: vec![64, 64, 16] }
    }
}

impl MlpArch {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.is_empty() || widths.iter().any(|&w| w == 0) {
            return Err(Error::config(format!("invalid MLP widths {:?}", widths)));
        }
        Ok(MlpArch { widths })
    }

    pub fn feature_dim(&self) -> usize {
        *self.widths.last().expect("widths validated non-empty")
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len()
    }

    pub fn weight_name(layer: usize) -> String {
        format!("w{}", layer)
    }

    pub fn bias_name(layer: usize) -> String {
        format!("b{}", layer)
    }
}

/// He-scaled random initialization: weights N(0, 2/fan_in), zero biases.
pub fn init_params(arch: &MlpArch, input_dim: usize, seed: u64) -> Result<ParamSet> {
    if input_dim == 0 {
        return Err(Error::config("input dimension must be positive".to_string()));
    }
    let mut rng = seeded_rng(seed, "mlp-init");
    let mut params = ParamSet::new();
    let mut fan_in = input_dim;
    for (layer, &width) in arch.widths.iter().enumerate() {
        let std = (2.0 / fan_in as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * width).map(|_| std * standard_normal(&mut rng)).collect();
        params.insert(&MlpArch::weight_name(layer), Tensor::new(vec![fan_in, width], w)?);
        params.insert(&MlpArch::bias_name(layer), Tensor::zeros(vec![width]));
        fan_in = width;
    }
    Ok(params)
}

/// Records the feature extractor on the tape: affine layers with ReLU between
/// them, then optional L2 row normalization of the output.
pub fn build_features(
    tape: &mut Tape,
    vars: &std::collections::BTreeMap<String, Var>,
    x: Var,
    arch: &MlpArch,
    normalize: bool,
) -> Result<Var> {
    let mut h = x;
    let last = arch.num_layers() - 1;
    for layer in 0..arch.num_layers() {
        let w = vars
            .get(&MlpArch::weight_name(layer))
            .ok_or_else(|| Error::config(format!("missing parameter w{}", layer)))?;
        let b = vars
            .get(&MlpArch::bias_name(layer))
            .ok_or_else(|| Error::config(format!("missing parameter b{}", layer)))?;
        let lin = tape.matmul(h, *w)?;
        h = tape.bias_add(lin, *b)?;
        if layer < last {
            h = tape.relu(h)?;
        }
    }
    if normalize {
        h = tape.row_l2_normalize(h)?;
    }
    Ok(h)
}

/// Plain (non-recorded) forward pass; uses the same kernels as the tape, so
/// the two paths agree bitwise.
pub fn forward_features(params: &ParamSet, arch: &MlpArch, x: &Tensor, normalize: bool) -> Result<Tensor> {
    let mut h = x.clone();
    let last = arch.num_layers() - 1;
    for layer in 0..arch.num_layers() {
        let w = params
            .get(&MlpArch::weight_name(layer))
            .ok_or_else(|| Error::config(format!("missing parameter w{}", layer)))?;
        let b = params
            .get(&MlpArch::bias_name(layer))
            .ok_or_else(|| Error::config(format!("missing parameter b{}", layer)))?;
        h = tensor::bias_add(&tensor::matmul(&h, w)?, b)?;
        if layer < last {
            h = tensor::relu(&h);
        }
    }
    if normalize {
        h = tensor::row_l2_normalize(&h)?;
    }
    Ok(h)
}
