//! Dense row-major f64 tensors and the handful of linear-algebra kernels the
//! rest of the crate composes.
//!
//! The same kernel functions back both the plain inference path and the
//! recorded-tape training path, so the two are bitwise consistent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Epsilon added inside the square root when normalizing rows, so zero rows
/// map to zero instead of dividing by zero.
pub const NORM_EPS: f64 = 1e-12;

/// Dense row-major array of 64-bit floats with shape metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "Tensor::new",
                format!("shape {:?} implies {} elements, got {}", shape, expected, data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor { shape, data: vec![0.0; n] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![], data: vec![value] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::shape(
                    "Tensor::from_rows",
                    format!("row {} has {} columns, expected {}", i, row.len(), c),
                ));
            }
            data.extend_from_slice(row);
        }
        Tensor::new(vec![r, c], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn scalar_value(&self) -> Result<f64> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(Error::shape("Tensor::scalar_value", format!("shape {:?} is not scalar", self.shape)))
        }
    }

    /// Rows and columns of a 2-D tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::shape("Tensor::dims2", format!("expected 2-D, got shape {:?}", other))),
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let (_, c) = (self.shape[0], self.shape[1]);
        &self.data[r * c..(r + 1) * c]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        let cols = self.shape[1];
        self.data[r * cols + c] = value;
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.dims2()?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::new(vec![c, r], out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    /// Errors with `op` as the location if any entry is NaN or infinite.
    pub fn check_finite(&self, op: &str) -> Result<()> {
        for (i, &x) in self.data.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::non_finite(op, format!("entry {} is {}", i, x)));
            }
        }
        Ok(())
    }

    /// FNV-1a over the raw bits; used by determinism tests.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |b: u64| {
            for shift in (0..64).step_by(8) {
                h ^= (b >> shift) & 0xff;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for &d in &self.shape {
            eat(d as u64);
        }
        for &x in &self.data {
            eat(x.to_bits());
        }
        h
    }
}

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape, b.shape)));
    }
    Ok(())
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("add", a, b)?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
    Ok(Tensor { shape: a.shape.clone(), data })
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("sub", a, b)?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect();
    Ok(Tensor { shape: a.shape.clone(), data })
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("mul", a, b)?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
    Ok(Tensor { shape: a.shape.clone(), data })
}

pub fn scale(a: &Tensor, s: f64) -> Tensor {
    a.map(|x| x * s)
}

pub fn add_scalar(a: &Tensor, s: f64) -> Tensor {
    a.map(|x| x + s)
}

pub fn exp(a: &Tensor) -> Tensor {
    a.map(f64::exp)
}

pub fn ln(a: &Tensor) -> Tensor {
    a.map(f64::ln)
}

pub fn powf(a: &Tensor, p: f64) -> Tensor {
    a.map(|x| x.powf(p))
}

pub fn relu(a: &Tensor) -> Tensor {
    a.map(|x| if x > 0.0 { x } else { 0.0 })
}

pub fn sum(a: &Tensor) -> f64 {
    a.data.iter().sum()
}

pub fn mean(a: &Tensor) -> f64 {
    if a.data.is_empty() {
        0.0
    } else {
        sum(a) / a.data.len() as f64
    }
}

/// `a` is B×m, `w` is m×n; returns B×n.
pub fn matmul(a: &Tensor, w: &Tensor) -> Result<Tensor> {
    let (ar, ac) = a.dims2()?;
    let (wr, wc) = w.dims2()?;
    if ac != wr {
        return Err(Error::shape("matmul", format!("{}x{} * {}x{}", ar, ac, wr, wc)));
    }
    let mut out = vec![0.0; ar * wc];
    for i in 0..ar {
        for k in 0..ac {
            let aik = a.data[i * ac + k];
            if aik == 0.0 {
                continue;
            }
            let wrow = &w.data[k * wc..(k + 1) * wc];
            let orow = &mut out[i * wc..(i + 1) * wc];
            for j in 0..wc {
                orow[j] += aik * wrow[j];
            }
        }
    }
    Tensor::new(vec![ar, wc], out)
}

/// Adds a length-n bias row to every row of a B×n matrix.
pub fn bias_add(a: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (r, c) = a.dims2()?;
    if bias.shape() != [c] {
        return Err(Error::shape("bias_add", format!("bias shape {:?} for {}x{} input", bias.shape(), r, c)));
    }
    let mut out = a.data.clone();
    for i in 0..r {
        for j in 0..c {
            out[i * c + j] += bias.data[j];
        }
    }
    Tensor::new(vec![r, c], out)
}

/// Scales every row of a B×m matrix to unit L2 norm, with [`NORM_EPS`] inside
/// the square root so zero rows map to zero.
pub fn row_l2_normalize(a: &Tensor) -> Result<Tensor> {
    let (r, c) = a.dims2()?;
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let row = &a.data[i * c..(i + 1) * c];
        let sq: f64 = row.iter().map(|x| x * x).sum();
        let norm = (sq + NORM_EPS).sqrt();
        for j in 0..c {
            out[i * c + j] = row[j] / norm;
        }
    }
    Tensor::new(vec![r, c], out)
}

/// Squared Euclidean distances between rows of `z` (B×m) and rows of `c`
/// (K×m); returns B×K.
pub fn pairwise_sqdist(z: &Tensor, c: &Tensor) -> Result<Tensor> {
    let (b, m) = z.dims2()?;
    let (k, mc) = c.dims2()?;
    if m != mc {
        return Err(Error::shape("pairwise_sqdist", format!("features {}-dim vs centers {}-dim", m, mc)));
    }
    let mut out = vec![0.0; b * k];
    for n in 0..b {
        let zn = &z.data[n * m..(n + 1) * m];
        for j in 0..k {
            let cj = &c.data[j * m..(j + 1) * m];
            let mut acc = 0.0;
            for t in 0..m {
                let d = zn[t] - cj[t];
                acc += d * d;
            }
            out[n * k + j] = acc;
        }
    }
    Tensor::new(vec![b, k], out)
}

/// Divides every row of a B×K matrix by its row sum.
pub fn row_normalize(a: &Tensor) -> Result<Tensor> {
    let (r, c) = a.dims2()?;
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let row = &a.data[i * c..(i + 1) * c];
        let s: f64 = row.iter().sum();
        if s == 0.0 {
            return Err(Error::domain("row_normalize", format!("row {} sums to zero", i)));
        }
        for j in 0..c {
            out[i * c + j] = row[j] / s;
        }
    }
    Tensor::new(vec![r, c], out)
}

/// Picks entry `labels[n]` from row `n` of a B×K matrix; returns B×1.
pub fn pick_per_row(a: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (r, c) = a.dims2()?;
    if labels.len() != r {
        return Err(Error::shape("pick_per_row", format!("{} labels for {} rows", labels.len(), r)));
    }
    let mut out = vec![0.0; r];
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::domain("pick_per_row", format!("label {} out of range for {} columns", y, c)));
        }
        out[i] = a.data[i * c + y];
    }
    Tensor::new(vec![r, 1], out)
}

/// Euclidean norm of the difference of two equal-length slices.
pub fn slice_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("slice_distance", format!("{} vs {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_shape_data_mismatch() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn matmul_known_product() {
        let a = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(vec![2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_shape_errors_name_op() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![2, 3]);
        let err = matmul(&a, &b).unwrap_err();
        assert!(err.to_string().contains("matmul"));
    }

    #[test]
    fn row_normalize_unit_rows() {
        let a = Tensor::new(vec![1, 2], vec![3.0, 4.0]).unwrap();
        let n = row_l2_normalize(&a).unwrap();
        assert!((n.data()[0] - 0.6).abs() < 1e-12);
        assert!((n.data()[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn pairwise_sqdist_matches_manual() {
        let z = Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap();
        let c = Tensor::new(vec![2, 2], vec![3.0, 4.0, 1.0, 0.0]).unwrap();
        let d = pairwise_sqdist(&z, &c).unwrap();
        assert_eq!(d.data(), &[25.0, 1.0]);
    }

    #[test]
    fn check_finite_reports_location() {
        let t = Tensor::new(vec![2], vec![1.0, f64::NAN]).unwrap();
        let err = t.check_finite("probe").unwrap_err();
        assert!(err.to_string().contains("probe"));
        assert!(err.to_string().contains("entry 1"));
    }

    #[test]
    fn checksum_is_order_sensitive() {
        let a = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(vec![2], vec![2.0, 1.0]).unwrap();
        assert_ne!(a.checksum(), b.checksum());
        assert_eq!(a.checksum(), a.clone().checksum());
    }
}
