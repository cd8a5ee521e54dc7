//! Sample containers shared by every stage.
//!
//! Data, metrics and ODE states are kept in `f64`; networks cast rows to
//! `f32` at their boundary.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// One point in data space or latent space, with its logical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    values: Vec<f64>,
    shape: Vec<usize>,
}

impl Sample {
    pub fn new(values: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArgument(format!(
                "sample shape must be non-empty with positive extents, got {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::dim("sample shape", n, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample values"));
        }
        Ok(Self { values, shape })
    }

    /// A flat vector sample of shape `[len]`.
    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(values, vec![n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn view(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.values[..])
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// A batch of samples sharing one shape, stored row-major (`n × dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    data: Array2<f64>,
    shape: Vec<usize>,
}

impl SampleSet {
    pub fn new(data: Array2<f64>, shape: Vec<usize>) -> Result<Self> {
        let dim: usize = shape.iter().product();
        if shape.is_empty() || dim == 0 {
            return Err(Error::InvalidArgument("empty sample shape".into()));
        }
        if data.ncols() != dim {
            return Err(Error::dim("sample set columns", dim, data.ncols()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample set"));
        }
        Ok(Self { data, shape })
    }

    /// Rows of a flat `n × dim` matrix, each a `[dim]` sample.
    pub fn from_rows(data: Array2<f64>) -> Result<Self> {
        let d = data.ncols();
        Self::new(data, vec![d])
    }

    pub fn from_samples(samples: &[Sample]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty sample list".into()))?;
        let d = first.len();
        let mut data = Array2::zeros((samples.len(), d));
        for (mut row, s) in data.rows_mut().into_iter().zip(samples) {
            if s.shape() != first.shape() {
                return Err(Error::InvalidArgument("mixed sample shapes".into()));
            }
            row.assign(&s.view());
        }
        Ok(Self {
            data,
            shape: first.shape().to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn get(&self, i: usize) -> Sample {
        Sample {
            values: self.data.row(i).to_vec(),
            shape: self.shape.clone(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Sample> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }

    /// Rows at the given indices, in order.
    pub fn select(&self, idx: &[usize]) -> SampleSet {
        SampleSet {
            data: self.data.select(Axis(0), idx),
            shape: self.shape.clone(),
        }
    }

    pub fn mean(&self) -> Array1<f64> {
        self.data
            .mean_axis(Axis(0))
            .unwrap_or_else(|| Array1::zeros(self.dim()))
    }
}

/// Diagonal Gaussian given by per-dimension mean and natural-log variance.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGaussian {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl DiagonalGaussian {
    pub fn new(mean: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        if mean.len() != log_var.len() {
            return Err(Error::dim("gaussian log_var", mean.len(), log_var.len()));
        }
        if mean.iter().chain(&log_var).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gaussian parameters"));
        }
        Ok(Self { mean, log_var })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            log_var: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Splits a `[mean ‖ log_var]` network output.
    pub fn from_concat(out: &[f64]) -> Self {
        let half = out.len() / 2;
        Self {
            mean: out[..half].to_vec(),
            log_var: out[half..].to_vec(),
        }
    }
}

/// A point in the auxiliary model's latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode(pub Vec<f64>);

impl LatentCode {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}
