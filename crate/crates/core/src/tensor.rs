//! Dense row-major tensors of `f64`.

use crate::error::{Error, Result};

/// Dense multi-axis array with an explicit shape.
///
/// The shape is never empty, every axis is at least 1 long and all elements
/// are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        validate_shape(&shape)?;
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {len} elements but {} were given",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        validate_shape(&shape)?;
        let len = shape.iter().product();
        Ok(Tensor {
            shape,
            data: vec![0.0; len],
        })
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Result<Self> {
        let mut t = Tensor::zeros(shape)?;
        t.data.iter_mut().for_each(|v| *v = value);
        Ok(t)
    }

    /// Builds a tensor from values the caller already knows to be valid.
    pub(crate) fn from_raw(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Length of the leading (batch) axis.
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Number of elements per leading-axis slice.
    pub fn sample_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let d = self.sample_len();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank");
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &len)| {
            assert!(i < len, "index {i} out of bounds for axis of length {len}");
            acc * len + i
        })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        validate_shape(&shape)?;
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::Shape(format!("cannot reshape {:?} into {shape:?}", self.shape)));
        }
        Ok(Tensor { shape, data: self.data })
    }

    /// Collapses every axis after the first: `[n, a, b, ..] -> [n, a*b*..]`.
    pub fn flatten_batch(&self) -> Result<Tensor> {
        if self.rank() < 2 {
            return Err(Error::Shape(format!(
                "flatten_batch needs at least 2 axes, got shape {:?}",
                self.shape
            )));
        }
        Ok(Tensor {
            shape: vec![self.batch(), self.sample_len()],
            data: self.data.clone(),
        })
    }

    /// Gathers leading-axis slices in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Tensor> {
        if rows.is_empty() {
            return Err(Error::Shape("select needs at least one row".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * self.sample_len());
        for &r in rows {
            if r >= self.batch() {
                return Err(Error::Shape(format!(
                    "row {r} out of range for batch of {}",
                    self.batch()
                )));
            }
            data.extend_from_slice(self.sample(r));
        }
        let mut shape = self.shape.clone();
        shape[0] = rows.len();
        Ok(Tensor { shape, data })
    }

    /// Concatenates tensors along the leading axis.
    pub fn concat(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("concat needs at least one tensor".into()))?;
        let mut shape = first.shape.clone();
        let mut data = Vec::new();
        shape[0] = 0;
        for p in parts {
            if p.shape[1..] != first.shape[1..] {
                return Err(Error::ShapeMismatch(format!(
                    "cannot concatenate {:?} with {:?}",
                    first.shape, p.shape
                )));
            }
            shape[0] += p.batch();
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor { shape, data })
    }
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::Shape("empty shape list is not allowed".into()));
    }
    if shape.contains(&0) {
        return Err(Error::Shape(format!("zero-length axis in {shape:?}")));
    }
    Ok(())
}
