use serde::{Deserialize, Serialize};

use super::Scalar;
use crate::error::{Error, Result};

/// Dense row-major n-dimensional array.
///
/// Every dimension is positive and `shape.iter().product() == data.len()`.
/// A scalar is represented with shape `[1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
    #[serde(default)]
    requires_grad: bool,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        check_shape(&shape)?;
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("holds {} values, expected {expected}", data.len()),
            });
        }
        Ok(Self {
            shape,
            data,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        check_shape(&shape)?;
        let n = shape.iter().product();
        Ok(Self {
            shape,
            data: vec![T::zero(); n],
            requires_grad: false,
        })
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
            requires_grad: false,
        }
    }

    /// Builds a 2-D tensor from rows of equal length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("from_rows", "ragged rows"));
        }
        Self::new([rows.len(), cols], rows.concat())
    }

    /// Marks the tensor as a differentiation target when bound into a graph.
    pub fn with_requires_grad(mut self, requires_grad: bool) -> Self {
        self.requires_grad = requires_grad;
        self
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Option<T> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn reshape(mut self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        check_shape(&shape)?;
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> {:?}", self.shape, shape),
            ));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Row `i` of a tensor viewed as `[shape[0], rest]`.
    pub fn row(&self, i: usize) -> &[T] {
        let width = self.data.len() / self.shape[0];
        &self.data[i * width..(i + 1) * width]
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Elements per leading-axis slice.
    pub fn row_width(&self) -> usize {
        self.data.len() / self.shape[0]
    }

    /// Gathers rows along the leading axis.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Empty("select_rows with no indices".into()));
        }
        let width = self.row_width();
        let mut data = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            if i >= self.shape[0] {
                return Err(Error::shape(
                    "select_rows",
                    format!("row {i} out of {}", self.shape[0]),
                ));
            }
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Self::new(shape, data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            requires_grad: false,
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.as_f64()))
                .collect(),
            requires_grad: self.requires_grad,
        }
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[&Tensor<T>]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Empty("stack of zero tensors".into()))?;
        let mut data = Vec::with_capacity(items.len() * first.len());
        for t in items {
            if t.shape != first.shape {
                return Err(Error::shape(
                    "stack",
                    format!("{:?} vs {:?}", t.shape, first.shape),
                ));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Self::new(shape, data)
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "dimensions must be non-empty and positive".into(),
        });
    }
    Ok(())
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_data() {
        assert!(Tensor::<f32>::new([2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new([0, 3], vec![]).is_err());
        assert!(Tensor::<f32>::new(Vec::<usize>::new(), vec![1.0]).is_err());
    }

    #[test]
    fn argmax_ties_pick_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5, 0.1]), 1);
        assert_eq!(argmax(&[1.0, 1.0]), 0);
    }

    #[test]
    fn select_rows_gathers() {
        let t = Tensor::<f32>::new([3, 2], vec![0., 1., 2., 3., 4., 5.]).unwrap();
        let s = t.select_rows(&[2, 0]).unwrap();
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.data(), &[4., 5., 0., 1.]);
    }
}
