//! Dense row-major tensors of rank 1 to 4.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAX_RANK: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() || dims.len() > MAX_RANK {
            return Err(Error::Shape(format!(
                "rank must be 1..={MAX_RANK}, got {}",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::Shape(format!("zero extent in {dims:?}")));
        }
        let mut count: u64 = 1;
        for &d in &dims {
            count = count
                .checked_mul(d as u64)
                .ok_or_else(|| Error::Shape(format!("element count of {dims:?} overflows")))?;
        }
        if usize::try_from(count).is_err() {
            return Err(Error::Shape(format!("element count of {dims:?} overflows")));
        }
        Ok(Shape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Row-major strides in elements.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.0.len()];
        for i in (0..self.0.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.0[i + 1];
        }
        strides
    }

    pub fn linear_index(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.rank() {
            return Err(Error::Index(format!(
                "index of rank {} into shape {:?}",
                index.len(),
                self.0
            )));
        }
        let mut offset = 0;
        for ((&i, &d), s) in index.iter().zip(&self.0).zip(self.strides()) {
            if i >= d {
                return Err(Error::Index(format!(
                    "{index:?} out of bounds for {:?}",
                    self.0
                )));
            }
            offset += i * s;
        }
        Ok(offset)
    }
}

impl TryFrom<Vec<usize>> for Shape {
    type Error = Error;

    fn try_from(dims: Vec<usize>) -> Result<Self> {
        Shape::new(dims)
    }
}

impl From<Shape> for Vec<usize> {
    fn from(shape: Shape) -> Self {
        shape.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn from_vec(dims: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} elements, got {}",
                shape.dims(),
                shape.numel(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(dims: impl Into<Vec<usize>>) -> Result<Self> {
        Self::full(dims, T::zero())
    }

    pub fn full(dims: impl Into<Vec<usize>>, value: T) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let data = vec![value; shape.numel()];
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
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

    pub fn get(&self, index: &[usize]) -> Result<T> {
        Ok(self.data[self.shape.linear_index(index)?])
    }

    pub fn reshape(self, dims: impl Into<Vec<usize>>) -> Result<Self> {
        Tensor::from_vec(dims, self.data)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.bits() == b.bits())
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&v| U::from_f64(v.as_f64()).expect("cast"))
                .collect(),
        }
    }

    /// Copy of `self` without the slices at `indices` along `axis`.
    ///
    /// `indices` must be strictly increasing and leave at least one slice.
    pub fn delete_indices(&self, axis: usize, indices: &[usize]) -> Result<Self> {
        let dims = self.dims();
        if axis >= dims.len() {
            return Err(Error::Index(format!(
                "axis {axis} out of range for rank {}",
                dims.len()
            )));
        }
        let extent = dims[axis];
        if let Some(&bad) = indices.iter().find(|&&i| i >= extent) {
            return Err(Error::Index(format!(
                "index {bad} out of range for axis {axis} of extent {extent}"
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Index(format!(
                "indices must be strictly increasing: {indices:?}"
            )));
        }
        if indices.len() >= extent {
            return Err(Error::EmptyAxis { axis, extent });
        }
        let mut keep = vec![true; extent];
        for &i in indices {
            keep[i] = false;
        }
        let outer: usize = dims[..axis].iter().product();
        let inner: usize = dims[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(self.data.len() / extent * (extent - indices.len()));
        for o in 0..outer {
            let base = o * extent * inner;
            for (a, _) in keep.iter().enumerate().filter(|(_, k)| **k) {
                let start = base + a * inner;
                data.extend_from_slice(&self.data[start..start + inner]);
            }
        }
        let mut new_dims = dims.to_vec();
        new_dims[axis] = extent - indices.len();
        Tensor::from_vec(new_dims, data)
    }

    /// Treats the tensor as a `D×H` matrix (last axis = columns) and maps
    /// each column through `reducer`.
    pub fn reduce_over_rows<R>(&self, mut reducer: impl FnMut(&[T]) -> R) -> Result<Vec<R>> {
        let (rows, cols) = self.matrix_dims()?;
        let mut column = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(cols);
        for h in 0..cols {
            column.clear();
            column.extend((0..rows).map(|r| self.data[r * cols + h]));
            out.push(reducer(&column));
        }
        Ok(out)
    }

    /// `(D, H)` of the matrix view: all leading axes folded into rows.
    pub fn matrix_dims(&self) -> Result<(usize, usize)> {
        let dims = self.dims();
        if dims.len() < 2 {
            return Err(Error::Shape(format!(
                "rank-{} tensor has no row/column view",
                dims.len()
            )));
        }
        let cols = dims[dims.len() - 1];
        Ok((self.data.len() / cols, cols))
    }
}
