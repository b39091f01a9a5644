use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::{Error, Result};

/// Floating-point element type for network math: `f32` for training and
/// inference, `f64` for gradient verification.
pub trait Scalar:
    Float + Default + core::fmt::Debug + core::iter::Sum + core::ops::AddAssign + Send + Sync + 'static
{
    /// Backward values below this magnitude are flushed to zero so they never
    /// decay into subnormals, which are very slow on common CPUs.
    const TINY: Self;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    const TINY: f32 = 1e-30;

    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const TINY: f64 = 1e-300;

    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense (batch, channels, rows, cols) tensor, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    dims: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Tensor {
            dims,
            data: vec![T::zero(); dims.iter().product()],
        }
    }

    pub fn new(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::mismatch("tensor data length", len, data.len()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(alloc::format!(
                "tensor element {pos} is not finite"
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub(crate) fn from_parts(dims: [usize; 4], data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), dims.iter().product::<usize>());
        Tensor { dims, data }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    pub fn plane_len(&self) -> usize {
        self.dims[2] * self.dims[3]
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

    /// All channels of sample `n`, contiguous.
    pub fn sample(&self, n: usize) -> &[T] {
        let len = self.dims[1] * self.plane_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    /// Stacks single-sample tensors of identical shape along the batch axis.
    pub fn stack(items: &[Tensor<T>]) -> Result<Self> {
        let first = items
            .first()
            .ok_or(Error::Empty("cannot stack zero tensors"))?;
        let [_, c, h, w] = first.dims;
        let mut data = Vec::with_capacity(items.len() * c * h * w);
        let mut n = 0;
        for t in items {
            if t.dims[1..] != first.dims[1..] {
                return Err(Error::mismatch("stacked tensor dims", first.dims, t.dims));
            }
            n += t.dims[0];
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor {
            dims: [n, c, h, w],
            data,
        })
    }
}
