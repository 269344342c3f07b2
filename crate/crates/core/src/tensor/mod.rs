//! Dense tensors with reverse-mode automatic differentiation.
//!
//! [`Tensor`] is a row-major dense array (1-D or 2-D; everything the models
//! need). [`Tape`] records primitive operations during a forward pass and
//! replays them in reverse to accumulate gradients into a [`ParamSet`].
//! [`Adam`] applies the usual bias-corrected update.

mod adam;
pub mod attention;
#[cfg(test)]
mod grad_check;
mod params;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use params::{ParamSet, Parameter};
pub use tape::{NodeId, Tape};

use crate::error::Error;
use crate::scalar::Scalar;
use crate::Result;

/// Row-major dense tensor, rank 1 or 2.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.is_empty() || shape.len() > 2 {
            return Err(Error::shape("tensor", format!("rank {} unsupported", shape.len())));
        }
        if numel != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {:?} implies {} elements, got {}", shape, numel, data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![T::zero(); numel],
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> T) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: (0..numel).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// (rows, cols) for rank-2 tensors; rank-1 tensors are column vectors.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.len() {
            2 => (self.shape[0], self.shape[1]),
            _ => (self.shape[0], 1),
        }
    }

    pub fn rows(&self) -> usize {
        self.dims2().0
    }

    pub fn cols(&self) -> usize {
        self.dims2().1
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols() + c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same data, new shape.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self> {
        Tensor::new(shape, self.data.clone())
    }

    /// Elementwise in-place accumulate; shapes must match exactly.
    pub(crate) fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    /// Lossless-ish scalar-type conversion (used to move f32 cohorts into
    /// f64 test models and back).
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }
}

/// `C = A · B` for row-major matrices. `ikj` loop order keeps the inner loop
/// contiguous for both `B` and `C`.
pub(crate) fn matmul_nn<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (m, k) = a.dims2();
    let (kb, n) = b.dims2();
    debug_assert_eq!(k, kb);
    let mut out = Tensor::zeros(vec![m, n]);
    for i in 0..m {
        let arow = a.row(i);
        let crow = &mut out.data[i * n..(i + 1) * n];
        for (l, &aval) in arow.iter().enumerate() {
            let brow = &b.data[l * n..(l + 1) * n];
            for (c, &bv) in crow.iter_mut().zip(brow) {
                *c += aval * bv;
            }
        }
    }
    out
}

/// `C = A · Bᵀ` with both operands row-major (`A: [m×k]`, `B: [n×k]`).
pub(crate) fn matmul_nt<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (m, k) = a.dims2();
    let (n, kb) = b.dims2();
    debug_assert_eq!(k, kb);
    let mut out = Tensor::zeros(vec![m, n]);
    for i in 0..m {
        let arow = a.row(i);
        let crow = &mut out.data[i * n..(i + 1) * n];
        for (j, c) in crow.iter_mut().enumerate() {
            let brow = &b.data[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *c = acc;
        }
    }
    out
}

/// `C = Aᵀ · B` (`A: [m×k]`, `B: [m×n]`, result `[k×n]`).
pub(crate) fn matmul_tn<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (m, k) = a.dims2();
    let (mb, n) = b.dims2();
    debug_assert_eq!(m, mb);
    let mut out = Tensor::zeros(vec![k, n]);
    for i in 0..m {
        let arow = a.row(i);
        let brow = &b.data[i * n..(i + 1) * n];
        for (l, &av) in arow.iter().enumerate() {
            let crow = &mut out.data[l * n..(l + 1) * n];
            for (c, &bv) in crow.iter_mut().zip(brow) {
                *c += av * bv;
            }
        }
    }
    out
}
