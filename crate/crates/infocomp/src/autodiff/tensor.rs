//! Dense 64-bit float tensor participating in the reverse-mode tape.
//!
//! A `Tensor` is a cheaply clonable handle (`Rc`) to shared storage. Parameter
//! tensors are held by their owners (encoder weights, prompt bank) and survive
//! graph disposal; intermediates are kept alive only by the tape and are freed
//! when the graph is cleared after backward.

use std::cell::RefCell;
use std::rc::Rc;

use rand::Rng;

use crate::error::{Error, Result};

struct Inner {
    shape: Vec<usize>,
    values: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
    /// Index of the tape node that produced this tensor, if any. Reset when
    /// the graph is cleared; leaf tensors never carry one.
    node_id: Option<usize>,
}

/// Handle to a dense f64 tensor with optional gradient storage.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<Inner>>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("shape", &inner.shape)
            .field("requires_grad", &inner.requires_grad)
            .field("has_grad", &inner.grad.is_some())
            .finish()
    }
}

impl Tensor {
    /// Constant (non-trainable) tensor from raw values.
    pub fn from_vec(values: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if values.len() != numel {
            return Err(Error::InvalidShape {
                op: "from_vec",
                shape: shape.to_vec(),
                msg: format!("{} values for {} slots", values.len(), numel),
            });
        }
        Ok(Self::raw(values, shape.to_vec(), false))
    }

    /// Trainable parameter tensor from raw values.
    pub fn param(values: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        let t = Self::from_vec(values, shape)?;
        t.set_requires_grad(true);
        Ok(t)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let numel = shape.iter().product();
        Self::raw(vec![0.0; numel], shape.to_vec(), false)
    }

    pub fn scalar(x: f64) -> Tensor {
        Self::raw(vec![x], vec![1], false)
    }

    /// Seeded Gaussian init, used for weight matrices and embeddings.
    pub fn randn<R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Tensor {
        let numel: usize = shape.iter().product();
        // Box-Muller on the caller's stream keeps init reproducible without
        // depending on rand_distr.
        let mut values = Vec::with_capacity(numel);
        while values.len() < numel {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = 2.0 * std::f64::consts::PI * u2;
            values.push(std * r * theta.cos());
            if values.len() < numel {
                values.push(std * r * theta.sin());
            }
        }
        Self::raw(values, shape.to_vec(), false)
    }

    pub(crate) fn raw(values: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> Tensor {
        Tensor {
            inner: Rc::new(RefCell::new(Inner {
                shape,
                values,
                requires_grad,
                grad: None,
                node_id: None,
            })),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().values.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    /// Row count for 2-D tensors; 1 for vectors.
    pub fn rows(&self) -> usize {
        let inner = self.inner.borrow();
        if inner.shape.len() >= 2 {
            inner.shape[0]
        } else {
            1
        }
    }

    /// Column count for 2-D tensors; the length for vectors.
    pub fn cols(&self) -> usize {
        let inner = self.inner.borrow();
        match inner.shape.len() {
            0 => 1,
            1 => inner.shape[0],
            _ => inner.shape[1..].iter().product(),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.borrow().values.clone()
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> f64 {
        let inner = self.inner.borrow();
        debug_assert_eq!(inner.values.len(), 1);
        inner.values[0]
    }

    pub fn with_values<R>(&self, f: impl FnOnce(&[f64]) -> R) -> R {
        f(&self.inner.borrow().values)
    }

    /// Overwrite the stored values in place (shapes must agree).
    pub fn set_values(&self, values: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        assert_eq!(
            inner.values.len(),
            values.len(),
            "set_values length mismatch"
        );
        inner.values.copy_from_slice(values);
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    /// Toggle trainability. Freezing drops any stored gradient so a frozen
    /// tensor never carries one.
    pub fn set_requires_grad(&self, requires_grad: bool) {
        let mut inner = self.inner.borrow_mut();
        inner.requires_grad = requires_grad;
        if !requires_grad {
            inner.grad = None;
        }
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    /// Add `delta` into the gradient buffer. No-op on tensors that do not
    /// require gradients.
    pub(crate) fn accumulate_grad(&self, delta: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        if !inner.requires_grad {
            return;
        }
        debug_assert_eq!(inner.values.len(), delta.len());
        match &mut inner.grad {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            None => inner.grad = Some(delta.to_vec()),
        }
    }

    pub(crate) fn set_node_id(&self, id: Option<usize>) {
        self.inner.borrow_mut().node_id = id;
    }

    pub fn node_id(&self) -> Option<usize> {
        self.inner.borrow().node_id
    }

    /// Deep copy of the values as a fresh frozen tensor (no graph link).
    pub fn detached_copy(&self) -> Tensor {
        let inner = self.inner.borrow();
        Self::raw(inner.values.clone(), inner.shape.clone(), false)
    }

    /// True when two handles point at the same storage.
    pub fn same_storage(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    /// Bit-exact value comparison, used by the freeze-invariant checks.
    pub fn bits_eq(&self, other: &Tensor) -> bool {
        let a = self.inner.borrow();
        let b = other.inner.borrow();
        a.shape == b.shape
            && a.values.len() == b.values.len()
            && a.values
                .iter()
                .zip(b.values.iter())
                .all(|(x, y)| x.to_bits() == y.to_bits())
    }

    /// Apply `f` to each stored value in place. Used by the optimizer.
    pub(crate) fn update_values(&self, f: impl FnMut(usize, &mut f64)) {
        let mut inner = self.inner.borrow_mut();
        let mut f = f;
        for (i, v) in inner.values.iter_mut().enumerate() {
            f(i, v);
        }
    }

    pub fn has_finite_values(&self) -> bool {
        self.inner.borrow().values.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn from_vec_checks_length() {
        let err = Tensor::from_vec(vec![1.0, 2.0, 3.0], &[2, 2]).unwrap_err();
        assert!(err.to_string().contains("3 values for 4 slots"));
    }

    #[test]
    fn frozen_tensor_never_accumulates() {
        let t = Tensor::from_vec(vec![1.0, 2.0], &[2]).unwrap();
        t.accumulate_grad(&[1.0, 1.0]);
        assert!(t.grad().is_none());
    }

    #[test]
    fn grad_accumulates_until_zeroed() {
        let t = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
        t.accumulate_grad(&[1.0, 1.0]);
        t.accumulate_grad(&[0.5, 0.5]);
        assert_eq!(t.grad().unwrap(), vec![1.5, 1.5]);
        t.zero_grad();
        assert!(t.grad().is_none());
    }

    #[test]
    fn freezing_drops_grad() {
        let t = Tensor::param(vec![1.0], &[1]).unwrap();
        t.accumulate_grad(&[2.0]);
        t.set_requires_grad(false);
        assert!(t.grad().is_none());
        t.accumulate_grad(&[2.0]);
        assert!(t.grad().is_none());
    }

    #[test]
    fn randn_is_seed_deterministic() {
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let a = Tensor::randn(&[3, 3], 0.02, &mut r1);
        let b = Tensor::randn(&[3, 3], 0.02, &mut r2);
        assert!(a.bits_eq(&b));
    }
}
