//! Trainable parameter storage, shared between graphs and optimizers.

use std::cell::RefCell;
use std::rc::Rc;

struct Inner {
    name: String,
    shape: Vec<usize>,
    value: Vec<f64>,
    grad: Vec<f64>,
}

/// A named tensor that persists across training steps. Graph leaves bound
/// to it receive gradient accumulation from `Graph::backward`.
#[derive(Clone)]
pub struct Parameter {
    inner: Rc<RefCell<Inner>>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, shape: &[usize], value: Vec<f64>) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(n, value.len(), "parameter value length must match shape");
        Parameter {
            inner: Rc::new(RefCell::new(Inner {
                name: name.into(),
                shape: shape.to_vec(),
                value,
                grad: vec![0.0; n],
            })),
        }
    }

    pub fn name(&self) -> String {
        self.inner.borrow().name.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self) -> Vec<f64> {
        self.inner.borrow().value.clone()
    }

    pub fn grad(&self) -> Vec<f64> {
        self.inner.borrow().grad.clone()
    }

    pub fn set_value(&self, v: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        assert_eq!(inner.value.len(), v.len());
        inner.value.copy_from_slice(v);
    }

    pub fn zero_grad(&self) {
        for g in self.inner.borrow_mut().grad.iter_mut() {
            *g = 0.0;
        }
    }

    pub(crate) fn accumulate_grad(&self, delta: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        debug_assert_eq!(inner.grad.len(), delta.len());
        for (g, d) in inner.grad.iter_mut().zip(delta) {
            *g += d;
        }
    }

    /// Apply `f(value, grad)` in place; used by optimizers.
    pub fn update(&self, f: impl FnOnce(&mut [f64], &[f64])) {
        let inner = &mut *self.inner.borrow_mut();
        f(&mut inner.value, &inner.grad);
    }

    /// Independent copy: shares nothing with `self`.
    pub fn deep_copy(&self) -> Parameter {
        let inner = self.inner.borrow();
        Parameter::new(inner.name.clone(), &inner.shape, inner.value.clone())
    }

    /// Same underlying storage?
    pub fn ptr_eq(&self, other: &Parameter) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }
}

impl std::fmt::Debug for Parameter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.borrow();
        write!(f, "Parameter({} {:?})", inner.name, inner.shape)
    }
}
