use rand::Rng;

use super::Real;
use crate::error::{Error, Result};

/// A named parameter array with its gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub dims: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn zeros(name: &str, dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Self {
            name: name.to_string(),
            dims: dims.to_vec(),
            value: vec![T::zero(); n],
            grad: vec![T::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn fill_uniform<R: Rng>(&mut self, rng: &mut R, bound: f64) {
        for v in &mut self.value {
            *v = T::of(rng.gen_range(-bound..bound));
        }
    }
}

/// Ordered collection of the network's parameter arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new(params: Vec<Param<T>>) -> Self {
        Self { params }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Param<T> {
        &self.params[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Param<T> {
        &mut self.params[idx]
    }

    pub fn by_name(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::zero());
        }
    }

    /// Sum of squares of every parameter value.
    pub fn l2_norm_sq(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.value.iter())
            .map(|v| v.as_f64() * v.as_f64())
            .sum()
    }

    /// Adds the gradient of `c * ||theta||^2`.
    pub fn add_l2_grad(&mut self, c: f64) {
        if c == 0.0 {
            return;
        }
        let two_c = T::of(2.0 * c);
        for p in &mut self.params {
            for (g, v) in p.grad.iter_mut().zip(&p.value) {
                *g += two_c * *v;
            }
        }
    }

    /// Fails on the first non-finite gradient entry.
    pub fn check_finite_grads(&self) -> Result<()> {
        for p in &self.params {
            if let Some(pos) = p.grad.iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {}[{pos}]", p.name)));
            }
        }
        Ok(())
    }

    /// Element-wise conversion to another scalar type; gradients are reset.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    dims: p.dims.clone(),
                    value: p.value.iter().map(|v| U::of(v.as_f64())).collect(),
                    grad: vec![U::zero(); p.len()],
                })
                .collect(),
        }
    }

    /// Copies values (not gradients) from another store of the same layout.
    pub fn copy_values_from(&mut self, other: &ParamStore<T>) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::Shape {
                expected: format!("{} arrays", self.params.len()),
                actual: format!("{} arrays", other.params.len()),
            });
        }
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            if a.dims != b.dims || a.name != b.name {
                return Err(Error::Shape {
                    expected: format!("{} {:?}", a.name, a.dims),
                    actual: format!("{} {:?}", b.name, b.dims),
                });
            }
            a.value.copy_from_slice(&b.value);
        }
        Ok(())
    }
}
