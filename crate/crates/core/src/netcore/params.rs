use serde::{Deserialize, Serialize};

use crate::error::{HgnError, Result};
use crate::scalar::Real;

/// One named parameter array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { name: name.into(), shape, data: vec![T::zero(); n] }
    }

    /// Number of inputs feeding one output unit (product of all but the first dimension).
    pub fn fan_in(&self) -> usize {
        self.shape.iter().skip(1).product::<usize>().max(1)
    }
}

/// Ordered parameter collection; slot indices are stable for a given config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet<T> {
    pub params: Vec<Param<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    /// Same layout, all zeros. Used for gradient and moment buffers.
    pub fn zeros_like(&self) -> Self {
        Self {
            params: self.params.iter().map(|p| Param::zeros(p.name.clone(), p.shape.clone())).collect(),
        }
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    /// `self += scale * other`, slot by slot.
    pub fn add_scaled(&mut self, other: &Self, scale: T) -> Result<()> {
        if !self.same_layout(other) {
            return Err(HgnError::Contract("parameter layouts differ".into()));
        }
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * y;
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: p.data.iter().map(|v| U::lit(v.as_f64())).collect(),
                })
                .collect(),
        }
    }

    pub fn iter_values(&self) -> impl Iterator<Item = T> + '_ {
        self.params.iter().flat_map(|p| p.data.iter().copied())
    }
}
