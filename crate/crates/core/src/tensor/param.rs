use super::{Tape, Tensor, TensorError, Var};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// A named weight tensor. `grad` is present iff the parameter is trainable.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Option<Tensor<T>>,
}

impl<T: Scalar> Param<T> {
    pub fn requires_grad(&self) -> bool {
        self.grad.is_some()
    }
}

/// Ordered collection of named parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let grad = Some(Tensor::zeros(value.shape()));
        self.params.push(Param {
            name: name.into(),
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    /// Freezes or unfreezes every parameter. Frozen parameters carry no
    /// gradient buffer and are bound to tapes as constants.
    pub fn set_trainable(&mut self, trainable: bool) {
        for p in &mut self.params {
            p.grad = trainable.then(|| Tensor::zeros(p.value.shape()));
        }
    }

    pub fn zero_grad(&mut self) {
        for g in self.params.iter_mut().filter_map(|p| p.grad.as_mut()) {
            g.data_mut().iter_mut().for_each(|x| *x = T::zero());
        }
    }

    /// Copies every parameter onto `tape`; the returned vars are indexed by
    /// [`ParamId`].
    pub fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| tape.leaf(p.value.clone(), p.requires_grad()))
            .collect()
    }

    /// Adds the tape's leaf gradients for `vars` into the parameter grads.
    pub fn accumulate_grads(&mut self, tape: &Tape<T>, vars: &[Var]) {
        for (p, &v) in self.params.iter_mut().zip(vars) {
            if let (Some(acc), Some(g)) = (p.grad.as_mut(), tape.grad(v)) {
                for (a, &x) in acc.data_mut().iter_mut().zip(g) {
                    *a = *a + x;
                }
            }
        }
    }

    /// Merges `other` under `prefix`, e.g. `"adapter."`.
    pub fn extend_prefixed(&mut self, prefix: &str, other: &ParamStore<T>) {
        for p in &other.params {
            self.params.push(Param {
                name: format!("{prefix}{}", p.name),
                value: p.value.clone(),
                grad: p.grad.clone(),
            });
        }
    }

    /// Parameters whose name starts with `prefix`, with the prefix stripped.
    pub fn extract_prefixed(&self, prefix: &str) -> ParamStore<T> {
        let params = self
            .params
            .iter()
            .filter_map(|p| {
                p.name.strip_prefix(prefix).map(|n| Param {
                    name: n.to_string(),
                    value: p.value.clone(),
                    grad: p.grad.clone(),
                })
            })
            .collect();
        ParamStore { params }
    }

    /// Overwrites values by name; every name in `self` must be present in
    /// `source` with an identical shape.
    pub fn load_values(&mut self, source: &ParamStore<T>) -> Result<(), TensorError> {
        for p in &mut self.params {
            let id = source
                .id_of(&p.name)
                .ok_or_else(|| TensorError::UnknownParam(p.name.clone()))?;
            let v = source.value(id);
            if v.shape() != p.value.shape() {
                return Err(TensorError::Dimension {
                    op: "load_values",
                    lhs: p.value.shape().to_vec(),
                    rhs: v.shape().to_vec(),
                });
            }
            p.value = v.clone();
        }
        Ok(())
    }
}
