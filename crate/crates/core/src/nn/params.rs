use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Index of a parameter within the store that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId {
    store: u64,
    index: usize,
}

static NEXT_STORE: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    /// `None` until a backward pass accumulates into it; reset by the optimizer.
    pub grad: Option<Tensor>,
}

/// Named parameters in insertion order. Ids from one store are rejected by
/// every other store; a clone keeps its original's ids.
#[derive(Debug, Clone)]
pub struct ParamStore {
    tag: u64,
    params: Vec<Param>,
}

impl Default for ParamStore {
    fn default() -> Self {
        ParamStore::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            tag: NEXT_STORE.fetch_add(1, Ordering::Relaxed),
            params: Vec::new(),
        }
    }

    pub fn owns(&self, id: ParamId) -> bool {
        id.store == self.tag && id.index < self.params.len()
    }

    fn slot(&self, id: ParamId) -> usize {
        assert!(self.owns(id), "parameter id from another store");
        id.index
    }

    fn id(&self, index: usize) -> ParamId {
        ParamId {
            store: self.tag,
            index,
        }
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::InvalidParam(format!("duplicate parameter {name}")));
        }
        self.params.push(Param {
            name: name.to_string(),
            value,
            grad: None,
        });
        Ok(self.id(self.params.len() - 1))
    }

    /// Conv weight (Kaiming-uniform over fan-in) and zero bias.
    pub fn add_conv(
        &mut self,
        name: &str,
        cout: usize,
        cin: usize,
        k: usize,
        rng: &mut impl Rng,
    ) -> Result<(ParamId, ParamId)> {
        let fan_in = (cin * k * k) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let data = (0..cout * cin * k * k)
            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
            .collect();
        let w = self.add(&format!("{name}.w"), Tensor::new([cout, cin, k, k], data)?)?;
        let b = self.add(&format!("{name}.b"), Tensor::zeros([1, cout, 1, 1]))?;
        Ok((w, b))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        let tag = self.tag;
        (0..self.params.len()).map(move |index| ParamId { store: tag, index })
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[self.slot(id)].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[self.slot(id)].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        let i = self.slot(id);
        &mut self.params[i].value
    }

    pub fn grad(&self, id: ParamId) -> Option<&Tensor> {
        self.params[self.slot(id)].grad.as_ref()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(|i| self.id(i))
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Tensor) -> Result<()> {
        let i = self.slot(id);
        let p = &mut self.params[i];
        if g.shape() != p.value.shape() {
            return Err(Error::Shape(format!("gradient for {} has shape {:?}", p.name, g.shape())));
        }
        match &mut p.grad {
            Some(acc) => acc.add_assign(g),
            None => {
                p.grad = Some(g.clone());
                Ok(())
            }
        }
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(|p| p.grad = None);
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// All values concatenated in parameter order.
    pub fn flatten(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.value.data().iter().copied()).collect()
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_scalars() {
            return Err(Error::Shape("flat parameter vector length".into()));
        }
        let mut off = 0;
        for p in &mut self.params {
            let n = p.value.len();
            p.value.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Gradients concatenated in parameter order; zeros where absent.
    pub fn flatten_grads(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| match &p.grad {
                Some(g) => g.data().to_vec(),
                None => vec![0.0; p.value.len()],
            })
            .collect()
    }

    pub fn bits_eq(&self, other: &ParamStore) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.value.bits_eq(&b.value))
    }
}
