//! Named, seeded parameter storage.
//!
//! Parameters are created in a fixed order and initialized from a ChaCha
//! stream, so a seed fully determines the initial weights.

use std::cell::RefCell;
use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{ensure, ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    Const(f64),
    Normal(f64),
    Uniform(f64),
    /// Normal with standard deviation `1 / sqrt(fan_in)`.
    LeCun { fan_in: usize },
}

pub struct ParamStore {
    vars: RefCell<Vec<(String, Var)>>,
    buffers: RefCell<std::collections::BTreeSet<String>>,
    index: RefCell<BTreeMap<String, usize>>,
    rng: RefCell<ChaCha8Rng>,
    dtype: DType,
    device: Device,
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType) -> Self {
        Self {
            vars: RefCell::new(Vec::new()),
            buffers: RefCell::new(Default::default()),
            index: RefCell::new(BTreeMap::new()),
            rng: RefCell::new(ChaCha8Rng::seed_from_u64(seed)),
            dtype,
            device: Device::Cpu,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn root(&self) -> Scope<'_> {
        Scope {
            store: self,
            prefix: String::new(),
        }
    }

    fn sample(&self, n: usize, init: Init) -> Result<Vec<f64>> {
        let mut rng = self.rng.borrow_mut();
        let bad = |e: String| ModelError::validation(format!("bad initializer: {e}"));
        Ok(match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Const(c) => vec![c; n],
            Init::Normal(std) => {
                let d = Normal::new(0.0, std).map_err(|e| bad(e.to_string()))?;
                (0..n).map(|_| d.sample(&mut *rng)).collect()
            }
            Init::LeCun { fan_in } => {
                let d = Normal::new(0.0, 1.0 / (fan_in.max(1) as f64).sqrt()).map_err(|e| bad(e.to_string()))?;
                (0..n).map(|_| d.sample(&mut *rng)).collect()
            }
            Init::Uniform(b) => {
                let d = Uniform::new_inclusive(-b, b).map_err(|e| bad(e.to_string()))?;
                (0..n).map(|_| d.sample(&mut *rng)).collect()
            }
        })
    }

    fn create(&self, name: String, shape: &[usize], init: Init) -> Result<Tensor> {
        ensure!(!self.index.borrow().contains_key(&name), "parameter `{name}` defined twice");
        let n: usize = shape.iter().product();
        let values = self.sample(n, init)?;
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        let mut vars = self.vars.borrow_mut();
        self.index.borrow_mut().insert(name.clone(), vars.len());
        vars.push((name, var));
        Ok(out)
    }

    /// Whether `name` holds statistics rather than learned weights.
    pub fn is_buffer(&self, name: &str) -> bool {
        self.buffers.borrow().contains(name)
    }

    /// Learned parameters (buffers excluded) in creation order.
    pub fn learned(&self) -> Vec<(String, Var)> {
        self.vars().into_iter().filter(|(n, _)| !self.is_buffer(n)).collect()
    }

    /// All parameters in creation order.
    pub fn vars(&self) -> Vec<(String, Var)> {
        self.vars.borrow().clone()
    }

    pub fn var(&self, name: &str) -> Option<Var> {
        let idx = *self.index.borrow().get(name)?;
        Some(self.vars.borrow()[idx].1.clone())
    }

    pub fn names(&self) -> Vec<String> {
        self.vars.borrow().iter().map(|(n, _)| n.clone()).collect()
    }

    /// Overwrites a parameter in place.
    pub fn set(&self, name: &str, value: &Tensor) -> Result<()> {
        let var = self
            .var(name)
            .ok_or_else(|| ModelError::validation(format!("no parameter named `{name}`")))?;
        ensure!(var.shape() == value.shape(), "shape mismatch for `{name}`: {:?} vs {:?}", var.shape(), value.shape());
        var.set(&value.to_dtype(self.dtype)?)?;
        Ok(())
    }

    /// Sets every parameter whose name starts with `prefix` to `value`.
    pub fn fill_prefix(&self, prefix: &str, value: f64) -> Result<usize> {
        let mut n = 0;
        for (name, var) in self.vars() {
            if name.starts_with(prefix) {
                var.set(&(var.as_tensor().zeros_like()? + value)?)?;
                n += 1;
            }
        }
        Ok(n)
    }

    pub fn num_scalars(&self) -> usize {
        self.vars.borrow().iter().map(|(_, v)| v.elem_count()).sum()
    }
}

#[derive(Clone)]
pub struct Scope<'a> {
    store: &'a ParamStore,
    prefix: String,
}

impl<'a> Scope<'a> {
    pub fn sub(&self, name: impl std::fmt::Display) -> Scope<'a> {
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        Scope {
            store: self.store,
            prefix,
        }
    }

    pub fn param(&self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        let full = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        self.store.create(full, shape, init)
    }

    /// A stored tensor that is checkpointed but never optimized.
    pub fn buffer(&self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        let t = self.param(name, shape, init)?;
        let full = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        self.store.buffers.borrow_mut().insert(full);
        Ok(t)
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }
}
