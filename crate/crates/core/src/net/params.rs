//! Flat parameter storage with hierarchical names.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Location of one named tensor inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub len: usize,
}

impl Slot {
    #[inline]
    pub fn of<'a>(&self, flat: &'a [f64]) -> &'a [f64] {
        &flat[self.offset..self.offset + self.len]
    }

    #[inline]
    pub fn of_mut<'a>(&self, flat: &'a mut [f64]) -> &'a mut [f64] {
        &mut flat[self.offset..self.offset + self.len]
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// How a tensor is initialised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Zero-mean normal with the given standard deviation.
    Normal(f64),
    Constant(f64),
    /// Repeats the given values cyclically (per-channel bias presets).
    Pattern(&'static [f64]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// Registry of named tensors; builds the layout before any values exist.
#[derive(Debug, Clone, Default)]
pub struct ParamLayout {
    tensors: Vec<TensorInfo>,
    inits: Vec<Init>,
    total: usize,
}

impl ParamLayout {
    pub fn register(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> Slot {
        let len = shape.iter().product();
        let name = name.into();
        debug_assert!(self.tensors.iter().all(|t| t.name != name), "duplicate tensor {name}");
        let slot = Slot {
            offset: self.total,
            len,
        };
        self.tensors.push(TensorInfo {
            name,
            shape: shape.to_vec(),
            offset: self.total,
            len,
        });
        self.inits.push(init);
        self.total += len;
        slot
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.tensors
    }

    pub fn find(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Total element count of tensors whose name starts with `prefix`.
    pub fn count_with_prefix(&self, prefix: &str) -> usize {
        self.tensors
            .iter()
            .filter(|t| t.name.starts_with(prefix))
            .map(|t| t.len)
            .sum()
    }

    /// Flat index ranges of tensors whose name starts with `prefix`.
    pub fn ranges_with_prefix(&self, prefix: &str) -> Vec<std::ops::Range<usize>> {
        self.tensors
            .iter()
            .filter(|t| t.name.starts_with(prefix))
            .map(|t| t.offset..t.offset + t.len)
            .collect()
    }

    /// Draws initial values; tensors are filled in registration order from
    /// one seeded stream.
    pub fn initialize(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; self.total];
        for (t, init) in self.tensors.iter().zip(&self.inits) {
            let dst = &mut values[t.offset..t.offset + t.len];
            match *init {
                Init::Normal(std) => {
                    let dist = Normal::new(0.0, std).expect("finite std");
                    dst.iter_mut().for_each(|v| *v = dist.sample(&mut rng));
                }
                Init::Constant(c) => dst.iter_mut().for_each(|v| *v = c),
                Init::Pattern(p) => dst.iter_mut().enumerate().for_each(|(i, v)| *v = p[i % p.len()]),
            }
        }
        values
    }
}
