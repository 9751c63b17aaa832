use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;

/// Named parameter tensors, ordered by name. Name order defines the
/// canonical serialization and checksum order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    map: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        assert!(
            self.map.insert(name.clone(), t).is_none(),
            "duplicate parameter {name}"
        );
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.map
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.map.values().map(|t| t.len()).sum()
    }

    /// Order-sensitive FNV-1a hash over the exact bit patterns of all
    /// tensors; used to assert that interventions never touch learned
    /// parameters.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x1000_0000_01b3);
            }
        };
        for (name, t) in &self.map {
            eat(name.as_bytes());
            for &v in t.iter() {
                eat(&v.to_bits().to_le_bytes());
            }
        }
        h
    }
}

/// Deterministic parameter initializer. Draw order is fixed by the
/// order of `conv`/`linear`/... calls during model construction.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn uniform(&mut self, n: usize, bound: f64) -> Vec<f64> {
        (0..n).map(|_| self.rng.random_range(-bound..bound)).collect()
    }

    /// Kaiming-uniform kernel (fan-in scaled) plus zero bias.
    pub fn conv(
        &mut self,
        store: &mut ParamStore,
        name: &str,
        cout: usize,
        cin: usize,
        k: usize,
    ) {
        let fan_in = (cin * k * k) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let w = self.uniform(cout * cin * k * k, bound);
        store.insert(format!("{name}.w"), Tensor::new(&[cout, cin, k, k], w));
        store.insert(format!("{name}.b"), Tensor::zeros(&[cout]));
    }

    pub fn linear(&mut self, store: &mut ParamStore, name: &str, out: usize, inp: usize) {
        let bound = 1.0 / (inp as f64).sqrt();
        let w = self.uniform(out * inp, bound);
        store.insert(format!("{name}.w"), Tensor::new(&[out, inp], w));
        store.insert(format!("{name}.b"), Tensor::zeros(&[out]));
    }

    /// Channel-norm scale/shift at identity.
    pub fn norm(&mut self, store: &mut ParamStore, name: &str, c: usize) {
        store.insert(format!("{name}.gamma"), Tensor::full(&[c], 1.0));
        store.insert(format!("{name}.beta"), Tensor::zeros(&[c]));
    }
}
