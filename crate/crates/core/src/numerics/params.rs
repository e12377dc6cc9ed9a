use std::collections::BTreeMap;

use rand::Rng;

use super::scalar::Scalar;
use super::tape::{Tape, TensorId};
use super::tensor::Tensor;

/// Named parameter tensors. BTreeMap keeps iteration order deterministic,
/// which the checkpoint format and gradient accumulation both rely on.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<F> {
    map: BTreeMap<String, Tensor<F>>,
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            map: BTreeMap::new(),
        }
    }

    /// Register a matrix initialized uniformly in ±1/√fan_in.
    pub fn add_uniform(&mut self, name: &str, rows: usize, cols: usize, rng: &mut impl Rng) {
        let bound = 1.0 / (rows as f64).sqrt();
        let data: Vec<F> = (0..rows * cols)
            .map(|_| F::of(rng.gen_range(-bound..bound)))
            .collect();
        self.insert(name, Tensor::matrix(rows, cols, data));
    }

    /// Register a zero-filled matrix (bias convention).
    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize) {
        self.insert(name, Tensor::zeros(rows, cols));
    }

    pub fn insert(&mut self, name: &str, mut t: Tensor<F>) {
        t.requires_grad = true;
        assert!(
            self.map.insert(name.to_string(), t).is_none(),
            "duplicate parameter {name}"
        );
    }

    pub fn get(&self, name: &str) -> &Tensor<F> {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor<F> {
        self.map
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn total_scalars(&self) -> usize {
        self.map.values().map(|t| t.len()).sum()
    }
}

/// Gradients keyed by parameter name; one per episode, summed per batch.
#[derive(Clone, Debug, Default)]
pub struct GradMap<F> {
    map: BTreeMap<String, Vec<F>>,
}

impl<F: Scalar> GradMap<F> {
    pub fn zeros_like(store: &ParamStore<F>) -> Self {
        GradMap {
            map: store
                .iter()
                .map(|(n, t)| (n.to_string(), vec![F::zero(); t.len()]))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> &[F] {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("unknown gradient {name}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Vec<F>)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn add_assign(&mut self, other: &GradMap<F>) {
        for (name, g) in &other.map {
            let acc = self.map.get_mut(name).expect("gradient name mismatch");
            for (a, &b) in acc.iter_mut().zip(g) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, c: F) {
        for g in self.map.values_mut() {
            for x in g.iter_mut() {
                *x *= c;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        let mut acc = 0.0;
        for g in self.map.values() {
            for &x in g {
                let v = x.to_f64();
                acc += v * v;
            }
        }
        acc.sqrt()
    }
}

/// Parameter leaves bound onto one tape, by name. Binding copies values in;
/// `export_grads` copies gradients back out after a backward pass.
pub struct TapeBinding {
    ids: BTreeMap<String, TensorId>,
}

impl TapeBinding {
    pub fn bind<F: Scalar>(tape: &mut Tape<F>, store: &ParamStore<F>) -> Self {
        let mut ids = BTreeMap::new();
        for (name, t) in store.iter() {
            let id = tape.param(Tensor::new(t.shape.clone(), t.data.clone()));
            ids.insert(name.to_string(), id);
        }
        TapeBinding { ids }
    }

    pub fn id(&self, name: &str) -> TensorId {
        *self
            .ids
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} not bound"))
    }

    /// Gradients for every bound parameter; absent grads export as zeros.
    pub fn export_grads<F: Scalar>(&self, tape: &Tape<F>) -> GradMap<F> {
        let mut map = BTreeMap::new();
        for (name, &id) in &self.ids {
            let g = match tape.grad(id) {
                Some(g) => g.to_vec(),
                None => vec![F::zero(); tape.value(id).len()],
            };
            map.insert(name.clone(), g);
        }
        GradMap { map }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn binding_roundtrip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut store: ParamStore<f64> = ParamStore::new();
        store.add_uniform("w", 2, 2, &mut rng);
        store.add_zeros("b", 1, 2);

        let mut tape = Tape::new();
        let binding = TapeBinding::bind(&mut tape, &store);
        let w = binding.id("w");
        let x = tape.constant_row(vec![1.0, -1.0]);
        let y = tape.matmul(x, w).unwrap();
        let b = binding.id("b");
        let z = tape.add(y, b).unwrap();
        let loss = tape.sum(z);
        tape.backward(loss).unwrap();

        let grads = binding.export_grads(&tape);
        assert_eq!(grads.get("w"), &[1.0, 1.0, -1.0, -1.0]);
        assert_eq!(grads.get("b"), &[1.0, 1.0]);
    }

    #[test]
    fn gradmap_accumulation_and_norm() {
        let mut store: ParamStore<f64> = ParamStore::new();
        store.add_zeros("p", 1, 2);
        let mut a = GradMap::zeros_like(&store);
        let mut b = GradMap::zeros_like(&store);
        b.map.get_mut("p").unwrap()[0] = 3.0;
        b.map.get_mut("p").unwrap()[1] = 4.0;
        a.add_assign(&b);
        assert_eq!(a.global_norm(), 5.0);
        a.scale(2.0);
        assert_eq!(a.get("p"), &[6.0, 8.0]);
    }
}
