//! Provider backed by approximate inner-product search with a doubling
//! query size.
//!
//! The first query fetches the top `k0` classes; each time the retrieved
//! list runs out the index is queried again with twice the size and only
//! unseen ids are appended. Masses are `exp(w_c . x + b_c - m)` where `m` is
//! the best score of the first batch. They are not normalized, which leaves
//! the prefix search's decision unchanged.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::hnsw::HnswIndex;
use crate::inference::ClassProvider;
use crate::sparse::SparseVector;

pub struct HsgProvider<'a> {
    index: &'a HnswIndex,
    query: SparseVector,
    ef_search: Option<usize>,
    current_k: usize,
    retrieved: Vec<(usize, f64)>,
    seen: HashSet<usize>,
    cursor: usize,
    shift: f64,
    query_sizes: Vec<usize>,
    late_finds: usize,
    dot_products: usize,
}

impl<'a> HsgProvider<'a> {
    /// Runs the initial query of size `k0`. The search list holds
    /// `max(ef_search, k)` entries; `None` means `k`.
    pub fn new(
        index: &'a HnswIndex,
        x: &SparseVector,
        k0: usize,
        ef_search: Option<usize>,
    ) -> Result<Self> {
        if k0 == 0 {
            return Err(Error::InvalidParams(
                "initial query size must be positive".into(),
            ));
        }
        let query = index.prepare_query(x)?;
        let mut provider = HsgProvider {
            index,
            query,
            ef_search,
            current_k: k0.min(index.len()),
            retrieved: Vec::new(),
            seen: HashSet::new(),
            cursor: 0,
            shift: 0.0,
            query_sizes: Vec::new(),
            late_finds: 0,
            dot_products: 0,
        };
        let batch = provider.run_query();
        provider.shift = batch.first().map_or(0.0, |e| e.1);
        provider.append(batch);
        Ok(provider)
    }

    fn run_query(&mut self) -> Vec<(usize, f64)> {
        let k = self.current_k;
        let ef = self.ef_search.map_or(k, |ef| ef.max(k));
        let (found, stats) = self.index.search(&self.query, k, ef);
        self.query_sizes.push(k);
        self.dot_products += stats.dot_products;
        found
    }

    fn append(&mut self, batch: Vec<(usize, f64)>) {
        let floor = self.retrieved.last().map(|e| e.1);
        for (id, score) in batch {
            if !self.seen.insert(id) {
                continue;
            }
            let mut mass = (score - self.shift).exp();
            if let Some(f) = floor {
                if mass > f {
                    self.late_finds += 1;
                    mass = f;
                }
            }
            self.retrieved.push((id, mass));
        }
    }

    /// Query sizes issued so far, in order.
    pub fn query_sizes(&self) -> &[usize] {
        &self.query_sizes
    }

    /// Entries from later batches that outscored already emitted ones and
    /// were clamped to the last emitted mass.
    pub fn late_finds(&self) -> usize {
        self.late_finds
    }

    pub fn dot_products(&self) -> usize {
        self.dot_products
    }
}

impl ClassProvider for HsgProvider<'_> {
    fn num_classes(&self) -> usize {
        self.index.len()
    }

    fn next_class(&mut self) -> Option<(usize, f64)> {
        while self.cursor >= self.retrieved.len() {
            if self.current_k >= self.index.len() {
                return None;
            }
            self.current_k = (2 * self.current_k).min(self.index.len());
            let batch = self.run_query();
            self.append(batch);
        }
        let item = self.retrieved[self.cursor];
        self.cursor += 1;
        Some(item)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::full::FullProvider;
    use crate::hnsw::HnswParams;
    use crate::linear::LinearModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_model(k: usize, d: usize, seed: u64) -> LinearModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..k * d)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let b: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
        LinearModel::new(k, d, w, Some(b)).unwrap()
    }

    fn random_x(d: usize, seed: u64) -> SparseVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        SparseVector::from_dense(&v)
    }

    #[test]
    fn doubling_sizes() {
        let model = random_model(100, 8, 1);
        let index = HnswIndex::from_model(&model, HnswParams::default()).unwrap();
        let x = random_x(8, 2);
        let mut p = HsgProvider::new(&index, &x, 10, None).unwrap();
        let mut ids = HashSet::new();
        while let Some((c, _)) = p.next_class() {
            assert!(ids.insert(c));
        }
        assert_eq!(p.query_sizes(), &[10, 20, 40, 80, 100]);
        assert!(ids.len() <= 100);
    }

    #[test]
    fn exact_mode_matches_full_provider() {
        let model = random_model(100, 8, 3);
        let index = HnswIndex::from_model(&model, HnswParams::default()).unwrap();
        for s in 0..100 {
            let x = random_x(8, 100 + s);
            let mut hsg = HsgProvider::new(&index, &x, 10, Some(100)).unwrap();
            let mut full = FullProvider::new(&model, &x, false).unwrap();
            let a: Vec<(usize, f64)> = std::iter::from_fn(|| hsg.next_class()).collect();
            let b: Vec<(usize, f64)> = std::iter::from_fn(|| full.next_class()).collect();
            assert_eq!(a.len(), 100);
            for (ea, eb) in a.iter().zip(&b) {
                assert_eq!(ea.0, eb.0);
                assert!((ea.1 - eb.1).abs() <= 1e-12 * eb.1.max(1.0));
            }
            assert_eq!(hsg.late_finds(), 0);
        }
    }

    #[test]
    fn zero_input_gives_uniform_masses_in_id_order() {
        let model = LinearModel::new(5, 3, vec![0.5; 15], None).unwrap();
        let index = HnswIndex::from_model(&model, HnswParams::default()).unwrap();
        let x = SparseVector::default();
        let mut p = HsgProvider::new(&index, &x, 2, Some(5)).unwrap();
        let out: Vec<(usize, f64)> = std::iter::from_fn(|| p.next_class()).collect();
        assert_eq!(out, (0..5).map(|c| (c, 1.0)).collect::<Vec<_>>());
    }

    #[test]
    fn masses_never_increase() {
        let model = random_model(300, 6, 5);
        let params = HnswParams {
            m: 4,
            ef_construction: 8,
            ..Default::default()
        };
        let index = HnswIndex::from_model(&model, params).unwrap();
        for s in 0..30 {
            let x = random_x(6, 500 + s);
            let mut p = HsgProvider::new(&index, &x, 3, None).unwrap();
            let out: Vec<(usize, f64)> = std::iter::from_fn(|| p.next_class()).collect();
            for w in out.windows(2) {
                assert!(w[0].1 >= w[1].1);
            }
        }
    }

    #[test]
    fn dimension_is_checked() {
        let model = random_model(4, 3, 0);
        let index = HnswIndex::from_model(&model, HnswParams::default()).unwrap();
        let x = SparseVector::from_dense(&[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            HsgProvider::new(&index, &x, 2, None),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
