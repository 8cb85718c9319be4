//! Layered navigable small-world graph for maximum inner product search.
//!
//! Edges are chosen by raw inner product between stored vectors (or, in
//! augmented mode, by the inner product of vectors lifted onto a common
//! sphere). Queries always rank by plain inner product with the stored
//! vectors. Each node keeps its `M` most similar neighbors on upper layers
//! and `2M` on layer 0.
//!
//! The on-disk layout is described in `docs/hnsw-format.md`.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linear::LinearModel;
use crate::sparse::SparseVector;

pub const MAGIC: &[u8; 8] = b"SVBHNSW\0";
pub const FORMAT_VERSION: u32 = 1;
const MAX_LEVEL: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HnswParams {
    /// Maximum neighbors per node on upper layers; layer 0 allows twice this.
    pub m: usize,
    pub ef_construction: usize,
    pub seed: u64,
    /// Lift vectors onto a sphere before choosing edges.
    pub augmented: bool,
}

impl Default for HnswParams {
    fn default() -> Self {
        HnswParams {
            m: 10,
            ef_construction: 50,
            seed: 0,
            augmented: false,
        }
    }
}

impl HnswParams {
    pub fn level_lambda(&self) -> f64 {
        1.0 / (self.m as f64).ln()
    }

    fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidParams(format!(
                "M must be at least 2, got {}",
                self.m
            )));
        }
        if self.ef_construction == 0 {
            return Err(Error::InvalidParams(
                "ef_construction must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryStats {
    /// Inner products evaluated.
    pub dot_products: usize,
}

#[derive(Debug, Clone, Copy)]
struct Cand {
    sim: f64,
    id: u32,
}

impl PartialEq for Cand {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    // higher similarity first, then smaller id
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim.total_cmp(&other.sim).then(other.id.cmp(&self.id))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HnswIndex {
    params: HnswParams,
    dim: usize,
    /// Stored vectors, row-major.
    vectors: Vec<f64>,
    /// Extra coordinate used only for edge selection in augmented mode.
    lift: Vec<f64>,
    levels: Vec<usize>,
    /// `layers[l][node]`, sorted ascending; empty for nodes below level `l`.
    layers: Vec<Vec<Vec<u32>>>,
    entry: usize,
    /// Whether the last coordinate holds a class bias matched by a constant 1
    /// feature in queries.
    bias_slot: bool,
}

impl HnswIndex {
    pub fn build(vectors: &[Vec<f64>], params: HnswParams) -> Result<Self> {
        params.validate()?;
        let first = vectors.first().ok_or(Error::EmptyInput)?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::InvalidParams(
                "vectors must have at least one coordinate".into(),
            ));
        }
        if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        if vectors.len() > u32::MAX as usize {
            return Err(Error::InvalidParams("too many vectors".into()));
        }
        let flat: Vec<f64> = vectors.iter().flatten().copied().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let lambda = params.level_lambda();
        let levels: Vec<usize> = (0..vectors.len())
            .map(|_| {
                let u: f64 = rng.random();
                ((-(1.0 - u).ln() * lambda).floor() as usize).min(MAX_LEVEL)
            })
            .collect();
        let mut index = Self::empty(params, dim, flat, levels, false);
        for i in 0..index.len() {
            index.insert(i);
        }
        let added = index.repair_reachability();
        if added > 0 {
            log::debug!("added {added} edges to reach stranded nodes");
        }
        Ok(index)
    }

    /// Index over the rows of a linear model, each extended by its bias.
    pub fn from_model(model: &LinearModel, params: HnswParams) -> Result<Self> {
        let mut index = Self::build(&model_vectors(model), params)?;
        index.bias_slot = true;
        Ok(index)
    }

    /// Reattaches a graph written for `model` by [`write_graph`](Self::write_graph).
    pub fn read_for_model<R: Read>(r: R, model: &LinearModel) -> Result<Self> {
        let index = Self::read_graph(r, &model_vectors(model))?;
        if !index.bias_slot {
            return Err(Error::Format("index was not built over a model".into()));
        }
        Ok(index)
    }

    fn empty(
        params: HnswParams,
        dim: usize,
        vectors: Vec<f64>,
        levels: Vec<usize>,
        bias_slot: bool,
    ) -> Self {
        let n = levels.len();
        let top = levels.iter().copied().max().unwrap_or(0);
        let lift = if params.augmented {
            let norms: Vec<f64> = vectors
                .chunks(dim.max(1))
                .map(|v| v.iter().map(|a| a * a).sum())
                .collect();
            let phi2 = norms.iter().copied().fold(0.0, f64::max);
            norms.iter().map(|n| (phi2 - n).max(0.0).sqrt()).collect()
        } else {
            vec![0.0; n]
        };
        HnswIndex {
            params,
            dim,
            vectors,
            lift,
            levels,
            layers: vec![vec![Vec::new(); n]; top + 1],
            entry: 0,
            bias_slot,
        }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    pub fn entry_point(&self) -> usize {
        self.entry
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn level_of(&self, node: usize) -> usize {
        self.levels[node]
    }

    pub fn neighbors(&self, layer: usize, node: usize) -> &[u32] {
        &self.layers[layer][node]
    }

    pub fn has_bias_slot(&self) -> bool {
        self.bias_slot
    }

    pub fn vector(&self, node: usize) -> &[f64] {
        &self.vectors[node * self.dim..(node + 1) * self.dim]
    }

    fn build_sim(&self, a: usize, b: usize) -> f64 {
        let d: f64 = self
            .vector(a)
            .iter()
            .zip(self.vector(b))
            .map(|(x, y)| x * y)
            .sum();
        d + self.lift[a] * self.lift[b]
    }

    fn max_degree(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.params.m
        } else {
            self.params.m
        }
    }

    fn insert(&mut self, i: usize) {
        let level = self.levels[i];
        if i == 0 {
            self.entry = 0;
            return;
        }
        let top = self.levels[self.entry];
        let sim = |idx: &Self, n: usize| idx.build_sim(i, n);
        let mut counter = 0;
        let mut seeds = vec![self.entry];
        for l in (level + 1..=top).rev() {
            let best = self.search_layer(|n| sim(self, n), &seeds, 1, l, &mut counter);
            seeds = vec![best[0].id as usize];
        }
        for l in (0..=level.min(top)).rev() {
            let found = self.search_layer(
                |n| sim(self, n),
                &seeds,
                self.params.ef_construction,
                l,
                &mut counter,
            );
            let cap = self.max_degree(l);
            let chosen: Vec<u32> = found.iter().take(cap).map(|c| c.id).collect();
            let mut own = chosen.clone();
            own.sort_unstable();
            self.layers[l][i] = own;
            for &n in &chosen {
                let n = n as usize;
                let list = &mut self.layers[l][n];
                list.push(i as u32);
                if list.len() > cap {
                    let mut scored: Vec<Cand> = self.layers[l][n]
                        .iter()
                        .map(|&o| Cand {
                            sim: self.build_sim(n, o as usize),
                            id: o,
                        })
                        .collect();
                    scored.sort_unstable_by(|a, b| b.cmp(a));
                    scored.truncate(cap);
                    let mut kept: Vec<u32> = scored.into_iter().map(|c| c.id).collect();
                    kept.sort_unstable();
                    self.layers[l][n] = kept;
                } else {
                    list.sort_unstable();
                }
            }
            seeds = found.iter().map(|c| c.id as usize).collect();
        }
        if level > top {
            self.entry = i;
        }
    }

    /// Best-first search on one layer. Stops once `ef` results are held and
    /// the best open candidate is worse than all of them; with `ef` at least
    /// the number of nodes it visits everything reachable from `seeds`.
    fn search_layer<F: Fn(usize) -> f64>(
        &self,
        sim: F,
        seeds: &[usize],
        ef: usize,
        layer: usize,
        counter: &mut usize,
    ) -> Vec<Cand> {
        let mut visited: HashSet<u32> = HashSet::new();
        let mut open: BinaryHeap<Cand> = BinaryHeap::new();
        let mut results: BinaryHeap<Reverse<Cand>> = BinaryHeap::new();
        for &s in seeds {
            if visited.insert(s as u32) {
                *counter += 1;
                let c = Cand {
                    sim: sim(s),
                    id: s as u32,
                };
                open.push(c);
                results.push(Reverse(c));
                if results.len() > ef {
                    results.pop();
                }
            }
        }
        while let Some(c) = open.pop() {
            if results.len() >= ef && results.peek().is_some_and(|w| c < w.0) {
                break;
            }
            for &n in &self.layers[layer][c.id as usize] {
                if !visited.insert(n) {
                    continue;
                }
                *counter += 1;
                let cn = Cand {
                    sim: sim(n as usize),
                    id: n,
                };
                if results.len() < ef || results.peek().is_some_and(|w| cn > w.0) {
                    open.push(cn);
                    results.push(Reverse(cn));
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        results.into_sorted_vec().into_iter().map(|r| r.0).collect()
    }

    /// Validates a query against the stored dimension, appending the constant
    /// bias feature when the index was built from a model.
    pub fn prepare_query(&self, x: &SparseVector) -> Result<SparseVector> {
        let features = self.dim - usize::from(self.bias_slot);
        if x.min_dim() > features {
            return Err(Error::DimensionMismatch {
                expected: features,
                got: x.min_dim(),
            });
        }
        if !self.bias_slot {
            return Ok(x.clone());
        }
        let mut pairs = x.pairs().to_vec();
        pairs.push((features, 1.0));
        SparseVector::new(pairs)
    }

    /// Approximate top-`k` by inner product with a prepared query, best first.
    /// The search list holds `max(ef, k)` entries.
    pub fn search(&self, q: &SparseVector, k: usize, ef: usize) -> (Vec<(usize, f64)>, QueryStats) {
        let mut counter = 0;
        let sim = |n: usize| q.dot_dense(self.vector(n));
        let mut cur = self.entry;
        for l in (1..self.layers.len()).rev() {
            let best = self.search_layer(sim, &[cur], 1, l, &mut counter);
            cur = best[0].id as usize;
        }
        // the entry point reaches every node on layer 0, so seeding with it
        // keeps wide searches exhaustive
        let seeds = if cur == self.entry {
            vec![cur]
        } else {
            vec![cur, self.entry]
        };
        let found = self.search_layer(sim, &seeds, ef.max(k), 0, &mut counter);
        let out = found
            .into_iter()
            .take(k)
            .map(|c| (c.id as usize, c.sim))
            .collect();
        (
            out,
            QueryStats {
                dot_products: counter,
            },
        )
    }

    /// [`search`](Self::search) on raw features.
    pub fn query(&self, x: &SparseVector, k: usize, ef: usize) -> Result<Vec<(usize, f64)>> {
        let q = self.prepare_query(x)?;
        Ok(self.search(&q, k, ef).0)
    }

    /// Nodes reachable from the entry point on `layer`.
    pub fn reachable(&self, layer: usize) -> usize {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![self.entry];
        let mut count = 0;
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            count += 1;
            stack.extend(self.layers[layer][v].iter().map(|&n| n as usize));
        }
        count
    }

    /// Adds edges so that every layer-0 node is reachable from the entry
    /// point. A stranded node gets an in-edge from its most similar reachable
    /// node with spare capacity; when all are full, the most similar one
    /// trades its least similar neighbor that has another in-edge. Returns
    /// the number of edges added.
    pub fn repair_reachability(&mut self) -> usize {
        let n = self.len();
        let cap = self.max_degree(0);
        let mut added = 0;
        for _ in 0..=4 * n {
            let mut seen = vec![false; n];
            let mut stack = vec![self.entry];
            while let Some(v) = stack.pop() {
                if !std::mem::replace(&mut seen[v], true) {
                    stack.extend(self.layers[0][v].iter().map(|&u| u as usize));
                }
            }
            let Some(u) = seen.iter().position(|s| !s) else {
                return added;
            };
            let mut donors: Vec<Cand> = (0..n)
                .filter(|&v| seen[v])
                .map(|v| Cand {
                    sim: self.build_sim(u, v),
                    id: v as u32,
                })
                .collect();
            donors.sort_unstable_by(|a, b| b.cmp(a));
            if let Some(d) = donors
                .iter()
                .find(|d| self.layers[0][d.id as usize].len() < cap)
            {
                self.layers[0][d.id as usize].push(u as u32);
            } else {
                let mut in_degree = vec![0usize; n];
                for &a in self.layers[0].iter().flatten() {
                    in_degree[a as usize] += 1;
                }
                let swap = donors.iter().find_map(|d| {
                    let v = d.id as usize;
                    self.layers[0][v]
                        .iter()
                        .filter(|&&w| in_degree[w as usize] >= 2)
                        .map(|&w| Cand {
                            sim: self.build_sim(v, w as usize),
                            id: w,
                        })
                        .min()
                        .map(|w| (v, w.id))
                });
                // full lists put cap >= 2 in-edges per reachable node on
                // average, so some neighbor has a spare in-edge
                let (v, w) = swap.expect("repair swap");
                self.layers[0][v].retain(|&a| a != w);
                self.layers[0][v].push(u as u32);
            }
            for list in self.layers[0].iter_mut() {
                list.sort_unstable();
            }
            added += 1;
        }
        log::warn!("layer 0 still has stranded nodes after {added} repairs");
        added
    }

    /// Writes the graph (not the vectors) in the versioned binary layout.
    pub fn write_graph<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        for v in [
            self.dim as u64,
            self.len() as u64,
            self.params.m as u64,
            self.params.ef_construction as u64,
            self.layers.len() as u64,
            self.params.seed,
            self.entry as u64,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&[u8::from(self.params.augmented), u8::from(self.bias_slot)])?;
        let mut buf = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let members: Vec<usize> = (0..self.len()).filter(|&v| self.levels[v] >= l).collect();
            write_varint(&mut buf, members.len() as u64);
            let mut prev = 0;
            for &v in &members {
                write_varint(&mut buf, (v - prev) as u64);
                prev = v;
                let adj = &layer[v];
                write_varint(&mut buf, adj.len() as u64);
                let mut p = 0u32;
                for &a in adj {
                    write_varint(&mut buf, u64::from(a - p));
                    p = a;
                }
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_graph(&mut out).expect("writing to memory");
        out
    }

    /// Reads a graph written by [`write_graph`](Self::write_graph) and
    /// attaches it to `vectors`, which must be the ones it was built over.
    pub fn read_graph<R: Read>(mut r: R, vectors: &[Vec<f64>]) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor {
            bytes: &bytes,
            pos: 0,
        };
        if cur.take(8)? != MAGIC {
            return Err(Error::Format("not an index file".into()));
        }
        let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported index version {version}"
            )));
        }
        let mut header = [0u64; 7];
        for h in header.iter_mut() {
            *h = u64::from_le_bytes(cur.take(8)?.try_into().unwrap());
        }
        let [dim, n, m, ef_c, n_layers, _, entry] = header.map(|v| v as usize);
        let flags = cur.take(2)?;
        let params = HnswParams {
            m,
            ef_construction: ef_c,
            seed: header[5],
            augmented: flags[0] != 0,
        };
        params.validate()?;
        if vectors.len() != n {
            return Err(Error::Format(format!(
                "index has {n} nodes, got {} vectors",
                vectors.len()
            )));
        }
        if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        if n == 0 || entry >= n || n_layers == 0 || n_layers > MAX_LEVEL + 1 {
            return Err(Error::Format("bad index header".into()));
        }
        let mut levels = vec![0usize; n];
        let mut layers = vec![vec![Vec::new(); n]; n_layers];
        for (l, layer) in layers.iter_mut().enumerate() {
            let count = cur.varint()? as usize;
            if count > n || (l == 0 && count != n) {
                return Err(Error::Format(format!("layer {l} lists {count} nodes")));
            }
            let mut v = 0usize;
            for i in 0..count {
                let delta = cur.varint()? as usize;
                if i > 0 && delta == 0 {
                    return Err(Error::Format(format!("layer {l}: repeated node")));
                }
                v += delta;
                if v >= n || (l > 0 && levels[v] != l - 1) {
                    return Err(Error::Format(format!("layer {l}: bad node {v}")));
                }
                levels[v] = l;
                let degree = cur.varint()? as usize;
                if degree > n {
                    return Err(Error::Format(format!("layer {l}: degree {degree}")));
                }
                let mut adj = Vec::with_capacity(degree);
                let mut a = 0u64;
                for j in 0..degree {
                    let d = cur.varint()?;
                    if j > 0 && d == 0 {
                        return Err(Error::Format(format!("layer {l}: repeated neighbor")));
                    }
                    a += d;
                    if a >= n as u64 {
                        return Err(Error::Format(format!(
                            "layer {l}: neighbor {a} out of range"
                        )));
                    }
                    adj.push(a as u32);
                }
                layer[v] = adj;
            }
        }
        if cur.pos != bytes.len() {
            return Err(Error::Format("trailing bytes in index file".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.iter().flatten().any(|&a| levels[a as usize] < l) {
                return Err(Error::Format(format!("layer {l}: edge to a node below it")));
            }
        }
        if levels[entry] != n_layers - 1 {
            return Err(Error::Format("entry point is not on the top layer".into()));
        }
        let flat = vectors.iter().flatten().copied().collect();
        let mut index = Self::empty(params, dim, flat, levels, flags[1] != 0);
        index.layers = layers;
        index.entry = entry;
        Ok(index)
    }
}

/// Rows `[w_c, b_c]` of a linear model.
pub fn model_vectors(model: &LinearModel) -> Vec<Vec<f64>> {
    (0..model.n_out())
        .map(|c| {
            let mut v = model.weight_row(c).to_vec();
            v.push(model.bias_of(c));
            v
        })
        .collect()
}

fn write_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Format("truncated index file".into()))?;
        self.pos = end;
        Ok(slice)
    }

    fn varint(&mut self) -> Result<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.take(1)?[0];
            v |= u64::from(b & 0x7f) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::Format("varint overflow".into()))
    }
}

/// Exact top-`k` by inner product; ties broken by smaller id.
pub fn exact_top_k(vectors: &[Vec<f64>], q: &SparseVector, k: usize) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> =
        vectors.iter().map(|v| q.dot_dense(v)).enumerate().collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    #[test]
    fn single_vector() {
        let index = HnswIndex::build(&[vec![1.0, 2.0]], HnswParams::default()).unwrap();
        assert_eq!(index.entry_point(), 0);
        let q = SparseVector::from_dense(&[1.0, 0.0]);
        assert_eq!(index.search(&q, 5, 5).0, vec![(0, 1.0)]);
    }

    #[test]
    fn build_errors() {
        assert!(matches!(
            HnswIndex::build(&[], HnswParams::default()),
            Err(Error::EmptyInput)
        ));
        assert!(matches!(
            HnswIndex::build(&[vec![1.0], vec![1.0, 2.0]], HnswParams::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        let bad = HnswParams {
            m: 1,
            ..Default::default()
        };
        assert!(HnswIndex::build(&[vec![1.0]], bad).is_err());
    }

    #[test]
    fn structure_invariants() {
        let vectors = gaussian(100, 8, 1);
        let params = HnswParams {
            m: 10,
            ef_construction: 50,
            seed: 2,
            augmented: false,
        };
        let index = HnswIndex::build(&vectors, params).unwrap();
        assert_eq!(index.reachable(0), 100);
        for l in 0..index.num_layers() {
            for v in 0..index.len() {
                let adj = index.neighbors(l, v);
                assert!(adj.len() <= index.max_degree(l));
                assert!(adj.windows(2).all(|w| w[0] < w[1]));
                assert!(!adj.contains(&(v as u32)));
                if index.level_of(v) < l {
                    assert!(adj.is_empty());
                }
                for &n in adj {
                    assert!(index.level_of(n as usize) >= l);
                }
            }
        }
        assert_eq!(index.level_of(index.entry_point()), index.num_layers() - 1);
    }

    #[test]
    fn exhaustive_search_is_exact() {
        let vectors = gaussian(60, 6, 3);
        // 2M >= K - 1 makes layer 0 complete
        let params = HnswParams {
            m: 30,
            ef_construction: 60,
            seed: 0,
            augmented: false,
        };
        let index = HnswIndex::build(&vectors, params).unwrap();
        for s in 0..20 {
            let q = SparseVector::from_dense(&gaussian(1, 6, 100 + s)[0]);
            assert_eq!(index.search(&q, 60, 60).0, exact_top_k(&vectors, &q, 60));
        }
        let sparse = HnswIndex::build(&vectors, HnswParams { m: 3, ..params }).unwrap();
        let q = SparseVector::from_dense(&gaussian(1, 6, 7)[0]);
        assert_eq!(sparse.reachable(0), 60);
        assert_eq!(sparse.search(&q, 60, 60).0, exact_top_k(&vectors, &q, 60));
    }

    #[test]
    fn duplicates_are_retrievable() {
        let mut vectors = gaussian(30, 4, 5);
        vectors.push(vectors[3].clone());
        let index = HnswIndex::build(&vectors, HnswParams::default()).unwrap();
        let q = SparseVector::from_dense(&vectors[3]);
        let found = index.search(&q, 31, 31).0;
        let ids: HashSet<usize> = found.iter().map(|e| e.0).collect();
        assert_eq!(ids.len(), 31);
        assert!(ids.contains(&3) && ids.contains(&30));
    }

    #[test]
    fn recall_at_10() {
        let vectors = gaussian(500, 16, 11);
        let params = HnswParams {
            m: 10,
            ef_construction: 50,
            seed: 1,
            augmented: false,
        };
        let index = HnswIndex::build(&vectors, params).unwrap();
        let queries = gaussian(1000, 16, 12);
        let mut hits = 0;
        for q in &queries {
            let q = SparseVector::from_dense(q);
            let truth: HashSet<usize> = exact_top_k(&vectors, &q, 10)
                .into_iter()
                .map(|e| e.0)
                .collect();
            hits += index
                .search(&q, 10, 100)
                .0
                .iter()
                .filter(|e| truth.contains(&e.0))
                .count();
        }
        let recall = hits as f64 / 10_000.0;
        assert!(recall >= 0.95, "recall@10 = {recall}");
    }

    #[test]
    fn augmented_mode_builds_and_searches() {
        let mut vectors = gaussian(200, 8, 4);
        for (i, v) in vectors.iter_mut().enumerate() {
            let scale = 1.0 + (i % 5) as f64;
            v.iter_mut().for_each(|a| *a *= scale);
        }
        let params = HnswParams {
            augmented: true,
            ..Default::default()
        };
        let index = HnswIndex::build(&vectors, params).unwrap();
        assert_eq!(index.reachable(0), 200);
        let q = SparseVector::from_dense(&gaussian(1, 8, 9)[0]);
        assert_eq!(index.search(&q, 200, 200).0, exact_top_k(&vectors, &q, 200));
    }

    #[test]
    fn graph_round_trip_and_determinism() {
        let vectors = gaussian(150, 5, 6);
        let params = HnswParams {
            m: 6,
            ef_construction: 30,
            seed: 42,
            augmented: false,
        };
        let a = HnswIndex::build(&vectors, params).unwrap();
        let b = HnswIndex::build(&vectors, params).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let back = HnswIndex::read_graph(a.to_bytes().as_slice(), &vectors).unwrap();
        assert_eq!(back, a);
        let other = HnswIndex::build(&vectors, HnswParams { seed: 43, ..params }).unwrap();
        assert_ne!(other.to_bytes(), a.to_bytes());

        let bytes = a.to_bytes();
        assert!(HnswIndex::read_graph(&bytes[..bytes.len() - 1], &vectors).is_err());
        assert!(HnswIndex::read_graph(&bytes[..], &vectors[1..]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            HnswIndex::read_graph(bad.as_slice(), &vectors),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn repair_connects_stranded_nodes() {
        let vectors = gaussian(40, 4, 8);
        let mut index = HnswIndex::build(
            &vectors,
            HnswParams {
                m: 2,
                ..Default::default()
            },
        )
        .unwrap();
        for v in 0..40 {
            index.layers[0][v].retain(|&n| n != 7);
        }
        assert!(index.reachable(0) < 40);
        assert!(index.repair_reachability() >= 1);
        assert_eq!(index.reachable(0), 40);
        assert_eq!(index.repair_reachability(), 0);
    }

    #[test]
    fn model_index_appends_bias() {
        let model = LinearModel::new(
            3,
            2,
            vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.5],
            Some(vec![0.0, 0.0, 2.0]),
        )
        .unwrap();
        let index = HnswIndex::from_model(&model, HnswParams::default()).unwrap();
        let x = SparseVector::from_dense(&[1.0, 0.0]);
        let top = index.query(&x, 3, 3).unwrap();
        assert_eq!(top[0], (2, 2.5));
        assert!(index
            .query(&SparseVector::from_dense(&[0.0, 0.0, 1.0]), 1, 1)
            .is_err());
    }
}
