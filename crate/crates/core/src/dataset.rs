//! Labelled sparse datasets and the svmlight text format.
//!
//! Labels in svmlight files are arbitrary integers; a [`LabelMap`] maps them
//! onto dense class ids `0..K` (sorted by original label) and is persisted
//! with trained models so test files are remapped consistently.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseVector;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    labels: Vec<i64>,
}

impl LabelMap {
    pub fn new(mut labels: Vec<i64>) -> Self {
        labels.sort_unstable();
        labels.dedup();
        LabelMap { labels }
    }

    /// Identity map over `0..k`.
    pub fn identity(k: usize) -> Self {
        LabelMap {
            labels: (0..k as i64).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_of(&self, label: i64) -> Option<usize> {
        self.labels.binary_search(&label).ok()
    }

    pub fn label_of(&self, class: usize) -> i64 {
        self.labels[class]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<(SparseVector, usize)>,
    dim: usize,
    labels: LabelMap,
}

impl Dataset {
    pub fn new(examples: Vec<(SparseVector, usize)>, dim: usize, labels: LabelMap) -> Result<Self> {
        let k = labels.len();
        for (x, y) in &examples {
            if *y >= k {
                return Err(Error::InvalidParams(format!(
                    "class {y} outside universe of {k}"
                )));
            }
            if x.min_dim() > dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: x.min_dim(),
                });
            }
        }
        Ok(Dataset {
            examples,
            dim,
            labels,
        })
    }

    /// Dataset over dense class ids `0..num_classes`.
    pub fn with_classes(
        examples: Vec<(SparseVector, usize)>,
        dim: usize,
        num_classes: usize,
    ) -> Result<Self> {
        Self::new(examples, dim, LabelMap::identity(num_classes))
    }

    pub fn examples(&self) -> &[(SparseVector, usize)] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &LabelMap {
        &self.labels
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for (_, y) in &self.examples {
            counts[*y] += 1;
        }
        counts
    }

    /// Subset by example index, same dimension and label map.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            dim: self.dim,
            labels: self.labels.clone(),
        }
    }

    /// Seeded random hold-out: returns `(rest, held_out)` where `held_out`
    /// has `round(fraction * n)` examples. Both keep the original order.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidParams(format!(
                "split fraction {fraction} outside [0, 1]"
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_held = (fraction * self.len() as f64).round() as usize;
        let mut held = order[..n_held].to_vec();
        let mut rest = order[n_held..].to_vec();
        held.sort_unstable();
        rest.sort_unstable();
        Ok((self.select(&rest), self.select(&held)))
    }

    /// Widens the feature space; fails if `dim` is smaller than needed.
    pub fn with_dim(mut self, dim: usize) -> Result<Self> {
        let needed = self
            .examples
            .iter()
            .map(|(x, _)| x.min_dim())
            .max()
            .unwrap_or(0);
        if needed > dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: needed,
            });
        }
        self.dim = dim;
        Ok(self)
    }
}

/// Raw contents of an svmlight file, labels not yet remapped.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmlightData {
    pub rows: Vec<(SparseVector, i64)>,
    pub dim: usize,
}

impl SvmlightData {
    /// Remaps labels through `labels`, or through a map built from the file
    /// itself when `None`.
    pub fn into_dataset(self, labels: Option<&LabelMap>) -> Result<Dataset> {
        let labels = match labels {
            Some(map) => map.clone(),
            None => LabelMap::new(self.rows.iter().map(|(_, y)| *y).collect()),
        };
        let mut examples = Vec::with_capacity(self.rows.len());
        for (line, (x, y)) in self.rows.into_iter().enumerate() {
            let class = labels.class_of(y).ok_or_else(|| Error::Parse {
                line: line + 1,
                msg: format!("label {y} unknown to the model"),
            })?;
            examples.push((x, class));
        }
        Dataset::new(examples, self.dim, labels)
    }
}

/// Parses svmlight text: `label idx:val idx:val ...` per line, `#` comments.
/// `index_base` is 0 or 1; indices are shifted to start at 0.
pub fn parse_svmlight(text: &str, index_base: usize) -> Result<SvmlightData> {
    if index_base > 1 {
        return Err(Error::InvalidParams("index base must be 0 or 1".into()));
    }
    let mut rows = Vec::new();
    let mut dim = 0;
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label = parse_label(label_tok).ok_or_else(|| Error::Parse {
            line,
            msg: format!("bad label `{label_tok}`"),
        })?;
        let mut pairs: Vec<(usize, f64)> = Vec::new();
        for tok in tokens {
            if tok.starts_with("qid:") {
                continue;
            }
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line,
                msg: format!("expected index:value, got `{tok}`"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad index `{idx}`"),
            })?;
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad value `{val}`"),
            })?;
            if idx < index_base {
                return Err(Error::Parse {
                    line,
                    msg: format!("index {idx} below base {index_base}"),
                });
            }
            let idx = idx - index_base;
            if pairs.last().is_some_and(|&(prev, _)| prev >= idx) {
                return Err(Error::NonMonotoneIndices { line });
            }
            pairs.push((idx, val));
        }
        let x = SparseVector::new(pairs).expect("indices checked above");
        dim = dim.max(x.min_dim());
        rows.push((x, label));
    }
    Ok(SvmlightData { rows, dim })
}

fn parse_label(tok: &str) -> Option<i64> {
    tok.parse::<i64>().ok().or_else(|| {
        let v: f64 = tok.parse().ok()?;
        (v.fract() == 0.0 && v.is_finite()).then_some(v as i64)
    })
}

pub fn read_svmlight(path: &Path, index_base: usize) -> Result<SvmlightData> {
    parse_svmlight(&fs::read_to_string(path)?, index_base)
}

/// Writes a dataset with original labels and the given index base.
/// Values use Rust's shortest round-trip float formatting.
pub fn format_svmlight(data: &Dataset, index_base: usize) -> String {
    let mut out = String::new();
    for (x, y) in data.examples() {
        write!(out, "{}", data.labels().label_of(*y)).unwrap();
        for &(i, v) in x.pairs() {
            write!(out, " {}:{}", i + index_base, v).unwrap();
        }
        out.push('\n');
    }
    out
}
