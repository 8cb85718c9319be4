//! Trained models on disk.
//!
//! A bundle is a directory holding `manifest.json`, `weights.bin`, and,
//! depending on the model, `tree.txt` and `index.hnsw`. The binary layouts
//! are described in `docs/bundle-format.md`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conformal::ProbabilisticClassifier;
use crate::dataset::LabelMap;
use crate::error::{Error, Result};
use crate::hf::TreeModel;
use crate::hnsw::HnswIndex;
use crate::linear::{LinearModel, TrainConfig};
use crate::sparse::SparseVector;
use crate::tree::{format_hierarchy, load_hierarchy};

pub const BUNDLE_VERSION: u32 = 1;
pub const WEIGHTS_MAGIC: &[u8; 8] = b"SVBWGT\0\0";
const MANIFEST: &str = "manifest.json";
const WEIGHTS: &str = "weights.bin";
const TREE: &str = "tree.txt";
const INDEX: &str = "index.hnsw";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Flat,
    Tree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub kind: ModelKind,
    pub dim: usize,
    pub num_classes: usize,
    pub labels: LabelMap,
    pub train: Option<TrainConfig>,
    pub prune_eta: Option<f64>,
    pub has_index: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Flat(LinearModel),
    Tree(TreeModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Flat(_) => ModelKind::Flat,
            Model::Tree(_) => ModelKind::Tree,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::Flat(m) => m.dim(),
            Model::Tree(t) => t.dim(),
        }
    }
}

impl ProbabilisticClassifier for Model {
    fn num_classes(&self) -> usize {
        match self {
            Model::Flat(m) => m.n_out(),
            Model::Tree(t) => t.num_classes(),
        }
    }

    fn predict_proba(&self, x: &SparseVector) -> Result<Vec<f64>> {
        match self {
            Model::Flat(m) => m.predict_proba(x),
            Model::Tree(t) => t.predict_proba(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub labels: LabelMap,
    pub model: Model,
    /// Only for flat models.
    pub index: Option<HnswIndex>,
    pub train: Option<TrainConfig>,
    pub prune_eta: Option<f64>,
}

impl Bundle {
    pub fn new(labels: LabelMap, model: Model) -> Result<Self> {
        if labels.len() != model.num_classes() {
            return Err(Error::UniverseMismatch);
        }
        Ok(Bundle {
            labels,
            model,
            index: None,
            train: None,
            prune_eta: None,
        })
    }

    pub fn with_index(mut self, index: HnswIndex) -> Result<Self> {
        match &self.model {
            Model::Flat(m)
                if m.n_out() == index.len()
                    && index.has_bias_slot()
                    && index.dim() == m.dim() + 1 =>
            {
                self.index = Some(index);
                Ok(self)
            }
            Model::Flat(_) => Err(Error::UniverseMismatch),
            Model::Tree(_) => Err(Error::ConfigConflict("an index needs a flat model".into())),
        }
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            version: BUNDLE_VERSION,
            kind: self.model.kind(),
            dim: self.model.dim(),
            num_classes: self.labels.len(),
            labels: self.labels.clone(),
            train: self.train,
            prune_eta: self.prune_eta,
            has_index: self.index.is_some(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let manifest = serde_json::to_string_pretty(&self.manifest())
            .map_err(|e| Error::Format(format!("manifest: {e}")))?;
        fs::write(dir.join(MANIFEST), manifest + "\n")?;
        let mut w = BufWriter::new(File::create(dir.join(WEIGHTS))?);
        match &self.model {
            Model::Flat(m) => write_weights(&mut w, &[(0, m)])?,
            Model::Tree(t) => {
                let blocks: Vec<(usize, &LinearModel)> = t
                    .node_models()
                    .iter()
                    .enumerate()
                    .filter_map(|(v, m)| m.as_ref().map(|m| (v, m)))
                    .collect();
                write_weights(&mut w, &blocks)?;
                fs::write(dir.join(TREE), format_hierarchy(t.tree()))?;
            }
        }
        w.flush()?;
        match &self.index {
            Some(index) => {
                let mut w = BufWriter::new(File::create(dir.join(INDEX))?);
                index.write_graph(&mut w)?;
                w.flush()?;
            }
            None => {
                if dir.join(INDEX).exists() {
                    fs::remove_file(dir.join(INDEX))?;
                }
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        if manifest.version != BUNDLE_VERSION {
            return Err(Error::Format(format!(
                "unsupported bundle version {}",
                manifest.version
            )));
        }
        if manifest.labels.len() != manifest.num_classes {
            return Err(Error::Format("label map does not match class count".into()));
        }
        let blocks = read_weights(BufReader::new(File::open(dir.join(WEIGHTS))?))?;
        let model = match manifest.kind {
            ModelKind::Flat => {
                let [(0, m)]: [(usize, LinearModel); 1] = blocks.try_into().map_err(|_| {
                    Error::Format("flat bundle needs exactly one weight block".into())
                })?
                else {
                    return Err(Error::Format("flat weight block must be node 0".into()));
                };
                if m.n_out() != manifest.num_classes || m.dim() != manifest.dim {
                    return Err(Error::Format("weights do not match manifest".into()));
                }
                Model::Flat(m)
            }
            ModelKind::Tree => {
                let tree = load_hierarchy(
                    &fs::read_to_string(dir.join(TREE))?,
                    Some(manifest.num_classes),
                )?;
                let mut nodes = vec![None; tree.len()];
                for (v, m) in blocks {
                    let slot = nodes.get_mut(v).ok_or_else(|| {
                        Error::Format(format!("weight block for missing node {v}"))
                    })?;
                    *slot = Some(m);
                }
                Model::Tree(TreeModel::new(tree, nodes, manifest.dim)?)
            }
        };
        let index = match (&model, manifest.has_index) {
            (Model::Flat(m), true) => Some(HnswIndex::read_for_model(
                BufReader::new(File::open(dir.join(INDEX))?),
                m,
            )?),
            (Model::Tree(_), true) => {
                return Err(Error::Format("tree bundle cannot carry an index".into()))
            }
            (_, false) => None,
        };
        Ok(Bundle {
            labels: manifest.labels,
            model,
            index,
            train: manifest.train,
            prune_eta: manifest.prune_eta,
        })
    }
}

fn write_weights<W: Write>(w: &mut W, blocks: &[(usize, &LinearModel)]) -> Result<()> {
    w.write_all(WEIGHTS_MAGIC)?;
    w.write_all(&BUNDLE_VERSION.to_le_bytes())?;
    w.write_all(&(blocks.len() as u64).to_le_bytes())?;
    for (node, m) in blocks {
        for v in [*node as u64, m.n_out() as u64, m.dim() as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&[u8::from(m.bias().is_some())])?;
        for x in m.weights().iter().chain(m.bias().into_iter().flatten()) {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_weights<R: Read>(mut r: R) -> Result<Vec<(usize, LinearModel)>> {
    let truncated = |_| Error::Format("truncated weights file".into());
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != WEIGHTS_MAGIC {
        return Err(Error::Format("not a weights file".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(truncated)?;
    if u32::from_le_bytes(b4) != BUNDLE_VERSION {
        return Err(Error::Format(format!(
            "unsupported weights version {}",
            u32::from_le_bytes(b4)
        )));
    }
    let read_u64 = |r: &mut R| -> Result<u64> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(truncated)?;
        Ok(u64::from_le_bytes(b))
    };
    let count = read_u64(&mut r)?;
    let mut blocks = Vec::new();
    for _ in 0..count {
        let node = read_u64(&mut r)? as usize;
        let n_out = read_u64(&mut r)? as usize;
        let dim = read_u64(&mut r)? as usize;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag).map_err(truncated)?;
        let n = n_out
            .checked_mul(dim)
            .and_then(|n| n.checked_add(if flag[0] != 0 { n_out } else { 0 }))
            .filter(|&n| n <= 1 << 34)
            .ok_or_else(|| Error::Format("weight block too large".into()))?;
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(f64::from_bits(read_u64(&mut r)?));
        }
        let bias = (flag[0] != 0).then(|| values.split_off(n_out * dim));
        blocks.push((node, LinearModel::new(n_out, dim, values, bias)?));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format("trailing bytes in weights file".into()));
    }
    Ok(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hf::train_tree;
    use crate::hnsw::HnswParams;
    use crate::synth::gaussian_blobs;
    use crate::tree::random_binary_tree;

    #[test]
    fn flat_round_trip_with_index() {
        let data = gaussian_blobs(6, 4, 120, 2.0, 1).unwrap();
        let model = crate::linear::train_flat(&data, &TrainConfig::default()).unwrap();
        let index = HnswIndex::from_model(&model, HnswParams::default()).unwrap();
        let mut bundle = Bundle::new(data.labels().clone(), Model::Flat(model))
            .unwrap()
            .with_index(index)
            .unwrap();
        bundle.train = Some(TrainConfig::default());
        let dir = tempfile::tempdir().unwrap();
        bundle.save(dir.path()).unwrap();
        let back = Bundle::load(dir.path()).unwrap();
        assert_eq!(back, bundle);
        let first = fs::read(dir.path().join(WEIGHTS)).unwrap();
        back.save(dir.path()).unwrap();
        assert_eq!(fs::read(dir.path().join(WEIGHTS)).unwrap(), first);
    }

    #[test]
    fn tree_round_trip() {
        let data = gaussian_blobs(7, 3, 140, 2.0, 2).unwrap();
        let tree = random_binary_tree(7, 3).unwrap();
        let model = train_tree(tree, &data, &TrainConfig::default()).unwrap();
        let bundle = Bundle::new(data.labels().clone(), Model::Tree(model)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        bundle.save(dir.path()).unwrap();
        assert_eq!(Bundle::load(dir.path()).unwrap(), bundle);
    }

    #[test]
    fn corrupt_weights_are_rejected() {
        let model = LinearModel::zeros(3, 2, true);
        let bundle = Bundle::new(LabelMap::identity(3), Model::Flat(model)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        bundle.save(dir.path()).unwrap();
        let path = dir.path().join(WEIGHTS);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(Bundle::load(dir.path()), Err(Error::Format(_))));
        assert!(Bundle::new(
            LabelMap::identity(2),
            Model::Flat(LinearModel::zeros(3, 2, true))
        )
        .is_err());
    }
}
