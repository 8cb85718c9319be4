//! Seeded synthetic data: Gaussian class blobs, a softmax teacher with a
//! known posterior, and random Dirichlet distributions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::dataset::Dataset;
use crate::dist::ClassDist;
use crate::error::{Error, Result};
use crate::linear::LinearModel;
use crate::sparse::SparseVector;

fn check_classes(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::InvalidParams(format!(
            "need at least 2 classes, got {k}"
        )));
    }
    Ok(())
}

fn normal_vec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

/// Class centers drawn from `N(0, separation^2 I)`; each example is its
/// class center plus unit Gaussian noise. Labels are uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBlobs {
    centers: Vec<Vec<f64>>,
}

impl GaussianBlobs {
    pub fn new(k: usize, d: usize, separation: f64, seed: u64) -> Result<Self> {
        check_classes(k)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = (0..k)
            .map(|_| normal_vec(&mut rng, d, separation))
            .collect();
        Ok(GaussianBlobs { centers })
    }

    pub fn num_classes(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let examples = (0..n)
            .map(|_| {
                let y = rng.random_range(0..self.centers.len());
                let x: Vec<f64> = self.centers[y]
                    .iter()
                    .map(|c| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        c + z
                    })
                    .collect();
                (SparseVector::from_dense(&x), y)
            })
            .collect();
        Dataset::with_classes(examples, self.dim(), self.num_classes()).expect("generated in range")
    }
}

/// One-call blob dataset; centers come from `seed`, examples from `seed + 1`.
pub fn gaussian_blobs(k: usize, d: usize, n: usize, separation: f64, seed: u64) -> Result<Dataset> {
    Ok(GaussianBlobs::new(k, d, separation, seed)?.sample(n, seed.wrapping_add(1)))
}

/// Inputs `x ~ N(0, I)`, labels drawn from `softmax(W x + b)` for a random
/// teacher model whose weights have standard deviation `scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxTeacher {
    model: LinearModel,
}

impl SoftmaxTeacher {
    pub fn new(k: usize, d: usize, scale: f64, seed: u64) -> Result<Self> {
        check_classes(k)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = normal_vec(&mut rng, k * d, scale);
        let bias = normal_vec(&mut rng, k, scale);
        Ok(SoftmaxTeacher {
            model: LinearModel::new(k, d, weights, Some(bias))?,
        })
    }

    /// The true conditional distribution.
    pub fn model(&self) -> &LinearModel {
        &self.model
    }

    pub fn sample(&self, n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.model.dim();
        let examples = (0..n)
            .map(|_| {
                let x = SparseVector::from_dense(&normal_vec(&mut rng, d, 1.0));
                let probs = self.model.predict_proba(&x).expect("dimension matches");
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let y = probs
                    .iter()
                    .position(|p| {
                        acc += p;
                        u < acc
                    })
                    .unwrap_or(probs.len() - 1);
                (x, y)
            })
            .collect();
        Dataset::with_classes(examples, d, self.model.n_out()).expect("generated in range")
    }
}

/// `n` draws from a symmetric Dirichlet with concentration `alpha` over `k`
/// classes, by normalizing Gamma variates.
pub fn dirichlet_dists(k: usize, n: usize, alpha: f64, seed: u64) -> Result<Vec<ClassDist>> {
    if k == 0 {
        return Err(Error::EmptyInput);
    }
    let gamma =
        Gamma::new(alpha, 1.0).map_err(|e| Error::InvalidParams(format!("alpha {alpha}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| dirichlet_draw(&gamma, k, &mut rng))
        .collect()
}

/// One draw; retries in the vanishing case that every variate underflows.
pub fn dirichlet_draw<R: Rng + ?Sized>(
    gamma: &Gamma<f64>,
    k: usize,
    rng: &mut R,
) -> Result<ClassDist> {
    loop {
        let raw: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = raw.iter().sum();
        if total > 0.0 && total.is_finite() {
            return ClassDist::from_probs(&raw.iter().map(|r| r / total).collect::<Vec<_>>());
        }
    }
}
