//! Bayes-optimal set-valued prediction.
//!
//! For a utility of the `g(|Ŷ|)`-family the expected utility of a set is
//! `g(|Ŷ|) * P(Ŷ|x)`, so for every size `s` the best set is the prefix of
//! the `s` most probable classes. [`Svbop`] walks those prefixes in order,
//! pulling classes from a [`ClassProvider`], and stops at the first strict
//! decrease of the expected utility. For strictly decreasing,
//! `(1/x)`-convex `g` the prefix utilities are unimodal, so the first
//! decrease marks the global optimum.

use crate::dist::{desc_mass_then_id, ClassDist};
use crate::error::{Error, Result};
use crate::utility::{Utility, UtilitySpec};

/// Largest universe accepted by the exhaustive oracle.
pub const BRUTE_FORCE_MAX_CLASSES: usize = 22;

/// Relative slack allowed when checking that provider masses do not increase.
const MONOTONE_RTOL: f64 = 1e-12;

/// Streams classes in non-increasing order of (possibly unnormalized)
/// conditional probability. Each class is emitted at most once.
pub trait ClassProvider {
    /// Size of the class universe the provider ranges over.
    fn num_classes(&self) -> usize;

    fn next_class(&mut self) -> Option<(usize, f64)>;
}

impl<P: ClassProvider + ?Sized> ClassProvider for &mut P {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }

    fn next_class(&mut self) -> Option<(usize, f64)> {
        (**self).next_class()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    /// Predicted classes, in provider emission order.
    pub classes: Vec<usize>,
    /// Sum of the masses of `classes`.
    pub cum_mass: f64,
    /// Expected utility `g(|classes|) * cum_mass`, when a utility was involved.
    pub utility: Option<f64>,
    /// Number of classes pulled from the provider.
    pub steps_queried: usize,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn contains(&self, class: usize) -> bool {
        self.classes.contains(&class)
    }

    /// Class ids in ascending order.
    pub fn sorted_classes(&self) -> Vec<usize> {
        let mut v = self.classes.clone();
        v.sort_unstable();
        v
    }
}

/// Set-valued Bayes-optimal predictor for a fixed utility and universe size.
#[derive(Debug, Clone)]
pub struct Svbop {
    g: Vec<f64>,
    early_stop: bool,
}

impl Svbop {
    /// Prepares the predictor. Unless `force_full_scan` is set, the utility
    /// must be strictly decreasing and `(1/x)`-convex over `1..=k`, which is
    /// what makes early stopping exact.
    pub fn new(spec: &UtilitySpec, k: usize, force_full_scan: bool) -> Result<Self> {
        if k == 0 {
            return Err(Error::EmptyInput);
        }
        if matches!(spec.utility(), Utility::Reject { .. }) {
            return Err(Error::UnsupportedUtility(
                "reject is only defined at s = 1 and s = K; use genreject with a small beta".into(),
            ));
        }
        let spec = spec.with_classes(k)?;
        if !force_full_scan {
            if !spec.is_strictly_decreasing(k)? {
                return Err(Error::UnsupportedUtility(format!(
                    "{spec} is not strictly decreasing; early stopping needs force_full_scan"
                )));
            }
            let convex = match spec.is_one_over_x_convex(k) {
                Ok(convex) => convex,
                Err(Error::NonPositiveG { .. }) => false,
                Err(e) => return Err(e),
            };
            if !convex {
                return Err(Error::UnsupportedUtility(format!(
                    "{spec} is not (1/x)-convex; early stopping needs force_full_scan"
                )));
            }
        }
        Ok(Svbop {
            g: spec.table(k)?,
            early_stop: !force_full_scan,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.g.len()
    }

    pub fn early_stopping(&self) -> bool {
        self.early_stop
    }

    /// Runs the prefix search against a freshly initialized provider.
    pub fn predict<P: ClassProvider + ?Sized>(&self, provider: &mut P) -> Result<PredictionSet> {
        let k = self.g.len();
        let mut classes = Vec::new();
        let mut cum_mass = 0.0;
        let mut best = (0usize, 0.0f64, 0.0f64); // (size, utility, mass)
        let mut prev_mass = f64::INFINITY;

        while let Some((class, mass)) = provider.next_class() {
            if mass > prev_mass + MONOTONE_RTOL * prev_mass.abs() {
                return Err(Error::NonMonotoneProvider {
                    prev: prev_mass,
                    next: mass,
                });
            }
            prev_mass = mass;
            classes.push(class);
            if classes.len() > k {
                return Err(Error::Invariant(format!(
                    "provider emitted more than {k} classes"
                )));
            }
            cum_mass += mass;
            let utility = self.g[classes.len() - 1] * cum_mass;
            // ties go to the larger set
            if best.1 <= utility {
                best = (classes.len(), utility, cum_mass);
            } else if self.early_stop {
                break;
            }
        }
        if classes.is_empty() {
            return Err(Error::ProviderExhaustedEarly);
        }
        let steps_queried = classes.len();
        classes.truncate(best.0);
        Ok(PredictionSet {
            classes,
            cum_mass: best.2,
            utility: Some(best.1),
            steps_queried,
        })
    }
}

/// One-shot convenience around [`Svbop`].
pub fn svbop<P: ClassProvider + ?Sized>(
    provider: &mut P,
    spec: &UtilitySpec,
    force_full_scan: bool,
) -> Result<PredictionSet> {
    Svbop::new(spec, provider.num_classes(), force_full_scan)?.predict(provider)
}

/// `g(|pred|) * P(pred|x)`; ids absent from `dist` carry zero mass.
pub fn expected_utility(dist: &ClassDist, pred: &[usize], spec: &UtilitySpec) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::EmptyPrediction);
    }
    let mut ids = pred.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mass: f64 = ids.iter().map(|&c| dist.mass(c)).sum();
    Ok(spec.eval_g(ids.len())? * mass)
}

/// Exhaustive maximiser over every non-empty subset of the universe.
///
/// Ties on utility are broken by larger mass, then by the lexicographically
/// smallest ascending id list.
pub fn brute_force_bayes(dist: &ClassDist, spec: &UtilitySpec) -> Result<PredictionSet> {
    let k = dist.len();
    if k > BRUTE_FORCE_MAX_CLASSES {
        return Err(Error::UniverseTooLarge {
            k,
            max: BRUTE_FORCE_MAX_CLASSES,
        });
    }
    if k == 0 {
        return Err(Error::EmptyInput);
    }
    dist.require_normalized()?;
    let spec = spec.with_classes(k)?;
    let g = spec.table(k)?;
    let entries = dist.entries();

    // subset sums split into two halves to keep the inner loop cheap
    let lo_bits = k.min(11);
    let hi_bits = k - lo_bits;
    let subset_sums = |offset: usize, bits: usize| {
        let mut sums = vec![0.0f64; 1 << bits];
        for mask in 1..(1usize << bits) {
            let low = mask.trailing_zeros() as usize;
            sums[mask] = sums[mask & (mask - 1)] + entries[offset + low].1;
        }
        sums
    };
    let lo_sums = subset_sums(0, lo_bits);
    let hi_sums = subset_sums(lo_bits, hi_bits);
    let lo_mask = (1usize << lo_bits) - 1;

    let ids_of = |mask: usize| -> Vec<usize> {
        (0..k)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| entries[i].0)
            .collect()
    };

    let mut best_mask = 0usize;
    let mut best_u = f64::NEG_INFINITY;
    let mut best_mass = 0.0;
    for mask in 1..(1usize << k) {
        let mass = lo_sums[mask & lo_mask] + hi_sums[mask >> lo_bits];
        let u = g[mask.count_ones() as usize - 1] * mass;
        let better = u > best_u
            || (u == best_u
                && (mass > best_mass || (mass == best_mass && ids_of(mask) < ids_of(best_mask))));
        if better {
            best_mask = mask;
            best_u = u;
            best_mass = mass;
        }
    }
    let mut chosen: Vec<(usize, f64)> = (0..k)
        .filter(|i| best_mask >> i & 1 == 1)
        .map(|i| entries[i])
        .collect();
    chosen.sort_by(desc_mass_then_id);
    Ok(PredictionSet {
        classes: chosen.into_iter().map(|(c, _)| c).collect(),
        cum_mass: best_mass,
        utility: Some(best_u),
        steps_queried: k,
    })
}

/// Expected utility of every mass-sorted prefix, sizes `1..=K`.
pub fn prefix_utility_curve(dist: &ClassDist, spec: &UtilitySpec) -> Result<Vec<f64>> {
    dist.require_normalized()?;
    let spec = spec.with_classes(dist.len())?;
    let mut cum = 0.0;
    dist.sorted_desc()
        .iter()
        .enumerate()
        .map(|(i, &(_, m))| {
            cum += m;
            Ok(spec.eval_g(i + 1)? * cum)
        })
        .collect()
}

/// The `s` most probable classes, ties by ascending id.
pub fn top_s_predict(dist: &ClassDist, s: usize) -> Result<PredictionSet> {
    if s == 0 || s > dist.len() {
        return Err(Error::SizeOutOfRange { s, k: dist.len() });
    }
    Ok(prefix_set(dist.sorted_desc(), s))
}

/// Smallest prefix of the mass-sorted classes whose cumulative mass reaches
/// `theta`.
pub fn threshold_predict(dist: &ClassDist, theta: f64) -> Result<PredictionSet> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::ThetaOutOfRange(theta));
    }
    dist.require_normalized()?;
    if dist.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sorted = dist.sorted_desc();
    let mut cum = 0.0;
    let mut size = sorted.len();
    for (i, &(_, m)) in sorted.iter().enumerate() {
        cum += m;
        if cum >= theta {
            size = i + 1;
            break;
        }
    }
    Ok(prefix_set(sorted, size))
}

fn prefix_set(sorted: Vec<(usize, f64)>, size: usize) -> PredictionSet {
    let prefix = &sorted[..size];
    PredictionSet {
        classes: prefix.iter().map(|&(c, _)| c).collect(),
        cum_mass: prefix.iter().map(|&(_, m)| m).sum(),
        utility: None,
        steps_queried: size,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regret {
    /// `U*(P) - U(Ŷ(P̂), P)`.
    pub regret: f64,
    /// `sum_c |P(c|x) - P̂(c|x)|`.
    pub l1: f64,
}

/// Regret of acting on `est_dist` when `true_dist` holds, together with the
/// L1 estimation error bounding it (`regret <= 2 * l1`).
pub fn compute_regret(
    true_dist: &ClassDist,
    est_dist: &ClassDist,
    spec: &UtilitySpec,
) -> Result<Regret> {
    if !true_dist.same_universe(est_dist) {
        return Err(Error::UniverseMismatch);
    }
    let optimal = brute_force_bayes(true_dist, spec)?;
    let plug_in = brute_force_bayes(est_dist, spec)?;
    let spec = spec.with_classes(true_dist.len())?;
    let best = expected_utility(true_dist, &optimal.classes, &spec)?;
    let achieved = expected_utility(true_dist, &plug_in.classes, &spec)?;
    let l1: f64 = true_dist
        .entries()
        .iter()
        .zip(est_dist.entries())
        .map(|(&(_, p), &(_, q))| (p - q).abs())
        .sum();
    let raw = best - achieved;
    // both utilities come from the same summation; only rounding can push it below 0
    if raw < -1e-12 || raw > 2.0 * l1 + 1e-12 {
        return Err(Error::Invariant(format!(
            "regret {raw} outside [0, 2 * {l1}]"
        )));
    }
    Ok(Regret {
        regret: raw.max(0.0),
        l1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::full::FullProvider;

    fn dist(probs: &[f64]) -> ClassDist {
        ClassDist::from_probs(probs).unwrap()
    }

    #[test]
    fn expected_utility_examples() {
        let mut probs = vec![0.0; 100];
        for p in probs.iter_mut().take(10) {
            *p = 0.1;
        }
        let d = dist(&probs);
        let prec = UtilitySpec::precision();
        let ten: Vec<usize> = (0..10).collect();
        assert!((expected_utility(&d, &ten, &prec).unwrap() - 0.1).abs() < 1e-12);
        assert!((expected_utility(&d, &[3], &prec).unwrap() - 0.1).abs() < 1e-12);

        let d = dist(&[0.6, 0.3, 0.1]);
        let u = expected_utility(&d, &[0, 1], &UtilitySpec::f1()).unwrap();
        assert!((u - 0.6).abs() < 1e-12);
        assert!(matches!(
            expected_utility(&d, &[], &UtilitySpec::f1()),
            Err(Error::EmptyPrediction)
        ));
    }

    #[test]
    fn svbop_point_mass() {
        let mut probs = vec![0.0; 10];
        probs[1] = 1.0;
        let d = dist(&probs);
        for spec in [UtilitySpec::f1(), UtilitySpec::precision()] {
            let pred = svbop(&mut FullProvider::from_dist(&d), &spec, false).unwrap();
            assert_eq!(pred.classes, vec![1]);
            assert_eq!(pred.utility, Some(1.0));
            assert_eq!(pred.steps_queried, 2);
        }
    }

    #[test]
    fn svbop_two_way_tie() {
        let mut probs = vec![0.0; 10];
        probs[0] = 0.5;
        probs[1] = 0.5;
        let d = dist(&probs);
        let pred = svbop(&mut FullProvider::from_dist(&d), &UtilitySpec::f1(), false).unwrap();
        assert_eq!(pred.sorted_classes(), vec![0, 1]);
        assert!((pred.utility.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let oracle = brute_force_bayes(&d, &UtilitySpec::f1()).unwrap();
        assert_eq!(oracle.sorted_classes(), vec![0, 1]);
        assert!((oracle.utility.unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn svbop_credal_matches_oracle() {
        let d = dist(&[0.6, 0.3, 0.1]);
        let spec = UtilitySpec::credal(2.2, 1.2).unwrap();
        let pred = svbop(&mut FullProvider::from_dist(&d), &spec, false).unwrap();
        let oracle = brute_force_bayes(&d, &spec).unwrap();
        // g = [1, 0.8, 0.6]; prefix utilities 0.6, 0.72, 0.6
        assert_eq!(oracle.sorted_classes(), vec![0, 1]);
        assert_eq!(pred.classes, oracle.classes);
        assert!((pred.utility.unwrap() - 0.72).abs() < 1e-12);
    }

    #[test]
    fn svbop_refuses_unsuitable_utilities() {
        let d = dist(&[0.5, 0.3, 0.2]);
        let recall = UtilitySpec::recall();
        assert!(matches!(
            svbop(&mut FullProvider::from_dist(&d), &recall, false),
            Err(Error::UnsupportedUtility(_))
        ));
        let pred = svbop(&mut FullProvider::from_dist(&d), &recall, true).unwrap();
        assert_eq!(pred.len(), 3);
        let reject = UtilitySpec::reject(0.5, 3).unwrap();
        assert!(matches!(
            svbop(&mut FullProvider::from_dist(&d), &reject, true),
            Err(Error::UnsupportedUtility(_))
        ));
        let nonconvex = UtilitySpec::gen_reject(0.5, 0.5, 3).unwrap();
        assert!(!nonconvex.is_one_over_x_convex(3).unwrap());
        assert!(svbop(&mut FullProvider::from_dist(&d), &nonconvex, false).is_err());
        assert!(svbop(&mut FullProvider::from_dist(&d), &nonconvex, true).is_ok());
    }

    struct Scripted(Vec<(usize, f64)>, usize);

    impl ClassProvider for Scripted {
        fn num_classes(&self) -> usize {
            self.1
        }
        fn next_class(&mut self) -> Option<(usize, f64)> {
            if self.0.is_empty() {
                None
            } else {
                Some(self.0.remove(0))
            }
        }
    }

    #[test]
    fn provider_contract_violations() {
        let spec = UtilitySpec::f1();
        let mut empty = Scripted(vec![], 3);
        assert!(matches!(
            svbop(&mut empty, &spec, false),
            Err(Error::ProviderExhaustedEarly)
        ));
        let mut rising = Scripted(vec![(0, 0.2), (1, 0.5)], 3);
        assert!(matches!(
            svbop(&mut rising, &spec, true),
            Err(Error::NonMonotoneProvider { .. })
        ));
    }

    #[test]
    fn brute_force_cases() {
        let d = dist(&[1.0]);
        let p = brute_force_bayes(&d, &UtilitySpec::precision()).unwrap();
        assert_eq!(p.classes, vec![0]);

        let uniform = dist(&[0.1; 10]);
        let f5 = UtilitySpec::fbeta(5.0).unwrap();
        let p = brute_force_bayes(&uniform, &f5).unwrap();
        // g(s) * s/10 = 26 s / (10 (s + 25)) is increasing in s
        assert_eq!(p.len(), 10);
        assert!((p.utility.unwrap() - 26.0 / 35.0).abs() < 1e-12);

        assert!(matches!(
            brute_force_bayes(&dist(&[1.0 / 23.0; 23]), &f5),
            Err(Error::UniverseTooLarge { k: 23, .. })
        ));
    }

    #[test]
    fn brute_force_tie_rule() {
        // precision on a uniform pair: {0}, {1} and {0,1} all reach 0.5;
        // the pair carries more mass and wins
        let d = dist(&[0.5, 0.5]);
        let p = brute_force_bayes(&d, &UtilitySpec::precision()).unwrap();
        assert_eq!(p.sorted_classes(), vec![0, 1]);
    }

    #[test]
    fn curve_examples() {
        let c = prefix_utility_curve(&dist(&[0.5, 0.5]), &UtilitySpec::f1()).unwrap();
        assert!((c[0] - 0.5).abs() < 1e-15 && (c[1] - 2.0 / 3.0).abs() < 1e-15);
        let c = prefix_utility_curve(&dist(&[1.0, 0.0]), &UtilitySpec::precision()).unwrap();
        assert_eq!(c, vec![1.0, 0.5]);
    }

    #[test]
    fn baselines() {
        let d = dist(&[0.6, 0.3, 0.1]);
        assert_eq!(top_s_predict(&d, 2).unwrap().classes, vec![0, 1]);
        assert_eq!(top_s_predict(&d, 3).unwrap().len(), 3);
        assert!(top_s_predict(&d, 0).is_err());
        assert!(top_s_predict(&d, 4).is_err());
        assert_eq!(
            top_s_predict(&dist(&[0.5, 0.5]), 1).unwrap().classes,
            vec![0]
        );

        let d = dist(&[0.2, 0.5, 0.3]);
        assert_eq!(threshold_predict(&d, 0.7).unwrap().classes, vec![1, 2]);
        assert_eq!(threshold_predict(&d, 0.5).unwrap().classes, vec![1]);
        assert_eq!(threshold_predict(&d, 1.0).unwrap().len(), 3);
        assert!(matches!(
            threshold_predict(&d, 1.5),
            Err(Error::ThetaOutOfRange(_))
        ));
    }

    #[test]
    fn regret_examples() {
        let p = dist(&[0.6, 0.4]);
        let r = compute_regret(&p, &p, &UtilitySpec::precision()).unwrap();
        assert_eq!(r.regret, 0.0);
        let q = dist(&[0.4, 0.6]);
        let r = compute_regret(&p, &q, &UtilitySpec::precision()).unwrap();
        assert!((r.l1 - 0.4).abs() < 1e-12);
        // plug-in picks {1}: regret 0.6 - 0.4
        assert!((r.regret - 0.2).abs() < 1e-12);
        assert!(r.regret <= 2.0 * r.l1);
        let other = ClassDist::new(vec![(0, 0.6), (5, 0.4)]).unwrap();
        assert!(matches!(
            compute_regret(&p, &other, &UtilitySpec::precision()),
            Err(Error::UniverseMismatch)
        ));
    }
}
