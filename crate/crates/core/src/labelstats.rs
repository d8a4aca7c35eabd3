//! Label-count bookkeeping: histograms, normalization, Shannon entropy in
//! bits, and aggregate label distributions over client cohorts.

use crate::error::{Error, Result};
use std::fmt;

/// Absolute tolerance for "probabilities sum to one".
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Identifier of a client known to the server.
///
/// Ids are dense: a registry of `K` clients uses ids `0..K-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClientId(pub u64);

impl ClientId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Histogram of label occurrences over some set of samples.
///
/// Components are real-valued, not integer, so that noised counts produced by
/// the privacy layer flow through the same operations as raw ones. Client
/// attribution lives in the registry that owns the vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelCounts {
    counts: Vec<f64>,
}

impl LabelCounts {
    /// Wrap a raw count vector. Every component must be finite and >= 0.
    pub fn new(counts: Vec<f64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Domain("label counts need at least one class".into()));
        }
        if let Some(c) = counts.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::Domain(format!(
                "label count {c} is negative or non-finite"
            )));
        }
        Ok(Self { counts })
    }

    pub fn zeros(num_classes: usize) -> Self {
        Self {
            counts: vec![0.0; num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.counts
    }

    /// Component-wise accumulation (the running vector of a greedy round).
    pub fn add_assign(&mut self, other: &LabelCounts) -> Result<()> {
        if self.counts.len() != other.counts.len() {
            return Err(Error::Dimension {
                expected: self.counts.len(),
                got: other.counts.len(),
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn nonzero_components(&self) -> usize {
        self.counts.iter().filter(|c| **c > 0.0).count()
    }
}

/// A probability distribution over class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution {
    probs: Vec<f64>,
}

impl LabelDistribution {
    /// Validate that `probs` is a distribution: components in [0, 1] summing
    /// to one within [`SUM_TOLERANCE`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain(
                "distribution needs at least one class".into(),
            ));
        }
        if let Some(p) = probs
            .iter()
            .find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0)
        {
            return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Domain(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::Domain(
                "distribution needs at least one class".into(),
            ));
        }
        Ok(Self {
            probs: vec![1.0 / num_classes as f64; num_classes],
        })
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Normalize a count vector into a label distribution.
///
/// Fails with [`Error::ZeroMass`] when the counts have no mass at all.
pub fn normalize(counts: &LabelCounts) -> Result<LabelDistribution> {
    let total = counts.total();
    if total <= 0.0 {
        return Err(Error::ZeroMass);
    }
    LabelDistribution::new(counts.as_slice().iter().map(|c| c / total).collect())
}

/// Shannon entropy in bits, with the 0 * log2(0) = 0 convention.
pub fn entropy(dist: &LabelDistribution) -> f64 {
    dist.probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| -p * p.log2())
        .sum::<f64>()
        .max(0.0)
}

/// Component-wise sum of the label counts of a cohort.
///
/// Normalizing the result equals the dataset-size-weighted mixture of the
/// per-client distributions, because raw counts already carry the sizes.
pub fn aggregate_counts<'a, I>(cohort: I) -> Result<LabelCounts>
where
    I: IntoIterator<Item = &'a LabelCounts>,
{
    let mut iter = cohort.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::Domain("cannot aggregate an empty cohort".into()))?;
    let mut sum = first.clone();
    for counts in iter {
        sum.add_assign(counts)?;
    }
    Ok(sum)
}

/// The entropy threshold above which all labels must be present.
///
/// Returns log2(C - 1): a distribution over `C` classes with a zero component
/// is supported on at most `C - 1` outcomes, so its entropy is bounded by
/// this value. Anything strictly above it therefore has full support.
pub fn all_labels_present_threshold(num_classes: usize) -> Result<f64> {
    if num_classes < 2 {
        return Err(Error::Domain(format!(
            "threshold needs at least 2 classes, got {num_classes}"
        )));
    }
    Ok(((num_classes - 1) as f64).log2())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn counts(v: &[f64]) -> LabelCounts {
        LabelCounts::new(v.to_vec()).unwrap()
    }

    #[test]
    fn normalize_divides_by_total() {
        let d = normalize(&counts(&[3.0, 1.0])).unwrap();
        assert_eq!(d.probs(), &[0.75, 0.25]);

        let d = normalize(&counts(&[5.0, 5.0, 5.0, 5.0])).unwrap();
        assert_eq!(d.probs(), &[0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn normalize_rejects_zero_mass() {
        assert!(matches!(
            normalize(&counts(&[0.0, 0.0])),
            Err(Error::ZeroMass)
        ));
    }

    #[test]
    fn entropy_known_values() {
        let half = LabelDistribution::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(entropy(&half), 1.0);

        let uniform10 = LabelDistribution::uniform(10).unwrap();
        assert_abs_diff_eq!(
            entropy(&uniform10),
            std::f64::consts::LOG2_10,
            epsilon = 1e-12
        );

        let degenerate = LabelDistribution::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(entropy(&degenerate), 0.0);
    }

    #[test]
    fn aggregate_sums_componentwise() {
        let sum = aggregate_counts([&counts(&[1.0, 0.0]), &counts(&[0.0, 2.0])]).unwrap();
        assert_eq!(sum.as_slice(), &[1.0, 2.0]);

        let single = aggregate_counts([&counts(&[5.0, 5.0])]).unwrap();
        assert_eq!(single.as_slice(), &[5.0, 5.0]);

        // Three one-class clients of equal size give a uniform mixture.
        let sum = aggregate_counts([
            &counts(&[2.0, 0.0, 0.0]),
            &counts(&[0.0, 2.0, 0.0]),
            &counts(&[0.0, 0.0, 2.0]),
        ])
        .unwrap();
        assert_eq!(sum.as_slice(), &[2.0, 2.0, 2.0]);
        let h = entropy(&normalize(&sum).unwrap());
        assert_abs_diff_eq!(h, 3f64.log2(), epsilon = 1e-12);
    }

    #[test]
    fn aggregate_rejects_mismatched_lengths() {
        let err = aggregate_counts([&counts(&[1.0, 2.0]), &counts(&[1.0, 2.0, 3.0])]);
        assert!(matches!(
            err,
            Err(Error::Dimension {
                expected: 2,
                got: 3
            })
        ));
    }

    #[test]
    fn threshold_values() {
        assert_abs_diff_eq!(
            all_labels_present_threshold(10).unwrap(),
            3.1699250014423126,
            epsilon = 1e-12
        );
        assert_eq!(all_labels_present_threshold(2).unwrap(), 0.0);
        assert_abs_diff_eq!(
            all_labels_present_threshold(20).unwrap(),
            4.247927513443585,
            epsilon = 1e-12
        );
        assert!(all_labels_present_threshold(1).is_err());
    }

    /// Random count vectors with at least one strictly positive component.
    fn arb_counts(max_classes: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..100.0, 2..=max_classes)
            .prop_filter("needs positive mass", |v| v.iter().sum::<f64>() > 1e-6)
    }

    proptest! {
        #[test]
        fn entropy_bounded_and_maximized_only_at_uniform(v in arb_counts(12)) {
            let c = LabelCounts::new(v).unwrap();
            let d = normalize(&c).unwrap();
            let h = entropy(&d);
            let max = (d.num_classes() as f64).log2();
            prop_assert!(h >= 0.0);
            prop_assert!(h <= max + 1e-9);
            // The maximum is attained only arbitrarily close to uniform.
            if h > max - 1e-9 {
                let u = 1.0 / d.num_classes() as f64;
                for p in d.probs() {
                    prop_assert!((p - u).abs() < 1e-3);
                }
            }
        }

        #[test]
        fn uniform_attains_the_maximum(c in 2usize..40) {
            let d = LabelDistribution::uniform(c).unwrap();
            prop_assert!((entropy(&d) - (c as f64).log2()).abs() <= 1e-9);
        }

        #[test]
        fn entropy_is_permutation_invariant(v in arb_counts(10), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let d = normalize(&LabelCounts::new(v.clone()).unwrap()).unwrap();
            let mut shuffled = v;
            shuffled.shuffle(&mut crate::rng::derive_rng(seed, "test-perm", &[]));
            let ds = normalize(&LabelCounts::new(shuffled).unwrap()).unwrap();
            prop_assert!((entropy(&d) - entropy(&ds)).abs() < 1e-9);
        }

        #[test]
        fn entropy_above_threshold_implies_full_support(v in arb_counts(10)) {
            let c = LabelCounts::new(v).unwrap();
            let d = normalize(&c).unwrap();
            let threshold = all_labels_present_threshold(d.num_classes()).unwrap();
            if entropy(&d) > threshold {
                for p in d.probs() {
                    prop_assert!(*p > 0.0);
                }
            }
        }

        #[test]
        fn zero_component_bounds_entropy_by_threshold(v in arb_counts(10), zero_at in any::<prop::sample::Index>()) {
            // Contrapositive of the threshold property.
            let mut v = v;
            if v.len() < 3 { return Ok(()); }
            let ix = zero_at.index(v.len());
            v[ix] = 0.0;
            if v.iter().sum::<f64>() <= 1e-6 { return Ok(()); }
            let d = normalize(&LabelCounts::new(v).unwrap()).unwrap();
            let threshold = all_labels_present_threshold(d.num_classes()).unwrap();
            prop_assert!(entropy(&d) <= threshold + 1e-12);
        }

        #[test]
        fn aggregate_normalization_equals_size_weighted_mixture(
            vs in prop::collection::vec(
                prop::collection::vec(0.0f64..100.0, 6)
                    .prop_filter("needs positive mass", |v| v.iter().sum::<f64>() > 1e-6),
                1..8,
            )
        ) {
            let cohort: Vec<LabelCounts> =
                vs.into_iter().map(|v| LabelCounts::new(v).unwrap()).collect();
            let agg = normalize(&aggregate_counts(cohort.iter()).unwrap()).unwrap();

            let total: f64 = cohort.iter().map(|c| c.total()).sum();
            let mut mixture = vec![0.0; 6];
            for c in &cohort {
                let weight = c.total() / total;
                let d = normalize(c).unwrap();
                for (m, p) in mixture.iter_mut().zip(d.probs()) {
                    *m += weight * p;
                }
            }
            for (a, m) in agg.probs().iter().zip(&mixture) {
                prop_assert!((a - m).abs() < 1e-9);
            }
        }
    }
}
