use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::seed::{derive_seed, rng_for};

/// Dyad-level fold assignments for nested cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k_out: usize,
    pub k_inner: usize,
    pub seed: u64,
    pub labels: BTreeMap<String, u8>,
    /// dyad → outer fold.
    pub outer: BTreeMap<String, usize>,
    /// Per outer fold: outer-train dyad → inner fold.
    pub inner: Vec<BTreeMap<String, usize>>,
}

/// Shuffles each class, then deals all dyads round-robin, continuing the
/// rotation from one class into the next.
fn stratified(dyads: &[(String, u8)], k: usize, seed: u64) -> BTreeMap<String, usize> {
    let mut rng = rng_for(seed, &[]);
    let mut out = BTreeMap::new();
    let mut i = 0;
    for class in [0u8, 1] {
        let mut members: Vec<&String> = dyads.iter().filter(|d| d.1 == class).map(|d| &d.0).collect();
        members.sort();
        members.shuffle(&mut rng);
        for id in members {
            out.insert(id.clone(), i % k);
            i += 1;
        }
    }
    out
}

pub fn plan_nested_cv(dyads: &[(String, u8)], k_out: usize, k_inner: usize, seed: u64) -> Result<FoldPlan> {
    ensure!(k_out >= 2, Validation, "k_out must be at least 2, got {k_out}");
    ensure!(k_inner >= 2, Validation, "k_inner must be at least 2, got {k_inner}");
    let mut labels = BTreeMap::new();
    for (id, y) in dyads {
        ensure!(*y <= 1, Validation, "dyad {id} has label {y}");
        if let Some(prev) = labels.insert(id.clone(), *y) {
            ensure!(prev == *y, Validation, "dyad {id} appears with both labels");
        }
    }
    let unique: Vec<(String, u8)> = labels.iter().map(|(k, v)| (k.clone(), *v)).collect();
    for class in [0u8, 1] {
        let n = unique.iter().filter(|d| d.1 == class).count();
        // each inner training set must still hold k_inner dyads per class
        let need = k_out.max(k_inner * k_out / (k_out - 1) + 1);
        ensure!(
            n >= need,
            Validation,
            "class {class} has {n} dyads, need at least {need} for {k_out}x{k_inner} nested folds"
        );
    }
    let outer = stratified(&unique, k_out, derive_seed(seed, &[0]));
    let inner = (0..k_out)
        .map(|f| {
            let train: Vec<(String, u8)> = unique.iter().filter(|d| outer[&d.0] != f).cloned().collect();
            stratified(&train, k_inner, derive_seed(seed, &[1, f as u64]))
        })
        .collect();
    Ok(FoldPlan {
        k_out,
        k_inner,
        seed,
        labels,
        outer,
        inner,
    })
}

impl FoldPlan {
    pub fn outer_test(&self, fold: usize) -> BTreeSet<String> {
        self.outer.iter().filter(|(_, &f)| f == fold).map(|(d, _)| d.clone()).collect()
    }

    pub fn outer_train(&self, fold: usize) -> BTreeSet<String> {
        self.outer.iter().filter(|(_, &f)| f != fold).map(|(d, _)| d.clone()).collect()
    }

    /// `(inner-train, inner-test)` dyads for inner fold `inner` of outer
    /// fold `fold`.
    pub fn inner_split(&self, fold: usize, inner: usize) -> (BTreeSet<String>, BTreeSet<String>) {
        let (test, train): (Vec<_>, Vec<_>) = self.inner[fold].iter().partition(|(_, &i)| i == inner);
        (
            train.into_iter().map(|(d, _)| d.clone()).collect(),
            test.into_iter().map(|(d, _)| d.clone()).collect(),
        )
    }

    /// Same folds with different dyad labels.
    pub fn with_labels(&self, labels: BTreeMap<String, u8>) -> FoldPlan {
        FoldPlan {
            labels,
            ..self.clone()
        }
    }

    /// Every outer and inner test fold holds both classes.
    pub fn all_folds_two_class(&self) -> bool {
        let two_class = |set: &BTreeSet<String>| {
            let pos = set.iter().filter(|d| self.labels[*d] == 1).count();
            pos > 0 && pos < set.len()
        };
        (0..self.k_out).all(|f| {
            two_class(&self.outer_test(f)) && (0..self.k_inner).all(|i| two_class(&self.inner_split(f, i).1))
        })
    }

    /// Checks that outer folds partition the dyads and inner folds partition
    /// each outer-train set.
    pub fn validate(&self) -> Result<()> {
        ensure!(self.outer.len() == self.labels.len(), Validation, "outer folds do not cover every dyad");
        ensure!(self.inner.len() == self.k_out, Validation, "expected {} inner plans", self.k_out);
        for f in 0..self.k_out {
            let test = self.outer_test(f);
            let train = self.outer_train(f);
            ensure!(!test.is_empty(), Validation, "outer fold {f} is empty");
            ensure!(test.is_disjoint(&train), Validation, "fold {f}: train and test share dyads");
            ensure!(test.len() + train.len() == self.labels.len(), Validation, "fold {f} is not a partition");
            ensure!(
                self.inner[f].keys().cloned().collect::<BTreeSet<_>>() == train,
                Validation,
                "fold {f}: inner folds do not partition the outer-train dyads"
            );
        }
        Ok(())
    }

    /// Every outer fold's positive count is within one dyad of its share.
    pub fn is_stratified(&self) -> bool {
        let n = self.labels.len() as f64;
        let n_pos = self.labels.values().filter(|&&y| y == 1).count() as f64;
        (0..self.k_out).all(|f| {
            let test = self.outer_test(f);
            let pos = test.iter().filter(|d| self.labels[*d] == 1).count() as f64;
            (pos - n_pos * test.len() as f64 / n).abs() <= 1.0
        })
    }

    pub fn plan_hash(&self) -> String {
        crate::tracking::config_hash(self).expect("fold plans always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dyads(n_per_class: usize) -> Vec<(String, u8)> {
        (0..2 * n_per_class)
            .map(|i| (format!("D{:03}", i + 1), (i >= n_per_class) as u8))
            .collect()
    }

    #[test]
    fn thirty_six_dyads_fold_sizes() {
        let plan = plan_nested_cv(&dyads(18), 5, 3, 11).unwrap();
        let mut sizes: Vec<usize> = (0..5).map(|f| plan.outer_test(f).len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![7, 7, 7, 7, 8]);
        for f in 0..5 {
            let pos = plan.outer_test(f).iter().filter(|d| plan.labels[*d] == 1).count();
            assert!(pos == 3 || pos == 4);
        }
        plan.validate().unwrap();
        assert!(plan.is_stratified());
        assert!(plan.all_folds_two_class());
    }

    #[test]
    fn every_dyad_in_exactly_one_fold() {
        let plan = plan_nested_cv(&dyads(10), 5, 3, 2).unwrap();
        let mut seen = BTreeSet::new();
        for f in 0..5 {
            for d in plan.outer_test(f) {
                assert!(seen.insert(d));
            }
        }
        assert_eq!(seen.len(), 20);
    }

    #[test]
    fn degenerate_requests_fail() {
        assert!(plan_nested_cv(&dyads(18), 1, 3, 0).is_err());
        assert!(plan_nested_cv(&dyads(3), 5, 3, 0).is_err());
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let a = plan_nested_cv(&dyads(18), 5, 3, 4).unwrap();
        assert_eq!(a, plan_nested_cv(&dyads(18), 5, 3, 4).unwrap());
        assert_ne!(a.outer, plan_nested_cv(&dyads(18), 5, 3, 5).unwrap().outer);
        // input order does not matter
        let mut rev = dyads(18);
        rev.reverse();
        assert_eq!(a, plan_nested_cv(&rev, 5, 3, 4).unwrap());
    }
}
