use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::{rng, Error, Result};

/// Fold id for each of `n` samples: a seeded shuffle dealt round-robin.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::TooFewSamples { needed: k, have: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "kfold"));
    let mut folds = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % k;
    }
    Ok(folds)
}

/// Like [`kfold`], dealing each class separately so every fold holds both.
pub fn stratified_kfold(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    let mut folds = vec![0; labels.len()];
    let mut offset = 0;
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.is_empty() {
            return Err(Error::SingleClass);
        }
        if idx.len() < k {
            return Err(Error::TooFewSamples { needed: k, have: idx.len() });
        }
        idx.shuffle(&mut rng::stream(seed, if class { "strat-pos" } else { "strat-neg" }));
        for (pos, &i) in idx.iter().enumerate() {
            folds[i] = (pos + offset) % k;
        }
        offset += idx.len();
    }
    Ok(folds)
}

pub(crate) fn split(folds: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, &f) in folds.iter().enumerate() {
        if f == fold {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    (train, test)
}

pub(crate) fn take<T: Clone>(xs: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| xs[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_balanced_and_seeded() {
        let f = kfold(23, 5, 3).unwrap();
        for k in 0..5 {
            let c = f.iter().filter(|&&x| x == k).count();
            assert!(c == 4 || c == 5);
        }
        assert_eq!(f, kfold(23, 5, 3).unwrap());
        assert!(kfold(3, 5, 0).is_err());
        let labels: Vec<bool> = (0..20).map(|i| i % 4 == 0).collect();
        let s = stratified_kfold(&labels, 5, 1).unwrap();
        for k in 0..5 {
            assert!((0..20).any(|i| s[i] == k && labels[i]));
        }
    }
}
