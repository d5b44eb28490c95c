//! Chronological splitting and mean-of-k augmentation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Instance;
use crate::error::{Error, Result};
use crate::seed::stream_seed;

/// Group sizes used by [`augment`].
pub const AUGMENT_KS: [usize; 4] = [2, 3, 5, 7];

/// First `floor(4n/5)` items train, the rest test. Order is preserved.
pub fn split_train_test<T: Clone>(items: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    if items.len() < 5 {
        return Err(Error::domain(format!(
            "need at least 5 items to split, got {}",
            items.len()
        )));
    }
    let cut = 4 * items.len() / 5;
    Ok((items[..cut].to_vec(), items[cut..].to_vec()))
}

/// Size of the augmented set for `n` originals.
pub fn augmented_len(n: usize) -> usize {
    n + AUGMENT_KS.iter().map(|k| n / k).sum::<usize>()
}

/// Groups averaged for each `k`: the shuffled indices cut into `floor(n/k)`
/// consecutive runs of `k`. The shuffle for `k` uses its own stream derived
/// from `(seed, k)`.
pub fn augment_plan(n: usize, seed: u64) -> Vec<(usize, Vec<Vec<usize>>)> {
    AUGMENT_KS
        .iter()
        .map(|&k| {
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, k as u64));
            order.shuffle(&mut rng);
            let groups = order.chunks_exact(k).map(<[usize]>::to_vec).collect();
            (k, groups)
        })
        .collect()
}

fn mean_of(instances: &[Instance], group: &[usize]) -> Vec<f32> {
    let width = instances[group[0]].amplitude.len();
    (0..width)
        .map(|j| {
            let sum: f64 = group.iter().map(|&i| instances[i].amplitude[j] as f64).sum();
            (sum / group.len() as f64) as f32
        })
        .collect()
}

/// Mean-of-k augmentation of one class.
///
/// Returns the originals unchanged followed by the averaged instances for
/// `k = 2, 3, 5, 7` in that order.
pub fn augment(train: &[Instance], seed: u64) -> Result<Vec<Instance>> {
    let n = train.len();
    if n < 7 {
        return Err(Error::domain(format!("augmentation needs at least 7 instances, got {n}")));
    }
    let label = &train[0].label;
    if train.iter().any(|i| &i.label != label) {
        return Err(Error::domain("augmentation is per class; instances have mixed labels"));
    }
    let width = train[0].amplitude.len();
    if train.iter().any(|i| i.amplitude.len() != width) {
        return Err(Error::domain("instances have differing widths"));
    }
    let mut out = Vec::with_capacity(augmented_len(n));
    out.extend_from_slice(train);
    for (_, groups) in augment_plan(n, seed) {
        for g in &groups {
            out.push(Instance {
                amplitude: mean_of(train, g),
                label: label.clone(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Label;
    use proptest::prelude::*;

    fn inst(v: f32, label: u32) -> Instance {
        Instance {
            amplitude: vec![v; 30],
            label: Label::Class(label),
        }
    }

    #[test]
    fn split_examples() {
        let v: Vec<u32> = (0..10).collect();
        let (a, b) = split_train_test(&v).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
        assert_eq!(b, vec![8, 9]);
        let (a, b) = split_train_test(&v[..5]).unwrap();
        assert_eq!((a.len(), b.len()), (4, 1));
        let big: Vec<u32> = (0..43_233).collect();
        let (a, b) = split_train_test(&big).unwrap();
        assert_eq!((a.len(), b.len()), (34_586, 8_647));
        assert!(split_train_test(&v[..4]).is_err());
    }

    #[test]
    fn cardinality_hundred() {
        let s: Vec<Instance> = (0..100).map(|i| inst(i as f32, 0)).collect();
        let out = augment(&s, 1).unwrap();
        assert_eq!(out.len(), 100 + 50 + 33 + 20 + 14);
        assert_eq!(&out[..100], &s[..]);
    }

    #[test]
    fn identical_inputs_stay_identical() {
        let s: Vec<Instance> = (0..9).map(|_| inst(3.25, 4)).collect();
        for i in augment(&s, 0).unwrap() {
            assert_eq!(i, inst(3.25, 4));
        }
    }

    #[test]
    fn errors() {
        let s: Vec<Instance> = (0..6).map(|i| inst(i as f32, 0)).collect();
        assert!(augment(&s, 0).is_err());
        let mut m: Vec<Instance> = (0..8).map(|i| inst(i as f32, 0)).collect();
        m[3].label = Label::Class(1);
        assert!(augment(&m, 0).is_err());
    }

    #[test]
    fn per_k_streams_are_independent() {
        let plan = augment_plan(50, 9);
        let alone: Vec<usize> = {
            let mut order: Vec<usize> = (0..50).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(9, 5));
            order.shuffle(&mut rng);
            order
        };
        let (k, groups) = &plan[2];
        assert_eq!(*k, 5);
        assert_eq!(groups.concat(), alone);
    }

    proptest! {
        #[test]
        fn size_and_determinism(n in 7usize..300, seed in any::<u64>()) {
            let s: Vec<Instance> = (0..n).map(|i| inst((i % 13) as f32, 2)).collect();
            let a = augment(&s, seed).unwrap();
            prop_assert_eq!(a.len(), augmented_len(n));
            prop_assert_eq!(&a[..n], &s[..]);
            prop_assert_eq!(a, augment(&s, seed).unwrap());
        }

        #[test]
        fn split_is_ordered_partition(n in 5usize..500) {
            let v: Vec<usize> = (0..n).collect();
            let (a, b) = split_train_test(&v).unwrap();
            prop_assert_eq!(a.len(), 4 * n / 5);
            prop_assert_eq!([a, b].concat(), v);
        }
    }
}
