use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EnsembleError;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for stream `index` of a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Fold index per patient. Each class is shuffled separately and dealt
/// round-robin, so class proportions agree across folds to within one
/// patient. With `k = 1` every patient is in fold 0.
pub fn stratified_folds(
    positive: &[bool],
    k: usize,
    seed: u64,
) -> Result<Vec<usize>, EnsembleError> {
    if k == 0 {
        return Err(EnsembleError::Folds("fold count must be positive".into()));
    }
    let mut fold = vec![0; positive.len()];
    if k == 1 {
        return Ok(fold);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut offset = 0;
    for class in [true, false] {
        let mut members: Vec<usize> = (0..positive.len())
            .filter(|&i| positive[i] == class)
            .collect();
        if members.len() < k {
            return Err(EnsembleError::Folds(format!(
                "{k} folds but only {} patients in one class",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (r, &i) in members.iter().enumerate() {
            fold[i] = (r + offset) % k;
        }
        // continue dealing where the first class stopped to balance fold sizes
        offset = (offset + members.len()) % k;
    }
    Ok(fold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn seeds_differ_and_repeat() {
        let a: Vec<u64> = (0..5).map(|i| derive_seed(11, i)).collect();
        let mut b = a.clone();
        b.sort();
        b.dedup();
        assert_eq!(b.len(), 5);
        assert_eq!(a, (0..5).map(|i| derive_seed(11, i)).collect::<Vec<_>>());
        assert_ne!(derive_seed(11, 0), derive_seed(12, 0));
    }

    #[test]
    fn too_many_folds() {
        assert!(stratified_folds(&[true, true, false], 2, 0).is_err());
        assert!(stratified_folds(&[true, false], 0, 0).is_err());
        assert_eq!(
            stratified_folds(&[true, false, false], 1, 0).unwrap(),
            vec![0, 0, 0]
        );
    }

    proptest! {
        #[test]
        fn folds_are_stratified(labels in prop::collection::vec(any::<bool>(), 10..80), k in 2usize..6, seed in any::<u64>()) {
            let pos = labels.iter().filter(|&&b| b).count();
            prop_assume!(pos >= k && labels.len() - pos >= k);
            let f = stratified_folds(&labels, k, seed).unwrap();
            for class in [true, false] {
                let mut counts = vec![0usize; k];
                for (i, &l) in labels.iter().enumerate() {
                    if l == class {
                        counts[f[i]] += 1;
                    }
                }
                prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
            }
            let mut sizes = vec![0usize; k];
            for &x in &f {
                sizes[x] += 1;
            }
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            prop_assert_eq!(stratified_folds(&labels, k, seed).unwrap(), f);
        }
    }
}
