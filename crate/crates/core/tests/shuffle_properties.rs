mod common;

use isgan::disentangle::{compose, part_shuffle, sample_mask, shuffle_registry, ReidMode, ShuffleMask};
use isgan::model::{PartFeatureSet, PartLayout};
use proptest::prelude::*;

#[test]
fn randomised_shuffle_invariants() {
    let checks = common::shuffle_property_trials(5, 2000).unwrap();
    assert_eq!(checks, 2000 * 7);
}

#[test]
fn default_layout_registry_sizes() {
    let layout = PartLayout { branches: vec![1, 2, 3], per_part_dim: 4 };
    assert_eq!(layout.num_parts(), 8);
    assert_eq!(shuffle_registry(&layout, ReidMode::ShortTerm).len(), 5);
    assert_eq!(shuffle_registry(&layout, ReidMode::LongTerm).len(), 3);
}

#[test]
fn wrong_mask_length_is_rejected() {
    let layout = PartLayout { branches: vec![1, 2], per_part_dim: 1 };
    assert!(ShuffleMask::new(&layout, ReidMode::ShortTerm, vec![true]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_masks_are_never_empty(seed in any::<u64>(), long in any::<bool>()) {
        let layout = PartLayout { branches: vec![1, 2, 3], per_part_dim: 2 };
        let mode = if long { ReidMode::LongTerm } else { ReidMode::ShortTerm };
        let mut r = common::rng(seed);
        let m = sample_mask(&mut r, &layout, mode);
        prop_assert!(m.bits().iter().any(|&b| b));
        for k in 0..layout.num_parts() {
            if m.swaps(k) {
                prop_assert!(m.registry().contains(&k));
            }
        }
    }

    #[test]
    fn globals_never_move(seed in any::<u64>(), b in 1usize..4) {
        let layout = PartLayout { branches: vec![1, 2, 3], per_part_dim: 2 };
        let mut r = common::rng(seed);
        let mk = |r: &mut rand_chacha::ChaCha8Rng| {
            let parts = (0..8).map(|_| common::t64(common::normal_vec(r, b * 2), &[b, 2])).collect();
            PartFeatureSet::new(parts, layout.clone()).unwrap()
        };
        let (x, y) = (mk(&mut r), mk(&mut r));
        let s = part_shuffle(&x, &y, &ShuffleMask::filled(&layout, ReidMode::ShortTerm, true)).unwrap();
        for k in [0usize, 1, 4] {
            prop_assert_eq!(common::to_vec(&s.parts[k]), common::to_vec(&x.parts[k]));
        }
        let c = compose(&x, &y).unwrap();
        prop_assert_eq!(c.dims(), &[b, 16]);
    }
}
