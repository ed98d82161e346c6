use proptest::prelude::*;
use subseg::morphology::{binary_dilate, connected_components, largest_component, remove_components_below, Connectivity};
use subseg::volume::{Alphabet, Geometry, LabelVolume, Mask};
use subseg_oracles::rng::SplitMix64;
use subseg_oracles::{dilate, flood_fill, same_partition};

fn mask(dims: [usize; 3], data: Vec<bool>) -> Mask {
    Mask::new(Geometry::new(dims, [1.0; 3]).unwrap(), data).unwrap()
}

#[test]
fn labeling_matches_flood_fill_on_random_masks() {
    let dims = [8, 8, 8];
    for conn in Connectivity::ALL {
        let mut rng = SplitMix64::new(u8::from(conn) as u64);
        for trial in 0..120 {
            let density = [0.1, 0.25, 0.4, 0.55][trial % 4];
            let fg: Vec<bool> = if trial % 3 == 0 {
                rng.blobby_mask(dims, 3, density / 4.0)
            } else {
                (0..512).map(|_| rng.bernoulli(density)).collect()
            };
            let cc = connected_components(&mask(dims, fg.clone()), conn);
            let (oracle, count) = flood_fill(dims, &fg, u8::from(conn));
            assert_eq!(cc.count(), count, "{conn:?} trial {trial}");
            assert!(same_partition(cc.ids(), &oracle), "{conn:?} trial {trial}");
            let total: usize = cc.sizes().iter().map(|s| s.voxels).sum();
            assert_eq!(total, fg.iter().filter(|&&b| b).count());
        }
    }
}

#[test]
fn component_ids_follow_first_voxel_order() {
    let mut rng = SplitMix64::new(99);
    let fg: Vec<bool> = (0..512).map(|_| rng.bernoulli(0.2)).collect();
    let cc = connected_components(&mask([8, 8, 8], fg), Connectivity::Six);
    let mut next = 1;
    for &id in cc.ids() {
        if id == next {
            next += 1;
        }
        assert!(id < next, "id {id} appears before {next}");
    }
}

#[test]
fn dilation_matches_distance_oracle() {
    let dims = [9, 8, 7];
    let mut rng = SplitMix64::new(7);
    for conn in Connectivity::ALL {
        for radius in 0..=3 {
            for _ in 0..4 {
                let fg: Vec<bool> = (0..dims.iter().product()).map(|_| rng.bernoulli(0.03)).collect();
                let got = binary_dilate(&mask(dims, fg.clone()), radius, conn);
                let want = dilate(dims, &fg, radius as i64, u8::from(conn));
                assert_eq!(got.data(), want.as_slice(), "{conn:?} radius {radius}");
            }
        }
    }
}

#[test]
fn removal_keeps_exactly_large_components() {
    let dims = [8, 8, 8];
    let alphabet = Alphabet::from_pairs(&[(1, "A"), (2, "B")]).unwrap();
    let g = Geometry::new(dims, [1.0, 1.0, 2.0]).unwrap();
    let mut rng = SplitMix64::new(3);
    for _ in 0..30 {
        let data: Vec<u8> = (0..512).map(|_| [0, 0, 1, 2][rng.below(4)]).collect();
        let lv = LabelVolume::new(g.clone(), data.clone(), alphabet.clone()).unwrap();
        let out = remove_components_below(&lv, 1, 6.0, Connectivity::Six).unwrap();
        let fg: Vec<bool> = data.iter().map(|&v| v == 1).collect();
        let (ids, count) = flood_fill(dims, &fg, 6);
        let mut sizes = vec![0usize; count + 1];
        for &i in &ids {
            sizes[i as usize] += 1;
        }
        for i in 0..512 {
            let expect = if data[i] == 1 && (sizes[ids[i] as usize] as f64 * 2.0) < 6.0 { 0 } else { data[i] };
            assert_eq!(out.data()[i], expect);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn largest_component_is_a_maximal_component(bits in proptest::collection::vec(any::<bool>(), 216)) {
        let m = mask([6, 6, 6], bits.clone());
        match largest_component(&m, Connectivity::TwentySix) {
            Err(_) => prop_assert!(!bits.iter().any(|&b| b)),
            Ok(l) => {
                let cc = connected_components(&m, Connectivity::TwentySix);
                let max = cc.sizes().iter().map(|s| s.voxels).max().unwrap();
                prop_assert_eq!(l.count(), max);
                for (a, b) in l.data().iter().zip(m.data()) {
                    prop_assert!(!a || *b);
                }
            }
        }
    }

    #[test]
    fn dilation_is_extensive_and_monotone(bits in proptest::collection::vec(prop::bool::weighted(0.05), 343), r in 0usize..3) {
        let m = mask([7, 7, 7], bits);
        for conn in Connectivity::ALL {
            let d1 = binary_dilate(&m, r, conn);
            let d2 = binary_dilate(&m, r + 1, conn);
            for i in 0..343 {
                prop_assert!(!m.data()[i] || d1.data()[i]);
                prop_assert!(!d1.data()[i] || d2.data()[i]);
            }
        }
    }
}
