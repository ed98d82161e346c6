use proptest::prelude::*;
use subseg::volume::{
    read_labels, read_volume, resample_isotropic, write_labels, write_volume, Alphabet, Geometry, Interpolation,
    LabelVolume, Volume, VoxelData,
};
use subseg_oracles::rng::SplitMix64;

fn random_rotation(rng: &mut SplitMix64) -> [[f64; 3]; 3] {
    let mut cols: Vec<[f64; 3]> = Vec::new();
    while cols.len() < 3 {
        let mut v = [rng.normal(), rng.normal(), rng.normal()];
        for c in &cols {
            let d: f64 = (0..3).map(|i| v[i] * c[i]).sum();
            for i in 0..3 {
                v[i] -= d * c[i];
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            cols.push([v[0] / n, v[1] / n, v[2] / n]);
        }
    }
    let mut m = [[0.0; 3]; 3];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..3 {
            m[i][j] = c[i];
        }
    }
    m
}

fn random_geometry(rng: &mut SplitMix64) -> Geometry {
    let dims = [1 + rng.below(9), 1 + rng.below(9), 1 + rng.below(7)];
    let spacing = [rng.range(0.3, 3.0), rng.range(0.3, 3.0), rng.range(0.3, 3.0)].map(|s| s as f32 as f64);
    // on-disk origins are float32
    let origin = [rng.range(-120.0, 120.0), rng.range(-120.0, 120.0), rng.range(-120.0, 120.0)].map(|o| o as f32 as f64);
    let dir = if rng.bernoulli(0.5) { random_rotation(rng) } else { [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] };
    Geometry::new(dims, spacing).unwrap().with_origin(origin).with_direction(dir).unwrap()
}

fn random_volume(rng: &mut SplitMix64, kind: usize) -> Volume {
    let g = random_geometry(rng);
    let n = g.len();
    let data = match kind % 3 {
        0 => VoxelData::U8((0..n).map(|_| rng.below(256) as u8).collect()),
        1 => VoxelData::I16((0..n).map(|_| (rng.below(65536) as i32 - 32768) as i16).collect()),
        _ => VoxelData::F32((0..n).map(|_| f32::from_bits(rng.next_u64() as u32 & 0x3fff_ffff | 0x0080_0000)).collect()),
    };
    Volume::new(g, data).unwrap()
}

fn assert_geometry_close(a: &Geometry, b: &Geometry) {
    assert_eq!(a.dims, b.dims);
    for i in 0..3 {
        assert!((a.spacing[i] - b.spacing[i]).abs() < 1e-6, "spacing {:?} vs {:?}", a.spacing, b.spacing);
        assert!((a.origin[i] - b.origin[i]).abs() < 1e-6, "origin {:?} vs {:?}", a.origin, b.origin);
        for j in 0..3 {
            assert!((a.direction[i][j] - b.direction[i][j]).abs() < 1e-6);
        }
    }
}

fn bit_equal(a: &VoxelData, b: &VoxelData) -> bool {
    match (a, b) {
        (VoxelData::U8(x), VoxelData::U8(y)) => x == y,
        (VoxelData::I16(x), VoxelData::I16(y)) => x == y,
        (VoxelData::F32(x), VoxelData::F32(y)) => x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()),
        _ => false,
    }
}

#[test]
fn thirty_random_volumes_round_trip() {
    let mut rng = SplitMix64::new(7);
    let dir = tempfile::tempdir().unwrap();
    for k in 0..30 {
        let v = random_volume(&mut rng, k);
        let ext = if k % 2 == 0 { "nii.gz" } else { "nii" };
        let path = dir.path().join(format!("v{k}.{ext}"));
        write_volume(&v, &path).unwrap();
        let back = read_volume(&path).unwrap();
        assert!(bit_equal(v.data(), back.data()), "volume {k}");
        assert_geometry_close(v.geometry(), back.geometry());
    }
}

#[test]
fn zero_volume_and_anisotropic_spacing() {
    let dir = tempfile::tempdir().unwrap();
    let g = Geometry::new([4, 4, 4], [1.0; 3]).unwrap();
    let v = Volume::new(g, VoxelData::U8(vec![0; 64])).unwrap();
    let p = dir.path().join("z.nii.gz");
    write_volume(&v, &p).unwrap();
    let back = read_volume(&p).unwrap();
    assert_eq!(back.geometry().dims, [4, 4, 4]);
    assert_eq!(back.data(), &VoxelData::U8(vec![0; 64]));

    let g = Geometry::new([3, 3, 3], [0.5, 0.5, 2.0]).unwrap();
    let v = Volume::from_f32(g, vec![1.5; 27]).unwrap();
    write_volume(&v, &p).unwrap();
    let s = read_volume(&p).unwrap().geometry().spacing;
    for (a, b) in s.iter().zip([0.5, 0.5, 2.0]) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn zero_affine_column_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.nii");
    let v = Volume::from_f32(Geometry::new([2, 2, 2], [1.0; 3]).unwrap(), vec![0.0; 8]).unwrap();
    write_volume(&v, &p).unwrap();
    let mut bytes = std::fs::read(&p).unwrap();
    // zero the first column of the sform rows
    for r in 0..3 {
        let at = 280 + 16 * r;
        bytes[at..at + 4].copy_from_slice(&0f32.to_le_bytes());
    }
    std::fs::write(&p, bytes).unwrap();
    let err = read_volume(&p).unwrap_err().to_string();
    assert!(err.contains("non-invertible affine"), "{err}");
    assert!(err.contains("bad.nii"), "{err}");
}

#[test]
fn label_maps_round_trip_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let alphabet = Alphabet::from_pairs(&[(1, "NET"), (2, "SNFH"), (3, "ET")]).unwrap();
    let g = Geometry::new([3, 2, 2], [1.0; 3]).unwrap();
    let lv = LabelVolume::new(g, vec![0, 1, 2, 3, 0, 0, 1, 1, 2, 2, 3, 3], alphabet.clone()).unwrap();
    let p = dir.path().join("l.nii.gz");
    write_labels(&lv, &p).unwrap();
    assert_eq!(read_labels(&p, &alphabet).unwrap(), lv);
    let narrow = Alphabet::from_pairs(&[(1, "NET")]).unwrap();
    assert!(read_labels(&p, &narrow).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn nearest_resampling_adds_no_labels(seed in 0u64..100_000, target in 0.4f64..2.5) {
        let mut rng = SplitMix64::new(seed);
        let g = Geometry::new([1 + rng.below(6), 1 + rng.below(6), 1 + rng.below(6)],
            [rng.range(0.5, 2.0), rng.range(0.5, 2.0), rng.range(0.5, 2.0)]).unwrap();
        let alphabet = Alphabet::from_pairs(&[(1, "a"), (2, "b"), (5, "c")]).unwrap();
        let ids = [0u8, 1, 2, 5];
        let data: Vec<u8> = (0..g.len()).map(|_| ids[rng.below(4)]).collect();
        let lv = LabelVolume::new(g, data.clone(), alphabet).unwrap();
        let out = lv.resample_isotropic(target).unwrap();
        prop_assert!(out.data().iter().all(|v| data.contains(v)));
        prop_assert!(out.geometry().is_isotropic(target));

        let vol = Volume::from_f32(lv.geometry().clone(), data.iter().map(|&v| v as f32 * 1.5 - 2.0).collect()).unwrap();
        let lo = vol.to_f64().into_iter().fold(f64::INFINITY, f64::min);
        let hi = vol.to_f64().into_iter().fold(f64::NEG_INFINITY, f64::max);
        let tri = resample_isotropic(&vol, target, Interpolation::Trilinear).unwrap();
        prop_assert!(tri.to_f64().iter().all(|&v| v >= lo - 1e-5 && v <= hi + 1e-5));
    }
}
