mod oracles;

use cascade_roi::metrics::{boundary_dice, dice, hd95, percentile};
use cascade_roi::volume::{GridMeta, Mask};
use proptest::prelude::*;

fn mask(dims: [usize; 3], spacing: [f64; 3], data: Vec<u8>) -> Mask {
    Mask::new(GridMeta::new(dims, spacing, [0.0; 3]).unwrap(), data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_all_pairs_oracle(
        dims in prop::array::uniform3(1usize..9),
        seed in any::<u64>(),
        da in 0.0f64..0.6,
        db in 0.0f64..0.6,
        spacing in prop::array::uniform3(0.5f64..3.0),
    ) {
        let n = dims.iter().product();
        let mut r = oracles::rng(seed);
        let a = oracles::random_bits(&mut r, n, da);
        let b = oracles::random_bits(&mut r, n, db);
        let got = hd95(&mask(dims, spacing, a.clone()), &mask(dims, spacing, b.clone()), spacing).unwrap();
        let want = oracles::hd95(&a, &b, dims, spacing);
        if want.is_infinite() {
            prop_assert!(got.is_infinite());
        } else {
            prop_assert!((got - want).abs() <= 1e-9, "{} vs {}", got, want);
        }
    }

    #[test]
    fn symmetric_and_zero_on_self(seed in any::<u64>()) {
        let dims = [6, 5, 4];
        let s = [1.0, 1.5, 2.0];
        let mut r = oracles::rng(seed);
        let a = mask(dims, s, oracles::random_bits(&mut r, 120, 0.3));
        let b = mask(dims, s, oracles::random_bits(&mut r, 120, 0.3));
        let (ab, ba) = (hd95(&a, &b, s).unwrap(), hd95(&b, &a, s).unwrap());
        prop_assert!(ab == ba || (ab - ba).abs() < 1e-12);
        prop_assert_eq!(hd95(&a, &a, s).unwrap(), 0.0);
        let d = dice(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        let bd = boundary_dice(&a, &b, 2).unwrap();
        prop_assert!((0.0..=1.0).contains(&bd));
    }
}

#[test]
fn shifted_cube_distance() {
    // Two 4^3 cubes offset by 2 voxels along z at 2 mm: every boundary
    // voxel on the far faces is 4 mm away.
    let dims = [8, 8, 10];
    let s = [1.0, 1.0, 2.0];
    let cube = |z0: usize| {
        let mut d = vec![0u8; 640];
        for z in z0..z0 + 4 {
            for y in 2..6 {
                for x in 2..6 {
                    d[x + 8 * (y + 8 * z)] = 1;
                }
            }
        }
        d
    };
    let (a, b) = (cube(2), cube(4));
    let got = hd95(&mask(dims, s, a.clone()), &mask(dims, s, b.clone()), s).unwrap();
    assert!((got - oracles::hd95(&a, &b, dims, s)).abs() < 1e-12);
    assert!((got - 4.0).abs() < 1e-12);
}

#[test]
fn percentile_interpolates() {
    let mut v = vec![4.0, 1.0, 3.0, 2.0, 5.0];
    assert_eq!(percentile(&mut v, 50.0), 3.0);
    assert!((percentile(&mut v, 95.0) - 4.8).abs() < 1e-12);
}
