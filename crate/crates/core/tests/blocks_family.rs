use num_bigint::BigInt;
use proptest::prelude::*;
use toeplitz_forge::arith::{int_matrix, IntMatrix};
use toeplitz_forge::blocks::{
    build_blocks, coset_counts, odometer_embed, recover_incidence, same_blocks, scan_periods,
    verify_conditions, BlockFamily,
};
use toeplitz_forge::lattice::{BoxDomain, LatticeChain};
use toeplitz_forge::matrices::augment;

fn worked_example(seed: u64) -> BlockFamily {
    let chain = LatticeChain::from_moduli(&[vec![1], vec![9], vec![81], vec![729]]).unwrap();
    let m = int_matrix(&[&[3, 4, 2], &[3, 2, 4], &[3, 3, 3]]);
    let aug: Vec<IntMatrix> = (0..3).map(|_| augment(&m, false).unwrap()).collect();
    build_blocks(&aug, &chain, seed).unwrap()
}

fn product(f: &BlockFamily, n: usize, m: usize) -> IntMatrix {
    let mut p = IntMatrix::identity(f.count(n));
    for a in &f.aug[n..m] {
        p = p.mul(a).unwrap();
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn any_seed_gives_a_valid_family(seed in any::<u64>()) {
        let f = worked_example(seed);
        let r = verify_conditions(&f);
        prop_assert!(r.ok(), "{:?}", r.first_failure());
        for n in 0..f.depth() - 1 {
            prop_assert_eq!(recover_incidence(&f, n).unwrap(), f.aug[n].clone());
        }
    }

    #[test]
    fn restrictions_to_lower_levels_are_the_first_block(seed in 0u64..4, m in 1usize..4, k in 0usize..4) {
        let f = worked_example(seed);
        for n in 0..m {
            let lower = f.domain_box(n).clone();
            for v in lower.iter() {
                prop_assert_eq!(f.eval(m, k, &v), f.eval(n, 0, &v));
            }
        }
    }
}

#[test]
fn occurrence_counts_follow_matrix_products() {
    let f = worked_example(0);
    for m in 1..f.depth() {
        for n in 0..m {
            assert_eq!(coset_counts(&f, n, m).unwrap(), product(&f, n, m).column(0));
        }
    }
}

#[test]
fn blocks_within_a_level_are_distinct() {
    let f = worked_example(0);
    for n in 0..f.depth() {
        if let Some(arrays) = &f.symbols[n] {
            for i in 0..arrays.len() {
                for j in 0..i {
                    assert_ne!(arrays[i], arrays[j], "level {n}");
                }
            }
        }
    }
}

#[test]
fn builds_are_deterministic() {
    assert!(same_blocks(&worked_example(3), &worked_example(3)));
    assert!(same_blocks(&worked_example(0), &worked_example(0)));
}

#[test]
fn multiples_of_nine_carry_the_first_symbol() {
    let f = worked_example(0);
    let r = scan_periods(&f, 1, 3).unwrap();
    assert!(r.periodic_ok() && r.return_times_ok());
    let window = BoxDomain::new(vec![-364], vec![364]).unwrap();
    let x = f.window(&window).unwrap();
    for (i, s) in x.iter().enumerate() {
        if (i as i64 - 364) % 9 == 0 {
            assert_eq!(*s, 1);
        }
    }
}

#[test]
fn odometer_coordinates_are_compatible() {
    let f = worked_example(0);
    for g in [-300i64, -13, 0, 13, 77, 364] {
        let r = odometer_embed(&f, &[g], 3).unwrap();
        assert!(r.ok(), "g = {g}");
        assert_eq!(r.coords[3], vec![g]);
    }
}

#[test]
fn block_counts_per_column() {
    let f = worked_example(0);
    let total: BigInt = coset_counts(&f, 0, 1).unwrap().iter().sum();
    assert_eq!(total, BigInt::from(9));
}
