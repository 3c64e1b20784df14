use std::collections::BTreeSet;

use num_bigint::{BigInt, BigUint};
use proptest::prelude::*;
use toeplitz_forge::arith::{int_matrix, IntMatrix, Mat};
use toeplitz_forge::matrices::{
    augment, augment_sequence, augment_transposed, check_fillability, multinomial, split_factors,
    telescope, verify_managed, ManagedSequence,
};

/// Random managed sequences: `k_n ∈ [2, 5]`, positive entries, equal column sums.
fn managed_strategy() -> impl Strategy<Value = ManagedSequence> {
    proptest::collection::vec(2usize..=5, 2..=4)
        .prop_flat_map(|ks| {
            let shapes: Vec<(usize, usize)> = ks.windows(2).map(|w| (w[0], w[1])).collect();
            let mats = shapes
                .into_iter()
                .map(|(rows, cols)| {
                    (rows..=12usize).prop_flat_map(move |ratio| {
                        proptest::collection::vec(proptest::collection::vec(0u64..1000, rows), cols)
                            .prop_map(move |cols_raw| column_matrix(rows, ratio, &cols_raw))
                    })
                })
                .collect::<Vec<_>>();
            (1u64..=3, mats)
        })
        .prop_map(|(p0, mats)| {
            let mut p = vec![BigInt::from(p0)];
            for m in &mats {
                let r: BigInt = m.column(0).iter().sum();
                let next = p.last().unwrap() * r;
                p.push(next);
            }
            ManagedSequence::new(p, mats)
        })
}

/// Columns that are compositions of `ratio` into `rows` positive parts.
fn column_matrix(rows: usize, ratio: usize, raw: &[Vec<u64>]) -> IntMatrix {
    let cols: Vec<Vec<i64>> = raw
        .iter()
        .map(|w| {
            let mut c = vec![1i64; rows];
            let extra = (ratio - rows) as u64;
            let total: u64 = w.iter().sum::<u64>().max(1);
            let mut given = 0;
            for (i, x) in w.iter().enumerate() {
                let share = (extra * x / total) as i64;
                c[i] += share;
                given += share;
            }
            c[0] += extra as i64 - given;
            c
        })
        .collect();
    Mat::from_fn(rows, cols.len(), |i, j| BigInt::from(cols[j][i]))
}

fn arrangements(parts: &[usize]) -> usize {
    let mut seq = Vec::new();
    for (v, &c) in parts.iter().enumerate() {
        seq.extend(std::iter::repeat(v).take(c));
    }
    let mut found = BTreeSet::new();
    permute(&mut seq, 0, &mut found);
    found.len()
}

fn permute(seq: &mut Vec<usize>, i: usize, found: &mut BTreeSet<Vec<usize>>) {
    if i == seq.len() {
        found.insert(seq.clone());
        return;
    }
    for j in i..seq.len() {
        seq.swap(i, j);
        permute(seq, i + 1, found);
        seq.swap(i, j);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_sequences_are_managed(seq in managed_strategy()) {
        prop_assert!(verify_managed(&seq).pass());
    }

    #[test]
    fn telescoping_preserves_managedness(seq in managed_strategy()) {
        let t = telescope(&seq, &[0, seq.len()]).unwrap();
        prop_assert!(verify_managed(&t).pass());
        prop_assert_eq!(t.mats[0].clone(), seq.product(0, seq.len()).unwrap());
    }

    #[test]
    fn augmentation_preserves_column_sums(seq in managed_strategy()) {
        let a = augment_sequence(&seq).unwrap();
        prop_assert!(verify_managed(&a).pass());
        for (m, am) in seq.mats.iter().zip(&a.mats) {
            prop_assert_eq!(am.cols(), m.cols() + 1);
            prop_assert_eq!(am.rows(), m.rows() + 1);
        }
    }

    #[test]
    fn split_identities_hold(seq in managed_strategy()) {
        for m in &seq.mats {
            let a = m.transpose();
            let f = split_factors(&a).unwrap();
            prop_assert_eq!(f.t.mul(&f.s).unwrap(), a.clone());
            let s_next = toeplitz_forge::matrices::split_s(a.rows());
            prop_assert_eq!(s_next.mul(&f.t).unwrap(), augment_transposed(&a).unwrap());
        }
    }

    #[test]
    fn multinomial_counts_arrangements(parts in proptest::collection::vec(0usize..=3, 1..=4)) {
        prop_assume!(parts.iter().sum::<usize>() <= 8);
        let big: Vec<BigInt> = parts.iter().map(|&x| BigInt::from(x)).collect();
        prop_assert_eq!(multinomial(&big).unwrap(), BigUint::from(arrangements(&parts)));
    }
}

#[test]
fn augmenting_the_worked_example() {
    let m = int_matrix(&[&[3, 4, 2], &[3, 2, 4], &[3, 3, 3]]);
    let a = augment(&m, false).unwrap();
    let cols: Vec<Vec<BigInt>> = (0..a.cols()).map(|j| a.column(j)).collect();
    let expect = |c: &[i64]| c.iter().map(|&x| BigInt::from(x)).collect::<Vec<_>>();
    assert_eq!(cols[0], expect(&[1, 2, 3, 3]));
    assert_eq!(cols[1], expect(&[1, 2, 3, 3]));
    assert_eq!(cols[2], expect(&[1, 3, 2, 3]));
    assert_eq!(cols[3], expect(&[1, 1, 4, 3]));
}

#[test]
fn too_many_equal_columns_are_unfillable() {
    let a = int_matrix(&[&[1, 1, 1, 1], &[1, 1, 1, 1], &[1, 1, 1, 1]]);
    let r = check_fillability(&a, &BigInt::from(1));
    assert!(r.columns.iter().any(|c| c.failure.is_some()));
}
