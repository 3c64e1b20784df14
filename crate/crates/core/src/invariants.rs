//! Simplex approximants, dimension-group states, empirical frequencies and the
//! ordered-group factorization witness.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::arith::{l1_distance, rank, IntMatrix, Mat};
use crate::blocks::{coset_counts, BlockFamily};
use crate::error::{Error, Result};
use crate::matrices::{augment, split_s, ManagedSequence};

/// Normalized columns of `M_0 ⋯ M_i`; stage `−1` is the identity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimplexApprox {
    pub stage: i64,
    pub vertices: Vec<Vec<BigRational>>,
    /// Each vertex is a convex combination of the previous stage's vertices.
    pub nested: Option<bool>,
}

fn normalized_columns(m: &IntMatrix) -> Vec<Vec<BigRational>> {
    (0..m.cols())
        .map(|j| {
            let col = m.column(j);
            let total: BigInt = col.iter().sum();
            col.into_iter()
                .map(|x| BigRational::new(x, total.clone()))
                .collect()
        })
        .collect()
}

pub fn simplex_vertices(seq: &ManagedSequence, stage: i64) -> Result<SimplexApprox> {
    if stage < -1 || stage >= seq.len() as i64 {
        return Err(Error::LevelOutOfRange {
            level: stage.max(0) as usize,
            len: seq.len(),
        });
    }
    let upto = (stage + 1) as usize;
    let product = seq.product(0, upto)?;
    let vertices = normalized_columns(&product);
    let nested = if stage < 0 {
        None
    } else {
        let prev = normalized_columns(&seq.product(0, upto - 1)?);
        Some(convex_certificate(&prev, &vertices, &seq.mats[upto - 1]))
    };
    Ok(SimplexApprox {
        stage,
        vertices,
        nested,
    })
}

/// `v_l = Σ_t λ_t w_t` with `λ = M(·,l)/Σ M(·,l)`, checked exactly.
fn convex_certificate(prev: &[Vec<BigRational>], next: &[Vec<BigRational>], m: &IntMatrix) -> bool {
    next.iter().enumerate().all(|(l, v)| {
        let col = m.column(l);
        let total: BigInt = col.iter().sum();
        if col.iter().any(|x| x.is_negative()) || total.is_zero() {
            return false;
        }
        let lambda: Vec<BigRational> = col
            .into_iter()
            .map(|x| BigRational::new(x, total.clone()))
            .collect();
        (0..v.len()).all(|r| {
            let combo = prev
                .iter()
                .zip(&lambda)
                .fold(BigRational::zero(), |acc, (w, c)| acc + &w[r] * c);
            combo == v[r]
        })
    })
}

/// Largest pairwise `ℓ¹` distance between vertices.
pub fn vertex_spread(approx: &SimplexApprox) -> BigRational {
    let v = &approx.vertices;
    let mut best = BigRational::zero();
    for a in 0..v.len() {
        for b in a + 1..v.len() {
            let d = l1_distance(&v[a], &v[b]);
            if d > best {
                best = d;
            }
        }
    }
    best
}

/// Rank of the vertex set; the vertices lie on `Σ = 1`, so this counts
/// affinely independent vertices.
pub fn affine_rank(approx: &SimplexApprox) -> usize {
    rank(&approx.vertices)
}

/// Distinct vertices in first-occurrence order.
pub fn distinct_vertices(approx: &SimplexApprox) -> Vec<Vec<BigRational>> {
    let mut out: Vec<Vec<BigRational>> = Vec::new();
    for v in &approx.vertices {
        if !out.contains(v) {
            out.push(v.clone());
        }
    }
    out
}

/// `z_n = M_n z_{n+1}` for every level, normalized so the unit class has value 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateChain {
    pub z: Vec<Vec<BigRational>>,
}

impl StateChain {
    /// Pulls `z_top` (at level `seq.len()`) down the sequence and normalizes.
    pub fn from_top(seq: &ManagedSequence, z_top: Vec<BigRational>) -> Result<StateChain> {
        if z_top.len() != seq.k(seq.len()) {
            return Err(Error::DimensionMismatch(
                "top state has the wrong length".into(),
            ));
        }
        let mut z = vec![z_top];
        for m in seq.mats.iter().rev() {
            let next = z.last().unwrap();
            let down = m
                .map(|x| BigRational::from_integer(x.clone()))
                .mul_vec(next)?;
            z.push(down);
        }
        z.reverse();
        let unit = z[0].iter().fold(BigRational::zero(), |acc, x| {
            acc + x * BigRational::from_integer(seq.p[0].clone())
        });
        if unit.is_zero() {
            return Err(Error::InvalidInput("state vanishes on the unit".into()));
        }
        let z = z
            .into_iter()
            .map(|v| v.into_iter().map(|x| x / &unit).collect())
            .collect();
        Ok(StateChain { z })
    }

    /// The state of the `l`-th vertex at the top level.
    pub fn vertex(seq: &ManagedSequence, l: usize) -> Result<StateChain> {
        let k = seq.k(seq.len());
        if l >= k {
            return Err(Error::InvalidInput(format!("vertex {l} out of range")));
        }
        let z = (0..k)
            .map(|i| BigRational::from_integer(BigInt::from(u8::from(i == l))))
            .collect();
        StateChain::from_top(seq, z)
    }

    /// Whether `z_n = M_n z_{n+1}` holds exactly at every level.
    pub fn consistent(&self, seq: &ManagedSequence) -> bool {
        seq.mats.iter().enumerate().all(|(n, m)| {
            m.map(|x| BigRational::from_integer(x.clone()))
                .mul_vec(&self.z[n + 1])
                .is_ok_and(|v| v == self.z[n])
        })
    }
}

/// `φ([v, n]) = ⟨v, z_n⟩`.
pub fn evaluate_state(chain: &StateChain, v: &[BigInt], n: usize) -> Result<BigRational> {
    let z = chain.z.get(n).ok_or(Error::LevelOutOfRange {
        level: n,
        len: chain.z.len(),
    })?;
    if z.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "class has {} entries, level {n} has {}",
            v.len(),
            z.len()
        )));
    }
    Ok(v.iter().zip(z).fold(BigRational::zero(), |acc, (a, b)| {
        acc + BigRational::from_integer(a.clone()) * b
    }))
}

/// The representative `M_nᵀ v` of `[v, n]` at level `n+1`.
pub fn push_forward(seq: &ManagedSequence, v: &[BigInt], n: usize) -> Result<Vec<BigInt>> {
    let m = seq.mats.get(n).ok_or(Error::LevelOutOfRange {
        level: n,
        len: seq.len(),
    })?;
    m.transpose().mul_vec(v)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequencyReport {
    pub n: usize,
    pub m: usize,
    pub counts: Vec<BigInt>,
    /// Column 1 of `M̃_n ⋯ M̃_{m−1}`.
    pub expected: Vec<BigInt>,
    pub frequencies: Vec<BigRational>,
    /// `frequency(k) ∈ [min_l v_l(k), max_l v_l(k)]` over the normalized product columns.
    pub within_vertices: bool,
}

impl FrequencyReport {
    pub fn exact(&self) -> bool {
        self.counts == self.expected
    }
}

pub fn empirical_frequencies(family: &BlockFamily, n: usize, m: usize) -> Result<FrequencyReport> {
    let counts = coset_counts(family, n, m)?;
    let l = family.count(n);
    let mut product = IntMatrix::identity(l);
    for a in &family.aug[n..m] {
        product = product.mul(a)?;
    }
    let expected = product.column(0);
    let total: BigInt = counts.iter().sum();
    let frequencies: Vec<BigRational> = counts
        .iter()
        .map(|c| BigRational::new(c.clone(), total.clone()))
        .collect();
    let columns = normalized_columns(&product);
    let within_vertices = (0..l).all(|k| {
        let lo = columns.iter().map(|c| &c[k]).min().unwrap();
        let hi = columns.iter().map(|c| &c[k]).max().unwrap();
        lo <= &frequencies[k] && &frequencies[k] <= hi
    });
    Ok(FrequencyReport {
        n,
        m,
        counts,
        expected,
        frequencies,
        within_vertices,
    })
}

/// One exact matrix identity of the witness chain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Identity {
    pub name: String,
    pub n: usize,
    pub lhs: IntMatrix,
    pub rhs: IntMatrix,
    /// First differing entry, if any.
    pub mismatch: Option<(usize, usize)>,
}

impl Identity {
    fn new(name: &str, n: usize, lhs: IntMatrix, rhs: IntMatrix) -> Identity {
        let mismatch = if lhs.rows() != rhs.rows() || lhs.cols() != rhs.cols() {
            Some((lhs.rows().min(rhs.rows()), lhs.cols().min(rhs.cols())))
        } else {
            (0..lhs.rows())
                .flat_map(|i| (0..lhs.cols()).map(move |j| (i, j)))
                .find(|&(i, j)| lhs.get(i, j) != rhs.get(i, j))
        };
        Identity {
            name: name.into(),
            n,
            lhs,
            rhs,
            mismatch,
        }
    }

    pub fn pass(&self) -> bool {
        self.mismatch.is_none()
    }
}

/// Factor matrices `A_n`, `S_n`, `T_n` and the identities they satisfy.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub a: Vec<IntMatrix>,
    pub a_tilde: Vec<IntMatrix>,
    pub s: Vec<IntMatrix>,
    pub t: Vec<IntMatrix>,
    pub identities: Vec<Identity>,
    pub unit_ok: bool,
}

impl Witness {
    pub fn ok(&self) -> bool {
        self.unit_ok && self.identities.iter().all(|i| i.pass())
    }

    pub fn to_result(&self) -> Result<()> {
        if !self.unit_ok {
            return Err(Error::NotWitnessed(
                "first-level row does not carry |F_0|".into(),
            ));
        }
        match self.identities.iter().find(|i| !i.pass()) {
            Some(i) => {
                let (r, c) = i.mismatch.unwrap();
                Err(Error::NotWitnessed(format!(
                    "{} fails at (n={}, i={}, j={})",
                    i.name,
                    i.n,
                    r + 1,
                    c + 1
                )))
            }
            None => Ok(()),
        }
    }
}

/// `A_n = T_n·S_n` builder: `T(i,1) = 1`, `T(i,2) = A(i,1) − 1`, `T(i,j) = A(i,j−1)`.
fn t_factor(a: &IntMatrix) -> IntMatrix {
    Mat::from_fn(a.rows(), a.cols() + 1, |i, j| match j {
        0 => BigInt::from(1),
        1 => a.get(i, 0) - 1,
        _ => a.get(i, j - 1).clone(),
    })
}

/// Witness that the augmented system (`first_row_b`, `aug_b`) has the same
/// ordered group as `seq_a`: `Ã_0 = S·A_0`, `A_n = T_n·S_n`, `Ã_n = S_{n+1}·T_n`,
/// with `A_0` the first-level column and `A_{n+1} = M_nᵀ`.
pub fn ordered_group_witness(
    seq_a: &ManagedSequence,
    first_row_b: &IntMatrix,
    aug_b: &[IntMatrix],
) -> Result<Witness> {
    if aug_b.len() != seq_a.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} augmented matrices for {} managed matrices",
            aug_b.len(),
            seq_a.len()
        )));
    }
    let k0 = seq_a.k(0);
    let a0 = Mat::from_fn(k0, 1, |_, _| seq_a.p[0].clone());
    let mut a = vec![a0.clone()];
    a.extend(seq_a.mats.iter().map(|m| m.transpose()));
    let mut a_tilde = vec![first_row_b.transpose()];
    a_tilde.extend(aug_b.iter().map(|m| m.transpose()));
    let mut identities = vec![Identity::new(
        "Ã_0 = S·A_0",
        0,
        a_tilde[0].clone(),
        split_s(k0).mul(&a0)?,
    )];
    let mut s = vec![split_s(k0)];
    let mut t = Vec::new();
    for n in 1..a.len() {
        let tn = t_factor(&a[n]);
        let sn = split_s(a[n].cols());
        identities.push(Identity::new(
            "A_n = T_n·S_n",
            n,
            a[n].clone(),
            tn.mul(&sn)?,
        ));
        let s_next = split_s(a[n].rows());
        let rhs = s_next.mul(&tn)?;
        identities.push(Identity::new(
            "Ã_n = S_(n+1)·T_n",
            n,
            a_tilde[n].clone(),
            rhs,
        ));
        s.push(s_next);
        t.push(tn);
    }
    let unit_ok = first_row_b.rows() == 1 && first_row_b.entries().all(|x| *x == seq_a.p[0]);
    Ok(Witness {
        a,
        a_tilde,
        s,
        t,
        identities,
        unit_ok,
    })
}

/// The first-level row `|F_0|·(1,…,1)` augmented, and `M̃_n` for every `n`.
pub fn augmented_system(seq: &ManagedSequence) -> Result<(IntMatrix, Vec<IntMatrix>)> {
    let row = Mat::from_fn(1, seq.k(0), |_, _| seq.p[0].clone());
    let first = augment(&row, true)?;
    let aug = seq
        .mats
        .iter()
        .map(|m| augment(m, false))
        .collect::<Result<Vec<_>>>()?;
    Ok((first, aug))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::{int_matrix, rat};

    fn two_stage() -> ManagedSequence {
        ManagedSequence::new(
            vec![1.into(), 5.into(), 25.into()],
            vec![
                int_matrix(&[&[2, 3], &[3, 2]]),
                int_matrix(&[&[1, 4], &[4, 1]]),
            ],
        )
    }

    #[test]
    fn vertices_examples() {
        let s = two_stage();
        let v0 = simplex_vertices(&s, 0).unwrap();
        assert_eq!(
            v0.vertices,
            vec![vec![rat(2, 5), rat(3, 5)], vec![rat(3, 5), rat(2, 5)]]
        );
        assert_eq!(v0.nested, Some(true));
        let vm = simplex_vertices(&s, -1).unwrap();
        assert_eq!(
            vm.vertices,
            vec![vec![rat(1, 1), rat(0, 1)], vec![rat(0, 1), rat(1, 1)]]
        );
        let v1 = simplex_vertices(&s, 1).unwrap();
        assert_eq!(
            v1.vertices,
            vec![
                vec![rat(14, 25), rat(11, 25)],
                vec![rat(11, 25), rat(14, 25)]
            ]
        );
        assert_eq!(vertex_spread(&v1), rat(6, 25));
        assert!(vertex_spread(&v1) <= vertex_spread(&v0));
        assert_eq!(affine_rank(&v1), 2);
    }

    #[test]
    fn state_examples() {
        let s = ManagedSequence::new(
            vec![1.into(), 5.into()],
            vec![int_matrix(&[&[2, 3], &[3, 2]])],
        );
        let chain = StateChain::from_top(&s, vec![rat(1, 10), rat(1, 10)]).unwrap();
        assert_eq!(chain.z[0], vec![rat(1, 2), rat(1, 2)]);
        assert!(chain.consistent(&s));
        let e1 = vec![BigInt::from(1), BigInt::from(0)];
        assert_eq!(evaluate_state(&chain, &e1, 0).unwrap(), rat(1, 2));
        let pushed = push_forward(&s, &e1, 0).unwrap();
        assert_eq!(pushed, vec![BigInt::from(2), BigInt::from(3)]);
        assert_eq!(evaluate_state(&chain, &pushed, 1).unwrap(), rat(1, 2));
        assert_eq!(
            evaluate_state(&chain, &[0.into(), 0.into()], 0).unwrap(),
            rat(0, 1)
        );
        assert!(evaluate_state(&chain, &[0.into()], 0).is_err());
    }

    #[test]
    fn witness_examples() {
        let s = two_stage();
        let (first, aug) = augmented_system(&s).unwrap();
        let w = ordered_group_witness(&s, &first, &aug).unwrap();
        assert!(w.ok());
        assert_eq!(w.identities.len(), 5);
        let mut bad = aug.clone();
        bad[1].set(2, 1, BigInt::from(9));
        let w = ordered_group_witness(&s, &first, &bad).unwrap();
        let failing: Vec<_> = w.identities.iter().filter(|i| !i.pass()).collect();
        assert_eq!(failing.len(), 1);
        assert_eq!((failing[0].n, failing[0].mismatch), (2, Some((1, 2))));
        let one = ManagedSequence::new(
            vec![3.into(), 15.into()],
            vec![int_matrix(&[&[2, 3], &[3, 2]])],
        );
        let (f, a) = augmented_system(&one).unwrap();
        assert_eq!(f, int_matrix(&[&[3, 3, 3]]));
        let w = ordered_group_witness(&one, &f, &a).unwrap();
        assert!(w.ok());
        assert_eq!(w.identities[0].lhs, int_matrix(&[&[3], &[3], &[3]]));
        let w = ordered_group_witness(&one, &int_matrix(&[&[3, 3, 4]]), &a).unwrap();
        assert!(!w.ok());
    }
}
