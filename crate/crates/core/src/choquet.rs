//! Managed sequences realizing a target Choquet simplex.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{format_rational, l1_distance, parse_rational, IntMatrix, Mat, RatMatrix};
use crate::error::{Error, Result};
use crate::matrices::{verify_managed, ManagedSequence};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SimplexSpec {
    /// A simplex with `d` extreme points.
    Finite { d: usize },
    /// Column-stochastic matrices `A_i` of shape `(i+2) × (i+3)`.
    Stagewise { matrices: Vec<RatMatrix> },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RationalEntry {
    Int(i64),
    Text(String),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum SpecJson {
    Finite {
        d: usize,
    },
    Stagewise {
        matrices: Vec<Vec<Vec<RationalEntry>>>,
    },
}

impl SimplexSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: SpecJson = serde_json::from_str(text)?;
        let spec = match raw {
            SpecJson::Finite { d } => SimplexSpec::Finite { d },
            SpecJson::Stagewise { matrices } => {
                let matrices = matrices
                    .into_iter()
                    .map(|rows| {
                        let rows = rows
                            .into_iter()
                            .map(|row| {
                                row.into_iter()
                                    .map(|e| match e {
                                        RationalEntry::Int(x) => {
                                            Ok(BigRational::from_integer(x.into()))
                                        }
                                        RationalEntry::Text(s) => parse_rational(&s),
                                    })
                                    .collect::<Result<Vec<_>>>()
                            })
                            .collect::<Result<Vec<_>>>()?;
                        Mat::from_rows(rows)
                    })
                    .collect::<Result<Vec<_>>>()?;
                SimplexSpec::Stagewise { matrices }
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        let raw = match self {
            SimplexSpec::Finite { d } => SpecJson::Finite { d: *d },
            SimplexSpec::Stagewise { matrices } => SpecJson::Stagewise {
                matrices: matrices
                    .iter()
                    .map(|m| {
                        m.to_rows()
                            .iter()
                            .map(|r| {
                                r.iter()
                                    .map(|x| RationalEntry::Text(format_rational(x)))
                                    .collect()
                            })
                            .collect()
                    })
                    .collect(),
            },
        };
        serde_json::to_string(&raw).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SimplexSpec::Finite { d } => {
                if *d == 0 {
                    return Err(Error::InvalidInput("a finite simplex needs d ≥ 1".into()));
                }
            }
            SimplexSpec::Stagewise { matrices } => {
                if matrices.is_empty() {
                    return Err(Error::InvalidInput("stagewise spec has no matrices".into()));
                }
                for (i, a) in matrices.iter().enumerate() {
                    if a.rows() != i + 2 || a.cols() != i + 3 {
                        return Err(Error::InvalidInput(format!(
                            "A_{i} has shape {}×{}, expected {}×{}",
                            a.rows(),
                            a.cols(),
                            i + 2,
                            i + 3
                        )));
                    }
                    if a.entries().any(|x| x.is_negative()) {
                        return Err(Error::InvalidInput(format!("A_{i} has a negative entry")));
                    }
                    if let Some(j) = a.column_sums().iter().position(|s| !s.is_one()) {
                        return Err(Error::InvalidInput(format!(
                            "column {j} of A_{i} does not sum to 1"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Per-stage quantities of the finite construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteStage {
    pub stage: usize,
    /// `δ^{(i)}_{l,l}` for `l ≤ d`.
    pub delta: Vec<BigRational>,
    /// `min_l (A(l,l) − Σ_{j≠l} A(j,l))` for the assembled matrix `A_i`.
    pub dominance_margin: BigRational,
    /// Largest off-diagonal column mass of `A_i`.
    pub off_diagonal_mass: BigRational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteSimplex {
    pub seq: ManagedSequence,
    pub indices: Vec<usize>,
    pub stages: Vec<FiniteStage>,
}

fn finite_matrix(d: usize, k: usize, ratio: &BigInt) -> IntMatrix {
    let diag = ratio - BigInt::from(k * (k - 1));
    Mat::from_fn(k, k, |l, j| {
        let j = j.min(d - 1);
        if l == j {
            diag.clone()
        } else {
            BigInt::from(k)
        }
    })
}

/// Square `k`-matrices with `d`-dimensional range and the index choice that
/// keeps every `δ^{(i)}_{l,l}` at least `3/4`.
pub fn finite_simplex_sequence(
    d: usize,
    k: usize,
    p: &[BigInt],
    depth: usize,
    eps: &BigRational,
) -> Result<FiniteSimplex> {
    if d == 0 {
        return Err(Error::InvalidInput("d must be at least 1".into()));
    }
    if k < 3.max(d) {
        return Err(Error::InvalidInput(format!(
            "k = {k} must be at least max(3, d)"
        )));
    }
    let quarter = BigRational::new(1.into(), 4.into());
    if !eps.is_positive() || *eps >= quarter {
        return Err(Error::InvalidInput("ε must lie in (0, 1/4)".into()));
    }
    if p.is_empty() {
        return Err(Error::NeedsMoreLevels {
            condition: "index chain is empty".into(),
            level: 0,
        });
    }
    let kk = BigInt::from(k * (k - 1));
    let p0 = p[0].clone();
    let mut indices = vec![0usize];
    let mut mats: Vec<IntMatrix> = Vec::new();
    let mut product = IntMatrix::identity(k);
    let target0 = BigRational::new(3.into(), 4.into()) + eps;
    for i in 0..depth {
        let last = *indices.last().unwrap();
        let ok = |n: usize| -> bool {
            let ratio = &p[n] / &p[last];
            if ratio <= kk {
                return false;
            }
            if i == 0 {
                BigRational::one() - BigRational::new(&p0 * &kk, p[n].clone()) >= target0
            } else {
                let bound = eps / BigRational::from_integer(&p0 * &kk * (BigInt::one() << i));
                (0..d).all(|l| BigRational::new(product.get(l, l).clone(), p[n].clone()) < bound)
            }
        };
        let next = (last + 1..p.len())
            .find(|&n| ok(n))
            .ok_or_else(|| Error::NeedsMoreLevels {
                condition: if i == 0 {
                    "δ^(0) ≥ 3/4 + ε".to_string()
                } else {
                    format!("stage-{i} smallness")
                },
                level: p.len(),
            })?;
        let m = finite_matrix(d, k, &(&p[next] / &p[last]));
        product = product.mul(&m)?;
        mats.push(m);
        indices.push(next);
    }
    let seq = ManagedSequence::new(indices.iter().map(|&n| p[n].clone()).collect(), mats);
    let stages = finite_stages(&seq, d)?;
    Ok(FiniteSimplex {
        seq,
        indices,
        stages,
    })
}

/// `δ` columns of each stage, assembled with unit columns beyond `d`.
pub fn finite_stages(seq: &ManagedSequence, d: usize) -> Result<Vec<FiniteStage>> {
    let k = seq.k(0);
    let mut product = IntMatrix::identity(k);
    let mut out = Vec::with_capacity(seq.len());
    for (i, m) in seq.mats.iter().enumerate() {
        product = product.mul(m)?;
        let scale = BigRational::new(seq.p[0].clone(), seq.p[i + 1].clone());
        let a = Mat::from_fn(k, k, |row, col| {
            if col < d {
                &scale * BigRational::from_integer(product.get(row, col).clone())
            } else if row == col {
                BigRational::one()
            } else {
                BigRational::zero()
            }
        });
        let delta = (0..d).map(|l| a.get(l, l).clone()).collect();
        let off = |l: usize| {
            (0..k)
                .filter(|&j| j != l)
                .fold(BigRational::zero(), |acc, j| acc + a.get(j, l))
        };
        let dominance_margin = (0..k)
            .map(|l| a.get(l, l) - off(l))
            .min()
            .unwrap_or_else(BigRational::zero);
        let off_diagonal_mass = (0..k).map(off).max().unwrap_or_else(BigRational::zero);
        out.push(FiniteStage {
            stage: i,
            delta,
            dominance_margin,
            off_diagonal_mass,
        });
    }
    Ok(out)
}

/// Grid approximation of `target` by a strictly positive vector with entries
/// in `(1/N)ℤ`, `N = r_0 ⋯ r_m`, within `ε` in `ℓ¹`. Returns the vector and `m`.
pub fn approx_in_cr(
    target: &[BigRational],
    ratio: impl Fn(usize) -> BigInt,
    eps: &BigRational,
) -> Result<(Vec<BigRational>, usize)> {
    if target.is_empty() || target.iter().any(|x| x.is_negative()) {
        return Err(Error::InvalidInput(
            "target must be a nonnegative vector".into(),
        ));
    }
    if !target
        .iter()
        .fold(BigRational::zero(), |a, x| a + x)
        .is_one()
    {
        return Err(Error::InvalidInput("target must sum to 1".into()));
    }
    if !eps.is_positive() {
        return Err(Error::InvalidInput("ε must be positive".into()));
    }
    let len = target.len();
    let mut denom = BigInt::one();
    for m in 0.. {
        let r = ratio(m);
        if r < BigInt::from(2) {
            return Err(Error::InvalidInput(format!("ratio r_{m} = {r} is below 2")));
        }
        denom *= r;
        if denom < BigInt::from(len) {
            continue;
        }
        let counts = round_to_grid(target, &denom);
        let v: Vec<BigRational> = counts
            .into_iter()
            .map(|c| BigRational::new(c, denom.clone()))
            .collect();
        if &l1_distance(&v, target) < eps {
            return Ok((v, m));
        }
    }
    unreachable!()
}

/// Integer counts summing to `denom`, each at least 1 (requires `denom ≥ len`).
fn round_to_grid(target: &[BigRational], denom: &BigInt) -> Vec<BigInt> {
    let scaled: Vec<BigRational> = target
        .iter()
        .map(|x| x * BigRational::from_integer(denom.clone()))
        .collect();
    let mut counts: Vec<BigInt> = scaled.iter().map(|x| x.floor().to_integer()).collect();
    let deficit = denom - counts.iter().fold(BigInt::zero(), |a, c| a + c);
    let mut order: Vec<usize> = (0..target.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = &scaled[a] - scaled[a].floor();
        let rb = &scaled[b] - scaled[b].floor();
        rb.cmp(&ra).then(a.cmp(&b))
    });
    let mut left = deficit;
    for &i in order.iter().cycle() {
        if !left.is_positive() {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    while let Some(z) = counts.iter().position(|c| c.is_zero()) {
        let big = (0..counts.len())
            .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
            .unwrap();
        counts[big] -= 1;
        counts[z] += 1;
    }
    counts
}

/// `‖B_i(·,j) − A_i(·,j)‖₁` against the stage bound `2^{−i}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ApproxCertificate {
    pub stage: usize,
    pub column: usize,
    pub distance: BigRational,
    pub bound: BigRational,
}

impl ApproxCertificate {
    pub fn pass(&self) -> bool {
        self.distance < self.bound
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StagewiseSequence {
    pub seq: ManagedSequence,
    pub indices: Vec<usize>,
    pub approximations: Vec<RatMatrix>,
    pub certificates: Vec<ApproxCertificate>,
}

pub fn stage_bound(i: usize) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::one() << i)
}

/// Integer matrices `M_i = (p_{n_{i+1}}/p_{n_i})·B_i` from grid approximations
/// `B_i` of the stagewise matrices, truncated at `depth` stages.
pub fn stochastic_to_managed(
    spec: &SimplexSpec,
    p: &[BigInt],
    depth: usize,
) -> Result<StagewiseSequence> {
    let SimplexSpec::Stagewise { matrices } = spec else {
        return Err(Error::InvalidInput("stagewise spec required".into()));
    };
    spec.validate()?;
    if depth > matrices.len() {
        return Err(Error::InvalidInput(format!(
            "depth {depth} exceeds the {} stages of the spec",
            matrices.len()
        )));
    }
    let exhausted = |i: usize| Error::NeedsMoreLevels {
        condition: format!("stage-{i} grid approximation"),
        level: p.len(),
    };
    let ratio_at = |n: usize| -> Option<BigInt> { (n + 1 < p.len()).then(|| &p[n + 1] / &p[n]) };
    if let Some(n) = (0..p.len().saturating_sub(1)).find(|&n| !p[n + 1].is_multiple_of(&p[n])) {
        return Err(Error::InvalidInput(format!(
            "p_{n} does not divide p_{}",
            n + 1
        )));
    }
    let mut indices = vec![0usize];
    let mut mats = Vec::new();
    let mut approximations = Vec::new();
    let mut certificates = Vec::new();
    for (i, a) in matrices.iter().take(depth).enumerate() {
        let start = *indices.last().unwrap();
        let eps = stage_bound(i);
        let columns: Vec<(Vec<BigRational>, usize)> = (0..a.cols())
            .into_par_iter()
            .map(|j| {
                let ratio = |m: usize| ratio_at(start + m).unwrap_or_else(BigInt::one);
                approx_in_cr(&a.column(j), ratio, &eps)
            })
            .collect::<Result<_>>()
            .map_err(|e| match e {
                Error::InvalidInput(_) => exhausted(i),
                e => e,
            })?;
        let need = columns.iter().map(|(_, m)| *m).max().unwrap_or(0) + 1;
        let threshold = BigInt::from(i + 3);
        let b = Mat::from_fn(a.rows(), a.cols(), |r, c| columns[c].0[r].clone());
        let next = (start + need..p.len())
            .find(|&n| {
                let ratio = BigRational::from_integer(&p[n] / &p[start]);
                b.entries().all(|x| {
                    let scaled = x * &ratio;
                    scaled.is_integer() && scaled.to_integer() > threshold
                })
            })
            .ok_or_else(|| exhausted(i))?;
        let ratio = BigRational::from_integer(&p[next] / &p[start]);
        mats.push(b.map(|x| (x * &ratio).to_integer()));
        for (j, (v, _)) in columns.iter().enumerate() {
            certificates.push(ApproxCertificate {
                stage: i,
                column: j,
                distance: l1_distance(v, &a.column(j)),
                bound: eps.clone(),
            });
        }
        approximations.push(b);
        indices.push(next);
    }
    let seq = ManagedSequence::new(indices.iter().map(|&n| p[n].clone()).collect(), mats);
    let report = verify_managed(&seq);
    if !report.pass() {
        return Err(Error::InternalConsistency(format!(
            "stagewise output is not managed: {}",
            report.issues[0]
        )));
    }
    Ok(StagewiseSequence {
        seq,
        indices,
        approximations,
        certificates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::{int_matrix, rat};

    fn powers(base: i64, n: u32) -> Vec<BigInt> {
        (0..n).map(|e| BigInt::from(base).pow(e)).collect()
    }

    #[test]
    fn finite_matrix_example() {
        let m = finite_matrix(2, 3, &BigInt::from(12));
        assert_eq!(m, int_matrix(&[&[6, 3, 3], &[3, 6, 6], &[3, 3, 3]]));
        assert!(m.column_sums().iter().all(|s| *s == BigInt::from(12)));
        let one = finite_matrix(1, 4, &BigInt::from(20));
        assert!((1..4).all(|j| one.column(j) == one.column(0)));
    }

    #[test]
    fn first_index_threshold() {
        let delta = BigRational::one() - rat(6, 48);
        assert_eq!(delta, rat(7, 8));
        assert!(delta >= rat(3, 4) + rat(1, 8));
        let p: Vec<BigInt> = [1, 12, 24, 48, 96 * 48, 96 * 96 * 48]
            .iter()
            .map(|&x| BigInt::from(x))
            .collect();
        let f = finite_simplex_sequence(2, 3, &p, 1, &rat(1, 8)).unwrap();
        assert_eq!(f.indices, vec![0, 3]);
        assert_eq!(f.stages[0].delta, vec![rat(7, 8), rat(7, 8)]);
    }

    #[test]
    fn finite_sequence_is_dominant() {
        let f = finite_simplex_sequence(3, 4, &powers(3, 40), 4, &rat(1, 8)).unwrap();
        assert!(verify_managed(&f.seq).pass());
        for s in &f.stages {
            assert!(s.delta.iter().all(|x| *x >= rat(3, 4)));
            assert!(s.off_diagonal_mass <= rat(1, 4));
            assert!(s.dominance_margin >= rat(1, 2));
        }
        assert!(matches!(
            finite_simplex_sequence(3, 4, &powers(3, 8), 4, &rat(1, 8)),
            Err(Error::NeedsMoreLevels { .. })
        ));
        assert!(finite_simplex_sequence(4, 3, &powers(3, 8), 1, &rat(1, 8)).is_err());
    }

    #[test]
    fn approx_examples() {
        let two = |_| BigInt::from(2);
        let (v, m) = approx_in_cr(&[rat(1, 3), rat(2, 3)], two, &rat(1, 10)).unwrap();
        assert_eq!((v.clone(), m), (vec![rat(3, 8), rat(5, 8)], 2));
        assert_eq!(l1_distance(&v, &[rat(1, 3), rat(2, 3)]), rat(1, 12));
        let sixteen = round_to_grid(&[rat(1, 3), rat(2, 3)], &BigInt::from(16));
        assert_eq!(sixteen, vec![BigInt::from(5), BigInt::from(11)]);
        let (v, m) = approx_in_cr(&[rat(1, 2), rat(1, 2)], two, &rat(1, 1000)).unwrap();
        assert_eq!((v, m), (vec![rat(1, 2), rat(1, 2)], 0));
        let (v, m) = approx_in_cr(
            &[rat(1, 5), rat(3, 10), rat(1, 2)],
            |_| BigInt::from(10),
            &rat(1, 1000),
        )
        .unwrap();
        assert_eq!((v, m), (vec![rat(2, 10), rat(3, 10), rat(5, 10)], 0));
        let (v, _) =
            approx_in_cr(&[BigRational::zero(), BigRational::one()], two, &rat(1, 10)).unwrap();
        assert!(v.iter().all(|x| x.is_positive()));
    }

    #[test]
    fn stagewise_scaling() {
        let a0 = Mat::from_rows(vec![
            vec![rat(5, 16), rat(1, 2), rat(1, 4)],
            vec![rat(11, 16), rat(1, 2), rat(3, 4)],
        ])
        .unwrap();
        let spec = SimplexSpec::Stagewise { matrices: vec![a0] };
        let out = stochastic_to_managed(&spec, &powers(2, 12), 1).unwrap();
        assert!(out.certificates.iter().all(|c| c.pass()));
        assert_eq!(out.indices, vec![0, 3]);
        assert_eq!(
            out.seq.mats[0].column(1),
            vec![BigInt::from(4), BigInt::from(4)]
        );
        assert!(out.seq.mats[0].entries().all(|x| *x > BigInt::from(3)));
        let s = SimplexSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(s, spec);
        assert!(SimplexSpec::from_json(r#"{"kind":"finite","d":0}"#).is_err());
    }
}
