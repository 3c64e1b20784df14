//! Managed matrix sequences, telescoping, augmentation, split factorizations
//! and index selection.

use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::arith::{IntMatrix, Mat};
use crate::error::{Error, Result};
use crate::lattice::{border_info_between, BorderInfo, LatticeChain};

/// Integer matrices `M_n` (`k_n × k_{n+1}`) with index chain `p_n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManagedSequence {
    pub p: Vec<BigInt>,
    pub mats: Vec<IntMatrix>,
}

impl ManagedSequence {
    pub fn new(p: Vec<BigInt>, mats: Vec<IntMatrix>) -> Self {
        ManagedSequence { p, mats }
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    /// `k_n`, the number of rows of `M_n` (or columns of the last matrix).
    pub fn k(&self, n: usize) -> usize {
        match self.mats.get(n) {
            Some(m) => m.rows(),
            None => self.mats[n - 1].cols(),
        }
    }

    /// `p_{n+1} / p_n`.
    pub fn ratio(&self, n: usize) -> BigInt {
        &self.p[n + 1] / &self.p[n]
    }

    /// `M_a ⋯ M_{b−1}`; the identity when `a == b`.
    pub fn product(&self, a: usize, b: usize) -> Result<IntMatrix> {
        if a > b || b > self.len() {
            return Err(Error::InvalidInput(format!("bad product range {a}..{b}")));
        }
        let mut acc = IntMatrix::identity(self.k(a));
        for m in &self.mats[a..b] {
            acc = acc.mul(m)?;
        }
        Ok(acc)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ManagedIssue {
    LengthMismatch {
        p: usize,
        mats: usize,
    },
    NonPositiveIndex {
        n: usize,
    },
    Divisibility {
        n: usize,
    },
    DimensionChain {
        n: usize,
    },
    TooFewRows {
        n: usize,
        rows: usize,
    },
    TooFewColumns {
        n: usize,
        cols: usize,
    },
    NegativeEntry {
        n: usize,
        row: usize,
        column: usize,
    },
    ColumnSum {
        n: usize,
        column: usize,
        expected: BigInt,
        found: BigInt,
    },
}

impl fmt::Display for ManagedIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManagedIssue::LengthMismatch { p, mats } => {
                write!(f, "index chain has {p} entries for {mats} matrices")
            }
            ManagedIssue::NonPositiveIndex { n } => write!(f, "p_{n} is not positive"),
            ManagedIssue::Divisibility { n } => write!(f, "p_{n} does not divide p_{}", n + 1),
            ManagedIssue::DimensionChain { n } => {
                write!(f, "columns of M_{n} do not match rows of M_{}", n + 1)
            }
            ManagedIssue::TooFewRows { n, rows } => write!(f, "k_n ≥ 2 fails: M_{n} has {rows} rows"),
            ManagedIssue::TooFewColumns { n, cols } => {
                write!(f, "k_(n+1) ≥ 2 fails: M_{n} has {cols} columns")
            }
            ManagedIssue::NegativeEntry { n, row, column } => {
                write!(f, "M_{n}({row},{column}) is negative")
            }
            ManagedIssue::ColumnSum { n, column, expected, found } => write!(
                f,
                "column sum of M_{n} at column {column} is {found}, expected p_(n+1)/p_n = {expected}"
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManagedReport {
    pub issues: Vec<ManagedIssue>,
    pub strictly_positive: Vec<bool>,
}

impl ManagedReport {
    pub fn pass(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Divisibility, dimension chaining, column sums, `k_n ≥ 2` and positivity at every level.
pub fn verify_managed(seq: &ManagedSequence) -> ManagedReport {
    let mut issues = Vec::new();
    if seq.p.len() != seq.mats.len() + 1 {
        issues.push(ManagedIssue::LengthMismatch {
            p: seq.p.len(),
            mats: seq.mats.len(),
        });
    }
    for (n, p) in seq.p.iter().enumerate() {
        if !p.is_positive() {
            issues.push(ManagedIssue::NonPositiveIndex { n });
        }
    }
    let mut strictly_positive = Vec::with_capacity(seq.mats.len());
    for (n, m) in seq.mats.iter().enumerate() {
        if m.rows() < 2 {
            issues.push(ManagedIssue::TooFewRows { n, rows: m.rows() });
        }
        if m.cols() < 2 {
            issues.push(ManagedIssue::TooFewColumns { n, cols: m.cols() });
        }
        if let Some(next) = seq.mats.get(n + 1) {
            if m.cols() != next.rows() {
                issues.push(ManagedIssue::DimensionChain { n });
            }
        }
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                if m.get(i, j).is_negative() {
                    issues.push(ManagedIssue::NegativeEntry {
                        n,
                        row: i,
                        column: j,
                    });
                }
            }
        }
        strictly_positive.push(m.entries().all(|x| x.is_positive()));
        let (Some(a), Some(b)) = (seq.p.get(n), seq.p.get(n + 1)) else {
            continue;
        };
        if !a.is_positive() || !b.is_positive() {
            continue;
        }
        if !b.is_multiple_of(a) {
            issues.push(ManagedIssue::Divisibility { n });
            continue;
        }
        let expected = b / a;
        for (column, s) in m.column_sums().into_iter().enumerate() {
            if s != expected {
                issues.push(ManagedIssue::ColumnSum {
                    n,
                    column,
                    expected: expected.clone(),
                    found: s,
                });
            }
        }
    }
    ManagedReport {
        issues,
        strictly_positive,
    }
}

/// Products over consecutive blocks `[c_i, c_{i+1})`; `p` restricted to the cut points.
pub fn telescope(seq: &ManagedSequence, cuts: &[usize]) -> Result<ManagedSequence> {
    if cuts.first() != Some(&0) {
        return Err(Error::InvalidInput("cut points must start at 0".into()));
    }
    if cuts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "cut points must be strictly increasing (empty block)".into(),
        ));
    }
    if cuts.last().is_some_and(|&c| c > seq.len()) {
        return Err(Error::InvalidInput("cut point beyond the sequence".into()));
    }
    let mats = cuts
        .windows(2)
        .map(|w| seq.product(w[0], w[1]))
        .collect::<Result<Vec<_>>>()?;
    let p = cuts.iter().map(|&c| seq.p[c].clone()).collect();
    Ok(ManagedSequence { p, mats })
}

/// The augmented matrix `M̃`.
///
/// For the first level `M` is the `1 × k` row and column 1 is duplicated.
/// Otherwise every column `k` of `M` becomes `(1, M(1,k)−1, M(2,k), …)` and
/// the first such column appears twice.
pub fn augment(m: &IntMatrix, is_first_level: bool) -> Result<IntMatrix> {
    if m.cols() == 0 || m.rows() == 0 {
        return Err(Error::Augmentation("empty matrix".into()));
    }
    let src = |j: usize| if j == 0 { 0 } else { j - 1 };
    if is_first_level {
        return Ok(Mat::from_fn(m.rows(), m.cols() + 1, |i, j| {
            m.get(i, src(j)).clone()
        }));
    }
    if let Some(j) = (0..m.cols()).find(|&j| !m.get(0, j).is_positive()) {
        return Err(Error::Augmentation(format!(
            "row 1 entry at column {} is not positive",
            j + 1
        )));
    }
    Ok(Mat::from_fn(m.rows() + 1, m.cols() + 1, |i, j| {
        let c = src(j);
        match i {
            0 => BigInt::one(),
            1 => m.get(0, c) - 1,
            _ => m.get(i - 1, c).clone(),
        }
    }))
}

/// `|F_0|·(1, …, 1)`, the first-level row of a sequence.
pub fn first_level_row(seq: &ManagedSequence) -> IntMatrix {
    Mat::from_fn(1, seq.k(0), |_, _| seq.p[0].clone())
}

/// `(M̃_n)_n` for a managed sequence.
pub fn augment_sequence(seq: &ManagedSequence) -> Result<ManagedSequence> {
    let mats = seq
        .mats
        .iter()
        .map(|m| augment(m, false))
        .collect::<Result<Vec<_>>>()?;
    Ok(ManagedSequence {
        p: seq.p.clone(),
        mats,
    })
}

/// `S` of size `k`: `(k+1) × k` with columns `e_1+e_2, e_3, …, e_{k+1}`.
pub fn split_s(k: usize) -> IntMatrix {
    Mat::from_fn(k + 1, k, |i, j| {
        let hit = if j == 0 { i <= 1 } else { i == j + 1 };
        if hit {
            BigInt::one()
        } else {
            BigInt::zero()
        }
    })
}

/// `Ã` for a dimension-group matrix `A` (`k' × k`): the transpose of `augment(Aᵀ)`.
pub fn augment_transposed(a: &IntMatrix) -> Result<IntMatrix> {
    Ok(augment(&a.transpose(), false)?.transpose())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitFactors {
    pub s: IntMatrix,
    pub t: IntMatrix,
}

/// `A = T·S` and `Ã = S'·T` for a `k' × k` matrix `A`, verified before returning.
pub fn split_factors(a: &IntMatrix) -> Result<SplitFactors> {
    let (kp, k) = (a.rows(), a.cols());
    if k == 0 || kp == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    if let Some(i) = (0..kp).find(|&i| !a.get(i, 0).is_positive()) {
        return Err(Error::InvalidInput(format!(
            "A({},1) is not positive",
            i + 1
        )));
    }
    let s = split_s(k);
    let t = Mat::from_fn(kp, k + 1, |i, j| match j {
        0 => BigInt::one(),
        1 => a.get(i, 0) - 1,
        _ => a.get(i, j - 1).clone(),
    });
    if &t.mul(&s)? != a {
        return Err(Error::ConstructionDefect("A ≠ T·S".into()));
    }
    if split_s(kp).mul(&t)? != augment_transposed(a)? {
        return Err(Error::ConstructionDefect("Ã ≠ S'·T".into()));
    }
    Ok(SplitFactors { s, t })
}

fn binomial_capped(n: &BigUint, k: &BigUint, cap: Option<&BigUint>) -> BigUint {
    let k = if k + k > *n { n - k } else { k.clone() };
    let base = n - &k;
    let mut c = BigUint::one();
    let mut j = BigUint::one();
    while j <= k {
        c = c * (&base + &j) / &j;
        if let Some(cap) = cap {
            if &c >= cap {
                return cap.clone();
            }
        }
        j += 1u32;
    }
    c
}

fn nonnegative_parts(parts: &[BigInt]) -> Result<Vec<BigUint>> {
    parts
        .iter()
        .map(|x| {
            x.to_biguint()
                .ok_or_else(|| Error::Domain(format!("negative multinomial part {x}")))
        })
        .collect()
}

fn multinomial_impl(parts: &[BigInt], cap: Option<&BigUint>) -> Result<BigUint> {
    let parts = nonnegative_parts(parts)?;
    let mut total = BigUint::zero();
    let mut acc = BigUint::one();
    for a in &parts {
        total += a;
        acc *= binomial_capped(&total, a, cap);
        if let Some(cap) = cap {
            if &acc >= cap {
                return Ok(cap.clone());
            }
        }
    }
    Ok(acc)
}

/// `(Σ parts)! / ∏ parts_i!`.
pub fn multinomial(parts: &[BigInt]) -> Result<BigUint> {
    multinomial_impl(parts, None)
}

/// `min(multinomial(parts), cap)`, computed without forming huge factorials.
pub fn multinomial_capped(parts: &[BigInt], cap: &BigUint) -> Result<BigUint> {
    multinomial_impl(parts, Some(cap))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionMode {
    Measures,
    OrbitEquivalence,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionCondition {
    /// `R_{n_i} ⊆ F_{n_{i+1}}`.
    BorderInside,
    /// Every entry exceeds `1 + |Border_full|`.
    EntriesExceedBorder,
    /// `k_{n_{i+1}}` is below every entry.
    ColumnsBelowEntries,
    /// `Σ_{g∈R} |F \ (F−g)| / |F| < 1 / (|F_{n_i}| r_{n_i} r_{n_i+1})`.
    BoundaryInequality,
}

impl fmt::Display for SelectionCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionCondition::BorderInside => "(i) R ⊆ F",
            SelectionCondition::EntriesExceedBorder => "(ii) entries > 1 + |border|",
            SelectionCondition::ColumnsBelowEntries => "(iii) k < entries",
            SelectionCondition::BoundaryInequality => "boundary inequality",
        })
    }
}

/// Outcome of the selection conditions for one telescoped block `[a, b)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockCheck {
    pub from: usize,
    pub to: usize,
    pub border: BorderInfo,
    pub min_entry: BigInt,
    pub failed: Vec<SelectionCondition>,
}

impl BlockCheck {
    pub fn pass(&self) -> bool {
        self.failed.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Selection {
    pub cuts: Vec<usize>,
    pub checks: Vec<BlockCheck>,
    /// First failing condition at the deepest level tried after the last cut.
    pub stopped: Option<(SelectionCondition, usize)>,
}

fn check_block(
    seq: &ManagedSequence,
    chain: &LatticeChain,
    a: usize,
    b: usize,
    product: &IntMatrix,
    mode: SelectionMode,
) -> Result<BlockCheck> {
    let lower = chain.level(a)?;
    let upper = chain.domain(b)?;
    let border = border_info_between(lower, upper)?;
    let min_entry = product
        .entries()
        .min()
        .cloned()
        .ok_or_else(|| Error::InvalidInput("empty product".into()))?;
    let mut failed = Vec::new();
    if !border.r_subset_next {
        failed.push(SelectionCondition::BorderInside);
    }
    if min_entry <= BigInt::from(border.full_size.clone()) + 1 {
        failed.push(SelectionCondition::EntriesExceedBorder);
    }
    if BigInt::from(product.cols()) >= min_entry {
        failed.push(SelectionCondition::ColumnsBelowEntries);
    }
    if mode == SelectionMode::OrbitEquivalence {
        let ok = a + 1 < seq.len() && {
            let lhs = BigInt::from(border.defect_sum.clone())
                * BigInt::from(chain.size(a)?)
                * seq.ratio(a)
                * seq.ratio(a + 1);
            lhs < BigInt::from(chain.size(b)?)
        };
        if !ok {
            failed.push(SelectionCondition::BoundaryInequality);
        }
    }
    Ok(BlockCheck {
        from: a,
        to: b,
        border,
        min_entry,
        failed,
    })
}

fn check_inputs(seq: &ManagedSequence, chain: &LatticeChain) -> Result<()> {
    if chain.len() < seq.p.len() {
        return Err(Error::InvalidInput(format!(
            "chain has {} levels, sequence needs {}",
            chain.len(),
            seq.p.len()
        )));
    }
    for (n, p) in seq.p.iter().enumerate() {
        if BigInt::from(chain.size(n)?) != *p {
            return Err(Error::InvalidInput(format!(
                "p_{n} = {p} differs from |F_{n}|"
            )));
        }
    }
    if seq
        .mats
        .iter()
        .any(|m| m.entries().any(|x| !x.is_positive()))
    {
        return Err(Error::InvalidInput(
            "sequence is not strictly positive".into(),
        ));
    }
    Ok(())
}

/// Greedy index selection: each next cut is the first level at which the
/// telescoped block satisfies every condition of `mode`.
pub fn select_indices(
    seq: &ManagedSequence,
    chain: &LatticeChain,
    mode: SelectionMode,
) -> Result<Selection> {
    check_inputs(seq, chain)?;
    let mut cuts = vec![0usize];
    let mut checks = Vec::new();
    let mut stopped = None;
    let mut a = 0;
    'outer: while a < seq.len() {
        let mut product = IntMatrix::identity(seq.k(a));
        let mut last_fail = None;
        for b in a + 1..=seq.len() {
            product = product.mul(&seq.mats[b - 1])?;
            let check = check_block(seq, chain, a, b, &product, mode)?;
            if check.pass() {
                cuts.push(b);
                checks.push(check);
                a = b;
                continue 'outer;
            }
            last_fail = Some((check.failed[0], b));
        }
        stopped = last_fail;
        break;
    }
    if cuts.len() < 2 {
        let (condition, level) = stopped.unwrap_or((SelectionCondition::BorderInside, 0));
        return Err(Error::NeedsMoreLevels {
            condition: condition.to_string(),
            level,
        });
    }
    Ok(Selection {
        cuts,
        checks,
        stopped,
    })
}

/// Re-evaluates every selection condition on given cut points.
pub fn check_selection(
    seq: &ManagedSequence,
    chain: &LatticeChain,
    cuts: &[usize],
    mode: SelectionMode,
) -> Result<Vec<BlockCheck>> {
    check_inputs(seq, chain)?;
    cuts.windows(2)
        .map(|w| {
            let product = seq.product(w[0], w[1])?;
            check_block(seq, chain, w[0], w[1], &product, mode)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnFill {
    pub column: usize,
    pub multiplicity: usize,
    /// The multinomial bound, capped at `multiplicity`.
    pub bound: BigUint,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FillabilityReport {
    pub columns: Vec<ColumnFill>,
}

impl FillabilityReport {
    pub fn pass(&self) -> bool {
        self.columns.iter().all(|c| c.failure.is_none())
    }
}

/// The count parts `(M̃(2,k), …, M̃(l−1,k), M̃(l,k) − border)` of column `k`.
pub fn free_parts(aug: &IntMatrix, k: usize, border: &BigInt) -> Vec<BigInt> {
    let l = aug.rows();
    (1..l)
        .map(|i| {
            let x = aug.get(i, k).clone();
            if i == l - 1 {
                x - border
            } else {
                x
            }
        })
        .collect()
}

/// Multiplicity of each column against its multinomial arrangement bound.
pub fn check_fillability(aug: &IntMatrix, border_coset_size: &BigInt) -> FillabilityReport {
    let columns = (0..aug.cols())
        .map(|k| {
            let col = aug.column(k);
            let multiplicity = (0..aug.cols()).filter(|&j| aug.column(j) == col).count();
            let parts = free_parts(aug, k, border_coset_size);
            let last = parts.last().cloned().unwrap_or_default();
            if aug.rows() < 2 || last.is_negative() {
                return ColumnFill {
                    column: k,
                    multiplicity,
                    bound: BigUint::zero(),
                    failure: Some("insufficient last-block count".into()),
                };
            }
            let cap = BigUint::from(multiplicity);
            let bound = multinomial_capped(&parts, &cap).unwrap_or_default();
            let failure =
                (bound < cap).then(|| format!("multiplicity {multiplicity} exceeds bound {bound}"));
            ColumnFill {
                column: k,
                multiplicity,
                bound,
                failure,
            }
        })
        .collect();
    FillabilityReport { columns }
}

/// Converts a nonnegative big integer that is known to be small.
pub fn small(x: &BigInt) -> Result<u128> {
    if x.sign() == Sign::Minus {
        return Err(Error::Domain(format!("negative count {x}")));
    }
    x.to_u128()
        .ok_or_else(|| Error::Overflow(format!("{x} exceeds 128 bits")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::int_matrix;

    fn seq(p: &[i64], mats: &[&[&[i64]]]) -> ManagedSequence {
        ManagedSequence::new(
            p.iter().map(|&x| BigInt::from(x)).collect(),
            mats.iter().map(|m| int_matrix(m)).collect(),
        )
    }

    #[test]
    fn verify_managed_examples() {
        assert!(verify_managed(&seq(&[1, 5], &[&[&[2, 3], &[3, 2]]])).pass());
        let r = verify_managed(&seq(&[1, 5], &[&[&[5, 5]]]));
        assert!(r.issues.iter().any(|i| i.to_string().contains("k_n ≥ 2")));
        let r = verify_managed(&seq(&[1, 5], &[&[&[2, 3], &[2, 2]]]));
        assert_eq!(
            r.issues,
            vec![ManagedIssue::ColumnSum {
                n: 0,
                column: 0,
                expected: 5.into(),
                found: 4.into()
            }]
        );
    }

    #[test]
    fn telescope_examples() {
        let s = seq(&[1, 5, 25], &[&[&[2, 3], &[3, 2]], &[&[1, 4], &[4, 1]]]);
        let t = telescope(&s, &[0, 2]).unwrap();
        assert_eq!(t.mats, vec![int_matrix(&[&[14, 11], &[11, 14]])]);
        assert_eq!(t.ratio(0), BigInt::from(25));
        assert_eq!(telescope(&s, &[0, 1]).unwrap().mats[0], s.mats[0]);
        let m: &[&[i64]] = &[&[2, 3], &[3, 2]];
        let three = seq(&[1, 5, 25, 125], &[m, m, m]);
        let t = telescope(&three, &[0, 3]).unwrap();
        assert!(t.mats[0]
            .column_sums()
            .iter()
            .all(|c| *c == BigInt::from(125)));
        assert!(telescope(&s, &[0, 0]).is_err());
    }

    #[test]
    fn augment_examples() {
        let m = int_matrix(&[&[2, 3], &[3, 2]]);
        let a = augment(&m, false).unwrap();
        assert_eq!(a, int_matrix(&[&[1, 1, 1], &[1, 1, 2], &[3, 3, 2]]));
        assert!(a.column_sums().iter().all(|c| *c == BigInt::from(5)));
        assert_eq!(
            augment(&int_matrix(&[&[9, 9]]), true).unwrap(),
            int_matrix(&[&[9, 9, 9]])
        );
        assert!(matches!(
            augment(&int_matrix(&[&[0, 3], &[5, 2]]), false),
            Err(Error::Augmentation(_))
        ));
    }

    #[test]
    fn split_examples() {
        let a = int_matrix(&[&[2, 3], &[3, 2]]);
        let f = split_factors(&a).unwrap();
        assert_eq!(f.s, int_matrix(&[&[1, 0], &[1, 0], &[0, 1]]));
        assert_eq!(f.t, int_matrix(&[&[1, 1, 3], &[1, 2, 2]]));
        assert_eq!(f.t.mul(&f.s).unwrap(), a);
        assert_eq!(
            split_s(2).mul(&f.t).unwrap(),
            int_matrix(&[&[1, 1, 3], &[1, 1, 3], &[1, 2, 2]])
        );
        let f = split_factors(&int_matrix(&[&[1, 0], &[1, 1]])).unwrap();
        assert_eq!(f.t.get(0, 1), &BigInt::zero());
    }

    #[test]
    fn multinomial_examples() {
        let m = |p: &[i64]| {
            multinomial(&p.iter().map(|&x| BigInt::from(x)).collect::<Vec<_>>()).unwrap()
        };
        assert_eq!(m(&[2, 1]), BigUint::from(3u32));
        assert_eq!(m(&[5]), BigUint::from(1u32));
        assert_eq!(m(&[1, 1, 1]), BigUint::from(6u32));
        assert_eq!(m(&[]), BigUint::from(1u32));
        assert!(multinomial(&[BigInt::from(-1)]).is_err());
        let cap = BigUint::from(10u32);
        assert_eq!(
            multinomial_capped(&[BigInt::from(10).pow(30), BigInt::from(3)], &cap).unwrap(),
            cap
        );
    }

    #[test]
    fn fillability_examples() {
        let aug = int_matrix(&[&[1, 1], &[1, 1], &[3, 3]]);
        let r = check_fillability(&aug, &BigInt::from(2));
        assert!(r.pass());
        assert_eq!(r.columns[0].bound, BigUint::from(2u32));
        let aug = int_matrix(&[&[1, 1, 1], &[1, 1, 1], &[3, 3, 3]]);
        assert!(!check_fillability(&aug, &BigInt::from(2)).pass());
        let aug = int_matrix(&[&[1, 1], &[1, 2], &[3, 2]]);
        let r = check_fillability(&aug, &BigInt::from(4));
        assert_eq!(
            r.columns[0].failure.as_deref(),
            Some("insufficient last-block count")
        );
    }

    fn nine_chain(levels: usize) -> LatticeChain {
        let q: Vec<Vec<i64>> = (1..=levels as u32).map(|n| vec![9i64.pow(n)]).collect();
        LatticeChain::from_moduli(&q).unwrap()
    }

    fn nine_seq(levels: usize) -> ManagedSequence {
        let p = (1..=levels as u32)
            .map(|n| BigInt::from(9i64.pow(n)))
            .collect();
        ManagedSequence::new(p, vec![int_matrix(&[&[5, 4], &[4, 5]]); levels - 1])
    }

    #[test]
    fn select_measures_example() {
        let chain = nine_chain(4);
        let s = select_indices(&nine_seq(4), &chain, SelectionMode::Measures).unwrap();
        assert_eq!(&s.cuts[..2], &[0, 2]);
        assert_eq!(
            telescope(&nine_seq(4), &[0, 2]).unwrap().mats[0],
            int_matrix(&[&[41, 40], &[40, 41]])
        );
        let c = &s.checks[0];
        assert_eq!(c.border.full_size, BigUint::from(16u32));
        assert_eq!(c.min_entry, BigInt::from(40));
        let single =
            check_selection(&nine_seq(4), &chain, &[0, 1], SelectionMode::Measures).unwrap();
        assert!(single[0]
            .failed
            .contains(&SelectionCondition::EntriesExceedBorder));
    }

    #[test]
    fn select_orbit_equivalence_first_admissible() {
        let chain = nine_chain(6);
        let s = select_indices(&nine_seq(6), &chain, SelectionMode::OrbitEquivalence).unwrap();
        assert_eq!(s.cuts[1], 4);
        assert_eq!(chain.size(4).unwrap(), BigUint::from(59049u32));
        assert_eq!(s.checks[0].border.defect_sum, BigUint::from(72u32));
        let lhs = 72u64 * 9 * 9 * 9;
        assert_eq!(lhs, 52488);
        assert!(lhs < 59049 && 72 * 729 * 9 >= 6561);
    }
}
