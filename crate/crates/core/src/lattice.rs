//! Diagonal lattices of Z^d, fundamental domains and Følner chains.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};

/// A point of Z^d.
pub type GroupElement = Vec<i64>;

/// Largest set that explicit set arithmetic will materialize.
pub const MATERIALIZE_LIMIT: u64 = 1 << 24;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lattice {
    moduli: Vec<i64>,
}

impl Lattice {
    pub fn new(moduli: Vec<i64>) -> Result<Self> {
        if moduli.is_empty() {
            return Err(Error::InvalidModulus("empty moduli".into()));
        }
        if let Some(q) = moduli.iter().find(|&&q| q < 1) {
            return Err(Error::InvalidModulus(format!("modulus {q} < 1")));
        }
        Ok(Lattice { moduli })
    }

    pub fn moduli(&self) -> &[i64] {
        &self.moduli
    }

    pub fn dim(&self) -> usize {
        self.moduli.len()
    }

    pub fn index(&self) -> BigUint {
        self.moduli
            .iter()
            .map(|&q| BigUint::from(q as u64))
            .product()
    }

    pub fn contains(&self, g: &[i64]) -> bool {
        g.len() == self.moduli.len() && g.iter().zip(&self.moduli).all(|(x, q)| x % q == 0)
    }

    /// Componentwise divisibility `other ⊆ self`.
    pub fn contains_lattice(&self, other: &Lattice) -> bool {
        self.dim() == other.dim()
            && other
                .moduli
                .iter()
                .zip(&self.moduli)
                .all(|(big, small)| big % small == 0)
    }
}

/// An axis-parallel box, bounds inclusive.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BoxDomain {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::Domain("malformed box".into()));
        }
        Ok(BoxDomain { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn side(&self, i: usize) -> i64 {
        self.hi[i] - self.lo[i] + 1
    }

    pub fn sides(&self) -> Vec<i64> {
        (0..self.dim()).map(|i| self.side(i)).collect()
    }

    pub fn len(&self) -> BigUint {
        (0..self.dim())
            .map(|i| BigUint::from(self.side(i) as u64))
            .product()
    }

    pub fn len_u64(&self) -> Option<u64> {
        (0..self.dim()).try_fold(1u64, |acc, i| acc.checked_mul(self.side(i) as u64))
    }

    pub fn contains(&self, g: &[i64]) -> bool {
        g.len() == self.dim()
            && g.iter()
                .enumerate()
                .all(|(i, &x)| self.lo[i] <= x && x <= self.hi[i])
    }

    pub fn contains_box(&self, other: &BoxDomain) -> bool {
        (0..self.dim()).all(|i| self.lo[i] <= other.lo[i] && other.hi[i] <= self.hi[i])
    }

    /// Lexicographic position of `g`, first coordinate most significant.
    pub fn index_of(&self, g: &[i64]) -> Option<u64> {
        if !self.contains(g) {
            return None;
        }
        let mut idx = 0u64;
        for (i, &x) in g.iter().enumerate() {
            idx = idx * self.side(i) as u64 + (x - self.lo[i]) as u64;
        }
        Some(idx)
    }

    pub fn point_at(&self, mut idx: u64) -> GroupElement {
        let mut p = vec![0; self.dim()];
        for i in (0..self.dim()).rev() {
            let s = self.side(i) as u64;
            p[i] = self.lo[i] + (idx % s) as i64;
            idx /= s;
        }
        p
    }

    pub fn iter(&self) -> BoxIter<'_> {
        BoxIter {
            b: self,
            next: Some(self.lo.clone()),
        }
    }
}

pub struct BoxIter<'a> {
    b: &'a BoxDomain,
    next: Option<GroupElement>,
}

impl Iterator for BoxIter<'_> {
    type Item = GroupElement;

    fn next(&mut self) -> Option<GroupElement> {
        let cur = self.next.take()?;
        let mut n = cur.clone();
        let mut i = n.len();
        loop {
            if i == 0 {
                break;
            }
            i -= 1;
            if n[i] < self.b.hi[i] {
                n[i] += 1;
                self.next = Some(n);
                break;
            }
            n[i] = self.b.lo[i];
        }
        Some(cur)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Domain {
    Box(BoxDomain),
    Explicit(BTreeSet<GroupElement>),
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Box(b) => b.dim(),
            Domain::Explicit(s) => s.iter().next().map_or(0, |g| g.len()),
        }
    }

    pub fn len(&self) -> BigUint {
        match self {
            Domain::Box(b) => b.len(),
            Domain::Explicit(s) => BigUint::from(s.len()),
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Domain::Explicit(s) if s.is_empty())
    }

    pub fn contains(&self, g: &[i64]) -> bool {
        match self {
            Domain::Box(b) => b.contains(g),
            Domain::Explicit(s) => s.contains(g),
        }
    }

    pub fn as_box(&self) -> Option<&BoxDomain> {
        match self {
            Domain::Box(b) => Some(b),
            Domain::Explicit(_) => None,
        }
    }

    /// All elements in lexicographic order.
    pub fn points(&self) -> Result<Vec<GroupElement>> {
        match self {
            Domain::Box(b) => {
                let n = b
                    .len_u64()
                    .filter(|&n| n <= MATERIALIZE_LIMIT)
                    .ok_or_else(|| {
                        Error::Unsupported(format!(
                            "domain of size {} is too large to enumerate",
                            b.len()
                        ))
                    })?;
                let mut v = Vec::with_capacity(n as usize);
                v.extend(b.iter());
                Ok(v)
            }
            Domain::Explicit(s) => Ok(s.iter().cloned().collect()),
        }
    }

    pub fn to_set(&self) -> Result<BTreeSet<GroupElement>> {
        Ok(self.points()?.into_iter().collect())
    }
}

/// The centered box `∏ {−⌊(q_i−1)/2⌋, …, q_i−1−⌊(q_i−1)/2⌋}`.
pub fn canonical_domain(q: &[i64]) -> Result<Domain> {
    if q.is_empty() {
        return Err(Error::InvalidModulus("empty moduli".into()));
    }
    if let Some(x) = q.iter().find(|&&x| x < 1) {
        return Err(Error::InvalidModulus(format!("modulus {x} < 1")));
    }
    let lo: Vec<i64> = q.iter().map(|&x| -((x - 1) / 2)).collect();
    let hi: Vec<i64> = q.iter().zip(&lo).map(|(&x, &l)| x - 1 + l).collect();
    Ok(Domain::Box(BoxDomain { lo, hi }))
}

fn sub(a: &[i64], b: &[i64]) -> GroupElement {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn add(a: &[i64], b: &[i64]) -> GroupElement {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn floor_div(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

fn ceil_div(a: i64, b: i64) -> i64 {
    -((-a).div_euclid(b))
}

/// Multiples of `q` in `[x, y]` as `(first index, last index)` in units of `q`.
fn multiples_in(x: i64, y: i64, q: i64) -> Option<(i64, i64)> {
    let a = ceil_div(x, q);
    let b = floor_div(y, q);
    (a <= b).then_some((a, b))
}

fn count_multiples(x: i64, y: i64, q: i64) -> u64 {
    multiples_in(x, y, q).map_or(0, |(a, b)| (b - a + 1) as u64)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Level {
    pub lattice: Lattice,
    pub domain: Domain,
}

/// Decomposition `v = γ + u` of each `v ∈ F_{n+1}`, `γ ∈ F_{n+1} ∩ Γ_n`, `u ∈ F_n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tiling {
    /// Per coordinate, the translates are the multiples `j·q_i` for `j` in the stored range.
    Product {
        ranges: Vec<(i64, i64)>,
    },
    Explicit(BTreeMap<GroupElement, (GroupElement, GroupElement)>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeChain {
    d: usize,
    levels: Vec<Level>,
    tilings: Vec<Option<Tiling>>,
}

impl LatticeChain {
    /// A one-level chain with the canonical domain of `q0`.
    pub fn new(q0: Vec<i64>) -> Result<Self> {
        let domain = canonical_domain(&q0)?;
        let d = q0.len();
        Ok(LatticeChain {
            d,
            levels: vec![Level {
                lattice: Lattice::new(q0)?,
                domain,
            }],
            tilings: vec![None],
        })
    }

    pub fn from_moduli(moduli: &[Vec<i64>]) -> Result<Self> {
        let (first, rest) = moduli
            .split_first()
            .ok_or_else(|| Error::InvalidInput("empty chain".into()))?;
        let mut c = LatticeChain::new(first.clone())?;
        for q in rest {
            c = refine_chain(&c, q)?;
        }
        Ok(c)
    }

    /// Assembles a chain without any verification; `verify_chain` reports defects.
    pub fn from_levels(d: usize, levels: Vec<Level>) -> Self {
        let tilings = vec![None; levels.len()];
        LatticeChain { d, levels, tilings }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level(&self, n: usize) -> Result<&Level> {
        self.levels.get(n).ok_or(Error::LevelOutOfRange {
            level: n,
            len: self.levels.len(),
        })
    }

    pub fn domain(&self, n: usize) -> Result<&Domain> {
        Ok(&self.level(n)?.domain)
    }

    pub fn lattice(&self, n: usize) -> Result<&Lattice> {
        Ok(&self.level(n)?.lattice)
    }

    pub fn moduli(&self) -> Vec<Vec<i64>> {
        self.levels
            .iter()
            .map(|l| l.lattice.moduli.clone())
            .collect()
    }

    pub fn tiling(&self, n: usize) -> Option<&Tiling> {
        self.tilings.get(n).and_then(|t| t.as_ref())
    }

    /// `|F_n|`.
    pub fn size(&self, n: usize) -> Result<BigUint> {
        Ok(self.domain(n)?.len())
    }

    pub fn sizes(&self) -> Vec<BigUint> {
        self.levels.iter().map(|l| l.domain.len()).collect()
    }

    /// The chain restricted to the given increasing levels.
    pub fn subchain(&self, indices: &[usize]) -> Result<LatticeChain> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("subchain indices must increase".into()));
        }
        let mut levels = Vec::with_capacity(indices.len());
        for &i in indices {
            levels.push(self.level(i)?.clone());
        }
        let mut c = LatticeChain::from_levels(self.d, levels);
        for n in 1..c.levels.len() {
            c.tilings[n] = Some(build_tiling(&c.levels[n - 1], &c.levels[n].domain)?);
        }
        Ok(c)
    }

    /// Decomposes `v ∈ F_{n+1}` as `γ + u` with `γ ∈ F_{n+1} ∩ Γ_n`, `u ∈ F_n`.
    pub fn decompose(&self, v: &[i64], n: usize) -> Result<(GroupElement, GroupElement)> {
        let u = coset_representative(v, self, n)?;
        let gamma = sub(v, &u);
        Ok((gamma, u))
    }
}

fn build_tiling(lower: &Level, upper: &Domain) -> Result<Tiling> {
    let q = lower.lattice.moduli();
    match (&lower.domain, upper) {
        (Domain::Box(f), Domain::Box(big)) => {
            let mut ranges = Vec::with_capacity(q.len());
            for i in 0..q.len() {
                let (a, b) = multiples_in(big.lo[i], big.hi[i], q[i]).ok_or_else(|| {
                    Error::InternalConsistency(format!("no translates in coordinate {i}"))
                })?;
                if f.side(i) != q[i]
                    || a * q[i] + f.lo[i] != big.lo[i]
                    || b * q[i] + f.hi[i] != big.hi[i]
                {
                    return Err(Error::InternalConsistency(format!(
                        "translates of the lower domain do not tile coordinate {i}"
                    )));
                }
                ranges.push((a, b));
            }
            Ok(Tiling::Product { ranges })
        }
        _ => {
            let small = lower.domain.points()?;
            let big = upper.to_set()?;
            let mut map = BTreeMap::new();
            for gamma in big.iter().filter(|g| lower.lattice.contains(g)) {
                for u in &small {
                    let v = add(gamma, u);
                    if !big.contains(&v) {
                        return Err(Error::InternalConsistency(format!(
                            "translate {gamma:?} leaves the domain at {v:?}"
                        )));
                    }
                    if map.insert(v.clone(), (gamma.clone(), u.clone())).is_some() {
                        return Err(Error::InternalConsistency(format!(
                            "point {v:?} covered twice"
                        )));
                    }
                }
            }
            if map.len() != big.len() {
                return Err(Error::InternalConsistency(
                    "translates do not cover the domain".into(),
                ));
            }
            Ok(Tiling::Explicit(map))
        }
    }
}

/// Appends `F_i = ∪_{v ∈ D ∩ Γ_{i−1}} (v + F_{i−1})` with `D = canonical_domain(q_next)`.
pub fn refine_chain(chain: &LatticeChain, q_next: &[i64]) -> Result<LatticeChain> {
    let top = chain
        .levels
        .last()
        .ok_or_else(|| Error::InvalidInput("empty chain".into()))?;
    if q_next.len() != chain.d {
        return Err(Error::DimensionMismatch(format!(
            "moduli of length {} for a chain in dimension {}",
            q_next.len(),
            chain.d
        )));
    }
    let next = Lattice::new(q_next.to_vec())?;
    if !top.lattice.contains_lattice(&next) {
        return Err(Error::Refinement(format!(
            "{:?} is not componentwise divisible by {:?}",
            q_next,
            top.lattice.moduli()
        )));
    }
    if next.moduli == top.lattice.moduli {
        return Err(Error::Refinement("refinement must be strict".into()));
    }
    let q = top.lattice.moduli();
    let d_box = match canonical_domain(q_next)? {
        Domain::Box(b) => b,
        Domain::Explicit(_) => unreachable!(),
    };
    let domain = match &top.domain {
        Domain::Box(f) => {
            let mut lo = Vec::with_capacity(chain.d);
            let mut hi = Vec::with_capacity(chain.d);
            for i in 0..chain.d {
                let (a, b) = multiples_in(d_box.lo[i], d_box.hi[i], q[i])
                    .ok_or_else(|| Error::Refinement("no lattice points in the new box".into()))?;
                lo.push(
                    a.checked_mul(q[i])
                        .and_then(|x| x.checked_add(f.lo[i]))
                        .ok_or_else(overflow)?,
                );
                hi.push(
                    b.checked_mul(q[i])
                        .and_then(|x| x.checked_add(f.hi[i]))
                        .ok_or_else(overflow)?,
                );
            }
            Domain::Box(BoxDomain { lo, hi })
        }
        Domain::Explicit(f) => {
            let mut set = BTreeSet::new();
            for v in Domain::Box(d_box).points()? {
                if top.lattice.contains(&v) {
                    for u in f {
                        set.insert(add(&v, u));
                    }
                }
            }
            Domain::Explicit(set)
        }
    };
    let level = Level {
        lattice: next,
        domain,
    };
    let tiling = build_tiling(top, &level.domain)?;
    let mut out = chain.clone();
    out.levels.push(level);
    out.tilings.push(Some(tiling));
    Ok(out)
}

fn overflow() -> Error {
    Error::Overflow("coordinates exceed 64-bit range".into())
}

/// `|(F+g) △ F| / |F|`.
pub fn folner_defect(f: &Domain, g: &[i64]) -> Result<BigRational> {
    let size = BigInt::from(f.len());
    if size.is_zero() {
        return Err(Error::Domain("empty domain".into()));
    }
    let sym: BigInt = match f {
        Domain::Box(b) => {
            let inter: BigInt = (0..b.dim())
                .map(|i| BigInt::from((b.side(i) - g[i].abs()).max(0)))
                .product();
            (&size - inter) * 2
        }
        Domain::Explicit(s) => {
            let shifted: HashSet<GroupElement> = s.iter().map(|u| add(u, g)).collect();
            let inter = s.iter().filter(|u| shifted.contains(*u)).count();
            BigInt::from(2 * (s.len() - inter))
        }
    };
    Ok(BigRational::new(sym, size))
}

/// Explicit border sets between a level and a larger domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BorderSets {
    pub r: BTreeSet<GroupElement>,
    pub full: BTreeSet<GroupElement>,
    pub coset: BTreeSet<GroupElement>,
    pub r_subset_next: bool,
}

/// Cardinalities of the border sets, plus `Σ_{g ∈ R} |F' \ (F' − g)|`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BorderInfo {
    pub r_size: BigUint,
    pub full_size: BigUint,
    pub coset_size: BigUint,
    pub r_subset_next: bool,
    pub defect_sum: BigUint,
}

/// `(R_n, Border_full, Border_coset)` for levels `n` and `n+1`.
pub fn border_set(chain: &LatticeChain, n: usize) -> Result<BorderSets> {
    let lower = chain.level(n)?;
    let upper = chain.level(n + 1)?;
    border_sets_between(lower, &upper.domain)
}

pub fn border_sets_between(lower: &Level, upper: &Domain) -> Result<BorderSets> {
    let f = lower.domain.points()?;
    let mut r = BTreeSet::new();
    for a in &f {
        for b in &f {
            r.insert(sub(a, b));
        }
    }
    let big = upper.to_set()?;
    let r_subset_next = r.iter().all(|g| big.contains(g));
    let full: BTreeSet<GroupElement> = big
        .iter()
        .filter(|v| r.iter().any(|g| !big.contains(&add(v, g))))
        .cloned()
        .collect();
    let coset = full
        .iter()
        .filter(|v| lower.lattice.contains(v))
        .cloned()
        .collect();
    Ok(BorderSets {
        r,
        full,
        coset,
        r_subset_next,
    })
}

pub fn border_info(chain: &LatticeChain, n: usize) -> Result<BorderInfo> {
    let lower = chain.level(n)?;
    let upper = chain.level(n + 1)?;
    border_info_between(lower, &upper.domain)
}

/// Closed forms for boxes; explicit set arithmetic otherwise.
pub fn border_info_between(lower: &Level, upper: &Domain) -> Result<BorderInfo> {
    match (&lower.domain, upper) {
        (Domain::Box(f), Domain::Box(big)) => {
            let d = f.dim();
            let q = lower.lattice.moduli();
            let mut r_size = BigUint::one();
            let mut inner = BigUint::one();
            let mut multiples = BigUint::one();
            let mut inner_multiples = BigUint::one();
            let mut overlap_sum = BigUint::one();
            let mut r_subset_next = true;
            for i in 0..d {
                let l = f.side(i);
                let big_side = big.side(i);
                let reach = l - 1;
                r_size *= BigUint::from((2 * reach + 1) as u64);
                if big.lo[i] > -reach || big.hi[i] < reach {
                    r_subset_next = false;
                }
                let (x, y) = (big.lo[i] + reach, big.hi[i] - reach);
                inner *= BigUint::from((y - x + 1).max(0) as u64);
                multiples *= BigUint::from(count_multiples(big.lo[i], big.hi[i], q[i]));
                inner_multiples *= BigUint::from(if x <= y {
                    count_multiples(x, y, q[i])
                } else {
                    0
                });
                let a = reach.min(big_side - 1);
                let s = (2 * a as u128 + 1) * big_side as u128 - (a as u128) * (a as u128 + 1);
                overlap_sum *= BigUint::from(s);
            }
            let size = big.len();
            let defect_sum = &r_size * &size - overlap_sum;
            Ok(BorderInfo {
                r_size,
                full_size: size - inner,
                coset_size: multiples - inner_multiples,
                r_subset_next,
                defect_sum,
            })
        }
        _ => {
            let sets = border_sets_between(lower, upper)?;
            let big = upper.to_set()?;
            let defect_sum: usize = sets
                .r
                .iter()
                .map(|g| big.iter().filter(|v| !big.contains(&add(v, g))).count())
                .sum();
            Ok(BorderInfo {
                r_size: BigUint::from(sets.r.len()),
                full_size: BigUint::from(sets.full.len()),
                coset_size: BigUint::from(sets.coset.len()),
                r_subset_next: sets.r_subset_next,
                defect_sum: BigUint::from(defect_sum),
            })
        }
    }
}

/// The unique `u ∈ F_n` with `g − u ∈ Γ_n`.
pub fn coset_representative(g: &[i64], chain: &LatticeChain, n: usize) -> Result<GroupElement> {
    let level = chain.level(n)?;
    if g.len() != chain.d {
        return Err(Error::DimensionMismatch(format!(
            "element of length {} in dimension {}",
            g.len(),
            chain.d
        )));
    }
    let q = level.lattice.moduli();
    match &level.domain {
        Domain::Box(b) if (0..chain.d).all(|i| b.side(i) == q[i]) => Ok(g
            .iter()
            .enumerate()
            .map(|(i, &x)| b.lo[i] + (x - b.lo[i]).rem_euclid(q[i]))
            .collect()),
        domain => domain
            .points()?
            .into_iter()
            .find(|u| level.lattice.contains(&sub(g, u)))
            .ok_or_else(|| Error::Domain(format!("no representative of {g:?} in level {n}"))),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelReport {
    pub level: usize,
    pub contains_identity: bool,
    pub fundamental_domain: bool,
    pub index_matches: bool,
    /// `F_n ⊆ F_{n+1}` and `Γ_{n+1} ⊊ Γ_n`; `None` at the top level.
    pub nested_in_next: Option<bool>,
    pub strict_refinement: Option<bool>,
}

impl LevelReport {
    /// Condition F1 at this level.
    pub fn f1(&self) -> bool {
        self.contains_identity
            && self.fundamental_domain
            && self.index_matches
            && self.nested_in_next.unwrap_or(true)
            && self.strict_refinement.unwrap_or(true)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct F3Failure {
    pub j: usize,
    pub i: usize,
    pub v: GroupElement,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainReport {
    pub levels: Vec<LevelReport>,
    pub f3_failures: Vec<F3Failure>,
    /// Window points outside every stored level.
    pub f2_uncovered: Vec<GroupElement>,
    /// `folner[n][t]` is the defect of generator `t` on `F_n`.
    pub folner: Vec<Vec<BigRational>>,
}

impl ChainReport {
    pub fn f1_ok(&self) -> bool {
        self.levels.iter().all(LevelReport::f1)
    }

    pub fn f3_ok(&self) -> bool {
        self.f3_failures.is_empty()
    }

    pub fn f2_ok(&self) -> bool {
        self.f2_uncovered.is_empty()
    }

    pub fn all_pass(&self) -> bool {
        self.f1_ok() && self.f2_ok() && self.f3_ok()
    }
}

fn is_fundamental(level: &Level) -> Result<bool> {
    let q = level.lattice.moduli();
    match &level.domain {
        Domain::Box(b) => Ok((0..b.dim()).all(|i| b.side(i) == q[i])),
        Domain::Explicit(s) => {
            if BigUint::from(s.len()) != level.lattice.index() {
                return Ok(false);
            }
            let mut seen = HashSet::new();
            Ok(s.iter().all(|g| {
                let r: Vec<i64> = g.iter().zip(q).map(|(x, m)| x.rem_euclid(*m)).collect();
                seen.insert(r)
            }))
        }
    }
}

fn nested(a: &Domain, b: &Domain) -> Result<bool> {
    match (a, b) {
        (Domain::Box(x), Domain::Box(y)) => Ok(y.contains_box(x)),
        _ => {
            let big = b.to_set()?;
            Ok(a.points()?.iter().all(|g| big.contains(g)))
        }
    }
}

fn check_f3(chain: &LatticeChain, j: usize, i: usize) -> Result<Option<F3Failure>> {
    let lower = &chain.levels[i];
    let upper = &chain.levels[j].domain;
    let q = lower.lattice.moduli();
    let fail = |v: GroupElement, reason: String| Some(F3Failure { j, i, v, reason });
    match (&lower.domain, upper) {
        (Domain::Box(f), Domain::Box(big)) => {
            for c in 0..chain.d {
                let mut v = vec![0; chain.d];
                let Some((a, b)) = multiples_in(big.lo[c], big.hi[c], q[c]) else {
                    return Ok(fail(v, format!("no translates in coordinate {c}")));
                };
                if f.side(c) != q[c] {
                    return Ok(fail(
                        v,
                        format!("F_{i} is not a fundamental domain in coordinate {c}"),
                    ));
                }
                if a * q[c] + f.lo[c] != big.lo[c] {
                    v[c] = a * q[c];
                    return Ok(fail(
                        v,
                        format!("translates misaligned at the lower end of coordinate {c}"),
                    ));
                }
                if b * q[c] + f.hi[c] != big.hi[c] {
                    v[c] = b * q[c];
                    return Ok(fail(
                        v,
                        format!("translates misaligned at the upper end of coordinate {c}"),
                    ));
                }
            }
            Ok(None)
        }
        _ => {
            let small = lower.domain.points()?;
            let big = upper.to_set()?;
            let mut covered: HashSet<GroupElement> = HashSet::new();
            for gamma in big.iter().filter(|g| lower.lattice.contains(g)) {
                for u in &small {
                    let v = add(gamma, u);
                    if !big.contains(&v) {
                        return Ok(fail(
                            gamma.clone(),
                            format!("translate leaves F_{j} at {v:?}"),
                        ));
                    }
                    if !covered.insert(v.clone()) {
                        return Ok(fail(gamma.clone(), format!("translates overlap at {v:?}")));
                    }
                }
            }
            if let Some(v) = big.iter().find(|v| !covered.contains(*v)) {
                return Ok(fail(v.clone(), "point not covered by any translate".into()));
            }
            Ok(None)
        }
    }
}

/// Checks F1 and F3 at every level, F2 on `window`, and tabulates Følner defects.
pub fn verify_chain(
    chain: &LatticeChain,
    generators: &[GroupElement],
    window: &[GroupElement],
) -> Result<ChainReport> {
    let zero = vec![0i64; chain.d];
    let mut levels = Vec::with_capacity(chain.len());
    for (n, level) in chain.levels.iter().enumerate() {
        let next = chain.levels.get(n + 1);
        levels.push(LevelReport {
            level: n,
            contains_identity: level.domain.contains(&zero),
            fundamental_domain: is_fundamental(level)?,
            index_matches: level.domain.len() == level.lattice.index(),
            nested_in_next: match next {
                Some(nx) => Some(nested(&level.domain, &nx.domain)?),
                None => None,
            },
            strict_refinement: next.map(|nx| {
                level.lattice.contains_lattice(&nx.lattice)
                    && nx.lattice.moduli != level.lattice.moduli
            }),
        });
    }
    let mut f3_failures = Vec::new();
    for j in 1..chain.len() {
        for i in 0..j {
            if let Some(f) = check_f3(chain, j, i)? {
                f3_failures.push(f);
            }
        }
    }
    let f2_uncovered = window
        .iter()
        .filter(|g| !chain.levels.iter().any(|l| l.domain.contains(g)))
        .cloned()
        .collect();
    let folner = chain
        .levels
        .iter()
        .map(|l| {
            generators
                .iter()
                .map(|g| folner_defect(&l.domain, g))
                .collect()
        })
        .collect::<Result<Vec<Vec<_>>>>()?;
    Ok(ChainReport {
        levels,
        f3_failures,
        f2_uncovered,
        folner,
    })
}
