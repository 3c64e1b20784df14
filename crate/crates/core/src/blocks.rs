//! Block families `B_{n,k}`, conditions (C1)–(C4), the Toeplitz point `x₀`
//! and finite-window certificates.

use std::collections::{HashMap, HashSet};

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::arith::{IntMatrix, Mat};
use crate::error::{Error, Result};
use crate::lattice::{coset_representative, BoxDomain, Domain, GroupElement, LatticeChain};
use crate::matrices::{check_fillability, multinomial_capped};

/// Levels with `l_n · |F_n|` above this are evaluated hierarchically only.
pub const SYMBOL_BUDGET: u64 = 1 << 22;

/// Translate count above which unmaterialized incidence comes from the arrangements.
pub const SCAN_LIMIT: u64 = 1 << 24;

/// Levels larger than this are not scanned for (C3).
pub const C3_SCAN_LIMIT: u64 = 1 << 15;

pub type Symbol = u16;

/// Level-`n+1` block: the column of `M̃_n` it realizes and the lexicographic
/// rank of its free-coset arrangement.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BlockSpec {
    pub column: usize,
    pub rank: BigUint,
}

fn strides(b: &BoxDomain) -> Vec<i64> {
    let d = b.dim();
    let mut s = vec![1i64; d];
    for i in (0..d.saturating_sub(1)).rev() {
        s[i] = s[i + 1] * b.side(i + 1);
    }
    s
}

fn box_index(b: &BoxDomain, st: &[i64], v: &[i64]) -> u64 {
    v.iter()
        .zip(&b.lo)
        .zip(st)
        .map(|((x, lo), s)| (x - lo) * s)
        .sum::<i64>() as u64
}

/// Lexicographic iteration over `∏ [lo_i, hi_i]` (empty if any range is empty).
fn lex_points(ranges: &[(i64, i64)]) -> impl Iterator<Item = Vec<i64>> + '_ {
    let empty = ranges.iter().any(|(a, b)| a > b);
    let mut cur: Option<Vec<i64>> = if empty {
        None
    } else {
        Some(ranges.iter().map(|r| r.0).collect())
    };
    std::iter::from_fn(move || {
        let out = cur.clone()?;
        let mut next = out.clone();
        let mut i = ranges.len();
        loop {
            if i == 0 {
                cur = None;
                break;
            }
            i -= 1;
            if next[i] < ranges[i].1 {
                next[i] += 1;
                cur = Some(next);
                break;
            }
            next[i] = ranges[i].0;
        }
        Some(out)
    })
}

fn lex_len(ranges: &[(i64, i64)]) -> u64 {
    ranges
        .iter()
        .map(|(a, b)| if a > b { 0 } else { (b - a + 1) as u64 })
        .product()
}

fn lex_rank(ranges: &[(i64, i64)], j: &[i64]) -> u64 {
    let mut idx = 0u64;
    for (x, (a, b)) in j.iter().zip(ranges) {
        idx = idx * (b - a + 1) as u64 + (x - a) as u64;
    }
    idx
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Center,
    Border,
    Free(u64),
}

/// Geometry of the tiling of `F_{n+1}` by `Γ_n`-translates of `F_n`.
#[derive(Clone, Debug)]
pub struct Step {
    pub q: Vec<i64>,
    pub lower: BoxDomain,
    pub upper: BoxDomain,
    /// Translate multipliers `j` with `γ = j·q`.
    pub grid: Vec<(i64, i64)>,
    /// Multipliers of the translates outside the border.
    pub inner: Vec<(i64, i64)>,
    center_inner: Option<u64>,
    upper_strides: Vec<i64>,
}

impl Step {
    pub fn new(chain: &LatticeChain, n: usize) -> Result<Step> {
        let lower_level = chain.level(n)?;
        let (Domain::Box(lower), Domain::Box(upper)) = (&lower_level.domain, chain.domain(n + 1)?)
        else {
            return Err(Error::Unsupported(
                "block construction requires box domains".into(),
            ));
        };
        let q = lower_level.lattice.moduli().to_vec();
        let mut grid = Vec::new();
        let mut inner = Vec::new();
        for i in 0..q.len() {
            if lower.side(i) != q[i] {
                return Err(Error::InternalConsistency(format!(
                    "F_{n} is not a fundamental box in coordinate {i}"
                )));
            }
            let a = Integer::div_floor(&(upper.lo[i] - lower.lo[i]), &q[i]);
            let b = Integer::div_floor(&(upper.hi[i] - lower.hi[i]), &q[i]);
            if a * q[i] + lower.lo[i] != upper.lo[i] || b * q[i] + lower.hi[i] != upper.hi[i] {
                return Err(Error::InternalConsistency(format!(
                    "translates of F_{n} do not tile F_{} in coordinate {i}",
                    n + 1
                )));
            }
            let reach = q[i] - 1;
            let ia = Integer::div_ceil(&(upper.lo[i] + reach), &q[i]).max(a);
            let ib = Integer::div_floor(&(upper.hi[i] - reach), &q[i]).min(b);
            grid.push((a, b));
            inner.push((ia, ib));
        }
        let zero = vec![0i64; q.len()];
        let in_inner = inner.iter().all(|&(a, b)| a <= 0 && 0 <= b);
        let center_inner = in_inner.then(|| lex_rank(&inner, &zero));
        Ok(Step {
            upper_strides: strides(upper),
            q,
            lower: lower.clone(),
            upper: upper.clone(),
            grid,
            inner,
            center_inner,
        })
    }

    pub fn grid_len(&self) -> u64 {
        lex_len(&self.grid)
    }

    pub fn free_len(&self) -> u64 {
        lex_len(&self.inner) - u64::from(self.center_inner.is_some())
    }

    pub fn border_len(&self) -> u64 {
        self.grid_len() - lex_len(&self.inner)
    }

    pub fn translate(&self, j: &[i64]) -> GroupElement {
        j.iter().zip(&self.q).map(|(a, q)| a * q).collect()
    }

    pub fn translates(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        lex_points(&self.grid)
    }

    /// `v = j·q + u` with `u ∈ F_n`.
    pub fn split(&self, v: &[i64]) -> (Vec<i64>, Vec<i64>) {
        let mut j = Vec::with_capacity(v.len());
        let mut u = Vec::with_capacity(v.len());
        for i in 0..v.len() {
            let t = Integer::div_floor(&(v[i] - self.lower.lo[i]), &self.q[i]);
            j.push(t);
            u.push(v[i] - t * self.q[i]);
        }
        (j, u)
    }

    pub fn slot(&self, j: &[i64]) -> Slot {
        if j.iter().all(|&x| x == 0) {
            return Slot::Center;
        }
        if j.iter()
            .zip(&self.inner)
            .any(|(&x, &(a, b))| x < a || x > b)
        {
            return Slot::Border;
        }
        let r = lex_rank(&self.inner, j);
        Slot::Free(match self.center_inner {
            Some(c) if r > c => r - 1,
            _ => r,
        })
    }

    fn upper_index(&self, v: &[i64]) -> u64 {
        box_index(&self.upper, &self.upper_strides, v)
    }

    /// Positions in `F_{n+1}` of `F_n`, in the lexicographic order of `F_n`.
    fn lower_positions(&self) -> Vec<u64> {
        self.lower.iter().map(|u| self.upper_index(&u)).collect()
    }

    fn translate_shift(&self, j: &[i64]) -> i64 {
        self.translate(j)
            .iter()
            .zip(&self.upper_strides)
            .map(|(g, s)| g * s)
            .sum()
    }
}

/// The rank-th lexicographic arrangement of a multiset; only a suffix differs
/// from the sorted order.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Arrangement {
    prefix: Vec<u64>,
    prefix_len: u64,
    /// Run-length suffix: `(symbol, end offset)` with ends increasing.
    runs: Vec<(Symbol, u64)>,
}

impl Arrangement {
    fn new(counts: &[u64], rank: &BigUint) -> Result<Arrangement> {
        let big = |c: &[u64]| c.iter().map(|&x| BigInt::from(x)).collect::<Vec<_>>();
        let cap = rank + 1u32;
        if multinomial_capped(&big(counts), &cap)? <= *rank {
            return Err(Error::Multiplicity {
                level: 0,
                column: 0,
            });
        }
        let mut take = vec![0u64; counts.len()];
        let mut distinct = 0;
        if !rank.is_zero() {
            'values: for v in (0..counts.len()).rev() {
                if counts[v] == 0 {
                    continue;
                }
                distinct += 1;
                if distinct == 1 {
                    take[v] = counts[v];
                    continue;
                }
                for x in 1..=counts[v] {
                    take[v] = x;
                    if multinomial_capped(&big(&take), &cap)? > *rank {
                        break 'values;
                    }
                }
            }
        }
        let prefix: Vec<u64> = counts.iter().zip(&take).map(|(c, t)| c - t).collect();
        let mut left = take;
        let mut r = rank.clone();
        let mut runs: Vec<(Symbol, u64)> = Vec::new();
        let mut end = 0u64;
        let mut push = |runs: &mut Vec<(Symbol, u64)>, v: Symbol, c: u64| {
            end += c;
            match runs.last_mut() {
                Some(last) if last.0 == v => last.1 = end,
                _ => runs.push((v, end)),
            }
        };
        while !r.is_zero() {
            let mut placed = false;
            for v in 0..left.len() {
                if left[v] == 0 {
                    continue;
                }
                left[v] -= 1;
                let with = multinomial_capped(&big(&left), &(&r + 1u32))?;
                if r < with {
                    push(&mut runs, v as Symbol, 1);
                    placed = true;
                    break;
                }
                r -= with;
                left[v] += 1;
            }
            if !placed {
                return Err(Error::Multiplicity {
                    level: 0,
                    column: 0,
                });
            }
        }
        for (v, &c) in left.iter().enumerate() {
            if c > 0 {
                push(&mut runs, v as Symbol, c);
            }
        }
        Ok(Arrangement {
            prefix_len: prefix.iter().sum(),
            prefix,
            runs,
        })
    }

    /// Occurrences of each symbol over all free slots.
    fn tally(&self, l: usize) -> Vec<u64> {
        let mut c = self.prefix.clone();
        c.resize(l, 0);
        let mut start = 0;
        for &(v, e) in &self.runs {
            c[v as usize] += e - start;
            start = e;
        }
        c
    }

    fn value(&self, t: u64) -> Symbol {
        if t >= self.prefix_len {
            let s = t - self.prefix_len;
            let i = self.runs.partition_point(|&(_, e)| e <= s);
            return self.runs[i].0;
        }
        let mut acc = 0;
        for (v, c) in self.prefix.iter().enumerate() {
            acc += c;
            if t < acc {
                return v as Symbol;
            }
        }
        unreachable!("free index beyond arrangement")
    }
}

/// Per-level block families realizing an augmented managed sequence on a chain.
#[derive(Clone, Debug)]
pub struct BlockFamily {
    pub chain: LatticeChain,
    /// `M̃_n`, of shape `l_n × l_{n+1}`.
    pub aug: Vec<IntMatrix>,
    /// `levels[0]` are the constant blocks; `levels[n+1][k]` realizes column `k` of `M̃_n`.
    pub levels: Vec<Vec<BlockSpec>>,
    pub seed: u64,
    /// Materialized symbol arrays in the lexicographic order of `F_n`.
    pub symbols: Vec<Option<Vec<Vec<Symbol>>>>,
    steps: Vec<Step>,
    arrangements: Vec<Vec<Arrangement>>,
}

fn small_counts(column: &[BigInt]) -> Result<Vec<u64>> {
    column
        .iter()
        .map(|x| {
            x.to_u64()
                .ok_or_else(|| Error::Overflow(format!("count {x} does not fit 64 bits")))
        })
        .collect()
}

/// Free-coset counts for column `k`: index `i` is the count of `B_{n,i}`.
fn free_counts(
    aug: &IntMatrix,
    k: usize,
    border: u64,
    step: &Step,
    level: usize,
) -> Result<Vec<u64>> {
    let fill = |reason: &str| Error::Fillability {
        level,
        column: k,
        reason: reason.into(),
    };
    let mut c = small_counts(&aug.column(k))?;
    if c[0] != 1 {
        return Err(fill("the first entry must be 1 for the central coset"));
    }
    if c.iter().sum::<u64>() != step.grid_len() {
        return Err(fill("column sum differs from the number of cosets"));
    }
    let l = c.len();
    if c[l - 1] < border {
        return Err(fill("insufficient last-block count for the border"));
    }
    c[0] = 0;
    c[l - 1] -= border;
    Ok(c)
}

fn assign_ranks(
    aug: &IntMatrix,
    counts: &[Vec<u64>],
    seed: u64,
    level: usize,
) -> Result<Vec<BigUint>> {
    let mut ranks = vec![BigUint::zero(); aug.cols()];
    let mut seen: HashMap<Vec<BigInt>, Vec<usize>> = HashMap::new();
    let mut order = Vec::new();
    for k in 0..aug.cols() {
        let col = aug.column(k);
        if !seen.contains_key(&col) {
            order.push(col.clone());
        }
        seen.entry(col).or_default().push(k);
    }
    for col in order {
        let members = &seen[&col];
        let g = members.len() as u64;
        let parts: Vec<BigInt> = counts[members[0]]
            .iter()
            .map(|&x| BigInt::from(x))
            .collect();
        let window = multinomial_capped(&parts, &BigUint::from(4 * g))?;
        if window < BigUint::from(g) {
            return Err(Error::Multiplicity {
                level,
                column: members[0],
            });
        }
        let chosen: Vec<u64> = if seed == 0 {
            (0..g).collect()
        } else {
            let w = window.to_u64().unwrap_or(4 * g);
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed ^ ((level as u64) << 32) ^ members[0] as u64);
            sample(&mut rng, w as usize, g as usize)
                .into_iter()
                .map(|x| x as u64)
                .collect()
        };
        for (&k, r) in members.iter().zip(chosen) {
            ranks[k] = BigUint::from(r);
        }
    }
    Ok(ranks)
}

/// Builds `B_{n,k}` level by level: the centre coset carries `B_{n,1}`, border
/// cosets carry `B_{n,l_n}` and free cosets receive the multiset arrangement
/// of the remaining counts.
pub fn build_blocks(aug: &[IntMatrix], chain: &LatticeChain, seed: u64) -> Result<BlockFamily> {
    check_shapes(aug, chain)?;
    let mut levels = vec![constant_level(aug)];
    for (n, m) in aug.iter().enumerate() {
        let step = Step::new(chain, n)?;
        let border = step.border_len();
        let report = check_fillability(m, &BigInt::from(border));
        if let Some(c) = report.columns.iter().find(|c| c.failure.is_some()) {
            let reason = c.failure.clone().unwrap_or_default();
            if reason.starts_with("multiplicity") {
                return Err(Error::Multiplicity {
                    level: n + 1,
                    column: c.column,
                });
            }
            return Err(Error::Fillability {
                level: n + 1,
                column: c.column,
                reason,
            });
        }
        let counts = (0..m.cols())
            .map(|k| free_counts(m, k, border, &step, n + 1))
            .collect::<Result<Vec<_>>>()?;
        let ranks = assign_ranks(m, &counts, seed, n + 1)?;
        levels.push(
            ranks
                .into_iter()
                .enumerate()
                .map(|(column, rank)| BlockSpec { column, rank })
                .collect(),
        );
    }
    assemble(chain.clone(), aug.to_vec(), levels, seed)
}

fn constant_level(aug: &[IntMatrix]) -> Vec<BlockSpec> {
    (0..aug[0].rows())
        .map(|column| BlockSpec {
            column,
            rank: BigUint::zero(),
        })
        .collect()
}

fn check_shapes(aug: &[IntMatrix], chain: &LatticeChain) -> Result<()> {
    if aug.is_empty() {
        return Err(Error::InvalidInput("no augmented matrices".into()));
    }
    if chain.len() < aug.len() + 1 {
        return Err(Error::InvalidInput(format!(
            "chain has {} levels for {} matrices",
            chain.len(),
            aug.len()
        )));
    }
    for n in 1..aug.len() {
        if aug[n - 1].cols() != aug[n].rows() {
            return Err(Error::DimensionMismatch(format!(
                "M̃_{} and M̃_{n} do not chain",
                n - 1
            )));
        }
    }
    if aug[0].rows() > Symbol::MAX as usize {
        return Err(Error::Unsupported("alphabet too large".into()));
    }
    Ok(())
}

/// Assembles a family from stored block specifications, decoding every
/// arrangement and materializing the levels within budget.
pub fn assemble(
    chain: LatticeChain,
    aug: Vec<IntMatrix>,
    levels: Vec<Vec<BlockSpec>>,
    seed: u64,
) -> Result<BlockFamily> {
    check_shapes(&aug, &chain)?;
    if levels.len() != aug.len() + 1 {
        return Err(Error::InvalidInput(
            "block levels do not match the matrices".into(),
        ));
    }
    if levels[0] != constant_level(&aug) {
        return Err(Error::ConstructionDefect(
            "level 0 must list the constant blocks".into(),
        ));
    }
    let mut steps = Vec::with_capacity(aug.len());
    let mut arrangements = Vec::with_capacity(aug.len());
    for (n, m) in aug.iter().enumerate() {
        let step = Step::new(&chain, n)?;
        if levels[n + 1].len() != m.cols() {
            return Err(Error::ConstructionDefect(format!(
                "level {} lists {} blocks, M̃_{n} has {} columns",
                n + 1,
                levels[n + 1].len(),
                m.cols()
            )));
        }
        let mut arr = Vec::with_capacity(m.cols());
        for (k, spec) in levels[n + 1].iter().enumerate() {
            if spec.column >= m.cols() {
                return Err(Error::ConstructionDefect(format!(
                    "block {k} at level {} names a missing column",
                    n + 1
                )));
            }
            let counts = free_counts(m, spec.column, step.border_len(), &step, n + 1)?;
            arr.push(
                Arrangement::new(&counts, &spec.rank).map_err(|_| Error::Multiplicity {
                    level: n + 1,
                    column: spec.column,
                })?,
            );
        }
        steps.push(step);
        arrangements.push(arr);
    }
    let mut family = BlockFamily {
        symbols: vec![None; levels.len()],
        chain,
        aug,
        levels,
        seed,
        steps,
        arrangements,
    };
    family.materialize();
    Ok(family)
}

impl BlockFamily {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// `l_n`.
    pub fn count(&self, n: usize) -> usize {
        self.levels[n].len()
    }

    pub fn alphabet(&self) -> usize {
        self.count(0)
    }

    pub fn step(&self, n: usize) -> &Step {
        &self.steps[n]
    }

    pub fn domain_box(&self, n: usize) -> &BoxDomain {
        if n == 0 {
            &self.steps[0].lower
        } else {
            &self.steps[n - 1].upper
        }
    }

    pub fn is_materialized(&self, n: usize) -> bool {
        self.symbols[n].is_some()
    }

    fn materialize(&mut self) {
        for n in 0..self.levels.len() {
            let size = self.domain_box(n).len_u64().unwrap_or(u64::MAX);
            let fits = size.saturating_mul(self.count(n) as u64) <= SYMBOL_BUDGET;
            if !fits || (n > 0 && self.symbols[n - 1].is_none()) {
                break;
            }
            let arrays = if n == 0 {
                (0..self.count(0))
                    .map(|k| vec![(k + 1) as Symbol; size as usize])
                    .collect()
            } else {
                let step = &self.steps[n - 1];
                let lower = self.symbols[n - 1].as_ref().unwrap();
                let base = step.lower_positions();
                (0..self.count(n))
                    .into_par_iter()
                    .map(|k| {
                        let mut out = vec![0 as Symbol; size as usize];
                        for j in step.translates() {
                            let child = self.child(n, k, &j) as usize;
                            let shift = step.translate_shift(&j);
                            for (src, &pos) in lower[child].iter().zip(&base) {
                                out[(pos as i64 + shift) as usize] = *src;
                            }
                        }
                        out
                    })
                    .collect()
            };
            self.symbols[n] = Some(arrays);
        }
    }

    /// Index of the level-`n−1` block placed at translate multiplier `j` in `B_{n,k}`.
    pub fn child(&self, n: usize, k: usize, j: &[i64]) -> Symbol {
        let step = &self.steps[n - 1];
        match step.slot(j) {
            Slot::Center => 0,
            Slot::Border => (self.count(n - 1) - 1) as Symbol,
            Slot::Free(t) => self.arrangements[n - 1][k].value(t),
        }
    }

    /// `B_{n,k}(v)` for `v ∈ F_n` (1-based symbols).
    pub fn eval(&self, n: usize, k: usize, v: &[i64]) -> Symbol {
        if let Some(arrays) = &self.symbols[n] {
            let b = self.domain_box(n);
            return arrays[k][box_index(b, &strides(b), v) as usize];
        }
        if n == 0 {
            return (k + 1) as Symbol;
        }
        let (j, u) = self.steps[n - 1].split(v);
        let child = self.child(n, k, &j) as usize;
        self.eval(n - 1, child, &u)
    }

    /// Smallest stored level whose domain contains `g`.
    pub fn level_containing(&self, g: &[i64]) -> Option<usize> {
        (0..self.depth()).find(|&n| self.domain_box(n).contains(g))
    }

    /// `x₀(g) = B_{n,1}(g)` for the smallest `n` with `g ∈ F_n`.
    pub fn x0(&self, g: &[i64]) -> Result<Symbol> {
        if g.len() != self.chain.dim() {
            return Err(Error::DimensionMismatch(
                "point dimension differs from the group".into(),
            ));
        }
        let n = self
            .level_containing(g)
            .ok_or_else(|| Error::NeedsMoreLevels {
                condition: "window inside the deepest level".into(),
                level: self.depth(),
            })?;
        Ok(self.eval(n, 0, g))
    }

    /// `x₀` on a box window in lexicographic order.
    pub fn window(&self, window: &BoxDomain) -> Result<Vec<Symbol>> {
        let top = self.domain_box(self.depth() - 1);
        if !top.contains_box(window) {
            return Err(Error::NeedsMoreLevels {
                condition: "window inside the deepest level".into(),
                level: self.depth(),
            });
        }
        window.iter().map(|g| self.x0(&g)).collect()
    }

    /// Whether `x₀` evaluated through every stored level containing each point agrees.
    pub fn x0_consistent(&self, window: &BoxDomain) -> Result<bool> {
        for g in window.iter() {
            let first = self.x0(&g)?;
            let n = self.level_containing(&g).unwrap();
            if (n..self.depth()).any(|m| self.eval(m, 0, &g) != first) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Restriction of a materialized level-`n+1` block to `γ + F_n`.
    fn restriction(&self, n: usize, k: usize, j: &[i64], base: &[u64]) -> Vec<Symbol> {
        let arr = &self.symbols[n + 1].as_ref().unwrap()[k];
        let shift = self.steps[n].translate_shift(j);
        base.iter()
            .map(|&p| arr[(p as i64 + shift) as usize])
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CheckStatus {
    /// Checked on materialized symbols.
    Pass,
    /// Holds on the stored arrangement; symbols not materialized.
    Certified,
    Skipped(String),
    Fail(String),
}

impl CheckStatus {
    pub fn ok(&self) -> bool {
        !matches!(self, CheckStatus::Fail(_))
    }

    pub fn passed(&self) -> bool {
        matches!(self, CheckStatus::Pass)
    }

    pub fn label(&self) -> String {
        match self {
            CheckStatus::Pass => "pass".into(),
            CheckStatus::Certified => "certified".into(),
            CheckStatus::Skipped(r) => format!("skipped: {r}"),
            CheckStatus::Fail(r) => format!("FAIL: {r}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelConditions {
    pub level: usize,
    pub c1: CheckStatus,
    pub c2: CheckStatus,
    pub c3: CheckStatus,
    pub c4: CheckStatus,
    pub distinct: CheckStatus,
    pub incidence: CheckStatus,
}

impl LevelConditions {
    pub fn all(&self) -> [(&'static str, &CheckStatus); 6] {
        [
            ("C1", &self.c1),
            ("C2", &self.c2),
            ("C3", &self.c3),
            ("C4", &self.c4),
            ("distinct", &self.distinct),
            ("incidence", &self.incidence),
        ]
    }

    pub fn ok(&self) -> bool {
        self.all().iter().all(|(_, s)| s.ok())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConditionsReport {
    pub levels: Vec<LevelConditions>,
}

impl ConditionsReport {
    pub fn ok(&self) -> bool {
        self.levels.iter().all(|l| l.ok())
    }

    pub fn first_failure(&self) -> Option<String> {
        self.levels.iter().find_map(|l| {
            l.all()
                .iter()
                .find(|(_, s)| !s.ok())
                .map(|(name, s)| format!("level {}: {name} {}", l.level, s.label()))
        })
    }
}

/// Outcome of scanning `B_{n+1,k}` coset by coset against level `n`.
struct StepScan {
    counts: IntMatrix,
    c1: CheckStatus,
    c2: CheckStatus,
    c4: CheckStatus,
}

fn scan_step(family: &BlockFamily, n: usize) -> StepScan {
    let step = &family.steps[n];
    let l_low = family.count(n);
    let l_up = family.count(n + 1);
    let mut counts = Mat::from_fn(l_low, l_up, |_, _| BigInt::zero());
    let materialized = family.is_materialized(n) && family.is_materialized(n + 1);
    if !materialized {
        let direct = step.grid_len().saturating_mul(l_up as u64) <= SCAN_LIMIT;
        for k in 0..l_up {
            if direct {
                for j in step.translates() {
                    let c = family.child(n + 1, k, &j) as usize;
                    let x = counts.get(c, k) + 1;
                    counts.set(c, k, x);
                }
                continue;
            }
            let mut c = family.arrangements[n][k].tally(l_low);
            c[0] += 1;
            c[l_low - 1] += step.border_len();
            for (i, x) in c.into_iter().enumerate() {
                counts.set(i, k, BigInt::from(x));
            }
        }
        return StepScan {
            counts,
            c1: CheckStatus::Certified,
            c2: CheckStatus::Certified,
            c4: CheckStatus::Certified,
        };
    }
    let lower = family.symbols[n].as_ref().unwrap();
    let index: HashMap<&[Symbol], usize> = lower
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_slice(), i))
        .collect();
    let base = step.lower_positions();
    let mut c1 = CheckStatus::Pass;
    let mut c2 = CheckStatus::Pass;
    let mut c4 = CheckStatus::Pass;
    for k in 0..l_up {
        for j in step.translates() {
            let r = family.restriction(n, k, &j, &base);
            let found = index.get(r.as_slice()).copied();
            let gamma = step.translate(&j);
            match found {
                None => {
                    if c1.ok() {
                        c1 = CheckStatus::Fail(format!(
                            "block {} at coset {gamma:?} matches no level-{n} block",
                            k + 1
                        ));
                    }
                    continue;
                }
                Some(i) => {
                    let x = counts.get(i, k) + 1;
                    counts.set(i, k, x);
                    let slot = step.slot(&j);
                    if slot == Slot::Center && i != 0 && c2.ok() {
                        c2 = CheckStatus::Fail(format!(
                            "block {} restricted to F_{n} is B_{{{n},{}}}",
                            k + 1,
                            i + 1
                        ));
                    }
                    if slot == Slot::Border && i != l_low - 1 && c4.ok() {
                        c4 = CheckStatus::Fail(format!(
                            "block {} carries B_{{{n},{}}} at border coset {gamma:?}",
                            k + 1,
                            i + 1
                        ));
                    }
                }
            }
        }
    }
    StepScan { counts, c1, c2, c4 }
}

/// Counts, for level `n → n+1`, how often `B_{n,i}` sits on a `Γ_n`-coset of `B_{n+1,k}`.
pub fn recover_incidence(family: &BlockFamily, n: usize) -> Result<IntMatrix> {
    if n + 1 >= family.depth() {
        return Err(Error::LevelOutOfRange {
            level: n + 1,
            len: family.depth(),
        });
    }
    let scan = scan_step(family, n);
    if let CheckStatus::Fail(r) = scan.c1 {
        return Err(Error::C1Violation(r));
    }
    Ok(scan.counts)
}

/// Index offsets of the overlap `F ∩ (F − g)` as a lazy lexicographic scan.
fn overlap_ranges(b: &BoxDomain, g: &[i64]) -> Vec<(i64, i64)> {
    (0..b.dim())
        .map(|i| (b.lo[i].max(b.lo[i] - g[i]), b.hi[i].min(b.hi[i] - g[i])))
        .collect()
}

/// (C3): for `g ∈ F_n \ {0}` and all `k, k′`, some `v ∈ F_n ∩ (F_n − g)` has `B_{n,k}(g+v) ≠ B_{n,k′}(v)`.
fn check_c3(family: &BlockFamily, n: usize) -> CheckStatus {
    let Some(arrays) = &family.symbols[n] else {
        return CheckStatus::Skipped("level not materialized".into());
    };
    let b = family.domain_box(n);
    if n == 0 && b.len_u64() != Some(1) {
        let mut firsts: Vec<Symbol> = arrays.iter().map(|a| a[0]).collect();
        firsts.sort_unstable();
        firsts.dedup();
        if firsts.len() != arrays.len() || arrays.iter().any(|a| a.iter().any(|&x| x != a[0])) {
            return CheckStatus::Fail("level-0 blocks are not distinct constants".into());
        }
        return CheckStatus::Certified;
    }
    if b.len_u64().is_none_or(|s| s > C3_SCAN_LIMIT) {
        return CheckStatus::Skipped(format!("|F_{n}| exceeds the scan limit {C3_SCAN_LIMIT}"));
    }
    let st = strides(b);
    let l = arrays.len();
    let points: Vec<GroupElement> = b.iter().filter(|g| g.iter().any(|&x| x != 0)).collect();
    let failure = points.par_iter().find_map_first(|g| {
        let ranges = overlap_ranges(b, g);
        let off: i64 = g.iter().zip(&st).map(|(x, s)| x * s).sum();
        let neg: Vec<i64> = g.iter().map(|x| -x).collect();
        let probes: Vec<usize> = [vec![0i64; g.len()], neg]
            .iter()
            .filter(|v| v.iter().zip(&ranges).all(|(x, (a, c))| a <= x && x <= c))
            .map(|v| box_index(b, &st, v) as usize)
            .collect();
        for k in 0..l {
            for kp in 0..l {
                let (a, c) = (&arrays[k], &arrays[kp]);
                let differs = |i: usize| a[(i as i64 + off) as usize] != c[i];
                if probes.iter().any(|&i| differs(i)) {
                    continue;
                }
                if !lex_points(&ranges).any(|v| differs(box_index(b, &st, &v) as usize)) {
                    return Some(format!(
                        "g = {g:?}, B_{{{n},{}}} over B_{{{n},{}}}",
                        k + 1,
                        kp + 1
                    ));
                }
            }
        }
        None
    });
    match failure {
        Some(w) => CheckStatus::Fail(w),
        None => CheckStatus::Pass,
    }
}

fn check_distinct(family: &BlockFamily, n: usize) -> CheckStatus {
    if let Some(arrays) = &family.symbols[n] {
        let mut seen = HashSet::new();
        for (k, a) in arrays.iter().enumerate() {
            if !seen.insert(a.as_slice()) {
                return CheckStatus::Fail(format!("block {} repeats an earlier block", k + 1));
            }
        }
        return CheckStatus::Pass;
    }
    let mut seen = HashSet::new();
    for (k, s) in family.levels[n].iter().enumerate() {
        if !seen.insert(s) {
            return CheckStatus::Fail(format!(
                "block {} repeats an earlier column and rank",
                k + 1
            ));
        }
    }
    CheckStatus::Certified
}

/// (C1)–(C4), distinctness and incidence recovery at every level.
pub fn verify_conditions(family: &BlockFamily) -> ConditionsReport {
    let levels = (0..family.depth())
        .map(|n| {
            let (c1, c2, c4, incidence) = if n == 0 {
                (
                    CheckStatus::Pass,
                    CheckStatus::Pass,
                    CheckStatus::Pass,
                    CheckStatus::Pass,
                )
            } else {
                let scan = scan_step(family, n - 1);
                let incidence = if !scan.c1.ok() {
                    CheckStatus::Fail("unmatched coset restriction".into())
                } else if scan.counts != family.aug[n - 1] {
                    CheckStatus::Fail(format!("recovered incidence differs from M̃_{}", n - 1))
                } else {
                    CheckStatus::Pass
                };
                (scan.c1, scan.c2, scan.c4, incidence)
            };
            LevelConditions {
                level: n,
                c1,
                c2,
                c3: check_c3(family, n),
                c4,
                distinct: check_distinct(family, n),
                incidence,
            }
        })
        .collect();
    ConditionsReport { levels }
}

/// Occurrences of each `B_{n,k}` among the `Γ_n`-cosets tiling `F_m` inside `B_{m,1}`.
pub fn coset_counts(family: &BlockFamily, n: usize, m: usize) -> Result<Vec<BigInt>> {
    if n > m || m >= family.depth() {
        return Err(Error::InvalidInput(format!("levels {n} ≤ {m} not stored")));
    }
    let (Some(lower), Some(upper)) = (&family.symbols[n], &family.symbols[m]) else {
        return Err(Error::Unsupported(
            "frequency scan needs materialized levels".into(),
        ));
    };
    let small = family.domain_box(n);
    let big = family.domain_box(m);
    let st = strides(big);
    let index: HashMap<&[Symbol], usize> = lower
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_slice(), i))
        .collect();
    let q = family.chain.lattice(n)?.moduli().to_vec();
    let base: Vec<usize> = small
        .iter()
        .map(|u| box_index(big, &st, &u) as usize)
        .collect();
    let ranges: Vec<(i64, i64)> = (0..q.len())
        .map(|i| {
            let a = Integer::div_floor(&(big.lo[i] - small.lo[i]), &q[i]);
            let b = Integer::div_floor(&(big.hi[i] - small.hi[i]), &q[i]);
            (a, b)
        })
        .collect();
    let mut counts = vec![BigInt::zero(); lower.len()];
    for j in lex_points(&ranges) {
        let shift: i64 = j.iter().zip(&q).zip(&st).map(|((a, q), s)| a * q * s).sum();
        let r: Vec<Symbol> = base
            .iter()
            .map(|&p| upper[0][(p as i64 + shift) as usize])
            .collect();
        let i = *index.get(r.as_slice()).ok_or_else(|| {
            Error::C1Violation(format!("coset {j:?} of F_{m} matches no level-{n} block"))
        })?;
        counts[i] += 1;
    }
    Ok(counts)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeriodReport {
    pub n: usize,
    pub m: usize,
    /// Number of `(g, γ)` pairs compared.
    pub periodic_checked: u64,
    pub periodic_failure: Option<(GroupElement, GroupElement)>,
    pub return_times: Vec<GroupElement>,
    pub expected: Vec<GroupElement>,
}

impl PeriodReport {
    pub fn periodic_ok(&self) -> bool {
        self.periodic_failure.is_none()
    }

    pub fn return_times_ok(&self) -> bool {
        self.return_times == self.expected
    }
}

/// `F_{n−1} ⊆ Per(x₀, Γ_n)` and the return times of level-`n` blocks inside `F_m`.
pub fn scan_periods(family: &BlockFamily, n: usize, m: usize) -> Result<PeriodReport> {
    if n >= m || m >= family.depth() {
        return Err(Error::InvalidInput(format!(
            "need n < m < {}",
            family.depth()
        )));
    }
    let (Some(lower), Some(upper)) = (&family.symbols[n], &family.symbols[m]) else {
        return Err(Error::Unsupported(
            "period scan needs materialized levels".into(),
        ));
    };
    let x = &upper[0];
    let big = family.domain_box(m).clone();
    let st = strides(&big);
    let lattice = family.chain.lattice(n)?.clone();
    let mut checked = 0u64;
    let mut periodic_failure = None;
    if n >= 1 {
        let prev = family.domain_box(n - 1);
        'outer: for g in prev.iter() {
            let at_g = x[box_index(&big, &st, &g) as usize];
            for v in big.iter() {
                let gamma: Vec<i64> = v.iter().zip(&g).map(|(a, b)| a - b).collect();
                if !lattice.contains(&gamma) {
                    continue;
                }
                checked += 1;
                if x[box_index(&big, &st, &v) as usize] != at_g {
                    periodic_failure = Some((g.clone(), gamma));
                    break 'outer;
                }
            }
        }
    }
    let small = family.domain_box(n);
    let index: HashSet<&[Symbol]> = lower.iter().map(|a| a.as_slice()).collect();
    let base: Vec<usize> = small
        .iter()
        .map(|u| box_index(&big, &st, &u) as usize)
        .collect();
    let inner: Vec<(i64, i64)> = (0..big.dim())
        .map(|i| (big.lo[i] - small.lo[i], big.hi[i] - small.hi[i]))
        .collect();
    let candidates: Vec<GroupElement> = lex_points(&inner).collect();
    let return_times: Vec<GroupElement> = candidates
        .par_iter()
        .filter(|gamma| {
            let shift: i64 = gamma.iter().zip(&st).map(|(a, s)| a * s).sum();
            let r: Vec<Symbol> = base
                .iter()
                .map(|&p| x[(p as i64 + shift) as usize])
                .collect();
            index.contains(r.as_slice())
        })
        .cloned()
        .collect();
    let expected = candidates
        .into_iter()
        .filter(|g| lattice.contains(g))
        .collect();
    Ok(PeriodReport {
        n,
        m,
        periodic_checked: checked,
        periodic_failure,
        return_times,
        expected,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OdometerReport {
    /// `u_n`, the representative of `g` in `F_n`.
    pub coords: Vec<GroupElement>,
    /// `u_n ≡ u_{n+1} mod Γ_n`.
    pub compatible: Vec<bool>,
    /// `x₀` on `(g − u_n) + F_n` is some `B_{n,k}`.
    pub block_certificates: Vec<bool>,
}

impl OdometerReport {
    pub fn ok(&self) -> bool {
        self.compatible
            .iter()
            .chain(&self.block_certificates)
            .all(|&b| b)
    }
}

pub fn odometer_embed(family: &BlockFamily, g: &[i64], depth: usize) -> Result<OdometerReport> {
    if depth >= family.depth() {
        return Err(Error::LevelOutOfRange {
            level: depth,
            len: family.depth(),
        });
    }
    let coords = (0..=depth)
        .map(|n| coset_representative(g, &family.chain, n))
        .collect::<Result<Vec<_>>>()?;
    let compatible = (0..depth)
        .map(|n| {
            let diff: Vec<i64> = coords[n]
                .iter()
                .zip(&coords[n + 1])
                .map(|(a, b)| a - b)
                .collect();
            family.chain.lattice(n).map(|l| l.contains(&diff))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut block_certificates = Vec::with_capacity(depth + 1);
    for (n, u) in coords.iter().enumerate() {
        let origin: Vec<i64> = g.iter().zip(u).map(|(a, b)| a - b).collect();
        let small = family.domain_box(n);
        let pattern = small
            .iter()
            .map(|v| {
                let p: Vec<i64> = origin.iter().zip(&v).map(|(a, b)| a + b).collect();
                family.x0(&p)
            })
            .collect::<Result<Vec<_>>>()?;
        let hit = (0..family.count(n)).any(|k| {
            small
                .iter()
                .zip(&pattern)
                .all(|(v, s)| family.eval(n, k, &v) == *s)
        });
        block_certificates.push(hit);
    }
    Ok(OdometerReport {
        coords,
        compatible,
        block_certificates,
    })
}

/// Whether two families carry the same block specifications and symbols.
pub fn same_blocks(a: &BlockFamily, b: &BlockFamily) -> bool {
    a.levels == b.levels && a.symbols == b.symbols
}
