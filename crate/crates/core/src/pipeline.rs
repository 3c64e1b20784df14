//! End-to-end drivers: simplex realization and the ℤ → ℤ^d lift.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::arith::{format_rational, l1_distance};
use crate::blocks::{
    assemble, build_blocks, verify_conditions, BlockFamily, BlockSpec, CheckStatus, Step,
};
use crate::choquet::{
    finite_simplex_sequence, finite_stages, stage_bound, stochastic_to_managed, SimplexSpec,
};
use crate::error::{Error, Result};
use crate::invariants::{
    affine_rank, augmented_system, distinct_vertices, ordered_group_witness, simplex_vertices,
    vertex_spread, Witness,
};
use crate::lattice::{verify_chain, LatticeChain};
use crate::matrices::{
    check_fillability, check_selection, select_indices, telescope, verify_managed, BlockCheck,
    ManagedSequence, SelectionMode,
};

/// Per-coordinate exponent cap of the default chain (`3^n` must fit in `i64`).
pub const MAX_DEFAULT_LEVELS: usize = 39;

/// Where a bundle's managed sequence came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    Simplex {
        spec: SimplexSpec,
        k: usize,
        depth: usize,
    },
    /// A ℤ system lifted to ℤ^d; `merge` are the cut points applied to `input`.
    Lifted {
        input: ManagedSequence,
        merge: Vec<usize>,
    },
}

/// The stored state of a bundle, from which everything else is recomputed.
#[derive(Clone, Debug)]
pub struct BundleParts {
    pub chain: LatticeChain,
    pub source: ManagedSequence,
    /// Chain levels of the source sequence.
    pub indices: Vec<usize>,
    /// Cut points into the source sequence.
    pub cuts: Vec<usize>,
    pub mode: SelectionMode,
    pub seed: u64,
    pub origin: Origin,
    /// Stored block specifications; rebuilt from the matrices when absent.
    pub blocks: Option<Vec<Vec<BlockSpec>>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageSummary {
    pub stage: i64,
    pub vertices: Vec<Vec<BigRational>>,
    pub rank: usize,
    pub spread: BigRational,
    pub nested: Option<bool>,
}

#[derive(Clone, Debug)]
pub struct SystemBundle {
    pub parts: BundleParts,
    pub managed: ManagedSequence,
    pub block_chain: LatticeChain,
    pub first_row: crate::arith::IntMatrix,
    pub augmented: Vec<crate::arith::IntMatrix>,
    pub blocks: Option<BlockFamily>,
    pub witness: Option<Witness>,
    pub selection: Vec<BlockCheck>,
    pub stages: Vec<StageSummary>,
    /// `δ^{(i)}_{l,l}` per stage for finite specs.
    pub deltas: Vec<Vec<BigRational>>,
    /// `(stage, column, ‖B_i(·,j) − A_i(·,j)‖₁)` for stagewise specs.
    pub approximations: Vec<(usize, usize, BigRational)>,
    pub checks: Vec<Check>,
}

impl SystemBundle {
    pub fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.ok).collect()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn family(&self) -> Result<&BlockFamily> {
        self.blocks
            .as_ref()
            .ok_or_else(|| Error::ConstructionDefect("bundle has no block family".into()))
    }
}

/// `q_0 = (1,…,1)`, `q_n = (3^n,…,3^n)`.
pub fn default_chain(d: usize, levels: usize) -> Result<LatticeChain> {
    if d == 0 {
        return Err(Error::InvalidInput(
            "group dimension must be at least 1".into(),
        ));
    }
    if levels == 0 || levels > MAX_DEFAULT_LEVELS {
        return Err(Error::Overflow(format!(
            "default chain supports 1..={MAX_DEFAULT_LEVELS} levels"
        )));
    }
    let q: Vec<Vec<i64>> = (0..levels as u32).map(|n| vec![3i64.pow(n); d]).collect();
    LatticeChain::from_moduli(&q)
}

fn chain_sizes(chain: &LatticeChain) -> Vec<BigInt> {
    chain.sizes().into_iter().map(BigInt::from).collect()
}

fn mode_label(mode: SelectionMode) -> &'static str {
    match mode {
        SelectionMode::Measures => "measure-realization",
        SelectionMode::OrbitEquivalence => "orbit-equivalence",
    }
}

fn check(checks: &mut Vec<Check>, name: &str, ok: bool, detail: impl Into<String>) {
    checks.push(Check {
        name: name.into(),
        ok,
        detail: detail.into(),
    });
}

fn summarize_report(
    report: &crate::blocks::ConditionsReport,
    pick: impl Fn(&crate::blocks::LevelConditions) -> &CheckStatus,
) -> (bool, String) {
    let mut parts = Vec::new();
    let mut ok = true;
    for l in &report.levels {
        let s = pick(l);
        ok &= s.ok();
        parts.push(format!("level {}: {}", l.level, s.label()));
    }
    (ok, parts.join("; "))
}

/// Recomputes every derived object and every check from stored parts.
pub fn finish(parts: BundleParts) -> Result<SystemBundle> {
    let mut checks = Vec::new();
    let chain = &parts.chain;
    let d = chain.dim();
    let generators: Vec<Vec<i64>> = (0..d)
        .map(|i| (0..d).map(|j| i64::from(i == j)).collect())
        .collect();
    let chain_report = verify_chain(chain, &generators, &generators)?;
    check(
        &mut checks,
        "chain",
        chain_report.all_pass(),
        if chain_report.all_pass() {
            "F1, F2, F3 hold"
        } else {
            "tiling conditions fail"
        },
    );

    let sizes = chain_sizes(chain);
    let index_ok = parts.indices.len() == parts.source.p.len()
        && parts.indices.windows(2).all(|w| w[0] < w[1])
        && parts
            .indices
            .iter()
            .zip(&parts.source.p)
            .all(|(&i, p)| sizes.get(i) == Some(p));
    check(
        &mut checks,
        "index chain",
        index_ok,
        "p_n equals |F_n| at the recorded levels",
    );
    if !index_ok {
        return Err(Error::InvalidInput(
            "index chain does not match the lattice chain".into(),
        ));
    }

    let managed_report = verify_managed(&parts.source);
    check(
        &mut checks,
        "managed",
        managed_report.pass(),
        managed_report
            .issues
            .first()
            .map_or("all columns sum to the index ratio".to_string(), |i| {
                i.to_string()
            }),
    );

    let sub = chain.subchain(&parts.indices)?;
    let cuts_ok = parts.cuts.len() >= 2
        && parts.cuts[0] == 0
        && parts.cuts.windows(2).all(|w| w[0] < w[1])
        && *parts.cuts.last().unwrap() <= parts.source.len();
    if !cuts_ok {
        check(&mut checks, "selection", false, "cut points are malformed");
        return Err(Error::InvalidInput("cut points are malformed".into()));
    }
    let selection = if managed_report.pass()
        && parts
            .source
            .mats
            .iter()
            .all(|m| m.entries().all(|x| x > &BigInt::zero()))
    {
        check_selection(&parts.source, &sub, &parts.cuts, parts.mode)?
    } else {
        Vec::new()
    };
    let sel_ok = !selection.is_empty() && selection.iter().all(|c| c.pass());
    let sel_detail = selection.iter().find(|c| !c.pass()).map_or(
        format!(
            "{} conditions hold at cuts {:?}",
            mode_label(parts.mode),
            parts.cuts
        ),
        |c| format!("{} fails on block {}..{}", c.failed[0], c.from, c.to),
    );
    check(&mut checks, "selection", sel_ok, sel_detail);

    let managed = telescope(&parts.source, &parts.cuts)?;
    let (first_row, augmented) = augmented_system(&managed)?;
    let block_levels: Vec<usize> = parts.cuts.iter().map(|&c| parts.indices[c]).collect();
    let block_chain = chain.subchain(&block_levels)?;

    let mut fill_ok = true;
    let mut fill_detail = "every column within its arrangement bound".to_string();
    for (n, a) in augmented.iter().enumerate() {
        let step = Step::new(&block_chain, n)?;
        let r = check_fillability(a, &BigInt::from(step.border_len()));
        if let Some(c) = r.columns.iter().find(|c| c.failure.is_some()) {
            fill_ok = false;
            fill_detail = format!(
                "level {}, column {}: {}",
                n + 1,
                c.column + 1,
                c.failure.clone().unwrap()
            );
            break;
        }
    }
    check(&mut checks, "fillability", fill_ok, fill_detail);

    let rebuilt = build_blocks(&augmented, &block_chain, parts.seed);
    let family = match (&parts.blocks, &rebuilt) {
        (Some(stored), Ok(r)) => {
            let same = *stored == r.levels;
            match assemble(
                block_chain.clone(),
                augmented.clone(),
                stored.clone(),
                parts.seed,
            ) {
                Ok(f) => {
                    let detail = if same {
                        "stored blocks match the deterministic rebuild"
                    } else {
                        "stored blocks differ from the rebuild"
                    };
                    check(&mut checks, "blocks", same, detail);
                    Some(f)
                }
                Err(e) => {
                    check(
                        &mut checks,
                        "blocks",
                        false,
                        format!("stored blocks are inconsistent: {e}"),
                    );
                    None
                }
            }
        }
        (None, Ok(r)) => {
            check(
                &mut checks,
                "blocks",
                true,
                "stored blocks match the deterministic rebuild",
            );
            Some(r.clone())
        }
        (_, Err(e)) => {
            check(&mut checks, "blocks", false, e.to_string());
            None
        }
    };
    if let Some(f) = &family {
        let report = verify_conditions(f);
        for (name, pick) in [
            (
                "C1",
                (|l: &crate::blocks::LevelConditions| &l.c1)
                    as fn(&crate::blocks::LevelConditions) -> &CheckStatus,
            ),
            ("C2", |l| &l.c2),
            ("C3", |l| &l.c3),
            ("C4", |l| &l.c4),
            ("distinct", |l| &l.distinct),
            ("incidence", |l| &l.incidence),
        ] {
            let (ok, detail) = summarize_report(&report, pick);
            check(&mut checks, name, ok, detail);
        }
    }

    let witness = ordered_group_witness(&managed, &first_row, &augmented)?;
    check(
        &mut checks,
        "witness",
        witness.ok(),
        witness
            .to_result()
            .err()
            .map_or("all factorization identities hold".to_string(), |e| {
                e.to_string()
            }),
    );

    let mut stages = Vec::new();
    if managed_report.pass() {
        for i in -1..parts.source.len() as i64 {
            let a = simplex_vertices(&parts.source, i)?;
            stages.push(StageSummary {
                stage: i,
                vertices: distinct_vertices(&a),
                rank: affine_rank(&a),
                spread: vertex_spread(&a),
                nested: a.nested,
            });
        }
    }
    let nested_ok = !stages.is_empty() && stages.iter().all(|s| s.nested != Some(false));
    check(
        &mut checks,
        "nested images",
        nested_ok,
        "each stage is a convex combination of the previous",
    );

    let mut deltas = Vec::new();
    let mut approximations = Vec::new();
    match &parts.origin {
        Origin::Simplex {
            spec: SimplexSpec::Finite { d: ext },
            ..
        } => {
            let rank_ok = stages.iter().skip(1).all(|s| s.rank == *ext) && stages.len() > 1;
            check(
                &mut checks,
                "affine rank",
                rank_ok,
                format!("vertex rank {ext} at every stage"),
            );
            let st = if managed_report.pass() {
                finite_stages(&parts.source, *ext)?
            } else {
                Vec::new()
            };
            let three_quarters = BigRational::new(3.into(), 4.into());
            let quarter = BigRational::new(1.into(), 4.into());
            let dom_ok = !st.is_empty()
                && st.iter().all(|s| {
                    s.delta.iter().all(|x| *x >= three_quarters) && s.off_diagonal_mass <= quarter
                });
            check(
                &mut checks,
                "diagonal dominance",
                dom_ok,
                "δ_(l,l) ≥ 3/4 and off-diagonal mass ≤ 1/4 at every stage",
            );
            deltas = st.into_iter().map(|s| s.delta).collect();
        }
        Origin::Simplex {
            spec: SimplexSpec::Stagewise { matrices },
            ..
        } => {
            let mut ok = parts.source.len() <= matrices.len();
            for (i, m) in parts.source.mats.iter().enumerate() {
                let Some(a) = matrices.get(i) else { break };
                let ratio = parts.source.ratio(i);
                if m.rows() != a.rows() || m.cols() != a.cols() || ratio.is_zero() {
                    ok = false;
                    continue;
                }
                for j in 0..a.cols() {
                    let col: Vec<BigRational> = m
                        .column(j)
                        .into_iter()
                        .map(|x| BigRational::new(x, ratio.clone()))
                        .collect();
                    let dist = l1_distance(&col, &a.column(j));
                    ok &= dist < stage_bound(i)
                        && m.column(j).iter().all(|x| *x > BigInt::from(i + 3));
                    approximations.push((i, j, dist));
                }
            }
            check(
                &mut checks,
                "approximation",
                ok,
                "‖B_i(·,j) − A_i(·,j)‖₁ < 2^(−i) with entries > i+3",
            );
        }
        Origin::Lifted { input, merge } => {
            let same = telescope(input, merge)
                .map(|t| t == parts.source)
                .unwrap_or(false);
            check(
                &mut checks,
                "input correspondence",
                same,
                "source equals the merged input sequence",
            );
        }
    }

    let checks_family = family;
    Ok(SystemBundle {
        parts,
        managed,
        block_chain,
        first_row,
        augmented,
        blocks: checks_family,
        witness: Some(witness),
        selection,
        stages,
        deltas,
        approximations,
        checks,
    })
}

/// Realizes a simplex as a Toeplitz ℤ^d-subshift on the default chain.
pub fn realize_simplex(
    spec: &SimplexSpec,
    group_dim: usize,
    depth: usize,
    seed: u64,
    k: Option<usize>,
) -> Result<SystemBundle> {
    spec.validate()?;
    if depth == 0 {
        return Err(Error::InvalidInput("depth must be at least 1".into()));
    }
    let chain = default_chain(group_dim, MAX_DEFAULT_LEVELS)?;
    let p = chain_sizes(&chain);
    let (source, indices, k) = match spec {
        SimplexSpec::Finite { d } => {
            let k = k.unwrap_or((*d).max(3));
            let eps = BigRational::new(1.into(), 8.into());
            let f = finite_simplex_sequence(*d, k, &p, depth, &eps)?;
            (f.seq, f.indices, k)
        }
        SimplexSpec::Stagewise { .. } => {
            let s = stochastic_to_managed(spec, &p, depth)?;
            let k = s.seq.k(0);
            (s.seq, s.indices, k)
        }
    };
    let top = *indices.last().unwrap();
    let chain = default_chain(group_dim, top + 1)?;
    let sub = chain.subchain(&indices)?;
    let selection = select_indices(&source, &sub, SelectionMode::Measures)?;
    finish(BundleParts {
        chain,
        source,
        indices,
        cuts: selection.cuts,
        mode: SelectionMode::Measures,
        seed,
        origin: Origin::Simplex {
            spec: spec.clone(),
            k,
            depth,
        },
        blocks: None,
    })
}

fn prime_factors(x: &BigInt) -> Vec<BigInt> {
    let mut n = x.clone();
    let mut out = Vec::new();
    let mut p = BigInt::from(2);
    let limit = BigInt::from(1_000_000);
    while &p * &p <= n && p <= limit {
        while n.is_multiple_of(&p) {
            out.push(p.clone());
            n /= &p;
        }
        p += 1;
    }
    if n > BigInt::one() {
        out.push(n);
    }
    out
}

/// `x = ∏ f_i` with `d` factors, balanced greedily from the prime factorization.
pub fn balanced_factors(x: &BigInt, d: usize) -> Vec<BigInt> {
    let mut primes = prime_factors(x);
    primes.sort_by(|a, b| b.cmp(a));
    let mut f = vec![BigInt::one(); d];
    for p in primes {
        let i = (0..d)
            .min_by(|&a, &b| f[a].cmp(&f[b]).then(a.cmp(&b)))
            .unwrap();
        f[i] *= p;
    }
    f
}

/// Cut points merging consecutive levels until every ratio has at least `d` prime factors.
pub fn factorable_cuts(seq: &ManagedSequence, d: usize) -> Vec<usize> {
    let mut cuts = vec![0];
    let mut last = 0;
    for n in 1..=seq.len() {
        if prime_factors(&(&seq.p[n] / &seq.p[last])).len() >= d {
            cuts.push(n);
            last = n;
        }
    }
    cuts
}

/// Lifts a managed ℤ-Toeplitz presentation to a Toeplitz ℤ^d-subshift.
pub fn z_to_zd(
    input: &ManagedSequence,
    d: usize,
    seed: u64,
    pre_telescope: bool,
) -> Result<SystemBundle> {
    let report = verify_managed(input);
    if !report.pass() {
        return Err(Error::InvalidInput(format!(
            "input is not managed: {}",
            report.issues[0]
        )));
    }
    let merge = if pre_telescope {
        factorable_cuts(input, d)
    } else {
        (0..=input.len()).collect()
    };
    if merge.len() < 2 {
        return Err(Error::Factorization(format!(
            "no ratio of the input has {d} nontrivial factors"
        )));
    }
    let source = telescope(input, &merge)?;
    let mut q = balanced_factors(&source.p[0], d);
    let mut moduli = vec![q.clone()];
    for n in 0..source.len() {
        let r = source.ratio(n);
        let f = balanced_factors(&r, d);
        if f.iter().any(|x| x <= &BigInt::one()) {
            return Err(Error::Factorization(format!(
                "ratio r_{n} = {r} has fewer than {d} nontrivial factors"
            )));
        }
        q = q.iter().zip(&f).map(|(a, b)| a * b).collect();
        moduli.push(q.clone());
    }
    let moduli: Vec<Vec<i64>> = moduli
        .iter()
        .map(|q| {
            q.iter()
                .map(|x| {
                    x.to_i64()
                        .ok_or_else(|| Error::Overflow(format!("modulus {x} exceeds 64 bits")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let chain = LatticeChain::from_moduli(&moduli)?;
    let indices: Vec<usize> = (0..moduli.len()).collect();
    let selection = select_indices(&source, &chain, SelectionMode::OrbitEquivalence)?;
    let managed = telescope(&source, &selection.cuts)?;
    let (_, aug) = augmented_system(&managed)?;
    let block_chain = chain.subchain(&selection.cuts)?;
    for (n, a) in aug.iter().enumerate() {
        let step = Step::new(&block_chain, n)?;
        let r = check_fillability(a, &BigInt::from(step.border_len()));
        if let Some(c) = r.columns.iter().find(|c| c.failure.is_some()) {
            return Err(Error::InvalidInput(format!(
                "multinomial bound violated at level {}, column {}: {}",
                n + 1,
                c.column + 1,
                c.failure.clone().unwrap()
            )));
        }
    }
    finish(BundleParts {
        chain,
        source,
        indices,
        cuts: selection.cuts,
        mode: SelectionMode::OrbitEquivalence,
        seed,
        origin: Origin::Lifted {
            input: input.clone(),
            merge,
        },
        blocks: None,
    })
}

/// Stage vertex sets of two sequences compared at every common index `p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageMatch {
    pub p: BigInt,
    pub equal: bool,
}

pub fn compare_stage_vertices(a: &ManagedSequence, b: &ManagedSequence) -> Result<Vec<StageMatch>> {
    let mut out = Vec::new();
    for i in 0..a.len() {
        let Some(j) = (0..b.len()).find(|&j| b.p[j + 1] == a.p[i + 1]) else {
            continue;
        };
        if a.p[0] != b.p[0] {
            continue;
        }
        let mut va = distinct_vertices(&simplex_vertices(a, i as i64)?);
        let mut vb = distinct_vertices(&simplex_vertices(b, j as i64)?);
        va.sort();
        vb.sort();
        out.push(StageMatch {
            p: a.p[i + 1].clone(),
            equal: va == vb,
        });
    }
    Ok(out)
}

/// Exact rational as text.
pub fn show(r: &BigRational) -> String {
    format_rational(r)
}
