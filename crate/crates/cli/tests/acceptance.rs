//! Acceptance criteria, one PASS/FAIL line each.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toeplitz_forge::arith::{int_matrix, IntMatrix};
use toeplitz_forge::blocks::{
    build_blocks, coset_counts, recover_incidence, scan_periods, verify_conditions, BlockFamily,
};
use toeplitz_forge::choquet::SimplexSpec;
use toeplitz_forge::invariants::{augmented_system, ordered_group_witness};
use toeplitz_forge::io::save_bundle;
use toeplitz_forge::lattice::{BoxDomain, LatticeChain};
use toeplitz_forge::matrices::{
    augment, select_indices, split_s, verify_managed, ManagedSequence, SelectionMode,
};
use toeplitz_forge::pipeline::{compare_stage_vertices, realize_simplex, z_to_zd, SystemBundle};
use toeplitz_forge_cli::execute;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rows(m: &IntMatrix) -> Vec<Vec<BigInt>> {
    m.to_rows()
}

fn naive_mul(a: &[Vec<BigInt>], b: &[Vec<BigInt>]) -> Vec<Vec<BigInt>> {
    let inner = b.len();
    let cols = b.first().map_or(0, |r| r.len());
    a.iter()
        .map(|r| {
            assert_eq!(r.len(), inner);
            (0..cols)
                .map(|j| (0..inner).fold(BigInt::zero(), |acc, t| acc + &r[t] * &b[t][j]))
                .collect()
        })
        .collect()
}

fn naive_product(mats: &[IntMatrix], k: usize) -> Vec<Vec<BigInt>> {
    let mut p: Vec<Vec<BigInt>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    if i == j {
                        BigInt::one()
                    } else {
                        BigInt::zero()
                    }
                })
                .collect()
        })
        .collect();
    for m in mats {
        p = naive_mul(&p, &rows(m));
    }
    p
}

fn example_family(levels: u32) -> BlockFamily {
    let moduli: Vec<Vec<i64>> = (0..levels).map(|n| vec![9i64.pow(n)]).collect();
    let chain = LatticeChain::from_moduli(&moduli).unwrap();
    let m = int_matrix(&[&[3, 4, 2], &[3, 2, 4], &[3, 3, 3]]);
    let aug: Vec<IntMatrix> = (1..levels).map(|_| augment(&m, false).unwrap()).collect();
    build_blocks(&aug, &chain, 0).unwrap()
}

/// Worked example: conditions, periodicity and return times on a 729-wide window.
fn worked_example() -> Outcome {
    let start = Instant::now();
    let f = example_family(4);
    let report = verify_conditions(&f);
    for level in &report.levels {
        for (name, status) in level.all().iter().take(4) {
            ensure(status.passed(), || {
                format!("level {}: {name} {}", level.level, status.label())
            })?;
        }
    }
    let r = scan_periods(&f, 1, 3).unwrap();
    ensure(r.periodic_ok(), || {
        format!("periodicity fails at {:?}", r.periodic_failure)
    })?;
    let window = BoxDomain::new(vec![-364], vec![364]).unwrap();
    let x = f.window(&window).unwrap();
    let at = |g: i64| x[(g + 364) as usize];
    for g in (-364..=364).filter(|g| g % 9 == 0) {
        ensure(at(g) == at(0), || format!("x0({g}) differs from x0(0)"))?;
    }
    let blocks: Vec<Vec<_>> = (0..f.count(1))
        .map(|k| (-4..=4).map(|u| f.eval(1, k, &[u])).collect())
        .collect();
    let returns: Vec<Vec<i64>> = (-360..=360)
        .filter(|&g| blocks.contains(&(-4..=4).map(|u| at(g + u)).collect()))
        .map(|g| vec![g])
        .collect();
    let nine: Vec<Vec<i64>> = (-40..=40).map(|j| vec![9 * j]).collect();
    ensure(returns == nine, || format!("return times {returns:?}"))?;
    ensure(r.return_times == nine, || {
        "library return times differ from the scan".into()
    })?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "C1-C4 pass, return times 9Z on [-360,360], {elapsed:.2?}"
    ))
}

fn stagewise_spec() -> SimplexSpec {
    SimplexSpec::from_json(
        r#"{"kind":"stagewise","matrices":[
            [["1/2","1/3","0"],["1/2","2/3","1"]],
            [["1/2","0","0","1/4"],["1/4","1/2","0","1/4"],["1/4","1/2","1","1/2"]],
            [["1","0","0","0","1/5"],["0","1","0","0","1/5"],["0","0","1","0","1/5"],["0","0","0","1","2/5"]],
            [["1/2","0","0","0","0","1/6"],["1/2","1/2","0","0","0","1/6"],["0","1/2","1","0","0","1/6"],
             ["0","0","0","1","0","1/4"],["0","0","0","0","1","1/4"]]
        ]}"#,
    )
    .unwrap()
}

/// Incidence matrices recovered from the built blocks equal the augmented matrices.
fn incidence_recovery() -> Outcome {
    let mut bundles: Vec<(String, SystemBundle)> = Vec::new();
    for d in 1..=3 {
        bundles.push((
            format!("finite d={d}"),
            realize_simplex(&SimplexSpec::Finite { d }, 1, 4, 0, None).unwrap(),
        ));
    }
    bundles.push((
        "planar".into(),
        realize_simplex(&SimplexSpec::Finite { d: 2 }, 2, 3, 1, None).unwrap(),
    ));
    bundles.push((
        "stagewise".into(),
        realize_simplex(&stagewise_spec(), 1, 3, 2, None).unwrap(),
    ));
    let lifted = z_to_zd(&bundles[1].1.parts.source, 2, 0, false).unwrap();
    bundles.push(("lifted".into(), lifted));
    let mut total = 0;
    for (name, b) in &bundles {
        ensure(b.ok(), || format!("{name}: {:?}", b.failures()))?;
        let f = b.family().unwrap();
        for n in 0..f.depth() - 1 {
            let m = recover_incidence(f, n).unwrap();
            ensure(m == b.augmented[n], || {
                format!("{name}: level {n} incidence differs")
            })?;
            total += 1;
        }
    }
    let example = example_family(5);
    for n in 0..example.depth() - 1 {
        ensure(
            recover_incidence(&example, n).unwrap() == example.aug[n],
            || format!("example level {n}"),
        )?;
        total += 1;
    }
    Ok(format!(
        "{total} incidence matrices across {} bundles",
        bundles.len() + 1
    ))
}

fn column_with_sum(rng: &mut ChaCha8Rng, k: usize, total: u32) -> Vec<i64> {
    let mut col = vec![1i64; k];
    for _ in 0..total as usize - k {
        loop {
            let i = rng.gen_range(0..k);
            if col[i] < 50 {
                col[i] += 1;
                break;
            }
        }
    }
    col
}

fn random_managed(rng: &mut ChaCha8Rng) -> ManagedSequence {
    let len = rng.gen_range(1..=4);
    let ks: Vec<usize> = (0..=len).map(|_| rng.gen_range(2..=5)).collect();
    let mut p = vec![BigInt::from(rng.gen_range(1..=9u32))];
    let mut mats = Vec::new();
    for n in 0..len {
        let (rows, cols) = (ks[n], ks[n + 1]);
        let first: Vec<i64> = (0..rows).map(|_| rng.gen_range(1..=50)).collect();
        let total: i64 = first.iter().sum();
        let mut columns = vec![first];
        for _ in 1..cols {
            columns.push(column_with_sum(rng, rows, total as u32));
        }
        mats.push(IntMatrix::from_fn(rows, cols, |i, j| {
            BigInt::from(columns[j][i])
        }));
        let next = p.last().unwrap() * total;
        p.push(next);
    }
    ManagedSequence::new(p, mats)
}

/// Split identities on random managed sequences.
fn split_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut checked = 0;
    for case in 0..100 {
        let seq = random_managed(&mut rng);
        ensure(verify_managed(&seq).pass(), || {
            format!("case {case}: generator produced an unmanaged sequence")
        })?;
        let (row, aug) = augmented_system(&seq).unwrap();
        let w = ordered_group_witness(&seq, &row, &aug).unwrap();
        ensure(w.ok(), || format!("case {case}: {:?}", w.to_result()))?;
        ensure(
            rows(&w.a_tilde[0]) == naive_mul(&rows(&w.s[0]), &rows(&w.a[0])),
            || format!("case {case}: Ã_0"),
        )?;
        for n in 1..w.a.len() {
            let a = rows(&w.a[n]);
            ensure(a == rows(&seq.mats[n - 1].transpose()), || {
                format!("case {case}: A_{n} is not M_{}ᵀ", n - 1)
            })?;
            let t = rows(&w.t[n - 1]);
            let s_here = rows(&split_s(a[0].len()));
            let s_next = rows(&split_s(a.len()));
            ensure(naive_mul(&t, &s_here) == a, || {
                format!("case {case}: A_{n} ≠ T·S")
            })?;
            ensure(naive_mul(&s_next, &t) == rows(&w.a_tilde[n]), || {
                format!("case {case}: Ã_{n} ≠ S'·T")
            })?;
            checked += 2;
        }
        checked += 1;
    }
    Ok(format!("100 sequences, {checked} identities"))
}

/// Block occurrence counts equal the first column of the augmented products.
fn occurrence_counts() -> Outcome {
    let f = example_family(5);
    let mut pairs = 0;
    for m in 1..=4 {
        for n in 0..m {
            let counts = coset_counts(&f, n, m).unwrap();
            let p = naive_product(&f.aug[n..m], f.count(n));
            let col: Vec<BigInt> = p.iter().map(|r| r[0].clone()).collect();
            ensure(counts == col, || {
                format!("n={n}, m={m}: {counts:?} vs {col:?}")
            })?;
            pairs += 1;
        }
    }
    Ok(format!("{pairs} level pairs n < m ≤ 4"))
}

fn to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap()
}

/// Finite simplices: affine rank, diagonal dominance and vertex convergence.
fn finite_simplices() -> Outcome {
    let mut notes = Vec::new();
    for d in 1..=3 {
        let b = realize_simplex(&SimplexSpec::Finite { d }, 1, 5, 0, Some(4)).unwrap();
        ensure(b.ok(), || format!("d={d}: {:?}", b.failures()))?;
        for s in b.stages.iter().filter(|s| s.stage >= 0) {
            ensure(s.rank == d, || {
                format!("d={d}: rank {} at stage {}", s.rank, s.stage)
            })?;
        }
        let seq = &b.parts.source;
        let quarter3 = BigRational::new(3.into(), 4.into());
        let mut min_delta: Option<BigRational> = None;
        for i in 0..seq.len() {
            let p = naive_product(&seq.mats[..=i], seq.k(0));
            let scale = BigRational::new(seq.p[0].clone(), seq.p[i + 1].clone());
            for l in 0..d {
                let delta = &scale * BigRational::from_integer(p[l][l].clone());
                ensure(delta >= quarter3, || {
                    format!("d={d}: δ({l},{l}) = {delta} at stage {i}")
                })?;
                ensure(b.deltas[i][l] == delta, || {
                    format!("d={d}: reported δ differs at stage {i}")
                })?;
                if min_delta.as_ref().is_none_or(|m| delta < *m) {
                    min_delta = Some(delta);
                }
            }
        }
        if d == 1 {
            let spreads: Vec<f64> = b.stages.iter().map(|s| to_f64(&s.spread)).collect();
            for w in spreads.windows(2) {
                if w[0] >= 1e-3 {
                    ensure(w[1] < w[0], || {
                        format!("d=1 spread does not decrease: {spreads:?}")
                    })?;
                }
            }
            ensure(*spreads.last().unwrap() < 1e-3, || {
                format!("d=1 final spread {spreads:?}")
            })?;
        }
        notes.push(format!("d={d} min δ {}", min_delta.unwrap()));
    }
    Ok(notes.join(", "))
}

/// Stagewise approximations stay within 2^(−i) with large entries.
fn stagewise_certificates() -> Outcome {
    let spec = stagewise_spec();
    let b = realize_simplex(&spec, 1, 4, 0, None).unwrap();
    ensure(b.ok(), || format!("{:?}", b.failures()))?;
    let SimplexSpec::Stagewise { matrices } = &spec else {
        unreachable!()
    };
    let seq = &b.parts.source;
    ensure(seq.len() == 4, || format!("{} stages", seq.len()))?;
    let mut worst = Vec::new();
    for (i, (m, a)) in seq.mats.iter().zip(matrices).enumerate() {
        let ratio = BigRational::from_integer(seq.ratio(i));
        let bound = BigRational::new(1.into(), BigInt::from(2).pow(i as u32));
        let mut stage_worst = BigRational::zero();
        for j in 0..a.cols() {
            let dist = (0..a.rows()).fold(BigRational::zero(), |acc, r| {
                let diff = BigRational::from_integer(m.get(r, j).clone()) / &ratio - a.get(r, j);
                acc + if diff < BigRational::zero() {
                    -diff
                } else {
                    diff
                }
            });
            ensure(dist < bound, || {
                format!("stage {i} column {j}: distance {dist}")
            })?;
            for r in 0..a.rows() {
                ensure(*m.get(r, j) > BigInt::from(i + 3), || {
                    format!("stage {i}: entry {} ≤ {}", m.get(r, j), i + 3)
                })?;
            }
            if dist > stage_worst {
                stage_worst = dist;
            }
        }
        worst.push(format!("{:.1e}", to_f64(&stage_worst)));
    }
    Ok(format!("worst distance per stage [{}]", worst.join(", ")))
}

/// Z → Z² round trip: selection, witness and stage vertices.
fn lift_round_trip() -> Outcome {
    let start = Instant::now();
    let moduli: Vec<Vec<i64>> = (1..=6u32).map(|n| vec![9i64.pow(n)]).collect();
    let chain = LatticeChain::from_moduli(&moduli).unwrap();
    let p: Vec<BigInt> = (1..=6u32).map(|n| BigInt::from(9).pow(n)).collect();
    let nine = ManagedSequence::new(p, vec![int_matrix(&[&[5, 4], &[4, 5]]); 5]);
    let sel = select_indices(&nine, &chain, SelectionMode::OrbitEquivalence).unwrap();
    let defect = |half: i64| -> i64 {
        (-8i64..=8)
            .map(|g| {
                (-half..=half)
                    .filter(|x| !(-half..=half).contains(&(x + g)))
                    .count() as i64
            })
            .sum()
    };
    let first = (1..=5)
        .find(|&b| {
            let size = 9i64.pow(b as u32 + 1);
            defect(size / 2) * 9 * 9 * 9 < size
        })
        .unwrap();
    ensure(sel.cuts[1] == first && first == 4, || {
        format!("first admissible cut {} vs oracle {first}", sel.cuts[1])
    })?;

    let b1 = realize_simplex(&SimplexSpec::Finite { d: 2 }, 1, 3, 0, None).unwrap();
    ensure(b1.ok(), || format!("source: {:?}", b1.failures()))?;
    let b2 = z_to_zd(&b1.parts.source, 2, 0, false).unwrap();
    ensure(b2.ok(), || format!("lifted: {:?}", b2.failures()))?;
    ensure(b2.selection.iter().all(|c| c.pass()), || {
        "selection conditions fail".into()
    })?;
    ensure(b2.witness.as_ref().is_some_and(|w| w.ok()), || {
        "witness fails".into()
    })?;
    let matches = compare_stage_vertices(&b1.parts.source, &b2.parts.source).unwrap();
    ensure(
        !matches.is_empty() && matches.iter().all(|m| m.equal),
        || "stage vertices differ".into(),
    )?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "first admissible |F| = 9^{}, {} stages match, {elapsed:.2?}",
        first + 1,
        matches.len()
    ))
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        fs::copy(e.path(), to.join(e.file_name())).unwrap();
    }
}

fn numeric_leaves(v: &serde_json::Value, path: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
    match v {
        serde_json::Value::Number(_) => out.push(path.clone()),
        serde_json::Value::String(s) if s.parse::<BigInt>().is_ok() => out.push(path.clone()),
        serde_json::Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                path.push(i.to_string());
                numeric_leaves(x, path, out);
                path.pop();
            }
        }
        serde_json::Value::Object(o) => {
            for (k, x) in o {
                path.push(k.clone());
                numeric_leaves(x, path, out);
                path.pop();
            }
        }
        _ => {}
    }
}

fn leaf_mut<'a>(v: &'a mut serde_json::Value, path: &[String]) -> &'a mut serde_json::Value {
    path.iter().fold(v, |v, k| match v {
        serde_json::Value::Array(a) => &mut a[k.parse::<usize>().unwrap()],
        serde_json::Value::Object(o) => o.get_mut(k).unwrap(),
        _ => unreachable!(),
    })
}

/// Random single-entry tampering is caught by verify.
fn tamper_detection() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let clean = tmp.path().join("clean");
    let b = realize_simplex(&SimplexSpec::Finite { d: 2 }, 1, 3, 0, None).unwrap();
    save_bundle(&b, &clean).unwrap();
    let verify = |dir: &Path| {
        execute([
            "toeplitz-forge",
            "verify",
            "--bundle",
            dir.to_str().unwrap(),
        ])
    };
    let base = verify(&clean);
    ensure(base.code == 0, || {
        format!("clean bundle: {:?}", base.message)
    })?;
    let targets = [
        ("matrices.json", &["p", "matrices"][..]),
        ("blocks.json", &["levels"][..]),
        ("chain.json", &["moduli"][..]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut named = Vec::new();
    for trial in 0..20 {
        let (file, roots) = targets[rng.gen_range(0..targets.len())];
        let dir = tmp.path().join(format!("t{trial}"));
        copy_dir(&clean, &dir);
        let text = fs::read_to_string(dir.join(file)).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let mut leaves = Vec::new();
        numeric_leaves(&v, &mut Vec::new(), &mut leaves);
        leaves.retain(|p| roots.contains(&p[0].as_str()) && p.last().is_none_or(|k| k != "l"));
        let path = leaves[rng.gen_range(0..leaves.len())].clone();
        let delta: i64 = rng.gen_range(1..=3);
        let leaf = leaf_mut(&mut v, &path);
        *leaf = match &*leaf {
            serde_json::Value::Number(n) => serde_json::json!(n.as_i64().unwrap() + delta),
            serde_json::Value::String(s) => {
                serde_json::json!((s.parse::<BigInt>().unwrap() + delta).to_string())
            }
            _ => unreachable!(),
        };
        fs::write(dir.join(file), serde_json::to_string_pretty(&v).unwrap()).unwrap();
        let out = verify(&dir);
        let msg = out.message.clone().unwrap_or_default();
        let what = format!("{file}:{} +{delta}", path.join("."));
        ensure(out.code == 1, || {
            format!("{what}: exit {} ({msg})", out.code)
        })?;
        let reason = msg.trim_start_matches("verification failed: ").trim();
        ensure(!reason.is_empty(), || format!("{what}: no invariant named"))?;
        named.push(reason.lines().next().unwrap().to_string());
    }
    named.sort();
    named.dedup();
    Ok(format!("20/20 rejected; reasons: {}", named.join(" | ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("worked example", worked_example),
        ("incidence recovery", incidence_recovery),
        ("split identities", split_identities),
        ("occurrence counts", occurrence_counts),
        ("finite simplices", finite_simplices),
        ("stagewise certificates", stagewise_certificates),
        ("lift round trip", lift_round_trip),
        ("tamper detection", tamper_detection),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panic: {msg}"))
        });
        match result {
            Ok(detail) => println!("criterion {} PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria pass",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
