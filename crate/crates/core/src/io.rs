//! Bundle directories and window files.

use std::fs;
use std::path::Path;

use num_bigint::{BigInt, BigUint};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::arith::{format_rational, IntMatrix, Mat};
use crate::blocks::{BlockSpec, Symbol};
use crate::choquet::SimplexSpec;
use crate::error::{Error, Result};
use crate::lattice::{BoxDomain, LatticeChain};
use crate::matrices::{ManagedSequence, SelectionMode};
use crate::pipeline::{finish, BundleParts, Origin, SystemBundle};

pub const CHAIN_FILE: &str = "chain.json";
pub const MATRICES_FILE: &str = "matrices.json";
pub const BLOCKS_FILE: &str = "blocks.json";
pub const REPORTS_FILE: &str = "reports.json";
pub const WITNESS_FILE: &str = "witness.json";

/// An integer written either as a JSON number or a decimal string.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum BigJson {
    Int(i64),
    Text(String),
}

impl BigJson {
    fn to_bigint(&self) -> Result<BigInt> {
        match self {
            BigJson::Int(x) => Ok(BigInt::from(*x)),
            BigJson::Text(s) => s
                .trim()
                .parse()
                .map_err(|_| Error::Serialization(format!("not an integer: {s:?}"))),
        }
    }

    fn to_biguint(&self) -> Result<BigUint> {
        self.to_bigint()?
            .to_biguint()
            .ok_or_else(|| Error::Serialization("negative value where a rank was expected".into()))
    }
}

fn text(x: &BigInt) -> BigJson {
    BigJson::Text(x.to_string())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainJson {
    dim: usize,
    moduli: Vec<Vec<i64>>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceJson {
    p: Vec<BigJson>,
    matrices: Vec<Vec<Vec<BigJson>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatricesJson {
    p: Vec<BigJson>,
    matrices: Vec<Vec<Vec<BigJson>>>,
    indices: Vec<usize>,
    cuts: Vec<usize>,
    mode: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockJson {
    column: usize,
    rank: BigJson,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelJson {
    l: usize,
    blocks: Vec<BlockJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlocksJson {
    seed: u64,
    levels: Vec<LevelJson>,
}

fn matrix_json(m: &IntMatrix) -> Vec<Vec<BigJson>> {
    m.to_rows()
        .iter()
        .map(|r| r.iter().map(text).collect())
        .collect()
}

fn matrix_from(rows: &[Vec<BigJson>]) -> Result<IntMatrix> {
    let rows = rows
        .iter()
        .map(|r| r.iter().map(BigJson::to_bigint).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Mat::from_rows(rows).map_err(|e| Error::Serialization(e.to_string()))
}

fn sequence_json(seq: &ManagedSequence) -> SequenceJson {
    SequenceJson {
        p: seq.p.iter().map(text).collect(),
        matrices: seq.mats.iter().map(matrix_json).collect(),
    }
}

fn sequence_from(p: &[BigJson], matrices: &[Vec<Vec<BigJson>>]) -> Result<ManagedSequence> {
    let p = p
        .iter()
        .map(BigJson::to_bigint)
        .collect::<Result<Vec<_>>>()?;
    let mats = matrices
        .iter()
        .map(|m| matrix_from(m))
        .collect::<Result<Vec<_>>>()?;
    if p.len() != mats.len() + 1 {
        return Err(Error::Serialization(format!(
            "{} periods for {} matrices",
            p.len(),
            mats.len()
        )));
    }
    Ok(ManagedSequence::new(p, mats))
}

/// Parses `{"p": [...], "matrices": [[[...]]]}`.
pub fn parse_sequence(text: &str) -> Result<ManagedSequence> {
    let raw: SequenceJson = serde_json::from_str(text)?;
    sequence_from(&raw.p, &raw.matrices)
}

pub fn sequence_to_json(seq: &ManagedSequence) -> String {
    serde_json::to_string_pretty(&sequence_json(seq)).expect("sequence serializes")
}

fn mode_name(mode: SelectionMode) -> &'static str {
    match mode {
        SelectionMode::Measures => "measures",
        SelectionMode::OrbitEquivalence => "orbit-equivalence",
    }
}

fn mode_from(name: &str) -> Result<SelectionMode> {
    match name {
        "measures" => Ok(SelectionMode::Measures),
        "orbit-equivalence" => Ok(SelectionMode::OrbitEquivalence),
        _ => Err(Error::Serialization(format!(
            "unknown selection mode {name:?}"
        ))),
    }
}

fn origin_json(origin: &Origin) -> Value {
    match origin {
        Origin::Simplex { spec, k, depth } => json!({
            "kind": "simplex",
            "spec": serde_json::from_str::<Value>(&spec.to_json()).expect("spec is JSON"),
            "k": k,
            "depth": depth,
        }),
        Origin::Lifted { input, merge } => json!({
            "kind": "lifted",
            "input": sequence_json(input),
            "merge": merge,
        }),
    }
}

fn origin_from(v: &Value) -> Result<Origin> {
    let field = |name: &str| {
        v.get(name)
            .ok_or_else(|| Error::Serialization(format!("origin lacks {name:?}")))
    };
    let usize_of = |x: &Value| {
        x.as_u64()
            .map(|n| n as usize)
            .ok_or_else(|| Error::Serialization("expected a non-negative integer".into()))
    };
    match field("kind")?.as_str() {
        Some("simplex") => Ok(Origin::Simplex {
            spec: SimplexSpec::from_json(&field("spec")?.to_string())?,
            k: usize_of(field("k")?)?,
            depth: usize_of(field("depth")?)?,
        }),
        Some("lifted") => {
            let raw: SequenceJson = serde_json::from_value(field("input")?.clone())?;
            let merge = field("merge")?
                .as_array()
                .ok_or_else(|| Error::Serialization("merge must be a list".into()))?
                .iter()
                .map(usize_of)
                .collect::<Result<Vec<_>>>()?;
            Ok(Origin::Lifted {
                input: sequence_from(&raw.p, &raw.matrices)?,
                merge,
            })
        }
        _ => Err(Error::Serialization("unknown origin kind".into())),
    }
}

fn rational_rows(rows: &[Vec<num_rational::BigRational>]) -> Value {
    Value::from(
        rows.iter()
            .map(|r| Value::from(r.iter().map(format_rational).collect::<Vec<_>>()))
            .collect::<Vec<_>>(),
    )
}

fn reports_json(b: &SystemBundle) -> Value {
    json!({
        "seed": b.parts.seed,
        "origin": origin_json(&b.parts.origin),
        "checks": b.checks.iter().map(|c| json!({"name": c.name, "ok": c.ok, "detail": c.detail})).collect::<Vec<_>>(),
        "stages": b.stages.iter().map(|s| json!({
            "stage": s.stage,
            "rank": s.rank,
            "spread": format_rational(&s.spread),
            "nested": s.nested,
            "vertices": rational_rows(&s.vertices),
        })).collect::<Vec<_>>(),
        "deltas": rational_rows(&b.deltas),
        "approximations": b.approximations.iter().map(|(i, j, x)| json!({
            "stage": i, "column": j, "distance": format_rational(x),
        })).collect::<Vec<_>>(),
        "selection": b.selection.iter().map(|c| json!({
            "from": c.from,
            "to": c.to,
            "defect_sum": c.border.defect_sum.to_string(),
            "border": c.border.full_size.to_string(),
            "min_entry": c.min_entry.to_string(),
            "failed": c.failed.iter().map(|f| f.to_string()).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    })
}

fn witness_json(b: &SystemBundle) -> Value {
    let Some(w) = &b.witness else {
        return json!({});
    };
    let mats = |ms: &[IntMatrix]| {
        Value::from(
            ms.iter()
                .map(|m| serde_json::to_value(matrix_json(m)).unwrap())
                .collect::<Vec<_>>(),
        )
    };
    json!({
        "ok": w.ok(),
        "unit_ok": w.unit_ok,
        "identities": w.identities.iter().map(|i| json!({
            "name": i.name,
            "n": i.n,
            "pass": i.pass(),
            "mismatch": i.mismatch.map(|(r, c)| [r + 1, c + 1]),
        })).collect::<Vec<_>>(),
        "a": mats(&w.a),
        "a_tilde": mats(&w.a_tilde),
        "s": mats(&w.s),
        "t": mats(&w.t),
    })
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s
}

/// Writes the bundle files into `dir`, creating it if needed.
pub fn save_bundle(b: &SystemBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let chain = ChainJson {
        dim: b.parts.chain.dim(),
        moduli: b.parts.chain.moduli(),
    };
    let matrices = MatricesJson {
        p: b.parts.source.p.iter().map(text).collect(),
        matrices: b.parts.source.mats.iter().map(matrix_json).collect(),
        indices: b.parts.indices.clone(),
        cuts: b.parts.cuts.clone(),
        mode: mode_name(b.parts.mode).into(),
    };
    let levels = match (&b.blocks, &b.parts.blocks) {
        (Some(f), _) => f.levels.clone(),
        (None, Some(l)) => l.clone(),
        (None, None) => Vec::new(),
    };
    let blocks = BlocksJson {
        seed: b.parts.seed,
        levels: levels
            .iter()
            .map(|l| LevelJson {
                l: l.len(),
                blocks: l
                    .iter()
                    .map(|s| BlockJson {
                        column: s.column,
                        rank: BigJson::Text(s.rank.to_string()),
                    })
                    .collect(),
            })
            .collect(),
    };
    fs::write(dir.join(CHAIN_FILE), pretty(&chain))?;
    fs::write(dir.join(MATRICES_FILE), pretty(&matrices))?;
    fs::write(dir.join(BLOCKS_FILE), pretty(&blocks))?;
    fs::write(dir.join(REPORTS_FILE), pretty(&reports_json(b)))?;
    fs::write(dir.join(WITNESS_FILE), pretty(&witness_json(b)))?;
    Ok(())
}

fn read(dir: &Path, name: &str) -> Result<String> {
    fs::read_to_string(dir.join(name))
        .map_err(|e| Error::Io(format!("{}: {e}", dir.join(name).display())))
}

/// Reads the stored parts of a bundle; format problems are `Io`/`Serialization` errors.
pub fn load_parts(dir: &Path) -> Result<BundleParts> {
    let chain: ChainJson = serde_json::from_str(&read(dir, CHAIN_FILE)?)?;
    let matrices: MatricesJson = serde_json::from_str(&read(dir, MATRICES_FILE)?)?;
    let blocks: BlocksJson = serde_json::from_str(&read(dir, BLOCKS_FILE)?)?;
    let reports: Value = serde_json::from_str(&read(dir, REPORTS_FILE)?)?;
    if chain.moduli.iter().any(|q| q.len() != chain.dim) {
        return Err(Error::Serialization(
            "chain moduli do not match the dimension".into(),
        ));
    }
    let seed = reports
        .get("seed")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Serialization("reports lack the seed".into()))?;
    let origin = origin_from(
        reports
            .get("origin")
            .ok_or_else(|| Error::Serialization("reports lack the origin".into()))?,
    )?;
    let levels = blocks
        .levels
        .iter()
        .map(|l| {
            if l.l != l.blocks.len() {
                return Err(Error::Serialization(format!(
                    "level lists {} blocks but l = {}",
                    l.blocks.len(),
                    l.l
                )));
            }
            l.blocks
                .iter()
                .map(|b| {
                    Ok(BlockSpec {
                        column: b.column,
                        rank: b.rank.to_biguint()?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BundleParts {
        chain: LatticeChain::from_moduli(&chain.moduli)?,
        source: sequence_from(&matrices.p, &matrices.matrices)?,
        indices: matrices.indices,
        cuts: matrices.cuts,
        mode: mode_from(&matrices.mode)?,
        seed: if blocks.seed == seed {
            seed
        } else {
            return Err(Error::ConstructionDefect(
                "blocks and reports disagree on the seed".into(),
            ));
        },
        origin,
        blocks: Some(levels),
    })
}

/// Loads and fully re-verifies a bundle.
pub fn load_bundle(dir: &Path) -> Result<SystemBundle> {
    finish(load_parts(dir)?)
}

/// The centered box of radius `r` in dimension `d`.
pub fn window_box(d: usize, r: i64) -> Result<BoxDomain> {
    if r < 0 {
        return Err(Error::InvalidInput("radius must be non-negative".into()));
    }
    BoxDomain::new(vec![-r; d], vec![r; d])
}

/// One `x1,…,xd,symbol` line per point, lexicographic order.
pub fn window_csv(window: &BoxDomain, symbols: &[Symbol]) -> String {
    let d = window.dim();
    let mut out = (1..=d).map(|i| format!("x{i},")).collect::<String>();
    out.push_str("symbol\n");
    for (g, s) in window.iter().zip(symbols) {
        for x in &g {
            out.push_str(&format!("{x},"));
        }
        out.push_str(&format!("{s}\n"));
    }
    out
}

/// Plain PGM: columns follow `x1`, rows follow `x2`, gray `(s − 1)·255 / (l₀ − 1)`.
pub fn window_pgm(window: &BoxDomain, symbols: &[Symbol], alphabet: usize) -> Result<String> {
    if window.dim() != 2 {
        return Err(Error::Unsupported(
            "PGM output needs a planar window".into(),
        ));
    }
    let (w, h) = (window.side(0) as usize, window.side(1) as usize);
    let gray = |s: Symbol| {
        if alphabet <= 1 {
            0
        } else {
            (s as usize - 1) * 255 / (alphabet - 1)
        }
    };
    let mut out = format!("P2\n{w} {h}\n255\n");
    for row in 0..h {
        let line: Vec<String> = (0..w)
            .map(|col| gray(symbols[col * h + row]).to_string())
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}
