//! Command-line front end for toeplitz-forge.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or configuration error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use toeplitz_forge::arith::format_rational;
use toeplitz_forge::choquet::SimplexSpec;
use toeplitz_forge::invariants::StateChain;
use toeplitz_forge::io::{
    load_bundle, load_parts, parse_sequence, save_bundle, window_box, window_csv, window_pgm,
    REPORTS_FILE,
};
use toeplitz_forge::matrices::ManagedSequence;
use toeplitz_forge::pipeline::{
    compare_stage_vertices, finish, realize_simplex, z_to_zd, SystemBundle,
};
use toeplitz_forge::Error;

pub const THREADS_VAR: &str = "TOEPLITZ_FORGE_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "toeplitz-forge",
    version,
    about = "Build and verify Toeplitz Z^d-subshifts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Realize a simplex of invariant measures.
    RealizeSimplex(RealizeArgs),
    /// Lift a managed Z-Toeplitz presentation to Z^d.
    ZToZd(LiftArgs),
    /// Re-verify a bundle directory.
    Verify(BundleArg),
    /// Emit x0 on a centered window.
    Window(WindowArgs),
    /// Print the stage vertices of the measure simplex.
    Vertices(VerticesArgs),
    /// Print the extreme states of the dimension group.
    States(BundleArg),
}

#[derive(Args, Debug)]
struct RealizeArgs {
    /// Number of extreme points of a finite simplex.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    extremes: Option<usize>,
    /// Simplex specification file (JSON).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    group_dim: usize,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Matrix size for finite simplices.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct LiftArgs {
    /// Sequence file `{"p": [...], "matrices": [...]}`.
    #[arg(
        long,
        conflicts_with = "from_bundle",
        required_unless_present = "from_bundle"
    )]
    input: Option<PathBuf>,
    /// Use the managed sequence of an existing bundle and compare stage vertices.
    #[arg(long)]
    from_bundle: Option<PathBuf>,
    #[arg(long)]
    dim: usize,
    /// Keep only the first `depth` matrices of the input.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Merge input levels until every ratio has enough factors.
    #[arg(long)]
    pre_telescope: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BundleArg {
    #[arg(long)]
    bundle: PathBuf,
}

#[derive(Args, Debug)]
struct WindowArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    radius: i64,
    /// Output directory (defaults to the bundle).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerticesArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    stage: Option<i64>,
}

enum Failure {
    Usage(String),
    Verify(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Verify(_) => 1,
        }
    }
}

/// Input and configuration problems are usage errors; everything else is mathematical.
fn classify(e: Error) -> Failure {
    match e {
        Error::InvalidInput(_)
        | Error::Io(_)
        | Error::Serialization(_)
        | Error::Unsupported(_)
        | Error::Overflow(_)
        | Error::Factorization(_)
        | Error::NeedsMoreLevels { .. } => Failure::Usage(e.to_string()),
        _ => Failure::Verify(e.to_string()),
    }
}

fn load_failure(e: Error) -> Failure {
    match e {
        Error::Io(_) | Error::Serialization(_) => Failure::Usage(e.to_string()),
        _ => Failure::Verify(e.to_string()),
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_VAR)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

/// Exit code and failure diagnostic of one invocation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub message: Option<String>,
}

/// Runs the command line without printing the failure diagnostic.
pub fn execute<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            if code == 0 {
                let _ = e.print();
            }
            return Outcome {
                code,
                message: (code != 0).then(|| e.render().to_string()),
            };
        }
    };
    configure_threads();
    let outcome = match cli.command {
        Command::RealizeSimplex(a) => realize(a),
        Command::ZToZd(a) => lift(a),
        Command::Verify(a) => verify(&a.bundle),
        Command::Window(a) => window(a),
        Command::Vertices(a) => vertices(a),
        Command::States(a) => states(&a.bundle),
    };
    match outcome {
        Ok(()) => Outcome {
            code: 0,
            message: None,
        },
        Err(f) => Outcome {
            code: f.code(),
            message: Some(match f {
                Failure::Usage(m) => format!("error: {m}"),
                Failure::Verify(m) => format!("verification failed: {m}"),
            }),
        },
    }
}

/// Runs the command line and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let outcome = execute(args);
    if let Some(m) = &outcome.message {
        eprintln!("{}", m.trim_end());
    }
    outcome.code
}

fn print_checks(b: &SystemBundle) {
    for c in &b.checks {
        println!(
            "{} {}: {}",
            if c.ok { "ok  " } else { "FAIL" },
            c.name,
            c.detail
        );
    }
}

fn conclude(b: &SystemBundle) -> Result<(), Failure> {
    print_checks(b);
    if b.ok() {
        Ok(())
    } else {
        let names: Vec<&str> = b.failures().iter().map(|c| c.name.as_str()).collect();
        Err(Failure::Verify(format!(
            "failed invariants: {}",
            names.join(", ")
        )))
    }
}

fn realize(a: RealizeArgs) -> Result<(), Failure> {
    let spec = match (a.extremes, &a.spec) {
        (Some(0), _) => return Err(Failure::Usage("--extremes must be at least 1".into())),
        (Some(d), _) => SimplexSpec::Finite { d },
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            SimplexSpec::from_json(&text).map_err(|e| Failure::Usage(e.to_string()))?
        }
        (None, None) => {
            return Err(Failure::Usage(
                "one of --extremes or --spec is required".into(),
            ))
        }
    };
    if a.depth < 2 {
        return Err(Failure::Usage("--depth must be at least 2".into()));
    }
    let b = realize_simplex(&spec, a.group_dim, a.depth, a.seed, a.k).map_err(classify)?;
    save_bundle(&b, &a.out).map_err(classify)?;
    println!(
        "bundle written to {} (levels {:?}, cuts {:?})",
        a.out.display(),
        b.parts.indices,
        b.parts.cuts
    );
    conclude(&b)
}

fn read_sequence(path: &Path) -> Result<ManagedSequence, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    parse_sequence(&text).map_err(|e| Failure::Usage(e.to_string()))
}

fn truncate(seq: ManagedSequence, depth: Option<usize>) -> ManagedSequence {
    match depth {
        Some(n) if n < seq.len() => {
            ManagedSequence::new(seq.p[..=n].to_vec(), seq.mats[..n].to_vec())
        }
        _ => seq,
    }
}

fn lift(a: LiftArgs) -> Result<(), Failure> {
    if a.dim == 0 {
        return Err(Failure::Usage("--dim must be at least 1".into()));
    }
    let source = match (&a.input, &a.from_bundle) {
        (Some(p), _) => read_sequence(p)?,
        (None, Some(dir)) => load_parts(dir).map_err(load_failure)?.source,
        (None, None) => {
            return Err(Failure::Usage(
                "one of --input or --from-bundle is required".into(),
            ))
        }
    };
    let source = truncate(source, a.depth);
    let b = z_to_zd(&source, a.dim, a.seed, a.pre_telescope).map_err(classify)?;
    save_bundle(&b, &a.out).map_err(classify)?;
    println!(
        "bundle written to {} (moduli {:?}, cuts {:?})",
        a.out.display(),
        b.parts.chain.moduli(),
        b.parts.cuts
    );
    let mut same = true;
    if a.from_bundle.is_some() {
        for m in compare_stage_vertices(&source, &b.parts.source).map_err(classify)? {
            println!(
                "stage vertices at p = {}: {}",
                m.p,
                if m.equal { "identical" } else { "DIFFERENT" }
            );
            same &= m.equal;
        }
    }
    conclude(&b)?;
    if same {
        Ok(())
    } else {
        Err(Failure::Verify("stage vertex sets differ".into()))
    }
}

fn verify(dir: &Path) -> Result<(), Failure> {
    let parts = load_parts(dir).map_err(load_failure)?;
    let recorded: Option<serde_json::Value> = fs::read_to_string(dir.join(REPORTS_FILE))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok());
    let b = finish(parts).map_err(|e| Failure::Verify(e.to_string()))?;
    conclude(&b)?;
    let stored: Vec<(String, bool)> = recorded
        .as_ref()
        .and_then(|v| v.get("checks"))
        .and_then(|c| c.as_array())
        .map(|a| {
            a.iter()
                .filter_map(|c| {
                    Some((
                        c.get("name")?.as_str()?.to_string(),
                        c.get("ok")?.as_bool()?,
                    ))
                })
                .collect()
        })
        .unwrap_or_default();
    let fresh: Vec<(String, bool)> = b.checks.iter().map(|c| (c.name.clone(), c.ok)).collect();
    if stored != fresh {
        return Err(Failure::Verify(
            "recorded reports differ from re-verification".into(),
        ));
    }
    println!("bundle verified");
    Ok(())
}

fn open(dir: &Path) -> Result<SystemBundle, Failure> {
    load_bundle(dir).map_err(load_failure)
}

fn window(a: WindowArgs) -> Result<(), Failure> {
    let b = open(&a.bundle)?;
    let family = b.family().map_err(|e| Failure::Verify(e.to_string()))?;
    let w = window_box(family.chain.dim(), a.radius).map_err(classify)?;
    let symbols = family.window(&w).map_err(classify)?;
    let out = a.out.unwrap_or_else(|| a.bundle.clone());
    fs::create_dir_all(&out).map_err(|e| Failure::Usage(e.to_string()))?;
    let write = |name: &str, text: String| {
        fs::write(out.join(name), text)
            .map_err(|e| Failure::Usage(format!("{}: {e}", out.join(name).display())))
    };
    write("window.csv", window_csv(&w, &symbols))?;
    if w.dim() == 2 {
        write(
            "window.pgm",
            window_pgm(&w, &symbols, family.alphabet()).map_err(classify)?,
        )?;
    }
    println!("window of radius {} written to {}", a.radius, out.display());
    Ok(())
}

fn vertices(a: VerticesArgs) -> Result<(), Failure> {
    let b = open(&a.bundle)?;
    let stages: Vec<_> = b
        .stages
        .iter()
        .filter(|s| a.stage.is_none_or(|i| s.stage == i))
        .collect();
    if stages.is_empty() {
        return Err(Failure::Usage("no such stage".into()));
    }
    for s in stages {
        println!(
            "stage {} rank {} spread {}",
            s.stage,
            s.rank,
            format_rational(&s.spread)
        );
        for v in &s.vertices {
            println!(
                "  ({})",
                v.iter().map(format_rational).collect::<Vec<_>>().join(", ")
            );
        }
    }
    Ok(())
}

fn states(dir: &Path) -> Result<(), Failure> {
    let b = open(dir)?;
    let seq = &b.managed;
    for l in 0..seq.k(seq.len()) {
        let chain = StateChain::vertex(seq, l).map_err(classify)?;
        let ok = chain.consistent(seq);
        println!(
            "state {} ({})",
            l + 1,
            if ok { "consistent" } else { "INCONSISTENT" }
        );
        for (n, z) in chain.z.iter().enumerate() {
            println!(
                "  level {n}: ({})",
                z.iter().map(format_rational).collect::<Vec<_>>().join(", ")
            );
        }
        if !ok {
            return Err(Failure::Verify(format!(
                "state {} is not compatible with the matrices",
                l + 1
            )));
        }
    }
    Ok(())
}
