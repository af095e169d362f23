//! Command-line surface: argument parsing, report envelopes, exit codes and
//! the on-disk basis cache. The `equisteer` binary is a thin wrapper around
//! [`run`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::capsules::{capsule, FiberSpec};
use crate::error::{Error, Result};
use crate::group::Dihedral;
use crate::induction::build_pi0;
use crate::intertwiner::{BasisCatalog, Utilization};
use crate::net::{
    train_demo, verify_equivariance, DemoConfig, DemoMetrics, LayerSpec, Network, ParamSet,
    VerificationReport,
};
use crate::rep::{
    char_inner, decompose_type, realization_class, Irrep, RealizationClass, RepJson, Representation,
};
use crate::tensor::Tensor;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_THRESHOLD: i32 = 1;
pub const EXIT_BAD_INPUT: i32 = 2;
pub const EXIT_TYPE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Accuracy and invariance thresholds applied to `train-demo`.
pub const DEMO_MIN_TRAIN_ACCURACY: f64 = 0.95;
pub const DEMO_MAX_INVARIANCE_GAP: f64 = 0.001;

/// Homomorphism tolerance for representations read from files.
pub const REP_TOL: f64 = 1e-9;

/// Largest allowed residual `‖ρ(h)ψ − ψπ(h)‖` of an emitted basis element.
pub const BASIS_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "equisteer", version, about = "Steerable CNN toolkit over D4 / p4m")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the irreducible representations of a point group.
    Irreps(IrrepsArgs),
    /// Decompose a representation into irreducibles.
    Decompose(DecomposeArgs),
    /// Dimension and basis of the equivariant filter space between two capsules.
    Homs(HomsArgs),
    /// Check a network for equivariance at every layer.
    Verify(VerifyArgs),
    /// Train the built-in classifier on synthetic data.
    TrainDemo(TrainDemoArgs),
}

#[derive(Debug, clap::Args)]
pub struct IrrepsArgs {
    #[arg(long, default_value = "d4")]
    pub group: String,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, clap::Args)]
pub struct DecomposeArgs {
    /// A JSON file, `pi0:SxS` or `builtin:<capsule>`.
    #[arg(long)]
    pub rep: String,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, clap::Args)]
pub struct HomsArgs {
    #[arg(long = "in")]
    pub in_capsule: String,
    #[arg(long = "out")]
    pub out_capsule: String,
    #[arg(long)]
    pub size: usize,
    /// Write the basis as a `(dim ρ · dim π) × n` tensor.
    #[arg(long)]
    pub emit: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, clap::Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub net: PathBuf,
    /// Parameter bundle; drawn from `--seed` when absent.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, clap::Args)]
pub struct TrainDemoArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Where to write the metrics report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub json: bool,
}

/// Wrapper shared by every JSON report.
#[derive(Debug, Serialize)]
pub struct ReportEnvelope<R> {
    pub command: &'static str,
    /// SHA-256 over the command's inputs, including the contents of input files.
    pub input_digest: String,
    pub tool_version: &'static str,
    pub result: R,
    pub pass: bool,
}

/// Rendered output of one command.
#[derive(Debug)]
pub struct Report {
    pub json: String,
    pub text: String,
    pub pass: bool,
}

impl Report {
    fn new<R: Serialize>(command: &'static str, digest: InputDigest, result: R, pass: bool, text: String) -> Result<Self> {
        let envelope = ReportEnvelope {
            command,
            input_digest: digest.finish(),
            tool_version: env!("CARGO_PKG_VERSION"),
            result,
            pass,
        };
        Ok(Report {
            json: serde_json::to_string_pretty(&envelope)? + "\n",
            text,
            pass,
        })
    }
}

/// Length-prefixed `name`/`value` pairs fed to SHA-256.
struct InputDigest(Sha256);

impl InputDigest {
    fn new(command: &str) -> Self {
        let mut d = InputDigest(Sha256::new());
        d.field("command", command.as_bytes());
        d
    }

    fn field(&mut self, name: &str, value: &[u8]) -> &mut Self {
        for part in [name.as_bytes(), value] {
            self.0.update((part.len() as u64).to_le_bytes());
            self.0.update(part);
        }
        self
    }

    fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}

/// Maps a library error onto the exit-code contract.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::TypeSystem { .. }
        | Error::NotAddable { .. }
        | Error::NotARepresentation(_)
        | Error::Inadmissible { .. }
        | Error::FiberMismatch { .. } => EXIT_TYPE,
        Error::NumericalFailure(_) | Error::TrainingFailure(_) => EXIT_NUMERICAL,
        _ => EXIT_BAD_INPUT,
    }
}

/// `EQUISTEER_CACHE` if set (empty disables the cache), else the user cache
/// directory.
pub fn cache_path() -> Option<PathBuf> {
    if let Some(p) = std::env::var_os("EQUISTEER_CACHE") {
        return (!p.is_empty()).then(|| PathBuf::from(p));
    }
    let base = std::env::var_os("XDG_CACHE_HOME")
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or_else(|| std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".cache")))?;
    Some(base.join("equisteer").join("bases.sftb"))
}

/// A catalogue primed from the cache file. A missing or unreadable cache
/// only costs recomputation.
fn open_catalog(path: Option<&Path>) -> BasisCatalog {
    let catalog = BasisCatalog::new();
    if let Some(p) = path.filter(|p| p.exists()) {
        if let Err(e) = catalog.load(p) {
            eprintln!("warning: ignoring basis cache {}: {e}", p.display());
        }
    }
    catalog
}

fn store_catalog(catalog: &BasisCatalog, loaded: usize, path: Option<&Path>) {
    if let Some(p) = path {
        if catalog.len() > loaded {
            if let Err(e) = catalog.save(p) {
                eprintln!("warning: could not write basis cache {}: {e}", p.display());
            }
        }
    }
}

/// Parses `args` (program name first), runs the command and prints its
/// report. Returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_BAD_INPUT } else { EXIT_PASS };
        }
    };
    let cache = cache_path();
    let catalog = open_catalog(cache.as_deref());
    let loaded = catalog.len();
    let json = match &cli.command {
        Command::Irreps(a) => a.json,
        Command::Decompose(a) => a.json,
        Command::Homs(a) => a.json,
        Command::Verify(a) => a.json,
        Command::TrainDemo(a) => a.json,
    };
    let outcome = execute(&cli.command, &catalog);
    store_catalog(&catalog, loaded, cache.as_deref());
    match outcome {
        Ok(report) => {
            if json {
                print!("{}", report.json);
            } else {
                print!("{}", report.text);
            }
            if report.pass {
                EXIT_PASS
            } else {
                EXIT_THRESHOLD
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs one command against `catalog` without printing.
pub fn execute(command: &Command, catalog: &BasisCatalog) -> Result<Report> {
    match command {
        Command::Irreps(a) => cmd_irreps(a),
        Command::Decompose(a) => cmd_decompose(a),
        Command::Homs(a) => cmd_homs(a, catalog),
        Command::Verify(a) => cmd_verify(a, catalog),
        Command::TrainDemo(a) => cmd_train_demo(a, catalog),
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<(Vec<u8>, String)> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Error::Parse(format!("{} is not UTF-8", path.display())))?;
    Ok((bytes, text))
}

#[derive(Serialize)]
struct IrrepEntry {
    label: &'static str,
    character: [f64; 8],
    is_representation: bool,
    #[serde(flatten)]
    rep: RepJson,
}

#[derive(Serialize)]
struct IrrepsResult {
    group: &'static str,
    elements: Vec<&'static str>,
    irreps: Vec<IrrepEntry>,
    character_gram: Vec<Vec<f64>>,
}

pub fn cmd_irreps(args: &IrrepsArgs) -> Result<Report> {
    if !args.group.eq_ignore_ascii_case("d4") {
        return Err(Error::InvalidArgument(format!(
            "unsupported group '{}'; only d4 is available",
            args.group
        )));
    }
    let mut digest = InputDigest::new("irreps");
    digest.field("group", b"d4");
    let reps: Vec<(Irrep, Representation)> = Irrep::ALL.iter().map(|&i| (i, i.rep())).collect();
    let chars: Vec<_> = reps.iter().map(|(_, r)| r.character()).collect();
    let gram: Vec<Vec<f64>> = chars
        .iter()
        .map(|a| chars.iter().map(|b| char_inner(a, b)).collect())
        .collect();
    let irreps: Vec<IrrepEntry> = reps
        .iter()
        .map(|(i, r)| IrrepEntry {
            label: i.label(),
            character: r.character().0,
            is_representation: r.is_representation(0.0),
            rep: r.to_json(),
        })
        .collect();
    let identity_gram = gram
        .iter()
        .enumerate()
        .all(|(i, row)| row.iter().enumerate().all(|(j, &v)| v == if i == j { 1.0 } else { 0.0 }));
    let pass = identity_gram && irreps.iter().all(|e| e.is_representation);

    let elements: Vec<&'static str> = Dihedral::all().iter().map(|g| g.label()).collect();
    let mut text = String::new();
    let _ = writeln!(text, "D4 irreducible representations (elements {})", elements.join(" "));
    for e in &irreps {
        let _ = writeln!(text, "{} dim {} character {:?}", e.label, e.rep.dim, e.character);
        for g in &elements {
            let _ = writeln!(text, "  {g:>3}: {:?}", e.rep.matrices[*g]);
        }
    }
    let result = IrrepsResult {
        group: "d4",
        elements,
        irreps,
        character_gram: gram,
    };
    Report::new("irreps", digest, result, pass, text)
}

/// Resolves `pi0:SxS`, `builtin:<capsule>` or a JSON file path.
pub fn load_rep(spec: &str) -> Result<(Representation, Vec<u8>)> {
    if let Some(size) = spec.strip_prefix("pi0:") {
        let (a, b) = size
            .split_once('x')
            .ok_or_else(|| Error::InvalidArgument(format!("expected pi0:SxS, got '{spec}'")))?;
        let (a, b): (usize, usize) = match (a.parse(), b.parse()) {
            (Ok(a), Ok(b)) => (a, b),
            _ => return Err(Error::InvalidArgument(format!("bad patch size in '{spec}'"))),
        };
        if a != b {
            return Err(Error::InvalidArgument(format!("patches must be square, got {a}x{b}")));
        }
        return Ok((build_pi0(a, 1)?.rep().clone(), Vec::new()));
    }
    if let Some(id) = spec.strip_prefix("builtin:") {
        return Ok((capsule(id)?.rep.clone(), Vec::new()));
    }
    let (bytes, text) = read_text(Path::new(spec))?;
    let json: RepJson = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{spec}: {e}")))?;
    let rep = Representation::from_json(&json)?;
    if !rep.is_representation(REP_TOL) {
        return Err(Error::NotARepresentation(format!(
            "{spec} violates the homomorphism property beyond {REP_TOL:e}"
        )));
    }
    Ok((rep, bytes))
}

#[derive(Serialize)]
struct DecomposeResult<'a> {
    rep: &'a str,
    dim: usize,
    #[serde(rename = "type")]
    rep_type: [usize; 5],
    multiplicities: std::collections::BTreeMap<&'static str, usize>,
    realization_class: RealizationClass,
}

pub fn cmd_decompose(args: &DecomposeArgs) -> Result<Report> {
    let (rep, bytes) = load_rep(&args.rep)?;
    let ty = decompose_type(&rep)?;
    let mut digest = InputDigest::new("decompose");
    digest.field("rep", args.rep.as_bytes()).field("file", &bytes);
    let text = format!("dim {} type {ty}\n", rep.dim());
    let result = DecomposeResult {
        rep: &args.rep,
        dim: rep.dim(),
        rep_type: ty.0,
        multiplicities: ty.as_map(),
        realization_class: realization_class(&rep),
    };
    Report::new("decompose", digest, result, true, text)
}

#[derive(Serialize)]
struct HomsResult<'a> {
    #[serde(rename = "in")]
    in_capsule: &'a str,
    #[serde(rename = "out")]
    out_capsule: &'a str,
    size: usize,
    in_dim: usize,
    out_dim: usize,
    dim: usize,
    /// `null` when the space is zero-dimensional.
    utilization: Option<f64>,
    utilization_fraction: Option<[usize; 2]>,
    max_residual: f64,
    emitted: Option<String>,
}

pub fn cmd_homs(args: &HomsArgs, catalog: &BasisCatalog) -> Result<Report> {
    let basis = catalog.get(&args.in_capsule, &args.out_capsule, args.size)?;
    let pi = crate::induction::build_patch_rep(&capsule(&args.in_capsule)?.rep, args.size)?;
    let rho = &capsule(&args.out_capsule)?.rep;
    let max_residual = basis.residual(pi.rep(), rho);
    let utilization = (basis.dim() > 0).then(|| Utilization {
        numerator: basis.in_dim() * basis.out_dim(),
        denominator: basis.dim(),
    });
    if let Some(path) = &args.emit {
        let cols = basis.as_columns();
        let data: Vec<f64> = (0..cols.nrows())
            .flat_map(|i| (0..cols.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| cols[(i, j)])
            .collect();
        Tensor::from_f64(vec![cols.nrows(), cols.ncols()], &data)?.save(path)?;
    }
    let mut digest = InputDigest::new("homs");
    digest
        .field("in", args.in_capsule.as_bytes())
        .field("out", args.out_capsule.as_bytes())
        .field("size", &(args.size as u64).to_le_bytes());
    let pass = max_residual <= BASIS_RESIDUAL_TOL;
    let text = match utilization {
        Some(u) => {
            let (p, q) = u.reduced();
            format!("dim {} mu {} ({p}/{q})\n", basis.dim(), u.value())
        }
        None => "dim 0 mu undefined\n".to_string(),
    };
    let result = HomsResult {
        in_capsule: &args.in_capsule,
        out_capsule: &args.out_capsule,
        size: args.size,
        in_dim: basis.in_dim(),
        out_dim: basis.out_dim(),
        dim: basis.dim(),
        utilization: utilization.map(|u| u.value()),
        utilization_fraction: utilization.map(|u| {
            let (p, q) = u.reduced();
            [p, q]
        }),
        max_residual,
        emitted: args.emit.as_ref().map(|p| p.display().to_string()),
    };
    Report::new("homs", digest, result, pass, text)
}

/// Filter-space accounting for one convolution layer.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerAccounting {
    pub layer: usize,
    pub s: usize,
    /// Entries of an unconstrained `K′ × K s²` filter bank.
    pub unconstrained: usize,
    /// Dimension of the equivariant filter space.
    pub params: usize,
    pub utilization: Option<f64>,
}

/// Per-layer parameter accounting of every convolution in `net`.
pub fn layer_accounting(net: &Network, catalog: &BasisCatalog) -> Result<Vec<LayerAccounting>> {
    let mut out = Vec::new();
    for (layer, spec) in net.layers().iter().enumerate() {
        let LayerSpec::SteerableConv { in_fiber, out_fiber, s } = spec else {
            continue;
        };
        let params = filter_space_dim(in_fiber, out_fiber, *s, catalog)?;
        let unconstrained = in_fiber.channels()? * s * s * out_fiber.channels()?;
        out.push(LayerAccounting {
            layer,
            s: *s,
            unconstrained,
            params,
            utilization: (params > 0).then(|| unconstrained as f64 / params as f64),
        });
    }
    Ok(out)
}

fn filter_space_dim(a: &FiberSpec, b: &FiberSpec, s: usize, catalog: &BasisCatalog) -> Result<usize> {
    let mut total = 0;
    for i in a.entries() {
        for j in b.entries() {
            total += i.mult * j.mult * catalog.get(&i.capsule, &j.capsule, s)?.dim();
        }
    }
    Ok(total)
}

#[derive(Serialize)]
struct VerifyResult {
    #[serde(flatten)]
    report: VerificationReport,
    params_source: &'static str,
    seed: u64,
    num_params: usize,
    layers: Vec<LayerAccounting>,
}

pub fn cmd_verify(args: &VerifyArgs, catalog: &BasisCatalog) -> Result<Report> {
    if args.tol.is_nan() || args.tol < 0.0 {
        return Err(Error::InvalidArgument("tolerance must be non-negative".into()));
    }
    if args.trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }
    let (net_bytes, net_text) = read_text(&args.net)?;
    let net = Network::from_json(&net_text)?;
    let mut digest = InputDigest::new("verify");
    digest.field("net", &net_bytes);
    let (params, source) = match &args.params {
        Some(p) => {
            digest.field("params", &read_file(p)?);
            (ParamSet::load(&net, catalog, p)?, "file")
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            (ParamSet::random(&net, catalog, &mut rng)?, "seed")
        }
    };
    digest
        .field("trials", &(args.trials as u64).to_le_bytes())
        .field("seed", &args.seed.to_le_bytes())
        .field("tol", &args.tol.to_le_bytes())
        .field("precision", format!("{:?}", args.precision).as_bytes());
    let report = match args.precision {
        Precision::F32 => verify_equivariance::<f32>(&net, &params, catalog, args.trials, args.seed, args.tol)?,
        Precision::F64 => verify_equivariance::<f64>(&net, &params, catalog, args.trials, args.seed, args.tol)?,
    };
    let mut text = format!(
        "max relative error {:.3e} (tol {:e}, {}, {} trials x {} elements): {}\n",
        report.max_rel_error,
        report.tol,
        report.precision,
        report.trials,
        report.elements,
        if report.pass { "pass" } else { "FAIL" }
    );
    for (i, e) in report.per_layer.iter().enumerate() {
        let _ = writeln!(text, "  layer {i}: {e:.3e}");
    }
    let pass = report.pass;
    let result = VerifyResult {
        report,
        params_source: source,
        seed: args.seed,
        num_params: params.num_params(),
        layers: layer_accounting(&net, catalog)?,
    };
    Report::new("verify", digest, result, pass, text)
}

#[derive(Serialize)]
struct DemoThresholds {
    min_train_accuracy: f64,
    max_invariance_gap: f64,
}

#[derive(Serialize)]
struct DemoResult {
    config: DemoConfig,
    metrics: DemoMetrics,
    thresholds: DemoThresholds,
}

pub fn cmd_train_demo(args: &TrainDemoArgs, catalog: &BasisCatalog) -> Result<Report> {
    let mut digest = InputDigest::new("train-demo");
    let mut cfg = match &args.config {
        Some(p) => {
            let (bytes, text) = read_text(p)?;
            digest.field("config", &bytes);
            DemoConfig::from_json(&text)?
        }
        None => DemoConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    digest.field("seed", &cfg.seed.to_le_bytes());
    let metrics = train_demo(&cfg, catalog)?;
    let pass = metrics.train_accuracy >= DEMO_MIN_TRAIN_ACCURACY
        && metrics.invariance_gap <= DEMO_MAX_INVARIANCE_GAP;
    let text = format!(
        "epochs {} params {} loss {:.4} -> {:.4}\ntrain {:.3} test {:.3} transformed test {:.3} gap {:.4}: {}\n",
        metrics.epochs,
        metrics.params,
        metrics.initial_loss,
        metrics.final_loss,
        metrics.train_accuracy,
        metrics.test_accuracy,
        metrics.transformed_test_accuracy,
        metrics.invariance_gap,
        if pass { "pass" } else { "FAIL" }
    );
    let result = DemoResult {
        config: cfg,
        metrics,
        thresholds: DemoThresholds {
            min_train_accuracy: DEMO_MIN_TRAIN_ACCURACY,
            max_invariance_gap: DEMO_MAX_INVARIANCE_GAP,
        },
    };
    let report = Report::new("train-demo", digest, result, pass, text)?;
    if let Some(out) = &args.out {
        std::fs::write(out, &report.json)?;
    }
    Ok(report)
}
