use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use momentfit::basis::{
    fourier_family, gram_schmidt, hermite_function_family, legendre_family, parse_monomials, raw_family, BasisFamily, Region,
};
use momentfit::bench::{self, PrngResult};
use momentfit::datasets::{xor_corners, SpiralSet, SpiralShape};
use momentfit::density::{ArgumentLabel, FittedDensity};
use momentfit::estimator::{fit, fit_whitened, EstimationOptions, GramMode, KernelSpec, Normalization};
use momentfit::sample::{load_csv, write_csv, WeightMode};
use momentfit::values::{Scalar, WeightKind};
use momentfit::{fmt_f64, oracle, quadrature, Error, ErrorClass};

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_ACCEPTANCE: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "momentfit", version, about = "Fit densities by averaging basis functions over weighted samples")]
struct Cli {
    /// Worker threads (default: all cores; 1 gives the canonical serial path).
    #[arg(long, global = true, env = "MOMENTFIT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a sample file from a testbed, a model or a shipped dataset.
    Gen(GenArgs),
    /// Fit a model to a sample file.
    Fit(FitArgs),
    /// Evaluate a model on a grid or on listed points.
    Eval(EvalArgs),
    /// Label points by the sign or complex argument of a model.
    Classify(ClassifyArgs),
    /// Run a statistical experiment.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Check a family's quadrature Gram matrix against the identity.
    Orthocheck(OrthoArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum BasisKind {
    Legendre,
    Fourier,
    Hermite,
    Custom,
}

#[derive(Args, Debug, Clone)]
struct BasisArgs {
    #[arg(long, value_enum)]
    basis: BasisKind,
    /// Maximal order (frequency for Fourier).
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// Bounds as `lo,hi` (cube in every dimension) or `lo1,hi1,lo2,hi2,...`.
    #[arg(long, allow_hyphen_values = true)]
    region: Option<String>,
    /// Dimension; inferred from the region when omitted.
    #[arg(long)]
    dim: Option<usize>,
    /// Custom family as scaled monomials, e.g. `1,x,2*x^2`.
    #[arg(long)]
    functions: Option<String>,
    /// Orthonormalize a custom family by Gram–Schmidt.
    #[arg(long)]
    orthonormalize: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum WeightArg {
    None,
    Real,
    Complex,
}

impl From<WeightArg> for WeightMode {
    fn from(w: WeightArg) -> Self {
        match w {
            WeightArg::None => WeightMode::None,
            WeightArg::Real => WeightMode::Real,
            WeightArg::Complex => WeightMode::Complex,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum NormalizeArg {
    None,
    Posthoc,
    Lagrange,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum GramArg {
    /// Solve with the Gram matrix unless the family is orthonormal.
    Auto,
    Assume,
    Solve,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    basis: BasisArgs,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = WeightArg::None)]
    weights: WeightArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = NormalizeArg::None)]
    normalize: NormalizeArg,
    /// Normalization constant for the Lagrange constraint.
    #[arg(long = "C", default_value_t = 1.0)]
    c: f64,
    /// Width of the Gaussian kernel whose second-order correction is applied.
    #[arg(long)]
    kernel_eps: Option<f64>,
    #[arg(long, value_enum, default_value_t = GramArg::Auto)]
    gram: GramArg,
    /// Whiten the sample first and store the transform in the model.
    #[arg(long)]
    whiten: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Dataset {
    LegendreTestbed,
    HermiteTestbed,
    UniformTestbed,
    Xor,
    TwoSpirals,
    FourSpirals,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, value_enum, conflicts_with = "model", required_unless_present = "model")]
    dataset: Option<Dataset>,
    /// Sample from a fitted model instead of a shipped dataset.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Points to draw (per arm for spirals; ignored for xor).
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Parameter offset of spiral points, `t_k = (k + offset)/n`.
    #[arg(long, default_value_t = 0.0)]
    offset: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Points per axis of a uniform grid over the region (or `[-8, 8]` per axis).
    #[arg(long, conflicts_with = "points", required_unless_present = "points")]
    grid: Option<usize>,
    /// Headerless CSV of points to evaluate.
    #[arg(long)]
    points: Option<PathBuf>,
    /// Points per axis for the negativity summary.
    #[arg(long, default_value_t = 201)]
    scan: usize,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Rule {
    Sign,
    Argument,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    points: PathBuf,
    /// Weight columns present in the points file (ignored for labelling).
    #[arg(long, value_enum, default_value_t = WeightArg::None)]
    weights: WeightArg,
    #[arg(long, value_enum)]
    rule: Rule,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct ReportArgs {
    /// Output prefix; writes `<prefix>.json` and `<prefix>.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum BenchCommand {
    /// RMS coefficient error against sample size.
    Scaling {
        /// `legendre`, `hermite`, `uniform`, or `all` for the first two.
        #[arg(long, default_value = "all")]
        testbed: String,
        #[arg(long, value_delimiter = ',', default_values_t = vec![25, 100, 400])]
        n: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Empirical against predicted coefficient standard deviations.
    Clt {
        #[arg(long, default_value = "legendre")]
        testbed: String,
        #[arg(long, default_value_t = 400)]
        n: usize,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// No normalization, post-hoc rescaling and Lagrange constraint side by side.
    Normalization {
        #[arg(long, default_value = "hermite")]
        testbed: String,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Product-of-centred-coordinates uniformity statistic.
    Prng {
        /// Raw byte stream (little-endian u32 words).
        #[arg(long, conflicts_with = "generator")]
        file: Option<PathBuf>,
        /// Built-in stream when no file is given.
        #[arg(long, value_enum, default_value_t = Generator::Chacha)]
        generator: Generator,
        #[arg(long = "D", default_value_t = 2)]
        d: usize,
        /// Tuples to test (default: all complete tuples in the file, or 10^6).
        #[arg(long)]
        tuples: Option<usize>,
        /// Accepted bound on `|z|`.
        #[arg(long, default_value_t = 4.0)]
        z_limit: f64,
        #[command(flatten)]
        report: ReportArgs,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Generator {
    Chacha,
    Duplicated,
}

#[derive(Args, Debug)]
struct OrthoArgs {
    #[command(flatten)]
    basis: BasisArgs,
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
}

/// Failure carrying the process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.class() {
            ErrorClass::Input => EXIT_INPUT,
            ErrorClass::Numerical => EXIT_NUMERIC,
        };
        Failure { code, message: e.to_string() }
    }
}

fn acceptance(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_ACCEPTANCE, message: message.into() }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        pool = pool.num_threads(t);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> CmdResult {
    match command {
        Command::Gen(a) => cmd_gen(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Bench(b) => cmd_bench(b),
        Command::Orthocheck(a) => cmd_orthocheck(a),
    }
}

fn parse_region(text: &str, dim: Option<usize>) -> momentfit::Result<Region> {
    let values = text
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad region bound `{v}`"))))
        .collect::<momentfit::Result<Vec<f64>>>()?;
    if values.len() < 2 || values.len() % 2 != 0 {
        return Err(Error::invalid("region needs pairs of bounds `lo,hi`"));
    }
    let pairs = values.len() / 2;
    let dim = dim.unwrap_or(pairs);
    let (lower, upper): (Vec<f64>, Vec<f64>) = match pairs {
        1 => (vec![values[0]; dim], vec![values[1]; dim]),
        p if p == dim => values.chunks(2).map(|c| (c[0], c[1])).unzip(),
        p => return Err(Error::DimensionMismatch { expected: dim, got: p }),
    };
    Region::new(lower, upper)
}

fn build_family(a: &BasisArgs) -> momentfit::Result<BasisFamily> {
    let region = || -> momentfit::Result<Region> {
        match &a.region {
            Some(r) => parse_region(r, a.dim),
            None => Err(Error::invalid(format!("--region is required for the {:?} basis", a.basis).to_lowercase())),
        }
    };
    let per_axis = |make: &dyn Fn(&Region) -> momentfit::Result<BasisFamily>| -> momentfit::Result<BasisFamily> {
        let r = region()?;
        if r.dim() == 1 {
            return make(&r);
        }
        let factors = (0..r.dim()).map(|d| make(&r.axis(d))).collect::<momentfit::Result<Vec<_>>>()?;
        momentfit::basis::tensor_product(&factors)
    };
    match a.basis {
        BasisKind::Legendre => per_axis(&|r| legendre_family(a.order, r)),
        BasisKind::Fourier => per_axis(&|r| fourier_family(a.order, r)),
        BasisKind::Hermite => hermite_function_family(a.order).power(a.dim.unwrap_or(1)),
        BasisKind::Custom => {
            let r = region()?;
            let text = a.functions.as_deref().ok_or_else(|| Error::invalid("--functions is required for a custom basis"))?;
            let raw = parse_monomials(text, r.dim())?;
            if a.orthonormalize {
                gram_schmidt(raw, &r, quadrature::DEFAULT_NODES)
            } else {
                raw_family(raw, &r)
            }
        }
    }
}

fn basis_config(a: &BasisArgs) -> serde_json::Value {
    json!({
        "basis": format!("{:?}", a.basis).to_lowercase(),
        "order": a.order,
        "region": a.region,
        "dim": a.dim,
        "functions": a.functions,
        "orthonormalize": a.orthonormalize,
    })
}

fn cmd_fit(a: FitArgs) -> CmdResult {
    let family = build_family(&a.basis)?;
    let sample = load_csv(&a.input, a.weights.into())?;
    let gram_mode = match a.gram {
        GramArg::Assume => GramMode::AssumeOrthonormal,
        GramArg::Solve => GramMode::Solve,
        GramArg::Auto if family.is_orthonormal() => GramMode::AssumeOrthonormal,
        GramArg::Auto => GramMode::Solve,
    };
    let normalization = match a.normalize {
        NormalizeArg::None => Normalization::None,
        NormalizeArg::Posthoc => Normalization::PosthocRescale,
        NormalizeArg::Lagrange => Normalization::Lagrange { c: a.c },
    };
    let kernel_correction = a.kernel_eps.map(KernelSpec::gaussian).transpose()?;
    let opts = EstimationOptions { normalization, kernel_correction, gram_mode };
    let density = if a.whiten { fit_whitened(&sample, &family, &opts)? } else { fit(&sample, &family, &opts)? };
    let config = json!({
        "command": "fit",
        "family": basis_config(&a.basis),
        "input": a.input,
        "weights": format!("{:?}", a.weights).to_lowercase(),
        "normalize": format!("{:?}", a.normalize).to_lowercase(),
        "C": a.c,
        "kernel_eps": a.kernel_eps,
        "gram": format!("{gram_mode:?}"),
        "whiten": a.whiten,
        "points": sample.len(),
    });
    density.save(&a.out, Some(config))?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let io = |e| Failure::from(Error::io("<stdout>", e));
    writeln!(out, "index,function,coefficient").map_err(io)?;
    for (i, id) in family.ids().iter().enumerate() {
        writeln!(out, "{i},{id},{}", scalar_fields(density.coefficients.get(i))).map_err(io)?;
    }
    writeln!(out, "integral,{}", scalar_fields(density.integrate())).map_err(io)?;
    Ok(())
}

fn scalar_fields(v: Scalar) -> String {
    match v {
        Scalar::Real(x) => fmt_f64(x),
        Scalar::Complex(c) => format!("{},{}", fmt_f64(c.re), fmt_f64(c.im)),
    }
}

fn cmd_gen(a: GenArgs) -> CmdResult {
    let (sample, mode, source) = match (a.dataset, &a.model) {
        (_, Some(path)) => {
            let d = FittedDensity::load(path)?;
            (oracle::sample_from_density(&d, a.n, a.seed)?, WeightMode::None, path.display().to_string())
        }
        (Some(ds), None) => {
            let sample = match ds {
                Dataset::LegendreTestbed => oracle::sample_from_density(&bench::legendre_testbed(), a.n, a.seed)?,
                Dataset::HermiteTestbed => oracle::sample_from_density(&bench::hermite_testbed(), a.n, a.seed)?,
                Dataset::UniformTestbed => oracle::sample_from_density(&bench::uniform_testbed(), a.n, a.seed)?,
                Dataset::Xor => xor_corners(),
                Dataset::TwoSpirals => SpiralSet::two_arms(SpiralShape::TWO_ARMS).discrete_sample(a.n, a.offset)?,
                Dataset::FourSpirals => SpiralSet::four_arms(SpiralShape::FOUR_ARMS).discrete_sample(a.n, a.offset)?,
            };
            let mode = match (ds, sample.weight_kind()) {
                (Dataset::Xor | Dataset::TwoSpirals, _) => WeightMode::Real,
                (_, WeightKind::Complex) => WeightMode::Complex,
                _ => WeightMode::None,
            };
            (sample, mode, format!("{ds:?}"))
        }
        (None, None) => return Err(Error::invalid("give --dataset or --model").into()),
    };
    let config = json!({"command": "gen", "source": source, "n": a.n, "seed": a.seed, "offset": a.offset, "generator": "chacha8"});
    let mut buf = format!("# config {config}\n").into_bytes();
    write_csv(&sample, &mut buf, mode)?;
    std::fs::write(&a.out, buf).map_err(|e| Error::io(&a.out, e))?;
    Ok(())
}

fn grid_points(density: &FittedDensity, per_axis: usize) -> momentfit::Result<Vec<Vec<f64>>> {
    if per_axis == 0 {
        return Err(Error::invalid("grid needs at least one point per axis"));
    }
    let bx = density.scan_box();
    let d = bx.dim();
    let total = per_axis.checked_pow(d as u32).ok_or_else(|| Error::invalid("grid too large"))?;
    let coord = |axis: usize, i: usize| {
        let (lo, hi) = (bx.lower()[axis], bx.upper()[axis]);
        if per_axis == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (per_axis - 1) as f64
        }
    };
    let mut pts = Vec::with_capacity(total);
    for k in 0..total {
        let mut rem = k;
        let mut y = vec![0.0; d];
        for axis in (0..d).rev() {
            y[axis] = coord(axis, rem % per_axis);
            rem /= per_axis;
        }
        pts.push(match &density.transform {
            Some(t) => t.invert(&y)?,
            None => y,
        });
    }
    Ok(pts)
}

fn load_points(path: &Path, weights: WeightArg) -> momentfit::Result<Vec<Vec<f64>>> {
    let s = load_csv(path, weights.into())?;
    Ok(s.points().map(<[f64]>::to_vec).collect())
}

fn open_output(out: &Option<PathBuf>) -> momentfit::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p).map_err(|e| Error::io(p, e))?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn coordinate_header(d: usize) -> String {
    (1..=d).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",")
}

fn coordinate_fields(x: &[f64]) -> String {
    x.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(",")
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    let density = FittedDensity::load(&a.model)?;
    let points = match (&a.points, a.grid) {
        (Some(p), _) => load_points(p, WeightArg::None)?,
        (None, Some(g)) => grid_points(&density, g)?,
        (None, None) => return Err(Error::invalid("give --grid or --points").into()),
    };
    let report = density.negativity_report(a.scan)?;
    let config = json!({"command": "eval", "model": a.model, "grid": a.grid, "points": a.points, "scan": a.scan});
    let mut out = open_output(&a.out)?;
    let path = a.out.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    let io = |e| Failure::from(Error::io(&path, e));
    let value_header = match density.weight_kind() {
        WeightKind::Real => "value",
        WeightKind::Complex => "value_re,value_im",
    };
    writeln!(out, "# config {config}").map_err(io)?;
    writeln!(out, "{},{value_header}", coordinate_header(density.dim())).map_err(io)?;
    for x in &points {
        let value = match density.evaluate(x) {
            Ok(v) => scalar_fields(v),
            Err(Error::OutOfDomain { .. }) => "out-of-domain".to_string(),
            Err(e) => return Err(e.into()),
        };
        writeln!(out, "{},{value}", coordinate_fields(x)).map_err(io)?;
    }
    writeln!(
        out,
        "# negativity min={} argmin={} negative_fraction={} scan_points={}",
        fmt_f64(report.min_value),
        coordinate_fields(&report.argmin),
        fmt_f64(report.negative_fraction),
        report.grid_points
    )
    .map_err(io)?;
    out.flush().map_err(io)
}

fn cmd_classify(a: ClassifyArgs) -> CmdResult {
    let density = FittedDensity::load(&a.model)?;
    match (a.rule, density.weight_kind()) {
        (Rule::Sign, WeightKind::Complex) => {
            return Err(Error::WeightKindMismatch { expected: "real", found: "complex" }.into())
        }
        (Rule::Argument, WeightKind::Real) => {
            return Err(Error::WeightKindMismatch { expected: "complex", found: "real" }.into())
        }
        _ => {}
    }
    let points = load_points(&a.points, a.weights)?;
    let config = json!({"command": "classify", "model": a.model, "points": a.points, "rule": format!("{:?}", a.rule).to_lowercase(), "classes": a.classes});
    let mut out = open_output(&a.out)?;
    let path = a.out.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    let io = |e| Failure::from(Error::io(&path, e));
    writeln!(out, "# config {config}").map_err(io)?;
    writeln!(out, "{},label", coordinate_header(density.dim())).map_err(io)?;
    for x in &points {
        let label = match a.rule {
            Rule::Sign => density.classify_sign(x).map(|l| l.as_str().to_string()),
            Rule::Argument => density.classify_argument(x, a.classes).map(|l| match l {
                ArgumentLabel::Class(k) => k.to_string(),
                ArgumentLabel::Undecided => "undecided".to_string(),
            }),
        };
        let label = match label {
            Ok(l) => l,
            Err(Error::OutOfDomain { .. }) => "out-of-domain".to_string(),
            Err(e) => return Err(e.into()),
        };
        writeln!(out, "{},{label}", coordinate_fields(x)).map_err(io)?;
    }
    out.flush().map_err(io)
}

fn report_paths(report: &ReportArgs, default: &str) -> (PathBuf, PathBuf) {
    let prefix = report.out.clone().unwrap_or_else(|| PathBuf::from(default));
    let s = prefix.as_os_str().to_string_lossy().into_owned();
    (PathBuf::from(format!("{s}.json")), PathBuf::from(format!("{s}.csv")))
}

fn cmd_bench(b: BenchCommand) -> CmdResult {
    match b {
        BenchCommand::Scaling { testbed, n, trials, report } => {
            let names: Vec<&str> = if testbed == "all" { vec!["legendre", "hermite"] } else { vec![testbed.as_str()] };
            let mut violations = Vec::new();
            for name in names {
                let density = bench::testbed(name)?;
                let r = bench::error_scaling_experiment(&density, &density.family, &n, trials, report.seed)?;
                let (json_path, csv_path) = report_paths(&report, &format!("bench-scaling-{name}"));
                let (json_path, csv_path) = if report.out.is_some() && testbed == "all" {
                    (suffix(&json_path, name), suffix(&csv_path, name))
                } else {
                    (json_path, csv_path)
                };
                bench::write_json(&json_path, &r)?;
                r.write_csv(&csv_path)?;
                println!("testbed,n_small,n_large,ratio,band_lo,band_hi,pass");
                for c in &r.ratios {
                    println!("{name},{},{},{},{},{},{}", c.n_small, c.n_large, fmt_f64(c.ratio), c.band[0], c.band[1], c.pass);
                    if !c.pass {
                        violations.push(format!("{name}: RMS({})/RMS({}) = {:.4} outside [{}, {}]", c.n_small, c.n_large, c.ratio, c.band[0], c.band[1]));
                    }
                }
                log::info!("{name} scaling finished in {:?}", r.runtime);
            }
            if violations.is_empty() {
                Ok(())
            } else {
                Err(acceptance(format!("scaling band violated: {}", violations.join("; "))))
            }
        }
        BenchCommand::Clt { testbed, n, trials, report } => {
            let density = bench::testbed(&testbed)?;
            let r = bench::clt_variance_check(&density, &density.family, n, trials, report.seed)?;
            let (json_path, csv_path) = report_paths(&report, "bench-clt");
            bench::write_json(&json_path, &r)?;
            r.write_csv(&csv_path)?;
            println!("index,empirical_std,predicted_std,ratio,pass");
            for row in &r.rows {
                println!("{},{},{},{},{}", row.index, fmt_f64(row.empirical_std), fmt_f64(row.predicted_std), fmt_f64(row.ratio), row.pass);
            }
            let bad: Vec<String> = r.rows.iter().filter(|x| !x.pass).map(|x| format!("a_{} ratio {:.4}", x.index, x.ratio)).collect();
            if bad.is_empty() {
                Ok(())
            } else {
                Err(acceptance(format!("CLT band [{}, {}] violated: {}", r.band[0], r.band[1], bad.join(", "))))
            }
        }
        BenchCommand::Normalization { testbed, n, trials, report } => {
            let density = bench::testbed(&testbed)?;
            let r = bench::normalization_comparison(&density, n, trials, report.seed)?;
            let (json_path, csv_path) = report_paths(&report, "bench-normalization");
            bench::write_json(&json_path, &r)?;
            r.write_csv(&csv_path)?;
            println!("strategy,rms,max_constraint_violation");
            for row in &r.rows {
                println!("{},{},{}", row.strategy, fmt_f64(row.rms), fmt_f64(row.max_constraint_violation));
            }
            Ok(())
        }
        BenchCommand::Prng { file, generator, d, tuples, z_limit, report } => {
            let values = match &file {
                Some(p) => bench::unit_values_from_bytes(&std::fs::read(p).map_err(|e| Error::io(p, e))?),
                None => {
                    let len = d * tuples.unwrap_or(1_000_000);
                    match generator {
                        Generator::Chacha => bench::chacha_values(report.seed, len),
                        Generator::Duplicated => bench::duplicated_values(report.seed, len),
                    }
                }
            };
            let n_tuples = tuples.unwrap_or(values.len() / d.max(1));
            let r: PrngResult = bench::prng_uniformity_test(&values, d, n_tuples)?;
            let source = match &file {
                Some(p) => p.display().to_string(),
                None => format!("{generator:?}").to_lowercase(),
            };
            let full = json!({"config": {"experiment": "prng", "source": source, "seed": report.seed, "D": d, "tuples": n_tuples, "z_limit": z_limit}, "result": r});
            let (json_path, csv_path) = report_paths(&report, "bench-prng");
            bench::write_json(&json_path, &full)?;
            r.write_csv(&csv_path)?;
            println!("dim,n_tuples,statistic,z,p_value");
            println!("{},{},{},{},{}", r.dim, r.n_tuples, fmt_f64(r.statistic), fmt_f64(r.z), fmt_f64(r.p_value));
            if r.z.abs() < z_limit {
                Ok(())
            } else {
                Err(acceptance(format!("|z| = {:.3} exceeds {z_limit}", r.z.abs())))
            }
        }
    }
}

fn suffix(path: &Path, name: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}-{name}.{ext}"))
}

fn cmd_orthocheck(a: OrthoArgs) -> CmdResult {
    let family = build_family(&a.basis)?;
    let r = bench::orthocheck(&family, a.tolerance)?;
    println!("{}", serde_json::to_string_pretty(&r).map_err(Error::from)?);
    if r.pass {
        Ok(())
    } else {
        Err(acceptance(format!(
            "Gram matrix deviates from the identity: off-diagonal {:.3e}, diagonal {:.3e} (tolerance {:.0e})",
            r.max_off_diagonal, r.max_diagonal_deviation, a.tolerance
        )))
    }
}
