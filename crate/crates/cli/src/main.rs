//! `afriat`: run the homogeneous revealed-preference tests on CSV data and
//! print a JSON report.
//!
//! Exit codes: 0 feasible, 1 infeasible, 2 undecided, 3 no class number up
//! to the budget, 10 usage error, 11 input or output error, 12 any other
//! failure.

mod report;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use afriat::collective::{
    add_share_floor, build_collective_program, check_collective_with, class_number, ClassNumber,
    CollectiveOptions,
};
use afriat::datagen::{
    cobb_douglas_lambdas, gen_cobb_douglas, gen_collective, gen_nested_cd, nested_cd_multipliers, perturb,
    random_exponents, Budget, CobbDouglasSpec,
};
use afriat::harp::{self, check_harp};
use afriat::separability::{
    build_separability_program, check_separability_with, SeparabilityInstance, SeparabilityOptions,
};
use afriat::{partition, Error, MarketStatistics, Status};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use report::{digest, Report, Timings};

const EXIT_USAGE: u8 = 10;
const EXIT_IO: u8 = 11;
const EXIT_OTHER: u8 = 12;
const EXIT_NOT_FOUND: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "afriat", version, about = "Revealed-preference tests for positively homogeneous utilities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Homogeneous Afriat test on the whole bundle.
    Harp {
        #[command(flatten)]
        io: IoArgs,
        /// Relative slack on the Afriat inequalities.
        #[arg(long, default_value_t = harp::DEFAULT_TOL)]
        tol: f64,
    },
    /// Complete PH-separability of the goods in --y-cols from the rest.
    Separability {
        #[command(flatten)]
        io: IoArgs,
        /// 1-based goods indices forming the separable block, e.g. `3,4`.
        #[arg(long, value_delimiter = ',', required = true)]
        y_cols: Vec<usize>,
        #[command(flatten)]
        tols: DecisionArgs,
        /// Write the log-domain program as text to this file.
        #[arg(long)]
        dump_program: Option<PathBuf>,
    },
    /// Can the data be split among k PH-rational consumers?
    Collective {
        #[command(flatten)]
        io: IoArgs,
        /// Number of consumers.
        #[arg(long)]
        k: usize,
        #[command(flatten)]
        tols: DecisionArgs,
        #[command(flatten)]
        split: SplitArgs,
        /// Write the log-domain program as text to this file.
        #[arg(long)]
        dump_program: Option<PathBuf>,
    },
    /// Smallest number of PH-rational consumers explaining the data.
    ClassNumber {
        #[command(flatten)]
        io: IoArgs,
        /// Largest k to try; defaults to the number of goods, which is a
        /// heuristic budget and not a proven bound.
        #[arg(long)]
        k_max: Option<usize>,
        #[command(flatten)]
        tols: DecisionArgs,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// Write synthetic Cobb-Douglas data with known ground truth.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
struct IoArgs {
    /// CSV file with header `p1,...,pn,q1,...,qn`.
    #[arg(long)]
    input: PathBuf,
    /// Report destination; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Leave timings out so reruns are byte-identical.
    #[arg(long)]
    no_timings: bool,
}

#[derive(Debug, Args)]
struct DecisionArgs {
    /// Accept when the program optimum is at most this.
    #[arg(long, default_value_t = afriat::separability::DEFAULT_TOL_ACCEPT)]
    tol_accept: f64,
    /// Optimum at or above this is never accepted.
    #[arg(long, default_value_t = afriat::separability::DEFAULT_TOL_REJECT)]
    tol_reject: f64,
    /// Feasibility tolerance inside the solver.
    #[arg(long, default_value_t = afriat::convex::DEFAULT_EPS_FEAS)]
    eps_feas: f64,
    /// Newton step budget per solve.
    #[arg(long, default_value_t = afriat::convex::DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Seed for restarts.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SplitArgs {
    /// Smallest share of each aggregate quantity one consumer may take.
    #[arg(long, default_value_t = afriat::collective::DEFAULT_SHARE_FLOOR)]
    share_floor: f64,
    /// Extra solves from random split starts.
    #[arg(long)]
    attempts: Option<usize>,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(value_enum)]
    kind: GenKind,
    /// Destination CSV.
    #[arg(long)]
    output: PathBuf,
    /// Report destination; standard output when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Number of observations.
    #[arg(long, default_value_t = 10)]
    periods: usize,
    /// Goods per consumer, or in the first block for `nested`.
    #[arg(long, default_value_t = 3)]
    goods: usize,
    /// Goods in the separable block (`nested` only).
    #[arg(long, default_value_t = 2)]
    y_goods: usize,
    /// Budget share of the first block (`nested` only).
    #[arg(long, default_value_t = 0.5)]
    top_share: f64,
    /// Consumers summed into the aggregate (`collective` only).
    #[arg(long, default_value_t = 2)]
    consumers: usize,
    /// Comma-separated budget shares; random when absent.
    #[arg(long, value_delimiter = ',')]
    exponents: Option<Vec<f64>>,
    /// Fixed budget per period.
    #[arg(long, conflicts_with = "budget_range")]
    budget: Option<f64>,
    /// Budgets drawn log-uniformly per period, `lo,hi`.
    #[arg(long, value_delimiter = ',')]
    budget_range: Option<Vec<f64>>,
    /// Relative multiplicative noise on quantities.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Seed for prices, budgets, random shares and noise.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Leave timings out of the report.
    #[arg(long)]
    no_timings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum GenKind {
    CobbDouglas,
    Nested,
    Collective,
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::MissingFile(_)
            | Error::Io(_)
            | Error::MalformedHeader(_)
            | Error::MalformedRow { .. }
            | Error::NonpositiveValue { .. } => EXIT_IO,
            Error::EmptyBlock | Error::IndexOutOfRange { .. } | Error::InvalidParameter(_) => EXIT_USAGE,
            _ => EXIT_OTHER,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn status_code(status: Status) -> u8 {
    match status {
        Status::Feasible => 0,
        Status::Infeasible => 1,
        Status::Undecided => 2,
    }
}

struct Loaded {
    stats: MarketStatistics,
    digest: String,
    seconds: f64,
}

fn load(path: &Path) -> Result<Loaded, Failure> {
    let start = Instant::now();
    let bytes = fs::read(path).map_err(|e| {
        Failure::from(if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::Io(e.to_string())
        })
    })?;
    let stats = MarketStatistics::from_csv(bytes.as_slice())?;
    Ok(Loaded {
        stats,
        digest: digest(&bytes),
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn emit(report: &Report, path: Option<&Path>) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(report).map_err(|e| Failure {
        code: EXIT_OTHER,
        message: e.to_string(),
    })?;
    text.push('\n');
    let io = |e: std::io::Error| Failure {
        code: EXIT_IO,
        message: e.to_string(),
    };
    match path {
        Some(p) => fs::write(p, text).map_err(io),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(io),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    })
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

fn timings(no_timings: bool, load_seconds: f64, start: Instant) -> Option<Timings> {
    (!no_timings).then(|| Timings {
        load_seconds,
        solve_seconds: start.elapsed().as_secs_f64(),
    })
}

fn check_tols(t: &DecisionArgs) -> Result<(), Failure> {
    if !(t.tol_accept > 0.0 && t.tol_accept < t.tol_reject && t.tol_reject <= 1e-2) {
        return Err(Failure::usage("tolerances must satisfy 0 < tol-accept < tol-reject <= 1e-2"));
    }
    if !(t.eps_feas > 0.0 && t.eps_feas <= t.tol_accept) {
        return Err(Failure::usage("eps-feas must be positive and at most tol-accept"));
    }
    Ok(())
}

fn decision_tolerances(t: &DecisionArgs) -> BTreeMap<String, f64> {
    BTreeMap::from([
        ("tol_accept".to_string(), t.tol_accept),
        ("tol_reject".to_string(), t.tol_reject),
        ("eps_feas".to_string(), t.eps_feas),
    ])
}

fn collective_options(t: &DecisionArgs, s: &SplitArgs) -> Result<CollectiveOptions<f64>, Failure> {
    check_tols(t)?;
    if !(0.0..0.5).contains(&s.share_floor) {
        return Err(Failure::usage("share-floor must lie in [0, 0.5)"));
    }
    let mut opts = CollectiveOptions {
        tol_accept: t.tol_accept,
        tol_reject: t.tol_reject,
        share_floor: s.share_floor,
        ..CollectiveOptions::default()
    };
    opts.solver.eps_feas = t.eps_feas;
    opts.solver.max_iter = t.max_iter;
    opts.solver.seed = t.seed;
    if let Some(a) = s.attempts {
        opts.attempts = a;
    }
    Ok(opts)
}

fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Harp { io, tol } => run_harp(io, tol),
        Command::Separability {
            io,
            y_cols,
            tols,
            dump_program,
        } => run_separability(io, y_cols, tols, dump_program),
        Command::Collective {
            io,
            k,
            tols,
            split,
            dump_program,
        } => run_collective(io, k, tols, split, dump_program),
        Command::ClassNumber { io, k_max, tols, split } => run_class_number(io, k_max, tols, split),
        Command::Gen(args) => run_gen(args),
    }
}

fn run_harp(io: IoArgs, tol: f64) -> Result<u8, Failure> {
    let data = load(&io.input)?;
    let start = Instant::now();
    let r = check_harp(&data.stats, tol)?;
    let certificate = match (&r.certificate, &r.cycle) {
        (Some(c), _) => Some(json!({ "lambdas": c.lambdas })),
        (None, Some(cycle)) => Some(json!({
            "cycle": cycle.periods.iter().map(|t| t + 1).collect::<Vec<_>>(),
            "cycle_ratio": cycle.cycle_ratio,
        })),
        _ => None,
    };
    let report = Report {
        command: "harp".into(),
        input_digest: data.digest,
        status: r.decision.status.to_string(),
        optimum: r.decision.optimum,
        detail: r.decision.detail.clone(),
        certificate,
        witness: None,
        tolerances: BTreeMap::from([("tol".to_string(), tol)]),
        timings: timings(io.no_timings, data.seconds, start),
    };
    emit(&report, io.output.as_deref())?;
    Ok(status_code(r.decision.status))
}

fn run_separability(
    io: IoArgs,
    y_cols: Vec<usize>,
    tols: DecisionArgs,
    dump_program: Option<PathBuf>,
) -> Result<u8, Failure> {
    check_tols(&tols)?;
    let data = load(&io.input)?;
    let goods = data.stats.goods();
    let mut y_block = Vec::with_capacity(y_cols.len());
    for &c in &y_cols {
        if c == 0 || c > goods {
            return Err(Failure::usage(format!("--y-cols index {c} is outside 1..={goods}")));
        }
        y_block.push(c - 1);
    }
    let part = partition(&data.stats, &y_block)?;
    if let Some(path) = &dump_program {
        let program = build_separability_program(&SeparabilityInstance::new(part.clone()));
        write_text(path, &program.dump())?;
    }
    let start = Instant::now();
    let mut opts = SeparabilityOptions {
        tol_accept: tols.tol_accept,
        tol_reject: tols.tol_reject,
        ..SeparabilityOptions::default()
    };
    opts.solver.eps_feas = tols.eps_feas;
    opts.solver.max_iter = tols.max_iter;
    opts.solver.seed = tols.seed;
    let r = check_separability_with(&part, &opts)?;
    let certificate = match r.decision.status {
        Status::Feasible => Some(json!({ "lambdas": r.lambdas, "mus": r.mus })),
        Status::Infeasible if !r.violated_constraints.is_empty() => {
            Some(json!({ "violated_constraints": r.violated_constraints }))
        }
        _ => None,
    };
    let witness = r.subutility.as_ref().map(|u| {
        json!({
            "subutility": to_value(u),
            "macro_utility": r.macro_utility.as_ref().map(to_value),
        })
    });
    let report = Report {
        command: "separability".into(),
        input_digest: data.digest,
        status: r.decision.status.to_string(),
        optimum: r.decision.optimum,
        detail: r.decision.detail.clone(),
        certificate,
        witness,
        tolerances: decision_tolerances(&tols),
        timings: timings(io.no_timings, data.seconds, start),
    };
    emit(&report, io.output.as_deref())?;
    Ok(status_code(r.decision.status))
}

fn run_collective(
    io: IoArgs,
    k: usize,
    tols: DecisionArgs,
    split: SplitArgs,
    dump_program: Option<PathBuf>,
) -> Result<u8, Failure> {
    let opts = collective_options(&tols, &split)?;
    if k == 0 {
        return Err(Failure::usage("--k must be at least 1"));
    }
    let data = load(&io.input)?;
    if let Some(path) = &dump_program {
        let mut program = build_collective_program(&data.stats, k)?;
        if opts.share_floor > 0.0 {
            add_share_floor(&mut program, &data.stats, k, opts.share_floor);
        }
        write_text(path, &program.dump())?;
    }
    let start = Instant::now();
    let r = check_collective_with(&data.stats, k, &opts)?;
    let mut tolerances = decision_tolerances(&tols);
    tolerances.insert("share_floor".into(), opts.share_floor);
    let report = Report {
        command: "collective".into(),
        input_digest: data.digest,
        status: r.decision.status.to_string(),
        optimum: r.decision.optimum,
        detail: r.decision.detail.clone(),
        certificate: None,
        witness: r.allocation.as_ref().map(to_value),
        tolerances,
        timings: timings(io.no_timings, data.seconds, start),
    };
    emit(&report, io.output.as_deref())?;
    Ok(status_code(r.decision.status))
}

fn run_class_number(
    io: IoArgs,
    k_max: Option<usize>,
    tols: DecisionArgs,
    split: SplitArgs,
) -> Result<u8, Failure> {
    let opts = collective_options(&tols, &split)?;
    if k_max == Some(0) {
        return Err(Failure::usage("--k-max must be at least 1"));
    }
    let data = load(&io.input)?;
    let k_max = k_max.unwrap_or(data.stats.goods());
    let start = Instant::now();
    let r = class_number(&data.stats, k_max, &opts)?;
    let (status, code, detail) = match r.value {
        ClassNumber::Exact(k) => ("FEASIBLE".to_string(), 0, format!("class number {k}")),
        ClassNumber::LowerBoundOnly { lower, upper } => (
            "UNDECIDED".to_string(),
            2,
            format!("{upper} consumers suffice; {lower} stayed undecided"),
        ),
        ClassNumber::NotFound => (
            "NOT_FOUND".to_string(),
            EXIT_NOT_FOUND,
            format!("no k up to {k_max} was accepted"),
        ),
    };
    let per_k: BTreeMap<String, Value> = r.per_k.iter().map(|(k, d)| (k.to_string(), to_value(d))).collect();
    let mut tolerances = decision_tolerances(&tols);
    tolerances.insert("share_floor".into(), opts.share_floor);
    let report = Report {
        command: "class-number".into(),
        input_digest: data.digest,
        status,
        optimum: None,
        detail,
        certificate: Some(json!({ "value": to_value(&r.value), "k_max": k_max, "per_k": per_k })),
        witness: r.witness.as_ref().map(to_value),
        tolerances,
        timings: timings(io.no_timings, data.seconds, start),
    };
    emit(&report, io.output.as_deref())?;
    Ok(code)
}

fn run_gen(args: GenArgs) -> Result<u8, Failure> {
    let start = Instant::now();
    if args.periods == 0 || args.goods == 0 {
        return Err(Failure::usage("periods and goods must be positive"));
    }
    let budget = match (&args.budget, &args.budget_range) {
        (_, Some(r)) if r.len() != 2 => return Err(Failure::usage("--budget-range takes `lo,hi`")),
        (_, Some(r)) => Budget::LogUniform(r[0], r[1]),
        (Some(m), None) => Budget::Fixed(*m),
        (None, None) if args.kind == GenKind::Collective => Budget::LogUniform(0.5, 2.0),
        (None, None) => Budget::Fixed(1.0),
    };
    let exponents = |goods: usize, salt: u64| -> Result<Vec<f64>, Failure> {
        match &args.exponents {
            Some(e) if e.len() != goods => Err(Failure::usage(format!(
                "--exponents needs {goods} values, got {}",
                e.len()
            ))),
            Some(e) => Ok(e.clone()),
            None => Ok(random_exponents(goods, args.seed.wrapping_add(salt))),
        }
    };
    let spec = |goods: usize, salt: u64| -> Result<CobbDouglasSpec<f64>, Failure> {
        Ok(CobbDouglasSpec {
            budget,
            ..CobbDouglasSpec::new(exponents(goods, salt)?, 1.0, args.seed)
        })
    };
    let (stats, witness) = match args.kind {
        GenKind::CobbDouglas => {
            let s = spec(args.goods, 1)?;
            let stats = gen_cobb_douglas(&s, args.periods)?;
            let lambdas = cobb_douglas_lambdas(&s.exponents, stats.prices());
            (stats, json!({ "exponents": s.exponents, "lambdas": lambdas }))
        }
        GenKind::Nested => {
            let q = spec(args.goods, 1)?;
            let y = CobbDouglasSpec {
                exponents: random_exponents(args.y_goods, args.seed.wrapping_add(2)),
                ..q.clone()
            };
            let shares = (args.top_share, 1.0 - args.top_share);
            let part = gen_nested_cd(&q, &y, shares, args.periods, args.seed)?;
            let (lambdas, mus) = nested_cd_multipliers(&q.exponents, &y.exponents, shares, &part);
            let y_cols: Vec<usize> = (args.goods + 1..=args.goods + args.y_goods).collect();
            (
                part.base().clone(),
                json!({ "y_cols": y_cols, "lambdas": lambdas, "mus": mus }),
            )
        }
        GenKind::Collective => {
            if args.exponents.is_some() {
                return Err(Failure::usage("--exponents is not used by the collective generator"));
            }
            if args.consumers == 0 {
                return Err(Failure::usage("--consumers must be positive"));
            }
            let specs = (0..args.consumers)
                .map(|a| spec(args.goods, 1 + a as u64))
                .collect::<Result<Vec<_>, _>>()?;
            let (stats, alloc) = gen_collective(&specs, args.periods, args.seed)?;
            (stats, to_value(&alloc))
        }
    };
    let stats = perturb(&stats, args.noise, args.seed)?;
    let mut csv = Vec::new();
    stats.to_csv(&mut csv)?;
    fs::write(&args.output, &csv).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", args.output.display()),
    })?;
    let exact = args.noise == 0.0;
    let report = Report {
        command: "gen".into(),
        input_digest: digest(&csv),
        status: if exact { "FEASIBLE" } else { "UNDECIDED" }.into(),
        optimum: None,
        detail: if exact {
            "rationalizable by construction".into()
        } else {
            "noise added after construction".into()
        },
        certificate: None,
        witness: Some(witness),
        tolerances: BTreeMap::from([("noise".to_string(), args.noise)]),
        timings: (!args.no_timings).then(|| Timings {
            load_seconds: 0.0,
            solve_seconds: start.elapsed().as_secs_f64(),
        }),
    };
    emit(&report, args.report.as_deref())?;
    Ok(0)
}
