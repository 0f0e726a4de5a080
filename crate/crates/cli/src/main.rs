//! `tso`: plan, compare and check tensor slicing/tiling mappings.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 a layer has no
//! feasible mapping, 3 a plan failed verification.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use tso_core::report::{
    breakdown_csv, breakdown_rows, compare_csv, parse_plan, plan_table, roofline_csv, roofline_points,
    verification_table, verify_plan,
};
use tso_core::search::{compare_strategies, tso, PlanMap, Restriction, SearchError, SearchOptions};
use tso_core::sim::simulate_schedule;
use tso_core::slicing::{gen_tile, tle_slicing};
use tso_core::{parse_arch, parse_model, ArchConfig, CostModel, ModelSpec, PlanFile, ScheduleKind, TlePartitionKind};

#[derive(Parser)]
#[command(name = "tso", version, about = "Tensor slicing and tiling planner for multicore NPUs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search the cheapest mapping per layer and write a plan file.
    Plan(PlanArgs),
    /// Compare TSO against fixed TLE and TLT strategies (CSV).
    Compare(CommonArgs),
    /// Per-layer roofline points for the planned mapping (CSV).
    Roofline(PlanArgs),
    /// Replay a plan file and check it against the closed forms.
    Simulate(SimulateArgs),
    /// Load/store/MAC split of the burst and noburst plans (CSV).
    Breakdown(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Model description (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Architecture profile (JSON); defaults to the built-in NMP profile.
    #[arg(long)]
    arch: Option<PathBuf>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value = "burst")]
    mode: CostModel,
    #[arg(long)]
    fixed_tle: Option<TlePartitionKind>,
    #[arg(long)]
    fixed_tlt: Option<ScheduleKind>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    arch: Option<PathBuf>,
    /// Plan file written by `tso plan`.
    #[arg(long)]
    plan: PathBuf,
    /// Write the full transfer trace of this layer to `--trace`.
    #[arg(long, requires = "trace")]
    trace_layer: Option<String>,
    #[arg(long, requires = "trace_layer")]
    trace: Option<PathBuf>,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure { code: 1, error: e.into() }
    }
}

fn fail(code: u8, error: anyhow::Error) -> Failure {
    Failure { code, error }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_model(path: &Path) -> anyhow::Result<ModelSpec> {
    parse_model(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn load_arch(path: Option<&Path>) -> anyhow::Result<ArchConfig> {
    match path {
        None => Ok(ArchConfig::nmp()),
        Some(p) => parse_arch(&read(p)?).with_context(|| format!("in {}", p.display())),
    }
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn threads(requested: Option<usize>) -> anyhow::Result<usize> {
    match requested {
        Some(0) => Err(anyhow!("--threads must be at least 1")),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn search_failure(e: SearchError) -> Failure {
    match e {
        SearchError::Infeasible { .. } => fail(2, e.into()),
        other => fail(1, other.into()),
    }
}

fn run_plan(args: &PlanArgs, model: &ModelSpec, arch: &ArchConfig) -> Result<PlanMap, Failure> {
    let opts = SearchOptions {
        model: args.mode,
        restrict: Restriction {
            tle: args.fixed_tle,
            tlt: args.fixed_tlt,
        },
        threads: threads(args.common.threads)?,
    };
    let plan = tso(model, arch, &opts).map_err(search_failure)?;
    let s = &plan.stats;
    eprintln!(
        "searched {} candidates ({} infeasible) in {:.3} s",
        s.candidates_evaluated,
        s.candidates_infeasible,
        s.wall_time.as_secs_f64()
    );
    if !s.exact_ties.is_empty() {
        eprintln!("exact ties between strategies, kept the first: {}", s.exact_ties.join(", "));
    }
    Ok(plan)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Plan(args) => {
            let model = load_model(&args.common.model)?;
            let arch = load_arch(args.common.arch.as_deref())?;
            let plan = run_plan(&args, &model, &arch)?;
            print!("{}", plan_table(&plan));
            if let Some(out) = &args.common.out {
                let file = PlanFile::new(&model, &arch, &plan);
                fs::write(out, file.to_json()).with_context(|| format!("writing {}", out.display()))?;
            }
        }
        Command::Roofline(args) => {
            let model = load_model(&args.common.model)?;
            let arch = load_arch(args.common.arch.as_deref())?;
            let plan = run_plan(&args, &model, &arch)?;
            let points = roofline_points(&model, &arch, &plan);
            emit(args.common.out.as_deref(), &roofline_csv(&points)?)?;
        }
        Command::Compare(args) => {
            let model = load_model(&args.model)?;
            let arch = load_arch(args.arch.as_deref())?;
            let table = compare_strategies(&model, &arch, threads(args.threads)?).map_err(search_failure)?;
            for gap in &table.gaps {
                eprintln!("infeasible: {gap}");
            }
            emit(args.out.as_deref(), &compare_csv(&table)?)?;
        }
        Command::Breakdown(args) => {
            let model = load_model(&args.model)?;
            let arch = load_arch(args.arch.as_deref())?;
            let mut opts = SearchOptions {
                threads: threads(args.threads)?,
                ..SearchOptions::default()
            };
            let burst = tso(&model, &arch, &opts).map_err(search_failure)?;
            opts.model = CostModel::NoBurst;
            let noburst = tso(&model, &arch, &opts).map_err(search_failure)?;
            let rows = breakdown_rows(&model, &arch, &burst, &noburst);
            emit(args.out.as_deref(), &breakdown_csv(&rows)?)?;
        }
        Command::Simulate(args) => {
            let model = load_model(&args.model)?;
            let arch = load_arch(args.arch.as_deref())?;
            let plan = parse_plan(&read(&args.plan)?).with_context(|| format!("in {}", args.plan.display()))?;
            let checks = verify_plan(&model, &arch, &plan)?;
            print!("{}", verification_table(&checks));
            if let (Some(name), Some(path)) = (&args.trace_layer, &args.trace) {
                write_trace(&model, &arch, &plan, name, path)?;
            }
            let bad: Vec<_> = checks.iter().filter(|c| !c.ok()).map(|c| c.layer.as_str()).collect();
            if !bad.is_empty() {
                return Err(fail(3, anyhow!("verification failed for: {}", bad.join(", "))));
            }
        }
    }
    Ok(())
}

fn write_trace(model: &ModelSpec, arch: &ArchConfig, plan: &PlanFile, name: &str, path: &Path) -> anyhow::Result<()> {
    let entry = plan
        .entries
        .iter()
        .find(|e| e.layer == name)
        .ok_or_else(|| anyhow!("no layer `{name}` in the plan"))?;
    let conv = model.layer(name).ok_or_else(|| anyhow!("no layer `{name}` in the model"))?;
    let slice = tle_slicing(entry.tle_partition, conv, arch.n_tle)?;
    let tile = gen_tile(entry.t_m, entry.t_n, entry.t_r, entry.t_c, entry.schedule, conv, arch)
        .map_err(|f| anyhow!("plan tile for `{name}` does not fit: {f}"))?;
    let trace = simulate_schedule(entry.schedule, conv, &slice, &tile, arch);
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    trace
        .write_text(std::io::BufWriter::new(file))
        .with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
