use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use semigraph_core::environment::Environment;
use semigraph_core::harness::{replicate, with_jobs, ExperimentConfig, GridSpec, Manifest};
use semigraph_core::policies::PolicyKind;
use semigraph_core::report::{read_trace_csv, write_bench, write_json};
use semigraph_core::seed::replication_seed;
use semigraph_core::verify::{all_suites, estimator_error_curve, mc_two_arm};

const OUT_ENV: &str = "SEMIGRAPH_OUT";

#[derive(Parser)]
#[command(name = "semigraph", version, about = "Graph-regularized semi-parametric bandit simulations")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic environment and write its snapshot.
    GenEnv(Common),
    /// One replication: tune, evaluate, write traces and summaries.
    Run(RunArgs),
    /// Full pipeline: tune on t0 rounds, evaluate T rounds, replicate, summarize.
    Bench(BenchArgs),
    /// Randomized checks of the matrix inequalities and estimators.
    Verify(VerifyArgs),
    /// Per-user Ψ and final regret from stored trace CSVs.
    Diag(DiagArgs),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML) or a manifest from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory. Defaults to $SEMIGRAPH_OUT/<subcommand>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Comma-separated policies; overrides the config.
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<PolicyKind>>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Fixed exploration scale for every tunable policy (skips tuning).
    #[arg(long, requires = "lambda")]
    v: Option<f64>,
    /// Fixed graph strength / ridge for every tunable policy (skips tuning).
    #[arg(long, requires = "v")]
    lambda: Option<f64>,
    /// Also write runtime.csv with wall-clock seconds per run.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Also write runtime.csv with wall-clock seconds per run.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Trials per randomized suite.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DiagArgs {
    /// Trace CSV files, or directories searched for *.csv.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, Failure> {
    match command {
        Command::GenEnv(c) => gen_env(c),
        Command::Run(a) => run(a),
        Command::Bench(a) => bench(a),
        Command::Verify(a) => verify(a),
        Command::Diag(a) => diag(a),
    }
}

fn resolve_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path).map_err(usage)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(policies) = &common.policies {
        config.policies = policies.clone();
    }
    config.validate().map_err(usage)?;
    Ok(config)
}

fn out_dir(common: &Common, subcommand: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| {
        let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("semigraph-out"), PathBuf::from);
        root.join(subcommand)
    })
}

fn prepare(dir: &Path, command: &str, config: &ExperimentConfig) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Manifest::new(command, config)
        .write(&dir.join("manifest.toml"))
        .context("writing manifest")?;
    Ok(())
}

fn gen_env(common: Common) -> Result<ExitCode, Failure> {
    let config = resolve_config(&common)?;
    let dir = out_dir(&common, "gen-env");
    prepare(&dir, "gen-env", &config)?;
    let seed = replication_seed(config.seed, 0);
    let env = Environment::generate(&config.env, seed).context("environment")?;
    write_json(&env.to_snapshot(seed), &dir.join("env.json")).context("report")?;
    std::fs::write(dir.join("env.edges"), env.graph.to_edge_list()).context("writing edge list")?;
    println!(
        "environment: n={} arms={} dim={} edges={} -> {}",
        env.params.n,
        env.params.arms,
        env.params.dim,
        env.graph.edge_count(),
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn execute(common: &Common, command: &str, config: &ExperimentConfig, timing: bool) -> Result<ExitCode, Failure> {
    let dir = out_dir(common, command);
    prepare(&dir, command, config)?;
    let result = with_jobs(common.jobs, || replicate(config))
        .map_err(usage)?
        .context("harness")?;
    write_bench(&result, config, &dir, timing).context("report")?;
    for kind in result.policies() {
        let finals: Vec<f64> = result.traces(kind).iter().map(|t| t.final_regret()).collect();
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        println!("{:<12} final cumulative regret {:.4}", kind.name(), mean);
    }
    println!("outputs in {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn run(args: RunArgs) -> Result<ExitCode, Failure> {
    let mut config = resolve_config(&args.common)?;
    config.replications = 1;
    if let (Some(v), Some(lambda)) = (args.v, args.lambda) {
        config.grid = GridSpec {
            v: vec![v],
            lambda: vec![lambda],
        };
        config.t0 = 0;
        config.validate().map_err(usage)?;
    }
    execute(&args.common, "run", &config, args.timing)
}

fn bench(args: BenchArgs) -> Result<ExitCode, Failure> {
    let config = resolve_config(&args.common)?;
    execute(&args.common, "bench", &config, args.timing)
}

fn verify(args: VerifyArgs) -> Result<ExitCode, Failure> {
    if args.trials == 0 {
        return Err(usage(anyhow::anyhow!("--trials must be >= 1")));
    }
    let mut failed = 0;
    for report in all_suites(args.trials, args.seed) {
        println!(
            "{} {:<45} trials={} violations={} worst_margin={:.3e}",
            if report.passed() { "PASS" } else { "FAIL" },
            report.name,
            report.trials,
            report.violations,
            report.worst_margin
        );
        failed += usize::from(!report.passed());
    }

    let m = 10_000;
    let phi = 0.691_462_461_274_013_1_f64;
    let band = 4.0 * (phi * (1.0 - phi) / m as f64).sqrt();
    let misses = (0..20u64).filter(|&s| (mc_two_arm(m, args.seed + s) - phi).abs() > band).count();
    println!(
        "{} {:<45} trials=20 violations={misses}",
        if misses == 0 { "PASS" } else { "FAIL" },
        "Monte Carlo two-arm probability"
    );
    failed += usize::from(misses > 0);

    let spec = semigraph_core::environment::EnvSpec {
        n: 4,
        arms: 4,
        dim: 8,
        scenario: semigraph_core::environment::Scenario::Stationary,
        ..Default::default()
    };
    let (mut early, mut late) = (0.0, 0.0);
    for s in 0..10u64 {
        let curve = estimator_error_curve(&spec, 1.0, &[500, 4000], args.seed + s).context("environment")?;
        early += curve[0].1;
        late += curve[1].1;
    }
    let ratio = late / early;
    println!(
        "{} {:<45} error ratio T=4000/T=500 {:.3}",
        if ratio < 0.6 { "PASS" } else { "FAIL" },
        "estimator consistency",
        ratio
    );
    failed += usize::from(ratio >= 0.6);

    println!("{failed} check(s) failed");
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn collect_csv(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "csv"))
                .collect();
            found.sort();
            out.extend(found);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            return Err(usage(anyhow::anyhow!("no such file or directory: {}", p.display())));
        }
    }
    Ok(out)
}

fn diag(args: DiagArgs) -> Result<ExitCode, Failure> {
    for path in collect_csv(&args.paths)? {
        let rows = read_trace_csv(&path).with_context(|| format!("reading {}", path.display()))?;
        let final_regret = rows.last().map_or(0.0, |r| r.cum_regret);
        let mut sums: BTreeMap<usize, (f64, f64, u64)> = BTreeMap::new();
        for r in &rows {
            let e = sums.entry(r.user).or_default();
            e.2 += 1;
            if let (Some(a), Some(b)) = (r.psi_num, r.psi_den) {
                e.0 += a;
                e.1 += b;
            }
        }
        println!("{}: rounds={} final_regret={final_regret:.6}", path.display(), rows.len());
        for (user, (num, den, served)) in sums {
            let psi = if den > 0.0 { format!("{:.6}", num / den) } else { "absent".to_string() };
            println!("  user {user:>4} served={served:>7} psi={psi}");
        }
    }
    Ok(ExitCode::SUCCESS)
}
