use anyhow::{bail, Context, Result};
use apadmm::algorithms::{
    run, Algorithm, DelayBounds, Enforcement, Init, RhoSpec, RunOutcome, Termination,
};
use apadmm::benchmark::{self, Campaign, Scale, SparsePcaSpec};
use apadmm::diagnostics::{self, CheckStatus, ResidualTolerances};
use apadmm::stepsize::{self, Curvature};
use apadmm::trace::IterationTrace;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

mod config;

use config::RunFile;

#[derive(Parser)]
#[command(
    name = "apadmm",
    version,
    about = "Asynchronous proximal ADMM on a simulated star network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one sparse-PCA instance and write its trace.
    #[command(allow_negative_numbers = true)]
    Run(RunArgs),
    /// Print the smallest certified penalty for a component.
    #[command(allow_negative_numbers = true)]
    Certify(CertifyArgs),
    /// Run a benchmark campaign and print the results table as CSV.
    Bench(BenchArgs),
    /// Check the descent-analysis inequalities on a saved full trace.
    Check {
        /// JSON file written by `run --full-trace`.
        trace: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with `[instance]` and `[run]` tables.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: desk, table2_sync or table2_sync_desk.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long = "algo")]
    algorithm: Option<Algorithm>,
    /// Penalty: `auto` or a positive number used for every component.
    #[arg(long)]
    rho: Option<String>,
    /// Run even if the penalty is not certified.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Staleness bound for every component.
    #[arg(long = "T")]
    delay_bound: Option<usize>,
    /// `enforce` or `observe`.
    #[arg(long)]
    enforcement: Option<String>,
    /// `random` or `zero`.
    #[arg(long)]
    init: Option<String>,
    /// Write the per-iteration CSV here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write a JSON trace with full iterates here (for `check`).
    #[arg(long)]
    full_trace: Option<PathBuf>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Args)]
struct CertifyArgs {
    /// Gradient Lipschitz constant.
    #[arg(long = "L")]
    lipschitz: f64,
    /// Staleness bound.
    #[arg(long = "T")]
    delay_bound: usize,
    #[arg(long, default_value = "general")]
    class: Curvature,
    /// Certify this penalty instead of searching for the smallest one.
    #[arg(long)]
    rho: Option<f64>,
}

#[derive(Args)]
struct BenchArgs {
    /// table1, table2, table3 or table4.
    #[arg(
        long,
        conflicts_with = "campaign",
        required_unless_present = "campaign"
    )]
    preset: Option<String>,
    /// Desk-scale sizes (default).
    #[arg(long, conflicts_with = "paper")]
    desk: bool,
    /// Full-size instances; slow.
    #[arg(long)]
    paper: bool,
    /// TOML campaign file.
    #[arg(long)]
    campaign: Option<PathBuf>,
    /// Override the number of seeds per cell.
    #[arg(long)]
    seeds: Option<usize>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// What `run --full-trace` saves: enough to rebuild the problem and rerun
/// the residual checks offline.
#[derive(Serialize, Deserialize)]
struct FullTrace {
    instance: SparsePcaSpec,
    algorithm: Algorithm,
    rho: Vec<f64>,
    /// Staleness bounds the penalties were certified for.
    certified_bounds: Vec<usize>,
    lipschitz: Vec<f64>,
    trace: IterationTrace,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    algorithm: Algorithm,
    termination: &'a Termination,
    iterations: usize,
    final_e: f64,
    rho: &'a [f64],
    delay_bounds: &'a [usize],
    certified: bool,
    descent_violations: usize,
    staleness_violations: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Certify(args) => cmd_certify(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Check { trace } => cmd_check(&trace),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn effective_config(args: &RunArgs) -> Result<RunFile> {
    let mut file = match (&args.config, &args.preset) {
        (Some(path), _) => RunFile::load(path)?,
        (None, Some(name)) => RunFile::preset(name)?,
        (None, None) => RunFile::preset("desk")?,
    };
    let run = &mut file.run;
    if let Some(a) = args.algorithm {
        run.algorithm = a;
    }
    if let Some(r) = &args.rho {
        run.rho = match r.as_str() {
            "auto" => RhoSpec::Auto,
            v => RhoSpec::Uniform(
                v.parse()
                    .with_context(|| format!("--rho expects `auto` or a number, got `{v}`"))?,
            ),
        };
    }
    if args.force {
        run.force = true;
    }
    if let Some(s) = args.seed {
        run.seed = s;
    }
    if let Some(m) = args.max_iters {
        run.max_iters = m;
    }
    if let Some(e) = args.epsilon {
        run.epsilon = e;
    }
    if let Some(t) = args.delay_bound {
        run.delay_bounds = DelayBounds::Uniform(t);
    }
    if let Some(e) = &args.enforcement {
        run.enforcement = match e.as_str() {
            "enforce" => Enforcement::Enforce,
            "observe" => Enforcement::Observe,
            other => bail!("--enforcement expects `enforce` or `observe`, got `{other}`"),
        };
    }
    if let Some(i) = &args.init {
        run.init = match i.as_str() {
            "random" => Init::Random,
            "zero" => Init::Zero,
            other => bail!("--init expects `random` or `zero`, got `{other}`"),
        };
    }
    if args.full_trace.is_some() {
        run.record_snapshots = true;
    }
    Ok(file)
}

fn exit_code(termination: &Termination) -> u8 {
    match termination {
        Termination::Converged => 0,
        Termination::MaxIters => 2,
        Termination::StalenessViolation { .. } => 3,
        Termination::InfeasibleStepsize { .. } => 4,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn cmd_run(args: RunArgs) -> Result<u8> {
    let file = effective_config(&args)?;
    if args.dump_config {
        print!("{}", file.to_toml()?);
        return Ok(0);
    }
    let problem = file.instance.generate()?;
    let outcome: RunOutcome = run(&problem, &file.run)?;

    if let Some(path) = &args.trace {
        let mut out = create(path)?;
        outcome.trace.write_csv(&mut out)?;
        out.flush()?;
    }
    if let Some(path) = &args.full_trace {
        let full = FullTrace {
            instance: file.instance.clone(),
            algorithm: file.run.algorithm,
            rho: outcome.rho.clone(),
            certified_bounds: outcome.certified_bounds.clone(),
            lipschitz: problem.lipschitz(),
            trace: outcome.trace.clone(),
        };
        let mut out = create(path)?;
        serde_json::to_writer(&mut out, &full)?;
        out.flush()?;
    }

    let descent = diagnostics::descent_check(&outcome.trace, ResidualTolerances::default().descent);
    let summary = RunSummary {
        algorithm: file.run.algorithm,
        termination: &outcome.termination,
        iterations: outcome.iterations,
        final_e: outcome.final_e,
        rho: &outcome.rho,
        delay_bounds: &outcome.delay_bounds,
        certified: outcome.certificates.iter().all(|c| c.feasible),
        descent_violations: descent.failed_at.len(),
        staleness_violations: outcome.staleness_violations,
    };
    writeln!(
        std::io::stdout().lock(),
        "{}",
        serde_json::to_string_pretty(&summary)?
    )?;
    if outcome.termination != Termination::Converged {
        eprintln!("{}", outcome.termination);
    }
    Ok(exit_code(&outcome.termination))
}

fn cmd_certify(args: CertifyArgs) -> Result<u8> {
    let (l, t, class) = (args.lipschitz, args.delay_bound, args.class);
    if !(l.is_finite() && l > 0.0) {
        bail!("--L must be a positive finite number, got {l}");
    }
    let rho = match args.rho {
        Some(r) => r,
        None => stepsize::min_rho(l, t, class, 1e-9 * l)?,
    };
    let cert = stepsize::certify(l, t, rho, class)?;
    println!("class: {class}");
    println!("rule: {}", class.rule());
    println!("L: {l}");
    println!("T: {t}");
    println!("rho: {}", cert.rho);
    println!("alpha: {}", cert.alpha);
    println!("feasible: {}", cert.feasible);
    if let Some(reason) = cert.failure_reason() {
        println!("reason: {reason}");
        return Ok(4);
    }
    Ok(0)
}

fn cmd_bench(args: BenchArgs) -> Result<u8> {
    let mut campaign = match (&args.preset, &args.campaign) {
        (Some(name), _) => {
            let scale = if args.paper {
                Scale::Paper
            } else {
                Scale::Desk
            };
            benchmark::preset(name, scale)?
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<Campaign>(&text)
                .with_context(|| format!("invalid campaign {}", path.display()))?
        }
        (None, None) => bail!("give --preset or --campaign"),
    };
    if let Some(s) = args.seeds {
        campaign.seeds = s;
    }
    let results = campaign.run()?;
    match &args.out {
        Some(path) => {
            let mut out = create(path)?;
            benchmark::write_results_csv(&results, &mut out)?;
            out.flush()?;
        }
        None => benchmark::write_results_csv(&results, std::io::stdout().lock())?,
    }
    Ok(0)
}

fn cmd_check(path: &Path) -> Result<u8> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let full: FullTrace = serde_json::from_str(&text).with_context(|| {
        format!(
            "{} is not a full trace written by `run --full-trace`",
            path.display()
        )
    })?;
    if full.trace.snapshots.is_empty() {
        bail!(
            "{} has no state snapshots; checks need per-iteration iterates (write it with `run --full-trace`)",
            path.display()
        );
    }
    let problem = full.instance.generate()?;
    let drift = problem
        .lipschitz()
        .iter()
        .zip(&full.lipschitz)
        .map(|(a, b)| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    if drift > 1e-12 {
        bail!("regenerated instance does not match the trace (Lipschitz constants differ)");
    }
    let report = diagnostics::lemma_residuals(
        &problem,
        &full.trace,
        &full.rho,
        &full.certified_bounds,
        &ResidualTolerances::default(),
    )?;
    for c in &report.checks {
        let status = match c.status {
            CheckStatus::Passed => "PASS",
            CheckStatus::Failed => "FAIL",
            CheckStatus::Skipped => "SKIP",
        };
        let slack = c
            .worst_slack
            .map_or("-".to_string(), |s| format!("{s:.3e}"));
        let mut line = format!(
            "{status} {} checked={} worst_slack={slack}",
            c.name, c.checked
        );
        if let Some(first) = c.failed_at.first() {
            line.push_str(&format!(
                " failures={} first_failure_iter={first}",
                c.failed_at.len()
            ));
        }
        if let Some(note) = &c.note {
            line.push_str(&format!(" ({note})"));
        }
        println!("{line}");
    }
    Ok(if report.all_passed() { 0 } else { 1 })
}
