mod commands;
mod config;
mod output;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use commands::{Failure, Plan};
use config::{ConfigFile, Resolver};
use output::RunDir;

#[derive(Debug, Parser)]
#[command(
    name = "ray-knight",
    version,
    about = "Simulate μ-processes and verify their Ray–Knight theorems by Monte Carlo"
)]
struct Cli {
    /// Plain-text `key = value` file; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output root (default: $RAY_KNIGHT_OUT, else ./runs).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one path and dump it with its final local-time profile.
    Simulate(commands::SimulateArgs),
    /// Law of L(τ_a^0, −h) against the absorbed BESQ(2 − 2/μ) oracle.
    #[command(name = "rk1-law")]
    Rk1Law(commands::Rk1Args),
    /// Law of L(T_b, b + h) against Gamma(1/μ, 2h).
    #[command(name = "rk2-law")]
    Rk2Law(commands::Rk2Args),
    /// Pathwise residual of the first white-noise SDE and its
    /// quadratic-variation identity.
    Sde1(commands::Sde1Args),
    /// Pathwise residual of the second white-noise SDE.
    Sde2(commands::Sde2Args),
    /// Gaussianity and isometry of W on rectangles.
    Whitenoise(commands::WhitenoiseArgs),
    /// Independence of the paths glued below and above a level.
    Independence(commands::IndependenceArgs),
    /// Two-sided process: shifted identities, r = 0 reduction and the
    /// shifted-versus-global noise integral.
    #[command(name = "two-sided")]
    TwoSided(commands::TwoSidedArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Rk1Law(_) => "rk1-law",
            Command::Rk2Law(_) => "rk2-law",
            Command::Sde1(_) => "sde1",
            Command::Sde2(_) => "sde2",
            Command::Whitenoise(_) => "whitenoise",
            Command::Independence(_) => "independence",
            Command::TwoSided(_) => "two-sided",
        }
    }
}

fn plan(cmd: Command, r: &mut Resolver) -> Result<Plan, anyhow::Error> {
    match cmd {
        Command::Simulate(a) => commands::simulate(a, r),
        Command::Rk1Law(a) => commands::rk1(a, r),
        Command::Rk2Law(a) => commands::rk2(a, r),
        Command::Sde1(a) => commands::sde1(a, r),
        Command::Sde2(a) => commands::sde2(a, r),
        Command::Whitenoise(a) => commands::whitenoise(a, r),
        Command::Independence(a) => commands::independence(a, r),
        Command::TwoSided(a) => commands::two_sided(a, r),
    }
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p).map_err(Failure::Usage)?,
        None => ConfigFile::default(),
    };
    let name = cli.command.name();
    let mut resolver = Resolver::new(&file);
    let plan = plan(cli.command, &mut resolver).map_err(Failure::Usage)?;
    let unused = resolver.unused();
    if !unused.is_empty() {
        return Err(Failure::Usage(anyhow::anyhow!(
            "config keys not used by `{name}`: {}",
            unused.join(", ")
        )));
    }

    let workers = match cli.workers {
        Some(w) => Some(w),
        None => file
            .get("workers")
            .map(|s| s.parse::<usize>())
            .transpose()
            .map_err(|e| Failure::Usage(anyhow::anyhow!("config key `workers`: {e}")))?,
    };
    if let Some(w) = workers {
        if w == 0 {
            return Err(Failure::Usage(anyhow::anyhow!(
                "--workers must be positive"
            )));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Failure::Runtime(e.into()))?;
    }
    let root = cli
        .out
        .or_else(|| file.get("out").map(PathBuf::from))
        .or_else(|| std::env::var_os("RAY_KNIGHT_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));

    let mut echo = serde_json::Map::new();
    echo.insert("command".into(), name.into());
    for (k, v) in &resolver.resolved {
        echo.insert(k.clone(), v.clone());
    }
    if let Some(w) = workers {
        echo.insert("workers".into(), w.into());
    }
    let echo = Value::Object(echo);

    let mut dir =
        RunDir::create(&root, &format!("{name}-seed{}", plan.seed)).map_err(Failure::Runtime)?;
    let outcome = (plan.job)(&mut dir);
    if let Err(e) = &outcome {
        let msg = format!("{e:#}");
        dir.write("error.txt", |w| writeln!(w, "{msg}"))
            .map_err(Failure::Runtime)?;
    }
    let pass = outcome.is_ok() && dir.all_pass();
    let path = dir.finish(name, &echo).map_err(Failure::Runtime)?;
    println!("{}", path.display());
    match outcome {
        Ok(()) => Ok(pass),
        Err(e) => Err(commands::classify(e)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
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
