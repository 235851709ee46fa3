//! Per-command argument resolution and execution.
//!
//! Resolving a command validates every parameter and returns a [`Plan`];
//! nothing is simulated or written until the plan's job runs.

use std::io::Write;

use anyhow::{anyhow, Result};
use clap::Args;
use ray_knight::besq::marginal_from_zero_cdf;
use ray_knight::excursion::{independence_run, IndependenceConfig};
use ray_knight::local_time::{write_profile_csv, LevelGrid, LocalTimeField};
use ray_knight::path_engine::{build_mu_process, simulate_driver, write_path_csv};
use ray_knight::two_sided::{
    r_zero_reduction, shift_consistency, simulate_two_sided, verify_main_bis, ForwardPolicy,
    MainBisConfig, TwoSidedConfig,
};
use ray_knight::verify::stats::sorted;
use ray_knight::verify::{
    first_law_run, gaussianity_run, qv_run, sde_residual, second_law_run, FirstLawConfig,
    GaussianityConfig, Identity, QvConfig, ResidualConfig, ResidualRun, SecondLawConfig,
};
use ray_knight::white_noise::{Rect, StepFunction2D};

use crate::config::{parse_list, Resolver};
use crate::output::RunDir;

pub type Job = Box<dyn FnOnce(&mut RunDir) -> Result<()>>;

pub struct Plan {
    pub seed: u64,
    pub job: Job,
}

#[derive(Debug)]
pub enum Failure {
    /// Exit status 2.
    Usage(anyhow::Error),
    /// Exit status 1.
    Runtime(anyhow::Error),
}

/// Parameter errors raised by the library are usage errors wherever they
/// surface.
pub fn classify(e: anyhow::Error) -> Failure {
    match e.downcast_ref::<ray_knight::Error>() {
        Some(ray_knight::Error::Parameter { .. }) => Failure::Usage(e),
        _ => Failure::Runtime(e),
    }
}

fn dx_default(dt: f64) -> f64 {
    4.0 * dt.sqrt()
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Bin width of the local-time profile (default 4√dt).
    #[arg(long)]
    dx: Option<f64>,
}

pub fn simulate(a: SimulateArgs, r: &mut Resolver) -> Result<Plan> {
    let mu = r.req("mu", a.mu)?;
    let dt = r.or("dt", a.dt, 1e-3)?;
    let steps = r.or("steps", a.steps, 1000)?;
    let seed = r.or("seed", a.seed, 0)?;
    let dx = r.or("dx", a.dx, dx_default(dt))?;
    if !(dx > 0.0) {
        return Err(anyhow!(
            "invalid parameter `dx`: must be positive, got {dx}"
        ));
    }
    let driver = simulate_driver(seed, dt, steps)?;
    let path = build_mu_process(&driver, mu)?;
    Ok(Plan {
        seed,
        job: Box::new(move |dir| {
            dir.write("path.csv", |w| write_path_csv(w, &driver, &path))?;
            let lo = path.x.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = path.x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let grid = LevelGrid::covering(lo - dx, hi + dx, dx)?;
            let field = LocalTimeField::from_samples(&path.x, dt, grid);
            let profile = field.row(field.n_steps());
            dir.write("local_time.csv", |w| {
                write_profile_csv(w, &field.grid, &profile)
            })
        }),
    })
}

#[derive(Debug, Args)]
pub struct Rk2Args {
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    b: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    dx: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Gate the KS distance at this value (default 0.03 for μ = 1 only).
    #[arg(long)]
    ks_threshold: Option<f64>,
}

pub fn rk2(a: Rk2Args, r: &mut Resolver) -> Result<Plan> {
    let mu = r.req("mu", a.mu)?;
    let b = r.or("b", a.b, -1.0)?;
    let h = r.or("h", a.h, 0.5)?;
    let n = r.or("n", a.n, 20_000)?;
    let dt = r.or("dt", a.dt, 1e-4)?;
    let seed = r.or("seed", a.seed, 0)?;
    let mut cfg = SecondLawConfig::new(mu, b, h, n, dt, seed);
    cfg.dx = r.or("dx", a.dx, cfg.dx)?;
    cfg.margin = 4.0 * cfg.dx;
    if let Some(t) = r.opt("ks_threshold", a.ks_threshold)? {
        cfg.ks_threshold = Some(t);
    }
    cfg.validate()?;
    Ok(Plan {
        seed,
        job: Box::new(move |dir| {
            let (report, ls) = second_law_run(&cfg)?;
            dir.report(&report)?;
            write_column(dir, "samples.csv", "local_time", &ls)?;
            let xs = sorted(&ls);
            let cdf = xs
                .iter()
                .map(|&x| marginal_from_zero_cdf(2.0 / mu, h, x))
                .collect::<ray_knight::Result<Vec<_>>>()?;
            let m = xs.len() as f64;
            dir.write("cdf.csv", |w| {
                writeln!(w, "x,empirical,theory")?;
                for (i, (x, f)) in xs.iter().zip(&cdf).enumerate() {
                    writeln!(w, "{x},{},{f}", (i + 1) as f64 / m)?;
                }
                Ok(())
            })
        }),
    })
}

#[derive(Debug, Args)]
pub struct Rk1Args {
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    dx: Option<f64>,
    /// Time step of the Euler BESQ oracle.
    #[arg(long)]
    oracle_dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn rk1(a: Rk1Args, r: &mut Resolver) -> Result<Plan> {
    let mu = r.req("mu", a.mu)?;
    let level = r.or("a", a.a, 1.0)?;
    let h = r.or("h", a.h, 0.3)?;
    let n = r.or("n", a.n, 10_000)?;
    let dt = r.or("dt", a.dt, 1e-4)?;
    let seed = r.or("seed", a.seed, 0)?;
    let mut cfg = FirstLawConfig::new(mu, level, h, n, dt, seed);
    cfg.dx = r.or("dx", a.dx, cfg.dx)?;
    cfg.margin = 4.0 * cfg.dx;
    cfg.oracle_dt = r.or("oracle_dt", a.oracle_dt, cfg.oracle_dt)?;
    cfg.validate()?;
    Ok(Plan {
        seed,
        job: Box::new(move |dir| {
            let (report, ls, oracle) = first_law_run(&cfg)?;
            dir.report(&report)?;
            write_column(dir, "samples.csv", "local_time", &ls)?;
            write_column(dir, "oracle.csv", "besq", &oracle)?;
            let (sim, orc) = (sorted(&ls), sorted(&oracle));
            if sim.is_empty() || orc.is_empty() {
                return Ok(());
            }
            dir.write("quantiles.csv", |w| {
                writeln!(w, "p,simulated,oracle")?;
                for k in 0..=100 {
                    let p = k as f64 / 100.0;
                    writeln!(w, "{p},{},{}", quantile(&sim, p), quantile(&orc, p))?;
                }
                Ok(())
            })
        }),
    })
}

fn quantile(xs: &[f64], p: f64) -> f64 {
    let i = ((xs.len() - 1) as f64 * p).round() as usize;
    xs[i]
}

fn write_column(dir: &mut RunDir, name: &str, header: &str, xs: &[f64]) -> Result<()> {
    dir.write(name, |w| {
        writeln!(w, "{header}")?;
        for x in xs {
            writeln!(w, "{x}")?;
        }
        Ok(())
    })
}

fn write_residual(dir: &mut RunDir, run: &ResidualRun) -> Result<()> {
    dir.report(&run.report)?;
    dir.write("residual_rows.csv", |w| {
        writeln!(w, "dt,dx,h_max,median_sup,mean_sup,kept,discarded")?;
        for row in &run.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                row.dt, row.dx, row.h_max, row.median_sup, row.mean_sup, row.kept, row.discarded
            )?;
        }
        Ok(())
    })?;
    dir.write("mean_curve.csv", |w| {
        writeln!(w, "h,lhs_mean,rhs_mean,rhs_std_err")?;
        for p in &run.mean_curve {
            writeln!(w, "{},{},{},{}", p.h, p.lhs_mean, p.rhs_mean, p.rhs_std_err)?;
        }
        Ok(())
    })
}

#[derive(Debug, Args)]
pub struct LadderArgs {
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    h_max: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated time steps, coarse to fine.
    #[arg(long, value_parser = parse_ladder)]
    dt_ladder: Option<Ladder>,
    /// Bin width shared by all rungs.
    #[arg(long)]
    dx: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Ladder(Vec<f64>);

fn parse_ladder(s: &str) -> Result<Ladder, String> {
    parse_list(s).map(Ladder).map_err(|e| e.to_string())
}

fn residual_config(
    which: Identity,
    level: f64,
    a: LadderArgs,
    r: &mut Resolver,
) -> Result<(f64, ResidualConfig)> {
    let mu = r.req("mu", a.mu)?;
    let h_max = r.or("h_max", a.h_max, 0.5)?;
    let n = r.or("n", a.n, 1000)?;
    let seed = r.or("seed", a.seed, 0)?;
    let mut cfg = ResidualConfig::new(which, mu, level, h_max, n, seed);
    cfg.dt_ladder = r.list("dt_ladder", a.dt_ladder.map(|l| l.0), cfg.dt_ladder.clone())?;
    cfg.dx = Some(r.or("dx", a.dx, 0.1)?);
    cfg.validate()?;
    Ok((mu, cfg))
}

#[derive(Debug, Args)]
pub struct Sde1Args {
    #[arg(long)]
    a: Option<f64>,
    #[command(flatten)]
    ladder: LadderArgs,
}

pub fn sde1(a: Sde1Args, r: &mut Resolver) -> Result<Plan> {
    let level = r.or("a", a.a, 1.0)?;
    let (mu, cfg) = residual_config(Identity::First, level, a.ladder, r)?;
    let finest = cfg.dt_ladder[cfg.dt_ladder.len() - 1];
    let qv = QvConfig::new(mu, level, cfg.h_max, cfg.n, finest, cfg.master_seed);
    qv.validate()?;
    Ok(Plan {
        seed: cfg.master_seed,
        job: Box::new(move |dir| {
            let run = sde_residual(&cfg)?;
            write_residual(dir, &run)?;
            let (report, ratios) = qv_run(&qv)?;
            dir.report(&report)?;
            write_column(dir, "qv_ratios.csv", "ratio", &ratios)
        }),
    })
}

#[derive(Debug, Args)]
pub struct Sde2Args {
    #[arg(long, allow_hyphen_values = true)]
    b: Option<f64>,
    #[command(flatten)]
    ladder: LadderArgs,
}

pub fn sde2(a: Sde2Args, r: &mut Resolver) -> Result<Plan> {
    let level = r.or("b", a.b, -1.0)?;
    let (_, cfg) = residual_config(Identity::Second, level, a.ladder, r)?;
    Ok(Plan {
        seed: cfg.master_seed,
        job: Box::new(move |dir| write_residual(dir, &sde_residual(&cfg)?)),
    })
}

#[derive(Debug, Args)]
pub struct WhitenoiseArgs {
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    dx: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// One integrand `l0,l1,x0,x1[,weight]` per flag; repeatable.
    /// Defaults to [0,1)×[−1,0) and [0,1)×[0,1).
    #[arg(long = "rect", allow_hyphen_values = true)]
    rects: Vec<String>,
}

fn parse_rect(s: &str) -> Result<StepFunction2D> {
    let v = parse_list(s)?;
    let (l0, l1, x0, x1, weight) = match v[..] {
        [l0, l1, x0, x1] => (l0, l1, x0, x1, 1.0),
        [l0, l1, x0, x1, w] => (l0, l1, x0, x1, w),
        _ => {
            return Err(anyhow!(
                "invalid parameter `rect`: expected l0,l1,x0,x1[,weight], got `{s}`"
            ))
        }
    };
    Ok(StepFunction2D::new(vec![Rect {
        l0,
        l1,
        x0,
        x1,
        weight,
    }])?)
}

pub fn whitenoise(a: WhitenoiseArgs, r: &mut Resolver) -> Result<Plan> {
    let mu = r.req("mu", a.mu)?;
    let n = r.or("n", a.n, 10_000)?;
    let dt = r.or("dt", a.dt, 1e-3)?;
    let dx = r.or("dx", a.dx, 0.05)?;
    let seed = r.or("seed", a.seed, 0)?;
    let mut specs = r.strings("rect", a.rects);
    if specs.is_empty() {
        specs = vec!["0,1,-1,0".into(), "0,1,0,1".into()];
    }
    let gs = specs
        .iter()
        .map(|s| parse_rect(s))
        .collect::<Result<Vec<_>>>()?;
    let cfg = GaussianityConfig::new(mu, gs, n, dt, dx, seed);
    cfg.validate()?;
    let k = cfg.gs.len();
    Ok(Plan {
        seed,
        job: Box::new(move |dir| {
            let (report, cols) = gaussianity_run(&cfg)?;
            dir.report(&report)?;
            dir.write("samples.csv", |w| {
                let header: Vec<String> = (0..k).map(|j| format!("g{j}")).collect();
                writeln!(w, "{}", header.join(","))?;
                let rows = cols.first().map_or(0, Vec::len);
                for i in 0..rows {
                    let row: Vec<String> = cols.iter().map(|c| c[i].to_string()).collect();
                    writeln!(w, "{}", row.join(","))?;
                }
                Ok(())
            })
        }),
    })
}

#[derive(Debug, Args)]
pub struct IndependenceArgs {
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    x: Option<f64>,
    /// Glued time over which the functionals are read.
    #[arg(long)]
    u: Option<f64>,
    #[arg(long)]
    offset: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn independence(a: IndependenceArgs, r: &mut Resolver) -> Result<Plan> {
    let d = IndependenceConfig::default();
    let cfg = IndependenceConfig {
        mu: r.req("mu", a.mu)?,
        x: r.or("x", a.x, d.x)?,
        u: r.or("u", a.u, d.u)?,
        offset: r.or("offset", a.offset, d.offset)?,
        n: r.or("n", a.n, d.n)?,
        dt: r.or("dt", a.dt, d.dt)?,
        master_seed: r.or("seed", a.seed, 0)?,
        cap: d.cap,
    };
    cfg.validate()?;
    Ok(Plan {
        seed: cfg.master_seed,
        job: Box::new(move |dir| {
            let (report, samples) = independence_run(&cfg)?;
            dir.report(&report)?;
            dir.write("samples.csv", |w| {
                writeln!(w, "below,above,above_early")?;
                for s in &samples {
                    writeln!(w, "{},{},{}", s.below, s.above, s.above_early)?;
                }
                Ok(())
            })
        }),
    })
}

#[derive(Debug, Args)]
pub struct TwoSidedArgs {
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    r: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    h_max: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    dx: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Paths used for the shifted-versus-global comparison.
    #[arg(long)]
    shift_paths: Option<usize>,
}

pub fn two_sided(a: TwoSidedArgs, r: &mut Resolver) -> Result<Plan> {
    let mu = r.req("mu", a.mu)?;
    let shift = r.or("r", a.r, 0.5)?;
    let level = r.or("a", a.a, 1.0)?;
    let h_max = r.or("h_max", a.h_max, 0.4)?;
    let n = r.or("n", a.n, 1000)?;
    let dt = r.or("dt", a.dt, 1e-4)?;
    let seed = r.or("seed", a.seed, 0)?;
    let mut cfg = MainBisConfig::new(mu, shift, level, h_max, n, dt, seed);
    cfg.dx = r.or("dx", a.dx, cfg.dx)?;
    let shift_paths = r.or("shift_paths", a.shift_paths, 20)?;
    cfg.validate()?;
    let steps = (1.0 / dt).ceil() as usize;
    let dump = TwoSidedConfig::new(mu, dt, shift.max(cfg.dx), ForwardPolicy::Steps(steps));
    Ok(Plan {
        seed,
        job: Box::new(move |dir| {
            dir.report(&verify_main_bis(&cfg)?)?;
            dir.report(&r_zero_reduction(&cfg)?)?;
            dir.report(&shift_consistency(&cfg, shift_paths, steps)?)?;
            let path = simulate_two_sided(&dump, seed, 0)?;
            dir.write("path.csv", |w| path.write_csv(w))
        }),
    })
}
