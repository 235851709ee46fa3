//! Acceptance criteria at desk scale. Prints one PASS/FAIL line per
//! criterion and exits nonzero if any fails.
//!
//! Every statistic is recomputed here from the raw samples the library
//! returns; the library's own reports are only used for their samples.

use std::process::ExitCode;
use std::time::Instant;

use ray_knight::excursion::{glue, independence_run, reconstruct, IndependenceConfig, Side};
use ray_knight::local_time::{LevelGrid, LocalTimeField};
use ray_knight::path_engine::{build_mu_process, simulate_driver};
use ray_knight::two_sided::{r_zero_reduction, shift_consistency, verify_main_bis, MainBisConfig};
use ray_knight::verify::{
    first_law_run, gaussianity_run, qv_run, sde_residual, second_law_run, FirstLawConfig,
    GaussianityConfig, Identity, QvConfig, ResidualConfig, SecondLawConfig,
};
use ray_knight::white_noise::{martingale_measure, StepFunction2D};
use statrs::distribution::{ContinuousCDF, Normal};

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

fn se(xs: &[f64]) -> f64 {
    (var(xs) / xs.len() as f64).sqrt()
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn ks_one(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn ks_two(a: &[f64], b: &[f64]) -> f64 {
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

fn corr(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(parts: &[(bool, String)]) -> Outcome {
    Outcome {
        pass: parts.iter().all(|p| p.0),
        detail: parts
            .iter()
            .map(|(ok, s)| format!("{s}{}", if *ok { "" } else { " [x]" }))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn le(name: &str, v: f64, t: f64) -> (bool, String) {
    (v <= t, format!("{name} = {v:.4} ≤ {t:.4}"))
}

fn near(name: &str, v: f64, target: f64, tol: f64) -> (bool, String) {
    (
        (v - target).abs() <= tol,
        format!("{name} = {v:.4} vs {target:.4} ± {tol:.4}"),
    )
}

fn second_law_mu_one() -> Outcome {
    let (h, n) = (0.5, 20_000);
    let cfg = SecondLawConfig::new(1.0, -1.0, h, n, 1e-4, 7);
    let (_, ls) = second_law_run(&cfg).unwrap();
    // Gamma(1/μ, 2h) with μ = 1, h = 1/2 is Exp(1)
    let d = ks_one(&ls, |x| if x <= 0.0 { 0.0 } else { 1.0 - (-x).exp() });
    let m2 = ls.iter().map(|x| x * x).sum::<f64>() / ls.len() as f64;
    outcome(&[
        le("KS D", d, 0.03),
        near("mean", mean(&ls), 1.0, 3.0 * se(&ls)),
        near("E[L²]", m2, 2.0, 0.2),
        near("variance", var(&ls), 1.0, 0.1),
        (ls.len() == n, format!("kept {}/{n}", ls.len())),
    ])
}

fn second_law_mu_dependence() -> Outcome {
    let h = 0.5;
    let mut parts = Vec::new();
    for mu in [0.5, 2.0] {
        let cfg = SecondLawConfig::new(mu, -1.0, h, 20_000, 1e-4, 7);
        let (_, ls) = second_law_run(&cfg).unwrap();
        let (m, v) = (2.0 * h / mu, 4.0 * h * h / mu);
        parts.push(near(&format!("μ={mu} mean"), mean(&ls), m, 3.0 * se(&ls)));
        parts.push(near(&format!("μ={mu} variance"), var(&ls), v, 0.1 * v));
    }
    outcome(&parts)
}

fn first_law() -> Outcome {
    let cfg = FirstLawConfig::new(2.0, 1.0, 0.3, 10_000, 1e-4, 3);
    let (_, ls, oracle) = first_law_run(&cfg).unwrap();
    let d = ks_two(&ls, &oracle);
    let rel = (mean(&ls) - mean(&oracle)).abs() / mean(&oracle);
    let cfg1 = FirstLawConfig::new(1.0, 1.0, 0.1, 10_000, 1e-4, 4);
    let (_, l1, _) = first_law_run(&cfg1).unwrap();
    outcome(&[
        le("μ=2 two-sample KS D", d, 0.04),
        le("μ=2 mean rel. error", rel, 0.05),
        near("μ=1 mean L(τ_1, −0.1)", mean(&l1), 1.0, 3.0 * se(&l1)),
    ])
}

fn sde_residuals() -> Outcome {
    let mut parts = Vec::new();
    for (which, level, h_max) in [(Identity::First, 1.0, 0.5), (Identity::Second, -1.0, 1.0)] {
        let mu = 2.0;
        let cfg = ResidualConfig::new(which, mu, level, h_max, 1000, 11);
        let run = sde_residual(&cfg).unwrap();
        let med: Vec<f64> = run.rows.iter().map(|r| r.median_sup).collect();
        let label = match which {
            Identity::First => "first",
            Identity::Second => "second",
        };
        parts.push((
            med.windows(2).all(|w| w[1] < w[0]),
            format!(
                "{label} medians {} strictly decreasing",
                med.iter()
                    .map(|m| format!("{m:.4}"))
                    .collect::<Vec<_>>()
                    .join(" > ")
            ),
        ));
        let tol = match which {
            Identity::First => 0.15 * level,
            Identity::Second => 0.15 * 2.0 * h_max / mu,
        };
        parts.push(le(
            &format!("{label} finest median"),
            med[med.len() - 1],
            tol,
        ));
    }
    outcome(&parts)
}

fn white_noise() -> Outcome {
    let g1 = StepFunction2D::indicator(0.0, 1.0, -1.0, 0.0).unwrap();
    let g2 = StepFunction2D::indicator(0.0, 1.0, 0.0, 1.0).unwrap();
    let n = 10_000;
    let cfg = GaussianityConfig::new(1.0, vec![g1, g2], n, 1e-3, 0.05, 5);
    let (report, cols) = gaussianity_run(&cfg).unwrap();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let cov = {
        let (m0, m1) = (mean(&cols[0]), mean(&cols[1]));
        cols[0]
            .iter()
            .zip(&cols[1])
            .map(|(a, b)| (a - m0) * (b - m1))
            .sum::<f64>()
            / (cols[0].len() - 1) as f64
    };
    let coverage = ["min_coverage_0", "min_coverage_1"]
        .iter()
        .map(|k| report.metadata[*k].as_f64().unwrap())
        .fold(1.0, f64::min);
    outcome(&[
        le("KS D (g1)", ks_one(&cols[0], |x| normal.cdf(x)), 0.033),
        le("KS D (g2)", ks_one(&cols[1], |x| normal.cdf(x)), 0.033),
        near("variance (g1)", var(&cols[0]), 1.0, 0.05),
        near("variance (g2)", var(&cols[1]), 1.0, 0.05),
        near("covariance", cov, 0.0, 3.0 / (n as f64).sqrt()),
        (coverage >= 0.99, format!("coverage {coverage:.4} ≥ 0.99")),
    ])
}

fn quadratic_variation() -> Outcome {
    let cfg = QvConfig::new(2.0, 1.0, 0.3, 1000, 1e-4, 6);
    let (_, ratios) = qv_run(&cfg).unwrap();
    outcome(&[near("median QV / Σ L·dx", median(&ratios), 1.0, 0.10)])
}

fn structural() -> Outcome {
    let mut parts = Vec::new();
    let (mu, dt, n) = (2.0, 1e-3, 50_000);
    let d = simulate_driver(21, dt, n).unwrap();
    let p = build_mu_process(&d, mu).unwrap();

    let x = -0.3;
    let (below, above) = (glue(&p, x, Side::Below), glue(&p, x, Side::Above));
    let round_trip = reconstruct(&below, &above).unwrap() == p.x;
    parts.push((round_trip, "gluing round-trip".to_string()));
    let kept = |g: &ray_knight::excursion::GluedPath| g.back_map.iter().filter(|&&i| i < n).count();
    let clocks = kept(&below) + kept(&above) == n
        && below.clock() == kept(&below) as f64 * dt
        && above.clock() == kept(&above) as f64 * dt;
    parts.push((clocks, "clock additivity".to_string()));

    let lo = p.x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = p.x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let dx = 4.0 * dt.sqrt();
    let field =
        LocalTimeField::from_samples(&p.x, dt, LevelGrid::covering(lo - dx, hi + dx, dx).unwrap());
    let row = field.row(n);
    let counts: u64 = row.iter().map(|l| (l * dx / dt).round() as u64).sum();
    let mass: f64 = row.iter().sum::<f64>() * dx;
    parts.push((
        counts == n as u64 && field.truncated_fraction() == 0.0,
        format!("occupation Σ L̂·dx = {mass:.12} = t = {:.12}", n as f64 * dt),
    ));

    let whole = martingale_measure(0.0, 1.0, &p, &field, &d, &[0.0, 1.0]).unwrap();
    let parts3 = martingale_measure(0.0, 1.0, &p, &field, &d, &[0.0, 0.5, 1.0]).unwrap();
    let upper = martingale_measure(0.0, 1.0, &p, &field, &d, &[0.0, 0.5]).unwrap();
    parts.push((
        whole.cumulative[1] == parts3.cumulative[2] && upper.cumulative[1] == parts3.cumulative[1],
        "slab additivity".to_string(),
    ));

    let again = build_mu_process(&simulate_driver(21, dt, n).unwrap(), mu).unwrap();
    let cfg = SecondLawConfig::new(1.0, -1.0, 0.5, 200, 1e-3, 13);
    let (r1, s1) = second_law_run(&cfg).unwrap();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let (r2, s2) = pool.install(|| second_law_run(&cfg).unwrap());
    let same = again.x == p.x && s1 == s2 && r1.to_json() == r2.to_json();
    parts.push((
        same,
        "bitwise reproducibility across thread counts".to_string(),
    ));
    outcome(&parts)
}

fn independence() -> Outcome {
    let cfg = IndependenceConfig::default();
    let (_, s) = independence_run(&cfg).unwrap();
    let below: Vec<f64> = s.iter().map(|o| o.below).collect();
    let above: Vec<f64> = s.iter().map(|o| o.above).collect();
    let early: Vec<f64> = s.iter().map(|o| o.above_early).collect();
    let rho = corr(&below, &above);
    let rho_c = corr(&early, &above);
    outcome(&[
        le("|ρ(below, above)|", rho.abs(), 0.03),
        (
            rho_c.abs() > 0.03,
            format!("negative control |ρ| = {:.4} > 0.03", rho_c.abs()),
        ),
    ])
}

fn two_sided() -> Outcome {
    let cfg = MainBisConfig::new(2.0, 0.5, 1.0, 0.4, 1000, 1e-4, 9);
    let main = verify_main_bis(&cfg).unwrap();
    let m = main.metadata["moment_mean"].as_f64().unwrap();
    let s = main.metadata["moment_std_err"].as_f64().unwrap();
    let r0 = r_zero_reduction(&cfg).unwrap();
    let two = r0.metadata["mean_sup_two_sided"].as_f64().unwrap();
    let one = r0.metadata["mean_sup_one_sided"].as_f64().unwrap();
    let shift = shift_consistency(&cfg, 20, 10_000).unwrap();
    let diff = shift.metadata["max_abs_difference"].as_f64().unwrap();
    outcome(&[
        near("mean L(τ_1^r, r+h)", m, 1.4, 3.0 * s),
        (
            r0.pass,
            format!("r=0 mean sup residual {two:.4} vs one-sided {one:.4}"),
        ),
        (
            shift.pass && diff == 0.0,
            format!("shifted vs global |Δ| = {diff}"),
        ),
    ])
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("second Ray-Knight law, μ = 1", second_law_mu_one),
        (
            "second Ray-Knight law, μ-dependence",
            second_law_mu_dependence,
        ),
        ("first Ray-Knight law", first_law),
        ("white-noise SDE residuals", sde_residuals),
        ("white-noise Gaussianity", white_noise),
        ("quadratic-variation identity", quadratic_variation),
        ("exact structural invariants", structural),
        ("excursion independence", independence),
        ("two-sided consistency", two_sided),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t = Instant::now();
        let o = f();
        println!(
            "{} {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
