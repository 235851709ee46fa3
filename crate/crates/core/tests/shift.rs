use ray_knight::two_sided::{simulate_two_sided, ForwardPolicy, TwoSidedConfig};
use statrs::distribution::{ContinuousCDF, Normal};

// Shifted at T_r, the two-sided Brownian case is again a Brownian motion.
#[test]
fn shifted_brownian_case_is_brownian() {
    let (n, dt, r) = (3000u64, 1e-3, 0.2);
    let mut cfg = TwoSidedConfig::new(1.0, dt, r, ForwardPolicy::Steps(1000));
    // the backward side waits for its running maximum to pass r, a time
    // with infinite mean; the rare runaway replicas are dropped
    cfg.cap = 2_000_000;
    let mut xs: Vec<f64> = (0..n)
        .filter_map(|i| match simulate_two_sided(&cfg, 12, i) {
            Ok(p) => {
                let s = p.shifted(r).unwrap();
                assert!(s.x.len() > 1000);
                Some(s.x[1000])
            }
            Err(ray_knight::Error::CapReached { .. }) => None,
            Err(e) => panic!("{e}"),
        })
        .collect();
    assert!(xs.len() as f64 > 0.99 * n as f64, "kept {}", xs.len());
    xs.sort_by(f64::total_cmp);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let m = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / m).abs().max(((i + 1) as f64 / m - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(d < 1.95 / m.sqrt(), "D = {d}");
}

#[test]
fn shifted_path_starts_just_below_level() {
    let dt = 1e-4;
    let cfg = TwoSidedConfig::new(2.0, dt, 0.7, ForwardPolicy::Steps(10));
    for i in 0..50 {
        let p = simulate_two_sided(&cfg, 3, i).unwrap();
        for r in [0.0, 0.3, 0.7] {
            let s = p.shifted(r).unwrap();
            assert!(s.x[0] <= 0.0 && s.x[0] > -10.0 * dt.sqrt());
            assert_eq!(s.x.len(), s.xi.len() + 1);
        }
    }
}
