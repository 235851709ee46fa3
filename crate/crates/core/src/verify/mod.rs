//! Statistical machinery and the theorem-level experiments.
//!
//! Every experiment returns a [`TestReport`]: a named list of checks, each a
//! statistic compared against a fixed threshold, together with the
//! parameters needed to reproduce it and free-form metadata.

pub mod gaussian;
pub mod ray_knight;
pub mod residual;
pub mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use gaussian::{gaussianity_check, gaussianity_run, GaussianityConfig};
pub use ray_knight::{
    first_law_run, ray_knight_first_law, ray_knight_second_law, second_law_run, FirstLawConfig,
    FirstLawSample, SecondLawConfig, SecondLawSample,
};
pub use residual::{
    qv_identity, qv_run, sde_residual, Identity, QvConfig, ResidualConfig, ResidualRow, ResidualRun,
};
pub use stats::{ks_statistic, ks_two_sample};

/// One statistic-versus-threshold comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    /// Passes iff `statistic ≤ threshold`.
    pub fn at_most(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            statistic,
            threshold,
            pass: statistic <= threshold,
        }
    }

    /// Passes iff `|value − target| ≤ tol`; the statistic is the distance.
    pub fn within(name: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        Check::at_most(name, (value - target).abs(), tol)
    }

    /// Passes iff `|value/target − 1| ≤ rel`.
    pub fn relative(name: impl Into<String>, value: f64, target: f64, rel: f64) -> Self {
        Check::at_most(name, (value / target - 1.0).abs(), rel)
    }

    /// A boolean condition, reported as 0 (holds) or 1 (fails) against 0.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Check::at_most(name, if ok { 0.0 } else { 1.0 }, 0.0)
    }
}

/// Outcome of one verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub params: BTreeMap<String, Value>,
    /// Statistic of the headline (first) check.
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub metadata: BTreeMap<String, Value>,
}

impl TestReport {
    pub fn new(name: impl Into<String>) -> Self {
        TestReport {
            name: name.into(),
            params: BTreeMap::new(),
            statistic: f64::NAN,
            threshold: f64::NAN,
            pass: false,
            checks: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn meta(&mut self, key: &str, value: impl Into<Value>) {
        self.metadata.insert(key.to_string(), value.into());
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
        self.refresh();
    }

    /// Marks the report as unable to decide; it then never passes.
    pub fn inconclusive(&mut self, why: impl Into<String>) {
        self.meta("inconclusive", why.into());
        self.refresh();
    }

    pub fn is_inconclusive(&self) -> bool {
        self.metadata.contains_key("inconclusive")
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn refresh(&mut self) {
        if let Some(first) = self.checks.first() {
            self.statistic = first.statistic;
            self.threshold = first.threshold;
        }
        self.pass = !self.checks.is_empty()
            && self.checks.iter().all(|c| c.pass)
            && !self.is_inconclusive();
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports contain only JSON-safe values")
    }

    /// One line per check, `PASS`/`FAIL` first.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "[{}] {}\n",
            if self.pass { "PASS" } else { "FAIL" },
            self.name
        );
        for c in &self.checks {
            s += &format!(
                "    {} {:<32} {:>12.6} <= {:<12.6}\n",
                if c.pass { "ok  " } else { "FAIL" },
                c.name,
                c.statistic,
                c.threshold
            );
        }
        if let Some(Value::String(why)) = self.metadata.get("inconclusive") {
            s += &format!("    inconclusive: {why}\n");
        }
        s
    }
}

/// One-sample KS critical value at the ≈1% level.
pub fn ks_critical_one_sample(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

/// Two-sample KS critical value at the ≈1% level.
pub fn ks_critical_two_sample(n: usize, m: usize) -> f64 {
    1.63 * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_passes_only_when_all_checks_pass() {
        let mut r = TestReport::new("t").param("mu", 1.0);
        assert!(!r.pass);
        r.push(Check::at_most("a", 0.1, 0.2));
        assert!(r.pass);
        assert_eq!(r.statistic, 0.1);
        r.push(Check::within("b", 1.5, 1.0, 0.1));
        assert!(!r.pass);
        assert_eq!(r.statistic, 0.1);
    }

    #[test]
    fn inconclusive_never_passes() {
        let mut r = TestReport::new("t");
        r.push(Check::at_most("a", 0.0, 1.0));
        r.inconclusive("zero variance");
        assert!(!r.pass);
        assert!(r.summary().contains("inconclusive"));
    }

    #[test]
    fn report_round_trips_through_json() {
        let mut r = TestReport::new("rk2").param("mu", 1.0).param("n", 20_000);
        r.push(Check::relative("var", 1.02, 1.0, 0.1));
        r.meta("discarded", 3);
        let back: TestReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        let v: Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in [
            "name",
            "params",
            "statistic",
            "threshold",
            "pass",
            "metadata",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
