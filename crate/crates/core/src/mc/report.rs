use serde::{Deserialize, Serialize};
use std::fmt;

/// One named check: `statistic <relation> threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub statistic: f64,
    pub relation: String,
    pub threshold: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl CheckResult {
    /// Passes when `statistic ≤ threshold`.
    pub fn at_most(name: impl Into<String>, statistic: f64, threshold: f64, seed: u64) -> Self {
        Self {
            name: name.into(),
            passed: statistic <= threshold,
            statistic,
            relation: "<=".into(),
            threshold,
            seed,
            detail: String::new(),
        }
    }

    /// Passes when `statistic ≥ threshold`.
    pub fn at_least(name: impl Into<String>, statistic: f64, threshold: f64, seed: u64) -> Self {
        Self {
            name: name.into(),
            passed: statistic >= threshold,
            statistic,
            relation: ">=".into(),
            threshold,
            seed,
            detail: String::new(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: {:.6e} {} {:.6e} (seed {})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.statistic,
            self.relation,
            self.threshold,
            self.seed
        )?;
        if !self.detail.is_empty() {
            write!(f, " {}", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn new(seed: u64) -> Self {
        Self { seed, checks: Vec::new() }
    }

    pub fn push(&mut self, check: CheckResult) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, other: VerificationReport) {
        self.checks.extend(other.checks);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        write!(
            f,
            "{} checks, {} passed, {} failed",
            self.checks.len(),
            self.checks.len() - self.failures(),
            self.failures()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_counts_and_round_trips() {
        let mut r = VerificationReport::new(9);
        r.push(CheckResult::at_most("a", 1.0, 2.0, 9));
        r.push(CheckResult::at_least("b", 1.0, 2.0, 9).with_detail("x"));
        assert!(!r.passed());
        assert_eq!(r.failures(), 1);
        let back: VerificationReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(r.to_string().ends_with("2 checks, 1 passed, 1 failed"));
    }
}
