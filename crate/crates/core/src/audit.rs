//! Named inequality checks `lhs ≤ rhs + slack` with a reference anchor,
//! collected into reports.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
    /// Which inequality of the theory this row checks.
    pub anchor: String,
}

impl Audit {
    /// `lhs ≤ rhs + slack`. NaN on either side fails.
    pub fn le(name: impl Into<String>, lhs: f64, rhs: f64, slack: f64, anchor: impl Into<String>) -> Self {
        let pass = lhs <= rhs + slack;
        Self { name: name.into(), lhs, rhs, slack, pass, anchor: anchor.into() }
    }

    /// `|lhs − rhs| ≤ slack`, recorded with `lhs` as the deviation.
    pub fn close(name: impl Into<String>, value: f64, expected: f64, slack: f64, anchor: impl Into<String>) -> Self {
        let dev = (value - expected).abs();
        Self { name: name.into(), lhs: dev, rhs: 0.0, slack, pass: dev <= slack, anchor: anchor.into() }
    }

    /// A boolean condition, encoded as `0 ≤ 0` or `1 ≤ 0`.
    pub fn holds(name: impl Into<String>, ok: bool, anchor: impl Into<String>) -> Self {
        Self { name: name.into(), lhs: if ok { 0.0 } else { 1.0 }, rhs: 0.0, slack: 0.0, pass: ok, anchor: anchor.into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditSet {
    pub audits: Vec<Audit>,
}

impl AuditSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, a: Audit) {
        self.audits.push(a);
    }

    pub fn extend(&mut self, other: AuditSet) {
        self.audits.extend(other.audits);
    }

    pub fn all_pass(&self) -> bool {
        self.audits.iter().all(|a| a.pass)
    }

    pub fn failures(&self) -> Vec<&Audit> {
        self.audits.iter().filter(|a| !a.pass).collect()
    }

    pub fn len(&self) -> usize {
        self.audits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.audits.is_empty()
    }
}

impl FromIterator<Audit> for AuditSet {
    fn from_iter<I: IntoIterator<Item = Audit>>(iter: I) -> Self {
        Self { audits: iter.into_iter().collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slack_and_nan() {
        assert!(Audit::le("a", 1.0 + 1e-10, 1.0, 1e-9, "x").pass);
        assert!(!Audit::le("a", 1.1, 1.0, 1e-9, "x").pass);
        assert!(!Audit::le("a", f64::NAN, 1.0, 1.0, "x").pass);
        assert!(Audit::close("c", 0.7615941, 0.761594, 1e-6, "x").pass);
        let s: AuditSet = [Audit::holds("h", true, "x"), Audit::holds("g", false, "y")].into_iter().collect();
        assert_eq!(s.failures().len(), 1);
        assert!(!s.all_pass());
    }
}
