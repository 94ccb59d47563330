//! Structured audit records: every verified inequality or identity is
//! reported with both sides, the residual, the tolerance and its
//! provenance, so reports are replayable and self-describing.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Where a tolerance came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToleranceProvenance {
    /// Fixed analytic tolerance (exact identities, closed forms).
    Analytic,
    /// Derived from a factor-two refinement pair of the same quantity.
    RefinementPair,
}

/// Record of one verified inequality or identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub tolerance_provenance: ToleranceProvenance,
    pub pass: bool,
    /// Hash of the grid/flow configuration the audit ran under.
    pub config_hash: String,
    /// Recorded constants, kernel tail bounds, measured caps and similar.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    /// Per-s table for sweep audits: `(s, measured value)`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_s: Vec<(f64, f64)>,
}

impl AuditReport {
    /// Builds a report; `pass` is forced to `residual <= tolerance` so the
    /// invariant cannot drift from the stored numbers.
    pub fn new(
        name: impl Into<String>,
        lhs: f64,
        rhs: f64,
        residual: f64,
        tolerance: f64,
        provenance: ToleranceProvenance,
        config_hash: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            residual,
            tolerance,
            tolerance_provenance: provenance,
            pass: residual <= tolerance,
            config_hash: config_hash.into(),
            notes: Vec::new(),
            per_s: Vec::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn with_per_s(mut self, table: Vec<(f64, f64)>) -> Self {
        self.per_s = table;
        self
    }
}

/// Tolerance from a factor-two refinement pair: twice the observed change
/// between the coarse and fine evaluations, floored away from zero.
///
/// For any quantity converging with order >= 1 the fine-level error is
/// bounded by |coarse - fine|, so the factor two is a safety margin.
pub fn refinement_tolerance(coarse: f64, fine: f64) -> f64 {
    2.0 * (coarse - fine).abs() + 1e-12
}

/// Hex SHA-256 of a canonical byte encoding; used to stamp every report
/// and CSV row with the configuration it came from.
pub fn hash_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_follows_residual() {
        let r = AuditReport::new(
            "demo",
            1.0,
            1.0,
            1e-9,
            1e-8,
            ToleranceProvenance::Analytic,
            "h",
        );
        assert!(r.pass);
        let r2 = AuditReport::new(
            "demo",
            1.0,
            2.0,
            1.0,
            1e-8,
            ToleranceProvenance::Analytic,
            "h",
        );
        assert!(!r2.pass);
    }

    #[test]
    fn refinement_tolerance_covers_fine_error() {
        // Order-1 model: err(h) = C h; coarse - fine = C h / 2 >= err(fine).
        let (c, f) = (1.0 + 0.1, 1.0 + 0.05);
        assert!(refinement_tolerance(c, f) >= 0.05);
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(hash_bytes(b"x"), hash_bytes(b"x"));
        assert_ne!(hash_bytes(b"x"), hash_bytes(b"y"));
    }
}
