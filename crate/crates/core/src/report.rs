//! Residual reports: one record per identity check, JSON-serializable.
//!
//! Residual magnitudes and tolerances serialize as JSON numbers in
//! scientific notation with 17 significant digits, so reports are
//! byte-stable and round-trip exactly through other implementations.

use std::collections::BTreeMap;

use serde::ser::Error as _;
use serde::{Deserialize, Serialize, Serializer};

/// Which identity a residual belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityId {
    /// Horizontal inner products match `e^{2φ}` times base inner products.
    Conformality,
    /// Defect of the connection-compatibility identity between `∇` and `∇*`.
    Cshd,
    /// Same defect for the pair of metric-dual connections.
    CshdDual,
    /// Fiber spread of the induced-connection formula.
    Projectability,
    /// Horizontal part of `Tor(∇)` against the lifted base torsion.
    TorsionHorizontal,
    /// Vertical part of `Tor(∇)` against the fiber-connection torsion.
    TorsionVertical,
    FundVvvW,
    FundHuvw,
    FundVuvx,
    FundHuvx,
    FundVuxv,
    FundHuxv,
    FundVuxy,
    FundHuxy,
    FundVxyu,
    FundHxyu,
    FundVxyz,
    FundHxyz,
    /// `‖σ″‖` of an integrated curve that claims to be a geodesic.
    GeodesicDefect,
    /// Horizontal split of the covariant derivative of a field along a curve.
    CurveSplitHorizontal,
    /// Vertical split of the covariant derivative of a field along a curve.
    CurveSplitVertical,
    /// Residual of the geodesic-projection condition.
    ProjectionCondition,
    /// Thresholded agreement between the projection condition and `‖σ_*″‖`.
    ProjectionAgreement,
    /// Sup-norm drift of `π ∘ lift` from the base curve.
    LiftFidelity,
    /// Size of `A_Z Z` over horizontal unit directions (lift hypothesis).
    LiftHypothesis,
    /// Residual of the lift-geodesic condition.
    LiftCondition,
    /// Thresholded agreement between lift defect and lift condition.
    LiftAgreement,
}

impl IdentityId {
    /// Stable snake_case name (the JSON encoding).
    pub fn name(self) -> String {
        serde_json::to_value(self)
            .expect("identity id serializes")
            .as_str()
            .expect("identity id is a string")
            .to_string()
    }

    pub fn parse(s: &str) -> Option<IdentityId> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).ok()
    }
}

impl std::fmt::Display for IdentityId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

fn sci17<S: Serializer>(x: &f64, ser: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        let raw = serde_json::value::RawValue::from_string(format!("{x:.16e}"))
            .map_err(S::Error::custom)?;
        raw.serialize(ser)
    } else {
        // NaN / infinities are not JSON numbers; keep them readable.
        ser.serialize_str(&x.to_string())
    }
}

/// Outcome of one identity check at one point.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub identity: IdentityId,
    /// Chart coordinates of the evaluation point.
    pub point: Vec<f64>,
    /// Description of the test fields and any auxiliary values.
    pub inputs: String,
    #[serde(serialize_with = "sci17")]
    pub residual_norm: f64,
    #[serde(serialize_with = "sci17")]
    pub tolerance: f64,
    pub pass: bool,
    /// Exploratory checks are reported but never gate a suite.
    pub exploratory: bool,
}

impl ResidualReport {
    pub fn new(
        identity: IdentityId,
        point: Vec<f64>,
        inputs: impl Into<String>,
        residual_norm: f64,
        tolerance: f64,
    ) -> Self {
        ResidualReport {
            identity,
            point,
            inputs: inputs.into(),
            residual_norm,
            tolerance,
            pass: residual_norm <= tolerance,
            exploratory: false,
        }
    }

    pub fn exploratory(mut self) -> Self {
        self.exploratory = true;
        self
    }
}

/// Per-identity aggregation of a batch of reports.
#[derive(Clone, Debug, Default, Serialize)]
pub struct IdentitySummary {
    pub checks: usize,
    pub passes: usize,
    pub failures: usize,
    #[serde(serialize_with = "sci17")]
    pub max_residual: f64,
    pub exploratory: bool,
}

/// Summary of a report batch: per-identity tallies plus the failing
/// non-exploratory identity names in sorted order.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteSummary {
    pub per_identity: BTreeMap<String, IdentitySummary>,
    pub failing_identities: Vec<String>,
    pub all_passed: bool,
}

pub fn summarize(reports: &[ResidualReport]) -> SuiteSummary {
    let mut per_identity: BTreeMap<String, IdentitySummary> = BTreeMap::new();
    for r in reports {
        let entry = per_identity.entry(r.identity.name()).or_default();
        entry.checks += 1;
        if r.pass {
            entry.passes += 1;
        } else {
            entry.failures += 1;
        }
        entry.max_residual = entry.max_residual.max(r.residual_norm);
        entry.exploratory |= r.exploratory;
    }
    let failing_identities: Vec<String> = reports
        .iter()
        .filter(|r| !r.pass && !r.exploratory)
        .map(|r| r.identity.name())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let all_passed = failing_identities.is_empty();
    SuiteSummary {
        per_identity,
        failing_identities,
        all_passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residuals_serialize_in_scientific_notation_with_17_digits() {
        let r = ResidualReport::new(
            IdentityId::Cshd,
            vec![0.0, 2.0],
            "X=e1, Y=e1",
            1.25e-9,
            1e-4,
        );
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"residual_norm\":1.2500000000000000e-9"), "{json}");
        assert!(json.contains("\"tolerance\":1.0000000000000000e-4"), "{json}");
        assert!(json.contains("\"pass\":true"));
        // Round-trips as a plain JSON number.
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["residual_norm"].as_f64().unwrap(), 1.25e-9);
    }

    #[test]
    fn pass_flag_matches_threshold() {
        let ok = ResidualReport::new(IdentityId::Conformality, vec![], "", 1e-10, 1e-9);
        assert!(ok.pass);
        let bad = ResidualReport::new(IdentityId::Conformality, vec![], "", 2e-9, 1e-9);
        assert!(!bad.pass);
    }

    #[test]
    fn summary_collects_failing_identities_once() {
        let reports = vec![
            ResidualReport::new(IdentityId::Cshd, vec![], "", 1.0, 1e-4),
            ResidualReport::new(IdentityId::Cshd, vec![], "", 2.0, 1e-4),
            ResidualReport::new(IdentityId::Conformality, vec![], "", 0.0, 1e-9),
            ResidualReport::new(IdentityId::FundHuvw, vec![], "", 5.0, 1e-3).exploratory(),
        ];
        let s = summarize(&reports);
        assert_eq!(s.failing_identities, vec!["cshd".to_string()]);
        assert!(!s.all_passed);
        assert_eq!(s.per_identity["cshd"].failures, 2);
        assert!(s.per_identity["fund_huvw"].exploratory);
    }

    #[test]
    fn identity_names_round_trip() {
        for id in [
            IdentityId::Conformality,
            IdentityId::FundVvvW,
            IdentityId::FundHxyz,
            IdentityId::ProjectionAgreement,
        ] {
            assert_eq!(IdentityId::parse(&id.name()), Some(id));
        }
        assert_eq!(IdentityId::FundVvvW.name(), "fund_vvv_w");
    }
}
