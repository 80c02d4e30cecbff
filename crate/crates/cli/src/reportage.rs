//! Report assembly: every command writes a self-describing JSON document
//! with the library's convention block, the effective configuration, and a
//! timestamp. Apart from the `generated_at` field the output is a pure
//! function of the configuration.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use consub_core::gallery::BundleManifest;
use consub_core::report::{summarize, ResidualReport, SuiteSummary};
use consub_core::suite::{SuiteKind, SuiteOptions};

pub const VERIFY_REPORT_SCHEMA: &str = "consub/verify-report/v1";

/// The numerical conventions baked into this library, embedded in every
/// report so cross-implementation comparisons are self-describing.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Conventions {
    pub curvature_sign: &'static str,
    pub phi_normalization: &'static str,
    pub tensor_derivative_rule: &'static str,
    pub residual_norm: &'static str,
}

pub const CONVENTIONS: Conventions = Conventions {
    curvature_sign: "R(E,F)G = nabla_{[E,F]}G - nabla_E nabla_F G + nabla_F nabla_E G",
    phi_normalization: "g_m(X,Y) = exp(2*phi) * g_b(pi_*X, pi_*Y) on horizontal fields",
    tensor_derivative_rule: "(nabla_E S)_F G = nabla_E(S_F G) - S_{nabla_E F}G - S_F(nabla_E G)",
    residual_norm: "euclidean norm of chart components",
};

/// Echo of the effective suite configuration.
#[derive(Clone, Debug, Serialize)]
pub struct ConfigEcho {
    pub suites: Vec<String>,
    pub points: usize,
    pub fd_step: f64,
    pub seed: u64,
    pub curve_steps: usize,
    pub curves: usize,
    pub tolerance_overrides: BTreeMap<String, f64>,
}

impl ConfigEcho {
    pub fn new(suites: &[SuiteKind], options: &SuiteOptions) -> Self {
        ConfigEcho {
            suites: suites.iter().map(|s| s.name()).collect(),
            points: options.points,
            fd_step: options.fd_step,
            seed: options.seed,
            curve_steps: options.curve_steps,
            curves: options.curves,
            tolerance_overrides: options
                .tolerances
                .iter()
                .map(|(id, tol)| (id.name(), *tol))
                .collect(),
        }
    }
}

/// Error block embedded in a report when a suite broke down numerically.
#[derive(Clone, Debug, Serialize)]
pub struct ReportError {
    pub message: String,
    pub numerical_breakdown: bool,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub schema: &'static str,
    pub generated_at: String,
    pub bundle: BundleManifest,
    pub config: ConfigEcho,
    pub conventions: Conventions,
    pub results: Vec<ResidualReport>,
    pub summary: SuiteSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ReportError>,
}

impl VerifyReport {
    pub fn new(
        bundle: BundleManifest,
        config: ConfigEcho,
        results: Vec<ResidualReport>,
        error: Option<ReportError>,
    ) -> Self {
        let summary = summarize(&results);
        VerifyReport {
            schema: VERIFY_REPORT_SCHEMA,
            generated_at: timestamp(),
            bundle,
            config,
            conventions: CONVENTIONS,
            results,
            summary,
            error,
        }
    }
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true)
}

/// Pretty JSON with a trailing newline, to a file or stdout.
pub fn write_json<T: Serialize>(value: &T, output: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("serializing report")?;
    text.push('\n');
    match output {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)
                        .with_context(|| format!("creating {}", parent.display()))?;
                }
            }
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
