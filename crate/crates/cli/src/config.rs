//! Suite configuration: versioned JSON config files with one-to-one CLI
//! flag overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use consub_core::report::IdentityId;
use consub_core::suite::{SuiteKind, SuiteOptions};

pub const CONFIG_SCHEMA: &str = "consub/suite-config/v1";

/// On-disk configuration; every field optional so flags can fill the rest.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundle: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suites: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curves: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ConfigFile =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if cfg.schema != CONFIG_SCHEMA {
            bail!(
                "config schema '{}' not supported (expected '{CONFIG_SCHEMA}')",
                cfg.schema
            );
        }
        Ok(cfg)
    }
}

/// Fully resolved verify invocation.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub bundle: String,
    pub suites: Vec<SuiteKind>,
    pub options: SuiteOptions,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
}

pub fn parse_suites(names: &[String]) -> Result<Vec<SuiteKind>> {
    let mut out = Vec::new();
    for name in names {
        for part in name.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let kind = SuiteKind::parse(part)
                .ok_or_else(|| anyhow!("unknown suite '{part}' (known: {})", known_suites()))?;
            if !out.contains(&kind) {
                out.push(kind);
            }
        }
    }
    Ok(out)
}

fn known_suites() -> String {
    SuiteKind::ALL
        .iter()
        .map(|k| k.name())
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn parse_tolerances(pairs: &[String]) -> Result<BTreeMap<IdentityId, f64>> {
    let mut out = BTreeMap::new();
    for pair in pairs {
        let (name, value) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("tolerance override must be identity=value, got '{pair}'"))?;
        let id = IdentityId::parse(name.trim())
            .ok_or_else(|| anyhow!("unknown identity '{}' in tolerance override", name.trim()))?;
        let value: f64 = value
            .trim()
            .parse()
            .with_context(|| format!("parsing tolerance value in '{pair}'"))?;
        if !(value > 0.0) {
            bail!("tolerance for {} must be positive, got {value}", id.name());
        }
        out.insert(id, value);
    }
    Ok(out)
}

fn tolerances_from_names(map: &BTreeMap<String, f64>) -> Result<BTreeMap<IdentityId, f64>> {
    let mut out = BTreeMap::new();
    for (name, value) in map {
        let id = IdentityId::parse(name)
            .ok_or_else(|| anyhow!("unknown identity '{name}' in config tolerances"))?;
        if !(*value > 0.0) {
            bail!("tolerance for {name} must be positive, got {value}");
        }
        out.insert(id, *value);
    }
    Ok(out)
}

/// Flag values for the verify command (all optional; flags win over file).
#[derive(Debug, Default, Clone)]
pub struct VerifyFlags {
    pub bundle: Option<String>,
    pub suites: Vec<String>,
    pub points: Option<usize>,
    pub fd_step: Option<f64>,
    pub seed: Option<u64>,
    pub tolerances: Vec<String>,
    pub curve_steps: Option<usize>,
    pub curves: Option<usize>,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
}

pub fn resolve(file: Option<ConfigFile>, flags: &VerifyFlags) -> Result<ResolvedConfig> {
    let file = file.unwrap_or_default();
    let bundle = flags
        .bundle
        .clone()
        .or(file.bundle)
        .ok_or_else(|| anyhow!("no bundle given (flag --bundle or config field 'bundle')"))?;

    let suites = if !flags.suites.is_empty() {
        parse_suites(&flags.suites)?
    } else if let Some(names) = &file.suites {
        parse_suites(names)?
    } else {
        SuiteKind::ALL.to_vec()
    };
    if suites.is_empty() {
        bail!("no suites selected");
    }

    let mut tolerances = match &file.tolerances {
        Some(map) => tolerances_from_names(map)?,
        None => BTreeMap::new(),
    };
    tolerances.extend(parse_tolerances(&flags.tolerances)?);

    let defaults = SuiteOptions::default();
    let options = SuiteOptions {
        points: flags.points.or(file.points).unwrap_or(defaults.points),
        fd_step: flags.fd_step.or(file.fd_step).unwrap_or(defaults.fd_step),
        seed: flags.seed.or(file.seed).unwrap_or(defaults.seed),
        curve_steps: flags
            .curve_steps
            .or(file.curve_steps)
            .unwrap_or(defaults.curve_steps),
        curves: flags.curves.or(file.curves).unwrap_or(defaults.curves),
        tolerances,
    };
    if options.points == 0 {
        bail!("points must be positive");
    }
    if !(options.fd_step > 0.0) {
        bail!("fd_step must be positive");
    }

    let workers = flags.workers.or(file.workers).or_else(env_workers);
    Ok(ResolvedConfig {
        bundle,
        suites,
        options,
        output: flags.output.clone().or(file.output),
        workers,
    })
}

/// Default worker count from `CONSUB_WORKERS`.
pub fn env_workers() -> Option<usize> {
    std::env::var("CONSUB_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
}

/// Runs `f` inside a rayon pool of the requested size (or the default pool).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .context("building worker pool")?;
            Ok(pool.install(f))
        }
    }
}
