//! Identity suites over geometry bundles: each suite evaluates one family of
//! checks at a deterministic sample cloud and returns residual reports.
//!
//! Evaluation fans out over points (or curves) with rayon; collection
//! preserves index order, so reports are byte-identical across worker
//! counts.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::{VectorField, DEFAULT_FD_STEP};
use crate::connection::{dual_connection, levi_civita, ConnectionField};
use crate::error::GeomError;
use crate::gallery::{random_geodesic_start, GeometryBundle};
use crate::geodesic::{
    geodesic_defect, geodesic_ivp, lift_geodesic_check, projection_condition_residual,
    sigma_dd_residuals, CurveRecord,
};
use crate::report::{IdentityId, ResidualReport};
use crate::submersion::cshd_defect;
use crate::tensors::{
    fundamental_equation_residual, torsion_lemma_residuals, FundamentalEq, FundamentalFields,
};

/// The named identity suites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    Conformality,
    Cshd,
    Torsion,
    Duality,
    Fundamental,
    Geodesic,
    Lift,
}

impl SuiteKind {
    pub const ALL: [SuiteKind; 7] = [
        SuiteKind::Conformality,
        SuiteKind::Cshd,
        SuiteKind::Torsion,
        SuiteKind::Duality,
        SuiteKind::Fundamental,
        SuiteKind::Geodesic,
        SuiteKind::Lift,
    ];

    pub fn name(self) -> String {
        serde_json::to_value(self)
            .expect("suite kind serializes")
            .as_str()
            .expect("suite kind is a string")
            .to_string()
    }

    pub fn parse(s: &str) -> Option<SuiteKind> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).ok()
    }
}

impl std::fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

/// Pinned default tolerance per identity.
pub fn default_tolerance(id: IdentityId) -> f64 {
    use IdentityId::*;
    match id {
        Conformality => 1e-9,
        Cshd | CshdDual => 1e-4,
        Projectability => 1e-5,
        TorsionHorizontal | TorsionVertical => 1e-6,
        FundVvvW | FundHuvx | FundVuxv | FundHuxy | FundVxyu | FundHxyz => 1e-4,
        FundHuvw | FundVuvx | FundHuxv | FundVuxy | FundHxyu | FundVxyz => 1e-3,
        GeodesicDefect => 1e-6,
        CurveSplitHorizontal | CurveSplitVertical => 1e-4,
        ProjectionCondition => 1e-4,
        ProjectionAgreement => 0.5,
        LiftFidelity => 1e-6,
        LiftHypothesis => 1e-5,
        LiftCondition => 1e-6,
        LiftAgreement => 0.5,
    }
}

/// Suite configuration: sample count, step, seed, tolerance overrides.
#[derive(Clone, Debug)]
pub struct SuiteOptions {
    pub points: usize,
    pub fd_step: f64,
    pub seed: u64,
    pub tolerances: BTreeMap<IdentityId, f64>,
    /// Time steps per integrated curve in the geodesic and lift suites.
    pub curve_steps: usize,
    /// Curves per geodesic batch.
    pub curves: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            points: 20,
            fd_step: DEFAULT_FD_STEP,
            seed: 7,
            tolerances: BTreeMap::new(),
            curve_steps: 2000,
            curves: 5,
        }
    }
}

impl SuiteOptions {
    pub fn tolerance(&self, id: IdentityId) -> f64 {
        self.tolerances
            .get(&id)
            .copied()
            .unwrap_or_else(|| default_tolerance(id))
    }
}

/// The connection pair a suite evaluates identities with: both Levi-Civita
/// connections rebuilt from the metrics at the configured step, so the whole
/// numerical pipeline (metric derivatives included) runs at `fd_step` and a
/// coarse step degrades residuals the way the `O(h²)` error model predicts.
/// Curve integration still uses the bundle's own (closed-form where
/// available) connections: curves are test inputs, not the thing under test.
fn working_pair(bundle: &GeometryBundle, opts: &SuiteOptions) -> (ConnectionField, ConnectionField) {
    let s = &bundle.submersion;
    (
        levi_civita(s.source(), s.metric_m(), opts.fd_step),
        levi_civita(s.target(), s.metric_b(), opts.fd_step),
    )
}

/// Runs one suite on a bundle and returns its reports in deterministic order.
pub fn run_suite(
    bundle: &GeometryBundle,
    kind: SuiteKind,
    opts: &SuiteOptions,
) -> Result<Vec<ResidualReport>, GeomError> {
    match kind {
        SuiteKind::Conformality => conformality_suite(bundle, opts),
        SuiteKind::Cshd => cshd_suite(bundle, opts),
        SuiteKind::Torsion => torsion_suite(bundle, opts),
        SuiteKind::Duality => duality_suite(bundle, opts),
        SuiteKind::Fundamental => fundamental_suite(bundle, opts),
        SuiteKind::Geodesic => geodesic_suite(bundle, opts),
        SuiteKind::Lift => lift_suite(bundle, opts),
    }
}

/// Runs several suites back to back, concatenating reports.
pub fn run_suites(
    bundle: &GeometryBundle,
    kinds: &[SuiteKind],
    opts: &SuiteOptions,
) -> Result<Vec<ResidualReport>, GeomError> {
    let mut out = Vec::new();
    for kind in kinds {
        out.extend(run_suite(bundle, *kind, opts)?);
    }
    Ok(out)
}

fn conformality_suite(
    bundle: &GeometryBundle,
    opts: &SuiteOptions,
) -> Result<Vec<ResidualReport>, GeomError> {
    let points = bundle.sample_points(opts.points)?;
    let tol = opts.tolerance(IdentityId::Conformality);
    points
        .par_iter()
        .map(|p| {
            let rec = crate::submersion::recover_conformal_factor(&bundle.submersion, p)?;
            Ok(ResidualReport::new(
                IdentityId::Conformality,
                p.to_vec(),
                format!("phi = {:.6}", rec.phi),
                rec.residual,
                tol,
            ))
        })
        .collect()
}

fn cshd_suite(
    bundle: &GeometryBundle,
    opts: &SuiteOptions,
) -> Result<Vec<ResidualReport>, GeomError> {
    let points = bundle.sample_points(opts.points)?;
    let tol = opts.tolerance(IdentityId::Cshd);
    let m = bundle.submersion.base_dim();
    let (conn_m, conn_b) = working_pair(bundle, opts);
    let results: Result<Vec<Vec<ResidualReport>>, GeomError> = points
        .par_iter()
        .map(|p| {
            let mut reports = Vec::with_capacity(m * m);
            for i in 0..m {
                for j in 0..m {
                    let d = cshd_defect(
                        &bundle.submersion,
                        &conn_m,
                        &conn_b,
                        &bundle.phi,
                        &VectorField::coordinate(i, m),
                        &VectorField::coordinate(j, m),
                        p,
                        opts.fd_step,
                    )?;
                    reports.push(ResidualReport::new(
                        IdentityId::Cshd,
                        p.to_vec(),
                        format!("X = e{}, Y = e{}", i + 1, j + 1),
                        d.norm(),
                        tol,
                    ));
                }
            }
            Ok(reports)
        })
        .collect();
    Ok(results?.into_iter().flatten().collect())
}

fn torsion_suite(
    bundle: &GeometryBundle,
    opts: &SuiteOptions,
) -> Result<Vec<ResidualReport>, GeomError> {
    let points = bundle.sample_points(opts.points)?;
    let tol_h = opts.tolerance(IdentityId::TorsionHorizontal);
    let tol_v = opts.tolerance(IdentityId::TorsionVertical);
    let (conn_m, conn_b) = working_pair(bundle, opts);
    let results: Result<Vec<[ResidualReport; 2]>, GeomError> = points
        .par_iter()
        .enumerate()
        .map(|(idx, p)| {
            let (hres, vres) = torsion_lemma_residuals(
                &bundle.submersion,
                &conn_m,
                &conn_b,
                opts.seed.wrapping_add(idx as u64),
                p,
                opts.fd_step,
            )?;
            let inputs = format!("seeded fields #{idx}");
            Ok([
                ResidualReport::new(
                    IdentityId::TorsionHorizontal,
                    p.to_vec(),
                    inputs.clone(),
                    hres,
                    tol_h,
                ),
                ResidualReport::new(IdentityId::TorsionVertical, p.to_vec(), inputs, vres, tol_v),
            ])
        })
        .collect();
    Ok(results?.into_iter().flatten().collect())
}

fn duality_suite(
    bundle: &GeometryBundle,
    opts: &SuiteOptions,
) -> Result<Vec<ResidualReport>, GeomError> {
    let points = bundle.sample_points(opts.points)?;
    let tol_primal = opts.tolerance(IdentityId::Cshd);
    let tol_dual = opts.tolerance(IdentityId::CshdDual);
    let s = &bundle.submersion;
    let (conn_m, conn_b) = working_pair(bundle, opts);
    let dual_m = dual_connection(s.source(), s.metric_m(), &conn_m, opts.fd_step);
    let dual_b = dual_connection(s.target(), s.metric_b(), &conn_b, opts.fd_step);
    let m = s.base_dim();
    let results: Result<Vec<[ResidualReport; 2]>, GeomError> = points
        .par_iter()
        .map(|p| {
            let mut primal_max = 0.0f64;
            let mut dual_max = 0.0f64;
            for i in 0..m {
                for j in 0..m {
                    let x = VectorField::coordinate(i, m);
                    let y = VectorField::coordinate(j, m);
                    primal_max = primal_max.max(
                        cshd_defect(s, &conn_m, &conn_b, &bundle.phi, &x, &y, p, opts.fd_step)?
                            .norm(),
                    );
                    dual_max = dual_max.max(
                        cshd_defect(s, &dual_m, &dual_b, &bundle.phi, &x, &y, p, opts.fd_step)?
                            .norm(),
                    );
                }
            }
            Ok([
                ResidualReport::new(
                    IdentityId::Cshd,
                    p.to_vec(),
                    "max over coordinate pairs, primal pair",
                    primal_max,
                    tol_primal,
                ),
                ResidualReport::new(
                    IdentityId::CshdDual,
                    p.to_vec(),
                    "max over coordinate pairs, dual pair",
                    dual_max,
                    tol_dual,
                ),
            ])
        })
        .collect();
    Ok(results?.into_iter().flatten().collect())
}

fn fundamental_suite(
    bundle: &GeometryBundle,
    opts: &SuiteOptions,
) -> Result<Vec<ResidualReport>, GeomError> {
    let points = bundle.sample_points(opts.points)?;
    let fields = FundamentalFields::random(&bundle.submersion, opts.seed);
    let (conn_m, _) = working_pair(bundle, opts);
    let results: Result<Vec<Vec<ResidualReport>>, GeomError> = points
        .par_iter()
        .map(|p| {
            FundamentalEq::ALL
                .iter()
                .map(|eq| {
                    fundamental_equation_residual(
                        &bundle.submersion,
                        &conn_m,
                        *eq,
                        &fields,
                        p,
                        opts.fd_step,
                        opts.tolerance(eq.identity_id()),
                    )
                })
                .collect()
        })
        .collect();
    Ok(results?.into_iter().flatten().collect())
}

/// Integrates one seeded geodesic of the bundle.
pub fn seeded_geodesic(
    bundle: &GeometryBundle,
    index: usize,
    opts: &SuiteOptions,
) -> Result<CurveRecord, GeomError> {
    let (p0, v0) = random_geodesic_start(bundle, index, opts.seed)?;
    geodesic_ivp(
        bundle.submersion.source(),
        &bundle.conn_m,
        &p0,
        &v0,
        1.0,
        opts.curve_steps,
    )?
    .into_complete()
}

fn geodesic_suite(
    bundle: &GeometryBundle,
    opts: &SuiteOptions,
) -> Result<Vec<ResidualReport>, GeomError> {
    let tol_defect = opts.tolerance(IdentityId::GeodesicDefect);
    let tol_split = opts.tolerance(IdentityId::CurveSplitHorizontal);
    let tol_condition = opts.tolerance(IdentityId::ProjectionCondition);
    let tol_agree = opts.tolerance(IdentityId::ProjectionAgreement);
    let (conn_m, conn_b) = working_pair(bundle, opts);
    let results: Result<Vec<Vec<ResidualReport>>, GeomError> = (0..opts.curves)
        .into_par_iter()
        .map(|c| {
            let curve = seeded_geodesic(bundle, c, opts)?;
            let mut reports = Vec::new();
            let len = curve.len();
            let mid = len / 2;
            reports.push(ResidualReport::new(
                IdentityId::GeodesicDefect,
                curve.point(mid).to_vec(),
                format!("curve #{c}, mid sample"),
                geodesic_defect(&conn_m, &curve, mid)?,
                tol_defect,
            ));
            for i in [len / 4, mid, 3 * len / 4] {
                let (rh, rv) = sigma_dd_residuals(
                    &bundle.submersion,
                    &conn_m,
                    &conn_b,
                    &bundle.phi,
                    &curve,
                    i,
                    opts.fd_step,
                    tol_split,
                )?;
                reports.push(rh);
                reports.push(rv);
            }
            // Thresholded biconditional between the projection condition and
            // the measured base defect, audited at every interior sample.
            let base = curve.project(&bundle.submersion)?;
            let mut disagreements = 0usize;
            let mut worst_gap = 0.0f64;
            for i in curve.interior_indices() {
                let condition = projection_condition_residual(
                    &bundle.submersion,
                    &conn_m,
                    &bundle.phi,
                    &curve,
                    i,
                    opts.fd_step,
                )?;
                let defect = geodesic_defect(&conn_b, &base, i)?;
                if (condition <= tol_condition) != (defect <= tol_condition) {
                    disagreements += 1;
                    worst_gap = worst_gap.max((condition - defect).abs());
                }
            }
            reports.push(ResidualReport::new(
                IdentityId::ProjectionAgreement,
                curve.point(0).to_vec(),
                format!(
                    "curve #{c}: {} interior samples, worst gap {:.3e}",
                    len - 2,
                    worst_gap
                ),
                disagreements as f64,
                tol_agree,
            ));
            Ok(reports)
        })
        .collect();
    Ok(results?.into_iter().flatten().collect())
}

fn lift_suite(
    bundle: &GeometryBundle,
    opts: &SuiteOptions,
) -> Result<Vec<ResidualReport>, GeomError> {
    let s = &bundle.submersion;
    // Base geodesic from the projected center of the sample box.
    let center = s
        .source()
        .point(bundle.sample_box.center())
        .map_err(|_| GeomError::Degenerate("sample box center outside chart".into()))?;
    let b0 = s.project(&center)?;
    let mut rng = crate::sample::rng_from_seed(opts.seed);
    let m = s.base_dim();
    let raw = DVector::from_fn(m, |_, _| rand::Rng::gen_range(&mut rng, -1.0..1.0));
    let norm = s.metric_b().norm(&b0, &raw)?;
    if norm <= 1e-12 {
        return Err(GeomError::Degenerate("zero base velocity".into()));
    }
    let v0 = raw * (0.6 / norm);
    let alpha = geodesic_ivp(s.target(), &bundle.conn_b, &b0, &v0, 1.0, opts.curve_steps)?
        .into_complete()?;
    let p0 = s.fiber_samples(&b0, 1)?.remove(0);
    let (conn_m, conn_b) = working_pair(bundle, opts);

    let tol = opts.tolerance(IdentityId::LiftCondition);
    let tol_fid = opts.tolerance(IdentityId::LiftFidelity);
    let tol_hyp = opts.tolerance(IdentityId::LiftHypothesis);
    let tol_agree = opts.tolerance(IdentityId::LiftAgreement);
    let (_, check) = lift_geodesic_check(
        s,
        &conn_m,
        &conn_b,
        &bundle.phi,
        &alpha,
        &p0,
        opts.fd_step,
        tol,
        tol_hyp,
    )?;

    let mut reports = Vec::new();
    if !check.applicable {
        reports.push(
            ResidualReport::new(
                IdentityId::LiftHypothesis,
                p0.to_vec(),
                format!(
                    "inapplicable: A_ZZ = {:.6e} over horizontal unit directions",
                    check.a_zz_max
                ),
                check.a_zz_max,
                tol_hyp,
            )
            .exploratory(),
        );
        return Ok(reports);
    }
    reports.push(ResidualReport::new(
        IdentityId::LiftHypothesis,
        p0.to_vec(),
        "A_ZZ over horizontal unit directions",
        check.a_zz_max,
        tol_hyp,
    ));
    reports.push(ResidualReport::new(
        IdentityId::LiftFidelity,
        p0.to_vec(),
        "sup |pi(lift) - alpha|",
        check.drift,
        tol_fid,
    ));
    reports.push(ResidualReport::new(
        IdentityId::LiftAgreement,
        p0.to_vec(),
        format!(
            "lift defect {:.3e} vs condition residual {:.3e}",
            check.lift_defect, check.condition_residual
        ),
        if check.agree { 0.0 } else { 1.0 },
        tol_agree,
    ));
    Ok(reports)
}
