//! Fixed-step geodesic integration, covariant derivatives along curves,
//! horizontal lifting of curves, and the curve-level decomposition and
//! projection checks.
//!
//! Integration is classical 4th-order one-step (no adaptivity), so residual
//! budgets are deterministic: endpoint errors scale as `step⁴` and
//! along-curve derivatives use central differences in the curve parameter at
//! the curve's own sample spacing.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::chart::{Chart, Point, ScalarField, VectorField};
use crate::connection::{metric_gradient, ConnectionField};
use crate::error::GeomError;
use crate::report::{IdentityId, ResidualReport};
use crate::submersion::SubmersionMap;
use crate::tensors::{tensor_a, tensor_t};

/// Sampled curve with exact integrator velocities at every sample.
#[derive(Clone, Debug)]
pub struct CurveRecord {
    chart: Chart,
    times: Vec<f64>,
    points: Vec<Point>,
    velocities: Vec<DVector<f64>>,
    step: f64,
}

impl CurveRecord {
    pub fn new(
        chart: Chart,
        times: Vec<f64>,
        points: Vec<Point>,
        velocities: Vec<DVector<f64>>,
        step: f64,
    ) -> Result<Self, GeomError> {
        if times.len() != points.len() || times.len() != velocities.len() {
            return Err(GeomError::Degenerate(
                "curve arrays must have equal lengths".into(),
            ));
        }
        if times.len() < 2 {
            return Err(GeomError::Degenerate("curve needs at least 2 samples".into()));
        }
        for p in &points {
            chart.check_point(p)?;
        }
        Ok(CurveRecord {
            chart,
            times,
            points,
            velocities,
            step,
        })
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn point(&self, i: usize) -> &Point {
        &self.points[i]
    }

    pub fn velocity(&self, i: usize) -> &DVector<f64> {
        &self.velocities[i]
    }

    pub fn last_point(&self) -> &Point {
        self.points.last().expect("non-empty curve")
    }

    pub fn interior_indices(&self) -> std::ops::Range<usize> {
        1..self.len() - 1
    }

    /// Values of a vector field sampled along the curve.
    pub fn sample_field(&self, field: &VectorField) -> Result<Vec<DVector<f64>>, GeomError> {
        self.points.iter().map(|p| field.eval(p)).collect()
    }

    /// The projected curve `π ∘ σ` with pushforward velocities.
    pub fn project(&self, s: &SubmersionMap) -> Result<CurveRecord, GeomError> {
        let mut points = Vec::with_capacity(self.len());
        let mut velocities = Vec::with_capacity(self.len());
        for (p, v) in self.points.iter().zip(&self.velocities) {
            points.push(s.project(p)?);
            velocities.push(s.pushforward(p, v)?);
        }
        CurveRecord::new(
            s.target().clone(),
            self.times.clone(),
            points,
            velocities,
            self.step,
        )
    }

    /// CSV with header `t,x1..xn,v1..vn`.
    pub fn to_csv(&self) -> String {
        let n = self.chart.dim();
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",x{i}"));
        }
        for i in 1..=n {
            out.push_str(&format!(",v{i}"));
        }
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&format!("{:.16e}", self.times[i]));
            for c in self.points[i].coords().iter() {
                out.push_str(&format!(",{c:.16e}"));
            }
            for c in self.velocities[i].iter() {
                out.push_str(&format!(",{c:.16e}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(chart: &Chart, text: &str) -> Result<CurveRecord, GeomError> {
        let n = chart.dim();
        let mut times = Vec::new();
        let mut points = Vec::new();
        let mut velocities = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with('t')) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 1 + 2 * n {
                return Err(GeomError::Degenerate(format!(
                    "curve CSV line {} has {} fields, expected {}",
                    lineno + 1,
                    fields.len(),
                    1 + 2 * n
                )));
            }
            let parse = |s: &str| -> Result<f64, GeomError> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| GeomError::Degenerate(format!("bad float '{s}': {e}")))
            };
            times.push(parse(fields[0])?);
            let mut c = DVector::zeros(n);
            let mut v = DVector::zeros(n);
            for i in 0..n {
                c[i] = parse(fields[1 + i])?;
                v[i] = parse(fields[1 + n + i])?;
            }
            points.push(chart.point(c)?);
            velocities.push(v);
        }
        if times.len() < 2 {
            return Err(GeomError::Degenerate("curve needs at least 2 samples".into()));
        }
        let step = times[1] - times[0];
        CurveRecord::new(chart.clone(), times, points, velocities, step)
    }

    pub fn to_data(&self) -> CurveData {
        CurveData {
            step: self.step,
            times: self.times.clone(),
            points: self.points.iter().map(|p| p.to_vec()).collect(),
            velocities: self.velocities.iter().map(|v| v.iter().copied().collect()).collect(),
        }
    }

    pub fn from_data(chart: &Chart, data: &CurveData) -> Result<CurveRecord, GeomError> {
        let points = data
            .points
            .iter()
            .map(|c| chart.point_from_slice(c))
            .collect::<Result<Vec<_>, _>>()?;
        let velocities = data
            .velocities
            .iter()
            .map(|v| DVector::from_column_slice(v))
            .collect();
        CurveRecord::new(
            chart.clone(),
            data.times.clone(),
            points,
            velocities,
            data.step,
        )
    }
}

/// Plain-data form of a curve for JSON serialization.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurveData {
    pub step: f64,
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
}

/// Result of an initial-value integration: either the full record or the
/// partial record up to the sample before the failure.
#[derive(Debug)]
pub enum IvpOutcome {
    Complete(CurveRecord),
    Halted {
        partial: CurveRecord,
        time: f64,
        cause: GeomError,
    },
}

impl IvpOutcome {
    pub fn record(&self) -> &CurveRecord {
        match self {
            IvpOutcome::Complete(r) => r,
            IvpOutcome::Halted { partial, .. } => partial,
        }
    }

    pub fn into_complete(self) -> Result<CurveRecord, GeomError> {
        match self {
            IvpOutcome::Complete(r) => Ok(r),
            IvpOutcome::Halted { cause, .. } => Err(cause),
        }
    }
}

fn geodesic_accel(
    chart: &Chart,
    conn: &ConnectionField,
    coords: &DVector<f64>,
    vel: &DVector<f64>,
) -> Result<DVector<f64>, GeomError> {
    let p = chart.point(coords.clone())?;
    Ok(-conn.christoffel(&p)?.contract(vel, vel))
}

/// Integrates `σ″^k + Γ^k_{ij} σ′^i σ′^j = 0` from `(p0, v0)` over
/// `[0, t_end]` with `steps` fixed classical 4th-order steps.
///
/// A domain exit or a divergence (non-finite state, or coordinate speed
/// exceeding a million times the initial scale) halts the integration and
/// returns the partial record together with the cause.
pub fn geodesic_ivp(
    chart: &Chart,
    conn: &ConnectionField,
    p0: &Point,
    v0: &DVector<f64>,
    t_end: f64,
    steps: usize,
) -> Result<IvpOutcome, GeomError> {
    if steps < 2 {
        return Err(GeomError::Degenerate(format!(
            "need at least 2 integration steps, got {steps}"
        )));
    }
    chart.check_point(p0)?;
    let h = t_end / steps as f64;
    let speed_limit = 1e6 * (1.0 + v0.norm());
    let mut x = p0.coords().clone();
    let mut v = v0.clone();
    let mut times = vec![0.0];
    let mut points = vec![p0.clone()];
    let mut velocities = vec![v0.clone()];

    for i in 0..steps {
        let t = i as f64 * h;
        let halt = |times: Vec<f64>,
                    points: Vec<Point>,
                    velocities: Vec<DVector<f64>>,
                    cause: GeomError| {
            let partial = CurveRecord::new(chart.clone(), times, points, velocities, h)?;
            Ok(IvpOutcome::Halted {
                partial,
                time: t,
                cause,
            })
        };
        let stage = |coords: &DVector<f64>, vel: &DVector<f64>| {
            geodesic_accel(chart, conn, coords, vel)
        };
        let k1x = v.clone();
        let k1v = match stage(&x, &v) {
            Ok(a) => a,
            Err(e) => return halt(times, points, velocities, domain_exit(e, t, &x)),
        };
        let x2 = &x + &k1x * (0.5 * h);
        let v2 = &v + &k1v * (0.5 * h);
        let k2v = match stage(&x2, &v2) {
            Ok(a) => a,
            Err(e) => return halt(times, points, velocities, domain_exit(e, t, &x2)),
        };
        let x3 = &x + &v2 * (0.5 * h);
        let v3 = &v + &k2v * (0.5 * h);
        let k3v = match stage(&x3, &v3) {
            Ok(a) => a,
            Err(e) => return halt(times, points, velocities, domain_exit(e, t, &x3)),
        };
        let x4 = &x + &v3 * h;
        let v4 = &v + &k3v * h;
        let k4v = match stage(&x4, &v4) {
            Ok(a) => a,
            Err(e) => return halt(times, points, velocities, domain_exit(e, t, &x4)),
        };
        let k2x = v2;
        let k3x = v3;
        let k4x = v4;
        x += (k1x + &k2x * 2.0 + &k3x * 2.0 + k4x) * (h / 6.0);
        v += (k1v + &k2v * 2.0 + &k3v * 2.0 + k4v) * (h / 6.0);

        let t_next = (i + 1) as f64 * h;
        if !x.iter().chain(v.iter()).all(|c| c.is_finite()) || v.norm() > speed_limit {
            return halt(
                times,
                points,
                velocities,
                GeomError::Divergence {
                    time: t_next,
                    detail: format!(
                        "state not finite or speed {:.3e} exceeded limit {:.3e}",
                        v.norm(),
                        speed_limit
                    ),
                },
            );
        }
        match chart.point(x.clone()) {
            Ok(p) => {
                times.push(t_next);
                points.push(p);
                velocities.push(v.clone());
            }
            Err(e) => return halt(times, points, velocities, domain_exit(e, t_next, &x)),
        }
    }
    Ok(IvpOutcome::Complete(CurveRecord::new(
        chart.clone(),
        times,
        points,
        velocities,
        h,
    )?))
}

fn domain_exit(e: GeomError, time: f64, coords: &DVector<f64>) -> GeomError {
    match e {
        GeomError::OutsideDomain { .. } => GeomError::DomainExit {
            time,
            coords: coords.iter().copied().collect(),
        },
        other => other,
    }
}

/// Covariant derivative of sampled values along the curve at interior index
/// `i`: `(E′)^k = dE^k/dt + Γ^k_{ij} σ′^i E^j` with a central difference in
/// the curve parameter. Endpoint indices are not supported.
pub fn covariant_along_curve(
    conn: &ConnectionField,
    curve: &CurveRecord,
    values: &[DVector<f64>],
    i: usize,
) -> Result<DVector<f64>, GeomError> {
    if values.len() != curve.len() {
        return Err(GeomError::Degenerate(
            "along-curve values must match the curve length".into(),
        ));
    }
    if i == 0 || i + 1 >= curve.len() {
        return Err(GeomError::EndpointIndex {
            index: i,
            len: curve.len(),
        });
    }
    let dt = curve.times[i + 1] - curve.times[i - 1];
    let de = (&values[i + 1] - &values[i - 1]) / dt;
    let gamma = conn.christoffel(curve.point(i))?;
    Ok(de + gamma.contract(curve.velocity(i), &values[i]))
}

/// `‖σ″‖` at interior index `i`: the geodesic defect of the record itself.
pub fn geodesic_defect(
    conn: &ConnectionField,
    curve: &CurveRecord,
    i: usize,
) -> Result<f64, GeomError> {
    Ok(covariant_along_curve(conn, curve, &curve.velocities, i)?.norm())
}

struct CurveContext {
    base: CurveRecord,
}

fn base_curve(s: &SubmersionMap, curve: &CurveRecord) -> Result<CurveContext, GeomError> {
    Ok(CurveContext {
        base: curve.project(s)?,
    })
}

/// Horizontal decomposition residual for a field `E` along a curve `σ`:
///
/// `π_*(H(E′)) − [E_*′ + π_*(A_H U + A_X V + T_U V) − e^{2φ} π_*(grad φ) g_b(π_*X, π_*H)`
/// `+ X(φ) π_*H + H(φ) π_*X]`
///
/// with `X = H(σ′)`, `U = V(σ′)`, `H`/`V` the horizontal/vertical parts of
/// `E` at the sample, and `E_* = π_* E` differentiated on the projected
/// curve with `∇*`. The first mixed term contracts `U` with the horizontal
/// part of `E` (at `E = σ′` this is `A_X U`, giving the acceleration split).
#[allow(clippy::too_many_arguments)]
pub fn decomposition_residual_h(
    s: &SubmersionMap,
    conn_m: &ConnectionField,
    conn_b: &ConnectionField,
    phi: &ScalarField,
    curve: &CurveRecord,
    e_values: &[DVector<f64>],
    i: usize,
    h: f64,
) -> Result<DVector<f64>, GeomError> {
    let ctx = base_curve(s, curve)?;
    decomposition_residual_h_with(s, conn_m, conn_b, phi, curve, &ctx, e_values, i, h)
}

#[allow(clippy::too_many_arguments)]
fn decomposition_residual_h_with(
    s: &SubmersionMap,
    conn_m: &ConnectionField,
    conn_b: &ConnectionField,
    phi: &ScalarField,
    curve: &CurveRecord,
    ctx: &CurveContext,
    e_values: &[DVector<f64>],
    i: usize,
    h: f64,
) -> Result<DVector<f64>, GeomError> {
    let p = curve.point(i);
    let hp = s.horizontal_projector(p)?;
    let vp = s.vertical_projector(p)?;
    let sdot = curve.velocity(i);
    let x = &hp * sdot;
    let u = &vp * sdot;
    let e_h = &hp * &e_values[i];
    let e_v = &vp * &e_values[i];

    let e_prime = covariant_along_curve(conn_m, curve, e_values, i)?;
    let lhs = s.pushforward(p, &(&hp * e_prime))?;

    // E_* differentiated on the projected curve with the base connection.
    let e_star: Vec<DVector<f64>> = (i - 1..=i + 1)
        .map(|j| s.pushforward(curve.point(j), &e_values[j]))
        .collect::<Result<_, _>>()?;
    let dt = curve.times[i + 1] - curve.times[i - 1];
    let de_star = (&e_star[2] - &e_star[0]) / dt;
    let gamma_b = conn_b.christoffel(ctx.base.point(i))?;
    let e_star_prime = de_star + gamma_b.contract(ctx.base.velocity(i), &e_star[1]);

    let a_hu = tensor_a(s, conn_m, &VectorField::constant(e_h.clone()), &VectorField::constant(u.clone()), p, h)?;
    let a_xv = tensor_a(s, conn_m, &VectorField::constant(x.clone()), &VectorField::constant(e_v.clone()), p, h)?;
    let t_uv = tensor_t(s, conn_m, &VectorField::constant(u.clone()), &VectorField::constant(e_v), p, h)?;
    let mixed = s.pushforward(p, &(a_hu + a_xv + t_uv))?;

    let phi_val = phi.eval(p)?;
    let scale = (2.0 * phi_val).exp();
    let grad = metric_gradient(s.source(), s.metric_m(), phi, p, h)?;
    let push_grad = s.pushforward(p, &grad)?;
    let push_x = s.pushforward(p, &x)?;
    let push_h = s.pushforward(p, &e_h)?;
    let gb = s.metric_b().eval(ctx.base.point(i))?;
    let gb_xh = (&gb * &push_h).dot(&push_x);
    let x_phi = phi.derivative_along(s.source(), p, &x, h)?;
    let h_phi = phi.derivative_along(s.source(), p, &e_h, h)?;

    let rhs = e_star_prime + mixed - push_grad * (scale * gb_xh)
        + &push_h * x_phi
        + &push_x * h_phi;
    Ok(lhs - rhs)
}

/// Vertical decomposition residual for a field `E` along a curve:
/// `V(E′) − [A_X H + T_U H + V(V′)]`.
#[allow(clippy::too_many_arguments)]
pub fn decomposition_residual_v(
    s: &SubmersionMap,
    conn_m: &ConnectionField,
    phi: &ScalarField,
    curve: &CurveRecord,
    e_values: &[DVector<f64>],
    i: usize,
    h: f64,
) -> Result<DVector<f64>, GeomError> {
    let _ = phi;
    let p = curve.point(i);
    let hp = s.horizontal_projector(p)?;
    let vp = s.vertical_projector(p)?;
    let sdot = curve.velocity(i);
    let x = &hp * sdot;
    let u = &vp * sdot;
    let e_h = &hp * &e_values[i];

    let e_prime = covariant_along_curve(conn_m, curve, e_values, i)?;
    let lhs = &vp * e_prime;

    // V(V′): the vertical part of E differentiated along the curve.
    let v_values: Vec<DVector<f64>> = (i - 1..=i + 1)
        .map(|j| Ok(s.vertical_projector(curve.point(j))? * &e_values[j]))
        .collect::<Result<_, GeomError>>()?;
    let dt = curve.times[i + 1] - curve.times[i - 1];
    let dv = (&v_values[2] - &v_values[0]) / dt;
    let gamma = conn_m.christoffel(p)?;
    let v_prime = dv + gamma.contract(sdot, &v_values[1]);

    let a_xh = tensor_a(s, conn_m, &VectorField::constant(x), &VectorField::constant(e_h.clone()), p, h)?;
    let t_uh = tensor_t(s, conn_m, &VectorField::constant(u), &VectorField::constant(e_h), p, h)?;
    let rhs = a_xh + t_uh + &vp * v_prime;
    Ok(lhs - rhs)
}

/// The two acceleration-split residuals for `σ″` (the decomposition at
/// `E = σ′`), as residual reports.
#[allow(clippy::too_many_arguments)]
pub fn sigma_dd_residuals(
    s: &SubmersionMap,
    conn_m: &ConnectionField,
    conn_b: &ConnectionField,
    phi: &ScalarField,
    curve: &CurveRecord,
    i: usize,
    h: f64,
    tolerance: f64,
) -> Result<(ResidualReport, ResidualReport), GeomError> {
    let horizontal =
        decomposition_residual_h(s, conn_m, conn_b, phi, curve, &curve.velocities, i, h)?;
    let vertical = decomposition_residual_v(s, conn_m, phi, curve, &curve.velocities, i, h)?;
    let p = curve.point(i).to_vec();
    let inputs = format!("E = sigma' at t = {:.6}", curve.time(i));
    Ok((
        ResidualReport::new(
            IdentityId::CurveSplitHorizontal,
            p.clone(),
            inputs.clone(),
            horizontal.norm(),
            tolerance,
        ),
        ResidualReport::new(
            IdentityId::CurveSplitVertical,
            p,
            inputs,
            vertical.norm(),
            tolerance,
        ),
    ))
}

/// Outcome of the geodesic-projection audit at one interior sample.
#[derive(Clone, Debug, Serialize)]
pub struct ProjectionCheck {
    /// `‖π_*(2A_X U + T_U U) + 2X(φ)π_*X − π_*(grad φ)‖X‖²‖`.
    pub condition_residual: f64,
    /// `‖σ_*″‖` of the projected curve, from an independent code path.
    pub base_defect: f64,
    pub condition_holds: bool,
    pub projection_is_geodesic: bool,
    /// The two thresholded verdicts agree (the biconditional, as predicates).
    pub agree: bool,
}

/// Residual of the projection condition
/// `π_*(2A_X U + T_U U) + 2X(φ)π_*X − π_*(grad φ)‖X‖²` at interior sample
/// `i` of a curve, with `X = H(σ′)` and `U = V(σ′)`.
pub fn projection_condition_residual(
    s: &SubmersionMap,
    conn_m: &ConnectionField,
    phi: &ScalarField,
    curve: &CurveRecord,
    i: usize,
    h: f64,
) -> Result<f64, GeomError> {
    let p = curve.point(i);
    let hp = s.horizontal_projector(p)?;
    let vp = s.vertical_projector(p)?;
    let sdot = curve.velocity(i);
    let x = &hp * sdot;
    let u = &vp * sdot;

    let a_xu = tensor_a(
        s,
        conn_m,
        &VectorField::constant(x.clone()),
        &VectorField::constant(u.clone()),
        p,
        h,
    )?;
    let t_uu = tensor_t(
        s,
        conn_m,
        &VectorField::constant(u.clone()),
        &VectorField::constant(u),
        p,
        h,
    )?;
    let push_mixed = s.pushforward(p, &(a_xu * 2.0 + t_uu))?;
    let x_phi = phi.derivative_along(s.source(), p, &x, h)?;
    let push_x = s.pushforward(p, &x)?;
    let grad = metric_gradient(s.source(), s.metric_m(), phi, p, h)?;
    let push_grad = s.pushforward(p, &grad)?;
    let x_norm_sq = s.metric_m().inner(p, &x, &x)?;
    Ok((push_mixed + &push_x * (2.0 * x_phi) - push_grad * x_norm_sq).norm())
}

/// Evaluates the projection condition at interior sample `i` of a geodesic
/// `σ`, and independently measures the geodesic defect of `π ∘ σ`.
///
/// Precondition: the record satisfies the geodesic equation at `i`
/// (`‖σ″‖ ≤ 1e-6`).
#[allow(clippy::too_many_arguments)]
pub fn projection_condition(
    s: &SubmersionMap,
    conn_m: &ConnectionField,
    conn_b: &ConnectionField,
    phi: &ScalarField,
    curve: &CurveRecord,
    i: usize,
    h: f64,
    tolerance: f64,
) -> Result<ProjectionCheck, GeomError> {
    let defect = geodesic_defect(conn_m, curve, i)?;
    if defect > 1e-6 {
        return Err(GeomError::PreconditionFailed {
            what: "projection condition needs a geodesic input curve".into(),
            measured: defect,
            required: 1e-6,
        });
    }
    let condition_residual = projection_condition_residual(s, conn_m, phi, curve, i, h)?;

    let base = curve.project(s)?;
    let base_defect = geodesic_defect(conn_b, &base, i)?;

    let condition_holds = condition_residual <= tolerance;
    let projection_is_geodesic = base_defect <= tolerance;
    Ok(ProjectionCheck {
        condition_residual,
        base_defect,
        condition_holds,
        projection_is_geodesic,
        agree: condition_holds == projection_is_geodesic,
    })
}

/// Integrates the horizontal lift of a base curve `α` from the fiber point
/// `p0`, using every second sample of `α` as one 4th-order step (so stage
/// times land exactly on the base samples and no interpolation is needed).
pub fn horizontal_lift_curve(
    s: &SubmersionMap,
    alpha: &CurveRecord,
    p0: &Point,
) -> Result<CurveRecord, GeomError> {
    s.source().check_point(p0)?;
    if alpha.len() < 3 {
        return Err(GeomError::Degenerate(
            "base curve needs at least 3 samples for lifting".into(),
        ));
    }
    let start = s.project(p0)?;
    let start_gap = (start.coords() - alpha.point(0).coords()).norm();
    if start_gap > 1e-10 {
        return Err(GeomError::PreconditionFailed {
            what: "lift start must sit on the fiber of the base curve start".into(),
            measured: start_gap,
            required: 1e-10,
        });
    }

    let lift_steps = (alpha.len() - 1) / 2;
    let h = 2.0 * alpha.step();
    let lift_at = |coords: &DVector<f64>, w: &DVector<f64>| -> Result<DVector<f64>, GeomError> {
        let p = s.source().point(coords.clone())?;
        s.horizontal_lift(&p, w)
    };

    let mut x = p0.coords().clone();
    let mut times = vec![alpha.time(0)];
    let mut points = vec![p0.clone()];
    let mut velocities = vec![s.horizontal_lift(p0, alpha.velocity(0))?];

    for step_idx in 0..lift_steps {
        let j = 2 * step_idx;
        let w0 = alpha.velocity(j);
        let w1 = alpha.velocity(j + 1);
        let w2 = alpha.velocity(j + 2);
        let k1 = lift_at(&x, w0)?;
        let k2 = lift_at(&(&x + &k1 * (0.5 * h)), w1)?;
        let k3 = lift_at(&(&x + &k2 * (0.5 * h)), w1)?;
        let k4 = lift_at(&(&x + &k3 * h), w2)?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let p = s.source().point(x.clone())?;
        times.push(alpha.time(j + 2));
        velocities.push(s.horizontal_lift(&p, w2)?);
        points.push(p);
    }
    CurveRecord::new(s.source().clone(), times, points, velocities, h)
}

/// Sup-norm drift of `π ∘ lift` from the base curve it was lifted from.
pub fn projection_drift(
    s: &SubmersionMap,
    lift: &CurveRecord,
    alpha: &CurveRecord,
) -> Result<f64, GeomError> {
    let mut worst: f64 = 0.0;
    for i in 0..lift.len() {
        let projected = s.project(lift.point(i))?;
        let j = 2 * i;
        if j >= alpha.len() {
            break;
        }
        worst = worst.max((projected.coords() - alpha.point(j).coords()).norm());
    }
    Ok(worst)
}

/// Outcome of the lift-geodesic audit for a base geodesic.
#[derive(Clone, Debug, Serialize)]
pub struct LiftCheck {
    /// Whether `A_Z Z ≈ 0` holds over horizontal unit directions; the
    /// equivalence below is only asserted under this hypothesis.
    pub applicable: bool,
    /// Largest `‖A_Z Z‖_{g_m}` over `g_m`-orthonormal horizontal directions.
    pub a_zz_max: f64,
    /// Sup drift of `π ∘ lift` from the base curve.
    pub drift: f64,
    /// Largest interior `‖σ″‖` of the lift.
    pub lift_defect: f64,
    /// Largest `‖2X(φ)π_*X − π_*(grad φ)‖X‖²‖` along the lift.
    pub condition_residual: f64,
    pub lift_is_geodesic: bool,
    pub condition_holds: bool,
    pub agree: bool,
}

/// Lifts a base geodesic and audits the equivalence "every horizontal lift
/// is a geodesic iff `2X(φ)π_*X = π_*(grad φ)‖X‖²`", which holds under the
/// hypothesis `A_Z Z = 0` for horizontal `Z`.
#[allow(clippy::too_many_arguments)]
pub fn lift_geodesic_check(
    s: &SubmersionMap,
    conn_m: &ConnectionField,
    conn_b: &ConnectionField,
    phi: &ScalarField,
    alpha: &CurveRecord,
    p0: &Point,
    h: f64,
    tolerance: f64,
    hypothesis_tolerance: f64,
) -> Result<(CurveRecord, LiftCheck), GeomError> {
    // Base curve must be a geodesic.
    let stride = (alpha.len() / 32).max(1);
    let mut base_defect: f64 = 0.0;
    for i in alpha.interior_indices().step_by(stride) {
        base_defect = base_defect.max(geodesic_defect(conn_b, alpha, i)?);
    }
    if base_defect > 1e-6 {
        return Err(GeomError::PreconditionFailed {
            what: "lift check needs a base geodesic".into(),
            measured: base_defect,
            required: 1e-6,
        });
    }

    let lift = horizontal_lift_curve(s, alpha, p0)?;
    let drift = projection_drift(s, &lift, alpha)?;

    let sample_stride = (lift.len() / 16).max(1);
    let mut a_zz_max: f64 = 0.0;
    let mut lift_defect: f64 = 0.0;
    let mut condition_residual: f64 = 0.0;
    for i in lift.interior_indices().step_by(sample_stride) {
        let p = lift.point(i);
        for z in s.horizontal_frame(p)? {
            let azz = tensor_a(
                s,
                conn_m,
                &VectorField::constant(z.clone()),
                &VectorField::constant(z),
                p,
                h,
            )?;
            a_zz_max = a_zz_max.max(s.metric_m().norm(p, &azz)?);
        }
        lift_defect = lift_defect.max(geodesic_defect(conn_m, &lift, i)?);
        let x = lift.velocity(i);
        let x_phi = phi.derivative_along(s.source(), p, x, h)?;
        let push_x = s.pushforward(p, x)?;
        let grad = metric_gradient(s.source(), s.metric_m(), phi, p, h)?;
        let push_grad = s.pushforward(p, &grad)?;
        let x_norm_sq = s.metric_m().inner(p, x, x)?;
        condition_residual = condition_residual
            .max((&push_x * (2.0 * x_phi) - push_grad * x_norm_sq).norm());
    }

    let applicable = a_zz_max <= hypothesis_tolerance;
    let lift_is_geodesic = lift_defect <= tolerance;
    let condition_holds = condition_residual <= tolerance;
    let check = LiftCheck {
        applicable,
        a_zz_max,
        drift,
        lift_defect,
        condition_residual,
        lift_is_geodesic,
        condition_holds,
        agree: lift_is_geodesic == condition_holds,
    };
    Ok((lift, check))
}
