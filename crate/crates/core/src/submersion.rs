//! Submersions with a metric-orthogonal horizontal distribution: the
//! vertical/horizontal splitting, horizontal lifts, conformal factor
//! recovery, the compatibility identity between a connection upstairs and a
//! connection on the base, the induced base connection, and the connection
//! induced on fibers.
//!
//! The horizontal space at `p` is always the `g_m`-orthogonal complement of
//! `ker π_*`, realized as the range of `g^{-1} J^T` (`J` the Jacobian of the
//! projection), so lifts solve the small SPD system `(J g^{-1} J^T) λ = w`
//! exactly.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::chart::{fd_directional, Chart, Point, ScalarField, VectorField};
use crate::connection::{
    covariant_derivative, metric_gradient, Christoffel, ConnectionField, MetricField,
};
use crate::error::GeomError;
use crate::sample::DomainBox;

type ProjectFn = dyn Fn(&Point) -> Result<Point, GeomError> + Send + Sync;
type DifferentialFn = dyn Fn(&Point) -> Result<DMatrix<f64>, GeomError> + Send + Sync;
type FiberSamplerFn = dyn Fn(&Point, usize) -> Result<Vec<Point>, GeomError> + Send + Sync;
type FiberEmbedFn = dyn Fn(&Point, &DVector<f64>) -> Result<Point, GeomError> + Send + Sync;

/// A smooth onto map `π: M → B` with its differential, source and target
/// charts (both carrying metrics), and a deterministic sampler of fibers.
#[derive(Clone)]
pub struct SubmersionMap {
    source: Chart,
    target: Chart,
    project: Arc<ProjectFn>,
    differential: Arc<DifferentialFn>,
    fiber_sampler: Arc<FiberSamplerFn>,
    fiber_embed: Option<Arc<FiberEmbedFn>>,
}

impl SubmersionMap {
    /// General constructor. `differential` must produce the `m×n` Jacobian of
    /// `project` (rows = base dimension).
    pub fn new<P, D, F>(
        source: Chart,
        target: Chart,
        project: P,
        differential: D,
        fiber_sampler: F,
    ) -> Result<Self, GeomError>
    where
        P: Fn(&Point) -> Result<Point, GeomError> + Send + Sync + 'static,
        D: Fn(&Point) -> Result<DMatrix<f64>, GeomError> + Send + Sync + 'static,
        F: Fn(&Point, usize) -> Result<Vec<Point>, GeomError> + Send + Sync + 'static,
    {
        if source.metric().is_none() || target.metric().is_none() {
            return Err(GeomError::Unsupported(
                "submersion charts must carry metrics".into(),
            ));
        }
        if target.dim() >= source.dim() {
            return Err(GeomError::Unsupported(format!(
                "base dimension {} must be smaller than total dimension {}",
                target.dim(),
                source.dim()
            )));
        }
        Ok(SubmersionMap {
            source,
            target,
            project: Arc::new(project),
            differential: Arc::new(differential),
            fiber_sampler: Arc::new(fiber_sampler),
            fiber_embed: None,
        })
    }

    /// Projection onto the first `m` coordinates, with fibers parametrized by
    /// the remaining coordinates inside `fiber_box`. This covers every
    /// built-in geometry; it is the only shape for which fiber connections
    /// are available.
    pub fn coordinate_split(
        source: Chart,
        target: Chart,
        fiber_box: DomainBox,
    ) -> Result<Self, GeomError> {
        let n = source.dim();
        let m = target.dim();
        if fiber_box.dim() != n - m {
            return Err(GeomError::Unsupported(format!(
                "fiber box dimension {} does not match fiber dimension {}",
                fiber_box.dim(),
                n - m
            )));
        }
        let target_for_project = target.clone();
        let project = move |p: &Point| {
            target_for_project.point(DVector::from_fn(m, |i, _| p.coord(i)))
        };
        let differential = move |_: &Point| {
            let mut j = DMatrix::zeros(m, n);
            for i in 0..m {
                j[(i, i)] = 1.0;
            }
            Ok(j)
        };
        let source_for_embed = source.clone();
        let embed = move |b: &Point, w: &DVector<f64>| {
            let mut coords = DVector::zeros(n);
            for i in 0..m {
                coords[i] = b.coord(i);
            }
            for a in 0..n - m {
                coords[m + a] = w[a];
            }
            source_for_embed.point(coords)
        };
        let embed_arc: Arc<FiberEmbedFn> = Arc::new(embed);
        let sampler_embed = embed_arc.clone();
        let sampler_box = fiber_box;
        let sampler = move |b: &Point, count: usize| {
            (0..count)
                .map(|i| sampler_embed(b, &sampler_box.halton_point(i)))
                .collect::<Result<Vec<_>, _>>()
        };
        let mut s = SubmersionMap::new(source, target, project, differential, sampler)?;
        s.fiber_embed = Some(embed_arc);
        Ok(s)
    }

    pub fn source(&self) -> &Chart {
        &self.source
    }

    pub fn target(&self) -> &Chart {
        &self.target
    }

    pub fn total_dim(&self) -> usize {
        self.source.dim()
    }

    pub fn base_dim(&self) -> usize {
        self.target.dim()
    }

    pub fn fiber_dim(&self) -> usize {
        self.source.dim() - self.target.dim()
    }

    pub fn metric_m(&self) -> &MetricField {
        self.source.metric().expect("source chart carries a metric")
    }

    pub fn metric_b(&self) -> &MetricField {
        self.target.metric().expect("target chart carries a metric")
    }

    pub fn project(&self, p: &Point) -> Result<Point, GeomError> {
        self.source.check_point(p)?;
        (self.project)(p)
    }

    pub fn differential_at(&self, p: &Point) -> Result<DMatrix<f64>, GeomError> {
        self.source.check_point(p)?;
        (self.differential)(p)
    }

    /// Pushforward `π_* u` at `p`.
    pub fn pushforward(&self, p: &Point, u: &DVector<f64>) -> Result<DVector<f64>, GeomError> {
        Ok(self.differential_at(p)? * u)
    }

    /// Deterministic points on the fiber over `b`.
    pub fn fiber_samples(&self, b: &Point, count: usize) -> Result<Vec<Point>, GeomError> {
        self.target.check_point(b)?;
        (self.fiber_sampler)(b, count)
    }

    /// Point of the fiber over `b` with vertical coordinates `w`; only
    /// available for coordinate-split submersions.
    pub fn fiber_point(&self, b: &Point, w: &DVector<f64>) -> Result<Point, GeomError> {
        match &self.fiber_embed {
            Some(embed) => embed(b, w),
            None => Err(GeomError::UnsupportedFiber {
                base_coords: b.to_vec(),
            }),
        }
    }

    pub fn has_fiber_chart(&self) -> bool {
        self.fiber_embed.is_some()
    }

    fn splitting(&self, p: &Point) -> Result<Splitting, GeomError> {
        let j = self.differential_at(p)?;
        let g_chol = self.metric_m().cholesky(p)?;
        let ginv_jt = g_chol.solve(&j.transpose());
        let a = &j * &ginv_jt;
        let a_chol = Cholesky::new(a).ok_or_else(|| GeomError::RankDeficient {
            coords: p.to_vec(),
            base_dim: self.base_dim(),
        })?;
        Ok(Splitting { j, ginv_jt, a_chol })
    }

    /// `g_m`-orthogonal projector onto the vertical space `ker π_*`.
    pub fn vertical_projector(&self, p: &Point) -> Result<DMatrix<f64>, GeomError> {
        let h = self.horizontal_projector(p)?;
        Ok(DMatrix::identity(h.nrows(), h.ncols()) - h)
    }

    /// `g_m`-orthogonal projector onto the horizontal space.
    pub fn horizontal_projector(&self, p: &Point) -> Result<DMatrix<f64>, GeomError> {
        let s = self.splitting(p)?;
        Ok(&s.ginv_jt * s.a_chol.solve(&s.j))
    }

    /// The unique horizontal `u` at `p` with `π_* u = w`.
    pub fn horizontal_lift(&self, p: &Point, w: &DVector<f64>) -> Result<DVector<f64>, GeomError> {
        let s = self.splitting(p)?;
        Ok(&s.ginv_jt * s.a_chol.solve(w))
    }

    /// The basic field over a base field: at every point the horizontal lift
    /// of the base field's value, so it is π-related by construction.
    pub fn lift_field(&self, base_field: &VectorField) -> VectorField {
        let s = self.clone();
        let f = base_field.clone();
        VectorField::fallible(move |q| {
            let b = s.project(q)?;
            s.horizontal_lift(q, &f.eval(&b)?)
        })
    }

    /// Vertical part of a field, as a field.
    pub fn vertical_part(&self, field: &VectorField) -> VectorField {
        let s = self.clone();
        let f = field.clone();
        VectorField::fallible(move |q| Ok(s.vertical_projector(q)? * f.eval(q)?))
    }

    /// Horizontal part of a field, as a field.
    pub fn horizontal_part(&self, field: &VectorField) -> VectorField {
        let s = self.clone();
        let f = field.clone();
        VectorField::fallible(move |q| Ok(s.horizontal_projector(q)? * f.eval(q)?))
    }

    /// A `g_m`-orthonormal frame of the horizontal space at `p` (lifts of the
    /// base coordinate frame, Gram-Schmidt orthonormalized).
    pub fn horizontal_frame(&self, p: &Point) -> Result<Vec<DVector<f64>>, GeomError> {
        let m = self.base_dim();
        let mut lifted = Vec::with_capacity(m);
        for i in 0..m {
            let mut w = DVector::zeros(m);
            w[i] = 1.0;
            lifted.push(self.horizontal_lift(p, &w)?);
        }
        gram_schmidt(&self.metric_m().eval(p)?, lifted, p)
    }

    /// Max finite-difference defect of the declared differential against the
    /// Jacobian of the projection map.
    pub fn differential_defect(&self, p: &Point, h: f64) -> Result<f64, GeomError> {
        let j = self.differential_at(p)?;
        let n = self.total_dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let mut dir = DVector::zeros(n);
            dir[i] = 1.0;
            let col: DVector<f64> = fd_directional(
                &self.source,
                |q| Ok(self.project(q)?.coords().clone()),
                p,
                &dir,
                h,
            )?;
            for r in 0..self.base_dim() {
                worst = worst.max((col[r] - j[(r, i)]).abs());
            }
        }
        Ok(worst)
    }
}

struct Splitting {
    j: DMatrix<f64>,
    ginv_jt: DMatrix<f64>,
    a_chol: Cholesky<f64, Dyn>,
}

fn gram_schmidt(
    g: &DMatrix<f64>,
    basis: Vec<DVector<f64>>,
    p: &Point,
) -> Result<Vec<DVector<f64>>, GeomError> {
    let mut frame: Vec<DVector<f64>> = Vec::with_capacity(basis.len());
    for mut v in basis {
        for u in &frame {
            let c = (g * &v).dot(u);
            v -= u * c;
        }
        let norm_sq = (g * &v).dot(&v);
        if norm_sq <= 1e-24 {
            return Err(GeomError::Degenerate(format!(
                "zero-norm frame vector at {:?}",
                p.to_vec()
            )));
        }
        frame.push(v / norm_sq.sqrt());
    }
    Ok(frame)
}

/// Conformal factor recovered at a point, plus the conformality residual
/// certifying it.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConformalRecovery {
    pub phi: f64,
    pub residual: f64,
}

/// Recovers `φ(p) = ½ log(g_m(u,u) / g_b(π_*u, π_*u))` from any horizontal
/// `u`, and reports the worst mismatch of `g_m(u_a, u_b)` against
/// `e^{2φ} g_b(π_*u_a, π_*u_b)` over a `g_b`-orthonormal lifted frame.
pub fn recover_conformal_factor(
    s: &SubmersionMap,
    p: &Point,
) -> Result<ConformalRecovery, GeomError> {
    let b = s.project(p)?;
    let g_b = s.metric_b().eval(&b)?;
    let m = s.base_dim();
    let mut basis = Vec::with_capacity(m);
    for i in 0..m {
        let mut w = DVector::zeros(m);
        w[i] = 1.0;
        basis.push(w);
    }
    let frame = gram_schmidt(&g_b, basis, &b)?;
    let lifts: Vec<DVector<f64>> = frame
        .iter()
        .map(|w| s.horizontal_lift(p, w))
        .collect::<Result<_, _>>()?;
    let g_m = s.metric_m().eval(p)?;
    let first = (&g_m * &lifts[0]).dot(&lifts[0]);
    if first <= 0.0 {
        return Err(GeomError::Degenerate(format!(
            "zero-norm horizontal test vector at {:?}",
            p.to_vec()
        )));
    }
    let phi = 0.5 * first.ln();
    let scale = (2.0 * phi).exp();
    let mut residual: f64 = 0.0;
    for a in 0..m {
        for c in 0..m {
            let gm = (&g_m * &lifts[c]).dot(&lifts[a]);
            let gb = if a == c { scale } else { 0.0 };
            residual = residual.max((gm - gb).abs());
        }
    }
    Ok(ConformalRecovery { phi, residual })
}

/// Defect of the compatibility identity between `∇` on `M` and `∇*` on `B`
/// for base fields `X`, `Y` at `p`:
///
/// `H(∇_X̃ Ỹ) − [(∇*_X Y)~ + X̃(φ)Ỹ + Ỹ(φ)X̃ − H(grad φ) g_m(X̃, Ỹ)]`
///
/// where lifts are basic by pointwise construction and `grad φ` is taken
/// with respect to `g_m`. Zero iff the pair satisfies the identity at `p`.
pub fn cshd_defect(
    s: &SubmersionMap,
    conn_m: &ConnectionField,
    conn_b: &ConnectionField,
    phi: &ScalarField,
    x_base: &VectorField,
    y_base: &VectorField,
    p: &Point,
    h: f64,
) -> Result<DVector<f64>, GeomError> {
    let x_lift = s.lift_field(x_base);
    let y_lift = s.lift_field(y_base);
    let lhs = s.horizontal_projector(p)?
        * covariant_derivative(s.source(), conn_m, &x_lift, &y_lift, p, h)?;

    let b = s.project(p)?;
    let star = covariant_derivative(s.target(), conn_b, x_base, y_base, &b, h)?;
    let star_lift = s.horizontal_lift(p, &star)?;

    let xv = x_lift.eval(p)?;
    let yv = y_lift.eval(p)?;
    let x_phi = phi.derivative_along(s.source(), p, &xv, h)?;
    let y_phi = phi.derivative_along(s.source(), p, &yv, h)?;
    let grad = metric_gradient(s.source(), s.metric_m(), phi, p, h)?;
    let h_grad = s.horizontal_projector(p)? * grad;
    let gm_xy = s.metric_m().inner(p, &xv, &yv)?;

    let rhs = star_lift + &yv * x_phi + &xv * y_phi - h_grad * gm_xy;
    Ok(lhs - rhs)
}

/// Fiber-spread certificate for the induced connection.
#[derive(Clone, Debug, Serialize)]
pub struct ProjectabilityReport {
    pub probes: usize,
    pub fiber_samples: usize,
    pub max_spread: f64,
    pub tolerance: f64,
    pub worst_base_point: Vec<f64>,
}

/// The connection induced on the base by `∇` and `φ`:
///
/// `∇*_X Y = π_*(∇_X̃ Ỹ) − X̃(φ)Y − Ỹ(φ)X + e^{2φ} π_*(grad φ) g_b(X, Y)`
///
/// assembled on coordinate fields of `B` at the first fiber sample.
/// Well-definedness is certified numerically: at every probe point the
/// formula is evaluated over `fiber_samples` fiber points and the spread of
/// the resulting Christoffel entries must stay within `tolerance`.
pub fn induced_connection(
    s: &SubmersionMap,
    conn_m: &ConnectionField,
    phi: &ScalarField,
    probes: &[Point],
    fiber_samples: usize,
    tolerance: f64,
    h: f64,
) -> Result<(ConnectionField, ProjectabilityReport), GeomError> {
    let mut max_spread: f64 = 0.0;
    let mut worst_base_point = Vec::new();
    for b in probes {
        let samples = s.fiber_samples(b, fiber_samples.max(1))?;
        let reference = induced_christoffel_at(s, conn_m, phi, b, &samples[0], h)?;
        for q in samples.iter().skip(1) {
            let cand = induced_christoffel_at(s, conn_m, phi, b, q, h)?;
            let spread = (cand - reference.clone()).max_abs();
            if spread > max_spread {
                max_spread = spread;
                worst_base_point = b.to_vec();
            }
        }
    }
    if max_spread > tolerance {
        return Err(GeomError::NotProjectable {
            base_coords: worst_base_point,
            spread: max_spread,
            tolerance,
        });
    }
    let report = ProjectabilityReport {
        probes: probes.len(),
        fiber_samples,
        max_spread,
        tolerance,
        worst_base_point,
    };
    let s_cl = s.clone();
    let conn_cl = conn_m.clone();
    let phi_cl = phi.clone();
    let m = s.base_dim();
    let conn = ConnectionField::new(m, move |b| {
        let anchor = s_cl.fiber_samples(b, 1)?.remove(0);
        induced_christoffel_at(&s_cl, &conn_cl, &phi_cl, b, &anchor, h)
    });
    Ok((conn, report))
}

fn induced_christoffel_at(
    s: &SubmersionMap,
    conn_m: &ConnectionField,
    phi: &ScalarField,
    b: &Point,
    fiber_point: &Point,
    h: f64,
) -> Result<Christoffel, GeomError> {
    let m = s.base_dim();
    let g_b = s.metric_b().eval(b)?;
    let grad = metric_gradient(s.source(), s.metric_m(), phi, fiber_point, h)?;
    let push_grad = s.pushforward(fiber_point, &grad)?;
    let phi_val = phi.eval(fiber_point)?;
    let scale = (2.0 * phi_val).exp();

    let mut lifts = Vec::with_capacity(m);
    let mut lift_vals = Vec::with_capacity(m);
    for i in 0..m {
        let field = s.lift_field(&VectorField::coordinate(i, m));
        lift_vals.push(field.eval(fiber_point)?);
        lifts.push(field);
    }
    let mut gamma = Christoffel::zeros(m);
    for i in 0..m {
        let x_phi = phi.derivative_along(s.source(), fiber_point, &lift_vals[i], h)?;
        for j in 0..m {
            let y_phi = phi.derivative_along(s.source(), fiber_point, &lift_vals[j], h)?;
            let cov =
                covariant_derivative(s.source(), conn_m, &lifts[i], &lifts[j], fiber_point, h)?;
            let mut value = s.pushforward(fiber_point, &cov)?;
            // Coordinate fields: −X̃(φ)e_j − Ỹ(φ)e_i + e^{2φ}π_*(grad φ)g_b(e_i,e_j).
            value[j] -= x_phi;
            value[i] -= y_phi;
            value += &push_grad * (scale * g_b[(i, j)]);
            for k in 0..m {
                gamma.set(k, i, j, value[k]);
            }
        }
    }
    Ok(gamma)
}

/// The fiber over a base point as a chart of its own, carrying the
/// connection `V ∇ V` restricted to fiber coordinates.
#[derive(Clone)]
pub struct FiberGeometry {
    pub chart: Chart,
    pub connection: ConnectionField,
    pub base_point: Point,
}

impl FiberGeometry {
    /// Restriction of an `M` vector field's vertical part to the fiber chart.
    pub fn restrict_field(&self, s: &SubmersionMap, field: &VectorField) -> VectorField {
        let s = s.clone();
        let b = self.base_point.clone();
        let field = field.clone();
        let m = s.base_dim();
        let k = s.fiber_dim();
        VectorField::fallible(move |w: &Point| {
            let p = s.fiber_point(&b, w.coords())?;
            let vert = s.vertical_projector(&p)? * field.eval(&p)?;
            Ok(DVector::from_fn(k, |a, _| vert[m + a]))
        })
    }
}

/// The connection induced on the fiber over `b` by `V ∇ V`: the Christoffels
/// of `V(∇_E V)` expressed in the fiber's own (vertical) coordinates.
///
/// Requires a coordinate-split submersion; other fibrations report an
/// unsupported-geometry error.
pub fn fiber_connection(
    s: &SubmersionMap,
    conn_m: &ConnectionField,
    b: &Point,
) -> Result<FiberGeometry, GeomError> {
    if !s.has_fiber_chart() {
        return Err(GeomError::UnsupportedFiber {
            base_coords: b.to_vec(),
        });
    }
    s.target.check_point(b)?;
    let m = s.base_dim();
    let k = s.fiber_dim();
    let s_dom = s.clone();
    let b_dom = b.clone();
    let chart = Chart::new(
        format!("fiber({:?})", b.to_vec()),
        k,
        move |w: &DVector<f64>| s_dom.fiber_point(&b_dom, w).is_ok(),
    );
    let s_conn = s.clone();
    let b_conn = b.clone();
    let conn_m = conn_m.clone();
    let connection = ConnectionField::new(k, move |w: &Point| {
        let p = s_conn.fiber_point(&b_conn, w.coords())?;
        let gamma_m = conn_m.christoffel(&p)?;
        let vert = s_conn.vertical_projector(&p)?;
        let n = s_conn.total_dim();
        let mut gamma = Christoffel::zeros(k);
        for a in 0..k {
            for c in 0..k {
                let mut col = DVector::zeros(n);
                for l in 0..n {
                    col[l] = gamma_m.get(l, m + a, m + c);
                }
                let v = &vert * col;
                for out in 0..k {
                    gamma.set(out, a, c, v[m + out]);
                }
            }
        }
        Ok(gamma)
    });
    Ok(FiberGeometry {
        chart,
        connection,
        base_point: b.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connection::levi_civita;
    use approx::assert_abs_diff_eq;

    const H: f64 = 1e-4;

    /// Hyperbolic half-space `x_n > 0` with `g = x_n^{-2} I`, projecting onto
    /// the first `n−1` Euclidean coordinates.
    fn hyperbolic(n: usize) -> SubmersionMap {
        let g_m = MetricField::new(move |p: &Point| {
            let y = p.coord(n - 1);
            DMatrix::identity(n, n) / (y * y)
        });
        let source = Chart::with_metric("Hn", n, move |x: &DVector<f64>| x[n - 1] > 0.0, g_m);
        let target = Chart::with_metric(
            "Rn-1",
            n - 1,
            |_: &DVector<f64>| true,
            MetricField::euclidean(n - 1),
        );
        SubmersionMap::coordinate_split(source, target, DomainBox::new(vec![0.25], vec![4.0]))
            .unwrap()
    }

    fn flat_product(n: usize, m: usize) -> SubmersionMap {
        let source = Chart::with_metric("Rn", n, |_: &DVector<f64>| true, MetricField::euclidean(n));
        let target = Chart::with_metric("Rm", m, |_: &DVector<f64>| true, MetricField::euclidean(m));
        SubmersionMap::coordinate_split(source, target, DomainBox::cube(n - m, -2.0, 2.0)).unwrap()
    }

    #[test]
    fn vertical_projector_of_diagonal_metrics_is_coordinate_split() {
        let s = hyperbolic(2);
        let p = s.source().point_from_slice(&[0.0, 2.0]).unwrap();
        let v = s.vertical_projector(&p).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert!((v - expected).abs().max() <= 1e-13);

        let s3 = flat_product(3, 2);
        let p3 = s3.source().point_from_slice(&[0.1, -0.4, 0.9]).unwrap();
        let v3 = s3.vertical_projector(&p3).unwrap();
        let mut expected3 = DMatrix::zeros(3, 3);
        expected3[(2, 2)] = 1.0;
        assert!((v3 - expected3).abs().max() <= 1e-13);
    }

    #[test]
    fn splitting_of_a_vector_on_the_hyperbolic_plane() {
        let s = hyperbolic(2);
        let p = s.source().point_from_slice(&[0.0, 2.0]).unwrap();
        let v = DVector::from_column_slice(&[3.0, 4.0]);
        let vert = s.vertical_projector(&p).unwrap() * &v;
        let horiz = s.horizontal_projector(&p).unwrap() * &v;
        assert!((vert - DVector::from_column_slice(&[0.0, 4.0])).norm() <= 1e-12);
        assert!((horiz - DVector::from_column_slice(&[3.0, 0.0])).norm() <= 1e-12);
    }

    #[test]
    fn projector_algebra_on_a_nondiagonal_metric() {
        // A metric with off-diagonal terms so the splitting is not the
        // coordinate one.
        let g = MetricField::new(|p: &Point| {
            let c = 0.3 * (p.coord(0)).tanh();
            DMatrix::from_row_slice(3, 3, &[1.5, c, 0.1, c, 1.0, 0.0, 0.1, 0.0, 2.0])
        });
        let source = Chart::with_metric("M", 3, |_: &DVector<f64>| true, g);
        let target = Chart::with_metric(
            "B",
            1,
            |_: &DVector<f64>| true,
            MetricField::euclidean(1),
        );
        let s = SubmersionMap::coordinate_split(source, target, DomainBox::cube(2, -1.0, 1.0))
            .unwrap();
        let p = s.source().point_from_slice(&[0.4, -0.2, 0.7]).unwrap();
        let v = s.vertical_projector(&p).unwrap();
        let h = s.horizontal_projector(&p).unwrap();
        let eye = DMatrix::identity(3, 3);
        assert!(((&v * &v) - &v).abs().max() <= 1e-12);
        assert!(((&h * &h) - &h).abs().max() <= 1e-12);
        assert!((&v * &h).abs().max() <= 1e-12);
        assert!((&v + &h - eye).abs().max() <= 1e-13);
        // The image of V is the kernel of the differential.
        let j = s.differential_at(&p).unwrap();
        assert!((j * &v).abs().max() <= 1e-12);
    }

    #[test]
    fn horizontal_lift_solves_the_defining_system() {
        let s = hyperbolic(2);
        let p = s.source().point_from_slice(&[0.0, 2.0]).unwrap();
        let w = DVector::from_column_slice(&[1.0]);
        let u = s.horizontal_lift(&p, &w).unwrap();
        assert!((u - DVector::from_column_slice(&[1.0, 0.0])).norm() <= 1e-12);

        let s3 = flat_product(4, 2);
        let p3 = s3.source().point_from_slice(&[0.0, 0.3, 1.0, -0.5]).unwrap();
        for w in [
            DVector::from_column_slice(&[0.7, -1.2]),
            DVector::from_column_slice(&[0.0, 0.0]),
        ] {
            let u = s3.horizontal_lift(&p3, &w).unwrap();
            assert!((s3.pushforward(&p3, &u).unwrap() - &w).norm() <= 1e-10);
            assert!((s3.vertical_projector(&p3).unwrap() * &u).norm() <= 1e-12);
        }
    }

    #[test]
    fn custom_non_split_submersion_has_consistent_splitting() {
        // π(x, y) = x + 0.3 sin(y): fibers are curved lines.
        let source = Chart::with_metric(
            "M",
            2,
            |_: &DVector<f64>| true,
            MetricField::euclidean(2),
        );
        let target = Chart::with_metric(
            "B",
            1,
            |_: &DVector<f64>| true,
            MetricField::euclidean(1),
        );
        let t2 = target.clone();
        let s = SubmersionMap::new(
            source,
            target,
            move |p: &Point| {
                t2.point(DVector::from_column_slice(&[
                    p.coord(0) + 0.3 * p.coord(1).sin(),
                ]))
            },
            |p: &Point| {
                Ok(DMatrix::from_row_slice(1, 2, &[1.0, 0.3 * p.coord(1).cos()]))
            },
            |b: &Point, count: usize| {
                // Parametrize the fiber by y.
                let chart = Chart::full_space("M", 2);
                let _ = &chart;
                (0..count)
                    .map(|i| {
                        let y = -1.0 + 2.0 * (i as f64 + 0.5) / count as f64;
                        let x = b.coord(0) - 0.3 * y.sin();
                        Chart::full_space("unused", 2).point_from_slice(&[x, y])
                    })
                    .collect()
            },
        )
        .unwrap();
        let p = s.source().point_from_slice(&[0.2, 0.9]).unwrap();
        assert!(s.differential_defect(&p, H).unwrap() <= 1e-7);
        let h = s.horizontal_projector(&p).unwrap();
        assert!(((&h * &h) - &h).abs().max() <= 1e-12);
        let w = DVector::from_column_slice(&[0.8]);
        let u = s.horizontal_lift(&p, &w).unwrap();
        assert!((s.pushforward(&p, &u).unwrap() - &w).norm() <= 1e-12);
        assert!(!s.has_fiber_chart());
        assert!(matches!(
            fiber_connection(&s, &ConnectionField::flat(2), &s.project(&p).unwrap()),
            Err(GeomError::UnsupportedFiber { .. })
        ));
    }

    #[test]
    fn conformal_factor_of_the_hyperbolic_half_space() {
        for n in [2usize, 3, 4] {
            let s = hyperbolic(n);
            let mut coords = vec![0.3; n];
            coords[n - 1] = 2.0;
            let p = s.source().point_from_slice(&coords).unwrap();
            let rec = recover_conformal_factor(&s, &p).unwrap();
            assert_abs_diff_eq!(rec.phi, -(2.0f64.ln()), epsilon = 1e-12);
            assert!(rec.residual <= 1e-12);
        }
    }

    #[test]
    fn conformal_factor_of_an_isometric_product_is_zero() {
        let s = flat_product(3, 2);
        let p = s.source().point_from_slice(&[0.5, -1.0, 0.7]).unwrap();
        let rec = recover_conformal_factor(&s, &p).unwrap();
        assert_abs_diff_eq!(rec.phi, 0.0, epsilon = 1e-14);
        assert!(rec.residual <= 1e-14);
    }

    #[test]
    fn conformal_factor_of_a_warped_metric_recovers_the_warp() {
        // g = e^{2ψ(x,y)} dx² + dy² over π(x,y) = x: φ(p) = ψ(p) pointwise,
        // even when ψ depends on the fiber coordinate.
        let psi = |x: f64, y: f64| 0.4 * (x + 0.5 * y).tanh();
        let g_m = MetricField::new(move |p: &Point| {
            let e = (2.0 * psi(p.coord(0), p.coord(1))).exp();
            DMatrix::from_row_slice(2, 2, &[e, 0.0, 0.0, 1.0])
        });
        let source = Chart::with_metric("M", 2, |_: &DVector<f64>| true, g_m);
        let target = Chart::with_metric(
            "B",
            1,
            |_: &DVector<f64>| true,
            MetricField::euclidean(1),
        );
        let s = SubmersionMap::coordinate_split(source, target, DomainBox::cube(1, -2.0, 2.0))
            .unwrap();
        let p = s.source().point_from_slice(&[0.3, -0.8]).unwrap();
        let rec = recover_conformal_factor(&s, &p).unwrap();
        assert_abs_diff_eq!(rec.phi, psi(0.3, -0.8), epsilon = 1e-12);
        assert!(rec.residual <= 1e-12);
    }

    #[test]
    fn cshd_defect_vanishes_for_the_flat_affine_pair() {
        let s = flat_product(3, 2);
        let conn_m = ConnectionField::flat(3);
        let conn_b = ConnectionField::flat(2);
        let phi = ScalarField::constant(0.0);
        let p = s.source().point_from_slice(&[0.4, -0.9, 1.1]).unwrap();
        for (i, j) in [(0usize, 0usize), (0, 1), (1, 1)] {
            let d = cshd_defect(
                &s,
                &conn_m,
                &conn_b,
                &phi,
                &VectorField::coordinate(i, 2),
                &VectorField::coordinate(j, 2),
                &p,
                H,
            )
            .unwrap();
            assert!(d.norm() <= 1e-7, "pair ({i},{j}): {}", d.norm());
        }
    }

    #[test]
    fn cshd_defect_vanishes_for_hyperbolic_levi_civita_pairs() {
        for n in [2usize, 3] {
            let s = hyperbolic(n);
            let conn_m = levi_civita(s.source(), s.metric_m(), H);
            let conn_b = levi_civita(s.target(), s.metric_b(), H);
            let phi = ScalarField::with_gradient(
                move |p: &Point| -p.coord(n - 1).ln(),
                move |p: &Point| {
                    let mut g = DVector::zeros(n);
                    g[n - 1] = -1.0 / p.coord(n - 1);
                    g
                },
            );
            let mut coords = vec![0.2; n];
            coords[n - 1] = 1.7;
            let p = s.source().point_from_slice(&coords).unwrap();
            for i in 0..n - 1 {
                for j in 0..n - 1 {
                    let d = cshd_defect(
                        &s,
                        &conn_m,
                        &conn_b,
                        &phi,
                        &VectorField::coordinate(i, n - 1),
                        &VectorField::coordinate(j, n - 1),
                        &p,
                        H,
                    )
                    .unwrap();
                    assert!(d.norm() <= 1e-5, "n={n} pair ({i},{j}): {}", d.norm());
                }
            }
        }
    }

    #[test]
    fn cshd_defect_detects_a_perturbed_base_connection() {
        let s = hyperbolic(2);
        let conn_m = levi_civita(s.source(), s.metric_m(), H);
        let mut bad = Christoffel::zeros(1);
        bad.set(0, 0, 0, 0.1);
        let conn_b = ConnectionField::constant(bad);
        let phi = ScalarField::new(|p: &Point| -p.coord(1).ln());
        let p = s.source().point_from_slice(&[0.0, 2.0]).unwrap();
        let e0 = VectorField::coordinate(0, 1);
        let d = cshd_defect(&s, &conn_m, &conn_b, &phi, &e0, &e0, &p, H).unwrap();
        // The perturbation enters the right-hand side linearly through the
        // lifted (∇*_X Y), so the first component moves by −0.1.
        assert_abs_diff_eq!(d[0], -0.1, epsilon = 1e-5);
        assert!(d.norm() >= 0.05);
    }

    #[test]
    fn induced_connection_of_flat_product_is_flat() {
        let s = flat_product(3, 2);
        let conn_m = ConnectionField::flat(3);
        let phi = ScalarField::constant(0.0);
        let probes = vec![
            s.target().point_from_slice(&[0.0, 0.0]).unwrap(),
            s.target().point_from_slice(&[1.0, -0.5]).unwrap(),
        ];
        let (conn_b, report) =
            induced_connection(&s, &conn_m, &phi, &probes, 8, 1e-5, H).unwrap();
        assert!(report.max_spread <= 1e-9);
        let gamma = conn_b.christoffel(&probes[1]).unwrap();
        assert!(gamma.max_abs() <= 1e-9);
    }

    #[test]
    fn induced_connection_of_hyperbolic_space_is_euclidean() {
        let s = hyperbolic(3);
        let conn_m = levi_civita(s.source(), s.metric_m(), H);
        let phi = ScalarField::new(|p: &Point| -p.coord(2).ln());
        let probes = vec![
            s.target().point_from_slice(&[0.0, 0.0]).unwrap(),
            s.target().point_from_slice(&[0.7, -0.3]).unwrap(),
        ];
        let (conn_b, report) =
            induced_connection(&s, &conn_m, &phi, &probes, 8, 1e-5, H).unwrap();
        assert!(report.max_spread <= 1e-6);
        let gamma = conn_b.christoffel(&probes[0]).unwrap();
        assert!(gamma.max_abs() <= 1e-6, "{}", gamma.max_abs());
    }

    #[test]
    fn induced_connection_round_trips_through_the_defect() {
        let s = hyperbolic(2);
        let conn_m = levi_civita(s.source(), s.metric_m(), H);
        let phi = ScalarField::new(|p: &Point| -p.coord(1).ln());
        let probes = vec![s.target().point_from_slice(&[0.4]).unwrap()];
        let (conn_b, _) = induced_connection(&s, &conn_m, &phi, &probes, 8, 1e-5, H).unwrap();
        let p = s.source().point_from_slice(&[0.4, 1.3]).unwrap();
        let e0 = VectorField::coordinate(0, 1);
        let d = cshd_defect(&s, &conn_m, &conn_b, &phi, &e0, &e0, &p, H).unwrap();
        assert!(d.norm() <= 1e-5, "{}", d.norm());
    }

    #[test]
    fn fiber_connection_of_the_hyperbolic_plane() {
        // Fiber {x = const} of H² keeps the Christoffel Γ^y_{yy} = −1/y.
        let s = hyperbolic(2);
        let conn_m = levi_civita(s.source(), s.metric_m(), H);
        let b = s.target().point_from_slice(&[0.0]).unwrap();
        let fiber = fiber_connection(&s, &conn_m, &b).unwrap();
        let w = fiber.chart.point_from_slice(&[2.0]).unwrap();
        let gamma = fiber.connection.christoffel(&w).unwrap();
        assert_abs_diff_eq!(gamma.get(0, 0, 0), -0.5, epsilon = 1e-6);
    }

    #[test]
    fn fiber_connection_of_the_flat_product_is_flat() {
        let s = flat_product(4, 2);
        let conn_m = ConnectionField::flat(4);
        let b = s.target().point_from_slice(&[0.3, 0.1]).unwrap();
        let fiber = fiber_connection(&s, &conn_m, &b).unwrap();
        let w = fiber.chart.point_from_slice(&[0.5, -0.5]).unwrap();
        assert!(fiber.connection.christoffel(&w).unwrap().max_abs() <= 1e-12);
    }
}
