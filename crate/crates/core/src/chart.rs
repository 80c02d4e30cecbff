//! Points, scalar and vector fields on a coordinate chart, and the central
//! finite-difference engine every other module builds on.
//!
//! A manifold is represented by a single global chart: an open domain of
//! `R^n` given by a predicate, optionally carrying a Riemannian metric.
//! Fields are evaluable closures over points; derivatives are always taken
//! with symmetric central differences of step `h` (default [`DEFAULT_FD_STEP`]),
//! which is exact on quadratics and `O(h^2)` on smooth fields.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::connection::MetricField;
use crate::error::GeomError;

/// Default central-difference step, assuming all quantities are `O(1)`.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

static NEXT_CHART_ID: AtomicU64 = AtomicU64::new(1);

type DomainFn = dyn Fn(&DVector<f64>) -> bool + Send + Sync;

struct ChartInner {
    id: u64,
    label: String,
    dim: usize,
    domain: Box<DomainFn>,
    metric: Option<MetricField>,
}

/// One global coordinate chart of a manifold: dimension, open-domain
/// predicate, label, and (optionally) a Riemannian metric.
///
/// Charts are cheap to clone; all clones share the same identity, and every
/// [`Point`] remembers which chart it belongs to.
#[derive(Clone)]
pub struct Chart(Arc<ChartInner>);

impl Chart {
    pub fn new<D>(label: impl Into<String>, dim: usize, domain: D) -> Self
    where
        D: Fn(&DVector<f64>) -> bool + Send + Sync + 'static,
    {
        assert!(dim >= 1, "chart dimension must be at least 1");
        Chart(Arc::new(ChartInner {
            id: NEXT_CHART_ID.fetch_add(1, Ordering::Relaxed),
            label: label.into(),
            dim,
            domain: Box::new(domain),
            metric: None,
        }))
    }

    pub fn with_metric<D>(
        label: impl Into<String>,
        dim: usize,
        domain: D,
        metric: MetricField,
    ) -> Self
    where
        D: Fn(&DVector<f64>) -> bool + Send + Sync + 'static,
    {
        assert!(dim >= 1, "chart dimension must be at least 1");
        Chart(Arc::new(ChartInner {
            id: NEXT_CHART_ID.fetch_add(1, Ordering::Relaxed),
            label: label.into(),
            dim,
            domain: Box::new(domain),
            metric: Some(metric),
        }))
    }

    /// Chart covering all of `R^n`.
    pub fn full_space(label: impl Into<String>, dim: usize) -> Self {
        Chart::new(label, dim, |_| true)
    }

    pub fn dim(&self) -> usize {
        self.0.dim
    }

    pub fn label(&self) -> &str {
        &self.0.label
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn metric(&self) -> Option<&MetricField> {
        self.0.metric.as_ref()
    }

    pub fn contains(&self, coords: &DVector<f64>) -> bool {
        coords.len() == self.0.dim && (self.0.domain)(coords)
    }

    /// Builds a point of this chart, validating dimension and domain.
    pub fn point(&self, coords: DVector<f64>) -> Result<Point, GeomError> {
        if coords.len() != self.0.dim {
            return Err(GeomError::DimensionMismatch {
                chart: self.0.label.clone(),
                dim: self.0.dim,
                got: coords.len(),
                coords: coords.iter().copied().collect(),
            });
        }
        if !(self.0.domain)(&coords) {
            return Err(GeomError::OutsideDomain {
                chart: self.0.label.clone(),
                coords: coords.iter().copied().collect(),
            });
        }
        Ok(Point {
            coords,
            chart_id: self.0.id,
        })
    }

    pub fn point_from_slice(&self, coords: &[f64]) -> Result<Point, GeomError> {
        self.point(DVector::from_column_slice(coords))
    }

    /// Errors unless `p` was built by (a clone of) this chart.
    pub fn check_point(&self, p: &Point) -> Result<(), GeomError> {
        if p.chart_id != self.0.id {
            return Err(GeomError::ChartMismatch {
                chart: self.0.label.clone(),
                point_chart: format!("#{}", p.chart_id),
            });
        }
        Ok(())
    }
}

impl fmt::Debug for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Chart")
            .field("label", &self.0.label)
            .field("dim", &self.0.dim)
            .field("metric", &self.0.metric.is_some())
            .finish()
    }
}

/// A point of a chart: coordinates plus the identity of the owning chart.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    coords: DVector<f64>,
    chart_id: u64,
}

impl Point {
    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn chart_id(&self) -> u64 {
        self.chart_id
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.coords[i]
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.coords.iter().copied().collect()
    }
}

type ScalarFn = dyn Fn(&Point) -> Result<f64, GeomError> + Send + Sync;
type GradientFn = dyn Fn(&Point) -> Result<DVector<f64>, GeomError> + Send + Sync;
type VectorFn = dyn Fn(&Point) -> Result<DVector<f64>, GeomError> + Send + Sync;

/// Real-valued field on a chart, optionally with an analytic coordinate
/// gradient used as an accelerator in place of finite differences.
#[derive(Clone)]
pub struct ScalarField {
    eval: Arc<ScalarFn>,
    gradient: Option<Arc<GradientFn>>,
}

impl ScalarField {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&Point) -> f64 + Send + Sync + 'static,
    {
        ScalarField {
            eval: Arc::new(move |p| Ok(f(p))),
            gradient: None,
        }
    }

    pub fn with_gradient<F, G>(f: F, grad: G) -> Self
    where
        F: Fn(&Point) -> f64 + Send + Sync + 'static,
        G: Fn(&Point) -> DVector<f64> + Send + Sync + 'static,
    {
        ScalarField {
            eval: Arc::new(move |p| Ok(f(p))),
            gradient: Some(Arc::new(move |p| Ok(grad(p)))),
        }
    }

    pub fn constant(c: f64) -> Self {
        ScalarField::with_gradient(move |_| c, move |p| DVector::zeros(p.dim()))
    }

    pub fn eval(&self, p: &Point) -> Result<f64, GeomError> {
        (self.eval)(p)
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    /// Coordinate gradient `(∂_1 f, …, ∂_n f)`: analytic when supplied,
    /// otherwise central differences along the coordinate axes.
    pub fn coordinate_gradient(
        &self,
        chart: &Chart,
        p: &Point,
        h: f64,
    ) -> Result<DVector<f64>, GeomError> {
        if let Some(grad) = &self.gradient {
            return grad(p);
        }
        let n = chart.dim();
        let mut out = DVector::zeros(n);
        for i in 0..n {
            let mut dir = DVector::zeros(n);
            dir[i] = 1.0;
            out[i] = fd_directional(chart, |q| self.eval(q), p, &dir, h)?;
        }
        Ok(out)
    }

    /// Directional derivative along `dir`; contracts the analytic gradient
    /// when available, else a single central difference.
    pub fn derivative_along(
        &self,
        chart: &Chart,
        p: &Point,
        dir: &DVector<f64>,
        h: f64,
    ) -> Result<f64, GeomError> {
        if let Some(grad) = &self.gradient {
            return Ok(grad(p)?.dot(dir));
        }
        fd_directional(chart, |q| self.eval(q), p, dir, h)
    }
}

/// Vector field on a chart, components in chart coordinates.
#[derive(Clone)]
pub struct VectorField {
    eval: Arc<VectorFn>,
}

impl VectorField {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&Point) -> DVector<f64> + Send + Sync + 'static,
    {
        VectorField {
            eval: Arc::new(move |p| Ok(f(p))),
        }
    }

    /// Field whose evaluation may fail (e.g. it differentiates another field).
    pub fn fallible<F>(f: F) -> Self
    where
        F: Fn(&Point) -> Result<DVector<f64>, GeomError> + Send + Sync + 'static,
    {
        VectorField { eval: Arc::new(f) }
    }

    /// Constant-coefficient extension of a single tangent vector.
    pub fn constant(v: DVector<f64>) -> Self {
        VectorField::new(move |_| v.clone())
    }

    /// The `i`-th coordinate field `∂_i`.
    pub fn coordinate(i: usize, dim: usize) -> Self {
        assert!(i < dim);
        VectorField::new(move |_| {
            let mut v = DVector::zeros(dim);
            v[i] = 1.0;
            v
        })
    }

    pub fn eval(&self, p: &Point) -> Result<DVector<f64>, GeomError> {
        (self.eval)(p)
    }

    /// Pointwise `f · X` for a scalar field `f`.
    pub fn scaled_by(&self, f: ScalarField) -> Self {
        let inner = self.clone();
        VectorField::fallible(move |p| Ok(inner.eval(p)? * f.eval(p)?))
    }
}

/// Values a central difference can act on.
pub trait FdValue: Sized {
    fn central_diff(plus: Self, minus: Self, inv_two_h: f64) -> Self;
}

impl FdValue for f64 {
    fn central_diff(plus: Self, minus: Self, inv_two_h: f64) -> Self {
        (plus - minus) * inv_two_h
    }
}

impl FdValue for DVector<f64> {
    fn central_diff(plus: Self, minus: Self, inv_two_h: f64) -> Self {
        (plus - minus) * inv_two_h
    }
}

impl FdValue for DMatrix<f64> {
    fn central_diff(plus: Self, minus: Self, inv_two_h: f64) -> Self {
        (plus - minus) * inv_two_h
    }
}

/// Central difference of a tensor-valued map along direction `dir`:
/// `(f(p + h·dir) − f(p − h·dir)) / (2h)`.
///
/// Reports which stencil endpoint left the chart domain.
pub fn fd_directional<T, F>(
    chart: &Chart,
    f: F,
    p: &Point,
    dir: &DVector<f64>,
    h: f64,
) -> Result<T, GeomError>
where
    T: FdValue,
    F: Fn(&Point) -> Result<T, GeomError>,
{
    if !(h > 0.0) {
        return Err(GeomError::InvalidStep(h));
    }
    chart.check_point(p)?;
    let plus_coords = p.coords() + dir * h;
    let minus_coords = p.coords() - dir * h;
    let plus = chart.point(plus_coords.clone()).map_err(|_| {
        GeomError::StencilOutsideDomain {
            chart: chart.label().to_string(),
            side: "plus",
            coords: plus_coords.iter().copied().collect(),
        }
    })?;
    let minus = chart.point(minus_coords.clone()).map_err(|_| {
        GeomError::StencilOutsideDomain {
            chart: chart.label().to_string(),
            side: "minus",
            coords: minus_coords.iter().copied().collect(),
        }
    })?;
    Ok(T::central_diff(f(&plus)?, f(&minus)?, 0.5 / h))
}

/// Jacobian `J[(k, i)] = ∂_i X^k` of a vector field by central differences.
pub fn vector_field_jacobian(
    chart: &Chart,
    field: &VectorField,
    p: &Point,
    h: f64,
) -> Result<DMatrix<f64>, GeomError> {
    let n = chart.dim();
    let mut jac = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut dir = DVector::zeros(n);
        dir[i] = 1.0;
        let col: DVector<f64> = fd_directional(chart, |q| field.eval(q), p, &dir, h)?;
        jac.set_column(i, &col);
    }
    Ok(jac)
}

/// Lie bracket `[X, Y]^k = X^j ∂_j Y^k − Y^j ∂_j X^k` at `p`.
pub fn lie_bracket(
    chart: &Chart,
    x: &VectorField,
    y: &VectorField,
    p: &Point,
    h: f64,
) -> Result<DVector<f64>, GeomError> {
    let jx = vector_field_jacobian(chart, x, p, h)?;
    let jy = vector_field_jacobian(chart, y, p, h)?;
    Ok(&jy * x.eval(p)? - &jx * y.eval(p)?)
}

/// Mean slope of `log2(err[i] / err[i+1])` over successive step halvings.
///
/// For a scheme of order `q` with errors measured at steps `h, h/2, h/4, …`
/// the slope approaches `q`.
pub fn richardson_slope(errors: &[f64]) -> f64 {
    assert!(errors.len() >= 2, "need at least two error samples");
    let mut slopes = Vec::with_capacity(errors.len() - 1);
    for pair in errors.windows(2) {
        slopes.push((pair[0] / pair[1]).log2());
    }
    slopes.iter().sum::<f64>() / slopes.len() as f64
}
