//! Affine connections as Christoffel fields: the Levi-Civita construction,
//! metric-dual connections, covariant derivatives, torsion and curvature.
//!
//! The curvature sign convention used throughout is
//! `R(E,F)G = ∇_{[E,F]}G − ∇_E∇_F G + ∇_F∇_E G` (bracket term first, minus
//! the commutator of covariant derivatives). All identity suites in this
//! crate are stated in the same convention.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::chart::{fd_directional, Chart, FdValue, Point, VectorField};
use crate::error::GeomError;

/// Rank-3 Christoffel array `Γ^k_{ij}`, indexed `(k, i, j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Christoffel {
    dim: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(dim: usize) -> Self {
        Christoffel {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut out = Christoffel::zeros(dim);
        for k in 0..dim {
            for i in 0..dim {
                for j in 0..dim {
                    out.set(k, i, j, f(k, i, j));
                }
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, k: usize, i: usize, j: usize, value: f64) {
        self.data[(k * self.dim + i) * self.dim + j] = value;
    }

    /// `out^k = Γ^k_{ij} x^i y^j`.
    pub fn contract(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let n = self.dim;
        let mut out = DVector::zeros(n);
        for k in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                let xi = x[i];
                if xi == 0.0 {
                    continue;
                }
                for j in 0..n {
                    acc += self.get(k, i, j) * xi * y[j];
                }
            }
            out[k] = acc;
        }
        out
    }

    /// Largest `|Γ^k_{ij} − Γ^k_{ji}|` over all entries.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for k in 0..n {
            for i in 0..n {
                for j in (i + 1)..n {
                    worst = worst.max((self.get(k, i, j) - self.get(k, j, i)).abs());
                }
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Add for Christoffel {
    type Output = Christoffel;
    fn add(mut self, rhs: Christoffel) -> Christoffel {
        assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a += *b;
        }
        self
    }
}

impl std::ops::Sub for Christoffel {
    type Output = Christoffel;
    fn sub(mut self, rhs: Christoffel) -> Christoffel {
        assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a -= *b;
        }
        self
    }
}

impl FdValue for Christoffel {
    fn central_diff(plus: Self, minus: Self, inv_two_h: f64) -> Self {
        let mut out = plus - minus;
        for v in out.data.iter_mut() {
            *v *= inv_two_h;
        }
        out
    }
}

type MetricFn = dyn Fn(&Point) -> Result<DMatrix<f64>, GeomError> + Send + Sync;
type ChristoffelFn = dyn Fn(&Point) -> Result<Christoffel, GeomError> + Send + Sync;

/// Evaluable Riemannian metric: point to symmetric positive-definite matrix.
#[derive(Clone)]
pub struct MetricField {
    eval: Arc<MetricFn>,
}

impl MetricField {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&Point) -> DMatrix<f64> + Send + Sync + 'static,
    {
        MetricField {
            eval: Arc::new(move |p| Ok(f(p))),
        }
    }

    pub fn euclidean(dim: usize) -> Self {
        MetricField::new(move |_| DMatrix::identity(dim, dim))
    }

    pub fn eval(&self, p: &Point) -> Result<DMatrix<f64>, GeomError> {
        (self.eval)(p)
    }

    /// `g(u, v)` at `p`.
    pub fn inner(&self, p: &Point, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64, GeomError> {
        Ok((self.eval(p)? * v).dot(u))
    }

    pub fn norm(&self, p: &Point, u: &DVector<f64>) -> Result<f64, GeomError> {
        Ok(self.inner(p, u, u)?.max(0.0).sqrt())
    }

    /// Cholesky factor of `g(p)`; fails with [`GeomError::SingularMetric`]
    /// when the matrix is not positive definite.
    pub fn cholesky(&self, p: &Point) -> Result<Cholesky<f64, nalgebra::Dyn>, GeomError> {
        let g = self.eval(p)?;
        Cholesky::new(g).ok_or_else(|| GeomError::SingularMetric {
            coords: p.to_vec(),
        })
    }

    pub fn inverse(&self, p: &Point) -> Result<DMatrix<f64>, GeomError> {
        Ok(self.cholesky(p)?.inverse())
    }

    /// Verifies symmetry (to `1e-12`) and positive definiteness at `p`.
    pub fn check_spd(&self, p: &Point) -> Result<(), GeomError> {
        let g = self.eval(p)?;
        let asym = (&g - g.transpose()).abs().max();
        if asym > 1e-12 {
            return Err(GeomError::AsymmetricMetric {
                coords: p.to_vec(),
                asymmetry: asym,
            });
        }
        self.cholesky(p).map(|_| ())
    }
}

/// Affine connection as an evaluable Christoffel field.
#[derive(Clone)]
pub struct ConnectionField {
    dim: usize,
    christoffel: Arc<ChristoffelFn>,
}

impl ConnectionField {
    pub fn new<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&Point) -> Result<Christoffel, GeomError> + Send + Sync + 'static,
    {
        ConnectionField {
            dim,
            christoffel: Arc::new(f),
        }
    }

    /// `Γ ≡ 0` (the flat connection of the chart coordinates).
    pub fn flat(dim: usize) -> Self {
        ConnectionField::new(dim, move |_| Ok(Christoffel::zeros(dim)))
    }

    /// Connection with a position-independent Christoffel array.
    pub fn constant(gamma: Christoffel) -> Self {
        let dim = gamma.dim();
        ConnectionField::new(dim, move |_| Ok(gamma.clone()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn christoffel(&self, p: &Point) -> Result<Christoffel, GeomError> {
        (self.christoffel)(p)
    }

    /// `∇ + D` for a Christoffel-valued perturbation field `D`.
    pub fn perturbed<F>(&self, d: F) -> Self
    where
        F: Fn(&Point) -> Result<Christoffel, GeomError> + Send + Sync + 'static,
    {
        let base = self.christoffel.clone();
        ConnectionField::new(self.dim, move |p| Ok(base(p)? + d(p)?))
    }
}

/// Levi-Civita connection of `g` with metric derivatives taken by central
/// differences: `Γ^k_{ij} = ½ g^{kl} (∂_i g_{jl} + ∂_j g_{il} − ∂_l g_{ij})`.
pub fn levi_civita(chart: &Chart, g: &MetricField, h: f64) -> ConnectionField {
    let chart = chart.clone();
    let g = g.clone();
    let n = chart.dim();
    ConnectionField::new(n, move |p| {
        let g_inv = g.inverse(p)?;
        let mut dg = Vec::with_capacity(n);
        for l in 0..n {
            let mut dir = DVector::zeros(n);
            dir[l] = 1.0;
            let d: DMatrix<f64> = fd_directional(&chart, |q| g.eval(q), p, &dir, h)?;
            dg.push(d);
        }
        let mut gamma = Christoffel::zeros(n);
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for l in 0..n {
                        acc += g_inv[(k, l)]
                            * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                    }
                    gamma.set(k, i, j, 0.5 * acc);
                }
            }
        }
        Ok(gamma)
    })
}

/// The metric dual of `∇`: the unique `∇̄` with
/// `X g(Y,Z) = g(∇_X Y, Z) + g(Y, ∇̄_X Z)`, i.e.
/// `Γ̄^m_{ik} = g^{jm} (∂_i g_{jk} − Γ^l_{ij} g_{lk})`.
pub fn dual_connection(
    chart: &Chart,
    g: &MetricField,
    conn: &ConnectionField,
    h: f64,
) -> ConnectionField {
    let chart = chart.clone();
    let g = g.clone();
    let conn = conn.clone();
    let n = chart.dim();
    ConnectionField::new(n, move |p| {
        let g_mat = g.eval(p)?;
        let g_inv = g.inverse(p)?;
        let gamma = conn.christoffel(p)?;
        let mut dg = Vec::with_capacity(n);
        for i in 0..n {
            let mut dir = DVector::zeros(n);
            dir[i] = 1.0;
            let d: DMatrix<f64> = fd_directional(&chart, |q| g.eval(q), p, &dir, h)?;
            dg.push(d);
        }
        let mut dual = Christoffel::zeros(n);
        for m in 0..n {
            for i in 0..n {
                for k in 0..n {
                    let mut acc = 0.0;
                    for j in 0..n {
                        let mut rhs = dg[i][(j, k)];
                        for l in 0..n {
                            rhs -= gamma.get(l, i, j) * g_mat[(l, k)];
                        }
                        acc += g_inv[(j, m)] * rhs;
                    }
                    dual.set(m, i, k, acc);
                }
            }
        }
        Ok(dual)
    })
}

/// `(∇_x Y)^k = x^i ∂_i Y^k + Γ^k_{ij} x^i Y^j` with the direction given as
/// a single tangent vector at `p` (the covariant derivative is tensorial in
/// its direction slot).
pub fn covariant_derivative_dir(
    chart: &Chart,
    conn: &ConnectionField,
    x: &DVector<f64>,
    y: &VectorField,
    p: &Point,
    h: f64,
) -> Result<DVector<f64>, GeomError> {
    let dy: DVector<f64> = fd_directional(chart, |q| y.eval(q), p, x, h)?;
    let gamma = conn.christoffel(p)?;
    Ok(dy + gamma.contract(x, &y.eval(p)?))
}

/// `∇_X Y` at `p` for vector fields `X`, `Y`.
pub fn covariant_derivative(
    chart: &Chart,
    conn: &ConnectionField,
    x: &VectorField,
    y: &VectorField,
    p: &Point,
    h: f64,
) -> Result<DVector<f64>, GeomError> {
    covariant_derivative_dir(chart, conn, &x.eval(p)?, y, p, h)
}

/// The inner covariant derivative `q ↦ ∇_X Y |_q` packaged as a field, so it
/// can be differentiated again (each evaluation spends a fresh stencil).
pub fn covariant_derivative_field(
    chart: &Chart,
    conn: &ConnectionField,
    x: &VectorField,
    y: &VectorField,
    h: f64,
) -> VectorField {
    let chart = chart.clone();
    let conn = conn.clone();
    let x = x.clone();
    let y = y.clone();
    VectorField::fallible(move |q| covariant_derivative(&chart, &conn, &x, &y, q, h))
}

/// Torsion `Tor(∇)(X,Y) = ∇_X Y − ∇_Y X − [X,Y]` at `p`.
pub fn torsion(
    chart: &Chart,
    conn: &ConnectionField,
    x: &VectorField,
    y: &VectorField,
    p: &Point,
    h: f64,
) -> Result<DVector<f64>, GeomError> {
    let xy = covariant_derivative(chart, conn, x, y, p, h)?;
    let yx = covariant_derivative(chart, conn, y, x, p, h)?;
    let br = crate::chart::lie_bracket(chart, x, y, p, h)?;
    Ok(xy - yx - br)
}

/// Curvature `R(E,F)G = ∇_{[E,F]}G − ∇_E(∇_F G) + ∇_F(∇_E G)` at `p`.
///
/// The nested covariant derivatives evaluate the inner derivative as a field
/// via fresh stencils, so tolerances on curvature values are looser than on
/// first derivatives.
pub fn curvature(
    chart: &Chart,
    conn: &ConnectionField,
    e: &VectorField,
    f: &VectorField,
    g: &VectorField,
    p: &Point,
    h: f64,
) -> Result<DVector<f64>, GeomError> {
    let bracket = crate::chart::lie_bracket(chart, e, f, p, h)?;
    let term_bracket = covariant_derivative_dir(chart, conn, &bracket, g, p, h)?;
    let inner_fg = covariant_derivative_field(chart, conn, f, g, h);
    let term_ef = covariant_derivative(chart, conn, e, &inner_fg, p, h)?;
    let inner_eg = covariant_derivative_field(chart, conn, e, g, h);
    let term_fe = covariant_derivative(chart, conn, f, &inner_eg, p, h)?;
    Ok(term_bracket - term_ef + term_fe)
}

/// Gradient of a scalar field with respect to `g`: solves `g · v = dφ`.
pub fn metric_gradient(
    chart: &Chart,
    g: &MetricField,
    phi: &crate::chart::ScalarField,
    p: &Point,
    h: f64,
) -> Result<DVector<f64>, GeomError> {
    let dphi = phi.coordinate_gradient(chart, p, h)?;
    Ok(g.cholesky(p)?.solve(&dphi))
}

/// Metric-compatibility defect `X g(Y,Z) − g(∇_X Y, Z) − g(Y, ∇_X Z)` at `p`.
pub fn compatibility_defect(
    chart: &Chart,
    g: &MetricField,
    conn: &ConnectionField,
    x: &VectorField,
    y: &VectorField,
    z: &VectorField,
    p: &Point,
    h: f64,
) -> Result<f64, GeomError> {
    let y_c = y.clone();
    let z_c = z.clone();
    let g_c = g.clone();
    let xv = x.eval(p)?;
    let lhs: f64 = fd_directional(
        chart,
        |q| g_c.inner(q, &y_c.eval(q)?, &z_c.eval(q)?),
        p,
        &xv,
        h,
    )?;
    let dy = covariant_derivative_dir(chart, conn, &xv, y, p, h)?;
    let dz = covariant_derivative_dir(chart, conn, &xv, z, p, h)?;
    Ok(lhs - g.inner(p, &dy, &z.eval(p)?)? - g.inner(p, &y.eval(p)?, &dz)?)
}

/// Duality-pairing defect `X g(Y,Z) − g(∇_X Y, Z) − g(Y, ∇̄_X Z)` at `p`.
pub fn duality_pairing_defect(
    chart: &Chart,
    g: &MetricField,
    conn: &ConnectionField,
    dual: &ConnectionField,
    x: &VectorField,
    y: &VectorField,
    z: &VectorField,
    p: &Point,
    h: f64,
) -> Result<f64, GeomError> {
    let y_c = y.clone();
    let z_c = z.clone();
    let g_c = g.clone();
    let xv = x.eval(p)?;
    let lhs: f64 = fd_directional(
        chart,
        |q| g_c.inner(q, &y_c.eval(q)?, &z_c.eval(q)?),
        p,
        &xv,
        h,
    )?;
    let dy = covariant_derivative_dir(chart, conn, &xv, y, p, h)?;
    let dz = covariant_derivative_dir(chart, dual, &xv, z, p, h)?;
    Ok(lhs - g.inner(p, &dy, &z.eval(p)?)? - g.inner(p, &y.eval(p)?, &dz)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::ScalarField;
    use approx::assert_abs_diff_eq;

    fn plane() -> Chart {
        Chart::full_space("R2", 2)
    }

    /// Upper half-plane with the hyperbolic metric `g = y^{-2} I`.
    fn hyperbolic_plane() -> (Chart, MetricField) {
        let g = MetricField::new(|p: &Point| {
            let y = p.coord(1);
            DMatrix::identity(2, 2) / (y * y)
        });
        let chart = Chart::new("H2", 2, |x: &DVector<f64>| x[1] > 0.0);
        (chart, g)
    }

    const H: f64 = 1e-4;

    #[test]
    fn euclidean_christoffels_vanish() {
        for n in [2usize, 3] {
            let chart = Chart::full_space("Rn", n);
            let conn = levi_civita(&chart, &MetricField::euclidean(n), H);
            let p = chart
                .point(DVector::from_fn(n, |i, _| 0.3 * i as f64 - 0.4))
                .unwrap();
            assert!(conn.christoffel(&p).unwrap().max_abs() <= 1e-9);
        }
    }

    #[test]
    fn hyperbolic_christoffels_match_closed_form() {
        // g = y^{-2} I on the half-plane: Γ^x_{xy} = −1/y, Γ^y_{xx} = 1/y,
        // Γ^y_{yy} = −1/y, all others zero.
        let (chart, g) = hyperbolic_plane();
        let conn = levi_civita(&chart, &g, H);
        let p = chart.point_from_slice(&[0.0, 2.0]).unwrap();
        let gamma = conn.christoffel(&p).unwrap();
        let expected = |k: usize, i: usize, j: usize| -> f64 {
            match (k, i, j) {
                (0, 0, 1) | (0, 1, 0) => -0.5,
                (1, 0, 0) => 0.5,
                (1, 1, 1) => -0.5,
                _ => 0.0,
            }
        };
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert_abs_diff_eq!(gamma.get(k, i, j), expected(k, i, j), epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn conformal_metric_christoffels_match_closed_form() {
        // g = e^{2x} I on R²: Γ^x_{xx} = 1, Γ^y_{xy} = Γ^y_{yx} = 1, Γ^x_{yy} = −1.
        let chart = plane();
        let g = MetricField::new(|p: &Point| {
            DMatrix::identity(2, 2) * (2.0 * p.coord(0)).exp()
        });
        let conn = levi_civita(&chart, &g, H);
        let p = chart.point_from_slice(&[0.2, -0.7]).unwrap();
        let gamma = conn.christoffel(&p).unwrap();
        assert_abs_diff_eq!(gamma.get(0, 0, 0), 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(gamma.get(1, 0, 1), 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(gamma.get(1, 1, 0), 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(gamma.get(0, 1, 1), -1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(gamma.get(0, 0, 1), 0.0, epsilon = 1e-6);
        assert!(gamma.max_asymmetry() <= 1e-9);
    }

    #[test]
    fn covariant_derivative_reduces_to_directional_derivative_when_flat() {
        let chart = plane();
        let conn = ConnectionField::flat(2);
        let x = VectorField::coordinate(0, 2);
        let y = VectorField::new(|q| DVector::from_column_slice(&[q.coord(0), 0.0]));
        let p = chart.point_from_slice(&[1.0, 1.0]).unwrap();
        let d = covariant_derivative(&chart, &conn, &x, &y, &p, H).unwrap();
        assert_abs_diff_eq!(d[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(d[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn covariant_derivative_of_constant_field_vanishes_when_flat() {
        let chart = plane();
        let conn = ConnectionField::flat(2);
        let x = VectorField::new(|q| DVector::from_column_slice(&[q.coord(1), 1.0]));
        let y = VectorField::constant(DVector::from_column_slice(&[0.7, -0.2]));
        let p = chart.point_from_slice(&[0.5, 2.0]).unwrap();
        let d = covariant_derivative(&chart, &conn, &x, &y, &p, H).unwrap();
        assert_abs_diff_eq!(d.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn hyperbolic_covariant_derivative_of_coordinate_field() {
        // ∇_{∂_x} ∂_x = Γ^y_{xx} ∂_y = (1/y) ∂_y, so (0, 0.5) at y = 2.
        let (chart, g) = hyperbolic_plane();
        let conn = levi_civita(&chart, &g, H);
        let x = VectorField::coordinate(0, 2);
        let p = chart.point_from_slice(&[0.0, 2.0]).unwrap();
        let d = covariant_derivative(&chart, &conn, &x, &x, &p, H).unwrap();
        assert_abs_diff_eq!(d[0], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(d[1], 0.5, epsilon = 1e-6);
    }

    #[test]
    fn torsion_of_levi_civita_vanishes() {
        let (chart, g) = hyperbolic_plane();
        let conn = levi_civita(&chart, &g, H);
        let x = VectorField::new(|q| DVector::from_column_slice(&[q.coord(1), 0.3]));
        let y = VectorField::new(|q| {
            DVector::from_column_slice(&[0.1, (q.coord(0)).cos() + 1.5])
        });
        let p = chart.point_from_slice(&[0.4, 1.5]).unwrap();
        let t = torsion(&chart, &conn, &x, &y, &p, H).unwrap();
        assert!(t.norm() <= 1e-7);
    }

    #[test]
    fn torsion_of_constant_asymmetric_connection() {
        // Γ^1_{12} = 1 (0-based: Γ^0_{01}), all else zero; Tor(∂_1, ∂_2) has
        // components Γ^k_{12} − Γ^k_{21}.
        let mut gamma = Christoffel::zeros(3);
        gamma.set(0, 0, 1, 1.0);
        let conn = ConnectionField::constant(gamma);
        let chart = Chart::full_space("R3", 3);
        let p = chart.point_from_slice(&[0.0, 0.0, 0.0]).unwrap();
        let x = VectorField::coordinate(0, 3);
        let y = VectorField::coordinate(1, 3);
        let t = torsion(&chart, &conn, &x, &y, &p, H).unwrap();
        assert_abs_diff_eq!(t[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(t[1], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(t[2], 0.0, epsilon = 1e-9);
        let tt = torsion(&chart, &conn, &x, &x, &p, H).unwrap();
        assert!(tt.norm() <= 1e-9);
    }

    #[test]
    fn dual_of_levi_civita_is_levi_civita() {
        let (chart, g) = hyperbolic_plane();
        let conn = levi_civita(&chart, &g, H);
        let dual = dual_connection(&chart, &g, &conn, H);
        for coords in [[0.0, 2.0], [1.0, 0.8], [-0.7, 3.1]] {
            let p = chart.point_from_slice(&coords).unwrap();
            let diff = conn.christoffel(&p).unwrap() - dual.christoffel(&p).unwrap();
            assert!(diff.max_abs() <= 1e-6, "at {coords:?}: {}", diff.max_abs());
        }
    }

    #[test]
    fn dual_of_constant_connection_on_flat_metric() {
        // With g = I and ∂g = 0 the defining identity forces
        // Γ̄^m_{ik} = −Γ^k_{im}; verify the identity directly.
        let chart = Chart::full_space("R3", 3);
        let g = MetricField::euclidean(3);
        let gamma = Christoffel::from_fn(3, |k, i, j| {
            0.1 * (k as f64 + 1.0) - 0.05 * (i as f64) + 0.2 * (j as f64)
        });
        let conn = ConnectionField::constant(gamma.clone());
        let dual = dual_connection(&chart, &g, &conn, H);
        let p = chart.point_from_slice(&[0.3, -0.2, 0.9]).unwrap();
        let dual_gamma = dual.christoffel(&p).unwrap();
        for m in 0..3 {
            for i in 0..3 {
                for k in 0..3 {
                    assert_abs_diff_eq!(
                        dual_gamma.get(m, i, k),
                        -gamma.get(k, i, m),
                        epsilon = 1e-9
                    );
                }
            }
        }
        // And through the pairing identity with arbitrary fields.
        let x = VectorField::new(|q| DVector::from_column_slice(&[q.coord(2), 1.0, 0.5]));
        let y = VectorField::new(|q| DVector::from_column_slice(&[0.2, q.coord(0), -1.0]));
        let z = VectorField::new(|q| DVector::from_column_slice(&[1.0, 0.0, q.coord(1)]));
        let defect =
            duality_pairing_defect(&chart, &g, &conn, &dual, &x, &y, &z, &p, H).unwrap();
        assert_abs_diff_eq!(defect, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn double_dual_is_the_original_connection() {
        let (chart, g) = hyperbolic_plane();
        // A deliberately non-self-dual connection.
        let conn = levi_civita(&chart, &g, H).perturbed(|_| {
            let mut d = Christoffel::zeros(2);
            d.set(0, 0, 0, 0.3);
            d.set(1, 0, 1, -0.2);
            Ok(d)
        });
        let dual = dual_connection(&chart, &g, &conn, H);
        let double = dual_connection(&chart, &g, &dual, H);
        let p = chart.point_from_slice(&[0.5, 1.7]).unwrap();
        let diff = conn.christoffel(&p).unwrap() - double.christoffel(&p).unwrap();
        assert!(diff.max_abs() <= 1e-6);
    }

    #[test]
    fn metric_compatibility_of_levi_civita() {
        let (chart, g) = hyperbolic_plane();
        let conn = levi_civita(&chart, &g, H);
        let x = VectorField::new(|q| DVector::from_column_slice(&[0.4, 0.2 * q.coord(0)]));
        let y = VectorField::new(|q| DVector::from_column_slice(&[q.coord(1), -0.3]));
        let z = VectorField::new(|q| DVector::from_column_slice(&[0.1 * q.coord(1), 1.0]));
        let p = chart.point_from_slice(&[-0.3, 2.2]).unwrap();
        let defect = compatibility_defect(&chart, &g, &conn, &x, &y, &z, &p, H).unwrap();
        assert_abs_diff_eq!(defect, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn curvature_of_flat_connection_vanishes() {
        let chart = plane();
        let conn = ConnectionField::flat(2);
        let e = VectorField::new(|q| DVector::from_column_slice(&[q.coord(1), 0.3]));
        let f = VectorField::new(|q| DVector::from_column_slice(&[0.2, q.coord(0)]));
        let g = VectorField::new(|q| {
            DVector::from_column_slice(&[q.coord(0) * q.coord(1), 1.0])
        });
        let p = chart.point_from_slice(&[0.6, -0.4]).unwrap();
        let r = curvature(&chart, &conn, &e, &f, &g, &p, H).unwrap();
        assert!(r.norm() <= 1e-5);
    }

    #[test]
    fn curvature_is_antisymmetric_in_first_two_slots() {
        let (chart, g_m) = hyperbolic_plane();
        let conn = levi_civita(&chart, &g_m, H);
        let e = VectorField::new(|q| DVector::from_column_slice(&[1.0, 0.2 * q.coord(1)]));
        let g = VectorField::coordinate(0, 2);
        let p = chart.point_from_slice(&[0.0, 1.5]).unwrap();
        let r = curvature(&chart, &conn, &e, &e, &g, &p, H).unwrap();
        assert!(r.norm() <= 1e-5);
    }

    /// Independent oracle: the coordinate formula for the curvature of the
    /// hyperbolic plane, using hand-derived Christoffels and their analytic
    /// derivatives. In the bracket-first convention,
    /// `R(∂_x,∂_y)∂_x = −(1/y²) ∂_y`.
    #[test]
    fn hyperbolic_curvature_matches_coordinate_formula() {
        let (chart, g_m) = hyperbolic_plane();
        let conn = levi_civita(&chart, &g_m, H);
        let p = chart.point_from_slice(&[0.0, 2.0]).unwrap();
        let e = VectorField::coordinate(0, 2);
        let f = VectorField::coordinate(1, 2);
        let r = curvature(&chart, &conn, &e, &f, &e, &p, H).unwrap();

        // Coordinate-formula path (standard convention, then negated):
        // R_std^l_{kij} = ∂_i Γ^l_{jk} − ∂_j Γ^l_{ik} + Γ^l_{im}Γ^m_{jk} − Γ^l_{jm}Γ^m_{ik}
        // with analytic Γ and ∂Γ for g = y^{-2} I.
        let y = 2.0f64;
        let gamma = |k: usize, i: usize, j: usize| -> f64 {
            match (k, i, j) {
                (0, 0, 1) | (0, 1, 0) => -1.0 / y,
                (1, 0, 0) => 1.0 / y,
                (1, 1, 1) => -1.0 / y,
                _ => 0.0,
            }
        };
        // ∂_y of the Christoffels (∂_x ≡ 0).
        let dgamma_y = |k: usize, i: usize, j: usize| -> f64 {
            match (k, i, j) {
                (0, 0, 1) | (0, 1, 0) => 1.0 / (y * y),
                (1, 0, 0) => -1.0 / (y * y),
                (1, 1, 1) => 1.0 / (y * y),
                _ => 0.0,
            }
        };
        let dgamma = |l: usize, k: usize, i: usize, j: usize| -> f64 {
            if l == 1 {
                dgamma_y(k, i, j)
            } else {
                0.0
            }
        };
        let (i, j, kk) = (0usize, 1usize, 0usize); // R(∂_x,∂_y)∂_x
        let mut expected = DVector::zeros(2);
        for l in 0..2 {
            let mut std = dgamma(i, l, j, kk) - dgamma(j, l, i, kk);
            for m in 0..2 {
                std += gamma(l, i, m) * gamma(m, j, kk) - gamma(l, j, m) * gamma(m, i, kk);
            }
            expected[l] = -std; // bracket-first convention
        }
        assert_abs_diff_eq!(expected[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(expected[1], -0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(r[0], expected[0], epsilon = 1e-4);
        assert_abs_diff_eq!(r[1], expected[1], epsilon = 1e-4);
    }

    #[test]
    fn metric_gradient_on_flat_space_is_coordinate_gradient() {
        let chart = plane();
        let g = MetricField::euclidean(2);
        let phi = ScalarField::new(|q| q.coord(0));
        let p = chart.point_from_slice(&[0.4, 0.9]).unwrap();
        let grad = metric_gradient(&chart, &g, &phi, &p, H).unwrap();
        assert_abs_diff_eq!(grad[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(grad[1], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn metric_gradient_on_hyperbolic_plane() {
        // φ = −log y, g = y^{-2} I: grad φ = g^{-1} dφ = (0, −y).
        let (chart, g) = hyperbolic_plane();
        let phi = ScalarField::new(|q| -(q.coord(1)).ln());
        let p = chart.point_from_slice(&[0.0, 2.0]).unwrap();
        let grad = metric_gradient(&chart, &g, &phi, &p, H).unwrap();
        assert_abs_diff_eq!(grad[0], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(grad[1], -2.0, epsilon = 1e-6);
    }

    #[test]
    fn constant_phi_has_zero_gradient() {
        let (chart, g) = hyperbolic_plane();
        let phi = ScalarField::constant(3.7);
        let p = chart.point_from_slice(&[1.0, 1.0]).unwrap();
        let grad = metric_gradient(&chart, &g, &phi, &p, H).unwrap();
        assert_eq!(grad.norm(), 0.0);
    }
}
