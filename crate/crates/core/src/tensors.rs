//! Fundamental tensors `T` and `A` of a submersion, projected curvatures,
//! the twelve curvature decomposition identities, the torsion-transfer
//! identities, and the duality audit for metric-dual connection pairs.
//!
//! `T_E F = H∇_{VE}(VF) + V∇_{VE}(HF)` and `A_E F = V∇_{HE}(HF) + H∇_{HE}(VF)`
//! are (1,2)-tensors, so every nested application below is evaluated with
//! constant-coefficient extensions of point values; only genuine covariant
//! derivatives of tensor fields spend stencils.

use nalgebra::DVector;

use crate::chart::{lie_bracket, Point, VectorField};
use crate::connection::{
    covariant_derivative, covariant_derivative_dir, curvature, dual_connection, torsion,
    ConnectionField,
};
use crate::error::GeomError;
use crate::report::{IdentityId, ResidualReport};
use crate::sample::{rng_from_seed, smooth_vector_field};
use crate::submersion::{cshd_defect, fiber_connection, SubmersionMap};

/// Which projector to insert in a projected-curvature slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Proj {
    Horizontal,
    Vertical,
}

impl Proj {
    fn matrix(
        self,
        s: &SubmersionMap,
        p: &Point,
    ) -> Result<nalgebra::DMatrix<f64>, GeomError> {
        match self {
            Proj::Horizontal => s.horizontal_projector(p),
            Proj::Vertical => s.vertical_projector(p),
        }
    }

    fn apply_field(self, s: &SubmersionMap, field: &VectorField) -> VectorField {
        match self {
            Proj::Horizontal => s.horizontal_part(field),
            Proj::Vertical => s.vertical_part(field),
        }
    }
}

/// `T_E F` at `p`.
pub fn tensor_t(
    s: &SubmersionMap,
    conn: &ConnectionField,
    e: &VectorField,
    f: &VectorField,
    p: &Point,
    h: f64,
) -> Result<DVector<f64>, GeomError> {
    let ve = s.vertical_projector(p)? * e.eval(p)?;
    let vf = s.vertical_part(f);
    let hf = s.horizontal_part(f);
    let first = covariant_derivative_dir(s.source(), conn, &ve, &vf, p, h)?;
    let second = covariant_derivative_dir(s.source(), conn, &ve, &hf, p, h)?;
    Ok(s.horizontal_projector(p)? * first + s.vertical_projector(p)? * second)
}

/// `A_E F` at `p`.
pub fn tensor_a(
    s: &SubmersionMap,
    conn: &ConnectionField,
    e: &VectorField,
    f: &VectorField,
    p: &Point,
    h: f64,
) -> Result<DVector<f64>, GeomError> {
    let he = s.horizontal_projector(p)? * e.eval(p)?;
    let hf = s.horizontal_part(f);
    let vf = s.vertical_part(f);
    let first = covariant_derivative_dir(s.source(), conn, &he, &hf, p, h)?;
    let second = covariant_derivative_dir(s.source(), conn, &he, &vf, p, h)?;
    Ok(s.vertical_projector(p)? * first + s.horizontal_projector(p)? * second)
}

#[derive(Clone, Copy)]
enum MixedTensor {
    T,
    A,
}

fn tensor_at(
    s: &SubmersionMap,
    conn: &ConnectionField,
    which: MixedTensor,
    e: &VectorField,
    f: &VectorField,
    p: &Point,
    h: f64,
) -> Result<DVector<f64>, GeomError> {
    match which {
        MixedTensor::T => tensor_t(s, conn, e, f, p, h),
        MixedTensor::A => tensor_a(s, conn, e, f, p, h),
    }
}

fn tensor_field(
    s: &SubmersionMap,
    conn: &ConnectionField,
    which: MixedTensor,
    e: &VectorField,
    f: &VectorField,
    h: f64,
) -> VectorField {
    let s = s.clone();
    let conn = conn.clone();
    let e = e.clone();
    let f = f.clone();
    VectorField::fallible(move |q| tensor_at(&s, &conn, which, &e, &f, q, h))
}

/// `(∇_E S)_F G = ∇_E(S_F G) − S_{∇_E F} G − S_F(∇_E G)` for `S ∈ {T, A}`.
fn nabla_tensor(
    s: &SubmersionMap,
    conn: &ConnectionField,
    which: MixedTensor,
    e: &VectorField,
    f: &VectorField,
    g: &VectorField,
    p: &Point,
    h: f64,
) -> Result<DVector<f64>, GeomError> {
    let sfg = tensor_field(s, conn, which, f, g, h);
    let lead = covariant_derivative(s.source(), conn, e, &sfg, p, h)?;
    let def = covariant_derivative(s.source(), conn, e, f, p, h)?;
    let mid = tensor_at(s, conn, which, &VectorField::constant(def), g, p, h)?;
    let deg = covariant_derivative(s.source(), conn, e, g, p, h)?;
    let tail = tensor_at(s, conn, which, f, &VectorField::constant(deg), p, h)?;
    Ok(lead - mid - tail)
}

/// Projected curvature
/// `R^{P1,P2,P3}(E,F)G = P3∇_{[P1E,P2F]}P3G − P3∇_{P1E}(P3∇_{P2F}P3G) + P3∇_{P2F}(P3∇_{P1E}P3G)`.
pub fn projected_curvature(
    s: &SubmersionMap,
    conn: &ConnectionField,
    p1: Proj,
    p2: Proj,
    p3: Proj,
    e: &VectorField,
    f: &VectorField,
    g: &VectorField,
    p: &Point,
    h: f64,
) -> Result<DVector<f64>, GeomError> {
    let chart = s.source();
    let p1e = p1.apply_field(s, e);
    let p2f = p2.apply_field(s, f);
    let p3g = p3.apply_field(s, g);
    let proj3 = p3.matrix(s, p)?;

    let bracket = lie_bracket(chart, &p1e, &p2f, p, h)?;
    let lead = &proj3 * covariant_derivative_dir(chart, conn, &bracket, &p3g, p, h)?;

    let inner_2 = {
        let s2 = s.clone();
        let conn2 = conn.clone();
        let p2f2 = p2f.clone();
        let p3g2 = p3g.clone();
        VectorField::fallible(move |q| {
            let d = covariant_derivative(s2.source(), &conn2, &p2f2, &p3g2, q, h)?;
            Ok(p3.matrix(&s2, q)? * d)
        })
    };
    let mid = &proj3 * covariant_derivative(chart, conn, &p1e, &inner_2, p, h)?;

    let inner_1 = {
        let s2 = s.clone();
        let conn2 = conn.clone();
        let p1e2 = p1e.clone();
        let p3g2 = p3g.clone();
        VectorField::fallible(move |q| {
            let d = covariant_derivative(s2.source(), &conn2, &p1e2, &p3g2, q, h)?;
            Ok(p3.matrix(&s2, q)? * d)
        })
    };
    let tail = &proj3 * covariant_derivative(chart, conn, &p2f, &inner_1, p, h)?;

    Ok(lead - mid + tail)
}

/// The twelve curvature decomposition identities. Six are algebraic in `T`,
/// `A` and the projected curvatures; the six containing covariant
/// derivatives of `T` or `A` are exploratory (the tensor-derivative rule is
/// a convention) and never gate a suite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FundamentalEq {
    VvvW,
    Huvw,
    Vuvx,
    Huvx,
    Vuxv,
    Huxv,
    Vuxy,
    Huxy,
    Vxyu,
    Hxyu,
    Vxyz,
    Hxyz,
}

impl FundamentalEq {
    pub const ALL: [FundamentalEq; 12] = [
        FundamentalEq::VvvW,
        FundamentalEq::Huvw,
        FundamentalEq::Vuvx,
        FundamentalEq::Huvx,
        FundamentalEq::Vuxv,
        FundamentalEq::Huxv,
        FundamentalEq::Vuxy,
        FundamentalEq::Huxy,
        FundamentalEq::Vxyu,
        FundamentalEq::Hxyu,
        FundamentalEq::Vxyz,
        FundamentalEq::Hxyz,
    ];

    /// The six identities with no `∇T`/`∇A` term.
    pub const ALGEBRAIC: [FundamentalEq; 6] = [
        FundamentalEq::VvvW,
        FundamentalEq::Huvx,
        FundamentalEq::Vuxv,
        FundamentalEq::Huxy,
        FundamentalEq::Vxyu,
        FundamentalEq::Hxyz,
    ];

    pub fn is_exploratory(self) -> bool {
        !Self::ALGEBRAIC.contains(&self)
    }

    pub fn identity_id(self) -> IdentityId {
        match self {
            FundamentalEq::VvvW => IdentityId::FundVvvW,
            FundamentalEq::Huvw => IdentityId::FundHuvw,
            FundamentalEq::Vuvx => IdentityId::FundVuvx,
            FundamentalEq::Huvx => IdentityId::FundHuvx,
            FundamentalEq::Vuxv => IdentityId::FundVuxv,
            FundamentalEq::Huxv => IdentityId::FundHuxv,
            FundamentalEq::Vuxy => IdentityId::FundVuxy,
            FundamentalEq::Huxy => IdentityId::FundHuxy,
            FundamentalEq::Vxyu => IdentityId::FundVxyu,
            FundamentalEq::Hxyu => IdentityId::FundHxyu,
            FundamentalEq::Vxyz => IdentityId::FundVxyz,
            FundamentalEq::Hxyz => IdentityId::FundHxyz,
        }
    }
}

/// Test fields for the identity suite: `u, v, w` vertical and `x, y, z`
/// horizontal by construction.
#[derive(Clone)]
pub struct FundamentalFields {
    pub u: VectorField,
    pub v: VectorField,
    pub w: VectorField,
    pub x: VectorField,
    pub y: VectorField,
    pub z: VectorField,
}

impl FundamentalFields {
    /// Projects six raw fields into three vertical and three horizontal ones.
    pub fn from_raw(s: &SubmersionMap, raw: [VectorField; 6]) -> Self {
        let [r0, r1, r2, r3, r4, r5] = raw;
        FundamentalFields {
            u: s.vertical_part(&r0),
            v: s.vertical_part(&r1),
            w: s.vertical_part(&r2),
            x: s.horizontal_part(&r3),
            y: s.horizontal_part(&r4),
            z: s.horizontal_part(&r5),
        }
    }

    /// Seeded smooth unit-scale fields.
    pub fn random(s: &SubmersionMap, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let n = s.total_dim();
        let raw = std::array::from_fn(|_| smooth_vector_field(&mut rng, n, 0.8));
        FundamentalFields::from_raw(s, raw)
    }
}

/// Residual `‖LHS − RHS‖` of one decomposition identity at `p`, with the
/// curvature side and the tensor side computed along independent code paths.
pub fn fundamental_equation_residual(
    s: &SubmersionMap,
    conn: &ConnectionField,
    eq: FundamentalEq,
    fields: &FundamentalFields,
    p: &Point,
    h: f64,
    tolerance: f64,
) -> Result<ResidualReport, GeomError> {
    use FundamentalEq::*;
    use Proj::{Horizontal as Ph, Vertical as Pv};

    let chart = s.source();
    let hp = s.horizontal_projector(p)?;
    let vp = s.vertical_projector(p)?;
    let f = fields;

    let t = |e: &VectorField, g: &VectorField| tensor_t(s, conn, e, g, p, h);
    let a = |e: &VectorField, g: &VectorField| tensor_a(s, conn, e, g, p, h);
    let cv = |v: DVector<f64>| VectorField::constant(v);
    let r_full = |e: &VectorField, ff: &VectorField, g: &VectorField| {
        curvature(chart, conn, e, ff, g, p, h)
    };
    let r_proj = |p1, p2, p3, e: &VectorField, ff: &VectorField, g: &VectorField| {
        projected_curvature(s, conn, p1, p2, p3, e, ff, g, p, h)
    };
    let tor = |e: &VectorField, ff: &VectorField| torsion(chart, conn, e, ff, p, h);
    let nt = |e: &VectorField, ff: &VectorField, g: &VectorField| {
        nabla_tensor(s, conn, MixedTensor::T, e, ff, g, p, h)
    };
    let na = |e: &VectorField, ff: &VectorField, g: &VectorField| {
        nabla_tensor(s, conn, MixedTensor::A, e, ff, g, p, h)
    };

    let residual_vec = match eq {
        VvvW => {
            let lhs = &vp * r_full(&f.u, &f.v, &f.w)?;
            let rhs = r_proj(Pv, Pv, Pv, &f.u, &f.v, &f.w)?
                + t(&f.v, &cv(t(&f.u, &f.w)?))?
                - t(&f.u, &cv(t(&f.v, &f.w)?))?;
            lhs - rhs
        }
        Huvx => {
            let lhs = &hp * r_full(&f.u, &f.v, &f.x)?;
            let rhs = r_proj(Pv, Pv, Ph, &f.u, &f.v, &f.x)?
                + t(&f.v, &cv(t(&f.u, &f.x)?))?
                - t(&f.u, &cv(t(&f.v, &f.x)?))?;
            lhs - rhs
        }
        Vuxv => {
            let lhs = &vp * r_full(&f.u, &f.x, &f.v)?;
            let rhs = r_proj(Pv, Ph, Pv, &f.u, &f.x, &f.v)?
                - t(&f.u, &cv(a(&f.x, &f.v)?))?
                + a(&f.x, &cv(t(&f.u, &f.v)?))?;
            lhs - rhs
        }
        Huxy => {
            let lhs = &hp * r_full(&f.u, &f.x, &f.y)?;
            let rhs = r_proj(Pv, Ph, Ph, &f.u, &f.x, &f.y)?
                - t(&f.u, &cv(a(&f.x, &f.y)?))?
                + a(&f.x, &cv(t(&f.u, &f.y)?))?;
            lhs - rhs
        }
        Vxyu => {
            let lhs = &vp * r_full(&f.x, &f.y, &f.u)?;
            let rhs = r_proj(Ph, Ph, Pv, &f.x, &f.y, &f.u)?
                + a(&f.y, &cv(a(&f.x, &f.u)?))?
                - a(&f.x, &cv(a(&f.y, &f.u)?))?;
            lhs - rhs
        }
        Hxyz => {
            let lhs = &hp * r_full(&f.x, &f.y, &f.z)?;
            let rhs = r_proj(Ph, Ph, Ph, &f.x, &f.y, &f.z)?
                + a(&f.y, &cv(a(&f.x, &f.z)?))?
                - a(&f.x, &cv(a(&f.y, &f.z)?))?;
            lhs - rhs
        }
        Huvw => {
            let lhs = &hp * r_full(&f.u, &f.v, &f.w)?;
            let rhs = &hp * nt(&f.v, &f.u, &f.w)? - &hp * nt(&f.u, &f.v, &f.w)?
                - t(&cv(tor(&f.u, &f.v)?), &f.w)?;
            lhs - rhs
        }
        Vuvx => {
            let lhs = &vp * r_full(&f.u, &f.v, &f.x)?;
            let rhs = &vp * nt(&f.v, &f.u, &f.x)? - &vp * nt(&f.u, &f.v, &f.x)?
                - t(&cv(tor(&f.u, &f.v)?), &f.x)?;
            lhs - rhs
        }
        Huxv => {
            let lhs = &hp * r_full(&f.u, &f.x, &f.v)?;
            let rhs = &hp * nt(&f.x, &f.u, &f.v)? - &hp * na(&f.u, &f.x, &f.v)?
                - a(&cv(a(&f.x, &f.u)?), &f.v)?
                + t(&cv(t(&f.u, &f.x)?), &f.v)?
                - t(&cv(tor(&f.u, &f.x)?), &f.v)?
                - a(&cv(tor(&f.u, &f.x)?), &f.v)?;
            lhs - rhs
        }
        Vuxy => {
            let lhs = &vp * r_full(&f.u, &f.x, &f.y)?;
            let rhs = &vp * nt(&f.x, &f.u, &f.y)? - &vp * na(&f.u, &f.x, &f.y)?
                - a(&cv(a(&f.x, &f.u)?), &f.y)?
                + t(&cv(t(&f.u, &f.x)?), &f.y)?
                - t(&cv(tor(&f.u, &f.x)?), &f.y)?
                - a(&cv(tor(&f.u, &f.x)?), &f.y)?;
            lhs - rhs
        }
        Hxyu => {
            let lhs = &hp * r_full(&f.x, &f.y, &f.u)?;
            let rhs = &hp * na(&f.y, &f.x, &f.u)? - &hp * na(&f.x, &f.y, &f.u)?
                + t(&cv(a(&f.x, &f.y)?), &f.u)?
                - t(&cv(a(&f.y, &f.x)?), &f.u)?
                - t(&cv(tor(&f.x, &f.y)?), &f.u)?
                - a(&cv(tor(&f.x, &f.y)?), &f.u)?;
            lhs - rhs
        }
        Vxyz => {
            let lhs = &vp * r_full(&f.x, &f.y, &f.z)?;
            let rhs = &vp * na(&f.y, &f.x, &f.z)? - &vp * na(&f.x, &f.y, &f.z)?
                + t(&cv(a(&f.x, &f.y)?), &f.z)?
                - t(&cv(a(&f.y, &f.x)?), &f.z)?
                - t(&cv(tor(&f.x, &f.y)?), &f.z)?
                - a(&cv(tor(&f.x, &f.y)?), &f.z)?;
            lhs - rhs
        }
    };

    let mut report = ResidualReport::new(
        eq.identity_id(),
        p.to_vec(),
        "seeded smooth projected fields",
        residual_vec.norm(),
        tolerance,
    );
    if eq.is_exploratory() {
        report = report.exploratory();
    }
    Ok(report)
}

/// Residuals of the two torsion-transfer identities at `p`, with seeded
/// random fields: the horizontal part of `Tor(∇)` on lifted base fields
/// against the lifted `Tor(∇*)`, and the vertical part of `Tor(∇)` on
/// vertical fields against `Tor(∇̂)` on the fiber through `p`.
pub fn torsion_lemma_residuals(
    s: &SubmersionMap,
    conn_m: &ConnectionField,
    conn_b: &ConnectionField,
    seed: u64,
    p: &Point,
    h: f64,
) -> Result<(f64, f64), GeomError> {
    let mut rng = rng_from_seed(seed);
    let m = s.base_dim();
    let b = s.project(p)?;

    // Horizontal identity on random base fields.
    let x_base = smooth_vector_field(&mut rng, m, 0.8);
    let y_base = smooth_vector_field(&mut rng, m, 0.8);
    let x_lift = s.lift_field(&x_base);
    let y_lift = s.lift_field(&y_base);
    let tor_m = torsion(s.source(), conn_m, &x_lift, &y_lift, p, h)?;
    let h_tor = s.horizontal_projector(p)? * tor_m;
    let tor_b = torsion(s.target(), conn_b, &x_base, &y_base, &b, h)?;
    let lifted = s.horizontal_lift(p, &tor_b)?;
    let horizontal_residual = (h_tor - lifted).norm();

    // Vertical identity on random vertical fields, compared on the fiber chart.
    let n = s.total_dim();
    let v_field = s.vertical_part(&smooth_vector_field(&mut rng, n, 0.8));
    let w_field = s.vertical_part(&smooth_vector_field(&mut rng, n, 0.8));
    let fiber = fiber_connection(s, conn_m, &b)?;
    let k = s.fiber_dim();
    let w_coords = DVector::from_fn(k, |a, _| p.coord(m + a));
    let w_point = fiber.chart.point(w_coords)?;
    let v_restr = fiber.restrict_field(s, &v_field);
    let w_restr = fiber.restrict_field(s, &w_field);
    let tor_fiber = torsion(&fiber.chart, &fiber.connection, &v_restr, &w_restr, &w_point, h)?;
    let tor_vert = s.vertical_projector(p)?
        * torsion(s.source(), conn_m, &v_field, &w_field, p, h)?;
    let mut diff = 0.0f64;
    for a in 0..k {
        diff = diff.max((tor_vert[m + a] - tor_fiber[a]).abs());
    }
    for i in 0..m {
        diff = diff.max(tor_vert[i].abs());
    }
    Ok((horizontal_residual, diff))
}

/// Outcome of the duality audit: the worst compatibility defect of the given
/// pair and of the pair of metric-dual connections, over sample points and
/// all base coordinate-field pairs. The two verdicts are predicted to agree.
#[derive(Clone, Debug)]
pub struct DualityCheck {
    pub primal_max: f64,
    pub dual_max: f64,
}

pub fn duality_proposition_check(
    s: &SubmersionMap,
    conn_m: &ConnectionField,
    conn_b: &ConnectionField,
    phi: &crate::chart::ScalarField,
    points: &[Point],
    h: f64,
) -> Result<DualityCheck, GeomError> {
    let dual_m = dual_connection(s.source(), s.metric_m(), conn_m, h);
    let dual_b = dual_connection(s.target(), s.metric_b(), conn_b, h);
    let m = s.base_dim();
    let mut primal_max = 0.0f64;
    let mut dual_max = 0.0f64;
    for p in points {
        for i in 0..m {
            for j in 0..m {
                let x = VectorField::coordinate(i, m);
                let y = VectorField::coordinate(j, m);
                let primal = cshd_defect(s, conn_m, conn_b, phi, &x, &y, p, h)?.norm();
                let dual = cshd_defect(s, &dual_m, &dual_b, phi, &x, &y, p, h)?.norm();
                primal_max = primal_max.max(primal);
                dual_max = dual_max.max(dual);
            }
        }
    }
    Ok(DualityCheck {
        primal_max,
        dual_max,
    })
}
