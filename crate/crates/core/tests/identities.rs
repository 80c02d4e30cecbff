//! Cross-module identity checks on the gallery geometries: the curvature
//! decomposition suite, torsion transfer, duality of compatible pairs, and
//! the along-curve decompositions, each with the two sides computed along
//! independent code paths.

use nalgebra::DVector;

use consub_core::chart::{Point, ScalarField, VectorField};
use consub_core::connection::dual_connection;
use consub_core::gallery::{non_levi_civita_pair, GeometryBundle};
use consub_core::geodesic::{
    decomposition_residual_h, decomposition_residual_v, geodesic_ivp, sigma_dd_residuals,
};
use consub_core::submersion::cshd_defect;
use consub_core::suite::seeded_geodesic;
use consub_core::tensors::{
    fundamental_equation_residual, torsion_lemma_residuals, FundamentalEq, FundamentalFields,
};

const H: f64 = 1e-4;

fn bundle(name: &str) -> GeometryBundle {
    GeometryBundle::from_name(name).unwrap()
}

#[test]
fn algebraic_identities_hold_across_gallery_geometries() {
    for name in [
        "hyperbolic:2",
        "hyperbolic:3",
        "warped_line:linear",
        "random_conformal:5:3x2",
        "random_conformal:13:4x2",
    ] {
        let b = bundle(name);
        let fields = FundamentalFields::random(&b.submersion, 21);
        for p in b.sample_points(6).unwrap() {
            for eq in FundamentalEq::ALGEBRAIC {
                let rep =
                    fundamental_equation_residual(&b.submersion, &b.conn_m, eq, &fields, &p, H, 1e-4)
                        .unwrap();
                assert!(
                    rep.pass,
                    "{name} {eq:?} residual {} at {:?}",
                    rep.residual_norm,
                    p.to_vec()
                );
            }
        }
    }
}

#[test]
fn exploratory_identities_vanish_on_the_flat_product() {
    let b = bundle("flat_product:3x2");
    let fields = FundamentalFields::random(&b.submersion, 4);
    for p in b.sample_points(5).unwrap() {
        for eq in FundamentalEq::ALL {
            if !eq.is_exploratory() {
                continue;
            }
            let rep =
                fundamental_equation_residual(&b.submersion, &b.conn_m, eq, &fields, &p, H, 1e-3)
                    .unwrap();
            assert!(rep.exploratory);
            assert!(rep.pass, "{eq:?} residual {}", rep.residual_norm);
        }
    }
}

#[test]
fn torsion_free_connections_induce_torsion_free_connections() {
    for name in GeometryBundle::builtin_names() {
        let b = bundle(name);
        assert!(b.claims.torsion_free);
        for (idx, p) in b.sample_points(5).unwrap().iter().enumerate() {
            let (hres, vres) =
                torsion_lemma_residuals(&b.submersion, &b.conn_m, &b.conn_b, idx as u64, p, H)
                    .unwrap();
            assert!(hres <= 1e-6, "{name} horizontal {hres}");
            assert!(vres <= 1e-6, "{name} vertical {vres}");
        }
    }
}

/// Compatible pairs stay compatible after passing both connections through
/// their metric duals, and a broken pair fails on both sides.
#[test]
fn duality_transfer_for_induced_non_levi_civita_pairs() {
    for (name, seed) in [
        ("hyperbolic:3", 3u64),
        ("random_conformal:5:3x2", 5),
        ("random_conformal:9:4x2", 9),
    ] {
        let b = bundle(name);
        let (conn_m, conn_b) = non_levi_civita_pair(&b, seed, 4, H).unwrap();
        let s = &b.submersion;
        let dual_m = dual_connection(s.source(), s.metric_m(), &conn_m, H);
        let dual_b = dual_connection(s.target(), s.metric_b(), &conn_b, H);
        let m = s.base_dim();
        for p in b.sample_points(5).unwrap() {
            for i in 0..m {
                for j in 0..m {
                    let x = VectorField::coordinate(i, m);
                    let y = VectorField::coordinate(j, m);
                    let primal = cshd_defect(s, &conn_m, &conn_b, &b.phi, &x, &y, &p, H)
                        .unwrap()
                        .norm();
                    let dual = cshd_defect(s, &dual_m, &dual_b, &b.phi, &x, &y, &p, H)
                        .unwrap()
                        .norm();
                    assert!(primal <= 1e-5, "{name} primal {primal}");
                    assert!(dual <= 1e-4, "{name} dual {dual}");
                }
            }
        }
        // The connection genuinely differs from the bundle's own.
        let p = b.sample_points(1).unwrap().remove(0);
        let diff = conn_m.christoffel(&p).unwrap() - b.conn_m.christoffel(&p).unwrap();
        assert!(diff.max_abs() >= 1e-2, "{name} perturbation too small");
    }
}

#[test]
fn broken_pair_fails_on_both_sides() {
    let b = bundle("random_conformal:5:3x2");
    let (conn_m, conn_b) = non_levi_civita_pair(&b, 5, 4, H).unwrap();
    let conn_b_bad = conn_b.perturbed(|_: &Point| {
        let mut d = consub_core::connection::Christoffel::zeros(2);
        d.set(0, 0, 0, 0.1);
        Ok(d)
    });
    let s = &b.submersion;
    let dual_m = dual_connection(s.source(), s.metric_m(), &conn_m, H);
    let dual_b = dual_connection(s.target(), s.metric_b(), &conn_b_bad, H);
    let p = b.sample_points(3).unwrap().remove(2);
    let e0 = VectorField::coordinate(0, 2);
    let primal = cshd_defect(s, &conn_m, &conn_b_bad, &b.phi, &e0, &e0, &p, H)
        .unwrap()
        .norm();
    let dual = cshd_defect(s, &dual_m, &dual_b, &b.phi, &e0, &e0, &p, H)
        .unwrap()
        .norm();
    assert!(primal >= 0.05, "primal {primal}");
    assert!(dual >= 0.01, "dual {dual}");
}

/// The along-curve decomposition with a general field `E` (not just `σ′`)
/// on hyperbolic geodesics.
#[test]
fn along_curve_decomposition_with_general_fields() {
    let b = bundle("hyperbolic:3");
    let s = &b.submersion;
    let field = VectorField::new(|q: &Point| {
        DVector::from_column_slice(&[
            (q.coord(2)).sin(),
            0.4 * q.coord(0),
            0.3 * q.coord(1) + 0.7,
        ])
    });
    for c in 0..3u64 {
        let opts = consub_core::suite::SuiteOptions {
            curve_steps: 1000,
            seed: 40 + c,
            ..Default::default()
        };
        let curve = seeded_geodesic(&b, c as usize, &opts).unwrap();
        let values = curve.sample_field(&field).unwrap();
        for i in [250usize, 500, 750] {
            let rh = decomposition_residual_h(
                s, &b.conn_m, &b.conn_b, &b.phi, &curve, &values, i, H,
            )
            .unwrap();
            let rv =
                decomposition_residual_v(s, &b.conn_m, &b.phi, &curve, &values, i, H).unwrap();
            assert!(rh.norm() <= 1e-4, "curve {c} sample {i}: h {}", rh.norm());
            assert!(rv.norm() <= 1e-4, "curve {c} sample {i}: v {}", rv.norm());
        }
    }
}

/// On a non-geodesic curve both acceleration splits still hold (the
/// decomposition is for arbitrary curves).
#[test]
fn acceleration_split_on_a_non_geodesic_curve() {
    let b = bundle("hyperbolic:2");
    let s = &b.submersion;
    // Integrate with a deliberately wrong connection so the curve is not a
    // geodesic of the bundle connection, then check the split against the
    // bundle connection.
    let wrong = b.conn_m.perturbed(|_: &Point| {
        let mut d = consub_core::connection::Christoffel::zeros(2);
        d.set(0, 0, 0, 0.4);
        d.set(1, 1, 1, -0.3);
        Ok(d)
    });
    let p0 = s.source().point_from_slice(&[0.0, 2.0]).unwrap();
    let v0 = DVector::from_column_slice(&[0.7, 0.4]);
    let curve = geodesic_ivp(s.source(), &wrong, &p0, &v0, 1.0, 1000)
        .unwrap()
        .into_complete()
        .unwrap();
    for i in [300usize, 600, 900] {
        let (rh, rv) =
            sigma_dd_residuals(s, &b.conn_m, &b.conn_b, &b.phi, &curve, i, H, 1e-4).unwrap();
        assert!(rh.pass, "h {}", rh.residual_norm);
        assert!(rv.pass, "v {}", rv.residual_norm);
    }
}
