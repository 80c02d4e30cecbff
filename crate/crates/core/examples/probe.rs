use consub_core::gallery::GeometryBundle;
use consub_core::tensors::{FundamentalEq, FundamentalFields, fundamental_equation_residual};
use consub_core::chart::fd_directional;
use consub_core::sample::{rng_from_seed, smooth_scalar_field};
use nalgebra::DVector;

fn main() {
    let bundle = GeometryBundle::from_name("hyperbolic:3").unwrap();
    let s = &bundle.submersion;
    let chart = s.source();
    let f = smooth_scalar_field(&mut rng_from_seed(7), 3, 0.8);
    let p = bundle.sample_points(2).unwrap().remove(1);
    let dir = DVector::from_column_slice(&[0.6, -0.3, 0.5]);
    let analytic = f.derivative_along(chart, &p, &dir, 1e-4).unwrap();
    for h in [1e-4, 1e-2, 1e-1] {
        let fd: f64 = fd_directional(chart, |q| f.eval(q), &p, &dir, h).unwrap();
        println!("h={h:.0e}: fd={fd:.12e} err={:.3e}", (fd - analytic).abs());
    }
    let fields = FundamentalFields::random(s, 7);
    for h in [1e-4, 1e-1] {
        for eq in [FundamentalEq::Huvw, FundamentalEq::VvvW, FundamentalEq::Hxyz] {
            let rep = fundamental_equation_residual(s, &bundle.conn_m, eq, &fields, &p, h, 1e-4).unwrap();
            println!("h={h:.0e} {eq:?}: {:.3e}", rep.residual_norm);
        }
    }
    // and the u-field magnitude at p
    println!("U(p) = {:?}", fields.u.eval(&p).unwrap().as_slice());
    println!("X(p) = {:?}", fields.x.eval(&p).unwrap().as_slice());
}
