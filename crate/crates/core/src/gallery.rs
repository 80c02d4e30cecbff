//! Built-in geometries with known closed forms, plus a seeded generator of
//! random conformal bundles for property tests.
//!
//! Every bundle packages a submersion (charts with metrics), the conformal
//! factor with its analytic gradient, and connections on total space and
//! base. Where a closed form exists the Christoffels are analytic, so
//! integrator order measurements see only the scheme's own error; the random
//! generator falls back to the finite-difference Levi-Civita construction.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chart::{Chart, Point, ScalarField, DEFAULT_FD_STEP};
use crate::connection::{levi_civita, Christoffel, ConnectionField, MetricField};
use crate::error::GeomError;
use crate::sample::{rng_from_seed, DomainBox, SmoothRidge};
use crate::submersion::SubmersionMap;

/// Properties a bundle advertises; suites assert the advertised ones.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BundleClaims {
    /// The pair `(∇, ∇*)` satisfies the compatibility identity.
    pub cshd: bool,
    /// `A_Z Z = 0` for horizontal `Z` (hypothesis of the lift audit).
    pub horizontal_a_vanishes: bool,
    /// `∇` is torsion-free.
    pub torsion_free: bool,
}

/// Generator name and parameters; enough to rebuild a bundle from its
/// manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BundleSpec {
    FlatProduct { total_dim: usize, base_dim: usize },
    Hyperbolic { dim: usize },
    WarpedLine { warp: WarpSpec },
    RandomConformal { seed: u64, total_dim: usize, base_dim: usize },
}

/// Warp profile `ψ(x)` of the warped-line geometry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", content = "value", rename_all = "snake_case")]
pub enum WarpSpec {
    Constant(f64),
    /// `ψ(x) = slope · x`.
    Linear(f64),
}

impl WarpSpec {
    fn value(&self, x: f64) -> f64 {
        match self {
            WarpSpec::Constant(c) => *c,
            WarpSpec::Linear(slope) => slope * x,
        }
    }

    fn derivative(&self, _x: f64) -> f64 {
        match self {
            WarpSpec::Constant(_) => 0.0,
            WarpSpec::Linear(slope) => *slope,
        }
    }
}

/// JSON manifest of a bundle: name, dimensions, sample box, claims and the
/// generator spec needed to rebuild it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BundleManifest {
    pub schema: String,
    pub name: String,
    pub total_dim: usize,
    pub base_dim: usize,
    pub sample_box: DomainBox,
    pub claims: BundleClaims,
    pub spec: BundleSpec,
    pub notes: String,
}

pub const MANIFEST_SCHEMA: &str = "consub/bundle-manifest/v1";

/// A complete geometry: submersion, conformal factor, and the connection
/// pair, together with a deterministic sample cloud.
#[derive(Clone)]
pub struct GeometryBundle {
    pub name: String,
    pub submersion: SubmersionMap,
    pub phi: ScalarField,
    pub conn_m: ConnectionField,
    pub conn_b: ConnectionField,
    pub sample_box: DomainBox,
    pub claims: BundleClaims,
    pub spec: BundleSpec,
    pub notes: String,
}

impl GeometryBundle {
    /// Deterministic sample cloud inside the declared box.
    pub fn sample_points(&self, count: usize) -> Result<Vec<Point>, GeomError> {
        self.sample_box
            .sample_points(self.submersion.source(), count)
    }

    /// Projections of the sample cloud, deduplicated order-preserving.
    pub fn base_probe_points(&self, count: usize) -> Result<Vec<Point>, GeomError> {
        self.sample_points(count)?
            .iter()
            .map(|p| self.submersion.project(p))
            .collect()
    }

    pub fn manifest(&self) -> BundleManifest {
        BundleManifest {
            schema: MANIFEST_SCHEMA.to_string(),
            name: self.name.clone(),
            total_dim: self.submersion.total_dim(),
            base_dim: self.submersion.base_dim(),
            sample_box: self.sample_box.clone(),
            claims: self.claims,
            spec: self.spec.clone(),
            notes: self.notes.clone(),
        }
    }

    pub fn from_manifest(manifest: &BundleManifest) -> Result<GeometryBundle, GeomError> {
        build(&manifest.spec)
    }

    /// Parses names like `flat_product:3x2`, `hyperbolic:3`,
    /// `warped_line:constant:0.3`, `warped_line:linear:1`,
    /// `random_conformal:7:3x1`.
    pub fn from_name(name: &str) -> Result<GeometryBundle, GeomError> {
        let parts: Vec<&str> = name.split(':').collect();
        let bad = || GeomError::Unsupported(format!("unknown bundle name '{name}'"));
        let parse_dims = |s: &str| -> Result<(usize, usize), GeomError> {
            let (n, m) = s.split_once('x').ok_or_else(bad)?;
            Ok((
                n.parse().map_err(|_| bad())?,
                m.parse().map_err(|_| bad())?,
            ))
        };
        let spec = match parts.as_slice() {
            ["flat_product", dims] => {
                let (n, m) = parse_dims(dims)?;
                BundleSpec::FlatProduct {
                    total_dim: n,
                    base_dim: m,
                }
            }
            ["hyperbolic", d] => BundleSpec::Hyperbolic {
                dim: d.parse().map_err(|_| bad())?,
            },
            ["warped_line", "constant"] => BundleSpec::WarpedLine {
                warp: WarpSpec::Constant(0.3),
            },
            ["warped_line", "constant", c] => BundleSpec::WarpedLine {
                warp: WarpSpec::Constant(c.parse().map_err(|_| bad())?),
            },
            ["warped_line", "linear"] => BundleSpec::WarpedLine {
                warp: WarpSpec::Linear(1.0),
            },
            ["warped_line", "linear", a] => BundleSpec::WarpedLine {
                warp: WarpSpec::Linear(a.parse().map_err(|_| bad())?),
            },
            ["random_conformal", seed, dims] => {
                let (n, m) = parse_dims(dims)?;
                BundleSpec::RandomConformal {
                    seed: seed.parse().map_err(|_| bad())?,
                    total_dim: n,
                    base_dim: m,
                }
            }
            _ => return Err(bad()),
        };
        build(&spec)
    }

    /// The default catalog shown by the CLI.
    pub fn builtin_names() -> Vec<&'static str> {
        vec![
            "flat_product:2x1",
            "flat_product:3x2",
            "flat_product:4x1",
            "hyperbolic:2",
            "hyperbolic:3",
            "hyperbolic:4",
            "warped_line:constant",
            "warped_line:linear",
            "random_conformal:7:3x1",
            "random_conformal:11:3x2",
        ]
    }
}

fn build(spec: &BundleSpec) -> Result<GeometryBundle, GeomError> {
    match spec {
        BundleSpec::FlatProduct {
            total_dim,
            base_dim,
        } => make_flat_product(*total_dim, *base_dim),
        BundleSpec::Hyperbolic { dim } => make_hyperbolic_halfspace(*dim),
        BundleSpec::WarpedLine { warp } => make_warped_line(*warp),
        BundleSpec::RandomConformal {
            seed,
            total_dim,
            base_dim,
        } => make_random_conformal(*seed, *total_dim, *base_dim),
    }
}

/// Euclidean product `R^n → R^m` with coordinate projection, `φ = 0` and
/// flat connections: the degenerate affine case where every tensor vanishes.
pub fn make_flat_product(total_dim: usize, base_dim: usize) -> Result<GeometryBundle, GeomError> {
    check_dims(total_dim, base_dim)?;
    let n = total_dim;
    let m = base_dim;
    let source = Chart::with_metric(
        format!("R{n}"),
        n,
        |_: &DVector<f64>| true,
        MetricField::euclidean(n),
    );
    let target = Chart::with_metric(
        format!("R{m}"),
        m,
        |_: &DVector<f64>| true,
        MetricField::euclidean(m),
    );
    let submersion =
        SubmersionMap::coordinate_split(source, target, DomainBox::cube(n - m, -2.0, 2.0))?;
    Ok(GeometryBundle {
        name: format!("flat_product:{n}x{m}"),
        submersion,
        phi: ScalarField::constant(0.0),
        conn_m: ConnectionField::flat(n),
        conn_b: ConnectionField::flat(m),
        sample_box: DomainBox::cube(n, -2.0, 2.0),
        claims: BundleClaims {
            cshd: true,
            horizontal_a_vanishes: true,
            torsion_free: true,
        },
        spec: BundleSpec::FlatProduct {
            total_dim: n,
            base_dim: m,
        },
        notes: "Euclidean product; both fundamental tensors vanish identically".into(),
    })
}

/// The half-space `x_n > 0` with metric `x_n^{-2} I` over the Euclidean
/// `R^{n-1}`, `φ = −log x_n`, both connections Levi-Civita (in closed form
/// upstairs).
pub fn make_hyperbolic_halfspace(dim: usize) -> Result<GeometryBundle, GeomError> {
    if dim < 2 {
        return Err(GeomError::Unsupported(
            "hyperbolic half-space needs dimension at least 2".into(),
        ));
    }
    let n = dim;
    let m = n - 1;
    let g_m = MetricField::new(move |p: &Point| {
        let y = p.coord(n - 1);
        DMatrix::identity(n, n) / (y * y)
    });
    let source = Chart::with_metric(
        format!("H{n}"),
        n,
        move |x: &DVector<f64>| x[n - 1] > 0.0,
        g_m,
    );
    let target = Chart::with_metric(
        format!("R{m}"),
        m,
        |_: &DVector<f64>| true,
        MetricField::euclidean(m),
    );
    let submersion =
        SubmersionMap::coordinate_split(source, target, DomainBox::new(vec![0.5], vec![4.0]))?;
    // Γ^k_{ij} = −(1/x_n)(δ_{ki} δ_{jn} + δ_{kj} δ_{in} − δ_{ij} δ_{kn}).
    let conn_m = ConnectionField::new(n, move |p: &Point| {
        let y = p.coord(n - 1);
        let last = n - 1;
        Ok(Christoffel::from_fn(n, |k, i, j| {
            let mut v = 0.0;
            if k == i && j == last {
                v += 1.0;
            }
            if k == j && i == last {
                v += 1.0;
            }
            if i == j && k == last {
                v -= 1.0;
            }
            -v / y
        }))
    });
    let phi = ScalarField::with_gradient(
        move |p: &Point| -p.coord(n - 1).ln(),
        move |p: &Point| {
            let mut g = DVector::zeros(n);
            g[n - 1] = -1.0 / p.coord(n - 1);
            g
        },
    );
    let mut lo = vec![-2.0; n];
    let mut hi = vec![2.0; n];
    lo[n - 1] = 0.5;
    hi[n - 1] = 4.0;
    Ok(GeometryBundle {
        name: format!("hyperbolic:{n}"),
        submersion,
        phi,
        conn_m,
        conn_b: ConnectionField::flat(m),
        sample_box: DomainBox::new(lo, hi),
        claims: BundleClaims {
            cshd: true,
            horizontal_a_vanishes: false,
            torsion_free: true,
        },
        spec: BundleSpec::Hyperbolic { dim: n },
        notes: "half-space model; fibers are totally geodesic vertical lines".into(),
    })
}

/// `R²` with `g = e^{2ψ(x)} dx² + dy²` over `(R, dx²)`, `φ = ψ`. The metric
/// is block diagonal with `ψ` independent of the fiber coordinate, so
/// `A_Z Z = 0` for horizontal `Z`.
pub fn make_warped_line(warp: WarpSpec) -> Result<GeometryBundle, GeomError> {
    let g_m = MetricField::new(move |p: &Point| {
        let e = (2.0 * warp.value(p.coord(0))).exp();
        DMatrix::from_row_slice(2, 2, &[e, 0.0, 0.0, 1.0])
    });
    let source = Chart::with_metric("R2-warped", 2, |_: &DVector<f64>| true, g_m);
    let target = Chart::with_metric(
        "R1",
        1,
        |_: &DVector<f64>| true,
        MetricField::euclidean(1),
    );
    let submersion =
        SubmersionMap::coordinate_split(source, target, DomainBox::cube(1, -2.0, 2.0))?;
    // Only Γ^x_{xx} = ψ′(x) survives for the block metric.
    let conn_m = ConnectionField::new(2, move |p: &Point| {
        let mut gamma = Christoffel::zeros(2);
        gamma.set(0, 0, 0, warp.derivative(p.coord(0)));
        Ok(gamma)
    });
    let phi = ScalarField::with_gradient(
        move |p: &Point| warp.value(p.coord(0)),
        move |p: &Point| DVector::from_column_slice(&[warp.derivative(p.coord(0)), 0.0]),
    );
    let name = match warp {
        WarpSpec::Constant(c) => format!("warped_line:constant:{c}"),
        WarpSpec::Linear(a) => format!("warped_line:linear:{a}"),
    };
    Ok(GeometryBundle {
        name,
        submersion,
        phi,
        conn_m,
        conn_b: ConnectionField::flat(1),
        sample_box: DomainBox::cube(2, -2.0, 2.0),
        claims: BundleClaims {
            cshd: true,
            horizontal_a_vanishes: true,
            torsion_free: true,
        },
        spec: BundleSpec::WarpedLine { warp },
        notes: "block-diagonal warp; hypothesis geometry for the lift audit".into(),
    })
}

/// Smooth symmetric perturbation `I + S(u)` with `‖S‖ < 1`, SPD everywhere.
#[derive(Clone)]
struct SpdRidgeMatrix {
    dim: usize,
    arg_dim: usize,
    entries: Vec<SmoothRidge>,
}

impl SpdRidgeMatrix {
    fn draw(rng: &mut rand_chacha::ChaCha8Rng, dim: usize, arg_dim: usize) -> Self {
        let amplitude = 0.25 / dim as f64;
        let mut entries = Vec::new();
        for _ in 0..dim * (dim + 1) / 2 {
            entries.push(SmoothRidge::draw(rng, arg_dim, amplitude));
        }
        SpdRidgeMatrix {
            dim,
            arg_dim,
            entries,
        }
    }

    fn eval(&self, u: &DVector<f64>) -> DMatrix<f64> {
        debug_assert_eq!(u.len(), self.arg_dim);
        let mut g = DMatrix::identity(self.dim, self.dim);
        let mut idx = 0;
        for a in 0..self.dim {
            for b in a..self.dim {
                let v = self.entries[idx].value(u);
                idx += 1;
                g[(a, b)] += v;
                if a != b {
                    g[(b, a)] += v;
                }
            }
        }
        g
    }
}

/// Seeded random conformal bundle: block metric
/// `g_m = e^{2φ(x)}(pullback of a smooth SPD base metric) ⊕ (smooth SPD
/// fiber block)`, coordinate projection, `φ` a bounded smooth ridge in all
/// coordinates. Conformality holds exactly by construction; the fiber block
/// depends on the base coordinates, so the fibers are generally not totally
/// geodesic. Connections are Levi-Civita (finite-difference construction).
pub fn make_random_conformal(
    seed: u64,
    total_dim: usize,
    base_dim: usize,
) -> Result<GeometryBundle, GeomError> {
    check_dims(total_dim, base_dim)?;
    let n = total_dim;
    let m = base_dim;
    let k = n - m;
    let mut rng = rng_from_seed(seed);
    let base_block = SpdRidgeMatrix::draw(&mut rng, m, m);
    let fiber_block = SpdRidgeMatrix::draw(&mut rng, k, n);
    let phi_ridge = SmoothRidge::draw(&mut rng, n, 0.4);

    let phi_for_metric = phi_ridge.clone();
    let base_for_metric = base_block.clone();
    let fiber_for_metric = fiber_block.clone();
    let g_m = MetricField::new(move |p: &Point| {
        let x = p.coords();
        let u = DVector::from_fn(m, |i, _| x[i]);
        let scale = (2.0 * phi_for_metric.value(x)).exp();
        let gb = base_for_metric.eval(&u);
        let gf = fiber_for_metric.eval(x);
        let mut g = DMatrix::zeros(n, n);
        for a in 0..m {
            for b in 0..m {
                g[(a, b)] = scale * gb[(a, b)];
            }
        }
        for a in 0..k {
            for b in 0..k {
                g[(m + a, m + b)] = gf[(a, b)];
            }
        }
        g
    });
    let base_for_target = base_block.clone();
    let g_b = MetricField::new(move |b: &Point| base_for_target.eval(b.coords()));

    let source = Chart::with_metric(format!("random{n}"), n, |_: &DVector<f64>| true, g_m);
    let target = Chart::with_metric(format!("random-base{m}"), m, |_: &DVector<f64>| true, g_b);
    let submersion =
        SubmersionMap::coordinate_split(source, target, DomainBox::cube(k, -1.5, 1.5))?;
    let conn_m = levi_civita(
        submersion.source(),
        submersion.metric_m(),
        DEFAULT_FD_STEP,
    );
    let conn_b = levi_civita(
        submersion.target(),
        submersion.metric_b(),
        DEFAULT_FD_STEP,
    );
    let phi_grad = phi_ridge.clone();
    let phi = ScalarField::with_gradient(
        move |p: &Point| phi_ridge.value(p.coords()),
        move |p: &Point| phi_grad.gradient(p.coords()),
    );
    Ok(GeometryBundle {
        name: format!("random_conformal:{seed}:{n}x{m}"),
        submersion,
        phi,
        conn_m,
        conn_b,
        sample_box: DomainBox::cube(n, -1.5, 1.5),
        claims: BundleClaims {
            cshd: true,
            horizontal_a_vanishes: false,
            torsion_free: true,
        },
        spec: BundleSpec::RandomConformal {
            seed,
            total_dim: n,
            base_dim: m,
        },
        notes: "seeded block-conformal metric; fibers not totally geodesic".into(),
    })
}

fn check_dims(total_dim: usize, base_dim: usize) -> Result<(), GeomError> {
    if base_dim < 1 || total_dim <= base_dim {
        return Err(GeomError::Unsupported(format!(
            "need total dim > base dim >= 1, got {total_dim} and {base_dim}"
        )));
    }
    Ok(())
}

/// A seeded torsion-free connection on the total space that is *not*
/// Levi-Civita, together with the base connection it induces.
///
/// The perturbation added to the bundle's connection is symmetric (keeps
/// torsion zero) and its horizontal-to-horizontal block depends on base
/// coordinates only, so the horizontal part of `∇_X̃ Ỹ` stays projectable
/// and the induced connection exists; the pair then satisfies the
/// compatibility identity by construction. The vertical block carries free
/// seeded noise.
pub fn non_levi_civita_pair(
    bundle: &GeometryBundle,
    seed: u64,
    probe_count: usize,
    h: f64,
) -> Result<(ConnectionField, ConnectionField), GeomError> {
    let s = &bundle.submersion;
    let n = s.total_dim();
    let m = s.base_dim();
    let mut rng = rng_from_seed(seed);
    let mut horizontal = Vec::new();
    for _ in 0..m {
        let mut block = Vec::new();
        for _ in 0..m * (m + 1) / 2 {
            block.push(SmoothRidge::draw(&mut rng, m, 0.2));
        }
        horizontal.push(block);
    }
    let mut vertical = Vec::new();
    let k = n - m;
    for _ in 0..k {
        let mut block = Vec::new();
        for _ in 0..k * (k + 1) / 2 {
            block.push(SmoothRidge::draw(&mut rng, n, 0.2));
        }
        vertical.push(block);
    }
    let conn_m = bundle.conn_m.perturbed(move |p: &Point| {
        let mut d = Christoffel::zeros(n);
        let base = DVector::from_fn(m, |i, _| p.coord(i));
        for (a, block) in horizontal.iter().enumerate() {
            let mut idx = 0;
            for i in 0..m {
                for j in i..m {
                    let v = block[idx].value(&base);
                    idx += 1;
                    d.set(a, i, j, v);
                    if i != j {
                        d.set(a, j, i, v);
                    }
                }
            }
        }
        for (c, block) in vertical.iter().enumerate() {
            let mut idx = 0;
            for i in 0..k {
                for j in i..k {
                    let v = block[idx].value(p.coords());
                    idx += 1;
                    d.set(m + c, m + i, m + j, v);
                    if i != j {
                        d.set(m + c, m + j, m + i, v);
                    }
                }
            }
        }
        Ok(d)
    });
    let probes = bundle.base_probe_points(probe_count.max(1))?;
    let (conn_b, _report) =
        crate::submersion::induced_connection(s, &conn_m, &bundle.phi, &probes, 8, 1e-5, h)?;
    Ok((conn_m, conn_b))
}

/// Draws a seeded start state for geodesic batches: a sample-box point and
/// a velocity of `g_m`-norm in `[0.3, 1]`.
pub fn random_geodesic_start(
    bundle: &GeometryBundle,
    index: usize,
    seed: u64,
) -> Result<(Point, DVector<f64>), GeomError> {
    let points = bundle.sample_points(index + 1)?;
    let p0 = points[index].clone();
    let mut rng = rng_from_seed(seed.wrapping_add(index as u64));
    let n = bundle.submersion.total_dim();
    let raw = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let norm = bundle.submersion.metric_m().norm(&p0, &raw)?;
    if norm <= 1e-12 {
        return Err(GeomError::Degenerate("zero random velocity".into()));
    }
    let speed = rng.gen_range(0.3..1.0);
    Ok((p0, raw * (speed / norm)))
}
