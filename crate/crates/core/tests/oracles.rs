use std::collections::BTreeMap;

use pmp_core::expr::{parse, BinaryOp, Expr, UnaryOp};
use pmp_core::ode::{integrate, integrate_fundamental, integrate_state, OdeOptions};
use pmp_core::problem::{catalog_get, catalog_names, ControlComponent, ProblemSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(name: &str) -> ProblemSpec {
    catalog_get(name, &BTreeMap::new()).unwrap()
}

/// Fourth-order central difference.
fn fd(mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
    let h = 1e-3 * x.abs().max(1.0);
    (8.0 * (f(x + h) - f(x - h)) - (f(x + 2.0 * h) - f(x - 2.0 * h))) / (12.0 * h)
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-12 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn random_point(s: &ProblemSpec, rng: &mut ChaCha8Rng) -> (f64, Vec<f64>, Vec<f64>) {
    let t = rng.gen_range(0.0..10.0);
    let x = (0..s.state_dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let u = s
        .control_set()
        .components()
        .iter()
        .enumerate()
        .map(|(j, c)| match c {
            ControlComponent::Finite(v) => v[rng.gen_range(0..v.len())],
            ControlComponent::Interval { .. } => {
                let samples = s.control_set().samples(j, t, 2);
                rng.gen_range(samples[0]..=samples[1])
            }
        })
        .collect();
    (t, x, u)
}

#[test]
fn symbolic_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for name in catalog_names() {
        let s = spec(name);
        let m = s.state_dim();
        let mut jac = vec![0.0; m * m];
        let mut dg = vec![0.0; m];
        let mut f = vec![0.0; m];
        for _ in 0..100 {
            let (t, x, u) = random_point(&s, &mut rng);
            s.jacobian_into(t, &x, &u, &mut jac);
            s.cost_gradient_into(t, &x, &u, &mut dg);
            for k in 0..m {
                let shifted = |v: f64| {
                    let mut y = x.clone();
                    y[k] = v;
                    y
                };
                let num = fd(|v| s.g_at(t, &shifted(v), &u), x[k]);
                assert!(rel_err(num, dg[k]) < 1e-6, "{name} dg/dx{k} at {t} {x:?}: {num} vs {}", dg[k]);
                for i in 0..m {
                    let num = fd(
                        |v| {
                            s.f_into(t, &shifted(v), &u, &mut f);
                            f[i]
                        },
                        x[k],
                    );
                    let sym = jac[i * m + k];
                    assert!(rel_err(num, sym) < 1e-6, "{name} df{i}/dx{k}: {num} vs {sym}");
                }
            }
        }
    }
}

#[test]
fn hamiltonian_is_affine_in_multipliers() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for name in catalog_names() {
        let s = spec(name);
        for _ in 0..20 {
            let (t, x, u) = random_point(&s, &mut rng);
            let p: Vec<f64> = (0..s.state_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let q: Vec<f64> = (0..s.state_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (l1, l2, c) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), 0.3);
            let mix: Vec<f64> = p.iter().zip(&q).map(|(a, b)| c * a + (1.0 - c) * b).collect();
            let h = |l: f64, psi: &[f64]| s.hamiltonian(t, &x, &u, l, psi).unwrap();
            let lhs = h(c * l1 + (1.0 - c) * l2, &mix);
            let rhs = c * h(l1, &p) + (1.0 - c) * h(l2, &q);
            assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()), "{name}");
        }
    }
}

#[test]
fn integration_order_is_at_least_four() {
    // y' = -y with a fixed step: compare the end-point error for two steps
    let err = |max_step: f64| {
        let opts = OdeOptions {
            tol: 1.0,
            max_step,
            ..OdeOptions::default()
        };
        let tr = integrate(|_, _, y, dy| dy[0] = -y[0], 0.0, &[1.0], 2.0, &[], &opts).unwrap();
        (tr.node(tr.nodes() - 1)[0] - (-2.0f64).exp()).abs()
    };
    let (e1, e2) = (err(0.2), err(0.1));
    let order = (e1 / e2).log2();
    assert!(order >= 4.0, "observed order {order}");

    // and adaptively: tightening tol reduces the error on decay-discount
    let s = spec("decay-discount");
    let at = |tol: f64| {
        let opts = OdeOptions {
            tol,
            max_step: 10.0,
            ..OdeOptions::default()
        };
        let tr = integrate_state(&s, &[1.0], 5.0, &opts).unwrap();
        (tr.node(tr.nodes() - 1)[0] - (-5.0f64).exp()).abs()
    };
    assert!(at(1e-8) < at(1e-6) && at(1e-6) < at(1e-4));
}

#[test]
fn dense_output_between_nodes() {
    let s = spec("decay-discount");
    let tr = integrate_state(&s, &[1.0], 40.0, &OdeOptions::default()).unwrap();
    let mesh = tr.mesh();
    for i in (0..mesh.len() - 1).step_by(37) {
        let mid = 0.5 * (mesh[i] + mesh[i + 1]);
        assert!((tr.eval(mid).unwrap()[0] - (-mid).exp()).abs() < 1e-6);
        assert_eq!(tr.eval(mesh[i]).unwrap(), tr.node(i));
    }
    assert!(tr.eval(41.0).is_err());
}

fn scaling_and_squaring(j: [[f64; 2]; 2], t: f64) -> [[f64; 2]; 2] {
    let mul = |a: [[f64; 2]; 2], b: [[f64; 2]; 2]| {
        let mut c = [[0.0; 2]; 2];
        for i in 0..2 {
            for k in 0..2 {
                c[i][k] = a[i][0] * b[0][k] + a[i][1] * b[1][k];
            }
        }
        c
    };
    let squarings = 20;
    let scale = t / f64::from(1u32 << squarings);
    let m = [[j[0][0] * scale, j[0][1] * scale], [j[1][0] * scale, j[1][1] * scale]];
    // Taylor to degree 8 on the scaled matrix
    let mut term = [[1.0, 0.0], [0.0, 1.0]];
    let mut sum = term;
    for k in 1..=8 {
        term = mul(term, m);
        for row in &mut term {
            for v in row.iter_mut() {
                *v /= k as f64;
            }
        }
        for i in 0..2 {
            for c in 0..2 {
                sum[i][c] += term[i][c];
            }
        }
    }
    for _ in 0..squarings {
        sum = mul(sum, sum);
    }
    sum
}

#[test]
fn planar_rotation_matches_matrix_exponential() {
    let s = spec("planar-rotation");
    let mu = s.params()["mu"];
    let opts = OdeOptions::default();
    let tr = integrate_state(&s, s.initial_state(), 10.0, &opts).unwrap();
    let pair = integrate_fundamental(&s, &tr, &opts).unwrap();
    let pi = std::f64::consts::PI;
    let want = scaling_and_squaring([[-mu, 1.0], [-1.0, -mu]], pi);
    let got = pair.a().eval(pi).unwrap();
    for i in 0..2 {
        for k in 0..2 {
            assert!((got[i * 2 + k] - want[i][k]).abs() < 1e-6);
        }
    }
    // rows are orthogonal with norm e^{-μπ}
    let norm = (got[0] * got[0] + got[1] * got[1]).sqrt();
    assert!((norm - (-mu * pi).exp()).abs() < 1e-6);
    for (r, k) in pair.consistency_residuals().iter().zip(pair.kappa()) {
        assert!(*r <= 1e-6 * k);
    }
}

#[test]
fn reruns_are_bit_identical() {
    let s = spec("lq-riccati");
    let opts = OdeOptions::default();
    let a = integrate_state(&s, s.initial_state(), 40.0, &opts).unwrap();
    let b = integrate_state(&s, s.initial_state(), 40.0, &opts).unwrap();
    assert_eq!(a, b);
    let fa = integrate_fundamental(&s, &a, &opts).unwrap();
    let fb = integrate_fundamental(&s, &b, &opts).unwrap();
    assert_eq!(fa.a(), fb.a());
    assert_eq!(fa.b(), fb.b());
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (-50i32..50).prop_map(|k| Expr::Const(f64::from(k) / 4.0)),
        prop::sample::select(vec!["t", "x0", "x1", "u0", "rho"]).prop_map(Expr::var),
    ]
}

fn expr_tree() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 40, 2, |inner| {
        let unary = prop::sample::select(vec![
            UnaryOp::Neg,
            UnaryOp::Exp,
            UnaryOp::Log,
            UnaryOp::Sin,
            UnaryOp::Cos,
            UnaryOp::Sqrt,
            UnaryOp::Abs,
        ]);
        let binary = prop::sample::select(vec![
            BinaryOp::Add,
            BinaryOp::Sub,
            BinaryOp::Mul,
            BinaryOp::Div,
            BinaryOp::Pow,
        ]);
        prop_oneof![
            (unary, inner.clone()).prop_map(|(op, a)| Expr::unary(op, a)),
            (binary, inner.clone(), inner).prop_map(|(op, a, b)| Expr::binary(op, a, b)),
        ]
    })
}

proptest! {
    #[test]
    fn printing_round_trips(e in expr_tree()) {
        let text = e.to_string();
        let back = parse(&text).unwrap();
        prop_assert_eq!(&back, &e, "{}", text);
    }

    #[test]
    fn derivative_matches_difference_quotient(e in expr_tree(), x in 0.2f64..2.0) {
        let env = |v: f64| BTreeMap::from([
            ("t".to_string(), 0.7), ("x0".to_string(), v), ("x1".to_string(), 1.3),
            ("u0".to_string(), 0.4), ("rho".to_string(), 0.9),
        ]);
        let Ok(d) = e.diff("x0") else { return Ok(()) };
        let Ok(sym) = d.eval(&env(x)) else { return Ok(()) };
        // quotient and its rounding-error bound
        let quotient = |h: f64| -> Option<(f64, f64)> {
            let at = |v: f64| e.eval(&env(v)).ok();
            let (a, b, c, dd) = (at(x + 2.0 * h)?, at(x + h)?, at(x - h)?, at(x - 2.0 * h)?);
            let size = a.abs().max(b.abs()).max(c.abs()).max(dd.abs());
            Some(((8.0 * (b - c) - (a - dd)) / (12.0 * h), 10.0 * f64::EPSILON * size / h))
        };
        let (Some((coarse, _)), Some((num, noise))) = (quotient(1e-3), quotient(5e-4)) else { return Ok(()) };
        let slack = 1e-6 + noise;
        // near a pole the quotient itself has not converged and proves nothing
        let resolved = rel_err(coarse, num) < 1e-6 || (coarse - num).abs() < slack;
        if resolved && sym.is_finite() && num.is_finite() && sym.abs() < 1e6 {
            prop_assert!(rel_err(num, sym) < 1e-4 || (num - sym).abs() < slack, "{}: {} vs {}", e, num, sym);
        }
    }
}
