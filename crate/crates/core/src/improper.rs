//! The improper integral `I_ξ(T) = ∫₀ᵀ ∂g/∂x(t, x_ξ(t), u⁰(t)) A_ξ(t) dt`,
//! detection of its limit as `T → ∞`, and an empirical continuity probe in
//! the initial state `ξ`.

use crate::linalg;
use crate::ode::{integrate_fundamental, integrate_state, FundamentalPair, OdeError, OdeOptions, Trajectory};
use crate::problem::ProblemSpec;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_TAIL_TOL: f64 = 1e-6;
pub const DEFAULT_WINDOW: f64 = 0.25;

// 3-point Gauss–Legendre on [0, 1]
const GL_NODES: [f64; 3] = [
    0.112_701_665_379_258_31,
    0.5,
    0.887_298_334_620_741_7,
];
const GL_WEIGHTS: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

#[derive(Debug, Clone, PartialEq)]
pub enum ImproperError {
    Ode(OdeError),
    NonFiniteIntegrand { t: f64 },
    InvalidInput(&'static str),
}

impl fmt::Display for ImproperError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ode(e) => write!(f, "{e}"),
            Self::NonFiniteIntegrand { t } => write!(f, "non-finite integrand at t = {t}"),
            Self::InvalidInput(what) => write!(f, "{what}"),
        }
    }
}

impl From<OdeError> for ImproperError {
    fn from(e: OdeError) -> Self {
        Self::Ode(e)
    }
}

/// `I(t)` on the mesh of a [`FundamentalPair`], as a Hermite trajectory
/// whose slopes are the integrand itself.
#[derive(Debug, Clone)]
pub struct IntegralTrace {
    values: Trajectory,
    // per-interval quadrature results, kept so that tails can be summed
    // from the far end without cancellation
    increments: Vec<f64>,
}

impl IntegralTrace {
    pub fn trajectory(&self) -> &Trajectory {
        &self.values
    }

    pub fn mesh(&self) -> &[f64] {
        self.values.mesh()
    }

    pub fn dim(&self) -> usize {
        self.values.dim()
    }

    pub fn at_node(&self, i: usize) -> &[f64] {
        self.values.node(i)
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>, OdeError> {
        self.values.eval(t)
    }

    /// Integrand `∂g/∂x · A` at `t`, taken from the interval to the right
    /// at interior nodes.
    pub fn integrand(&self, t: f64) -> Result<Vec<f64>, OdeError> {
        let mut out = vec![0.0; self.dim()];
        self.values.derivative_into(t, &mut out)?;
        Ok(out)
    }

    /// `I(T_max)`.
    pub fn last(&self) -> &[f64] {
        self.values.node(self.values.nodes() - 1)
    }

    /// `I(T_max) − I(t_i)` for every node, accumulated backwards from
    /// `T_max` so that small tails keep their relative accuracy.
    pub fn tails(&self) -> Vec<f64> {
        let m = self.dim();
        let n = self.mesh().len();
        let mut out = vec![0.0; n * m];
        for i in (0..n - 1).rev() {
            for d in 0..m {
                out[i * m + d] = out[(i + 1) * m + d] + self.increments[i * m + d];
            }
        }
        out
    }
}

/// Integrand row vector `∂g/∂x(t, x, u) · A` written into `out`.
struct Integrand<'a> {
    spec: &'a ProblemSpec,
    x: Vec<f64>,
    a: Vec<f64>,
    u: Vec<f64>,
    dg: Vec<f64>,
}

impl<'a> Integrand<'a> {
    fn new(spec: &'a ProblemSpec) -> Self {
        let m = spec.state_dim();
        Self {
            spec,
            x: vec![0.0; m],
            a: vec![0.0; m * m],
            u: vec![0.0; spec.control_dim()],
            dg: vec![0.0; m],
        }
    }

    fn eval(&mut self, fund: &FundamentalPair, i: usize, anchor: f64, t: f64, out: &mut [f64]) -> Result<(), ImproperError> {
        fund.state().eval_in(i, t, &mut self.x);
        fund.a().eval_in(i, t, &mut self.a);
        self.spec.candidate_on(anchor, t, &mut self.u);
        self.spec.cost_gradient_into(t, &self.x, &self.u, &mut self.dg);
        linalg::row_mul(self.x.len(), &self.dg, &self.a, out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(ImproperError::NonFiniteIntegrand { t })
        }
    }
}

/// Accumulates `I` node by node with Gauss–Legendre quadrature of the
/// interpolated integrand on each mesh interval.
pub fn accumulate(spec: &ProblemSpec, fund: &FundamentalPair) -> Result<IntegralTrace, ImproperError> {
    let m = spec.state_dim();
    if fund.dim() != m {
        return Err(ImproperError::InvalidInput("fundamental pair has the wrong dimension"));
    }
    let mesh = fund.mesh();
    let n = mesh.len();
    let mut values = vec![0.0; n * m];
    let mut start = vec![0.0; (n - 1) * m];
    let mut end = vec![0.0; (n - 1) * m];
    let mut w = vec![0.0; m];
    let mut acc = vec![0.0; m];
    let mut increments = vec![0.0; (n - 1) * m];
    let mut integrand = Integrand::new(spec);

    for i in 0..n - 1 {
        let (t0, t1) = (mesh[i], mesh[i + 1]);
        let h = t1 - t0;
        let anchor = 0.5 * (t0 + t1);
        integrand.eval(fund, i, anchor, t0, &mut start[i * m..(i + 1) * m])?;
        integrand.eval(fund, i, anchor, t1, &mut end[i * m..(i + 1) * m])?;
        acc.fill(0.0);
        for (s, wt) in GL_NODES.iter().zip(GL_WEIGHTS) {
            integrand.eval(fund, i, anchor, t0 + s * h, &mut w)?;
            for (a, v) in acc.iter_mut().zip(&w) {
                *a += wt * v;
            }
        }
        for d in 0..m {
            increments[i * m + d] = h * acc[d];
            values[(i + 1) * m + d] = values[i * m + d] + h * acc[d];
        }
    }
    let values = Trajectory::new(m, mesh.to_vec(), values, start, end, fund.state().tolerance())?;
    Ok(IntegralTrace { values, increments })
}

/// Result of tail-variation analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitEstimate {
    /// `Λ = I(T_max)`.
    pub lambda: Vec<f64>,
    pub converged: bool,
    /// Earliest node `T` with `v(T) ≤ tail_tol`.
    pub onset: Option<f64>,
    /// `v` at the start of the trailing window.
    pub window_variation: f64,
    pub tail_tol: f64,
    pub window: f64,
}

/// Tail variation `v(T_i) = sup_{t_j ≥ T_i} ‖I(t_j) − I(T_i)‖` per node.
pub fn tail_variation(trace: &IntegralTrace) -> Vec<f64> {
    let n = trace.mesh().len();
    let mut diff = vec![0.0; trace.dim()];
    (0..n)
        .map(|i| {
            let base = trace.at_node(i);
            (i + 1..n)
                .map(|j| {
                    for ((d, a), b) in diff.iter_mut().zip(trace.at_node(j)).zip(base) {
                        *d = a - b;
                    }
                    linalg::norm(&diff)
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Decides whether `I(T)` has settled: converged iff the variation of `I`
/// over the trailing `window` fraction of `[0, T_max]` is at most
/// `tail_tol`.
pub fn estimate_limit(trace: &IntegralTrace, tail_tol: f64, window: f64) -> Result<LimitEstimate, ImproperError> {
    if !(tail_tol > 0.0) {
        return Err(ImproperError::InvalidInput("tail tolerance must be positive"));
    }
    if !(window > 0.0 && window < 1.0) {
        return Err(ImproperError::InvalidInput("window must lie in (0, 1)"));
    }
    let mesh = trace.mesh();
    let t_end = mesh[mesh.len() - 1];
    let t_w = mesh[0] + (1.0 - window) * (t_end - mesh[0]);
    let at_w = trace.eval(t_w)?;
    let mut diff = vec![0.0; trace.dim()];
    let mut window_variation: f64 = 0.0;
    for (i, _) in mesh.iter().enumerate().filter(|(_, t)| **t >= t_w) {
        for ((d, a), b) in diff.iter_mut().zip(trace.at_node(i)).zip(&at_w) {
            *d = a - b;
        }
        window_variation = window_variation.max(linalg::norm(&diff));
    }
    let onset = tail_variation(trace)
        .iter()
        .position(|v| *v <= tail_tol)
        .map(|i| mesh[i]);
    Ok(LimitEstimate {
        lambda: trace.last().to_vec(),
        converged: window_variation <= tail_tol && trace.last().iter().all(|v| v.is_finite()),
        onset,
        window_variation,
        tail_tol,
        window,
    })
}

/// State, fundamental pair and integral for one initial state.
pub fn solve_from(
    spec: &ProblemSpec,
    xi: &[f64],
    t_max: f64,
    opts: &OdeOptions,
) -> Result<(FundamentalPair, IntegralTrace), ImproperError> {
    let traj = integrate_state(spec, xi, t_max, opts)?;
    let fund = integrate_fundamental(spec, &traj, opts)?;
    let trace = accumulate(spec, &fund)?;
    Ok((fund, trace))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityRow {
    pub radius: f64,
    /// Max over successful samples of `sup_t ‖I_ξ(t) − I₀(t)‖`.
    pub deviation: f64,
    pub samples: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityProbe {
    pub rows: Vec<ContinuityRow>,
    /// Deviations shrink with the radius, or sit below the noise floor.
    pub decreasing: bool,
}

/// Random point on the unit sphere in `R^m` by rejection from the cube.
fn unit_sphere_point<R: Rng>(m: usize, rng: &mut R) -> Vec<f64> {
    if m == 1 {
        return vec![if rng.gen::<bool>() { 1.0 } else { -1.0 }];
    }
    loop {
        let z: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = linalg::norm(&z);
        if r > 1e-3 && r <= 1.0 {
            return z.into_iter().map(|v| v / r).collect();
        }
    }
}

/// Re-solves from `ξ` on spheres of each radius around the initial state
/// and records the sup deviation of `I_ξ` from `base` over `base`'s mesh.
///
/// Samples whose integration fails are skipped and counted. `floor` is the
/// deviation below which two radii count as indistinguishable.
pub fn probe_continuity(
    spec: &ProblemSpec,
    base: &IntegralTrace,
    radii: &[f64],
    samples_per_radius: usize,
    seed: u64,
    opts: &OdeOptions,
    floor: f64,
) -> Result<ContinuityProbe, ImproperError> {
    if radii.iter().any(|r| !(*r > 0.0)) {
        return Err(ImproperError::InvalidInput("radii must be positive"));
    }
    let m = spec.state_dim();
    let t_max = base.mesh()[base.mesh().len() - 1];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(radii.len());
    let mut diff = vec![0.0; m];
    let mut at = vec![0.0; m];
    for &radius in radii {
        let mut row = ContinuityRow {
            radius,
            deviation: 0.0,
            samples: 0,
            failures: 0,
        };
        for _ in 0..samples_per_radius {
            let dir = unit_sphere_point(m, &mut rng);
            let xi: Vec<f64> = spec
                .initial_state()
                .iter()
                .zip(&dir)
                .map(|(x, d)| x + radius * d)
                .collect();
            let trace = match solve_from(spec, &xi, t_max, opts) {
                Ok((_, trace)) => trace,
                Err(_) => {
                    row.failures += 1;
                    continue;
                }
            };
            let mut sup: f64 = 0.0;
            for (i, &t) in base.mesh().iter().enumerate() {
                trace.trajectory().eval_into(t, &mut at)?;
                for ((d, a), b) in diff.iter_mut().zip(&at).zip(base.at_node(i)) {
                    *d = a - b;
                }
                sup = sup.max(linalg::norm(&diff));
            }
            row.deviation = row.deviation.max(sup);
            row.samples += 1;
        }
        rows.push(row);
    }
    let decreasing = rows
        .windows(2)
        .all(|w| w[1].deviation < w[0].deviation || w[1].deviation <= floor);
    Ok(ContinuityProbe { rows, decreasing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{catalog_get, validate, CandidateDraft, ControlDraft, ProblemDraft};
    use alloc::collections::BTreeMap;
    use alloc::string::ToString;

    fn spec(name: &str) -> ProblemSpec {
        catalog_get(name, &BTreeMap::new()).unwrap()
    }

    fn solve(s: &ProblemSpec, t_max: f64) -> (FundamentalPair, IntegralTrace) {
        solve_from(s, s.initial_state(), t_max, &OdeOptions::default()).unwrap()
    }

    #[test]
    fn zero_gradient_integral_vanishes() {
        let s = spec("zero-gradient");
        let (_, tr) = solve(&s, 40.0);
        assert!((0..tr.mesh().len()).all(|i| tr.at_node(i) == [0.0]));
        let est = estimate_limit(&tr, 1e-6, 0.25).unwrap();
        assert!(est.converged);
        assert_eq!(est.lambda, [0.0]);
        assert_eq!(est.onset, Some(0.0));
    }

    #[test]
    fn decay_discount_closed_form() {
        let s = spec("decay-discount");
        let (_, tr) = solve(&s, 40.0);
        assert_eq!(tr.at_node(0), [0.0]);
        for t in [0.5, 1.0, 3.3, 10.0] {
            let want = 0.5 * (1.0 - libm::exp(-2.0 * t));
            assert!((tr.eval(t).unwrap()[0] - want).abs() < 1e-7, "{t}");
        }
        let est = estimate_limit(&tr, 1e-6, 0.25).unwrap();
        assert!(est.converged);
        assert!((est.lambda[0] - 0.5).abs() < 1e-7);
        let tails = tr.tails();
        let i = tr.mesh().iter().position(|t| *t >= 20.0).unwrap();
        let want = 0.5 * (libm::exp(-2.0 * tr.mesh()[i]) - libm::exp(-80.0));
        assert!((tails[i] - want).abs() < 1e-6 * want);
        // e^{-2T}/2 ≤ 1e-6 from T ≈ 6.56
        let onset = est.onset.unwrap();
        assert!(onset > 6.0 && onset < 7.0, "{onset}");
    }

    #[test]
    fn interpolant_matches_integrand_at_midpoints() {
        for name in ["decay-discount", "planar-rotation", "ss-cubic", "lq-riccati"] {
            let s = spec(name);
            let (fund, tr) = solve(&s, 20.0);
            let mut integrand = Integrand::new(&s);
            let mut w = vec![0.0; s.state_dim()];
            let mut d = vec![0.0; s.state_dim()];
            let mesh = tr.mesh();
            for i in 0..mesh.len() - 1 {
                let mid = 0.5 * (mesh[i] + mesh[i + 1]);
                integrand.eval(&fund, i, mid, mid, &mut w).unwrap();
                tr.trajectory().derivative_in(i, mid, &mut d);
                let bound = 1e-4 * (1.0 + linalg::norm(&w));
                assert!(linalg::max_abs_diff(&w, &d) <= bound, "{name} at {mid}");
            }
        }
    }

    #[test]
    fn planar_rotation_against_trapezoid_oracle() {
        // I(T) = ∫ e^{-t} e^{-μt} (cos t, sin t) dt, refined trapezoid rule
        let s = spec("planar-rotation");
        let (_, tr) = solve(&s, 10.0);
        let n = 200_000;
        let t_end = 5.0;
        let h = t_end / n as f64;
        let w = |t: f64| {
            let e = libm::exp(-1.5 * t);
            [e * libm::cos(t), e * libm::sin(t)]
        };
        let mut acc = [0.0; 2];
        for k in 0..=n {
            let t = k as f64 * h;
            let c = if k == 0 || k == n { 0.5 } else { 1.0 };
            let v = w(t);
            acc[0] += c * h * v[0];
            acc[1] += c * h * v[1];
        }
        let got = tr.eval(t_end).unwrap();
        assert!(linalg::max_abs_diff(&got, &acc) < 1e-6, "{got:?} vs {acc:?}");
    }

    fn undiscounted() -> ProblemSpec {
        // x' = 0 from 1 with g = x: I(T) = T
        validate(&ProblemDraft {
            name: "undiscounted".to_string(),
            state_dim: 1,
            control_dim: 1,
            f: vec!["0*x0".to_string()],
            g: "x0".to_string(),
            df_dx: None,
            dg_dx: None,
            control_set: vec![ControlDraft::Interval {
                lo: "0".into(),
                hi: "1".into(),
            }],
            candidate: vec![CandidateDraft::constant(0.0)],
            x0: Some(vec![1.0]),
            params: BTreeMap::new(),
        })
        .unwrap()
    }

    #[test]
    fn linear_growth_does_not_converge() {
        let s = undiscounted();
        let (_, tr) = solve(&s, 40.0);
        assert!((tr.last()[0] - 40.0).abs() < 1e-9);
        let est = estimate_limit(&tr, 1e-6, 0.25).unwrap();
        assert!(!est.converged);
        assert!((est.window_variation - 10.0).abs() < 1e-9);
        assert_eq!(est.onset, Some(40.0));
    }

    #[test]
    fn looser_tolerance_is_monotone() {
        let s = spec("ss-cubic");
        let (_, tr) = solve(&s, 40.0);
        let mut last_onset = f64::INFINITY;
        let mut was_converged = false;
        for tol in [1e-9, 1e-8, 1e-6, 1e-4, 1e-2] {
            let est = estimate_limit(&tr, tol, 0.25).unwrap();
            assert!(!was_converged || est.converged);
            let onset = est.onset.unwrap_or(f64::INFINITY);
            assert!(onset <= last_onset);
            last_onset = onset;
            was_converged = est.converged;
        }
    }

    #[test]
    fn bad_limit_parameters() {
        let s = spec("zero-gradient");
        let (_, tr) = solve(&s, 5.0);
        assert!(estimate_limit(&tr, 0.0, 0.25).is_err());
        assert!(estimate_limit(&tr, 1e-6, 1.0).is_err());
    }

    #[test]
    fn continuity_linear_problem_has_no_deviation() {
        let s = spec("decay-discount");
        let (_, base) = solve(&s, 40.0);
        let probe = probe_continuity(&s, &base, &[0.1, 0.01], 8, 42, &OdeOptions::default(), 1e-6).unwrap();
        for row in &probe.rows {
            // meshes differ between samples, so "zero" means interpolation noise
            assert!(row.deviation < 1e-7, "{row:?}");
            assert_eq!((row.samples, row.failures), (8, 0));
        }
        assert!(probe.decreasing);
    }

    #[test]
    fn continuity_ss_cubic_scales_with_radius() {
        let s = spec("ss-cubic");
        let (_, base) = solve(&s, 40.0);
        let probe = probe_continuity(&s, &base, &[0.1, 0.01], 8, 42, &OdeOptions::default(), 1e-6).unwrap();
        let (d0, d1) = (probe.rows[0].deviation, probe.rows[1].deviation);
        assert!(d1 < d0);
        let ratio = d0 / d1;
        assert!(ratio > 10.0 / 3.0 && ratio < 30.0, "{ratio}");
        assert!(probe.decreasing);
    }

    #[test]
    fn sphere_points_have_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in 1..5 {
            for _ in 0..20 {
                let p = unit_sphere_point(m, &mut rng);
                assert!((linalg::norm(&p) - 1.0).abs() < 1e-12);
            }
        }
    }
}
