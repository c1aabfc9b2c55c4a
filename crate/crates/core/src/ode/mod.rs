//! State, fundamental-matrix and companion integration.
//!
//! [`integrate_state`] solves `ẋ = f(t, x, u⁰(t))`. [`integrate_fundamental`]
//! then solves the variational equation `Ȧ = J(t) A`, `A(0) = I` with
//! `J = ∂f/∂x` along the state, together with the companion `Ḃ = -Jᵀ B`,
//! `B(0) = I`. Since `d/dt (BᵀA) = 0`, `Bᵀ` is the inverse of `A` at every
//! time and no matrix is ever inverted.

mod dense;
mod dopri;

use crate::linalg;
use crate::problem::ProblemSpec;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

pub use dense::Trajectory;
pub use dopri::integrate;

/// Default numerical horizon standing in for `t → ∞`.
pub const DEFAULT_HORIZON: f64 = 40.0;

/// `κ(t)` above which `Bᵀ` is flagged as an unreliable inverse.
pub const CONDITIONING_WARNING: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub enum OdeError {
    InvalidInput(&'static str),
    StepUnderflow { t: f64 },
    NonFinite { t: f64 },
    MaxSteps { t: f64 },
    OutOfDomain { t: f64, lo: f64, hi: f64 },
}

impl fmt::Display for OdeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidInput(what) => write!(f, "invalid integrator input: {what}"),
            Self::StepUnderflow { t } => write!(f, "step size underflow at t = {t}"),
            Self::NonFinite { t } => write!(f, "solution became non-finite at t = {t}"),
            Self::MaxSteps { t } => write!(f, "step budget exhausted at t = {t}"),
            Self::OutOfDomain { t, lo, hi } => {
                write!(f, "t = {t} is outside the trajectory domain [{lo}, {hi}]")
            }
        }
    }
}

/// Step control. `tol` is used as both the absolute and the relative
/// tolerance; `max_step` bounds the mesh spacing so that dense output and
/// per-interval quadrature stay accurate on slowly varying solutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_step: 0.05,
            max_steps: 2_000_000,
        }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<(), OdeError> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(OdeError::InvalidInput("tolerance must be positive"));
        }
        if !(self.max_step > 0.0) {
            return Err(OdeError::InvalidInput("maximum step must be positive"));
        }
        Ok(())
    }
}

/// Solves the state equation under the candidate control from `xi` on
/// `[0, t_max]`. Candidate breakpoints become mesh nodes.
pub fn integrate_state(
    spec: &ProblemSpec,
    xi: &[f64],
    t_max: f64,
    opts: &OdeOptions,
) -> Result<Trajectory, OdeError> {
    if xi.len() != spec.state_dim() {
        return Err(OdeError::InvalidInput("initial state has the wrong dimension"));
    }
    if !(t_max > 0.0) {
        return Err(OdeError::InvalidInput("horizon must be positive"));
    }
    let mut u = vec![0.0; spec.control_dim()];
    let breaks = spec.candidate().breakpoints();
    integrate(
        |anchor, t, x, dx| {
            spec.candidate_on(anchor, t, &mut u);
            spec.f_into(t, x, &u, dx);
        },
        0.0,
        xi,
        t_max,
        &breaks,
        opts,
    )
}

/// Fundamental matrix `A(t)` and its inverse-transpose companion `B(t)` on a
/// shared mesh, together with the state re-integrated on that mesh.
///
/// Matrices are stored row-major, `m²` components per node.
#[derive(Debug, Clone)]
pub struct FundamentalPair {
    state: Trajectory,
    a: Trajectory,
    b: Trajectory,
    kappa: Vec<f64>,
}

impl FundamentalPair {
    pub fn dim(&self) -> usize {
        self.state.dim()
    }

    pub fn mesh(&self) -> &[f64] {
        self.state.mesh()
    }

    /// The state on the shared mesh.
    pub fn state(&self) -> &Trajectory {
        &self.state
    }

    pub fn a(&self) -> &Trajectory {
        &self.a
    }

    pub fn b(&self) -> &Trajectory {
        &self.b
    }

    /// `κ(t_i) = ‖A(t_i)‖_F · ‖B(t_i)ᵀ‖_F` per node.
    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn max_kappa(&self) -> f64 {
        self.kappa.iter().copied().fold(0.0, f64::max)
    }

    /// Nodes where `κ` exceeds [`CONDITIONING_WARNING`] or is not finite.
    pub fn conditioning_warnings(&self) -> Vec<f64> {
        self.mesh()
            .iter()
            .zip(&self.kappa)
            .filter(|(_, k)| !(**k <= CONDITIONING_WARNING))
            .map(|(t, _)| *t)
            .collect()
    }

    /// `‖B(t_i)ᵀA(t_i) − I‖_F` per node.
    pub fn consistency_residuals(&self) -> Vec<f64> {
        let m = self.dim();
        let mut prod = vec![0.0; m * m];
        (0..self.state.nodes())
            .map(|i| {
                linalg::mat_tmul(m, self.b.node(i), self.a.node(i), &mut prod);
                for d in 0..m {
                    prod[d * m + d] -= 1.0;
                }
                linalg::frobenius(&prod)
            })
            .collect()
    }

    /// `A⁻¹(t) = B(t)ᵀ`, row-major.
    pub fn inverse_at(&self, t: f64) -> Result<Vec<f64>, OdeError> {
        let m = self.dim();
        let b = self.b.eval(t)?;
        let mut out = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                out[i * m + j] = b[j * m + i];
            }
        }
        Ok(out)
    }
}

/// Integrates `(x, A, B)` jointly from the start of `traj`, keeping every
/// node of `traj` as a mesh node. Step control covers all three blocks, so
/// the shared mesh may be finer than `traj`'s.
pub fn integrate_fundamental(
    spec: &ProblemSpec,
    traj: &Trajectory,
    opts: &OdeOptions,
) -> Result<FundamentalPair, OdeError> {
    let m = spec.state_dim();
    if traj.dim() != m {
        return Err(OdeError::InvalidInput("trajectory has the wrong dimension"));
    }
    let mm = m * m;
    let mut y0 = vec![0.0; m + 2 * mm];
    y0[..m].copy_from_slice(traj.node(0));
    linalg::identity_into(m, &mut y0[m..m + mm]);
    linalg::identity_into(m, &mut y0[m + mm..]);

    let mut u = vec![0.0; spec.control_dim()];
    let mut jac = vec![0.0; mm];
    let stops = &traj.mesh()[1..traj.nodes() - 1];
    let joint = integrate(
        |anchor, t, y, dy| {
            let (x, rest) = y.split_at(m);
            let (a, b) = rest.split_at(mm);
            spec.candidate_on(anchor, t, &mut u);
            spec.f_into(t, x, &u, &mut dy[..m]);
            spec.jacobian_into(t, x, &u, &mut jac);
            let (da, db) = dy[m..].split_at_mut(mm);
            linalg::mat_mul(m, &jac, a, da);
            // Ḃ = -Jᵀ B
            linalg::mat_tmul(m, &jac, b, db);
            db.iter_mut().for_each(|v| *v = -*v);
        },
        traj.t_start(),
        &y0,
        traj.t_end(),
        stops,
        opts,
    )?;

    let state = joint.project(0..m);
    let a = joint.project(m..m + mm);
    let b = joint.project(m + mm..m + 2 * mm);
    let kappa = (0..joint.nodes())
        .map(|i| linalg::frobenius(a.node(i)) * linalg::frobenius(b.node(i)))
        .collect();
    Ok(FundamentalPair { state, a, b, kappa })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::catalog_get;
    use alloc::collections::BTreeMap;

    fn spec(name: &str) -> ProblemSpec {
        catalog_get(name, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn zero_state_stays_zero() {
        let tr = integrate_state(&spec("decay-discount"), &[0.0], 40.0, &OdeOptions::default()).unwrap();
        assert!(tr.mesh().len() > 2);
        for i in 0..tr.nodes() {
            assert_eq!(tr.node(i), [0.0]);
        }
    }

    #[test]
    fn identity_at_start() {
        let s = spec("planar-rotation");
        let tr = integrate_state(&s, &[0.0, 0.0], 5.0, &OdeOptions::default()).unwrap();
        let pair = integrate_fundamental(&s, &tr, &OdeOptions::default()).unwrap();
        assert_eq!(pair.a().node(0), [1.0, 0.0, 0.0, 1.0]);
        assert_eq!(pair.b().node(0), [1.0, 0.0, 0.0, 1.0]);
        // the state mesh is kept
        for t in tr.mesh() {
            assert!(pair.mesh().contains(t));
        }
    }

    #[test]
    fn decay_matches_exponential() {
        let s = spec("decay-discount");
        let o = OdeOptions::default();
        let tr = integrate_state(&s, &[1.0], 40.0, &o).unwrap();
        for t in [0.37, 1.0, 5.0, 12.5] {
            assert!((tr.eval(t).unwrap()[0] - libm::exp(-t)).abs() < 1e-7, "{t}");
        }
        let pair = integrate_fundamental(&s, &tr, &o).unwrap();
        assert!((pair.a().eval(1.0).unwrap()[0] - libm::exp(-1.0)).abs() < 1e-7);
        assert!((pair.b().eval(1.0).unwrap()[0] - libm::exp(1.0)).abs() < 1e-6);
        assert!(pair.consistency_residuals().iter().all(|r| *r < 1e-6));
    }

    #[test]
    fn ss_cubic_state_is_linear() {
        let tr = integrate_state(&spec("ss-cubic"), &[1.0], 10.0, &OdeOptions::default()).unwrap();
        assert!((tr.eval(5.0).unwrap()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn planar_rotation_fundamental_matrix() {
        // J = [[-mu, 1], [-1, -mu]] so A(t) = e^{-mu t} R(t)
        let s = spec("planar-rotation");
        let o = OdeOptions::default();
        let tr = integrate_state(&s, &[0.3, -0.2], 10.0, &o).unwrap();
        let pair = integrate_fundamental(&s, &tr, &o).unwrap();
        for t in [core::f64::consts::PI, 2.2, 7.9] {
            let e = libm::exp(-0.5 * t);
            let (c, sn) = (libm::cos(t), libm::sin(t));
            let want = [e * c, e * sn, -e * sn, e * c];
            let got = pair.a().eval(t).unwrap();
            assert!(linalg::max_abs_diff(&got, &want) < 1e-7, "{t}: {got:?}");
            let inv = pair.inverse_at(t).unwrap();
            let mut prod = [0.0; 4];
            linalg::mat_mul(2, &inv, &got, &mut prod);
            assert!(linalg::max_abs_diff(&prod, &[1.0, 0.0, 0.0, 1.0]) < 1e-6);
        }
        assert!(pair.conditioning_warnings().is_empty());
    }

    #[test]
    fn integration_is_deterministic() {
        let s = spec("planar-rotation");
        let o = OdeOptions::default();
        let a = integrate_state(&s, &[1.0, 1.0], 20.0, &o).unwrap();
        let b = integrate_state(&s, &[1.0, 1.0], 20.0, &o).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = spec("decay-discount");
        let o = OdeOptions::default();
        assert!(integrate_state(&s, &[0.0, 1.0], 1.0, &o).is_err());
        assert!(integrate_state(&s, &[0.0], 0.0, &o).is_err());
        assert!(integrate_state(&s, &[0.0], 1.0, &OdeOptions::with_tol(0.0)).is_err());
    }

    #[test]
    fn blow_up_is_reported() {
        // x' = x^2 from 1 blows up at t = 1
        let o = OdeOptions::default();
        let err = integrate(|_, _, y, dy| dy[0] = y[0] * y[0], 0.0, &[1.0], 2.0, &[], &o).unwrap_err();
        match err {
            OdeError::StepUnderflow { t } | OdeError::NonFinite { t } | OdeError::MaxSteps { t } => {
                assert!(t > 0.9 && t <= 1.0 + 1e-6, "{t}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stops_become_nodes() {
        let o = OdeOptions::default();
        let tr = integrate(|_, _, _, dy| dy[0] = 1.0, 0.0, &[0.0], 3.0, &[0.5, 1.25, 7.0], &o).unwrap();
        assert!(tr.mesh().contains(&0.5));
        assert!(tr.mesh().contains(&1.25));
        assert_eq!(tr.t_end(), 3.0);
    }

    #[test]
    fn anchor_selects_segment_piece() {
        // y' = 0 before 1, 1 after; exact solution max(t - 1, 0)
        let o = OdeOptions::default();
        let tr = integrate(
            |anchor, _, _, dy| dy[0] = if anchor < 1.0 { 0.0 } else { 1.0 },
            0.0,
            &[0.0],
            2.0,
            &[1.0],
            &o,
        )
        .unwrap();
        assert_eq!(tr.eval(1.0).unwrap(), [0.0]);
        assert!((tr.eval(2.0).unwrap()[0] - 1.0).abs() < 1e-12);
        assert!(tr.eval(0.5).unwrap()[0].abs() < 1e-15);
    }
}
