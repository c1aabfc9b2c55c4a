//! The adjoint certificate `(λ⁰, ψ⁰)` given by the Cauchy formula
//!
//! ```text
//! λ⁰ = 1 / (1 + ‖Λ₀‖),   ψ⁰(t) = λ⁰ (Λ₀ − I₀(t)) A⁻¹(t)
//! ```
//!
//! and the finite-horizon adjoints with zero terminal value that approximate
//! it.

use crate::improper::{IntegralTrace, LimitEstimate};
use crate::linalg;
use crate::ode::{integrate, FundamentalPair, OdeError, OdeOptions, Trajectory};
use crate::problem::ProblemSpec;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum CauchyError {
    Ode(OdeError),
    NotCertified,
    InvalidInput(&'static str),
}

impl fmt::Display for CauchyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ode(e) => write!(f, "{e}"),
            Self::NotCertified => f.write_str("certificate is not available"),
            Self::InvalidInput(what) => f.write_str(what),
        }
    }
}

impl From<OdeError> for CauchyError {
    fn from(e: OdeError) -> Self {
        Self::Ode(e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CertificateStatus {
    Certified,
    NonCertified(String),
}

#[derive(Debug, Clone)]
pub struct AdjointCertificate {
    lambda0: f64,
    big_lambda: Vec<f64>,
    psi: Option<Trajectory>,
    status: CertificateStatus,
}

impl AdjointCertificate {
    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    /// `Λ₀`.
    pub fn limit(&self) -> &[f64] {
        &self.big_lambda
    }

    /// `ψ⁰` on the shared mesh, present only when certified.
    pub fn psi(&self) -> Option<&Trajectory> {
        self.psi.as_ref()
    }

    pub fn status(&self) -> &CertificateStatus {
        &self.status
    }

    pub fn is_certified(&self) -> bool {
        self.status == CertificateStatus::Certified
    }

    fn non_certified(lambda0: f64, big_lambda: Vec<f64>, reason: String) -> Self {
        Self {
            lambda0,
            big_lambda,
            psi: None,
            status: CertificateStatus::NonCertified(reason),
        }
    }
}

/// Builds `(λ⁰, ψ⁰)` from a converged integral.
///
/// `ψ⁰` is assembled node by node as `λ⁰ R(t_i) B(t_i)ᵀ` with
/// `R = Λ₀ − I₀` summed from the far end, and gets Hermite slopes from the
/// product rule `ψ̇ = λ⁰ (−İ Bᵀ + R Ḃᵀ)`.
pub fn build_certificate(
    trace: &IntegralTrace,
    limit: &LimitEstimate,
    fund: &FundamentalPair,
) -> AdjointCertificate {
    let m = fund.dim();
    let big_lambda = limit.lambda.clone();
    let lambda0 = 1.0 / (1.0 + linalg::norm(&big_lambda));
    if !limit.converged {
        return AdjointCertificate::non_certified(
            lambda0,
            big_lambda,
            format!(
                "improper integral did not converge: tail variation {:e} exceeds {:e}",
                limit.window_variation, limit.tail_tol
            ),
        );
    }
    if fund.kappa().iter().any(|k| !k.is_finite()) || !lambda0.is_finite() {
        return AdjointCertificate::non_certified(
            lambda0,
            big_lambda,
            "ill-conditioned fundamental matrix".into(),
        );
    }
    if trace.mesh() != fund.mesh() {
        return AdjointCertificate::non_certified(
            lambda0,
            big_lambda,
            "integral and fundamental matrix are on different meshes".into(),
        );
    }

    let mesh = fund.mesh();
    let n = mesh.len();
    let tails = trace.tails();
    let (itr, b) = (trace.trajectory(), fund.b());
    let mut values = vec![0.0; n * m];
    for i in 0..n {
        linalg::row_mul_transpose(m, &tails[i * m..(i + 1) * m], b.node(i), &mut values[i * m..(i + 1) * m]);
    }
    values.iter_mut().for_each(|v| *v *= lambda0);

    let mut start = vec![0.0; (n - 1) * m];
    let mut end = vec![0.0; (n - 1) * m];
    let mut p = vec![0.0; m];
    let mut q = vec![0.0; m];
    let mut slope = |node: usize, di: &[f64], db: &[f64], out: &mut [f64]| {
        linalg::row_mul_transpose(m, di, b.node(node), &mut p);
        linalg::row_mul_transpose(m, &tails[node * m..(node + 1) * m], db, &mut q);
        for d in 0..m {
            out[d] = lambda0 * (q[d] - p[d]);
        }
    };
    for i in 0..n - 1 {
        slope(i, itr.start_slope(i), b.start_slope(i), &mut start[i * m..(i + 1) * m]);
        slope(i + 1, itr.end_slope(i), b.end_slope(i), &mut end[i * m..(i + 1) * m]);
    }
    match Trajectory::new(m, mesh.to_vec(), values, start, end, fund.state().tolerance()) {
        Ok(psi) if psi.mesh().len() == n && (0..n).all(|i| psi.node(i).iter().all(|v| v.is_finite())) => {
            AdjointCertificate {
                lambda0,
                big_lambda,
                psi: Some(psi),
                status: CertificateStatus::Certified,
            }
        }
        _ => AdjointCertificate::non_certified(
            lambda0,
            big_lambda,
            "ill-conditioned fundamental matrix".into(),
        ),
    }
}

/// Right-hand side `ψ̇ = −ψ ∂f/∂x − λ ∂g/∂x` along `state`.
struct AdjointRhs<'a> {
    spec: &'a ProblemSpec,
    state: &'a Trajectory,
    lambda: f64,
    x: Vec<f64>,
    u: Vec<f64>,
    jac: Vec<f64>,
    dg: Vec<f64>,
}

impl<'a> AdjointRhs<'a> {
    fn new(spec: &'a ProblemSpec, state: &'a Trajectory, lambda: f64) -> Self {
        let m = spec.state_dim();
        Self {
            spec,
            state,
            lambda,
            x: vec![0.0; m],
            u: vec![0.0; spec.control_dim()],
            jac: vec![0.0; m * m],
            dg: vec![0.0; m],
        }
    }

    fn eval(&mut self, anchor: f64, t: f64, psi: &[f64], out: &mut [f64]) {
        if self.state.eval_into(t, &mut self.x).is_err() {
            out.fill(f64::NAN);
            return;
        }
        self.spec.candidate_on(anchor, t, &mut self.u);
        self.spec.jacobian_into(t, &self.x, &self.u, &mut self.jac);
        self.spec.cost_gradient_into(t, &self.x, &self.u, &mut self.dg);
        linalg::row_mul(psi.len(), psi, &self.jac, out);
        for (o, g) in out.iter_mut().zip(&self.dg) {
            *o = -*o - self.lambda * g;
        }
    }
}

/// Solves the adjoint equation backwards from `ψ(τ) = 0` along `state`,
/// returning `ψ^τ` on `[0, τ]`.
pub fn truncated_adjoint(
    spec: &ProblemSpec,
    state: &Trajectory,
    tau: f64,
    lambda: f64,
    opts: &OdeOptions,
) -> Result<Trajectory, CauchyError> {
    if !(tau > 0.0 && tau <= state.t_end()) {
        return Err(CauchyError::InvalidInput("truncation time must lie in (0, T_max]"));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(CauchyError::InvalidInput("λ must lie in [0, 1]"));
    }
    let m = spec.state_dim();
    let stops: Vec<f64> = spec
        .candidate()
        .breakpoints()
        .iter()
        .filter(|b| **b > 0.0 && **b < tau)
        .map(|b| tau - b)
        .collect();
    let mut rhs = AdjointRhs::new(spec, state, lambda);
    // s = τ − t, dψ/ds = −ψ̇
    let reversed = integrate(
        |anchor, s, psi, out| {
            rhs.eval(tau - anchor, tau - s, psi, out);
            out.iter_mut().for_each(|v| *v = -*v);
        },
        0.0,
        &vec![0.0; m],
        tau,
        &stops,
        opts,
    )?;
    Ok(reversed.reflect(tau))
}

/// Solves the adjoint equation forwards from `ψ(0) = psi0` on
/// `[0, t_end]`.
pub fn solve_adjoint_forward(
    spec: &ProblemSpec,
    state: &Trajectory,
    psi0: &[f64],
    lambda: f64,
    t_end: f64,
    opts: &OdeOptions,
) -> Result<Trajectory, CauchyError> {
    if psi0.len() != spec.state_dim() {
        return Err(CauchyError::InvalidInput("initial costate has the wrong dimension"));
    }
    if !(t_end > 0.0 && t_end <= state.t_end()) {
        return Err(CauchyError::InvalidInput("end time must lie in (0, T_max]"));
    }
    let mut rhs = AdjointRhs::new(spec, state, lambda);
    Ok(integrate(
        |anchor, t, psi, out| rhs.eval(anchor, t, psi, out),
        0.0,
        psi0,
        t_end,
        &spec.candidate().breakpoints(),
        opts,
    )?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationRow {
    pub tau: f64,
    /// `sup_{t ∈ [0, τ/2]} ‖ψ^τ(t) − ψ⁰(t)‖` over the certificate mesh.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationTable {
    pub rows: Vec<TruncationRow>,
    /// Differences below this are not resolved by the integration.
    pub resolution: f64,
    pub non_increasing: bool,
    pub final_within: bool,
    pub pass: bool,
}

/// Compares zero-terminal adjoints `ψ^τ` (with `λ = λ⁰`) against `ψ⁰` for
/// each `τ` in `schedule`. Passes iff deviations never increase and the last
/// one is at most `10 · tail_tol`.
///
/// Once `τ` approaches `T_max` the true deviation drops below what a
/// tolerance-`tol` computation can see, so increases smaller than
/// `tol · (1 + sup‖ψ⁰‖)` are not counted.
pub fn compare_truncation(
    cert: &AdjointCertificate,
    spec: &ProblemSpec,
    fund: &FundamentalPair,
    schedule: &[f64],
    tail_tol: f64,
    opts: &OdeOptions,
) -> Result<TruncationTable, CauchyError> {
    let psi0 = cert.psi().ok_or(CauchyError::NotCertified)?;
    if schedule.is_empty() || schedule.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(CauchyError::InvalidInput("truncation schedule must be increasing"));
    }
    let m = spec.state_dim();
    let mut at = vec![0.0; m];
    let mut diff = vec![0.0; m];
    let mut rows = Vec::with_capacity(schedule.len());
    for &tau in schedule {
        let trunc = truncated_adjoint(spec, fund.state(), tau, cert.lambda0(), opts)?;
        let mut sup: f64 = 0.0;
        for (i, &t) in psi0.mesh().iter().enumerate() {
            if t > 0.5 * tau {
                break;
            }
            trunc.eval_into(t, &mut at)?;
            for ((d, a), b) in diff.iter_mut().zip(&at).zip(psi0.node(i)) {
                *d = a - b;
            }
            sup = sup.max(linalg::norm(&diff));
        }
        rows.push(TruncationRow { tau, deviation: sup });
    }
    let scale = (0..psi0.nodes())
        .map(|i| linalg::norm(psi0.node(i)))
        .fold(0.0, f64::max);
    let resolution = opts.tol * (1.0 + scale);
    let non_increasing = rows
        .windows(2)
        .all(|w| w[1].deviation <= w[0].deviation + resolution);
    let final_within = rows[rows.len() - 1].deviation <= 10.0 * tail_tol;
    Ok(TruncationTable {
        rows,
        resolution,
        non_increasing,
        final_within,
        pass: non_increasing && final_within,
    })
}
