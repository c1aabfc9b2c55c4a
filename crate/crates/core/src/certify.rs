//! Maximum-principle relations and transversality conditions evaluated as
//! numerical residuals, and the verdict built from them.
//!
//! Only five checks gate the verdict: normalization, constancy, adjoint-ode,
//! max-condition and weighted-transversality. Everything else is reported
//! for information.

use crate::cauchy::{AdjointCertificate, CertificateStatus, TruncationTable};
use crate::improper::{ContinuityProbe, IntegralTrace};
use crate::linalg;
use crate::ode::FundamentalPair;
use crate::problem::ProblemSpec;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

pub const NORMALIZATION_TOL: f64 = 1e-9;
pub const CONSTANCY_TOL: f64 = 1e-6;
pub const ADJOINT_ODE_TOL: f64 = 1e-4;
pub const FUNDAMENTAL_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_TOL: f64 = 1e-6;
pub const DEFAULT_HAM_TOL: f64 = 1e-4;
pub const DEFAULT_U_RESOLUTION: usize = 65;

pub const GATING: [&str; 5] = [
    "normalization",
    "constancy",
    "adjoint-ode",
    "max-condition",
    "weighted-transversality",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pass => "PASS",
            Self::Fail => "FAIL",
            Self::NotApplicable => "NOT-APPLICABLE",
        }
    }

    fn from_bool(ok: bool) -> Self {
        if ok {
            Self::Pass
        } else {
            Self::Fail
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a check's scalar summary is obtained from its values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduce {
    Sup,
    Min,
    Last,
}

impl Reduce {
    pub fn apply(self, values: &[f64]) -> f64 {
        match self {
            Self::Sup => values.iter().copied().fold(0.0, f64::max),
            Self::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
            Self::Last => values.last().copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    /// Where each value was taken (time, radius or truncation horizon).
    pub at: Vec<f64>,
    pub values: Vec<f64>,
    pub reduce: Reduce,
    pub summary: f64,
    pub tol: f64,
    pub status: Status,
    pub gating: bool,
    pub note: Option<String>,
}

impl Check {
    fn new(name: &'static str, at: Vec<f64>, values: Vec<f64>, reduce: Reduce, tol: f64) -> Self {
        let summary = reduce.apply(&values);
        Self {
            name,
            at,
            values,
            reduce,
            summary,
            tol,
            status: Status::from_bool(summary <= tol),
            gating: GATING.contains(&name),
            note: None,
        }
    }

    fn not_applicable(name: &'static str, tol: f64, reason: &str) -> Self {
        Self {
            name,
            at: Vec::new(),
            values: Vec::new(),
            reduce: Reduce::Sup,
            summary: f64::NAN,
            tol,
            status: Status::NotApplicable,
            gating: GATING.contains(&name),
            note: Some(reason.into()),
        }
    }

    fn with_note(mut self, note: String) -> Self {
        self.note = Some(note);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    CertifiedExtremal,
    Fail(Vec<&'static str>),
    NonCertified(String),
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::CertifiedExtremal => "CERTIFIED-EXTREMAL",
            Self::Fail(_) => "FAIL",
            Self::NonCertified(_) => "NON-CERTIFIED",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub checks: Vec<Check>,
    pub verdict: Verdict,
}

impl ResidualReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Tolerances and sampling used by the checks.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckSettings {
    pub tail_tol: f64,
    pub window: f64,
    pub max_tol: f64,
    pub ham_tol: f64,
    pub u_resolution: usize,
    pub schedule: Vec<f64>,
}

impl Default for CheckSettings {
    fn default() -> Self {
        Self {
            tail_tol: crate::improper::DEFAULT_TAIL_TOL,
            window: crate::improper::DEFAULT_WINDOW,
            max_tol: DEFAULT_MAX_TOL,
            ham_tol: DEFAULT_HAM_TOL,
            u_resolution: DEFAULT_U_RESOLUTION,
            schedule: vec![5.0, 10.0, 20.0, 40.0],
        }
    }
}

/// Everything the checks read, on the shared mesh.
pub struct Evidence<'a> {
    pub spec: &'a ProblemSpec,
    pub fund: &'a FundamentalPair,
    pub trace: &'a IntegralTrace,
    pub cert: &'a AdjointCertificate,
}

impl Evidence<'_> {
    fn tail_start(&self, window: f64) -> f64 {
        let mesh = self.fund.mesh();
        let (t0, t1) = (mesh[0], mesh[mesh.len() - 1]);
        t0 + (1.0 - window) * (t1 - t0)
    }

    /// `‖ψ⁰(t_i) A(t_i)‖` per node.
    pub fn weighted_norms(&self) -> Option<Vec<f64>> {
        let psi = self.cert.psi()?;
        let m = self.fund.dim();
        let mut prod = vec![0.0; m];
        Some(
            (0..psi.nodes())
                .map(|i| {
                    linalg::row_mul(m, psi.node(i), self.fund.a().node(i), &mut prod);
                    linalg::norm(&prod)
                })
                .collect(),
        )
    }

    /// `H(x⁰(t_i), t_i, u⁰(t_i), λ⁰, ψ⁰(t_i))` per node.
    pub fn hamiltonian_values(&self) -> Option<Vec<f64>> {
        let psi = self.cert.psi()?;
        let mut u = vec![0.0; self.spec.control_dim()];
        Some(
            self.fund
                .mesh()
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    self.spec.candidate_into(t, &mut u);
                    self.spec.hamiltonian_unchecked(
                        t,
                        self.fund.state().node(i),
                        &u,
                        self.cert.lambda0(),
                        psi.node(i),
                    )
                })
                .collect(),
        )
    }
}

/// `|‖ψ⁰(0)‖ + λ⁰ − 1|`.
pub fn normalization(ev: &Evidence) -> Check {
    const NAME: &str = "normalization";
    let Some(psi) = ev.cert.psi() else {
        return Check::not_applicable(NAME, NORMALIZATION_TOL, "no certificate");
    };
    let value = (linalg::norm(psi.node(0)) + ev.cert.lambda0() - 1.0).abs();
    Check::new(NAME, vec![0.0], vec![value], Reduce::Sup, NORMALIZATION_TOL)
}

/// `‖ψ⁰(t)A(t) + λ⁰I₀(t) − λ⁰Λ₀‖` per node.
pub fn constancy(ev: &Evidence) -> Check {
    const NAME: &str = "constancy";
    let Some(psi) = ev.cert.psi() else {
        return Check::not_applicable(NAME, CONSTANCY_TOL, "no certificate");
    };
    let m = ev.fund.dim();
    let lambda0 = ev.cert.lambda0();
    let big = ev.cert.limit();
    let mut prod = vec![0.0; m];
    let values = (0..psi.nodes())
        .map(|i| {
            linalg::row_mul(m, psi.node(i), ev.fund.a().node(i), &mut prod);
            for d in 0..m {
                prod[d] += lambda0 * (ev.trace.at_node(i)[d] - big[d]);
            }
            linalg::norm(&prod)
        })
        .collect();
    Check::new(NAME, ev.fund.mesh().to_vec(), values, Reduce::Sup, CONSTANCY_TOL)
}

/// `‖ψ̇⁰ + ψ⁰ ∂f/∂x + λ⁰ ∂g/∂x‖` at mesh midpoints, with `ψ̇⁰` taken from
/// the dense output.
pub fn adjoint_ode(ev: &Evidence) -> Check {
    const NAME: &str = "adjoint-ode";
    let Some(psi) = ev.cert.psi() else {
        return Check::not_applicable(NAME, ADJOINT_ODE_TOL, "no certificate");
    };
    let (m, spec) = (ev.fund.dim(), ev.spec);
    let mesh = ev.fund.mesh();
    let mut x = vec![0.0; m];
    let mut p = vec![0.0; m];
    let mut dp = vec![0.0; m];
    let mut u = vec![0.0; spec.control_dim()];
    let mut jac = vec![0.0; m * m];
    let mut dg = vec![0.0; m];
    let mut res = vec![0.0; m];
    let mut at = Vec::with_capacity(mesh.len() - 1);
    let mut values = Vec::with_capacity(mesh.len() - 1);
    for i in 0..mesh.len() - 1 {
        let mid = 0.5 * (mesh[i] + mesh[i + 1]);
        ev.fund.state().eval_in(i, mid, &mut x);
        psi.eval_in(i, mid, &mut p);
        psi.derivative_in(i, mid, &mut dp);
        spec.candidate_on(mid, mid, &mut u);
        spec.jacobian_into(mid, &x, &u, &mut jac);
        spec.cost_gradient_into(mid, &x, &u, &mut dg);
        linalg::row_mul(m, &p, &jac, &mut res);
        for d in 0..m {
            res[d] += dp[d] + ev.cert.lambda0() * dg[d];
        }
        at.push(mid);
        values.push(linalg::norm(&res));
    }
    Check::new(NAME, at, values, Reduce::Sup, ADJOINT_ODE_TOL)
}

/// Calls `visit` with every point of the sampled product `U(t)`.
fn for_each_sample(spec: &ProblemSpec, t: f64, resolution: usize, mut visit: impl FnMut(&[f64])) {
    let k = spec.control_dim();
    let axes: Vec<Vec<f64>> = (0..k)
        .map(|j| spec.control_set().samples(j, t, resolution))
        .collect();
    if axes.iter().any(|a| a.is_empty()) {
        return;
    }
    let mut idx = vec![0usize; k];
    let mut p: Vec<f64> = axes.iter().map(|a| a[0]).collect();
    loop {
        visit(&p);
        let mut j = 0;
        loop {
            if j == k {
                return;
            }
            idx[j] += 1;
            if idx[j] < axes[j].len() {
                p[j] = axes[j][idx[j]];
                break;
            }
            idx[j] = 0;
            p[j] = axes[j][0];
            j += 1;
        }
    }
}

/// Sampled maximum-condition gap at each node `t_i`:
/// `r(t) = max_{p ∈ U_h(t) ∪ {u⁰(t)}} H(p) − H(u⁰(t))`, so `r ≥ 0`.
///
/// Interval components are sampled at `resolution` points including both
/// ends, which is exact whenever `H` is affine in that component.
pub fn max_condition_values(ev: &Evidence, resolution: usize) -> Option<Vec<f64>> {
    let psi = ev.cert.psi()?;
    let spec = ev.spec;
    let lambda0 = ev.cert.lambda0();
    let mut u = vec![0.0; spec.control_dim()];
    Some(
        ev.fund
            .mesh()
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let x = ev.fund.state().node(i);
                let p = psi.node(i);
                spec.candidate_into(t, &mut u);
                let h0 = spec.hamiltonian_unchecked(t, x, &u, lambda0, p);
                let mut best = h0;
                for_each_sample(spec, t, resolution, |q| {
                    let h = spec.hamiltonian_unchecked(t, x, q, lambda0, p);
                    if h > best {
                        best = h;
                    }
                });
                best - h0
            })
            .collect(),
    )
}

pub fn max_condition(ev: &Evidence, settings: &CheckSettings) -> Check {
    const NAME: &str = "max-condition";
    match max_condition_values(ev, settings.u_resolution) {
        None => Check::not_applicable(NAME, settings.max_tol, "no certificate"),
        Some(values) => Check::new(NAME, ev.fund.mesh().to_vec(), values, Reduce::Sup, settings.max_tol),
    }
}

fn tail_check(ev: &Evidence, name: &'static str, values: Option<Vec<f64>>, window: f64, tol: f64) -> Check {
    let Some(values) = values else {
        return Check::not_applicable(name, tol, "no certificate");
    };
    let start = ev.tail_start(window);
    let (at, values): (Vec<f64>, Vec<f64>) = ev
        .fund
        .mesh()
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= start)
        .map(|(t, v)| (*t, v))
        .unzip();
    Check::new(name, at, values, Reduce::Sup, tol)
}

/// Tail sup of `‖ψ⁰(t)A(t)‖` over the trailing window.
pub fn weighted_transversality(ev: &Evidence, settings: &CheckSettings) -> Check {
    tail_check(
        ev,
        "weighted-transversality",
        ev.weighted_norms(),
        settings.window,
        10.0 * settings.tail_tol,
    )
}

/// Tail sup of `|H(x⁰, t, u⁰, λ⁰, ψ⁰)|` over the trailing window.
pub fn hamiltonian_limit(ev: &Evidence, settings: &CheckSettings) -> Check {
    let values = ev
        .hamiltonian_values()
        .map(|h| h.into_iter().map(f64::abs).collect());
    tail_check(ev, "hamiltonian-limit", values, settings.window, settings.ham_tol)
}

fn at_schedule(ev: &Evidence, name: &'static str, values: Option<Vec<f64>>, schedule: &[f64], tol: f64, note: &str) -> Check {
    let Some(values) = values else {
        return Check::not_applicable(name, tol, "no certificate");
    };
    let mesh = ev.fund.mesh();
    let (at, picked): (Vec<f64>, Vec<f64>) = schedule
        .iter()
        .filter_map(|&tau| {
            // last node not after τ
            let i = mesh.partition_point(|t| *t <= tau).checked_sub(1)?;
            Some((mesh[i], values[i]))
        })
        .unzip();
    Check::new(name, at, picked, Reduce::Min, tol).with_note(note.into())
}

/// `‖ψ⁰(τ)‖` along the schedule. Informational: ψ need not vanish when the
/// fundamental matrix grows.
pub fn partial_limit(ev: &Evidence, settings: &CheckSettings) -> Check {
    let norms = ev.cert.psi().map(|psi| (0..psi.nodes()).map(|i| linalg::norm(psi.node(i))).collect());
    at_schedule(
        ev,
        "partlim",
        norms,
        &settings.schedule,
        10.0 * settings.tail_tol,
        "min over schedule of the plain norm; informational",
    )
}

/// `‖ψ⁰(τ)A(τ)‖` along the schedule.
pub fn partial_limit_weighted(ev: &Evidence, settings: &CheckSettings) -> Check {
    at_schedule(
        ev,
        "partlim-weighted",
        ev.weighted_norms(),
        &settings.schedule,
        10.0 * settings.tail_tol,
        "min over schedule of the weighted norm",
    )
}

/// `‖B(t)ᵀA(t) − I‖_F / κ(t)` per node.
pub fn fundamental_consistency(fund: &FundamentalPair) -> Check {
    let values = fund
        .consistency_residuals()
        .into_iter()
        .zip(fund.kappa())
        .map(|(r, k)| r / k)
        .collect();
    let mut check = Check::new(
        "fundamental-consistency",
        fund.mesh().to_vec(),
        values,
        Reduce::Sup,
        FUNDAMENTAL_TOL,
    );
    let warnings = fund.conditioning_warnings();
    if let Some(first) = warnings.first() {
        check.note = Some(format!(
            "conditioning warning at {} nodes from t = {first}",
            warnings.len()
        ));
    }
    check
}

pub fn truncation_check(table: Option<&TruncationTable>, tail_tol: f64) -> Check {
    const NAME: &str = "truncation";
    let tol = 10.0 * tail_tol;
    let Some(table) = table else {
        return Check::not_applicable(NAME, tol, "no certificate");
    };
    let mut check = Check::new(
        NAME,
        table.rows.iter().map(|r| r.tau).collect(),
        table.rows.iter().map(|r| r.deviation).collect(),
        Reduce::Last,
        tol,
    );
    check.status = Status::from_bool(table.pass);
    check.with_note(format!(
        "deviations non-increasing within {:e}: {}",
        table.resolution, table.non_increasing
    ))
}

pub fn continuity_check(probe: Option<&ContinuityProbe>, floor: f64) -> Check {
    const NAME: &str = "continuity";
    let Some(probe) = probe else {
        return Check::not_applicable(NAME, floor, "probe disabled");
    };
    let mut check = Check::new(
        NAME,
        probe.rows.iter().map(|r| r.radius).collect(),
        probe.rows.iter().map(|r| r.deviation).collect(),
        Reduce::Last,
        f64::INFINITY,
    );
    check.tol = floor;
    check.status = Status::from_bool(probe.decreasing);
    let failures: usize = probe.rows.iter().map(|r| r.failures).sum();
    check.with_note(format!(
        "empirical surrogate: deviations must shrink with the radius; {failures} samples failed"
    ))
}

/// All checks, in report order.
pub fn run_checks(
    ev: &Evidence,
    settings: &CheckSettings,
    truncation: Option<&TruncationTable>,
    continuity: Option<&ContinuityProbe>,
) -> Vec<Check> {
    vec![
        normalization(ev),
        constancy(ev),
        adjoint_ode(ev),
        max_condition(ev, settings),
        weighted_transversality(ev, settings),
        partial_limit(ev, settings),
        partial_limit_weighted(ev, settings),
        hamiltonian_limit(ev, settings),
        fundamental_consistency(ev.fund),
        truncation_check(truncation, settings.tail_tol),
        continuity_check(continuity, settings.tail_tol),
    ]
}

/// Folds checks into a verdict. A non-certified certificate wins over any
/// check result.
pub fn assemble(cert_status: &CertificateStatus, checks: Vec<Check>) -> ResidualReport {
    let verdict = match cert_status {
        CertificateStatus::NonCertified(reason) => Verdict::NonCertified(reason.clone()),
        CertificateStatus::Certified => {
            let failed: Vec<&'static str> = checks
                .iter()
                .filter(|c| c.gating && c.status != Status::Pass)
                .map(|c| c.name)
                .collect();
            if failed.is_empty() {
                Verdict::CertifiedExtremal
            } else {
                Verdict::Fail(failed)
            }
        }
    };
    ResidualReport { checks, verdict }
}
