//! End-to-end run: state → fundamental pair → integral → limit →
//! certificate → checks → truncation comparison → continuity probe.

use crate::cauchy::{build_certificate, compare_truncation, AdjointCertificate, TruncationTable};
use crate::certify::{self, assemble, run_checks, CheckSettings, Evidence, ResidualReport};
use crate::improper::{self, estimate_limit, probe_continuity, ContinuityProbe, IntegralTrace, LimitEstimate};
use crate::linalg;
use crate::ode::{FundamentalPair, OdeOptions, DEFAULT_HORIZON};
use crate::problem::ProblemSpec;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct Numerics {
    pub t_max: f64,
    pub tol: f64,
    pub max_step: f64,
    pub tail_tol: f64,
    pub window: f64,
    pub max_tol: f64,
    pub ham_tol: f64,
    pub u_resolution: usize,
    pub schedule: Vec<f64>,
    pub radii: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub continuity: bool,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            t_max: DEFAULT_HORIZON,
            tol: 1e-8,
            max_step: OdeOptions::default().max_step,
            tail_tol: improper::DEFAULT_TAIL_TOL,
            window: improper::DEFAULT_WINDOW,
            max_tol: certify::DEFAULT_MAX_TOL,
            ham_tol: certify::DEFAULT_HAM_TOL,
            u_resolution: certify::DEFAULT_U_RESOLUTION,
            schedule: vec![5.0, 10.0, 20.0, 40.0],
            radii: vec![0.1, 0.01],
            samples: 8,
            seed: 42,
            continuity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PipelineError {
    /// Settings that can never produce a run.
    InvalidNumerics(String),
    /// The problem could not be integrated far enough to say anything.
    Numerical(String),
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidNumerics(why) => write!(f, "invalid numerics: {why}"),
            Self::Numerical(why) => write!(f, "numerical failure: {why}"),
        }
    }
}

impl Numerics {
    pub fn ode_options(&self) -> OdeOptions {
        OdeOptions {
            tol: self.tol,
            max_step: self.max_step,
            ..OdeOptions::default()
        }
    }

    pub fn check_settings(&self) -> CheckSettings {
        CheckSettings {
            tail_tol: self.tail_tol,
            window: self.window,
            max_tol: self.max_tol,
            ham_tol: self.ham_tol,
            u_resolution: self.u_resolution,
            schedule: self.schedule.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |why: &str| Err(PipelineError::InvalidNumerics(why.into()));
        let positive = [
            ("t_max", self.t_max),
            ("tol", self.tol),
            ("max_step", self.max_step),
            ("tail_tol", self.tail_tol),
            ("max_tol", self.max_tol),
            ("ham_tol", self.ham_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PipelineError::InvalidNumerics(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.window > 0.0 && self.window < 1.0) {
            return bad("window must lie in (0, 1)");
        }
        if self.u_resolution < 2 {
            return bad("u_resolution must be at least 2");
        }
        if self.schedule.is_empty() || self.schedule.windows(2).any(|w| !(w[0] < w[1])) || !(self.schedule[0] > 0.0) {
            return bad("truncation schedule must be positive and increasing");
        }
        if self.schedule[self.schedule.len() - 1] > self.t_max {
            return bad("t_max must be at least the largest truncation time");
        }
        if self.radii.iter().any(|r| !(*r > 0.0)) || self.radii.windows(2).any(|w| !(w[0] > w[1])) {
            return bad("continuity radii must be positive and decreasing");
        }
        Ok(())
    }
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct Run {
    pub numerics: Numerics,
    pub fund: FundamentalPair,
    pub trace: IntegralTrace,
    pub limit: LimitEstimate,
    pub cert: AdjointCertificate,
    pub truncation: Option<TruncationTable>,
    pub continuity: Option<ContinuityProbe>,
    pub report: ResidualReport,
}

/// One row of the per-node trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub psi: Vec<f64>,
    pub psi_a_norm: f64,
    pub integral: Vec<f64>,
    pub hamiltonian: f64,
    pub max_residual: f64,
}

impl Run {
    /// Per-node rows on the shared mesh. `ψ`-dependent columns are NaN
    /// without a certificate.
    pub fn trace_rows(&self, spec: &ProblemSpec) -> Vec<TraceRow> {
        let m = spec.state_dim();
        let ev = Evidence {
            spec,
            fund: &self.fund,
            trace: &self.trace,
            cert: &self.cert,
        };
        let n = self.fund.mesh().len();
        let weighted = ev.weighted_norms().unwrap_or_else(|| vec![f64::NAN; n]);
        let ham = ev.hamiltonian_values().unwrap_or_else(|| vec![f64::NAN; n]);
        let resid = certify::max_condition_values(&ev, self.numerics.u_resolution).unwrap_or_else(|| vec![f64::NAN; n]);
        (0..n)
            .map(|i| TraceRow {
                t: self.fund.mesh()[i],
                x: self.fund.state().node(i).to_vec(),
                psi: match self.cert.psi() {
                    Some(p) => p.node(i).to_vec(),
                    None => vec![f64::NAN; m],
                },
                psi_a_norm: weighted[i],
                integral: self.trace.at_node(i).to_vec(),
                hamiltonian: ham[i],
                max_residual: resid[i],
            })
            .collect()
    }

    pub fn lambda_norm(&self) -> f64 {
        linalg::norm(self.cert.limit())
    }
}

/// Runs the whole pipeline from the problem's initial state.
pub fn run(spec: &ProblemSpec, numerics: &Numerics) -> Result<Run, PipelineError> {
    numerics.validate()?;
    let opts = numerics.ode_options();
    let numerical = |e: &dyn fmt::Display| PipelineError::Numerical(format!("{e}"));
    let (fund, trace) =
        improper::solve_from(spec, spec.initial_state(), numerics.t_max, &opts).map_err(|e| numerical(&e))?;
    let limit = estimate_limit(&trace, numerics.tail_tol, numerics.window).map_err(|e| numerical(&e))?;
    let cert = build_certificate(&trace, &limit, &fund);
    let truncation = if cert.is_certified() {
        Some(
            compare_truncation(&cert, spec, &fund, &numerics.schedule, numerics.tail_tol, &opts)
                .map_err(|e| numerical(&e))?,
        )
    } else {
        None
    };
    let continuity = if numerics.continuity && !numerics.radii.is_empty() {
        Some(
            probe_continuity(
                spec,
                &trace,
                &numerics.radii,
                numerics.samples,
                numerics.seed,
                &opts,
                numerics.tail_tol,
            )
            .map_err(|e| numerical(&e))?,
        )
    } else {
        None
    };
    let ev = Evidence {
        spec,
        fund: &fund,
        trace: &trace,
        cert: &cert,
    };
    let checks = run_checks(&ev, &numerics.check_settings(), truncation.as_ref(), continuity.as_ref());
    let report = assemble(cert.status(), checks);
    Ok(Run {
        numerics: numerics.clone(),
        fund,
        trace,
        limit,
        cert,
        truncation,
        continuity,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::Verdict;
    use crate::problem::catalog_get;
    use alloc::collections::BTreeMap;
    use alloc::string::ToString;

    fn spec(name: &str, overrides: &[(&str, f64)]) -> ProblemSpec {
        let o: BTreeMap<String, f64> = overrides.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        catalog_get(name, &o).unwrap()
    }

    #[test]
    fn verdicts_across_catalog() {
        let n = Numerics::default();
        let cases: [(&str, &[(&str, f64)], &str); 6] = [
            ("zero-gradient", &[], "FAIL"),
            ("zero-gradient", &[("candidate.u0", 1.0)], "CERTIFIED-EXTREMAL"),
            ("decay-discount", &[("candidate.u0", 1.0)], "CERTIFIED-EXTREMAL"),
            // the switching function e^{-t} − ψ⁰ turns positive once x
            // nears 0, so u = c stops being the argmax
            ("ss-cubic", &[], "FAIL"),
            ("lq-riccati", &[], "CERTIFIED-EXTREMAL"),
            ("planar-rotation", &[("candidate.u0", 1.0)], "CERTIFIED-EXTREMAL"),
        ];
        for (name, o, want) in cases {
            let run = run(&spec(name, o), &n).unwrap();
            assert_eq!(run.report.verdict.as_str(), want, "{name} {o:?}: {:?}", run.report.verdict);
        }
    }

    #[test]
    fn rejects_bad_numerics() {
        let s = spec("zero-gradient", &[]);
        let mut n = Numerics::default();
        n.schedule = vec![5.0, 50.0];
        assert!(matches!(run(&s, &n), Err(PipelineError::InvalidNumerics(_))));
        let mut n = Numerics::default();
        n.radii = vec![0.01, 0.1];
        assert!(run(&s, &n).is_err());
        let mut n = Numerics::default();
        n.tail_tol = -1.0;
        assert!(run(&s, &n).is_err());
    }

    #[test]
    fn short_horizon_is_not_certified() {
        let mut n = Numerics::default();
        n.t_max = 4.0;
        n.schedule = vec![2.0, 4.0];
        n.continuity = false;
        let run = run(&spec("decay-discount", &[]), &n).unwrap();
        assert!(matches!(run.report.verdict, Verdict::NonCertified(_)));
        assert!(run.truncation.is_none());
    }

    #[test]
    fn trace_rows_cover_mesh() {
        let mut n = Numerics::default();
        n.continuity = false;
        let s = spec("decay-discount", &[("candidate.u0", 1.0)]);
        let run = run(&s, &n).unwrap();
        let rows = run.trace_rows(&s);
        assert_eq!(rows.len(), run.fund.mesh().len());
        assert!((rows[0].psi[0] - 1.0 / 3.0).abs() < 1e-7);
        assert!((rows[0].psi_a_norm - 1.0 / 3.0).abs() < 1e-7);
    }
}
