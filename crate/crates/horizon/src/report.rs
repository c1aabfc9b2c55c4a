//! JSON report and CSV trace emission.
//!
//! Key order is fixed by field order and maps are `BTreeMap`, so identical
//! runs serialize to identical bytes. Non-finite numbers become `null`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use pmp_core::certify::{Check, Verdict};
use pmp_core::pipeline::{Numerics, Run, TraceRow};
use pmp_core::problem::ProblemSpec;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub config_hash: String,
    pub problem: ProblemInfo,
    pub numerics: NumericsInfo,
    pub lambda0: Option<f64>,
    #[serde(rename = "Lambda0")]
    pub big_lambda0: Vec<f64>,
    pub converged: bool,
    pub onset: Option<f64>,
    pub checks: Vec<CheckEntry>,
    pub truncation: Vec<TruncationEntry>,
    pub continuity: Vec<ContinuityEntry>,
    pub verdict: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failed_checks: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProblemInfo {
    pub name: String,
    pub state_dim: usize,
    pub control_dim: usize,
    pub initial_state: Vec<f64>,
    pub params: BTreeMap<String, f64>,
    pub expressions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NumericsInfo {
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
    pub continuity_probe: bool,
    pub mesh_nodes: Option<usize>,
    pub max_kappa: Option<f64>,
    pub conditioning_warnings: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckEntry {
    pub name: String,
    pub summary: f64,
    pub tol: f64,
    pub status: String,
    pub gating: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncationEntry {
    pub tau: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityEntry {
    pub radius: f64,
    pub deviation: f64,
    pub samples: usize,
    pub failures: usize,
}

impl ProblemInfo {
    pub fn new(spec: &ProblemSpec) -> Self {
        Self {
            name: spec.name().into(),
            state_dim: spec.state_dim(),
            control_dim: spec.control_dim(),
            initial_state: spec.initial_state().to_vec(),
            params: spec.params().clone(),
            expressions: spec.describe().into_iter().collect(),
        }
    }
}

impl NumericsInfo {
    fn new(n: &Numerics) -> Self {
        Self {
            t_max: n.t_max,
            tol: n.tol,
            max_step: n.max_step,
            tail_tol: n.tail_tol,
            window: n.window,
            max_tol: n.max_tol,
            ham_tol: n.ham_tol,
            u_resolution: n.u_resolution,
            schedule: n.schedule.clone(),
            radii: n.radii.clone(),
            samples: n.samples,
            seed: n.seed,
            continuity_probe: n.continuity,
            mesh_nodes: None,
            max_kappa: None,
            conditioning_warnings: 0,
        }
    }
}

impl From<&Check> for CheckEntry {
    fn from(c: &Check) -> Self {
        Self {
            name: c.name.into(),
            summary: c.summary,
            tol: c.tol,
            status: c.status.as_str().into(),
            gating: c.gating,
            note: c.note.clone(),
        }
    }
}

impl Report {
    pub fn from_run(config_hash: String, spec: &ProblemSpec, run: &Run) -> Self {
        let mut numerics = NumericsInfo::new(&run.numerics);
        numerics.mesh_nodes = Some(run.fund.mesh().len());
        numerics.max_kappa = Some(run.fund.max_kappa());
        numerics.conditioning_warnings = run.fund.conditioning_warnings().len();
        let (failed_checks, reason) = match &run.report.verdict {
            Verdict::CertifiedExtremal => (Vec::new(), None),
            Verdict::Fail(names) => (names.iter().map(|s| s.to_string()).collect(), None),
            Verdict::NonCertified(why) => (Vec::new(), Some(why.clone())),
        };
        Self {
            config_hash,
            problem: ProblemInfo::new(spec),
            numerics,
            lambda0: Some(run.cert.lambda0()),
            big_lambda0: run.cert.limit().to_vec(),
            converged: run.limit.converged,
            onset: run.limit.onset,
            checks: run.report.checks.iter().map(CheckEntry::from).collect(),
            truncation: run
                .truncation
                .iter()
                .flat_map(|t| &t.rows)
                .map(|r| TruncationEntry {
                    tau: r.tau,
                    deviation: r.deviation,
                })
                .collect(),
            continuity: run
                .continuity
                .iter()
                .flat_map(|c| &c.rows)
                .map(|r| ContinuityEntry {
                    radius: r.radius,
                    deviation: r.deviation,
                    samples: r.samples,
                    failures: r.failures,
                })
                .collect(),
            verdict: run.report.verdict.as_str().into(),
            failed_checks,
            reason,
        }
    }

    /// Report for a run that could not be carried far enough to build a
    /// certificate.
    pub fn non_certified(config_hash: String, spec: &ProblemSpec, numerics: &Numerics, reason: String) -> Self {
        Self {
            config_hash,
            problem: ProblemInfo::new(spec),
            numerics: NumericsInfo::new(numerics),
            lambda0: None,
            big_lambda0: Vec::new(),
            converged: false,
            onset: None,
            checks: Vec::new(),
            truncation: Vec::new(),
            continuity: Vec::new(),
            verdict: Verdict::NonCertified(String::new()).as_str().into(),
            failed_checks: Vec::new(),
            reason: Some(reason),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Lower-case hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// CSV trace, one row per mesh node, 17 significant digits.
pub fn trace_csv(rows: &[TraceRow], state_dim: usize) -> String {
    let mut out = String::from("t");
    for prefix in ["x", "psi"] {
        for i in 0..state_dim {
            let _ = write!(out, ",{prefix}{i}");
        }
    }
    out.push_str(",psiA_norm");
    for i in 0..state_dim {
        let _ = write!(out, ",I{i}");
    }
    out.push_str(",H,max_residual\n");
    let num = |out: &mut String, v: f64| {
        let _ = write!(out, "{v:.16e}");
    };
    for r in rows {
        num(&mut out, r.t);
        for v in r.x.iter().chain(&r.psi) {
            out.push(',');
            num(&mut out, *v);
        }
        out.push(',');
        num(&mut out, r.psi_a_norm);
        for v in &r.integral {
            out.push(',');
            num(&mut out, *v);
        }
        for v in [r.hamiltonian, r.max_residual] {
            out.push(',');
            num(&mut out, v);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_matches_known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn csv_layout() {
        let rows = [TraceRow {
            t: 0.0,
            x: vec![1.0, 2.0],
            psi: vec![0.5, f64::NAN],
            psi_a_norm: 0.25,
            integral: vec![0.0, 0.0],
            hamiltonian: -1.0,
            max_residual: 0.0,
        }];
        let csv = trace_csv(&rows, 2);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,x0,x1,psi0,psi1,psiA_norm,I0,I1,H,max_residual");
        let row = lines.next().unwrap();
        assert_eq!(row.split(',').count(), 10);
        assert!(row.starts_with("0.0000000000000000e0,1.0000000000000000e0,"));
        assert!(row.contains("NaN"));
    }
}
