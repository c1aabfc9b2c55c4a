//! Built-in problems used by tests, examples and `pmp-horizon list`.

use super::{validate, CandidateDraft, ControlDraft, ProblemDraft, ProblemError, ProblemSpec};
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

pub struct CatalogEntry {
    pub name: &'static str,
    pub summary: &'static str,
}

pub const CATALOG: &[CatalogEntry] = &[
    CatalogEntry {
        name: "zero-gradient",
        summary: "x' = -x0 + u0, g = exp(-t) u0, U = [0,1], u0 = 0; cost ignores the state",
    },
    CatalogEntry {
        name: "decay-discount",
        summary: "x' = -x0 + u0, g = exp(-rho t) x0, U = [-1,1], u0 = 0, rho = 1",
    },
    CatalogEntry {
        name: "ss-cubic",
        summary: "x' = -u0, g = exp(-t)(x0^3 + u0), U = [c,d] = [0.1,1], u0 = c, x(0) = 1",
    },
    CatalogEntry {
        name: "lq-riccati",
        summary: "x' = a x0 + u0, g = -exp(-rho t)(x0^2 + u0^2), U = [-10,10], u0 = Riccati feedback, a = -0.5, rho = 1, x(0) = 1",
    },
    CatalogEntry {
        name: "planar-rotation",
        summary: "x' = (-mu x0 + x1 + u0, -x0 - mu x1), g = exp(-t) x0, U = [0,1], u0 = 0, mu = 0.5",
    },
];

/// Feedback gain `k` of the discounted scalar LQ problem
/// `max -∫ e^{-ρt}(x² + u²) dt`, `ẋ = a x + u`, i.e. the positive root of
/// `k² + (ρ - 2a) k - 1 = 0`. The optimal control is `u = -k x`.
pub fn discounted_riccati_gain(a: f64, rho: f64) -> f64 {
    let shifted = a - 0.5 * rho;
    shifted + libm::sqrt(shifted * shifted + 1.0)
}

fn interval(lo: &str, hi: &str) -> ControlDraft {
    ControlDraft::Interval {
        lo: lo.into(),
        hi: hi.into(),
    }
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// The unvalidated draft of a catalog entry, before overrides.
pub fn catalog_draft(name: &str) -> Result<ProblemDraft, ProblemError> {
    let draft = |state_dim: usize, f: &[&str], g: &str| ProblemDraft {
        name: name.into(),
        state_dim,
        control_dim: 1,
        f: f.iter().map(|s| s.to_string()).collect(),
        g: g.into(),
        df_dx: None,
        dg_dx: None,
        control_set: vec![interval("0", "1")],
        candidate: vec![CandidateDraft::constant(0.0)],
        x0: None,
        params: BTreeMap::new(),
    };
    Ok(match name {
        "zero-gradient" => draft(1, &["-x0 + u0"], "exp(-t)*u0"),
        "decay-discount" => ProblemDraft {
            control_set: vec![interval("-1", "1")],
            params: params(&[("rho", 1.0)]),
            ..draft(1, &["-x0 + u0"], "exp(-rho*t)*x0")
        },
        "ss-cubic" => ProblemDraft {
            control_set: vec![interval("c", "d")],
            candidate: vec![CandidateDraft::expr("c")],
            x0: Some(vec![1.0]),
            params: params(&[("c", 0.1), ("d", 1.0)]),
            ..draft(1, &["-u0"], "exp(-t)*(pow(x0,3) + u0)")
        },
        "lq-riccati" => {
            let (a, rho) = (-0.5, 1.0);
            ProblemDraft {
                control_set: vec![interval("-10", "10")],
                // closed loop x(t) = exp((a - k) t) from x(0) = 1
                candidate: vec![CandidateDraft::expr("-k*exp((a - k)*t)")],
                x0: Some(vec![1.0]),
                params: params(&[("a", a), ("rho", rho), ("k", discounted_riccati_gain(a, rho))]),
                ..draft(1, &["a*x0 + u0"], "-exp(-rho*t)*(pow(x0,2) + pow(u0,2))")
            }
        }
        "planar-rotation" => ProblemDraft {
            params: params(&[("mu", 0.5)]),
            ..draft(2, &["-x0*mu + x1 + u0", "-x0 - mu*x1"], "exp(-t)*x0")
        },
        _ => return Err(ProblemError::UnknownCatalog(name.into())),
    })
}

/// Builds and validates a catalog problem with `overrides` applied (see
/// [`ProblemDraft::apply_override`]).
///
/// For `lq-riccati` the gain `k` is recomputed from `a` and `rho` unless it
/// is overridden itself.
pub fn catalog_get(
    name: &str,
    overrides: &BTreeMap<String, f64>,
) -> Result<ProblemSpec, ProblemError> {
    validate(&catalog_draft_with(name, overrides)?)
}

pub fn catalog_draft_with(
    name: &str,
    overrides: &BTreeMap<String, f64>,
) -> Result<ProblemDraft, ProblemError> {
    let mut draft = catalog_draft(name)?;
    for (key, value) in overrides {
        draft.apply_override(key, *value)?;
    }
    if name == "lq-riccati" && !overrides.contains_key("k") {
        let gain = discounted_riccati_gain(draft.params["a"], draft.params["rho"]);
        draft.params.insert("k".into(), gain);
    }
    Ok(draft)
}

pub fn catalog_names() -> Vec<&'static str> {
    CATALOG.iter().map(|e| e.name).collect()
}

pub fn describe_entry(name: &str) -> Option<String> {
    CATALOG
        .iter()
        .find(|e| e.name == name)
        .map(|e| format!("{}: {}", e.name, e.summary))
}
