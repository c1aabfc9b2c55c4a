//! Problem instances: dynamics, running cost, control set and the candidate
//! control to be certified.
//!
//! A [`ProblemDraft`] holds expression text as it comes from a config file or
//! the built-in [`catalog`]. [`validate`] parses it, derives the Jacobians
//! ∂f/∂x and ∂g/∂x symbolically (or checks user-supplied ones against the
//! derived ones) and compiles everything for evaluation.
//!
//! Costates are row vectors throughout: the Hamiltonian is `ψ·f + λ·g`.

pub mod catalog;

use crate::expr::{parse, Compiled, Expr, ExprError, Slot};
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use catalog::{
    catalog_draft, catalog_draft_with, catalog_get, catalog_names, describe_entry,
    discounted_riccati_gain, CatalogEntry, CATALOG,
};

/// Horizon over which control bounds and the candidate are sampled when no
/// other horizon is given.
pub const DEFAULT_CHECK_HORIZON: f64 = 40.0;

/// Slack allowed when checking that the candidate lies in the control set.
pub const CONTROL_SET_SLACK: f64 = 1e-9;

const JACOBIAN_CHECK_POINTS: usize = 20;
const JACOBIAN_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemError {
    Expr { context: String, source: ExprError },
    Dimension { what: String, expected: usize, found: usize },
    CandidateOutsideControlSet { component: usize, t: f64, value: f64 },
    JacobianDisagreement { entry: String, t: f64, user: f64, derived: f64 },
    InvalidControlSet { component: usize, reason: String },
    InvalidCandidate { component: usize, reason: String },
    UnknownCatalog(String),
    UnknownOverride(String),
}

impl fmt::Display for ProblemError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Expr { context, source } => write!(f, "{context}: {source}"),
            Self::Dimension {
                what,
                expected,
                found,
            } => write!(f, "dimension mismatch in {what}: expected {expected}, found {found}"),
            Self::CandidateOutsideControlSet {
                component,
                t,
                value,
            } => write!(
                f,
                "candidate outside control set: u{component}({t}) = {value}"
            ),
            Self::JacobianDisagreement {
                entry,
                t,
                user,
                derived,
            } => write!(
                f,
                "Jacobian disagreement in {entry} at t = {t}: supplied {user}, derived {derived}"
            ),
            Self::InvalidControlSet { component, reason } => {
                write!(f, "invalid control set for u{component}: {reason}")
            }
            Self::InvalidCandidate { component, reason } => {
                write!(f, "invalid candidate control u{component}: {reason}")
            }
            Self::UnknownCatalog(name) => write!(f, "unknown catalog problem `{name}`"),
            Self::UnknownOverride(key) => write!(f, "unknown override `{key}`"),
        }
    }
}

/// Control set component as written in a draft.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlDraft {
    /// `lo(t) <= u <= hi(t)`; bounds may depend on `t` and parameters.
    Interval { lo: String, hi: String },
    Finite(Vec<f64>),
}

/// One candidate component: `pieces[i]` is active on `[breaks[i-1], breaks[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateDraft {
    pub breaks: Vec<f64>,
    pub pieces: Vec<String>,
}

impl CandidateDraft {
    pub fn constant(value: f64) -> Self {
        Self::expr(&format!("{value}"))
    }

    pub fn expr(src: &str) -> Self {
        Self {
            breaks: Vec::new(),
            pieces: vec![src.into()],
        }
    }
}

/// Unvalidated problem definition.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemDraft {
    pub name: String,
    pub state_dim: usize,
    pub control_dim: usize,
    pub f: Vec<String>,
    pub g: String,
    pub df_dx: Option<Vec<Vec<String>>>,
    pub dg_dx: Option<Vec<String>>,
    pub control_set: Vec<ControlDraft>,
    pub candidate: Vec<CandidateDraft>,
    pub x0: Option<Vec<f64>>,
    pub params: BTreeMap<String, f64>,
}

impl ProblemDraft {
    /// Applies a `key = value` override.
    ///
    /// `candidate.u<j>` replaces that candidate component by a constant,
    /// `initial.x<i>` sets an initial-state entry, and any other key must
    /// name a declared parameter.
    pub fn apply_override(&mut self, key: &str, value: f64) -> Result<(), ProblemError> {
        let unknown = || ProblemError::UnknownOverride(key.into());
        if let Some(rest) = key.strip_prefix("candidate.") {
            let j = match Slot::from_name(rest, 0, self.control_dim) {
                Some(Slot::Control(j)) => j,
                _ => return Err(unknown()),
            };
            self.candidate[j] = CandidateDraft::constant(value);
        } else if let Some(rest) = key.strip_prefix("initial.") {
            let i = match Slot::from_name(rest, self.state_dim, 0) {
                Some(Slot::State(i)) => i,
                _ => return Err(unknown()),
            };
            let x0 = self.x0.get_or_insert_with(|| vec![0.0; self.state_dim]);
            if x0.len() != self.state_dim {
                return Err(unknown());
            }
            x0[i] = value;
        } else {
            *self.params.get_mut(key).ok_or_else(unknown)? = value;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum ControlComponent {
    Interval {
        lo: Expr,
        hi: Expr,
        lo_c: Compiled,
        hi_c: Compiled,
    },
    Finite(Vec<f64>),
}

/// Pointwise control constraint `U(t)`, a product of per-component sets.
#[derive(Debug, Clone)]
pub struct ControlSet {
    components: Vec<ControlComponent>,
}

impl ControlSet {
    pub fn components(&self) -> &[ControlComponent] {
        &self.components
    }

    /// Sample values of component `j` at time `t`: `resolution` equispaced
    /// points including both ends for intervals, every element for finite
    /// sets.
    pub fn samples(&self, j: usize, t: f64, resolution: usize) -> Vec<f64> {
        match &self.components[j] {
            ControlComponent::Finite(values) => values.clone(),
            ControlComponent::Interval { lo_c, hi_c, .. } => {
                let lo = lo_c.eval(t, &[], &[]);
                let hi = hi_c.eval(t, &[], &[]);
                let n = resolution.max(2);
                let mut out: Vec<f64> = (0..n)
                    .map(|i| lo + (hi - lo) * (i as f64) / ((n - 1) as f64))
                    .collect();
                out[n - 1] = hi;
                out
            }
        }
    }

    /// Distance from `value` to component `j` of `U(t)`.
    pub fn distance(&self, j: usize, t: f64, value: f64) -> f64 {
        match &self.components[j] {
            ControlComponent::Finite(values) => values
                .iter()
                .map(|v| (v - value).abs())
                .fold(f64::INFINITY, f64::min),
            ControlComponent::Interval { lo_c, hi_c, .. } => {
                let lo = lo_c.eval(t, &[], &[]);
                let hi = hi_c.eval(t, &[], &[]);
                (lo - value).max(value - hi).max(0.0)
            }
        }
    }

    fn sample_point<R: Rng>(&self, t: f64, rng: &mut R) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| match c {
                ControlComponent::Finite(values) => values[rng.gen_range(0..values.len())],
                ControlComponent::Interval { lo_c, hi_c, .. } => {
                    let lo = lo_c.eval(t, &[], &[]);
                    let hi = hi_c.eval(t, &[], &[]);
                    lo + (hi - lo) * rng.gen::<f64>()
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct PiecewiseControl {
    breaks: Vec<f64>,
    pieces: Vec<Expr>,
    compiled: Vec<Compiled>,
}

impl PiecewiseControl {
    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn pieces(&self) -> &[Expr] {
        &self.pieces
    }

    /// Right-continuous piece selection.
    fn piece_at(&self, t: f64) -> &Compiled {
        &self.compiled[self.breaks.partition_point(|b| *b <= t)]
    }
}

/// The candidate control `u⁰(t)`.
#[derive(Debug, Clone)]
pub struct CandidateControl {
    components: Vec<PiecewiseControl>,
}

impl CandidateControl {
    pub fn components(&self) -> &[PiecewiseControl] {
        &self.components
    }

    /// Sorted union of all breakpoints.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self
            .components
            .iter()
            .flat_map(|c| c.breaks.iter().copied())
            .collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }
}

/// A validated problem instance. Immutable once built.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    name: String,
    state_dim: usize,
    control_dim: usize,
    f: Vec<Expr>,
    g: Expr,
    df_dx: Vec<Expr>,
    dg_dx: Vec<Expr>,
    control_set: ControlSet,
    candidate: CandidateControl,
    x0: Vec<f64>,
    params: BTreeMap<String, f64>,
    f_c: Vec<Compiled>,
    g_c: Compiled,
    df_dx_c: Vec<Compiled>,
    dg_dx_c: Vec<Compiled>,
}

fn parse_in(context: &str, src: &str) -> Result<Expr, ProblemError> {
    parse(src).map_err(|source| ProblemError::Expr {
        context: context.into(),
        source,
    })
}

fn dim_check(what: &str, expected: usize, found: usize) -> Result<(), ProblemError> {
    if expected == found {
        Ok(())
    } else {
        Err(ProblemError::Dimension {
            what: what.into(),
            expected,
            found,
        })
    }
}

/// Validates with [`DEFAULT_CHECK_HORIZON`].
pub fn validate(draft: &ProblemDraft) -> Result<ProblemSpec, ProblemError> {
    validate_with_horizon(draft, DEFAULT_CHECK_HORIZON)
}

/// Validates a draft; control bounds and the candidate are sampled on
/// `[0, horizon]`.
pub fn validate_with_horizon(
    draft: &ProblemDraft,
    horizon: f64,
) -> Result<ProblemSpec, ProblemError> {
    let m = draft.state_dim;
    let k = draft.control_dim;
    if m == 0 {
        return Err(ProblemError::Dimension {
            what: "state_dim".into(),
            expected: 1,
            found: 0,
        });
    }
    if k == 0 {
        return Err(ProblemError::Dimension {
            what: "control_dim".into(),
            expected: 1,
            found: 0,
        });
    }
    dim_check("f", m, draft.f.len())?;
    dim_check("control_set", k, draft.control_set.len())?;
    dim_check("candidate", k, draft.candidate.len())?;
    let x0 = draft.x0.clone().unwrap_or_else(|| vec![0.0; m]);
    dim_check("x0", m, x0.len())?;
    if let Some(rows) = &draft.df_dx {
        dim_check("df_dx rows", m, rows.len())?;
        for (i, row) in rows.iter().enumerate() {
            dim_check(&format!("df_dx row {i}"), m, row.len())?;
        }
    }
    if let Some(row) = &draft.dg_dx {
        dim_check("dg_dx", m, row.len())?;
    }

    let params = &draft.params;
    let full_slots = |name: &str| Slot::from_name(name, m, k);
    let time_slot = |name: &str| (name == "t").then_some(Slot::Time);
    let compile_full = |context: &str, e: &Expr| {
        Compiled::new(e, full_slots, params).map_err(|source| ProblemError::Expr {
            context: context.into(),
            source,
        })
    };
    let compile_time = |context: &str, e: &Expr| {
        Compiled::new(e, time_slot, params).map_err(|source| ProblemError::Expr {
            context: context.into(),
            source,
        })
    };
    let differentiate = |context: &str, e: &Expr, var: &str| {
        e.diff(var).map_err(|source| ProblemError::Expr {
            context: context.into(),
            source,
        })
    };

    let f: Vec<Expr> = draft
        .f
        .iter()
        .enumerate()
        .map(|(i, s)| parse_in(&format!("f[{i}]"), s))
        .collect::<Result<_, _>>()?;
    let g = parse_in("g", &draft.g)?;
    let f_c: Vec<Compiled> = f
        .iter()
        .enumerate()
        .map(|(i, e)| compile_full(&format!("f[{i}]"), e))
        .collect::<Result<_, _>>()?;
    let g_c = compile_full("g", &g)?;

    let mut df_dx = Vec::with_capacity(m * m);
    for (i, fi) in f.iter().enumerate() {
        for j in 0..m {
            df_dx.push(differentiate(&format!("df_dx[{i}][{j}]"), fi, &format!("x{j}"))?);
        }
    }
    let mut dg_dx = Vec::with_capacity(m);
    for j in 0..m {
        dg_dx.push(differentiate(&format!("dg_dx[{j}]"), &g, &format!("x{j}"))?);
    }
    let mut df_dx_c = Vec::with_capacity(m * m);
    for (n, e) in df_dx.iter().enumerate() {
        df_dx_c.push(compile_full(&format!("df_dx[{}][{}]", n / m, n % m), e)?);
    }
    let mut dg_dx_c = Vec::with_capacity(m);
    for (j, e) in dg_dx.iter().enumerate() {
        dg_dx_c.push(compile_full(&format!("dg_dx[{j}]"), e)?);
    }

    let mut components = Vec::with_capacity(k);
    for (j, c) in draft.control_set.iter().enumerate() {
        components.push(match c {
            ControlDraft::Finite(values) => {
                if values.is_empty() {
                    return Err(ProblemError::InvalidControlSet {
                        component: j,
                        reason: "finite set is empty".into(),
                    });
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(ProblemError::InvalidControlSet {
                        component: j,
                        reason: "finite set has a non-finite value".into(),
                    });
                }
                ControlComponent::Finite(values.clone())
            }
            ControlDraft::Interval { lo, hi } => {
                let lo = parse_in(&format!("control_set[{j}].lo"), lo)?;
                let hi = parse_in(&format!("control_set[{j}].hi"), hi)?;
                let lo_c = compile_time(&format!("control_set[{j}].lo"), &lo)?;
                let hi_c = compile_time(&format!("control_set[{j}].hi"), &hi)?;
                ControlComponent::Interval { lo, hi, lo_c, hi_c }
            }
        });
    }
    let control_set = ControlSet { components };

    let mut candidate_components = Vec::with_capacity(k);
    for (j, c) in draft.candidate.iter().enumerate() {
        let invalid = |reason: &str| ProblemError::InvalidCandidate {
            component: j,
            reason: reason.into(),
        };
        if c.pieces.len() != c.breaks.len() + 1 {
            return Err(invalid("needs exactly one more piece than breakpoints"));
        }
        if c.breaks.iter().any(|b| !(b.is_finite() && *b > 0.0))
            || c.breaks.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(invalid("breakpoints must be positive and strictly increasing"));
        }
        let pieces: Vec<Expr> = c
            .pieces
            .iter()
            .enumerate()
            .map(|(p, s)| parse_in(&format!("candidate[{j}].pieces[{p}]"), s))
            .collect::<Result<_, _>>()?;
        let compiled = pieces
            .iter()
            .enumerate()
            .map(|(p, e)| compile_time(&format!("candidate[{j}].pieces[{p}]"), e))
            .collect::<Result<_, _>>()?;
        candidate_components.push(PiecewiseControl {
            breaks: c.breaks.clone(),
            pieces,
            compiled,
        });
    }
    let candidate = CandidateControl {
        components: candidate_components,
    };

    let spec = ProblemSpec {
        name: draft.name.clone(),
        state_dim: m,
        control_dim: k,
        f,
        g,
        df_dx,
        dg_dx,
        control_set,
        candidate,
        x0,
        params: params.clone(),
        f_c,
        g_c,
        df_dx_c,
        dg_dx_c,
    };

    let mut grid: Vec<f64> = (0..=400).map(|i| horizon * i as f64 / 400.0).collect();
    grid.extend(spec.candidate.breakpoints());
    spec.check_control_bounds(&grid)?;
    spec.check_candidate(&grid)?;

    if draft.df_dx.is_some() || draft.dg_dx.is_some() {
        spec.check_user_jacobians(draft, horizon)?;
    }
    Ok(spec)
}

impl ProblemSpec {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn dynamics(&self) -> &[Expr] {
        &self.f
    }

    pub fn running_cost(&self) -> &Expr {
        &self.g
    }

    /// ∂f/∂x, row-major.
    pub fn dynamics_jacobian(&self) -> &[Expr] {
        &self.df_dx
    }

    pub fn cost_gradient(&self) -> &[Expr] {
        &self.dg_dx
    }

    pub fn control_set(&self) -> &ControlSet {
        &self.control_set
    }

    pub fn candidate(&self) -> &CandidateControl {
        &self.candidate
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.x0
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn f_into(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.f_c) {
            *o = f.eval(t, x, u);
        }
    }

    pub fn g_at(&self, t: f64, x: &[f64], u: &[f64]) -> f64 {
        self.g_c.eval(t, x, u)
    }

    /// ∂f/∂x at `(t, x, u)`, row-major `m x m`.
    pub fn jacobian_into(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.df_dx_c) {
            *o = f.eval(t, x, u);
        }
    }

    /// ∂g/∂x at `(t, x, u)` as a row vector.
    pub fn cost_gradient_into(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.dg_dx_c) {
            *o = f.eval(t, x, u);
        }
    }

    /// `u⁰(t)`, right-continuous at breakpoints.
    pub fn candidate_into(&self, t: f64, out: &mut [f64]) {
        self.candidate_on(t, t, out)
    }

    /// `u⁰(t)` using the pieces active at `anchor`. Integrators pass a time
    /// strictly inside the current step so both ends of a step see the same
    /// piece.
    pub fn candidate_on(&self, anchor: f64, t: f64, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.candidate.components) {
            *o = c.piece_at(anchor).eval(t, &[], &[]);
        }
    }

    /// `H(x, t, u, λ, ψ) = ψ·f(t, x, u) + λ·g(t, x, u)`.
    pub fn hamiltonian(
        &self,
        t: f64,
        x: &[f64],
        u: &[f64],
        lambda: f64,
        psi: &[f64],
    ) -> Result<f64, ProblemError> {
        dim_check("x", self.state_dim, x.len())?;
        dim_check("u", self.control_dim, u.len())?;
        dim_check("psi", self.state_dim, psi.len())?;
        Ok(self.hamiltonian_unchecked(t, x, u, lambda, psi))
    }

    pub(crate) fn hamiltonian_unchecked(
        &self,
        t: f64,
        x: &[f64],
        u: &[f64],
        lambda: f64,
        psi: &[f64],
    ) -> f64 {
        let flow: f64 = psi
            .iter()
            .zip(&self.f_c)
            .map(|(p, f)| p * f.eval(t, x, u))
            .sum();
        flow + lambda * self.g_c.eval(t, x, u)
    }

    /// Checks the candidate against the control set at each time in `times`.
    pub fn check_candidate(&self, times: &[f64]) -> Result<(), ProblemError> {
        let mut u = vec![0.0; self.control_dim];
        for &t in times {
            self.candidate_into(t, &mut u);
            for (j, &value) in u.iter().enumerate() {
                let d = self.control_set.distance(j, t, value);
                if !(d <= CONTROL_SET_SLACK) {
                    return Err(ProblemError::CandidateOutsideControlSet {
                        component: j,
                        t,
                        value,
                    });
                }
            }
        }
        Ok(())
    }

    fn check_control_bounds(&self, times: &[f64]) -> Result<(), ProblemError> {
        for (j, c) in self.control_set.components.iter().enumerate() {
            if let ControlComponent::Interval { lo_c, hi_c, .. } = c {
                for &t in times {
                    let lo = lo_c.eval(t, &[], &[]);
                    let hi = hi_c.eval(t, &[], &[]);
                    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                        return Err(ProblemError::InvalidControlSet {
                            component: j,
                            reason: format!("bounds [{lo}, {hi}] at t = {t}"),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn check_user_jacobians(&self, draft: &ProblemDraft, horizon: f64) -> Result<(), ProblemError> {
        let m = self.state_dim;
        let slots = |name: &str| Slot::from_name(name, m, self.control_dim);
        let compile = |context: String, src: &str| -> Result<(String, Compiled), ProblemError> {
            let e = parse_in(&context, src)?;
            let c = Compiled::new(&e, slots, &self.params).map_err(|source| ProblemError::Expr {
                context: context.clone(),
                source,
            })?;
            Ok((context, c))
        };
        // (label, user expression, derived expression)
        let mut pairs: Vec<(String, Compiled, &Compiled)> = Vec::new();
        if let Some(rows) = &draft.df_dx {
            for (i, row) in rows.iter().enumerate() {
                for (j, src) in row.iter().enumerate() {
                    let (label, c) = compile(format!("df_dx[{i}][{j}]"), src)?;
                    pairs.push((label, c, &self.df_dx_c[i * m + j]));
                }
            }
        }
        if let Some(row) = &draft.dg_dx {
            for (j, src) in row.iter().enumerate() {
                let (label, c) = compile(format!("dg_dx[{j}]"), src)?;
                pairs.push((label, c, &self.dg_dx_c[j]));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..JACOBIAN_CHECK_POINTS {
            let t = horizon * rng.gen::<f64>();
            let x: Vec<f64> = self
                .x0
                .iter()
                .map(|c| c + 4.0 * rng.gen::<f64>() - 2.0)
                .collect();
            let u = self.control_set.sample_point(t, &mut rng);
            for (label, user, derived) in &pairs {
                let a = user.eval(t, &x, &u);
                let b = derived.eval(t, &x, &u);
                if !(a.is_finite() && b.is_finite()) {
                    continue;
                }
                if (a - b).abs() > JACOBIAN_REL_TOL * b.abs().max(1.0) {
                    return Err(ProblemError::JacobianDisagreement {
                        entry: label.clone(),
                        t,
                        user: a,
                        derived: b,
                    });
                }
            }
        }
        Ok(())
    }

    /// Human-readable summary of the problem's expressions.
    pub fn describe(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (i, f) in self.f.iter().enumerate() {
            out.push((format!("f[{i}]"), f.to_string()));
        }
        out.push(("g".into(), self.g.to_string()));
        out
    }
}
