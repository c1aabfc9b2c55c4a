//! TOML run configuration.
//!
//! ```toml
//! [problem]
//! catalog = "decay-discount"
//! overrides = { "candidate.u0" = 1.0 }
//!
//! [numerics]
//! t_max = 40.0
//! tol = 1e-8
//!
//! [truncation]
//! schedule = [5.0, 10.0, 20.0, 40.0]
//!
//! [continuity]
//! radii = [0.1, 0.01]
//! samples = 8
//! seed = 42
//!
//! [output]
//! dir = "out"
//! csv = true
//! ```
//!
//! Instead of `catalog`, a problem may be given inline under
//! `[problem.inline]` with expression strings for `f`, `g`, the control set
//! and the candidate.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use pmp_core::pipeline::Numerics;
use pmp_core::problem::{CandidateDraft, ControlDraft, ProblemDraft};
use serde::Deserialize;

#[derive(Debug)]
pub enum ConfigError {
    Io { path: PathBuf, source: std::io::Error },
    Parse { path: PathBuf, message: String },
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io { path, source } => write!(f, "cannot read {}: {source}", path.display()),
            Self::Parse { path, message } => write!(f, "{}: {message}", path.display()),
            Self::Invalid(why) => f.write_str(why),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub truncation: TruncationSection,
    #[serde(default)]
    pub continuity: ContinuitySection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub catalog: Option<String>,
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
    pub inline: Option<InlineProblem>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InlineProblem {
    pub name: String,
    pub state_dim: usize,
    pub control_dim: usize,
    pub f: Vec<String>,
    pub g: String,
    pub df_dx: Option<Vec<Vec<String>>>,
    pub dg_dx: Option<Vec<String>>,
    pub control: Vec<ControlEntry>,
    pub candidate: Vec<CandidateEntry>,
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

/// Either `{ lo = "...", hi = "..." }` or `{ values = [...] }`.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged, deny_unknown_fields)]
pub enum ControlEntry {
    Interval { lo: String, hi: String },
    Finite { values: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CandidateEntry {
    pub pieces: Vec<String>,
    #[serde(default)]
    pub breaks: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    pub t_max: Option<f64>,
    pub tol: Option<f64>,
    pub max_step: Option<f64>,
    pub tail_tol: Option<f64>,
    pub window: Option<f64>,
    pub max_tol: Option<f64>,
    pub ham_tol: Option<f64>,
    pub u_resolution: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TruncationSection {
    pub schedule: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ContinuitySection {
    pub enabled: Option<bool>,
    pub radii: Option<Vec<f64>>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub csv: bool,
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Reads and parses `path`, returning the raw bytes alongside for
    /// hashing.
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), ConfigError> {
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let text = std::str::from_utf8(&bytes).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: format!("not UTF-8: {e}"),
        })?;
        Ok((Self::parse(text, path)?, bytes))
    }

    /// Defaults overlaid with the values present in the file.
    pub fn numerics(&self) -> Numerics {
        let mut n = Numerics::default();
        let s = &self.numerics;
        macro_rules! take {
            ($($field:ident),*) => { $( if let Some(v) = s.$field { n.$field = v; } )* };
        }
        take!(t_max, tol, max_step, tail_tol, window, max_tol, ham_tol, u_resolution);
        if let Some(schedule) = &self.truncation.schedule {
            n.schedule = schedule.clone();
        }
        let c = &self.continuity;
        if let Some(radii) = &c.radii {
            n.radii = radii.clone();
        }
        if let Some(samples) = c.samples {
            n.samples = samples;
        }
        if let Some(seed) = c.seed {
            n.seed = seed;
        }
        if let Some(enabled) = c.enabled {
            n.continuity = enabled;
        }
        n
    }
}

impl InlineProblem {
    pub fn to_draft(&self) -> ProblemDraft {
        ProblemDraft {
            name: self.name.clone(),
            state_dim: self.state_dim,
            control_dim: self.control_dim,
            f: self.f.clone(),
            g: self.g.clone(),
            df_dx: self.df_dx.clone(),
            dg_dx: self.dg_dx.clone(),
            control_set: self
                .control
                .iter()
                .map(|c| match c {
                    ControlEntry::Interval { lo, hi } => ControlDraft::Interval {
                        lo: lo.clone(),
                        hi: hi.clone(),
                    },
                    ControlEntry::Finite { values } => ControlDraft::Finite(values.clone()),
                })
                .collect(),
            candidate: self
                .candidate
                .iter()
                .map(|c| CandidateDraft {
                    breaks: c.breaks.clone(),
                    pieces: c.pieces.clone(),
                })
                .collect(),
            x0: self.x0.clone(),
            params: self.params.clone(),
        }
    }
}
