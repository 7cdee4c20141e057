//! JSON experiment configuration.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coefficients::TestFunction;
use crate::error::{Error, Result};
use crate::microhyperbolicity::{DirectionMode, PhaseBox};
use crate::quantization::{EpsRule, GridPolicy, WindowKind, WindowTheta};
use crate::ssf::{Criteria, SsfMethod};
use crate::symbols::{ModelSpec, PhaseCutoff};

pub const SCHEMA_VERSION: u32 = 1;

/// Top-level document: shared defaults plus a list of named experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Echoed in reports; the run paths do no random sampling.
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; all logical cores when absent.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub potential: Option<ModelSpec>,
    #[serde(default)]
    pub grid: Option<GridPolicy>,
    #[serde(default)]
    pub h_list: Option<Vec<f64>>,
    pub experiments: Vec<ExperimentSpec>,
}

/// One experiment; unset fields fall back to the document defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Unique; used for output file names.
    pub name: String,
    #[serde(default)]
    pub potential: Option<ModelSpec>,
    #[serde(default)]
    pub grid: Option<GridPolicy>,
    #[serde(default)]
    pub h_list: Option<Vec<f64>>,
    pub task: Task,
}

/// Energy grid: explicit values or `n` equispaced points on [lo, hi].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TauGrid {
    Values(Vec<f64>),
    Range { lo: f64, hi: f64, n: usize },
}

impl TauGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        match *self {
            TauGrid::Values(ref v) => {
                if v.is_empty() {
                    return Err(Error::Config("empty tau grid".into()));
                }
                Ok(v.clone())
            }
            TauGrid::Range { lo, hi, n } => {
                if n < 2 || !(hi > lo) {
                    return Err(Error::Config("tau range needs n >= 2 and hi > lo".into()));
                }
                Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
            }
        }
    }
}

/// Sampling of the energy shell used to certify microhyperbolicity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShellSpec {
    pub phase_box: PhaseBox,
    #[serde(default = "default_per_axis")]
    pub per_axis: usize,
    #[serde(default)]
    pub shell_tol: Option<f64>,
}

fn default_per_axis() -> usize {
    81
}

fn default_nx() -> usize {
    2001
}

fn default_allowed_tol() -> f64 {
    1e-12
}

fn default_d_sep() -> f64 {
    2.0
}

fn default_true() -> bool {
    true
}

fn default_mode() -> DirectionMode {
    DirectionMode::PerPointT
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscapeKind {
    /// The dilation condition 2(τ − e_k) − x·∇V > 0 on the allowed region.
    Dilation,
    /// {p, G} > 0 on exact shell samples with G = x·ξ.
    General,
}

/// Which trace statement to test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceCheck {
    /// O(h^∞) decay with a window vanishing near 0.
    Negligibility,
    /// O(h^∞) dependence on a perturbation far from supp χ.
    Locality,
    /// (2πh)·trace against f(τ)·γ₀^χ(τ).
    LeadingTerm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Task {
    CheckMh {
        tau0: f64,
        shell: ShellSpec,
        #[serde(default = "default_mode")]
        mode: DirectionMode,
        #[serde(default)]
        direction: Option<Vec<f64>>,
    },
    CheckEscape {
        tau0: f64,
        x_range: [f64; 2],
        #[serde(default = "default_nx")]
        nx: usize,
        #[serde(default = "default_escape")]
        escape: EscapeKind,
        #[serde(default = "default_allowed_tol")]
        allowed_tol: f64,
    },
    Coeffs {
        tau: TauGrid,
        #[serde(default = "default_dimension")]
        dimension: usize,
    },
    Trace {
        check: TraceCheck,
        tau: f64,
        cutoff: PhaseCutoff,
        test_function: TestFunction,
        window: WindowTheta,
        /// V₁ for the locality check; `potential` is V₀.
        #[serde(default)]
        perturbed: Option<ModelSpec>,
        #[serde(default = "default_d_sep")]
        d_sep: f64,
        #[serde(default)]
        strict: bool,
        #[serde(default = "default_rel_tol")]
        rel_tol: f64,
        #[serde(default)]
        certificate: Option<ShellSpec>,
    },
    SsfCurve {
        tau: TauGrid,
        method: SsfMethod,
        #[serde(default)]
        window: Option<WindowTheta>,
    },
    SsfWeak {
        test_function: TestFunction,
        criteria: Criteria,
    },
    SsfWeyl {
        interval: [f64; 2],
        #[serde(default = "default_n_tau")]
        n_tau: usize,
        window: WindowTheta,
        criteria: Criteria,
        certificate: ShellSpec,
        #[serde(default = "default_true")]
        box_control: bool,
    },
    SsfDerivative {
        tau0: f64,
        test_function: TestFunction,
        window: WindowTheta,
        criteria: Criteria,
        x_range: [f64; 2],
        #[serde(default = "default_nx")]
        nx: usize,
    },
}

fn default_escape() -> EscapeKind {
    EscapeKind::Dilation
}

fn default_dimension() -> usize {
    1
}

fn default_rel_tol() -> f64 {
    0.02
}

fn default_n_tau() -> usize {
    21
}

/// CLI subcommand families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    CheckMh,
    CheckEscape,
    Coeffs,
    Trace,
    Ssf,
    Sweep,
}

impl Task {
    pub fn family(&self) -> Family {
        match self {
            Task::CheckMh { .. } => Family::CheckMh,
            Task::CheckEscape { .. } => Family::CheckEscape,
            Task::Coeffs { .. } => Family::Coeffs,
            Task::Trace { .. } => Family::Trace,
            _ => Family::Ssf,
        }
    }

    fn needs_h_list(&self) -> bool {
        matches!(self.family(), Family::Trace | Family::Ssf)
    }
}

/// An experiment with every default resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub name: String,
    pub potential: ModelSpec,
    pub grid: Option<GridPolicy>,
    pub h_list: Vec<f64>,
    pub task: Task,
}

fn check_h_list(h: &[f64], name: &str) -> Result<()> {
    if h.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::Config(format!("{name}: h values must be positive")));
    }
    if h.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config(format!("{name}: h_list must be strictly decreasing")));
    }
    Ok(())
}

fn check_window(w: &WindowTheta, name: &str) -> Result<()> {
    let ok = match w.eps {
        EpsRule::Fixed { eps } => eps > 0.0,
        EpsRule::Power { coef, .. } => coef > 0.0,
    };
    if !ok {
        return Err(Error::Config(format!("{name}: window scale must be positive")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        if self.experiments.is_empty() {
            return Err(Error::Config("no experiments".into()));
        }
        let mut names = BTreeSet::new();
        for e in &self.experiments {
            if e.name.is_empty() || !e.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(Error::Config(format!("bad experiment name {:?}", e.name)));
            }
            if !names.insert(e.name.as_str()) {
                return Err(Error::Config(format!("duplicate experiment name {}", e.name)));
            }
            self.resolve(e)?;
        }
        Ok(())
    }

    pub fn resolve(&self, e: &ExperimentSpec) -> Result<Resolved> {
        let name = &e.name;
        let potential = e
            .potential
            .clone()
            .or_else(|| self.potential.clone())
            .ok_or_else(|| Error::Config(format!("{name}: no potential")))?;
        let grid = e.grid.or(self.grid);
        let h_list = e.h_list.clone().or_else(|| self.h_list.clone()).unwrap_or_default();
        if e.task.needs_h_list() {
            if h_list.is_empty() {
                return Err(Error::Config(format!("{name}: no h_list")));
            }
            if grid.is_none() {
                return Err(Error::Config(format!("{name}: no grid")));
            }
        }
        check_h_list(&h_list, name)?;
        if let Some(g) = grid {
            if !(g.r > 0.0) || !(g.tau_max > 0.0) || g.m_cap < 2 {
                return Err(Error::Config(format!("{name}: grid needs r > 0, tau_max > 0, m_cap >= 2")));
            }
        }
        match &e.task {
            Task::Trace {
                check,
                window,
                test_function,
                perturbed,
                ..
            } => {
                check_window(window, name)?;
                test_function.validate()?;
                if *check == TraceCheck::Locality && perturbed.is_none() {
                    return Err(Error::Config(format!("{name}: locality needs a perturbed potential")));
                }
            }
            Task::SsfWeak { test_function, .. } => test_function.validate()?,
            Task::SsfWeyl {
                interval, window, n_tau, ..
            } => {
                check_window(window, name)?;
                if window.kind != WindowKind::BumpAtZero {
                    return Err(Error::Config(format!("{name}: Weyl check needs the bump_at_zero window")));
                }
                if !(interval[1] > interval[0]) || *n_tau < 2 {
                    return Err(Error::Config(format!("{name}: bad energy interval")));
                }
            }
            Task::SsfDerivative {
                window, test_function, ..
            } => {
                check_window(window, name)?;
                test_function.validate()?;
            }
            Task::SsfCurve { tau, method, window } => {
                tau.values()?;
                if *method == SsfMethod::MollifiedCounting && window.is_none() {
                    return Err(Error::Config(format!("{name}: mollified counting needs a window")));
                }
            }
            Task::Coeffs { tau, .. } => {
                tau.values()?;
            }
            Task::CheckMh { shell, .. } => {
                if shell.phase_box.lo.len() != 2 || shell.phase_box.hi.len() != 2 {
                    return Err(Error::Config(format!("{name}: phase box must be two-dimensional")));
                }
            }
            Task::CheckEscape { x_range, nx, .. } => {
                if !(x_range[1] > x_range[0]) || *nx < 2 {
                    return Err(Error::Config(format!("{name}: bad x_range")));
                }
            }
        }
        Ok(Resolved {
            name: name.clone(),
            potential,
            grid,
            h_list,
            task: e.task.clone(),
        })
    }

    /// Experiments selected by a subcommand, in document order.
    pub fn select(&self, family: Family) -> Result<Vec<Resolved>> {
        let out: Vec<Resolved> = self
            .experiments
            .iter()
            .filter(|e| family == Family::Sweep || e.task.family() == family)
            .map(|e| self.resolve(e))
            .collect::<Result<_>>()?;
        if out.is_empty() {
            return Err(Error::Config("config has no experiment for this subcommand".into()));
        }
        Ok(out)
    }
}
