//! Checkers for microhyperbolicity, crossing conditions and escape functions,
//! the global extension of a microhyperbolic symbol, and boundary values of
//! resolvent integrals.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::linalg::{eigenvalues, hermitian_eigen, min_eigenvalue, HermitianMatrix, C64};
use crate::quadrature::{find_roots, integrate_best_effort, QuadParams};
use crate::symbols::{
    directional_derivative, symbol_gradient, MatrixPotential, MatrixSymbol, PhaseCutoff, SymbolField,
};

/// Largest C1 tried by the doubling search.
pub const C1_CAP: f64 = (1u64 << 20) as f64;

/// Unit vector T ∈ R^{2n}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Direction(Vec<f64>);

impl Direction {
    pub fn new(v: Vec<f64>) -> Result<Self, Error> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidParameter("direction must be a nonzero finite vector".into()));
        }
        Ok(Self(v.into_iter().map(|x| x / norm).collect()))
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn neg(&self) -> Self {
        Self(self.0.iter().map(|x| -x).collect())
    }
}

/// T is either one vector for all points or one per point.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum DirectionSpec {
    Global(Direction),
    PerPoint(Vec<Direction>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointFailure {
    pub rho: Vec<f64>,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branch: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MicrohyperbolicityCertificate {
    pub tau0: Option<f64>,
    #[serde(rename = "T")]
    pub t: DirectionSpec,
    #[serde(rename = "C0")]
    pub c0: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    pub margin: f64,
    pub n_points: usize,
    pub failures: Vec<PointFailure>,
    pub kernel_tol: f64,
    /// Smallest kernel-projected eigenvalue over points with a nonempty near-kernel.
    pub kernel_min: Option<f64>,
    #[serde(skip)]
    pub points: Vec<Vec<f64>>,
}

#[derive(Debug, Error)]
pub enum MhFailure {
    #[error("kernel-projected derivative is not positive at {rho:?} (min eigenvalue {kernel_min:.3e})")]
    NotPositive { rho: Vec<f64>, kernel_min: f64 },
    #[error("C1 doubling search exhausted at {rho:?}: best C0 {best_c0:.3e}, slack {best_slack:.3e}")]
    SearchExhausted {
        rho: Vec<f64>,
        best_c0: f64,
        best_slack: f64,
    },
    #[error("no direction with positive kernel derivative at {rho:?} (best {best:.3e})")]
    NoDirection { rho: Vec<f64>, best: f64 },
    #[error("energy shell sample is empty")]
    EmptyShell,
    #[error("no level touches tau0 = {tau0} at x0 = {x0:?}")]
    NoLevelTouches { x0: Vec<f64>, tau0: f64 },
    #[error("{} of {n_points} sampled points fail", failures.len())]
    Points {
        failures: Vec<PointFailure>,
        n_points: usize,
    },
    #[error("extension check failed after {halvings} halvings: worst slack {worst_slack:.3e}")]
    Extension { worst_slack: f64, halvings: usize },
    #[error(transparent)]
    Invalid(#[from] Error),
}

impl MhFailure {
    /// Offending points, for reports.
    pub fn failures(&self) -> Vec<PointFailure> {
        match self {
            MhFailure::NotPositive { rho, kernel_min } => vec![PointFailure {
                rho: rho.clone(),
                value: *kernel_min,
                branch: None,
            }],
            MhFailure::SearchExhausted { rho, best_slack, .. } => vec![PointFailure {
                rho: rho.clone(),
                value: *best_slack,
                branch: None,
            }],
            MhFailure::NoDirection { rho, best } => vec![PointFailure {
                rho: rho.clone(),
                value: *best,
                branch: None,
            }],
            MhFailure::Points { failures, .. } => failures.clone(),
            _ => Vec::new(),
        }
    }
}

pub fn default_kernel_tol(h: &HermitianMatrix) -> f64 {
    1e-8 * h.norm() + 1e-12
}

/// Positivity threshold for a kernel-projected minimum eigenvalue.
fn positivity_floor(grads: &[HermitianMatrix]) -> f64 {
    1e-9 * grads.iter().map(|g| g.max_abs()).fold(1.0, f64::max)
}

/// Columns spanning the near-kernel {v_k : |λ_k| ≤ κ}.
fn kernel_basis(h: &HermitianMatrix, kappa: f64) -> (DMatrix<C64>, Vec<f64>) {
    let e = hermitian_eigen(h);
    let idx: Vec<usize> = (0..e.values.len()).filter(|&k| e.values[k].abs() <= kappa).collect();
    let q = DMatrix::from_fn(h.dim(), idx.len(), |r, c| e.vectors[(r, idx[c])]);
    (q, e.values)
}

/// min-eig(⟨T,∇H(ρ)⟩ + C1·H*H − C0·I).
pub fn check_definition(h: &MatrixSymbol, rho: &[f64], t: &Direction, c0: f64, c1: f64) -> Result<f64, Error> {
    let d = directional_derivative(h, rho, t.components())?;
    let hv = h.eval(rho);
    Ok(slack_of(&d, &hv.square(), c0, c1))
}

fn slack_of(d: &HermitianMatrix, h2: &HermitianMatrix, c0: f64, c1: f64) -> f64 {
    min_eigenvalue(&d.add(&h2.scale(c1)).add_scaled_identity(-c0))
}

fn c1_ladder() -> impl Iterator<Item = f64> {
    (0..=20).map(|k| (1u64 << k) as f64)
}

struct PointCheck {
    c0: f64,
    c1: f64,
    slack: f64,
    kernel_min: Option<f64>,
}

fn pointwise(h: &MatrixSymbol, rho: &[f64], t: &Direction, kappa: Option<f64>) -> Result<(PointCheck, f64), MhFailure> {
    if h.channels() == 0 || rho.is_empty() {
        return Err(Error::InvalidParameter("zero-dimensional input".into()).into());
    }
    if t.components().len() != rho.len() {
        return Err(Error::Dimension {
            expected: rho.len(),
            got: t.components().len(),
        }
        .into());
    }
    let hv = h.eval(rho);
    let kappa = kappa.unwrap_or_else(|| default_kernel_tol(&hv));
    let grads = symbol_gradient(h, rho)?;
    let mut d = HermitianMatrix::zeros(h.channels());
    for (g, ti) in grads.iter().zip(t.components()) {
        d = d.add(&g.scale(*ti));
    }
    let h2 = hv.square();
    let (q, _) = kernel_basis(&hv, kappa);
    let floor = positivity_floor(&grads);
    if q.ncols() > 0 {
        let c = min_eigenvalue(&d.project(&q));
        if c <= floor {
            return Err(MhFailure::NotPositive {
                rho: rho.to_vec(),
                kernel_min: c,
            });
        }
        let c0 = 0.5 * c;
        let mut best = f64::NEG_INFINITY;
        for c1 in c1_ladder() {
            let s = slack_of(&d, &h2, c0, c1);
            if s >= 0.0 {
                return Ok((
                    PointCheck {
                        c0,
                        c1,
                        slack: s,
                        kernel_min: Some(c),
                    },
                    kappa,
                ));
            }
            best = best.max(s);
        }
        Err(MhFailure::SearchExhausted {
            rho: rho.to_vec(),
            best_c0: c0,
            best_slack: best,
        })
    } else {
        let mut best = f64::NEG_INFINITY;
        for c1 in c1_ladder() {
            let m = slack_of(&d, &h2, 0.0, c1);
            if m > floor {
                return Ok((
                    PointCheck {
                        c0: 0.5 * m,
                        c1,
                        slack: 0.5 * m,
                        kernel_min: None,
                    },
                    kappa,
                ));
            }
            best = best.max(m);
        }
        Err(MhFailure::SearchExhausted {
            rho: rho.to_vec(),
            best_c0: 0.5 * best,
            best_slack: best,
        })
    }
}

/// Kernel-restricted positivity test at ρ0 in direction T.
pub fn check_pointwise(
    h: &MatrixSymbol,
    rho0: &[f64],
    t: &Direction,
    kernel_tol: Option<f64>,
) -> Result<MicrohyperbolicityCertificate, MhFailure> {
    let (p, kappa) = pointwise(h, rho0, t, kernel_tol)?;
    Ok(MicrohyperbolicityCertificate {
        tau0: None,
        t: DirectionSpec::Global(t.clone()),
        c0: p.c0,
        c1: p.c1,
        margin: p.slack,
        n_points: 1,
        failures: Vec::new(),
        kernel_tol: kappa,
        kernel_min: p.kernel_min,
        points: vec![rho0.to_vec()],
    })
}

/// Maximizes T ↦ min-eig(Σ T_i S_i) over the unit sphere.
fn maximize_min_eig(s: &[HermitianMatrix]) -> (Vec<f64>, f64) {
    let d = s.len();
    let objective = |t: &[f64]| {
        let mut m = HermitianMatrix::zeros(s[0].dim());
        for (si, ti) in s.iter().zip(t) {
            m = m.add(&si.scale(*ti));
        }
        min_eigenvalue(&m)
    };
    if d == 1 {
        let (p, m) = (objective(&[1.0]), objective(&[-1.0]));
        return if p >= m { (vec![1.0], p) } else { (vec![-1.0], m) };
    }
    if d == 2 {
        let n = 256;
        let at = |th: f64| [th.cos(), th.sin()];
        let mut best = (0.0, f64::NEG_INFINITY);
        for i in 0..n {
            let th = 2.0 * PI * i as f64 / n as f64;
            let v = objective(&at(th));
            if v > best.1 {
                best = (th, v);
            }
        }
        let step = 2.0 * PI / n as f64;
        let (mut a, mut b) = (best.0 - step, best.0 + step);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - g * (b - a);
        let mut e = a + g * (b - a);
        let (mut fc, mut fe) = (objective(&at(c)), objective(&at(e)));
        for _ in 0..40 {
            if fc > fe {
                b = e;
                e = c;
                fe = fc;
                c = b - g * (b - a);
                fc = objective(&at(c));
            } else {
                a = c;
                c = e;
                fc = fe;
                e = a + g * (b - a);
                fe = objective(&at(e));
            }
        }
        let th = 0.5 * (a + b);
        let v = objective(&at(th));
        return if v >= best.1 {
            (at(th).to_vec(), v)
        } else {
            (at(best.0).to_vec(), best.1)
        };
    }
    // higher dimensions: best coordinate-pair seed, then projected supergradient ascent
    let mut seeds: Vec<Vec<f64>> = Vec::new();
    for i in 0..d {
        for sgn in [1.0, -1.0] {
            let mut v = vec![0.0; d];
            v[i] = sgn;
            seeds.push(v);
        }
        for j in (i + 1)..d {
            for (a, b) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut v = vec![0.0; d];
                v[i] = a * std::f64::consts::FRAC_1_SQRT_2;
                v[j] = b * std::f64::consts::FRAC_1_SQRT_2;
                seeds.push(v);
            }
        }
    }
    let mut best = (seeds[0].clone(), objective(&seeds[0]));
    for sd in &seeds[1..] {
        let v = objective(sd);
        if v > best.1 {
            best = (sd.clone(), v);
        }
    }
    let mut t = best.0.clone();
    for k in 1..=400 {
        let mut m = HermitianMatrix::zeros(s[0].dim());
        for (si, ti) in s.iter().zip(&t) {
            m = m.add(&si.scale(*ti));
        }
        let e = hermitian_eigen(&m);
        let v = e.vector(0);
        let grad: Vec<f64> = s.iter().map(|si| (v.adjoint() * si.matrix() * &v)[(0, 0)].re).collect();
        let step = 0.5 / k as f64;
        let mut nt: Vec<f64> = t.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
        let norm = nt.iter().map(|x| x * x).sum::<f64>().sqrt();
        nt.iter_mut().for_each(|x| *x /= norm);
        t = nt;
        let val = objective(&t);
        if val > best.1 {
            best = (t.clone(), val);
        }
    }
    best
}

/// Direction maximizing the kernel-projected minimum eigenvalue of ⟨T, ∇H(ρ0)⟩.
pub fn find_direction(h: &MatrixSymbol, rho0: &[f64], kernel_tol: Option<f64>) -> Result<Direction, MhFailure> {
    let (t, v) = best_direction(h, rho0, kernel_tol)?;
    let grads = symbol_gradient(h, rho0)?;
    if v <= positivity_floor(&grads) {
        return Err(MhFailure::NoDirection {
            rho: rho0.to_vec(),
            best: v,
        });
    }
    Ok(Direction::new(t)?)
}

fn best_direction(h: &MatrixSymbol, rho0: &[f64], kernel_tol: Option<f64>) -> Result<(Vec<f64>, f64), MhFailure> {
    let hv = h.eval(rho0);
    let kappa = kernel_tol.unwrap_or_else(|| default_kernel_tol(&hv));
    let (q, _) = kernel_basis(&hv, kappa);
    let grads = symbol_gradient(h, rho0)?;
    let s: Vec<HermitianMatrix> = if q.ncols() > 0 {
        grads.iter().map(|g| g.project(&q)).collect()
    } else {
        grads
    };
    Ok(maximize_min_eig(&s))
}

/// Axis-aligned box in phase space (or in x-space for escape checks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl PhaseBox {
    pub fn square(half: f64, dims: usize) -> Self {
        Self {
            lo: vec![-half; dims],
            hi: vec![half; dims],
        }
    }

    /// Uniform tensor grid with `per_axis` nodes per axis.
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let d = self.lo.len();
        let axis = |i: usize, k: usize| {
            if per_axis == 1 {
                0.5 * (self.lo[i] + self.hi[i])
            } else {
                self.lo[i] + (self.hi[i] - self.lo[i]) * k as f64 / (per_axis - 1) as f64
            }
        };
        let total = per_axis.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                let mut p = vec![0.0; d];
                for i in (0..d).rev() {
                    p[i] = axis(i, idx % per_axis);
                    idx /= per_axis;
                }
                p
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionMode {
    FixedT,
    PerPointT,
}

pub fn default_shell_tol(tau0: f64) -> f64 {
    0.05 * (1.0 + tau0.abs())
}

/// Grid points of `bx` within `shell_tol` of the energy shell of p at τ0.
pub fn shell_points(p: &MatrixSymbol, tau0: f64, bx: &PhaseBox, shell_tol: f64, per_axis: usize) -> Vec<Vec<f64>> {
    bx.grid(per_axis)
        .into_par_iter()
        .filter(|rho| {
            p.branch_values(rho)
                .iter()
                .any(|&l| (tau0 - l).abs() <= shell_tol)
        })
        .collect()
}

/// Microhyperbolicity of τ0 − p on a thickened energy shell. The near-kernel
/// threshold on the shell is the shell tolerance.
pub fn check_on_energy_shell(
    p: &MatrixSymbol,
    tau0: f64,
    bx: &PhaseBox,
    shell_tol: f64,
    mode: DirectionMode,
    fixed_t: Option<&Direction>,
    per_axis: usize,
) -> Result<MicrohyperbolicityCertificate, MhFailure> {
    if bx.lo.len() != 2 * p.n() {
        return Err(Error::Dimension {
            expected: 2 * p.n(),
            got: bx.lo.len(),
        }
        .into());
    }
    let h = MatrixSymbol::energy_shifted(p, tau0);
    let points = shell_points(p, tau0, bx, shell_tol, per_axis);
    if points.is_empty() {
        return Err(MhFailure::EmptyShell);
    }
    let t_fixed = match mode {
        DirectionMode::FixedT => Some(
            fixed_t
                .cloned()
                .ok_or_else(|| Error::InvalidParameter("fixed_T mode needs a direction".into()))?,
        ),
        DirectionMode::PerPointT => None,
    };
    let results: Vec<Result<(Direction, PointCheck), MhFailure>> = points
        .par_iter()
        .map(|rho| {
            let t = match &t_fixed {
                Some(t) => t.clone(),
                None => {
                    let (v, _) = best_direction(&h, rho, Some(shell_tol))?;
                    Direction::new(v)?
                }
            };
            let (pc, _) = pointwise(&h, rho, &t, Some(shell_tol))?;
            Ok((t, pc))
        })
        .collect();
    let mut failures = Vec::new();
    let mut ok = Vec::new();
    for (rho, r) in points.iter().zip(results) {
        match r {
            Ok(v) => ok.push(v),
            Err(MhFailure::Invalid(e)) => return Err(MhFailure::Invalid(e)),
            Err(e) => {
                let mut f = e.failures();
                if f.is_empty() {
                    f.push(PointFailure {
                        rho: rho.clone(),
                        value: f64::NAN,
                        branch: None,
                    });
                }
                failures.extend(f);
            }
        }
    }
    if !failures.is_empty() {
        return Err(MhFailure::Points {
            failures,
            n_points: points.len(),
        });
    }
    let c0 = ok.iter().map(|(_, p)| p.c0).fold(f64::INFINITY, f64::min);
    let c1 = ok.iter().map(|(_, p)| p.c1).fold(0.0, f64::max);
    let kernel_min = ok
        .iter()
        .filter_map(|(_, p)| p.kernel_min)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))));
    let margins: Vec<f64> = points
        .par_iter()
        .zip(ok.par_iter())
        .map(|(rho, (t, _))| check_definition(&h, rho, t, c0, c1))
        .collect::<Result<Vec<f64>, Error>>()?;
    let margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let t = match t_fixed {
        Some(t) => DirectionSpec::Global(t),
        None => DirectionSpec::PerPoint(ok.into_iter().map(|(t, _)| t).collect()),
    };
    Ok(MicrohyperbolicityCertificate {
        tau0: Some(tau0),
        t,
        c0,
        c1,
        margin,
        n_points: points.len(),
        failures: Vec::new(),
        kernel_tol: shell_tol,
        kernel_min,
        points,
    })
}

/// Crossing condition: a unit T1 with ⟨T1, ∇V(x0)⟩ positive on ker(V(x0) − τ0).
/// Returns (T1, C) with the projected minimum eigenvalue equal to 1/C.
pub fn crossing_condition(v: &MatrixPotential, x0: &[f64], tau0: f64, tol: f64) -> Result<(Vec<f64>, f64), MhFailure> {
    let shifted = v.eval(x0).add_scaled_identity(-tau0);
    let (q, _) = kernel_basis(&shifted, tol);
    if q.ncols() == 0 {
        return Err(MhFailure::NoLevelTouches {
            x0: x0.to_vec(),
            tau0,
        });
    }
    let grads = v.grad(x0)?;
    let s: Vec<HermitianMatrix> = grads.iter().map(|g| g.project(&q)).collect();
    let (t, val) = maximize_min_eig(&s);
    if val <= positivity_floor(&grads) {
        return Err(MhFailure::NoDirection {
            rho: x0.to_vec(),
            best: val,
        });
    }
    Ok((t, 1.0 / val))
}

type ScalarFn = dyn Fn(&[f64]) -> (f64, Vec<f64>) + Send + Sync;

/// Scalar phase-space function G with its gradient (∂_x G, ∂_ξ G).
#[derive(Clone)]
pub enum EscapeFunction {
    /// G = scale·x·ξ.
    Dilation { scale: f64 },
    Custom(Arc<ScalarFn>),
}

impl std::fmt::Debug for EscapeFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EscapeFunction::Dilation { scale } => write!(f, "Dilation({scale})"),
            EscapeFunction::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl EscapeFunction {
    pub fn gradient(&self, rho: &[f64]) -> Vec<f64> {
        match self {
            EscapeFunction::Dilation { scale } => {
                let n = rho.len() / 2;
                let mut g = vec![0.0; 2 * n];
                for i in 0..n {
                    g[i] = scale * rho[n + i];
                    g[n + i] = scale * rho[i];
                }
                g
            }
            EscapeFunction::Custom(f) => f(rho).1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EscapeCertificate {
    pub tau0: f64,
    pub g_kind: String,
    #[serde(rename = "C")]
    pub c: f64,
    pub n_points: usize,
    pub shell_tol: f64,
    /// sup‖x·∇V/2‖ + sup‖V‖ over the sample (dilation only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sufficient_threshold: Option<f64>,
    pub worst: PointFailure,
    pub failures: Vec<PointFailure>,
}

/// Poisson bracket {p, G} = Σ ∂_ξp·∂_xG − ∂_xp·∂_ξG as a hermitian matrix.
pub fn poisson_bracket(p: &MatrixSymbol, g: &EscapeFunction, rho: &[f64]) -> Result<HermitianMatrix, Error> {
    let n = p.n();
    let dp = symbol_gradient(p, rho)?;
    let dg = g.gradient(rho);
    let mut out = HermitianMatrix::zeros(p.channels());
    for i in 0..n {
        out = out.add(&dp[n + i].scale(dg[i])).sub(&dp[i].scale(dg[n + i]));
    }
    Ok(out)
}

/// Exact shell samples (x, ±√(τ0 − e_k(x))) on a uniform x-grid, n = 1.
pub fn exact_shell_samples(v: &MatrixPotential, tau0: f64, x_lo: f64, x_hi: f64, nx: usize) -> Vec<(Vec<f64>, usize)> {
    let mut out = Vec::new();
    for i in 0..nx {
        let x = x_lo + (x_hi - x_lo) * i as f64 / (nx - 1) as f64;
        for (k, e) in v.branch_values(&[x]).into_iter().enumerate() {
            let r = tau0 - e;
            if r >= 0.0 {
                let xi = r.sqrt();
                out.push((vec![x, xi], k));
                if xi > 0.0 {
                    out.push((vec![x, -xi], k));
                }
            }
        }
    }
    out
}

/// Positivity of {p₁, G} on the energy shell of a one-dimensional Schrödinger symbol.
pub fn escape_check_general(
    p1: &MatrixSymbol,
    g: &EscapeFunction,
    tau0: f64,
    x_range: (f64, f64),
    nx: usize,
) -> Result<EscapeCertificate, MhFailure> {
    let v = p1
        .potential()
        .ok_or_else(|| Error::InvalidParameter("escape checks need a Schrodinger symbol".into()))?;
    if v.n() != 1 {
        return Err(Error::InvalidParameter("escape checks are one-dimensional".into()).into());
    }
    let samples = exact_shell_samples(v, tau0, x_range.0, x_range.1, nx);
    if samples.is_empty() {
        return Err(MhFailure::EmptyShell);
    }
    let vals: Vec<f64> = samples
        .par_iter()
        .map(|(rho, _)| poisson_bracket(p1, g, rho).map(|m| min_eigenvalue(&m)))
        .collect::<Result<Vec<_>, Error>>()?;
    let kind = match g {
        EscapeFunction::Dilation { .. } => "dilation_bracket",
        EscapeFunction::Custom(_) => "general",
    };
    finish_escape(tau0, kind, 0.0, None, &samples, &vals)
}

fn finish_escape(
    tau0: f64,
    kind: &str,
    tol: f64,
    threshold: Option<f64>,
    samples: &[(Vec<f64>, usize)],
    vals: &[f64],
) -> Result<EscapeCertificate, MhFailure> {
    let mut worst = 0usize;
    for (i, v) in vals.iter().enumerate() {
        if *v < vals[worst] {
            worst = i;
        }
    }
    let failures: Vec<PointFailure> = samples
        .iter()
        .zip(vals)
        .filter(|(_, v)| **v <= 0.0)
        .map(|((rho, k), v)| PointFailure {
            rho: rho.clone(),
            value: *v,
            branch: Some(*k),
        })
        .collect();
    if !failures.is_empty() {
        return Err(MhFailure::Points {
            failures,
            n_points: samples.len(),
        });
    }
    Ok(EscapeCertificate {
        tau0,
        g_kind: kind.into(),
        c: vals[worst],
        n_points: samples.len(),
        shell_tol: tol,
        sufficient_threshold: threshold,
        worst: PointFailure {
            rho: samples[worst].0.clone(),
            value: vals[worst],
            branch: Some(samples[worst].1),
        },
        failures: Vec::new(),
    })
}

/// min-eig(2(τ0 − e_k(x))·I − x·∇V(x)).
pub fn dilation_value(v: &MatrixPotential, x: &[f64], k: usize, tau0: f64) -> Result<f64, Error> {
    let e = v.branch_values(x)[k];
    let grads = v.grad(x)?;
    let mut m = HermitianMatrix::identity(v.channels()).scale(2.0 * (tau0 - e));
    for (g, xi) in grads.iter().zip(x) {
        m = m.sub(&g.scale(*xi));
    }
    Ok(min_eigenvalue(&m))
}

/// The dilation escape condition on the classically allowed region, n = 1.
pub fn escape_check_dilation(
    v: &MatrixPotential,
    tau0: f64,
    x_range: (f64, f64),
    nx: usize,
    allowed_tol: f64,
) -> Result<EscapeCertificate, MhFailure> {
    if v.n() != 1 {
        return Err(Error::InvalidParameter("escape checks are one-dimensional".into()).into());
    }
    let xs: Vec<f64> = (0..nx)
        .map(|i| x_range.0 + (x_range.1 - x_range.0) * i as f64 / (nx - 1) as f64)
        .collect();
    let per_x: Vec<(Vec<(Vec<f64>, usize)>, Vec<f64>, f64, f64)> = xs
        .par_iter()
        .map(|&x| {
            let vx = v.eval1(x);
            let g = v.grad(&[x])?;
            let e = eigenvalues(&vx);
            let mut s = Vec::new();
            let mut vals = Vec::new();
            for (k, ek) in e.iter().enumerate() {
                if tau0 - ek >= -allowed_tol {
                    s.push((vec![x], k));
                    vals.push(min_eigenvalue(
                        &HermitianMatrix::identity(v.channels())
                            .scale(2.0 * (tau0 - ek))
                            .sub(&g[0].scale(x)),
                    ));
                }
            }
            Ok((s, vals, 0.5 * g[0].scale(x).norm(), vx.sub(v.v_infinity()).norm().max(vx.norm())))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let mut samples = Vec::new();
    let mut vals = Vec::new();
    let (mut sup_xg, mut sup_v) = (0.0f64, 0.0f64);
    for (s, v, a, b) in per_x {
        samples.extend(s);
        vals.extend(v);
        sup_xg = sup_xg.max(a);
        sup_v = sup_v.max(b);
    }
    if samples.is_empty() {
        return Err(MhFailure::EmptyShell);
    }
    finish_escape(tau0, "dilation", allowed_tol, Some(sup_xg + sup_v), &samples, &vals)
}

/// H₀(ρ) = U_K (Σ_i (ρ − ρ0)_i ∂_i m₁₁) U_K* + U_K' diag(λ_K') U_K'*.
struct Linearized {
    n: usize,
    rho0: Vec<f64>,
    uk: DMatrix<C64>,
    grads: Vec<HermitianMatrix>,
    complement: HermitianMatrix,
    full_grads: Vec<HermitianMatrix>,
}

impl SymbolField for Linearized {
    fn n(&self) -> usize {
        self.n
    }
    fn channels(&self) -> usize {
        self.complement.dim()
    }
    fn eval(&self, rho: &[f64]) -> HermitianMatrix {
        if self.uk.ncols() == 0 {
            return self.complement.clone();
        }
        let r = self.uk.ncols();
        let mut a = HermitianMatrix::zeros(r);
        for (g, (x, x0)) in self.grads.iter().zip(rho.iter().zip(&self.rho0)) {
            a = a.add(&g.scale(x - x0));
        }
        HermitianMatrix::from_computed(&self.uk * a.matrix() * self.uk.adjoint()).add(&self.complement)
    }
    fn grad(&self, _rho: &[f64]) -> Option<Vec<HermitianMatrix>> {
        Some(self.full_grads.clone())
    }
}

/// Block linearization of H at ρ0 in the unitary eigenframe of H(ρ0).
pub fn linearized_block_symbol(h: &MatrixSymbol, rho0: &[f64], kernel_tol: Option<f64>) -> Result<MatrixSymbol, Error> {
    let hv = h.eval(rho0);
    let kappa = kernel_tol.unwrap_or_else(|| default_kernel_tol(&hv));
    let e = hermitian_eigen(&hv);
    if let Some(&amb) = e.values.iter().find(|l| l.abs() > kappa / 10.0 && l.abs() < 10.0 * kappa && l.abs() > kappa) {
        return Err(Error::AmbiguousKernel {
            eigenvalue: amb,
            kernel_tol: kappa,
        });
    }
    if let Some(&amb) = e.values.iter().find(|l| l.abs() > kappa / 10.0 && l.abs() <= kappa && l.abs() != 0.0) {
        return Err(Error::AmbiguousKernel {
            eigenvalue: amb,
            kernel_tol: kappa,
        });
    }
    let n_ch = hv.dim();
    let kidx: Vec<usize> = (0..n_ch).filter(|&k| e.values[k].abs() <= kappa).collect();
    let cidx: Vec<usize> = (0..n_ch).filter(|&k| e.values[k].abs() > kappa).collect();
    let uk = DMatrix::from_fn(n_ch, kidx.len(), |r, c| e.vectors[(r, kidx[c])]);
    let grads_full = symbol_gradient(h, rho0)?;
    let complement = if kidx.is_empty() {
        hv.clone()
    } else {
        let uc = DMatrix::from_fn(n_ch, cidx.len(), |r, c| e.vectors[(r, cidx[c])]);
        let d = DMatrix::from_fn(cidx.len(), cidx.len(), |i, j| {
            if i == j {
                C64::new(e.values[cidx[i]], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        HermitianMatrix::from_computed(&uc * d * uc.adjoint())
    };
    let grads: Vec<HermitianMatrix> = if kidx.is_empty() {
        Vec::new()
    } else {
        grads_full.iter().map(|g| g.project(&uk)).collect()
    };
    let full_grads = if kidx.is_empty() {
        vec![HermitianMatrix::zeros(n_ch); rho0.len()]
    } else if kidx.len() == n_ch {
        grads.iter().map(|g| HermitianMatrix::from_computed(&uk * g.matrix() * uk.adjoint())).collect()
    } else {
        grads.iter().map(|g| HermitianMatrix::from_computed(&uk * g.matrix() * uk.adjoint())).collect()
    };
    Ok(MatrixSymbol::new(
        Arc::new(Linearized {
            n: h.n(),
            rho0: rho0.to_vec(),
            uk,
            grads,
            complement,
            full_grads,
        }),
        "linearized",
    ))
}

/// S7(u) = 35u⁴ − 84u⁵ + 70u⁶ − 20u⁷, clamped to [0, 1].
pub fn smoothstep7(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u.powi(4) * (35.0 + u * (-84.0 + u * (70.0 - 20.0 * u)))
    }
}

fn smoothstep7_deriv(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        0.0
    } else {
        140.0 * u.powi(3) * (1.0 - u).powi(3)
    }
}

/// Radial cutoff: 1 on s ≤ 1, 0 on s ≥ 2.
pub fn radial_cutoff(s: f64) -> f64 {
    1.0 - smoothstep7(s - 1.0)
}

struct Extended {
    h: MatrixSymbol,
    h0: MatrixSymbol,
    rho0: Vec<f64>,
    delta: f64,
}

impl SymbolField for Extended {
    fn n(&self) -> usize {
        self.h.n()
    }
    fn channels(&self) -> usize {
        self.h.channels()
    }
    fn eval(&self, rho: &[f64]) -> HermitianMatrix {
        let r = dist(rho, &self.rho0);
        if r <= self.delta {
            return self.h.eval(rho);
        }
        let chi = radial_cutoff(r / self.delta);
        let h0 = self.h0.eval(rho);
        if chi == 0.0 {
            return h0;
        }
        self.h.eval(rho).sub(&h0).scale(chi).add(&h0)
    }
    fn grad(&self, rho: &[f64]) -> Option<Vec<HermitianMatrix>> {
        let r = dist(rho, &self.rho0);
        if r <= self.delta {
            return self.h.analytic_grad(rho);
        }
        let g0 = self.h0.analytic_grad(rho)?;
        let s = r / self.delta;
        let chi = radial_cutoff(s);
        if chi == 0.0 {
            return Some(g0);
        }
        let gh = self.h.analytic_grad(rho)?;
        let diff = self.h.eval(rho).sub(&self.h0.eval(rho));
        let dchi = -smoothstep7_deriv(s - 1.0) / (r * self.delta);
        Some(
            (0..rho.len())
                .map(|i| {
                    diff.scale(dchi * (rho[i] - self.rho0[i]))
                        .add(&gh[i].sub(&g0[i]).scale(chi))
                        .add(&g0[i])
                })
                .collect(),
        )
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtensionReport {
    pub delta: f64,
    pub halvings: usize,
    #[serde(rename = "C0")]
    pub c0: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    pub worst_slack: f64,
    pub n_points: usize,
}

/// Verification points: a polar (2n = 2) or tensor grid over |ρ − ρ0| ≤ 4δ
/// plus far-field samples.
pub fn verification_points(rho0: &[f64], delta: f64) -> Vec<Vec<f64>> {
    let d = rho0.len();
    let mut pts = vec![rho0.to_vec()];
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    if d == 2 {
        for a in 0..64 {
            let th = 2.0 * PI * a as f64 / 64.0;
            dirs.push(vec![th.cos(), th.sin()]);
        }
    } else {
        for i in 0..d {
            for s in [1.0, -1.0] {
                let mut v = vec![0.0; d];
                v[i] = s;
                dirs.push(v);
            }
            for j in (i + 1)..d {
                for (a, b) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    let mut v = vec![0.0; d];
                    v[i] = a * std::f64::consts::FRAC_1_SQRT_2;
                    v[j] = b * std::f64::consts::FRAC_1_SQRT_2;
                    dirs.push(v);
                }
            }
        }
    }
    let mut radii: Vec<f64> = (1..=40).map(|i| 4.0 * delta * i as f64 / 40.0).collect();
    radii.extend([6.0, 10.0, 20.0, 100.0, 1000.0].iter().map(|m| m * delta));
    for r in radii {
        for u in &dirs {
            pts.push(rho0.iter().zip(u).map(|(a, b)| a + r * b).collect());
        }
    }
    pts
}

/// Worst slack over `points` with C0 fixed and C1 doubled from `c1_start`.
/// Returns (worst slack, C1 used).
pub fn verify_symbol(h: &MatrixSymbol, points: &[Vec<f64>], t: &Direction, c0: f64, c1_start: f64) -> Result<(f64, f64), Error> {
    let pre: Vec<(HermitianMatrix, HermitianMatrix)> = points
        .par_iter()
        .map(|rho| {
            let d = directional_derivative(h, rho, t.components())?;
            Ok((d, h.eval(rho).square()))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let mut c1 = c1_start.max(1.0);
    let mut best = (f64::NEG_INFINITY, c1);
    loop {
        let worst = pre
            .par_iter()
            .map(|(d, h2)| slack_of(d, h2, c0, c1))
            .reduce(|| f64::INFINITY, f64::min);
        if worst > best.0 {
            best = (worst, c1);
        }
        if worst > 0.0 || c1 >= C1_CAP {
            return Ok(if worst > 0.0 { (worst, c1) } else { best });
        }
        c1 *= 2.0;
    }
}

/// H_δ = χ(|ρ − ρ0|/δ)(H − H₀) + H₀, with δ halved until the verification grid
/// is uniformly positive.
pub fn extend_to_global(
    h: &MatrixSymbol,
    rho0: &[f64],
    t: &Direction,
    delta0: f64,
    kernel_tol: Option<f64>,
) -> Result<(MatrixSymbol, ExtensionReport), MhFailure> {
    let cert = check_pointwise(h, rho0, t, kernel_tol)?;
    let h0 = linearized_block_symbol(h, rho0, Some(cert.kernel_tol))?;
    let c0 = 0.5 * cert.c0;
    let mut worst_seen = f64::NEG_INFINITY;
    for halvings in 0..=20usize {
        let delta = delta0 / (1u64 << halvings) as f64;
        let ext = extended(h, &h0, rho0, delta);
        let pts = verification_points(rho0, delta);
        let (worst, c1) = verify_symbol(&ext, &pts, t, c0, cert.c1)?;
        worst_seen = worst;
        if worst > 0.0 {
            return Ok((
                ext,
                ExtensionReport {
                    delta,
                    halvings,
                    c0,
                    c1,
                    worst_slack: worst,
                    n_points: pts.len(),
                },
            ));
        }
    }
    Err(MhFailure::Extension {
        worst_slack: worst_seen,
        halvings: 20,
    })
}

/// The symbol H_δ for a given δ (no verification).
pub fn extended(h: &MatrixSymbol, h0: &MatrixSymbol, rho0: &[f64], delta: f64) -> MatrixSymbol {
    MatrixSymbol::new(
        Arc::new(Extended {
            h: h.clone(),
            h0: h0.clone(),
            rho0: rho0.to_vec(),
            delta,
        }),
        format!("extended({})", h.label()),
    )
}

/// f(t) = t on |t| ≤ a, monotone, constant ±1.5a on |t| ≥ 2a.
pub fn flatten_fn(t: f64, a: f64) -> f64 {
    let s = t.abs();
    let v = if s <= a {
        s
    } else if s >= 2.0 * a {
        1.5 * a
    } else {
        let u = (s - a) / a;
        a + a * (u - u.powi(5) * (7.0 + u * (-14.0 + u * (10.0 - 2.5 * u))))
    };
    v.copysign(t)
}

fn flatten_deriv(t: f64, a: f64) -> f64 {
    let s = t.abs();
    if s <= a {
        1.0
    } else if s >= 2.0 * a {
        0.0
    } else {
        1.0 - smoothstep7((s - a) / a)
    }
}

struct Flattened {
    h: MatrixSymbol,
    a: f64,
}

impl SymbolField for Flattened {
    fn n(&self) -> usize {
        self.h.n()
    }
    fn channels(&self) -> usize {
        self.h.channels()
    }
    fn eval(&self, rho: &[f64]) -> HermitianMatrix {
        let hv = self.h.eval(rho);
        let e = hermitian_eigen(&hv);
        if e.values.iter().all(|l| l.abs() < self.a) {
            return hv;
        }
        let n = hv.dim();
        let d = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(flatten_fn(e.values[i], self.a), 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        HermitianMatrix::from_computed(&e.vectors * d * e.vectors.adjoint())
    }
    fn grad(&self, rho: &[f64]) -> Option<Vec<HermitianMatrix>> {
        let g = self.h.analytic_grad(rho)?;
        let hv = self.h.eval(rho);
        let e = hermitian_eigen(&hv);
        if e.values.iter().all(|l| l.abs() < self.a) {
            return Some(g);
        }
        let n = hv.dim();
        let l = &e.values;
        let f: Vec<f64> = l.iter().map(|&x| flatten_fn(x, self.a)).collect();
        let w = DMatrix::from_fn(n, n, |i, j| {
            let gap = l[i] - l[j];
            if gap.abs() > 1e-10 * (1.0 + l[i].abs()) {
                (f[i] - f[j]) / gap
            } else {
                0.5 * (flatten_deriv(l[i], self.a) + flatten_deriv(l[j], self.a))
            }
        });
        let u = &e.vectors;
        Some(
            g.iter()
                .map(|gi| {
                    let b = u.adjoint() * gi.matrix() * u;
                    let c = DMatrix::from_fn(n, n, |i, j| b[(i, j)] * w[(i, j)]);
                    HermitianMatrix::from_computed(u * c * u.adjoint())
                })
                .collect(),
        )
    }
}

/// ρ ↦ f(H(ρ)) with the flattening function of window radius a.
pub fn flatten_symbol(h: &MatrixSymbol, a: f64) -> Result<MatrixSymbol, Error> {
    if !(a > 0.0) {
        return Err(Error::InvalidParameter("flattening radius must be positive".into()));
    }
    Ok(MatrixSymbol::new(
        Arc::new(Flattened { h: h.clone(), a }),
        format!("flattened({})", h.label()),
    ))
}

/// Largest spectral radius of H over the verification points within |ρ − ρ0| ≤ δ.
pub fn local_spectral_radius(h: &MatrixSymbol, rho0: &[f64], delta: f64) -> f64 {
    verification_points(rho0, delta / 4.0)
        .iter()
        .filter(|p| dist(p, rho0) <= delta)
        .map(|p| h.eval(p).norm())
        .fold(0.0, f64::max)
}

/// Matrix G in F(z) = ∬ tr[(z − p)⁻¹ G (z − p)⁻¹] χ dρ.
#[derive(Clone)]
pub enum GIntegrand {
    Identity,
    /// G = z − p, which turns F into ∬ χ tr(z − p)⁻¹.
    ResolventFactor,
    Field(Arc<dyn Fn(&[f64]) -> HermitianMatrix + Send + Sync>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryParams {
    pub eps0: f64,
    pub levels: usize,
    pub depth: usize,
    pub atol: f64,
}

impl Default for BoundaryParams {
    fn default() -> Self {
        Self {
            eps0: 0.1,
            levels: 9,
            depth: 4,
            atol: 1e-11,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryValue {
    pub value: [f64; 2],
    pub error: f64,
    pub converged: bool,
    pub contraction: Vec<f64>,
    pub eps: Vec<f64>,
    pub raw: Vec<[f64; 2]>,
}

impl BoundaryValue {
    pub fn complex(&self) -> C64 {
        C64::new(self.value[0], self.value[1])
    }
}

fn resolvent_integral(
    p: &MatrixSymbol,
    g: &GIntegrand,
    chi: &PhaseCutoff,
    z: C64,
    atol: f64,
) -> Result<C64, Error> {
    let (x_lo, x_hi, _, _) = chi.support();
    if chi.is_zero() || x_lo >= x_hi {
        return Ok(C64::new(0.0, 0.0));
    }
    let tau = z.re;
    let eps = z.im.abs();
    let inner = |x: f64| -> C64 {
        let Some((a, b)) = chi.xi_support_at(x) else {
            return C64::new(0.0, 0.0);
        };
        let n_ch = p.channels();
        let mut breaks = Vec::new();
        for k in 0..n_ch {
            let roots = find_roots(|xi| p.branch_values(&[x, xi])[k] - tau, a, b, 256, 1e-13);
            for r in roots {
                breaks.push(r);
                for m in [4.0, 40.0] {
                    breaks.push(r - m * eps);
                    breaks.push(r + m * eps);
                }
            }
        }
        let f = |xi: f64| -> C64 {
            let w = chi.eval(x, xi);
            if w == 0.0 {
                return C64::new(0.0, 0.0);
            }
            let rho = [x, xi];
            let mut s = C64::new(0.0, 0.0);
            match g {
                GIntegrand::ResolventFactor => {
                    for l in p.branch_values(&rho) {
                        s += 1.0 / (z - l);
                    }
                }
                GIntegrand::Identity => {
                    for l in p.branch_values(&rho) {
                        s += 1.0 / ((z - l) * (z - l));
                    }
                }
                GIntegrand::Field(gf) => {
                    let e = hermitian_eigen(&p.eval(&rho));
                    let gm = gf(&rho);
                    for (k, l) in e.values.iter().enumerate() {
                        let v = e.vectors.column(k);
                        let q = (v.adjoint() * gm.matrix() * v)[(0, 0)];
                        s += q / ((z - l) * (z - l));
                    }
                }
            }
            s * w
        };
        // near a crossing the integrand may not resolve; keep the estimate and
        // let the extrapolation report non-convergence
        integrate_best_effort(f, a, b, &breaks, QuadParams::with_atol(atol * 0.1))
            .map(|(r, _)| r.value)
            .unwrap_or(C64::new(f64::NAN, f64::NAN))
    };
    let (r, _) = integrate_best_effort(inner, x_lo, x_hi, &[], QuadParams::with_atol(atol))?;
    if !r.value.re.is_finite() || !r.value.im.is_finite() {
        return Err(Error::Quadrature {
            value: f64::NAN,
            error: f64::NAN,
        });
    }
    Ok(r.value)
}

/// F(τ ± i0) by Richardson extrapolation of F(τ ± iε), ε = ε0/2^k, n = 1.
pub fn boundary_value_extrapolate(
    p: &MatrixSymbol,
    g: &GIntegrand,
    chi: &PhaseCutoff,
    tau: f64,
    side: Side,
    params: BoundaryParams,
) -> Result<BoundaryValue, Error> {
    if p.n() != 1 {
        return Err(Error::InvalidParameter("boundary values are computed for n = 1".into()));
    }
    let eps: Vec<f64> = (0..params.levels).map(|k| params.eps0 / (1u64 << k) as f64).collect();
    let raw: Vec<C64> = eps
        .par_iter()
        .map(|&e| resolvent_integral(p, g, chi, C64::new(tau, side.sign() * e), params.atol))
        .collect::<Result<Vec<_>, Error>>()?;
    // Richardson table for integer powers of ε, halving ratio 2
    let mut table: Vec<Vec<C64>> = Vec::new();
    for (k, v) in raw.iter().enumerate() {
        let mut row = vec![*v];
        for j in 1..=k.min(params.depth) {
            let f = (1u64 << j) as f64;
            let prev = &table[k - 1];
            row.push((row[j - 1] * f - prev[j - 1]) / (f - 1.0));
        }
        table.push(row);
    }
    let extrap: Vec<C64> = table.iter().map(|r| *r.last().unwrap()).collect();
    let diffs: Vec<f64> = extrap.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let contraction: Vec<f64> = diffs.windows(2).map(|w| w[0] / w[1]).collect();
    let value = *extrap.last().unwrap();
    let error = *diffs.last().unwrap_or(&0.0);
    let floor = 1e-9 * value.norm().max(1.0);
    let converged = error <= floor || contraction.last().is_some_and(|&c| c >= 1.5);
    Ok(BoundaryValue {
        value: [value.re, value.im],
        error,
        converged,
        contraction,
        eps,
        raw: raw.iter().map(|z| [z.re, z.im]).collect(),
    })
}
