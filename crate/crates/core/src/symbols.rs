//! Hermitian matrix fields: potentials V(x), phase-space symbols H(x, ξ),
//! eigenvalue branches, gradients and a library of model potentials.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, hermitian_eigen, EigenBranchSet, HermitianMatrix, C64};

/// Amplitude below which a Gaussian tail is treated as zero.
const TAIL: f64 = 1e-12;

/// Standard bump exp(−1/(1−s²)) on |s| < 1.
pub fn bump(s: f64) -> f64 {
    let q = 1.0 - s * s;
    if q <= 0.0 {
        0.0
    } else {
        (-1.0 / q).exp()
    }
}

/// Derivative of [`bump`].
pub fn bump_deriv(s: f64) -> f64 {
    let q = 1.0 - s * s;
    if q <= 0.0 {
        0.0
    } else {
        (-1.0 / q).exp() * (-2.0 * s / (q * q))
    }
}

/// Matrix-valued function of x ∈ Rⁿ.
pub trait PotentialField: Send + Sync {
    fn eval(&self, x: &[f64]) -> HermitianMatrix;
    fn grad(&self, _x: &[f64]) -> Option<Vec<HermitianMatrix>> {
        None
    }
}

struct FnField<E, G> {
    eval: E,
    grad: Option<G>,
}

impl<E, G> PotentialField for FnField<E, G>
where
    E: Fn(&[f64]) -> HermitianMatrix + Send + Sync,
    G: Fn(&[f64]) -> Vec<HermitianMatrix> + Send + Sync,
{
    fn eval(&self, x: &[f64]) -> HermitianMatrix {
        (self.eval)(x)
    }
    fn grad(&self, x: &[f64]) -> Option<Vec<HermitianMatrix>> {
        self.grad.as_ref().map(|g| g(x))
    }
}

/// Serializable description of a model potential (n = 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// V ≡ diag(values); values must be non-decreasing.
    Constant { values: Vec<f64> },
    /// V = diag(offsets_k + amplitudes_k·exp(−((x − centers_k)/widths_k)²)).
    DiagonalBumps {
        amplitudes: Vec<f64>,
        centers: Vec<f64>,
        widths: Vec<f64>,
        #[serde(default)]
        offsets: Option<Vec<f64>>,
    },
    /// V = x e^{−x²} σ₃ + g e^{−x²} σ₁.
    AvoidedCrossing { gap: f64 },
    /// V = x e^{−x²} σ₃.
    ConicalCrossing,
    /// The two-channel reference potential.
    Reference,
    /// V = amplitude·exp(1 − 1/(1 − s²))·I_N with s = (x − center)/width.
    CompactBump {
        amplitude: f64,
        center: f64,
        width: f64,
        #[serde(default = "one")]
        channels: usize,
    },
}

fn one() -> usize {
    1
}

/// Smooth hermitian N×N field V(x) on Rⁿ with limit V∞.
#[derive(Clone)]
pub struct MatrixPotential {
    n: usize,
    channels: usize,
    v_infinity: HermitianMatrix,
    mu: f64,
    decay_radius: f64,
    constant: bool,
    field: Arc<dyn PotentialField>,
    spec: Option<ModelSpec>,
    radial_base: Option<Arc<MatrixPotential>>,
}

impl fmt::Debug for MatrixPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixPotential")
            .field("n", &self.n)
            .field("channels", &self.channels)
            .field("spec", &self.spec)
            .field("decay_radius", &self.decay_radius)
            .finish()
    }
}

fn check_v_infinity(v: &HermitianMatrix) -> Result<()> {
    if !v.is_diagonal() {
        return Err(Error::InvalidParameter("v_infinity must be diagonal".into()));
    }
    let d = v.diag_real();
    if d.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter(
            "v_infinity diagonal must be non-decreasing".into(),
        ));
    }
    Ok(())
}

impl MatrixPotential {
    /// Potential from closures. `decay_radius` bounds the region where
    /// ‖V − V∞‖ exceeds 1e-12.
    pub fn from_fn<E, G>(
        n: usize,
        v_infinity: HermitianMatrix,
        decay_radius: f64,
        eval: E,
        grad: Option<G>,
    ) -> Result<Self>
    where
        E: Fn(&[f64]) -> HermitianMatrix + Send + Sync + 'static,
        G: Fn(&[f64]) -> Vec<HermitianMatrix> + Send + Sync + 'static,
    {
        if n == 0 {
            return Err(Error::InvalidParameter("spatial dimension must be >= 1".into()));
        }
        check_v_infinity(&v_infinity)?;
        Ok(Self {
            n,
            channels: v_infinity.dim(),
            v_infinity,
            mu: f64::INFINITY,
            decay_radius,
            constant: false,
            field: Arc::new(FnField { eval, grad }),
            spec: None,
            radial_base: None,
        })
    }

    pub fn model(spec: &ModelSpec) -> Result<Self> {
        model_potential(spec)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn v_infinity(&self) -> &HermitianMatrix {
        &self.v_infinity
    }

    /// Diagonal entries e_{k,∞}.
    pub fn thresholds(&self) -> Vec<f64> {
        self.v_infinity.diag_real()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn decay_radius(&self) -> f64 {
        self.decay_radius
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn spec(&self) -> Option<&ModelSpec> {
        self.spec.as_ref()
    }

    pub fn radial_base(&self) -> Option<&MatrixPotential> {
        self.radial_base.as_deref()
    }

    pub fn eval(&self, x: &[f64]) -> HermitianMatrix {
        self.field.eval(x)
    }

    pub fn eval1(&self, x: f64) -> HermitianMatrix {
        self.field.eval(&[x])
    }

    pub fn has_analytic_grad(&self) -> bool {
        self.field.grad(&vec![0.0; self.n]).is_some()
    }

    /// ∂_{x_i}V, analytic when available, else central differences.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<HermitianMatrix>> {
        if let Some(g) = self.field.grad(x) {
            return Ok(g);
        }
        central_difference(|y| self.eval(y), x)
    }

    /// Eigenvalue branches e_1 ≤ … ≤ e_N at x.
    pub fn branches(&self, x: &[f64]) -> EigenBranchSet {
        hermitian_eigen(&self.eval(x))
    }

    pub fn branch_values(&self, x: &[f64]) -> Vec<f64> {
        eigenvalues(&self.eval(x))
    }

    /// The radial potential V(|x|) on Rⁿ built from a one-dimensional profile.
    pub fn radialize(&self, n: usize) -> Result<Self> {
        if self.n != 1 {
            return Err(Error::InvalidParameter("radial profile must be one-dimensional".into()));
        }
        if n == 1 {
            return Ok(self.clone());
        }
        let base = Arc::new(self.clone());
        let b1 = base.clone();
        let b2 = base.clone();
        let mut out = Self::from_fn(
            n,
            self.v_infinity.clone(),
            self.decay_radius,
            move |x: &[f64]| {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                b1.eval1(r)
            },
            Some(move |x: &[f64]| {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let d = b2.grad(&[r]).expect("radial profile gradient")[0].clone();
                x.iter()
                    .map(|&xi| if r > 0.0 { d.scale(xi / r) } else { HermitianMatrix::zeros(d.dim()) })
                    .collect()
            }),
        )?;
        out.radial_base = Some(base);
        out.constant = self.constant;
        Ok(out)
    }

    /// Fitted C in ‖V(x) − V∞‖ ≤ C⟨x⟩^{−μ} over the sample points.
    pub fn decay_constant(&self, mu: f64, samples: &[Vec<f64>]) -> f64 {
        samples
            .iter()
            .map(|x| {
                let jx = (1.0 + x.iter().map(|v| v * v).sum::<f64>()).sqrt();
                self.eval(x).sub(&self.v_infinity).norm() * jx.powf(mu)
            })
            .fold(0.0, f64::max)
    }
}

/// Central differences with step 1e-5·(1 + |x|).
pub fn central_difference<F: Fn(&[f64]) -> HermitianMatrix>(f: F, x: &[f64]) -> Result<Vec<HermitianMatrix>> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let step = 1e-5 * (1.0 + norm);
    let mut out = Vec::with_capacity(x.len());
    let mut y = x.to_vec();
    for i in 0..x.len() {
        let (p, m) = (x[i] + step, x[i] - step);
        if p == x[i] || m == x[i] || !(p - m).is_finite() {
            return Err(Error::StepUnderflow(norm));
        }
        y[i] = p;
        let fp = f(&y);
        y[i] = m;
        let fm = f(&y);
        y[i] = x[i];
        out.push(HermitianMatrix::from_computed(
            (fp.matrix() - fm.matrix()) / C64::new(p - m, 0.0),
        ));
    }
    Ok(out)
}

fn gauss(x: f64, c: f64, w: f64) -> (f64, f64) {
    let s = (x - c) / w;
    let g = (-s * s).exp();
    (g, -2.0 * s / w * g)
}

fn tail_radius(amp: f64, center: f64, width: f64) -> f64 {
    if amp.abs() <= TAIL {
        return center.abs();
    }
    center.abs() + width * (amp.abs() / TAIL).ln().sqrt()
}

fn sorted(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] <= w[1])
}

/// Builds a model potential with analytic gradients.
pub fn model_potential(spec: &ModelSpec) -> Result<MatrixPotential> {
    let mut pot = match spec {
        ModelSpec::Constant { values } => {
            if values.is_empty() {
                return Err(Error::InvalidParameter("N must be >= 1".into()));
            }
            if !sorted(values) {
                return Err(Error::InvalidParameter("constant values must be non-decreasing".into()));
            }
            let v = HermitianMatrix::diagonal(values);
            let n = values.len();
            let v2 = v.clone();
            let mut p = MatrixPotential::from_fn(
                1,
                v.clone(),
                0.0,
                move |_x: &[f64]| v2.clone(),
                Some(move |_x: &[f64]| vec![HermitianMatrix::zeros(n)]),
            )?;
            p.constant = true;
            p
        }
        ModelSpec::DiagonalBumps {
            amplitudes,
            centers,
            widths,
            offsets,
        } => {
            let n = amplitudes.len();
            if n == 0 {
                return Err(Error::InvalidParameter("N must be >= 1".into()));
            }
            if centers.len() != n || widths.len() != n {
                return Err(Error::InvalidParameter(
                    "amplitudes, centers and widths need equal length".into(),
                ));
            }
            if widths.iter().any(|&w| w <= 0.0) {
                return Err(Error::InvalidParameter("widths must be positive".into()));
            }
            let off = offsets.clone().unwrap_or_else(|| vec![0.0; n]);
            if off.len() != n || !sorted(&off) {
                return Err(Error::InvalidParameter("offsets must have length N and be non-decreasing".into()));
            }
            let radius = (0..n)
                .map(|k| tail_radius(amplitudes[k], centers[k], widths[k]))
                .fold(0.0, f64::max);
            let (a, c, w, o) = (amplitudes.clone(), centers.clone(), widths.clone(), off.clone());
            let (a2, c2, w2) = (a.clone(), c.clone(), w.clone());
            MatrixPotential::from_fn(
                1,
                HermitianMatrix::diagonal(&off),
                radius,
                move |x: &[f64]| {
                    let d: Vec<f64> = (0..a.len()).map(|k| o[k] + a[k] * gauss(x[0], c[k], w[k]).0).collect();
                    HermitianMatrix::diagonal(&d)
                },
                Some(move |x: &[f64]| {
                    let d: Vec<f64> = (0..a2.len()).map(|k| a2[k] * gauss(x[0], c2[k], w2[k]).1).collect();
                    vec![HermitianMatrix::diagonal(&d)]
                }),
            )?
        }
        ModelSpec::AvoidedCrossing { gap } => {
            let g = *gap;
            MatrixPotential::from_fn(
                1,
                HermitianMatrix::zeros(2),
                tail_radius(1.0 + g.abs(), 0.0, 1.0) + 1.0,
                move |x: &[f64]| {
                    let e = (-x[0] * x[0]).exp();
                    HermitianMatrix::real2(x[0] * e, g * e, -x[0] * e)
                },
                Some(move |x: &[f64]| {
                    let e = (-x[0] * x[0]).exp();
                    let d3 = (1.0 - 2.0 * x[0] * x[0]) * e;
                    let d1 = -2.0 * x[0] * g * e;
                    vec![HermitianMatrix::real2(d3, d1, -d3)]
                }),
            )?
        }
        ModelSpec::ConicalCrossing => MatrixPotential::from_fn(
            1,
            HermitianMatrix::zeros(2),
            tail_radius(1.0, 0.0, 1.0) + 1.0,
            |x: &[f64]| {
                let v = x[0] * (-x[0] * x[0]).exp();
                HermitianMatrix::real2(v, 0.0, -v)
            },
            Some(|x: &[f64]| {
                let d = (1.0 - 2.0 * x[0] * x[0]) * (-x[0] * x[0]).exp();
                vec![HermitianMatrix::real2(d, 0.0, -d)]
            }),
        )?,
        ModelSpec::Reference => reference_potential(),
        ModelSpec::CompactBump {
            amplitude,
            center,
            width,
            channels,
        } => {
            if *channels < 1 {
                return Err(Error::InvalidParameter("N must be >= 1".into()));
            }
            if *width <= 0.0 {
                return Err(Error::InvalidParameter("width must be positive".into()));
            }
            let (a, c, w, n) = (*amplitude, *center, *width, *channels);
            MatrixPotential::from_fn(
                1,
                HermitianMatrix::zeros(n),
                c.abs() + w,
                move |x: &[f64]| HermitianMatrix::identity(n).scale(a * std::f64::consts::E * bump((x[0] - c) / w)),
                Some(move |x: &[f64]| {
                    vec![HermitianMatrix::identity(n).scale(a * std::f64::consts::E * bump_deriv((x[0] - c) / w) / w)]
                }),
            )?
        }
    };
    pot.spec = Some(spec.clone());
    Ok(pot)
}

/// V_ref(x) = [[−e^{−x²}, ½e^{−x²}], [½e^{−x²}, ½e^{−(x−1)²}]], V∞ = 0.
pub fn reference_potential() -> MatrixPotential {
    let mut p = MatrixPotential::from_fn(
        1,
        HermitianMatrix::zeros(2),
        1.0 + (1.0 / TAIL).ln().sqrt(),
        |x: &[f64]| {
            let g = (-x[0] * x[0]).exp();
            let g1 = (-(x[0] - 1.0) * (x[0] - 1.0)).exp();
            HermitianMatrix::real2(-g, 0.5 * g, 0.5 * g1)
        },
        Some(|x: &[f64]| {
            let x0 = x[0];
            let dg = -2.0 * x0 * (-x0 * x0).exp();
            let dg1 = -2.0 * (x0 - 1.0) * (-(x0 - 1.0) * (x0 - 1.0)).exp();
            vec![HermitianMatrix::real2(-dg, 0.5 * dg, 0.5 * dg1)]
        }),
    )
    .expect("reference potential is well formed");
    p.spec = Some(ModelSpec::Reference);
    p
}

/// Phase-space symbol H(ρ), ρ = (x, ξ) ∈ R^{2n}.
pub trait SymbolField: Send + Sync {
    fn n(&self) -> usize;
    fn channels(&self) -> usize;
    fn eval(&self, rho: &[f64]) -> HermitianMatrix;
    fn grad(&self, _rho: &[f64]) -> Option<Vec<HermitianMatrix>> {
        None
    }
}

struct Schrodinger {
    v: MatrixPotential,
}

impl SymbolField for Schrodinger {
    fn n(&self) -> usize {
        self.v.n()
    }
    fn channels(&self) -> usize {
        self.v.channels()
    }
    fn eval(&self, rho: &[f64]) -> HermitianMatrix {
        let n = self.v.n();
        let xi2: f64 = rho[n..].iter().map(|v| v * v).sum();
        self.v.eval(&rho[..n]).add_scaled_identity(xi2)
    }
    fn grad(&self, rho: &[f64]) -> Option<Vec<HermitianMatrix>> {
        let n = self.v.n();
        let mut g = self.v.grad(&rho[..n]).ok()?;
        for i in 0..n {
            g.push(HermitianMatrix::identity(self.v.channels()).scale(2.0 * rho[n + i]));
        }
        Some(g)
    }
}

struct Affine {
    base: MatrixSymbol,
    shift: f64,
    scale: f64,
}

impl SymbolField for Affine {
    fn n(&self) -> usize {
        self.base.n()
    }
    fn channels(&self) -> usize {
        self.base.channels()
    }
    fn eval(&self, rho: &[f64]) -> HermitianMatrix {
        self.base.eval(rho).scale(self.scale).add_scaled_identity(self.shift)
    }
    fn grad(&self, rho: &[f64]) -> Option<Vec<HermitianMatrix>> {
        self.base
            .inner
            .grad(rho)
            .map(|g| g.into_iter().map(|m| m.scale(self.scale)).collect())
    }
}

struct FnSymbol<E, G> {
    n: usize,
    channels: usize,
    eval: E,
    grad: Option<G>,
}

impl<E, G> SymbolField for FnSymbol<E, G>
where
    E: Fn(&[f64]) -> HermitianMatrix + Send + Sync,
    G: Fn(&[f64]) -> Vec<HermitianMatrix> + Send + Sync,
{
    fn n(&self) -> usize {
        self.n
    }
    fn channels(&self) -> usize {
        self.channels
    }
    fn eval(&self, rho: &[f64]) -> HermitianMatrix {
        (self.eval)(rho)
    }
    fn grad(&self, rho: &[f64]) -> Option<Vec<HermitianMatrix>> {
        self.grad.as_ref().map(|g| g(rho))
    }
}

/// Shared handle to a phase-space symbol.
#[derive(Clone)]
pub struct MatrixSymbol {
    inner: Arc<dyn SymbolField>,
    potential: Option<MatrixPotential>,
    label: String,
}

impl fmt::Debug for MatrixSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MatrixSymbol({})", self.label)
    }
}

impl MatrixSymbol {
    pub fn new(inner: Arc<dyn SymbolField>, label: impl Into<String>) -> Self {
        Self {
            inner,
            potential: None,
            label: label.into(),
        }
    }

    /// p₁(x, ξ) = |ξ|² I_N + V(x).
    pub fn schrodinger(v: &MatrixPotential) -> Self {
        Self {
            inner: Arc::new(Schrodinger { v: v.clone() }),
            potential: Some(v.clone()),
            label: "schrodinger".into(),
        }
    }

    /// τ₀·I − p.
    pub fn energy_shifted(p: &MatrixSymbol, tau0: f64) -> Self {
        Self {
            inner: Arc::new(Affine {
                base: p.clone(),
                shift: tau0,
                scale: -1.0,
            }),
            potential: p.potential.clone(),
            label: format!("{tau0} - {}", p.label),
        }
    }

    /// s·H.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            inner: Arc::new(Affine {
                base: self.clone(),
                shift: 0.0,
                scale: s,
            }),
            potential: None,
            label: format!("{s} * {}", self.label),
        }
    }

    pub fn from_fn<E, G>(n: usize, channels: usize, eval: E, grad: Option<G>) -> Self
    where
        E: Fn(&[f64]) -> HermitianMatrix + Send + Sync + 'static,
        G: Fn(&[f64]) -> Vec<HermitianMatrix> + Send + Sync + 'static,
    {
        Self::new(
            Arc::new(FnSymbol {
                n,
                channels,
                eval,
                grad,
            }),
            "custom",
        )
    }

    pub fn n(&self) -> usize {
        self.inner.n()
    }

    pub fn channels(&self) -> usize {
        self.inner.channels()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The potential behind a Schrödinger symbol (or an energy shift of one).
    pub fn potential(&self) -> Option<&MatrixPotential> {
        self.potential.as_ref()
    }

    pub fn eval(&self, rho: &[f64]) -> HermitianMatrix {
        self.inner.eval(rho)
    }

    pub fn analytic_grad(&self, rho: &[f64]) -> Option<Vec<HermitianMatrix>> {
        self.inner.grad(rho)
    }

    pub fn branch_values(&self, rho: &[f64]) -> Vec<f64> {
        eigenvalues(&self.eval(rho))
    }
}

/// ∇_{x,ξ}H at ρ: analytic when the symbol provides it, otherwise central
/// differences with step 1e-5·(1 + |ρ|).
pub fn symbol_gradient(h: &MatrixSymbol, rho: &[f64]) -> Result<Vec<HermitianMatrix>> {
    if rho.len() != 2 * h.n() {
        return Err(Error::Dimension {
            expected: 2 * h.n(),
            got: rho.len(),
        });
    }
    if let Some(g) = h.analytic_grad(rho) {
        return Ok(g);
    }
    finite_difference_gradient(h, rho)
}

pub fn finite_difference_gradient(h: &MatrixSymbol, rho: &[f64]) -> Result<Vec<HermitianMatrix>> {
    central_difference(|y| h.eval(y), rho)
}

/// Σ_i T_i ∂_iH(ρ).
pub fn directional_derivative(h: &MatrixSymbol, rho: &[f64], t: &[f64]) -> Result<HermitianMatrix> {
    let g = symbol_gradient(h, rho)?;
    let mut out = HermitianMatrix::zeros(h.channels());
    for (gi, ti) in g.iter().zip(t) {
        if *ti != 0.0 {
            out = out.add(&gi.scale(*ti));
        }
    }
    Ok(out)
}

/// Eigenvalue branches of V at x.
pub fn branches(v: &MatrixPotential, x: &[f64]) -> EigenBranchSet {
    v.branches(x)
}

/// One-dimensional bump profile b((t − center)/halfwidth).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub center: f64,
    pub halfwidth: f64,
}

impl Profile {
    pub fn eval(&self, t: f64) -> f64 {
        bump((t - self.center) / self.halfwidth)
    }
    pub fn support(&self) -> (f64, f64) {
        (self.center - self.halfwidth, self.center + self.halfwidth)
    }
}

/// Compactly supported phase-space cutoff χ(x, ξ) for n = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhaseCutoff {
    /// χ = g(x)·k(ξ).
    Product { x: Profile, xi: Profile },
    /// χ = b(|ρ − center|/radius).
    Radial { center: [f64; 2], radius: f64 },
    Zero,
}

impl PhaseCutoff {
    pub fn eval(&self, x: f64, xi: f64) -> f64 {
        match self {
            PhaseCutoff::Product { x: g, xi: k } => {
                let a = g.eval(x);
                if a == 0.0 {
                    0.0
                } else {
                    a * k.eval(xi)
                }
            }
            PhaseCutoff::Radial { center, radius } => {
                let r = ((x - center[0]).powi(2) + (xi - center[1]).powi(2)).sqrt();
                bump(r / radius)
            }
            PhaseCutoff::Zero => 0.0,
        }
    }

    /// Support box (x_lo, x_hi, ξ_lo, ξ_hi); empty box for the zero cutoff.
    pub fn support(&self) -> (f64, f64, f64, f64) {
        match self {
            PhaseCutoff::Product { x, xi } => {
                let (a, b) = x.support();
                let (c, d) = xi.support();
                (a, b, c, d)
            }
            PhaseCutoff::Radial { center, radius } => (
                center[0] - radius,
                center[0] + radius,
                center[1] - radius,
                center[1] + radius,
            ),
            PhaseCutoff::Zero => (0.0, 0.0, 0.0, 0.0),
        }
    }

    /// ξ-support of the slice at fixed x (subset of the support box).
    pub fn xi_support_at(&self, x: f64) -> Option<(f64, f64)> {
        match self {
            PhaseCutoff::Product { x: g, xi } => {
                if g.eval(x) == 0.0 {
                    None
                } else {
                    Some(xi.support())
                }
            }
            PhaseCutoff::Radial { center, radius } => {
                let d = x - center[0];
                if d.abs() >= *radius {
                    None
                } else {
                    let w = (radius * radius - d * d).sqrt();
                    Some((center[1] - w, center[1] + w))
                }
            }
            PhaseCutoff::Zero => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, PhaseCutoff::Zero)
    }
}
