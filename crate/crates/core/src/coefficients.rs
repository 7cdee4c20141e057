//! Leading semiclassical coefficients: c₀(f), γ₀(τ), a₀(τ) and the
//! phase-space localized γ₀^χ(τ).

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::eigenvalues;
use crate::microhyperbolicity::{boundary_value_extrapolate, BoundaryParams, GIntegrand, Side};
use crate::quadrature::{find_roots, integrate, QuadParams};
use crate::symbols::{bump, MatrixPotential, MatrixSymbol, PhaseCutoff};

/// Surface measure of the unit sphere in Rⁿ, n ∈ {1, 2, 3}.
pub fn omega(n: usize) -> Result<f64> {
    match n {
        1 => Ok(2.0),
        2 => Ok(2.0 * PI),
        3 => Ok(4.0 * PI),
        _ => Err(Error::InvalidParameter(format!("dimension n = {n} not supported (1..=3)"))),
    }
}

fn phi(y: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else {
        (-1.0 / y).exp()
    }
}

/// Smooth step: 0 for y ≤ 0, 1 for y ≥ 1.
pub fn smooth_step(y: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else if y >= 1.0 {
        1.0
    } else {
        let a = phi(y);
        a / (a + phi(1.0 - y))
    }
}

/// Compactly supported real test function f(τ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    /// exp(−1/(1−s²)) rescaled to [lo, hi].
    Bump { lo: f64, hi: f64 },
    /// ½(1 + cos) on [lo, hi]; only C¹.
    RaisedCosine { lo: f64, hi: f64 },
    /// 1 on [plateau_lo, plateau_hi], smooth transitions to 0 at lo and hi.
    Plateau {
        lo: f64,
        plateau_lo: f64,
        plateau_hi: f64,
        hi: f64,
    },
    Zero,
}

impl TestFunction {
    pub fn bump(lo: f64, hi: f64) -> Self {
        TestFunction::Bump { lo, hi }
    }

    pub fn plateau(lo: f64, plateau_lo: f64, plateau_hi: f64, hi: f64) -> Self {
        TestFunction::Plateau {
            lo,
            plateau_lo,
            plateau_hi,
            hi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            TestFunction::Bump { lo, hi } | TestFunction::RaisedCosine { lo, hi } => lo < hi,
            TestFunction::Plateau {
                lo,
                plateau_lo,
                plateau_hi,
                hi,
            } => lo < plateau_lo && plateau_lo <= plateau_hi && plateau_hi < hi,
            TestFunction::Zero => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("malformed test function {self:?}")))
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TestFunction::Bump { lo, hi } => {
                let c = 0.5 * (lo + hi);
                bump((t - c) / (0.5 * (hi - lo)))
            }
            TestFunction::RaisedCosine { lo, hi } => {
                if t <= lo || t >= hi {
                    0.0
                } else {
                    let s = (t - 0.5 * (lo + hi)) / (0.5 * (hi - lo));
                    0.5 * (1.0 + (PI * s).cos())
                }
            }
            TestFunction::Plateau {
                lo,
                plateau_lo,
                plateau_hi,
                hi,
            } => {
                if t <= lo || t >= hi {
                    0.0
                } else if t < plateau_lo {
                    smooth_step((t - lo) / (plateau_lo - lo))
                } else if t <= plateau_hi {
                    1.0
                } else {
                    smooth_step((hi - t) / (hi - plateau_hi))
                }
            }
            TestFunction::Zero => 0.0,
        }
    }

    /// Closed support [α, β]; `None` for the zero function.
    pub fn support(&self) -> Option<(f64, f64)> {
        match *self {
            TestFunction::Bump { lo, hi } | TestFunction::RaisedCosine { lo, hi } => Some((lo, hi)),
            TestFunction::Plateau { lo, hi, .. } => Some((lo, hi)),
            TestFunction::Zero => None,
        }
    }

    /// Points where f is not analytic (quadrature breakpoints).
    pub fn breaks(&self) -> Vec<f64> {
        match *self {
            TestFunction::Plateau {
                lo,
                plateau_lo,
                plateau_hi,
                hi,
            } => vec![lo, plateau_lo, plateau_hi, hi],
            TestFunction::Zero => vec![],
            TestFunction::Bump { lo, hi } | TestFunction::RaisedCosine { lo, hi } => vec![lo, hi],
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, TestFunction::Zero)
    }
}

/// Quadrature settings for the coefficient integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoeffParams {
    pub atol: f64,
    pub rtol: f64,
    /// Turning-point scan resolution over the integration box.
    pub scan: usize,
    /// Integration half-width; defaults to max(8, decay radius).
    pub r_int: Option<f64>,
    /// Minimal distance between τ and a threshold e_{k,∞}.
    pub threshold_tol: f64,
}

impl Default for CoeffParams {
    fn default() -> Self {
        Self {
            atol: 1e-10,
            rtol: 1e-12,
            scan: 2048,
            r_int: None,
            threshold_tol: 1e-6,
        }
    }
}

impl CoeffParams {
    fn quad(&self) -> QuadParams {
        QuadParams {
            atol: self.atol,
            rtol: self.rtol,
            max_intervals: 4000,
        }
    }

    fn radius(&self, v: &MatrixPotential) -> f64 {
        self.r_int.unwrap_or_else(|| v.decay_radius().max(8.0))
    }
}

/// One-dimensional profile and radial weight for dimension n.
struct Layout<'a> {
    profile: &'a MatrixPotential,
    lo: f64,
    hi: f64,
    n: usize,
}

impl<'a> Layout<'a> {
    fn new(v: &'a MatrixPotential, n: usize, params: &CoeffParams) -> Result<Self> {
        omega(n)?;
        let profile = if v.n() == 1 {
            v
        } else if v.n() == n {
            v.radial_base().ok_or_else(|| {
                Error::InvalidParameter("coefficients for n >= 2 need a radial potential".into())
            })?
        } else {
            return Err(Error::Dimension {
                expected: n,
                got: v.n(),
            });
        };
        let r = params.radius(v);
        let lo = if n == 1 { -r } else { 0.0 };
        Ok(Self { profile, lo, hi: r, n })
    }

    /// Measure density: 1 on the line, ω_n r^{n−1} radially.
    fn weight(&self, r: f64) -> f64 {
        match self.n {
            1 => 1.0,
            2 => 2.0 * PI * r,
            _ => 4.0 * PI * r * r,
        }
    }

    fn branch(&self, k: usize, x: f64) -> f64 {
        eigenvalues(&self.profile.eval1(x))[k]
    }
}

/// (d)₊^α with the convention (d)₊⁰ = 1{d > 0}.
fn pos_pow(d: f64, alpha: f64) -> f64 {
    if d <= 0.0 {
        0.0
    } else if alpha == 0.0 {
        1.0
    } else if alpha == 0.5 {
        d.sqrt()
    } else if alpha == -0.5 {
        1.0 / d.sqrt()
    } else {
        d.powf(alpha)
    }
}

/// ∫_lo^hi w(x)[(τ − e(x))₊^α − c] dx, splitting at the turning points of
/// τ − e and substituting x = x_t ± u² next to each of them.
fn branch_integral<E: Fn(f64) -> f64>(
    e: E,
    layout: &Layout<'_>,
    tau: f64,
    alpha: f64,
    c: f64,
    params: &CoeffParams,
) -> Result<f64> {
    let gap = |x: f64| tau - e(x);
    let roots = find_roots(gap, layout.lo, layout.hi, params.scan, 0.0);
    let mut pts = vec![layout.lo];
    pts.extend(roots.iter().copied().filter(|&r| r > layout.lo && r < layout.hi));
    pts.push(layout.hi);
    let is_root = |x: f64| roots.contains(&x);
    let q = params.quad();
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let m = 0.5 * (a + b);
        let allowed = gap(m) > 0.0;
        if !allowed {
            if c != 0.0 {
                let r = integrate(|x: f64| -c * layout.weight(x), a, b, &[], q)?;
                total += r.value;
            }
            continue;
        }
        let g = |x: f64| (pos_pow(gap(x), alpha) - c) * layout.weight(x);
        // left half
        if is_root(a) {
            let r = integrate(|u: f64| g(a + u * u) * 2.0 * u, 0.0, (m - a).sqrt(), &[], q)?;
            total += r.value;
        } else {
            total += integrate(g, a, m, &[], q)?.value;
        }
        // right half
        if is_root(b) {
            let r = integrate(|u: f64| g(b - u * u) * 2.0 * u, 0.0, (b - m).sqrt(), &[], q)?;
            total += r.value;
        } else {
            total += integrate(g, m, b, &[], q)?.value;
        }
    }
    Ok(total)
}

fn check_thresholds(v: &MatrixPotential, tau: f64, tol: f64) -> Result<()> {
    for t in v.thresholds() {
        if (tau - t).abs() < tol {
            return Err(Error::NearThreshold {
                tau,
                threshold: t,
                tol,
            });
        }
    }
    Ok(())
}

/// γ₀(τ) = (ω_n/2) Σ_k ∫ [(τ − e_k(x))₊^{(n−2)/2} − (τ − e_{k,∞})₊^{(n−2)/2}] dx.
pub fn gamma0(v: &MatrixPotential, tau: f64, n: usize, params: &CoeffParams) -> Result<f64> {
    check_thresholds(v, tau, params.threshold_tol)?;
    let layout = Layout::new(v, n, params)?;
    let w = omega(n)?;
    if v.is_constant() {
        return Ok(0.0);
    }
    let alpha = (n as f64 - 2.0) / 2.0;
    let mut s = 0.0;
    for (k, &einf) in v.thresholds().iter().enumerate() {
        let c = pos_pow(tau - einf, alpha);
        s += branch_integral(|x| layout.branch(k, x), &layout, tau, alpha, c, params)?;
    }
    Ok(0.5 * w * s)
}

/// a₀(τ) = (ω_n/n) Σ_k ∫ [(τ − e_k(x))₊^{n/2} − τ₊^{n/2}] dx, for V∞ = 0.
pub fn a0(v: &MatrixPotential, tau: f64, n: usize, params: &CoeffParams) -> Result<f64> {
    if v.v_infinity().max_abs() != 0.0 {
        return Err(Error::InvalidParameter("a0 requires V_infinity = 0".into()));
    }
    if tau == 0.0 {
        return Err(Error::InvalidParameter("a0 is evaluated at tau != 0".into()));
    }
    let layout = Layout::new(v, n, params)?;
    let w = omega(n)?;
    if v.is_constant() {
        return Ok(0.0);
    }
    let alpha = n as f64 / 2.0;
    let c = pos_pow(tau, alpha);
    let mut s = 0.0;
    for k in 0..v.channels() {
        s += branch_integral(|x| layout.branch(k, x), &layout, tau, alpha, c, params)?;
    }
    Ok(w / n as f64 * s)
}

/// I(e) = ∫₀^∞ f(e + t) t^{(n−2)/2} dt, computed as ∫ 2 f(e + u²) u^{n−1} du.
fn shell_moment(f: &TestFunction, e: f64, n: usize, q: QuadParams) -> Result<f64> {
    let Some((lo, hi)) = f.support() else {
        return Ok(0.0);
    };
    if hi <= e {
        return Ok(0.0);
    }
    let u_lo = (lo - e).max(0.0).sqrt();
    let u_hi = (hi - e).sqrt();
    let breaks: Vec<f64> = f
        .breaks()
        .into_iter()
        .filter(|&b| b > e)
        .map(|b| (b - e).sqrt())
        .collect();
    let r = integrate(
        |u: f64| 2.0 * f.eval(e + u * u) * u.powi(n as i32 - 1),
        u_lo,
        u_hi,
        &breaks,
        q,
    )?;
    Ok(r.value)
}

/// c₀(f) = (ω_n/2) Σ_k ∬ [f(e_{k,∞} + τ) − f(e_k(x) + τ)] τ^{(n−2)/2} dτ dx.
pub fn c0(v: &MatrixPotential, f: &TestFunction, n: usize, params: &CoeffParams) -> Result<f64> {
    f.validate()?;
    let layout = Layout::new(v, n, params)?;
    let w = omega(n)?;
    if v.is_constant() || f.is_zero() {
        return Ok(0.0);
    }
    let inner_q = QuadParams {
        atol: params.atol * 0.01,
        rtol: params.rtol,
        max_intervals: 4000,
    };
    let mut s = 0.0;
    for (k, &einf) in v.thresholds().iter().enumerate() {
        let i_inf = shell_moment(f, einf, n, inner_q)?;
        let mut failure = None;
        let g = |x: f64| {
            let e = layout.branch(k, x);
            if e == einf {
                return 0.0;
            }
            match shell_moment(f, e, n, inner_q) {
                Ok(i) => (i_inf - i) * layout.weight(x),
                Err(err) => {
                    if failure.is_none() {
                        failure = Some(err);
                    }
                    f64::NAN
                }
            }
        };
        let r = integrate(g, layout.lo, layout.hi, &[], params.quad());
        if let Some(err) = failure {
            return Err(err);
        }
        s += r?.value;
    }
    Ok(0.5 * w * s)
}

/// −∫ f(τ) γ₀(τ) dτ, the dual form of c₀(f).
pub fn c0_from_gamma0(v: &MatrixPotential, f: &TestFunction, n: usize, params: &CoeffParams) -> Result<f64> {
    let Some((lo, hi)) = f.support() else {
        return Ok(0.0);
    };
    let mut breaks = f.breaks();
    breaks.extend(v.thresholds());
    let mut failure = None;
    let r = integrate(
        |t: f64| {
            let ft = f.eval(t);
            if ft == 0.0 {
                return 0.0;
            }
            match gamma0(v, t, n, params) {
                Ok(g) => ft * g,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        lo,
        hi,
        &breaks,
        QuadParams {
            atol: params.atol * 10.0,
            rtol: 1e-10,
            max_intervals: 400,
        },
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(-r?.value)
}

/// Phase-space band volume Ω(τ) = ∬ χ · #{k : h_k ≤ τ} dx dξ (n = 1).
pub fn band_volume(p: &MatrixSymbol, chi: &PhaseCutoff, tau: f64, atol: f64) -> Result<f64> {
    if p.n() != 1 {
        return Err(Error::InvalidParameter("band volume is computed for n = 1".into()));
    }
    let (x_lo, x_hi, _, _) = chi.support();
    if chi.is_zero() || x_lo >= x_hi {
        return Ok(0.0);
    }
    let n_ch = p.channels();
    let inner_q = QuadParams::with_atol(atol * 0.01);
    let mut failure = None;
    let inner = |x: f64| -> f64 {
        let Some((a, b)) = chi.xi_support_at(x) else {
            return 0.0;
        };
        let mut s = 0.0;
        for k in 0..n_ch {
            let h = |xi: f64| p.branch_values(&[x, xi])[k] - tau;
            let mut pts = vec![a];
            pts.extend(find_roots(h, a, b, 256, 1e-13));
            pts.push(b);
            for w in pts.windows(2) {
                if w[1] <= w[0] || h(0.5 * (w[0] + w[1])) > 0.0 {
                    continue;
                }
                match integrate(|xi: f64| chi.eval(x, xi), w[0], w[1], &[], inner_q) {
                    Ok(r) => s += r.value,
                    Err(e) => {
                        failure.get_or_insert(e);
                        return f64::NAN;
                    }
                }
            }
        }
        s
    };
    let r = integrate(inner, x_lo, x_hi, &[], QuadParams::with_atol(atol));
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(r?.value)
}

/// γ₀^χ(τ) with its convergence record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizedGamma {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
    pub steps: Vec<f64>,
    pub estimates: Vec<f64>,
}

/// dΩ/dτ by central differences with Richardson step halving until two
/// extrapolants agree to relative 1e-5. Flagged (not an error) otherwise.
pub fn gamma0_localized(p: &MatrixSymbol, chi: &PhaseCutoff, tau: f64, dtau_step: f64) -> Result<LocalizedGamma> {
    if dtau_step <= 0.0 {
        return Err(Error::InvalidParameter("dtau_step must be positive".into()));
    }
    if chi.is_zero() {
        return Ok(LocalizedGamma {
            value: 0.0,
            error: 0.0,
            converged: true,
            steps: vec![],
            estimates: vec![],
        });
    }
    const RTOL: f64 = 1e-5;
    const MAX_HALVINGS: usize = 8;
    let atol = 1e-12;
    let diff = |s: f64| -> Result<f64> {
        Ok((band_volume(p, chi, tau + s, atol)? - band_volume(p, chi, tau - s, atol)?) / (2.0 * s))
    };
    let mut steps = vec![dtau_step];
    let mut raw = vec![diff(dtau_step)?];
    let mut estimates: Vec<f64> = Vec::new();
    let mut s = dtau_step;
    for _ in 0..MAX_HALVINGS {
        s *= 0.5;
        steps.push(s);
        raw.push(diff(s)?);
        let k = raw.len() - 1;
        estimates.push((4.0 * raw[k] - raw[k - 1]) / 3.0);
        if estimates.len() >= 2 {
            let a = estimates[estimates.len() - 1];
            let b = estimates[estimates.len() - 2];
            let err = (a - b).abs();
            if err <= RTOL * a.abs().max(1e-300) || err <= 1e-12 {
                return Ok(LocalizedGamma {
                    value: a,
                    error: err,
                    converged: true,
                    steps,
                    estimates,
                });
            }
        }
    }
    let a = estimates[estimates.len() - 1];
    let err = (a - estimates[estimates.len() - 2]).abs();
    Ok(LocalizedGamma {
        value: a,
        error: err,
        converged: false,
        steps,
        estimates,
    })
}

/// dΩ/dτ from the jump of ê₀(z) = ∬ χ tr(z − p)⁻¹ across the real axis:
/// dΩ/dτ = (ê₀(τ − i0) − ê₀(τ + i0)) / (2πi).
pub fn gamma0_localized_boundary(
    p: &MatrixSymbol,
    chi: &PhaseCutoff,
    tau: f64,
    params: BoundaryParams,
) -> Result<(f64, bool)> {
    let plus = boundary_value_extrapolate(p, &GIntegrand::ResolventFactor, chi, tau, Side::Plus, params)?;
    let minus = boundary_value_extrapolate(p, &GIntegrand::ResolventFactor, chi, tau, Side::Minus, params)?;
    let jump = minus.complex() - plus.complex();
    Ok((jump.im / (2.0 * PI), plus.converged && minus.converged))
}

/// Coefficient table over an energy grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientProfile {
    pub tau_grid: Vec<f64>,
    pub gamma0: Vec<f64>,
    /// `None` where a₀ is undefined (V∞ ≠ 0).
    pub a0: Vec<Option<f64>>,
    pub n: usize,
    pub omega_n: f64,
}

impl CoefficientProfile {
    pub fn compute(v: &MatrixPotential, taus: &[f64], n: usize, params: &CoeffParams) -> Result<Self> {
        use rayon::prelude::*;
        let zero_inf = v.v_infinity().max_abs() == 0.0;
        let rows: Vec<(f64, Option<f64>)> = taus
            .par_iter()
            .map(|&t| {
                let g = gamma0(v, t, n, params)?;
                let a = if zero_inf && t != 0.0 { Some(a0(v, t, n, params)?) } else { None };
                Ok((g, a))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            tau_grid: taus.to_vec(),
            gamma0: rows.iter().map(|r| r.0).collect(),
            a0: rows.iter().map(|r| r.1).collect(),
            n,
            omega_n: omega(n)?,
        })
    }

    /// CSV with columns tau, gamma0, a0.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["tau", "gamma0", "a0"])?;
        for i in 0..self.tau_grid.len() {
            wr.write_record([
                format!("{:e}", self.tau_grid[i]),
                format!("{:e}", self.gamma0[i]),
                self.a0[i].map(|a| format!("{a:e}")).unwrap_or_default(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}
