//! Periodic Fourier-spectral discretization of matrix Schrödinger operators,
//! Weyl quantization of phase-space symbols, and smoothed spectral traces.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::{Arc, OnceLock};

use faer::Mat;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::coefficients::{gamma0_localized, TestFunction};
use crate::error::{Error, Result};
use crate::harness::fit::{fit_order, SlopeFit};
use crate::linalg::{
    dense_complex_eigen, dense_complex_eigenvalues, dense_real_eigen, dense_real_eigenvalues, HermitianMatrix, C64,
};
use crate::microhyperbolicity::MicrohyperbolicityCertificate;
use crate::quadrature::gauss_legendre;
use crate::symbols::{MatrixPotential, MatrixSymbol, PhaseCutoff};

/// Default cap on grid points per channel.
pub const M_CAP_PER_CHANNEL: usize = 8192;
/// Distance a quantized symbol must keep from the periodic seam.
pub const WEYL_MARGIN: f64 = 2.0;
/// Relative hermiticity tolerance for explicitly supplied matrices.
pub const OPERATOR_HERMITIAN_TOL: f64 = 1e-11;

/// Periodic grid x_j = −R + 2Rj/M with momenta p_m = πhm/R, m ∈ [−M/2, M/2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid1D {
    r: f64,
    m: usize,
    h: f64,
}

impl Grid1D {
    pub fn new(r: f64, m: usize, h: f64) -> Result<Self> {
        if !(r > 0.0) || !(h > 0.0) {
            return Err(Error::InvalidParameter("R and h must be positive".into()));
        }
        if m < 2 || !m.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("M = {m} must be even and >= 2")));
        }
        Ok(Self { r, m, h })
    }

    /// Smallest even M with (πhM/(2R))²/4 ≥ τ_max.
    pub fn required_points(r: f64, h: f64, tau_max: f64) -> usize {
        let m = (4.0 * r * tau_max.max(0.0).sqrt() / (PI * h) * (1.0 - 1e-12)).ceil() as usize;
        m.max(2).div_ceil(2) * 2
    }

    /// Grid meeting the coverage rule for τ_max, or a resource error above `m_cap`.
    pub fn for_coverage(r: f64, h: f64, tau_max: f64, m_cap: usize) -> Result<Self> {
        let m = Self::required_points(r, h, tau_max);
        if m > m_cap {
            return Err(Error::ResourceCap { required: m, cap: m_cap });
        }
        Self::new(r, m, h)
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.r / self.m as f64
    }

    pub fn dp(&self) -> f64 {
        PI * self.h / self.r
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.r + 2.0 * self.r * j as f64 / self.m as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.m).map(|j| self.x(j)).collect()
    }

    /// Momentum at FFT position q (m = q for q < M/2, else q − M).
    pub fn momentum(&self, q: usize) -> f64 {
        let m = if q < self.m / 2 { q as f64 } else { q as f64 - self.m as f64 };
        self.dp() * m
    }

    /// Reliable energy window (πhM/(2R))²/4.
    pub fn tau_max(&self) -> f64 {
        let pmax = PI * self.h * self.m as f64 / (2.0 * self.r);
        pmax * pmax / 4.0
    }

    pub fn check_coverage(&self, tau_max: f64) -> Result<()> {
        if self.tau_max() < tau_max * (1.0 - 1e-12) {
            return Err(Error::Coverage {
                m: self.m,
                required: Self::required_points(self.r, self.h, tau_max),
                covered: self.tau_max(),
                tau_max,
            });
        }
        Ok(())
    }

    fn same(&self, other: &Self) -> bool {
        self.r == other.r && self.m == other.m && self.h == other.h
    }
}

/// Dense storage, real when every entry is real.
#[derive(Debug, Clone)]
pub enum OpMatrix {
    Real(Mat<f64>),
    Complex(Mat<C64>),
}

impl OpMatrix {
    pub fn dim(&self) -> usize {
        match self {
            OpMatrix::Real(m) => m.nrows(),
            OpMatrix::Complex(m) => m.nrows(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        match self {
            OpMatrix::Real(m) => C64::new(m[(i, j)], 0.0),
            OpMatrix::Complex(m) => m[(i, j)],
        }
    }

    pub fn max_abs(&self) -> f64 {
        let d = self.dim();
        let mut s = 0.0f64;
        for j in 0..d {
            for i in 0..d {
                s = s.max(self.get(i, j).norm());
            }
        }
        s
    }

    pub fn max_asymmetry(&self) -> f64 {
        let d = self.dim();
        let mut s = 0.0f64;
        for j in 0..d {
            for i in j..d {
                s = s.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        s
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    fn real_part(&self) -> Mat<f64> {
        match self {
            OpMatrix::Real(m) => m.clone(),
            OpMatrix::Complex(m) => Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].re),
        }
    }

    fn to_complex(&self) -> Mat<C64> {
        match self {
            OpMatrix::Real(m) => Mat::from_fn(m.nrows(), m.ncols(), |i, j| C64::new(m[(i, j)], 0.0)),
            OpMatrix::Complex(m) => m.clone(),
        }
    }

    fn symmetrize(&mut self) {
        let d = self.dim();
        match self {
            OpMatrix::Real(m) => {
                for j in 0..d {
                    for i in (j + 1)..d {
                        let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                }
            }
            OpMatrix::Complex(m) => {
                for j in 0..d {
                    m[(j, j)] = C64::new(m[(j, j)].re, 0.0);
                    for i in (j + 1)..d {
                        let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                        m[(i, j)] = v;
                        m[(j, i)] = v.conj();
                    }
                }
            }
        }
    }

    /// Demotes to real storage when every imaginary part is exactly zero.
    fn simplify(self) -> Self {
        match self {
            OpMatrix::Complex(m) if m.col_iter().all(|c| c.iter().all(|z| z.im == 0.0)) => {
                OpMatrix::Real(Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].re))
            }
            other => other,
        }
    }
}

/// How an operator's spectrum is obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    /// V ≡ diag(d): plane waves, spectrum p_m² + d_a.
    Constant { diag: Vec<f64> },
    /// Real diagonal V: channels decouple into M×M blocks.
    Channels,
    Dense,
}

#[derive(Debug)]
enum Repr {
    Schrodinger {
        kinetic: Arc<Vec<f64>>,
        blocks: Vec<HermitianMatrix>,
    },
    Explicit,
}

/// Eigenvectors in whichever form the structure allows.
#[derive(Debug)]
pub enum Basis {
    /// Mode j is the plane wave at FFT position q in channel a.
    PlaneWaves { modes: Vec<(usize, usize)> },
    /// Mode j is column c of the block for channel a.
    Channels {
        blocks: Vec<Mat<f64>>,
        modes: Vec<(usize, usize)>,
    },
    Real(Mat<f64>),
    Complex(Mat<C64>),
}

/// Ascending eigenvalues with orthonormal eigenvectors.
#[derive(Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub basis: Basis,
}

/// Dense hermitian operator on an M-point periodic grid with N channels;
/// index j·N + a for site j and channel a.
#[derive(Debug)]
pub struct GridOperator {
    grid: Grid1D,
    channels: usize,
    repr: Repr,
    structure: Structure,
    matrix: OnceLock<OpMatrix>,
    values: OnceLock<Vec<f64>>,
    spectrum: OnceLock<Spectrum>,
    /// Max asymmetry removed by symmetrization.
    drift: f64,
}

fn kinetic_row(grid: &Grid1D) -> Vec<f64> {
    let m = grid.m();
    let mut buf: Vec<C64> = (0..m)
        .map(|q| {
            let p = grid.momentum(q);
            C64::new(p * p, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_inverse(m).process(&mut buf);
    buf.iter().map(|z| z.re / m as f64).collect()
}

fn sort_modes(vals: Vec<f64>, modes: Vec<(usize, usize)>) -> (Vec<f64>, Vec<(usize, usize)>) {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]).then(i.cmp(&j)));
    (idx.iter().map(|&i| vals[i]).collect(), idx.iter().map(|&i| modes[i]).collect())
}

impl GridOperator {
    /// Wraps an explicit matrix after validating hermiticity to 1e-11 relative.
    pub fn from_matrix(grid: Grid1D, channels: usize, matrix: OpMatrix) -> Result<Self> {
        let d = grid.m() * channels;
        if matrix.dim() != d {
            return Err(Error::Dimension {
                expected: d,
                got: matrix.dim(),
            });
        }
        let asym = matrix.max_asymmetry();
        if asym > OPERATOR_HERMITIAN_TOL * matrix.max_abs().max(1.0) {
            return Err(Error::NotHermitian { max_asymmetry: asym });
        }
        Ok(Self::explicit(grid, channels, matrix, asym))
    }

    fn explicit(grid: Grid1D, channels: usize, mut matrix: OpMatrix, drift: f64) -> Self {
        matrix.symmetrize();
        let cell = OnceLock::new();
        let _ = cell.set(matrix.simplify());
        Self {
            grid,
            channels,
            repr: Repr::Explicit,
            structure: Structure::Dense,
            matrix: cell,
            values: OnceLock::new(),
            spectrum: OnceLock::new(),
            drift,
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dim(&self) -> usize {
        self.grid.m() * self.channels
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    /// Asymmetry removed at assembly (0 for Schrödinger operators).
    pub fn drift(&self) -> f64 {
        self.drift
    }

    /// Dense matrix, assembled on first use.
    pub fn matrix(&self) -> &OpMatrix {
        self.matrix.get_or_init(|| self.assemble())
    }

    fn assemble(&self) -> OpMatrix {
        let Repr::Schrodinger { kinetic, blocks } = &self.repr else {
            unreachable!("explicit operators store their matrix at construction");
        };
        let (m, n) = (self.grid.m(), self.channels);
        let d = m * n;
        let real = blocks.iter().all(|b| b.is_real());
        let entry = |r: usize, c: usize| -> C64 {
            let (i, a) = (r / n, r % n);
            let (j, b) = (c / n, c % n);
            let mut v = C64::new(0.0, 0.0);
            if a == b {
                v.re += kinetic[(i + m - j) % m];
            }
            if i == j {
                v += blocks[i].get(a, b);
            }
            v
        };
        if real {
            OpMatrix::Real(Mat::from_fn(d, d, |r, c| entry(r, c).re))
        } else {
            OpMatrix::Complex(Mat::from_fn(d, d, entry))
        }
    }

    fn channel_block(&self, a: usize) -> Mat<f64> {
        let Repr::Schrodinger { kinetic, blocks } = &self.repr else {
            unreachable!("channel blocks exist only for Schrödinger operators");
        };
        let m = self.grid.m();
        Mat::from_fn(m, m, |i, j| {
            let mut v = kinetic[(i + m - j) % m];
            if i == j {
                v += blocks[i].get(a, a).re;
            }
            v
        })
    }

    fn constant_modes(&self, diag: &[f64]) -> (Vec<f64>, Vec<(usize, usize)>) {
        let mut vals = Vec::with_capacity(self.dim());
        let mut modes = Vec::with_capacity(self.dim());
        for q in 0..self.grid.m() {
            let p = self.grid.momentum(q);
            for (a, d) in diag.iter().enumerate() {
                vals.push(p * p + d);
                modes.push((q, a));
            }
        }
        sort_modes(vals, modes)
    }

    /// Ascending eigenvalues (cached).
    pub fn eigenvalues(&self) -> &[f64] {
        if let Some(s) = self.spectrum.get() {
            return &s.values;
        }
        self.values.get_or_init(|| match &self.structure {
            Structure::Constant { diag } => self.constant_modes(diag).0,
            Structure::Channels => {
                let mut all = Vec::with_capacity(self.dim());
                for a in 0..self.channels {
                    all.extend(dense_real_eigenvalues(self.channel_block(a).as_ref()));
                }
                all.sort_by(|x, y| x.total_cmp(y));
                all
            }
            Structure::Dense => match self.matrix() {
                OpMatrix::Real(m) => dense_real_eigenvalues(m.as_ref()),
                OpMatrix::Complex(m) => dense_complex_eigenvalues(m.as_ref()),
            },
        })
    }

    /// Eigenvalues and eigenvectors (cached).
    pub fn spectrum(&self) -> &Spectrum {
        self.spectrum.get_or_init(|| match &self.structure {
            Structure::Constant { diag } => {
                let (values, modes) = self.constant_modes(diag);
                Spectrum {
                    values,
                    basis: Basis::PlaneWaves { modes },
                }
            }
            Structure::Channels => {
                let mut vals = Vec::new();
                let mut modes = Vec::new();
                let mut blocks = Vec::new();
                for a in 0..self.channels {
                    let (v, u) = dense_real_eigen(self.channel_block(a).as_ref());
                    for (c, x) in v.into_iter().enumerate() {
                        vals.push(x);
                        modes.push((c, a));
                    }
                    blocks.push(u);
                }
                let (values, modes) = sort_modes(vals, modes);
                Spectrum {
                    values,
                    basis: Basis::Channels { blocks, modes },
                }
            }
            Structure::Dense => match self.matrix() {
                OpMatrix::Real(m) => {
                    let (values, u) = dense_real_eigen(m.as_ref());
                    Spectrum {
                        values,
                        basis: Basis::Real(u),
                    }
                }
                OpMatrix::Complex(m) => {
                    let (values, u) = dense_complex_eigen(m.as_ref());
                    Spectrum {
                        values,
                        basis: Basis::Complex(u),
                    }
                }
            },
        })
    }

    /// u_j* A u_j for every eigenvector u_j of `self`, in eigenvalue order.
    pub fn expectations(&self, a: &GridOperator) -> Result<Vec<f64>> {
        if !self.grid.same(&a.grid) || self.channels != a.channels {
            return Err(Error::GridMismatch);
        }
        let spec = self.spectrum();
        let (m, n) = (self.grid.m(), self.channels);
        let am = a.matrix();
        Ok(match &spec.basis {
            Basis::PlaneWaves { modes } => {
                let mut per_channel: Vec<Vec<C64>> = Vec::with_capacity(n);
                let fft = FftPlanner::new().plan_fft_forward(m);
                for ch in 0..n {
                    let mut d: Vec<C64> = (0..m)
                        .map(|k| {
                            let s: C64 = (0..m).map(|j| am.get(((j + k) % m) * n + ch, j * n + ch)).sum();
                            s / m as f64
                        })
                        .collect();
                    fft.process(&mut d);
                    per_channel.push(d);
                }
                modes.iter().map(|&(q, ch)| per_channel[ch][q].re).collect()
            }
            Basis::Channels { blocks, modes } => {
                let mut per_channel: Vec<Vec<f64>> = Vec::with_capacity(n);
                for (ch, u) in blocks.iter().enumerate() {
                    let sub = Mat::from_fn(m, m, |i, j| am.get(i * n + ch, j * n + ch).re);
                    let w = &sub * u;
                    per_channel.push((0..m).map(|c| (0..m).map(|i| u[(i, c)] * w[(i, c)]).sum()).collect());
                }
                modes.iter().map(|&(c, ch)| per_channel[ch][c]).collect()
            }
            Basis::Real(u) => {
                let re = am.real_part();
                let w = &re * u;
                let d = u.nrows();
                (0..d).map(|c| (0..d).map(|i| u[(i, c)] * w[(i, c)]).sum()).collect()
            }
            Basis::Complex(u) => {
                let w = &am.to_complex() * u;
                let d = u.nrows();
                (0..d)
                    .map(|c| (0..d).map(|i| (u[(i, c)].conj() * w[(i, c)]).re).sum())
                    .collect()
            }
        })
    }
}

/// Schrödinger operator −h²Δ ⊗ I_N + V on the grid; the grid must cover τ_max.
pub fn build_schrodinger(v: &MatrixPotential, grid: Grid1D, tau_max: f64) -> Result<GridOperator> {
    if v.n() != 1 {
        return Err(Error::InvalidParameter("quantization is one-dimensional".into()));
    }
    grid.check_coverage(tau_max)?;
    let blocks: Vec<HermitianMatrix> = (0..grid.m()).map(|j| v.eval1(grid.x(j))).collect();
    let constant = blocks.iter().all(|b| b.is_diagonal() && *b == blocks[0]);
    let structure = if constant {
        Structure::Constant {
            diag: blocks[0].diag_real(),
        }
    } else if v.channels() > 1 && blocks.iter().all(|b| b.is_diagonal() && b.is_real()) {
        Structure::Channels
    } else {
        Structure::Dense
    };
    Ok(GridOperator {
        grid,
        channels: v.channels(),
        repr: Repr::Schrodinger {
            kinetic: Arc::new(kinetic_row(&grid)),
            blocks,
        },
        structure,
        matrix: OnceLock::new(),
        values: OnceLock::new(),
        spectrum: OnceLock::new(),
        drift: 0.0,
    })
}

/// Symbol to be Weyl-quantized.
pub enum WeylSymbol<'a> {
    /// Real scalar a(x, ξ); `x_support` bounds where it can be nonzero.
    Scalar {
        eval: &'a (dyn Fn(f64, f64) -> f64 + Sync),
        x_support: Option<(f64, f64)>,
    },
    Cutoff(&'a PhaseCutoff),
    Matrix {
        symbol: &'a MatrixSymbol,
        x_support: Option<(f64, f64)>,
    },
}

impl WeylSymbol<'_> {
    fn channels(&self) -> usize {
        match self {
            WeylSymbol::Matrix { symbol, .. } => symbol.channels(),
            _ => 1,
        }
    }

    fn x_support(&self) -> Option<(f64, f64)> {
        match self {
            WeylSymbol::Scalar { x_support, .. } | WeylSymbol::Matrix { x_support, .. } => *x_support,
            WeylSymbol::Cutoff(c) => {
                let (a, b, _, _) = c.support();
                Some((a, b))
            }
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, WeylSymbol::Cutoff(c) if c.is_zero())
    }

    /// Entry (a, b) of the symbol at (x, ξ).
    fn entries(&self, x: f64, xi: f64, out: &mut [C64]) {
        match self {
            WeylSymbol::Scalar { eval, .. } => out[0] = C64::new(eval(x, xi), 0.0),
            WeylSymbol::Cutoff(c) => out[0] = C64::new(c.eval(x, xi), 0.0),
            WeylSymbol::Matrix { symbol, .. } => {
                let h = symbol.eval(&[x, xi]);
                let n = h.dim();
                for a in 0..n {
                    for b in 0..n {
                        out[a * n + b] = h.get(a, b);
                    }
                }
            }
        }
    }
}

/// Weyl quantization A[i][j] = (1/M) Σ_m e^{2πi k m/M} a(mid, p_m), with
/// k the minimal-image index difference and mid the matching periodic midpoint.
pub fn weyl_quantize(sym: &WeylSymbol<'_>, grid: Grid1D) -> Result<GridOperator> {
    let (m, n) = (grid.m(), sym.channels());
    let d = m * n;
    let r = grid.r();
    if let Some((lo, hi)) = sym.x_support() {
        let reach = lo.abs().max(hi.abs());
        if reach > r - WEYL_MARGIN {
            return Err(Error::Margin(format!(
                "symbol reaches |x| = {reach:.3}, the box allows {:.3}",
                r - WEYL_MARGIN
            )));
        }
    }
    let mut out = Mat::<C64>::zeros(d, d);
    if !sym.is_zero() {
        let fft = FftPlanner::new().plan_fft_inverse(m);
        let half = grid.dx() / 2.0;
        let support = sym.x_support();
        let mut vals = vec![C64::new(0.0, 0.0); n * n];
        let mut b: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); m]; n * n];
        for q in 0..2 * m {
            let x = -r + q as f64 * half;
            if let Some((lo, hi)) = support {
                if x < lo || x > hi {
                    continue;
                }
            }
            for qq in 0..m {
                sym.entries(x, grid.momentum(qq), &mut vals);
                for (e, v) in vals.iter().enumerate() {
                    b[e][qq] = *v;
                }
            }
            for (e, col) in b.iter_mut().enumerate() {
                if col.iter().all(|z| *z == C64::new(0.0, 0.0)) {
                    continue;
                }
                let (ca, cb) = (e / n, e % n);
                let uniform = col.iter().all(|z| z == &col[0]);
                if uniform {
                    // exact discrete delta: only k = 0 survives
                    if q % 2 == 0 {
                        let j = q / 2;
                        out[(j * n + ca, j * n + cb)] = col[0];
                    }
                    continue;
                }
                fft.process(col);
                for k in -(m as i64 / 2)..(m as i64 / 2) {
                    let diff = q as i64 - k;
                    if diff.rem_euclid(2) != 0 {
                        continue;
                    }
                    let j = (diff / 2).rem_euclid(m as i64) as usize;
                    let i = (j as i64 + k).rem_euclid(m as i64) as usize;
                    out[(i * n + ca, j * n + cb)] = col[k.rem_euclid(m as i64) as usize] / m as f64;
                }
            }
        }
    }
    let mat = OpMatrix::Complex(out);
    let scale = mat.max_abs().max(1e-300);
    let drift = mat.max_asymmetry() / scale;
    Ok(GridOperator::explicit(grid, n, mat, drift))
}

/// χʷ ⊗ I_N for a scalar phase-space cutoff.
pub fn quantize_cutoff(chi: &PhaseCutoff, grid: Grid1D, channels: usize) -> Result<GridOperator> {
    let a = weyl_quantize(&WeylSymbol::Cutoff(chi), grid)?;
    if channels == 1 {
        return Ok(a);
    }
    let m = grid.m();
    let src = a.matrix();
    let mut out = Mat::<C64>::zeros(m * channels, m * channels);
    for j in 0..m {
        for i in 0..m {
            let z = src.get(i, j);
            for c in 0..channels {
                out[(i * channels + c, j * channels + c)] = z;
            }
        }
    }
    let mat = OpMatrix::Complex(out);
    let drift = a.drift();
    Ok(GridOperator::explicit(grid, channels, mat, drift))
}

/// Profile of the window θ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// θ ≡ 1 on |t| ≤ 1/4, even.
    BumpAtZero,
    /// Supported in (1/2, 1).
    BumpPositive,
}

/// ε as a function of h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum EpsRule {
    Fixed { eps: f64 },
    /// ε = coef · h^exponent.
    Power { coef: f64, exponent: f64 },
}

impl EpsRule {
    pub fn eps(&self, h: f64) -> f64 {
        match *self {
            EpsRule::Fixed { eps } => eps,
            EpsRule::Power { coef, exponent } => coef * h.powf(exponent),
        }
    }
}

/// θ_ε(t) = θ(t/ε) and its semiclassical Fourier transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowTheta {
    pub kind: WindowKind,
    pub eps: EpsRule,
}

/// Arguments beyond this are treated as the transform's tail (value 0).
pub const K_MAX: f64 = 2000.0;

fn s_inf(y: f64) -> f64 {
    crate::coefficients::smooth_step(y)
}

/// θ(t) for the given kind.
pub fn theta(kind: WindowKind, t: f64) -> f64 {
    match kind {
        WindowKind::BumpAtZero => {
            let a = t.abs();
            if a >= 1.0 {
                0.0
            } else {
                s_inf((1.0 - a) / 0.75)
            }
        }
        WindowKind::BumpPositive => crate::symbols::bump((t - 0.75) / 0.25),
    }
}

struct ThetaTable {
    /// For panel counts 16·2^l: nodes u and weights w·θ(u).
    levels: Vec<(usize, Vec<f64>, Vec<f64>)>,
}

fn theta_table(kind: WindowKind) -> &'static ThetaTable {
    static AT_ZERO: OnceLock<ThetaTable> = OnceLock::new();
    static POSITIVE: OnceLock<ThetaTable> = OnceLock::new();
    let cell = match kind {
        WindowKind::BumpAtZero => &AT_ZERO,
        WindowKind::BumpPositive => &POSITIVE,
    };
    cell.get_or_init(|| {
        let (a, b) = match kind {
            WindowKind::BumpAtZero => (0.0, 1.0),
            WindowKind::BumpPositive => (0.5, 1.0),
        };
        let (gx, gw) = gauss_legendre(16);
        let levels = (0..6)
            .map(|l| {
                let p = 16usize << l;
                let width = (b - a) / p as f64;
                let mut u = Vec::with_capacity(16 * p);
                let mut w = Vec::with_capacity(16 * p);
                for k in 0..p {
                    let c = a + (k as f64 + 0.5) * width;
                    for (x, wt) in gx.iter().zip(&gw) {
                        let t = c + 0.5 * width * x;
                        u.push(t);
                        w.push(0.5 * width * wt * theta(kind, t));
                    }
                }
                (p, u, w)
            })
            .collect();
        ThetaTable { levels }
    })
}

fn level_for(table: &ThetaTable, k: f64) -> &(usize, Vec<f64>, Vec<f64>) {
    let need = (k.abs() / 4.0).max(16.0);
    table
        .levels
        .iter()
        .find(|l| l.0 as f64 >= need)
        .unwrap_or_else(|| table.levels.last().unwrap())
}

/// Φ(k) = (1/2π) ∫ θ(u) e^{iuk} du.
pub fn window_profile(kind: WindowKind, k: f64) -> C64 {
    if k.abs() > K_MAX {
        return C64::new(0.0, 0.0);
    }
    let (_, u, w) = level_for(theta_table(kind), k);
    match kind {
        WindowKind::BumpAtZero => {
            let s: f64 = u.iter().zip(w).map(|(u, w)| w * (k * u).cos()).sum();
            C64::new(s / PI, 0.0)
        }
        WindowKind::BumpPositive => {
            let mut re = 0.0;
            let mut im = 0.0;
            for (u, w) in u.iter().zip(w) {
                let (s, c) = (k * u).sin_cos();
                re += w * c;
                im += w * s;
            }
            C64::new(re, im) / (2.0 * PI)
        }
    }
}

/// Ψ(k) = ∫_{−∞}^k Φ = ½ + (1/π) ∫₀¹ θ(u) sin(ku)/u du (even θ only).
pub fn window_profile_primitive(kind: WindowKind, k: f64) -> Result<f64> {
    if kind != WindowKind::BumpAtZero {
        return Err(Error::Window("the primitive is defined for the even window".into()));
    }
    if k > K_MAX {
        return Ok(1.0);
    }
    if k < -K_MAX {
        return Ok(0.0);
    }
    let (_, u, w) = level_for(theta_table(kind), k);
    let s: f64 = u.iter().zip(w).map(|(u, w)| w * (k * u).sin() / u).sum();
    Ok(0.5 + s / PI)
}

/// F_h⁻¹θ_ε(s) = (ε/h) Φ(εs/h).
pub fn fourier_window(w: &WindowTheta, h: f64, s: f64) -> C64 {
    let eps = w.eps.eps(h);
    window_profile(w.kind, eps * s / h) * (eps / h)
}

/// ∫_{−∞}^s F_h⁻¹θ_ε = Ψ(εs/h).
pub fn window_primitive(w: &WindowTheta, h: f64, s: f64) -> Result<f64> {
    window_profile_primitive(w.kind, w.eps.eps(h) * s / h)
}

/// Spectral data for repeated trace evaluation: eigenvalues λ_j with weights
/// f(λ_j)·u_j*Au_j (zero weights dropped).
#[derive(Debug, Clone)]
pub struct TraceContext {
    pub h: f64,
    pub terms: Vec<(f64, f64)>,
}

impl TraceContext {
    /// `a = None` stands for the identity.
    pub fn new(a: Option<&GridOperator>, hop: &GridOperator, f: &TestFunction) -> Result<Self> {
        let mut terms = Vec::new();
        match a {
            None => {
                for &l in hop.eigenvalues() {
                    let fl = f.eval(l);
                    if fl != 0.0 {
                        terms.push((l, fl));
                    }
                }
            }
            Some(a) => {
                let ex = hop.expectations(a)?;
                let vals = &hop.spectrum().values;
                for (l, e) in vals.iter().zip(ex) {
                    let fl = f.eval(*l);
                    if fl != 0.0 && e != 0.0 {
                        terms.push((*l, fl * e));
                    }
                }
            }
        }
        Ok(Self {
            h: hop.grid().h(),
            terms,
        })
    }

    /// Σ_j f(λ_j) F_h⁻¹θ_ε(τ − λ_j) u_j*Au_j.
    pub fn eval(&self, w: &WindowTheta, tau: f64) -> C64 {
        self.terms
            .iter()
            .map(|&(l, c)| fourier_window(w, self.h, tau - l) * c)
            .sum()
    }
}

/// tr(A f(H) F_h⁻¹θ_ε(τ − H)); `a = None` is the identity.
pub fn smoothed_trace(
    a: Option<&GridOperator>,
    hop: &GridOperator,
    f: &TestFunction,
    w: &WindowTheta,
    tau: f64,
) -> Result<C64> {
    Ok(TraceContext::new(a, hop, f)?.eval(w, tau))
}

/// Outcome of a check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
    NotCertified,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::NotApplicable => "NOT APPLICABLE",
            Verdict::NotCertified => "NOT CERTIFIED",
        }
    }

    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub h: f64,
    pub value: f64,
    pub reference: f64,
    pub rel_error: f64,
    pub eps: f64,
    pub m: usize,
}

/// Per-h table with a log-log fit and a verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub check: String,
    pub rows: Vec<ReportRow>,
    pub fit: Option<SlopeFit>,
    pub fit_error: Option<String>,
    pub threshold: f64,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

impl DecayReport {
    pub fn fitted_slope(&self) -> Option<f64> {
        self.fit.as_ref().and_then(|f| f.slope)
    }

    /// CSV with columns h, value, reference, rel_error, fitted_slope.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_report_csv(w, &self.rows, self.fitted_slope())
    }

    fn not_certified(check: &str, threshold: f64, note: &str) -> Self {
        Self {
            check: check.into(),
            rows: vec![],
            fit: None,
            fit_error: None,
            threshold,
            verdict: Verdict::NotCertified,
            notes: vec![note.into()],
        }
    }
}

/// Shared CSV layout for h-indexed reports.
pub fn write_report_csv<W: Write>(w: W, rows: &[ReportRow], slope: Option<f64>) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["h", "value", "reference", "rel_error", "fitted_slope"])?;
    let s = slope.map(|s| format!("{s:e}")).unwrap_or_default();
    for r in rows {
        wr.write_record([
            format!("{:e}", r.h),
            format!("{:e}", r.value),
            format!("{:e}", r.reference),
            format!("{:e}", r.rel_error),
            s.clone(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Grid policy shared by the h-sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPolicy {
    pub r: f64,
    pub tau_max: f64,
    #[serde(default = "default_m_cap")]
    pub m_cap: usize,
}

fn default_m_cap() -> usize {
    M_CAP_PER_CHANNEL
}

impl GridPolicy {
    /// Cap applies to M, the number of sites; the operator dimension is M·N.
    pub fn grid(&self, h: f64) -> Result<Grid1D> {
        Grid1D::for_coverage(self.r, h, self.tau_max, self.m_cap)
    }
}

fn decay_verdict(rows: &[ReportRow], threshold: f64) -> (Option<SlopeFit>, Option<String>, bool) {
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.value.abs())).collect();
    let tiny = pairs.iter().all(|p| p.1 < 1e-10);
    match fit_order(&pairs) {
        Ok(f) => {
            let ok = tiny || f.meets(threshold);
            (Some(f), None, ok)
        }
        Err(e) => (None, Some(e.to_string()), tiny),
    }
}

fn check_h_list(h_list: &[f64]) -> Result<()> {
    if h_list.is_empty() || h_list.windows(2).any(|w| w[1] >= w[0]) || h_list.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::InvalidParameter("h_list must be positive and strictly decreasing".into()));
    }
    Ok(())
}

/// Decay slope threshold standing in for O(h^∞).
pub const DECAY_SLOPE: f64 = 3.0;

/// |tr(χʷ f(p₁ʷ) F_h⁻¹θ_ε(τ₀ − p₁ʷ))| over h for a window vanishing near 0.
#[allow(clippy::too_many_arguments)]
pub fn negligibility_check(
    v: &MatrixPotential,
    certificate: Option<&MicrohyperbolicityCertificate>,
    chi: &PhaseCutoff,
    f: &TestFunction,
    w: &WindowTheta,
    tau0: f64,
    h_list: &[f64],
    policy: &GridPolicy,
) -> Result<DecayReport> {
    check_h_list(h_list)?;
    if certificate.is_none() {
        return Ok(DecayReport::not_certified(
            "negligibility",
            DECAY_SLOPE,
            "no microhyperbolicity certificate on the energy shell",
        ));
    }
    let mut rows = Vec::new();
    for &h in h_list {
        let grid = policy.grid(h)?;
        let hop = build_schrodinger(v, grid, policy.tau_max)?;
        let a = quantize_cutoff(chi, grid, v.channels())?;
        let t = smoothed_trace(Some(&a), &hop, f, w, tau0)?;
        rows.push(ReportRow {
            h,
            value: t.norm(),
            reference: 0.0,
            rel_error: f64::NAN,
            eps: w.eps.eps(h),
            m: grid.m(),
        });
    }
    let (fit, fit_error, ok) = decay_verdict(&rows, DECAY_SLOPE);
    let mut notes = Vec::new();
    let verdict = if w.kind == WindowKind::BumpPositive {
        Verdict::from_bool(ok)
    } else {
        notes.push("window does not vanish near 0: negligibility does not apply".into());
        Verdict::NotApplicable
    };
    Ok(DecayReport {
        check: "negligibility".into(),
        rows,
        fit,
        fit_error,
        threshold: DECAY_SLOPE,
        verdict,
        notes,
    })
}

/// Hull of {x : ‖V₁(x) − V₀(x)‖ > 1e-14} on a fine scan of the box.
pub fn difference_support(v0: &MatrixPotential, v1: &MatrixPotential, r: f64) -> Option<(f64, f64)> {
    let n = 20_000;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..=n {
        let x = -r + 2.0 * r * i as f64 / n as f64;
        if v1.eval1(x).sub(&v0.eval1(x)).max_abs() > 1e-14 {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    (lo <= hi).then_some((lo - 2.0 * r / n as f64, hi + 2.0 * r / n as f64))
}

/// Trace differences for two potentials that agree near supp χ.
#[allow(clippy::too_many_arguments)]
pub fn locality_check(
    v0: &MatrixPotential,
    v1: &MatrixPotential,
    chi: &PhaseCutoff,
    f: &TestFunction,
    w: &WindowTheta,
    tau: f64,
    h_list: &[f64],
    policy: &GridPolicy,
    d_sep: f64,
    strict: bool,
) -> Result<DecayReport> {
    check_h_list(h_list)?;
    if v0.channels() != v1.channels() {
        return Err(Error::Dimension {
            expected: v0.channels(),
            got: v1.channels(),
        });
    }
    let (cx_lo, cx_hi, _, _) = chi.support();
    let distance = match difference_support(v0, v1, policy.r) {
        None => f64::INFINITY,
        Some((lo, hi)) => (lo - cx_hi).max(cx_lo - hi).max(0.0),
    };
    let mut notes = vec![format!("separation {distance:.4} (required {d_sep})")];
    let separated = distance >= d_sep;
    if !separated && strict {
        return Err(Error::Separation {
            distance,
            required: d_sep,
        });
    }
    let mut rows = Vec::new();
    for &h in h_list {
        let grid = policy.grid(h)?;
        let a = quantize_cutoff(chi, grid, v0.channels())?;
        let h0 = build_schrodinger(v0, grid, policy.tau_max)?;
        let h1 = build_schrodinger(v1, grid, policy.tau_max)?;
        let t0 = smoothed_trace(Some(&a), &h0, f, w, tau)?;
        let t1 = smoothed_trace(Some(&a), &h1, f, w, tau)?;
        rows.push(ReportRow {
            h,
            value: (t1 - t0).norm(),
            reference: 0.0,
            rel_error: f64::NAN,
            eps: w.eps.eps(h),
            m: grid.m(),
        });
    }
    let (fit, fit_error, ok) = decay_verdict(&rows, DECAY_SLOPE);
    let verdict = if separated {
        Verdict::from_bool(ok)
    } else {
        notes.push("perturbation meets supp chi: locality does not apply".into());
        Verdict::NotApplicable
    };
    Ok(DecayReport {
        check: "locality".into(),
        rows,
        fit,
        fit_error,
        threshold: DECAY_SLOPE,
        verdict,
        notes,
    })
}

/// (2πh)·tr(χʷ f(p₁ʷ) F_h⁻¹θ_ε(τ − p₁ʷ)) against f(τ)·γ₀^χ(τ).
#[allow(clippy::too_many_arguments)]
pub fn leading_term_check(
    v: &MatrixPotential,
    certificate: Option<&MicrohyperbolicityCertificate>,
    chi: &PhaseCutoff,
    f: &TestFunction,
    w: &WindowTheta,
    tau: f64,
    h_list: &[f64],
    policy: &GridPolicy,
    rel_tol: f64,
) -> Result<DecayReport> {
    check_h_list(h_list)?;
    if certificate.is_none() {
        return Ok(DecayReport::not_certified(
            "leading_term",
            rel_tol,
            "no microhyperbolicity certificate on the energy shell",
        ));
    }
    let p = MatrixSymbol::schrodinger(v);
    let lg = gamma0_localized(&p, chi, tau, 0.05)?;
    let reference = f.eval(tau) * lg.value;
    let mut notes = vec![format!(
        "gamma0_localized = {:.10e} (error {:.2e}, converged {})",
        lg.value, lg.error, lg.converged
    )];
    let mut rows = Vec::new();
    for &h in h_list {
        let grid = policy.grid(h)?;
        let hop = build_schrodinger(v, grid, policy.tau_max)?;
        let a = quantize_cutoff(chi, grid, v.channels())?;
        let t = smoothed_trace(Some(&a), &hop, f, w, tau)?;
        let value = 2.0 * PI * h * t.re;
        let diff = (value - reference).abs();
        let rel = if reference != 0.0 { diff / reference.abs() } else { diff };
        rows.push(ReportRow {
            h,
            value,
            reference,
            rel_error: rel,
            eps: w.eps.eps(h),
            m: grid.m(),
        });
    }
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, (r.value - r.reference).abs())).collect();
    let (fit, fit_error) = match fit_order(&pairs) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let last = rows.last().map_or(f64::INFINITY, |r| r.rel_error);
    if !lg.converged {
        notes.push("localized coefficient did not converge".into());
    }
    Ok(DecayReport {
        check: "leading_term".into(),
        rows,
        fit,
        fit_error,
        threshold: rel_tol,
        verdict: Verdict::from_bool(last <= rel_tol && lg.converged),
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbols::{model_potential, ModelSpec};

    #[test]
    fn coverage_rule() {
        let m = Grid1D::required_points(12.0, 1.0 / 16.0, 3.0);
        let g = Grid1D::new(12.0, m, 1.0 / 16.0).unwrap();
        assert!(g.tau_max() >= 3.0 * (1.0 - 1e-12));
        let g2 = Grid1D::new(12.0, m - 2, 1.0 / 16.0).unwrap();
        assert!(matches!(g2.check_coverage(3.0), Err(Error::Coverage { .. })));
        assert!(matches!(
            Grid1D::for_coverage(12.0, 1e-4, 3.0, 8192),
            Err(Error::ResourceCap { .. })
        ));
    }

    #[test]
    fn free_spectrum_matches_dense() {
        let g = Grid1D::new(3.0, 32, 0.25).unwrap();
        let v0 = model_potential(&ModelSpec::Constant { values: vec![0.0] }).unwrap();
        let op = build_schrodinger(&v0, g, 0.0).unwrap();
        let OpMatrix::Real(m) = op.matrix() else { panic!("real") };
        let dense = dense_real_eigenvalues(m.as_ref());
        for (a, b) in dense.iter().zip(op.eigenvalues()) {
            assert!((a - b).abs() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn window_mass_is_one() {
        let w = WindowTheta {
            kind: WindowKind::BumpAtZero,
            eps: EpsRule::Fixed { eps: 0.5 },
        };
        assert!((window_primitive(&w, 0.1, 50.0).unwrap() - 1.0).abs() < 1e-8);
        assert!(window_primitive(&w, 0.1, -50.0).unwrap().abs() < 1e-8);
        assert!((window_primitive(&w, 0.1, 0.0).unwrap() - 0.5).abs() < 1e-15);
    }
}
