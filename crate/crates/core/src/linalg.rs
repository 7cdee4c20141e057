//! Small dense hermitian matrices and their eigen-decompositions.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative tolerance used when validating user-supplied hermitian input.
pub const HERMITIAN_TOL: f64 = 1e-14;

/// A hermitian N×N matrix. Constructors symmetrize, so the stored entries are
/// exactly hermitian.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    data: DMatrix<C64>,
}

fn max_asymmetry(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn symmetrize(mut m: DMatrix<C64>) -> DMatrix<C64> {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] = C64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
    m
}

impl HermitianMatrix {
    /// Validates hermiticity (tolerance `HERMITIAN_TOL · max(1, max|a_ij|)`) and symmetrizes.
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidParameter("zero-dimensional matrix".into()));
        }
        let scale = m.iter().fold(1.0f64, |acc, z| acc.max(z.norm()));
        let asym = max_asymmetry(&m);
        if asym > HERMITIAN_TOL * scale {
            return Err(Error::NotHermitian { max_asymmetry: asym });
        }
        Ok(Self { data: symmetrize(m) })
    }

    /// Symmetrizes without validation. For matrices assembled from hermitian parts
    /// where only rounding drift is possible.
    pub fn from_computed(m: DMatrix<C64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "square matrix required");
        Self { data: symmetrize(m) }
    }

    pub fn from_real(m: DMatrix<f64>) -> Result<Self> {
        Self::new(m.map(|v| C64::new(v, 0.0)))
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: r.len(),
                });
            }
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let c: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&v| C64::new(v, 0.0)).collect())
            .collect();
        Self::from_rows(&c)
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            data: DMatrix::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            data: DMatrix::identity(n, n),
        }
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self {
            data: DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    C64::new(d[i], 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            }),
        }
    }

    /// Real symmetric 2×2 `[[a, b], [b, d]]`.
    pub fn real2(a: f64, b: f64, d: f64) -> Self {
        let z = |v: f64| C64::new(v, 0.0);
        Self {
            data: DMatrix::from_row_slice(2, 2, &[z(a), z(b), z(b), z(d)]),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[(i, j)]
    }

    pub fn diag_real(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.data[(i, i)].re).collect()
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.data[(i, j)] == C64::new(0.0, 0.0)))
    }

    pub fn is_real(&self) -> bool {
        self.data.iter().all(|z| z.im == 0.0)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            data: &self.data + &other.data,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            data: &self.data - &other.data,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            data: self.data.map(|z| z * s),
        }
    }

    pub fn add_scaled_identity(&self, s: f64) -> Self {
        let mut d = self.data.clone();
        for i in 0..self.dim() {
            d[(i, i)] += C64::new(s, 0.0);
        }
        Self { data: d }
    }

    /// H*H (= H² for hermitian H).
    pub fn square(&self) -> Self {
        Self::from_computed(&self.data * &self.data)
    }

    /// Q* A Q for an N×r matrix Q.
    pub fn project(&self, q: &DMatrix<C64>) -> Self {
        Self::from_computed(q.adjoint() * &self.data * q)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
    }

    /// Max |a_ij − b_ij|.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).norm()))
    }

    /// Spectral norm.
    pub fn norm(&self) -> f64 {
        let ev = eigenvalues(self);
        ev.first().unwrap().abs().max(ev.last().unwrap().abs())
    }

    /// Rows of (re, im) pairs, for serialization.
    pub fn to_pairs(&self) -> Vec<Vec<[f64; 2]>> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| [self.data[(i, j)].re, self.data[(i, j)].im]).collect())
            .collect()
    }
}

/// Sorted eigenvalues e_1 ≤ … ≤ e_N and orthonormal eigenvectors (columns).
#[derive(Debug, Clone)]
pub struct EigenBranchSet {
    pub values: Vec<f64>,
    pub vectors: DMatrix<C64>,
}

impl EigenBranchSet {
    pub fn vector(&self, k: usize) -> nalgebra::DVector<C64> {
        self.vectors.column(k).into_owned()
    }

    /// Σ e_k v_k v_k*.
    pub fn reconstruct(&self) -> DMatrix<C64> {
        let n = self.values.len();
        let mut out = DMatrix::zeros(n, n);
        for k in 0..n {
            let v = self.vectors.column(k);
            out += (v * v.adjoint()) * C64::new(self.values[k], 0.0);
        }
        out
    }
}

fn eig2(a: f64, b: C64, d: f64) -> (f64, f64) {
    let m = 0.5 * (a + d);
    let r = (0.5 * (a - d)).hypot(b.norm());
    (m - r, m + r)
}

/// Rotates each column so its first largest-modulus entry is real positive.
fn fix_phases(v: &mut DMatrix<C64>) {
    let n = v.nrows();
    for k in 0..v.ncols() {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for i in 0..n {
            let a = v[(i, k)].norm();
            if a > best_abs * (1.0 + 1e-12) {
                best_abs = a;
                best = i;
            }
        }
        if best_abs > 0.0 {
            let phase = v[(best, k)].conj() / best_abs;
            for i in 0..n {
                v[(i, k)] *= phase;
            }
            v[(best, k)] = C64::new(v[(best, k)].re, 0.0);
        }
    }
}

/// Eigen-decomposition with sorted eigenvalues and deterministic phases.
pub fn hermitian_eigen(a: &HermitianMatrix) -> EigenBranchSet {
    let n = a.dim();
    let m = a.matrix();
    let mut out = match n {
        1 => EigenBranchSet {
            values: vec![m[(0, 0)].re],
            vectors: DMatrix::identity(1, 1),
        },
        2 => {
            let (av, b, dv) = (m[(0, 0)].re, m[(0, 1)], m[(1, 1)].re);
            let (l1, l2) = eig2(av, b, dv);
            let mut vecs = DMatrix::identity(2, 2);
            if l2 > l1 {
                let c1 = [b, C64::new(l1 - av, 0.0)];
                let c2 = [C64::new(l1 - dv, 0.0), b.conj()];
                let n1 = (c1[0].norm_sqr() + c1[1].norm_sqr()).sqrt();
                let n2 = (c2[0].norm_sqr() + c2[1].norm_sqr()).sqrt();
                let (u, nu) = if n1 >= n2 { (c1, n1) } else { (c2, n2) };
                let u = [u[0] / nu, u[1] / nu];
                vecs[(0, 0)] = u[0];
                vecs[(1, 0)] = u[1];
                vecs[(0, 1)] = -u[1].conj();
                vecs[(1, 1)] = u[0].conj();
            }
            EigenBranchSet {
                values: vec![l1, l2],
                vectors: vecs,
            }
        }
        _ => {
            let eig = nalgebra::SymmetricEigen::new(m.clone());
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
            let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
            let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]);
            EigenBranchSet { values, vectors }
        }
    };
    fix_phases(&mut out.vectors);
    out
}

/// Sorted eigenvalues only.
pub fn eigenvalues(a: &HermitianMatrix) -> Vec<f64> {
    let m = a.matrix();
    match a.dim() {
        1 => vec![m[(0, 0)].re],
        2 => {
            let (l1, l2) = eig2(m[(0, 0)].re, m[(0, 1)], m[(1, 1)].re);
            vec![l1, l2]
        }
        _ => {
            let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
            v.sort_by(|a, b| a.total_cmp(b));
            v
        }
    }
}

pub fn min_eigenvalue(a: &HermitianMatrix) -> f64 {
    eigenvalues(a)[0]
}

/// Sorted eigenvalues of a dense real symmetric matrix (lower triangle read).
pub fn dense_real_eigenvalues(m: faer::MatRef<'_, f64>) -> Vec<f64> {
    let mut v = m
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .expect("symmetric eigenvalue iteration converges");
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Sorted eigenvalues and eigenvector columns of a dense real symmetric matrix.
pub fn dense_real_eigen(m: faer::MatRef<'_, f64>) -> (Vec<f64>, faer::Mat<f64>) {
    let e = m
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("symmetric eigen-decomposition converges");
    sort_eigen(e.S().column_vector().iter().copied().collect(), e.U())
}

/// Sorted eigenvalues of a dense complex hermitian matrix.
pub fn dense_complex_eigenvalues(m: faer::MatRef<'_, C64>) -> Vec<f64> {
    let mut v = m
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .expect("hermitian eigenvalue iteration converges");
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Sorted eigenvalues and eigenvector columns of a dense complex hermitian matrix.
pub fn dense_complex_eigen(m: faer::MatRef<'_, C64>) -> (Vec<f64>, faer::Mat<C64>) {
    let e = m
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("hermitian eigen-decomposition converges");
    let vals: Vec<f64> = e.S().column_vector().iter().map(|z| z.re).collect();
    sort_eigen(vals, e.U())
}

fn sort_eigen<T: Copy>(vals: Vec<f64>, u: faer::MatRef<'_, T>) -> (Vec<f64>, faer::Mat<T>) {
    let n = vals.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
    let values = idx.iter().map(|&i| vals[i]).collect();
    let vectors = faer::Mat::from_fn(u.nrows(), n, |r, c| u[(r, idx[c])]);
    (values, vectors)
}
