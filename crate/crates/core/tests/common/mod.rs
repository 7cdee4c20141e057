//! Helpers shared by integration tests: random hermitian jets and small
//! independent oracles.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use ssf_lab::linalg::{HermitianMatrix, C64};
use ssf_lab::symbols::MatrixSymbol;

pub fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> HermitianMatrix {
    let mut m = DMatrix::<C64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = C64::new(rng.random_range(-2.0..2.0), 0.0);
        for j in 0..i {
            let z = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    HermitianMatrix::new(m).unwrap()
}

pub fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<C64> {
    let a = DMatrix::<C64>::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    a.qr().q()
}

/// Affine jet H(x, ξ) = H0 + x·D + ξ·E with a prescribed kernel of H0.
pub struct Jet {
    pub h0: HermitianMatrix,
    pub d: HermitianMatrix,
    pub e: HermitianMatrix,
    /// Orthonormal basis of ker H0, exact by construction.
    pub kernel: DMatrix<C64>,
}

impl Jet {
    pub fn random(rng: &mut ChaCha8Rng, channels: usize, kernel_dim: usize) -> Self {
        let u = random_unitary(rng, channels);
        let lam: Vec<f64> = (0..channels)
            .map(|k| {
                if k < kernel_dim {
                    0.0
                } else {
                    let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    s * rng.random_range(0.5..2.0)
                }
            })
            .collect();
        let diag = DMatrix::<C64>::from_fn(channels, channels, |i, j| if i == j { C64::new(lam[i], 0.0) } else { C64::new(0.0, 0.0) });
        let h0 = HermitianMatrix::from_computed(&u * diag * u.adjoint());
        let kernel = u.columns(0, kernel_dim).into_owned();
        Self {
            h0,
            d: random_hermitian(rng, channels),
            e: random_hermitian(rng, channels),
            kernel,
        }
    }

    pub fn symbol(&self) -> MatrixSymbol {
        let (h0, d, e) = (self.h0.clone(), self.d.clone(), self.e.clone());
        let (d2, e2) = (self.d.clone(), self.e.clone());
        MatrixSymbol::from_fn(
            1,
            self.h0.dim(),
            move |r: &[f64]| h0.add(&d.scale(r[0])).add(&e.scale(r[1])),
            Some(move |_: &[f64]| vec![d2.clone(), e2.clone()]),
        )
    }

    /// Smallest eigenvalue of Q*(t_x D + t_ξ E)Q on the kernel; +∞ for a trivial kernel.
    pub fn kernel_min(&self, t: [f64; 2]) -> f64 {
        if self.kernel.ncols() == 0 {
            return f64::INFINITY;
        }
        let m = self.d.matrix().scale(t[0]) + self.e.matrix().scale(t[1]);
        let p = self.kernel.adjoint() * m * &self.kernel;
        let p = (&p + p.adjoint()).scale(0.5);
        p.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Composite Simpson rule, n even.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}
