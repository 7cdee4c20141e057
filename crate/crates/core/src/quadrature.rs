//! Gauss–Legendre and adaptive Gauss–Kronrod quadrature.

use std::ops::{Add, Mul, Sub};
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Values that adaptive quadrature can accumulate.
pub trait QuadValue: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
];
const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077208980116640,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult<T = f64> {
    pub value: T,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadParams {
    pub atol: f64,
    pub rtol: f64,
    pub max_intervals: usize,
}

impl Default for QuadParams {
    fn default() -> Self {
        Self {
            atol: 1e-10,
            rtol: 1e-12,
            max_intervals: 4000,
        }
    }
}

impl QuadParams {
    pub fn with_atol(atol: f64) -> Self {
        Self {
            atol,
            ..Self::default()
        }
    }
}

/// 21-point Kronrod estimate and |K21 − G10| on [a, b].
pub fn gk21<T: QuadValue, F: FnMut(f64) -> T>(f: &mut F, a: f64, b: f64) -> (T, f64) {
    let c = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[10];
    let mut g = T::zero();
    for i in 0..10 {
        let dx = hw * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k = k + s * WGK[i];
        if i % 2 == 1 {
            g = g + s * WG[i / 2];
        }
    }
    (k * hw, ((k - g) * hw).magnitude())
}

struct Panel<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

/// Adaptive Gauss–Kronrod over [a, b] with optional interior breakpoints.
/// Summation is over panels sorted by left endpoint, so the result is
/// deterministic for a given integrand.
pub fn integrate<T: QuadValue, F: FnMut(f64) -> T>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    params: QuadParams,
) -> Result<QuadResult<T>> {
    let (r, met) = integrate_best_effort(f, a, b, breaks, params)?;
    if !met {
        return Err(Error::Quadrature {
            value: r.value.magnitude(),
            error: r.error,
        });
    }
    Ok(r)
}

/// Like [`integrate`], but an exhausted interval budget returns the current
/// estimate with `false` instead of an error. Non-finite values still fail.
pub fn integrate_best_effort<T: QuadValue, F: FnMut(f64) -> T>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    params: QuadParams,
) -> Result<(QuadResult<T>, bool)> {
    if a == b {
        return Ok((
            QuadResult {
                value: T::zero(),
                error: 0.0,
                evaluations: 0,
            },
            true,
        ));
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut pts: Vec<f64> = vec![lo];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > lo && x < hi).collect();
    inner.sort_by(|x, y| x.total_cmp(y));
    inner.dedup();
    pts.extend(inner);
    pts.push(hi);

    let mut panels: Vec<Panel<T>> = Vec::new();
    let mut evals = 0usize;
    let mut met = true;
    for w in pts.windows(2) {
        let (v, e) = gk21(&mut f, w[0], w[1]);
        evals += 21;
        panels.push(Panel {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
        });
    }
    loop {
        let total = panels.iter().fold(T::zero(), |acc, p| acc + p.value).magnitude();
        let err: f64 = panels.iter().map(|p| p.error).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Quadrature {
                value: total,
                error: err,
            });
        }
        if err <= params.atol.max(params.rtol * total) {
            break;
        }
        if panels.len() >= params.max_intervals {
            met = false;
            break;
        }
        let mut worst = 0usize;
        for (i, p) in panels.iter().enumerate() {
            if p.error > panels[worst].error {
                worst = i;
            }
        }
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            // interval cannot be split further in floating point
            panels.push(Panel { error: 0.0, ..p });
            continue;
        }
        let (v1, e1) = gk21(&mut f, p.a, mid);
        let (v2, e2) = gk21(&mut f, mid, p.b);
        evals += 42;
        panels.push(Panel {
            a: p.a,
            b: mid,
            value: v1,
            error: e1,
        });
        panels.push(Panel {
            a: mid,
            b: p.b,
            value: v2,
            error: e2,
        });
    }
    panels.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value = panels.iter().fold(T::zero(), |acc, p| acc + p.value) * sign;
    let error = panels.iter().map(|p| p.error).sum();
    Ok((
        QuadResult {
            value,
            error,
            evaluations: evals,
        },
        met,
    ))
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Cached 16-point rule.
pub fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// Composite Gauss–Legendre with `panels` equal panels of `order` nodes.
pub fn composite_gl<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        let mut s = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            s += wi * f(c + 0.5 * h * xi);
        }
        total += 0.5 * h * s;
    }
    total
}

/// Pairwise summation in index order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Bisection for a sign change of `f` on [a, b].
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Sign changes of `f` on a uniform scan of [a, b], refined by bisection.
pub fn find_roots<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, scan: usize, tol: f64) -> Vec<f64> {
    let mut roots = Vec::new();
    let step = (b - a) / scan as f64;
    let mut x0 = a;
    let mut f0 = f(x0);
    for i in 1..=scan {
        let x1 = if i == scan { b } else { a + i as f64 * step };
        let f1 = f(x1);
        if f0 == 0.0 {
            roots.push(x0);
        } else if (f0 > 0.0) != (f1 > 0.0) && f1 != 0.0 {
            roots.push(bisect(&f, x0, x1, tol));
        }
        x0 = x1;
        f0 = f1;
    }
    if f0 == 0.0 {
        roots.push(x0);
    }
    roots.dedup_by(|x, y| (*x - *y).abs() <= tol);
    roots
}
