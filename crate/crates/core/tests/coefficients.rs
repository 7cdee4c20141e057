mod common;

use std::f64::consts::PI;

use approx::assert_relative_eq;
use common::simpson;
use proptest::prelude::*;
use ssf_lab::coefficients::{
    a0, band_volume, c0, c0_from_gamma0, gamma0, gamma0_localized, gamma0_localized_boundary, omega, CoeffParams,
    CoefficientProfile, TestFunction,
};
use ssf_lab::microhyperbolicity::BoundaryParams;
use ssf_lab::symbols::{bump, model_potential, reference_potential, MatrixPotential, MatrixSymbol, ModelSpec, PhaseCutoff, Profile};

fn well(amplitude: f64, center: f64) -> MatrixPotential {
    model_potential(&ModelSpec::DiagonalBumps {
        amplitudes: vec![amplitude],
        centers: vec![center],
        widths: vec![1.0],
        offsets: None,
    })
    .unwrap()
}

fn p() -> CoeffParams {
    CoeffParams::default()
}

#[test]
fn gamma0_above_the_well_matches_direct_quadrature() {
    // no turning points: γ₀ = ∫ (τ + e^{−x²})^{−½} − τ^{−½} dx
    let tau: f64 = 0.5;
    let want = simpson(|x| (tau + (-x * x).exp()).powf(-0.5) - tau.powf(-0.5), -12.0, 12.0, 200_000);
    assert_relative_eq!(gamma0(&well(-1.0, 0.0), tau, 1, &p()).unwrap(), want, max_relative = 1e-7);

    let want = 2.0 * simpson(|x| (tau + (-x * x).exp()).sqrt() - tau.sqrt(), -12.0, 12.0, 200_000);
    let got = a0(&well(-1.0, 0.0), tau, 1, &p()).unwrap();
    assert_relative_eq!(got, want, max_relative = 1e-7);
    // attractive potential increases the counting function
    assert!(got > 0.0);
    assert!(a0(&well(1.0, 0.0), tau, 1, &p()).unwrap() < 0.0);
}

#[test]
fn gamma0_with_turning_points() {
    // τ = −½ inside the well; x = x_t sin θ removes the inverse square roots
    let tau: f64 = -0.5;
    let xt = 2.0f64.ln().sqrt();
    let want = simpson(
        |th| {
            if th.cos() < 1e-9 {
                // limit at the turning points, where d ≈ ½ x_t² cos²θ
                return 2.0f64.sqrt();
            }
            let x = xt * th.sin();
            xt * th.cos() / ((-x * x).exp() + tau).sqrt()
        },
        -PI / 2.0,
        PI / 2.0,
        200_000,
    );
    assert_relative_eq!(gamma0(&well(-1.0, 0.0), tau, 1, &p()).unwrap(), want, max_relative = 1e-6);
}

#[test]
fn gamma0_in_two_dimensions_is_an_area() {
    // n = 2: γ₀ = π · |{e^{−|x|²} > ½}| = π² ln 2
    let v = well(-1.0, 0.0).radialize(2).unwrap();
    assert_relative_eq!(gamma0(&v, -0.5, 2, &p()).unwrap(), PI * PI * 2.0f64.ln(), max_relative = 1e-8);
}

#[test]
fn zero_potential_and_zero_test_function() {
    let z = model_potential(&ModelSpec::Constant { values: vec![0.0, 0.0] }).unwrap();
    assert_eq!(gamma0(&z, 1.0, 1, &p()).unwrap(), 0.0);
    assert_eq!(a0(&z, 1.0, 1, &p()).unwrap(), 0.0);
    assert_eq!(c0(&reference_potential(), &TestFunction::Zero, 1, &p()).unwrap(), 0.0);
    assert!(omega(4).is_err());
    assert!(gamma0(&reference_potential(), 1.0, 5, &p()).is_err());
}

#[test]
fn c0_duality_with_gamma0() {
    // supports avoid the branch critical values −1.183 and 0.546, where γ₀ is singular
    let v = reference_potential();
    for f in [TestFunction::bump(1.8, 2.2), TestFunction::bump(-0.8, -0.2), TestFunction::plateau(0.7, 0.9, 1.2, 1.5)] {
        let a = c0(&v, &f, 1, &p()).unwrap();
        let b = c0_from_gamma0(&v, &f, 1, &p()).unwrap();
        assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-3), "{f:?}: {a} vs {b}");
    }
}

#[test]
fn translation_invariance() {
    for tau in [-0.5, 0.3, 2.0] {
        let a = gamma0(&well(-1.0, 0.0), tau, 1, &p()).unwrap();
        let b = gamma0(&well(-1.0, 1.7), tau, 1, &p()).unwrap();
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{tau}: {a} vs {b}");
    }
}

#[test]
fn channel_additivity() {
    let both = model_potential(&ModelSpec::DiagonalBumps {
        amplitudes: vec![-1.0, 0.6],
        centers: vec![0.0, 1.0],
        widths: vec![1.0, 0.5],
        offsets: None,
    })
    .unwrap();
    let one = |a: f64, c: f64, w: f64| {
        model_potential(&ModelSpec::DiagonalBumps {
            amplitudes: vec![a],
            centers: vec![c],
            widths: vec![w],
            offsets: None,
        })
        .unwrap()
    };
    for tau in [-0.4, 0.3, 1.5] {
        let s = gamma0(&one(-1.0, 0.0, 1.0), tau, 1, &p()).unwrap() + gamma0(&one(0.6, 1.0, 0.5), tau, 1, &p()).unwrap();
        assert!((gamma0(&both, tau, 1, &p()).unwrap() - s).abs() <= 1e-10 * s.abs().max(1.0));
    }
}

#[test]
fn a0_derivative_is_gamma0() {
    let v = reference_potential();
    let d = 1e-4;
    for i in 0..50 {
        let tau = 1.0 + 2.0 * i as f64 / 49.0;
        let da = (a0(&v, tau + d, 1, &p()).unwrap() - a0(&v, tau - d, 1, &p()).unwrap()) / (2.0 * d);
        let g = gamma0(&v, tau, 1, &p()).unwrap();
        assert!((da - g).abs() <= 1e-4 * g.abs(), "{tau}: {da} vs {g}");
    }
}

#[test]
fn localized_free_shell_density() {
    let chi = PhaseCutoff::Product {
        x: Profile {
            center: 0.0,
            halfwidth: 1.0,
        },
        xi: Profile {
            center: 0.5,
            halfwidth: 1.5,
        },
    };
    let v = model_potential(&ModelSpec::Constant { values: vec![0.0] }).unwrap();
    let p = MatrixSymbol::schrodinger(&v);
    let g = simpson(bump, -1.0, 1.0, 100_000);
    let k = |xi: f64| bump((xi - 0.5) / 1.5);
    for tau in [0.5f64, 1.0] {
        let s = tau.sqrt();
        let want = g * (k(s) + k(-s)) / (2.0 * s);
        let r = gamma0_localized(&p, &chi, tau, 0.05).unwrap();
        assert!(r.converged);
        assert_relative_eq!(r.value, want, max_relative = 1e-5);
        let (b, _) = gamma0_localized_boundary(&p, &chi, tau, BoundaryParams::default()).unwrap();
        assert_relative_eq!(b, want, max_relative = 1e-3);
    }
    let r = gamma0_localized(&p, &PhaseCutoff::Zero, 1.0, 0.05).unwrap();
    assert_eq!(r.value, 0.0);
}

#[test]
fn profile_csv_columns() {
    let prof = CoefficientProfile::compute(&reference_potential(), &[0.5, 2.0], 1, &p()).unwrap();
    let mut buf = Vec::new();
    prof.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("tau,gamma0,a0"));
    assert_eq!(lines.count(), 2);
    assert!(prof.a0.iter().all(|a| a.is_some()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn band_volume_is_monotone(t in -1.0f64..2.5, d in 0.01f64..0.5) {
        let v = reference_potential();
        let p = MatrixSymbol::schrodinger(&v);
        let chi = PhaseCutoff::Radial { center: [0.0, 0.0], radius: 2.0 };
        let lo = band_volume(&p, &chi, t, 1e-12).unwrap();
        let hi = band_volume(&p, &chi, t + d, 1e-12).unwrap();
        prop_assert!(hi >= lo - 1e-10);
    }
}
