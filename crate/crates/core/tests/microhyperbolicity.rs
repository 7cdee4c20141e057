mod common;

use approx::assert_relative_eq;
use common::{simpson, Jet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssf_lab::linalg::HermitianMatrix;
use ssf_lab::microhyperbolicity::{
    boundary_value_extrapolate, check_definition, check_on_energy_shell, check_pointwise, crossing_condition,
    default_shell_tol, escape_check_dilation, escape_check_general, extend_to_global, extended, find_direction,
    flatten_symbol, linearized_block_symbol, local_spectral_radius, verification_points, verify_symbol,
    BoundaryParams, Direction, DirectionMode, EscapeFunction, GIntegrand, MhFailure, PhaseBox, Side,
};
use ssf_lab::symbols::{bump, model_potential, reference_potential, MatrixPotential, MatrixSymbol, ModelSpec, PhaseCutoff};
use ssf_lab::Error;

fn dir(x: f64, xi: f64) -> Direction {
    Direction::new(vec![x, xi]).unwrap()
}

fn free(channels: usize) -> MatrixPotential {
    model_potential(&ModelSpec::Constant {
        values: vec![0.0; channels],
    })
    .unwrap()
}

fn conical() -> MatrixPotential {
    model_potential(&ModelSpec::ConicalCrossing).unwrap()
}

fn shifted(v: &MatrixPotential, tau0: f64) -> MatrixSymbol {
    MatrixSymbol::energy_shifted(&MatrixSymbol::schrodinger(v), tau0)
}

fn gaussian_well(amplitude: f64) -> MatrixPotential {
    model_potential(&ModelSpec::DiagonalBumps {
        amplitudes: vec![amplitude],
        centers: vec![0.0],
        widths: vec![1.0],
        offsets: None,
    })
    .unwrap()
}

/// diag(sin x + ξ, 5), vanishing first entry at the origin.
fn split_symbol() -> MatrixSymbol {
    MatrixSymbol::from_fn(
        1,
        2,
        |r: &[f64]| HermitianMatrix::diagonal(&[r[0].sin() + r[1], 5.0]),
        Some(|r: &[f64]| vec![HermitianMatrix::diagonal(&[r[0].cos(), 0.0]), HermitianMatrix::diagonal(&[1.0, 0.0])]),
    )
}

#[test]
fn pointwise_free_shell() {
    let h = shifted(&free(2), 1.0);
    let c = check_pointwise(&h, &[0.0, 1.0], &dir(0.0, -1.0), None).unwrap();
    assert_relative_eq!(c.c0, 1.0, max_relative = 1e-12);
    assert!(check_definition(&h, &[0.0, 1.0], &dir(0.0, -1.0), c.c0, c.c1).unwrap() >= -1e-12);
}

#[test]
fn pointwise_conical() {
    let h0 = shifted(&conical(), 0.0);
    for k in 0..16 {
        let th = k as f64 * std::f64::consts::PI / 8.0;
        assert!(check_pointwise(&h0, &[0.0, 0.0], &dir(th.cos(), th.sin()), None).is_err(), "direction {k}");
    }
    let h1 = shifted(&conical(), 1.0);
    let c = check_pointwise(&h1, &[0.0, 1.0], &dir(0.0, -1.0), None).unwrap();
    assert_relative_eq!(c.c0, 1.0, max_relative = 1e-12);
}

#[test]
fn definition_slacks() {
    let h = shifted(&free(1), 1.0);
    let t = dir(0.0, -1.0);
    assert_relative_eq!(check_definition(&h, &[0.0, 1.0], &t, 1.0, 0.0).unwrap(), 1.0, epsilon = 1e-9);
    assert_relative_eq!(check_definition(&h, &[0.0, 2.0], &t, 1.0, 0.0).unwrap(), 3.0, epsilon = 1e-9);
    // at ξ = 0 the derivative vanishes and H = 1, so positivity needs C1 > 1
    assert!(check_definition(&h, &[0.0, 0.0], &t, 1.0, 0.9).unwrap() < 0.0);
    assert!(check_definition(&h, &[0.0, 0.0], &t, 1.0, 1.1).unwrap() > 0.0);
}

#[test]
fn direction_search() {
    let t = find_direction(&shifted(&free(1), 1.0), &[0.0, 1.0], None).unwrap();
    assert!(t.components()[0].abs() < 1e-6 && (t.components()[1] + 1.0).abs() < 1e-6);

    assert!(find_direction(&shifted(&conical(), 0.0), &[0.0, 0.0], None).is_err());

    // scalar well on its shell at (1, 1): compare with a brute-force angle scan
    let v = gaussian_well(1.0);
    let tau0 = 1.0 + (-1.0f64).exp();
    let h = shifted(&v, tau0);
    let t = find_direction(&h, &[1.0, 1.0], None).unwrap();
    let grad = [2.0 * (-1.0f64).exp(), -2.0];
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..10_000 {
        let th = 2.0 * std::f64::consts::PI * k as f64 / 10_000.0;
        let s = grad[0] * th.cos() + grad[1] * th.sin();
        if s > best.0 {
            best = (s, th);
        }
    }
    let found = t.components()[1].atan2(t.components()[0]).rem_euclid(2.0 * std::f64::consts::PI);
    let gap = (found - best.1).abs().min(2.0 * std::f64::consts::PI - (found - best.1).abs());
    assert!(gap <= 2.0 * std::f64::consts::PI / 256.0, "{found} vs {}", best.1);
}

#[test]
fn energy_shell_certificates() {
    let bx = PhaseBox::square(2.0, 2);
    let p = MatrixSymbol::schrodinger(&free(1));
    let c = check_on_energy_shell(&p, 1.0, &bx, 0.1, DirectionMode::PerPointT, None, 81).unwrap();
    // grid ξ values on the shell |1 − ξ²| ≤ 0.1 are 0.95 and 1.0; C0 = |ξ|
    assert!(c.c0 >= 0.95 - 1e-9 && c.c0 <= 1.0 + 1e-9, "{}", c.c0);

    let q = MatrixSymbol::schrodinger(&conical());
    match check_on_energy_shell(&q, 0.0, &bx, default_shell_tol(0.0), DirectionMode::PerPointT, None, 81) {
        Err(f) => {
            let fails = f.failures();
            assert!(fails.iter().any(|p| p.rho.iter().all(|r| r.abs() < 1e-9)), "{fails:?}");
        }
        Ok(_) => panic!("conical crossing at the crossing energy must fail"),
    }
    assert!(check_on_energy_shell(&q, 0.5, &bx, default_shell_tol(0.5), DirectionMode::PerPointT, None, 81).is_ok());
}

#[test]
fn crossing_examples() {
    let v = gaussian_well(1.0);
    let e1 = (-1.0f64).exp();
    let (t, c) = crossing_condition(&v, &[1.0], e1, 1e-8).unwrap();
    assert_eq!(t.len(), 1);
    assert!(t[0] < 0.0);
    assert_relative_eq!(c, 1.0 / (2.0 * e1), max_relative = 1e-9);
    assert!(matches!(crossing_condition(&v, &[0.0], 1.0, 1e-8), Err(MhFailure::NoDirection { .. })));
    assert!(crossing_condition(&conical(), &[0.0], 0.0, 1e-8).is_err());

    let w = MatrixPotential::from_fn(
        1,
        HermitianMatrix::zeros(2),
        f64::INFINITY,
        |x: &[f64]| HermitianMatrix::diagonal(&[x[0], 2.0 + x[0] * x[0]]),
        Some(|x: &[f64]| vec![HermitianMatrix::diagonal(&[1.0, 2.0 * x[0]])]),
    )
    .unwrap();
    let (t, c) = crossing_condition(&w, &[0.0], 0.0, 1e-8).unwrap();
    assert!(t[0] > 0.0);
    assert_relative_eq!(c, 1.0, max_relative = 1e-12);
}

#[test]
fn escape_examples() {
    let p = MatrixSymbol::schrodinger(&free(1));
    let c = escape_check_general(&p, &EscapeFunction::Dilation { scale: 1.0 }, 1.0, (-3.0, 3.0), 301).unwrap();
    assert_relative_eq!(c.c, 2.0, max_relative = 1e-12);
    match escape_check_general(&p, &EscapeFunction::Dilation { scale: -1.0 }, 1.0, (-3.0, 3.0), 301) {
        Err(MhFailure::Points { failures, .. }) => {
            assert!(failures.iter().all(|f| (f.value + 2.0).abs() < 1e-12));
        }
        other => panic!("{other:?}"),
    }

    let d = escape_check_dilation(&free(1), 0.7, (-3.0, 3.0), 301, 1e-12).unwrap();
    assert_eq!(d.c, 2.0 * 0.7);

    // diag(e^{−x²}, −e^{−x²}) at τ0 = 3
    let v = model_potential(&ModelSpec::DiagonalBumps {
        amplitudes: vec![1.0, -1.0],
        centers: vec![0.0, 0.0],
        widths: vec![1.0, 1.0],
        offsets: None,
    })
    .unwrap();
    let d = escape_check_dilation(&v, 3.0, (-5.0, 5.0), 2001, 1e-12).unwrap();
    // sup |x·V'/2| = sup x² e^{−x²} = 1/e at x = ±1, sup ‖V‖ = 1
    let want = (-1.0f64).exp() + 1.0;
    assert_relative_eq!(d.sufficient_threshold.unwrap(), want, max_relative = 1e-12);
    assert!(d.c > 0.0);

    // V = e^{−x²}, τ0 = 1: 2(τ0 − v) − x v' = 2 − 2e^{−x²}(1 − x²) touches 0 at x = 0
    match escape_check_dilation(&gaussian_well(1.0), 1.0, (-4.0, 4.0), 2001, 1e-12) {
        Err(MhFailure::Points { failures, .. }) => {
            assert_eq!(failures.len(), 1);
            assert!(failures[0].rho[0].abs() < 1e-12 && failures[0].value.abs() < 1e-12);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn general_escape_matches_dilation() {
    let v = reference_potential();
    let p = MatrixSymbol::schrodinger(&v);
    let worst = |r: Result<_, MhFailure>| match r {
        Ok(c) => {
            let c: ssf_lab::microhyperbolicity::EscapeCertificate = c;
            (true, c.c)
        }
        Err(MhFailure::Points { failures, .. }) => (false, failures.iter().map(|f| f.value).fold(f64::INFINITY, f64::min)),
        Err(e) => panic!("{e:?}"),
    };
    // low energies trap between the wells; both routes must agree either way
    for tau0 in [0.3, 1.0, 2.0, 3.0] {
        let g = worst(escape_check_general(&p, &EscapeFunction::Dilation { scale: 1.0 }, tau0, (-6.0, 6.0), 601));
        let d = worst(escape_check_dilation(&v, tau0, (-6.0, 6.0), 601, 1e-12));
        assert_eq!(g.0, d.0, "tau0 {tau0}");
        assert!((g.1 - d.1).abs() <= 1e-10, "tau0 {tau0}: {} vs {}", g.1, d.1);
    }
    assert!(escape_check_dilation(&v, 2.0, (-6.0, 6.0), 601, 1e-12).is_ok());
}

#[test]
fn linearization_examples() {
    let h = shifted(&conical(), 0.0);
    let h0 = linearized_block_symbol(&h, &[0.0, 0.0], None).unwrap();
    for rho in [[0.3, -0.2], [-1.0, 2.0], [2.5, 0.1]] {
        let want = HermitianMatrix::diagonal(&[-rho[0], rho[0]]);
        assert!(h0.eval(&rho).max_abs_diff(&want) < 1e-9, "{rho:?}");
    }

    let r = shifted(&reference_potential(), 5.0);
    let at = [0.4, 0.2];
    let l = linearized_block_symbol(&r, &at, None).unwrap();
    for rho in [[0.0, 0.0], [3.0, -1.0]] {
        assert!(l.eval(&rho).max_abs_diff(&r.eval(&at)) < 1e-12);
    }

    let s = linearized_block_symbol(&split_symbol(), &[0.0, 0.0], None).unwrap();
    let rho = [0.7, -0.3];
    assert!(s.eval(&rho).max_abs_diff(&HermitianMatrix::diagonal(&[0.4, 5.0])) < 1e-9);

    let amb = MatrixSymbol::from_fn(
        1,
        2,
        |_: &[f64]| HermitianMatrix::diagonal(&[0.0, 5e-6]),
        Some(|_: &[f64]| vec![HermitianMatrix::zeros(2), HermitianMatrix::identity(2)]),
    );
    assert!(matches!(
        linearized_block_symbol(&amb, &[0.0, 0.0], Some(1e-6)),
        Err(Error::AmbiguousKernel { .. })
    ));
}

#[test]
fn extension_examples() {
    let a = split_symbol();
    let affine = MatrixSymbol::from_fn(
        1,
        2,
        |r: &[f64]| HermitianMatrix::diagonal(&[r[0] + r[1], 5.0]),
        Some(|_: &[f64]| vec![HermitianMatrix::diagonal(&[1.0, 0.0]), HermitianMatrix::diagonal(&[1.0, 0.0])]),
    );
    let (ext, _) = extend_to_global(&affine, &[0.0, 0.0], &dir(1.0, 0.0), 1.0, None).unwrap();
    for rho in [[0.1, 0.2], [5.0, -3.0], [40.0, 7.0]] {
        assert!(ext.eval(&rho).max_abs_diff(&affine.eval(&rho)) < 1e-13);
    }
    assert!(extend_to_global(&a, &[0.0, 0.0], &dir(1.0, 0.0), 1.0, None).is_ok());

    let s = shifted(&free(1), 1.0);
    let t = dir(0.0, -1.0);
    let (ext, rep) = extend_to_global(&s, &[0.0, 1.0], &t, 1.0, None).unwrap();
    assert!(rep.worst_slack > 0.0);
    // far field is the linearization 2(1 − ξ): derivative along T is 2
    assert_relative_eq!(check_definition(&ext, &[0.0, 10.0], &t, 0.0, 0.0).unwrap(), 2.0, epsilon = 1e-6);

    let (_, rep) = extend_to_global(&shifted(&conical(), 1.0), &[0.0, 1.0], &t, 1.0, None).unwrap();
    assert!(rep.worst_slack > 0.0);
}

#[test]
fn flattening_examples() {
    let a = 10.0;
    let h = shifted(&reference_potential(), 0.5);
    let f = flatten_symbol(&h, a).unwrap();
    for rho in [[0.0, 0.5], [1.0, -1.0], [-2.0, 1.5]] {
        assert!(h.eval(&rho).norm() < a);
        assert!(f.eval(&rho).max_abs_diff(&h.eval(&rho)) < 1e-12);
    }
    let big = MatrixSymbol::from_fn(1, 1, move |_: &[f64]| HermitianMatrix::diagonal(&[3.0 * a]), None::<fn(&[f64]) -> Vec<HermitianMatrix>>);
    let v = flatten_symbol(&big, a).unwrap().eval(&[0.0, 0.0]).diag_real()[0];
    assert!((a..=2.0 * a).contains(&v), "{v}");

    let s = shifted(&free(1), 1.0);
    let t = dir(0.0, -1.0);
    let rho0 = [0.0, 1.0];
    let (ext, rep) = extend_to_global(&s, &rho0, &t, 1.0, None).unwrap();
    let a = 2.0 * local_spectral_radius(&ext, &rho0, rep.delta);
    let flat = flatten_symbol(&ext, a).unwrap();
    let (worst, _) = verify_symbol(&flat, &verification_points(&rho0, rep.delta), &t, rep.c0, rep.c1).unwrap();
    assert!(worst > 0.0, "{worst}");
}

#[test]
fn boundary_value_examples() {
    let p = MatrixSymbol::schrodinger(&free(1));
    let chi = PhaseCutoff::Radial {
        center: [0.0, 0.0],
        radius: 2.0,
    };
    let plus = boundary_value_extrapolate(&p, &GIntegrand::ResolventFactor, &chi, 1.0, Side::Plus, BoundaryParams::default()).unwrap();
    let minus = boundary_value_extrapolate(&p, &GIntegrand::ResolventFactor, &chi, 1.0, Side::Minus, BoundaryParams::default()).unwrap();
    // shell density ∬ χ δ(1 − ξ²) dρ = ∫ [χ(x, 1) + χ(x, −1)] / 2 dx
    let half = 3.0f64.sqrt();
    let density = simpson(|x| bump((x * x + 1.0).sqrt() / 2.0), -half, half, 20_000);
    let jump = plus.complex() - minus.complex();
    assert_relative_eq!(jump.im, -2.0 * std::f64::consts::PI * density, max_relative = 1e-4);

    let below_p = boundary_value_extrapolate(&p, &GIntegrand::ResolventFactor, &chi, -1.0, Side::Plus, BoundaryParams::default()).unwrap();
    let below_m = boundary_value_extrapolate(&p, &GIntegrand::ResolventFactor, &chi, -1.0, Side::Minus, BoundaryParams::default()).unwrap();
    assert!((below_p.complex() - below_m.complex()).norm() < 1e-10);

    // the crossing energy may not converge, but must report its sequence
    let c = MatrixSymbol::schrodinger(&conical());
    let r = boundary_value_extrapolate(&c, &GIntegrand::Identity, &chi, 0.0, Side::Plus, BoundaryParams::default()).unwrap();
    assert!(!r.contraction.is_empty() || r.converged);
}

#[test]
fn extension_agrees_exactly_near_base_point() {
    let s = shifted(&conical(), 1.0);
    let rho0 = [0.0, 1.0];
    let (ext, rep) = extend_to_global(&s, &rho0, &dir(0.0, -1.0), 1.0, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let r = rep.delta * rng.random_range(0.0..1.0);
        let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let rho = [rho0[0] + r * th.cos(), rho0[1] + r * th.sin()];
        assert_eq!(ext.eval(&rho), s.eval(&rho));
    }
    let h0 = linearized_block_symbol(&s, &rho0, None).unwrap();
    let far = extended(&s, &h0, &rho0, rep.delta);
    assert_eq!(far.eval(&[30.0, 30.0]), h0.eval(&[30.0, 30.0]));
}

/// Pointwise certificate ⇔ definition with some (C0, C1), on random jets.
#[test]
fn definition_and_pointwise_are_equivalent_on_jets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = [0usize; 2];
    for i in 0..200 {
        let jet = Jet::random(&mut rng, 3, 1 + i % 2);
        let h = jet.symbol();
        let t = dir(1.0, 0.0);
        let m = jet.kernel_min([1.0, 0.0]);
        let cert = check_pointwise(&h, &[0.0, 0.0], &t, None);
        if m > 0.05 {
            let c = cert.unwrap_or_else(|e| panic!("jet {i}: m = {m}, {e:?}"));
            assert!(c.c0 <= m + 1e-10);
            assert!(check_definition(&h, &[0.0, 0.0], &t, c.c0, c.c1).unwrap() >= -1e-10);
            // definition with C0 = m/2 needs only a finite C1
            let mut c1 = 1.0;
            while check_definition(&h, &[0.0, 0.0], &t, 0.5 * m, c1).unwrap() <= 0.0 {
                c1 *= 2.0;
                assert!(c1 < 1e9, "jet {i}");
            }
            checked[0] += 1;
        } else if m < -0.05 {
            assert!(cert.is_err(), "jet {i}: m = {m}");
            checked[1] += 1;
        }
        if m.is_finite() && m.abs() > 0.05 {
            // no C1 can push C0 beyond the kernel minimum
            for c1 in [1.0, 1e3, 1e6] {
                assert!(check_definition(&h, &[0.0, 0.0], &t, m + 0.05, c1).unwrap() <= 0.0);
            }
        }
    }
    assert!(checked[0] > 20 && checked[1] > 20, "{checked:?}");
}

proptest! {
    #[test]
    fn reversed_direction_fails(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jet = Jet::random(&mut rng, 3, 1);
        let h = jet.symbol();
        let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let t = dir(th.cos(), th.sin());
        if check_pointwise(&h, &[0.0, 0.0], &t, None).is_ok() {
            prop_assert!(check_pointwise(&h, &[0.0, 0.0], &t.neg(), None).is_err());
        }
    }

    #[test]
    fn certificates_scale_with_the_symbol(seed in 0u64..10_000, s in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jet = Jet::random(&mut rng, 2, 1);
        let h = jet.symbol();
        let hs = h.scaled(s);
        let t = dir(1.0, 0.3);
        let a = check_pointwise(&h, &[0.0, 0.0], &t, None);
        let b = check_pointwise(&hs, &[0.0, 0.0], &t, None);
        prop_assert_eq!(a.is_ok(), b.is_ok());
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert!((b.c0 - s * a.c0).abs() <= 1e-10 * s * a.c0.max(1.0));
        }
        let rho = [0.2, -0.4];
        let d1 = check_definition(&h, &rho, &t, 0.3, 2.0).unwrap();
        let d2 = check_definition(&hs, &rho, &t, 0.3 * s, 2.0 / s).unwrap();
        prop_assert!((d2 - s * d1).abs() <= 1e-9 * s.max(1.0));
    }
}
