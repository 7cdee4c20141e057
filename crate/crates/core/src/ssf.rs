//! Spectral shift estimators for the pair P₁ = −h²Δ + V, P₀ = −h²Δ + V∞ on a
//! shared periodic grid, and the h-sweeps that compare them with the
//! leading coefficients.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::coefficients::TestFunction;
use crate::error::{Error, Result};
use crate::harness::fit::fit_order;
use crate::quantization::{
    build_schrodinger, window_primitive, DecayReport, Grid1D, GridOperator, GridPolicy, ReportRow, TraceContext,
    Verdict, WindowKind, WindowTheta,
};
use crate::symbols::{model_potential, MatrixPotential, ModelSpec};

/// P₁ and P₀ on one grid.
#[derive(Debug)]
pub struct OperatorPair {
    pub p1: GridOperator,
    pub p0: GridOperator,
}

impl OperatorPair {
    pub fn grid(&self) -> &Grid1D {
        self.p1.grid()
    }

    pub fn h(&self) -> f64 {
        self.grid().h()
    }

    /// Reliable energy window of the shared grid.
    pub fn tau_max(&self) -> f64 {
        self.grid().tau_max()
    }
}

/// Builds (P₁, P₀). V − V∞ must vanish before the periodic seam.
pub fn build_pair(v: &MatrixPotential, grid: Grid1D, tau_max: f64) -> Result<OperatorPair> {
    if v.decay_radius() >= grid.r() {
        return Err(Error::Margin(format!(
            "potential decays only beyond |x| = {:.3}, box half-width is {}",
            v.decay_radius(),
            grid.r()
        )));
    }
    let v0 = model_potential(&ModelSpec::Constant {
        values: v.thresholds(),
    })?;
    Ok(OperatorPair {
        p1: build_schrodinger(v, grid, tau_max)?,
        p0: build_schrodinger(&v0, grid, tau_max)?,
    })
}

fn check_window(pair: &OperatorPair, top: f64, what: &str) -> Result<()> {
    if top > pair.tau_max() {
        return Err(Error::Window(format!(
            "{what} reaches {top:.4}, grid is reliable up to {:.4}",
            pair.tau_max()
        )));
    }
    Ok(())
}

/// ⟨s′, f⟩ = −tr(f(P₁) − f(P₀)) over the full discrete spectra.
pub fn weak_pairing(pair: &OperatorPair, f: &TestFunction) -> Result<f64> {
    if let Some((_, hi)) = f.support() {
        check_window(pair, hi, "test function support")?;
    }
    let s1: f64 = pair.p1.eigenvalues().iter().map(|&l| f.eval(l)).sum();
    let s0: f64 = pair.p0.eigenvalues().iter().map(|&l| f.eval(l)).sum();
    Ok(-(s1 - s0))
}

fn count_le(values: &[f64], tau: f64) -> usize {
    values.partition_point(|&l| l <= tau)
}

/// N₁(τ) − N₀(τ), ties counted with multiplicity.
pub fn ssf_counting(pair: &OperatorPair, tau: f64) -> i64 {
    count_le(pair.p1.eigenvalues(), tau) as i64 - count_le(pair.p0.eigenvalues(), tau) as i64
}

fn mollified_count(values: &[f64], w: &WindowTheta, h: f64, tau: f64) -> Result<f64> {
    let mut s = 0.0;
    for &l in values {
        s += window_primitive(w, h, tau - l)?;
    }
    Ok(s)
}

/// Σ Θ_ε(τ − λ_j⁽¹⁾) − Σ Θ_ε(τ − λ_j⁽⁰⁾), Θ_ε the primitive of F_h⁻¹θ_ε.
pub fn ssf_mollified(pair: &OperatorPair, w: &WindowTheta, tau: f64) -> Result<f64> {
    if w.kind != WindowKind::BumpAtZero {
        return Err(Error::Window("mollified counting needs the even window".into()));
    }
    check_window(pair, tau, "energy")?;
    let h = pair.h();
    Ok(mollified_count(pair.p1.eigenvalues(), w, h, tau)? - mollified_count(pair.p0.eigenvalues(), w, h, tau)?)
}

/// Σ f(λ⁽¹⁾) F_h⁻¹θ_ε(τ − λ⁽¹⁾) − Σ f(λ⁽⁰⁾) F_h⁻¹θ_ε(τ − λ⁽⁰⁾).
pub fn mollified_derivative(pair: &OperatorPair, f: &TestFunction, w: &WindowTheta, tau: f64) -> Result<f64> {
    if let Some((_, hi)) = f.support() {
        check_window(pair, hi, "test function support")?;
    }
    let d1 = TraceContext::new(None, &pair.p1, f)?.eval(w, tau);
    let d0 = TraceContext::new(None, &pair.p0, f)?.eval(w, tau);
    Ok((d1 - d0).re)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SsfMethod {
    Counting,
    MollifiedCounting,
}

impl SsfMethod {
    pub fn label(&self) -> &'static str {
        match self {
            SsfMethod::Counting => "counting",
            SsfMethod::MollifiedCounting => "mollified_counting",
        }
    }
}

/// s_h on an energy grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SsfEstimate {
    pub tau_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub method: SsfMethod,
    /// Normalization: counted from the bottom of both spectra.
    pub normalization: String,
    pub h: f64,
    pub r: f64,
    pub m: usize,
    pub eps: Option<f64>,
}

impl SsfEstimate {
    pub fn compute(pair: &OperatorPair, taus: &[f64], method: SsfMethod, w: Option<&WindowTheta>) -> Result<Self> {
        let values = match method {
            SsfMethod::Counting => taus.iter().map(|&t| ssf_counting(pair, t) as f64).collect(),
            SsfMethod::MollifiedCounting => {
                let w = w.ok_or_else(|| Error::Window("mollified counting needs a window".into()))?;
                taus.iter()
                    .map(|&t| ssf_mollified(pair, w, t))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        let g = pair.grid();
        Ok(Self {
            tau_grid: taus.to_vec(),
            values,
            method,
            normalization: "N1 - N0 counted from the spectrum bottom".into(),
            h: g.h(),
            r: g.r(),
            m: g.m(),
            eps: match method {
                SsfMethod::Counting => None,
                SsfMethod::MollifiedCounting => w.map(|w| w.eps.eps(g.h())),
            },
        })
    }

    /// Appends rows tau, value, method, h, eps; writes the header when asked.
    pub fn write_csv<W: Write>(&self, w: W, header: bool) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        if header {
            wr.write_record(["tau", "value", "method", "h", "eps"])?;
        }
        let eps = self.eps.map(|e| format!("{e:e}")).unwrap_or_default();
        for (t, v) in self.tau_grid.iter().zip(&self.values) {
            wr.write_record([
                format!("{t:e}"),
                format!("{v:e}"),
                self.method.label().to_string(),
                format!("{:e}", self.h),
                eps.clone(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Operator pairs for a decreasing list of h on grids from one policy.
#[derive(Debug)]
pub struct PairFamily {
    pub policy: GridPolicy,
    pub pairs: Vec<OperatorPair>,
}

impl PairFamily {
    pub fn build(v: &MatrixPotential, h_list: &[f64], policy: GridPolicy) -> Result<Self> {
        if h_list.is_empty() || h_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter("h_list must be strictly decreasing".into()));
        }
        let pairs = h_list
            .iter()
            .map(|&h| build_pair(v, policy.grid(h)?, policy.tau_max))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { policy, pairs })
    }

    /// Computes every eigenvalue list (the expensive step).
    pub fn prepare(&self) {
        for p in &self.pairs {
            p.p0.eigenvalues();
            p.p1.eigenvalues();
        }
    }

    pub fn h_list(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.h()).collect()
    }
}

/// Pass criteria for an h-sweep against a reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Criteria {
    /// Minimal fitted order of |value − reference|.
    pub min_order: f64,
    /// Maximal relative error at `at_h`.
    pub rel_tol: f64,
    /// h where the relative error is judged; the smallest h when absent.
    #[serde(default)]
    pub at_h: Option<f64>,
}

fn judged_row(rows: &[ReportRow], at_h: Option<f64>) -> Option<&ReportRow> {
    match at_h {
        None => rows.last(),
        Some(h) => rows.iter().min_by(|a, b| (a.h - h).abs().total_cmp(&(b.h - h).abs())),
    }
}

fn finish(check: &str, rows: Vec<ReportRow>, criteria: Criteria, mut notes: Vec<String>) -> DecayReport {
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, (r.value - r.reference).abs())).collect();
    let (fit, fit_error) = match fit_order(&pairs) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let order_ok = fit.as_ref().is_some_and(|f| f.meets(criteria.min_order));
    let rel_ok = judged_row(&rows, criteria.at_h).is_some_and(|r| r.rel_error <= criteria.rel_tol);
    if let Some(r) = judged_row(&rows, criteria.at_h) {
        notes.push(format!("relative error {:.3e} judged at h = {}", r.rel_error, r.h));
    }
    DecayReport {
        check: check.into(),
        rows,
        fit,
        fit_error,
        threshold: criteria.min_order,
        verdict: Verdict::from_bool(order_ok && rel_ok),
        notes,
    }
}

fn rel(value: f64, reference: f64) -> f64 {
    let d = (value - reference).abs();
    if reference != 0.0 {
        d / reference.abs()
    } else {
        d
    }
}

/// (2πh)·⟨s′, f⟩ against c₀(f).
pub fn weak_check(family: &PairFamily, f: &TestFunction, c0_ref: f64, criteria: Criteria) -> Result<DecayReport> {
    let mut rows = Vec::new();
    for p in &family.pairs {
        let value = 2.0 * PI * p.h() * weak_pairing(p, f)?;
        rows.push(ReportRow {
            h: p.h(),
            value,
            reference: c0_ref,
            rel_error: rel(value, c0_ref),
            eps: f64::NAN,
            m: p.grid().m(),
        });
    }
    Ok(finish("weak", rows, criteria, vec![]))
}

/// One row of the Weyl comparison at a single h.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeylSample {
    pub h: f64,
    pub tau: Vec<f64>,
    pub scaled: Vec<f64>,
    pub a0: Vec<f64>,
}

fn weyl_errors(pair: &OperatorPair, w: &WindowTheta, taus: &[f64], a0: &[f64]) -> Result<(WeylSample, f64, f64)> {
    let h = pair.h();
    let scaled = taus
        .iter()
        .map(|&t| Ok(2.0 * PI * h * ssf_mollified(pair, w, t)?))
        .collect::<Result<Vec<f64>>>()?;
    let abs = scaled.iter().zip(a0).map(|(s, a)| (s - a).abs()).fold(0.0, f64::max);
    let relative = scaled.iter().zip(a0).map(|(s, a)| rel(*s, *a)).fold(0.0, f64::max);
    Ok((
        WeylSample {
            h,
            tau: taus.to_vec(),
            scaled,
            a0: a0.to_vec(),
        },
        abs,
        relative,
    ))
}

/// Weyl comparison report with the per-h tables and the box-size control.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeylReport {
    pub report: DecayReport,
    pub samples: Vec<WeylSample>,
    /// (R, sup error) at the largest h for R and 1.5R.
    pub box_sensitivity: Option<[(f64, f64); 2]>,
}

/// sup_τ |2πh·s_h^ε(τ) − a₀(τ)| over h; `a0` sampled on `taus`.
pub fn weyl_check(
    family: &PairFamily,
    v: &MatrixPotential,
    w: &WindowTheta,
    taus: &[f64],
    a0: &[f64],
    certified: bool,
    criteria: Criteria,
    box_control: bool,
) -> Result<WeylReport> {
    if taus.len() != a0.len() || taus.is_empty() {
        return Err(Error::Dimension {
            expected: taus.len(),
            got: a0.len(),
        });
    }
    if !certified {
        return Ok(WeylReport {
            report: DecayReport {
                check: "weyl".into(),
                rows: vec![],
                fit: None,
                fit_error: None,
                threshold: criteria.min_order,
                verdict: Verdict::NotCertified,
                notes: vec!["energy window is not certified".into()],
            },
            samples: vec![],
            box_sensitivity: None,
        });
    }
    let sup_a0 = a0.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    for p in &family.pairs {
        let (s, abs, relative) = weyl_errors(p, w, taus, a0)?;
        rows.push(ReportRow {
            h: p.h(),
            value: abs,
            reference: sup_a0,
            rel_error: relative,
            eps: w.eps.eps(p.h()),
            m: p.grid().m(),
        });
        samples.push(s);
    }
    let mut notes = vec!["value = sup error, reference = sup |a0|, rel_error = sup relative error".into()];
    let box_sensitivity = if box_control {
        let first = &family.pairs[0];
        let mut pol = family.policy;
        pol.r *= 1.5;
        let big = build_pair(v, pol.grid(first.h())?, pol.tau_max)?;
        let (_, e_big, _) = weyl_errors(&big, w, taus, a0)?;
        notes.push(format!(
            "box sensitivity at h = {}: sup error {:.4e} (R = {}) vs {:.4e} (R = {})",
            first.h(),
            rows[0].value,
            family.policy.r,
            e_big,
            pol.r
        ));
        Some([(family.policy.r, rows[0].value), (pol.r, e_big)])
    } else {
        None
    };
    // order is fitted on the sup error itself
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.value)).collect();
    let (fit, fit_error) = match fit_order(&pairs) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let order_ok = fit.as_ref().is_some_and(|f| f.meets(criteria.min_order));
    let judged = judged_row(&rows, criteria.at_h);
    let rel_ok = judged.is_some_and(|r| r.rel_error <= criteria.rel_tol);
    Ok(WeylReport {
        report: DecayReport {
            check: "weyl".into(),
            rows,
            fit,
            fit_error,
            threshold: criteria.min_order,
            verdict: Verdict::from_bool(order_ok && rel_ok),
            notes,
        },
        samples,
        box_sensitivity,
    })
}

/// (2πh)·d(h, τ₀) against γ₀(τ₀), d the mollified derivative of s_h.
pub fn derivative_check(
    family: &PairFamily,
    f: &TestFunction,
    w: &WindowTheta,
    tau0: f64,
    gamma0_ref: f64,
    certified: bool,
    criteria: Criteria,
) -> Result<DecayReport> {
    if !certified {
        return Ok(DecayReport {
            check: "derivative".into(),
            rows: vec![],
            fit: None,
            fit_error: None,
            threshold: criteria.min_order,
            verdict: Verdict::NotCertified,
            notes: vec!["no escape certificate at tau0".into()],
        });
    }
    let mut rows = Vec::new();
    for p in &family.pairs {
        let value = 2.0 * PI * p.h() * mollified_derivative(p, f, w, tau0)?;
        rows.push(ReportRow {
            h: p.h(),
            value,
            reference: gamma0_ref,
            rel_error: rel(value, gamma0_ref),
            eps: w.eps.eps(p.h()),
            m: p.grid().m(),
        });
    }
    Ok(finish("derivative", rows, criteria, vec![]))
}
