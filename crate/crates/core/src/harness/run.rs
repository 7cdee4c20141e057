//! Experiment execution.

use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{EscapeKind, ExperimentConfig, Family, Resolved, ShellSpec, Task, TraceCheck};
use super::report::{Artifact, ExperimentOutcome, RunSummary, RunVerdict};
use crate::coefficients::{c0, gamma0, CoeffParams, CoefficientProfile};
use crate::error::{Error, Result};
use crate::microhyperbolicity::{
    check_on_energy_shell, default_shell_tol, escape_check_dilation, escape_check_general, Direction, DirectionMode,
    EscapeFunction, MhFailure, MicrohyperbolicityCertificate,
};
use crate::quantization::{negligibility_check, locality_check, leading_term_check, DecayReport, GridPolicy, Verdict};
use crate::ssf::{derivative_check, weak_check, weyl_check, PairFamily, SsfEstimate, SsfMethod};
use crate::symbols::{model_potential, MatrixPotential, MatrixSymbol, ModelSpec};

fn to_value<T: Serialize>(t: &T) -> Result<Value> {
    Ok(serde_json::to_value(t)?)
}

/// Certificate-shaped record for a failed check.
fn failure_value(tau0: f64, e: &MhFailure) -> Value {
    let n_points = match e {
        MhFailure::Points { n_points, .. } => *n_points,
        _ => 0,
    };
    json!({
        "tau0": tau0,
        "T": null,
        "C0": null,
        "C1": null,
        "margin": null,
        "n_points": n_points,
        "failures": e.failures(),
        "error": e.to_string(),
    })
}

/// Hard errors (bad input, empty samples) versus a failed hypothesis.
fn is_hard(e: &MhFailure) -> bool {
    matches!(e, MhFailure::Invalid(_) | MhFailure::EmptyShell)
}

fn hard(e: MhFailure) -> Error {
    match e {
        MhFailure::Invalid(e) => e,
        other => Error::InvalidParameter(other.to_string()),
    }
}

fn shell_certificate(
    p: &MatrixSymbol,
    tau: f64,
    spec: &ShellSpec,
) -> Result<std::result::Result<MicrohyperbolicityCertificate, MhFailure>> {
    let tol = spec.shell_tol.unwrap_or_else(|| default_shell_tol(tau));
    match check_on_energy_shell(p, tau, &spec.phase_box, tol, DirectionMode::PerPointT, None, spec.per_axis) {
        Err(e) if is_hard(&e) => Err(hard(e)),
        r => Ok(r),
    }
}

fn cert_value(tau: f64, r: &std::result::Result<MicrohyperbolicityCertificate, MhFailure>) -> Result<Value> {
    match r {
        Ok(c) => to_value(c),
        Err(e) => Ok(failure_value(tau, e)),
    }
}

fn report_table(file: &str, r: &DecayReport) -> Result<Value> {
    let mut v = to_value(r)?;
    v["file"] = json!(file);
    v["columns"] = json!(["h", "value", "reference", "rel_error", "fitted_slope"]);
    Ok(v)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

struct Partial {
    verdict: RunVerdict,
    certificates: Vec<(String, Value)>,
    table: Value,
    artifacts: Vec<Artifact>,
}

fn decay_partial(name: &str, r: &DecayReport, certificates: Vec<(String, Value)>) -> Result<Partial> {
    let file = format!("{name}.csv");
    Ok(Partial {
        verdict: RunVerdict::Check(r.verdict),
        certificates,
        table: report_table(&file, r)?,
        artifacts: vec![Artifact {
            bytes: csv_bytes(|b| r.write_csv(b))?,
            file,
        }],
    })
}

/// Runs experiments; keeps the operator families of the SSF checks alive so
/// experiments with equal settings share eigendecompositions.
pub struct Runner {
    families: Vec<(String, PairFamily)>,
    params: CoeffParams,
}

impl Default for Runner {
    fn default() -> Self {
        Self::new()
    }
}

impl Runner {
    pub fn new() -> Self {
        Self {
            families: Vec::new(),
            params: CoeffParams::default(),
        }
    }

    fn family(&mut self, spec: &ModelSpec, v: &MatrixPotential, policy: GridPolicy, h: &[f64]) -> Result<&PairFamily> {
        let key = serde_json::to_string(&(spec, policy, h))?;
        let idx = match self.families.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                let fam = PairFamily::build(v, h, policy)?;
                fam.prepare();
                self.families.push((key, fam));
                self.families.len() - 1
            }
        };
        Ok(&self.families[idx].1)
    }

    pub fn run_one(&mut self, e: &Resolved) -> Result<ExperimentOutcome> {
        let start = Instant::now();
        let v = model_potential(&e.potential)?;
        let name = e.name.as_str();
        let (kind, partial) = match &e.task {
            Task::CheckMh {
                tau0,
                shell,
                mode,
                direction,
            } => ("check-mh", self.check_mh(name, &v, *tau0, shell, *mode, direction.as_deref())?),
            Task::CheckEscape {
                tau0,
                x_range,
                nx,
                escape,
                allowed_tol,
            } => (
                "check-escape",
                self.check_escape(name, &v, *tau0, *x_range, *nx, *escape, *allowed_tol)?,
            ),
            Task::Coeffs { tau, dimension } => {
                let taus = tau.values()?;
                let prof = CoefficientProfile::compute(&v, &taus, *dimension, &self.params)?;
                let file = format!("{name}_coeffs.csv");
                (
                    "coeffs",
                    Partial {
                        verdict: RunVerdict::Complete,
                        certificates: vec![],
                        table: json!({"file": file, "columns": ["tau", "gamma0", "a0"], "n": dimension}),
                        artifacts: vec![Artifact {
                            bytes: csv_bytes(|b| prof.write_csv(b))?,
                            file,
                        }],
                    },
                )
            }
            Task::Trace { .. } => ("trace", self.trace(e, &v)?),
            _ => ("ssf", self.ssf(e, &v)?),
        };
        Ok(ExperimentOutcome {
            name: e.name.clone(),
            kind,
            verdict: partial.verdict,
            certificates: partial.certificates,
            table: partial.table,
            artifacts: partial.artifacts,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    fn check_mh(
        &self,
        name: &str,
        v: &MatrixPotential,
        tau0: f64,
        shell: &ShellSpec,
        mode: DirectionMode,
        direction: Option<&[f64]>,
    ) -> Result<Partial> {
        let p = MatrixSymbol::schrodinger(v);
        let fixed = direction.map(|d| Direction::new(d.to_vec())).transpose()?;
        let tol = shell.shell_tol.unwrap_or_else(|| default_shell_tol(tau0));
        let r = check_on_energy_shell(&p, tau0, &shell.phase_box, tol, mode, fixed.as_ref(), shell.per_axis);
        let (verdict, cert) = match r {
            Ok(c) => (Verdict::Pass, to_value(&c)?),
            Err(e) if is_hard(&e) => return Err(hard(e)),
            Err(e) => (Verdict::Fail, failure_value(tau0, &e)),
        };
        let file = format!("{name}_certificate.json");
        Ok(Partial {
            verdict: RunVerdict::Check(verdict),
            table: json!({ "file": file }),
            artifacts: vec![Artifact {
                bytes: serde_json::to_vec_pretty(&cert)?,
                file,
            }],
            certificates: vec![(name.to_string(), cert)],
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn check_escape(
        &self,
        name: &str,
        v: &MatrixPotential,
        tau0: f64,
        x_range: [f64; 2],
        nx: usize,
        kind: EscapeKind,
        allowed_tol: f64,
    ) -> Result<Partial> {
        let r = match kind {
            EscapeKind::Dilation => escape_check_dilation(v, tau0, (x_range[0], x_range[1]), nx, allowed_tol),
            EscapeKind::General => escape_check_general(
                &MatrixSymbol::schrodinger(v),
                &EscapeFunction::Dilation { scale: 1.0 },
                tau0,
                (x_range[0], x_range[1]),
                nx,
            ),
        };
        let (verdict, cert) = match r {
            Ok(c) => (Verdict::Pass, to_value(&c)?),
            Err(e) if is_hard(&e) => return Err(hard(e)),
            Err(e) => (Verdict::Fail, failure_value(tau0, &e)),
        };
        let file = format!("{name}_certificate.json");
        Ok(Partial {
            verdict: RunVerdict::Check(verdict),
            table: json!({ "file": file }),
            artifacts: vec![Artifact {
                bytes: serde_json::to_vec_pretty(&cert)?,
                file,
            }],
            certificates: vec![(name.to_string(), cert)],
        })
    }

    fn trace(&self, e: &Resolved, v: &MatrixPotential) -> Result<Partial> {
        let Task::Trace {
            check,
            tau,
            cutoff,
            test_function,
            window,
            perturbed,
            d_sep,
            strict,
            rel_tol,
            certificate,
        } = &e.task
        else {
            unreachable!()
        };
        let policy = e.grid.expect("resolved trace experiments have a grid");
        let mut certs = Vec::new();
        let cert = match certificate {
            Some(spec) => {
                let r = shell_certificate(&MatrixSymbol::schrodinger(v), *tau, spec)?;
                certs.push((e.name.clone(), cert_value(*tau, &r)?));
                r.ok()
            }
            None => None,
        };
        let report = match check {
            TraceCheck::Negligibility => negligibility_check(
                v,
                cert.as_ref(),
                cutoff,
                test_function,
                window,
                *tau,
                &e.h_list,
                &policy,
            )?,
            TraceCheck::Locality => {
                let v1 = model_potential(perturbed.as_ref().expect("validated"))?;
                locality_check(
                    v,
                    &v1,
                    cutoff,
                    test_function,
                    window,
                    *tau,
                    &e.h_list,
                    &policy,
                    *d_sep,
                    *strict,
                )?
            }
            TraceCheck::LeadingTerm => leading_term_check(
                v,
                cert.as_ref(),
                cutoff,
                test_function,
                window,
                *tau,
                &e.h_list,
                &policy,
                *rel_tol,
            )?,
        };
        decay_partial(&e.name, &report, certs)
    }

    fn ssf(&mut self, e: &Resolved, v: &MatrixPotential) -> Result<Partial> {
        let policy = e.grid.expect("resolved ssf experiments have a grid");
        let name = e.name.clone();
        let params = self.params;
        match &e.task {
            Task::SsfWeak {
                test_function,
                criteria,
            } => {
                let reference = c0(v, test_function, 1, &params)?;
                let fam = self.family(&e.potential, v, policy, &e.h_list)?;
                let r = weak_check(fam, test_function, reference, *criteria)?;
                decay_partial(&name, &r, vec![])
            }
            Task::SsfWeyl {
                interval,
                n_tau,
                window,
                criteria,
                certificate,
                box_control,
            } => {
                let p = MatrixSymbol::schrodinger(v);
                let mut certs = Vec::new();
                let mut certified = true;
                let mid = 0.5 * (interval[0] + interval[1]);
                for (label, t) in [("lo", interval[0]), ("mid", mid), ("hi", interval[1])] {
                    let r = shell_certificate(&p, t, certificate)?;
                    certified &= r.is_ok();
                    certs.push((format!("{name}.{label}"), cert_value(t, &r)?));
                }
                let taus: Vec<f64> = (0..*n_tau)
                    .map(|i| interval[0] + (interval[1] - interval[0]) * i as f64 / (*n_tau - 1) as f64)
                    .collect();
                let prof = CoefficientProfile::compute(v, &taus, 1, &params)?;
                let a0: Vec<f64> = prof
                    .a0
                    .iter()
                    .map(|a| a.ok_or_else(|| Error::Config(format!("{name}: a0 needs a vanishing limit at infinity"))))
                    .collect::<Result<_>>()?;
                let fam = self.family(&e.potential, v, policy, &e.h_list)?;
                let r = weyl_check(fam, v, window, &taus, &a0, certified, *criteria, *box_control)?;
                let mut part = decay_partial(&name, &r.report, certs)?;
                let ssf_file = format!("{name}_ssf.csv");
                let coeff_file = format!("{name}_coeffs.csv");
                let mut ssf_bytes = Vec::new();
                if certified {
                    for (i, pair) in fam.pairs.iter().enumerate() {
                        SsfEstimate::compute(pair, &taus, SsfMethod::MollifiedCounting, Some(window))?
                            .write_csv(&mut ssf_bytes, i == 0)?;
                    }
                }
                part.table["ssf_file"] = json!(ssf_file);
                part.table["coeff_file"] = json!(coeff_file);
                part.table["box_sensitivity"] = to_value(&r.box_sensitivity)?;
                part.artifacts.push(Artifact {
                    file: ssf_file,
                    bytes: ssf_bytes,
                });
                part.artifacts.push(Artifact {
                    bytes: csv_bytes(|b| prof.write_csv(b))?,
                    file: coeff_file,
                });
                Ok(part)
            }
            Task::SsfDerivative {
                tau0,
                test_function,
                window,
                criteria,
                x_range,
                nx,
            } => {
                let esc = escape_check_dilation(v, *tau0, (x_range[0], x_range[1]), *nx, 1e-12);
                let (certified, cert) = match &esc {
                    Ok(c) => (true, to_value(c)?),
                    Err(err) if is_hard(err) => return Err(hard(esc.unwrap_err())),
                    Err(err) => (false, failure_value(*tau0, err)),
                };
                let reference = gamma0(v, *tau0, 1, &params)?;
                let fam = self.family(&e.potential, v, policy, &e.h_list)?;
                let r = derivative_check(fam, test_function, window, *tau0, reference, certified, *criteria)?;
                decay_partial(&name, &r, vec![(name.clone(), cert)])
            }
            Task::SsfCurve { tau, method, window } => {
                let taus = tau.values()?;
                let fam = self.family(&e.potential, v, policy, &e.h_list)?;
                let mut bytes = Vec::new();
                for (i, pair) in fam.pairs.iter().enumerate() {
                    SsfEstimate::compute(pair, &taus, *method, window.as_ref())?.write_csv(&mut bytes, i == 0)?;
                }
                let file = format!("{name}_ssf.csv");
                Ok(Partial {
                    verdict: RunVerdict::Complete,
                    certificates: vec![],
                    table: json!({
                        "file": file,
                        "columns": ["tau", "value", "method", "h", "eps"],
                        "normalization": "N1 - N0 counted from the spectrum bottom",
                    }),
                    artifacts: vec![Artifact { file, bytes }],
                })
            }
            _ => unreachable!("non-ssf task routed to ssf"),
        }
    }
}

/// Runs the experiments selected by `family` on a pool of `workers` threads
/// (the config value, else all logical cores).
pub fn run(config: &ExperimentConfig, family: Family, workers: Option<usize>) -> Result<RunSummary> {
    config.validate()?;
    let selected = config.select(family)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = workers.or(config.workers) {
        if k == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        builder = builder.num_threads(k);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes = pool.install(|| {
        let mut runner = Runner::new();
        selected.iter().map(|e| runner.run_one(e)).collect::<Result<Vec<_>>>()
    })?;
    Ok(RunSummary::new(serde_json::to_value(config)?, outcomes))
}
