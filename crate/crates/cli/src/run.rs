use std::io::Write;

use eulerlab_core::classifier::{self, ClassifierError};
use eulerlab_core::field;
use eulerlab_core::ode::{self, OdeError};
use eulerlab_core::verifier::{self, VerificationStatus, VerifyError};
use eulerlab_core::{GridSpec, IntegratorOptions, ModelParams, SeedData};
use rayon::prelude::*;

use crate::config::{Format, Job, RangeSpec, Task};
use crate::output::{self, ClassRow, FieldRow};
use crate::CliError;

/// Worker threads for `sweep`; unset means one per core.
pub const THREADS_ENV: &str = "EULERLAB_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    VerificationFailed,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::VerificationFailed => 1,
        }
    }
}

fn ode_error(e: OdeError) -> CliError {
    match e {
        OdeError::InvalidTolerance { .. } | OdeError::InvalidHorizon(_) | OdeError::Param(_) => {
            CliError::Config(e.to_string())
        }
        _ => CliError::Numerical(e.to_string()),
    }
}

fn classifier_error(e: ClassifierError) -> CliError {
    match e {
        ClassifierError::Ode(e) => ode_error(e),
        other => CliError::Numerical(other.to_string()),
    }
}

fn verify_error(e: VerifyError) -> CliError {
    match e {
        VerifyError::Ode(e) => ode_error(e),
        VerifyError::BlowupInsideRange { .. } | VerifyError::Quadrature(_) | VerifyError::VacuumOnGrid { .. } => {
            CliError::Numerical(e.to_string())
        }
        other => CliError::Config(other.to_string()),
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn sweep_threads() -> Result<usize, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(0),
    }
}

/// Runs the job and returns the document it produces.
pub fn execute(job: &Job) -> Result<(String, Outcome), CliError> {
    let common = &job.common;
    let format = common.format;
    match &job.task {
        Task::Sweep { xi, a0, a1, gamma, k, mu } => {
            let rows =
                pool(sweep_threads()?)?.install(|| sweep(xi, a0, a1, gamma, *k, *mu, &common.opts, common.quad_tol))?;
            Ok((class_document(&rows, format)?, Outcome::Success))
        }
        // everything else runs on one thread
        task => pool(1)?.install(|| single(task, common.format, &common.opts, common.quad_tol)),
    }
}

fn single(task: &Task, format: Format, opts: &IntegratorOptions, quad_tol: f64) -> Result<(String, Outcome), CliError> {
    match task {
        Task::Classify { seed, params } => {
            let row = classify_row(seed, params, opts, quad_tol)?;
            Ok((class_document(&[row], format)?, Outcome::Success))
        }
        Task::Integrate { seed, params, t_end } => {
            let tr = ode::integrate_with(seed, params, *t_end, opts).map_err(ode_error)?;
            let text = match format {
                Format::Csv => output::trajectory_csv(&tr),
                Format::Json => output::trajectory_json(&tr)?,
            };
            Ok((text, Outcome::Success))
        }
        Task::Field { seed, params, grid, radial } => {
            let rows = field_rows(seed, params, grid, *radial, opts)?;
            let text = match format {
                Format::Csv => output::field_csv(&rows, *radial),
                Format::Json => output::field_json(&rows, *radial)?,
            };
            Ok((text, Outcome::Success))
        }
        Task::Verify { seed, params, grid, thresholds } => {
            let report = verifier::verify(seed, params, grid, thresholds, opts).map_err(verify_error)?;
            let outcome = match report.status {
                VerificationStatus::Passed => Outcome::Success,
                VerificationStatus::Failed => Outcome::VerificationFailed,
            };
            Ok((serde_json::to_string_pretty(&report)? + "\n", outcome))
        }
        Task::Sweep { .. } => unreachable!("sweeps run on their own pool"),
    }
}

fn class_document(rows: &[ClassRow], format: Format) -> Result<String, CliError> {
    Ok(match format {
        Format::Csv => output::class_rows_csv(rows),
        Format::Json if rows.len() == 1 => serde_json::to_string_pretty(&rows[0])? + "\n",
        Format::Json => serde_json::to_string_pretty(rows)? + "\n",
    })
}

fn classify_row(
    seed: &SeedData,
    params: &ModelParams,
    opts: &IntegratorOptions,
    quad_tol: f64,
) -> Result<ClassRow, CliError> {
    let classification =
        classifier::classify_with_integration(seed, params, opts, quad_tol).map_err(classifier_error)?;
    Ok(ClassRow { xi: seed.xi, a0: seed.a0, a1: seed.a1, gamma: params.gamma(), classification })
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    xi: &RangeSpec,
    a0: &RangeSpec,
    a1: &RangeSpec,
    gamma: &RangeSpec,
    k: f64,
    mu: f64,
    opts: &IntegratorOptions,
    quad_tol: f64,
) -> Result<Vec<ClassRow>, CliError> {
    let mut cells = Vec::new();
    for x in xi.values() {
        for a in a0.values() {
            for v in a1.values() {
                for g in gamma.values() {
                    cells.push((x, a, v, g));
                }
            }
        }
    }
    let mut rows = cells
        .par_iter()
        .map(|&(x, a, v, g)| {
            let seed = SeedData::symmetric(a, v, x, 1.0).map_err(|e| CliError::Config(e.to_string()))?;
            let params = ModelParams::with_viscosity(k, g, mu).map_err(|e| CliError::Config(e.to_string()))?;
            classify_row(&seed, &params, opts, quad_tol)
        })
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|p, q| {
        p.xi.total_cmp(&q.xi).then(p.a0.total_cmp(&q.a0)).then(p.a1.total_cmp(&q.a1)).then(p.gamma.total_cmp(&q.gamma))
    });
    Ok(rows)
}

fn field_rows(
    seed: &SeedData,
    params: &ModelParams,
    grid: &GridSpec,
    radial: bool,
    opts: &IntegratorOptions,
) -> Result<Vec<FieldRow>, CliError> {
    let tr = ode::integrate_with(seed, params, grid.t_hi, opts).map_err(ode_error)?;
    if let Some(t) = tr.blowup_time() {
        return Err(CliError::Numerical(format!(
            "solution collapses at t = {t}, before the requested t = {}",
            grid.t_hi
        )));
    }
    let mut rows = Vec::with_capacity((grid.nt + 1) * (grid.nx + 1));
    for i in 0..=grid.nt {
        let t = grid.t(i);
        let state = tr.eval(t).map_err(ode_error)?;
        for j in 0..=grid.nx {
            let x = grid.x(j);
            let sample = if radial {
                match field::eval_radial(x, &state, params, seed.xi) {
                    Ok(s) => s,
                    Err(_) => continue,
                }
            } else {
                field::eval_sample(x, &state, params, seed.xi)
            };
            rows.push(FieldRow { t, sample });
        }
    }
    Ok(rows)
}

/// Executes the job and writes its document to the configured path or stdout.
pub fn run(job: &Job) -> Result<Outcome, CliError> {
    let (text, outcome) = execute(job)?;
    match &job.common.output {
        Some(path) => std::fs::write(path, text.as_bytes())?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(outcome)
}
