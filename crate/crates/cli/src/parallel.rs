//! Worker-count policy and the threaded ensemble fit.
//!
//! Members are identified by id and seeded per id, so fitting them on any
//! number of threads gives bitwise-identical ensembles; only wall time
//! changes. `RESERVOIR_CAST_THREADS` caps the worker count, with 0 or unset
//! meaning one worker per available core.

use std::env;

use reservoir_cast_core::field::FieldSeries;
use reservoir_cast_core::qeesn::{fit_member, QeesnEnsemble, QeesnHyper, QeesnMember};
use reservoir_cast_core::DMatrix;

use crate::error::CliError;

pub const THREADS_VAR: &str = "RESERVOIR_CAST_THREADS";

/// Worker count from the environment, defaulting to the core count.
pub fn thread_cap() -> Result<usize, CliError> {
    let raw = match env::var(THREADS_VAR) {
        Ok(raw) => raw,
        Err(env::VarError::NotPresent) => return Ok(available()),
        Err(env::VarError::NotUnicode(_)) => {
            return Err(CliError::Config(format!("{THREADS_VAR} is not valid UTF-8")))
        }
    };
    let count: usize = raw.trim().parse().map_err(|_| {
        CliError::Config(format!(
            "{THREADS_VAR} must be a nonnegative integer, got `{raw}`"
        ))
    })?;
    Ok(if count == 0 { available() } else { count })
}

fn available() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Fit the shallow ensemble across up to `threads` workers. Worker `w`
/// takes member ids `w, w + threads, ...`; results are reassembled in id
/// order, so the outcome matches the sequential fit exactly.
pub fn fit_qeesn(
    z: &FieldSeries,
    inputs: Option<&DMatrix<f64>>,
    hyper: &QeesnHyper,
    n_res: usize,
    base_seed: u64,
    threads: usize,
) -> Result<QeesnEnsemble, CliError> {
    let workers = threads.min(n_res).max(1);
    if workers == 1 {
        return Ok(QeesnEnsemble::fit(z, inputs, hyper, n_res, base_seed)?);
    }
    let mut fitted: Vec<Option<QeesnMember>> = vec![None; n_res];
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..n_res)
                        .step_by(workers)
                        .map(|id| fit_member(z, inputs, hyper, id, base_seed).map(|m| (id, m)))
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        for handle in handles {
            let batch = handle.join().expect("ensemble worker panicked")?;
            for (id, member) in batch {
                fitted[id] = Some(member);
            }
        }
        Ok::<(), CliError>(())
    })?;
    let members: Vec<QeesnMember> = fitted
        .into_iter()
        .map(|m| m.expect("every member id assigned to a worker"))
        .collect();
    Ok(QeesnEnsemble::from_members(
        z, inputs, hyper, members, base_seed,
    )?)
}
