//! Bounded worker pool with per-case error isolation.

use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::CaseManifest;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct CaseError {
    pub case_id: String,
    pub stage: String,
    pub message: String,
}

pub fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    let n = if jobs == 0 { std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1) } else { jobs };
    Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?)
}

/// Runs `f` on every case inside `pool`. Successful outputs and errors are
/// both returned sorted by case id, independent of completion order.
pub fn run_cases<T, F>(
    pool: &rayon::ThreadPool,
    cases: &[CaseManifest],
    stage: &str,
    f: F,
) -> (Vec<(String, T)>, Vec<CaseError>)
where
    T: Send,
    F: Fn(&CaseManifest) -> Result<T> + Sync,
{
    let results: Vec<(String, Result<T>)> =
        pool.install(|| cases.par_iter().map(|c| (c.case_id.clone(), f(c))).collect());
    let mut ok = Vec::new();
    let mut errors = Vec::new();
    for (id, r) in results {
        match r {
            Ok(v) => ok.push((id, v)),
            Err(e) => {
                log::error!("case {id}: {e:#}");
                errors.push(CaseError { case_id: id, stage: stage.to_string(), message: format!("{e:#}") });
            }
        }
    }
    ok.sort_by(|a, b| a.0.cmp(&b.0));
    errors.sort();
    (ok, errors)
}
