//! Trial-parallel Monte Carlo with a fixed reduction order.
//!
//! Trial `t` is keyed by `derive_seed(master, &[t])`. Trials are grouped in
//! chunks of [`CHUNK`] consecutive indices; each chunk is summed in trial
//! order and the chunk sums are combined in chunk order, so the floating
//! point result does not depend on the number of worker threads.

use nalgebra::DVector;
use rayon::prelude::*;
use sdlms_core::estimators::{run_trial, simulate, Algorithm, Trajectory};
use sdlms_core::pde_model::SampleSource;
use sdlms_core::rng::derive_seed;
use sdlms_core::scenario::Scenario;

use crate::error::Result;

pub const CHUNK: usize = 16;

pub fn trial_seed(master: u64, t: usize) -> u64 {
    derive_seed(master, &[t as u64])
}

/// Runs `trial(t, seed)` for `t < trials` in parallel and folds the results
/// with `combine` in trial order within chunks and chunk order overall.
pub fn ordered_reduce<T, F, C>(trials: usize, master: u64, trial: F, combine: C) -> Result<T>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T> + Sync,
    C: Fn(&mut T, T) + Sync,
{
    assert!(trials > 0, "at least one trial");
    let starts: Vec<usize> = (0..trials).step_by(CHUNK).collect();
    let partials: Vec<Result<T>> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + CHUNK).min(trials);
            let mut acc = trial(start, trial_seed(master, start))?;
            for t in start + 1..end {
                combine(&mut acc, trial(t, trial_seed(master, t))?);
            }
            Ok(acc)
        })
        .collect();
    let mut iter = partials.into_iter();
    let mut acc = iter.next().expect("non-empty")?;
    for p in iter {
        combine(&mut acc, p?);
    }
    Ok(acc)
}

/// Ensemble-averaged squared errors over `trials` runs.
pub fn monte_carlo<S: SampleSource + ?Sized>(
    scenario: &Scenario,
    source: &S,
    algorithm: Algorithm,
    horizon: usize,
    trials: usize,
    master: u64,
    global: Option<&DVector<f64>>,
) -> Result<Trajectory> {
    let mut sum = ordered_reduce(
        trials,
        master,
        |_, seed| Ok(run_trial(scenario, source, algorithm, horizon, seed, global)?),
        |acc, t| acc.accumulate(&t).expect("trajectories share a shape"),
    )?;
    sum.scale(1.0 / trials as f64);
    Ok(sum)
}

/// Per-trial iterates `w_{k,i}` at the requested iterations.
pub fn snapshots<S: SampleSource + ?Sized>(
    scenario: &Scenario,
    source: &S,
    algorithm: Algorithm,
    seed: u64,
    checkpoints: &[usize],
) -> Result<Vec<Vec<DVector<f64>>>> {
    let horizon = checkpoints.iter().max().map_or(0, |&c| c + 1);
    let mut out = Vec::with_capacity(checkpoints.len());
    simulate(scenario, source, algorithm, horizon, seed, |rec| {
        if checkpoints.contains(&(rec.iteration as usize)) {
            out.push(rec.w.to_vec());
        }
    })?;
    Ok(out)
}

/// Per-coordinate ensemble mean and standard error of the stacked iterates
/// at each checkpoint.
#[derive(Debug, Clone)]
pub struct EnsembleMoments {
    pub trials: usize,
    pub mean: Vec<DVector<f64>>,
    pub std_error: Vec<DVector<f64>>,
}

pub fn ensemble_moments<S: SampleSource + ?Sized>(
    scenario: &Scenario,
    source: &S,
    algorithm: Algorithm,
    trials: usize,
    master: u64,
    checkpoints: &[usize],
) -> Result<EnsembleMoments> {
    let stack = |ws: &[DVector<f64>]| sdlms_core::linalg::stack(ws);
    let (sum, sum_sq) = ordered_reduce(
        trials,
        master,
        |_, seed| {
            let snaps = snapshots(scenario, source, algorithm, seed, checkpoints)?;
            let s: Vec<DVector<f64>> = snaps.iter().map(|w| stack(w)).collect();
            let sq = s.iter().map(|v| v.component_mul(v)).collect::<Vec<_>>();
            Ok((s, sq))
        },
        |acc, (s, sq)| {
            for (a, b) in acc.0.iter_mut().zip(s) {
                *a += b;
            }
            for (a, b) in acc.1.iter_mut().zip(sq) {
                *a += b;
            }
        },
    )?;
    let t = trials as f64;
    let mean: Vec<DVector<f64>> = sum.iter().map(|s| s / t).collect();
    let std_error = sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, m)| {
            let var = (sq / t - m.component_mul(m)).map(|v| v.max(0.0)) * (t / (t - 1.0).max(1.0));
            var.map(|v| (v / t).sqrt())
        })
        .collect();
    Ok(EnsembleMoments {
        trials,
        mean,
        std_error,
    })
}
