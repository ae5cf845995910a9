//! `poisson-demo`: diffusion estimation of the Poisson input over a grid.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sdlms_core::estimators::{simulate, Trajectory};
use sdlms_core::pde_model::SampleSource;

use crate::config::{ExperimentConfig, SCHEMA_VERSION};
use crate::csv_io::{write_series, write_text};
use crate::error::{HarnessError, Result};
use crate::metrics::{db, network_curve, steady_from_tail, Metric, MetricsSeries};
use crate::run::artifact;
use crate::runner::ordered_reduce;
use crate::setup::{Experiment, Source};
use crate::svg::{heatmap, learning_curves, Curve};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl Stats {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return Self {
                min: f64::NAN,
                max: f64::NAN,
                mean: f64::NAN,
            };
        }
        Self {
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonSummary {
    pub schema_version: u32,
    pub name: String,
    pub grid: (usize, usize),
    pub basis: (usize, usize),
    pub trials: usize,
    pub iterations: usize,
    pub jacobi_iterations: usize,
    pub jacobi_residual: f64,
    /// `max_k |E ĥ_k − h°_k|` at the last iteration, ensemble mean.
    pub max_abs_error: f64,
    pub network_msd_db: f64,
    pub node_msd_db: Stats,
    /// Mean `|Δ MSD|` in dB between grid neighbours.
    pub msd_roughness_db: f64,
    /// Effective per-node SNR; infinite entries (noise-free) are omitted.
    pub snr_db: Stats,
    pub snr_in_design_band: Option<usize>,
    pub runtime_seconds: f64,
}

pub struct PoissonOutput {
    pub summary: PoissonSummary,
    pub truth: DMatrix<f64>,
    pub estimate: DMatrix<f64>,
    pub msd_db: DMatrix<f64>,
    pub snr_db: DMatrix<f64>,
    pub series: MetricsSeries,
    pub files: Vec<PathBuf>,
}

fn roughness(grid: &DMatrix<f64>) -> f64 {
    let (nx, ny) = grid.shape();
    let mut sum = 0.0;
    let mut count = 0usize;
    for a in 0..nx {
        for b in 0..ny {
            if a + 1 < nx {
                sum += (grid[(a + 1, b)] - grid[(a, b)]).abs();
                count += 1;
            }
            if b + 1 < ny {
                sum += (grid[(a, b + 1)] - grid[(a, b)]).abs();
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

pub fn poisson_demo(cfg: &ExperimentConfig) -> Result<PoissonOutput> {
    let started = Instant::now();
    if !cfg.is_2d() {
        return Err(HarnessError::config("poisson-demo needs a poisson-2d scenario"));
    }
    let exp = Experiment::build(cfg)?;
    let Source::Poisson { stream, problem, field } = &exp.source else {
        unreachable!("poisson-2d builds a Poisson source");
    };
    let algorithm = exp.algorithm(cfg.algorithms[0]);
    let (nx, ny) = (problem.nx, problem.ny);
    let n = nx * ny;
    let horizon = cfg.horizon;
    let truth = stream.truth().to_vec();

    let (mut traj, mut final_h) = ordered_reduce(
        cfg.trials,
        cfg.seed,
        |_, seed| {
            let mut t = Trajectory::zeros(n, horizon);
            t.msd_w.fill(f64::NAN);
            let mut last = vec![0.0; n];
            simulate(&exp.scenario, &exp.source, algorithm, horizon, seed, |rec| {
                let i = rec.iteration as usize;
                for k in 0..n {
                    let idx = i * n + k;
                    t.msd_h[idx] = (rec.h[k][0] - truth[k][0]).powi(2);
                    let ea = rec.batch.u[k][0] * (truth[k][0] - rec.prior_h[k][0]);
                    t.emse[idx] = ea * ea;
                    if i + 1 == horizon {
                        last[k] = rec.h[k][0];
                    }
                }
            })?;
            Ok((t, last))
        },
        |acc, (t, last)| {
            acc.0.accumulate(&t).expect("same shape");
            for (a, b) in acc.1.iter_mut().zip(last) {
                *a += b;
            }
        },
    )?;
    let scale = 1.0 / cfg.trials as f64;
    traj.scale(scale);
    final_h.iter_mut().for_each(|h| *h *= scale);

    let grid = |f: &dyn Fn(usize) -> f64| DMatrix::from_fn(nx, ny, |a, b| f(a * ny + b));
    let truth_grid = grid(&|k| truth[k][0]);
    let estimate = grid(&|k| final_h[k]);
    let steady = steady_from_tail(&traj, cfg.steady_window);
    let msd_db = grid(&|k| db(steady.msd_h.nodes[k]));
    let snr_db = grid(&|k| stream.node_snr(k).db());
    let max_abs_error = (&estimate - &truth_grid).amax();
    let band = cfg.poisson.as_ref().and_then(|p| p.snr_db).map(|[lo, hi]| {
        snr_db.iter().filter(|v| (lo..=hi).contains(*v)).count()
    });

    let series = MetricsSeries {
        label: "diffusion".into(),
        trials: cfg.trials,
        sim: traj,
        theory: None,
    };
    let summary = PoissonSummary {
        schema_version: SCHEMA_VERSION,
        name: cfg.name.clone(),
        grid: (nx, ny),
        basis: (cfg.n_b, cfg.n_b2.unwrap_or(1)),
        trials: cfg.trials,
        iterations: horizon,
        jacobi_iterations: field.iterations,
        jacobi_residual: field.residual,
        max_abs_error,
        network_msd_db: db(steady.msd_h.network),
        node_msd_db: Stats::of(msd_db.iter().copied()),
        msd_roughness_db: roughness(&msd_db),
        snr_db: Stats::of(snr_db.iter().copied()),
        snr_in_design_band: band,
        runtime_seconds: started.elapsed().as_secs_f64(),
    };

    let dir = &cfg.output_dir;
    let name = &cfg.name;
    let mut files = Vec::new();
    let mut surface = String::from("k1,k2,x,y,h_true,h_est\n");
    let mut msd = String::from("k1,k2,msd_db,snr_db\n");
    for a in 0..nx {
        for b in 0..ny {
            let (x, y) = ((a + 1) as f64 * problem.dx, (b + 1) as f64 * problem.dx);
            surface.push_str(&format!(
                "{},{},{x},{y},{},{}\n",
                a + 1,
                b + 1,
                truth_grid[(a, b)],
                estimate[(a, b)]
            ));
            msd.push_str(&format!("{},{},{},{}\n", a + 1, b + 1, msd_db[(a, b)], snr_db[(a, b)]));
        }
    }
    let net_msd: Vec<f64> = network_curve(&series.sim, Metric::MsdH).into_iter().map(db).collect();
    let outputs = [
        ("surface.csv", surface),
        ("msd.csv", msd),
        ("true.svg", heatmap(&format!("{name}: true input"), &truth_grid, "")),
        ("estimate.svg", heatmap(&format!("{name}: estimated input"), &estimate, "")),
        ("msd.svg", heatmap(&format!("{name}: steady-state MSD"), &msd_db, "dB")),
        ("snr.svg", heatmap(&format!("{name}: node SNR"), &snr_db, "dB")),
        (
            "learning.svg",
            learning_curves(
                &format!("{name}: network MSD ({} trials)", cfg.trials),
                "MSD (dB)",
                &[Curve {
                    label: "MSD_h sim",
                    values: &net_msd,
                    dashed: false,
                }],
            ),
        ),
        ("summary.json", serde_json::to_string_pretty(&summary).expect("summaries serialize") + "\n"),
    ];
    for (suffix, text) in outputs {
        let path = artifact(dir, name, suffix);
        write_text(&path, &text)?;
        files.push(path);
    }
    let path = artifact(dir, name, "learning.csv");
    write_series(&path, &series)?;
    files.push(path);

    Ok(PoissonOutput {
        summary,
        truth: truth_grid,
        estimate,
        msd_db,
        snr_db,
        series,
        files,
    })
}
