use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sdlms_harness::compare::{compare, CompareOptions};
use sdlms_harness::config::ExperimentConfig;
use sdlms_harness::csv_io::read_curves;
use sdlms_harness::poisson::poisson_demo;
use sdlms_harness::predict::{predict, TheoryReport};
use sdlms_harness::run::{artifact, run};
use sdlms_harness::setup::Experiment;
use sdlms_harness::{presets, HarnessError, Result};

#[derive(Parser)]
#[command(name = "sdlms", about = "Diffusion LMS experiments for space-varying parameters")]
struct Cli {
    /// Master seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte-Carlo trial count (overrides the configuration).
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output directory (overrides the configuration).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Built-in configuration used when no file is given.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo simulation with theory overlays.
    Run { config: Option<PathBuf> },
    /// Theory-only report.
    Predict { config: Option<PathBuf> },
    /// Gap between a simulated CSV and a theory report; exits 1 when over tolerance.
    Compare {
        sim: PathBuf,
        theory: PathBuf,
        /// Allowed steady-state gap in dB.
        #[arg(long, default_value_t = 1.0)]
        tolerance: f64,
        /// Allowed per-iteration gap in dB after `--skip`.
        #[arg(long, default_value_t = 2.0)]
        curve_tolerance: f64,
        /// Leading iterations left out of the per-iteration gap.
        #[arg(long, default_value_t = 50)]
        skip: usize,
        /// Trailing fraction averaged for the simulated steady state.
        #[arg(long, default_value_t = 0.1)]
        window: f64,
    },
    /// Input estimation for the 2D Poisson problem.
    PoissonDemo { config: Option<PathBuf> },
    /// Lists the built-in presets.
    Presets,
}

impl Cli {
    fn config(&self, path: &Option<PathBuf>) -> Result<ExperimentConfig> {
        let mut cfg = match (path, &self.preset) {
            (Some(p), _) => ExperimentConfig::load(p)?,
            (None, Some(name)) => presets::preset(name)?,
            (None, None) => {
                return Err(HarnessError::config("give a configuration file or --preset <name>"));
            }
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(d) = &self.out_dir {
            cfg.output_dir = d.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = cli.config(config)?;
            let out = run(&cfg)?;
            for a in &out.summary.algorithms {
                let ss = &a.steady_state_db;
                print!(
                    "{}: steady-state network MSD_w {:.2} dB, MSD_h {:.2} dB, EMSE {:.2} dB",
                    a.label, ss.msd_w.network, ss.msd_h.network, ss.emse.network
                );
                match a.delta {
                    Some(d) => println!(" (sim − theory: {:+.2} / {:+.2} / {:+.2} dB)", d.msd_w_db, d.msd_h_db, d.emse_db),
                    None => println!(),
                }
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            Ok(true)
        }
        Command::Predict { config } => {
            let cfg = cli.config(config)?;
            let exp = Experiment::build(&cfg)?;
            let mut any = false;
            for &a in &cfg.algorithms {
                let Some(p) = predict(&exp, a)? else { continue };
                any = true;
                let r = &p.report;
                println!("{} ({}): {}", r.name, r.algorithm, r.headline);
                println!("  ρ(ℬ) = {:.9}, ρ(I − ℳℛ) = {:.9}", r.spectral_radius, r.spectral_radius_bound);
                for reason in &r.reasons {
                    println!("  {reason}");
                }
                if let Some(b) = r.bias_norm {
                    println!("  predicted bias ‖lim E w − 𝟙⊗w°‖ = {b:.3e}");
                }
                if let Some(ss) = &r.steady_state_db {
                    println!(
                        "  steady-state network MSD_w {:.3} dB, MSD_h {:.3} dB, EMSE {:.3} dB",
                        ss.msd_w.network, ss.msd_h.network, ss.emse.network
                    );
                }
                let path = artifact(&cfg.output_dir, &cfg.name, &format!("{}_theory.json", r.algorithm));
                r.write(&path)?;
                println!("wrote {}", path.display());
            }
            if !any {
                println!("{}: no network theory applies to the configured algorithms", cfg.name);
            }
            Ok(true)
        }
        Command::Compare {
            sim,
            theory,
            tolerance,
            curve_tolerance,
            skip,
            window,
        } => {
            let table = read_curves(sim)?;
            let report = TheoryReport::load(theory)?;
            let opts = CompareOptions {
                skip: *skip,
                steady_tolerance_db: *tolerance,
                curve_tolerance_db: *curve_tolerance,
                window: *window,
            };
            let cmp = compare(&table, &report, opts)?;
            println!("{}", serde_json::to_string_pretty(&cmp).expect("reports serialize"));
            Ok(cmp.within_tolerance)
        }
        Command::PoissonDemo { config } => {
            let mut cli_cfg = cli.config(config);
            if config.is_none() && cli.preset.is_none() {
                cli_cfg = presets::preset("poisson2d").map(|mut c| {
                    if let Some(s) = cli.seed {
                        c.seed = s;
                    }
                    if let Some(t) = cli.trials {
                        c.trials = t;
                    }
                    if let Some(d) = &cli.out_dir {
                        c.output_dir = d.clone();
                    }
                    c
                });
            }
            let out = poisson_demo(&cli_cfg?)?;
            let s = &out.summary;
            println!(
                "{}: Jacobi residual {:.2e} after {} sweeps; network MSD {:.2} dB; max |ĥ − h°| = {:.3e}",
                s.name, s.jacobi_residual, s.jacobi_iterations, s.network_msd_db, s.max_abs_error
            );
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            Ok(true)
        }
        Command::Presets => {
            for name in presets::names() {
                println!("{name}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
