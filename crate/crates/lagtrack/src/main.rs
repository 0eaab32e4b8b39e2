use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use lagtrack::config::{parse_config, parse_directions, Config};
use lagtrack::format::{
    parse_instance, parse_solution, write_convergence_csv, write_instance, write_solution,
};
use lagtrack::stats::instance_stats;
use lagtrack_core::bca::{run_with_clock, verify, Clock, Termination};
use lagtrack_core::decomposition::decompose;
use lagtrack_core::instance::{check_feasible, energy, Instance};
use lagtrack_core::oracle::{brute_force_solve, DEFAULT_BUDGET};
use lagtrack_core::synth::generate_with_costs;

/// Cell tracking by dual block coordinate ascent.
#[derive(Parser)]
#[command(name = "lagtrack", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance and print ENERGY, BOUND and GAP.
    Solve {
        instance: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Solution output file.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Per-sweep convergence log as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Sweep directions after which a primal is extracted.
        #[arg(long, value_parser = parse_directions)]
        direction: Option<lagtrack_core::primal::PrimalDirections>,
        #[arg(long)]
        max_sweeps: Option<usize>,
        #[arg(long)]
        gap: Option<f64>,
    },
    /// Check a solution against an instance.
    Check {
        instance: PathBuf,
        solution: PathBuf,
    },
    /// Write a synthetic instance.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        frames: Option<u32>,
        /// Instance output file; stdout if absent.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Also write the ground-truth assignment as a solution file.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Solve a small instance exactly by enumeration.
    Oracle {
        instance: PathBuf,
        /// Largest number of binary variables accepted.
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: usize,
    },
    /// Print instance statistics.
    Stats { instance: PathBuf },
}

/// Exit code 1: bad input or rejected solution. Exit code 2: the solver
/// broke one of its own invariants.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(error: E) -> Self {
        Failure {
            code: 1,
            error: error.into(),
        }
    }
}

fn internal(error: anyhow::Error) -> Failure {
    Failure { code: 2, error }
}

struct WallClock(Instant);

impl Clock for WallClock {
    fn elapsed_seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load_instance(path: &Path) -> anyhow::Result<Instance> {
    parse_instance(&read(path)?).with_context(|| format!("{}", path.display()))
}

fn load_config(path: Option<&PathBuf>) -> anyhow::Result<Config> {
    match path {
        None => Ok(Config::default()),
        Some(p) => parse_config(&read(p)?).with_context(|| format!("{}", p.display())),
    }
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::MaxSweeps => "max_sweeps",
        Termination::GapReached => "gap_reached",
        Termination::Stalled => "stalled",
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Solve {
            instance,
            config,
            out,
            csv,
            direction,
            max_sweeps,
            gap,
        } => {
            let inst = load_instance(&instance)?;
            let mut cfg = load_config(config.as_ref())?;
            if let Some(d) = direction {
                cfg.solver.primal_directions = d;
            }
            if let Some(n) = max_sweeps {
                cfg.solver.max_sweeps = n;
            }
            if let Some(g) = gap {
                cfg.solver.gap_tolerance = g;
            }
            cfg.solver.validate().map_err(|e| anyhow!("{e}"))?;
            let graph = decompose(&inst).map_err(|e| anyhow!("{e}"))?;
            let result = run_with_clock(&graph, &cfg.solver, &WallClock(Instant::now()))
                .map_err(|e| internal(anyhow!("solver failed: {e}")))?;
            let report = verify(&graph, &result);
            if !report.is_feasible() {
                return Err(internal(anyhow!(
                    "solver produced an infeasible labeling: {}",
                    report.violations[0]
                )));
            }
            if result.energy < result.dual_bound - 1e-6 * (1.0 + result.dual_bound.abs()) {
                return Err(internal(anyhow!(
                    "primal energy {} lies below the dual bound {}",
                    result.energy,
                    result.dual_bound
                )));
            }
            if let Some(path) = out {
                let text =
                    write_solution(&inst, &result.assignment, result.energy, result.dual_bound)
                        .map_err(|e| internal(e.into()))?;
                write(&path, &text)?;
            }
            if let Some(path) = csv {
                write(&path, &write_convergence_csv(&result.log))?;
            }
            println!("ENERGY {}", result.energy);
            println!("BOUND {}", result.dual_bound);
            println!("GAP {}", result.gap);
            println!("SWEEPS {}", result.sweeps);
            println!("TERMINATION {}", termination_name(result.termination));
            Ok(())
        }
        Command::Check { instance, solution } => {
            let inst = load_instance(&instance)?;
            let sol = parse_solution(&read(&solution)?, &inst)
                .with_context(|| format!("{}", solution.display()))?;
            let report = check_feasible(&inst, &sol.assignment);
            if let Some(v) = report.violations.first() {
                return Err(anyhow!("infeasible: {v}").into());
            }
            let value = energy(&inst, &sol.assignment).value;
            if (value - sol.energy).abs() > 1e-6 {
                return Err(anyhow!(
                    "ENERGY {} does not match the recomputed energy {value}",
                    sol.energy
                )
                .into());
            }
            println!("FEASIBLE");
            println!("ENERGY {value}");
            Ok(())
        }
        Command::Generate {
            config,
            seed,
            frames,
            out,
            truth,
        } => {
            let mut cfg = load_config(config.as_ref())?;
            if let Some(s) = seed {
                cfg.generator.seed = s;
            }
            if let Some(t) = frames {
                cfg.generator.frames = t;
            }
            cfg.validate()?;
            let (inst, x) = generate_with_costs(&cfg.generator, &cfg.costs);
            let text = write_instance(&inst);
            match out {
                Some(path) => write(&path, &text)?,
                None => print!("{text}"),
            }
            if let Some(path) = truth {
                let value = energy(&inst, &x).value;
                let sol = write_solution(&inst, &x, value, f64::NEG_INFINITY)
                    .map_err(|e| internal(e.into()))?;
                write(&path, &sol)?;
            }
            Ok(())
        }
        Command::Oracle { instance, budget } => {
            let inst = load_instance(&instance)?;
            let result = brute_force_solve(&inst, budget)?;
            println!("OPTIMUM {}", result.optimum);
            println!("EXPLORED {}", result.explored);
            Ok(())
        }
        Command::Stats { instance } => {
            let inst = load_instance(&instance)?;
            print!("{}", instance_stats(&inst));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
