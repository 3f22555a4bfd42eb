use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use bdsde::config::KeyValues;
use bdsde::harness::{
    run_convergence, run_forward_rate, run_regularity, run_single, ExperimentConfig,
};
use bdsde::model::{validate_problem, ProbeBox};
use bdsde::{Error, Execution};

const EXIT_INVALID: u8 = 1;
const EXIT_IO: u8 = 2;

#[derive(Parser)]
#[command(
    name = "bdsde",
    version,
    about = "Backward doubly stochastic differential equation solver and convergence harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat key=value experiment file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Fill the `wall_ms` column of convergence reports.
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Check the problem and time grid against the standing assumptions.
    Validate,
    /// Strong mean-square rate of the Euler scheme on an exact forward model.
    ForwardRate,
    /// Solve on one mesh along one path and print `i,t,Y,Z`.
    Solve,
    /// Error report over the mesh list.
    Converge,
    /// Oscillation statistic of `Z` for each mesh.
    Regularity,
}

/// Failure carrying the process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Io { .. }) {
            EXIT_IO
        } else {
            EXIT_INVALID
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_INVALID),
            };
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut kv = match &cli.config {
        Some(path) => KeyValues::from_file(path)?,
        None => KeyValues::default(),
    };
    if let Some(seed) = cli.seed {
        kv.set("seed", seed);
    }
    if cli.timing {
        kv.set("timing", true);
    }
    Ok(ExperimentConfig::from_kv(&kv)?)
}

fn execution(threads: Option<usize>) -> Result<Execution, Failure> {
    match threads {
        None => Ok(Execution::default()),
        Some(0) => Err(Failure {
            code: EXIT_INVALID,
            message: "--threads must be at least 1".into(),
        }),
        Some(1) => Ok(Execution::Sequential),
        Some(n) => {
            #[cfg(feature = "parallel")]
            {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| Failure {
                        code: EXIT_INVALID,
                        message: format!("cannot start {n} threads: {e}"),
                    })?;
                Ok(Execution::Parallel)
            }
            #[cfg(not(feature = "parallel"))]
            {
                eprintln!("warning: built without the `parallel` feature; ignoring --threads {n}");
                Ok(Execution::Sequential)
            }
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| Error::Io {
                path: PathBuf::from("<stdout>"),
                source: e,
            })?;
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    let config = load_config(cli)?;
    let exec = execution(cli.threads)?;
    let out = cli.out.as_deref();
    match cli.command {
        Command::Validate => {
            let &n = config.meshes.first().ok_or_else(|| Failure {
                code: EXIT_INVALID,
                message: "validate needs a mesh size (`n` or `meshes`)".into(),
            })?;
            let problem = config.problem()?;
            let grid = bdsde::model::build_uniform_grid(n, config.params.horizon)?;
            let bounds = ProbeBox::around(config.params.x0, config.probe_radius);
            let report = validate_problem(&problem, &grid, config.probes, &bounds)?;
            emit(out, &format!("{report}\n"))?;
            Ok(if report.overall { 0 } else { EXIT_INVALID })
        }
        Command::ForwardRate => {
            let report = run_forward_rate(
                config.forward_family,
                config.params.x0,
                config.params.horizon,
                &config.meshes,
                config.paths,
                config.seed,
                exec,
            )?;
            emit(out, &report.to_csv())?;
            Ok(0)
        }
        Command::Solve => {
            let solve = run_single(&config, exec)?;
            emit(out, &solve.to_csv())?;
            Ok(0)
        }
        Command::Converge => {
            let report = run_convergence(&config, exec)?;
            if let Some(c) = report.calibration {
                eprintln!(
                    "exponential correction sign {} (mean-square residual {:e} for -1, {:e} for +1)",
                    c.sign, c.residual_minus, c.residual_plus
                );
            }
            emit(out, &report.to_csv(config.timing))?;
            Ok(0)
        }
        Command::Regularity => {
            let table = run_regularity(&config, exec)?;
            emit(out, &table.to_csv())?;
            Ok(0)
        }
    }
}
