//! `clipped-ofdm`: analytic SER, Monte Carlo simulation and operating-point
//! optimisation for clipped OFDM links with nonlinear amplifiers.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use commands::{Axis, OptimizeMode, RunError};
use config::{capped_streams, parse_config, THREADS_ENV};
use output::{write_atomic, Document, Format};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

const AFTER_HELP: &str = "\
Config files are flat `key = value` lists (TOML values, no tables). Keys:
  n_s n_t n_r m j          system dimensions (defaults 64 2 2 4 4)
  sigma_ch_db e_u_db       channel noise and operating point, dB (defaults -30, 0)
  eta e_c                  clipping ratio (default 3) and informational clipper input power
  trials seed parallel_streams
  pa                       reference | linear | card | am_am
  pa_path pa_order pa_p_mod
Unknown keys are errors. CLIPPED_OFDM_THREADS caps parallel_streams.

Tables (CSV columns):
  sweep        x,ser_sim,ser_ci95,ser_ana,gamma_ana
  ccdf         threshold_db,ccdf,ci95
  td           obo_db,td_db,e_u,required_snr_db   (e_u in dB; empty cells mark truncation)
  imp-profile  s,phi3

Exit status: 0 success, 1 configuration or input error, 2 runtime or convergence error.";

#[derive(Parser, Debug)]
#[command(name = "clipped-ofdm", version, about, after_help = AFTER_HELP)]
struct Cli {
    /// Run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set eta=2.0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Output file, written atomically. Standard output if omitted.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    /// Output format; tables default to CSV, everything else to JSON.
    #[arg(long, value_enum, global = true)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// SNR breakdown and analytic SER at the configured point.
    Analyze,
    /// Monte Carlo SER of the full transmit chain.
    Simulate,
    /// Optimal operating point (default), clipping level, or both.
    Optimize {
        #[arg(long, conflicts_with = "joint")]
        eta: bool,
        #[arg(long)]
        joint: bool,
    },
    /// Analytic and simulated SER along one axis.
    Sweep {
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, allow_hyphen_values = true)]
        to: f64,
        #[arg(long, default_value_t = 21)]
        points: usize,
        /// Leave ser_sim and ser_ci95 empty.
        #[arg(long)]
        analytic_only: bool,
    },
    /// Empirical PAPR CCDF of the unclipped Nyquist-rate signal.
    Ccdf {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, default_value_t = 12.0, allow_hyphen_values = true)]
        to: f64,
        #[arg(long, default_value_t = 25)]
        points: usize,
    },
    /// Total degradation against output back-off.
    Td {
        #[arg(long, default_value_t = 1e-3)]
        target_ser: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, default_value_t = 12.0, allow_hyphen_values = true)]
        to: f64,
        #[arg(long, default_value_t = 25)]
        points: usize,
    },
    /// Fit a Bessel-Fourier model to two-column AM-AM data.
    FitPa {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = clipped_ofdm::bfpa::REFERENCE_ORDER)]
        order: usize,
        #[arg(long, default_value_t = clipped_ofdm::bfpa::REFERENCE_P_MOD)]
        pmod: f64,
    },
    /// Third-order intermodulation counts per subcarrier.
    ImpProfile {
        /// Subcarrier count; the configured n_s if omitted.
        #[arg(long)]
        n_s: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), RunError> {
    let mut cfg = parse_config(cli.config.as_deref(), &cli.overrides)?;
    let cap = std::env::var(THREADS_ENV).ok();
    cfg.parallel_streams = capped_streams(cfg.parallel_streams, cap.as_deref())?;
    if cap.is_some() {
        // a second initialisation only fails if the pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.parallel_streams).build_global();
    }

    let doc = match cli.command {
        Command::Analyze => commands::analyze(&cfg, &cfg.pa.load()?)?,
        Command::Simulate => commands::simulate(&cfg, &cfg.pa.load()?)?,
        Command::Optimize { eta, joint } => {
            let mode = match (eta, joint) {
                (_, true) => OptimizeMode::Joint,
                (true, false) => OptimizeMode::ClippingLevel,
                (false, false) => OptimizeMode::OperatingPoint,
            };
            commands::optimize(&cfg, &cfg.pa.load()?, mode)?
        }
        Command::Sweep { axis, from, to, points, analytic_only } => {
            let xs = commands::grid(from, to, points)?;
            commands::sweep(&cfg, &cfg.pa.load()?, axis, &xs, !analytic_only)?
        }
        Command::Ccdf { from, to, points } => commands::ccdf(&cfg, &commands::grid(from, to, points)?)?,
        Command::Td { target_ser, from, to, points } => {
            let (doc, truncation) = commands::td(&cfg, &cfg.pa.load()?, target_ser, &commands::grid(from, to, points)?)?;
            if let Some(obo) = truncation {
                eprintln!("target SER unreachable below {obo} dB output back-off");
            }
            doc
        }
        Command::FitPa { input, order, pmod } => commands::fit_pa(&input, order, pmod)?,
        Command::ImpProfile { n_s } => commands::imp_profile(n_s.unwrap_or(cfg.system.n_s))?,
    };
    emit(&doc, cli.format, cli.output.as_deref())
}

fn emit(doc: &Document, format: Option<Format>, path: Option<&std::path::Path>) -> Result<(), RunError> {
    let text = doc.render(format.unwrap_or_else(|| doc.default_format())).map_err(RunError::Config)?;
    match path {
        Some(p) => write_atomic(p, &text).map_err(|e| RunError::Runtime(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| RunError::Runtime(format!("cannot write output: {e}"))),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
