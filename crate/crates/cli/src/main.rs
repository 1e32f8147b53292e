//! `svspec`: spectral data, Weyl functions and inverse-problem checks for
//! vector Sturm-Liouville operators, from the command line.

mod check;
mod inverse;
mod io;
mod mfun;
mod scalar;
mod spectrum;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::io::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "svspec", version, about, after_help = exit_code_help())]
struct Cli {
    /// Integrator relative tolerance, in (1e-14, 1e-3). Module defaults when absent.
    #[arg(long, global = true)]
    rel_tol: Option<f64>,
    /// Worker threads; SVSPEC_THREADS takes precedence. One thread runs sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized checks, recorded in every report.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format; each command has its own default.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Locate eigenvalues up to --lmax and write the spectral dataset.
    Spectrum(spectrum::Args),
    /// Tabulate the Weyl matrix function on a λ grid.
    Mfun(mfun::Args),
    /// Run a characterization checker on a dataset.
    Check(check::Args),
    /// Inverse-problem quantities at a diagonal reference potential.
    Inverse(inverse::Args),
    /// Scalar two-spectra tools on a sequence CSV.
    Scalar(scalar::Args),
}

/// Settings shared by every command.
pub struct Global {
    pub rel_tol: Option<f64>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

impl Global {
    pub fn format_or(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    /// Reject `--format csv` for commands that only produce reports.
    pub fn json_only(&self, what: &str) -> Result<(), CliError> {
        match self.format {
            Some(Format::Csv) => Err(CliError::Usage(format!("{what} produces a JSON report; csv is not available"))),
            _ => Ok(()),
        }
    }
}

fn exit_code_help() -> String {
    let mut s = String::from("Exit codes:\n  0  success\n");
    for (code, what) in svspec::EXIT_CODES {
        s.push_str(&format!("  {code}  {what}\n"));
    }
    s.push_str("  64 invalid command line or input format\n  74 file could not be read or written\n");
    s
}

fn configure_threads(flag: Option<usize>) -> Result<(), CliError> {
    let threads = match std::env::var("SVSPEC_THREADS") {
        Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| CliError::Usage(format!("SVSPEC_THREADS=`{v}` is not a thread count")))?),
        Err(_) => flag,
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Usage("thread count must be positive".into()));
        }
        // Fails only if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
        svspec::exec::set_parallel(t > 1);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads(cli.threads)?;
    if let Some(t) = cli.rel_tol {
        if !(t > 1e-14 && t < 1e-3) {
            return Err(CliError::Usage(format!("--rel-tol {t} is outside (1e-14, 1e-3)")));
        }
    }
    let g = Global { rel_tol: cli.rel_tol, seed: cli.seed, out: cli.out, format: cli.format };
    match cli.command {
        Command::Spectrum(a) => spectrum::run(&g, a),
        Command::Mfun(a) => mfun::run(&g, a),
        Command::Check(a) => check::run(&g, a),
        Command::Inverse(a) => inverse::run(&g, a),
        Command::Scalar(a) => scalar::run(&g, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("svspec: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
