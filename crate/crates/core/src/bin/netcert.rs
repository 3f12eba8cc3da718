use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use netcert_core::adversary::AdversaryKind;
use netcert_core::certify::Tolerance;
use netcert_core::commands::{
    cmd_certify, cmd_extract, cmd_pt, cmd_simulate, exit_code_for, prepare_target, render_cert_report, EXIT_FAIL,
    EXIT_PASS,
};
use netcert_core::experiment::Variant;
use netcert_core::io::{load_behavior, load_state, write_behavior};
use netcert_core::tensor::PureState;
use netcert_core::Result;

#[derive(Parser)]
#[command(name = "netcert", version, about = "Network-assisted self-testing of multipartite states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Network,
    Fully,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Network => Variant::Network,
            VariantArg::Fully => Variant::Fully,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute the reference correlation table of a target state.
    Simulate {
        state: PathBuf,
        #[arg(long, value_enum, default_value = "network")]
        variant: VariantArg,
        /// Encode sites of dimension above 2 into qubits.
        #[arg(long)]
        encode_qudit: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a correlation table against a target state.
    Certify {
        behavior: PathBuf,
        state: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol_chsh: f64,
        #[arg(long, default_value_t = 1e-9)]
        tol_tomo: f64,
        #[arg(long, default_value_t = 1e-9)]
        tol_align: f64,
        #[arg(long)]
        encode_qudit: bool,
        /// Write the full report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the extraction channel on a physical model of the experiment.
    Extract {
        state: PathBuf,
        /// exact, conjugate, flagged:<alpha>, embedded or noisy:<visibility>
        #[arg(long, default_value = "exact")]
        model: String,
        #[arg(long, value_enum, default_value = "network")]
        variant: VariantArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        encode_qudit: bool,
        /// Extract even if the model fails certification.
        #[arg(long)]
        skip_certify: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Partial-transpose spectrum of a pure state across a bipartition.
    Pt {
        state: PathBuf,
        /// Comma-separated sites to transpose.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        sites: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_target(path: &Path, encode: bool) -> Result<PureState> {
    let loaded = load_state(path)?;
    if let Some(w) = loaded.warning {
        eprintln!("warning: {w}");
    }
    prepare_target(loaded.state, encode)
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            serde_json::to_writer_pretty(&mut w, value)?;
            w.flush()?;
        }
        None => {
            let mut w = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate { state, variant, encode_qudit, out } => {
            let psi = load_target(&state, encode_qudit)?;
            let behavior = cmd_simulate(&psi, variant.into())?;
            match out {
                Some(path) => {
                    let mut w = BufWriter::new(File::create(path)?);
                    write_behavior(&mut w, &behavior)?;
                    w.flush()?;
                }
                None => {
                    let stdout = std::io::stdout();
                    let mut w = BufWriter::new(stdout.lock());
                    write_behavior(&mut w, &behavior)?;
                    writeln!(w)?;
                    w.flush()?;
                }
            }
            Ok(EXIT_PASS)
        }
        Command::Certify { behavior, state, tol_chsh, tol_tomo, tol_align, encode_qudit, out } => {
            let psi = load_target(&state, encode_qudit)?;
            let table = load_behavior(&behavior)?;
            let tol = Tolerance { chsh: tol_chsh, tomography: tol_tomo, alignment: tol_align };
            let report = cmd_certify(&table, &psi, tol)?;
            print!("{}", render_cert_report(&report));
            if let Some(path) = out {
                emit_json(&report, Some(&path))?;
            }
            Ok(if report.pass { EXIT_PASS } else { EXIT_FAIL })
        }
        Command::Extract { state, model, variant, seed, encode_qudit, skip_certify, out } => {
            let psi = load_target(&state, encode_qudit)?;
            let kind = AdversaryKind::parse(&model, seed)?;
            let report = cmd_extract(&psi, kind, variant.into(), skip_certify)?;
            emit_json(&report, out.as_deref())?;
            Ok(EXIT_PASS)
        }
        Command::Pt { state, sites, out } => {
            let psi = load_target(&state, false)?;
            emit_json(&cmd_pt(&psi, &sites)?, out.as_deref())?;
            Ok(EXIT_PASS)
        }
    }
}

fn configure_threads() {
    if let Ok(v) = std::env::var("NETCERT_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("warning: could not size the thread pool: {e}");
                }
            }
            _ => eprintln!("warning: ignoring NETCERT_THREADS={v}"),
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(netcert_core::Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}
