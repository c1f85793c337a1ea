//! `killing`: classify projective structures, emit and verify Killing-Yano,
//! Killing and conformal Killing bases, and print dimension tables.
//!
//! Exit codes: 0 pass, 1 verification failure, 2 spec or parse error.

mod commands;
mod spec;
mod tensor_file;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Common, VerifyArgs};
use tensor_file::Kind;

#[derive(Parser)]
#[command(name = "killing", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SpecArgs {
    /// Manifold spec (JSON)
    #[arg(long)]
    spec: PathBuf,
    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the spec's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the spec's tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Override the spec's sample count
    #[arg(long)]
    points: Option<usize>,
}

impl SpecArgs {
    fn common(self) -> Common {
        Common {
            spec: self.spec,
            out: self.out,
            seed: self.seed,
            tol: self.tol,
            points: self.points,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Equiaffine / Ricci-flat / projectively flat checks with residuals
    Classify {
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// Emit a basis as JSON with closed-form components
    Basis {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        p: usize,
    },
    /// Check a tensor or basis file: PDE residuals and geodesic drift
    Verify {
        #[command(flatten)]
        spec: SpecArgs,
        /// Tensor or basis file (the `basis` output format)
        #[arg(long)]
        tensor: PathBuf,
        #[arg(long, value_enum)]
        kind: Option<Kind>,
        #[arg(long)]
        p: Option<usize>,
        /// Largest accepted relative drift of the first integrals
        #[arg(long, default_value_t = 1e-7)]
        drift_tol: f64,
        /// Write the first geodesic with one monitor column per element
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Closed-form and null-space dimensions side by side
    Dims {
        #[arg(long, default_value_t = 4)]
        n_max: usize,
        #[arg(long, default_value_t = 3)]
        p_max: usize,
        /// Aligned text table instead of JSON
        #[arg(long)]
        text: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split a conformal Killing form into Killing-Yano and closed parts
    Decompose {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        tensor: PathBuf,
        #[arg(long)]
        p: Option<usize>,
    },
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Classify { spec } => commands::cmd_classify(&spec.common()),
        Command::Basis { spec, kind, p } => commands::cmd_basis(&spec.common(), kind, p),
        Command::Verify {
            spec,
            tensor,
            kind,
            p,
            drift_tol,
            csv,
        } => commands::cmd_verify(
            &spec.common(),
            &VerifyArgs {
                tensor,
                kind,
                p,
                drift_tol,
                csv,
            },
        ),
        Command::Dims {
            n_max,
            p_max,
            text,
            out,
        } => commands::cmd_dims(n_max, p_max, text, out.as_deref()),
        Command::Decompose { spec, tensor, p } => commands::cmd_decompose(&spec.common(), &tensor, p),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
