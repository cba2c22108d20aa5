use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use morrey_cli::config::{Kind, Overrides};
use morrey_cli::{execute, Status};
use morrey_core::Fidelity;

#[derive(Parser)]
#[command(name = "morrey", version, about = "Weighted Morrey space experiments on dyadic grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run(Common),
    /// Sweep power weights and compare measured and predicted admissibility.
    SweepPower(Common),
    /// Operator ratios on the logarithmic counterexample family.
    Counterexample(Common),
    /// Randomized sparse-domination checks.
    SparseFuzz(Common),
    /// Universal bound for the dyadic weighted maximal operator.
    Universal(Common),
    /// Norms, weight constants and operator-norm lower bounds on a test corpus.
    Norms(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum FidelityArg {
    Dyadic,
    Aligned,
    Shifted,
}

impl From<FidelityArg> for Fidelity {
    fn from(f: FidelityArg) -> Self {
        match f {
            FidelityArg::Dyadic => Fidelity::Dyadic,
            FidelityArg::Aligned => Fidelity::Aligned,
            FidelityArg::Shifted => Fidelity::Shifted,
        }
    }
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Cube family used for sups.
    #[arg(long, value_enum)]
    fidelity: Option<FidelityArg>,
    /// Grid level L (2^L cells per side).
    #[arg(long, value_name = "L")]
    level: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, kind) = match &cli.command {
        Command::Run(c) => (c, None),
        Command::SweepPower(c) => (c, Some(Kind::PowerSweep)),
        Command::Counterexample(c) => (c, Some(Kind::Counterexample)),
        Command::SparseFuzz(c) => (c, Some(Kind::Sparse)),
        Command::Universal(c) => (c, Some(Kind::Universal)),
        Command::Norms(c) => (c, Some(Kind::Norms)),
    };
    let overrides = Overrides {
        seed: common.seed,
        out: common.out.clone(),
        fidelity: common.fidelity.map(Into::into),
        level: common.level,
    };
    let status = match execute(common.config.as_ref(), kind, &overrides) {
        Ok(r) => {
            for c in &r.checks {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if r.failing_rows > 0 {
                println!("{} failing rows, listed in {}", r.failing_rows, r.written.json.display());
            }
            println!("wrote {} and {}", r.written.csv.display(), r.written.json.display());
            r.status()
        }
        Err(e) => {
            eprintln!("error: {e}");
            Status::ConfigError
        }
    };
    ExitCode::from(status as u8)
}
