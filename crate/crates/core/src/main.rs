use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use susceptibility::run::{failure_artifact, run, write_artifacts, Command};
use susceptibility::scenario::{parse_overrides, Scenario};
use susceptibility::verify::{run_suite, Suite};
use susceptibility::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "susceptibility", version, about = "Susceptibility functions of piecewise expanding unimodal maps")]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Replaces the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated `path=value` tolerance overrides, e.g. `nt.tol=1e-8`.
    #[arg(long = "tol-overrides", global = true)]
    tol_overrides: Option<String>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Invariant density and its saltus decomposition.
    Acim,
    /// Postcritical orbit and its preperiodicity.
    Orbit,
    /// Ψ decomposition over a polar z grid.
    Suscept,
    /// Radial L¹ scans of σ_φ over arcs.
    BoundaryScan,
    /// Nontangential limit along a sector.
    NtLimit,
    /// Wiener–Wintner rotated averages.
    Ww,
    /// Rotated LIL ratios and the Abel envelope.
    Lil,
    /// Witness pair of right limits.
    Witness,
    /// Finite-difference, formula and NT estimates of the linear response.
    Response,
    /// Hecke reference series and its outer identity.
    Hecke,
    /// Runs the acceptance criteria.
    Verify {
        /// exact, oracle or all
        suite: Suite,
    },
}

impl Cmd {
    fn command(&self) -> Option<Command> {
        Some(match self {
            Cmd::Acim => Command::Acim,
            Cmd::Orbit => Command::Orbit,
            Cmd::Suscept => Command::Suscept,
            Cmd::BoundaryScan => Command::BoundaryScan,
            Cmd::NtLimit => Command::NtLimit,
            Cmd::Ww => Command::Ww,
            Cmd::Lil => Command::Lil,
            Cmd::Witness => Command::Witness,
            Cmd::Response => Command::Response,
            Cmd::Hecke => Command::Hecke,
            Cmd::Verify { .. } => return None,
        })
    }
}

fn invalid(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_VALIDATION)
}

fn load(cli: &Cli) -> Result<Scenario, Error> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let src = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let overrides = match &cli.tol_overrides {
        Some(o) => parse_overrides(o)?,
        None => vec![],
    };
    let mut s = Scenario::from_toml_with(&src, &overrides)?;
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global() {
            return invalid(e);
        }
    }
    let Some(command) = cli.command.command() else {
        let Cmd::Verify { suite } = cli.command else { unreachable!() };
        let outcomes = run_suite(suite, |o| println!("{o}"));
        let failed = outcomes.iter().filter(|o| !o.passed).count();
        println!("{} passed, {failed} failed", outcomes.len() - failed);
        if let Some(dir) = &cli.out {
            let json = serde_json::to_string_pretty(&outcomes).expect("outcomes serialize") + "\n";
            let a = susceptibility::run::Artifact { name: "verify.json".into(), contents: json };
            if let Err(e) = write_artifacts(dir, &[a]) {
                return invalid(e);
            }
        }
        return if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE };
    };
    let scenario = match load(&cli) {
        Ok(s) => s,
        Err(e) => return invalid(e),
    };
    let Some(out) = &cli.out else {
        return invalid("--out is required");
    };
    match run(command, &scenario) {
        Ok(artifacts) => match write_artifacts(out, &artifacts) {
            Ok(()) => {
                for a in &artifacts {
                    println!("{}", out.join(&a.name).display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => invalid(e),
        },
        Err(e) if e.is_numeric() => {
            eprintln!("numeric failure: {e}");
            let _ = write_artifacts(out, &[failure_artifact(command, &scenario, &e)]);
            ExitCode::from(EXIT_NUMERIC)
        }
        Err(e) => invalid(e),
    }
}
