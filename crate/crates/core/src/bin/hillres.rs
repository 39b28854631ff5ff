use clap::{Args, Parser, Subcommand};
use hillres::cli::{self, EXIT_NUMERICAL, EXIT_OK, EXIT_STRUCTURE};
use hillres::config::RunConfig;
use hillres::states::Region;
use hillres::{Error, Result};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hillres", version, about = "Gap states and resonances of a perturbed periodic Schrodinger operator on the half-line")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Band edges and Dirichlet roots.
    Bands(Common),
    /// Gap, axis and resonance states with structural checks.
    States(Common),
    /// Asymptotic predictions against computed states.
    Verify(Common),
    /// Resonance counting curve.
    Count(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    z_max: Option<f64>,
    /// Resonance search box `x0,x1,y0,y1`.
    #[arg(long, allow_hyphen_values = true)]
    region: Option<String>,
    /// Tolerance override `KEY=VAL`; repeatable.
    #[arg(long = "tol", value_name = "KEY=VAL")]
    tol: Vec<String>,
    #[arg(long, env = "HILLRES_THREADS")]
    threads: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(n) = self.n_max {
            cfg.n_max = n;
        }
        if let Some(z) = self.z_max {
            cfg.z_max = z;
        }
        if let Some(r) = &self.region {
            let region = Region::parse(r).map_err(|e| Error::Config { path: "--region".into(), message: e.to_string() })?;
            cfg.region = Some(region);
        }
        for t in &self.tol {
            cfg.set_tolerance(t)?;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<i32> {
    let (Command::Bands(common) | Command::States(common) | Command::Verify(common) | Command::Count(common)) = &cli.command;
    let cfg = common.resolve()?;
    if let Some(k) = cfg.threads {
        // Only fails if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    Ok(match &cli.command {
        Command::Bands(_) => {
            let rows = cli::cmd_bands(&cfg)?;
            println!("{} gaps written to {}", rows.len(), cfg.out.display());
            EXIT_OK
        }
        Command::States(_) => {
            let report = cli::cmd_states(&cfg)?;
            let states: usize = report.gaps.iter().map(|g| g.states.len()).sum();
            println!(
                "{states} gap states, {} axis states, {} resonances, {} structural violations",
                report.axis.states.len(),
                report.resonances.len(),
                report.violations.len()
            );
            if report.passed() {
                EXIT_OK
            } else {
                EXIT_STRUCTURE
            }
        }
        Command::Verify(_) => {
            let report = cli::cmd_verify(&cfg)?;
            for t in &report.trends {
                let verdict = match t.passed {
                    Some(true) => "pass",
                    Some(false) => "FAIL",
                    None => "n/a",
                };
                println!("{:<24} {verdict:<5} {}", t.name, t.detail);
            }
            if report.passed() {
                EXIT_OK
            } else {
                EXIT_NUMERICAL
            }
        }
        Command::Count(_) => {
            let r = cli::cmd_count(&cfg)?;
            println!("{} resonances up to {}, slope {:.4} (target {:.4})", r.resonances, r.r_max, r.slope, r.target);
            EXIT_OK
        }
    })
}

fn main() -> ExitCode {
    let code = match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            cli::exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
