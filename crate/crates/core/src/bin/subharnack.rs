use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use subharnack::runner::{batch_exit_code, config_files, error_exit_code, moments_report, run_file, EXIT_CONFIG};
use subharnack::selftest::{run_selftest, SelftestOptions};
use subharnack::{BernsteinFunction, Workers};

#[derive(Parser)]
#[command(name = "subharnack", version, about = "Harnack-type inequalities for SDEs driven by subordinate Brownian motion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config file, or every *.json in a directory.
    Run { config: PathBuf },
    /// Fast oracle checks.
    Selftest,
    /// Inverse moment E[S(t)^-k].
    Moments {
        #[arg(long, value_enum)]
        bernstein: Family,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        #[arg(long)]
        t: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Linear,
    Stable,
    Gamma,
    TemperedStable,
}

fn required(v: Option<f64>, flag: &str) -> Result<f64, String> {
    v.ok_or_else(|| format!("--{flag} is required for this family"))
}

fn bernstein(family: Family, theta: Option<f64>, a: Option<f64>, b: Option<f64>, kappa: Option<f64>) -> Result<BernsteinFunction, String> {
    let f = match family {
        Family::Linear => Ok(BernsteinFunction::Linear),
        Family::Stable => BernsteinFunction::stable(required(theta, "theta")?),
        Family::Gamma => BernsteinFunction::gamma(required(a, "a")?, required(b, "b")?),
        Family::TemperedStable => BernsteinFunction::tempered_stable(required(theta, "theta")?, required(kappa, "kappa")?),
    };
    f.map_err(|e| e.to_string())
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c.clamp(0, 255) as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let workers = Workers::from_env();
    match cli.command {
        Command::Run { config } => {
            let files = match config_files(&config) {
                Ok(f) if !f.is_empty() => f,
                Ok(_) => {
                    eprintln!("no *.json configs in {}", config.display());
                    return code(EXIT_CONFIG);
                }
                Err(e) => {
                    eprintln!("{}: {e}", config.display());
                    return code(EXIT_CONFIG);
                }
            };
            let mut codes = Vec::new();
            for file in files {
                match run_file(&file, workers) {
                    Ok((outcome, dir)) => {
                        print!("{}", outcome.summary);
                        println!("{}: {:?} -> {}", file.display(), outcome.status, dir.display());
                        codes.push(outcome.status.exit_code());
                    }
                    Err(e) => {
                        eprintln!("{}: {e}", file.display());
                        codes.push(error_exit_code(&e));
                    }
                }
            }
            code(batch_exit_code(&codes))
        }
        Command::Selftest => {
            let report = run_selftest(&SelftestOptions {
                workers,
                ..Default::default()
            });
            print!("{}", report.table());
            if report.passed() {
                println!("selftest passed");
                ExitCode::SUCCESS
            } else {
                println!("selftest failed: {}", report.failures().join(", "));
                ExitCode::FAILURE
            }
        }
        Command::Moments { bernstein: family, theta, a, b, kappa, k, t } => {
            let f = match bernstein(family, theta, a, b, kappa) {
                Ok(f) => f,
                Err(e) => {
                    eprintln!("{e}");
                    return code(EXIT_CONFIG);
                }
            };
            match moments_report(&f, k, t) {
                Ok(r) => {
                    println!("{}", serde_json::to_string_pretty(&r).expect("json"));
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    code(error_exit_code(&e))
                }
            }
        }
    }
}
