//! `factcheck`: simulate verdict streams, run the online estimator and
//! check the mean-field and Lyapunov certificates from the command line.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use factcheck_core::harness::{
    decoder_error_exact, decoder_error_monte_carlo, optimal_weights, run_experiment, simulate_stream, verify_suite,
    write_stream_csv, ExperimentConfig, VerifyConfig,
};
use factcheck_core::lyapunov::report;
use factcheck_core::meanfield::{census_distance, find_equilibria, ode_flow, MultistartOptions};
use factcheck_core::{Error, Result, UnreliabilityVector};
use serde_json::json;

#[derive(Parser)]
#[command(name = "factcheck", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Experiment settings. Each flag overrides the same key in `--config`.
#[derive(Args)]
struct Common {
    /// Flat `key = value` file with the same keys as these flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    n: Option<String>,
    /// Comma-separated agent unreliabilities, e.g. 0.1,0.2,0.3.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pi: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    horizon: Option<String>,
    /// `harmonic` or `power:<p>` with p in (1/2, 1].
    #[arg(long, global = true)]
    schedule: Option<String>,
    #[arg(long, global = true)]
    trunc_c: Option<String>,
    #[arg(long, global = true)]
    trunc_gamma: Option<String>,
    /// `truncated` or `plain`.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<String>,
    /// Log every this many steps.
    #[arg(long, global = true)]
    cadence: Option<String>,
    /// Initial estimate, comma-separated.
    #[arg(long, global = true)]
    init: Option<String>,
    /// Reset point, comma-separated.
    #[arg(long, global = true)]
    reset_point: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Dump a simulated verdict stream to `<out>/stream.csv`.
    Simulate,
    /// Run the estimator and write trajectory, reset log and summary.
    Estimate,
    /// Integrate the mean-field ODE and write `<out>/flow.csv`.
    Odeflow {
        /// Start point; defaults to the initial estimate.
        #[arg(long)]
        x0: Option<String>,
        #[arg(long, default_value_t = 20.0)]
        duration: f64,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
    },
    /// Multistart census of mean-field equilibria, written as JSON.
    Equilibria {
        #[arg(long, default_value_t = 1000)]
        starts: usize,
    },
    /// Run the certificate sweep; exits 3 if any check fails.
    Verify {
        /// Reduced sweep for smoke testing.
        #[arg(long)]
        quick: bool,
        /// Debug hook: scale every output table by this factor.
        #[arg(long, hide = true, default_value_t = 1.0)]
        corrupt_g: f64,
    },
    /// Exact error of the weighted-vote decoder.
    Decode {
        /// Weights; defaults to the optimal log-odds weights.
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<String>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        tau: f64,
        /// Also estimate the error from this many simulated rounds.
        #[arg(long)]
        rounds: Option<u64>,
    },
    /// Lyapunov value, gradient and descent at a point.
    Lyapunov {
        #[arg(long)]
        x: String,
    },
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        let flags = [
            ("n", &self.n),
            ("pi", &self.pi),
            ("seed", &self.seed),
            ("horizon", &self.horizon),
            ("schedule", &self.schedule),
            ("trunc-c", &self.trunc_c),
            ("trunc-gamma", &self.trunc_gamma),
            ("mode", &self.mode),
            ("out", &self.out),
            ("cadence", &self.cadence),
            ("init", &self.init),
            ("reset-point", &self.reset_point),
        ];
        for (key, value) in flags {
            if let Some(value) = value {
                config.set(key, value)?;
            }
        }
        config.validate()?;
        Ok(config)
    }
}

fn parse_point(name: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{name}: cannot parse {v:?} as a number")))
        })
        .collect()
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    Ok((path, BufWriter::new(file)))
}

fn finish(path: &Path, result: std::io::Result<()>) -> Result<()> {
    result.map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a line to stdout. A closed pipe (e.g. `| head`) is not an error.
fn emit(line: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    emit(&serde_json::to_string_pretty(value)?);
    Ok(())
}

/// Returns `false` when a check failed.
fn dispatch(cli: &Cli) -> Result<bool> {
    let config = cli.common.resolve()?;
    let pi = config.pi_vector()?;
    match &cli.command {
        Command::Simulate => {
            let (path, mut w) = create(&config.out, "stream.csv")?;
            let stream = simulate_stream(&pi, config.horizon, config.seed)?;
            finish(&path, write_stream_csv(&mut w, pi.len(), stream).and_then(|_| w.flush()))?;
            eprintln!("wrote {} rounds to {}", config.horizon, path.display());
        }
        Command::Estimate => {
            let summary = run_experiment(&config)?;
            print_json(&summary)?;
        }
        Command::Odeflow { x0, duration, step } => {
            let x0 = match x0 {
                Some(text) => UnreliabilityVector::new(parse_point("x0", text)?)?,
                None => match &config.init {
                    Some(v) => UnreliabilityVector::new(v.clone())?,
                    None => config.reset_point_vector()?,
                },
            };
            let flow = ode_flow(&x0, &pi, *duration, *step)?;
            let (path, mut w) = create(&config.out, "flow.csv")?;
            finish(&path, flow.write_csv(&mut w).and_then(|_| w.flush()))?;
            let last = flow.last();
            let end = UnreliabilityVector::new(last.x.clone())?;
            print_json(&json!({
                "s": last.s,
                "x": last.x,
                "V": last.v,
                "census_distance": census_distance(&end, &pi)?,
                "clamp_events": flow.clamp_events,
                "max_v_increase": flow.max_v_increase,
            }))?;
        }
        Command::Equilibria { starts } => {
            let options = MultistartOptions {
                starts: *starts,
                seed: config.seed,
                ..Default::default()
            };
            let set = find_equilibria(&pi, &options)?;
            let text = set.to_json()?;
            let (path, mut w) = create(&config.out, "equilibria.json")?;
            finish(&path, writeln!(w, "{text}").and_then(|_| w.flush()))?;
            emit(&text);
        }
        Command::Verify { quick, corrupt_g } => {
            let base = if *quick { VerifyConfig::quick() } else { VerifyConfig::default() };
            let report = verify_suite(&VerifyConfig {
                seed: config.seed,
                corrupt_g: *corrupt_g,
                ..base
            })?;
            for c in &report.checks {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                emit(&format!(
                    "{tag} {}: worst {:e} (tolerance {:e}, {} checks) {}",
                    c.name, c.worst, c.tolerance, c.checks_run, c.detail
                ));
            }
            let (path, mut w) = create(&config.out, "sweep.csv")?;
            finish(&path, report.write_sweep_csv(&mut w).and_then(|_| w.flush()))?;
            let (path, mut w) = create(&config.out, "verify.json")?;
            let text = serde_json::to_string_pretty(&report)?;
            finish(&path, writeln!(w, "{text}").and_then(|_| w.flush()))?;
            for c in report.failed() {
                eprintln!("check failed: {}", c.name);
            }
            return Ok(report.passed());
        }
        Command::Decode { alpha, tau, rounds } => {
            let alpha = match alpha {
                Some(text) => parse_point("alpha", text)?,
                None => optimal_weights(&pi)?,
            };
            let exact = decoder_error_exact(&pi, &alpha, *tau)?;
            let mut out = json!({ "alpha": alpha, "tau": tau, "error": exact });
            if let Some(rounds) = rounds {
                let (p, se) = decoder_error_monte_carlo(&pi, &alpha, *tau, *rounds, config.seed)?;
                out["monte_carlo"] = json!({ "rounds": rounds, "error": p, "std_err": se });
            }
            print_json(&out)?;
        }
        Command::Lyapunov { x } => {
            let x = UnreliabilityVector::new(parse_point("x", x)?)?;
            print_json(&report(&x, &pi)?)?;
        }
    }
    Ok(true)
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => 4,
        Error::LyapunovIncrease { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
