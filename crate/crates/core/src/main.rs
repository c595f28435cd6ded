use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use colorcode::cli::{cmd_fit, cmd_selfcheck, cmd_simulate, CliError, CliResult, RunConfig, SelfcheckHooks, SEED_ENV};
use colorcode::experiments::NoiseModel;

#[derive(Parser)]
#[command(name = "colorcode", version, about = "Triangular 4.8.8 color code simulation and decoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo sweep and write a CSV dataset.
    Simulate(SimulateArgs),
    /// Fit the scaling ansatz to a CSV dataset.
    Fit {
        dataset: PathBuf,
        /// Directory for the fit JSON and curve samples.
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
        #[arg(long, default_value_t = 50)]
        curve_points: usize,
    },
    /// Run the fast invariant suite.
    Selfcheck {
        #[arg(long, hide = true)]
        corrupt_matching: bool,
    },
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// code_capacity, phenomenological or circuit.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, value_delimiter = ',')]
    distances: Option<Vec<usize>>,
    #[arg(long = "p", value_delimiter = ',')]
    p_values: Option<Vec<f64>>,
    /// Evenly spaced p values as `lo:hi:count`.
    #[arg(long, conflicts_with = "p_values")]
    p_range: Option<String>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long, env = SEED_ENV)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    p_identity_ratio: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    metadata: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_range(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Config(format!("p range {s:?} is not lo:hi:count"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if n < 1 || hi < lo {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n)
        .map(|k| ((lo + (hi - lo) * k as f64 / (n - 1) as f64) * 1e12).round() / 1e12)
        .collect())
}

fn build_config(a: SimulateArgs) -> CliResult<RunConfig> {
    let mut cfg = match &a.config {
        Some(path) => RunConfig::from_json_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(m) = a.model {
        cfg.model = m.parse::<NoiseModel>().map_err(|e| CliError::Config(e.to_string()))?;
    }
    if let Some(d) = a.distances {
        cfg.distances = d;
    }
    if let Some(p) = a.p_values {
        cfg.p_values = p;
    }
    if let Some(r) = a.p_range {
        cfg.p_values = parse_range(&r)?;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.rounds.is_some() {
        cfg.rounds = a.rounds;
    }
    if let Some(r) = a.p_identity_ratio {
        cfg.p_identity_ratio = r;
    }
    if let Some(o) = a.output {
        cfg.output = o;
    }
    if a.metadata.is_some() {
        cfg.metadata = a.metadata;
    }
    if a.workers.is_some() {
        cfg.workers = a.workers;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = build_config(args)?;
            let (ds, meta) = cmd_simulate(&cfg)?;
            for r in &ds.records {
                println!(
                    "{} d={} p={} trials={} failures_x={} failures_z={}",
                    r.model, r.d, r.p, r.trials, r.failures_x, r.failures_z
                );
            }
            eprintln!(
                "wrote {} ({} points, {:.1}s)",
                cfg.output.display(),
                meta.points,
                meta.wall_time_seconds
            );
            Ok(())
        }
        Command::Fit {
            dataset,
            output_dir,
            curve_points,
        } => {
            let (report, res) = cmd_fit(&dataset, &output_dir, curve_points);
            if let Some(r) = &report {
                let f = r.fit.limiting_fit();
                println!(
                    "threshold {:.6} ({:?}) +- {:.6}  nu {:.4}  R^2 {:.6}",
                    r.fit.threshold, r.fit.limiting, f.std_errors[3], f.params.nu, f.r_squared
                );
                println!("fit: {}", r.fit_json.display());
                println!("curves: {}", r.curves_csv.display());
            }
            res
        }
        Command::Selfcheck { corrupt_matching } => {
            let report = cmd_selfcheck(SelfcheckHooks { corrupt_matching });
            for item in &report.items {
                let mark = if item.passed { "PASS" } else { "FAIL" };
                println!("{mark} {} {}", item.name, item.detail);
            }
            if report.passed() {
                Ok(())
            } else {
                Err(CliError::Runtime("self-check failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
