use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ukpca::bench::run_bench;
use ukpca::config::ExperimentConfig;
use ukpca::io::{read_samples, write_matrix};
use ukpca::model::{fit, parse_kernel, FitOptions, LoadedModel};
use ukpca::{verify, CliError, Result};
use ukpca_core::estimators::embed;
use ukpca_core::linalg::DEFAULT_RTOL;
use ukpca_core::Variant;

#[derive(Parser)]
#[command(name = "ukpca", version, about = "Kernel PCA with Nyström and random-feature approximations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the property check suite; exits 1 if any check fails.
    Verify {
        /// Smaller Monte Carlo sizes and trial counts.
        #[arg(long)]
        fast: bool,
        /// Only run checks whose name contains this string.
        #[arg(long)]
        filter: Option<String>,
    },
    /// Run a convergence sweep and write rows, rates and plot data.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Directory for the output files (default: the config's directory).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Fit a model on a CSV dataset and write it as JSON.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// `name[:key=value,...]`, e.g. `gaussian:bandwidth=0.5`.
        #[arg(long)]
        kernel: String,
        /// ekpca, nystrom or rff.
        #[arg(long)]
        variant: String,
        #[arg(long)]
        ell: usize,
        /// Subsample size (nystrom) or feature count (rff).
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_RTOL)]
        rtol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a model's eigenfunctions at the rows of a CSV file.
    Embed {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Verify { fast, filter } => {
            let outcomes = verify::run_filtered(fast, |name| filter.as_deref().map_or(true, |f| name.contains(f)));
            print!("{}", verify::render_table(&outcomes));
            let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
            if !failed.is_empty() {
                return Err(CliError::Verification(failed.join(", ")));
            }
        }
        Command::Bench { config, out_dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out_dir = out_dir.unwrap_or_else(|| config.parent().map(PathBuf::from).unwrap_or_default());
            let (sweep, rates, files) = run_bench(&cfg, &out_dir)?;
            for r in &rates {
                println!(
                    "{}: slope {:.4} ± {:.4} (predicted {:.4}, R² {:.4}) {}",
                    r.group(),
                    r.slope,
                    r.slope_se,
                    r.predicted,
                    r.r2,
                    if r.pass { "PASS" } else { "FAIL" }
                );
            }
            println!("{} rows, {} skipped cells", sweep.rows.len(), sweep.skipped.len());
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Fit { data, kernel, variant, ell, m, seed, rtol, out } => {
            let x = read_samples(&data)?;
            let kernel = parse_kernel(&kernel)?;
            let variant = Variant::parse(&variant)
                .ok_or_else(|| CliError::Input(format!("unknown variant '{variant}' (expected ekpca, nystrom or rff)")))?;
            let model = fit(&x, &kernel, &FitOptions { variant, ell, m, seed, rtol })?;
            model.save(&out)?;
            log::info!("fitted {} with {} components on {} points", variant, ell, x.len());
        }
        Command::Embed { model, data, out } => {
            let model = LoadedModel::load(&model)?;
            let x = read_samples(&data)?;
            let e = embed(&model.model, &model.expansion(), &x)?;
            let header: Vec<String> = (1..=model.model.ell()).map(|i| format!("phi{i}")).collect();
            write_matrix(&out, &header, e.as_ref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
