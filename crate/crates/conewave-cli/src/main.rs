use clap::Parser;
use conewave_cli::{run_pipeline, RunConfig};

/// Pipeline driver: builds the blow-up profile approximation, computes the
/// spectral data of the linearized operator, applies the Fourier-side
/// parametrix to the leading source, and runs the independent verifier.
/// Artifacts (JSON manifest + CSV series) land in the output directory.
#[derive(Parser, Debug)]
#[command(name = "conewave", version, about)]
struct Cli {
    /// JSON configuration file; flags below override its fields.
    #[arg(long)]
    config: Option<std::path::PathBuf>,
    /// Scaling exponent nu in lambda(t) = t^{-1-nu}.
    #[arg(long)]
    nu: Option<f64>,
    /// Number of correction steps in the profile build.
    #[arg(long)]
    k: Option<u32>,
    /// Decay index N of the leading source tau^{-N-2}.
    #[arg(long = "N")]
    n_pow: Option<f64>,
    /// Output directory for manifest and CSV artifacts.
    #[arg(long)]
    out: Option<String>,
    /// Suite(s) to run: bulk | spectral | parametrix | verify | all | none.
    #[arg(long = "check")]
    check: Vec<String>,
    /// Acknowledge a resonant nu (integer cone exponents, log corrections).
    #[arg(long)]
    resonant: bool,
    /// Cross-check the float series recursion against exact rationals.
    #[arg(long = "exact-rational")]
    exact_rational: bool,
    /// Seed for randomized test batteries.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", path.display());
                    std::process::exit(2);
                }
            };
            match serde_json::from_str::<RunConfig>(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: invalid config {}: {e}", path.display());
                    std::process::exit(2);
                }
            }
        }
        None => RunConfig::default(),
    };
    if let Some(nu) = cli.nu {
        cfg.nu = nu;
    }
    if let Some(k) = cli.k {
        cfg.k_target = k;
    }
    if let Some(n) = cli.n_pow {
        cfg.n_pow = n;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    if !cli.check.is_empty() {
        cfg.checks = cli.check;
    }
    if cli.resonant {
        cfg.resonant = true;
    }
    if cli.exact_rational {
        cfg.exact_rational = true;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }

    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        std::process::exit(2);
    }
    match run_pipeline(&cfg) {
        Ok(manifest) => {
            if manifest.all_passed() {
                println!("all checks passed; artifacts in {}", cfg.out);
            } else {
                eprintln!("one or more checks failed; see {}/manifest.json", cfg.out);
                std::process::exit(1);
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(3);
        }
    }
}
