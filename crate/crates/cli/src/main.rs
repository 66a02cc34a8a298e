mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "adcprog", version, about = "Stroke outcome prediction from ADC MRI, clinical data and lesion volumes")]
struct Cli {
    /// UTF-8 key=value configuration file.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: logical cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(flatten)]
    keys: KeyFlags,
    #[command(subcommand)]
    command: Command,
}

/// One flag per configuration key; a flag beats the file.
#[derive(Args, Debug, Default)]
struct KeyFlags {
    #[arg(long, global = true)]
    volumes_dir: Option<String>,
    #[arg(long, global = true)]
    clinical_csv: Option<String>,
    #[arg(long, global = true)]
    weights: Option<String>,
    #[arg(long, global = true)]
    network: Option<String>,
    #[arg(long, global = true)]
    canonical_shape: Option<String>,
    #[arg(long, global = true)]
    blocks: Option<String>,
    #[arg(long, global = true)]
    projection_dim: Option<String>,
    #[arg(long, global = true)]
    projection_seed: Option<String>,
    #[arg(long, global = true)]
    threshold: Option<String>,
    #[arg(long, global = true)]
    open_iterations: Option<String>,
    #[arg(long, global = true)]
    connectivity: Option<String>,
    #[arg(long, global = true)]
    min_lesion_voxels: Option<String>,
    #[arg(long, global = true)]
    folds: Option<String>,
    #[arg(long, global = true)]
    split_seed: Option<String>,
    #[arg(long, global = true)]
    svm_seed: Option<String>,
    #[arg(long, global = true)]
    permute_seed: Option<String>,
    #[arg(long, global = true)]
    max_components: Option<String>,
    #[arg(long, global = true)]
    variance_target: Option<String>,
    #[arg(long, global = true)]
    out_dir: Option<String>,
    #[arg(long, global = true)]
    cache_dir: Option<String>,
}

impl KeyFlags {
    fn overrides(&self) -> Vec<(String, String)> {
        let pairs = [
            ("volumes_dir", &self.volumes_dir),
            ("clinical_csv", &self.clinical_csv),
            ("weights", &self.weights),
            ("network", &self.network),
            ("canonical_shape", &self.canonical_shape),
            ("blocks", &self.blocks),
            ("projection_dim", &self.projection_dim),
            ("projection_seed", &self.projection_seed),
            ("threshold", &self.threshold),
            ("open_iterations", &self.open_iterations),
            ("connectivity", &self.connectivity),
            ("min_lesion_voxels", &self.min_lesion_voxels),
            ("folds", &self.folds),
            ("split_seed", &self.split_seed),
            ("svm_seed", &self.svm_seed),
            ("permute_seed", &self.permute_seed),
            ("max_components", &self.max_components),
            ("variance_target", &self.variance_target),
            ("out_dir", &self.out_dir),
            ("cache_dir", &self.cache_dir),
        ];
        pairs.into_iter().filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone()))).collect()
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic cohort, random weights and a run config.
    Synth(commands::SynthArgs),
    /// Resample and normalize every volume to the canonical grid.
    Preprocess,
    /// Threshold segmentation and lesion volumes.
    Segment,
    /// Frozen-network embeddings and projections, cached.
    Embed,
    /// Fit one bundle on every labelled patient.
    Train,
    /// Cross-validate the configuration grid.
    Evaluate(commands::EvaluateArgs),
    /// Paired Wilcoxon test of two reports' fold AUCs.
    Compare(commands::CompareArgs),
    /// Coefficient importance and occlusion saliency.
    Explain(commands::ExplainArgs),
    /// Render reports as a text table and CSVs.
    Report(commands::ReportArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.keys.overrides())?;
    match cli.command {
        Command::Synth(a) => commands::synth(&cfg, &a),
        Command::Preprocess => commands::preprocess(&cfg),
        Command::Segment => commands::segment(&cfg),
        Command::Embed => commands::embed(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Evaluate(a) => commands::evaluate(&cfg, &a),
        Command::Compare(a) => commands::compare(&a),
        Command::Explain(a) => commands::explain(&cfg, &a),
        Command::Report(a) => commands::report(&cfg, &a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
