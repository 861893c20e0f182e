use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(name = "sparse-kmeans", version, about = "Sparse spherical k-means experiments and cost models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum InputFormat {
    /// UCI bag-of-words `docword` file (tf-idf weighted on ingest).
    Bow,
    /// `doc_id,term_id,value` rows (L2-normalized on ingest).
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a corpus into the native normalized CSV plus a JSON summary.
    Ingest {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "bow")]
        format: InputFormat,
        /// Output dataset path; the summary goes next to it with a .json
        /// extension.
        #[arg(short, long, required_unless_present = "dry_run")]
        output: Option<PathBuf>,
        /// Only parse the header (bow) or validate the rows (csv); write
        /// nothing.
        #[arg(long)]
        dry_run: bool,
    },
    /// Cluster a native dataset with one or more variants over a k grid.
    Run {
        dataset: PathBuf,
        /// Comma-separated variants: REF, IVF, MFN, IFN, IFB, TWM, IVFD.
        #[arg(long, value_delimiter = ',', default_value = "IVF")]
        variant: Vec<String>,
        /// Comma-separated cluster counts; defaults to the standard grid capped
        /// at N.
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        #[arg(long, env = "SPARSE_KMEANS_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        max_iter: u64,
        /// Also stop once the objective moves by no more than this.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Dimension override; otherwise read from the summary or the data.
        #[arg(long)]
        dim: Option<usize>,
        /// Concurrent (variant, k) runs.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: u64,
        /// JSON results path (stdout when absent).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Per-iteration CSV table.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Fit the CPI model to `algo,k,inst,l1cm,llcm,bm,cycles` samples.
    FitCpi {
        samples: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Evaluate the cache models on a frequency profile.
    CacheModel {
        profile: PathBuf,
        #[arg(long)]
        cache_bytes: Option<u64>,
        #[arg(long)]
        block_bytes: Option<u64>,
        #[arg(long)]
        tuple_bytes: Option<u64>,
        #[arg(long)]
        nb_llc: Option<u64>,
        #[arg(long, default_value_t = 40.0)]
        beta: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Per-(variant, k) CSV table from one or more `run` result files.
    Stats {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long, default_value_t = 28.0)]
        alpha: f64,
        #[arg(long, default_value_t = 40.0)]
        beta: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Ingest {
            input,
            format,
            output,
            dry_run,
        } => commands::ingest(&input, format, output.as_deref(), dry_run),
        Command::Run {
            dataset,
            variant,
            k,
            seed,
            max_iter,
            epsilon,
            dim,
            jobs,
            output,
            table,
        } => commands::run(commands::RunArgs {
            dataset,
            variants: variant,
            ks: k,
            seed,
            max_iter: max_iter as usize,
            epsilon,
            dim,
            jobs: jobs as usize,
            output,
            table,
        }),
        Command::FitCpi { samples, output } => commands::fit_cpi(&samples, output.as_deref()),
        Command::CacheModel {
            profile,
            cache_bytes,
            block_bytes,
            tuple_bytes,
            nb_llc,
            beta,
            output,
        } => {
            let mut p = sparse_kmeans::cache::CacheParams::default();
            p.cache_bytes = cache_bytes.unwrap_or(p.cache_bytes);
            p.block_bytes = block_bytes.unwrap_or(p.block_bytes);
            p.tuple_bytes = tuple_bytes.unwrap_or(p.tuple_bytes);
            p.nb_llc = nb_llc.unwrap_or(p.nb_llc);
            commands::cache_model(&profile, p, beta, output.as_deref())
        }
        Command::Stats {
            results,
            alpha,
            beta,
            output,
        } => commands::stats(&results, alpha, beta, output.as_deref()),
    };
    match outcome {
        Ok(commands::Status::Ok) => ExitCode::SUCCESS,
        Ok(commands::Status::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
