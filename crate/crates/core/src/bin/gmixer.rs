use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gmixer::captions::{CaptionProvider, MockProvider, WireConfig, WireProvider};
use gmixer::cli::{self, RunOverrides, EXIT_RUNTIME, EXIT_VALIDATION};
use gmixer::{DeltaVariant, LambdaGrid, TextArm};

#[derive(Parser)]
#[command(
    name = "gmixer",
    version,
    about = "Composed image retrieval over embedding bundles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check bundles, dimensions and query references of a manifest.
    Validate { manifest: PathBuf },
    /// Retrieve and re-rank every query; evaluate when ground truth is given.
    Run {
        manifest: PathBuf,
        /// Ratio grid as start:end:step.
        #[arg(long)]
        grid: Option<LambdaGrid>,
        /// Images retrieved per ratio.
        #[arg(long)]
        topk: Option<usize>,
        #[arg(long)]
        delta: Option<DeltaVariant>,
        #[arg(long)]
        no_sm: bool,
        #[arg(long)]
        no_slambda: bool,
        #[arg(long)]
        no_rerank: bool,
        #[arg(long)]
        exclude_reference: bool,
        #[arg(long)]
        normalize_sm: bool,
        /// target_desc or mod_text.
        #[arg(long)]
        text_arm: Option<TextArm>,
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory (overrides the manifest).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate caption triples for a queries file.
    Captions {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, value_enum, default_value_t = Provider::Mock)]
        provider: Provider,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        retries: u32,
        #[arg(long, default_value_t = 4)]
        max_in_flight: usize,
    },
    /// Write a synthetic corpus with planted targets.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Provider {
    Mock,
    Wire,
}

fn main() -> ExitCode {
    let code = match Cli::parse().command {
        Command::Validate { manifest } => {
            let report = cli::cmd_validate(&manifest);
            for issue in &report.issues {
                eprintln!("[{}] {}", issue.kind, issue.message);
            }
            if report.is_clean() {
                println!("{}: ok", manifest.display());
            }
            report.exit_code()
        }
        Command::Run {
            manifest,
            grid,
            topk,
            delta,
            no_sm,
            no_slambda,
            no_rerank,
            exclude_reference,
            normalize_sm,
            text_arm,
            workers,
            out,
        } => {
            let overrides = RunOverrides {
                grid,
                topk,
                delta,
                no_sm,
                no_slambda,
                no_rerank,
                exclude_reference,
                normalize_s_m: normalize_sm,
                text_arm,
                workers,
                output: out,
                no_eval: false,
            };
            match cli::cmd_run(&manifest, &overrides) {
                Ok(summary) => {
                    for (query, err) in &summary.failed {
                        eprintln!("query {query}: {err}");
                    }
                    println!(
                        "{} queries -> {}",
                        summary.n_queries,
                        summary.rankings_path.display()
                    );
                    if let Some(report) = &summary.report_path {
                        println!("report -> {}", report.display());
                    }
                    cli::EXIT_OK
                }
                Err(cli::CommandError::Validation(report)) => {
                    for issue in &report.issues {
                        eprintln!("[{}] {}", issue.kind, issue.message);
                    }
                    EXIT_VALIDATION
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
        Command::Captions {
            queries,
            provider,
            out,
            retries,
            max_in_flight,
        } => {
            let provider: Box<dyn CaptionProvider> = match provider {
                Provider::Mock => Box::new(MockProvider),
                Provider::Wire => {
                    let config = WireConfig {
                        max_retries: retries,
                        max_in_flight,
                        ..WireConfig::default()
                    };
                    match WireProvider::from_env(config) {
                        Ok(p) => Box::new(p),
                        Err(e) => {
                            eprintln!("error: {e}");
                            return ExitCode::from(EXIT_RUNTIME as u8);
                        }
                    }
                }
            };
            match cli::cmd_captions(&queries, provider.as_ref(), &out) {
                Ok(summary) => {
                    for f in &summary.failures {
                        eprintln!("query {}: {}", f.query_id, f.error);
                    }
                    println!("{} captions -> {}", summary.written, out.display());
                    if summary.failures.is_empty() {
                        cli::EXIT_OK
                    } else {
                        EXIT_RUNTIME
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_RUNTIME
                }
            }
        }
        Command::Synth { spec, out } => match cli::cmd_synth(&spec, &out) {
            Ok(manifest) => {
                println!("manifest -> {}", manifest.display());
                cli::EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_RUNTIME
            }
        },
    };
    ExitCode::from(code as u8)
}
