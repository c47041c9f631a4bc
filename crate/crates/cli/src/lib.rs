//! Command-line front end: `analyze`, `eval`, `synth`, `flowviz` and
//! `bench`, plus the synthetic benchmark runner used by the acceptance suite.

pub mod analyze;
pub mod bench;
mod error;
pub mod evaluate;
pub mod flowviz;
pub mod params;
pub mod suite;
pub mod synth;

use std::io::{self, Write};

use clap::{Parser, Subcommand};

pub use error::CliError;
pub use params::ParamArgs;

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "FLOWSEG_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "flowseg",
    version,
    about = "Instance boxes for moving objects from foreground masks and optical flow"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyze every ROI frame of a sequence and write JSON Lines results
    Analyze(analyze::AnalyzeArgs),
    /// Score results against ground-truth boxes: curve CSV, table and plot
    Eval(evaluate::EvalArgs),
    /// Generate a synthetic sequence in the on-disk layout
    Synth(synth::SynthArgs),
    /// Render compounded flows as color images
    Flowviz(flowviz::FlowvizArgs),
    /// Time the density-peak and segmentation cores and fit log-log slopes
    Bench(bench::BenchArgs),
}

/// Worker pool of `requested` threads (all cores when absent), capped by
/// `FLOWSEG_THREADS`.
pub fn thread_pool(requested: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let cap = match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV}={v:?} is not a positive integer")))?,
        ),
        _ => None,
    };
    let wanted = requested.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    let n = cap.map_or(wanted, |c| wanted.min(c)).max(1);
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {n} worker threads: {e}")))
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let params = cli.params.resolve()?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let stdout_err = |e| CliError::Io {
        path: "<stdout>".into(),
        source: e,
    };
    match &cli.command {
        Command::Analyze(args) => {
            let s = analyze::cmd_analyze(args, &params)?;
            eprintln!(
                "analyzed {} frames, {} instances -> {}",
                s.frames,
                s.instances,
                args.output.display()
            );
        }
        Command::Eval(args) => {
            let report = evaluate::cmd_eval(args)?;
            write!(out, "{}", report.table).map_err(stdout_err)?;
        }
        Command::Synth(args) => {
            let seq = synth::cmd_synth(args, params.k)?;
            eprintln!(
                "wrote {} frames with {} objects to {}",
                seq.frame_count(),
                seq.objects.len(),
                args.out.display()
            );
        }
        Command::Flowviz(args) => {
            let mags = flowviz::cmd_flowviz(args, params.k, params.compound_mode)?;
            eprintln!("rendered {} frames to {}", mags.len(), args.out.display());
        }
        Command::Bench(args) => {
            let report = bench::run_bench(&args.counts, args.repetitions, &params)?;
            match &args.out {
                Some(path) => {
                    let file = std::fs::File::create(path).map_err(CliError::io(path))?;
                    report.write_csv(io::BufWriter::new(file)).map_err(CliError::io(path))?;
                }
                None => report.write_csv(&mut out).map_err(stdout_err)?,
            }
            eprintln!(
                "log-log slope: cfsfdp {:.3}, gbis {:.3}",
                report.cfsfdp_slope, report.gbis_slope
            );
        }
    }
    Ok(())
}
