//! `analyze`: run the per-frame pipeline over a sequence on disk.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::Args;
use flowseg::dataset::{self, load_cdnet_sequence, SequenceSource};
use flowseg::flow::{self, FlowRing};
use flowseg::pipeline::{analyze_compounded, foreground_samples, AnalysisMode, StageTimings};
use flowseg::{BBox, FrameRecord, Mask, PipelineParams};
use image::{Rgb, RgbImage};
use rayon::prelude::*;

use crate::{thread_pool, CliError};

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Sequence directory holding groundtruth/ and temporalROI.txt
    pub input: PathBuf,
    /// Directory of per-step flows NNNNNN.flo [default: <INPUT>/flow]
    #[arg(long)]
    pub flow_dir: Option<PathBuf>,
    /// Results file, one JSON object per frame
    #[arg(short, long)]
    pub output: PathBuf,
    /// Write a PNG per frame with the boxes drawn over the mask
    #[arg(long, value_name = "DIR")]
    pub overlays: Option<PathBuf>,
    /// Write per-stage timings in milliseconds as CSV
    #[arg(long, value_name = "FILE")]
    pub timings: Option<PathBuf>,
    /// Worker threads, capped by FLOWSEG_THREADS [default: all cores]
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeSummary {
    pub frames: usize,
    pub instances: usize,
}

struct FrameOutput {
    record: FrameRecord,
    timings: StageTimings,
}

/// Frames handed to the pool at once; bounds memory on long sequences.
const CHUNK: usize = 64;

pub fn cmd_analyze(args: &AnalyzeArgs, params: &PipelineParams) -> Result<AnalyzeSummary, CliError> {
    if !args.input.is_dir() {
        return Err(CliError::MissingPath(args.input.clone()));
    }
    let flow_dir = args
        .flow_dir
        .clone()
        .unwrap_or_else(|| args.input.join(dataset::FLOW_DIR));
    if !flow_dir.is_dir() {
        return Err(CliError::MissingPath(flow_dir));
    }
    let source = load_cdnet_sequence(&args.input, &flow_dir)?;
    let positions = eval_positions(&source, params.k)?;
    if let Some(dir) = &args.overlays {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    let pool = thread_pool(args.threads)?;

    let mut out = BufWriter::new(File::create(&args.output).map_err(CliError::io(&args.output))?);
    let mut timing_out = match &args.timings {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(CliError::io(p))?);
            writeln!(
                w,
                "frame,compound_ms,sampling_ms,composition_ms,segmentation_ms,postprocess_ms,total_ms"
            )
            .map_err(CliError::io(p))?;
            Some((w, p.clone()))
        }
        None => None,
    };

    let mut summary = AnalyzeSummary {
        frames: 0,
        instances: 0,
    };
    for chunk in positions.chunks(CHUNK) {
        let results: Vec<Result<FrameOutput, CliError>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|&j| analyze_position(&source, j, params, args.overlays.as_deref()))
                .collect()
        });
        // in frame order whatever the completion order
        for r in results {
            let FrameOutput { record, timings } = r?;
            serde_json::to_writer(&mut out, &record)
                .map_err(|e| CliError::io(&args.output)(e.into()))?;
            out.write_all(b"\n").map_err(CliError::io(&args.output))?;
            if let Some((w, p)) = timing_out.as_mut() {
                let t = &timings;
                writeln!(
                    w,
                    "{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
                    record.frame,
                    t.compound_ms,
                    t.sampling_ms,
                    t.composition_ms,
                    t.segmentation_ms,
                    t.postprocess_ms,
                    t.total_ms()
                )
                .map_err(CliError::io(p.as_path()))?;
            }
            summary.frames += 1;
            summary.instances += record.instances.len();
        }
    }
    out.flush().map_err(CliError::io(&args.output))?;
    if let Some((mut w, p)) = timing_out {
        w.flush().map_err(CliError::io(p))?;
    }
    Ok(summary)
}

/// Positions in `source.frames` of the frames to analyze. Each needs the
/// flows of itself and the `k - 1` frames before it.
fn eval_positions(source: &SequenceSource, k: usize) -> Result<Vec<usize>, CliError> {
    let mut out = Vec::new();
    for (j, entry) in source.frames.iter().enumerate() {
        if !source.in_roi(entry.index) {
            continue;
        }
        let available = source.frames[..=j]
            .iter()
            .rev()
            .take_while(|e| e.flow_path.is_some())
            .count();
        if available < k {
            return Err(CliError::ShortHistory {
                frame: entry.index,
                needed: k,
                available,
            });
        }
        out.push(j);
    }
    Ok(out)
}

fn analyze_position(
    source: &SequenceSource,
    j: usize,
    params: &PipelineParams,
    overlays: Option<&Path>,
) -> Result<FrameOutput, CliError> {
    let entry = &source.frames[j];
    let frame = entry.index;
    let mask = source.load_mask(entry, params.fg_policy)?;
    let mut ring = FlowRing::new(params.k)?;
    for e in &source.frames[j + 1 - params.k..=j] {
        let f = source.load_flow(e)?.expect("history checked up front");
        ring.push(Arc::new(f))?;
    }
    let pipeline_err = |source| CliError::Pipeline { frame, source };
    let t = Instant::now();
    let compounded = flow::compound(&ring, params.compound_mode)?;
    let compound_ms = t.elapsed().as_secs_f64() * 1e3;
    let mut result = analyze_compounded(&mask, &compounded, params, frame).map_err(pipeline_err)?;
    result.diagnostics.timings.compound_ms = compound_ms;

    let fg = foreground_samples(&mask, &compounded, params.s).map_err(pipeline_err)?;
    let broken = |message: String| CliError::Invariant { frame, message };
    result.check_invariants(&fg).map_err(broken)?;
    let d = &result.diagnostics;
    if params.mode == AnalysisMode::Full && result.instances.len() > d.n_peaks_raw {
        return Err(broken(format!(
            "{} instances from {} peaks",
            result.instances.len(),
            d.n_peaks_raw
        )));
    }

    if let Some(dir) = overlays {
        let path = dir.join(format!("overlay_{frame:06}.png"));
        render_overlay(&mask, &result.boxes())
            .save(&path)
            .map_err(|e| CliError::io(&path)(std::io::Error::other(e)))?;
    }
    Ok(FrameOutput {
        record: FrameRecord::from(&result),
        timings: result.diagnostics.timings,
    })
}

/// Foreground in grey over black with each box outlined in red.
pub fn render_overlay(mask: &Mask, boxes: &[BBox]) -> RgbImage {
    let (w, h) = mask.dims();
    let mut img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        if mask.is_foreground(x as usize, y as usize) {
            Rgb([160, 160, 160])
        } else {
            Rgb([0, 0, 0])
        }
    });
    let red = Rgb([255, 0, 0]);
    for b in boxes {
        let (x1, y1) = (b.x_max - 1, b.y_max - 1);
        for x in b.x_min..b.x_max {
            img.put_pixel(x, b.y_min, red);
            img.put_pixel(x, y1, red);
        }
        for y in b.y_min..b.y_max {
            img.put_pixel(b.x_min, y, red);
            img.put_pixel(x1, y, red);
        }
    }
    img
}
