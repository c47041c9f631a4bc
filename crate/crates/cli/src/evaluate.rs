//! `eval`: score analysis results against ground-truth boxes.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use flowseg::dataset::{self, read_boxes_csv};
use flowseg::eval::{
    default_thresholds, format_table, pr_curve, render_curve_svg, validate_thresholds,
    write_curve_csv, CurvePoint, EvalError, SequenceScore,
};
use flowseg::{BBox, FrameRecord};

use crate::CliError;

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Results file from `analyze`; repeat together with --gt for several sequences
    #[arg(long = "results", required = true, value_name = "JSONL")]
    pub results: Vec<PathBuf>,
    /// Ground truth: a sequence directory (gt_boxes.csv, temporalROI.txt) or a boxes CSV
    #[arg(long = "gt", required = true, value_name = "PATH")]
    pub gt: Vec<PathBuf>,
    /// Sequence names for the table [default: ground-truth directory names]
    #[arg(long = "name")]
    pub names: Vec<String>,
    /// IoU thresholds, comma separated [default: 0.1,0.2,...,0.9]
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    /// IoU threshold of the summary table
    #[arg(long, default_value_t = 0.5)]
    pub table_iou: f64,
    /// Directory for curve.csv, table.txt and curve.svg
    #[arg(short, long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub scores: Vec<SequenceScore>,
    /// Pooled over all sequences.
    pub curve: Vec<CurvePoint>,
    pub table: String,
}

/// Per-frame predictions and ground truth of one sequence, aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSequence {
    pub frames: Vec<u64>,
    pub preds: Vec<Vec<BBox>>,
    pub gts: Vec<Vec<BBox>>,
}

pub fn read_results(path: &Path) -> Result<Vec<FrameRecord>, CliError> {
    let file = File::open(path).map_err(CliError::io(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(CliError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: FrameRecord = serde_json::from_str(&line).map_err(|e| CliError::Results {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Pairs results with ground truth. A sequence directory with a temporal
/// ROI fixes the frame set; otherwise the result frames are used and frames
/// without listed boxes have none.
pub fn align(results: &[FrameRecord], gt: &Path) -> Result<AlignedSequence, CliError> {
    let mut preds: BTreeMap<u64, Vec<BBox>> = BTreeMap::new();
    for r in results {
        if preds.insert(r.frame, r.boxes()).is_some() {
            return Err(CliError::Usage(format!("frame {} appears twice in the results", r.frame)));
        }
    }
    let (boxes, roi) = if gt.is_dir() {
        let roi_path = gt.join(dataset::ROI_FILE);
        let roi = roi_path
            .is_file()
            .then(|| dataset::read_roi(&roi_path))
            .transpose()?;
        (read_boxes_csv(gt.join(dataset::BOXES_FILE))?, roi)
    } else if gt.is_file() {
        (read_boxes_csv(gt)?, None)
    } else {
        return Err(CliError::MissingPath(gt.to_path_buf()));
    };
    let frames: Vec<u64> = match roi {
        Some((first, last)) => {
            let expected = (last - first + 1) as usize;
            if preds.len() != expected {
                return Err(EvalError::FrameCountMismatch {
                    predicted: preds.len(),
                    ground_truth: expected,
                }
                .into());
            }
            if let Some(&f) = preds.keys().find(|f| !(first..=last).contains(*f)) {
                return Err(CliError::FrameMismatch {
                    frame: f,
                    present: "the results",
                    missing: "the ground-truth range",
                });
            }
            (first..=last).collect()
        }
        None => preds.keys().copied().collect(),
    };
    Ok(AlignedSequence {
        preds: frames.iter().map(|f| preds.get(f).cloned().unwrap_or_default()).collect(),
        gts: frames.iter().map(|f| boxes.get(f).cloned().unwrap_or_default()).collect(),
        frames,
    })
}

fn sequence_name(gt: &Path, index: usize) -> String {
    let dir = if gt.is_dir() { Some(gt) } else { gt.parent() };
    dir.and_then(Path::file_name)
        .and_then(|n| n.to_str())
        .filter(|n| !n.is_empty())
        .map(str::to_string)
        .unwrap_or_else(|| format!("seq{}", index + 1))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport, CliError> {
    if args.results.len() != args.gt.len() {
        return Err(CliError::Usage(format!(
            "{} --results but {} --gt given",
            args.results.len(),
            args.gt.len()
        )));
    }
    if !args.names.is_empty() && args.names.len() != args.results.len() {
        return Err(CliError::Usage("give one --name per sequence or none".into()));
    }
    let thresholds = args.thresholds.clone().unwrap_or_else(default_thresholds);
    validate_thresholds(&thresholds)?;
    if !(args.table_iou > 0.0 && args.table_iou < 1.0) {
        return Err(CliError::Usage("table IoU must lie in (0, 1)".into()));
    }

    let mut scores = Vec::new();
    let (mut all_preds, mut all_gts) = (Vec::new(), Vec::new());
    for (i, (res, gt)) in args.results.iter().zip(&args.gt).enumerate() {
        let seq = align(&read_results(res)?, gt)?;
        let c = pr_curve(&seq.preds, &seq.gts, &[args.table_iou])?[0];
        scores.push(SequenceScore {
            name: args
                .names
                .get(i)
                .cloned()
                .unwrap_or_else(|| sequence_name(gt, i)),
            recall: c.recall(),
            precision: c.precision(),
        });
        all_preds.extend(seq.preds);
        all_gts.extend(seq.gts);
    }
    let curve = pr_curve(&all_preds, &all_gts, &thresholds)?;
    let table = format_table(&scores);

    let dir = &args.out_dir;
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let csv_path = dir.join("curve.csv");
    let mut w = BufWriter::new(File::create(&csv_path).map_err(CliError::io(&csv_path))?);
    write_curve_csv(&mut w, &curve).map_err(CliError::io(&csv_path))?;
    w.flush().map_err(CliError::io(&csv_path))?;
    let table_path = dir.join("table.txt");
    fs::write(&table_path, &table).map_err(CliError::io(&table_path))?;
    let svg_path = dir.join("curve.svg");
    fs::write(&svg_path, render_curve_svg(&curve)).map_err(CliError::io(&svg_path))?;

    Ok(EvalReport {
        scores,
        curve,
        table,
    })
}
