//! `flowviz`: color-code compounded flow fields.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use flowseg::dataset::{flow_file_name, DatasetError};
use flowseg::flow::{self, CompoundMode, FlowRing};
use flowseg::grid::read_flo;

use crate::CliError;

#[derive(Debug, Clone, Args)]
pub struct FlowvizArgs {
    /// Directory of per-step flows NNNNNN.flo
    pub flow_dir: PathBuf,
    /// Output directory for flow_NNNNNN.png and magnitudes.csv
    #[arg(short, long)]
    pub out: PathBuf,
}

/// Frame number and largest compounded magnitude of every rendered frame.
pub type Magnitudes = Vec<(u64, f64)>;

fn flow_index(name: &str) -> Option<u64> {
    let digits = name.strip_suffix(".flo")?;
    (digits.len() == 6 && digits.bytes().all(|b| b.is_ascii_digit()))
        .then(|| digits.parse().ok())
        .flatten()
}

fn list_flows(dir: &Path) -> Result<BTreeMap<u64, PathBuf>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::MissingPath(dir.to_path_buf()));
    }
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(CliError::io(dir))? {
        let entry = entry.map_err(CliError::io(dir))?;
        if let Some(n) = entry.file_name().to_str().and_then(flow_index) {
            out.insert(n, entry.path());
        }
    }
    Ok(out)
}

/// Renders every frame that has `k` consecutive flows ending at it.
pub fn cmd_flowviz(
    args: &FlowvizArgs,
    k: usize,
    mode: CompoundMode,
) -> Result<Magnitudes, CliError> {
    let files = list_flows(&args.flow_dir)?;
    let gap = |frame: u64| {
        CliError::Dataset(DatasetError::FrameGap {
            frame,
            path: args.flow_dir.join(flow_file_name(frame)),
        })
    };
    let first = *files.keys().next().ok_or_else(|| gap(1))?;
    let last = *files.keys().next_back().unwrap();
    if let Some(missing) = (first..=last).find(|n| !files.contains_key(n)) {
        return Err(gap(missing));
    }
    if ((last - first + 1) as usize) < k {
        return Err(gap(first + k as u64 - 1));
    }
    fs::create_dir_all(&args.out).map_err(CliError::io(&args.out))?;

    let mut ring = FlowRing::new(k)?;
    let mut mags = Vec::new();
    for (&n, path) in &files {
        ring.push(Arc::new(read_flo(path)?))?;
        if !ring.is_full() {
            continue;
        }
        let field = flow::compound(&ring, mode)?;
        let png = args.out.join(format!("flow_{n:06}.png"));
        flow::flow_to_color(&field)
            .save(&png)
            .map_err(|e| CliError::io(&png)(std::io::Error::other(e)))?;
        mags.push((n, flow::max_magnitude(&field)));
    }
    let csv = args.out.join("magnitudes.csv");
    let mut text = Vec::new();
    writeln!(text, "frame,max_magnitude").unwrap();
    for (n, m) in &mags {
        writeln!(text, "{n},{m}").unwrap();
    }
    fs::write(&csv, text).map_err(CliError::io(&csv))?;
    Ok(mags)
}
