//! The seeded synthetic benchmark: generate scenes, analyze every frame with
//! a full flow window, and pool the matching counts.

use std::ops::Range;
use std::sync::Arc;

use flowseg::dataset::{synth_scene, SynthConfig};
use flowseg::eval::{match_boxes, Counts};
use flowseg::flow::FlowRing;
use flowseg::{analyze_frame, PipelineParams};
use rayon::prelude::*;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneScore {
    pub index: u64,
    pub n_objects: usize,
    pub frames: usize,
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub scenes: Vec<SceneScore>,
    pub pooled: Counts,
}

pub fn score_scene(
    cfg: &SynthConfig,
    index: u64,
    params: &PipelineParams,
    iou_threshold: f64,
) -> Result<SceneScore, CliError> {
    let seq = synth_scene(cfg)?;
    let mut ring = FlowRing::new(params.k)?;
    let mut counts = Counts::default();
    let mut frames = 0;
    for t in 0..seq.frame_count() {
        if let Some(f) = seq.flow(t) {
            ring.push(Arc::new(f))?;
        }
        if !ring.is_full() {
            continue;
        }
        let r = analyze_frame(&seq.mask(t), &ring, params, t as u64)
            .map_err(|source| CliError::Pipeline {
                frame: t as u64,
                source,
            })?;
        counts += match_boxes(&r.boxes(), &seq.gt_boxes(t), iou_threshold).counts();
        frames += 1;
    }
    Ok(SceneScore {
        index,
        n_objects: seq.objects.len(),
        frames,
        counts,
    })
}

/// Scenes `SynthConfig::benchmark_scene(i)` for `i` in `scenes`, in
/// parallel on the current rayon pool.
pub fn run_suite(
    scenes: Range<u64>,
    params: &PipelineParams,
    iou_threshold: f64,
) -> Result<SuiteReport, CliError> {
    let scores = scenes
        .into_par_iter()
        .map(|i| score_scene(&SynthConfig::benchmark_scene(i), i, params, iou_threshold))
        .collect::<Result<Vec<_>, _>>()?;
    let mut pooled = Counts::default();
    for s in &scores {
        pooled += s.counts;
    }
    Ok(SuiteReport {
        scenes: scores,
        pooled,
    })
}
