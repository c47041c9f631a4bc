//! Per-frame moving foreground analysis: compound the flow, sample the
//! foreground, find density peaks, segment, keep the segments that hold a
//! peak, and box each of them.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cfsfdp::{self, CfsfdpError, CompositionParams, CutoffChoice, PeakThresholds};
use crate::flow::{self, CompoundMode, FlowError, FlowRing};
use crate::gbis::{self, GbisError, SegmentForest};
use crate::grid::{BBox, FgPolicy, FlowField, Mask};
use crate::sampler::{self, SampleError, SamplePoint, SamplePointSet};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Composition(#[from] CfsfdpError),
    #[error(transparent)]
    Segmentation(#[from] GbisError),
    #[error("mask is {mask:?} but flow is {flow:?}")]
    DimensionMismatch {
        mask: (usize, usize),
        flow: (usize, usize),
    },
    #[error("cannot box an empty segment")]
    EmptySegment,
}

/// Which stages run after sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalysisMode {
    /// Density peaks guide segmentation and select segments.
    Full,
    /// Segmentation alone with a fixed `tau`; every segment is an instance.
    GbisOnly { tau: f64 },
}

/// Fixed aggregation parameter for [`AnalysisMode::GbisOnly`].
pub const DEFAULT_GBIS_ONLY_TAU: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineParams {
    /// Frames compounded into one flow field.
    pub k: usize,
    /// Sample interval in pixels.
    pub s: usize,
    /// Balance between flow and coordinates in the density features.
    pub p: f64,
    pub c1: f64,
    pub c2: f64,
    /// Coordinate separation threshold in pixels.
    pub td2: f64,
    /// Cap on the number of samples given to the density analysis.
    pub n_c: usize,
    pub d_c: CutoffChoice,
    pub compound_mode: CompoundMode,
    pub seed: u64,
    pub fg_policy: FgPolicy,
    pub mode: AnalysisMode,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            k: 5,
            s: 3,
            p: 50.0,
            c1: 15.0,
            c2: 0.5,
            td2: 50.0,
            n_c: 200,
            d_c: CutoffChoice::default(),
            compound_mode: CompoundMode::Pixelwise,
            seed: 0,
            fg_policy: FgPolicy::default(),
            mode: AnalysisMode::Full,
        }
    }
}

impl PipelineParams {
    pub fn composition(&self) -> CompositionParams {
        CompositionParams {
            p: self.p,
            cutoff: self.d_c,
            thresholds: PeakThresholds {
                c1: self.c1,
                c2: self.c2,
                k: self.k,
                td2: self.td2,
            },
            n_c: self.n_c,
        }
    }

    /// Seed of the subsampling generator for one frame.
    pub fn frame_seed(&self, frame_index: u64) -> u64 {
        splitmix64(self.seed ^ frame_index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One analyzed moving object.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    /// Densest peak of the segment (lowest-id member in GBIS-only mode).
    pub rep_peak: SamplePoint,
    pub rep_rho: Option<f64>,
    /// Foreground sample ids of the segment, ascending.
    pub member_ids: Vec<usize>,
    pub bbox: BBox,
    /// Average compounded flow over the members (derived output).
    pub mean_flow: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageTimings {
    pub compound_ms: f64,
    pub sampling_ms: f64,
    pub composition_ms: f64,
    pub segmentation_ms: f64,
    pub postprocess_ms: f64,
}

impl StageTimings {
    pub fn total_ms(&self) -> f64 {
        self.compound_ms
            + self.sampling_ms
            + self.composition_ms
            + self.segmentation_ms
            + self.postprocess_ms
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub n_fg_samples: usize,
    pub n_analyzed: usize,
    pub n_peaks_raw: usize,
    pub n_segments_raw: usize,
    pub tau: Option<f64>,
    pub d_c: Option<f64>,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame_index: u64,
    pub instances: Vec<Instance>,
    pub diagnostics: Diagnostics,
}

impl FrameResult {
    pub fn boxes(&self) -> Vec<BBox> {
        self.instances.iter().map(|i| i.bbox).collect()
    }

    /// Checks the structural guarantees of a result against the sample set
    /// it was computed from.
    pub fn check_invariants(&self, fg: &SamplePointSet) -> Result<(), String> {
        let mut owner = vec![false; fg.len()];
        for (n, inst) in self.instances.iter().enumerate() {
            if inst.member_ids.binary_search(&inst.rep_peak.id).is_err() {
                return Err(format!("instance {n}: representative is not a member"));
            }
            for &id in &inst.member_ids {
                let Some(p) = fg.points.get(id) else {
                    return Err(format!("instance {n}: member {id} out of range"));
                };
                if std::mem::replace(&mut owner[id], true) {
                    return Err(format!("sample {id} belongs to two instances"));
                }
                if !inst.bbox.contains(p.x, p.y) {
                    return Err(format!("instance {n}: box misses member {id}"));
                }
            }
        }
        Ok(())
    }
}

/// Distinct segments (by root) that contain at least one peak, in order of
/// their first peak.
pub fn select_segments(forest: &SegmentForest, peaks: &[usize]) -> Vec<usize> {
    let mut roots: Vec<usize> = Vec::new();
    for &p in peaks {
        let r = forest.root(p);
        if !roots.contains(&r) {
            roots.push(r);
        }
    }
    roots
}

/// For each selected segment, the contained peak with the highest density
/// (ties to the lower id). Aligned with `segments`.
pub fn representative_peaks(
    segments: &[usize],
    forest: &SegmentForest,
    peaks: &[usize],
    rho: impl Fn(usize) -> f64,
) -> Vec<usize> {
    segments
        .iter()
        .map(|&root| {
            peaks
                .iter()
                .copied()
                .filter(|&p| forest.root(p) == root)
                .fold(None, |best: Option<usize>, p| match best {
                    Some(b) if rho(b) > rho(p) || (rho(b) == rho(p) && b < p) => Some(b),
                    _ => Some(p),
                })
                .expect("selected segment holds a peak")
        })
        .collect()
}

/// Smallest box over the members, grown by `ceil(s/2)` on every side and
/// clamped to the image.
pub fn bbox_for_segment(
    members: &[SamplePoint],
    s: usize,
    width: usize,
    height: usize,
) -> Result<BBox, PipelineError> {
    let first = members.first().ok_or(PipelineError::EmptySegment)?;
    let (mut x0, mut y0, mut x1, mut y1) = (first.x, first.y, first.x, first.y);
    for p in members {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let grow = s.div_ceil(2) as u32;
    let clamp_x = |v: u32| v.min(width as u32);
    let clamp_y = |v: u32| v.min(height as u32);
    BBox::new(
        x0.saturating_sub(grow),
        y0.saturating_sub(grow),
        clamp_x(x1 + 1 + grow).max(x1 + 1),
        clamp_y(y1 + 1 + grow).max(y1 + 1),
    )
    .ok_or(PipelineError::EmptySegment)
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn build_instance(
    fg: &SamplePointSet,
    members: Vec<usize>,
    rep: usize,
    rep_rho: Option<f64>,
    s: usize,
) -> Result<Instance, PipelineError> {
    let pts: Vec<SamplePoint> = members.iter().map(|&i| fg.points[i]).collect();
    let bbox = bbox_for_segment(&pts, s, fg.width, fg.height)?;
    let n = pts.len() as f64;
    let mean_flow = [
        pts.iter().map(|p| p.u as f64).sum::<f64>() / n,
        pts.iter().map(|p| p.v as f64).sum::<f64>() / n,
    ];
    Ok(Instance {
        rep_peak: fg.points[rep],
        rep_rho,
        member_ids: members,
        bbox,
        mean_flow,
    })
}

/// Foreground samples of one frame given its compounded flow.
pub fn foreground_samples(
    mask: &Mask,
    flow: &FlowField,
    s: usize,
) -> Result<SamplePointSet, PipelineError> {
    if mask.dims() != flow.dims() {
        return Err(PipelineError::DimensionMismatch {
            mask: mask.dims(),
            flow: flow.dims(),
        });
    }
    let grid = sampler::sample_grid(mask.width(), mask.height(), s)?;
    Ok(sampler::restrict_to_foreground(&grid, mask, flow)?)
}

/// Runs the analysis on an already compounded flow field.
pub fn analyze_compounded(
    mask: &Mask,
    flow: &FlowField,
    params: &PipelineParams,
    frame_index: u64,
) -> Result<FrameResult, PipelineError> {
    let mut diag = Diagnostics::default();
    let t = Instant::now();
    let fg = foreground_samples(mask, flow, params.s)?;
    diag.timings.sampling_ms = ms_since(t);
    diag.n_fg_samples = fg.len();
    let instances = analyze_samples(&fg, params, frame_index, &mut diag)?;
    Ok(FrameResult {
        frame_index,
        instances,
        diagnostics: diag,
    })
}

/// Stages after sampling; fills the counters and timings in `diag`.
pub fn analyze_samples(
    fg: &SamplePointSet,
    params: &PipelineParams,
    frame_index: u64,
    diag: &mut Diagnostics,
) -> Result<Vec<Instance>, PipelineError> {
    if fg.is_empty() {
        return Ok(Vec::new());
    }
    let mut instances = Vec::new();
    match params.mode {
        AnalysisMode::Full => {
            let t = Instant::now();
            let analysis = cfsfdp::analyze(fg, &params.composition(), params.frame_seed(frame_index))?;
            diag.timings.composition_ms = ms_since(t);
            diag.n_analyzed = analysis.subsample_ids.len();
            diag.n_peaks_raw = analysis.peaks.len();
            diag.d_c = Some(analysis.d_c);
            if analysis.peaks.is_empty() {
                return Ok(instances);
            }

            let t = Instant::now();
            let tau = gbis::adaptive_tau(fg.len(), analysis.peaks.len())?;
            let graph = gbis::build_graph(fg);
            let forest = gbis::segment(&graph, tau)?;
            diag.timings.segmentation_ms = ms_since(t);
            diag.tau = Some(tau);
            diag.n_segments_raw = forest.segment_count();

            let t = Instant::now();
            let selected = select_segments(&forest, &analysis.peaks);
            let rho = |id: usize| analysis.rho_of(id).expect("peaks are analyzed samples");
            let reps = representative_peaks(&selected, &forest, &analysis.peaks, rho);
            let labels = forest.labels();
            for (&root, &rep) in selected.iter().zip(&reps) {
                let members: Vec<usize> = (0..fg.len()).filter(|&i| labels[i] == root).collect();
                instances.push(build_instance(fg, members, rep, Some(rho(rep)), params.s)?);
            }
            diag.timings.postprocess_ms = ms_since(t);
        }
        AnalysisMode::GbisOnly { tau } => {
            let t = Instant::now();
            let forest = gbis::segment(&gbis::build_graph(fg), tau)?;
            diag.timings.segmentation_ms = ms_since(t);
            diag.tau = Some(tau);
            diag.n_segments_raw = forest.segment_count();

            let t = Instant::now();
            for members in forest.segments() {
                let rep = members[0];
                instances.push(build_instance(fg, members, rep, None, params.s)?);
            }
            diag.timings.postprocess_ms = ms_since(t);
        }
    }
    instances.sort_by_key(|i| i.rep_peak.id);
    Ok(instances)
}

/// Full per-frame analysis from a mask and a ring of one-step flows.
pub fn analyze_frame(
    mask: &Mask,
    ring: &FlowRing,
    params: &PipelineParams,
    frame_index: u64,
) -> Result<FrameResult, PipelineError> {
    if let Some(dims) = ring.dims() {
        if dims != mask.dims() {
            return Err(PipelineError::DimensionMismatch {
                mask: mask.dims(),
                flow: dims,
            });
        }
    }
    let t = Instant::now();
    let compounded = flow::compound(ring, params.compound_mode)?;
    let compound_ms = ms_since(t);
    let mut result = analyze_compounded(mask, &compounded, params, frame_index)?;
    result.diagnostics.timings.compound_ms = compound_ms;
    Ok(result)
}

/// Serialized form of a frame result, one JSON object per line. Timings are
/// deliberately absent so that reruns compare byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: u64,
    pub instances: Vec<InstanceRecord>,
    pub diagnostics: DiagnosticsRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub peak: PeakRecord,
    pub bbox: [u32; 4],
    pub size: usize,
    pub mean_flow: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakRecord {
    pub x: u32,
    pub y: u32,
    pub u: f32,
    pub v: f32,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub n_fg_samples: usize,
    pub n_analyzed: usize,
    pub n_peaks_raw: usize,
    pub n_segments_raw: usize,
    pub tau: Option<f64>,
    pub d_c: Option<f64>,
}

impl FrameRecord {
    pub fn boxes(&self) -> Vec<BBox> {
        self.instances
            .iter()
            .filter_map(|i| BBox::new(i.bbox[0], i.bbox[1], i.bbox[2], i.bbox[3]))
            .collect()
    }
}

impl From<&FrameResult> for FrameRecord {
    fn from(r: &FrameResult) -> Self {
        let d = &r.diagnostics;
        FrameRecord {
            frame: r.frame_index,
            instances: r
                .instances
                .iter()
                .map(|i| InstanceRecord {
                    peak: PeakRecord {
                        x: i.rep_peak.x,
                        y: i.rep_peak.y,
                        u: i.rep_peak.u,
                        v: i.rep_peak.v,
                        rho: i.rep_rho,
                    },
                    bbox: i.bbox.to_array(),
                    size: i.member_ids.len(),
                    mean_flow: i.mean_flow,
                })
                .collect(),
            diagnostics: DiagnosticsRecord {
                n_fg_samples: d.n_fg_samples,
                n_analyzed: d.n_analyzed,
                n_peaks_raw: d.n_peaks_raw,
                n_segments_raw: d.n_segments_raw,
                tau: d.tau,
                d_c: d.d_c,
            },
        }
    }
}
