//! Sequence inputs: CDnet-style directories and a synthetic generator of
//! translating rectangles with exact flows, masks and boxes.
//!
//! Directory layout (frame numbers are 1-based, six digits):
//!
//! ```text
//! <dir>/groundtruth/gt000001.png   (or .pgm)
//! <dir>/temporalROI.txt            "<first> <last>"
//! <dir>/gt_boxes.csv               frame,object,x_min,y_min,x_max,y_max
//! <flow_dir>/000002.flo            f(t, t-1) for frame t
//! ```
//!
//! The first frame of a sequence has no predecessor, so its flow file is
//! optional.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{self, BBox, FgPolicy, FlowField, GridError, Mask};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing temporal ROI file {0}")]
    MissingRoiFile(PathBuf),
    #[error("malformed temporal ROI in {path}: {content:?}")]
    MalformedRoi { path: PathBuf, content: String },
    #[error("temporal ROI {first}..={last} lies outside frames {min}..={max}")]
    RoiOutOfBounds {
        first: u64,
        last: u64,
        min: u64,
        max: u64,
    },
    #[error("no ground-truth frames under {0}")]
    EmptySequence(PathBuf),
    #[error("frame {frame} missing: {path}")]
    FrameGap { frame: u64, path: PathBuf },
    #[error("frame {frame}: {what} is {actual:?}, expected {expected:?}")]
    DimensionMismatch {
        frame: u64,
        what: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("malformed box file {path} line {line}: {reason}")]
    MalformedBoxes {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("invalid synthetic configuration: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub const GROUNDTRUTH_DIR: &str = "groundtruth";
pub const FLOW_DIR: &str = "flow";
pub const ROI_FILE: &str = "temporalROI.txt";
pub const BOXES_FILE: &str = "gt_boxes.csv";

pub fn flow_file_name(frame: u64) -> String {
    format!("{frame:06}.flo")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameEntry {
    pub index: u64,
    pub mask_path: PathBuf,
    pub flow_path: Option<PathBuf>,
}

/// Aligned mask and flow files of one sequence.
#[derive(Debug, Clone)]
pub struct SequenceSource {
    pub root: PathBuf,
    pub dims: (usize, usize),
    /// Strictly increasing, contiguous frame indices up to the ROI end.
    pub frames: Vec<FrameEntry>,
    /// Inclusive range of frames that are evaluated.
    pub roi: (u64, u64),
}

impl SequenceSource {
    pub fn in_roi(&self, frame: u64) -> bool {
        (self.roi.0..=self.roi.1).contains(&frame)
    }

    pub fn eval_frames(&self) -> impl Iterator<Item = &FrameEntry> {
        self.frames.iter().filter(|f| self.in_roi(f.index))
    }

    pub fn load_mask(&self, entry: &FrameEntry, policy: FgPolicy) -> Result<Mask, DatasetError> {
        Ok(grid::read_mask(&entry.mask_path, policy)?)
    }

    pub fn load_flow(&self, entry: &FrameEntry) -> Result<Option<FlowField>, DatasetError> {
        entry
            .flow_path
            .as_ref()
            .map(|p| grid::read_flo(p).map_err(DatasetError::from))
            .transpose()
    }

    /// Ground-truth boxes for every ROI frame (empty where none are listed).
    pub fn gt_boxes(&self) -> Result<BTreeMap<u64, Vec<BBox>>, DatasetError> {
        let listed = read_boxes_csv(self.root.join(BOXES_FILE))?;
        Ok((self.roi.0..=self.roi.1)
            .map(|f| (f, listed.get(&f).cloned().unwrap_or_default()))
            .collect())
    }
}

/// Reads the two integers of a temporal ROI file.
pub fn read_roi(path: &Path) -> Result<(u64, u64), DatasetError> {
    let content = fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => DatasetError::MissingRoiFile(path.to_path_buf()),
        _ => DatasetError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    let nums: Vec<u64> = content
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| DatasetError::MalformedRoi {
            path: path.to_path_buf(),
            content: content.clone(),
        })?;
    match nums[..] {
        [first, last] if first <= last => Ok((first, last)),
        _ => Err(DatasetError::MalformedRoi {
            path: path.to_path_buf(),
            content,
        }),
    }
}

fn mask_index(name: &str) -> Option<u64> {
    let stem = name
        .strip_suffix(".png")
        .or_else(|| name.strip_suffix(".pgm"))?;
    let digits = stem.strip_prefix("gt")?;
    (digits.len() == 6 && digits.bytes().all(|b| b.is_ascii_digit()))
        .then(|| digits.parse().ok())
        .flatten()
}

/// Indexes a CDnet-style sequence and checks it for gaps and size
/// mismatches. Frames after the ROI are ignored; frames before it are kept
/// so the flow ring can warm up.
pub fn load_cdnet_sequence(
    dir: impl AsRef<Path>,
    flow_dir: impl AsRef<Path>,
) -> Result<SequenceSource, DatasetError> {
    let dir = dir.as_ref();
    let flow_dir = flow_dir.as_ref();
    let roi = read_roi(&dir.join(ROI_FILE))?;
    let gt_dir = dir.join(GROUNDTRUTH_DIR);
    let mut masks: BTreeMap<u64, PathBuf> = BTreeMap::new();
    for entry in fs::read_dir(&gt_dir).map_err(io_err(&gt_dir))? {
        let entry = entry.map_err(io_err(&gt_dir))?;
        let name = entry.file_name();
        if let Some(idx) = name.to_str().and_then(mask_index) {
            // prefer PNG when both exist
            let path = entry.path();
            masks
                .entry(idx)
                .and_modify(|p| {
                    if path.extension().is_some_and(|e| e == "png") {
                        *p = path.clone();
                    }
                })
                .or_insert(path);
        }
    }
    let (&min, &max) = match (masks.keys().next(), masks.keys().next_back()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(DatasetError::EmptySequence(gt_dir)),
    };
    if roi.0 < min || roi.1 > max {
        return Err(DatasetError::RoiOutOfBounds {
            first: roi.0,
            last: roi.1,
            min,
            max,
        });
    }

    let mut frames = Vec::new();
    let mut dims: Option<(usize, usize)> = None;
    let mut check = |frame: u64, what: &'static str, actual: (usize, usize)| match dims {
        Some(expected) if expected != actual => Err(DatasetError::DimensionMismatch {
            frame,
            what,
            expected,
            actual,
        }),
        Some(_) => Ok(()),
        None => {
            dims = Some(actual);
            Ok(())
        }
    };
    for index in min..=roi.1 {
        let mask_path = masks.get(&index).cloned().ok_or_else(|| DatasetError::FrameGap {
            frame: index,
            path: gt_dir.join(format!("gt{index:06}.png")),
        })?;
        check(index, "mask", grid::read_mask_dims(&mask_path)?)?;
        let flow_path = flow_dir.join(flow_file_name(index));
        let flow_path = if flow_path.is_file() {
            check(index, "flow", grid::read_flo_dims(&flow_path)?)?;
            Some(flow_path)
        } else if index == min {
            None
        } else {
            return Err(DatasetError::FrameGap {
                frame: index,
                path: flow_path,
            });
        };
        frames.push(FrameEntry {
            index,
            mask_path,
            flow_path,
        });
    }
    Ok(SequenceSource {
        root: dir.to_path_buf(),
        dims: dims.unwrap_or((0, 0)),
        frames,
        roi,
    })
}

/// Reads `frame,object,x_min,y_min,x_max,y_max` rows; a missing file means
/// no boxes anywhere.
pub fn read_boxes_csv(path: impl AsRef<Path>) -> Result<BTreeMap<u64, Vec<BBox>>, DatasetError> {
    let path = path.as_ref();
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(BTreeMap::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut out: BTreeMap<u64, Vec<(u64, BBox)>> = BTreeMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let line = line.trim();
        if line.is_empty() || (n == 0 && line.starts_with("frame")) {
            continue;
        }
        let bad = |reason: &str| DatasetError::MalformedBoxes {
            path: path.to_path_buf(),
            line: n + 1,
            reason: reason.to_string(),
        };
        let fields: Vec<u64> = line
            .split(',')
            .map(|f| f.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|_| bad("expected six integers"))?;
        let [frame, object, x0, y0, x1, y1] = fields[..] else {
            return Err(bad("expected six integers"));
        };
        let to32 = |v: u64| u32::try_from(v).map_err(|_| bad("coordinate out of range"));
        let bbox = BBox::new(to32(x0)?, to32(y0)?, to32(x1)?, to32(y1)?)
            .ok_or_else(|| bad("empty box"))?;
        out.entry(frame).or_default().push((object, bbox));
    }
    Ok(out
        .into_iter()
        .map(|(f, mut v)| {
            v.sort_by_key(|&(o, _)| o);
            (f, v.into_iter().map(|(_, b)| b).collect())
        })
        .collect())
}

pub fn write_boxes_csv<W: Write>(mut out: W, boxes: &BTreeMap<u64, Vec<BBox>>) -> io::Result<()> {
    writeln!(out, "frame,object,x_min,y_min,x_max,y_max")?;
    for (frame, list) in boxes {
        for (i, b) in list.iter().enumerate() {
            writeln!(
                out,
                "{frame},{i},{},{},{},{}",
                b.x_min, b.y_min, b.x_max, b.y_max
            )?;
        }
    }
    Ok(())
}

/// A rectangle translating at constant velocity. `(x, y)` is its top-left
/// corner at frame 0; it covers the pixels whose centers fall inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub x: f64,
    pub y: f64,
    pub w: u32,
    pub h: u32,
    pub vx: f64,
    pub vy: f64,
}

impl ObjectSpec {
    pub fn origin_at(&self, t: usize) -> (f64, f64) {
        (self.x + t as f64 * self.vx, self.y + t as f64 * self.vy)
    }

    /// Pixel range covered at frame `t`, clipped to the image.
    pub fn bbox_at(&self, t: usize, width: usize, height: usize) -> Option<BBox> {
        let (x, y) = self.origin_at(t);
        let lo = |v: f64, lim: usize| (v - 0.5).ceil().clamp(0.0, lim as f64) as u32;
        BBox::new(
            lo(x, width),
            lo(y, height),
            lo(x + self.w as f64, width),
            lo(y + self.h as f64, height),
        )
    }

    /// Whether the footprint at frame `t` covers pixel `(px, py)`.
    pub fn covers(&self, t: usize, px: usize, py: usize) -> bool {
        let (x, y) = self.origin_at(t);
        let (cx, cy) = (px as f64 + 0.5, py as f64 + 0.5);
        cx >= x && cx < x + self.w as f64 && cy >= y && cy < y + self.h as f64
    }

    fn stays_inside(&self, frames: usize, width: usize, height: usize) -> bool {
        [0, frames.saturating_sub(1)].iter().all(|&t| {
            let (x, y) = self.origin_at(t);
            x >= 0.0
                && y >= 0.0
                && x + self.w as f64 <= width as f64
                && y + self.h as f64 <= height as f64
        })
    }

    fn velocity_separation(&self, other: &ObjectSpec) -> f64 {
        (self.vx - other.vx).abs().max((self.vy - other.vy).abs())
    }

    /// Chebyshev gap between the two rectangles at frame `t`; negative when
    /// they overlap.
    fn gap_at(&self, other: &ObjectSpec, t: usize) -> f64 {
        let (ax, ay) = self.origin_at(t);
        let (bx, by) = other.origin_at(t);
        let gx = (bx - (ax + self.w as f64)).max(ax - (bx + other.w as f64));
        let gy = (by - (ay + self.h as f64)).max(ay - (by + other.h as f64));
        gx.max(gy)
    }

    fn min_gap(&self, other: &ObjectSpec, frames: usize) -> f64 {
        (0..frames.max(1))
            .map(|t| self.gap_at(other, t))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub seed: u64,
    /// Objects to spawn randomly, 0..=8. Ignored when `objects` is given.
    pub n_objects: usize,
    /// Smallest rectangle `[w, h]`.
    pub size_min: [u32; 2],
    pub size_max: [u32; 2],
    /// Candidate velocity components in px/frame; the zero vector is never
    /// drawn.
    pub velocity_choices: Vec<f64>,
    /// Two objects whose velocities differ by at least this much in one
    /// component are separable by motion.
    pub min_velocity_separation: f64,
    /// Otherwise they must stay at least this many pixels apart.
    pub min_spatial_gap: f64,
    /// Lets motion-separable objects pass over each other.
    pub allow_overlap: bool,
    /// Standard deviation of Gaussian noise added to every flow component.
    pub flow_noise_sigma: f64,
    /// Probability of flipping each mask pixel.
    pub mask_noise: f64,
    /// Explicit objects instead of random spawning.
    pub objects: Option<Vec<ObjectSpec>>,
    pub max_spawn_attempts: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            frame_count: 200,
            seed: 0,
            n_objects: 3,
            size_min: [40, 40],
            size_max: [64, 64],
            velocity_choices: vec![-0.4, 0.0, 0.4],
            min_velocity_separation: 2.0,
            min_spatial_gap: 6.0,
            allow_overlap: false,
            flow_noise_sigma: 0.0,
            mask_noise: 0.0,
            objects: None,
            max_spawn_attempts: 2000,
        }
    }
}

/// Spatial gap between same-direction objects in [`SynthConfig::benchmark_scene`].
pub const BENCHMARK_SPATIAL_GAP: f64 = 30.0;

impl SynthConfig {
    /// Scene `index` of the standard benchmark suite: 320x240, 200 frames,
    /// `1 + index % 5` objects, noiseless.
    ///
    /// Speeds of 0.4 px/frame keep the staircase that pixelwise compounding
    /// leaves at a leading edge ((k-1)·|v|·√2 ≈ 2.26 for k = 5) below the
    /// default flow-separation threshold of 2.5, so it never forms a peak.
    pub fn benchmark_scene(index: u64) -> Self {
        Self {
            seed: index,
            n_objects: 1 + (index % 5) as usize,
            min_spatial_gap: BENCHMARK_SPATIAL_GAP,
            ..Self::default()
        }
    }

    /// Whether two objects can be told apart by motion or by distance.
    pub fn separable(&self, a: &ObjectSpec, b: &ObjectSpec) -> bool {
        let gap = a.min_gap(b, self.frame_count);
        let by_motion = a.velocity_separation(b) >= self.min_velocity_separation
            && (self.allow_overlap || gap >= 0.0);
        by_motion || gap >= self.min_spatial_gap
    }

    fn validate(&self) -> Result<(), DatasetError> {
        let fail = |m: String| Err(DatasetError::ConfigInvalid(m));
        if self.width == 0 || self.height == 0 {
            return fail("image dimensions must be positive".into());
        }
        if self.frame_count == 0 {
            return fail("frame_count must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.mask_noise) {
            return fail(format!("mask_noise {} outside [0, 1]", self.mask_noise));
        }
        if !(self.flow_noise_sigma >= 0.0 && self.flow_noise_sigma.is_finite()) {
            return fail(format!("flow_noise_sigma {}", self.flow_noise_sigma));
        }
        if self.objects.is_none() {
            if self.n_objects > 8 {
                return fail(format!("n_objects {} exceeds 8", self.n_objects));
            }
            if self.size_min[0] == 0
                || self.size_min[1] == 0
                || self.size_min[0] > self.size_max[0]
                || self.size_min[1] > self.size_max[1]
            {
                return fail("size range must be positive and ordered".into());
            }
            if self.n_objects > 0 && !self.velocity_choices.iter().any(|&v| v != 0.0) {
                return fail("velocity_choices needs a non-zero value".into());
            }
        }
        Ok(())
    }
}

fn spawn_objects(cfg: &SynthConfig) -> Result<Vec<ObjectSpec>, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let span = (cfg.frame_count.max(1) - 1) as f64;
    for _ in 0..cfg.max_spawn_attempts.max(1) {
        let mut objects: Vec<ObjectSpec> = Vec::with_capacity(cfg.n_objects);
        'object: for _ in 0..cfg.n_objects {
            for _ in 0..200 {
                let w = rng.random_range(cfg.size_min[0]..=cfg.size_max[0]);
                let h = rng.random_range(cfg.size_min[1]..=cfg.size_max[1]);
                let vx = cfg.velocity_choices[rng.random_range(0..cfg.velocity_choices.len())];
                let vy = cfg.velocity_choices[rng.random_range(0..cfg.velocity_choices.len())];
                if vx == 0.0 && vy == 0.0 {
                    continue;
                }
                // start range that keeps the whole trajectory inside
                let x_lo = (-span * vx).max(0.0).ceil();
                let x_hi = (cfg.width as f64 - w as f64 - (span * vx).max(0.0)).floor();
                let y_lo = (-span * vy).max(0.0).ceil();
                let y_hi = (cfg.height as f64 - h as f64 - (span * vy).max(0.0)).floor();
                if x_hi < x_lo || y_hi < y_lo {
                    continue;
                }
                let cand = ObjectSpec {
                    x: rng.random_range(x_lo as i64..=x_hi as i64) as f64,
                    y: rng.random_range(y_lo as i64..=y_hi as i64) as f64,
                    w,
                    h,
                    vx,
                    vy,
                };
                if objects.iter().all(|o| cfg.separable(o, &cand)) {
                    objects.push(cand);
                    continue 'object;
                }
            }
            break;
        }
        if objects.len() == cfg.n_objects {
            return Ok(objects);
        }
    }
    Err(DatasetError::ConfigInvalid(format!(
        "could not place {} separable objects in {} attempts",
        cfg.n_objects, cfg.max_spawn_attempts
    )))
}

fn check_explicit(cfg: &SynthConfig, objects: &[ObjectSpec]) -> Result<(), DatasetError> {
    if objects.len() > 8 {
        return Err(DatasetError::ConfigInvalid(format!(
            "{} objects exceed 8",
            objects.len()
        )));
    }
    for (i, o) in objects.iter().enumerate() {
        if o.w == 0 || o.h == 0 {
            return Err(DatasetError::ConfigInvalid(format!("object {i} is empty")));
        }
        if !o.stays_inside(cfg.frame_count, cfg.width, cfg.height) {
            return Err(DatasetError::ConfigInvalid(format!(
                "object {i} leaves the frame"
            )));
        }
        for (j, p) in objects[..i].iter().enumerate() {
            if o.vx == p.vx && o.vy == p.vy && o.gap_at(p, 0) < 0.0 {
                return Err(DatasetError::ConfigInvalid(format!(
                    "objects {j} and {i} overlap with identical velocity"
                )));
            }
        }
    }
    Ok(())
}

/// Synthetic sequence; frames are rendered on demand from the object list.
#[derive(Debug, Clone)]
pub struct SynthSequence {
    pub config: SynthConfig,
    pub objects: Vec<ObjectSpec>,
}

pub fn synth_scene(config: &SynthConfig) -> Result<SynthSequence, DatasetError> {
    config.validate()?;
    let objects = match &config.objects {
        Some(list) => {
            check_explicit(config, list)?;
            list.clone()
        }
        None => spawn_objects(config)?,
    };
    Ok(SynthSequence {
        config: config.clone(),
        objects,
    })
}

const MASK_NOISE_STREAM: u64 = 0x6d61_736b;
const FLOW_NOISE_STREAM: u64 = 0x666c_6f77;

impl SynthSequence {
    pub fn dims(&self) -> (usize, usize) {
        (self.config.width, self.config.height)
    }

    pub fn frame_count(&self) -> usize {
        self.config.frame_count
    }

    fn frame_rng(&self, stream: u64, t: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ stream);
        rng.set_stream(t as u64);
        rng
    }

    /// Topmost object covering a pixel at frame `t`; later objects are drawn
    /// over earlier ones.
    pub fn object_at(&self, t: usize, px: usize, py: usize) -> Option<usize> {
        (0..self.objects.len())
            .rev()
            .find(|&i| self.objects[i].covers(t, px, py))
    }

    fn owner_map(&self, t: usize) -> Vec<Option<usize>> {
        let (w, h) = self.dims();
        let mut owner = vec![None; w * h];
        for (i, o) in self.objects.iter().enumerate() {
            let Some(b) = o.bbox_at(t, w, h) else { continue };
            for y in b.y_min..b.y_max {
                for x in b.x_min..b.x_max {
                    owner[y as usize * w + x as usize] = Some(i);
                }
            }
        }
        owner
    }

    /// Noise-free foreground mask of frame `t` (255 inside any object).
    pub fn clean_mask(&self, t: usize) -> Mask {
        let (w, h) = self.dims();
        let owner = self.owner_map(t);
        Mask::from_fn(w, h, |x, y| owner[y * w + x].is_some())
    }

    pub fn mask(&self, t: usize) -> Mask {
        let mask = self.clean_mask(t);
        if self.config.mask_noise <= 0.0 {
            return mask;
        }
        let mut rng = self.frame_rng(MASK_NOISE_STREAM, t);
        let labels = mask
            .labels()
            .iter()
            .map(|&l| {
                if rng.random_bool(self.config.mask_noise) {
                    255 - l
                } else {
                    l
                }
            })
            .collect();
        Mask::new(mask.width(), mask.height(), labels, mask.fg_policy()).unwrap()
    }

    /// Noise-free one-step backward flow `f(t, t-1)`: minus the object's
    /// velocity inside it, zero elsewhere. `None` for frame 0.
    pub fn clean_flow(&self, t: usize) -> Option<FlowField> {
        (t > 0).then(|| self.scaled_flow(t, 1.0))
    }

    pub fn flow(&self, t: usize) -> Option<FlowField> {
        let clean = self.clean_flow(t)?;
        if self.config.flow_noise_sigma <= 0.0 {
            return Some(clean);
        }
        let normal = Normal::new(0.0, self.config.flow_noise_sigma).unwrap();
        let mut rng = self.frame_rng(FLOW_NOISE_STREAM, t);
        let (w, h) = clean.dims();
        let data = clean
            .data()
            .iter()
            .map(|uv| {
                [
                    (uv[0] as f64 + normal.sample(&mut rng)) as f32,
                    (uv[1] as f64 + normal.sample(&mut rng)) as f32,
                ]
            })
            .collect();
        Some(FlowField::new(w, h, data).unwrap())
    }

    /// Exact displacement from frame `t` back to frame `t - k` for every
    /// object pixel, zero elsewhere.
    pub fn true_compound_flow(&self, t: usize, k: usize) -> FlowField {
        self.scaled_flow(t, k as f64)
    }

    fn scaled_flow(&self, t: usize, k: f64) -> FlowField {
        let (w, h) = self.dims();
        let owner = self.owner_map(t);
        let data = owner
            .iter()
            .map(|o| match o {
                Some(i) => {
                    let ob = &self.objects[*i];
                    [(-k * ob.vx) as f32, (-k * ob.vy) as f32]
                }
                None => [0.0, 0.0],
            })
            .collect();
        FlowField::new(w, h, data).unwrap()
    }

    /// Ground-truth box of every object at frame `t`, in object order.
    pub fn gt_boxes(&self, t: usize) -> Vec<BBox> {
        let (w, h) = self.dims();
        self.objects
            .iter()
            .filter_map(|o| o.bbox_at(t, w, h))
            .collect()
    }
}

/// Writes a synthetic sequence in the CDnet-style layout. Frame `t` is
/// stored under number `t + 1`; the temporal ROI starts at the first frame
/// with `warmup` flows behind it.
pub fn export_sequence(
    seq: &SynthSequence,
    dir: impl AsRef<Path>,
    warmup: usize,
) -> Result<(), DatasetError> {
    let dir = dir.as_ref();
    let gt_dir = dir.join(GROUNDTRUTH_DIR);
    let flow_dir = dir.join(FLOW_DIR);
    for d in [&gt_dir, &flow_dir] {
        fs::create_dir_all(d).map_err(io_err(d))?;
    }
    let mut boxes = BTreeMap::new();
    for t in 0..seq.frame_count() {
        let n = t as u64 + 1;
        grid::write_mask_pgm(&seq.mask(t), gt_dir.join(format!("gt{n:06}.pgm")))?;
        if let Some(f) = seq.flow(t) {
            grid::write_flo(&f, flow_dir.join(flow_file_name(n)))?;
        }
        boxes.insert(n, seq.gt_boxes(t));
    }
    let first = (warmup as u64 + 1).min(seq.frame_count() as u64);
    let roi_path = dir.join(ROI_FILE);
    fs::write(&roi_path, format!("{} {}\n", first, seq.frame_count())).map_err(io_err(&roi_path))?;
    let box_path = dir.join(BOXES_FILE);
    let mut file = io::BufWriter::new(fs::File::create(&box_path).map_err(io_err(&box_path))?);
    write_boxes_csv(&mut file, &boxes).map_err(io_err(&box_path))?;
    file.flush().map_err(io_err(&box_path))
}
