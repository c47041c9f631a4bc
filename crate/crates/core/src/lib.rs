//! Motion-based instance segmentation of foreground masks.
//!
//! A foreground mask and a window of backward optical flows go in; one
//! bounding box per moving object comes out. The stages are:
//!
//! - [`flow`]: compound the last `k` one-step flows into a single field,
//! - [`sampler`]: take a sparse lattice of foreground samples,
//! - [`cfsfdp`]: find density peaks in joint flow/position space,
//! - [`gbis`]: over-segment the sample lattice by flow similarity,
//! - [`pipeline`]: keep the segments that own a peak and box them.
//!
//! [`eval`] scores boxes against ground truth and [`dataset`] reads
//! sequences from disk or generates synthetic ones.

pub mod cfsfdp;
pub mod dataset;
pub mod eval;
pub mod flow;
pub mod gbis;
pub mod grid;
pub mod pipeline;
pub mod sampler;

pub use grid::{iou, BBox, FgPolicy, FlowField, GridError, Mask};
pub use pipeline::{analyze_frame, FrameRecord, FrameResult, PipelineError, PipelineParams};
