//! Sparse lattice sampling and foreground restriction.

use thiserror::Error;

use crate::grid::{FlowField, Mask};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SampleError {
    #[error("sample interval must be at least 1")]
    ZeroInterval,
    #[error("dimension mismatch: samples {samples:?}, mask {mask:?}, flow {flow:?}")]
    DimensionMismatch {
        samples: (usize, usize),
        mask: (usize, usize),
        flow: (usize, usize),
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePoint {
    /// Dense index within the owning set.
    pub id: usize,
    pub x: u32,
    pub y: u32,
    pub u: f32,
    pub v: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    All,
    Foreground,
}

/// Lattice samples ordered by `(y, x)` with ids `0..n` in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePointSet {
    pub interval: usize,
    pub width: usize,
    pub height: usize,
    pub points: Vec<SamplePoint>,
    pub provenance: Provenance,
}

impl SamplePointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Offset of the lattice along both axes.
    pub fn offset(&self) -> usize {
        self.interval / 2
    }

    /// Builds a foreground set directly from points on this lattice, e.g.
    /// for benchmarks. Points are re-sorted and re-numbered.
    pub fn from_points(
        interval: usize,
        width: usize,
        height: usize,
        mut points: Vec<SamplePoint>,
    ) -> Result<Self, SampleError> {
        if interval == 0 {
            return Err(SampleError::ZeroInterval);
        }
        points.sort_by_key(|p| (p.y, p.x));
        for (id, p) in points.iter_mut().enumerate() {
            p.id = id;
        }
        Ok(Self {
            interval,
            width,
            height,
            points,
            provenance: Provenance::Foreground,
        })
    }
}

/// Lattice at offset `(s/2, s/2)` with stride `s`; flows are left at zero.
pub fn sample_grid(width: usize, height: usize, s: usize) -> Result<SamplePointSet, SampleError> {
    if s == 0 {
        return Err(SampleError::ZeroInterval);
    }
    let off = s / 2;
    let mut points = Vec::new();
    for y in (off..height).step_by(s) {
        for x in (off..width).step_by(s) {
            points.push(SamplePoint {
                id: points.len(),
                x: x as u32,
                y: y as u32,
                u: 0.0,
                v: 0.0,
            });
        }
    }
    Ok(SamplePointSet {
        interval: s,
        width,
        height,
        points,
        provenance: Provenance::All,
    })
}

/// Keeps the samples that land on foreground pixels, attaches the flow at
/// each kept sample and renumbers the ids densely.
pub fn restrict_to_foreground(
    samples: &SamplePointSet,
    mask: &Mask,
    flow: &FlowField,
) -> Result<SamplePointSet, SampleError> {
    let dims = (samples.width, samples.height);
    if mask.dims() != dims || flow.dims() != dims {
        return Err(SampleError::DimensionMismatch {
            samples: dims,
            mask: mask.dims(),
            flow: flow.dims(),
        });
    }
    let points = samples
        .points
        .iter()
        .filter(|p| mask.is_foreground(p.x as usize, p.y as usize))
        .enumerate()
        .map(|(id, p)| {
            let [u, v] = flow.get(p.x as usize, p.y as usize);
            SamplePoint { id, u, v, ..*p }
        })
        .collect();
    Ok(SamplePointSet {
        points,
        provenance: Provenance::Foreground,
        ..*samples
    })
}
