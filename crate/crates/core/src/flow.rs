//! k-frame flow compounding and color-wheel rendering.
//!
//! Each buffered field is a one-step backward flow `f(t, t-1)`: the vector at
//! pixel `p` of frame `t` points to where that content sat in frame `t-1`.
//! Compounding `k` of them approximates the displacement from `t` to `t-k`.

use std::collections::VecDeque;
use std::sync::Arc;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::FlowField;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlowError {
    #[error("flow ring holds {held} of {capacity} fields")]
    RingNotFull { held: usize, capacity: usize },
    #[error("flow field is {actual:?}, ring holds {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("ring capacity must be at least 1")]
    ZeroCapacity,
}

/// How the buffered one-step fields are combined into a k-step field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompoundMode {
    /// Sum at fixed pixel locations.
    #[default]
    Pixelwise,
    /// Sum along the warped backward trajectory.
    Trajectory,
}

impl std::str::FromStr for CompoundMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pixelwise" => Ok(Self::Pixelwise),
            "trajectory" => Ok(Self::Trajectory),
            other => Err(format!("unknown compound mode {other:?}")),
        }
    }
}

/// Sliding window over the most recent `capacity` one-step fields, newest last.
#[derive(Debug, Clone)]
pub struct FlowRing {
    capacity: usize,
    buffer: VecDeque<Arc<FlowField>>,
}

impl FlowRing {
    pub fn new(capacity: usize) -> Result<Self, FlowError> {
        if capacity == 0 {
            return Err(FlowError::ZeroCapacity);
        }
        Ok(Self {
            capacity,
            buffer: VecDeque::with_capacity(capacity),
        })
    }

    /// Appends the newest field, evicting the oldest one when full.
    pub fn push(&mut self, field: impl Into<Arc<FlowField>>) -> Result<(), FlowError> {
        let field = field.into();
        if let Some(front) = self.buffer.front() {
            if front.dims() != field.dims() {
                return Err(FlowError::DimensionMismatch {
                    expected: front.dims(),
                    actual: field.dims(),
                });
            }
        }
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(field);
        Ok(())
    }

    pub fn clear(&mut self) {
        self.buffer.clear();
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.buffer.len() == self.capacity
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.buffer.front().map(|f| f.dims())
    }

    /// Buffered fields, oldest first.
    pub fn fields(&self) -> impl DoubleEndedIterator<Item = &FlowField> + ExactSizeIterator {
        self.buffer.iter().map(|f| f.as_ref())
    }

    fn require_full(&self) -> Result<(usize, usize), FlowError> {
        if !self.is_full() {
            return Err(FlowError::RingNotFull {
                held: self.buffer.len(),
                capacity: self.capacity,
            });
        }
        let dims = self.buffer[0].dims();
        if let Some(bad) = self.buffer.iter().find(|f| f.dims() != dims) {
            return Err(FlowError::DimensionMismatch {
                expected: dims,
                actual: bad.dims(),
            });
        }
        Ok(dims)
    }
}

pub fn compound(ring: &FlowRing, mode: CompoundMode) -> Result<FlowField, FlowError> {
    match mode {
        CompoundMode::Pixelwise => compound_pixelwise(ring),
        CompoundMode::Trajectory => compound_trajectory(ring),
    }
}

/// Per-pixel sum of all buffered fields at the same location.
///
/// Terms are summed in sorted order in f64, so the result does not depend
/// on the order of the fields in the ring.
pub fn compound_pixelwise(ring: &FlowRing) -> Result<FlowField, FlowError> {
    let (width, height) = ring.require_full()?;
    let fields: Vec<&FlowField> = ring.fields().collect();
    let mut terms = vec![0f32; fields.len()];
    let mut data = Vec::with_capacity(width * height);
    for i in 0..width * height {
        let mut out = [0f32; 2];
        for (c, slot) in out.iter_mut().enumerate() {
            for (t, f) in terms.iter_mut().zip(&fields) {
                *t = f.data()[i][c];
            }
            terms.sort_unstable_by(f32::total_cmp);
            *slot = terms.iter().map(|&t| t as f64).sum::<f64>() as f32;
        }
        data.push(out);
    }
    Ok(FlowField::from_raw_unchecked(width, height, data))
}

/// Sum along the backward trajectory: take the newest field at `p`, step to
/// the displaced position, sample the next-older field there bilinearly
/// (border-clamped), and so on through the ring.
pub fn compound_trajectory(ring: &FlowRing) -> Result<FlowField, FlowError> {
    let (width, height) = ring.require_full()?;
    let newest_first: Vec<&FlowField> = ring.fields().rev().collect();
    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let first = newest_first[0].get(x, y);
            let mut acc = [first[0] as f64, first[1] as f64];
            for field in &newest_first[1..] {
                let s = field.bilinear(x as f64 + acc[0], y as f64 + acc[1]);
                acc[0] += s[0];
                acc[1] += s[1];
            }
            data.push([acc[0] as f32, acc[1] as f32]);
        }
    }
    Ok(FlowField::from_raw_unchecked(width, height, data))
}

pub fn max_magnitude(field: &FlowField) -> f64 {
    field
        .data()
        .iter()
        .map(|uv| (uv[0] as f64).hypot(uv[1] as f64))
        .fold(0.0, f64::max)
}

/// Renders direction as hue and relative speed as saturation (value fixed at
/// 1). Saturation is normalized by this field's own maximum magnitude, so
/// zero flow is white.
pub fn flow_to_color(field: &FlowField) -> RgbImage {
    let max = max_magnitude(field);
    let mut img = RgbImage::new(field.width() as u32, field.height() as u32);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let [u, v] = field.get(x as usize, y as usize);
        let (u, v) = (u as f64, v as f64);
        let mag = u.hypot(v);
        let sat = if max > 0.0 { (mag / max).min(1.0) } else { 0.0 };
        let hue = v.atan2(u).to_degrees().rem_euclid(360.0);
        *px = hsv_to_rgb(hue, sat, 1.0);
    }
    img
}

fn hsv_to_rgb(hue: f64, sat: f64, val: f64) -> Rgb<u8> {
    let c = val * sat;
    let h = hue / 60.0;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = val - c;
    let to8 = |f: f64| ((f + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    Rgb([to8(r), to8(g), to8(b)])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(w: usize, h: usize, uv: [f32; 2]) -> FlowField {
        FlowField::new(w, h, vec![uv; w * h]).unwrap()
    }

    fn ring_of(fields: Vec<FlowField>) -> FlowRing {
        let mut ring = FlowRing::new(fields.len()).unwrap();
        for f in fields {
            ring.push(f).unwrap();
        }
        ring
    }

    #[test]
    fn constant_fields_add_up() {
        let ring = ring_of(vec![constant(4, 3, [1.0, 0.0]); 3]);
        let out = compound_pixelwise(&ring).unwrap();
        assert!(out.data().iter().all(|&uv| uv == [3.0, 0.0]));
    }

    #[test]
    fn zero_fields_with_default_k() {
        let ring = ring_of(vec![FlowField::zeros(5, 5); 5]);
        let out = compound_pixelwise(&ring).unwrap();
        assert!(out.data().iter().all(|&uv| uv == [0.0, 0.0]));
    }

    #[test]
    fn additive_inverse_cancels() {
        let a = FlowField::new(2, 1, vec![[1.0, 2.0], [0.5, 0.0]]).unwrap();
        let b = FlowField::new(2, 1, vec![[-1.0, -2.0], [0.0, 0.0]]).unwrap();
        let out = compound_pixelwise(&ring_of(vec![a, b])).unwrap();
        assert_eq!(out.get(0, 0), [0.0, 0.0]);
    }

    #[test]
    fn partial_ring_is_rejected() {
        let mut ring = FlowRing::new(3).unwrap();
        ring.push(FlowField::zeros(2, 2)).unwrap();
        assert_eq!(
            compound_pixelwise(&ring).unwrap_err(),
            FlowError::RingNotFull {
                held: 1,
                capacity: 3
            }
        );
        assert!(compound_trajectory(&ring).is_err());
    }

    #[test]
    fn mismatched_field_is_rejected() {
        let mut ring = FlowRing::new(2).unwrap();
        ring.push(FlowField::zeros(2, 2)).unwrap();
        assert!(matches!(
            ring.push(FlowField::zeros(3, 2)),
            Err(FlowError::DimensionMismatch { .. })
        ));
        assert_eq!(FlowRing::new(0).unwrap_err(), FlowError::ZeroCapacity);
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut ring = FlowRing::new(2).unwrap();
        for i in 0..4 {
            ring.push(constant(1, 1, [i as f32, 0.0])).unwrap();
        }
        let us: Vec<f32> = ring.fields().map(|f| f.get(0, 0)[0]).collect();
        assert_eq!(us, vec![2.0, 3.0]);
    }

    #[test]
    fn trajectory_equals_pixelwise_on_constant_fields() {
        let ring = ring_of(vec![
            constant(6, 5, [0.3, -1.7]),
            constant(6, 5, [0.3, -1.7]),
            constant(6, 5, [0.3, -1.7]),
        ]);
        assert_eq!(
            compound_trajectory(&ring).unwrap(),
            compound_pixelwise(&ring).unwrap()
        );
    }

    #[test]
    fn k1_is_identity_for_both_modes() {
        let f = FlowField::from_fn(7, 4, |x, y| [x as f32 * 0.1 - 0.3, y as f32 * -0.7]).unwrap();
        let ring = ring_of(vec![f.clone()]);
        assert_eq!(compound_pixelwise(&ring).unwrap(), f);
        assert_eq!(compound_trajectory(&ring).unwrap(), f);
    }

    #[test]
    fn trajectory_follows_displacement() {
        // newest field moves everything one pixel left; the older field is
        // only non-zero at x = 1
        let newest = constant(4, 1, [-1.0, 0.0]);
        let older = FlowField::new(4, 1, vec![[0.0; 2], [5.0, 0.0], [0.0; 2], [0.0; 2]]).unwrap();
        let ring = ring_of(vec![older, newest]);
        let t = compound_trajectory(&ring).unwrap();
        assert_eq!(t.get(2, 0), [4.0, 0.0]);
        let p = compound_pixelwise(&ring).unwrap();
        assert_eq!(p.get(2, 0), [-1.0, 0.0]);
    }

    #[test]
    fn zero_field_renders_white() {
        let img = flow_to_color(&FlowField::zeros(3, 2));
        assert!(img.pixels().all(|p| p.0 == [255, 255, 255]));
    }

    #[test]
    fn hue_follows_direction() {
        let f = FlowField::new(3, 1, vec![[4.0, 0.0], [0.0, 4.0], [0.0, 0.0]]).unwrap();
        let img = flow_to_color(&f);
        assert_eq!(img.get_pixel(0, 0).0, [255, 0, 0]);
        // hue 90: yellow-green (r = 127.5 -> 128)
        assert_eq!(img.get_pixel(1, 0).0, [128, 255, 0]);
        assert_eq!(img.get_pixel(2, 0).0, [255, 255, 255]);
    }

    #[test]
    fn half_speed_is_half_saturated() {
        let f = FlowField::new(2, 1, vec![[2.0, 0.0], [1.0, 0.0]]).unwrap();
        let img = flow_to_color(&f);
        assert_eq!(img.get_pixel(1, 0).0, [255, 128, 128]);
    }
}
