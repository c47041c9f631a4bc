//! Composition analysis by density peaks.
//!
//! Every analyzed foreground sample gets a Gaussian-kernel density `rho` in
//! the 4-d feature space `(u, v, x/p, y/p)` and two separations: `delta_f`,
//! the flow-space distance to the nearest denser sample, and `delta_c`, the
//! same in unscaled pixel coordinates. Samples that are dense enough and far
//! from any denser sample in either space are peaks, one or more per moving
//! object.

use std::cmp::Ordering;
use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::sampler::{SamplePoint, SamplePointSet};

#[derive(Debug, Error, PartialEq)]
pub enum CfsfdpError {
    #[error("balance parameter p must be positive, got {0}")]
    NonPositiveBalance(f64),
    #[error("density cutoff d_c must be positive, got {0}")]
    NonPositiveCutoff(f64),
    #[error("need at least 2 points to choose d_c, got {0}")]
    TooFewPoints(usize),
    #[error("target fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("no points to analyze")]
    EmptyInput,
    #[error("rho has {rho} entries for {features} features")]
    LengthMismatch { rho: usize, features: usize },
}

/// How the density cutoff is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CutoffChoice {
    /// Quantile of all pairwise feature distances.
    Auto { fraction: f64 },
    Fixed(f64),
}

impl Default for CutoffChoice {
    fn default() -> Self {
        Self::Auto { fraction: 0.02 }
    }
}

/// Thresholds of the peak criterion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakThresholds {
    /// Density threshold is `rho_max / c1`.
    pub c1: f64,
    /// Flow separation threshold is `c2 * k`.
    pub c2: f64,
    /// Compounding depth the flows were built with.
    pub k: usize,
    /// Coordinate separation threshold in pixels.
    pub td2: f64,
}

impl Default for PeakThresholds {
    fn default() -> Self {
        Self {
            c1: 15.0,
            c2: 0.5,
            k: 5,
            td2: 50.0,
        }
    }
}

impl PeakThresholds {
    pub fn density_threshold(&self, rho_max: f64) -> f64 {
        rho_max / self.c1
    }

    pub fn flow_threshold(&self) -> f64 {
        self.c2 * self.k as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositionParams {
    pub p: f64,
    pub cutoff: CutoffChoice,
    pub thresholds: PeakThresholds,
    pub n_c: usize,
}

impl Default for CompositionParams {
    fn default() -> Self {
        Self {
            p: 50.0,
            cutoff: CutoffChoice::default(),
            thresholds: PeakThresholds::default(),
            n_c: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feature {
    /// `(u, v, x/p, y/p)`, the space densities are measured in.
    pub scaled: [f64; 4],
    pub flow: [f64; 2],
    /// Unscaled pixel coordinates.
    pub coord: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Deltas {
    pub flow: Vec<f64>,
    pub coord: Vec<f64>,
}

/// Density-peak analysis of one frame's foreground samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakAnalysis {
    /// Ids (into the foreground set) of the analyzed samples, ascending.
    pub subsample_ids: Vec<usize>,
    /// Per analyzed sample, aligned with `subsample_ids`.
    pub rho: Vec<f64>,
    pub delta_f: Vec<f64>,
    pub delta_c: Vec<f64>,
    /// Foreground ids of the peaks, ascending.
    pub peaks: Vec<usize>,
    pub d_c: f64,
    pub params: CompositionParams,
    pub seed: u64,
}

impl PeakAnalysis {
    /// Density of a foreground sample, if it was analyzed.
    pub fn rho_of(&self, fg_id: usize) -> Option<f64> {
        self.subsample_ids
            .binary_search(&fg_id)
            .ok()
            .map(|i| self.rho[i])
    }

    pub fn rho_max(&self) -> f64 {
        self.rho.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Picks at most `n_c` ids out of `0..n`: all of them when `n <= n_c`,
/// otherwise a uniform random subset drawn from a generator seeded with
/// `seed`. The result is sorted ascending.
pub fn subsample(n: usize, n_c: usize, seed: u64) -> Vec<usize> {
    if n <= n_c {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = rand::seq::index::sample(&mut rng, n, n_c).into_vec();
    ids.sort_unstable();
    ids
}

pub fn build_features(points: &[SamplePoint], p: f64) -> Result<Vec<Feature>, CfsfdpError> {
    if !(p > 0.0) {
        return Err(CfsfdpError::NonPositiveBalance(p));
    }
    Ok(points
        .iter()
        .map(|pt| {
            let (u, v, x, y) = (pt.u as f64, pt.v as f64, pt.x as f64, pt.y as f64);
            Feature {
                scaled: [u, v, x / p, y / p],
                flow: [u, v],
                coord: [x, y],
            }
        })
        .collect())
}

#[inline]
fn dist<const N: usize>(a: &[f64; N], b: &[f64; N]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Gaussian-kernel density of every feature, self term included, so each
/// value is at least 1.
pub fn densities(features: &[Feature], d_c: f64) -> Result<Vec<f64>, CfsfdpError> {
    if !(d_c > 0.0) {
        return Err(CfsfdpError::NonPositiveCutoff(d_c));
    }
    let n = features.len();
    let mut rho = vec![1.0; n];
    for i in 0..n {
        for j in i + 1..n {
            let r = dist(&features[i].scaled, &features[j].scaled) / d_c;
            let w = (-r * r).exp();
            rho[i] += w;
            rho[j] += w;
        }
    }
    Ok(rho)
}

/// Nearest-rank quantile of all pairwise feature distances.
pub fn choose_dc(features: &[Feature], target_fraction: f64) -> Result<f64, CfsfdpError> {
    let n = features.len();
    if n < 2 {
        return Err(CfsfdpError::TooFewPoints(n));
    }
    if !(target_fraction > 0.0 && target_fraction < 1.0) {
        return Err(CfsfdpError::InvalidFraction(target_fraction));
    }
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(dist(&features[i].scaled, &features[j].scaled));
        }
    }
    let rank = ((target_fraction * d.len() as f64).ceil() as usize).clamp(1, d.len()) - 1;
    let (_, v, _) = d.select_nth_unstable_by(rank, f64::total_cmp);
    Ok(*v)
}

/// Order in which samples count as "denser": higher rho first, lower index
/// first among equal rho.
fn density_order(rho: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rho.len()).collect();
    order.sort_by(|&a, &b| match rho[b].total_cmp(&rho[a]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    order
}

/// Separation of every sample from its denser neighbours, in flow space and
/// in coordinate space.
///
/// The densest sample (ties to the lowest index) has nothing denser; it gets
/// its largest distance to any other sample instead, or +inf when it is
/// alone.
pub fn deltas(features: &[Feature], rho: &[f64]) -> Result<Deltas, CfsfdpError> {
    let n = features.len();
    if n == 0 {
        return Err(CfsfdpError::EmptyInput);
    }
    if rho.len() != n {
        return Err(CfsfdpError::LengthMismatch {
            rho: rho.len(),
            features: n,
        });
    }
    let order = density_order(rho);
    let mut flow = vec![0.0; n];
    let mut coord = vec![0.0; n];
    for (rank, &i) in order.iter().enumerate().skip(1) {
        let (mut df, mut dc) = (f64::INFINITY, f64::INFINITY);
        for &j in &order[..rank] {
            df = df.min(dist(&features[i].flow, &features[j].flow));
            dc = dc.min(dist(&features[i].coord, &features[j].coord));
        }
        flow[i] = df;
        coord[i] = dc;
    }
    let top = order[0];
    if n == 1 {
        flow[top] = f64::INFINITY;
        coord[top] = f64::INFINITY;
    } else {
        let others = order[1..].iter();
        flow[top] = others
            .clone()
            .map(|&j| dist(&features[top].flow, &features[j].flow))
            .fold(0.0, f64::max);
        coord[top] = others
            .map(|&j| dist(&features[top].coord, &features[j].coord))
            .fold(0.0, f64::max);
    }
    Ok(Deltas { flow, coord })
}

/// Indices (into `rho`) of samples with `rho > rho_max / c1` and either
/// `delta_f > c2 * k` or `delta_c > td2`.
pub fn select_peaks(rho: &[f64], deltas: &Deltas, thresholds: &PeakThresholds) -> Vec<usize> {
    let rho_max = rho.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let t_r = thresholds.density_threshold(rho_max);
    let t_d1 = thresholds.flow_threshold();
    (0..rho.len())
        .filter(|&i| rho[i] > t_r && (deltas.flow[i] > t_d1 || deltas.coord[i] > thresholds.td2))
        .collect()
}

/// Runs subsampling, features, cutoff, densities, separations and peak
/// selection on a foreground sample set.
pub fn analyze(
    fg: &SamplePointSet,
    params: &CompositionParams,
    seed: u64,
) -> Result<PeakAnalysis, CfsfdpError> {
    if fg.is_empty() {
        return Err(CfsfdpError::EmptyInput);
    }
    let subsample_ids = subsample(fg.len(), params.n_c.max(1), seed);
    let picked: Vec<SamplePoint> = subsample_ids.iter().map(|&i| fg.points[i]).collect();
    let features = build_features(&picked, params.p)?;
    let d_c = match params.cutoff {
        // a lone sample has density 1 whatever the cutoff
        CutoffChoice::Auto { .. } if features.len() < 2 => 1.0,
        CutoffChoice::Auto { fraction } => {
            let d = choose_dc(&features, fraction)?;
            if d > 0.0 {
                d
            } else {
                smallest_positive_distance(&features).unwrap_or(1.0)
            }
        }
        CutoffChoice::Fixed(d) => d,
    };
    let rho = densities(&features, d_c)?;
    let deltas = deltas(&features, &rho)?;
    let peaks = select_peaks(&rho, &deltas, &params.thresholds)
        .into_iter()
        .map(|i| subsample_ids[i])
        .collect();
    Ok(PeakAnalysis {
        subsample_ids,
        rho,
        delta_f: deltas.flow,
        delta_c: deltas.coord,
        peaks,
        d_c,
        params: *params,
        seed,
    })
}

// Only reached when duplicated features push the quantile to zero.
fn smallest_positive_distance(features: &[Feature]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for i in 0..features.len() {
        for j in i + 1..features.len() {
            let d = dist(&features[i].scaled, &features[j].scaled);
            if d > 0.0 && best.is_none_or(|b| d < b) {
                best = Some(d);
            }
        }
    }
    best
}

/// Writes the decision-graph table for the analyzed samples:
/// `id,x,y,u,v,rho,delta_f,delta_c,is_peak`.
pub fn write_decision_csv<W: Write>(
    mut out: W,
    fg: &SamplePointSet,
    analysis: &PeakAnalysis,
) -> io::Result<()> {
    writeln!(out, "id,x,y,u,v,rho,delta_f,delta_c,is_peak")?;
    for (i, &id) in analysis.subsample_ids.iter().enumerate() {
        let p = &fg.points[id];
        let is_peak = analysis.peaks.binary_search(&id).is_ok();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            id,
            p.x,
            p.y,
            p.u,
            p.v,
            analysis.rho[i],
            analysis.delta_f[i],
            analysis.delta_c[i],
            is_peak as u8
        )?;
    }
    Ok(())
}
