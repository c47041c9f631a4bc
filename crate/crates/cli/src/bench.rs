//! `bench`: time the density-peak and segmentation cores against the
//! number of sample points and fit log-log slopes.

use std::hint::black_box;
use std::io::{self, Write};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::Args;
use flowseg::cfsfdp;
use flowseg::gbis;
use flowseg::sampler::{SamplePoint, SamplePointSet};
use flowseg::PipelineParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::CliError;

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Sample point counts, comma separated
    #[arg(long, value_delimiter = ',', default_value = "100,200,400,800,1600")]
    pub counts: Vec<usize>,
    /// Timed repetitions per count; the median is reported
    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
    /// CSV output [default: stdout]
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Densities and separations over all points.
    Cfsfdp,
    /// Graph construction and segmentation.
    Gbis,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Cfsfdp => "cfsfdp",
            Stage::Gbis => "gbis",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub stage: Stage,
    pub n: usize,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub cfsfdp_slope: f64,
    pub gbis_slope: f64,
}

impl BenchReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "stage,n,median_ms,min_ms,max_ms,repetitions")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6},{}",
                r.stage.name(),
                r.n,
                r.median_ms,
                r.min_ms,
                r.max_ms,
                r.repetitions
            )?;
        }
        Ok(())
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// `n` foreground samples filling a square patch of the lattice, with flows
/// drawn around two motions.
pub fn bench_points(n: usize, s: usize, seed: u64) -> SamplePointSet {
    let side = (n as f64).sqrt().ceil() as usize;
    let off = s / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ n as u64);
    let points = (0..n)
        .map(|i| {
            let (cx, cy) = (i % side, i / side);
            let base = if cx < side / 2 { [-2.0, 0.0] } else { [2.0, 1.0] };
            SamplePoint {
                id: i,
                x: (off + cx * s) as u32,
                y: (off + cy * s) as u32,
                u: base[0] + rng.random_range(-0.5f32..0.5),
                v: base[1] + rng.random_range(-0.5f32..0.5),
            }
        })
        .collect();
    SamplePointSet::from_points(s, side * s + s, side * s + s, points)
        .expect("interval is positive")
}

/// Inputs per size in [`run_bench`].
const INPUT_VARIANTS: usize = 16;

/// Seconds per call of `f`, repeating it until the batch lasts `min_batch`.
fn time_per_call(min_batch: Duration, mut f: impl FnMut()) -> f64 {
    let mut iters = 1u32;
    loop {
        let t = Instant::now();
        for _ in 0..iters {
            f();
        }
        let elapsed = t.elapsed();
        if elapsed >= min_batch || iters >= 1 << 20 {
            return elapsed.as_secs_f64() / iters as f64;
        }
        iters *= 2;
    }
}

fn summarize(stage: Stage, n: usize, mut secs: Vec<f64>) -> BenchRow {
    secs.sort_by(f64::total_cmp);
    let median = if secs.len() % 2 == 1 {
        secs[secs.len() / 2]
    } else {
        (secs[secs.len() / 2 - 1] + secs[secs.len() / 2]) / 2.0
    };
    BenchRow {
        stage,
        n,
        median_ms: median * 1e3,
        min_ms: secs[0] * 1e3,
        max_ms: secs[secs.len() - 1] * 1e3,
        repetitions: secs.len(),
    }
}

pub fn run_bench(
    counts: &[usize],
    repetitions: usize,
    params: &PipelineParams,
) -> Result<BenchReport, CliError> {
    let mut distinct = counts.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 || distinct[0] < 2 {
        return Err(CliError::Usage(
            "bench needs at least two distinct counts of 2 or more".into(),
        ));
    }
    if repetitions == 0 {
        return Err(CliError::Usage("repetitions must be positive".into()));
    }
    let batch = Duration::from_millis(4);
    let mut rows = Vec::new();
    for &n in counts {
        // distinct inputs per size, cycled through while timing, so the
        // branch predictor cannot learn one input at small n
        let mut inputs = Vec::with_capacity(INPUT_VARIANTS);
        for v in 0..INPUT_VARIANTS as u64 {
            let set = bench_points(n, params.s, params.seed.wrapping_add(v << 32));
            let features = cfsfdp::build_features(&set.points, params.p)?;
            let d_c = match params.d_c {
                cfsfdp::CutoffChoice::Auto { fraction } => cfsfdp::choose_dc(&features, fraction)?,
                cfsfdp::CutoffChoice::Fixed(v) => v,
            };
            inputs.push((set, features, d_c));
        }
        let tau = gbis::adaptive_tau(n, 2)?;

        let mut c_times = Vec::with_capacity(repetitions);
        let mut g_times = Vec::with_capacity(repetitions);
        for _ in 0..repetitions {
            let mut next = inputs.iter().cycle();
            c_times.push(time_per_call(batch, || {
                let (_, features, d_c) = next.next().unwrap();
                let rho = cfsfdp::densities(black_box(features), *d_c).unwrap();
                black_box(cfsfdp::deltas(features, &rho).unwrap());
            }));
            let mut next = inputs.iter().cycle();
            g_times.push(time_per_call(batch, || {
                let (set, _, _) = next.next().unwrap();
                let graph = gbis::build_graph(black_box(set));
                black_box(gbis::segment(&graph, tau).unwrap());
            }));
        }
        rows.push(summarize(Stage::Cfsfdp, n, c_times));
        rows.push(summarize(Stage::Gbis, n, g_times));
    }
    let slope = |stage: Stage| {
        log_log_slope(
            &rows
                .iter()
                .filter(|r| r.stage == stage)
                .map(|r| (r.n as f64, r.median_ms))
                .collect::<Vec<_>>(),
        )
    };
    Ok(BenchReport {
        cfsfdp_slope: slope(Stage::Cfsfdp),
        gbis_slope: slope(Stage::Gbis),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_power_law() {
        let pts: Vec<(f64, f64)> = [10.0, 20.0, 40.0, 80.0]
            .iter()
            .map(|&x: &f64| (x, 3.0 * x.powf(1.7)))
            .collect();
        assert!((log_log_slope(&pts) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn points_lie_on_the_lattice() {
        let set = bench_points(50, 3, 1);
        assert_eq!(set.len(), 50);
        assert!(set.points.iter().all(|p| p.x % 3 == 1 && p.y % 3 == 1));
        assert!(set.points.iter().all(|p| (p.x as usize) < set.width));
    }

    #[test]
    fn one_row_per_stage_and_count() {
        let report = run_bench(&[20, 40], 1, &PipelineParams::default()).unwrap();
        assert_eq!(report.rows.len(), 4);
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("gbis,")).count(), 2);
        assert_eq!(text.lines().filter(|l| l.starts_with("cfsfdp,")).count(), 2);
        assert!(run_bench(&[20, 20], 1, &PipelineParams::default()).is_err());
    }
}
