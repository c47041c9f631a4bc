//! Slow, obviously-correct reference implementations. Shared by the core
//! integration tests and the acceptance target.
#![allow(dead_code)]

use flowseg::cfsfdp::Feature;
use flowseg::eval::match_boxes;
use flowseg::gbis::{Edge, Graph, SegmentForest};
use flowseg::grid::{iou, BBox};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Canonical form of a partition: members ascending, blocks ordered by
/// their smallest member.
pub fn canonical(mut blocks: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    for b in &mut blocks {
        b.sort_unstable();
    }
    blocks.retain(|b| !b.is_empty());
    blocks.sort();
    blocks
}

pub fn forest_partition(forest: &SegmentForest) -> Vec<Vec<usize>> {
    canonical(forest.segments())
}

/// Graph segmentation with a plain label array; component size and internal
/// difference are recomputed by full scans before every merge decision.
pub fn naive_segment(graph: &Graph, tau: f64) -> Vec<Vec<usize>> {
    let n = graph.node_count;
    let mut label: Vec<usize> = (0..n).collect();
    let mut merged: Vec<Edge> = Vec::new();
    let mut edges = graph.edges.clone();
    edges.sort_by(|l, r| {
        l.w.total_cmp(&r.w)
            .then(l.a.cmp(&r.a))
            .then(l.b.cmp(&r.b))
    });
    for e in edges {
        let (la, lb) = (label[e.a], label[e.b]);
        if la == lb {
            continue;
        }
        let size = |l: usize| label.iter().filter(|&&x| x == l).count() as f64;
        let int = |l: usize| {
            merged
                .iter()
                .filter(|m| label[m.a] == l && label[m.b] == l)
                .map(|m| m.w)
                .fold(0.0, f64::max)
        };
        let limit = (int(la) + tau / size(la)).min(int(lb) + tau / size(lb));
        if e.w <= limit {
            for x in label.iter_mut() {
                if *x == lb {
                    *x = la;
                }
            }
            merged.push(e);
        }
    }
    let mut blocks = vec![Vec::new(); n];
    for (i, &l) in label.iter().enumerate() {
        blocks[l].push(i);
    }
    canonical(blocks)
}

/// Random graph on at most `max_nodes` nodes. Weights are drawn from a small
/// grid half of the time so that ties get exercised.
pub fn random_graph(rng: &mut ChaCha8Rng, max_nodes: usize) -> Graph {
    let n = rng.random_range(1..=max_nodes);
    let density = rng.random_range(0.02..0.4);
    let quantized = rng.random_bool(0.5);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(density) {
                let w = if quantized {
                    rng.random_range(0..6) as f64 * 0.5
                } else {
                    rng.random_range(0.0..10.0)
                };
                edges.push(Edge::new(a, b, w));
            }
        }
    }
    Graph {
        node_count: n,
        edges,
    }
}

pub fn random_tau(rng: &mut ChaCha8Rng) -> f64 {
    match rng.random_range(0..6) {
        0 => 0.0,
        1 => f64::INFINITY,
        _ => rng.random_range(0.0..40.0),
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Direct density sum, self term included.
pub fn brute_rho(features: &[Feature], d_c: f64) -> Vec<f64> {
    features
        .iter()
        .map(|fi| {
            features
                .iter()
                .map(|fj| (-(dist(&fi.scaled, &fj.scaled) / d_c).powi(2)).exp())
                .sum()
        })
        .collect()
}

/// Separations straight from the definition: `j` is denser than `i` when
/// `rho_j > rho_i`, or equal with `j < i`.
pub fn brute_deltas(features: &[Feature], rho: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = features.len();
    let denser = |j: usize, i: usize| rho[j] > rho[i] || (rho[j] == rho[i] && j < i);
    let mut df = vec![0.0; n];
    let mut dc = vec![0.0; n];
    for i in 0..n {
        let higher: Vec<usize> = (0..n).filter(|&j| j != i && denser(j, i)).collect();
        let pick = |sel: &dyn Fn(usize) -> f64| -> f64 {
            if n == 1 {
                f64::INFINITY
            } else if higher.is_empty() {
                (0..n).filter(|&j| j != i).map(sel).fold(0.0, f64::max)
            } else {
                higher.iter().map(|&j| sel(j)).fold(f64::INFINITY, f64::min)
            }
        };
        df[i] = pick(&|j| dist(&features[i].flow, &features[j].flow));
        dc[i] = pick(&|j| dist(&features[i].coord, &features[j].coord));
    }
    (df, dc)
}

/// Random feature set with some exact duplicates and shared flows.
pub fn random_features(rng: &mut ChaCha8Rng, max_points: usize, p: f64) -> Vec<Feature> {
    let n = rng.random_range(1..=max_points);
    let flows: Vec<[f64; 2]> = (0..rng.random_range(1..5))
        .map(|_| [rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0)])
        .collect();
    let mut out: Vec<Feature> = Vec::with_capacity(n);
    for _ in 0..n {
        if !out.is_empty() && rng.random_bool(0.05) {
            let dup = out[rng.random_range(0..out.len())];
            out.push(dup);
            continue;
        }
        let base = flows[rng.random_range(0..flows.len())];
        let flow = [
            base[0] + rng.random_range(-0.3..0.3),
            base[1] + rng.random_range(-0.3..0.3),
        ];
        let coord = [
            rng.random_range(0..320) as f64,
            rng.random_range(0..240) as f64,
        ];
        out.push(Feature {
            scaled: [flow[0], flow[1], coord[0] / p, coord[1] / p],
            flow,
            coord,
        });
    }
    out
}

/// Nearest-rank quantile by sorting every pairwise distance.
pub fn brute_quantile(features: &[Feature], fraction: f64) -> f64 {
    let mut d = Vec::new();
    for i in 0..features.len() {
        for j in i + 1..features.len() {
            d.push(dist(&features[i].scaled, &features[j].scaled));
        }
    }
    d.sort_by(f64::total_cmp);
    let rank = (fraction * d.len() as f64).ceil() as usize;
    d[rank.clamp(1, d.len()) - 1]
}

/// IoUs of the greedy matching, sorted descending.
pub fn greedy_profile(preds: &[BBox], gts: &[BBox], threshold: f64) -> Vec<f64> {
    let m = match_boxes(preds, gts, threshold);
    let mut v: Vec<f64> = m.pairs.iter().map(|&(_, _, o)| o).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Lexicographically largest descending IoU profile over every one-to-one
/// matching whose pairs clear the threshold.
pub fn brute_best_profile(preds: &[BBox], gts: &[BBox], threshold: f64) -> Vec<f64> {
    fn go(
        p: usize,
        preds: &[BBox],
        gts: &[BBox],
        threshold: f64,
        used: &mut Vec<bool>,
        cur: &mut Vec<f64>,
        best: &mut Vec<f64>,
    ) {
        if p == preds.len() {
            let mut v = cur.clone();
            v.sort_by(|a, b| b.total_cmp(a));
            if lex_greater(&v, best) {
                *best = v;
            }
            return;
        }
        go(p + 1, preds, gts, threshold, used, cur, best);
        for g in 0..gts.len() {
            let o = iou(&preds[p], &gts[g]);
            if !used[g] && o >= threshold && o > 0.0 {
                used[g] = true;
                cur.push(o);
                go(p + 1, preds, gts, threshold, used, cur, best);
                cur.pop();
                used[g] = false;
            }
        }
    }
    let mut best = Vec::new();
    go(
        0,
        preds,
        gts,
        threshold,
        &mut vec![false; gts.len()],
        &mut Vec::new(),
        &mut best,
    );
    best
}

/// Largest matching by cardinality, ties broken by the lexicographically
/// largest descending IoU profile.
pub fn brute_max_cardinality_profile(preds: &[BBox], gts: &[BBox], threshold: f64) -> Vec<f64> {
    fn go(
        p: usize,
        preds: &[BBox],
        gts: &[BBox],
        threshold: f64,
        used: &mut Vec<bool>,
        cur: &mut Vec<f64>,
        best: &mut Vec<f64>,
    ) {
        if p == preds.len() {
            let mut v = cur.clone();
            v.sort_by(|a, b| b.total_cmp(a));
            if v.len() > best.len() || (v.len() == best.len() && lex_greater(&v, best)) {
                *best = v;
            }
            return;
        }
        go(p + 1, preds, gts, threshold, used, cur, best);
        for g in 0..gts.len() {
            let o = iou(&preds[p], &gts[g]);
            if !used[g] && o >= threshold && o > 0.0 {
                used[g] = true;
                cur.push(o);
                go(p + 1, preds, gts, threshold, used, cur, best);
                cur.pop();
                used[g] = false;
            }
        }
    }
    let mut best = Vec::new();
    go(
        0,
        preds,
        gts,
        threshold,
        &mut vec![false; gts.len()],
        &mut Vec::new(),
        &mut best,
    );
    best
}

/// Compares descending profiles; a longer profile wins a common prefix.
pub fn lex_greater(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x != y {
            return x > y;
        }
    }
    a.len() > b.len()
}

pub fn random_boxes(rng: &mut ChaCha8Rng, max: usize, extent: u32) -> Vec<BBox> {
    (0..rng.random_range(0..=max))
        .map(|_| {
            let x = rng.random_range(0..extent);
            let y = rng.random_range(0..extent);
            let w = rng.random_range(1..=extent / 2);
            let h = rng.random_range(1..=extent / 2);
            BBox::new(x, y, x + w, y + h).unwrap()
        })
        .collect()
}

/// Outcome of one oracle sweep.
#[derive(Debug, Default)]
pub struct SweepReport {
    pub cases: usize,
    pub failures: Vec<String>,
}

impl SweepReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Segmentation against [`naive_segment`] on `cases` random graphs.
pub fn gbis_sweep(cases: usize, seed: u64) -> SweepReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SweepReport::default();
    for case in 0..cases {
        let g = random_graph(&mut rng, 50);
        let tau = random_tau(&mut rng);
        let fast = forest_partition(&flowseg::gbis::segment(&g, tau).unwrap());
        let slow = naive_segment(&g, tau);
        report.cases += 1;
        if fast != slow {
            report
                .failures
                .push(format!("graph #{case}: n={} tau={tau}", g.node_count));
        }
    }
    report
}

/// Densities and separations against brute force on `cases` random sets,
/// to an absolute tolerance of `tol`.
pub fn cfsfdp_sweep(cases: usize, seed: u64, tol: f64) -> SweepReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SweepReport::default();
    let close = |a: f64, b: f64| a == b || (a - b).abs() <= tol;
    for case in 0..cases {
        let feats = random_features(&mut rng, 200, 50.0);
        let d_c = rng.random_range(0.05..3.0);
        let rho = flowseg::cfsfdp::densities(&feats, d_c).unwrap();
        let rho_ref = brute_rho(&feats, d_c);
        report.cases += 1;
        if let Some(i) = (0..feats.len()).find(|&i| !close(rho[i], rho_ref[i])) {
            report
                .failures
                .push(format!("set #{case}: rho[{i}] {} vs {}", rho[i], rho_ref[i]));
            continue;
        }
        // separations are compared on the same densities so that rounding in
        // rho cannot flip the order
        let d = flowseg::cfsfdp::deltas(&feats, &rho).unwrap();
        let (df, dc) = brute_deltas(&feats, &rho);
        let bad = (0..feats.len()).find(|&i| !close(d.flow[i], df[i]) || !close(d.coord[i], dc[i]));
        if let Some(i) = bad {
            report.failures.push(format!(
                "set #{case}: delta[{i}] ({}, {}) vs ({}, {})",
                d.flow[i], d.coord[i], df[i], dc[i]
            ));
        }
    }
    report
}

/// The matching rule executed literally: rescan the whole IoU matrix for
/// the best remaining pair at every step.
pub fn rescanning_greedy(preds: &[BBox], gts: &[BBox], threshold: f64) -> Vec<(usize, usize)> {
    let mut pred_free = vec![true; preds.len()];
    let mut gt_free = vec![true; gts.len()];
    let mut out = Vec::new();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for p in 0..preds.len() {
            for g in 0..gts.len() {
                let o = iou(&preds[p], &gts[g]);
                if pred_free[p] && gt_free[g] && o >= threshold && o > 0.0 {
                    // strict comparison keeps the first (lowest) indices on ties
                    if best.is_none_or(|(b, _, _)| o > b) {
                        best = Some((o, p, g));
                    }
                }
            }
        }
        let Some((_, p, g)) = best else { return out };
        pred_free[p] = false;
        gt_free[g] = false;
        out.push((p, g));
    }
}

/// Whether all positive IoUs between the two box lists are distinct.
pub fn ious_distinct(preds: &[BBox], gts: &[BBox]) -> bool {
    let mut v: Vec<f64> = preds
        .iter()
        .flat_map(|p| gts.iter().map(move |g| iou(p, g)))
        .filter(|&o| o > 0.0)
        .collect();
    v.sort_by(f64::total_cmp);
    v.windows(2).all(|w| w[0] != w[1])
}

/// Greedy matching against [`rescanning_greedy`] on every frame. On frames
/// without tied IoUs it must also equal [`brute_best_profile`], never exceed
/// the maximum cardinality, and equal [`brute_max_cardinality_profile`]
/// whenever it reaches that cardinality.
pub fn matching_sweep(cases: usize, seed: u64) -> SweepReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SweepReport::default();
    for case in 0..cases {
        let preds = random_boxes(&mut rng, 6, 24);
        let gts = random_boxes(&mut rng, 6, 24);
        let t = rng.random_range(1..10) as f64 / 10.0;
        report.cases += 1;
        let fast: Vec<(usize, usize)> = match_boxes(&preds, &gts, t)
            .pairs
            .iter()
            .map(|&(p, g, _)| (p, g))
            .collect();
        let slow = rescanning_greedy(&preds, &gts, t);
        if fast != slow {
            report
                .failures
                .push(format!("frame #{case}: pairs {fast:?} vs {slow:?}"));
            continue;
        }
        if ious_distinct(&preds, &gts) {
            let greedy = greedy_profile(&preds, &gts, t);
            let best = brute_best_profile(&preds, &gts, t);
            if greedy != best {
                report
                    .failures
                    .push(format!("frame #{case}: greedy {greedy:?} vs best {best:?}"));
            }
            let widest = brute_max_cardinality_profile(&preds, &gts, t);
            if greedy.len() > widest.len() || (greedy.len() == widest.len() && greedy != widest) {
                report
                    .failures
                    .push(format!("frame #{case}: greedy {greedy:?} vs widest {widest:?}"));
            }
        }
    }
    report
}
