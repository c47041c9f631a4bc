use std::sync::Arc;

use flowseg::cfsfdp::{self, Deltas, Feature, PeakThresholds};
use flowseg::eval::{match_boxes, pr_curve};
use flowseg::flow::{self, FlowRing};
use flowseg::gbis;
use flowseg::grid::{self, iou, BBox, FlowField, Mask};
use flowseg::sampler;
use proptest::prelude::*;

fn bbox() -> impl Strategy<Value = BBox> {
    (0u32..200, 0u32..200, 1u32..120, 1u32..120)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
}

fn boxes(max: usize) -> impl Strategy<Value = Vec<BBox>> {
    prop::collection::vec(
        (0u32..40, 0u32..40, 1u32..20, 1u32..20)
            .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap()),
        0..=max,
    )
}

/// Any finite f32, with subnormals, signed zeros and extremes well
/// represented.
fn flow_value() -> impl Strategy<Value = f32> {
    prop_oneof![
        any::<u32>().prop_map(f32::from_bits).prop_filter("finite", |v| v.is_finite()),
        (any::<bool>(), 1u32..0x0080_0000).prop_map(|(neg, m)| {
            let v = f32::from_bits(m);
            if neg { -v } else { v }
        }),
        Just(0.0f32),
        Just(-0.0f32),
        Just(f32::MAX),
        Just(f32::MIN),
        -50.0f32..50.0,
    ]
}

fn field(max_w: usize, max_h: usize) -> impl Strategy<Value = FlowField> {
    (1..=max_w, 1..=max_h).prop_flat_map(|(w, h)| {
        prop::collection::vec([flow_value(), flow_value()], w * h)
            .prop_map(move |data| FlowField::new(w, h, data).unwrap())
    })
}

fn bits(f: &FlowField) -> Vec<[u32; 2]> {
    f.data().iter().map(|uv| [uv[0].to_bits(), uv[1].to_bits()]).collect()
}

fn features(max: usize) -> impl Strategy<Value = Vec<Feature>> {
    prop::collection::vec(
        (-6.0f64..6.0, -6.0f64..6.0, 0u32..200, 0u32..150),
        1..=max,
    )
    .prop_map(|pts| {
        pts.into_iter()
            .map(|(u, v, x, y)| {
                let (x, y) = (x as f64, y as f64);
                Feature {
                    scaled: [u, v, x / 50.0, y / 50.0],
                    flow: [u, v],
                    coord: [x, y],
                }
            })
            .collect()
    })
}

fn dist(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 256,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn iou_is_symmetric_and_bounded(a in bbox(), b in bbox()) {
        let ab = iou(&a, &b);
        prop_assert_eq!(ab, iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn flo_round_trip_is_bitwise(f in field(12, 9)) {
        let back = grid::decode_flo(&grid::encode_flo(&f)).unwrap();
        prop_assert_eq!(back.dims(), f.dims());
        prop_assert_eq!(bits(&back), bits(&f));
    }

    #[test]
    fn pixelwise_ignores_ring_order(
        fields in (1usize..6, 1usize..6, 1usize..7).prop_flat_map(|(w, h, k)| {
            prop::collection::vec(
                prop::collection::vec([-20.0f32..20.0, -20.0f32..20.0], w * h)
                    .prop_map(move |d| FlowField::new(w, h, d).unwrap()),
                k,
            )
        }),
        rotate in 0usize..7,
    ) {
        let k = fields.len();
        let mut forward = FlowRing::new(k).unwrap();
        let mut shuffled = FlowRing::new(k).unwrap();
        let mut reversed = FlowRing::new(k).unwrap();
        for f in &fields {
            forward.push(f.clone()).unwrap();
        }
        for i in 0..k {
            shuffled.push(fields[(i + rotate) % k].clone()).unwrap();
        }
        for f in fields.iter().rev() {
            reversed.push(f.clone()).unwrap();
        }
        let a = flow::compound_pixelwise(&forward).unwrap();
        prop_assert_eq!(bits(&a), bits(&flow::compound_pixelwise(&shuffled).unwrap()));
        prop_assert_eq!(bits(&a), bits(&flow::compound_pixelwise(&reversed).unwrap()));
    }

    #[test]
    fn single_field_ring_is_identity(f in field(8, 8)) {
        let mut ring = FlowRing::new(1).unwrap();
        ring.push(Arc::new(f.clone())).unwrap();
        prop_assert_eq!(bits(&flow::compound_pixelwise(&ring).unwrap()), bits(&f));
        prop_assert_eq!(bits(&flow::compound_trajectory(&ring).unwrap()), bits(&f));
    }

    #[test]
    fn restriction_is_bounded_idempotent_and_exact(
        (w, h, s) in (1usize..40, 1usize..40, 1usize..6),
        seed in any::<u64>(),
    ) {
        let mask = Mask::from_fn(w, h, |x, y| (x * 31 + y * 17 + seed as usize) % 5 < 2);
        let flow = FlowField::from_fn(w, h, |x, y| [x as f32 - 3.5, y as f32 * 0.25]).unwrap();
        let all = sampler::sample_grid(w, h, s).unwrap();
        let fg = sampler::restrict_to_foreground(&all, &mask, &flow).unwrap();
        prop_assert!(fg.len() <= all.len());
        let every = all.points.iter().all(|p| mask.is_foreground(p.x as usize, p.y as usize));
        prop_assert_eq!(fg.len() == all.len(), every);
        for (i, p) in fg.points.iter().enumerate() {
            prop_assert_eq!(p.id, i);
            prop_assert_eq!([p.u, p.v], flow.get(p.x as usize, p.y as usize));
        }
        let again = sampler::restrict_to_foreground(&fg, &mask, &flow).unwrap();
        prop_assert_eq!(again, fg);
    }

    #[test]
    fn duplicate_adds_one_kernel_term(feats in features(40), pick in any::<prop::sample::Index>(), d_c in 0.1f64..4.0) {
        let rho = cfsfdp::densities(&feats, d_c).unwrap();
        let i = pick.index(feats.len());
        let mut more = feats.clone();
        more.push(feats[i]);
        let rho2 = cfsfdp::densities(&more, d_c).unwrap();
        for j in 0..feats.len() {
            let add = (-(dist(&feats[i].scaled, &feats[j].scaled) / d_c).powi(2)).exp();
            prop_assert!((rho2[j] - rho[j] - add).abs() < 1e-9);
        }
        prop_assert!((rho2[feats.len()] - rho2[i]).abs() < 1e-9);
    }

    #[test]
    fn densities_follow_permutations(feats in features(40), rot in 0usize..40, d_c in 0.1f64..4.0) {
        let n = feats.len();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).rev().collect();
        let permuted: Vec<Feature> = perm.iter().map(|&i| feats[i]).collect();
        let rho = cfsfdp::densities(&feats, d_c).unwrap();
        let rho_p = cfsfdp::densities(&permuted, d_c).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert!((rho_p[k] - rho[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn one_point_takes_the_max_branch(feats in features(60), d_c in 0.1f64..4.0) {
        prop_assume!(feats.len() >= 2);
        let rho = cfsfdp::densities(&feats, d_c).unwrap();
        let d = cfsfdp::deltas(&feats, &rho).unwrap();
        let top = (0..rho.len())
            .max_by(|&a, &b| rho[a].total_cmp(&rho[b]).then(b.cmp(&a)))
            .unwrap();
        let far_f = (0..feats.len()).filter(|&j| j != top)
            .map(|j| (feats[top].flow[0] - feats[j].flow[0]).hypot(feats[top].flow[1] - feats[j].flow[1]))
            .fold(0.0, f64::max);
        let far_c = (0..feats.len()).filter(|&j| j != top)
            .map(|j| (feats[top].coord[0] - feats[j].coord[0]).hypot(feats[top].coord[1] - feats[j].coord[1]))
            .fold(0.0, f64::max);
        prop_assert!((d.flow[top] - far_f).abs() < 1e-12);
        prop_assert!((d.coord[top] - far_c).abs() < 1e-12);
        // every other point has a denser one, so its separation is a
        // minimum over a non-empty set and never the top point's own maximum
        // branch: it is bounded by its distance to the top point
        for i in (0..feats.len()).filter(|&i| i != top) {
            let to_top_c = (feats[i].coord[0] - feats[top].coord[0]).hypot(feats[i].coord[1] - feats[top].coord[1]);
            prop_assert!(d.coord[i] <= to_top_c + 1e-9);
        }
    }

    #[test]
    fn peaks_grow_with_c1(
        rho in prop::collection::vec(1.0f64..30.0, 1..60),
        seed in any::<u64>(),
        c1_lo in 1.0f64..20.0,
        bump in 0.0f64..20.0,
    ) {
        let n = rho.len();
        let mut s = seed;
        let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (s >> 33) as f64 / (1u64 << 31) as f64 };
        let deltas = Deltas {
            flow: (0..n).map(|_| next() * 6.0).collect(),
            coord: (0..n).map(|_| next() * 100.0).collect(),
        };
        let lo = PeakThresholds { c1: c1_lo, ..PeakThresholds::default() };
        let hi = PeakThresholds { c1: c1_lo + bump, ..PeakThresholds::default() };
        let small = cfsfdp::select_peaks(&rho, &deltas, &lo);
        let large = cfsfdp::select_peaks(&rho, &deltas, &hi);
        prop_assert!(small.iter().all(|p| large.contains(p)));
    }

    #[test]
    fn recall_does_not_rise_with_threshold(
        frames in prop::collection::vec((boxes(5), boxes(5)), 1..6),
    ) {
        let (preds, gts): (Vec<_>, Vec<_>) = frames.into_iter().unzip();
        let thresholds: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
        let curve = pr_curve(&preds, &gts, &thresholds).unwrap();
        let n_pred: usize = preds.iter().map(Vec::len).sum();
        let n_gt: usize = gts.iter().map(Vec::len).sum();
        for c in &curve {
            prop_assert_eq!(c.counts.tp + c.counts.fn_, n_gt);
            prop_assert_eq!(c.counts.tp + c.counts.fp, n_pred);
        }
        for w in curve.windows(2) {
            prop_assert!(w[1].counts.tp <= w[0].counts.tp);
            prop_assert!(w[1].recall() <= w[0].recall());
        }
    }

    #[test]
    fn swapping_roles_swaps_errors(preds in boxes(6), gts in boxes(6), t in 0.05f64..0.95) {
        let a = match_boxes(&preds, &gts, t).counts();
        let b = match_boxes(&gts, &preds, t).counts();
        prop_assert_eq!(a.tp, b.tp);
        prop_assert_eq!(a.fp, b.fn_);
        prop_assert_eq!(a.fn_, b.fp);
    }

    #[test]
    fn segmentation_is_a_deterministic_partition(
        n in 1usize..60,
        raw in prop::collection::vec((0usize..60, 0usize..60, 0u8..8), 0..150),
        tau in 0.0f64..50.0,
    ) {
        let edges: Vec<gbis::Edge> = raw.iter()
            .filter(|(a, b, _)| a % n != b % n)
            .map(|&(a, b, w)| gbis::Edge::new(a % n, b % n, w as f64 * 0.5))
            .collect();
        let mut edges_dedup = edges.clone();
        edges_dedup.sort_by(|l, r| l.a.cmp(&r.a).then(l.b.cmp(&r.b)));
        edges_dedup.dedup_by(|l, r| l.a == r.a && l.b == r.b);
        let g = gbis::Graph { node_count: n, edges: edges_dedup };
        let f1 = gbis::segment(&g, tau).unwrap();
        let f2 = gbis::segment(&g, tau).unwrap();
        let segs = f1.segments();
        prop_assert_eq!(&segs, &f2.segments());
        let mut seen = vec![0u8; n];
        for s in &segs {
            for &x in s {
                seen[x] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let roots = f1.roots();
        prop_assert_eq!(roots.iter().map(|&r| f1.size(r)).sum::<usize>(), n);
        let max_w = g.edges.iter().map(|e| e.w).fold(0.0, f64::max);
        prop_assert!(roots.iter().all(|&r| f1.internal_difference(r) <= max_w));
    }
}
