#[path = "common/oracle.rs"]
mod oracle;

use flowseg::cfsfdp::{self, Feature};
use flowseg::gbis::{self, Edge, Graph};
use oracle::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn segmentation_matches_quadratic_reference() {
    let report = gbis_sweep(1500, 11);
    assert_eq!(report.cases, 1500);
    assert!(report.ok(), "{:?}", &report.failures[..report.failures.len().min(5)]);
}

#[test]
fn densities_and_separations_match_brute_force() {
    let report = cfsfdp_sweep(1200, 12, 1e-9);
    assert!(report.ok(), "{:?}", &report.failures[..report.failures.len().min(5)]);
}

#[test]
fn greedy_matching_matches_references() {
    let report = matching_sweep(3000, 13);
    assert!(report.ok(), "{:?}", &report.failures[..report.failures.len().min(5)]);
}

#[test]
fn cutoff_is_the_quantile_on_a_lattice() {
    // 10x10 lattice with unit spacing in feature space
    let feats: Vec<Feature> = (0..100)
        .map(|i| {
            let (x, y) = ((i % 10) as f64, (i / 10) as f64);
            Feature {
                scaled: [0.0, 0.0, x, y],
                flow: [0.0, 0.0],
                coord: [x * 50.0, y * 50.0],
            }
        })
        .collect();
    for fraction in [0.01, 0.02, 0.05, 0.1, 0.5, 0.9] {
        assert_eq!(
            cfsfdp::choose_dc(&feats, fraction).unwrap(),
            brute_quantile(&feats, fraction),
            "fraction {fraction}"
        );
    }
    // 4950 pairs, 180 of them at distance 1: the 2% rank (99) is inside them
    assert_eq!(cfsfdp::choose_dc(&feats, 0.02).unwrap(), 1.0);
}

#[test]
fn cutoff_matches_quantile_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..200 {
        let feats = random_features(&mut rng, 120, 50.0);
        if feats.len() < 2 {
            continue;
        }
        for fraction in [0.02, 0.3] {
            assert_eq!(
                cfsfdp::choose_dc(&feats, fraction).unwrap(),
                brute_quantile(&feats, fraction)
            );
        }
    }
}

#[test]
fn segments_are_connected_in_the_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..300 {
        let g = random_graph(&mut rng, 40);
        let forest = gbis::segment(&g, random_tau(&mut rng)).unwrap();
        let mut adj = vec![Vec::new(); g.node_count];
        for e in &g.edges {
            adj[e.a].push(e.b);
            adj[e.b].push(e.a);
        }
        let segs = forest.segments();
        assert_eq!(segs.iter().map(Vec::len).sum::<usize>(), g.node_count);
        for seg in segs {
            let mut seen = vec![false; g.node_count];
            let mut stack = vec![seg[0]];
            seen[seg[0]] = true;
            while let Some(x) = stack.pop() {
                for &y in &adj[x] {
                    if !seen[y] && seg.binary_search(&y).is_ok() {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
            assert!(seg.iter().all(|&x| seen[x]), "disconnected segment {seg:?}");
        }
    }
}

#[test]
fn infinite_tau_gives_connected_components() {
    let g = Graph {
        node_count: 6,
        edges: vec![
            Edge::new(0, 1, 9.0),
            Edge::new(1, 2, 0.5),
            Edge::new(3, 4, 7.0),
        ],
    };
    let f = gbis::segment(&g, f64::INFINITY).unwrap();
    assert_eq!(
        forest_partition(&f),
        vec![vec![0, 1, 2], vec![3, 4], vec![5]]
    );
    assert_eq!(naive_segment(&g, f64::INFINITY), forest_partition(&f));
}
