//! Graph-based segmentation of the foreground samples.
//!
//! Samples are linked to their lattice neighbours with flow-difference
//! weights, and components are merged in ascending weight order while the
//! joining edge stays within both components' internal difference plus
//! `tau / |C|` (Felzenszwalb-Huttenlocher).

use std::cmp::Ordering;

use thiserror::Error;

use crate::sampler::SamplePointSet;

/// Edges kept per sample out of its up to 8 lattice neighbours.
pub const EDGES_PER_POINT: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum GbisError {
    #[error("tau must be non-negative, got {0}")]
    NegativeTau(f64),
    #[error("adaptive tau needs at least one peak")]
    ZeroPeaks,
    #[error("edge ({a}, {b}) refers to a node outside 0..{node_count}")]
    NodeOutOfRange {
        a: usize,
        b: usize,
        node_count: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    /// Smaller endpoint.
    pub a: usize,
    /// Larger endpoint.
    pub b: usize,
    pub w: f64,
}

impl Edge {
    pub fn new(x: usize, y: usize, w: f64) -> Self {
        Self {
            a: x.min(y),
            b: x.max(y),
            w,
        }
    }

    /// Processing order: weight, then smaller id, then larger id.
    pub fn total_cmp(&self, other: &Self) -> Ordering {
        self.w
            .total_cmp(&other.w)
            .then(self.a.cmp(&other.a))
            .then(self.b.cmp(&other.b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub node_count: usize,
    /// Deduplicated by unordered pair, sorted by `(a, b)`.
    pub edges: Vec<Edge>,
}

const NEIGHBOURS: [(i64, i64); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Links every sample to the (up to) four lightest of its 8 lattice
/// neighbours; an edge survives if either endpoint keeps it.
pub fn build_graph(fg: &SamplePointSet) -> Graph {
    let s = fg.interval.max(1);
    let off = fg.offset();
    let cols = (fg.width + s - 1 - off.min(fg.width)) / s + 1;
    let rows = (fg.height + s - 1 - off.min(fg.height)) / s + 1;
    let mut cell = vec![usize::MAX; cols * rows];
    let lattice = |x: u32, y: u32| ((x as usize - off) / s, (y as usize - off) / s);
    for p in &fg.points {
        let (cx, cy) = lattice(p.x, p.y);
        cell[cy * cols + cx] = p.id;
    }

    let mut edges = Vec::with_capacity(fg.len() * EDGES_PER_POINT);
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(8);
    for p in &fg.points {
        let (cx, cy) = lattice(p.x, p.y);
        candidates.clear();
        for (dx, dy) in NEIGHBOURS {
            let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
            if nx < 0 || ny < 0 || nx as usize >= cols || ny as usize >= rows {
                continue;
            }
            let q = cell[ny as usize * cols + nx as usize];
            if q == usize::MAX {
                continue;
            }
            let other = &fg.points[q];
            let w = ((p.u - other.u) as f64).hypot((p.v - other.v) as f64);
            candidates.push((w, q));
        }
        candidates.sort_by(|l, r| l.0.total_cmp(&r.0).then(l.1.cmp(&r.1)));
        edges.extend(
            candidates
                .iter()
                .take(EDGES_PER_POINT)
                .map(|&(w, q)| Edge::new(p.id, q, w)),
        );
    }
    Graph {
        node_count: fg.len(),
        edges: sort_dedup_by_endpoints(edges, fg.len()),
    }
}

/// Orders edges by `(a, b)` and drops repeats; counting sort on `a`, then
/// each bucket (at most 8 edges on the lattice) by `b`.
fn sort_dedup_by_endpoints(edges: Vec<Edge>, node_count: usize) -> Vec<Edge> {
    let mut start = vec![0usize; node_count + 1];
    for e in &edges {
        start[e.a + 1] += 1;
    }
    for i in 0..node_count {
        start[i + 1] += start[i];
    }
    let mut next = start.clone();
    let mut sorted = vec![Edge::new(0, 0, 0.0); edges.len()];
    for e in edges {
        sorted[next[e.a]] = e;
        next[e.a] += 1;
    }
    for a in 0..node_count {
        sorted[start[a]..start[a + 1]].sort_unstable_by_key(|e| e.b);
    }
    sorted.dedup_by(|l, r| l.a == r.a && l.b == r.b);
    sorted
}

/// Union-find over graph nodes with per-root size and internal difference
/// (largest edge weight merged into the component).
#[derive(Debug, Clone)]
pub struct SegmentForest {
    parent: Vec<usize>,
    rank: Vec<u8>,
    size: Vec<usize>,
    int_diff: Vec<f64>,
}

impl SegmentForest {
    pub fn new(node_count: usize) -> Self {
        Self {
            parent: (0..node_count).collect(),
            rank: vec![0; node_count],
            size: vec![1; node_count],
            int_diff: vec![0.0; node_count],
        }
    }

    pub fn node_count(&self) -> usize {
        self.parent.len()
    }

    /// Root of `x`, halving the path on the way up.
    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            let grand = self.parent[self.parent[x]];
            self.parent[x] = grand;
            x = grand;
        }
        x
    }

    /// Root of `x` without touching the structure.
    pub fn root(&self, mut x: usize) -> usize {
        while self.parent[x] != x {
            x = self.parent[x];
        }
        x
    }

    /// Merges the components rooted at `ra` and `rb` across an edge of
    /// weight `w`; returns the new root.
    fn union_roots(&mut self, ra: usize, rb: usize, w: f64) -> usize {
        debug_assert!(ra != rb && self.parent[ra] == ra && self.parent[rb] == rb);
        let (hi, lo) = match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => (rb, ra),
            Ordering::Greater => (ra, rb),
            Ordering::Equal => {
                self.rank[ra] += 1;
                (ra, rb)
            }
        };
        self.parent[lo] = hi;
        self.size[hi] += self.size[lo];
        self.int_diff[hi] = self.int_diff[hi].max(self.int_diff[lo]).max(w);
        hi
    }

    /// Size of the component containing `x`.
    pub fn size(&self, x: usize) -> usize {
        self.size[self.root(x)]
    }

    /// Internal difference of the component containing `x`.
    pub fn internal_difference(&self, x: usize) -> f64 {
        self.int_diff[self.root(x)]
    }

    /// Root id of every node.
    pub fn labels(&self) -> Vec<usize> {
        (0..self.parent.len()).map(|x| self.root(x)).collect()
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.parent.len())
            .filter(|&x| self.parent[x] == x)
            .collect()
    }

    /// Members of each segment, segments ordered by their smallest member
    /// and members ascending.
    pub fn segments(&self) -> Vec<Vec<usize>> {
        let labels = self.labels();
        let mut slot = vec![usize::MAX; labels.len()];
        let mut out: Vec<Vec<usize>> = Vec::new();
        for (x, &r) in labels.iter().enumerate() {
            if slot[r] == usize::MAX {
                slot[r] = out.len();
                out.push(Vec::new());
            }
            out[slot[r]].push(x);
        }
        out
    }

    pub fn segment_count(&self) -> usize {
        self.parent
            .iter()
            .enumerate()
            .filter(|&(x, &p)| x == p)
            .count()
    }
}

/// Segments the graph with aggregation parameter `tau` (may be +inf).
pub fn segment(graph: &Graph, tau: f64) -> Result<SegmentForest, GbisError> {
    if tau.is_nan() || tau < 0.0 {
        return Err(GbisError::NegativeTau(tau));
    }
    if let Some(e) = graph.edges.iter().find(|e| e.b >= graph.node_count) {
        return Err(GbisError::NodeOutOfRange {
            a: e.a,
            b: e.b,
            node_count: graph.node_count,
        });
    }
    let mut edges = graph.edges.clone();
    edges.sort_by(Edge::total_cmp);
    let mut forest = SegmentForest::new(graph.node_count);
    for e in &edges {
        let ra = forest.find(e.a);
        let rb = forest.find(e.b);
        if ra == rb {
            continue;
        }
        let limit_a = forest.int_diff[ra] + tau / forest.size[ra] as f64;
        let limit_b = forest.int_diff[rb] + tau / forest.size[rb] as f64;
        if e.w <= limit_a.min(limit_b) {
            forest.union_roots(ra, rb, e.w);
        }
    }
    Ok(forest)
}

/// `tau = 2 * n_fg / n_peaks`: the expected number of samples per object,
/// doubled.
pub fn adaptive_tau(n_fg: usize, n_peaks: usize) -> Result<f64, GbisError> {
    if n_peaks == 0 {
        return Err(GbisError::ZeroPeaks);
    }
    Ok(2.0 * n_fg as f64 / n_peaks as f64)
}
