//! Exact k-nearest-neighbor search over a sample set.
//!
//! Neighbor lists are sorted by distance, with ties broken by ascending
//! sample index, and never contain the query sample itself. The kd-tree and
//! the brute-force index compare the same `(distance key, index)` pairs, so
//! they return identical lists.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::replica_rng;

/// Largest dimension for which [`NeighborIndex::build`] uses a kd-tree.
pub const KD_TREE_MAX_DIM: usize = 8;
const LEAF_SIZE: usize = 12;

/// `n` samples in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl PointCloud {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidArgument(format!(
                "point cloud needs n >= 1 and d >= 1, got n = {n}, d = {d}"
            )));
        }
        if data.len() != n * d {
            return Err(Error::InvalidArgument(format!(
                "expected {} coordinates for {n} x {d} cloud, got {}",
                n * d,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite coordinate in sample {} (column {})",
                pos / d,
                pos % d
            )));
        }
        Ok(Self { n, d, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != d {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has {} columns, expected {d}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), d, data)
    }

    /// One-dimensional cloud from scalar samples.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    /// Column-wise concatenation `[self | other]`.
    pub fn concat(&self, other: &PointCloud) -> Result<PointCloud> {
        if self.n != other.n {
            return Err(Error::InvalidArgument(format!(
                "cannot concatenate clouds with {} and {} samples",
                self.n, other.n
            )));
        }
        let d = self.d + other.d;
        let mut data = Vec::with_capacity(self.n * d);
        for i in 0..self.n {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(PointCloud { n: self.n, d, data })
    }

    /// Columns `range` of every sample.
    pub fn columns(&self, range: std::ops::Range<usize>) -> Result<PointCloud> {
        if range.start >= range.end || range.end > self.d {
            return Err(Error::InvalidArgument(format!(
                "column range {range:?} invalid for dimension {}",
                self.d
            )));
        }
        let d = range.end - range.start;
        let data = self.rows().flat_map(|r| r[range.clone()].iter().copied()).collect();
        Ok(PointCloud { n: self.n, d, data })
    }

    pub fn map_coords<F: Fn(usize, f64) -> f64>(&self, f: F) -> PointCloud {
        let d = self.d;
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(pos, &x)| f(pos % d, x))
            .collect();
        PointCloud { n: self.n, d, data }
    }

    pub fn translated(&self, shift: &[f64]) -> PointCloud {
        assert_eq!(shift.len(), self.d);
        self.map_coords(|c, x| x + shift[c])
    }

    pub fn scaled(&self, factor: f64) -> PointCloud {
        self.map_coords(|_, x| x * factor)
    }

    /// Rows reordered so that row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> PointCloud {
        assert_eq!(perm.len(), self.n);
        let data = perm.iter().flat_map(|&p| self.row(p).iter().copied()).collect();
        PointCloud { n: self.n, d: self.d, data }
    }

    /// Largest per-coordinate standard deviation, or 1 for a degenerate cloud.
    pub fn scale(&self) -> f64 {
        let n = self.n as f64;
        let mut best: f64 = 0.0;
        for c in 0..self.d {
            let mean = self.rows().map(|r| r[c]).sum::<f64>() / n;
            let var = self.rows().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n;
            best = best.max(var.sqrt());
        }
        if best > 0.0 {
            best
        } else {
            1.0
        }
    }

    /// Deterministic jitter of magnitude `relative * scale()`; used to break
    /// exact duplicates before estimation.
    pub fn jittered(&self, relative: f64, seed: u64) -> PointCloud {
        let amplitude = relative * self.scale();
        let mut rng = replica_rng(seed, 0x4A17);
        let data = self
            .data
            .iter()
            .map(|&x| x + amplitude * (rng.random::<f64>() - 0.5))
            .collect();
        PointCloud { n: self.n, d: self.d, data }
    }
}

/// Distance used by an index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    /// Maximum coordinate difference.
    Chebyshev,
}

impl Metric {
    /// Monotone distance key: squared distance for Euclidean, the distance
    /// itself for Chebyshev.
    #[inline]
    pub fn key(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
            Metric::Chebyshev => a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
        }
    }

    #[inline]
    pub fn key_to_distance(self, key: f64) -> f64 {
        match self {
            Metric::Euclidean => key.sqrt(),
            Metric::Chebyshev => key,
        }
    }

    #[inline]
    pub fn distance_to_key(self, distance: f64) -> f64 {
        match self {
            Metric::Euclidean => distance * distance,
            Metric::Chebyshev => distance,
        }
    }

    /// Key of a one-coordinate gap, a lower bound on the key of any pair
    /// separated by at least `gap` along one axis.
    #[inline]
    fn axis_key(self, gap: f64) -> f64 {
        match self {
            Metric::Euclidean => gap * gap,
            Metric::Chebyshev => gap,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Chebyshev => "chebyshev",
        }
    }
}

/// One entry of a neighbor list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// Sorted neighbors of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborList {
    pub center: usize,
    /// Requested truncation budget.
    pub budget: usize,
    pub entries: Vec<Neighbor>,
}

impl NeighborList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// True when fewer than `budget` neighbors exist.
    pub fn truncated(&self) -> bool {
        self.entries.len() < self.budget
    }

    /// Distance to the `k`-th nearest neighbor (1-based).
    pub fn kth_distance(&self, k: usize) -> Option<f64> {
        k.checked_sub(1).and_then(|i| self.entries.get(i)).map(|e| e.distance)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.index).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    key: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .total_cmp(&other.key)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct KdTree {
    nodes: Vec<Node>,
    /// Sample indices permuted so every leaf owns a contiguous range.
    order: Vec<usize>,
}

impl KdTree {
    fn build(cloud: &PointCloud) -> Self {
        let mut tree = KdTree {
            nodes: Vec::new(),
            order: (0..cloud.n).collect(),
        };
        let n = cloud.n;
        tree.build_node(cloud, 0, n);
        tree
    }

    fn build_node(&mut self, cloud: &PointCloud, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let d = cloud.d;
        // split on the axis of largest spread
        let mut axis = 0;
        let mut spread = -1.0;
        for c in 0..d {
            let (lo, hi) = self.order[start..end]
                .iter()
                .map(|&i| cloud.row(i)[c])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
            if hi - lo > spread {
                spread = hi - lo;
                axis = c;
            }
        }
        if spread <= 0.0 {
            // all points identical: nothing to split on
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            cloud.row(a)[axis].total_cmp(&cloud.row(b)[axis])
        });
        let value = cloud.row(self.order[mid])[axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(cloud, start, mid);
        let right = self.build_node(cloud, mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    fn knn(
        &self,
        cloud: &PointCloud,
        metric: Metric,
        query: &[f64],
        exclude: Option<usize>,
        m: usize,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        self.knn_node(0, cloud, metric, query, exclude, m, heap);
    }

    #[allow(clippy::too_many_arguments)]
    fn knn_node(
        &self,
        node: usize,
        cloud: &PointCloud,
        metric: Metric,
        query: &[f64],
        exclude: Option<usize>,
        m: usize,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    push_bounded(heap, m, Candidate { key: metric.key(query, cloud.row(i)), index: i });
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let gap = query[axis] - value;
                let (near, far) = if gap < 0.0 { (left, right) } else { (right, left) };
                self.knn_node(near, cloud, metric, query, exclude, m, heap);
                // Points on the far side are at least |gap| away along `axis`.
                // Equal keys may still win on index, so only prune strictly.
                let bound = metric.axis_key(gap.abs());
                if heap.len() < m || heap.peek().is_some_and(|w| bound <= w.key) {
                    self.knn_node(far, cloud, metric, query, exclude, m, heap);
                }
            }
        }
    }

    fn within(
        &self,
        cloud: &PointCloud,
        metric: Metric,
        query: &[f64],
        exclude: Option<usize>,
        key_limit: f64,
        strict: bool,
        visit: &mut dyn FnMut(usize, f64),
    ) {
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            match self.nodes[node] {
                Node::Leaf { start, end } => {
                    for &i in &self.order[start..end] {
                        if Some(i) == exclude {
                            continue;
                        }
                        let key = metric.key(query, cloud.row(i));
                        if inside(key, key_limit, strict) {
                            visit(i, key);
                        }
                    }
                }
                Node::Split {
                    axis,
                    value,
                    left,
                    right,
                } => {
                    let gap = query[axis] - value;
                    let (near, far) = if gap < 0.0 { (left, right) } else { (right, left) };
                    stack.push(near);
                    if metric.axis_key(gap.abs()) <= key_limit {
                        stack.push(far);
                    }
                }
            }
        }
    }
}

#[inline]
fn inside(key: f64, limit: f64, strict: bool) -> bool {
    if strict {
        key < limit
    } else {
        key <= limit
    }
}

#[inline]
fn push_bounded(heap: &mut BinaryHeap<Candidate>, m: usize, c: Candidate) {
    if heap.len() < m {
        heap.push(c);
    } else if let Some(worst) = heap.peek() {
        if c < *worst {
            heap.pop();
            heap.push(c);
        }
    }
}

#[derive(Debug, Clone)]
enum Backend {
    KdTree(KdTree),
    BruteForce,
}

/// Immutable exact-search index over a point cloud.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    cloud: PointCloud,
    metric: Metric,
    backend: Backend,
}

impl NeighborIndex {
    /// Euclidean index; kd-tree up to [`KD_TREE_MAX_DIM`] dimensions,
    /// brute force above.
    pub fn build(cloud: PointCloud) -> Self {
        Self::with_metric(cloud, Metric::Euclidean)
    }

    pub fn with_metric(cloud: PointCloud, metric: Metric) -> Self {
        let backend = if cloud.d <= KD_TREE_MAX_DIM {
            Backend::KdTree(KdTree::build(&cloud))
        } else {
            Backend::BruteForce
        };
        Self {
            cloud,
            metric,
            backend,
        }
    }

    pub fn brute_force(cloud: PointCloud, metric: Metric) -> Self {
        Self {
            cloud,
            metric,
            backend: Backend::BruteForce,
        }
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn is_kd_tree(&self) -> bool {
        matches!(self.backend, Backend::KdTree(_))
    }

    /// The `m` nearest samples to `query`, skipping `exclude`.
    pub fn knn_point(&self, query: &[f64], m: usize, exclude: Option<usize>) -> Vec<Neighbor> {
        assert_eq!(query.len(), self.cloud.d, "query dimension mismatch");
        if m == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(m + 1);
        match &self.backend {
            Backend::KdTree(tree) => tree.knn(&self.cloud, self.metric, query, exclude, m, &mut heap),
            Backend::BruteForce => {
                for i in 0..self.cloud.n {
                    if Some(i) == exclude {
                        continue;
                    }
                    let key = self.metric.key(query, self.cloud.row(i));
                    push_bounded(&mut heap, m, Candidate { key, index: i });
                }
            }
        }
        heap.into_sorted_vec()
            .into_iter()
            .map(|c| Neighbor {
                index: c.index,
                distance: self.metric.key_to_distance(c.key),
            })
            .collect()
    }

    /// The `m` nearest other samples to sample `i`. Asking for more than
    /// `n - 1` returns all of them; see [`NeighborList::truncated`].
    pub fn knn_of_sample(&self, i: usize, m: usize) -> Result<NeighborList> {
        if i >= self.cloud.n {
            return Err(Error::InvalidArgument(format!(
                "sample index {i} out of range for n = {}",
                self.cloud.n
            )));
        }
        if self.cloud.n == 1 {
            return Err(Error::EmptyNeighborhood(
                "a single sample has no neighbors".into(),
            ));
        }
        if m == 0 {
            return Err(Error::InvalidArgument("neighbor budget must be >= 1".into()));
        }
        let entries = self.knn_point(self.cloud.row(i), m.min(self.cloud.n - 1), Some(i));
        Ok(NeighborList {
            center: i,
            budget: m,
            entries,
        })
    }

    /// Every other sample within `radius` of sample `i` (inclusive), sorted.
    pub fn within_radius(&self, i: usize, radius: f64) -> Vec<Neighbor> {
        let query = self.cloud.row(i);
        let limit = self.metric.distance_to_key(radius);
        let mut found = Vec::new();
        self.visit_within(query, Some(i), limit, false, &mut |index, key| {
            found.push(Candidate { key, index })
        });
        found.sort();
        found
            .into_iter()
            .map(|c| Neighbor {
                index: c.index,
                distance: self.metric.key_to_distance(c.key),
            })
            .collect()
    }

    /// Number of other samples strictly closer than `radius` to sample `i`.
    pub fn count_within_strict(&self, i: usize, radius: f64) -> usize {
        let limit = self.metric.distance_to_key(radius);
        let mut count = 0;
        self.visit_within(self.cloud.row(i), Some(i), limit, true, &mut |_, _| count += 1);
        count
    }

    fn visit_within(
        &self,
        query: &[f64],
        exclude: Option<usize>,
        key_limit: f64,
        strict: bool,
        visit: &mut dyn FnMut(usize, f64),
    ) {
        match &self.backend {
            Backend::KdTree(tree) => {
                tree.within(&self.cloud, self.metric, query, exclude, key_limit, strict, visit)
            }
            Backend::BruteForce => {
                for i in 0..self.cloud.n {
                    if Some(i) == exclude {
                        continue;
                    }
                    let key = self.metric.key(query, self.cloud.row(i));
                    if inside(key, key_limit, strict) {
                        visit(i, key);
                    }
                }
            }
        }
    }

    /// Distance from every sample to its `k`-th nearest other sample.
    pub fn kth_distances(&self, k: usize) -> Result<Vec<f64>> {
        let n = self.cloud.n;
        if k == 0 || k > n.saturating_sub(1) {
            return Err(Error::InvalidArgument(format!(
                "k = {k} needs 1 <= k <= n - 1 = {}",
                n.saturating_sub(1)
            )));
        }
        Ok(crate::exec::map_range(n, |i| {
            let list = self.knn_point(self.cloud.row(i), k, Some(i));
            list[k - 1].distance
        }))
    }
}

/// Per-sample `k`-th neighbor distances in the joint (concatenated) space,
/// used as marginal bandwidths by the coupled estimators.
pub fn coupled_radii(joint: &NeighborIndex, k: usize) -> Result<Vec<f64>> {
    joint.kth_distances(k)
}
