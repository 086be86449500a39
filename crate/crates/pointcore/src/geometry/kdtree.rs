//! Exact k-d tree nearest-neighbor search with deterministic tie-breaking.
//!
//! Equidistant candidates are ordered by original point index, and the
//! search compares squared distances directly so that ties are resolved on
//! the exact values rather than on rounded square roots. Every lookup
//! increments an internal counter, which lets callers verify how many index
//! queries a pipeline stage performed.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use nalgebra::Point3;

const LEAF_SIZE: usize = 16;

/// One k-NN / radius-search hit. `distance` is Euclidean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { axis: u8, value: f64, left: u32, right: u32 },
}

/// Exact nearest-neighbor index over a fixed set of 3D points.
#[derive(Debug)]
pub struct SpatialIndex {
    coords: Vec<[f64; 3]>,
    order: Vec<u32>,
    nodes: Vec<Node>,
    root: u32,
    queries: AtomicU64,
}

impl Clone for SpatialIndex {
    fn clone(&self) -> Self {
        Self {
            coords: self.coords.clone(),
            order: self.order.clone(),
            nodes: self.nodes.clone(),
            root: self.root,
            queries: AtomicU64::new(self.queries.load(AtomicOrdering::Relaxed)),
        }
    }
}

impl SpatialIndex {
    pub fn build(points: &[Point3<f64>]) -> Self {
        let coords: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut order: Vec<u32> = (0..coords.len() as u32).collect();
        let mut nodes = Vec::new();
        let root = if coords.is_empty() {
            nodes.push(Node::Leaf { start: 0, end: 0 });
            0
        } else {
            build_node(&coords, &mut order, 0, &mut nodes)
        };
        Self {
            coords,
            order,
            nodes,
            root,
            queries: AtomicU64::new(0),
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Number of k-NN and radius lookups performed since construction.
    pub fn query_count(&self) -> u64 {
        self.queries.load(AtomicOrdering::Relaxed)
    }

    /// The `k` nearest points to `query`, ascending by `(distance, index)`.
    /// Returns fewer than `k` neighbors only when the index holds fewer
    /// points.
    pub fn knn(&self, query: &Point3<f64>, k: usize) -> Vec<Neighbor> {
        self.queries.fetch_add(1, AtomicOrdering::Relaxed);
        if k == 0 || self.coords.is_empty() {
            return Vec::new();
        }
        let q = [query.x, query.y, query.z];
        let mut heap: BinaryHeap<HeapItem> = BinaryHeap::with_capacity(k + 1);
        self.knn_node(self.root, &q, k, &mut heap);
        let mut hits: Vec<HeapItem> = heap.into_vec();
        hits.sort_unstable_by(|a, b| a.cmp(b));
        hits.into_iter()
            .map(|h| Neighbor {
                index: h.index as usize,
                distance: h.d2.sqrt(),
            })
            .collect()
    }

    /// All points with `distance <= radius`, ascending by `(distance, index)`.
    pub fn radius(&self, query: &Point3<f64>, radius: f64) -> Vec<Neighbor> {
        self.queries.fetch_add(1, AtomicOrdering::Relaxed);
        if self.coords.is_empty() || radius < 0.0 {
            return Vec::new();
        }
        let q = [query.x, query.y, query.z];
        let r2 = radius * radius;
        let mut hits: Vec<HeapItem> = Vec::new();
        self.radius_node(self.root, &q, r2, &mut hits);
        hits.sort_unstable_by(|a, b| a.cmp(b));
        hits.into_iter()
            .map(|h| Neighbor {
                index: h.index as usize,
                distance: h.d2.sqrt(),
            })
            .collect()
    }

    fn knn_node(&self, node: u32, q: &[f64; 3], k: usize, heap: &mut BinaryHeap<HeapItem>) {
        match &self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &idx in &self.order[*start as usize..*end as usize] {
                    let d2 = dist2(&self.coords[idx as usize], q);
                    let item = HeapItem { d2, index: idx };
                    if heap.len() < k {
                        heap.push(item);
                    } else if item.cmp(heap.peek().unwrap()) == Ordering::Less {
                        heap.pop();
                        heap.push(item);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = q[*axis as usize] - value;
                let (near, far) = if delta <= 0.0 { (*left, *right) } else { (*right, *left) };
                self.knn_node(near, q, k, heap);
                // The far side may still contain an equidistant point with a
                // lower index, so only prune on a strictly larger bound.
                let visit_far = heap.len() < k || delta * delta <= heap.peek().unwrap().d2;
                if visit_far {
                    self.knn_node(far, q, k, heap);
                }
            }
        }
    }

    fn radius_node(&self, node: u32, q: &[f64; 3], r2: f64, hits: &mut Vec<HeapItem>) {
        match &self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &idx in &self.order[*start as usize..*end as usize] {
                    let d2 = dist2(&self.coords[idx as usize], q);
                    if d2 <= r2 {
                        hits.push(HeapItem { d2, index: idx });
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = q[*axis as usize] - value;
                let (near, far) = if delta <= 0.0 { (*left, *right) } else { (*right, *left) };
                self.radius_node(near, q, r2, hits);
                if delta * delta <= r2 {
                    self.radius_node(far, q, r2, hits);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem {
    d2: f64,
    index: u32,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Distances are finite by construction, so total_cmp matches the
        // usual order.
        self.d2
            .total_cmp(&other.d2)
            .then_with(|| self.index.cmp(&other.index))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dist2(p: &[f64; 3], q: &[f64; 3]) -> f64 {
    let dx = p[0] - q[0];
    let dy = p[1] - q[1];
    let dz = p[2] - q[2];
    dx * dx + dy * dy + dz * dz
}

fn build_node(coords: &[[f64; 3]], order: &mut [u32], offset: u32, nodes: &mut Vec<Node>) -> u32 {
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len() as u32,
        });
        return nodes.len() as u32 - 1;
    }
    let mut lo = coords[order[0] as usize];
    let mut hi = lo;
    for &idx in order.iter() {
        let c = &coords[idx as usize];
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    let mut axis = 0;
    for a in 1..3 {
        if hi[a] - lo[a] > hi[axis] - lo[axis] {
            axis = a;
        }
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        coords[a as usize][axis]
            .total_cmp(&coords[b as usize][axis])
            .then_with(|| a.cmp(&b))
    });
    let value = coords[order[mid] as usize][axis];
    let (left_slice, right_slice) = order.split_at_mut(mid);
    let left = build_node(coords, left_slice, offset, nodes);
    let right = build_node(coords, right_slice, offset + mid as u32, nodes);
    nodes.push(Node::Split {
        axis: axis as u8,
        value,
        left,
        right,
    });
    nodes.len() as u32 - 1
}
