//! Shortest directed routes over the road graph.
//!
//! Search states are directed edges rather than nodes so that a U-turn
//! (immediately traversing the reverse of the edge just driven) can be
//! forbidden anywhere along a route. Costs are segment lengths in metres.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::graph::{DirEdge, NodeIdx, RoadGraph};

/// A found route: the directed edges traversed in order, and their total
/// length in metres. Empty path with distance 0 when origin == goal.
#[derive(Clone, Debug, PartialEq)]
pub struct RoutePath {
    pub edges: Vec<DirEdge>,
    pub dist_m: f64,
}

impl RoutePath {
    /// Whether the route traverses `seg` in either direction.
    pub fn contains_segment(&self, seg: crate::graph::SegIdx) -> bool {
        self.edges.iter().any(|e| e.seg() == seg)
    }
    /// Whether the route traverses exactly this directed edge.
    pub fn contains_edge(&self, e: DirEdge) -> bool {
        self.edges.contains(&e)
    }
}

const NO_PARENT: u32 = u32::MAX;

/// Reusable Dijkstra scratch space for one graph. Queries are `&mut self`;
/// create one router per worker thread for concurrent routing.
#[derive(Clone, Debug)]
pub struct Router {
    dist: Vec<f64>,
    parent: Vec<u32>,
    stamp: Vec<u32>,
    generation: u32,
    heap: BinaryHeap<HeapEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct HeapEntry(Reverse<OrdF64>, u32);

#[derive(Clone, Copy, Debug, PartialEq)]
struct OrdF64(f64, u32);
impl Eq for OrdF64 {}
impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        self.0.cmp(&other.0)
    }
}

impl Router {
    pub fn new(graph: &RoadGraph) -> Self {
        let n = graph.n_segments() * 2;
        Self {
            dist: vec![f64::INFINITY; n],
            parent: vec![NO_PARENT; n],
            stamp: vec![0; n],
            generation: 0,
            heap: BinaryHeap::new(),
        }
    }

    fn begin(&mut self, graph: &RoadGraph) {
        let n = graph.n_segments() * 2;
        if self.dist.len() != n {
            self.dist = vec![f64::INFINITY; n];
            self.parent = vec![NO_PARENT; n];
            self.stamp = vec![0; n];
            self.generation = 0;
        }
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.fill(0);
            self.generation = 1;
        }
        self.heap.clear();
    }

    fn relax(&mut self, e: DirEdge, d: f64, parent: u32) {
        let i = e.0 as usize;
        if self.stamp[i] != self.generation || d < self.dist[i] {
            self.stamp[i] = self.generation;
            self.dist[i] = d;
            self.parent[i] = parent;
            self.heap.push(HeapEntry(Reverse(OrdF64(d, e.0)), e.0));
        }
    }

    /// Shortest route from `from` to `to`. `arrived_via`, when given, is the
    /// directed edge on which the traveller reached `from`; its reverse is
    /// forbidden as the first hop (the no-U-turn rule also applies inside
    /// the route). Returns `None` when no route exists within `cutoff_m`.
    pub fn ete_route(
        &mut self,
        graph: &RoadGraph,
        from: NodeIdx,
        to: NodeIdx,
        arrived_via: Option<DirEdge>,
        cutoff_m: f64,
    ) -> Option<RoutePath> {
        if from == to {
            return Some(RoutePath {
                edges: Vec::new(),
                dist_m: 0.0,
            });
        }
        self.begin(graph);
        let forbidden = arrived_via.map(|e| e.opposite());
        for &e in graph.out_edges(from) {
            if Some(e) == forbidden {
                continue;
            }
            self.relax(e, graph.edge_len(e), NO_PARENT);
        }
        self.run_to_node(graph, to, cutoff_m)
    }

    /// Distances from the head of `start` to the heads of each `goal` edge
    /// (the goal edge itself is traversed last and included in the
    /// distance). The start edge's own length is not counted. U-turns,
    /// including reversing `start` as the first hop, are forbidden.
    ///
    /// A goal equal to `start` reports the length of the shortest loop
    /// returning onto the same directed edge (`None` if there is none).
    pub fn edge_to_edges(
        &mut self,
        graph: &RoadGraph,
        start: DirEdge,
        goals: &[DirEdge],
        cutoff_m: f64,
    ) -> Vec<Option<f64>> {
        self.begin(graph);
        let head = graph.head(start);
        for &e in graph.out_edges(head) {
            if e == start.opposite() {
                continue;
            }
            self.relax(e, graph.edge_len(e), NO_PARENT);
        }
        let mut remaining: usize = goals.len();
        let mut done = vec![false; goals.len()];
        let mut out = vec![None; goals.len()];
        while let Some(HeapEntry(Reverse(OrdF64(d, _)), idx)) = self.heap.pop() {
            let e = DirEdge(idx);
            if d > self.dist[idx as usize] || d > cutoff_m {
                if d > cutoff_m {
                    break;
                }
                continue;
            }
            for (k, &g) in goals.iter().enumerate() {
                if g == e && !done[k] {
                    done[k] = true;
                    out[k] = Some(d);
                    remaining -= 1;
                }
            }
            if remaining == 0 {
                break;
            }
            self.expand(graph, e, d);
        }
        out
    }

    /// Single-goal variant of [`Router::edge_to_edges`] that also returns
    /// the traversed edge sequence (excluding `start`, including the goal).
    pub fn edge_to_edge_path(
        &mut self,
        graph: &RoadGraph,
        start: DirEdge,
        goal: DirEdge,
        cutoff_m: f64,
    ) -> Option<RoutePath> {
        self.begin(graph);
        let head = graph.head(start);
        for &e in graph.out_edges(head) {
            if e == start.opposite() {
                continue;
            }
            self.relax(e, graph.edge_len(e), NO_PARENT);
        }
        while let Some(HeapEntry(Reverse(OrdF64(d, _)), idx)) = self.heap.pop() {
            if d > cutoff_m {
                return None;
            }
            if d > self.dist[idx as usize] {
                continue;
            }
            let e = DirEdge(idx);
            if e == goal {
                return Some(RoutePath {
                    edges: self.backtrace(e),
                    dist_m: d,
                });
            }
            self.expand(graph, e, d);
        }
        None
    }

    fn run_to_node(&mut self, graph: &RoadGraph, to: NodeIdx, cutoff_m: f64) -> Option<RoutePath> {
        while let Some(HeapEntry(Reverse(OrdF64(d, _)), idx)) = self.heap.pop() {
            if d > cutoff_m {
                return None;
            }
            if d > self.dist[idx as usize] {
                continue;
            }
            let e = DirEdge(idx);
            if graph.head(e) == to {
                return Some(RoutePath {
                    edges: self.backtrace(e),
                    dist_m: d,
                });
            }
            self.expand(graph, e, d);
        }
        None
    }

    fn expand(&mut self, graph: &RoadGraph, e: DirEdge, d: f64) {
        let head = graph.head(e);
        let nexts: Vec<DirEdge> = graph
            .out_edges(head)
            .iter()
            .copied()
            .filter(|&n| n != e.opposite())
            .collect();
        for n in nexts {
            self.relax(n, d + graph.edge_len(n), e.0);
        }
    }

    fn backtrace(&self, last: DirEdge) -> Vec<DirEdge> {
        let mut edges = Vec::new();
        let mut cur = last.0;
        loop {
            edges.push(DirEdge(cur));
            let p = self.parent[cur as usize];
            if p == NO_PARENT {
                break;
            }
            cur = p;
        }
        edges.reverse();
        edges
    }
}
