//! Network-constrained following distance between two matched trucks at
//! one instant.
//!
//! Two trucks on the same segment follow each other iff they share a
//! driving direction; the distance is then the along-segment gap. Across
//! segments, a pair qualifies as leader/follower only when the shortest
//! route from the follower's heading node to the leader's heading node
//! (no U-turns, one-way respected, bounded by a cutoff)
//!
//! * traverses the leader's segment in the leader's driving direction, and
//! * does not touch the follower's own segment.
//!
//! The catch-up distance is then the follower's remaining distance on its
//! segment, plus the route, minus the leader's remaining distance. The
//! following distance is the minimum of the two catch-up directions, or
//! `+inf` when neither qualifies. This single predicate reproduces every
//! same-line, dual-carriageway and junction scenario: face-to-face pairs
//! fail the leader-containment test, back-to-back and U-turn geometries
//! fail the self-containment test, and opposite carriageways exceed the
//! cutoff in both directions.

use crate::geo::LonLat;
use crate::graph::{DirEdge, NodeIdx, RoadGraph, SegIdx};
use crate::mapmatch::Dir;
use crate::route::Router;
use crate::TruckId;

/// One truck's matched state at a snapshot instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnapshotTruck {
    pub truck: TruckId,
    pub seg: SegIdx,
    /// Arclength fraction from the segment's from-node, in [0, 1].
    pub r: f64,
    pub dir: Dir,
    /// Snapped position (used for the geographic prefilter).
    pub pos: LonLat,
}

impl SnapshotTruck {
    /// The directed edge this truck is traversing.
    pub fn travel_edge(self) -> DirEdge {
        match self.dir {
            Dir::Along => DirEdge::forward(self.seg),
            Dir::Against => DirEdge::reverse(self.seg),
        }
    }

    /// Node the truck is heading to under its direction.
    pub fn heading_node(self, graph: &RoadGraph) -> NodeIdx {
        graph.head(self.travel_edge())
    }

    /// Node the truck entered its segment from.
    pub fn entry_node(self, graph: &RoadGraph) -> NodeIdx {
        graph.tail(self.travel_edge())
    }

    /// Distance already travelled on the segment, metres.
    pub fn progress_m(self, graph: &RoadGraph) -> f64 {
        let len = graph.segment(self.seg).length_m;
        len - theta_remaining(&self) * len
    }

    /// Distance still to travel to the heading node, metres.
    pub fn remaining_m(self, graph: &RoadGraph) -> f64 {
        theta_remaining(&self) * graph.segment(self.seg).length_m
    }
}

/// Fraction of the segment still ahead of the truck: `1 - r` when driving
/// along the segment direction, `r` when driving against it.
pub fn theta_remaining(t: &SnapshotTruck) -> f64 {
    match t.dir {
        Dir::Along => 1.0 - t.r,
        Dir::Against => t.r,
    }
}

/// Catch-up distance for `follower` to reach `leader`, or `+inf` when the
/// pair is not in a follower→leader geometry within `cutoff_m`.
pub fn catch_up_distance(
    graph: &RoadGraph,
    router: &mut Router,
    follower: &SnapshotTruck,
    leader: &SnapshotTruck,
    cutoff_m: f64,
) -> f64 {
    if follower.seg == leader.seg {
        if follower.dir != leader.dir {
            return f64::INFINITY;
        }
        let gap = leader.progress_m(graph) - follower.progress_m(graph);
        return if gap >= 0.0 { gap } else { f64::INFINITY };
    }
    let path = match router.ete_route(
        graph,
        follower.heading_node(graph),
        leader.heading_node(graph),
        Some(follower.travel_edge()),
        cutoff_m,
    ) {
        Some(p) => p,
        None => return f64::INFINITY,
    };
    if !path.contains_edge(leader.travel_edge()) {
        return f64::INFINITY;
    }
    if path.contains_segment(follower.seg) {
        return f64::INFINITY;
    }
    let cd = follower.remaining_m(graph) + path.dist_m - leader.remaining_m(graph);
    cd.max(0.0)
}

/// Symmetric following distance `min(CD(a,b), CD(b,a))` in metres;
/// `+inf` marks a pair that is not following. Callers are expected to
/// prefilter pairs by geographic distance.
pub fn following_distance(
    graph: &RoadGraph,
    router: &mut Router,
    a: &SnapshotTruck,
    b: &SnapshotTruck,
    cutoff_m: f64,
) -> f64 {
    if a.seg == b.seg {
        return if a.dir == b.dir {
            graph.segment(a.seg).length_m * (a.r - b.r).abs()
        } else {
            f64::INFINITY
        };
    }
    let ab = catch_up_distance(graph, router, a, b, cutoff_m);
    let ba = catch_up_distance(graph, router, b, a, cutoff_m);
    ab.min(ba)
}

/// Convenience wrapper that allocates its own router.
pub fn following_distance_simple(
    graph: &RoadGraph,
    a: &SnapshotTruck,
    b: &SnapshotTruck,
    cutoff_m: f64,
) -> f64 {
    let mut router = Router::new(graph);
    following_distance(graph, &mut router, a, b, cutoff_m)
}

/// Order the trucks of one co-driving set front-first along the convoy, by
/// signed catch-up coordinates relative to the first truck. Trucks whose
/// relation to the reference cannot be resolved keep their input order at
/// the back. Returns indices into `trucks`.
pub fn chain_order(
    graph: &RoadGraph,
    router: &mut Router,
    trucks: &[SnapshotTruck],
    cutoff_m: f64,
) -> alloc::vec::Vec<usize> {
    use alloc::vec::Vec;
    if trucks.len() <= 1 {
        return (0..trucks.len()).collect();
    }
    let reference = &trucks[0];
    let mut coords: Vec<(usize, f64)> = Vec::with_capacity(trucks.len());
    coords.push((0, 0.0));
    for (i, t) in trucks.iter().enumerate().skip(1) {
        let ahead = catch_up_distance(graph, router, reference, t, cutoff_m);
        let coord = if ahead.is_finite() {
            ahead
        } else {
            let behind = catch_up_distance(graph, router, t, reference, cutoff_m);
            if behind.is_finite() {
                -behind
            } else {
                f64::NEG_INFINITY
            }
        };
        coords.push((i, coord));
    }
    // front of the convoy has the largest forward coordinate
    coords.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    coords.into_iter().map(|(i, _)| i).collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::graph::{RoadClass, RoadGraph, SegmentSpec};
    use alloc::format;
    use alloc::vec;
    use alloc::vec::Vec;

    pub(crate) fn trunk_line(n_nodes: usize, seg_m: f64) -> RoadGraph {
        let step = seg_m / 111_195.0; // ~degrees of latitude per segment
        let nodes: Vec<_> = (0..n_nodes)
            .map(|i| (format!("n{i}"), LonLat::new(122.0, 41.0 + i as f64 * step)))
            .collect();
        let segs = (0..n_nodes - 1)
            .map(|i| SegmentSpec {
                id: format!("s{i}"),
                from: format!("n{i}"),
                to: format!("n{}", i + 1),
                length_m: crate::geo::haversine_m(nodes[i].1, nodes[i + 1].1),
                class: RoadClass::Trunk,
                oneway: false,
                geometry: None,
            })
            .collect();
        RoadGraph::build(nodes, segs, 50.0).unwrap()
    }

    pub(crate) fn truck(graph: &RoadGraph, id: u32, seg: u32, r: f64, dir: Dir) -> SnapshotTruck {
        SnapshotTruck {
            truck: TruckId(id),
            seg: SegIdx(seg),
            r,
            dir,
            pos: graph.interpolate(SegIdx(seg), r),
        }
    }

    #[test]
    fn theta_remaining_cases() {
        let g = trunk_line(2, 1000.0);
        let t = truck(&g, 0, 0, 0.3, Dir::Along);
        assert!((theta_remaining(&t) - 0.7).abs() < 1e-12);
        let t = truck(&g, 0, 0, 0.3, Dir::Against);
        assert!((theta_remaining(&t) - 0.3).abs() < 1e-12);
        let t = truck(&g, 0, 0, 1.0, Dir::Along);
        assert_eq!(theta_remaining(&t), 0.0);
    }

    #[test]
    fn same_segment_same_dir_gap() {
        let g = trunk_line(2, 1000.0);
        let len = g.segment(SegIdx(0)).length_m;
        let mut router = Router::new(&g);
        let a = truck(&g, 0, 0, 0.2, Dir::Along);
        let b = truck(&g, 1, 0, 0.7, Dir::Along);
        let fd = following_distance(&g, &mut router, &a, &b, 3000.0);
        assert!((fd - 0.5 * len).abs() < 1e-9);
        // catch-up is one-sided
        assert!((catch_up_distance(&g, &mut router, &a, &b, 3000.0) - 0.5 * len).abs() < 1e-9);
        assert!(catch_up_distance(&g, &mut router, &b, &a, 3000.0).is_infinite());
    }

    #[test]
    fn same_segment_opposite_dir_is_infinite() {
        let g = trunk_line(2, 1000.0);
        let mut router = Router::new(&g);
        let a = truck(&g, 0, 0, 0.2, Dir::Along);
        let b = truck(&g, 1, 0, 0.7, Dir::Against);
        assert!(following_distance(&g, &mut router, &a, &b, 3000.0).is_infinite());
    }

    #[test]
    fn adjacent_segments_catch_up() {
        let g = trunk_line(3, 1000.0);
        let l0 = g.segment(SegIdx(0)).length_m;
        let l1 = g.segment(SegIdx(1)).length_m;
        let mut router = Router::new(&g);
        let a = truck(&g, 0, 0, 0.8, Dir::Along);
        let b = truck(&g, 1, 1, 0.4, Dir::Along);
        let cd = catch_up_distance(&g, &mut router, &a, &b, 5000.0);
        assert!((cd - (0.2 * l0 + 0.4 * l1)).abs() < 1e-6);
        let fd = following_distance(&g, &mut router, &a, &b, 5000.0);
        assert!((fd - cd).abs() < 1e-9);
    }

    #[test]
    fn no_directed_route_is_infinite() {
        // Two parallel disconnected lines.
        let nodes = vec![
            ("a0".into(), LonLat::new(122.0, 41.0)),
            ("a1".into(), LonLat::new(122.0, 41.01)),
            ("b0".into(), LonLat::new(122.001, 41.0)),
            ("b1".into(), LonLat::new(122.001, 41.01)),
        ];
        let mk = |id: &str, f: &str, t: &str, a: LonLat, b: LonLat| SegmentSpec {
            id: id.into(),
            from: f.into(),
            to: t.into(),
            length_m: crate::geo::haversine_m(a, b),
            class: RoadClass::Trunk,
            oneway: false,
            geometry: None,
        };
        let g = RoadGraph::build(
            nodes.clone(),
            vec![
                mk("sa", "a0", "a1", nodes[0].1, nodes[1].1),
                mk("sb", "b0", "b1", nodes[2].1, nodes[3].1),
            ],
            50.0,
        )
        .unwrap();
        let mut router = Router::new(&g);
        let a = truck(&g, 0, 0, 0.5, Dir::Along);
        let b = truck(&g, 1, 1, 0.5, Dir::Along);
        assert!(catch_up_distance(&g, &mut router, &a, &b, f64::INFINITY).is_infinite());
        assert!(following_distance(&g, &mut router, &a, &b, f64::INFINITY).is_infinite());
    }

    #[test]
    fn face_to_face_and_back_to_back_disqualify() {
        let g = trunk_line(3, 1000.0);
        let mut router = Router::new(&g);
        // face to face: a heads up s0 (towards n1), b heads down s1 (towards n1)
        let a = truck(&g, 0, 0, 0.9, Dir::Along);
        let b = truck(&g, 1, 1, 0.1, Dir::Against);
        assert!(following_distance(&g, &mut router, &a, &b, 5000.0).is_infinite());
        // back to back: a heads down s0, b heads up s1
        let a = truck(&g, 0, 0, 0.9, Dir::Against);
        let b = truck(&g, 1, 1, 0.1, Dir::Along);
        assert!(following_distance(&g, &mut router, &a, &b, 5000.0).is_infinite());
    }

    #[test]
    fn following_on_bidirectional_line_both_travel_directions() {
        let g = trunk_line(3, 1000.0);
        let l0 = g.segment(SegIdx(0)).length_m;
        let l1 = g.segment(SegIdx(1)).length_m;
        let mut router = Router::new(&g);
        // both driving "down" the line: on s1 towards n1, on s0 towards n0
        let follower = truck(&g, 0, 1, 0.6, Dir::Against);
        let leader = truck(&g, 1, 0, 0.3, Dir::Against);
        let fd = following_distance(&g, &mut router, &follower, &leader, 5000.0);
        // remaining(follower) = 0.6*l1, route = l0, remaining(leader) = 0.3*l0
        let manual = 0.6 * l1 + l0 - 0.3 * l0;
        assert!((fd - manual).abs() < 1e-6, "fd={fd} manual={manual}");
    }

    #[test]
    fn fd_symmetry_and_additivity_on_colinear_convoy() {
        let g = trunk_line(2, 3000.0);
        let mut router = Router::new(&g);
        let a = truck(&g, 0, 0, 0.1, Dir::Along);
        let b = truck(&g, 1, 0, 0.4, Dir::Along);
        let c = truck(&g, 2, 0, 0.9, Dir::Along);
        let fd = |x: &SnapshotTruck, y: &SnapshotTruck, router: &mut Router| {
            following_distance(&g, router, x, y, 9000.0)
        };
        assert_eq!(fd(&a, &b, &mut router), fd(&b, &a, &mut router));
        let (ab, bc, ac) = (
            fd(&a, &b, &mut router),
            fd(&b, &c, &mut router),
            fd(&a, &c, &mut router),
        );
        assert!((ab + bc - ac).abs() < 1e-9);
        // FD zero iff same place same dir
        let a2 = truck(&g, 3, 0, 0.1, Dir::Along);
        assert_eq!(fd(&a, &a2, &mut router), 0.0);
    }

    #[test]
    fn chain_order_front_first() {
        let g = trunk_line(3, 1000.0);
        let mut router = Router::new(&g);
        let back = truck(&g, 0, 0, 0.2, Dir::Along);
        let front = truck(&g, 1, 1, 0.8, Dir::Along);
        let mid = truck(&g, 2, 1, 0.1, Dir::Along);
        let order = chain_order(&g, &mut router, &[back, front, mid], 9000.0);
        assert_eq!(order, vec![1, 2, 0]);
    }
}
