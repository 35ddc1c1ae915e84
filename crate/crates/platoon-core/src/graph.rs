//! Directed road graph: nodes, segments with polyline geometry, a uniform
//! spatial grid for candidate search, and adjacency for routing.
//!
//! The graph is immutable after [`RoadGraph::build`]; every query takes
//! `&self` and is safe to run from many threads concurrently.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::geo::{self, LonLat};
use crate::numf;

/// Index of a node in [`RoadGraph::nodes`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeIdx(pub u32);

/// Index of a segment in [`RoadGraph::segments`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SegIdx(pub u32);

/// A directed traversal of a segment: forward (from→to) or reverse.
/// Encoded as `segment * 2 + (0 | 1)` so routing state arrays stay dense.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DirEdge(pub u32);

impl DirEdge {
    pub fn forward(seg: SegIdx) -> Self {
        DirEdge(seg.0 * 2)
    }
    pub fn reverse(seg: SegIdx) -> Self {
        DirEdge(seg.0 * 2 + 1)
    }
    pub fn seg(self) -> SegIdx {
        SegIdx(self.0 / 2)
    }
    pub fn is_reverse(self) -> bool {
        self.0 % 2 == 1
    }
    /// The opposite traversal of the same segment.
    pub fn opposite(self) -> Self {
        DirEdge(self.0 ^ 1)
    }
}

/// Highway class of a segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RoadClass {
    /// Dual-carriageway national expressway; always one-way per carriageway.
    Expressway,
    /// Trunk road; usually a bidirectional single line in the map data.
    Trunk,
}

impl RoadClass {
    pub fn as_str(self) -> &'static str {
        match self {
            RoadClass::Expressway => "expressway",
            RoadClass::Trunk => "trunk",
        }
    }
}

impl core::str::FromStr for RoadClass {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "expressway" => Ok(RoadClass::Expressway),
            "trunk" => Ok(RoadClass::Trunk),
            _ => Err(()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RoadNode {
    pub id: String,
    pub pos: LonLat,
}

#[derive(Clone, Debug)]
pub struct RoadSegment {
    pub id: String,
    pub from: NodeIdx,
    pub to: NodeIdx,
    pub length_m: f64,
    pub class: RoadClass,
    pub oneway: bool,
    /// Polyline from `from` to `to`, endpoints included.
    pub geometry: Vec<LonLat>,
    /// Cumulative polyline arclength in metres, same length as `geometry`.
    pub cum_m: Vec<f64>,
}

impl RoadSegment {
    fn polyline_len_m(&self) -> f64 {
        *self.cum_m.last().unwrap_or(&0.0)
    }
}

/// A point snapped onto a segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub seg: SegIdx,
    /// Arclength fraction from the segment's `from` node, in [0, 1].
    pub r: f64,
    pub perp_dist_m: f64,
    pub snapped: LonLat,
}

/// Input description of one segment for [`RoadGraph::build`].
#[derive(Clone, Debug)]
pub struct SegmentSpec {
    pub id: String,
    pub from: String,
    pub to: String,
    pub length_m: f64,
    pub class: RoadClass,
    pub oneway: bool,
    /// Optional polyline including endpoints; straight line when `None`.
    pub geometry: Option<Vec<LonLat>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GraphError {
    DuplicateNode(String),
    DuplicateSegment(String),
    InvalidCoordinate(String),
    UnknownNode {
        segment: String,
        node: String,
    },
    NonPositiveLength {
        segment: String,
    },
    SameEndpoints {
        segment: String,
    },
    TwoWayExpressway {
        segment: String,
    },
    /// Declared length differs from polyline geodesic length by more than 1%.
    LengthMismatch {
        segment: String,
        declared_m: f64,
        polyline_m: f64,
    },
    UnknownNodeId(String),
}

impl core::fmt::Display for GraphError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            GraphError::DuplicateNode(id) => write!(f, "duplicate node id `{id}`"),
            GraphError::DuplicateSegment(id) => write!(f, "duplicate segment id `{id}`"),
            GraphError::InvalidCoordinate(id) => write!(f, "invalid coordinate on `{id}`"),
            GraphError::UnknownNode { segment, node } => {
                write!(f, "segment `{segment}` references missing node `{node}`")
            }
            GraphError::NonPositiveLength { segment } => {
                write!(f, "segment `{segment}` has non-positive length")
            }
            GraphError::SameEndpoints { segment } => {
                write!(f, "segment `{segment}` starts and ends at the same node")
            }
            GraphError::TwoWayExpressway { segment } => {
                write!(f, "expressway segment `{segment}` must be one-way")
            }
            GraphError::LengthMismatch { segment, declared_m, polyline_m } => write!(
                f,
                "segment `{segment}` declared length {declared_m} m differs from polyline length {polyline_m} m by more than 1%"
            ),
            GraphError::UnknownNodeId(id) => write!(f, "unknown node id `{id}`"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for GraphError {}

/// Immutable road network.
#[derive(Clone, Debug)]
pub struct RoadGraph {
    nodes: Vec<RoadNode>,
    segments: Vec<RoadSegment>,
    node_ids: BTreeMap<String, NodeIdx>,
    seg_ids: BTreeMap<String, SegIdx>,
    /// Directed edges leaving each node, sorted by edge index.
    out_edges: Vec<Vec<DirEdge>>,
    grid: Grid,
}

/// Sparse uniform grid over segment bounding boxes. Cells are keyed in
/// integer degree multiples; `candidates` pads the query box by the
/// requested radius, so exactness never depends on the cell size.
#[derive(Clone, Debug)]
struct Grid {
    cell_deg: f64,
    cells: BTreeMap<(i32, i32), Vec<SegIdx>>,
}

impl Grid {
    fn key(&self, p: LonLat) -> (i32, i32) {
        (
            numf::floor(p.lon / self.cell_deg) as i32,
            numf::floor(p.lat / self.cell_deg) as i32,
        )
    }
}

pub const DEFAULT_GRID_CELL_M: f64 = 50.0;

impl RoadGraph {
    /// Validate and index a network. `grid_cell_m` sizes the spatial grid;
    /// pass the largest radius `candidates` will commonly be asked for.
    pub fn build(
        nodes: Vec<(String, LonLat)>,
        segments: Vec<SegmentSpec>,
        grid_cell_m: f64,
    ) -> Result<Self, GraphError> {
        let mut node_ids = BTreeMap::new();
        let mut node_list = Vec::with_capacity(nodes.len());
        for (id, pos) in nodes {
            if !pos.is_valid() {
                return Err(GraphError::InvalidCoordinate(id));
            }
            if node_ids
                .insert(id.clone(), NodeIdx(node_list.len() as u32))
                .is_some()
            {
                return Err(GraphError::DuplicateNode(id));
            }
            node_list.push(RoadNode { id, pos });
        }

        let mut seg_ids = BTreeMap::new();
        let mut seg_list: Vec<RoadSegment> = Vec::with_capacity(segments.len());
        for spec in segments {
            let from = *node_ids
                .get(&spec.from)
                .ok_or_else(|| GraphError::UnknownNode {
                    segment: spec.id.clone(),
                    node: spec.from.clone(),
                })?;
            let to = *node_ids
                .get(&spec.to)
                .ok_or_else(|| GraphError::UnknownNode {
                    segment: spec.id.clone(),
                    node: spec.to.clone(),
                })?;
            if from == to {
                return Err(GraphError::SameEndpoints { segment: spec.id });
            }
            if spec.length_m.is_nan() || spec.length_m <= 0.0 {
                return Err(GraphError::NonPositiveLength { segment: spec.id });
            }
            if spec.class == RoadClass::Expressway && !spec.oneway {
                return Err(GraphError::TwoWayExpressway { segment: spec.id });
            }
            let mut geometry = spec.geometry.unwrap_or_default();
            if geometry.len() < 2 {
                geometry = vec![node_list[from.0 as usize].pos, node_list[to.0 as usize].pos];
            }
            if let Some(p) = geometry.iter().find(|p| !p.is_valid()) {
                let _ = p;
                return Err(GraphError::InvalidCoordinate(spec.id));
            }
            let mut cum_m = Vec::with_capacity(geometry.len());
            cum_m.push(0.0);
            for w in geometry.windows(2) {
                let d = geo::haversine_m(w[0], w[1]);
                cum_m.push(cum_m.last().unwrap() + d);
            }
            let polyline_m = *cum_m.last().unwrap();
            if polyline_m > 0.0 && numf::abs(polyline_m - spec.length_m) > 0.01 * spec.length_m {
                return Err(GraphError::LengthMismatch {
                    segment: spec.id,
                    declared_m: spec.length_m,
                    polyline_m,
                });
            }
            if seg_ids
                .insert(spec.id.clone(), SegIdx(seg_list.len() as u32))
                .is_some()
            {
                return Err(GraphError::DuplicateSegment(spec.id));
            }
            seg_list.push(RoadSegment {
                id: spec.id,
                from,
                to,
                length_m: spec.length_m,
                class: spec.class,
                oneway: spec.oneway,
                geometry,
                cum_m,
            });
        }

        let mut out_edges = vec![Vec::new(); node_list.len()];
        for (i, seg) in seg_list.iter().enumerate() {
            let idx = SegIdx(i as u32);
            out_edges[seg.from.0 as usize].push(DirEdge::forward(idx));
            if !seg.oneway {
                out_edges[seg.to.0 as usize].push(DirEdge::reverse(idx));
            }
        }
        for list in &mut out_edges {
            list.sort_unstable();
        }

        let cell_deg = (grid_cell_m.max(1.0)
            / (geo::EARTH_RADIUS_M * core::f64::consts::PI / 180.0))
            .max(1e-6);
        let mut cells: BTreeMap<(i32, i32), Vec<SegIdx>> = BTreeMap::new();
        for (i, seg) in seg_list.iter().enumerate() {
            let (mut lon_min, mut lon_max) = (f64::INFINITY, f64::NEG_INFINITY);
            let (mut lat_min, mut lat_max) = (f64::INFINITY, f64::NEG_INFINITY);
            for p in &seg.geometry {
                lon_min = lon_min.min(p.lon);
                lon_max = lon_max.max(p.lon);
                lat_min = lat_min.min(p.lat);
                lat_max = lat_max.max(p.lat);
            }
            let x0 = numf::floor(lon_min / cell_deg) as i32;
            let x1 = numf::floor(lon_max / cell_deg) as i32;
            let y0 = numf::floor(lat_min / cell_deg) as i32;
            let y1 = numf::floor(lat_max / cell_deg) as i32;
            for x in x0..=x1 {
                for y in y0..=y1 {
                    cells.entry((x, y)).or_default().push(SegIdx(i as u32));
                }
            }
        }

        Ok(Self {
            nodes: node_list,
            segments: seg_list,
            node_ids,
            seg_ids,
            out_edges,
            grid: Grid { cell_deg, cells },
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }
    pub fn nodes(&self) -> &[RoadNode] {
        &self.nodes
    }
    pub fn segments(&self) -> &[RoadSegment] {
        &self.segments
    }
    pub fn node(&self, idx: NodeIdx) -> &RoadNode {
        &self.nodes[idx.0 as usize]
    }
    pub fn segment(&self, idx: SegIdx) -> &RoadSegment {
        &self.segments[idx.0 as usize]
    }
    pub fn node_idx(&self, id: &str) -> Result<NodeIdx, GraphError> {
        self.node_ids
            .get(id)
            .copied()
            .ok_or_else(|| GraphError::UnknownNodeId(String::from(id)))
    }
    pub fn seg_idx(&self, id: &str) -> Option<SegIdx> {
        self.seg_ids.get(id).copied()
    }

    /// Directed edges leaving `node`, in ascending edge order.
    pub fn out_edges(&self, node: NodeIdx) -> &[DirEdge] {
        &self.out_edges[node.0 as usize]
    }

    /// Node an edge traversal starts at.
    pub fn tail(&self, e: DirEdge) -> NodeIdx {
        let s = self.segment(e.seg());
        if e.is_reverse() {
            s.to
        } else {
            s.from
        }
    }

    /// Node an edge traversal heads to.
    pub fn head(&self, e: DirEdge) -> NodeIdx {
        let s = self.segment(e.seg());
        if e.is_reverse() {
            s.from
        } else {
            s.to
        }
    }

    pub fn edge_len(&self, e: DirEdge) -> f64 {
        self.segment(e.seg()).length_m
    }

    /// Whether the directed traversal exists (reverse of a one-way does not).
    pub fn edge_exists(&self, e: DirEdge) -> bool {
        !(e.is_reverse() && self.segment(e.seg()).oneway)
    }

    /// Position on a segment at arclength fraction `r` from its from-node.
    pub fn interpolate(&self, seg: SegIdx, r: f64) -> LonLat {
        let s = self.segment(seg);
        let target = r.clamp(0.0, 1.0) * s.polyline_len_m();
        let cum = &s.cum_m;
        for i in 1..cum.len() {
            if target <= cum[i] || i == cum.len() - 1 {
                let span = cum[i] - cum[i - 1];
                let t = if span > 0.0 {
                    (target - cum[i - 1]) / span
                } else {
                    0.0
                };
                return geo::lerp(s.geometry[i - 1], s.geometry[i], t.clamp(0.0, 1.0));
            }
        }
        s.geometry[0]
    }

    /// Snap a point onto one segment, minimising the perpendicular distance
    /// over the polyline parts (ties resolved to the smaller arclength).
    pub fn project_onto(&self, seg: SegIdx, p: LonLat) -> Projection {
        let s = self.segment(seg);
        let mut best_d = f64::INFINITY;
        let mut best_arc = 0.0;
        let mut best_pt = s.geometry[0];
        for i in 1..s.geometry.len() {
            let (t, d) = geo::project_onto_chord(p, s.geometry[i - 1], s.geometry[i]);
            if d < best_d {
                best_d = d;
                best_arc = s.cum_m[i - 1] + t * (s.cum_m[i] - s.cum_m[i - 1]);
                best_pt = geo::lerp(s.geometry[i - 1], s.geometry[i], t);
            }
        }
        let total = s.polyline_len_m();
        let r = if total > 0.0 {
            (best_arc / total).clamp(0.0, 1.0)
        } else {
            0.0
        };
        Projection {
            seg,
            r,
            perp_dist_m: best_d,
            snapped: best_pt,
        }
    }

    /// All segments whose geometry comes within `radius_m` of `p`, as
    /// projections sorted by `(perp_dist_m, segment id)`.
    pub fn candidates(&self, p: LonLat, radius_m: f64) -> Vec<Projection> {
        if radius_m.is_nan() || radius_m <= 0.0 {
            return Vec::new();
        }
        let pad_deg = radius_m / (geo::EARTH_RADIUS_M * core::f64::consts::PI / 180.0);
        // Longitude degrees shrink with latitude; pad conservatively.
        let coslat = numf::cos(numf::to_radians(p.lat)).abs().max(0.01);
        let lo = self
            .grid
            .key(LonLat::new(p.lon - pad_deg / coslat, p.lat - pad_deg));
        let hi = self
            .grid
            .key(LonLat::new(p.lon + pad_deg / coslat, p.lat + pad_deg));
        let mut seen: Vec<SegIdx> = Vec::new();
        for x in lo.0..=hi.0 {
            for y in lo.1..=hi.1 {
                if let Some(list) = self.grid.cells.get(&(x, y)) {
                    seen.extend_from_slice(list);
                }
            }
        }
        seen.sort_unstable();
        seen.dedup();
        let mut out: Vec<Projection> = seen
            .into_iter()
            .map(|s| self.project_onto(s, p))
            .filter(|pr| pr.perp_dist_m <= radius_m)
            .collect();
        out.sort_by(|a, b| {
            a.perp_dist_m
                .total_cmp(&b.perp_dist_m)
                .then_with(|| self.segment(a.seg).id.cmp(&self.segment(b.seg).id))
        });
        out
    }

    /// Great-circle distance helper, metres.
    pub fn geo_distance(a: LonLat, b: LonLat) -> f64 {
        geo::haversine_m(a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    pub(crate) fn spec(
        id: &str,
        from: &str,
        to: &str,
        length_m: f64,
        class: RoadClass,
        oneway: bool,
    ) -> SegmentSpec {
        SegmentSpec {
            id: id.to_string(),
            from: from.to_string(),
            to: to.to_string(),
            length_m,
            class,
            oneway,
            geometry: None,
        }
    }

    // ~0.011974 degrees of longitude at latitude 41 is ~1000 m.
    fn line_nodes(n: usize) -> Vec<(String, LonLat)> {
        let step = 1000.0 / (EARTH_M_PER_DEG * numf::cos(numf::to_radians(41.0)));
        (0..n)
            .map(|i| {
                (
                    alloc::format!("n{i}"),
                    LonLat::new(122.0 + i as f64 * step, 41.0),
                )
            })
            .collect()
    }

    const EARTH_M_PER_DEG: f64 = geo::EARTH_RADIUS_M * core::f64::consts::PI / 180.0;

    fn seg_len(a: LonLat, b: LonLat) -> f64 {
        geo::haversine_m(a, b)
    }

    pub(crate) fn line_graph(n_nodes: usize, class: RoadClass, oneway: bool) -> RoadGraph {
        let nodes = line_nodes(n_nodes);
        let segs = (0..n_nodes - 1)
            .map(|i| {
                let len = seg_len(nodes[i].1, nodes[i + 1].1);
                spec(
                    &alloc::format!("s{i}"),
                    &alloc::format!("n{i}"),
                    &alloc::format!("n{}", i + 1),
                    len,
                    class,
                    oneway,
                )
            })
            .collect();
        RoadGraph::build(nodes, segs, DEFAULT_GRID_CELL_M).unwrap()
    }

    #[test]
    fn minimal_two_node_graph() {
        let g = line_graph(2, RoadClass::Trunk, false);
        assert_eq!(g.n_segments(), 1);
        assert!((g.segment(SegIdx(0)).length_m - 1000.0).abs() < 1.0);
    }

    #[test]
    fn missing_node_rejected() {
        let nodes = line_nodes(2);
        let segs = vec![spec("s0", "n0", "nope", 100.0, RoadClass::Trunk, false)];
        match RoadGraph::build(nodes, segs, DEFAULT_GRID_CELL_M) {
            Err(GraphError::UnknownNode { node, .. }) => assert_eq!(node, "nope"),
            other => panic!("expected UnknownNode, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut nodes = line_nodes(2);
        nodes.push(("n0".to_string(), LonLat::new(122.5, 41.0)));
        assert!(matches!(
            RoadGraph::build(nodes, Vec::new(), DEFAULT_GRID_CELL_M),
            Err(GraphError::DuplicateNode(_))
        ));
    }

    #[test]
    fn expressway_must_be_oneway() {
        let nodes = line_nodes(2);
        let len = seg_len(nodes[0].1, nodes[1].1);
        let segs = vec![spec("s0", "n0", "n1", len, RoadClass::Expressway, false)];
        assert!(matches!(
            RoadGraph::build(nodes, segs, DEFAULT_GRID_CELL_M),
            Err(GraphError::TwoWayExpressway { .. })
        ));
    }

    #[test]
    fn length_mismatch_rejected() {
        let nodes = line_nodes(2);
        let segs = vec![spec("s0", "n0", "n1", 5000.0, RoadClass::Trunk, false)];
        assert!(matches!(
            RoadGraph::build(nodes, segs, DEFAULT_GRID_CELL_M),
            Err(GraphError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn candidate_on_midpoint() {
        let g = line_graph(2, RoadClass::Trunk, false);
        let mid = g.interpolate(SegIdx(0), 0.5);
        let cands = g.candidates(mid, 50.0);
        assert_eq!(cands.len(), 1);
        assert!((cands[0].r - 0.5).abs() < 1e-6);
        assert!(cands[0].perp_dist_m < 1e-6);
    }

    #[test]
    fn candidates_sorted_and_filtered() {
        // Two parallel east-west trunk lines 90 m apart.
        let dlat = 90.0 / EARTH_M_PER_DEG;
        let nodes = vec![
            ("a0".to_string(), LonLat::new(122.0, 41.0)),
            ("a1".to_string(), LonLat::new(122.012, 41.0)),
            ("b0".to_string(), LonLat::new(122.0, 41.0 + dlat)),
            ("b1".to_string(), LonLat::new(122.012, 41.0 + dlat)),
        ];
        let la = seg_len(nodes[0].1, nodes[1].1);
        let lb = seg_len(nodes[2].1, nodes[3].1);
        let segs = vec![
            spec("sa", "a0", "a1", la, RoadClass::Trunk, false),
            spec("sb", "b0", "b1", lb, RoadClass::Trunk, false),
        ];
        let g = RoadGraph::build(nodes, segs, DEFAULT_GRID_CELL_M).unwrap();
        // equidistant probe 45 m from both lines: tie broken by segment id
        let probe = LonLat::new(122.006, 41.0 + 45.0 / EARTH_M_PER_DEG);
        let cands = g.candidates(probe, 50.0);
        assert_eq!(cands.len(), 2);
        assert_eq!(g.segment(cands[0].seg).id, "sa");
        assert!(g.candidates(probe, 20.0).is_empty());
        // 30 m vs 60 m case: only the closer line is within a 50 m radius
        let on_a = g.interpolate(SegIdx(0), 0.4);
        let near = LonLat::new(on_a.lon, on_a.lat + 30.0 / EARTH_M_PER_DEG);
        let c = g.candidates(near, 50.0);
        assert_eq!(
            c.len(),
            1,
            "only the 30 m segment qualifies, not the 60 m one"
        );
        assert_eq!(g.segment(c[0].seg).id, "sa");
        let d = geo::haversine_m(near, c[0].snapped);
        assert!((d - 30.0).abs() < 0.5, "perp distance {d}");
    }

    #[test]
    fn square_grid_adjacency_degree_two() {
        // 4-node square: each node has two incident segments (degree 2).
        let d = 0.01;
        let nodes = vec![
            ("n0".to_string(), LonLat::new(122.0, 41.0)),
            ("n1".to_string(), LonLat::new(122.0 + d, 41.0)),
            ("n2".to_string(), LonLat::new(122.0 + d, 41.0 + d)),
            ("n3".to_string(), LonLat::new(122.0, 41.0 + d)),
        ];
        let ids = ["n0", "n1", "n2", "n3"];
        let mut segs = Vec::new();
        for i in 0..4 {
            let a = nodes[i].1;
            let b = nodes[(i + 1) % 4].1;
            segs.push(spec(
                &alloc::format!("e{i}"),
                ids[i],
                ids[(i + 1) % 4],
                seg_len(a, b),
                RoadClass::Trunk,
                false,
            ));
        }
        let g = RoadGraph::build(nodes, segs, DEFAULT_GRID_CELL_M).unwrap();
        // Independently recompute degrees from the segment list.
        let mut degree = [0usize; 4];
        for s in g.segments() {
            degree[s.from.0 as usize] += 1;
            degree[s.to.0 as usize] += 1;
        }
        assert_eq!(degree, [2, 2, 2, 2]);
        for i in 0..4 {
            // bidirectional: out-degree equals node degree
            assert_eq!(g.out_edges(NodeIdx(i)).len(), 2);
        }
    }

    #[test]
    fn projection_round_trip() {
        let g = line_graph(4, RoadClass::Trunk, false);
        for seg in 0..3u32 {
            for k in 0..=10 {
                let r = k as f64 / 10.0;
                let p = g.interpolate(SegIdx(seg), r);
                let pr = g.project_onto(SegIdx(seg), p);
                let back = g.interpolate(SegIdx(seg), pr.r);
                assert!(geo::haversine_m(p, back) < 0.5);
            }
        }
    }
}
