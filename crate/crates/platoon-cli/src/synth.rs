//! Synthetic road networks and trajectories with planted ground truth.
//!
//! Scenarios are deterministic for a fixed seed (ChaCha8 throughout, so
//! fixtures are bit-reproducible across platforms). Noise is applied after
//! the ground truth is captured.

use std::collections::BTreeMap;

use platoon_core::geo::{haversine_m, LonLat};
use platoon_core::graph::{DirEdge, RoadClass, RoadGraph, SegmentSpec};
use platoon_core::mapmatch::Dir;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::formats::RawPoint;

const M_PER_DEG: f64 = 111_194.92664455873; // EARTH_RADIUS_M * pi / 180
const BASE_LON: f64 = 122.0;
const BASE_LAT: f64 = 41.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Template {
    /// Single bidirectional trunk corridor.
    Line,
    /// Square grid of bidirectional trunk roads.
    Grid,
    /// Trunk corridor meeting a one-way expressway carriageway pair.
    Junction,
    /// Two trunk corridors 30 m apart, joined only at their far ends.
    Parallel,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub seed: u64,
    pub template: Template,
    /// Nodes per corridor (line/parallel) or per grid side.
    pub nodes: usize,
    pub seg_len_m: f64,
    /// Constant grade along the corridor, percent (line template only).
    pub grade_pct: f64,
    pub n_background: usize,
    pub background_speed_mps: [f64; 2],
    /// Background trip length in seconds; 0 keeps trucks active until the
    /// scenario ends.
    pub background_trip_s: u32,
    pub noise_sigma_m: f64,
    pub dropout_prob: f64,
    /// Max absolute sampling jitter, seconds.
    pub jitter_s: u32,
    pub sample_period_s: u32,
    pub duration_s: u32,
    /// Epoch of timestep 0.
    pub t0: i64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            seed: 1,
            template: Template::Line,
            nodes: 15,
            seg_len_m: 1000.0,
            grade_pct: 0.0,
            n_background: 0,
            background_speed_mps: [12.0, 25.0],
            background_trip_s: 0,
            noise_sigma_m: 0.0,
            dropout_prob: 0.0,
            jitter_s: 0,
            sample_period_s: 15,
            duration_s: 3600,
            t0: 1_600_000_200,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlatoonSpec {
    pub n_members: usize,
    /// Segment ids of the route; template default route when empty.
    pub route: Vec<String>,
    /// Traverse the route from its far end backwards.
    pub reverse: bool,
    /// Arc position of the lead truck at `start_s`, metres from the route
    /// start. Must leave room for the followers behind.
    pub start_offset_m: f64,
    pub speed_mps: f64,
    pub headway_m: f64,
    pub start_s: u32,
    pub end_s: u32,
    /// Corridor key for the parallel template ("a" or "b").
    pub corridor: String,
}

impl Default for PlatoonSpec {
    fn default() -> Self {
        Self {
            n_members: 3,
            route: Vec::new(),
            reverse: false,
            start_offset_m: 600.0,
            speed_mps: 20.0,
            headway_m: 150.0,
            start_s: 0,
            end_s: 600,
            corridor: "a".into(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub scenario: ScenarioSection,
    #[serde(default, rename = "platoon")]
    pub platoons: Vec<PlatoonSpec>,
}

impl ScenarioSpec {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        toml::from_str(text).map_err(|e| SynthError::Spec(e.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    Spec(String),
    #[error("infeasible platoon {index}: {reason}")]
    Infeasible { index: usize, reason: String },
}

/// What the generator knows to be true, before any noise.
#[derive(Clone, Debug, Default)]
pub struct GroundTruth {
    /// Per grid step (15 s by default): the true co-driving sets.
    pub sets_by_step: BTreeMap<u32, Vec<Vec<String>>>,
    pub patterns: Vec<TruePattern>,
    /// Noiseless (segment, dir) per emitted observation, keyed by
    /// (truck id, timestamp).
    pub sample_truth: BTreeMap<(String, i64), (String, Dir)>,
    /// Constant speed per truck, m/s.
    pub speeds: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruePattern {
    pub members: Vec<String>,
    pub first_step: u32,
    pub last_step: u32,
    /// Group travel distance across the window, metres.
    pub distance_m: f64,
    pub headway_m: f64,
}

/// One truck moving along a fixed directed route at constant speed.
struct MovingTruck {
    id: String,
    route: Vec<DirEdge>,
    cum_m: Vec<f64>,
    start_s: u32,
    end_s: u32,
    speed_mps: f64,
    /// Arc position at `start_s`.
    offset0_m: f64,
    /// Altitude gradient per metre of arc (corridor scenarios).
    grade: f64,
}

impl MovingTruck {
    fn total_m(&self) -> f64 {
        *self.cum_m.last().unwrap()
    }

    fn arc_at(&self, t_s: f64) -> Option<f64> {
        if t_s < self.start_s as f64 || t_s > self.end_s as f64 {
            return None;
        }
        let arc = self.offset0_m + self.speed_mps * (t_s - self.start_s as f64);
        (arc >= 0.0 && arc <= self.total_m()).then_some(arc)
    }

    /// (segment id implied by edge, r, dir, position, altitude).
    fn place(&self, graph: &RoadGraph, arc: f64) -> (DirEdge, f64, LonLat, f64) {
        let mut k = match self.cum_m.binary_search_by(|c| c.total_cmp(&arc)) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        k = k.min(self.route.len() - 1);
        let edge = self.route[k];
        let within = arc - self.cum_m[k];
        let len = graph.edge_len(edge);
        let along = (within / len).clamp(0.0, 1.0);
        let r = if edge.is_reverse() {
            1.0 - along
        } else {
            along
        };
        let pos = graph.interpolate(edge.seg(), r);
        let altitude = self.grade * arc;
        (edge, r, pos, altitude)
    }
}

/// Build the template network.
pub fn build_template(s: &ScenarioSection) -> RoadGraph {
    // east-west spacing needs the cos(lat) correction
    let dlon = s.seg_len_m / (M_PER_DEG * BASE_LAT.to_radians().cos());
    let dlat = s.seg_len_m / M_PER_DEG;
    let mut nodes: Vec<(String, LonLat)> = Vec::new();
    let mut segs: Vec<SegmentSpec> = Vec::new();
    let seg =
        |id: String, from: &str, to: &str, a: LonLat, b: LonLat, class: RoadClass, oneway: bool| {
            SegmentSpec {
                id,
                from: from.into(),
                to: to.into(),
                length_m: haversine_m(a, b),
                class,
                oneway,
                geometry: None,
            }
        };
    match s.template {
        Template::Line => {
            for i in 0..s.nodes {
                nodes.push((
                    format!("n{i}"),
                    LonLat::new(BASE_LON + i as f64 * dlon, BASE_LAT),
                ));
            }
            for i in 0..s.nodes - 1 {
                let (a, b) = (nodes[i].1, nodes[i + 1].1);
                segs.push(seg(
                    format!("s{i}"),
                    &format!("n{i}"),
                    &format!("n{}", i + 1),
                    a,
                    b,
                    RoadClass::Trunk,
                    false,
                ));
            }
        }
        Template::Grid => {
            let w = s.nodes;
            for r in 0..w {
                for c in 0..w {
                    nodes.push((
                        format!("n{r}_{c}"),
                        LonLat::new(BASE_LON + c as f64 * dlon, BASE_LAT + r as f64 * dlat),
                    ));
                }
            }
            for r in 0..w {
                for c in 0..w - 1 {
                    let (a, b) = (nodes[r * w + c].1, nodes[r * w + c + 1].1);
                    segs.push(seg(
                        format!("h{r}_{c}"),
                        &format!("n{r}_{c}"),
                        &format!("n{r}_{}", c + 1),
                        a,
                        b,
                        RoadClass::Trunk,
                        false,
                    ));
                }
            }
            for r in 0..w - 1 {
                for c in 0..w {
                    let (a, b) = (nodes[r * w + c].1, nodes[(r + 1) * w + c].1);
                    segs.push(seg(
                        format!("v{r}_{c}"),
                        &format!("n{r}_{c}"),
                        &format!("n{}_{c}", r + 1),
                        a,
                        b,
                        RoadClass::Trunk,
                        false,
                    ));
                }
            }
        }
        Template::Junction => {
            // west-east trunk corridor with a one-way expressway
            // carriageway pair branching north at the middle node
            let n = s.nodes.max(4);
            for i in 0..n {
                nodes.push((
                    format!("n{i}"),
                    LonLat::new(BASE_LON + i as f64 * dlon, BASE_LAT),
                ));
            }
            for i in 0..n - 1 {
                let (a, b) = (nodes[i].1, nodes[i + 1].1);
                segs.push(seg(
                    format!("t{i}"),
                    &format!("n{i}"),
                    &format!("n{}", i + 1),
                    a,
                    b,
                    RoadClass::Trunk,
                    false,
                ));
            }
            let mid = n / 2;
            let mid_pos = nodes[mid].1;
            let side = 20.0 / (M_PER_DEG * BASE_LAT.to_radians().cos()); // carriageways 40 m apart
            for k in 0..2 {
                let y = BASE_LAT + (k + 1) as f64 * dlat;
                nodes.push((format!("xn{k}"), LonLat::new(mid_pos.lon - side, y)));
                nodes.push((format!("xs{k}"), LonLat::new(mid_pos.lon + side, y)));
            }
            // northbound: mid -> xn0 -> xn1; southbound: xs1 -> xs0 -> mid
            let g = |name: &str| nodes.iter().find(|(id, _)| id == name).unwrap().1;
            segs.push(seg(
                "en0".into(),
                &format!("n{mid}"),
                "xn0",
                mid_pos,
                g("xn0"),
                RoadClass::Expressway,
                true,
            ));
            segs.push(seg(
                "en1".into(),
                "xn0",
                "xn1",
                g("xn0"),
                g("xn1"),
                RoadClass::Expressway,
                true,
            ));
            segs.push(seg(
                "es0".into(),
                "xs1",
                "xs0",
                g("xs1"),
                g("xs0"),
                RoadClass::Expressway,
                true,
            ));
            segs.push(seg(
                "es1".into(),
                "xs0",
                &format!("n{mid}"),
                g("xs0"),
                mid_pos,
                RoadClass::Expressway,
                true,
            ));
        }
        Template::Parallel => {
            let gap = 30.0 / M_PER_DEG; // the 30 m parallel-corridor hazard
            for i in 0..s.nodes {
                nodes.push((
                    format!("a{i}"),
                    LonLat::new(BASE_LON + i as f64 * dlon, BASE_LAT),
                ));
            }
            for i in 0..s.nodes {
                nodes.push((
                    format!("b{i}"),
                    LonLat::new(BASE_LON + i as f64 * dlon, BASE_LAT + gap),
                ));
            }
            for i in 0..s.nodes - 1 {
                let (a1, a2) = (nodes[i].1, nodes[i + 1].1);
                segs.push(seg(
                    format!("a{i}"),
                    &format!("a{i}"),
                    &format!("a{}", i + 1),
                    a1,
                    a2,
                    RoadClass::Trunk,
                    false,
                ));
                let (b1, b2) = (nodes[s.nodes + i].1, nodes[s.nodes + i + 1].1);
                segs.push(seg(
                    format!("b{i}"),
                    &format!("b{i}"),
                    &format!("b{}", i + 1),
                    b1,
                    b2,
                    RoadClass::Trunk,
                    false,
                ));
            }
            // connect only the corridor ends
            segs.push(seg(
                "ca".into(),
                "a0",
                "b0",
                nodes[0].1,
                nodes[s.nodes].1,
                RoadClass::Trunk,
                false,
            ));
            segs.push(seg(
                "cb".into(),
                &format!("a{}", s.nodes - 1),
                &format!("b{}", s.nodes - 1),
                nodes[s.nodes - 1].1,
                nodes[2 * s.nodes - 1].1,
                RoadClass::Trunk,
                false,
            ));
        }
    }
    RoadGraph::build(nodes, segs, 50.0).expect("template networks are valid")
}

/// Default platoon route per template/corridor: the full corridor.
fn default_route(s: &ScenarioSection, corridor: &str) -> Vec<String> {
    match s.template {
        Template::Line => (0..s.nodes - 1).map(|i| format!("s{i}")).collect(),
        Template::Grid => (0..s.nodes - 1).map(|i| format!("h0_{i}")).collect(),
        Template::Junction => (0..s.nodes.max(4) - 1).map(|i| format!("t{i}")).collect(),
        Template::Parallel => (0..s.nodes - 1).map(|i| format!("{corridor}{i}")).collect(),
    }
}

/// Resolve a segment-id route into directed edges by chaining endpoints.
fn resolve_route(graph: &RoadGraph, ids: &[String], reverse: bool) -> Result<Vec<DirEdge>, String> {
    let mut ids: Vec<&String> = ids.iter().collect();
    if reverse {
        ids.reverse();
    }
    let mut segs = Vec::with_capacity(ids.len());
    for id in &ids {
        segs.push(
            graph
                .seg_idx(id)
                .ok_or_else(|| format!("unknown segment `{id}`"))?,
        );
    }
    let mut edges = Vec::with_capacity(segs.len());
    for (i, &s) in segs.iter().enumerate() {
        let (from, to) = {
            let seg = graph.segment(s);
            (seg.from, seg.to)
        };
        let forward = if segs.len() == 1 {
            !reverse
        } else if i + 1 < segs.len() {
            let next = graph.segment(segs[i + 1]);
            to == next.from || to == next.to
        } else {
            let prev_exit = graph.head(edges[i - 1]);
            from == prev_exit
        };
        let edge = if forward {
            DirEdge::forward(s)
        } else {
            DirEdge::reverse(s)
        };
        if !graph.edge_exists(edge) {
            return Err(format!(
                "route traverses one-way segment `{}` backwards",
                graph.segment(s).id
            ));
        }
        if i > 0 && graph.tail(edge) != graph.head(edges[i - 1]) {
            return Err(format!("route breaks at segment `{}`", graph.segment(s).id));
        }
        edges.push(edge);
    }
    Ok(edges)
}

fn cum_lengths(graph: &RoadGraph, route: &[DirEdge]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(route.len() + 1);
    cum.push(0.0);
    for e in route {
        cum.push(cum.last().unwrap() + graph.edge_len(*e));
    }
    cum
}

/// Deterministic standard normal via Box-Muller.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Generate the scenario. Returns the network, the raw trajectory rows
/// (time-sorted per truck) and the ground truth captured before noise.
pub fn generate(
    spec: &ScenarioSpec,
) -> Result<(RoadGraph, Vec<RawPoint>, GroundTruth), SynthError> {
    let s = &spec.scenario;
    if s.t0 % 15 != 0 {
        return Err(SynthError::Spec(
            "t0 must be a multiple of the 15 s grid".into(),
        ));
    }
    let graph = build_template(s);
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let eps_m = 1000.0;

    let mut trucks: Vec<MovingTruck> = Vec::new();
    let mut truth = GroundTruth::default();
    let grade = s.grade_pct / 100.0;

    for (pi, p) in spec.platoons.iter().enumerate() {
        if p.n_members < 2 {
            return Err(SynthError::Infeasible {
                index: pi,
                reason: "a platoon needs at least 2 members".into(),
            });
        }
        if p.headway_m >= eps_m {
            return Err(SynthError::Infeasible {
                index: pi,
                reason: format!("headway {} m must stay below eps = {eps_m} m", p.headway_m),
            });
        }
        if p.end_s <= p.start_s {
            return Err(SynthError::Infeasible {
                index: pi,
                reason: "end_s must exceed start_s".into(),
            });
        }
        let ids = if p.route.is_empty() {
            default_route(s, &p.corridor)
        } else {
            p.route.clone()
        };
        let route = resolve_route(&graph, &ids, p.reverse)
            .map_err(|reason| SynthError::Infeasible { index: pi, reason })?;
        let cum = cum_lengths(&graph, &route);
        let total = *cum.last().unwrap();
        let tail_offset = p.start_offset_m - (p.n_members - 1) as f64 * p.headway_m;
        if tail_offset < 0.0 {
            return Err(SynthError::Infeasible {
                index: pi,
                reason: "start_offset_m leaves followers before the route start".into(),
            });
        }
        let travel = p.speed_mps * (p.end_s - p.start_s) as f64;
        if p.start_offset_m + travel > total {
            return Err(SynthError::Infeasible {
                index: pi,
                reason: format!(
                    "route is {total:.0} m but the platoon needs {:.0} m",
                    p.start_offset_m + travel
                ),
            });
        }
        let mut members = Vec::new();
        for m in 0..p.n_members {
            let id = format!("p{pi}_{m}");
            members.push(id.clone());
            truth.speeds.insert(id.clone(), p.speed_mps);
            trucks.push(MovingTruck {
                id,
                route: route.clone(),
                cum_m: cum.clone(),
                start_s: p.start_s,
                end_s: p.end_s,
                speed_mps: p.speed_mps,
                offset0_m: p.start_offset_m - m as f64 * p.headway_m,
                grade: if s.template == Template::Line {
                    grade
                } else {
                    0.0
                },
            });
        }
        let grid = 15u32;
        let first_step = p.start_s.div_ceil(grid);
        let last_step = p.end_s / grid;
        truth.patterns.push(TruePattern {
            members: members.clone(),
            first_step,
            last_step,
            distance_m: p.speed_mps * (last_step - first_step) as f64 * grid as f64,
            headway_m: p.headway_m,
        });
        for k in first_step..=last_step {
            truth
                .sets_by_step
                .entry(k)
                .or_default()
                .push(members.clone());
        }
    }

    // background trucks: random walks with random speeds and windows
    for b in 0..s.n_background {
        let id = format!("bg{b:03}");
        let speed = rng.gen_range(s.background_speed_mps[0]..=s.background_speed_mps[1]);
        let start_s = rng.gen_range(0..s.duration_s.max(1));
        let end_s = if s.background_trip_s > 0 {
            (start_s + s.background_trip_s).min(s.duration_s)
        } else {
            s.duration_s
        };
        let need_m = speed * (end_s - start_s) as f64 + 100.0;
        let mut at = platoon_core::graph::NodeIdx(rng.gen_range(0..graph.n_nodes() as u32));
        let mut route: Vec<DirEdge> = Vec::new();
        let mut acc = 0.0;
        while acc < need_m {
            let options: Vec<DirEdge> = graph
                .out_edges(at)
                .iter()
                .copied()
                .filter(|e| route.last().map_or(true, |l| *e != l.opposite()))
                .collect();
            let Some(&edge) = options
                .get(rng.gen_range(0..options.len().max(1)))
                .or(options.first())
            else {
                break;
            };
            route.push(edge);
            acc += graph.edge_len(edge);
            at = graph.head(edge);
        }
        if route.is_empty() {
            continue;
        }
        truth.speeds.insert(id.clone(), speed);
        trucks.push(MovingTruck {
            id,
            cum_m: cum_lengths(&graph, &route),
            route,
            start_s,
            end_s,
            speed_mps: speed,
            offset0_m: 0.0,
            grade: 0.0,
        });
    }

    // sample observations truck by truck
    let mut rows: Vec<RawPoint> = Vec::new();
    for truck in &trucks {
        let mut t = truck.start_s as i64;
        let mut last_ts = i64::MIN;
        while t <= truck.end_s as i64 {
            let jitter = if s.jitter_s > 0 {
                rng.gen_range(-(s.jitter_s as i64)..=s.jitter_s as i64)
            } else {
                0
            };
            let ts = (t + jitter).clamp(truck.start_s as i64, truck.end_s as i64);
            let dropped = s.dropout_prob > 0.0 && rng.gen::<f64>() < s.dropout_prob;
            if let Some(arc) = truck.arc_at(ts as f64) {
                if !dropped && ts > last_ts {
                    let (edge, _r, pos, altitude) = truck.place(&graph, arc);
                    let dir = if edge.is_reverse() {
                        Dir::Against
                    } else {
                        Dir::Along
                    };
                    truth.sample_truth.insert(
                        (truck.id.clone(), s.t0 + ts),
                        (graph.segment(edge.seg()).id.clone(), dir),
                    );
                    let (dlon, dlat) = if s.noise_sigma_m > 0.0 {
                        let east = normal(&mut rng) * s.noise_sigma_m;
                        let north = normal(&mut rng) * s.noise_sigma_m;
                        let coslat = (pos.lat.to_radians()).cos();
                        (east / (M_PER_DEG * coslat), north / M_PER_DEG)
                    } else {
                        (0.0, 0.0)
                    };
                    rows.push(RawPoint {
                        truck_id: truck.id.clone(),
                        ts: s.t0 + ts,
                        lon: pos.lon + dlon,
                        lat: pos.lat + dlat,
                        altitude_m: altitude,
                        speed_mps: Some(truck.speed_mps),
                    });
                    last_ts = ts;
                }
            }
            t += s.sample_period_s as i64;
        }
    }
    Ok((graph, rows, truth))
}
