//! HMM map matching with relative driving direction.
//!
//! Hidden states are `(segment, direction)` pairs, so the decision whether
//! a truck drives along or against its segment's intrinsic direction is
//! part of the globally optimal Viterbi path instead of a greedy
//! post-processing step. Emission weights come from the perpendicular snap
//! distance; transition weights compare the directed network route between
//! snapped candidates against the great-circle displacement and the speeds
//! implied by both.

use alloc::vec;
use alloc::vec::Vec;

use crate::geo::{self, LonLat};
use crate::graph::{DirEdge, Projection, RoadGraph};
use crate::numf;
use crate::route::Router;
use crate::TruckId;

/// Driving direction relative to the matched segment's from→to direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dir {
    Along,
    Against,
}

impl Dir {
    /// Numeric code used in file formats: 0 = along, -1 = against.
    pub fn code(self) -> i32 {
        match self {
            Dir::Along => 0,
            Dir::Against => -1,
        }
    }

    pub fn from_code(code: i32) -> Option<Self> {
        match code {
            0 => Some(Dir::Along),
            -1 => Some(Dir::Against),
            _ => None,
        }
    }
}

/// One raw GPS observation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruckPoint {
    pub truck: TruckId,
    /// Seconds since epoch.
    pub ts: i64,
    pub pos: LonLat,
    pub altitude_m: f64,
    pub speed_mps: Option<f64>,
}

/// One observation snapped to the network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchedPoint {
    pub truck: TruckId,
    pub ts: i64,
    pub seg: crate::graph::SegIdx,
    pub r: f64,
    pub dir: Dir,
    pub snapped: LonLat,
    pub altitude_m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HmmParams {
    pub match_radius_m: f64,
    pub emission_sigma_m: f64,
    pub transition_beta_m: f64,
    pub speed_weight: f64,
    /// Maximum consecutive unmatchable observations bridged by routing from
    /// the last matched state before the trajectory is split.
    pub max_skip: u32,
    /// Observations implying a speed above this against their predecessor
    /// are dropped as low-quality fixes.
    pub max_speed_mps: f64,
}

impl Default for HmmParams {
    fn default() -> Self {
        Self {
            match_radius_m: 50.0,
            emission_sigma_m: 20.0,
            transition_beta_m: 200.0,
            speed_weight: 0.05,
            max_skip: 4,
            max_speed_mps: 50.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MatchError {
    /// Fewer than two observations could be matched to the network.
    TooFewMatchable {
        matchable: usize,
    },
    NonPositiveTimeGap,
}

impl core::fmt::Display for MatchError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MatchError::TooFewMatchable { matchable } => {
                write!(
                    f,
                    "trajectory rejected: only {matchable} matchable observation(s)"
                )
            }
            MatchError::NonPositiveTimeGap => {
                write!(f, "non-positive time gap between observations")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MatchError {}

/// Gaussian snap-distance density. Maximal at zero distance, monotone
/// decreasing, `1/(sigma*sqrt(2*pi))` at the mode.
pub fn emission_prob(proj: &Projection, params: &HmmParams) -> f64 {
    let sigma = params.emission_sigma_m;
    let z = proj.perp_dist_m / sigma;
    numf::exp(-0.5 * z * z) / (sigma * numf::sqrt(2.0 * core::f64::consts::PI))
}

/// A candidate hidden state: a directed segment hypothesis for one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub edge: DirEdge,
    pub r: f64,
    pub perp_dist_m: f64,
    pub snapped: LonLat,
}

impl Candidate {
    pub fn dir(&self) -> Dir {
        if self.edge.is_reverse() {
            Dir::Against
        } else {
            Dir::Along
        }
    }
    /// Distance already travelled along the directed edge, metres.
    fn progress_m(&self, graph: &RoadGraph) -> f64 {
        let len = graph.edge_len(self.edge);
        if self.edge.is_reverse() {
            (1.0 - self.r) * len
        } else {
            self.r * len
        }
    }
}

/// Directed network distance between two candidate states, or `None` when
/// no route exists within the cutoff (infeasible transition).
fn route_distance(
    graph: &RoadGraph,
    router: &mut Router,
    prev: &Candidate,
    next: &Candidate,
    cutoff_m: f64,
) -> Option<f64> {
    if prev.edge == next.edge {
        let delta = next.progress_m(graph) - prev.progress_m(graph);
        if delta >= 0.0 {
            return Some(delta);
        }
        // Moving backwards on the same directed edge requires a loop.
    }
    let remaining = graph.edge_len(prev.edge) - prev.progress_m(graph);
    let goal = [next.edge];
    let d = router.edge_to_edges(graph, prev.edge, &goal, cutoff_m)[0]?;
    Some(remaining + d - (graph.edge_len(next.edge) - next.progress_m(graph)))
}

/// Transition density between two candidate states given the observed
/// great-circle displacement `gc_m` over `dt_s` seconds.
pub fn transition_prob(
    prev: &Candidate,
    next: &Candidate,
    gc_m: f64,
    dt_s: f64,
    graph: &RoadGraph,
    params: &HmmParams,
) -> Result<f64, MatchError> {
    let ln = transition_ln(
        prev,
        next,
        gc_m,
        dt_s,
        graph,
        &mut Router::new(graph),
        params,
    )?;
    Ok(numf::exp(ln))
}

/// Log-space transition weight; `-inf` marks an infeasible pair.
pub fn transition_ln(
    prev: &Candidate,
    next: &Candidate,
    gc_m: f64,
    dt_s: f64,
    graph: &RoadGraph,
    router: &mut Router,
    params: &HmmParams,
) -> Result<f64, MatchError> {
    if dt_s <= 0.0 {
        return Err(MatchError::NonPositiveTimeGap);
    }
    let cutoff = transition_cutoff_m(gc_m, dt_s, params);
    let route = match route_distance(graph, router, prev, next, cutoff) {
        Some(d) => d.max(0.0),
        None => return Ok(f64::NEG_INFINITY),
    };
    let drift = numf::abs(route - gc_m);
    Ok(-drift / params.transition_beta_m - params.speed_weight * drift / dt_s)
}

fn transition_cutoff_m(gc_m: f64, dt_s: f64, params: &HmmParams) -> f64 {
    // Generous bound: twice the straight-line displacement plus slack for
    // route curvature, capped by what the speed filter allows.
    let by_speed = params.max_speed_mps * 1.5 * dt_s;
    (2.0 * gc_m + 4.0 * params.transition_beta_m).max(by_speed)
}

/// Candidate lattice for one contiguous chain of matchable observations.
#[derive(Clone, Debug)]
pub struct Lattice {
    /// Index into the original (filtered) point list per step.
    pub point_of_step: Vec<usize>,
    /// Candidate states per step, sorted by (segment id, dir).
    pub states: Vec<Vec<Candidate>>,
    /// Natural log of the emission density per state per step.
    pub emission_ln: Vec<Vec<f64>>,
    /// Observation gap (great-circle metres, seconds) between steps k and k+1.
    pub gaps: Vec<(f64, f64)>,
}

/// Build the candidate lattice for a run of points (all matchable).
pub fn build_lattice(points: &[TruckPoint], graph: &RoadGraph, params: &HmmParams) -> Lattice {
    let mut states = Vec::with_capacity(points.len());
    let mut emission_ln = Vec::with_capacity(points.len());
    for p in points {
        let mut cands: Vec<Candidate> = Vec::new();
        for proj in graph.candidates(p.pos, params.match_radius_m) {
            let forward = Candidate {
                edge: DirEdge::forward(proj.seg),
                r: proj.r,
                perp_dist_m: proj.perp_dist_m,
                snapped: proj.snapped,
            };
            cands.push(forward);
            if !graph.segment(proj.seg).oneway {
                cands.push(Candidate {
                    edge: DirEdge::reverse(proj.seg),
                    ..forward
                });
            }
        }
        cands.sort_by(|a, b| {
            graph
                .segment(a.edge.seg())
                .id
                .cmp(&graph.segment(b.edge.seg()).id)
                .then(a.edge.is_reverse().cmp(&b.edge.is_reverse()))
        });
        let ems: Vec<f64> = cands
            .iter()
            .map(|c| {
                let proj = Projection {
                    seg: c.edge.seg(),
                    r: c.r,
                    perp_dist_m: c.perp_dist_m,
                    snapped: c.snapped,
                };
                numf::ln(emission_prob(&proj, params))
            })
            .collect();
        states.push(cands);
        emission_ln.push(ems);
    }
    let gaps = points
        .windows(2)
        .map(|w| {
            (
                geo::haversine_m(w[0].pos, w[1].pos),
                (w[1].ts - w[0].ts) as f64,
            )
        })
        .collect();
    Lattice {
        point_of_step: (0..points.len()).collect(),
        states,
        emission_ln,
        gaps,
    }
}

/// Viterbi decode over a lattice: per-step index of the chosen state, or
/// `None` when the chain broke at that step (no feasible predecessor).
/// Ties keep the first (lowest `(segment id, dir)`) state.
pub fn viterbi(graph: &RoadGraph, lattice: &Lattice, params: &HmmParams) -> Vec<Option<usize>> {
    let n = lattice.states.len();
    let mut chosen: Vec<Option<usize>> = vec![None; n];
    if n == 0 {
        return chosen;
    }
    let mut router = Router::new(graph);
    let mut score: Vec<f64> = lattice.emission_ln[0].clone();
    let mut parent: Vec<Vec<usize>> = Vec::with_capacity(n);
    parent.push(Vec::new());
    // chain segmentation: remember where the current chain started
    let mut chain_start = 0usize;
    let mut chain_starts: Vec<usize> = vec![0];

    for k in 1..n {
        let (gc, dt) = lattice.gaps[k - 1];
        let prev_states = &lattice.states[k - 1];
        let next_states = &lattice.states[k];
        let mut next_score = vec![f64::NEG_INFINITY; next_states.len()];
        let mut next_parent = vec![usize::MAX; next_states.len()];
        for (i, ps) in prev_states.iter().enumerate() {
            if score[i] == f64::NEG_INFINITY {
                continue;
            }
            let cutoff = transition_cutoff_m(gc, dt, params);
            let goals: Vec<DirEdge> = next_states.iter().map(|s| s.edge).collect();
            // one bounded search per predecessor state reaches every goal
            let mut direct: Vec<Option<f64>> = vec![None; goals.len()];
            let mut need_route = false;
            for (j, ns) in next_states.iter().enumerate() {
                if ps.edge == ns.edge {
                    let delta = ns.progress_m(graph) - ps.progress_m(graph);
                    if delta >= 0.0 {
                        direct[j] = Some(delta);
                        continue;
                    }
                }
                need_route = true;
            }
            let routed = if need_route {
                router.edge_to_edges(graph, ps.edge, &goals, cutoff)
            } else {
                vec![None; goals.len()]
            };
            for (j, ns) in next_states.iter().enumerate() {
                let route = match direct[j] {
                    Some(d) => Some(d),
                    None => routed[j].map(|d| {
                        let remaining = graph.edge_len(ps.edge) - ps.progress_m(graph);
                        (remaining + d - (graph.edge_len(ns.edge) - ns.progress_m(graph))).max(0.0)
                    }),
                };
                let trans_ln = match route {
                    Some(rd) => {
                        let drift = numf::abs(rd - gc);
                        -drift / params.transition_beta_m - params.speed_weight * drift / dt
                    }
                    None => f64::NEG_INFINITY,
                };
                if trans_ln == f64::NEG_INFINITY {
                    continue;
                }
                let cand = score[i] + trans_ln + lattice.emission_ln[k][j];
                if cand > next_score[j] {
                    next_score[j] = cand;
                    next_parent[j] = i;
                }
            }
        }
        if next_score.iter().all(|s| *s == f64::NEG_INFINITY) {
            // dead end: finalize the chain ending at k-1 and restart fresh
            backtrace(&mut chosen, &parent, &score, chain_start, k - 1);
            chain_start = k;
            chain_starts.push(k);
            score = lattice.emission_ln[k].clone();
            parent.push(Vec::new());
        } else {
            score = next_score;
            parent.push(next_parent);
        }
    }
    backtrace(&mut chosen, &parent, &score, chain_start, n - 1);
    chosen
}

fn backtrace(
    chosen: &mut [Option<usize>],
    parent: &[Vec<usize>],
    final_score: &[f64],
    chain_start: usize,
    last: usize,
) {
    if final_score.is_empty() {
        return;
    }
    let mut best = 0usize;
    for (i, s) in final_score.iter().enumerate() {
        if *s > final_score[best] {
            best = i;
        }
    }
    if final_score[best] == f64::NEG_INFINITY {
        return;
    }
    let mut k = last;
    let mut state = best;
    loop {
        chosen[k] = Some(state);
        if k == chain_start {
            break;
        }
        state = parent[k][state];
        if state == usize::MAX {
            break;
        }
        k -= 1;
    }
}

/// Match one truck's trajectory. Points are deduplicated, speed-filtered,
/// and runs of unmatchable points up to `max_skip` long are bridged; the
/// result is the Viterbi-optimal `(segment, dir)` sequence for every
/// surviving observation.
pub fn match_trajectory(
    points: &[TruckPoint],
    graph: &RoadGraph,
    params: &HmmParams,
) -> Result<Vec<MatchedPoint>, MatchError> {
    // ingestion filter: strictly increasing timestamps, plausible speeds
    let mut kept: Vec<TruckPoint> = Vec::with_capacity(points.len());
    for p in points {
        match kept.last() {
            None => kept.push(*p),
            Some(prev) => {
                if p.ts <= prev.ts {
                    continue;
                }
                let v = geo::haversine_m(prev.pos, p.pos) / (p.ts - prev.ts) as f64;
                if v <= params.max_speed_mps {
                    kept.push(*p);
                }
            }
        }
    }

    // split into chains at runs of more than max_skip unmatchable points
    let mut matchable: Vec<bool> = Vec::with_capacity(kept.len());
    for p in &kept {
        matchable.push(!graph.candidates(p.pos, params.match_radius_m).is_empty());
    }
    let total_matchable = matchable.iter().filter(|m| **m).count();
    if total_matchable < 2 {
        return Err(MatchError::TooFewMatchable {
            matchable: total_matchable,
        });
    }

    let mut out: Vec<MatchedPoint> = Vec::new();
    let mut chain: Vec<TruckPoint> = Vec::new();
    let mut skipped_run = 0u32;
    for (i, p) in kept.iter().enumerate() {
        if matchable[i] {
            skipped_run = 0;
            chain.push(*p);
        } else {
            skipped_run += 1;
            if skipped_run > params.max_skip && !chain.is_empty() {
                decode_chain(&chain, graph, params, &mut out);
                chain.clear();
            }
        }
    }
    decode_chain(&chain, graph, params, &mut out);
    if out.len() < 2 {
        return Err(MatchError::TooFewMatchable {
            matchable: out.len(),
        });
    }
    Ok(out)
}

fn decode_chain(
    chain: &[TruckPoint],
    graph: &RoadGraph,
    params: &HmmParams,
    out: &mut Vec<MatchedPoint>,
) {
    if chain.is_empty() {
        return;
    }
    let lattice = build_lattice(chain, graph, params);
    let chosen = viterbi(graph, &lattice, params);
    for (k, sel) in chosen.iter().enumerate() {
        if let Some(j) = sel {
            let c = &lattice.states[k][*j];
            let p = &chain[lattice.point_of_step[k]];
            out.push(MatchedPoint {
                truck: p.truck,
                ts: p.ts,
                seg: c.edge.seg(),
                r: c.r,
                dir: c.dir(),
                snapped: c.snapped,
                altitude_m: p.altitude_m,
            });
        }
    }
}
