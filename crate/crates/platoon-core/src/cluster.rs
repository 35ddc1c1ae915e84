//! Instantaneous co-driving set detection: OPTICS ordering under the
//! following-distance metric, then reachability-plot valley refinement.
//!
//! The refinement walks each core-distance valley and classifies boundary
//! trucks by the angle `theta` and rate `lambda` of the reachability
//! sequence: a sharp peak (`theta` below threshold, `lambda > 0`) is either
//! the front truck of a platoon (reachability drops after it) or an
//! adjacent outlier (it keeps rising); a sharp dip (`lambda < 0`) is either
//! the second truck of a platoon (still descending) or its end
//! (reachability rises after it). Distances are kept in kilometres so the
//! reachability plot carries the literal `1.01 * eps` sentinel at valley
//! boundaries.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::followdist::{following_distance, SnapshotTruck};
use crate::geo;
use crate::graph::RoadGraph;
use crate::numf;
use crate::route::Router;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterParams {
    /// OPTICS neighbourhood radius in km.
    pub eps_km: f64,
    /// Minimum trucks (the truck itself included) to make a core object.
    pub min_pts: usize,
    /// Ordering-axis gap used by the angle criterion.
    pub delta: f64,
    /// Boundary trucks need `theta < theta_thresh_deg` to be trimmed.
    pub theta_thresh_deg: f64,
    /// Sign threshold separating front-of-platoon peaks from end dips.
    pub lambda_thresh: f64,
    /// Following-distance route cutoff, as a multiple of eps.
    pub ete_cutoff_factor: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            eps_km: 1.0,
            min_pts: 2,
            delta: 0.5,
            theta_thresh_deg: 150.0,
            lambda_thresh: 0.0,
            ete_cutoff_factor: 3.0,
        }
    }
}

impl ClusterParams {
    pub fn eps_m(&self) -> f64 {
        self.eps_km * 1000.0
    }
    pub fn cutoff_m(&self) -> f64 {
        self.ete_cutoff_factor * self.eps_m()
    }
    /// Reachability value assigned at valley boundaries: `1.01 * eps`.
    pub fn sentinel_km(&self) -> f64 {
        1.01 * self.eps_km
    }
}

/// OPTICS ordering with per-truck reachability and core distances (km).
#[derive(Clone, Debug, PartialEq)]
pub struct OpticsOutput {
    /// Snapshot indices in processing order.
    pub order: Vec<usize>,
    /// Reachability distance per ordering position; `+inf` starts a run.
    pub reach_km: Vec<f64>,
    /// Core distance per ordering position; `+inf` for non-core trucks.
    pub core_km: Vec<f64>,
}

/// One refined co-driving set: snapshot indices in ordering order plus the
/// following distance between ordering-adjacent members.
#[derive(Clone, Debug, PartialEq)]
pub struct CoDrivingSet {
    pub members: Vec<usize>,
    pub gaps_m: Vec<f64>,
}

/// Pairwise following distances for one snapshot, computed lazily and
/// cached; pairs farther apart than eps on the ground are never routed.
struct FdCache<'a> {
    snapshot: &'a [SnapshotTruck],
    router: Router,
    cutoff_m: f64,
    eps_m: f64,
    map: BTreeMap<(u32, u32), f64>,
}

impl<'a> FdCache<'a> {
    fn new(snapshot: &'a [SnapshotTruck], graph: &RoadGraph, params: &ClusterParams) -> Self {
        Self {
            snapshot,
            router: Router::new(graph),
            cutoff_m: params.cutoff_m(),
            eps_m: params.eps_m(),
            map: BTreeMap::new(),
        }
    }

    fn fd_m(&mut self, graph: &RoadGraph, i: usize, j: usize) -> f64 {
        let key = (i.min(j) as u32, i.max(j) as u32);
        if let Some(d) = self.map.get(&key) {
            return *d;
        }
        let a = &self.snapshot[key.0 as usize];
        let b = &self.snapshot[key.1 as usize];
        let d = if geo::haversine_m(a.pos, b.pos) > self.eps_m {
            f64::INFINITY
        } else {
            following_distance(graph, &mut self.router, a, b, self.cutoff_m)
        };
        self.map.insert(key, d);
        d
    }
}

/// OPTICS under the following-distance metric. Seeds and priority-queue
/// ties follow ascending truck id, so the output does not depend on the
/// order of `snapshot`.
pub fn p_optics(
    snapshot: &[SnapshotTruck],
    graph: &RoadGraph,
    params: &ClusterParams,
) -> OpticsOutput {
    let mut cache = FdCache::new(snapshot, graph, params);
    p_optics_cached(snapshot, graph, params, &mut cache)
}

fn p_optics_cached(
    snapshot: &[SnapshotTruck],
    graph: &RoadGraph,
    params: &ClusterParams,
    cache: &mut FdCache,
) -> OpticsOutput {
    let n = snapshot.len();
    let eps_km = params.eps_km;

    // neighbourhoods: FD strictly below eps, the truck itself not listed
    let mut neighbors: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d_km = cache.fd_m(graph, i, j) / 1000.0;
            if d_km < eps_km {
                neighbors[i].push((j, d_km));
                neighbors[j].push((i, d_km));
            }
        }
    }
    // core distance: FD to the MinPts-th nearest truck, self counted first
    let core_of: Vec<f64> = (0..n)
        .map(|i| {
            if neighbors[i].len() + 1 < params.min_pts {
                f64::INFINITY
            } else {
                let mut ds: Vec<f64> = neighbors[i].iter().map(|(_, d)| *d).collect();
                ds.sort_by(f64::total_cmp);
                ds[params.min_pts - 2]
            }
        })
        .collect();

    let mut seeds: Vec<usize> = (0..n).collect();
    seeds.sort_by_key(|&i| snapshot[i].truck);

    let mut processed = vec![false; n];
    let mut best_rd = vec![f64::INFINITY; n];
    let mut order = Vec::with_capacity(n);
    let mut reach = Vec::with_capacity(n);
    let mut core = Vec::with_capacity(n);
    let mut heap: alloc::collections::BinaryHeap<core::cmp::Reverse<(OrdKm, u64)>> =
        alloc::collections::BinaryHeap::new();

    #[derive(Clone, Copy, PartialEq)]
    struct OrdKm(f64);
    impl Eq for OrdKm {}
    impl PartialOrd for OrdKm {
        fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for OrdKm {
        fn cmp(&self, other: &Self) -> core::cmp::Ordering {
            self.0.total_cmp(&other.0)
        }
    }

    let tie_key = |i: usize| ((snapshot[i].truck.0 as u64) << 32) | i as u64;

    for &seed in &seeds {
        if processed[seed] {
            continue;
        }
        // start a new ordering run
        let mut current = Some((seed, f64::INFINITY));
        heap.clear();
        while let Some((idx, rd)) = current.take() {
            processed[idx] = true;
            order.push(idx);
            reach.push(rd);
            core.push(core_of[idx]);
            if core_of[idx].is_finite() {
                for &(nb, d) in &neighbors[idx] {
                    if processed[nb] {
                        continue;
                    }
                    let cand = core_of[idx].max(d);
                    if cand < best_rd[nb] {
                        best_rd[nb] = cand;
                        heap.push(core::cmp::Reverse((OrdKm(cand), tie_key(nb))));
                    }
                }
            }
            while let Some(core::cmp::Reverse((OrdKm(rd), key))) = heap.pop() {
                let nb = (key & 0xffff_ffff) as usize;
                if processed[nb] || rd > best_rd[nb] {
                    continue;
                }
                current = Some((nb, rd));
                break;
            }
        }
    }

    // cap any finite reachability above eps at the sentinel
    for r in reach.iter_mut() {
        if r.is_finite() && *r > eps_km {
            *r = params.sentinel_km();
        }
    }
    OpticsOutput {
        order,
        reach_km: reach,
        core_km: core,
    }
}

/// A low-core-distance run in ordering order, extended by one position on
/// each side where the array allows it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Valley {
    /// First ordering position of the valley (inclusive).
    pub start: usize,
    /// Last ordering position of the valley (inclusive).
    pub end: usize,
    /// Whether `start` is an extension position (not a core run member).
    pub left_ext: bool,
    /// Whether `end` is an extension position.
    pub right_ext: bool,
}

impl Valley {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end + 1
    }
}

/// Maximal runs of consecutive ordering positions with core distance below
/// `eps_km`, each extended one position outward and clipped to the array.
pub fn find_valley(core_km: &[f64], eps_km: f64) -> Vec<Valley> {
    let mut out = Vec::new();
    let n = core_km.len();
    let mut i = 0;
    while i < n {
        if core_km[i] < eps_km {
            let run_start = i;
            while i < n && core_km[i] < eps_km {
                i += 1;
            }
            let run_end = i - 1;
            let left_ext = run_start > 0;
            let right_ext = run_end + 1 < n;
            out.push(Valley {
                start: if left_ext { run_start - 1 } else { run_start },
                end: if right_ext { run_end + 1 } else { run_end },
                left_ext,
                right_ext,
            });
        } else {
            i += 1;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AngleError {
    OutOfRange,
    UndefinedNeighbor,
}

impl core::fmt::Display for AngleError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            AngleError::OutOfRange => write!(f, "index must have neighbours on both sides"),
            AngleError::UndefinedNeighbor => write!(f, "reachability undefined at a neighbour"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for AngleError {}

/// Angle (degrees) and rate indicator of the reachability sequence at
/// position `y`, with ordering-axis gap `delta`. The three reachability
/// values involved must be finite (the boundary sentinel counts as finite).
pub fn angle_lambda(ordered_rd: &[f64], y: usize, delta: f64) -> Result<(f64, f64), AngleError> {
    if y == 0 || y + 1 >= ordered_rd.len() {
        return Err(AngleError::OutOfRange);
    }
    let (x_r, y_r, z_r) = (ordered_rd[y - 1], ordered_rd[y], ordered_rd[y + 1]);
    if !x_r.is_finite() || !y_r.is_finite() || !z_r.is_finite() {
        return Err(AngleError::UndefinedNeighbor);
    }
    let dx = x_r - y_r;
    let dz = z_r - y_r;
    let num = -delta * delta + dx * dz;
    let den = numf::hypot(delta, dx) * numf::hypot(delta, dz);
    let cosv = (num / den).clamp(-1.0, 1.0);
    let theta = numf::to_degrees(numf::acos(cosv));
    let lambda = -delta * dz - delta * dx;
    Ok((theta, lambda))
}

/// Reachability over one valley as the refinement sees it: extension
/// endpoints forced to the `1.01 * eps` sentinel, and any remaining
/// non-finite or above-eps value clamped to the sentinel.
pub fn effective_rd(valley: &Valley, reach_km: &[f64], params: &ClusterParams) -> Vec<f64> {
    let sentinel = params.sentinel_km();
    let mut vr: Vec<f64> = reach_km[valley.range()].to_vec();
    let m = vr.len();
    if valley.left_ext {
        vr[0] = sentinel;
    }
    if valley.right_ext {
        vr[m - 1] = sentinel;
    }
    for v in vr.iter_mut() {
        if !v.is_finite() || *v > params.eps_km {
            *v = sentinel;
        }
    }
    vr
}

/// Rises and drops below this fraction of eps count as flat when deciding
/// what follows a flagged truck; snap round-off on plateau reachability
/// would otherwise flip the call.
const FLAT_FRACTION_OF_EPS: f64 = 0.01;

/// Trim each valley into co-driving sets of ordering positions. Extension
/// endpoints are never members; emitted ranges have at least `min_pts`
/// members.
pub fn adaptive_recognition(
    valleys: &[Valley],
    reach_km: &[f64],
    params: &ClusterParams,
) -> Vec<Range<usize>> {
    let mut sets: Vec<Range<usize>> = Vec::new();
    for v in valleys {
        let vr = effective_rd(v, reach_km, params);
        let m = vr.len();
        if m == 0 {
            continue;
        }
        let walk_from = if v.left_ext { 1 } else { 0 };
        let walk_to = if v.right_ext {
            m.saturating_sub(2)
        } else {
            m - 1
        };

        let mut current: Option<Range<usize>> = None; // relative positions
        let close = |cur: &mut Option<Range<usize>>, sets: &mut Vec<Range<usize>>| {
            if let Some(range) = cur.take() {
                if range.len() >= params.min_pts {
                    sets.push(v.start + range.start..v.start + range.end);
                }
            }
        };
        let push = |cur: &mut Option<Range<usize>>, rel: usize| match cur {
            Some(range) => range.end = rel + 1,
            None => *cur = Some(rel..rel + 1),
        };

        if walk_from > walk_to || walk_to >= m {
            continue;
        }
        for rel in walk_from..=walk_to {
            if rel == 0 || rel == m - 1 {
                // clipped array boundary: no angle available, keep the truck
                push(&mut current, rel);
                continue;
            }
            let (theta, lambda) = angle_lambda(&vr, rel, params.delta)
                .expect("effective reachability is finite by construction");
            let flat = FLAT_FRACTION_OF_EPS * params.eps_km;
            let rise_after = vr[rel + 1] - vr[rel];
            let drop_before = vr[rel - 1] - vr[rel];
            if theta < params.theta_thresh_deg {
                if lambda > params.lambda_thresh {
                    // reachability peak: front of a platoon when the plot
                    // drops after it, otherwise an adjacent outlier
                    close(&mut current, &mut sets);
                    if rise_after < -flat {
                        current = Some(rel..rel + 1);
                    }
                } else if lambda < params.lambda_thresh {
                    // reachability dip: the platoon's end when the rise
                    // after it outweighs the drop before it (a second
                    // truck fell from the boundary and stays flat)
                    push(&mut current, rel);
                    if rise_after > drop_before && rise_after > flat {
                        close(&mut current, &mut sets);
                    }
                } else {
                    push(&mut current, rel);
                }
            } else {
                push(&mut current, rel);
            }
        }
        close(&mut current, &mut sets);
    }
    sets
}

/// Full A-OPTICS composition for one snapshot: ordering, valley search and
/// refinement. Members of each returned set are snapshot indices in
/// ordering order with the following distance between adjacent members.
pub fn detect_codriving_sets(
    snapshot: &[SnapshotTruck],
    graph: &RoadGraph,
    params: &ClusterParams,
) -> Vec<CoDrivingSet> {
    let mut cache = FdCache::new(snapshot, graph, params);
    let optics = p_optics_cached(snapshot, graph, params, &mut cache);
    let valleys = find_valley(&optics.core_km, params.eps_km);
    let ranges = adaptive_recognition(&valleys, &optics.reach_km, params);
    let mut sets = Vec::with_capacity(ranges.len());
    for range in ranges {
        let members: Vec<usize> = optics.order[range].to_vec();
        let gaps_m: Vec<f64> = members
            .windows(2)
            .map(|w| cache.fd_m(graph, w[0], w[1]))
            .collect();
        sets.push(CoDrivingSet { members, gaps_m });
    }
    sets
}
