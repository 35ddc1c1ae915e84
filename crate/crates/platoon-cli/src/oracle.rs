//! Brute-force reference implementations used to cross-check the
//! clustering and mining modules. These share the following-distance
//! metric with the main pipeline but none of its clustering or mining
//! code paths.

use std::collections::BTreeMap;

use platoon_core::followdist::{following_distance, SnapshotTruck};
use platoon_core::graph::RoadGraph;
use platoon_core::mine::SnapshotIndex;
use platoon_core::route::Router;
use platoon_core::TruckId;

/// Exhaustive density-connectivity clustering over the `FD <= eps`
/// relation: core trucks have at least `min_pts` trucks (themselves
/// included) within eps; clusters are connected components over core
/// adjacency with border trucks attached. Returns member index sets,
/// each sorted by truck id, ordered by their smallest member.
pub fn oracle_cluster(
    snapshot: &[SnapshotTruck],
    graph: &RoadGraph,
    eps_m: f64,
    cutoff_m: f64,
    min_pts: usize,
) -> Vec<Vec<usize>> {
    let n = snapshot.len();
    assert!(n <= 64, "oracle guard: snapshots up to 64 trucks");
    let mut router = Router::new(graph);
    let mut within = vec![vec![false; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let fd = following_distance(graph, &mut router, &snapshot[i], &snapshot[j], cutoff_m);
            if fd <= eps_m {
                within[i][j] = true;
                within[j][i] = true;
            }
        }
    }
    let is_core: Vec<bool> = (0..n)
        .map(|i| 1 + (0..n).filter(|&j| j != i && within[i][j]).count() >= min_pts)
        .collect();

    let mut assigned = vec![usize::MAX; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| snapshot[i].truck);
    for &seed in &order {
        if !is_core[seed] || assigned[seed] != usize::MAX {
            continue;
        }
        let cluster_id = clusters.len();
        let mut members = Vec::new();
        let mut queue = vec![seed];
        assigned[seed] = cluster_id;
        while let Some(i) = queue.pop() {
            members.push(i);
            if !is_core[i] {
                continue; // border trucks do not expand
            }
            for j in 0..n {
                if within[i][j] && assigned[j] == usize::MAX {
                    assigned[j] = cluster_id;
                    queue.push(j);
                }
            }
        }
        members.sort_by_key(|&i| snapshot[i].truck);
        clusters.push(members);
    }
    clusters.sort_by_key(|c| snapshot[c[0]].truck);
    clusters
}

/// Exhaustive closed-pattern enumeration: every truck subset, its maximal
/// shared timestep set recomputed per step, threshold filtering and a
/// pairwise size-closure sweep. Output sorted like the miner's.
pub fn oracle_patterns(
    index: &SnapshotIndex,
    min_o: usize,
    min_t: usize,
) -> Vec<(Vec<TruckId>, Vec<u32>)> {
    let trucks: Vec<TruckId> = index.trucks().collect();
    assert!(trucks.len() <= 20, "oracle guard: up to 20 trucks");
    // per-step membership map rebuilt directly from the set lists
    let mut membership: Vec<(u32, BTreeMap<TruckId, usize>)> = Vec::new();
    for (step, sets) in index.step_entries() {
        let mut m = BTreeMap::new();
        for (set_id, set) in sets.iter().enumerate() {
            for t in set {
                m.insert(*t, set_id);
            }
        }
        membership.push((step, m));
    }
    let steps_of = |subset: &[TruckId]| -> Vec<u32> {
        membership
            .iter()
            .filter(|(_, m)| match subset.split_first() {
                None => false,
                Some((first, rest)) => m
                    .get(first)
                    .map(|set| rest.iter().all(|t| m.get(t) == Some(set)))
                    .unwrap_or(false),
            })
            .map(|(s, _)| *s)
            .collect()
    };

    let mut candidates: Vec<(Vec<TruckId>, Vec<u32>)> = Vec::new();
    let k = trucks.len();
    for mask in 1u64..(1 << k) {
        if (mask.count_ones() as usize) < min_o {
            continue;
        }
        let subset: Vec<TruckId> = (0..k)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| trucks[i])
            .collect();
        let steps = steps_of(&subset);
        if steps.len() >= min_t {
            candidates.push((subset, steps));
        }
    }
    // size closure: drop any subset dominated by a superset with equal T
    let mut keep = vec![true; candidates.len()];
    for i in 0..candidates.len() {
        for j in 0..candidates.len() {
            if i != j
                && candidates[i].1 == candidates[j].1
                && candidates[i].0.len() < candidates[j].0.len()
                && candidates[i].0.iter().all(|t| candidates[j].0.contains(t))
            {
                keep[i] = false;
                break;
            }
        }
    }
    let mut out: Vec<(Vec<TruckId>, Vec<u32>)> = candidates
        .into_iter()
        .zip(keep)
        .filter_map(|(c, k)| k.then_some(c))
        .collect();
    out.sort_by(|a, b| {
        b.0.len()
            .cmp(&a.0.len())
            .then_with(|| a.1.first().cmp(&b.1.first()))
            .then_with(|| a.0.cmp(&b.0))
    });
    out
}
