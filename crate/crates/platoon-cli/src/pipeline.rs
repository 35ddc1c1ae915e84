//! Stage implementations and the end-to-end orchestrator.
//!
//! Every stage is a pure function from parsed inputs to output rows, so
//! running the subcommands one by one over intermediate CSV files produces
//! exactly what `run` produces in one process. Parallel sections collect
//! in input order; all emitted rows come from ordered containers, making
//! outputs a pure function of (inputs, config) regardless of thread count.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use platoon_core::cluster::{detect_codriving_sets, ClusterParams};
use platoon_core::followdist::{chain_order, following_distance, SnapshotTruck};
use platoon_core::fuel::{
    derive_profile, platoon_savings, DrivingProfile, PatternFuelInput, RunOrder, SavingsReport,
};
use platoon_core::graph::{DirEdge, RoadGraph, SegIdx};
use platoon_core::mapmatch::{match_trajectory, Dir, HmmParams, MatchedPoint, TruckPoint};
use platoon_core::metrics::{pdr_ptr, segment_hotspots, FleetMetrics, SetStats, WindowAgg};
use platoon_core::mine::{mine_patterns, t_max, PlatoonPattern, SnapshotIndex};
use platoon_core::route::Router;
use platoon_core::TruckId;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{HeadwayStat, PipelineConfig};
use crate::formats::{
    q, FleetSummary, GridRow, HaulBucketRow, MatchedRow, MetricsRow, PatternRow, RawPoint,
    SavingRow, SetRow,
};

/// Lexicographic truck-id interner; rank order is the canonical order.
pub struct Interner {
    ids: Vec<String>,
}

impl Interner {
    pub fn from_ids<'a>(iter: impl Iterator<Item = &'a str>) -> Self {
        let mut ids: Vec<String> = iter.map(String::from).collect();
        ids.sort_unstable();
        ids.dedup();
        Self { ids }
    }
    pub fn get(&self, id: &str) -> Option<TruckId> {
        self.ids
            .binary_search_by(|x| x.as_str().cmp(id))
            .ok()
            .map(|i| TruckId(i as u32))
    }
    pub fn name(&self, t: TruckId) -> &str {
        &self.ids[t.0 as usize]
    }
    pub fn len(&self) -> usize {
        self.ids.len()
    }
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Map matching stage: raw trajectory rows to matched rows. Trajectories
/// with fewer than two matchable points are dropped and counted.
pub fn stage_match(
    raw: &[RawPoint],
    graph: &RoadGraph,
    params: &HmmParams,
) -> (Vec<MatchedRow>, usize) {
    let mut by_truck: BTreeMap<&str, Vec<&RawPoint>> = BTreeMap::new();
    for p in raw {
        by_truck.entry(&p.truck_id).or_default().push(p);
    }
    let trucks: Vec<(&str, Vec<&RawPoint>)> = by_truck
        .into_iter()
        .map(|(id, mut pts)| {
            pts.sort_by_key(|p| p.ts);
            (id, pts)
        })
        .collect();
    let results: Vec<(&str, Result<Vec<MatchedPoint>, _>)> = trucks
        .par_iter()
        .map(|(id, pts)| {
            let points: Vec<TruckPoint> = pts
                .iter()
                .map(|p| TruckPoint {
                    truck: TruckId(0), // external id carried alongside
                    ts: p.ts,
                    pos: platoon_core::geo::LonLat::new(p.lon, p.lat),
                    altitude_m: p.altitude_m,
                    speed_mps: p.speed_mps,
                })
                .collect();
            (*id, match_trajectory(&points, graph, params))
        })
        .collect();
    let mut rows = Vec::new();
    let mut rejected = 0usize;
    for (id, res) in results {
        match res {
            Ok(points) => {
                for m in points {
                    let seg = graph.segment(m.seg);
                    rows.push(MatchedRow {
                        truck_id: id.to_string(),
                        ts: m.ts,
                        segment_id: seg.id.clone(),
                        r: q(m.r, 6),
                        dir: m.dir,
                        snap_lon: q(m.snapped.lon, 7),
                        snap_lat: q(m.snapped.lat, 7),
                        altitude_m: q(m.altitude_m, 2),
                    });
                }
            }
            Err(_) => rejected += 1,
        }
    }
    (rows, rejected)
}

fn travel_edge(seg: SegIdx, dir: Dir) -> DirEdge {
    match dir {
        Dir::Along => DirEdge::forward(seg),
        Dir::Against => DirEdge::reverse(seg),
    }
}

fn progress_m(graph: &RoadGraph, seg: SegIdx, r: f64, dir: Dir) -> f64 {
    let len = graph.segment(seg).length_m;
    match dir {
        Dir::Along => r * len,
        Dir::Against => (1.0 - r) * len,
    }
}

/// Route between two consecutive matched states: the traversed directed
/// edges (first edge included) and the travel distance.
fn route_between(
    graph: &RoadGraph,
    router: &mut Router,
    a: &MatchedRow,
    b: &MatchedRow,
    seg_a: SegIdx,
    seg_b: SegIdx,
    cutoff_m: f64,
) -> Option<(Vec<DirEdge>, f64)> {
    let ea = travel_edge(seg_a, a.dir);
    let eb = travel_edge(seg_b, b.dir);
    let pa = progress_m(graph, seg_a, a.r, a.dir);
    let pb = progress_m(graph, seg_b, b.r, b.dir);
    if ea == eb && pb >= pa {
        return Some((vec![ea], pb - pa));
    }
    let path = router.edge_to_edge_path(graph, ea, eb, cutoff_m)?;
    let remaining = graph.edge_len(ea) - pa;
    let dist = remaining + path.dist_m - (graph.edge_len(eb) - pb);
    let mut edges = vec![ea];
    edges.extend(path.edges);
    Some((edges, dist.max(0.0)))
}

/// Resampling stage: matched rows to grid rows with along-route
/// interpolation and a per-truck odometer.
pub fn stage_resample(
    matched: &[MatchedRow],
    graph: &RoadGraph,
    dt_grid_s: u32,
    staleness_s: u32,
) -> Result<Vec<GridRow>> {
    let mut by_truck: BTreeMap<&str, Vec<&MatchedRow>> = BTreeMap::new();
    for m in matched {
        by_truck.entry(&m.truck_id).or_default().push(m);
    }
    let dt = dt_grid_s as i64;
    let trucks: Vec<(&str, Vec<&MatchedRow>)> = by_truck
        .into_iter()
        .map(|(id, mut rows)| {
            rows.sort_by_key(|m| m.ts);
            (id, rows)
        })
        .collect();

    let per_truck: Vec<Result<Vec<GridRow>>> = trucks
        .par_iter()
        .map(|(id, rows)| {
            let mut router = Router::new(graph);
            let mut out: Vec<GridRow> = Vec::new();
            let mut odo = 0.0f64;
            let resolve = |m: &MatchedRow| -> Result<SegIdx> {
                graph.seg_idx(&m.segment_id).with_context(|| {
                    format!("matched row references unknown segment `{}`", m.segment_id)
                })
            };
            let emit = |out: &mut Vec<GridRow>,
                        ts: i64,
                        seg: SegIdx,
                        r: f64,
                        dir: Dir,
                        alt: f64,
                        odo: f64| {
                let r = q(r, 6);
                let snapped = graph.interpolate(seg, r);
                out.push(GridRow {
                    truck_id: id.to_string(),
                    step: (ts / dt) as u32,
                    segment_id: graph.segment(seg).id.clone(),
                    r,
                    dir,
                    snap_lon: q(snapped.lon, 7),
                    snap_lat: q(snapped.lat, 7),
                    altitude_m: q(alt, 2),
                    odo_m: q(odo, 3),
                });
            };
            for w in rows.windows(2) {
                let (m0, m1) = (w[0], w[1]);
                let gap = m1.ts - m0.ts;
                if gap <= 0 {
                    continue;
                }
                let seg0 = resolve(m0)?;
                let seg1 = resolve(m1)?;
                let first_grid = m0.ts.div_euclid(dt) * dt + if m0.ts % dt == 0 { 0 } else { dt };
                if gap > staleness_s as i64 {
                    if m0.ts % dt == 0 {
                        emit(&mut out, m0.ts, seg0, m0.r, m0.dir, m0.altitude_m, odo);
                    }
                    continue;
                }
                let gc = platoon_core::geo::haversine_m(
                    platoon_core::geo::LonLat::new(m0.snap_lon, m0.snap_lat),
                    platoon_core::geo::LonLat::new(m1.snap_lon, m1.snap_lat),
                );
                let cutoff = (2.0 * gc + 800.0).max(75.0 * gap as f64);
                let Some((edges, dist)) =
                    route_between(graph, &mut router, m0, m1, seg0, seg1, cutoff)
                else {
                    if m0.ts % dt == 0 {
                        emit(&mut out, m0.ts, seg0, m0.r, m0.dir, m0.altitude_m, odo);
                    }
                    continue;
                };
                // cumulative arc over the edge list; the truck starts at
                // progress p0 on the first edge
                let p0 = progress_m(graph, seg0, m0.r, m0.dir);
                let mut cum = Vec::with_capacity(edges.len() + 1);
                cum.push(0.0);
                for e in &edges {
                    cum.push(cum.last().unwrap() + graph.edge_len(*e));
                }
                let mut g = first_grid;
                while g < m1.ts {
                    let frac = (g - m0.ts) as f64 / gap as f64;
                    let arc = p0 + frac * dist;
                    let mut k = match cum.binary_search_by(|c| c.total_cmp(&arc)) {
                        Ok(i) => i,
                        Err(i) => i.saturating_sub(1),
                    };
                    k = k.min(edges.len() - 1);
                    let edge = edges[k];
                    let len = graph.edge_len(edge);
                    let within = ((arc - cum[k]) / len).clamp(0.0, 1.0);
                    let r = if edge.is_reverse() {
                        1.0 - within
                    } else {
                        within
                    };
                    let dir = if edge.is_reverse() {
                        Dir::Against
                    } else {
                        Dir::Along
                    };
                    let alt = m0.altitude_m + frac * (m1.altitude_m - m0.altitude_m);
                    emit(&mut out, g, edge.seg(), r, dir, alt, odo + frac * dist);
                    g += dt;
                }
                odo += dist;
            }
            if let Some(last) = rows.last() {
                if last.ts % dt == 0 {
                    let seg = resolve(last)?;
                    emit(
                        &mut out,
                        last.ts,
                        seg,
                        last.r,
                        last.dir,
                        last.altitude_m,
                        odo,
                    );
                }
            }
            out.dedup_by_key(|r| r.step);
            Ok(out)
        })
        .collect();

    let mut rows = Vec::new();
    for r in per_truck {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Snapshot view of the gridded data.
pub struct GridData {
    pub rows: Vec<GridRow>,
    pub interner: Interner,
    /// step -> indices into `rows`, member order = ascending truck id.
    pub by_step: BTreeMap<u32, Vec<usize>>,
    /// truck -> indices into `rows`, ascending step.
    pub by_truck: BTreeMap<String, Vec<usize>>,
}

impl GridData {
    pub fn new(rows: Vec<GridRow>) -> Self {
        let interner = Interner::from_ids(rows.iter().map(|r| r.truck_id.as_str()));
        let mut by_step: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        let mut by_truck: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| {
            rows[a]
                .truck_id
                .cmp(&rows[b].truck_id)
                .then(rows[a].step.cmp(&rows[b].step))
        });
        for i in order {
            by_step.entry(rows[i].step).or_default().push(i);
            by_truck
                .entry(rows[i].truck_id.clone())
                .or_default()
                .push(i);
        }
        Self {
            rows,
            interner,
            by_step,
            by_truck,
        }
    }

    fn snapshot_truck(&self, graph: &RoadGraph, i: usize) -> Result<SnapshotTruck> {
        let row = &self.rows[i];
        let seg = graph
            .seg_idx(&row.segment_id)
            .with_context(|| format!("grid row references unknown segment `{}`", row.segment_id))?;
        Ok(SnapshotTruck {
            truck: self.interner.get(&row.truck_id).expect("interned"),
            seg,
            r: row.r,
            dir: row.dir,
            pos: platoon_core::geo::LonLat::new(row.snap_lon, row.snap_lat),
        })
    }
}

/// Clustering stage: grid rows to per-timestep co-driving set rows.
pub fn stage_cluster(
    grid: &GridData,
    graph: &RoadGraph,
    params: &ClusterParams,
) -> Result<Vec<SetRow>> {
    let steps: Vec<(&u32, &Vec<usize>)> = grid.by_step.iter().collect();
    let per_step: Vec<Result<Vec<SetRow>>> = steps
        .par_iter()
        .map(|(step, indices)| {
            let snapshot: Vec<SnapshotTruck> = indices
                .iter()
                .map(|&i| grid.snapshot_truck(graph, i))
                .collect::<Result<_>>()?;
            let sets = detect_codriving_sets(&snapshot, graph, params);
            let mut rows = Vec::new();
            for (set_id, set) in sets.iter().enumerate() {
                for &member in &set.members {
                    let row = &grid.rows[indices[member]];
                    let seg = graph.seg_idx(&row.segment_id).expect("resolved above");
                    rows.push(SetRow {
                        step: **step,
                        set_id: set_id as u32,
                        truck_id: row.truck_id.clone(),
                        segment_id: row.segment_id.clone(),
                        r: row.r,
                        dir: row.dir,
                        road_class: graph.segment(seg).class.as_str().to_string(),
                    });
                }
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_step {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Set rows regrouped for mining and reporting.
pub struct SetData {
    pub rows: Vec<SetRow>,
    pub interner: Interner,
    pub index: SnapshotIndex,
    /// (step, set_id) -> row indices in ordering order.
    pub sets: BTreeMap<(u32, u32), Vec<usize>>,
}

impl SetData {
    pub fn new(rows: Vec<SetRow>) -> Result<Self> {
        let interner = Interner::from_ids(rows.iter().map(|r| r.truck_id.as_str()));
        let mut sets: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
        for (i, r) in rows.iter().enumerate() {
            sets.entry((r.step, r.set_id)).or_default().push(i);
        }
        let mut index = SnapshotIndex::new();
        let mut by_step: BTreeMap<u32, Vec<Vec<TruckId>>> = BTreeMap::new();
        for ((step, _), members) in &sets {
            by_step.entry(*step).or_default().push(
                members
                    .iter()
                    .map(|&i| interner.get(&rows[i].truck_id).expect("interned"))
                    .collect(),
            );
        }
        for (step, sets_at) in by_step {
            index
                .add_step(step, sets_at)
                .context("co-driving sets overlap within one timestep")?;
        }
        Ok(Self {
            rows,
            interner,
            index,
            sets,
        })
    }

    /// Snapshot state of one member row.
    fn member_state(&self, graph: &RoadGraph, i: usize) -> Result<SnapshotTruck> {
        let row = &self.rows[i];
        let seg = graph
            .seg_idx(&row.segment_id)
            .with_context(|| format!("set row references unknown segment `{}`", row.segment_id))?;
        Ok(SnapshotTruck {
            truck: self.interner.get(&row.truck_id).expect("interned"),
            seg,
            r: row.r,
            dir: row.dir,
            pos: graph.interpolate(seg, row.r),
        })
    }

    /// Following distances between consecutive pattern members inside the
    /// set containing them at `step`, front to back in set order.
    fn pattern_gaps_at(
        &self,
        graph: &RoadGraph,
        router: &mut Router,
        members: &[TruckId],
        step: u32,
        cutoff_m: f64,
    ) -> Result<Vec<f64>> {
        let set_id = match self.index.set_of(step, members[0]) {
            Some(id) => id,
            None => return Ok(Vec::new()),
        };
        let rows = &self.sets[&(step, set_id)];
        let in_pattern: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&i| {
                let t = self.interner.get(&self.rows[i].truck_id).expect("interned");
                members.contains(&t)
            })
            .collect();
        let mut gaps = Vec::new();
        for w in in_pattern.windows(2) {
            let a = self.member_state(graph, w[0])?;
            let b = self.member_state(graph, w[1])?;
            gaps.push(following_distance(graph, router, &a, &b, cutoff_m));
        }
        Ok(gaps.into_iter().filter(|g| g.is_finite()).collect())
    }
}

/// A mined pattern with its summary and the external ids of its trucks.
pub struct MinedPattern {
    pub pattern: PlatoonPattern,
    pub truck_names: Vec<String>,
    pub row: PatternRow,
    pub mean_headway_m: f64,
    pub max_headway_m: f64,
}

/// Mining stage: set rows to closed platoon patterns with summaries.
pub fn stage_mine(
    sets: &SetData,
    grid: &GridData,
    graph: &RoadGraph,
    min_o: usize,
    min_t: usize,
    dt_grid_s: u32,
    cluster: &ClusterParams,
) -> Result<Vec<MinedPattern>> {
    let patterns = mine_patterns(&sets.index, min_o, min_t);
    let mut out = Vec::with_capacity(patterns.len());
    let mut router = Router::new(graph);
    for (id, p) in patterns.into_iter().enumerate() {
        let truck_names: Vec<String> = p
            .trucks
            .iter()
            .map(|t| sets.interner.name(*t).to_string())
            .collect();
        let runs = p.runs();
        // distance: mean over members of odometer progress across runs
        let mut dist_sum = 0.0;
        let mut dist_n = 0usize;
        let mut missing_coverage = false;
        for name in &truck_names {
            let Some(indices) = grid.by_truck.get(name) else {
                missing_coverage = true;
                continue;
            };
            let odo_at = |step: u32| -> Option<f64> {
                indices
                    .binary_search_by_key(&step, |&i| grid.rows[i].step)
                    .ok()
                    .map(|k| grid.rows[indices[k]].odo_m)
            };
            let mut member_dist = 0.0;
            let mut covered = true;
            for (lo, hi) in &runs {
                match (odo_at(*lo), odo_at(*hi)) {
                    (Some(a), Some(b)) => member_dist += b - a,
                    _ => covered = false,
                }
            }
            if covered {
                dist_sum += member_dist;
                dist_n += 1;
            } else {
                missing_coverage = true;
            }
        }
        let distance_m = if dist_n > 0 {
            dist_sum / dist_n as f64
        } else {
            f64::NAN
        };
        // headway: adjacent-member following distances over all steps
        let mut gaps = Vec::new();
        for &step in &p.steps {
            gaps.extend(sets.pattern_gaps_at(
                graph,
                &mut router,
                &p.trucks,
                step,
                cluster.cutoff_m(),
            )?);
        }
        let mean_headway_m = if gaps.is_empty() {
            f64::NAN
        } else {
            gaps.iter().sum::<f64>() / gaps.len() as f64
        };
        let max_headway_m = gaps.iter().copied().fold(f64::NAN, f64::max);
        let mean_headway_m = q(mean_headway_m, 2);
        let row = PatternRow {
            pattern_id: id as u32,
            truck_ids: truck_names.join(";"),
            first_ts: *p.steps.first().expect("patterns are non-empty"),
            last_ts: *p.steps.last().expect("patterns are non-empty"),
            n_timesteps: p.steps.len() as u32,
            duration_s: q(p.steps.len() as f64 * dt_grid_s as f64, 1),
            distance_km: if missing_coverage && dist_n == 0 {
                f64::NAN
            } else {
                q(distance_m / 1000.0, 4)
            },
            mean_headway_m,
            n_runs: runs.len() as u32,
        };
        out.push(MinedPattern {
            pattern: p,
            truck_names,
            row,
            mean_headway_m,
            max_headway_m,
        });
    }
    Ok(out)
}

/// Rebuild mined patterns (including their full timestep sets and headway
/// statistics) from a patterns CSV plus the set rows it was mined from.
pub fn patterns_from_rows(
    rows: &[PatternRow],
    sets: &SetData,
    graph: &RoadGraph,
    cluster: &ClusterParams,
) -> Result<Vec<MinedPattern>> {
    let mut router = Router::new(graph);
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let truck_names: Vec<String> = row.truck_ids.split(';').map(String::from).collect();
        let mut trucks = Vec::with_capacity(truck_names.len());
        for name in &truck_names {
            trucks.push(
                sets.interner
                    .get(name)
                    .with_context(|| format!("pattern references unknown truck `{name}`"))?,
            );
        }
        trucks.sort_unstable();
        let steps = t_max(&sets.index, &trucks);
        ensure!(
            steps.len() as u32 == row.n_timesteps,
            "pattern {} timestep set does not match the set file",
            row.pattern_id
        );
        let mut gaps = Vec::new();
        for &step in &steps {
            gaps.extend(sets.pattern_gaps_at(
                graph,
                &mut router,
                &trucks,
                step,
                cluster.cutoff_m(),
            )?);
        }
        let max_headway_m = gaps.iter().copied().fold(f64::NAN, f64::max);
        out.push(MinedPattern {
            pattern: PlatoonPattern { trucks, steps },
            truck_names,
            row: row.clone(),
            mean_headway_m: row.mean_headway_m,
            max_headway_m,
        });
    }
    Ok(out)
}

/// Driving profiles per truck from the gridded samples.
pub fn profiles_from_grid(
    grid: &GridData,
    dt_grid_s: u32,
) -> Result<BTreeMap<TruckId, DrivingProfile>> {
    let mut out = BTreeMap::new();
    for (name, indices) in &grid.by_truck {
        let samples: Vec<(u32, f64, f64)> = indices
            .iter()
            .map(|&i| {
                let r = &grid.rows[i];
                (r.step, r.odo_m, r.altitude_m)
            })
            .collect();
        let profile = derive_profile(&samples, dt_grid_s as f64)
            .map_err(|e| anyhow::anyhow!("profile for `{name}`: {e}"))?;
        out.insert(grid.interner.get(name).expect("interned"), profile);
    }
    Ok(out)
}

/// Fuel stage: evaluate the coordination rule and fleet savings.
pub fn stage_fuel(
    mined: &[MinedPattern],
    sets: &SetData,
    grid: &GridData,
    graph: &RoadGraph,
    config: &PipelineConfig,
) -> Result<(Vec<SavingRow>, SavingsReport)> {
    let params = config.fuel.to_params(config.pipeline.dt_grid_s as f64);
    let cutoff = config.cluster.to_params().cutoff_m();
    // grid and set files may intern trucks differently; map via names
    let profiles_by_name: BTreeMap<&str, DrivingProfile> = {
        let by_grid_id = profiles_from_grid(grid, config.pipeline.dt_grid_s)?;
        by_grid_id
            .into_iter()
            .map(|(t, p)| (grid.interner.name(t), p))
            .collect()
    };
    let mut profiles: BTreeMap<TruckId, DrivingProfile> = BTreeMap::new();
    for (name, profile) in profiles_by_name {
        if let Some(t) = sets.interner.get(name) {
            profiles.insert(t, profile);
        }
    }

    let mut router = Router::new(graph);
    let mut inputs = Vec::with_capacity(mined.len());
    for m in mined {
        let headway = match config.fuel.headway_stat {
            HeadwayStat::Mean => m.mean_headway_m,
            HeadwayStat::Max => m.max_headway_m,
        };
        let mut run_orders = Vec::new();
        for (lo, hi) in m.pattern.runs() {
            // chain order resolved at the run's first timestep
            let states: Vec<SnapshotTruck> = m
                .pattern
                .trucks
                .iter()
                .filter_map(|t| {
                    let set_id = sets.index.set_of(lo, *t)?;
                    let rows = &sets.sets[&(lo, set_id)];
                    rows.iter()
                        .find(|&&i| sets.interner.get(&sets.rows[i].truck_id) == Some(*t))
                        .map(|&i| sets.member_state(graph, i))
                })
                .collect::<Result<_>>()?;
            let order = chain_order(graph, &mut router, &states, cutoff);
            let ordered: Vec<TruckId> = order.iter().map(|&i| states[i].truck).collect();
            run_orders.push(RunOrder {
                first_step: lo,
                last_step: hi,
                ordered,
            });
        }
        inputs.push(PatternFuelInput {
            pattern: m.pattern.clone(),
            overlap_m: if m.row.distance_km.is_nan() {
                0.0
            } else {
                m.row.distance_km * 1000.0
            },
            headway_m: headway,
            runs: run_orders,
        });
    }
    let report = platoon_savings(&inputs, &profiles, &params);
    let rows: Vec<SavingRow> = report
        .per_pattern
        .iter()
        .zip(mined)
        .map(|(p, m)| SavingRow {
            pattern_id: m.row.pattern_id,
            coordinable: p.coordinable,
            overlap_km: p.overlap_m / 1000.0,
            mean_headway_m: p.headway_m,
            baseline_ml: p.baseline_ml,
            platooned_ml: p.platooned_ml,
            saving_pct: p.saving_pct,
        })
        .collect();
    Ok((rows, report))
}

/// Everything the report stage produces.
pub struct Report {
    pub metrics_rows: Vec<MetricsRow>,
    pub fleet: FleetMetrics,
    pub summary: FleetSummary,
    pub hotspot_rows: Vec<(String, u64)>,
    pub haul_rows: Vec<HaulBucketRow>,
}

/// Report stage: windowed metrics, fleet ratios, hotspots, haul buckets.
pub fn stage_report(
    mined: &[MinedPattern],
    sets: &SetData,
    grid: &GridData,
    graph: &RoadGraph,
    savings: &SavingsReport,
    config: &PipelineConfig,
) -> Result<Report> {
    let dt = config.pipeline.dt_grid_s;
    let per_gap = config.metrics.per_gap_headway;
    let window_steps = (config.metrics.window_s / dt).max(1);
    let cutoff = config.cluster.to_params().cutoff_m();

    // per-timestep set stats split by road class ("all", "expressway", "trunk")
    let classes = ["all", "expressway", "trunk"];
    let mut windows: BTreeMap<(u32, &str), WindowAgg> = BTreeMap::new();
    let mut router = Router::new(graph);

    // gaps per set from the ordering-adjacent members, grouped by step
    let mut set_stats: BTreeMap<u32, Vec<(SetStats, &str)>> = BTreeMap::new();
    for ((step, _set_id), members) in &sets.sets {
        let mut gaps = Vec::new();
        for w in members.windows(2) {
            let a = sets.member_state(graph, w[0])?;
            let b = sets.member_state(graph, w[1])?;
            let fd = following_distance(graph, &mut router, &a, &b, cutoff);
            if fd.is_finite() {
                gaps.push(fd);
            }
        }
        // majority road class, first member breaking ties
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for &i in members {
            *counts.entry(sets.rows[i].road_class.as_str()).or_insert(0) += 1;
        }
        let first_class = sets.rows[members[0]].road_class.as_str();
        let class = counts
            .iter()
            .max_by_key(|(name, n)| (**n, usize::from(**name == first_class)))
            .map(|(name, _)| *name)
            .unwrap_or(first_class);
        set_stats.entry(*step).or_default().push((
            SetStats {
                n_members: members.len(),
                gaps_m: gaps,
            },
            class,
        ));
    }

    // availability per step per class from the grid
    for (step, indices) in &grid.by_step {
        let window = (step / window_steps) * window_steps;
        let mut avail: BTreeMap<&str, usize> = BTreeMap::new();
        for &i in indices {
            let seg = graph
                .seg_idx(&grid.rows[i].segment_id)
                .expect("resolved in clustering");
            *avail.entry(graph.segment(seg).class.as_str()).or_insert(0) += 1;
        }
        let total: usize = avail.values().sum();
        let at_step: &[(SetStats, &str)] = set_stats.get(step).map_or(&[], Vec::as_slice);
        for class in classes {
            let n = if class == "all" {
                total
            } else {
                avail.get(class).copied().unwrap_or(0)
            };
            let stats: Vec<SetStats> = at_step
                .iter()
                .filter(|(_, c)| class == "all" || *c == class)
                .map(|(stats, _)| stats.clone())
                .collect();
            windows
                .entry((window, class))
                .or_default()
                .add_timestep(&stats, n);
        }
    }

    let mut metrics_rows = Vec::new();
    for ((window, class), agg) in &windows {
        metrics_rows.push(MetricsRow {
            window_start: *window,
            road_class: class.to_string(),
            n_total_mean: agg.available as f64 / window_steps as f64,
            icr: agg.icr(),
            ich_m: agg.ich_m(per_gap),
            ics: agg.ics(),
        });
    }

    // fleet ratios over per-truck odometers
    let mut odometers = BTreeMap::new();
    for (name, indices) in &grid.by_truck {
        let series: Vec<(u32, f64)> = indices
            .iter()
            .map(|&i| (grid.rows[i].step, grid.rows[i].odo_m))
            .collect();
        odometers.insert(grid.interner.get(name).expect("interned"), series);
    }
    // patterns carry set-file interned ids; translate into grid ids
    let grid_patterns: Vec<PlatoonPattern> = mined
        .iter()
        .map(|m| PlatoonPattern {
            trucks: m
                .truck_names
                .iter()
                .filter_map(|n| grid.interner.get(n))
                .collect(),
            steps: m.pattern.steps.clone(),
        })
        .collect();
    let fleet = pdr_ptr(&grid_patterns, &odometers, dt as f64);

    // hotspots: per-segment (pattern, step, member) counts
    let mut positions: BTreeMap<TruckId, Vec<(u32, SegIdx)>> = BTreeMap::new();
    for (name, indices) in &grid.by_truck {
        let t = grid.interner.get(name).expect("interned");
        positions.insert(
            t,
            indices
                .iter()
                .map(|&i| {
                    (
                        grid.rows[i].step,
                        graph.seg_idx(&grid.rows[i].segment_id).expect("resolved"),
                    )
                })
                .collect(),
        );
    }
    let hotspot_rows: Vec<(String, u64)> = segment_hotspots(&grid_patterns, &positions)
        .into_iter()
        .map(|(seg, count)| (graph.segment(seg).id.clone(), count))
        .collect();

    // haul-distance buckets
    let bucket_m = config.metrics.haul_bucket_km * 1000.0;
    let mut buckets: BTreeMap<u32, (usize, f64, f64, f64, f64)> = BTreeMap::new();
    for t in &fleet.per_truck {
        let b = (t.total_m / bucket_m) as u32;
        let e = buckets.entry(b).or_insert((0, 0.0, 0.0, 0.0, 0.0));
        e.0 += 1;
        e.1 += t.platooned_m;
        e.2 += t.total_m;
        e.3 += t.platooned_s;
        e.4 += t.total_s;
    }
    let haul_rows: Vec<HaulBucketRow> = buckets
        .into_iter()
        .map(|(b, (n, pd, d, pt, t))| HaulBucketRow {
            bucket_lo_km: b as f64 * config.metrics.haul_bucket_km,
            bucket_hi_km: (b + 1) as f64 * config.metrics.haul_bucket_km,
            n_trucks: n,
            pdr_pct: if d > 0.0 { pd / d * 100.0 } else { 0.0 },
            ptr_pct: if t > 0.0 { pt / t * 100.0 } else { 0.0 },
        })
        .collect();

    // headline summary
    let codriving: usize = sets.interner.len();
    let k = grid.interner.len();
    let summary = FleetSummary {
        k_trucks: k,
        codriving_trucks: codriving,
        codriving_truck_pct: if k > 0 {
            codriving as f64 / k as f64 * 100.0
        } else {
            0.0
        },
        pdr_pct: fleet.pdr * 100.0,
        ptr_pct: fleet.ptr * 100.0,
        patterns_total: savings.patterns_total,
        patterns_coordinable: savings.patterns_coordinable,
        coordinable_pct: if savings.patterns_total > 0 {
            savings.patterns_coordinable as f64 / savings.patterns_total as f64 * 100.0
        } else {
            0.0
        },
        baseline_fuel_ml: savings.fleet_baseline_ml,
        platooned_fuel_ml: savings.fleet_platooned_ml,
        fleet_saving_pct: savings.fleet_saving_pct,
    };

    Ok(Report {
        metrics_rows,
        fleet,
        summary,
        hotspot_rows,
        haul_rows,
    })
}

/// Output paths inside one run directory.
pub struct RunPaths {
    pub dir: PathBuf,
}

impl RunPaths {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
        }
    }
    pub fn matched(&self) -> PathBuf {
        self.dir.join("matched.csv")
    }
    pub fn gridded(&self) -> PathBuf {
        self.dir.join("gridded.csv")
    }
    pub fn sets(&self) -> PathBuf {
        self.dir.join("sets.csv")
    }
    pub fn patterns(&self) -> PathBuf {
        self.dir.join("patterns.csv")
    }
    pub fn savings(&self) -> PathBuf {
        self.dir.join("savings.csv")
    }
    pub fn metrics(&self) -> PathBuf {
        self.dir.join("metrics_windows.csv")
    }
    pub fn fleet(&self) -> PathBuf {
        self.dir.join("fleet_summary.csv")
    }
    pub fn hotspots_csv(&self) -> PathBuf {
        self.dir.join("hotspots.csv")
    }
    pub fn hotspots_geojson(&self) -> PathBuf {
        self.dir.join("hotspots.geojson")
    }
    pub fn haul(&self) -> PathBuf {
        self.dir.join("haul_buckets.csv")
    }
    pub fn manifest(&self) -> PathBuf {
        self.dir.join("manifest.json")
    }
}

/// Run the whole pipeline and write every artifact into `out_dir`.
/// Data files are byte-identical across reruns of the same inputs and
/// config; the manifest carries wall times and is informational.
pub fn run_pipeline(
    config: &PipelineConfig,
    graph: &RoadGraph,
    raw: &[RawPoint],
    out_dir: &Path,
) -> Result<FleetSummary> {
    let started = Instant::now();
    let mut stage_times: Vec<(&str, f64)> = Vec::new();
    let timed = |name: &'static str, t: Instant, times: &mut Vec<(&str, f64)>| {
        times.push((name, t.elapsed().as_secs_f64()));
    };

    let t = Instant::now();
    let (matched, rejected) = stage_match(raw, graph, &config.matching.to_params());
    timed("match", t, &mut stage_times);

    let t = Instant::now();
    let grid_rows = stage_resample(
        &matched,
        graph,
        config.pipeline.dt_grid_s,
        config.pipeline.staleness_s,
    )?;
    let grid = GridData::new(grid_rows);
    timed("resample", t, &mut stage_times);

    let t = Instant::now();
    let set_rows = stage_cluster(&grid, graph, &config.cluster.to_params())?;
    let sets = SetData::new(set_rows)?;
    timed("cluster", t, &mut stage_times);

    let t = Instant::now();
    let mined = stage_mine(
        &sets,
        &grid,
        graph,
        config.mine.min_o,
        config.mine.min_t,
        config.pipeline.dt_grid_s,
        &config.cluster.to_params(),
    )?;
    timed("mine", t, &mut stage_times);

    let t = Instant::now();
    let (saving_rows, savings) = stage_fuel(&mined, &sets, &grid, graph, config)?;
    timed("fuel", t, &mut stage_times);

    let t = Instant::now();
    let report = stage_report(&mined, &sets, &grid, graph, &savings, config)?;
    timed("report", t, &mut stage_times);

    // all stages succeeded: write artifacts
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output dir {}", out_dir.display()))?;
    let paths = RunPaths::new(out_dir);
    let write = || -> Result<()> {
        crate::formats::write_matched(&paths.matched(), &matched)?;
        crate::formats::write_gridded(&paths.gridded(), &grid.rows)?;
        crate::formats::write_sets(&paths.sets(), &sets.rows)?;
        let pattern_rows: Vec<PatternRow> = mined.iter().map(|m| m.row.clone()).collect();
        crate::formats::write_patterns(&paths.patterns(), &pattern_rows)?;
        crate::formats::write_savings(&paths.savings(), &saving_rows)?;
        crate::formats::write_metrics(&paths.metrics(), &report.metrics_rows)?;
        crate::formats::write_fleet_summary(&paths.fleet(), &report.summary)?;
        crate::formats::write_hotspots_csv(&paths.hotspots_csv(), &report.hotspot_rows)?;
        std::fs::write(
            paths.hotspots_geojson(),
            serde_json::to_string_pretty(&crate::formats::hotspots_geojson(
                graph,
                &report.hotspot_rows,
            ))? + "\n",
        )?;
        crate::formats::write_haul_buckets(&paths.haul(), &report.haul_rows)?;
        Ok(())
    };
    if let Err(e) = write() {
        // drop partial outputs so reruns never see a half-written dir
        for p in [
            paths.matched(),
            paths.gridded(),
            paths.sets(),
            paths.patterns(),
            paths.savings(),
            paths.metrics(),
            paths.fleet(),
            paths.hotspots_csv(),
            paths.hotspots_geojson(),
            paths.haul(),
            paths.manifest(),
        ] {
            let _ = std::fs::remove_file(p);
        }
        return Err(e);
    }

    let mut hasher = Sha256::new();
    hasher.update(config.canonical_toml().as_bytes());
    let manifest = serde_json::json!({
        "config_sha256": format!("{:x}", hasher.finalize()),
        "counts": {
            "raw_points": raw.len(),
            "trucks_rejected": rejected,
            "matched_points": matched.len(),
            "grid_points": grid.rows.len(),
            "trucks": grid.interner.len(),
            "timesteps": grid.by_step.len(),
            "set_rows": sets.rows.len(),
            "patterns": mined.len(),
        },
        "wall_times_s": stage_times.iter().map(|(n, s)| serde_json::json!({"stage": n, "seconds": s})).collect::<Vec<_>>(),
        "total_wall_s": started.elapsed().as_secs_f64(),
    });
    std::fs::write(
        paths.manifest(),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(report.summary)
}
