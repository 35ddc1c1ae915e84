//! Platooning performance measures: per-timestep co-driving ratio, headway
//! and size, fleet distance/time ratios and per-segment hotspot counts.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::graph::SegIdx;
use crate::mine::PlatoonPattern;
use crate::TruckId;

/// One co-driving set's contribution at a timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct SetStats {
    pub n_members: usize,
    /// Following distances between ordering-adjacent members, metres.
    pub gaps_m: Vec<f64>,
}

/// Instantaneous co-driving ratio: platooned trucks over available trucks.
/// `None` when no trucks are available.
pub fn icr(sets: &[SetStats], n_total: usize) -> Option<f64> {
    if n_total == 0 {
        return None;
    }
    let platooned: usize = sets.iter().map(|s| s.n_members).sum();
    Some(platooned as f64 / n_total as f64)
}

/// Instantaneous co-driving headway in metres: the printed formula divides
/// the gap sum by the member count; `per_gap` divides by the gap count
/// instead. `None` when no sets exist.
pub fn ich(sets: &[SetStats], per_gap: bool) -> Option<f64> {
    if sets.is_empty() {
        return None;
    }
    let gap_sum: f64 = sets.iter().flat_map(|s| s.gaps_m.iter()).sum();
    let denom = if per_gap {
        sets.iter().map(|s| s.gaps_m.len()).sum::<usize>() as f64
    } else {
        sets.iter().map(|s| s.n_members).sum::<usize>() as f64
    };
    (denom > 0.0).then(|| gap_sum / denom)
}

/// Instantaneous co-driving size: mean members per set. `None` when no
/// sets exist.
pub fn ics(sets: &[SetStats]) -> Option<f64> {
    if sets.is_empty() {
        return None;
    }
    let members: usize = sets.iter().map(|s| s.n_members).sum();
    Some(members as f64 / sets.len() as f64)
}

/// Associative accumulator for aggregating timestep metrics into windows;
/// keeps numerators and denominators so two-stage aggregation equals
/// single-stage.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WindowAgg {
    pub platooned: u64,
    pub available: u64,
    pub gap_sum_m: f64,
    pub gap_count: u64,
    pub member_sum: u64,
    pub set_count: u64,
}

impl WindowAgg {
    pub fn add_timestep(&mut self, sets: &[SetStats], n_total: usize) {
        self.available += n_total as u64;
        for s in sets {
            self.platooned += s.n_members as u64;
            self.member_sum += s.n_members as u64;
            self.gap_sum_m += s.gaps_m.iter().sum::<f64>();
            self.gap_count += s.gaps_m.len() as u64;
            self.set_count += 1;
        }
    }

    pub fn merge(&mut self, other: &WindowAgg) {
        self.platooned += other.platooned;
        self.available += other.available;
        self.gap_sum_m += other.gap_sum_m;
        self.gap_count += other.gap_count;
        self.member_sum += other.member_sum;
        self.set_count += other.set_count;
    }

    pub fn icr(&self) -> Option<f64> {
        (self.available > 0).then(|| self.platooned as f64 / self.available as f64)
    }

    pub fn ich_m(&self, per_gap: bool) -> Option<f64> {
        let denom = if per_gap {
            self.gap_count
        } else {
            self.member_sum
        };
        (denom > 0).then(|| self.gap_sum_m / denom as f64)
    }

    pub fn ics(&self) -> Option<f64> {
        (self.set_count > 0).then(|| self.member_sum as f64 / self.set_count as f64)
    }
}

/// Per-truck travel and platooning totals.
#[derive(Clone, Debug, PartialEq)]
pub struct TruckTotals {
    pub truck: TruckId,
    pub platooned_m: f64,
    pub total_m: f64,
    pub platooned_s: f64,
    pub total_s: f64,
}

/// Fleet-level platooning distance and time ratios.
#[derive(Clone, Debug, PartialEq)]
pub struct FleetMetrics {
    pub pdr: f64,
    pub ptr: f64,
    /// Number of available trucks.
    pub k: usize,
    pub per_truck: Vec<TruckTotals>,
}

/// Odometer samples per truck: `(grid step, cumulative metres)`, sorted.
pub type OdometerSeries = Vec<(u32, f64)>;

/// Union of the step intervals, merged and sorted.
pub fn union_intervals(mut intervals: Vec<(u32, u32)>) -> Vec<(u32, u32)> {
    intervals.sort_unstable();
    let mut out: Vec<(u32, u32)> = Vec::new();
    for (lo, hi) in intervals {
        match out.last_mut() {
            Some(last) if lo <= last.1.saturating_add(1) => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

/// Eqs for fleet ratios: per-truck platooned distance/time from the union
/// of the truck's pattern runs (overlapping patterns counted once), over
/// the truck's whole travelled distance/time.
pub fn pdr_ptr(
    patterns: &[PlatoonPattern],
    odometers: &BTreeMap<TruckId, OdometerSeries>,
    dt_s: f64,
) -> FleetMetrics {
    let mut runs_per_truck: BTreeMap<TruckId, Vec<(u32, u32)>> = BTreeMap::new();
    for p in patterns {
        for run in p.runs() {
            for t in &p.trucks {
                runs_per_truck.entry(*t).or_default().push(run);
            }
        }
    }

    let mut per_truck = Vec::with_capacity(odometers.len());
    let mut pd_sum = 0.0;
    let mut d_sum = 0.0;
    let mut pt_sum = 0.0;
    let mut t_sum = 0.0;
    for (truck, odo) in odometers {
        let mut total_m = 0.0;
        for w in odo.windows(2) {
            if w[1].0 == w[0].0 + 1 {
                total_m += w[1].1 - w[0].1;
            }
        }
        // time counts active grid steps, matching the |T| * dt convention
        let total_s = odo.len() as f64 * dt_s;
        let unioned = union_intervals(runs_per_truck.remove(truck).unwrap_or_default());
        let mut platooned_m = 0.0;
        let mut platooned_s = 0.0;
        for (lo, hi) in unioned {
            platooned_s += (hi - lo + 1) as f64 * dt_s;
            let at = |step: u32| -> Option<f64> {
                odo.binary_search_by_key(&step, |e| e.0)
                    .ok()
                    .map(|i| odo[i].1)
            };
            if let (Some(a), Some(b)) = (at(lo), at(hi)) {
                platooned_m += b - a;
            }
        }
        let platooned_m = platooned_m.min(total_m);
        let platooned_s = platooned_s.min(total_s);
        pd_sum += platooned_m;
        d_sum += total_m;
        pt_sum += platooned_s;
        t_sum += total_s;
        per_truck.push(TruckTotals {
            truck: *truck,
            platooned_m,
            total_m,
            platooned_s,
            total_s,
        });
    }
    FleetMetrics {
        pdr: if d_sum > 0.0 { pd_sum / d_sum } else { 0.0 },
        ptr: if t_sum > 0.0 { pt_sum / t_sum } else { 0.0 },
        k: per_truck.len(),
        per_truck,
    }
}

/// Count per segment of (pattern, timestep, member) placements, sorted by
/// descending count then segment index. `positions` maps each truck to its
/// gridded `(step, segment)` samples.
pub fn segment_hotspots(
    patterns: &[PlatoonPattern],
    positions: &BTreeMap<TruckId, Vec<(u32, SegIdx)>>,
) -> Vec<(SegIdx, u64)> {
    let mut counts: BTreeMap<SegIdx, u64> = BTreeMap::new();
    for p in patterns {
        for &step in &p.steps {
            for truck in &p.trucks {
                if let Some(samples) = positions.get(truck) {
                    if let Ok(i) = samples.binary_search_by_key(&step, |e| e.0) {
                        *counts.entry(samples[i].1).or_insert(0) += 1;
                    }
                }
            }
        }
    }
    let mut out: Vec<(SegIdx, u64)> = counts.into_iter().collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn set(n: usize, gaps: &[f64]) -> SetStats {
        SetStats {
            n_members: n,
            gaps_m: gaps.to_vec(),
        }
    }

    #[test]
    fn icr_cases() {
        assert_eq!(icr(&[set(3, &[100.0, 100.0])], 10), Some(0.3));
        assert_eq!(icr(&[], 10), Some(0.0));
        assert_eq!(icr(&[set(3, &[]), set(3, &[])], 6), Some(1.0));
        assert_eq!(icr(&[], 0), None);
    }

    #[test]
    fn ich_printed_formula_and_per_gap() {
        let sets = [set(3, &[100.0, 200.0])];
        assert_eq!(ich(&sets, false), Some(100.0)); // 300 / 3 members
        assert_eq!(ich(&sets, true), Some(150.0)); // 300 / 2 gaps
        assert_eq!(ich(&[set(2, &[150.0])], false), Some(75.0));
        assert_eq!(ich(&[], false), None);
        // brute-force recomputation over two sets
        let sets = [set(2, &[120.0]), set(4, &[80.0, 90.0, 100.0])];
        let total: f64 = 120.0 + 80.0 + 90.0 + 100.0;
        assert_eq!(ich(&sets, false), Some(total / 6.0));
    }

    #[test]
    fn ics_cases() {
        assert_eq!(ics(&[set(2, &[]), set(4, &[])]), Some(3.0));
        assert_eq!(ics(&[set(2, &[])]), Some(2.0));
        assert_eq!(ics(&[]), None);
    }

    #[test]
    fn window_aggregation_is_associative() {
        let steps: Vec<(Vec<SetStats>, usize)> = vec![
            (vec![set(2, &[100.0])], 5),
            (vec![set(3, &[50.0, 60.0]), set(2, &[200.0])], 8),
            (vec![], 3),
            (vec![set(4, &[10.0, 20.0, 30.0])], 6),
        ];
        let mut single = WindowAgg::default();
        for (sets, n) in &steps {
            single.add_timestep(sets, *n);
        }
        let mut first = WindowAgg::default();
        for (sets, n) in &steps[..2] {
            first.add_timestep(sets, *n);
        }
        let mut second = WindowAgg::default();
        for (sets, n) in &steps[2..] {
            second.add_timestep(sets, *n);
        }
        let mut merged = first;
        merged.merge(&second);
        assert_eq!(merged, single);
    }

    #[test]
    fn union_intervals_merges_overlaps() {
        assert_eq!(
            union_intervals(vec![(5, 8), (0, 2), (2, 4), (10, 11)]),
            vec![(0, 8), (10, 11)]
        );
    }

    #[test]
    fn pdr_ptr_union_counts_once() {
        // truck 1 drives 10 steps at 100 m/step; two overlapping patterns
        let odo: OdometerSeries = (0..10).map(|s| (s, s as f64 * 100.0)).collect();
        let mut odometers = BTreeMap::new();
        odometers.insert(TruckId(1), odo.clone());
        odometers.insert(TruckId(2), odo);
        let patterns = vec![
            PlatoonPattern {
                trucks: vec![TruckId(1), TruckId(2)],
                steps: (0..5).collect(),
            },
            PlatoonPattern {
                trucks: vec![TruckId(1), TruckId(2)],
                steps: (3..7).collect(),
            },
        ];
        let m = pdr_ptr(&patterns, &odometers, 15.0);
        // union steps 0..=6: distance 600 of 900, time 7 of 10 steps
        let t1 = &m.per_truck[0];
        assert_eq!(t1.platooned_m, 600.0);
        assert_eq!(t1.total_m, 900.0);
        assert_eq!(t1.platooned_s, 7.0 * 15.0);
        assert_eq!(t1.total_s, 10.0 * 15.0);
        assert!((m.pdr - 600.0 / 900.0).abs() < 1e-12);
        assert!((m.ptr - 7.0 / 10.0).abs() < 1e-12);
    }

    #[test]
    fn truck_without_patterns_counts_zero() {
        let mut odometers = BTreeMap::new();
        odometers.insert(TruckId(9), (0..4).map(|s| (s, s as f64 * 50.0)).collect());
        let m = pdr_ptr(&[], &odometers, 15.0);
        assert_eq!(m.per_truck[0].platooned_m, 0.0);
        assert_eq!(m.pdr, 0.0);
        assert_eq!(m.k, 1);
    }

    #[test]
    fn full_trip_platooned_is_upper_bound() {
        let odo: OdometerSeries = (0..4).map(|s| (s, s as f64 * 50.0)).collect();
        let mut odometers = BTreeMap::new();
        odometers.insert(TruckId(1), odo);
        let patterns = vec![PlatoonPattern {
            trucks: vec![TruckId(1)],
            steps: (0..4).collect(),
        }];
        let m = pdr_ptr(&patterns, &odometers, 15.0);
        assert_eq!(m.per_truck[0].platooned_m, m.per_truck[0].total_m);
        assert_eq!(m.per_truck[0].platooned_s, m.per_truck[0].total_s);
        assert_eq!(m.pdr, 1.0);
        assert_eq!(m.ptr, 1.0);
    }

    #[test]
    fn hotspot_counting_convention() {
        let mut positions = BTreeMap::new();
        for id in [1u32, 2] {
            positions.insert(TruckId(id), (0..4).map(|s| (s, SegIdx(7))).collect());
        }
        let patterns = vec![PlatoonPattern {
            trucks: vec![TruckId(1), TruckId(2)],
            steps: (0..4).collect(),
        }];
        let got = segment_hotspots(&patterns, &positions);
        assert_eq!(got, vec![(SegIdx(7), 8)]); // 2 trucks x 4 steps
        assert!(segment_hotspots(&[], &positions).is_empty());
    }
}
