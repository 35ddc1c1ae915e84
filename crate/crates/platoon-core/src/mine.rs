//! Spontaneous platoon pattern mining.
//!
//! A pattern pairs a truck set `O` with the maximal timestep set `T_max(O)`
//! on which all of `O` shares one co-driving set. Valid patterns meet the
//! size/time thresholds and both closure properties: `T = T_max(O)` makes
//! every pattern time-closed by construction, and a pattern is size-closed
//! iff no strict superset of `O` keeps the same timestep set.
//!
//! The miner runs a depth-first search over truck-index-ordered extensions
//! with four individually switchable pruning rules:
//!
//! * logical: too few higher-indexed trucks remain to reach `min_o`;
//! * a-priori: `|T_max(O)| < min_t` prunes the whole subtree;
//! * subset: a lower-indexed truck outside `O` co-occurs on all of
//!   `T_max(O)`, so every closed superset of this node was already found
//!   on an earlier branch;
//! * marginal: a higher-indexed truck keeps `T_max` unchanged, so the
//!   node itself is not size-closed.
//!
//! A final closure sweep over the collected candidates keeps the output
//! identical whichever rules are disabled.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::TruckId;

/// Per-timestep partition of active trucks into co-driving sets, indexed
/// for membership tests and per-truck timelines.
#[derive(Clone, Debug, Default)]
pub struct SnapshotIndex {
    n_steps: u32,
    /// Ordered member lists per set per step (ordering as produced by the
    /// clustering refinement; used downstream for chain roles).
    sets: BTreeMap<u32, Vec<Vec<TruckId>>>,
    /// Per truck: (step, set id within step), sorted by step.
    timelines: BTreeMap<TruckId, Vec<(u32, u32)>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IndexError {
    /// A truck appeared in two sets of the same timestep.
    DuplicateMembership { step: u32, truck: TruckId },
}

impl core::fmt::Display for IndexError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            IndexError::DuplicateMembership { step, truck } => {
                write!(f, "truck {truck} belongs to two sets at step {step}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for IndexError {}

impl SnapshotIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record the co-driving sets of one timestep.
    pub fn add_step(&mut self, step: u32, sets: Vec<Vec<TruckId>>) -> Result<(), IndexError> {
        let mut seen: Vec<TruckId> = sets.iter().flatten().copied().collect();
        seen.sort_unstable();
        if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
            return Err(IndexError::DuplicateMembership { step, truck: w[0] });
        }
        for (set_id, set) in sets.iter().enumerate() {
            for t in set {
                self.timelines
                    .entry(*t)
                    .or_default()
                    .push((step, set_id as u32));
            }
        }
        self.n_steps = self.n_steps.max(step + 1);
        self.sets.insert(step, sets);
        Ok(())
    }

    pub fn n_steps(&self) -> u32 {
        self.n_steps
    }

    pub fn trucks(&self) -> impl Iterator<Item = TruckId> + '_ {
        self.timelines.keys().copied()
    }

    /// Steps that actually carry sets, ascending.
    pub fn step_entries(&self) -> impl Iterator<Item = (u32, &[Vec<TruckId>])> {
        self.sets.iter().map(|(s, v)| (*s, v.as_slice()))
    }

    pub fn sets_at(&self, step: u32) -> &[Vec<TruckId>] {
        self.sets.get(&step).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Set id containing `truck` at `step`, if any.
    pub fn set_of(&self, step: u32, truck: TruckId) -> Option<u32> {
        let tl = self.timelines.get(&truck)?;
        tl.binary_search_by_key(&step, |e| e.0)
            .ok()
            .map(|i| tl[i].1)
    }

    fn timeline(&self, truck: TruckId) -> &[(u32, u32)] {
        self.timelines.get(&truck).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Timesteps at which every truck of `trucks` lies in one co-driving set.
/// Monotone: growing the truck set can only shrink the result.
pub fn t_max(index: &SnapshotIndex, trucks: &[TruckId]) -> Vec<u32> {
    match trucks.split_first() {
        None => Vec::new(),
        Some((first, rest)) => {
            let mut steps: Vec<u32> = index.timeline(*first).iter().map(|e| e.0).collect();
            for t in rest {
                steps.retain(|&s| {
                    index.set_of(s, *first).is_some()
                        && index.set_of(s, *t) == index.set_of(s, *first)
                });
            }
            steps
        }
    }
}

/// A mined pattern: truck set and its maximal shared timestep set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlatoonPattern {
    /// Ascending truck ids.
    pub trucks: Vec<TruckId>,
    /// Ascending timesteps; not necessarily consecutive.
    pub steps: Vec<u32>,
}

impl PlatoonPattern {
    /// Maximal runs of consecutive timesteps, as inclusive (first, last).
    pub fn runs(&self) -> Vec<(u32, u32)> {
        runs_of(&self.steps)
    }
}

/// Maximal consecutive runs of a sorted step sequence.
pub fn runs_of(steps: &[u32]) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    let mut iter = steps.iter().copied();
    let Some(first) = iter.next() else { return out };
    let (mut lo, mut hi) = (first, first);
    for s in iter {
        if s == hi + 1 {
            hi = s;
        } else {
            out.push((lo, hi));
            lo = s;
            hi = s;
        }
    }
    out.push((lo, hi));
    out
}

/// Which pruning rules the DFS applies; disabling any rule changes runtime
/// only, never the mined output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PruningFlags {
    pub logical: bool,
    pub apriori: bool,
    pub subset: bool,
    pub marginal: bool,
}

impl Default for PruningFlags {
    fn default() -> Self {
        Self {
            logical: true,
            apriori: true,
            subset: true,
            marginal: true,
        }
    }
}

impl PruningFlags {
    pub fn none() -> Self {
        Self {
            logical: false,
            apriori: false,
            subset: false,
            marginal: false,
        }
    }
}

/// Mine all valid spontaneous platoon patterns with default pruning.
pub fn mine_patterns(index: &SnapshotIndex, min_o: usize, min_t: usize) -> Vec<PlatoonPattern> {
    mine_patterns_with(index, min_o, min_t, PruningFlags::default())
}

struct Dfs<'a> {
    index: &'a SnapshotIndex,
    trucks: Vec<TruckId>,
    /// Trucks sharing at least one set with each truck, as indices into
    /// `trucks`, ascending.
    partners: Vec<Vec<usize>>,
    min_o: usize,
    min_t: usize,
    flags: PruningFlags,
    found: Vec<PlatoonPattern>,
}

impl<'a> Dfs<'a> {
    /// Steps of `base` that also have `truck` in the same set as `witness`
    /// (any member of the base set works as the witness).
    fn filter_steps(&self, base: &[u32], witness: TruckId, truck: TruckId) -> Vec<u32> {
        base.iter()
            .copied()
            .filter(|&s| {
                let w = self.index.set_of(s, witness);
                w.is_some() && self.index.set_of(s, truck) == w
            })
            .collect()
    }

    /// True when some truck outside `members` (drawn from `candidates`)
    /// co-occurs with them on every step of `steps`.
    fn absorbed_by(&self, members: &[usize], steps: &[u32], candidates: &[usize]) -> bool {
        let witness = self.trucks[members[0]];
        candidates.iter().any(|&c| {
            !members.contains(&c)
                && self.filter_steps(steps, witness, self.trucks[c]).len() == steps.len()
        })
    }

    fn recurse(&mut self, members: &mut Vec<usize>, steps: Vec<u32>, cands: Vec<usize>) {
        let k = self.trucks.len();
        let last = *members.last().unwrap();

        if self.flags.apriori && steps.len() < self.min_t {
            return;
        }
        if self.flags.logical && members.len() + k.saturating_sub(last + 1) < self.min_o {
            return;
        }

        if self.flags.subset {
            // a compatible lower-indexed truck means every closed superset
            // of this node lives on an earlier branch
            let lower: Vec<usize> = self.partners[members[0]]
                .iter()
                .copied()
                .filter(|&i| i < last && !members.contains(&i))
                .collect();
            if self.absorbed_by(members, &steps, &lower) {
                return;
            }
        }

        if members.len() >= self.min_o && steps.len() >= self.min_t {
            let emit = if self.flags.marginal {
                // size closure against higher-indexed extensions
                let higher: Vec<usize> = ((last + 1)..k).collect();
                !self.absorbed_by(members, &steps, &higher)
            } else {
                true
            };
            if emit {
                self.found.push(PlatoonPattern {
                    trucks: members.iter().map(|&i| self.trucks[i]).collect(),
                    steps: steps.clone(),
                });
            }
        }

        let witness = self.trucks[members[0]];
        for (pos, &c) in cands.iter().enumerate() {
            if c <= last {
                continue;
            }
            let sub_steps = self.filter_steps(&steps, witness, self.trucks[c]);
            if sub_steps.is_empty() {
                continue;
            }
            if self.flags.apriori && sub_steps.len() < self.min_t {
                continue;
            }
            let sub_cands: Vec<usize> = cands[pos + 1..]
                .iter()
                .copied()
                .filter(|&x| self.partners[c].binary_search(&x).is_ok())
                .collect();
            members.push(c);
            self.recurse(members, sub_steps, sub_cands);
            members.pop();
        }
    }
}

/// Mine with explicit pruning control. Output is sorted by
/// `(|O| desc, first timestep asc, lexicographic trucks)`.
pub fn mine_patterns_with(
    index: &SnapshotIndex,
    min_o: usize,
    min_t: usize,
    flags: PruningFlags,
) -> Vec<PlatoonPattern> {
    assert!(min_o >= 2, "min_o must be at least 2");
    assert!(min_t >= 1, "min_t must be at least 1");
    let trucks: Vec<TruckId> = index.trucks().collect();
    let k = trucks.len();
    let pos_of: BTreeMap<TruckId, usize> =
        trucks.iter().enumerate().map(|(i, t)| (*t, i)).collect();

    // co-occurrence partners per truck
    let mut partner_sets: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (_, sets) in index.step_entries() {
        for set in sets {
            for a in set {
                for b in set {
                    if a < b {
                        let (ia, ib) = (pos_of[a], pos_of[b]);
                        partner_sets[ia].push(ib);
                        partner_sets[ib].push(ia);
                    }
                }
            }
        }
    }
    for p in partner_sets.iter_mut() {
        p.sort_unstable();
        p.dedup();
    }

    let mut dfs = Dfs {
        index,
        trucks: trucks.clone(),
        partners: partner_sets,
        min_o,
        min_t,
        flags,
        found: Vec::new(),
    };

    for root in 0..k {
        if flags.logical && k - root < min_o {
            break;
        }
        let steps: Vec<u32> = index.timeline(trucks[root]).iter().map(|e| e.0).collect();
        if steps.is_empty() {
            continue;
        }
        let cands: Vec<usize> = dfs.partners[root]
            .iter()
            .copied()
            .filter(|&c| c > root)
            .collect();
        let mut members = vec![root];
        dfs.recurse(&mut members, steps, cands);
    }

    let found = dfs.found;
    // final closure sweep: drop any candidate dominated by a superset with
    // the same timestep set (no-op when both closure rules ran)
    let mut keep = vec![true; found.len()];
    for i in 0..found.len() {
        for j in 0..found.len() {
            if i == j || !keep[i] {
                continue;
            }
            if found[i].steps == found[j].steps
                && found[i].trucks.len() < found[j].trucks.len()
                && found[i]
                    .trucks
                    .iter()
                    .all(|t| found[j].trucks.binary_search(t).is_ok())
            {
                keep[i] = false;
            }
        }
    }
    let mut out: Vec<PlatoonPattern> = found
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect();
    out.sort_by(|a, b| {
        b.trucks
            .len()
            .cmp(&a.trucks.len())
            .then_with(|| a.steps.first().cmp(&b.steps.first()))
            .then_with(|| a.trucks.cmp(&b.trucks))
    });
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(id: u32) -> TruckId {
        TruckId(id)
    }

    fn index_from(steps: &[&[&[u32]]]) -> SnapshotIndex {
        let mut idx = SnapshotIndex::new();
        for (s, sets) in steps.iter().enumerate() {
            let sets: Vec<Vec<TruckId>> = sets
                .iter()
                .map(|m| m.iter().map(|&i| t(i)).collect())
                .collect();
            idx.add_step(s as u32, sets).unwrap();
        }
        idx
    }

    #[test]
    fn duplicate_membership_rejected() {
        let mut idx = SnapshotIndex::new();
        let err = idx.add_step(0, vec![vec![t(1), t(2)], vec![t(2), t(3)]]);
        assert_eq!(
            err,
            Err(IndexError::DuplicateMembership {
                step: 0,
                truck: t(2)
            })
        );
    }

    #[test]
    fn t_max_basics() {
        let idx = index_from(&[&[&[1, 2, 3]], &[&[1, 2], &[3, 4]], &[&[1, 3]]]);
        assert_eq!(t_max(&idx, &[t(1)]), vec![0, 1, 2]);
        assert_eq!(t_max(&idx, &[t(1), t(2)]), vec![0, 1]);
        assert_eq!(t_max(&idx, &[t(1), t(2), t(3)]), vec![0]);
        assert_eq!(t_max(&idx, &[t(2), t(4)]), Vec::<u32>::new());
        // monotone under supersets
        assert!(t_max(&idx, &[t(1), t(3)]).len() <= t_max(&idx, &[t(1)]).len());
    }

    #[test]
    fn single_timestep_fails_min_t() {
        let idx = index_from(&[&[&[1, 2, 3]]]);
        assert!(mine_patterns(&idx, 2, 2).is_empty());
    }

    #[test]
    fn worked_four_step_example() {
        // t0,t1: {a,b,c}; t2,t3: {a,b} → exactly two closed patterns
        let idx = index_from(&[&[&[1, 2, 3]], &[&[1, 2, 3]], &[&[1, 2]], &[&[1, 2]]]);
        let got = mine_patterns(&idx, 2, 2);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].trucks, vec![t(1), t(2), t(3)]);
        assert_eq!(got[0].steps, vec![0, 1]);
        assert_eq!(got[1].trucks, vec![t(1), t(2)]);
        assert_eq!(got[1].steps, vec![0, 1, 2, 3]);
    }

    #[test]
    fn no_pattern_is_dominated() {
        let idx = index_from(&[
            &[&[1, 2, 3, 4]],
            &[&[1, 2, 3]],
            &[&[1, 2], &[3, 4]],
            &[&[1, 2, 3, 4]],
        ]);
        let got = mine_patterns(&idx, 2, 2);
        for a in &got {
            for b in &got {
                if a == b {
                    continue;
                }
                let subset = a.trucks.iter().all(|x| b.trucks.contains(x));
                assert!(!(subset && a.steps == b.steps), "{a:?} dominated by {b:?}");
            }
        }
    }

    #[test]
    fn runs_segmentation() {
        assert_eq!(
            runs_of(&[1, 2, 3, 7, 8, 11]),
            vec![(1, 3), (7, 8), (11, 11)]
        );
        assert!(runs_of(&[]).is_empty());
    }

    #[test]
    fn pruning_flags_do_not_change_output() {
        let idx = index_from(&[
            &[&[1, 2], &[3, 4, 5]],
            &[&[1, 2, 3], &[4, 5]],
            &[&[1, 2, 3, 4, 5]],
            &[&[2, 3], &[4, 5]],
            &[&[1, 2], &[3, 4, 5]],
        ]);
        let baseline = mine_patterns_with(&idx, 2, 2, PruningFlags::default());
        let config = |logical, apriori, subset, marginal| PruningFlags {
            logical,
            apriori,
            subset,
            marginal,
        };
        for flags in [
            PruningFlags::none(),
            config(false, true, true, true),
            config(true, false, true, true),
            config(true, true, false, true),
            config(true, true, true, false),
        ] {
            assert_eq!(mine_patterns_with(&idx, 2, 2, flags), baseline, "{flags:?}");
        }
    }
}
