//! Core algorithms for mining spontaneous truck platooning patterns from
//! GPS trajectories on a road network.
//!
//! The crate is `no_std`-compatible (requires `alloc`); enable the `libm`
//! feature when building without `std`. All types are plain data and all
//! functions are pure: IO, file formats and the CLI live in the companion
//! `platoon-cli` crate.
//!
//! Pipeline outline:
//!
//! 1. [`graph`]: directed road graph with spatial candidate search and
//!    no-U-turn shortest routes.
//! 2. [`mapmatch`]: HMM map matching that also decides the relative
//!    driving direction of each point (along / against segment direction).
//! 3. [`followdist`]: network-constrained following distance between two
//!    matched trucks at one instant.
//! 4. [`cluster`]: OPTICS ordering under the following-distance metric
//!    plus reachability-plot valley refinement (instantaneous co-driving
//!    sets).
//! 5. [`mine`]: closed platoon pattern mining over per-timestep sets.
//! 6. [`fuel`]: longitudinal fuel model and platoon coordination savings.
//! 7. [`metrics`]: fleet-level platooning performance measures.

#![cfg_attr(not(feature = "std"), no_std)]

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("platoon-core requires either the `std` or the `libm` feature");

extern crate alloc;

pub mod cluster;
pub mod followdist;
pub mod fuel;
pub mod geo;
pub mod graph;
pub mod mapmatch;
pub mod metrics;
pub mod mine;
pub(crate) mod numf;
pub mod route;

/// Dense truck identifier. Callers intern external ids (e.g. CSV strings)
/// into contiguous indices; ordering of `TruckId` is the canonical truck
/// ordering used for all deterministic tie-breaks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TruckId(pub u32);

impl core::fmt::Display for TruckId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "t{}", self.0)
    }
}
