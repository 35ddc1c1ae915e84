//! Longitudinal fuel consumption and platoon coordination savings.
//!
//! Traction force balances inertia, air drag (scaled by the platoon drag
//! reduction coefficient), rolling resistance and grade; fuel flow follows
//! from engine power with a braking gate. Interval fuel integrates the flow
//! over each grid step under the constant-acceleration assumption.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::mine::PlatoonPattern;
use crate::numf;
use crate::TruckId;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FuelParams {
    /// Air density, kg/m^3.
    pub rho_air: f64,
    /// Truck frontal area, m^2.
    pub frontal_area: f64,
    /// Air drag coefficient.
    pub c_d: f64,
    /// Rolling resistance coefficient.
    pub c_r: f64,
    /// Total truck mass, kg.
    pub mass_kg: f64,
    /// Gravitational acceleration, m/s^2.
    pub g: f64,
    /// Air drag multiplier for a platoon leader.
    pub phi_lead: f64,
    /// Air drag multiplier for a platoon follower.
    pub phi_follow: f64,
    /// Liquid-to-gas conversion factor, g/ml.
    pub psi: f64,
    /// Mean engine combustion efficiency.
    pub eta_eng: f64,
    /// Energy content of the fuel, J/g.
    pub rho_d: f64,
    /// Grid step, seconds.
    pub dt_s: f64,
    /// Integration substep for interval fuel, seconds.
    pub substep_s: f64,
}

impl Default for FuelParams {
    fn default() -> Self {
        Self {
            rho_air: 1.29,
            frontal_area: 10.26,
            c_d: 0.6,
            c_r: 0.007,
            mass_kg: 26_800.0,
            g: 9.8,
            phi_lead: 0.92,
            phi_follow: 0.72,
            psi: 0.737,
            eta_eng: 0.4,
            rho_d: 44_000.0,
            dt_s: 15.0,
            substep_s: 1.0,
        }
    }
}

impl FuelParams {
    /// The drag and rolling coefficients exactly as printed in the source
    /// parameter table (c_d and c_r swapped against physical convention).
    pub fn with_verbatim_table_coefficients(mut self) -> Self {
        core::mem::swap(&mut self.c_d, &mut self.c_r);
        self
    }
}

/// Role of a truck during one grid step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Alone,
    Leader,
    Follower,
}

impl Role {
    pub fn phi(self, params: &FuelParams) -> f64 {
        match self {
            Role::Alone => 1.0,
            Role::Leader => params.phi_lead,
            Role::Follower => params.phi_follow,
        }
    }
}

/// Kinematic state over one grid step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileStep {
    /// Speed at the step start, m/s.
    pub v_mps: f64,
    /// Constant acceleration across the step, m/s^2.
    pub a_mps2: f64,
    /// Road slope, radians.
    pub alpha_rad: f64,
}

/// Per-truck driving profile on the grid; steps may be sparse when the
/// truck was inactive.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DrivingProfile {
    /// (grid step, kinematics) sorted by step.
    pub steps: Vec<(u32, ProfileStep)>,
}

impl DrivingProfile {
    pub fn get(&self, step: u32) -> Option<&ProfileStep> {
        self.steps
            .binary_search_by_key(&step, |e| e.0)
            .ok()
            .map(|i| &self.steps[i].1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProfileError {
    NonMonotonicSteps,
}

impl core::fmt::Display for ProfileError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ProfileError::NonMonotonicSteps => write!(f, "grid steps must be strictly increasing"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ProfileError {}

/// Derive speed, acceleration and slope from gridded odometer/altitude
/// samples `(step, odometer_m, altitude_m)`. Each pair of consecutive
/// grid steps yields one profile step; acceleration additionally needs
/// the following sample and falls to zero at run ends. The last sample of
/// every active run carries the preceding interval's speed so a profile
/// covers all steps the truck was active on.
pub fn derive_profile(
    samples: &[(u32, f64, f64)],
    dt_s: f64,
) -> Result<DrivingProfile, ProfileError> {
    if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(ProfileError::NonMonotonicSteps);
    }
    let mut steps = Vec::new();
    for i in 0..samples.len() {
        let (k0, odo0, h0) = samples[i];
        match samples.get(i + 1) {
            Some(&(k1, odo1, h1)) if k1 == k0 + 1 => {
                let dist = odo1 - odo0;
                let v0 = dist / dt_s;
                // acceleration from the next consecutive interval's speed
                let a = match samples.get(i + 2) {
                    Some(&(k2, odo2, _)) if k2 == k1 + 1 => {
                        let v1 = (odo2 - odo1) / dt_s;
                        (v1 - v0) / dt_s
                    }
                    _ => 0.0,
                };
                let alpha = if dist > 0.0 {
                    numf::atan((h1 - h0) / dist)
                } else {
                    0.0
                };
                steps.push((
                    k0,
                    ProfileStep {
                        v_mps: v0,
                        a_mps2: a,
                        alpha_rad: alpha,
                    },
                ));
            }
            _ => {
                // run end: hold the previous interval's state
                let held = match i.checked_sub(1).map(|j| samples[j]) {
                    Some((kp, odop, _)) if kp + 1 == k0 => {
                        let v = (odo0 - odop) / dt_s;
                        let alpha = steps
                            .last()
                            .map_or(0.0, |(_, s): &(u32, ProfileStep)| s.alpha_rad);
                        ProfileStep {
                            v_mps: v,
                            a_mps2: 0.0,
                            alpha_rad: alpha,
                        }
                    }
                    _ => ProfileStep {
                        v_mps: 0.0,
                        a_mps2: 0.0,
                        alpha_rad: 0.0,
                    },
                };
                steps.push((k0, held));
            }
        }
    }
    Ok(DrivingProfile { steps })
}

/// Engine/braking force in newtons for one kinematic state under drag
/// multiplier `phi`; negative values mean braking.
pub fn traction_force(step: &ProfileStep, phi: f64, params: &FuelParams) -> f64 {
    let air =
        0.5 * params.rho_air * params.frontal_area * params.c_d * step.v_mps * step.v_mps * phi;
    let roll = params.mass_kg * params.g * params.c_r * numf::cos(step.alpha_rad);
    let grade = params.mass_kg * params.g * numf::sin(step.alpha_rad);
    params.mass_kg * step.a_mps2 + air + roll + grade
}

/// Instantaneous fuel flow in ml/s; zero while braking (`F_v < 0`).
pub fn fuel_rate(f_v: f64, v_mps: f64, params: &FuelParams) -> f64 {
    if f_v < 0.0 {
        return 0.0;
    }
    f_v * v_mps / (params.psi * params.eta_eng * params.rho_d)
}

/// Fuel burned over one grid step in ml, integrating the flow under the
/// constant-acceleration assumption with composite trapezoidal substeps.
pub fn step_fuel(step: &ProfileStep, phi: f64, params: &FuelParams) -> f64 {
    let dt = params.dt_s;
    let h = params.substep_s.clamp(1e-3, dt);
    let n = (dt / h) as usize;
    let n = n.max(1);
    let h = dt / n as f64;
    let rate_at = |tau: f64| {
        let v = (step.v_mps + step.a_mps2 * tau).max(0.0);
        let state = ProfileStep {
            v_mps: v,
            a_mps2: step.a_mps2,
            alpha_rad: step.alpha_rad,
        };
        fuel_rate(traction_force(&state, phi, params), v, params)
    };
    let mut total = 0.0;
    let mut compensation = 0.0;
    let mut add = |x: f64| {
        // Kahan summation keeps reductions order-stable
        let y = x - compensation;
        let t = total + y;
        compensation = (t - total) - y;
        total = t;
    };
    for i in 0..n {
        let a = rate_at(i as f64 * h);
        let b = rate_at((i + 1) as f64 * h);
        add(0.5 * (a + b) * h);
    }
    total
}

/// Total fuel over a profile slice with a drag multiplier per step, ml.
pub fn interval_fuel(steps: &[(ProfileStep, f64)], params: &FuelParams) -> f64 {
    let mut total = 0.0;
    let mut compensation = 0.0;
    for (step, phi) in steps {
        let x = step_fuel(step, *phi, params);
        let y = x - compensation;
        let t = total + y;
        compensation = (t - total) - y;
        total = t;
    }
    total
}

/// Ordered members of one consecutive run of a pattern, front truck first.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOrder {
    pub first_step: u32,
    pub last_step: u32,
    /// Members front-first, as resolved from the following-distance chain
    /// at the run's first timestep.
    pub ordered: Vec<TruckId>,
}

/// One pattern's inputs to the savings computation.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternFuelInput {
    pub pattern: PlatoonPattern,
    /// Group travel distance over the pattern's runs, metres.
    pub overlap_m: f64,
    /// Headway statistic used by the coordination rule, metres.
    pub headway_m: f64,
    pub runs: Vec<RunOrder>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatternSaving {
    pub coordinable: bool,
    pub overlap_m: f64,
    pub headway_m: f64,
    pub baseline_ml: f64,
    pub platooned_ml: f64,
    pub saving_pct: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SavingsReport {
    pub per_pattern: Vec<PatternSaving>,
    /// Fleet fuel across all profiles with every truck driving alone, ml.
    pub fleet_baseline_ml: f64,
    /// Fleet fuel with coordinable patterns platooned, ml.
    pub fleet_platooned_ml: f64,
    pub fleet_saving_pct: f64,
    pub patterns_total: usize,
    pub patterns_coordinable: usize,
    /// Patterns skipped because profile coverage was missing.
    pub patterns_missing_profile: usize,
}

/// Multiple of the headway the overlap distance must exceed before speed
/// coordination pays off.
pub const COORDINATION_HEADWAY_FACTOR: f64 = 17.0;

/// Evaluate fleet savings: a pattern is coordinable when its overlap
/// distance exceeds 17 times its headway; coordinable patterns assign the
/// leader/follower drag multipliers along each run, competing assignments
/// resolving to the stronger reduction.
pub fn platoon_savings(
    inputs: &[PatternFuelInput],
    profiles: &BTreeMap<TruckId, DrivingProfile>,
    params: &FuelParams,
) -> SavingsReport {
    let mut per_pattern = Vec::with_capacity(inputs.len());
    // fleet-wide role assignment: (truck, step) -> phi
    let mut role_phi: BTreeMap<(TruckId, u32), f64> = BTreeMap::new();
    let mut missing = 0usize;
    let mut coordinable_count = 0usize;

    for input in inputs {
        let covered = input.pattern.trucks.iter().all(|t| {
            profiles
                .get(t)
                .map(|p| {
                    input
                        .runs
                        .iter()
                        .all(|r| (r.first_step..=r.last_step).all(|s| p.get(s).is_some()))
                })
                .unwrap_or(false)
        });
        if !covered {
            missing += 1;
            per_pattern.push(PatternSaving {
                coordinable: false,
                overlap_m: input.overlap_m,
                headway_m: input.headway_m,
                baseline_ml: f64::NAN,
                platooned_ml: f64::NAN,
                saving_pct: f64::NAN,
            });
            continue;
        }
        let coordinable = input.overlap_m > COORDINATION_HEADWAY_FACTOR * input.headway_m;
        let mut baseline = 0.0;
        let mut platooned = 0.0;
        for run in &input.runs {
            for (pos, truck) in run.ordered.iter().enumerate() {
                let role = if pos == 0 {
                    Role::Leader
                } else {
                    Role::Follower
                };
                let profile = &profiles[truck];
                for s in run.first_step..=run.last_step {
                    let step = profile.get(s).expect("coverage checked above");
                    let base = step_fuel(step, 1.0, params);
                    baseline += base;
                    if coordinable {
                        let phi = role.phi(params);
                        platooned += step_fuel(step, phi, params);
                        let slot = role_phi.entry((*truck, s)).or_insert(1.0);
                        *slot = slot.min(phi);
                    } else {
                        platooned += base;
                    }
                }
            }
        }
        if coordinable {
            coordinable_count += 1;
        }
        let saving_pct = if baseline > 0.0 {
            (baseline - platooned) / baseline * 100.0
        } else {
            0.0
        };
        per_pattern.push(PatternSaving {
            coordinable,
            overlap_m: input.overlap_m,
            headway_m: input.headway_m,
            baseline_ml: baseline,
            platooned_ml: platooned,
            saving_pct,
        });
    }

    // fleet totals over every profiled step
    let mut fleet_baseline = 0.0;
    let mut fleet_platooned = 0.0;
    let mut comp_b = 0.0;
    let mut comp_p = 0.0;
    for (truck, profile) in profiles {
        for (step, state) in &profile.steps {
            let base = step_fuel(state, 1.0, params);
            let phi = role_phi.get(&(*truck, *step)).copied().unwrap_or(1.0);
            let plat = if phi == 1.0 {
                base
            } else {
                step_fuel(state, phi, params)
            };
            let y = base - comp_b;
            let t = fleet_baseline + y;
            comp_b = (t - fleet_baseline) - y;
            fleet_baseline = t;
            let y = plat - comp_p;
            let t = fleet_platooned + y;
            comp_p = (t - fleet_platooned) - y;
            fleet_platooned = t;
        }
    }
    let fleet_saving_pct = if fleet_baseline > 0.0 {
        (fleet_baseline - fleet_platooned) / fleet_baseline * 100.0
    } else {
        0.0
    };
    SavingsReport {
        per_pattern,
        fleet_baseline_ml: fleet_baseline,
        fleet_platooned_ml: fleet_platooned,
        fleet_saving_pct,
        patterns_total: inputs.len(),
        patterns_coordinable: coordinable_count,
        patterns_missing_profile: missing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn flat(v: f64) -> ProfileStep {
        ProfileStep {
            v_mps: v,
            a_mps2: 0.0,
            alpha_rad: 0.0,
        }
    }

    #[test]
    fn traction_statics() {
        let p = FuelParams::default();
        let f = traction_force(&flat(0.0), 1.0, &p);
        assert_relative_eq!(f, p.mass_kg * p.g * p.c_r, max_relative = 1e-12);
    }

    #[test]
    fn traction_reference_value() {
        // independent evaluation: 0.5*1.29*10.26*0.6*400 + 26800*9.8*0.007
        let p = FuelParams::default();
        let air: f64 = 0.5 * 1.29 * 10.26 * 0.6 * 20.0 * 20.0;
        let roll: f64 = 26_800.0 * 9.8 * 0.007;
        let expect = air + roll;
        assert!(
            (expect - 3426.69).abs() < 0.5,
            "hand value sanity: {expect}"
        );
        assert_relative_eq!(
            traction_force(&flat(20.0), 1.0, &p),
            expect,
            max_relative = 1e-12
        );
    }

    #[test]
    fn steep_descent_brakes() {
        let p = FuelParams::default();
        let step = ProfileStep {
            v_mps: 5.0,
            a_mps2: 0.0,
            alpha_rad: -0.05,
        };
        // sin(-0.05) ≈ -0.04998 dominates c_r*cos ≈ 0.007
        assert!(traction_force(&step, 1.0, &p) < 0.0);
        assert_eq!(fuel_rate(traction_force(&step, 1.0, &p), 5.0, &p), 0.0);
    }

    #[test]
    fn fuel_rate_reference_value() {
        let p = FuelParams::default();
        let f = traction_force(&flat(20.0), 1.0, &p);
        let rate = fuel_rate(f, 20.0, &p);
        let expect = f * 20.0 / (0.737 * 0.4 * 44_000.0);
        assert_relative_eq!(rate, expect, max_relative = 1e-12);
        assert!((rate - 5.28).abs() < 0.01, "rate = {rate}");
        assert_eq!(fuel_rate(f, 0.0, &p), 0.0);
    }

    #[test]
    fn verbatim_table_swaps_coefficients() {
        let p = FuelParams::default().with_verbatim_table_coefficients();
        assert_eq!(p.c_d, 0.007);
        assert_eq!(p.c_r, 0.6);
    }

    #[test]
    fn interval_fuel_constant_speed() {
        let p = FuelParams::default();
        let rate = fuel_rate(traction_force(&flat(20.0), 1.0, &p), 20.0, &p);
        let total = interval_fuel(&[(flat(20.0), 1.0)], &p);
        assert_relative_eq!(total, rate * p.dt_s, max_relative = 1e-9);
        assert_eq!(interval_fuel(&[(flat(0.0), 1.0)], &p), 0.0);
    }

    #[test]
    fn interval_fuel_matches_fine_integration() {
        let p = FuelParams::default();
        let steps: Vec<(ProfileStep, f64)> = (0..40)
            .map(|i| {
                let v = 12.0 + 6.0 * numf::sin(i as f64 * 0.4);
                let a = (6.0 * 0.4) * numf::cos(i as f64 * 0.4) / p.dt_s;
                let alpha = 0.01 * numf::sin(i as f64 * 0.15);
                (
                    ProfileStep {
                        v_mps: v,
                        a_mps2: a,
                        alpha_rad: alpha,
                    },
                    1.0,
                )
            })
            .collect();
        let coarse = interval_fuel(&steps, &p);
        let fine_params = FuelParams {
            substep_s: 0.1,
            ..p
        };
        let fine = interval_fuel(&steps, &fine_params);
        assert!(
            (coarse - fine).abs() / fine < 0.01,
            "coarse {coarse} vs fine {fine}"
        );
        // convergence: halving the substep moves totals by well under 0.5%
        let half = interval_fuel(
            &steps,
            &FuelParams {
                substep_s: 0.5,
                ..p
            },
        );
        assert!((coarse - half).abs() / half < 0.005);
    }

    #[test]
    fn derive_profile_flat_acceleration() {
        // 10 -> 13 m/s over one 15 s step on flat ground
        let dt = 15.0;
        let samples = [
            (0u32, 0.0, 100.0),
            (1u32, 150.0, 100.0),
            (2u32, 345.0, 100.0),
        ];
        let profile = derive_profile(&samples, dt).unwrap();
        let s0 = profile.get(0).unwrap();
        assert_relative_eq!(s0.v_mps, 10.0, max_relative = 1e-12);
        assert_relative_eq!(s0.a_mps2, 0.2, max_relative = 1e-9);
        assert_eq!(s0.alpha_rad, 0.0);
    }

    #[test]
    fn derive_profile_stationary_and_grade() {
        let samples = [(0u32, 0.0, 0.0), (1u32, 0.0, 0.0)];
        let p = derive_profile(&samples, 15.0).unwrap();
        let s = p.get(0).unwrap();
        assert_eq!((s.v_mps, s.a_mps2, s.alpha_rad), (0.0, 0.0, 0.0));
        // 5% grade: altitude rises 5 m per 100 m travelled
        let samples = [(0u32, 0.0, 0.0), (1u32, 100.0, 5.0), (2u32, 200.0, 10.0)];
        let p = derive_profile(&samples, 15.0).unwrap();
        assert_relative_eq!(
            p.get(0).unwrap().alpha_rad,
            numf::atan(0.05),
            max_relative = 1e-12
        );
        assert!(derive_profile(&[(3, 0.0, 0.0), (3, 1.0, 0.0)], 15.0).is_err());
    }

    #[test]
    fn follower_ratio_closed_form() {
        let p = FuelParams::default();
        let air = 0.5 * p.rho_air * p.frontal_area * p.c_d * 400.0;
        let roll = p.mass_kg * p.g * p.c_r;
        let expect_ratio = (air * p.phi_follow + roll) / (air + roll);
        let base = step_fuel(&flat(20.0), 1.0, &p);
        let follow = step_fuel(&flat(20.0), p.phi_follow, &p);
        assert_relative_eq!(follow / base, expect_ratio, max_relative = 1e-9);
        // about 13% saving with the resolved defaults
        assert!(((1.0 - expect_ratio) * 100.0 - 12.98).abs() < 0.05);
    }

    #[test]
    fn phi_monotonicity() {
        let p = FuelParams::default();
        let step = ProfileStep {
            v_mps: 17.0,
            a_mps2: 0.3,
            alpha_rad: 0.01,
        };
        let f1 = step_fuel(&step, 0.7, &p);
        let f2 = step_fuel(&step, 0.9, &p);
        let f3 = step_fuel(&step, 1.0, &p);
        assert!(f1 <= f2 && f2 <= f3);
    }

    #[test]
    fn savings_coordination_rule() {
        let p = FuelParams::default();
        let mut profiles = BTreeMap::new();
        for id in 0..2u32 {
            let steps = (0..10).map(|s| (s, flat(20.0))).collect();
            profiles.insert(TruckId(id), DrivingProfile { steps });
        }
        let pattern = PlatoonPattern {
            trucks: vec![TruckId(0), TruckId(1)],
            steps: (0..10).collect(),
        };
        let runs = vec![RunOrder {
            first_step: 0,
            last_step: 9,
            ordered: vec![TruckId(1), TruckId(0)],
        }];
        // overlap 1 km, headway 200 m → 1000 < 3400: not coordinable
        let not_coordinable = PatternFuelInput {
            pattern: pattern.clone(),
            overlap_m: 1000.0,
            headway_m: 200.0,
            runs: runs.clone(),
        };
        let report = platoon_savings(&[not_coordinable], &profiles, &p);
        assert!(!report.per_pattern[0].coordinable);
        assert_eq!(report.fleet_baseline_ml, report.fleet_platooned_ml);
        // overlap 4 km, headway 200 m → coordinable, fuel drops
        let coordinable = PatternFuelInput {
            pattern,
            overlap_m: 4000.0,
            headway_m: 200.0,
            runs,
        };
        let report = platoon_savings(&[coordinable], &profiles, &p);
        assert!(report.per_pattern[0].coordinable);
        assert!(report.fleet_platooned_ml < report.fleet_baseline_ml);
        assert!(report.per_pattern[0].saving_pct > 0.0);
    }

    #[test]
    fn all_braking_pattern_saves_nothing() {
        let p = FuelParams::default();
        let downhill = ProfileStep {
            v_mps: 10.0,
            a_mps2: 0.0,
            alpha_rad: -0.1,
        };
        let mut profiles = BTreeMap::new();
        for id in 0..2u32 {
            profiles.insert(
                TruckId(id),
                DrivingProfile {
                    steps: (0..4).map(|s| (s, downhill)).collect(),
                },
            );
        }
        let pattern = PlatoonPattern {
            trucks: vec![TruckId(0), TruckId(1)],
            steps: (0..4).collect(),
        };
        let input = PatternFuelInput {
            pattern,
            overlap_m: 10_000.0,
            headway_m: 100.0,
            runs: vec![RunOrder {
                first_step: 0,
                last_step: 3,
                ordered: vec![TruckId(0), TruckId(1)],
            }],
        };
        let report = platoon_savings(&[input], &profiles, &p);
        assert!(report.per_pattern[0].coordinable);
        assert_eq!(report.per_pattern[0].baseline_ml, 0.0);
        assert_eq!(report.per_pattern[0].platooned_ml, 0.0);
        assert_eq!(report.fleet_saving_pct, 0.0);
    }
}
