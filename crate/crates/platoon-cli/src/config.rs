//! Pipeline configuration: one TOML file with a section per stage.
//!
//! Defaults are listed in the README together with their provenance
//! (calibrated values from the underlying model vs. choices of this
//! implementation). Every field is optional in the file; omitted fields
//! take the defaults below.

use std::path::Path;

use platoon_core::cluster::ClusterParams;
use platoon_core::fuel::FuelParams;
use platoon_core::mapmatch::HmmParams;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    pub radius_m: f64,
    pub sigma_m: f64,
    pub beta_m: f64,
    pub speed_weight: f64,
    pub max_skip: u32,
    pub max_speed_mps: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        let p = HmmParams::default();
        Self {
            radius_m: p.match_radius_m,
            sigma_m: p.emission_sigma_m,
            beta_m: p.transition_beta_m,
            speed_weight: p.speed_weight,
            max_skip: p.max_skip,
            max_speed_mps: p.max_speed_mps,
        }
    }
}

impl MatchConfig {
    pub fn to_params(&self) -> HmmParams {
        HmmParams {
            match_radius_m: self.radius_m,
            emission_sigma_m: self.sigma_m,
            transition_beta_m: self.beta_m,
            speed_weight: self.speed_weight,
            max_skip: self.max_skip,
            max_speed_mps: self.max_speed_mps,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub eps_km: f64,
    pub min_pts: usize,
    pub delta: f64,
    pub theta_thresh_deg: f64,
    pub lambda_thresh: f64,
    pub ete_cutoff_factor: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        let p = ClusterParams::default();
        Self {
            eps_km: p.eps_km,
            min_pts: p.min_pts,
            delta: p.delta,
            theta_thresh_deg: p.theta_thresh_deg,
            lambda_thresh: p.lambda_thresh,
            ete_cutoff_factor: p.ete_cutoff_factor,
        }
    }
}

impl ClusterConfig {
    pub fn to_params(&self) -> ClusterParams {
        ClusterParams {
            eps_km: self.eps_km,
            min_pts: self.min_pts,
            delta: self.delta,
            theta_thresh_deg: self.theta_thresh_deg,
            lambda_thresh: self.lambda_thresh,
            ete_cutoff_factor: self.ete_cutoff_factor,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MineConfig {
    pub min_o: usize,
    pub min_t: usize,
}

impl Default for MineConfig {
    fn default() -> Self {
        Self { min_o: 2, min_t: 2 }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum HeadwayStat {
    Mean,
    Max,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FuelConfig {
    pub rho_air: f64,
    pub frontal_area: f64,
    pub c_d: f64,
    pub c_r: f64,
    pub mass_kg: f64,
    pub g: f64,
    pub phi_lead: f64,
    pub phi_follow: f64,
    pub psi: f64,
    pub eta_eng: f64,
    pub rho_d: f64,
    pub substep_s: f64,
    /// Use the drag/rolling coefficients exactly as printed in the source
    /// table (swapped against physical convention).
    pub table2_verbatim: bool,
    /// Headway statistic feeding the 17x coordination rule.
    pub headway_stat: HeadwayStat,
}

impl Default for FuelConfig {
    fn default() -> Self {
        let p = FuelParams::default();
        Self {
            rho_air: p.rho_air,
            frontal_area: p.frontal_area,
            c_d: p.c_d,
            c_r: p.c_r,
            mass_kg: p.mass_kg,
            g: p.g,
            phi_lead: p.phi_lead,
            phi_follow: p.phi_follow,
            psi: p.psi,
            eta_eng: p.eta_eng,
            rho_d: p.rho_d,
            substep_s: p.substep_s,
            table2_verbatim: false,
            headway_stat: HeadwayStat::Mean,
        }
    }
}

impl FuelConfig {
    pub fn to_params(&self, dt_s: f64) -> FuelParams {
        let p = FuelParams {
            rho_air: self.rho_air,
            frontal_area: self.frontal_area,
            c_d: self.c_d,
            c_r: self.c_r,
            mass_kg: self.mass_kg,
            g: self.g,
            phi_lead: self.phi_lead,
            phi_follow: self.phi_follow,
            psi: self.psi,
            eta_eng: self.eta_eng,
            rho_d: self.rho_d,
            dt_s,
            substep_s: self.substep_s,
        };
        if self.table2_verbatim {
            p.with_verbatim_table_coefficients()
        } else {
            p
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Divide headway sums by gap count instead of the member count.
    pub per_gap_headway: bool,
    /// Aggregation window for the timestep metrics, seconds.
    pub window_s: u32,
    /// Bucket width for the daily haul distance breakdown, km.
    pub haul_bucket_km: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            per_gap_headway: false,
            window_s: 300,
            haul_bucket_km: 100.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    /// Snapshot grid step, seconds.
    pub dt_grid_s: u32,
    /// Maximum age of the last fix for a truck to stay in a snapshot.
    pub staleness_s: u32,
    /// Spatial index cell size for the road graph, metres.
    pub grid_cell_m: f64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            dt_grid_s: 15,
            staleness_s: 30,
            grid_cell_m: 50.0,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(rename = "match")]
    pub matching: MatchConfig,
    pub cluster: ClusterConfig,
    pub mine: MineConfig,
    pub fuel: FuelConfig,
    pub metrics: MetricsConfig,
    pub pipeline: PipelineSection,
}

impl PipelineConfig {
    pub fn from_path(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let cfg: PipelineConfig = toml::from_str(&text)
            .map_err(|e| anyhow::anyhow!("invalid config {}: {e}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(self.pipeline.dt_grid_s > 0, "dt_grid_s must be positive");
        anyhow::ensure!(
            self.pipeline.staleness_s >= self.pipeline.dt_grid_s,
            "staleness_s must be at least dt_grid_s"
        );
        anyhow::ensure!(self.cluster.eps_km > 0.0, "eps_km must be positive");
        anyhow::ensure!(self.cluster.min_pts >= 2, "min_pts must be at least 2");
        anyhow::ensure!(self.cluster.delta > 0.0, "delta must be positive");
        anyhow::ensure!(self.mine.min_o >= 2, "min_o must be at least 2");
        anyhow::ensure!(self.mine.min_t >= 1, "min_t must be at least 1");
        anyhow::ensure!(
            self.fuel.eta_eng > 0.0 && self.fuel.eta_eng <= 1.0,
            "eta_eng in (0,1]"
        );
        anyhow::ensure!(
            self.fuel.phi_lead <= 1.0 && self.fuel.phi_follow <= 1.0,
            "drag reduction coefficients cannot exceed 1"
        );
        Ok(())
    }

    /// Serialized form used for the run manifest hash.
    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
