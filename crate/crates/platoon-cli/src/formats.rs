//! CSV and GeoJSON formats exchanged between pipeline stages.
//!
//! All files carry external (string) truck and segment ids; floats are
//! written with fixed precision so reruns produce byte-identical files.

use std::path::Path;

use platoon_core::graph::RoadGraph;
use platoon_core::mapmatch::Dir;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: u64,
        msg: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> FormatError {
    FormatError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

pub(crate) fn io_err(
    path: &Path,
    e: impl Into<Box<dyn std::error::Error + Send + Sync>>,
) -> FormatError {
    FormatError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    }
}

/// Quantize to `decimals` places. Rows are quantized when constructed so
/// that in-memory pipelines and file-mediated pipelines compute on
/// identical values (the writers then print exactly these quantities).
pub fn q(x: f64, decimals: i32) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let scale = 10f64.powi(decimals);
    (x * scale).round() / scale
}

/// One raw trajectory row. `truck_id,timestamp,lon,lat,altitude_m[,speed_mps]`
#[derive(Clone, Debug, PartialEq)]
pub struct RawPoint {
    pub truck_id: String,
    pub ts: i64,
    pub lon: f64,
    pub lat: f64,
    pub altitude_m: f64,
    pub speed_mps: Option<f64>,
}

pub fn read_trajectories(path: &Path) -> Result<Vec<RawPoint>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| io_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() < 5 {
            return Err(parse_err(
                path,
                line,
                "expected truck_id,timestamp,lon,lat,altitude_m[,speed_mps]",
            ));
        }
        let get = |i: usize, what: &str| -> Result<f64, FormatError> {
            record[i]
                .parse()
                .map_err(|e| parse_err(path, line, format!("bad {what}: {e}")))
        };
        let ts: i64 = record[1]
            .parse()
            .map_err(|e| parse_err(path, line, format!("bad timestamp: {e}")))?;
        let speed = match record.get(5) {
            Some(s) if !s.is_empty() => Some(get(5, "speed_mps")?),
            _ => None,
        };
        out.push(RawPoint {
            truck_id: record[0].to_string(),
            ts,
            lon: get(2, "lon")?,
            lat: get(3, "lat")?,
            altitude_m: get(4, "altitude_m")?,
            speed_mps: speed,
        });
    }
    Ok(out)
}

pub fn write_trajectories(path: &Path, rows: &[RawPoint]) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record([
        "truck_id",
        "timestamp",
        "lon",
        "lat",
        "altitude_m",
        "speed_mps",
    ])
    .map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record([
            r.truck_id.as_str(),
            &r.ts.to_string(),
            &format!("{:.7}", r.lon),
            &format!("{:.7}", r.lat),
            &format!("{:.2}", r.altitude_m),
            &r.speed_mps.map_or(String::new(), |v| format!("{v:.2}")),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// One matched row. `truck_id,timestamp,segment_id,r,dir,snap_lon,snap_lat,altitude_m`
#[derive(Clone, Debug, PartialEq)]
pub struct MatchedRow {
    pub truck_id: String,
    pub ts: i64,
    pub segment_id: String,
    pub r: f64,
    pub dir: Dir,
    pub snap_lon: f64,
    pub snap_lat: f64,
    pub altitude_m: f64,
}

fn dir_to_str(dir: Dir) -> &'static str {
    match dir {
        Dir::Along => "0",
        Dir::Against => "-1",
    }
}

fn dir_from_str(s: &str) -> Option<Dir> {
    s.parse::<i32>().ok().and_then(Dir::from_code)
}

pub fn write_matched(path: &Path, rows: &[MatchedRow]) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record([
        "truck_id",
        "timestamp",
        "segment_id",
        "r",
        "dir",
        "snap_lon",
        "snap_lat",
        "altitude_m",
    ])
    .map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record([
            r.truck_id.as_str(),
            &r.ts.to_string(),
            r.segment_id.as_str(),
            &format!("{:.6}", r.r),
            dir_to_str(r.dir),
            &format!("{:.7}", r.snap_lon),
            &format!("{:.7}", r.snap_lat),
            &format!("{:.2}", r.altitude_m),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_matched(path: &Path) -> Result<Vec<MatchedRow>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| io_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() < 8 {
            return Err(parse_err(path, line, "expected 8 matched columns"));
        }
        let f = |i: usize| -> Result<f64, FormatError> {
            record[i]
                .parse()
                .map_err(|e| parse_err(path, line, format!("bad float in column {i}: {e}")))
        };
        out.push(MatchedRow {
            truck_id: record[0].to_string(),
            ts: record[1]
                .parse()
                .map_err(|e| parse_err(path, line, format!("bad timestamp: {e}")))?,
            segment_id: record[2].to_string(),
            r: f(3)?,
            dir: dir_from_str(&record[4])
                .ok_or_else(|| parse_err(path, line, format!("bad dir `{}`", &record[4])))?,
            snap_lon: f(5)?,
            snap_lat: f(6)?,
            altitude_m: f(7)?,
        });
    }
    Ok(out)
}

/// One gridded row. `truck_id,timestep,segment_id,r,dir,snap_lon,snap_lat,altitude_m,odo_m`
#[derive(Clone, Debug, PartialEq)]
pub struct GridRow {
    pub truck_id: String,
    pub step: u32,
    pub segment_id: String,
    pub r: f64,
    pub dir: Dir,
    pub snap_lon: f64,
    pub snap_lat: f64,
    pub altitude_m: f64,
    pub odo_m: f64,
}

pub fn write_gridded(path: &Path, rows: &[GridRow]) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record([
        "truck_id",
        "timestep",
        "segment_id",
        "r",
        "dir",
        "snap_lon",
        "snap_lat",
        "altitude_m",
        "odo_m",
    ])
    .map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record([
            r.truck_id.as_str(),
            &r.step.to_string(),
            r.segment_id.as_str(),
            &format!("{:.6}", r.r),
            dir_to_str(r.dir),
            &format!("{:.7}", r.snap_lon),
            &format!("{:.7}", r.snap_lat),
            &format!("{:.2}", r.altitude_m),
            &format!("{:.3}", r.odo_m),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_gridded(path: &Path) -> Result<Vec<GridRow>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| io_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() < 9 {
            return Err(parse_err(path, line, "expected 9 gridded columns"));
        }
        let f = |i: usize| -> Result<f64, FormatError> {
            record[i]
                .parse()
                .map_err(|e| parse_err(path, line, format!("bad float in column {i}: {e}")))
        };
        out.push(GridRow {
            truck_id: record[0].to_string(),
            step: record[1]
                .parse()
                .map_err(|e| parse_err(path, line, format!("bad timestep: {e}")))?,
            segment_id: record[2].to_string(),
            r: f(3)?,
            dir: dir_from_str(&record[4])
                .ok_or_else(|| parse_err(path, line, format!("bad dir `{}`", &record[4])))?,
            snap_lon: f(5)?,
            snap_lat: f(6)?,
            altitude_m: f(7)?,
            odo_m: f(8)?,
        });
    }
    Ok(out)
}

/// One co-driving set membership row, written in refined ordering order.
/// `timestep,set_id,truck_id,segment_id,r,dir,road_class`
#[derive(Clone, Debug, PartialEq)]
pub struct SetRow {
    pub step: u32,
    pub set_id: u32,
    pub truck_id: String,
    pub segment_id: String,
    pub r: f64,
    pub dir: Dir,
    pub road_class: String,
}

pub fn write_sets(path: &Path, rows: &[SetRow]) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record([
        "timestep",
        "set_id",
        "truck_id",
        "segment_id",
        "r",
        "dir",
        "road_class",
    ])
    .map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record([
            &r.step.to_string(),
            &r.set_id.to_string(),
            r.truck_id.as_str(),
            r.segment_id.as_str(),
            &format!("{:.6}", r.r),
            dir_to_str(r.dir),
            r.road_class.as_str(),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_sets(path: &Path) -> Result<Vec<SetRow>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| io_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() < 7 {
            return Err(parse_err(path, line, "expected 7 set columns"));
        }
        out.push(SetRow {
            step: record[0]
                .parse()
                .map_err(|e| parse_err(path, line, format!("bad timestep: {e}")))?,
            set_id: record[1]
                .parse()
                .map_err(|e| parse_err(path, line, format!("bad set_id: {e}")))?,
            truck_id: record[2].to_string(),
            segment_id: record[3].to_string(),
            r: record[4]
                .parse()
                .map_err(|e| parse_err(path, line, format!("bad r: {e}")))?,
            dir: dir_from_str(&record[5])
                .ok_or_else(|| parse_err(path, line, format!("bad dir `{}`", &record[5])))?,
            road_class: record[6].to_string(),
        });
    }
    Ok(out)
}

/// One mined pattern row.
/// `pattern_id,truck_ids,first_ts,last_ts,n_timesteps,duration_s,distance_km,mean_headway_m,n_runs`
#[derive(Clone, Debug, PartialEq)]
pub struct PatternRow {
    pub pattern_id: u32,
    /// Semicolon-joined external truck ids, ascending.
    pub truck_ids: String,
    pub first_ts: u32,
    pub last_ts: u32,
    pub n_timesteps: u32,
    pub duration_s: f64,
    pub distance_km: f64,
    pub mean_headway_m: f64,
    pub n_runs: u32,
}

pub fn write_patterns(path: &Path, rows: &[PatternRow]) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record([
        "pattern_id",
        "truck_ids",
        "first_ts",
        "last_ts",
        "n_timesteps",
        "duration_s",
        "distance_km",
        "mean_headway_m",
        "n_runs",
    ])
    .map_err(|e| io_err(path, e))?;
    let opt = |v: f64, prec: usize| {
        if v.is_nan() {
            String::new()
        } else {
            format!("{v:.prec$}")
        }
    };
    for r in rows {
        w.write_record([
            &r.pattern_id.to_string(),
            r.truck_ids.as_str(),
            &r.first_ts.to_string(),
            &r.last_ts.to_string(),
            &r.n_timesteps.to_string(),
            &format!("{:.1}", r.duration_s),
            &opt(r.distance_km, 4),
            &opt(r.mean_headway_m, 2),
            &r.n_runs.to_string(),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_patterns(path: &Path) -> Result<Vec<PatternRow>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| io_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() < 9 {
            return Err(parse_err(path, line, "expected 9 pattern columns"));
        }
        let u = |i: usize| -> Result<u32, FormatError> {
            record[i]
                .parse()
                .map_err(|e| parse_err(path, line, format!("bad integer in column {i}: {e}")))
        };
        let f = |i: usize| -> Result<f64, FormatError> {
            if record[i].is_empty() {
                return Ok(f64::NAN);
            }
            record[i]
                .parse()
                .map_err(|e| parse_err(path, line, format!("bad float in column {i}: {e}")))
        };
        out.push(PatternRow {
            pattern_id: u(0)?,
            truck_ids: record[1].to_string(),
            first_ts: u(2)?,
            last_ts: u(3)?,
            n_timesteps: u(4)?,
            duration_s: f(5)?,
            distance_km: f(6)?,
            mean_headway_m: f(7)?,
            n_runs: u(8)?,
        });
    }
    Ok(out)
}

/// One savings row.
/// `pattern_id,coordinable,overlap_km,mean_headway_m,baseline_ml,platooned_ml,saving_pct`
#[derive(Clone, Debug, PartialEq)]
pub struct SavingRow {
    pub pattern_id: u32,
    pub coordinable: bool,
    pub overlap_km: f64,
    pub mean_headway_m: f64,
    pub baseline_ml: f64,
    pub platooned_ml: f64,
    pub saving_pct: f64,
}

pub fn write_savings(path: &Path, rows: &[SavingRow]) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record([
        "pattern_id",
        "coordinable",
        "overlap_km",
        "mean_headway_m",
        "baseline_ml",
        "platooned_ml",
        "saving_pct",
    ])
    .map_err(|e| io_err(path, e))?;
    for r in rows {
        let fmt_opt = |v: f64, prec: usize| {
            if v.is_nan() {
                String::new()
            } else {
                format!("{v:.prec$}")
            }
        };
        w.write_record([
            &r.pattern_id.to_string(),
            &(if r.coordinable { "true" } else { "false" }).to_string(),
            &format!("{:.4}", r.overlap_km),
            &format!("{:.2}", r.mean_headway_m),
            &fmt_opt(r.baseline_ml, 3),
            &fmt_opt(r.platooned_ml, 3),
            &fmt_opt(r.saving_pct, 3),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Windowed metrics row: `window_start,road_class,n_total,icr,ich_m,ics`
/// with empty cells for undefined values.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub window_start: u32,
    pub road_class: String,
    pub n_total_mean: f64,
    pub icr: Option<f64>,
    pub ich_m: Option<f64>,
    pub ics: Option<f64>,
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record([
        "window_start",
        "road_class",
        "n_total",
        "icr",
        "ich_m",
        "ics",
    ])
    .map_err(|e| io_err(path, e))?;
    let opt = |v: Option<f64>, prec: usize| v.map_or(String::new(), |x| format!("{x:.prec$}"));
    for r in rows {
        w.write_record([
            &r.window_start.to_string(),
            r.road_class.as_str(),
            &format!("{:.3}", r.n_total_mean),
            &opt(r.icr, 4),
            &opt(r.ich_m, 2),
            &opt(r.ics, 3),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Fleet summary: single-row CSV with the headline statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct FleetSummary {
    pub k_trucks: usize,
    pub codriving_trucks: usize,
    pub codriving_truck_pct: f64,
    pub pdr_pct: f64,
    pub ptr_pct: f64,
    pub patterns_total: usize,
    pub patterns_coordinable: usize,
    pub coordinable_pct: f64,
    pub baseline_fuel_ml: f64,
    pub platooned_fuel_ml: f64,
    pub fleet_saving_pct: f64,
}

pub fn write_fleet_summary(path: &Path, s: &FleetSummary) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record([
        "k_trucks",
        "codriving_trucks",
        "codriving_truck_pct",
        "pdr_pct",
        "ptr_pct",
        "patterns_total",
        "patterns_coordinable",
        "coordinable_pct",
        "baseline_fuel_ml",
        "platooned_fuel_ml",
        "fleet_saving_pct",
    ])
    .map_err(|e| io_err(path, e))?;
    w.write_record([
        &s.k_trucks.to_string(),
        &s.codriving_trucks.to_string(),
        &format!("{:.3}", s.codriving_truck_pct),
        &format!("{:.3}", s.pdr_pct),
        &format!("{:.3}", s.ptr_pct),
        &s.patterns_total.to_string(),
        &s.patterns_coordinable.to_string(),
        &format!("{:.3}", s.coordinable_pct),
        &format!("{:.3}", s.baseline_fuel_ml),
        &format!("{:.3}", s.platooned_fuel_ml),
        &format!("{:.3}", s.fleet_saving_pct),
    ])
    .map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

/// Haul-distance breakdown row.
#[derive(Clone, Debug, PartialEq)]
pub struct HaulBucketRow {
    pub bucket_lo_km: f64,
    pub bucket_hi_km: f64,
    pub n_trucks: usize,
    pub pdr_pct: f64,
    pub ptr_pct: f64,
}

pub fn write_haul_buckets(path: &Path, rows: &[HaulBucketRow]) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record([
        "bucket_lo_km",
        "bucket_hi_km",
        "n_trucks",
        "pdr_pct",
        "ptr_pct",
    ])
    .map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record([
            &format!("{:.1}", r.bucket_lo_km),
            &format!("{:.1}", r.bucket_hi_km),
            &r.n_trucks.to_string(),
            &format!("{:.3}", r.pdr_pct),
            &format!("{:.3}", r.ptr_pct),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Per-segment hotspot counts as CSV, descending.
pub fn write_hotspots_csv(path: &Path, rows: &[(String, u64)]) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(["segment_id", "count"])
        .map_err(|e| io_err(path, e))?;
    for (seg, count) in rows {
        w.write_record([seg.as_str(), &count.to_string()])
            .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Per-segment hotspot counts as a GeoJSON FeatureCollection of
/// LineStrings with `segment_id` and `count` properties.
pub fn hotspots_geojson(graph: &RoadGraph, rows: &[(String, u64)]) -> serde_json::Value {
    let mut features = Vec::new();
    for (seg_id, count) in rows {
        let Some(idx) = graph.seg_idx(seg_id) else {
            continue;
        };
        let seg = graph.segment(idx);
        let coords: Vec<serde_json::Value> = seg
            .geometry
            .iter()
            .map(|p| serde_json::json!([(p.lon * 1e7).round() / 1e7, (p.lat * 1e7).round() / 1e7]))
            .collect();
        features.push(serde_json::json!({
            "type": "Feature",
            "geometry": { "type": "LineString", "coordinates": coords },
            "properties": { "segment_id": seg_id, "count": count },
        }));
    }
    serde_json::json!({ "type": "FeatureCollection", "features": features })
}
