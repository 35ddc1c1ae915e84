//! Pipeline-level contracts: determinism, stage composability, thread
//! invariance, resampling behaviour and empty-input handling.

use std::path::Path;

use platoon_cli::config::PipelineConfig;
use platoon_cli::formats::{self, MatchedRow};
use platoon_cli::pipeline::{
    run_pipeline, stage_cluster, stage_fuel, stage_match, stage_mine, stage_report, stage_resample,
    GridData, SetData,
};
use platoon_cli::synth::{generate, PlatoonSpec, ScenarioSection, ScenarioSpec};
use platoon_core::mapmatch::Dir;

fn small_scenario() -> ScenarioSpec {
    ScenarioSpec {
        scenario: ScenarioSection {
            seed: 11,
            duration_s: 900,
            n_background: 4,
            noise_sigma_m: 8.0,
            dropout_prob: 0.05,
            jitter_s: 2,
            ..Default::default()
        },
        platoons: vec![PlatoonSpec::default()],
    }
}

fn data_files(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .collect();
    files.sort();
    files
}

#[test]
fn rerun_is_byte_identical() {
    let (graph, raw, _) = generate(&small_scenario()).unwrap();
    let config = PipelineConfig::default();
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");
    run_pipeline(&config, &graph, &raw, &out1).unwrap();
    run_pipeline(&config, &graph, &raw, &out2).unwrap();
    let files1 = data_files(&out1);
    let files2 = data_files(&out2);
    assert_eq!(files1.len(), files2.len());
    assert_eq!(files1.len(), 10);
    for (a, b) in files1.iter().zip(&files2) {
        assert_eq!(a.file_name(), b.file_name());
        assert_eq!(
            std::fs::read(a).unwrap(),
            std::fs::read(b).unwrap(),
            "{} differs between reruns",
            a.display()
        );
    }
}

#[test]
fn output_independent_of_thread_count() {
    let (graph, raw, _) = generate(&small_scenario()).unwrap();
    let config = PipelineConfig::default();
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("t1");
    let out4 = dir.path().join("t4");
    let pool1 = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let pool4 = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap();
    pool1
        .install(|| run_pipeline(&config, &graph, &raw, &out1))
        .unwrap();
    pool4
        .install(|| run_pipeline(&config, &graph, &raw, &out4))
        .unwrap();
    for (a, b) in data_files(&out1).iter().zip(&data_files(&out4)) {
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }
}

#[test]
fn stagewise_equals_end_to_end() {
    let (graph, raw, _) = generate(&small_scenario()).unwrap();
    let config = PipelineConfig::default();
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    run_pipeline(&config, &graph, &raw, &run_dir).unwrap();

    // replay stage by stage through the file formats
    let stage_dir = dir.path().join("stages");
    std::fs::create_dir_all(&stage_dir).unwrap();
    let (matched, _) = stage_match(&raw, &graph, &config.matching.to_params());
    formats::write_matched(&stage_dir.join("matched.csv"), &matched).unwrap();
    let matched2 = formats::read_matched(&stage_dir.join("matched.csv")).unwrap();
    let grid_rows = stage_resample(
        &matched2,
        &graph,
        config.pipeline.dt_grid_s,
        config.pipeline.staleness_s,
    )
    .unwrap();
    formats::write_gridded(&stage_dir.join("gridded.csv"), &grid_rows).unwrap();
    let grid = GridData::new(formats::read_gridded(&stage_dir.join("gridded.csv")).unwrap());
    let set_rows = stage_cluster(&grid, &graph, &config.cluster.to_params()).unwrap();
    formats::write_sets(&stage_dir.join("sets.csv"), &set_rows).unwrap();
    let sets = SetData::new(formats::read_sets(&stage_dir.join("sets.csv")).unwrap()).unwrap();
    let mined = stage_mine(
        &sets,
        &grid,
        &graph,
        config.mine.min_o,
        config.mine.min_t,
        config.pipeline.dt_grid_s,
        &config.cluster.to_params(),
    )
    .unwrap();
    let pattern_rows: Vec<_> = mined.iter().map(|m| m.row.clone()).collect();
    formats::write_patterns(&stage_dir.join("patterns.csv"), &pattern_rows).unwrap();
    let (saving_rows, savings) = stage_fuel(&mined, &sets, &grid, &graph, &config).unwrap();
    formats::write_savings(&stage_dir.join("savings.csv"), &saving_rows).unwrap();
    let report = stage_report(&mined, &sets, &grid, &graph, &savings, &config).unwrap();
    formats::write_metrics(&stage_dir.join("metrics_windows.csv"), &report.metrics_rows).unwrap();
    formats::write_fleet_summary(&stage_dir.join("fleet_summary.csv"), &report.summary).unwrap();

    for name in [
        "matched.csv",
        "gridded.csv",
        "sets.csv",
        "patterns.csv",
        "savings.csv",
        "metrics_windows.csv",
        "fleet_summary.csv",
    ] {
        assert_eq!(
            std::fs::read(run_dir.join(name)).unwrap(),
            std::fs::read(stage_dir.join(name)).unwrap(),
            "{name} differs between composed stages and run"
        );
    }
}

#[test]
fn empty_input_produces_empty_outputs() {
    let spec = ScenarioSpec {
        scenario: ScenarioSection {
            n_background: 0,
            ..Default::default()
        },
        platoons: vec![],
    };
    let (graph, raw, _) = generate(&spec).unwrap();
    assert!(raw.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("empty");
    let summary = run_pipeline(&PipelineConfig::default(), &graph, &raw, &out).unwrap();
    assert_eq!(summary.k_trucks, 0);
    assert_eq!(summary.patterns_total, 0);
    let gridded = std::fs::read_to_string(out.join("gridded.csv")).unwrap();
    assert_eq!(gridded.lines().count(), 1, "header only");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["counts"]["raw_points"], 0);
    assert_eq!(manifest["counts"]["patterns"], 0);
}

fn matched_row(
    truck: &str,
    ts: i64,
    seg: &str,
    r: f64,
    graph: &platoon_core::graph::RoadGraph,
) -> MatchedRow {
    let idx = graph.seg_idx(seg).unwrap();
    let p = graph.interpolate(idx, r);
    MatchedRow {
        truck_id: truck.into(),
        ts,
        segment_id: seg.into(),
        r,
        dir: Dir::Along,
        snap_lon: p.lon,
        snap_lat: p.lat,
        altitude_m: 0.0,
    }
}

#[test]
fn resample_keeps_on_grid_points() {
    let spec = ScenarioSpec {
        scenario: ScenarioSection::default(),
        platoons: vec![],
    };
    let (graph, _, _) = generate(&spec).unwrap();
    let rows = vec![
        matched_row("T", 1_600_000_200, "s0", 0.20, &graph),
        matched_row("T", 1_600_000_215, "s0", 0.50, &graph),
        matched_row("T", 1_600_000_230, "s0", 0.80, &graph),
    ];
    let grid = stage_resample(&rows, &graph, 15, 30).unwrap();
    assert_eq!(grid.len(), 3);
    for (g, m) in grid.iter().zip(&rows) {
        assert_eq!(g.step as i64, m.ts / 15);
        assert!((g.r - m.r).abs() < 1e-6);
        assert_eq!(g.segment_id, m.segment_id);
    }
    // odometer advances by the along-route distance
    let seg_len = graph.segment(graph.seg_idx("s0").unwrap()).length_m;
    assert!((grid[1].odo_m - 0.3 * seg_len).abs() < 0.01);
}

#[test]
fn resample_interpolates_off_grid_sampling() {
    // 10 s sampling onto a 15 s grid: grid positions sit between fixes
    let spec = ScenarioSpec {
        scenario: ScenarioSection::default(),
        platoons: vec![],
    };
    let (graph, _, _) = generate(&spec).unwrap();
    let t0 = 1_600_000_200i64;
    let rows: Vec<MatchedRow> = (0..7)
        .map(|i| matched_row("T", t0 + i * 10, "s0", 0.1 + 0.05 * i as f64, &graph))
        .collect();
    let grid = stage_resample(&rows, &graph, 15, 30).unwrap();
    // grid instants: t0, t0+15, t0+30, t0+45, t0+60
    assert_eq!(grid.len(), 5);
    // t0+15 is halfway between the fixes at +10 (r=0.15) and +20 (r=0.20)
    assert!((grid[1].r - 0.175).abs() < 1e-3, "r = {}", grid[1].r);
    // r advances monotonically along the route
    for w in grid.windows(2) {
        assert!(w[1].r > w[0].r);
        assert!(w[1].odo_m > w[0].odo_m);
    }
}

#[test]
fn resample_leaves_gaps_inactive() {
    let spec = ScenarioSpec {
        scenario: ScenarioSection::default(),
        platoons: vec![],
    };
    let (graph, _, _) = generate(&spec).unwrap();
    let t0 = 1_600_000_200i64;
    let rows = vec![
        matched_row("T", t0, "s0", 0.2, &graph),
        matched_row("T", t0 + 15, "s0", 0.5, &graph),
        // 90 s silence
        matched_row("T", t0 + 105, "s2", 0.2, &graph),
        matched_row("T", t0 + 120, "s2", 0.5, &graph),
    ];
    let grid = stage_resample(&rows, &graph, 15, 30).unwrap();
    let steps: Vec<u32> = grid.iter().map(|g| g.step).collect();
    let base = (t0 / 15) as u32;
    assert_eq!(steps, vec![base, base + 1, base + 7, base + 8]);
}

#[test]
fn truncated_network_file_is_rejected_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let nodes = dir.path().join("nodes.csv");
    let edges = dir.path().join("edges.csv");
    std::fs::write(&nodes, "node_id,lon,lat\na,122.0,41.0\nb,122.01,41.0\n").unwrap();
    std::fs::write(
        &edges,
        "segment_id,from_node,to_node,length_m,road_class,oneway,geometry_wkt\ns0,a,b,-5,trunk,false,\n",
    )
    .unwrap();
    let err = platoon_cli::netload::load_network(&nodes, &edges, 50.0).unwrap_err();
    assert!(err.to_string().contains("non-positive length"), "{err}");
}

#[test]
fn hotspots_concentrate_on_the_planted_corridor() {
    let spec = ScenarioSpec {
        scenario: ScenarioSection { seed: 5, duration_s: 900, ..Default::default() },
        platoons: vec![PlatoonSpec::default()],
    };
    let (graph, raw, truth) = generate(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    run_pipeline(&PipelineConfig::default(), &graph, &raw, &out).unwrap();
    let text = std::fs::read_to_string(out.join("hotspots.csv")).unwrap();
    let rows: Vec<(&str, u64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (seg, count) = l.split_once(',').unwrap();
            (seg, count.parse().unwrap())
        })
        .collect();
    assert!(!rows.is_empty());
    // counts are sorted descending and live on the corridor the platoon drove
    for w in rows.windows(2) {
        assert!(w[0].1 >= w[1].1);
    }
    for (seg, _) in &rows {
        assert!(seg.starts_with('s'), "hotspot {seg} must lie on the planted corridor");
    }
    // total placements = members x timesteps of the planted pattern
    let planted = &truth.patterns[0];
    let expect = planted.members.len() as u64 * (planted.last_step - planted.first_step + 1) as u64;
    let total: u64 = rows.iter().map(|(_, c)| c).sum();
    assert_eq!(total, expect);
    // the geojson carries the same segments with count properties
    let geo: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("hotspots.geojson")).unwrap()).unwrap();
    assert_eq!(geo["features"].as_array().unwrap().len(), rows.len());
}
