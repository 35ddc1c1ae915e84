//! Road network loading from the two-file CSV format.
//!
//! `nodes.csv`: `node_id,lon,lat`
//! `edges.csv`: `segment_id,from_node,to_node,length_m,road_class,oneway,geometry_wkt`
//!
//! Coordinates are WGS84 decimal degrees. The geometry column may be empty
//! (a straight line between the endpoint nodes is assumed) or hold a WKT
//! `LINESTRING`.

use std::path::Path;

use platoon_core::geo::LonLat;
use platoon_core::graph::{GraphError, RoadClass, RoadGraph, SegmentSpec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetLoadError {
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
    #[error("network validation failed: {0}")]
    Graph(#[from] GraphError),
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> NetLoadError {
    NetLoadError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>, NetLoadError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| NetLoadError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e),
        })
}

/// Parse a WKT `LINESTRING (lon lat, lon lat, ...)`.
pub fn parse_linestring(wkt: &str) -> Result<Vec<LonLat>, String> {
    let body = wkt
        .trim()
        .strip_prefix("LINESTRING")
        .ok_or("geometry must be a WKT LINESTRING")?
        .trim()
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or("missing parentheses in LINESTRING")?;
    let mut points = Vec::new();
    for pair in body.split(',') {
        let mut it = pair.split_whitespace();
        let lon: f64 = it
            .next()
            .ok_or("empty coordinate pair")?
            .parse()
            .map_err(|e| format!("bad longitude: {e}"))?;
        let lat: f64 = it
            .next()
            .ok_or("coordinate pair needs lon and lat")?
            .parse()
            .map_err(|e| format!("bad latitude: {e}"))?;
        if it.next().is_some() {
            return Err("coordinate pair has trailing tokens".into());
        }
        points.push(LonLat::new(lon, lat));
    }
    if points.len() < 2 {
        return Err("LINESTRING needs at least two points".into());
    }
    Ok(points)
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

/// Load and validate a road network; `grid_cell_m` sizes the spatial index.
pub fn load_network(
    nodes_path: &Path,
    edges_path: &Path,
    grid_cell_m: f64,
) -> Result<RoadGraph, NetLoadError> {
    let mut nodes = Vec::new();
    let mut rdr = reader(nodes_path)?;
    for record in rdr.records() {
        let record = record.map_err(|e| NetLoadError::Io {
            path: nodes_path.display().to_string(),
            source: std::io::Error::other(e),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() < 3 {
            return Err(parse_err(nodes_path, line, "expected node_id,lon,lat"));
        }
        let lon: f64 = record[1]
            .parse()
            .map_err(|e| parse_err(nodes_path, line, format!("bad lon: {e}")))?;
        let lat: f64 = record[2]
            .parse()
            .map_err(|e| parse_err(nodes_path, line, format!("bad lat: {e}")))?;
        nodes.push((record[0].to_string(), LonLat::new(lon, lat)));
    }

    let mut segments = Vec::new();
    let mut rdr = reader(edges_path)?;
    for record in rdr.records() {
        let record = record.map_err(|e| NetLoadError::Io {
            path: edges_path.display().to_string(),
            source: std::io::Error::other(e),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() < 6 {
            return Err(parse_err(
                edges_path,
                line,
                "expected segment_id,from_node,to_node,length_m,road_class,oneway[,geometry_wkt]",
            ));
        }
        let length_m: f64 = record[3]
            .parse()
            .map_err(|e| parse_err(edges_path, line, format!("bad length_m: {e}")))?;
        let class: RoadClass = record[4].parse().map_err(|_| {
            parse_err(
                edges_path,
                line,
                format!("unknown road_class `{}`", &record[4]),
            )
        })?;
        let oneway = parse_bool(&record[5]).ok_or_else(|| {
            parse_err(
                edges_path,
                line,
                format!("bad oneway flag `{}`", &record[5]),
            )
        })?;
        let geometry = match record.get(6) {
            Some(s) if !s.is_empty() => {
                Some(parse_linestring(s).map_err(|e| parse_err(edges_path, line, e))?)
            }
            _ => None,
        };
        segments.push(SegmentSpec {
            id: record[0].to_string(),
            from: record[1].to_string(),
            to: record[2].to_string(),
            length_m,
            class,
            oneway,
            geometry,
        });
    }

    Ok(RoadGraph::build(nodes, segments, grid_cell_m)?)
}

/// Write a network in the same two-file format (used by the scenario
/// generator so its fixtures are pipeline inputs).
pub fn write_network(
    graph: &RoadGraph,
    nodes_path: &Path,
    edges_path: &Path,
) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(nodes_path)?;
    w.write_record(["node_id", "lon", "lat"])?;
    for n in graph.nodes() {
        w.write_record([
            &n.id,
            &format!("{:.7}", n.pos.lon),
            &format!("{:.7}", n.pos.lat),
        ])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(edges_path)?;
    w.write_record([
        "segment_id",
        "from_node",
        "to_node",
        "length_m",
        "road_class",
        "oneway",
        "geometry_wkt",
    ])?;
    for s in graph.segments() {
        let wkt = if s.geometry.len() > 2 {
            let coords: Vec<String> = s
                .geometry
                .iter()
                .map(|p| format!("{:.7} {:.7}", p.lon, p.lat))
                .collect();
            format!("LINESTRING ({})", coords.join(", "))
        } else {
            String::new()
        };
        w.write_record([
            s.id.as_str(),
            &graph.node(s.from).id,
            &graph.node(s.to).id,
            &format!("{:.3}", s.length_m),
            s.class.as_str(),
            if s.oneway { "true" } else { "false" },
            &wkt,
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, content: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        let mut f = std::fs::File::create(&p).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        p
    }

    #[test]
    fn loads_minimal_network() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write(
            dir.path(),
            "nodes.csv",
            "node_id,lon,lat\na,122.0,41.0\nb,122.012,41.0\n",
        );
        let edges = write(
            dir.path(),
            "edges.csv",
            "segment_id,from_node,to_node,length_m,road_class,oneway,geometry_wkt\ns1,a,b,1004.6,trunk,false,\n",
        );
        let g = load_network(&nodes, &edges, 50.0).unwrap();
        assert_eq!(g.n_segments(), 1);
        assert!((g.segments()[0].length_m - 1004.6).abs() < 1e-9);
    }

    #[test]
    fn reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write(
            dir.path(),
            "nodes.csv",
            "node_id,lon,lat\na,122.0,41.0\nb,xx,41.0\n",
        );
        let edges = write(
            dir.path(),
            "edges.csv",
            "segment_id,from_node,to_node,length_m,road_class,oneway,geometry_wkt\n",
        );
        match load_network(&nodes, &edges, 50.0) {
            Err(NetLoadError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn dangling_node_reference_names_the_node() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write(dir.path(), "nodes.csv", "node_id,lon,lat\na,122.0,41.0\n");
        let edges = write(
            dir.path(),
            "edges.csv",
            "segment_id,from_node,to_node,length_m,road_class,oneway,geometry_wkt\ns1,a,zz,100,trunk,false,\n",
        );
        let err = load_network(&nodes, &edges, 50.0).unwrap_err();
        assert!(err.to_string().contains("zz"), "{err}");
    }

    #[test]
    fn wkt_geometry_parsed() {
        assert_eq!(
            parse_linestring("LINESTRING (122.0 41.0, 122.1 41.05)").unwrap(),
            vec![LonLat::new(122.0, 41.0), LonLat::new(122.1, 41.05)]
        );
        assert!(parse_linestring("POINT (1 2)").is_err());
        assert!(parse_linestring("LINESTRING (1 2)").is_err());
    }

    #[test]
    fn network_round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write(
            dir.path(),
            "nodes.csv",
            "node_id,lon,lat\na,122.0,41.0\nb,122.012,41.0\nc,122.024,41.0\n",
        );
        let edges = write(
            dir.path(),
            "edges.csv",
            "segment_id,from_node,to_node,length_m,road_class,oneway,geometry_wkt\n\
             s1,a,b,1004.6,trunk,false,\ns2,b,c,1004.6,expressway,true,\n",
        );
        let g = load_network(&nodes, &edges, 50.0).unwrap();
        let n2 = dir.path().join("nodes2.csv");
        let e2 = dir.path().join("edges2.csv");
        write_network(&g, &n2, &e2).unwrap();
        let g2 = load_network(&n2, &e2, 50.0).unwrap();
        assert_eq!(g.n_nodes(), g2.n_nodes());
        assert_eq!(g.n_segments(), g2.n_segments());
        assert_eq!(g2.segments()[1].class, RoadClass::Expressway);
    }
}
