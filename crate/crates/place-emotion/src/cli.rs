//! Study configuration and file export: GeoJSON footprints and the CSV
//! outputs of the batch subcommands. Output files are written atomically
//! (temp file + rename) and every format is readable by this module's own
//! parsers.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};

use crate::affect::EmotionSummary;
use crate::error::{Error, Result};
use crate::geo::{ClusterParams, FootprintPolygon, GeoPoint, Place};
use crate::pipeline::{
    significance_stars, CohortComparison, RankingEntry, SensitivityReport, StabilityCurve,
    RegressionStudy, DEFAULT_EPS_GRID_M, DEFAULT_PCT_GRID,
};
use crate::stats::{default_references, BootstrapConfig, BootstrapInterval, References};

/// Environment variable naming the default config file.
pub const CONFIG_ENV_VAR: &str = "PLACE_EMOTION_CONFIG";

/// Everything a batch study needs: the clustering grid, bootstrap settings
/// and regression reference levels. CLI flags override file values.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub eps_m: Vec<f64>,
    pub min_pts_pct: Vec<f64>,
    pub min_pts_floor: usize,
    pub n_resamples: usize,
    pub confidence: f64,
    pub seed: u64,
    pub references: References,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            eps_m: DEFAULT_EPS_GRID_M.to_vec(),
            min_pts_pct: DEFAULT_PCT_GRID.to_vec(),
            min_pts_floor: 3,
            n_resamples: 1000,
            confidence: 0.95,
            seed: 0,
            references: default_references(),
        }
    }
}

impl StudyConfig {
    pub fn bootstrap(&self) -> Result<BootstrapConfig> {
        BootstrapConfig::new(self.n_resamples, self.confidence, self.seed)
    }

    /// Single-combination params from the first grid entries.
    pub fn single_params(&self) -> Result<ClusterParams> {
        ClusterParams::new(self.eps_m[0], self.min_pts_pct[0], self.min_pts_floor)
    }

    /// Validates every grid combination.
    pub fn validate(&self) -> Result<()> {
        if self.eps_m.is_empty() || self.min_pts_pct.is_empty() {
            return Err(Error::InvalidConfig("empty parameter grid".into()));
        }
        for &eps in &self.eps_m {
            for &pct in &self.min_pts_pct {
                ClusterParams::new(eps, pct, self.min_pts_floor)?;
            }
        }
        self.bootstrap()?;
        Ok(())
    }
}

fn parse_list(v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("not a number: {s:?}")))
        })
        .collect()
}

/// Parses the flat `key = value` config format over the defaults. Unknown
/// keys are rejected so typos fail loudly. `ref.<factor>` keys set
/// regression reference levels.
pub fn parse_config(text: &str) -> Result<StudyConfig> {
    let mut cfg = StudyConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("line {}: expected key = value", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| Error::InvalidConfig(format!("line {}: bad {what}: {value:?}", lineno + 1));
        match key {
            "eps_m" => cfg.eps_m = parse_list(value)?,
            "min_pts_pct" => cfg.min_pts_pct = parse_list(value)?,
            "min_pts_floor" => cfg.min_pts_floor = value.parse().map_err(|_| bad("count"))?,
            "n_resamples" => cfg.n_resamples = value.parse().map_err(|_| bad("count"))?,
            "confidence" => cfg.confidence = value.parse().map_err(|_| bad("fraction"))?,
            "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
            _ => match key.strip_prefix("ref.") {
                Some(factor) => {
                    cfg.references.insert(factor.to_string(), value.to_string());
                }
                None => {
                    return Err(Error::InvalidConfig(format!(
                        "line {}: unknown key {key:?}",
                        lineno + 1
                    )))
                }
            },
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes `bytes` to `path` via a temp file in the same directory plus an
/// atomic rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// GeoJSON
// ---------------------------------------------------------------------------

fn ring_coordinates(poly: &FootprintPolygon) -> Vec<[f64; 2]> {
    // GeoJSON wants lon-first and a closed ring
    let mut ring: Vec<[f64; 2]> = poly.vertices_geo().iter().map(|v| [v.lon, v.lat]).collect();
    if let Some(first) = ring.first().copied() {
        ring.push(first);
    }
    ring
}

/// One Feature per site, geometry MultiPolygon in WGS84 lon-lat order.
/// Projection origins travel in the properties so footprints re-ingest into
/// the exact local frames they were built in.
pub fn export_geojson(places: &[(Place, String)]) -> Value {
    let features: Vec<Value> = places
        .iter()
        .map(|(place, name)| {
            let coordinates: Vec<Vec<Vec<[f64; 2]>>> = place
                .footprint
                .iter()
                .map(|poly| vec![ring_coordinates(poly)])
                .collect();
            let origins: Vec<[f64; 2]> = place
                .footprint
                .iter()
                .map(|poly| [poly.origin.lat, poly.origin.lon])
                .collect();
            json!({
                "type": "Feature",
                "geometry": {
                    "type": "MultiPolygon",
                    "coordinates": coordinates,
                },
                "properties": {
                    "site_id": place.site_id,
                    "name": name,
                    "n_polygons": place.footprint.len(),
                    "n_member_points": place.member_points.len(),
                    "params_used": {
                        "eps_m": place.params_used.eps_m,
                        "min_pts_pct": place.params_used.min_pts_pct,
                        "min_pts_floor": place.params_used.min_pts_floor,
                    },
                    "projection_origins": origins,
                },
            })
        })
        .collect();
    json!({
        "type": "FeatureCollection",
        "features": features,
    })
}

fn json_f64(v: &Value, context: &str) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::SchemaError(format!("{context}: expected a number, got {v}")))
}

/// Re-ingests an exported FeatureCollection. Member points are not part of
/// the export; the returned places carry empty member lists.
pub fn parse_geojson_places(text: &str) -> Result<Vec<(Place, String)>> {
    let doc: Value = serde_json::from_str(text)?;
    let features = doc["features"]
        .as_array()
        .ok_or_else(|| Error::SchemaError("missing features array".into()))?;
    let mut places = Vec::new();
    for f in features {
        let props = &f["properties"];
        let site_id = props["site_id"]
            .as_str()
            .ok_or_else(|| Error::SchemaError("feature without site_id".into()))?
            .to_string();
        let name = props["name"].as_str().unwrap_or_default().to_string();
        let params_used = ClusterParams::new(
            json_f64(&props["params_used"]["eps_m"], "eps_m")?,
            json_f64(&props["params_used"]["min_pts_pct"], "min_pts_pct")?,
            props["params_used"]["min_pts_floor"].as_u64().unwrap_or(3) as usize,
        )?;
        let origins = props["projection_origins"]
            .as_array()
            .ok_or_else(|| Error::SchemaError("feature without projection_origins".into()))?;
        let polygons = f["geometry"]["coordinates"]
            .as_array()
            .ok_or_else(|| Error::SchemaError("geometry without coordinates".into()))?;
        if origins.len() != polygons.len() {
            return Err(Error::SchemaError(format!(
                "site {site_id}: {} origins for {} polygons",
                origins.len(),
                polygons.len()
            )));
        }
        let mut footprint = Vec::new();
        for (origin, polygon) in origins.iter().zip(polygons) {
            let origin = GeoPoint::new(
                json_f64(&origin[0], "origin lat")?,
                json_f64(&origin[1], "origin lon")?,
            )?;
            let ring = polygon[0]
                .as_array()
                .ok_or_else(|| Error::SchemaError("polygon without exterior ring".into()))?;
            // drop the closing vertex
            let mut vertices_geo = Vec::new();
            for v in &ring[..ring.len().saturating_sub(1)] {
                vertices_geo.push(GeoPoint::new(
                    json_f64(&v[1], "vertex lat")?,
                    json_f64(&v[0], "vertex lon")?,
                )?);
            }
            footprint.push(FootprintPolygon::from_geo(origin, &vertices_geo));
        }
        places.push((
            Place {
                site_id,
                footprint,
                member_points: Vec::new(),
                params_used,
            },
            name,
        ));
    }
    Ok(places)
}

// ---------------------------------------------------------------------------
// CSV outputs
// ---------------------------------------------------------------------------

pub const RANKING_HEADER: &[&str] = &[
    "rank",
    "site_id",
    "name",
    "joy_index",
    "joy_ci_low",
    "joy_ci_high",
    "ahi",
    "ahi_ci_low",
    "ahi_ci_high",
    "n_faces",
    "n_smiling",
    "n_nonsmiling",
];

pub fn ranking_to_csv(entries: &[RankingEntry]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RANKING_HEADER)?;
    for e in entries {
        let s = &e.summary;
        w.write_record(&[
            e.rank.to_string(),
            e.site_id.clone(),
            e.name.clone(),
            s.joy_index.to_string(),
            s.joy_ci.low.to_string(),
            s.joy_ci.high.to_string(),
            s.ahi.to_string(),
            s.ahi_ci.low.to_string(),
            s.ahi_ci.high.to_string(),
            s.n_faces.to_string(),
            s.n_smiling.to_string(),
            s.n_nonsmiling.to_string(),
        ])?;
    }
    Ok(w.into_inner().expect("in-memory writer"))
}

pub fn parse_ranking_csv(text: &str) -> Result<Vec<RankingEntry>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let got: Vec<&str> = rdr.headers()?.iter().collect();
    if got != RANKING_HEADER {
        return Err(Error::SchemaError(format!(
            "ranking header mismatch: got {got:?}"
        )));
    }
    let mut entries = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let f = |i: usize| -> Result<f64> {
            row[i]
                .parse()
                .map_err(|_| Error::SchemaError(format!("not a number: {:?}", &row[i])))
        };
        let u = |i: usize| -> Result<usize> {
            row[i]
                .parse()
                .map_err(|_| Error::SchemaError(format!("not a count: {:?}", &row[i])))
        };
        entries.push(RankingEntry {
            rank: u(0)?,
            site_id: row[1].to_string(),
            name: row[2].to_string(),
            summary: EmotionSummary {
                site_id: row[1].to_string(),
                joy_index: f(3)?,
                joy_ci: BootstrapInterval {
                    point: f(3)?,
                    low: f(4)?,
                    high: f(5)?,
                },
                ahi: f(6)?,
                ahi_ci: BootstrapInterval {
                    point: f(6)?,
                    low: f(7)?,
                    high: f(8)?,
                },
                n_faces: u(9)?,
                n_smiling: u(10)?,
                n_nonsmiling: u(11)?,
            },
        });
    }
    Ok(entries)
}

pub const SENSITIVITY_HEADER: &[&str] = &[
    "row_type",
    "eps_m",
    "min_pts_pct",
    "n_sites",
    "joy_order",
    "ahi_order",
    "index",
    "w",
];

/// One row per parameter combination plus one W summary row per judge set.
pub fn sensitivity_to_csv(report: &SensitivityReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SENSITIVITY_HEADER)?;
    let order = |ranking: &[RankingEntry]| {
        ranking
            .iter()
            .map(|e| e.site_id.as_str())
            .collect::<Vec<_>>()
            .join("|")
    };
    for combo in &report.combos {
        w.write_record(&[
            "combo".to_string(),
            combo.params.eps_m.to_string(),
            combo.params.min_pts_pct.to_string(),
            combo.joy_ranking.len().to_string(),
            order(&combo.joy_ranking),
            order(&combo.ahi_ranking),
            String::new(),
            String::new(),
        ])?;
    }
    for (params, reason) in &report.failed_combos {
        w.write_record(&[
            "failed_combo".to_string(),
            params.eps_m.to_string(),
            params.min_pts_pct.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            reason.clone(),
        ])?;
    }
    for (index, value) in [
        ("joy", report.w_joy),
        ("ahi", report.w_ahi),
        ("combined", report.w_combined),
    ] {
        w.write_record(&[
            "w".to_string(),
            String::new(),
            String::new(),
            report.common_sites.len().to_string(),
            String::new(),
            String::new(),
            index.to_string(),
            value.to_string(),
        ])?;
    }
    Ok(w.into_inner().expect("in-memory writer"))
}

/// Extracts the W summary rows back out of sensitivity.csv.
pub fn parse_sensitivity_w(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let got: Vec<&str> = rdr.headers()?.iter().collect();
    if got != SENSITIVITY_HEADER {
        return Err(Error::SchemaError(format!(
            "sensitivity header mismatch: got {got:?}"
        )));
    }
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        if &row[0] == "w" {
            let value: f64 = row[7]
                .parse()
                .map_err(|_| Error::SchemaError(format!("bad W value {:?}", &row[7])))?;
            out.insert(row[6].to_string(), value);
        }
    }
    Ok(out)
}

pub const REGRESSION_HEADER: &[&str] = &[
    "row_type",
    "index",
    "term",
    "value",
    "std_error",
    "p_value",
    "stars",
    "note",
];

pub fn regression_to_csv(study: &RegressionStudy) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REGRESSION_HEADER)?;
    for index_study in [&study.joy, &study.ahi] {
        let index = index_study.index.as_str();
        for (term, value) in &index_study.screen.entries {
            w.write_record([
                "screen",
                index,
                term,
                &value.to_string(),
                "",
                "",
                "",
                "",
            ])?;
        }
        for (term, reason) in &index_study.screen.skipped {
            w.write_record(["screen_skipped", index, term, "", "", "", "", reason])?;
        }
        let fit = &index_study.fit;
        for (j, (term, coef)) in fit.coefficients.iter().enumerate() {
            let (se, p) = match (&fit.std_errors, &fit.p_values) {
                (Some(se), Some(p)) => (se[j].to_string(), p[j].to_string()),
                _ => (String::new(), String::new()),
            };
            let stars = fit
                .p_values
                .as_ref()
                .map(|p| significance_stars(p[j]))
                .unwrap_or("");
            w.write_record([
                "coefficient",
                index,
                term,
                &coef.to_string(),
                &se,
                &p,
                stars,
                "",
            ])?;
        }
        for term in &index_study.dropped_columns {
            w.write_record(["dropped", index, term, "", "", "", "", "level absent or universal"])?;
        }
        w.write_record([
            "r_squared",
            index,
            "",
            &fit.r_squared.to_string(),
            "",
            "",
            "",
            "",
        ])?;
    }
    Ok(w.into_inner().expect("in-memory writer"))
}

pub const STABILITY_HEADER: &[&str] = &[
    "row_type",
    "index",
    "site_ordinal",
    "n_faces",
    "ci_width",
    "exponent",
    "amplitude",
    "r_squared",
    "note",
];

pub fn stability_to_csv(curve: &StabilityCurve) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(STABILITY_HEADER)?;
    for series in [&curve.joy, &curve.ahi] {
        let index = series.index.as_str();
        for (i, (n, width)) in series.points.iter().enumerate() {
            w.write_record([
                "point",
                index,
                &i.to_string(),
                &n.to_string(),
                &width.to_string(),
                "",
                "",
                "",
                "",
            ])?;
        }
        match (&series.fit, &series.degenerate_reason) {
            (Some(fit), _) => w.write_record([
                "fit",
                index,
                "",
                "",
                "",
                &fit.exponent.to_string(),
                &fit.amplitude.to_string(),
                &fit.r_squared.to_string(),
                "",
            ])?,
            (None, Some(reason)) => {
                w.write_record(["degenerate", index, "", "", "", "", "", "", reason])?
            }
            (None, None) => {}
        }
    }
    Ok(w.into_inner().expect("in-memory writer"))
}

pub fn tags_to_csv(tags: &[(String, usize)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["tag", "count"])?;
    for (tag, count) in tags {
        w.write_record(&[tag.clone(), count.to_string()])?;
    }
    Ok(w.into_inner().expect("in-memory writer"))
}

pub fn cohorts_to_csv(cmp: &CohortComparison) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row_type", "site_id", "joy_delta", "ahi_delta"])?;
    for d in &cmp.per_site {
        w.write_record(&[
            "site".to_string(),
            d.site_id.clone(),
            d.joy_delta.to_string(),
            d.ahi_delta.to_string(),
        ])?;
    }
    w.write_record(&[
        "mean_abs".to_string(),
        String::new(),
        cmp.mean_abs_joy_delta.to_string(),
        cmp.mean_abs_ahi_delta.to_string(),
    ])?;
    for site in &cmp.skipped {
        w.write_record(&["skipped".to_string(), site.clone(), String::new(), String::new()])?;
    }
    Ok(w.into_inner().expect("in-memory writer"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::construct_place;
    use crate::geo::point_in_footprint;

    #[test]
    fn config_defaults_give_full_grid() {
        let cfg = StudyConfig::default();
        assert_eq!(cfg.eps_m, vec![50.0, 100.0, 200.0, 300.0]);
        assert_eq!(cfg.min_pts_pct, vec![0.005, 0.01, 0.02]);
        assert_eq!(cfg.eps_m.len() * cfg.min_pts_pct.len(), 12);
    }

    #[test]
    fn config_parse_and_overrides() {
        let text = "\
# study grid
eps_m = 50, 100
min_pts_pct = 0.01
seed = 42
n_resamples = 200
ref.type = museum
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.eps_m, vec![50.0, 100.0]);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.n_resamples, 200);
        assert_eq!(cfg.references["type"], "museum");
        // untouched keys keep defaults
        assert_eq!(cfg.confidence, 0.95);
    }

    #[test]
    fn config_rejects_unknown_key_and_bad_values() {
        assert!(parse_config("epsilon = 3").is_err());
        assert!(parse_config("eps_m = fifty").is_err());
        assert!(parse_config("n_resamples = 10").is_err()); // below bootstrap floor
    }

    fn sample_place() -> Place {
        let base = GeoPoint::new(40.0, 116.0).unwrap();
        let pts: Vec<GeoPoint> = (0..40)
            .map(|i| {
                let ang = i as f64 * 0.9;
                crate::geo::unproject(
                    crate::geo::PlanarPoint {
                        x: 60.0 * ang.cos(),
                        y: 60.0 * ang.sin(),
                    },
                    base,
                )
            })
            .collect();
        construct_place("s1", &pts, ClusterParams::new(200.0, 0.05, 3).unwrap()).unwrap()
    }

    #[test]
    fn geojson_round_trip_preserves_footprints() {
        let place = sample_place();
        let doc = export_geojson(&[(place.clone(), "Sample".into())]);
        let text = serde_json::to_string_pretty(&doc).unwrap();
        let parsed = parse_geojson_places(&text).unwrap();
        assert_eq!(parsed.len(), 1);
        let (back, name) = &parsed[0];
        assert_eq!(name, "Sample");
        assert_eq!(back.site_id, "s1");
        assert_eq!(back.params_used, place.params_used);
        assert_eq!(back.footprint.len(), place.footprint.len());
        for p in &place.member_points {
            assert!(point_in_footprint(*p, back));
        }
    }

    #[test]
    fn geojson_empty_collection() {
        let doc = export_geojson(&[]);
        assert_eq!(doc["features"].as_array().unwrap().len(), 0);
        let parsed = parse_geojson_places(&doc.to_string()).unwrap();
        assert!(parsed.is_empty());
    }

    #[test]
    fn geojson_rings_are_closed_and_lon_first() {
        let place = sample_place();
        let doc = export_geojson(&[(place.clone(), "Sample".into())]);
        let ring = &doc["features"][0]["geometry"]["coordinates"][0][0];
        let ring = ring.as_array().unwrap();
        assert_eq!(ring.first(), ring.last());
        let v0 = place.footprint[0].vertices_geo()[0];
        assert_eq!(ring[0][0].as_f64().unwrap(), v0.lon);
        assert_eq!(ring[0][1].as_f64().unwrap(), v0.lat);
    }

    #[test]
    fn ranking_csv_round_trip() {
        let entries = vec![RankingEntry {
            rank: 1,
            site_id: "s1".into(),
            name: "Harbor Steps".into(),
            summary: EmotionSummary {
                site_id: "s1".into(),
                joy_index: 0.43,
                ahi: 61.5,
                n_faces: 200,
                n_smiling: 143,
                n_nonsmiling: 57,
                joy_ci: BootstrapInterval {
                    point: 0.43,
                    low: 0.40,
                    high: 0.46,
                },
                ahi_ci: BootstrapInterval {
                    point: 61.5,
                    low: 60.0,
                    high: 63.5,
                },
            },
        }];
        let bytes = ranking_to_csv(&entries).unwrap();
        let parsed = parse_ranking_csv(std::str::from_utf8(&bytes).unwrap()).unwrap();
        assert_eq!(parsed, entries);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        atomic_write(&path, b"one").unwrap();
        atomic_write(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
    }
}
