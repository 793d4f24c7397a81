//! CSV schemas, parsing with row-level validation, the emotion-scorer
//! adapter boundary, the tourist/local classifier, and the synthetic data
//! generator.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io;

use chrono::{DateTime, Duration, SecondsFormat, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::affect::{EmotionStructure, FaceRecord};
use crate::error::{Error, Result};
use crate::geo::{haversine_m, unproject, GeoPoint, PlanarPoint};
use crate::stats::{Continent, FactorRow, Setting, SiteType, Space, WaterPresence};

/// One geotagged photo as harvested for a site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotoRecord {
    pub photo_id: String,
    pub user_id: String,
    pub site_id: String,
    pub location: GeoPoint,
    pub timestamp: DateTime<Utc>,
    pub tags: Vec<String>,
}

/// A study site: harvest center plus its environmental attribute row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub site_id: String,
    pub name: String,
    pub center: GeoPoint,
    pub harvest_radius_m: f64,
    pub country: String,
    pub factors: FactorRow,
}

impl SiteRecord {
    /// True iff `p` lies within this site's harvest radius of the center.
    pub fn within_harvest(&self, p: GeoPoint) -> bool {
        haversine_m(self.center, p) <= self.harvest_radius_m
    }
}

pub const FACES_HEADER: &[&str] = &[
    "photo_id",
    "user_id",
    "site_id",
    "lat",
    "lon",
    "timestamp_iso8601",
    "face_id",
    "smile_value",
    "smile_threshold",
    "anger",
    "disgust",
    "fear",
    "happiness",
    "neutral",
    "sadness",
    "surprise",
];

pub const SITES_HEADER: &[&str] = &[
    "site_id",
    "name",
    "lat",
    "lon",
    "harvest_radius_m",
    "continent",
    "country",
    "space",
    "setting",
    "type",
    "water",
    "water_distance_m",
    "ndvi",
];

pub const PHOTOS_HEADER: &[&str] = &[
    "photo_id",
    "user_id",
    "site_id",
    "lat",
    "lon",
    "timestamp_iso8601",
    "tags",
];

/// Row-level rejection with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDiagnostic {
    pub line: u64,
    pub message: String,
}

/// Valid records plus the rejected rows.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport<T> {
    pub records: Vec<T>,
    pub rejects: Vec<RowDiagnostic>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestOptions {
    /// Abort once more than this fraction of rows is rejected.
    pub max_reject_fraction: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            max_reject_fraction: 0.1,
        }
    }
}

fn check_header(got: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = got.iter().collect();
    if got != expected {
        return Err(Error::SchemaError(format!(
            "header mismatch: expected {expected:?}, got {got:?}"
        )));
    }
    Ok(())
}

fn parse_f64(record: &csv::StringRecord, idx: usize, name: &str) -> std::result::Result<f64, String> {
    record[idx]
        .parse::<f64>()
        .map_err(|_| format!("{name}: not a number: {:?}", &record[idx]))
}

fn parse_timestamp(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("timestamp {s:?}: {e}"))
}

fn format_timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn finish<T>(
    records: Vec<T>,
    rejects: Vec<RowDiagnostic>,
    opts: &IngestOptions,
) -> Result<IngestReport<T>> {
    let total = records.len() + rejects.len();
    if total > 0 && rejects.len() as f64 > opts.max_reject_fraction * total as f64 {
        return Err(Error::IngestAborted {
            rejected: rejects.len(),
            total,
            limit_pct: opts.max_reject_fraction * 100.0,
        });
    }
    Ok(IngestReport { records, rejects })
}

/// Parses faces.csv. Rows violating invariants are rejected with
/// line-numbered diagnostics; valid rows are retained.
pub fn parse_faces<R: io::Read>(reader: R, opts: &IngestOptions) -> Result<IngestReport<FaceRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(rdr.headers()?, FACES_HEADER)?;
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        match parse_face_row(&row) {
            Ok(face) => records.push(face),
            Err(message) => rejects.push(RowDiagnostic { line, message }),
        }
    }
    finish(records, rejects, opts)
}

fn parse_face_row(row: &csv::StringRecord) -> std::result::Result<FaceRecord, String> {
    if row.len() != FACES_HEADER.len() {
        return Err(format!("expected {} fields, got {}", FACES_HEADER.len(), row.len()));
    }
    let location = GeoPoint::new(
        parse_f64(row, 3, "lat")?,
        parse_f64(row, 4, "lon")?,
    )
    .map_err(|e| e.to_string())?;
    let face = FaceRecord {
        photo_id: row[0].to_string(),
        user_id: row[1].to_string(),
        site_id: row[2].to_string(),
        location,
        timestamp: parse_timestamp(&row[5])?,
        face_id: row[6].to_string(),
        smile_value: parse_f64(row, 7, "smile_value")?,
        smile_threshold: parse_f64(row, 8, "smile_threshold")?,
        emotion: EmotionStructure {
            anger: parse_f64(row, 9, "anger")?,
            disgust: parse_f64(row, 10, "disgust")?,
            fear: parse_f64(row, 11, "fear")?,
            happiness: parse_f64(row, 12, "happiness")?,
            neutral: parse_f64(row, 13, "neutral")?,
            sadness: parse_f64(row, 14, "sadness")?,
            surprise: parse_f64(row, 15, "surprise")?,
        },
    };
    face.validate().map_err(|e| e.to_string())?;
    Ok(face)
}

/// Parses sites.csv, the factor vocabulary enforced per column.
pub fn parse_sites<R: io::Read>(reader: R, opts: &IngestOptions) -> Result<IngestReport<SiteRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(rdr.headers()?, SITES_HEADER)?;
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        match parse_site_row(&row) {
            Ok(site) => records.push(site),
            Err(message) => rejects.push(RowDiagnostic { line, message }),
        }
    }
    finish(records, rejects, opts)
}

fn parse_site_row(row: &csv::StringRecord) -> std::result::Result<SiteRecord, String> {
    if row.len() != SITES_HEADER.len() {
        return Err(format!("expected {} fields, got {}", SITES_HEADER.len(), row.len()));
    }
    let center = GeoPoint::new(
        parse_f64(row, 2, "lat")?,
        parse_f64(row, 3, "lon")?,
    )
    .map_err(|e| e.to_string())?;
    let harvest_radius_m = parse_f64(row, 4, "harvest_radius_m")?;
    if harvest_radius_m.is_nan() || harvest_radius_m <= 0.0 {
        return Err(format!("harvest_radius_m {harvest_radius_m} must be > 0"));
    }
    let water_distance_m = parse_f64(row, 11, "water_distance_m")?;
    if water_distance_m < 0.0 {
        return Err(format!("water_distance_m {water_distance_m} must be >= 0"));
    }
    let ndvi = parse_f64(row, 12, "ndvi")?;
    if !(-1.0..=1.0).contains(&ndvi) {
        return Err(format!("ndvi {ndvi} out of [-1, 1]"));
    }
    let err = |e: Error| e.to_string();
    Ok(SiteRecord {
        site_id: row[0].to_string(),
        name: row[1].to_string(),
        center,
        harvest_radius_m,
        country: row[6].to_string(),
        factors: FactorRow {
            site_id: row[0].to_string(),
            continent: Continent::parse(&row[5]).map_err(err)?,
            space: Space::parse(&row[7]).map_err(err)?,
            setting: Setting::parse(&row[8]).map_err(err)?,
            site_type: SiteType::parse(&row[9]).map_err(err)?,
            water: WaterPresence::parse(&row[10]).map_err(err)?,
            water_distance_m,
            ndvi,
        },
    })
}

/// Parses photos.csv; tags are semicolon-separated and may be empty.
pub fn parse_photos<R: io::Read>(reader: R, opts: &IngestOptions) -> Result<IngestReport<PhotoRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(rdr.headers()?, PHOTOS_HEADER)?;
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        match parse_photo_row(&row) {
            Ok(photo) => records.push(photo),
            Err(message) => rejects.push(RowDiagnostic { line, message }),
        }
    }
    finish(records, rejects, opts)
}

fn parse_photo_row(row: &csv::StringRecord) -> std::result::Result<PhotoRecord, String> {
    if row.len() != PHOTOS_HEADER.len() {
        return Err(format!("expected {} fields, got {}", PHOTOS_HEADER.len(), row.len()));
    }
    let location = GeoPoint::new(
        parse_f64(row, 3, "lat")?,
        parse_f64(row, 4, "lon")?,
    )
    .map_err(|e| e.to_string())?;
    let tags = if row[6].is_empty() {
        Vec::new()
    } else {
        row[6].split(';').map(str::to_string).collect()
    };
    Ok(PhotoRecord {
        photo_id: row[0].to_string(),
        user_id: row[1].to_string(),
        site_id: row[2].to_string(),
        location,
        timestamp: parse_timestamp(&row[5])?,
        tags,
    })
}

pub fn write_faces_csv<W: io::Write>(writer: W, faces: &[FaceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(FACES_HEADER)?;
    for f in faces {
        w.write_record(&[
            f.photo_id.clone(),
            f.user_id.clone(),
            f.site_id.clone(),
            f.location.lat.to_string(),
            f.location.lon.to_string(),
            format_timestamp(f.timestamp),
            f.face_id.clone(),
            f.smile_value.to_string(),
            f.smile_threshold.to_string(),
            f.emotion.anger.to_string(),
            f.emotion.disgust.to_string(),
            f.emotion.fear.to_string(),
            f.emotion.happiness.to_string(),
            f.emotion.neutral.to_string(),
            f.emotion.sadness.to_string(),
            f.emotion.surprise.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sites_csv<W: io::Write>(writer: W, sites: &[SiteRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SITES_HEADER)?;
    for s in sites {
        w.write_record(&[
            s.site_id.clone(),
            s.name.clone(),
            s.center.lat.to_string(),
            s.center.lon.to_string(),
            s.harvest_radius_m.to_string(),
            s.factors.continent.as_str().to_string(),
            s.country.clone(),
            s.factors.space.as_str().to_string(),
            s.factors.setting.as_str().to_string(),
            s.factors.site_type.as_str().to_string(),
            s.factors.water.as_str().to_string(),
            s.factors.water_distance_m.to_string(),
            s.factors.ndvi.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_photos_csv<W: io::Write>(writer: W, photos: &[PhotoRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PHOTOS_HEADER)?;
    for p in photos {
        w.write_record(&[
            p.photo_id.clone(),
            p.user_id.clone(),
            p.site_id.clone(),
            p.location.lat.to_string(),
            p.location.lon.to_string(),
            format_timestamp(p.timestamp),
            p.tags.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Scorer boundary
// ---------------------------------------------------------------------------

/// A photo reference handed to the scorer: an opaque URI or raw bytes.
#[derive(Debug, Clone, PartialEq)]
pub enum PhotoPayload {
    Uri(String),
    Bytes(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerRequest {
    pub photo_id: String,
    pub payload: PhotoPayload,
}

/// One face as returned by a scorer, before it is tied to a photo.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredFace {
    pub smile_value: f64,
    pub smile_threshold: f64,
    pub emotion: EmotionStructure,
    /// Optional face bounding box (x, y, width, height) in image pixels.
    pub bounding_box: Option<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerResponse {
    pub faces: Vec<ScoredFace>,
}

/// The cloud face-scoring boundary. Implementations must be safe to call
/// concurrently; results are keyed by photo_id and order-independent.
pub trait EmotionScorer: Sync {
    fn score(&self, request: &ScorerRequest) -> std::result::Result<ScorerResponse, String>;
}

/// Deterministic stand-in scorer keyed by a hash of the photo id. Yields 0-2
/// faces per photo with score ranges matching the face schema.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubScorer {
    pub seed: u64,
}

impl EmotionScorer for StubScorer {
    fn score(&self, request: &ScorerRequest) -> std::result::Result<ScorerResponse, String> {
        let mut h = DefaultHasher::new();
        self.seed.hash(&mut h);
        request.photo_id.hash(&mut h);
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
        let n_faces = rng.random_range(0..=2);
        let faces = (0..n_faces)
            .map(|_| {
                let happiness: f64 = rng.random_range(0.0..100.0);
                ScoredFace {
                    smile_value: (happiness + rng.random_range(-15.0..15.0)).clamp(0.0, 100.0),
                    smile_threshold: 50.0,
                    emotion: emotion_from_happiness(happiness),
                    bounding_box: None,
                }
            })
            .collect();
        Ok(ScorerResponse { faces })
    }
}

/// Splits the non-happiness mass across the other six fields so the
/// structure sums to 100 exactly.
pub fn emotion_from_happiness(happiness: f64) -> EmotionStructure {
    let rest = 100.0 - happiness;
    EmotionStructure {
        anger: rest * 0.10,
        disgust: rest * 0.075,
        fear: rest * 0.075,
        happiness,
        neutral: rest * 0.50,
        sadness: rest * 0.15,
        surprise: rest * 0.10,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFailure {
    pub photo_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOutcome {
    pub faces: Vec<FaceRecord>,
    pub failures: Vec<ScoreFailure>,
}

/// Scores photos through the adapter, flattening per-photo face lists into
/// FaceRecords that inherit the photo's location, timestamp and user.
/// Per-photo failures are recorded and skipped; more than
/// `max_fail_fraction` of failures aborts.
pub fn score_photos(
    photos: &[PhotoRecord],
    scorer: &dyn EmotionScorer,
    max_fail_fraction: f64,
) -> Result<ScoreOutcome> {
    let mut faces = Vec::new();
    let mut failures = Vec::new();
    for photo in photos {
        let request = ScorerRequest {
            photo_id: photo.photo_id.clone(),
            payload: PhotoPayload::Uri(format!("photo://{}", photo.photo_id)),
        };
        match scorer.score(&request) {
            Ok(response) => {
                for (k, sf) in response.faces.iter().enumerate() {
                    let face = FaceRecord {
                        photo_id: photo.photo_id.clone(),
                        face_id: format!("{}#{k}", photo.photo_id),
                        user_id: photo.user_id.clone(),
                        site_id: photo.site_id.clone(),
                        location: photo.location,
                        timestamp: photo.timestamp,
                        smile_value: sf.smile_value,
                        smile_threshold: sf.smile_threshold,
                        emotion: sf.emotion,
                    };
                    if let Err(e) = face.validate() {
                        failures.push(ScoreFailure {
                            photo_id: photo.photo_id.clone(),
                            message: format!("invalid scored face: {e}"),
                        });
                    } else {
                        faces.push(face);
                    }
                }
            }
            Err(message) => failures.push(ScoreFailure {
                photo_id: photo.photo_id.clone(),
                message,
            }),
        }
    }
    if !photos.is_empty() && failures.len() as f64 > max_fail_fraction * photos.len() as f64 {
        return Err(Error::ScoringAborted {
            failed: failures.len(),
            total: photos.len(),
        });
    }
    Ok(ScoreOutcome { faces, failures })
}

// ---------------------------------------------------------------------------
// Tourist / local classification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cohort {
    Tourist,
    Local,
}

impl Cohort {
    pub fn as_str(&self) -> &'static str {
        match self {
            Cohort::Tourist => "tourist",
            Cohort::Local => "local",
        }
    }
}

/// A user is local at a site iff their photo timestamps there span strictly
/// more than 31 days.
pub fn classify_user(photos_of_user_at_site: &[PhotoRecord]) -> Result<Cohort> {
    if photos_of_user_at_site.is_empty() {
        return Err(Error::NoData);
    }
    let min = photos_of_user_at_site.iter().map(|p| p.timestamp).min().unwrap();
    let max = photos_of_user_at_site.iter().map(|p| p.timestamp).max().unwrap();
    if max - min > Duration::days(31) {
        Ok(Cohort::Local)
    } else {
        Ok(Cohort::Tourist)
    }
}

// ---------------------------------------------------------------------------
// Synthetic data generation
// ---------------------------------------------------------------------------

/// One Gaussian photo cloud within a site, offsets in meters from the site
/// center. Samples are truncated at 4 sigma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthBlob {
    pub east_m: f64,
    pub north_m: f64,
    pub sigma_m: f64,
    pub weight: f64,
}

/// Archetype parameters for one synthetic site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSiteSpec {
    pub site_id: String,
    pub name: String,
    pub center: GeoPoint,
    pub factors: FactorRow,
    pub harvest_radius_m: f64,
    pub n_photos: usize,
    /// Faces detected per photo (≥ 1); lets face counts scale independently
    /// of the photo-point cloud used for clustering.
    pub faces_per_photo: usize,
    pub blobs: Vec<SynthBlob>,
    /// Fraction of photos scattered uniformly over the harvest disc.
    pub noise_fraction: f64,
    pub mean_happiness: f64,
    pub happiness_sd: f64,
    pub n_users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub sites: Vec<SynthSiteSpec>,
    pub seed: u64,
}

/// Deterministic per-seed generator of (sites, photos, faces). Each face's
/// happiness and smile value share a latent per-face positivity, so joy and
/// AHI rankings agree on archetype order.
pub fn synth_dataset(spec: &SynthSpec) -> Result<(Vec<SiteRecord>, Vec<PhotoRecord>, Vec<FaceRecord>)> {
    let mut sites = Vec::new();
    let mut photos = Vec::new();
    let mut faces = Vec::new();
    let epoch_start = Utc.with_ymd_and_hms(2012, 1, 1, 0, 0, 0).unwrap();
    let epoch_span_s = (Utc.with_ymd_and_hms(2017, 6, 30, 0, 0, 0).unwrap() - epoch_start).num_seconds();

    for (site_idx, s) in spec.sites.iter().enumerate() {
        if s.blobs.is_empty() || s.n_users == 0 || s.faces_per_photo == 0 {
            return Err(Error::InvalidConfig(format!(
                "site {}: needs at least one blob, one user and one face per photo",
                s.site_id
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(site_idx as u64 + 1);
        let normal = Normal::new(0.0, 1.0).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let weight_sum: f64 = s.blobs.iter().map(|b| b.weight).sum();

        sites.push(SiteRecord {
            site_id: s.site_id.clone(),
            name: s.name.clone(),
            center: s.center,
            harvest_radius_m: s.harvest_radius_m,
            country: "synthetic".into(),
            factors: s.factors.clone(),
        });

        // Each user photographs inside a bounded time window; a spread of
        // window lengths yields both cohorts.
        let user_windows: Vec<(i64, i64)> = (0..s.n_users)
            .map(|_| {
                let len_s = if rng.random_bool(0.25) {
                    60 * 86_400 // spans beyond the one-month rule
                } else {
                    5 * 86_400
                };
                let start = rng.random_range(0..(epoch_span_s - len_s).max(1));
                (start, len_s)
            })
            .collect();

        for k in 0..s.n_photos {
            let location = if rng.random::<f64>() < s.noise_fraction {
                // uniform over the harvest disc
                let r = s.harvest_radius_m * rng.random::<f64>().sqrt();
                let ang = rng.random_range(0.0..std::f64::consts::TAU);
                unproject(
                    PlanarPoint {
                        x: r * ang.cos(),
                        y: r * ang.sin(),
                    },
                    s.center,
                )
            } else {
                let mut pick = rng.random_range(0.0..weight_sum);
                let mut blob = &s.blobs[0];
                for b in &s.blobs {
                    if pick < b.weight {
                        blob = b;
                        break;
                    }
                    pick -= b.weight;
                }
                // truncated Gaussian offsets
                let mut draw = || loop {
                    let v: f64 = normal.sample(&mut rng);
                    if v.abs() <= 4.0 {
                        return v * blob.sigma_m;
                    }
                };
                let (dx, dy) = (draw(), draw());
                unproject(
                    PlanarPoint {
                        x: blob.east_m + dx,
                        y: blob.north_m + dy,
                    },
                    s.center,
                )
            };

            let user = rng.random_range(0..s.n_users);
            let (window_start, window_len) = user_windows[user];
            let timestamp = epoch_start + Duration::seconds(window_start + rng.random_range(0..window_len));

            let photo_id = format!("{}-p{k:05}", s.site_id);
            let user_id = format!("{}-u{user:03}", s.site_id);
            let tags = if rng.random_bool(0.8) {
                vec![s.name.to_lowercase().replace(' ', ""), "Travel".into()]
            } else {
                vec!["holiday".into()]
            };
            photos.push(PhotoRecord {
                photo_id: photo_id.clone(),
                user_id: user_id.clone(),
                site_id: s.site_id.clone(),
                location,
                timestamp,
                tags,
            });

            for j in 0..s.faces_per_photo {
                // latent positivity drives both indices
                let z = (s.mean_happiness + s.happiness_sd * normal.sample(&mut rng)).clamp(0.0, 100.0);
                let smile_value = (z + 8.0 * normal.sample(&mut rng)).clamp(0.0, 100.0);
                faces.push(FaceRecord {
                    photo_id: photo_id.clone(),
                    face_id: format!("{}-f{k:05}-{j}", s.site_id),
                    user_id: user_id.clone(),
                    site_id: s.site_id.clone(),
                    location,
                    timestamp,
                    smile_value,
                    smile_threshold: 50.0,
                    emotion: emotion_from_happiness(z),
                });
            }
        }
    }
    Ok((sites, photos, faces))
}
