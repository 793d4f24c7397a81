//! Batch CLI over the place-emotion pipeline. Data goes to files, diagnostics
//! to stderr. Exit codes: 0 success, 1 usage error, 2 data error, 3 study
//! error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use place_emotion::affect::{EmotionSummary, FaceRecord};
use place_emotion::cli::{
    atomic_write, cohorts_to_csv, export_geojson, parse_config, parse_ranking_csv, ranking_to_csv,
    regression_to_csv, sensitivity_to_csv, stability_to_csv, tags_to_csv, StudyConfig,
    CONFIG_ENV_VAR,
};
use place_emotion::error::{Error, Result};
use place_emotion::geo::{construct_place, GeoPoint};
use place_emotion::ingest::{
    parse_faces, parse_photos, parse_sites, score_photos, synth_dataset, write_faces_csv,
    write_photos_csv, write_sites_csv, IngestOptions, IngestReport, PhotoRecord, SiteRecord,
    StubScorer, SynthBlob, SynthSiteSpec, SynthSpec,
};
use place_emotion::pipeline::{
    build_ranking, compare_cohorts, regression_study, run_study, sensitivity_grid, split_by_cohort,
    stability_curve, tag_frequencies, RankIndex, StudyOutcome,
};
use place_emotion::stats::{
    spearman, Continent, FactorRow, Setting, SiteType, Space, WaterPresence,
};

#[derive(Parser)]
#[command(name = "place-emotion", version, about = "Place footprints and happiness indices from geotagged photo data")]
struct Cli {
    #[command(flatten)]
    overrides: ConfigOverrides,
    #[command(subcommand)]
    command: Command,
}

/// Study settings; flags override the config file, which overrides defaults.
#[derive(Args)]
struct ConfigOverrides {
    /// Config file (key = value); defaults to $PLACE_EMOTION_CONFIG if set
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Comma-separated clustering radii in meters
    #[arg(long, global = true)]
    eps_m: Option<String>,
    /// Comma-separated density fractions for min_pts
    #[arg(long, global = true)]
    min_pts_pct: Option<String>,
    #[arg(long, global = true)]
    min_pts_floor: Option<usize>,
    /// Bootstrap resample count
    #[arg(long, global = true)]
    resamples: Option<usize>,
    /// Bootstrap confidence level, e.g. 0.95
    #[arg(long, global = true)]
    confidence: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Regression reference level, factor=level (repeatable)
    #[arg(long = "reference", global = true)]
    references: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Check input files against the schemas and report reject counts
    Validate {
        #[arg(long)]
        faces: Option<PathBuf>,
        #[arg(long)]
        sites: Option<PathBuf>,
        #[arg(long)]
        photos: Option<PathBuf>,
    },
    /// Generate a deterministic synthetic dataset
    Synth {
        #[arg(long, default_value = "8")]
        sites: usize,
        #[arg(long, default_value = "2000")]
        photos_per_site: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Construct place footprints from photo points and export GeoJSON
    Places {
        #[arg(long)]
        photos: PathBuf,
        #[arg(long)]
        sites: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the stub emotion scorer over photos, producing faces.csv
    Score {
        #[arg(long)]
        photos: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "0.1")]
        max_fail_fraction: f64,
    },
    /// Rank sites by a happiness index
    Rank {
        #[arg(long)]
        faces: PathBuf,
        #[arg(long)]
        sites: PathBuf,
        #[arg(long, value_parser = parse_index, default_value = "joy")]
        index: RankIndex,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rankings across the clustering parameter grid plus Kendall's W
    Sensitivity {
        #[arg(long)]
        faces: PathBuf,
        #[arg(long)]
        sites: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correlation screen and factor regression for both indices
    Regress {
        #[arg(long)]
        faces: PathBuf,
        #[arg(long)]
        sites: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// CI width vs sample size with a power-law fit
    Stability {
        #[arg(long)]
        faces: PathBuf,
        #[arg(long)]
        sites: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Top-k tag frequencies for one site
    Tags {
        #[arg(long)]
        photos: PathBuf,
        #[arg(long)]
        site: String,
        #[arg(short, default_value = "100")]
        k: usize,
        /// Defaults to tags_<site>.csv next to the photos file
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spearman correlation between two ranking files (printed to stdout)
    CompareRankings {
        a: PathBuf,
        b: PathBuf,
    },
    /// Tourist-vs-local index deltas per site
    Cohorts {
        #[arg(long)]
        faces: PathBuf,
        #[arg(long)]
        sites: PathBuf,
        #[arg(long)]
        photos: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_index(s: &str) -> std::result::Result<RankIndex, String> {
    match s {
        "joy" => Ok(RankIndex::Joy),
        "ahi" => Ok(RankIndex::Ahi),
        _ => Err(format!("expected joy or ahi, got {s:?}")),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) => 1,
        Error::SchemaError(_)
        | Error::IngestAborted { .. }
        | Error::ScoringAborted { .. }
        | Error::Csv(_)
        | Error::Json(_)
        | Error::Io(_) => 2,
        _ => 3,
    }
}

fn load_config(ov: &ConfigOverrides) -> Result<StudyConfig> {
    let path = ov
        .config
        .clone()
        .or_else(|| std::env::var_os(CONFIG_ENV_VAR).map(PathBuf::from));
    let mut cfg = match path {
        Some(p) => parse_config(&fs::read_to_string(&p).map_err(|e| {
            Error::InvalidConfig(format!("cannot read config {}: {e}", p.display()))
        })?)?,
        None => StudyConfig::default(),
    };
    let parse_list = |v: &str| -> Result<Vec<f64>> {
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("not a number: {s:?}")))
            })
            .collect()
    };
    if let Some(v) = &ov.eps_m {
        cfg.eps_m = parse_list(v)?;
    }
    if let Some(v) = &ov.min_pts_pct {
        cfg.min_pts_pct = parse_list(v)?;
    }
    if let Some(v) = ov.min_pts_floor {
        cfg.min_pts_floor = v;
    }
    if let Some(v) = ov.resamples {
        cfg.n_resamples = v;
    }
    if let Some(v) = ov.confidence {
        cfg.confidence = v;
    }
    if let Some(v) = ov.seed {
        cfg.seed = v;
    }
    for r in &ov.references {
        let (factor, level) = r.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("--reference wants factor=level, got {r:?}"))
        })?;
        cfg.references
            .insert(factor.trim().to_string(), level.trim().to_string());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_report<T>(
    label: &str,
    path: &Path,
    parse: impl Fn(fs::File, &IngestOptions) -> Result<IngestReport<T>>,
) -> Result<Vec<T>> {
    let file = fs::File::open(path)?;
    let report = parse(file, &IngestOptions::default())?;
    for d in &report.rejects {
        eprintln!("{label} {}: line {}: {}", path.display(), d.line, d.message);
    }
    if !report.rejects.is_empty() {
        eprintln!(
            "{label} {}: rejected {} of {} rows",
            path.display(),
            report.rejects.len(),
            report.records.len() + report.rejects.len()
        );
    }
    Ok(report.records)
}

fn read_faces(path: &Path) -> Result<Vec<FaceRecord>> {
    read_report("faces", path, parse_faces)
}

fn read_sites(path: &Path) -> Result<Vec<SiteRecord>> {
    read_report("sites", path, parse_sites)
}

fn read_photos(path: &Path) -> Result<Vec<PhotoRecord>> {
    read_report("photos", path, parse_photos)
}

fn report_exclusions(outcome: &StudyOutcome) {
    for (site_id, reason) in &outcome.excluded {
        eprintln!("excluded {site_id}: {reason}");
    }
}

fn study(cfg: &StudyConfig, sites: &[SiteRecord], faces: &[FaceRecord]) -> Result<StudyOutcome> {
    let outcome = run_study(sites, faces, cfg.single_params()?, &cfg.bootstrap()?)?;
    report_exclusions(&outcome);
    Ok(outcome)
}

/// Rotating site archetypes for the synth subcommand; the happiness means
/// are generator parameters, not claims about real places.
fn default_synth_spec(n_sites: usize, photos_per_site: usize, seed: u64) -> SynthSpec {
    let archetypes: &[(SiteType, f64)] = &[
        (SiteType::Amusement, 55.0),
        (SiteType::Religious, 25.0),
        (SiteType::Natural, 45.0),
        (SiteType::Museum, 40.0),
        (SiteType::Palace, 50.0),
        (SiteType::Cultural, 35.0),
    ];
    let continents = Continent::ALL;
    let sites = (0..n_sites)
        .map(|i| {
            let (site_type, mean_happiness) = archetypes[i % archetypes.len()];
            let lat = -40.0 + ((i * 7) % 80) as f64;
            let lon = -150.0 + ((i * 37) % 300) as f64;
            let site_id = format!("s{:03}", i + 1);
            SynthSiteSpec {
                site_id: site_id.clone(),
                name: format!("Synthetic Site {}", i + 1),
                center: GeoPoint::new(lat, lon).expect("grid stays in range"),
                factors: FactorRow {
                    site_id,
                    continent: continents[i % continents.len()],
                    space: if i % 2 == 0 { Space::Open } else { Space::Closed },
                    setting: if i % 3 == 0 { Setting::Rural } else { Setting::Urban },
                    site_type,
                    water: if i % 2 == 0 {
                        WaterPresence::Present
                    } else {
                        WaterPresence::Absent
                    },
                    water_distance_m: 50.0 + (i * 120) as f64,
                    ndvi: 0.1 + 0.07 * (i % 10) as f64,
                },
                harvest_radius_m: 1000.0,
                n_photos: photos_per_site,
                faces_per_photo: 1,
                blobs: vec![
                    SynthBlob {
                        east_m: -120.0,
                        north_m: 40.0,
                        sigma_m: 60.0,
                        weight: 0.6,
                    },
                    SynthBlob {
                        east_m: 150.0,
                        north_m: -80.0,
                        sigma_m: 45.0,
                        weight: 0.4,
                    },
                ],
                noise_fraction: 0.1,
                mean_happiness,
                happiness_sd: 18.0,
                n_users: (photos_per_site / 10).max(1),
            }
        })
        .collect();
    SynthSpec { sites, seed }
}

fn csv_bytes<F: FnOnce(&mut Vec<u8>) -> Result<()>>(f: F) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn summaries(outcome: &StudyOutcome) -> Vec<EmotionSummary> {
    outcome.sites.iter().map(|s| s.summary.clone()).collect()
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.overrides)?;
    match cli.command {
        Command::Validate { faces, sites, photos } => {
            if faces.is_none() && sites.is_none() && photos.is_none() {
                return Err(Error::InvalidConfig(
                    "validate needs at least one of --faces/--sites/--photos".into(),
                ));
            }
            if let Some(p) = faces {
                let n = read_faces(&p)?.len();
                eprintln!("faces {}: {n} valid rows", p.display());
            }
            if let Some(p) = sites {
                let n = read_sites(&p)?.len();
                eprintln!("sites {}: {n} valid rows", p.display());
            }
            if let Some(p) = photos {
                let n = read_photos(&p)?.len();
                eprintln!("photos {}: {n} valid rows", p.display());
            }
        }
        Command::Synth { sites, photos_per_site, out_dir } => {
            let spec = default_synth_spec(sites, photos_per_site, cfg.seed);
            let (site_recs, photos, faces) = synth_dataset(&spec)?;
            fs::create_dir_all(&out_dir)?;
            atomic_write(
                &out_dir.join("sites.csv"),
                &csv_bytes(|b| write_sites_csv(b, &site_recs))?,
            )?;
            atomic_write(
                &out_dir.join("photos.csv"),
                &csv_bytes(|b| write_photos_csv(b, &photos))?,
            )?;
            atomic_write(
                &out_dir.join("faces.csv"),
                &csv_bytes(|b| write_faces_csv(b, &faces))?,
            )?;
            eprintln!(
                "wrote {} sites, {} photos, {} faces to {}",
                site_recs.len(),
                photos.len(),
                faces.len(),
                out_dir.display()
            );
        }
        Command::Places { photos, sites, out } => {
            let site_recs = read_sites(&sites)?;
            let photo_recs = read_photos(&photos)?;
            let params = cfg.single_params()?;
            let mut places = Vec::new();
            for site in &site_recs {
                let pts: Vec<GeoPoint> = photo_recs
                    .iter()
                    .filter(|p| p.site_id == site.site_id && site.within_harvest(p.location))
                    .map(|p| p.location)
                    .collect();
                match construct_place(&site.site_id, &pts, params) {
                    Ok(place) => places.push((place, site.name.clone())),
                    Err(e) => eprintln!("excluded {}: {e}", site.site_id),
                }
            }
            if places.is_empty() && !site_recs.is_empty() {
                return Err(Error::StudyFailed);
            }
            let doc = export_geojson(&places);
            atomic_write(&out, serde_json::to_string_pretty(&doc)?.as_bytes())?;
        }
        Command::Score { photos, out, max_fail_fraction } => {
            let photo_recs = read_photos(&photos)?;
            let scorer = StubScorer { seed: cfg.seed };
            let outcome = score_photos(&photo_recs, &scorer, max_fail_fraction)?;
            for f in &outcome.failures {
                eprintln!("scoring failed for {}: {}", f.photo_id, f.message);
            }
            atomic_write(&out, &csv_bytes(|b| write_faces_csv(b, &outcome.faces))?)?;
        }
        Command::Rank { faces, sites, index, out } => {
            let outcome = study(&cfg, &read_sites(&sites)?, &read_faces(&faces)?)?;
            let ranking = build_ranking(&outcome.sites, index);
            atomic_write(&out, &ranking_to_csv(&ranking)?)?;
        }
        Command::Sensitivity { faces, sites, out } => {
            let report = sensitivity_grid(
                &read_sites(&sites)?,
                &read_faces(&faces)?,
                &cfg.eps_m,
                &cfg.min_pts_pct,
                cfg.min_pts_floor,
                &cfg.bootstrap()?,
            )?;
            for (params, reason) in &report.failed_combos {
                eprintln!(
                    "combo eps={} pct={} failed: {reason}",
                    params.eps_m, params.min_pts_pct
                );
            }
            atomic_write(&out, &sensitivity_to_csv(&report)?)?;
        }
        Command::Regress { faces, sites, out } => {
            let site_recs = read_sites(&sites)?;
            let outcome = study(&cfg, &site_recs, &read_faces(&faces)?)?;
            let factors: Vec<FactorRow> = site_recs.iter().map(|s| s.factors.clone()).collect();
            let result = regression_study(&summaries(&outcome), &factors, &cfg.references)?;
            atomic_write(&out, &regression_to_csv(&result)?)?;
        }
        Command::Stability { faces, sites, out } => {
            let outcome = study(&cfg, &read_sites(&sites)?, &read_faces(&faces)?)?;
            let curve = stability_curve(&summaries(&outcome))?;
            atomic_write(&out, &stability_to_csv(&curve)?)?;
        }
        Command::Tags { photos, site, k, out } => {
            if k == 0 {
                return Err(Error::InvalidConfig("k must be at least 1".into()));
            }
            let photo_recs = read_photos(&photos)?;
            let freqs = tag_frequencies(&photo_recs, &site, k);
            let out = out.unwrap_or_else(|| {
                photos
                    .parent()
                    .unwrap_or_else(|| Path::new("."))
                    .join(format!("tags_{site}.csv"))
            });
            atomic_write(&out, &tags_to_csv(&freqs)?)?;
        }
        Command::CompareRankings { a, b } => {
            let rank_of = |path: &Path| -> Result<Vec<(String, f64)>> {
                let entries = parse_ranking_csv(&fs::read_to_string(path)?)?;
                Ok(entries
                    .into_iter()
                    .map(|e| (e.site_id, e.rank as f64))
                    .collect())
            };
            let ra = rank_of(&a)?;
            let rb: std::collections::BTreeMap<String, f64> = rank_of(&b)?.into_iter().collect();
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (site_id, rank) in &ra {
                if let Some(other) = rb.get(site_id) {
                    xs.push(*rank);
                    ys.push(*other);
                }
            }
            if xs.len() < 2 {
                return Err(Error::InsufficientData(format!(
                    "only {} sites common to both rankings",
                    xs.len()
                )));
            }
            // round off float residue so identical rankings print exactly 1
            let rho = spearman(&xs, &ys)?;
            println!("{}", (rho * 1e12).round() / 1e12);
        }
        Command::Cohorts { faces, sites, photos, out } => {
            let site_recs = read_sites(&sites)?;
            let face_recs = read_faces(&faces)?;
            let photo_recs = read_photos(&photos)?;
            let (tourist, local) = split_by_cohort(&face_recs, &photo_recs);
            let params = cfg.single_params()?;
            let ci = cfg.bootstrap()?;
            let t = run_study(&site_recs, &tourist, params, &ci)?;
            report_exclusions(&t);
            let l = run_study(&site_recs, &local, params, &ci)?;
            report_exclusions(&l);
            let cmp = compare_cohorts(&summaries(&t), &summaries(&l))?;
            for site in &cmp.skipped {
                eprintln!("skipped {site}: present in only one cohort");
            }
            atomic_write(&out, &cohorts_to_csv(&cmp)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
