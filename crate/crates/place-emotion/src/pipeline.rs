//! End-to-end studies: place construction per site, emotion summaries,
//! rankings, the parameter sensitivity grid with Kendall's W, the factor
//! regression study, tag frequencies, the CI-stability curve, and cohort
//! comparison.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affect::{summarize_place, EmotionSummary, FaceRecord};
use crate::error::{Error, Result};
use crate::geo::{construct_place, point_in_footprint, ClusterParams, GeoPoint, Place};
use crate::ingest::{classify_user, Cohort, PhotoRecord, SiteRecord};
use crate::stats::{
    self, correlation_screen, dummy_encode, kendalls_w, ols_fit, BootstrapConfig, Direction,
    FactorRow, RankMatrix, References, RegressionResult, ScreenReport,
};

/// One surviving site of a study run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteResult {
    pub site_id: String,
    pub name: String,
    pub place: Place,
    pub summary: EmotionSummary,
}

/// Surviving sites plus (site_id, reason) for the excluded ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOutcome {
    pub sites: Vec<SiteResult>,
    pub excluded: Vec<(String, String)>,
}

fn site_seed_offset(site_id: &str) -> u64 {
    let mut h = DefaultHasher::new();
    site_id.hash(&mut h);
    h.finish() | 1
}

/// Per site: construct the place from unique photo points, keep the faces
/// that fall inside the footprint, and summarize them. Sites raising
/// EmptyPlace or NoFaces are reported and excluded.
pub fn run_study(
    sites: &[SiteRecord],
    faces: &[FaceRecord],
    params: ClusterParams,
    ci: &BootstrapConfig,
) -> Result<StudyOutcome> {
    let mut by_site: BTreeMap<&str, Vec<&FaceRecord>> = BTreeMap::new();
    for f in faces {
        by_site.entry(f.site_id.as_str()).or_default().push(f);
    }

    let per_site: Vec<std::result::Result<SiteResult, (String, String)>> = sites
        .par_iter()
        .map(|site| {
            let excluded = |reason: String| Err((site.site_id.clone(), reason));
            let Some(site_faces) = by_site.get(site.site_id.as_str()) else {
                return excluded("no faces for site".into());
            };
            // photos outside the harvest radius never enter clustering
            let in_harvest: Vec<&&FaceRecord> = site_faces
                .iter()
                .filter(|f| site.within_harvest(f.location))
                .collect();
            if in_harvest.is_empty() {
                return excluded("no faces within harvest radius".into());
            }
            // one clustering point per photo
            let mut seen = BTreeSet::new();
            let points: Vec<GeoPoint> = in_harvest
                .iter()
                .filter(|f| seen.insert(f.photo_id.as_str()))
                .map(|f| f.location)
                .collect();
            let place = match construct_place(&site.site_id, &points, params) {
                Ok(p) => p,
                Err(e @ Error::EmptyPlace { .. }) => return excluded(e.to_string()),
                Err(e) => return excluded(e.to_string()),
            };
            let retained: Vec<FaceRecord> = in_harvest
                .iter()
                .filter(|f| point_in_footprint(f.location, &place))
                .map(|f| (**f).clone())
                .collect();
            let cfg = ci.with_offset(site_seed_offset(&site.site_id));
            match summarize_place(&site.site_id, &retained, &cfg) {
                Ok(summary) => Ok(SiteResult {
                    site_id: site.site_id.clone(),
                    name: site.name.clone(),
                    place,
                    summary,
                }),
                Err(e @ Error::NoFaces { .. }) => excluded(e.to_string()),
                Err(e) => excluded(e.to_string()),
            }
        })
        .collect();

    let mut outcome = StudyOutcome {
        sites: Vec::new(),
        excluded: Vec::new(),
    };
    for r in per_site {
        match r {
            Ok(s) => outcome.sites.push(s),
            Err(e) => outcome.excluded.push(e),
        }
    }
    if outcome.sites.is_empty() {
        return Err(Error::StudyFailed);
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RankIndex {
    Joy,
    Ahi,
}

impl RankIndex {
    pub fn as_str(&self) -> &'static str {
        match self {
            RankIndex::Joy => "joy",
            RankIndex::Ahi => "ahi",
        }
    }

    pub fn of(&self, summary: &EmotionSummary) -> f64 {
        match self {
            RankIndex::Joy => summary.joy_index,
            RankIndex::Ahi => summary.ahi,
        }
    }
}

/// One row of a ranking list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingEntry {
    pub rank: usize,
    pub site_id: String,
    pub name: String,
    pub summary: EmotionSummary,
}

/// Stable descending sort by the chosen index, ties broken by ascending
/// site_id, ranks dense from 1.
pub fn build_ranking(results: &[SiteResult], index: RankIndex) -> Vec<RankingEntry> {
    let mut sorted: Vec<&SiteResult> = results.iter().collect();
    sorted.sort_by(|a, b| {
        index
            .of(&b.summary)
            .total_cmp(&index.of(&a.summary))
            .then_with(|| a.site_id.cmp(&b.site_id))
    });
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, r)| RankingEntry {
            rank: i + 1,
            site_id: r.site_id.clone(),
            name: r.name.clone(),
            summary: r.summary.clone(),
        })
        .collect()
}

/// Rankings of one parameter combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboRankings {
    pub params: ClusterParams,
    pub joy_ranking: Vec<RankingEntry>,
    pub ahi_ranking: Vec<RankingEntry>,
}

/// Concordance of rankings across the parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub combos: Vec<ComboRankings>,
    pub failed_combos: Vec<(ClusterParams, String)>,
    /// Sites surviving every successful combo; W is computed over these.
    pub common_sites: Vec<String>,
    pub w_joy: f64,
    pub w_ahi: f64,
    pub w_combined: f64,
}

/// Default sensitivity grid: eps 50/100/200/300 m, minPts 0.5/1/2 percent.
pub const DEFAULT_EPS_GRID_M: &[f64] = &[50.0, 100.0, 200.0, 300.0];
pub const DEFAULT_PCT_GRID: &[f64] = &[0.005, 0.01, 0.02];

/// Runs the study per (eps, pct) combination and measures ranking agreement
/// with Kendall's W over joy rankings, ahi rankings, and the concatenated
/// judge set.
pub fn sensitivity_grid(
    sites: &[SiteRecord],
    faces: &[FaceRecord],
    eps_list: &[f64],
    pct_list: &[f64],
    min_pts_floor: usize,
    ci: &BootstrapConfig,
) -> Result<SensitivityReport> {
    if eps_list.is_empty() || pct_list.is_empty() {
        return Err(Error::InvalidConfig("empty parameter grid".into()));
    }
    let mut grid = Vec::new();
    for &eps in eps_list {
        for &pct in pct_list {
            grid.push(ClusterParams::new(eps, pct, min_pts_floor)?);
        }
    }

    let runs: Vec<(ClusterParams, Result<StudyOutcome>)> = grid
        .into_par_iter()
        .map(|params| (params, run_study(sites, faces, params, ci)))
        .collect();

    let mut combos = Vec::new();
    let mut failed_combos = Vec::new();
    let mut outcomes = Vec::new();
    for (params, run) in runs {
        match run {
            Ok(outcome) => {
                combos.push(ComboRankings {
                    params,
                    joy_ranking: build_ranking(&outcome.sites, RankIndex::Joy),
                    ahi_ranking: build_ranking(&outcome.sites, RankIndex::Ahi),
                });
                outcomes.push(outcome);
            }
            Err(e) => failed_combos.push((params, e.to_string())),
        }
    }
    if outcomes.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "only {} parameter combination(s) survived; Kendall's W needs at least 2",
            outcomes.len()
        )));
    }

    // W is defined over a common item set: sites surviving every combo.
    let mut common: BTreeSet<String> = outcomes[0].sites.iter().map(|s| s.site_id.clone()).collect();
    for outcome in &outcomes[1..] {
        let ids: BTreeSet<String> = outcome.sites.iter().map(|s| s.site_id.clone()).collect();
        common = common.intersection(&ids).cloned().collect();
    }
    let common_sites: Vec<String> = common.into_iter().collect();
    if common_sites.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "only {} site(s) survived every combo",
            common_sites.len()
        )));
    }

    let scores = |outcome: &StudyOutcome, index: RankIndex| -> Vec<f64> {
        let by_id: BTreeMap<&str, &SiteResult> =
            outcome.sites.iter().map(|s| (s.site_id.as_str(), s)).collect();
        common_sites
            .iter()
            .map(|id| index.of(&by_id[id.as_str()].summary))
            .collect()
    };
    let joy_lists: Vec<Vec<f64>> = outcomes.iter().map(|o| scores(o, RankIndex::Joy)).collect();
    let ahi_lists: Vec<Vec<f64>> = outcomes.iter().map(|o| scores(o, RankIndex::Ahi)).collect();
    let mut combined = joy_lists.clone();
    combined.extend(ahi_lists.clone());

    let w_of = |lists: &[Vec<f64>]| -> Result<f64> {
        kendalls_w(&RankMatrix::from_scores(lists, Direction::Descending)?)
    };

    Ok(SensitivityReport {
        combos,
        failed_combos,
        common_sites,
        w_joy: w_of(&joy_lists)?,
        w_ahi: w_of(&ahi_lists)?,
        w_combined: w_of(&combined)?,
    })
}

/// Correlation screen plus OLS fit for one emotion index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexStudy {
    pub index: RankIndex,
    pub screen: ScreenReport,
    pub fit: RegressionResult,
    /// Dummy columns for levels absent from the data, dropped before the fit
    /// to keep the design full rank.
    pub dropped_columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionStudy {
    pub joy: IndexStudy,
    pub ahi: IndexStudy,
}

/// Star annotation for a coefficient p-value.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

fn factor_level(row: &FactorRow, factor: &str) -> &'static str {
    match factor {
        "continent" => row.continent.as_str(),
        "space" => row.space.as_str(),
        "setting" => row.setting.as_str(),
        "type" => row.site_type.as_str(),
        "water" => row.water.as_str(),
        other => unreachable!("unknown factor {other}"),
    }
}

/// Screens and regresses both indices against the factor table. Factor rows
/// must cover every summarized site.
pub fn regression_study(
    summaries: &[EmotionSummary],
    factors: &[FactorRow],
    references: &References,
) -> Result<RegressionStudy> {
    let by_id: BTreeMap<&str, &FactorRow> = factors.iter().map(|f| (f.site_id.as_str(), f)).collect();
    let mut aligned = Vec::with_capacity(summaries.len());
    for s in summaries {
        let row = by_id.get(s.site_id.as_str()).ok_or_else(|| {
            Error::SchemaError(format!("no factor row for site {}", s.site_id))
        })?;
        aligned.push((*row).clone());
    }

    let study_for = |index: RankIndex| -> Result<IndexStudy> {
        let emotion: Vec<f64> = summaries.iter().map(|s| index.of(s)).collect();
        let screen = correlation_screen(&aligned, &emotion)?;
        let full = dummy_encode(&aligned, references)?;
        // drop dummy columns for levels absent from this dataset (all-zero)
        // or universal across it (all-one, collinear with the intercept)
        let mut keep: Vec<usize> = (0..full.columns.len())
            .filter(|&j| {
                if !full.columns[j].contains('=') {
                    return true;
                }
                full.rows.iter().any(|r| r[j] != 0.0) && full.rows.iter().any(|r| r[j] != 1.0)
            })
            .collect();
        // a reference level absent from the data leaves the factor's dummies
        // summing to the intercept; demote the first surviving level to
        // stand-in reference
        for factor in stats::CATEGORICAL_FACTORS {
            let reference_occurs = full
                .references
                .get(*factor)
                .is_some_and(|level| aligned.iter().any(|r| factor_level(r, factor) == level));
            if !reference_occurs {
                let prefix = format!("{factor}=");
                let surviving: Vec<usize> = keep
                    .iter()
                    .copied()
                    .filter(|&j| full.columns[j].starts_with(&prefix))
                    .collect();
                if surviving.len() > 1 {
                    keep.retain(|&j| j != surviving[0]);
                }
            }
        }
        let dropped_columns: Vec<String> = (0..full.columns.len())
            .filter(|j| !keep.contains(j))
            .map(|j| full.columns[j].clone())
            .collect();
        let design = stats::DesignMatrix {
            columns: keep.iter().map(|&j| full.columns[j].clone()).collect(),
            references: full.references.clone(),
            rows: full
                .rows
                .iter()
                .map(|r| keep.iter().map(|&j| r[j]).collect())
                .collect(),
        };
        let fit = ols_fit(&design, &emotion)?;
        Ok(IndexStudy {
            index,
            screen,
            fit,
            dropped_columns,
        })
    };

    Ok(RegressionStudy {
        joy: study_for(RankIndex::Joy)?,
        ahi: study_for(RankIndex::Ahi)?,
    })
}

/// Power-law fit of CI width against face count, log-log least squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub amplitude: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub index: RankIndex,
    /// (n_faces, ci_width) per site.
    pub points: Vec<(usize, f64)>,
    pub fit: Option<PowerFit>,
    pub degenerate_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCurve {
    pub joy: CurveSeries,
    pub ahi: CurveSeries,
}

fn fit_power(points: &[(usize, f64)]) -> std::result::Result<PowerFit, String> {
    if points.iter().any(|&(n, w)| n == 0 || w <= 0.0) {
        return Err("zero-width interval or empty site; power fit undefined".into());
    }
    let xs: Vec<f64> = points.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, w)| w.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err("face counts do not vary".into());
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(PowerFit {
        exponent: slope,
        amplitude: (my - slope * mx).exp(),
        r_squared,
    })
}

/// Relates bootstrap CI width to face count per site for both indices.
pub fn stability_curve(summaries: &[EmotionSummary]) -> Result<StabilityCurve> {
    if summaries.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "stability curve needs at least 5 sites, got {}",
            summaries.len()
        )));
    }
    let series = |index: RankIndex| {
        let points: Vec<(usize, f64)> = summaries
            .iter()
            .map(|s| {
                let w = match index {
                    RankIndex::Joy => s.joy_ci.width(),
                    RankIndex::Ahi => s.ahi_ci.width(),
                };
                (s.n_faces, w)
            })
            .collect();
        match fit_power(&points) {
            Ok(fit) => CurveSeries {
                index,
                points,
                fit: Some(fit),
                degenerate_reason: None,
            },
            Err(reason) => CurveSeries {
                index,
                points,
                fit: None,
                degenerate_reason: Some(reason),
            },
        }
    };
    Ok(StabilityCurve {
        joy: series(RankIndex::Joy),
        ahi: series(RankIndex::Ahi),
    })
}

/// Case-folded exact-match tag counts for one site, descending count, ties
/// by lexicographic tag, truncated to the top k.
pub fn tag_frequencies(photos: &[PhotoRecord], site_id: &str, k: usize) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for p in photos.iter().filter(|p| p.site_id == site_id) {
        for tag in &p.tags {
            *counts.entry(tag.to_lowercase()).or_insert(0) += 1;
        }
    }
    let mut list: Vec<(String, usize)> = counts.into_iter().collect();
    list.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    list.truncate(k);
    list
}

/// Splits faces into cohorts by the tourist/local rule applied per
/// (user, site) to the photo table.
pub fn split_by_cohort(
    faces: &[FaceRecord],
    photos: &[PhotoRecord],
) -> (Vec<FaceRecord>, Vec<FaceRecord>) {
    let mut by_user_site: BTreeMap<(&str, &str), Vec<&PhotoRecord>> = BTreeMap::new();
    for p in photos {
        by_user_site
            .entry((p.user_id.as_str(), p.site_id.as_str()))
            .or_default()
            .push(p);
    }
    let cohorts: BTreeMap<(&str, &str), Cohort> = by_user_site
        .iter()
        .map(|(k, ps)| {
            let owned: Vec<PhotoRecord> = ps.iter().map(|p| (*p).clone()).collect();
            (*k, classify_user(&owned).expect("group is non-empty"))
        })
        .collect();
    let mut tourists = Vec::new();
    let mut locals = Vec::new();
    for f in faces {
        match cohorts.get(&(f.user_id.as_str(), f.site_id.as_str())) {
            Some(Cohort::Local) => locals.push(f.clone()),
            // faces without photo rows default to tourist, the majority class
            _ => tourists.push(f.clone()),
        }
    }
    (tourists, locals)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortDelta {
    pub site_id: String,
    /// tourist minus local
    pub joy_delta: f64,
    pub ahi_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortComparison {
    pub per_site: Vec<CohortDelta>,
    pub mean_abs_joy_delta: f64,
    pub mean_abs_ahi_delta: f64,
    /// Sites present in only one cohort.
    pub skipped: Vec<String>,
}

/// Per-site index deltas between tourist and local summaries.
pub fn compare_cohorts(
    tourist: &[EmotionSummary],
    local: &[EmotionSummary],
) -> Result<CohortComparison> {
    let by_id: BTreeMap<&str, &EmotionSummary> =
        local.iter().map(|s| (s.site_id.as_str(), s)).collect();
    let mut per_site = Vec::new();
    let mut skipped: Vec<String> = Vec::new();
    let mut matched: BTreeSet<&str> = BTreeSet::new();
    for t in tourist {
        match by_id.get(t.site_id.as_str()) {
            Some(l) => {
                matched.insert(t.site_id.as_str());
                per_site.push(CohortDelta {
                    site_id: t.site_id.clone(),
                    joy_delta: t.joy_index - l.joy_index,
                    ahi_delta: t.ahi - l.ahi,
                });
            }
            None => skipped.push(t.site_id.clone()),
        }
    }
    skipped.extend(
        local
            .iter()
            .filter(|l| !matched.contains(l.site_id.as_str()))
            .map(|l| l.site_id.clone()),
    );
    if per_site.is_empty() {
        return Err(Error::InsufficientData(
            "no site has both tourist and local summaries".into(),
        ));
    }
    let n = per_site.len() as f64;
    Ok(CohortComparison {
        mean_abs_joy_delta: per_site.iter().map(|d| d.joy_delta.abs()).sum::<f64>() / n,
        mean_abs_ahi_delta: per_site.iter().map(|d| d.ahi_delta.abs()).sum::<f64>() / n,
        per_site,
        skipped,
    })
}
