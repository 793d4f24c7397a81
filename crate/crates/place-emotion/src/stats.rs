//! Rank statistics, concordance, bootstrap resampling, correlations and OLS
//! regression with dummy encoding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascending,
    Descending,
}

/// Average-rank assignment; tied values share the mean of the ranks they
/// would occupy. Ranks sum to n(n+1)/2.
pub fn rank_with_ties(values: &[f64], direction: Direction) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    match direction {
        Direction::Ascending => order.sort_by(|&a, &b| values[a].total_cmp(&values[b])),
        Direction::Descending => order.sort_by(|&a, &b| values[b].total_cmp(&values[a])),
    }
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0; // mean of 1-based ranks i+1..=j+1
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// m judges ranking the same n items; `ranks[j][i]` is judge j's rank of item i.
#[derive(Debug, Clone, PartialEq)]
pub struct RankMatrix {
    ranks: Vec<Vec<f64>>,
}

impl RankMatrix {
    pub fn new(ranks: Vec<Vec<f64>>) -> Result<Self> {
        let n = ranks.first().map(|r| r.len()).unwrap_or(0);
        if ranks.iter().any(|r| r.len() != n) {
            return Err(Error::InsufficientData(
                "judges rank different item counts".into(),
            ));
        }
        let expected = n as f64 * (n as f64 + 1.0) / 2.0;
        for (j, row) in ranks.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - expected).abs() > 1e-6 {
                return Err(Error::InsufficientData(format!(
                    "judge {j}: rank sum {sum} != n(n+1)/2 = {expected}"
                )));
            }
        }
        Ok(Self { ranks })
    }

    /// Builds one judge row per value list by ranking each list.
    pub fn from_scores(score_lists: &[Vec<f64>], direction: Direction) -> Result<Self> {
        Self::new(
            score_lists
                .iter()
                .map(|v| rank_with_ties(v, direction))
                .collect(),
        )
    }

    pub fn judges(&self) -> usize {
        self.ranks.len()
    }

    pub fn items(&self) -> usize {
        self.ranks.first().map(|r| r.len()).unwrap_or(0)
    }
}

/// Kendall's coefficient of concordance, W = 12S / (m^2 (n^3 - n)).
pub fn kendalls_w(ranks: &RankMatrix) -> Result<f64> {
    let m = ranks.judges();
    let n = ranks.items();
    if m < 2 || n < 2 {
        return Err(Error::InsufficientData(format!(
            "kendalls_w needs m >= 2 judges and n >= 2 items, got m={m}, n={n}"
        )));
    }
    let totals: Vec<f64> = (0..n)
        .map(|i| ranks.ranks.iter().map(|row| row[i]).sum())
        .collect();
    let mean = totals.iter().sum::<f64>() / n as f64;
    let s: f64 = totals.iter().map(|r| (r - mean).powi(2)).sum();
    let denom = (m * m) as f64 * (n.pow(3) - n) as f64;
    Ok(12.0 * s / denom)
}

/// Bootstrap settings: resample count N, confidence level, RNG seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl BootstrapConfig {
    pub fn new(n_resamples: usize, confidence: f64, seed: u64) -> Result<Self> {
        if n_resamples < 100 {
            return Err(Error::InvalidConfig(format!(
                "n_resamples {n_resamples} must be >= 100"
            )));
        }
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "confidence {confidence} must be in (0, 1)"
            )));
        }
        Ok(Self {
            n_resamples,
            confidence,
            seed,
        })
    }

    /// Derived seed so that distinct uses of one study seed stay independent.
    pub fn with_offset(&self, offset: u64) -> Self {
        Self {
            seed: self.seed.wrapping_add(offset).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            ..*self
        }
    }
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n_resamples: 1000,
            confidence: 0.95,
            seed: 0,
        }
    }
}

/// A percentile interval around a point estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub point: f64,
    pub low: f64,
    pub high: f64,
}

impl BootstrapInterval {
    pub fn width(&self) -> f64 {
        self.high - self.low
    }
}

/// Linear-interpolation quantile of a sorted slice, q in [0, 1].
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap: N resamples with replacement, statistic per
/// resample, interval at the (1-c)/2 and 1-(1-c)/2 quantiles. Each resample
/// draws from its own RNG stream so the result is seed-deterministic even
/// when resamples run in parallel.
pub fn bootstrap_ci<F>(sample: &[f64], statistic: F, cfg: &BootstrapConfig) -> Result<BootstrapInterval>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if sample.is_empty() {
        return Err(Error::NoData);
    }
    let n = sample.len();
    let mut stats: Vec<f64> = (0..cfg.n_resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64 + 1);
            let resample: Vec<f64> = (0..n).map(|_| sample[rng.random_range(0..n)]).collect();
            statistic(&resample)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - cfg.confidence) / 2.0;
    Ok(BootstrapInterval {
        point: statistic(sample),
        low: quantile_sorted(&stats, alpha),
        high: quantile_sorted(&stats, 1.0 - alpha),
    })
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InsufficientData(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData("need at least 2 observations".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "constant series has zero variance".into(),
        ));
    }
    Ok((cov / (vx.sqrt() * vy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson on average ranks of each series.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    let rx = rank_with_ties(x, Direction::Ascending);
    let ry = rank_with_ties(y, Direction::Ascending);
    pearson(&rx, &ry)
}

// ---------------------------------------------------------------------------
// Factors and dummy encoding
// ---------------------------------------------------------------------------

macro_rules! vocab_enum {
    ($name:ident, $factor:expr, { $($variant:ident => $text:expr),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub const FACTOR: &'static str = $factor;

            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub fn parse(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant)),+ ,
                    other => Err(Error::SchemaError(format!(
                        "unknown {} value {:?}; expected one of: {}",
                        $factor, other,
                        Self::ALL.iter().map(|v| v.as_str()).collect::<Vec<_>>().join(", ")
                    ))),
                }
            }
        }
    };
}

vocab_enum!(Continent, "continent", {
    Africa => "africa",
    Asia => "asia",
    Europe => "europe",
    NorthAmerica => "north_america",
    SouthAmerica => "south_america",
    Oceania => "oceania",
});

vocab_enum!(Space, "space", {
    Open => "open",
    Closed => "closed",
});

vocab_enum!(Setting, "setting", {
    Urban => "urban",
    Rural => "rural",
});

vocab_enum!(SiteType, "type", {
    Natural => "natural",
    Amusement => "amusement",
    Religious => "religious",
    Museum => "museum",
    Palace => "palace",
    Cultural => "cultural",
});

vocab_enum!(WaterPresence, "water", {
    Present => "present",
    Absent => "absent",
});

/// Environmental and geographic attributes of one site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorRow {
    pub site_id: String,
    pub continent: Continent,
    pub space: Space,
    pub setting: Setting,
    pub site_type: SiteType,
    pub water: WaterPresence,
    pub water_distance_m: f64,
    pub ndvi: f64,
}

pub const CATEGORICAL_FACTORS: &[&str] = &["continent", "space", "setting", "type", "water"];
pub const NUMERIC_FACTORS: &[&str] = &["water_distance_m", "ndvi"];

fn levels_of(factor: &str) -> Vec<&'static str> {
    match factor {
        "continent" => Continent::ALL.iter().map(|v| v.as_str()).collect(),
        "space" => Space::ALL.iter().map(|v| v.as_str()).collect(),
        "setting" => Setting::ALL.iter().map(|v| v.as_str()).collect(),
        "type" => SiteType::ALL.iter().map(|v| v.as_str()).collect(),
        "water" => WaterPresence::ALL.iter().map(|v| v.as_str()).collect(),
        _ => Vec::new(),
    }
}

fn level_of(row: &FactorRow, factor: &str) -> &'static str {
    match factor {
        "continent" => row.continent.as_str(),
        "space" => row.space.as_str(),
        "setting" => row.setting.as_str(),
        "type" => row.site_type.as_str(),
        "water" => row.water.as_str(),
        _ => unreachable!("unknown categorical factor {factor}"),
    }
}

/// Reference levels, one per categorical factor.
pub type References = std::collections::BTreeMap<String, String>;

/// Table-style references: Africa, closed space, rural, amusement park,
/// absence of water body.
pub fn default_references() -> References {
    [
        ("continent", "africa"),
        ("space", "closed"),
        ("setting", "rural"),
        ("type", "amusement"),
        ("water", "absent"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

/// A dense row-major design matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub columns: Vec<String>,
    /// Reference level per categorical factor, recorded for reporting.
    pub references: References,
    pub rows: Vec<Vec<f64>>,
}

/// Encodes categorical factors as 0/1 columns with one reference level per
/// factor omitted; numeric factors pass through; intercept prepended.
pub fn dummy_encode(rows: &[FactorRow], references: &References) -> Result<DesignMatrix> {
    for factor in CATEGORICAL_FACTORS {
        let level = references.get(*factor).ok_or_else(|| {
            Error::SchemaError(format!("no reference level given for factor {factor}"))
        })?;
        if !levels_of(factor).contains(&level.as_str()) {
            return Err(Error::SchemaError(format!(
                "reference level {level:?} not in vocabulary of factor {factor}"
            )));
        }
    }

    let mut columns = vec!["intercept".to_string()];
    let mut dummy_cols: Vec<(&str, &str)> = Vec::new();
    for factor in CATEGORICAL_FACTORS {
        let reference = references[*factor].as_str();
        for level in levels_of(factor) {
            if level != reference {
                dummy_cols.push((factor, level));
                columns.push(format!("{factor}={level}"));
            }
        }
    }
    columns.extend(NUMERIC_FACTORS.iter().map(|s| s.to_string()));

    let data = rows
        .iter()
        .map(|row| {
            let mut r = Vec::with_capacity(columns.len());
            r.push(1.0);
            for &(factor, level) in &dummy_cols {
                r.push(if level_of(row, factor) == level { 1.0 } else { 0.0 });
            }
            r.push(row.water_distance_m);
            r.push(row.ndvi);
            r
        })
        .collect();

    Ok(DesignMatrix {
        columns,
        references: references.clone(),
        rows: data,
    })
}

/// Least-squares fit of a design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    /// (column name, coefficient), intercept included.
    pub coefficients: Vec<(String, f64)>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub r_squared: f64,
    pub design_columns: Vec<String>,
    /// Reference level per categorical factor, when the design came from
    /// [`dummy_encode`].
    pub reference_levels: Vec<(String, String)>,
    /// Standard errors and two-sided t-test p-values; absent when the fit is
    /// saturated (no residual degrees of freedom).
    pub std_errors: Option<Vec<f64>>,
    pub p_values: Option<Vec<f64>>,
}

impl RegressionResult {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.coefficients
            .iter()
            .find(|(c, _)| c == name)
            .map(|(_, v)| *v)
    }
}

/// OLS via modified Gram-Schmidt QR. The columns are orthogonalized, the
/// triangular system is back-substituted, and near-zero diagonal entries
/// report the collinear columns.
pub fn ols_fit(design: &DesignMatrix, response: &[f64]) -> Result<RegressionResult> {
    let n = design.rows.len();
    let k = design.columns.len();
    if response.len() != n {
        return Err(Error::InsufficientData(format!(
            "design has {n} rows but response has {}",
            response.len()
        )));
    }
    if n < k {
        return Err(Error::InsufficientData(format!(
            "{n} rows for {k} columns; need rows >= columns"
        )));
    }

    // Column-major copy of the design, orthogonalized in place.
    let mut q: Vec<Vec<f64>> = (0..k).map(|j| design.rows.iter().map(|r| r[j]).collect()).collect();
    let mut r = vec![vec![0.0; k]; k];
    let col_norms: Vec<f64> = q.iter().map(|c| norm(c)).collect();
    let mut singular = Vec::new();
    for j in 0..k {
        for i in 0..j {
            let dot = dot(&q[i], &q[j]);
            r[i][j] = dot;
            let qi = q[i].clone();
            for (v, w) in q[j].iter_mut().zip(&qi) {
                *v -= dot * w;
            }
        }
        let nj = norm(&q[j]);
        if nj <= 1e-10 * col_norms[j].max(1.0) {
            singular.push(design.columns[j].clone());
            continue;
        }
        r[j][j] = nj;
        for v in q[j].iter_mut() {
            *v /= nj;
        }
    }
    if !singular.is_empty() {
        return Err(Error::SingularDesign { columns: singular });
    }

    // beta solves R beta = Q^T y.
    let qty: Vec<f64> = (0..k).map(|j| dot(&q[j], response)).collect();
    let mut beta = vec![0.0; k];
    for j in (0..k).rev() {
        let mut v = qty[j];
        for i in j + 1..k {
            v -= r[j][i] * beta[i];
        }
        beta[j] = v / r[j][j];
    }

    let fitted: Vec<f64> = design
        .rows
        .iter()
        .map(|row| row.iter().zip(&beta).map(|(a, b)| a * b).sum())
        .collect();
    let residuals: Vec<f64> = response.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    let ssr: f64 = residuals.iter().map(|e| e * e).sum();
    let ybar = response.iter().sum::<f64>() / n as f64;
    let sst: f64 = response.iter().map(|y| (y - ybar).powi(2)).sum();
    let r_squared = if sst > 0.0 {
        (1.0 - ssr / sst).clamp(0.0, 1.0)
    } else {
        0.0
    };

    let (std_errors, p_values) = if n > k {
        let sigma2 = ssr / (n - k) as f64;
        // (X'X)^-1 = R^-1 R^-T; invert R by back substitution.
        let mut rinv = vec![vec![0.0; k]; k];
        for j in (0..k).rev() {
            rinv[j][j] = 1.0 / r[j][j];
            for i in (0..j).rev() {
                let s: f64 = (i + 1..=j).map(|l| r[i][l] * rinv[l][j]).sum();
                rinv[i][j] = -s / r[i][i];
            }
        }
        let se: Vec<f64> = (0..k)
            .map(|i| {
                let var: f64 = (i..k).map(|j| rinv[i][j] * rinv[i][j]).sum();
                (sigma2 * var).sqrt()
            })
            .collect();
        let dist = StudentsT::new(0.0, 1.0, (n - k) as f64)
            .map_err(|e| Error::InsufficientData(e.to_string()))?;
        let p: Vec<f64> = beta
            .iter()
            .zip(&se)
            .map(|(&b, &s)| {
                if s == 0.0 {
                    if b == 0.0 { 1.0 } else { 0.0 }
                } else {
                    2.0 * (1.0 - dist.cdf((b / s).abs()))
                }
            })
            .collect();
        (Some(se), Some(p))
    } else {
        (None, None)
    };

    Ok(RegressionResult {
        coefficients: design.columns.iter().cloned().zip(beta).collect(),
        fitted,
        residuals,
        r_squared,
        design_columns: design.columns.clone(),
        reference_levels: design
            .references
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect(),
        std_errors,
        p_values,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Per-factor Pearson coefficients of each numeric factor and each
/// categorical level indicator against an emotion series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenReport {
    pub entries: Vec<(String, f64)>,
    /// (name, reason) for factors whose correlation is undefined, e.g. a
    /// level absent from or universal across the sites.
    pub skipped: Vec<(String, String)>,
}

pub fn correlation_screen(factors: &[FactorRow], emotion: &[f64]) -> Result<ScreenReport> {
    if factors.len() != emotion.len() {
        return Err(Error::InsufficientData(format!(
            "{} factor rows but {} emotion values",
            factors.len(),
            emotion.len()
        )));
    }
    let mut report = ScreenReport {
        entries: Vec::new(),
        skipped: Vec::new(),
    };
    let push = |name: String, series: Vec<f64>, report: &mut ScreenReport| {
        match pearson(&series, emotion) {
            Ok(c) => report.entries.push((name, c)),
            Err(Error::UndefinedCorrelation(reason)) | Err(Error::InsufficientData(reason)) => {
                report.skipped.push((name, reason))
            }
            Err(_) => unreachable!("pearson returns only correlation errors"),
        }
    };
    for factor in CATEGORICAL_FACTORS {
        for level in levels_of(factor) {
            let indicator: Vec<f64> = factors
                .iter()
                .map(|r| if level_of(r, factor) == level { 1.0 } else { 0.0 })
                .collect();
            push(format!("{factor}={level}"), indicator, &mut report);
        }
    }
    let numeric = |f: fn(&FactorRow) -> f64| factors.iter().map(f).collect::<Vec<f64>>();
    push(
        "water_distance_m".into(),
        numeric(|r| r.water_distance_m),
        &mut report,
    );
    push("ndvi".into(), numeric(|r| r.ndvi), &mut report);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_descending_basic() {
        assert_eq!(rank_with_ties(&[3.0, 1.0, 2.0], Direction::Descending), vec![1.0, 3.0, 2.0]);
    }

    #[test]
    fn rank_ties_get_average() {
        assert_eq!(
            rank_with_ties(&[5.0, 5.0, 1.0], Direction::Descending),
            vec![1.5, 1.5, 3.0]
        );
    }

    #[test]
    fn rank_singleton() {
        assert_eq!(rank_with_ties(&[7.0], Direction::Ascending), vec![1.0]);
    }

    #[test]
    fn rank_sums_to_triangular_number() {
        let v = [3.0, 3.0, 1.0, 9.0, 2.0, 3.0, 9.0];
        let r = rank_with_ties(&v, Direction::Ascending);
        let n = v.len() as f64;
        assert!((r.iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn kendalls_w_identical_judges() {
        let row = vec![1.0, 2.0, 3.0, 4.0];
        let m = RankMatrix::new(vec![row.clone(), row.clone(), row]).unwrap();
        assert_eq!(kendalls_w(&m).unwrap(), 1.0);
    }

    #[test]
    fn kendalls_w_opposed_judges() {
        let m = RankMatrix::new(vec![vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]]).unwrap();
        assert_eq!(kendalls_w(&m).unwrap(), 0.0);
    }

    #[test]
    fn kendalls_w_hand_example() {
        // Judges (1,2,3), (1,2,3), (2,1,3): totals (4,5,9), mean 6,
        // S = 4+1+9 = 14, W = 12*14 / (9*24) = 14/18.
        let m = RankMatrix::new(vec![
            vec![1.0, 2.0, 3.0],
            vec![1.0, 2.0, 3.0],
            vec![2.0, 1.0, 3.0],
        ])
        .unwrap();
        assert!((kendalls_w(&m).unwrap() - 14.0 * 12.0 / 216.0).abs() < 1e-9);
    }

    #[test]
    fn kendalls_w_insufficient() {
        let one_judge = RankMatrix::new(vec![vec![1.0, 2.0]]).unwrap();
        assert!(kendalls_w(&one_judge).is_err());
        let one_item = RankMatrix::new(vec![vec![1.0], vec![1.0]]).unwrap();
        assert!(kendalls_w(&one_item).is_err());
    }

    #[test]
    fn rank_matrix_rejects_bad_row() {
        assert!(RankMatrix::new(vec![vec![1.0, 1.0, 1.0]]).is_err());
    }

    #[test]
    fn bootstrap_constant_sample_zero_width() {
        let sample = vec![50.0; 100];
        let cfg = BootstrapConfig::default();
        let ci = bootstrap_ci(&sample, |s| s.iter().sum::<f64>() / s.len() as f64, &cfg).unwrap();
        assert_eq!(ci.low, 50.0);
        assert_eq!(ci.high, 50.0);
        assert_eq!(ci.point, 50.0);
    }

    #[test]
    fn bootstrap_deterministic_per_seed() {
        let sample: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64).collect();
        let cfg = BootstrapConfig::new(500, 0.95, 42).unwrap();
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let a = bootstrap_ci(&sample, mean, &cfg).unwrap();
        let b = bootstrap_ci(&sample, mean, &cfg).unwrap();
        assert_eq!(a, b);
        let c = bootstrap_ci(&sample, mean, &BootstrapConfig::new(500, 0.95, 43).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bootstrap_wider_confidence_never_narrows() {
        let sample: Vec<f64> = (0..150).map(|i| ((i * 13) % 97) as f64).collect();
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let narrow = bootstrap_ci(&sample, mean, &BootstrapConfig::new(1000, 0.90, 5).unwrap()).unwrap();
        let wide = bootstrap_ci(&sample, mean, &BootstrapConfig::new(1000, 0.99, 5).unwrap()).unwrap();
        assert!(wide.width() >= narrow.width());
        assert!(wide.low <= narrow.low && wide.high >= narrow.high);
    }

    #[test]
    fn bootstrap_rejects_empty_and_bad_config() {
        assert!(bootstrap_ci(&[], |_| 0.0, &BootstrapConfig::default()).is_err());
        assert!(BootstrapConfig::new(50, 0.95, 0).is_err());
        assert!(BootstrapConfig::new(1000, 1.0, 0).is_err());
    }

    #[test]
    fn pearson_exact_cases() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 7.0).collect();
        assert!((pearson(&x, &y).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_hand_value() {
        // Direct evaluation: cov = 1.5, sx = 1, sy = sqrt(7/3).
        let got = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        let expected = 1.5 / (1.0 * (7.0f64 / 3.0).sqrt());
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.98198).abs() < 1e-5);
    }

    #[test]
    fn pearson_constant_is_undefined() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn spearman_monotone_transform() {
        let x: [f64; 4] = [0.1, 0.9, 2.3, 3.1];
        let y: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let rev: Vec<f64> = y.iter().rev().copied().collect();
        assert!((spearman(&x, &rev).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_hand_value() {
        let got = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((got - 0.8).abs() < 1e-12);
    }

    fn row(site: &str, continent: Continent, ty: SiteType) -> FactorRow {
        FactorRow {
            site_id: site.into(),
            continent,
            space: Space::Open,
            setting: Setting::Urban,
            site_type: ty,
            water: WaterPresence::Present,
            water_distance_m: 0.0,
            ndvi: 0.5,
        }
    }

    #[test]
    fn dummy_encode_column_counts() {
        let rows = vec![
            row("a", Continent::Asia, SiteType::Amusement),
            row("b", Continent::Europe, SiteType::Museum),
            row("c", Continent::Africa, SiteType::Natural),
        ];
        let d = dummy_encode(&rows, &default_references()).unwrap();
        // intercept + 5 continent + 1 space + 1 setting + 5 type + 1 water + 2 numeric
        assert_eq!(d.columns.len(), 16);
        assert!(d.columns.contains(&"continent=asia".to_string()));
        assert!(!d.columns.contains(&"continent=africa".to_string()));
        // reference row encodes all-zero continent dummies
        let africa = &d.rows[2];
        for (j, col) in d.columns.iter().enumerate() {
            if col.starts_with("continent=") {
                assert_eq!(africa[j], 0.0);
            }
        }
    }

    #[test]
    fn dummy_encode_rejects_unknown_reference() {
        let rows = vec![row("a", Continent::Asia, SiteType::Amusement)];
        let mut refs = default_references();
        refs.insert("type".into(), "theme-park".into());
        assert!(matches!(dummy_encode(&rows, &refs), Err(Error::SchemaError(_))));
    }

    #[test]
    fn ols_recovers_noiseless_model() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..30 {
            let x1 = i as f64 * 0.3;
            let x2 = (i as f64 * 0.7).sin() * 5.0;
            rows.push(vec![1.0, x1, x2]);
            y.push(2.0 + 3.0 * x1 - x2);
        }
        let d = DesignMatrix {
            columns: vec!["intercept".into(), "x1".into(), "x2".into()],
            references: References::new(),
            rows,
        };
        let fit = ols_fit(&d, &y).unwrap();
        assert!((fit.coefficient("intercept").unwrap() - 2.0).abs() < 1e-8);
        assert!((fit.coefficient("x1").unwrap() - 3.0).abs() < 1e-8);
        assert!((fit.coefficient("x2").unwrap() + 1.0).abs() < 1e-8);
        assert!((fit.r_squared - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ols_constant_response_zero_r2() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, i as f64]).collect();
        let d = DesignMatrix {
            columns: vec!["intercept".into(), "x".into()],
            references: References::new(),
            rows,
        };
        let fit = ols_fit(&d, &[4.0; 10]).unwrap();
        assert!(fit.coefficient("x").unwrap().abs() < 1e-10);
        assert_eq!(fit.r_squared, 0.0);
    }

    #[test]
    fn ols_rejects_collinear_design() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, i as f64, 2.0 * i as f64]).collect();
        let d = DesignMatrix {
            columns: vec!["intercept".into(), "x".into(), "x_twice".into()],
            references: References::new(),
            rows,
        };
        match ols_fit(&d, &[1.0; 10]) {
            Err(Error::SingularDesign { columns }) => assert!(columns.contains(&"x_twice".to_string())),
            other => panic!("expected SingularDesign, got {other:?}"),
        }
    }

    #[test]
    fn ols_residuals_orthogonal_to_design() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = i as f64;
                vec![1.0, t, (t * 0.31).sin(), (t * 0.17).cos()]
            })
            .collect();
        let y: Vec<f64> = (0..40).map(|i| ((i * 17) % 23) as f64).collect();
        let d = DesignMatrix {
            columns: (0..4).map(|j| format!("c{j}")).collect(),
            references: References::new(),
            rows: rows.clone(),
        };
        let fit = ols_fit(&d, &y).unwrap();
        for j in 0..4 {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let scale: f64 = col.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            assert!(dot(&col, &fit.residuals).abs() <= 1e-8 * scale);
        }
        for ((f, r), v) in fit.fitted.iter().zip(&fit.residuals).zip(&y) {
            assert!((f + r - v).abs() < 1e-9);
        }
    }

    #[test]
    fn screen_reports_universal_indicator_as_skipped() {
        let rows = vec![
            row("a", Continent::Asia, SiteType::Amusement),
            row("b", Continent::Europe, SiteType::Museum),
        ];
        let report = correlation_screen(&rows, &[1.0, 2.0]).unwrap();
        // water=present holds at both sites, so its indicator is constant.
        assert!(report.skipped.iter().any(|(n, _)| n == "water=present"));
        assert!(report.entries.iter().any(|(n, _)| n == "continent=asia"));
    }

    #[test]
    fn screen_constant_emotion_all_skipped() {
        let rows = vec![
            row("a", Continent::Asia, SiteType::Amusement),
            row("b", Continent::Europe, SiteType::Museum),
        ];
        let report = correlation_screen(&rows, &[3.0, 3.0]).unwrap();
        assert!(report.entries.is_empty());
        assert!(!report.skipped.is_empty());
    }

    #[test]
    fn vocab_parse_round_trip_and_rejection() {
        assert_eq!(SiteType::parse("amusement").unwrap(), SiteType::Amusement);
        assert!(SiteType::parse("theme-park").is_err());
        for v in Continent::ALL {
            assert_eq!(Continent::parse(v.as_str()).unwrap(), *v);
        }
    }
}
