//! Face-level smile classification and place-level emotion indices.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::stats::{bootstrap_ci, BootstrapConfig, BootstrapInterval};

/// Seven emotion scores per face, each in [0, 100], summing to 100 up to
/// upstream rounding (tolerance 0.5).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmotionStructure {
    pub anger: f64,
    pub disgust: f64,
    pub fear: f64,
    pub happiness: f64,
    pub neutral: f64,
    pub sadness: f64,
    pub surprise: f64,
}

impl EmotionStructure {
    pub fn fields(&self) -> [f64; 7] {
        [
            self.anger,
            self.disgust,
            self.fear,
            self.happiness,
            self.neutral,
            self.sadness,
            self.surprise,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in ["anger", "disgust", "fear", "happiness", "neutral", "sadness", "surprise"]
            .iter()
            .zip(self.fields())
        {
            if !v.is_finite() || !(0.0..=100.0).contains(&v) {
                return Err(Error::SchemaError(format!("{name} score {v} out of [0, 100]")));
            }
        }
        let sum: f64 = self.fields().iter().sum();
        if (sum - 100.0).abs() > 0.5 {
            return Err(Error::SchemaError(format!(
                "emotion scores sum to {sum}, expected 100 +- 0.5"
            )));
        }
        Ok(())
    }
}

/// One detected face with its smile pair and emotion scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceRecord {
    pub photo_id: String,
    pub face_id: String,
    pub user_id: String,
    pub site_id: String,
    pub location: GeoPoint,
    pub timestamp: DateTime<Utc>,
    pub smile_value: f64,
    pub smile_threshold: f64,
    pub emotion: EmotionStructure,
}

impl FaceRecord {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("smile_value", self.smile_value), ("smile_threshold", self.smile_threshold)] {
            if !v.is_finite() || !(0.0..=100.0).contains(&v) {
                return Err(Error::SchemaError(format!("{name} {v} out of [0, 100]")));
            }
        }
        self.emotion.validate()
    }
}

/// A face is smiling iff its smile value is strictly larger than its
/// threshold.
pub fn classify_smile(face: &FaceRecord) -> bool {
    face.smile_value > face.smile_threshold
}

/// (C_s - C_ns) / (C_s + C_ns) over the smile classification.
pub fn joy_index(faces: &[FaceRecord]) -> Result<f64> {
    if faces.is_empty() {
        return Err(Error::NoFaces {
            site_id: String::new(),
        });
    }
    let smiling = faces.iter().filter(|f| classify_smile(f)).count() as f64;
    let total = faces.len() as f64;
    Ok((smiling - (total - smiling)) / total)
}

/// Arithmetic mean of the happiness field over faces.
pub fn average_happiness(faces: &[FaceRecord]) -> Result<f64> {
    if faces.is_empty() {
        return Err(Error::NoFaces {
            site_id: String::new(),
        });
    }
    Ok(faces.iter().map(|f| f.emotion.happiness).sum::<f64>() / faces.len() as f64)
}

/// Per-place Joy Index and AHI with bootstrap confidence intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionSummary {
    pub site_id: String,
    pub joy_index: f64,
    pub ahi: f64,
    pub n_faces: usize,
    pub n_smiling: usize,
    pub n_nonsmiling: usize,
    pub joy_ci: BootstrapInterval,
    pub ahi_ci: BootstrapInterval,
}

/// Point estimates plus percentile bootstrap intervals for both indices.
/// The joy bootstrap resamples the per-face smile indicator (+1/-1) and the
/// AHI bootstrap resamples per-face happiness; both use substreams of the
/// study seed so repeated runs are bit-for-bit identical.
pub fn summarize_place(
    site_id: &str,
    faces: &[FaceRecord],
    ci: &BootstrapConfig,
) -> Result<EmotionSummary> {
    if faces.is_empty() {
        return Err(Error::NoFaces {
            site_id: site_id.to_string(),
        });
    }
    let n_smiling = faces.iter().filter(|f| classify_smile(f)).count();
    let n_faces = faces.len();

    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let smile_signs: Vec<f64> = faces
        .iter()
        .map(|f| if classify_smile(f) { 1.0 } else { -1.0 })
        .collect();
    let happiness: Vec<f64> = faces.iter().map(|f| f.emotion.happiness).collect();

    let joy_ci = bootstrap_ci(&smile_signs, mean, &ci.with_offset(1))?;
    let ahi_ci = bootstrap_ci(&happiness, mean, &ci.with_offset(2))?;

    Ok(EmotionSummary {
        site_id: site_id.to_string(),
        joy_index: joy_ci.point,
        ahi: ahi_ci.point,
        n_faces,
        n_smiling,
        n_nonsmiling: n_faces - n_smiling,
        joy_ci,
        ahi_ci,
    })
}
