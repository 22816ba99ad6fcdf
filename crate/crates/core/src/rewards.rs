//! Reward terms for adaptive depth, visual grounding and hierarchical geo accuracy,
//! and their per-stage composites.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesy::{haversine_km, GeoCoord};
use crate::locatability::Stratum;
use crate::names::{normalize, EntityExtractor, EntitySet, NameMatcher};
use crate::par::{self, Execution};

/// Hierarchical location: country, city and coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLocation")]
pub struct GeoLocation {
    pub country: String,
    pub city: String,
    pub coord: GeoCoord,
}

#[derive(Deserialize)]
struct RawLocation {
    country: String,
    city: String,
    coord: GeoCoord,
}

impl TryFrom<RawLocation> for GeoLocation {
    type Error = Error;

    fn try_from(raw: RawLocation) -> Result<Self> {
        GeoLocation::new(raw.country, raw.city, raw.coord)
    }
}

impl GeoLocation {
    /// Names must be non-empty after normalization; use `"unknown"` for undetermined fields.
    pub fn new(country: impl Into<String>, city: impl Into<String>, coord: GeoCoord) -> Result<Self> {
        let (country, city) = (country.into(), city.into());
        if normalize(&country).is_empty() {
            return Err(Error::param("country", "empty name (use \"unknown\")"));
        }
        if normalize(&city).is_empty() {
            return Err(Error::param("city", "empty name (use \"unknown\")"));
        }
        Ok(Self { country, city, coord })
    }

    pub fn distance_km(&self, other: &GeoLocation) -> f64 {
        haversine_km(self.coord, other.coord)
    }
}

/// Visual grounding confidence `G(entity, image) ∈ [0, 1]`.
pub trait GroundingProvider: Send + Sync {
    fn confidence(&self, entity: &str, image_id: &str) -> f64;
}

/// Table-backed grounding: pairs absent from the table score 0.
#[derive(Debug, Clone, Default)]
pub struct GroundingTable {
    entries: HashMap<(String, String), f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GroundingEntry {
    pub image_id: String,
    pub entity: String,
    pub confidence: f64,
}

impl GroundingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, image_id: &str, entity: &str, confidence: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::param("confidence", format!("{confidence} outside [0, 1]")));
        }
        let key = (image_id.to_string(), normalize(entity));
        if self.entries.insert(key, confidence).is_some() {
            return Err(Error::DuplicateId(format!("{image_id}/{}", normalize(entity))));
        }
        Ok(())
    }

    /// One entry per line, either `image_id<TAB>entity<TAB>confidence` or a JSON object
    /// with the same three fields. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |reason: String| Error::Parse { line: i + 1, reason };
            let entry = if line.starts_with('{') {
                serde_json::from_str::<GroundingEntry>(line).map_err(|e| parse_err(e.to_string()))?
            } else {
                let fields: Vec<&str> = line.split('\t').collect();
                let [image_id, entity, conf] = fields[..] else {
                    return Err(parse_err(format!(
                        "expected 3 tab-separated fields, got {}",
                        fields.len()
                    )));
                };
                GroundingEntry {
                    image_id: image_id.to_string(),
                    entity: entity.to_string(),
                    confidence: conf.trim().parse().map_err(|e| parse_err(format!("confidence: {e}")))?,
                }
            };
            table
                .insert(&entry.image_id, &entry.entity, entry.confidence)
                .map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl GroundingProvider for GroundingTable {
    fn confidence(&self, entity: &str, image_id: &str) -> f64 {
        self.entries
            .get(&(image_id.to_string(), normalize(entity)))
            .copied()
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    /// Stage-1 weight of the depth reward.
    pub w1: f64,
    /// Stage-1 weight of the visual grounding reward.
    pub w2: f64,
    /// Tier weight for a correct country.
    pub lambda1: f64,
    /// Tier weight of the coordinate term for a correct city.
    pub lambda2: f64,
    /// Distance scale of the coordinate reward, km.
    pub sigma: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            w1: 0.5,
            w2: 0.5,
            lambda1: 0.3,
            lambda2: 0.7,
            sigma: 100.0,
        }
    }
}

impl RewardParams {
    pub fn new(w1: f64, w2: f64, lambda1: f64, lambda2: f64, sigma: f64) -> Result<Self> {
        let p = Self {
            w1,
            w2,
            lambda1,
            lambda2,
            sigma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w1 >= 0.0 && self.w2 >= 0.0) {
            return Err(Error::param("w1/w2", "weights must be non-negative"));
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::param("lambda1/lambda2", "tier weights must be non-negative"));
        }
        if (self.lambda1 + self.lambda2 - 1.0).abs() > 1e-9 {
            return Err(Error::param(
                "lambda1/lambda2",
                format!("must sum to 1, got {}", self.lambda1 + self.lambda2),
            ));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("sigma", "must be positive"));
        }
        Ok(())
    }
}

/// 1 when the predicted depth label matches the stratum label, else 0.
pub fn depth_reward(predicted: Stratum, truth: Stratum) -> f64 {
    if predicted == truth {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisualReward {
    pub r_grounding: f64,
    pub r_alignment: f64,
    pub r_vis: f64,
    /// Set when the prediction named no entities; grounding is then 0 rather than undefined.
    pub no_entities: bool,
}

/// Mean grounding confidence of the predicted entities times their Jaccard overlap with
/// the reference entities.
pub fn visual_reward(
    predicted: &EntitySet,
    reference: &EntitySet,
    image_id: &str,
    provider: &dyn GroundingProvider,
) -> VisualReward {
    let r_alignment = predicted.jaccard(reference);
    if predicted.is_empty() {
        return VisualReward {
            r_grounding: 0.0,
            r_alignment,
            r_vis: 0.0,
            no_entities: true,
        };
    }
    let total: f64 = predicted
        .iter()
        .map(|e| provider.confidence(e, image_id).clamp(0.0, 1.0))
        .sum();
    let r_grounding = total / predicted.len() as f64;
    VisualReward {
        r_grounding,
        r_alignment,
        r_vis: r_grounding * r_alignment,
        no_entities: false,
    }
}

/// `exp(-d / σ)`.
pub fn coord_reward(d_km: f64, sigma: f64) -> f64 {
    (-d_km / sigma).exp()
}

/// Which tier of the hierarchical reward a prediction landed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeoTier {
    WrongCountry,
    CountryOnly,
    CountryAndCity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoReward {
    pub tier: GeoTier,
    pub distance_km: f64,
    pub r_coord: f64,
    pub r_geo: f64,
}

/// Three-tier reward: 0 for a wrong country, `λ1·R_coord` for the right country but wrong
/// city, `λ1 + λ2·R_coord` when both names match. Unknown names never match.
pub fn hierarchical_geo_reward(
    pred: &GeoLocation,
    truth: &GeoLocation,
    p: &RewardParams,
    names: &NameMatcher,
) -> GeoReward {
    let distance_km = pred.distance_km(truth);
    let r_coord = coord_reward(distance_km, p.sigma);
    let (tier, r_geo) = if !names.matches(&pred.country, &truth.country) {
        (GeoTier::WrongCountry, 0.0)
    } else if !names.matches(&pred.city, &truth.city) {
        (GeoTier::CountryOnly, p.lambda1 * r_coord)
    } else {
        (GeoTier::CountryAndCity, p.lambda1 + p.lambda2 * r_coord)
    };
    GeoReward {
        tier,
        distance_km,
        r_coord,
        r_geo,
    }
}

/// Every reward term for one sample. Terms that were not evaluated stay 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_depth: f64,
    pub r_grounding: f64,
    pub r_alignment: f64,
    pub r_vis: f64,
    pub no_entities: bool,
    pub r_coord: f64,
    pub r_geo: f64,
    pub r_stage1: f64,
    pub r_stage2: f64,
}

/// `w1·R_depth + w2·R_vis`.
pub fn stage1_reward(b: &RewardBreakdown, p: &RewardParams) -> f64 {
    p.w1 * b.r_depth + p.w2 * b.r_vis
}

/// Stage 2 optimizes the hierarchical geo reward alone.
pub fn stage2_reward(b: &RewardBreakdown) -> f64 {
    b.r_geo
}

/// Everything needed to score one generated answer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardRequest {
    pub image_id: String,
    pub predicted_stratum: Stratum,
    pub true_stratum: Stratum,
    #[serde(default)]
    pub predicted_entities: Option<EntitySet>,
    #[serde(default)]
    pub predicted_rationale: Option<String>,
    #[serde(default)]
    pub reference_entities: Option<EntitySet>,
    #[serde(default)]
    pub reference_rationale: Option<String>,
    pub predicted: GeoLocation,
    pub truth: GeoLocation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardResponse {
    pub image_id: String,
    #[serde(flatten)]
    pub breakdown: RewardBreakdown,
}

/// Shared context for scoring many requests.
pub struct RewardModel<'a> {
    pub params: RewardParams,
    pub names: &'a NameMatcher,
    pub grounding: &'a dyn GroundingProvider,
    pub extractor: &'a dyn EntityExtractor,
}

impl RewardModel<'_> {
    fn entities(&self, explicit: &Option<EntitySet>, text: &Option<String>) -> EntitySet {
        match (explicit, text) {
            (Some(set), _) => set.clone(),
            (None, Some(text)) => self.extractor.extract(text),
            (None, None) => EntitySet::new(),
        }
    }

    pub fn evaluate(&self, req: &RewardRequest) -> RewardBreakdown {
        let predicted = self.entities(&req.predicted_entities, &req.predicted_rationale);
        let reference = self.entities(&req.reference_entities, &req.reference_rationale);
        let vis = visual_reward(&predicted, &reference, &req.image_id, self.grounding);
        let geo = hierarchical_geo_reward(&req.predicted, &req.truth, &self.params, self.names);
        let mut b = RewardBreakdown {
            r_depth: depth_reward(req.predicted_stratum, req.true_stratum),
            r_grounding: vis.r_grounding,
            r_alignment: vis.r_alignment,
            r_vis: vis.r_vis,
            no_entities: vis.no_entities,
            r_coord: geo.r_coord,
            r_geo: geo.r_geo,
            ..Default::default()
        };
        b.r_stage1 = stage1_reward(&b, &self.params);
        b.r_stage2 = stage2_reward(&b);
        b
    }

    pub fn evaluate_batch(&self, reqs: &[RewardRequest], exec: Execution) -> Vec<RewardResponse> {
        par::map(exec, reqs, |r| RewardResponse {
            image_id: r.image_id.clone(),
            breakdown: self.evaluate(r),
        })
    }
}
