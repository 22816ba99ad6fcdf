//! Desk-scale synthetic geo-world used to exercise the training curriculum.
//!
//! Geography is a grid of countries, each with a few cities ("cells"). Every image sits
//! near one city and carries a feature vector made of a noisy one-hot cell code, a
//! squashed reasoning-gap signal and a bias term. The gap signal is generated with a
//! margin on both sides of the RAG-superior boundary, so the depth label is linearly
//! separable from the features.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesy::GeoCoord;
use crate::locatability::{stratum_label, DistancePair, Stratum};
use crate::names::{EntitySet, NameMatcher};
use crate::policy::Action;
use crate::rewards::{GeoLocation, GroundingTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub images: usize,
    /// Images at the end of the catalog kept out of training.
    pub holdout: usize,
    pub countries: usize,
    pub cities_per_country: usize,
    /// Fraction of images generated on the RAG-superior side.
    pub rag_superior_fraction: f64,
    /// Half-width of the uniform noise on every non-bias feature.
    pub feature_noise: f64,
    /// Maximum offset of an image from its city center, km.
    pub max_jitter_km: f64,
    pub tau_margin: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            images: 200,
            holdout: 40,
            countries: 4,
            cities_per_country: 2,
            rag_superior_fraction: 0.3,
            feature_noise: 0.1,
            max_jitter_km: 30.0,
            tau_margin: 50.0,
            seed: 2025,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cell {
    pub location: GeoLocation,
    /// Cues a detector can see directly (landmarks, signage).
    pub explicit_cues: Vec<String>,
    /// Cues that need inference (architecture, vegetation).
    pub implicit_cues: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldImage {
    pub id: String,
    pub features: Vec<f64>,
    pub cell: usize,
    pub location: GeoLocation,
    pub distances: DistancePair,
    pub stratum: Stratum,
    pub reference_entities: EntitySet,
}

#[derive(Debug, Clone)]
pub struct SyntheticGeoWorld {
    pub config: WorldConfig,
    pub cells: Vec<Cell>,
    pub images: Vec<WorldImage>,
    pub grounding: GroundingTable,
    pub names: NameMatcher,
}

/// Offset a coordinate by (north, east) kilometers using a local flat approximation.
fn offset(center: GeoCoord, north_km: f64, east_km: f64) -> Result<GeoCoord> {
    let dlat = north_km / crate::EARTH_RADIUS_KM.to_radians();
    let dlon = east_km / (crate::EARTH_RADIUS_KM.to_radians() * center.lat().to_radians().cos());
    GeoCoord::new(center.lat() + dlat, center.lon() + dlon)
}

impl SyntheticGeoWorld {
    pub fn generate(config: WorldConfig) -> Result<Self> {
        if config.images == 0 || config.holdout >= config.images {
            return Err(Error::param(
                "world.holdout",
                "must be smaller than the number of images",
            ));
        }
        if config.countries == 0 || config.cities_per_country == 0 {
            return Err(Error::param("world.countries", "need at least one country and city"));
        }
        if !(0.0..=1.0).contains(&config.rag_superior_fraction) {
            return Err(Error::param("world.rag_superior_fraction", "must lie in [0, 1]"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

        let mut cells = Vec::new();
        for c in 0..config.countries {
            // countries spread along a band well over 1000 km apart
            let capital = GeoCoord::new(-30.0 + 15.0 * (c % 5) as f64, -120.0 + 35.0 * c as f64)?;
            for t in 0..config.cities_per_country {
                let k = cells.len();
                let center = offset(capital, 120.0 * (t % 2) as f64, 300.0 * t as f64)?;
                cells.push(Cell {
                    location: GeoLocation::new(format!("Country {c}"), format!("City {k}"), center)?,
                    explicit_cues: vec![format!("landmark {k}"), format!("signage {k}")],
                    implicit_cues: vec![format!("architecture {k}"), format!("vegetation {k}")],
                });
            }
        }

        let n_cells = cells.len();
        let n_features = n_cells + 2;
        let mut grounding = GroundingTable::new();
        let mut images = Vec::with_capacity(config.images);
        for i in 0..config.images {
            let id = format!("img-{i:04}");
            let cell = rng.random_range(0..n_cells);
            let rag_superior = rng.random_bool(config.rag_superior_fraction);
            let tau = config.tau_margin;
            let distances = if rag_superior {
                let d_rag = rng.random_range(0.0..200.0);
                DistancePair::new(d_rag, d_rag + tau + rng.random_range(100.0..1000.0))?
            } else {
                let d_rag = rng.random_range(0.0..500.0);
                DistancePair::new(d_rag, (d_rag + tau - rng.random_range(60.0..400.0)).max(0.0))?
            };
            let stratum = stratum_label(distances, tau);

            let north = rng.random_range(-1.0..1.0) * config.max_jitter_km / 2f64.sqrt();
            let east = rng.random_range(-1.0..1.0) * config.max_jitter_km / 2f64.sqrt();
            let c = &cells[cell];
            let location = GeoLocation::new(
                c.location.country.clone(),
                c.location.city.clone(),
                offset(c.location.coord, north, east)?,
            )?;

            let mut features = Vec::with_capacity(n_features);
            for k in 0..n_cells {
                let hot = if k == cell { 1.0 } else { 0.0 };
                features.push(hot + rng.random_range(-1.0..1.0) * config.feature_noise);
            }
            let gap = (distances.d_reason - distances.d_rag - tau) / 200.0;
            features.push(gap.tanh() + rng.random_range(-1.0..1.0) * config.feature_noise);
            features.push(1.0);

            for cue in &c.explicit_cues {
                grounding.insert(&id, cue, rng.random_range(0.85..0.95))?;
            }
            for cue in &c.implicit_cues {
                grounding.insert(&id, cue, rng.random_range(0.1..0.25))?;
            }

            let reference_entities = Self::cues(c, stratum);
            images.push(WorldImage {
                id,
                features,
                cell,
                location,
                distances,
                stratum,
                reference_entities,
            });
        }

        Ok(Self {
            config,
            cells,
            images,
            grounding,
            names: NameMatcher::default(),
        })
    }

    fn cues(cell: &Cell, depth: Stratum) -> EntitySet {
        let mut set: EntitySet = cell.explicit_cues.iter().collect();
        if depth == Stratum::RagSuperior {
            for cue in &cell.implicit_cues {
                set.insert(cue);
            }
        }
        set
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_features(&self) -> usize {
        self.cells.len() + 2
    }

    pub fn train(&self) -> &[WorldImage] {
        &self.images[..self.images.len() - self.config.holdout]
    }

    pub fn holdout(&self) -> &[WorldImage] {
        &self.images[self.images.len() - self.config.holdout..]
    }

    /// Representative location of the predicted cell.
    pub fn predicted_location(&self, action: Action) -> &GeoLocation {
        &self.cells[action.cell].location
    }

    /// Entities the rationale of `action` mentions: the cell's explicit cues, plus its
    /// implicit cues when reasoning deeply.
    pub fn predicted_entities(&self, action: Action) -> EntitySet {
        Self::cues(&self.cells[action.cell], action.depth)
    }
}
