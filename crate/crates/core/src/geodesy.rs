//! Spherical-earth coordinates and great-circle distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean earth radius in kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Latitude/longitude in decimal degrees.
///
/// Latitude must lie in `[-90, 90]`. Longitude is wrapped into `[-180, 180)`, so
/// `180` and `-180` construct the same value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCoord")]
pub struct GeoCoord {
    lat: f64,
    lon: f64,
}

#[derive(Deserialize)]
struct RawCoord {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawCoord> for GeoCoord {
    type Error = Error;

    fn try_from(raw: RawCoord) -> Result<Self> {
        GeoCoord::new(raw.lat, raw.lon)
    }
}

impl GeoCoord {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::InvalidCoord(format!("latitude {lat} outside [-90, 90]")));
        }
        if !lon.is_finite() {
            return Err(Error::InvalidCoord(format!("longitude {lon} is not finite")));
        }
        Ok(Self {
            lat,
            lon: normalize_lon(lon),
        })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

fn normalize_lon(lon: f64) -> f64 {
    if (-180.0..180.0).contains(&lon) {
        return lon;
    }
    let wrapped = (lon + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if wrapped >= 180.0 {
        wrapped - 360.0
    } else {
        wrapped
    }
}

/// Great-circle distance in kilometers on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn haversine_km(a: GeoCoord, b: GeoCoord) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.clamp(0.0, 1.0).sqrt().asin()
}

/// Inclusive threshold test: a distance exactly on the threshold counts as within.
pub fn within_threshold(d_km: f64, threshold_km: f64) -> bool {
    d_km <= threshold_km
}
