//! Distance-threshold and name accuracies for geo-localization predictions.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesy::within_threshold;
use crate::names::NameMatcher;
use crate::par::{self, Execution};
use crate::rewards::GeoLocation;

/// Street, city, region, country and continent scales, km.
pub const THRESHOLDS_KM: [f64; 5] = [1.0, 25.0, 200.0, 750.0, 2500.0];

pub const THRESHOLD_LABELS: [&str; 5] = ["Street", "City", "Region", "Country", "Continent"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub image_id: String,
    pub predicted: GeoLocation,
    pub truth: GeoLocation,
}

/// Accuracies in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub count: usize,
    pub street_1km: f64,
    pub city_25km: f64,
    pub region_200km: f64,
    pub country_750km: f64,
    pub continent_2500km: f64,
    pub city_name_acc: f64,
    pub country_name_acc: f64,
}

impl MetricReport {
    pub fn threshold_accuracies(&self) -> [f64; 5] {
        [
            self.street_1km,
            self.city_25km,
            self.region_200km,
            self.country_750km,
            self.continent_2500km,
        ]
    }
}

fn check(records: &[EvalRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if !seen.insert(r.image_id.as_str()) {
            return Err(Error::DuplicateId(r.image_id.clone()));
        }
    }
    Ok(())
}

fn percent(hits: u64, n: usize) -> f64 {
    100.0 * hits as f64 / n as f64
}

/// Percent of records within each of [`THRESHOLDS_KM`] (inclusive).
pub fn threshold_accuracies(records: &[EvalRecord], exec: Execution) -> Result<[f64; 5]> {
    check(records)?;
    let counts = par::count(exec, records, THRESHOLDS_KM.len(), |r, acc| {
        let d = r.predicted.distance_km(&r.truth);
        for (slot, t) in acc.iter_mut().zip(THRESHOLDS_KM) {
            *slot += within_threshold(d, t) as u64;
        }
    });
    Ok(std::array::from_fn(|i| percent(counts[i], records.len())))
}

/// `(city percent, country percent)` of exact name matches after normalization.
pub fn name_accuracies(records: &[EvalRecord], names: &NameMatcher, exec: Execution) -> Result<(f64, f64)> {
    check(records)?;
    let counts = par::count(exec, records, 2, |r, acc| {
        acc[0] += names.matches(&r.predicted.city, &r.truth.city) as u64;
        acc[1] += names.matches(&r.predicted.country, &r.truth.country) as u64;
    });
    Ok((percent(counts[0], records.len()), percent(counts[1], records.len())))
}

pub fn evaluate(records: &[EvalRecord], names: &NameMatcher, exec: Execution) -> Result<MetricReport> {
    let t = threshold_accuracies(records, exec)?;
    let (city, country) = name_accuracies(records, names, exec)?;
    Ok(MetricReport {
        count: records.len(),
        street_1km: t[0],
        city_25km: t[1],
        region_200km: t[2],
        country_750km: t[3],
        continent_2500km: t[4],
        city_name_acc: city,
        country_name_acc: country,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Table,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "table" => Ok(Self::Table),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

pub const CSV_HEADER: &str =
    "count,street_1km,city_25km,region_200km,country_750km,continent_2500km,city_name_acc,country_name_acc";

/// Serializes a report. JSON and CSV carry full precision; the table rounds to one decimal.
pub fn emit_report(report: &MetricReport, format: ReportFormat) -> Result<String> {
    let t = report.threshold_accuracies();
    Ok(match format {
        ReportFormat::Json => serde_json::to_string_pretty(report)? + "\n",
        ReportFormat::Csv => {
            let values: Vec<String> = t
                .iter()
                .chain([&report.city_name_acc, &report.country_name_acc])
                .map(|v| v.to_string())
                .collect();
            format!("{CSV_HEADER}\n{},{}\n", report.count, values.join(","))
        }
        ReportFormat::Table => {
            let mut out = String::new();
            let labels: Vec<String> = THRESHOLD_LABELS
                .iter()
                .zip(THRESHOLDS_KM)
                .map(|(l, km)| format!("{l} {km}km"))
                .collect();
            let mut header = format!("{:>8}", "N");
            for l in labels.iter().map(String::as_str).chain(["City Name", "Country Name"]) {
                write!(header, " | {l:>15}").unwrap();
            }
            writeln!(out, "{header}").unwrap();
            writeln!(out, "{}", "-".repeat(header.len())).unwrap();
            write!(out, "{:>8}", report.count).unwrap();
            for v in t.iter().chain([&report.city_name_acc, &report.country_name_acc]) {
                write!(out, " | {:>15.1}", v).unwrap();
            }
            out.push('\n');
            out
        }
    })
}
