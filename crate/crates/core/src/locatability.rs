//! Reasoning locatability, optimized locatability and the RAG-superior label.
//!
//! Distances are kilometers throughout; with the default decay rate of `0.01` the
//! base term falls to `1/e` at 100 km of reasoning error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Haversine errors (km) of the retrieval baseline and the reasoning baseline for one image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistancePair {
    pub d_rag: f64,
    pub d_reason: f64,
}

impl DistancePair {
    pub fn new(d_rag: f64, d_reason: f64) -> Result<Self> {
        for (name, v) in [("d_rag", d_rag), ("d_reason", d_reason)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::param(name, format!("{v} is not a finite non-negative distance")));
            }
        }
        Ok(Self { d_rag, d_reason })
    }

    /// How far reasoning trails retrieval, floored at zero.
    pub fn reasoning_gap(&self) -> f64 {
        (self.d_reason - self.d_rag).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocatabilityParams {
    /// Decay rate of the base term, per km.
    pub gamma1: f64,
    /// Decay rate of the gap term, per km.
    pub gamma2: f64,
    /// Modulation strength of the reasoning score on visual locatability.
    pub alpha: f64,
    /// Margin (km) by which reasoning must trail retrieval to be RAG-superior.
    pub tau_margin: f64,
}

impl Default for LocatabilityParams {
    fn default() -> Self {
        Self {
            gamma1: 0.01,
            gamma2: 0.01,
            alpha: 0.6,
            tau_margin: 50.0,
        }
    }
}

impl LocatabilityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma1 > 0.0 && self.gamma1.is_finite()) {
            return Err(Error::param("gamma1", "must be positive"));
        }
        if !(self.gamma2 > 0.0 && self.gamma2.is_finite()) {
            return Err(Error::param("gamma2", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::param("alpha", "must lie in [0, 1]"));
        }
        if !(self.tau_margin >= 0.0 && self.tau_margin.is_finite()) {
            return Err(Error::param("tau_margin", "must be non-negative"));
        }
        Ok(())
    }
}

/// Components of the reasoning locatability score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReasonScore {
    pub l_base: f64,
    pub l_gap: f64,
    pub l_reason: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocatabilityResult {
    pub l_base: f64,
    pub l_gap: f64,
    pub l_reason: f64,
    pub l_opt: f64,
}

/// Which reasoning regime an image belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stratum {
    /// Standard reasoning suffices (label 0).
    Standard,
    /// Retrieval beats reasoning by more than the margin (label 1).
    RagSuperior,
}

impl Stratum {
    pub fn label(self) -> u8 {
        match self {
            Stratum::Standard => 0,
            Stratum::RagSuperior => 1,
        }
    }

    pub fn from_label(label: u8) -> Option<Self> {
        match label {
            0 => Some(Stratum::Standard),
            1 => Some(Stratum::RagSuperior),
            _ => None,
        }
    }
}

/// `exp(-γ1·d_reason) · exp(-γ2·max(0, d_reason - d_rag))`.
pub fn reason_score(d: DistancePair, p: &LocatabilityParams) -> ReasonScore {
    let l_base = (-p.gamma1 * d.d_reason).exp();
    let l_gap = (-p.gamma2 * d.reasoning_gap()).exp();
    ReasonScore {
        l_base,
        l_gap,
        l_reason: l_base * l_gap,
    }
}

/// `l_visual · ((1 - α) + α·l_reason)`, always within `[0, l_visual]` for inputs in `[0, 1]`.
pub fn optimized_score(l_visual: f64, l_reason: f64, alpha: f64) -> f64 {
    let l_opt = l_visual * ((1.0 - alpha) + alpha * l_reason);
    // guard against the last ulp when l_reason == 1
    l_opt.min(l_visual)
}

/// Strict inequality: `d_reason > d_rag + τ` is RAG-superior, equality stays standard.
pub fn stratum_label(d: DistancePair, tau_margin: f64) -> Stratum {
    if d.d_reason > d.d_rag + tau_margin {
        Stratum::RagSuperior
    } else {
        Stratum::Standard
    }
}

/// Full score for one image given its visual locatability.
pub fn score(l_visual: f64, d: DistancePair, p: &LocatabilityParams) -> Result<LocatabilityResult> {
    if !(0.0..=1.0).contains(&l_visual) {
        return Err(Error::param("l_visual", format!("{l_visual} outside [0, 1]")));
    }
    let r = reason_score(d, p);
    Ok(LocatabilityResult {
        l_base: r.l_base,
        l_gap: r.l_gap,
        l_reason: r.l_reason,
        l_opt: optimized_score(l_visual, r.l_reason, p.alpha),
    })
}
