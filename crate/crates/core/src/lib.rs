//! Locatability scoring, hierarchical geo-localization rewards, locatability-stratified
//! dataset curation and a desk-scale two-stage GRPO curriculum.
//!
//! The crate is organised bottom-up:
//!
//! - [`geodesy`]: coordinates and great-circle distance.
//! - [`locatability`]: reasoning / optimized locatability scores and the RAG-superior label.
//! - [`names`] and [`rewards`]: name normalization, entity sets, grounding providers and
//!   every reward term used during training.
//! - [`curation`]: stratification and implicit-cue augmentation of reasoning trajectories.
//! - [`grpo`]: group sampling, advantage normalization, the clipped surrogate with KL
//!   penalty, and the curriculum driver over a synthetic world ([`world`]).
//! - [`eval`]: distance-threshold and name accuracies plus report emission.
//!
//! Record-level work runs on rayon when the `parallel` feature is enabled (the default);
//! see [`par::Execution`].

pub mod config;
pub mod curation;
pub mod error;
pub mod eval;
pub mod geodesy;
pub mod grpo;
pub mod jsonl;
pub mod locatability;
pub mod names;
pub mod par;
pub mod policy;
pub mod rewards;
pub mod world;

pub use error::{Error, Result};
pub use geodesy::{haversine_km, within_threshold, GeoCoord, EARTH_RADIUS_KM};
pub use locatability::{DistancePair, LocatabilityParams, LocatabilityResult, Stratum};
pub use rewards::{GeoLocation, RewardBreakdown, RewardParams};
