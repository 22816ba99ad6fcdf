//! Flat run configuration shared by every command.
//!
//! All keys are optional in a config file; missing keys take the defaults below, which
//! are the published hyper-parameter settings for the scoring and reward terms.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::curation::CurationParams;
use crate::error::Result;
use crate::grpo::CurriculumConfig;
use crate::locatability::LocatabilityParams;
use crate::par::Execution;
use crate::rewards::RewardParams;
use crate::world::WorldConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // locatability
    pub gamma1: f64,
    pub gamma2: f64,
    pub alpha: f64,
    pub tau_margin: f64,
    // rewards
    pub w1: f64,
    pub w2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub sigma: f64,
    // curation
    pub implicit_threshold: f64,
    pub candidate_threshold: f64,
    pub min_support: usize,
    // curriculum
    pub group_size: usize,
    pub clip_eps: f64,
    pub beta_stage1: f64,
    pub beta_stage2: f64,
    pub learning_rate: f64,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub eps_num: f64,
    pub scale_advantages: bool,
    pub temperature: f64,
    // synthetic world
    pub world_images: usize,
    pub world_holdout: usize,
    pub world_countries: usize,
    pub world_cities_per_country: usize,
    pub world_seed: u64,
    pub seed: u64,
    // files
    pub dataset_in: Option<PathBuf>,
    pub dataset_out: Option<PathBuf>,
    pub grounding_table: Option<PathBuf>,
    pub alias_table: Option<PathBuf>,
    pub trace_out: Option<PathBuf>,
    pub policy_out: Option<PathBuf>,
    pub report_out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let loc = LocatabilityParams::default();
        let rew = RewardParams::default();
        let cur = CurationParams::default();
        let cc = CurriculumConfig::default();
        let world = WorldConfig::default();
        Self {
            gamma1: loc.gamma1,
            gamma2: loc.gamma2,
            alpha: loc.alpha,
            tau_margin: loc.tau_margin,
            w1: rew.w1,
            w2: rew.w2,
            lambda1: rew.lambda1,
            lambda2: rew.lambda2,
            sigma: rew.sigma,
            implicit_threshold: cur.implicit_threshold,
            candidate_threshold: cur.candidate_threshold,
            min_support: cur.min_support,
            group_size: cc.group_size,
            clip_eps: cc.clip_eps,
            beta_stage1: cc.beta_stage1,
            beta_stage2: cc.beta_stage2,
            learning_rate: cc.learning_rate,
            stage1_epochs: cc.stage1_epochs,
            stage2_epochs: cc.stage2_epochs,
            eps_num: cc.eps_num,
            scale_advantages: cc.scale_advantages,
            temperature: 0.5,
            world_images: world.images,
            world_holdout: world.holdout,
            world_countries: world.countries,
            world_cities_per_country: world.cities_per_country,
            world_seed: world.seed,
            seed: cc.seed,
            dataset_in: None,
            dataset_out: None,
            grounding_table: None,
            alias_table: None,
            trace_out: None,
            policy_out: None,
            report_out: None,
        }
    }
}

impl RunConfig {
    pub fn locatability(&self) -> LocatabilityParams {
        LocatabilityParams {
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            alpha: self.alpha,
            tau_margin: self.tau_margin,
        }
    }

    pub fn rewards(&self) -> RewardParams {
        RewardParams {
            w1: self.w1,
            w2: self.w2,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            sigma: self.sigma,
        }
    }

    pub fn curation(&self) -> CurationParams {
        CurationParams {
            locatability: self.locatability(),
            implicit_threshold: self.implicit_threshold,
            candidate_threshold: self.candidate_threshold,
            min_support: self.min_support,
        }
    }

    pub fn curriculum(&self) -> CurriculumConfig {
        CurriculumConfig {
            group_size: self.group_size,
            clip_eps: self.clip_eps,
            beta_stage1: self.beta_stage1,
            beta_stage2: self.beta_stage2,
            learning_rate: self.learning_rate,
            stage1_epochs: self.stage1_epochs,
            stage2_epochs: self.stage2_epochs,
            seed: self.seed,
            eps_num: self.eps_num,
            scale_advantages: self.scale_advantages,
            execution: Execution::default(),
        }
    }

    pub fn world(&self) -> WorldConfig {
        WorldConfig {
            images: self.world_images,
            holdout: self.world_holdout,
            countries: self.world_countries,
            cities_per_country: self.world_cities_per_country,
            tau_margin: self.tau_margin,
            seed: self.world_seed,
            ..WorldConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.locatability().validate()?;
        self.rewards().validate()?;
        self.curriculum().validate()?;
        for (name, t) in [
            ("implicit_threshold", self.implicit_threshold),
            ("candidate_threshold", self.candidate_threshold),
        ] {
            if !(0.0..=1.0).contains(&t) {
                return Err(crate::Error::param(name, "must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}
