//! Group Relative Policy Optimization over the toy policy.
//!
//! Each prompt (image) gets a group of `G` whole-answer samples from the epoch's
//! old-policy snapshot. Rewards are centered (and by default scaled) within the group,
//! and the policy takes one ascent step per group on
//!
//! ```text
//! J(θ) = 1/G Σ_j min(ρ_j A_j, clip(ρ_j, 1-ε, 1+ε) A_j) - β KL(π_θ ‖ π_ref),
//! ρ_j  = exp(log π_θ(a_j) - log π_old(a_j))
//! ```
//!
//! The KL term is exact over the action space at the prompt's features.
//!
//! Sampling and reward evaluation for all prompts of an epoch run in parallel; the
//! updates are then applied one group at a time in a seeded order.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::locatability::Stratum;
use crate::par::{self, Execution};
use crate::policy::{Action, ToyPolicy};
use crate::rewards::{
    depth_reward, hierarchical_geo_reward, stage1_reward, stage2_reward, visual_reward, RewardBreakdown, RewardParams,
};
use crate::world::{SyntheticGeoWorld, WorldImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumConfig {
    pub group_size: usize,
    pub clip_eps: f64,
    pub beta_stage1: f64,
    pub beta_stage2: f64,
    pub learning_rate: f64,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub seed: u64,
    /// Added to the group standard deviation before dividing.
    pub eps_num: f64,
    /// When false, advantages are centered only.
    pub scale_advantages: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            clip_eps: 0.2,
            beta_stage1: 0.04,
            beta_stage2: 0.04,
            learning_rate: 1e-2,
            stage1_epochs: 3,
            stage2_epochs: 2,
            seed: 42,
            eps_num: 1e-8,
            scale_advantages: true,
            execution: Execution::default(),
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::param("group_size", "must be at least 2"));
        }
        if self.clip_eps.is_nan() || self.clip_eps <= 0.0 {
            return Err(Error::param("clip_eps", "must be positive"));
        }
        if !(self.beta_stage1 >= 0.0 && self.beta_stage2 >= 0.0) {
            return Err(Error::param("beta", "must be non-negative"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", "must be positive"));
        }
        if self.eps_num.is_nan() || self.eps_num < 0.0 {
            return Err(Error::param("eps_num", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub action: Action,
    pub reward: f64,
    /// Log-probability under the policy that sampled it.
    pub logp_old: f64,
    pub logp_ref: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGroup {
    pub prompt_id: String,
    pub features: Vec<f64>,
    pub candidates: Vec<Candidate>,
    pub advantages: Vec<f64>,
}

impl CandidateGroup {
    pub fn rewards(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.reward).collect()
    }

    /// Fills advantages from the candidates' current rewards.
    pub fn set_advantages(&mut self, eps_num: f64, scale: bool) {
        self.advantages = normalize_advantages(&self.rewards(), eps_num, scale);
    }
}

/// Draws `g` i.i.d. actions from `policy` at `features` using an RNG seeded with `seed`.
/// Rewards and advantages are left empty.
pub fn sample_group(
    policy: &ToyPolicy,
    reference: &ToyPolicy,
    prompt_id: &str,
    features: &[f64],
    g: usize,
    seed: u64,
) -> Result<CandidateGroup> {
    if g < 2 {
        return Err(Error::param("group_size", "must be at least 2"));
    }
    let ctx = |e: Error| match e {
        Error::Numeric { detail, .. } => Error::numeric(format!("sampling prompt {prompt_id}"), detail),
        other => other,
    };
    let logp = policy.log_probs(features).map_err(ctx)?;
    let logp_ref = reference.log_probs(features).map_err(ctx)?;
    let probs: Vec<f64> = logp.iter().map(|v| v.exp()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates = (0..g)
        .map(|_| {
            let index = sample_index(&probs, rng.random::<f64>());
            Candidate {
                action: policy.action_at(index),
                reward: 0.0,
                logp_old: logp[index],
                logp_ref: logp_ref[index],
            }
        })
        .collect();
    Ok(CandidateGroup {
        prompt_id: prompt_id.to_string(),
        features: features.to_vec(),
        candidates,
        advantages: Vec::new(),
    })
}

/// Inverse-CDF draw. Zero-probability actions are never returned.
fn sample_index(probs: &[f64], u: f64) -> usize {
    let total: f64 = probs.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if target < acc {
            return i;
        }
    }
    last
}

/// `(r - mean) / (std + eps_num)` with the population standard deviation, or `r - mean`
/// when `scale` is false. A group of identical rewards yields all zeros.
pub fn normalize_advantages(rewards: &[f64], eps_num: f64, scale: bool) -> Vec<f64> {
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let centered: Vec<f64> = rewards.iter().map(|r| r - mean).collect();
    if !scale {
        return centered;
    }
    let std = (centered.iter().map(|c| c * c).sum::<f64>() / n).sqrt();
    centered.into_iter().map(|c| c / (std + eps_num)).collect()
}

/// `KL(p ‖ q)` from log-probabilities.
pub fn kl_divergence(logp: &[f64], logq: &[f64]) -> f64 {
    logp.iter().zip(logq).map(|(lp, lq)| lp.exp() * (lp - lq)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateEval {
    pub objective: f64,
    /// Mean clipped surrogate before the KL penalty.
    pub surrogate: f64,
    pub kl: f64,
    /// Gradient of `objective` with respect to the policy weights (row-major).
    pub grad: Vec<f64>,
}

/// Objective and its analytic gradient at the current policy.
pub fn surrogate(
    group: &CandidateGroup,
    policy: &ToyPolicy,
    reference: &ToyPolicy,
    clip_eps: f64,
    beta: f64,
) -> Result<SurrogateEval> {
    if !policy.same_shape(reference) {
        return Err(Error::param("reference", "policy shapes differ"));
    }
    if group.advantages.len() != group.candidates.len() {
        return Err(Error::param("advantages", "group advantages are not populated"));
    }
    let x = &group.features;
    let logp = policy.log_probs(x)?;
    let logq = reference.log_probs(x)?;
    let p: Vec<f64> = logp.iter().map(|v| v.exp()).collect();
    let n_act = policy.num_actions();
    let g = group.candidates.len() as f64;

    // d objective / d logit
    let mut dz = vec![0.0; n_act];
    let mut surrogate = 0.0;
    for (c, &adv) in group.candidates.iter().zip(&group.advantages) {
        let a = policy.action_index(c.action);
        let ratio = (logp[a] - c.logp_old).exp();
        let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
        surrogate += (ratio * adv).min(clipped * adv) / g;
        let clip_active = (adv > 0.0 && ratio > 1.0 + clip_eps) || (adv < 0.0 && ratio < 1.0 - clip_eps);
        if !clip_active {
            // ∇(ρA) = ρA ∇log π(a); ∂log π(a)/∂z_b = 1[a=b] - p_b
            let s = ratio * adv / g;
            for (b, d) in dz.iter_mut().enumerate() {
                *d -= s * p[b];
            }
            dz[a] += s;
        }
    }

    let kl = kl_divergence(&logp, &logq);
    // ∂KL/∂z_c = p_c (log p_c - log q_c - KL)
    for c in 0..n_act {
        dz[c] -= beta * p[c] * (logp[c] - logq[c] - kl);
    }

    let t = policy.temperature();
    let grad = dz.iter().flat_map(|d| x.iter().map(move |v| d * v / t)).collect();
    Ok(SurrogateEval {
        objective: surrogate - beta * kl,
        surrogate,
        kl,
        grad,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// Objective at the pre-update parameters.
    pub objective: f64,
    pub kl: f64,
}

/// One gradient-ascent step on the clipped objective. The policy is left untouched
/// when the gradient is not finite.
pub fn clipped_step(
    group: &CandidateGroup,
    policy: &mut ToyPolicy,
    reference: &ToyPolicy,
    clip_eps: f64,
    beta: f64,
    learning_rate: f64,
) -> Result<StepOutcome> {
    let eval = surrogate(group, policy, reference, clip_eps, beta).map_err(|e| match e {
        Error::Numeric { detail, .. } => Error::numeric(format!("group {}", group.prompt_id), detail),
        other => other,
    })?;
    if !eval.objective.is_finite() || eval.grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(
            format!("group {}", group.prompt_id),
            "non-finite objective or gradient",
        ));
    }
    for (w, g) in policy.weights_mut().iter_mut().zip(&eval.grad) {
        *w += learning_rate * g;
    }
    Ok(StepOutcome {
        objective: eval.objective,
        kl: eval.kl,
    })
}

/// Scalar reward for one sampled action on one image.
pub trait StageReward: Sync {
    fn reward(&self, image: &WorldImage, action: Action) -> RewardBreakdown;
    fn scalar(&self, b: &RewardBreakdown) -> f64;
}

/// `w1·R_depth + w2·R_vis` against the world's grounding table.
pub struct Stage1Reward<'w> {
    pub world: &'w SyntheticGeoWorld,
    pub params: RewardParams,
}

impl StageReward for Stage1Reward<'_> {
    fn reward(&self, image: &WorldImage, action: Action) -> RewardBreakdown {
        let predicted = self.world.predicted_entities(action);
        let vis = visual_reward(&predicted, &image.reference_entities, &image.id, &self.world.grounding);
        let mut b = RewardBreakdown {
            r_depth: depth_reward(action.depth, image.stratum),
            r_grounding: vis.r_grounding,
            r_alignment: vis.r_alignment,
            r_vis: vis.r_vis,
            no_entities: vis.no_entities,
            ..Default::default()
        };
        b.r_stage1 = stage1_reward(&b, &self.params);
        b
    }

    fn scalar(&self, b: &RewardBreakdown) -> f64 {
        b.r_stage1
    }
}

/// Hierarchical geo reward of the predicted cell's representative location.
pub struct Stage2Reward<'w> {
    pub world: &'w SyntheticGeoWorld,
    pub params: RewardParams,
}

impl StageReward for Stage2Reward<'_> {
    fn reward(&self, image: &WorldImage, action: Action) -> RewardBreakdown {
        let pred = self.world.predicted_location(action);
        let geo = hierarchical_geo_reward(pred, &image.location, &self.params, &self.world.names);
        let mut b = RewardBreakdown {
            r_coord: geo.r_coord,
            r_geo: geo.r_geo,
            ..Default::default()
        };
        b.r_stage2 = stage2_reward(&b);
        b
    }

    fn scalar(&self, b: &RewardBreakdown) -> f64 {
        b.r_stage2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub stage: u8,
    pub epoch: usize,
    pub mean_reward: f64,
    pub mean_kl: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub policy: ToyPolicy,
    pub trace: Vec<EpochTrace>,
    /// KL to the reference at the very first update of the stage.
    pub first_step_kl: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct StageSettings {
    pub stage: u8,
    pub epochs: usize,
    pub beta: f64,
}

/// splitmix64 over the mixed inputs; keeps per-prompt streams independent of scheduling.
fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p;
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Trains over the world's training images for `settings.epochs` epochs.
pub fn run_stage(
    world: &SyntheticGeoWorld,
    policy: ToyPolicy,
    reference: &ToyPolicy,
    reward_fn: &dyn StageReward,
    cfg: &CurriculumConfig,
    settings: StageSettings,
) -> Result<StageOutcome> {
    cfg.validate()?;
    let images = world.train();
    let mut policy = policy;
    let mut trace = Vec::with_capacity(settings.epochs);
    let mut first_step_kl = None;

    for epoch in 0..settings.epochs {
        let old = policy.clone();
        let mut order: Vec<usize> = (0..images.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[
            cfg.seed,
            settings.stage as u64,
            epoch as u64,
        ])));

        let groups: Vec<Result<CandidateGroup>> = par::map(cfg.execution, &order, |&i| {
            let image = &images[i];
            let seed = mix_seed(&[cfg.seed, settings.stage as u64, epoch as u64, i as u64]);
            let mut group = sample_group(&old, reference, &image.id, &image.features, cfg.group_size, seed)?;
            for c in &mut group.candidates {
                c.reward = reward_fn.scalar(&reward_fn.reward(image, c.action));
            }
            group.set_advantages(cfg.eps_num, cfg.scale_advantages);
            Ok(group)
        });

        let (mut reward_sum, mut kl_sum, mut obj_sum, mut count) = (0.0, 0.0, 0.0, 0usize);
        for group in groups {
            let group = group.map_err(|e| stage_context(e, settings.stage, epoch))?;
            reward_sum += group.candidates.iter().map(|c| c.reward).sum::<f64>();
            count += group.candidates.len();
            let step = clipped_step(
                &group,
                &mut policy,
                reference,
                cfg.clip_eps,
                settings.beta,
                cfg.learning_rate,
            )
            .map_err(|e| stage_context(e, settings.stage, epoch))?;
            first_step_kl.get_or_insert(step.kl);
            kl_sum += step.kl;
            obj_sum += step.objective;
        }
        let steps = images.len().max(1) as f64;
        trace.push(EpochTrace {
            stage: settings.stage,
            epoch,
            mean_reward: if count > 0 { reward_sum / count as f64 } else { 0.0 },
            mean_kl: kl_sum / steps,
            objective: obj_sum / steps,
        });
    }
    Ok(StageOutcome {
        policy,
        trace,
        first_step_kl,
    })
}

fn stage_context(e: Error, stage: u8, epoch: usize) -> Error {
    match e {
        Error::Numeric { context, detail } => {
            Error::numeric(format!("stage {stage}, epoch {epoch}, {context}"), detail)
        }
        other => other,
    }
}

#[derive(Debug, Clone)]
pub struct CurriculumOutcome {
    pub stage1: StageOutcome,
    pub stage2: StageOutcome,
}

impl CurriculumOutcome {
    pub fn policy(&self) -> &ToyPolicy {
        &self.stage2.policy
    }

    pub fn trace(&self) -> impl Iterator<Item = &EpochTrace> {
        self.stage1.trace.iter().chain(&self.stage2.trace)
    }
}

/// Stage 1 against `init` as reference, then Stage 2 started from the Stage-1 checkpoint
/// with the reference swapped to that same checkpoint.
pub fn run_curriculum(
    world: &SyntheticGeoWorld,
    init: &ToyPolicy,
    params: &RewardParams,
    cfg: &CurriculumConfig,
) -> Result<CurriculumOutcome> {
    let stage1 = run_stage(
        world,
        init.clone(),
        init,
        &Stage1Reward { world, params: *params },
        cfg,
        StageSettings {
            stage: 1,
            epochs: cfg.stage1_epochs,
            beta: cfg.beta_stage1,
        },
    )?;
    let checkpoint = stage1.policy.clone();
    let stage2 = run_stage(
        world,
        checkpoint.clone(),
        &checkpoint,
        &Stage2Reward { world, params: *params },
        cfg,
        StageSettings {
            stage: 2,
            epochs: cfg.stage2_epochs,
            beta: cfg.beta_stage2,
        },
    )?;
    Ok(CurriculumOutcome { stage1, stage2 })
}

/// Fraction of images whose greedy depth decision matches the stratum label.
pub fn depth_accuracy(policy: &ToyPolicy, images: &[WorldImage]) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut hits = 0;
    for im in images {
        let deep = policy.deep_probability(&im.features)? > 0.5;
        if deep == (im.stratum == Stratum::RagSuperior) {
            hits += 1;
        }
    }
    Ok(hits as f64 / images.len() as f64)
}

/// Mean hierarchical geo reward of greedy cell predictions.
pub fn greedy_geo_reward(
    world: &SyntheticGeoWorld,
    policy: &ToyPolicy,
    images: &[WorldImage],
    params: &RewardParams,
) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut total = 0.0;
    for im in images {
        let a = policy.greedy(&im.features)?;
        total += hierarchical_geo_reward(world.predicted_location(a), &im.location, params, &world.names).r_geo;
    }
    Ok(total / images.len() as f64)
}
