use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use geoadapt_core::curation::{self, AcceptAll, CurationParams, DatasetRecord, ReasoningStep};
use geoadapt_core::eval::{self, EvalRecord};
use geoadapt_core::grpo::{self, CurriculumConfig, Stage2Reward, StageSettings};
use geoadapt_core::names::{EntitySet, NameMatcher, RuleBasedExtractor};
use geoadapt_core::par::Execution;
use geoadapt_core::policy::ToyPolicy;
use geoadapt_core::rewards::{GroundingTable, RewardModel, RewardParams, RewardRequest};
use geoadapt_core::world::{SyntheticGeoWorld, WorldConfig};
use geoadapt_core::{GeoCoord, GeoLocation, Stratum};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn location(i: usize, jitter: f64) -> GeoLocation {
    let lat = ((i * 7919) % 160) as f64 - 80.0 + jitter;
    let lon = ((i * 104_729) % 360) as f64 - 180.0 + jitter;
    GeoLocation::new(
        format!("country {}", i % 40),
        format!("city {}", i % 400),
        GeoCoord::new(lat, lon).unwrap(),
    )
    .unwrap()
}

fn eval_records(n: usize) -> Vec<EvalRecord> {
    (0..n)
        .map(|i| EvalRecord {
            image_id: format!("e{i}"),
            predicted: location(i, (i % 13) as f64 * 0.3),
            truth: location(i, 0.0),
        })
        .collect()
}

fn reward_requests(n: usize) -> Vec<RewardRequest> {
    (0..n)
        .map(|i| RewardRequest {
            image_id: format!("r{i}"),
            predicted_stratum: Stratum::Standard,
            true_stratum: if i % 3 == 0 {
                Stratum::RagSuperior
            } else {
                Stratum::Standard
            },
            predicted_entities: None,
            predicted_rationale: Some(format!("The Old Bridge over the River {i} and Gothic Cathedral spires")),
            reference_entities: Some(["old bridge", "gothic cathedral"].into_iter().collect::<EntitySet>()),
            reference_rationale: None,
            predicted: location(i, 0.2),
            truth: location(i, 0.0),
        })
        .collect()
}

fn dataset(n: usize) -> Vec<DatasetRecord> {
    (0..n)
        .map(|i| {
            let rag = i % 2 == 0;
            let candidates: Vec<String> = if rag {
                (0..3).map(|k| format!("d{i}-{k}")).collect()
            } else {
                Vec::new()
            };
            let cue = |k: usize| ReasoningStep {
                text: format!("cue {k} of {i}"),
                entities: [format!("entity {k}")].into_iter().collect(),
                confidence_per_candidate: candidates
                    .iter()
                    .enumerate()
                    .map(|(j, c)| (c.clone(), ((j + k) % 4) as f64 * 0.25))
                    .collect(),
                own_image_confidence: (k % 5) as f64 * 0.1,
            };
            DatasetRecord {
                image_id: format!("d{i:06}"),
                l_visual: (i % 100) as f64 / 100.0,
                ground_truth: location(i, 0.0),
                d_rag: Some(if rag { 10.0 } else { 500.0 }),
                d_reason: Some((i % 700) as f64 + if rag { 100.0 } else { 0.0 }),
                standard_steps: (0..4).map(cue).collect(),
                cue_steps: if rag { (4..10).map(cue).collect() } else { Vec::new() },
                candidate_ids: candidates,
                stratum: None,
                augmented_steps: None,
                scores: None,
            }
        })
        .collect()
}

fn bench(c: &mut Criterion) {
    let names = NameMatcher::default();

    let records = eval_records(100_000);
    let mut group = c.benchmark_group("eval_100k");
    for (label, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| eval::evaluate(black_box(&records), &names, exec).unwrap())
        });
    }
    group.finish();

    let requests = reward_requests(20_000);
    let grounding = GroundingTable::new();
    let extractor = RuleBasedExtractor::new(["river"]);
    let model = RewardModel {
        params: RewardParams::default(),
        names: &names,
        grounding: &grounding,
        extractor: &extractor,
    };
    let mut group = c.benchmark_group("rewards_20k");
    for (label, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| model.evaluate_batch(black_box(&requests), exec))
        });
    }
    group.finish();

    let data = dataset(20_000);
    let params = CurationParams::default();
    let mut group = c.benchmark_group("curate_20k");
    group.sample_size(10);
    for (label, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| curation::curate(black_box(data.clone()), &params, &AcceptAll, exec).unwrap())
        });
    }
    group.finish();

    let world = SyntheticGeoWorld::generate(WorldConfig {
        images: 2_000,
        holdout: 200,
        ..Default::default()
    })
    .unwrap();
    let init = ToyPolicy::zeros(world.num_cells(), world.num_features(), 0.5).unwrap();
    let reward = Stage2Reward {
        world: &world,
        params: RewardParams::default(),
    };
    let mut group = c.benchmark_group("grpo_epoch_1800_prompts");
    group.sample_size(10);
    for (label, exec) in MODES {
        let cfg = CurriculumConfig {
            execution: exec,
            ..Default::default()
        };
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| {
                grpo::run_stage(
                    &world,
                    init.clone(),
                    &init,
                    &reward,
                    &cfg,
                    StageSettings {
                        stage: 2,
                        epochs: 1,
                        beta: 0.04,
                    },
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
