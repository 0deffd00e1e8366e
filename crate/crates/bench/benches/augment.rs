use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};

use bimaug_core::augment::{augment_index, generate_dataset, AugmentOptions, AugmentationSource, LinearPlanner};
use bimaug_core::dataset::{encode_shard, ExportOptions};
use bimaug_core::grounding::GroundingConfig;
use bimaug_core::parse::{parse_demo, ParseConfig};
use bimaug_core::synthetic::{default_camera, render_bundle, RenderOptions, SyntheticTask};
use bimaug_core::Plane;

fn source(task: SyntheticTask) -> AugmentationSource {
    AugmentationSource::new(
        task.ground_truth().unwrap(),
        task.template(),
        task.demo_config(),
        &GroundingConfig::default(),
        Plane::yz(),
    )
    .unwrap()
}

fn single_demo(c: &mut Criterion) {
    let mut g = c.benchmark_group("augment_index");
    for task in SyntheticTask::ALL {
        let src = source(task);
        let spec = task.spec();
        let options = AugmentOptions::from_spec(&spec);
        let mut i = 0u64;
        g.bench_function(task.to_string(), |b| {
            b.iter(|| {
                i += 1;
                black_box(augment_index(&src, &spec, &options, &LinearPlanner, i).unwrap())
            })
        });
    }
    g.finish();
}

fn thousand_demos(c: &mut Criterion) {
    let mut g = c.benchmark_group("generate_1000");
    g.sample_size(10);
    g.throughput(Throughput::Elements(1000));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    for task in SyntheticTask::ALL {
        let src = source(task);
        let mut spec = task.spec();
        spec.count = 1000;
        let options = AugmentOptions::from_spec(&spec);
        g.bench_function(format!("{task}/1_thread"), |b| {
            b.iter(|| pool.install(|| black_box(generate_dataset(&src, &spec, &options, &LinearPlanner).unwrap())))
        });
        g.bench_function(format!("{task}/all_threads"), |b| {
            b.iter(|| black_box(generate_dataset(&src, &spec, &options, &LinearPlanner).unwrap()))
        });
    }
    g.finish();
}

fn serialization(c: &mut Criterion) {
    let src = source(SyntheticTask::Pour);
    let mut spec = SyntheticTask::Pour.spec();
    spec.count = 64;
    let options = AugmentOptions::from_spec(&spec);
    let demos = generate_dataset(&src, &spec, &options, &LinearPlanner).unwrap().demos;
    let export = ExportOptions::default();
    let mut g = c.benchmark_group("encode_shard");
    g.throughput(Throughput::Elements(demos.len() as u64));
    g.bench_function("pour_64", |b| b.iter(|| black_box(encode_shard(&demos, 0, &export))));
    g.finish();
}

fn parsing(c: &mut Criterion) {
    let gt = SyntheticTask::Pour.ground_truth().unwrap();
    let (bundle, _) = render_bundle(&gt, &default_camera(), &RenderOptions::default());
    c.bench_function("parse_demo/pour", |b| {
        b.iter_batched(
            || bundle.clone(),
            |bundle| black_box(parse_demo(&bundle, &ParseConfig::default()).unwrap()),
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, single_demo, thousand_demos, serialization, parsing);
criterion_main!(benches);
