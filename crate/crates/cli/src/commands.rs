use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use bimaug_core::augment::{augment_index, generate_dataset, AugmentOptions, AugmentationSpec, AugmentedDemo};
use bimaug_core::dataset::{
    dataset_stats, encode_shard, export_dataset, import_dataset, sha256_hex, DatasetManifest, ExportOptions,
    SourceInfo,
};
use bimaug_core::geometry::Pose;
use bimaug_core::grounding::{ground_segments, object_frames_from_masks, GroundingConfig, ObjectMask};
use bimaug_core::parse::{parse_demo, DemoBundle, ParseConfig};
use bimaug_core::synthetic::{default_camera, render_bundle, RenderOptions, SyntheticTask};
use bimaug_core::verify::{check_invariants, replay, DatasetReport, VerifyOptions};
use bimaug_core::Plane;

use crate::exit;
use crate::inputs::{
    create_dir, load_objects, load_template, load_trajectory, make_planner, parse_plane, planner_record, read_json,
    thresholds, write_json, GenerationRecord, Inputs, GENERATION_FILE,
};
use crate::{AugmentArgs, BenchArgs, GenArgs, GroundArgs, ParseArgs, StatsArgs, VerifyArgs};

fn task(name: &str) -> Result<SyntheticTask> {
    Ok(name.parse::<SyntheticTask>()?)
}

#[derive(Serialize)]
struct ObjectsFile<'a> {
    objects: &'a [Pose],
}

pub fn gen_synthetic(a: GenArgs) -> Result<u8> {
    let task = task(&a.task)?;
    ensure!(a.noise >= 0.0 && a.noise.is_finite(), "--noise must be a finite value >= 0, got {}", a.noise);
    let gt = task.ground_truth()?;
    let options = RenderOptions {
        depth_noise: a.noise,
        seed: a.seed,
        ..RenderOptions::default()
    };
    let (bundle, masks) = render_bundle(&gt, &default_camera(), &options);

    create_dir(&a.out.join("masks"))?;
    bundle.save(&a.out)?;
    for (k, m) in masks.iter().enumerate() {
        m.save_png(&a.out.join("masks").join(format!("object_{}.png", k + 1)))?;
    }
    gt.save(&a.out.join("ground_truth.json"))?;
    write_json(&a.out.join("template.json"), &task.template())?;
    write_json(&a.out.join("spec.json"), &task.spec())?;
    write_json(
        &a.out.join("objects.json"),
        &ObjectsFile {
            objects: &task.demo_config().frames,
        },
    )?;
    println!(
        "{task}: {} control steps, {} rendered frames -> {}",
        gt.len(),
        bundle.num_frames(),
        a.out.display()
    );
    Ok(exit::OK)
}

pub fn parse(a: ParseArgs) -> Result<u8> {
    let mut config = match &a.config {
        Some(p) => read_json::<ParseConfig>(p)?,
        None => ParseConfig::default(),
    };
    if let Some(r) = a.control_rate {
        config.control_rate = r;
    }
    ensure!(
        config.control_rate > 0.0 && config.control_rate.is_finite(),
        "control rate must be positive, got {}",
        config.control_rate
    );
    let bundle = DemoBundle::load(&a.bundle).with_context(|| format!("cannot load bundle {}", a.bundle.display()))?;
    let parsed = parse_demo(&bundle, &config)?;
    let d = &parsed.diagnostics;
    log::info!("diagnostics: {}", serde_json::to_string(d)?);
    parsed.trajectory.save(&a.out)?;
    println!(
        "{} frames at {} Hz, {} keypoints; repaired frames per arm {:?} -> {}",
        parsed.trajectory.len(),
        config.control_rate,
        parsed.trajectory.num_keypoints(),
        d.repaired_frames,
        a.out.display()
    );
    Ok(exit::OK)
}

pub fn ground(a: GroundArgs) -> Result<u8> {
    let thresholds = thresholds(&a.source)?;
    let traj = load_trajectory(&a.source.traj)?;
    let template = load_template(&a.source.template)?;
    let config = match (&a.masks, &a.bundle) {
        (Some(dir), Some(bundle_dir)) => {
            let bundle =
                DemoBundle::load(bundle_dir).with_context(|| format!("cannot load bundle {}", bundle_dir.display()))?;
            let masks = (1..=template.num_objects)
                .map(|k| ObjectMask::load_png(&dir.join(format!("object_{k}.png"))))
                .collect::<Result<Vec<_>, _>>()?;
            let c = object_frames_from_masks(&masks, &bundle.depth[0], &bundle.camera, &traj.keypoints)?;
            c.check_against(template.num_objects, traj.num_keypoints())?;
            c
        }
        _ => load_objects(a.source.objects.as_deref(), &traj, &template)?,
    };
    let g = ground_segments(&traj, &template, &config, &thresholds)?;

    #[derive(Serialize)]
    struct Out<'a> {
        objects: &'a [Pose],
        thresholds: GroundingConfig,
        timeline: &'a bimaug_core::SegmentTimeline,
        events: &'a bimaug_core::GraspEventLog,
    }
    write_json(
        &a.out,
        &Out {
            objects: &config.frames,
            thresholds,
            timeline: &g.timeline,
            events: &g.events,
        },
    )?;
    for (arm, segs) in g.timeline.arms.iter().enumerate() {
        let line: Vec<String> = segs
            .iter()
            .map(|s| format!("{:?}[{}..={}]", s.kind, s.start, s.end))
            .collect();
        println!("arm {arm}: {}", line.join(" "));
    }
    Ok(exit::OK)
}

fn spec_hash(spec: &AugmentationSpec) -> String {
    sha256_hex(spec.to_json().as_bytes())
}

pub fn augment(a: AugmentArgs) -> Result<u8> {
    // every input is validated before anything is written
    let thresholds = thresholds(&a.source)?;
    let inputs = Inputs::load(&a.source.traj, &a.source.template, a.source.objects.as_deref())?;
    let mut spec = AugmentationSpec::load(&a.spec)?;
    if let Some(c) = a.count {
        spec.count = c;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(v) = a.velocity {
        spec.velocity = v;
    }
    if let Some(dt) = a.dt {
        spec.dt = dt;
    }
    if let Some(p) = &a.mirror_plane {
        spec.symmetry_plane = parse_plane(p)?;
    }
    spec.validate(inputs.config.num_objects())
        .with_context(|| format!("spec {}", a.spec.display()))?;
    ensure!(spec.count > 0, "count must be at least 1");
    let mut export = match &a.export {
        Some(p) => read_json::<ExportOptions>(p)?,
        None => ExportOptions {
            seed: spec.seed,
            ..ExportOptions::default()
        },
    };
    if let Some(s) = a.seed {
        export.seed = s;
    }
    if let Some(n) = a.noise {
        export.sigma = n;
    }
    if let Some(d) = a.dropout {
        export.dropout = d;
    }
    export.validate()?;
    let planner_rec = planner_record(&a.planner)?;
    if a.out.is_file() {
        bail!("{} exists and is not a directory", a.out.display());
    }

    let source_hash = inputs.hash(&thresholds);
    let source = inputs.source(&thresholds, spec.symmetry_plane)?;
    let options = AugmentOptions::from_spec(&spec);
    let planner = make_planner(planner_rec.as_ref());
    let started = Instant::now();
    let report = generate_dataset(&source, &spec, &options, planner.as_ref())?;
    let gen_time = started.elapsed();

    create_dir(&a.out)?;
    let manifest = export_dataset(
        &report.demos,
        &a.out,
        &export,
        SourceInfo {
            source_hash: source_hash.clone(),
            spec_hash: spec_hash(&spec),
            seed: spec.seed,
        },
    )?;
    write_json(
        &a.out.join(GENERATION_FILE),
        &GenerationRecord {
            spec,
            thresholds,
            options,
            export,
            planner: planner_rec,
            source_hash,
            failures: report.failures.clone(),
        },
    )?;
    let mirrored = report.demos.iter().filter(|d| d.provenance.mirrored).count();
    println!(
        "{} demos ({} mirrored, {} failed) in {:.3} s, {} shards -> {}",
        manifest.demo_count,
        mirrored,
        report.failures.len(),
        gen_time.as_secs_f64(),
        manifest.shards.len(),
        a.out.display()
    );
    Ok(exit::OK)
}

#[derive(Debug, Default, Serialize)]
struct ReplaySummary {
    task: String,
    total: usize,
    successes: usize,
    rate: f64,
    failed_indices: Vec<u64>,
}

#[derive(Debug, Default, Serialize)]
struct VerifySummary {
    passed: bool,
    invariants: DatasetReport,
    regeneration_errors: Vec<(u64, String)>,
    shards_checked: usize,
    shard_mismatches: Vec<String>,
    replay: Option<ReplaySummary>,
}

pub fn verify(a: VerifyArgs) -> Result<u8> {
    let manifest = DatasetManifest::load(&a.dataset)?;
    let record: GenerationRecord = read_json(&a.dataset.join(GENERATION_FILE))?;
    let replay_task = a.task.as_deref().map(task).transpose()?;
    ensure!(a.grasp_eps > 0.0, "--grasp-eps must be positive");
    let inputs = Inputs::load(&a.traj, &a.template, a.objects.as_deref())?;
    let hash = inputs.hash(&record.thresholds);
    ensure!(
        hash == record.source_hash,
        "inputs do not match the dataset: source hash {hash}, dataset was generated from {}",
        record.source_hash
    );
    let planner_rec = match planner_record(&a.planner)? {
        Some(p) => Some(p),
        None => record.planner.clone(),
    };
    let planner = make_planner(planner_rec.as_ref());
    let spec = &record.spec;
    let source = inputs.source(&record.thresholds, spec.symmetry_plane)?;
    let verify_opts = VerifyOptions {
        workspace: Some(spec.workspace),
        ..VerifyOptions::from(&record.options)
    };

    let regenerated: Vec<Result<AugmentedDemo, String>> = manifest
        .demos
        .par_iter()
        .map(|e| {
            augment_index(&source, spec, &record.options, planner.as_ref(), e.provenance.index).map_err(|err| err.to_string())
        })
        .collect();

    let mut summary = VerifySummary::default();
    let mut demos = Vec::with_capacity(regenerated.len());
    for (e, r) in manifest.demos.iter().zip(regenerated) {
        match r {
            Ok(d) => demos.push(d),
            Err(err) => summary.regeneration_errors.push((e.provenance.index, err)),
        }
    }
    if summary.regeneration_errors.is_empty() {
        let reports: Vec<_> = demos
            .par_iter()
            .map(|d| {
                let prepared = source.prepared(d.provenance.mirrored).expect("regenerated from this source");
                (d.provenance.index, check_invariants(prepared, d, &verify_opts))
            })
            .collect();
        for (i, r) in &reports {
            summary.invariants.add(*i, r);
        }

        let mut by_shard: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (pos, e) in manifest.demos.iter().enumerate() {
            by_shard.entry(e.shard).or_default().push(pos);
        }
        let mismatches: Vec<Option<String>> = manifest
            .shards
            .par_iter()
            .enumerate()
            .map(|(s, info)| {
                let positions = by_shard.get(&s).cloned().unwrap_or_default();
                let chunk: Vec<AugmentedDemo> = positions.iter().map(|&p| demos[p].clone()).collect();
                let bytes = encode_shard(&chunk, positions.first().copied().unwrap_or(0), &manifest.options);
                let path = a.dataset.join(&info.file);
                match std::fs::read(&path) {
                    Err(e) => Some(format!("{}: {e}", path.display())),
                    Ok(on_disk) if on_disk != bytes => {
                        let at = on_disk.iter().zip(&bytes).position(|(x, y)| x != y).unwrap_or(on_disk.len().min(bytes.len()));
                        Some(format!("{}: differs from regeneration at byte {at}", info.file))
                    }
                    Ok(_) if sha256_hex(&bytes) != info.sha256 => Some(format!("{}: manifest hash differs", info.file)),
                    Ok(_) => None,
                }
            })
            .collect();
        summary.shards_checked = manifest.shards.len();
        summary.shard_mismatches = mismatches.into_iter().flatten().collect();

        if let Some(t) = replay_task {
            let outcomes: Vec<(u64, bool)> = demos
                .par_iter()
                .map(|d| (d.provenance.index, replay(&d.trajectory, &t, a.grasp_eps).success))
                .collect();
            let successes = outcomes.iter().filter(|(_, ok)| *ok).count();
            summary.replay = Some(ReplaySummary {
                task: t.to_string(),
                total: outcomes.len(),
                successes,
                rate: if outcomes.is_empty() { 1.0 } else { successes as f64 / outcomes.len() as f64 },
                failed_indices: outcomes.iter().filter(|(_, ok)| !ok).map(|(i, _)| *i).collect(),
            });
        }
    }
    summary.passed = summary.regeneration_errors.is_empty()
        && summary.invariants.all_passed()
        && summary.shard_mismatches.is_empty()
        && summary.replay.as_ref().is_none_or(|r| r.successes == r.total);

    if let Some(p) = &a.report {
        write_json(p, &summary)?;
    }
    println!(
        "invariants: {}/{} demos pass",
        summary.invariants.passed, summary.invariants.total
    );
    for (name, worst) in &summary.invariants.worst {
        println!("  {name:<28} worst residual {worst:.3e}");
    }
    for (i, why) in summary.invariants.failures.iter().take(10) {
        println!("  demo {i}: {why}");
    }
    for (i, why) in &summary.regeneration_errors {
        println!("regeneration failed for demo {i}: {why}");
    }
    println!(
        "shards: {}/{} byte-identical",
        summary.shards_checked - summary.shard_mismatches.len(),
        summary.shards_checked
    );
    for m in &summary.shard_mismatches {
        println!("  {m}");
    }
    if let Some(r) = &summary.replay {
        println!("replay ({}): {}/{} succeed ({:.1}%)", r.task, r.successes, r.total, 100.0 * r.rate);
    }
    println!("{}", if summary.passed { "PASS" } else { "FAIL" });
    Ok(if summary.passed { exit::OK } else { exit::VERIFICATION })
}

pub fn stats(a: StatsArgs) -> Result<u8> {
    let data = import_dataset(&a.dataset)?;
    let s = dataset_stats(&data);
    println!("{s}");
    if let Some(p) = &a.json {
        write_json(p, &s)?;
    }
    Ok(exit::OK)
}

#[derive(Debug, Serialize)]
struct BenchResult {
    task: String,
    count: usize,
    threads: usize,
    single_thread_s: f64,
    multi_thread_s: f64,
    serialize_s: f64,
    demos: usize,
    frames: usize,
}

pub fn bench(a: BenchArgs) -> Result<u8> {
    let task = task(&a.task)?;
    ensure!(a.count > 0, "--count must be at least 1");
    let gt = task.ground_truth()?;
    let mut spec = task.spec();
    spec.count = a.count;
    spec.seed = a.seed;
    let source = bimaug_core::augment::AugmentationSource::new(
        gt,
        task.template(),
        task.demo_config(),
        &GroundingConfig::default(),
        Plane::yz(),
    )?;
    let options = AugmentOptions::from_spec(&spec);
    let planner = bimaug_core::augment::LinearPlanner;

    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    let t0 = Instant::now();
    single.install(|| generate_dataset(&source, &spec, &options, &planner))?;
    let single_s = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let report = generate_dataset(&source, &spec, &options, &planner)?;
    let multi_s = t0.elapsed().as_secs_f64();

    let dir = std::env::temp_dir().join(format!("bimaug-bench-{}", std::process::id()));
    let t0 = Instant::now();
    export_dataset(&report.demos, &dir, &ExportOptions::default(), SourceInfo::default())?;
    let serialize_s = t0.elapsed().as_secs_f64();
    let _ = std::fs::remove_dir_all(&dir);

    let frames: usize = report.demos.iter().map(|d| d.trajectory.len()).sum();
    let r = BenchResult {
        task: task.to_string(),
        count: a.count,
        threads: rayon::current_num_threads(),
        single_thread_s: single_s,
        multi_thread_s: multi_s,
        serialize_s,
        demos: report.demos.len(),
        frames,
    };
    println!("{task}: {} demos, {} frames", r.demos, r.frames);
    println!("  augment + verify, 1 thread   {:>9.3} s  ({:.0} demos/s)", single_s, a.count as f64 / single_s);
    println!(
        "  augment + verify, {:>2} threads {:>9.3} s  ({:.0} demos/s)",
        r.threads,
        multi_s,
        a.count as f64 / multi_s
    );
    println!("  serialize                    {:>9.3} s", serialize_s);
    if let Some(p) = &a.json {
        write_json(p, &r)?;
    }
    Ok(exit::OK)
}

fn read_record(line: Option<std::io::Result<String>>, what: &str) -> Result<Pose> {
    let line = line.with_context(|| format!("missing {what} line"))??;
    let v: Vec<f64> = line
        .split_whitespace()
        .map(|s| s.parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("{what}: not a list of reals"))?;
    let rec: [f64; 12] = v
        .try_into()
        .map_err(|v: Vec<f64>| anyhow::anyhow!("{what}: expected 12 reals, got {}", v.len()))?;
    Ok(Pose::from_record(&rec)?)
}

pub fn plan_linear() -> Result<u8> {
    use bimaug_core::augment::MotionPlanner;
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    let start = read_record(lines.next(), "start")?;
    let goal = read_record(lines.next(), "goal")?;
    let count: usize = lines
        .next()
        .context("missing count line")??
        .trim()
        .parse()
        .context("count: not an integer")?;
    let poses = bimaug_core::augment::LinearPlanner.plan(&start, &goal, count)?;
    let mut out = std::io::stdout().lock();
    for p in poses {
        let rec = p.to_record();
        let line: Vec<String> = rec.iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(exit::OK)
}
