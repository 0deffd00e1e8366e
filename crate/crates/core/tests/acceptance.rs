//! One PASS/FAIL line per acceptance criterion. Each oracle recomputes its
//! quantity from the outputs directly instead of trusting the built-in checks.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bimaug_core::augment::{
    augment_demo, generate_dataset, AugmentOptions, AugmentationSource, AugmentedDemo, LinearPlanner, PieceKind,
    StepRule,
};
use bimaug_core::dataset::{decode_action, encode_action, export_dataset, ExportOptions, SourceInfo};
use bimaug_core::geometry::{orthonormality_residual, reflect_pose, reflect_transform, so3_exp};
use bimaug_core::grounding::{mirror_trajectory, object_frames_from_masks, GroundingConfig};
use bimaug_core::parse::{hand_to_ee, parse_demo, HandFrame, ParseConfig, NUM_LANDMARKS};
use bimaug_core::synthetic::{default_camera, render_bundle, RenderOptions, SyntheticTask};
use bimaug_core::verify::{check_invariants, pose_residual, replay, VerifyOptions};
use bimaug_core::{ArmAction, Gripper, Plane, Pose, StateActionTrajectory, Vec3, NUM_ARMS};

const COUNT: usize = 1000;
const TOL: f64 = 1e-9;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn source(task: SyntheticTask) -> AugmentationSource {
    AugmentationSource::new(
        task.ground_truth().expect("ground truth settles"),
        task.template(),
        task.demo_config(),
        &GroundingConfig::default(),
        Plane::yz(),
    )
    .expect("ground truth grounds")
}

fn random_pose(rng: &mut ChaCha8Rng, scale: f64) -> Pose {
    let w = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * 3.0;
    let t = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale;
    Pose::from_parts(so3_exp(&w), t)
}

/// Generated datasets shared by several criteria.
struct Run {
    task: SyntheticTask,
    source: AugmentationSource,
    options: AugmentOptions,
    demos: Vec<AugmentedDemo>,
    failed: usize,
    seconds: f64,
}

fn generate(task: SyntheticTask, threads: usize) -> Run {
    let source = source(task);
    let mut spec = task.spec();
    spec.count = COUNT;
    let options = AugmentOptions::from_spec(&spec);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let t0 = Instant::now();
    let report = pool.install(|| generate_dataset(&source, &spec, &options, &LinearPlanner));
    let seconds = t0.elapsed().as_secs_f64();
    let (demos, failed) = match report {
        Ok(r) => {
            let failed = r.failures.len();
            (r.demos, failed)
        }
        Err(e) => {
            eprintln!("{task}: generation failed: {e}");
            (Vec::new(), COUNT)
        }
    };
    Run {
        task,
        source,
        options,
        demos,
        failed,
        seconds,
    }
}

fn throughput(pour: &Run) -> Outcome {
    let ok = pour.demos.len() + pour.failed == COUNT && pour.seconds < 60.0;
    let stretch = if pour.seconds < 15.0 { "met" } else { "missed" };
    outcome(
        ok,
        format!(
            "{COUNT} pour augmentations on 1 thread in {:.2} s (limit 60 s, stretch 15 s {stretch})",
            pour.seconds
        ),
    )
}

fn equivariance(runs: &[Run]) -> Outcome {
    let mut steps = 0usize;
    let mut worst = 0.0f64;
    for run in runs {
        for d in &run.demos {
            let src = run.source.prepared(d.provenance.mirrored).unwrap();
            for j in 0..NUM_ARMS {
                for p in d.provenance.layout[j].iter().filter(|p| p.kind.is_skill()) {
                    let s0 = p.source_start.unwrap();
                    let (fa, fs) = if p.frame == 0 {
                        (Pose::identity(), Pose::identity())
                    } else {
                        (d.provenance.objects[p.frame - 1], *src.config.frame(p.frame))
                    };
                    for t in p.start..=p.end {
                        let got = fa.inverse().compose(d.trajectory.pose(t, j));
                        let want = fs.inverse().compose(src.trajectory.pose(s0 + t - p.start, j));
                        let (dt, dr) = got.distance_to(&want);
                        worst = worst.max(dt).max(dr);
                        steps += 1;
                    }
                }
            }
        }
    }
    outcome(
        steps >= 10_000 && worst < TOL,
        format!("{steps} skill steps, worst EE-to-frame residual {worst:.2e} (limit {TOL:.0e})"),
    )
}

fn identity() -> Outcome {
    let mut worst = 0.0f64;
    let mut grippers_equal = true;
    let mut lengths_equal = true;
    for task in SyntheticTask::ALL {
        let src = source(task);
        let options = AugmentOptions {
            steps: StepRule::DemoMatched,
            ..AugmentOptions::from_spec(&task.spec())
        };
        let out = augment_demo(&src.original, &vec![Pose::identity(); task.num_objects()], &options, &LinearPlanner)
            .unwrap();
        let demo = &src.original.trajectory;
        if out.trajectory.len() != demo.len() {
            lengths_equal = false;
            continue;
        }
        for t in 0..demo.len() {
            for j in 0..NUM_ARMS {
                worst = worst.max(pose_residual(out.trajectory.pose(t, j), demo.pose(t, j)));
                grippers_equal &= out.trajectory.gripper(t, j) == demo.gripper(t, j);
            }
        }
    }
    outcome(
        lengths_equal && grippers_equal && worst < TOL,
        format!("both tasks, worst action residual {worst:.2e}, grippers equal: {grippers_equal}, lengths equal: {lengths_equal}"),
    )
}

fn rigidity_residual(traj: &StateActionTrajectory, ownership: &[Vec<usize>]) -> (f64, usize) {
    let mut worst = 0.0f64;
    let mut at = 0;
    for idx in ownership {
        let s0 = traj.state(0);
        for t in 1..traj.len() {
            let st = traj.state(t);
            for (a, &i) in idx.iter().enumerate() {
                for &k in &idx[a + 1..] {
                    let r = ((st[i] - st[k]).norm() - (s0[i] - s0[k]).norm()).abs();
                    if r > worst {
                        worst = r;
                        at = t;
                    }
                }
            }
        }
    }
    (worst, at)
}

fn rigidity(runs: &[Run]) -> Outcome {
    let mut worst = 0.0f64;
    let mut trajectories = 0;
    for run in runs {
        for d in &run.demos {
            let own = &run.source.prepared(d.provenance.mirrored).unwrap().config.ownership;
            worst = worst.max(rigidity_residual(&d.trajectory, own).0);
            trajectories += 1;
        }
    }

    // move one keypoint 1 mm away from a partner on the same object
    let run = &runs[0];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut detected = 0;
    let trials = 20;
    for _ in 0..trials {
        let d = &run.demos[rng.gen_range(0..run.demos.len())];
        let src = run.source.prepared(d.provenance.mirrored).unwrap();
        let own = &src.config.ownership[rng.gen_range(0..src.config.ownership.len())];
        let (i, k) = (own[0], own[1]);
        let t = rng.gen_range(1..d.trajectory.len());
        let mut bad = d.clone();
        let dir = (bad.trajectory.state(t)[i] - bad.trajectory.state(t)[k]).normalize();
        bad.trajectory.state_mut(t)[i] += 1e-3 * dir;
        let (r, at) = rigidity_residual(&bad.trajectory, &src.config.ownership);
        let report = check_invariants(src, &bad, &VerifyOptions::from(&run.options));
        let builtin = report.check("rigidity").is_some_and(|c| !c.passed && c.offending.contains(&t));
        if r > 0.5e-3 && at == t && builtin {
            detected += 1;
        }
    }
    outcome(
        trajectories > 0 && worst < TOL && detected == trials,
        format!(
            "{trajectories} trajectories, worst distance drift {worst:.2e}; 1 mm faults detected {detected}/{trials}"
        ),
    )
}

fn sync(runs: &[Run]) -> Outcome {
    let mut starts = 0;
    let mut worst = 0.0f64;
    let mut padding_ok = true;
    let len = |p: &bimaug_core::augment::Piece| p.end - p.start + 1;
    for run in runs {
        for d in &run.demos {
            let src = &run.source.prepared(d.provenance.mirrored).unwrap().trajectory;
            let layout = &d.provenance.layout;
            let syncs: [Vec<usize>; NUM_ARMS] = std::array::from_fn(|j| {
                layout[j]
                    .iter()
                    .enumerate()
                    .filter(|(i, p)| p.kind == PieceKind::SkillSync && (*i == 0 || layout[j][i - 1].kind != PieceKind::SkillSync))
                    .map(|(i, _)| i)
                    .collect()
            });
            if syncs[0].len() != syncs[1].len() {
                padding_ok = false;
                continue;
            }
            let mut previous = [0usize; NUM_ARMS];
            let mut total_pad = [0usize; NUM_ARMS];
            for n in 0..syncs[0].len() {
                let pieces: [&bimaug_core::augment::Piece; NUM_ARMS] = std::array::from_fn(|j| &layout[j][syncs[j][n]]);
                if pieces[0].start != pieces[1].start {
                    padding_ok = false;
                }
                let t = pieces[0].start;
                let s = pieces[0].source_start.unwrap();
                let got = d.trajectory.pose(t, 0).between(d.trajectory.pose(t, 1));
                let want = src.pose(s, 0).between(src.pose(s, 1));
                worst = worst.max(pose_residual(&got, &want));
                starts += 1;
                // unpadded frames each arm produced since the previous sync start
                let own: [usize; NUM_ARMS] = std::array::from_fn(|j| {
                    layout[j][previous[j]..syncs[j][n]].iter().filter(|p| p.kind != PieceKind::Padding).map(len).sum()
                });
                let pad: [usize; NUM_ARMS] = std::array::from_fn(|j| {
                    layout[j][previous[j]..syncs[j][n]].iter().filter(|p| p.kind == PieceKind::Padding).map(len).sum()
                });
                let longest = own[0].max(own[1]);
                for j in 0..NUM_ARMS {
                    padding_ok &= pad[j] == longest - own[j];
                    total_pad[j] += pad[j];
                }
                previous = std::array::from_fn(|j| syncs[j][n]);
            }
            for j in 0..NUM_ARMS {
                let tail: usize = layout[j][previous[j]..].iter().filter(|p| p.kind == PieceKind::Padding).map(len).sum();
                total_pad[j] += tail;
            }
            padding_ok &= total_pad == d.provenance.padding;
        }
    }
    outcome(
        starts > 0 && worst < TOL && padding_ok,
        format!("{starts} sync starts, worst inter-EE residual {worst:.2e}; padding equals step-count difference: {padding_ok}"),
    )
}

fn mirror() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let plane = Plane::yz();
    let mut involution = 0.0f64;
    for _ in 0..10_000 {
        let p = random_pose(&mut rng, 1.0);
        let q = Plane::new(Vec3::new(rng.gen(), rng.gen(), rng.gen::<f64>() + 0.1), rng.gen()).unwrap();
        involution = involution.max(pose_residual(&reflect_pose(&reflect_pose(&p, &q), &q), &p));
    }
    let mut commute = 0.0f64;
    let mut roles_swapped = true;
    for task in SyntheticTask::ALL {
        let src = source(task);
        let gt = &src.original.trajectory;
        let twice = mirror_trajectory(&mirror_trajectory(gt, &plane), &plane);
        for t in 0..gt.len() {
            for j in 0..NUM_ARMS {
                involution = involution.max(pose_residual(twice.pose(t, j), gt.pose(t, j)));
            }
            for (a, b) in twice.state(t).iter().zip(gt.state(t)) {
                involution = involution.max((a - b).amax());
            }
        }
        let mirrored = src.prepared(true).unwrap();
        let options = AugmentOptions::from_spec(&task.spec());
        for _ in 0..25 {
            let deltas: Vec<Pose> = (0..task.num_objects())
                .map(|k| {
                    let c = src.original.config.frame(k + 1).translation;
                    let shift = Vec3::new(rng.gen_range(-0.08..0.08), rng.gen_range(-0.08..0.08), 0.0);
                    Pose::from_translation(shift).compose(&Pose::yaw_about(&c, rng.gen_range(-0.4..0.4)))
                })
                .collect();
            let mdeltas: Vec<Pose> = deltas.iter().map(|d| reflect_transform(d, &plane)).collect();
            let (Ok(a), Ok(b)) = (
                augment_demo(&src.original, &deltas, &options, &LinearPlanner),
                augment_demo(mirrored, &mdeltas, &options, &LinearPlanner),
            ) else {
                commute = f64::INFINITY;
                continue;
            };
            let ma = mirror_trajectory(&a.trajectory, &plane);
            if ma.len() != b.trajectory.len() {
                commute = f64::INFINITY;
                continue;
            }
            for t in 0..ma.len() {
                for j in 0..NUM_ARMS {
                    commute = commute.max(pose_residual(ma.pose(t, j), b.trajectory.pose(t, j)));
                    roles_swapped &= ma.gripper(t, j) == b.trajectory.gripper(t, j);
                }
                for (p, q) in ma.state(t).iter().zip(b.trajectory.state(t)) {
                    commute = commute.max((p - q).amax());
                }
            }
            for j in 0..NUM_ARMS {
                roles_swapped &= a.events.arms[j] == b.events.arms[1 - j];
            }
        }
        let (eo, em) = (&src.original.grounding.events, &mirrored.grounding.events);
        for j in 0..NUM_ARMS {
            roles_swapped &= eo.arms[j] == em.arms[1 - j];
        }
    }
    outcome(
        involution < 1e-12 && commute < TOL && roles_swapped,
        format!("involution residual {involution:.2e} (limit 1e-12), commutation residual {commute:.2e}, grasp logs swap arms: {roles_swapped}"),
    )
}

fn oracle_replay(runs: &[Run]) -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for run in runs {
        let ok = run.demos.iter().filter(|d| replay(&d.trajectory, &run.task, 0.03).success).count();
        // samples dropped by generation count as failures
        let rate = ok as f64 / COUNT as f64;
        passed &= rate >= 0.99;
        parts.push(format!("{}: {ok}/{COUNT} ({:.1}%, {} dropped)", run.task, 100.0 * rate, run.failed));
    }
    outcome(passed, parts.join(", "))
}

fn parse_round_trip() -> Outcome {
    let mut worst_t = 0.0f64;
    let mut worst_r = 0.0f64;
    let mut worst_ortho = 0.0f64;
    let mut proper = true;
    for task in SyntheticTask::ALL {
        let gt = task.ground_truth().unwrap();
        let (bundle, _) = render_bundle(&gt, &default_camera(), &RenderOptions::default());
        let parsed = match parse_demo(&bundle, &ParseConfig::default()) {
            Ok(p) => p.trajectory,
            Err(e) => return outcome(false, format!("{task}: {e}")),
        };
        if parsed.len() != gt.len() {
            return outcome(false, format!("{task}: {} frames, expected {}", parsed.len(), gt.len()));
        }
        for t in 0..gt.len() {
            for j in 0..NUM_ARMS {
                let (dt, dr) = parsed.pose(t, j).distance_to(gt.pose(t, j));
                worst_t = worst_t.max(dt);
                worst_r = worst_r.max(dr);
                let r = &parsed.pose(t, j).rotation;
                worst_ortho = worst_ortho.max(orthonormality_residual(r));
                proper &= r.determinant() > 0.0;
            }
            for (p, q) in parsed.state(t).iter().zip(gt.state(t)) {
                worst_t = worst_t.max((p - q).norm());
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut midpoint = 0.0f64;
    for _ in 0..10_000 {
        let mut landmarks = [Vec3::zeros(); NUM_LANDMARKS];
        for l in landmarks.iter_mut() {
            *l = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let hand = HandFrame { landmarks };
        let Ok(ee) = hand_to_ee(&hand) else { continue };
        midpoint = midpoint.max((ee.translation - (hand.thumb_tip() + hand.index_tip()) / 2.0).amax());
        worst_ortho = worst_ortho.max(orthonormality_residual(&ee.rotation));
        proper &= ee.rotation.determinant() > 0.0;
    }
    outcome(
        worst_t < 1e-6 && worst_r < 1e-6 && midpoint == 0.0 && worst_ortho < TOL && proper,
        format!(
            "worst {worst_t:.2e} m / {worst_r:.2e} rad; midpoint error {midpoint:.1e}; orthonormality {worst_ortho:.1e}, proper: {proper}"
        ),
    )
}

/// Render, parse, ground from masks, augment and export, all under `threads`.
fn pipeline(task: SyntheticTask, threads: usize, dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let gt = task.ground_truth().map_err(|e| e.to_string())?;
        let options = RenderOptions {
            depth_noise: 0.002,
            seed: 5,
            ..RenderOptions::default()
        };
        let (bundle, masks) = render_bundle(&gt, &default_camera(), &options);
        let traj = parse_demo(&bundle, &ParseConfig::default()).map_err(|e| e.to_string())?.trajectory;
        let config = object_frames_from_masks(&masks, &bundle.depth[0], &bundle.camera, &traj.keypoints)
            .map_err(|e| e.to_string())?;
        let source = AugmentationSource::new(traj, task.template(), config, &GroundingConfig::default(), Plane::yz())
            .map_err(|e| e.to_string())?;
        let mut spec = task.spec();
        spec.count = 200;
        spec.seed = 17;
        let report = generate_dataset(&source, &spec, &AugmentOptions::from_spec(&spec), &LinearPlanner)
            .map_err(|e| e.to_string())?;
        let export = ExportOptions {
            seed: 17,
            demos_per_shard: 32,
            ..ExportOptions::default()
        };
        export_dataset(&report.demos, dir, &export, SourceInfo::default()).map_err(|e| e.to_string())?;
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
            .map_err(|e| e.to_string())?
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        Ok(files)
    })
}

fn determinism() -> Outcome {
    let mut identical = true;
    let mut parts = Vec::new();
    for task in SyntheticTask::ALL {
        let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
        let runs: Vec<_> = [1, 4, 4].iter().zip(&dirs).map(|(&n, d)| pipeline(task, n, d.path())).collect();
        match (&runs[0], &runs[1], &runs[2]) {
            (Ok(a), Ok(b), Ok(c)) => {
                let same = a == b && b == c;
                identical &= same;
                let bytes: usize = a.iter().map(|(_, f)| f.len()).sum();
                parts.push(format!("{task}: {} files, {bytes} bytes, identical: {same}", a.len()));
            }
            _ => {
                identical = false;
                parts.push(format!("{task}: pipeline failed"));
            }
        }
    }
    outcome(identical, format!("runs at 1, 4, 4 threads; {}", parts.join("; ")))
}

fn action_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    let mut grippers = true;
    for _ in 0..10_000 {
        let action: [ArmAction; NUM_ARMS] = std::array::from_fn(|_| {
            ArmAction::new(random_pose(&mut rng, 1.0), Gripper::from_closed(rng.gen()))
        });
        match decode_action(&encode_action(&action)) {
            Ok(back) => {
                for j in 0..NUM_ARMS {
                    worst = worst.max(pose_residual(&back[j].pose, &action[j].pose));
                    grippers &= back[j].gripper == action[j].gripper;
                }
            }
            Err(_) => worst = f64::INFINITY,
        }
    }
    let enc = encode_action(&[ArmAction::new(Pose::identity(), Gripper::Open); NUM_ARMS]);
    let six = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
    let identity_ok = enc[3..9] == six && enc[13..19] == six;
    outcome(
        worst < TOL && grippers && identity_ok,
        format!("10000 random actions, worst residual {worst:.2e}, grippers kept: {grippers}; identity encodes to (1,0,0,0,1,0): {identity_ok}"),
    )
}

fn main() -> ExitCode {
    println!("acceptance criteria");
    let pour = generate(SyntheticTask::Pour, 1);
    let handover = generate(SyntheticTask::Handover, 1);
    let runs = [pour, handover];
    let results = [
        ("throughput", throughput(&runs[0])),
        ("equivariance", equivariance(&runs)),
        ("identity fixed point", identity()),
        ("rigidity", rigidity(&runs)),
        ("synchronization", sync(&runs)),
        ("mirroring", mirror()),
        ("oracle replay", oracle_replay(&runs)),
        ("parse round trip", parse_round_trip()),
        ("determinism", determinism()),
        ("action encoding", action_round_trip()),
    ];
    let mut failed = 0;
    for (i, (name, r)) in results.iter().enumerate() {
        println!("criterion {:>2} {:<22} {}  {}", i + 1, name, if r.passed { "PASS" } else { "FAIL" }, r.detail);
        failed += usize::from(!r.passed);
    }
    println!("{} of {} criteria pass", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
