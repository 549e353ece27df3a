//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. The dataset-dependent ordinal check runs only when
//! `MCA_WILDTRACK_ROOT` and `MCA_MATCHES_DIR` point at real data.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use mca_core::assignment::hungarian;
use mca_core::correspondence::{KeypointMatch, MatchSet, Provenance};
use mca_core::evaluation::{f1_score, run_sweep, BENCHMARK_CAMERA_PAIRS};
use mca_core::geometry::{
    estimate_homography_ransac, generate_ground_grid, plane_induced_homography, rodrigues, rotation_to_rvec,
    symmetric_transfer_error, GroundGrid, ImageSize, RansacParams,
};
use mca_core::pipeline::{prepare_frames, run_pair};
use mca_core::refactor::{refactor_matches, RefactorParams};
use mca_core::synth::{generate_scene, Scene, SceneSpec};
use mca_core::{EvalCounts, Homography, Metric, PipelineParams, SweepConfig};
use nalgebra::{DMatrix, Matrix3, Point2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

/// (camera pair, precision %, recall %, f-score %) of the reference results.
const REFERENCE_ROWS: [((u32, u32), f64, f64, f64); 8] = [
    ((1, 4), 98.72, 97.05, 97.88),
    ((1, 7), 75.70, 98.14, 85.47),
    ((4, 7), 42.79, 94.33, 58.87),
    ((1, 6), 40.57, 91.40, 56.20),
    ((5, 7), 25.03, 94.23, 39.56),
    ((6, 7), 19.32, 78.88, 31.04),
    ((2, 3), 17.22, 93.96, 29.10),
    ((5, 6), 13.34, 96.38, 23.44),
];
const TABLE_TOLERANCE_PP: f64 = 0.01;

fn table_arithmetic() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    for (pair, p, r, f) in REFERENCE_ROWS {
        let dev = (100.0 * f1_score(p / 100.0, r / 100.0) - f).abs();
        worst = worst.max(dev);
        if dev >= TABLE_TOLERANCE_PP {
            bad.push(pair);
        }
    }
    let elapsed = start.elapsed();
    check(
        bad.is_empty() && elapsed < Duration::from_secs(1),
        format!(
            "{}/8 rows within {TABLE_TOLERANCE_PP} pp (max deviation {worst:.4} pp) in {elapsed:.2?}",
            8 - bad.len()
        ),
    )
}

/// Exhaustive minimum over injective maps from the shorter side.
fn brute_force_min(cost: &DMatrix<f64>) -> f64 {
    let m = if cost.nrows() > cost.ncols() {
        cost.transpose()
    } else {
        cost.clone()
    };
    fn go(m: &DMatrix<f64>, row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if row == m.nrows() {
            *best = best.min(acc);
            return;
        }
        for c in 0..m.ncols() {
            if !used[c] {
                used[c] = true;
                go(m, row + 1, used, acc + m[(row, c)], best);
                used[c] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(&m, 0, &mut vec![false; m.ncols()], 0.0, &mut best);
    best
}

fn hungarian_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut square, mut mismatches) = (0, 0);
    for trial in 0..1000 {
        let rows = rng.random_range(1..=7);
        let cols = if trial % 3 == 0 { rows } else { rng.random_range(1..=9) };
        if rows.min(cols) > 7 {
            continue;
        }
        square += usize::from(rows == cols);
        // dyadic values keep every sum exact, so equality is meaningful
        let cost = DMatrix::from_fn(rows, cols, |_, _| f64::from(rng.random_range(0u32..4096)) / 64.0);
        let pairs = hungarian(&cost).expect("finite costs");
        let total: f64 = pairs.iter().map(|&(r, c)| cost[(r, c)]).sum();
        if pairs.len() != rows.min(cols) || total != brute_force_min(&cost) {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        mismatches == 0 && elapsed < Duration::from_secs(10),
        format!("1000 matrices ({square} square), {mismatches} differ from exhaustive minimum, in {elapsed:.2?}"),
    )
}

fn random_homography(rng: &mut ChaCha8Rng) -> Homography {
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let m = Matrix3::new(
        1.0 + u(-0.2, 0.2),
        u(-0.2, 0.2),
        u(-100.0, 100.0),
        u(-0.2, 0.2),
        1.0 + u(-0.2, 0.2),
        u(-100.0, 100.0),
        u(-1e-4, 1e-4),
        u(-1e-4, 1e-4),
        1.0,
    );
    Homography::from_matrix(m).expect("near-identity matrix is invertible")
}

fn homography_recovery() -> Outcome {
    const TRIALS: u64 = 200;
    const THRESHOLD: f64 = 10.0;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    let mut min_inliers = usize::MAX;
    for trial in 0..TRIALS {
        let truth = random_homography(&mut rng);
        let truth_inv = truth.inverse().unwrap();
        let point = |rng: &mut ChaCha8Rng| Point2::new(rng.random_range(0.0..1280.0), rng.random_range(0.0..720.0));
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for _ in 0..100 {
            let p = point(&mut rng);
            src.push(p);
            dst.push(truth.project(&p).unwrap());
        }
        let mut outliers = 0;
        while outliers < 30 {
            let (p, q) = (point(&mut rng), point(&mut rng));
            // a "uniform outlier" that happens to fit the truth is an inlier
            let err = symmetric_transfer_error(&truth.matrix, &truth_inv.matrix, &p, &q);
            if err < 2.0 * THRESHOLD {
                continue;
            }
            src.push(p);
            dst.push(q);
            outliers += 1;
        }
        let params = RansacParams {
            threshold_px: THRESHOLD,
            seed: trial,
            ..RansacParams::default()
        };
        let Ok(fit) = estimate_homography_ransac(&src, &dst, &params) else {
            failures += 1;
            continue;
        };
        let h = &fit.homography;
        let err = src[..100]
            .iter()
            .zip(&dst[..100])
            .map(|(p, q)| h.project(p).map_or(f64::INFINITY, |r| (r - q).norm()))
            .fold(0.0, f64::max);
        worst = worst.max(err);
        min_inliers = min_inliers.min(h.inlier_count);
        if err >= 1e-6 || h.inlier_count < 100 {
            failures += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        failures == 0,
        format!("{TRIALS} trials, {failures} failed; worst inlier error {worst:.2e} px, min inlier_count {min_inliers}, in {elapsed:.2?}"),
    )
}

fn rodrigues_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let axis = loop {
            let v = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                break v / n;
            }
        };
        let rvec = axis * rng.random_range(0.0..std::f64::consts::PI);
        worst = worst.max((rotation_to_rvec(&rodrigues(&rvec)) - rvec).norm());
    }
    check(
        worst < 1e-9,
        format!("1000 rotation vectors, worst round-trip error {worst:.2e}"),
    )
}

fn grid_cardinality() -> Outcome {
    match generate_ground_grid(&GroundGrid::default()) {
        Ok(points) => check(points.len() == 691_200, format!("{} points", points.len())),
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

fn refactor_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut differing = 0;
    for frame in 0..100 {
        let h = random_homography(&mut rng);
        let matches = (0..200)
            .map(|_| {
                let mut p = || Point2::new(rng.random_range(-50.0..1330.0), rng.random_range(-50.0..770.0));
                let (a, b) = (p(), p());
                KeypointMatch::new(a, b, rng.random_range(0.0..=1.0)).unwrap()
            })
            .collect();
        let size = ImageSize::new(1280, 720);
        let ms = MatchSet::new(frame, (1, size), (4, size), matches, Provenance::File).unwrap();
        let out = refactor_matches(&ms, &h, &RefactorParams::new(0.0));
        let bits = |m: &MatchSet| {
            m.matches
                .iter()
                .flat_map(|k| [k.pt_a.x, k.pt_a.y, k.pt_b.x, k.pt_b.y, k.confidence].map(f64::to_bits))
                .collect::<Vec<_>>()
        };
        let same_meta = (
            out.frame_id,
            out.camera_a,
            out.camera_b,
            out.size_a,
            out.size_b,
            out.provenance,
        ) == (
            ms.frame_id,
            ms.camera_a,
            ms.camera_b,
            ms.size_a,
            ms.size_b,
            ms.provenance,
        );
        if !same_meta || bits(&out) != bits(&ms) {
            differing += 1;
        }
    }
    check(
        differing == 0,
        format!("100 match sets x 200 matches, {differing} not bitwise identical"),
    )
}

fn mid_height_counts(scene: &Scene, config: &SweepConfig) -> EvalCounts {
    let (a, b) = (scene.calibration(1).unwrap(), scene.calibration(2).unwrap());
    let h = plane_induced_homography(a, b, 0.5 * scene.spec.person_height).unwrap();
    let params = PipelineParams::default();
    let frames = prepare_frames(&scene.frame_inputs(1, 2), &h, &params);
    run_pair(&frames, &h, config, &params).iter().map(|r| r.counts).sum()
}

/// Scene seed of the end-to-end oracle. In this scene some people leave
/// one camera's view, so clutter can produce wrong pairs.
const E2E_SEED: u64 = 2;
const E2E_CLUTTER: usize = 200;

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let clean_spec = SceneSpec {
        seed: E2E_SEED,
        ..SceneSpec::default()
    };
    let clean = generate_scene(&clean_spec).unwrap();
    let mut notes = Vec::new();
    let mut ok = true;
    for metric in Metric::ALL {
        for coeff in [0.0, 10.0] {
            let cfg = SweepConfig {
                loftr_threshold: 0.0,
                distance_coefficient: coeff,
                metric,
            };
            let c = mid_height_counts(&clean, &cfg);
            let f1 = mca_core::evaluation::micro_f1(&c).f1;
            ok &= f1 == 1.0;
            notes.push(format!("clean {metric} coeff {coeff}: {:.2}%", 100.0 * f1));
        }
    }

    let cluttered = generate_scene(&SceneSpec {
        clutter_rate: E2E_CLUTTER,
        ..clean_spec
    })
    .unwrap();
    let (a, b) = (cluttered.calibration(1).unwrap(), cluttered.calibration(2).unwrap());
    let h = plane_induced_homography(a, b, 0.5 * cluttered.spec.person_height).unwrap();
    let report = run_sweep(
        (1, 2),
        &cluttered.frame_inputs(1, 2),
        &h,
        &SweepConfig::grid(),
        &PipelineParams::default(),
    );
    let best_high = report
        .rows
        .iter()
        .filter(|r| r.config.loftr_threshold == 0.6)
        .map(|r| r.metrics.f1)
        .fold(0.0, f64::max);
    ok &= best_high == 1.0;
    notes.push(format!("clutter best@0.6: {:.2}%", 100.0 * best_high));
    for r in report
        .rows
        .iter()
        .filter(|r| r.config.loftr_threshold == 0.0 && r.config.distance_coefficient == 0.0)
    {
        ok &= r.metrics.f1 < best_high;
        notes.push(format!("clutter {}@0/0: {:.2}%", r.config.metric, 100.0 * r.metrics.f1));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(60);
    check(ok, format!("{}; in {elapsed:.2?}", notes.join(", ")))
}

fn sweep_shape() -> Outcome {
    let per_pair = SweepConfig::grid().len();
    let scene = generate_scene(&SceneSpec {
        n_cameras: 7,
        n_frames: 2,
        keypoints_per_person: 5,
        ..SceneSpec::default()
    })
    .unwrap();
    let params = PipelineParams::default();
    let mut total = 0;
    for (a, b) in BENCHMARK_CAMERA_PAIRS {
        let (ca, cb) = (scene.calibration(a).unwrap(), scene.calibration(b).unwrap());
        let h = plane_induced_homography(ca, cb, 0.9).unwrap();
        total += run_sweep((a, b), &scene.frame_inputs(a, b), &h, &SweepConfig::grid(), &params)
            .rows
            .len();
    }
    check(
        per_pair == 48 && total == 384,
        format!("{per_pair} configs per pair, {total} rows over the 8 pairs"),
    )
}

fn dataset_ordinal() -> Outcome {
    let (Ok(root), Ok(matches)) = (std::env::var("MCA_WILDTRACK_ROOT"), std::env::var("MCA_MATCHES_DIR")) else {
        return Outcome::Skip(
            "not applicable: set MCA_WILDTRACK_ROOT and MCA_MATCHES_DIR to run on the recorded dataset".into(),
        );
    };
    let out = tempfile::tempdir().unwrap();
    let cfg = mca::config::RunConfig {
        data: Some(mca::config::DataConfig {
            root: Some(root.into()),
            matches: Some(matches.into()),
            ..Default::default()
        }),
        out: out.path().to_path_buf(),
        ..Default::default()
    };
    match mca::commands::cmd_sweep(&cfg) {
        Ok(outcome) => {
            let mut best: Vec<((u32, u32), f64)> = outcome
                .reports
                .iter()
                .filter_map(|r| r.best().map(|b| (r.pair, b.metrics.f1)))
                .collect();
            best.sort_by(|x, y| y.1.total_cmp(&x.1));
            let first = best.first().map(|b| b.0);
            let last = best.last().map(|b| b.0);
            check(
                best.len() == 8 && first == Some((1, 4)) && last == Some((5, 6)),
                format!("ranking by best f1: {:?}", best.iter().map(|b| b.0).collect::<Vec<_>>()),
            )
        }
        Err(e) => Outcome::Fail(format!("{e:#}")),
    }
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("table arithmetic", table_arithmetic),
        ("hungarian oracle equivalence", hungarian_oracle),
        ("homography recovery", homography_recovery),
        ("rodrigues round-trip", rodrigues_round_trip),
        ("grid cardinality", grid_cardinality),
        ("no-refactoring identity", refactor_identity),
        ("end-to-end synthetic oracle", end_to_end),
        ("sweep shape", sweep_shape),
        ("dataset ordinal check", dataset_ordinal),
    ];
    let mut failed = 0;
    println!("acceptance criteria");
    for (k, (name, run)) in criteria.iter().enumerate() {
        let (tag, detail) = match run() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} [{}] {name}: {detail}", k + 1);
    }
    println!("{} criteria, {failed} failed", criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
