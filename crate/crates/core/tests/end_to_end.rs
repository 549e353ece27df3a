use mca_core::evaluation::{micro_f1, run_sweep, EvalCounts};
use mca_core::geometry::plane_induced_homography;
use mca_core::pipeline::{prepare_frames, run_pair};
use mca_core::synth::{generate_scene, Scene, SceneSpec};
use mca_core::{Homography, Metric, PipelineParams, SweepConfig};

fn mid_height_homography(scene: &Scene) -> Homography {
    let (a, b) = (scene.calibration(1).unwrap(), scene.calibration(2).unwrap());
    plane_induced_homography(a, b, 0.5 * scene.spec.person_height).unwrap()
}

fn counts(spec: &SceneSpec, config: SweepConfig) -> EvalCounts {
    let scene = generate_scene(spec).unwrap();
    let h = mid_height_homography(&scene);
    let params = PipelineParams::default();
    let frames = prepare_frames(&scene.frame_inputs(1, 2), &h, &params);
    run_pair(&frames, &h, &config, &params).iter().map(|r| r.counts).sum()
}

fn best_f1(spec: &SceneSpec) -> f64 {
    let scene = generate_scene(spec).unwrap();
    let h = mid_height_homography(&scene);
    let report = run_sweep(
        (1, 2),
        &scene.frame_inputs(1, 2),
        &h,
        &SweepConfig::grid(),
        &PipelineParams::default(),
    );
    report.best().unwrap().metrics.f1
}

#[test]
fn clean_scenes_are_perfect_under_both_metrics() {
    for seed in 0..10 {
        let spec = SceneSpec {
            seed,
            ..SceneSpec::default()
        };
        for metric in Metric::ALL {
            for coeff in [0.0, 10.0] {
                let config = SweepConfig {
                    loftr_threshold: 0.0,
                    distance_coefficient: coeff,
                    metric,
                };
                let c = counts(&spec, config);
                assert!(c.tp > 0);
                assert_eq!((c.fp, c.fn_), (0, 0), "seed {seed} {metric} coeff {coeff}");
            }
        }
    }
}

#[test]
fn high_threshold_removes_all_clutter() {
    for seed in 0..10 {
        let spec = SceneSpec {
            seed,
            clutter_rate: 200,
            ..SceneSpec::default()
        };
        let config = SweepConfig {
            loftr_threshold: 0.6,
            distance_coefficient: 0.0,
            metric: Metric::Bayesian,
        };
        let c = counts(&spec, config);
        assert_eq!((c.fp, c.fn_), (0, 0), "seed {seed}");
    }
}

#[test]
fn clutter_hurts_without_filtering() {
    let hurt = (0..10)
        .filter(|&seed| {
            let spec = SceneSpec {
                seed,
                clutter_rate: 200,
                ..SceneSpec::default()
            };
            let config = SweepConfig {
                loftr_threshold: 0.0,
                distance_coefficient: 0.0,
                metric: Metric::Bayesian,
            };
            micro_f1(&counts(&spec, config)).f1 < 1.0
        })
        .count();
    assert!(hurt >= 3, "clutter degraded only {hurt} of 10 scenes");
}

#[test]
fn more_clutter_never_raises_best_f1() {
    for seed in 0..20 {
        let f1s: Vec<f64> = [0, 40, 200]
            .into_iter()
            .map(|clutter_rate| {
                best_f1(&SceneSpec {
                    seed,
                    clutter_rate,
                    n_frames: 10,
                    ..SceneSpec::default()
                })
            })
            .collect();
        assert!(f1s.windows(2).all(|w| w[1] <= w[0]), "seed {seed}: {f1s:?}");
    }
}

#[test]
fn mild_noise_still_associates() {
    let spec = SceneSpec {
        seed: 3,
        noise_px: 1.5,
        clutter_rate: 50,
        ..SceneSpec::default()
    };
    let config = SweepConfig {
        loftr_threshold: 0.4,
        distance_coefficient: 10.0,
        metric: Metric::MultiFrame,
    };
    let m = micro_f1(&counts(&spec, config));
    assert!(m.f1 > 0.95, "{m:?}");
}
