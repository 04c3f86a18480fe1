mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use cloudeye::model::{iou, BoundingBox, Detection, Frame, GroundTruth, GtObject, ScriptedModel, ScriptedModelConfig, Source};
use cloudeye::tracking::{fast_infer, KalmanTrack, Tracker, TrackerParams};
use common::*;
use proptest::prelude::*;
use rand::Rng;

fn det(b: BoundingBox<f64>) -> Detection<f64> {
    Detection::new(b, 0, 1.0, Source::Edge)
}

fn random_psd(r: &mut impl Rng) -> M7 {
    let a = M7::from_fn(|_, _| r.random_range(-1.0..1.0));
    a * a.transpose() + M7::identity() * 0.1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn predict_matches_dense_oracle(seed in any::<u64>(), cx in 20.0..300.0f64, cy in 20.0..200.0f64,
                                    area in 100.0..4000.0f64, ratio in 0.3..3.0f64,
                                    vx in -5.0..5.0f64, vy in -5.0..5.0f64, va in -10.0..10.0f64) {
        let params = TrackerParams::<f64>::default();
        let p0 = random_psd(&mut rng(seed));
        let x0 = V7::from_column_slice(&[cx, cy, area, ratio, vx, vy, va]);
        let mut t = KalmanTrack::from_parts(0, x0.as_slice().try_into().unwrap(), std::array::from_fn(|r| std::array::from_fn(|c| p0[(r, c)])), 0);
        t.predict(&params);
        let (x1, p1) = kf_predict(&x0, &p0, &params);
        for i in 0..7 {
            prop_assert!((t.state()[i] - x1[i]).abs() <= 1e-9 * (1.0 + x1[i].abs()));
        }
        let got = to_m7(t.covariance());
        prop_assert!((got - p1).abs().max() <= 1e-9 * (1.0 + p1.abs().max()));
        prop_assert!(got.trace() > p0.trace());
    }

    #[test]
    fn update_matches_gain_oracle(seed in any::<u64>(), dx in -8.0..8.0f64, dy in -8.0..8.0f64, grow in 0.8..1.25f64) {
        let params = TrackerParams::<f64>::default();
        let start = bx(100.0, 80.0, 130.0, 120.0);
        let mut t = KalmanTrack::new(seed, &det(start), &params);
        t.predict(&params);
        let x0 = V7::from_column_slice(t.state());
        let p0 = to_m7(t.covariance());
        let meas = bx(100.0 + dx, 80.0 + dy, 100.0 + dx + 30.0 * grow, 80.0 + dy + 40.0 * grow);
        t.update(&det(meas), &params);
        let (x1, p1) = kf_update(&x0, &p0, &measurement(&meas), &params);
        for i in 0..7 {
            prop_assert!((t.state()[i] - x1[i]).abs() <= 1e-7 * (1.0 + x1[i].abs()), "state {i}");
        }
        let got = to_m7(t.covariance());
        prop_assert!((got - p1).abs().max() <= 1e-7 * (1.0 + p1.abs().max()));
    }
}

#[test]
fn identity_measurement_shrinks_covariance() {
    let params = TrackerParams::<f64>::default();
    let mut t = KalmanTrack::new(0, &det(bx(50.0, 50.0, 80.0, 90.0)), &params);
    for _ in 0..5 {
        let predicted = t.predict(&params);
        let before = t.state().to_vec();
        let tr = to_m7(t.covariance()).trace();
        t.update(&det(predicted), &params);
        for i in 0..4 {
            assert!((t.state()[i] - before[i]).abs() < 1e-9 * (1.0 + before[i].abs()));
        }
        assert!(to_m7(t.covariance()).trace() < tr);
    }
}

#[test]
fn posterior_lies_between_prediction_and_measurement() {
    let params = TrackerParams::<f64>::default();
    let mut t = KalmanTrack::new(0, &det(bx(-10.0, 0.0, 10.0, 20.0)), &params);
    let pred = t.predict(&params);
    t.update(&det(bx(0.0, 0.0, 20.0, 20.0)), &params);
    let (pcx, _) = pred.center();
    let cx = t.state()[0];
    assert!(pcx < cx && cx < 10.0, "{pcx} < {cx} < 10");
}

#[test]
fn constant_velocity_error_decays() {
    let params = TrackerParams::<f64>::default();
    let at = |k: f64| bx(40.0 + 4.0 * k, 60.0 - 2.0 * k, 70.0 + 4.0 * k, 100.0 - 2.0 * k);
    let mut t = KalmanTrack::new(0, &det(at(0.0)), &params);
    let mut errs = Vec::new();
    for k in 1..40 {
        let p = t.predict(&params);
        let (tx, ty) = at(k as f64).center();
        let (px, py) = p.center();
        errs.push((px - tx).hypot(py - ty));
        t.update(&det(at(k as f64)), &params);
    }
    for w in errs[2..].windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "{errs:?}");
    }
    assert!(errs.last().unwrap() < &0.05);
}

#[test]
fn covariance_stays_psd_under_random_steps() {
    let params = TrackerParams::<f64>::default();
    let mut r = rng(41);
    let mut t = KalmanTrack::new(0, &det(bx(100.0, 100.0, 140.0, 150.0)), &params);
    for step in 0..2000 {
        if r.random_bool(0.5) {
            t.predict(&params);
        } else {
            let b = t.bbox();
            let j = |r: &mut rand_chacha::ChaCha8Rng| r.random_range(-6.0..6.0);
            let (x0, y0) = (b.x_min() + j(&mut r), b.y_min() + j(&mut r));
            let m = bx(x0, y0, x0 + r.random_range(10.0..80.0), y0 + r.random_range(10.0..80.0));
            t.update(&det(m), &params);
        }
        let p = to_m7(t.covariance());
        assert!(min_eigenvalue(&p) >= -1e-9 * p.abs().max().max(1.0), "step {step}");
    }
}

fn scripted(truth: Vec<GroundTruth>) -> ScriptedModel {
    let map: BTreeMap<u64, GroundTruth> = truth.into_iter().map(|g| (g.frame_id, g)).collect();
    ScriptedModel::new(ScriptedModelConfig::default(), Arc::new(map), vec![8], 2, 0).unwrap()
}

#[test]
fn warm_track_follows_moving_target() {
    let at = |k: u64| bx(20.0 + 5.0 * k as f64, 40.0, 60.0 + 5.0 * k as f64, 70.0);
    let truth: Vec<GroundTruth> = (0..30)
        .map(|k| GroundTruth {
            frame_id: k,
            objects: vec![GtObject { bbox: at(k), class_id: 0 }],
        })
        .collect();
    let model = scripted(truth);
    let mut tr = Tracker::new(TrackerParams::<f64>::default());
    tr.update(&[det(at(0))]);
    for k in 1..30 {
        let f = Frame::filled(k, 320, 240, [90, 90, 90]);
        let out = fast_infer(&f, &mut tr, &model).unwrap();
        assert_eq!(out.proposals, 1);
        assert_eq!(out.detections.len(), 1);
        assert!(iou(out.detections[0].bbox(), &at(k)) >= 0.9);
    }
}

#[test]
fn static_targets_one_proposal_each() {
    let boxes: Vec<_> = (0..10).map(|i| bx(10.0 + 30.0 * i as f64, 50.0, 30.0 + 30.0 * i as f64, 80.0)).collect();
    let truth: Vec<GroundTruth> = (0..100)
        .map(|k| GroundTruth {
            frame_id: k,
            objects: boxes.iter().map(|&b| GtObject { bbox: b, class_id: 0 }).collect(),
        })
        .collect();
    let model = scripted(truth);
    let mut tr = Tracker::new(TrackerParams::<f64>::default());
    tr.update(&boxes.iter().map(|&b| det(b)).collect::<Vec<_>>());
    for k in 1..100 {
        let out = fast_infer(&Frame::filled(k, 320, 240, [0, 0, 0]), &mut tr, &model).unwrap();
        assert_eq!(out.proposals, 10);
        assert_eq!(tr.len(), 10);
    }
}

#[test]
fn tracking_is_deterministic() {
    let run = || {
        let mut r = rng(9);
        let mut tr = Tracker::new(TrackerParams::<f64>::default());
        for _ in 0..50 {
            tr.predict();
            let dets: Vec<_> = random_boxes(&mut r, 4, 320.0, 240.0).into_iter().map(det).collect();
            tr.update(&dets);
        }
        tr.tracks().to_vec()
    };
    assert_eq!(run(), run());
}
