mod common;

use cloudeye::encode::{
    build_config_set, decode_bytes, decode_frame, encode_frame, plan_frame, uniform_size, weighted_bikmeans, EncodedFrame,
    ProfileParams, Rect, RoiPlan, HEADER_LEN,
};
use cloudeye::model::{Frame, GroundTruth};
use cloudeye::netsim::CloudModel;
use cloudeye::scene::{generate, SceneSpec};
use common::*;
use proptest::prelude::*;

fn scene(frames: u32, targets: u32, seed: u64) -> (Vec<Frame>, Vec<GroundTruth>) {
    let s = generate(&SceneSpec {
        frames,
        targets,
        seed,
        ..Default::default()
    })
    .unwrap();
    (s.frames, s.truth)
}

fn mae(a: &Frame, b: &Frame, r: &Rect, inside: bool) -> f64 {
    let (w, h) = a.dims();
    let mut sum = 0u64;
    let mut n = 0u64;
    for y in 0..h {
        for x in 0..w {
            let within = x >= r.x && x < r.x_end() && y >= r.y && y < r.y_end();
            if within == inside {
                let (p, q) = (a.pixel(x, y), b.pixel(x, y));
                sum += (0..3).map(|c| u64::from(p[c].abs_diff(q[c]))).sum::<u64>();
                n += 3;
            }
        }
    }
    sum as f64 / n as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn two_way_split_is_exhaustive_optimum(seed in any::<u64>(), n in 2usize..=12) {
        let boxes = random_boxes(&mut rng(seed), n, 640.0, 480.0);
        let (a, b, cost) = exhaustive_two_partition(&boxes);
        let got = weighted_bikmeans(&boxes, 2).unwrap();
        let pts = weighted_points(&boxes);
        let got_cost: f64 = got.clusters.iter().map(|c| wcss(&pts, c)).sum();
        prop_assert!((got_cost - cost).abs() <= 1e-9 * cost.max(1.0), "{got_cost} vs {cost}");
        let mut want = vec![a, b];
        want.sort_by_key(|c| c[0]);
        prop_assert_eq!(got.clusters, want);
    }

    #[test]
    fn wcss_never_rises_across_bisections(seed in any::<u64>(), n in 1usize..30, k in 1usize..8) {
        let boxes = random_boxes(&mut rng(seed), n, 640.0, 480.0);
        let k = k.min(n);
        let c = weighted_bikmeans(&boxes, k).unwrap();
        prop_assert_eq!(c.clusters.len(), k);
        for w in c.wcss_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-9);
        }
        let pts = weighted_points(&boxes);
        let total: f64 = c.clusters.iter().map(|m| wcss(&pts, m)).sum();
        prop_assert!((total - c.wcss_history.last().unwrap()).abs() <= 1e-6 * total.max(1.0));
    }

    #[test]
    fn every_box_in_exactly_one_roi(seed in any::<u64>(), n in 1usize..15, k in 1usize..5, pad in 0u32..24) {
        let boxes = random_boxes(&mut rng(seed), n, 320.0, 240.0);
        let plan = plan_frame(&boxes, k, pad, 90, 20, 320, 240).unwrap();
        for b in &boxes {
            prop_assert_eq!(plan.rois.iter().filter(|r| r.contains_box(b)).count(), 1);
        }
        for r in &plan.rois {
            prop_assert!(r.w > 0 && r.h > 0 && r.x_end() <= 320 && r.y_end() <= 240);
        }
        for (i, a) in plan.rois.iter().enumerate() {
            for b in &plan.rois[i + 1..] {
                prop_assert!(!a.overlaps(b));
            }
        }
    }
}

#[test]
fn heavy_box_pulls_its_centroid() {
    let boxes = [bx(45.0, 45.0, 55.0, 55.0), bx(-0.5, -0.5, 0.5, 0.5), bx(99.5, 99.5, 100.5, 100.5)];
    // weight 100 vs 1 and 1
    let c = weighted_bikmeans(&boxes, 2).unwrap();
    let pts = weighted_points(&boxes);
    let heavy = c.clusters.iter().find(|m| m.contains(&0)).unwrap();
    let w: f64 = heavy.iter().map(|&i| pts[i].2).sum();
    let cx = heavy.iter().map(|&i| pts[i].0 * pts[i].2).sum::<f64>() / w;
    let cy = heavy.iter().map(|&i| pts[i].1 * pts[i].2).sum::<f64>() / w;
    assert!((cx - 50.0).hypot(cy - 50.0) <= 2.0, "({cx}, {cy})");
}

#[test]
fn disjoint_clusters_get_their_own_rois() {
    let boxes = [
        bx(10.0, 10.0, 30.0, 30.0),
        bx(20.0, 15.0, 40.0, 35.0),
        bx(200.0, 20.0, 220.0, 40.0),
        bx(210.0, 30.0, 230.0, 45.0),
        bx(100.0, 180.0, 130.0, 210.0),
    ];
    let plan = plan_frame(&boxes, 3, 4, 90, 20, 320, 240).unwrap();
    assert_eq!(plan.rois.len(), 3);
    let owner = |i: usize| plan.rois.iter().position(|r| r.contains_box(&boxes[i])).unwrap();
    assert_eq!(owner(0), owner(1));
    assert_eq!(owner(2), owner(3));
    assert!(owner(0) != owner(2) && owner(2) != owner(4) && owner(0) != owner(4));
}

#[test]
fn roi_pixels_beat_background_pixels() {
    let (frames, truth) = scene(3, 4, 21);
    for (f, g) in frames.iter().zip(&truth) {
        let boxes: Vec<_> = g.objects.iter().map(|o| o.bbox).collect();
        let plan = plan_frame(&boxes, 1, 8, 95, 10, f.width(), f.height()).unwrap();
        let dec = decode_frame(&encode_frame(f, &plan).unwrap()).unwrap();
        let r = plan.rois[0];
        assert!(mae(f, &dec, &r, true) < mae(f, &dec, &r, false));
    }
}

#[test]
fn near_lossless_at_full_quality() {
    // measured bound for the baseline JPEG encoder at quality 100
    const MAX_ERR_Q100: u8 = 12;
    let (frames, truth) = scene(2, 5, 4);
    for (f, g) in frames.iter().zip(&truth) {
        let boxes: Vec<_> = g.objects.iter().map(|o| o.bbox).collect();
        let plan = plan_frame(&boxes, 2, 8, 100, 100, f.width(), f.height()).unwrap();
        let enc = encode_frame(f, &plan).unwrap();
        let dec = decode_frame(&enc).unwrap();
        assert_eq!(dec.dims(), f.dims());
        let worst = f.pixels().iter().zip(dec.pixels()).map(|(a, b)| a.abs_diff(*b)).max().unwrap();
        assert!(worst <= MAX_ERR_Q100, "max error {worst}");
        assert_eq!(encode_frame(f, &plan).unwrap(), enc);
    }
}

#[test]
fn header_bytes_follow_the_layout() {
    let (frames, truth) = scene(1, 3, 2);
    let boxes: Vec<_> = truth[0].objects.iter().map(|o| o.bbox).collect();
    let mut f = frames[0].clone();
    f.id = 0x0102_0304;
    let plan = plan_frame(&boxes, 2, 8, 80, 15, 320, 240).unwrap();
    let bytes = encode_frame(&f, &plan).unwrap().to_bytes().unwrap();
    let mut want = b"CEYE".to_vec();
    want.push(1);
    want.extend_from_slice(&0x0102_0304u32.to_le_bytes());
    want.extend_from_slice(&320u16.to_le_bytes());
    want.extend_from_slice(&240u16.to_le_bytes());
    want.extend_from_slice(&[plan.k, 80, 15]);
    want.extend_from_slice(&(plan.rois.len() as u16).to_le_bytes());
    assert_eq!(&bytes[..HEADER_LEN], &want[..]);
    let back = EncodedFrame::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes().unwrap(), bytes);
    let dec = decode_bytes(&bytes).unwrap();
    assert_eq!(dec.id, 0x0102_0304);
}

#[test]
fn hd_frame_single_roi_beats_uniform() {
    let s = generate(&SceneSpec {
        width: 1920,
        height: 1080,
        frames: 1,
        targets: 0,
        size_min: 20,
        size_max: 30,
        seed: 8,
        ..Default::default()
    })
    .unwrap();
    let f = &s.frames[0];
    let plan = RoiPlan {
        k: 1,
        rois: vec![Rect {
            x: 700,
            y: 400,
            w: 400,
            h: 300,
        }],
        q_roi: 90,
        q_bg: 20,
    };
    let diff = encode_frame(f, &plan).unwrap().total_size();
    assert!(diff < uniform_size(f, 90).unwrap());
}

#[test]
fn size_rises_with_background_quality() {
    let (frames, truth) = scene(8, 5, 17);
    let mut checks = 0;
    let mut violations = 0;
    for (f, g) in frames.iter().zip(&truth) {
        let boxes: Vec<_> = g.objects.iter().map(|o| o.bbox).collect();
        for k in 1..=3 {
            let sizes: Vec<usize> = [10u8, 30, 50, 70]
                .iter()
                .map(|&q| encode_frame(f, &plan_frame(&boxes, k, 16, 90, q, 320, 240).unwrap()).unwrap().total_size())
                .collect();
            for w in sizes.windows(2) {
                checks += 1;
                violations += usize::from(w[1] < w[0]);
            }
        }
    }
    assert!(violations * 20 <= checks, "{violations}/{checks}");
}

#[test]
fn config_set_cardinality_and_trends() {
    let (frames, truth) = scene(4, 4, 12);
    let corpus: Vec<_> = frames.into_iter().zip(truth).collect();
    let one = build_config_set(
        &corpus[..1],
        &ProfileParams {
            k_values: vec![1],
            q_values: vec![(90, 20)],
            ..Default::default()
        },
        &CloudModel::default(),
    )
    .unwrap();
    assert_eq!(one.entries.len(), 1);

    let params = ProfileParams {
        k_values: vec![1, 2, 9],
        q_values: vec![(95, 10), (10, 10), (90, 50), (90, 30), (90, 10)],
        ..Default::default()
    };
    let set = build_config_set(&corpus, &params, &CloudModel::default()).unwrap();
    assert_eq!(set.entries.len(), 4 * 2 * 5);
    assert_eq!(set.skipped.len(), 4);
    for e in &set.entries {
        assert!((0.0..=1.0).contains(&e.accuracy) && e.payload_size > 0 && e.t_cluster >= 0.0 && e.t_encode >= 0.0);
    }
    let find = |fid: u64, k: u8, q: (u8, u8)| {
        set.entries
            .iter()
            .find(|e| e.frame_id == fid && e.k == k && (e.q_roi, e.q_bg) == q)
            .unwrap()
    };
    let mut violations = 0;
    for fid in 0..4 {
        for k in [1, 2] {
            assert!(find(fid, k, (95, 10)).accuracy >= find(fid, k, (10, 10)).accuracy);
            let s = [(90, 50), (90, 30), (90, 10)].map(|q| find(fid, k, q).payload_size);
            violations += usize::from(s[1] > s[0]) + usize::from(s[2] > s[1]);
        }
    }
    assert!(violations * 20 <= 16, "{violations} size inversions");
    let again = build_config_set(&corpus, &params, &CloudModel::default()).unwrap();
    assert_eq!(again.entries, set.entries);
}
