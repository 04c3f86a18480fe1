//! VOC-style mean average precision at a single IoU threshold.

use std::collections::BTreeMap;

use serde::Serialize;

use super::detection::{Detection, GroundTruth};
use super::geometry::iou;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapResult {
    pub map: f64,
    pub per_class: BTreeMap<u32, f64>,
    /// Set when there was no ground truth at all; `map` is then 0.
    pub no_ground_truth: bool,
}

/// All-point interpolated AP from a precision/recall sequence in rank order.
pub fn average_precision(recall: &[f64], precision: &[f64]) -> f64 {
    let mut mrec = Vec::with_capacity(recall.len() + 2);
    let mut mpre = Vec::with_capacity(precision.len() + 2);
    mrec.push(0.0);
    mrec.extend_from_slice(recall);
    mrec.push(1.0);
    mpre.push(0.0);
    mpre.extend_from_slice(precision);
    mpre.push(0.0);
    for i in (0..mpre.len() - 1).rev() {
        mpre[i] = mpre[i].max(mpre[i + 1]);
    }
    (1..mrec.len())
        .filter(|&i| mrec[i] != mrec[i - 1])
        .map(|i| (mrec[i] - mrec[i - 1]) * mpre[i])
        .sum()
}

/// `dets[i]` are the detections for the frame described by `gts[i]`.
///
/// Detections of a class are ranked by descending confidence (stable in frame
/// order) and each is matched to its highest-IoU ground truth of the same
/// class; a match counts only if IoU >= `iou_thresh` and that object was not
/// already claimed.
pub fn evaluate_map<T: Real>(dets: &[Vec<Detection<T>>], gts: &[GroundTruth], iou_thresh: f64) -> MapResult {
    assert!(
        iou_thresh > 0.0 && iou_thresh < 1.0,
        "iou threshold must be in (0, 1)"
    );
    let mut n_gt: BTreeMap<u32, usize> = BTreeMap::new();
    for gt in gts {
        for o in &gt.objects {
            *n_gt.entry(o.class_id).or_default() += 1;
        }
    }
    if n_gt.is_empty() {
        log::warn!("evaluate_map: no ground-truth boxes; reporting 0");
        return MapResult {
            map: 0.0,
            per_class: BTreeMap::new(),
            no_ground_truth: true,
        };
    }

    let mut per_class = BTreeMap::new();
    for (&class, &total) in &n_gt {
        let mut ranked: Vec<(f64, usize, usize)> = Vec::new();
        for (fi, frame_dets) in dets.iter().enumerate().take(gts.len()) {
            for (di, d) in frame_dets.iter().enumerate() {
                if d.class_id() == class {
                    ranked.push((d.confidence().as_f64(), fi, di));
                }
            }
        }
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut taken: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.objects.len()]).collect();
        let (mut tp, mut fp) = (0usize, 0usize);
        let mut recall = Vec::with_capacity(ranked.len());
        let mut precision = Vec::with_capacity(ranked.len());
        for &(_, fi, di) in &ranked {
            let b = dets[fi][di].bbox().cast::<f64>();
            let best = gts[fi]
                .objects
                .iter()
                .enumerate()
                .filter(|(_, o)| o.class_id == class)
                .map(|(oi, o)| (oi, iou(&b, &o.bbox)))
                .fold(None::<(usize, f64)>, |acc, cur| match acc {
                    Some(a) if a.1 >= cur.1 => Some(a),
                    _ => Some(cur),
                });
            match best {
                Some((oi, v)) if v >= iou_thresh && !taken[fi][oi] => {
                    taken[fi][oi] = true;
                    tp += 1;
                }
                _ => fp += 1,
            }
            recall.push(tp as f64 / total as f64);
            precision.push(tp as f64 / (tp + fp) as f64);
        }
        per_class.insert(class, average_precision(&recall, &precision));
    }
    let map = per_class.values().sum::<f64>() / per_class.len() as f64;
    MapResult {
        map,
        per_class,
        no_ground_truth: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::detection::{GtObject, Source};
    use crate::model::geometry::BoundingBox;
    use proptest::prelude::*;

    fn bb(x: f64, y: f64, s: f64) -> BoundingBox<f64> {
        BoundingBox::new(x, y, x + s, y + s).unwrap()
    }

    fn det(b: BoundingBox<f64>, class: u32, conf: f64) -> Detection<f64> {
        Detection::new(b, class, conf, Source::Edge)
    }

    fn gt(frame_id: u64, objs: &[(BoundingBox<f64>, u32)]) -> GroundTruth {
        GroundTruth {
            frame_id,
            objects: objs
                .iter()
                .map(|&(bbox, class_id)| GtObject { bbox, class_id })
                .collect(),
        }
    }

    /// Independent AP: for every cutoff k, the max precision among cutoffs with
    /// recall >= recall_k, weighted by the recall increment at k.
    fn enumerate_ap(hits: &[bool], total: usize) -> f64 {
        let n = hits.len();
        let pr: Vec<(f64, f64)> = (1..=n)
            .map(|k| {
                let tp = hits[..k].iter().filter(|&&h| h).count();
                (tp as f64 / k as f64, tp as f64 / total as f64)
            })
            .collect();
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for k in 0..n {
            let r = pr[k].1;
            if r > prev_recall {
                let p = pr.iter().filter(|(_, rr)| *rr >= r).map(|(p, _)| *p).fold(0.0, f64::max);
                ap += (r - prev_recall) * p;
                prev_recall = r;
            }
        }
        ap
    }

    #[test]
    fn perfect_detector() {
        let g = vec![gt(0, &[(bb(0.0, 0.0, 10.0), 0), (bb(20.0, 20.0, 5.0), 1)])];
        let d = vec![g[0].objects.iter().map(|o| det(o.bbox, o.class_id, 1.0)).collect()];
        assert_eq!(evaluate_map(&d, &g, 0.5).map, 1.0);
    }

    #[test]
    fn null_detector() {
        let g = vec![gt(0, &[(bb(0.0, 0.0, 10.0), 0)])];
        let d: Vec<Vec<Detection<f64>>> = vec![vec![]];
        assert_eq!(evaluate_map(&d, &g, 0.5).map, 0.0);
    }

    #[test]
    fn one_hit_one_false_positive() {
        let g = vec![gt(0, &[(bb(0.0, 0.0, 10.0), 0), (bb(50.0, 50.0, 10.0), 0)])];
        let d = vec![vec![det(bb(0.0, 0.0, 10.0), 0, 0.9), det(bb(100.0, 0.0, 10.0), 0, 0.8)]];
        let r = evaluate_map(&d, &g, 0.5);
        assert!((r.map - 0.5).abs() < 1e-12);
        assert!((enumerate_ap(&[true, false], 2) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn no_ground_truth_flagged() {
        let g = vec![gt(0, &[])];
        let d = vec![vec![det(bb(0.0, 0.0, 1.0), 0, 0.5)]];
        let r = evaluate_map(&d, &g, 0.5);
        assert!(r.no_ground_truth);
        assert_eq!(r.map, 0.0);
    }

    #[test]
    fn duplicate_detection_is_false_positive() {
        let g = vec![gt(0, &[(bb(0.0, 0.0, 10.0), 0)])];
        let d = vec![vec![det(bb(0.0, 0.0, 10.0), 0, 0.9), det(bb(0.5, 0.0, 10.0), 0, 0.95)]];
        // the higher-confidence near-duplicate claims the object first
        let r = evaluate_map(&d, &g, 0.5);
        assert!((r.map - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn matches_enumeration_oracle(hits in proptest::collection::vec(any::<bool>(), 1..20), extra in 0usize..4) {
            // one frame, objects laid on a line; hits[i] decides whether rank i hits a fresh object
            let n_obj = hits.iter().filter(|&&h| h).count() + extra;
            prop_assume!(n_obj > 0);
            let objs: Vec<_> = (0..n_obj).map(|i| (bb(i as f64 * 20.0, 0.0, 10.0), 0u32)).collect();
            let g = vec![gt(0, &objs)];
            let mut next = 0;
            let d: Vec<Detection<f64>> = hits.iter().enumerate().map(|(rank, &h)| {
                let conf = 1.0 - rank as f64 * 0.01;
                if h {
                    next += 1;
                    det(objs[next - 1].0, 0, conf)
                } else {
                    det(bb(0.0, 500.0, 10.0), 0, conf)
                }
            }).collect();
            let got = evaluate_map(&[d], &g, 0.5).map;
            prop_assert!((got - enumerate_ap(&hits, n_obj)).abs() < 1e-12);
        }

        #[test]
        fn confident_hit_never_lowers_ap(hits in proptest::collection::vec(any::<bool>(), 1..12)) {
            let n_obj = hits.iter().filter(|&&h| h).count() + 1;
            let objs: Vec<_> = (0..n_obj).map(|i| (bb(i as f64 * 20.0, 0.0, 10.0), 0u32)).collect();
            let g = vec![gt(0, &objs)];
            let mut next = 0;
            let mut d: Vec<Detection<f64>> = hits.iter().enumerate().map(|(rank, &h)| {
                let conf = 0.9 - rank as f64 * 0.01;
                if h { next += 1; det(objs[next - 1].0, 0, conf) } else { det(bb(0.0, 500.0, 10.0), 0, conf) }
            }).collect();
            let before = evaluate_map(&[d.clone()], &g, 0.5).map;
            // the last object is never hit above; add it with top confidence
            d.push(det(objs[n_obj - 1].0, 0, 0.99));
            let after = evaluate_map(&[d], &g, 0.5).map;
            prop_assert!(after >= before - 1e-12);
        }
    }
}
