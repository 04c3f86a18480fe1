use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use super::config::PipelineConfig;
use super::report::{summarize, FrameReport, Latency, Summary, SummaryError, UploadChoice};
use crate::encode::{
    decode_frame, encode_frame, modeled_cluster_time, modeled_encode_time, plan_frame, ConfigEntry, EncodeError,
    EncodedFrame, PlanError, RoiPlan, WireError,
};
use crate::mining::{mine_frame, refresh_reference, staleness_threshold, CachedFrame, FrameCache, ReferenceFrame};
use crate::model::{Frame, FrameError, GroundTruth, ModelError, ModelInterface, ScriptedModel};
use crate::netsim::{BandwidthTrace, LinkCounts, NetEvent, UploadItem, Uplink};
use crate::scheduler::{embed, select_config, BudgetParams, PqError, PqIndex, Selection};
use crate::tracking::{choose_mode, clamp_detections, fast_detect, InferenceMode, Reason, Tracker};
use crate::{BBox, Det};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("{frames} frames but {truth} annotation rows")]
    Misaligned { frames: usize, truth: usize },
    #[error("frame {index} has id {id}; ground truth has {gt}")]
    FrameId { index: usize, id: u64, gt: u64 },
    #[error("frame ids must increase (frame {0})")]
    Order(u64),
    #[error("trace ends at {horizon} s before the first frame")]
    TraceTooShort { horizon: f64 },
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Pq(#[from] PqError),
    #[error(transparent)]
    Summary(#[from] SummaryError),
}

/// Offline configuration set and its index.
#[derive(Debug, Clone)]
pub struct Profiled {
    pub entries: Vec<ConfigEntry>,
    pub index: PqIndex,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub reports: Vec<FrameReport>,
    pub summary: Summary,
    pub events: Vec<NetEvent>,
    pub link: LinkCounts,
    /// Frames dropped because the trace ended.
    pub truncated: usize,
}

fn seconds(f: &Frame) -> f64 {
    *f.timestamp.numer() as f64 / *f.timestamp.denom() as f64
}

struct Upload {
    plan: Option<RoiPlan>,
    choice: Option<UploadChoice>,
    cost: f64,
}

/// Chooses the encoding plan for an upload of `frame` with `boxes` in view.
fn plan_upload(
    cfg: &PipelineConfig,
    profiled: Option<&Profiled>,
    frame: &Frame,
    boxes: &[BBox],
    bandwidth: f64,
) -> Result<Upload, PipelineError> {
    let u = &cfg.upload;
    let (w, h) = frame.dims();
    if !cfg.toggles.quality_encode_on {
        let plan = RoiPlan::background_only(u.uniform_q);
        return Ok(Upload {
            cost: modeled_encode_time(&plan, w, h),
            choice: Some(UploadChoice {
                k: 0,
                q_roi: u.uniform_q,
                q_bg: u.uniform_q,
                scheduled: false,
                over_budget: false,
            }),
            plan: Some(plan),
        });
    }
    let (k, q_roi, q_bg, scheduled, over_budget) = match profiled {
        Some(p) if !p.entries.is_empty() => {
            let grid = p.entries[0].embedding.grid;
            let q = embed(boxes, w, h, grid);
            let idx = p.index.query(&p.entries, &q, u.top_n)?;
            let cands: Vec<&ConfigEntry> = idx.iter().map(|&i| &p.entries[i]).collect();
            let budget = BudgetParams {
                bandwidth,
                latency: u.latency_budget,
                fallback: u.fallback,
            };
            let sel = select_config(&cands, &budget);
            let Some(i) = sel.index() else {
                return Ok(Upload {
                    plan: None,
                    choice: None,
                    cost: 0.0,
                });
            };
            let e = cands[i];
            (e.k, e.q_roi, e.q_bg, true, matches!(sel, Selection::Infeasible(_)))
        }
        _ => (u.default_k, u.default_q_roi, u.default_q_bg, false, false),
    };
    let plan = plan_frame(boxes, usize::from(k), u.padding, q_roi, q_bg, w, h)?;
    let cluster = if plan.k > 0 {
        modeled_cluster_time(boxes.len(), usize::from(plan.k))
    } else {
        0.0
    };
    Ok(Upload {
        cost: cluster + modeled_encode_time(&plan, w, h),
        choice: Some(UploadChoice {
            k: plan.k,
            q_roi,
            q_bg,
            scheduled,
            over_budget,
        }),
        plan: Some(plan),
    })
}

/// Runs the edge pipeline over `frames` against the simulated link.
///
/// Per frame: choose the inference mode, run fast or full inference, mine
/// against the current reference, update the tracker with everything found,
/// queue an upload on keyframes and every `upload.interval` frames, let the
/// link send, then apply cloud results that are back by the frame's virtual
/// completion time.
pub fn run_scenario(
    frames: &[Frame],
    truth: &[GroundTruth],
    trace: &BandwidthTrace,
    config: &PipelineConfig,
    profiled: Option<&Profiled>,
    seed: u64,
) -> Result<RunOutput, PipelineError> {
    config.validate().map_err(PipelineError::Config)?;
    if frames.len() != truth.len() {
        return Err(PipelineError::Misaligned {
            frames: frames.len(),
            truth: truth.len(),
        });
    }
    for (i, (f, g)) in frames.iter().zip(truth).enumerate() {
        if f.id != g.frame_id {
            return Err(PipelineError::FrameId {
                index: i,
                id: f.id,
                gt: g.frame_id,
            });
        }
        if i > 0 && f.id <= frames[i - 1].id {
            return Err(PipelineError::Order(f.id));
        }
    }
    let usable = frames.iter().take_while(|f| seconds(f) < trace.horizon()).count();
    if usable == 0 && !frames.is_empty() {
        return Err(PipelineError::TraceTooShort {
            horizon: trace.horizon(),
        });
    }
    let truncated = frames.len() - usable;
    if truncated > 0 {
        log::warn!("trace ends at {} s; dropping the last {truncated} frames", trace.horizon());
    }
    let (frames, truth) = (&frames[..usable], &truth[..usable]);

    let cfg = config.seeded(seed);
    let table: Arc<BTreeMap<u64, GroundTruth>> = Arc::new(truth.iter().map(|g| (g.frame_id, g.clone())).collect());
    let by_id: BTreeMap<u64, usize> = frames.iter().enumerate().map(|(i, f)| (f.id, i)).collect();
    let edge = ScriptedModel::new(
        cfg.edge.scripted.clone(),
        table,
        cfg.edge.strides.clone(),
        cfg.edge.channels,
        PipelineConfig::feature_seed(seed),
    )?;
    let mut tracker = Tracker::new(cfg.tracker.clone());
    let mut cache: FrameCache<f64> = FrameCache::new(cfg.cache_capacity);
    let mut reference: Option<ReferenceFrame<f64>> = None;
    let mut reference_source: Option<u64> = None;
    let mut link: Uplink<Arc<EncodedFrame>> = Uplink::new(trace.clone(), cfg.net.clone());
    let mut reports = Vec::with_capacity(frames.len());
    let first_id = frames.first().map_or(0, |f| f.id);
    let mut prev: Option<&Frame> = None;

    for frame in frames {
        let t0 = seconds(frame);
        let (w, h) = frame.dims();
        let tracks_before = tracker.len();
        let since_cloud = frame.id - reference_source.unwrap_or(first_id);
        let since_cloud = u32::try_from(since_cloud).unwrap_or(u32::MAX);
        let mode = if cfg.toggles.fast_inference_on {
            choose_mode(prev, frame, tracks_before, since_cloud, &cfg.tracker)?
        } else {
            InferenceMode::full(Reason::Disabled)
        };
        let mut lat = Latency {
            extract: cfg.cost.extract(w, h),
            ..Default::default()
        };

        let (predictions, features, edge_dets) = if mode.is_fast() {
            let fd = fast_detect(frame, &mut tracker, &edge).expect("fast mode implies live tracks");
            lat.regress = cfg.cost.regress_fast(fd.proposals.len());
            (fd.proposals, fd.features, fd.detections)
        } else {
            let predictions = tracker.predict();
            let features = ModelInterface::<f64>::extract(&edge, frame);
            let (dets, _) = clamp_detections(edge.full_infer(frame), w, h);
            lat.regress = cfg.cost.regress_full_s;
            (predictions, features, dets)
        };
        let proposals = if mode.is_fast() { predictions.len() } else { 0 };
        let features = Arc::new(features);

        let (detections, mined, mine_attempts) = match (&reference, cfg.toggles.mining_on) {
            (Some(r), true) if !r.is_empty() => {
                let out = mine_frame(&features, &edge_dets, &predictions, r, &cfg.mining);
                lat.mine = cfg.cost.mine_s_per_target * r.detections.len() as f64;
                for t in &out.traces {
                    log::trace!("{}", serde_json::to_string(t).unwrap_or_default());
                }
                (out.detections, out.mined, out.traces.len())
            }
            _ => (edge_dets, 0, 0),
        };
        tracker.update(&detections);
        cache.push(CachedFrame {
            frame_id: frame.id,
            features,
            detections: detections.clone(),
        });

        let keyframe = matches!(mode.reason(), Reason::PixelChange | Reason::CloudStale) || prev.is_none();
        let periodic = cfg.upload.interval > 0 && (frame.id - first_id) % cfg.upload.interval == 0;
        let mut now = t0 + lat.extract + lat.regress + lat.mine;
        let (mut enqueued, mut skipped, mut choice) = (false, false, None);
        if keyframe || periodic {
            let boxes: Vec<BBox> = detections.iter().map(|d| *d.bbox()).collect();
            let up = plan_upload(&cfg, profiled, frame, &boxes, link.bandwidth_estimate(now))?;
            match up.plan {
                Some(plan) => {
                    let enc = encode_frame(frame, &plan)?;
                    lat.encode = up.cost;
                    now += up.cost;
                    link.enqueue(UploadItem {
                        frame_id: frame.id,
                        is_keyframe: keyframe,
                        enqueue_time: now,
                        size: enc.total_size() as u64,
                        k: plan.k,
                        q_roi: plan.q_roi,
                        q_bg: plan.q_bg,
                        payload: Arc::new(enc),
                    });
                    enqueued = true;
                    choice = up.choice;
                }
                None => skipped = true,
            }
        }
        let head_enqueued = link.queue().head().map(|i| i.enqueue_time);
        let sent = link.try_send(now, frame.id);
        if sent.is_some() {
            lat.queue_wait = now - head_enqueued.expect("sent from a non-empty queue");
        }

        let (mut applied, mut dropped) = (0, 0);
        for d in link.advance(now) {
            let fid = d.item.frame_id;
            let original = &frames[by_id[&fid]];
            let gt = &truth[by_id[&fid]];
            let mut decoded = decode_frame(&d.item.payload)?;
            decoded.id = fid;
            let (cloud_dets, _) = clamp_detections(cfg.cloud.infer(&decoded, original, gt)?, w, h);
            if reference_source.is_some_and(|s| s >= fid) {
                log::debug!("cloud result for frame {fid} is older than the reference; ignored");
                dropped += 1;
                continue;
            }
            let threshold = staleness_threshold(&tracker.boxes(), tracker.mean_speed(), cfg.mining.reference_staleness_threshold);
            match refresh_reference(&cache, fid, &cloud_dets, threshold, &cfg.mining) {
                Ok(r) => {
                    debug_assert!(r.frame_id <= frame.id);
                    reference = Some(r);
                    reference_source = Some(fid);
                    applied += 1;
                }
                Err(e) => {
                    log::warn!("{e}");
                    dropped += 1;
                }
            }
        }

        reports.push(FrameReport {
            frame_id: frame.id,
            mode: mode.mode(),
            reason: mode.reason(),
            tracks_before,
            proposals,
            tracks_after: tracker.len(),
            latency: lat,
            mined,
            mine_attempts,
            detections,
            keyframe,
            enqueued,
            choice,
            skipped,
            uploaded: sent.is_some(),
            sent_frame_id: sent.map(|s| s.0),
            bytes_sent: sent.map_or(0, |s| s.1),
            cloud_results_applied: applied,
            cloud_results_dropped: dropped,
            reference_frame: reference.as_ref().map(|r| r.frame_id),
            reference_targets: reference.as_ref().map_or(0, |r| r.detections.len()),
        });
        prev = Some(frame);
    }

    let summary = summarize(&reports, truth)?;
    Ok(RunOutput {
        reports,
        summary,
        events: link.events().to_vec(),
        link: link.finish(),
        truncated,
    })
}

/// Detections of every report, in frame order.
pub fn detections_of(reports: &[FrameReport]) -> Vec<Vec<Det>> {
    reports.iter().map(|r| r.detections.clone()).collect()
}
