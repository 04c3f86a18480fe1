//! Upload queue and single-link discrete-event simulation on a virtual clock.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::trace::BandwidthTrace;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetParams {
    /// Round-trip time, s.
    pub rtt: f64,
    /// Cloud inference time, s.
    pub cloud_latency: f64,
    pub max_queue: usize,
    /// Window `τ` in the send probability `min(1, bw·τ / size)`, s.
    pub send_window: f64,
    /// Trailing window of the bandwidth estimate, s.
    pub estimate_window: f64,
    pub seed: u64,
}

impl Default for NetParams {
    fn default() -> Self {
        Self {
            rtt: 0.05,
            cloud_latency: 0.1,
            max_queue: 8,
            send_window: 0.5,
            estimate_window: 1.0,
            seed: 0x11e7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UploadItem<P> {
    pub frame_id: u64,
    pub is_keyframe: bool,
    pub enqueue_time: f64,
    /// Payload bytes, > 0.
    pub size: u64,
    pub k: u8,
    pub q_roi: u8,
    pub q_bg: u8,
    pub payload: P,
}

/// Keyframes first, then FIFO by enqueue time. Holds at most `max` items.
#[derive(Debug, Clone)]
pub struct UploadQueue<P> {
    max: usize,
    items: VecDeque<UploadItem<P>>,
}

impl<P> UploadQueue<P> {
    pub fn new(max: usize) -> Self {
        assert!(max >= 1, "queue bound must be >= 1");
        Self {
            max,
            items: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn head(&self) -> Option<&UploadItem<P>> {
        self.items.front()
    }

    pub fn iter(&self) -> impl Iterator<Item = &UploadItem<P>> {
        self.items.iter()
    }

    /// Inserts behind every item of equal or higher priority. When over the
    /// bound, evicts the oldest regular item, or the oldest keyframe if there
    /// is none; the evicted item is returned (possibly the new one).
    pub fn enqueue(&mut self, item: UploadItem<P>) -> Option<UploadItem<P>> {
        let pos = if item.is_keyframe {
            self.items.iter().position(|i| !i.is_keyframe).unwrap_or(self.items.len())
        } else {
            self.items.len()
        };
        self.items.insert(pos, item);
        if self.items.len() <= self.max {
            return None;
        }
        let victim = self
            .items
            .iter()
            .position(|i| !i.is_keyframe)
            .unwrap_or(0);
        self.items.remove(victim)
    }

    pub fn pop(&mut self) -> Option<UploadItem<P>> {
        self.items.pop_front()
    }
}

/// Probability of sending an item of `size` bytes at `bw` bytes/s.
pub fn send_probability(bw: f64, size: u64, window: f64, keyframe: bool) -> f64 {
    let p = if size == 0 { 1.0 } else { (bw * window / size as f64).min(1.0) };
    let p = if p.is_nan() { 0.0 } else { p.max(0.0) };
    if keyframe {
        (2.0 * p).min(1.0)
    } else {
        p
    }
}

/// Seeded send gate for the queue head at tick `tick`.
pub fn maybe_send<P>(queue: &UploadQueue<P>, bw: f64, params: &NetParams, tick: u64) -> bool {
    let Some(head) = queue.head() else { return false };
    let p = send_probability(bw, head.size, params.send_window, head.is_keyframe);
    let u: f64 = rng::stream(params.seed, &[0x5e4d, tick]).random();
    u < p
}

/// Upload end plus return trip and cloud inference.
pub fn simulate_upload(trace: &BandwidthTrace, start: f64, size: u64, params: &NetParams) -> Option<(f64, f64)> {
    let end = trace.upload_end(start, size as f64)?;
    Some((end, end + params.rtt + params.cloud_latency))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Enqueue,
    Evict,
    SendStart,
    SendDone,
    CloudDone,
    Deliver,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetEvent {
    pub event: EventKind,
    pub t: f64,
    pub frame_id: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub keyframe: Option<bool>,
}

#[derive(Debug, Clone)]
struct InFlight<P> {
    item: UploadItem<P>,
    /// `None` when the trace ends before the upload does.
    done: Option<(f64, f64)>,
}

/// An upload whose cloud result is back at the edge.
#[derive(Debug, Clone)]
pub struct Delivered<P> {
    pub item: UploadItem<P>,
    pub send_start: f64,
    pub send_done: f64,
    pub completion_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LinkCounts {
    pub enqueued: u64,
    pub evicted: u64,
    pub sent: u64,
    pub delivered: u64,
    /// Left in the queue or stuck on the link when the run ended.
    pub stalled: u64,
}

/// One uplink to one cloud service. Decisions happen only at frame ticks;
/// completions between ticks are stamped with their exact times.
#[derive(Debug)]
pub struct Uplink<P> {
    pub params: NetParams,
    trace: BandwidthTrace,
    queue: UploadQueue<P>,
    in_flight: Option<(f64, InFlight<P>)>,
    returning: Vec<Delivered<P>>,
    events: Vec<NetEvent>,
    counts: LinkCounts,
}

impl<P> Uplink<P> {
    pub fn new(trace: BandwidthTrace, params: NetParams) -> Self {
        let queue = UploadQueue::new(params.max_queue.max(1));
        Self {
            params,
            trace,
            queue,
            in_flight: None,
            returning: Vec::new(),
            events: Vec::new(),
            counts: LinkCounts::default(),
        }
    }

    pub fn trace(&self) -> &BandwidthTrace {
        &self.trace
    }

    pub fn queue(&self) -> &UploadQueue<P> {
        &self.queue
    }

    pub fn events(&self) -> &[NetEvent] {
        &self.events
    }

    pub fn counts(&self) -> &LinkCounts {
        &self.counts
    }

    pub fn is_idle(&self) -> bool {
        self.in_flight.is_none()
    }

    pub fn bandwidth_estimate(&self, t: f64) -> f64 {
        self.trace.trailing_mean(t, self.params.estimate_window).unwrap_or(0.0)
    }

    fn log(&mut self, event: EventKind, t: f64, frame_id: u64, size: Option<u64>, keyframe: Option<bool>) {
        self.events.push(NetEvent {
            event,
            t,
            frame_id,
            size,
            keyframe,
        });
    }

    pub fn enqueue(&mut self, item: UploadItem<P>) {
        let (t, id, size, kf) = (item.enqueue_time, item.frame_id, item.size, item.is_keyframe);
        self.counts.enqueued += 1;
        self.log(EventKind::Enqueue, t, id, Some(size), Some(kf));
        if let Some(ev) = self.queue.enqueue(item) {
            self.counts.evicted += 1;
            self.log(EventKind::Evict, t, ev.frame_id, Some(ev.size), Some(ev.is_keyframe));
        }
    }

    /// Finishes uploads due by `t` and returns cloud results that are back,
    /// in completion order.
    pub fn advance(&mut self, t: f64) -> Vec<Delivered<P>> {
        if let Some((start, f)) = &self.in_flight {
            if let Some((done, cloud)) = f.done {
                if done <= t {
                    let start = *start;
                    let (_, f) = self.in_flight.take().expect("checked above");
                    self.log(EventKind::SendDone, done, f.item.frame_id, None, None);
                    self.returning.push(Delivered {
                        item: f.item,
                        send_start: start,
                        send_done: done,
                        completion_time: cloud,
                    });
                }
            }
        }
        let mut out = Vec::new();
        let mut keep = Vec::new();
        for d in self.returning.drain(..) {
            if d.completion_time <= t {
                out.push(d);
            } else {
                keep.push(d);
            }
        }
        self.returning = keep;
        out.sort_by(|a, b| a.completion_time.total_cmp(&b.completion_time));
        for d in &out {
            self.counts.delivered += 1;
            let id = d.item.frame_id;
            self.events.push(NetEvent {
                event: EventKind::CloudDone,
                t: d.completion_time,
                frame_id: id,
                size: None,
                keyframe: None,
            });
            self.log(EventKind::Deliver, t, id, None, None);
        }
        out
    }

    /// Starts sending the queue head if the link is idle and the gate opens.
    /// A lone keyframe skips the gate. Returns the frame id and size sent.
    pub fn try_send(&mut self, t: f64, tick: u64) -> Option<(u64, u64)> {
        if self.in_flight.is_some() || self.queue.is_empty() || t >= self.trace.horizon() {
            return None;
        }
        let head = self.queue.head().expect("non-empty");
        let bypass = head.is_keyframe && self.queue.len() == 1;
        if !bypass && !maybe_send(&self.queue, self.bandwidth_estimate(t), &self.params, tick) {
            return None;
        }
        let item = self.queue.pop().expect("non-empty");
        let done = simulate_upload(&self.trace, t, item.size, &self.params);
        let (id, size) = (item.frame_id, item.size);
        self.counts.sent += 1;
        self.log(EventKind::SendStart, t, id, Some(size), Some(item.is_keyframe));
        if done.is_none() {
            log::warn!("upload of frame {id} cannot finish before the trace ends");
        }
        self.in_flight = Some((t, InFlight { item, done }));
        Some((id, size))
    }

    /// Counts with everything still queued or on the link marked stalled.
    pub fn finish(&self) -> LinkCounts {
        let mut c = self.counts.clone();
        c.stalled = self.queue.len() as u64 + u64::from(self.in_flight.is_some()) + self.returning.len() as u64;
        c
    }
}
