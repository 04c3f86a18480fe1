//! Virtual-clock model of the edge-to-cloud link and the cloud detector.

pub mod cloud;
pub mod link;
pub mod trace;

pub use cloud::{box_psnr, CloudModel};
pub use link::{
    maybe_send, send_probability, simulate_upload, Delivered, EventKind, LinkCounts, NetEvent, NetParams,
    UploadItem, UploadQueue, Uplink,
};
pub use trace::{BandwidthTrace, TraceError};
