//! Binary container for a frame encoded with per-region quality.
//!
//! Layout, little-endian:
//!
//! ```text
//! "CEYE" u8 version u32 frame_id u16 width u16 height u8 k u8 q_roi u8 q_bg u16 roi_count
//! roi_count x { u16 x u16 y u16 w u16 h u32 len [len bytes JPEG] }
//! u32 bg_len [bg_len bytes JPEG]
//! ```
//!
//! Parsing is all-or-nothing: any structural problem is an error and no
//! partially filled frame is returned.

use std::fmt;

use thiserror::Error;

use super::roi::Rect;

pub const MAGIC: [u8; 4] = *b"CEYE";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 4 + 1 + 4 + 2 + 2 + 1 + 1 + 1 + 2;
const ROI_HEADER_LEN: usize = 8 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Header,
    Roi(usize),
    Background,
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Section::Header => write!(f, "header"),
            Section::Roi(i) => write!(f, "roi {i}"),
            Section::Background => write!(f, "background"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("{section}: truncated, needed {needed} bytes but {available} remain")]
    Truncated {
        section: Section,
        needed: usize,
        available: usize,
    },
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("{section}: {message}")]
    Invalid { section: Section, message: String },
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("{section}: codec error: {message}")]
    Codec { section: Section, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub frame_id: u32,
    pub width: u16,
    pub height: u16,
    pub k: u8,
    pub q_roi: u8,
    pub q_bg: u8,
}

impl FrameHeader {
    /// Header bytes for a given region count.
    pub fn to_bytes(&self, roi_count: u16) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4] = VERSION;
        b[5..9].copy_from_slice(&self.frame_id.to_le_bytes());
        b[9..11].copy_from_slice(&self.width.to_le_bytes());
        b[11..13].copy_from_slice(&self.height.to_le_bytes());
        b[13] = self.k;
        b[14] = self.q_roi;
        b[15] = self.q_bg;
        b[16..18].copy_from_slice(&roi_count.to_le_bytes());
        b
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedRegion {
    pub rect: Rect,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedFrame {
    pub header: FrameHeader,
    pub regions: Vec<EncodedRegion>,
    pub background: Vec<u8>,
}

impl EncodedFrame {
    /// Serialized size in bytes.
    pub fn total_size(&self) -> usize {
        HEADER_LEN
            + self
                .regions
                .iter()
                .map(|r| ROI_HEADER_LEN + r.payload.len())
                .sum::<usize>()
            + 4
            + self.background.len()
    }

    pub fn validate(&self) -> Result<(), WireError> {
        let h = &self.header;
        if h.width == 0 || h.height == 0 {
            return Err(invalid(Section::Header, "zero frame dimension"));
        }
        if !(1..=100).contains(&h.q_roi) || !(1..=100).contains(&h.q_bg) {
            return Err(invalid(Section::Header, "quality outside 1..=100"));
        }
        if self.regions.len() > usize::from(u16::MAX) {
            return Err(invalid(Section::Header, "too many regions"));
        }
        for (i, r) in self.regions.iter().enumerate() {
            let rc = &r.rect;
            if rc.w == 0 || rc.h == 0 || rc.x_end() > u32::from(h.width) || rc.y_end() > u32::from(h.height) {
                return Err(invalid(Section::Roi(i), "rect outside frame or empty"));
            }
            if r.payload.is_empty() {
                return Err(invalid(Section::Roi(i), "empty payload"));
            }
        }
        if self.background.is_empty() {
            return Err(invalid(Section::Background, "empty payload"));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, WireError> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.total_size());
        out.extend_from_slice(&self.header.to_bytes(self.regions.len() as u16));
        for r in &self.regions {
            for v in [r.rect.x, r.rect.y, r.rect.w, r.rect.h] {
                out.extend_from_slice(&(v as u16).to_le_bytes());
            }
            out.extend_from_slice(&(r.payload.len() as u32).to_le_bytes());
            out.extend_from_slice(&r.payload);
        }
        out.extend_from_slice(&(self.background.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.background);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader { bytes, pos: 0 };
        let head = r.take(HEADER_LEN, Section::Header)?;
        let magic: [u8; 4] = head[0..4].try_into().expect("fixed slice");
        if magic != MAGIC {
            return Err(WireError::BadMagic(magic));
        }
        if head[4] != VERSION {
            return Err(WireError::BadVersion(head[4]));
        }
        let u16_at = |b: &[u8], i: usize| u16::from_le_bytes([b[i], b[i + 1]]);
        let header = FrameHeader {
            frame_id: u32::from_le_bytes(head[5..9].try_into().expect("fixed slice")),
            width: u16_at(head, 9),
            height: u16_at(head, 11),
            k: head[13],
            q_roi: head[14],
            q_bg: head[15],
        };
        let roi_count = usize::from(u16_at(head, 16));
        // Each region needs at least its fixed header; reject impossible
        // counts before allocating.
        if roi_count * ROI_HEADER_LEN > r.remaining() {
            return Err(WireError::Truncated {
                section: Section::Roi(r.remaining() / ROI_HEADER_LEN),
                needed: roi_count * ROI_HEADER_LEN,
                available: r.remaining(),
            });
        }
        let mut regions = Vec::with_capacity(roi_count);
        for i in 0..roi_count {
            let s = Section::Roi(i);
            let rh = r.take(ROI_HEADER_LEN, s)?;
            let rect = Rect {
                x: u32::from(u16_at(rh, 0)),
                y: u32::from(u16_at(rh, 2)),
                w: u32::from(u16_at(rh, 4)),
                h: u32::from(u16_at(rh, 6)),
            };
            let len = u32::from_le_bytes(rh[8..12].try_into().expect("fixed slice")) as usize;
            let payload = r.take(len, s)?.to_vec();
            regions.push(EncodedRegion { rect, payload });
        }
        let bl = r.take(4, Section::Background)?;
        let len = u32::from_le_bytes(bl.try_into().expect("fixed slice")) as usize;
        let background = r.take(len, Section::Background)?.to_vec();
        if r.remaining() > 0 {
            return Err(WireError::TrailingBytes(r.remaining()));
        }
        let frame = Self {
            header,
            regions,
            background,
        };
        frame.validate()?;
        Ok(frame)
    }
}

fn invalid(section: Section, message: &str) -> WireError {
    WireError::Invalid {
        section,
        message: message.to_string(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, section: Section) -> Result<&'a [u8], WireError> {
        if n > self.remaining() {
            return Err(WireError::Truncated {
                section,
                needed: n,
                available: self.remaining(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}
