//! Differentiated-quality JPEG encoding: the full frame at background
//! quality, plus each region re-encoded at region quality and composited over
//! the background on decode.

use std::io::Cursor;

use image::codecs::jpeg::{JpegDecoder, JpegEncoder};
use image::{DynamicImage, ExtendedColorType, ImageDecoder};
use num_rational::Ratio;
use thiserror::Error;

use super::roi::{Rect, RoiPlan};
use super::wire::{EncodedFrame, EncodedRegion, FrameHeader, Section, WireError};
use crate::model::Frame;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("frame {0}x{1} exceeds the 65535 px wire limit")]
    TooLarge(u32, u32),
    #[error("frame id {0} does not fit in 32 bits")]
    FrameId(u64),
    #[error("region {index} {rect:?} lies outside the frame")]
    RegionOutside { index: usize, rect: Rect },
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("{section}: codec error: {source}")]
    Codec {
        section: Section,
        #[source]
        source: image::ImageError,
    },
}

/// Baseline JPEG of a packed RGB buffer.
pub fn jpeg_encode(rgb: &[u8], width: u32, height: u32, quality: u8) -> Result<Vec<u8>, image::ImageError> {
    let mut out = Vec::new();
    JpegEncoder::new_with_quality(&mut out, quality).encode(rgb, width, height, ExtendedColorType::Rgb8)?;
    Ok(out)
}

/// Decodes a JPEG that must have exactly the given dimensions.
pub fn jpeg_decode(bytes: &[u8], width: u32, height: u32, section: Section) -> Result<Vec<u8>, WireError> {
    let codec = |e: image::ImageError| WireError::Codec {
        section,
        message: e.to_string(),
    };
    let dec = JpegDecoder::new(Cursor::new(bytes)).map_err(codec)?;
    let dims = dec.dimensions();
    if dims != (width, height) {
        return Err(WireError::Invalid {
            section,
            message: format!("payload is {}x{}, expected {width}x{height}", dims.0, dims.1),
        });
    }
    Ok(DynamicImage::from_decoder(dec).map_err(codec)?.to_rgb8().into_raw())
}

/// Side of the square blocks flattened under regions; a multiple of every
/// JPEG MCU size the encoder uses.
const FLAT_BLOCK: u32 = 16;

/// Frame pixels with every aligned block that lies wholly inside a region
/// replaced by its mean colour. Those pixels are overwritten on decode, so
/// spending background bits on them is waste.
fn flatten_covered(frame: &Frame, rois: &[Rect]) -> Vec<u8> {
    let mut px = frame.pixels().to_vec();
    let w = frame.width() as usize;
    for r in rois {
        let bx0 = r.x.div_ceil(FLAT_BLOCK) * FLAT_BLOCK;
        let by0 = r.y.div_ceil(FLAT_BLOCK) * FLAT_BLOCK;
        for by in (by0..).step_by(FLAT_BLOCK as usize).take_while(|&y| y + FLAT_BLOCK <= r.y_end()) {
            for bx in (bx0..).step_by(FLAT_BLOCK as usize).take_while(|&x| x + FLAT_BLOCK <= r.x_end()) {
                let rows = by as usize..(by + FLAT_BLOCK) as usize;
                let cols = bx as usize..(bx + FLAT_BLOCK) as usize;
                let mut sum = [0u32; 3];
                for y in rows.clone() {
                    for x in cols.clone() {
                        for c in 0..3 {
                            sum[c] += u32::from(px[(y * w + x) * 3 + c]);
                        }
                    }
                }
                let mean = sum.map(|s| (s / (FLAT_BLOCK * FLAT_BLOCK)) as u8);
                for y in rows.clone() {
                    for x in cols.clone() {
                        px[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&mean);
                    }
                }
            }
        }
    }
    px
}

pub fn encode_frame(frame: &Frame, plan: &RoiPlan) -> Result<EncodedFrame, EncodeError> {
    let (w, h) = frame.dims();
    if w > u32::from(u16::MAX) || h > u32::from(u16::MAX) {
        return Err(EncodeError::TooLarge(w, h));
    }
    let frame_id = u32::try_from(frame.id).map_err(|_| EncodeError::FrameId(frame.id))?;
    RoiPlan::validate_quality(plan.q_roi, plan.q_bg).map_err(|e| EncodeError::Plan(e.to_string()))?;
    let mut regions = Vec::with_capacity(plan.rois.len());
    for (index, &rect) in plan.rois.iter().enumerate() {
        if rect.w == 0 || rect.h == 0 || rect.x_end() > w || rect.y_end() > h {
            return Err(EncodeError::RegionOutside { index, rect });
        }
        let crop = frame.crop(rect.x, rect.y, rect.w, rect.h);
        let payload = jpeg_encode(&crop, rect.w, rect.h, plan.q_roi).map_err(|source| EncodeError::Codec {
            section: Section::Roi(index),
            source,
        })?;
        regions.push(EncodedRegion { rect, payload });
    }
    let background = jpeg_encode(&flatten_covered(frame, &plan.rois), w, h, plan.q_bg).map_err(|source| EncodeError::Codec {
        section: Section::Background,
        source,
    })?;
    Ok(EncodedFrame {
        header: FrameHeader {
            frame_id,
            width: w as u16,
            height: h as u16,
            k: plan.k,
            q_roi: plan.q_roi,
            q_bg: plan.q_bg,
        },
        regions,
        background,
    })
}

/// Background first, then every region pasted over it. The frame timestamp
/// is not carried on the wire and comes back as zero.
pub fn decode_frame(enc: &EncodedFrame) -> Result<Frame, WireError> {
    enc.validate()?;
    let (w, h) = (u32::from(enc.header.width), u32::from(enc.header.height));
    let bg = jpeg_decode(&enc.background, w, h, Section::Background)?;
    let mut frame = Frame::new(u64::from(enc.header.frame_id), Ratio::from_integer(0), w, h, bg).map_err(|e| {
        WireError::Invalid {
            section: Section::Background,
            message: e.to_string(),
        }
    })?;
    for (i, r) in enc.regions.iter().enumerate() {
        let px = jpeg_decode(&r.payload, r.rect.w, r.rect.h, Section::Roi(i))?;
        frame.blit(r.rect.x, r.rect.y, r.rect.w, r.rect.h, &px);
    }
    Ok(frame)
}

pub fn decode_bytes(bytes: &[u8]) -> Result<Frame, WireError> {
    decode_frame(&EncodedFrame::from_bytes(bytes)?)
}

/// Size of the whole frame encoded at a single quality, wire overhead included.
pub fn uniform_size(frame: &Frame, q: u8) -> Result<usize, EncodeError> {
    Ok(encode_frame(frame, &RoiPlan::background_only(q))?.total_size())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: u32, h: u32) -> Frame {
        let mut px = Vec::with_capacity((w * h * 3) as usize);
        for y in 0..h {
            for x in 0..w {
                px.extend_from_slice(&[(x * 255 / w) as u8, (y * 255 / h) as u8, ((x ^ y) & 0xff) as u8]);
            }
        }
        Frame::new(3, Ratio::from_integer(0), w, h, px).unwrap()
    }

    #[test]
    fn background_only_roundtrip() {
        let f = gradient(64, 48);
        let enc = encode_frame(&f, &RoiPlan::background_only(90)).unwrap();
        assert!(enc.regions.is_empty());
        let d = decode_frame(&enc).unwrap();
        assert_eq!(d.dims(), f.dims());
        assert_eq!(d.id, 3);
    }

    #[test]
    fn equal_quality_size_is_structural_sum() {
        let f = gradient(96, 64);
        let plan = RoiPlan {
            k: 1,
            rois: vec![Rect { x: 16, y: 8, w: 40, h: 24 }],
            q_roi: 60,
            q_bg: 60,
        };
        let enc = encode_frame(&f, &plan).unwrap();
        let uni = encode_frame(&f, &RoiPlan::background_only(60)).unwrap();
        let overhead = uni.total_size() - uni.background.len();
        assert_eq!(enc.total_size(), overhead + enc.background.len() + 12 + enc.regions[0].payload.len());
    }

    #[test]
    fn only_whole_blocks_under_regions_are_flattened() {
        let f = gradient(96, 64);
        // covers block (16, 16) fully and blocks around it in part
        let r = Rect { x: 10, y: 12, w: 30, h: 24 };
        let px = flatten_covered(&f, &[r]);
        for y in 0..64u32 {
            for x in 0..96u32 {
                let o = ((y * 96 + x) * 3) as usize;
                let inside = (16..32).contains(&x) && (16..32).contains(&y);
                if inside {
                    assert_eq!(px[o..o + 3], px[((16 * 96 + 16) * 3) as usize..][..3]);
                } else {
                    assert_eq!(px[o..o + 3], f.pixel(x, y));
                }
            }
        }
        let dec = decode_frame(&encode_frame(&f, &RoiPlan { k: 1, rois: vec![r], q_roi: 100, q_bg: 10 }).unwrap()).unwrap();
        assert!(dec.pixel(20, 20).iter().zip(f.pixel(20, 20)).all(|(a, b)| a.abs_diff(b) <= 12));
    }

    #[test]
    fn region_outside_frame_rejected() {
        let f = gradient(32, 32);
        let plan = RoiPlan {
            k: 1,
            rois: vec![Rect { x: 20, y: 20, w: 20, h: 4 }],
            q_roi: 90,
            q_bg: 20,
        };
        assert!(matches!(encode_frame(&f, &plan), Err(EncodeError::RegionOutside { index: 0, .. })));
    }
}
