//! RGB frames and the pixel-change signal used for keyframes and mode switches.

use std::path::Path;

use num_rational::Ratio;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame must be at least 1x1, got {width}x{height}")]
    Empty { width: u32, height: u32 },
    #[error("pixel buffer has {got} bytes, expected {expected}")]
    BufferSize { got: usize, expected: usize },
    #[error("frame dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (u32, u32), b: (u32, u32) },
    #[error("image i/o: {0}")]
    Image(#[from] image::ImageError),
}

/// One video frame, row-major 8-bit RGB.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub id: u64,
    /// Seconds since stream start.
    pub timestamp: Ratio<i64>,
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(
        id: u64,
        timestamp: Ratio<i64>,
        width: u32,
        height: u32,
        pixels: Vec<u8>,
    ) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::Empty { width, height });
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(FrameError::BufferSize {
                got: pixels.len(),
                expected,
            });
        }
        Ok(Self {
            id,
            timestamp,
            width,
            height,
            pixels,
        })
    }

    /// Uniformly colored frame.
    pub fn filled(id: u64, width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self::new(id, Ratio::from_integer(0), width, height, pixels).expect("non-empty frame")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Copies out the `w x h` rectangle at `(x, y)`; caller keeps it in bounds.
    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> Vec<u8> {
        let mut out = Vec::with_capacity(w as usize * h as usize * 3);
        let stride = self.width as usize * 3;
        for row in y..y + h {
            let start = row as usize * stride + x as usize * 3;
            out.extend_from_slice(&self.pixels[start..start + w as usize * 3]);
        }
        out
    }

    /// Pastes an RGB block of `w x h` at `(x, y)`.
    pub fn blit(&mut self, x: u32, y: u32, w: u32, h: u32, rgb: &[u8]) {
        let stride = self.width as usize * 3;
        let row_len = w as usize * 3;
        for r in 0..h as usize {
            let dst = (y as usize + r) * stride + x as usize * 3;
            self.pixels[dst..dst + row_len].copy_from_slice(&rgb[r * row_len..(r + 1) * row_len]);
        }
    }

    pub fn load_png(path: &Path, id: u64, timestamp: Ratio<i64>) -> Result<Self, FrameError> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        Self::new(id, timestamp, w, h, img.into_raw())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), FrameError> {
        image::save_buffer_with_format(
            path,
            &self.pixels,
            self.width,
            self.height,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )?;
        Ok(())
    }
}

/// Mean absolute per-channel difference normalized by 255.
pub fn frame_diff(a: &Frame, b: &Frame) -> Result<f64, FrameError> {
    if a.dims() != b.dims() {
        return Err(FrameError::DimensionMismatch {
            a: a.dims(),
            b: b.dims(),
        });
    }
    let total: u64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&p, &q)| p.abs_diff(q) as u64)
        .sum();
    Ok(total as f64 / (a.pixels.len() as f64 * 255.0))
}
