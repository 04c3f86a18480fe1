//! Axis-aligned boxes in corner form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{Real, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate box: ({x_min}, {y_min}, {x_max}, {y_max})")]
    Degenerate {
        x_min: String,
        y_min: String,
        x_max: String,
        y_max: String,
    },
}

/// Box with `x_min < x_max` and `y_min < y_max`, in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[T; 4]", try_from = "[T; 4]")]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct BoundingBox<T> {
    x_min: T,
    y_min: T,
    x_max: T,
    y_max: T,
}

impl<T: Scalar> From<BoundingBox<T>> for [T; 4] {
    fn from(b: BoundingBox<T>) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl<T: Scalar> TryFrom<[T; 4]> for BoundingBox<T> {
    type Error = GeometryError;

    fn try_from(c: [T; 4]) -> Result<Self, Self::Error> {
        Self::new(c[0], c[1], c[2], c[3])
    }
}

fn two<T: Scalar>() -> T {
    T::one() + T::one()
}

impl<T: Scalar> BoundingBox<T> {
    pub fn new(x_min: T, y_min: T, x_max: T, y_max: T) -> Result<Self, GeometryError> {
        // `!(a < b)` so that NaN corners are rejected too.
        if !(x_min < x_max) || !(y_min < y_max) {
            return Err(GeometryError::Degenerate {
                x_min: format!("{x_min:?}"),
                y_min: format!("{y_min:?}"),
                x_max: format!("{x_max:?}"),
                y_max: format!("{y_max:?}"),
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn x_min(&self) -> T {
        self.x_min
    }
    pub fn y_min(&self) -> T {
        self.y_min
    }
    pub fn x_max(&self) -> T {
        self.x_max
    }
    pub fn y_max(&self) -> T {
        self.y_max
    }

    pub fn width(&self) -> T {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> T {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn center(&self) -> (T, T) {
        (
            (self.x_min + self.x_max) / two(),
            (self.y_min + self.y_max) / two(),
        )
    }

    /// Overlap with positive area, if any.
    pub fn intersection(&self, other: &Self) -> Option<Self> {
        let x0 = self.x_min.max_of(other.x_min);
        let y0 = self.y_min.max_of(other.y_min);
        let x1 = self.x_max.min_of(other.x_max);
        let y1 = self.y_max.min_of(other.y_max);
        Self::new(x0, y0, x1, y1).ok()
    }

    pub fn intersection_area(&self, other: &Self) -> T {
        self.intersection(other)
            .map(|b| b.area())
            .unwrap_or_else(T::zero)
    }

    pub fn iou(&self, other: &Self) -> T {
        iou(self, other)
    }

    /// Smallest box covering both (corner-wise min/max).
    pub fn hull(&self, other: &Self) -> Self {
        Self {
            x_min: self.x_min.min_of(other.x_min),
            y_min: self.y_min.min_of(other.y_min),
            x_max: self.x_max.max_of(other.x_max),
            y_max: self.y_max.max_of(other.y_max),
        }
    }

    /// Grows every side by `pad` (must be non-negative).
    pub fn expand(&self, pad: T) -> Self {
        Self {
            x_min: self.x_min - pad,
            y_min: self.y_min - pad,
            x_max: self.x_max + pad,
            y_max: self.y_max + pad,
        }
    }

    /// Clamps into `[0, width] x [0, height]`; `None` when nothing is left.
    pub fn clamp_to(&self, width: T, height: T) -> Option<Self> {
        let zero = T::zero();
        Self::new(
            self.x_min.max_of(zero).min_of(width),
            self.y_min.max_of(zero).min_of(height),
            self.x_max.max_of(zero).min_of(width),
            self.y_max.max_of(zero).min_of(height),
        )
        .ok()
    }

    pub fn contains(&self, other: &Self) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }

    pub fn contains_point(&self, x: T, y: T) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn translate(&self, dx: T, dy: T) -> Self {
        Self {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }
}

impl<T: Real> BoundingBox<T> {
    pub fn from_center(cx: T, cy: T, w: T, h: T) -> Result<Self, GeometryError> {
        let half = T::lit(0.5);
        Self::new(cx - w * half, cy - h * half, cx + w * half, cy + h * half)
    }

    pub fn diagonal(&self) -> T {
        self.width().hypot(self.height())
    }

    pub fn cast<U: Real>(&self) -> BoundingBox<U> {
        BoundingBox {
            x_min: U::lit(self.x_min.as_f64()),
            y_min: U::lit(self.y_min.as_f64()),
            x_max: U::lit(self.x_max.as_f64()),
            y_max: U::lit(self.y_max.as_f64()),
        }
    }

    /// Snaps outward to whole pixels.
    pub fn round_out(&self) -> Self {
        Self {
            x_min: self.x_min.floor(),
            y_min: self.y_min.floor(),
            x_max: self.x_max.ceil(),
            y_max: self.y_max.ceil(),
        }
    }
}

/// Intersection over union; symmetric, in `[0, 1]`, 1 iff the boxes are equal.
pub fn iou<T: Scalar>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> T {
    let inter = a.intersection_area(b);
    if inter == T::zero() {
        return T::zero();
    }
    inter / (a.area() + b.area() - inter)
}
