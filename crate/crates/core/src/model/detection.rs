use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::geometry::BoundingBox;
use crate::scalar::Real;

/// Who produced a detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Edge,
    Cloud,
    Mined,
    Tracked,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct Detection<T> {
    #[serde(rename = "box")]
    bbox: BoundingBox<T>,
    class_id: u32,
    confidence: T,
    source: Source,
}

impl<T: Real> Detection<T> {
    /// Confidence is clamped into `[0, 1]`.
    pub fn new(bbox: BoundingBox<T>, class_id: u32, confidence: T, source: Source) -> Self {
        let confidence = if confidence.is_nan() {
            T::zero()
        } else {
            confidence.max(T::zero()).min(T::one())
        };
        Self {
            bbox,
            class_id,
            confidence,
            source,
        }
    }

    pub fn bbox(&self) -> &BoundingBox<T> {
        &self.bbox
    }

    pub fn class_id(&self) -> u32 {
        self.class_id
    }

    pub fn confidence(&self) -> T {
        self.confidence
    }

    pub fn source(&self) -> Source {
        self.source
    }

    /// Same detection at a different location; source and class are kept.
    pub fn with_box(&self, bbox: BoundingBox<T>) -> Self {
        Self { bbox, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtObject {
    pub bbox: BoundingBox<f64>,
    pub class_id: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub frame_id: u64,
    pub objects: Vec<GtObject>,
}

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("annotation i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
struct AnnotationLine {
    frame_id: u64,
    boxes: Vec<[f64; 5]>,
}

/// Reads newline-delimited JSON annotations; blank lines are skipped.
pub fn read_annotations(reader: impl BufRead) -> Result<Vec<GroundTruth>, AnnotationError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: AnnotationLine =
            serde_json::from_str(&line).map_err(|e| AnnotationError::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
        let mut objects = Vec::with_capacity(parsed.boxes.len());
        for b in parsed.boxes {
            let class = b[4];
            if class < 0.0 || class.fract() != 0.0 {
                return Err(AnnotationError::Parse {
                    line: lineno,
                    message: format!("class id {class} is not a non-negative integer"),
                });
            }
            let bbox = BoundingBox::new(b[0], b[1], b[2], b[3]).map_err(|e| {
                AnnotationError::Parse {
                    line: lineno,
                    message: e.to_string(),
                }
            })?;
            objects.push(GtObject {
                bbox,
                class_id: class as u32,
            });
        }
        out.push(GroundTruth {
            frame_id: parsed.frame_id,
            objects,
        });
    }
    Ok(out)
}

pub fn write_annotations<'a>(
    mut writer: impl Write,
    gts: impl IntoIterator<Item = &'a GroundTruth>,
) -> std::io::Result<()> {
    for gt in gts {
        let line = AnnotationLine {
            frame_id: gt.frame_id,
            boxes: gt
                .objects
                .iter()
                .map(|o| {
                    [
                        o.bbox.x_min(),
                        o.bbox.y_min(),
                        o.bbox.x_max(),
                        o.bbox.y_max(),
                        o.class_id as f64,
                    ]
                })
                .collect(),
        };
        serde_json::to_writer(&mut writer, &line)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confidence_clamped() {
        let b = BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(Detection::new(b, 0, 1.7, Source::Edge).confidence(), 1.0);
        assert_eq!(Detection::new(b, 0, -0.2, Source::Edge).confidence(), 0.0);
        assert_eq!(Detection::new(b, 0, f64::NAN, Source::Edge).confidence(), 0.0);
    }

    #[test]
    fn annotations_roundtrip() {
        let text = "{\"frame_id\":0,\"boxes\":[[1,2,3,4,7]]}\n\n{\"frame_id\":1,\"boxes\":[]}\n";
        let gts = read_annotations(text.as_bytes()).unwrap();
        assert_eq!(gts.len(), 2);
        assert_eq!(gts[0].objects[0].class_id, 7);
        let mut buf = Vec::new();
        write_annotations(&mut buf, &gts).unwrap();
        assert_eq!(read_annotations(buf.as_slice()).unwrap(), gts);
    }

    #[test]
    fn parse_errors_are_line_anchored() {
        let text = "{\"frame_id\":0,\"boxes\":[]}\n{\"frame_id\":1,\"boxes\":[[5,5,1,1,0]]}\n";
        match read_annotations(text.as_bytes()) {
            Err(AnnotationError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let text = "{\"frame_id\":0,\"boxes\":[[0,0,1,1,0.5]]}";
        assert!(matches!(
            read_annotations(text.as_bytes()),
            Err(AnnotationError::Parse { line: 1, .. })
        ));
    }
}
