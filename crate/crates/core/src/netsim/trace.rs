use std::io::{Read, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace needs at least two rows")]
    TooShort,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Step-wise link rate. Row `i` holds from `t_i` until `t_{i+1}`; the last
/// row only marks the end of the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthTrace {
    samples: Vec<(f64, f64)>,
}

impl BandwidthTrace {
    /// Times strictly increasing, rates finite and > 0, at least two rows.
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self, TraceError> {
        if samples.len() < 2 {
            return Err(TraceError::TooShort);
        }
        for (i, &(t, r)) in samples.iter().enumerate() {
            let line = i + 2;
            if !t.is_finite() || !r.is_finite() || r <= 0.0 {
                return Err(TraceError::Parse {
                    line,
                    message: format!("need finite t and rate > 0, got ({t}, {r})"),
                });
            }
            if i > 0 && t <= samples[i - 1].0 {
                return Err(TraceError::Parse {
                    line,
                    message: "t_s must be strictly increasing".into(),
                });
            }
        }
        Ok(Self { samples })
    }

    /// Constant rate on `[0, horizon]`.
    pub fn constant(rate: f64, horizon: f64) -> Self {
        Self::new(vec![(0.0, rate), (horizon, rate)]).expect("valid constant trace")
    }

    /// Same timing with every rate multiplied by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Result<Self, TraceError> {
        Self::new(self.samples.iter().map(|&(t, r)| (t, r * factor)).collect())
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn start(&self) -> f64 {
        self.samples[0].0
    }

    pub fn horizon(&self) -> f64 {
        self.samples[self.samples.len() - 1].0
    }

    /// Rate in force at `t`; `None` outside `[start, horizon)`.
    pub fn rate_at(&self, t: f64) -> Option<f64> {
        if t < self.start() || t >= self.horizon() {
            return None;
        }
        let i = self.samples.partition_point(|s| s.0 <= t) - 1;
        Some(self.samples[i].1)
    }

    /// Bytes the link carries over `[a, b]`, clipped to the trace.
    pub fn bytes_between(&self, a: f64, b: f64) -> f64 {
        let (a, b) = (a.max(self.start()), b.min(self.horizon()));
        if b <= a {
            return 0.0;
        }
        let mut total = 0.0;
        for w in self.samples.windows(2) {
            let (s, e) = (w[0].0.max(a), w[1].0.min(b));
            if e > s {
                total += (e - s) * w[0].1;
            }
        }
        total
    }

    /// Time-weighted mean rate over the `window` seconds before `t`; the
    /// instantaneous rate when no time has elapsed yet.
    pub fn trailing_mean(&self, t: f64, window: f64) -> Option<f64> {
        let t = t.min(self.horizon());
        let a = (t - window).max(self.start());
        if t > a {
            Some(self.bytes_between(a, t) / (t - a))
        } else {
            self.rate_at(t)
        }
    }

    /// Time at which `size` bytes started at `start` finish; `None` if the
    /// trace ends first.
    pub fn upload_end(&self, start: f64, size: f64) -> Option<f64> {
        if start < self.start() || start >= self.horizon() {
            return None;
        }
        if size <= 0.0 {
            return Some(start);
        }
        let mut left = size;
        let mut t = start;
        let i0 = self.samples.partition_point(|s| s.0 <= start) - 1;
        for w in self.samples[i0..].windows(2) {
            let (end, rate) = (w[1].0, w[0].1);
            let cap = (end - t) * rate;
            if cap >= left {
                return Some(t + left / rate);
            }
            left -= cap;
            t = end;
        }
        None
    }

    pub fn read_csv(r: impl Read) -> Result<Self, TraceError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers().map_err(|e| TraceError::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        if headers.len() != 2 || &headers[0] != "t_s" || &headers[1] != "bytes_per_s" {
            return Err(TraceError::Parse {
                line: 1,
                message: "header must be t_s,bytes_per_s".into(),
            });
        }
        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| TraceError::Parse {
                line,
                message: e.to_string(),
            })?;
            let num = |j: usize| -> Result<f64, TraceError> {
                rec.get(j).unwrap_or("").parse::<f64>().map_err(|e| TraceError::Parse {
                    line,
                    message: format!("column {}: {e}", j + 1),
                })
            };
            samples.push((num(0)?, num(1)?));
        }
        Self::new(samples)
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<(), TraceError> {
        writeln!(w, "t_s,bytes_per_s")?;
        for (t, r) in &self.samples {
            writeln!(w, "{t},{r}")?;
        }
        Ok(())
    }
}
