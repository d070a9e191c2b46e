use std::fmt::Write as _;
use std::path::Path;

use ndarray::Axis;

use super::FeatureTensor;
use crate::{Error, Result};

/// Per-channel min/max taken over a training corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleStats {
    pub min: Vec<f32>,
    pub max: Vec<f32>,
}

/// Running min/max. Merging is associative and commutative, so partial
/// accumulators from parallel workers can be combined in any order.
#[derive(Debug, Clone, Default)]
pub struct ScaleAccumulator {
    min: Vec<f32>,
    max: Vec<f32>,
}

impl ScaleAccumulator {
    pub fn push(&mut self, t: &FeatureTensor) -> Result<()> {
        let c = t.channels();
        if self.min.is_empty() {
            self.min = vec![f32::INFINITY; c];
            self.max = vec![f32::NEG_INFINITY; c];
        } else if self.min.len() != c {
            return Err(Error::Shape(format!(
                "tensor has {c} channels, corpus has {}",
                self.min.len()
            )));
        }
        for (ch, lane) in t.data().axis_iter(Axis(2)).enumerate() {
            for &v in lane.iter() {
                self.min[ch] = self.min[ch].min(v);
                self.max[ch] = self.max[ch].max(v);
            }
        }
        Ok(())
    }

    pub fn merge(mut self, other: ScaleAccumulator) -> Result<ScaleAccumulator> {
        if other.min.is_empty() {
            return Ok(self);
        }
        if self.min.is_empty() {
            return Ok(other);
        }
        if self.min.len() != other.min.len() {
            return Err(Error::Shape(
                "channel counts differ between partial stats".into(),
            ));
        }
        for c in 0..self.min.len() {
            self.min[c] = self.min[c].min(other.min[c]);
            self.max[c] = self.max[c].max(other.max[c]);
        }
        Ok(self)
    }

    pub fn finish(self) -> Result<ScaleStats> {
        if self.min.is_empty() {
            return Err(Error::InvalidInput(
                "cannot fit scaling on an empty corpus".into(),
            ));
        }
        for c in 0..self.min.len() {
            if !(self.max[c] > self.min[c]) {
                return Err(Error::Numeric(format!(
                    "channel {c} is degenerate (min = max = {})",
                    self.min[c]
                )));
            }
        }
        Ok(ScaleStats {
            min: self.min,
            max: self.max,
        })
    }
}

pub fn fit_scale01<'a, I>(corpus: I) -> Result<ScaleStats>
where
    I: IntoIterator<Item = &'a FeatureTensor>,
{
    let mut acc = ScaleAccumulator::default();
    for t in corpus {
        acc.push(t)?;
    }
    acc.finish()
}

/// Map each channel to `[0, 1]` with the fitted range, clamping values that
/// fall outside it.
pub fn apply_scale01(t: &FeatureTensor, s: &ScaleStats) -> Result<FeatureTensor> {
    if t.channels() != s.min.len() {
        return Err(Error::Shape(format!(
            "tensor has {} channels, stats have {}",
            t.channels(),
            s.min.len()
        )));
    }
    let mut data = t.data().clone();
    for (c, mut lane) in data.axis_iter_mut(Axis(2)).enumerate() {
        let (lo, hi) = (s.min[c], s.max[c]);
        let span = hi - lo;
        lane.mapv_inplace(|v| ((v - lo) / span).clamp(0.0, 1.0));
    }
    FeatureTensor::new(data)
}

impl ScaleStats {
    /// One `channel min max` line per channel.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# channel\tmin\tmax\n");
        for c in 0..self.min.len() {
            let _ = writeln!(s, "{c}\t{}\t{}", self.min[c], self.max[c]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            format: "scale stats",
            reason,
        };
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad(format!("line {}: expected 3 fields", n + 1)));
            }
            let idx: usize = f[0]
                .parse()
                .map_err(|_| bad(format!("line {}: bad channel", n + 1)))?;
            let lo: f32 = f[1]
                .parse()
                .map_err(|_| bad(format!("line {}: bad min", n + 1)))?;
            let hi: f32 = f[2]
                .parse()
                .map_err(|_| bad(format!("line {}: bad max", n + 1)))?;
            if idx != rows.len() {
                return Err(bad(format!(
                    "line {}: channels must be listed in order",
                    n + 1
                )));
            }
            if !(hi > lo) {
                return Err(bad(format!("line {}: max must exceed min", n + 1)));
            }
            rows.push((lo, hi));
        }
        if rows.is_empty() {
            return Err(bad("no channels".into()));
        }
        Ok(Self {
            min: rows.iter().map(|r| r.0).collect(),
            max: rows.iter().map(|r| r.1).collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
