use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub lr_max: f64,
    pub lr_min: f64,
    /// Length of the first cycle in steps; `None` means ten epochs.
    pub first_cycle_len: Option<usize>,
    pub cycle_mult: usize,
    pub momentum: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            lr_max: 0.1,
            lr_min: 1e-5,
            first_cycle_len: None,
            cycle_mult: 2,
            momentum: 0.9,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_min > 0.0 && self.lr_min < self.lr_max && self.lr_max.is_finite()) {
            return Err(Error::Config(format!(
                "learning rates must satisfy 0 < lr_min < lr_max (got {} and {})",
                self.lr_min, self.lr_max
            )));
        }
        if self.first_cycle_len == Some(0) || self.cycle_mult == 0 {
            return Err(Error::Config("cycle lengths must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        Ok(())
    }

    pub fn resolve(&self, steps_per_epoch: usize) -> Result<CosineRestart> {
        self.validate()?;
        let first = self.first_cycle_len.unwrap_or(10 * steps_per_epoch.max(1));
        Ok(CosineRestart {
            lr_max: self.lr_max,
            lr_min: self.lr_min,
            first_cycle_len: first,
            cycle_mult: self.cycle_mult,
        })
    }
}

/// Cosine decay with warm restarts. Cycle `i` has length
/// `L_i = first_cycle_len · cycle_mult^i` and spans offsets `t = 0..=L_i`,
/// so its last step sits exactly at `lr_min` before the next restart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineRestart {
    pub lr_max: f64,
    pub lr_min: f64,
    pub first_cycle_len: usize,
    pub cycle_mult: usize,
}

impl CosineRestart {
    /// `(cycle index, offset within cycle, cycle length)` of a step.
    pub fn locate(&self, step: usize) -> (usize, usize, usize) {
        let mut start = 0usize;
        let mut len = self.first_cycle_len;
        let mut cycle = 0;
        loop {
            if step <= start + len {
                return (cycle, step - start, len);
            }
            start += len + 1;
            len = len.saturating_mul(self.cycle_mult);
            cycle += 1;
        }
    }

    pub fn lr(&self, step: usize) -> f64 {
        let (_, t, len) = self.locate(step);
        let phase = std::f64::consts::PI * t as f64 / len as f64;
        self.lr_min + 0.5 * (self.lr_max - self.lr_min) * (1.0 + phase.cos())
    }

    pub fn is_cycle_end(&self, step: usize) -> bool {
        let (_, t, len) = self.locate(step);
        t == len
    }

    /// Step index at which cycle `i` starts.
    pub fn cycle_start(&self, cycle: usize) -> usize {
        let mut start = 0usize;
        let mut len = self.first_cycle_len;
        for _ in 0..cycle {
            start += len + 1;
            len = len.saturating_mul(self.cycle_mult);
        }
        start
    }
}

pub fn cosine_restart_lr(step: usize, schedule: &CosineRestart) -> f64 {
    schedule.lr(step)
}
