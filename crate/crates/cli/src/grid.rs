//! `start:stop:step` parameter grids.

use std::str::FromStr;

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    /// Number of points, counting `stop` when it is hit up to rounding.
    pub fn len(&self) -> usize {
        ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.start + i as f64 * self.step)
            .collect()
    }
}

impl FromStr for Grid {
    type Err = UsageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || UsageError(format!("grid must look like start:stop:step, got {s:?}"));
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(bad());
        };
        if !(start.is_finite() && stop.is_finite() && step.is_finite())
            || step <= 0.0
            || stop < start
        {
            return Err(UsageError(format!(
                "grid needs finite start <= stop and step > 0, got {s:?}"
            )));
        }
        if (stop - start) / step > 1e7 {
            return Err(UsageError(format!("grid {s:?} has too many points")));
        }
        Ok(Grid { start, stop, step })
    }
}
