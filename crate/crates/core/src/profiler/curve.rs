use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Estimated misses of one core as a function of its color count.
///
/// Knots are the profiling points (ascending color counts). Values between
/// knots are linear interpolations; values outside the knot range are clamped
/// to the nearest knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissCurve {
    pub colors: Vec<f64>,
    pub misses: Vec<f64>,
    pub load_misses: Vec<f64>,
    /// Estimated LLC accesses over the interval (independent of size).
    pub accesses: f64,
}

/// An interpolated value plus whether the query had to be clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interpolated {
    pub value: f64,
    pub clamped: bool,
}

impl MissCurve {
    pub fn new(colors: Vec<f64>, misses: Vec<f64>, load_misses: Vec<f64>, accesses: f64) -> Result<Self> {
        if colors.is_empty() || colors.len() != misses.len() || colors.len() != load_misses.len() {
            return Err(Error::config("miss curve needs equal, non-empty knot lists"));
        }
        if colors.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("miss curve knots must be strictly increasing"));
        }
        if misses.iter().chain(&load_misses).any(|&v| !(v >= 0.0)) {
            return Err(Error::config("miss curve values must be non-negative"));
        }
        Ok(Self {
            colors,
            misses,
            load_misses,
            accesses,
        })
    }

    /// A curve from misses only; load misses are taken equal to misses.
    pub fn from_misses(colors: &[f64], misses: &[f64]) -> Result<Self> {
        Self::new(colors.to_vec(), misses.to_vec(), misses.to_vec(), 0.0)
    }

    pub fn min_colors(&self) -> f64 {
        self.colors[0]
    }

    pub fn max_colors(&self) -> f64 {
        *self.colors.last().expect("non-empty")
    }

    fn interp(&self, values: &[f64], colors: f64) -> Interpolated {
        let n = self.colors.len();
        if colors <= self.colors[0] {
            return Interpolated {
                value: values[0],
                clamped: colors < self.colors[0],
            };
        }
        if colors >= self.colors[n - 1] {
            return Interpolated {
                value: values[n - 1],
                clamped: colors > self.colors[n - 1],
            };
        }
        let j = self.colors.partition_point(|&c| c <= colors) - 1;
        let (c0, c1) = (self.colors[j], self.colors[j + 1]);
        let t = (colors - c0) / (c1 - c0);
        Interpolated {
            value: values[j] + t * (values[j + 1] - values[j]),
            clamped: false,
        }
    }

    pub fn interpolate_misses(&self, colors: f64) -> Interpolated {
        self.interp(&self.misses, colors)
    }

    pub fn interpolate_load_misses(&self, colors: f64) -> Interpolated {
        self.interp(&self.load_misses, colors)
    }

    /// Marginal gain: misses saved per extra color on the segment that starts
    /// at `colors`. At the top knot the final segment is used.
    pub fn mcu(&self, colors: f64) -> f64 {
        let n = self.colors.len();
        if n < 2 {
            return 0.0;
        }
        let j = if colors >= self.colors[n - 1] {
            n - 2
        } else if colors <= self.colors[0] {
            0
        } else {
            self.colors.partition_point(|&c| c <= colors) - 1
        };
        (self.misses[j] - self.misses[j + 1]) / (self.colors[j + 1] - self.colors[j])
    }

    /// Pairs of adjacent knots whose miss estimate rises with size.
    pub fn non_monotone_segments(&self) -> usize {
        self.misses.windows(2).filter(|w| w[1] > w[0]).count()
    }
}
