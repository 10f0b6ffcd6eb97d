//! Uniform reporting grid shared by trajectory, convolution and ensemble code.

use crate::error::{CoreError, Result};

/// A uniform time grid `t0, t0 + dt, ..., t0 + (n-1) dt`.
///
/// Times are always recomputed as `t0 + i * dt` rather than accumulated, so
/// grids are free of summation drift and two grids built from the same
/// `(t0, dt, n)` are bit-identical.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
}

impl UniformGrid {
    /// Grid covering `[t0, t_end]` with spacing `dt` (last point is the
    /// largest `t0 + i dt <= t_end` up to rounding slack).
    pub fn from_range(t0: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(CoreError::NonUniformGrid(format!("dt must be positive (got {dt})")));
        }
        if !(t_end >= t0) {
            return Err(CoreError::NonUniformGrid(format!(
                "t_end {t_end} must be >= t0 {t0}"
            )));
        }
        let n = ((t_end - t0) / dt + 1e-9).floor() as usize + 1;
        Ok(UniformGrid { t0, dt, n })
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.time(i)).collect()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Index of the first grid point at or after `t` (clamped to `n`), with
    /// rounding slack so `t` sitting a hair above a grid point still maps to
    /// that point.
    pub fn first_index_at_or_after(&self, t: f64) -> usize {
        if t <= self.t0 {
            return 0;
        }
        let raw = ((t - self.t0) / self.dt - 1e-9).ceil();
        (raw.max(0.0) as usize).min(self.n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_construction() {
        let g = UniformGrid::from_range(0.0, 1.0, 1e-4).unwrap();
        assert_eq!(g.n, 10001);
        assert_eq!(g.time(0), 0.0);
        assert!((g.time(10000) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn index_lookup() {
        let g = UniformGrid::from_range(0.0, 1.0, 0.1).unwrap();
        assert_eq!(g.first_index_at_or_after(-1.0), 0);
        assert_eq!(g.first_index_at_or_after(0.05), 1);
        assert_eq!(g.first_index_at_or_after(0.1), 1);
        assert_eq!(g.first_index_at_or_after(0.3000000000000001), 3);
        assert_eq!(g.first_index_at_or_after(99.0), g.n);
    }

    #[test]
    fn rejects_bad_spacing() {
        assert!(UniformGrid::from_range(0.0, 1.0, 0.0).is_err());
        assert!(UniformGrid::from_range(1.0, 0.0, 0.1).is_err());
    }
}
