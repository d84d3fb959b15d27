//! Residual statistics and report plumbing shared by the verification suites.

use serde::Serialize;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ResidualStats {
    pub max: f64,
    pub mean: f64,
    /// Sample point of the maximum.
    pub argmax: Vec<f64>,
    pub count: usize,
}

impl ResidualStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, value: f64, at: &[f64]) {
        // NaN must win so that broken samples are never hidden.
        if self.count == 0 || value > self.max || value.is_nan() && !self.max.is_nan() {
            self.max = value;
            self.argmax = at.to_vec();
        }
        self.mean += (value - self.mean) / (self.count + 1) as f64;
        self.count += 1;
    }

    pub fn merge(&mut self, other: &ResidualStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 || other.max > self.max || other.max.is_nan() {
            self.max = other.max;
            self.argmax = other.argmax.clone();
        }
        let n = (self.count + other.count) as f64;
        self.mean = (self.mean * self.count as f64 + other.mean * other.count as f64) / n;
        self.count += other.count;
    }

    pub fn within(&self, tol: f64) -> bool {
        self.count > 0 && self.max <= tol
    }
}

impl FromIterator<(f64, Vec<f64>)> for ResidualStats {
    fn from_iter<I: IntoIterator<Item = (f64, Vec<f64>)>>(iter: I) -> Self {
        let mut s = ResidualStats::new();
        for (v, x) in iter {
            s.push(v, &x);
        }
        s
    }
}

/// Largest absolute entry.
pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracks_max_and_mean() {
        let s: ResidualStats = [(1.0, vec![0.0]), (3.0, vec![1.0]), (2.0, vec![2.0])]
            .into_iter()
            .collect();
        assert_eq!(s.max, 3.0);
        assert_eq!(s.argmax, vec![1.0]);
        assert!((s.mean - 2.0).abs() < 1e-15);
        assert!(s.within(3.0) && !s.within(2.5));
    }

    #[test]
    fn nan_is_reported() {
        let mut s = ResidualStats::new();
        s.push(1.0, &[0.0]);
        s.push(f64::NAN, &[1.0]);
        assert!(s.max.is_nan());
        assert!(!s.within(10.0));
    }

    #[test]
    fn merge_matches_single_pass() {
        let mut a: ResidualStats = [(1.0, vec![]), (5.0, vec![])].into_iter().collect();
        let b: ResidualStats = [(2.0, vec![])].into_iter().collect();
        a.merge(&b);
        assert_eq!(a.count, 3);
        assert_eq!(a.max, 5.0);
        assert!((a.mean - 8.0 / 3.0).abs() < 1e-15);
    }
}
