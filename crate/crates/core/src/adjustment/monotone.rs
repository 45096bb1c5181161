use serde::{Deserialize, Serialize};

use super::AdjustmentError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct KnotsDef {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

/// Strictly increasing C¹ Hermite interpolant through the knots, extended
/// affinely beyond them with the end slopes.
///
/// Interior slopes are the weighted harmonic means of the adjacent secants
/// (Fritsch–Butland), which keeps every slope within twice the smaller secant
/// and the derivative strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KnotsDef", into = "KnotsDef")]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

impl From<MonotoneCubic> for KnotsDef {
    fn from(m: MonotoneCubic) -> Self {
        KnotsDef { xs: m.xs, ys: m.ys }
    }
}

impl TryFrom<KnotsDef> for MonotoneCubic {
    type Error = AdjustmentError;

    fn try_from(k: KnotsDef) -> Result<Self, Self::Error> {
        let pts: Vec<(f64, f64)> = k.xs.into_iter().zip(k.ys).collect();
        MonotoneCubic::new(&pts)
    }
}

impl MonotoneCubic {
    pub fn new(knots: &[(f64, f64)]) -> Result<Self, AdjustmentError> {
        if knots.len() < 2 {
            return Err(AdjustmentError::NotMonotone("need at least two knots".into()));
        }
        for (i, w) in knots.windows(2).enumerate() {
            let ok = w[1].0 > w[0].0 && w[1].1 > w[0].1;
            if !ok || !w[1].0.is_finite() || !w[1].1.is_finite() {
                return Err(AdjustmentError::NotMonotone(format!(
                    "knots {i} and {} are not strictly increasing",
                    i + 1
                )));
            }
        }
        let xs: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let ys: Vec<f64> = knots.iter().map(|k| k.1).collect();
        let n = xs.len();
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let s: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
        let mut ds = vec![0.0; n];
        ds[0] = s[0];
        ds[n - 1] = s[n - 2];
        for i in 1..n - 1 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            ds[i] = (w1 + w2) / (w1 / s[i - 1] + w2 / s[i]);
        }
        Ok(Self { xs, ys, ds })
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    fn hermite(&self, i: usize, x: f64) -> f64 {
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.ds[i] + h01 * self.ys[i + 1] + h11 * h * self.ds[i + 1]
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0] + self.ds[0] * (x - self.xs[0]);
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1] + self.ds[n - 1] * (x - self.xs[n - 1]);
        }
        let i = self.xs.partition_point(|&k| k <= x) - 1;
        if x == self.xs[i] {
            return self.ys[i];
        }
        self.hermite(i, x)
    }

    pub fn eval_inverse(&self, y: f64) -> f64 {
        let n = self.ys.len();
        if y <= self.ys[0] {
            return self.xs[0] + (y - self.ys[0]) / self.ds[0];
        }
        if y >= self.ys[n - 1] {
            return self.xs[n - 1] + (y - self.ys[n - 1]) / self.ds[n - 1];
        }
        let i = self.ys.partition_point(|&k| k <= y) - 1;
        if y == self.ys[i] {
            return self.xs[i];
        }
        let (mut lo, mut hi) = (self.xs[i], self.xs[i + 1]);
        let mut x = lo + (y - self.ys[i]) / (self.ys[i + 1] - self.ys[i]) * (hi - lo);
        // Newton inside a shrinking bracket; bisect whenever a step escapes it
        for _ in 0..200 {
            let f = self.hermite(i, x) - y;
            if f == 0.0 {
                return x;
            }
            if f < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            if hi - lo <= 2.0 * f64::EPSILON * hi.abs().max(lo.abs()).max(1e-300) {
                break;
            }
            let step = f / self.slope(x);
            if step.abs() <= f64::EPSILON * x.abs() {
                break;
            }
            let next = x - step;
            x = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        }
        x
    }

    /// Derivative; positive everywhere.
    pub fn slope(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ds[0];
        }
        if x >= self.xs[n - 1] {
            return self.ds[n - 1];
        }
        let i = self.xs.partition_point(|&k| k <= x) - 1;
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let d00 = (6.0 * t2 - 6.0 * t) / h;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = (-6.0 * t2 + 6.0 * t) / h;
        let d11 = 3.0 * t2 - 2.0 * t;
        d00 * self.ys[i] + d10 * self.ds[i] + d01 * self.ys[i + 1] + d11 * self.ds[i + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_and_inverts() {
        let k = [(0.0, 0.0), (1.0, 0.1), (1.5, 2.0), (4.0, 2.2), (5.0, 9.0)];
        let m = MonotoneCubic::new(&k).unwrap();
        for &(x, y) in &k {
            assert_eq!(m.eval(x), y);
        }
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=600 {
            let x = -1.0 + i as f64 * 0.01;
            let y = m.eval(x);
            assert!(y > prev);
            assert!(m.slope(x) > 0.0);
            prev = y;
            assert!((m.eval_inverse(y) - x).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn rejects_flat_or_decreasing() {
        assert!(MonotoneCubic::new(&[(0.0, 0.0), (1.0, 0.0)]).is_err());
        assert!(MonotoneCubic::new(&[(0.0, 0.0), (1.0, 1.0), (0.5, 2.0)]).is_err());
    }
}
