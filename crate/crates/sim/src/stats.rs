//! Replication statistics and empirical distribution helpers.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Mean and 95% Student-t half width of independent replication values.
/// Fewer than two values give an infinite half width.
pub fn t_interval(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::INFINITY);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("degrees of freedom positive")
        .inverse_cdf(0.975);
    (mean, t * (var / n as f64).sqrt())
}

/// Sorted sample with step-function CDF.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut samples: Vec<f64>) -> Self {
        samples.retain(|x| !x.is_nan());
        samples.sort_by(f64::total_cmp);
        Self { sorted: samples }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.sorted.is_empty() {
            return f64::NAN;
        }
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// Fraction of samples exactly equal to zero.
    pub fn mass_at_zero(&self) -> f64 {
        let zeros = self.sorted.partition_point(|&v| v <= 0.0);
        zeros as f64 / self.sorted.len().max(1) as f64
    }

    /// Kolmogorov distance to a CDF that is continuous except for a
    /// possible atom at zero.
    pub fn ks_distance(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        let n = self.sorted.len() as f64;
        let mut worst: f64 = 0.0;
        let mut i = 0;
        while i < self.sorted.len() {
            let v = self.sorted[i];
            let mut k = i;
            while k < self.sorted.len() && self.sorted[k] == v {
                k += 1;
            }
            let left_emp = i as f64 / n;
            let right_emp = k as f64 / n;
            let right = cdf(v);
            let left = if v == 0.0 { 0.0 } else { right };
            worst = worst.max((right_emp - right).abs()).max((left_emp - left).abs());
            i = k;
        }
        worst
    }
}

/// Uniform fixed-size subsample of a stream.
#[derive(Debug, Clone)]
pub(crate) struct Reservoir {
    cap: usize,
    seen: u64,
    pub(crate) items: Vec<f64>,
}

impl Reservoir {
    pub(crate) fn new(cap: usize) -> Self {
        Self { cap, seen: 0, items: Vec::with_capacity(cap.min(1 << 16)) }
    }

    pub(crate) fn offer<R: Rng + ?Sized>(&mut self, x: f64, rng: &mut R) {
        self.seen += 1;
        if self.items.len() < self.cap {
            self.items.push(x);
        } else {
            let k = rng.random_range(0..self.seen);
            if (k as usize) < self.cap {
                self.items[k as usize] = x;
            }
        }
    }
}
