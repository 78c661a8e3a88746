use alloc::format;
use alloc::vec::Vec;

use crate::error::invalid;
use crate::Result;

/// Time-varying joint distance and delay toll: `m` distance rates followed by
/// `m` delay rates.
#[derive(Debug, Clone, PartialEq)]
pub struct TollVector {
    /// Distance rates per tolling interval (currency/km).
    pub distance_rates: Vec<f64>,
    /// Delay rates per tolling interval (currency/h).
    pub delay_rates: Vec<f64>,
}

impl TollVector {
    pub fn new(distance_rates: Vec<f64>, delay_rates: Vec<f64>) -> Result<Self> {
        if distance_rates.len() != delay_rates.len() || distance_rates.is_empty() {
            return Err(invalid(format!(
                "toll needs m ≥ 1 distance and delay rates, got {} and {}",
                distance_rates.len(),
                delay_rates.len()
            )));
        }
        Ok(TollVector {
            distance_rates,
            delay_rates,
        })
    }

    pub fn zero(m: usize) -> Self {
        TollVector {
            distance_rates: alloc::vec![0.0; m],
            delay_rates: alloc::vec![0.0; m],
        }
    }

    /// Splits a flat `[v_1..v_m, w_1..w_m]` vector.
    pub fn from_flat(x: &[f64]) -> Result<Self> {
        if x.is_empty() || x.len() % 2 != 0 {
            return Err(invalid(format!(
                "flat toll vector must have even length 2m, got {}",
                x.len()
            )));
        }
        let m = x.len() / 2;
        Self::new(x[..m].to_vec(), x[m..].to_vec())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.distance_rates.clone();
        v.extend_from_slice(&self.delay_rates);
        v
    }

    /// Number of tolling intervals.
    pub fn intervals(&self) -> usize {
        self.distance_rates.len()
    }

    /// Rates `(v_h, ω_h)` of interval `h` (0-based).
    pub fn rates(&self, h: usize) -> (f64, f64) {
        (self.distance_rates[h], self.delay_rates[h])
    }
}

/// Box `τ_min ≤ τ ≤ τ_max` of the feasible toll rates, in the flat layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(invalid("bounds must have equal, nonzero length"));
        }
        if lower.len() % 2 != 0 {
            return Err(invalid("bounds must have length 2m"));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite()) || l > u {
                return Err(invalid(format!("bounds violate lower ≤ upper at index {i}")));
            }
        }
        Ok(Bounds { lower, upper })
    }

    /// Uniform per-kind bounds: distance rates in `[0, max_distance]`, delay
    /// rates in `[0, max_delay]`.
    pub fn uniform(m: usize, max_distance: f64, max_delay: f64) -> Result<Self> {
        let mut upper = alloc::vec![max_distance; m];
        upper.extend(core::iter::repeat(max_delay).take(m));
        Self::new(alloc::vec![0.0; 2 * m], upper)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn intervals(&self) -> usize {
        self.lower.len() / 2
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    /// Maps a unit-cube point into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(t, (l, h))| l + t * (h - l))
            .collect()
    }

    /// Maps a box point into the unit cube; degenerate dimensions map to 0.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, h))| if h > l { (v - l) / (h - l) } else { 0.0 })
            .collect()
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.lower.iter().copied().zip(self.upper.iter().copied()).collect()
    }
}

/// Toll pattern smoothing limits between adjacent tolling intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothing {
    /// Largest change of the distance rate (currency/km).
    pub alpha: f64,
    /// Largest change of the delay rate (currency/h).
    pub beta: f64,
}

/// One violated smoothing constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingViolation {
    /// Interval index `h` (0-based); the constraint couples `h` and `h + 1`.
    pub interval: usize,
    /// `true` for a distance-rate violation, `false` for a delay rate.
    pub distance: bool,
    /// Amount by which `|rate_h − rate_{h+1}|` exceeds the limit.
    pub excess: f64,
}

impl Smoothing {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(invalid("smoothing limits alpha and beta must be > 0"));
        }
        Ok(Smoothing { alpha, beta })
    }

    /// Signed excesses `|rate_h − rate_{h+1}| − limit` of every smoothing
    /// constraint, distance constraints first. Positive means violated.
    pub fn excesses(&self, x: &[f64]) -> Vec<f64> {
        let m = x.len() / 2;
        let mut out = Vec::with_capacity(2 * m.saturating_sub(1));
        for (rates, limit) in [(&x[..m], self.alpha), (&x[m..], self.beta)] {
            for w in rates.windows(2) {
                out.push((w[0] - w[1]).abs() - limit);
            }
        }
        out
    }

    pub fn violations(&self, toll: &TollVector) -> Vec<SmoothingViolation> {
        let mut out = Vec::new();
        for (rates, limit, distance) in [
            (&toll.distance_rates, self.alpha, true),
            (&toll.delay_rates, self.beta, false),
        ] {
            for (h, w) in rates.windows(2).enumerate() {
                let excess = (w[0] - w[1]).abs() - limit;
                if excess > 0.0 {
                    out.push(SmoothingViolation {
                        interval: h,
                        distance,
                        excess,
                    });
                }
            }
        }
        out
    }

    pub fn is_feasible(&self, toll: &TollVector) -> bool {
        self.violations(toll).is_empty()
    }

    /// Sequential clipping: for `h = 1..m−1` clip `rate_{h+1}` into
    /// `[rate_h − limit, rate_h + limit] ∩ bounds`. Operates on the flat layout.
    pub fn repair(&self, x: &mut [f64], bounds: &Bounds) {
        let m = x.len() / 2;
        for (offset, limit) in [(0, self.alpha), (m, self.beta)] {
            for h in offset..offset + m {
                x[h] = x[h].clamp(bounds.lower[h], bounds.upper[h]);
                if h > offset {
                    let lo = (x[h - 1] - limit).max(bounds.lower[h]);
                    let hi = (x[h - 1] + limit).min(bounds.upper[h]);
                    if lo <= hi {
                        x[h] = x[h].clamp(lo, hi);
                        // rounding in `x[h-1] ± limit` can leave the gap a hair too wide
                        while (x[h - 1] - x[h]).abs() > limit {
                            x[h] = if x[h] > x[h - 1] { x[h].next_down() } else { x[h].next_up() };
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn smoothing_example() {
        let s = Smoothing::new(1.0 / 3.0, 5.0).unwrap();
        let t = TollVector::new(vec![0.0, 0.5, 0.5], vec![1.0, 1.0, 1.0]).unwrap();
        let v = s.violations(&t);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].interval, 0);
        assert!(v[0].distance);
        assert!(s.is_feasible(&TollVector::new(vec![0.4; 4], vec![9.0; 4]).unwrap()));
    }

    #[test]
    fn repair_makes_feasible() {
        let b = Bounds::uniform(4, 1.0, 15.0).unwrap();
        let s = Smoothing::new(0.33, 5.0).unwrap();
        let mut x = vec![0.0, 1.0, 0.0, 1.0, 15.0, 0.0, 15.0, 2.0];
        s.repair(&mut x, &b);
        let t = TollVector::from_flat(&x).unwrap();
        assert!(s.is_feasible(&t), "{x:?}");
        assert!(b.contains(&x));
        assert_eq!(x[0], 0.0);
        assert!((x[1] - 0.33).abs() < 1e-15);
    }
}
