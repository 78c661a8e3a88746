//! Space-filling designs: Latin hypercube sampling, maximin selection among
//! candidate plans, and the initial sample plan of the toll optimizer.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::invalid;
use crate::{Bounds, Result, Rng, TollVector};

/// Number of candidate Latin hypercubes compared by [`maximin_lhs`] when
/// building the initial plan.
pub const DEFAULT_MAXIMIN_CANDIDATES: usize = 100;

/// `n × d` unit-cube design, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanMatrix {
    n: usize,
    d: usize,
    points: Vec<f64>,
}

impl PlanMatrix {
    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.d)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.points[i * self.d + j]).collect()
    }

    /// Smallest Euclidean distance between two distinct rows (`+∞` for a
    /// single row).
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let d2: f64 = self
                    .row(i)
                    .iter()
                    .zip(self.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d2 < best {
                    best = d2;
                }
            }
        }
        libm::sqrt(best)
    }

    /// True when every column places exactly one value in each stratum
    /// `[i/n, (i+1)/n)`.
    pub fn is_stratified(&self) -> bool {
        (0..self.d).all(|j| {
            let mut seen = alloc::vec![false; self.n];
            self.column(j).into_iter().all(|v| {
                if !(0.0..=1.0).contains(&v) {
                    return false;
                }
                let s = ((v * self.n as f64) as usize).min(self.n - 1);
                !core::mem::replace(&mut seen[s], true)
            })
        })
    }
}

/// Plain Latin hypercube: each dimension is cut into `n` equal strata, one
/// uniform draw per stratum, strata paired across dimensions by independent
/// random permutations.
pub fn lhs(n: usize, d: usize, rng: &mut Rng) -> Result<PlanMatrix> {
    if n == 0 || d == 0 {
        return Err(invalid("latin hypercube needs n ≥ 1 and d ≥ 1"));
    }
    let mut points = alloc::vec![0.0; n * d];
    let mut perm: Vec<usize> = (0..n).collect();
    let width = 1.0 / n as f64;
    for j in 0..d {
        perm.shuffle(rng);
        for (i, &stratum) in perm.iter().enumerate() {
            let u: f64 = rng.gen();
            // stays inside [stratum/n, (stratum+1)/n) even after rounding
            let v = (stratum as f64 + u) * width;
            points[i * d + j] = v.min((stratum + 1) as f64 * width - f64::EPSILON).max(0.0);
        }
    }
    Ok(PlanMatrix { n, d, points })
}

/// Draws `n_candidates` Latin hypercubes and keeps the one with the largest
/// minimum pairwise distance (first encountered on ties).
pub fn maximin_lhs(n: usize, d: usize, n_candidates: usize, rng: &mut Rng) -> Result<PlanMatrix> {
    if n_candidates == 0 {
        return Err(invalid("maximin selection needs at least one candidate"));
    }
    let mut best = lhs(n, d, rng)?;
    let mut best_dist = best.min_pairwise_distance();
    for _ in 1..n_candidates {
        let cand = lhs(n, d, rng)?;
        let dist = cand.min_pairwise_distance();
        if dist > best_dist {
            best = cand;
            best_dist = dist;
        }
    }
    Ok(best)
}

/// Size `2(2m + 1)` of the Latin hypercube part of the initial plan.
pub fn lhs_plan_size(m: usize) -> usize {
    2 * (2 * m + 1)
}

/// Total initial plan size: the Latin hypercube plus `τ_min`, `τ_max` and the
/// midpoint.
pub fn initial_plan_size(m: usize) -> usize {
    lhs_plan_size(m) + 3
}

/// Initial sample plan for `m` tolling intervals: `2(2m+1)` maximin LHS points
/// scaled into the bounds, then `τ_min`, `τ_max` and the box midpoint.
pub fn build_initial_plan(m: usize, bounds: &Bounds, rng: &mut Rng) -> Result<Vec<TollVector>> {
    if m == 0 {
        return Err(invalid("initial plan needs m ≥ 1"));
    }
    if bounds.intervals() != m {
        return Err(invalid("bounds dimension does not match 2m"));
    }
    if bounds.lower == bounds.upper {
        log::warn!("degenerate toll bounds: every initial sample point coincides");
    }
    let unit = maximin_lhs(lhs_plan_size(m), 2 * m, DEFAULT_MAXIMIN_CANDIDATES, rng)?;
    let mut plan: Vec<TollVector> = unit
        .iter_rows()
        .map(|u| TollVector::from_flat(&bounds.from_unit(u)))
        .collect::<Result<_>>()?;
    plan.push(TollVector::from_flat(&bounds.lower)?);
    plan.push(TollVector::from_flat(&bounds.upper)?);
    plan.push(TollVector::from_flat(&bounds.midpoint())?);
    Ok(plan)
}
