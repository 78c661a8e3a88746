//! DIRECT (DIviding RECTangles) global minimization with a quadratic penalty
//! wrapper for inequality constraints.
//!
//! The box is normalized to the unit cube. Side lengths are powers of 1/3, so
//! each rectangle stores one trisection level per dimension; diameters are
//! computed from the sorted levels so equal-shaped rectangles compare equal
//! bit for bit.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::invalid;
use crate::Result;

/// Jones' balance parameter default.
pub const DEFAULT_EPSILON: f64 = 1e-4;

/// How the evaluation budget ends a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BudgetPolicy {
    /// Stop before an iteration whose evaluations would exceed the budget.
    #[default]
    Strict,
    /// Check the budget only after an iteration completes; the last iteration
    /// may overshoot.
    CompleteIteration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectOptions {
    pub max_evals: usize,
    pub epsilon: f64,
    pub budget: BudgetPolicy,
}

impl DirectOptions {
    pub fn new(max_evals: usize) -> Self {
        DirectOptions {
            max_evals,
            epsilon: DEFAULT_EPSILON,
            budget: BudgetPolicy::Strict,
        }
    }
}

/// A rectangle of the partition, in unit-cube coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperRect {
    pub center: Vec<f64>,
    /// Trisection count per dimension; side length is `3^-level`.
    pub levels: Vec<u32>,
    pub f_center: f64,
    /// Half the Euclidean norm of the side lengths.
    pub diameter: f64,
}

impl HyperRect {
    fn new(center: Vec<f64>, levels: Vec<u32>, f_center: f64) -> Self {
        let diameter = diameter_of(&levels);
        HyperRect {
            center,
            levels,
            f_center,
            diameter,
        }
    }

    pub fn side_lengths(&self) -> Vec<f64> {
        self.levels.iter().map(|&l| third_pow(l)).collect()
    }

    pub fn volume(&self) -> f64 {
        self.side_lengths().iter().product()
    }
}

fn third_pow(level: u32) -> f64 {
    libm::pow(3.0, -(level as f64))
}

fn diameter_of(levels: &[u32]) -> f64 {
    let mut sorted = levels.to_vec();
    sorted.sort_unstable();
    let s: f64 = sorted.iter().map(|&l| third_pow(l) * third_pow(l)).sum();
    0.5 * libm::sqrt(s)
}

/// One DIRECT iteration summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Cumulative evaluations after the iteration.
    pub evaluations: usize,
    pub best_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectResult {
    /// Incumbent in the original coordinates.
    pub point: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// Per-iteration history; entry 0 is the initial center evaluation.
    pub history: Vec<IterationRecord>,
    /// Best-so-far value after every evaluation.
    pub trace: Vec<f64>,
}

/// Incremental DIRECT state. [`direct_minimize`] drives it to completion;
/// the stepwise API exposes the partition between iterations.
pub struct Direct<F> {
    f: F,
    bounds: Vec<(f64, f64)>,
    epsilon: f64,
    rects: Vec<HyperRect>,
    best: usize,
    trace: Vec<f64>,
    history: Vec<IterationRecord>,
}

impl<F: FnMut(&[f64]) -> f64> Direct<F> {
    /// Normalizes the box and evaluates its center.
    pub fn new(f: F, bounds: &[(f64, f64)], epsilon: f64) -> Result<Self> {
        if bounds.is_empty() {
            return Err(invalid("DIRECT needs at least one dimension"));
        }
        if bounds.iter().any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u)) {
            return Err(invalid("DIRECT box must be finite with lower < upper"));
        }
        if !(epsilon >= 0.0) {
            return Err(invalid("DIRECT epsilon must be ≥ 0"));
        }
        let d = bounds.len();
        let mut s = Direct {
            f,
            bounds: bounds.to_vec(),
            epsilon,
            rects: Vec::new(),
            best: 0,
            trace: Vec::new(),
            history: Vec::new(),
        };
        let center = vec![0.5; d];
        let fc = s.eval(&center);
        s.rects.push(HyperRect::new(center, vec![0; d], fc));
        s.history.push(IterationRecord {
            iteration: 0,
            evaluations: 1,
            best_value: fc,
        });
        Ok(s)
    }

    fn eval(&mut self, u: &[f64]) -> f64 {
        let x = self.to_original(u);
        let v = (self.f)(&x);
        let v = if v.is_finite() { v } else { f64::INFINITY };
        let prev = self.trace.last().copied().unwrap_or(f64::INFINITY);
        self.trace.push(if v < prev { v } else { prev });
        v
    }

    fn to_original(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.bounds)
            .map(|(t, (l, h))| l + t * (h - l))
            .collect()
    }

    pub fn rects(&self) -> &[HyperRect] {
        &self.rects
    }

    pub fn evaluations(&self) -> usize {
        self.trace.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn best_value(&self) -> f64 {
        self.rects[self.best].f_center
    }

    /// Indices of the potentially optimal rectangles, ascending.
    ///
    /// Walks the lower-right convex hull of the `(diameter, f)` cloud from the
    /// largest diameter downwards, then drops vertices that fail the
    /// `f_j − K·d_j ≤ f_min − ε|f_min|` test with their largest admissible `K`.
    pub fn potentially_optimal(&self) -> Vec<usize> {
        // (diameter, min f, members with that f)
        let mut groups: Vec<(f64, f64, Vec<usize>)> = Vec::new();
        for (i, r) in self.rects.iter().enumerate() {
            if !r.f_center.is_finite() {
                continue;
            }
            match groups.iter_mut().find(|g| g.0 == r.diameter) {
                Some(g) => match r.f_center.partial_cmp(&g.1) {
                    Some(Ordering::Less) => {
                        g.1 = r.f_center;
                        g.2 = vec![i];
                    }
                    Some(Ordering::Equal) => g.2.push(i),
                    _ => {}
                },
                None => groups.push((r.diameter, r.f_center, vec![i])),
            }
        }
        if groups.is_empty() {
            // nothing finite yet: split the largest rectangle
            let largest = (0..self.rects.len())
                .max_by(|&a, &b| {
                    self.rects[a]
                        .diameter
                        .partial_cmp(&self.rects[b].diameter)
                        .unwrap_or(Ordering::Equal)
                        .then(b.cmp(&a))
                })
                .unwrap_or(0);
            return vec![largest];
        }
        groups.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));

        let f_min = self.best_value();
        let threshold = f_min - self.epsilon * f_min.abs();
        let mut selected: Vec<usize> = Vec::new();
        let mut cur = 0usize;
        let mut upper = f64::INFINITY;
        loop {
            let (d_cur, f_cur, _) = groups[cur];
            if upper == f64::INFINITY || f_cur - upper * d_cur <= threshold {
                selected.extend_from_slice(&groups[cur].2);
            }
            let mut k_max = f64::NEG_INFINITY;
            let mut next: Vec<usize> = Vec::new();
            for (gi, g) in groups.iter().enumerate().skip(cur + 1) {
                let slope = (f_cur - g.1) / (d_cur - g.0);
                match slope.partial_cmp(&k_max) {
                    Some(Ordering::Greater) => {
                        k_max = slope;
                        next = vec![gi];
                    }
                    Some(Ordering::Equal) => next.push(gi),
                    _ => {}
                }
            }
            if next.is_empty() || !(k_max > 0.0) {
                break;
            }
            // collinear vertices share the slope on both sides
            for &gi in &next[..next.len() - 1] {
                let (d, f, _) = groups[gi];
                if f - k_max * d <= threshold {
                    selected.extend_from_slice(&groups[gi].2);
                }
            }
            cur = next[next.len() - 1];
            upper = k_max;
        }
        selected.sort_unstable();
        selected.dedup();
        selected
    }

    /// Evaluations the next iteration would spend on `selected`.
    pub fn iteration_cost(&self, selected: &[usize]) -> usize {
        selected
            .iter()
            .map(|&i| {
                let r = &self.rects[i];
                let lmin = r.levels.iter().copied().min().unwrap_or(0);
                2 * r.levels.iter().filter(|&&l| l == lmin).count()
            })
            .sum()
    }

    /// Trisects every rectangle in `selected` (indices into [`Self::rects`]).
    pub fn divide(&mut self, selected: &[usize]) {
        for &j in selected {
            self.trisect(j);
        }
        let iteration = self.history.len();
        self.history.push(IterationRecord {
            iteration,
            evaluations: self.evaluations(),
            best_value: self.best_value(),
        });
    }

    /// One full iteration: select and divide.
    pub fn step(&mut self) -> Vec<usize> {
        let po = self.potentially_optimal();
        self.divide(&po);
        po
    }

    fn trisect(&mut self, j: usize) {
        let lmin = self.rects[j].levels.iter().copied().min().unwrap_or(0);
        let dims: Vec<usize> = (0..self.rects[j].levels.len())
            .filter(|&i| self.rects[j].levels[i] == lmin)
            .collect();
        let delta = third_pow(lmin + 1);
        let center = self.rects[j].center.clone();
        let mut samples: Vec<(usize, f64, Vec<f64>, f64, Vec<f64>, f64)> = Vec::with_capacity(dims.len());
        for &i in &dims {
            let mut plus = center.clone();
            plus[i] += delta;
            let fp = self.eval(&plus);
            let mut minus = center.clone();
            minus[i] -= delta;
            let fm = self.eval(&minus);
            samples.push((i, fp.min(fm), plus, fp, minus, fm));
        }
        // smallest w first; stable sort keeps increasing dimension on ties
        samples.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal));
        let mut levels = self.rects[j].levels.clone();
        for (i, _, plus, fp, minus, fm) in samples {
            levels[i] += 1;
            self.push_rect(HyperRect::new(plus, levels.clone(), fp));
            self.push_rect(HyperRect::new(minus, levels.clone(), fm));
        }
        let f_center = self.rects[j].f_center;
        self.rects[j] = HyperRect::new(center, levels, f_center);
    }

    fn push_rect(&mut self, r: HyperRect) {
        let better = r.f_center < self.rects[self.best].f_center;
        self.rects.push(r);
        if better {
            self.best = self.rects.len() - 1;
        }
    }

    pub fn finish(self) -> DirectResult {
        let best = &self.rects[self.best];
        DirectResult {
            point: self.to_original(&best.center),
            value: best.f_center,
            evaluations: self.trace.len(),
            history: self.history,
            trace: self.trace,
        }
    }
}

/// Minimizes `f` over `bounds` with DIRECT until the evaluation budget ends
/// the run (see [`BudgetPolicy`]).
pub fn direct_minimize<F>(f: F, bounds: &[(f64, f64)], options: &DirectOptions) -> Result<DirectResult>
where
    F: FnMut(&[f64]) -> f64,
{
    if options.max_evals == 0 {
        return Err(invalid("DIRECT needs max_evals ≥ 1"));
    }
    let mut state = Direct::new(f, bounds, options.epsilon)?;
    loop {
        let po = state.potentially_optimal();
        let cost = state.iteration_cost(&po);
        let go = match options.budget {
            BudgetPolicy::Strict => state.evaluations() + cost <= options.max_evals,
            BudgetPolicy::CompleteIteration => state.evaluations() < options.max_evals,
        };
        if !go || cost == 0 {
            break;
        }
        state.divide(&po);
    }
    Ok(state.finish())
}

/// `ρ · Σ max(0, v_j)²` over signed constraint excesses.
pub fn quadratic_penalty(excesses: impl IntoIterator<Item = f64>, rho: f64) -> f64 {
    rho * excesses.into_iter().map(|v| if v > 0.0 { v * v } else { 0.0 }).sum::<f64>()
}

/// Signed-excess constraint function; positive values are violations.
pub type ConstraintFn<'a> = Box<dyn Fn(&[f64]) -> f64 + 'a>;

/// `g(x) = f(x) + ρ Σ_j max(0, c_j(x))²`.
pub fn penalized_objective<'a, F>(
    mut f: F,
    constraints: Vec<ConstraintFn<'a>>,
    rho: f64,
) -> Result<impl FnMut(&[f64]) -> f64 + 'a>
where
    F: FnMut(&[f64]) -> f64 + 'a,
{
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(invalid("penalty weight rho must be > 0"));
    }
    Ok(move |x: &[f64]| f(x) + quadratic_penalty(constraints.iter().map(|c| c(x)), rho))
}

/// The `2(m − 1)` smoothing constraints of a flat toll vector as separate
/// signed-excess functions.
pub fn smoothing_constraints<'a>(smoothing: crate::Smoothing, m: usize) -> Vec<ConstraintFn<'a>> {
    let mut out: Vec<ConstraintFn<'a>> = Vec::new();
    for (offset, limit) in [(0usize, smoothing.alpha), (m, smoothing.beta)] {
        for h in 0..m.saturating_sub(1) {
            let a = offset + h;
            out.push(Box::new(move |x: &[f64]| (x[a] - x[a + 1]).abs() - limit));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_sample_is_center() {
        let mut calls = Vec::new();
        let r = direct_minimize(
            |x: &[f64]| {
                calls.push(x[0]);
                (x[0] - 0.3) * (x[0] - 0.3)
            },
            &[(0.0, 1.0)],
            &DirectOptions::new(50),
        )
        .unwrap();
        assert_eq!(calls[0], 0.5);
        assert!((r.trace[0] - 0.04).abs() < 1e-15);
        assert!((r.point[0] - 0.3).abs() < 1e-2);
        assert!(r.evaluations <= 50);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut seq = Vec::new();
            direct_minimize(
                |x: &[f64]| {
                    seq.push(x.to_vec());
                    libm::sin(5.0 * x[0]) + x[1] * x[1]
                },
                &[(-1.0, 2.0), (-1.0, 1.0)],
                &DirectOptions::new(80),
            )
            .unwrap();
            seq
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn overshoot_policy_completes_iteration() {
        let mut opts = DirectOptions::new(100);
        opts.budget = BudgetPolicy::CompleteIteration;
        let r = direct_minimize(|x: &[f64]| x.iter().map(|v| (v - 0.2) * (v - 0.2)).sum(), &[(0.0, 1.0); 16], &opts).unwrap();
        // 1 + 2·16 first, then bursts until the count passes 100
        assert_eq!(r.history[1].evaluations, 33);
        assert!(r.evaluations >= 100);
        let strict = direct_minimize(|x: &[f64]| x.iter().map(|v| (v - 0.2) * (v - 0.2)).sum(), &[(0.0, 1.0); 16], &DirectOptions::new(100)).unwrap();
        assert!(strict.evaluations <= 100);
    }

    #[test]
    fn penalty_example() {
        let s = crate::Smoothing::new(0.33, 5.0).unwrap();
        let mut g = penalized_objective(|_: &[f64]| 1.5, smoothing_constraints(s, 2), 100.0).unwrap();
        // v = [0, 1], w = [3, 3]
        let v = g(&[0.0, 1.0, 3.0, 3.0]);
        assert!((v - 1.5 - 44.89).abs() < 1e-9);
        assert_eq!(g(&[0.2, 0.3, 3.0, 4.0]), 1.5);
        assert!(penalized_objective(|_: &[f64]| 0.0, Vec::new(), 0.0).is_err());
    }

    #[test]
    fn non_finite_is_never_selected() {
        let r = direct_minimize(
            |x: &[f64]| if x[0] > 0.6 { f64::NAN } else { (x[0] - 0.1).abs() },
            &[(0.0, 1.0)],
            &DirectOptions::new(40),
        )
        .unwrap();
        assert!(r.value.is_finite());
        assert!(r.point[0] <= 0.6);
    }
}
