//! Real-coded genetic algorithm used as the inner maximizer for likelihood and
//! acquisition searches.
//!
//! Tournament selection, BLX-α blend crossover, per-gene Gaussian mutation and
//! elitism. Every generation evaluates exactly `population_size` new
//! individuals; carried-over elites keep their cached fitness.

use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::Rng as _;

use crate::error::invalid;
use crate::stats::standard_normal;
use crate::{Error, Result, Rng};

/// Genetic algorithm settings.
#[derive(Debug, Clone, PartialEq)]
pub struct GAParams {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability; `None` means `1/d`.
    pub mutation_rate: Option<f64>,
    /// Mutation standard deviation as a fraction of the box width.
    pub mutation_scale: f64,
    pub elitism: usize,
    pub tournament_size: usize,
    /// BLX-α extension factor.
    pub blend_alpha: f64,
}

impl Default for GAParams {
    fn default() -> Self {
        GAParams {
            population_size: 50,
            generations: 40,
            crossover_rate: 0.9,
            mutation_rate: None,
            mutation_scale: 0.1,
            elitism: 2,
            tournament_size: 3,
            blend_alpha: 0.5,
        }
    }
}

impl GAParams {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(invalid("GA population_size must be ≥ 2"));
        }
        if self.generations == 0 {
            return Err(invalid("GA generations must be ≥ 1"));
        }
        if self.elitism >= self.population_size {
            return Err(invalid("GA elitism must be < population_size"));
        }
        if self.tournament_size == 0 {
            return Err(invalid("GA tournament_size must be ≥ 1"));
        }
        let rates = [self.crossover_rate, self.mutation_rate.unwrap_or(0.0)];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(invalid("GA rates must lie in [0, 1]"));
        }
        if !(self.mutation_scale >= 0.0) || !(self.blend_alpha >= 0.0) {
            return Err(invalid("GA mutation_scale and blend_alpha must be ≥ 0"));
        }
        Ok(())
    }

    /// Total number of objective evaluations one run performs.
    pub fn budget(&self) -> usize {
        self.population_size * self.generations
    }
}

/// Result of [`ga_maximize`].
#[derive(Debug, Clone, PartialEq)]
pub struct GAResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// Best-so-far value after each generation.
    pub history: Vec<f64>,
}

#[derive(Clone)]
struct Individual {
    genes: Vec<f64>,
    fitness: f64,
}

fn by_fitness_desc(a: &Individual, b: &Individual) -> Ordering {
    b.fitness.partial_cmp(&a.fitness).unwrap_or(Ordering::Equal)
}

/// Maximizes `f` over the box. `repair`, when given, is applied to every
/// candidate before evaluation and must keep points inside the box.
pub fn ga_maximize<F>(
    f: F,
    bounds: &[(f64, f64)],
    repair: Option<&dyn Fn(&mut [f64])>,
    params: &GAParams,
    rng: &mut Rng,
) -> Result<GAResult>
where
    F: FnMut(&[f64]) -> f64,
{
    ga_maximize_seeded(f, bounds, repair, &[], params, rng)
}

/// [`ga_maximize`] with the first members of the initial population taken
/// from `seeds` (clamped to the box, at most `population_size` of them); the
/// rest are uniform draws. Evaluation count and random stream length do not
/// depend on the number of seeds.
pub fn ga_maximize_seeded<F>(
    mut f: F,
    bounds: &[(f64, f64)],
    repair: Option<&dyn Fn(&mut [f64])>,
    seeds: &[Vec<f64>],
    params: &GAParams,
    rng: &mut Rng,
) -> Result<GAResult>
where
    F: FnMut(&[f64]) -> f64,
{
    params.validate()?;
    if bounds.is_empty() {
        return Err(invalid("GA needs at least one dimension"));
    }
    if bounds
        .iter()
        .any(|(l, u)| !(l.is_finite() && u.is_finite()) || l > u)
    {
        return Err(invalid("GA box must be finite with lower ≤ upper"));
    }
    let d = bounds.len();
    let mutation_rate = params.mutation_rate.unwrap_or(1.0 / d as f64);
    let mut evaluations = 0usize;
    let mut best: Option<Individual> = None;
    let mut history = Vec::with_capacity(params.generations);

    let mut evaluate = |mut genes: Vec<f64>, best: &mut Option<Individual>| -> Individual {
        if let Some(r) = repair {
            r(&mut genes);
        }
        let raw = f(&genes);
        evaluations += 1;
        let fitness = if raw.is_finite() {
            raw
        } else {
            log::warn!("GA discarded a candidate with non-finite objective value");
            f64::NEG_INFINITY
        };
        let ind = Individual { genes, fitness };
        if fitness.is_finite() && best.as_ref().map_or(true, |b| fitness > b.fitness) {
            *best = Some(ind.clone());
        }
        ind
    };

    if seeds.iter().any(|x| x.len() != d) {
        return Err(invalid("GA seed has the wrong dimension"));
    }
    let mut population: Vec<Individual> = (0..params.population_size)
        .map(|i| {
            let drawn: Vec<f64> = bounds.iter().map(|&(l, u)| l + rng.gen::<f64>() * (u - l)).collect();
            let genes = match seeds.get(i) {
                Some(x) => x.iter().zip(bounds).map(|(v, &(l, u))| v.clamp(l, u)).collect(),
                None => drawn,
            };
            evaluate(genes, &mut best)
        })
        .collect();
    population.sort_by(by_fitness_desc);
    history.push(best.as_ref().map_or(f64::NEG_INFINITY, |b| b.fitness));

    for _ in 1..params.generations {
        let mut next: Vec<Individual> = population[..params.elitism].to_vec();
        for _ in 0..params.population_size {
            let p1 = tournament(&population, params.tournament_size, rng);
            let mut child = if rng.gen::<f64>() < params.crossover_rate {
                let p2 = tournament(&population, params.tournament_size, rng);
                blend(&p1.genes, &p2.genes, bounds, params.blend_alpha, rng)
            } else {
                p1.genes.clone()
            };
            for (g, &(l, u)) in child.iter_mut().zip(bounds) {
                if rng.gen::<f64>() < mutation_rate {
                    *g += standard_normal(rng) * params.mutation_scale * (u - l);
                    *g = g.clamp(l, u);
                }
            }
            next.push(evaluate(child, &mut best));
        }
        next.sort_by(by_fitness_desc);
        next.truncate(params.population_size);
        population = next;
        history.push(best.as_ref().map_or(f64::NEG_INFINITY, |b| b.fitness));
    }

    let best = best.ok_or_else(|| {
        Error::Numerical(alloc::string::String::from(
            "GA found no candidate with a finite objective value",
        ))
    })?;
    Ok(GAResult {
        point: best.genes,
        value: best.fitness,
        evaluations,
        history,
    })
}

fn tournament<'a>(population: &'a [Individual], size: usize, rng: &mut Rng) -> &'a Individual {
    let mut winner = &population[rng.gen_range(0..population.len())];
    for _ in 1..size {
        let c = &population[rng.gen_range(0..population.len())];
        if c.fitness > winner.fitness {
            winner = c;
        }
    }
    winner
}

fn blend(a: &[f64], b: &[f64], bounds: &[(f64, f64)], alpha: f64, rng: &mut Rng) -> Vec<f64> {
    a.iter()
        .zip(b)
        .zip(bounds)
        .map(|((&x, &y), &(l, u))| {
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            let ext = alpha * (hi - lo);
            let v = (lo - ext) + rng.gen::<f64>() * (hi - lo + 2.0 * ext);
            v.clamp(l, u)
        })
        .collect()
}
