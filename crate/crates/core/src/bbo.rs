//! Canonical biogeography-based optimization over bounded real vectors.
//!
//! Candidate solutions are habitats ranked by cost; rank-linear immigration
//! and emigration curves decide which habitats replace individual solution
//! features (SIVs) with copies from emigrating habitats picked by roulette.
//! Sources keep their features — sharing, not moving — which is exactly the
//! behaviour [`crate::classifier`] replaces with whole-species migration.
//! Mutation and elitism are optional and both default to off.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BboError {
    #[error("population must be at least 2, got {0}")]
    BadPopulation(usize),
    #[error("bounds must be non-empty with lo < hi per dimension")]
    BadBounds,
    #[error("max rates must be positive, got E={0}, I={1}")]
    BadRates(f64, f64),
    #[error("mutation probability must lie in [0,1], got {0}")]
    BadMutation(f64),
    #[error("elite count {0} must be smaller than the population {1}")]
    BadElite(usize, usize),
    #[error("cost function returned a non-finite value")]
    NonFiniteCost,
}

/// One candidate solution: a vector of suitability index variables and its
/// evaluated cost (lower is better; the inverse sense of a habitat's HSI).
#[derive(Debug, Clone, PartialEq)]
pub struct RealHabitat {
    pub siv: Vec<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BboParams {
    pub population: usize,
    pub generations: usize,
    /// Maximum immigration rate I.
    pub max_immigration: f64,
    /// Maximum emigration rate E.
    pub max_emigration: f64,
    pub mutation_prob: f64,
    pub elite_count: usize,
    pub bounds: Vec<(f64, f64)>,
    pub seed: u64,
}

impl BboParams {
    pub fn new(bounds: Vec<(f64, f64)>) -> Self {
        BboParams {
            population: 50,
            generations: 100,
            max_immigration: 1.0,
            max_emigration: 1.0,
            mutation_prob: 0.0,
            elite_count: 0,
            bounds,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), BboError> {
        if self.population < 2 {
            return Err(BboError::BadPopulation(self.population));
        }
        if self.bounds.is_empty()
            || self
                .bounds
                .iter()
                .any(|(lo, hi)| !lo.is_finite() || !hi.is_finite() || lo >= hi)
        {
            return Err(BboError::BadBounds);
        }
        if !self.max_emigration.is_finite()
            || !self.max_immigration.is_finite()
            || self.max_emigration <= 0.0
            || self.max_immigration <= 0.0
        {
            return Err(BboError::BadRates(
                self.max_emigration,
                self.max_immigration,
            ));
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return Err(BboError::BadMutation(self.mutation_prob));
        }
        if self.elite_count >= self.population {
            return Err(BboError::BadElite(self.elite_count, self.population));
        }
        Ok(())
    }
}

/// Linear (lambda, mu) pairs over ranks 0 (best) .. n-1 (worst): the best
/// habitat emigrates at the full rate E and immigrates at 0, the worst the
/// other way round.
pub fn rank_rates(params: &BboParams, n: usize) -> Vec<(f64, f64)> {
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![(0.0, params.max_emigration)];
    }
    (0..n)
        .map(|rank| {
            let t = rank as f64 / (n - 1) as f64;
            (
                params.max_immigration * t,
                params.max_emigration * (1.0 - t),
            )
        })
        .collect()
}

fn roulette<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut ticket = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        ticket -= w;
        if ticket < 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// One migration sweep over a population ranked best-to-worst. Each SIV of
/// a habitat immigrates with probability lambda, replaced by the matching
/// SIV of an emigrant drawn by roulette proportional to mu; emigrants are
/// read from the pre-migration population and never change. The first
/// `elite_count` habitats pass through unchanged.
pub fn migrate_generation<R: Rng>(
    population: &[RealHabitat],
    params: &BboParams,
    rng: &mut R,
) -> Vec<RealHabitat> {
    let rates = rank_rates(params, population.len());
    let mus: Vec<f64> = rates.iter().map(|(_, mu)| *mu).collect();
    let mut next = population.to_vec();
    for (i, habitat) in next.iter_mut().enumerate().skip(params.elite_count) {
        let lambda = rates[i].0;
        for d in 0..habitat.siv.len() {
            if rng.random::<f64>() < lambda {
                let source = roulette(&mus, rng);
                habitat.siv[d] = population[source].siv[d];
            }
        }
    }
    next
}

/// Per-generation best and mean cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub generation: usize,
    pub best_cost: f64,
    pub mean_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BboRun {
    pub best: RealHabitat,
    pub trace: Vec<TraceRow>,
}

fn sort_by_cost(population: &mut [RealHabitat]) {
    population.sort_by(|a, b| a.cost.partial_cmp(&b.cost).expect("finite costs"));
}

fn trace_row(generation: usize, population: &[RealHabitat]) -> TraceRow {
    let mean = population.iter().map(|h| h.cost).sum::<f64>() / population.len() as f64;
    TraceRow {
        generation,
        best_cost: population[0].cost,
        mean_cost: mean,
    }
}

/// Runs `generations` rounds of rank -> rates -> migrate -> mutate ->
/// evaluate over a population initialized uniformly inside the bounds.
/// Deterministic for a fixed seed. The trace has one row per generation
/// including generation 0 (the initial population).
pub fn optimize<F>(mut cost: F, params: &BboParams) -> Result<BboRun, BboError>
where
    F: FnMut(&[f64]) -> f64,
{
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut evaluate = |siv: &[f64]| -> Result<f64, BboError> {
        let value = cost(siv);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(BboError::NonFiniteCost)
        }
    };

    let mut population = Vec::with_capacity(params.population);
    for _ in 0..params.population {
        let siv: Vec<f64> = params
            .bounds
            .iter()
            .map(|(lo, hi)| rng.random_range(*lo..=*hi))
            .collect();
        let cost = evaluate(&siv)?;
        population.push(RealHabitat { siv, cost });
    }
    sort_by_cost(&mut population);

    let mut trace = Vec::with_capacity(params.generations + 1);
    trace.push(trace_row(0, &population));

    for generation in 1..=params.generations {
        let mut next = migrate_generation(&population, params, &mut rng);
        for habitat in next.iter_mut().skip(params.elite_count) {
            for (siv, (lo, hi)) in habitat.siv.iter_mut().zip(&params.bounds) {
                if rng.random::<f64>() < params.mutation_prob {
                    *siv = rng.random_range(*lo..=*hi);
                }
            }
        }
        for habitat in next.iter_mut().skip(params.elite_count) {
            habitat.cost = evaluate(&habitat.siv)?;
        }
        sort_by_cost(&mut next);
        population = next;
        trace.push(trace_row(generation, &population));
    }

    Ok(BboRun {
        best: population[0].clone(),
        trace,
    })
}

/// The sphere benchmark: sum of squared components, minimum 0 at the origin.
pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}
