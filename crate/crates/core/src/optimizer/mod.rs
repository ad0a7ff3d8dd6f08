//! Joint HAPS count and placement search: an NSGA-II variant with a
//! count gene, decision-space crowding on HAPS sets, and adaptive
//! SBX/BLX-α crossover.

pub mod crowding;
pub mod genome;
pub mod operators;
pub mod sorting;

use std::collections::BTreeMap;

use log::{debug, info};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crlb::average_crlb;
use crate::error::{Error, Result};
use crate::scenario::Scenario;

pub use crowding::{
    annd, crowding_distances, decision_crowding, objective_crowding, population_diversity, special_crowding_distance,
    Diversity,
};
pub use genome::{initialize_population, repair, Gene, GenomeSpace, Individual};
pub use operators::{
    assign_crossover_type, better, blx_crossover, elite_select, pair_crossover_type, polynomial_mutation,
    sbx_crossover, tournament_select, CrossoverKind, CrossoverRule,
};
pub use sorting::{dominates, fast_nondominated_sort};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaParams {
    pub p_c: f64,
    pub p_m: f64,
    pub eta_c: f64,
    pub eta_m: f64,
    pub alpha: f64,
    pub n_pop: usize,
    pub n_g: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub d_dec_th: f64,
    pub d_obj_th: f64,
    pub crossover_rule: CrossoverRule,
    /// set from the scenario's `tau_m`
    #[serde(skip)]
    pub tau: f64,
    /// set from the scenario's `seed`
    #[serde(skip)]
    pub seed: u64,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            p_c: 0.9,
            p_m: 0.01,
            eta_c: 20.0,
            eta_m: 20.0,
            alpha: 0.5,
            n_pop: 50,
            n_g: 100,
            n_min: 1,
            n_max: 8,
            d_dec_th: 0.5,
            d_obj_th: 0.5,
            crossover_rule: CrossoverRule::FirstParent,
            tau: 20.0,
            seed: 1,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        for (name, p) in [("p_c", self.p_c), ("p_m", self.p_m)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} must lie in [0, 1]"));
            }
        }
        for (name, v) in [("eta_c", self.eta_c), ("eta_m", self.eta_m), ("alpha", self.alpha)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} = {v} must be finite and non-negative"));
            }
        }
        if self.n_pop < 2 || self.n_pop % 2 != 0 {
            return bad(format!("n_pop = {} must be even and at least 2", self.n_pop));
        }
        if self.n_g == 0 {
            return bad("n_g must be at least 1".into());
        }
        if self.n_min == 0 || self.n_min > self.n_max {
            return bad(format!("need 1 <= n_min ({}) <= n_max ({})", self.n_min, self.n_max));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad(format!("tau = {} must be positive", self.tau));
        }
        Ok(())
    }

    pub fn count_bounds(&self) -> (f64, f64) {
        (self.n_min as f64, self.n_max as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    pub n_haps: usize,
    pub avg_crlb: f64,
}

impl Objectives {
    pub fn as_row(&self) -> [f64; 2] {
        [self.n_haps as f64, self.avg_crlb]
    }
}

pub fn objective_rows(objectives: &[Objectives]) -> Vec<[f64; 2]> {
    objectives.iter().map(Objectives::as_row).collect()
}

pub fn evaluate_individual(ind: &Individual, space: &GenomeSpace, scenario: &Scenario) -> Result<Objectives> {
    let positions = space.active_positions(ind);
    Ok(Objectives {
        n_haps: positions.len(),
        avg_crlb: average_crlb(&positions, scenario)?,
    })
}

/// Objectives for every individual, in population order. Runs on the
/// current rayon pool.
pub fn evaluate(population: &[Individual], space: &GenomeSpace, scenario: &Scenario) -> Result<Vec<Objectives>> {
    population
        .par_iter()
        .map(|ind| evaluate_individual(ind, space, scenario))
        .collect()
}

/// Survivor indices into `pool`, in admission order. The pool's elite is
/// always among them.
pub fn environmental_selection(
    pool: &[Individual],
    objectives: &[Objectives],
    n_pop: usize,
    tau: f64,
    n_min: usize,
    n_max: usize,
) -> Vec<usize> {
    let rows = objective_rows(objectives);
    let (fronts, _) = fast_nondominated_sort(&rows);
    let mut selected = Vec::with_capacity(n_pop);
    let mut last: Vec<(usize, f64)> = Vec::new();
    for front in &fronts {
        if selected.len() >= n_pop {
            break;
        }
        let (dec, obj) = crowding_distances(front, pool, &rows, n_min, n_max);
        let scd = special_crowding_distance(&dec, &obj);
        let mut members: Vec<(usize, f64)> = front.iter().copied().zip(scd).collect();
        members.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        members.truncate(n_pop - selected.len());
        selected.extend(members.iter().map(|m| m.0));
        last = members;
    }
    if objectives.is_empty() {
        return selected;
    }
    let elite = elite_select(objectives, tau);
    if !selected.contains(&elite) {
        let weakest = last
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.0.cmp(&a.0)))
            .map(|(k, _)| k)
            .expect("last admitted front is non-empty");
        let slot = selected.iter().position(|&i| i == last[weakest].0).expect("member was admitted");
        selected[slot] = elite;
    }
    selected
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub generation: usize,
    pub best: Individual,
    pub best_objectives: Objectives,
    /// lowest CRLB seen so far for each HAPS count
    pub per_count_best: BTreeMap<usize, f64>,
    pub objectives: Vec<Objectives>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub best: Individual,
    pub best_objectives: Objectives,
    pub trace: Vec<GenerationTrace>,
    pub final_population: Vec<Individual>,
    pub final_objectives: Vec<Objectives>,
    /// best individual seen for each HAPS count
    pub per_count_best: BTreeMap<usize, (Objectives, Individual)>,
}

fn record(archive: &mut BTreeMap<usize, (Objectives, Individual)>, pop: &[Individual], objs: &[Objectives]) {
    for (ind, o) in pop.iter().zip(objs) {
        match archive.get(&o.n_haps) {
            Some((prev, _)) if prev.avg_crlb <= o.avg_crlb => {}
            _ => {
                archive.insert(o.n_haps, (*o, ind.clone()));
            }
        }
    }
}

/// Runs the full generation loop. Random draws happen in a fixed order on
/// the calling thread: initialization, then per generation the
/// tournaments followed by crossover and mutation pair by pair.
pub fn run<R: Rng + ?Sized>(scenario: &Scenario, params: &GaParams, rng: &mut R) -> Result<RunOutcome> {
    params.validate()?;
    let space = GenomeSpace::from_params(scenario.cone, params);
    let bounds = params.count_bounds();
    let (n_min, n_max) = (params.n_min, params.n_max);

    let mut population = initialize_population(params, &space, rng);
    let mut objectives = evaluate(&population, &space, scenario)?;
    let mut archive = BTreeMap::new();
    record(&mut archive, &population, &objectives);
    let first = elite_select(&objectives, params.tau);
    let mut best = (population[first].clone(), objectives[first]);
    let mut trace = Vec::with_capacity(params.n_g);

    for generation in 0..params.n_g {
        let rows = objective_rows(&objectives);
        let (fronts, ranks) = fast_nondominated_sort(&rows);
        let div = population_diversity(&fronts, &population, &rows, n_min, n_max);
        let parents = tournament_select(&ranks, &div.d_scd, params.n_pop, rng);

        let mut offspring = Vec::with_capacity(params.n_pop);
        for pair in parents.chunks_exact(2) {
            let (a, b) = (pair[0], pair[1]);
            let (mut c1, mut c2) = (population[a].clone(), population[b].clone());
            if rng.random::<f64>() < params.p_c {
                let kind = pair_crossover_type(
                    (ranks[a], div.d_dec[a], div.d_obj[a]),
                    (ranks[b], div.d_dec[b], div.d_obj[b]),
                    params,
                );
                (c1, c2) = match kind {
                    CrossoverKind::Sbx => sbx_crossover(&c1, &c2, params.eta_c, bounds, rng),
                    CrossoverKind::Blx => blx_crossover(&c1, &c2, params.alpha, bounds, rng),
                };
            }
            if rng.random::<f64>() < params.p_m {
                polynomial_mutation(&mut c1, params.eta_m, bounds, rng);
                polynomial_mutation(&mut c2, params.eta_m, bounds, rng);
            }
            offspring.push(space.repair(&c1));
            offspring.push(space.repair(&c2));
        }
        let offspring_objectives = evaluate(&offspring, &space, scenario)?;
        record(&mut archive, &offspring, &offspring_objectives);

        let pool: Vec<Individual> = population.into_iter().chain(offspring).collect();
        let pool_objectives: Vec<Objectives> = objectives.into_iter().chain(offspring_objectives).collect();
        let survivors = environmental_selection(&pool, &pool_objectives, params.n_pop, params.tau, n_min, n_max);
        population = survivors.iter().map(|&i| pool[i].clone()).collect();
        objectives = survivors.iter().map(|&i| pool_objectives[i]).collect();

        let elite = elite_select(&objectives, params.tau);
        if better(&objectives[elite], &best.1, params.tau) {
            best = (population[elite].clone(), objectives[elite]);
        }
        debug!(
            "generation {generation}: best {} HAPS at {:.3} m",
            best.1.n_haps, best.1.avg_crlb
        );
        trace.push(GenerationTrace {
            generation,
            best: best.0.clone(),
            best_objectives: best.1,
            per_count_best: archive.iter().map(|(&k, (o, _))| (k, o.avg_crlb)).collect(),
            objectives: objectives.clone(),
        });
    }
    info!(
        "finished {} generations: {} HAPS, {:.3} m",
        params.n_g, best.1.n_haps, best.1.avg_crlb
    );
    Ok(RunOutcome {
        best: best.0,
        best_objectives: best.1,
        trace,
        final_population: population,
        final_objectives: objectives,
        per_count_best: archive,
    })
}
