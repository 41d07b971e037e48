//! Seeded differential evolution with box bounds.
//!
//! DE/rand/1/bin with projection onto bounds before every evaluation, so no
//! out-of-bounds candidate is ever scored. The objective is maximized.
//! All random draws happen sequentially on a per-generation RNG derived
//! from the master seed; candidate evaluation is the only parallel part
//! and is pure, so results are identical regardless of thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::interval::Interval;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct DeConfig {
    pub population: usize,
    pub generations: usize,
    pub mutation_f: f64,
    pub crossover_cr: f64,
    pub seed: u64,
    /// Stop once the best objective reaches this value.
    pub early_stop_f: Option<f64>,
}

/// Best candidate after each generation.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DeGeneration {
    pub generation: usize,
    pub best_f: f64,
    pub best_x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DeResult {
    pub best_x: Vec<f64>,
    pub best_f: f64,
    pub generations: Vec<DeGeneration>,
    pub evaluations: usize,
}

fn project(x: &mut [f64], bounds: &[Interval]) {
    for (v, b) in x.iter_mut().zip(bounds) {
        *v = b.clamp(*v);
    }
}

/// NaN objectives are treated as unconditionally worst.
fn sanitize(f: f64) -> f64 {
    if f.is_nan() {
        f64::NEG_INFINITY
    } else {
        f
    }
}

pub(crate) fn run_de(
    bounds: &[Interval],
    x0: &[f64],
    objective: &(dyn Fn(&[f64]) -> f64 + Sync),
    cfg: &DeConfig,
) -> DeResult {
    assert_eq!(bounds.len(), x0.len(), "x0/bounds dimension mismatch");
    assert!(cfg.population >= 4, "DE/rand/1 needs at least 4 candidates");
    let dims = bounds.len();
    let pop_n = cfg.population;

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pop: Vec<Vec<f64>> = Vec::with_capacity(pop_n);
    let mut seed_member = x0.to_vec();
    project(&mut seed_member, bounds);
    pop.push(seed_member);
    for _ in 1..pop_n {
        pop.push(
            bounds
                .iter()
                .map(|b| {
                    if b.width() == 0.0 {
                        b.lo
                    } else {
                        init_rng.random_range(b.lo..=b.hi)
                    }
                })
                .collect(),
        );
    }

    let mut fitness: Vec<f64> = pop.par_iter().map(|x| sanitize(objective(x))).collect();
    let mut evaluations = pop_n;

    let best_of = |fitness: &[f64]| -> (usize, f64) {
        let mut best = (0usize, fitness[0]);
        for (i, &f) in fitness.iter().enumerate().skip(1) {
            if f > best.1 {
                best = (i, f);
            }
        }
        best
    };
    let (bi, bf) = best_of(&fitness);
    let mut best_x = pop[bi].clone();
    let mut best_f = bf;

    let mut generations = Vec::with_capacity(cfg.generations);
    for g in 0..cfg.generations {
        // Independent stream per generation: evaluation order cannot leak
        // into the draws.
        let mut rng =
            ChaCha8Rng::seed_from_u64(cfg.seed ^ (g as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));

        let mut trials: Vec<Vec<f64>> = Vec::with_capacity(pop_n);
        for i in 0..pop_n {
            let mut pick = || loop {
                let r = rng.random_range(0..pop_n);
                if r != i {
                    return r;
                }
            };
            let r1 = pick();
            let r2 = loop {
                let r = pick();
                if r != r1 {
                    break r;
                }
            };
            let r3 = loop {
                let r = pick();
                if r != r1 && r != r2 {
                    break r;
                }
            };
            let j_rand = rng.random_range(0..dims);
            let mut trial = pop[i].clone();
            for j in 0..dims {
                let crossed = rng.random_range(0.0..1.0) < cfg.crossover_cr || j == j_rand;
                if crossed {
                    trial[j] = pop[r1][j] + cfg.mutation_f * (pop[r2][j] - pop[r3][j]);
                }
            }
            project(&mut trial, bounds);
            trials.push(trial);
        }

        let trial_fitness: Vec<f64> = trials.par_iter().map(|x| sanitize(objective(x))).collect();
        evaluations += pop_n;

        for i in 0..pop_n {
            // `>=` lets equal-fitness trials replace their parent, which
            // keeps the search moving across plateaus; the recorded best
            // can still never worsen.
            if trial_fitness[i] >= fitness[i] {
                pop[i] = std::mem::take(&mut trials[i]);
                fitness[i] = trial_fitness[i];
            }
        }
        let (bi, bf) = best_of(&fitness);
        if bf > best_f {
            best_f = bf;
            best_x = pop[bi].clone();
        }
        generations.push(DeGeneration {
            generation: g,
            best_f,
            best_x: best_x.clone(),
        });
        if let Some(target) = cfg.early_stop_f {
            if best_f >= target {
                break;
            }
        }
    }

    DeResult {
        best_x,
        best_f,
        generations,
        evaluations,
    }
}
