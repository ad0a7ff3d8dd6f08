//! Selection and variation operators. Every gene (three per slot plus the
//! count gene) is treated as an independent bounded real.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::genome::Individual;
use super::{GaParams, Objectives};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrossoverKind {
    Sbx,
    Blx,
}

/// Which parents must satisfy the SBX condition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossoverRule {
    #[default]
    FirstParent,
    BothParents,
}

/// `(rank, d_dec, d_obj)` of a parent.
pub type ParentStats = (usize, f64, f64);

pub fn assign_crossover_type(rank: usize, d_dec: f64, d_obj: f64, params: &GaParams) -> CrossoverKind {
    if rank == 1 && d_dec > params.d_dec_th && d_obj > params.d_obj_th {
        CrossoverKind::Sbx
    } else {
        CrossoverKind::Blx
    }
}

pub fn pair_crossover_type(first: ParentStats, second: ParentStats, params: &GaParams) -> CrossoverKind {
    let a = assign_crossover_type(first.0, first.1, first.2, params);
    match params.crossover_rule {
        CrossoverRule::FirstParent => a,
        CrossoverRule::BothParents => match (a, assign_crossover_type(second.0, second.1, second.2, params)) {
            (CrossoverKind::Sbx, CrossoverKind::Sbx) => CrossoverKind::Sbx,
            _ => CrossoverKind::Blx,
        },
    }
}

/// Lexicographic preference: τ-feasible before infeasible; feasible by
/// fewer HAPS then lower CRLB; infeasible by lower CRLB then fewer HAPS.
pub fn better(a: &Objectives, b: &Objectives, tau: f64) -> bool {
    let fa = a.avg_crlb <= tau;
    let fb = b.avg_crlb <= tau;
    match (fa, fb) {
        (true, false) => true,
        (false, true) => false,
        (true, true) => (a.n_haps, a.avg_crlb) < (b.n_haps, b.avg_crlb),
        (false, false) => a.avg_crlb < b.avg_crlb || (a.avg_crlb == b.avg_crlb && a.n_haps < b.n_haps),
    }
}

/// Index of the preferred individual; ties go to the lowest index.
pub fn elite_select(objectives: &[Objectives], tau: f64) -> usize {
    assert!(!objectives.is_empty(), "elite_select on an empty population");
    let mut best = 0;
    for i in 1..objectives.len() {
        if better(&objectives[i], &objectives[best], tau) {
            best = i;
        }
    }
    best
}

pub fn tournament_select<R: Rng + ?Sized>(ranks: &[usize], d_scd: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let size = ranks.len();
    (0..n)
        .map(|_| {
            let a = rng.random_range(0..size);
            let b = rng.random_range(0..size);
            binary_tournament(a, b, ranks, d_scd, rng)
        })
        .collect()
}

/// Lower rank wins, then higher crowding, then a fair coin.
pub fn binary_tournament<R: Rng + ?Sized>(a: usize, b: usize, ranks: &[usize], d_scd: &[f64], rng: &mut R) -> usize {
    if ranks[a] != ranks[b] {
        if ranks[a] < ranks[b] {
            a
        } else {
            b
        }
    } else if d_scd[a] != d_scd[b] {
        if d_scd[a] > d_scd[b] {
            a
        } else {
            b
        }
    } else if rng.random_bool(0.5) {
        a
    } else {
        b
    }
}

fn for_each_gene_pair(
    c1: &mut Individual,
    c2: &mut Individual,
    count_bounds: (f64, f64),
    mut f: impl FnMut(f64, f64) -> (f64, f64),
) {
    for (g1, g2) in c1.slots.iter_mut().zip(c2.slots.iter_mut()) {
        for k in 0..3 {
            let (a, b) = f(g1[k], g2[k]);
            g1[k] = a.clamp(0.0, 1.0);
            g2[k] = b.clamp(0.0, 1.0);
        }
    }
    let (lo, hi) = count_bounds;
    let span = hi - lo;
    if span > 0.0 {
        // the count gene runs through the same unit-interval operator
        let (a, b) = f((c1.count_gene - lo) / span, (c2.count_gene - lo) / span);
        c1.count_gene = (lo + a * span).clamp(lo, hi);
        c2.count_gene = (lo + b * span).clamp(lo, hi);
    } else {
        f(0.0, 0.0);
        c1.count_gene = lo;
        c2.count_gene = lo;
    }
}

pub fn sbx_gene<R: Rng + ?Sized>(x1: f64, x2: f64, eta: f64, rng: &mut R) -> (f64, f64) {
    let u: f64 = rng.random();
    let swap = rng.random_bool(0.5);
    if x1 == x2 {
        return (x1, x2);
    }
    let e = 1.0 / (eta + 1.0);
    let beta = if u <= 0.5 {
        (2.0 * u).powf(e)
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(e)
    };
    let c1 = 0.5 * ((1.0 + beta) * x1 + (1.0 - beta) * x2);
    let c2 = 0.5 * ((1.0 - beta) * x1 + (1.0 + beta) * x2);
    if swap {
        (c2, c1)
    } else {
        (c1, c2)
    }
}

pub fn blx_gene<R: Rng + ?Sized>(x1: f64, x2: f64, alpha: f64, rng: &mut R) -> (f64, f64) {
    let (lo, hi) = (x1.min(x2), x1.max(x2));
    let d = hi - lo;
    let (a, b) = (lo - alpha * d, hi + alpha * d);
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    (a + u1 * (b - a), a + u2 * (b - a))
}

pub fn sbx_crossover<R: Rng + ?Sized>(
    p1: &Individual,
    p2: &Individual,
    eta: f64,
    count_bounds: (f64, f64),
    rng: &mut R,
) -> (Individual, Individual) {
    let (mut c1, mut c2) = (p1.clone(), p2.clone());
    for_each_gene_pair(&mut c1, &mut c2, count_bounds, |a, b| sbx_gene(a, b, eta, rng));
    (c1, c2)
}

pub fn blx_crossover<R: Rng + ?Sized>(
    p1: &Individual,
    p2: &Individual,
    alpha: f64,
    count_bounds: (f64, f64),
    rng: &mut R,
) -> (Individual, Individual) {
    let (mut c1, mut c2) = (p1.clone(), p2.clone());
    for_each_gene_pair(&mut c1, &mut c2, count_bounds, |a, b| blx_gene(a, b, alpha, rng));
    (c1, c2)
}

/// Bounded polynomial perturbation of `x` within `[lo, hi]`.
pub fn polynomial_gene<R: Rng + ?Sized>(x: f64, lo: f64, hi: f64, eta: f64, rng: &mut R) -> f64 {
    let span = hi - lo;
    let u: f64 = rng.random();
    if span <= 0.0 {
        return lo;
    }
    let d1 = (x - lo) / span;
    let d2 = (hi - x) / span;
    let p = 1.0 / (eta + 1.0);
    let dq = if u < 0.5 {
        let v = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1).powf(eta + 1.0);
        v.powf(p) - 1.0
    } else {
        let v = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2).powf(eta + 1.0);
        1.0 - v.powf(p)
    };
    (x + dq * span).clamp(lo, hi)
}

/// Mutates each gene with probability `1/D`; returns how many were hit.
pub fn polynomial_mutation<R: Rng + ?Sized>(
    ind: &mut Individual,
    eta: f64,
    count_bounds: (f64, f64),
    rng: &mut R,
) -> usize {
    let rate = 1.0 / ind.gene_count() as f64;
    let mut hits = 0;
    for g in ind.slots.iter_mut() {
        for x in g.iter_mut() {
            if rng.random::<f64>() < rate {
                *x = polynomial_gene(*x, 0.0, 1.0, eta, rng);
                hits += 1;
            }
        }
    }
    if rng.random::<f64>() < rate {
        ind.count_gene = polynomial_gene(ind.count_gene, count_bounds.0, count_bounds.1, eta, rng);
        hits += 1;
    }
    hits
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, Uniform};

    fn obj(n: usize, c: f64) -> Objectives {
        Objectives { n_haps: n, avg_crlb: c }
    }

    fn ind(x: f64, count: f64) -> Individual {
        Individual {
            slots: vec![[x; 3]; 8],
            count_gene: count,
        }
    }

    #[test]
    fn elite_rules() {
        assert_eq!(elite_select(&[obj(2, 25.0), obj(3, 18.0), obj(4, 15.0)], 20.0), 1);
        assert_eq!(elite_select(&[obj(2, 25.0), obj(3, 30.0)], 20.0), 0);
        assert_eq!(elite_select(&[obj(3, 18.0), obj(3, 17.0)], 20.0), 1);
        assert_eq!(elite_select(&[obj(3, 17.0), obj(3, 17.0)], 20.0), 0);
        assert_eq!(elite_select(&[obj(5, 30.0), obj(3, 30.0)], 20.0), 1);
    }

    #[test]
    fn crossover_type_rule() {
        let p = GaParams::default();
        assert_eq!(assign_crossover_type(1, 0.6, 0.7, &p), CrossoverKind::Sbx);
        assert_eq!(assign_crossover_type(1, 0.6, 0.4, &p), CrossoverKind::Blx);
        assert_eq!(assign_crossover_type(2, 0.9, 0.9, &p), CrossoverKind::Blx);
        assert_eq!(assign_crossover_type(1, f64::INFINITY, f64::INFINITY, &p), CrossoverKind::Sbx);
        let both = GaParams {
            crossover_rule: CrossoverRule::BothParents,
            ..GaParams::default()
        };
        assert_eq!(pair_crossover_type((1, 0.6, 0.7), (2, 0.9, 0.9), &p), CrossoverKind::Sbx);
        assert_eq!(pair_crossover_type((1, 0.6, 0.7), (2, 0.9, 0.9), &both), CrossoverKind::Blx);
    }

    #[test]
    fn tournament_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(binary_tournament(0, 1, &[1, 2], &[0.0, 5.0], &mut rng), 0);
        assert_eq!(binary_tournament(1, 0, &[1, 2], &[0.0, 5.0], &mut rng), 0);
        assert_eq!(binary_tournament(0, 1, &[1, 1], &[0.9, 0.1], &mut rng), 0);
        assert_eq!(binary_tournament(1, 0, &[1, 1], &[0.9, 0.1], &mut rng), 0);
        let coin: usize = (0..1000).map(|_| binary_tournament(0, 1, &[1, 1], &[0.5, 0.5], &mut rng)).sum();
        assert!((400..600).contains(&coin));
    }

    #[test]
    fn sbx_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = ind(0.3, 4.0);
        let (c1, c2) = sbx_crossover(&a, &a, 20.0, (1.0, 8.0), &mut rng);
        assert_eq!((&c1, &c2), (&a, &a));
        // the unclamped pair sum equals the parent sum draw by draw
        for _ in 0..1000 {
            let (c1, c2) = sbx_gene(0.4, 0.6, 20.0, &mut rng);
            assert!((c1 + c2 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn blx_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = ind(0.3, 4.0);
        let (c1, c2) = blx_crossover(&a, &a, 0.5, (1.0, 8.0), &mut rng);
        assert_eq!((&c1, &c2), (&a, &a));
        for _ in 0..1000 {
            let (c1, c2) = blx_gene(0.2, 0.4, 0.0, &mut rng);
            assert!((0.2..=0.4).contains(&c1) && (0.2..=0.4).contains(&c2));
        }
        let n = 10_000;
        let mut xs: Vec<f64> = (0..n).map(|_| blx_gene(0.2, 0.4, 0.5, &mut rng).0).collect();
        xs.sort_by(f64::total_cmp);
        assert!(xs[0] >= 0.1 && xs[n - 1] <= 0.5);
        assert!(xs[0] < 0.101 && xs[n - 1] > 0.499);
        let law = Uniform::new(0.1, 0.5).unwrap();
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = law.cdf(x);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        // asymptotic KS critical value at 0.01
        assert!(ks < 1.628 / (n as f64).sqrt(), "ks {ks}");
    }

    #[test]
    fn mutation_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let trials = 10_000;
        let mut total = 0usize;
        let mut sq = 0.0;
        for k in 0..trials {
            let mut m = ind((k % 11) as f64 / 10.0, 1.0 + (k % 8) as f64);
            let before = m.clone();
            let hits = polynomial_mutation(&mut m, 1e6, (1.0, 8.0), &mut rng);
            total += hits;
            sq += (hits * hits) as f64;
            for (g, h) in m.slots.iter().flatten().zip(before.slots.iter().flatten()) {
                assert!((g - h).abs() < 1e-3);
                assert!((0.0..=1.0).contains(g));
            }
            assert!((m.count_gene - before.count_gene).abs() < 7e-3);
        }
        let mean = total as f64 / trials as f64;
        let var = sq / trials as f64 - mean * mean;
        let se = (var / trials as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean} se {se}");

        for _ in 0..2000 {
            let mut m = ind(0.99, 7.9);
            polynomial_mutation(&mut m, 0.5, (1.0, 8.0), &mut rng);
            assert!(m.slots.iter().flatten().all(|x| (0.0..=1.0).contains(x)));
            assert!((1.0..=8.0).contains(&m.count_gene));
        }
    }
}
