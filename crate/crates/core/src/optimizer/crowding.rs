//! Decision-space (ANND) and objective-space crowding, and their
//! combination into the special crowding distance.

use super::genome::{Gene, Individual};

fn dist(a: &Gene, b: &Gene) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Mean over the smaller set of the distance to the nearest member of the
/// other set, in normalized gene space. Ties in size take `a` as the
/// smaller set.
pub fn annd_sets(a: &[Gene], b: &[Gene]) -> f64 {
    let (s, t) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if s.is_empty() || t.is_empty() {
        return 0.0;
    }
    let total: f64 = s
        .iter()
        .map(|p| t.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min))
        .sum();
    total / s.len() as f64
}

pub fn annd(a: &Individual, b: &Individual, n_min: usize, n_max: usize) -> f64 {
    annd_sets(a.active_slots(n_min, n_max), b.active_slots(n_min, n_max))
}

/// Divides by the largest finite value; infinities stay infinite.
pub fn normalize_by_max_finite(values: &mut [f64]) {
    let max = values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    if max > 0.0 {
        for v in values.iter_mut().filter(|v| v.is_finite()) {
            *v /= max;
        }
    }
}

/// Textbook crowding distance, aligned with `front`. Unnormalized.
pub fn objective_crowding<const M: usize>(front: &[usize], rows: &[[f64; M]]) -> Vec<f64> {
    let n = front.len();
    let mut d = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    for m in 0..M {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| rows[front[a]][m].total_cmp(&rows[front[b]][m]).then(front[a].cmp(&front[b])));
        let lo = rows[front[order[0]]][m];
        let hi = rows[front[order[n - 1]]][m];
        d[order[0]] = f64::INFINITY;
        d[order[n - 1]] = f64::INFINITY;
        if hi <= lo {
            continue;
        }
        for k in 1..n - 1 {
            let gap = rows[front[order[k + 1]]][m] - rows[front[order[k - 1]]][m];
            d[order[k]] += gap / (hi - lo);
        }
    }
    d
}

/// Mean ANND to the two nearest front neighbors, aligned with `front`.
/// Unnormalized.
pub fn decision_crowding(front: &[usize], population: &[Individual], n_min: usize, n_max: usize) -> Vec<f64> {
    let n = front.len();
    front
        .iter()
        .map(|&i| {
            let mut nearest = [f64::INFINITY; 2];
            for &j in front {
                if j == i {
                    continue;
                }
                let d = annd(&population[i], &population[j], n_min, n_max);
                if d < nearest[0] {
                    nearest = [d, nearest[0]];
                } else if d < nearest[1] {
                    nearest[1] = d;
                }
            }
            match n {
                1 => f64::INFINITY,
                2 => nearest[0],
                _ => 0.5 * (nearest[0] + nearest[1]),
            }
        })
        .collect()
}

/// Normalized `(d_dec, d_obj)` for each member of `front`.
pub fn crowding_distances<const M: usize>(
    front: &[usize],
    population: &[Individual],
    rows: &[[f64; M]],
    n_min: usize,
    n_max: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut d_dec = decision_crowding(front, population, n_min, n_max);
    let mut d_obj = objective_crowding(front, rows);
    normalize_by_max_finite(&mut d_dec);
    normalize_by_max_finite(&mut d_obj);
    (d_dec, d_obj)
}

fn finite_mean(values: &[f64]) -> f64 {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return f64::NAN;
    }
    // offset from the minimum so a constant front averages to exactly its value
    let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
    min + finite.iter().map(|v| v - min).sum::<f64>() / finite.len() as f64
}

pub fn special_crowding_distance(d_dec: &[f64], d_obj: &[f64]) -> Vec<f64> {
    let avg_dec = finite_mean(d_dec);
    let avg_obj = finite_mean(d_obj);
    d_dec
        .iter()
        .zip(d_obj)
        .map(|(&dec, &obj)| {
            if dec > avg_dec || obj > avg_obj {
                dec.max(obj)
            } else {
                dec.min(obj)
            }
        })
        .collect()
}

/// Per-individual crowding measures for a whole ranked population.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diversity {
    pub d_dec: Vec<f64>,
    pub d_obj: Vec<f64>,
    pub d_scd: Vec<f64>,
}

pub fn population_diversity<const M: usize>(
    fronts: &[Vec<usize>],
    population: &[Individual],
    rows: &[[f64; M]],
    n_min: usize,
    n_max: usize,
) -> Diversity {
    let n = population.len();
    let mut out = Diversity {
        d_dec: vec![0.0; n],
        d_obj: vec![0.0; n],
        d_scd: vec![0.0; n],
    };
    for front in fronts {
        let (dec, obj) = crowding_distances(front, population, rows, n_min, n_max);
        let scd = special_crowding_distance(&dec, &obj);
        for (k, &i) in front.iter().enumerate() {
            out.d_dec[i] = dec[k];
            out.d_obj[i] = obj[k];
            out.d_scd[i] = scd[k];
        }
    }
    out
}
