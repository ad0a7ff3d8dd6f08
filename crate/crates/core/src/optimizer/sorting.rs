//! Pareto dominance and fast non-dominated sorting (all objectives minimized).

pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Returns the fronts (each sorted by index) and the 1-based rank of every row.
pub fn fast_nondominated_sort<const M: usize>(rows: &[[f64; M]]) -> (Vec<Vec<usize>>, Vec<usize>) {
    let n = rows.len();
    let mut dominated: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut counts = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(&rows[i], &rows[j]) {
                dominated[i].push(j);
                counts[j] += 1;
            } else if dominates(&rows[j], &rows[i]) {
                dominated[j].push(i);
                counts[i] += 1;
            }
        }
    }
    let mut ranks = vec![0usize; n];
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| counts[i] == 0).collect();
    let mut rank = 1;
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            ranks[i] = rank;
            for &j in &dominated[i] {
                counts[j] -= 1;
                if counts[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
        rank += 1;
    }
    (fronts, ranks)
}
