//! Maximum-weight assignment on rectangular score matrices.

/// Optimal one-to-one partial assignment maximising the total score.
///
/// The matrix is padded to square with zero rows or columns; pairs that
/// end up with a zero score are dropped. With integral scores, ties in the
/// total go to the assignment with more non-zero pairs, so the pair count
/// does not depend on row or column order. Returns `(row, col)` sorted by row.
pub fn hungarian_max(matrix: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    debug_assert!(
        matrix.iter().all(|r| r.len() == cols),
        "ragged score matrix"
    );
    let n = rows.max(cols);
    let integral = matrix.iter().flatten().all(|s| s.fract() == 0.0);
    let weight = |s: f64| {
        if integral && s > 0.0 {
            s * (n + 1) as f64 + 1.0
        } else {
            s
        }
    };
    let top = matrix
        .iter()
        .flatten()
        .map(|&s| weight(s))
        .fold(0.0, f64::max);
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            top - weight(matrix[i][j])
        } else {
            top
        }
    };

    // shortest augmenting path with potentials; 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=n)
        .filter_map(|j| {
            let (i, j) = (owner[j] - 1, j - 1);
            (i < rows && j < cols && matrix[i][j] > 0.0).then_some((i, j))
        })
        .collect();
    pairs.sort_unstable();
    pairs
}

pub fn total_score(matrix: &[Vec<f64>], pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(i, j)| matrix[i][j]).sum()
}
