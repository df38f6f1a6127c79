/// Minimum-cost assignment of every row to a distinct column.
///
/// `cost` is row-major `rows x cols` with `rows <= cols`. Returns the column
/// of each row and the total cost, or `None` when `rows > cols` or a cost is
/// not finite. Shortest augmenting paths with potentials, `O(rows^2 cols)`.
pub fn hungarian(cost: &[f64], rows: usize, cols: usize) -> Option<(Vec<usize>, f64)> {
    if rows > cols || cost.len() != rows * cols || cost.iter().any(|c| !c.is_finite()) {
        return None;
    }
    if rows == 0 {
        return Some((Vec::new(), 0.0));
    }
    // 1-based arrays; column 0 is the virtual start of each augmenting path
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0;
        let mut min_v = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1) * cols + (j - 1)] - u[i0] - v[j];
                if reduced < min_v[j] {
                    min_v[j] = reduced;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
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
    let mut assign = vec![0; rows];
    for j in 1..=cols {
        if owner[j] > 0 {
            assign[owner[j] - 1] = j - 1;
        }
    }
    let total = assign
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * cols + j])
        .sum();
    Some((assign, total))
}
