//! Linear assignment solver (shortest augmenting path with potentials).
//!
//! Minimizes `Σ c[i][perm[i]]` over permutations of a dense square cost matrix
//! and returns dual potentials that certify optimality.

/// Optimal assignment with its dual certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// `perm[i]` is the column assigned to row `i`.
    pub perm: Vec<usize>,
    pub cost: f64,
    pub row_dual: Vec<f64>,
    pub col_dual: Vec<f64>,
}

/// Solve the assignment problem for the row-major `n × n` matrix `cost`.
///
/// Ties between equally cheap columns go to the lowest index.
pub fn solve(cost: &[f64], n: usize) -> Assignment {
    assert_eq!(cost.len(), n * n, "cost matrix must be n×n");
    if n == 0 {
        return Assignment { perm: vec![], cost: 0.0, row_dual: vec![], col_dual: vec![] };
    }
    let c = |i: usize, j: usize| cost[(i - 1) * n + (j - 1)];
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = c(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    let total = perm.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Assignment { perm, cost: total, row_dual: u[1..].to_vec(), col_dual: v[1..].to_vec() }
}

impl Assignment {
    /// Dual feasibility `c_ij − u_i − v_j ≥ −tol` everywhere, and complementary
    /// slackness on the chosen pairs, both relative to the largest cost.
    pub fn is_certified(&self, cost: &[f64], tol: f64) -> bool {
        let n = self.perm.len();
        let scale = cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
        let eps = tol * scale;
        for i in 0..n {
            for j in 0..n {
                if cost[i * n + j] - self.row_dual[i] - self.col_dual[j] < -eps {
                    return false;
                }
            }
            let j = self.perm[i];
            if (cost[i * n + j] - self.row_dual[i] - self.col_dual[j]).abs() > eps {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_known_instance() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = solve(&cost, 3);
        assert_eq!(a.cost, 5.0);
        assert!(a.is_certified(&cost, 1e-12));
    }

    #[test]
    fn ties_prefer_identity() {
        let cost = vec![1.0; 16];
        let a = solve(&cost, 4);
        assert_eq!(a.perm, vec![0, 1, 2, 3]);
    }
}
