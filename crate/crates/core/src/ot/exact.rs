//! Transportation simplex for small dense OT problems.
//!
//! North-west-corner start, MODI potentials, stepping-stone pivots. Both the entering and the
//! leaving cell are chosen by smallest row-major index (Bland), so degenerate problems
//! terminate and results are deterministic.

use std::collections::VecDeque;

use super::dist::{DiscreteDist, TransportPlan};
use crate::diffcore::Tensor;
use crate::{Error, Result};

/// Largest `n·k` accepted by [`exact_ot`].
pub const MAX_EXACT_CELLS: usize = 400;

/// Exact optimal plan between `mu` and `nu` for the given `n×k` cost.
pub fn exact_ot(mu: &DiscreteDist, nu: &DiscreteDist, cost: &Tensor) -> Result<TransportPlan> {
    exact_ot_weights(mu.weights(), nu.weights(), cost)
}

/// [`exact_ot`] on bare weight vectors. Masses must agree but need not sum to one.
pub fn exact_ot_weights(a: &[f64], b: &[f64], cost: &Tensor) -> Result<TransportPlan> {
    let (n, k) = (a.len(), b.len());
    if cost.shape() != [n, k] {
        return Err(Error::shape(
            "exact_ot",
            format!("cost {:?} for marginals {n}×{k}", cost.shape()),
        ));
    }
    if n * k > MAX_EXACT_CELLS {
        return Err(Error::InvalidArgument(format!(
            "exact_ot is limited to n·k ≤ {MAX_EXACT_CELLS}, got {n}×{k}"
        )));
    }
    if !cost.is_finite() {
        return Err(Error::NonFinite("exact_ot cost"));
    }
    if a.iter().chain(b).any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::MarginalMismatch(
            "weights must be finite and ≥ 0".into(),
        ));
    }
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if (sa - sb).abs() > 1e-9 * sa.max(sb).max(1.0) {
        return Err(Error::MarginalMismatch(format!(
            "row mass {sa} vs column mass {sb}"
        )));
    }

    let mut solver = Simplex::north_west(a, b, cost);
    let budget = 100 * n * k + 100;
    let scale = cost.data().iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let tol = 1e-12 * (1.0 + scale);
    let mut pivots = 0;
    while let Some(enter) = solver.entering(tol) {
        if pivots == budget {
            return Err(Error::PivotBudget(budget));
        }
        solver.pivot(enter);
        pivots += 1;
    }
    let matrix = Tensor::new(vec![n, k], solver.flow)?;
    TransportPlan::from_matrix(matrix, cost)
}

struct Simplex<'a> {
    n: usize,
    k: usize,
    cost: &'a Tensor,
    flow: Vec<f64>,
    basic: Vec<bool>,
    /// Flows this close are treated as equal in the ratio test and as zero after a pivot.
    mass_tol: f64,
}

impl<'a> Simplex<'a> {
    fn north_west(a: &[f64], b: &[f64], cost: &'a Tensor) -> Self {
        let (n, k) = (a.len(), b.len());
        let mass: f64 = a.iter().sum();
        let mass_tol = 1e-14 * mass.max(f64::MIN_POSITIVE);
        let mut flow = vec![0.0; n * k];
        let mut basic = vec![false; n * k];
        let (mut s, mut d) = (a.to_vec(), b.to_vec());
        let (mut i, mut j) = (0, 0);
        loop {
            let x = s[i].min(d[j]);
            flow[i * k + j] = x;
            basic[i * k + j] = true;
            s[i] -= x;
            d[j] -= x;
            // Round-off leftovers would otherwise be shipped as phantom mass.
            for r in [&mut s[i], &mut d[j]] {
                if *r <= mass_tol {
                    *r = 0.0;
                }
            }
            if i == n - 1 && j == k - 1 {
                break;
            }
            // Exactly one index advances per cell, giving n + k − 1 basic cells.
            if j == k - 1 || (i < n - 1 && s[i] <= d[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self {
            n,
            k,
            cost,
            flow,
            basic,
            mass_tol,
        }
    }

    /// Row and column potentials with `u_i + v_j = c_ij` on basic cells, `u_0 = 0`.
    fn potentials(&self) -> (Vec<f64>, Vec<f64>) {
        let (n, k) = (self.n, self.k);
        let mut u = vec![f64::NAN; n];
        let mut v = vec![f64::NAN; k];
        u[0] = 0.0;
        let mut queue = VecDeque::from([(true, 0usize)]);
        while let Some((is_row, idx)) = queue.pop_front() {
            if is_row {
                for j in 0..k {
                    if self.basic[idx * k + j] && v[j].is_nan() {
                        v[j] = self.cost.at2(idx, j) - u[idx];
                        queue.push_back((false, j));
                    }
                }
            } else {
                for i in 0..n {
                    if self.basic[i * k + idx] && u[i].is_nan() {
                        u[i] = self.cost.at2(i, idx) - v[idx];
                        queue.push_back((true, i));
                    }
                }
            }
        }
        (u, v)
    }

    fn entering(&self, tol: f64) -> Option<usize> {
        let (u, v) = self.potentials();
        (0..self.n * self.k).find(|&c| {
            let (i, j) = (c / self.k, c % self.k);
            !self.basic[c] && self.cost.at2(i, j) - u[i] - v[j] < -tol
        })
    }

    /// Basic cells on the tree path from column `j` to row `i`, in path order.
    fn tree_path(&self, i: usize, j: usize) -> Vec<usize> {
        let (n, k) = (self.n, self.k);
        // Graph nodes: rows 0..n, columns n..n+k.
        let mut parent = vec![usize::MAX; n + k];
        let start = n + j;
        parent[start] = start;
        let mut queue = VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            if node == i {
                break;
            }
            let next: Vec<usize> = if node < n {
                (0..k)
                    .filter(|&c| self.basic[node * k + c])
                    .map(|c| n + c)
                    .collect()
            } else {
                let c = node - n;
                (0..n).filter(|&r| self.basic[r * k + c]).collect()
            };
            for m in next {
                if parent[m] == usize::MAX {
                    parent[m] = node;
                    queue.push_back(m);
                }
            }
        }
        let mut cells = Vec::new();
        let mut node = i;
        while node != start {
            let p = parent[node];
            let (r, c) = if node < n {
                (node, p - n)
            } else {
                (p, node - n)
            };
            cells.push(r * k + c);
            node = p;
        }
        cells.reverse();
        cells
    }

    fn pivot(&mut self, enter: usize) {
        let (i, j) = (enter / self.k, enter % self.k);
        let path = self.tree_path(i, j);
        // Path cells alternate −, +, −, … starting next to the entering column.
        let minus: Vec<usize> = path.iter().step_by(2).copied().collect();
        let theta = minus
            .iter()
            .map(|&c| self.flow[c])
            .fold(f64::INFINITY, f64::min);
        let leave = *minus
            .iter()
            .filter(|&&c| self.flow[c] <= theta + self.mass_tol)
            .min()
            .expect("cycle has a decreasing cell");
        for (pos, &c) in path.iter().enumerate() {
            if pos % 2 == 0 {
                let x = self.flow[c] - theta;
                self.flow[c] = if x <= self.mass_tol { 0.0 } else { x };
            } else {
                self.flow[c] += theta;
            }
        }
        self.flow[enter] = theta;
        self.flow[leave] = 0.0;
        self.basic[leave] = false;
        self.basic[enter] = true;
    }
}
