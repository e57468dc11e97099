//! Dense two-phase simplex with Bland's anti-cycling rule.
//!
//! Solves `min cᵀx  s.t.  A x = b, x ≥ 0`. Sizes in this crate are tiny
//! (a few dozen constraints), so a full tableau is the simplest correct choice.

use crate::error::{Error, Result};

/// Feasibility/optimality tolerance on constraint residuals and reduced costs.
pub const LP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

/// Equality-form linear program.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl LinearProgram {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>, c: Vec<f64>) -> Self {
        assert_eq!(a.len(), b.len());
        assert!(a.iter().all(|row| row.len() == c.len()));
        LinearProgram { a, b, c }
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        let m = self.a.len();
        let nv = self.c.len();
        let width = nv + m; // structural + artificial columns
        let mut t = Tableau {
            rows: Vec::with_capacity(m),
            basis: (nv..nv + m).collect(),
            width,
            pivots: 0,
            max_pivots: 1000 + 50 * (m + width),
        };
        for (i, (row, &bi)) in self.a.iter().zip(&self.b).enumerate() {
            let sign = if bi < 0.0 { -1.0 } else { 1.0 };
            let mut r = vec![0.0; width + 1];
            for (j, v) in row.iter().enumerate() {
                r[j] = sign * v;
            }
            r[nv + i] = 1.0;
            r[width] = sign * bi;
            t.rows.push(r);
        }

        // Phase 1: minimize the sum of artificials.
        let mut cost = vec![0.0; width + 1];
        for r in &t.rows {
            for j in 0..nv {
                cost[j] -= r[j];
            }
            cost[width] -= r[width];
        }
        if t.optimize(&mut cost, |_| true)? == Phase::Unbounded {
            unreachable!("phase 1 objective is bounded below by zero");
        }
        let rhs_scale = 1.0 + self.b.iter().map(|v| v.abs()).sum::<f64>();
        if -cost[width] > LP_TOLERANCE * rhs_scale {
            return Ok(LpOutcome::Infeasible);
        }

        // Drive remaining artificials out of the basis where possible.
        for i in 0..m {
            if t.basis[i] >= nv {
                if let Some(j) = (0..nv).find(|&j| t.rows[i][j].abs() > LP_TOLERANCE) {
                    t.pivot(i, j, &mut cost);
                }
            }
        }

        // Phase 2 on the structural columns only.
        let mut cost = vec![0.0; width + 1];
        cost[..nv].copy_from_slice(&self.c);
        for (i, &bi) in t.basis.iter().enumerate() {
            let cb = if bi < nv { self.c[bi] } else { 0.0 };
            if cb != 0.0 {
                for j in 0..=width {
                    cost[j] -= cb * t.rows[i][j];
                }
            }
        }
        if t.optimize(&mut cost, |j| j < nv)? == Phase::Unbounded {
            return Ok(LpOutcome::Unbounded);
        }
        let mut x = vec![0.0; nv];
        for (i, &bi) in t.basis.iter().enumerate() {
            if bi < nv {
                x[bi] = t.rows[i][width];
            }
        }
        let objective = x.iter().zip(&self.c).map(|(a, b)| a * b).sum();
        Ok(LpOutcome::Optimal { x, objective })
    }
}

#[derive(Debug, PartialEq)]
enum Phase {
    Optimal,
    Unbounded,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
    pivots: usize,
    max_pivots: usize,
}

impl Tableau {
    fn optimize(&mut self, cost: &mut [f64], allowed: impl Fn(usize) -> bool) -> Result<Phase> {
        loop {
            // Bland: lowest-index improving column.
            let Some(enter) = (0..self.width).find(|&j| allowed(j) && cost[j] < -LP_TOLERANCE) else {
                return Ok(Phase::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, r) in self.rows.iter().enumerate() {
                if r[enter] > LP_TOLERANCE {
                    let ratio = r[self.width] / r[enter];
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best - LP_TOLERANCE
                                || (ratio <= best + LP_TOLERANCE && self.basis[i] < self.basis[k])
                            {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Ok(Phase::Unbounded);
            };
            self.pivot(row, enter, cost);
            if self.pivots > self.max_pivots {
                return Err(Error::LpCycling(self.max_pivots));
            }
        }
    }

    fn pivot(&mut self, row: usize, col: usize, cost: &mut [f64]) {
        self.pivots += 1;
        let piv = self.rows[row][col];
        for v in self.rows[row].iter_mut() {
            *v /= piv;
        }
        let prow = self.rows[row].clone();
        for (i, r) in self.rows.iter_mut().enumerate() {
            if i != row {
                let f = r[col];
                if f != 0.0 {
                    for (v, pv) in r.iter_mut().zip(&prow) {
                        *v -= f * pv;
                    }
                }
            }
        }
        let f = cost[col];
        if f != 0.0 {
            for (v, pv) in cost.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
        }
        self.basis[row] = col;
    }
}
