//! Dense two-phase Simplex with Bland's rule for the pairing LP.
//!
//! Standard form: the rows `x_i <= b_i` and the power row get slack
//! variables, the coverage rows `D x = 1` start on artificial variables.
//! Rows of `A` of the form `-x_i <= 0` are implied by `x >= 0` and dropped.

use crate::dense_linalg::Matrix;
use crate::pairing_lp::LpData;
use crate::{Error, Result};

/// Pivot tolerance.
pub const PIVOT_TOLERANCE: f64 = 1e-9;
/// Phase-one objective above which the LP is declared infeasible.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-7;
pub const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    One,
    Two,
}

/// Tableau with one row per constraint plus a reduced-cost row at the
/// bottom; the last column holds the right-hand side.
#[derive(Debug, Clone)]
pub struct SimplexTableau {
    pub table: Matrix,
    /// Basic variable of each constraint row.
    pub basis: Vec<usize>,
    pub phase: Phase,
    pub num_structural: usize,
    pub num_slack: usize,
    pub num_artificial: usize,
    pub pivots: usize,
}

impl SimplexTableau {
    fn num_rows(&self) -> usize {
        self.basis.len()
    }

    fn num_cols(&self) -> usize {
        self.num_structural + self.num_slack + self.num_artificial
    }

    fn rhs_col(&self) -> usize {
        self.table.cols() - 1
    }

    fn is_artificial(&self, col: usize) -> bool {
        col >= self.num_structural + self.num_slack
    }

    fn cost_row(&self) -> usize {
        self.num_rows()
    }

    /// Largest deviation of a basic column from the matching unit vector.
    pub fn basis_error(&self) -> f64 {
        let mut err = 0.0f64;
        for (r, &col) in self.basis.iter().enumerate() {
            for i in 0..self.num_rows() {
                let expect = if i == r { 1.0 } else { 0.0 };
                err = err.max((self.table[(i, col)] - expect).abs());
            }
        }
        err
    }

    fn pivot(&mut self, row: usize, col: usize) -> Result<()> {
        self.pivots += 1;
        if self.pivots > MAX_PIVOTS {
            return Err(Error::PivotLimit(MAX_PIVOTS));
        }
        let width = self.table.cols();
        let p = self.table[(row, col)];
        self.table.row_mut(row).iter_mut().for_each(|v| *v /= p);
        let pivot_row: Vec<f64> = self.table.row(row).to_vec();
        for i in 0..self.table.rows() {
            if i == row {
                continue;
            }
            let f = self.table[(i, col)];
            if f != 0.0 {
                let r = self.table.row_mut(i);
                for j in 0..width {
                    r[j] -= f * pivot_row[j];
                }
                r[col] = 0.0;
            }
        }
        self.basis[row] = col;
        Ok(())
    }

    /// Sets the reduced-cost row for minimizing `cost^T z`.
    fn set_costs(&mut self, cost: &[f64]) {
        let cr = self.cost_row();
        let width = self.table.cols();
        let mut row = vec![0.0; width];
        row[..cost.len()].copy_from_slice(cost);
        for (i, &bcol) in self.basis.iter().enumerate() {
            let cb = cost[bcol];
            if cb != 0.0 {
                for (rv, tv) in row.iter_mut().zip(self.table.row(i)) {
                    *rv -= cb * tv;
                }
            }
        }
        self.table.row_mut(cr).copy_from_slice(&row);
    }

    /// Runs Bland's rule on the current cost row; artificial columns may
    /// enter only in phase one.
    fn iterate(&mut self) -> Result<()> {
        let cr = self.cost_row();
        let rhs = self.rhs_col();
        loop {
            let entering = (0..self.num_cols())
                .filter(|&j| self.phase == Phase::One || !self.is_artificial(j))
                .find(|&j| self.table[(cr, j)] < -PIVOT_TOLERANCE);
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.num_rows() {
                let a = self.table[(i, col)];
                if a > PIVOT_TOLERANCE {
                    let ratio = self.table[(i, rhs)].max(0.0) / a;
                    let better = match leave {
                        None => true,
                        Some((l, best)) => {
                            ratio < best - 1e-12 || (ratio <= best + 1e-12 && self.basis[i] < self.basis[l])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((row, _)) = leave else {
                return Err(Error::Convergence("linear program is unbounded".into()));
            };
            self.pivot(row, col)?;
        }
    }

    /// Pivots basic artificials out where possible and deletes rows whose
    /// artificial cannot leave (redundant equalities).
    fn drive_out_artificials(&mut self) -> Result<()> {
        let mut r = 0;
        while r < self.num_rows() {
            if !self.is_artificial(self.basis[r]) {
                r += 1;
                continue;
            }
            let col = (0..self.num_structural + self.num_slack).find(|&j| self.table[(r, j)].abs() > PIVOT_TOLERANCE);
            match col {
                Some(c) => {
                    self.pivot(r, c)?;
                    r += 1;
                }
                None => self.remove_row(r),
            }
        }
        Ok(())
    }

    fn remove_row(&mut self, r: usize) {
        let rows: Vec<Vec<f64>> = (0..self.table.rows())
            .filter(|&i| i != r)
            .map(|i| self.table.row(i).to_vec())
            .collect();
        self.table = Matrix::from_rows(&rows).expect("rectangular rows");
        self.basis.remove(r);
    }

    fn value_of(&self, var: usize) -> f64 {
        self.basis
            .iter()
            .position(|&b| b == var)
            .map_or(0.0, |r| self.table[(r, self.rhs_col())])
    }
}

#[derive(Debug, Clone)]
pub struct SimplexSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
    pub tableau: SimplexTableau,
}

/// Builds the phase-one tableau of `lp`.
pub fn initial_tableau(lp: &LpData) -> SimplexTableau {
    let n = lp.num_vars();
    let ineq: Vec<usize> = (0..lp.a.rows())
        .filter(|&i| {
            let row = lp.a.row(i);
            let implied = lp.u[i] == 0.0 && row.iter().filter(|&&v| v != 0.0).count() == 1 && row.iter().any(|&v| v < 0.0);
            !implied
        })
        .collect();
    let n_slack = ineq.len();
    let n_eq = lp.d.rows();
    let n_art = n_eq;
    let rows = n_slack + n_eq;
    let cols = n + n_slack + n_art + 1;
    let mut table = Matrix::zeros(rows + 1, cols);
    let mut basis = Vec::with_capacity(rows);
    for (r, &i) in ineq.iter().enumerate() {
        table.row_mut(r)[..n].copy_from_slice(lp.a.row(i));
        table[(r, n + r)] = 1.0;
        table[(r, cols - 1)] = lp.u[i];
        basis.push(n + r);
    }
    for e in 0..n_eq {
        let r = n_slack + e;
        table.row_mut(r)[..n].copy_from_slice(lp.d.row(e));
        table[(r, n + n_slack + e)] = 1.0;
        table[(r, cols - 1)] = 1.0;
        basis.push(n + n_slack + e);
    }
    SimplexTableau {
        table,
        basis,
        phase: Phase::One,
        num_structural: n,
        num_slack: n_slack,
        num_artificial: n_art,
        pivots: 0,
    }
}

/// Maximizes `r_s^T x` over the LP with two-phase Simplex.
pub fn simplex_solve(lp: &LpData) -> Result<SimplexSolution> {
    let mut tab = initial_tableau(lp);
    let n = lp.num_vars();
    let total = tab.num_cols();

    let mut phase_one = vec![0.0; total];
    phase_one[n + tab.num_slack..].iter_mut().for_each(|c| *c = 1.0);
    tab.set_costs(&phase_one);
    tab.iterate()?;
    let infeasibility = -tab.table[(tab.cost_row(), tab.rhs_col())];
    if infeasibility > FEASIBILITY_TOLERANCE {
        return Err(Error::Infeasible {
            phase_one_objective: infeasibility,
        });
    }
    tab.drive_out_artificials()?;

    tab.phase = Phase::Two;
    let mut phase_two = vec![0.0; total];
    for (c, r) in phase_two.iter_mut().zip(&lp.r_s) {
        *c = -r;
    }
    tab.set_costs(&phase_two);
    tab.iterate()?;

    let x: Vec<f64> = (0..n).map(|j| tab.value_of(j).max(0.0)).collect();
    Ok(SimplexSolution {
        objective: lp.objective(&x),
        pivots: tab.pivots,
        x,
        tableau: tab,
    })
}
