//! Two-phase primal simplex on a dense tableau.
//!
//! Variables carry finite lower bounds and optional upper bounds. Lower bounds are
//! shifted out and fixed variables substituted away. Finite upper bounds become
//! explicit rows. Pricing is Dantzig's rule; after a run of degenerate pivots the
//! solver switches to Bland's rule until the objective moves again.

use crate::error::{Error, Result};

/// Smallest admissible pivot magnitude.
pub const PIVOT_TOL: f64 = 1e-10;
const OPT_TOL: f64 = 1e-10;
const PHASE1_TOL: f64 = 1e-8;
const DEGENERATE_RUN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `min c·x` subject to `rows` and `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: usize,
    cols: usize,
    // rows x (cols + 1), last column is the right-hand side
    data: Vec<f64>,
    basis: Vec<usize>,
    iterations: usize,
    max_iterations: usize,
}

impl Tableau {
    fn width(&self) -> usize {
        self.cols + 1
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width() + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize, costs: &mut [f64]) {
        let w = self.width();
        let inv = 1.0 / self.data[pr * w + pc];
        for v in &mut self.data[pr * w..(pr + 1) * w] {
            *v *= inv;
        }
        self.data[pr * w + pc] = 1.0;
        let (before, rest) = self.data.split_at_mut(pr * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[pc];
            if f != 0.0 {
                for (a, b) in row.iter_mut().zip(prow.iter()) {
                    *a -= f * b;
                }
                row[pc] = 0.0;
            }
        }
        let f = costs[pc];
        if f != 0.0 {
            for (a, b) in costs.iter_mut().zip(prow.iter()) {
                *a -= f * b;
            }
            costs[pc] = 0.0;
        }
        self.basis[pr] = pc;
        self.iterations += 1;
    }

    /// Reduced-cost row for cost vector `c`; the last entry holds `-objective`.
    fn reduced_costs(&self, c: &[f64]) -> Vec<f64> {
        let w = self.width();
        let mut d = vec![0.0; w];
        d[..self.cols].copy_from_slice(&c[..self.cols]);
        for r in 0..self.rows {
            let cb = c[self.basis[r]];
            if cb != 0.0 {
                for (a, b) in d.iter_mut().zip(&self.data[r * w..(r + 1) * w]) {
                    *a -= cb * b;
                }
            }
        }
        d
    }

    /// Runs simplex iterations until optimal. Returns `false` when unbounded.
    fn optimize(&mut self, costs: &mut [f64], allowed: &[bool]) -> Result<bool> {
        let mut degenerate_run = 0usize;
        let mut bland = false;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(Error::Solver(format!("simplex iteration limit {} reached", self.max_iterations)));
            }
            let entering = if bland {
                (0..self.cols).find(|&j| allowed[j] && costs[j] < -OPT_TOL)
            } else {
                let mut best = None;
                let mut best_d = -OPT_TOL;
                for j in 0..self.cols {
                    if allowed[j] && costs[j] < best_d {
                        best_d = costs[j];
                        best = Some(j);
                    }
                }
                best
            };
            let Some(pc) = entering else { return Ok(true) };

            let mut leave: Option<(usize, f64, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r).max(0.0) / a;
                    leave = match leave {
                        None => Some((r, ratio, a)),
                        Some((br, bratio, ba)) => {
                            if ratio < bratio - 1e-12 {
                                Some((r, ratio, a))
                            } else if ratio <= bratio + 1e-12 {
                                let better = if bland { self.basis[r] < self.basis[br] } else { a > ba };
                                if better {
                                    Some((r, ratio, a))
                                } else {
                                    Some((br, bratio, ba))
                                }
                            } else {
                                Some((br, bratio, ba))
                            }
                        }
                    };
                }
            }
            let Some((pr, ratio, _)) = leave else { return Ok(false) };
            if ratio <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run >= DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }
            self.pivot(pr, pc, costs);
        }
    }
}

/// Solves `lp` to optimality.
pub fn solve(lp: &LinearProgram) -> Result<LpOutcome> {
    let n = lp.num_vars();
    if lp.lower.len() != n || lp.upper.len() != n {
        return Err(Error::domain("bound vectors must match the variable count"));
    }
    for j in 0..n {
        if !lp.lower[j].is_finite() || lp.upper[j].is_nan() {
            return Err(Error::domain(format!("variable {j} needs a finite lower bound")));
        }
        if lp.upper[j] < lp.lower[j] - 1e-12 {
            return Ok(LpOutcome::Infeasible);
        }
    }

    // Map original variables to tableau columns.
    let mut column_of = vec![None; n];
    let mut fixed_value = vec![0.0; n];
    let mut structural = 0usize;
    for j in 0..n {
        if lp.upper[j] - lp.lower[j] <= 1e-12 {
            fixed_value[j] = lp.lower[j];
        } else {
            column_of[j] = Some(structural);
            structural += 1;
        }
    }

    // Dense rows in shifted space with non-negative right-hand sides.
    let mut dense: Vec<(Vec<f64>, Sense, f64)> = Vec::with_capacity(lp.rows.len() + n);
    for row in &lp.rows {
        let mut coeffs = vec![0.0; structural];
        let mut rhs = row.rhs;
        for &(j, a) in &row.coeffs {
            rhs -= a * lp.lower[j];
            if let Some(c) = column_of[j] {
                coeffs[c] += a;
            } else {
                rhs -= a * (fixed_value[j] - lp.lower[j]);
            }
        }
        if coeffs.iter().all(|&a| a == 0.0) {
            let ok = match row.sense {
                Sense::Le => rhs >= -PHASE1_TOL,
                Sense::Ge => rhs <= PHASE1_TOL,
                Sense::Eq => rhs.abs() <= PHASE1_TOL,
            };
            if !ok {
                return Ok(LpOutcome::Infeasible);
            }
            continue;
        }
        dense.push((coeffs, row.sense, rhs));
    }
    for j in 0..n {
        if let Some(c) = column_of[j] {
            if lp.upper[j].is_finite() {
                let mut coeffs = vec![0.0; structural];
                coeffs[c] = 1.0;
                dense.push((coeffs, Sense::Le, lp.upper[j] - lp.lower[j]));
            }
        }
    }
    for (coeffs, sense, rhs) in &mut dense {
        if *rhs < 0.0 {
            coeffs.iter_mut().for_each(|a| *a = -*a);
            *rhs = -*rhs;
            *sense = match *sense {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
    }

    let m = dense.len();
    let slacks = dense.iter().filter(|(_, s, _)| *s != Sense::Eq).count();
    let artificials = dense.iter().filter(|(_, s, _)| *s != Sense::Le).count();
    let cols = structural + slacks + artificials;
    let first_artificial = structural + slacks;
    let width = cols + 1;
    let mut tab = Tableau {
        rows: m,
        cols,
        data: vec![0.0; m * width],
        basis: vec![0; m],
        iterations: 0,
        max_iterations: 20_000 + 50 * (m + cols),
    };
    let mut next_slack = structural;
    let mut next_art = first_artificial;
    for (r, (coeffs, sense, rhs)) in dense.iter().enumerate() {
        let row = &mut tab.data[r * width..(r + 1) * width];
        row[..structural].copy_from_slice(coeffs);
        row[cols] = *rhs;
        match sense {
            Sense::Le => {
                row[next_slack] = 1.0;
                tab.basis[r] = next_slack;
                next_slack += 1;
            }
            Sense::Ge => {
                row[next_slack] = -1.0;
                next_slack += 1;
                row[next_art] = 1.0;
                tab.basis[r] = next_art;
                next_art += 1;
            }
            Sense::Eq => {
                row[next_art] = 1.0;
                tab.basis[r] = next_art;
                next_art += 1;
            }
        }
    }

    if artificials > 0 {
        let mut c1 = vec![0.0; cols];
        c1[first_artificial..].iter_mut().for_each(|c| *c = 1.0);
        let mut d = tab.reduced_costs(&c1);
        let allowed = vec![true; cols];
        tab.optimize(&mut d, &allowed)?;
        let infeasibility: f64 = (0..m).filter(|&r| tab.basis[r] >= first_artificial).map(|r| tab.rhs(r)).sum();
        if infeasibility > PHASE1_TOL {
            return Ok(LpOutcome::Infeasible);
        }
        // Drive zero-valued artificials out of the basis where possible.
        for r in 0..m {
            if tab.basis[r] >= first_artificial {
                if let Some(pc) = (0..first_artificial).find(|&j| tab.at(r, j).abs() > 1e-9) {
                    let mut scratch = vec![0.0; width];
                    tab.pivot(r, pc, &mut scratch);
                }
            }
        }
    }

    let mut c2 = vec![0.0; cols];
    for j in 0..n {
        if let Some(c) = column_of[j] {
            c2[c] = lp.objective[j];
        }
    }
    let mut d = tab.reduced_costs(&c2);
    let allowed: Vec<bool> = (0..cols).map(|j| j < first_artificial).collect();
    if !tab.optimize(&mut d, &allowed)? {
        return Ok(LpOutcome::Unbounded);
    }

    let mut y = vec![0.0; cols];
    for r in 0..m {
        y[tab.basis[r]] = tab.rhs(r);
    }
    let x: Vec<f64> = (0..n)
        .map(|j| match column_of[j] {
            Some(c) => lp.lower[j] + y[c].max(0.0),
            None => fixed_value[j],
        })
        .collect();
    let objective = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
    Ok(LpOutcome::Optimal(LpSolution { x, objective, iterations: tab.iterations }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(coeffs: &[(usize, f64)], sense: Sense, rhs: f64) -> Row {
        Row { coeffs: coeffs.to_vec(), sense, rhs }
    }

    fn optimal(lp: &LinearProgram) -> LpSolution {
        match solve(lp).unwrap() {
            LpOutcome::Optimal(s) => s,
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let lp = LinearProgram {
            objective: vec![-3.0, -5.0],
            rows: vec![
                row(&[(0, 1.0)], Sense::Le, 4.0),
                row(&[(1, 2.0)], Sense::Le, 12.0),
                row(&[(0, 3.0), (1, 2.0)], Sense::Le, 18.0),
            ],
            lower: vec![0.0; 2],
            upper: vec![f64::INFINITY; 2],
        };
        let s = optimal(&lp);
        assert!((s.objective + 36.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + y s.t. x + y >= 2, x - y = 1 -> (1.5, 0.5)
        let lp = LinearProgram {
            objective: vec![1.0, 1.0],
            rows: vec![row(&[(0, 1.0), (1, 1.0)], Sense::Ge, 2.0), row(&[(0, 1.0), (1, -1.0)], Sense::Eq, 1.0)],
            lower: vec![0.0; 2],
            upper: vec![f64::INFINITY; 2],
        };
        let s = optimal(&lp);
        assert!((s.objective - 2.0).abs() < 1e-9);
        assert!((s.x[0] - 1.5).abs() < 1e-9);
    }

    #[test]
    fn bounds_are_respected() {
        // min -x - y with 1 <= x <= 2, y fixed at 3, x + y <= 4.5
        let lp = LinearProgram {
            objective: vec![-1.0, -1.0],
            rows: vec![row(&[(0, 1.0), (1, 1.0)], Sense::Le, 4.5)],
            lower: vec![1.0, 3.0],
            upper: vec![2.0, 3.0],
        };
        let s = optimal(&lp);
        assert!((s.x[0] - 1.5).abs() < 1e-9);
        assert_eq!(s.x[1], 3.0);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let infeasible = LinearProgram {
            objective: vec![1.0],
            rows: vec![row(&[(0, 1.0)], Sense::Ge, 3.0)],
            lower: vec![0.0],
            upper: vec![2.0],
        };
        assert_eq!(solve(&infeasible).unwrap(), LpOutcome::Infeasible);
        let unbounded = LinearProgram {
            objective: vec![-1.0, 0.0],
            rows: vec![row(&[(0, 1.0), (1, -1.0)], Sense::Le, 1.0)],
            lower: vec![0.0; 2],
            upper: vec![f64::INFINITY; 2],
        };
        assert_eq!(solve(&unbounded).unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Beale's classic cycling example for naive Dantzig pricing.
        let lp = LinearProgram {
            objective: vec![-0.75, 150.0, -0.02, 6.0],
            rows: vec![
                row(&[(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], Sense::Le, 0.0),
                row(&[(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], Sense::Le, 0.0),
                row(&[(2, 1.0)], Sense::Le, 1.0),
            ],
            lower: vec![0.0; 4],
            upper: vec![f64::INFINITY; 4],
        };
        let s = optimal(&lp);
        assert!((s.objective + 0.05).abs() < 1e-9);
    }

    #[test]
    fn redundant_equalities() {
        let lp = LinearProgram {
            objective: vec![1.0, 2.0],
            rows: vec![
                row(&[(0, 1.0), (1, 1.0)], Sense::Eq, 1.0),
                row(&[(0, 2.0), (1, 2.0)], Sense::Eq, 2.0),
            ],
            lower: vec![0.0; 2],
            upper: vec![f64::INFINITY; 2],
        };
        let s = optimal(&lp);
        assert!((s.objective - 1.0).abs() < 1e-9);
    }
}
