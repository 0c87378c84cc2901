//! Dense two-phase primal simplex.
//!
//! Variable bounds are eliminated by substitution (shifts, reflections,
//! splitting free variables and explicit rows for finite upper bounds), the
//! resulting `Ax = b, x >= 0` problem is solved on a full tableau with
//! Bland's rule.

use std::fmt::Write as _;

use crate::error::{argument, Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;

/// `maximize c^T x` subject to `eq_matrix x = eq_rhs`,
/// `ub_matrix x <= ub_rhs` and `var_lower <= x <= var_upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub eq_matrix: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub ub_matrix: Vec<Vec<f64>>,
    pub ub_rhs: Vec<f64>,
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
}

impl LinearProgram {
    /// An LP over `n` nonnegative variables with no constraints.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            objective,
            eq_matrix: Vec::new(),
            eq_rhs: Vec::new(),
            ub_matrix: Vec::new(),
            ub_rhs: Vec::new(),
            var_lower: vec![0.0; n],
            var_upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) {
        self.eq_matrix.push(row);
        self.eq_rhs.push(rhs);
    }

    pub fn add_ub(&mut self, row: Vec<f64>, rhs: f64) {
        self.ub_matrix.push(row);
        self.ub_rhs.push(rhs);
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.eq_matrix.len() != self.eq_rhs.len() || self.ub_matrix.len() != self.ub_rhs.len() {
            return Err(argument("constraint matrix and rhs lengths differ"));
        }
        if self.var_lower.len() != n || self.var_upper.len() != n {
            return Err(argument("bounds must have one entry per variable"));
        }
        if self.eq_matrix.iter().chain(&self.ub_matrix).any(|r| r.len() != n) {
            return Err(argument("constraint row length differs from variable count"));
        }
        if self.eq_rhs.iter().chain(&self.ub_rhs).chain(&self.objective).any(|v| !v.is_finite()) {
            return Err(argument("objective and rhs entries must be finite"));
        }
        if self.eq_matrix.iter().chain(&self.ub_matrix).flatten().any(|v| !v.is_finite()) {
            return Err(argument("constraint coefficients must be finite"));
        }
        for j in 0..n {
            let (l, u) = (self.var_lower[j], self.var_upper[j]);
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(argument(format!("variable {j} has invalid bounds [{l}, {u}]")));
            }
        }
        Ok(())
    }

    /// Human-readable listing of the program.
    pub fn to_lp_text(&self, names: Option<&[String]>) -> String {
        let name = |j: usize| names.and_then(|n| n.get(j).cloned()).unwrap_or_else(|| format!("x{j}"));
        let expr = |row: &[f64]| {
            let mut s = String::new();
            for (j, &c) in row.iter().enumerate() {
                if c != 0.0 {
                    let sign = if c < 0.0 { "-" } else if s.is_empty() { "" } else { "+" };
                    let _ = write!(s, "{}{} {} {}", if s.is_empty() { "" } else { " " }, sign, c.abs(), name(j));
                }
            }
            if s.is_empty() {
                s.push('0');
            }
            s
        };
        let mut out = String::from("maximize\n");
        let _ = writeln!(out, "  obj: {}", expr(&self.objective));
        out.push_str("subject to\n");
        for (i, (row, rhs)) in self.eq_matrix.iter().zip(&self.eq_rhs).enumerate() {
            let _ = writeln!(out, "  e{i}: {} = {rhs}", expr(row));
        }
        for (i, (row, rhs)) in self.ub_matrix.iter().zip(&self.ub_rhs).enumerate() {
            let _ = writeln!(out, "  u{i}: {} <= {rhs}", expr(row));
        }
        out.push_str("bounds\n");
        for j in 0..self.num_vars() {
            let _ = writeln!(out, "  {} <= {} <= {}", self.var_lower[j], name(j), self.var_upper[j]);
        }
        out.push_str("end\n");
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// Multipliers of the equality rows (optimal status only).
    pub eq_duals: Vec<f64>,
    /// Multipliers of the inequality rows, nonnegative (optimal status only).
    pub ub_duals: Vec<f64>,
    pub pivots: usize,
}

/// How an original variable is recovered from standard-form columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `x = offset + col`
    Shift { col: usize, offset: f64 },
    /// `x = offset - col`
    Reflect { col: usize, offset: f64 },
    /// `x = pos - neg`
    Split { pos: usize, neg: usize },
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// `rows x (cols + 1)`, last column is the rhs.
    t: Vec<f64>,
    basis: Vec<usize>,
    /// reduced costs `c_B B^-1 A_j - c_j`, last entry the objective value
    z: Vec<f64>,
    /// columns that may not enter the basis
    blocked: Vec<bool>,
    pivots: usize,
    max_pivots: usize,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * (self.cols + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.t[i * (self.cols + 1) + self.cols]
    }

    fn price(&mut self, cost: &[f64]) {
        let w = self.cols + 1;
        self.z = vec![0.0; w];
        for j in 0..self.cols {
            self.z[j] = -cost[j];
        }
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * w..(i + 1) * w];
                self.z.iter_mut().zip(row).for_each(|(z, a)| *z += cb * a);
            }
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.cols + 1;
        let p = self.t[r * w + c];
        for k in 0..w {
            self.t[r * w + k] /= p;
        }
        self.t[r * w + c] = 1.0;
        let (before, rest) = self.t.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[c];
            if f != 0.0 {
                row.iter_mut().zip(prow.iter()).for_each(|(a, b)| *a -= f * b);
                row[c] = 0.0;
            }
        }
        let f = self.z[c];
        if f != 0.0 {
            self.z.iter_mut().zip(prow.iter()).for_each(|(a, b)| *a -= f * b);
            self.z[c] = 0.0;
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Runs Bland's rule to optimality. Returns `false` when unbounded.
    fn optimize(&mut self) -> Result<bool> {
        loop {
            let entering = (0..self.cols).find(|&j| !self.blocked[j] && self.z[j] < -OPT_TOL);
            let Some(c) = entering else { return Ok(true) };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, c);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else { return Ok(false) };
            if self.pivots >= self.max_pivots {
                return Err(Error::Numeric(format!("simplex exceeded {} pivots", self.max_pivots)));
            }
            self.pivot(r, c);
            // keep the rhs nonnegative against round-off
            let w = self.cols + 1;
            for i in 0..self.rows {
                let v = &mut self.t[i * w + self.cols];
                if *v < 0.0 && *v > -1e-11 {
                    *v = 0.0;
                }
            }
        }
    }
}

/// Solves the program; infeasibility and unboundedness are reported in the
/// status, not as errors.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.num_vars();

    // standard-form columns
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (l, u) = (lp.var_lower[j], lp.var_upper[j]);
        if l.is_finite() {
            maps.push(VarMap::Shift { col: ncols, offset: l });
            if u.is_finite() {
                bound_rows.push((ncols, u - l));
            }
            ncols += 1;
        } else if u.is_finite() {
            maps.push(VarMap::Reflect { col: ncols, offset: u });
            ncols += 1;
        } else {
            maps.push(VarMap::Split { pos: ncols, neg: ncols + 1 });
            ncols += 2;
        }
    }
    if bound_rows.iter().any(|(_, w)| *w < 0.0) {
        return Ok(infeasible(n, lp));
    }

    // rows: equalities, inequalities, bound rows
    let n_eq = lp.eq_matrix.len();
    let n_ub = lp.ub_matrix.len();
    let m = n_eq + n_ub + bound_rows.len();
    let mut rows: Vec<(Vec<f64>, f64, bool)> = Vec::with_capacity(m);
    let transform = |row: &[f64], rhs: f64| -> (Vec<f64>, f64) {
        let mut out = vec![0.0; ncols];
        let mut b = rhs;
        for (j, &a) in row.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Shift { col, offset } => {
                    out[col] += a;
                    b -= a * offset;
                }
                VarMap::Reflect { col, offset } => {
                    out[col] -= a;
                    b -= a * offset;
                }
                VarMap::Split { pos, neg } => {
                    out[pos] += a;
                    out[neg] -= a;
                }
            }
        }
        (out, b)
    };
    for (row, &rhs) in lp.eq_matrix.iter().zip(&lp.eq_rhs) {
        let (r, b) = transform(row, rhs);
        rows.push((r, b, false));
    }
    for (row, &rhs) in lp.ub_matrix.iter().zip(&lp.ub_rhs) {
        let (r, b) = transform(row, rhs);
        rows.push((r, b, true));
    }
    for &(col, width) in &bound_rows {
        let mut r = vec![0.0; ncols];
        r[col] = 1.0;
        rows.push((r, width, true));
    }

    // every row gets an identity column: a slack when it has one with
    // coefficient +1, an artificial otherwise
    let n_slack = n_ub + bound_rows.len();
    let slack_start = ncols;
    let art_start = ncols + n_slack;
    let mut sign = vec![1.0; m];
    let mut identity_col = vec![0usize; m];
    let mut n_art = 0;
    for (i, (_, b, _)) in rows.iter().enumerate() {
        if *b < 0.0 {
            sign[i] = -1.0;
        }
    }
    for (i, (_, _, has_slack)) in rows.iter().enumerate() {
        if *has_slack && sign[i] > 0.0 {
            identity_col[i] = slack_start + (i - n_eq);
        } else {
            identity_col[i] = art_start + n_art;
            n_art += 1;
        }
    }
    let cols = art_start + n_art;
    let w = cols + 1;
    let mut t = vec![0.0; m * w];
    for (i, (r, b, has_slack)) in rows.iter().enumerate() {
        let s = sign[i];
        let dst = &mut t[i * w..(i + 1) * w];
        for (d, a) in dst.iter_mut().zip(r) {
            *d = s * a;
        }
        if *has_slack {
            dst[slack_start + (i - n_eq)] = s;
        }
        dst[identity_col[i]] = 1.0;
        dst[cols] = s * b;
    }
    let mut tab = Tableau {
        rows: m,
        cols,
        t,
        basis: identity_col.clone(),
        z: Vec::new(),
        blocked: vec![false; cols],
        pivots: 0,
        max_pivots: 50_000 + 50 * (m + cols),
    };

    // phase 1
    if n_art > 0 {
        let mut cost = vec![0.0; cols];
        cost[art_start..].iter_mut().for_each(|c| *c = -1.0);
        tab.price(&cost);
        tab.optimize()?;
        let infeas = -tab.z[cols];
        let scale = 1.0 + rows.iter().map(|(_, b, _)| b.abs()).fold(0.0, f64::max);
        if infeas > 1e-9 * scale {
            return Ok(infeasible(n, lp));
        }
        // drive zero-level artificials out of the basis where possible
        for i in 0..m {
            if tab.basis[i] >= art_start {
                if let Some(j) = (0..art_start).find(|&j| tab.at(i, j).abs() > PIVOT_TOL) {
                    tab.pivot(i, j);
                }
            }
        }
        for j in art_start..cols {
            tab.blocked[j] = true;
        }
    }

    // phase 2
    let mut cost = vec![0.0; cols];
    for (j, map) in maps.iter().enumerate() {
        let c = lp.objective[j];
        match *map {
            VarMap::Shift { col, .. } => cost[col] += c,
            VarMap::Reflect { col, .. } => cost[col] -= c,
            VarMap::Split { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }
    tab.price(&cost);
    if !tab.optimize()? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: vec![f64::NAN; n],
            objective_value: f64::INFINITY,
            eq_duals: Vec::new(),
            ub_duals: Vec::new(),
            pivots: tab.pivots,
        });
    }

    let mut xs = vec![0.0; cols];
    for i in 0..m {
        xs[tab.basis[i]] = tab.rhs(i);
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|map| match *map {
            VarMap::Shift { col, offset } => offset + xs[col],
            VarMap::Reflect { col, offset } => offset - xs[col],
            VarMap::Split { pos, neg } => xs[pos] - xs[neg],
        })
        .collect();
    let objective_value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    // row multipliers: reduced cost of the row's identity column (cost 0)
    let duals: Vec<f64> = (0..m).map(|i| sign[i] * tab.z[identity_col[i]]).collect();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective_value,
        eq_duals: duals[..n_eq].to_vec(),
        ub_duals: duals[n_eq..n_eq + n_ub].to_vec(),
        pivots: tab.pivots,
    })
}

fn infeasible(n: usize, _lp: &LinearProgram) -> LpSolution {
    LpSolution {
        status: LpStatus::Infeasible,
        x: vec![f64::NAN; n],
        objective_value: f64::NEG_INFINITY,
        eq_duals: Vec::new(),
        ub_duals: Vec::new(),
        pivots: 0,
    }
}

/// Largest violation of the constraints and bounds at `x`.
pub fn max_violation(lp: &LinearProgram, x: &[f64]) -> f64 {
    let dot = |r: &[f64]| -> f64 { r.iter().zip(x).map(|(a, b)| a * b).sum() };
    let mut worst = 0.0f64;
    for (r, b) in lp.eq_matrix.iter().zip(&lp.eq_rhs) {
        worst = worst.max((dot(r) - b).abs());
    }
    for (r, b) in lp.ub_matrix.iter().zip(&lp.ub_rhs) {
        worst = worst.max(dot(r) - b);
    }
    for j in 0..x.len() {
        worst = worst.max(lp.var_lower[j] - x[j]).max(x[j] - lp.var_upper[j]);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn optimal(lp: &LinearProgram) -> LpSolution {
        let s = solve(lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(max_violation(lp, &s.x) <= 1e-8);
        s
    }

    #[test]
    fn small_examples() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_ub(vec![1.0], 3.0);
        let s = optimal(&lp);
        assert!((s.x[0] - 3.0).abs() < 1e-12 && (s.objective_value - 3.0).abs() < 1e-12);

        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_ub(vec![1.0, 1.0], 1.0);
        assert!((optimal(&lp).objective_value - 1.0).abs() < 1e-12);

        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_ub(vec![1.0], -1.0);
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Infeasible);

        let mut lp = LinearProgram::new(vec![1.0, 0.0]);
        lp.add_ub(vec![-1.0, 1.0], 1.0);
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn cvar_dual_program() {
        // min xi^T z over the simplex with caps f / (1 - alpha)
        let z = [10.0, 20.0, 30.0, 40.0];
        let mut lp = LinearProgram::new(z.iter().map(|v| -v).collect());
        lp.add_eq(vec![1.0; 4], 1.0);
        lp.var_upper = vec![0.5; 4];
        let s = optimal(&lp);
        assert!((-s.objective_value - 15.0).abs() < 1e-9);
    }

    #[test]
    fn bounds_free_and_reflected_variables() {
        // max -x - y with x free, y <= 2 unbounded below, x - y = 3, x >= -10
        let mut lp = LinearProgram::new(vec![-1.0, -1.0]);
        lp.var_lower = vec![f64::NEG_INFINITY, f64::NEG_INFINITY];
        lp.var_upper = vec![f64::INFINITY, 2.0];
        lp.add_eq(vec![1.0, -1.0], 3.0);
        lp.add_ub(vec![-1.0, 0.0], 10.0);
        let s = optimal(&lp);
        assert!((s.x[0] + 10.0).abs() < 1e-9 && (s.x[1] + 13.0).abs() < 1e-9);
        assert!((s.objective_value - 23.0).abs() < 1e-9);

        let mut lp = LinearProgram::new(vec![1.0]);
        lp.var_lower = vec![2.0];
        lp.var_upper = vec![1.0];
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(vec![1.0, 2.0]);
        lp.add_eq(vec![1.0, 1.0], 1.0);
        lp.add_eq(vec![2.0, 2.0], 2.0);
        let s = optimal(&lp);
        assert!((s.objective_value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_program_terminates() {
        // a classic cycling example for the largest-coefficient rule
        let mut lp = LinearProgram::new(vec![0.75, -150.0, 0.02, -6.0]);
        lp.add_ub(vec![0.25, -60.0, -0.04, 9.0], 0.0);
        lp.add_ub(vec![0.5, -90.0, -0.02, 3.0], 0.0);
        lp.add_ub(vec![0.0, 0.0, 1.0, 0.0], 1.0);
        let s = optimal(&lp);
        assert!((s.objective_value - 0.05).abs() < 1e-9);
    }

    /// Enumerates basic solutions: every choice of `n` tight constraints
    /// among the rows and the bounds.
    fn vertex_oracle(c: &[f64], a: &[Vec<f64>], b: &[f64], upper: f64) -> f64 {
        let n = c.len();
        let mut cons: Vec<(Vec<f64>, f64)> = a.iter().cloned().zip(b.iter().copied()).collect();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = -1.0;
            cons.push((e.clone(), 0.0));
            e[j] = 1.0;
            cons.push((e, upper));
        }
        let k = cons.len();
        let mut best = f64::NEG_INFINITY;
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            let mut mat = Vec::with_capacity(n * n);
            let mut rhs = Vec::with_capacity(n);
            for &i in &idx {
                mat.extend_from_slice(&cons[i].0);
                rhs.push(cons[i].1);
            }
            if let Ok(x) = crate::linalg::solve(mat, n, &rhs) {
                let feasible = cons.iter().all(|(r, bb)| r.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= bb + 1e-9);
                if feasible {
                    best = best.max(c.iter().zip(&x).map(|(p, q)| p * q).sum());
                }
            }
            // next combination
            let mut i = n;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if idx[i] < k - n + i {
                    idx[i] += 1;
                    for j in i + 1..n {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    #[test]
    fn random_programs_match_vertex_enumeration() {
        let mut rng = stream_rng(13, 0);
        for trial in 0..1000 {
            let n = rng.gen_range(1..=4);
            let m = rng.gen_range(1..=8);
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-5..=5) as f64).collect();
            let a: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.gen_range(-4..=4) as f64).collect()).collect();
            // the origin is always feasible
            let b: Vec<f64> = (0..m).map(|_| rng.gen_range(0..=6) as f64).collect();
            let mut lp = LinearProgram::new(c.clone());
            lp.var_upper = vec![5.0; n];
            for (r, bb) in a.iter().zip(&b) {
                lp.add_ub(r.clone(), *bb);
            }
            let s = optimal(&lp);
            let oracle = vertex_oracle(&c, &a, &b, 5.0);
            assert!((s.objective_value - oracle).abs() <= 1e-7, "trial {trial}: {} vs {oracle}", s.objective_value);
        }
    }

    #[test]
    fn strong_duality_on_random_programs() {
        let mut rng = stream_rng(17, 0);
        for _ in 0..200 {
            let n = rng.gen_range(1..=30);
            let m = rng.gen_range(1..=30);
            let c: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 0.5).collect();
            // nonnegative rows with a full-support last row keep the program bounded
            let mut a: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.gen::<f64>() * 2.0 - 0.6).collect()).collect();
            a.push((0..n).map(|_| 0.1 + rng.gen::<f64>()).collect());
            let b: Vec<f64> = (0..=m).map(|_| rng.gen::<f64>() * 5.0).collect();
            let mut lp = LinearProgram::new(c.clone());
            for (r, bb) in a.iter().zip(&b) {
                lp.add_ub(r.clone(), *bb);
            }
            let s = optimal(&lp);
            let y = &s.ub_duals;
            assert!(y.iter().all(|v| *v >= -1e-9));
            let dual_obj: f64 = y.iter().zip(&b).map(|(p, q)| p * q).sum();
            assert!((dual_obj - s.objective_value).abs() <= 1e-7 * (1.0 + dual_obj.abs()));
            for j in 0..n {
                let aty: f64 = (0..=m).map(|i| a[i][j] * y[i]).sum();
                assert!(aty >= c[j] - 1e-7);
                // complementary slackness
                assert!((s.x[j] * (aty - c[j])).abs() <= 1e-7);
            }
            for i in 0..=m {
                let slack = b[i] - a[i].iter().zip(&s.x).map(|(p, q)| p * q).sum::<f64>();
                assert!((slack * y[i]).abs() <= 1e-7);
            }
        }
    }

    #[test]
    fn equality_duals() {
        // max x + 2y s.t. x + y = 1 (dual 2), x, y >= 0
        let mut lp = LinearProgram::new(vec![1.0, 2.0]);
        lp.add_eq(vec![1.0, 1.0], 1.0);
        let s = optimal(&lp);
        assert!((s.eq_duals[0] - 2.0).abs() < 1e-12);
        // same with the row negated
        let mut lp = LinearProgram::new(vec![1.0, 2.0]);
        lp.add_eq(vec![-1.0, -1.0], -1.0);
        assert!((optimal(&lp).eq_duals[0] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_output() {
        let mut rng = stream_rng(1, 0);
        let n = 12;
        let mut lp = LinearProgram::new((0..n).map(|_| rng.gen::<f64>()).collect());
        for _ in 0..10 {
            lp.add_ub((0..n).map(|_| rng.gen::<f64>()).collect(), 1.0);
        }
        let a = solve(&lp).unwrap();
        let b = solve(&lp).unwrap();
        assert_eq!(a, b);
        assert!(lp.to_lp_text(None).contains("u9:"));
    }
}
