//! Linear programming backend: a dense revised simplex method.
//!
//! Minimizes `cᵀx` subject to sparse rows `aᵢᵀx {≤,=,≥} bᵢ`, `x ≥ 0` except
//! for variables flagged free. Two-phase with artificial variables, explicit
//! dense basis inverse with periodic refactorization, Dantzig pricing that
//! falls back to Bland's rule on degenerate stalls.

use crate::error::{CmgError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A minimization problem in sparse row form.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearProgramSpec {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub free: Vec<bool>,
}

impl LinearProgramSpec {
    pub fn new(num_vars: usize) -> Self {
        LinearProgramSpec {
            objective: vec![0.0; num_vars],
            rows: Vec::new(),
            free: vec![false; num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.rows.push(Row { coeffs, sense, rhs });
        self.rows.len() - 1
    }

    pub fn set_free(&mut self, var: usize) {
        self.free[var] = true;
    }

    pub fn validate(&self) -> Result<()> {
        if self.free.len() != self.objective.len() {
            return Err(CmgError::Argument(
                "free flags and objective have different lengths".into(),
            ));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if let Some(&(j, _)) = row.coeffs.iter().find(|(j, _)| *j >= self.num_vars()) {
                return Err(CmgError::Argument(format!(
                    "row {i} references variable {j}, but there are {} variables",
                    self.num_vars()
                )));
            }
            if !row.rhs.is_finite() || row.coeffs.iter().any(|(_, a)| !a.is_finite()) {
                return Err(CmgError::Argument(format!("row {i} has non-finite data")));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(CmgError::Argument("objective has non-finite data".into()));
        }
        Ok(())
    }

    /// Largest violation of any row or bound by `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| {
            let lhs: f64 = r.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            match r.sense {
                Sense::Le => (lhs - r.rhs).max(0.0),
                Sense::Ge => (r.rhs - lhs).max(0.0),
                Sense::Eq => (lhs - r.rhs).abs(),
            }
        });
        let bounds = x
            .iter()
            .zip(&self.free)
            .map(|(&v, &f)| if f { 0.0 } else { (-v).max(0.0) });
        rows.chain(bounds).fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Basic variable occupying one row of a basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BasisEntry {
    Column(usize),
    /// Negative part of a free variable.
    NegColumn(usize),
    Slack(usize),
    Artificial(usize),
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub x: Vec<f64>,
    /// Row multipliers `∂objective/∂rhs`.
    pub duals: Vec<f64>,
    pub basis: Vec<BasisEntry>,
    pub pivots: usize,
}

impl LpSolution {
    fn non_optimal(status: LpStatus, pivots: usize) -> Self {
        LpSolution {
            status,
            objective: f64::NAN,
            x: Vec::new(),
            duals: Vec::new(),
            basis: Vec::new(),
            pivots,
        }
    }
}

/// Anything that can solve a [`LinearProgramSpec`].
pub trait LpBackend {
    /// `warm` optionally lists basic variables for a prefix of the rows.
    fn solve(&self, lp: &LinearProgramSpec, warm: Option<&[BasisEntry]>) -> Result<LpSolution>;
}

#[derive(Clone, Debug)]
pub struct DenseSimplex {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    pub refactor_every: usize,
    pub max_pivots: usize,
    /// Consecutive degenerate pivots tolerated before switching to Bland's rule.
    pub degenerate_patience: usize,
}

impl Default for DenseSimplex {
    fn default() -> Self {
        DenseSimplex {
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            refactor_every: 100,
            max_pivots: 200_000,
            degenerate_patience: 30,
        }
    }
}

/// Solves `lp` with the reference backend from a cold start.
pub fn solve_linear_program(lp: &LinearProgramSpec) -> Result<LpSolution> {
    DenseSimplex::default().solve(lp, None)
}

impl LpBackend for DenseSimplex {
    fn solve(&self, lp: &LinearProgramSpec, warm: Option<&[BasisEntry]>) -> Result<LpSolution> {
        lp.validate()?;
        let mut t = Tableau::build(lp, self);
        let started = match warm {
            Some(hint) => t.warm_start(hint)?,
            None => false,
        };
        if !started {
            t.cold_start();
        }
        if t.has_basic_artificial() {
            let phase1: Vec<f64> = t
                .kinds
                .iter()
                .map(|k| f64::from(u8::from(matches!(k, ColKind::Artificial))))
                .collect();
            match t.iterate(&phase1)? {
                Outcome::Optimal => {}
                Outcome::Unbounded => unreachable!("phase one is bounded below by zero"),
            }
            let infeasibility: f64 = t
                .basis
                .iter()
                .zip(&t.xb)
                .filter(|(&c, _)| matches!(t.kinds[c], ColKind::Artificial))
                .map(|(_, &v)| v)
                .sum();
            if infeasibility > self.feasibility_tol.max(1e-7) {
                return Ok(LpSolution::non_optimal(LpStatus::Infeasible, t.pivots));
            }
            t.drive_out_artificials();
        }
        let cost = t.cost.clone();
        match t.iterate(&cost)? {
            Outcome::Unbounded => Ok(LpSolution::non_optimal(LpStatus::Unbounded, t.pivots)),
            Outcome::Optimal => Ok(t.extract(lp)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum ColKind {
    Structural(usize),
    Negative(usize),
    Slack(usize),
    /// Slack slot of an equality row; never enters.
    Disabled,
    Artificial,
}

enum Outcome {
    Optimal,
    Unbounded,
}

struct Tableau<'o> {
    opts: &'o DenseSimplex,
    m: usize,
    num_vars: usize,
    cols: Vec<Vec<(usize, f64)>>,
    kinds: Vec<ColKind>,
    cost: Vec<f64>,
    b: Vec<f64>,
    slack_base: usize,
    art_base: usize,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    /// Column-major `B⁻¹`: entry `(i, j)` at `binv[j * m + i]`.
    binv: Vec<f64>,
    xb: Vec<f64>,
    pivots: usize,
    since_refactor: usize,
}

impl<'o> Tableau<'o> {
    fn build(lp: &LinearProgramSpec, opts: &'o DenseSimplex) -> Self {
        let m = lp.num_rows();
        let nv = lp.num_vars();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                if a != 0.0 {
                    cols[j].push((i, a));
                }
            }
        }
        // merge duplicate (row, var) entries
        for col in &mut cols {
            col.sort_by_key(|&(i, _)| i);
            col.dedup_by(|next, prev| {
                if next.0 == prev.0 {
                    prev.1 += next.1;
                    true
                } else {
                    false
                }
            });
        }
        let mut kinds: Vec<ColKind> = (0..nv).map(ColKind::Structural).collect();
        let mut cost = lp.objective.clone();
        for j in (0..nv).filter(|&j| lp.free[j]) {
            let neg = cols[j].iter().map(|&(i, a)| (i, -a)).collect();
            cols.push(neg);
            kinds.push(ColKind::Negative(j));
            cost.push(-lp.objective[j]);
        }
        let slack_base = cols.len();
        for (i, row) in lp.rows.iter().enumerate() {
            match row.sense {
                Sense::Le => {
                    cols.push(vec![(i, 1.0)]);
                    kinds.push(ColKind::Slack(i));
                }
                Sense::Ge => {
                    cols.push(vec![(i, -1.0)]);
                    kinds.push(ColKind::Slack(i));
                }
                Sense::Eq => {
                    cols.push(Vec::new());
                    kinds.push(ColKind::Disabled);
                }
            }
            cost.push(0.0);
        }
        let art_base = cols.len();
        for i in 0..m {
            cols.push(vec![(i, 1.0)]);
            kinds.push(ColKind::Artificial);
            cost.push(0.0);
        }
        let total = cols.len();
        Tableau {
            opts,
            m,
            num_vars: nv,
            cols,
            kinds,
            cost,
            b: lp.rows.iter().map(|r| r.rhs).collect(),
            slack_base,
            art_base,
            basis: vec![0; m],
            in_basis: vec![false; total],
            binv: vec![0.0; m * m],
            xb: vec![0.0; m],
            pivots: 0,
            since_refactor: 0,
        }
    }

    fn set_artificial_sign(&mut self, row: usize, sign: f64) {
        self.cols[self.art_base + row] = vec![(row, sign)];
    }

    fn cold_start(&mut self) {
        self.in_basis.iter_mut().for_each(|b| *b = false);
        self.binv.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.m {
            let slack = self.slack_base + i;
            let slack_coef = self.cols[slack].first().map(|&(_, a)| a);
            let bi = self.b[i];
            let col = match slack_coef {
                Some(s) if bi / s >= 0.0 => slack,
                _ => {
                    self.set_artificial_sign(i, if bi < 0.0 { -1.0 } else { 1.0 });
                    self.art_base + i
                }
            };
            let coef = self.cols[col][0].1;
            self.basis[i] = col;
            self.in_basis[col] = true;
            self.binv[i * self.m + i] = 1.0 / coef;
            self.xb[i] = bi / coef;
        }
    }

    fn column_of(&self, e: BasisEntry) -> Option<usize> {
        let idx = match e {
            BasisEntry::Column(j) if j < self.num_vars => j,
            BasisEntry::NegColumn(j) => return self.kinds.iter().position(|k| *k == ColKind::Negative(j)),
            BasisEntry::Slack(i) if i < self.m => self.slack_base + i,
            BasisEntry::Artificial(i) if i < self.m => self.art_base + i,
            _ => return None,
        };
        (!matches!(self.kinds[idx], ColKind::Disabled)).then_some(idx)
    }

    /// Installs a hinted basis for the first rows and slack/artificial
    /// columns for the rest. Returns `false` when the hint is unusable.
    fn warm_start(&mut self, hint: &[BasisEntry]) -> Result<bool> {
        if hint.len() > self.m {
            return Ok(false);
        }
        self.in_basis.iter_mut().for_each(|b| *b = false);
        for (i, &e) in hint.iter().enumerate() {
            let Some(col) = self.column_of(e) else {
                return Ok(false);
            };
            if self.in_basis[col] {
                return Ok(false);
            }
            if matches!(self.kinds[col], ColKind::Artificial) {
                let r = col - self.art_base;
                self.set_artificial_sign(r, 1.0);
            }
            self.basis[i] = col;
            self.in_basis[col] = true;
        }
        for i in hint.len()..self.m {
            let slack = self.slack_base + i;
            let col = if matches!(self.kinds[slack], ColKind::Disabled) || self.in_basis[slack] {
                self.set_artificial_sign(i, 1.0);
                self.art_base + i
            } else {
                slack
            };
            if self.in_basis[col] {
                return Ok(false);
            }
            self.basis[i] = col;
            self.in_basis[col] = true;
        }
        if !self.refactor() {
            return Ok(false);
        }
        // Rows past the hint hold unit columns, so flipping one only flips its own value.
        for i in hint.len()..self.m {
            if self.xb[i] < -self.opts.feasibility_tol {
                let col = self.basis[i];
                let coef = self.cols[col][0].1;
                self.in_basis[col] = false;
                self.set_artificial_sign(i, -coef);
                let art = self.art_base + i;
                self.basis[i] = art;
                self.in_basis[art] = true;
                for j in 0..self.m {
                    self.binv[j * self.m + i] = -self.binv[j * self.m + i];
                }
                self.xb[i] = -self.xb[i];
            }
        }
        if self.xb.iter().any(|&v| v < -self.opts.feasibility_tol.max(1e-7)) {
            return Ok(false);
        }
        Ok(true)
    }

    fn has_basic_artificial(&self) -> bool {
        self.basis.iter().any(|&c| matches!(self.kinds[c], ColKind::Artificial))
    }

    /// Recomputes `B⁻¹` and `x_B` by Gauss-Jordan elimination. Returns `false`
    /// if the basis is numerically singular.
    fn refactor(&mut self) -> bool {
        let m = self.m;
        // augmented [B | I], row-major, width 2m
        let w = 2 * m;
        let mut a = vec![0.0; m * w];
        for (k, &col) in self.basis.iter().enumerate() {
            for &(i, v) in &self.cols[col] {
                a[i * w + k] = v;
            }
        }
        for i in 0..m {
            a[i * w + m + i] = 1.0;
        }
        for c in 0..m {
            let (p, pv) =
                (c..m)
                    .map(|r| (r, a[r * w + c].abs()))
                    .fold((c, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pv < 1e-11 {
                return false;
            }
            if p != c {
                for k in 0..w {
                    a.swap(c * w + k, p * w + k);
                }
            }
            let inv = 1.0 / a[c * w + c];
            for k in 0..w {
                a[c * w + k] *= inv;
            }
            let (head, rest) = a.split_at_mut(c * w);
            let (pivot_row, tail) = rest.split_at_mut(w);
            for other in head.chunks_mut(w).chain(tail.chunks_mut(w)) {
                let f = other[c];
                if f != 0.0 {
                    for k in c..w {
                        other[k] -= f * pivot_row[k];
                    }
                }
            }
        }
        // row k of the inverse is the basis position k
        for k in 0..m {
            for i in 0..m {
                self.binv[i * m + k] = a[k * w + m + i];
            }
        }
        for k in 0..m {
            self.xb[k] = (0..m).map(|i| self.binv[i * m + k] * self.b[i]).sum();
        }
        self.since_refactor = 0;
        true
    }

    /// `B⁻¹ a_col`.
    fn ftran(&self, col: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let m = self.m;
        for &(i, a) in &self.cols[col] {
            let src = &self.binv[i * m..(i + 1) * m];
            for (o, &s) in out.iter_mut().zip(src) {
                *o += a * s;
            }
        }
    }

    /// `c_Bᵀ B⁻¹`.
    fn btran(&self, cost: &[f64], out: &mut [f64]) {
        let m = self.m;
        let cb: Vec<f64> = self.basis.iter().map(|&c| cost[c]).collect();
        for (i, o) in out.iter_mut().enumerate() {
            let col = &self.binv[i * m..(i + 1) * m];
            *o = col.iter().zip(&cb).map(|(a, c)| a * c).sum();
        }
    }

    fn reduced_cost(&self, cost: &[f64], pi: &[f64], j: usize) -> f64 {
        cost[j] - self.cols[j].iter().map(|&(i, a)| pi[i] * a).sum::<f64>()
    }

    fn can_enter(&self, j: usize) -> bool {
        !self.in_basis[j]
            && matches!(
                self.kinds[j],
                ColKind::Structural(_) | ColKind::Negative(_) | ColKind::Slack(_)
            )
    }

    fn pivot(&mut self, r: usize, entering: usize, alpha: &[f64], theta: f64) {
        let m = self.m;
        let ar = alpha[r];
        for j in 0..m {
            let col = &mut self.binv[j * m..(j + 1) * m];
            let v = col[r] / ar;
            if v != 0.0 {
                for (i, c) in col.iter_mut().enumerate() {
                    *c -= alpha[i] * v;
                }
            }
            col[r] = v;
        }
        for (i, x) in self.xb.iter_mut().enumerate() {
            *x -= theta * alpha[i];
        }
        self.xb[r] = theta;
        let leaving = self.basis[r];
        self.in_basis[leaving] = false;
        self.in_basis[entering] = true;
        self.basis[r] = entering;
        self.pivots += 1;
        self.since_refactor += 1;
    }

    fn iterate(&mut self, cost: &[f64]) -> Result<Outcome> {
        let m = self.m;
        let mut pi = vec![0.0; m];
        let mut alpha = vec![0.0; m];
        let mut degenerate = 0usize;
        let mut bland = false;
        loop {
            if self.pivots >= self.opts.max_pivots {
                return Err(CmgError::PivotLimit(self.pivots));
            }
            if self.since_refactor >= self.opts.refactor_every && !self.refactor() {
                return Err(CmgError::Numeric("basis became singular".into()));
            }
            self.btran(cost, &mut pi);
            let mut entering = None;
            let mut best = -self.opts.optimality_tol;
            for j in 0..self.cols.len() {
                if !self.can_enter(j) {
                    continue;
                }
                let d = self.reduced_cost(cost, &pi, j);
                if d < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(q) = entering else {
                return Ok(Outcome::Optimal);
            };
            self.ftran(q, &mut alpha);
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                if alpha[i] > self.opts.pivot_tol {
                    let ratio = self.xb[i].max(0.0) / alpha[i];
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best_ratio)) => {
                            let tie = (ratio - best_ratio).abs() <= 1e-12 * (1.0 + best_ratio);
                            let better = if tie {
                                if bland {
                                    self.basis[i] < self.basis[r]
                                } else {
                                    alpha[i] > alpha[r]
                                }
                            } else {
                                ratio < best_ratio
                            };
                            if better {
                                Some((i, ratio))
                            } else {
                                Some((r, best_ratio))
                            }
                        }
                    };
                }
            }
            let Some((r, theta)) = leave else {
                return Ok(Outcome::Unbounded);
            };
            if theta <= 1e-12 {
                degenerate += 1;
                if degenerate > self.opts.degenerate_patience {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }
            self.pivot(r, q, &alpha, theta);
        }
    }

    /// Pivots zero-valued artificials out of the basis where possible.
    fn drive_out_artificials(&mut self) {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for r in 0..m {
            if !matches!(self.kinds[self.basis[r]], ColKind::Artificial) {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.cols.len() {
                if !self.can_enter(j) {
                    continue;
                }
                let rho: f64 = self.cols[j].iter().map(|&(i, a)| self.binv[i * m + r] * a).sum();
                if rho.abs() > 1e-7 && best.is_none_or(|(_, b)| rho.abs() > b) {
                    best = Some((j, rho.abs()));
                }
            }
            if let Some((j, _)) = best {
                self.ftran(j, &mut alpha);
                let theta = self.xb[r] / alpha[r];
                self.pivot(r, j, &alpha, theta);
            }
        }
        self.refactor();
    }

    fn extract(&mut self, lp: &LinearProgramSpec) -> LpSolution {
        self.refactor();
        let mut x = vec![0.0; self.num_vars];
        for (k, &c) in self.basis.iter().enumerate() {
            match self.kinds[c] {
                ColKind::Structural(j) => x[j] += self.xb[k],
                ColKind::Negative(j) => x[j] -= self.xb[k],
                _ => {}
            }
        }
        for (j, v) in x.iter_mut().enumerate() {
            if !lp.free[j] && *v < 0.0 {
                *v = 0.0;
            }
        }
        let mut duals = vec![0.0; self.m];
        let cost = self.cost.clone();
        self.btran(&cost, &mut duals);
        let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        let basis = self
            .basis
            .iter()
            .map(|&c| match self.kinds[c] {
                ColKind::Structural(j) => BasisEntry::Column(j),
                ColKind::Negative(j) => BasisEntry::NegColumn(j),
                ColKind::Slack(i) => BasisEntry::Slack(i),
                ColKind::Artificial => BasisEntry::Artificial(c - self.art_base),
                ColKind::Disabled => unreachable!("disabled columns never enter"),
            })
            .collect();
        LpSolution {
            status: LpStatus::Optimal,
            objective,
            x,
            duals,
            basis,
            pivots: self.pivots,
        }
    }
}
