//! Structured semidefinite feasibility.
//!
//! A problem declares matrix variables (symmetric ones restricted to a
//! [`SparsityPattern`], rectangular ones restricted to a [`MatrixMask`]) and
//! a list of matrix inequalities whose left-hand sides are affine maps of
//! those variables. The maps are ordinary closures; the solver recovers
//! their affine coefficients by evaluation and then maximizes the common
//! slack `t` in
//!
//! ```text
//!     F_k(x) ⪰ t·I   for every constraint k
//! ```
//!
//! with a primal log-barrier path-following method. A point is reported
//! feasible once `t` exceeds the requested margin; infeasibility is never
//! claimed, only [`SolveStatus::BudgetExhausted`].

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use log::{debug, trace};
use nalgebra::{Cholesky, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{sym_eig, DenseMatrix, SymmetricMatrix};

/// Default strict-feasibility margin.
pub const DEFAULT_MARGIN: f64 = 1e-6;
/// Default Newton-iteration budget.
pub const DEFAULT_BUDGET: usize = 500;
/// Tolerance used when re-validating a solver result.
pub const VALIDATION_TOL: f64 = 1e-8;

/// Which entries of a symmetric matrix variable may be nonzero.
///
/// Diagonal entries are always free. Only pairs `(i, j)` with `i >= j` are
/// stored; lookups are symmetric.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    n: usize,
    off_diagonal: BTreeSet<(usize, usize)>,
}

impl SparsityPattern {
    pub fn diagonal(n: usize) -> Self {
        Self {
            n,
            off_diagonal: BTreeSet::new(),
        }
    }

    pub fn full(n: usize) -> Self {
        let mut p = Self::diagonal(n);
        for i in 0..n {
            for j in 0..i {
                p.off_diagonal.insert((i, j));
            }
        }
        p
    }

    /// Pattern in which coordinate `i` couples with nothing when
    /// `nonlinear[i]` is set, while linear coordinates couple freely with
    /// each other.
    pub fn lyapunov_structure(nonlinear: &[bool]) -> Self {
        let n = nonlinear.len();
        let mut p = Self::diagonal(n);
        for i in 0..n {
            for j in 0..i {
                if !nonlinear[i] && !nonlinear[j] {
                    p.off_diagonal.insert((i, j));
                }
            }
        }
        p
    }

    /// Block-diagonal composition: no coupling across blocks.
    pub fn block_diag(blocks: &[&SparsityPattern]) -> Self {
        let n = blocks.iter().map(|b| b.n).sum();
        let mut p = Self::diagonal(n);
        let mut offset = 0;
        for b in blocks {
            for &(i, j) in &b.off_diagonal {
                p.off_diagonal.insert((i + offset, j + offset));
            }
            offset += b.n;
        }
        p
    }

    /// Allows the off-diagonal entry `(i, j)`.
    pub fn allow(&mut self, i: usize, j: usize) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(Error::Dimension(format!(
                "entry ({i},{j}) outside a {0}x{0} pattern",
                self.n
            )));
        }
        if i != j {
            self.off_diagonal.insert((i.max(j), i.min(j)));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_free(&self, i: usize, j: usize) -> bool {
        i == j || self.off_diagonal.contains(&(i.max(j), i.min(j)))
    }

    /// Free entries of the lower triangle in row-major order.
    pub fn free_entries(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for i in 0..self.n {
            for j in 0..=i {
                if self.is_free(i, j) {
                    v.push((i, j));
                }
            }
        }
        v
    }

    /// Number of nonzero entries of `m` (lower triangle) that the pattern forbids.
    pub fn violations(&self, m: &DenseMatrix) -> usize {
        let mut count = 0;
        for i in 0..self.n {
            for j in 0..i {
                if !self.is_free(i, j) && (m[(i, j)] != 0.0 || m[(j, i)] != 0.0) {
                    count += 1;
                }
            }
        }
        count
    }

    /// Zeroes every entry the pattern forbids.
    pub fn project(&self, m: &mut DenseMatrix) {
        for i in 0..self.n {
            for j in 0..i {
                if !self.is_free(i, j) {
                    m[(i, j)] = 0.0;
                    m[(j, i)] = 0.0;
                }
            }
        }
    }
}

/// Which entries of a rectangular matrix variable may be nonzero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixMask {
    rows: usize,
    cols: usize,
    free: Vec<bool>,
}

impl MatrixMask {
    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            free: vec![true; rows * cols],
        }
    }

    pub fn with_zero_rows(mut self, rows: std::ops::Range<usize>) -> Self {
        for i in rows {
            for j in 0..self.cols {
                self.free[i * self.cols + j] = false;
            }
        }
        self
    }

    pub fn with_zero_cols(mut self, cols: std::ops::Range<usize>) -> Self {
        for j in cols {
            for i in 0..self.rows {
                self.free[i * self.cols + j] = false;
            }
        }
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_free(&self, i: usize, j: usize) -> bool {
        self.free[i * self.cols + j]
    }

    pub fn free_entries(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for i in 0..self.rows {
            for j in 0..self.cols {
                if self.is_free(i, j) {
                    v.push((i, j));
                }
            }
        }
        v
    }

    pub fn violations(&self, m: &DenseMatrix) -> usize {
        let mut count = 0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                if !self.is_free(i, j) && m[(i, j)] != 0.0 {
                    count += 1;
                }
            }
        }
        count
    }

    pub fn project(&self, m: &mut DenseMatrix) {
        for i in 0..self.rows {
            for j in 0..self.cols {
                if !self.is_free(i, j) {
                    m[(i, j)] = 0.0;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VariableShape {
    Symmetric(SparsityPattern),
    Matrix(MatrixMask),
}

impl VariableShape {
    fn dims(&self) -> (usize, usize) {
        match self {
            VariableShape::Symmetric(p) => (p.n(), p.n()),
            VariableShape::Matrix(m) => (m.rows(), m.cols()),
        }
    }

    fn free_entries(&self) -> Vec<(usize, usize)> {
        match self {
            VariableShape::Symmetric(p) => p.free_entries(),
            VariableShape::Matrix(m) => m.free_entries(),
        }
    }

    fn violations(&self, m: &DenseMatrix) -> usize {
        match self {
            VariableShape::Symmetric(p) => p.violations(m),
            VariableShape::Matrix(mask) => mask.violations(m),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub shape: VariableShape,
}

/// Handle to a declared variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(pub usize);

/// Required sign of a constraint's left-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `F(x) ⪰ margin·I`
    PositiveDefinite,
    /// `F(x) ⪯ −margin·I`
    NegativeDefinite,
}

/// Affine map from the variable values (in declaration order) to a square matrix.
pub type AffineMap = Arc<dyn Fn(&[DenseMatrix]) -> DenseMatrix + Send + Sync>;

#[derive(Clone)]
pub struct LmiConstraint {
    pub name: String,
    pub sense: Sense,
    pub map: AffineMap,
}

impl fmt::Debug for LmiConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LmiConstraint")
            .field("name", &self.name)
            .field("sense", &self.sense)
            .finish_non_exhaustive()
    }
}

impl LmiConstraint {
    /// Left-hand side oriented so that feasibility means "positive definite".
    fn oriented(&self, values: &[DenseMatrix]) -> DenseMatrix {
        let m = (self.map)(values);
        match self.sense {
            Sense::PositiveDefinite => m,
            Sense::NegativeDefinite => -m,
        }
    }
}

/// `trace(variable) = value`, used to remove the scale freedom of
/// homogeneous problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceNormalization {
    pub variable: VarId,
    pub value: f64,
}

#[derive(Debug, Clone, Default)]
pub struct AffineLmiProblem {
    variables: Vec<Variable>,
    constraints: Vec<LmiConstraint>,
    normalization: Option<TraceNormalization>,
}

impl AffineLmiProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_symmetric(&mut self, name: impl Into<String>, pattern: SparsityPattern) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            shape: VariableShape::Symmetric(pattern),
        });
        VarId(self.variables.len() - 1)
    }

    pub fn add_matrix(&mut self, name: impl Into<String>, mask: MatrixMask) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            shape: VariableShape::Matrix(mask),
        });
        VarId(self.variables.len() - 1)
    }

    pub fn add_constraint<F>(&mut self, name: impl Into<String>, sense: Sense, map: F)
    where
        F: Fn(&[DenseMatrix]) -> DenseMatrix + Send + Sync + 'static,
    {
        self.constraints.push(LmiConstraint {
            name: name.into(),
            sense,
            map: Arc::new(map),
        });
    }

    /// Requires `trace(var) = value`. `var` must be symmetric.
    pub fn normalize_trace(&mut self, var: VarId, value: f64) -> Result<()> {
        match self.variables.get(var.0) {
            Some(Variable {
                shape: VariableShape::Symmetric(_),
                ..
            }) => {
                self.normalization = Some(TraceNormalization {
                    variable: var,
                    value,
                });
                Ok(())
            }
            _ => Err(Error::InvalidInput(
                "trace normalization needs a declared symmetric variable".into(),
            )),
        }
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[LmiConstraint] {
        &self.constraints
    }

    pub fn normalization(&self) -> Option<TraceNormalization> {
        self.normalization
    }

    fn zero_values(&self) -> Vec<DenseMatrix> {
        self.variables
            .iter()
            .map(|v| {
                let (r, c) = v.shape.dims();
                DenseMatrix::zeros(r, c)
            })
            .collect()
    }

    /// Evaluates every constraint at `assignment` and reports the smallest
    /// eigenvalue of each (sign-oriented) left-hand side.
    pub fn check(&self, assignment: &[DenseMatrix]) -> Result<CheckReport> {
        if assignment.len() != self.variables.len() {
            return Err(Error::Dimension(format!(
                "assignment has {} values for {} variables",
                assignment.len(),
                self.variables.len()
            )));
        }
        let mut pattern_violations = 0;
        for (v, value) in self.variables.iter().zip(assignment) {
            let (r, c) = v.shape.dims();
            if value.shape() != (r, c) {
                return Err(Error::Dimension(format!(
                    "variable {} is {r}x{c} but the assignment is {}x{}",
                    v.name,
                    value.nrows(),
                    value.ncols()
                )));
            }
            pattern_violations += v.shape.violations(value);
            if let VariableShape::Symmetric(_) = v.shape {
                for i in 0..r {
                    for j in 0..i {
                        if value[(i, j)] != value[(j, i)] {
                            pattern_violations += 1;
                        }
                    }
                }
            }
        }
        let mut residuals = Vec::with_capacity(self.constraints.len());
        for c in &self.constraints {
            let m = c.oriented(assignment);
            if !m.is_square() {
                return Err(Error::Dimension(format!(
                    "constraint {} is not square",
                    c.name
                )));
            }
            let s = SymmetricMatrix::symmetric_part(&m);
            residuals.push(sym_eig(&s)?.min());
        }
        Ok(CheckReport {
            residuals,
            pattern_violations,
        })
    }

    /// Searches for a strictly feasible assignment.
    pub fn solve(&self, options: &SolveOptions) -> Result<FeasibilityResult> {
        if options.budget == 0 {
            return Err(Error::InvalidInput(
                "iteration budget must be at least 1".into(),
            ));
        }
        if !(options.margin >= 0.0 && options.margin.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "margin must be finite and nonnegative, got {}",
                options.margin
            )));
        }
        if self.constraints.is_empty() {
            return Err(Error::InvalidInput("problem has no constraints".into()));
        }
        let compiled = Compiled::new(self)?;
        let outcome = compiled.run(options);
        let assignment = compiled.values_from_reduced(&outcome.z);
        let report = self.check(&assignment)?;
        let validated = report.passes(options.margin - VALIDATION_TOL);
        let status = if outcome.reached_margin && validated {
            SolveStatus::Feasible
        } else {
            SolveStatus::BudgetExhausted
        };
        debug!(
            "sdp solve: {:?} after {} iterations, slack {:.3e}, residuals {:?}",
            status, outcome.iterations, outcome.t, report.residuals
        );
        Ok(FeasibilityResult {
            status,
            assignment,
            residuals: report.residuals,
            iterations: outcome.iterations,
            slack: outcome.t,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    /// Smallest eigenvalue of each sign-oriented constraint.
    pub residuals: Vec<f64>,
    /// Nonzero entries in forbidden positions (plus asymmetric pairs).
    pub pattern_violations: usize,
}

impl CheckReport {
    pub fn min_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn passes(&self, margin: f64) -> bool {
        self.pattern_violations == 0 && self.residuals.iter().all(|&r| r > margin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Feasible,
    /// No point with slack above the margin was found. Not a proof of
    /// infeasibility.
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct FeasibilityResult {
    pub status: SolveStatus,
    /// Best point found, one value per variable in declaration order.
    pub assignment: Vec<DenseMatrix>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// Common slack `t` reached by the solver.
    pub slack: f64,
}

impl FeasibilityResult {
    pub fn is_feasible(&self) -> bool {
        self.status == SolveStatus::Feasible
    }

    pub fn value(&self, var: VarId) -> &DenseMatrix {
        &self.assignment[var.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub margin: f64,
    /// Maximum number of Newton steps.
    pub budget: usize,
    /// Stop once the slack exceeds the margin and the barrier gap is at most
    /// `rel_gap·t`. Smaller values push closer to the maximal slack.
    pub rel_gap: f64,
    /// Upper bound imposed on the slack so that it stays finite on
    /// problems without a normalization.
    pub slack_cap: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            budget: DEFAULT_BUDGET,
            rel_gap: 1.0,
            slack_cap: 1e3,
        }
    }
}

impl SolveOptions {
    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_rel_gap(mut self, rel_gap: f64) -> Self {
        self.rel_gap = rel_gap;
        self
    }
}

/// One scalar unknown: entry `(i, j)` of variable `var`.
#[derive(Debug, Clone, Copy)]
struct Scalar {
    var: usize,
    i: usize,
    j: usize,
    symmetric: bool,
}

/// A constraint compiled to `D0 + Σ z_i D_i` in the reduced unknowns.
struct Block {
    dim: usize,
    constant: DenseMatrix,
    /// Coefficient matrix per reduced unknown; `None` when it is zero.
    coefficients: Vec<Option<DenseMatrix>>,
}

struct Compiled<'a> {
    problem: &'a AffineLmiProblem,
    scalars: Vec<Scalar>,
    /// Index (into `scalars`) eliminated by the normalization, with its value
    /// expressed as `offset − Σ_{k in dependents} z_k`.
    eliminated: Option<(usize, f64, Vec<usize>)>,
    /// Scalars that remain unknown, in order.
    reduced: Vec<usize>,
    blocks: Vec<Block>,
    z0: DVector<f64>,
}

impl<'a> Compiled<'a> {
    fn new(problem: &'a AffineLmiProblem) -> Result<Self> {
        let mut scalars = Vec::new();
        for (var, v) in problem.variables.iter().enumerate() {
            let symmetric = matches!(v.shape, VariableShape::Symmetric(_));
            for (i, j) in v.shape.free_entries() {
                scalars.push(Scalar {
                    var,
                    i,
                    j,
                    symmetric,
                });
            }
        }

        let eliminated = match problem.normalization {
            None => None,
            Some(norm) => {
                let diag: Vec<usize> = scalars
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.var == norm.variable.0 && s.i == s.j)
                    .map(|(k, _)| k)
                    .collect();
                let (&first, rest) = diag.split_first().ok_or_else(|| {
                    Error::InvalidInput("normalized variable has no diagonal".into())
                })?;
                Some((first, norm.value, rest.to_vec()))
            }
        };
        let reduced: Vec<usize> = (0..scalars.len())
            .filter(|k| eliminated.as_ref().is_none_or(|(e, _, _)| e != k))
            .collect();

        let zero = problem.zero_values();
        let mut blocks = Vec::with_capacity(problem.constraints.len());
        for c in &problem.constraints {
            let base = c.oriented(&zero);
            if !base.is_square() {
                return Err(Error::Dimension(format!(
                    "constraint {} maps to a {}x{} matrix",
                    c.name,
                    base.nrows(),
                    base.ncols()
                )));
            }
            let dim = base.nrows();
            let mut per_scalar = Vec::with_capacity(scalars.len());
            for s in &scalars {
                let mut vals = zero.clone();
                set_unit(&mut vals, s);
                let m = c.oriented(&vals) - &base;
                if m.shape() != (dim, dim) {
                    return Err(Error::Dimension(format!(
                        "constraint {} changes shape with its arguments",
                        c.name
                    )));
                }
                per_scalar.push(m);
            }
            let base = symmetrize_checked(&base, &c.name)?;
            let per_scalar = per_scalar
                .iter()
                .map(|m| symmetrize_checked(m, &c.name))
                .collect::<Result<Vec<_>>>()?;

            verify_affine(c, &zero, &scalars, &base, &per_scalar)?;

            // Fold in the normalization: x_e = value − Σ x_d.
            let (constant, coefficients) = match &eliminated {
                None => (base, per_scalar.into_iter().map(Some).collect::<Vec<_>>()),
                Some((e, value, deps)) => {
                    let ce = per_scalar[*e].clone();
                    let constant = &base + &ce * *value;
                    let coefficients = reduced
                        .iter()
                        .map(|&k| {
                            if deps.contains(&k) {
                                Some(&per_scalar[k] - &ce)
                            } else {
                                Some(per_scalar[k].clone())
                            }
                        })
                        .collect();
                    (constant, coefficients)
                }
            };
            let coefficients = coefficients
                .into_iter()
                .map(|m| m.filter(|m| m.iter().any(|v| *v != 0.0)))
                .collect();
            blocks.push(Block {
                dim,
                constant,
                coefficients,
            });
        }

        // Identity start restricted to the pattern, scaled to honour the normalization.
        let mut x0 = vec![0.0; scalars.len()];
        for (k, s) in scalars.iter().enumerate() {
            if s.symmetric && s.i == s.j {
                x0[k] = 1.0;
            }
        }
        if let (Some(norm), Some(_)) = (problem.normalization, &eliminated) {
            let n = problem.variables[norm.variable.0].shape.dims().0 as f64;
            for (k, s) in scalars.iter().enumerate() {
                if s.var == norm.variable.0 && s.i == s.j {
                    x0[k] = norm.value / n;
                }
            }
        }
        let z0 = DVector::from_iterator(reduced.len(), reduced.iter().map(|&k| x0[k]));

        Ok(Self {
            problem,
            scalars,
            eliminated,
            reduced,
            blocks,
            z0,
        })
    }

    fn full_scalars(&self, z: &DVector<f64>) -> Vec<f64> {
        let mut x = vec![0.0; self.scalars.len()];
        for (r, &k) in self.reduced.iter().enumerate() {
            x[k] = z[r];
        }
        if let Some((e, value, deps)) = &self.eliminated {
            x[*e] = value - deps.iter().map(|&d| x[d]).sum::<f64>();
        }
        x
    }

    fn values_from_reduced(&self, z: &DVector<f64>) -> Vec<DenseMatrix> {
        let x = self.full_scalars(z);
        let mut vals = self.problem.zero_values();
        for (s, &v) in self.scalars.iter().zip(&x) {
            vals[s.var][(s.i, s.j)] = v;
            if s.symmetric {
                vals[s.var][(s.j, s.i)] = v;
            }
        }
        vals
    }

    fn block_value(&self, b: &Block, z: &DVector<f64>, t: f64) -> DenseMatrix {
        let mut m = b.constant.clone();
        for (i, c) in b.coefficients.iter().enumerate() {
            if let Some(c) = c {
                if z[i] != 0.0 {
                    m += c * z[i];
                }
            }
        }
        for d in 0..b.dim {
            m[(d, d)] -= t;
        }
        m
    }

    /// Barrier value at (z, t); `None` outside the domain.
    fn barrier(&self, z: &DVector<f64>, t: f64, cap: f64, radius2: f64) -> Option<f64> {
        if t >= cap {
            return None;
        }
        let ball = radius2 - z.norm_squared();
        if ball <= 0.0 {
            return None;
        }
        let mut phi = -(cap - t).ln() - ball.ln();
        for b in &self.blocks {
            let s = self.block_value(b, z, t);
            let chol = Cholesky::new(s)?;
            let logdet: f64 = chol.l_dirty().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
            phi -= logdet;
        }
        Some(phi)
    }

    fn run(&self, opts: &SolveOptions) -> Outcome {
        let nz = self.reduced.len();
        let nu: f64 = self.blocks.iter().map(|b| b.dim as f64).sum::<f64>() + 2.0;
        let mut z = self.z0.clone();
        let start_min = self
            .blocks
            .iter()
            .map(|b| {
                let s = SymmetricMatrix::symmetric_part(&self.block_value(b, &z, 0.0));
                jacobi_min(&s)
            })
            .fold(f64::INFINITY, f64::min);
        let cap = opts.slack_cap.max(start_min + 1.0);
        let mut t = (start_min - 1.0).min(cap - 1.0);
        let radius2 = (1e4_f64).max(10.0 * z.norm()).powi(2);
        let mut weight = 1.0_f64;
        let mu = 10.0;
        let mut iterations = 0;

        trace!(
            "sdp: {} unknowns, {} blocks, nu = {}, start slack {:.3e}",
            nz,
            self.blocks.len(),
            nu,
            t
        );

        loop {
            // Centering by damped Newton on weight·(−t) + barrier.
            let mut centered = false;
            while iterations < opts.budget {
                iterations += 1;
                let Some((grad, hess)) = self.derivatives(&z, t, cap, radius2) else {
                    break;
                };
                let mut g = grad;
                g[nz] -= weight;
                let step = newton_step(&hess, &g);
                let decrement2 = -g.dot(&step);
                if !(decrement2.is_finite()) {
                    break;
                }
                if decrement2 * 0.5 <= 1e-10 {
                    centered = true;
                    break;
                }
                let f0 = -weight * t + self.barrier(&z, t, cap, radius2).unwrap_or(f64::INFINITY);
                let mut alpha = 1.0;
                let mut moved = false;
                while alpha > 1e-14 {
                    let z1 = &z + step.rows(0, nz) * alpha;
                    let t1 = t + step[nz] * alpha;
                    if let Some(phi) = self.barrier(&z1, t1, cap, radius2) {
                        let f1 = -weight * t1 + phi;
                        if f1 <= f0 - 0.25 * alpha * decrement2 {
                            z = z1;
                            t = t1;
                            moved = true;
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                if !moved {
                    centered = true;
                    break;
                }
            }

            let gap = nu / weight;
            if t > opts.margin && gap <= opts.rel_gap * t {
                return Outcome::new(z, t, true, iterations);
            }
            if centered && t + 1.5 * gap < opts.margin {
                // The maximal slack provably sits below the margin.
                return Outcome::new(z, t, false, iterations);
            }
            if centered && gap < 1e-12 {
                return Outcome::new(z, t, t > opts.margin, iterations);
            }
            if iterations >= opts.budget {
                return Outcome::new(z, t, t > opts.margin, iterations);
            }
            if centered {
                weight *= mu;
            }
        }
    }

    /// Gradient and Hessian of the barrier in (z, t).
    fn derivatives(
        &self,
        z: &DVector<f64>,
        t: f64,
        cap: f64,
        radius2: f64,
    ) -> Option<(DVector<f64>, DenseMatrix)> {
        let nz = self.reduced.len();
        let n = nz + 1;
        let mut g = DVector::zeros(n);
        let mut h = DenseMatrix::zeros(n, n);

        for b in &self.blocks {
            let s = self.block_value(b, z, t);
            let inv = Cholesky::new(s)?.inverse();
            // M_i = S⁻¹ D_i; the slack direction has D_t = −I.
            let mut active: Vec<(usize, DenseMatrix)> = Vec::new();
            for (i, c) in b.coefficients.iter().enumerate() {
                if let Some(c) = c {
                    active.push((i, &inv * c));
                }
            }
            active.push((nz, -inv.clone()));
            let transposed: Vec<DenseMatrix> = active.iter().map(|(_, m)| m.transpose()).collect();
            for (a, (i, mi)) in active.iter().enumerate() {
                g[*i] -= mi.trace();
                for (bidx, (j, _)) in active.iter().enumerate().skip(a) {
                    let v = mi.dot(&transposed[bidx]);
                    h[(*i, *j)] += v;
                    if i != j {
                        h[(*j, *i)] += v;
                    }
                }
            }
        }

        let slack = cap - t;
        g[nz] += 1.0 / slack;
        h[(nz, nz)] += 1.0 / (slack * slack);

        let ball = radius2 - z.norm_squared();
        if ball <= 0.0 {
            return None;
        }
        for i in 0..nz {
            g[i] += 2.0 * z[i] / ball;
            h[(i, i)] += 2.0 / ball;
            for j in 0..nz {
                h[(i, j)] += 4.0 * z[i] * z[j] / (ball * ball);
            }
        }
        Some((g, h))
    }
}

struct Outcome {
    z: DVector<f64>,
    t: f64,
    reached_margin: bool,
    iterations: usize,
}

impl Outcome {
    fn new(z: DVector<f64>, t: f64, reached_margin: bool, iterations: usize) -> Self {
        Self {
            z,
            t,
            reached_margin,
            iterations,
        }
    }
}

fn newton_step(h: &DenseMatrix, g: &DVector<f64>) -> DVector<f64> {
    let scale = h.diagonal().amax().max(1e-300);
    let mut reg = 0.0;
    loop {
        let mut hr = h.clone();
        if reg > 0.0 {
            for i in 0..hr.nrows() {
                hr[(i, i)] += reg;
            }
        }
        if let Some(ch) = Cholesky::<f64, Dyn>::new(hr) {
            return -ch.solve(g);
        }
        reg = if reg == 0.0 {
            1e-14 * scale
        } else {
            reg * 100.0
        };
    }
}

fn jacobi_min(s: &SymmetricMatrix) -> f64 {
    sym_eig(s).map(|e| e.min()).unwrap_or(f64::NEG_INFINITY)
}

fn set_unit(vals: &mut [DenseMatrix], s: &Scalar) {
    vals[s.var][(s.i, s.j)] = 1.0;
    if s.symmetric {
        vals[s.var][(s.j, s.i)] = 1.0;
    }
}

fn symmetrize_checked(m: &DenseMatrix, name: &str) -> Result<DenseMatrix> {
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-9 * scale {
        return Err(Error::InvalidInput(format!(
            "constraint {name} does not produce a symmetric matrix (asymmetry {asym:.3e})"
        )));
    }
    Ok((m + m.transpose()) * 0.5)
}

fn verify_affine(
    c: &LmiConstraint,
    zero: &[DenseMatrix],
    scalars: &[Scalar],
    base: &DenseMatrix,
    per_scalar: &[DenseMatrix],
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut vals = zero.to_vec();
    let mut predicted = base.clone();
    for (s, coeff) in scalars.iter().zip(per_scalar) {
        let x: f64 = rng.random_range(-1.0..1.0);
        vals[s.var][(s.i, s.j)] = x;
        if s.symmetric {
            vals[s.var][(s.j, s.i)] = x;
        }
        predicted += coeff * x;
    }
    let actual = c.oriented(&vals);
    let actual = (&actual + actual.transpose()) * 0.5;
    let err = (&actual - &predicted).amax();
    if err > 1e-8 * actual.amax().max(1.0) {
        return Err(Error::InvalidInput(format!(
            "constraint {} is not affine in its variables",
            c.name
        )));
    }
    Ok(())
}
