//! Gain synthesis.
//!
//! Right factorizations `A = F + GJ` are solved in `(P, H)` with
//! `J = H P⁻¹`; the closed loop is then certified by `P⁻¹`. Left
//! factorizations `A = F + JG` use `J = W⁻¹ P⁻¹ H` and are certified by `P`.
//! In both cases the LMI is the Schur complement form
//!
//! ```text
//!     [ P    Mᵀ ]
//!     [ M    P  ]  ≻ 0,    M = F̃P + G̃H  (right)   or   PF̃ + HG  (left)
//! ```
//!
//! with `F̃ = WF`, `G̃ = WG`.

use log::debug;

use crate::certify::{validate_certificate, Certificate};
use crate::compose::{GainFactorization, Side};
use crate::error::{Error, Result};
use crate::models::{Activation, GenericRnn};
use crate::numerics::{spd_inverse, spectral_norm, sym_eig, DenseMatrix, SymmetricMatrix};
use crate::sdp::{AffineLmiProblem, MatrixMask, Sense, SolveOptions, SolveStatus, VarId};

/// Eigenvalue floor used when inverting `P` for right-side certificates.
pub const INVERSE_FLOOR: f64 = 1e-12;

fn lipschitz_diag(activations: &[Activation]) -> DenseMatrix {
    DenseMatrix::from_diagonal(&crate::models::Vector::from_iterator(
        activations.len(),
        activations.iter().map(|a| a.lipschitz()),
    ))
}

fn schur_block(p: &DenseMatrix, m: &DenseMatrix) -> DenseMatrix {
    let n = p.nrows();
    let mut out = DenseMatrix::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n)).copy_from(p);
    out.view_mut((n, n), (n, n)).copy_from(p);
    out.view_mut((n, 0), (n, n)).copy_from(m);
    out.view_mut((0, n), (n, n)).copy_from(&m.transpose());
    out
}

/// The LMI block matrix for a given `(P, H)`.
pub fn lmi_matrix(
    fac: &GainFactorization,
    p: &DenseMatrix,
    h: &DenseMatrix,
) -> Result<DenseMatrix> {
    let n = fac.n();
    if p.shape() != (n, n) || h.shape() != fac.j_shape() {
        return Err(Error::Dimension(format!(
            "expected P {n}x{n} and H {:?}, got {:?} and {:?}",
            fac.j_shape(),
            p.shape(),
            h.shape()
        )));
    }
    let w = lipschitz_diag(&fac.activations);
    let m = match fac.side {
        Side::Right => &w * &fac.f * p + &w * &fac.g * h,
        Side::Left => p * &w * &fac.f + h * &fac.g,
    };
    Ok(schur_block(p, &m))
}

/// `λmin` of the LMI block matrix: positive iff `(P, H)` is a strict solution.
pub fn lmi_residual(fac: &GainFactorization, p: &DenseMatrix, h: &DenseMatrix) -> Result<f64> {
    let m = lmi_matrix(fac, p, h)?;
    Ok(sym_eig(&SymmetricMatrix::symmetric_part(&m))?.min())
}

/// Builds the synthesis LMI with `trace(P) = n`.
pub fn synthesis_problem(fac: &GainFactorization) -> Result<(AffineLmiProblem, VarId, VarId)> {
    let n = fac.n();
    if fac.side == Side::Left && fac.activations.iter().any(|a| a.lipschitz() <= 0.0) {
        return Err(Error::InvalidInput(
            "left-side synthesis needs every Lipschitz constant to be positive".into(),
        ));
    }
    let w = lipschitz_diag(&fac.activations);
    let f_t = &w * &fac.f;
    let side = fac.side;
    // Right: M = W F P + W G H. Left: M = P W F + H G.
    let g = match side {
        Side::Right => &w * &fac.g,
        Side::Left => fac.g.clone(),
    };
    let mut problem = AffineLmiProblem::new();
    let p = problem.add_symmetric("P", fac.p_pattern.clone());
    let h = problem.add_matrix("H", fac.h_mask.clone());
    problem.add_constraint("P", Sense::PositiveDefinite, |v| v[0].clone());
    problem.add_constraint("schur", Sense::PositiveDefinite, move |v| {
        let m = match side {
            Side::Right => &f_t * &v[0] + &g * &v[1],
            Side::Left => &v[0] * &f_t + &v[1] * &g,
        };
        schur_block(&v[0], &m)
    });
    problem.normalize_trace(p, n as f64)?;
    Ok((problem, p, h))
}

/// Solver output without any post-processing.
#[derive(Debug, Clone)]
pub struct RawSolution {
    pub status: SolveStatus,
    pub p: DenseMatrix,
    pub h: DenseMatrix,
    pub iterations: usize,
    pub slack: f64,
}

/// Solves the synthesis LMI without the structural precheck.
pub fn solve_raw(fac: &GainFactorization, options: &SolveOptions) -> Result<RawSolution> {
    let (problem, p, h) = synthesis_problem(fac)?;
    let result = problem.solve(options)?;
    Ok(RawSolution {
        status: result.status,
        p: result.value(p).clone(),
        h: result.value(h).clone(),
        iterations: result.iterations,
        slack: result.slack,
    })
}

/// Raw architecture gains `J E⁻¹` split into named blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredGains {
    pub raw: DenseMatrix,
    pub blocks: Vec<(String, DenseMatrix)>,
}

impl RecoveredGains {
    pub fn get(&self, name: &str) -> Option<&DenseMatrix> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }
}

/// `J E⁻¹`, partitioned by the factorization's slots.
pub fn recover_gains(fac: &GainFactorization, j: &DenseMatrix) -> Result<RecoveredGains> {
    if j.shape() != fac.j_shape() {
        return Err(Error::Dimension(format!(
            "J must be {:?}, got {:?}",
            fac.j_shape(),
            j.shape()
        )));
    }
    let raw = match &fac.e {
        None => j.clone(),
        Some(e) => {
            let lu = e.clone().lu();
            let inv = lu
                .try_inverse()
                .filter(|inv| inv.iter().all(|v| v.is_finite()))
                .ok_or_else(|| Error::Recovery("gain recovery matrix E is singular".into()))?;
            j * inv
        }
    };
    let blocks = fac
        .slots
        .iter()
        .map(|s| {
            let m = raw
                .view((s.rows.start, s.cols.start), (s.rows.len(), s.cols.len()))
                .into_owned();
            (s.name.clone(), m)
        })
        .collect();
    Ok(RecoveredGains { raw, blocks })
}

/// Inverse of [`recover_gains`]: `J = raw · E`.
pub fn assemble_gain(fac: &GainFactorization, raw: &DenseMatrix) -> Result<DenseMatrix> {
    if raw.shape() != fac.j_shape() {
        return Err(Error::Dimension(format!(
            "gains must be {:?}, got {:?}",
            fac.j_shape(),
            raw.shape()
        )));
    }
    Ok(match &fac.e {
        None => raw.clone(),
        Some(e) => raw * e,
    })
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub j: DenseMatrix,
    /// The LMI variable `P`.
    pub p: SymmetricMatrix,
    pub h: DenseMatrix,
    /// Certificate of the closed loop: `P⁻¹` on the right side, `P` on the left.
    pub certificate: Certificate,
    pub closed_loop: GenericRnn,
    pub gains: RecoveredGains,
    pub iterations: usize,
}

/// Refuses loops whose integral action cannot be δISS because the tracked
/// output is bounded.
pub fn structural_precheck(fac: &GainFactorization) -> Result<()> {
    let rows = fac.bounded_output_rows();
    if rows.is_empty() {
        return Ok(());
    }
    Err(Error::StructuralObstruction(format!(
        "output rows {rows:?} are bounded by saturating activations; with integral action the loop cannot be \
         incrementally input-to-state stable, since a reference outside the output range makes the integrator diverge"
    )))
}

/// Designs a gain for either side of factorization.
pub fn design(fac: &GainFactorization, options: &SolveOptions) -> Result<Synthesis> {
    match fac.side {
        Side::Right => design_right(fac, options),
        Side::Left => design_left(fac, options),
    }
}

pub fn design_right(fac: &GainFactorization, options: &SolveOptions) -> Result<Synthesis> {
    if fac.side != Side::Right {
        return Err(Error::InvalidInput(
            "design_right needs a right factorization A = F + GJ".into(),
        ));
    }
    structural_precheck(fac)?;
    let raw = solve_raw(fac, options)?;
    if raw.status != SolveStatus::Feasible {
        return Err(not_synthesized(&raw));
    }
    let p = SymmetricMatrix::from_dense(&raw.p)?;
    let mut q = spd_inverse(&p, INVERSE_FLOOR)?.to_dense();
    fac.p_pattern.project(&mut q);
    let mut j = &raw.h * q.clone();
    fac.j_mask.project(&mut j);
    finish(fac, options, raw, p, SymmetricMatrix::from_dense(&q)?, j)
}

pub fn design_left(fac: &GainFactorization, options: &SolveOptions) -> Result<Synthesis> {
    if fac.side != Side::Left {
        return Err(Error::InvalidInput(
            "design_left needs a left factorization A = F + JG".into(),
        ));
    }
    structural_precheck(fac)?;
    let raw = solve_raw(fac, options)?;
    if raw.status != SolveStatus::Feasible {
        return Err(not_synthesized(&raw));
    }
    let p = SymmetricMatrix::from_dense(&raw.p)?;
    let mut q = spd_inverse(&p, INVERSE_FLOOR)?.to_dense();
    fac.p_pattern.project(&mut q);
    let w_inv = DenseMatrix::from_diagonal(&crate::models::Vector::from_iterator(
        fac.n(),
        fac.activations.iter().map(|a| 1.0 / a.lipschitz()),
    ));
    let mut j = w_inv * q * &raw.h;
    fac.j_mask.project(&mut j);
    let cert = p.clone();
    finish(fac, options, raw, p, cert, j)
}

fn not_synthesized(raw: &RawSolution) -> Error {
    Error::NotSynthesized(format!(
        "no gain found within {} iterations (best slack {:.3e}); this does not prove that none exists",
        raw.iterations, raw.slack
    ))
}

fn finish(
    fac: &GainFactorization,
    options: &SolveOptions,
    raw: RawSolution,
    p: SymmetricMatrix,
    cert_p: SymmetricMatrix,
    j: DenseMatrix,
) -> Result<Synthesis> {
    let closed_loop = fac.closed_loop(&j)?;
    let report = validate_certificate(&closed_loop, &cert_p)?;
    if !report.passed {
        return Err(Error::NotSynthesized(format!(
            "solver point did not validate on the closed loop (gap {:.3e}, λmin(P) {:.3e}, {} pattern violations)",
            report.lyapunov_gap, report.lambda_min_p, report.pattern_violations
        )));
    }
    let gains = recover_gains(fac, &j)?;
    debug!(
        "synthesis done in {} iterations, closed-loop gap {:.4e}",
        raw.iterations, report.lyapunov_gap
    );
    Ok(Synthesis {
        j,
        p,
        h: raw.h,
        certificate: Certificate {
            p: cert_p,
            margin: options.margin,
            lyapunov_gap: report.lyapunov_gap,
        },
        closed_loop,
        gains,
        iterations: raw.iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverDesign {
    pub l: DenseMatrix,
    /// `λmax(W)·‖A − LC‖`, below one.
    pub contraction: f64,
}

/// Output-injection gain `L` for `x̂⁺ = f(Ax̂ + Bu + L(y − ŷ))`.
///
/// Minimizes `‖A − LC‖` through `[[cI, (A−LC)ᵀ],[A−LC, cI]] ⪰ tI` with
/// `c = 1/λmax(W)`, maximizing `t`.
pub fn design_observer(
    a: &DenseMatrix,
    c: &DenseMatrix,
    w: &DenseMatrix,
    options: &SolveOptions,
) -> Result<ObserverDesign> {
    let n = a.nrows();
    if !a.is_square() || c.ncols() != n || w.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "observer needs A n×n, C l×n and W n×n; got {:?}, {:?}, {:?}",
            a.shape(),
            c.shape(),
            w.shape()
        )));
    }
    let lambda_w = (0..n).map(|i| w[(i, i)].abs()).fold(0.0, f64::max);
    if lambda_w == 0.0 {
        return Ok(ObserverDesign {
            l: DenseMatrix::zeros(n, c.nrows()),
            contraction: 0.0,
        });
    }
    let scale = 1.0 / lambda_w;
    let mut problem = AffineLmiProblem::new();
    problem.add_matrix("L", MatrixMask::full(n, c.nrows()));
    let (a0, c0) = (a.clone(), c.clone());
    problem.add_constraint("norm", Sense::PositiveDefinite, move |v| {
        let m = &a0 - &v[0] * &c0;
        schur_block(&(DenseMatrix::identity(n, n) * scale), &m)
    });
    let opts = SolveOptions {
        margin: 0.0,
        rel_gap: options.rel_gap.min(1e-3),
        ..*options
    };
    let result = problem.solve(&opts)?;
    let l = result.assignment[0].clone();
    let contraction = lambda_w * spectral_norm(&(a - &l * c))?;
    if contraction >= 1.0 {
        return Err(Error::NotSynthesized(format!(
            "best observer gain found has contraction factor {contraction:.4} ≥ 1 after {} iterations",
            result.iterations
        )));
    }
    Ok(ObserverDesign { l, contraction })
}
