//! Interconnections of generic models and the gain factorizations used for
//! synthesis.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::models::{Activation, GenericRnn};
use crate::numerics::{block_diag, hstack, vstack, DenseMatrix};
use crate::sdp::{MatrixMask, SparsityPattern};

/// Series connection `u_{i+1} = y_i`, folded pairwise from the left.
pub fn series(systems: &[GenericRnn]) -> Result<GenericRnn> {
    let (first, rest) = systems
        .split_first()
        .ok_or_else(|| Error::InvalidInput("series needs at least one system".into()))?;
    let mut acc = first.clone();
    for (k, next) in rest.iter().enumerate() {
        if next.m() != acc.l() {
            return Err(Error::Chaining {
                upstream: k,
                downstream: k + 1,
                detail: format!(
                    "system {} has {} inputs but system {k} has {} outputs",
                    k + 1,
                    next.m(),
                    acc.l()
                ),
            });
        }
        acc = series_pair(&acc, next)?;
    }
    Ok(acc)
}

fn series_pair(s1: &GenericRnn, s2: &GenericRnn) -> Result<GenericRnn> {
    let a = vstack(&[
        &hstack(&[&s1.a, &DenseMatrix::zeros(s1.n(), s2.n())]),
        &hstack(&[&(&s2.b * &s1.c), &s2.a]),
    ]);
    let b = vstack(&[&s1.b, &(&s2.b * &s1.d)]);
    let c = hstack(&[&(&s2.d * &s1.c), &s2.c]);
    let d = &s2.d * &s1.d;
    let activations = [s1.activations.clone(), s2.activations.clone()].concat();
    GenericRnn::new(a, b, c, d, activations)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FeedbackOptions {
    /// Accept a proper plant when the controller is strictly proper.
    pub allow_proper_plant: bool,
}

/// Negative unit feedback `u_c = r − y_s`, `u_s = y_c`, state `[x_c; x_s]`.
///
/// The plant must be strictly proper.
pub fn feedback(controller: &GenericRnn, plant: &GenericRnn) -> Result<GenericRnn> {
    feedback_with(controller, plant, FeedbackOptions::default())
}

pub fn feedback_with(
    controller: &GenericRnn,
    plant: &GenericRnn,
    opts: FeedbackOptions,
) -> Result<GenericRnn> {
    let (c, s) = (controller, plant);
    if s.m() != c.l() || c.m() != s.l() {
        return Err(Error::Dimension(format!(
            "feedback needs plant inputs = controller outputs and controller inputs = plant outputs; got m_s={}, l_c={}, m_c={}, l_s={}",
            s.m(),
            c.l(),
            c.m(),
            s.l()
        )));
    }
    let activations = [c.activations.clone(), s.activations.clone()].concat();
    if s.is_strictly_proper() {
        let a = vstack(&[
            &hstack(&[&c.a, &(-(&c.b * &s.c))]),
            &hstack(&[&(&s.b * &c.c), &(&s.a - &s.b * &c.d * &s.c)]),
        ]);
        let b = vstack(&[&c.b, &(&s.b * &c.d)]);
        let cc = hstack(&[&DenseMatrix::zeros(s.l(), c.n()), &s.c]);
        let d = DenseMatrix::zeros(s.l(), c.m());
        return GenericRnn::new(a, b, cc, d, activations);
    }
    if !opts.allow_proper_plant {
        return Err(Error::AlgebraicLoop(
            "plant has direct feedthrough; feedback needs a strictly proper plant".into(),
        ));
    }
    if !c.is_strictly_proper() {
        return Err(Error::AlgebraicLoop(
            "both plant and controller have direct feedthrough".into(),
        ));
    }
    // u_c = r − C_s x_s − D_s C_c x_c
    let a = vstack(&[
        &hstack(&[&(&c.a - &c.b * &s.d * &c.c), &(-(&c.b * &s.c))]),
        &hstack(&[&(&s.b * &c.c), &s.a]),
    ]);
    let b = vstack(&[&c.b, &DenseMatrix::zeros(s.n(), c.m())]);
    let cc = hstack(&[&(&s.d * &c.c), &s.c]);
    let d = DenseMatrix::zeros(s.l(), c.m());
    GenericRnn::new(a, b, cc, d, activations)
}

/// Closed loop with an explicit integrator `η(k+1) = η(k) + e(k)`:
///
/// ```text
///     χ(k+1) = f_χ(A_χ χ + A_η η + B_χ r)
///     η(k+1) = −C_χ χ + η + r
///     y(k)   = C_χ χ
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct SisIntSystem {
    pub a_chi: DenseMatrix,
    pub a_eta: DenseMatrix,
    pub b_chi: DenseMatrix,
    pub c_chi: DenseMatrix,
    pub activations: Vec<Activation>,
}

/// Placement of the integrator `v = M(η + e)`.
#[derive(Debug, Clone)]
pub enum IntegratorVariant {
    /// `u_s = K x_s + v`.
    StateFeedback { k: DenseMatrix },
    /// Integrator in series with the controller: `u_c = v`, `u_s = y_c`.
    Series { controller: GenericRnn },
    /// Integrator in parallel: `u_c = e`, `u_s = v + y_c`.
    Parallel { controller: GenericRnn },
}

pub fn integrator_scheme(
    variant: &IntegratorVariant,
    plant: &GenericRnn,
    m: &DenseMatrix,
) -> Result<SisIntSystem> {
    if !plant.is_strictly_proper() {
        return Err(Error::InvalidInput(
            "integral action needs a strictly proper plant".into(),
        ));
    }
    let (a_s, b_s, c_s) = (&plant.a, &plant.b, &plant.c);
    let (n_s, m_s, l_s) = (plant.n(), plant.m(), plant.l());
    if m.shape() != (m_s, l_s)
        && !(matches!(variant, IntegratorVariant::Series { .. }) && m.shape() == (l_s, l_s))
    {
        return Err(Error::InvalidInput(format!(
            "integrator gain M has shape {:?}",
            m.shape()
        )));
    }
    match variant {
        IntegratorVariant::StateFeedback { k } => {
            if k.shape() != (m_s, n_s) {
                return Err(Error::InvalidInput(format!(
                    "K must be {m_s}x{n_s}, got {:?}",
                    k.shape()
                )));
            }
            let a_eta = b_s * m;
            Ok(SisIntSystem {
                a_chi: a_s + b_s * k - b_s * m * c_s,
                b_chi: a_eta.clone(),
                a_eta,
                c_chi: c_s.clone(),
                activations: plant.activations.clone(),
            })
        }
        IntegratorVariant::Series { controller: c } => {
            if m.shape() != (l_s, l_s) || c.m() != l_s || c.l() != m_s {
                return Err(Error::InvalidInput(
                    "series integrator needs M l_s x l_s, controller inputs l_s and outputs m_s"
                        .into(),
                ));
            }
            let a_chi = vstack(&[
                &hstack(&[&c.a, &(-(&c.b * m * c_s))]),
                &hstack(&[&(b_s * &c.c), &(a_s - b_s * &c.d * m * c_s)]),
            ]);
            let a_eta = vstack(&[&(&c.b * m), &(b_s * &c.d * m)]);
            Ok(SisIntSystem {
                a_chi,
                b_chi: a_eta.clone(),
                a_eta,
                c_chi: hstack(&[&DenseMatrix::zeros(l_s, c.n()), c_s]),
                activations: [c.activations.clone(), plant.activations.clone()].concat(),
            })
        }
        IntegratorVariant::Parallel { controller: c } => {
            if c.m() != l_s || c.l() != m_s {
                return Err(Error::InvalidInput(
                    "parallel integrator needs controller inputs l_s and outputs m_s".into(),
                ));
            }
            let a_chi = vstack(&[
                &hstack(&[&c.a, &(-(&c.b * c_s))]),
                &hstack(&[&(b_s * &c.c), &(a_s - b_s * m * c_s - b_s * &c.d * c_s)]),
            ]);
            let a_eta = vstack(&[&DenseMatrix::zeros(c.n(), l_s), &(b_s * m)]);
            let b_chi = vstack(&[&c.b, &(b_s * m + b_s * &c.d)]);
            Ok(SisIntSystem {
                a_chi,
                a_eta,
                b_chi,
                c_chi: hstack(&[&DenseMatrix::zeros(l_s, c.n()), c_s]),
                activations: [c.activations.clone(), plant.activations.clone()].concat(),
            })
        }
    }
}

/// State `[χ; η]`, input `r`, output `y_s`; integrator states are linear.
pub fn lift_sisint(s: &SisIntSystem) -> Result<GenericRnn> {
    let l = s.c_chi.nrows();
    let n = s.a_chi.nrows();
    let a = vstack(&[
        &hstack(&[&s.a_chi, &s.a_eta]),
        &hstack(&[&(-&s.c_chi), &DenseMatrix::identity(l, l)]),
    ]);
    let b = vstack(&[&s.b_chi, &DenseMatrix::identity(l, l)]);
    let c = hstack(&[&s.c_chi, &DenseMatrix::zeros(l, l)]);
    let mut activations = s.activations.clone();
    activations.extend(std::iter::repeat_n(Activation::identity(), l));
    if activations.len() != n + l {
        return Err(Error::InvalidInput(
            "integrator system has the wrong number of activations".into(),
        ));
    }
    GenericRnn::new(a, b, c, DenseMatrix::zeros(l, l), activations)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutputBound {
    /// These output rows are bounded for every trajectory.
    Bounded(Vec<usize>),
    PossiblyUnbounded,
}

/// Rows of `C` that only read states with bounded activations.
pub fn bounded_rows(c: &DenseMatrix, activations: &[Activation]) -> Vec<usize> {
    (0..c.nrows())
        .filter(|&i| (0..c.ncols()).all(|j| c[(i, j)] == 0.0 || activations[j].bounded()))
        .collect()
}

/// A bounded tracked output rules out δISS of the loop with integral action:
/// for a reference beyond the bound the integrator state grows without limit.
pub fn bounded_output_precheck(s: &SisIntSystem) -> OutputBound {
    let rows = bounded_rows(&s.c_chi, &s.activations);
    if rows.is_empty() {
        OutputBound::PossiblyUnbounded
    } else {
        OutputBound::Bounded(rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `A = F + G J`
    Right,
    /// `A = F + J G`
    Left,
}

/// A named block of the raw gains `J E⁻¹` (or `J` when there is no `E`).
#[derive(Debug, Clone, PartialEq)]
pub struct GainSlot {
    pub name: String,
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

/// Closed-loop data with the state matrix split into known and tunable parts.
#[derive(Debug, Clone, PartialEq)]
pub struct GainFactorization {
    pub side: Side,
    pub f: DenseMatrix,
    pub g: DenseMatrix,
    /// Free entries of the gain `J`.
    pub j_mask: MatrixMask,
    /// Free entries of the LMI variable `H`.
    pub h_mask: MatrixMask,
    pub p_pattern: SparsityPattern,
    /// Recovery matrix: raw gains are `J E⁻¹`.
    pub e: Option<DenseMatrix>,
    pub slots: Vec<GainSlot>,
    pub activations: Vec<Activation>,
    /// `B = b_base + G J b_gain` (right) or `b_base + J b_gain` (left).
    pub b_base: DenseMatrix,
    pub b_gain: Option<DenseMatrix>,
    pub c: DenseMatrix,
    pub d: DenseMatrix,
    /// The loop embeds integral action on its output.
    pub integral_action: bool,
}

impl GainFactorization {
    pub fn n(&self) -> usize {
        self.f.nrows()
    }

    pub fn j_shape(&self) -> (usize, usize) {
        (self.j_mask.rows(), self.j_mask.cols())
    }

    pub fn closed_loop_a(&self, j: &DenseMatrix) -> DenseMatrix {
        match self.side {
            Side::Right => &self.f + &self.g * j,
            Side::Left => &self.f + j * &self.g,
        }
    }

    pub fn closed_loop(&self, j: &DenseMatrix) -> Result<GenericRnn> {
        if j.shape() != self.j_shape() {
            return Err(Error::Dimension(format!(
                "J must be {:?}, got {:?}",
                self.j_shape(),
                j.shape()
            )));
        }
        let mut b = self.b_base.clone();
        if let Some(bg) = &self.b_gain {
            b += match self.side {
                Side::Right => &self.g * j * bg,
                Side::Left => j * bg,
            };
        }
        GenericRnn::new(
            self.closed_loop_a(j),
            b,
            self.c.clone(),
            self.d.clone(),
            self.activations.clone(),
        )
    }

    /// Output rows that are structurally bounded while integral action is present.
    pub fn bounded_output_rows(&self) -> Vec<usize> {
        if self.integral_action {
            bounded_rows(&self.c, &self.activations)
        } else {
            Vec::new()
        }
    }
}

/// The supported closed-loop architectures.
#[derive(Debug, Clone)]
pub enum Architecture {
    /// `u_s = K x_s + u_0`; tunable `K`.
    StateFeedback { plant: GenericRnn },
    /// ESN controller `x_c⁺ = ζ_c(W_x x_c + W_e e + W_y y_c)`, `y_c = W_out1 x_c`,
    /// driven by `e = r − y_s`; tunable `W_out1`.
    EsnOutputFeedback {
        plant: GenericRnn,
        w_x: DenseMatrix,
        w_e: DenseMatrix,
        w_y: DenseMatrix,
        activations: Vec<Activation>,
    },
    /// Shallow NNARX controller with fixed `W_0`, zero biases, driven by
    /// `e = r − y_s`; tunable `W_u` and `W_φ`. State `[x_s; x_c]`.
    NnarxOutputFeedback {
        plant: GenericRnn,
        w_0: DenseMatrix,
        lags: usize,
        activations: Vec<Activation>,
    },
    /// `u_s = K x_s + M(η + e)`; tunable `[K M]`. State `[x_s; η]`.
    StateFeedbackIntegrator { plant: GenericRnn },
    /// ESN controller fed by `[v; x_s]` with `v = η + e`, output
    /// `y_c = W_out1 x_c + W_out2 [v; x_s]`; tunable readout. State `[x_c; η; x_s]`.
    EsnIntegrator {
        plant: GenericRnn,
        w_x: DenseMatrix,
        w_uv: DenseMatrix,
        w_ux: DenseMatrix,
        w_y: DenseMatrix,
        activations: Vec<Activation>,
    },
}

impl Architecture {
    pub fn name(&self) -> &'static str {
        match self {
            Architecture::StateFeedback { .. } => "state-feedback",
            Architecture::EsnOutputFeedback { .. } => "esn-output-feedback",
            Architecture::NnarxOutputFeedback { .. } => "nnarx-output-feedback",
            Architecture::StateFeedbackIntegrator { .. } => "state-feedback-integrator",
            Architecture::EsnIntegrator { .. } => "esn-integrator",
        }
    }

    pub fn plant(&self) -> &GenericRnn {
        match self {
            Architecture::StateFeedback { plant }
            | Architecture::EsnOutputFeedback { plant, .. }
            | Architecture::NnarxOutputFeedback { plant, .. }
            | Architecture::StateFeedbackIntegrator { plant }
            | Architecture::EsnIntegrator { plant, .. } => plant,
        }
    }
}

fn expect_shape(name: &str, m: &DenseMatrix, shape: (usize, usize)) -> Result<()> {
    if m.shape() != shape {
        return Err(Error::InvalidInput(format!(
            "{name} must be {}x{}, got {}x{}",
            shape.0,
            shape.1,
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Splits the closed loop of `arch` into `F`, `G` and the structure of `J`.
pub fn factorize(arch: &Architecture) -> Result<GainFactorization> {
    let plant = arch.plant();
    let diagnostics = plant.validate();
    if !diagnostics.is_empty() {
        return Err(Error::InvalidInput(diagnostics.join("; ")));
    }
    if !plant.is_strictly_proper() {
        return Err(Error::AlgebraicLoop(format!(
            "{} needs a strictly proper plant",
            arch.name()
        )));
    }
    let (a_s, b_s, c_s) = (&plant.a, &plant.b, &plant.c);
    let (n_s, m_s, l_s) = (plant.n(), plant.m(), plant.l());

    match arch {
        Architecture::StateFeedback { .. } => Ok(GainFactorization {
            side: Side::Right,
            f: a_s.clone(),
            g: b_s.clone(),
            j_mask: MatrixMask::full(m_s, n_s),
            h_mask: MatrixMask::full(m_s, n_s),
            p_pattern: SparsityPattern::lyapunov_structure(&plant.nonlinear_mask()),
            e: None,
            slots: vec![GainSlot {
                name: "K".into(),
                rows: 0..m_s,
                cols: 0..n_s,
            }],
            activations: plant.activations.clone(),
            b_base: b_s.clone(),
            b_gain: None,
            c: c_s.clone(),
            d: DenseMatrix::zeros(l_s, m_s),
            integral_action: false,
        }),

        Architecture::EsnOutputFeedback {
            w_x,
            w_e,
            w_y,
            activations,
            ..
        } => {
            let n_c = w_x.nrows();
            expect_shape("W_x", w_x, (n_c, n_c))?;
            expect_shape("W_e", w_e, (n_c, l_s))?;
            expect_shape("W_y", w_y, (n_c, m_s))?;
            if activations.len() != n_c {
                return Err(Error::InvalidInput(
                    "one controller activation per reservoir unit".into(),
                ));
            }
            let f = vstack(&[
                &hstack(&[w_x, &(-(w_e * c_s))]),
                &hstack(&[&DenseMatrix::zeros(n_s, n_c), a_s]),
            ]);
            let g = vstack(&[w_y, b_s]);
            let mask = MatrixMask::full(m_s, n_c + n_s).with_zero_cols(n_c..n_c + n_s);
            let acts = [activations.clone(), plant.activations.clone()].concat();
            let p_pattern = SparsityPattern::block_diag(&[
                &SparsityPattern::lyapunov_structure(
                    &activations
                        .iter()
                        .map(|a| !a.is_identity())
                        .collect::<Vec<_>>(),
                ),
                &SparsityPattern::lyapunov_structure(&plant.nonlinear_mask()),
            ]);
            Ok(GainFactorization {
                side: Side::Right,
                f,
                g,
                j_mask: mask.clone(),
                h_mask: mask,
                p_pattern,
                e: None,
                slots: vec![GainSlot {
                    name: "W_out1".into(),
                    rows: 0..m_s,
                    cols: 0..n_c,
                }],
                activations: acts,
                b_base: vstack(&[w_e, &DenseMatrix::zeros(n_s, l_s)]),
                b_gain: None,
                c: hstack(&[&DenseMatrix::zeros(l_s, n_c), c_s]),
                d: DenseMatrix::zeros(l_s, l_s),
                integral_action: false,
            })
        }

        Architecture::NnarxOutputFeedback {
            w_0,
            lags,
            activations,
            ..
        } => {
            // Controller: input e (m_c = l_s), output u_s (l_c = m_s).
            let (m_c, l_c, nu_c) = (l_s, m_s, w_0.ncols());
            expect_shape("W_0", w_0, (l_c, nu_c))?;
            if *lags == 0 || activations.len() != nu_c {
                return Err(Error::InvalidInput(
                    "NNARX controller needs lags >= 1 and one activation per hidden unit".into(),
                ));
            }
            let template = crate::models::ShallowNnarx {
                w_0: w_0.clone(),
                b_0: DenseMatrix::zeros(l_c, 1).column(0).into_owned(),
                w_phi: DenseMatrix::zeros(nu_c, (l_c + m_c) * lags),
                w_u: DenseMatrix::zeros(nu_c, m_c),
                b: DenseMatrix::zeros(nu_c, 1).column(0).into_owned(),
                lags: *lags,
                activations: activations.clone(),
            };
            let ctrl = template.to_generic()?;
            let p = template.register_len();
            let n_c = ctrl.n();
            let a_c0 = &ctrl.a;
            let b_c0 = ctrl.b.columns(0, m_c).into_owned();
            let c_c = &ctrl.c;
            let f = vstack(&[
                &hstack(&[a_s, &(b_s * c_c)]),
                &hstack(&[&(-(&b_c0 * c_s)), a_c0]),
            ]);
            let n_j2 = m_c + p + l_c;
            let g = vstack(&[
                &hstack(&[&(-c_s), &DenseMatrix::zeros(l_s, n_c)]),
                &hstack(&[
                    &DenseMatrix::zeros(p + l_c, n_s),
                    &block_diag(&[&DenseMatrix::identity(p, p), w_0]),
                ]),
            ]);
            let n = n_s + n_c;
            let n_j1 = n_s + p;
            let mask = MatrixMask::full(n, n_j2).with_zero_rows(0..n_j1);
            let acts = [plant.activations.clone(), ctrl.activations.clone()].concat();
            let nonlinear: Vec<bool> = acts.iter().map(|a| !a.is_identity()).collect();
            let p_pattern = SparsityPattern::block_diag(&[
                &SparsityPattern::lyapunov_structure(&nonlinear[..n_j1]),
                &SparsityPattern::lyapunov_structure(&nonlinear[n_j1..]),
            ]);
            let mut b_gain = DenseMatrix::zeros(n_j2, l_s);
            for i in 0..l_s {
                b_gain[(i, i)] = 1.0;
            }
            Ok(GainFactorization {
                side: Side::Left,
                f,
                g,
                j_mask: mask.clone(),
                h_mask: mask,
                p_pattern,
                e: None,
                slots: vec![
                    GainSlot {
                        name: "W_u".into(),
                        rows: n_j1..n,
                        cols: 0..m_c,
                    },
                    GainSlot {
                        name: "W_phi".into(),
                        rows: n_j1..n,
                        cols: m_c..n_j2,
                    },
                ],
                activations: acts,
                b_base: vstack(&[&DenseMatrix::zeros(n_s, l_s), &b_c0]),
                b_gain: Some(b_gain),
                c: hstack(&[c_s, &DenseMatrix::zeros(l_s, n_c)]),
                d: DenseMatrix::zeros(l_s, l_s),
                integral_action: false,
            })
        }

        Architecture::StateFeedbackIntegrator { .. } => {
            let i_l = DenseMatrix::identity(l_s, l_s);
            let f = vstack(&[
                &hstack(&[a_s, &DenseMatrix::zeros(n_s, l_s)]),
                &hstack(&[&(-c_s), &i_l]),
            ]);
            let g = vstack(&[b_s, &DenseMatrix::zeros(l_s, m_s)]);
            let e = vstack(&[
                &hstack(&[
                    &DenseMatrix::identity(n_s, n_s),
                    &DenseMatrix::zeros(n_s, l_s),
                ]),
                &hstack(&[&(-c_s), &i_l]),
            ]);
            let acts = [plant.activations.clone(), vec![Activation::identity(); l_s]].concat();
            let nonlinear: Vec<bool> = acts.iter().map(|a| !a.is_identity()).collect();
            let n = n_s + l_s;
            Ok(GainFactorization {
                side: Side::Right,
                f,
                g,
                j_mask: MatrixMask::full(m_s, n),
                h_mask: MatrixMask::full(m_s, n),
                p_pattern: SparsityPattern::lyapunov_structure(&nonlinear),
                e: Some(e),
                slots: vec![
                    GainSlot {
                        name: "K".into(),
                        rows: 0..m_s,
                        cols: 0..n_s,
                    },
                    GainSlot {
                        name: "M".into(),
                        rows: 0..m_s,
                        cols: n_s..n,
                    },
                ],
                activations: acts,
                b_base: vstack(&[&DenseMatrix::zeros(n_s, l_s), &i_l]),
                b_gain: Some(vstack(&[&DenseMatrix::zeros(n_s, l_s), &i_l])),
                c: hstack(&[c_s, &DenseMatrix::zeros(l_s, l_s)]),
                d: DenseMatrix::zeros(l_s, l_s),
                integral_action: true,
            })
        }

        Architecture::EsnIntegrator {
            w_x,
            w_uv,
            w_ux,
            w_y,
            activations,
            ..
        } => {
            let n_c = w_x.nrows();
            expect_shape("W_x", w_x, (n_c, n_c))?;
            expect_shape("W_uv", w_uv, (n_c, l_s))?;
            expect_shape("W_ux", w_ux, (n_c, n_s))?;
            expect_shape("W_y", w_y, (n_c, m_s))?;
            if activations.len() != n_c {
                return Err(Error::InvalidInput(
                    "one controller activation per reservoir unit".into(),
                ));
            }
            let i_l = DenseMatrix::identity(l_s, l_s);
            // v = η + r − C_s x_s enters the reservoir through W_uv, hence the
            // −W_uv C_s term in the top-right block.
            let f = vstack(&[
                &hstack(&[w_x, w_uv, &(w_ux - w_uv * c_s)]),
                &hstack(&[&DenseMatrix::zeros(l_s, n_c), &i_l, &(-c_s)]),
                &hstack(&[
                    &DenseMatrix::zeros(n_s, n_c),
                    &DenseMatrix::zeros(n_s, l_s),
                    a_s,
                ]),
            ]);
            let g = vstack(&[w_y, &DenseMatrix::zeros(l_s, m_s), b_s]);
            let n = n_c + l_s + n_s;
            let e = vstack(&[
                &hstack(&[
                    &DenseMatrix::identity(n_c, n_c),
                    &DenseMatrix::zeros(n_c, l_s + n_s),
                ]),
                &hstack(&[&DenseMatrix::zeros(l_s, n_c), &i_l, &(-c_s)]),
                &hstack(&[
                    &DenseMatrix::zeros(n_s, n_c + l_s),
                    &DenseMatrix::identity(n_s, n_s),
                ]),
            ]);
            let acts = [
                activations.clone(),
                vec![Activation::identity(); l_s],
                plant.activations.clone(),
            ]
            .concat();
            let nonlinear: Vec<bool> = acts.iter().map(|a| !a.is_identity()).collect();
            Ok(GainFactorization {
                side: Side::Right,
                f,
                g,
                j_mask: MatrixMask::full(m_s, n),
                h_mask: MatrixMask::full(m_s, n),
                p_pattern: SparsityPattern::lyapunov_structure(&nonlinear),
                e: Some(e),
                slots: vec![
                    GainSlot {
                        name: "W_out1".into(),
                        rows: 0..m_s,
                        cols: 0..n_c,
                    },
                    GainSlot {
                        name: "W_out2v".into(),
                        rows: 0..m_s,
                        cols: n_c..n_c + l_s,
                    },
                    GainSlot {
                        name: "W_out2x".into(),
                        rows: 0..m_s,
                        cols: n_c + l_s..n,
                    },
                ],
                activations: acts,
                b_base: vstack(&[w_uv, &i_l, &DenseMatrix::zeros(n_s, l_s)]),
                b_gain: Some(vstack(&[
                    &DenseMatrix::zeros(n_c, l_s),
                    &i_l,
                    &DenseMatrix::zeros(n_s, l_s),
                ])),
                c: hstack(&[&DenseMatrix::zeros(l_s, n_c + l_s), c_s]),
                d: DenseMatrix::zeros(l_s, l_s),
                integral_action: true,
            })
        }
    }
}
