//! Stability certificates.
//!
//! [`certify_theorem2`] looks for a structured `P ≻ 0` with
//! `ÃᵀPÃ − P ≺ 0`, where `Ã = W A` and `P` has no off-diagonal coupling on
//! nonlinear coordinates. The baseline checks implement the older sufficient
//! conditions for ESN, NNARX and Hu-class models so the two can be compared.

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{Esn, GenericRnn, HuRnn, ShallowNnarx, Vector};
use crate::numerics::{spectral_norm, spectral_radius, sym_eig, DenseMatrix, SymmetricMatrix};
use crate::sdp::{AffineLmiProblem, Sense, SolveOptions, SolveStatus, SparsityPattern, VarId};

/// A validated witness `P` for a particular model.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub p: SymmetricMatrix,
    /// Margin requested from the solver.
    pub margin: f64,
    /// `λmax(ÃᵀPÃ − P)`, negative.
    pub lyapunov_gap: f64,
}

/// Outcome of a closed-form baseline condition: `holds ⇔ statistic < threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub name: String,
    /// False when the condition's hypotheses do not apply to the model.
    pub applicable: bool,
    pub holds: bool,
    pub statistic: f64,
    pub threshold: f64,
}

impl ConditionReport {
    fn new(name: &str, statistic: f64, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            applicable: true,
            holds: statistic < threshold,
            statistic,
            threshold,
        }
    }
}

/// Result of re-checking a candidate `P` against a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub passed: bool,
    pub pattern_violations: usize,
    pub lambda_min_p: f64,
    pub lyapunov_gap: f64,
}

/// The structured Lyapunov problem for `Ã` with trace normalization.
pub fn lyapunov_problem(a_tilde: &DenseMatrix, nonlinear: &[bool]) -> (AffineLmiProblem, VarId) {
    let n = a_tilde.nrows();
    let mut problem = AffineLmiProblem::new();
    let p = problem.add_symmetric("P", SparsityPattern::lyapunov_structure(nonlinear));
    problem.add_constraint("P", Sense::PositiveDefinite, |v| v[0].clone());
    let a = a_tilde.clone();
    problem.add_constraint("A'PA - P", Sense::NegativeDefinite, move |v| {
        a.transpose() * &v[0] * &a - &v[0]
    });
    problem
        .normalize_trace(p, n as f64)
        .expect("P is a declared symmetric variable");
    (problem, p)
}

/// Searches for a structured Lyapunov certificate.
///
/// Failure is reported as [`Error::NotCertified`]: the condition could not
/// be established, which says nothing about whether the model is δISS.
pub fn certify_theorem2(model: &GenericRnn, options: &SolveOptions) -> Result<Certificate> {
    let diagnostics = model.validate();
    if !diagnostics.is_empty() {
        return Err(Error::InvalidInput(diagnostics.join("; ")));
    }
    let (problem, p) = lyapunov_problem(&model.a_tilde(), &model.nonlinear_mask());
    let result = problem.solve(options)?;
    if result.status != SolveStatus::Feasible {
        return Err(Error::NotCertified {
            iterations: result.iterations,
            best_margin: result.slack,
        });
    }
    let p = SymmetricMatrix::from_dense(result.value(p))?;
    let report = validate_certificate(model, &p)?;
    if !report.passed {
        return Err(Error::NotCertified {
            iterations: result.iterations,
            best_margin: result.slack,
        });
    }
    debug!("certificate found, gap {:.4e}", report.lyapunov_gap);
    Ok(Certificate {
        p,
        margin: options.margin,
        lyapunov_gap: report.lyapunov_gap,
    })
}

/// `λmax(MᵀPM − P)`.
pub fn lyapunov_gap(m: &DenseMatrix, p: &DenseMatrix) -> Result<f64> {
    let q = m.transpose() * p * m - p;
    Ok(sym_eig(&SymmetricMatrix::symmetric_part(&q))?.max())
}

/// Checks `P` against the model: zero pattern violations, `P ≻ 0` and
/// `ÃᵀPÃ − P ≺ 0`.
pub fn validate_certificate(model: &GenericRnn, p: &SymmetricMatrix) -> Result<ValidationReport> {
    let n = model.n();
    if p.n() != n {
        return Err(Error::InvalidInput(format!(
            "P is {0}x{0} but the model has {n} states",
            p.n()
        )));
    }
    let dense = p.to_dense();
    let pattern = SparsityPattern::lyapunov_structure(&model.nonlinear_mask());
    let pattern_violations = pattern.violations(&dense);
    let lambda_min_p = sym_eig(p)?.min();
    let gap = lyapunov_gap(&model.a_tilde(), &dense)?;
    Ok(ValidationReport {
        passed: pattern_violations == 0 && lambda_min_p > 0.0 && gap < 0.0,
        pattern_violations,
        lambda_min_p,
        lyapunov_gap: gap,
    })
}

/// `‖W_x + W_y W_out1‖ < 1`, valid for reservoir Lipschitz constants ≤ 1.
pub fn check_esn_norm(esn: &Esn) -> Result<ConditionReport> {
    esn.check_dims()?;
    let statistic = spectral_norm(&esn.effective_recurrence())?;
    let mut report = ConditionReport::new("ESN norm ||W_x*|| < 1", statistic, 1.0);
    if esn.activations.iter().any(|a| a.lipschitz() > 1.0) {
        report.applicable = false;
        report.holds = false;
    }
    Ok(report)
}

/// `‖W_0‖‖W_φ‖ < 1/(L_p √N)`.
pub fn check_nnarx_norm(net: &ShallowNnarx) -> Result<ConditionReport> {
    net.check_dims()?;
    let lp = net
        .activations
        .iter()
        .map(|a| a.lipschitz())
        .fold(0.0, f64::max);
    let statistic = spectral_norm(&net.w_0)? * spectral_norm(&net.w_phi)?;
    let threshold = 1.0 / (lp * (net.lags as f64).sqrt());
    Ok(ConditionReport::new(
        "NNARX norm ||W_0|| ||W_phi|| < 1/(L_p sqrt N)",
        statistic,
        threshold,
    ))
}

/// `ρ(|E| + W|O||Â|) < 1`. For a nonnegative matrix this is equivalent to
/// the existence of a diagonal Lyapunov matrix.
pub fn check_hu(hu: &HuRnn) -> Result<ConditionReport> {
    hu.check_dims()?;
    let statistic = spectral_radius(&hu.comparison_matrix())?;
    Ok(ConditionReport::new(
        "Hu comparison matrix rho(M) < 1",
        statistic,
        1.0,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeOptions {
    pub trials: usize,
    pub horizon: usize,
    pub input_magnitude: f64,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            trials: 100,
            horizon: 200,
            input_magnitude: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub trials: usize,
    /// Largest `‖x1(T) − x2(T)‖` over the trials.
    pub max_terminal_divergence: f64,
    pub mean_terminal_divergence: f64,
    /// Largest initial distance, for scale.
    pub max_initial_divergence: f64,
    /// Steps on which the certificate's `V` was evaluated.
    pub checked_steps: usize,
    /// Steps on which `V(x1⁺, x2⁺) ≥ V(x1, x2)`.
    pub v_increase_events: usize,
    /// Coordinates whose sampled slope exceeds the declared Lipschitz constant.
    pub lipschitz_excess: Vec<usize>,
}

struct TrialOutcome {
    terminal: f64,
    initial: f64,
    checked: usize,
    increases: usize,
}

/// Simulates pairs of trajectories from random distinct initial states under
/// a shared random input and reports how far apart they end up.
///
/// Each trial draws from its own stream of the seeded generator, so the
/// result does not depend on how trials are scheduled.
pub fn empirical_probe(
    model: &GenericRnn,
    certificate: Option<&Certificate>,
    opts: &ProbeOptions,
) -> Result<ProbeReport> {
    if opts.trials == 0 || opts.horizon == 0 {
        return Err(Error::InvalidInput(
            "probe needs at least one trial and one step".into(),
        ));
    }
    let diagnostics = model.validate();
    if !diagnostics.is_empty() {
        return Err(Error::InvalidInput(diagnostics.join("; ")));
    }
    let p = match certificate {
        Some(c) if c.p.n() != model.n() => {
            return Err(Error::InvalidInput(
                "certificate does not match the model dimension".into(),
            ))
        }
        Some(c) => Some(c.p.to_dense()),
        None => None,
    };
    let outcomes: Vec<TrialOutcome> = (0..opts.trials)
        .into_par_iter()
        .map(|trial| run_trial(model, p.as_ref(), opts, trial as u64))
        .collect();

    let mut report = ProbeReport {
        trials: opts.trials,
        max_terminal_divergence: 0.0,
        mean_terminal_divergence: 0.0,
        max_initial_divergence: 0.0,
        checked_steps: 0,
        v_increase_events: 0,
        lipschitz_excess: lipschitz_excess(model, opts.seed),
    };
    for o in &outcomes {
        report.max_terminal_divergence = report.max_terminal_divergence.max(o.terminal);
        report.mean_terminal_divergence += o.terminal / opts.trials as f64;
        report.max_initial_divergence = report.max_initial_divergence.max(o.initial);
        report.checked_steps += o.checked;
        report.v_increase_events += o.increases;
    }
    Ok(report)
}

fn run_trial(
    model: &GenericRnn,
    p: Option<&DenseMatrix>,
    opts: &ProbeOptions,
    trial: u64,
) -> TrialOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(trial);
    let n = model.n();
    let m = model.m();
    let mut x1 = Vector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
    let mut x2 = Vector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
    let initial = (&x1 - &x2).norm();
    let mag = opts.input_magnitude.abs();
    let mut checked = 0;
    let mut increases = 0;
    for _ in 0..opts.horizon {
        let u = Vector::from_fn(m, |_, _| {
            if mag > 0.0 {
                rng.random_range(-mag..=mag)
            } else {
                0.0
            }
        });
        let n1 = model.step(&x1, &u);
        let n2 = model.step(&x2, &u);
        if let Some(p) = p {
            let d = &x1 - &x2;
            let scale = 1.0 + x1.norm().max(x2.norm());
            if d.norm() > 1e-9 * scale {
                let dn = &n1 - &n2;
                let v = d.dot(&(p * &d));
                let vn = dn.dot(&(p * &dn));
                checked += 1;
                if vn >= v {
                    increases += 1;
                }
            }
        }
        x1 = n1;
        x2 = n2;
        if !(x1.iter().all(|v| v.is_finite()) && x2.iter().all(|v| v.is_finite())) {
            return TrialOutcome {
                terminal: f64::INFINITY,
                initial,
                checked,
                increases,
            };
        }
    }
    TrialOutcome {
        terminal: (&x1 - &x2).norm(),
        initial,
        checked,
        increases,
    }
}

/// Samples slopes of every nonlinear activation on `[−5, 5]`.
fn lipschitz_excess(model: &GenericRnn, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x11f5);
    let mut out = Vec::new();
    for (i, act) in model.activations.iter().enumerate() {
        if act.is_identity() {
            continue;
        }
        let mut worst: f64 = 0.0;
        for _ in 0..2000 {
            let a: f64 = rng.random_range(-5.0..5.0);
            let b: f64 = rng.random_range(-5.0..5.0);
            if (a - b).abs() > 1e-6 {
                worst = worst.max((act.eval(a) - act.eval(b)).abs() / (a - b).abs());
            }
        }
        if worst > act.lipschitz() * (1.0 + 1e-9) {
            out.push(i);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Activation;

    fn scalar(a: f64) -> GenericRnn {
        GenericRnn::new(
            DenseMatrix::from_element(1, 1, a),
            DenseMatrix::from_element(1, 1, 1.0),
            DenseMatrix::from_element(1, 1, 1.0),
            DenseMatrix::zeros(1, 1),
            vec![Activation::tanh()],
        )
        .unwrap()
    }

    #[test]
    fn zero_dynamics_certified() {
        let model = GenericRnn::new(
            DenseMatrix::zeros(3, 3),
            DenseMatrix::zeros(3, 1),
            DenseMatrix::zeros(1, 3),
            DenseMatrix::zeros(1, 1),
            vec![
                Activation::tanh(),
                Activation::identity(),
                Activation::identity(),
            ],
        )
        .unwrap();
        let cert = certify_theorem2(&model, &SolveOptions::default()).unwrap();
        assert!(cert.lyapunov_gap < 0.0);
        assert!(
            validate_certificate(&model, &SymmetricMatrix::identity(3))
                .unwrap()
                .passed
        );
    }

    #[test]
    fn expanding_scalar_not_certified() {
        let err = certify_theorem2(&scalar(1.5), &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NotCertified { .. }));
        assert!(err.to_string().contains("condition not established"));
    }

    #[test]
    fn contracting_scalar_certified() {
        let cert = certify_theorem2(&scalar(0.9), &SolveOptions::default()).unwrap();
        assert!((cert.lyapunov_gap - (0.81 - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn lipschitz_weight_enters_a_tilde() {
        // 1.5 · 0.25 < 1 under a sigmoid.
        let mut model = scalar(1.5);
        model.activations = vec![Activation::sigmoid()];
        assert!(certify_theorem2(&model, &SolveOptions::default()).is_ok());
    }

    #[test]
    fn validation_rejects_dimension_mismatch() {
        assert!(validate_certificate(&scalar(0.5), &SymmetricMatrix::identity(2)).is_err());
    }

    #[test]
    fn baseline_trivial_cases() {
        let esn = Esn {
            w_x: DenseMatrix::identity(2, 2) * 0.5,
            w_u: DenseMatrix::zeros(2, 1),
            w_y: DenseMatrix::zeros(2, 1),
            w_out1: DenseMatrix::zeros(1, 2),
            w_out2: DenseMatrix::zeros(1, 1),
            activations: vec![Activation::tanh(); 2],
        };
        let r = check_esn_norm(&esn).unwrap();
        assert!(r.holds && (r.statistic - 0.5).abs() < 1e-12);

        let mut wide = esn.clone();
        wide.activations = vec![Activation::tanh().with_lipschitz(2.0); 2];
        assert!(!check_esn_norm(&wide).unwrap().applicable);

        let hu = HuRnn {
            e: DenseMatrix::identity(2, 2) * 0.5,
            o: DenseMatrix::zeros(2, 2),
            a_hat: DenseMatrix::from_element(2, 2, 3.0),
            s: Vector::zeros(2),
            activations: vec![Activation::tanh(); 2],
        };
        let r = check_hu(&hu).unwrap();
        assert!(r.holds && (r.statistic - 0.5).abs() < 1e-9);

        let net = ShallowNnarx {
            w_0: DenseMatrix::from_element(1, 1, 0.99),
            b_0: Vector::zeros(1),
            w_phi: DenseMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            w_u: DenseMatrix::zeros(1, 1),
            b: Vector::zeros(1),
            lags: 1,
            activations: vec![Activation::tanh()],
        };
        let r = check_nnarx_norm(&net).unwrap();
        assert!(r.holds && (r.threshold - 1.0).abs() < 1e-15);
    }

    #[test]
    fn probe_identical_starts_do_not_diverge() {
        let model = scalar(0.5);
        let cert = certify_theorem2(&model, &SolveOptions::default()).unwrap();
        let report = empirical_probe(
            &model,
            Some(&cert),
            &ProbeOptions {
                trials: 20,
                horizon: 100,
                input_magnitude: 1.0,
                seed: 4,
            },
        )
        .unwrap();
        assert!(report.max_terminal_divergence < 1e-12);
        assert_eq!(report.v_increase_events, 0);
        assert!(report.checked_steps > 0);
    }

    #[test]
    fn probe_is_deterministic() {
        let model = scalar(0.95);
        let opts = ProbeOptions {
            trials: 16,
            horizon: 30,
            input_magnitude: 0.5,
            seed: 99,
        };
        let a = empirical_probe(&model, None, &opts).unwrap();
        let b = empirical_probe(&model, None, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn probe_flags_understated_lipschitz() {
        let mut model = scalar(0.5);
        model.activations = vec![Activation::custom(
            "steep",
            |x: f64| (3.0 * x).tanh(),
            1.0,
            true,
        )];
        let report = empirical_probe(&model, None, &ProbeOptions::default()).unwrap();
        assert_eq!(report.lipschitz_excess, vec![0]);
    }
}
