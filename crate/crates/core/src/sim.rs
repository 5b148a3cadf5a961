//! Simulation, identification and fit metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::{Esn, GenericRnn, Vector};
use crate::numerics::DenseMatrix;

/// Default number of steps each MPRS level is held.
pub const DEFAULT_HOLD: usize = 10;
/// Ridge parameter used when the regressor is rank deficient.
pub const RIDGE_FALLBACK: f64 = 1e-8;

/// `states` holds `x(0..=T)`, `outputs` and `inputs` hold `y(0..T)`, `u(0..T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub outputs: Vec<Vector>,
    pub inputs: Vec<Vector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vector>,
    pub outputs: Vec<Vector>,
    /// Seconds between samples.
    pub sampling_period: f64,
}

impl Dataset {
    pub fn new(inputs: Vec<Vector>, outputs: Vec<Vector>, sampling_period: f64) -> Result<Self> {
        if inputs.len() != outputs.len() {
            return Err(Error::InvalidInput(format!(
                "dataset has {} inputs but {} outputs",
                inputs.len(),
                outputs.len()
            )));
        }
        Ok(Self {
            inputs,
            outputs,
            sampling_period,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Per-channel affine map `v ↦ (v − offset) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineNormalization {
    pub offset: Vector,
    pub scale: Vector,
}

impl AffineNormalization {
    pub fn new(offset: Vector, scale: Vector) -> Result<Self> {
        if offset.len() != scale.len() {
            return Err(Error::Dimension(format!(
                "normalization has {} offsets but {} scales",
                offset.len(),
                scale.len()
            )));
        }
        if scale.iter().any(|s| *s == 0.0 || !s.is_finite())
            || offset.iter().any(|o| !o.is_finite())
        {
            return Err(Error::InvalidInput(
                "normalization scales must be finite and nonzero".into(),
            ));
        }
        Ok(Self { offset, scale })
    }

    /// The same offset and scale on every one of `n` channels.
    pub fn uniform(n: usize, offset: f64, scale: f64) -> Result<Self> {
        Self::new(
            Vector::from_element(n, offset),
            Vector::from_element(n, scale),
        )
    }

    pub fn identity(n: usize) -> Self {
        Self {
            offset: Vector::zeros(n),
            scale: Vector::from_element(n, 1.0),
        }
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        (v - &self.offset).component_div(&self.scale)
    }

    pub fn invert(&self, v: &Vector) -> Vector {
        v.component_mul(&self.scale) + &self.offset
    }

    fn apply_all(&self, seq: &[Vector]) -> Result<Vec<Vector>> {
        if let Some(k) = seq.iter().position(|v| v.len() != self.offset.len()) {
            return Err(Error::Dimension(format!(
                "sample {k} has {} channels, normalization has {}",
                seq[k].len(),
                self.offset.len()
            )));
        }
        Ok(seq.iter().map(|v| self.apply(v)).collect())
    }
}

impl Dataset {
    /// Applies user-supplied normalizations to inputs and outputs.
    pub fn normalized(
        &self,
        input: &AffineNormalization,
        output: &AffineNormalization,
    ) -> Result<Self> {
        Self::new(
            input.apply_all(&self.inputs)?,
            output.apply_all(&self.outputs)?,
            self.sampling_period,
        )
    }
}

fn check_input_dims(model: &GenericRnn, x0: &Vector, inputs: &[Vector]) -> Result<()> {
    if x0.len() != model.n() {
        return Err(Error::Dimension(format!(
            "x0 has {} entries, model has {} states",
            x0.len(),
            model.n()
        )));
    }
    if let Some(k) = inputs.iter().position(|u| u.len() != model.m()) {
        return Err(Error::Dimension(format!(
            "input {k} has {} entries, model has {} inputs",
            inputs[k].len(),
            model.m()
        )));
    }
    Ok(())
}

pub fn simulate(model: &GenericRnn, x0: &Vector, inputs: &[Vector]) -> Result<Trajectory> {
    check_input_dims(model, x0, inputs)?;
    let mut states = Vec::with_capacity(inputs.len() + 1);
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut x = x0.clone();
    for (k, u) in inputs.iter().enumerate() {
        outputs.push(model.output(&x, u));
        let next = model.step(&x, u);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step: k + 1 });
        }
        states.push(std::mem::replace(&mut x, next));
    }
    states.push(x);
    Ok(Trajectory {
        states,
        outputs,
        inputs: inputs.to_vec(),
    })
}

/// `‖x₁(k) − x₂(k)‖` for `k = 0..=T`.
pub fn simulate_pair(
    model: &GenericRnn,
    x01: &Vector,
    x02: &Vector,
    u1: &[Vector],
    u2: &[Vector],
) -> Result<Vec<f64>> {
    if u1.len() != u2.len() {
        return Err(Error::InvalidInput(format!(
            "input sequences differ in length: {} vs {}",
            u1.len(),
            u2.len()
        )));
    }
    let t1 = simulate(model, x01, u1)?;
    let t2 = simulate(model, x02, u2)?;
    Ok(t1
        .states
        .iter()
        .zip(&t2.states)
        .map(|(a, b)| (a - b).norm())
        .collect())
}

/// Multilevel pseudo-random signal: piecewise constant, each segment
/// uniformly drawn from `levels` equispaced values in `[low, high]`.
pub fn mprs(
    low: f64,
    high: f64,
    levels: usize,
    hold_steps: usize,
    length: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if low.partial_cmp(&high) != Some(std::cmp::Ordering::Less) || levels < 2 || hold_steps == 0 {
        return Err(Error::InvalidInput(format!(
            "mprs needs low < high, levels >= 2 and hold >= 1; got [{low}, {high}], {levels}, {hold_steps}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = (high - low) / (levels - 1) as f64;
    let mut out = Vec::with_capacity(length);
    while out.len() < length {
        let i = rng.random_range(0..levels);
        let v = if i == levels - 1 {
            high
        } else {
            low + step * i as f64
        };
        let n = hold_steps.min(length - out.len());
        out.extend(std::iter::repeat_n(v, n));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutFit {
    pub w_out1: DenseMatrix,
    /// Present when the direct term was trained.
    pub w_out2: Option<DenseMatrix>,
    /// Regression rows after the washout.
    pub rows: usize,
    /// Ridge parameter actually used (zero for plain least squares).
    pub ridge: f64,
}

/// Least-squares readout of an ESN reservoir, teacher forced on `data`.
///
/// The reservoir starts at `χ(0) = 0` and `u(−1) = 0`; measured outputs are
/// fed back through `W_y`.
pub fn train_esn_readout(
    reservoir: &Esn,
    data: &Dataset,
    washout: usize,
    train_direct: bool,
) -> Result<ReadoutFit> {
    let (nu, m, l) = (reservoir.nu(), reservoir.w_u.ncols(), reservoir.w_y.ncols());
    if reservoir.w_x.shape() != (nu, nu)
        || reservoir.w_u.nrows() != nu
        || reservoir.activations.len() != nu
    {
        return Err(Error::InvalidInput(
            "inconsistent reservoir dimensions".into(),
        ));
    }
    if washout >= data.len() {
        return Err(Error::InvalidInput(format!(
            "washout {washout} leaves no data out of {}",
            data.len()
        )));
    }
    if data.inputs.iter().any(|u| u.len() != m) || data.outputs.iter().any(|y| y.len() != l) {
        return Err(Error::Dimension(format!(
            "dataset samples must have {m} inputs and {l} outputs"
        )));
    }
    let p = if train_direct { nu + m } else { nu };
    let rows = data.len() - washout;
    let mut x = DenseMatrix::zeros(rows, p);
    let mut t = DenseMatrix::zeros(rows, l);
    let mut chi = Vector::zeros(nu);
    let mut u_prev = Vector::zeros(m);
    for k in 0..data.len() {
        if k >= washout {
            let r = k - washout;
            x.view_mut((r, 0), (1, nu)).copy_from(&chi.transpose());
            if train_direct {
                x.view_mut((r, nu), (1, m)).copy_from(&u_prev.transpose());
            }
            t.row_mut(r).copy_from(&data.outputs[k].transpose());
        }
        let v = &reservoir.w_x * &chi
            + &reservoir.w_u * &data.inputs[k]
            + &reservoir.w_y * &data.outputs[k];
        chi = Vector::from_iterator(
            nu,
            v.iter()
                .zip(&reservoir.activations)
                .map(|(v, a)| a.eval(*v)),
        );
        u_prev = data.inputs[k].clone();
    }
    let (w, ridge) = least_squares(&x, &t)?;
    let wt = w.transpose();
    Ok(ReadoutFit {
        w_out1: wt.columns(0, nu).into_owned(),
        w_out2: train_direct.then(|| wt.columns(nu, m).into_owned()),
        rows,
        ridge,
    })
}

/// Minimizes `‖X W − T‖` by QR, falling back to ridge regression when `X`
/// is rank deficient.
pub fn least_squares(x: &DenseMatrix, t: &DenseMatrix) -> Result<(DenseMatrix, f64)> {
    let p = x.ncols();
    if x.nrows() >= p && p > 0 {
        let qr = x.clone().qr();
        let r = qr.r();
        let dmax = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        let rank_ok = dmax > 0.0 && (0..p).all(|i| r[(i, i)].abs() > 1e-10 * dmax);
        if rank_ok {
            let qt = qr.q().transpose() * t;
            if let Some(w) = r.solve_upper_triangular(&qt) {
                return Ok((w, 0.0));
            }
        }
    }
    let gram = x.transpose() * x + DenseMatrix::identity(p, p) * RIDGE_FALLBACK;
    let w = gram
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("regressor is numerically degenerate".into()))?
        .solve(&(x.transpose() * t));
    Ok((w, RIDGE_FALLBACK))
}

/// `100·(1 − ‖y − ŷ‖ / ‖y − ȳ‖)` over the stacked sequence, `ȳ` the per-channel mean.
pub fn fit_percent(y_true: &[Vector], y_model: &[Vector]) -> Result<f64> {
    if y_true.len() != y_model.len() || y_true.is_empty() {
        return Err(Error::InvalidInput(format!(
            "fit needs equal nonempty sequences, got {} and {}",
            y_true.len(),
            y_model.len()
        )));
    }
    let l = y_true[0].len();
    if y_true.iter().chain(y_model).any(|y| y.len() != l) {
        return Err(Error::Dimension("output samples differ in length".into()));
    }
    let mean = y_true.iter().fold(Vector::zeros(l), |acc, y| acc + y) / y_true.len() as f64;
    let num: f64 = y_true
        .iter()
        .zip(y_model)
        .map(|(a, b)| (a - b).norm_squared())
        .sum();
    let den: f64 = y_true.iter().map(|y| (y - &mean).norm_squared()).sum();
    if den == 0.0 {
        return Err(Error::UndefinedMetric(
            "fit is undefined for a constant reference output".into(),
        ));
    }
    Ok(100.0 * (1.0 - (num / den).sqrt()))
}

/// Runs `x̂⁺ = f(Ax̂ + Bu + L(y − ŷ))` next to the model and returns
/// `‖x(k) − x̂(k)‖` for `k = 0..=T`.
pub fn observer_run(
    model: &GenericRnn,
    l: &DenseMatrix,
    x0: &Vector,
    xhat0: &Vector,
    inputs: &[Vector],
) -> Result<Vec<f64>> {
    check_input_dims(model, x0, inputs)?;
    check_input_dims(model, xhat0, &[])?;
    if l.shape() != (model.n(), model.l()) {
        return Err(Error::Dimension(format!(
            "L must be {}x{}, got {:?}",
            model.n(),
            model.l(),
            l.shape()
        )));
    }
    let mut x = x0.clone();
    let mut xh = xhat0.clone();
    let mut errors = Vec::with_capacity(inputs.len() + 1);
    errors.push((&x - &xh).norm());
    for (k, u) in inputs.iter().enumerate() {
        let innovation = &model.c * (&x - &xh);
        let xh_next = model.activate(&(&model.a * &xh + &model.b * u + l * innovation));
        x = model.step(&x, u);
        xh = xh_next;
        let e = (&x - &xh).norm();
        if !e.is_finite() {
            return Err(Error::Diverged { step: k + 1 });
        }
        errors.push(e);
    }
    Ok(errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Activation;

    fn scalar(a: f64, b: f64, act: Activation) -> GenericRnn {
        GenericRnn::new(
            DenseMatrix::from_element(1, 1, a),
            DenseMatrix::from_element(1, 1, b),
            DenseMatrix::identity(1, 1),
            DenseMatrix::zeros(1, 1),
            vec![act],
        )
        .unwrap()
    }

    fn ones(n: usize) -> Vec<Vector> {
        vec![Vector::from_element(1, 1.0); n]
    }

    #[test]
    fn normalization_round_trips() {
        let n = AffineNormalization::new(
            Vector::from_vec(vec![1.0, -2.0]),
            Vector::from_vec(vec![4.0, 0.5]),
        )
        .unwrap();
        let v = Vector::from_vec(vec![3.0, 7.0]);
        assert_eq!(n.apply(&v), Vector::from_vec(vec![0.5, 18.0]));
        assert_eq!(n.invert(&n.apply(&v)), v);
        assert!(AffineNormalization::uniform(2, 0.0, 0.0).is_err());
        let d = Dataset::new(vec![v.clone()], vec![Vector::from_element(1, 2.0)], 1.0).unwrap();
        let dn = d
            .normalized(&n, &AffineNormalization::uniform(1, 2.0, 1.0).unwrap())
            .unwrap();
        assert_eq!(dn.outputs[0][0], 0.0);
        assert!(d
            .normalized(
                &AffineNormalization::identity(3),
                &AffineNormalization::identity(1)
            )
            .is_err());
    }

    #[test]
    fn zero_dynamics_and_geometric_series() {
        let z = scalar(0.0, 0.0, Activation::sigmoid());
        let t = simulate(&z, &Vector::from_element(1, 3.0), &ones(5)).unwrap();
        assert!(t.states[1..].iter().all(|x| x[0] == 0.5));
        let g = scalar(0.5, 1.0, Activation::identity());
        let t = simulate(&g, &Vector::zeros(1), &ones(60)).unwrap();
        assert!((t.states[60][0] - 2.0).abs() < 1e-12);
        assert_eq!(t.states.len(), 61);
        assert_eq!(t.outputs.len(), 60);
    }

    #[test]
    fn divergence_is_reported() {
        let g = scalar(1e200, 0.0, Activation::identity());
        let err = simulate(&g, &Vector::from_element(1, 1e200), &ones(5)).unwrap_err();
        assert!(matches!(err, Error::Diverged { step: 1 }));
    }

    #[test]
    fn pair_cases() {
        let g = scalar(2.0, 0.0, Activation::identity());
        let d = simulate_pair(
            &g,
            &Vector::zeros(1),
            &Vector::from_element(1, 1.0),
            &ones(10),
            &ones(10),
        )
        .unwrap();
        for (k, v) in d.iter().enumerate() {
            assert_eq!(*v, 2f64.powi(k as i32));
        }
        let same = simulate_pair(
            &g,
            &Vector::zeros(1),
            &Vector::zeros(1),
            &ones(10),
            &ones(10),
        )
        .unwrap();
        assert!(same.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mprs_properties() {
        let s = mprs(0.0, 1.0, 2, 3, 100, 7).unwrap();
        assert!(s.iter().all(|&v| v == 0.0 || v == 1.0));
        let s = mprs(12.0, 16.0, 5, DEFAULT_HOLD, 1000, 7).unwrap();
        assert!(s.iter().all(|&v| (12.0..=16.0).contains(&v)));
        assert_eq!(s, mprs(12.0, 16.0, 5, DEFAULT_HOLD, 1000, 7).unwrap());
        assert!(mprs(1.0, 1.0, 2, 1, 10, 0).is_err());
    }

    #[test]
    fn fit_cases() {
        let y: Vec<Vector> = [0.0, 2.0]
            .iter()
            .map(|&v| Vector::from_element(1, v))
            .collect();
        let m: Vec<Vector> = [1.0, 1.0]
            .iter()
            .map(|&v| Vector::from_element(1, v))
            .collect();
        assert_eq!(fit_percent(&y, &y).unwrap(), 100.0);
        assert!(fit_percent(&y, &m).unwrap().abs() < 1e-12);
        assert!(matches!(
            fit_percent(&m, &y),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn readout_zero_targets_and_rows() {
        let esn = Esn {
            w_x: DenseMatrix::identity(3, 3) * 0.5,
            w_u: DenseMatrix::from_element(3, 1, 0.3),
            w_y: DenseMatrix::zeros(3, 1),
            w_out1: DenseMatrix::zeros(1, 3),
            w_out2: DenseMatrix::zeros(1, 1),
            activations: vec![Activation::tanh(); 3],
        };
        let u: Vec<Vector> = mprs(-1.0, 1.0, 4, 3, 700, 1)
            .unwrap()
            .into_iter()
            .map(|v| Vector::from_element(1, v))
            .collect();
        let data = Dataset::new(u, vec![Vector::zeros(1); 700], 25.0).unwrap();
        let fit = train_esn_readout(&esn, &data, 500, false).unwrap();
        assert_eq!(fit.rows, 200);
        assert!(fit.w_out1.amax() == 0.0);
        assert!(train_esn_readout(&esn, &data, 700, false).is_err());
    }

    #[test]
    fn observer_with_exact_start_has_zero_error() {
        let g = scalar(0.9, 1.0, Activation::tanh());
        let e = observer_run(
            &g,
            &DenseMatrix::zeros(1, 1),
            &Vector::zeros(1),
            &Vector::zeros(1),
            &ones(20),
        )
        .unwrap();
        assert!(e.iter().all(|&v| v == 0.0));
        let e = observer_run(
            &g,
            &DenseMatrix::zeros(1, 1),
            &Vector::zeros(1),
            &Vector::from_element(1, 1.0),
            &ones(200),
        )
        .unwrap();
        assert!(e[200] < 1e-6);
    }
}
