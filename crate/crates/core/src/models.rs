//! System representations.
//!
//! Everything is converted into [`GenericRnn`]:
//!
//! ```text
//!     x(k+1) = f(A x(k) + B u(k))
//!     y(k)   = C x(k) + D u(k)
//! ```
//!
//! where `f` applies one scalar [`Activation`] per state coordinate.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::numerics::{hstack, vstack, DenseMatrix};

pub type Vector = DVector<f64>;

/// Scalar evaluator used by custom activations.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum ActivationKind {
    Identity,
    Tanh,
    Sigmoid,
    Relu,
    Custom { name: String, eval: ScalarFn },
}

impl ActivationKind {
    pub fn name(&self) -> &str {
        match self {
            ActivationKind::Identity => "identity",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Relu => "relu",
            ActivationKind::Custom { name, .. } => name,
        }
    }
}

impl fmt::Debug for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationKind::Custom { name, .. } => write!(f, "Custom({name})"),
            other => f.write_str(other.name()),
        }
    }
}

impl PartialEq for ActivationKind {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (
                ActivationKind::Custom { name: a, eval: fa },
                ActivationKind::Custom { name: b, eval: fb },
            ) => a == b && Arc::ptr_eq(fa, fb),
            (a, b) => std::mem::discriminant(a) == std::mem::discriminant(b),
        }
    }
}

/// A per-coordinate nonlinearity with its declared Lipschitz constant.
#[derive(Clone, Debug, PartialEq)]
pub struct Activation {
    kind: ActivationKind,
    lipschitz: f64,
    bounded: bool,
}

impl Activation {
    pub fn identity() -> Self {
        Self {
            kind: ActivationKind::Identity,
            lipschitz: 1.0,
            bounded: false,
        }
    }

    pub fn tanh() -> Self {
        Self {
            kind: ActivationKind::Tanh,
            lipschitz: 1.0,
            bounded: true,
        }
    }

    pub fn sigmoid() -> Self {
        Self {
            kind: ActivationKind::Sigmoid,
            lipschitz: 0.25,
            bounded: true,
        }
    }

    pub fn relu() -> Self {
        Self {
            kind: ActivationKind::Relu,
            lipschitz: 1.0,
            bounded: false,
        }
    }

    /// A user-supplied nonlinearity. The declared constant is trusted.
    pub fn custom<F>(name: impl Into<String>, eval: F, lipschitz: f64, bounded: bool) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            kind: ActivationKind::Custom {
                name: name.into(),
                eval: Arc::new(eval),
            },
            lipschitz,
            bounded,
        }
    }

    /// Overrides the Lipschitz constant of a nonlinear activation. Identity
    /// always keeps constant 1.
    pub fn with_lipschitz(mut self, lipschitz: f64) -> Self {
        if !self.is_identity() {
            self.lipschitz = lipschitz;
        }
        self
    }

    pub fn kind(&self) -> &ActivationKind {
        &self.kind
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn bounded(&self) -> bool {
        self.bounded
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, ActivationKind::Identity)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            ActivationKind::Identity => x,
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::Custom { eval, .. } => eval(x),
        }
    }
}

/// The canonical system `x⁺ = f(Ax + Bu)`, `y = Cx + Du`.
#[derive(Clone, Debug, PartialEq)]
pub struct GenericRnn {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    pub c: DenseMatrix,
    pub d: DenseMatrix,
    pub activations: Vec<Activation>,
}

impl GenericRnn {
    /// Builds a model, rejecting it if [`GenericRnn::validate`] reports anything.
    pub fn new(
        a: DenseMatrix,
        b: DenseMatrix,
        c: DenseMatrix,
        d: DenseMatrix,
        activations: Vec<Activation>,
    ) -> Result<Self> {
        let model = Self {
            a,
            b,
            c,
            d,
            activations,
        };
        let diagnostics = model.validate();
        if diagnostics.is_empty() {
            Ok(model)
        } else {
            Err(Error::InvalidInput(diagnostics.join("; ")))
        }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn l(&self) -> usize {
        self.c.nrows()
    }

    /// Lists every structural problem; empty when the model is well formed.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.a.nrows();
        if self.a.ncols() != n {
            out.push(format!("A must be square, got {}x{}", n, self.a.ncols()));
        }
        if self.b.nrows() != n {
            out.push(format!("B has {} rows, expected {n}", self.b.nrows()));
        }
        if self.c.ncols() != n {
            out.push(format!("C has {} columns, expected {n}", self.c.ncols()));
        }
        if self.d.nrows() != self.c.nrows() || self.d.ncols() != self.b.ncols() {
            out.push(format!(
                "D is {}x{}, expected {}x{}",
                self.d.nrows(),
                self.d.ncols(),
                self.c.nrows(),
                self.b.ncols()
            ));
        }
        if self.activations.len() != n {
            out.push(format!(
                "{} activations for {n} states",
                self.activations.len()
            ));
        }
        for (name, m) in [
            ("A", &self.a),
            ("B", &self.b),
            ("C", &self.c),
            ("D", &self.d),
        ] {
            if m.iter().any(|v| !v.is_finite()) {
                out.push(format!("{name} has non-finite entries"));
            }
        }
        for (i, act) in self.activations.iter().enumerate() {
            if !(act.lipschitz > 0.0 && act.lipschitz.is_finite()) {
                out.push(format!(
                    "activation {i} ({}) has nonpositive Lipschitz constant {}",
                    act.kind.name(),
                    act.lipschitz
                ));
            }
        }
        out
    }

    /// `W = diag(L_p)` with 1 on identity coordinates, and the set of
    /// nonlinear coordinates.
    pub fn lipschitz_weights(&self) -> (DenseMatrix, Vec<usize>) {
        let w = DenseMatrix::from_diagonal(&DVector::from_iterator(
            self.activations.len(),
            self.activations.iter().map(|a| a.lipschitz),
        ));
        let nonlinear = self
            .activations
            .iter()
            .enumerate()
            .filter(|(_, a)| !a.is_identity())
            .map(|(i, _)| i)
            .collect();
        (w, nonlinear)
    }

    pub fn nonlinear_mask(&self) -> Vec<bool> {
        self.activations.iter().map(|a| !a.is_identity()).collect()
    }

    /// `Ã = W A`.
    pub fn a_tilde(&self) -> DenseMatrix {
        scale_rows(&self.a, &self.activations)
    }

    /// Applies the activations coordinate-wise.
    pub fn activate(&self, v: &Vector) -> Vector {
        Vector::from_iterator(
            v.len(),
            v.iter().zip(&self.activations).map(|(x, a)| a.eval(*x)),
        )
    }

    pub fn step(&self, x: &Vector, u: &Vector) -> Vector {
        self.activate(&(&self.a * x + &self.b * u))
    }

    pub fn output(&self, x: &Vector, u: &Vector) -> Vector {
        &self.c * x + &self.d * u
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.d.iter().all(|v| *v == 0.0)
    }
}

/// `diag(L_p) · M` for the given activations.
pub(crate) fn scale_rows(m: &DenseMatrix, activations: &[Activation]) -> DenseMatrix {
    let mut out = m.clone();
    for (i, act) in activations.iter().enumerate() {
        if act.lipschitz != 1.0 {
            let mut row = out.row_mut(i);
            row *= act.lipschitz;
        }
    }
    out
}

/// Echo state network with delayed output feedthrough:
///
/// ```text
///     χ(k+1) = ζ(W_x χ(k) + W_u u(k) + W_y y(k))
///     y(k)   = W_out1 χ(k) + W_out2 u(k−1)
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct Esn {
    pub w_x: DenseMatrix,
    pub w_u: DenseMatrix,
    pub w_y: DenseMatrix,
    pub w_out1: DenseMatrix,
    pub w_out2: DenseMatrix,
    /// One activation per reservoir unit.
    pub activations: Vec<Activation>,
}

impl Esn {
    pub fn nu(&self) -> usize {
        self.w_x.nrows()
    }

    pub fn m(&self) -> usize {
        self.w_u.ncols()
    }

    pub fn l(&self) -> usize {
        self.w_out1.nrows()
    }

    pub fn check_dims(&self) -> Result<()> {
        let (nu, m, l) = (self.nu(), self.m(), self.l());
        let ok = self.w_x.ncols() == nu
            && self.w_u.nrows() == nu
            && self.w_y.shape() == (nu, l)
            && self.w_out1.ncols() == nu
            && self.w_out2.shape() == (l, m)
            && self.activations.len() == nu;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "inconsistent ESN dimensions: W_x {:?}, W_u {:?}, W_y {:?}, W_out1 {:?}, W_out2 {:?}, {} activations",
                self.w_x.shape(),
                self.w_u.shape(),
                self.w_y.shape(),
                self.w_out1.shape(),
                self.w_out2.shape(),
                self.activations.len()
            )))
        }
    }

    /// `W_x* = W_x + W_y W_out1`.
    pub fn effective_recurrence(&self) -> DenseMatrix {
        &self.w_x + &self.w_y * &self.w_out1
    }

    /// Lifted state `[χ; z]` with `z(k) = u(k−1)`.
    pub fn to_generic(&self) -> Result<GenericRnn> {
        self.check_dims()?;
        let (nu, m, l) = (self.nu(), self.m(), self.l());
        let a = vstack(&[
            &hstack(&[&self.effective_recurrence(), &(&self.w_y * &self.w_out2)]),
            &DenseMatrix::zeros(m, nu + m),
        ]);
        let b = vstack(&[&self.w_u, &DenseMatrix::identity(m, m)]);
        let c = hstack(&[&self.w_out1, &self.w_out2]);
        let d = DenseMatrix::zeros(l, m);
        let mut activations = self.activations.clone();
        activations.extend(std::iter::repeat_n(Activation::identity(), m));
        GenericRnn::new(a, b, c, d, activations)
    }

    /// State `χ` alone, valid when `W_out2 = 0`: the model is then strictly
    /// proper with `A = W_x*`, `B = W_u`, `C = W_out1`.
    pub fn to_generic_reservoir(&self) -> Result<GenericRnn> {
        self.check_dims()?;
        if self.w_out2.iter().any(|&v| v != 0.0) {
            return Err(Error::UnsupportedForm(
                "reservoir-only form needs W_out2 = 0".into(),
            ));
        }
        GenericRnn::new(
            self.effective_recurrence(),
            self.w_u.clone(),
            self.w_out1.clone(),
            DenseMatrix::zeros(self.l(), self.m()),
            self.activations.clone(),
        )
    }

    /// Direct recursion of the ESN equations from `χ(0) = chi0`, `u(−1) = u_prev`.
    /// Returns the outputs `y(0..T)`.
    pub fn simulate_direct(
        &self,
        chi0: &Vector,
        u_prev: &Vector,
        inputs: &[Vector],
    ) -> Vec<Vector> {
        let mut chi = chi0.clone();
        let mut z = u_prev.clone();
        let mut ys = Vec::with_capacity(inputs.len());
        for u in inputs {
            let y = &self.w_out1 * &chi + &self.w_out2 * &z;
            let v = &self.w_x * &chi + &self.w_u * u + &self.w_y * &y;
            chi = Vector::from_iterator(
                v.len(),
                v.iter().zip(&self.activations).map(|(x, a)| a.eval(*x)),
            );
            z = u.clone();
            ys.push(y);
        }
        ys
    }
}

/// One-hidden-layer neural autoregressive model with exogenous input:
///
/// ```text
///     y(k+1) = W_0 ζ(W_φ φ(k) + W_u ũ(k) + b) + b_0
///     φ(k)   = [ũ(k−N), y(k−N+1), …, ũ(k−1), y(k)]
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct ShallowNnarx {
    pub w_0: DenseMatrix,
    pub b_0: Vector,
    pub w_phi: DenseMatrix,
    pub w_u: DenseMatrix,
    pub b: Vector,
    pub lags: usize,
    /// One activation per hidden unit.
    pub activations: Vec<Activation>,
}

impl ShallowNnarx {
    pub fn nu(&self) -> usize {
        self.w_0.ncols()
    }

    pub fn l(&self) -> usize {
        self.w_0.nrows()
    }

    pub fn m(&self) -> usize {
        self.w_u.ncols()
    }

    /// Length of the shift register `φ̃`: `(l+m̃)N − l`.
    pub fn register_len(&self) -> usize {
        (self.l() + self.m()) * self.lags - self.l()
    }

    pub fn state_dim(&self) -> usize {
        self.nu() + self.register_len()
    }

    pub fn check_dims(&self) -> Result<()> {
        let (nu, l, m) = (self.nu(), self.l(), self.m());
        if self.lags == 0 {
            return Err(Error::InvalidInput("NNARX needs at least one lag".into()));
        }
        let ok = self.b_0.len() == l
            && self.w_phi.shape() == (nu, (l + m) * self.lags)
            && self.w_u.nrows() == nu
            && self.b.len() == nu
            && self.activations.len() == nu;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "inconsistent NNARX dimensions: W_0 {:?}, b_0 {}, W_phi {:?}, W_u {:?}, b {}, N {}, {} activations",
                self.w_0.shape(),
                self.b_0.len(),
                self.w_phi.shape(),
                self.w_u.shape(),
                self.b.len(),
                self.lags,
                self.activations.len()
            )))
        }
    }

    /// The last `l` columns of `W_φ`, acting on `y(k)`.
    pub fn w_phi3(&self) -> DenseMatrix {
        let l = self.l();
        self.w_phi.columns(self.w_phi.ncols() - l, l).into_owned()
    }

    /// Lifted state `[φ̃(k); υ(k)]` with extended input `[ũ(k); 1]`.
    ///
    /// Callers must append the constant 1 to every input sample.
    pub fn to_generic(&self) -> Result<GenericRnn> {
        self.check_dims()?;
        let (nu, l, m) = (self.nu(), self.l(), self.m());
        let p = self.register_len();
        let n = p + nu;
        let width = l + m;
        let w_phi3 = self.w_phi3();

        let mut a = DenseMatrix::zeros(n, n);
        let mut b = DenseMatrix::zeros(n, m + 1);
        // [φ̃(k); y(k); ũ(k)] with the oldest (l+m̃) entries dropped.
        for r in 0..p {
            let src = r + width;
            if src < p {
                a[(r, src)] = 1.0;
            } else if src < p + l {
                let i = src - p;
                for j in 0..nu {
                    a[(r, p + j)] = self.w_0[(i, j)];
                }
                b[(r, m)] = self.b_0[i];
            } else {
                b[(r, src - p - l)] = 1.0;
            }
        }
        let front = self.w_phi.columns(0, p);
        let back = &w_phi3 * &self.w_0;
        let offset = &self.b + &w_phi3 * &self.b_0;
        for i in 0..nu {
            for j in 0..p {
                a[(p + i, j)] = front[(i, j)];
            }
            for j in 0..nu {
                a[(p + i, p + j)] = back[(i, j)];
            }
            for j in 0..m {
                b[(p + i, j)] = self.w_u[(i, j)];
            }
            b[(p + i, m)] = offset[i];
        }
        let c = hstack(&[&DenseMatrix::zeros(l, p), &self.w_0]);
        let mut d = DenseMatrix::zeros(l, m + 1);
        for i in 0..l {
            d[(i, m)] = self.b_0[i];
        }
        let mut activations = vec![Activation::identity(); p];
        activations.extend(self.activations.iter().cloned());
        GenericRnn::new(a, b, c, d, activations)
    }

    /// Direct recursion with explicit history buffers.
    ///
    /// `u_hist` holds `ũ(−N), …, ũ(−1)`, `y_hist` holds `y(−N+1), …, y(0)`.
    /// Returns `y(1..=T)` for the inputs `ũ(0..T)`.
    pub fn simulate_direct(
        &self,
        u_hist: &[Vector],
        y_hist: &[Vector],
        inputs: &[Vector],
    ) -> Vec<Vector> {
        let n_lag = self.lags;
        let mut us: Vec<Vector> = u_hist.to_vec();
        let mut ys: Vec<Vector> = y_hist.to_vec();
        let mut out = Vec::with_capacity(inputs.len());
        for u in inputs {
            let mut phi = Vec::new();
            for i in 0..n_lag {
                phi.extend(us[us.len() - n_lag + i].iter().copied());
                phi.extend(ys[ys.len() - n_lag + i].iter().copied());
            }
            let phi = Vector::from_vec(phi);
            let v = &self.w_phi * phi + &self.w_u * u + &self.b;
            let h = Vector::from_iterator(
                v.len(),
                v.iter().zip(&self.activations).map(|(x, a)| a.eval(*x)),
            );
            let y = &self.w_0 * h + &self.b_0;
            us.push(u.clone());
            ys.push(y.clone());
            out.push(y);
        }
        out
    }

    /// Lifted initial state matching the histories of [`ShallowNnarx::simulate_direct`].
    ///
    /// The hidden state must reproduce `y(0) = W_0 υ(0) + b_0`; it is taken
    /// as the least-squares solution, so `y(0) − b_0` must lie in the range
    /// of `W_0`.
    pub fn lifted_state(&self, u_hist: &[Vector], y_hist: &[Vector], hidden: &Vector) -> Vector {
        let mut v = Vec::new();
        for i in 0..self.lags {
            v.extend(u_hist[i].iter().copied());
            if i + 1 < self.lags {
                v.extend(y_hist[i].iter().copied());
            }
        }
        v.extend(hidden.iter().copied());
        Vector::from_vec(v)
    }
}

/// The class `x(k+1) = E x(k) + O f(Â x(k) + s)` with diagonal `E`, `O`.
#[derive(Clone, Debug, PartialEq)]
pub struct HuRnn {
    pub e: DenseMatrix,
    pub o: DenseMatrix,
    pub a_hat: DenseMatrix,
    pub s: Vector,
    pub activations: Vec<Activation>,
}

impl HuRnn {
    pub fn n(&self) -> usize {
        self.a_hat.nrows()
    }

    pub fn check_dims(&self) -> Result<()> {
        let n = self.n();
        let ok = self.a_hat.ncols() == n
            && self.e.shape() == (n, n)
            && self.o.shape() == (n, n)
            && self.s.len() == n
            && self.activations.len() == n;
        if !ok {
            return Err(Error::InvalidInput(
                "inconsistent Hu-class dimensions".into(),
            ));
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && (self.e[(i, j)] != 0.0 || self.o[(i, j)] != 0.0) {
                    return Err(Error::InvalidInput("E and O must be diagonal".into()));
                }
            }
        }
        Ok(())
    }

    /// `M̂ = |E| + W|O||Â|`.
    pub fn comparison_matrix(&self) -> DenseMatrix {
        let w = DenseMatrix::from_diagonal(&DVector::from_iterator(
            self.n(),
            self.activations.iter().map(|a| a.lipschitz()),
        ));
        self.e.abs() + w * self.o.abs() * self.a_hat.abs()
    }

    /// Embedding for `E = 0` and `o_i = 1` on nonlinear coordinates. The
    /// offset `s` enters through a single constant-one input.
    pub fn to_generic(&self) -> Result<GenericRnn> {
        self.check_dims()?;
        let n = self.n();
        if self.e.iter().any(|v| *v != 0.0) {
            return Err(Error::UnsupportedForm(
                "E must be zero to embed this model".into(),
            ));
        }
        for (i, act) in self.activations.iter().enumerate() {
            if !act.is_identity() && self.o[(i, i)] != 1.0 {
                return Err(Error::UnsupportedForm(format!(
                    "o_{i} = {} on a nonlinear coordinate; must be 1",
                    self.o[(i, i)]
                )));
            }
        }
        // On identity rows O·f(v) = o_i·v is linear, so O folds into A and s.
        let a = &self.o * &self.a_hat;
        let b = DenseMatrix::from_column_slice(n, 1, (&self.o * &self.s).as_slice());
        GenericRnn::new(
            a,
            b,
            DenseMatrix::identity(n, n),
            DenseMatrix::zeros(n, 1),
            self.activations.clone(),
        )
    }

    pub fn step_direct(&self, x: &Vector) -> Vector {
        let v = &self.a_hat * x + &self.s;
        let fx = Vector::from_iterator(
            v.len(),
            v.iter().zip(&self.activations).map(|(x, a)| a.eval(*x)),
        );
        &self.e * x + &self.o * fx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::spectral_norm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize, s: f64) -> DenseMatrix {
        DenseMatrix::from_fn(r, c, |_, _| rng.random_range(-s..s))
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize, s: f64) -> Vector {
        Vector::from_fn(n, |_, _| rng.random_range(-s..s))
    }

    fn simulate_outputs(model: &GenericRnn, x0: &Vector, inputs: &[Vector]) -> Vec<Vector> {
        let mut x = x0.clone();
        let mut ys = Vec::new();
        for u in inputs {
            ys.push(model.output(&x, u));
            x = model.step(&x, u);
        }
        ys
    }

    fn max_diff(a: &[Vector], b: &[Vector]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).amax())
            .fold(0.0, f64::max)
    }

    #[test]
    fn lipschitz_weights_cases() {
        let m = GenericRnn::new(
            DenseMatrix::zeros(2, 2),
            DenseMatrix::zeros(2, 1),
            DenseMatrix::zeros(1, 2),
            DenseMatrix::zeros(1, 1),
            vec![Activation::sigmoid(), Activation::identity()],
        )
        .unwrap();
        let (w, l) = m.lipschitz_weights();
        assert_eq!(
            w,
            DenseMatrix::from_diagonal(&Vector::from_vec(vec![0.25, 1.0]))
        );
        assert_eq!(l, vec![0]);

        let m = GenericRnn::new(
            DenseMatrix::zeros(3, 3),
            DenseMatrix::zeros(3, 1),
            DenseMatrix::zeros(1, 3),
            DenseMatrix::zeros(1, 1),
            vec![Activation::tanh(); 3],
        )
        .unwrap();
        let (w, l) = m.lipschitz_weights();
        assert_eq!(w, DenseMatrix::identity(3, 3));
        assert_eq!(l, vec![0, 1, 2]);
    }

    #[test]
    fn validate_reports_problems() {
        let good = GenericRnn {
            a: DenseMatrix::zeros(2, 2),
            b: DenseMatrix::zeros(2, 1),
            c: DenseMatrix::zeros(1, 2),
            d: DenseMatrix::zeros(1, 1),
            activations: vec![Activation::tanh(), Activation::identity()],
        };
        assert!(good.validate().is_empty());

        let mut bad = good.clone();
        bad.activations[0] = Activation::tanh().with_lipschitz(0.0);
        assert_eq!(bad.validate().len(), 1);

        let mut bad = good.clone();
        bad.b = DenseMatrix::zeros(3, 1);
        assert_eq!(bad.validate().len(), 1);

        let mut bad = good;
        bad.a[(0, 0)] = f64::NAN;
        assert_eq!(bad.validate().len(), 1);
    }

    #[test]
    fn identity_lipschitz_cannot_be_overridden() {
        assert_eq!(Activation::identity().with_lipschitz(3.0).lipschitz(), 1.0);
        assert!(Activation::sigmoid().bounded());
        assert!(!Activation::relu().bounded());
    }

    #[test]
    fn zero_esn_lifts_to_shift() {
        let esn = Esn {
            w_x: DenseMatrix::zeros(3, 3),
            w_u: DenseMatrix::zeros(3, 2),
            w_y: DenseMatrix::zeros(3, 1),
            w_out1: DenseMatrix::zeros(1, 3),
            w_out2: DenseMatrix::zeros(1, 2),
            activations: vec![Activation::tanh(); 3],
        };
        let g = esn.to_generic().unwrap();
        assert_eq!(g.a, DenseMatrix::zeros(5, 5));
        assert_eq!(
            g.b,
            vstack(&[&DenseMatrix::zeros(3, 2), &DenseMatrix::identity(2, 2)])
        );
        assert_eq!(g.c, DenseMatrix::zeros(1, 5));
        assert_eq!(g.d, DenseMatrix::zeros(1, 2));
    }

    #[test]
    fn esn_conversion_matches_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let nu = rng.random_range(1..6);
            let m = rng.random_range(1..3);
            let l = rng.random_range(1..3);
            let esn = Esn {
                w_x: rand_mat(&mut rng, nu, nu, 0.6),
                w_u: rand_mat(&mut rng, nu, m, 1.0),
                w_y: rand_mat(&mut rng, nu, l, 0.3),
                w_out1: rand_mat(&mut rng, l, nu, 0.5),
                w_out2: rand_mat(&mut rng, l, m, 0.5),
                activations: vec![Activation::tanh(); nu],
            };
            let g = esn.to_generic().unwrap();
            assert_eq!(g.c, hstack(&[&esn.w_out1, &esn.w_out2]));
            let top = g.a.view((0, 0), (nu, nu)).into_owned();
            assert_eq!(
                spectral_norm(&top).unwrap(),
                spectral_norm(&esn.effective_recurrence()).unwrap()
            );
            let chi0 = rand_vec(&mut rng, nu, 1.0);
            let z0 = rand_vec(&mut rng, m, 1.0);
            let inputs: Vec<Vector> = (0..100).map(|_| rand_vec(&mut rng, m, 1.0)).collect();
            let direct = esn.simulate_direct(&chi0, &z0, &inputs);
            let x0 = Vector::from_iterator(nu + m, chi0.iter().chain(z0.iter()).copied());
            let lifted = simulate_outputs(&g, &x0, &inputs);
            assert!(max_diff(&direct, &lifted) <= 1e-12);
        }
    }

    #[test]
    fn esn_rejects_bad_dims() {
        let esn = Esn {
            w_x: DenseMatrix::zeros(2, 2),
            w_u: DenseMatrix::zeros(3, 1),
            w_y: DenseMatrix::zeros(2, 1),
            w_out1: DenseMatrix::zeros(1, 2),
            w_out2: DenseMatrix::zeros(1, 1),
            activations: vec![Activation::tanh(); 2],
        };
        assert!(matches!(esn.to_generic(), Err(Error::InvalidInput(_))));
    }

    fn random_nnarx(rng: &mut ChaCha8Rng, lags: usize) -> ShallowNnarx {
        let nu = rng.random_range(1..5);
        let l = rng.random_range(1..3);
        let m = rng.random_range(1..3);
        ShallowNnarx {
            w_0: rand_mat(rng, l, nu, 0.7),
            b_0: rand_vec(rng, l, 0.3),
            w_phi: rand_mat(rng, nu, (l + m) * lags, 0.7),
            w_u: rand_mat(rng, nu, m, 0.7),
            b: rand_vec(rng, nu, 0.3),
            lags,
            activations: vec![Activation::tanh(); nu],
        }
    }

    #[test]
    fn nnarx_conversion_matches_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for trial in 0..50 {
            let lags = 1 + trial % 3;
            let net = random_nnarx(&mut rng, lags);
            let (l, m, nu) = (net.l(), net.m(), net.nu());
            let g = net.to_generic().unwrap();
            assert_eq!(g.n(), nu + (l + m) * lags - l);

            // Histories consistent with a hidden state: y(0) = W_0 υ(0) + b_0.
            let hidden = rand_vec(&mut rng, nu, 0.9);
            let u_hist: Vec<Vector> = (0..lags).map(|_| rand_vec(&mut rng, m, 1.0)).collect();
            let mut y_hist: Vec<Vector> =
                (0..lags - 1).map(|_| rand_vec(&mut rng, l, 1.0)).collect();
            y_hist.push(&net.w_0 * &hidden + &net.b_0);
            let inputs: Vec<Vector> = (0..100).map(|_| rand_vec(&mut rng, m, 1.0)).collect();
            let direct = net.simulate_direct(&u_hist, &y_hist, &inputs);

            let mut x = net.lifted_state(&u_hist, &y_hist, &hidden);
            let mut lifted = Vec::new();
            for u in &inputs {
                let ue = Vector::from_iterator(m + 1, u.iter().copied().chain([1.0]));
                x = g.step(&x, &ue);
                lifted.push(g.output(&x, &ue));
            }
            assert!(max_diff(&direct, &lifted) <= 1e-12, "trial {trial}");
        }
    }

    #[test]
    fn nnarx_zero_weights_leave_hidden_rows_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = random_nnarx(&mut rng, 2);
        net.w_phi.fill(0.0);
        net.w_u.fill(0.0);
        let g = net.to_generic().unwrap();
        let p = net.register_len();
        assert!(g.a.rows(p, net.nu()).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hu_conversion_matches_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let n = rng.random_range(1..6);
            let activations: Vec<Activation> = (0..n)
                .map(|_| {
                    if rng.random_bool(0.6) {
                        Activation::tanh()
                    } else {
                        Activation::identity()
                    }
                })
                .collect();
            let o = DenseMatrix::from_diagonal(&Vector::from_iterator(
                n,
                activations
                    .iter()
                    .map(|a| if a.is_identity() { 0.7 } else { 1.0 }),
            ));
            let hu = HuRnn {
                e: DenseMatrix::zeros(n, n),
                o,
                a_hat: rand_mat(&mut rng, n, n, 0.6),
                s: rand_vec(&mut rng, n, 1.0),
                activations,
            };
            let g = hu.to_generic().unwrap();
            let mut x1 = rand_vec(&mut rng, n, 1.0);
            let mut x2 = x1.clone();
            let one = Vector::from_element(1, 1.0);
            for _ in 0..100 {
                x1 = hu.step_direct(&x1);
                x2 = g.step(&x2, &one);
                assert!((&x1 - &x2).amax() <= 1e-12);
            }
        }
    }

    #[test]
    fn hu_rejects_unsupported_forms() {
        let mut hu = HuRnn {
            e: DenseMatrix::identity(2, 2) * 0.5,
            o: DenseMatrix::identity(2, 2),
            a_hat: DenseMatrix::zeros(2, 2),
            s: Vector::zeros(2),
            activations: vec![Activation::tanh(); 2],
        };
        assert!(matches!(hu.to_generic(), Err(Error::UnsupportedForm(_))));
        hu.e.fill(0.0);
        hu.o[(1, 1)] = 2.0;
        assert!(matches!(hu.to_generic(), Err(Error::UnsupportedForm(_))));
        hu.o[(1, 1)] = 1.0;
        assert_eq!(hu.to_generic().unwrap().a, DenseMatrix::zeros(2, 2));
    }
}
