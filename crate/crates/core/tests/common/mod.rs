#![allow(dead_code)]

use deltaiss::certify::{certify_theorem2, check_esn_norm, check_hu, check_nnarx_norm};
use deltaiss::models::{Activation, Esn, GenericRnn, HuRnn, ShallowNnarx, Vector};
use deltaiss::numerics::{from_rows, spectral_norm, spectral_radius, DenseMatrix};
use deltaiss::sdp::SolveOptions;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize, s: f64) -> DenseMatrix {
    DenseMatrix::from_fn(r, c, |_, _| rng.random_range(-s..s))
}

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize, s: f64) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-s..s))
}

pub fn rand_acts(rng: &mut ChaCha8Rng, n: usize) -> Vec<Activation> {
    (0..n)
        .map(|_| match rng.random_range(0..3) {
            0 => Activation::identity(),
            1 => Activation::tanh(),
            _ => Activation::sigmoid(),
        })
        .collect()
}

pub fn rand_inputs(rng: &mut ChaCha8Rng, m: usize, steps: usize) -> Vec<Vector> {
    (0..steps).map(|_| rand_vec(rng, m, 1.0)).collect()
}

pub fn rand_system(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
    l: usize,
    strictly_proper: bool,
) -> GenericRnn {
    let d = if strictly_proper {
        DenseMatrix::zeros(l, m)
    } else {
        rand_mat(rng, l, m, 0.5)
    };
    GenericRnn::new(
        rand_mat(rng, n, n, 0.6),
        rand_mat(rng, n, m, 1.0),
        rand_mat(rng, l, n, 1.0),
        d,
        rand_acts(rng, n),
    )
    .unwrap()
}

/// Random system whose `‖Ã‖` is drawn from `[lo, hi]`, then kept only if
/// the structured condition certifies it.
pub fn certified_system(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
    l: usize,
    lo: f64,
    hi: f64,
) -> GenericRnn {
    loop {
        let mut g = rand_system(rng, n, m, l, false);
        let target = rng.random_range(lo..hi);
        let norm = spectral_norm(&g.a_tilde()).unwrap();
        g.a *= target / norm;
        if certify_theorem2(&g, &SolveOptions::default()).is_ok() {
            return g;
        }
    }
}

pub fn counterexample_esn() -> Esn {
    Esn {
        w_x: from_rows(&[vec![0.8257, -0.4711], vec![-1.0149, 0.137]]).unwrap(),
        w_u: from_rows(&[vec![0.5], vec![-0.3]]).unwrap(),
        w_y: from_rows(&[vec![-0.2919], vec![0.3018]]).unwrap(),
        w_out1: from_rows(&[vec![0.3999, -0.93]]).unwrap(),
        w_out2: from_rows(&[vec![-0.1768]]).unwrap(),
        activations: vec![Activation::tanh(); 2],
    }
}

pub fn counterexample_nnarx() -> ShallowNnarx {
    ShallowNnarx {
        w_0: from_rows(&[vec![0.6293]]).unwrap(),
        b_0: Vector::zeros(1),
        w_phi: from_rows(&[vec![-0.2130, -0.8657, -1.0431, -0.2701]]).unwrap(),
        w_u: from_rows(&[vec![0.5]]).unwrap(),
        b: Vector::zeros(1),
        lags: 2,
        activations: vec![Activation::tanh()],
    }
}

pub fn counterexample_hu() -> HuRnn {
    HuRnn {
        e: DenseMatrix::zeros(2, 2),
        o: DenseMatrix::identity(2, 2),
        a_hat: from_rows(&[vec![0.4178, -0.8544], vec![0.8199, 0.3573]]).unwrap(),
        s: Vector::zeros(2),
        activations: vec![Activation::tanh(); 2],
    }
}

pub fn worked_plant(second: Activation) -> GenericRnn {
    GenericRnn::new(
        from_rows(&[vec![-0.4686, 1.0984], vec![0.0, 1.15]]).unwrap(),
        from_rows(&[vec![0.7015], vec![-2.0518]]).unwrap(),
        from_rows(&[vec![-0.3538, -0.8236]]).unwrap(),
        DenseMatrix::zeros(1, 1),
        vec![Activation::tanh(), second],
    )
    .unwrap()
}

fn lipschitz_one(rng: &mut ChaCha8Rng, n: usize) -> Vec<Activation> {
    (0..n)
        .map(|_| {
            if rng.random_bool(0.5) {
                Activation::tanh()
            } else {
                Activation::relu()
            }
        })
        .collect()
}

/// ESN with `‖W_x*‖ = slack`.
pub fn baseline_esn(rng: &mut ChaCha8Rng, slack: f64) -> Esn {
    let nu = rng.random_range(2..=8);
    let m = rng.random_range(1..=3);
    let l = rng.random_range(1..=2);
    let mut esn = Esn {
        w_x: rand_mat(rng, nu, nu, 1.0),
        w_u: rand_mat(rng, nu, m, 1.0),
        w_y: rand_mat(rng, nu, l, 0.5),
        w_out1: rand_mat(rng, l, nu, 1.0),
        w_out2: rand_mat(rng, l, m, 1.0),
        activations: lipschitz_one(rng, nu),
    };
    let c = slack / spectral_norm(&esn.effective_recurrence()).unwrap();
    esn.w_x *= c;
    esn.w_y *= c;
    let report = check_esn_norm(&esn).unwrap();
    assert!(report.applicable && report.holds);
    esn
}

/// Shallow NNARX with `‖W_0‖‖W_φ‖ = slack / (L √N)`.
pub fn baseline_nnarx(rng: &mut ChaCha8Rng, slack: f64) -> ShallowNnarx {
    let l = rng.random_range(1..=2);
    let m = rng.random_range(1..=2);
    let lags = rng.random_range(1..=3);
    let nu = rng.random_range(1..=5);
    let mut net = ShallowNnarx {
        w_0: rand_mat(rng, l, nu, 1.0),
        b_0: rand_vec(rng, l, 0.5),
        w_phi: rand_mat(rng, nu, (l + m) * lags, 1.0),
        w_u: rand_mat(rng, nu, m, 1.0),
        b: rand_vec(rng, nu, 0.5),
        lags,
        activations: lipschitz_one(rng, nu),
    };
    let prod = spectral_norm(&net.w_0).unwrap() * spectral_norm(&net.w_phi).unwrap();
    net.w_phi *= slack / ((lags as f64).sqrt() * prod);
    let report = check_nnarx_norm(&net).unwrap();
    assert!(report.applicable && report.holds);
    net
}

/// Hu-class model with `E = 0`, `O = I` and `ρ(M̂) = slack`.
pub fn baseline_hu(rng: &mut ChaCha8Rng, slack: f64) -> HuRnn {
    let n = rng.random_range(2..=8);
    let activations: Vec<Activation> = (0..n)
        .map(|_| match rng.random_range(0..3) {
            0 => Activation::tanh(),
            1 => Activation::sigmoid(),
            _ => Activation::identity(),
        })
        .collect();
    let mut hu = HuRnn {
        e: DenseMatrix::zeros(n, n),
        o: DenseMatrix::identity(n, n),
        a_hat: rand_mat(rng, n, n, 1.0),
        s: rand_vec(rng, n, 0.5),
        activations,
    };
    let rho = spectral_radius(&hu.comparison_matrix()).unwrap();
    hu.a_hat *= slack / rho;
    let report = check_hu(&hu).unwrap();
    assert!(report.applicable && report.holds);
    hu
}
