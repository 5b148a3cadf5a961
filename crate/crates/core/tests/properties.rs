mod common;

use common::*;
use deltaiss::certify::{certify_theorem2, validate_certificate};
use deltaiss::compose::series;
use deltaiss::io::{parse_model_file, ModelFile, ModelSpec};
use deltaiss::models::{Esn, GenericRnn, HuRnn, Vector};
use deltaiss::numerics::{spd_inverse, sym_eig, DenseMatrix, SymmetricMatrix};
use deltaiss::sdp::{SolveOptions, SparsityPattern};
use deltaiss::sim::{fit_percent, mprs, simulate};
use proptest::prelude::*;
use rand::Rng;

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(32)
}

fn sym_spd_in_pattern(
    rng: &mut rand_chacha::ChaCha8Rng,
    pattern: &SparsityPattern,
) -> SymmetricMatrix {
    let n = pattern.n();
    let g = rand_mat(rng, n, n, 1.0);
    let mut m = &g * g.transpose() + DenseMatrix::identity(n, n);
    pattern.project(&mut m);
    // Projection of an SPD matrix onto a block-diagonal pattern keeps it SPD.
    SymmetricMatrix::from_dense(&m).unwrap()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn symmetric_storage_round_trips(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = rng(seed);
        let m = rand_mat(&mut rng, n, n, 2.0);
        let s = SymmetricMatrix::symmetric_part(&m);
        let d = s.to_dense();
        prop_assert_eq!(&d, &d.transpose());
        prop_assert_eq!(SymmetricMatrix::from_dense(&d).unwrap(), s.clone());
        let e = sym_eig(&s).unwrap();
        prop_assert!((e.reconstruct() - &d).amax() < 1e-10 * (1.0 + d.amax()));
        prop_assert!((e.values.iter().sum::<f64>() - s.trace()).abs() < 1e-10 * (1.0 + d.amax()) * n as f64);
    }

    #[test]
    fn structured_inverse_keeps_pattern(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = rng(seed);
        let nonlinear: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let pattern = SparsityPattern::lyapunov_structure(&nonlinear);
        let p = sym_spd_in_pattern(&mut rng, &pattern);
        let q = spd_inverse(&p, 1e-12).unwrap().to_dense();
        let mut projected = q.clone();
        pattern.project(&mut projected);
        prop_assert!((projected - &q).amax() < 1e-10 * (1.0 + q.amax()));
    }

    #[test]
    fn esn_lifting_matches_direct_recursion(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let (nu, m, l) = (rng.random_range(1..6), rng.random_range(1..3), rng.random_range(1..3));
        let esn = Esn {
            w_x: rand_mat(&mut rng, nu, nu, 0.5),
            w_u: rand_mat(&mut rng, nu, m, 1.0),
            w_y: rand_mat(&mut rng, nu, l, 0.3),
            w_out1: rand_mat(&mut rng, l, nu, 1.0),
            w_out2: rand_mat(&mut rng, l, m, 1.0),
            activations: rand_acts(&mut rng, nu),
        };
        let g = esn.to_generic().unwrap();
        let chi0 = rand_vec(&mut rng, nu, 1.0);
        let u_prev = rand_vec(&mut rng, m, 1.0);
        let inputs = rand_inputs(&mut rng, m, 40);
        let direct = esn.simulate_direct(&chi0, &u_prev, &inputs);
        let x0 = Vector::from_iterator(nu + m, chi0.iter().chain(u_prev.iter()).copied());
        let lifted = simulate(&g, &x0, &inputs).unwrap();
        for (a, b) in direct.iter().zip(&lifted.outputs) {
            prop_assert!((a - b).amax() < 1e-10 * (1.0 + a.amax()));
        }
    }

    #[test]
    fn hu_lifting_matches_direct_step(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let n = rng.random_range(1..6);
        let activations = rand_acts(&mut rng, n);
        // o_i = 1 on nonlinear coordinates, free on linear ones.
        let o = DenseMatrix::from_diagonal(&Vector::from_iterator(
            n,
            activations.iter().map(|a| if a.is_identity() { rng.random_range(-1.0..1.0) } else { 1.0 }),
        ));
        let hu = HuRnn {
            e: DenseMatrix::zeros(n, n),
            o,
            a_hat: rand_mat(&mut rng, n, n, 0.8),
            s: rand_vec(&mut rng, n, 0.5),
            activations,
        };
        let g = hu.to_generic().unwrap();
        let mut x = rand_vec(&mut rng, n, 1.0);
        let one = Vector::from_element(1, 1.0);
        for _ in 0..20 {
            let direct = hu.step_direct(&x);
            let lifted = g.step(&x, &one);
            prop_assert!((&direct - &lifted).amax() < 1e-12 * (1.0 + direct.amax()));
            x = direct;
        }
    }

    #[test]
    fn series_matches_cascade(seed in any::<u64>(), k in 1usize..4) {
        let mut rng = rng(seed);
        let mut systems = Vec::new();
        let mut m = rng.random_range(1..3);
        for _ in 0..k {
            let n = rng.random_range(1..4);
            let l = rng.random_range(1..3);
            systems.push(rand_system(&mut rng, n, m, l, false));
            m = l;
        }
        let s = series(&systems).unwrap();
        let inputs = rand_inputs(&mut rng, systems[0].m(), 30);
        let x0s: Vec<Vector> = systems.iter().map(|g| rand_vec(&mut rng, g.n(), 1.0)).collect();
        let mut signal = inputs.clone();
        for (g, x0) in systems.iter().zip(&x0s) {
            signal = simulate(g, x0, &signal).unwrap().outputs;
        }
        let x0 = Vector::from_iterator(s.n(), x0s.iter().flat_map(|v| v.iter().copied()));
        let joint = simulate(&s, &x0, &inputs).unwrap().outputs;
        for (a, b) in signal.iter().zip(&joint) {
            prop_assert!((a - b).amax() < 1e-10 * (1.0 + a.amax()));
        }
    }

    #[test]
    fn certificates_always_validate(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let n = rng.random_range(1..6);
        let g = rand_system(&mut rng, n, 1, 1, false);
        if let Ok(cert) = certify_theorem2(&g, &SolveOptions::default()) {
            let report = validate_certificate(&g, &cert.p).unwrap();
            prop_assert!(report.passed);
            prop_assert_eq!(report.pattern_violations, 0);
            prop_assert!(report.lyapunov_gap < 0.0);
        }
    }

    #[test]
    fn fit_properties(seed in any::<u64>(), len in 2usize..60) {
        let mut rng = rng(seed);
        let y = rand_inputs(&mut rng, 2, len);
        let yhat = rand_inputs(&mut rng, 2, len);
        prop_assume!(fit_percent(&y, &y).is_ok());
        prop_assert!((fit_percent(&y, &y).unwrap() - 100.0).abs() < 1e-12);
        let f = fit_percent(&y, &yhat).unwrap();
        prop_assert!(f <= 100.0);
        // Invariant under a common reordering of time.
        let mut idx: Vec<usize> = (0..len).collect();
        idx.reverse();
        let yr: Vec<Vector> = idx.iter().map(|&i| y[i].clone()).collect();
        let yhr: Vec<Vector> = idx.iter().map(|&i| yhat[i].clone()).collect();
        prop_assert!((fit_percent(&yr, &yhr).unwrap() - f).abs() < 1e-9);
        // Invariant under a common affine rescaling.
        let ys: Vec<Vector> = y.iter().map(|v| v * 3.0 + Vector::from_element(2, 1.5)).collect();
        let yhs: Vec<Vector> = yhat.iter().map(|v| v * 3.0 + Vector::from_element(2, 1.5)).collect();
        prop_assert!((fit_percent(&ys, &yhs).unwrap() - f).abs() < 1e-9);
    }

    #[test]
    fn model_files_round_trip_exactly(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let (n, m, l) = (rng.random_range(1..5), rng.random_range(1..3), rng.random_range(1..3));
        let g = rand_system(&mut rng, n, m, l, false);
        let file = ModelFile::new(ModelSpec::generic(&g).unwrap());
        let text = serde_json::to_string_pretty(&file).unwrap();
        let back = parse_model_file(&text).unwrap();
        prop_assert_eq!(&back, &file);
        prop_assert_eq!(back.hash(), file.hash());
        let g2 = back.model.to_model().unwrap().to_generic().unwrap();
        prop_assert_eq!(g2.a, g.a);
        prop_assert_eq!(g2.d, g.d);
    }

    #[test]
    fn simulation_and_mprs_are_deterministic(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let g: GenericRnn = rand_system(&mut rng, 3, 1, 1, false);
        let u: Vec<Vector> = mprs(-1.0, 1.0, 5, 7, 80, seed)
            .unwrap()
            .into_iter()
            .map(|v| Vector::from_element(1, v))
            .collect();
        let u2: Vec<Vector> = mprs(-1.0, 1.0, 5, 7, 80, seed)
            .unwrap()
            .into_iter()
            .map(|v| Vector::from_element(1, v))
            .collect();
        prop_assert_eq!(&u, &u2);
        prop_assert!(u.iter().all(|v| (-1.0..=1.0).contains(&v[0])));
        let x0 = Vector::zeros(3);
        prop_assert_eq!(simulate(&g, &x0, &u).unwrap(), simulate(&g, &x0, &u2).unwrap());
    }
}
