use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdlms_core::basis::BasisSet;
use sdlms_core::pde_model::*;

#[test]
fn empirical_trace_matches_configuration() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 4;
    let basis = BasisSet::sample(&[0.2, 0.4, 0.6, 0.8], 1.0, 5).unwrap();
    let w = DVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0));
    let truth = GroundTruthModel::from_global(&basis, 2, w).unwrap();
    let spec = RegressorSpec::random_isotropic(&mut rng, n, 2, (1.0, 5.0), (0.05, 0.1)).unwrap();
    let src = GaussianStream::new(truth, spec.clone()).unwrap();
    let samples = 100_000;
    let mut acc = vec![0.0; n];
    let mut batch = SampleBatch::zeros(n, 2);
    for i in 0..samples {
        src.fill(2, i, &mut batch);
        for k in 0..n {
            acc[k] += batch.u[k].norm_squared();
        }
    }
    for k in 0..n {
        let tr = spec.covariance(k).trace();
        assert!((acc[k] / samples as f64 - tr).abs() < 0.02 * tr);
    }
}

#[test]
fn snr_matches_monte_carlo() {
    let basis = BasisSet::sample(&[0.5], 1.0, 1).unwrap();
    let truth = GroundTruthModel::from_global(&basis, 3, DVector::from_vec(vec![0.7, -1.2, 0.4]))
        .unwrap();
    let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, -0.3, 0.8, 0.1, 0.5, 0.0, 1.1]);
    let r = &a * a.transpose();
    let spec = RegressorSpec::new(vec![r], vec![0.2]).unwrap();
    let src = GaussianStream::new(truth.clone(), spec.clone()).unwrap();
    let draws = 1_000_000;
    let mut power = 0.0;
    let mut batch = SampleBatch::zeros(1, 3);
    for i in 0..draws {
        src.fill(5, i, &mut batch);
        power += batch.u[0].dot(truth.local(0)).powi(2);
    }
    let mc = 10.0 * (power / draws as f64 / 0.2).log10();
    let exact = node_snr(&spec, &truth, 0).unwrap().db();
    let ratio = 10f64.powf((mc - exact) / 10.0);
    assert!((ratio - 1.0).abs() < 0.01, "mc {mc} dB vs {exact} dB");
}

#[test]
fn noise_is_white_over_time() {
    let basis = BasisSet::sample(&[0.3, 0.7], 1.0, 1).unwrap();
    let truth = GroundTruthModel::from_global(&basis, 1, DVector::from_element(1, 1.0)).unwrap();
    let spec = RegressorSpec::new(vec![DMatrix::identity(1, 1); 2], vec![0.5; 2]).unwrap();
    let src = GaussianStream::new(truth, spec).unwrap();
    let samples = 100_000;
    for k in 0..2 {
        let v: Vec<f64> = (0..samples).map(|i| src.batch(8, i).v[k]).collect();
        let mean = v.iter().sum::<f64>() / samples as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
        let lag1 = v.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>();
        let rho = lag1 / var;
        assert!(rho.abs() < 3.0 / (samples as f64).sqrt(), "node {k}: ρ₁ = {rho}");
    }
}

#[test]
fn standard_grid_poisson_residual() {
    let p = Poisson2DProblem::standard();
    let sol = poisson_solve(&p, JacobiSettings::default()).unwrap();
    assert!(sol.residual <= 1e-8);
    let check = (discrete_laplacian(&sol.f, p.dx) - &p.input).amax();
    assert!(check <= 1e-8);
    for j in 0..13 {
        for edge in [sol.f[(0, j)], sol.f[(12, j)], sol.f[(j, 0)], sol.f[(j, 12)]] {
            assert_eq!(edge, 0.0);
        }
    }
}

#[test]
fn manufactured_solution_is_second_order() {
    // f = sin(πx)sin(πy), ∇²f = −2π²f. Halving Δx should cut the error ~4×.
    let errors: Vec<f64> = [15usize, 31]
        .iter()
        .map(|&n| {
            let dx = 1.0 / (n + 1) as f64;
            let exact = |a: usize, b: usize| {
                (std::f64::consts::PI * a as f64 * dx).sin() * (std::f64::consts::PI * b as f64 * dx).sin()
            };
            let mut p = Poisson2DProblem::with_grid(n, n).unwrap();
            p.input = DMatrix::from_fn(n, n, |a, b| {
                -2.0 * std::f64::consts::PI.powi(2) * exact(a + 1, b + 1)
            });
            let sol = poisson_solve(&p, JacobiSettings::default()).unwrap();
            let mut err: f64 = 0.0;
            for a in 1..=n {
                for b in 1..=n {
                    err = err.max((sol.f[(a, b)] - exact(a, b)).abs());
                }
            }
            assert!(err < 2.0 * dx * dx);
            err
        })
        .collect();
    let ratio = errors[0] / errors[1];
    assert!(ratio > 3.5 && ratio < 4.5, "convergence ratio {ratio}");
}

#[test]
fn poisson_reference_matches_hand_stencil() {
    let p = Poisson2DProblem::with_grid(3, 3).unwrap();
    let field = poisson_solve(&p, JacobiSettings::default()).unwrap();
    let s = PoissonStream::new(&p, &field, vec![1e-4; 9]).unwrap();
    let z = s.measurements(4, 2);
    let dx2 = p.dx * p.dx;
    let hand = (z[(3, 2)] + z[(2, 3)] + z[(1, 2)] + z[(2, 1)] - 4.0 * z[(2, 2)]) / dx2;
    assert!((s.reference_at(4, 2, (2, 2)).unwrap() - hand).abs() < 1e-12);
    let corner = (z[(2, 1)] + z[(1, 2)] - 4.0 * z[(1, 1)]) / dx2;
    assert!((s.reference_at(4, 2, (1, 1)).unwrap() - corner).abs() < 1e-12);
    let b = s.batch(4, 2);
    assert!((b.d[4] - hand).abs() < 1e-12);
    assert_eq!(b.u[4][0], 1.0);
}

#[test]
fn poisson_design_snr_in_band() {
    let p = Poisson2DProblem::standard();
    let field = poisson_solve(&p, JacobiSettings::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = PoissonStream::noise_for_snr(&p, &mut rng, (20.0, 30.0)).unwrap();
    let dx4 = p.dx.powi(4);
    for (k, s2) in noise.iter().enumerate() {
        let h = p.input[(k / 11, k % 11)];
        let design = 10.0 * (h * h / (20.0 * s2 / dx4)).log10();
        assert!((20.0..=30.0).contains(&design), "node {k}: {design} dB");
    }
    let s = PoissonStream::new(&p, &field, noise).unwrap();
    // The effective SNR couples neighbours and may leave the band slightly.
    let snr: Vec<f64> = (0..121).map(|k| s.node_snr(k).db()).collect();
    let inside = snr.iter().filter(|v| (20.0..=30.0).contains(*v)).count();
    assert!(inside >= 110, "{inside} of 121 nodes in band");
    // Empirical reference noise matches the effective variance.
    let k = 60;
    let n = 20_000;
    let var = (0..n).map(|i| s.batch(3, i).v[k].powi(2)).sum::<f64>() / n as f64;
    assert!((var / s.effective_noise_variance(k) - 1.0).abs() < 0.05);
}
