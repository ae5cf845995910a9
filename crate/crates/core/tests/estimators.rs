use nalgebra::{DMatrix, DVector};
use sdlms_core::basis::BasisSet;
use sdlms_core::estimators::{
    atc_step, diffusion_step, run_trial, simulate, Algorithm, EstimatorState,
};
use sdlms_core::network::{CombinationPolicy, CombinationRule, NetworkGraph};
use sdlms_core::pde_model::{
    GaussianStream, GroundTruthModel, RegressorSpec, SampleBatch, SampleSource,
};
use sdlms_core::scenario::Scenario;

fn positions(n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64 / (n + 1) as f64).collect()
}

fn stream(n: usize, n_b: usize, noise: f64, seed: u64) -> (GaussianStream, BasisSet, DVector<f64>) {
    let basis = BasisSet::sample(&positions(n), 1.0, n_b).unwrap();
    let w = DVector::from_fn(2 * n_b, |j, _| ((j as f64 + 1.0) * 1.3 + seed as f64).sin());
    let truth = GroundTruthModel::from_global(&basis, 2, w.clone()).unwrap();
    let covs = (0..n)
        .map(|k| {
            let a = 1.0 + 0.3 * k as f64;
            DMatrix::from_row_slice(2, 2, &[a, 0.2, 0.2, 0.6 * a])
        })
        .collect();
    let spec = RegressorSpec::new(covs, vec![noise; n]).unwrap();
    (GaussianStream::new(truth, spec).unwrap(), basis, w)
}

#[test]
fn atc_matches_general_diffusion_bitwise() {
    let n = 5;
    let (src, basis, _) = stream(n, 3, 0.05, 1);
    let g = NetworkGraph::line(n).unwrap();
    let a = CombinationRule::Metropolis.left_stochastic(&g);
    let policy = CombinationPolicy::atc(a, Some(&g)).unwrap();
    let sc = Scenario::new(basis, 2, policy, vec![0.03; n]).unwrap();
    let mut s1 = EstimatorState::new(&sc);
    let mut s2 = EstimatorState::new(&sc);
    for i in 0..1000 {
        let b = src.batch(9, i);
        atc_step(&mut s1, &b, &sc).unwrap();
        diffusion_step(&mut s2, &b, &sc).unwrap();
        assert_eq!(s1.w(), s2.w(), "diverged at iteration {i}");
    }
}

#[test]
fn identity_policy_is_standalone_lms() {
    let n = 3;
    let (src, basis, _) = stream(n, 2, 0.1, 2);
    let sc = Scenario::new(basis.clone(), 2, CombinationPolicy::non_cooperative(n), vec![0.05; n])
        .unwrap();
    let mut state = EstimatorState::new(&sc);
    let mut manual = vec![DVector::<f64>::zeros(4); n];
    for i in 0..300 {
        let b = src.batch(4, i);
        diffusion_step(&mut state, &b, &sc).unwrap();
        for k in 0..n {
            let bk = basis.block_matrix(k, 2);
            let u = b.u[k].transpose();
            let e = b.d[k] - (&u * &bk * &manual[k])[0];
            manual[k] += bk.transpose() * u.transpose() * (0.05 * e);
        }
        for k in 0..n {
            assert!((&manual[k] - &state.w()[k]).amax() < 1e-12);
        }
    }
}

/// A source that perturbs the data of one node only.
struct Perturbed<'a> {
    inner: &'a GaussianStream,
    node: usize,
}

impl SampleSource for Perturbed<'_> {
    fn nodes(&self) -> usize {
        self.inner.nodes()
    }
    fn m(&self) -> usize {
        self.inner.m()
    }
    fn truth(&self) -> &[DVector<f64>] {
        self.inner.truth()
    }
    fn fill(&self, seed: u64, i: u64, batch: &mut SampleBatch) {
        self.inner.fill(seed, i, batch);
        batch.d[self.node] += 3.0;
        batch.u[self.node] *= -2.0;
    }
}

#[test]
fn non_cooperative_nodes_are_decoupled() {
    let n = 4;
    let (src, basis, w) = stream(n, 3, 0.05, 3);
    let sc = Scenario::new(basis, 2, CombinationPolicy::non_cooperative(n), vec![0.02; n]).unwrap();
    let base = run_trial(&sc, &src, Algorithm::Diffusion, 200, 5, Some(&w)).unwrap();
    let other = Perturbed { inner: &src, node: 2 };
    let pert = run_trial(&sc, &other, Algorithm::Diffusion, 200, 5, Some(&w)).unwrap();
    for i in 0..200 {
        for k in [0, 1, 3] {
            let idx = base.index(i, k);
            assert_eq!(base.msd_w[idx], pert.msd_w[idx]);
        }
        let idx = base.index(i, 2);
        if i > 0 {
            assert_ne!(base.msd_w[idx], pert.msd_w[idx]);
        }
    }
}

/// Relabels the nodes of a stream.
struct Relabeled<'a> {
    inner: &'a GaussianStream,
    perm: Vec<usize>,
    truth: Vec<DVector<f64>>,
}

impl SampleSource for Relabeled<'_> {
    fn nodes(&self) -> usize {
        self.inner.nodes()
    }
    fn m(&self) -> usize {
        self.inner.m()
    }
    fn truth(&self) -> &[DVector<f64>] {
        &self.truth
    }
    fn fill(&self, seed: u64, i: u64, batch: &mut SampleBatch) {
        let orig = self.inner.batch(seed, i);
        batch.iteration = i;
        for (new, &old) in self.perm.iter().enumerate() {
            batch.u[new] = orig.u[old].clone();
            batch.d[new] = orig.d[old];
            batch.v[new] = orig.v[old];
        }
    }
}

#[test]
fn node_order_does_not_matter() {
    let n = 5;
    let (src, basis, _) = stream(n, 2, 0.05, 4);
    let g = NetworkGraph::line(n).unwrap();
    let policy = CombinationPolicy::from_rules(
        &g,
        CombinationRule::Uniform,
        CombinationRule::Metropolis,
        CombinationRule::RelativeDegree,
    )
    .unwrap();
    let steps: Vec<f64> = (0..n).map(|k| 0.02 + 0.005 * k as f64).collect();
    let sc = Scenario::new(basis.clone(), 2, policy.clone(), steps.clone()).unwrap();

    // new label j carries old node perm[j]
    let perm = vec![3, 0, 4, 1, 2];
    let pm = |m: &DMatrix<f64>| DMatrix::from_fn(n, n, |a, b| m[(perm[a], perm[b])]);
    let policy_p = CombinationPolicy::new(pm(policy.a1()), pm(policy.a2()), pm(policy.c()), None)
        .unwrap();
    let basis_p = BasisSet::from_rows(perm.iter().map(|&k| basis.row(k).clone()).collect()).unwrap();
    let steps_p = perm.iter().map(|&k| steps[k]).collect();
    let sc_p = Scenario::new(basis_p, 2, policy_p, steps_p).unwrap();
    let src_p = Relabeled {
        inner: &src,
        perm: perm.clone(),
        truth: perm.iter().map(|&k| src.truth()[k].clone()).collect(),
    };

    let mut orig = Vec::new();
    simulate(&sc, &src, Algorithm::Diffusion, 100, 6, |r| orig.push(r.w.to_vec())).unwrap();
    let mut relabeled = Vec::new();
    simulate(&sc_p, &src_p, Algorithm::Diffusion, 100, 6, |r| relabeled.push(r.w.to_vec()))
        .unwrap();
    for (a, b) in orig.iter().zip(&relabeled) {
        for (new, &old) in perm.iter().enumerate() {
            assert!((&a[old] - &b[new]).amax() < 1e-12);
        }
    }
}

#[test]
fn noise_free_diffusion_recovers_truth() {
    // Enough nodes for every aggregated covariance to be full rank.
    let n = 5;
    let (src, basis, w) = stream(n, 2, 0.0, 5);
    let g = NetworkGraph::line(n).unwrap();
    let policy = CombinationPolicy::from_rules(
        &g,
        CombinationRule::Identity,
        CombinationRule::Metropolis,
        CombinationRule::Metropolis,
    )
    .unwrap();
    let sc = Scenario::new(basis, 2, policy, vec![0.05; n]).unwrap();
    let t = run_trial(&sc, &src, Algorithm::Diffusion, 10_000, 7, Some(&w)).unwrap();
    for k in 0..n {
        assert!(t.msd_w[t.index(9_999, k)] < 1e-10);
    }
}

#[test]
fn zero_step_with_identity_combination_freezes() {
    let n = 3;
    let (src, basis, _) = stream(n, 2, 0.1, 6);
    let g = NetworkGraph::line(n).unwrap();
    let policy = CombinationPolicy::from_rules(
        &g,
        CombinationRule::Identity,
        CombinationRule::Identity,
        CombinationRule::Metropolis,
    )
    .unwrap();
    let init: Vec<DVector<f64>> = (0..n).map(|k| DVector::from_element(4, k as f64)).collect();
    let sc = Scenario::new(basis, 2, policy, vec![0.0; n])
        .unwrap()
        .with_initial(init.clone())
        .unwrap();
    simulate(&sc, &src, Algorithm::Diffusion, 20, 1, |r| assert_eq!(r.w, &init[..])).unwrap();
}

#[test]
fn rejects_mismatched_batch() {
    let n = 3;
    let (_, basis, _) = stream(n, 2, 0.1, 7);
    let sc = Scenario::new(basis, 2, CombinationPolicy::non_cooperative(n), vec![0.1; n]).unwrap();
    let mut st = EstimatorState::new(&sc);
    let short = SampleBatch::zeros(2, 2);
    assert!(diffusion_step(&mut st, &short, &sc).is_err());
    let wrong_m = SampleBatch::zeros(3, 1);
    assert!(atc_step(&mut st, &wrong_m, &sc).is_err());
}
