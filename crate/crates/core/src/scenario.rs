//! Algorithm configuration shared by the estimators and the theory.

use nalgebra::DVector;

use crate::basis::BasisSet;
use crate::error::{check_len, Error, Result};
use crate::network::CombinationPolicy;

/// Basis, policy, step sizes and initial estimates of a diffusion network.
/// Estimates have length `M·N_b`; `block()` returns that length.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    basis: BasisSet,
    m: usize,
    policy: CombinationPolicy,
    step_sizes: Vec<f64>,
    initial: Vec<DVector<f64>>,
}

impl Scenario {
    /// Zero initial estimates at every node.
    pub fn new(
        basis: BasisSet,
        m: usize,
        policy: CombinationPolicy,
        step_sizes: Vec<f64>,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("parameter dimension M must be positive"));
        }
        let n = basis.nodes();
        check_len("combination policy nodes", n, policy.nodes())?;
        check_len("step sizes", n, step_sizes.len())?;
        if let Some((k, mu)) = step_sizes
            .iter()
            .enumerate()
            .find(|(_, mu)| !(mu.is_finite() && **mu >= 0.0))
        {
            return Err(Error::domain(format!("step size of node {k} is {mu}")));
        }
        let block = m * basis.count();
        Ok(Self {
            basis,
            m,
            policy,
            step_sizes,
            initial: vec![DVector::zeros(block); n],
        })
    }

    pub fn with_initial(mut self, initial: Vec<DVector<f64>>) -> Result<Self> {
        check_len("initial estimates", self.nodes(), initial.len())?;
        for w in &initial {
            check_len("initial estimate", self.block(), w.len())?;
        }
        self.initial = initial;
        Ok(self)
    }

    pub fn with_step_sizes(mut self, step_sizes: Vec<f64>) -> Result<Self> {
        let rebuilt = Self::new(self.basis, self.m, self.policy, step_sizes)?;
        let initial = std::mem::take(&mut self.initial);
        rebuilt.with_initial(initial)
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn nodes(&self) -> usize {
        self.basis.nodes()
    }

    /// `M·N_b`.
    pub fn block(&self) -> usize {
        self.m * self.basis.count()
    }

    pub fn policy(&self) -> &CombinationPolicy {
        &self.policy
    }

    pub fn step_sizes(&self) -> &[f64] {
        &self.step_sizes
    }

    pub fn initial(&self) -> &[DVector<f64>] {
        &self.initial
    }
}
