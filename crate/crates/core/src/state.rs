//! Model parameter containers and prior initialization.
//!
//! All arrays are flat and row-major: `theta[c][k][j]` lives at
//! `(c * K + k) * P + j`, `lambda[g][c][k]` at `(g * C + c) * K + k`, with
//! `g` 0-based over the training domains.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dims;
use crate::error::{LcvaError, Result};
use crate::kernels::{draw_beta, draw_dirichlet_into, draw_gamma};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub nu_phi: f64,
    pub a_gamma: f64,
    pub b_gamma: f64,
    pub nu_tau: f64,
    pub a_omega: f64,
    pub b_omega: f64,
    pub alpha_pi: f64,
    pub alpha_eta: f64,
    /// Target CSMF concentration is `alpha_pi_target_scale * n0 / C`.
    pub alpha_pi_target_scale: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            nu_phi: 1.0,
            a_gamma: 1.0,
            b_gamma: 1.0,
            nu_tau: 1.0,
            a_omega: 1.0,
            b_omega: 1.0,
            alpha_pi: 1.0,
            alpha_eta: 1.0,
            alpha_pi_target_scale: 0.1,
        }
    }
}

impl HyperParams {
    pub fn check(&self) -> Result<()> {
        let all = [
            ("nu_phi", self.nu_phi),
            ("a_gamma", self.a_gamma),
            ("b_gamma", self.b_gamma),
            ("nu_tau", self.nu_tau),
            ("a_omega", self.a_omega),
            ("b_omega", self.b_omega),
            ("alpha_pi", self.alpha_pi),
            ("alpha_eta", self.alpha_eta),
            ("alpha_pi_target_scale", self.alpha_pi_target_scale),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LcvaError::InvalidParameter(format!(
                    "hyperparameter {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Sparse response probabilities: `theta = delta ? phi : gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseParams {
    pub theta: Vec<f64>,
    pub delta: Vec<bool>,
    pub phi: Vec<f64>,
    pub gamma: Vec<f64>,
    pub tau: Vec<f64>,
}

impl ResponseParams {
    /// Recomputes `theta` from `delta`, `phi` and `gamma`.
    pub fn compose_theta(&mut self, dims: &Dims) {
        let (k_n, p) = (dims.classes, dims.symptoms);
        for (idx, t) in self.theta.iter_mut().enumerate() {
            let c = idx / (k_n * p);
            let j = idx % p;
            *t = if self.delta[idx] {
                self.phi[idx]
            } else {
                self.gamma[c * p + j]
            };
        }
    }

    pub fn is_consistent(&self, dims: &Dims) -> bool {
        let (k_n, p) = (dims.classes, dims.symptoms);
        self.theta.iter().enumerate().all(|(idx, &t)| {
            let c = idx / (k_n * p);
            let j = idx % p;
            let expect = if self.delta[idx] {
                self.phi[idx]
            } else {
                self.gamma[c * p + j]
            };
            t == expect && t > 0.0 && t < 1.0
        })
    }
}

/// Stick-breaking variables and the mixing weights derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct StickWeights {
    /// `G x C x (K-1)`.
    pub v: Vec<f64>,
    /// `G x C`.
    pub omega: Vec<f64>,
    /// `G x C x K`.
    pub lambda: Vec<f64>,
}

impl StickWeights {
    pub fn refresh_lambda(&mut self, dims: &Dims) {
        let k_n = dims.classes;
        let rows = self.lambda.len() / k_n;
        for r in 0..rows {
            let v = &self.v[r * (k_n - 1)..(r + 1) * (k_n - 1)];
            lambda_from_sticks_into(v, &mut self.lambda[r * k_n..(r + 1) * k_n]);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsmfParams {
    /// `G x C`.
    pub pi: Vec<f64>,
}

/// `lambda_k = v_k * prod_{l<k} (1 - v_l)`, with the last class taking the
/// remaining stick.
pub fn lambda_from_sticks(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len() + 1];
    lambda_from_sticks_into(v, &mut out);
    out
}

pub fn lambda_from_sticks_into(v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(out.len(), v.len() + 1);
    let mut remaining = 1.0;
    for (o, &vk) in out.iter_mut().zip(v) {
        *o = vk * remaining;
        remaining *= 1.0 - vk;
    }
    out[v.len()] = remaining;
}

pub fn is_simplex(v: &[f64], tol: f64) -> bool {
    v.iter().all(|&x| x >= 0.0) && (v.iter().sum::<f64>() - 1.0).abs() <= tol
}

/// Draws every parameter from its prior.
pub fn init_state<R: Rng + ?Sized>(
    dims: &Dims,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<(ResponseParams, StickWeights, CsmfParams)> {
    dims.check()?;
    hp.check()?;
    let (c_n, k_n, p, g_n) = (dims.causes, dims.classes, dims.symptoms, dims.domains);

    let tau = (0..c_n)
        .map(|_| draw_beta(1.0, hp.nu_tau, rng))
        .collect::<Result<Vec<_>>>()?;
    let gamma = (0..c_n * p)
        .map(|_| draw_beta(hp.a_gamma, hp.b_gamma, rng))
        .collect::<Result<Vec<_>>>()?;
    let mut phi = vec![0.0; dims.theta_len()];
    let mut delta = vec![false; dims.theta_len()];
    for (c, &tau_c) in tau.iter().enumerate() {
        for idx in c * k_n * p..(c + 1) * k_n * p {
            delta[idx] = rng.random::<f64>() < tau_c;
            phi[idx] = draw_beta(1.0, hp.nu_phi, rng)?;
        }
    }
    let mut response = ResponseParams {
        theta: vec![0.0; dims.theta_len()],
        delta,
        phi,
        gamma,
        tau,
    };
    response.compose_theta(dims);

    let omega = (0..g_n * c_n)
        .map(|_| draw_gamma(hp.a_omega, hp.b_omega, rng))
        .collect::<Result<Vec<_>>>()?;
    let mut v = vec![0.0; g_n * c_n * (k_n - 1)];
    for (row, &w) in omega.iter().enumerate() {
        for k in 0..k_n - 1 {
            v[row * (k_n - 1) + k] = draw_beta(1.0, w, rng)?;
        }
    }
    let mut sticks = StickWeights {
        v,
        omega,
        lambda: vec![0.0; dims.lambda_len()],
    };
    sticks.refresh_lambda(dims);

    let mut pi = vec![0.0; g_n * c_n];
    let alpha = vec![hp.alpha_pi; c_n];
    for g in 0..g_n {
        draw_dirichlet_into(&alpha, rng, &mut pi[g * c_n..(g + 1) * c_n])?;
    }
    Ok((response, sticks, CsmfParams { pi }))
}
