//! Training-stage Gibbs sampler.
//!
//! One sweep updates, in order: latent classes `z`, stick-breaking variables
//! and their concentrations, the sparse response probabilities `(delta,
//! theta)`, the sparsity levels `tau`, the baseline profiles `gamma`, the
//! per-domain CSMFs `pi`, and finally `(y, z)` for unlabeled training
//! records. Count tallies use observed symptoms only.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Draw, DrawProvenance, SciCheckpoint};
use crate::data::{compute_cause_domain_counts, validate_dataset, Dims, VaDataset};
use crate::error::{LcvaError, Result};
use crate::kernels::{
    draw_beta, draw_dirichlet_into, draw_gamma, ln_beta, normalize_logweights, pick_from_probs,
    RngStream,
};
use crate::state::{init_state, CsmfParams, HyperParams, ResponseParams, StickWeights};

/// Minimum records per rayon task in record-level fan-out.
const RECORD_CHUNK: usize = 256;

/// A training record in sampler form: 0-based domain, optional label and the
/// indices of observed yes/no symptoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub domain: usize,
    pub label: Option<usize>,
    pub yes: Vec<u32>,
    pub no: Vec<u32>,
}

impl Record {
    pub fn from_row(domain: usize, label: Option<usize>, row: &[Option<bool>]) -> Self {
        let mut yes = Vec::new();
        let mut no = Vec::new();
        for (j, v) in row.iter().enumerate() {
            match v {
                Some(true) => yes.push(j as u32),
                Some(false) => no.push(j as u32),
                None => {}
            }
        }
        Self {
            domain,
            label,
            yes,
            no,
        }
    }
}

pub(crate) fn dataset_records(ds: &VaDataset, pooled: bool) -> Vec<Record> {
    use crate::data::Response;
    (0..ds.len())
        .map(|i| {
            let row: Vec<Option<bool>> = ds
                .row(i)
                .into_iter()
                .map(|r| match r {
                    Response::Yes => Some(true),
                    Response::No => Some(false),
                    Response::Missing => None,
                })
                .collect();
            let domain = if pooled || ds.domains[i] == 0 {
                0
            } else {
                ds.domains[i] - 1
            };
            Record::from_row(domain, ds.causes[i], &row)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainData {
    pub dims: Dims,
    pub records: Vec<Record>,
}

impl TrainData {
    pub fn new(dims: Dims, records: Vec<Record>) -> Result<Self> {
        dims.check()?;
        for (i, r) in records.iter().enumerate() {
            if r.domain >= dims.domains || r.label.is_some_and(|c| c >= dims.causes) {
                return Err(LcvaError::Validation(format!(
                    "record {i} has labels outside {dims}"
                )));
            }
            if r.yes.iter().chain(&r.no).any(|&j| j as usize >= dims.symptoms) {
                return Err(LcvaError::StructuralMismatch(format!(
                    "record {i} references a symptom beyond P={}",
                    dims.symptoms
                )));
            }
        }
        Ok(Self { dims, records })
    }

    /// Training-domain records of `ds` (`d >= 1`).
    pub fn from_dataset(ds: &VaDataset, classes: usize, pooled: bool) -> Result<Self> {
        let train = ds.training_part();
        let domains = if pooled { 1 } else { ds.num_domains() };
        let dims = Dims::new(ds.num_causes(), classes, ds.num_symptoms(), domains)?;
        Self::new(dims, dataset_records(&train, pooled))
    }

    pub fn has_unlabeled(&self) -> bool {
        self.records.iter().any(|r| r.label.is_none())
    }
}

/// Per-record latent assignments. Labeled records keep `y` equal to their
/// label throughout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainAssignments {
    pub y: Vec<usize>,
    pub z: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ChainState {
    pub response: ResponseParams,
    pub sticks: StickWeights,
    pub csmf: CsmfParams,
    pub assign: TrainAssignments,
}

/// Options that pin parts of the model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pins {
    /// Fix `tau = 0`, hence `delta = 0` and `theta = gamma`: the
    /// conditional-independence model.
    pub tau_zero: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub chains: usize,
    pub thin: usize,
    pub seed: u64,
    pub classes: usize,
    pub pooled: bool,
    pub pins: Pins,
    pub hyperparams: HyperParams,
}

impl Default for TrainChainConfig {
    fn default() -> Self {
        Self {
            iterations: 4000,
            burn_in: 2000,
            chains: 6,
            thin: 1,
            seed: 1,
            classes: 3,
            pooled: false,
            pins: Pins::default(),
            hyperparams: HyperParams::default(),
        }
    }
}

impl TrainChainConfig {
    pub fn check(&self) -> Result<()> {
        if self.iterations == 0 || self.chains == 0 || self.thin == 0 || self.classes == 0 {
            return Err(LcvaError::InvalidParameter(
                "iterations, chains, thin and classes must be positive".into(),
            ));
        }
        if self.burn_in >= self.iterations {
            return Err(LcvaError::InvalidParameter(format!(
                "burn-in {} must be below iterations {}",
                self.burn_in, self.iterations
            )));
        }
        self.hyperparams.check()
    }
}

/// Sufficient statistics of the current allocations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counts {
    /// `n[g][c][k]`, `G x C x K`.
    pub class: Vec<usize>,
    /// `n[g][c]`, `G x C`.
    pub cause: Vec<usize>,
    /// Observed yes counts `n[c][k][j]`, `C x K x P`.
    pub yes: Vec<usize>,
    /// Observed no counts `n[c][k][j]`, `C x K x P`.
    pub no: Vec<usize>,
}

impl Counts {
    pub fn zeros(dims: &Dims) -> Self {
        Self {
            class: vec![0; dims.lambda_len()],
            cause: vec![0; dims.domains * dims.causes],
            yes: vec![0; dims.theta_len()],
            no: vec![0; dims.theta_len()],
        }
    }

    pub fn tally(&mut self, data: &TrainData, assign: &TrainAssignments) {
        let d = &data.dims;
        let (c_n, k_n, p) = (d.causes, d.classes, d.symptoms);
        self.class.iter_mut().for_each(|x| *x = 0);
        self.cause.iter_mut().for_each(|x| *x = 0);
        self.yes.iter_mut().for_each(|x| *x = 0);
        self.no.iter_mut().for_each(|x| *x = 0);
        for (i, r) in data.records.iter().enumerate() {
            let (c, k) = (assign.y[i], assign.z[i]);
            self.class[(r.domain * c_n + c) * k_n + k] += 1;
            self.cause[r.domain * c_n + c] += 1;
            let base = (c * k_n + k) * p;
            for &j in &r.yes {
                self.yes[base + j as usize] += 1;
            }
            for &j in &r.no {
                self.no[base + j as usize] += 1;
            }
        }
    }
}

/// Cached `ln(theta)` and `ln(1 - theta)`.
#[derive(Debug, Clone, Default)]
pub struct LogTheta {
    pub yes: Vec<f64>,
    pub no: Vec<f64>,
}

impl LogTheta {
    pub fn from_theta(theta: &[f64]) -> Self {
        let mut lt = Self::default();
        lt.refresh(theta);
        lt
    }

    pub fn refresh(&mut self, theta: &[f64]) {
        self.yes.clear();
        self.no.clear();
        self.yes.extend(theta.iter().map(|t| t.ln()));
        self.no.extend(theta.iter().map(|t| (-t).ln_1p()));
    }

    /// `sum_j log p(x_j | theta[c][k][.])` over the record's observed
    /// symptoms, for every class `k`.
    #[inline]
    pub fn class_loglik(&self, dims: &Dims, c: usize, yes: &[u32], no: &[u32], out: &mut [f64]) {
        let (k_n, p) = (dims.classes, dims.symptoms);
        for (k, o) in out.iter_mut().enumerate().take(k_n) {
            let base = (c * k_n + k) * p;
            let ly = &self.yes[base..base + p];
            let ln = &self.no[base..base + p];
            let mut s = 0.0;
            for &j in yes {
                s += ly[j as usize];
            }
            for &j in no {
                s += ln[j as usize];
            }
            *o = s;
        }
    }
}

/// Step 1: latent class of every record given its current cause. Returns the
/// per-record `log p(x_i | y_i)` summed in record order.
pub fn step_sample_z(
    dims: &Dims,
    records: &[Record],
    y: &[usize],
    z: &mut [usize],
    lambda: &[f64],
    log_theta: &LogTheta,
    key: u64,
) -> f64 {
    let (c_n, k_n) = (dims.causes, dims.classes);
    let mut lls = vec![0.0; records.len()];
    records
        .par_iter()
        .zip(z.par_iter_mut())
        .zip(lls.par_iter_mut())
        .enumerate()
        .with_min_len(RECORD_CHUNK)
        .for_each_init(
            || vec![0.0; k_n],
            |w, (i, ((r, zi), ll))| {
                let c = y[i];
                log_theta.class_loglik(dims, c, &r.yes, &r.no, w);
                let lam = &lambda[(r.domain * c_n + c) * k_n..][..k_n];
                for (wk, l) in w.iter_mut().zip(lam) {
                    *wk += l.ln();
                }
                *ll = normalize_logweights(w).unwrap_or(f64::NAN);
                let mut rng = RngStream::substream(key, i as u64);
                *zi = pick_from_probs(w, rng.random::<f64>());
            },
        );
    lls.iter().sum()
}

/// `(a, b)` of the Beta full conditional for each stick `k < K - 1`.
pub fn sticks_conditional(class_counts: &[usize], omega: f64) -> Vec<(f64, f64)> {
    let k_n = class_counts.len();
    (0..k_n.saturating_sub(1))
        .map(|k| {
            let tail: usize = class_counts[k + 1..].iter().sum();
            (1.0 + class_counts[k] as f64, omega + tail as f64)
        })
        .collect()
}

/// `(shape, rate)` of the Gamma full conditional of the stick concentration.
pub fn omega_conditional(v: &[f64], hp: &HyperParams) -> (f64, f64) {
    let s: f64 = v.iter().map(|x| (-x).ln_1p()).sum();
    (hp.a_omega + v.len() as f64, hp.b_omega - s)
}

/// Step 2: sticks `V` then concentrations `omega`, for every (domain, cause)
/// row; lambda is refreshed afterwards.
pub fn step_sample_sticks<R: Rng + ?Sized>(
    dims: &Dims,
    class_counts: &[usize],
    sticks: &mut StickWeights,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<()> {
    let k_n = dims.classes;
    let rows = dims.domains * dims.causes;
    for row in 0..rows {
        let counts = &class_counts[row * k_n..(row + 1) * k_n];
        let v = &mut sticks.v[row * (k_n - 1)..(row + 1) * (k_n - 1)];
        for (vk, (a, b)) in v.iter_mut().zip(sticks_conditional(counts, sticks.omega[row])) {
            *vk = draw_beta(a, b, rng)?;
        }
        let (shape, rate) = omega_conditional(v, hp);
        sticks.omega[row] = draw_gamma(shape, rate, rng)?;
    }
    sticks.refresh_lambda(dims);
    Ok(())
}

/// Posterior probability that a response probability departs from its
/// baseline, with `phi` integrated out. Computed in log-Beta space.
pub fn inclusion_probability(n_yes: usize, n_no: usize, gamma: f64, tau: f64, nu_phi: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    if tau >= 1.0 {
        return 1.0;
    }
    let (n1, n0) = (n_yes as f64, n_no as f64);
    let slab = tau.ln() + ln_beta(1.0 + n1, nu_phi + n0);
    let spike = (-tau).ln_1p() + ln_beta(1.0, nu_phi) + n1 * gamma.ln() + n0 * (-gamma).ln_1p();
    // 1 / (1 + exp(spike - slab))
    let diff = spike - slab;
    if diff > 0.0 {
        let e = (-diff).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + diff.exp())
    }
}

/// Steps 3-4: `delta ~ Bern(pi_tilde)`, then `phi` from its conditional
/// (slab posterior when `delta = 1`, prior otherwise) and `theta` composed.
pub fn step_sample_theta_delta<R: Rng + ?Sized>(
    dims: &Dims,
    counts: &Counts,
    response: &mut ResponseParams,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<()> {
    let (k_n, p) = (dims.classes, dims.symptoms);
    for idx in 0..dims.theta_len() {
        let c = idx / (k_n * p);
        let j = idx % p;
        let g = response.gamma[c * p + j];
        let (n1, n0) = (counts.yes[idx], counts.no[idx]);
        let prob = inclusion_probability(n1, n0, g, response.tau[c], hp.nu_phi);
        let on = prob > 0.0 && rng.random::<f64>() < prob;
        response.delta[idx] = on;
        if on {
            let phi = draw_beta(1.0 + n1 as f64, hp.nu_phi + n0 as f64, rng)?;
            response.phi[idx] = phi;
            response.theta[idx] = phi;
        } else {
            if prob > 0.0 {
                response.phi[idx] = draw_beta(1.0, hp.nu_phi, rng)?;
            }
            response.theta[idx] = g;
        }
    }
    Ok(())
}

pub fn tau_conditional(delta: &[bool], hp: &HyperParams) -> (f64, f64) {
    let on = delta.iter().filter(|d| **d).count() as f64;
    let off = delta.len() as f64 - on;
    (1.0 + on, hp.nu_tau + off)
}

/// Step 5.
pub fn step_sample_tau<R: Rng + ?Sized>(
    dims: &Dims,
    response: &mut ResponseParams,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<()> {
    let block = dims.classes * dims.symptoms;
    for c in 0..dims.causes {
        let (a, b) = tau_conditional(&response.delta[c * block..(c + 1) * block], hp);
        response.tau[c] = draw_beta(a, b, rng)?;
    }
    Ok(())
}

/// `(a, b)` of the baseline's Beta full conditional for cause `c`, symptom
/// `j`: observed responses of cause-`c` records whose class leaves `j` at
/// the baseline.
pub fn gamma_conditional(
    dims: &Dims,
    counts: &Counts,
    delta: &[bool],
    c: usize,
    j: usize,
    hp: &HyperParams,
) -> (f64, f64) {
    let (k_n, p) = (dims.classes, dims.symptoms);
    let (mut yes, mut no) = (0usize, 0usize);
    for k in 0..k_n {
        let idx = (c * k_n + k) * p + j;
        if !delta[idx] {
            yes += counts.yes[idx];
            no += counts.no[idx];
        }
    }
    (hp.a_gamma + yes as f64, hp.b_gamma + no as f64)
}

/// Step 6. Every `theta` entry with `delta = 0` follows the new baseline.
pub fn step_sample_gamma<R: Rng + ?Sized>(
    dims: &Dims,
    counts: &Counts,
    response: &mut ResponseParams,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<()> {
    let (k_n, p) = (dims.classes, dims.symptoms);
    for c in 0..dims.causes {
        for j in 0..p {
            let (a, b) = gamma_conditional(dims, counts, &response.delta, c, j, hp);
            let g = draw_beta(a, b, rng)?;
            response.gamma[c * p + j] = g;
            for k in 0..k_n {
                let idx = (c * k_n + k) * p + j;
                if !response.delta[idx] {
                    response.theta[idx] = g;
                }
            }
        }
    }
    Ok(())
}

/// Step 7: `pi[g] ~ Dirichlet(alpha_pi + n[g][.])`.
pub fn step_sample_pi<R: Rng + ?Sized>(
    dims: &Dims,
    cause_counts: &[usize],
    csmf: &mut CsmfParams,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<()> {
    let c_n = dims.causes;
    let mut alpha = vec![0.0; c_n];
    for g in 0..dims.domains {
        for (a, &n) in alpha.iter_mut().zip(&cause_counts[g * c_n..(g + 1) * c_n]) {
            *a = hp.alpha_pi + n as f64;
        }
        draw_dirichlet_into(&alpha, rng, &mut csmf.pi[g * c_n..(g + 1) * c_n])?;
    }
    Ok(())
}

/// Joint `(y, z)` update for unlabeled training records over the `C x K`
/// grid. Labeled records are left untouched.
pub fn step_sample_yz_unlabeled(
    dims: &Dims,
    records: &[Record],
    assign: &mut TrainAssignments,
    pi: &[f64],
    lambda: &[f64],
    log_theta: &LogTheta,
    key: u64,
) {
    let (c_n, k_n) = (dims.causes, dims.classes);
    records
        .par_iter()
        .zip(assign.y.par_iter_mut().zip(assign.z.par_iter_mut()))
        .enumerate()
        .with_min_len(RECORD_CHUNK)
        .for_each_init(
            || vec![0.0; c_n * k_n],
            |w, (i, (r, (yi, zi)))| {
                if r.label.is_some() {
                    return;
                }
                for c in 0..c_n {
                    let cell = &mut w[c * k_n..(c + 1) * k_n];
                    log_theta.class_loglik(dims, c, &r.yes, &r.no, cell);
                    let lp = pi[r.domain * c_n + c].ln();
                    let lam = &lambda[(r.domain * c_n + c) * k_n..][..k_n];
                    for (wk, l) in cell.iter_mut().zip(lam) {
                        *wk += lp + l.ln();
                    }
                }
                if normalize_logweights(w).is_err() {
                    return;
                }
                let mut rng = RngStream::substream(key, i as u64);
                let cell = pick_from_probs(w, rng.random::<f64>());
                *yi = cell / k_n;
                *zi = cell % k_n;
            },
        );
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub sweep: usize,
    pub loglik: f64,
    pub mean_tau: f64,
    pub mean_omega: f64,
}

/// Reusable scratch for sweeping one chain.
#[derive(Debug, Clone)]
pub struct TrainSampler {
    pub dims: Dims,
    pub hp: HyperParams,
    pub pins: Pins,
    pub counts: Counts,
    log_theta: LogTheta,
}

impl TrainSampler {
    pub fn new(dims: Dims, hp: HyperParams, pins: Pins) -> Self {
        Self {
            dims,
            hp,
            pins,
            counts: Counts::zeros(&dims),
            log_theta: LogTheta::default(),
        }
    }

    /// Draws a starting state from the prior. Unlabeled records get an
    /// initial joint `(y, z)` draw from that state.
    pub fn init_chain(&mut self, data: &TrainData, rng: &mut RngStream) -> Result<ChainState> {
        let (mut response, sticks, csmf) = init_state(&self.dims, &self.hp, rng)?;
        if self.pins.tau_zero {
            response.tau.iter_mut().for_each(|t| *t = 0.0);
            response.delta.iter_mut().for_each(|d| *d = false);
            response.compose_theta(&self.dims);
        }
        let n = data.records.len();
        let mut assign = TrainAssignments {
            y: data.records.iter().map(|r| r.label.unwrap_or(0)).collect(),
            z: vec![0; n],
        };
        if data.has_unlabeled() {
            self.log_theta.refresh(&response.theta);
            let key = rng.random::<u64>();
            step_sample_yz_unlabeled(
                &self.dims,
                &data.records,
                &mut assign,
                &csmf.pi,
                &sticks.lambda,
                &self.log_theta,
                key,
            );
        }
        Ok(ChainState {
            response,
            sticks,
            csmf,
            assign,
        })
    }

    /// One full sweep. Returns the log-likelihood of the observed symptoms
    /// given the causes at the start of the sweep.
    pub fn sweep(
        &mut self,
        state: &mut ChainState,
        data: &TrainData,
        rng: &mut RngStream,
    ) -> Result<f64> {
        let dims = self.dims;
        self.log_theta.refresh(&state.response.theta);
        let key = rng.random::<u64>();
        let loglik = step_sample_z(
            &dims,
            &data.records,
            &state.assign.y,
            &mut state.assign.z,
            &state.sticks.lambda,
            &self.log_theta,
            key,
        );
        self.counts.tally(data, &state.assign);
        step_sample_sticks(&dims, &self.counts.class, &mut state.sticks, &self.hp, rng)?;
        if !self.pins.tau_zero {
            step_sample_theta_delta(&dims, &self.counts, &mut state.response, &self.hp, rng)?;
            step_sample_tau(&dims, &mut state.response, &self.hp, rng)?;
        }
        step_sample_gamma(&dims, &self.counts, &mut state.response, &self.hp, rng)?;
        step_sample_pi(&dims, &self.counts.cause, &mut state.csmf, &self.hp, rng)?;
        if data.has_unlabeled() {
            self.log_theta.refresh(&state.response.theta);
            let key = rng.random::<u64>();
            step_sample_yz_unlabeled(
                &dims,
                &data.records,
                &mut state.assign,
                &state.csmf.pi,
                &state.sticks.lambda,
                &self.log_theta,
                key,
            );
        }
        Ok(loglik)
    }
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub draws: Vec<Draw>,
    pub trace: Vec<TraceRow>,
}

/// Runs one chain on stream `(config.seed, chain)`.
pub fn run_chain(data: &TrainData, config: &TrainChainConfig, chain: usize) -> Result<ChainOutput> {
    let mut rng = RngStream::new(config.seed, chain as u64);
    let mut sampler = TrainSampler::new(data.dims, config.hyperparams, config.pins);
    let mut state = sampler.init_chain(data, &mut rng)?;
    let mut draws = Vec::new();
    let mut trace = Vec::with_capacity(config.iterations);
    for sweep in 0..config.iterations {
        let loglik = sampler.sweep(&mut state, data, &mut rng)?;
        if !loglik.is_finite() {
            return Err(LcvaError::NonFiniteLikelihood { chain, sweep });
        }
        let tau = &state.response.tau;
        let omega = &state.sticks.omega;
        trace.push(TraceRow {
            sweep,
            loglik,
            mean_tau: tau.iter().sum::<f64>() / tau.len() as f64,
            mean_omega: omega.iter().sum::<f64>() / omega.len() as f64,
        });
        if sweep >= config.burn_in && (sweep - config.burn_in).is_multiple_of(config.thin) {
            draws.push(Draw {
                theta: state.response.theta.clone(),
                lambda: state.sticks.lambda.clone(),
                provenance: DrawProvenance {
                    chain: chain as u32,
                    iteration: sweep as u32,
                },
            });
        }
    }
    Ok(ChainOutput { draws, trace })
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoint: SciCheckpoint,
    pub traces: Vec<Vec<TraceRow>>,
}

/// Validates `ds`, runs all chains in parallel on the current rayon pool and
/// concatenates their post-burn-in draws in chain order.
pub fn run_training(ds: &VaDataset, config: &TrainChainConfig) -> Result<TrainOutput> {
    config.check()?;
    let train = ds.training_part();
    if train.is_empty() {
        return Err(LcvaError::Empty("no training-domain records".into()));
    }
    let full_dims = Dims::new(
        ds.num_causes(),
        config.classes,
        ds.num_symptoms(),
        ds.num_domains().max(1),
    )?;
    validate_dataset(&train, &full_dims)?.into_result()?;
    let data = TrainData::from_dataset(ds, config.classes, config.pooled)?;
    let dims = data.dims;

    let outputs = (0..config.chains)
        .into_par_iter()
        .map(|chain| run_chain(&data, config, chain))
        .collect::<Vec<_>>();
    let mut draws = Vec::new();
    let mut traces = Vec::new();
    for out in outputs {
        let out = out?;
        draws.extend(out.draws);
        traces.push(out.trace);
    }

    let (domain_labels, cause_domain) = if config.pooled {
        let pooled = train.pooled();
        let m = compute_cause_domain_counts(&pooled, &dims);
        (pooled.domain_labels, m)
    } else {
        (ds.domain_labels.clone(), compute_cause_domain_counts(&train, &dims))
    };
    let checkpoint = SciCheckpoint {
        dims,
        symptom_names: ds.symptom_names.clone(),
        cause_labels: ds.cause_labels.clone(),
        domain_labels,
        cause_domain,
        hyperparams: config.hyperparams,
        pooled: config.pooled,
        draws,
    };
    checkpoint.validate()?;
    Ok(TrainOutput { checkpoint, traces })
}

/// Runs `f` on a dedicated rayon pool with `threads` workers (0 picks the
/// rayon default, one per core).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| LcvaError::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::lambda_from_sticks;

    fn dims(c: usize, k: usize, p: usize, g: usize) -> Dims {
        Dims::new(c, k, p, g).unwrap()
    }

    #[test]
    fn single_class_z_is_always_zero() {
        let d = dims(2, 1, 3, 1);
        let recs = vec![Record::from_row(0, Some(1), &[Some(true), None, Some(false)]); 50];
        let y = vec![1; 50];
        let mut z = vec![7; 50];
        let lt = LogTheta::from_theta(&[0.3; 6]);
        let ll = step_sample_z(&d, &recs, &y, &mut z, &[1.0, 1.0], &lt, 3);
        assert!(z.iter().all(|&k| k == 0));
        assert!((ll - 50.0 * (0.3f64.ln() + 0.7f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn identical_classes_follow_lambda() {
        let d = dims(2, 2, 3, 1);
        let n = 40_000;
        let recs = vec![Record::from_row(0, Some(0), &[Some(true), Some(false), None]); n];
        let y = vec![0; n];
        let mut z = vec![0; n];
        let lt = LogTheta::from_theta(&[0.4; 12]);
        let lambda = [0.3, 0.7, 0.5, 0.5];
        step_sample_z(&d, &recs, &y, &mut z, &lambda, &lt, 11);
        let frac = z.iter().filter(|&&k| k == 1).count() as f64 / n as f64;
        assert!((frac - 0.7).abs() < 0.01, "{frac}");
    }

    #[test]
    fn fully_missing_record_uses_lambda_only() {
        let d = dims(2, 2, 2, 1);
        let n = 40_000;
        let recs = vec![Record::from_row(0, Some(1), &[None, None]); n];
        let mut z = vec![0; n];
        let theta = [0.1, 0.9, 0.8, 0.2, 0.5, 0.6, 0.7, 0.01];
        let lt = LogTheta::from_theta(&theta);
        step_sample_z(&d, &recs, &vec![1; n], &mut z, &[0.5, 0.5, 0.2, 0.8], &lt, 5);
        let frac = z.iter().filter(|&&k| k == 1).count() as f64 / n as f64;
        assert!((frac - 0.8).abs() < 0.01);
    }

    #[test]
    fn stick_conditional_parameters() {
        assert_eq!(sticks_conditional(&[0, 0, 0], 2.0), vec![(1.0, 2.0), (1.0, 2.0)]);
        assert_eq!(sticks_conditional(&[5, 0], 1.0), vec![(6.0, 1.0)]);
        assert_eq!(sticks_conditional(&[3], 1.0), vec![]);
        let hp = HyperParams::default();
        let (shape, rate) = omega_conditional(&[0.5, 0.75], &hp);
        assert_eq!(shape, 3.0);
        assert!((rate - (1.0 - 0.5f64.ln() - 0.25f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn single_class_sticks_stay_degenerate() {
        let d = dims(2, 1, 1, 2);
        let mut sticks = StickWeights {
            v: vec![],
            omega: vec![1.0; 4],
            lambda: vec![1.0; 4],
        };
        let mut rng = RngStream::new(1, 0);
        step_sample_sticks(&d, &[3, 4, 5, 6], &mut sticks, &HyperParams::default(), &mut rng)
            .unwrap();
        assert_eq!(sticks.lambda, vec![1.0; 4]);
    }

    #[test]
    fn inclusion_probability_cases() {
        assert!((inclusion_probability(0, 0, 0.3, 0.5, 1.0) - 0.5).abs() < 1e-15);
        assert_eq!(inclusion_probability(4, 2, 0.3, 0.0, 1.0), 0.0);
        // direct arithmetic: B(4,2) = 1/20, B(1,1) = 1
        let num = 0.3 * (1.0 / 20.0);
        let den = num + 0.7 * 0.6f64.powi(3) * 0.4;
        let expect = num / den;
        let got = inclusion_probability(3, 1, 0.6, 0.3, 1.0);
        assert!(((got - expect) / expect).abs() < 1e-12);
        let big = inclusion_probability(5000, 4000, 0.2, 0.5, 1.0);
        assert!(big.is_finite() && big > 0.999);
    }

    #[test]
    fn tau_conditional_counts() {
        let hp = HyperParams::default();
        assert_eq!(tau_conditional(&[true; 10], &hp), (11.0, 1.0));
        assert_eq!(tau_conditional(&[false; 10], &hp), (1.0, 11.0));
        let mixed = [true, true, true, true, false, false, false, false, false, false];
        assert_eq!(tau_conditional(&mixed, &hp), (5.0, 7.0));
    }

    #[test]
    fn gamma_conditional_counts_baseline_cells_only() {
        let d = dims(2, 2, 1, 1);
        let mut counts = Counts::zeros(&d);
        counts.yes = vec![4, 0, 9, 9];
        counts.no = vec![6, 0, 9, 9];
        let hp = HyperParams::default();
        assert_eq!(gamma_conditional(&d, &counts, &[false; 4], 0, 0, &hp), (5.0, 7.0));
        let delta = [true, true, false, false];
        assert_eq!(gamma_conditional(&d, &counts, &delta, 0, 0, &hp), (1.0, 1.0));
    }

    #[test]
    fn pinned_tau_collapses_theta_to_gamma() {
        let d = dims(2, 3, 4, 1);
        let mut sampler = TrainSampler::new(d, HyperParams::default(), Pins { tau_zero: true });
        let recs: Vec<Record> = (0..30)
            .map(|i| {
                Record::from_row(0, Some(i % 2), &[Some(i % 3 == 0), Some(true), None, Some(false)])
            })
            .collect();
        let data = TrainData::new(d, recs).unwrap();
        let mut rng = RngStream::new(4, 0);
        let mut state = sampler.init_chain(&data, &mut rng).unwrap();
        for _ in 0..20 {
            sampler.sweep(&mut state, &data, &mut rng).unwrap();
            assert!(state.response.delta.iter().all(|d| !d));
            assert!(state.response.is_consistent(&d));
        }
    }

    #[test]
    fn lambda_refresh_matches_sticks() {
        let d = dims(2, 3, 1, 1);
        let mut sticks = StickWeights {
            v: vec![0.5, 0.5, 0.2, 0.9],
            omega: vec![1.0, 1.0],
            lambda: vec![0.0; 6],
        };
        sticks.refresh_lambda(&d);
        assert_eq!(&sticks.lambda[..3], lambda_from_sticks(&[0.5, 0.5]).as_slice());
    }
}
