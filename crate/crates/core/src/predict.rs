//! Prediction-stage sampler for an unlabeled target domain.
//!
//! Each sweep resamples a stored training draw of `(theta, lambda)`, updates
//! the variant's weight parameters (domain mixture `eta` or target sticks),
//! draws `(y, z[, d])` for every target record and finally the target CSMF.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::SciCheckpoint;
use crate::data::{validate_dataset, Dims, VaDataset};
use crate::error::{LcvaError, Result};
use crate::kernels::{draw_dirichlet_into, normalize_logweights, pick_from_probs, RngStream};
use crate::state::{HyperParams, StickWeights};
use crate::train::{dataset_records, step_sample_sticks, LogTheta, Record};

/// Floor applied to every Dirichlet pseudo-count in this stage.
pub const ALPHA_FLOOR: f64 = 1e-3;

const RECORD_CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetVariant {
    /// Target mixing weights equal the pooled training weights.
    SingleConstant,
    /// Target mixing weights get their own stick-breaking prior.
    SingleNewWeights,
    /// Target weights are one domain-level mixture of training weights.
    MultiDomainMixture,
    /// Target weights mix training weights with cause-specific proportions.
    MultiDomainCauseMixture,
}

impl TargetVariant {
    pub const ALL: [TargetVariant; 4] = [
        TargetVariant::SingleConstant,
        TargetVariant::SingleNewWeights,
        TargetVariant::MultiDomainMixture,
        TargetVariant::MultiDomainCauseMixture,
    ];

    pub fn is_multi(self) -> bool {
        matches!(
            self,
            TargetVariant::MultiDomainMixture | TargetVariant::MultiDomainCauseMixture
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            TargetVariant::SingleConstant => "constant-weights",
            TargetVariant::SingleNewWeights => "new-weights",
            TargetVariant::MultiDomainMixture => "multi-domain",
            TargetVariant::MultiDomainCauseMixture => "multi-domain-cause",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    /// Single-domain variants need a checkpoint trained on pooled data.
    pub fn check_compatible(self, ckpt: &SciCheckpoint) -> Result<()> {
        if !self.is_multi() && ckpt.dims.domains != 1 {
            return Err(LcvaError::IncompatibleVariant(format!(
                "variant `{}` needs a checkpoint trained on pooled data (G=1), this one has G={}; \
                 retrain with pooling enabled",
                self.name(),
                ckpt.dims.domains
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for TargetVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub chains: usize,
    pub seed: u64,
    /// Average the normalized allocation kernel instead of sampled indicators.
    pub rao_blackwell: bool,
    /// Overrides the hyperparameters stored in the checkpoint.
    pub hyperparams: Option<HyperParams>,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            iterations: 4000,
            burn_in: 2000,
            chains: 1,
            seed: 1,
            rao_blackwell: true,
            hyperparams: None,
        }
    }
}

/// Target-domain parameters and allocations of one prediction chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionState {
    pub pi0: Vec<f64>,
    pub y: Vec<usize>,
    pub z: Vec<usize>,
    /// Augmented source domain per record (0-based); all zero for single
    /// variants.
    pub d: Vec<usize>,
    /// `C x G` mixture weights; `C x 1` of ones for single variants.
    pub eta: Vec<f64>,
    /// Target sticks, new-weights variant only.
    pub sticks0: Option<StickWeights>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauseSummary {
    pub mean: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictOutput {
    pub variant: TargetVariant,
    pub causes: usize,
    pub ids: Vec<String>,
    /// Row-major `n x C` posterior cause probabilities.
    pub cause_probs: Vec<f64>,
    /// Kept target CSMF draws, chains concatenated.
    pub pi0_draws: Vec<Vec<f64>>,
    pub pi0_summary: Vec<CauseSummary>,
    /// Posterior mean of `eta`: length `G` for the domain-level mixture,
    /// row-major `C x G` for the cause-level mixture.
    pub eta_mean: Option<Vec<f64>>,
    /// Index of the training draw used at each sweep, per chain.
    pub picked_draws: Vec<Vec<usize>>,
    /// Final allocations of the first chain.
    pub final_state: PredictionState,
}

impl PredictOutput {
    pub fn num_records(&self) -> usize {
        self.ids.len()
    }

    pub fn record_probs(&self, i: usize) -> &[f64] {
        &self.cause_probs[i * self.causes..(i + 1) * self.causes]
    }

    pub fn csmf_mean(&self) -> Vec<f64> {
        self.pi0_summary.iter().map(|s| s.mean).collect()
    }

    /// Most probable cause per record; ties go to the lowest index.
    pub fn top_causes(&self) -> Vec<(usize, f64)> {
        (0..self.num_records())
            .map(|i| argmax(self.record_probs(i)))
            .collect()
    }
}

pub(crate) fn argmax(row: &[f64]) -> (usize, f64) {
    let mut best = (0, row[0]);
    for (c, &p) in row.iter().enumerate().skip(1) {
        if p > best.1 {
            best = (c, p);
        }
    }
    best
}

/// Uniformly picks one stored training draw.
pub fn step_resample_training_draw<R: Rng + ?Sized>(ckpt: &SciCheckpoint, rng: &mut R) -> usize {
    rng.random_range(0..ckpt.draws.len())
}

/// Log-weights of the joint `(y, d, z)` allocation of one record, laid out
/// as `(c * G + g) * K + k`.
#[allow(clippy::too_many_arguments)]
pub fn allocation_logweights(
    dims: &Dims,
    domains: usize,
    record: &Record,
    log_pi0: &[f64],
    log_eta: &[f64],
    log_lambda: &[f64],
    log_theta: &LogTheta,
    scratch: &mut [f64],
    out: &mut [f64],
) {
    let (c_n, k_n) = (dims.causes, dims.classes);
    for c in 0..c_n {
        log_theta.class_loglik(dims, c, &record.yes, &record.no, scratch);
        for g in 0..domains {
            let prefix = log_pi0[c] + log_eta[c * domains + g];
            let lam = &log_lambda[(g * c_n + c) * k_n..][..k_n];
            let cell = &mut out[(c * domains + g) * k_n..][..k_n];
            for k in 0..k_n {
                cell[k] = prefix + lam[k] + scratch[k];
            }
        }
    }
}

/// Joint allocation step. `lambda` is `domains x C x K`; `eta` is `C x
/// domains`. When `accum` is given, each record's row of `n x C` gets either
/// the normalized cause marginal (`rao_blackwell`) or the sampled indicator.
#[allow(clippy::too_many_arguments)]
pub fn step_sample_yzd(
    dims: &Dims,
    records: &[Record],
    state: &mut PredictionState,
    domains: usize,
    lambda: &[f64],
    log_theta: &LogTheta,
    key: u64,
    accum: Option<(&mut [f64], bool)>,
) {
    let (c_n, k_n) = (dims.causes, dims.classes);
    let log_pi0: Vec<f64> = state.pi0.iter().map(|p| p.ln()).collect();
    let log_eta: Vec<f64> = state.eta.iter().map(|p| p.ln()).collect();
    let log_lambda: Vec<f64> = lambda.iter().map(|p| p.ln()).collect();
    let cells = c_n * domains * k_n;
    let (accum, rb) = match accum {
        Some((a, rb)) => (Some(a), rb),
        None => (None, false),
    };
    let mut dummy = Vec::new();
    let accum_rows: &mut [f64] = accum.unwrap_or(&mut dummy);
    let has_accum = !accum_rows.is_empty();

    let assign = records
        .par_iter()
        .enumerate()
        .with_min_len(RECORD_CHUNK)
        .map_init(
            || (vec![0.0; k_n], vec![0.0; cells]),
            |(scratch, w), (i, r)| {
                allocation_logweights(
                    dims, domains, r, &log_pi0, &log_eta, &log_lambda, log_theta, scratch, w,
                );
                normalize_logweights(w).expect("allocation weights");
                let mut rng = RngStream::substream(key, i as u64);
                let cell = pick_from_probs(w, rng.random::<f64>());
                let c = cell / (domains * k_n);
                let g = (cell / k_n) % domains;
                let k = cell % k_n;
                let marginal: Vec<f64> = if has_accum && rb {
                    w.chunks(domains * k_n).map(|b| b.iter().sum()).collect()
                } else {
                    Vec::new()
                };
                (c, k, g, marginal)
            },
        )
        .collect::<Vec<_>>();
    for (i, (c, k, g, marginal)) in assign.into_iter().enumerate() {
        state.y[i] = c;
        state.z[i] = k;
        state.d[i] = g;
        if has_accum {
            let row = &mut accum_rows[i * c_n..(i + 1) * c_n];
            if rb {
                for (a, m) in row.iter_mut().zip(&marginal) {
                    *a += m;
                }
            } else {
                row[c] += 1.0;
            }
        }
    }
}

/// Dirichlet update of the domain mixture weights. `m` is the row-major
/// `C x G` cause-domain fraction matrix.
#[allow(clippy::too_many_arguments)]
pub fn step_sample_eta<R: Rng + ?Sized>(
    variant: TargetVariant,
    causes: usize,
    domains: usize,
    y: &[usize],
    d: &[usize],
    m: &[f64],
    hp: &HyperParams,
    rng: &mut R,
    eta: &mut [f64],
) -> Result<()> {
    match variant {
        TargetVariant::MultiDomainMixture => {
            let mut alpha = vec![hp.alpha_eta; domains];
            for &g in d {
                alpha[g] += 1.0;
            }
            let mut row = vec![0.0; domains];
            draw_dirichlet_into(&alpha, rng, &mut row)?;
            for c in 0..causes {
                eta[c * domains..(c + 1) * domains].copy_from_slice(&row);
            }
        }
        TargetVariant::MultiDomainCauseMixture => {
            let mut counts = vec![0usize; causes * domains];
            for (&c, &g) in y.iter().zip(d) {
                counts[c * domains + g] += 1;
            }
            let mut alpha = vec![0.0; domains];
            for c in 0..causes {
                for g in 0..domains {
                    alpha[g] = (hp.alpha_eta * m[c * domains + g]).max(ALPHA_FLOOR)
                        + counts[c * domains + g] as f64;
                }
                draw_dirichlet_into(&alpha, rng, &mut eta[c * domains..(c + 1) * domains])?;
            }
        }
        _ => {}
    }
    Ok(())
}

/// Stick update for the new-weights variant; same conjugate forms as the
/// training stage, fed with target counts `n[c][k]`.
pub fn step_sample_target_sticks<R: Rng + ?Sized>(
    causes: usize,
    classes: usize,
    class_counts: &[usize],
    sticks: &mut StickWeights,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<()> {
    if classes == 1 {
        return Ok(());
    }
    let dims = Dims {
        causes,
        classes,
        symptoms: 1,
        domains: 1,
    };
    step_sample_sticks(&dims, class_counts, sticks, hp, rng)
}

/// Concentration of the target CSMF prior, `scale * n0 / C`, floored.
pub fn target_alpha(n0: usize, causes: usize, hp: &HyperParams) -> f64 {
    (hp.alpha_pi_target_scale * n0 as f64 / causes as f64).max(ALPHA_FLOOR)
}

pub fn step_sample_pi0<R: Rng + ?Sized>(
    cause_counts: &[usize],
    hp: &HyperParams,
    rng: &mut R,
    pi0: &mut [f64],
) -> Result<()> {
    let n0: usize = cause_counts.iter().sum();
    let a0 = target_alpha(n0, cause_counts.len(), hp);
    let alpha: Vec<f64> = cause_counts.iter().map(|&n| a0 + n as f64).collect();
    draw_dirichlet_into(&alpha, rng, pi0)
}

struct ChainResult {
    accum: Vec<f64>,
    kept: usize,
    pi0_draws: Vec<Vec<f64>>,
    eta_sum: Vec<f64>,
    picked: Vec<usize>,
    state: PredictionState,
}

fn run_prediction_chain(
    ckpt: &SciCheckpoint,
    records: &[Record],
    variant: TargetVariant,
    config: &PredictConfig,
    hp: &HyperParams,
    chain: usize,
) -> Result<ChainResult> {
    let dims = ckpt.dims;
    let (c_n, k_n, g_n) = (dims.causes, dims.classes, dims.domains);
    let n = records.len();
    let mut rng = RngStream::new(config.seed, chain as u64);
    let alloc_domains = if variant.is_multi() { g_n } else { 1 };

    let mut state = PredictionState {
        pi0: vec![1.0 / c_n as f64; c_n],
        y: vec![0; n],
        z: vec![0; n],
        d: vec![0; n],
        eta: vec![1.0; c_n * alloc_domains],
        sticks0: None,
    };
    step_sample_pi0(&vec![0; c_n], hp, &mut rng, &mut state.pi0)?;
    if variant == TargetVariant::SingleNewWeights {
        let dims0 = Dims {
            causes: c_n,
            classes: k_n,
            symptoms: 1,
            domains: 1,
        };
        let (_, sticks, _) = crate::state::init_state(&dims0, hp, &mut rng)?;
        state.sticks0 = Some(sticks);
    }

    let mut accum = vec![0.0; n * c_n];
    let mut eta_sum = vec![0.0; c_n * alloc_domains];
    let mut pi0_draws = Vec::new();
    let mut picked = Vec::with_capacity(config.iterations);
    let mut kept = 0;
    let mut log_theta = LogTheta::default();
    let mut allocated = false;
    let mut cause_counts = vec![0usize; c_n];

    for sweep in 0..config.iterations {
        let s = step_resample_training_draw(ckpt, &mut rng);
        picked.push(s);
        let draw = &ckpt.draws[s];
        log_theta.refresh(&draw.theta);

        let (ys, zs, ds): (&[usize], &[usize], &[usize]) = if allocated {
            (&state.y, &state.z, &state.d)
        } else {
            (&[], &[], &[])
        };
        if variant.is_multi() {
            step_sample_eta(
                variant,
                c_n,
                g_n,
                ys,
                ds,
                &ckpt.cause_domain.fractions,
                hp,
                &mut rng,
                &mut state.eta,
            )?;
        }
        if let Some(sticks) = state.sticks0.as_mut() {
            let mut counts = vec![0usize; c_n * k_n];
            for (&c, &k) in ys.iter().zip(zs) {
                counts[c * k_n + k] += 1;
            }
            step_sample_target_sticks(c_n, k_n, &counts, sticks, hp, &mut rng)?;
        }

        let lambda: &[f64] = match &state.sticks0 {
            Some(s) => &s.lambda,
            None => &draw.lambda,
        };
        let lambda = lambda.to_vec();
        let keep = sweep >= config.burn_in;
        let key = rng.random::<u64>();
        step_sample_yzd(
            &dims,
            records,
            &mut state,
            alloc_domains,
            &lambda,
            &log_theta,
            key,
            keep.then_some((accum.as_mut_slice(), config.rao_blackwell)),
        );
        allocated = true;

        cause_counts.iter_mut().for_each(|x| *x = 0);
        for &c in &state.y {
            cause_counts[c] += 1;
        }
        step_sample_pi0(&cause_counts, hp, &mut rng, &mut state.pi0)?;

        if keep {
            kept += 1;
            pi0_draws.push(state.pi0.clone());
            for (a, e) in eta_sum.iter_mut().zip(&state.eta) {
                *a += e;
            }
        }
    }
    Ok(ChainResult {
        accum,
        kept,
        pi0_draws,
        eta_sum,
        picked,
        state,
    })
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

pub fn summarize_csmf(draws: &[Vec<f64>], causes: usize) -> Vec<CauseSummary> {
    (0..causes)
        .map(|c| {
            let mut col: Vec<f64> = draws.iter().map(|d| d[c]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            col.sort_by(f64::total_cmp);
            CauseSummary {
                mean,
                q025: quantile(&col, 0.025),
                q50: quantile(&col, 0.5),
                q975: quantile(&col, 0.975),
            }
        })
        .collect()
}

/// Runs the prediction stage on the target-domain records of `target`
/// (those with domain 0; held-out labels are ignored).
pub fn run_prediction(
    ckpt: &SciCheckpoint,
    target: &VaDataset,
    variant: TargetVariant,
    config: &PredictConfig,
) -> Result<PredictOutput> {
    if config.iterations == 0 || config.chains == 0 || config.burn_in >= config.iterations {
        return Err(LcvaError::InvalidParameter(format!(
            "need 0 <= burn-in ({}) < iterations ({}) and at least one chain",
            config.burn_in, config.iterations
        )));
    }
    ckpt.validate()?;
    ckpt.check_compatible(target)?;
    variant.check_compatible(ckpt)?;
    let hp = config.hyperparams.unwrap_or(ckpt.hyperparams);
    hp.check()?;

    let target = target.target_part();
    let dims = ckpt.dims;
    let mut held_out = target.clone();
    held_out.causes.iter_mut().for_each(|c| *c = None);
    validate_dataset(&held_out, &dims)?.into_result()?;
    let records = dataset_records(&held_out, true);

    let results = (0..config.chains)
        .into_par_iter()
        .map(|chain| run_prediction_chain(ckpt, &records, variant, config, &hp, chain))
        .collect::<Result<Vec<_>>>()?;

    let c_n = dims.causes;
    let n = records.len();
    let mut cause_probs = vec![0.0; n * c_n];
    let mut kept = 0;
    let mut eta_sum = vec![0.0; results[0].eta_sum.len()];
    let mut pi0_draws = Vec::new();
    let mut picked_draws = Vec::new();
    for r in &results {
        for (a, b) in cause_probs.iter_mut().zip(&r.accum) {
            *a += b;
        }
        for (a, b) in eta_sum.iter_mut().zip(&r.eta_sum) {
            *a += b;
        }
        kept += r.kept;
        pi0_draws.extend(r.pi0_draws.iter().cloned());
        picked_draws.push(r.picked.clone());
    }
    for row in cause_probs.chunks_mut(c_n) {
        let total: f64 = row.iter().sum();
        for x in row.iter_mut() {
            *x /= total;
        }
    }
    let eta_mean = match variant {
        TargetVariant::MultiDomainMixture => {
            Some(eta_sum[..dims.domains].iter().map(|e| e / kept as f64).collect())
        }
        TargetVariant::MultiDomainCauseMixture => {
            Some(eta_sum.iter().map(|e| e / kept as f64).collect())
        }
        _ => None,
    };
    let pi0_summary = summarize_csmf(&pi0_draws, c_n);
    let final_state = results.into_iter().next().unwrap().state;
    Ok(PredictOutput {
        variant,
        causes: c_n,
        ids: target.ids.clone(),
        cause_probs,
        pi0_draws,
        pi0_summary,
        eta_mean,
        picked_draws,
        final_state,
    })
}
