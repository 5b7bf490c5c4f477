//! Seeded random streams and the sampling primitives used by both samplers.
//!
//! Every stream is a ChaCha8 generator keyed by `(seed, stream id)`, so the
//! draw sequence is identical across platforms and thread counts.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma};

use crate::error::{LcvaError, Result};

/// Clamp applied to Beta variates so that log-likelihoods stay finite.
pub const BETA_EPS: f64 = 1e-12;

/// Single-owner random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Independent stream for item `index` under a per-sweep `key`. Used for
    /// record-level fan-out, where each record owns its draws regardless of
    /// which thread processes it.
    pub fn substream(key: u64, index: u64) -> Self {
        Self::new(key, index)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(LcvaError::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// Beta(a, b) variate clamped into `[BETA_EPS, 1 - BETA_EPS]`.
pub fn draw_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    check_positive("beta shape a", a)?;
    check_positive("beta shape b", b)?;
    let dist = Beta::new(a, b).map_err(|e| LcvaError::InvalidParameter(e.to_string()))?;
    let x: f64 = dist.sample(rng);
    let x = if x.is_nan() { 0.5 } else { x };
    Ok(x.clamp(BETA_EPS, 1.0 - BETA_EPS))
}

/// Gamma variate in the shape/rate convention (mean `shape / rate`).
pub fn draw_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    check_positive("gamma shape", shape)?;
    check_positive("gamma rate", rate)?;
    let dist =
        Gamma::new(shape, 1.0 / rate).map_err(|e| LcvaError::InvalidParameter(e.to_string()))?;
    Ok(dist.sample(rng))
}

/// Logarithm of a Gamma(shape, 1) variate. Shapes below one use the
/// `G(a) = G(a + 1) U^{1/a}` boost in log space, so tiny shapes do not
/// underflow to zero.
fn draw_log_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).unwrap().sample(rng);
        g.ln()
    } else {
        let g: f64 = Gamma::new(shape + 1.0, 1.0).unwrap().sample(rng);
        let u: f64 = rng.random::<f64>();
        // u in [0, 1); shift away from zero
        let u = u.max(f64::MIN_POSITIVE);
        g.ln() + u.ln() / shape
    }
}

/// Dirichlet draw via normalized log-gamma variates.
pub fn draw_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let mut out = vec![0.0; alpha.len()];
    draw_dirichlet_into(alpha, rng, &mut out)?;
    Ok(out)
}

/// In-place variant of [`draw_dirichlet`]. A length-one `alpha` yields
/// `(1.0)` without consuming randomness.
pub fn draw_dirichlet_into<R: Rng + ?Sized>(
    alpha: &[f64],
    rng: &mut R,
    out: &mut [f64],
) -> Result<()> {
    if alpha.is_empty() {
        return Err(LcvaError::InvalidParameter(
            "dirichlet concentration is empty".into(),
        ));
    }
    for &a in alpha {
        check_positive("dirichlet concentration", a)?;
    }
    if alpha.len() == 1 {
        out[0] = 1.0;
        return Ok(());
    }
    for (o, &a) in out.iter_mut().zip(alpha) {
        *o = draw_log_gamma(a, rng);
    }
    let lse = logsumexp(out);
    for o in out.iter_mut() {
        *o = (*o - lse).exp();
    }
    let total: f64 = out.iter().sum();
    for o in out.iter_mut() {
        *o /= total;
    }
    Ok(())
}

/// `log(sum(exp(v)))`, stable for large magnitudes. Returns `-inf` for an
/// empty or all `-inf` input.
pub fn logsumexp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = v.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// Normalizes log-weights into probabilities in place and returns the
/// log normalizer.
pub fn normalize_logweights(logw: &mut [f64]) -> Result<f64> {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Err(LcvaError::InvalidParameter(
            "all log-weights are -inf".into(),
        ));
    }
    let mut total = 0.0;
    for w in logw.iter_mut() {
        *w = (*w - max).exp();
        total += *w;
    }
    for w in logw.iter_mut() {
        *w /= total;
    }
    Ok(max + total.ln())
}

/// Inverse-CDF pick from normalized probabilities given a uniform `u`.
pub fn pick_from_probs(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Index drawn with probability proportional to `exp(logw)`.
pub fn draw_categorical_logweights<R: Rng + ?Sized>(logw: &[f64], rng: &mut R) -> Result<usize> {
    let mut probs = logw.to_vec();
    normalize_logweights(&mut probs)?;
    Ok(pick_from_probs(&probs, rng.random::<f64>()))
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}
