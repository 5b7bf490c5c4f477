//! Synthetic VA data: four generative scenarios for multi-domain symptom
//! data, plus random carving of a target domain out of a labeled dataset.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{LabelDictionary, Response, VaDataset};
use crate::error::{LcvaError, Result};
use crate::kernels::{draw_beta, draw_dirichlet_into, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// One latent class, identical `p(X, Y | domain)` structure everywhere.
    CondIndep,
    /// Shared mixing weights `lambda_c ~ Dirichlet(1)` in all domains.
    SingleDomain,
    /// Independent `lambda_c ~ Dirichlet(0.1)` per domain, target included.
    IndepDomains,
    /// Training weights as above; each target row averages two training rows.
    DepDomains,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::CondIndep,
        Scenario::SingleDomain,
        Scenario::IndepDomains,
        Scenario::DepDomains,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::CondIndep => "cond-indep",
            Scenario::SingleDomain => "single-domain",
            Scenario::IndepDomains => "indep-domains",
            Scenario::DepDomains => "dep-domains",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplePlan {
    Even { per_domain: usize },
    /// `major_fraction` of `total` in the first domain, the rest split evenly.
    Uneven { total: usize, major_fraction: f64 },
}

impl SamplePlan {
    pub fn sizes(&self, domains: usize) -> Vec<usize> {
        match *self {
            SamplePlan::Even { per_domain } => vec![per_domain; domains],
            SamplePlan::Uneven {
                total,
                major_fraction,
            } => {
                if domains == 1 {
                    return vec![total];
                }
                let major = (total as f64 * major_fraction).round() as usize;
                let rest = total - major;
                let mut sizes = vec![major];
                for g in 0..domains - 1 {
                    sizes.push(rest / (domains - 1) + usize::from(g < rest % (domains - 1)));
                }
                sizes
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub causes: usize,
    pub symptoms: usize,
    pub domains: usize,
    /// Generative latent classes (ignored by `CondIndep`, which uses one).
    pub classes: usize,
    pub plan: SamplePlan,
    pub target_size: usize,
    pub missing_rate: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        Self {
            scenario,
            causes: 20,
            symptoms: 50,
            domains: 5,
            classes: 10,
            plan: SamplePlan::Even { per_domain: 2000 },
            target_size: 2000,
            missing_rate: 0.3,
            seed,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.causes < 2 || self.symptoms == 0 || self.domains == 0 || self.classes == 0 {
            return Err(LcvaError::InvalidDims(format!(
                "scenario needs C >= 2 and positive P, G, K (got C={} P={} G={} K={})",
                self.causes, self.symptoms, self.domains, self.classes
            )));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(LcvaError::InvalidParameter(format!(
                "missing rate must lie in [0, 1), got {}",
                self.missing_rate
            )));
        }
        if let SamplePlan::Uneven { major_fraction, .. } = self.plan {
            if !(0.0..=1.0).contains(&major_fraction) {
                return Err(LcvaError::InvalidParameter(format!(
                    "major fraction must lie in [0, 1], got {major_fraction}"
                )));
            }
        }
        if self.plan.sizes(self.domains).iter().sum::<usize>() == 0 || self.target_size == 0 {
            return Err(LcvaError::InvalidParameter(
                "sample plan and target size must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn generative_classes(&self) -> usize {
        match self.scenario {
            Scenario::CondIndep => 1,
            _ => self.classes,
        }
    }
}

/// Generative parameters. Domain index 0 is the target; `1..=G` training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub scenario: Scenario,
    pub causes: usize,
    pub classes: usize,
    pub symptoms: usize,
    pub domains: usize,
    /// `C x K x P`.
    pub theta: Vec<f64>,
    /// `(G + 1) x C x K`.
    pub lambda: Vec<f64>,
    /// `(G + 1) x C`.
    pub pi: Vec<f64>,
    /// For `DepDomains`: the two training domains (1-based) averaged into
    /// each target row.
    pub dep_pairs: Option<Vec<(usize, usize)>>,
}

impl Truth {
    pub fn lambda_row(&self, domain: usize, c: usize) -> &[f64] {
        let k = self.classes;
        &self.lambda[(domain * self.causes + c) * k..][..k]
    }

    pub fn pi_row(&self, domain: usize) -> &[f64] {
        &self.pi[domain * self.causes..(domain + 1) * self.causes]
    }

    /// `P(X_j = 1 | Y = c, D = domain)` implied by the generative mixture.
    pub fn symptom_marginal(&self, domain: usize, c: usize, j: usize) -> f64 {
        let (k_n, p) = (self.classes, self.symptoms);
        self.lambda_row(domain, c)
            .iter()
            .enumerate()
            .map(|(k, l)| l * self.theta[(c * k_n + k) * p + j])
            .sum()
    }
}

pub fn cause_dictionary(causes: usize) -> LabelDictionary {
    LabelDictionary::new((1..=causes).map(|c| format!("cause{c:02}")).collect()).unwrap()
}

pub fn domain_dictionary(domains: usize) -> LabelDictionary {
    LabelDictionary::new((1..=domains).map(|g| format!("site{g:02}")).collect()).unwrap()
}

fn symptom_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("s{j:03}")).collect()
}

#[allow(clippy::too_many_arguments)]
fn generate_records(
    truth: &Truth,
    domain: usize,
    n: usize,
    missing_rate: f64,
    rng: &mut RngStream,
    rows: &mut Vec<Vec<Response>>,
    causes: &mut Vec<Option<usize>>,
    domains: &mut Vec<usize>,
) {
    let (k_n, p) = (truth.classes, truth.symptoms);
    for _ in 0..n {
        let c = pick(truth.pi_row(domain), rng);
        let k = pick(truth.lambda_row(domain, c), rng);
        let theta = &truth.theta[(c * k_n + k) * p..][..p];
        let row = theta
            .iter()
            .map(|&t| {
                let yes = rng.random::<f64>() < t;
                if missing_rate > 0.0 && rng.random::<f64>() < missing_rate {
                    Response::Missing
                } else if yes {
                    Response::Yes
                } else {
                    Response::No
                }
            })
            .collect();
        rows.push(row);
        causes.push(Some(c));
        domains.push(domain);
    }
}

fn pick(probs: &[f64], rng: &mut RngStream) -> usize {
    crate::kernels::pick_from_probs(probs, rng.random::<f64>())
}

/// Draws generative parameters for `spec` and simulates training and target
/// records. Target records keep their true causes for evaluation.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<(VaDataset, VaDataset, Truth)> {
    spec.check()?;
    let mut rng = RngStream::new(spec.seed, 0);
    let (c_n, p, g_n) = (spec.causes, spec.symptoms, spec.domains);
    let k_n = spec.generative_classes();

    let mut pi = vec![0.0; (g_n + 1) * c_n];
    for g in 0..=g_n {
        draw_dirichlet_into(&vec![0.5; c_n], &mut rng, &mut pi[g * c_n..(g + 1) * c_n])?;
    }
    let theta = (0..c_n * k_n * p)
        .map(|_| draw_beta(1.0, 1.0, &mut rng))
        .collect::<Result<Vec<_>>>()?;

    let mut lambda = vec![0.0; (g_n + 1) * c_n * k_n];
    let mut dep_pairs = None;
    match spec.scenario {
        Scenario::CondIndep => lambda.iter_mut().for_each(|l| *l = 1.0),
        Scenario::SingleDomain => {
            let mut row = vec![0.0; k_n];
            for c in 0..c_n {
                draw_dirichlet_into(&vec![1.0; k_n], &mut rng, &mut row)?;
                for g in 0..=g_n {
                    lambda[(g * c_n + c) * k_n..][..k_n].copy_from_slice(&row);
                }
            }
        }
        Scenario::IndepDomains | Scenario::DepDomains => {
            for row in lambda.chunks_mut(k_n) {
                draw_dirichlet_into(&vec![0.1; k_n], &mut rng, row)?;
            }
            if spec.scenario == Scenario::DepDomains {
                let mut pairs = Vec::with_capacity(c_n);
                let candidates: Vec<usize> = (1..=g_n).collect();
                for c in 0..c_n {
                    let (g1, g2) = if g_n >= 2 {
                        let chosen: Vec<usize> =
                            candidates.choose_multiple(&mut rng, 2).copied().collect();
                        (chosen[0], chosen[1])
                    } else {
                        (1, 1)
                    };
                    for k in 0..k_n {
                        lambda[c * k_n + k] = 0.5 * lambda[(g1 * c_n + c) * k_n + k]
                            + 0.5 * lambda[(g2 * c_n + c) * k_n + k];
                    }
                    pairs.push((g1, g2));
                }
                dep_pairs = Some(pairs);
            }
        }
    }

    let truth = Truth {
        scenario: spec.scenario,
        causes: c_n,
        classes: k_n,
        symptoms: p,
        domains: g_n,
        theta,
        lambda,
        pi,
        dep_pairs,
    };

    let names = symptom_names(p);
    let cause_labels = cause_dictionary(c_n);
    let domain_labels = domain_dictionary(g_n);

    let (mut rows, mut causes, mut domains) = (Vec::new(), Vec::new(), Vec::new());
    for (g, n) in spec.plan.sizes(g_n).into_iter().enumerate() {
        generate_records(
            &truth,
            g + 1,
            n,
            spec.missing_rate,
            &mut rng,
            &mut rows,
            &mut causes,
            &mut domains,
        );
    }
    let train = VaDataset::from_responses(
        names.clone(),
        &rows,
        causes,
        domains,
        cause_labels.clone(),
        domain_labels.clone(),
    )?;

    let (mut rows, mut causes, mut domains) = (Vec::new(), Vec::new(), Vec::new());
    generate_records(
        &truth,
        0,
        spec.target_size,
        spec.missing_rate,
        &mut rng,
        &mut rows,
        &mut causes,
        &mut domains,
    );
    let mut target = VaDataset::from_responses(
        names,
        &rows,
        causes,
        domains,
        cause_labels,
        domain_labels,
    )?;
    target.ids = (0..target.len()).map(|i| format!("t{}", i + 1)).collect();
    Ok((train, target, truth))
}

/// How the per-cause target inclusion probability is drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InclusionDraw {
    /// `q ~ 0.5 Beta(1, 5) + 0.5 Beta(1, 20)`.
    Mixture,
    Fixed(f64),
}

impl InclusionDraw {
    fn draw(self, rng: &mut RngStream) -> Result<f64> {
        match self {
            InclusionDraw::Fixed(q) => Ok(q),
            InclusionDraw::Mixture => {
                let b = if rng.random::<f64>() < 0.5 { 5.0 } else { 20.0 };
                draw_beta(1.0, b, rng)
            }
        }
    }
}

pub const RESAMPLE_RETRIES: usize = 10;

/// Moves each labeled training death into a new target domain with a
/// cause-specific probability. The remainder keeps its original domains.
pub fn resample_synthetic_domain(
    full: &VaDataset,
    q: InclusionDraw,
    rng: &mut RngStream,
) -> Result<(VaDataset, VaDataset)> {
    let labeled: Vec<usize> = (0..full.len())
        .filter(|&i| full.domains[i] >= 1 && full.causes[i].is_some())
        .collect();
    if labeled.is_empty() {
        return Err(LcvaError::Empty("no labeled training records".into()));
    }
    for _ in 0..=RESAMPLE_RETRIES {
        let qs = (0..full.num_causes())
            .map(|_| q.draw(rng))
            .collect::<Result<Vec<_>>>()?;
        let mut to_target = Vec::new();
        let mut to_train = Vec::new();
        for &i in &labeled {
            let c = full.causes[i].unwrap();
            if rng.random::<f64>() < qs[c] {
                to_target.push(i);
            } else {
                to_train.push(i);
            }
        }
        if to_target.is_empty() {
            continue;
        }
        if to_train.is_empty() {
            return Err(LcvaError::Resample(
                "every record moved to the target; training set is empty".into(),
            ));
        }
        let train = full.select(&to_train);
        let mut target = full.select(&to_target);
        target.domains.iter_mut().for_each(|d| *d = 0);
        return Ok((train, target));
    }
    Err(LcvaError::Resample(format!(
        "target domain still empty after {RESAMPLE_RETRIES} retries"
    )))
}
