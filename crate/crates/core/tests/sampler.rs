use lcva::data::Response;
use lcva::kernels::{logsumexp, RngStream};
use lcva::metrics::csmf_accuracy;
use lcva::predict::{
    step_resample_training_draw, step_sample_eta, step_sample_pi0, step_sample_target_sticks,
};
use lcva::state::{is_simplex, CsmfParams, StickWeights};
use lcva::synth::{generate_scenario, SamplePlan, Scenario, ScenarioSpec};
use lcva::train::{
    run_chain, step_sample_pi, step_sample_yz_unlabeled, with_threads, Counts, LogTheta, Pins,
    Record, TrainAssignments, TrainData, TrainSampler,
};
use lcva::{
    run_prediction, run_training, Dims, HyperParams, PredictConfig, SciCheckpoint, TargetVariant,
    TrainChainConfig, VaDataset,
};
use rand::Rng;
use statrs::distribution::{Beta, ContinuousCDF};

fn small_spec(scenario: Scenario, seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        causes: 4,
        symptoms: 12,
        domains: 2,
        classes: 3,
        plan: SamplePlan::Even { per_domain: 150 },
        target_size: 150,
        ..ScenarioSpec::new(scenario, seed)
    }
}

fn short_config(seed: u64, pooled: bool) -> TrainChainConfig {
    TrainChainConfig {
        iterations: 60,
        burn_in: 20,
        chains: 2,
        seed,
        classes: 3,
        pooled,
        ..TrainChainConfig::default()
    }
}

fn checkpoint_bytes(ckpt: &SciCheckpoint) -> Vec<u8> {
    let mut buf = Vec::new();
    ckpt.write_to(&mut buf).unwrap();
    buf
}

#[test]
fn sweeps_preserve_invariants_and_count_identities() {
    let (train, _, _) = generate_scenario(&small_spec(Scenario::IndepDomains, 1)).unwrap();
    let mut data = TrainData::from_dataset(&train, 3, false).unwrap();
    // A few unlabeled records exercise the joint (y, z) update.
    for r in data.records.iter_mut().step_by(7) {
        r.label = None;
    }
    let dims = data.dims;
    let mut rng = RngStream::new(5, 0);
    let mut sampler = TrainSampler::new(dims, HyperParams::default(), Pins::default());
    let mut state = sampler.init_chain(&data, &mut rng).unwrap();
    let mut counts = Counts::zeros(&dims);
    for _ in 0..30 {
        let ll = sampler.sweep(&mut state, &data, &mut rng).unwrap();
        assert!(ll.is_finite());
        assert!(state.response.is_consistent(&dims));
        for row in state.sticks.lambda.chunks(dims.classes) {
            assert!(is_simplex(row, 1e-12));
        }
        for row in state.csmf.pi.chunks(dims.causes) {
            assert!(is_simplex(row, 1e-12));
        }
        counts.tally(&data, &state.assign);
        for (gc, &n) in counts.cause.iter().enumerate() {
            let by_class: usize = counts.class[gc * dims.classes..(gc + 1) * dims.classes]
                .iter()
                .sum();
            assert_eq!(by_class, n);
        }
        for (i, r) in data.records.iter().enumerate() {
            if let Some(c) = r.label {
                assert_eq!(state.assign.y[i], c);
            }
        }
    }
}

#[test]
fn conditional_independence_matches_beta_binomial() {
    // C=2, P=2, K=1 with tau pinned to zero: theta_cj ~ Beta(1 + yes, 1 + no).
    let dims = Dims::new(2, 1, 2, 1).unwrap();
    let rows: [(usize, [Option<bool>; 2]); 7] = [
        (0, [Some(true), Some(false)]),
        (0, [Some(true), None]),
        (0, [Some(true), Some(true)]),
        (1, [Some(false), Some(false)]),
        (1, [None, Some(true)]),
        (1, [Some(false), None]),
        (1, [Some(true), Some(false)]),
    ];
    let records = rows
        .iter()
        .map(|(c, row)| Record::from_row(0, Some(*c), row))
        .collect();
    let data = TrainData::new(dims, records).unwrap();
    let config = TrainChainConfig {
        iterations: 6000,
        burn_in: 0,
        chains: 1,
        classes: 1,
        pins: Pins { tau_zero: true },
        ..TrainChainConfig::default()
    };
    let out = run_chain(&data, &config, 0).unwrap();
    // (yes, no) for theta[c][0][j].
    let expect = [(3.0, 0.0), (1.0, 1.0), (1.0, 2.0), (1.0, 2.0)];
    for (idx, &(yes, no)) in expect.iter().enumerate() {
        let mut xs: Vec<f64> = out.draws.iter().map(|d| d.theta[idx]).collect();
        xs.sort_by(f64::total_cmp);
        let dist = Beta::new(1.0 + yes, 1.0 + no).unwrap();
        let n = xs.len() as f64;
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = dist.cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 1.95 / n.sqrt(), "theta[{idx}]: KS {d}");
    }
}

#[test]
fn csmf_posterior_means() {
    let dims = Dims::new(2, 1, 1, 1).unwrap();
    let hp = HyperParams::default();
    let mut rng = RngStream::new(3, 0);
    for (counts, want) in [([10, 0], [11.0 / 12.0, 1.0 / 12.0]), ([0, 5], [1.0 / 7.0, 6.0 / 7.0])] {
        let mut csmf = CsmfParams { pi: vec![0.5, 0.5] };
        let mut mean = [0.0; 2];
        let draws = 50_000;
        for _ in 0..draws {
            step_sample_pi(&dims, &counts, &mut csmf, &hp, &mut rng).unwrap();
            mean[0] += csmf.pi[0] / draws as f64;
            mean[1] += csmf.pi[1] / draws as f64;
        }
        assert!((mean[0] - want[0]).abs() < 0.01, "{counts:?}: {mean:?}");
        assert!((mean[1] - want[1]).abs() < 0.01, "{counts:?}: {mean:?}");
    }
}

#[test]
fn unlabeled_causes_follow_pi_when_likelihood_is_flat() {
    let dims = Dims::new(2, 1, 3, 1).unwrap();
    let n = 100_000;
    let records = vec![Record::from_row(0, None, &[Some(true), Some(false), None]); n];
    let mut assign = TrainAssignments {
        y: vec![0; n],
        z: vec![0; n],
    };
    let log_theta = LogTheta::from_theta(&[0.3, 0.6, 0.5, 0.3, 0.6, 0.5]);
    step_sample_yz_unlabeled(&dims, &records, &mut assign, &[0.8, 0.2], &[1.0, 1.0], &log_theta, 9);
    let freq = assign.y.iter().filter(|&&c| c == 0).count() as f64 / n as f64;
    assert!((freq - 0.8).abs() < 0.01, "{freq}");
}

#[test]
fn resampled_draw_indices_are_uniform() {
    let (train, _, _) = generate_scenario(&small_spec(Scenario::SingleDomain, 2)).unwrap();
    let config = TrainChainConfig {
        iterations: 9,
        burn_in: 1,
        chains: 1,
        ..short_config(2, true)
    };
    let ckpt = run_training(&train, &config).unwrap().checkpoint;
    assert_eq!(ckpt.num_draws(), 8);
    let picks = 100_000;
    let mut counts = [0usize; 8];
    let mut rng = RngStream::new(4, 0);
    for _ in 0..picks {
        counts[step_resample_training_draw(&ckpt, &mut rng)] += 1;
    }
    let p = 1.0 / 8.0;
    let sd = (picks as f64 * p * (1.0 - p)).sqrt();
    for (s, &c) in counts.iter().enumerate() {
        let z = (c as f64 - picks as f64 * p) / sd;
        assert!(z.abs() < 3.0, "draw {s}: z = {z}");
    }
}

#[test]
fn target_side_conditionals() {
    let hp = HyperParams::default();
    let mut rng = RngStream::new(6, 0);
    let draws = 50_000;

    // All 20 target records on cause 1: Dirichlet(21, 1).
    let mut pi0 = vec![0.5, 0.5];
    let mut mean = 0.0;
    for _ in 0..draws {
        step_sample_pi0(&[20, 0], &hp, &mut rng, &mut pi0).unwrap();
        mean += pi0[0] / draws as f64;
    }
    assert!((mean - 21.0 / 22.0).abs() < 0.01, "{mean}");

    // Domain counts (8, 2): Dirichlet(9, 3).
    let y = vec![0; 10];
    let d = [vec![0; 8], vec![1; 2]].concat();
    let mut eta = vec![0.5; 4];
    let mut mean = 0.0;
    for _ in 0..draws {
        let m = [0.5; 4];
        step_sample_eta(TargetVariant::MultiDomainMixture, 2, 2, &y, &d, &m, &hp, &mut rng, &mut eta)
            .unwrap();
        assert_eq!(eta[..2], eta[2..]);
        mean += eta[0] / draws as f64;
    }
    assert!((mean - 0.75).abs() < 0.01, "{mean}");

    // K=2, counts (5, 5), omega = 1: V ~ Beta(6, 6).
    let mut sticks = StickWeights {
        v: vec![0.5, 0.5],
        omega: vec![1.0, 1.0],
        lambda: vec![0.5; 4],
    };
    let (mut m1, mut m2) = (0.0, 0.0);
    for _ in 0..draws {
        sticks.omega = vec![1.0, 1.0];
        step_sample_target_sticks(2, 2, &[5, 5, 0, 0], &mut sticks, &hp, &mut rng).unwrap();
        m1 += sticks.v[0] / draws as f64;
        m2 += sticks.v[0] * sticks.v[0] / draws as f64;
    }
    let var = m2 - m1 * m1;
    assert!((m1 - 0.5).abs() < 0.01, "{m1}");
    assert!((var - 36.0 / (144.0 * 13.0)).abs() < 0.002, "{var}");
}

/// Target records simulated from one stored draw of `ckpt`.
fn target_from_draw(
    ckpt: &SciCheckpoint,
    template: &VaDataset,
    pi0: &[f64],
    n0: usize,
    rng: &mut RngStream,
) -> VaDataset {
    let dims = ckpt.dims;
    let (k_n, p) = (dims.classes, dims.symptoms);
    let draw = &ckpt.draws[0];
    let pick = |probs: &[f64], rng: &mut RngStream| {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        probs
            .iter()
            .position(|x| {
                acc += x;
                u < acc
            })
            .unwrap_or(probs.len() - 1)
    };
    let mut rows = Vec::new();
    let mut causes = Vec::new();
    for _ in 0..n0 {
        let c = pick(pi0, rng);
        let k = pick(&draw.lambda[c * k_n..(c + 1) * k_n], rng);
        let row = (0..p)
            .map(|j| {
                if rng.random::<f64>() < draw.theta[(c * k_n + k) * p + j] {
                    Response::Yes
                } else {
                    Response::No
                }
            })
            .collect();
        rows.push(row);
        causes.push(Some(c));
    }
    VaDataset::from_responses(
        template.symptom_names.clone(),
        &rows,
        causes,
        vec![0; n0],
        template.cause_labels.clone(),
        template.domain_labels.clone(),
    )
    .unwrap()
}

#[test]
fn self_consistent_target_recovers_csmf() {
    let spec = ScenarioSpec {
        causes: 5,
        symptoms: 20,
        ..small_spec(Scenario::SingleDomain, 11)
    };
    let (train, _, _) = generate_scenario(&spec).unwrap();
    let mut ckpt = run_training(&train, &short_config(11, true)).unwrap().checkpoint;
    // Keep only the draw the target is simulated from.
    ckpt.draws.truncate(1);
    let pi0 = [0.4, 0.25, 0.15, 0.15, 0.05];
    let mut rng = RngStream::new(12, 0);
    let target = target_from_draw(&ckpt, &train, &pi0, 2000, &mut rng);
    let labels: Vec<usize> = target.causes.iter().map(|c| c.unwrap()).collect();
    let truth = lcva::metrics::empirical_csmf(&labels, 5).unwrap();
    let config = PredictConfig {
        iterations: 600,
        burn_in: 200,
        seed: 13,
        ..PredictConfig::default()
    };
    let out = run_prediction(&ckpt, &target, TargetVariant::SingleConstant, &config).unwrap();
    let acc = csmf_accuracy(&out.csmf_mean(), &truth).unwrap();
    assert!(acc >= 0.9, "CSMF accuracy {acc}");
}

#[test]
fn one_domain_mixture_equals_constant_weights() {
    let (train, target, _) = generate_scenario(&small_spec(Scenario::SingleDomain, 3)).unwrap();
    let ckpt = run_training(&train, &short_config(3, true)).unwrap().checkpoint;
    let config = PredictConfig {
        iterations: 80,
        burn_in: 40,
        chains: 2,
        seed: 4,
        ..PredictConfig::default()
    };
    let a = run_prediction(&ckpt, &target, TargetVariant::MultiDomainMixture, &config).unwrap();
    let b = run_prediction(&ckpt, &target, TargetVariant::SingleConstant, &config).unwrap();
    assert_eq!(a.final_state.y, b.final_state.y);
    assert_eq!(a.final_state.z, b.final_state.z);
    assert_eq!(a.cause_probs, b.cause_probs);
    assert_eq!(a.pi0_draws, b.pi0_draws);
}

#[test]
fn prediction_rows_are_distributions() {
    let (train, target, _) = generate_scenario(&small_spec(Scenario::DepDomains, 4)).unwrap();
    let ckpt = run_training(&train, &short_config(4, false)).unwrap().checkpoint;
    for rb in [true, false] {
        let config = PredictConfig {
            iterations: 50,
            burn_in: 25,
            rao_blackwell: rb,
            ..PredictConfig::default()
        };
        let out =
            run_prediction(&ckpt, &target, TargetVariant::MultiDomainCauseMixture, &config).unwrap();
        assert_eq!(out.num_records(), target.len());
        for i in 0..out.num_records() {
            let s: f64 = out.record_probs(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
        for d in &out.pi0_draws {
            assert!(is_simplex(d, 1e-12));
        }
        let eta = out.eta_mean.as_ref().unwrap();
        for row in eta.chunks(2) {
            assert!(is_simplex(row, 1e-9));
        }
    }
}

#[test]
fn single_variants_need_pooled_checkpoints() {
    let (train, target, _) = generate_scenario(&small_spec(Scenario::IndepDomains, 5)).unwrap();
    let ckpt = run_training(&train, &short_config(5, false)).unwrap().checkpoint;
    for v in [TargetVariant::SingleConstant, TargetVariant::SingleNewWeights] {
        let err = run_prediction(&ckpt, &target, v, &PredictConfig::default()).unwrap_err();
        assert!(err.to_string().contains("pooled"), "{err}");
    }
}

#[test]
fn outputs_do_not_depend_on_thread_budget() {
    let (train, target, _) = generate_scenario(&small_spec(Scenario::DepDomains, 6)).unwrap();
    let run = |threads| {
        with_threads(threads, || {
            let ckpt = run_training(&train, &short_config(6, false)).unwrap().checkpoint;
            let config = PredictConfig {
                iterations: 40,
                burn_in: 20,
                chains: 2,
                ..PredictConfig::default()
            };
            let out =
                run_prediction(&ckpt, &target, TargetVariant::MultiDomainCauseMixture, &config)
                    .unwrap();
            (checkpoint_bytes(&ckpt), out)
        })
        .unwrap()
    };
    let (b1, o1) = run(1);
    let (b4, o4) = run(4);
    assert_eq!(b1, b4);
    assert_eq!(o1, o4);

    let other = run_training(&train, &short_config(7, false)).unwrap().checkpoint;
    assert_ne!(checkpoint_bytes(&other), b1);
}

#[test]
fn chains_are_concatenated_in_order() {
    let (train, _, _) = generate_scenario(&small_spec(Scenario::SingleDomain, 8)).unwrap();
    let ckpt = run_training(&train, &short_config(8, true)).unwrap().checkpoint;
    assert_eq!(ckpt.num_draws(), 2 * 40);
    let chains: Vec<u32> = ckpt.draws.iter().map(|d| d.provenance.chain).collect();
    assert!(chains[..40].iter().all(|&c| c == 0));
    assert!(chains[40..].iter().all(|&c| c == 1));
    assert_eq!(ckpt.draws[0].provenance.iteration, 20);
}

#[test]
fn checkpoint_file_round_trip() {
    let (train, _, _) = generate_scenario(&small_spec(Scenario::SingleDomain, 9)).unwrap();
    let config = TrainChainConfig {
        iterations: 6,
        burn_in: 2,
        chains: 1,
        ..short_config(9, false)
    };
    let ckpt = run_training(&train, &config).unwrap().checkpoint;
    assert_eq!(ckpt.num_draws(), 4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.sci");
    ckpt.write_path(&path).unwrap();
    let back = SciCheckpoint::read_path(&path).unwrap();
    assert_eq!(back, ckpt);
    let len = std::fs::metadata(&path).unwrap().len() as usize;
    let dims = ckpt.dims;
    let payload = 4 * (dims.theta_len() + dims.lambda_len()) * 8;
    assert!(len > payload);
    let labels = ckpt.labels_json();
    assert_eq!(labels["causes"][0], "cause01");
}

#[test]
fn class_relabeling_leaves_likelihood_unchanged() {
    let dims = Dims::new(2, 3, 4, 1).unwrap();
    let mut rng = RngStream::new(10, 0);
    let theta: Vec<f64> = (0..dims.theta_len()).map(|_| rng.random::<f64>() * 0.9 + 0.05).collect();
    let lambda = [0.2, 0.5, 0.3, 0.6, 0.1, 0.3];
    let perm = [2, 0, 1];
    let mut theta_p = theta.clone();
    let mut lambda_p = lambda;
    for c in 0..2 {
        for k in 0..3 {
            let src = perm[k];
            lambda_p[c * 3 + k] = lambda[c * 3 + src];
            for j in 0..4 {
                theta_p[(c * 3 + k) * 4 + j] = theta[(c * 3 + src) * 4 + j];
            }
        }
    }
    let record = Record::from_row(0, Some(1), &[Some(true), None, Some(false), Some(true)]);
    let loglik = |theta: &[f64], lambda: &[f64], c: usize| {
        let lt = LogTheta::from_theta(theta);
        let mut w = vec![0.0; 3];
        lt.class_loglik(&dims, c, &record.yes, &record.no, &mut w);
        for (wk, l) in w.iter_mut().zip(&lambda[c * 3..c * 3 + 3]) {
            *wk += l.ln();
        }
        logsumexp(&w)
    };
    for c in 0..2 {
        let a = loglik(&theta, &lambda, c);
        let b = loglik(&theta_p, &lambda_p, c);
        assert!((a - b).abs() < 1e-12);
    }
}
