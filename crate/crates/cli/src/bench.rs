use std::time::Instant;

use lcva::synth::generate_scenario;
use lcva::train::with_threads;
use lcva::{run_prediction, run_training, PredictConfig, TargetVariant, TrainChainConfig};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::FileConfig;
use crate::manifest::{self, to_hex};
use crate::simulate::{resolve_scenario, resolve_spec};
use crate::{BenchArgs, CliError, CliResult, ScenarioArg};

#[derive(Debug, Serialize)]
struct BudgetRun {
    threads: usize,
    train_secs: f64,
    /// Training sweeps per second summed over chains.
    train_sweeps_per_sec: f64,
    predict_secs: f64,
    predict_sweeps_per_sec: f64,
    train_speedup: f64,
    predict_speedup: f64,
    checksum: String,
}

#[derive(Debug, Serialize)]
struct BenchReport {
    scenario: &'static str,
    causes: usize,
    symptoms: usize,
    domains: usize,
    records: usize,
    target_records: usize,
    k: usize,
    chains: usize,
    train_iters: usize,
    predict_iters: usize,
    variant: &'static str,
    runs: Vec<BudgetRun>,
    deterministic: bool,
}

pub fn run(args: BenchArgs, file: &FileConfig) -> CliResult<()> {
    let f = &file.bench;
    let scenario = resolve_scenario(args.scenario, &f.scenario)?.unwrap_or(ScenarioArg::SingleDomain);
    let seed = args.seed.or(f.seed).unwrap_or(1);
    let spec = resolve_spec(scenario, &args.dims, &f.dims, seed);
    spec.check()?;
    let k = args.k.or(f.k).unwrap_or(3);
    let train_iters = args.train_iters.or(f.train_iters).unwrap_or(200);
    let predict_iters = args.predict_iters.or(f.predict_iters).unwrap_or(100);
    let budgets = args
        .budgets
        .or(f.budgets.clone())
        .unwrap_or_else(|| vec![1, 6]);
    if budgets.is_empty() || budgets.contains(&0) || train_iters < 2 || predict_iters < 2 {
        return Err(CliError::Usage(
            "budgets must be positive and iteration counts at least 2".into(),
        ));
    }
    let chains = args
        .chains
        .or(f.chains)
        .unwrap_or_else(|| budgets.iter().copied().max().unwrap());

    let (train, target, _) = generate_scenario(&spec)?;
    let variant = if spec.domains >= 2 {
        TargetVariant::MultiDomainMixture
    } else {
        TargetVariant::SingleConstant
    };
    let tcfg = TrainChainConfig {
        iterations: train_iters,
        burn_in: train_iters / 2,
        chains,
        seed,
        classes: k,
        pooled: !variant.is_multi(),
        ..TrainChainConfig::default()
    };
    tcfg.check()?;
    let pcfg = PredictConfig {
        iterations: predict_iters,
        burn_in: predict_iters / 2,
        chains,
        seed,
        ..PredictConfig::default()
    };

    let mut runs: Vec<BudgetRun> = Vec::new();
    for &threads in &budgets {
        let (train_secs, predict_secs, checksum) = with_threads(threads, || -> CliResult<_> {
            let start = Instant::now();
            let trained = run_training(&train, &tcfg)?;
            let train_secs = start.elapsed().as_secs_f64();
            let start = Instant::now();
            let pred = run_prediction(&trained.checkpoint, &target, variant, &pcfg)?;
            let predict_secs = start.elapsed().as_secs_f64();

            let mut h = Sha256::new();
            let mut bytes = Vec::new();
            trained.checkpoint.write_to(&mut bytes)?;
            h.update(&bytes);
            for x in pred.cause_probs.iter().chain(pred.pi0_draws.iter().flatten()) {
                h.update(x.to_le_bytes());
            }
            Ok((train_secs, predict_secs, to_hex(&h.finalize())))
        })??;
        let train_rate = (chains * train_iters) as f64 / train_secs;
        let predict_rate = (chains * predict_iters) as f64 / predict_secs;
        let (train_base, predict_base) = runs
            .first()
            .map_or((train_rate, predict_rate), |r| {
                (r.train_sweeps_per_sec, r.predict_sweeps_per_sec)
            });
        eprintln!(
            "threads={threads}: train {train_rate:.1} sweeps/s, predict {predict_rate:.1} sweeps/s"
        );
        runs.push(BudgetRun {
            threads,
            train_secs,
            train_sweeps_per_sec: train_rate,
            predict_secs,
            predict_sweeps_per_sec: predict_rate,
            train_speedup: train_rate / train_base,
            predict_speedup: predict_rate / predict_base,
            checksum,
        });
    }

    let report = BenchReport {
        scenario: spec.scenario.name(),
        causes: spec.causes,
        symptoms: spec.symptoms,
        domains: spec.domains,
        records: train.len(),
        target_records: target.len(),
        k,
        chains,
        train_iters,
        predict_iters,
        variant: variant.name(),
        deterministic: runs.windows(2).all(|w| w[0].checksum == w[1].checksum),
        runs,
    };
    match args.out.or(f.out.clone()) {
        Some(path) => manifest::write_json(&path, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}
