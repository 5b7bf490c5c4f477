use std::path::PathBuf;
use std::time::Instant;

use lcva::data::{validate_dataset, CheckStatus};
use lcva::train::{with_threads, Pins};
use lcva::{run_training, Dims, HyperParams, TrainChainConfig, VaDataset};
use serde::Serialize;

use crate::config::{resolve_hyper, FileConfig};
use crate::manifest::{self, sidecar};
use crate::{required, CliResult, TrainArgs};

#[derive(Debug, Serialize)]
struct Resolved {
    data: PathBuf,
    out: PathBuf,
    k: usize,
    iters: usize,
    burn_in: usize,
    chains: usize,
    thin: usize,
    seed: u64,
    pool: bool,
    tau_zero: bool,
    hyperparams: HyperParams,
}

pub fn run(args: TrainArgs, file: &FileConfig, threads: usize) -> CliResult<()> {
    let started = Instant::now();
    let f = &file.train;
    let defaults = TrainChainConfig::default();
    let iters = args.iters.or(f.iters).unwrap_or(defaults.iterations);
    let cfg = Resolved {
        data: required(args.data.or(f.data.clone()), "data")?,
        out: required(args.out.or(f.out.clone()), "out")?,
        k: args.k.or(f.k).unwrap_or(defaults.classes),
        iters,
        burn_in: args.burn_in.or(f.burn_in).unwrap_or(iters / 2),
        chains: args.chains.or(f.chains).unwrap_or(defaults.chains),
        thin: args.thin.or(f.thin).unwrap_or(defaults.thin),
        seed: args.seed.or(f.seed).unwrap_or(defaults.seed),
        pool: args.pool || f.pool.unwrap_or(false),
        tau_zero: args.tau_zero || f.tau_zero.unwrap_or(false),
        hyperparams: resolve_hyper(HyperParams::default(), &args.hyper, &file.hyperparams),
    };
    let config = TrainChainConfig {
        iterations: cfg.iters,
        burn_in: cfg.burn_in,
        chains: cfg.chains,
        thin: cfg.thin,
        seed: cfg.seed,
        classes: cfg.k,
        pooled: cfg.pool,
        pins: Pins {
            tau_zero: cfg.tau_zero,
        },
        hyperparams: cfg.hyperparams,
    };
    config.check()?;

    let ds = VaDataset::from_csv_path(&cfg.data, None, None)?;
    let train = ds.training_part();
    let dims = Dims::new(ds.num_causes(), cfg.k, ds.num_symptoms(), ds.num_domains().max(1))?;
    for check in validate_dataset(&train, &dims)?.checks {
        if check.status == CheckStatus::Warn {
            eprintln!("warning: {}: {}", check.name, check.detail);
        }
    }

    let output = with_threads(threads, || run_training(&ds, &config))??;
    let ckpt = &output.checkpoint;
    ckpt.write_path(&cfg.out)?;
    let mut outputs = vec![cfg.out.clone()];

    let labels = sidecar(&cfg.out, ".labels.json");
    manifest::write_json(&labels, &ckpt.labels_json())?;
    outputs.push(labels);
    for (chain, trace) in output.traces.iter().enumerate() {
        let path = sidecar(&cfg.out, &format!(".trace.{chain}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        for row in trace {
            w.serialize(row)?;
        }
        w.flush()?;
        outputs.push(path);
    }
    eprintln!(
        "trained C={} K={} P={} G={}: {} draws from {} chain(s) -> {}",
        ckpt.dims.causes,
        ckpt.dims.classes,
        ckpt.dims.symptoms,
        ckpt.dims.domains,
        ckpt.num_draws(),
        cfg.chains,
        cfg.out.display()
    );
    let manifest_path = sidecar(&cfg.out, ".manifest.json");
    let data = cfg.data.clone();
    manifest::write(&manifest_path, "train", &cfg, &[&data], outputs, threads, started)
}
