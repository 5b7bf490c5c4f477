use std::path::PathBuf;
use std::time::Instant;

use lcva::predict::CauseSummary;
use lcva::train::with_threads;
use lcva::{run_prediction, HyperParams, PredictConfig, SciCheckpoint, TargetVariant, VaDataset};
use serde::{Deserialize, Serialize};

use crate::config::{hyper_overridden, parse_value_enum, resolve_hyper, FileConfig};
use crate::manifest;
use crate::{required, CliResult, PredictArgs, VariantArg};

#[derive(Debug, Serialize)]
struct Resolved {
    ckpt: PathBuf,
    data: PathBuf,
    variant: &'static str,
    iters: usize,
    burn_in: usize,
    chains: usize,
    seed: u64,
    out_dir: PathBuf,
    full_probs: bool,
    rao_blackwell: bool,
    hyperparams: HyperParams,
}

/// Posterior summary of one cause's target CSMF.
#[derive(Debug, Serialize, Deserialize)]
pub struct CsmfRow {
    pub cause: String,
    #[serde(flatten)]
    pub summary: CauseSummary,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CsmfFile {
    pub variant: String,
    pub records: usize,
    pub draws: usize,
    pub causes: Vec<CsmfRow>,
}

pub const CSMF_FILE: &str = "csmf.json";
pub const TOP_CAUSES_FILE: &str = "top_causes.csv";
pub const PROBS_FILE: &str = "probabilities.csv";
pub const ETA_FILE: &str = "eta.json";

pub fn run(args: PredictArgs, file: &FileConfig, threads: usize) -> CliResult<()> {
    let started = Instant::now();
    let f = &file.predict;
    let variant = match (args.variant, &f.variant) {
        (Some(v), _) => v,
        (None, Some(s)) => parse_value_enum::<VariantArg>(s, "variant")?,
        (None, None) => return Err(crate::CliError::Usage("missing required --variant".into())),
    }
    .variant();
    let defaults = PredictConfig::default();
    let iters = args.iters.or(f.iters).unwrap_or(defaults.iterations);
    let ckpt_path = required(args.ckpt.or(f.ckpt.clone()), "ckpt")?;
    let data = required(args.data.or(f.data.clone()), "data")?;
    let out_dir = args.out_dir.or(f.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."));

    let ckpt = SciCheckpoint::read_path(&ckpt_path)?;
    if !variant.is_multi() && ckpt.dims.domains >= 2 {
        return Err(crate::CliError::Run(format!(
            "variant `{}` needs a pooled checkpoint but {} has G={} training domains; \
             retrain with `lcva train --pool`, or use multi-domain / multi-domain-cause",
            variant.name(),
            ckpt_path.display(),
            ckpt.dims.domains
        )));
    }
    let overridden = hyper_overridden(&args.hyper, &file.hyperparams);
    let hyperparams = resolve_hyper(ckpt.hyperparams, &args.hyper, &file.hyperparams);
    let cfg = Resolved {
        ckpt: ckpt_path,
        data,
        variant: variant.name(),
        iters,
        burn_in: args.burn_in.or(f.burn_in).unwrap_or(iters / 2),
        chains: args.chains.or(f.chains).unwrap_or(defaults.chains),
        seed: args.seed.or(f.seed).unwrap_or(defaults.seed),
        out_dir,
        full_probs: args.full_probs || f.full_probs.unwrap_or(false),
        rao_blackwell: !args.no_rao_blackwell && f.rao_blackwell.unwrap_or(true),
        hyperparams,
    };
    let config = PredictConfig {
        iterations: cfg.iters,
        burn_in: cfg.burn_in,
        chains: cfg.chains,
        seed: cfg.seed,
        rao_blackwell: cfg.rao_blackwell,
        hyperparams: overridden.then_some(hyperparams),
    };

    let ds = VaDataset::from_csv_path(&cfg.data, Some(&ckpt.cause_labels), None)?;
    let out = with_threads(threads, || run_prediction(&ckpt, &ds, variant, &config))??;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let labels = ckpt.cause_labels.labels();
    let mut outputs = Vec::new();

    let path = cfg.out_dir.join(TOP_CAUSES_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["id", "cause", "probability"])?;
    for (id, (c, p)) in out.ids.iter().zip(out.top_causes()) {
        w.write_record([id.as_str(), labels[c].as_str(), &p.to_string()])?;
    }
    w.flush()?;
    outputs.push(path);

    if cfg.full_probs {
        let path = cfg.out_dir.join(PROBS_FILE);
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["id".to_string()];
        header.extend(labels.iter().cloned());
        w.write_record(&header)?;
        for (i, id) in out.ids.iter().enumerate() {
            let mut row = vec![id.clone()];
            row.extend(out.record_probs(i).iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        outputs.push(path);
    }

    let csmf = CsmfFile {
        variant: variant.name().to_string(),
        records: out.num_records(),
        draws: out.pi0_draws.len(),
        causes: labels
            .iter()
            .zip(&out.pi0_summary)
            .map(|(cause, s)| CsmfRow {
                cause: cause.clone(),
                summary: *s,
            })
            .collect(),
    };
    let path = cfg.out_dir.join(CSMF_FILE);
    manifest::write_json(&path, &csmf)?;
    outputs.push(path);

    if let Some(eta) = &out.eta_mean {
        let domains = ckpt.domain_labels.labels();
        let g_n = domains.len();
        let value = match variant {
            TargetVariant::MultiDomainMixture => serde_json::json!({
                "variant": variant.name(),
                "domains": domains,
                "mean": eta,
            }),
            _ => serde_json::json!({
                "variant": variant.name(),
                "domains": domains,
                "causes": labels
                    .iter()
                    .enumerate()
                    .map(|(c, cause)| serde_json::json!({
                        "cause": cause,
                        "mean": &eta[c * g_n..(c + 1) * g_n],
                    }))
                    .collect::<Vec<_>>(),
            }),
        };
        let path = cfg.out_dir.join(ETA_FILE);
        manifest::write_json(&path, &value)?;
        outputs.push(path);
    }

    eprintln!(
        "predicted {} TARGET record(s) with {} -> {}",
        out.num_records(),
        variant.name(),
        cfg.out_dir.display()
    );
    let manifest_path = cfg.out_dir.join("manifest.json");
    let inputs = [cfg.ckpt.clone(), cfg.data.clone()];
    manifest::write(
        &manifest_path,
        "predict",
        &cfg,
        &[&inputs[0], &inputs[1]],
        outputs,
        threads,
        started,
    )
}
