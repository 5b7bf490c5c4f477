use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Instant;

use lcva::{EvalReport, LabelDictionary, LcvaError, VaDataset};
use serde::{Deserialize, Serialize};

use crate::config::FileConfig;
use crate::manifest;
use crate::predict::{CsmfFile, CSMF_FILE, TOP_CAUSES_FILE};
use crate::{required, CliResult, EvaluateArgs};

#[derive(Debug, Serialize)]
struct Resolved {
    pred_dir: PathBuf,
    truth: PathBuf,
    out_dir: PathBuf,
}

#[derive(Debug, Deserialize)]
struct TopCause {
    id: String,
    cause: String,
}

pub fn run(args: EvaluateArgs, file: &FileConfig) -> CliResult<()> {
    let started = Instant::now();
    let f = &file.evaluate;
    let pred_dir = required(args.pred_dir.or(f.pred_dir.clone()), "pred-dir")?;
    let cfg = Resolved {
        truth: required(args.truth.or(f.truth.clone()), "truth")?,
        out_dir: args.out_dir.or(f.out_dir.clone()).unwrap_or_else(|| pred_dir.clone()),
        pred_dir,
    };

    let csmf_path = cfg.pred_dir.join(CSMF_FILE);
    let csmf: CsmfFile = serde_json::from_reader(std::io::BufReader::new(
        std::fs::File::open(&csmf_path)
            .map_err(|e| crate::CliError::Run(format!("{}: {e}", csmf_path.display())))?,
    ))?;
    let labels = LabelDictionary::new(csmf.causes.iter().map(|r| r.cause.clone()).collect())?;
    let est: Vec<f64> = csmf.causes.iter().map(|r| r.summary.mean).collect();
    let bounds: Vec<(f64, f64)> = csmf
        .causes
        .iter()
        .map(|r| (r.summary.q025, r.summary.q975))
        .collect();

    let truth_ds = VaDataset::from_csv_path(&cfg.truth, None, None)?;
    let unknown: Vec<&str> = truth_ds
        .cause_labels
        .labels()
        .iter()
        .filter(|l| labels.index_of(l).is_none())
        .map(String::as_str)
        .collect();
    if !unknown.is_empty() {
        return Err(LcvaError::DimensionMismatch(format!(
            "prediction covers C={} causes but the truth file has C={} (unknown: {})",
            labels.len(),
            truth_ds.cause_labels.len(),
            unknown.join(", ")
        ))
        .into());
    }
    let use_target = truth_ds.domains.contains(&0);
    let mut truth_by_id = HashMap::new();
    for i in 0..truth_ds.len() {
        if use_target && truth_ds.domains[i] != 0 {
            continue;
        }
        if let Some(c) = truth_ds.causes[i] {
            let label = truth_ds.cause_labels.label(c);
            truth_by_id.insert(truth_ds.ids[i].as_str(), labels.index_of(label).unwrap());
        }
    }

    let top_path = cfg.pred_dir.join(TOP_CAUSES_FILE);
    let mut rdr = csv::Reader::from_path(&top_path)?;
    let mut predicted = Vec::new();
    let mut truth = Vec::new();
    for row in rdr.deserialize() {
        let row: TopCause = row?;
        let Some(&t) = truth_by_id.get(row.id.as_str()) else {
            return Err(crate::CliError::Run(format!(
                "record `{}` has no true cause in {}",
                row.id,
                cfg.truth.display()
            )));
        };
        let p = labels.index_of(&row.cause).ok_or(LcvaError::UnknownLabel {
            kind: "cause",
            label: row.cause.clone(),
        })?;
        predicted.push(p);
        truth.push(t);
    }
    if truth.is_empty() {
        return Err(crate::CliError::Run("no predicted records to evaluate".into()));
    }

    let report = EvalReport::from_estimates(&labels, &est, Some(&bounds), &predicted, &truth)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let json_path = cfg.out_dir.join("report.json");
    manifest::write_json(&json_path, &report)?;
    let csv_path = cfg.out_dir.join("report.csv");
    report.write_csv(std::io::BufWriter::new(std::fs::File::create(&csv_path)?))?;
    eprintln!(
        "CSMF accuracy {:.4}, top-cause accuracy {:.4} over {} record(s)",
        report.csmf_accuracy, report.top_cause_accuracy, report.n
    );
    let inputs = [csmf_path, top_path, cfg.truth.clone()];
    manifest::write(
        &cfg.out_dir.join("evaluate.manifest.json"),
        "evaluate",
        &cfg,
        &[&inputs[0], &inputs[1], &inputs[2]],
        vec![json_path, csv_path],
        1,
        started,
    )
}
