use std::path::PathBuf;
use std::time::Instant;

use lcva::synth::{
    generate_scenario, resample_synthetic_domain, InclusionDraw, SamplePlan, ScenarioSpec,
};
use lcva::{RngStream, VaDataset};
use serde::Serialize;

use crate::config::{parse_value_enum, DimsFile, FileConfig};
use crate::manifest;
use crate::{required, CliError, CliResult, DimsArgs, ScenarioArg, SimulateArgs};

const RESAMPLE_STREAM: u64 = 0x5245_5341;

/// Scenario spec from flags over file values over the library defaults.
pub fn resolve_spec(
    scenario: ScenarioArg,
    flags: &DimsArgs,
    file: &DimsFile,
    seed: u64,
) -> ScenarioSpec {
    let base = ScenarioSpec::new(scenario.scenario(), seed);
    let plan = match flags.uneven.or(file.uneven) {
        Some(total) => SamplePlan::Uneven {
            total,
            major_fraction: flags.major_fraction.or(file.major_fraction).unwrap_or(0.5),
        },
        None => match flags.per_domain.or(file.per_domain) {
            Some(per_domain) => SamplePlan::Even { per_domain },
            None => base.plan,
        },
    };
    ScenarioSpec {
        causes: flags.causes.or(file.causes).unwrap_or(base.causes),
        symptoms: flags.symptoms.or(file.symptoms).unwrap_or(base.symptoms),
        domains: flags.domains.or(file.domains).unwrap_or(base.domains),
        classes: flags.classes.or(file.classes).unwrap_or(base.classes),
        plan,
        target_size: flags.target_size.or(file.target_size).unwrap_or(base.target_size),
        missing_rate: flags.missing_rate.or(file.missing_rate).unwrap_or(base.missing_rate),
        ..base
    }
}

pub fn resolve_scenario(flag: Option<ScenarioArg>, file: &Option<String>) -> CliResult<Option<ScenarioArg>> {
    match (flag, file) {
        (Some(s), _) => Ok(Some(s)),
        (None, Some(s)) => parse_value_enum::<ScenarioArg>(s, "scenario").map(Some),
        (None, None) => Ok(None),
    }
}

#[derive(Debug, Serialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
enum Resolved {
    Scenario {
        spec: ScenarioSpec,
        out_dir: PathBuf,
    },
    Resample {
        data: PathBuf,
        inclusion: Option<f64>,
        seed: u64,
        out_dir: PathBuf,
    },
}

pub fn run(args: SimulateArgs, file: &FileConfig) -> CliResult<()> {
    let started = Instant::now();
    let f = &file.simulate;
    let seed = args.seed.or(f.seed).unwrap_or(1);
    let out_dir = args.out_dir.or(f.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    let resample = args.resample || f.resample.unwrap_or(false);
    let scenario = resolve_scenario(args.scenario, &f.scenario)?;

    std::fs::create_dir_all(&out_dir)?;
    let train_path = out_dir.join("train.csv");
    let target_path = out_dir.join("target.csv");
    let mut outputs = vec![train_path.clone(), target_path.clone()];

    let (cfg, inputs) = if resample {
        if scenario.is_some() {
            return Err(CliError::Usage(
                "--scenario and --resample are mutually exclusive".into(),
            ));
        }
        let data = required(args.data.or(f.data.clone()), "data")?;
        let inclusion = args.inclusion.or(f.inclusion);
        let draw = match inclusion {
            Some(q) if (0.0..=1.0).contains(&q) => InclusionDraw::Fixed(q),
            Some(q) => {
                return Err(CliError::Usage(format!(
                    "--inclusion must lie in [0, 1], got {q}"
                )))
            }
            None => InclusionDraw::Mixture,
        };
        let full = VaDataset::from_csv_path(&data, None, None)?;
        let mut rng = RngStream::new(seed, RESAMPLE_STREAM);
        let (train, target) = resample_synthetic_domain(&full, draw, &mut rng)?;
        train.write_csv_path(&train_path)?;
        target.write_csv_path(&target_path)?;
        eprintln!(
            "resampled {} labeled record(s): {} training, {} target -> {}",
            train.len() + target.len(),
            train.len(),
            target.len(),
            out_dir.display()
        );
        let inputs = vec![data.clone()];
        let cfg = Resolved::Resample {
            data,
            inclusion,
            seed,
            out_dir: out_dir.clone(),
        };
        (cfg, inputs)
    } else {
        let Some(scenario) = scenario else {
            return Err(CliError::Usage(
                "missing required --scenario (or --resample --data)".into(),
            ));
        };
        let spec = resolve_spec(scenario, &args.dims, &f.dims, seed);
        spec.check()?;
        let (train, target, truth) = generate_scenario(&spec)?;
        train.write_csv_path(&train_path)?;
        target.write_csv_path(&target_path)?;
        let truth_path = out_dir.join("truth.json");
        manifest::write_json(&truth_path, &truth)?;
        outputs.push(truth_path);
        eprintln!(
            "simulated {}: {} training and {} target record(s) -> {}",
            spec.scenario.name(),
            train.len(),
            target.len(),
            out_dir.display()
        );
        (
            Resolved::Scenario {
                spec,
                out_dir: out_dir.clone(),
            },
            Vec::new(),
        )
    };
    let refs: Vec<&std::path::Path> = inputs.iter().map(PathBuf::as_path).collect();
    manifest::write(
        &out_dir.join("manifest.json"),
        "simulate",
        &cfg,
        &refs,
        outputs,
        1,
        started,
    )
}
