//! Config file support. Keys mirror the long flag names; a flag given on the
//! command line always wins over the file, and the file over defaults.
//!
//! ```toml
//! threads = 4
//!
//! [train]
//! data = "train.csv"
//! k = 3
//! burn-in = 1000
//!
//! [hyperparams]
//! nu-phi = 2.0
//! ```

use std::path::{Path, PathBuf};

use lcva::HyperParams;
use serde::Deserialize;

use crate::{CliError, CliResult, HyperArgs};

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub threads: Option<usize>,
    pub train: TrainFile,
    pub predict: PredictFile,
    pub simulate: SimulateFile,
    pub evaluate: EvaluateFile,
    pub bench: BenchFile,
    pub hyperparams: HyperFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainFile {
    pub data: Option<PathBuf>,
    pub k: Option<usize>,
    pub iters: Option<usize>,
    pub burn_in: Option<usize>,
    pub chains: Option<usize>,
    pub thin: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub pool: Option<bool>,
    pub tau_zero: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct PredictFile {
    pub ckpt: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub variant: Option<String>,
    pub iters: Option<usize>,
    pub burn_in: Option<usize>,
    pub chains: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub full_probs: Option<bool>,
    pub rao_blackwell: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct DimsFile {
    pub causes: Option<usize>,
    pub symptoms: Option<usize>,
    pub domains: Option<usize>,
    pub classes: Option<usize>,
    pub per_domain: Option<usize>,
    pub uneven: Option<usize>,
    pub major_fraction: Option<f64>,
    pub target_size: Option<usize>,
    pub missing_rate: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateFile {
    pub scenario: Option<String>,
    #[serde(flatten)]
    pub dims: DimsFile,
    pub resample: Option<bool>,
    pub data: Option<PathBuf>,
    pub inclusion: Option<f64>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EvaluateFile {
    pub pred_dir: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct BenchFile {
    pub scenario: Option<String>,
    #[serde(flatten)]
    pub dims: DimsFile,
    pub k: Option<usize>,
    pub train_iters: Option<usize>,
    pub predict_iters: Option<usize>,
    pub chains: Option<usize>,
    pub budgets: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct HyperFile {
    pub nu_phi: Option<f64>,
    pub a_gamma: Option<f64>,
    pub b_gamma: Option<f64>,
    pub nu_tau: Option<f64>,
    pub a_omega: Option<f64>,
    pub b_omega: Option<f64>,
    pub alpha_pi: Option<f64>,
    pub alpha_eta: Option<f64>,
    pub alpha_pi_target_scale: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Layers flag overrides, then file values, over `base`.
pub fn resolve_hyper(base: HyperParams, flags: &HyperArgs, file: &HyperFile) -> HyperParams {
    let pick = |flag: Option<f64>, file: Option<f64>, default: f64| flag.or(file).unwrap_or(default);
    HyperParams {
        nu_phi: pick(flags.nu_phi, file.nu_phi, base.nu_phi),
        a_gamma: pick(flags.a_gamma, file.a_gamma, base.a_gamma),
        b_gamma: pick(flags.b_gamma, file.b_gamma, base.b_gamma),
        nu_tau: pick(flags.nu_tau, file.nu_tau, base.nu_tau),
        a_omega: pick(flags.a_omega, file.a_omega, base.a_omega),
        b_omega: pick(flags.b_omega, file.b_omega, base.b_omega),
        alpha_pi: pick(flags.alpha_pi, file.alpha_pi, base.alpha_pi),
        alpha_eta: pick(flags.alpha_eta, file.alpha_eta, base.alpha_eta),
        alpha_pi_target_scale: pick(
            flags.alpha_pi_target_scale,
            file.alpha_pi_target_scale,
            base.alpha_pi_target_scale,
        ),
    }
}

pub fn hyper_overridden(flags: &HyperArgs, file: &HyperFile) -> bool {
    [
        flags.nu_phi.or(file.nu_phi),
        flags.a_gamma.or(file.a_gamma),
        flags.b_gamma.or(file.b_gamma),
        flags.nu_tau.or(file.nu_tau),
        flags.a_omega.or(file.a_omega),
        flags.b_omega.or(file.b_omega),
        flags.alpha_pi.or(file.alpha_pi),
        flags.alpha_eta.or(file.alpha_eta),
        flags.alpha_pi_target_scale.or(file.alpha_pi_target_scale),
    ]
    .iter()
    .any(Option::is_some)
}

/// Parses an enum-valued setting that came from the config file.
pub fn parse_value_enum<T: clap::ValueEnum>(value: &str, key: &str) -> CliResult<T> {
    T::from_str(value, false).map_err(|_| {
        let allowed: Vec<String> = T::value_variants()
            .iter()
            .filter_map(|v| v.to_possible_value().map(|p| p.get_name().to_string()))
            .collect();
        CliError::Usage(format!(
            "invalid {key} `{value}` (expected one of: {})",
            allowed.join(", ")
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::VariantArg;

    #[test]
    fn kebab_case_sections_parse() {
        let cfg: FileConfig = toml::from_str(
            "threads = 3\n[predict]\nvariant = \"multi-domain\"\nburn-in = 5\n\
             [simulate]\nscenario = \"dep-domains\"\nper-domain = 40\n",
        )
        .unwrap();
        assert_eq!(cfg.threads, Some(3));
        assert_eq!(cfg.predict.burn_in, Some(5));
        assert_eq!(cfg.simulate.dims.per_domain, Some(40));
        let v: VariantArg = parse_value_enum(cfg.predict.variant.as_deref().unwrap(), "variant").unwrap();
        assert_eq!(v, VariantArg::MultiDomain);
        assert!(matches!(
            parse_value_enum::<VariantArg>("bogus", "variant"),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn flag_beats_file_beats_base() {
        let flags = HyperArgs {
            nu_phi: Some(4.0),
            ..HyperArgs::default()
        };
        let file = HyperFile {
            nu_phi: Some(2.0),
            b_gamma: Some(7.0),
            ..HyperFile::default()
        };
        let base = HyperParams::default();
        let hp = resolve_hyper(base, &flags, &file);
        assert_eq!(hp.nu_phi, 4.0);
        assert_eq!(hp.b_gamma, 7.0);
        assert_eq!(hp.a_gamma, base.a_gamma);
        assert!(hyper_overridden(&flags, &HyperFile::default()));
        assert!(!hyper_overridden(&HyperArgs::default(), &HyperFile::default()));
    }
}
