//! Symptom-cause information (SCI) checkpoints: the posterior draws of
//! `(theta, lambda)` carried from training into prediction.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"LCVASCI\n"
//! 8       4     format version (u32)
//! 12      8     header length H in bytes (u64)
//! 20      H     UTF-8 JSON header
//! 20+H    ...   S draws of f64: theta[c][k][j] row-major, then lambda[g][c][k]
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{CauseDomainCounts, Dims, LabelDictionary, VaDataset};
use crate::error::{LcvaError, Result};
use crate::state::{is_simplex, HyperParams};

pub const MAGIC: &[u8; 8] = b"LCVASCI\n";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawProvenance {
    pub chain: u32,
    pub iteration: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    /// `C x K x P`.
    pub theta: Vec<f64>,
    /// `G x C x K`.
    pub lambda: Vec<f64>,
    pub provenance: DrawProvenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SciCheckpoint {
    pub dims: Dims,
    pub symptom_names: Vec<String>,
    pub cause_labels: LabelDictionary,
    pub domain_labels: LabelDictionary,
    /// Fraction of labeled training deaths per (cause, domain); the prior
    /// centre for cause-level domain mixtures.
    pub cause_domain: CauseDomainCounts,
    pub hyperparams: HyperParams,
    /// Whether training collapsed all domains into one.
    pub pooled: bool,
    pub draws: Vec<Draw>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    dims: Dims,
    symptom_names: Vec<String>,
    cause_labels: LabelDictionary,
    domain_labels: LabelDictionary,
    cause_domain: CauseDomainCounts,
    hyperparams: HyperParams,
    pooled: bool,
    num_draws: usize,
    provenance: Vec<DrawProvenance>,
    payload_bytes: u64,
}

impl SciCheckpoint {
    pub fn num_draws(&self) -> usize {
        self.draws.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.check()?;
        let d = &self.dims;
        if self.draws.is_empty() {
            return Err(LcvaError::Checkpoint("checkpoint has no draws".into()));
        }
        if self.cause_labels.len() != d.causes {
            return Err(LcvaError::Checkpoint(format!(
                "cause dictionary has {} labels, dims say C={}",
                self.cause_labels.len(),
                d.causes
            )));
        }
        if self.symptom_names.len() != d.symptoms {
            return Err(LcvaError::Checkpoint(format!(
                "{} symptom names, dims say P={}",
                self.symptom_names.len(),
                d.symptoms
            )));
        }
        if self.cause_domain.causes != d.causes || self.cause_domain.domains != d.domains {
            return Err(LcvaError::Checkpoint(
                "cause-domain fractions do not match dims".into(),
            ));
        }
        for (s, draw) in self.draws.iter().enumerate() {
            if draw.theta.len() != d.theta_len() || draw.lambda.len() != d.lambda_len() {
                return Err(LcvaError::Checkpoint(format!("draw {s} has wrong shape")));
            }
            if draw.theta.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
                return Err(LcvaError::Checkpoint(format!(
                    "draw {s} has theta outside (0, 1)"
                )));
            }
            if !draw
                .lambda
                .chunks(d.classes)
                .all(|row| is_simplex(row, 1e-9))
            {
                return Err(LcvaError::Checkpoint(format!(
                    "draw {s} has a lambda row off the simplex"
                )));
            }
        }
        Ok(())
    }

    /// Checks that a target dataset speaks the same symptom and cause
    /// vocabulary as this checkpoint.
    pub fn check_compatible(&self, ds: &VaDataset) -> Result<()> {
        if ds.num_symptoms() != self.dims.symptoms {
            return Err(LcvaError::DimensionMismatch(format!(
                "checkpoint has P={} symptoms ({}), data has P={}",
                self.dims.symptoms,
                self.dims,
                ds.num_symptoms()
            )));
        }
        if let Some((j, (a, b))) = self
            .symptom_names
            .iter()
            .zip(&ds.symptom_names)
            .enumerate()
            .find(|(_, (a, b))| a != b)
        {
            return Err(LcvaError::DimensionMismatch(format!(
                "symptom {j} is `{a}` in the checkpoint but `{b}` in the data"
            )));
        }
        if ds.cause_labels != self.cause_labels {
            return Err(LcvaError::DimensionMismatch(format!(
                "cause dictionary differs: checkpoint has C={}, data has C={}",
                self.dims.causes,
                ds.num_causes()
            )));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        self.validate()?;
        let per_draw = self.dims.theta_len() + self.dims.lambda_len();
        let header = Header {
            format: "lcva-sci".into(),
            dims: self.dims,
            symptom_names: self.symptom_names.clone(),
            cause_labels: self.cause_labels.clone(),
            domain_labels: self.domain_labels.clone(),
            cause_domain: self.cause_domain.clone(),
            hyperparams: self.hyperparams,
            pooled: self.pooled,
            num_draws: self.draws.len(),
            provenance: self.draws.iter().map(|d| d.provenance).collect(),
            payload_bytes: (self.draws.len() * per_draw * 8) as u64,
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        let mut buf = Vec::with_capacity(per_draw * 8);
        for draw in &self.draws {
            buf.clear();
            for x in draw.theta.iter().chain(&draw.lambda) {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let truncated = |what: &str| LcvaError::Checkpoint(format!("truncated file: {what}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| truncated("magic"))?;
        if &magic != MAGIC {
            return Err(LcvaError::Checkpoint("not an SCI checkpoint".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word).map_err(|_| truncated("version"))?;
        let version = u32::from_le_bytes(word);
        if version != FORMAT_VERSION {
            return Err(LcvaError::Checkpoint(format!(
                "unsupported format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(|_| truncated("header length"))?;
        let hlen = u64::from_le_bytes(len) as usize;
        let mut json = vec![0u8; hlen];
        r.read_exact(&mut json).map_err(|_| truncated("header"))?;
        let header: Header = serde_json::from_slice(&json)
            .map_err(|e| LcvaError::Checkpoint(format!("header schema mismatch: {e}")))?;
        if header.format != "lcva-sci" {
            return Err(LcvaError::Checkpoint(format!(
                "unexpected format tag `{}`",
                header.format
            )));
        }
        header.dims.check()?;
        let theta_len = header.dims.theta_len();
        let per_draw = theta_len + header.dims.lambda_len();
        if header.provenance.len() != header.num_draws
            || header.payload_bytes != (header.num_draws * per_draw * 8) as u64
        {
            return Err(LcvaError::Checkpoint(
                "header draw count does not match payload size".into(),
            ));
        }
        let mut payload = Vec::with_capacity(header.payload_bytes as usize);
        r.read_to_end(&mut payload)?;
        if payload.len() as u64 != header.payload_bytes {
            return Err(truncated(&format!(
                "payload has {} bytes, header promises {}",
                payload.len(),
                header.payload_bytes
            )));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let draws = values
            .chunks_exact(per_draw.max(1))
            .zip(&header.provenance)
            .map(|(chunk, &provenance)| Draw {
                theta: chunk[..theta_len].to_vec(),
                lambda: chunk[theta_len..].to_vec(),
                provenance,
            })
            .collect();
        let ckpt = SciCheckpoint {
            dims: header.dims,
            symptom_names: header.symptom_names,
            cause_labels: header.cause_labels,
            domain_labels: header.domain_labels,
            cause_domain: header.cause_domain,
            hyperparams: header.hyperparams,
            pooled: header.pooled,
            draws,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn write_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn read_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }

    /// Label dictionaries as a standalone JSON document.
    pub fn labels_json(&self) -> serde_json::Value {
        serde_json::json!({
            "causes": self.cause_labels.labels(),
            "domains": self.domain_labels.labels(),
            "symptoms": self.symptom_names,
        })
    }
}
