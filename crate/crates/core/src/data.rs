//! Verbal autopsy datasets: ternary symptom matrices, label dictionaries,
//! validation and CSV ingestion.
//!
//! Causes are stored as dense 0-based indices into a [`LabelDictionary`].
//! Domains are stored as `0` for the target domain and `1..=G` for training
//! domains, where domain `g` maps to entry `g - 1` of the domain dictionary.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LcvaError, Result};

/// Domain label reserved for target-domain records in CSV files.
pub const TARGET_DOMAIN: &str = "TARGET";

pub const ID_COLUMN: &str = "id";
pub const CAUSE_COLUMN: &str = "cause";
pub const DOMAIN_COLUMN: &str = "domain";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub causes: usize,
    pub classes: usize,
    pub symptoms: usize,
    pub domains: usize,
}

impl Dims {
    pub fn new(causes: usize, classes: usize, symptoms: usize, domains: usize) -> Result<Self> {
        let dims = Self {
            causes,
            classes,
            symptoms,
            domains,
        };
        dims.check()?;
        Ok(dims)
    }

    pub fn check(&self) -> Result<()> {
        if self.causes < 2 {
            return Err(LcvaError::InvalidDims(format!(
                "need at least 2 causes, got {}",
                self.causes
            )));
        }
        if self.classes == 0 || self.symptoms == 0 || self.domains == 0 {
            return Err(LcvaError::InvalidDims(format!(
                "classes, symptoms and domains must be positive (K={}, P={}, G={})",
                self.classes, self.symptoms, self.domains
            )));
        }
        Ok(())
    }

    pub fn theta_len(&self) -> usize {
        self.causes * self.classes * self.symptoms
    }

    pub fn lambda_len(&self) -> usize {
        self.domains * self.causes * self.classes
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "C={} K={} P={} G={}",
            self.causes, self.classes, self.symptoms, self.domains
        )
    }
}

/// A reported symptom value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Response {
    Yes,
    No,
    Missing,
}

impl Response {
    pub fn parse(cell: &str) -> Option<Self> {
        match cell.trim() {
            "" | "." => Some(Response::Missing),
            s if s.eq_ignore_ascii_case("y") => Some(Response::Yes),
            s if s.eq_ignore_ascii_case("n") => Some(Response::No),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Response::Yes => "Y",
            Response::No => "N",
            Response::Missing => ".",
        }
    }
}

/// Bidirectional mapping between string labels and dense indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDictionary {
    labels: Vec<String>,
}

impl LabelDictionary {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        let unique: BTreeSet<&String> = labels.iter().collect();
        if unique.len() != labels.len() {
            return Err(LcvaError::InvalidParameter(
                "label dictionary contains duplicates".into(),
            ));
        }
        Ok(Self { labels })
    }

    /// Dictionary of sorted unique labels.
    pub fn from_unsorted<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = labels.into_iter().map(Into::into).collect();
        Self {
            labels: set.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Labeled and unlabeled VA records with a ternary symptom matrix.
///
/// Symptom values live in a row-major `n x P` byte array next to an
/// observed-mask of the same shape; a masked-out entry is missing regardless
/// of its stored byte.
#[derive(Debug, Clone, PartialEq)]
pub struct VaDataset {
    pub symptom_names: Vec<String>,
    pub ids: Vec<String>,
    values: Vec<u8>,
    observed: Vec<bool>,
    pub causes: Vec<Option<usize>>,
    pub domains: Vec<usize>,
    pub cause_labels: LabelDictionary,
    pub domain_labels: LabelDictionary,
}

impl VaDataset {
    /// Assembles a dataset from raw parts. Only shape consistency is checked
    /// here; value-level checks live in [`validate_dataset`].
    #[allow(clippy::too_many_arguments)]
    pub fn from_raw(
        symptom_names: Vec<String>,
        ids: Vec<String>,
        values: Vec<u8>,
        observed: Vec<bool>,
        causes: Vec<Option<usize>>,
        domains: Vec<usize>,
        cause_labels: LabelDictionary,
        domain_labels: LabelDictionary,
    ) -> Result<Self> {
        let n = ids.len();
        let p = symptom_names.len();
        if values.len() != n * p || observed.len() != n * p {
            return Err(LcvaError::StructuralMismatch(format!(
                "symptom array has {} entries, expected {} x {}",
                values.len(),
                n,
                p
            )));
        }
        if causes.len() != n || domains.len() != n {
            return Err(LcvaError::StructuralMismatch(format!(
                "label vectors have lengths {}/{}, expected {}",
                causes.len(),
                domains.len(),
                n
            )));
        }
        Ok(Self {
            symptom_names,
            ids,
            values,
            observed,
            causes,
            domains,
            cause_labels,
            domain_labels,
        })
    }

    /// Builds a dataset from per-record response rows.
    pub fn from_responses(
        symptom_names: Vec<String>,
        rows: &[Vec<Response>],
        causes: Vec<Option<usize>>,
        domains: Vec<usize>,
        cause_labels: LabelDictionary,
        domain_labels: LabelDictionary,
    ) -> Result<Self> {
        let p = symptom_names.len();
        let mut values = Vec::with_capacity(rows.len() * p);
        let mut observed = Vec::with_capacity(rows.len() * p);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(LcvaError::StructuralMismatch(format!(
                    "record {i} has {} symptoms, expected {p}",
                    row.len()
                )));
            }
            for r in row {
                values.push(u8::from(*r == Response::Yes));
                observed.push(*r != Response::Missing);
            }
        }
        let ids = (0..rows.len()).map(|i| (i + 1).to_string()).collect();
        Self::from_raw(
            symptom_names,
            ids,
            values,
            observed,
            causes,
            domains,
            cause_labels,
            domain_labels,
        )
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn num_symptoms(&self) -> usize {
        self.symptom_names.len()
    }

    pub fn num_causes(&self) -> usize {
        self.cause_labels.len()
    }

    pub fn num_domains(&self) -> usize {
        self.domain_labels.len()
    }

    pub fn response(&self, i: usize, j: usize) -> Response {
        let idx = i * self.num_symptoms() + j;
        if !self.observed[idx] {
            Response::Missing
        } else if self.values[idx] == 1 {
            Response::Yes
        } else {
            Response::No
        }
    }

    /// Raw stored byte and observed flag for entry `(i, j)`.
    pub fn raw(&self, i: usize, j: usize) -> (u8, bool) {
        let idx = i * self.num_symptoms() + j;
        (self.values[idx], self.observed[idx])
    }

    pub fn set_raw(&mut self, i: usize, j: usize, value: u8, observed: bool) {
        let idx = i * self.num_symptoms() + j;
        self.values[idx] = value;
        self.observed[idx] = observed;
    }

    pub fn row(&self, i: usize) -> Vec<Response> {
        (0..self.num_symptoms()).map(|j| self.response(i, j)).collect()
    }

    pub fn missing_fraction(&self) -> f64 {
        if self.observed.is_empty() {
            return 0.0;
        }
        self.observed.iter().filter(|o| !**o).count() as f64 / self.observed.len() as f64
    }

    /// New dataset restricted to the given record indices, in order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let p = self.num_symptoms();
        let mut values = Vec::with_capacity(indices.len() * p);
        let mut observed = Vec::with_capacity(indices.len() * p);
        for &i in indices {
            values.extend_from_slice(&self.values[i * p..(i + 1) * p]);
            observed.extend_from_slice(&self.observed[i * p..(i + 1) * p]);
        }
        Self {
            symptom_names: self.symptom_names.clone(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            values,
            observed,
            causes: indices.iter().map(|&i| self.causes[i]).collect(),
            domains: indices.iter().map(|&i| self.domains[i]).collect(),
            cause_labels: self.cause_labels.clone(),
            domain_labels: self.domain_labels.clone(),
        }
    }

    /// Records from training domains (`d >= 1`).
    pub fn training_part(&self) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.domains[i] >= 1).collect();
        self.select(&idx)
    }

    /// Records from the target domain (`d = 0`).
    pub fn target_part(&self) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.domains[i] == 0).collect();
        self.select(&idx)
    }

    /// Collapses all training domains into a single pooled domain.
    pub fn pooled(&self) -> Self {
        let mut out = self.clone();
        for d in out.domains.iter_mut() {
            if *d >= 1 {
                *d = 1;
            }
        }
        out.domain_labels = LabelDictionary {
            labels: vec!["POOLED".to_string()],
        };
        out
    }

    pub fn from_csv_path(
        path: impl AsRef<Path>,
        causes: Option<&LabelDictionary>,
        domains: Option<&LabelDictionary>,
    ) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, causes, domains).map_err(|e| match e {
            LcvaError::Csv { source, .. } => LcvaError::Csv {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })
    }

    /// Parses a dataset CSV. When a dictionary is supplied, labels are mapped
    /// through it and unknown labels are rejected; otherwise a sorted
    /// dictionary is built from the labels present.
    pub fn from_csv_reader<R: Read>(
        reader: R,
        causes: Option<&LabelDictionary>,
        domains: Option<&LabelDictionary>,
    ) -> Result<Self> {
        let csv_err = |source| LcvaError::Csv {
            path: "<reader>".into(),
            source,
        };
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let mut id_col = None;
        let mut cause_col = None;
        let mut domain_col = None;
        let mut symptom_cols = Vec::new();
        let mut symptom_names = Vec::new();
        for (idx, name) in headers.iter().enumerate() {
            match name.trim() {
                ID_COLUMN => id_col = Some(idx),
                CAUSE_COLUMN => cause_col = Some(idx),
                DOMAIN_COLUMN => domain_col = Some(idx),
                other => {
                    symptom_cols.push(idx);
                    symptom_names.push(other.to_string());
                }
            }
        }
        let domain_col = domain_col.ok_or_else(|| {
            LcvaError::StructuralMismatch(format!("missing required `{DOMAIN_COLUMN}` column"))
        })?;

        let mut ids = Vec::new();
        let mut raw_causes = Vec::new();
        let mut raw_domains = Vec::new();
        let mut values = Vec::new();
        let mut observed = Vec::new();
        for (row_idx, record) in rdr.records().enumerate() {
            let record = record.map_err(csv_err)?;
            if record.len() != headers.len() {
                return Err(LcvaError::StructuralMismatch(format!(
                    "row {} has {} fields, header has {}",
                    row_idx + 1,
                    record.len(),
                    headers.len()
                )));
            }
            ids.push(
                id_col
                    .map(|c| record[c].trim().to_string())
                    .unwrap_or_else(|| (row_idx + 1).to_string()),
            );
            raw_causes.push(cause_col.and_then(|c| {
                let v = record[c].trim();
                (!v.is_empty()).then(|| v.to_string())
            }));
            raw_domains.push(record[domain_col].trim().to_string());
            for &c in &symptom_cols {
                let cell = &record[c];
                match Response::parse(cell) {
                    Some(r) => {
                        values.push(u8::from(r == Response::Yes));
                        observed.push(r != Response::Missing);
                    }
                    None => {
                        return Err(LcvaError::Validation(format!(
                            "non-binary symptom value `{}` in row {} column `{}`",
                            cell,
                            row_idx + 1,
                            &headers[c]
                        )))
                    }
                }
            }
        }

        let cause_labels = match causes {
            Some(d) => d.clone(),
            None => LabelDictionary::from_unsorted(raw_causes.iter().flatten().cloned()),
        };
        let domain_labels = match domains {
            Some(d) => d.clone(),
            None => LabelDictionary::from_unsorted(
                raw_domains
                    .iter()
                    .filter(|d| d.as_str() != TARGET_DOMAIN)
                    .cloned(),
            ),
        };
        let causes = raw_causes
            .into_iter()
            .map(|c| {
                c.map(|label| {
                    cause_labels
                        .index_of(&label)
                        .ok_or(LcvaError::UnknownLabel {
                            kind: "cause",
                            label,
                        })
                })
                .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        let domains = raw_domains
            .into_iter()
            .map(|label| {
                if label == TARGET_DOMAIN {
                    Ok(0)
                } else {
                    domain_labels
                        .index_of(&label)
                        .map(|g| g + 1)
                        .ok_or(LcvaError::UnknownLabel {
                            kind: "domain",
                            label,
                        })
                }
            })
            .collect::<Result<Vec<_>>>()?;

        Self::from_raw(
            symptom_names,
            ids,
            values,
            observed,
            causes,
            domains,
            cause_labels,
            domain_labels,
        )
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| match e {
                LcvaError::Csv { source, .. } => LcvaError::Csv {
                    path: path.to_path_buf(),
                    source,
                },
                other => other,
            })
    }

    /// Writes `id,domain,cause,<symptoms...>`; the cause column is omitted
    /// when no record carries a label.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let csv_err = |source| LcvaError::Csv {
            path: "<writer>".into(),
            source,
        };
        let with_cause = self.causes.iter().any(Option::is_some);
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec![ID_COLUMN, DOMAIN_COLUMN];
        if with_cause {
            header.push(CAUSE_COLUMN);
        }
        header.extend(self.symptom_names.iter().map(String::as_str));
        wtr.write_record(&header).map_err(csv_err)?;
        let mut row: Vec<&str> = Vec::with_capacity(header.len());
        for i in 0..self.len() {
            row.clear();
            row.push(&self.ids[i]);
            row.push(match self.domains[i] {
                0 => TARGET_DOMAIN,
                g => self.domain_labels.label(g - 1),
            });
            if with_cause {
                row.push(self.causes[i].map_or("", |c| self.cause_labels.label(c)));
            }
            for j in 0..self.num_symptoms() {
                row.push(self.response(i, j).as_str());
            }
            wtr.write_record(&row).map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Warn)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }

    /// Converts failed checks into an error.
    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            let msg = self
                .failures()
                .map(|c| c.detail.as_str())
                .collect::<Vec<_>>()
                .join("; ");
            Err(LcvaError::Validation(msg))
        }
    }
}

/// Runs value-level checks against `dims`. Shape mismatches are returned as
/// hard errors; everything else is reported per check.
pub fn validate_dataset(ds: &VaDataset, dims: &Dims) -> Result<ValidationReport> {
    dims.check()?;
    let p = ds.num_symptoms();
    if p != dims.symptoms {
        return Err(LcvaError::StructuralMismatch(format!(
            "dataset rows have {p} symptoms, expected {}",
            dims.symptoms
        )));
    }
    let n = ds.len();
    let mut checks = Vec::new();
    let mut push = |name, bad: Option<String>, warn: bool| {
        let (status, detail) = match bad {
            None => (CheckStatus::Pass, String::new()),
            Some(d) if warn => (CheckStatus::Warn, d),
            Some(d) => (CheckStatus::Fail, d),
        };
        checks.push(Check {
            name,
            status,
            detail,
        });
    };

    let non_binary = (0..n)
        .flat_map(|i| (0..p).map(move |j| (i, j)))
        .find(|&(i, j)| {
            let (v, obs) = ds.raw(i, j);
            obs && v > 1
        });
    push(
        "binary_symptoms",
        non_binary.map(|(i, j)| {
            let (v, _) = ds.raw(i, j);
            format!("non-binary symptom value {v} at record {i}, symptom {j}")
        }),
        false,
    );

    let bad_cause = ds
        .causes
        .iter()
        .enumerate()
        .find(|(_, c)| c.is_some_and(|c| c >= dims.causes));
    push(
        "cause_range",
        bad_cause.map(|(i, c)| {
            format!(
                "cause index {} at record {i} outside 0..{}",
                c.unwrap(),
                dims.causes
            )
        }),
        false,
    );

    let bad_domain = ds
        .domains
        .iter()
        .enumerate()
        .find(|(_, &d)| d > dims.domains);
    push(
        "domain_range",
        bad_domain.map(|(i, d)| format!("domain {d} at record {i} outside 0..={}", dims.domains)),
        false,
    );

    let fully_missing: Vec<usize> = (0..n)
        .filter(|&i| (0..p).all(|j| !ds.raw(i, j).1))
        .collect();
    push(
        "fully_missing_rows",
        (!fully_missing.is_empty()).then(|| {
            format!(
                "{} record(s) have no observed symptoms (retained)",
                fully_missing.len()
            )
        }),
        true,
    );

    Ok(ValidationReport { checks })
}

/// Fraction of labeled training deaths from each domain, per cause.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseDomainCounts {
    pub causes: usize,
    pub domains: usize,
    /// Row-major `C x G`.
    pub fractions: Vec<f64>,
}

impl CauseDomainCounts {
    pub fn row(&self, c: usize) -> &[f64] {
        &self.fractions[c * self.domains..(c + 1) * self.domains]
    }
}

/// Rows for causes with no labeled training death fall back to `1/G`.
pub fn compute_cause_domain_counts(ds: &VaDataset, dims: &Dims) -> CauseDomainCounts {
    let (c_n, g_n) = (dims.causes, dims.domains);
    let mut counts = vec![0usize; c_n * g_n];
    for (c, &d) in ds.causes.iter().zip(&ds.domains) {
        if let Some(c) = *c {
            if d >= 1 && d <= g_n && c < c_n {
                counts[c * g_n + d - 1] += 1;
            }
        }
    }
    let mut fractions = vec![0.0; c_n * g_n];
    for c in 0..c_n {
        let row = &counts[c * g_n..(c + 1) * g_n];
        let total: usize = row.iter().sum();
        for g in 0..g_n {
            fractions[c * g_n + g] = if total == 0 {
                1.0 / g_n as f64
            } else {
                row[g] as f64 / total as f64
            };
        }
    }
    CauseDomainCounts {
        causes: c_n,
        domains: g_n,
        fractions,
    }
}
