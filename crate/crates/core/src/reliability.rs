//! Consistency of relevance maps across trials via the coefficient of
//! variation
//!
//! `CoV = sqrt(mean_i var_i) / sqrt(mean_i mean_i^2)`
//!
//! where `mean_i` and `var_i` are the across-map mean and population
//! variance of component i, pooled over every component of the grid.

use std::collections::BTreeMap;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lrp::RelevanceMap;
use crate::stats::MeanStd;

pub const FORMULA: &str = "CoV = sqrt(mean_i var_i) / sqrt(mean_i mean_i^2), population variance over maps, all components";

#[derive(Debug, Clone, PartialEq)]
pub struct CovResult {
    pub cov: f64,
    pub mean: Array2<f64>,
    pub std: Array2<f64>,
    pub n: usize,
}

pub fn coefficient_of_variation(maps: &[&Array2<f64>]) -> Result<CovResult> {
    if maps.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "coefficient of variation needs at least 2 maps, got {}",
            maps.len()
        )));
    }
    let dim = maps[0].dim();
    if let Some(m) = maps.iter().find(|m| m.dim() != dim) {
        return Err(Error::Shape(format!(
            "relevance maps of shape {:?} and {:?} cannot be stacked",
            dim,
            m.dim()
        )));
    }
    let n = maps.len() as f64;
    let mut mean = Array2::<f64>::zeros(dim);
    for m in maps {
        mean += *m;
    }
    mean /= n;
    let mut var = Array2::<f64>::zeros(dim);
    for m in maps {
        Zip::from(&mut var).and(*m).and(&mean).for_each(|v, &x, &mu| *v += (x - mu) * (x - mu));
    }
    var /= n;
    let mean_sq = mean.iter().map(|m| m * m).sum::<f64>() / mean.len() as f64;
    let mean_var = var.iter().sum::<f64>() / var.len() as f64;
    if mean_sq == 0.0 {
        return Err(Error::UndefinedCov);
    }
    Ok(CovResult {
        cov: (mean_var / mean_sq).sqrt(),
        std: var.mapv(f64::sqrt),
        mean,
        n: maps.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectReliability {
    pub subject_id: usize,
    pub n_maps: usize,
    /// `None` when the CoV is undefined for this subject; see `error`.
    pub cov: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Per-component across-trial mean and standard deviation.
    pub component_mean: Vec<Vec<f64>>,
    pub component_std: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub model: String,
    pub formula: String,
    pub subjects: Vec<SubjectReliability>,
    /// Mean (std) of the defined per-subject CoVs.
    pub summary: Option<MeanStd>,
}

impl ReliabilityReport {
    pub fn covs(&self) -> Vec<f64> {
        self.subjects.iter().filter_map(|s| s.cov).collect()
    }

    /// `subject_id,n_maps,cov` rows; undefined values are left empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("subject_id,n_maps,cov\n");
        for r in &self.subjects {
            let cov = r.cov.map(|c| format!("{c:.6}")).unwrap_or_default();
            s.push_str(&format!("{},{},{}\n", r.subject_id, r.n_maps, cov));
        }
        s
    }
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Groups maps by subject and computes one CoV per subject. Subjects whose
/// CoV is undefined are kept with the reason instead of failing the batch.
pub fn reliability_report(model: &str, maps: &[RelevanceMap]) -> Result<ReliabilityReport> {
    if maps.is_empty() {
        return Err(Error::InvalidInput("no relevance maps to assess".into()));
    }
    let mut by_subject: BTreeMap<usize, Vec<&Array2<f64>>> = BTreeMap::new();
    for m in maps {
        by_subject.entry(m.subject_id).or_default().push(&m.relevance);
    }
    let mut subjects = Vec::with_capacity(by_subject.len());
    for (subject_id, stack) in by_subject {
        let entry = match coefficient_of_variation(&stack) {
            Ok(r) => SubjectReliability {
                subject_id,
                n_maps: stack.len(),
                cov: Some(r.cov),
                error: None,
                component_mean: rows(&r.mean),
                component_std: rows(&r.std),
            },
            Err(e @ (Error::UndefinedCov | Error::InvalidInput(_))) => SubjectReliability {
                subject_id,
                n_maps: stack.len(),
                cov: None,
                error: Some(format!("[{}] {e}", e.code())),
                component_mean: Vec::new(),
                component_std: Vec::new(),
            },
            Err(e) => return Err(e),
        };
        subjects.push(entry);
    }
    let covs: Vec<f64> = subjects.iter().filter_map(|s| s.cov).collect();
    Ok(ReliabilityReport {
        model: model.to_string(),
        formula: FORMULA.to_string(),
        summary: MeanStd::of(&covs),
        subjects,
    })
}
