//! Variance inflation factors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VifEntry {
    pub column: String,
    /// `f64::INFINITY` for an exact linear combination of the others.
    pub vif: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VifReport {
    pub entries: Vec<VifEntry>,
}

impl VifReport {
    pub fn get(&self, column: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.column == column)
            .map(|e| e.vif)
    }

    pub fn infinite(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.vif.is_infinite())
            .map(|e| e.column.as_str())
            .collect()
    }

    pub fn max(&self) -> Option<&VifEntry> {
        self.entries.iter().max_by(|a, b| a.vif.total_cmp(&b.vif))
    }
}

/// `1 / (1 - R²)` from regressing each non-constant column on all the
/// others plus a constant. Constant columns (the intercept) are skipped.
pub fn vif(x: &DMatrix<f64>, names: &[&str]) -> Result<VifReport, StatsError> {
    let (n, k) = x.shape();
    let varying: Vec<usize> = (0..k)
        .filter(|&j| x.column(j).iter().any(|v| *v != x[(0, j)]))
        .collect();
    if varying.len() < 2 {
        return Err(StatsError::TooFewColumns(varying.len()));
    }
    let mut entries = Vec::with_capacity(varying.len());
    for &j in &varying {
        let others: Vec<usize> = varying.iter().copied().filter(|&c| c != j).collect();
        let a = DMatrix::from_fn(n, others.len() + 1, |r, c| {
            if c == 0 {
                1.0
            } else {
                x[(r, others[c - 1])]
            }
        });
        let y = DVector::from_iterator(n, x.column(j).iter().copied());
        let mean = y.mean();
        let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let svd = a.clone().svd(true, true);
        let eps = 1e-12 * svd.singular_values.max();
        let coef = svd.solve(&y, eps).map_err(|_| StatsError::Singular)?;
        let ssr = (&y - &a * coef).norm_squared();
        let vif = if ssr <= 1e-20 * sst.max(1.0) * n as f64 {
            f64::INFINITY
        } else {
            sst / ssr
        };
        if vif.is_infinite() {
            log::warn!(
                "column {} is a linear combination of other columns",
                names[j]
            );
        }
        entries.push(VifEntry {
            column: names[j].to_string(),
            vif,
        });
    }
    Ok(VifReport { entries })
}
