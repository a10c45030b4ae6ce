//! Peak-efficiency comparison of the model against published macros.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::imc_cost::{self, Paradigm};
use crate::tech_model::{FitDatapoint, TechConfig};

/// DIMC measurements at or below this supply are dominated by leakage,
/// which the model does not cover.
pub const LOW_VOLTAGE_LIMIT: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRow {
    pub name: String,
    pub paradigm: Paradigm,
    pub node: f64,
    pub voltage: f64,
    pub modeled_topsw: f64,
    pub reported_topsw: f64,
    /// `(modeled - reported) / reported`.
    pub mismatch: f64,
    /// Node outside the fitted range.
    pub extrapolated: bool,
    /// Low-voltage DIMC point, excluded from the summary.
    pub exempt: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub rows: Vec<ValidationRow>,
    /// Over non-exempt rows.
    pub mean_abs_mismatch: f64,
    pub max_abs_mismatch: f64,
}

impl ValidationReport {
    /// Fraction of non-exempt rows of `paradigm` within `tol`.
    pub fn fraction_within(&self, paradigm: Paradigm, tol: f64) -> Option<f64> {
        let rows: Vec<_> = self.rows.iter().filter(|r| r.paradigm == paradigm && !r.exempt).collect();
        if rows.is_empty() {
            return None;
        }
        Some(rows.iter().filter(|r| r.mismatch.abs() <= tol).count() as f64 / rows.len() as f64)
    }
}

pub fn is_low_voltage_exempt(dp: &FitDatapoint) -> bool {
    dp.paradigm == Paradigm::Dimc && dp.voltage <= LOW_VOLTAGE_LIMIT + 1e-9
}

pub fn validate_against(datapoints: &[FitDatapoint], tech: &TechConfig) -> Result<ValidationReport> {
    if datapoints.is_empty() {
        return Err(Error::InsufficientData("no datapoints to validate against".into()));
    }
    let mut rows = Vec::with_capacity(datapoints.len());
    for dp in datapoints {
        dp.validate()?;
        let est = tech.resolve(dp.node, dp.voltage, None)?;
        let peak = imc_cost::peak_performance(&dp.macro_spec(), &est.profile, &tech.constants)?;
        let modeled_topsw = peak.topsw * 1e-12;
        let reported_topsw = dp.reported_efficiency;
        rows.push(ValidationRow {
            name: dp.name.clone(),
            paradigm: dp.paradigm,
            node: dp.node,
            voltage: dp.voltage,
            modeled_topsw,
            reported_topsw,
            mismatch: (modeled_topsw - reported_topsw) / reported_topsw,
            extrapolated: est.warning.is_some(),
            exempt: is_low_voltage_exempt(dp),
        });
    }
    let counted: Vec<f64> = rows.iter().filter(|r| !r.exempt).map(|r| r.mismatch.abs()).collect();
    let (mean_abs_mismatch, max_abs_mismatch) = if counted.is_empty() {
        (0.0, 0.0)
    } else {
        (
            counted.iter().sum::<f64>() / counted.len() as f64,
            counted.iter().copied().fold(0.0, f64::max),
        )
    };
    Ok(ValidationReport { rows, mean_abs_mismatch, max_abs_mismatch })
}
