//! Technology-dependent capacitances, fitted model constants, and the
//! regressions that extract them from published macro datapoints.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{self, Error, Result};
use crate::imc_cost::{self, DacCountMode, MacroSpec, Paradigm};

/// Search bracket for per-design `C_inv` extraction, in farads.
pub const CINV_BRACKET: (f64, f64) = (1e-18, 1e-12);
/// Relative bracket width at which bisection stops.
pub const CINV_BISECTION_TOL: f64 = 1e-6;
/// Lower clamp applied when evaluating a fitted `C_inv` line.
pub const DEFAULT_CINV_FLOOR: f64 = 1e-18;
/// Clock assumed for datapoints that do not report one (throughput only).
pub const DEFAULT_DATAPOINT_CLOCK: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechnologyProfile {
    /// Technology node in nm.
    pub node: f64,
    /// Inverter input capacitance in F.
    #[serde(rename = "C_inv")]
    pub c_inv: f64,
    #[serde(rename = "V_nominal")]
    pub v_nominal: f64,
    /// `C_gate / C_inv`.
    #[serde(default = "default_gate_ratio")]
    pub gate_ratio: f64,
    /// `C_WL / C_inv` per cell.
    #[serde(default = "unit_ratio")]
    pub wl_ratio: f64,
    /// `C_BL / C_inv` per cell.
    #[serde(default = "unit_ratio")]
    pub bl_ratio: f64,
}

fn default_gate_ratio() -> f64 {
    2.0
}

fn unit_ratio() -> f64 {
    1.0
}

impl TechnologyProfile {
    pub fn new(node: f64, c_inv: f64, v_nominal: f64) -> Self {
        TechnologyProfile {
            node,
            c_inv,
            v_nominal,
            gate_ratio: default_gate_ratio(),
            wl_ratio: unit_ratio(),
            bl_ratio: unit_ratio(),
        }
    }

    pub fn c_gate(&self) -> f64 {
        self.gate_ratio * self.c_inv
    }

    pub fn c_wl(&self) -> f64 {
        self.wl_ratio * self.c_inv
    }

    pub fn c_bl(&self) -> f64 {
        self.bl_ratio * self.c_inv
    }

    pub fn with_c_inv(&self, c_inv: f64) -> Self {
        TechnologyProfile { c_inv, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = "technology profile";
        for (field, v) in [
            ("node", self.node),
            ("C_inv", self.c_inv),
            ("V_nominal", self.v_nominal),
            ("gate_ratio", self.gate_ratio),
            ("wl_ratio", self.wl_ratio),
            ("bl_ratio", self.bl_ratio),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(ctx, field, "must be finite and > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    /// ADC energy per bit of resolution (J).
    #[serde(default = "default_k1")]
    pub k1: f64,
    /// ADC exponential-term coefficient (J).
    #[serde(default = "default_k2")]
    pub k2: f64,
    /// DAC energy per conversion step (J).
    #[serde(default = "default_k3")]
    pub k3: f64,
    /// Gates per 1-bit full adder.
    #[serde(rename = "G_FA", default = "default_g_fa")]
    pub g_fa: f64,
    /// Gates per 1-bit multiplier.
    #[serde(rename = "G_MUL_base", default = "default_g_mul")]
    pub g_mul_base: f64,
}

fn default_k1() -> f64 {
    100e-15
}
fn default_k2() -> f64 {
    1e-18
}
fn default_k3() -> f64 {
    44e-15
}
fn default_g_fa() -> f64 {
    5.0
}
fn default_g_mul() -> f64 {
    1.0
}

impl Default for ModelConstants {
    fn default() -> Self {
        ModelConstants {
            k1: default_k1(),
            k2: default_k2(),
            k3: default_k3(),
            g_fa: default_g_fa(),
            g_mul_base: default_g_mul(),
        }
    }
}

impl ModelConstants {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("G_FA", self.g_fa),
            ("G_MUL_base", self.g_mul_base),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid("model constants", field, "must be finite and > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    #[serde(rename = "R")]
    pub rows: u64,
    #[serde(rename = "C")]
    pub cols: u64,
    #[serde(default = "one")]
    pub macros: u64,
    /// Row multiplexing factor (DIMC); 1 when absent.
    #[serde(rename = "M", default = "one")]
    pub row_mux: u64,
}

fn one() -> u64 {
    1
}

/// One published macro measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDatapoint {
    pub name: String,
    pub paradigm: Paradigm,
    /// Technology node in nm.
    pub node: f64,
    pub geometry: Geometry,
    #[serde(rename = "V")]
    pub voltage: f64,
    #[serde(rename = "B_i")]
    pub input_bits: u64,
    #[serde(rename = "B_w")]
    pub weight_bits: u64,
    #[serde(rename = "ADC_res", default)]
    pub adc_res: u64,
    #[serde(rename = "DAC_res", default)]
    pub dac_res: u64,
    /// Peak energy efficiency in TOP/s/W.
    pub reported_efficiency: f64,
    /// Peak throughput in TOP/s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_throughput: Option<f64>,
    /// Energy per operation in J; derived from the efficiency when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_energy_per_op: Option<f64>,
    #[serde(default = "one")]
    pub adc_share: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_clk: Option<f64>,
    #[serde(default)]
    pub source: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assumed: Vec<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub notes: String,
}

impl FitDatapoint {
    pub fn energy_per_op(&self) -> f64 {
        self.reported_energy_per_op
            .unwrap_or(1.0 / (self.reported_efficiency * 1e12))
    }

    pub fn macro_spec(&self) -> MacroSpec {
        MacroSpec {
            paradigm: self.paradigm,
            rows: self.geometry.rows,
            cols: self.geometry.cols,
            row_mux: self.geometry.row_mux,
            weight_bits: self.weight_bits,
            input_bits: self.input_bits,
            adc_res: self.adc_res,
            dac_res: self.dac_res,
            voltage: self.voltage,
            f_clk: self.f_clk.unwrap_or(DEFAULT_DATAPOINT_CLOCK),
            macros: self.geometry.macros,
            adc_share: self.adc_share,
            dac_count_mode: DacCountMode::Aggregate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = format!("datapoint `{}`", self.name);
        if self.paradigm == Paradigm::Dimc && (self.adc_res != 0 || self.dac_res != 0) {
            return Err(Error::invalid(ctx, "ADC_res", "DIMC datapoints must have ADC_res = DAC_res = 0"));
        }
        if !(self.reported_efficiency.is_finite() && self.reported_efficiency > 0.0) {
            return Err(Error::invalid(ctx, "reported_efficiency", "must be > 0"));
        }
        if !(self.node.is_finite() && self.node > 0.0) {
            return Err(Error::invalid(ctx, "node", "must be > 0"));
        }
        if !(self.voltage > 0.0) {
            return Err(Error::invalid(ctx, "V", "must be > 0"));
        }
        self.macro_spec().validate().map_err(|e| match e {
            Error::Invalid { field, message, .. } => Error::invalid(format!("datapoint `{}`", self.name), field, message),
            other => other,
        })
    }
}

/// Versioned datapoint file. A bare JSON array of datapoints is also accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatapointCorpus {
    pub version: u32,
    /// Operand-sparsity convention under which the numbers were reported.
    #[serde(default)]
    pub sparsity_convention: String,
    #[serde(default)]
    pub notes: String,
    pub datapoints: Vec<FitDatapoint>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CorpusFile {
    Versioned(DatapointCorpus),
    Bare(Vec<FitDatapoint>),
}

impl DatapointCorpus {
    pub fn from_json_str(src: &str, path: &Path) -> Result<Self> {
        // Decode as a generic value first so syntax errors keep their position.
        let value: serde_json::Value = serde_json::from_str(src).map_err(|e| error::json_error(path, e))?;
        let corpus = match serde_json::from_value::<CorpusFile>(value) {
            Ok(CorpusFile::Versioned(c)) => c,
            Ok(CorpusFile::Bare(points)) => DatapointCorpus {
                version: 1,
                sparsity_convention: String::new(),
                notes: String::new(),
                datapoints: points,
            },
            Err(_) => {
                // Re-run the typed decoder to recover a positioned message.
                let err = serde_json::from_str::<DatapointCorpus>(src)
                    .err()
                    .or_else(|| serde_json::from_str::<Vec<FitDatapoint>>(src).err());
                return Err(match err {
                    Some(e) => error::json_error(path, e),
                    None => Error::Parse {
                        path: path.to_path_buf(),
                        line: 0,
                        column: 0,
                        message: "unrecognized datapoint file layout".into(),
                    },
                });
            }
        };
        for dp in &corpus.datapoints {
            dp.validate()?;
        }
        Ok(corpus)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = error::read_to_string(path)?;
        Self::from_json_str(&src, path)
    }
}

/// Per-design result of the `C_inv` extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub name: String,
    pub node: f64,
    /// `C_inv` that reproduces the reported energy exactly; `None` if unsolvable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solved_c_inv: Option<f64>,
    /// Relative mismatch of the model evaluated with the regressed line.
    pub residual: f64,
}

/// `C_inv(node) = slope * node + intercept` with node in nm and C in F.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub node_min: f64,
    pub node_max: f64,
    /// One entry per DIMC datapoint considered, in (node, name) order.
    #[serde(default)]
    pub residuals: Vec<f64>,
    pub mean_abs_mismatch: f64,
    #[serde(default)]
    pub points: Vec<FitPoint>,
    /// Datapoints whose `C_inv` could not be solved.
    #[serde(default)]
    pub excluded: Vec<String>,
}

impl LinearFit {
    pub fn eval(&self, node: f64) -> f64 {
        self.slope * node + self.intercept
    }
}

fn by_node_then_name(a: &&FitDatapoint, b: &&FitDatapoint) -> Ordering {
    a.node
        .partial_cmp(&b.node)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.name.cmp(&b.name))
}

/// Peak energy per operation the model predicts for a datapoint.
pub fn modeled_energy_per_op(dp: &FitDatapoint, tech: &TechnologyProfile, constants: &ModelConstants) -> Result<f64> {
    let spec = dp.macro_spec();
    let cycles = imc_cost::full_tile_cycles(&spec)?;
    let e = imc_cost::total_energy(&spec, tech, &cycles, constants);
    Ok(e.e_total / (2.0 * cycles.total_macs as f64))
}

fn datapoint_profile(dp: &FitDatapoint, c_inv: f64) -> TechnologyProfile {
    TechnologyProfile::new(dp.node, c_inv, dp.voltage)
}

/// Solves for the `C_inv` that makes the model reproduce the datapoint's
/// reported energy per op. Bisection over [`CINV_BRACKET`] down to
/// [`CINV_BISECTION_TOL`], then one secant step inside the final bracket.
pub fn solve_cinv(dp: &FitDatapoint, constants: &ModelConstants) -> Result<f64> {
    let target = dp.energy_per_op();
    let f = |c: f64| -> Result<f64> { Ok(modeled_energy_per_op(dp, &datapoint_profile(dp, c), constants)? - target) };
    let (mut lo, mut hi) = CINV_BRACKET;
    let (mut f_lo, mut f_hi) = (f(lo)?, f(hi)?);
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::InsufficientData(format!(
            "datapoint `{}`: reported energy is outside the model range for C_inv in [{:e}, {:e}] F",
            dp.name, CINV_BRACKET.0, CINV_BRACKET.1
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= CINV_BISECTION_TOL * mid {
            break;
        }
        let fm = f(mid)?;
        if fm < 0.0 {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
            f_hi = fm;
        }
    }
    let c = if f_hi > f_lo { lo - f_lo * (hi - lo) / (f_hi - f_lo) } else { 0.5 * (lo + hi) };
    Ok(c.clamp(lo, hi))
}

fn least_squares(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Extracts per-design `C_inv` from the DIMC datapoints and regresses it
/// linearly against the technology node. AIMC datapoints are ignored.
pub fn fit_cinv(datapoints: &[FitDatapoint], constants: &ModelConstants) -> Result<LinearFit> {
    let mut dimc: Vec<&FitDatapoint> = datapoints.iter().filter(|d| d.paradigm == Paradigm::Dimc).collect();
    dimc.sort_by(by_node_then_name);
    if dimc.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "C_inv regression needs at least 2 DIMC datapoints, got {}",
            dimc.len()
        )));
    }

    let mut solved = Vec::with_capacity(dimc.len());
    let mut excluded = Vec::new();
    for dp in &dimc {
        match solve_cinv(dp, constants) {
            Ok(c) if c.is_finite() && c > 0.0 => solved.push(Some(c)),
            Ok(_) | Err(_) => {
                log::warn!("excluding datapoint `{}` from the C_inv fit: no finite solution", dp.name);
                excluded.push(dp.name.clone());
                solved.push(None);
            }
        }
    }
    let xy: Vec<(f64, f64)> = dimc
        .iter()
        .zip(&solved)
        .filter_map(|(dp, c)| c.map(|c| (dp.node, c)))
        .collect();
    let mut nodes: Vec<f64> = xy.iter().map(|p| p.0).collect();
    nodes.dedup();
    if xy.len() < 2 || nodes.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "C_inv regression needs at least 2 usable DIMC datapoints at distinct nodes, got {} point(s) at {} node(s)",
            xy.len(),
            nodes.len()
        )));
    }

    let (slope, intercept) = least_squares(&xy);
    let mut fit = LinearFit {
        slope,
        intercept,
        node_min: nodes[0],
        node_max: *nodes.last().unwrap(),
        residuals: Vec::new(),
        mean_abs_mismatch: 0.0,
        points: Vec::new(),
        excluded,
    };
    for (dp, c) in dimc.iter().zip(&solved) {
        let tech = profile_for(dp.node, &fit, dp.voltage).profile;
        let modeled = modeled_energy_per_op(dp, &tech, constants)?;
        let residual = (modeled - dp.energy_per_op()) / dp.energy_per_op();
        fit.residuals.push(residual);
        fit.points.push(FitPoint {
            name: dp.name.clone(),
            node: dp.node,
            solved_c_inv: *c,
            residual,
        });
    }
    fit.mean_abs_mismatch = fit.residuals.iter().map(|r| r.abs()).sum::<f64>() / fit.residuals.len() as f64;
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DacFit {
    pub k3: f64,
    pub mean_abs_mismatch: f64,
    /// (datapoint name, relative mismatch at the fitted k3), in (node, name) order.
    pub residuals: Vec<(String, f64)>,
}

/// Fits the DAC constant `k3` minimizing the mean absolute relative mismatch
/// over AIMC datapoints, with `C_inv` taken from `cinv_fit`.
///
/// Modeled energy per op is affine in `k3` (`a + k3 * d`), so the objective is
/// convex and piecewise linear with its minimum at one of the per-point
/// zero-mismatch values `(reported - a) / d`.
pub fn fit_dac_constant(datapoints: &[FitDatapoint], constants: &ModelConstants, cinv_fit: &LinearFit) -> Result<DacFit> {
    let mut aimc: Vec<&FitDatapoint> = datapoints
        .iter()
        .filter(|d| d.paradigm == Paradigm::Aimc && d.dac_res > 0)
        .collect();
    aimc.sort_by(by_node_then_name);
    if aimc.is_empty() {
        return Err(Error::InsufficientData("k3 fit needs at least 1 AIMC datapoint with DAC_res > 0".into()));
    }

    let no_dac = ModelConstants { k3: 0.0, ..constants.clone() };
    let unit_dac = ModelConstants { k3: 1.0, ..constants.clone() };
    let mut terms = Vec::with_capacity(aimc.len());
    for dp in &aimc {
        let spec = dp.macro_spec();
        let tech = profile_for(dp.node, cinv_fit, dp.voltage).profile;
        let cycles = imc_cost::full_tile_cycles(&spec)?;
        let ops = 2.0 * cycles.total_macs as f64;
        let a = imc_cost::total_energy(&spec, &tech, &cycles, &no_dac).e_total / ops;
        let d = imc_cost::dac_energy(&spec, &cycles, &unit_dac) / ops;
        terms.push((a, d, dp.energy_per_op()));
    }
    let objective = |k: f64| terms.iter().map(|(a, d, r)| ((a + k * d - r) / r).abs()).sum::<f64>() / terms.len() as f64;

    let mut best: Option<(f64, f64)> = None;
    for (a, d, r) in &terms {
        let k = (r - a) / d;
        if !(k.is_finite() && k > 0.0) {
            continue;
        }
        let obj = objective(k);
        best = match best {
            Some((bk, bo)) if bo < obj || (bo == obj && bk <= k) => Some((bk, bo)),
            _ => Some((k, obj)),
        };
    }
    let (k3, mean_abs_mismatch) = best.ok_or_else(|| {
        Error::InsufficientData("no positive k3 reproduces any AIMC datapoint (non-DAC energy already exceeds reported)".into())
    })?;
    let residuals = aimc
        .iter()
        .zip(&terms)
        .map(|(dp, (a, d, r))| (dp.name.clone(), (a + k3 * d - r) / r))
        .collect();
    Ok(DacFit { k3, mean_abs_mismatch, residuals })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileEstimate {
    pub profile: TechnologyProfile,
    /// Set when the node lies outside `[node_min / 2, 2 * node_max]`.
    pub warning: Option<String>,
}

pub fn profile_for(node: f64, fit: &LinearFit, voltage: f64) -> ProfileEstimate {
    profile_for_with_floor(node, fit, voltage, DEFAULT_CINV_FLOOR)
}

pub fn profile_for_with_floor(node: f64, fit: &LinearFit, voltage: f64, floor: f64) -> ProfileEstimate {
    let c_inv = fit.eval(node).max(floor);
    let (lo, hi) = (fit.node_min / 2.0, fit.node_max * 2.0);
    let warning = (node < lo || node > hi).then(|| {
        format!("node {node} nm is outside the fitted range [{lo}, {hi}] nm; C_inv is extrapolated")
    });
    ProfileEstimate {
        profile: TechnologyProfile::new(node, c_inv, voltage),
        warning,
    }
}

/// Contents of a `tech.toml` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TechConfig {
    #[serde(default)]
    pub constants: ModelConstants,
    /// Fixed profile used when no regression line is present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<TechnologyProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<LinearFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dac_fit: Option<DacFit>,
}

impl TechConfig {
    pub fn from_toml_str(src: &str, path: &Path) -> Result<Self> {
        let cfg: TechConfig = toml::from_str(src).map_err(|e| error::toml_error(path, src, e))?;
        cfg.constants.validate()?;
        if let Some(p) = &cfg.profile {
            p.validate()?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = error::read_to_string(path)?;
        Self::from_toml_str(&src, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("tech config serializes")
    }

    /// Fits the regression line and `k3` from a datapoint set.
    pub fn fitted(datapoints: &[FitDatapoint], base: &ModelConstants) -> Result<Self> {
        let fit = fit_cinv(datapoints, base)?;
        let dac = fit_dac_constant(datapoints, base, &fit)?;
        Ok(TechConfig {
            constants: ModelConstants { k3: dac.k3, ..base.clone() },
            profile: None,
            fit: Some(fit),
            dac_fit: Some(dac),
        })
    }

    /// Technology profile at `node` and `voltage`. An explicit `c_inv`
    /// takes precedence over the regression line, which takes precedence
    /// over the fixed profile.
    pub fn resolve(&self, node: f64, voltage: f64, c_inv: Option<f64>) -> Result<ProfileEstimate> {
        let ratios = self.profile.clone();
        let mut est = match (c_inv, &self.fit, &self.profile) {
            (Some(c), _, _) => ProfileEstimate {
                profile: TechnologyProfile::new(node, c, voltage),
                warning: None,
            },
            (None, Some(fit), _) => profile_for(node, fit, voltage),
            (None, None, Some(p)) => ProfileEstimate {
                profile: TechnologyProfile { node, v_nominal: voltage, ..p.clone() },
                warning: ((p.node - node).abs() > f64::EPSILON)
                    .then(|| format!("tech profile is for {} nm but the architecture is {node} nm", p.node)),
            },
            (None, None, None) => {
                return Err(Error::invalid("tech config", "C_inv", "no profile, fit line or override provides C_inv"));
            }
        };
        if let Some(p) = ratios {
            est.profile.gate_ratio = p.gate_ratio;
            est.profile.wl_ratio = p.wl_ratio;
            est.profile.bl_ratio = p.bl_ratio;
        }
        Ok(est)
    }
}
