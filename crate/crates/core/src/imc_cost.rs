//! Unified datapath energy model for analog (AIMC) and digital (DIMC) SRAM
//! in-memory-computing macros.
//!
//! All quantities are SI: joules, farads, volts, hertz. Energies for one macro
//! are computed from the macro geometry ([`MacroSpec`]), the technology
//! capacitances ([`TechnologyProfile`]), the fitted constants
//! ([`ModelConstants`]) and mapping-dependent cycle counts ([`CycleCounts`]).
//!
//! ```text
//! E_total = E_MUL + E_ACC + E_peripherals
//! E_MUL   = E_cell + E_logic
//! E_ACC   = E_ADC + E_adder_tree
//! E_periph = E_DAC
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{self, Error, Result};
use crate::mapping::{self, SpatialMapping, TemporalMapping};
use crate::tech_model::{ModelConstants, TechnologyProfile};
use crate::workload::{LayerWorkload, LoopBounds, OpKind, Precision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Paradigm {
    #[serde(rename = "AIMC")]
    Aimc,
    #[serde(rename = "DIMC")]
    Dimc,
}

impl std::fmt::Display for Paradigm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Paradigm::Aimc => "AIMC",
            Paradigm::Dimc => "DIMC",
        })
    }
}

/// How DAC conversion events are counted for AIMC macros.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DacCountMode {
    /// Every row DAC of the array converts once per serial input phase.
    #[default]
    Aggregate,
    /// One conversion event per serial input phase, independent of array height.
    PerRowCycle,
}

/// Geometry, paradigm and operating point of one IMC macro type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroSpec {
    pub paradigm: Paradigm,
    #[serde(rename = "R")]
    pub rows: u64,
    #[serde(rename = "C")]
    pub cols: u64,
    /// Rows multiplexed onto one vector-MAC slot.
    #[serde(rename = "M", default = "one")]
    pub row_mux: u64,
    #[serde(rename = "B_w")]
    pub weight_bits: u64,
    #[serde(rename = "B_i")]
    pub input_bits: u64,
    #[serde(rename = "ADC_res", default)]
    pub adc_res: u64,
    #[serde(rename = "DAC_res", default)]
    pub dac_res: u64,
    #[serde(rename = "V")]
    pub voltage: f64,
    pub f_clk: f64,
    #[serde(default = "one")]
    pub macros: u64,
    /// Bitlines sharing one ADC.
    #[serde(default = "one")]
    pub adc_share: u64,
    #[serde(default)]
    pub dac_count_mode: DacCountMode,
}

fn one() -> u64 {
    1
}

/// Array axes derived from a [`MacroSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedGeometry {
    /// Operands per row (activation-propagation axis).
    pub d1: u64,
    /// Accumulation axis length.
    pub d2: u64,
}

impl MacroSpec {
    pub fn geometry(&self) -> DerivedGeometry {
        DerivedGeometry {
            d1: self.cols / self.weight_bits,
            d2: self.rows / self.row_mux,
        }
    }

    /// Rows available to the spatial reduction dimensions (`D2 * M`).
    pub fn row_capacity(&self) -> u64 {
        self.rows
    }

    pub fn cells(&self) -> u64 {
        self.rows * self.cols
    }

    /// Checks the structural invariants. `V = 0` is accepted here; file loaders
    /// additionally require a strictly positive supply.
    pub fn validate(&self) -> Result<()> {
        let ctx = "macro spec";
        let nonzero = [
            ("R", self.rows),
            ("C", self.cols),
            ("M", self.row_mux),
            ("B_w", self.weight_bits),
            ("B_i", self.input_bits),
            ("macros", self.macros),
            ("adc_share", self.adc_share),
        ];
        for (field, v) in nonzero {
            if v == 0 {
                return Err(Error::invalid(ctx, field, "must be >= 1"));
            }
        }
        if self.cols % self.weight_bits != 0 {
            return Err(Error::invalid(
                ctx,
                "C",
                format!("C = {} is not a multiple of B_w = {}", self.cols, self.weight_bits),
            ));
        }
        if self.rows % self.row_mux != 0 {
            return Err(Error::invalid(
                ctx,
                "R",
                format!("R = {} is not a multiple of M = {}", self.rows, self.row_mux),
            ));
        }
        match self.paradigm {
            Paradigm::Aimc => {
                if self.row_mux != 1 {
                    return Err(Error::invalid(ctx, "M", "AIMC macros require M = 1"));
                }
                if self.adc_res == 0 {
                    return Err(Error::invalid(ctx, "ADC_res", "AIMC macros require ADC_res >= 1"));
                }
                if self.dac_res == 0 {
                    return Err(Error::invalid(ctx, "DAC_res", "AIMC macros require DAC_res >= 1"));
                }
                if self.adc_res > 24 {
                    return Err(Error::invalid(ctx, "ADC_res", "ADC_res above 24 bits is not modeled"));
                }
            }
            Paradigm::Dimc => {
                if self.adc_res != 0 {
                    return Err(Error::invalid(ctx, "ADC_res", "DIMC macros have no ADC (ADC_res = 0)"));
                }
                if self.dac_res != 0 {
                    return Err(Error::invalid(ctx, "DAC_res", "DIMC macros have no DAC (DAC_res = 0)"));
                }
            }
        }
        if !(self.voltage.is_finite() && self.voltage >= 0.0) {
            return Err(Error::invalid(ctx, "V", "supply voltage must be finite and >= 0"));
        }
        if !(self.f_clk.is_finite() && self.f_clk > 0.0) {
            return Err(Error::invalid(ctx, "f_clk", "clock frequency must be finite and > 0"));
        }
        Ok(())
    }

    /// Serial input phases per presentation: `ceil(B_i / DAC_res)` for AIMC,
    /// `B_i` for bit-serial DIMC.
    pub fn serial_phases(&self, input_bits: u64) -> u64 {
        match self.paradigm {
            Paradigm::Aimc => input_bits.div_ceil(self.dac_res.max(1)),
            Paradigm::Dimc => input_bits,
        }
    }
}

/// Mapping-dependent event counts for one macro executing one layer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleCounts {
    pub cc_prech: u64,
    pub cc_acc: u64,
    pub cc_bs: u64,
    pub total_macs: u64,
    /// Distinct input vectors applied (product of temporal loop factors).
    pub presentations: u64,
    /// Multiplexed row groups swept per presentation (DIMC; 1 for AIMC).
    pub row_groups: u64,
    pub serial_phases: u64,
}

impl CycleCounts {
    /// Compute cycles spent by the macro.
    pub fn compute_cycles(&self) -> u64 {
        self.presentations * self.row_groups * self.serial_phases
    }
}

/// Per-component datapath energy in joules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub e_wl: f64,
    pub e_bl: f64,
    pub e_cell: f64,
    pub e_logic: f64,
    pub e_mul: f64,
    pub e_adc: f64,
    pub e_adder_tree: f64,
    pub e_acc: f64,
    pub e_dac: f64,
    pub e_peripherals: f64,
    pub e_total: f64,
}

impl EnergyBreakdown {
    /// Builds a breakdown from leaf components; every aggregate is recomputed
    /// so the composition identities hold exactly.
    pub fn from_components(
        e_wl: f64,
        e_bl: f64,
        e_cell: f64,
        e_logic: f64,
        e_adc: f64,
        e_adder_tree: f64,
        e_dac: f64,
    ) -> Self {
        let e_mul = e_cell + e_logic;
        let e_acc = e_adc + e_adder_tree;
        let e_peripherals = e_dac;
        EnergyBreakdown {
            e_wl,
            e_bl,
            e_cell,
            e_logic,
            e_mul,
            e_adc,
            e_adder_tree,
            e_acc,
            e_dac,
            e_peripherals,
            e_total: e_mul + e_acc + e_peripherals,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_components(
            self.e_wl * factor,
            self.e_bl * factor,
            self.e_cell * factor,
            self.e_logic * factor,
            self.e_adc * factor,
            self.e_adder_tree * factor,
            self.e_dac * factor,
        )
    }

    /// Component-wise sum with recomposed aggregates.
    pub fn accumulate(&self, other: &Self) -> Self {
        Self::from_components(
            self.e_wl + other.e_wl,
            self.e_bl + other.e_bl,
            self.e_cell + other.e_cell,
            self.e_logic + other.e_logic,
            self.e_adc + other.e_adc,
            self.e_adder_tree + other.e_adder_tree,
            self.e_dac + other.e_dac,
        )
    }

    /// Fields in declaration order, with their names.
    pub fn fields(&self) -> [(&'static str, f64); 11] {
        [
            ("e_wl", self.e_wl),
            ("e_bl", self.e_bl),
            ("e_cell", self.e_cell),
            ("e_logic", self.e_logic),
            ("e_mul", self.e_mul),
            ("e_adc", self.e_adc),
            ("e_adder_tree", self.e_adder_tree),
            ("e_acc", self.e_acc),
            ("e_dac", self.e_dac),
            ("e_peripherals", self.e_peripherals),
            ("e_total", self.e_total),
        ]
    }
}

/// Wordline and bitline energy of the array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellEnergy {
    /// `C_WL * V^2 * B_w * D1`, one precharge event.
    pub wl_per_event: f64,
    /// `C_BL * V^2 * B_w * D2 * M`, one precharge event.
    pub bl_per_event: f64,
    pub e_wl: f64,
    pub e_bl: f64,
    /// `(E_WL + E_BL) * CC_prech`.
    pub e_cell: f64,
}

pub fn cell_energy(spec: &MacroSpec, tech: &TechnologyProfile, cc: &CycleCounts) -> CellEnergy {
    let g = spec.geometry();
    let v2 = spec.voltage * spec.voltage;
    let bw = spec.weight_bits as f64;
    let wl_per_event = tech.c_wl() * v2 * bw * g.d1 as f64;
    let bl_per_event = tech.c_bl() * v2 * bw * g.d2 as f64 * spec.row_mux as f64;
    let n = cc.cc_prech as f64;
    CellEnergy {
        wl_per_event,
        bl_per_event,
        e_wl: wl_per_event * n,
        e_bl: bl_per_event * n,
        e_cell: (wl_per_event + bl_per_event) * n,
    }
}

/// Multiplier logic energy; DIMC only, since AIMC multiplies inside the bitcell.
pub fn logic_energy(
    spec: &MacroSpec,
    tech: &TechnologyProfile,
    cc: &CycleCounts,
    constants: &ModelConstants,
) -> f64 {
    match spec.paradigm {
        Paradigm::Aimc => 0.0,
        Paradigm::Dimc => {
            let v2 = spec.voltage * spec.voltage;
            let g_mul = constants.g_mul_base * spec.weight_bits as f64;
            v2 * tech.c_gate() * g_mul * cc.total_macs as f64
        }
    }
}

/// Width of the adder tree actually built for `n` inputs.
pub fn adder_tree_width(n: u64) -> u64 {
    n.max(1).next_power_of_two()
}

/// Number of 1-bit full adders in a ripple-carry adder tree reducing `n`
/// operands of `b` bits: `sum_{s=1..log2 n} (b + s - 1) * n / 2^s`.
///
/// Non-power-of-two widths are padded to the next power of two, so the
/// result is an upper bound in that case.
pub fn adder_tree_fa_count(n: u64, b: u64) -> u64 {
    let width = adder_tree_width(n);
    if width != n {
        log::debug!("adder tree with {n} inputs padded to {width}");
    }
    let stages = width.trailing_zeros() as u64;
    (1..=stages).map(|s| (b + s - 1) * (width >> s)).sum()
}

/// Adder tree inputs and operand precision for the paradigm.
pub fn adder_tree_shape(spec: &MacroSpec) -> (u64, u64) {
    match spec.paradigm {
        Paradigm::Dimc => (spec.geometry().d2, spec.weight_bits),
        Paradigm::Aimc => (spec.weight_bits, spec.adc_res),
    }
}

pub fn adder_tree_energy(
    spec: &MacroSpec,
    tech: &TechnologyProfile,
    cc: &CycleCounts,
    constants: &ModelConstants,
) -> f64 {
    let (n, b) = adder_tree_shape(spec);
    let fa = adder_tree_fa_count(n, b);
    if fa == 0 {
        return 0.0;
    }
    let v2 = spec.voltage * spec.voltage;
    let d1 = spec.geometry().d1 as f64;
    tech.c_gate() * constants.g_fa * v2 * d1 * fa as f64 * cc.cc_acc as f64
}

/// ADC energy, one conversion per bitline (or per `adc_share` bitlines). AIMC only.
pub fn adc_energy(spec: &MacroSpec, cc: &CycleCounts, constants: &ModelConstants) -> f64 {
    match spec.paradigm {
        Paradigm::Dimc => 0.0,
        Paradigm::Aimc => {
            let res = spec.adc_res as f64;
            let per_conversion = constants.k1 * res + constants.k2 * 4f64.powf(res);
            let v2 = spec.voltage * spec.voltage;
            let conversions =
                cc.total_macs as f64 / spec.geometry().d2 as f64 / spec.adc_share as f64;
            per_conversion * v2 * spec.weight_bits as f64 * conversions
        }
    }
}

/// DAC energy. AIMC only; DIMC wordline drivers are covered by `E_WL`.
pub fn dac_energy(spec: &MacroSpec, cc: &CycleCounts, constants: &ModelConstants) -> f64 {
    match spec.paradigm {
        Paradigm::Dimc => 0.0,
        Paradigm::Aimc => {
            let v2 = spec.voltage * spec.voltage;
            constants.k3 * spec.dac_res as f64 * v2 * cc.cc_bs as f64
        }
    }
}

pub fn total_energy(
    spec: &MacroSpec,
    tech: &TechnologyProfile,
    cc: &CycleCounts,
    constants: &ModelConstants,
) -> EnergyBreakdown {
    let cell = cell_energy(spec, tech, cc);
    EnergyBreakdown::from_components(
        cell.e_wl,
        cell.e_bl,
        cell.e_cell,
        logic_energy(spec, tech, cc, constants),
        adc_energy(spec, cc, constants),
        adder_tree_energy(spec, tech, cc, constants),
        dac_energy(spec, cc, constants),
    )
}

/// Peak figures of a macro array at full utilization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakPerformance {
    /// Operations per second over all macros (1 MAC = 2 ops).
    pub tops: f64,
    /// Operations per joule.
    pub topsw: f64,
    pub cycles: CycleCounts,
    /// Energy of one macro processing one full tile.
    pub breakdown: EnergyBreakdown,
}

impl PeakPerformance {
    pub fn energy_per_op(&self) -> f64 {
        1.0 / self.topsw
    }
}

/// Dense layer that exactly fills one macro: `K = D1`, `C = D2 * M`.
pub fn full_tile_layer(spec: &MacroSpec) -> LayerWorkload {
    let g = spec.geometry();
    LayerWorkload {
        name: "full-tile".into(),
        op_kind: OpKind::Dense,
        loops: LoopBounds {
            k: g.d1,
            c: spec.row_capacity(),
            ..LoopBounds::ones()
        },
        precision: Precision {
            b_i: spec.input_bits,
            b_w: spec.weight_bits,
        },
        strides: [1, 1],
    }
}

/// Cycle counts of one macro processing one full tile.
pub fn full_tile_cycles(spec: &MacroSpec) -> Result<CycleCounts> {
    let layer = full_tile_layer(spec);
    let smap = SpatialMapping::full_tile(&layer);
    let tmap = TemporalMapping::default();
    mapping::extract_cycles(&layer, spec, &smap, &tmap)
}

pub fn peak_performance(
    spec: &MacroSpec,
    tech: &TechnologyProfile,
    constants: &ModelConstants,
) -> Result<PeakPerformance> {
    spec.validate()?;
    let cycles = full_tile_cycles(spec)?;
    let breakdown = total_energy(spec, tech, &cycles, constants);
    let ops = 2.0 * cycles.total_macs as f64;
    let macs_per_cycle = cycles.total_macs as f64 / cycles.compute_cycles() as f64;
    Ok(PeakPerformance {
        tops: 2.0 * macs_per_cycle * spec.f_clk * spec.macros as f64,
        topsw: ops / breakdown.e_total,
        cycles,
        breakdown,
    })
}

/// Optional per-architecture overrides of technology and model constants.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArchOverrides {
    #[serde(rename = "C_inv", default, skip_serializing_if = "Option::is_none")]
    pub c_inv: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k3: Option<f64>,
}

/// Contents of an `arch.toml` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    #[serde(default)]
    pub name: String,
    /// Technology node in nm.
    pub node: f64,
    #[serde(flatten)]
    pub spec: MacroSpec,
    #[serde(default)]
    pub overrides: ArchOverrides,
}

impl ArchConfig {
    pub fn from_toml_str(src: &str, path: &Path) -> Result<Self> {
        let cfg: ArchConfig = toml::from_str(src).map_err(|e| error::toml_error(path, src, e))?;
        let locate = |field: &str, message: String| {
            let line = error::toml_key_line(src, field).unwrap_or(0);
            Error::invalid(format!("{}:{line}", path.display()), field, message)
        };
        if let Err(Error::Invalid { field, message, .. }) = cfg.spec.validate() {
            return Err(locate(&field, message));
        }
        if !(cfg.spec.voltage > 0.0) {
            return Err(locate("V", "supply voltage must be > 0".into()));
        }
        if !(cfg.node.is_finite() && cfg.node > 0.0) {
            return Err(locate("node", "technology node must be > 0 nm".into()));
        }
        if let Some(c) = cfg.overrides.c_inv {
            if !(c.is_finite() && c > 0.0) {
                return Err(locate("C_inv", "C_inv override must be > 0".into()));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = error::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&src, path)?;
        if cfg.name.is_empty() {
            cfg.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(cfg)
    }

    pub fn apply_constant_overrides(&self, constants: &ModelConstants) -> ModelConstants {
        let mut c = constants.clone();
        if let Some(k1) = self.overrides.k1 {
            c.k1 = k1;
        }
        if let Some(k2) = self.overrides.k2 {
            c.k2 = k2;
        }
        if let Some(k3) = self.overrides.k3 {
            c.k3 = k3;
        }
        c
    }
}
