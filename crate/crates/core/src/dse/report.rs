//! Flat per-layer report rows. Energies in fJ.

use serde::{Deserialize, Serialize};

use super::{LayerResult, NetworkResult, TrafficTotals};
use crate::imc_cost::EnergyBreakdown;

pub const REPORT_VERSION: u32 = 1;

const FJ: f64 = 1e15;

/// One CSV/JSON row. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub network: String,
    pub arch: String,
    /// Layer name, or `TOTAL` for the network row.
    pub layer: String,
    pub op_kind: String,
    pub spatial: String,
    pub temporal: String,
    pub total_macs: u64,
    pub macros_used: u64,
    pub compute_cycles: u64,
    pub cc_prech: u64,
    pub cc_acc: u64,
    pub cc_bs: u64,
    pub latency_s: f64,
    pub row_util: f64,
    pub col_util: f64,
    pub macro_util: f64,
    pub e_wl_fj: f64,
    pub e_bl_fj: f64,
    pub e_cell_fj: f64,
    pub e_logic_fj: f64,
    pub e_mul_fj: f64,
    pub e_adc_fj: f64,
    pub e_adder_tree_fj: f64,
    pub e_acc_fj: f64,
    pub e_dac_fj: f64,
    pub e_peripherals_fj: f64,
    pub e_macro_fj: f64,
    pub weight_write_bits: u64,
    pub input_read_bits: u64,
    pub output_write_bits: u64,
    pub psum_rw_bits: u64,
    pub e_weight_traffic_fj: f64,
    pub e_input_traffic_fj: f64,
    pub e_output_traffic_fj: f64,
    pub e_psum_traffic_fj: f64,
    pub e_traffic_fj: f64,
    pub e_total_fj: f64,
}

/// CSV header, in order.
pub const COLUMNS: [&str; 37] = [
    "network",
    "arch",
    "layer",
    "op_kind",
    "spatial",
    "temporal",
    "total_macs",
    "macros_used",
    "compute_cycles",
    "cc_prech",
    "cc_acc",
    "cc_bs",
    "latency_s",
    "row_util",
    "col_util",
    "macro_util",
    "e_wl_fj",
    "e_bl_fj",
    "e_cell_fj",
    "e_logic_fj",
    "e_mul_fj",
    "e_adc_fj",
    "e_adder_tree_fj",
    "e_acc_fj",
    "e_dac_fj",
    "e_peripherals_fj",
    "e_macro_fj",
    "weight_write_bits",
    "input_read_bits",
    "output_write_bits",
    "psum_rw_bits",
    "e_weight_traffic_fj",
    "e_input_traffic_fj",
    "e_output_traffic_fj",
    "e_psum_traffic_fj",
    "e_traffic_fj",
    "e_total_fj",
];

fn energy_row(
    network: &str,
    arch: &str,
    layer: &str,
    e: &EnergyBreakdown,
    t: &TrafficTotals,
    e_total: f64,
) -> ReportRow {
    ReportRow {
        network: network.to_string(),
        arch: arch.to_string(),
        layer: layer.to_string(),
        op_kind: String::new(),
        spatial: String::new(),
        temporal: String::new(),
        total_macs: 0,
        macros_used: 0,
        compute_cycles: 0,
        cc_prech: 0,
        cc_acc: 0,
        cc_bs: 0,
        latency_s: 0.0,
        row_util: 0.0,
        col_util: 0.0,
        macro_util: 0.0,
        e_wl_fj: e.e_wl * FJ,
        e_bl_fj: e.e_bl * FJ,
        e_cell_fj: e.e_cell * FJ,
        e_logic_fj: e.e_logic * FJ,
        e_mul_fj: e.e_mul * FJ,
        e_adc_fj: e.e_adc * FJ,
        e_adder_tree_fj: e.e_adder_tree * FJ,
        e_acc_fj: e.e_acc * FJ,
        e_dac_fj: e.e_dac * FJ,
        e_peripherals_fj: e.e_peripherals * FJ,
        e_macro_fj: e.e_total * FJ,
        weight_write_bits: t.weight_write_bits,
        input_read_bits: t.input_read_bits,
        output_write_bits: t.output_write_bits,
        psum_rw_bits: t.psum_rw_bits,
        e_weight_traffic_fj: t.e_weight * FJ,
        e_input_traffic_fj: t.e_input * FJ,
        e_output_traffic_fj: t.e_output * FJ,
        e_psum_traffic_fj: t.e_psum * FJ,
        e_traffic_fj: t.e_total() * FJ,
        e_total_fj: e_total * FJ,
    }
}

pub fn layer_row(network: &str, arch: &str, l: &LayerResult) -> ReportRow {
    let mut row = energy_row(
        network,
        arch,
        &l.layer,
        &l.breakdown,
        &TrafficTotals::of(&l.traffic),
        l.energy_total_with_memory,
    );
    row.op_kind = l.op_kind.name().to_string();
    row.spatial = l.mapping.spatial.to_string();
    row.temporal = l.mapping.temporal.to_string();
    row.total_macs = l.total_macs;
    row.macros_used = l.macros_used;
    row.compute_cycles = l.compute_cycles;
    row.cc_prech = l.cycles.cc_prech;
    row.cc_acc = l.cycles.cc_acc;
    row.cc_bs = l.cycles.cc_bs;
    row.latency_s = l.latency;
    row.row_util = l.utilization.row_util;
    row.col_util = l.utilization.col_util;
    row.macro_util = l.utilization.macro_util;
    row
}

/// Layer rows followed by a `TOTAL` row.
pub fn network_rows(arch: &str, r: &NetworkResult) -> Vec<ReportRow> {
    let mut rows: Vec<ReportRow> = r.layers.iter().map(|l| layer_row(&r.network, arch, l)).collect();
    let t = &r.totals;
    let mut total = energy_row(&r.network, arch, "TOTAL", &t.breakdown, &t.traffic, t.energy_total_with_memory);
    total.total_macs = t.total_macs;
    total.compute_cycles = t.compute_cycles;
    total.latency_s = t.latency;
    rows.push(total);
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedLayer {
    pub network: String,
    pub arch: String,
    pub layer: String,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub version: u32,
    pub rows: Vec<ReportRow>,
    #[serde(default)]
    pub skipped: Vec<SkippedLayer>,
}

impl ReportFile {
    pub fn new() -> Self {
        ReportFile { version: REPORT_VERSION, rows: Vec::new(), skipped: Vec::new() }
    }

    pub fn push(&mut self, arch: &str, r: &NetworkResult) {
        self.rows.extend(network_rows(arch, r));
        self.skipped.extend(r.skipped.iter().map(|l| SkippedLayer {
            network: r.network.clone(),
            arch: arch.to_string(),
            layer: l.clone(),
        }));
    }
}

impl Default for ReportFile {
    fn default() -> Self {
        Self::new()
    }
}
