//! Rendering of command results as tables, JSON or CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;
use imc_forge::dse::report::{ReportFile, ReportRow};
use imc_forge::dse::validate::ValidationReport;
use imc_forge::imc_cost::{ArchConfig, PeakPerformance};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

/// Peak figures of one architecture. Energies are per full tile of one macro, in fJ.
#[derive(Debug, Serialize)]
pub struct PeakRow {
    pub arch: String,
    pub paradigm: String,
    pub node_nm: f64,
    pub rows: u64,
    pub cols: u64,
    pub macros: u64,
    pub voltage: f64,
    pub f_clk: f64,
    pub c_inv: f64,
    pub tops: f64,
    pub topsw: f64,
    pub energy_per_op_fj: f64,
    pub e_cell_fj: f64,
    pub e_logic_fj: f64,
    pub e_adc_fj: f64,
    pub e_adder_tree_fj: f64,
    pub e_dac_fj: f64,
    pub e_total_fj: f64,
}

impl PeakRow {
    pub fn new(cfg: &ArchConfig, c_inv: f64, p: &PeakPerformance) -> Self {
        let b = &p.breakdown;
        PeakRow {
            arch: cfg.name.clone(),
            paradigm: cfg.spec.paradigm.to_string(),
            node_nm: cfg.node,
            rows: cfg.spec.rows,
            cols: cfg.spec.cols,
            macros: cfg.spec.macros,
            voltage: cfg.spec.voltage,
            f_clk: cfg.spec.f_clk,
            c_inv,
            tops: p.tops / 1e12,
            topsw: p.topsw / 1e12,
            energy_per_op_fj: p.energy_per_op() * 1e15,
            e_cell_fj: b.e_cell * 1e15,
            e_logic_fj: b.e_logic * 1e15,
            e_adc_fj: b.e_adc * 1e15,
            e_adder_tree_fj: b.e_adder_tree * 1e15,
            e_dac_fj: b.e_dac * 1e15,
            e_total_fj: b.e_total * 1e15,
        }
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Writes to `out`, or stdout when `None`.
pub fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().context("flushing CSV")?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

pub fn report_json(report: &ReportFile) -> Result<String> {
    to_json(report)
}

pub fn report_csv(rows: &[ReportRow]) -> Result<String> {
    to_csv(rows)
}

/// Left-aligned first column, right-aligned rest.
fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, cell) in width.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells
            .zip(&width)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut header.iter().copied());
    for r in rows {
        line(&mut r.iter().map(String::as_str));
    }
    out
}

pub fn render_peak(rows: &[PeakRow], format: Format) -> Result<String> {
    match format {
        Format::Json => to_json(rows),
        Format::Csv => to_csv(rows),
        Format::Table => {
            let header = [
                "arch", "paradigm", "node", "RxC", "macros", "V", "C_inv[fF]", "TOPS", "TOPS/W", "E/op[fJ]",
                "cell[fJ]", "logic[fJ]", "adc[fJ]", "tree[fJ]", "dac[fJ]",
            ];
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.arch.clone(),
                        r.paradigm.clone(),
                        format!("{}", r.node_nm),
                        format!("{}x{}", r.rows, r.cols),
                        r.macros.to_string(),
                        format!("{:.2}", r.voltage),
                        format!("{:.4}", r.c_inv * 1e15),
                        format!("{:.4}", r.tops),
                        format!("{:.2}", r.topsw),
                        format!("{:.4}", r.energy_per_op_fj),
                        format!("{:.1}", r.e_cell_fj),
                        format!("{:.1}", r.e_logic_fj),
                        format!("{:.1}", r.e_adc_fj),
                        format!("{:.1}", r.e_adder_tree_fj),
                        format!("{:.1}", r.e_dac_fj),
                    ]
                })
                .collect();
            Ok(table(&header, &body))
        }
    }
}

pub fn render_validation(report: &ValidationReport, format: Format) -> Result<String> {
    match format {
        Format::Json => to_json(report),
        Format::Csv => to_csv(&report.rows),
        Format::Table => {
            let header = ["datapoint", "paradigm", "node", "V", "modeled", "reported", "mismatch", "note"];
            let body: Vec<Vec<String>> = report
                .rows
                .iter()
                .map(|r| {
                    let note = match (r.exempt, r.extrapolated) {
                        (true, _) => "low-V, exempt",
                        (false, true) => "extrapolated",
                        _ => "",
                    };
                    vec![
                        r.name.clone(),
                        r.paradigm.to_string(),
                        format!("{}", r.node),
                        format!("{:.2}", r.voltage),
                        format!("{:.2}", r.modeled_topsw),
                        format!("{:.2}", r.reported_topsw),
                        format!("{:+.2}%", 100.0 * r.mismatch),
                        note.to_string(),
                    ]
                })
                .collect();
            let mut out = table(&header, &body);
            let _ = writeln!(
                out,
                "mean |mismatch| {:.2}%, max {:.2}% (TOPS/W; exempt rows excluded)",
                100.0 * report.mean_abs_mismatch,
                100.0 * report.max_abs_mismatch
            );
            Ok(out)
        }
    }
}

pub fn render_report(report: &ReportFile, format: Format) -> Result<String> {
    match format {
        Format::Json => to_json(report),
        Format::Csv => to_csv(&report.rows),
        Format::Table => {
            let header = [
                "network", "arch", "layer", "op", "macros", "cycles", "macro[nJ]", "traffic[nJ]", "total[nJ]",
            ];
            let body: Vec<Vec<String>> = report
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.network.clone(),
                        r.arch.clone(),
                        r.layer.clone(),
                        r.op_kind.clone(),
                        r.macros_used.to_string(),
                        r.compute_cycles.to_string(),
                        format!("{:.4}", r.e_macro_fj * 1e-6),
                        format!("{:.4}", r.e_traffic_fj * 1e-6),
                        format!("{:.4}", r.e_total_fj * 1e-6),
                    ]
                })
                .collect();
            let mut out = table(&header, &body);
            for s in &report.skipped {
                let _ = writeln!(out, "skipped {} / {} / {}", s.network, s.arch, s.layer);
            }
            Ok(out)
        }
    }
}
