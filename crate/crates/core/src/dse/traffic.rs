//! Operand traffic between the macros and the memory levels above them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{self, Error, Result};
use crate::imc_cost::MacroSpec;
use crate::mapping::{self, Operand, SpatialMapping, TemporalMapping};
use crate::workload::LayerWorkload;

/// On-chip SRAM access energy used when no hierarchy is given (J/bit).
/// A 64-bit access to a 32 KB SRAM at 45 nm costs about 20 pJ.
pub const DEFAULT_SRAM_ENERGY_PER_BIT: f64 = 20e-12 / 64.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryLevelSpec {
    pub name: String,
    /// Access width. Informational: energies are charged per bit.
    #[serde(default = "default_word")]
    pub bits_per_word: u64,
    /// J/bit.
    pub energy_per_bit_read: f64,
    /// J/bit.
    pub energy_per_bit_write: f64,
    /// Capacity in bits; unlimited when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<u64>,
}

fn default_word() -> u64 {
    64
}

impl MemoryLevelSpec {
    pub fn validate(&self) -> Result<()> {
        let ctx = format!("memory level `{}`", self.name);
        if self.bits_per_word == 0 {
            return Err(Error::invalid(ctx, "bits_per_word", "must be >= 1"));
        }
        for (field, v) in [
            ("energy_per_bit_read", self.energy_per_bit_read),
            ("energy_per_bit_write", self.energy_per_bit_write),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(ctx, field, "must be finite and >= 0"));
            }
        }
        Ok(())
    }

    fn holds(&self, bits: u64) -> bool {
        self.capacity.is_none_or(|c| bits <= c)
    }
}

/// Memory levels above the macros, innermost first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryHierarchy {
    #[serde(rename = "level")]
    pub levels: Vec<MemoryLevelSpec>,
}

impl Default for MemoryHierarchy {
    fn default() -> Self {
        MemoryHierarchy {
            levels: vec![MemoryLevelSpec {
                name: "sram".into(),
                bits_per_word: default_word(),
                energy_per_bit_read: DEFAULT_SRAM_ENERGY_PER_BIT,
                energy_per_bit_write: DEFAULT_SRAM_ENERGY_PER_BIT,
                capacity: None,
            }],
        }
    }
}

impl MemoryHierarchy {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::invalid("memory hierarchy", "level", "at least one memory level is required"));
        }
        self.levels.iter().try_for_each(MemoryLevelSpec::validate)
    }

    pub fn from_toml_str(src: &str, path: &Path) -> Result<Self> {
        let h: MemoryHierarchy = toml::from_str(src).map_err(|e| error::toml_error(path, src, e))?;
        h.validate()?;
        Ok(h)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = error::read_to_string(path)?;
        Self::from_toml_str(&src, path)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelTraffic {
    pub name: String,
    pub weight_bits: u64,
    pub input_bits: u64,
    pub output_bits: u64,
    pub psum_bits: u64,
    /// J.
    pub energy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrafficReport {
    /// Bits written into the macros, including duplicated copies.
    pub weight_write_bits: u64,
    pub input_read_bits: u64,
    /// Final outputs written back.
    pub output_write_bits: u64,
    /// Partial sums spilled and reloaded (reads + writes).
    pub psum_rw_bits: u64,
    /// Layer tensors (W + I + O) in bits.
    pub footprint_bits: u64,
    /// J, summed over levels.
    pub e_weight: f64,
    pub e_input: f64,
    pub e_output: f64,
    pub e_psum: f64,
    pub levels: Vec<LevelTraffic>,
}

impl TrafficReport {
    pub fn e_total(&self) -> f64 {
        self.e_weight + self.e_input + self.e_output + self.e_psum
    }
}

fn ceil_log2(n: u64) -> u64 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros() as u64
    }
}

/// Accumulator width needed to hold a full partial sum of the layer.
pub fn psum_bits(layer: &LayerWorkload) -> u64 {
    layer.precision.b_i + layer.precision.b_w + ceil_log2(layer.reduction_len())
}

fn mul(values: &[u64], what: &str) -> Result<u64> {
    values
        .iter()
        .try_fold(1u64, |acc, &v| acc.checked_mul(v))
        .ok_or_else(|| Error::Overflow(what.to_string()))
}

/// Operand traffic of a legal mapping.
///
/// Each operand is transferred once per tile session: a maximal run of
/// consecutive presentations using the same tile. Weight tiles include the
/// copies held by macros that split output pixels. Outputs leave the macros
/// once per session; all but the last session of a tile are partial sums
/// that are written and read back at accumulator precision.
///
/// The level next to the macros sees this traffic. An outer level only sees
/// each tensor once if some inner level can hold the whole layer footprint.
pub fn traffic_for(
    layer: &LayerWorkload,
    spec: &MacroSpec,
    smap: &SpatialMapping,
    tmap: &TemporalMapping,
    hierarchy: &MemoryHierarchy,
) -> Result<TrafficReport> {
    mapping::check_legal(layer, spec, smap, tmap)?;
    hierarchy.validate()?;
    let what = format!("traffic of layer `{}`", layer.name);
    let (b_i, b_w) = (layer.precision.b_i, layer.precision.b_w);
    let b_out = b_i;
    let b_psum = psum_bits(layer);
    let m = &smap.macro_unroll;

    let weight_tile = mul(&[smap.rows_used(), smap.cols_used(), smap.macros_used()], &what)?;
    let input_tile = mul(&[smap.rows_used(), m.ox, m.oy, m.g], &what)?;
    let output_tile = mul(&[smap.cols_used(), m.k, m.ox, m.oy, m.g], &what)?;

    let weight_write_bits = mul(&[tmap.tile_sessions(Operand::Weight), weight_tile, b_w], &what)?;
    let input_read_bits = mul(&[tmap.tile_sessions(Operand::Input), input_tile, b_i], &what)?;
    let out_tiles = tmap.distinct_tiles(Operand::Output);
    let out_sessions = tmap.tile_sessions(Operand::Output);
    let output_write_bits = mul(&[out_tiles, output_tile, b_out], &what)?;
    let psum_rw_bits = mul(&[2, out_sessions - out_tiles, output_tile, b_psum], &what)?;

    let spills = out_sessions > out_tiles;
    let w_bits = mul(&[layer.weight_elems(), b_w], &what)?;
    let i_bits = mul(&[layer.input_elems(), b_i], &what)?;
    let o_bits = mul(&[layer.output_elems(), if spills { b_psum } else { b_out }], &what)?;
    let footprint_bits = w_bits
        .checked_add(i_bits)
        .and_then(|s| s.checked_add(o_bits))
        .ok_or_else(|| Error::Overflow(what.clone()))?;

    if !hierarchy.levels.iter().any(|l| l.holds(footprint_bits)) {
        let largest = hierarchy.levels.iter().filter_map(|l| l.capacity).max().unwrap_or(0);
        return Err(Error::Infeasible {
            layer: layer.name.clone(),
            constraint: format!(
                "footprint of {footprint_bits} bits exceeds every memory level (largest holds {largest} bits)"
            ),
        });
    }

    let mut report = TrafficReport {
        weight_write_bits,
        input_read_bits,
        output_write_bits,
        psum_rw_bits,
        footprint_bits,
        ..TrafficReport::default()
    };
    let mut held_inside = false;
    for level in &hierarchy.levels {
        let (w, i, o, p) = if held_inside {
            (w_bits, i_bits, mul(&[layer.output_elems(), b_out], &what)?, 0)
        } else {
            (weight_write_bits, input_read_bits, output_write_bits, psum_rw_bits)
        };
        let (er, ew) = (level.energy_per_bit_read, level.energy_per_bit_write);
        let e_w = w as f64 * er;
        let e_i = i as f64 * er;
        let e_o = o as f64 * ew;
        let e_p = p as f64 * 0.5 * (er + ew);
        report.e_weight += e_w;
        report.e_input += e_i;
        report.e_output += e_o;
        report.e_psum += e_p;
        report.levels.push(LevelTraffic {
            name: level.name.clone(),
            weight_bits: w,
            input_bits: i,
            output_bits: o,
            psum_bits: p,
            energy: e_w + e_i + e_o + e_p,
        });
        held_inside |= level.holds(footprint_bits);
    }
    Ok(report)
}
