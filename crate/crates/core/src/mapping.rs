//! Spatial unrolling and temporal loop ordering of a layer on an IMC macro
//! array, and the cycle counts a mapping implies.
//!
//! Array axes only accept the loop dimensions that match the dataflow of the
//! hardware: `K` on columns (inputs broadcast along the wordline), `C`, `FX`,
//! `FY` on rows (reduced along the bitline), and `OX`, `OY`, `G` plus any `K`
//! overflow across macros.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imc_cost::{CycleCounts, DacCountMode, MacroSpec, Paradigm};
use crate::workload::{Dim, LayerWorkload, LoopBounds};

/// Upper bound on spatial candidates kept per layer.
pub const DEFAULT_CANDIDATE_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowUnroll {
    #[serde(rename = "C")]
    pub c: u64,
    #[serde(rename = "FX")]
    pub fx: u64,
    #[serde(rename = "FY")]
    pub fy: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColUnroll {
    #[serde(rename = "K")]
    pub k: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MacroUnroll {
    #[serde(rename = "OX")]
    pub ox: u64,
    #[serde(rename = "OY")]
    pub oy: u64,
    #[serde(rename = "G")]
    pub g: u64,
    #[serde(rename = "K")]
    pub k: u64,
}

/// Spatial unrolling over the three hardware axes. The derived ordering
/// (rows, then columns, then macros) is the deterministic tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpatialMapping {
    pub row_unroll: RowUnroll,
    pub col_unroll: ColUnroll,
    pub macro_unroll: MacroUnroll,
}

impl SpatialMapping {
    pub fn trivial() -> Self {
        SpatialMapping {
            row_unroll: RowUnroll { c: 1, fx: 1, fy: 1 },
            col_unroll: ColUnroll { k: 1 },
            macro_unroll: MacroUnroll { ox: 1, oy: 1, g: 1, k: 1 },
        }
    }

    /// Unrolls the whole reduction onto rows and all of `K` onto columns.
    pub fn full_tile(layer: &LayerWorkload) -> Self {
        let l = &layer.loops;
        SpatialMapping {
            row_unroll: RowUnroll { c: l.c, fx: l.fx, fy: l.fy },
            col_unroll: ColUnroll { k: l.k },
            ..Self::trivial()
        }
    }

    pub fn rows_used(&self) -> u64 {
        let r = &self.row_unroll;
        r.c * r.fx * r.fy
    }

    pub fn cols_used(&self) -> u64 {
        self.col_unroll.k
    }

    pub fn macros_used(&self) -> u64 {
        let m = &self.macro_unroll;
        m.ox * m.oy * m.g * m.k
    }

    /// Product of the spatial factors of `dim` over all axes.
    pub fn factor(&self, dim: Dim) -> u64 {
        let (r, c, m) = (&self.row_unroll, &self.col_unroll, &self.macro_unroll);
        match dim {
            Dim::B => 1,
            Dim::K => c.k * m.k,
            Dim::C => r.c,
            Dim::OX => m.ox,
            Dim::OY => m.oy,
            Dim::FX => r.fx,
            Dim::FY => r.fy,
            Dim::G => m.g,
        }
    }

    /// Macros holding identical weights (output-pixel parallelism).
    pub fn weight_duplication(&self) -> u64 {
        self.macro_unroll.ox * self.macro_unroll.oy
    }
}

impl std::fmt::Display for SpatialMapping {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (r, c, m) = (&self.row_unroll, &self.col_unroll, &self.macro_unroll);
        write!(
            f,
            "rows[C{} FX{} FY{}] cols[K{}] macros[OX{} OY{} G{} K{}]",
            r.c, r.fx, r.fy, c.k, m.ox, m.oy, m.g, m.k
        )
    }
}

/// The three operands of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operand {
    Weight,
    Input,
    Output,
}

impl Operand {
    /// Whether iterating `dim` changes which elements of the operand are used.
    pub fn relevant(self, dim: Dim) -> bool {
        match self {
            Operand::Weight => !matches!(dim, Dim::B | Dim::OX | Dim::OY),
            Operand::Input => dim != Dim::K,
            Operand::Output => !matches!(dim, Dim::C | Dim::FX | Dim::FY),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TemporalLoop {
    pub dim: Dim,
    pub factor: u64,
}

/// Temporal loops, innermost first. Loops with factor 1 are omitted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TemporalMapping {
    pub loops: Vec<TemporalLoop>,
    /// Consecutive presentations that reuse the same weight tile.
    pub weight_stationarity: u64,
}

impl TemporalMapping {
    pub fn new(loops: Vec<TemporalLoop>) -> Self {
        let loops: Vec<_> = loops.into_iter().filter(|l| l.factor > 1).collect();
        let mut t = TemporalMapping { loops, weight_stationarity: 1 };
        t.weight_stationarity = t.presentations() / t.tile_sessions(Operand::Weight);
        t
    }

    pub fn presentations(&self) -> u64 {
        self.loops.iter().map(|l| l.factor).product()
    }

    pub fn factor(&self, dim: Dim) -> u64 {
        self.loops.iter().filter(|l| l.dim == dim).map(|l| l.factor).product()
    }

    /// Number of maximal runs of consecutive presentations that use the same
    /// operand tile: the product of all factors at and above the innermost
    /// loop relevant to the operand.
    pub fn tile_sessions(&self, operand: Operand) -> u64 {
        match self.loops.iter().position(|l| operand.relevant(l.dim)) {
            Some(p) => self.loops[p..].iter().map(|l| l.factor).product(),
            None => 1,
        }
    }

    /// Distinct tiles of the operand visited over the whole execution.
    pub fn distinct_tiles(&self, operand: Operand) -> u64 {
        self.loops
            .iter()
            .filter(|l| operand.relevant(l.dim))
            .map(|l| l.factor)
            .product()
    }

    pub fn weight_loads(&self) -> u64 {
        self.tile_sessions(Operand::Weight)
    }
}

impl std::fmt::Display for TemporalMapping {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.loops.is_empty() {
            return f.write_str("-");
        }
        let parts: Vec<String> = self.loops.iter().map(|l| format!("{}{}", l.dim, l.factor)).collect();
        f.write_str(&parts.join(" < "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Utilization {
    pub row_util: f64,
    pub col_util: f64,
    pub macro_util: f64,
    pub overall: f64,
}

pub fn utilization(_layer: &LayerWorkload, spec: &MacroSpec, smap: &SpatialMapping) -> Utilization {
    let g = spec.geometry();
    let row_util = smap.rows_used() as f64 / spec.row_capacity() as f64;
    let col_util = smap.cols_used() as f64 / g.d1 as f64;
    let macro_util = smap.macros_used() as f64 / spec.macros as f64;
    Utilization {
        row_util,
        col_util,
        macro_util,
        overall: row_util * col_util * macro_util,
    }
}

/// Loop bounds left for temporal iteration after spatial unrolling.
pub fn residual_bounds(layer: &LayerWorkload, smap: &SpatialMapping) -> Result<LoopBounds> {
    let mut out = LoopBounds::ones();
    for dim in Dim::ALL {
        let bound = layer.loops.get(dim);
        let s = smap.factor(dim);
        if s == 0 || bound % s != 0 {
            return Err(Error::IllegalMapping(format!(
                "spatial factor {s} of {dim} does not divide bound {bound} of layer `{}`",
                layer.name
            )));
        }
        out.set(dim, bound / s);
    }
    Ok(out)
}

pub fn check_legal(
    layer: &LayerWorkload,
    spec: &MacroSpec,
    smap: &SpatialMapping,
    tmap: &TemporalMapping,
) -> Result<()> {
    let g = spec.geometry();
    if layer.precision.b_w > spec.weight_bits {
        return Err(Error::IllegalMapping(format!(
            "layer `{}` needs {}-bit weights, macro stores {} bits",
            layer.name, layer.precision.b_w, spec.weight_bits
        )));
    }
    if smap.rows_used() > spec.row_capacity() {
        return Err(Error::IllegalMapping(format!(
            "row unroll {} exceeds D2*M = {}",
            smap.rows_used(),
            spec.row_capacity()
        )));
    }
    if smap.cols_used() > g.d1 {
        return Err(Error::IllegalMapping(format!("column unroll {} exceeds D1 = {}", smap.cols_used(), g.d1)));
    }
    if smap.macros_used() > spec.macros {
        return Err(Error::IllegalMapping(format!(
            "macro unroll {} exceeds {} macros",
            smap.macros_used(),
            spec.macros
        )));
    }
    let residual = residual_bounds(layer, smap)?;
    for dim in Dim::ALL {
        let t = tmap.factor(dim);
        if t != residual.get(dim) {
            return Err(Error::IllegalMapping(format!(
                "temporal factor {t} of {dim} does not cover residual {} of layer `{}`",
                residual.get(dim),
                layer.name
            )));
        }
    }
    Ok(())
}

/// Cycle counts of one active macro executing the layer under the mapping.
pub fn extract_cycles(
    layer: &LayerWorkload,
    spec: &MacroSpec,
    smap: &SpatialMapping,
    tmap: &TemporalMapping,
) -> Result<CycleCounts> {
    check_legal(layer, spec, smap, tmap)?;
    let g = spec.geometry();
    let presentations = tmap.presentations();
    let serial_phases = spec.serial_phases(layer.precision.b_i);
    let total_macs = smap.rows_used() * smap.cols_used() * presentations;
    let steps = presentations * serial_phases;
    let counts = match spec.paradigm {
        Paradigm::Aimc => CycleCounts {
            cc_prech: steps,
            cc_acc: steps,
            cc_bs: match spec.dac_count_mode {
                DacCountMode::Aggregate => g.d2 * spec.row_mux * steps,
                DacCountMode::PerRowCycle => steps,
            },
            total_macs,
            presentations,
            row_groups: 1,
            serial_phases,
        },
        Paradigm::Dimc => {
            let row_groups = smap.rows_used().div_ceil(g.d2);
            CycleCounts {
                cc_prech: tmap.weight_loads() * spec.row_mux,
                cc_acc: steps * row_groups,
                cc_bs: 0,
                total_macs,
                presentations,
                row_groups,
                serial_phases,
            }
        }
    };
    Ok(counts)
}

pub fn divisors(n: u64) -> Vec<u64> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut i = 1;
    while i * i <= n {
        if n % i == 0 {
            small.push(i);
            if i != n / i {
                large.push(n / i);
            }
        }
        i += 1;
    }
    small.extend(large.into_iter().rev());
    small
}

fn dominated<const N: usize>(a: &[u64; N], b: &[u64; N]) -> bool {
    a != b && a.iter().zip(b).all(|(x, y)| x <= y)
}

/// Tuples not dominated component-wise by another tuple in the set.
fn maximal<const N: usize>(set: &[[u64; N]]) -> Vec<[u64; N]> {
    set.iter()
        .filter(|a| !set.iter().any(|b| dominated(a, b)))
        .copied()
        .collect()
}

fn row_tuples(layer: &LayerWorkload, cap: u64) -> Vec<[u64; 3]> {
    let l = &layer.loops;
    let mut out = Vec::new();
    for c in divisors(l.c) {
        for fx in divisors(l.fx) {
            for fy in divisors(l.fy) {
                if c * fx * fy <= cap {
                    out.push([c, fx, fy]);
                }
            }
        }
    }
    out
}

fn macro_tuples(layer: &LayerWorkload, k_left: u64, cap: u64) -> Vec<[u64; 4]> {
    let l = &layer.loops;
    let mut out = Vec::new();
    for ox in divisors(l.ox) {
        for oy in divisors(l.oy) {
            if ox * oy > cap {
                continue;
            }
            for g in divisors(l.g) {
                if ox * oy * g > cap {
                    continue;
                }
                for k in divisors(k_left) {
                    if ox * oy * g * k <= cap {
                        out.push([ox, oy, g, k]);
                    }
                }
            }
        }
    }
    out
}

fn build(row: [u64; 3], k: u64, m: [u64; 4]) -> SpatialMapping {
    SpatialMapping {
        row_unroll: RowUnroll { c: row[0], fx: row[1], fy: row[2] },
        col_unroll: ColUnroll { k },
        macro_unroll: MacroUnroll { ox: m[0], oy: m[1], g: m[2], k: m[3] },
    }
}

/// Greedy mapping: fill rows first, then columns, then macros.
pub fn greedy_spatial(layer: &LayerWorkload, spec: &MacroSpec) -> SpatialMapping {
    let best = |v: &[[u64; 3]]| *v.iter().max_by_key(|t| (t.iter().product::<u64>(), **t)).unwrap();
    let row = best(&row_tuples(layer, spec.row_capacity()));
    let k = divisors(layer.loops.k)
        .into_iter()
        .filter(|&k| k <= spec.geometry().d1)
        .max()
        .unwrap_or(1);
    let m = *macro_tuples(layer, layer.loops.k / k, spec.macros)
        .iter()
        .max_by_key(|t| (t.iter().product::<u64>(), **t))
        .unwrap();
    build(row, k, m)
}

pub fn enumerate_spatial(layer: &LayerWorkload, spec: &MacroSpec) -> Vec<SpatialMapping> {
    enumerate_spatial_capped(layer, spec, DEFAULT_CANDIDATE_CAP)
}

/// Divisor-based spatial candidates within array capacity, sorted in
/// tie-break order. All divisor combinations are returned when they fit under
/// `cap`; otherwise each axis is reduced to its maximal factor tuples and the
/// list is truncated (largest spatial parallelism first). The trivial and the
/// greedy mapping are always present.
pub fn enumerate_spatial_capped(layer: &LayerWorkload, spec: &MacroSpec, cap: usize) -> Vec<SpatialMapping> {
    let d1 = spec.geometry().d1;
    let rows = row_tuples(layer, spec.row_capacity());
    let cols: Vec<u64> = divisors(layer.loops.k).into_iter().filter(|&k| k <= d1).collect();
    let per_col: Vec<(u64, Vec<[u64; 4]>)> = cols
        .iter()
        .map(|&k| (k, macro_tuples(layer, layer.loops.k / k, spec.macros)))
        .collect();

    let full: usize = per_col.iter().map(|(_, m)| rows.len() * m.len()).sum();
    let mut out = Vec::new();
    if full <= cap {
        for (k, ms) in &per_col {
            for r in &rows {
                for m in ms {
                    out.push(build(*r, *k, *m));
                }
            }
        }
    } else {
        let rows = maximal(&rows);
        let cols_max: Vec<[u64; 1]> = maximal(&cols.iter().map(|&k| [k]).collect::<Vec<_>>());
        for [k] in cols_max {
            let ms = maximal(&macro_tuples(layer, layer.loops.k / k, spec.macros));
            for r in &rows {
                for m in &ms {
                    out.push(build(*r, k, *m));
                }
            }
        }
        if out.len() > cap {
            out.sort_by(|a, b| {
                let pa = a.rows_used() * a.cols_used() * a.macros_used();
                let pb = b.rows_used() * b.cols_used() * b.macros_used();
                pb.cmp(&pa).then(a.cmp(b))
            });
            out.truncate(cap);
        }
        log::debug!(
            "layer `{}`: {full} spatial candidates exceed cap {cap}; kept {}",
            layer.name,
            out.len()
        );
    }
    for extra in [SpatialMapping::trivial(), greedy_spatial(layer, spec)] {
        if !out.contains(&extra) {
            out.push(extra);
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Canonical temporal orderings for a spatial mapping.
///
/// Loops are grouped by which operand they leave untouched: `{OX, OY, B}`
/// (weights), `{C, FX, FY}` (outputs) and `{K}` (inputs). Operand traffic
/// depends only on the position of the innermost relevant loop, so every
/// ordering is dominated by one that keeps each group contiguous; the six
/// group permutations are generated with `G`, which touches every operand,
/// outermost.
pub fn enumerate_temporal(layer: &LayerWorkload, smap: &SpatialMapping) -> Result<Vec<TemporalMapping>> {
    let residual = residual_bounds(layer, smap)?;
    let groups: [&[Dim]; 3] = [&[Dim::OX, Dim::OY, Dim::B], &[Dim::C, Dim::FX, Dim::FY], &[Dim::K]];
    const ORDERS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out: Vec<TemporalMapping> = Vec::with_capacity(6);
    for order in ORDERS {
        let loops = order
            .iter()
            .flat_map(|&gi| groups[gi].iter())
            .chain(std::iter::once(&Dim::G))
            .map(|&dim| TemporalLoop { dim, factor: residual.get(dim) })
            .collect();
        let t = TemporalMapping::new(loops);
        if !out.contains(&t) {
            out.push(t);
        }
    }
    Ok(out)
}

/// One evaluated (spatial, temporal) pair, as emitted by `--dump-mappings`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingCandidate {
    pub spatial: SpatialMapping,
    pub temporal: TemporalMapping,
}

pub fn enumerate_candidates(layer: &LayerWorkload, spec: &MacroSpec, cap: usize) -> Result<Vec<MappingCandidate>> {
    let mut out = Vec::new();
    for spatial in enumerate_spatial_capped(layer, spec, cap) {
        for temporal in enumerate_temporal(layer, &spatial)? {
            out.push(MappingCandidate { spatial, temporal });
        }
    }
    Ok(out)
}
