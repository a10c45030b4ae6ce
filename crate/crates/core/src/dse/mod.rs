//! Mapping search, network-level aggregation and model validation.

pub mod report;
pub mod traffic;
pub mod validate;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imc_cost::{self, ArchConfig, CycleCounts, EnergyBreakdown, MacroSpec};
use crate::mapping::{self, MappingCandidate, Utilization, DEFAULT_CANDIDATE_CAP};
use crate::tech_model::{ModelConstants, TechConfig, TechnologyProfile};
use crate::workload::{LayerWorkload, Network, OpKind};

pub use traffic::{traffic_for, MemoryHierarchy, MemoryLevelSpec, TrafficReport};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchOptions {
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Evaluate candidates sequentially on the calling thread.
    pub single_thread: bool,
    pub candidate_cap: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            threads: None,
            single_thread: false,
            candidate_cap: DEFAULT_CANDIDATE_CAP,
        }
    }
}

impl SearchOptions {
    /// Runs `f` inside a pool sized per these options.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Result<R> {
        match self.threads {
            Some(n) if !self.single_thread => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::invalid("search options", "threads", e.to_string()))?;
                Ok(pool.install(f))
            }
            _ => Ok(f()),
        }
    }

    fn map<T: Sync, R: Send>(&self, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
        if self.single_thread {
            items.iter().map(f).collect()
        } else {
            items.par_iter().map(f).collect()
        }
    }
}

/// Cost of one mapping candidate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateCost {
    pub cycles: CycleCounts,
    /// Datapath energy over all active macros.
    pub breakdown: EnergyBreakdown,
    pub traffic: TrafficReport,
    pub energy_total_with_memory: f64,
}

pub fn evaluate_candidate(
    layer: &LayerWorkload,
    spec: &MacroSpec,
    tech: &TechnologyProfile,
    constants: &ModelConstants,
    hierarchy: &MemoryHierarchy,
    cand: &MappingCandidate,
) -> Result<CandidateCost> {
    let cycles = mapping::extract_cycles(layer, spec, &cand.spatial, &cand.temporal)?;
    let per_macro = imc_cost::total_energy(spec, tech, &cycles, constants);
    let breakdown = per_macro.scaled(cand.spatial.macros_used() as f64);
    let traffic = traffic_for(layer, spec, &cand.spatial, &cand.temporal, hierarchy)?;
    let energy_total_with_memory = breakdown.e_total + traffic.e_total();
    Ok(CandidateCost { cycles, breakdown, traffic, energy_total_with_memory })
}

/// A candidate together with its cost or the reason it was rejected.
#[derive(Debug, Clone, Serialize)]
pub struct CandidateRecord {
    pub spatial: String,
    pub temporal: String,
    pub mapping: MappingCandidate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_total_with_memory: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compute_cycles: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rejected: Option<String>,
}

/// Evaluates every enumerated candidate, in enumeration order.
pub fn evaluate_candidates(
    layer: &LayerWorkload,
    spec: &MacroSpec,
    tech: &TechnologyProfile,
    constants: &ModelConstants,
    hierarchy: &MemoryHierarchy,
    opts: &SearchOptions,
) -> Result<Vec<(MappingCandidate, Result<CandidateCost>)>> {
    let candidates = mapping::enumerate_candidates(layer, spec, opts.candidate_cap)?;
    let costs = opts.map(&candidates, |c| evaluate_candidate(layer, spec, tech, constants, hierarchy, c));
    Ok(candidates.into_iter().zip(costs).collect())
}

pub fn candidate_records(evaluated: &[(MappingCandidate, Result<CandidateCost>)]) -> Vec<CandidateRecord> {
    evaluated
        .iter()
        .map(|(c, r)| CandidateRecord {
            spatial: c.spatial.to_string(),
            temporal: c.temporal.to_string(),
            mapping: c.clone(),
            energy_total_with_memory: r.as_ref().ok().map(|x| x.energy_total_with_memory),
            compute_cycles: r.as_ref().ok().map(|x| x.cycles.compute_cycles()),
            rejected: r.as_ref().err().map(|e| e.to_string()),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerResult {
    pub layer: String,
    pub op_kind: OpKind,
    pub total_macs: u64,
    pub mapping: MappingCandidate,
    pub macros_used: u64,
    /// Per active macro.
    pub cycles: CycleCounts,
    pub compute_cycles: u64,
    /// s.
    pub latency: f64,
    pub utilization: Utilization,
    /// Over all active macros, J.
    pub breakdown: EnergyBreakdown,
    pub traffic: TrafficReport,
    pub energy_total_with_memory: f64,
    pub candidates_evaluated: usize,
}

fn infeasible(layer: &LayerWorkload, err: Option<&Error>) -> Error {
    let constraint = match err {
        Some(Error::Infeasible { constraint, .. }) => constraint.clone(),
        Some(Error::IllegalMapping(msg)) => msg.clone(),
        Some(other) => other.to_string(),
        None => "no mapping candidates".to_string(),
    };
    Error::Infeasible { layer: layer.name.clone(), constraint }
}

/// Lowest-cost mapping of a layer. Ties go to the earliest candidate in
/// enumeration order.
pub fn optimize_layer(
    layer: &LayerWorkload,
    spec: &MacroSpec,
    tech: &TechnologyProfile,
    constants: &ModelConstants,
    hierarchy: &MemoryHierarchy,
    opts: &SearchOptions,
) -> Result<LayerResult> {
    layer.validate()?;
    spec.validate()?;
    if !layer.op_kind.is_modeled() {
        return Err(Error::invalid(
            format!("layer `{}`", layer.name),
            "op_kind",
            format!("{} layers are not mapped onto the macros", layer.op_kind.name()),
        ));
    }
    let evaluated = evaluate_candidates(layer, spec, tech, constants, hierarchy, opts)?;

    let mut best: Option<(usize, f64)> = None;
    for (i, (_, r)) in evaluated.iter().enumerate() {
        if let Ok(c) = r {
            if best.is_none_or(|(_, b)| c.energy_total_with_memory < b) {
                best = Some((i, c.energy_total_with_memory));
            }
        }
    }
    let Some((idx, best_cost)) = best else {
        let first_err = evaluated.iter().find_map(|(_, r)| r.as_ref().err());
        return Err(infeasible(layer, first_err));
    };
    debug_assert!(evaluated
        .iter()
        .filter_map(|(_, r)| r.as_ref().ok())
        .all(|c| best_cost <= c.energy_total_with_memory));

    let candidates_evaluated = evaluated.len();
    let (mapping, cost) = evaluated.into_iter().nth(idx).expect("index from enumeration");
    let cost = cost.expect("best candidate evaluated");
    let compute_cycles = cost.cycles.compute_cycles();
    Ok(LayerResult {
        layer: layer.name.clone(),
        op_kind: layer.op_kind,
        total_macs: layer.total_macs()?,
        macros_used: mapping.spatial.macros_used(),
        utilization: mapping::utilization(layer, spec, &mapping.spatial),
        mapping,
        cycles: cost.cycles,
        compute_cycles,
        latency: compute_cycles as f64 / spec.f_clk,
        breakdown: cost.breakdown,
        traffic: cost.traffic,
        energy_total_with_memory: cost.energy_total_with_memory,
        candidates_evaluated,
    })
}

/// Plot-ready energy components of a layer or a whole network, in J.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StackedBreakdown {
    pub scope: String,
    pub e_cell: f64,
    pub e_logic: f64,
    pub e_adc: f64,
    pub e_adder_tree: f64,
    pub e_dac: f64,
    pub e_weight_traffic: f64,
    pub e_input_traffic: f64,
    pub e_output_traffic: f64,
    pub e_psum_traffic: f64,
}

impl StackedBreakdown {
    fn new(scope: &str, e: &EnergyBreakdown, t: &TrafficTotals) -> Self {
        StackedBreakdown {
            scope: scope.to_string(),
            e_cell: e.e_cell,
            e_logic: e.e_logic,
            e_adc: e.e_adc,
            e_adder_tree: e.e_adder_tree,
            e_dac: e.e_dac,
            e_weight_traffic: t.e_weight,
            e_input_traffic: t.e_input,
            e_output_traffic: t.e_output,
            e_psum_traffic: t.e_psum,
        }
    }

    /// Components in column order.
    pub fn components(&self) -> [(&'static str, f64); 9] {
        [
            ("e_cell", self.e_cell),
            ("e_logic", self.e_logic),
            ("e_adc", self.e_adc),
            ("e_adder_tree", self.e_adder_tree),
            ("e_dac", self.e_dac),
            ("e_weight_traffic", self.e_weight_traffic),
            ("e_input_traffic", self.e_input_traffic),
            ("e_output_traffic", self.e_output_traffic),
            ("e_psum_traffic", self.e_psum_traffic),
        ]
    }

    /// Name and value of the largest component (first wins on ties).
    pub fn dominant(&self) -> (&'static str, f64) {
        self.components()
            .into_iter()
            .fold(("", f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrafficTotals {
    pub weight_write_bits: u64,
    pub input_read_bits: u64,
    pub output_write_bits: u64,
    pub psum_rw_bits: u64,
    pub e_weight: f64,
    pub e_input: f64,
    pub e_output: f64,
    pub e_psum: f64,
}

impl TrafficTotals {
    fn of(t: &TrafficReport) -> Self {
        TrafficTotals {
            weight_write_bits: t.weight_write_bits,
            input_read_bits: t.input_read_bits,
            output_write_bits: t.output_write_bits,
            psum_rw_bits: t.psum_rw_bits,
            e_weight: t.e_weight,
            e_input: t.e_input,
            e_output: t.e_output,
            e_psum: t.e_psum,
        }
    }

    fn add(&mut self, o: &TrafficTotals) {
        self.weight_write_bits += o.weight_write_bits;
        self.input_read_bits += o.input_read_bits;
        self.output_write_bits += o.output_write_bits;
        self.psum_rw_bits += o.psum_rw_bits;
        self.e_weight += o.e_weight;
        self.e_input += o.e_input;
        self.e_output += o.e_output;
        self.e_psum += o.e_psum;
    }

    pub fn e_total(&self) -> f64 {
        self.e_weight + self.e_input + self.e_output + self.e_psum
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct NetworkTotals {
    pub total_macs: u64,
    pub compute_cycles: u64,
    /// Layers run back to back, s.
    pub latency: f64,
    pub breakdown: EnergyBreakdown,
    pub traffic: TrafficTotals,
    pub energy_total_with_memory: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkResult {
    pub network: String,
    pub layers: Vec<LayerResult>,
    /// Layers not mapped onto the macros (residual additions).
    pub skipped: Vec<String>,
    pub totals: NetworkTotals,
    /// One entry per layer followed by the network total.
    pub stacked: Vec<StackedBreakdown>,
}

pub fn evaluate_network(
    network: &Network,
    spec: &MacroSpec,
    tech: &TechnologyProfile,
    constants: &ModelConstants,
    hierarchy: &MemoryHierarchy,
    opts: &SearchOptions,
) -> Result<NetworkResult> {
    network.validate()?;
    spec.validate()?;
    hierarchy.validate()?;
    let (modeled, skipped): (Vec<&LayerWorkload>, Vec<&LayerWorkload>) =
        network.layers.iter().partition(|l| l.op_kind.is_modeled());
    for l in &skipped {
        log::info!("{}: skipping {} layer `{}`", network.name, l.op_kind.name(), l.name);
    }
    let layers = opts
        .map(&modeled, |l| optimize_layer(l, spec, tech, constants, hierarchy, opts))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut totals = NetworkTotals::default();
    let mut stacked = Vec::with_capacity(layers.len() + 1);
    for l in &layers {
        let t = TrafficTotals::of(&l.traffic);
        totals.total_macs += l.total_macs;
        totals.compute_cycles += l.compute_cycles;
        totals.latency += l.latency;
        totals.breakdown = totals.breakdown.accumulate(&l.breakdown);
        totals.traffic.add(&t);
        totals.energy_total_with_memory += l.energy_total_with_memory;
        stacked.push(StackedBreakdown::new(&l.layer, &l.breakdown, &t));
    }
    stacked.push(StackedBreakdown::new("total", &totals.breakdown, &totals.traffic));
    Ok(NetworkResult {
        network: network.name.clone(),
        layers,
        skipped: skipped.iter().map(|l| l.name.clone()).collect(),
        totals,
        stacked,
    })
}

/// An architecture with its technology profile and constants resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedArch {
    pub config: ArchConfig,
    pub tech: TechnologyProfile,
    pub constants: ModelConstants,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

pub fn resolve_arch(config: &ArchConfig, tech: &TechConfig) -> Result<ResolvedArch> {
    let est = tech.resolve(config.node, config.spec.voltage, config.overrides.c_inv)?;
    if let Some(w) = &est.warning {
        log::warn!("{}: {w}", config.name);
    }
    Ok(ResolvedArch {
        config: config.clone(),
        tech: est.profile,
        constants: config.apply_constant_overrides(&tech.constants),
        warning: est.warning,
    })
}

/// An architecture rescaled to a common SRAM-cell budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizedArch {
    pub config: ArchConfig,
    pub original_macros: u64,
    /// New macro count over the original one.
    pub scale: f64,
}

/// Rescales macro counts so every design holds as many SRAM cells as the
/// largest design (`floor(target / (R * C))` macros, at least one).
pub fn normalize_macro_counts(configs: &[ArchConfig]) -> Vec<NormalizedArch> {
    let target = configs.iter().map(|c| c.spec.cells() * c.spec.macros).max().unwrap_or(0);
    configs
        .iter()
        .map(|c| {
            let per_macro = c.spec.rows * c.spec.cols;
            let macros = (target / per_macro).max(1);
            let mut config = c.clone();
            config.spec.macros = macros;
            NormalizedArch {
                original_macros: c.spec.macros,
                scale: macros as f64 / c.spec.macros as f64,
                config,
            }
        })
        .collect()
}
