//! Independent reference implementations used by the integration tests.

#![allow(dead_code)]

use std::collections::HashMap;

use imc_forge::dse::{self, MemoryHierarchy};
use imc_forge::imc_cost::{DacCountMode, MacroSpec, Paradigm};
use imc_forge::mapping::{
    ColUnroll, MacroUnroll, MappingCandidate, RowUnroll, SpatialMapping, TemporalLoop, TemporalMapping,
};
use imc_forge::tech_model::{ModelConstants, TechnologyProfile};
use imc_forge::workload::{Dim, LayerWorkload, LoopBounds, OpKind, Precision};

pub fn aimc(rows: u64, cols: u64, macros: u64) -> MacroSpec {
    MacroSpec {
        paradigm: Paradigm::Aimc,
        rows,
        cols,
        row_mux: 1,
        weight_bits: 4,
        input_bits: 4,
        adc_res: 6,
        dac_res: 4,
        voltage: 0.8,
        f_clk: 2e8,
        macros,
        adc_share: 1,
        dac_count_mode: DacCountMode::Aggregate,
    }
}

pub fn dimc(rows: u64, cols: u64, row_mux: u64, macros: u64) -> MacroSpec {
    MacroSpec {
        paradigm: Paradigm::Dimc,
        row_mux,
        adc_res: 0,
        dac_res: 0,
        ..aimc(rows, cols, macros)
    }
}

pub fn layer(name: &str, kind: OpKind, loops: LoopBounds) -> LayerWorkload {
    LayerWorkload {
        name: name.into(),
        op_kind: kind,
        loops,
        precision: Precision { b_i: 4, b_w: 4 },
        strides: [1, 1],
    }
}

pub fn tech() -> TechnologyProfile {
    TechnologyProfile::new(28.0, 0.25e-15, 0.8)
}

/// Bits moved between the macros and the level above, counted event by event.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct SimTraffic {
    pub weight_write_bits: u64,
    pub input_read_bits: u64,
    pub output_write_bits: u64,
    pub psum_rw_bits: u64,
}

type Coord = [u64; 8];

fn coord(b: u64, k: u64, c: u64, ox: u64, oy: u64, fx: u64, fy: u64, g: u64) -> Coord {
    [b, k, c, ox, oy, fx, fy, g]
}

/// Walks every presentation of the loop nest (innermost loop fastest) and
/// records, per macro, which weights it holds, which input vector it receives
/// and which outputs it accumulates. A transfer is counted whenever that
/// content differs from the previous presentation. Partial sums are detected
/// by tracking how many products each output has accumulated.
pub fn simulate_traffic(layer: &LayerWorkload, smap: &SpatialMapping, tmap: &TemporalMapping) -> SimTraffic {
    let (b_i, b_w) = (layer.precision.b_i, layer.precision.b_w);
    let red = layer.loops.c * layer.loops.fx * layer.loops.fy;
    let b_psum = b_i + b_w + (64 - (red.max(1) - 1).leading_zeros() as u64) * (red > 1) as u64;
    let (r, m) = (smap.row_unroll, smap.macro_unroll);
    let cols = smap.col_unroll.k;

    // Temporal index vectors, innermost loop fastest.
    let bounds: Vec<u64> = tmap.loops.iter().map(|l| l.factor).collect();
    let total: u64 = bounds.iter().product();
    let mut idx = vec![0u64; bounds.len()];

    let mut macros = Vec::new();
    for mk in 0..m.k {
        for mg in 0..m.g {
            for mox in 0..m.ox {
                for moy in 0..m.oy {
                    macros.push((mk, mg, mox, moy));
                }
            }
        }
    }
    let mut prev_w: HashMap<usize, Vec<Coord>> = HashMap::new();
    let mut prev_i: HashMap<(u64, u64, u64), Vec<Coord>> = HashMap::new();
    let mut prev_o: HashMap<usize, Vec<Coord>> = HashMap::new();
    let mut acc: HashMap<Coord, u64> = HashMap::new();
    let mut out = SimTraffic::default();

    let flush = |outs: &[Coord], acc: &HashMap<Coord, u64>, out: &mut SimTraffic| {
        for o in outs {
            if acc[o] == red {
                out.output_write_bits += b_i;
            } else {
                out.psum_rw_bits += b_psum;
            }
        }
    };

    for _ in 0..total {
        let t = |d: Dim| -> (u64, u64) {
            // (temporal index, temporal bound) of a dimension.
            tmap.loops
                .iter()
                .zip(&idx)
                .find(|(l, _)| l.dim == d)
                .map(|(l, &i)| (i, l.factor))
                .unwrap_or((0, 1))
        };
        let (tb, _) = t(Dim::B);
        let (tk, _) = t(Dim::K);
        let (tc, _) = t(Dim::C);
        let (tox, _) = t(Dim::OX);
        let (toy, _) = t(Dim::OY);
        let (tfx, _) = t(Dim::FX);
        let (tfy, _) = t(Dim::FY);
        let (tg, _) = t(Dim::G);

        for (mi, &(mk, mg, mox, moy)) in macros.iter().enumerate() {
            let g = tg * m.g + mg;
            let ox = tox * m.ox + mox;
            let oy = toy * m.oy + moy;
            let mut w = Vec::new();
            let mut inp = Vec::new();
            let mut o = Vec::new();
            for col in 0..cols {
                let k = (tk * m.k + mk) * cols + col;
                o.push(coord(tb, k, 0, ox, oy, 0, 0, g));
            }
            for rc in 0..r.c {
                for rfx in 0..r.fx {
                    for rfy in 0..r.fy {
                        let c = tc * r.c + rc;
                        let fx = tfx * r.fx + rfx;
                        let fy = tfy * r.fy + rfy;
                        let ix = ox * layer.strides[0] + fx;
                        let iy = oy * layer.strides[1] + fy;
                        inp.push(coord(tb, 0, c, ix, iy, 0, 0, g));
                        for col in 0..cols {
                            let k = (tk * m.k + mk) * cols + col;
                            w.push(coord(0, k, c, 0, 0, fx, fy, g));
                        }
                    }
                }
            }
            if prev_w.get(&mi) != Some(&w) {
                out.weight_write_bits += w.len() as u64 * b_w;
                prev_w.insert(mi, w);
            }
            // Macros differing only in their K slice share one input vector.
            let port = (mg, mox, moy);
            if prev_i.get(&port) != Some(&inp) {
                out.input_read_bits += inp.len() as u64 * b_i;
                prev_i.insert(port, inp);
            }
            if prev_o.get(&mi) != Some(&o) {
                if let Some(old) = prev_o.get(&mi) {
                    flush(old, &acc, &mut out);
                }
                for e in &o {
                    if acc.get(e).copied().unwrap_or(0) > 0 {
                        out.psum_rw_bits += b_psum;
                    }
                }
                prev_o.insert(mi, o.clone());
            }
            for e in &o {
                *acc.entry(*e).or_insert(0) += r.c * r.fx * r.fy;
            }
        }

        for (i, b) in idx.iter_mut().zip(&bounds) {
            *i += 1;
            if *i < *b {
                break;
            }
            *i = 0;
        }
    }
    for o in prev_o.values() {
        flush(o, &acc, &mut out);
    }
    out
}

fn divisors(n: u64) -> Vec<u64> {
    (1..=n).filter(|d| n % d == 0).collect()
}

fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head.clone());
            out.push(p);
        }
    }
    out
}

/// Every legal divisor-based spatial mapping combined with every ordering of
/// the remaining temporal loops.
pub fn brute_force_candidates(layer: &LayerWorkload, spec: &MacroSpec) -> Vec<MappingCandidate> {
    let l = &layer.loops;
    let d1 = spec.cols / spec.weight_bits;
    let mut out = Vec::new();
    for c in divisors(l.c) {
        for fx in divisors(l.fx) {
            for fy in divisors(l.fy) {
                if c * fx * fy > spec.rows {
                    continue;
                }
                for ck in divisors(l.k).into_iter().filter(|&k| k <= d1) {
                    for mk in divisors(l.k / ck) {
                        for ox in divisors(l.ox) {
                            for oy in divisors(l.oy) {
                                for g in divisors(l.g) {
                                    if mk * ox * oy * g > spec.macros {
                                        continue;
                                    }
                                    let spatial = SpatialMapping {
                                        row_unroll: RowUnroll { c, fx, fy },
                                        col_unroll: ColUnroll { k: ck },
                                        macro_unroll: MacroUnroll { ox, oy, g, k: mk },
                                    };
                                    let residual: Vec<TemporalLoop> = [
                                        (Dim::B, l.b),
                                        (Dim::K, l.k / (ck * mk)),
                                        (Dim::C, l.c / c),
                                        (Dim::OX, l.ox / ox),
                                        (Dim::OY, l.oy / oy),
                                        (Dim::FX, l.fx / fx),
                                        (Dim::FY, l.fy / fy),
                                        (Dim::G, l.g / g),
                                    ]
                                    .into_iter()
                                    .filter(|&(_, f)| f > 1)
                                    .map(|(dim, factor)| TemporalLoop { dim, factor })
                                    .collect();
                                    for order in permutations(&residual) {
                                        out.push(MappingCandidate {
                                            spatial,
                                            temporal: TemporalMapping::new(order),
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Minimum cost over the brute-force space and every candidate reaching it.
pub fn brute_force_argmin(
    layer: &LayerWorkload,
    spec: &MacroSpec,
    tech: &TechnologyProfile,
    constants: &ModelConstants,
    hierarchy: &MemoryHierarchy,
) -> (f64, Vec<MappingCandidate>) {
    let mut best = f64::INFINITY;
    let mut ties = Vec::new();
    for cand in brute_force_candidates(layer, spec) {
        let Ok(cost) = dse::evaluate_candidate(layer, spec, tech, constants, hierarchy, &cand) else {
            continue;
        };
        let e = cost.energy_total_with_memory;
        if e < best {
            best = e;
            ties.clear();
        }
        if e == best {
            ties.push(cand);
        }
    }
    (best, ties)
}

pub mod gen {
    use super::*;
    use imc_forge::imc_cost::CycleCounts;
    use proptest::prelude::*;

    pub fn paradigm() -> impl Strategy<Value = Paradigm> {
        prop_oneof![Just(Paradigm::Aimc), Just(Paradigm::Dimc)]
    }

    pub fn spec_of(paradigm: Paradigm) -> impl Strategy<Value = MacroSpec> {
        (
            1u64..=8,
            prop::sample::select(vec![1u64, 2, 4, 8, 16, 32, 64, 128, 256]),
            prop::sample::select(vec![1u64, 2, 4, 8]),
            1u64..=8,
            1u64..=64,
            1u64..=10,
            1u64..=4,
            0.05f64..1.5,
            1u64..=16,
            prop::sample::select(vec![1u64, 2, 4]),
            any::<bool>(),
        )
            .prop_map(move |(bw, d2, m, bi, d1, adc, dac, v, macros, share, per_row)| {
                let aimc = paradigm == Paradigm::Aimc;
                let m = if aimc { 1 } else { m };
                MacroSpec {
                    paradigm,
                    rows: d2 * m,
                    cols: d1 * bw,
                    row_mux: m,
                    weight_bits: bw,
                    input_bits: bi,
                    adc_res: if aimc { adc } else { 0 },
                    dac_res: if aimc { dac } else { 0 },
                    voltage: v,
                    f_clk: 1e8,
                    macros,
                    adc_share: if aimc { share } else { 1 },
                    dac_count_mode: if per_row { DacCountMode::PerRowCycle } else { DacCountMode::Aggregate },
                }
            })
    }

    pub fn spec() -> impl Strategy<Value = MacroSpec> {
        paradigm().prop_flat_map(spec_of)
    }

    pub fn cycles() -> impl Strategy<Value = CycleCounts> {
        (0u64..10_000, 0u64..10_000, 0u64..100_000, 0u64..10_000_000).prop_map(|(p, a, b, m)| CycleCounts {
            cc_prech: p,
            cc_acc: a,
            cc_bs: b,
            total_macs: m,
            presentations: 1,
            row_groups: 1,
            serial_phases: 1,
        })
    }

    pub fn tech() -> impl Strategy<Value = TechnologyProfile> {
        (5.0f64..65.0, 0.05e-15f64..1e-15).prop_map(|(n, c)| TechnologyProfile::new(n, c, 0.8))
    }

    pub fn small_layer() -> impl Strategy<Value = LayerWorkload> {
        let d = || prop::sample::select(vec![1u64, 2, 3, 4, 6, 8]);
        (0usize..4, d(), d(), d(), d(), prop::sample::select(vec![1u64, 3]), 1u64..=2, 2u64..=4).prop_map(
            |(kind, k, c, ox, oy, f, b, g)| {
                let (op, loops) = match kind {
                    0 => (OpKind::Conv, LoopBounds { b, k, c, ox, oy, fx: f, fy: f, ..LoopBounds::ones() }),
                    1 => (OpKind::Pointwise, LoopBounds { b, k, c, ox, oy, ..LoopBounds::ones() }),
                    2 => (OpKind::Depthwise, LoopBounds { b, g, ox, oy, fx: f, fy: f, ..LoopBounds::ones() }),
                    _ => (OpKind::Dense, LoopBounds { b, k, c, ..LoopBounds::ones() }),
                };
                layer("l", op, loops)
            },
        )
    }
}
