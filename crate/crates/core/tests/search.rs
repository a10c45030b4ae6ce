mod common;

use common::{aimc, dimc, layer, tech};
use imc_forge::dse::{self, MemoryHierarchy, MemoryLevelSpec, SearchOptions};
use imc_forge::imc_cost::MacroSpec;
use imc_forge::mapping;
use imc_forge::tech_model::ModelConstants;
use imc_forge::workload::{LayerWorkload, LoopBounds, OpKind};

fn tiny_cases() -> Vec<(LayerWorkload, MacroSpec)> {
    let two = LoopBounds { k: 2, c: 2, ox: 2, oy: 2, ..LoopBounds::ones() };
    vec![
        (layer("pw", OpKind::Pointwise, two), aimc(8, 8, 2)),
        (layer("pw_dimc", OpKind::Pointwise, two), dimc(4, 8, 2, 2)),
        (layer("fc", OpKind::Dense, LoopBounds { k: 4, c: 3, b: 2, ..LoopBounds::ones() }), dimc(6, 8, 1, 2)),
        (
            layer("dw", OpKind::Depthwise, LoopBounds { g: 2, ox: 2, oy: 1, fx: 3, fy: 3, ..LoopBounds::ones() }),
            aimc(9, 4, 2),
        ),
        (
            layer("conv", OpKind::Conv, LoopBounds { k: 2, c: 2, ox: 3, fx: 2, ..LoopBounds::ones() }),
            aimc(4, 8, 3),
        ),
    ]
}

#[test]
fn search_matches_brute_force_on_tiny_layers() {
    let k = ModelConstants::default();
    let hierarchies = [
        MemoryHierarchy::default(),
        MemoryHierarchy {
            levels: vec![MemoryLevelSpec {
                name: "costly".into(),
                bits_per_word: 8,
                energy_per_bit_read: 5e-12,
                energy_per_bit_write: 8e-12,
                capacity: None,
            }],
        },
    ];
    for (l, spec) in tiny_cases() {
        let n = mapping::enumerate_candidates(&l, &spec, mapping::DEFAULT_CANDIDATE_CAP).unwrap().len();
        assert!(n <= 50, "{}: {n} candidates", l.name);
        for h in &hierarchies {
            let best = dse::optimize_layer(&l, &spec, &tech(), &k, h, &SearchOptions::default()).unwrap();
            let (oracle, ties) = common::brute_force_argmin(&l, &spec, &tech(), &k, h);
            assert_eq!(best.energy_total_with_memory, oracle, "{}", l.name);
            assert!(ties.iter().any(|c| c.spatial == best.mapping.spatial), "{}", l.name);
        }
    }
}

#[test]
fn reported_optimum_rescans_as_minimum() {
    let k = ModelConstants::default();
    let h = MemoryHierarchy::default();
    let l = layer("c", OpKind::Conv, LoopBounds { k: 8, c: 4, ox: 4, oy: 4, fx: 3, fy: 3, ..LoopBounds::ones() });
    let spec = dimc(36, 16, 1, 4);
    let best = dse::optimize_layer(&l, &spec, &tech(), &k, &h, &SearchOptions::default()).unwrap();
    let all = dse::evaluate_candidates(&l, &spec, &tech(), &k, &h, &SearchOptions::default()).unwrap();
    assert_eq!(best.candidates_evaluated, all.len());
    let min = all
        .iter()
        .filter_map(|(_, r)| r.as_ref().ok())
        .map(|c| c.energy_total_with_memory)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(best.energy_total_with_memory, min);
}

#[test]
fn thread_count_does_not_change_results() {
    let k = ModelConstants::default();
    let h = MemoryHierarchy::default();
    let l = layer("c", OpKind::Conv, LoopBounds { k: 8, c: 4, ox: 8, oy: 4, fx: 3, fy: 3, ..LoopBounds::ones() });
    let spec = aimc(72, 32, 8);
    let run = |opts: SearchOptions| {
        opts.install(|| dse::optimize_layer(&l, &spec, &tech(), &k, &h, &opts).unwrap()).unwrap()
    };
    let one = run(SearchOptions { single_thread: true, ..Default::default() });
    for threads in [1, 2, 5] {
        assert_eq!(run(SearchOptions { threads: Some(threads), ..Default::default() }), one);
    }
}

#[test]
fn capacity_binds_and_is_named() {
    let k = ModelConstants::default();
    let h = MemoryHierarchy {
        levels: vec![MemoryLevelSpec {
            name: "tiny".into(),
            bits_per_word: 8,
            energy_per_bit_read: 1e-13,
            energy_per_bit_write: 1e-13,
            capacity: Some(64),
        }],
    };
    let l = layer("fc", OpKind::Dense, LoopBounds { k: 4, c: 6, ..LoopBounds::ones() });
    let err = dse::optimize_layer(&l, &dimc(6, 8, 1, 2), &tech(), &k, &h, &SearchOptions::default()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("`fc`") && msg.contains("64 bits"), "{msg}");
}
