mod common;

use std::collections::BTreeMap;

use common::*;
use filterprune::archmodel::{
    flops_drop, formula_reduction, preset, rate_grid, rate_sweep, recover_rate, ArchSpec,
    ClassifierSpec, ConvLayerSpec, CountMode, FlopsOptions, PresetName, PresetOptions,
};
use filterprune::planner::{prune_count, RateSchedule};
use filterprune::Error;
use proptest::prelude::*;
use rand::Rng;

/// Surviving-channel MAC count, written out independently of the library.
fn oracle_drop(arch: &ArchSpec, rate: f64, integer: bool) -> f64 {
    let removed = |n: usize, prunable: bool| -> f64 {
        match (prunable, integer) {
            (false, _) => 0.0,
            (true, true) => prune_count(n, rate) as f64,
            (true, false) => n as f64 * rate,
        }
    };
    let mut base = 0.0;
    let mut kept = 0.0;
    for l in arch.layers() {
        let area = (l.out_h * l.out_w * l.k * l.k) as f64;
        let removed_in = arch.producer_of(&l.name).map_or(0.0, |p| removed(p.n_out, p.prunable));
        base += area * (l.n_out * l.n_in) as f64;
        kept += area * (l.n_out as f64 - removed(l.n_out, l.prunable)) * (l.n_in as f64 - removed_in);
    }
    (base - kept) / base
}

fn chain(widths: &[usize], k: usize, hw: usize) -> ArchSpec {
    let layers: Vec<ConvLayerSpec> = widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| ConvLayerSpec::new(format!("l{i}"), w[0], w[1], k, hw))
        .collect();
    let succ = (1..layers.len())
        .map(|i| (format!("l{}", i - 1), vec![format!("l{i}")]))
        .collect();
    ArchSpec::new(layers, succ).unwrap()
}

fn overrides(pairs: &[(String, f64)]) -> RateSchedule {
    RateSchedule::new(0.0, pairs.iter().cloned().collect()).unwrap()
}

#[test]
fn presets_match_surviving_channel_oracle() {
    for name in PresetName::ALL {
        let arch = preset(name, PresetOptions::default()).unwrap();
        for rate in [0.0, 0.1, 0.25, 0.4, 0.7, 1.0] {
            let s = RateSchedule::uniform(rate).unwrap();
            let a = flops_drop(&arch, &s, FlopsOptions::analytic()).unwrap().drop_fraction;
            let i = flops_drop(&arch, &s, FlopsOptions::integer()).unwrap().drop_fraction;
            assert!((a - oracle_drop(&arch, rate, false)).abs() <= 1e-12, "{name} {rate}");
            assert!((i - oracle_drop(&arch, rate, true)).abs() <= 1e-12, "{name} {rate}");
        }
    }
}

#[test]
fn interior_layers_of_a_chain_drop_two_r_minus_r_squared() {
    let arch = chain(&[3, 16, 32, 32, 64], 3, 8);
    for r in [0.1, 0.25, 0.5, 0.8] {
        let report = flops_drop(&arch, &RateSchedule::uniform(r).unwrap(), FlopsOptions::analytic()).unwrap();
        let first = &report.per_layer["l0"];
        assert!((first.reduced / first.base - r).abs() <= 1e-12);
        for name in ["l1", "l2", "l3"] {
            let l = &report.per_layer[name];
            assert!((l.reduced / l.base - (2.0 * r - r * r)).abs() <= 1e-12, "{name} at {r}");
        }
    }
}

#[test]
fn single_layer_formula_equals_surviving_channel_difference() {
    let mut rng = rng(31);
    for _ in 0..50 {
        let widths: Vec<usize> = (0..rng.gen_range(2..6)).map(|_| rng.gen_range(1..9) * 4).collect();
        let arch = chain(&widths, [1, 3, 5][rng.gen_range(0..3)], rng.gen_range(1..9));
        let layer = &arch.layers()[rng.gen_range(0..arch.layers().len())];
        let rate = [0.25, 0.5, 0.75, 1.0][rng.gen_range(0..4)];
        for (mode, opts) in [(CountMode::Analytic, FlopsOptions::analytic()), (CountMode::Integer, FlopsOptions::integer())] {
            let closed = formula_reduction(&arch, &layer.name, rate, mode, 1).unwrap();
            let s = overrides(&[(layer.name.clone(), rate)]);
            let report = flops_drop(&arch, &s, opts.with_factor(1)).unwrap();
            assert_eq!(closed, report.total_reduction(), "{} at {rate}", layer.name);
            let summed: f64 = report.per_layer.values().map(|l| l.reduced).sum();
            assert_eq!(summed, report.total_reduction());
        }
    }
}

#[test]
fn pruning_adjacent_layers_does_not_double_count() {
    let arch = chain(&[2, 8, 4], 3, 4);
    let s = RateSchedule::uniform(0.5).unwrap();
    let report = flops_drop(&arch, &s, FlopsOptions::analytic().with_factor(1)).unwrap();
    let naive = formula_reduction(&arch, "l0", 0.5, CountMode::Analytic, 1).unwrap()
        + formula_reduction(&arch, "l1", 0.5, CountMode::Analytic, 1).unwrap();
    assert!(report.total_reduction() < naive);
    // l0: 16·8·2·9 → 16·4·2·9; l1: 16·4·8·9 → 16·2·4·9
    assert_eq!(report.total_base, 2304.0 + 4608.0);
    assert_eq!(report.total_pruned, 1152.0 + 1152.0);
}

#[test]
fn sweep_examples_on_resnet56() {
    let arch = preset(PresetName::Resnet56, PresetOptions::default()).unwrap();
    assert_eq!(rate_sweep(&arch, &[0.0], FlopsOptions::analytic()).unwrap(), [(0.0, 0.0)]);
    let sweep = rate_sweep(&arch, &rate_grid(0.1, 0.9, 9), FlopsOptions::analytic()).unwrap();
    assert!(sweep.windows(2).all(|w| w[1].1 > w[0].1));
    let found = recover_rate(&arch, 0.526, 0.05, 0.75, FlopsOptions::analytic()).unwrap().unwrap();
    assert!((found.drop_fraction - 0.526).abs() < 1e-9);
    assert!(recover_rate(&arch, 0.999, 0.05, 0.75, FlopsOptions::analytic()).unwrap().is_none());
}

#[test]
fn analytic_and_integer_modes_gap_on_resnet56() {
    // Reference values from an independent scalar recomputation of both modes.
    let arch = preset(PresetName::Resnet56, PresetOptions::default()).unwrap();
    let s = RateSchedule::uniform(0.4).unwrap();
    let a = flops_drop(&arch, &s, FlopsOptions::analytic()).unwrap().drop_percent();
    let i = flops_drop(&arch, &s, FlopsOptions::integer()).unwrap().drop_percent();
    assert!((a - 63.91557003257328).abs() < 1e-9, "{a}");
    assert!((i - 61.48040513029316).abs() < 1e-9, "{i}");
    assert!((a - i - 2.435164902280118).abs() < 1e-9);
}

#[test]
fn bounds_and_unprunable_layers() {
    let full = preset(PresetName::Resnet20, PresetOptions::default()).unwrap();
    let one = RateSchedule::uniform(1.0).unwrap();
    assert_eq!(flops_drop(&full, &one, FlopsOptions::analytic()).unwrap().drop_fraction, 1.0);
    let partial = preset(
        PresetName::Resnet20,
        PresetOptions { prune_first_conv: false, prune_projections: true },
    )
    .unwrap();
    let d = flops_drop(&partial, &one, FlopsOptions::analytic()).unwrap().drop_fraction;
    assert!(d < 1.0 && d > 0.9);
    let s = RateSchedule::new(0.3, BTreeMap::from([("conv1.weight".to_string(), 0.5)])).unwrap();
    assert!(matches!(flops_drop(&partial, &s, FlopsOptions::analytic()), Err(Error::Spec(_))));
}

#[test]
fn structural_only_and_classifier_options() {
    let arch = preset(PresetName::Resnet56, PresetOptions::default()).unwrap();
    let s = RateSchedule::uniform(0.3).unwrap();
    let masked = flops_drop(&arch, &s, FlopsOptions::analytic()).unwrap();
    let structural = flops_drop(&arch, &s, FlopsOptions { structural_only: true, ..FlopsOptions::analytic() }).unwrap();
    assert!(structural.drop_fraction < masked.drop_fraction);
    assert_eq!(structural.total_base, masked.total_base);
    for l in arch.layers().iter().filter(|l| !l.compaction_safe) {
        assert!(structural.per_layer[&l.name].reduced <= masked.per_layer[&l.name].reduced);
    }

    let with_fc = arch.clone().with_classifier(ClassifierSpec { name: "fc.weight".into(), n_in: 64, n_out: 10 });
    let opts = FlopsOptions { include_classifier: true, ..FlopsOptions::analytic() };
    let r = flops_drop(&with_fc, &s, opts).unwrap();
    assert_eq!(r.total_base, masked.total_base + 1280.0);
    assert!(r.drop_fraction < masked.drop_fraction);
    assert_eq!(flops_drop(&with_fc, &s, FlopsOptions::analytic()).unwrap(), masked);
}

#[test]
fn arch_json_round_trip_and_validation() {
    let arch = preset(PresetName::Resnet18, PresetOptions::default()).unwrap();
    let json = serde_json::to_string(&arch).unwrap();
    let back: ArchSpec = serde_json::from_str(&json).unwrap();
    assert_eq!(back.layers(), arch.layers());
    assert_eq!(back.successor_map(), arch.successor_map());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("arch.json");
    std::fs::write(
        &path,
        r#"{"layers":[{"name":"a","n_in":3,"n_out":8,"k":3,"out_h":4,"out_w":4,"compaction_safe":true},
                     {"name":"b","n_in":8,"n_out":4,"k":3,"out_h":4,"out_w":4,"compaction_safe":false}],
            "successors":{"a":["b"]}}"#,
    )
    .unwrap();
    let a = ArchSpec::from_json_file(&path).unwrap();
    assert!(a.layer("b").unwrap().prunable);
    assert_eq!(a.producer_of("b").unwrap().name, "a");

    let bad = [
        r#"{"layers":[{"name":"a","n_in":3,"n_out":8,"k":3,"out_h":4,"out_w":4,"compaction_safe":true},{"name":"b","n_in":7,"n_out":4,"k":3,"out_h":4,"out_w":4,"compaction_safe":true}],"successors":{"a":["b"]}}"#,
        r#"{"layers":[{"name":"a","n_in":8,"n_out":8,"k":3,"out_h":4,"out_w":4,"compaction_safe":true},{"name":"b","n_in":8,"n_out":8,"k":3,"out_h":4,"out_w":4,"compaction_safe":true}],"successors":{"a":["b"],"b":["a"]}}"#,
        r#"{"layers":[{"name":"a","n_in":3,"n_out":8,"k":3,"out_h":4,"out_w":4,"compaction_safe":true}],"successors":{"a":["zz"]}}"#,
        r#"{"layers":[{"name":"a","n_in":0,"n_out":8,"k":3,"out_h":4,"out_w":4,"compaction_safe":true}],"successors":{}}"#,
    ];
    for b in bad {
        assert!(serde_json::from_str::<ArchSpec>(b).is_err(), "{b}");
    }
}

fn arb_rates(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, n)
}

proptest! {
    #[test]
    fn drop_fraction_is_convention_independent(rates in arb_rates(4)) {
        let arch = chain(&[3, 16, 32, 16, 8], 3, 6);
        let s = overrides(&(0..4).map(|i| (format!("l{i}"), rates[i])).collect::<Vec<_>>());
        for opts in [FlopsOptions::analytic(), FlopsOptions::integer()] {
            let one = flops_drop(&arch, &s, opts.with_factor(1)).unwrap();
            let two = flops_drop(&arch, &s, opts.with_factor(2)).unwrap();
            prop_assert_eq!(one.drop_fraction, two.drop_fraction);
            prop_assert_eq!(one.total_base * 2.0, two.total_base);
            prop_assert!((0.0..=1.0).contains(&one.drop_fraction));
        }
    }

    #[test]
    fn raising_one_rate_never_lowers_the_drop(rates in arb_rates(4), which in 0usize..4, bump in 0.0f64..1.0) {
        let arch = chain(&[3, 16, 32, 16, 8], 3, 6);
        let mut pairs: Vec<(String, f64)> = (0..4).map(|i| (format!("l{i}"), rates[i])).collect();
        let before = overrides(&pairs);
        pairs[which].1 = (pairs[which].1 + bump).min(1.0);
        let after = overrides(&pairs);
        for opts in [FlopsOptions::analytic(), FlopsOptions::integer()] {
            let a = flops_drop(&arch, &before, opts).unwrap().drop_fraction;
            let b = flops_drop(&arch, &after, opts).unwrap().drop_fraction;
            prop_assert!(b >= a - 1e-15, "{a} -> {b}");
        }
    }
}
