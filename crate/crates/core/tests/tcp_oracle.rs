use std::collections::HashMap;

use fa_core::estimators::exhaustive_pf;
use fa_core::grid::{normalize, support_agreement, FaGrid};
use fa_core::network::{fixture, Network};
use fa_core::offers::{ElementKind, FspOffer};
use fa_core::pf::PfOptions;
use fa_core::settings::{Constraints, FlexShape};
use fa_core::study::Study;
use fa_core::tcp::{
    classify_sensitivity, component_kernel, load_bundle, save_tensors, tc_plus, tc_plus_adapt, tc_plus_merge,
    ImpactRecord, TcpOptions, TcpRun, Thresholds,
};

fn offer(kind: ElementKind, element: usize, net: &Network, dp: f64, dq: f64) -> FspOffer {
    let e = match kind {
        ElementKind::Load => &net.loads[element],
        ElementKind::Generator => &net.sgens[element],
    };
    FspOffer {
        kind,
        element,
        shape: FlexShape::Smax,
        discrete: false,
        p: e.p(),
        q: e.q(),
        s_max: e.sn_mva,
        dp,
        dq,
        p_range: None,
    }
}

fn feeder(limits: Constraints, dp: f64, dq: f64) -> Study {
    let net = fixture("feeder4").unwrap();
    let offers = vec![
        offer(ElementKind::Generator, 0, &net, dp, dq),
        offer(ElementKind::Load, 1, &net, dp, dq),
    ];
    Study::new(net, offers, limits, PfOptions::default()).unwrap()
}

fn tight() -> Constraints {
    Constraints { max_loading_percent: 40.0, ..Constraints::default() }
}

fn loose() -> Constraints {
    Constraints { max_loading_percent: 1e6, max_voltage_pu: 10.0, min_voltage_pu: 0.01 }
}

/// Every combination of the regular FSPs' recorded shifts: summed PCC cell
/// offsets and summed raw component impacts.
fn combinations(record: &ImpactRecord) -> Vec<((i64, i64), Vec<Vec<f64>>)> {
    let mut out = vec![((0i64, 0i64), Vec::<Vec<f64>>::new())];
    for f in &record.regular {
        let mut next = Vec::new();
        for ((p, q), parts) in &out {
            for (k, &(dp, dq)) in f.pcc.iter().enumerate() {
                let cell = (p + (dp / f.dp).round() as i64, q + (dq / f.dq).round() as i64);
                let mut parts = parts.clone();
                parts.push(f.values[k].clone());
                next.push((cell, parts));
            }
        }
        out = next;
    }
    out
}

fn cell_counts(run: &TcpRun<f64>, grid: &FaGrid<f64>) -> HashMap<(i64, i64), f64> {
    let mut m = HashMap::new();
    for (i, j) in grid.support() {
        m.insert((run.frame.origin[0] + i as i64, run.frame.origin[1] + j as i64), grid.get(i, j));
    }
    m
}

#[test]
fn ufa_matches_enumeration() {
    let s = feeder(tight(), 0.1, 0.2);
    let run = tc_plus::<f64>(&s, &TcpOptions::default()).unwrap();
    let mut oracle: HashMap<(i64, i64), f64> = HashMap::new();
    for (cell, _) in combinations(&run.record) {
        *oracle.entry(cell).or_default() += 1.0;
    }
    assert_eq!(cell_counts(&run, &run.ufa), oracle);
}

#[test]
fn constrained_counts_match_enumeration() {
    let s = feeder(tight(), 0.1, 0.2);
    let run = tc_plus::<f64>(&s, &TcpOptions::default()).unwrap();
    assert!(!run.partition.retained.is_empty());
    let mut oracle: HashMap<(i64, i64), f64> = HashMap::new();
    for plan in &run.partition.retained {
        let mut per: HashMap<(i64, i64), f64> = HashMap::new();
        for (cell, parts) in combinations(&run.record) {
            let g: i64 = plan
                .impactful
                .iter()
                .map(|&f| (parts[f][plan.index] / plan.width).round() as i64)
                .sum();
            let v = run.record.base_values[plan.index] + g as f64 * plan.width;
            if v >= plan.band.lo && v <= plan.band.hi {
                *per.entry(cell).or_default() += 1.0;
            }
        }
        if oracle.is_empty() && plan.index == run.partition.retained[0].index {
            oracle = per;
        } else {
            oracle = oracle.into_iter().map(|(c, n)| (c, n.min(*per.get(&c).unwrap_or(&0.0)))).collect();
        }
    }
    oracle.retain(|_, n| *n > 0.0);
    assert_eq!(cell_counts(&run, &run.counts), oracle);
}

#[test]
fn support_close_to_exhaustive() {
    let s = feeder(Constraints { max_voltage_pu: 1.03, ..Constraints::default() }, 0.1, 0.2);
    let run = tc_plus::<f64>(&s, &TcpOptions::default()).unwrap();
    let ex = exhaustive_pf(&s, 1_000_000).unwrap();
    let agree = support_agreement(&run.fa, &ex.fa().unwrap(), 1).unwrap();
    assert!(agree >= 0.95, "{agree}");
}

#[test]
fn loading_superposition_error_floor() {
    // both FSPs can reverse the flow on line 1, where loading changes do not add up
    let s = feeder(tight(), 0.1, 0.2);
    let run = tc_plus::<f64>(&s, &TcpOptions::default()).unwrap();
    let ex = exhaustive_pf(&s, 1_000_000).unwrap();
    let agree = support_agreement(&run.fa, &ex.fa().unwrap(), 1).unwrap();
    assert!(agree >= 0.8, "{agree}");
}

#[test]
fn loose_limits_give_normalized_ufa() {
    let s = feeder(loose(), 0.1, 0.2);
    let run = tc_plus::<f64>(&s, &TcpOptions::default()).unwrap();
    assert!(run.partition.retained.is_empty());
    assert_eq!(run.report.get("constrained_components"), Some("0"));
    assert_eq!(run.fa, normalize(&run.ufa).unwrap());
}

#[test]
fn pruning_rule() {
    let s = feeder(tight(), 0.1, 0.2);
    let run = tc_plus::<f64>(&s, &TcpOptions::default()).unwrap();
    let mut zeroed = run.record.clone();
    for f in &mut zeroed.regular {
        f.values.iter_mut().flatten().for_each(|v| *v = 0.0);
    }
    let p = classify_sensitivity(&zeroed, &s.limits, &Thresholds::default());
    assert!(p.retained.is_empty());
    assert_eq!(p.pruned.len(), zeroed.components.len());

    // line 1 sits near 16 % and the FSPs at its far end can push it past 40 %
    let line1 = run.partition.retained.iter().find(|p| p.component.to_string() == "line 1").unwrap();
    assert_eq!(line1.impactful, vec![0, 1]);
}

#[test]
fn discrete_fsp_is_displaced_union() {
    let net = fixture("feeder4").unwrap();
    let mut dg = offer(ElementKind::Generator, 0, &net, 0.1, 0.2);
    dg.discrete = true;
    let load = offer(ElementKind::Load, 1, &net, 0.1, 0.2);
    let both = Study::new(net.clone(), vec![dg, load.clone()], loose(), PfOptions::default()).unwrap();
    let alone = Study::new(net, vec![load], loose(), PfOptions::default()).unwrap();
    let run = tc_plus::<f64>(&both, &TcpOptions::default()).unwrap();
    let single = tc_plus::<f64>(&alone, &TcpOptions::default()).unwrap();

    let plan = &classify_sensitivity(&run.record, &Constraints::default(), &Thresholds { loading_percent: 0.0, voltage_pu: 0.0 })
        .retained[0];
    let k = component_kernel::<f64>(&run.record.regular[0], plan).unwrap();
    assert_eq!(k.nnz(), 2);

    let d = run.record.regular[0].pcc_offsets();
    assert_eq!(d.len(), 2);
    let base = cell_counts(&single, &single.ufa);
    let mut expected: HashMap<(i64, i64), f64> = HashMap::new();
    for (dp, dq) in d {
        for (&(p, q), &n) in &base {
            *expected.entry((p + dp, q + dq)).or_default() += n;
        }
    }
    assert_eq!(cell_counts(&run, &run.counts), expected);
}

#[test]
fn merge_noop_and_active() {
    let s = feeder(tight(), 0.1, 0.2);
    let opts = TcpOptions::default();
    let plain = tc_plus::<f64>(&s, &opts).unwrap();
    let same = tc_plus_merge::<f64>(&s, &opts, 2).unwrap();
    assert_eq!(plain.fa, same.fa);
    assert_eq!(plain.counts, same.counts);
    assert!(same.merges.is_empty());

    let merged = tc_plus_merge::<f64>(&s, &opts, 1).unwrap();
    assert!(!merged.merges.is_empty());
    assert!(merged.report.all("merge").len() >= 1);
    assert_eq!(merged.fa.max(), 1.0);
    assert_eq!(merged.fa, plain.fa);
}

#[test]
fn save_load_adapt() {
    let dir = tempfile::tempdir().unwrap();
    let s = feeder(tight(), 0.1, 0.2);
    let eps = 1e-6;
    let (run, bundle) = save_tensors::<f64>(&s, &TcpOptions::default(), eps, dir.path()).unwrap();
    let bundle = bundle.unwrap();
    let loaded = load_bundle::<f64>(dir.path()).unwrap();
    assert_eq!(loaded.fingerprint, bundle.fingerprint);
    assert_eq!(loaded.record, run.record);
    assert_eq!(loaded.tensors.len(), run.components.len());

    let adapted = tc_plus_adapt::<f64>(&s, dir.path()).unwrap();
    let max = run.fa.max();
    assert!(run.fa.same_axes(&adapted.fa));
    for (a, b) in run.fa.values().iter().zip(adapted.fa.values()) {
        assert!((a - b).abs() <= eps * max);
    }
    assert!(adapted.stale.is_empty());
    assert_eq!(adapted.report.get("power_flows"), Some("1"));
}

#[test]
fn adapt_refuses_other_fsps() {
    let dir = tempfile::tempdir().unwrap();
    let s = feeder(tight(), 0.1, 0.2);
    save_tensors::<f64>(&s, &TcpOptions::default(), 1e-4, dir.path()).unwrap().1.unwrap();
    let mut other = feeder(tight(), 0.1, 0.2);
    other.offers.truncate(1);
    let err = tc_plus_adapt::<f64>(&other, dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("rerun tcp-save"));
}

#[test]
fn adapt_warns_when_pruned_component_can_bind() {
    let dir = tempfile::tempdir().unwrap();
    let s = feeder(tight(), 0.1, 0.2);
    let run = save_tensors::<f64>(&s, &TcpOptions::default(), 1e-4, dir.path()).unwrap().0;
    let line0 = run.partition.pruned.iter().position(|c| c.to_string() == "line 0");
    assert!(line0.is_some(), "{:?}", run.partition);
    // the other load sits between the PCC and line 0's far end
    let mut net = s.net.clone();
    net.loads[0].p_mw *= 4.5;
    let moved = Study::new(net, s.offers.clone(), s.limits, PfOptions::default()).unwrap();
    let adapted = tc_plus_adapt::<f64>(&moved, dir.path()).unwrap();
    assert!(adapted.stale.iter().any(|w| w.starts_with("line 0")), "{:?}", adapted.stale);
    assert!(adapted.report.all("staleness_warning").len() >= 1);
}
