mod common;

use common::smax_lattice_count;
use fa_core::estimators::{combination_count, exhaustive_pf, lattice_points, DEFAULT_EXHAUSTIVE_CAP};
use fa_core::network::fixture;
use fa_core::offers::offers_from_settings;
use fa_core::pf::PfOptions;
use fa_core::settings::{validate_settings, Settings};
use fa_core::study::Study;

fn mv_study(loads: Vec<usize>, dgs: Vec<usize>, dp: f64, dq: f64) -> Study {
    let net = fixture("mv-oberrhein-like").unwrap();
    let s = Settings { fsp_load_indices: loads, fsp_dg_indices: dgs, dp: Some(dp), dq: Some(dq), ..Default::default() };
    let v = validate_settings(&s, Some(&net)).unwrap();
    let offers = offers_from_settings(&net, &v).unwrap();
    Study::new(net, offers, v.constraints, PfOptions::default()).unwrap()
}

fn formula(study: &Study) -> Vec<usize> {
    study.offers.iter().map(|o| smax_lattice_count(o.p, o.q, o.s_max, o.dp, o.dq)).collect()
}

#[test]
fn six_fsps_coarse() {
    let s = mv_study(vec![1, 2, 3], vec![1, 2, 3], 0.15, 0.3);
    assert_eq!(formula(&s), vec![3, 3, 3, 6, 6, 6]);
    let per: Vec<usize> = lattice_points(&s).unwrap().iter().map(Vec::len).collect();
    assert_eq!(per, formula(&s));
    let est = exhaustive_pf(&s, DEFAULT_EXHAUSTIVE_CAP).unwrap();
    assert_eq!(est.outcomes.len(), 5832);
    assert_eq!(est.report.get("power_flows"), Some("5832"));
}

#[test]
fn two_fsps_fine() {
    let s = mv_study(vec![5], vec![5], 0.01, 0.02);
    assert_eq!(formula(&s), vec![3317, 13]);
    assert_eq!(combination_count(&lattice_points(&s).unwrap()), 43121);
    let est = exhaustive_pf(&s, DEFAULT_EXHAUSTIVE_CAP).unwrap();
    assert_eq!(est.report.get("power_flows"), Some("43121"));
    assert_eq!(est.counts.total() as usize, est.feasible());
}
