mod common;

use common::*;
use fa_core::network::{apply_scenario, fixture, fixture_names, scenario, scenario_names};
use fa_core::pf::{solve_pf, PfOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn two_bus_analytic() {
    for (x, p, q) in [(0.1, 0.5, 0.0), (0.05, 1.2, 0.4), (0.2, 0.3, -0.2), (0.01, 0.0, 0.0)] {
        let r = solve_pf(&two_bus_network(x, p, q), PfOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.vm_pu[1] - two_bus_voltage(x, p, q)).abs() < 1e-8);
        // no losses on a pure reactance
        assert!((r.p_pcc_mw - p).abs() < 1e-8);
    }
}

#[test]
fn gauss_seidel_agrees_on_fixtures_and_scenarios() {
    let opts = PfOptions::default();
    for name in fixture_names() {
        for sc in scenario_names() {
            let net = apply_scenario(&fixture(name).unwrap(), &scenario(sc).unwrap()).unwrap();
            let r = solve_pf(&net, opts).unwrap();
            assert!(r.converged, "{name} {sc}");
            let v = gauss_seidel(&net, opts, &r.energized);
            let gap = largest_voltage_gap(&r, &v);
            assert!(gap < 1e-6, "{name} {sc}: {gap:e}");
        }
    }
}

#[test]
fn balance_on_random_setpoints() {
    let opts = PfOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for name in fixture_names() {
        for _ in 0..20 {
            let mut net = fixture(name).unwrap();
            for e in net.loads.iter_mut().chain(net.sgens.iter_mut()) {
                e.scaling = rng.gen_range(0.0..1.5);
            }
            let r = solve_pf(&net, opts).unwrap();
            if !r.converged {
                continue;
            }
            assert!(nodal_mismatch(&net, opts, &r) < 1e-6);
            assert!(active_balance(&net, &r).abs() < 1e-6);
        }
    }
}
