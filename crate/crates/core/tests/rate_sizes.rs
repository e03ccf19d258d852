use almg_core::*;

fn template(tau: f64) -> ProtocolSpec {
    ProtocolSpec::standard(200, Superposition::S1, tau).unwrap()
}

#[test]
fn late_quenches_land_in_the_expected_phases() {
    for (tau, phase) in [(3.5, 0usize), (6.5, 1)] {
        let (protocol, run) = run_protocol(&template(tau)).unwrap();
        let crit = critical_energies(&protocol.fin.params);
        let l = run.ldos(&crit).unwrap();
        let dominant = (0..3).max_by(|&a, &b| l.occupation[a].total_cmp(&l.occupation[b])).unwrap();
        assert_eq!(dominant, phase, "tau {tau}: {:?}", l.occupation);
        if phase == 0 {
            assert!(l.mean_eps < crit.eps_c1);
        }
    }
}

#[test]
fn main_rate_peak_settles_with_size_in_phase_one() {
    let times = time_grid(6.0, 0.01).unwrap();
    let scan = size_scan(&template(3.5), &[200, 400, 800, 1600], 3.5, &times, Precision::Auto).unwrap();
    assert!(scan.failures.is_empty());
    let mut peaks = Vec::new();
    for s in &scan.series {
        assert!(s.rate_pprp.underflow.is_empty());
        s.check_invariants(1e-12).unwrap();
        let r = &s.rate_pprp.values;
        let k = (0..r.len()).max_by(|&a, &b| r[a].total_cmp(&r[b])).unwrap();
        assert!((times[k] - 3.45).abs() < 0.15, "peak at {}", times[k]);
        peaks.push(r[k]);
    }
    let spread = peaks.iter().cloned().fold(f64::MIN, f64::max) - peaks.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 0.03, "{peaks:?}");
    assert!((peaks[3] - peaks[2]).abs() < (peaks[1] - peaks[0]).abs(), "{peaks:?}");
}
