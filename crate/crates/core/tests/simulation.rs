use bellstrength::quantum::catalog;
use bellstrength::sim::expected_llr;
use bellstrength::{evidence, project, simulate, simulate_evidence, SettingDistribution};

#[test]
fn mean_converges_at_root_n() {
    let proof = catalog("hardy").unwrap();
    let sigma = SettingDistribution::uniform(proof.scenario());
    let pi = project(&proof, &sigma, 1e-11).unwrap().pi_star;
    let exact = expected_llr(&proof, &sigma, &pi).unwrap();
    let mut bands = Vec::new();
    for n in [1_000u64, 10_000, 100_000] {
        let t = simulate_evidence(&proof, &sigma, &pi, n, 99).unwrap();
        let band = 3.0 * t.per_trial_std / (n as f64).sqrt();
        assert!((t.per_trial_mean - exact).abs() <= band, "n={n}");
        bands.push(band);
    }
    assert!(bands.windows(2).all(|w| w[1] < w[0]));
    assert!(bands[0] / bands[2] > 5.0);
}

#[test]
fn streamed_records_give_the_same_total() {
    let proof = catalog("chsh").unwrap();
    let sigma = SettingDistribution::uniform(proof.scenario());
    let pi = project(&proof, &sigma, 1e-11).unwrap().pi_star;
    let n = 150_000;
    let streamed = evidence(simulate(&proof, &sigma, n, 5).unwrap(), &proof, &pi).unwrap();
    let blocked = simulate_evidence(&proof, &sigma, &pi, n, 5).unwrap();
    assert_eq!(streamed.n, blocked.n);
    assert!((streamed.total_llr_bits - blocked.total_llr_bits).abs() < 1e-8);
    assert_eq!(
        simulate_evidence(&proof, &sigma, &pi, n, 5).unwrap(),
        blocked
    );
}
