//! Shared fixtures for the benchmarks under `benches/`.

use bellstrength::quantum::catalog;
use bellstrength::{NonlocalityProof, SettingDistribution};

/// A catalog proof with the uniform setting distribution.
pub fn uniform_fixture(name: &str) -> (NonlocalityProof, SettingDistribution) {
    let proof = catalog(name).expect("catalog proof");
    let sigma = SettingDistribution::uniform(proof.scenario());
    (proof, sigma)
}
