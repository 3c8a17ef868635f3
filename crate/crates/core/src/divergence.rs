//! Kullback-Leibler divergence in bits and the game objective `U(sigma, pi)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    induced_tables, LocalTheory, NonlocalityProof, OutcomeMap, SettingDistribution,
};

const INPUT_SUM_TOL: f64 = 1e-9;

/// A divergence in bits; may be `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bits(pub f64);

impl Bits {
    pub const ZERO: Bits = Bits(0.0);
    pub const INFINITY: Bits = Bits(f64::INFINITY);

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_finite() {
            write!(f, "{:.10}", self.0)
        } else {
            f.write_str("inf")
        }
    }
}

/// `sum q log2(q/p)` without input checks; `q(z) = 0` terms are skipped.
#[inline]
pub(crate) fn kl_unchecked(q: &[f64], p: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&qz, &pz) in q.iter().zip(p) {
        if qz > 0.0 {
            if pz <= 0.0 {
                return f64::INFINITY;
            }
            total += qz * (qz / pz).log2();
        }
    }
    total.max(0.0)
}

/// `D(q || p)` in bits.
pub fn kl(q: &[f64], p: &[f64]) -> Result<Bits> {
    if q.len() != p.len() {
        return Err(Error::Shape(format!(
            "kl of vectors of length {} and {}",
            q.len(),
            p.len()
        )));
    }
    for v in [q, p] {
        crate::model::check_probability_vector(v, INPUT_SUM_TOL)?;
    }
    Ok(Bits(kl_unchecked(q, p)))
}

/// Per-setting divergences `D(Q_s || P_s;pi)`.
pub fn per_setting(proof: &NonlocalityProof, map: &OutcomeMap, weights: &[f64]) -> Vec<f64> {
    induced_tables(map, weights)
        .iter()
        .zip(proof.tables())
        .map(|(p, q)| kl_unchecked(&q.probs, p))
        .collect()
}

/// `U(sigma, pi) = sum_s sigma_s D(Q_s || P_s;pi)`.
pub fn objective(
    proof: &NonlocalityProof,
    sigma: &SettingDistribution,
    pi: &LocalTheory,
) -> Result<Bits> {
    let map = OutcomeMap::new(proof.scenario())?;
    objective_with(proof, &map, &sigma.probs, &pi.weights)
}

pub(crate) fn objective_with(
    proof: &NonlocalityProof,
    map: &OutcomeMap,
    sigma: &[f64],
    weights: &[f64],
) -> Result<Bits> {
    if sigma.len() != map.settings || weights.len() != map.theories {
        return Err(Error::Shape(
            "setting distribution or local theory does not fit the proof".into(),
        ));
    }
    let d = per_setting(proof, map, weights);
    let mut total = 0.0;
    for (&s, &ds) in sigma.iter().zip(&d) {
        if s > 0.0 {
            total += s * ds;
        }
    }
    Ok(Bits(total))
}

/// Log2 of the confidence depressing factor after `n` trials.
pub fn confidence_depressing_factor(strength_bits: f64, n: u64) -> f64 {
    n as f64 * strength_bits
}
