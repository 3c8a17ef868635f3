//! Monte Carlo trials and the evidence they accumulate against a local theory.
//!
//! Trials are generated in blocks of [`BLOCK`]; block `b` draws from its own
//! ChaCha20 stream, so a run is reproducible from its seed regardless of how
//! blocks are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    decode_mixed, induced_tables, LocalTheory, NonlocalityProof, OutcomeMap, SettingDistribution,
};

pub const BLOCK: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialRecord {
    /// Joint setting index.
    pub setting: usize,
    /// Joint outcome index within the setting's table.
    pub outcome: usize,
}

impl TrialRecord {
    /// Per-party outcomes.
    pub fn outcomes(&self, proof: &NonlocalityProof) -> Vec<usize> {
        let sc = proof.scenario();
        decode_mixed(
            self.outcome,
            &sc.outcome_radix(&sc.decode_setting(self.setting)),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceTrace {
    pub n: u64,
    pub total_llr_bits: f64,
    pub per_trial_mean: f64,
    /// Sample standard deviation of the per-trial log-likelihood ratio.
    pub per_trial_std: f64,
    /// Set when the local theory gives probability 0 to an observed outcome.
    pub infinite: bool,
    /// `(trials so far, running mean)` at roughly geometric spacing.
    pub running_history: Vec<(u64, f64)>,
}

fn cdf(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut c: Vec<f64> = p
        .iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect();
    // the last possible entry absorbs rounding so zero entries are never drawn
    if let Some(last) = p.iter().rposition(|&x| x > 0.0) {
        c[last..].iter_mut().for_each(|x| *x = f64::INFINITY);
    }
    c
}

fn draw(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Precomputed sampling tables.
#[derive(Debug, Clone)]
struct Sampler {
    settings: Vec<f64>,
    outcomes: Vec<Vec<f64>>,
}

impl Sampler {
    fn new(proof: &NonlocalityProof, sigma: &SettingDistribution) -> Result<Self> {
        if sigma.probs.len() != proof.scenario().joint_setting_count() {
            return Err(Error::Shape(
                "setting distribution does not fit the proof".into(),
            ));
        }
        Ok(Self {
            settings: cdf(&sigma.probs),
            outcomes: proof.tables().iter().map(|t| cdf(&t.probs)).collect(),
        })
    }

    fn sample(&self, rng: &mut ChaCha20Rng) -> TrialRecord {
        let setting = draw(&self.settings, rng.random());
        let outcome = draw(&self.outcomes[setting], rng.random());
        TrialRecord { setting, outcome }
    }
}

fn block_rng(seed: u64, block: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Streaming iterator of i.i.d. trials from `Q_sigma`.
#[derive(Debug, Clone)]
pub struct Trials {
    sampler: Sampler,
    seed: u64,
    rng: ChaCha20Rng,
    done: u64,
    n: u64,
}

impl Iterator for Trials {
    type Item = TrialRecord;

    fn next(&mut self) -> Option<TrialRecord> {
        if self.done >= self.n {
            return None;
        }
        if self.done > 0 && self.done.is_multiple_of(BLOCK) {
            self.rng = block_rng(self.seed, self.done / BLOCK);
        }
        self.done += 1;
        Some(self.sampler.sample(&mut self.rng))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.n - self.done) as usize;
        (left, Some(left))
    }
}

impl ExactSizeIterator for Trials {}

pub fn simulate(
    proof: &NonlocalityProof,
    sigma: &SettingDistribution,
    n: u64,
    seed: u64,
) -> Result<Trials> {
    Ok(Trials {
        sampler: Sampler::new(proof, sigma)?,
        seed,
        rng: block_rng(seed, 0),
        done: 0,
        n,
    })
}

/// Per-trial log-likelihood ratios `log2(Q_s(o) / P_s;pi(o))` by setting and outcome.
fn llr_table(proof: &NonlocalityProof, pi: &LocalTheory) -> Result<Vec<Vec<f64>>> {
    let map = OutcomeMap::new(proof.scenario())?;
    if pi.weights.len() != map.theories {
        return Err(Error::Shape(format!(
            "{} weights for {} theories",
            pi.weights.len(),
            map.theories
        )));
    }
    Ok(induced_tables(&map, &pi.weights)
        .iter()
        .zip(proof.tables())
        .map(|(p, q)| {
            q.probs
                .iter()
                .zip(p)
                .map(|(&qo, &po)| if qo > 0.0 { (qo / po).log2() } else { 0.0 })
                .collect()
        })
        .collect())
}

/// Neumaier-compensated running sums.
#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    n: u64,
    sum: f64,
    comp: f64,
    sq: f64,
    sq_comp: f64,
    infinite: bool,
}

fn neumaier(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

impl Accumulator {
    fn push(&mut self, x: f64) {
        self.n += 1;
        if x.is_infinite() {
            self.infinite = true;
            return;
        }
        neumaier(&mut self.sum, &mut self.comp, x);
        neumaier(&mut self.sq, &mut self.sq_comp, x * x);
    }

    fn merge(&mut self, other: &Accumulator) {
        self.n += other.n;
        self.infinite |= other.infinite;
        neumaier(&mut self.sum, &mut self.comp, other.sum);
        neumaier(&mut self.sum, &mut self.comp, other.comp);
        neumaier(&mut self.sq, &mut self.sq_comp, other.sq);
        neumaier(&mut self.sq, &mut self.sq_comp, other.sq_comp);
    }

    fn total(&self) -> f64 {
        if self.infinite {
            f64::INFINITY
        } else {
            self.sum + self.comp
        }
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.total() / self.n as f64
        }
    }

    fn trace(&self, running_history: Vec<(u64, f64)>) -> EvidenceTrace {
        let per_trial_std = if self.n > 1 && !self.infinite {
            let mean = self.mean();
            let var =
                ((self.sq + self.sq_comp) - self.n as f64 * mean * mean) / (self.n - 1) as f64;
            var.max(0.0).sqrt()
        } else {
            0.0
        };
        EvidenceTrace {
            n: self.n,
            total_llr_bits: self.total(),
            per_trial_mean: self.mean(),
            per_trial_std,
            infinite: self.infinite,
            running_history,
        }
    }
}

/// Total evidence of the records against `pi`.
///
/// Setting probabilities are common to both hypotheses and cancel.
pub fn evidence(
    records: impl IntoIterator<Item = TrialRecord>,
    proof: &NonlocalityProof,
    pi: &LocalTheory,
) -> Result<EvidenceTrace> {
    let llr = llr_table(proof, pi)?;
    let mut acc = Accumulator::default();
    let mut history = Vec::new();
    let mut next_mark = 1u64;
    for r in records {
        let x = llr
            .get(r.setting)
            .and_then(|t| t.get(r.outcome))
            .ok_or_else(|| Error::Shape(format!("record {r:?} does not fit the proof")))?;
        acc.push(*x);
        if acc.n == next_mark {
            history.push((acc.n, acc.mean()));
            next_mark *= 2;
        }
    }
    if history.last().is_none_or(|&(n, _)| n != acc.n) && acc.n > 0 {
        history.push((acc.n, acc.mean()));
    }
    Ok(acc.trace(history))
}

/// Simulates `n` trials and accumulates their evidence, one block per task.
///
/// The result does not depend on the number of threads.
pub fn simulate_evidence(
    proof: &NonlocalityProof,
    sigma: &SettingDistribution,
    pi: &LocalTheory,
    n: u64,
    seed: u64,
) -> Result<EvidenceTrace> {
    let sampler = Sampler::new(proof, sigma)?;
    let llr = llr_table(proof, pi)?;
    let blocks = n.div_ceil(BLOCK);
    let parts: Vec<Accumulator> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, b);
            let mut acc = Accumulator::default();
            for _ in 0..BLOCK.min(n - b * BLOCK) {
                let r = sampler.sample(&mut rng);
                acc.push(llr[r.setting][r.outcome]);
            }
            acc
        })
        .collect();
    let mut total = Accumulator::default();
    let mut history = Vec::new();
    for part in &parts {
        total.merge(part);
        history.push((total.n, total.mean()));
    }
    Ok(total.trace(history))
}

/// Exact expectation of the per-trial log-likelihood ratio under `Q_sigma`.
pub fn expected_llr(
    proof: &NonlocalityProof,
    sigma: &SettingDistribution,
    pi: &LocalTheory,
) -> Result<f64> {
    let llr = llr_table(proof, pi)?;
    let mut total = 0.0;
    for (s, (&w, t)) in sigma.probs.iter().zip(proof.tables()).enumerate() {
        if w > 0.0 {
            total += w * t
                .probs
                .iter()
                .zip(&llr[s])
                .map(|(q, x)| if *q > 0.0 { q * x } else { 0.0 })
                .sum::<f64>();
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::objective;
    use crate::model::Scenario;
    use crate::quantum::catalog;

    #[test]
    fn empty_run() {
        let proof = catalog("chsh").unwrap();
        let sigma = SettingDistribution::uniform(proof.scenario());
        assert_eq!(simulate(&proof, &sigma, 0, 1).unwrap().count(), 0);
        let pi = LocalTheory::uniform(proof.scenario()).unwrap();
        let t = simulate_evidence(&proof, &sigma, &pi, 0, 1).unwrap();
        assert_eq!((t.n, t.total_llr_bits), (0, 0.0));
    }

    #[test]
    fn setting_frequencies() {
        let proof = catalog("chsh").unwrap();
        let sigma = SettingDistribution::uniform(proof.scenario());
        let n = 1_000_000u64;
        let mut counts = [0u64; 4];
        for r in simulate(&proof, &sigma, n, 7).unwrap() {
            counts[r.setting] += 1;
        }
        let sd = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * 0.25).abs() < 4.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn ghz_never_shows_forbidden_outcomes() {
        let proof = catalog("ghz").unwrap();
        let mut p = vec![0.0; 8];
        for s in [0, 3, 5, 6] {
            p[s] = 0.25;
        }
        let sigma = SettingDistribution::general(proof.scenario(), p).unwrap();
        for r in simulate(&proof, &sigma, 100_000, 3).unwrap() {
            assert!(proof.table(r.setting).probs[r.outcome] > 0.0);
            assert!([0, 3, 5, 6].contains(&r.setting));
        }
    }

    #[test]
    fn expectation_matches_objective() {
        for name in crate::quantum::CATALOG_NAMES {
            let proof = catalog(name).unwrap();
            let sigma = SettingDistribution::uniform(proof.scenario());
            let pi = LocalTheory::uniform(proof.scenario()).unwrap();
            let e = expected_llr(&proof, &sigma, &pi).unwrap();
            let u = objective(&proof, &sigma, &pi).unwrap().value();
            assert!((e - u).abs() <= 1e-12, "{name}");
        }
    }

    #[test]
    fn improper_proof_has_no_evidence() {
        let sc = Scenario::uniform(2, 2, 2).unwrap();
        let pi = LocalTheory::new((1..=16).map(|i| i as f64 / 136.0).collect()).unwrap();
        let proof = NonlocalityProof::from_local_theory("lr", &sc, &pi).unwrap();
        let sigma = SettingDistribution::uniform(&sc);
        let t = evidence(simulate(&proof, &sigma, 10_000, 1).unwrap(), &proof, &pi).unwrap();
        assert!(t.total_llr_bits.abs() < 1e-9);
    }

    #[test]
    fn zero_probability_under_theory_is_infinite() {
        let proof = catalog("chsh").unwrap();
        let sigma = SettingDistribution::uniform(proof.scenario());
        let pi = LocalTheory::point_mass(proof.scenario(), 0).unwrap();
        let t = evidence(simulate(&proof, &sigma, 100, 1).unwrap(), &proof, &pi).unwrap();
        assert!(t.infinite && t.total_llr_bits.is_infinite());
    }

    #[test]
    fn seeded_runs_repeat_exactly() {
        let proof = catalog("hardy").unwrap();
        let sigma = SettingDistribution::uniform(proof.scenario());
        let pi = LocalTheory::uniform(proof.scenario()).unwrap();
        let a = simulate_evidence(&proof, &sigma, &pi, 200_000, 42).unwrap();
        let b = simulate_evidence(&proof, &sigma, &pi, 200_000, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_evidence(&proof, &sigma, &pi, 200_000, 43).unwrap();
        assert_ne!(a.total_llr_bits, c.total_llr_bits);
        let s1: Vec<_> = simulate(&proof, &sigma, 70_000, 5).unwrap().collect();
        let s2: Vec<_> = simulate(&proof, &sigma, 70_000, 5).unwrap().collect();
        assert_eq!(s1, s2);
    }

    #[test]
    fn streaming_and_blocked_runs_agree() {
        let proof = catalog("chsh").unwrap();
        let sigma = SettingDistribution::uniform(proof.scenario());
        let pi = LocalTheory::uniform(proof.scenario()).unwrap();
        let n = 3 * BLOCK + 17;
        let a = evidence(simulate(&proof, &sigma, n, 9).unwrap(), &proof, &pi).unwrap();
        let b = simulate_evidence(&proof, &sigma, &pi, n, 9).unwrap();
        assert_eq!(a.n, b.n);
        assert!((a.total_llr_bits - b.total_llr_bits).abs() < 1e-8);
    }
}
