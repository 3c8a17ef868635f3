//! Nonlocality proofs, setting distributions and local hidden-variable theories.
//!
//! Index conventions used throughout the crate:
//!
//! * a *joint setting* is one setting per party, encoded in mixed radix with
//!   party 0 as the most significant digit;
//! * a *joint outcome* at a given joint setting is encoded the same way, with
//!   radix `outcomes[j][s_j]` for party `j`;
//! * a *deterministic theory* assigns an outcome to every `(party, setting)`
//!   pair. Pairs are laid out party-major, then setting-major, and theories are
//!   numbered by an odometer over that layout (last pair fastest). For the
//!   2x2x2 case this is the binary number `x1 x2 y1 y2` with `false = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of a probability vector.
pub const NORMALIZATION_TOL: f64 = 1e-12;
/// Default tolerance for no-signalling checks.
pub const NO_SIGNALLING_TOL: f64 = 1e-9;
/// Default cap on the number of deterministic theories of a scenario.
pub const DEFAULT_VERTEX_CAP: usize = 1 << 24;

/// Shape of an experiment: parties, settings per party, outcomes per setting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    settings_per_party: Vec<usize>,
    outcomes: Vec<Vec<usize>>,
}

impl Scenario {
    pub fn new(settings_per_party: Vec<usize>, outcomes: Vec<Vec<usize>>) -> Result<Self> {
        if settings_per_party.is_empty() {
            return Err(Error::InvalidScenario(
                "at least one party is required".into(),
            ));
        }
        if outcomes.len() != settings_per_party.len() {
            return Err(Error::InvalidScenario(format!(
                "outcome table lists {} parties, expected {}",
                outcomes.len(),
                settings_per_party.len()
            )));
        }
        for (j, (&n, outs)) in settings_per_party.iter().zip(&outcomes).enumerate() {
            if n == 0 {
                return Err(Error::InvalidScenario(format!("party {j} has no settings")));
            }
            if outs.len() != n {
                return Err(Error::InvalidScenario(format!(
                    "party {j} lists {} outcome counts for {n} settings",
                    outs.len()
                )));
            }
            if outs.contains(&0) {
                return Err(Error::InvalidScenario(format!(
                    "party {j} has a setting with no outcomes"
                )));
            }
        }
        Ok(Self {
            settings_per_party,
            outcomes,
        })
    }

    /// Every party has `settings` settings with `outcomes` outcomes each.
    pub fn uniform(parties: usize, settings: usize, outcomes: usize) -> Result<Self> {
        Self::new(
            vec![settings; parties],
            vec![vec![outcomes; settings]; parties],
        )
    }

    pub fn parties(&self) -> usize {
        self.settings_per_party.len()
    }

    pub fn settings_per_party(&self) -> &[usize] {
        &self.settings_per_party
    }

    pub fn outcomes_per_setting(&self) -> &[Vec<usize>] {
        &self.outcomes
    }

    pub fn outcome_count(&self, party: usize, setting: usize) -> usize {
        self.outcomes[party][setting]
    }

    pub fn joint_setting_count(&self) -> usize {
        self.settings_per_party.iter().product()
    }

    /// Number of deterministic theories, `None` on overflow.
    pub fn deterministic_count(&self) -> Option<usize> {
        self.outcomes
            .iter()
            .flatten()
            .try_fold(1usize, |acc, &m| acc.checked_mul(m))
    }

    /// True for two parties with two settings each (any outcome counts).
    pub fn is_two_by_two(&self) -> bool {
        self.settings_per_party == [2, 2]
    }

    /// Per-party settings of a joint-setting index.
    pub fn decode_setting(&self, index: usize) -> Vec<usize> {
        decode_mixed(index, &self.settings_per_party)
    }

    pub fn encode_setting(&self, setting: &[usize]) -> Result<usize> {
        encode_mixed(setting, &self.settings_per_party)
            .ok_or_else(|| Error::Shape(format!("setting {setting:?} out of range")))
    }

    /// Radix of the joint outcome at a joint setting.
    pub fn outcome_radix(&self, setting: &[usize]) -> Vec<usize> {
        setting
            .iter()
            .enumerate()
            .map(|(j, &s)| self.outcomes[j][s])
            .collect()
    }

    pub fn joint_outcome_count(&self, setting: &[usize]) -> usize {
        self.outcome_radix(setting).iter().product()
    }

    /// Offset of `(party, setting)` in the flattened assignment layout.
    fn pair_offset(&self, party: usize) -> usize {
        self.settings_per_party[..party].iter().sum()
    }

    fn pair_radix(&self) -> Vec<usize> {
        self.outcomes.iter().flatten().copied().collect()
    }
}

/// Mixed-radix digits of `index`, most significant first.
pub fn decode_mixed(mut index: usize, radix: &[usize]) -> Vec<usize> {
    let mut digits = vec![0; radix.len()];
    for (d, &r) in digits.iter_mut().zip(radix).rev() {
        *d = index % r;
        index /= r;
    }
    digits
}

pub(crate) fn encode_mixed(digits: &[usize], radix: &[usize]) -> Option<usize> {
    if digits.len() != radix.len() {
        return None;
    }
    let mut index = 0usize;
    for (&d, &r) in digits.iter().zip(radix) {
        if d >= r {
            return None;
        }
        index = index * r + d;
    }
    Some(index)
}

/// Outcome distribution at one joint setting, dense over joint outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    pub setting: Vec<usize>,
    pub probs: Vec<f64>,
}

impl ConditionalTable {
    pub fn new(setting: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        check_probability_vector(&probs, NORMALIZATION_TOL)?;
        Ok(Self { setting, probs })
    }

    pub fn prob(&self, outcome: usize) -> f64 {
        self.probs[outcome]
    }
}

/// Rejects negative entries and sums further than `tol` from one.
pub fn check_probability_vector(p: &[f64], tol: f64) -> Result<()> {
    if let Some(x) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::NotNormalized(format!(
            "entry {x} is not a probability"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(Error::NotNormalized(format!("entries sum to {sum}")));
    }
    Ok(())
}

fn renormalize(p: &mut [f64]) {
    let sum: f64 = p.iter().sum();
    if sum > 0.0 {
        p.iter_mut().for_each(|x| *x /= sum);
    }
}

/// One conditional table per joint setting.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlocalityProof {
    pub name: String,
    scenario: Scenario,
    tables: Vec<ConditionalTable>,
}

impl NonlocalityProof {
    /// Tables may be given in any order; they are stored by joint-setting index.
    pub fn new(
        name: impl Into<String>,
        scenario: Scenario,
        tables: Vec<ConditionalTable>,
    ) -> Result<Self> {
        let n = scenario.joint_setting_count();
        if tables.len() != n {
            return Err(Error::Shape(format!(
                "expected {n} tables, got {}",
                tables.len()
            )));
        }
        let mut slots: Vec<Option<ConditionalTable>> = vec![None; n];
        for t in tables {
            let idx = scenario.encode_setting(&t.setting)?;
            let want = scenario.joint_outcome_count(&t.setting);
            if t.probs.len() != want {
                return Err(Error::Shape(format!(
                    "table for setting {:?} has {} entries, expected {want}",
                    t.setting,
                    t.probs.len()
                )));
            }
            if slots[idx].replace(t).is_some() {
                return Err(Error::Shape(format!(
                    "duplicate table for setting index {idx}"
                )));
            }
        }
        let tables = slots
            .into_iter()
            .map(|t| t.expect("every slot filled"))
            .collect();
        Ok(Self {
            name: name.into(),
            scenario,
            tables,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn tables(&self) -> &[ConditionalTable] {
        &self.tables
    }

    pub fn table(&self, joint_setting: usize) -> &ConditionalTable {
        &self.tables[joint_setting]
    }

    /// Tables induced by a local theory; such a proof is never proper.
    pub fn from_local_theory(
        name: impl Into<String>,
        scenario: &Scenario,
        theory: &LocalTheory,
    ) -> Result<Self> {
        let tables = (0..scenario.joint_setting_count())
            .map(|s| induced_conditional(theory, s, scenario))
            .collect::<Result<Vec<_>>>()?;
        Self::new(name, scenario.clone(), tables)
    }
}

/// A point of the local polytope: an outcome for every `(party, setting)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DeterministicTheory {
    /// Flattened party-major, setting-major.
    pub assignment: Vec<usize>,
}

impl DeterministicTheory {
    pub fn outcome(&self, scenario: &Scenario, party: usize, setting: usize) -> usize {
        self.assignment[scenario.pair_offset(party) + setting]
    }

    /// Joint outcome index this theory produces at a joint setting.
    pub fn joint_outcome(&self, scenario: &Scenario, setting: &[usize]) -> usize {
        let digits: Vec<usize> = setting
            .iter()
            .enumerate()
            .map(|(j, &s)| self.outcome(scenario, j, s))
            .collect();
        encode_mixed(&digits, &scenario.outcome_radix(setting)).expect("assignment within radix")
    }
}

/// All deterministic theories in canonical odometer order.
pub fn enumerate_deterministic(scenario: &Scenario) -> Result<Vec<DeterministicTheory>> {
    enumerate_deterministic_capped(scenario, DEFAULT_VERTEX_CAP)
}

pub fn enumerate_deterministic_capped(
    scenario: &Scenario,
    cap: usize,
) -> Result<Vec<DeterministicTheory>> {
    let count = scenario
        .deterministic_count()
        .filter(|&c| c <= cap)
        .ok_or(Error::TooLarge { cap })?;
    let radix = scenario.pair_radix();
    Ok((0..count)
        .map(|i| DeterministicTheory {
            assignment: decode_mixed(i, &radix),
        })
        .collect())
}

/// For every deterministic theory, the joint outcome it yields at each joint setting.
///
/// Row-major `[theory][joint_setting]`; the building block of every solver.
#[derive(Debug, Clone)]
pub struct OutcomeMap {
    pub theories: usize,
    pub settings: usize,
    pub outcomes_per_setting: Vec<usize>,
    map: Vec<u32>,
}

impl OutcomeMap {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let theories = enumerate_deterministic(scenario)?;
        let settings = scenario.joint_setting_count();
        let decoded: Vec<Vec<usize>> = (0..settings).map(|s| scenario.decode_setting(s)).collect();
        let mut map = Vec::with_capacity(theories.len() * settings);
        for t in &theories {
            for s in &decoded {
                map.push(t.joint_outcome(scenario, s) as u32);
            }
        }
        Ok(Self {
            theories: theories.len(),
            settings,
            outcomes_per_setting: decoded
                .iter()
                .map(|s| scenario.joint_outcome_count(s))
                .collect(),
            map,
        })
    }

    #[inline]
    pub fn outcome(&self, theory: usize, setting: usize) -> usize {
        self.map[theory * self.settings + setting] as usize
    }

    #[inline]
    pub fn row(&self, theory: usize) -> &[u32] {
        &self.map[theory * self.settings..(theory + 1) * self.settings]
    }
}

/// A mixture of deterministic theories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTheory {
    pub weights: Vec<f64>,
}

impl LocalTheory {
    pub fn new(mut weights: Vec<f64>) -> Result<Self> {
        check_probability_vector(&weights, NORMALIZATION_TOL)?;
        renormalize(&mut weights);
        Ok(Self { weights })
    }

    pub fn uniform(scenario: &Scenario) -> Result<Self> {
        let n = scenario.deterministic_count().ok_or(Error::TooLarge {
            cap: DEFAULT_VERTEX_CAP,
        })?;
        Ok(Self {
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn point_mass(scenario: &Scenario, theory: usize) -> Result<Self> {
        let n = scenario.deterministic_count().ok_or(Error::TooLarge {
            cap: DEFAULT_VERTEX_CAP,
        })?;
        if theory >= n {
            return Err(Error::Shape(format!("theory {theory} out of range {n}")));
        }
        let mut weights = vec![0.0; n];
        weights[theory] = 1.0;
        Ok(Self { weights })
    }

    fn check(&self, scenario: &Scenario) -> Result<()> {
        match scenario.deterministic_count() {
            Some(n) if n == self.weights.len() => Ok(()),
            _ => Err(Error::Shape(format!(
                "local theory has {} weights, scenario has {:?} deterministic theories",
                self.weights.len(),
                scenario.deterministic_count()
            ))),
        }
    }
}

/// Outcome distribution a local theory predicts at one joint setting.
pub fn induced_conditional(
    theory: &LocalTheory,
    setting: usize,
    scenario: &Scenario,
) -> Result<ConditionalTable> {
    theory.check(scenario)?;
    if setting >= scenario.joint_setting_count() {
        return Err(Error::Shape(format!(
            "setting index {setting} out of range"
        )));
    }
    let decoded = scenario.decode_setting(setting);
    let radix = scenario.pair_radix();
    let mut probs = vec![0.0; scenario.joint_outcome_count(&decoded)];
    for (i, &w) in theory.weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let t = DeterministicTheory {
            assignment: decode_mixed(i, &radix),
        };
        probs[t.joint_outcome(scenario, &decoded)] += w;
    }
    Ok(ConditionalTable {
        setting: decoded,
        probs,
    })
}

/// All conditional tables of a local theory, indexed by joint setting.
pub fn induced_tables(map: &OutcomeMap, weights: &[f64]) -> Vec<Vec<f64>> {
    let mut tables: Vec<Vec<f64>> = map
        .outcomes_per_setting
        .iter()
        .map(|&m| vec![0.0; m])
        .collect();
    for (v, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (s, &o) in map.row(v).iter().enumerate() {
            tables[s][o as usize] += w;
        }
    }
    tables
}

/// Result of a no-signalling check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignallingReport {
    pub no_signalling: bool,
    pub max_violation: f64,
}

/// Marginal of `party` at a joint setting.
pub(crate) fn party_marginal(
    scenario: &Scenario,
    setting: &[usize],
    probs: &[f64],
    party: usize,
) -> Vec<f64> {
    let radix = scenario.outcome_radix(setting);
    let mut marginal = vec![0.0; radix[party]];
    for (o, &p) in probs.iter().enumerate() {
        marginal[decode_mixed(o, &radix)[party]] += p;
    }
    marginal
}

/// Worst change of any party's marginal when only the other parties' settings
/// change, over the listed tables.
pub(crate) fn signalling_violation(scenario: &Scenario, tables: &[&ConditionalTable]) -> f64 {
    let mut worst = 0.0f64;
    for party in 0..scenario.parties() {
        for (i, a) in tables.iter().enumerate() {
            let ma = party_marginal(scenario, &a.setting, &a.probs, party);
            for b in &tables[i + 1..] {
                if a.setting[party] != b.setting[party] {
                    continue;
                }
                let mb = party_marginal(scenario, &b.setting, &b.probs, party);
                for (x, y) in ma.iter().zip(&mb) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
    }
    worst
}

pub fn check_no_signalling(proof: &NonlocalityProof, tol: f64) -> SignallingReport {
    let tables: Vec<&ConditionalTable> = proof.tables.iter().collect();
    let max_violation = signalling_violation(&proof.scenario, &tables);
    SignallingReport {
        no_signalling: max_violation <= tol,
        max_violation,
    }
}

/// How a setting distribution was constructed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "form", content = "marginals")]
pub enum SettingForm {
    Uniform,
    Product(Vec<Vec<f64>>),
    General,
}

/// Probabilities with which joint settings are sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingDistribution {
    pub probs: Vec<f64>,
    #[serde(flatten)]
    pub form: SettingForm,
}

impl SettingDistribution {
    pub fn uniform(scenario: &Scenario) -> Self {
        let n = scenario.joint_setting_count();
        Self {
            probs: vec![1.0 / n as f64; n],
            form: SettingForm::Uniform,
        }
    }

    /// Outer product of per-party marginals (an uncorrelated distribution).
    pub fn product(scenario: &Scenario, mut marginals: Vec<Vec<f64>>) -> Result<Self> {
        if marginals.len() != scenario.parties() {
            return Err(Error::Shape(format!(
                "{} marginals for {} parties",
                marginals.len(),
                scenario.parties()
            )));
        }
        for (m, &n) in marginals.iter_mut().zip(scenario.settings_per_party()) {
            if m.len() != n {
                return Err(Error::Shape(format!(
                    "marginal of length {} for {n} settings",
                    m.len()
                )));
            }
            check_probability_vector(m, NORMALIZATION_TOL)?;
            renormalize(m);
        }
        let probs = (0..scenario.joint_setting_count())
            .map(|s| {
                scenario
                    .decode_setting(s)
                    .iter()
                    .zip(&marginals)
                    .map(|(&t, m)| m[t])
                    .product()
            })
            .collect();
        Ok(Self {
            probs,
            form: SettingForm::Product(marginals),
        })
    }

    pub fn general(scenario: &Scenario, mut probs: Vec<f64>) -> Result<Self> {
        if probs.len() != scenario.joint_setting_count() {
            return Err(Error::Shape(format!(
                "{} setting probabilities for {} joint settings",
                probs.len(),
                scenario.joint_setting_count()
            )));
        }
        check_probability_vector(&probs, NORMALIZATION_TOL)?;
        renormalize(&mut probs);
        Ok(Self {
            probs,
            form: SettingForm::General,
        })
    }

    /// Per-party marginals recovered from the joint vector.
    pub fn marginals(&self, scenario: &Scenario) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = scenario
            .settings_per_party()
            .iter()
            .map(|&n| vec![0.0; n])
            .collect();
        for (s, &p) in self.probs.iter().enumerate() {
            for (j, &t) in scenario.decode_setting(s).iter().enumerate() {
                out[j][t] += p;
            }
        }
        out
    }

    /// Every joint setting has positive probability.
    pub fn is_interior(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }
}
