//! Geometry of the local polytope: properness, Γ-table decomposition and
//! perfect local explanations of three settings of a 2x2 proof.

use serde::{Deserialize, Serialize};

use crate::divergence::Bits;
use crate::error::{Error, Result};
use crate::json::{scenario_from_doc, table_from_doc, TableDoc};
use crate::model::{
    induced_tables, party_marginal, ConditionalTable, LocalTheory, NonlocalityProof, OutcomeMap,
    Scenario, SettingDistribution, NO_SIGNALLING_TOL,
};
use crate::projection::{ProjectOptions, Projector};

/// Entries at or below this are treated as already peeled off.
const PEEL_TOL: f64 = 1e-13;

/// Conditional tables for a subset of the joint settings.
#[derive(Debug, Clone)]
pub struct GammaTable {
    pub scenario: Scenario,
    pub tables: Vec<ConditionalTable>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Decomposition {
    pub theory: LocalTheory,
    /// Largest entrywise difference between the input and the remixed tables.
    pub reconstruction_error: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Properness {
    pub proper: bool,
    /// Minimized divergence at uniform settings.
    pub divergence: Bits,
    /// The local theory that reproduces the proof, when it is improper.
    pub explaining: Option<LocalTheory>,
}

/// JSON form of a Γ-table, sharing the proof document's table layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaDoc {
    pub parties: usize,
    pub settings_per_party: Vec<usize>,
    pub outcomes_per_setting: Vec<Vec<usize>>,
    pub tables: Vec<TableDoc>,
}

impl GammaTable {
    pub fn new(scenario: Scenario, tables: Vec<ConditionalTable>) -> Result<Self> {
        let mut seen = vec![false; scenario.joint_setting_count()];
        for t in &tables {
            let idx = scenario.encode_setting(&t.setting)?;
            if seen[idx] {
                return Err(Error::Shape(format!(
                    "setting {:?} listed twice",
                    t.setting
                )));
            }
            seen[idx] = true;
            if t.probs.len() != scenario.joint_outcome_count(&t.setting) {
                return Err(Error::Shape(format!(
                    "table for {:?} has wrong size",
                    t.setting
                )));
            }
        }
        Ok(Self { scenario, tables })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GammaDoc = serde_json::from_str(text)?;
        let scenario = scenario_from_doc(
            doc.parties,
            &doc.settings_per_party,
            &doc.outcomes_per_setting,
        )?;
        let tables = doc
            .tables
            .iter()
            .map(|t| table_from_doc(&scenario, t))
            .collect::<Result<Vec<_>>>()?;
        Self::new(scenario, tables)
    }

    /// The proof's tables at every joint setting except `excluded`.
    pub fn from_proof(proof: &NonlocalityProof, excluded: usize) -> Self {
        let tables = proof
            .tables()
            .iter()
            .enumerate()
            .filter(|(s, _)| *s != excluded)
            .map(|(_, t)| t.clone())
            .collect();
        Self {
            scenario: proof.scenario().clone(),
            tables,
        }
    }

    /// Worst no-signalling violation and where it occurs.
    fn worst_restriction(&self) -> (f64, String) {
        let sc = &self.scenario;
        let mut worst = (0.0, String::new());
        for party in 0..sc.parties() {
            for (i, a) in self.tables.iter().enumerate() {
                let ma = party_marginal(sc, &a.setting, &a.probs, party);
                for b in &self.tables[i + 1..] {
                    if a.setting[party] != b.setting[party] {
                        continue;
                    }
                    let mb = party_marginal(sc, &b.setting, &b.probs, party);
                    for (o, (x, y)) in ma.iter().zip(&mb).enumerate() {
                        let gap = (x - y).abs();
                        if gap > worst.0 {
                            let what = format!(
                                "party {} outcome {o} at setting {}: {x} under {:?} but {y} under {:?}",
                                party + 1,
                                a.setting[party] + 1,
                                a.setting,
                                b.setting
                            );
                            worst = (gap, what);
                        }
                    }
                }
            }
        }
        worst
    }
}

/// Writes a Γ-table as a mixture of deterministic theories.
///
/// Greedy peeling: take the smallest remaining entry, find the first
/// deterministic theory in canonical order through that entry whose Γ-table
/// fits under the remainder, subtract, and repeat.
pub fn decompose_gamma(gamma: &GammaTable) -> Result<Decomposition> {
    let sc = &gamma.scenario;
    if !sc.is_two_by_two() {
        return Err(Error::Unsupported(
            "Γ-table decomposition needs two parties with two settings each".into(),
        ));
    }
    if gamma.tables.len() > 3 {
        return Err(Error::Unsupported(
            "Γ-tables cover at most three of the four joint settings".into(),
        ));
    }
    let (violation, what) = gamma.worst_restriction();
    if violation > NO_SIGNALLING_TOL {
        return Err(Error::Signalling(what));
    }
    let map = OutcomeMap::new(sc)?;
    let settings: Vec<usize> = gamma
        .tables
        .iter()
        .map(|t| sc.encode_setting(&t.setting))
        .collect::<Result<_>>()?;
    let mut rest: Vec<Vec<f64>> = gamma.tables.iter().map(|t| t.probs.clone()).collect();
    let mut weights = vec![0.0; map.theories];
    let mut steps = 0;
    loop {
        let smallest = rest
            .iter()
            .enumerate()
            .flat_map(|(k, t)| t.iter().enumerate().map(move |(o, &p)| (k, o, p)))
            .filter(|&(_, _, p)| p > PEEL_TOL)
            .min_by(|a, b| a.2.total_cmp(&b.2));
        let Some((k, o, eps)) = smallest else { break };
        let fits = |v: usize| {
            map.outcome(v, settings[k]) == o
                && settings
                    .iter()
                    .zip(&rest)
                    .all(|(&s, t)| t[map.outcome(v, s)] >= eps - PEEL_TOL)
        };
        let v = (0..map.theories).find(|&v| fits(v)).ok_or_else(|| {
            Error::Signalling("no deterministic theory fits under the remaining entries".into())
        })?;
        for (&s, t) in settings.iter().zip(rest.iter_mut()) {
            let cell = &mut t[map.outcome(v, s)];
            *cell = (*cell - eps).max(0.0);
        }
        weights[v] += eps;
        steps += 1;
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::NotNormalized("empty Γ-table".into()));
    }
    weights.iter_mut().for_each(|w| *w /= total);
    let remixed = induced_tables(&map, &weights);
    let reconstruction_error = gamma
        .tables
        .iter()
        .zip(&settings)
        .flat_map(|(t, &s)| t.probs.iter().zip(&remixed[s]).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    Ok(Decomposition {
        theory: LocalTheory { weights },
        reconstruction_error,
        steps,
    })
}

/// A local theory that reproduces the proof exactly at every joint setting but `excluded`.
pub fn perfect_lr_for_three_settings(
    proof: &NonlocalityProof,
    excluded: usize,
) -> Result<LocalTheory> {
    if !proof.scenario().is_two_by_two() {
        return Err(Error::Unsupported(
            "perfect local explanation needs a 2x2 proof".into(),
        ));
    }
    if excluded >= 4 {
        return Err(Error::Shape(format!(
            "joint setting {excluded} out of range"
        )));
    }
    Ok(decompose_gamma(&GammaTable::from_proof(proof, excluded))?.theory)
}

/// Whether no local theory reproduces the proof, decided by the projection at uniform settings.
pub fn is_proper(proof: &NonlocalityProof, tol: f64) -> Result<Properness> {
    let map = OutcomeMap::new(proof.scenario())?;
    let sigma = SettingDistribution::uniform(proof.scenario());
    let opts = ProjectOptions {
        tol: 1e-10,
        ..Default::default()
    };
    let result = match Projector::new(proof, &map, &sigma.probs)?.solve(None, opts) {
        Ok(r) => r,
        Err(Error::ProjectionNotConverged(best)) => *best,
        Err(e) => return Err(e),
    };
    let proper = result.value.value() > tol;
    Ok(Properness {
        proper,
        divergence: result.value,
        explaining: (!proper).then_some(result.pi_star),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::catalog;

    fn remix_error(proof: &NonlocalityProof, pi: &LocalTheory, excluded: usize) -> f64 {
        let map = OutcomeMap::new(proof.scenario()).unwrap();
        let remixed = induced_tables(&map, &pi.weights);
        (0..4)
            .filter(|&s| s != excluded)
            .flat_map(|s| {
                proof
                    .table(s)
                    .probs
                    .iter()
                    .zip(&remixed[s])
                    .map(|(a, b)| (a - b).abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn vertex_decomposes_to_itself() {
        let sc = Scenario::uniform(2, 2, 2).unwrap();
        // X1 = F, X2 = F, Y1 = T, Y2 = F
        let idx = 0b0010;
        let pi = LocalTheory::point_mass(&sc, idx).unwrap();
        let proof = NonlocalityProof::from_local_theory("v", &sc, &pi).unwrap();
        let d = decompose_gamma(&GammaTable::from_proof(&proof, 3)).unwrap();
        assert_eq!(d.theory.weights[idx], 1.0);
        assert_eq!(d.steps, 1);
    }

    #[test]
    fn quantum_tables_on_three_settings_are_local() {
        for name in ["chsh", "hardy", "bell", "bell-optimized"] {
            let proof = catalog(name).unwrap();
            for excluded in 0..4 {
                let pi = perfect_lr_for_three_settings(&proof, excluded).unwrap();
                assert!(
                    remix_error(&proof, &pi, excluded) <= 1e-9,
                    "{name} {excluded}"
                );
                assert!(pi.weights.iter().filter(|&&w| w > 0.0).count() <= 16);
            }
        }
    }

    #[test]
    fn classic_chsh_theory_three_settings() {
        let sc = Scenario::uniform(2, 2, 2).unwrap();
        let mut w = vec![0.0; 16];
        for idx in [
            0b0000, 0b1111, 0b0001, 0b1110, 0b0100, 0b1011, 0b1001, 0b0110,
        ] {
            w[idx] = 0.125;
        }
        let proof =
            NonlocalityProof::from_local_theory("t", &sc, &LocalTheory::new(w).unwrap()).unwrap();
        let d = decompose_gamma(&GammaTable::from_proof(&proof, 3)).unwrap();
        assert!(d.reconstruction_error <= 1e-12);
        assert!((d.theory.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn signalling_input_rejected() {
        let sc = Scenario::uniform(2, 2, 2).unwrap();
        let tables = vec![
            ConditionalTable::new(vec![0, 0], vec![0.5, 0.0, 0.0, 0.5]).unwrap(),
            ConditionalTable::new(vec![0, 1], vec![1.0, 0.0, 0.0, 0.0]).unwrap(),
        ];
        let err = decompose_gamma(&GammaTable::new(sc, tables).unwrap()).unwrap_err();
        assert!(
            matches!(err, Error::Signalling(ref m) if m.contains("party 1")),
            "{err}"
        );
    }

    #[test]
    fn properness() {
        for name in ["chsh", "ghz"] {
            let p = is_proper(&catalog(name).unwrap(), 1e-7).unwrap();
            assert!(p.proper && p.explaining.is_none());
        }
        let sc = Scenario::uniform(2, 2, 2).unwrap();
        let pi = LocalTheory::new((1..=16).map(|i| i as f64 / 136.0).collect()).unwrap();
        let proof = NonlocalityProof::from_local_theory("lr", &sc, &pi).unwrap();
        let p = is_proper(&proof, 1e-7).unwrap();
        assert!(!p.proper && p.divergence.value() <= 1e-10);
    }

    #[test]
    fn gamma_json() {
        let text = r#"{"parties":2,"settings_per_party":[2,2],"outcomes_per_setting":[[2,2],[2,2]],
            "tables":[{"setting":[0,0],"probs":{"0,0":0.5,"1,1":0.5}},
                      {"setting":[1,0],"probs":{"0,1":0.5,"1,0":0.5}}]}"#;
        let g = GammaTable::from_json(text).unwrap();
        let d = decompose_gamma(&g).unwrap();
        assert!(d.reconstruction_error <= 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]
            #[test]
            fn random_local_theories_remix(raw in proptest::collection::vec(0.0f64..1.0, 16), excluded in 0usize..4) {
                let total: f64 = raw.iter().sum::<f64>() + 1e-9;
                let w: Vec<f64> = raw.iter().map(|x| (x + 1e-9 / 16.0) / total).collect();
                let sc = Scenario::uniform(2, 2, 2).unwrap();
                let proof = NonlocalityProof::from_local_theory("lr", &sc, &LocalTheory::new(w).unwrap()).unwrap();
                let d = decompose_gamma(&GammaTable::from_proof(&proof, excluded)).unwrap();
                prop_assert!(d.reconstruction_error <= 1e-9);
                prop_assert!((d.theory.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert!(d.theory.weights.iter().all(|&w| w >= 0.0));
                prop_assert!(d.steps <= 16);
            }
        }
    }
}
