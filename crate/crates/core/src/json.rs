//! JSON document format for proofs and three-setting tables.
//!
//! ```json
//! { "name": "chsh", "parties": 2, "settings_per_party": [2, 2],
//!   "outcomes_per_setting": [[2, 2], [2, 2]],
//!   "tables": [ { "setting": [0, 0], "probs": { "0,0": 0.42677669529663687, ... } } ] }
//! ```
//!
//! Settings and outcomes are zero-based; outcome `1` is "true". Probabilities
//! are written with full round-trip precision; on load they are checked and
//! renormalized exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    check_probability_vector, decode_mixed, ConditionalTable, NonlocalityProof, Scenario,
    NORMALIZATION_TOL,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableDoc {
    pub setting: Vec<usize>,
    pub probs: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProofDoc {
    pub name: String,
    pub parties: usize,
    pub settings_per_party: Vec<usize>,
    pub outcomes_per_setting: Vec<Vec<usize>>,
    pub tables: Vec<TableDoc>,
}

fn outcome_key(digits: &[usize]) -> String {
    digits
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_key(key: &str, radix: &[usize]) -> Result<usize> {
    let digits = key
        .split(',')
        .map(|d| d.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Format(format!("bad outcome key `{key}`")))?;
    crate::model::encode_mixed(&digits, radix)
        .ok_or_else(|| Error::Format(format!("outcome key `{key}` out of range")))
}

pub(crate) fn table_to_doc(scenario: &Scenario, table: &ConditionalTable) -> TableDoc {
    let radix = scenario.outcome_radix(&table.setting);
    let probs = table
        .probs
        .iter()
        .enumerate()
        .map(|(o, &p)| (outcome_key(&decode_mixed(o, &radix)), p))
        .collect();
    TableDoc {
        setting: table.setting.clone(),
        probs,
    }
}

pub(crate) fn table_from_doc(scenario: &Scenario, doc: &TableDoc) -> Result<ConditionalTable> {
    if doc.setting.len() != scenario.parties() {
        return Err(Error::Format(format!(
            "setting {:?} has wrong arity",
            doc.setting
        )));
    }
    scenario.encode_setting(&doc.setting)?;
    let radix = scenario.outcome_radix(&doc.setting);
    let mut probs = vec![0.0; radix.iter().product()];
    for (key, &p) in &doc.probs {
        probs[parse_key(key, &radix)?] = p;
    }
    check_probability_vector(&probs, NORMALIZATION_TOL)
        .map_err(|e| Error::Format(format!("setting {:?}: {e}", doc.setting)))?;
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= sum);
    Ok(ConditionalTable {
        setting: doc.setting.clone(),
        probs,
    })
}

pub(crate) fn scenario_from_doc(
    parties: usize,
    settings: &[usize],
    outcomes: &[Vec<usize>],
) -> Result<Scenario> {
    if parties != settings.len() {
        return Err(Error::Format(format!(
            "`parties` is {parties} but `settings_per_party` has {} entries",
            settings.len()
        )));
    }
    Scenario::new(settings.to_vec(), outcomes.to_vec())
}

impl ProofDoc {
    pub fn from_proof(proof: &NonlocalityProof) -> Self {
        let sc = proof.scenario();
        Self {
            name: proof.name.clone(),
            parties: sc.parties(),
            settings_per_party: sc.settings_per_party().to_vec(),
            outcomes_per_setting: sc.outcomes_per_setting().to_vec(),
            tables: proof.tables().iter().map(|t| table_to_doc(sc, t)).collect(),
        }
    }

    pub fn into_proof(self) -> Result<NonlocalityProof> {
        let scenario = scenario_from_doc(
            self.parties,
            &self.settings_per_party,
            &self.outcomes_per_setting,
        )?;
        let tables = self
            .tables
            .iter()
            .map(|t| table_from_doc(&scenario, t))
            .collect::<Result<Vec<_>>>()?;
        NonlocalityProof::new(self.name, scenario, tables)
    }
}

pub fn proof_to_json(proof: &NonlocalityProof) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ProofDoc::from_proof(proof))?)
}

pub fn proof_from_json(text: &str) -> Result<NonlocalityProof> {
    serde_json::from_str::<ProofDoc>(text)?.into_proof()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::catalog;

    #[test]
    fn catalog_round_trips_exactly() {
        for name in crate::quantum::CATALOG_NAMES {
            let proof = catalog(name).unwrap();
            let back = proof_from_json(&proof_to_json(&proof).unwrap()).unwrap();
            assert_eq!(back.name, proof.name);
            assert_eq!(back.scenario(), proof.scenario());
            for (a, b) in proof.tables().iter().zip(back.tables()) {
                for (x, y) in a.probs.iter().zip(&b.probs) {
                    assert!((x - y).abs() <= 1e-15);
                }
            }
        }
    }

    #[test]
    fn keys_are_comma_separated_outcomes() {
        let proof = catalog("ghz").unwrap();
        let doc = ProofDoc::from_proof(&proof);
        assert!(doc.tables[0].probs.contains_key("1,1,1"));
        assert_eq!(doc.tables[0].probs.len(), 8);
    }

    #[test]
    fn rejects_unnormalized_and_bad_keys() {
        let text = r#"{"name":"x","parties":1,"settings_per_party":[1],"outcomes_per_setting":[[2]],
            "tables":[{"setting":[0],"probs":{"0":0.5,"1":0.6}}]}"#;
        assert!(proof_from_json(text).is_err());
        let text = r#"{"name":"x","parties":1,"settings_per_party":[1],"outcomes_per_setting":[[2]],
            "tables":[{"setting":[0],"probs":{"0":0.5,"7":0.5}}]}"#;
        assert!(proof_from_json(text).is_err());
        let text = r#"{"name":"x","parties":2,"settings_per_party":[1],"outcomes_per_setting":[[2]],
            "tables":[{"setting":[0],"probs":{"0":0.5,"1":0.5}}]}"#;
        assert!(proof_from_json(text).is_err());
    }

    #[test]
    fn missing_keys_read_as_zero() {
        let text = r#"{"name":"x","parties":1,"settings_per_party":[1],"outcomes_per_setting":[[3]],
            "tables":[{"setting":[0],"probs":{"0":0.25,"2":0.75}}]}"#;
        let p = proof_from_json(text).unwrap();
        assert_eq!(p.table(0).probs, vec![0.25, 0.0, 0.75]);
    }
}
