//! Bell-type inequalities evaluated on a proof's tables.
//!
//! Each inequality has the form `lhs <= rhs` under local realism; a positive
//! `slack = lhs - rhs` certifies a violation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{decode_mixed, NonlocalityProof};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Inequality {
    /// The most violated member of the CHSH family on a 2x2x2 proof.
    Chsh,
    Hardy,
    Mermin,
    Ghz,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationReport {
    pub inequality: Inequality,
    /// Human-readable form, with one-based settings.
    pub statement: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

const TIE_TOL: f64 = 1e-12;

/// Probability of an outcome predicate at a joint setting (outcome 1 = true).
fn pr(proof: &NonlocalityProof, setting: &[usize], pred: impl Fn(&[usize]) -> bool) -> Result<f64> {
    let sc = proof.scenario();
    let idx = sc.encode_setting(setting)?;
    let radix = sc.outcome_radix(setting);
    Ok(proof
        .table(idx)
        .probs
        .iter()
        .enumerate()
        .filter(|(o, _)| pred(&decode_mixed(*o, &radix)))
        .map(|(_, &p)| p)
        .sum())
}

fn require(proof: &NonlocalityProof, settings: &[usize], what: &str) -> Result<()> {
    let sc = proof.scenario();
    let binary = sc.outcomes_per_setting().iter().flatten().all(|&m| m == 2);
    if sc.settings_per_party() != settings || !binary {
        return Err(Error::NoTemplate(format!(
            "{what} needs settings {settings:?} with two outcomes each, got {:?}",
            sc.settings_per_party()
        )));
    }
    Ok(())
}

/// The family `1 <= sum_s Pr(X_a xor Y_b != c_s)` over odd-parity `c`,
/// written as `Pr(X_a0 xor Y_b0 = c) <= (other three terms)`.
fn chsh(proof: &NonlocalityProof) -> Result<ViolationReport> {
    require(proof, &[2, 2], "CHSH")?;
    let mut best: Option<ViolationReport> = None;
    for c in 0u32..16 {
        if c.count_ones() % 2 == 0 {
            continue;
        }
        let parity = |s: usize| ((c >> (3 - s)) & 1) as usize;
        let mut hold = [0.0; 4];
        for (s, h) in hold.iter_mut().enumerate() {
            let setting = [s / 2, s % 2];
            *h = pr(proof, &setting, |o| (o[0] ^ o[1]) == parity(s))?;
        }
        let top = hold.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s0 = (0..4).rev().find(|&s| hold[s] >= top - TIE_TOL).unwrap();
        let lhs = hold[s0];
        let rhs: f64 = (0..4).filter(|&s| s != s0).map(|s| 1.0 - hold[s]).sum();
        let term = |s: usize, eq: bool| {
            let rel = if eq { "=" } else { "≠" };
            format!("Pr(X{}{}Y{})", s / 2 + 1, rel, s % 2 + 1)
        };
        // x xor y = 0 reads as X = Y
        let statement = format!(
            "{} <= {}",
            term(s0, parity(s0) == 0),
            (0..4)
                .filter(|&s| s != s0)
                .map(|s| term(s, parity(s) == 1))
                .collect::<Vec<_>>()
                .join(" + ")
        );
        let report = ViolationReport {
            inequality: Inequality::Chsh,
            statement,
            lhs,
            rhs,
            slack: lhs - rhs,
        };
        if best
            .as_ref()
            .is_none_or(|b| report.slack > b.slack + TIE_TOL)
        {
            best = Some(report);
        }
    }
    Ok(best.expect("eight odd parities"))
}

fn hardy(proof: &NonlocalityProof) -> Result<ViolationReport> {
    require(proof, &[2, 2], "Hardy")?;
    let lhs = pr(proof, &[1, 1], |o| o[0] == 1 && o[1] == 1)?;
    let rhs = pr(proof, &[1, 0], |o| o[0] == 1 && o[1] == 0)?
        + pr(proof, &[0, 1], |o| o[0] == 0 && o[1] == 1)?
        + pr(proof, &[0, 0], |o| o[0] == 1 && o[1] == 1)?;
    Ok(ViolationReport {
        inequality: Inequality::Hardy,
        statement: "Pr(X2 & Y2) <= Pr(X2 & ¬Y1) + Pr(¬X1 & Y2) + Pr(X1 & Y1)".into(),
        lhs,
        rhs,
        slack: lhs - rhs,
    })
}

fn mermin(proof: &NonlocalityProof) -> Result<ViolationReport> {
    require(proof, &[3, 3], "Mermin")?;
    let mut rhs = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            rhs += if i == j {
                pr(proof, &[i, j], |o| o[0] != o[1])?
            } else {
                0.5 * pr(proof, &[i, j], |o| o[0] == o[1])?
            };
        }
    }
    Ok(ViolationReport {
        inequality: Inequality::Mermin,
        statement: "1 <= Σ_i Pr(Xi≠Yi) + ½ Σ_{i≠j} Pr(Xi=Yj)".into(),
        lhs: 1.0,
        rhs,
        slack: 1.0 - rhs,
    })
}

fn ghz(proof: &NonlocalityProof) -> Result<ViolationReport> {
    require(proof, &[2, 2, 2], "GHZ")?;
    let odd = |o: &[usize]| (o[0] ^ o[1] ^ o[2]) == 1;
    let lhs = pr(proof, &[0, 0, 0], odd)?;
    let rhs =
        pr(proof, &[0, 1, 1], odd)? + pr(proof, &[1, 0, 1], odd)? + pr(proof, &[1, 1, 0], odd)?;
    Ok(ViolationReport {
        inequality: Inequality::Ghz,
        statement: "Pr(X1⊕Y1⊕Z1) <= Pr(X1⊕Y2⊕Z2) + Pr(X2⊕Y1⊕Z2) + Pr(X2⊕Y2⊕Z1)".into(),
        lhs,
        rhs,
        slack: lhs - rhs,
    })
}

pub fn evaluate(inequality: Inequality, proof: &NonlocalityProof) -> Result<ViolationReport> {
    match inequality {
        Inequality::Chsh => chsh(proof),
        Inequality::Hardy => hardy(proof),
        Inequality::Mermin => mermin(proof),
        Inequality::Ghz => ghz(proof),
    }
}

/// The inequality that matches the proof's family: Hardy's for a proof named
/// `hardy`, otherwise chosen by scenario shape.
pub fn violation_report(proof: &NonlocalityProof) -> Result<ViolationReport> {
    let sc = proof.scenario();
    let which = match sc.settings_per_party() {
        [2, 2] if proof.name == "hardy" => Inequality::Hardy,
        [2, 2] => Inequality::Chsh,
        [3, 3] => Inequality::Mermin,
        [2, 2, 2] => Inequality::Ghz,
        other => return Err(Error::NoTemplate(format!("settings per party {other:?}"))),
    };
    evaluate(which, proof)
}
