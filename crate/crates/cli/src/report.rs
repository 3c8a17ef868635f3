use std::fmt::Write;

use bellstrength::games::{Mode, StrengthResult};
use bellstrength::inequality::ViolationReport;
use bellstrength::model::decode_mixed;
use bellstrength::{NonlocalityProof, Scenario};
use serde::Serialize;

/// One-based setting label such as `A2 B1`.
pub fn setting_label(sc: &Scenario, joint: usize) -> String {
    sc.decode_setting(joint)
        .iter()
        .enumerate()
        .map(|(party, s)| format!("{}{}", party_letter(party), s + 1))
        .collect::<Vec<_>>()
        .join(" ")
}

fn party_letter(party: usize) -> char {
    (b'A' + party as u8) as char
}

fn outcome_label(digits: &[usize]) -> String {
    digits
        .iter()
        .map(|&o| if o == 1 { 'T' } else { 'F' })
        .collect()
}

/// Conditional tables, one setting per line.
pub fn tables(proof: &NonlocalityProof, tables: &[Vec<f64>]) -> String {
    let sc = proof.scenario();
    let mut out = String::new();
    for (s, probs) in tables.iter().enumerate() {
        let radix = sc.outcome_radix(&sc.decode_setting(s));
        let _ = write!(out, "  {:<10}", setting_label(sc, s));
        for (o, p) in probs.iter().enumerate() {
            let _ = write!(
                out,
                " {}={:.10}",
                outcome_label(&decode_mixed(o, &radix)),
                p
            );
        }
        out.push('\n');
    }
    out
}

pub fn strength(proof: &NonlocalityProof, r: &StrengthResult) -> String {
    let sc = proof.scenario();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {}: {:.10} bits",
        proof.name, r.mode, r.strength_bits
    );
    let _ = writeln!(out, "  kkt residual {:.3e}", r.kkt_residual);
    if let Some(gap) = r.crosscheck_gap {
        let _ = writeln!(out, "  inf-sup gap  {gap:.3e}");
    }
    let _ = writeln!(out, " setting distribution");
    for (s, p) in r.sigma_star.probs.iter().enumerate() {
        let _ = writeln!(out, "  {:<10} {:.10}", setting_label(sc, s), p);
    }
    let _ = writeln!(out, " best classical theory");
    out.push_str(&tables(proof, &r.induced));
    out
}

#[derive(Debug, Serialize)]
pub struct StrengthRow<'a> {
    pub proof: &'a str,
    pub mode: Mode,
    pub strength_bits: f64,
    pub kkt_residual: f64,
    pub crosscheck_gap: Option<f64>,
}

impl<'a> StrengthRow<'a> {
    pub fn new(proof: &'a NonlocalityProof, r: &StrengthResult) -> Self {
        Self {
            proof: &proof.name,
            mode: r.mode,
            strength_bits: r.strength_bits,
            kkt_residual: r.kkt_residual,
            crosscheck_gap: r.crosscheck_gap,
        }
    }
}

/// Writes rows as CSV with a header to stdout.
pub fn csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn violation(proof: &NonlocalityProof, r: &ViolationReport) -> String {
    format!(
        "{} ({:?})\n  {}\n  lhs {:.10}  rhs {:.10}  slack {:.10}\n",
        proof.name, r.inequality, r.statement, r.lhs, r.rhs, r.slack
    )
}
