//! Born-rule tables for pure multi-qubit states and the catalog of classic proofs.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{decode_mixed, ConditionalTable, NonlocalityProof, Scenario};

/// Names accepted by [`catalog`].
pub const CATALOG_NAMES: [&str; 6] = ["bell", "bell-optimized", "chsh", "hardy", "mermin", "ghz"];

const UNIT_TOL: f64 = 1e-12;

/// Computational-basis amplitudes of a `k`-qubit state; qubit 0 is the most
/// significant bit of the index.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: Vec<Complex64>,
}

impl PureState {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() || !amplitudes.len().is_power_of_two() {
            return Err(Error::Dimension {
                got: amplitudes.len(),
                parties: 0,
            });
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::NotNormalized(format!(
                "state has squared norm {norm}"
            )));
        }
        Ok(Self { amplitudes })
    }

    pub fn qubits(&self) -> usize {
        self.amplitudes.len().trailing_zeros() as usize
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Same state times a unit complex phase.
    pub fn with_phase(&self, phase: f64) -> Self {
        let u = Complex64::from_polar(1.0, phase);
        Self {
            amplitudes: self.amplitudes.iter().map(|a| a * u).collect(),
        }
    }
}

/// Two-outcome qubit measurement for one `(party, setting)`.
///
/// `true_vector` spans outcome "true"; its orthogonal complement is "false".
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBasis {
    pub party: usize,
    pub setting: usize,
    true_vector: [Complex64; 2],
}

impl MeasurementBasis {
    pub fn new(party: usize, setting: usize, true_vector: [Complex64; 2]) -> Result<Self> {
        let norm = true_vector[0].norm_sqr() + true_vector[1].norm_sqr();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::NotNormalized(format!(
                "basis vector has squared norm {norm}"
            )));
        }
        Ok(Self {
            party,
            setting,
            true_vector,
        })
    }

    /// `|R(phi)> = cos(phi)|0> + sin(phi)|1>` as the "true" vector.
    pub fn rotated(party: usize, setting: usize, phi: f64) -> Self {
        Self {
            party,
            setting,
            true_vector: [
                Complex64::new(phi.cos(), 0.0),
                Complex64::new(phi.sin(), 0.0),
            ],
        }
    }

    pub fn true_vector(&self) -> [Complex64; 2] {
        self.true_vector
    }

    pub fn false_vector(&self) -> [Complex64; 2] {
        let [a, b] = self.true_vector;
        [-b.conj(), a.conj()]
    }

    /// Basis vector for an outcome index (`1` = true, `0` = false).
    pub fn vector(&self, outcome: usize) -> [Complex64; 2] {
        if outcome == 1 {
            self.true_vector
        } else {
            self.false_vector()
        }
    }
}

/// Probabilities below this are rounding noise of exact zeros.
const ROUNDOFF: f64 = 1e-14;

/// Outcome table at one joint setting, `|<state|v_1 ⊗ ... ⊗ v_k>|^2`.
pub fn born_table(
    state: &PureState,
    bases: &[&MeasurementBasis],
    scenario: &Scenario,
) -> Result<ConditionalTable> {
    let k = scenario.parties();
    if state.qubits() != k || bases.len() != k {
        return Err(Error::Dimension {
            got: state.amplitudes.len(),
            parties: k,
        });
    }
    let setting: Vec<usize> = bases.iter().map(|b| b.setting).collect();
    for (j, b) in bases.iter().enumerate() {
        if b.party != j || scenario.outcome_count(j, b.setting) != 2 {
            return Err(Error::Shape(format!(
                "basis {j} does not match a two-outcome setting of party {j}"
            )));
        }
    }
    let radix = vec![2; k];
    let probs = (0..1usize << k)
        .map(|o| {
            let outs = decode_mixed(o, &radix);
            let vecs: Vec<[Complex64; 2]> =
                bases.iter().zip(&outs).map(|(b, &x)| b.vector(x)).collect();
            let amp: Complex64 = state
                .amplitudes
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    let coeff = vecs
                        .iter()
                        .enumerate()
                        .fold(Complex64::new(1.0, 0.0), |acc, (j, v)| {
                            acc * v[(i >> (k - 1 - j)) & 1]
                        });
                    coeff.conj() * a
                })
                .sum();
            amp.norm_sqr()
        })
        .map(|p: f64| if p < ROUNDOFF { 0.0 } else { p })
        .collect::<Vec<f64>>();
    let total: f64 = probs.iter().sum();
    Ok(ConditionalTable {
        setting,
        probs: probs.iter().map(|p| p / total).collect(),
    })
}

/// Builds the full proof from a state and one basis per `(party, setting)`.
pub fn proof_from_state(
    name: &str,
    state: &PureState,
    bases: &[Vec<MeasurementBasis>],
) -> Result<NonlocalityProof> {
    let settings: Vec<usize> = bases.iter().map(Vec::len).collect();
    let scenario = Scenario::new(
        settings.clone(),
        settings.iter().map(|&n| vec![2; n]).collect(),
    )?;
    let tables = (0..scenario.joint_setting_count())
        .map(|s| {
            let chosen: Vec<&MeasurementBasis> = scenario
                .decode_setting(s)
                .iter()
                .enumerate()
                .map(|(j, &t)| &bases[j][t])
                .collect();
            born_table(state, &chosen, &scenario)
        })
        .collect::<Result<Vec<_>>>()?;
    NonlocalityProof::new(name, scenario, tables)
}

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn bell_pair() -> PureState {
    PureState {
        amplitudes: vec![
            real(FRAC_1_SQRT_2),
            real(0.0),
            real(0.0),
            real(FRAC_1_SQRT_2),
        ],
    }
}

fn rotated_pairs(angles: &[&[f64]]) -> Vec<Vec<MeasurementBasis>> {
    angles
        .iter()
        .enumerate()
        .map(|(j, row)| {
            row.iter()
                .enumerate()
                .map(|(s, &phi)| MeasurementBasis::rotated(j, s, phi))
                .collect()
        })
        .collect()
}

/// Published strengths in bits: uniform, uncorrelated and correlated settings.
pub const REFERENCE_STRENGTHS: [(&str, [f64; 3]); 6] = [
    ("bell", [0.0141597409, 0.0158003672, 0.0169800305]),
    ("bell-optimized", [0.0177632822, 0.0191506613, 0.0211293952]),
    ("chsh", [0.0462738469, 0.0462738469, 0.0462738469]),
    ("hardy", [0.0278585182, 0.0279816333, 0.0280347655]),
    ("mermin", [0.0157895843, 0.0191506613, 0.0211293952]),
    ("ghz", [0.2075187496, 0.2075187496, 0.4150374993]),
];

/// Hardy's state coefficients `(alpha, beta)` from the closed form.
pub fn hardy_coefficients() -> (f64, f64) {
    let alpha = 0.5 * (2.0 + 2.0 * (-13.0 + 6.0 * 5f64.sqrt()).sqrt()).sqrt();
    (alpha, (1.0 - alpha * alpha).sqrt())
}

/// One of the six classic proofs, generated from its state and settings.
pub fn catalog(name: &str) -> Result<NonlocalityProof> {
    match name {
        "bell" => proof_from_state(
            name,
            &bell_pair(),
            &rotated_pairs(&[&[0.0, PI / 8.0], &[PI / 8.0, PI / 4.0]]),
        ),
        "bell-optimized" => proof_from_state(
            name,
            &bell_pair(),
            &rotated_pairs(&[&[0.0, PI / 6.0], &[0.0, PI / 3.0]]),
        ),
        "chsh" => proof_from_state(
            name,
            &bell_pair(),
            &rotated_pairs(&[&[0.0, PI / 4.0], &[PI / 8.0, -PI / 8.0]]),
        ),
        "hardy" => {
            let (a, b) = hardy_coefficients();
            let state = PureState::new(vec![real(a), real(0.0), real(0.0), real(-b)])?;
            let first = [real((b / (a + b)).sqrt()), real((a / (a + b)).sqrt())];
            let (a3, b3) = (a.powi(3), b.powi(3));
            let second = [
                real(-(b3 / (a3 + b3)).sqrt()),
                real((a3 / (a3 + b3)).sqrt()),
            ];
            let bases = (0..2)
                .map(|j| {
                    Ok(vec![
                        MeasurementBasis::new(j, 0, first)?,
                        MeasurementBasis::new(j, 1, second)?,
                    ])
                })
                .collect::<Result<Vec<_>>>()?;
            proof_from_state(name, &state, &bases)
        }
        "mermin" => {
            let row = [0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0];
            proof_from_state(name, &bell_pair(), &rotated_pairs(&[&row, &row]))
        }
        "ghz" => {
            let mut amps = vec![real(0.0); 8];
            amps[0] = real(FRAC_1_SQRT_2);
            amps[7] = real(FRAC_1_SQRT_2);
            let x = [real(FRAC_1_SQRT_2), real(FRAC_1_SQRT_2)];
            let y = [real(FRAC_1_SQRT_2), Complex64::new(0.0, FRAC_1_SQRT_2)];
            let bases = (0..3)
                .map(|j| {
                    Ok(vec![
                        MeasurementBasis::new(j, 0, x)?,
                        MeasurementBasis::new(j, 1, y)?,
                    ])
                })
                .collect::<Result<Vec<_>>>()?;
            proof_from_state(name, &PureState { amplitudes: amps }, &bases)
        }
        other => Err(Error::UnknownProof(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{check_no_signalling, SettingDistribution};

    const HI: f64 = 0.4267766953;
    const LO: f64 = 0.0732233047;

    // Two-party tables are indexed (x, y) -> 2x + y with true = 1.
    fn tt(t: &ConditionalTable) -> f64 {
        t.probs[3]
    }

    #[test]
    fn bell_first_setting() {
        let p = catalog("bell").unwrap();
        assert!((tt(p.table(0)) - HI).abs() < 1e-9);
        assert!((tt(p.table(0)) - (0.25 + 2f64.sqrt() / 8.0)).abs() < 1e-15);
    }

    #[test]
    fn eigenstate_measured_in_computational_basis() {
        let sc = Scenario::uniform(2, 1, 2).unwrap();
        let state = PureState::new(vec![real(1.0), real(0.0), real(0.0), real(0.0)]).unwrap();
        let a = MeasurementBasis::rotated(0, 0, 0.0);
        let b = MeasurementBasis::rotated(1, 0, 0.0);
        let t = born_table(&state, &[&a, &b], &sc).unwrap();
        assert!((tt(&t) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ghz_parity_pattern() {
        let p = catalog("ghz").unwrap();
        let t = p.table(0);
        for o in 0..8usize {
            let falses = 3 - o.count_ones();
            let want = if falses % 2 == 0 { 0.25 } else { 0.0 };
            assert!((t.probs[o] - want).abs() < 1e-12, "outcome {o}");
        }
        // (Y, Y, X) flips the parity
        let t = p.table(0b110);
        for o in 0..8usize {
            let falses = 3 - o.count_ones();
            let want = if falses % 2 == 1 { 0.25 } else { 0.0 };
            assert!((t.probs[o] - want).abs() < 1e-12);
        }
        assert!(p
            .table(0b100)
            .probs
            .iter()
            .all(|&q| (q - 0.125).abs() < 1e-12));
    }

    #[test]
    fn chsh_pattern() {
        let p = catalog("chsh").unwrap();
        for s in 0..4 {
            let t = p.table(s);
            let (diag, off) = if s == 3 { (LO, HI) } else { (HI, LO) };
            assert!((t.probs[3] - diag).abs() < 1e-9);
            assert!((t.probs[0] - diag).abs() < 1e-9);
            assert!((t.probs[1] - off).abs() < 1e-9);
            assert!((t.probs[2] - off).abs() < 1e-9);
        }
    }

    #[test]
    fn hardy_values() {
        let p = catalog("hardy").unwrap();
        assert!((tt(p.table(3)) - 0.09016994375).abs() < 1e-9);
        assert!(tt(p.table(0)).abs() < 1e-12);
        // Q_12(X=false, Y=true)
        assert!(p.table(1).probs[0b01].abs() < 1e-12);
        let (a, b) = hardy_coefficients();
        assert!((a - 0.907).abs() < 1e-3 && (b - 0.421).abs() < 1e-3);
    }

    #[test]
    fn mermin_values() {
        let p = catalog("mermin").unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let want = if a == b { 0.5 } else { 0.125 };
                assert!((tt(p.table(3 * a + b)) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn catalog_is_no_signalling_and_normalized() {
        for name in CATALOG_NAMES {
            let p = catalog(name).unwrap();
            let r = check_no_signalling(&p, 1e-12);
            assert!(r.no_signalling, "{name}: {}", r.max_violation);
            for t in p.tables() {
                assert!((t.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            let _ = SettingDistribution::uniform(p.scenario());
        }
        assert!(matches!(catalog("epr"), Err(Error::UnknownProof(_))));
    }

    #[test]
    fn rejects_wrong_dimension() {
        let sc = Scenario::uniform(3, 1, 2).unwrap();
        let a = MeasurementBasis::rotated(0, 0, 0.0);
        let b = MeasurementBasis::rotated(1, 0, 0.0);
        assert!(born_table(&bell_pair(), &[&a, &b], &sc).is_err());
        assert!(PureState::new(vec![real(1.0), real(1.0)]).is_err());
    }

    /// Reference tables, transcribed in their printed layout: for each joint
    /// setting (a, b), rows are Y = true/false and columns X = true/false.
    fn printed(rows: [[f64; 4]; 4]) -> Vec<Vec<f64>> {
        // input order: (a1,b1), (a2,b1), (a1,b2), (a2,b2); each [tt, ft, tf, ff] in (X,Y)
        let order = [0usize, 2, 1, 3];
        order
            .iter()
            .map(|&i| {
                let [xt_yt, xf_yt, xt_yf, xf_yf] = rows[i];
                vec![xf_yf, xf_yt, xt_yf, xt_yt]
            })
            .collect()
    }

    #[test]
    fn matches_printed_quantum_tables() {
        let h = 0.4267766953;
        let l = 0.0732233047;
        let cases = [
            (
                "bell",
                printed([[h, l, l, h], [0.5, 0.0, 0.0, 0.5], [0.25; 4], [h, l, l, h]]),
            ),
            (
                "bell-optimized",
                printed([
                    [0.5, 0.0, 0.0, 0.5],
                    [0.375, 0.125, 0.125, 0.375],
                    [0.125, 0.375, 0.375, 0.125],
                    [0.375, 0.125, 0.125, 0.375],
                ]),
            ),
            (
                "chsh",
                printed([[h, l, l, h], [h, l, l, h], [h, l, l, h], [l, h, h, l]]),
            ),
            (
                "hardy",
                printed([
                    [0.0, 0.38196601125, 0.38196601125, 0.23606797750],
                    [0.23606797750, 0.14589803375, 0.0, 0.61803398875],
                    [0.23606797750, 0.0, 0.14589803375, 0.61803398875],
                    [0.09016994375, 0.14589803375, 0.14589803375, 0.61803398875],
                ]),
            ),
        ];
        for (name, want) in cases {
            let p = catalog(name).unwrap();
            for (s, w) in want.iter().enumerate() {
                for (o, (&x, &y)) in p.table(s).probs.iter().zip(w).enumerate() {
                    assert!(
                        (x - y).abs() < 1e-9,
                        "{name} setting {s} outcome {o}: {x} vs {y}"
                    );
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn global_phase_is_invisible(phase in 0.0f64..(2.0 * PI), name in 0usize..6) {
                let p = catalog(CATALOG_NAMES[name]).unwrap();
                let state = match CATALOG_NAMES[name] {
                    "hardy" => {
                        let (a, b) = hardy_coefficients();
                        PureState::new(vec![real(a), real(0.0), real(0.0), real(-b)]).unwrap()
                    }
                    "ghz" => {
                        let mut amps = vec![real(0.0); 8];
                        amps[0] = real(FRAC_1_SQRT_2);
                        amps[7] = real(FRAC_1_SQRT_2);
                        PureState::new(amps).unwrap()
                    }
                    _ => bell_pair(),
                };
                let rotated = state.with_phase(phase);
                // rebuild the first table with the rotated state
                let sc = p.scenario();
                let first = p.table(0);
                let bases: Vec<MeasurementBasis> = match CATALOG_NAMES[name] {
                    "ghz" => (0..3).map(|j| MeasurementBasis::new(j, 0, [real(FRAC_1_SQRT_2), real(FRAC_1_SQRT_2)]).unwrap()).collect(),
                    "hardy" => {
                        let (a, b) = hardy_coefficients();
                        (0..2).map(|j| MeasurementBasis::new(j, 0, [real((b / (a + b)).sqrt()), real((a / (a + b)).sqrt())]).unwrap()).collect()
                    }
                    "bell-optimized" | "mermin" => (0..2).map(|j| MeasurementBasis::rotated(j, 0, 0.0)).collect(),
                    "bell" => vec![MeasurementBasis::rotated(0, 0, 0.0), MeasurementBasis::rotated(1, 0, PI / 8.0)],
                    _ => vec![MeasurementBasis::rotated(0, 0, 0.0), MeasurementBasis::rotated(1, 0, PI / 8.0)],
                };
                let refs: Vec<&MeasurementBasis> = bases.iter().collect();
                let t = born_table(&rotated, &refs, sc).unwrap();
                for (x, y) in t.probs.iter().zip(&first.probs) {
                    prop_assert!((x - y).abs() <= 1e-15);
                }
            }
        }
    }
}
