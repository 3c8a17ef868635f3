//! The three strength measures and the inf-sup game.
//!
//! `U(sigma)` is the projection value at `sigma`. It is concave in `sigma`, and
//! by Danskin its supergradient at setting `s` is `D(Q_s || P_s;pi*)` for the
//! minimizing `pi*`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::divergence::{per_setting, Bits};
use crate::error::{Error, Result};
use crate::model::{LocalTheory, NonlocalityProof, OutcomeMap, Scenario, SettingDistribution};
use crate::projection::{kkt_with, ProjectOptions, ProjectionResult, Projector};

const GOLDEN: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Uniform,
    Uncorrelated,
    Correlated,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Uniform, Mode::Uncorrelated, Mode::Correlated];
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Uniform => "uniform",
            Mode::Uncorrelated => "uncorrelated",
            Mode::Correlated => "correlated",
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GameOptions {
    /// KKT tolerance of every inner projection.
    pub inner_tol: f64,
    /// Multi-starts of the uncorrelated search, the first one uniform.
    pub starts: usize,
    pub seed: u64,
    /// Largest accepted gap between the correlated value and the inf-sup value.
    pub crosscheck_tol: f64,
    /// Interval width at which golden-section searches stop.
    pub line_tol: f64,
}

impl Default for GameOptions {
    fn default() -> Self {
        Self {
            inner_tol: 1e-11,
            starts: 33,
            seed: 0x5EED_B0B5,
            crosscheck_tol: 1e-6,
            line_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StrengthResult {
    pub mode: Mode,
    pub strength_bits: f64,
    pub sigma_star: SettingDistribution,
    pub pi_star: LocalTheory,
    pub kkt_residual: f64,
    /// `|inf-sup - sup-inf|` for the correlated game.
    pub crosscheck_gap: Option<f64>,
    /// Tables `P_s;pi*` of the best local theory, by joint setting.
    pub induced: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimaxResult {
    /// `max_s D(Q_s || P_s;pi*)`, an upper bound on the game value.
    pub value: Bits,
    pub pi_star: LocalTheory,
    /// Normalized multipliers of the per-setting constraints.
    pub sigma_dual: Vec<f64>,
    /// Bound on `value` minus the true game value.
    pub gap_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EqualizerReport {
    pub equalizer: bool,
    /// `U(s, pi)` in bits for every joint setting.
    pub values: Vec<f64>,
    pub spread: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SaddleReport {
    pub saddle: bool,
    pub kkt_residual: f64,
    pub spread: f64,
    /// `U(sigma, pi)` in bits.
    pub value: f64,
}

/// Projections for one proof, sharing the outcome map.
struct Evaluator<'a> {
    proof: &'a NonlocalityProof,
    map: OutcomeMap,
    tol: f64,
}

impl<'a> Evaluator<'a> {
    fn new(proof: &'a NonlocalityProof, tol: f64) -> Result<Self> {
        Ok(Self {
            proof,
            map: OutcomeMap::new(proof.scenario())?,
            tol,
        })
    }

    fn eval(&self, sigma: &[f64], warm: Option<&[f64]>) -> Result<ProjectionResult> {
        Projector::new(self.proof, &self.map, sigma)?.solve(
            warm,
            ProjectOptions {
                tol: self.tol,
                ..Default::default()
            },
        )
    }

    fn gradient(&self, pi: &[f64]) -> Vec<f64> {
        per_setting(self.proof, &self.map, pi)
    }
}

/// Maximizes a concave `f` on `[lo, hi]`, endpoints included.
fn golden_max(
    mut f: impl FnMut(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d)?;
        }
    }
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for x in [lo, hi] {
        let fx = f(x)?;
        if fx > best.1 {
            best = (x, fx);
        }
    }
    Ok(best)
}

fn finish(
    mode: Mode,
    sigma: SettingDistribution,
    r: ProjectionResult,
    gap: Option<f64>,
) -> StrengthResult {
    StrengthResult {
        mode,
        strength_bits: r.value.value(),
        sigma_star: sigma,
        pi_star: r.pi_star,
        kkt_residual: r.kkt_residual,
        crosscheck_gap: gap,
        induced: r.induced,
    }
}

pub fn strength_uniform(proof: &NonlocalityProof) -> Result<StrengthResult> {
    strength_uniform_with(proof, &GameOptions::default())
}

pub fn strength_uniform_with(
    proof: &NonlocalityProof,
    opts: &GameOptions,
) -> Result<StrengthResult> {
    let ev = Evaluator::new(proof, opts.inner_tol)?;
    let sigma = SettingDistribution::uniform(proof.scenario());
    let r = ev.eval(&sigma.probs, None)?;
    Ok(finish(Mode::Uniform, sigma, r, None))
}

pub fn strength_correlated(proof: &NonlocalityProof) -> Result<StrengthResult> {
    strength_correlated_with(proof, &GameOptions::default())
}

/// Supergradient conditional-gradient ascent with away steps over the joint
/// setting simplex, started from the better of uniform settings and the
/// multipliers of the inf-sup problem, and cross-checked against its value.
pub fn strength_correlated_with(
    proof: &NonlocalityProof,
    opts: &GameOptions,
) -> Result<StrengthResult> {
    const MAX_ITER: usize = 400;
    let ev = Evaluator::new(proof, opts.inner_tol)?;
    let dual = minimax_with(proof, &ev.map)?;
    let upper_dual = dual.value.value();
    let n = ev.map.settings;

    let mut starts = vec![vec![1.0 / n as f64; n], dual.sigma_dual.clone()];
    let top = dual.sigma_dual.iter().cloned().fold(0.0, f64::max);
    let mut cleaned: Vec<f64> = dual
        .sigma_dual
        .iter()
        .map(|&x| if x < 1e-7 * top { 0.0 } else { x })
        .collect();
    let total: f64 = cleaned.iter().sum();
    cleaned.iter_mut().for_each(|x| *x /= total);
    starts.push(cleaned);
    let mut sigma = Vec::new();
    let mut cur: Option<ProjectionResult> = None;
    for s in starts {
        let r = ev.eval(&s, Some(&dual.pi_star.weights))?;
        if cur
            .as_ref()
            .is_none_or(|c| r.value.value() > c.value.value())
        {
            sigma = s;
            cur = Some(r);
        }
    }
    let mut cur = cur.expect("at least one start");

    let mut stalls = 0;
    for _ in 0..MAX_ITER {
        let u = cur.value.value();
        let g = ev.gradient(&cur.pi_star.weights);
        let fw = (0..n).max_by(|&a, &b| g[a].total_cmp(&g[b])).unwrap();
        let upper = upper_dual.min(g[fw]);
        if upper - u <= 1e-12 {
            break;
        }
        let away = (0..n)
            .filter(|&s| sigma[s] > 0.0)
            .min_by(|&a, &b| g[a].total_cmp(&g[b]))
            .unwrap();
        let (dir, t_max): (Vec<f64>, f64) = if g[fw] - u >= u - g[away] || sigma[away] >= 1.0 {
            ((0..n).map(|s| f64::from(s == fw) - sigma[s]).collect(), 1.0)
        } else {
            (
                (0..n).map(|s| sigma[s] - f64::from(s == away)).collect(),
                sigma[away] / (1.0 - sigma[away]),
            )
        };
        let at = |t: f64| -> Vec<f64> {
            sigma
                .iter()
                .zip(&dir)
                .map(|(&s, &d)| (s + t * d).max(0.0))
                .collect()
        };
        let mut warm = cur.pi_star.weights.clone();
        let (t, val) = golden_max(
            |t| {
                let r = ev.eval(&at(t), Some(&warm))?;
                warm = r.pi_star.weights;
                Ok(r.value.value())
            },
            0.0,
            t_max,
            opts.line_tol * t_max.max(1e-300),
        )?;
        if val <= u + 1e-15 {
            stalls += 1;
            if stalls >= 3 {
                break;
            }
            continue;
        }
        stalls = 0;
        sigma = at(t);
        let total: f64 = sigma.iter().sum();
        sigma.iter_mut().for_each(|x| *x /= total);
        cur = ev.eval(&sigma, Some(&cur.pi_star.weights))?;
    }

    let value = cur.value.value();
    let gap = (upper_dual - value).abs();
    if gap > opts.crosscheck_tol {
        return Err(Error::GapTooLarge {
            primal: value,
            dual: upper_dual,
        });
    }
    let sd = SettingDistribution::general(proof.scenario(), sigma)?;
    Ok(finish(Mode::Correlated, sd, cur, Some(gap)))
}

pub fn strength_uncorrelated(proof: &NonlocalityProof) -> Result<StrengthResult> {
    strength_uncorrelated_with(proof, &GameOptions::default())
}

fn product_probs(sc: &Scenario, marginals: &[Vec<f64>]) -> Vec<f64> {
    (0..sc.joint_setting_count())
        .map(|s| {
            sc.decode_setting(s)
                .iter()
                .enumerate()
                .map(|(p, &a)| marginals[p][a])
                .product()
        })
        .collect()
}

/// Coordinate ascent over the party marginals, moving mass between two
/// settings of one party at a time.
fn ascend_product(
    ev: &Evaluator,
    sc: &Scenario,
    mut marginals: Vec<Vec<f64>>,
    line_tol: f64,
) -> Result<(Vec<Vec<f64>>, ProjectionResult)> {
    const MAX_SWEEPS: usize = 300;
    let mut cur = ev.eval(&product_probs(sc, &marginals), None)?;
    for _ in 0..MAX_SWEEPS {
        let before = cur.value.value();
        for p in 0..sc.parties() {
            let k = marginals[p].len();
            for i in 0..k {
                for j in i + 1..k {
                    let (lo, hi) = (-marginals[p][j], marginals[p][i]);
                    if hi - lo <= 1e-15 {
                        continue;
                    }
                    let moved = |t: f64| {
                        let mut m = marginals.clone();
                        m[p][i] = (m[p][i] - t).max(0.0);
                        m[p][j] = (m[p][j] + t).max(0.0);
                        m
                    };
                    let mut warm = cur.pi_star.weights.clone();
                    let (t, val) = golden_max(
                        |t| {
                            let r = ev.eval(&product_probs(sc, &moved(t)), Some(&warm))?;
                            warm = r.pi_star.weights;
                            Ok(r.value.value())
                        },
                        lo,
                        hi,
                        line_tol,
                    )?;
                    if val > cur.value.value() {
                        marginals = moved(t);
                        cur =
                            ev.eval(&product_probs(sc, &marginals), Some(&cur.pi_star.weights))?;
                    }
                }
            }
        }
        if cur.value.value() - before < 1e-13 {
            break;
        }
    }
    Ok((marginals, cur))
}

/// Multi-start coordinate ascent over product setting distributions. The
/// domain is not convex, so the result is the best local optimum found.
pub fn strength_uncorrelated_with(
    proof: &NonlocalityProof,
    opts: &GameOptions,
) -> Result<StrengthResult> {
    let sc = proof.scenario();
    let ev = Evaluator::new(proof, opts.inner_tol)?;
    let uniform: Vec<Vec<f64>> = sc
        .settings_per_party()
        .iter()
        .map(|&k| vec![1.0 / k as f64; k])
        .collect();
    let starts: Vec<Vec<Vec<f64>>> = (0..opts.starts.max(1))
        .map(|i| {
            if i == 0 {
                return uniform.clone();
            }
            let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
            rng.set_stream(i as u64);
            sc.settings_per_party()
                .iter()
                .map(|&k| {
                    let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
                    let t: f64 = e.iter().sum();
                    e.iter().map(|x| x / t).collect()
                })
                .collect()
        })
        .collect();
    let runs: Vec<Result<(Vec<Vec<f64>>, ProjectionResult)>> = starts
        .into_par_iter()
        .map(|m| ascend_product(&ev, sc, m, opts.line_tol))
        .collect();
    let mut best: Option<(Vec<Vec<f64>>, ProjectionResult)> = None;
    for run in runs {
        let run = run?;
        if best
            .as_ref()
            .is_none_or(|b| run.1.value.value() > b.1.value.value())
        {
            best = Some(run);
        }
    }
    let (marginals, r) = best.expect("at least one start");
    let sd = SettingDistribution::product(sc, marginals)?;
    Ok(finish(Mode::Uncorrelated, sd, r, None))
}

pub fn strength(
    proof: &NonlocalityProof,
    mode: Mode,
    opts: &GameOptions,
) -> Result<StrengthResult> {
    match mode {
        Mode::Uniform => strength_uniform_with(proof, opts),
        Mode::Uncorrelated => strength_uncorrelated_with(proof, opts),
        Mode::Correlated => strength_correlated_with(proof, opts),
    }
}

/// `inf_pi max_s D(Q_s || P_s;pi)`.
pub fn minimax_value(proof: &NonlocalityProof) -> Result<MinimaxResult> {
    minimax_with(proof, &OutcomeMap::new(proof.scenario())?)
}

/// Log-barrier path following for `min t` subject to `D_s(pi) <= t`,
/// `sum pi = 1`, `pi > 0`, with dense Newton steps. Works in nats.
fn minimax_with(proof: &NonlocalityProof, map: &OutcomeMap) -> Result<MinimaxResult> {
    const TARGET_GAP: f64 = 1e-11;
    const GROWTH: f64 = 8.0;
    let n = map.theories;
    let m = map.settings;
    let q: Vec<&[f64]> = proof.tables().iter().map(|t| t.probs.as_slice()).collect();

    let induced = |pi: &[f64]| crate::model::induced_tables(map, pi);
    let divergences = |p: &[Vec<f64>]| -> Vec<f64> {
        (0..m)
            .map(|s| {
                q[s].iter()
                    .zip(&p[s])
                    .filter(|(&qo, _)| qo > 0.0)
                    .map(|(&qo, &po)| {
                        if po > 0.0 {
                            qo * (qo / po).ln()
                        } else {
                            f64::INFINITY
                        }
                    })
                    .sum()
            })
            .collect()
    };
    let barrier = |tau: f64, pi: &[f64], t: f64| -> f64 {
        if pi.iter().any(|&x| x <= 0.0) {
            return f64::INFINITY;
        }
        let d = divergences(&induced(pi));
        let mut f = tau * t;
        for ds in d {
            let r = t - ds;
            if r <= 0.0 || !r.is_finite() {
                return f64::INFINITY;
            }
            f -= r.ln();
        }
        f - pi.iter().map(|x| x.ln()).sum::<f64>()
    };

    let mut pi = vec![1.0 / n as f64; n];
    let mut t = divergences(&induced(&pi))
        .iter()
        .cloned()
        .fold(0.0, f64::max)
        + 1.0;
    let mut tau = 1.0;
    let constraints = (m + n) as f64;
    loop {
        for _ in 0..200 {
            let p = induced(&pi);
            let d = divergences(&p);
            let r: Vec<f64> = d.iter().map(|&ds| t - ds).collect();
            // gradients of D_s with respect to pi
            let grads: Vec<Vec<f64>> = (0..m)
                .map(|s| {
                    (0..n)
                        .map(|v| {
                            let o = map.outcome(v, s);
                            if q[s][o] > 0.0 {
                                -q[s][o] / p[s][o]
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect();
            let dim = n + 1;
            let mut h = DMatrix::<f64>::zeros(dim + 1, dim + 1);
            let mut g = DVector::<f64>::zeros(dim + 1);
            for v in 0..n {
                g[v] = -1.0 / pi[v];
                h[(v, v)] += 1.0 / (pi[v] * pi[v]);
            }
            g[n] = tau;
            for s in 0..m {
                let inv = 1.0 / r[s];
                let inv2 = inv * inv;
                g[n] -= inv;
                h[(n, n)] += inv2;
                for v in 0..n {
                    g[v] += inv * grads[s][v];
                    h[(v, n)] -= inv2 * grads[s][v];
                    h[(n, v)] -= inv2 * grads[s][v];
                    let ov = map.outcome(v, s);
                    for w in 0..n {
                        let mut x = inv2 * grads[s][v] * grads[s][w];
                        if map.outcome(w, s) == ov && q[s][ov] > 0.0 {
                            x += inv * q[s][ov] / (p[s][ov] * p[s][ov]);
                        }
                        h[(v, w)] += x;
                    }
                }
            }
            for v in 0..n {
                h[(v, dim)] = 1.0;
                h[(dim, v)] = 1.0;
            }
            let mut rhs = -g.clone();
            rhs[dim] = 0.0;
            let Some(step) = h.lu().solve(&rhs) else {
                break;
            };
            let dx: Vec<f64> = (0..dim).map(|i| step[i]).collect();
            let slope: f64 = (0..dim).map(|i| g[i] * dx[i]).sum();
            if !slope.is_finite() || -slope / 2.0 <= 1e-14 {
                break;
            }
            let f0 = barrier(tau, &pi, t);
            let mut alpha = 1.0;
            let mut moved = false;
            for _ in 0..80 {
                let cand: Vec<f64> = (0..n).map(|v| pi[v] + alpha * dx[v]).collect();
                let tc = t + alpha * dx[n];
                let fc = barrier(tau, &cand, tc);
                if fc <= f0 + 0.25 * alpha * slope {
                    let total: f64 = cand.iter().sum();
                    pi = cand.iter().map(|x| x / total).collect();
                    t = tc;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if constraints / tau < TARGET_GAP {
            break;
        }
        tau *= GROWTH;
    }

    let d = divergences(&induced(&pi));
    let mut lambda: Vec<f64> = d.iter().map(|&ds| 1.0 / (tau * (t - ds))).collect();
    let total: f64 = lambda.iter().sum();
    lambda.iter_mut().for_each(|x| *x /= total);
    let value = d.iter().cloned().fold(0.0, f64::max) / std::f64::consts::LN_2;
    Ok(MinimaxResult {
        value: Bits(value),
        pi_star: LocalTheory { weights: pi },
        sigma_dual: lambda,
        gap_bound: constraints / tau / std::f64::consts::LN_2,
    })
}

/// Whether `pi` has the same divergence at every joint setting.
pub fn equalizer_check(
    proof: &NonlocalityProof,
    pi: &LocalTheory,
    tol: f64,
) -> Result<EqualizerReport> {
    let map = OutcomeMap::new(proof.scenario())?;
    if pi.weights.len() != map.theories {
        return Err(Error::Shape(format!(
            "{} weights for {} theories",
            pi.weights.len(),
            map.theories
        )));
    }
    let values = per_setting(proof, &map, &pi.weights);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = if hi.is_finite() {
        hi - lo
    } else {
        f64::INFINITY
    };
    Ok(EqualizerReport {
        equalizer: spread <= tol,
        values,
        spread,
    })
}

/// Whether `(sigma, pi)` is a saddle point of the uncorrelated game on a 2x2 proof.
pub fn saddle_check(
    proof: &NonlocalityProof,
    sigma: &SettingDistribution,
    pi: &LocalTheory,
    tol: f64,
) -> Result<SaddleReport> {
    if !proof.scenario().is_two_by_two() {
        return Err(Error::Unsupported(
            "saddle points are characterized for 2x2 proofs only".into(),
        ));
    }
    let map = OutcomeMap::new(proof.scenario())?;
    let kkt_residual = match kkt_with(proof, &map, &sigma.probs, &pi.weights) {
        Ok(k) => k.residual,
        Err(Error::NotAbsolutelyContinuous { .. }) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let eq = equalizer_check(proof, pi, tol)?;
    let value = crate::divergence::objective_with(proof, &map, &sigma.probs, &pi.weights)?.value();
    Ok(SaddleReport {
        saddle: kkt_residual <= tol && eq.equalizer,
        kkt_residual,
        spread: eq.spread,
        value,
    })
}
