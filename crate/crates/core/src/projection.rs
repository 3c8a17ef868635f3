//! Information projection of `Q_sigma` onto the local polytope.
//!
//! Minimizes `U(sigma, pi)` over mixtures `pi` of deterministic theories. The
//! objective only depends on `pi` through the induced tables `P = A pi`, where
//! column `v` of `A` marks the outcome theory `v` produces at each setting, so
//! up to constants it is `-sum_r w_r ln P_r` with `w_r = sigma_s Q_s(o)`.
//!
//! The solver is Frank-Wolfe with away steps over the vertices, each step
//! followed by Newton iterations on the current face. Optimality is certified
//! by the vertex scores
//!
//! ```text
//! S(v) = sum_s sigma_s Q_s(o(v,s)) / P_s(o(v,s))
//! ```
//!
//! which must equal 1 on the support of `pi` and not exceed 1 elsewhere.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::divergence::{per_setting, Bits};
use crate::error::{Error, Result};
use crate::model::{
    induced_tables, LocalTheory, NonlocalityProof, OutcomeMap, SettingDistribution,
};

/// Default bound on the KKT residual.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default cap on outer iterations.
pub const DEFAULT_MAX_ITER: usize = 1_000_000;
const LINE_SEARCH_ITERS: usize = 80;
const NEWTON_STEPS_PER_FACE: usize = 30;

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionResult {
    /// `U(sigma)`, the minimized divergence.
    pub value: Bits,
    pub pi_star: LocalTheory,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Tables `P_s;pi*` by joint setting.
    pub induced: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct ProjectOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ProjectOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Vertex scores and the derived optimality residual.
#[derive(Debug, Clone, Serialize)]
pub struct KktReport {
    pub scores: Vec<f64>,
    pub residual: f64,
}

/// The projection problem for a fixed setting distribution, restricted to
/// settings with positive weight.
#[derive(Debug, Clone)]
pub struct Projector<'a> {
    proof: &'a NonlocalityProof,
    map: &'a OutcomeMap,
    sigma: Vec<f64>,
    /// Row of each vertex at each active setting, `[vertex][k]`.
    vrows: Vec<u32>,
    active: usize,
    w: Vec<f64>,
    /// Constant part `sum_r w_r ln q_r` of the objective, in nats.
    entropy_term: f64,
    rows: usize,
}

impl<'a> Projector<'a> {
    pub fn new(proof: &'a NonlocalityProof, map: &'a OutcomeMap, sigma: &[f64]) -> Result<Self> {
        if sigma.len() != map.settings {
            return Err(Error::Shape(format!(
                "{} setting weights for {} settings",
                sigma.len(),
                map.settings
            )));
        }
        let settings: Vec<usize> = (0..map.settings).filter(|&s| sigma[s] > 0.0).collect();
        let mut base = Vec::with_capacity(settings.len());
        let mut w = Vec::new();
        let mut entropy_term = 0.0;
        for &s in &settings {
            base.push(w.len());
            for &q in &proof.table(s).probs {
                let wr = sigma[s] * q;
                if wr > 0.0 {
                    entropy_term += wr * q.ln();
                }
                w.push(wr);
            }
        }
        let active = settings.len();
        let mut vrows = Vec::with_capacity(map.theories * active);
        for v in 0..map.theories {
            for (k, &s) in settings.iter().enumerate() {
                vrows.push((base[k] + map.outcome(v, s)) as u32);
            }
        }
        Ok(Self {
            proof,
            map,
            sigma: sigma.to_vec(),
            vrows,
            active,
            rows: w.len(),
            w,
            entropy_term,
        })
    }

    #[inline]
    fn rows_of(&self, v: usize) -> &[u32] {
        &self.vrows[v * self.active..(v + 1) * self.active]
    }

    fn theories(&self) -> usize {
        self.map.theories
    }

    fn induced_rows(&self, pi: &[f64], p: &mut [f64]) {
        p.iter_mut().for_each(|x| *x = 0.0);
        for (v, &wv) in pi.iter().enumerate() {
            if wv != 0.0 {
                for &r in self.rows_of(v) {
                    p[r as usize] += wv;
                }
            }
        }
    }

    /// `-sum w ln P` in nats, `+inf` off the domain.
    fn loss(&self, p: &[f64]) -> f64 {
        let mut total = 0.0;
        for (&w, &pr) in self.w.iter().zip(p) {
            if w > 0.0 {
                if pr <= 0.0 {
                    return f64::INFINITY;
                }
                total -= w * pr.ln();
            }
        }
        total
    }

    fn value_bits(&self, loss: f64) -> f64 {
        ((self.entropy_term + loss) / std::f64::consts::LN_2).max(0.0)
    }

    /// `S(v)` for all vertices; `None` if some positive-weight row has `P = 0`.
    fn scores(&self, p: &[f64], ratio: &mut [f64], scores: &mut [f64]) -> Option<()> {
        for ((r, &w), &pr) in ratio.iter_mut().zip(&self.w).zip(p) {
            *r = if w > 0.0 {
                if pr <= 0.0 {
                    return None;
                }
                w / pr
            } else {
                0.0
            };
        }
        for (v, s) in scores.iter_mut().enumerate() {
            *s = self.rows_of(v).iter().map(|&r| ratio[r as usize]).sum();
        }
        Some(())
    }

    /// Minimizes `-sum w ln(p + t d)` over `t in [0, t_max]`.
    fn line_search(&self, p: &[f64], d: &[f64], t_max: f64) -> f64 {
        let deriv = |t: f64| -> (f64, f64) {
            let mut g = 0.0;
            let mut h = 0.0;
            for ((&w, &pr), &dr) in self.w.iter().zip(p).zip(d) {
                if w > 0.0 && dr != 0.0 {
                    let x = pr + t * dr;
                    if x <= 0.0 {
                        return (f64::INFINITY, f64::INFINITY);
                    }
                    g -= w * dr / x;
                    h += w * dr * dr / (x * x);
                }
            }
            (g, h)
        };
        if deriv(0.0).0 >= 0.0 {
            return 0.0;
        }
        let (g_max, _) = deriv(t_max);
        if g_max <= 0.0 {
            return t_max;
        }
        // safeguarded Newton on the derivative inside the bracket
        let (mut lo, mut hi) = (0.0, t_max);
        let mut t = 0.5 * t_max;
        for _ in 0..LINE_SEARCH_ITERS {
            let (g, h) = deriv(t);
            if g.is_infinite() || g > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            if g == 0.0 || hi - lo <= 1e-17 * t_max.max(1e-300) {
                break;
            }
            let newton = t - g / h;
            t = if g.is_finite() && h > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        // the lower end always has a finite, non-positive derivative
        if deriv(t).0 == 0.0 {
            t
        } else {
            lo
        }
    }

    /// Residual of the optimality conditions for given scores.
    fn residual(pi: &[f64], scores: &[f64]) -> f64 {
        pi.iter().zip(scores).fold(0.0f64, |acc, (&w, &s)| {
            if w > 0.0 {
                acc.max((s - 1.0).abs())
            } else {
                acc.max(s - 1.0)
            }
        })
    }

    /// Newton direction on the face `{pi_S >= 0, sum pi_S = 1}`.
    fn newton_direction(
        &self,
        pi: &[f64],
        p: &[f64],
        scores: &[f64],
        support: &[usize],
    ) -> Option<Vec<f64>> {
        let m = support.len();
        if m < 2 {
            return None;
        }
        let curv: Vec<f64> = self
            .w
            .iter()
            .zip(p)
            .map(|(&w, &pr)| if w > 0.0 { w / (pr * pr) } else { 0.0 })
            .collect();
        let mut kkt = DMatrix::<f64>::zeros(m + 1, m + 1);
        for (i, &vi) in support.iter().enumerate() {
            let ri = self.rows_of(vi);
            for (j, &vj) in support.iter().enumerate().skip(i) {
                let rj = self.rows_of(vj);
                let h: f64 = ri
                    .iter()
                    .zip(rj)
                    .filter(|(a, b)| a == b)
                    .map(|(&a, _)| curv[a as usize])
                    .sum();
                kkt[(i, j)] = h;
                kkt[(j, i)] = h;
            }
            kkt[(i, m)] = 1.0;
            kkt[(m, i)] = 1.0;
        }
        for i in 0..m {
            kkt[(i, i)] *= 1.0 + 1e-11;
            kkt[(i, i)] += 1e-300;
        }
        let rhs = DVector::from_iterator(
            m + 1,
            support
                .iter()
                .map(|&v| scores[v] - 1.0)
                .chain(std::iter::once(0.0)),
        );

        let sol = kkt.lu().solve(&rhs)?;

        let mut dir = vec![0.0; pi.len()];
        for (i, &v) in support.iter().enumerate() {
            dir[v] = sol[i];
        }
        dir.iter().all(|x| x.is_finite()).then_some(dir)
    }

    pub fn solve(&self, start: Option<&[f64]>, opts: ProjectOptions) -> Result<ProjectionResult> {
        let n = self.theories();
        let mut pi: Vec<f64> = match start {
            Some(s) if s.len() == n => s.to_vec(),
            _ => vec![1.0 / n as f64; n],
        };
        let mut p = vec![0.0; self.rows];
        let mut ratio = vec![0.0; self.rows];
        let mut scores = vec![0.0; n];
        let mut d = vec![0.0; self.rows];

        self.induced_rows(&pi, &mut p);
        if self.scores(&p, &mut ratio, &mut scores).is_none() {
            // warm start outside the domain: blend with the barycenter
            pi.iter_mut().for_each(|x| *x = 0.5 * *x + 0.5 / n as f64);
            self.induced_rows(&pi, &mut p);
            self.scores(&p, &mut ratio, &mut scores)
                .expect("barycenter covers every row");
        }

        let mut residual = Self::residual(&pi, &scores);
        let mut iterations = 0;
        while residual > opts.tol && iterations < opts.max_iter {
            iterations += 1;
            // Frank-Wolfe or away step
            let (fw, fw_score) = scores
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, &s)| (i, s))
                .unwrap();
            let away = pi
                .iter()
                .zip(&scores)
                .enumerate()
                .filter(|(_, (&w, _))| w > 0.0)
                .min_by(|a, b| a.1 .1.total_cmp(b.1 .1))
                .map(|(i, _)| i)
                .unwrap();
            let fw_gap = fw_score - 1.0;
            let away_gap = 1.0 - scores[away];
            let step = if fw_gap >= away_gap {
                d.iter_mut().zip(&p).for_each(|(dr, &pr)| *dr = -pr);
                for &r in self.rows_of(fw) {
                    d[r as usize] += 1.0;
                }
                Some((fw, self.line_search(&p, &d, 1.0), 1.0, false))
            } else if pi[away] < 1.0 {
                let t_max = pi[away] / (1.0 - pi[away]);
                d.copy_from_slice(&p);
                for &r in self.rows_of(away) {
                    d[r as usize] -= 1.0;
                }
                Some((away, self.line_search(&p, &d, t_max), t_max, true))
            } else {
                None
            };
            if let Some((v, mut t, t_max, is_away)) = step {
                while t > 0.0 {
                    let mut cand = pi.clone();
                    if is_away {
                        cand.iter_mut().for_each(|x| *x *= 1.0 + t);
                        cand[v] -= t;
                        if t >= t_max || cand[v] < 1e-300 {
                            cand[v] = 0.0;
                        }
                    } else {
                        cand.iter_mut().for_each(|x| *x *= 1.0 - t);
                        cand[v] += t;
                    }
                    self.induced_rows(&cand, &mut p);
                    if self.scores(&p, &mut ratio, &mut scores).is_some() {
                        pi = cand;
                        break;
                    }
                    t *= 0.5;
                }
            }
            self.induced_rows(&pi, &mut p);
            self.scores(&p, &mut ratio, &mut scores)
                .expect("iterate is in the domain");

            // Newton polish on the face
            for _ in 0..NEWTON_STEPS_PER_FACE {
                let support: Vec<usize> = (0..n).filter(|&v| pi[v] > 0.0).collect();
                let face_res = support
                    .iter()
                    .fold(0.0f64, |a, &v| a.max((scores[v] - 1.0).abs()));
                if face_res <= 0.1 * opts.tol {
                    break;
                }
                let Some(dir) = self.newton_direction(&pi, &p, &scores, &support) else {
                    break;
                };
                let mut t_max = f64::INFINITY;
                let mut blocking = None;
                for &v in &support {
                    if dir[v] < 0.0 {
                        let t = -pi[v] / dir[v];
                        if t < t_max {
                            t_max = t;
                            blocking = Some(v);
                        }
                    }
                }
                let t_max = t_max.min(1.0);
                self.induced_rows(&dir, &mut d);
                let mut t = self.line_search(&p, &d, t_max);
                let mut accepted = false;
                while t > 0.0 && !accepted {
                    let mut cand = pi.clone();
                    for &v in &support {
                        cand[v] = (pi[v] + t * dir[v]).max(0.0);
                    }
                    if let Some(b) = blocking {
                        if t >= t_max && t_max < 1.0 {
                            cand[b] = 0.0;
                        }
                    }
                    let total: f64 = cand.iter().sum();
                    cand.iter_mut().for_each(|x| *x /= total);
                    self.induced_rows(&cand, &mut p);
                    if self.scores(&p, &mut ratio, &mut scores).is_some() {
                        pi = cand;
                        accepted = true;
                    } else {
                        t *= 0.5;
                    }
                }
                if !accepted {
                    self.induced_rows(&pi, &mut p);
                    self.scores(&p, &mut ratio, &mut scores)
                        .expect("previous iterate is in the domain");
                    break;
                }
            }
            residual = Self::residual(&pi, &scores);
        }

        let value = Bits(self.value_bits(self.loss(&p)));
        let result = ProjectionResult {
            value,
            induced: induced_tables(self.map, &pi),
            pi_star: LocalTheory { weights: pi },
            kkt_residual: residual,
            iterations,
        };
        if residual > opts.tol {
            return Err(Error::ProjectionNotConverged(Box::new(result)));
        }
        Ok(result)
    }

    /// Divergence at each joint setting for a given mixture (all settings, not only active ones).
    pub fn per_setting(&self, pi: &[f64]) -> Vec<f64> {
        per_setting(self.proof, self.map, pi)
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }
}

/// Minimizes `U(sigma, pi)` over local theories.
pub fn project(
    proof: &NonlocalityProof,
    sigma: &SettingDistribution,
    tol: f64,
) -> Result<ProjectionResult> {
    let map = OutcomeMap::new(proof.scenario())?;
    Projector::new(proof, &map, &sigma.probs)?.solve(
        None,
        ProjectOptions {
            tol,
            ..Default::default()
        },
    )
}

/// Optimality residuals of `pi` for the projection at `sigma`.
pub fn kkt_check(
    proof: &NonlocalityProof,
    sigma: &SettingDistribution,
    pi: &LocalTheory,
) -> Result<KktReport> {
    let map = OutcomeMap::new(proof.scenario())?;
    kkt_with(proof, &map, &sigma.probs, &pi.weights)
}

pub(crate) fn kkt_with(
    proof: &NonlocalityProof,
    map: &OutcomeMap,
    sigma: &[f64],
    pi: &[f64],
) -> Result<KktReport> {
    if pi.len() != map.theories {
        return Err(Error::Shape(format!(
            "{} weights for {} theories",
            pi.len(),
            map.theories
        )));
    }
    let tables = induced_tables(map, pi);
    for (s, (p, q)) in tables.iter().zip(proof.tables()).enumerate() {
        if sigma[s] > 0.0 {
            if let Some(o) = q
                .probs
                .iter()
                .zip(p)
                .position(|(&qo, &po)| qo > 0.0 && po <= 0.0)
            {
                return Err(Error::NotAbsolutelyContinuous {
                    setting: s,
                    outcome: o,
                });
            }
        }
    }
    let scores: Vec<f64> = (0..map.theories)
        .map(|v| {
            (0..map.settings)
                .filter(|&s| sigma[s] > 0.0)
                .map(|s| {
                    let o = map.outcome(v, s);
                    let q = proof.table(s).probs[o];
                    if q > 0.0 {
                        sigma[s] * q / tables[s][o]
                    } else {
                        0.0
                    }
                })
                .sum()
        })
        .collect();
    let residual = Projector::residual(pi, &scores);
    Ok(KktReport { scores, residual })
}
