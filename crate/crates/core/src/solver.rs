//! Exemplar-prior fitting by multiplicative updates.
//!
//! The objective is the mean log mixture mass `(1/n) Σ_i log Σ_j s_ij q_j`
//! over the probability simplex. It is concave, and the update
//! `q_j ← q_j · (1/n) Σ_i s_ij / z_i` never decreases it, so iterating from
//! any strictly positive start reaches the global maximum. Exemplars whose
//! prior decays below a relative threshold are removed so the support (the
//! topic set) is exact in finite time.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduce;
use crate::similarity::SparseSimilarity;
use crate::vocabulary::Vocabulary;

const MIN_PAR_LEN: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Relative log-likelihood improvement below which an iteration counts
    /// as stalled.
    pub tol: f64,
    /// Consecutive stalled iterations required to stop.
    pub patience: usize,
    pub max_iter: usize,
    /// Exemplars with `q_j < prune_eps · max(q)` are dropped.
    pub prune_eps: f64,
    /// Optimality certificate required to stop: `η_j ≤ 1 + kkt_tol`
    /// everywhere and `|η_j − 1| ≤ kkt_tol` on the support.
    pub kkt_tol: f64,
    /// Extrapolate along pairs of updates (squared iterative steps), falling
    /// back to the plain update whenever that would lower the likelihood.
    pub accelerate: bool,
    /// Worker threads; `None` uses the ambient pool. Never serialized: it
    /// has no effect on the result.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-9,
            patience: 3,
            max_iter: 10_000,
            prune_eps: 1e-6,
            kkt_tol: 1e-6,
            accelerate: true,
            threads: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::param(format!("tol must be > 0, got {}", self.tol)));
        }
        if !(self.prune_eps > 0.0 && self.prune_eps < 1.0) {
            return Err(Error::param(format!(
                "prune_eps must be in (0, 1), got {}",
                self.prune_eps
            )));
        }
        if !(self.kkt_tol > 0.0) {
            return Err(Error::param(format!("kkt_tol must be > 0, got {}", self.kkt_tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter must be at least 1"));
        }
        if self.patience == 0 {
            return Err(Error::param("patience must be at least 1"));
        }
        Ok(())
    }
}

/// `z_i = Σ_j s_ij q_j`.
pub fn mixture_mass(s: &SparseSimilarity, q: &[f64]) -> Vec<f64> {
    (0..s.n())
        .into_par_iter()
        .with_min_len(MIN_PAR_LEN)
        .map(|i| {
            let (cols, vals) = s.row(i);
            cols.iter().zip(vals).map(|(&j, &v)| v * q[j as usize]).sum()
        })
        .collect()
}

/// `η_j = (1/n) Σ_i s_ij / z_i`, read along row `j` since `s` is symmetric.
/// Terms with `z_i = 0` contribute nothing.
pub fn eta(s: &SparseSimilarity, z: &[f64]) -> Vec<f64> {
    let inv_n = 1.0 / s.n() as f64;
    (0..s.n())
        .into_par_iter()
        .with_min_len(MIN_PAR_LEN)
        .map(|j| {
            let (rows, vals) = s.row(j);
            let acc: f64 = rows
                .iter()
                .zip(vals)
                .map(|(&i, &v)| {
                    let zi = z[i as usize];
                    if zi > 0.0 {
                        v / zi
                    } else {
                        0.0
                    }
                })
                .sum();
            acc * inv_n
        })
        .collect()
}

fn mean_log(z: &[f64]) -> f64 {
    if z.iter().any(|&v| !(v > 0.0)) {
        return f64::NEG_INFINITY;
    }
    reduce::sum_by(z.len(), |i| z[i].ln()) / z.len() as f64
}

fn check_dims(s: &SparseSimilarity, q: &[f64]) -> Result<()> {
    if q.len() != s.n() {
        return Err(Error::DimensionMismatch {
            expected: s.n(),
            got: q.len(),
        });
    }
    Ok(())
}

/// Mean log mixture mass; negative infinity when some term has no mass.
pub fn log_likelihood(s: &SparseSimilarity, q: &[f64]) -> Result<f64> {
    check_dims(s, q)?;
    Ok(mean_log(&mixture_mass(s, q)))
}

fn normalize(q: &mut [f64]) {
    let total = reduce::sum(q);
    q.par_iter_mut()
        .with_min_len(MIN_PAR_LEN)
        .for_each(|v| *v /= total);
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub q: Vec<f64>,
    pub z: Vec<f64>,
    pub eta: Vec<f64>,
    pub iteration: usize,
    pub loglik_history: Vec<f64>,
}

impl SolverState {
    pub fn new(q: Vec<f64>) -> Self {
        SolverState {
            q,
            z: Vec::new(),
            eta: Vec::new(),
            iteration: 0,
            loglik_history: Vec::new(),
        }
    }

    pub fn uniform(n: usize) -> Self {
        Self::new(vec![1.0 / n as f64; n])
    }

    /// Computes `z` and `η` at the current `q` and records its likelihood.
    pub fn evaluate(&mut self, s: &SparseSimilarity) -> Result<f64> {
        check_dims(s, &self.q)?;
        self.z = mixture_mass(s, &self.q);
        if let Some(i) = self.z.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::DisconnectedSupport(i));
        }
        self.eta = eta(s, &self.z);
        let l = mean_log(&self.z);
        self.loglik_history.push(l);
        Ok(l)
    }

    /// `q_j ← η_j q_j` using the last evaluation.
    fn advance(&mut self) {
        let eta = &self.eta;
        self.q
            .par_iter_mut()
            .with_min_len(MIN_PAR_LEN)
            .enumerate()
            .for_each(|(j, qj)| *qj *= eta[j]);
        self.iteration += 1;
    }
}

/// One multiplicative update. The returned state carries the `z` and `η`
/// computed at the input prior and the updated prior, whose sum stays 1 up
/// to rounding.
pub fn update_step(s: &SparseSimilarity, state: &SolverState) -> Result<SolverState> {
    let mut next = state.clone();
    next.evaluate(s)?;
    next.advance();
    Ok(next)
}

/// Largest `η_j − 1` over all `j` (an upper bound on the distance to the
/// optimal likelihood) and largest `|η_j − 1|` over the support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub max_excess: f64,
    pub support_deviation: f64,
}

impl Certificate {
    /// The support is every `j` with `q_j > floor`.
    pub fn of(q: &[f64], eta: &[f64], floor: f64) -> Self {
        let mut max_excess = f64::NEG_INFINITY;
        let mut support_deviation: f64 = 0.0;
        for (&qj, &ej) in q.iter().zip(eta) {
            max_excess = max_excess.max(ej - 1.0);
            if qj > floor {
                support_deviation = support_deviation.max((ej - 1.0).abs());
            }
        }
        Certificate {
            max_excess,
            support_deviation,
        }
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.max_excess <= tol && self.support_deviation <= tol
    }
}

/// Row-compressed `r_ij = s_ij q_j / z_i`, restricted to `q_j > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    offsets: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl Responsibilities {
    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
        (&self.cols[lo..hi], &self.vals[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&(j as u32)).map_or(0.0, |p| vals[p])
    }

    pub fn from_rows(rows: Vec<Vec<(u32, f64)>>) -> Self {
        let mut offsets = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (j, v) in row {
                cols.push(j);
                vals.push(v);
            }
            offsets.push(cols.len());
        }
        Responsibilities { offsets, cols, vals }
    }

    /// Column view: for each `j`, the `(i, r_ij)` pairs in ascending `i`.
    pub fn columns(&self) -> Vec<Vec<(u32, f64)>> {
        let mut out = vec![Vec::new(); self.n()];
        for i in 0..self.n() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out[j as usize].push((i as u32, v));
            }
        }
        out
    }
}

pub fn responsibilities(s: &SparseSimilarity, q: &[f64]) -> Result<Responsibilities> {
    check_dims(s, q)?;
    let rows: Vec<Vec<(u32, f64)>> = (0..s.n())
        .into_par_iter()
        .with_min_len(MIN_PAR_LEN)
        .map(|i| {
            let (cols, vals) = s.row(i);
            let z: f64 = cols.iter().zip(vals).map(|(&j, &v)| v * q[j as usize]).sum();
            if !(z > 0.0) {
                return Err(Error::DisconnectedSupport(i));
            }
            Ok(cols
                .iter()
                .zip(vals)
                .filter(|(&j, _)| q[j as usize] > 0.0)
                .map(|(&j, &v)| (j, v * q[j as usize] / z))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(Responsibilities::from_rows(rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub q: Vec<f64>,
    /// Ascending ids with `q_j > 0`.
    pub exemplars: Vec<usize>,
    pub responsibilities: Responsibilities,
    pub loglik_final: f64,
    pub loglik_trace: Vec<f64>,
    pub certificate: Option<Certificate>,
    pub converged: bool,
    pub iterations: usize,
    pub config: SolverConfig,
}

impl TopicModel {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn n_topics(&self) -> usize {
        self.exemplars.len()
    }
}

pub fn fit(s: &SparseSimilarity, config: &SolverConfig) -> Result<TopicModel> {
    fit_from(s, config, None)
}

/// Fits from `init` (strictly positive, any scale) or from the uniform prior.
pub fn fit_from(
    s: &SparseSimilarity,
    config: &SolverConfig,
    init: Option<&[f64]>,
) -> Result<TopicModel> {
    config.validate()?;
    let n = s.n();
    if n == 0 {
        return Err(Error::param("similarity matrix is empty"));
    }
    let q0 = match init {
        Some(q) => {
            check_dims(s, q)?;
            if q.iter().any(|&v| !(v >= 0.0 && v.is_finite())) || !q.iter().any(|&v| v > 0.0) {
                return Err(Error::param("initial prior must be non-negative and not all zero"));
            }
            let mut q = q.to_vec();
            normalize(&mut q);
            q
        }
        None => vec![1.0 / n as f64; n],
    };
    reduce::with_threads(config.threads, || run(s, config, q0))?
}

fn run(s: &SparseSimilarity, config: &SolverConfig, q0: Vec<f64>) -> Result<TopicModel> {
    let mut state = SolverState::new(q0);
    let mut stalled = 0usize;
    let mut converged = false;
    let mut certificate;
    loop {
        let l = state.evaluate(s)?;
        if let [.., prev, _] = state.loglik_history[..] {
            let rel = (l - prev) / prev.abs().max(f64::MIN_POSITIVE);
            if rel < config.tol {
                stalled += 1;
            } else {
                stalled = 0;
            }
        }
        let floor = config.prune_eps * state.q.iter().copied().fold(0.0, f64::max);
        certificate = Certificate::of(&state.q, &state.eta, floor);
        if stalled >= config.patience && certificate.holds(config.kkt_tol) {
            converged = true;
            break;
        }
        if state.iteration >= config.max_iter {
            break;
        }
        let revive = stalled >= config.patience && certificate.max_excess > config.kkt_tol;
        let eta_prev = state.eta.clone();
        let q_prev = state.q.clone();
        if config.accelerate {
            state.q = extrapolate(s, &state.q, &state.eta, l)?;
            state.iteration += 1;
        } else {
            state.advance();
            normalize(&mut state.q);
        }
        prune(s, config, &mut state.q, &eta_prev)?;
        if revive {
            revive_excluded(s, config, &mut state.q, &q_prev, &eta_prev)?;
        }
    }

    if !converged {
        log::warn!(
            "solver stopped at max_iter={} without meeting tol={} / kkt_tol={} (certificate {:?})",
            config.max_iter,
            config.tol,
            config.kkt_tol,
            certificate
        );
    }
    let responsibilities = responsibilities(s, &state.q)?;
    let exemplars = (0..state.q.len()).filter(|&j| state.q[j] > 0.0).collect();
    let loglik_final = *state.loglik_history.last().expect("at least one evaluation");
    Ok(TopicModel {
        q: state.q,
        exemplars,
        responsibilities,
        loglik_final,
        loglik_trace: state.loglik_history,
        certificate: Some(certificate),
        converged,
        iterations: state.iteration,
        config: config.clone(),
    })
}

/// Zeroes decaying exemplars below the relative threshold, keeping the
/// change only when it does not lower the objective.
fn em_map(q: &[f64], eta: &[f64]) -> Vec<f64> {
    let mut next: Vec<f64> = q.iter().zip(eta).map(|(a, b)| a * b).collect();
    normalize(&mut next);
    next
}

fn sq_norm(v: &[f64]) -> f64 {
    reduce::sum_by(v.len(), |i| v[i] * v[i])
}

/// One squared extrapolation step: two plain updates `q → q1 → q2` define
/// the direction, and the extrapolated point is accepted only if it is
/// non-negative, keeps the support of `q`, and scores at least as well as
/// `q2`. Otherwise `q2` is returned.
fn extrapolate(s: &SparseSimilarity, q: &[f64], eta_q: &[f64], l_q: f64) -> Result<Vec<f64>> {
    let q1 = em_map(q, eta_q);
    let z1 = mixture_mass(s, &q1);
    if let Some(i) = z1.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::DisconnectedSupport(i));
    }
    let q2 = em_map(&q1, &eta(s, &z1));
    let l2 = log_likelihood(s, &q2)?;
    let r: Vec<f64> = q1.iter().zip(q).map(|(a, b)| a - b).collect();
    let v: Vec<f64> = (0..q.len()).map(|j| q2[j] - 2.0 * q1[j] + q[j]).collect();
    let (rr, vv) = (sq_norm(&r), sq_norm(&v));
    if !(vv > 0.0) || !(l2 >= l_q) {
        return Ok(q2);
    }
    let mut alpha = -(rr / vv).sqrt();
    for _ in 0..8 {
        if alpha >= -1.0 {
            break;
        }
        let candidate: Vec<f64> = (0..q.len())
            .map(|j| q[j] - 2.0 * alpha * r[j] + alpha * alpha * v[j])
            .collect();
        let feasible = candidate
            .iter()
            .zip(q)
            .all(|(&c, &b)| if b > 0.0 { c > 0.0 } else { c == 0.0 });
        if feasible {
            let mut candidate = candidate;
            normalize(&mut candidate);
            if log_likelihood(s, &candidate)? >= l2 {
                return Ok(candidate);
            }
        }
        alpha = (alpha - 1.0) / 2.0;
    }
    Ok(q2)
}

fn prune(s: &SparseSimilarity, config: &SolverConfig, q: &mut Vec<f64>, eta: &[f64]) -> Result<()> {
    let max = q.iter().copied().fold(0.0, f64::max);
    let threshold = config.prune_eps * max;
    let doomed: Vec<usize> = (0..q.len())
        .filter(|&j| q[j] > 0.0 && q[j] < threshold && eta[j] < 1.0)
        .collect();
    if doomed.is_empty() {
        return Ok(());
    }
    let mut candidate = q.clone();
    for &j in &doomed {
        candidate[j] = 0.0;
    }
    normalize(&mut candidate);
    if log_likelihood(s, &candidate)? >= log_likelihood(s, q)? {
        *q = candidate;
    }
    Ok(())
}

/// Gives mass back to excluded exemplars whose gradient exceeds 1, which
/// only happens if they were dropped (or started at zero) too early.
fn revive_excluded(
    s: &SparseSimilarity,
    config: &SolverConfig,
    q: &mut Vec<f64>,
    q_prev: &[f64],
    eta: &[f64],
) -> Result<()> {
    let starved: Vec<usize> = (0..q.len())
        .filter(|&j| q_prev[j] == 0.0 && q[j] == 0.0 && eta[j] > 1.0 + config.kkt_tol)
        .collect();
    if starved.is_empty() {
        return Ok(());
    }
    let max = q.iter().copied().fold(0.0, f64::max);
    let base = log_likelihood(s, q)?;
    let mut mass = 1e-3 * max;
    while mass > 2.0 * config.prune_eps * max {
        let mut candidate = q.clone();
        for &j in &starved {
            candidate[j] = mass;
        }
        normalize(&mut candidate);
        if log_likelihood(s, &candidate)? >= base {
            log::debug!("revived {} excluded exemplars", starved.len());
            *q = candidate;
            return Ok(());
        }
        mass *= 0.1;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    pub exemplar_id: usize,
    pub exemplar_term: String,
    pub weight: f64,
    /// `(term id, r_ij)` by descending weight, then ascending id.
    pub members: Vec<(usize, f64)>,
}

/// One topic per exemplar, ordered by descending `q_j` then ascending id.
pub fn extract_topics(model: &TopicModel, vocab: &Vocabulary) -> Vec<Topic> {
    let columns = model.responsibilities.columns();
    let mut order = model.exemplars.clone();
    order.sort_by(|&a, &b| model.q[b].total_cmp(&model.q[a]).then(a.cmp(&b)));
    order
        .into_iter()
        .map(|j| {
            let mut members: Vec<(usize, f64)> = columns[j]
                .iter()
                .filter(|e| e.1 > 0.0)
                .map(|&(i, r)| (i as usize, r))
                .collect();
            members.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            Topic {
                exemplar_id: j,
                exemplar_term: vocab.terms.get(j).cloned().unwrap_or_default(),
                weight: model.q[j],
                members,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicRecord {
    pub exemplar_id: usize,
    pub exemplar_term: String,
    pub members: Vec<(usize, f64)>,
}

/// On-disk model layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub n: usize,
    pub config: SolverConfig,
    pub converged: bool,
    pub iterations: usize,
    pub loglik_trace: Vec<f64>,
    pub q: Vec<(usize, f64)>,
    pub topics: Vec<TopicRecord>,
}

impl ModelFile {
    pub fn new(model: &TopicModel, vocab: &Vocabulary) -> Self {
        ModelFile {
            n: model.n(),
            config: model.config.clone(),
            converged: model.converged,
            iterations: model.iterations,
            loglik_trace: model.loglik_trace.clone(),
            q: model.exemplars.iter().map(|&j| (j, model.q[j])).collect(),
            topics: extract_topics(model, vocab)
                .into_iter()
                .map(|t| TopicRecord {
                    exemplar_id: t.exemplar_id,
                    exemplar_term: t.exemplar_term,
                    members: t.members,
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<TopicModel> {
        let mut q = vec![0.0; self.n];
        for &(j, v) in &self.q {
            *q.get_mut(j).ok_or(Error::DimensionMismatch {
                expected: self.n,
                got: j + 1,
            })? = v;
        }
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); self.n];
        for topic in &self.topics {
            for &(i, r) in &topic.members {
                rows.get_mut(i)
                    .ok_or(Error::DimensionMismatch {
                        expected: self.n,
                        got: i + 1,
                    })?
                    .push((topic.exemplar_id as u32, r));
            }
        }
        let exemplars = (0..self.n).filter(|&j| q[j] > 0.0).collect();
        Ok(TopicModel {
            q,
            exemplars,
            responsibilities: Responsibilities::from_rows(rows),
            loglik_final: self.loglik_trace.last().copied().unwrap_or(f64::NAN),
            loglik_trace: self.loglik_trace,
            certificate: None,
            converged: self.converged,
            iterations: self.iterations,
            config: self.config,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn loglik_identity_uniform() {
        let s = SparseSimilarity::identity(2);
        let l = log_likelihood(&s, &[0.5, 0.5]).unwrap();
        assert!(close(l, 0.5f64.ln(), 1e-15));
    }

    #[test]
    fn loglik_all_ones_is_zero() {
        let s = SparseSimilarity::from_dense(&vec![vec![1.0; 4]; 4]).unwrap();
        assert_eq!(log_likelihood(&s, &[0.1, 0.2, 0.3, 0.4]).unwrap(), 0.0);
    }

    #[test]
    fn loglik_uncovered_term_is_neg_infinity() {
        let s = SparseSimilarity::identity(3);
        assert_eq!(log_likelihood(&s, &[1.0, 0.0, 0.0]).unwrap(), f64::NEG_INFINITY);
        assert!(log_likelihood(&s, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn symmetric_pair_is_a_fixed_point() {
        let s = SparseSimilarity::from_dense(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let next = update_step(&s, &SolverState::new(vec![0.5, 0.5])).unwrap();
        assert_eq!(next.z, vec![0.75, 0.75]);
        assert!(next.eta.iter().all(|&e| close(e, 1.0, 1e-15)));
        assert!(next.q.iter().all(|&v| close(v, 0.5, 1e-15)));
    }

    #[test]
    fn identity_reaches_uniform_in_one_step() {
        let s = SparseSimilarity::identity(2);
        let next = update_step(&s, &SolverState::new(vec![0.9, 0.1])).unwrap();
        assert!(close(next.z[0], 0.9, 1e-15) && close(next.z[1], 0.1, 1e-15));
        assert!(close(next.eta[0], 5.0 / 9.0, 1e-15));
        assert!(close(next.eta[1], 5.0, 1e-14));
        assert!(close(next.q[0], 0.5, 1e-15) && close(next.q[1], 0.5, 1e-15));
        assert_eq!(next.iteration, 1);
        assert_eq!(next.loglik_history.len(), 1);
    }

    #[test]
    fn update_step_reports_disconnected_support() {
        let s = SparseSimilarity::identity(2);
        let err = update_step(&s, &SolverState::new(vec![1.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::DisconnectedSupport(1)));
    }

    #[test]
    fn fit_identity_gives_singletons() {
        let s = SparseSimilarity::identity(3);
        let m = fit(&s, &SolverConfig::default()).unwrap();
        assert!(m.converged);
        assert_eq!(m.exemplars, vec![0, 1, 2]);
        assert!(m.q.iter().all(|&v| close(v, 1.0 / 3.0, 1e-15)));
        assert!(close(m.loglik_final, (1.0f64 / 3.0).ln(), 1e-15));
    }

    #[test]
    fn fit_two_blocks_keeps_uniform() {
        let d: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| if i / 2 == j / 2 { 1.0 } else { 0.0 }).collect())
            .collect();
        let s = SparseSimilarity::from_dense(&d).unwrap();
        let m = fit(&s, &SolverConfig::default()).unwrap();
        assert!(m.q.iter().all(|&v| close(v, 0.25, 1e-15)));
        assert!(close(m.loglik_final, 0.5f64.ln(), 1e-15));
        assert_eq!(m.n_topics(), 4);
    }

    #[test]
    fn fit_single_point() {
        let m = fit(&SparseSimilarity::identity(1), &SolverConfig::default()).unwrap();
        assert_eq!(m.q, vec![1.0]);
        assert_eq!(m.loglik_final, 0.0);
        assert_eq!(m.n_topics(), 1);
    }

    #[test]
    fn responsibilities_hand_computed() {
        let s = SparseSimilarity::from_dense(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let r = responsibilities(&s, &[0.5, 0.5]).unwrap();
        assert!(close(r.get(0, 0), 2.0 / 3.0, 1e-15));
        assert!(close(r.get(0, 1), 1.0 / 3.0, 1e-15));
        assert!(close(r.get(1, 0), 1.0 / 3.0, 1e-15));
        assert!(close(r.get(1, 1), 2.0 / 3.0, 1e-15));
    }

    #[test]
    fn single_source_takes_everything() {
        let s = SparseSimilarity::from_dense(&[
            vec![1.0, 0.3, 0.7],
            vec![0.3, 1.0, 0.0],
            vec![0.7, 0.0, 1.0],
        ])
        .unwrap();
        let r = responsibilities(&s, &[1.0, 0.0, 0.0]).unwrap();
        for i in 0..3 {
            assert_eq!(r.get(i, 0), 1.0);
            assert_eq!(r.row(i).0.len(), 1);
        }
    }

    #[test]
    fn config_validation() {
        let bad = [
            SolverConfig { tol: 0.0, ..Default::default() },
            SolverConfig { prune_eps: 1.0, ..Default::default() },
            SolverConfig { max_iter: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn non_convergence_is_flagged_not_failed() {
        let s = SparseSimilarity::from_dense(&[
            vec![1.0, 0.9, 0.1],
            vec![0.9, 1.0, 0.6],
            vec![0.1, 0.6, 1.0],
        ])
        .unwrap();
        let m = fit(&s, &SolverConfig { max_iter: 2, ..Default::default() }).unwrap();
        assert!(!m.converged);
        assert_eq!(m.iterations, 2);
        assert_eq!(m.loglik_trace.len(), 3);
    }

    #[test]
    fn zero_start_entries_get_revived() {
        // point 2 is only weakly covered by point 0, so the optimum needs q_2 > 0
        let s = SparseSimilarity::from_dense(&[
            vec![1.0, 0.0, 0.1],
            vec![0.0, 1.0, 0.0],
            vec![0.1, 0.0, 1.0],
        ])
        .unwrap();
        let m = fit_from(&s, &SolverConfig::default(), Some(&[0.5, 0.5, 0.0])).unwrap();
        assert!(m.converged, "{:?}", m.certificate);
        assert!(m.q[2] > 0.1);
        let reference = fit(&s, &SolverConfig::default()).unwrap();
        assert!(close(m.loglik_final, reference.loglik_final, 1e-9));
    }
}
