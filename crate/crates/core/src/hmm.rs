//! Left-to-right continuous-density HMMs with Gaussian-mixture emissions.
//!
//! Topology is fixed: every state has a self-loop and an arc to the next
//! state, the chain always starts in the first state, and the last state
//! absorbs. All scoring runs in the log domain. State indices are 0-based.
//!
//! A model either lets a path end in any state (`end_in_final = false`, used
//! for acoustic models) or requires it to end in the last state (used by the
//! suprasegmental layer, whose observation count equals its state count).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ObservationSequence;
use crate::gmm::{
    init_mixture_kmeans, log_add, log_sum_exp, per_dim_variance, DiagGaussian, GaussianMixture, MIN_VARIANCE,
};
use crate::seed::derive_seed_n;

/// A left-to-right GMM-HMM.
#[derive(Debug, Clone, PartialEq)]
pub struct LtrHmm {
    /// `log_trans[i][j]`; only `j == i` and `j == i + 1` may be finite.
    log_trans: Vec<Vec<f64>>,
    states: Vec<GaussianMixture>,
    end_in_final: bool,
}

/// Acoustic models are plain left-to-right HMMs.
pub type AcousticHmm = LtrHmm;

impl LtrHmm {
    /// Builds a model from probability-domain self-loop probabilities.
    /// `self_loops[i]` is `a_ii`; `a_i,i+1 = 1 - a_ii`. The last state's
    /// self-loop is forced to 1.
    pub fn from_self_loops(self_loops: &[f64], states: Vec<GaussianMixture>, end_in_final: bool) -> Result<Self> {
        let n = states.len();
        if self_loops.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: self_loops.len(),
            });
        }
        let mut log_trans = vec![vec![f64::NEG_INFINITY; n]; n];
        for i in 0..n {
            if i + 1 == n {
                log_trans[i][i] = 0.0;
            } else {
                let p = self_loops[i];
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidArgument(format!("self-loop probability {p}")));
                }
                log_trans[i][i] = p.ln();
                log_trans[i][i + 1] = (1.0 - p).ln();
            }
        }
        Self::new(log_trans, states, end_in_final)
    }

    pub fn new(log_trans: Vec<Vec<f64>>, states: Vec<GaussianMixture>, end_in_final: bool) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(Error::InvalidArgument("HMM needs at least one state".into()));
        }
        if log_trans.len() != n || log_trans.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument(format!("transition matrix must be {n}x{n}")));
        }
        let dim = states[0].dim();
        if let Some(s) = states.iter().find(|s| s.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: s.dim(),
            });
        }
        for (i, row) in log_trans.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let allowed = j == i || j == i + 1;
                if !allowed && v != f64::NEG_INFINITY {
                    return Err(Error::InvalidArgument(format!(
                        "transition {i}->{j} violates the left-to-right topology"
                    )));
                }
                if v > 0.0 || v.is_nan() {
                    return Err(Error::InvalidArgument(format!("log transition {i}->{j} = {v}")));
                }
            }
            let total: f64 = row.iter().map(|v| v.exp()).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("transition row {i} sums to {total}")));
            }
        }
        Ok(Self {
            log_trans,
            states,
            end_in_final,
        })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn num_mixtures(&self) -> usize {
        self.states[0].num_components()
    }

    pub fn end_in_final(&self) -> bool {
        self.end_in_final
    }

    pub fn log_transitions(&self) -> &[Vec<f64>] {
        &self.log_trans
    }

    pub fn log_transition(&self, from: usize, to: usize) -> f64 {
        self.log_trans[from][to]
    }

    pub fn states(&self) -> &[GaussianMixture] {
        &self.states
    }

    fn check_sequence(&self, obs: &[Vec<f64>]) -> Result<()> {
        if obs.is_empty() {
            return Err(Error::Empty("observation sequence".into()));
        }
        let dim = self.feature_dim();
        if let Some(v) = obs.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
        Ok(())
    }

    fn emission_table(&self, obs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        obs.iter()
            .map(|o| self.states.iter().map(|s| s.log_pdf_unchecked(o)).collect())
            .collect()
    }

    fn forward_table(&self, log_b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.num_states();
        let mut alpha = vec![vec![f64::NEG_INFINITY; n]; log_b.len()];
        alpha[0][0] = log_b[0][0];
        for t in 1..log_b.len() {
            for j in 0..n {
                let stay = alpha[t - 1][j] + self.log_trans[j][j];
                let enter = if j > 0 {
                    alpha[t - 1][j - 1] + self.log_trans[j - 1][j]
                } else {
                    f64::NEG_INFINITY
                };
                alpha[t][j] = log_add(stay, enter) + log_b[t][j];
            }
        }
        alpha
    }

    fn terminal_log_likelihood(&self, last: &[f64]) -> f64 {
        if self.end_in_final {
            last[last.len() - 1]
        } else {
            log_sum_exp(last)
        }
    }

    /// `log P(O | model)` by the forward recursion.
    pub fn forward_log_likelihood(&self, obs: &[Vec<f64>]) -> Result<f64> {
        self.check_sequence(obs)?;
        let alpha = self.forward_table(&self.emission_table(obs));
        Ok(self.terminal_log_likelihood(alpha.last().unwrap()))
    }

    /// Most likely state path and its joint log probability.
    pub fn viterbi(&self, obs: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
        self.check_sequence(obs)?;
        let log_b = self.emission_table(obs);
        let n = self.num_states();
        let len = obs.len();
        let mut score = vec![vec![f64::NEG_INFINITY; n]; len];
        let mut back = vec![vec![0usize; n]; len];
        score[0][0] = log_b[0][0];
        for t in 1..len {
            for j in 0..n {
                let stay = score[t - 1][j] + self.log_trans[j][j];
                let enter = if j > 0 {
                    score[t - 1][j - 1] + self.log_trans[j - 1][j]
                } else {
                    f64::NEG_INFINITY
                };
                let (best, from) = if enter > stay { (enter, j - 1) } else { (stay, j) };
                score[t][j] = best + log_b[t][j];
                back[t][j] = from;
            }
        }
        let last = &score[len - 1];
        let mut state = if self.end_in_final {
            n - 1
        } else {
            (0..n).fold(0, |best, j| if last[j] > last[best] { j } else { best })
        };
        let total = last[state];
        let mut path = vec![0; len];
        for t in (0..len).rev() {
            path[t] = state;
            state = back[t][state];
        }
        Ok((path, total))
    }
}

/// Free-function form of [`LtrHmm::forward_log_likelihood`].
pub fn forward_log_likelihood(hmm: &LtrHmm, obs: &ObservationSequence) -> Result<f64> {
    hmm.forward_log_likelihood(&obs.vectors)
}

/// Free-function form of [`LtrHmm::viterbi`].
pub fn viterbi(hmm: &LtrHmm, obs: &ObservationSequence) -> Result<(Vec<usize>, f64)> {
    hmm.viterbi(&obs.vectors)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub num_states: usize,
    pub num_mixtures: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
    /// Variance floor as a fraction of the global per-dimension data variance.
    pub variance_floor_ratio: f64,
    pub end_in_final: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_states: 9,
            num_mixtures: 10,
            max_iters: 20,
            rel_tol: 1e-4,
            seed: 0,
            variance_floor_ratio: 1e-3,
            end_in_final: false,
        }
    }
}

/// Outcome of a Baum-Welch run.
#[derive(Debug, Clone)]
pub struct Training {
    pub model: LtrHmm,
    /// Total training log-likelihood of every model visited, starting with
    /// the initial model; the last entry belongs to `model`.
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

/// Sufficient statistics gathered from one or more sequences.
#[derive(Debug, Clone)]
struct Accumulator {
    log_likelihood: f64,
    stay: Vec<f64>,
    advance: Vec<f64>,
    occupancy: Vec<Vec<f64>>,
    sum: Vec<Vec<Vec<f64>>>,
    sum_sq: Vec<Vec<Vec<f64>>>,
}

impl Accumulator {
    fn zeros(n: usize, m: usize, d: usize) -> Self {
        Self {
            log_likelihood: 0.0,
            stay: vec![0.0; n],
            advance: vec![0.0; n],
            occupancy: vec![vec![0.0; m]; n],
            sum: vec![vec![vec![0.0; d]; m]; n],
            sum_sq: vec![vec![vec![0.0; d]; m]; n],
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        self.log_likelihood += other.log_likelihood;
        let add = |a: &mut [f64], b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.stay, &other.stay);
        add(&mut self.advance, &other.advance);
        for j in 0..self.occupancy.len() {
            add(&mut self.occupancy[j], &other.occupancy[j]);
            for k in 0..self.sum[j].len() {
                add(&mut self.sum[j][k], &other.sum[j][k]);
                add(&mut self.sum_sq[j][k], &other.sum_sq[j][k]);
            }
        }
    }
}

impl LtrHmm {
    /// E-step statistics for one sequence.
    fn accumulate(&self, obs: &[Vec<f64>]) -> Result<Accumulator> {
        let n = self.num_states();
        let m = self.num_mixtures();
        let d = self.feature_dim();
        let len = obs.len();
        let mut comp = vec![vec![vec![0.0; m]; n]; len];
        let mut log_b = vec![vec![0.0; n]; len];
        for t in 0..len {
            for j in 0..n {
                self.states[j].weighted_component_log_pdfs(&obs[t], &mut comp[t][j]);
                log_b[t][j] = log_sum_exp(&comp[t][j]);
            }
        }
        let alpha = self.forward_table(&log_b);
        let ll = self.terminal_log_likelihood(&alpha[len - 1]);
        if !ll.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sequence has zero likelihood under the current model ({ll})"
            )));
        }
        let mut beta = vec![vec![f64::NEG_INFINITY; n]; len];
        if self.end_in_final {
            beta[len - 1][n - 1] = 0.0;
        } else {
            beta[len - 1].iter_mut().for_each(|b| *b = 0.0);
        }
        for t in (0..len - 1).rev() {
            for i in 0..n {
                let stay = self.log_trans[i][i] + log_b[t + 1][i] + beta[t + 1][i];
                let advance = if i + 1 < n {
                    self.log_trans[i][i + 1] + log_b[t + 1][i + 1] + beta[t + 1][i + 1]
                } else {
                    f64::NEG_INFINITY
                };
                beta[t][i] = log_add(stay, advance);
            }
        }

        let mut acc = Accumulator::zeros(n, m, d);
        acc.log_likelihood = ll;
        for t in 0..len {
            for j in 0..n {
                let gamma = alpha[t][j] + beta[t][j] - ll;
                if gamma == f64::NEG_INFINITY {
                    continue;
                }
                if t + 1 < len {
                    let stay = alpha[t][j] + self.log_trans[j][j] + log_b[t + 1][j] + beta[t + 1][j] - ll;
                    acc.stay[j] += stay.exp();
                    if j + 1 < n {
                        let adv =
                            alpha[t][j] + self.log_trans[j][j + 1] + log_b[t + 1][j + 1] + beta[t + 1][j + 1] - ll;
                        acc.advance[j] += adv.exp();
                    }
                }
                for k in 0..m {
                    let post = (gamma + comp[t][j][k] - log_b[t][j]).exp();
                    if post == 0.0 {
                        continue;
                    }
                    acc.occupancy[j][k] += post;
                    for (dd, &x) in obs[t].iter().enumerate() {
                        acc.sum[j][k][dd] += post * x;
                        acc.sum_sq[j][k][dd] += post * x * x;
                    }
                }
            }
        }
        Ok(acc)
    }

    /// M-step: re-estimates every parameter from pooled statistics.
    /// Components or states with no occupancy keep their previous values.
    fn reestimate(&self, acc: &Accumulator, floor: &[f64]) -> Result<LtrHmm> {
        let n = self.num_states();
        let mut log_trans = self.log_trans.clone();
        for i in 0..n.saturating_sub(1) {
            let total = acc.stay[i] + acc.advance[i];
            if total > 0.0 {
                log_trans[i][i] = (acc.stay[i] / total).ln();
                log_trans[i][i + 1] = (acc.advance[i] / total).ln();
            }
        }
        let mut states = Vec::with_capacity(n);
        for (j, old) in self.states.iter().enumerate() {
            let occ = &acc.occupancy[j];
            let state_occ: f64 = occ.iter().sum();
            if !(state_occ > 0.0) {
                states.push(old.clone());
                continue;
            }
            let mut weights = Vec::with_capacity(occ.len());
            let mut comps = Vec::with_capacity(occ.len());
            for (k, old_c) in old.components().iter().enumerate() {
                weights.push(occ[k] / state_occ);
                if occ[k] < 1e-12 * state_occ || occ[k] <= 0.0 {
                    comps.push(old_c.clone());
                    continue;
                }
                let mean: Vec<f64> = acc.sum[j][k].iter().map(|s| s / occ[k]).collect();
                let var: Vec<f64> = acc.sum_sq[j][k]
                    .iter()
                    .zip(&mean)
                    .zip(floor)
                    .map(|((sq, mu), fl)| (sq / occ[k] - mu * mu).max(*fl))
                    .collect();
                comps.push(DiagGaussian::new(mean, var)?);
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            states.push(GaussianMixture::new(weights, comps)?);
        }
        LtrHmm::new(log_trans, states, self.end_in_final)
    }
}

fn accumulate_all(model: &LtrHmm, data: &[&[Vec<f64>]]) -> Result<Accumulator> {
    // Per-sequence statistics are computed in parallel but merged in input
    // order, so the result does not depend on the thread count.
    let per_seq = data
        .par_iter()
        .map(|seq| model.accumulate(seq))
        .collect::<Result<Vec<_>>>()?;
    let mut total = Accumulator::zeros(model.num_states(), model.num_mixtures(), model.feature_dim());
    for a in &per_seq {
        total.merge(a);
    }
    Ok(total)
}

/// Variance floor: `ratio` times the global per-dimension variance of all
/// training vectors, never below [`MIN_VARIANCE`].
pub fn variance_floor(data: &[&[Vec<f64>]], ratio: f64) -> Vec<f64> {
    let all: Vec<&[f64]> = data.iter().flat_map(|s| s.iter().map(Vec::as_slice)).collect();
    per_dim_variance(&all)
        .into_iter()
        .map(|v| (v * ratio).max(MIN_VARIANCE))
        .collect()
}

/// Uniform segmentation of every sequence across the states, then seeded
/// k-means inside each state. Self-loop and advance probabilities start at 0.5.
pub fn initial_model(data: &[&[Vec<f64>]], config: &TrainConfig, floor: &[f64]) -> Result<LtrHmm> {
    let n = config.num_states;
    let mut per_state: Vec<Vec<&[f64]>> = vec![Vec::new(); n];
    for seq in data {
        let len = seq.len();
        for (t, v) in seq.iter().enumerate() {
            per_state[t * n / len].push(v.as_slice());
        }
    }
    let states = per_state
        .iter()
        .enumerate()
        .map(|(j, pts)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed_n(config.seed, &[j as u64]));
            init_mixture_kmeans(pts, config.num_mixtures, floor, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    LtrHmm::from_self_loops(&vec![0.5; n], states, config.end_in_final)
}

/// Maximum-likelihood training by Baum-Welch re-estimation.
///
/// Stops after `max_iters` re-estimations or once the relative improvement
/// of the total log-likelihood drops below `rel_tol`.
pub fn baum_welch_train(data: &[&[Vec<f64>]], config: &TrainConfig) -> Result<Training> {
    if data.is_empty() {
        return Err(Error::Empty("training data".into()));
    }
    if config.num_states == 0 || config.num_mixtures == 0 {
        return Err(Error::InvalidArgument(
            "num_states and num_mixtures must be >= 1".into(),
        ));
    }
    let dim = data[0].first().map_or(0, Vec::len);
    for seq in data {
        if seq.len() < config.num_states {
            return Err(Error::SequenceTooShort {
                len: seq.len(),
                states: config.num_states,
            });
        }
        if let Some(v) = seq.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
    }
    let floor = variance_floor(data, config.variance_floor_ratio);
    let mut model = initial_model(data, config, &floor)?;
    let mut history = Vec::with_capacity(config.max_iters + 1);
    let mut converged = false;
    for iter in 0..=config.max_iters {
        let acc = accumulate_all(&model, data)?;
        let ll = acc.log_likelihood;
        if let Some(&prev) = history.last() {
            let prev: f64 = prev;
            if (ll - prev) / prev.abs().max(f64::MIN_POSITIVE) < config.rel_tol {
                history.push(ll);
                converged = true;
                break;
            }
        }
        history.push(ll);
        if iter == config.max_iters {
            break;
        }
        model = model.reestimate(&acc, &floor)?;
    }
    log::debug!(
        "baum-welch: {} sequences, {} evaluations, final log-likelihood {:.6}",
        data.len(),
        history.len(),
        history.last().unwrap()
    );
    Ok(Training {
        model,
        log_likelihoods: history,
        converged,
    })
}

/// Convenience wrapper over observation sequences.
pub fn train_acoustic(data: &[&ObservationSequence], config: &TrainConfig) -> Result<Training> {
    let seqs: Vec<&[Vec<f64>]> = data.iter().map(|o| o.vectors.as_slice()).collect();
    baum_welch_train(&seqs, config)
}

/// Every valid path of `len` steps through an `n`-state left-to-right chain
/// starting in state 0. Used by tests and oracles; exponential in size.
pub fn enumerate_ltr_paths(n: usize, len: usize, end_in_final: bool) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut path = vec![0usize];
    fn rec(n: usize, len: usize, end_in_final: bool, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if path.len() == len {
            if !end_in_final || *path.last().unwrap() == n - 1 {
                out.push(path.clone());
            }
            return;
        }
        let cur = *path.last().unwrap();
        for next in [cur, cur + 1] {
            if next < n {
                path.push(next);
                rec(n, len, end_in_final, path, out);
                path.pop();
            }
        }
    }
    if len > 0 {
        rec(n, len, end_in_final, &mut path, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_model(rng: &mut ChaCha8Rng, n: usize, d: usize, m: usize, end_in_final: bool) -> LtrHmm {
        let states = (0..n)
            .map(|_| {
                let mut w: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
                let s: f64 = w.iter().sum();
                w.iter_mut().for_each(|x| *x /= s);
                let comps = (0..m)
                    .map(|_| {
                        DiagGaussian::new(
                            (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
                            (0..d).map(|_| rng.random_range(0.3..2.0)).collect(),
                        )
                        .unwrap()
                    })
                    .collect();
                GaussianMixture::new(w, comps).unwrap()
            })
            .collect();
        let loops: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
        LtrHmm::from_self_loops(&loops, states, end_in_final).unwrap()
    }

    fn path_log_prob(h: &LtrHmm, obs: &[Vec<f64>], path: &[usize]) -> f64 {
        let mut lp = h.states()[path[0]].log_pdf(&obs[0]).unwrap();
        for t in 1..path.len() {
            lp += h.log_transition(path[t - 1], path[t]) + h.states()[path[t]].log_pdf(&obs[t]).unwrap();
        }
        lp
    }

    #[test]
    fn single_state_forward_is_sum_of_emissions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_model(&mut rng, 1, 2, 2, false);
        let obs: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.random(), rng.random()]).collect();
        let direct: f64 = obs.iter().map(|o| h.states()[0].log_pdf(o).unwrap()).sum();
        assert!((h.forward_log_likelihood(&obs).unwrap() - direct).abs() < 1e-12);
        let (path, _) = h.viterbi(&obs).unwrap();
        assert!(path.iter().all(|&s| s == 0));
    }

    #[test]
    fn one_frame_uses_first_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random_model(&mut rng, 3, 2, 2, false);
        let o = vec![vec![0.3, -0.1]];
        assert_eq!(
            h.forward_log_likelihood(&o).unwrap(),
            h.states()[0].log_pdf(&o[0]).unwrap()
        );
    }

    #[test]
    fn forward_and_viterbi_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for end in [false, true] {
            let h = random_model(&mut rng, 3, 2, 2, end);
            for len in [3, 4, 5] {
                let obs: Vec<Vec<f64>> = (0..len)
                    .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
                    .collect();
                let paths = enumerate_ltr_paths(3, len, end);
                let scores: Vec<f64> = paths.iter().map(|p| path_log_prob(&h, &obs, p)).collect();
                let fwd = h.forward_log_likelihood(&obs).unwrap();
                assert!((fwd - log_sum_exp(&scores)).abs() < 1e-9);
                let (vpath, vscore) = h.viterbi(&obs).unwrap();
                let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!((vscore - best).abs() < 1e-9);
                assert!((path_log_prob(&h, &obs, &vpath) - best).abs() < 1e-9);
                assert!(vscore <= fwd + 1e-12);
                assert_eq!(vpath[0], 0);
                assert!(vpath.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
            }
        }
    }

    #[test]
    fn rejects_non_ltr_transitions() {
        let g = || GaussianMixture::single(vec![0.0], vec![1.0]).unwrap();
        let lt = vec![
            vec![0.5f64.ln(), 0.25f64.ln(), 0.25f64.ln()],
            vec![f64::NEG_INFINITY, 0.5f64.ln(), 0.5f64.ln()],
            vec![f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0],
        ];
        assert!(LtrHmm::new(lt, vec![g(), g(), g()], false).is_err());
    }

    #[test]
    fn empty_sequence_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = random_model(&mut rng, 2, 1, 1, false);
        assert!(h.forward_log_likelihood(&[]).is_err());
        assert!(h.viterbi(&[]).is_err());
    }

    fn sample_two_state(rng: &mut ChaCha8Rng, len: usize) -> Vec<Vec<f64>> {
        // state 0 around (-2, 0), state 1 around (2, 1), switch at a random point
        let switch = rng.random_range(1..len);
        (0..len)
            .map(|t| {
                let (mx, my) = if t < switch { (-2.0, 0.0) } else { (2.0, 1.0) };
                let nx: f64 = StandardNormal.sample(rng);
                let ny: f64 = StandardNormal.sample(rng);
                vec![mx + 0.5 * nx, my + 0.5 * ny]
            })
            .collect()
    }

    #[test]
    fn em_is_monotone_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<Vec<Vec<f64>>> = (0..20).map(|_| sample_two_state(&mut rng, 30)).collect();
        let refs: Vec<&[Vec<f64>]> = data.iter().map(Vec::as_slice).collect();
        let cfg = TrainConfig {
            num_states: 2,
            num_mixtures: 1,
            max_iters: 15,
            rel_tol: 0.0,
            seed: 9,
            ..TrainConfig::default()
        };
        let a = baum_welch_train(&refs, &cfg).unwrap();
        assert!(
            a.log_likelihoods.windows(2).all(|w| w[1] >= w[0] - 1e-6),
            "{:?}",
            a.log_likelihoods
        );
        assert!(a.log_likelihoods.last() >= a.log_likelihoods.first());
        let b = baum_welch_train(&refs, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.log_likelihoods, b.log_likelihoods);
        // recovered means
        let m0 = a.model.states()[0].components()[0].mean();
        let m1 = a.model.states()[1].components()[0].mean();
        assert!((m0[0] + 2.0).abs() < 0.2 && (m1[0] - 2.0).abs() < 0.2);
    }

    #[test]
    fn single_state_single_mixture_is_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let seq: Vec<Vec<f64>> = (0..50)
            .map(|_| vec![rng.random_range(-1.0..3.0), rng.random_range(0.0..0.1)])
            .collect();
        let cfg = TrainConfig {
            num_states: 1,
            num_mixtures: 1,
            max_iters: 3,
            ..TrainConfig::default()
        };
        let trained = baum_welch_train(&[seq.as_slice()], &cfg).unwrap();
        let c = &trained.model.states()[0].components()[0];
        let n = seq.len() as f64;
        for d in 0..2 {
            let mean = seq.iter().map(|v| v[d]).sum::<f64>() / n;
            let var = seq.iter().map(|v| (v[d] - mean).powi(2)).sum::<f64>() / n;
            assert!((c.mean()[d] - mean).abs() < 1e-6);
            assert!((c.variance()[d] - var.max(1e-3 * var)).abs() < 1e-6);
        }
    }

    #[test]
    fn training_preserves_zero_pattern() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data: Vec<Vec<Vec<f64>>> = (0..8).map(|_| sample_two_state(&mut rng, 12)).collect();
        let refs: Vec<&[Vec<f64>]> = data.iter().map(Vec::as_slice).collect();
        let cfg = TrainConfig {
            num_states: 4,
            num_mixtures: 2,
            max_iters: 5,
            ..TrainConfig::default()
        };
        let t = baum_welch_train(&refs, &cfg).unwrap();
        for (i, row) in t.model.log_transitions().iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if j != i && j != i + 1 {
                    assert_eq!(v, f64::NEG_INFINITY);
                }
            }
            let s: f64 = row.iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn training_input_validation() {
        let cfg = TrainConfig {
            num_states: 3,
            num_mixtures: 1,
            ..TrainConfig::default()
        };
        assert!(matches!(baum_welch_train(&[], &cfg), Err(Error::Empty(_))));
        let short = vec![vec![0.0]; 2];
        assert!(matches!(
            baum_welch_train(&[short.as_slice()], &cfg),
            Err(Error::SequenceTooShort { len: 2, states: 3 })
        ));
    }

    #[test]
    fn path_enumeration_counts() {
        // free ending: C(T-1, k) summed over reachable k
        assert_eq!(enumerate_ltr_paths(3, 4, false).len(), 1 + 3 + 3);
        assert_eq!(enumerate_ltr_paths(3, 3, true), vec![vec![0, 1, 2]]);
        assert_eq!(enumerate_ltr_paths(1, 5, false), vec![vec![0; 5]]);
    }
}
