//! Diagonal-covariance Gaussian mixtures and the k-means initializer used to
//! seed them.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Smallest variance ever allowed, whatever the data-relative floor says.
pub const MIN_VARIANCE: f64 = 1e-8;

const LN_2PI: f64 = 1.837_877_066_409_345_5; // ln(2 pi)

/// Numerically stable `log(sum(exp(xs)))`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let max = a.max(b);
    max + ((a - max).exp() + (b - max).exp()).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    variance: Vec<f64>,
    log_norm: f64,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.len() != variance.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                actual: variance.len(),
            });
        }
        if mean.is_empty() {
            return Err(Error::InvalidArgument("zero-dimensional Gaussian".into()));
        }
        if let Some(v) = variance.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "variance {v} is not positive and finite"
            )));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("non-finite mean".into()));
        }
        let log_norm = -0.5 * variance.iter().map(|v| LN_2PI + v.ln()).sum::<f64>();
        Ok(Self {
            mean,
            variance,
            log_norm,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Log density; the caller guarantees `x.len() == self.dim()`.
    pub fn log_pdf_unchecked(&self, x: &[f64]) -> f64 {
        let quad: f64 = x
            .iter()
            .zip(&self.mean)
            .zip(&self.variance)
            .map(|((xi, mi), vi)| {
                let d = xi - mi;
                d * d / vi
            })
            .sum();
        self.log_norm - 0.5 * quad
    }
}

/// Weighted sum of diagonal Gaussians with a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    components: Vec<DiagGaussian>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, components: Vec<DiagGaussian>) -> Result<Self> {
        if components.is_empty() || weights.len() != components.len() {
            return Err(Error::InvalidArgument(format!(
                "mixture needs matching non-empty weights and components ({} vs {})",
                weights.len(),
                components.len()
            )));
        }
        let dim = components[0].dim();
        if let Some(c) = components.iter().find(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: c.dim(),
            });
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidArgument("negative mixture weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("mixture weights sum to {total}")));
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            weights,
            log_weights,
            components,
        })
    }

    /// Single-component mixture.
    pub fn single(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        Self::new(vec![1.0], vec![DiagGaussian::new(mean, variance)?])
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[DiagGaussian] {
        &self.components
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// `log w_k + log N(x; mu_k, sigma_k)` for every component, written to `out`.
    pub(crate) fn weighted_component_log_pdfs(&self, x: &[f64], out: &mut [f64]) {
        for ((o, lw), c) in out.iter_mut().zip(&self.log_weights).zip(&self.components) {
            *o = if *lw == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                lw + c.log_pdf_unchecked(x)
            };
        }
    }

    pub(crate) fn log_pdf_unchecked(&self, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.components.len()];
        self.weighted_component_log_pdfs(x, &mut buf);
        log_sum_exp(&buf)
    }

    /// Log density of the mixture, via log-sum-exp over components.
    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.log_pdf_unchecked(x))
    }
}

/// Per-dimension population variance of a set of vectors.
pub fn per_dim_variance(points: &[&[f64]]) -> Vec<f64> {
    let dim = points.first().map_or(0, |p| p.len());
    let n = points.len() as f64;
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, x) in mean.iter_mut().zip(p.iter()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for p in points {
        for ((v, x), m) in var.iter_mut().zip(p.iter()).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    var
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by Lloyd iterations. Returns the centroids and
/// the cluster assignment of every point.
pub fn kmeans(points: &[&[f64]], k: usize, max_iters: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<usize>) {
    assert!(!points.is_empty() && k > 0);
    let n = points.len();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)].to_vec());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            points[idx].to_vec()
        } else {
            // all remaining points coincide with a centroid
            points[centroids.len() % n].to_vec()
        };
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &next));
        }
        centroids.push(next);
    }

    let mut assign = vec![0usize; n];
    for iter in 0..max_iters.max(1) {
        let mut changed = iter == 0;
        for (a, p) in assign.iter_mut().zip(points) {
            let best = (0..k)
                .min_by(|&i, &j| sq_dist(p, &centroids[i]).total_cmp(&sq_dist(p, &centroids[j])))
                .unwrap();
            if *a != best {
                changed = true;
                *a = best;
            }
        }
        if !changed {
            break;
        }
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (a, p) in assign.iter().zip(points) {
            counts[*a] += 1;
            for (s, x) in sums[*a].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    (centroids, assign)
}

/// Builds an initial mixture from points by k-means clustering.
///
/// Cluster variances are floored at `floor`; clusters with fewer than two
/// points borrow the variance of the whole point set.
pub fn init_mixture_kmeans(
    points: &[&[f64]],
    num_components: usize,
    floor: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<GaussianMixture> {
    if points.is_empty() {
        return Err(Error::Empty("no points to initialize a mixture".into()));
    }
    let dim = points[0].len();
    let global_var = per_dim_variance(points);
    let (centroids, assign) = kmeans(points, num_components, 20, rng);
    let mut weights = Vec::with_capacity(num_components);
    let mut comps = Vec::with_capacity(num_components);
    for (c, centroid) in centroids.into_iter().enumerate() {
        let members: Vec<&[f64]> = points
            .iter()
            .zip(&assign)
            .filter(|(_, &a)| a == c)
            .map(|(p, _)| *p)
            .collect();
        let var = if members.len() >= 2 {
            per_dim_variance(&members)
        } else {
            global_var.clone()
        };
        let var: Vec<f64> = (0..dim).map(|d| var[d].max(floor[d]).max(MIN_VARIANCE)).collect();
        weights.push(members.len().max(1) as f64);
        comps.push(DiagGaussian::new(centroid, var)?);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    GaussianMixture::new(weights, comps)
}

/// Probability-domain density of a diagonal Gaussian, for oracles.
pub fn gaussian_pdf_direct(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(var)
        .map(|((xi, mi), vi)| (-(xi - mi).powi(2) / (2.0 * vi)).exp() / (2.0 * PI * vi).sqrt())
        .product()
}
