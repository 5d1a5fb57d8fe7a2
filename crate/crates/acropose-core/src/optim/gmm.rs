//! Gaussian mixture model: EM fitting and negative log-probability with
//! analytic gradient, used as the pose prior during fitting.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mixture of full-covariance Gaussians. Covariances are stored through their
/// lower-triangular Cholesky factors (`sigma = L Lᵀ`).
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    chol: Vec<DMatrix<f64>>,
    /// Cached `log( (2π)^{-D/2} |Σ|^{-1/2} )` per component.
    log_norm: Vec<f64>,
}

impl GmmModel {
    pub fn new(weights: Vec<f64>, means: Vec<DVector<f64>>, chol: Vec<DMatrix<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != chol.len() {
            return Err(Error::InvalidInput("mixture component counts disagree".into()));
        }
        let d = means[0].len();
        let weight_sum: f64 = weights.iter().sum();
        if (weight_sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "mixture weights sum to {weight_sum}, expected 1"
            )));
        }
        for (k, (mean, l)) in means.iter().zip(chol.iter()).enumerate() {
            if mean.len() != d || l.nrows() != d || l.ncols() != d {
                return Err(Error::dimension(format!("mixture component {k}"), d, mean.len()));
            }
            for i in 0..d {
                if l[(i, i)] <= 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "component {k} covariance factor is not positive definite"
                    )));
                }
                for jj in i + 1..d {
                    if l[(i, jj)] != 0.0 {
                        return Err(Error::InvalidInput(format!(
                            "component {k} factor is not lower triangular"
                        )));
                    }
                }
            }
        }
        let log_norm = chol
            .iter()
            .map(|l| {
                let log_det_half: f64 = (0..d).map(|i| l[(i, i)].ln()).sum();
                -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() - log_det_half
            })
            .collect();
        Ok(Self {
            weights,
            means,
            chol,
            log_norm,
        })
    }

    pub fn component_count(&self) -> usize {
        self.weights.len()
    }

    pub fn dims(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn chol_factors(&self) -> &[DMatrix<f64>] {
        &self.chol
    }
}

/// EM fit output: the model plus the log-likelihood trace (one entry per
/// iteration, non-decreasing).
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    pub log_likelihood: Vec<f64>,
    pub reseeded_components: usize,
}

const COVARIANCE_RIDGE: f64 = 1e-6;

/// Fit a K-component mixture by expectation maximization.
///
/// Means are seeded k-means++ style from `seed`; covariances are regularized
/// with a `1e-6` ridge so the Cholesky factorization always exists. An empty
/// component is re-seeded from the sample farthest from all current means.
pub fn gmm_fit_em(
    samples: &[DVector<f64>],
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<GmmFit> {
    if k < 1 {
        return Err(Error::InvalidInput("gmm needs k >= 1".into()));
    }
    let n = samples.len();
    if n == 0 {
        return Err(Error::InvalidInput("gmm needs samples".into()));
    }
    let d = samples[0].len();
    if samples.iter().any(|s| s.len() != d) {
        return Err(Error::dimension("gmm samples", d, "mixed"));
    }
    if n <= k * d {
        return Err(Error::InvalidInput(format!(
            "gmm needs more than k*d = {} samples, got {n}",
            k * d
        )));
    }

    let mut rng = StdRng::seed_from_u64(seed);
    let mut means = seed_means(samples, k, &mut rng);
    let data_cov = sample_covariance(samples);
    let mut chol: Vec<DMatrix<f64>> = vec![factorize(&data_cov)?; k];
    let mut weights = vec![1.0 / k as f64; k];
    let mut log_norm = log_norms(&chol);

    let mut history = Vec::new();
    let mut reseeded = 0usize;
    let mut resp = DMatrix::<f64>::zeros(n, k);

    for _iter in 0..max_iters {
        // E-step.
        let mut ll = 0.0;
        for (i, x) in samples.iter().enumerate() {
            let mut log_p = vec![0.0; k];
            for c in 0..k {
                let maha2 = mahalanobis_sq(&chol[c], x, &means[c]);
                log_p[c] = weights[c].max(1e-300).ln() + log_norm[c] - 0.5 * maha2;
            }
            let lse = log_sum_exp(&log_p);
            ll += lse;
            for c in 0..k {
                resp[(i, c)] = (log_p[c] - lse).exp();
            }
        }
        history.push(ll);
        if history.len() >= 2 {
            let prev = history[history.len() - 2];
            if (ll - prev).abs() <= tol * (1.0 + ll.abs()) {
                break;
            }
        }

        // M-step.
        for c in 0..k {
            let n_c: f64 = (0..n).map(|i| resp[(i, c)]).sum();
            if n_c < 1e-10 * n as f64 {
                log::warn!("gmm: component {c} emptied, re-seeding from farthest sample");
                reseeded += 1;
                let far = farthest_sample(samples, &means);
                means[c] = samples[far].clone();
                chol[c] = factorize(&data_cov)?;
                weights[c] = 1.0 / n as f64;
                continue;
            }
            weights[c] = n_c / n as f64;
            let mut mu = DVector::<f64>::zeros(d);
            for (i, x) in samples.iter().enumerate() {
                mu += x * resp[(i, c)];
            }
            mu /= n_c;
            let mut cov = DMatrix::<f64>::zeros(d, d);
            for (i, x) in samples.iter().enumerate() {
                let delta = x - &mu;
                cov.syger(resp[(i, c)], &delta, &delta, 1.0);
            }
            cov /= n_c;
            means[c] = mu;
            chol[c] = factorize(&cov)?;
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        log_norm = log_norms(&chol);
    }

    let model = GmmModel::new(weights, means, chol)?;
    Ok(GmmFit {
        model,
        log_likelihood: history,
        reseeded_components: reseeded,
    })
}

fn seed_means(samples: &[DVector<f64>], k: usize, rng: &mut StdRng) -> Vec<DVector<f64>> {
    let n = samples.len();
    let mut means = Vec::with_capacity(k);
    means.push(samples[rng.random_range(0..n)].clone());
    while means.len() < k {
        // k-means++: sample proportional to squared distance to nearest mean.
        let d2: Vec<f64> = samples
            .iter()
            .map(|x| {
                means
                    .iter()
                    .map(|m| (x - m).norm_squared())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            means.push(samples[rng.random_range(0..n)].clone());
            continue;
        }
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = n - 1;
        for (i, w) in d2.iter().enumerate() {
            pick -= w;
            if pick <= 0.0 {
                chosen = i;
                break;
            }
        }
        means.push(samples[chosen].clone());
    }
    means
}

fn sample_covariance(samples: &[DVector<f64>]) -> DMatrix<f64> {
    let n = samples.len();
    let d = samples[0].len();
    let mut mean = DVector::<f64>::zeros(d);
    for x in samples {
        mean += x;
    }
    mean /= n as f64;
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for x in samples {
        let delta = x - &mean;
        cov.syger(1.0, &delta, &delta, 1.0);
    }
    cov / n as f64
}

fn factorize(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = cov.nrows();
    let mut ridge = COVARIANCE_RIDGE;
    for _ in 0..8 {
        let regularized = cov + DMatrix::<f64>::identity(d, d) * ridge;
        if let Some(c) = Cholesky::new(regularized) {
            return Ok(c.unpack());
        }
        ridge *= 10.0;
    }
    Err(Error::Numerical("covariance not positive definite even after regularization".into()))
}

fn log_norms(chol: &[DMatrix<f64>]) -> Vec<f64> {
    let d = chol[0].nrows();
    chol.iter()
        .map(|l| {
            let log_det_half: f64 = (0..d).map(|i| l[(i, i)].ln()).sum();
            -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() - log_det_half
        })
        .collect()
}

fn farthest_sample(samples: &[DVector<f64>], means: &[DVector<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = -1.0;
    for (i, x) in samples.iter().enumerate() {
        let d = means
            .iter()
            .map(|m| (x - m).norm_squared())
            .fold(f64::INFINITY, f64::min);
        if d > best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn mahalanobis_sq(l: &DMatrix<f64>, x: &DVector<f64>, mean: &DVector<f64>) -> f64 {
    let delta = x - mean;
    let z = l.solve_lower_triangular(&delta).expect("positive diagonal");
    z.norm_squared()
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `-log Σ_k w_k N(x; μ_k, Σ_k)` and its gradient with respect to `x`.
pub fn gmm_neg_log_prob(model: &GmmModel, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    let d = model.dims();
    if x.len() != d {
        return Err(Error::dimension("gmm query point", d, x.len()));
    }
    let k = model.component_count();
    let mut log_p = vec![0.0; k];
    let mut whitened = Vec::with_capacity(k);
    for c in 0..k {
        let delta = x - &model.means[c];
        let z = model.chol[c]
            .solve_lower_triangular(&delta)
            .expect("positive diagonal");
        log_p[c] = model.weights[c].max(1e-300).ln() + model.log_norm[c] - 0.5 * z.norm_squared();
        whitened.push(z);
    }
    let lse = log_sum_exp(&log_p);
    let mut grad = DVector::<f64>::zeros(d);
    for c in 0..k {
        let gamma = (log_p[c] - lse).exp();
        // ∂(-log p)/∂x = Σ_k γ_k Σ_k^{-1} (x - μ_k); backsolve Lᵀ on the whitened residual.
        let sigma_inv_delta = model.chol[c]
            .transpose()
            .solve_upper_triangular(&whitened[c])
            .expect("positive diagonal");
        grad += sigma_inv_delta * gamma;
    }
    Ok((-lse, grad))
}

#[derive(Serialize, Deserialize)]
struct GmmFile {
    components: usize,
    dims: usize,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    /// Row-major lower-triangular Cholesky factor per component.
    chol_factors: Vec<Vec<f64>>,
}

pub fn save_gmm(model: &GmmModel, path: &Path) -> Result<()> {
    let d = model.dims();
    let file = GmmFile {
        components: model.component_count(),
        dims: d,
        weights: model.weights.clone(),
        means: model.means.iter().map(|m| m.iter().cloned().collect()).collect(),
        chol_factors: model
            .chol
            .iter()
            .map(|l| {
                let mut row_major = Vec::with_capacity(d * d);
                for i in 0..d {
                    for jj in 0..d {
                        row_major.push(l[(i, jj)]);
                    }
                }
                row_major
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::InvalidInput(format!("gmm serialization: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_gmm(path: &Path) -> Result<GmmModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: GmmFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let d = file.dims;
    if file.weights.len() != file.components {
        return Err(Error::InvalidInput("gmm file: weight count mismatch".into()));
    }
    let means = file
        .means
        .into_iter()
        .map(DVector::from_vec)
        .collect::<Vec<_>>();
    let chol = file
        .chol_factors
        .into_iter()
        .map(|flat| {
            if flat.len() != d * d {
                return Err(Error::InvalidInput("gmm file: factor size mismatch".into()));
            }
            Ok(DMatrix::from_fn(d, d, |i, jj| flat[i * d + jj]))
        })
        .collect::<Result<Vec<_>>>()?;
    GmmModel::new(file.weights, means, chol)
}
