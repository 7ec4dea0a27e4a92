//! Expected signatures of empirical measures on streams and the regression
//! models built on them.
//!
//! Two feature routes are provided:
//!
//! * SES: the signature of the pathwise expected signature, a path in the
//!   tensor algebra, fitted with ridge regression in the primal.
//! * KES: a Gaussian kernel on expected signatures,
//!   `k(μ, ν) = exp(-σ² ‖𝔼S(μ) - 𝔼S(ν)‖²)`, fitted with kernel ridge
//!   regression. The squared distance is expanded as `E_μμ + E_νν - 2E_μν`
//!   where `E` averages pairwise signature kernels of the members.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, SigError};
use crate::kernel::{cross_gram, gram_with, KernelMode};
use crate::parallel::{self, Exec};
use crate::signature::{running_signatures, signature_tensor};
use crate::stream::Stream;
use crate::tensor::{tensor_size, TruncatedTensor};

/// A finitely supported probability measure on streams.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    streams: Vec<Stream>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Uniform weights.
    pub fn new(streams: Vec<Stream>) -> Result<Self> {
        let n = streams.len();
        Self::with_weights(streams, vec![1.0; n])
    }

    /// Positive weights, normalised to sum to one.
    pub fn with_weights(streams: Vec<Stream>, weights: Vec<f64>) -> Result<Self> {
        let d = streams
            .first()
            .ok_or_else(|| SigError::domain("an empirical measure needs at least one stream"))?
            .dim();
        if streams.iter().any(|s| s.dim() != d) {
            return Err(SigError::dim("all streams of a measure must share dimension"));
        }
        if weights.len() != streams.len() {
            return Err(SigError::dim(format!(
                "{} weights for {} streams",
                weights.len(),
                streams.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(SigError::domain("measure weights must be positive and finite"));
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(EmpiricalMeasure { streams, weights })
    }

    pub fn streams(&self) -> &[Stream] {
        &self.streams
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.streams[0].dim()
    }

    /// Sorted union of all member timestamps.
    pub fn knot_times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.streams.iter().flat_map(Stream::times).collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    /// `[max start, min end]` over members.
    pub fn common_span(&self) -> (f64, f64) {
        let lo = self.streams.iter().map(Stream::start_time).fold(f64::MIN, f64::max);
        let hi = self.streams.iter().map(Stream::end_time).fold(f64::MAX, f64::min);
        (lo, hi)
    }
}

/// Levelwise weighted mean of member signatures.
pub fn expected_signature(mu: &EmpiricalMeasure, depth: usize) -> TruncatedTensor {
    let mut acc = TruncatedTensor::zeros(mu.dim(), depth);
    for (s, &w) in mu.streams.iter().zip(&mu.weights) {
        acc.axpy(w, &signature_tensor(s, depth));
    }
    acc
}

/// `t ↦ 𝔼[S(X)_{a,t}]` sampled at `grid` (default: the union of member
/// knot times), as a stream in the coefficient space of `T^(depth)`.
pub fn pathwise_expected_signature(mu: &EmpiricalMeasure, grid: Option<&[f64]>, depth: usize) -> Result<Stream> {
    let grid = match grid {
        Some(g) => g.to_vec(),
        None => mu.knot_times(),
    };
    if grid.is_empty() {
        return Err(SigError::domain("empty evaluation grid"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SigError::domain("evaluation grid must be strictly increasing"));
    }
    for s in &mu.streams {
        if grid[0] < s.start_time() || grid[grid.len() - 1] > s.end_time() {
            return Err(SigError::domain(format!(
                "grid [{}, {}] leaves a member's span [{}, {}]",
                grid[0],
                grid[grid.len() - 1],
                s.start_time(),
                s.end_time()
            )));
        }
    }
    let width = tensor_size(mu.dim(), depth);
    let mut data = vec![0.0; grid.len() * width];
    for (s, &w) in mu.streams.iter().zip(&mu.weights) {
        for (row, sig) in data.chunks_exact_mut(width).zip(running_signatures(s, &grid, depth)?) {
            row.iter_mut().zip(sig.coefficients()).for_each(|(r, c)| *r += w * c);
        }
    }
    Stream::from_flat(width, data)?.with_times(grid)
}

/// Settings for SES features.
#[derive(Clone, Debug, PartialEq)]
pub struct SesConfig {
    /// Depth of the member signatures.
    pub inner_depth: usize,
    /// Depth of the outer signature of the pathwise expected signature.
    pub outer_depth: usize,
    /// Evaluation grid; `None` uses each measure's knot times.
    pub grid: Option<Vec<f64>>,
}

/// Depth-`outer_depth` signature of the pathwise expected signature.
pub fn ses_features(mu: &EmpiricalMeasure, config: &SesConfig) -> Result<Vec<f64>> {
    let path = pathwise_expected_signature(mu, config.grid.as_deref(), config.inner_depth)?;
    Ok(signature_tensor(&path, config.outer_depth).into_coefficients())
}

/// `E_μν = Σ_k Σ_l w_k v_l K(x_k, y_l)`.
pub fn e_term(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, mode: KernelMode) -> Result<f64> {
    let g = cross_gram(mu.streams(), nu.streams(), mode)?;
    let wm = DVector::from_column_slice(mu.weights());
    let wn = DVector::from_column_slice(nu.weights());
    Ok((wm.transpose() * g * wn)[(0, 0)])
}

/// Gaussian kernel on expected signatures, via E-terms with the truncated
/// signature kernel of depth `depth`.
pub fn kes_kernel(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, sigma: f64, depth: usize) -> Result<f64> {
    kes_kernel_with(mu, nu, sigma, KernelMode::Truncated { depth })
}

pub fn kes_kernel_with(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, sigma: f64, mode: KernelMode) -> Result<f64> {
    check_sigma(sigma)?;
    if mu.dim() != nu.dim() {
        return Err(SigError::dim("measures over streams of different dimension"));
    }
    let dist2 = e_term(mu, mu, mode)? + e_term(nu, nu, mode)? - 2.0 * e_term(mu, nu, mode)?;
    Ok((-sigma * sigma * dist2.max(0.0)).exp())
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(SigError::domain(format!("bandwidth must be positive, got {sigma}")));
    }
    Ok(())
}

/// All pairwise E-terms `E[i][j]` between `left` and `right` measures, using
/// one Gram matrix over all member streams.
fn e_matrix(left: &[EmpiricalMeasure], right: &[EmpiricalMeasure], mode: KernelMode, exec: Exec) -> Result<DMatrix<f64>> {
    let symmetric = std::ptr::eq(left, right);
    let flatten = |ms: &[EmpiricalMeasure]| -> (Vec<Stream>, Vec<usize>) {
        let mut all = Vec::new();
        let mut starts = vec![0];
        for m in ms {
            all.extend(m.streams().iter().cloned());
            starts.push(all.len());
        }
        (all, starts)
    };
    let (ls, lstart) = flatten(left);
    let g = if symmetric {
        gram_with(&ls, mode, exec)?
    } else {
        let (rs, _) = flatten(right);
        cross_gram(&ls, &rs, mode)?
    };
    let (_, rstart) = flatten(right);
    Ok(DMatrix::from_fn(left.len(), right.len(), |i, j| {
        let mut acc = 0.0;
        for (a, wa) in (lstart[i]..lstart[i + 1]).zip(left[i].weights()) {
            for (b, wb) in (rstart[j]..rstart[j + 1]).zip(right[j].weights()) {
                acc += wa * wb * g[(a, b)];
            }
        }
        acc
    }))
}

/// KES Gram matrix over a list of measures.
pub fn kes_gram(measures: &[EmpiricalMeasure], sigma: f64, mode: KernelMode) -> Result<DMatrix<f64>> {
    kes_gram_with(measures, sigma, mode, Exec::default())
}

pub fn kes_gram_with(measures: &[EmpiricalMeasure], sigma: f64, mode: KernelMode, exec: Exec) -> Result<DMatrix<f64>> {
    check_sigma(sigma)?;
    let e = e_matrix(measures, measures, mode, exec)?;
    let n = measures.len();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let d2 = (e[(i, i)] + e[(j, j)] - 2.0 * e[(i, j)]).max(0.0);
        (-sigma * sigma * d2).exp()
    }))
}

fn kes_cross(train: &[EmpiricalMeasure], query: &EmpiricalMeasure, sigma: f64, mode: KernelMode) -> Result<Vec<f64>> {
    let q = std::slice::from_ref(query);
    let e_tq = e_matrix(train, q, mode, Exec::default())?;
    let e_qq = e_term(query, query, mode)?;
    let diag: Vec<f64> = parallel::map(Exec::default(), train, |m| e_term(m, m, mode))
        .into_iter()
        .collect::<Result<_>>()?;
    Ok((0..train.len())
        .map(|i| (-sigma * sigma * (diag[i] + e_qq - 2.0 * e_tq[(i, 0)]).max(0.0)).exp())
        .collect())
}

/// Row matrix of features, one row per sample.
pub fn feature_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let p = rows
        .first()
        .ok_or_else(|| SigError::domain("no samples"))?
        .len();
    if rows.iter().any(|r| r.len() != p) {
        return Err(SigError::dim("feature rows of different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
}

/// Depth-`depth` signature coefficients of each stream as matrix rows.
pub fn signature_features(streams: &[Stream], depth: usize) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = parallel::map(Exec::default(), streams, |s| {
        signature_tensor(s, depth).into_coefficients()
    });
    feature_matrix(&rows)
}

/// Ridge weights `argmin ‖Xw - y‖² + λ‖w‖²` from the SVD of `X`.
/// With `λ = 0` this is the minimum-norm least-squares solution.
pub fn ridge_weights(features: &DMatrix<f64>, targets: &[f64], regularization: f64) -> Result<Vec<f64>> {
    let (n, p) = features.shape();
    if n == 0 || p == 0 {
        return Err(SigError::domain("cannot fit on empty data"));
    }
    if targets.len() != n {
        return Err(SigError::dim(format!("{} targets for {n} samples", targets.len())));
    }
    check_regularization(regularization)?;
    let svd = features.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let smax = svd.singular_values.max();
    let cutoff = f64::EPSILON * n.max(p) as f64 * smax;
    let uty = u.transpose() * DVector::from_column_slice(targets);
    let mut scaled = DVector::zeros(svd.singular_values.len());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if regularization > 0.0 {
            scaled[k] = s / (s * s + regularization) * uty[k];
        } else if s > cutoff {
            scaled[k] = uty[k] / s;
        }
    }
    Ok((vt.transpose() * scaled).iter().copied().collect())
}

/// Dual coefficients `α = (K + λI)^{-1} y` of kernel ridge regression.
/// With `λ = 0` the pseudo-inverse of `K` is used.
pub fn kernel_ridge_dual(gram: &DMatrix<f64>, targets: &[f64], regularization: f64) -> Result<Vec<f64>> {
    let n = gram.nrows();
    if n == 0 {
        return Err(SigError::domain("cannot fit on empty data"));
    }
    if gram.ncols() != n || targets.len() != n {
        return Err(SigError::dim("Gram matrix must be square and match the targets"));
    }
    check_regularization(regularization)?;
    let eig = SymmetricEigen::new(gram.clone());
    let emax = eig.eigenvalues.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let cutoff = f64::EPSILON * n as f64 * emax;
    let qty = eig.eigenvectors.transpose() * DVector::from_column_slice(targets);
    let mut scaled = DVector::zeros(n);
    for (k, &e) in eig.eigenvalues.iter().enumerate() {
        let shifted = e + regularization;
        if shifted.abs() > cutoff {
            scaled[k] = qty[k] / shifted;
        }
    }
    Ok((eig.eigenvectors * scaled).iter().copied().collect())
}

fn check_regularization(reg: f64) -> Result<()> {
    if !(reg.is_finite() && reg >= 0.0) {
        return Err(SigError::domain(format!("regularisation must be >= 0, got {reg}")));
    }
    Ok(())
}

/// A fitted regression model.
#[derive(Clone, Debug, PartialEq)]
pub enum RegressionModel {
    /// Primal ridge on caller-supplied features.
    Linear { weights: Vec<f64>, regularization: f64 },
    /// Primal ridge on SES features.
    Ses {
        weights: Vec<f64>,
        regularization: f64,
        config: SesConfig,
    },
    /// Kernel ridge on the KES kernel.
    Kes {
        dual: Vec<f64>,
        regularization: f64,
        sigma: f64,
        kernel: KernelMode,
        training: Vec<EmpiricalMeasure>,
    },
}

impl RegressionModel {
    pub fn fit_linear(features: &DMatrix<f64>, targets: &[f64], regularization: f64) -> Result<Self> {
        Ok(RegressionModel::Linear {
            weights: ridge_weights(features, targets, regularization)?,
            regularization,
        })
    }

    pub fn fit_ses(measures: &[EmpiricalMeasure], targets: &[f64], config: SesConfig, regularization: f64) -> Result<Self> {
        let rows: Vec<Vec<f64>> = parallel::map(Exec::default(), measures, |m| ses_features(m, &config))
            .into_iter()
            .collect::<Result<_>>()?;
        let x = feature_matrix(&rows)?;
        Ok(RegressionModel::Ses {
            weights: ridge_weights(&x, targets, regularization)?,
            regularization,
            config,
        })
    }

    pub fn fit_kes(
        measures: &[EmpiricalMeasure],
        targets: &[f64],
        sigma: f64,
        kernel: KernelMode,
        regularization: f64,
    ) -> Result<Self> {
        if measures.is_empty() {
            return Err(SigError::domain("cannot fit on empty data"));
        }
        let g = kes_gram(measures, sigma, kernel)?;
        Ok(RegressionModel::Kes {
            dual: kernel_ridge_dual(&g, targets, regularization)?,
            regularization,
            sigma,
            kernel,
            training: measures.to_vec(),
        })
    }

    /// Prediction from a precomputed feature vector (linear and SES models).
    pub fn predict_features(&self, features: &[f64]) -> Result<f64> {
        let weights = match self {
            RegressionModel::Linear { weights, .. } | RegressionModel::Ses { weights, .. } => weights,
            RegressionModel::Kes { .. } => {
                return Err(SigError::domain("kernel models predict from measures, not features"))
            }
        };
        if features.len() != weights.len() {
            return Err(SigError::dim(format!(
                "{} features for a model with {} weights",
                features.len(),
                weights.len()
            )));
        }
        Ok(features.iter().zip(weights).map(|(x, w)| x * w).sum())
    }

    /// Prediction for a measure (SES and KES models).
    pub fn predict_measure(&self, mu: &EmpiricalMeasure) -> Result<f64> {
        match self {
            RegressionModel::Ses { config, .. } => self.predict_features(&ses_features(mu, config)?),
            RegressionModel::Kes {
                dual,
                sigma,
                kernel,
                training,
                ..
            } => {
                let k = kes_cross(training, mu, *sigma, *kernel)?;
                Ok(k.iter().zip(dual).map(|(a, b)| a * b).sum())
            }
            RegressionModel::Linear { .. } => Err(SigError::domain(
                "a plain linear model needs features, not a measure",
            )),
        }
    }
}
