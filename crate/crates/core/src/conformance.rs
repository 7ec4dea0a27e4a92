//! Variance-norm conformance scoring of streams against a corpus.
//!
//! Streams are mapped to their truncated signatures (levels `1..=N`). The
//! corpus features define an empirical measure whose centred covariance
//! induces the variance norm
//! `‖w‖ = sqrt(Σ_i <w, u_i>² / λ_i)` over the retained principal directions,
//! and `+∞` for vectors with a component outside their span. The conformance
//! of a query is its smallest variance-norm distance to a corpus member.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SigError};
use crate::parallel::{self, Exec};
use crate::signature::signature_tensor;
use crate::stream::Stream;

pub const DEFAULT_RCOND: f64 = 1e-10;
const MODEL_MAGIC: &str = "sigstream-conformance";
const MODEL_VERSION: u32 = 1;

/// Signature coefficients of levels `1..=depth` (the constant term dropped).
pub fn stream_features(s: &Stream, depth: usize) -> Vec<f64> {
    signature_tensor(s, depth).coefficients()[1..].to_vec()
}

/// Fitted corpus statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct ConformanceModel {
    /// Signature depth the features were built with; `0` for raw features.
    pub depth: usize,
    /// One row per corpus member.
    pub corpus_features: DMatrix<f64>,
    pub mean: DVector<f64>,
    /// Variances along the principal directions, descending.
    pub spectrum: DVector<f64>,
    /// Unit principal directions as columns, matching `spectrum`.
    pub directions: DMatrix<f64>,
    pub rcond: f64,
}

/// Result of [`ConformanceModel::conformance`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConformanceScore {
    /// Non-negative distance, `f64::INFINITY` outside the corpus span.
    pub value: f64,
    /// Corpus member attaining the minimum (lowest index on ties).
    pub nearest_index: usize,
}

impl ConformanceModel {
    /// Fits on the depth-`depth` signature features of `corpus`.
    pub fn fit(corpus: &[Stream], depth: usize) -> Result<Self> {
        Self::fit_with(corpus, depth, DEFAULT_RCOND, Exec::default())
    }

    pub fn fit_with(corpus: &[Stream], depth: usize, rcond: f64, exec: Exec) -> Result<Self> {
        if corpus.len() < 2 {
            return Err(SigError::domain("a conformance corpus needs at least two streams"));
        }
        if depth == 0 {
            return Err(SigError::domain("feature depth must be at least 1"));
        }
        let d = corpus[0].dim();
        if corpus.iter().any(|s| s.dim() != d) {
            return Err(SigError::dim("corpus streams must share dimension"));
        }
        let rows = parallel::map(exec, corpus, |s| stream_features(s, depth));
        let mut model = Self::from_feature_rows(&rows, rcond)?;
        model.depth = depth;
        Ok(model)
    }

    /// Fits directly on feature vectors.
    pub fn from_features(features: &[Vec<f64>]) -> Result<Self> {
        Self::from_feature_rows(features, DEFAULT_RCOND)
    }

    pub fn from_feature_rows(features: &[Vec<f64>], rcond: f64) -> Result<Self> {
        if features.len() < 2 {
            return Err(SigError::domain("a conformance corpus needs at least two members"));
        }
        let p = features[0].len();
        if p == 0 || features.iter().any(|f| f.len() != p) {
            return Err(SigError::dim("corpus features must share a nonzero length"));
        }
        if !(rcond.is_finite() && rcond >= 0.0) {
            return Err(SigError::domain("rcond must be non-negative"));
        }
        let n = features.len();
        let x = DMatrix::from_fn(n, p, |i, j| features[i][j]);
        let mean = DVector::from_fn(p, |j, _| x.column(j).mean());
        let mut centred = x.clone();
        for mut row in centred.row_iter_mut() {
            row -= mean.transpose();
        }
        let svd = (centred / (n as f64).sqrt()).svd(false, true);
        let vt = svd.v_t.ok_or_else(|| SigError::Overflow("covariance factorization failed".into()))?;
        let k = svd.singular_values.len();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let spectrum = DVector::from_fn(k, |i, _| svd.singular_values[order[i]].powi(2));
        let directions = DMatrix::from_fn(p, k, |j, i| vt[(order[i], j)]);
        Ok(ConformanceModel {
            depth: 0,
            corpus_features: x,
            mean,
            spectrum,
            directions,
            rcond,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn corpus_len(&self) -> usize {
        self.corpus_features.nrows()
    }

    /// Number of principal directions whose singular value exceeds
    /// `rcond * σ_max`.
    pub fn rank(&self) -> usize {
        let top = self.spectrum.get(0).copied().unwrap_or(0.0).sqrt();
        if top <= 0.0 {
            return 0;
        }
        self.spectrum.iter().take_while(|&&l| l.sqrt() > self.rcond * top).count()
    }

    /// Mahalanobis norm of `w`, or `+∞` if `w` leaves the retained span.
    pub fn variance_norm(&self, w: &[f64]) -> Result<f64> {
        if w.len() != self.dim() {
            return Err(SigError::dim(format!(
                "vector of length {} for a model of dimension {}",
                w.len(),
                self.dim()
            )));
        }
        Ok(self.norm_unchecked(w))
    }

    fn norm_unchecked(&self, w: &[f64]) -> f64 {
        let wn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if wn == 0.0 {
            return 0.0;
        }
        let mut residual = w.to_vec();
        let mut quad = 0.0;
        for k in 0..self.rank() {
            let u = self.directions.column(k);
            let proj: f64 = u.iter().zip(w).map(|(u, x)| u * x).sum();
            quad += proj * proj / self.spectrum[k];
            residual.iter_mut().zip(u.iter()).for_each(|(r, u)| *r -= proj * u);
        }
        let outside = residual.iter().map(|x| x * x).sum::<f64>().sqrt();
        if outside > self.rcond.max(f64::EPSILON * 64.0) * wn {
            f64::INFINITY
        } else {
            quad.sqrt()
        }
    }

    /// Smallest variance-norm distance from a feature vector to the corpus.
    pub fn conformance_features(&self, features: &[f64]) -> Result<ConformanceScore> {
        if features.len() != self.dim() {
            return Err(SigError::dim(format!(
                "query has {} features, model has {}",
                features.len(),
                self.dim()
            )));
        }
        let mut best = ConformanceScore {
            value: f64::INFINITY,
            nearest_index: 0,
        };
        let mut diff = vec![0.0; self.dim()];
        for (i, row) in self.corpus_features.row_iter().enumerate() {
            diff.iter_mut()
                .zip(features)
                .zip(row.iter())
                .for_each(|((d, q), c)| *d = q - c);
            let v = self.norm_unchecked(&diff);
            if v < best.value {
                best = ConformanceScore {
                    value: v,
                    nearest_index: i,
                };
            }
        }
        Ok(best)
    }

    /// Conformance of a stream. Requires a model fitted on streams.
    pub fn conformance(&self, x: &Stream) -> Result<ConformanceScore> {
        if self.depth == 0 {
            return Err(SigError::domain("model was fitted on raw features, not streams"));
        }
        self.conformance_features(&stream_features(x, self.depth))
    }

    pub fn conformance_batch(&self, queries: &[Stream], exec: Exec) -> Result<Vec<ConformanceScore>> {
        parallel::map(exec, queries, |q| self.conformance(q)).into_iter().collect()
    }

    /// Writes the model as a versioned line-oriented text file.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let row = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "{MODEL_MAGIC} {MODEL_VERSION}");
        let _ = writeln!(out, "depth {}", self.depth);
        let _ = writeln!(out, "dim {}", self.dim());
        let _ = writeln!(out, "corpus {}", self.corpus_len());
        let _ = writeln!(out, "rcond {}", self.rcond);
        let _ = writeln!(out, "components {}", self.spectrum.len());
        let _ = writeln!(out, "mean {}", row(&mut self.mean.iter().copied()));
        let _ = writeln!(out, "spectrum {}", row(&mut self.spectrum.iter().copied()));
        for k in 0..self.spectrum.len() {
            let _ = writeln!(out, "direction {}", row(&mut self.directions.column(k).iter().copied()));
        }
        for r in self.corpus_features.row_iter() {
            let _ = writeln!(out, "feature {}", row(&mut r.iter().copied()));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| SigError::parse("empty model file"))?;
        let mut head = header.split_whitespace();
        if head.next() != Some(MODEL_MAGIC) {
            return Err(SigError::parse("not a conformance model file"));
        }
        let version: u32 = head
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| SigError::parse("missing model version"))?;
        if version != MODEL_VERSION {
            return Err(SigError::parse(format!("unsupported model version {version}")));
        }
        let mut field = |name: &str| -> Result<Vec<f64>> {
            let line = lines
                .next()
                .ok_or_else(|| SigError::parse(format!("model file ends before {name}")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(name) {
                return Err(SigError::parse(format!("expected {name} line, got {line:?}")));
            }
            parts
                .map(|t| t.parse::<f64>().map_err(|_| SigError::parse(format!("bad number {t:?} in {name}"))))
                .collect()
        };
        let scalar = |v: Vec<f64>, name: &str| -> Result<f64> {
            match v.as_slice() {
                [x] => Ok(*x),
                _ => Err(SigError::parse(format!("{name} takes one value"))),
            }
        };
        let depth = scalar(field("depth")?, "depth")? as usize;
        let dim = scalar(field("dim")?, "dim")? as usize;
        let n = scalar(field("corpus")?, "corpus")? as usize;
        let rcond = scalar(field("rcond")?, "rcond")?;
        let components = scalar(field("components")?, "components")? as usize;
        let sized = |v: Vec<f64>, name: &str| -> Result<Vec<f64>> {
            if v.len() != dim {
                return Err(SigError::parse(format!("{name} has {} values, expected {dim}", v.len())));
            }
            Ok(v)
        };
        let mean = DVector::from_vec(sized(field("mean")?, "mean")?);
        let spectrum = DVector::from_vec(field("spectrum")?);
        if spectrum.len() != components {
            return Err(SigError::parse("spectrum length disagrees with component count"));
        }
        let mut dirs = Vec::with_capacity(dim * components);
        for _ in 0..components {
            dirs.extend(sized(field("direction")?, "direction")?);
        }
        let mut feats = Vec::with_capacity(n * dim);
        for _ in 0..n {
            feats.extend(sized(field("feature")?, "feature")?);
        }
        if lines.next().is_some() {
            return Err(SigError::parse("trailing data after corpus features"));
        }
        Ok(ConformanceModel {
            depth,
            corpus_features: DMatrix::from_row_slice(n, dim, &feats),
            mean,
            spectrum,
            directions: DMatrix::from_column_slice(dim, components, &dirs),
            rcond,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| SigError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SigError::io(path, e))?;
        Self::from_text(&text)
    }
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        let (a, b) = (values[n / 2 - 1], values[n / 2]);
        if b.is_infinite() {
            b
        } else {
            0.5 * (a + b)
        }
    }
}

/// Threshold of conformance for a given split: the model is fitted on
/// `reference` and `R` is the median conformance of the `held_out` members.
pub fn calibrate_threshold_split(reference: &[Stream], held_out: &[Stream], depth: usize) -> Result<f64> {
    if held_out.is_empty() {
        return Err(SigError::domain("no held-out streams to calibrate on"));
    }
    let model = ConformanceModel::fit(reference, depth)?;
    let scores = model.conformance_batch(held_out, Exec::default())?;
    Ok(median(scores.into_iter().map(|s| s.value).collect()))
}

/// Splits `corpus` at random (seeded) into halves and calibrates on the split.
pub fn calibrate_threshold(corpus: &[Stream], depth: usize, seed: u64) -> Result<f64> {
    if corpus.len() < 4 {
        return Err(SigError::domain("threshold calibration needs at least four streams"));
    }
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let half = corpus.len() / 2;
    let reference: Vec<Stream> = idx[..half].iter().map(|&i| corpus[i].clone()).collect();
    let held_out: Vec<Stream> = idx[half..].iter().map(|&i| corpus[i].clone()).collect();
    calibrate_threshold_split(&reference, &held_out, depth)
}

/// Area under the ROC curve of `scores` for separating positives (anomalies)
/// from negatives; ties count one half.
pub fn roc_auc(negatives: &[f64], positives: &[f64]) -> f64 {
    let mut wins = 0.0;
    for p in positives {
        for n in negatives {
            wins += match p.partial_cmp(n) {
                Some(std::cmp::Ordering::Greater) => 1.0,
                Some(std::cmp::Ordering::Equal) => 0.5,
                _ => 0.0,
            };
        }
    }
    wins / (positives.len() * negatives.len()) as f64
}
