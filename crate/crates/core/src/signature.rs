//! Signatures and log-signatures of piecewise-linear streams.

use itertools::Itertools;

use crate::error::{Result, SigError};
use crate::parallel::{self, Exec};
use crate::stream::{dyadic_intervals, restrict, Interval, Stream};
use crate::tensor::{tensor_size, ExpScratch, TruncatedTensor, Word};

/// Depth-`N` signature of a stream together with the shape it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct SignatureResult {
    pub tensor: TruncatedTensor,
    pub stream_len: usize,
}

impl SignatureResult {
    pub fn dim(&self) -> usize {
        self.tensor.dim()
    }

    pub fn depth(&self) -> usize {
        self.tensor.depth()
    }

    pub fn coefficients(&self) -> &[f64] {
        self.tensor.coefficients()
    }

    pub fn coordinate(&self, word: &Word) -> Result<f64> {
        self.tensor.coordinate(word)
    }
}

/// `exp(x_2 - x_1) ⊗ ... ⊗ exp(x_k - x_{k-1})` truncated at `depth`.
pub fn signature(s: &Stream, depth: usize) -> Result<SignatureResult> {
    if depth == 0 {
        return Err(SigError::domain("signature depth must be at least 1"));
    }
    Ok(SignatureResult {
        tensor: signature_tensor(s, depth),
        stream_len: s.len(),
    })
}

/// Signature without the depth check, for internal callers that allow depth 0.
pub(crate) fn signature_tensor(s: &Stream, depth: usize) -> TruncatedTensor {
    let mut sig = TruncatedTensor::unit(s.dim(), depth);
    let mut scratch = ExpScratch::default();
    for inc in s.increments() {
        if inc.iter().all(|&x| x == 0.0) {
            continue;
        }
        sig.mul_exp_in_place(&inc, &mut scratch);
    }
    sig
}

pub fn log_signature(s: &Stream, depth: usize) -> Result<TruncatedTensor> {
    signature(s, depth)?.tensor.log()
}

/// Coefficient of `word` in a signature.
pub fn coordinate(sig: &SignatureResult, word: &Word) -> Result<f64> {
    sig.coordinate(word)
}

/// Signature of the concatenated path, by Chen's identity.
pub fn chen_concat(a: &SignatureResult, b: &SignatureResult) -> Result<SignatureResult> {
    Ok(SignatureResult {
        tensor: a.tensor.mul(&b.tensor)?,
        stream_len: a.stream_len + b.stream_len.saturating_sub(1),
    })
}

/// Signatures of the restrictions `s|[t_0, t]` for each `t` in `at`.
///
/// `at` must be non-decreasing and lie inside the time span of the stream.
/// Runs in one pass over the stream.
pub fn running_signatures(s: &Stream, at: &[f64], depth: usize) -> Result<Vec<TruncatedTensor>> {
    let times = s.times();
    let (t0, t1) = (times[0], times[times.len() - 1]);
    if at.iter().any(|&t| t < t0 || t > t1) {
        return Err(SigError::domain(format!(
            "evaluation time outside the stream span [{t0}, {t1}]"
        )));
    }
    if at.windows(2).any(|w| w[1] < w[0]) {
        return Err(SigError::domain("evaluation times must be non-decreasing"));
    }
    let mut out = Vec::with_capacity(at.len());
    let mut sig = TruncatedTensor::unit(s.dim(), depth);
    let mut scratch = ExpScratch::default();
    let mut seg = 0;
    for &t in at {
        // absorb every full segment ending at or before t
        while seg + 1 < s.len() && times[seg + 1] <= t {
            let inc: Vec<f64> = s
                .point(seg + 1)
                .iter()
                .zip(s.point(seg))
                .map(|(b, a)| b - a)
                .collect();
            sig.mul_exp_in_place(&inc, &mut scratch);
            seg += 1;
        }
        if seg + 1 < s.len() && t > times[seg] {
            let w = (t - times[seg]) / (times[seg + 1] - times[seg]);
            let partial: Vec<f64> = s
                .point(seg + 1)
                .iter()
                .zip(s.point(seg))
                .map(|(b, a)| w * (b - a))
                .collect();
            let mut here = sig.clone();
            here.mul_exp_in_place(&partial, &mut scratch);
            out.push(here);
        } else {
            out.push(sig.clone());
        }
    }
    Ok(out)
}

/// Feature vector produced by [`psf_features`].
///
/// Layout is subset-major, interval-major, word-minor: entry
/// `(subset, interval, word)` lives at
/// `(subset * n_intervals + interval) * n_words + word`.
#[derive(Clone, Debug, PartialEq)]
pub struct PsfFeatureVector {
    pub values: Vec<f64>,
    pub n_subsets: usize,
    pub intervals: Vec<Interval>,
    /// Coefficients per signature, including the constant term.
    pub n_words: usize,
}

impl PsfFeatureVector {
    pub fn signature_block(&self, subset: usize, interval: usize) -> &[f64] {
        let start = (subset * self.intervals.len() + interval) * self.n_words;
        &self.values[start..start + self.n_words]
    }
}

/// The intervals of `D_0 ∪ ... ∪ D_h` (with overlaps) over `[start, start + horizon]`,
/// level by level.
pub fn hierarchical_intervals(levels: u32, start: f64, horizon: f64) -> Result<Vec<Interval>> {
    let mut out = Vec::new();
    for j in 0..=levels {
        out.extend(
            dyadic_intervals(j, horizon, true)?
                .into_iter()
                .map(|iv| iv.shifted(start)),
        );
    }
    Ok(out)
}

/// Path-signature features over all `m`-subsets of landmarks and all dyadic
/// intervals up to level `levels`.
///
/// For each subset (in lexicographic index order) the landmark channels are
/// stacked into one stream, restricted to each interval and its depth-`depth`
/// signature recorded.
pub fn psf_features(
    landmarks: &[Stream],
    subset_size: usize,
    levels: u32,
    depth: usize,
) -> Result<PsfFeatureVector> {
    psf_features_with(landmarks, subset_size, levels, depth, Exec::default())
}

pub fn psf_features_with(
    landmarks: &[Stream],
    subset_size: usize,
    levels: u32,
    depth: usize,
    exec: Exec,
) -> Result<PsfFeatureVector> {
    if subset_size == 0 || subset_size > landmarks.len() {
        return Err(SigError::domain(format!(
            "subset size {subset_size} must lie in 1..={}",
            landmarks.len()
        )));
    }
    if depth == 0 {
        return Err(SigError::domain("signature depth must be at least 1"));
    }
    let first = &landmarks[0];
    let times = first.times();
    for (i, l) in landmarks.iter().enumerate() {
        if l.dim() != first.dim() {
            return Err(SigError::dim(format!("landmark {i} has a different dimension")));
        }
        if l.times() != times {
            return Err(SigError::dim(format!("landmark {i} does not share timestamps")));
        }
    }
    let (t0, t1) = (times[0], times[times.len() - 1]);
    if t1.partial_cmp(&t0) != Some(std::cmp::Ordering::Greater) {
        return Err(SigError::domain("landmark streams need a nonzero time span"));
    }
    let intervals = hierarchical_intervals(levels, t0, t1 - t0)?;
    let subsets: Vec<Vec<usize>> = (0..landmarks.len()).combinations(subset_size).collect();
    let stacked: Vec<Stream> = subsets
        .iter()
        .map(|idx| {
            idx[1..].iter().try_fold(landmarks[idx[0]].clone(), |acc, &i| {
                acc.concat_channels(&landmarks[i])
            })
        })
        .collect::<Result<_>>()?;

    let n_words = tensor_size(first.dim() * subset_size, depth);
    let jobs: Vec<(usize, usize)> = (0..subsets.len())
        .cartesian_product(0..intervals.len())
        .collect();
    let blocks = parallel::map(exec, &jobs, |&(s, i)| {
        restrict(&stacked[s], intervals[i]).map(|r| signature_tensor(&r, depth))
    });
    let mut values = Vec::with_capacity(jobs.len() * n_words);
    for b in blocks {
        values.extend_from_slice(b?.coefficients());
    }
    Ok(PsfFeatureVector {
        values,
        n_subsets: subsets.len(),
        intervals,
        n_words,
    })
}
