//! Truncated free tensor algebra over `R^d`.
//!
//! Elements are stored densely, one coefficient per word of length at most
//! the truncation depth, in the canonical order: by word length, then
//! lexicographically. For `d = 2` and depth 3 this is
//! `() (1) (2) (1,1) (1,2) (2,1) (2,2) (1,1,1) ... (2,2,2)`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Result, SigError};

/// Number of words of length at most `depth` over an alphabet of `dim` letters.
pub fn tensor_size(dim: usize, depth: usize) -> usize {
    level_offset(dim, depth + 1)
}

/// Index of the first coefficient of level `n`, i.e. `sum_{k<n} dim^k`.
pub fn level_offset(dim: usize, n: usize) -> usize {
    let mut off = 0;
    let mut width = 1;
    for _ in 0..n {
        off += width;
        width *= dim;
    }
    off
}

/// A word over the alphabet `{1, ..., d}`. Letters are stored 1-based.
///
/// Words order by length first and lexicographically within a length, which
/// is the coefficient order of [`TruncatedTensor`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Word(Vec<usize>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    /// Builds a word from 1-based letters. Letter 0 is rejected.
    pub fn new(letters: impl Into<Vec<usize>>) -> Result<Self> {
        let letters = letters.into();
        if letters.contains(&0) {
            return Err(SigError::domain("word letters are 1-based; found 0"));
        }
        Ok(Word(letters))
    }

    pub fn letters(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Position of this word in the canonical order of `T^(N)(R^dim)`.
    pub fn index(&self, dim: usize) -> Result<usize> {
        let mut within = 0;
        for &l in &self.0 {
            if l == 0 || l > dim {
                return Err(SigError::domain(format!(
                    "letter {l} outside alphabet 1..={dim}"
                )));
            }
            within = within * dim + (l - 1);
        }
        Ok(level_offset(dim, self.0.len()) + within)
    }

    /// Inverse of [`Word::index`] restricted to a given level.
    fn from_level_index(dim: usize, len: usize, mut idx: usize) -> Word {
        let mut letters = vec![0; len];
        for slot in letters.iter_mut().rev() {
            *slot = idx % dim + 1;
            idx /= dim;
        }
        Word(letters)
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{l}")?;
        }
        f.write_str(")")
    }
}

impl std::str::FromStr for Word {
    type Err = SigError;

    fn from_str(s: &str) -> Result<Self> {
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| SigError::parse(format!("word must look like (1,2): {s:?}")))?;
        if inner.trim().is_empty() {
            return Ok(Word::empty());
        }
        let letters = inner
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| SigError::parse(format!("bad letter {t:?} in word {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Word::new(letters)
    }
}

/// All words of length `<= depth` over `{1..dim}` in canonical order.
pub fn enumerate_words(dim: usize, depth: usize) -> Result<Vec<Word>> {
    if dim == 0 {
        return Err(SigError::domain("alphabet size must be at least 1"));
    }
    let mut words = Vec::with_capacity(tensor_size(dim, depth));
    let mut width = 1;
    for len in 0..=depth {
        words.extend((0..width).map(|i| Word::from_level_index(dim, len, i)));
        width *= dim;
    }
    Ok(words)
}

/// The canonical word list rendered as one space-separated line.
pub fn sigkeys(dim: usize, depth: usize) -> Result<String> {
    Ok(enumerate_words(dim, depth)?
        .iter()
        .map(Word::to_string)
        .collect::<Vec<_>>()
        .join(" "))
}

/// Formal sum of words with positive integer multiplicities.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ShuffleExpansion {
    pub terms: BTreeMap<Word, u64>,
}

impl ShuffleExpansion {
    pub fn total_multiplicity(&self) -> u64 {
        self.terms.values().sum()
    }

    /// Pairs the expansion with the coefficients of a tensor.
    pub fn evaluate(&self, tensor: &TruncatedTensor) -> Result<f64> {
        self.terms.iter().try_fold(0.0, |acc, (w, &m)| {
            Ok(acc + m as f64 * tensor.coordinate(w)?)
        })
    }
}

/// Shuffle product of two words: every interleaving that keeps the letters
/// of each word in order, counted with multiplicity.
pub fn shuffle(left: &Word, right: &Word) -> ShuffleExpansion {
    let mut terms = BTreeMap::new();
    shuffle_into(left.letters(), right.letters(), &mut Vec::new(), &mut terms);
    ShuffleExpansion { terms }
}

fn shuffle_into(a: &[usize], b: &[usize], prefix: &mut Vec<usize>, out: &mut BTreeMap<Word, u64>) {
    if a.is_empty() || b.is_empty() {
        let mut w = prefix.clone();
        w.extend_from_slice(a);
        w.extend_from_slice(b);
        *out.entry(Word(w)).or_insert(0) += 1;
        return;
    }
    prefix.push(a[0]);
    shuffle_into(&a[1..], b, prefix, out);
    prefix.pop();
    prefix.push(b[0]);
    shuffle_into(a, &b[1..], prefix, out);
    prefix.pop();
}

/// An element of the truncated tensor algebra `T^(N)(R^d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedTensor {
    dim: usize,
    depth: usize,
    coeffs: Vec<f64>,
}

impl TruncatedTensor {
    pub fn zeros(dim: usize, depth: usize) -> Self {
        assert!(dim >= 1, "alphabet size must be at least 1");
        TruncatedTensor {
            dim,
            depth,
            coeffs: vec![0.0; tensor_size(dim, depth)],
        }
    }

    /// The multiplicative identity.
    pub fn unit(dim: usize, depth: usize) -> Self {
        let mut t = Self::zeros(dim, depth);
        t.coeffs[0] = 1.0;
        t
    }

    pub fn from_coefficients(dim: usize, depth: usize, coeffs: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(SigError::domain("alphabet size must be at least 1"));
        }
        let expected = tensor_size(dim, depth);
        if coeffs.len() != expected {
            return Err(SigError::dim(format!(
                "T^({depth})(R^{dim}) has {expected} coefficients, got {}",
                coeffs.len()
            )));
        }
        if let Some(bad) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(SigError::domain(format!("non-finite coefficient {bad}")));
        }
        Ok(TruncatedTensor { dim, depth, coeffs })
    }

    /// Scalar `scalar` plus the level-1 vector `v`.
    pub fn from_vector(depth: usize, scalar: f64, v: &[f64]) -> Self {
        let mut t = Self::zeros(v.len(), depth);
        t.coeffs[0] = scalar;
        if depth >= 1 {
            t.coeffs[1..=v.len()].copy_from_slice(v);
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn scalar(&self) -> f64 {
        self.coeffs[0]
    }

    /// Coefficients of the words of length exactly `n`.
    pub fn level(&self, n: usize) -> &[f64] {
        let start = level_offset(self.dim, n);
        &self.coeffs[start..start + self.dim.pow(n as u32)]
    }

    pub fn level_mut(&mut self, n: usize) -> &mut [f64] {
        let start = level_offset(self.dim, n);
        let width = self.dim.pow(n as u32);
        &mut self.coeffs[start..start + width]
    }

    /// Euclidean norm of level `n`.
    pub fn level_norm(&self, n: usize) -> f64 {
        self.level(n).iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn coordinate(&self, word: &Word) -> Result<f64> {
        if word.len() > self.depth {
            return Err(SigError::domain(format!(
                "word {word} is longer than truncation depth {}",
                self.depth
            )));
        }
        Ok(self.coeffs[word.index(self.dim)?])
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.depth != other.depth {
            return Err(SigError::dim(format!(
                "T^({})(R^{}) vs T^({})(R^{})",
                self.depth, self.dim, other.depth, other.dim
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.axpy(1.0, other);
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.axpy(-1.0, other);
        Ok(out)
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= factor);
        out
    }

    /// `self += alpha * other`; shapes must already agree.
    pub(crate) fn axpy(&mut self, alpha: f64, other: &Self) {
        debug_assert_eq!(self.coeffs.len(), other.coeffs.len());
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += alpha * b;
        }
    }

    /// Truncated tensor product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let d = self.dim;
        let mut out = Self::zeros(d, self.depth);
        for n in 0..=self.depth {
            let out_off = level_offset(d, n);
            for k in 0..=n {
                let a = self.level(k);
                let b = other.level(n - k);
                let bw = b.len();
                for (ia, &av) in a.iter().enumerate() {
                    if av == 0.0 {
                        continue;
                    }
                    let dst = &mut out.coeffs[out_off + ia * bw..out_off + (ia + 1) * bw];
                    for (o, &bv) in dst.iter_mut().zip(b) {
                        *o += av * bv;
                    }
                }
            }
        }
        Ok(out)
    }

    /// `sum_{k=0..N} A^k / k!`. Requires a zero scalar part.
    pub fn exp(&self) -> Result<Self> {
        if self.scalar() != 0.0 {
            return Err(SigError::domain(format!(
                "exp needs zero scalar part, got {}",
                self.scalar()
            )));
        }
        let unit = Self::unit(self.dim, self.depth);
        let mut acc = unit.clone();
        for k in (1..=self.depth).rev() {
            acc = self.mul(&acc)?.scale(1.0 / k as f64);
            acc.coeffs[0] += 1.0;
        }
        Ok(acc)
    }

    /// `sum_{n=1..N} (-1)^(n-1)/n (A - 1)^n`. Requires a unit scalar part.
    pub fn log(&self) -> Result<Self> {
        if self.scalar() != 1.0 {
            return Err(SigError::domain(format!(
                "log needs unit scalar part, got {}",
                self.scalar()
            )));
        }
        let mut x = self.clone();
        x.coeffs[0] = 0.0;
        let mut acc = Self::zeros(self.dim, self.depth);
        // Horner: x (1 - x (1/2 - x (1/3 - ...)))
        for n in (1..=self.depth).rev() {
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            let mut inner = x.mul(&acc)?;
            inner.coeffs[0] += sign / n as f64;
            acc = inner;
        }
        // acc now holds sum_n (-1)^(n-1)/n x^(n-1); one more factor of x.
        x.mul(&acc)
    }

    pub fn inner_product(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum())
    }

    /// Right-multiplies in place by `exp(v)` for a level-1 vector `v`.
    ///
    /// Uses a Horner scheme per level so the cost is `O(N d^N)` without
    /// materialising `exp(v)`. `scratch` is reused across calls.
    pub fn mul_exp_in_place(&mut self, v: &[f64], scratch: &mut ExpScratch) {
        debug_assert_eq!(v.len(), self.dim);
        let d = self.dim;
        let cap = d.pow(self.depth as u32);
        scratch.a.resize(cap, 0.0);
        scratch.b.resize(cap, 0.0);
        for n in (1..=self.depth).rev() {
            // T = S_0 v / n
            let s0 = self.coeffs[0];
            let inv = 1.0 / n as f64;
            for (t, &vi) in scratch.a[..d].iter_mut().zip(v) {
                *t = s0 * vi * inv;
            }
            let mut width = d;
            for j in 1..n {
                // T = (T + S_j) ⊗ v / (n - j)
                let sj = self.level(j);
                let inv = 1.0 / (n - j) as f64;
                let (a, b) = (&scratch.a[..width], &mut scratch.b[..width * d]);
                for ((&ai, &si), dst) in a.iter().zip(sj).zip(b.chunks_exact_mut(d)) {
                    let base = (ai + si) * inv;
                    for (o, &vl) in dst.iter_mut().zip(v) {
                        *o = base * vl;
                    }
                }
                width *= d;
                std::mem::swap(&mut scratch.a, &mut scratch.b);
            }
            for (s, t) in self.level_mut(n).iter_mut().zip(&scratch.a[..width]) {
                *s += t;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }
}

/// Reusable buffers for [`TruncatedTensor::mul_exp_in_place`].
#[derive(Default, Debug, Clone)]
pub struct ExpScratch {
    a: Vec<f64>,
    b: Vec<f64>,
}
