//! Streams of points in `R^d`, stream augmentations and dyadic time windows.

use crate::error::{Result, SigError};

/// A finite ordered sequence of points in `R^d`, optionally timestamped.
///
/// Points are stored row-major. When timestamps are absent the stream is
/// indexed by `0, 1, ..., k-1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Stream {
    dim: usize,
    data: Vec<f64>,
    times: Option<Vec<f64>>,
}

impl Stream {
    /// Builds a stream from rows. All rows must share a nonzero length.
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(Vec::len).ok_or_else(|| SigError::domain("empty stream"))?;
        if dim == 0 {
            return Err(SigError::domain("stream points must have at least one channel"));
        }
        let mut data = Vec::with_capacity(points.len() * dim);
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(SigError::dim(format!(
                    "point {i} has {} channels, expected {dim}",
                    p.len()
                )));
            }
            data.extend_from_slice(p);
        }
        Self::from_flat(dim, data)
    }

    /// Builds a stream from row-major data.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.is_empty() {
            return Err(SigError::domain("empty stream"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(SigError::dim(format!(
                "{} values do not split into points of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(SigError::domain("stream contains non-finite values"));
        }
        Ok(Stream {
            dim,
            data,
            times: None,
        })
    }

    /// One-dimensional stream from scalars.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::from_flat(1, values.to_vec())
    }

    /// Attaches timestamps, which must be strictly increasing and one per point.
    pub fn with_times(mut self, times: Vec<f64>) -> Result<Self> {
        check_times(&times, self.len())?;
        self.times = Some(times);
        Ok(self)
    }

    pub fn without_times(mut self) -> Self {
        self.times = None;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + DoubleEndedIterator + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn explicit_times(&self) -> Option<&[f64]> {
        self.times.as_deref()
    }

    pub fn has_times(&self) -> bool {
        self.times.is_some()
    }

    /// Timestamp of point `i`, defaulting to the index.
    pub fn time(&self, i: usize) -> f64 {
        match &self.times {
            Some(t) => t[i],
            None => i as f64,
        }
    }

    /// Timestamps, defaulting to `0, 1, ..., k-1`.
    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    pub fn start_time(&self) -> f64 {
        self.time(0)
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.len() - 1)
    }

    /// Iterates over consecutive differences `x_{i+1} - x_i`.
    pub fn increments(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        self.data
            .chunks_exact(self.dim)
            .zip(self.data.chunks_exact(self.dim).skip(1))
            .map(|(a, b)| b.iter().zip(a).map(|(y, x)| y - x).collect())
    }

    /// Sum of Euclidean increment norms (the 1-variation of the interpolant).
    pub fn length(&self) -> f64 {
        self.increments()
            .map(|inc| inc.iter().map(|x| x * x).sum::<f64>().sqrt())
            .sum()
    }

    /// Points in reverse order; timestamps are reflected so they stay increasing.
    pub fn reversed(&self) -> Stream {
        let data = self.points().rev().flatten().copied().collect();
        let times = self.times.as_ref().map(|t| {
            let (first, last) = (t[0], t[t.len() - 1]);
            t.iter().rev().map(|s| first + last - s).collect()
        });
        Stream {
            dim: self.dim,
            data,
            times,
        }
    }

    /// Adds `offset` to every point.
    pub fn translated(&self, offset: &[f64]) -> Result<Stream> {
        if offset.len() != self.dim {
            return Err(SigError::dim(format!(
                "offset has {} channels, stream has {}",
                offset.len(),
                self.dim
            )));
        }
        let mut out = self.clone();
        for p in out.data.chunks_exact_mut(self.dim) {
            p.iter_mut().zip(offset).for_each(|(x, o)| *x += o);
        }
        Ok(out)
    }

    /// Multiplies every coordinate by `factor`.
    pub fn scaled(&self, factor: f64) -> Stream {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= factor);
        out
    }

    /// Channels of `self` followed by the channels of `other`, point by point.
    pub fn concat_channels(&self, other: &Stream) -> Result<Stream> {
        if self.len() != other.len() {
            return Err(SigError::dim(format!(
                "cannot stack streams of lengths {} and {}",
                self.len(),
                other.len()
            )));
        }
        let dim = self.dim + other.dim;
        let data = self
            .points()
            .zip(other.points())
            .flat_map(|(a, b)| a.iter().chain(b).copied())
            .collect();
        Ok(Stream {
            dim,
            data,
            times: self.times.clone(),
        })
    }

    /// Appends the points of `other`, shifted so that its first point sits on
    /// the last point of `self`. Timestamps are dropped.
    pub fn concat_path(&self, other: &Stream) -> Result<Stream> {
        if self.dim != other.dim {
            return Err(SigError::dim("concatenated streams must share dimension"));
        }
        let last = self.point(self.len() - 1).to_vec();
        let first = other.point(0);
        let shift: Vec<f64> = last.iter().zip(first).map(|(l, f)| l - f).collect();
        let mut data = self.data.clone();
        for p in other.points().skip(1) {
            data.extend(p.iter().zip(&shift).map(|(x, s)| x + s));
        }
        Ok(Stream {
            dim: self.dim,
            data,
            times: None,
        })
    }

    /// Point of the piecewise-linear interpolant at time `t` inside the span.
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        let times = self.times();
        let k = self.len();
        if t <= times[0] {
            return self.point(0).to_vec();
        }
        if t >= times[k - 1] {
            return self.point(k - 1).to_vec();
        }
        let seg = times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (times[seg], times[seg + 1]);
        let w = (t - t0) / (t1 - t0);
        self.point(seg)
            .iter()
            .zip(self.point(seg + 1))
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }
}

fn check_times(times: &[f64], len: usize) -> Result<()> {
    if times.len() != len {
        return Err(SigError::dim(format!(
            "{} timestamps for {len} points",
            times.len()
        )));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(SigError::domain("non-finite timestamp"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SigError::domain("timestamps must be strictly increasing"));
    }
    Ok(())
}

/// Lead-lag augmentation with one future channel block and `num_pasts` past blocks.
///
/// Output points are laid out as `[future, past_1, ..., past_p]`, each block
/// of the input dimension.
///
/// * `pause_future = false`: point `i` (for `i = 0 .. k + delay*p - 1`) holds
///   `v_i` in the future block and `v_{i - c*delay}` in past block `c`, with
///   zeros outside the stream.
/// * `pause_future = true`: the stream starts with every block at `v_1`. For
///   each new value the future block moves first, then each past block catches
///   up in turn, past block `c` moving to `v_{j - c*(delay-1)}` (clamped at
///   `v_1`). Extra rounds at the end hold the future at `v_k` until every
///   past has reached it. With `delay = 1` this is the classic alternating
///   lead-lag `(v1,v1), (v2,v1), (v2,v2), ...` of length `1 + (k-1)(p+1)`.
pub fn lead_lag(s: &Stream, delay: usize, num_pasts: usize, pause_future: bool) -> Result<Stream> {
    if s.is_empty() {
        return Err(SigError::domain("lead-lag of an empty stream"));
    }
    if delay == 0 || num_pasts == 0 {
        return Err(SigError::domain("lead-lag needs delay >= 1 and at least one past"));
    }
    let d = s.dim();
    let k = s.len();
    let blocks = num_pasts + 1;
    let mut data = Vec::new();

    if pause_future {
        let mut state: Vec<usize> = vec![0; blocks];
        let emit = |state: &[usize], data: &mut Vec<f64>| {
            for &idx in state {
                data.extend_from_slice(s.point(idx));
            }
        };
        emit(&state, &mut data);
        let rounds = (k - 1) + num_pasts * (delay - 1);
        for r in 1..=rounds {
            state[0] = r.min(k - 1);
            emit(&state, &mut data);
            for c in 1..blocks {
                state[c] = r.saturating_sub(c * (delay - 1)).min(k - 1);
                emit(&state, &mut data);
            }
        }
    } else {
        let total = k + delay * num_pasts;
        for i in 0..total {
            for c in 0..blocks {
                let lag = c * delay;
                if i >= lag && i - lag < k {
                    data.extend_from_slice(s.point(i - lag));
                } else {
                    data.extend(std::iter::repeat_n(0.0, d));
                }
            }
        }
    }
    Stream::from_flat(d * blocks, data)
}

/// How [`time_augment`] encodes time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeMode {
    /// Append `t_j`.
    Absolute,
    /// Append `t_j - t_{j-1}`, and `t_0` for the first point.
    Difference,
}

/// Appends a time channel. `times` defaults to the stream's own timestamps
/// (or `0, 1, ..., k-1`).
pub fn time_augment(s: &Stream, times: Option<&[f64]>, mode: TimeMode) -> Result<Stream> {
    let times = match times {
        Some(t) => {
            check_times(t, s.len())?;
            t.to_vec()
        }
        None => s.times(),
    };
    let d = s.dim();
    let mut data = Vec::with_capacity(s.len() * (d + 1));
    for (j, p) in s.points().enumerate() {
        data.extend_from_slice(p);
        data.push(match mode {
            TimeMode::Absolute => times[j],
            TimeMode::Difference if j == 0 => times[0],
            TimeMode::Difference => times[j] - times[j - 1],
        });
    }
    Stream::from_flat(d + 1, data)
}

/// `(v_1,1), ..., (v_k,1), (v_k,0), (0,0)`.
pub fn invisibility_reset(s: &Stream) -> Result<Stream> {
    if s.is_empty() {
        return Err(SigError::domain("invisibility reset of an empty stream"));
    }
    let d = s.dim();
    let mut data = Vec::with_capacity((s.len() + 2) * (d + 1));
    for p in s.points() {
        data.extend_from_slice(p);
        data.push(1.0);
    }
    data.extend_from_slice(s.point(s.len() - 1));
    data.push(0.0);
    data.extend(std::iter::repeat_n(0.0, d + 1));
    Stream::from_flat(d + 1, data)
}

/// Running sums of the points. Timestamps are kept.
pub fn cumulative_sum(s: &Stream) -> Stream {
    let d = s.dim();
    let mut acc = vec![0.0; d];
    let mut data = Vec::with_capacity(s.data.len());
    for p in s.points() {
        acc.iter_mut().zip(p).for_each(|(a, x)| *a += x);
        data.extend_from_slice(&acc);
    }
    Stream {
        dim: d,
        data,
        times: s.times.clone(),
    }
}

/// A closed time interval `[lo, hi]` with `lo < hi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
            return Err(SigError::domain(format!("interval [{lo}, {hi}] is empty")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn shifted(self, by: f64) -> Interval {
        Interval {
            lo: self.lo + by,
            hi: self.hi + by,
        }
    }
}

/// Level-`level` dyadic decomposition of `[0, horizon]`: the `2^j` dyadic
/// pieces followed (optionally) by the `2^j - 1` intervals straddling the
/// interior breakpoints.
pub fn dyadic_intervals(level: u32, horizon: f64, include_overlap: bool) -> Result<Vec<Interval>> {
    if horizon.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(SigError::domain("dyadic horizon must be positive"));
    }
    let pieces = 1usize << level;
    let h = horizon / pieces as f64;
    let mut out: Vec<Interval> = (0..pieces)
        .map(|i| Interval {
            lo: i as f64 * h,
            hi: if i + 1 == pieces { horizon } else { (i + 1) as f64 * h },
        })
        .collect();
    if include_overlap {
        let half = h / 2.0;
        out.extend((0..pieces - 1).map(|k| Interval {
            lo: (2 * k + 1) as f64 * half,
            hi: (2 * k + 3) as f64 * half,
        }));
    }
    Ok(out)
}

/// The part of the piecewise-linear path lying over `iv`, with interpolated
/// end points. Timestamps of the result are explicit.
pub fn restrict(s: &Stream, iv: Interval) -> Result<Stream> {
    let times = s.times();
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let lo = iv.lo.max(t0);
    let hi = iv.hi.min(t1);
    if lo > hi {
        return Err(SigError::domain(format!(
            "interval [{}, {}] misses the stream span [{t0}, {t1}]",
            iv.lo, iv.hi
        )));
    }
    let mut new_times = vec![lo];
    let mut data = s.interpolate(lo);
    for (i, &t) in times.iter().enumerate() {
        if t > lo && t < hi {
            new_times.push(t);
            data.extend_from_slice(s.point(i));
        }
    }
    if hi > lo {
        new_times.push(hi);
        data.extend(s.interpolate(hi));
    }
    Stream::from_flat(s.dim(), data)?.with_times(new_times)
}
