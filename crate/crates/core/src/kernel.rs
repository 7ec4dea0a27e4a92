//! Signature kernels: truncated inner products and the Goursat PDE solver.
//!
//! For piecewise-linear `x`, `y` the kernel `K(s,t) = <S(x)_{a,s}, S(y)_{c,t}>`
//! solves `d²K/dsdt = <x'(s), y'(t)> K` with `K(a,·) = K(·,c) = 1`. The solver
//! discretises this on the knot grid of both streams, each segment split
//! into `2^λ` equal pieces, with the explicit update
//!
//! ```text
//! K[i+1][j+1] = K[i+1][j] + K[i][j+1] - K[i][j]
//!             + ½ <Δx_i, Δy_j> (K[i+1][j] + K[i][j+1])
//! ```
//!
//! whose error decays like `4^-λ`.

use nalgebra::DMatrix;

use crate::error::{Result, SigError};
use crate::parallel::{self, Exec};
use crate::signature::signature_tensor;
use crate::stream::Stream;
use crate::tensor::TruncatedTensor;

/// `<S(x), S(y)>` in `T^(depth)`.
pub fn kernel_truncated(x: &Stream, y: &Stream, depth: usize) -> Result<f64> {
    check_dims(x, y)?;
    signature_tensor(x, depth).inner_product(&signature_tensor(y, depth))
}

/// Per-level weights `φ(0..=N)` for the general signature kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiWeights(pub Vec<f64>);

impl PhiWeights {
    pub fn ones(depth: usize) -> Self {
        PhiWeights(vec![1.0; depth + 1])
    }

    /// `φ(n) = 1` for `n == level`, zero elsewhere.
    pub fn indicator(depth: usize, level: usize) -> Self {
        PhiWeights((0..=depth).map(|n| if n == level { 1.0 } else { 0.0 }).collect())
    }

    pub fn depth(&self) -> usize {
        self.0.len().saturating_sub(1)
    }
}

/// `sum_n φ(n) <S^n(x), S^n(y)>`, truncated at the depth of the weights.
pub fn kernel_phi(x: &Stream, y: &Stream, weights: &PhiWeights) -> Result<f64> {
    check_dims(x, y)?;
    if weights.0.is_empty() {
        return Err(SigError::domain("phi weights need at least level 0"));
    }
    let depth = weights.depth();
    let sx = signature_tensor(x, depth);
    let sy = signature_tensor(y, depth);
    Ok(weights
        .0
        .iter()
        .enumerate()
        .map(|(n, &phi)| {
            phi * sx
                .level(n)
                .iter()
                .zip(sy.level(n))
                .map(|(a, b)| a * b)
                .sum::<f64>()
        })
        .sum())
}

/// Solver settings for [`kernel_pde`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PdeOptions {
    /// Dyadic refinement level: each segment is split into `2^lambda` cells.
    pub lambda: u32,
    /// Both paths are multiplied by this factor before solving.
    pub scale: f64,
}

impl PdeOptions {
    pub fn new(lambda: u32) -> Self {
        PdeOptions { lambda, scale: 1.0 }
    }
}

/// Solution of the Goursat problem on the refined grid.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelGrid {
    pub s_coords: Vec<f64>,
    pub t_coords: Vec<f64>,
    /// Row-major, `s_coords.len()` rows by `t_coords.len()` columns.
    pub values: Vec<f64>,
}

impl KernelGrid {
    pub fn rows(&self) -> usize {
        self.s_coords.len()
    }

    pub fn cols(&self) -> usize {
        self.t_coords.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols() + j]
    }

    /// Approximation of `<S(x), S(y)>` over the full paths.
    pub fn corner(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

fn check_dims(x: &Stream, y: &Stream) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(SigError::dim(format!(
            "streams of dimension {} and {}",
            x.dim(),
            y.dim()
        )));
    }
    Ok(())
}

fn refine_times(s: &Stream, pieces: usize) -> Vec<f64> {
    let t = s.times();
    let mut out = Vec::with_capacity((t.len() - 1) * pieces + 1);
    out.push(t[0]);
    for w in t.windows(2) {
        for k in 1..=pieces {
            out.push(if k == pieces {
                w[1]
            } else {
                w[0] + (w[1] - w[0]) * k as f64 / pieces as f64
            });
        }
    }
    out
}

/// `<Δx_a, Δy_b>` for every pair of original segments, scaled to a single
/// refined cell.
fn cell_products(x: &Stream, y: &Stream, opts: PdeOptions) -> (DMatrix<f64>, usize) {
    let pieces = 1usize << opts.lambda;
    let dx: Vec<Vec<f64>> = x.increments().collect();
    let dy: Vec<Vec<f64>> = y.increments().collect();
    let factor = opts.scale * opts.scale / (pieces * pieces) as f64;
    let m = DMatrix::from_fn(dx.len(), dy.len(), |a, b| {
        factor * dx[a].iter().zip(&dy[b]).map(|(p, q)| p * q).sum::<f64>()
    });
    (m, pieces)
}

/// Fills the full kernel grid.
pub fn kernel_pde(x: &Stream, y: &Stream, opts: PdeOptions) -> Result<KernelGrid> {
    check_dims(x, y)?;
    let (ip, pieces) = cell_products(x, y, opts);
    let s_coords = refine_times(x, pieces);
    let t_coords = refine_times(y, pieces);
    let (rows, cols) = (s_coords.len(), t_coords.len());
    let mut values = vec![1.0; rows * cols];
    // Row-major sweep: each cell only needs its left, upper and upper-left
    // neighbours, so this visits cells in a valid dependency order.
    for i in 0..rows - 1 {
        let seg_x = i / pieces;
        for j in 0..cols - 1 {
            let c = ip[(seg_x, j / pieces)];
            let k00 = values[i * cols + j];
            let k10 = values[(i + 1) * cols + j];
            let k01 = values[i * cols + j + 1];
            values[(i + 1) * cols + j + 1] = k10 + k01 - k00 + 0.5 * c * (k10 + k01);
        }
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(SigError::Overflow(format!("kernel grid value {bad}")));
    }
    Ok(KernelGrid {
        s_coords,
        t_coords,
        values,
    })
}

/// Corner value of [`kernel_pde`] using two rolling rows.
pub fn kernel_pde_corner(x: &Stream, y: &Stream, opts: PdeOptions) -> Result<f64> {
    check_dims(x, y)?;
    let (ip, pieces) = cell_products(x, y, opts);
    let rows = (x.len() - 1) * pieces + 1;
    let cols = (y.len() - 1) * pieces + 1;
    let mut prev = vec![1.0; cols];
    let mut next = vec![1.0; cols];
    for i in 0..rows - 1 {
        let seg_x = i / pieces;
        next[0] = 1.0;
        for j in 0..cols - 1 {
            let c = ip[(seg_x, j / pieces)];
            let (k00, k01, k10) = (prev[j], prev[j + 1], next[j]);
            next[j + 1] = k10 + k01 - k00 + 0.5 * c * (k10 + k01);
        }
        std::mem::swap(&mut prev, &mut next);
    }
    let corner = prev[cols - 1];
    if !corner.is_finite() {
        return Err(SigError::Overflow(format!("kernel corner value {corner}")));
    }
    Ok(corner)
}

/// How Gram entries are evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelMode {
    /// Inner product of depth-`N` signatures.
    Truncated { depth: usize },
    /// Corner of the PDE solution.
    Pde(PdeOptions),
}

impl KernelMode {
    pub fn eval(&self, x: &Stream, y: &Stream) -> Result<f64> {
        match *self {
            KernelMode::Truncated { depth } => kernel_truncated(x, y, depth),
            KernelMode::Pde(opts) => kernel_pde_corner(x, y, opts),
        }
    }
}

/// Symmetric matrix of pairwise kernel values.
pub fn gram(streams: &[Stream], mode: KernelMode) -> Result<DMatrix<f64>> {
    gram_with(streams, mode, Exec::default())
}

pub fn gram_with(streams: &[Stream], mode: KernelMode, exec: Exec) -> Result<DMatrix<f64>> {
    cross_gram_impl(streams, streams, mode, exec, true)
}

/// `K[i][j] = k(xs[i], ys[j])`.
pub fn cross_gram(xs: &[Stream], ys: &[Stream], mode: KernelMode) -> Result<DMatrix<f64>> {
    cross_gram_impl(xs, ys, mode, Exec::default(), false)
}

fn cross_gram_impl(
    xs: &[Stream],
    ys: &[Stream],
    mode: KernelMode,
    exec: Exec,
    symmetric: bool,
) -> Result<DMatrix<f64>> {
    let d = xs.first().or(ys.first()).map(Stream::dim);
    if let Some(d) = d {
        if xs.iter().chain(ys).any(|s| s.dim() != d) {
            return Err(SigError::dim("all streams in a Gram matrix must share dimension"));
        }
    }
    let (n, m) = (xs.len(), ys.len());
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (if symmetric { i } else { 0 }..m).map(move |j| (i, j)))
        .collect();
    let values: Vec<f64> = match mode {
        KernelMode::Truncated { depth } => {
            let sx: Vec<TruncatedTensor> = parallel::map(exec, xs, |s| signature_tensor(s, depth));
            let sy: Vec<TruncatedTensor> = if symmetric {
                sx.clone()
            } else {
                parallel::map(exec, ys, |s| signature_tensor(s, depth))
            };
            parallel::map(exec, &pairs, |&(i, j)| sx[i].inner_product(&sy[j]))
                .into_iter()
                .collect::<Result<_>>()?
        }
        KernelMode::Pde(opts) => parallel::map(exec, &pairs, |&(i, j)| {
            kernel_pde_corner(&xs[i], &ys[j], opts)
        })
        .into_iter()
        .collect::<Result<_>>()?,
    };
    let mut g = DMatrix::zeros(n, m);
    for (&(i, j), v) in pairs.iter().zip(values) {
        g[(i, j)] = v;
        if symmetric {
            g[(j, i)] = v;
        }
    }
    Ok(g)
}
