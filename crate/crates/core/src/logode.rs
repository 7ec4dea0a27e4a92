//! The log-ODE method for controlled differential equations `dz = f(z) dX`.
//!
//! Over each interval of a coarse partition the driver is summarised by its
//! truncated log-signature `L`, and the state is advanced by solving the
//! autonomous ODE `du/dr = f̃(u)` on `r ∈ [0, 1]`, where
//! `f̃(u) = Σ_k f^{∘k}(u)[π_k L]`. For linear fields `f(z)dX = Σ_i B_i z dX^i`
//! the iterated compositions reduce to matrix products and `f̃(u) = A u` with
//! `A = Σ_w L_w B_{w_k} ⋯ B_{w_1}`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SigError};
use crate::signature::{log_signature, signature};
use crate::stream::{restrict, Interval, Stream};
use crate::tensor::{level_offset, tensor_size, TruncatedTensor};

/// `f(z) dX = Σ_i B_i z dX^i` with square `B_i` of a common size.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearField {
    matrices: Vec<DMatrix<f64>>,
}

impl LinearField {
    pub fn new(matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        let e = matrices
            .first()
            .ok_or_else(|| SigError::domain("a linear field needs at least one matrix"))?
            .nrows();
        if e == 0 || matrices.iter().any(|m| m.nrows() != e || m.ncols() != e) {
            return Err(SigError::dim("field matrices must all be square of the same size"));
        }
        Ok(LinearField { matrices })
    }

    /// The field of the signature itself: on `T^(depth)(R^dim)`, `B_i` is
    /// right multiplication by the letter `i`. Started from the unit
    /// tensor, the solution is the truncated signature of the driver.
    pub fn right_multiplication(dim: usize, depth: usize) -> Self {
        let size = tensor_size(dim, depth);
        let matrices = (0..dim)
            .map(|letter| {
                let mut m = DMatrix::zeros(size, size);
                for n in 0..depth {
                    let from = level_offset(dim, n);
                    let to = level_offset(dim, n + 1);
                    for idx in 0..dim.pow(n as u32) {
                        m[(to + idx * dim + letter, from + idx)] = 1.0;
                    }
                }
                m
            })
            .collect();
        LinearField { matrices }
    }

    pub fn channels(&self) -> usize {
        self.matrices.len()
    }

    pub fn state_dim(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    /// `B_{w_k} ⋯ B_{w_1}` for every word `w` of length `1..=depth`, in
    /// canonical word order (the empty word is skipped).
    fn word_products(&self, depth: usize) -> Vec<DMatrix<f64>> {
        let e = self.state_dim();
        let mut out = Vec::with_capacity(tensor_size(self.channels(), depth) - 1);
        let mut prev = vec![DMatrix::identity(e, e)];
        for _ in 1..=depth {
            let mut level = Vec::with_capacity(prev.len() * self.channels());
            for p in &prev {
                for b in &self.matrices {
                    level.push(b * p);
                }
            }
            out.extend(level.iter().cloned());
            prev = level;
        }
        out
    }

    /// `Σ_w T_w B_{w_k} ⋯ B_{w_1}` over nonempty words of `t`.
    fn contract(&self, t: &TruncatedTensor) -> DMatrix<f64> {
        let e = self.state_dim();
        let mut a = DMatrix::zeros(e, e);
        for (c, m) in t.coefficients()[1..].iter().zip(self.word_products(t.depth())) {
            if *c != 0.0 {
                a += m * *c;
            }
        }
        a
    }
}

/// A frozen field: `u ↦ f̃(u)`.
pub type FrozenField<'a> = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + 'a>;

/// A vector field that can be driven by log-signatures.
pub trait LogOdeField {
    /// Number of driving channels `d`.
    fn channels(&self) -> usize;
    fn state_dim(&self) -> usize;
    /// `u ↦ f̃(u)` for the given log-signature.
    fn freeze<'a>(&'a self, log_sig: &'a TruncatedTensor) -> Result<FrozenField<'a>>;

    /// Closed-form time-one flow of the frozen field, if one is known.
    fn exact_flow(&self, _log_sig: &TruncatedTensor, _z: &DVector<f64>) -> Option<Result<DVector<f64>>> {
        None
    }
}

impl LogOdeField for LinearField {
    fn channels(&self) -> usize {
        LinearField::channels(self)
    }

    fn state_dim(&self) -> usize {
        LinearField::state_dim(self)
    }

    fn freeze<'a>(&'a self, log_sig: &'a TruncatedTensor) -> Result<FrozenField<'a>> {
        let a = log_ode_field(self, log_sig, log_sig.depth())?;
        Ok(Box::new(move |u| &a * u))
    }

    /// `exp(A) z`.
    fn exact_flow(&self, log_sig: &TruncatedTensor, z: &DVector<f64>) -> Option<Result<DVector<f64>>> {
        Some(log_ode_field(self, log_sig, log_sig.depth()).and_then(|a| {
            let out = a.exp() * z;
            if out.iter().all(|v| v.is_finite()) {
                Ok(out)
            } else {
                Err(SigError::Overflow("log-ODE state became non-finite".into()))
            }
        }))
    }
}

/// A general field given by a callback returning `Σ_k f^{∘k}(u)[π_k L]`.
pub struct CallbackField<F> {
    channels: usize,
    state_dim: usize,
    f: F,
}

impl<F> CallbackField<F>
where
    F: Fn(&DVector<f64>, &TruncatedTensor) -> DVector<f64>,
{
    pub fn new(channels: usize, state_dim: usize, f: F) -> Self {
        CallbackField {
            channels,
            state_dim,
            f,
        }
    }
}

impl<F> LogOdeField for CallbackField<F>
where
    F: Fn(&DVector<f64>, &TruncatedTensor) -> DVector<f64>,
{
    fn channels(&self) -> usize {
        self.channels
    }

    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn freeze<'a>(&'a self, log_sig: &'a TruncatedTensor) -> Result<FrozenField<'a>> {
        Ok(Box::new(move |u| (self.f)(u, log_sig)))
    }
}

/// The matrix `A` with `f̃(u) = A u` for a linear field.
pub fn log_ode_field(field: &LinearField, log_sig: &TruncatedTensor, depth: usize) -> Result<DMatrix<f64>> {
    if log_sig.depth() != depth {
        return Err(SigError::dim(format!(
            "log-signature has depth {}, expected {depth}",
            log_sig.depth()
        )));
    }
    if log_sig.dim() != field.channels() {
        return Err(SigError::dim(format!(
            "log-signature over {} channels for a field with {}",
            log_sig.dim(),
            field.channels()
        )));
    }
    if log_sig.scalar() != 0.0 {
        return Err(SigError::domain("a log-signature has zero scalar part"));
    }
    Ok(field.contract(log_sig))
}

fn rk4<F: Fn(&DVector<f64>) -> DVector<f64> + ?Sized>(
    f: &F,
    z: &DVector<f64>,
    substeps: usize,
) -> Result<DVector<f64>> {
    let h = 1.0 / substeps as f64;
    let mut x = z.clone();
    for _ in 0..substeps {
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * (h / 2.0)));
        let k3 = f(&(&x + &k2 * (h / 2.0)));
        let k4 = f(&(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SigError::Overflow("log-ODE state became non-finite".into()));
        }
    }
    Ok(x)
}

/// One log-ODE step: solves `du/dr = f̃(u)`, `u(0) = z` on `[0, 1]`.
/// Linear fields use the matrix exponential; other fields take `substeps`
/// classical Runge-Kutta steps.
pub fn log_ode_step<F: LogOdeField + ?Sized>(
    z: &DVector<f64>,
    field: &F,
    log_sig: &TruncatedTensor,
    substeps: usize,
) -> Result<DVector<f64>> {
    if substeps == 0 {
        return Err(SigError::domain("need at least one ODE substep"));
    }
    if z.len() != field.state_dim() {
        return Err(SigError::dim(format!(
            "state has {} entries, field acts on {}",
            z.len(),
            field.state_dim()
        )));
    }
    if let Some(out) = field.exact_flow(log_sig, z) {
        return out;
    }
    let f = field.freeze(log_sig)?;
    rk4(&*f, z, substeps)
}

/// States of a CDE solve at the partition points.
#[derive(Clone, Debug, PartialEq)]
pub struct CdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl CdeSolution {
    pub fn terminal(&self) -> &DVector<f64> {
        self.states.last().expect("a solution has at least one state")
    }
}

/// `m + 1` equally spaced points over the time span of `s`.
pub fn uniform_partition(s: &Stream, intervals: usize) -> Vec<f64> {
    let (a, b) = (s.start_time(), s.end_time());
    (0..=intervals)
        .map(|i| {
            if i == intervals {
                b
            } else {
                a + (b - a) * i as f64 / intervals as f64
            }
        })
        .collect()
}

/// Default number of Runge-Kutta substeps per log-ODE step.
pub const DEFAULT_SUBSTEPS: usize = 16;

/// Solves `dz = f(z) dX` by log-ODE steps over `partition`, which must be
/// strictly increasing and cover the span of `driver`.
pub fn solve_cde<F: LogOdeField + ?Sized>(
    z0: &DVector<f64>,
    field: &F,
    driver: &Stream,
    partition: &[f64],
    depth: usize,
    substeps: usize,
) -> Result<CdeSolution> {
    if driver.dim() != field.channels() {
        return Err(SigError::dim(format!(
            "driver has {} channels, field expects {}",
            driver.dim(),
            field.channels()
        )));
    }
    if partition.len() < 2 || partition.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SigError::domain("partition must be strictly increasing with at least two points"));
    }
    let eps = 1e-12 * (1.0 + driver.end_time().abs());
    if partition[0] > driver.start_time() + eps || partition[partition.len() - 1] < driver.end_time() - eps {
        return Err(SigError::domain("partition does not cover the driver's time span"));
    }
    let mut states = vec![z0.clone()];
    let mut z = z0.clone();
    for w in partition.windows(2) {
        let piece = restrict(driver, Interval::new(w[0], w[1])?)?;
        let log_sig = log_signature(&piece, depth)?;
        z = log_ode_step(&z, field, &log_sig, substeps)?;
        states.push(z.clone());
    }
    Ok(CdeSolution {
        times: partition.to_vec(),
        states,
    })
}

/// Truncated Picard series `Σ_w S_w B_{w_k} ⋯ B_{w_1} z0` of a linear CDE.
pub fn linear_cde_series(z0: &DVector<f64>, field: &LinearField, sig: &TruncatedTensor) -> Result<DVector<f64>> {
    if sig.dim() != field.channels() {
        return Err(SigError::dim("signature and field disagree on channel count"));
    }
    if z0.len() != field.state_dim() {
        return Err(SigError::dim("initial state does not match the field"));
    }
    let mut total = z0 * sig.scalar();
    let mut prev = vec![z0.clone()];
    for n in 1..=sig.depth() {
        let coeffs = sig.level(n);
        let mut level = Vec::with_capacity(prev.len() * field.channels());
        for v in &prev {
            for b in field.matrices() {
                level.push(b * v);
            }
        }
        for (c, v) in coeffs.iter().zip(&level) {
            total += v * *c;
        }
        prev = level;
    }
    Ok(total)
}

/// Convenience: the Picard series evaluated on the signature of `driver`.
pub fn linear_cde_series_for(z0: &DVector<f64>, field: &LinearField, driver: &Stream, depth: usize) -> Result<DVector<f64>> {
    linear_cde_series(z0, field, &signature(driver, depth)?.tensor)
}
