//! Loop algebras and loop groups over a double: truncated Fourier loops, the
//! central cocycle `Gamma_k`, monodromy of `h~' = alpha h~`, the chiral WZNW
//! flow on sampled loops, the monodromic Lagrangian and the enlarged flow with
//! a dynamical torus parameter.
//!
//! Loops are periodic on `[0, 2 pi]`. Pairings carry the normalized measure
//! `ds / 2 pi`. Sampled loops use the uniform grid `s_j = 2 pi j / P`.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dynamics::{dexpinv, dual_sigma_blocks, sigma_blocks, DynError, SigmaOperator};
use crate::extension::{check_alpha_condition, ExtError};
use crate::groups::{c, CMatrix, DoubleGroup, GroupElement, GroupError, MatrixGroup, Order};
use crate::liecore::{DoubleLieAlgebra, Factor, LieAlgebra, LieError, Matrix, Vector};

pub type CVector = DVector<Complex64>;

/// Reality defect above which coefficients are rejected.
pub const REALITY_TOL: f64 = 1e-12;
/// RK4 substeps per sample interval in `s`.
pub const SUBSTEPS: usize = 4;
/// Relative spectral tail energy that triggers an aliasing warning.
pub const ALIASING_TOL: f64 = 1e-8;
/// Distance from the identity below which a path counts as closed.
pub const CLOSED_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum LoopError {
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Ext(#[from] ExtError),
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("band {needed} exceeds the exact limit {limit}")]
    BandOverflow { needed: usize, limit: usize },
    #[error("{samples} samples cannot resolve band {band}; need at least {needed}")]
    Undersampled { samples: usize, band: usize, needed: usize },
    #[error("coefficients violate the reality condition (defect {0:e})")]
    NotReal(f64),
    #[error("path is not closed (monodromy distance {0:e})")]
    NotClosed(f64),
    #[error("alpha fails the loop condition (worst residual {0:e})")]
    Condition(f64),
    #[error("flow blew up at t = {t}")]
    BlowUp { t: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
}

fn grid_point(j: usize, p: usize) -> f64 {
    2.0 * PI * j as f64 / p as f64
}

fn complexify(v: &Vector) -> CVector {
    v.map(|x| c(x, 0.0))
}

/// Complex-bilinear extension of the bracket.
fn cbracket(alg: &LieAlgebra, x: &CVector, y: &CVector) -> CVector {
    let (xr, xi) = (x.map(|z| z.re), x.map(|z| z.im));
    let (yr, yi) = (y.map(|z| z.re), y.map(|z| z.im));
    let re = alg.br(&xr, &yr) - alg.br(&xi, &yi);
    let im = alg.br(&xr, &yi) + alg.br(&xi, &yr);
    CVector::from_fn(re.len(), |i, _| c(re[i], im[i]))
}

/// Complex-bilinear `(x, y)` through the swap.
fn cpair(d: &DoubleLieAlgebra, x: &CVector, y: &CVector) -> Complex64 {
    let psi = d.psi();
    let mut acc = c(0.0, 0.0);
    for i in 0..x.len() {
        for j in 0..y.len() {
            if psi[(i, j)] != 0.0 {
                acc += x[i] * y[j] * psi[(i, j)];
            }
        }
    }
    acc
}

// ---------------------------------------------------------------------------
// Fourier loops
// ---------------------------------------------------------------------------

/// `X(s) = sum_{|m| <= band} c_m e^{i m s}` with vector coefficients.
/// Real loops keep `c_{-m} = conj(c_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierLoop {
    dim: usize,
    band: usize,
    coeffs: Vec<CVector>,
    real: bool,
}

impl FourierLoop {
    pub fn zeros(dim: usize, band: usize, real: bool) -> Self {
        FourierLoop { dim, band, coeffs: vec![CVector::zeros(dim); 2 * band + 1], real }
    }

    pub fn constant(v: &Vector) -> Self {
        FourierLoop { dim: v.len(), band: 0, coeffs: vec![complexify(v)], real: true }
    }

    /// Coefficients listed from `m = -band` to `m = band`.
    pub fn from_coefficients(dim: usize, band: usize, coeffs: Vec<CVector>, real: bool) -> Result<Self, LoopError> {
        if coeffs.len() != 2 * band + 1 {
            return Err(LoopError::Dimension { expected: 2 * band + 1, got: coeffs.len() });
        }
        if let Some(bad) = coeffs.iter().find(|v| v.len() != dim) {
            return Err(LoopError::Dimension { expected: dim, got: bad.len() });
        }
        let out = FourierLoop { dim, band, coeffs, real };
        if real {
            let defect = out.reality_defect();
            if defect > REALITY_TOL {
                return Err(LoopError::NotReal(defect));
            }
        }
        Ok(out)
    }

    /// `a cos(m s) + b sin(m s)`.
    pub fn cos_sin(m: usize, a: &Vector, b: &Vector) -> Result<Self, LoopError> {
        if a.len() != b.len() {
            return Err(LoopError::Dimension { expected: a.len(), got: b.len() });
        }
        let mut out = FourierLoop::zeros(a.len(), m, true);
        if m == 0 {
            out.coeffs[0] = complexify(a);
        } else {
            let plus = CVector::from_fn(a.len(), |i, _| c(a[i], -b[i]) * 0.5);
            out.set(m as i64, &plus)?;
        }
        Ok(out)
    }

    /// Real loop with coefficients uniform in a box of half-width `scale / (1 + m)^2`.
    pub fn random<R: Rng>(dim: usize, band: usize, rng: &mut R, scale: f64) -> Self {
        let mut out = FourierLoop::zeros(dim, band, true);
        out.coeffs[band] = CVector::from_fn(dim, |_, _| c(rng.random_range(-scale..scale), 0.0));
        for m in 1..=band {
            let w = scale / ((1 + m) * (1 + m)) as f64;
            let v = CVector::from_fn(dim, |_, _| c(rng.random_range(-w..w), rng.random_range(-w..w)));
            out.set(m as i64, &v).expect("dimension matches");
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn reality_defect(&self) -> f64 {
        let b = self.band as i64;
        (-b..=b)
            .map(|m| (self.coefficient(m) - self.coefficient(-m).map(|z| z.conj())).camax())
            .fold(0.0, f64::max)
    }

    pub fn coefficient(&self, m: i64) -> CVector {
        if m.unsigned_abs() as usize > self.band {
            CVector::zeros(self.dim)
        } else {
            self.coeffs[(m + self.band as i64) as usize].clone()
        }
    }

    /// Sets `c_m`; real loops also set `c_{-m} = conj(c_m)`.
    pub fn set(&mut self, m: i64, v: &CVector) -> Result<(), LoopError> {
        if v.len() != self.dim {
            return Err(LoopError::Dimension { expected: self.dim, got: v.len() });
        }
        let am = m.unsigned_abs() as usize;
        if am > self.band {
            return Err(LoopError::BandOverflow { needed: am, limit: self.band });
        }
        let b = self.band as i64;
        if self.real && m == 0 {
            self.coeffs[b as usize] = v.map(|z| c(z.re, 0.0));
            return Ok(());
        }
        self.coeffs[(m + b) as usize] = v.clone();
        if self.real {
            self.coeffs[(b - m) as usize] = v.map(|z| z.conj());
        }
        Ok(())
    }

    pub fn eval_complex(&self, s: f64) -> CVector {
        let b = self.band as i64;
        let mut out = CVector::zeros(self.dim);
        for m in -b..=b {
            let phase = Complex64::from_polar(1.0, m as f64 * s);
            out += &self.coeffs[(m + b) as usize] * phase;
        }
        out
    }

    /// Real part of the value at `s`.
    pub fn eval(&self, s: f64) -> Vector {
        self.eval_complex(s).map(|z| z.re)
    }

    pub fn samples(&self, p: usize) -> Vec<Vector> {
        (0..p).map(|j| self.eval(grid_point(j, p))).collect()
    }

    /// Interpolating coefficients up to `band` from `P >= 2 band + 1` real samples.
    pub fn from_samples(samples: &[Vector], band: usize) -> Result<Self, LoopError> {
        let p = samples.len();
        if p < 2 * band + 1 {
            return Err(LoopError::Undersampled { samples: p, band, needed: 2 * band + 1 });
        }
        let dim = samples[0].len();
        let mut out = FourierLoop::zeros(dim, band, true);
        for comp in 0..dim {
            let mut buf: Vec<Complex64> = samples.iter().map(|v| c(v[comp], 0.0)).collect();
            fft(&mut buf, false);
            for m in 0..=band {
                let mut z = buf[m] / p as f64;
                if 2 * m == p {
                    z *= 0.5;
                }
                out.coeffs[band + m][comp] = z;
                out.coeffs[band - m][comp] = z.conj();
            }
        }
        Ok(out)
    }

    pub fn derivative(&self) -> Self {
        let b = self.band as i64;
        let coeffs = (-b..=b).map(|m| &self.coeffs[(m + b) as usize] * c(0.0, m as f64)).collect();
        FourierLoop { coeffs, ..self.clone() }
    }

    /// Coefficients with `|m| > band` dropped.
    pub fn truncate(&self, band: usize) -> Self {
        let band = band.min(self.band);
        let b = band as i64;
        let coeffs = (-b..=b).map(|m| self.coefficient(m)).collect();
        FourierLoop { dim: self.dim, band, coeffs, real: self.real }
    }

    pub fn add(&self, other: &FourierLoop) -> Result<Self, LoopError> {
        if other.dim != self.dim {
            return Err(LoopError::Dimension { expected: self.dim, got: other.dim });
        }
        let band = self.band.max(other.band);
        let b = band as i64;
        let coeffs = (-b..=b).map(|m| self.coefficient(m) + other.coefficient(m)).collect();
        Ok(FourierLoop { dim: self.dim, band, coeffs, real: self.real && other.real })
    }

    pub fn scale(&self, a: f64) -> Self {
        FourierLoop { coeffs: self.coeffs.iter().map(|v| v * c(a, 0.0)).collect(), ..self.clone() }
    }

    /// Coordinatewise embedding through a linear map, e.g. a factor inclusion.
    pub fn map(&self, m: &Matrix) -> Result<Self, LoopError> {
        if m.ncols() != self.dim {
            return Err(LoopError::Dimension { expected: m.ncols(), got: self.dim });
        }
        let cm = m.map(|x| c(x, 0.0));
        Ok(FourierLoop {
            dim: m.nrows(),
            band: self.band,
            coeffs: self.coeffs.iter().map(|v| &cm * v).collect(),
            real: self.real,
        })
    }

    /// `(1/2pi) int (X, Y) ds = sum_m (c_m, d_{-m})`.
    pub fn pair(&self, d: &DoubleLieAlgebra, other: &FourierLoop) -> f64 {
        let b = self.band.min(other.band) as i64;
        (-b..=b).map(|m| cpair(d, &self.coefficient(m), &other.coefficient(-m))).sum::<Complex64>().re
    }

    /// Energy in modes with `|m| > cutoff`, relative to the total.
    pub fn tail_energy(&self, cutoff: usize) -> f64 {
        let b = self.band as i64;
        let mut tail = 0.0;
        let mut total = 0.0;
        for m in -b..=b {
            let e = self.coeffs[(m + b) as usize].norm_squared();
            total += e;
            if m.unsigned_abs() as usize > cutoff {
                tail += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }

    /// CSV with columns `m, component, re, im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,component,re,im\n");
        let b = self.band as i64;
        for m in -b..=b {
            for (k, z) in self.coeffs[(m + b) as usize].iter().enumerate() {
                out.push_str(&format!("{m},{k},{:.17e},{:.17e}\n", z.re, z.im));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Keep every product mode up to `2 n_max`; overflow is an error.
    ExactDoubleBand,
    /// Drop modes above `n_max`.
    ProjectToBand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub mode: Truncation,
    pub n_max: usize,
}

impl TruncationPolicy {
    pub fn exact(n_max: usize) -> Self {
        TruncationPolicy { mode: Truncation::ExactDoubleBand, n_max }
    }

    pub fn project(n_max: usize) -> Self {
        TruncationPolicy { mode: Truncation::ProjectToBand, n_max }
    }
}

/// Pointwise bracket `[X, Y](s)` as a convolution of coefficients.
pub fn loop_bracket(
    alg: &LieAlgebra,
    x: &FourierLoop,
    y: &FourierLoop,
    policy: TruncationPolicy,
) -> Result<FourierLoop, LoopError> {
    for l in [x, y] {
        if l.dim != alg.dim() {
            return Err(LoopError::Dimension { expected: alg.dim(), got: l.dim });
        }
    }
    let full = x.band + y.band;
    let band = match policy.mode {
        Truncation::ExactDoubleBand => {
            if full > 2 * policy.n_max {
                return Err(LoopError::BandOverflow { needed: full, limit: 2 * policy.n_max });
            }
            full
        }
        Truncation::ProjectToBand => full.min(policy.n_max),
    };
    let mut out = FourierLoop::zeros(alg.dim(), band, x.real && y.real);
    let (bx, by, b) = (x.band as i64, y.band as i64, band as i64);
    for p in -bx..=bx {
        for q in -by..=by {
            if (p + q).abs() > b {
                continue;
            }
            let term = cbracket(alg, &x.coeffs[(p + bx) as usize], &y.coeffs[(q + by) as usize]);
            out.coeffs[(p + q + b) as usize] += term;
        }
    }
    Ok(out)
}

/// `Gamma_k(X, Y) = (k / 2pi) int (X, Y') ds = k sum_m (-i m) (c_m, d_{-m})`.
pub fn gamma_cocycle(d: &DoubleLieAlgebra, k: f64, x: &FourierLoop, y: &FourierLoop) -> f64 {
    let b = x.band.min(y.band) as i64;
    let s: Complex64 = (-b..=b)
        .map(|m| cpair(d, &x.coefficient(m), &y.coefficient(-m)) * c(0.0, -(m as f64)))
        .sum();
    k * s.re
}

/// Bracket of the central extension: `([X, Y], Gamma_k(X, Y))`.
pub fn extended_bracket(
    d: &DoubleLieAlgebra,
    k: f64,
    x: &FourierLoop,
    y: &FourierLoop,
    policy: TruncationPolicy,
) -> Result<(FourierLoop, f64), LoopError> {
    Ok((loop_bracket(d.total(), x, y, policy)?, gamma_cocycle(d, k, x, y)))
}

// ---------------------------------------------------------------------------
// Spectral utilities
// ---------------------------------------------------------------------------

fn fft(buf: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let plan = if inverse { planner.plan_fft_inverse(buf.len()) } else { planner.plan_fft_forward(buf.len()) };
    plan.process(buf);
}

fn wavenumber(k: usize, p: usize) -> i64 {
    if 2 * k < p {
        k as i64
    } else {
        k as i64 - p as i64
    }
}

fn derivative_series(values: &[Complex64]) -> Vec<Complex64> {
    let p = values.len();
    let mut buf = values.to_vec();
    fft(&mut buf, false);
    for (k, z) in buf.iter_mut().enumerate() {
        *z *= if 2 * k == p { c(0.0, 0.0) } else { c(0.0, wavenumber(k, p) as f64) };
    }
    fft(&mut buf, true);
    buf.iter().map(|z| z / p as f64).collect()
}

/// Trigonometric interpolation of periodic samples onto `q >= P` points.
fn resample_series(values: &[Complex64], q: usize) -> Vec<Complex64> {
    let p = values.len();
    let mut buf = values.to_vec();
    fft(&mut buf, false);
    let mut out = vec![c(0.0, 0.0); q];
    for (k, z) in buf.iter().enumerate() {
        let z = z / p as f64;
        if 2 * k == p {
            out[k] += z * 0.5;
            out[q - k] += z * 0.5;
        } else {
            let m = wavenumber(k, p);
            out[m.rem_euclid(q as i64) as usize] += z;
        }
    }
    fft(&mut out, true);
    out
}

/// Relative energy of modes with `|m| > cutoff` in a periodic series.
fn series_tail(values: &[Complex64], cutoff: usize) -> (f64, f64) {
    let p = values.len();
    let mut buf = values.to_vec();
    fft(&mut buf, false);
    let mut tail = 0.0;
    let mut total = 0.0;
    for (k, z) in buf.iter().enumerate() {
        let e = z.norm_sqr();
        total += e;
        if wavenumber(k, p).unsigned_abs() as usize > cutoff {
            tail += e;
        }
    }
    (tail, total)
}

/// Entrywise spectral `d/ds` of a periodic matrix loop.
pub fn spectral_derivative(samples: &[CMatrix]) -> Vec<CMatrix> {
    let p = samples.len();
    let (r, cols) = samples[0].shape();
    let mut out = vec![CMatrix::zeros(r, cols); p];
    for i in 0..r {
        for j in 0..cols {
            let series: Vec<Complex64> = samples.iter().map(|m| m[(i, j)]).collect();
            for (o, z) in out.iter_mut().zip(derivative_series(&series)) {
                o[(i, j)] = z;
            }
        }
    }
    out
}

/// Relative tail energy over all entries of a periodic matrix loop.
pub fn spectral_tail(samples: &[CMatrix], cutoff: usize) -> f64 {
    let (r, cols) = samples[0].shape();
    let mut tail = 0.0;
    let mut total = 0.0;
    for i in 0..r {
        for j in 0..cols {
            let series: Vec<Complex64> = samples.iter().map(|m| m[(i, j)]).collect();
            let (t, a) = series_tail(&series, cutoff);
            tail += t;
            total += a;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        tail / total
    }
}

fn rk4_matrix_step(y: &CMatrix, a0: &CMatrix, ah: &CMatrix, a1: &CMatrix, h: f64) -> CMatrix {
    let hc = c(h, 0.0);
    let k1 = a0 * y;
    let k2 = ah * (y + &k1 * (hc * 0.5));
    let k3 = ah * (y + &k2 * (hc * 0.5));
    let k4 = a1 * (y + &k3 * hc);
    y + (k1 + k2 * c(2.0, 0.0) + k3 * c(2.0, 0.0) + k4) * (hc / 6.0)
}

/// Holonomy `y(2 pi)` of `y' = eta(s) y`, `y(0) = e`, for periodic samples of `eta`.
pub fn sampled_holonomy(group: &MatrixGroup, eta: &[Vector]) -> Result<GroupElement, LoopError> {
    let p = eta.len();
    if p == 0 {
        return Err(LoopError::Invalid("empty loop".into()));
    }
    let q = 2 * SUBSTEPS * p;
    let dim = group.dim();
    let mut fine = vec![Vector::zeros(dim); q];
    for comp in 0..dim {
        let series: Vec<Complex64> = eta.iter().map(|v| c(v[comp], 0.0)).collect();
        for (f, z) in fine.iter_mut().zip(resample_series(&series, q)) {
            f[comp] = z.re;
        }
    }
    let mats: Vec<CMatrix> = fine.iter().map(|v| group.embed(v)).collect();
    let h = 4.0 * PI / q as f64;
    let mut y = group.identity().matrix().clone();
    for i in 0..q / 2 {
        y = rk4_matrix_step(&y, &mats[2 * i], &mats[2 * i + 1], &mats[(2 * i + 2) % q], h);
    }
    Ok(GroupElement::from_matrix(y))
}

/// Eigenvalues of a holonomy: closed form for `2x2`, otherwise the power
/// traces `tr M^j`, which carry the same conjugacy information.
pub fn spectrum(m: &CMatrix) -> Vec<Complex64> {
    let n = m.nrows();
    if n == 1 {
        return vec![m[(0, 0)]];
    }
    if n == 2 {
        let tr = m[(0, 0)] + m[(1, 1)];
        let det = m.determinant();
        let disc = (tr * tr * 0.25 - det).sqrt();
        return vec![tr * 0.5 + disc, tr * 0.5 - disc];
    }
    let mut pw = m.clone();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(pw.trace());
        pw = &pw * m;
    }
    out
}

/// Spectrum distance, minimized over the order of a `2x2` pair.
pub fn spectrum_drift(a: &[Complex64], b: &[Complex64]) -> f64 {
    let direct = a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    if a.len() == 2 && b.len() == 2 {
        let swapped = (a[0] - b[1]).norm().max((a[1] - b[0]).norm());
        direct.min(swapped)
    } else {
        direct
    }
}

// ---------------------------------------------------------------------------
// Monodromy
// ---------------------------------------------------------------------------

/// Solution of `h~'(s) = alpha(s) h~(s)`, `h~(0) = e`, sampled on `[0, 4 pi]`.
#[derive(Debug, Clone)]
pub struct Holonomy {
    alpha: FourierLoop,
    p: usize,
    samples: Vec<GroupElement>,
}

fn alpha_matrix(group: &MatrixGroup, alpha: &FourierLoop, s: f64) -> CMatrix {
    group.embed(&alpha.eval(s))
}

/// Fourth-order Magnus steps on two Gauss nodes: exact for constant `alpha`
/// and group-preserving up to the matrix exponential.
fn integrate_alpha(group: &MatrixGroup, alpha: &FourierLoop, y: &CMatrix, s0: f64, s1: f64, steps: usize) -> CMatrix {
    let h = (s1 - s0) / steps as f64;
    let off = 3f64.sqrt() / 6.0;
    let mut y = y.clone();
    for i in 0..steps {
        let s = s0 + i as f64 * h;
        let a1 = alpha_matrix(group, alpha, s + (0.5 - off) * h);
        let a2 = alpha_matrix(group, alpha, s + (0.5 + off) * h);
        let comm = &a2 * &a1 - &a1 * &a2;
        let omega = (&a1 + &a2) * c(0.5 * h, 0.0) + comm * c(3f64.sqrt() / 12.0 * h * h, 0.0);
        y = omega.exp() * y;
    }
    y
}

/// Magnus integration in `s` with [`SUBSTEPS`] steps per sample interval. Requires `P >= 4 band`.
pub fn monodromy(group: &MatrixGroup, alpha: &FourierLoop, p: usize) -> Result<Holonomy, LoopError> {
    if alpha.dim() != group.dim() {
        return Err(LoopError::Dimension { expected: group.dim(), got: alpha.dim() });
    }
    let needed = (4 * alpha.band()).max(1);
    if p < needed {
        return Err(LoopError::Undersampled { samples: p, band: alpha.band(), needed });
    }
    let mut samples = Vec::with_capacity(2 * p + 1);
    let mut y = group.identity().matrix().clone();
    samples.push(GroupElement::from_matrix(y.clone()));
    for j in 0..2 * p {
        y = integrate_alpha(group, alpha, &y, grid_point(j, p), grid_point(j + 1, p), SUBSTEPS);
        samples.push(GroupElement::from_matrix(y.clone()));
    }
    Ok(Holonomy { alpha: alpha.clone(), p, samples })
}

impl Holonomy {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn alpha(&self) -> &FourierLoop {
        &self.alpha
    }

    /// `M~ = h~(2 pi)`.
    pub fn monodromy(&self) -> &GroupElement {
        &self.samples[self.p]
    }

    /// Samples on `[0, 2 pi)`.
    pub fn samples(&self) -> &[GroupElement] {
        &self.samples[..self.p]
    }

    /// Sample at `s_j` for `0 <= j <= 2P`.
    pub fn at(&self, j: usize) -> &GroupElement {
        &self.samples[j]
    }

    /// `h~(s)` for `s` in `[0, 4 pi]`, integrated from the nearest grid point below.
    pub fn eval(&self, group: &MatrixGroup, s: f64) -> Result<GroupElement, LoopError> {
        if !(0.0..=4.0 * PI + 1e-12).contains(&s) {
            return Err(LoopError::Invalid(format!("s = {s} outside [0, 4 pi]")));
        }
        let h = 2.0 * PI / self.p as f64;
        let j = ((s / h).floor() as usize).min(2 * self.p);
        let s0 = grid_point(j, self.p);
        if s == s0 {
            return Ok(self.samples[j].clone());
        }
        let m = integrate_alpha(group, &self.alpha, self.samples[j].matrix(), s0, s, SUBSTEPS);
        Ok(GroupElement::from_matrix(m))
    }
}

// ---------------------------------------------------------------------------
// Sampled loop-group paths
// ---------------------------------------------------------------------------

/// Samples `l(s_j)` of a path with `l(s + 2 pi) = l(s) M`.
#[derive(Debug, Clone)]
pub struct LoopGroupPath {
    samples: Vec<GroupElement>,
    monodromy: GroupElement,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PathDoc {
    size: usize,
    samples: Vec<Vec<[f64; 2]>>,
    monodromy: Vec<[f64; 2]>,
}

fn flat(m: &CMatrix) -> Vec<[f64; 2]> {
    let n = m.nrows();
    (0..n * n).map(|k| [m[(k / n, k % n)].re, m[(k / n, k % n)].im]).collect()
}

fn unflat(n: usize, v: &[[f64; 2]]) -> Result<CMatrix, LoopError> {
    if v.len() != n * n {
        return Err(LoopError::Dimension { expected: n * n, got: v.len() });
    }
    Ok(CMatrix::from_fn(n, n, |i, j| c(v[i * n + j][0], v[i * n + j][1])))
}

impl LoopGroupPath {
    pub fn new(samples: Vec<GroupElement>, monodromy: GroupElement) -> Result<Self, LoopError> {
        if samples.is_empty() {
            return Err(LoopError::Invalid("a path needs at least one sample".into()));
        }
        let n = monodromy.size();
        if let Some(bad) = samples.iter().find(|g| g.size() != n) {
            return Err(LoopError::Dimension { expected: n, got: bad.size() });
        }
        Ok(LoopGroupPath { samples, monodromy })
    }

    pub fn closed(samples: Vec<GroupElement>) -> Result<Self, LoopError> {
        let n = samples.first().map(GroupElement::size).unwrap_or(0);
        LoopGroupPath::new(samples, GroupElement::identity(n))
    }

    pub fn identity(group: &MatrixGroup, p: usize) -> Self {
        LoopGroupPath { samples: vec![group.identity(); p], monodromy: group.identity() }
    }

    /// Closed path `exp(X(s_j))`.
    pub fn exp_loop(group: &MatrixGroup, x: &FourierLoop, p: usize) -> Result<Self, LoopError> {
        if x.dim() != group.dim() {
            return Err(LoopError::Dimension { expected: group.dim(), got: x.dim() });
        }
        let samples = x.samples(p).iter().map(|v| group.exp(v)).collect();
        LoopGroupPath::closed(samples)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[GroupElement] {
        &self.samples
    }

    pub fn monodromy(&self) -> &GroupElement {
        &self.monodromy
    }

    pub fn s(&self, j: usize) -> f64 {
        grid_point(j, self.len())
    }

    pub fn closure_defect(&self) -> f64 {
        self.monodromy.dist(&GroupElement::identity(self.monodromy.size()))
    }

    fn require_closed(&self) -> Result<(), LoopError> {
        let d = self.closure_defect();
        if d > CLOSED_TOL {
            Err(LoopError::NotClosed(d))
        } else {
            Ok(())
        }
    }

    /// `max_j |l_{j+1} - l_j| / ds`, wrapping with `l_P = l_0 M`.
    pub fn smoothness(&self) -> f64 {
        let p = self.len();
        let ds = 2.0 * PI / p as f64;
        let wrap = self.samples[0].mul(&self.monodromy);
        (0..p)
            .map(|j| {
                let next = if j + 1 < p { &self.samples[j + 1] } else { &wrap };
                next.dist(&self.samples[j]) / ds
            })
            .fold(0.0, f64::max)
    }

    pub fn membership_residual(&self, group: &MatrixGroup) -> f64 {
        self.samples.iter().map(|g| group.membership_residual(g)).fold(0.0, f64::max)
    }

    /// Samplewise product with a closed path on the left.
    pub fn mul(&self, other: &LoopGroupPath) -> Result<Self, LoopError> {
        self.require_closed()?;
        if other.len() != self.len() {
            return Err(LoopError::Dimension { expected: self.len(), got: other.len() });
        }
        let samples = self.samples.iter().zip(&other.samples).map(|(a, b)| a.mul(b)).collect();
        LoopGroupPath::new(samples, other.monodromy.clone())
    }

    /// Spectral `d/ds` of the samples; the path must be closed.
    pub fn derivative(&self) -> Result<Vec<CMatrix>, LoopError> {
        self.require_closed()?;
        let mats: Vec<CMatrix> = self.samples.iter().map(|g| g.matrix().clone()).collect();
        Ok(spectral_derivative(&mats))
    }

    /// `l' l^{-1}` at the samples, in algebra coordinates.
    pub fn right_log_derivative(&self, group: &MatrixGroup) -> Result<Vec<Vector>, LoopError> {
        let d = self.derivative()?;
        Ok(d.iter().zip(&self.samples).map(|(dl, l)| group.pullback_with_residual(&(dl * l.inverse().matrix())).0).collect())
    }

    /// `l^{-1} l'` at the samples, in algebra coordinates.
    pub fn left_log_derivative(&self, group: &MatrixGroup) -> Result<Vec<Vector>, LoopError> {
        let d = self.derivative()?;
        Ok(d.iter().zip(&self.samples).map(|(dl, l)| group.pullback_with_residual(&(l.inverse().matrix() * dl)).0).collect())
    }

    /// Relative spectral energy above `cutoff` of a closed path.
    pub fn tail_energy(&self, cutoff: usize) -> f64 {
        let mats: Vec<CMatrix> = self.samples.iter().map(|g| g.matrix().clone()).collect();
        spectral_tail(&mats, cutoff)
    }

    /// JSON snapshot: per-sample matrices as row-major `[re, im]` pairs.
    pub fn to_json(&self) -> String {
        let doc = PathDoc {
            size: self.monodromy.size(),
            samples: self.samples.iter().map(|g| flat(g.matrix())).collect(),
            monodromy: flat(self.monodromy.matrix()),
        };
        serde_json::to_string(&doc).expect("path documents serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, LoopError> {
        let doc: PathDoc = serde_json::from_str(text).map_err(|e| LoopError::Invalid(e.to_string()))?;
        let samples = doc
            .samples
            .iter()
            .map(|v| unflat(doc.size, v).map(GroupElement::from_matrix))
            .collect::<Result<Vec<_>, _>>()?;
        LoopGroupPath::new(samples, GroupElement::from_matrix(unflat(doc.size, &doc.monodromy)?))
    }
}

/// The embedding `E_alpha(l) = l h~_alpha` of a closed path into the
/// monodromic paths with monodromy `M~_alpha`.
pub fn embed_e_alpha(l: &LoopGroupPath, hol: &Holonomy) -> Result<LoopGroupPath, LoopError> {
    l.require_closed()?;
    if l.len() != hol.p() {
        return Err(LoopError::Dimension { expected: hol.p(), got: l.len() });
    }
    let samples = l.samples.iter().zip(hol.samples()).map(|(a, b)| a.mul(b)).collect();
    LoopGroupPath::new(samples, hol.monodromy().clone())
}

/// Worst `|m(x)^{-1} m(x + 2 pi) - M~|` over `basepoints` grid points, for
/// `m = l h~` with `h~` continued past `2 pi` by the ODE.
pub fn sigma_residual(l: &LoopGroupPath, hol: &Holonomy, basepoints: usize) -> Result<f64, LoopError> {
    l.require_closed()?;
    let p = hol.p();
    let mut worst: f64 = 0.0;
    for i in 0..basepoints {
        let j = (i * p) / basepoints;
        let m0 = l.samples[j].mul(hol.at(j));
        let m1 = l.samples[j].mul(hol.at(j + p));
        worst = worst.max(m0.inverse().mul(&m1).dist(hol.monodromy()));
    }
    Ok(worst)
}

fn fd5<F: Fn(f64) -> Result<CMatrix, LoopError>>(f: F, s: f64, h: f64) -> Result<CMatrix, LoopError> {
    let a = f(s - 2.0 * h)?;
    let b = f(s - h)?;
    let cc = f(s + h)?;
    let d = f(s + 2.0 * h)?;
    Ok((a - b * c(8.0, 0.0) + cc * c(8.0, 0.0) - d) / c(12.0 * h, 0.0))
}

/// Worst mismatch between the log-derivative of `exp(X) h~_alpha`, taken by
/// finite differences, and `l' l^{-1} + Ad_l alpha` at the grid points `s_1..s_P`.
pub fn log_derivative_residual(group: &MatrixGroup, x: &FourierLoop, hol: &Holonomy) -> Result<f64, LoopError> {
    const STEP: f64 = 1e-3;
    let l_at = |s: f64| -> Result<CMatrix, LoopError> { Ok(group.exp(&x.eval(s)).matrix().clone()) };
    let m_at = |s: f64| -> Result<CMatrix, LoopError> { Ok(l_at(s)? * hol.eval(group, s)?.matrix()) };
    let mut worst: f64 = 0.0;
    for j in 1..=hol.p() {
        let s = grid_point(j, hol.p());
        let l = GroupElement::from_matrix(l_at(s)?);
        let m = GroupElement::from_matrix(m_at(s)?);
        let lhs = group.pullback_with_residual(&(fd5(m_at, s, STEP)? * m.inverse().matrix())).0;
        let dl = group.pullback_with_residual(&(fd5(l_at, s, STEP)? * l.inverse().matrix())).0;
        let rhs = dl + group.adjoint(&l, &hol.alpha().eval(s))?;
        worst = worst.max((lhs - rhs).amax());
    }
    Ok(worst)
}

/// Checks `Pi_{n*} [X, alpha(s_j)] = 0` for every `n` basis element at `P`
/// collocation points; `true` iff the worst residual is below tolerance.
pub fn loop_alpha_condition(d: &DoubleLieAlgebra, alpha: &FourierLoop, p: usize) -> Result<(bool, f64), LoopError> {
    let mut worst: f64 = 0.0;
    for a in alpha.samples(p) {
        worst = worst.max(check_alpha_condition(&a, d)?.1);
    }
    Ok((worst < crate::extension::ALPHA_TOL, worst))
}

// ---------------------------------------------------------------------------
// Flows on sampled loops
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopFlowOptions {
    #[serde(rename = "T")]
    pub t: f64,
    pub dt: f64,
    /// Central charge of the affine action.
    pub k: f64,
    /// Band of the initial data; modes above `2 band` count as tail.
    pub band: usize,
}

impl Default for LoopFlowOptions {
    fn default() -> Self {
        LoopFlowOptions { t: 1.0, dt: 0.01, k: 1.0, band: 8 }
    }
}

/// Output of [`wznw_flow`].
#[derive(Debug, Clone)]
pub struct LoopFlow {
    pub times: Vec<f64>,
    pub paths: Vec<LoopGroupPath>,
    /// Holonomy spectrum of `k l' l^{-1} + Ad_l xi_0` per recorded time.
    pub spectra: Vec<Vec<Complex64>>,
    pub energies: Vec<f64>,
    /// `(t, tail)` wherever the spectral tail exceeded [`ALIASING_TOL`].
    pub aliasing: Vec<(f64, f64)>,
}

impl LoopFlow {
    pub fn eigen_drift(&self) -> f64 {
        self.spectra.iter().map(|s| spectrum_drift(s, &self.spectra[0])).fold(0.0, f64::max)
    }

    pub fn energy_drift(&self) -> f64 {
        self.energies.iter().map(|e| (e - self.energies[0]).abs()).fold(0.0, f64::max)
    }

    pub fn last(&self) -> &LoopGroupPath {
        self.paths.last().expect("flows record the initial path")
    }
}

fn check_options(opts: &LoopFlowOptions, p: usize) -> Result<usize, LoopError> {
    if !(opts.t >= 0.0 && opts.t.is_finite()) || !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(LoopError::Invalid(format!("bad time grid T = {}, dt = {}", opts.t, opts.dt)));
    }
    let needed = (4 * opts.band).max(1);
    if p < needed {
        return Err(LoopError::Undersampled { samples: p, band: opts.band, needed });
    }
    Ok((opts.t / opts.dt).round().max(if opts.t > 0.0 { 1.0 } else { 0.0 }) as usize)
}

/// `Ad-hat_l xi_0 = k l' l^{-1} + Ad_l xi_0` at the samples.
fn affine_adjoint(group: &MatrixGroup, paths: &[GroupElement], xi0: &[Vector], k: f64) -> Result<Vec<Vector>, LoopError> {
    let mats: Vec<CMatrix> = paths.iter().map(|g| g.matrix().clone()).collect();
    let dl = spectral_derivative(&mats);
    paths
        .iter()
        .zip(&dl)
        .zip(xi0)
        .map(|((l, d), x)| {
            let lp = group.pullback_with_residual(&(d * l.inverse().matrix())).0;
            Ok(lp * k + group.adjoint(l, x)?)
        })
        .collect()
}

fn loop_energy(d: &DoubleLieAlgebra, e: &SigmaOperator, xi: &[Vector]) -> f64 {
    xi.iter().map(|x| 0.5 * d.pair(x, &(e.matrix() * x))).sum::<f64>() / xi.len() as f64
}

struct LoopSolver<'a> {
    dg: &'a DoubleGroup,
    e: &'a SigmaOperator,
    xi0: &'a [Vector],
    k: f64,
}

impl LoopSolver<'_> {
    fn rate(&self, paths: &[GroupElement]) -> Result<Vec<Vector>, LoopError> {
        let xi = affine_adjoint(self.dg.group(), paths, self.xi0, self.k)?;
        Ok(xi.iter().map(|x| self.e.matrix() * x).collect())
    }

    fn shifted(&self, base: &[GroupElement], theta: &[Vector]) -> Vec<GroupElement> {
        base.iter().zip(theta).map(|(l, th)| self.dg.group().exp(th).mul(l)).collect()
    }

    /// One right-trivialized RKMK4 step, samplewise.
    fn step(&self, l: &[GroupElement], dt: f64) -> Result<Vec<GroupElement>, LoopError> {
        let alg = self.dg.algebra().total();
        let scaled = |v: &[Vector], a: f64| -> Vec<Vector> { v.iter().map(|x| x * a).collect() };
        let k1 = self.rate(l)?;
        let th2 = scaled(&k1, 0.5 * dt);
        let k2: Vec<Vector> =
            self.rate(&self.shifted(l, &th2))?.iter().zip(&th2).map(|(w, th)| dexpinv(alg, th, w)).collect();
        let th3 = scaled(&k2, 0.5 * dt);
        let k3: Vec<Vector> =
            self.rate(&self.shifted(l, &th3))?.iter().zip(&th3).map(|(w, th)| dexpinv(alg, th, w)).collect();
        let th4 = scaled(&k3, dt);
        let k4: Vec<Vector> =
            self.rate(&self.shifted(l, &th4))?.iter().zip(&th4).map(|(w, th)| dexpinv(alg, th, w)).collect();
        let theta: Vec<Vector> = (0..l.len())
            .map(|j| (&k1[j] + &k2[j] * 2.0 + &k3[j] * 2.0 + &k4[j]) * (dt / 6.0))
            .collect();
        Ok(self.shifted(l, &theta))
    }

    fn run(&self, l0: &LoopGroupPath, opts: &LoopFlowOptions) -> Result<LoopFlow, LoopError> {
        l0.require_closed()?;
        if self.xi0.len() != l0.len() {
            return Err(LoopError::Dimension { expected: l0.len(), got: self.xi0.len() });
        }
        let n = check_options(opts, l0.len())?;
        let h = if n == 0 { 0.0 } else { opts.t / n as f64 };
        let group = self.dg.group();
        let mut flow = LoopFlow { times: vec![], paths: vec![], spectra: vec![], energies: vec![], aliasing: vec![] };
        let mut l = l0.samples().to_vec();
        for i in 0..=n {
            let t = i as f64 * h;
            if i > 0 {
                l = self.step(&l, h)?;
            }
            if l.iter().any(|g| g.matrix().iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
                return Err(LoopError::BlowUp { t });
            }
            let path = LoopGroupPath::closed(l.clone())?;
            let tail = path.tail_energy(2 * opts.band);
            if tail > ALIASING_TOL {
                flow.aliasing.push((t, tail));
            }
            let xi = affine_adjoint(group, &l, self.xi0, self.k)?;
            flow.spectra.push(spectrum(sampled_holonomy(group, &xi)?.matrix()));
            flow.energies.push(loop_energy(self.dg.algebra(), self.e, &xi));
            flow.times.push(t);
            flow.paths.push(path);
        }
        Ok(flow)
    }
}

/// Per-sample flow `(d/dt l) l^{-1} = E(k l' l^{-1} + Ad_l alpha)` with spectral
/// `d/ds`, integrated by right-trivialized RKMK4. The holonomy spectrum of
/// `k l' l^{-1} + Ad_l alpha` is tracked as the monodromy invariant.
pub fn wznw_flow(
    dg: &DoubleGroup,
    e: &SigmaOperator,
    alpha: &FourierLoop,
    l0: &LoopGroupPath,
    opts: &LoopFlowOptions,
) -> Result<LoopFlow, LoopError> {
    if alpha.dim() != dg.algebra().dim() {
        return Err(LoopError::Dimension { expected: dg.algebra().dim(), got: alpha.dim() });
    }
    let xi0 = alpha.samples(l0.len());
    LoopSolver { dg, e, xi0: &xi0, k: opts.k }.run(l0, opts)
}

// ---------------------------------------------------------------------------
// Monodromic Lagrangian
// ---------------------------------------------------------------------------

/// Dressing bivector at `g~` in `N*`, as a map `n -> n*`: with
/// `Ad_{g~^{-1}} = [[D, 0], [C, A]]` in `(n, n*)` blocks, `pi~(g~) = A^{-1} C`.
pub fn dressing_bivector(dg: &DoubleGroup, gtilde: &GroupElement) -> Matrix {
    let n = dg.n();
    let r = dg.group().ad_matrix(&gtilde.inverse());
    let a = r.view((n, n), (n, n)).into_owned();
    let cc = r.view((n, 0), (n, n)).into_owned();
    a.try_inverse().expect("Ad restricted to n* is invertible") * cc
}

/// A point of `T(L N*)` with a constant `alpha` in `n*`: the loop `g~`, the body
/// velocity `u = g~^{-1} d_t g~` per sample, both in `n*` coordinates.
#[derive(Debug, Clone)]
pub struct LoopVelocityState {
    pub gtilde: LoopGroupPath,
    pub u: Vec<Vector>,
    pub alpha: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonodromicLagrangian {
    /// `(1/2pi) int L~^alpha` with the loop cocycle in body variables.
    pub body: f64,
    /// Right-translated form with `((B_e + G_e) + pi~(g~))^{-1}`.
    pub space: f64,
    /// Space form evaluated on `m~ = g~ e^{s alpha / k}`.
    pub substituted: f64,
}

/// Evaluates the three forms of the monodromic Lagrangian with central charge `k`.
pub fn monodromic_lagrangian(
    dg: &DoubleGroup,
    e: &SigmaOperator,
    state: &LoopVelocityState,
    k: f64,
) -> Result<MonodromicLagrangian, LoopError> {
    let d = dg.algebra();
    let group = dg.group();
    let n = d.n();
    let p = state.gtilde.len();
    if state.u.len() != p {
        return Err(LoopError::Dimension { expected: p, got: state.u.len() });
    }
    if state.alpha.len() != n {
        return Err(LoopError::Dimension { expected: n, got: state.alpha.len() });
    }
    if k == 0.0 {
        return Err(LoopError::Invalid("central charge must be nonzero".into()));
    }
    let left = state.gtilde.left_log_derivative(group)?;
    let right = state.gtilde.right_log_derivative(group)?;
    let dgt = state.gtilde.derivative()?;
    let at_e = sigma_blocks(e, dg, &dg.identity())?;
    let m_e = &at_e.g_op + &at_e.b_op;
    let alpha_h = d.embed(&state.alpha, Factor::NStar);
    let space_value = |dm: &Vector, dp: &Vector, at: &GroupElement| -> Result<f64, LoopError> {
        let kinv = (&m_e + dressing_bivector(dg, at))
            .try_inverse()
            .ok_or_else(|| LoopError::Invalid("singular (B_e + G_e) + pi~".into()))?;
        Ok(0.5 * dm.dot(&(kinv * dp)))
    };
    let (mut body, mut space, mut subst) = (0.0, 0.0, 0.0);
    for j in 0..p {
        let g = &state.gtilde.samples()[j];
        let w = d.restrict(&left[j], Factor::NStar);
        let blocks = dual_sigma_blocks(e, dg, g)?;
        let m = &blocks.g_op + &blocks.b_op;
        let minus = &state.u[j] - &state.alpha - &w * k;
        let plus = &state.u[j] + &state.alpha + &w * k;
        body += 0.5 * minus.dot(&(m * plus));

        let vt = group.adjoint(g, &d.embed(&state.u[j], Factor::NStar))?;
        let ad_alpha = group.adjoint(g, &alpha_h)?;
        let dm = d.restrict(&(&vt - &right[j] * k - &ad_alpha), Factor::NStar);
        let dp = d.restrict(&(&vt + &right[j] * k + &ad_alpha), Factor::NStar);
        space += space_value(&dm, &dp, g)?;

        let ea = group.exp(&(&alpha_h * (state.gtilde.s(j) / k)));
        let mt = g.mul(&ea);
        let a_mat = group.embed(&(&alpha_h / k));
        let dmt = &dgt[j] * ea.matrix() + mt.matrix() * a_mat;
        let spatial = group.pullback_with_residual(&(dmt * mt.inverse().matrix())).0;
        let vt_m = group.pullback_with_residual(&(group.embed(&vt))).0;
        let dm = d.restrict(&(&vt_m - &spatial * k), Factor::NStar);
        let dp = d.restrict(&(&vt_m + &spatial * k), Factor::NStar);
        subst += space_value(&dm, &dp, &mt)?;
    }
    let pf = p as f64;
    Ok(MonodromicLagrangian { body: body / pf, space: space / pf, substituted: subst / pf })
}

// ---------------------------------------------------------------------------
// Enlarged phase space
// ---------------------------------------------------------------------------

/// Point `(g~, Z, alpha, lambda)` of the enlarged space. `alpha` lies in the
/// span of the torus columns and `lambda` holds torus coordinates.
#[derive(Debug, Clone)]
pub struct MonodromicPhase {
    pub gtilde: LoopGroupPath,
    /// `Z(s_j)` in `n` coordinates.
    pub z: Vec<Vector>,
    /// Constant in `n*` coordinates.
    pub alpha: Vector,
    pub lambda: Vector,
}

/// Columns spanning the torus `t` in `n*` coordinates.
pub fn torus_basis(dg: &DoubleGroup) -> Matrix {
    match dg.kind() {
        crate::groups::DoubleKind::LuWeinstein => Matrix::from_column_slice(dg.n(), 1, &[1.0, 0.0, 0.0]),
        crate::groups::DoubleKind::Abelian => Matrix::identity(dg.n(), dg.n()),
    }
}

/// `mu~ = k g~' g~^{-1} + Ad_{g~}(Z + alpha)` at the samples, in `h` coordinates.
pub fn mu_tilde(dg: &DoubleGroup, state: &MonodromicPhase, k: f64) -> Result<Vec<Vector>, LoopError> {
    let d = dg.algebra();
    let alpha_h = d.embed(&state.alpha, Factor::NStar);
    let xi0: Vec<Vector> = state.z.iter().map(|z| d.embed(z, Factor::N) + &alpha_h).collect();
    affine_adjoint(dg.group(), state.gtilde.samples(), &xi0, k)
}

/// `H = (1/2pi) int (mu~, E mu~) / 2`.
pub fn enlarged_hamiltonian(dg: &DoubleGroup, e: &SigmaOperator, state: &MonodromicPhase, k: f64) -> Result<f64, LoopError> {
    Ok(loop_energy(dg.algebra(), e, &mu_tilde(dg, state, k)?))
}

/// `d lambda / dt = -dH/d alpha`, one entry per torus direction.
pub fn lambda_rate(
    dg: &DoubleGroup,
    e: &SigmaOperator,
    torus: &Matrix,
    state: &MonodromicPhase,
    k: f64,
) -> Result<Vector, LoopError> {
    let d = dg.algebra();
    let mu = mu_tilde(dg, state, k)?;
    let p = mu.len() as f64;
    let mut out = Vector::zeros(torus.ncols());
    for (i, col) in torus.column_iter().enumerate() {
        let t_h = d.embed(&col.into_owned(), Factor::NStar);
        let mut acc = 0.0;
        for (m, g) in mu.iter().zip(state.gtilde.samples()) {
            acc += d.pair(&(e.matrix() * m), &dg.group().adjoint(g, &t_h)?);
        }
        out[i] = -acc / p;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct EnlargedFlow {
    pub times: Vec<f64>,
    pub states: Vec<MonodromicPhase>,
    /// `max_t |alpha(t) - alpha(0)|`.
    pub alpha_drift: f64,
    /// Holonomy spectrum drift of `mu~` along the flow.
    pub mu_drift: f64,
    /// `max_t |mu~(state(t)) - Ad-hat_{l(t)} mu~(0)|`.
    pub equivariance: f64,
    /// Largest `n*` component discarded when reading off `Z`.
    pub off_block: f64,
    pub energies: Vec<f64>,
    pub aliasing: Vec<(f64, f64)>,
}

/// Flow of `h o mu~` on the enlarged space: `(g~, Z)` moves by the affine
/// dressing action of the curve solving `(d/dt l) l^{-1} = E Ad-hat_l mu~_0`,
/// `alpha` is never updated, and `lambda` integrates `-dH/d alpha` by the
/// trapezoid rule on the output grid.
pub fn enlarged_flow(
    dg: &DoubleGroup,
    e: &SigmaOperator,
    torus: &Matrix,
    state0: &MonodromicPhase,
    opts: &LoopFlowOptions,
) -> Result<EnlargedFlow, LoopError> {
    let d = dg.algebra();
    let group = dg.group();
    let n = d.n();
    if torus.nrows() != n || state0.lambda.len() != torus.ncols() {
        return Err(LoopError::Dimension { expected: torus.ncols(), got: state0.lambda.len() });
    }
    let coeffs = torus.clone().pseudo_inverse(1e-12).map_err(|e| LoopError::Invalid(e.to_string()))? * &state0.alpha;
    let off_torus = (torus * coeffs - &state0.alpha).amax();
    if off_torus > 1e-12 {
        return Err(LoopError::Invalid(format!("alpha leaves the torus by {off_torus:e}")));
    }
    let (ok, worst) = check_alpha_condition(&state0.alpha, d)?;
    if !ok {
        return Err(LoopError::Condition(worst));
    }
    let xi0 = mu_tilde(dg, state0, opts.k)?;
    let l0 = LoopGroupPath::identity(group, state0.gtilde.len());
    let flow = LoopSolver { dg, e, xi0: &xi0, k: opts.k }.run(&l0, opts)?;

    let alpha_h = d.embed(&state0.alpha, Factor::NStar);
    let mut out = EnlargedFlow {
        times: flow.times.clone(),
        states: vec![],
        alpha_drift: 0.0,
        mu_drift: flow.eigen_drift(),
        equivariance: 0.0,
        off_block: 0.0,
        energies: flow.energies.clone(),
        aliasing: flow.aliasing.clone(),
    };
    let mut prev_rate: Option<Vector> = None;
    let mut lambda = state0.lambda.clone();
    for (i, path) in flow.paths.iter().enumerate() {
        let mut gs = Vec::with_capacity(path.len());
        let mut as_ = Vec::with_capacity(path.len());
        for (l, g) in path.samples().iter().zip(state0.gtilde.samples()) {
            let f = dg.factorize(&l.mul(g), Order::NStarFirst)?;
            gs.push(f.htilde);
            as_.push(f.g);
        }
        let a_path = LoopGroupPath::closed(as_)?;
        let y0: Vec<Vector> = state0.z.iter().map(|z| d.embed(z, Factor::N) + &alpha_h).collect();
        let moved = affine_adjoint(group, a_path.samples(), &y0, opts.k)?;
        let mut z = Vec::with_capacity(moved.len());
        for m in &moved {
            let zh = m - &alpha_h;
            out.off_block = out.off_block.max(d.restrict(&zh, Factor::NStar).amax());
            z.push(d.restrict(&zh, Factor::N));
        }
        let mut state = MonodromicPhase {
            gtilde: LoopGroupPath::closed(gs)?,
            z,
            alpha: state0.alpha.clone(),
            lambda: lambda.clone(),
        };
        let expected = affine_adjoint(group, path.samples(), &xi0, opts.k)?;
        let actual = mu_tilde(dg, &state, opts.k)?;
        for (a, b) in actual.iter().zip(&expected) {
            out.equivariance = out.equivariance.max((a - b).amax());
        }
        let rate = lambda_rate(dg, e, torus, &state, opts.k)?;
        if let Some(prev) = &prev_rate {
            let h = out.times[i] - out.times[i - 1];
            lambda += (prev + &rate) * (0.5 * h);
            state.lambda = lambda.clone();
        }
        prev_rate = Some(rate);
        out.alpha_drift = out.alpha_drift.max((&state.alpha - &state0.alpha).amax());
        out.states.push(state);
    }
    Ok(out)
}
