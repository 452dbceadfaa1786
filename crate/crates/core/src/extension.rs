//! Group one-cocycles, coboundary shifts, two-cocycles, the extended coadjoint
//! action, Lie-Poisson brackets on `h*_{c,theta}` and the shift isomorphism.
//!
//! Conventions:
//! - `Ad*_{l^{-1}} = (Ad_{l^{-1}})^T`, so `l -> Ad*_{l^{-1}}` is a left action.
//! - `C(lk) = Ad*_{l^{-1}} C(k) + C(l)`, `c_hat = -dC|_e`, `c(X,Y) = <c_hat X, Y>`.
//! - Bracket: `{<X,->,<Y,->}(xi,b) = <xi,[X,Y]> + b c_theta(X,Y)`. With this sign the
//!   symplectic leaves are the extended coadjoint orbits and the shift map is Poisson.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::groups::{DoubleGroup, GroupElement, GroupError, MatrixGroup};
use crate::liecore::{DoubleLieAlgebra, Factor, LieAlgebra, LieError, Matrix, Vector};

/// Default central-difference step for observable gradients.
pub const FD_STEP: f64 = 1e-6;
/// Tolerance of the alpha condition.
pub const ALPHA_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtError {
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("observable has no gradient")]
    MissingGradient,
    #[error("unknown cocycle key '{0}'")]
    UnknownKey(String),
}

/// A group one-cocycle on a matrix group.
#[derive(Debug, Clone, PartialEq)]
pub enum Cocycle {
    Zero,
    /// `B_theta(l) = Ad*_{l^{-1}} theta - theta`.
    Coboundary(Vector),
}

impl Cocycle {
    pub fn kind(&self) -> &'static str {
        match self {
            Cocycle::Zero => "zero",
            Cocycle::Coboundary(_) => "coboundary",
        }
    }

    pub fn eval(&self, h: &MatrixGroup, l: &GroupElement) -> Vector {
        match self {
            Cocycle::Zero => Vector::zeros(h.dim()),
            Cocycle::Coboundary(theta) => h.coadjoint_inv(l, theta) - theta,
        }
    }

    /// Column `j` is `c_hat(e_j)`.
    pub fn chat(&self, alg: &LieAlgebra) -> Matrix {
        let n = alg.dim();
        match self {
            Cocycle::Zero => Matrix::zeros(n, n),
            // dB_theta(X) = -ad*_X theta, so c_hat(X) = ad*_X theta.
            Cocycle::Coboundary(theta) => coad_columns(alg, theta),
        }
    }
}

/// Matrix whose column `j` is `ad*_{e_j} theta`.
fn coad_columns(alg: &LieAlgebra, theta: &Vector) -> Matrix {
    let n = alg.dim();
    let mut m = Matrix::zeros(n, n);
    for j in 0..n {
        let ej = crate::groups::unit(n, j);
        m.set_column(j, &(alg.ad_matrix(&ej).transpose() * theta));
    }
    m
}

/// Parsed registry key.
#[derive(Debug, Clone, PartialEq)]
pub enum CocycleKey {
    Zero,
    Coboundary(Vec<f64>),
    LoopK(f64),
}

/// Parses `"zero"`, `"coboundary:t0,t1,..."` or `"loop_k:k"`.
pub fn parse_cocycle_key(key: &str) -> Result<CocycleKey, ExtError> {
    let bad = || ExtError::UnknownKey(key.to_string());
    if key == "zero" {
        return Ok(CocycleKey::Zero);
    }
    if let Some(rest) = key.strip_prefix("coboundary:") {
        let vals: Result<Vec<f64>, _> = rest.split(',').map(|s| s.trim().parse::<f64>()).collect();
        return vals.map(CocycleKey::Coboundary).map_err(|_| bad());
    }
    if let Some(rest) = key.strip_prefix("loop_k:") {
        return rest.trim().parse::<f64>().map(CocycleKey::LoopK).map_err(|_| bad());
    }
    Err(bad())
}

/// `C_theta(l) = C(l) - Ad*_{l^{-1}} theta + theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedCocycle {
    pub base: Cocycle,
    pub theta: Vector,
}

impl ShiftedCocycle {
    pub fn new(base: Cocycle, theta: Vector) -> Self {
        ShiftedCocycle { base, theta }
    }

    pub fn unshifted(base: Cocycle, dim: usize) -> Self {
        ShiftedCocycle { base, theta: Vector::zeros(dim) }
    }

    pub fn eval(&self, h: &MatrixGroup, l: &GroupElement) -> Vector {
        self.base.eval(h, l) - h.coadjoint_inv(l, &self.theta) + &self.theta
    }

    /// `c_hat_theta(X) = c_hat(X) - ad*_X theta`.
    pub fn chat(&self, alg: &LieAlgebra) -> Matrix {
        self.base.chat(alg) - coad_columns(alg, &self.theta)
    }

    /// `c_theta(X, Y) = c(X, Y) - <theta, [X, Y]>`.
    pub fn two_cocycle(&self, alg: &LieAlgebra, x: &Vector, y: &Vector) -> f64 {
        (self.chat(alg) * x).dot(y)
    }
}

/// A point `(xi, b)` of the extended dual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedDual {
    pub xi: Vector,
    pub b: f64,
}

impl ExtendedDual {
    pub fn new(xi: Vector, b: f64) -> Self {
        ExtendedDual { xi, b }
    }

    pub fn unit(xi: Vector) -> Self {
        ExtendedDual { xi, b: 1.0 }
    }

    pub fn dist(&self, other: &ExtendedDual) -> f64 {
        (&self.xi - &other.xi).amax().max((self.b - other.b).abs())
    }
}

/// `Ad^_{theta; l^{-1}}(xi, b) = (Ad*_{l^{-1}} xi + b C_theta(l), b)`.
pub fn extended_coadjoint(
    c: &ShiftedCocycle,
    h: &MatrixGroup,
    l: &GroupElement,
    p: &ExtendedDual,
) -> ExtendedDual {
    let mut xi = h.coadjoint_inv(l, &p.xi);
    if p.b != 0.0 {
        xi += c.eval(h, l) * p.b;
    }
    ExtendedDual { xi, b: p.b }
}

/// Infinitesimal generator of the extended coadjoint action: `-ad*_X xi - b c_hat_theta(X)`.
pub fn orbit_generator(c: &ShiftedCocycle, alg: &LieAlgebra, x: &Vector, p: &ExtendedDual) -> Vector {
    alg.ad_matrix(x).transpose() * &p.xi * -1.0 - c.chat(alg) * x * p.b
}

/// Kirillov-Kostant form on the orbit through `p`, evaluated on the generators of `X`, `Y`.
pub fn kk_form(c: &ShiftedCocycle, alg: &LieAlgebra, p: &ExtendedDual, x: &Vector, y: &Vector) -> f64 {
    p.xi.dot(&alg.br(x, y)) + p.b * c.two_cocycle(alg, x, y)
}

type ScalarFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

/// A function on `h*` with an optional closed-form gradient (its Legendre transform).
#[derive(Clone)]
pub struct Observable {
    f: ScalarFn,
    grad: Option<GradFn>,
    differentiable: bool,
}

impl std::fmt::Debug for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Observable")
            .field("closed_form_gradient", &self.grad.is_some())
            .field("differentiable", &self.differentiable)
            .finish()
    }
}

impl Observable {
    /// `xi -> <xi, X>`.
    pub fn linear(x: Vector) -> Self {
        let g = x.clone();
        Observable {
            f: Arc::new(move |xi: &Vector| xi.dot(&x)),
            grad: Some(Arc::new(move |_: &Vector| g.clone())),
            differentiable: true,
        }
    }

    /// `xi -> <xi, Q xi> / 2` for symmetric `Q`.
    pub fn quadratic(q: Matrix) -> Self {
        let q2 = q.clone();
        Observable {
            f: Arc::new(move |xi: &Vector| 0.5 * xi.dot(&(&q * xi))),
            grad: Some(Arc::new(move |xi: &Vector| &q2 * xi)),
            differentiable: true,
        }
    }

    /// Gradient by central differences with step [`FD_STEP`].
    pub fn from_fn<F: Fn(&Vector) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Observable { f: Arc::new(f), grad: None, differentiable: true }
    }

    pub fn with_gradient<F, G>(f: F, grad: G) -> Self
    where
        F: Fn(&Vector) -> f64 + Send + Sync + 'static,
        G: Fn(&Vector) -> Vector + Send + Sync + 'static,
    {
        Observable { f: Arc::new(f), grad: Some(Arc::new(grad)), differentiable: true }
    }

    /// A value-only observable; asking for its gradient is an error.
    pub fn opaque<F: Fn(&Vector) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Observable { f: Arc::new(f), grad: None, differentiable: false }
    }

    pub fn value(&self, xi: &Vector) -> f64 {
        (self.f)(xi)
    }

    /// Legendre transform `L_f(xi)` in `h` coordinates.
    pub fn gradient(&self, xi: &Vector) -> Result<Vector, ExtError> {
        if let Some(g) = &self.grad {
            return Ok(g(xi));
        }
        if !self.differentiable {
            return Err(ExtError::MissingGradient);
        }
        let mut out = Vector::zeros(xi.len());
        let mut p = xi.clone();
        for i in 0..xi.len() {
            let x0 = p[i];
            p[i] = x0 + FD_STEP;
            let fp = (self.f)(&p);
            p[i] = x0 - FD_STEP;
            let fm = (self.f)(&p);
            p[i] = x0;
            out[i] = (fp - fm) / (2.0 * FD_STEP);
        }
        Ok(out)
    }

    /// `f o phi` for the shift `phi(eta) = eta + alpha`.
    pub fn shifted(&self, alpha: &Vector) -> Observable {
        let (f, a) = (self.f.clone(), alpha.clone());
        let grad = self.grad.clone().map(|g| {
            let a = alpha.clone();
            Arc::new(move |xi: &Vector| g(&(xi + &a))) as GradFn
        });
        Observable { f: Arc::new(move |xi: &Vector| f(&(xi + &a))), grad, differentiable: self.differentiable }
    }
}

/// `{F, G}_{c,theta}(xi, b) = <xi, [dF, dG]> + b c_theta(dF, dG)`.
pub fn lie_poisson_bracket(
    c: &ShiftedCocycle,
    alg: &LieAlgebra,
    f: &Observable,
    g: &Observable,
    p: &ExtendedDual,
) -> Result<f64, ExtError> {
    let df = f.gradient(&p.xi)?;
    let dg = g.gradient(&p.xi)?;
    Ok(kk_form(c, alg, p, &df, &dg))
}

/// `phi(eta, 1) = (eta + alpha, 1)`, defined on the `b = 1` slice.
pub fn shift_iso(p: &ExtendedDual, alpha: &Vector) -> Result<ExtendedDual, ExtError> {
    if p.b != 1.0 {
        return Err(ExtError::Domain(format!("shift map is defined on b = 1, got b = {}", p.b)));
    }
    Ok(ExtendedDual::unit(&p.xi + alpha))
}

pub fn shift_iso_inv(p: &ExtendedDual, alpha: &Vector) -> Result<ExtendedDual, ExtError> {
    shift_iso(p, &-alpha)
}

/// `|C(lk) - Ad*_{l^{-1}} C(k) - C(l)|_inf`.
pub fn cocycle_identity_residual(c: &ShiftedCocycle, h: &MatrixGroup, l: &GroupElement, k: &GroupElement) -> f64 {
    let lhs = c.eval(h, &l.mul(k));
    let rhs = h.coadjoint_inv(l, &c.eval(h, k)) + c.eval(h, l);
    (lhs - rhs).amax()
}

/// `|c_hat + dC|_e|_inf` with `dC` by central differences (step 1e-5).
pub fn chat_consistency_residual(c: &ShiftedCocycle, h: &MatrixGroup) -> f64 {
    let alg = h.algebra();
    let n = alg.dim();
    let chat = c.chat(alg);
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let ej = crate::groups::unit(n, j);
        let dc = (c.eval(h, &h.exp(&(&ej * eps))) - c.eval(h, &h.exp(&(&ej * -eps)))) / (2.0 * eps);
        worst = worst.max((chat.column(j) + dc).amax());
    }
    worst
}

/// JSON report `{kind, worst_residual, witness}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub kind: String,
    pub worst_residual: f64,
    pub witness: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityReport {
    pub compatible: bool,
    pub report: Report,
}

/// Samples `g` in N and `h~` in N* and checks `Pi_{n*} psi_bar C(g) = 0`,
/// `Pi_n psi_bar C(h~) = 0` to 1e-10.
pub fn check_compatibility<R: Rng>(
    c: &ShiftedCocycle,
    dg: &DoubleGroup,
    rng: &mut R,
    samples: usize,
) -> CompatibilityReport {
    let d = dg.algebra();
    let h = dg.group();
    let mut worst = 0.0;
    let mut witness = serde_json::Value::Null;
    for s in 0..samples {
        for which in [Factor::N, Factor::NStar] {
            let x = Vector::from_fn(d.n(), |_, _| rng.random_range(-1.0..1.0));
            let l = dg.exp_factor(&x, which);
            let z = d.to_algebra(&c.eval(h, &l));
            let other = match which {
                Factor::N => Factor::NStar,
                Factor::NStar => Factor::N,
            };
            let r = d.project(&z, other).expect("dimension matches").amax();
            if r > worst {
                worst = r;
                witness = serde_json::json!({
                    "sample": s,
                    "factor": which,
                    "exponent": x.iter().cloned().collect::<Vec<f64>>(),
                });
            }
        }
    }
    CompatibilityReport {
        compatible: worst < 1e-10,
        report: Report { kind: c.base.kind().to_string(), worst_residual: worst, witness },
    }
}

/// Accepts `alpha` as `n` coordinates of `n*`, or as an element of `h` supported on `n*`.
pub fn alpha_in_h(d: &DoubleLieAlgebra, alpha: &Vector) -> Result<Vector, ExtError> {
    if alpha.len() == d.n() {
        return Ok(d.embed(alpha, Factor::NStar));
    }
    if alpha.len() != d.dim() {
        return Err(LieError::Dimension { expected: d.n(), got: alpha.len() }.into());
    }
    if d.project(alpha, Factor::N)?.amax() > 0.0 {
        return Err(ExtError::Domain("alpha has a component outside the n* block".into()));
    }
    Ok(alpha.clone())
}

/// Worst `|Pi_{n*}[X_i, alpha]|` over the `n` basis; true iff below [`ALPHA_TOL`].
pub fn check_alpha_condition(alpha: &Vector, d: &DoubleLieAlgebra) -> Result<(bool, f64), ExtError> {
    let a = alpha_in_h(d, alpha)?;
    let mut worst: f64 = 0.0;
    for i in d.factor_range(Factor::N) {
        let x = crate::groups::unit(d.dim(), i);
        let z = d.total().br(&x, &a);
        worst = worst.max(d.project(&z, Factor::NStar)?.amax());
    }
    Ok((worst < ALPHA_TOL, worst))
}

/// The 2-cocycle `c_{-alpha}` shifted by `theta = -psi(alpha)`.
pub fn minus_alpha(base: Cocycle, d: &DoubleLieAlgebra, alpha_h: &Vector) -> ShiftedCocycle {
    ShiftedCocycle::new(base, -d.to_dual(alpha_h))
}
