//! Finite-dimensional Lie algebras given by structure constants, and doubles
//! assembled from a pair of dual algebras.
//!
//! Elements are coordinate vectors over a fixed ordered basis. Dual vectors use
//! the dual basis, so `<xi, X> = xi . X`. All brackets go through the structure
//! constants `c^k_ij`, never through a matrix representation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Tolerance for construction-time checks; built-ins have rational constants.
pub const CONSTRUCTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LieError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("structure constants not antisymmetric at ({i},{j},{k}): residual {residual:e}")]
    Antisymmetry { i: usize, j: usize, k: usize, residual: f64 },
    #[error("Jacobi identity fails on basis triple ({i},{j},{k}): residual {residual:e}")]
    Jacobi { i: usize, j: usize, k: usize, residual: f64 },
    #[error("not a Lie bialgebra: Jacobi fails on basis triple ({i},{j},{k}) of the double, residual {residual:e}")]
    NotBialgebra { i: usize, j: usize, k: usize, residual: f64 },
    #[error("pairing is not ad-invariant on basis triple ({i},{j},{k}): residual {residual:e}")]
    PairingNotInvariant { i: usize, j: usize, k: usize, residual: f64 },
    #[error("pairing must be symmetric and of size {0}x{0}")]
    BadPairing(usize),
    #[error("duality pairing between the factors is singular")]
    SingularDuality,
    #[error("index {index} out of range for dimension {dim}")]
    Index { index: usize, dim: usize },
    #[error("unsupported construction: {0}")]
    Unsupported(String),
    #[error("unknown built-in algebra '{0}'")]
    UnknownBuiltin(String),
    #[error("invalid algebra document: {0}")]
    Json(String),
}

/// A real Lie algebra of dimension `dim` with structure constants
/// `[e_i, e_j] = sum_k c^k_ij e_k` and an optional invariant pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct LieAlgebra {
    dim: usize,
    labels: Vec<String>,
    /// Flattened `c[(i*dim + j)*dim + k] = c^k_ij`.
    c: Vec<f64>,
    pairing: Option<Matrix>,
}

impl LieAlgebra {
    /// Builds an algebra from a dense constant table and validates it.
    pub fn from_dense(
        labels: Vec<String>,
        c: Vec<f64>,
        pairing: Option<Matrix>,
    ) -> Result<Self, LieError> {
        let dim = labels.len();
        if c.len() != dim * dim * dim {
            return Err(LieError::Dimension { expected: dim * dim * dim, got: c.len() });
        }
        if let Some(p) = &pairing {
            if p.nrows() != dim || p.ncols() != dim || (p - p.transpose()).amax() > CONSTRUCTION_TOL {
                return Err(LieError::BadPairing(dim));
            }
        }
        let alg = LieAlgebra { dim, labels, c, pairing };
        alg.validate()?;
        Ok(alg)
    }

    /// Builds an algebra from sparse entries `(i, j, k, c^k_ij)`. The entry for
    /// `(j, i, k)` is filled with the opposite sign unless given explicitly.
    pub fn from_entries(
        labels: Vec<String>,
        entries: &[(usize, usize, usize, f64)],
        pairing: Option<Matrix>,
    ) -> Result<Self, LieError> {
        let dim = labels.len();
        let mut c = vec![0.0; dim * dim * dim];
        let mut given = vec![false; dim * dim * dim];
        for &(i, j, k, v) in entries {
            for &index in &[i, j, k] {
                if index >= dim {
                    return Err(LieError::Index { index, dim });
                }
            }
            let idx = (i * dim + j) * dim + k;
            c[idx] = v;
            given[idx] = true;
        }
        for &(i, j, k, v) in entries {
            let idx = (j * dim + i) * dim + k;
            if !given[idx] {
                c[idx] = -v;
            }
        }
        Self::from_dense(labels, c, pairing)
    }

    /// The abelian algebra of dimension `dim`.
    pub fn abelian(labels: Vec<String>) -> Self {
        let dim = labels.len();
        LieAlgebra { dim, labels, c: vec![0.0; dim * dim * dim], pairing: None }
    }

    fn validate(&self) -> Result<(), LieError> {
        if let Some((i, j, k, residual)) = self.antisymmetry_witness() {
            if residual > CONSTRUCTION_TOL {
                return Err(LieError::Antisymmetry { i, j, k, residual });
            }
        }
        if let Some((i, j, k, residual)) = self.jacobi_witness() {
            if residual > CONSTRUCTION_TOL {
                return Err(LieError::Jacobi { i, j, k, residual });
            }
        }
        if let Some((i, j, k, residual)) = self.invariance_witness() {
            if residual > CONSTRUCTION_TOL {
                return Err(LieError::PairingNotInvariant { i, j, k, residual });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn pairing(&self) -> Option<&Matrix> {
        self.pairing.as_ref()
    }

    #[inline]
    pub fn constant(&self, i: usize, j: usize, k: usize) -> f64 {
        self.c[(i * self.dim + j) * self.dim + k]
    }

    /// Raw constant table, `c^k_ij` at `(i*dim + j)*dim + k`.
    pub fn constants(&self) -> &[f64] {
        &self.c
    }

    fn check_len(&self, v: &Vector) -> Result<(), LieError> {
        if v.len() != self.dim {
            Err(LieError::Dimension { expected: self.dim, got: v.len() })
        } else {
            Ok(())
        }
    }

    /// `[X, Y]` with dimension checks.
    pub fn bracket(&self, x: &Vector, y: &Vector) -> Result<Vector, LieError> {
        self.check_len(x)?;
        self.check_len(y)?;
        Ok(self.br(x, y))
    }

    /// Unchecked bracket; panics on mismatched lengths.
    pub fn br(&self, x: &Vector, y: &Vector) -> Vector {
        let n = self.dim;
        assert!(x.len() == n && y.len() == n, "bracket: dimension mismatch");
        let mut out = Vector::zeros(n);
        for i in 0..n {
            if x[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                let w = x[i] * y[j];
                if w == 0.0 {
                    continue;
                }
                let base = (i * n + j) * n;
                for k in 0..n {
                    out[k] += w * self.c[base + k];
                }
            }
        }
        out
    }

    /// Matrix of `ad_X`: column `j` holds `[X, e_j]`.
    pub fn ad_matrix(&self, x: &Vector) -> Matrix {
        let n = self.dim;
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            if x[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                let base = (i * n + j) * n;
                for k in 0..n {
                    m[(k, j)] += x[i] * self.c[base + k];
                }
            }
        }
        m
    }

    /// `ad*_X xi`, defined by `<ad*_X xi, Y> = <xi, [X, Y]>`.
    pub fn ad_star(&self, x: &Vector, xi: &Vector) -> Result<Vector, LieError> {
        self.check_len(x)?;
        self.check_len(xi)?;
        Ok(self.ad_matrix(x).transpose() * xi)
    }

    /// Invariant pairing `(X, Y)`; `None` when the algebra has no pairing.
    pub fn pair(&self, x: &Vector, y: &Vector) -> Option<f64> {
        self.pairing.as_ref().map(|p| x.dot(&(p * y)))
    }

    fn antisymmetry_witness(&self) -> Option<(usize, usize, usize, f64)> {
        let n = self.dim;
        let mut worst: Option<(usize, usize, usize, f64)> = None;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let r = (self.constant(i, j, k) + self.constant(j, i, k)).abs();
                    if worst.is_none_or(|w| r > w.3) {
                        worst = Some((i, j, k, r));
                    }
                }
            }
        }
        worst
    }

    /// Largest `|c^k_ij + c^k_ji|`.
    pub fn antisymmetry_residual(&self) -> f64 {
        self.antisymmetry_witness().map_or(0.0, |w| w.3)
    }

    fn jacobi_witness(&self) -> Option<(usize, usize, usize, f64)> {
        let n = self.dim;
        let mut worst: Option<(usize, usize, usize, f64)> = None;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut r: f64 = 0.0;
                    for l in 0..n {
                        let mut s = 0.0;
                        for m in 0..n {
                            s += self.constant(i, j, m) * self.constant(m, k, l)
                                + self.constant(j, k, m) * self.constant(m, i, l)
                                + self.constant(k, i, m) * self.constant(m, j, l);
                        }
                        r = r.max(s.abs());
                    }
                    if worst.is_none_or(|w| r > w.3) {
                        worst = Some((i, j, k, r));
                    }
                }
            }
        }
        worst
    }

    /// Largest Jacobi defect over basis triples.
    pub fn jacobi_residual(&self) -> f64 {
        self.jacobi_witness().map_or(0.0, |w| w.3)
    }

    fn invariance_witness(&self) -> Option<(usize, usize, usize, f64)> {
        let p = self.pairing.as_ref()?;
        let n = self.dim;
        let mut worst: Option<(usize, usize, usize, f64)> = None;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    // ([e_i, e_j], e_k) + (e_j, [e_i, e_k])
                    let mut s = 0.0;
                    for m in 0..n {
                        s += self.constant(i, j, m) * p[(m, k)] + p[(j, m)] * self.constant(i, k, m);
                    }
                    let r = s.abs();
                    if worst.is_none_or(|w| r > w.3) {
                        worst = Some((i, j, k, r));
                    }
                }
            }
        }
        worst
    }

    /// Largest ad-invariance defect of the pairing (0 when there is none).
    pub fn invariance_residual(&self) -> f64 {
        self.invariance_witness().map_or(0.0, |w| w.3)
    }

    /// Same algebra in the basis `e'_j = sum_k M_kj e_k`.
    pub fn change_basis(&self, m: &Matrix) -> Result<LieAlgebra, LieError> {
        let n = self.dim;
        if m.nrows() != n || m.ncols() != n {
            return Err(LieError::Dimension { expected: n, got: m.nrows() });
        }
        let minv = m.clone().try_inverse().ok_or(LieError::SingularDuality)?;
        let mut c = vec![0.0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                let x = m.column(i).clone_owned();
                let y = m.column(j).clone_owned();
                let z = &minv * self.br(&x, &y);
                for k in 0..n {
                    c[(i * n + j) * n + k] = z[k];
                }
            }
        }
        let pairing = self.pairing.as_ref().map(|p| m.transpose() * p * m);
        LieAlgebra::from_dense(self.labels.clone(), c, pairing)
    }

    /// Overwrites one constant without validation. Only for negative tests and
    /// the corrupted-constants debug switch of the check suite.
    #[doc(hidden)]
    pub fn corrupt_constant(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let n = self.dim;
        self.c[(i * n + j) * n + k] = value;
    }

    pub fn to_doc(&self) -> AlgebraDoc {
        let n = self.dim;
        let mut structure = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let v = self.constant(i, j, k);
                    if v != 0.0 {
                        structure.push((i, j, k, v));
                    }
                }
            }
        }
        let pairing = self.pairing.as_ref().map(|p| {
            let mut out = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    if p[(i, j)] != 0.0 {
                        out.push((i, j, p[(i, j)]));
                    }
                }
            }
            out
        });
        AlgebraDoc { dim: n, labels: self.labels.clone(), structure, pairing }
    }

    pub fn from_doc(doc: &AlgebraDoc) -> Result<Self, LieError> {
        let labels = if doc.labels.is_empty() {
            (0..doc.dim).map(|i| format!("e{i}")).collect()
        } else {
            doc.labels.clone()
        };
        if labels.len() != doc.dim {
            return Err(LieError::Json(format!("{} labels for dim {}", labels.len(), doc.dim)));
        }
        let pairing = match &doc.pairing {
            None => None,
            Some(entries) => {
                let mut p = Matrix::zeros(doc.dim, doc.dim);
                for &(i, j, v) in entries {
                    if i >= doc.dim || j >= doc.dim {
                        return Err(LieError::Index { index: i.max(j), dim: doc.dim });
                    }
                    p[(i, j)] = v;
                    p[(j, i)] = v;
                }
                Some(p)
            }
        };
        Self::from_entries(labels, &doc.structure, pairing)
    }

    pub fn from_json(text: &str) -> Result<Self, LieError> {
        let doc: AlgebraDoc = serde_json::from_str(text).map_err(|e| LieError::Json(e.to_string()))?;
        Self::from_doc(&doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("algebra documents always serialize")
    }
}

/// JSON form: `{"dim", "labels", "structure": [[i,j,k,v]...], "pairing": [[i,j,v]...]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AlgebraDoc {
    pub dim: usize,
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default)]
    pub structure: Vec<(usize, usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairing: Option<Vec<(usize, usize, f64)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Factor {
    N,
    NStar,
}

/// The double `h = n + n*`: first `n` coordinates span `n`, the last `n` span
/// `n*`, and the pairing is `(X_i, xi_j) = delta_ij` with both factors isotropic.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleLieAlgebra {
    total: LieAlgebra,
    n: usize,
    psi: Matrix,
}

impl DoubleLieAlgebra {
    /// Assembles the double from `n`, `n*` and the pairing matrix
    /// `D_ij = (X_i, xi_j)`. The `n*` basis is rebased so that `D` becomes the
    /// identity. Jacobi of the assembled bracket encodes bialgebra compatibility.
    pub fn build(n_alg: &LieAlgebra, nstar: &LieAlgebra, duality: &Matrix) -> Result<Self, LieError> {
        let n = n_alg.dim();
        if nstar.dim() != n {
            return Err(LieError::Dimension { expected: n, got: nstar.dim() });
        }
        if duality.nrows() != n || duality.ncols() != n {
            return Err(LieError::Dimension { expected: n, got: duality.nrows() });
        }
        let m = duality.clone().try_inverse().ok_or(LieError::SingularDuality)?;
        let nstar = if (duality - Matrix::identity(n, n)).amax() == 0.0 {
            nstar.clone()
        } else {
            nstar.change_basis(&m)?
        };
        let d = 2 * n;
        let mut c = vec![0.0; d * d * d];
        let idx = |i: usize, j: usize, k: usize| (i * d + j) * d + k;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    c[idx(i, j, k)] = n_alg.constant(i, j, k);
                    c[idx(n + i, n + j, n + k)] = nstar.constant(i, j, k);
                }
            }
        }
        // [(X_i,0),(0,xi_j)] = (ad*_{xi_j} X_i, -ad*_{X_i} xi_j)
        for i in 0..n {
            for j in 0..n {
                for m_ in 0..n {
                    // <ad*_{xi_j} X_i, xi_m> = <X_i, [xi_j, xi_m]>
                    let a = nstar.constant(j, m_, i);
                    // <ad*_{X_i} xi_j, X_m> = <xi_j, [X_i, X_m]>
                    let b = -n_alg.constant(i, m_, j);
                    c[idx(i, n + j, m_)] = a;
                    c[idx(n + j, i, m_)] = -a;
                    c[idx(i, n + j, n + m_)] = b;
                    c[idx(n + j, i, n + m_)] = -b;
                }
            }
        }
        let mut labels: Vec<String> = n_alg.labels().to_vec();
        labels.extend(nstar.labels().iter().cloned());
        let mut psi = Matrix::zeros(d, d);
        for i in 0..n {
            psi[(i, n + i)] = 1.0;
            psi[(n + i, i)] = 1.0;
        }
        let total = LieAlgebra { dim: d, labels, c, pairing: Some(psi.clone()) };
        if let Some((i, j, k, residual)) = total.jacobi_witness() {
            if residual > CONSTRUCTION_TOL {
                return Err(LieError::NotBialgebra { i, j, k, residual });
            }
        }
        if let Some((i, j, k, residual)) = total.invariance_witness() {
            if residual > CONSTRUCTION_TOL {
                return Err(LieError::PairingNotInvariant { i, j, k, residual });
            }
        }
        Ok(DoubleLieAlgebra { total, n, psi })
    }

    /// Wraps an already assembled `2n`-dimensional algebra whose pairing has
    /// the block form `[[0, I], [I, 0]]`.
    pub fn from_total(total: LieAlgebra) -> Result<Self, LieError> {
        let d = total.dim();
        if !d.is_multiple_of(2) {
            return Err(LieError::Unsupported("a double has even dimension".into()));
        }
        let n = d / 2;
        let mut psi = Matrix::zeros(d, d);
        for i in 0..n {
            psi[(i, n + i)] = 1.0;
            psi[(n + i, i)] = 1.0;
        }
        match total.pairing() {
            Some(p) if (p - &psi).amax() <= CONSTRUCTION_TOL => {}
            _ => return Err(LieError::BadPairing(d)),
        }
        total.validate()?;
        Ok(DoubleLieAlgebra { total, n, psi })
    }

    pub fn total(&self) -> &LieAlgebra {
        &self.total
    }

    /// Dimension of each factor.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn factor_range(&self, which: Factor) -> std::ops::Range<usize> {
        match which {
            Factor::N => 0..self.n,
            Factor::NStar => self.n..2 * self.n,
        }
    }

    /// `psi: h -> h*`, `psi(X) = (X, -)`.
    pub fn psi(&self) -> &Matrix {
        &self.psi
    }

    /// `psi^{-1}: h* -> h`; equal to `psi` for the block pairing.
    pub fn psi_bar(&self) -> &Matrix {
        &self.psi
    }

    pub fn to_dual(&self, x: &Vector) -> Vector {
        &self.psi * x
    }

    pub fn to_algebra(&self, xi: &Vector) -> Vector {
        &self.psi * xi
    }

    /// `(X, Y)_h`.
    pub fn pair(&self, x: &Vector, y: &Vector) -> f64 {
        x.dot(&(&self.psi * y))
    }

    pub fn projector(&self, which: Factor) -> Matrix {
        let d = self.dim();
        let mut p = Matrix::zeros(d, d);
        for i in self.factor_range(which) {
            p[(i, i)] = 1.0;
        }
        p
    }

    /// `Pi_n Z` or `Pi_n* Z`.
    pub fn project(&self, z: &Vector, which: Factor) -> Result<Vector, LieError> {
        if z.len() != self.dim() {
            return Err(LieError::Dimension { expected: self.dim(), got: z.len() });
        }
        let mut out = Vector::zeros(self.dim());
        for i in self.factor_range(which) {
            out[i] = z[i];
        }
        Ok(out)
    }

    /// Embeds factor coordinates into `h`.
    pub fn embed(&self, v: &Vector, which: Factor) -> Vector {
        assert_eq!(v.len(), self.n, "factor vector has wrong length");
        let mut out = Vector::zeros(self.dim());
        for (o, i) in self.factor_range(which).enumerate() {
            out[i] = v[o];
        }
        out
    }

    /// Extracts factor coordinates from an element of `h`.
    pub fn restrict(&self, z: &Vector, which: Factor) -> Vector {
        Vector::from_iterator(self.n, self.factor_range(which).map(|i| z[i]))
    }

    /// Largest pairing value between two elements of the same factor.
    pub fn isotropy_residual(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max(self.psi[(i, j)].abs()).max(self.psi[(n + i, n + j)].abs());
            }
        }
        worst
    }
}

/// Built-in algebras and doubles.
pub mod builtin {
    use super::*;

    fn labels(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    /// se(2) with basis `J, P1, P2`: `[J,P1] = P2`, `[J,P2] = -P1`, `[P1,P2] = 0`.
    pub fn se2() -> LieAlgebra {
        LieAlgebra::from_entries(labels(&["J", "P1", "P2"]), &[(0, 1, 2, 1.0), (0, 2, 1, -1.0)], None)
            .expect("se(2) constants are valid")
    }

    /// Weighted se(2) with basis `e1, e2, e3`: `[e3,e1] = b e2`, `[e3,e2] = -a e1`.
    /// For `a, b > 0` it is isomorphic to se(2) and
    /// `K = (a xi_1^2 + b xi_2^2)/2` is a Casimir of its Lie-Poisson bracket.
    pub fn se2_weighted(a: f64, b: f64) -> LieAlgebra {
        LieAlgebra::from_entries(labels(&["e1", "e2", "e3"]), &[(2, 0, 1, b), (2, 1, 0, -a)], None)
            .expect("weighted se(2) constants are valid")
    }

    /// an(2): `H, E, iE` with `[H,E] = 2E`, `[H,iE] = 2 iE`.
    pub fn an2() -> LieAlgebra {
        LieAlgebra::from_entries(labels(&["H", "E", "iE"]), &[(0, 1, 1, 2.0), (0, 2, 2, 2.0)], None)
            .expect("an(2) constants are valid")
    }

    /// su(2) in the basis dual to an(2) under `Im tr`:
    /// `t = diag(i,-i)/2`, `u = [[0,i],[i,0]]`, `v = [[0,-1],[1,0]]`.
    pub fn su2_dual_basis() -> LieAlgebra {
        LieAlgebra::from_entries(
            labels(&["t", "u", "v"]),
            &[(0, 1, 2, 1.0), (0, 2, 1, -1.0), (1, 2, 0, 4.0)],
            None,
        )
        .expect("su(2) constants are valid")
    }

    /// sl(2,C) as a real double `an(2) + su(2)`.
    pub fn lu_weinstein_su2() -> DoubleLieAlgebra {
        DoubleLieAlgebra::build(&an2(), &su2_dual_basis(), &Matrix::identity(3, 3))
            .expect("the rank-one double satisfies Jacobi")
    }

    /// Double of two abelian algebras of dimension `n`.
    pub fn abelian_double(n: usize) -> DoubleLieAlgebra {
        let a = LieAlgebra::abelian((0..n).map(|i| format!("x{i}")).collect());
        let b = LieAlgebra::abelian((0..n).map(|i| format!("y{i}")).collect());
        DoubleLieAlgebra::build(&a, &b, &Matrix::identity(n, n)).expect("abelian double")
    }

    /// Generic Chevalley-Serre assembly is deliberately not provided.
    pub fn chevalley_serre(rank: usize) -> Result<DoubleLieAlgebra, LieError> {
        if rank == 1 {
            Ok(lu_weinstein_su2())
        } else {
            Err(LieError::Unsupported(format!(
                "Chevalley-Serre assembly for rank {rank}; supply structure constants instead"
            )))
        }
    }

    pub const NAMES: [&str; 3] = ["se2", "lu_weinstein_su2", "abelian_double"];
}

#[cfg(test)]
mod tests {
    use super::builtin::*;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rvec(rng: &mut ChaCha8Rng, n: usize) -> Vector {
        Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    // 3x3 matrix representation of se(2): J rotates, P1/P2 translate.
    fn se2_mat(x: &Vector) -> Matrix {
        Matrix::from_row_slice(3, 3, &[0.0, -x[0], x[1], x[0], 0.0, x[2], 0.0, 0.0, 0.0])
    }

    fn se2_pull(m: &Matrix) -> Vector {
        Vector::from_vec(vec![m[(1, 0)], m[(0, 2)], m[(1, 2)]])
    }

    #[test]
    fn se2_bracket_matches_matrix_commutator() {
        let g = se2();
        let j = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        let p1 = Vector::from_vec(vec![0.0, 1.0, 0.0]);
        assert_eq!(g.br(&j, &p1), Vector::from_vec(vec![0.0, 0.0, 1.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (x, y) = (rvec(&mut rng, 3), rvec(&mut rng, 3));
            let (a, b) = (se2_mat(&x), se2_mat(&y));
            let oracle = se2_pull(&(&a * &b - &b * &a));
            assert!((g.br(&x, &y) - oracle).amax() < 1e-14);
        }
    }

    #[test]
    fn self_bracket_vanishes() {
        let g = lu_weinstein_su2();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rvec(&mut rng, 6);
        assert!(g.total().br(&x, &x).amax() < 1e-15);
    }

    #[test]
    fn ad_star_brute_force_on_se2() {
        // Brute force over the basis through the defining identity.
        let g = se2();
        let j = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        let p1s = Vector::from_vec(vec![0.0, 1.0, 0.0]);
        let out = g.ad_star(&j, &p1s).unwrap();
        for k in 0..3 {
            let ek = Vector::from_fn(3, |i, _| if i == k { 1.0 } else { 0.0 });
            assert_eq!(out[k], p1s.dot(&g.br(&j, &ek)));
        }
        // [J, P2] = -P1, so ad*_J P1* = -P2*.
        assert_eq!(out, Vector::from_vec(vec![0.0, 0.0, -1.0]));
    }

    #[test]
    fn ad_star_trivial_cases() {
        let g = se2();
        let xi = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(g.ad_star(&Vector::zeros(3), &xi).unwrap(), Vector::zeros(3));
        let a = LieAlgebra::abelian(vec!["a".into(), "b".into()]);
        let x = Vector::from_vec(vec![1.0, -2.0]);
        assert_eq!(a.ad_star(&x, &x).unwrap(), Vector::zeros(2));
        assert!(g.ad_star(&Vector::zeros(2), &xi).is_err());
    }

    #[test]
    fn dimension_error_on_mismatch() {
        let g = se2();
        let err = g.bracket(&Vector::zeros(3), &Vector::zeros(4)).unwrap_err();
        assert_eq!(err, LieError::Dimension { expected: 3, got: 4 });
    }

    #[test]
    fn lu_weinstein_factor_brackets_restrict() {
        let d = lu_weinstein_su2();
        let (a, s) = (an2(), su2_dual_basis());
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    assert_eq!(d.total().constant(i, j, k), a.constant(i, j, k));
                    assert_eq!(d.total().constant(3 + i, 3 + j, 3 + k), s.constant(i, j, k));
                }
            }
        }
        assert_eq!(d.isotropy_residual(), 0.0);
        assert!(d.total().jacobi_residual() < 1e-12);
        assert!(d.total().invariance_residual() < 1e-12);
    }

    #[test]
    fn cartan_bracket_with_n_is_pure_n() {
        // [(0,t), (X,0)] lands in the first factor for every X in n.
        let d = lu_weinstein_su2();
        let t = d.embed(&Vector::from_vec(vec![1.0, 0.0, 0.0]), Factor::NStar);
        for i in 0..3 {
            let x = d.embed(&Vector::from_fn(3, |k, _| if k == i { 1.0 } else { 0.0 }), Factor::N);
            let z = d.total().br(&t, &x);
            assert!(d.project(&z, Factor::NStar).unwrap().amax() < 1e-15);
        }
    }

    #[test]
    fn abelian_double_mixed_brackets_vanish() {
        let d = abelian_double(2);
        assert!(d.total().constants().iter().all(|&c| c == 0.0));
        assert_eq!(d.dim(), 4);
    }

    #[test]
    fn corrupted_double_is_rejected() {
        let mut s = su2_dual_basis();
        s.corrupt_constant(0, 1, 0, 0.5);
        s.corrupt_constant(1, 0, 0, -0.5);
        let err = DoubleLieAlgebra::build(&an2(), &s, &Matrix::identity(3, 3)).unwrap_err();
        assert!(matches!(err, LieError::NotBialgebra { .. }), "{err}");
    }

    #[test]
    fn jacobi_failure_is_reported() {
        let l = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let err = LieAlgebra::from_entries(l, &[(0, 1, 2, 1.0), (1, 2, 2, 1.0), (0, 2, 0, 1.0)], None)
            .unwrap_err();
        assert!(matches!(err, LieError::Jacobi { .. }));
    }

    #[test]
    fn non_identity_duality_is_rebased() {
        let dmat = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 1.0, -1.0]));
        let d = DoubleLieAlgebra::build(&an2(), &su2_dual_basis(), &dmat).unwrap();
        assert!(d.total().jacobi_residual() < 1e-12);
    }

    #[test]
    fn projectors_partition_identity() {
        let d = lu_weinstein_su2();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z = rvec(&mut rng, 6);
        let a = d.project(&z, Factor::N).unwrap();
        let b = d.project(&z, Factor::NStar).unwrap();
        assert_eq!(&a + &b, z);
        assert_eq!(d.project(&a, Factor::N).unwrap(), a);
        assert_eq!(d.project(&a, Factor::NStar).unwrap(), Vector::zeros(6));
    }

    #[test]
    fn json_round_trip() {
        let g = se2();
        let back = LieAlgebra::from_json(&g.to_json()).unwrap();
        assert_eq!(back, g);
        let text = r#"{"dim":3,"labels":["J","P1","P2"],"structure":[[0,1,2,1.0],[0,2,1,-1.0]]}"#;
        assert_eq!(LieAlgebra::from_json(text).unwrap(), g);
    }

    #[test]
    fn chevalley_serre_higher_rank_rejected() {
        assert!(chevalley_serre(2).is_err());
        assert!(chevalley_serre(1).is_ok());
    }
}
