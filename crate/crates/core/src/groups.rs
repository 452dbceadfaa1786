//! Matrix realizations of Lie groups: exponential, adjoint action, Iwasawa
//! factorization of SL(2,C) and the dressing actions of a double group.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::liecore::{builtin, DoubleLieAlgebra, Factor, LieAlgebra, LieError, Matrix, Vector};

pub type CMatrix = DMatrix<Complex64>;

/// Pull-back residual above which a matrix is declared outside the algebra.
pub const PULLBACK_TOL: f64 = 1e-8;
/// Factorization residual tolerance.
pub const FACTOR_TOL: f64 = 1e-10;
/// Diagonal entries below this make the Iwasawa splitting unreliable.
pub const BREAKDOWN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GroupError {
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error("matrix is not in the span of the representation (residual {0:e})")]
    Representation(f64),
    #[error("basis matrices are not linearly independent")]
    RankDeficient,
    #[error("representation does not reproduce the structure constants (defect {0:e})")]
    NotAHomomorphism(f64),
    #[error("exp of basis element {index} leaves the group (residual {residual:e})")]
    Membership { index: usize, residual: f64 },
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("matrix size mismatch: expected {expected}, got {got}")]
    Size { expected: usize, got: usize },
}

#[derive(Debug, Clone)]
pub struct GroupElement {
    m: CMatrix,
}

impl GroupElement {
    pub fn identity(size: usize) -> Self {
        GroupElement { m: CMatrix::identity(size, size) }
    }

    pub fn from_matrix(m: CMatrix) -> Self {
        GroupElement { m }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn size(&self) -> usize {
        self.m.nrows()
    }

    pub fn mul(&self, other: &GroupElement) -> GroupElement {
        GroupElement { m: &self.m * &other.m }
    }

    pub fn inverse(&self) -> GroupElement {
        GroupElement { m: self.m.clone().try_inverse().expect("group elements are invertible") }
    }

    /// Frobenius distance.
    pub fn dist(&self, other: &GroupElement) -> f64 {
        (&self.m - &other.m).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Entries as `re, im` pairs in row-major order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.m.len());
        for i in 0..self.m.nrows() {
            for j in 0..self.m.ncols() {
                out.push(self.m[(i, j)].re);
                out.push(self.m[(i, j)].im);
            }
        }
        out
    }

    /// Whether any entry has a non-negligible imaginary part.
    pub fn is_complex(&self) -> bool {
        self.m.iter().any(|z| z.im != 0.0)
    }
}

/// Which defining equations a matrix must satisfy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Membership {
    /// Only invertibility.
    General,
    /// `[[R, t], [0, 1]]` with `R^T diag(b,a) R = diag(b,a)`, `det R = 1`.
    Se2Weighted { a: f64, b: f64 },
    /// Unit determinant.
    SL2C,
    /// Upper triangular, positive real diagonal, unit determinant.
    AN,
    /// Unitary with unit determinant.
    SU2,
    /// Real unipotent translations `I + [[0, x], [0, 0]]` of size `dim + 1`.
    Translation,
}

fn fro(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn imag_norm(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.im * z.im).sum::<f64>().sqrt()
}

impl Membership {
    pub fn residual(&self, m: &CMatrix) -> f64 {
        let n = m.nrows();
        match *self {
            Membership::General => {
                if m.clone().try_inverse().is_some() {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Membership::SL2C => (m.determinant() - Complex64::new(1.0, 0.0)).norm(),
            Membership::AN => {
                let mut r = (m.determinant() - Complex64::new(1.0, 0.0)).norm();
                for i in 0..n {
                    r += m[(i, i)].im.abs() + (-m[(i, i)].re).max(0.0);
                    for j in 0..i {
                        r += m[(i, j)].norm();
                    }
                }
                r
            }
            Membership::SU2 => {
                let defect = m.adjoint() * m - CMatrix::identity(n, n);
                fro(&defect) + (m.determinant() - Complex64::new(1.0, 0.0)).norm()
            }
            Membership::Se2Weighted { a, b } => {
                let mut r = imag_norm(m);
                r += m[(2, 0)].norm() + m[(2, 1)].norm() + (m[(2, 2)] - Complex64::new(1.0, 0.0)).norm();
                let rot = Matrix::from_fn(2, 2, |i, j| m[(i, j)].re);
                let dmat = Matrix::from_diagonal(&Vector::from_vec(vec![b, a]));
                r += (rot.transpose() * &dmat * &rot - &dmat).amax();
                r += (rot.determinant() - 1.0).abs();
                r
            }
            Membership::Translation => {
                let mut r = imag_norm(m);
                for i in 0..n {
                    for j in 0..n {
                        let expect = if i == j { 1.0 } else { 0.0 };
                        if j == n - 1 && i != j {
                            continue;
                        }
                        r += (m[(i, j)].re - expect).abs();
                    }
                }
                r
            }
        }
    }
}

/// A matrix Lie group given by a faithful representation of its algebra.
#[derive(Debug, Clone)]
pub struct MatrixGroup {
    name: String,
    algebra: LieAlgebra,
    basis: Vec<CMatrix>,
    /// Pseudo-inverse of the real `2m^2 x dim` embedding matrix.
    pull: Matrix,
    membership: Membership,
}

fn realify(m: &CMatrix) -> Vector {
    let len = m.len();
    let mut v = Vector::zeros(2 * len);
    for (idx, z) in m.iter().enumerate() {
        v[idx] = z.re;
        v[len + idx] = z.im;
    }
    v
}

impl MatrixGroup {
    /// Validates rank, the bracket homomorphism and membership of `exp(e_i)`.
    pub fn new(
        name: &str,
        algebra: LieAlgebra,
        basis: Vec<CMatrix>,
        membership: Membership,
    ) -> Result<Self, GroupError> {
        let dim = algebra.dim();
        if basis.len() != dim {
            return Err(LieError::Dimension { expected: dim, got: basis.len() }.into());
        }
        let size = basis[0].nrows();
        let mut emb = Matrix::zeros(2 * size * size, dim);
        for (j, b) in basis.iter().enumerate() {
            if b.nrows() != size || b.ncols() != size {
                return Err(GroupError::Size { expected: size, got: b.nrows() });
            }
            emb.set_column(j, &realify(b));
        }
        let svd = emb.clone().svd(true, true);
        let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
        if smin < 1e-10 {
            return Err(GroupError::RankDeficient);
        }
        let pull = svd.pseudo_inverse(1e-12).map_err(|_| GroupError::RankDeficient)?;
        let group = MatrixGroup { name: name.to_string(), algebra, basis, pull, membership };
        let mut defect: f64 = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                let (a, b) = (&group.basis[i], &group.basis[j]);
                let comm = a * b - b * a;
                let ei = unit(dim, i);
                let ej = unit(dim, j);
                defect = defect.max(fro(&(group.embed(&group.algebra.br(&ei, &ej)) - comm)));
            }
        }
        if defect > 1e-12 {
            return Err(GroupError::NotAHomomorphism(defect));
        }
        for i in 0..dim {
            let residual = group.membership_residual(&group.exp(&unit(dim, i)));
            if residual > 1e-10 {
                return Err(GroupError::Membership { index: i, residual });
            }
        }
        Ok(group)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn algebra(&self) -> &LieAlgebra {
        &self.algebra
    }

    pub fn dim(&self) -> usize {
        self.algebra.dim()
    }

    pub fn matrix_size(&self) -> usize {
        self.basis[0].nrows()
    }

    pub fn basis(&self) -> &[CMatrix] {
        &self.basis
    }

    pub fn membership(&self) -> Membership {
        self.membership
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement::identity(self.matrix_size())
    }

    pub fn embed(&self, x: &Vector) -> CMatrix {
        let s = self.matrix_size();
        let mut m = CMatrix::zeros(s, s);
        for (xi, b) in x.iter().zip(&self.basis) {
            if *xi != 0.0 {
                m += b * Complex64::new(*xi, 0.0);
            }
        }
        m
    }

    /// Coordinates of a matrix in the algebra, with the pull-back residual.
    pub fn pullback_with_residual(&self, m: &CMatrix) -> (Vector, f64) {
        let x = &self.pull * realify(m);
        let residual = fro(&(self.embed(&x) - m));
        (x, residual)
    }

    pub fn pullback(&self, m: &CMatrix) -> Result<Vector, GroupError> {
        let (x, r) = self.pullback_with_residual(m);
        if r > PULLBACK_TOL * (1.0 + fro(m)) {
            Err(GroupError::Representation(r))
        } else {
            Ok(x)
        }
    }

    pub fn exp(&self, x: &Vector) -> GroupElement {
        GroupElement { m: self.embed(x).exp() }
    }

    pub fn membership_residual(&self, l: &GroupElement) -> f64 {
        self.membership.residual(&l.m)
    }

    /// `Ad_l X`, pulled back from `l X l^{-1}`.
    pub fn adjoint(&self, l: &GroupElement, x: &Vector) -> Result<Vector, GroupError> {
        let linv = l.inverse();
        self.pullback(&(&l.m * self.embed(x) * &linv.m))
    }

    /// Matrix of `Ad_l`; column `j` is `Ad_l e_j`.
    pub fn ad_matrix(&self, l: &GroupElement) -> Matrix {
        let linv = l.inverse();
        let dim = self.dim();
        let mut out = Matrix::zeros(dim, dim);
        for j in 0..dim {
            let (x, _) = self.pullback_with_residual(&(&l.m * &self.basis[j] * &linv.m));
            out.set_column(j, &x);
        }
        out
    }

    /// `Ad*_{l^{-1}} xi = (Ad_{l^{-1}})^T xi`, so that `<Ad*_{l^{-1}} xi, Y> = <xi, Ad_{l^{-1}} Y>`.
    pub fn coadjoint_inv(&self, l: &GroupElement, xi: &Vector) -> Vector {
        self.ad_matrix(&l.inverse()).transpose() * xi
    }

    /// Random element `exp(X)` with coordinates uniform in `[-scale, scale]`.
    pub fn random<R: Rng>(&self, rng: &mut R, scale: f64) -> GroupElement {
        let x = Vector::from_fn(self.dim(), |_, _| rng.random_range(-scale..scale));
        self.exp(&x)
    }
}

pub(crate) fn unit(n: usize, i: usize) -> Vector {
    let mut v = Vector::zeros(n);
    v[i] = 1.0;
    v
}

pub(crate) fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn cmat2(a: Complex64, b: Complex64, cc: Complex64, d: Complex64) -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[a, b, cc, d])
}

/// Matrix basis of sl(2,C) matching `builtin::lu_weinstein_su2`:
/// `H, E, iE, t = diag(i,-i)/2, u = [[0,i],[i,0]], v = [[0,-1],[1,0]]`.
pub fn sl2c_basis() -> Vec<CMatrix> {
    let z = c(0.0, 0.0);
    vec![
        cmat2(c(1.0, 0.0), z, z, c(-1.0, 0.0)),
        cmat2(z, c(1.0, 0.0), z, z),
        cmat2(z, c(0.0, 1.0), z, z),
        cmat2(c(0.0, 0.5), z, z, c(0.0, -0.5)),
        cmat2(z, c(0.0, 1.0), c(0.0, 1.0), z),
        cmat2(z, c(-1.0, 0.0), c(1.0, 0.0), z),
    ]
}

fn real3(rows: [[f64; 3]; 3]) -> CMatrix {
    CMatrix::from_fn(3, 3, |i, j| c(rows[i][j], 0.0))
}

/// SE(2) with basis `J, P1, P2` acting on homogeneous coordinates.
pub fn se2_group() -> MatrixGroup {
    let basis = vec![
        real3([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
        real3([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
        real3([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]]),
    ];
    MatrixGroup::new("se2", builtin::se2(), basis, Membership::Se2Weighted { a: 1.0, b: 1.0 })
        .expect("SE(2) representation is valid")
}

/// Weighted SE(2) for `builtin::se2_weighted(a, b)`.
pub fn se2_weighted_group(a: f64, b: f64) -> MatrixGroup {
    let basis = vec![
        real3([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
        real3([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]]),
        real3([[0.0, -a, 0.0], [b, 0.0, 0.0], [0.0, 0.0, 0.0]]),
    ];
    MatrixGroup::new("se2_weighted", builtin::se2_weighted(a, b), basis, Membership::Se2Weighted { a, b })
        .expect("weighted SE(2) representation is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    /// `l = g h~` with `g` in N.
    NFirst,
    /// `l = h~' g'` with `h~'` in N*.
    NStarFirst,
}

#[derive(Debug, Clone)]
pub struct Factorization {
    pub g: GroupElement,
    pub htilde: GroupElement,
    pub order: Order,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DoubleKind {
    /// SL(2,C) = AN(2) SU(2).
    LuWeinstein,
    /// Abelian translations in dimension `2n`.
    Abelian,
}

/// A double group `H = N N*` with its algebra and factor memberships.
#[derive(Debug, Clone)]
pub struct DoubleGroup {
    alg: DoubleLieAlgebra,
    h: MatrixGroup,
    kind: DoubleKind,
}

/// Modified Gram-Schmidt `A = Q R` with `R` upper triangular and positive diagonal.
fn mgs_qr(a: &CMatrix) -> Result<(CMatrix, CMatrix), GroupError> {
    let n = a.nrows();
    let mut q = a.clone();
    let mut r = CMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..j {
            let qi = q.column(i).clone_owned();
            let proj = qi.dotc(&q.column(j));
            r[(i, j)] = proj;
            let updated = q.column(j) - qi * proj;
            q.set_column(j, &updated);
        }
        let norm = q.column(j).norm();
        if norm < BREAKDOWN_TOL {
            return Err(GroupError::Factorization(format!(
                "diagonal entry {norm:e} below breakdown threshold"
            )));
        }
        r[(j, j)] = c(norm, 0.0);
        let scaled = q.column(j) / c(norm, 0.0);
        q.set_column(j, &scaled);
    }
    Ok((q, r))
}

impl DoubleGroup {
    pub fn lu_weinstein() -> Self {
        let alg = builtin::lu_weinstein_su2();
        let h = MatrixGroup::new("lu_weinstein_su2", alg.total().clone(), sl2c_basis(), Membership::SL2C)
            .expect("sl(2,C) representation is valid");
        DoubleGroup { alg, h, kind: DoubleKind::LuWeinstein }
    }

    pub fn abelian(n: usize) -> Self {
        let alg = builtin::abelian_double(n);
        let d = 2 * n;
        let basis = (0..d)
            .map(|i| {
                let mut m = CMatrix::zeros(d + 1, d + 1);
                m[(i, d)] = c(1.0, 0.0);
                m
            })
            .collect();
        let h = MatrixGroup::new("abelian_double", alg.total().clone(), basis, Membership::Translation)
            .expect("translation representation is valid");
        DoubleGroup { alg, h, kind: DoubleKind::Abelian }
    }

    pub fn algebra(&self) -> &DoubleLieAlgebra {
        &self.alg
    }

    pub fn group(&self) -> &MatrixGroup {
        &self.h
    }

    pub fn kind(&self) -> DoubleKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.alg.n()
    }

    pub fn identity(&self) -> GroupElement {
        self.h.identity()
    }

    /// Residual of membership in a factor subgroup.
    pub fn factor_residual(&self, l: &GroupElement, which: Factor) -> f64 {
        match self.kind {
            DoubleKind::LuWeinstein => match which {
                Factor::N => Membership::AN.residual(&l.m),
                Factor::NStar => Membership::SU2.residual(&l.m),
            },
            DoubleKind::Abelian => {
                let d = self.alg.dim();
                let mut r = Membership::Translation.residual(&l.m);
                for i in self.alg.factor_range(match which {
                    Factor::N => Factor::NStar,
                    Factor::NStar => Factor::N,
                }) {
                    r += l.m[(i, d)].norm();
                }
                r
            }
        }
    }

    pub fn exp_factor(&self, v: &Vector, which: Factor) -> GroupElement {
        self.h.exp(&self.alg.embed(v, which))
    }

    pub fn random_factor<R: Rng>(&self, rng: &mut R, which: Factor, scale: f64) -> GroupElement {
        let v = Vector::from_fn(self.n(), |_, _| rng.random_range(-scale..scale));
        self.exp_factor(&v, which)
    }

    /// Splits `l` as `g h~` (N first) or `h~ g` (N* first).
    pub fn factorize(&self, l: &GroupElement, order: Order) -> Result<Factorization, GroupError> {
        let (g, htilde) = match self.kind {
            DoubleKind::LuWeinstein => {
                if l.size() != 2 {
                    return Err(GroupError::Size { expected: 2, got: l.size() });
                }
                match order {
                    Order::NStarFirst => {
                        let (q, r) = mgs_qr(&l.m)?;
                        (GroupElement::from_matrix(r), GroupElement::from_matrix(q))
                    }
                    Order::NFirst => {
                        let (q, r) = mgs_qr(&l.inverse().m)?;
                        let rinv = r
                            .try_inverse()
                            .ok_or_else(|| GroupError::Factorization("singular triangular factor".into()))?;
                        (GroupElement::from_matrix(rinv), GroupElement::from_matrix(q.adjoint()))
                    }
                }
            }
            DoubleKind::Abelian => {
                let d = self.alg.dim();
                let x = Vector::from_fn(d, |i, _| l.m[(i, d)].re);
                let g = self.h.exp(&self.alg.project(&x, Factor::N)?);
                let h = self.h.exp(&self.alg.project(&x, Factor::NStar)?);
                (g, h)
            }
        };
        let product = match order {
            Order::NFirst => g.mul(&htilde),
            Order::NStarFirst => htilde.mul(&g),
        };
        let residual = product.dist(l);
        if !(residual < FACTOR_TOL * (1.0 + fro(&l.m))) {
            return Err(GroupError::Factorization(format!("residual {residual:e} above tolerance")));
        }
        Ok(Factorization { g, htilde, order, residual })
    }

    /// `Dr(h~, g) = Pi_N(h~ g) = g^{h~}`.
    pub fn dress(&self, htilde: &GroupElement, g: &GroupElement) -> Result<GroupElement, GroupError> {
        Ok(self.factorize(&htilde.mul(g), Order::NFirst)?.g)
    }

    /// Body-frame generator `-Pi_n Ad_{g^{-1}} xi` of the dressing action for
    /// `xi` in `n*` (given in `h` coordinates). This is the velocity of
    /// `t -> g^{-1} Dr(exp(-t xi), g)` at `t = 0`.
    pub fn dressing_generator(&self, xi: &Vector, g: &GroupElement) -> Result<Vector, GroupError> {
        let ad = self.h.adjoint(&g.inverse(), xi)?;
        Ok(-self.alg.project(&ad, Factor::N)?)
    }
}

/// Named registry entries.
#[derive(Debug, Clone)]
pub enum Builtin {
    Group(MatrixGroup),
    Double(DoubleGroup),
}

pub fn builtin_by_name(name: &str) -> Result<Builtin, LieError> {
    match name {
        "se2" => Ok(Builtin::Group(se2_group())),
        "lu_weinstein_su2" => Ok(Builtin::Double(DoubleGroup::lu_weinstein())),
        "abelian_double" => Ok(Builtin::Double(DoubleGroup::abelian(2))),
        other => Err(LieError::UnknownBuiltin(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn rvec(r: &mut ChaCha8Rng, n: usize, s: f64) -> Vector {
        Vector::from_fn(n, |_, _| r.random_range(-s..s))
    }

    #[test]
    fn sl2c_commutators_reproduce_structure_constants() {
        // Independent oracle: raw 2x2 complex commutators against the built-in table.
        let alg = builtin::lu_weinstein_su2();
        let basis = sl2c_basis();
        let g = DoubleGroup::lu_weinstein();
        for i in 0..6 {
            for j in 0..6 {
                let comm = &basis[i] * &basis[j] - &basis[j] * &basis[i];
                let (x, res) = g.group().pullback_with_residual(&comm);
                assert!(res < 1e-14);
                for k in 0..6 {
                    assert!((x[k] - alg.total().constant(i, j, k)).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn im_trace_pairing_is_the_block_identity() {
        let b = sl2c_basis();
        let d = builtin::lu_weinstein_su2();
        for i in 0..6 {
            for j in 0..6 {
                let v = (&b[i] * &b[j]).trace().im;
                assert!((v - d.psi()[(i, j)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn exp_of_zero_and_inverse() {
        let g = DoubleGroup::lu_weinstein();
        let h = g.group();
        assert!(h.exp(&Vector::zeros(6)).dist(&h.identity()) < 1e-15);
        let mut r = rng(1);
        let x = rvec(&mut r, 6, 1.0);
        let p = h.exp(&x).mul(&h.exp(&-&x));
        assert!(p.dist(&h.identity()) < 1e-12);
    }

    #[test]
    fn exp_su2_matches_closed_form() {
        // exp(theta v) with v = [[0,-1],[1,0]] is a plane rotation.
        let g = DoubleGroup::lu_weinstein();
        let theta = 0.7;
        let m = g.exp_factor(&Vector::from_vec(vec![0.0, 0.0, theta]), Factor::NStar);
        let (cs, sn) = (theta.cos(), theta.sin());
        let oracle = cmat2(c(cs, 0.0), c(-sn, 0.0), c(sn, 0.0), c(cs, 0.0));
        assert!(fro(&(m.matrix() - oracle)) < 1e-14);
        // exp(theta t) = diag(e^{i theta/2}, e^{-i theta/2}).
        let m = g.exp_factor(&Vector::from_vec(vec![theta, 0.0, 0.0]), Factor::NStar);
        let oracle = cmat2(c(0.0, theta / 2.0).exp(), c(0.0, 0.0), c(0.0, 0.0), c(0.0, -theta / 2.0).exp());
        assert!(fro(&(m.matrix() - oracle)) < 1e-14);
    }

    #[test]
    fn exp_one_parameter_property() {
        let g = DoubleGroup::lu_weinstein();
        let h = g.group();
        let mut r = rng(2);
        let x = rvec(&mut r, 6, 1.0);
        let (s, t) = (0.3, 0.45);
        let lhs = h.exp(&(&x * (s + t)));
        let rhs = h.exp(&(&x * s)).mul(&h.exp(&(&x * t)));
        assert!(lhs.dist(&rhs) < 1e-10);
    }

    #[test]
    fn adjoint_is_automorphism_and_isometry() {
        let g = DoubleGroup::lu_weinstein();
        let (h, d) = (g.group(), g.algebra());
        let mut r = rng(3);
        for _ in 0..20 {
            let l = h.random(&mut r, 0.8);
            let (x, y) = (rvec(&mut r, 6, 1.0), rvec(&mut r, 6, 1.0));
            let adx = h.adjoint(&l, &x).unwrap();
            let ady = h.adjoint(&l, &y).unwrap();
            let lhs = h.adjoint(&l, &d.total().br(&x, &y)).unwrap();
            assert!((lhs - d.total().br(&adx, &ady)).amax() < 1e-10);
            assert!((d.pair(&adx, &ady) - d.pair(&x, &y)).abs() < 1e-10);
        }
        let x = rvec(&mut r, 6, 1.0);
        assert!((h.adjoint(&h.identity(), &x).unwrap() - &x).amax() < 1e-15);
    }

    #[test]
    fn se2_group_adjoint_and_membership() {
        let h = se2_weighted_group(2.0 / 3.0, 0.5);
        let mut r = rng(4);
        let l = h.random(&mut r, 1.0);
        assert!(h.membership_residual(&l) < 1e-12);
        let x = rvec(&mut r, 3, 1.0);
        let y = rvec(&mut r, 3, 1.0);
        let lhs = h.adjoint(&l, &h.algebra().br(&x, &y)).unwrap();
        let rhs = h.algebra().br(&h.adjoint(&l, &x).unwrap(), &h.adjoint(&l, &y).unwrap());
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn pullback_rejects_matrices_outside_the_algebra() {
        let h = se2_group();
        let mut m = CMatrix::zeros(3, 3);
        m[(2, 0)] = c(1.0, 0.0);
        assert!(matches!(h.pullback(&m), Err(GroupError::Representation(_))));
    }

    #[test]
    fn factorize_identity() {
        let g = DoubleGroup::lu_weinstein();
        for order in [Order::NFirst, Order::NStarFirst] {
            let f = g.factorize(&g.identity(), order).unwrap();
            assert!(f.g.dist(&g.identity()) < 1e-15);
            assert!(f.htilde.dist(&g.identity()) < 1e-15);
        }
    }

    #[test]
    fn factorize_round_trip_both_orders() {
        let g = DoubleGroup::lu_weinstein();
        let mut r = rng(5);
        for _ in 0..100 {
            let a = g.random_factor(&mut r, Factor::N, 1.0);
            let k = g.random_factor(&mut r, Factor::NStar, 2.0);
            let f = g.factorize(&a.mul(&k), Order::NFirst).unwrap();
            assert!(f.g.dist(&a) < 1e-10 && f.htilde.dist(&k) < 1e-10);
            let f = g.factorize(&k.mul(&a), Order::NStarFirst).unwrap();
            assert!(f.g.dist(&a) < 1e-10 && f.htilde.dist(&k) < 1e-10);
            assert!(g.factor_residual(&f.g, Factor::N) < 1e-10);
            assert!(g.factor_residual(&f.htilde, Factor::NStar) < 1e-10);
        }
    }

    #[test]
    fn factorization_breakdown_is_an_error() {
        let g = DoubleGroup::lu_weinstein();
        let singular = GroupElement::from_matrix(cmat2(c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)));
        assert!(g.factorize(&singular, Order::NStarFirst).is_err());
    }

    #[test]
    fn abelian_factorization() {
        let g = DoubleGroup::abelian(2);
        let mut r = rng(6);
        let l = g.group().random(&mut r, 1.0);
        let f = g.factorize(&l, Order::NFirst).unwrap();
        assert!(f.residual < 1e-14);
        assert!(g.factor_residual(&f.g, Factor::N) < 1e-14);
    }

    #[test]
    fn dressing_trivial_cases() {
        let g = DoubleGroup::lu_weinstein();
        let mut r = rng(7);
        let a = g.random_factor(&mut r, Factor::N, 1.0);
        assert!(g.dress(&g.identity(), &a).unwrap().dist(&a) < 1e-12);
        // Torus elements of the first factor are fixed by the dressing of the second factor's torus.
        let btor = g.exp_factor(&Vector::from_vec(vec![0.4, 0.0, 0.0]), Factor::N);
        let htor = g.exp_factor(&Vector::from_vec(vec![1.3, 0.0, 0.0]), Factor::NStar);
        assert!(g.dress(&htor, &btor).unwrap().dist(&btor) < 1e-12);
    }

    #[test]
    fn dressing_action_law() {
        let g = DoubleGroup::lu_weinstein();
        let mut r = rng(8);
        for _ in 0..30 {
            let a = g.random_factor(&mut r, Factor::N, 1.0);
            let h1 = g.random_factor(&mut r, Factor::NStar, 2.0);
            let h2 = g.random_factor(&mut r, Factor::NStar, 2.0);
            let lhs = g.dress(&h1.mul(&h2), &a).unwrap();
            let rhs = g.dress(&h1, &g.dress(&h2, &a).unwrap()).unwrap();
            assert!(lhs.dist(&rhs) < 1e-9);
        }
    }

    #[test]
    fn dressing_generator_matches_finite_difference() {
        let g = DoubleGroup::lu_weinstein();
        let mut r = rng(9);
        let d = g.algebra();
        for _ in 0..10 {
            let a = g.random_factor(&mut r, Factor::N, 1.0);
            let xi = d.embed(&rvec(&mut r, 3, 1.0), Factor::NStar);
            let gen = g.dressing_generator(&xi, &a).unwrap();
            let eps = 1e-5;
            let plus = g.dress(&g.group().exp(&(&xi * -eps)), &a).unwrap();
            let minus = g.dress(&g.group().exp(&(&xi * eps)), &a).unwrap();
            let diff = (plus.matrix() - minus.matrix()) / c(2.0 * eps, 0.0);
            let body = g.group().pullback(&(a.inverse().matrix() * diff)).unwrap();
            assert!((body - gen).amax() < 1e-6);
        }
        assert!(g.dressing_generator(&d.embed(&rvec(&mut r, 3, 1.0), Factor::NStar), &g.identity())
            .unwrap()
            .amax()
            < 1e-15);
        let ab = DoubleGroup::abelian(2);
        let xi = ab.algebra().embed(&rvec(&mut r, 2, 1.0), Factor::NStar);
        let a = ab.random_factor(&mut r, Factor::N, 1.0);
        assert!(ab.dressing_generator(&xi, &a).unwrap().amax() < 1e-15);
    }

    #[test]
    fn dressing_generator_is_a_homomorphism() {
        // Vector-field commutator of body generators, by central differences in g.
        let g = DoubleGroup::lu_weinstein();
        let (h, d) = (g.group(), g.algebra());
        let mut r = rng(10);
        let a = g.random_factor(&mut r, Factor::N, 0.7);
        let xi = d.embed(&rvec(&mut r, 3, 1.0), Factor::NStar);
        let eta = d.embed(&rvec(&mut r, 3, 1.0), Factor::NStar);
        // Spatial vector fields V(g) = g * dr(.)_g as matrices.
        let field = |z: &Vector, p: &GroupElement| -> CMatrix {
            p.matrix() * h.embed(&g.dressing_generator(z, p).unwrap())
        };
        let deriv = |z: &Vector, p: &GroupElement, dir: &CMatrix| -> CMatrix {
            let eps = 1e-5;
            let plus = GroupElement::from_matrix(p.matrix() + dir * c(eps, 0.0));
            let minus = GroupElement::from_matrix(p.matrix() - dir * c(eps, 0.0));
            (field(z, &plus) - field(z, &minus)) / c(2.0 * eps, 0.0)
        };
        let vx = field(&xi, &a);
        let ve = field(&eta, &a);
        let comm = deriv(&eta, &a, &vx) - deriv(&xi, &a, &ve);
        let expect = field(&d.total().br(&xi, &eta), &a);
        assert!(fro(&(comm - expect)) < 1e-8, "commutator mismatch");
    }

    #[test]
    fn registry_names() {
        assert!(matches!(builtin_by_name("se2").unwrap(), Builtin::Group(_)));
        assert!(matches!(builtin_by_name("lu_weinstein_su2").unwrap(), Builtin::Double(_)));
        assert!(matches!(builtin_by_name("abelian_double").unwrap(), Builtin::Double(_)));
        assert!(builtin_by_name("nope").is_err());
    }
}
