//! Bases, transition matrices and the per-kind transformation laws for
//! vectors, covectors, operators and bilinear forms.
//!
//! Every basis is stored by the coordinates of its vectors in one shared
//! ambient orthonormal reference, so any two bases can be compared.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::scalar::Real;
use crate::tensor::{DenseTensor, Direction, TransitionPair, Valency};

/// Non-coplanar ordered set of vectors; column `j` holds `e_j` in ambient coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Basis<R> {
    columns: Matrix<R>,
}

impl<R: Real> Basis<R> {
    pub fn new(columns: Matrix<R>) -> Result<Self> {
        if columns.is_singular() {
            return Err(Error::DegenerateTransition(format!(
                "basis vectors are linearly dependent (det = {})",
                columns.det()
            )));
        }
        Ok(Self { columns })
    }

    /// Basis from its vectors given in ambient coordinates.
    pub fn from_vectors<V: AsRef<[R]>>(vectors: &[V]) -> Result<Self> {
        Self::new(Matrix::from_columns(vectors)?)
    }

    /// The ambient orthonormal reference basis.
    pub fn standard(dim: usize) -> Self {
        Self { columns: Matrix::identity(dim) }
    }

    pub fn dim(&self) -> usize {
        self.columns.dim()
    }

    pub fn columns(&self) -> &Matrix<R> {
        &self.columns
    }

    /// The `j`-th basis vector (1-based) in ambient coordinates.
    pub fn vector(&self, j: usize) -> Result<Vec<R>> {
        if j == 0 || j > self.dim() {
            return Err(Error::index(format!("basis vector {j} is outside 1..={}", self.dim())));
        }
        Ok(self.columns.column(j - 1))
    }

    /// Determinant of the column matrix; positive for right-handed bases.
    pub fn orientation(&self) -> R {
        self.columns.det()
    }
}

/// Basis plus an origin given in ambient coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct CartesianSystem<R> {
    pub basis: Basis<R>,
    pub origin: Vec<R>,
}

impl<R: Real> CartesianSystem<R> {
    pub fn new(basis: Basis<R>, origin: Vec<R>) -> Result<Self> {
        if origin.len() != basis.dim() {
            return Err(Error::shape(format!(
                "origin has {} coordinates, basis has dimension {}",
                origin.len(),
                basis.dim()
            )));
        }
        Ok(Self { basis, origin })
    }

    pub fn standard(dim: usize) -> Self {
        Self { basis: Basis::standard(dim), origin: vec![R::zero(); dim] }
    }

    /// Coordinates of an ambient point in this system.
    pub fn coordinates_of(&self, ambient: &[R]) -> Result<Vec<R>> {
        let shifted: Vec<R> = ambient.iter().zip(&self.origin).map(|(&p, &o)| p - o).collect();
        Ok(self.basis.columns().inverse()?.mul_vec(&shifted))
    }

    /// Ambient position of a point with coordinates `x` in this system.
    pub fn ambient_point(&self, x: &[R]) -> Vec<R> {
        let v = self.basis.columns().mul_vec(x);
        v.iter().zip(&self.origin).map(|(&a, &o)| a + o).collect()
    }
}

/// Serialized form `{ "columns": [[..], ..], "origin": [..] }`. The first index of
/// `columns` is the row, so basis vector `j` is the `j`-th column.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemSpec {
    pub columns: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Vec<f64>>,
}

impl SystemSpec {
    pub fn to_basis<R: Real>(&self) -> Result<Basis<R>> {
        let rows: Vec<Vec<R>> =
            self.columns.iter().map(|row| row.iter().map(|&x| R::lit(x)).collect()).collect();
        Basis::new(Matrix::from_rows(&rows)?)
    }

    pub fn to_system<R: Real>(&self) -> Result<CartesianSystem<R>> {
        let basis = self.to_basis()?;
        let origin = match &self.origin {
            Some(o) => o.iter().map(|&x| R::lit(x)).collect(),
            None => vec![R::zero(); basis.dim()],
        };
        CartesianSystem::new(basis, origin)
    }

    pub fn from_system<R: Real>(system: &CartesianSystem<R>) -> Self {
        let columns = system.basis.columns();
        Self {
            columns: (0..columns.dim())
                .map(|i| columns.row(i).iter().map(|x| x.to_f64_lossy()).collect())
                .collect(),
            origin: Some(system.origin.iter().map(|x| x.to_f64_lossy()).collect()),
        }
    }
}

/// Transition pair from `old` to `new`: `S = old⁻¹ · new`, `T = S⁻¹`.
pub fn transition_between<R: Real>(old: &Basis<R>, new: &Basis<R>) -> Result<TransitionPair<R>> {
    if old.dim() != new.dim() {
        return Err(Error::shape("bases have different dimensions"));
    }
    if old == new {
        return Ok(TransitionPair::identity(old.dim()));
    }
    let s = &old.columns().inverse()? * new.columns();
    let t = &new.columns().inverse()? * old.columns();
    TransitionPair::new(s, t)
}

/// `S₁₃ = S₁₂ S₂₃`, `T₁₃ = T₂₃ T₁₂`.
pub fn compose_transitions<R: Real>(
    first: &TransitionPair<R>,
    second: &TransitionPair<R>,
) -> Result<TransitionPair<R>> {
    first.compose(second)
}

fn expect_valency<R: Real>(t: &DenseTensor<R>, valency: Valency, kind: &str) -> Result<()> {
    if t.valency() != valency {
        return Err(Error::shape(format!("expected a {kind} {valency}, got {}", t.valency())));
    }
    Ok(())
}

fn expect_dim<R: Real>(t: &DenseTensor<R>, pair: &TransitionPair<R>) -> Result<()> {
    if t.dim() != pair.dim() {
        return Err(Error::shape(format!(
            "dimension {} object with a dimension {} transition",
            t.dim(),
            pair.dim()
        )));
    }
    Ok(())
}

/// `x̃ = T x` (old → new), `x = S x̃` (new → old).
pub fn transform_vector<R: Real>(
    x: &DenseTensor<R>,
    pair: &TransitionPair<R>,
    direction: Direction,
) -> Result<DenseTensor<R>> {
    expect_valency(x, Valency::VECTOR, "vector")?;
    expect_dim(x, pair)?;
    let m = match direction {
        Direction::OldToNew => pair.inverse_matrix(),
        Direction::NewToOld => pair.direct(),
    };
    Ok(DenseTensor::vector(&m.mul_vec(x.components())))
}

/// `ã = Sᵀ a` (old → new), `a = Tᵀ ã` (new → old).
pub fn transform_covector<R: Real>(
    a: &DenseTensor<R>,
    pair: &TransitionPair<R>,
    direction: Direction,
) -> Result<DenseTensor<R>> {
    expect_valency(a, Valency::COVECTOR, "covector")?;
    expect_dim(a, pair)?;
    let m = match direction {
        Direction::OldToNew => pair.direct(),
        Direction::NewToOld => pair.inverse_matrix(),
    };
    Ok(DenseTensor::covector(&m.transpose().mul_vec(a.components())))
}

/// `F̃ = T F S` (old → new), `F = S F̃ T` (new → old).
pub fn transform_operator<R: Real>(
    f: &DenseTensor<R>,
    pair: &TransitionPair<R>,
    direction: Direction,
) -> Result<DenseTensor<R>> {
    expect_valency(f, Valency::OPERATOR, "operator")?;
    expect_dim(f, pair)?;
    let (left, right) = match direction {
        Direction::OldToNew => (pair.inverse_matrix(), pair.direct()),
        Direction::NewToOld => (pair.direct(), pair.inverse_matrix()),
    };
    let m = f.as_matrix()?;
    Ok(DenseTensor::operator(&(&(left * &m) * right)))
}

/// `ã = Sᵀ a S` (old → new), `a = Tᵀ ã T` (new → old).
pub fn transform_bilinear<R: Real>(
    a: &DenseTensor<R>,
    pair: &TransitionPair<R>,
    direction: Direction,
) -> Result<DenseTensor<R>> {
    expect_valency(a, Valency::BILINEAR, "bilinear form")?;
    expect_dim(a, pair)?;
    let m = match direction {
        Direction::OldToNew => pair.direct(),
        Direction::NewToOld => pair.inverse_matrix(),
    };
    let a = a.as_matrix()?;
    Ok(DenseTensor::bilinear(&(&(&m.transpose() * &a) * m)))
}

/// `⟨a, x⟩ = Σ aᵢ xⁱ`.
pub fn pair_covector_vector<R: Real>(a: &DenseTensor<R>, x: &DenseTensor<R>) -> Result<R> {
    expect_valency(a, Valency::COVECTOR, "covector")?;
    expect_valency(x, Valency::VECTOR, "vector")?;
    if a.dim() != x.dim() {
        return Err(Error::shape("covector and vector have different dimensions"));
    }
    Ok(linalg::dot(a.components(), x.components()))
}

/// `yⁱ = Σ Fⁱⱼ xʲ`.
pub fn apply_operator<R: Real>(f: &DenseTensor<R>, x: &DenseTensor<R>) -> Result<DenseTensor<R>> {
    expect_valency(f, Valency::OPERATOR, "operator")?;
    expect_valency(x, Valency::VECTOR, "vector")?;
    if f.dim() != x.dim() {
        return Err(Error::shape("operator and vector have different dimensions"));
    }
    Ok(DenseTensor::vector(&f.as_matrix()?.mul_vec(x.components())))
}

/// Matrix of `F ∘ H` is the product `F·H`.
pub fn compose_operators<R: Real>(f: &DenseTensor<R>, h: &DenseTensor<R>) -> Result<DenseTensor<R>> {
    expect_valency(f, Valency::OPERATOR, "operator")?;
    expect_valency(h, Valency::OPERATOR, "operator")?;
    if f.dim() != h.dim() {
        return Err(Error::shape("operators have different dimensions"));
    }
    Ok(DenseTensor::operator(&(&f.as_matrix()? * &h.as_matrix()?)))
}

/// Operator whose matrix is the inverse of `f`'s.
pub fn inverse_operator<R: Real>(f: &DenseTensor<R>) -> Result<DenseTensor<R>> {
    expect_valency(f, Valency::OPERATOR, "operator")?;
    Ok(DenseTensor::operator(&f.as_matrix()?.inverse()?))
}

/// Twice-covariant tensor `a_ij` viewed as a function of two vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct BilinearForm<R> {
    matrix: Matrix<R>,
}

impl<R: Real> BilinearForm<R> {
    pub fn new(matrix: Matrix<R>) -> Result<Self> {
        if !matrix.is_finite() {
            return Err(Error::shape("bilinear form entries must be finite"));
        }
        Ok(Self { matrix })
    }

    pub fn from_tensor(t: &DenseTensor<R>) -> Result<Self> {
        expect_valency(t, Valency::BILINEAR, "bilinear form")?;
        Self::new(t.as_matrix()?)
    }

    pub fn matrix(&self) -> &Matrix<R> {
        &self.matrix
    }

    pub fn to_tensor(&self) -> DenseTensor<R> {
        DenseTensor::bilinear(&self.matrix)
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// `a(x, y) = Σᵢⱼ a_ij xⁱ yʲ`.
    pub fn evaluate(&self, x: &[R], y: &[R]) -> Result<R> {
        if x.len() != self.dim() || y.len() != self.dim() {
            return Err(Error::shape("vector length differs from the form's dimension"));
        }
        Ok(linalg::dot(x, &self.matrix.mul_vec(y)))
    }

    /// `(a + aᵀ) / 2`.
    pub fn symmetrize(&self) -> Self {
        let half = R::lit(0.5);
        Self { matrix: self.matrix.add(&self.matrix.transpose()).scale(half) }
    }

    /// Quadratic form `a(x, x)`.
    pub fn quadratic(&self, x: &[R]) -> Result<R> {
        self.evaluate(x, x)
    }

    /// Symmetric form recovered from a quadratic form through
    /// `a(x, y) = (f(x + y) − f(x) − f(y)) / 2` on basis vectors.
    pub fn recover(dim: usize, f: impl Fn(&[R]) -> R) -> Result<Self> {
        let unit = |i: usize| {
            let mut v = vec![R::zero(); dim];
            v[i] = R::one();
            v
        };
        let diag: Vec<R> = (0..dim).map(|i| f(&unit(i))).collect();
        let half = R::lit(0.5);
        let matrix = Matrix::from_fn(dim, |i, j| {
            if i == j {
                diag[i]
            } else {
                let mut sum = unit(i);
                sum[j] = R::one();
                (f(&sum) - diag[i] - diag[j]) * half
            }
        });
        Self::new(matrix)
    }
}

/// `a(x, y)` for a form given as a `(0, 2)` tensor.
pub fn evaluate_bilinear<R: Real>(
    a: &DenseTensor<R>,
    x: &DenseTensor<R>,
    y: &DenseTensor<R>,
) -> Result<R> {
    expect_valency(x, Valency::VECTOR, "vector")?;
    expect_valency(y, Valency::VECTOR, "vector")?;
    BilinearForm::from_tensor(a)?.evaluate(x.components(), y.components())
}

/// Coordinates of a point in `new` given its coordinates in `old`:
/// `x̃ = ã + T x` with `ã = −T a`, where `a` is the old-basis expansion of the
/// origin shift `O Õ`.
pub fn change_point_coordinates<R: Real>(
    point: &[R],
    old: &CartesianSystem<R>,
    new: &CartesianSystem<R>,
    pair: &TransitionPair<R>,
) -> Result<Vec<R>> {
    let dim = old.basis.dim();
    if point.len() != dim || new.basis.dim() != dim || pair.dim() != dim {
        return Err(Error::shape("point, systems and transition must share one dimension"));
    }
    let shift = origin_shift(old, new)?;
    let t = pair.inverse_matrix();
    let shift_new: Vec<R> = t.mul_vec(&shift).into_iter().map(|v| -v).collect();
    Ok(t.mul_vec(point).iter().zip(&shift_new).map(|(&a, &b)| a + b).collect())
}

/// `aⁱ`: the origin shift from `old` to `new` expanded in the old basis.
pub fn origin_shift<R: Real>(old: &CartesianSystem<R>, new: &CartesianSystem<R>) -> Result<Vec<R>> {
    let delta: Vec<R> = new.origin.iter().zip(&old.origin).map(|(&n, &o)| n - o).collect();
    Ok(old.basis.columns().inverse()?.mul_vec(&delta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: [[f64; 3]; 3]) -> Matrix<f64> {
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn same_basis_gives_identity_pair() {
        let b = Basis::new(m([[1.0, 1.0, 0.0], [0.0, 2.0, 0.0], [0.5, 0.0, 3.0]])).unwrap();
        let pair = transition_between(&b, &b).unwrap();
        assert_eq!(pair, TransitionPair::identity(3));
    }

    #[test]
    fn permuted_basis_columns() {
        let old = Basis::<f64>::standard(3);
        let e = |i: usize| old.vector(i).unwrap();
        let new = Basis::from_vectors(&[e(3), e(1), e(2)]).unwrap();
        let pair = transition_between(&old, &new).unwrap();
        assert_eq!(pair.direct(), &m([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]));
    }

    #[test]
    fn coplanar_triple_is_degenerate() {
        let r = Basis::<f64>::from_vectors(&[[1.0, -1.0, 0.0], [0.0, 1.0, -1.0], [-1.0, 0.0, 1.0]]);
        assert!(matches!(r, Err(Error::DegenerateTransition(_))));
    }

    #[test]
    fn pairing_and_bilinear_values() {
        let a = DenseTensor::covector(&[1.0, 2.0, 3.0]);
        let x = DenseTensor::vector(&[4.0, 5.0, 6.0]);
        assert_eq!(pair_covector_vector(&a, &x).unwrap(), 32.0);
        assert_eq!(pair_covector_vector(&DenseTensor::covector(&[0.0; 3]), &x).unwrap(), 0.0);

        let id = DenseTensor::bilinear(&Matrix::identity(3));
        let y = DenseTensor::vector(&[1.0, 1.0, 1.0]);
        assert_eq!(evaluate_bilinear(&id, &DenseTensor::vector(&[1.0, 2.0, 3.0]), &y).unwrap(), 6.0);
        let zero = DenseTensor::bilinear(&Matrix::zeros(3));
        assert_eq!(evaluate_bilinear(&zero, &x, &y).unwrap(), 0.0);
    }

    #[test]
    fn operator_application() {
        let f = DenseTensor::operator(&Matrix::diagonal(&[1.0, 2.0, 3.0]));
        let y = apply_operator(&f, &DenseTensor::vector(&[1.0, 1.0, 1.0])).unwrap();
        assert_eq!(y.components(), &[1.0, 2.0, 3.0]);
        let id = DenseTensor::operator(&Matrix::identity(3));
        let x = DenseTensor::vector(&[0.3, -1.0, 2.0]);
        assert_eq!(apply_operator(&id, &x).unwrap(), x);
        let g = DenseTensor::operator(&m([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 10.0]]));
        let e2 = DenseTensor::vector(&[0.0, 1.0, 0.0]);
        assert_eq!(apply_operator(&g, &e2).unwrap().components(), &[2.0, 5.0, 8.0]);
    }

    #[test]
    fn composite_operator() {
        let f = DenseTensor::operator(&Matrix::diagonal(&[1.0, 2.0, 3.0]));
        let h = DenseTensor::operator(&m([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]));
        let fh = compose_operators(&f, &h).unwrap();
        assert_eq!(fh.as_matrix().unwrap(), m([[0.0, 1.0, 0.0], [0.0, 0.0, 2.0], [3.0, 0.0, 0.0]]));
        let x = DenseTensor::vector(&[1.0, -2.0, 0.5]);
        let direct = apply_operator(&fh, &x).unwrap();
        let chained = apply_operator(&f, &apply_operator(&h, &x).unwrap()).unwrap();
        assert!(direct.max_abs_diff(&chained).unwrap() <= 1e-12);
        let id = DenseTensor::operator(&Matrix::identity(3));
        assert_eq!(compose_operators(&f, &id).unwrap(), f);
        let g = DenseTensor::operator(&m([[2.0, 1.0, 0.0], [0.0, 1.0, 1.0], [1.0, 0.0, 3.0]]));
        let prod = compose_operators(&g, &inverse_operator(&g).unwrap()).unwrap();
        assert!(prod.as_matrix().unwrap().identity_residual() <= 1e-9);
    }

    #[test]
    fn symmetrize_quadratic_recover() {
        let mut a = Matrix::<f64>::zeros(3);
        a[(0, 1)] = 1.0;
        let form = BilinearForm::new(a).unwrap();
        let sym = form.symmetrize();
        assert_eq!(sym.matrix()[(0, 1)], 0.5);
        assert_eq!(sym.matrix()[(1, 0)], 0.5);

        let id = BilinearForm::new(Matrix::<f64>::identity(3)).unwrap();
        assert_eq!(id.quadratic(&[1.0, 2.0, 3.0]).unwrap(), 14.0);

        let s = BilinearForm::new(m([[2.0, -1.0, 0.5], [-1.0, 3.0, 4.0], [0.5, 4.0, -2.0]])).unwrap();
        let recovered = BilinearForm::recover(3, |x| s.quadratic(x).unwrap()).unwrap();
        assert_eq!(recovered, s);
        let rec_asym = BilinearForm::recover(3, |x| form.quadratic(x).unwrap()).unwrap();
        assert_eq!(rec_asym, sym);
    }

    #[test]
    fn point_coordinates_under_translation() {
        let old = CartesianSystem::<f64>::standard(3);
        let new = CartesianSystem::new(Basis::standard(3), vec![1.0, 0.0, 0.0]).unwrap();
        let pair = transition_between(&old.basis, &new.basis).unwrap();
        assert_eq!(change_point_coordinates(&[0.0; 3], &old, &new, &pair).unwrap(), vec![-1.0, 0.0, 0.0]);
        let p = [0.3, 2.0, -1.0];
        assert_eq!(change_point_coordinates(&p, &old, &old, &TransitionPair::identity(3)).unwrap(), p);
    }

    #[test]
    fn point_coordinates_round_trip_skew() {
        let old = CartesianSystem::new(
            Basis::new(m([[1.0, 0.5, 0.0], [0.0, 1.0, 0.2], [0.0, 0.0, 2.0]])).unwrap(),
            vec![0.5, -1.0, 2.0],
        )
        .unwrap();
        let new = CartesianSystem::new(
            Basis::new(m([[0.0, 1.0, 0.0], [2.0, 0.0, 1.0], [0.3, 0.0, 1.0]])).unwrap(),
            vec![-2.0, 1.0, 0.0],
        )
        .unwrap();
        let pair = transition_between(&old.basis, &new.basis).unwrap();
        let p = [1.0, -0.25, 3.0];
        let q = change_point_coordinates(&p, &old, &new, &pair).unwrap();
        // same ambient point
        let pa = old.ambient_point(&p);
        let qa = new.ambient_point(&q);
        assert!(linalg::max_abs_diff(&pa, &qa) <= 1e-12);
        let back = change_point_coordinates(&q, &new, &old, &pair.inverse()).unwrap();
        assert!(linalg::max_abs_diff(&back, &p) <= 1e-12);
        // x = a + S x̃
        let a = origin_shift(&old, &new).unwrap();
        let sx: Vec<f64> = pair.direct().mul_vec(&q);
        let rebuilt: Vec<f64> = a.iter().zip(&sx).map(|(x, y)| x + y).collect();
        assert!(linalg::max_abs_diff(&rebuilt, &p) <= 1e-12);
    }

    #[test]
    fn system_spec_rows_are_rows() {
        let spec: SystemSpec =
            serde_json::from_str(r#"{"columns": [[1, 1, 0], [0, 1, 0], [0, 0, 1]], "origin": [1, 2, 3]}"#)
                .unwrap();
        let sys = spec.to_system::<f64>().unwrap();
        assert_eq!(sys.basis.vector(2).unwrap(), vec![1.0, 1.0, 0.0]);
        assert_eq!(sys.origin, vec![1.0, 2.0, 3.0]);
    }
}
