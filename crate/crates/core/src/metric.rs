//! Metric tensor, index raising and lowering, Kronecker and Levi-Civita
//! symbols, volume tensors and the cross product in skew bases.

use crate::error::{Error, Result};
use crate::frames::Basis;
use crate::linalg::{self, Matrix};
use crate::scalar::Real;
use crate::tensor::{compose_offset, decompose, DenseTensor, Valency};

const SYMMETRY_TOLERANCE: f64 = 1e-12;
const INVERSE_TOLERANCE: f64 = 1e-9;

/// Positive definite symmetric `g_ij` together with its inverse `g^ij`.
#[derive(Clone, Debug, PartialEq)]
pub struct Metric<R> {
    g: Matrix<R>,
    dual: Matrix<R>,
}

impl<R: Real> Metric<R> {
    pub fn new(g: Matrix<R>) -> Result<Self> {
        if !g.is_finite() {
            return Err(Error::DegenerateMetric("metric entries must be finite".into()));
        }
        let scale = g.max_abs().max(R::one());
        if !g.is_symmetric(R::lit(SYMMETRY_TOLERANCE) * scale) {
            return Err(Error::DegenerateMetric("metric matrix is not symmetric".into()));
        }
        if g.cholesky_pivots().is_none() {
            return Err(Error::DegenerateMetric("metric matrix is not positive definite".into()));
        }
        let dual = g
            .inverse()
            .map_err(|_| Error::DegenerateMetric("metric matrix is singular".into()))?;
        let residual = (&g * &dual).identity_residual();
        if !(residual <= R::lit(INVERSE_TOLERANCE)) {
            return Err(Error::DegenerateMetric(format!(
                "metric is too ill-conditioned: |g g^-1 - I| = {residual}"
            )));
        }
        Ok(Self { g, dual })
    }

    /// Symmetrizes `g` before validation; for metrics assembled from floating point sums.
    pub fn new_symmetrized(g: Matrix<R>) -> Result<Self> {
        Self::new(g.add(&g.transpose()).scale(R::lit(0.5)))
    }

    pub fn identity(dim: usize) -> Self {
        Self { g: Matrix::identity(dim), dual: Matrix::identity(dim) }
    }

    /// Gram matrix `g_ij = (e_i, e_j)` of a basis in ambient coordinates.
    pub fn gram_from_basis(basis: &Basis<R>) -> Result<Self> {
        let c = basis.columns();
        Self::new_symmetrized(&c.transpose() * c)
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    /// Covariant components `g_ij`.
    pub fn matrix(&self) -> &Matrix<R> {
        &self.g
    }

    /// Contravariant components `g^ij`.
    pub fn dual(&self) -> &Matrix<R> {
        &self.dual
    }

    pub fn det(&self) -> R {
        self.g.det()
    }

    pub fn as_tensor(&self) -> DenseTensor<R> {
        DenseTensor::bilinear(&self.g)
    }

    pub fn dual_tensor(&self) -> DenseTensor<R> {
        DenseTensor::contravariant2(&self.dual)
    }

    /// `(x, y) = Σ g_ij xⁱ yʲ`.
    pub fn dot(&self, x: &[R], y: &[R]) -> Result<R> {
        if x.len() != self.dim() || y.len() != self.dim() {
            return Err(Error::shape("vector length differs from the metric's dimension"));
        }
        Ok(linalg::dot(x, &self.g.mul_vec(y)))
    }

    pub fn norm(&self, x: &[R]) -> Result<R> {
        Ok(self.dot(x, x)?.max(R::zero()).sqrt())
    }

    /// Raises the `slot`-th lower index (1-based); it becomes the first upper slot.
    pub fn raise_index(&self, t: &DenseTensor<R>, slot: usize) -> Result<DenseTensor<R>> {
        let Valency { upper: r, lower: s } = t.valency();
        if slot == 0 || slot > s {
            return Err(Error::index(format!("lower slot {slot} is outside 1..={s}")));
        }
        self.move_index(t, r + slot - 1, Valency::new(r + 1, s - 1), 0, &self.dual)
    }

    /// Lowers the `slot`-th upper index (1-based); it becomes the first lower slot.
    pub fn lower_index(&self, t: &DenseTensor<R>, slot: usize) -> Result<DenseTensor<R>> {
        let Valency { upper: r, lower: s } = t.valency();
        if slot == 0 || slot > r {
            return Err(Error::index(format!("upper slot {slot} is outside 1..={r}")));
        }
        self.move_index(t, slot - 1, Valency::new(r - 1, s + 1), r - 1, &self.g)
    }

    /// `Y[.. p ..] = Σ_σ m(p, σ) X[.. σ ..]`, with source slot `from` and target slot `to`.
    fn move_index(
        &self,
        t: &DenseTensor<R>,
        from: usize,
        valency: Valency,
        to: usize,
        m: &Matrix<R>,
    ) -> Result<DenseTensor<R>> {
        let dim = t.dim();
        if dim != self.dim() {
            return Err(Error::shape(format!(
                "tensor of dimension {dim} with a metric of dimension {}",
                self.dim()
            )));
        }
        let out = DenseTensor::<R>::zeros(valency, dim)?;
        let order = valency.order();
        let mut digits = vec![0; order];
        let mut src = vec![0; order];
        let mut values = Vec::with_capacity(out.len());
        for flat in 0..out.len() {
            decompose(flat, dim, &mut digits);
            let p = digits[to];
            // Remaining slots keep their relative order around the moved one.
            let rest = digits[..to].iter().chain(&digits[to + 1..]);
            let mut rest = rest.copied();
            for (pos, d) in src.iter_mut().enumerate() {
                if pos != from {
                    *d = rest.next().expect("remaining digit");
                }
            }
            let mut sum = R::zero();
            for sigma in 0..dim {
                src[from] = sigma;
                sum += m[(p, sigma)] * t.components()[compose_offset(&src, dim)];
            }
            values.push(sum);
        }
        DenseTensor::from_components(valency, dim, values)
    }

    /// `ω_ijk = √det g · ε_ijk`.
    pub fn volume_tensor(&self) -> Result<DenseTensor<R>> {
        self.require_dim3()?;
        let det = self.det();
        if !(det > R::zero()) {
            return Err(Error::DegenerateMetric(format!("det g = {det} is not positive")));
        }
        levi_civita::<R>(3)?.scaled(Valency::new(0, 3), det.sqrt())
    }

    /// `ω^ijk = √det g⁻¹ · ε^ijk`.
    pub fn dual_volume_tensor(&self) -> Result<DenseTensor<R>> {
        self.require_dim3()?;
        let det = self.dual.det();
        if !(det > R::zero()) {
            return Err(Error::DegenerateMetric(format!("det g^-1 = {det} is not positive")));
        }
        levi_civita::<R>(3)?.scaled(Valency::new(3, 0), det.sqrt())
    }

    /// `aʳ = Σ g^ri ω_ijk xʲ yᵏ`.
    pub fn cross_product(&self, x: &[R], y: &[R]) -> Result<Vec<R>> {
        let omega = self.volume_tensor()?;
        if x.len() != 3 || y.len() != 3 {
            return Err(Error::shape("cross product needs two 3-vectors"));
        }
        let mut lowered = [R::zero(); 3];
        for (i, a) in lowered.iter_mut().enumerate() {
            for (j, xj) in x.iter().enumerate() {
                for (k, yk) in y.iter().enumerate() {
                    *a += omega.at(&[i, j, k]) * *xj * *yk;
                }
            }
        }
        Ok(self.dual.mul_vec(&lowered))
    }

    fn require_dim3(&self) -> Result<()> {
        if self.dim() != 3 {
            return Err(Error::UnsupportedDimension { found: self.dim(), expected: 3 });
        }
        Ok(())
    }

    pub fn cast<Q: Real>(&self) -> Metric<Q> {
        Metric { g: self.g.cast(), dual: self.dual.cast() }
    }
}

/// `δⁱⱼ` as a `(1, 1)` tensor.
pub fn kronecker<R: Real>(dim: usize) -> DenseTensor<R> {
    DenseTensor::operator(&Matrix::identity(dim))
}

/// Unit matrix as a raw array, the shape of `δ^ij` and `δ_ij`. Not a tensor.
pub fn kronecker_raw<R: Real>(dim: usize) -> Matrix<R> {
    Matrix::identity(dim)
}

/// Raw Levi-Civita symbol `ε_jkq` for `dim = 3`, stored flat in row-major order.
///
/// This is deliberately not a [`DenseTensor`]: the symbol is not a tensor and no
/// transformation is offered on it.
#[derive(Clone, Debug, PartialEq)]
pub struct LeviCivita<R> {
    values: Vec<R>,
}

impl<R: Real> LeviCivita<R> {
    /// Value at 1-based indices.
    pub fn get(&self, j: usize, k: usize, q: usize) -> Result<R> {
        for i in [j, k, q] {
            if i == 0 || i > 3 {
                return Err(Error::index(format!("index {i} is outside 1..=3")));
            }
        }
        Ok(self.values[(j - 1) * 9 + (k - 1) * 3 + (q - 1)])
    }

    pub fn values(&self) -> &[R] {
        &self.values
    }

    fn scaled(&self, valency: Valency, alpha: R) -> Result<DenseTensor<R>> {
        DenseTensor::from_components(valency, 3, self.values.iter().map(|&v| v * alpha).collect())
    }
}

/// Sign of the permutation `(j k q)` of `(0 1 2)`; zero when two entries repeat.
fn permutation_sign(j: usize, k: usize, q: usize) -> i32 {
    if j == k || k == q || j == q {
        return 0;
    }
    let inversions = [(j, k), (j, q), (k, q)].iter().filter(|(a, b)| a > b).count();
    if inversions % 2 == 0 {
        1
    } else {
        -1
    }
}

pub fn levi_civita<R: Real>(dim: usize) -> Result<LeviCivita<R>> {
    if dim != 3 {
        return Err(Error::UnsupportedDimension { found: dim, expected: 3 });
    }
    let mut values = Vec::with_capacity(27);
    let mut digits = [0usize; 3];
    for flat in 0..27 {
        decompose(flat, 3, &mut digits);
        values.push(R::lit(f64::from(permutation_sign(digits[0], digits[1], digits[2]))));
    }
    Ok(LeviCivita { values })
}

/// Cross product by the determinant rule in an orthonormal basis.
pub fn cross_orthonormal<R: Real>(x: &[R], y: &[R]) -> [R; 3] {
    [
        x[1] * y[2] - x[2] * y[1],
        x[2] * y[0] - x[0] * y[2],
        x[0] * y[1] - x[1] * y[0],
    ]
}
