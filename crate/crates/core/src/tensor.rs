//! Dense `(r, s)` tensors and the general transformation law.
//!
//! Components are stored in one flat row-major array with every upper slot
//! before every lower slot. The public index interface is 1-based; storage is
//! 0-based.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Largest supported total order `r + s`.
pub const MAX_ORDER: usize = 8;

/// Tolerance for `‖T·S − I‖∞` accepted by [`TransitionPair::new`].
pub const TRANSITION_TOLERANCE: f64 = 1e-9;

/// Numbers of upper (contravariant) and lower (covariant) index slots.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Valency {
    pub upper: usize,
    pub lower: usize,
}

impl Valency {
    pub const SCALAR: Valency = Valency::new(0, 0);
    pub const VECTOR: Valency = Valency::new(1, 0);
    pub const COVECTOR: Valency = Valency::new(0, 1);
    pub const OPERATOR: Valency = Valency::new(1, 1);
    pub const BILINEAR: Valency = Valency::new(0, 2);

    pub const fn new(upper: usize, lower: usize) -> Self {
        Self { upper, lower }
    }

    pub const fn order(self) -> usize {
        self.upper + self.lower
    }

    pub fn check_capacity(self) -> Result<Self> {
        if self.order() > MAX_ORDER {
            Err(Error::Capacity { order: self.order(), max: MAX_ORDER })
        } else {
            Ok(self)
        }
    }
}

impl fmt::Display for Valency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.upper, self.lower)
    }
}

/// Direction of a basis change.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Old components in, new components out: `T` on upper slots, `S` on lower.
    OldToNew,
    /// New components in, old components out: `S` on upper slots, `T` on lower.
    NewToOld,
}

impl Direction {
    pub fn reversed(self) -> Self {
        match self {
            Direction::OldToNew => Direction::NewToOld,
            Direction::NewToOld => Direction::OldToNew,
        }
    }
}

/// Direct transition matrix `S` and its inverse `T` relating two bases.
///
/// Column `j` of `S` holds the old-basis coordinates of the `j`-th new basis
/// vector.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionPair<R> {
    s: Matrix<R>,
    t: Matrix<R>,
}

impl<R: Real> TransitionPair<R> {
    /// Checks `‖T·S − I‖∞ ≤ 1e-9` and `det S ≠ 0`.
    pub fn new(s: Matrix<R>, t: Matrix<R>) -> Result<Self> {
        Self::with_tolerance(s, t, R::lit(TRANSITION_TOLERANCE))
    }

    pub fn with_tolerance(s: Matrix<R>, t: Matrix<R>, tol: R) -> Result<Self> {
        if s.dim() != t.dim() {
            return Err(Error::shape(format!(
                "S is {0}x{0} but T is {1}x{1}",
                s.dim(),
                t.dim()
            )));
        }
        if s.is_singular() {
            return Err(Error::DegenerateTransition(format!(
                "direct transition matrix is singular (det = {})",
                s.det()
            )));
        }
        let residual = (&t * &s).identity_residual();
        if !(residual <= tol) {
            return Err(Error::DegenerateTransition(format!(
                "T is not the inverse of S: |T S - I| = {residual}"
            )));
        }
        Ok(Self { s, t })
    }

    /// Pair built from `S` alone; `T` is obtained by inversion.
    pub fn from_direct(s: Matrix<R>) -> Result<Self> {
        let t = s.inverse()?;
        Ok(Self { s, t })
    }

    pub fn identity(dim: usize) -> Self {
        Self { s: Matrix::identity(dim), t: Matrix::identity(dim) }
    }

    pub fn dim(&self) -> usize {
        self.s.dim()
    }

    /// Direct transition matrix `S`.
    pub fn direct(&self) -> &Matrix<R> {
        &self.s
    }

    /// Inverse transition matrix `T`.
    pub fn inverse_matrix(&self) -> &Matrix<R> {
        &self.t
    }

    /// The pair describing the reverse change of basis.
    pub fn inverse(&self) -> Self {
        Self { s: self.t.clone(), t: self.s.clone() }
    }

    /// Chains `self` (basis 1 → 2) with `next` (basis 2 → 3).
    pub fn compose(&self, next: &Self) -> Result<Self> {
        if self.dim() != next.dim() {
            return Err(Error::shape("transition pairs have different dimensions"));
        }
        Ok(Self { s: &self.s * &next.s, t: &next.t * &self.t })
    }

    /// `‖T·S − I‖∞`.
    pub fn residual(&self) -> R {
        (&self.t * &self.s).identity_residual()
    }
}

/// Components of an `(r, s)` tensor in a fixed basis.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TensorRepr<R>", into = "TensorRepr<R>")]
#[serde(bound(serialize = "R: Real + Serialize", deserialize = "R: Real + Deserialize<'de>"))]
pub struct DenseTensor<R> {
    valency: Valency,
    dim: usize,
    components: Vec<R>,
}

/// Interchange form: `{ "r": .., "s": .., "dim": .., "components": [..] }`.
#[derive(Serialize, Deserialize)]
struct TensorRepr<R> {
    r: usize,
    s: usize,
    dim: usize,
    components: Vec<R>,
}

impl<R: Real> TryFrom<TensorRepr<R>> for DenseTensor<R> {
    type Error = Error;

    fn try_from(repr: TensorRepr<R>) -> Result<Self> {
        DenseTensor::from_components(Valency::new(repr.r, repr.s), repr.dim, repr.components)
    }
}

impl<R: Real> From<DenseTensor<R>> for TensorRepr<R> {
    fn from(t: DenseTensor<R>) -> Self {
        TensorRepr { r: t.valency.upper, s: t.valency.lower, dim: t.dim, components: t.components }
    }
}

fn component_count(valency: Valency, dim: usize) -> usize {
    dim.pow(valency.order() as u32)
}

/// Digits of `flat` in base `dim`, most significant first.
pub(crate) fn decompose(mut flat: usize, dim: usize, out: &mut [usize]) {
    for d in out.iter_mut().rev() {
        *d = flat % dim;
        flat /= dim;
    }
}

pub(crate) fn compose_offset(digits: &[usize], dim: usize) -> usize {
    digits.iter().fold(0, |acc, &d| acc * dim + d)
}

impl<R: Real> DenseTensor<R> {
    pub fn zeros(valency: Valency, dim: usize) -> Result<Self> {
        valency.check_capacity()?;
        if dim == 0 {
            return Err(Error::shape("dimension must be at least 1"));
        }
        Ok(Self { valency, dim, components: vec![R::zero(); component_count(valency, dim)] })
    }

    /// Wraps a flat component array given in the declared layout.
    pub fn from_components(valency: Valency, dim: usize, components: Vec<R>) -> Result<Self> {
        let mut t = Self::zeros(valency, dim)?;
        if components.len() != t.components.len() {
            return Err(Error::shape(format!(
                "a {valency} tensor in dimension {dim} has {} components, got {}",
                t.components.len(),
                components.len()
            )));
        }
        if let Some(pos) = components.iter().position(|x| !x.is_finite()) {
            return Err(Error::shape(format!("component {pos} is not finite")));
        }
        t.components = components;
        Ok(t)
    }

    /// Fills every component from 1-based `(upper, lower)` index lists.
    pub fn from_fn(
        valency: Valency,
        dim: usize,
        mut f: impl FnMut(&[usize], &[usize]) -> R,
    ) -> Result<Self> {
        let mut t = Self::zeros(valency, dim)?;
        let mut digits = vec![0; valency.order()];
        for flat in 0..t.components.len() {
            decompose(flat, dim, &mut digits);
            let one_based: Vec<usize> = digits.iter().map(|d| d + 1).collect();
            let (up, low) = one_based.split_at(valency.upper);
            t.components[flat] = f(up, low);
        }
        Ok(t)
    }

    /// Scalar in the default dimension 3.
    pub fn scalar(value: R) -> Self {
        Self::scalar_in(value, 3)
    }

    /// Scalar tagged with a space dimension, so it combines with other tensors of that dimension.
    pub fn scalar_in(value: R, dim: usize) -> Self {
        Self { valency: Valency::SCALAR, dim, components: vec![value] }
    }

    pub fn vector(components: &[R]) -> Self {
        Self { valency: Valency::VECTOR, dim: components.len(), components: components.to_vec() }
    }

    pub fn covector(components: &[R]) -> Self {
        Self { valency: Valency::COVECTOR, dim: components.len(), components: components.to_vec() }
    }

    /// `(1, 1)` tensor whose row index is the upper one.
    pub fn operator(m: &Matrix<R>) -> Self {
        Self { valency: Valency::OPERATOR, dim: m.dim(), components: m.as_slice().to_vec() }
    }

    /// `(0, 2)` tensor with components `a_ij = m[(i, j)]`.
    pub fn bilinear(m: &Matrix<R>) -> Self {
        Self { valency: Valency::BILINEAR, dim: m.dim(), components: m.as_slice().to_vec() }
    }

    /// `(2, 0)` tensor with components `a^ij = m[(i, j)]`.
    pub fn contravariant2(m: &Matrix<R>) -> Self {
        Self { valency: Valency::new(2, 0), dim: m.dim(), components: m.as_slice().to_vec() }
    }

    pub fn valency(&self) -> Valency {
        self.valency
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[R] {
        &self.components
    }

    pub fn into_components(self) -> Vec<R> {
        self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Value of a `(0, 0)` tensor.
    pub fn scalar_value(&self) -> Result<R> {
        if self.valency.order() != 0 {
            return Err(Error::shape(format!("expected a scalar, got a {} tensor", self.valency)));
        }
        Ok(self.components[0])
    }

    /// Components of a second-order tensor as a matrix (first slot = row).
    pub fn as_matrix(&self) -> Result<Matrix<R>> {
        if self.valency.order() != 2 {
            return Err(Error::shape(format!("expected an order-2 tensor, got {}", self.valency)));
        }
        Ok(Matrix::from_fn(self.dim, |i, j| self.components[i * self.dim + j]))
    }

    fn offset(&self, upper: &[usize], lower: &[usize]) -> Result<usize> {
        if upper.len() != self.valency.upper || lower.len() != self.valency.lower {
            return Err(Error::index(format!(
                "a {} tensor needs {} upper and {} lower indices, got {} and {}",
                self.valency,
                self.valency.upper,
                self.valency.lower,
                upper.len(),
                lower.len()
            )));
        }
        let mut offset = 0;
        for &i in upper.iter().chain(lower) {
            if i == 0 || i > self.dim {
                return Err(Error::index(format!("index {i} is outside 1..={}", self.dim)));
            }
            offset = offset * self.dim + (i - 1);
        }
        Ok(offset)
    }

    /// Component with 1-based upper and lower indices.
    pub fn get(&self, upper: &[usize], lower: &[usize]) -> Result<R> {
        Ok(self.components[self.offset(upper, lower)?])
    }

    pub fn set(&mut self, upper: &[usize], lower: &[usize], value: R) -> Result<()> {
        let offset = self.offset(upper, lower)?;
        self.components[offset] = value;
        Ok(())
    }

    /// Component at a 0-based multi-index covering all slots, upper first.
    pub(crate) fn at(&self, digits: &[usize]) -> R {
        self.components[compose_offset(digits, self.dim)]
    }

    pub fn map(&self, f: impl Fn(R) -> R) -> Self {
        Self {
            valency: self.valency,
            dim: self.dim,
            components: self.components.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, alpha: R) -> Self {
        self.map(|x| x * alpha)
    }

    fn check_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.valency != other.valency || self.dim != other.dim {
            return Err(Error::shape(format!(
                "cannot {what} a {} tensor in dimension {} and a {} tensor in dimension {}",
                self.valency, self.dim, other.valency, other.dim
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "add")?;
        Ok(Self {
            valency: self.valency,
            dim: self.dim,
            components: self.components.iter().zip(&other.components).map(|(&a, &b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-R::one()))
    }

    /// Largest absolute component difference between same-shaped tensors.
    pub fn max_abs_diff(&self, other: &Self) -> Result<R> {
        self.check_same_shape(other, "compare")?;
        Ok(crate::linalg::max_abs_diff(&self.components, &other.components))
    }

    pub fn max_abs(&self) -> R {
        self.components.iter().fold(R::zero(), |m, &x| m.max(x.abs()))
    }

    /// `Z = X ⊗ Y`: the upper slots of `X` precede those of `Y`, and likewise for lower slots.
    pub fn tensor_product(&self, other: &Self) -> Result<Self> {
        let (x, y) = (self, other);
        // A scalar factor adopts the dimension of the other operand.
        let dim = if x.valency.order() == 0 { y.dim } else { x.dim };
        if x.valency.order() != 0 && y.valency.order() != 0 && x.dim != y.dim {
            return Err(Error::shape(format!(
                "tensor product of dimension {} and {} tensors",
                x.dim, y.dim
            )));
        }
        let valency = Valency::new(
            x.valency.upper + y.valency.upper,
            x.valency.lower + y.valency.lower,
        );
        let mut z = Self::zeros(valency, dim)?;
        let (rx, ry, sx) = (x.valency.upper, y.valency.upper, x.valency.lower);
        let mut digits = vec![0; valency.order()];
        let mut xd = Vec::with_capacity(x.valency.order());
        let mut yd = Vec::with_capacity(y.valency.order());
        for flat in 0..z.components.len() {
            decompose(flat, dim, &mut digits);
            xd.clear();
            yd.clear();
            xd.extend_from_slice(&digits[..rx]);
            yd.extend_from_slice(&digits[rx..rx + ry]);
            xd.extend_from_slice(&digits[rx + ry..rx + ry + sx]);
            yd.extend_from_slice(&digits[rx + ry + sx..]);
            z.components[flat] = x.at(&xd) * y.at(&yd);
        }
        Ok(z)
    }

    /// Contraction over the `upper`-th upper and `lower`-th lower slot (both 1-based).
    pub fn contract(&self, upper: usize, lower: usize) -> Result<Self> {
        let Valency { upper: r, lower: s } = self.valency;
        if r == 0 || s == 0 {
            return Err(Error::index(format!("cannot contract a {} tensor", self.valency)));
        }
        if upper == 0 || upper > r {
            return Err(Error::index(format!("upper slot {upper} is outside 1..={r}")));
        }
        if lower == 0 || lower > s {
            return Err(Error::index(format!("lower slot {lower} is outside 1..={s}")));
        }
        let valency = Valency::new(r - 1, s - 1);
        let mut z = Self::zeros(valency, self.dim)?;
        let up_pos = upper - 1;
        let low_pos = r + lower - 1;
        let mut digits = vec![0; valency.order()];
        let mut full = vec![0; self.valency.order()];
        for flat in 0..z.components.len() {
            decompose(flat, self.dim, &mut digits);
            // Re-insert the two summed slots around the free digits.
            let mut src = digits.iter();
            for (pos, slot) in full.iter_mut().enumerate() {
                if pos != up_pos && pos != low_pos {
                    *slot = *src.next().expect("free digit");
                }
            }
            let mut sum = R::zero();
            for rho in 0..self.dim {
                full[up_pos] = rho;
                full[low_pos] = rho;
                sum += self.at(&full);
            }
            z.components[flat] = sum;
        }
        Ok(z)
    }

    /// Applies `m` along one slot: `out[..i..] = Σ_h m'(i, h) in[..h..]`,
    /// with `m' = mᵀ` when `transposed`.
    fn apply_along(&self, slot: usize, m: &Matrix<R>, transposed: bool) -> Self {
        let dim = self.dim;
        let stride = dim.pow((self.valency.order() - 1 - slot) as u32);
        let mut out = vec![R::zero(); self.components.len()];
        for (o, value) in out.iter_mut().enumerate() {
            let d = (o / stride) % dim;
            let base = o - d * stride;
            let mut sum = R::zero();
            for h in 0..dim {
                let coeff = if transposed { m[(h, d)] } else { m[(d, h)] };
                sum += coeff * self.components[base + h * stride];
            }
            *value = sum;
        }
        Self { valency: self.valency, dim, components: out }
    }

    /// General transformation law, one matrix application per slot.
    pub fn transform(&self, pair: &TransitionPair<R>, direction: Direction) -> Result<Self> {
        if pair.dim() != self.dim {
            return Err(Error::shape(format!(
                "transition pair of dimension {} applied to a tensor of dimension {}",
                pair.dim(),
                self.dim
            )));
        }
        let (upper_m, lower_m) = match direction {
            Direction::NewToOld => (pair.direct(), pair.inverse_matrix()),
            Direction::OldToNew => (pair.inverse_matrix(), pair.direct()),
        };
        let r = self.valency.upper;
        let mut out = self.clone();
        for slot in 0..self.valency.order() {
            out = if slot < r {
                out.apply_along(slot, upper_m, false)
            } else {
                out.apply_along(slot, lower_m, true)
            };
        }
        Ok(out)
    }

    pub fn cast<Q: Real>(&self) -> DenseTensor<Q> {
        DenseTensor {
            valency: self.valency,
            dim: self.dim,
            components: self.components.iter().map(|&x| Q::lit(x.to_f64_lossy())).collect(),
        }
    }

    /// Inserts a new lower slot at the front of the lower block:
    /// `Y^{i..}_{q j..} = parts[q]^{i..}_{j..}`.
    pub(crate) fn stack_first_lower(parts: &[Self]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::shape("no derivative components"))?;
        let dim = first.dim;
        if parts.len() != dim {
            return Err(Error::shape("one component tensor per coordinate is required"));
        }
        let base = first.valency;
        let valency = Valency::new(base.upper, base.lower + 1);
        let mut y = Self::zeros(valency, dim)?;
        let mut digits = vec![0; valency.order()];
        let mut src = vec![0; base.order()];
        for flat in 0..y.components.len() {
            decompose(flat, dim, &mut digits);
            let q = digits[base.upper];
            src[..base.upper].copy_from_slice(&digits[..base.upper]);
            src[base.upper..].copy_from_slice(&digits[base.upper + 1..]);
            y.components[flat] = parts[q].at(&src);
        }
        Ok(y)
    }
}

impl<R: Real> fmt::Debug for DenseTensor<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseTensor{}[dim={}]{:?}", self.valency, self.dim, self.components)
    }
}
