//! Tensor fields, numerical differentiation and the vector-calculus operators.
//!
//! Every operator is written once against [`Geometry`], which supplies the
//! metric and (for curvilinear charts) the connection at a point. [`Flat`] is
//! a Cartesian system with a constant metric and no connection, in which the
//! covariant derivative reduces to plain partial derivatives.

use std::sync::Arc;

use crate::curvilinear::ChristoffelArray;
use crate::error::{Error, Result};
use crate::frames::{change_point_coordinates, transition_between, CartesianSystem};
use crate::linalg::Matrix;
use crate::metric::Metric;
use crate::scalar::Real;
use crate::tensor::{decompose, DenseTensor, Direction, Valency};

type EvalFn<R> = dyn Fn(&[R], R) -> Result<DenseTensor<R>> + Send + Sync;
type PartialsFn<R> = dyn Fn(&[R], R) -> Result<Vec<DenseTensor<R>>> + Send + Sync;

/// Tensor-valued function of a coordinate point and an optional external
/// parameter `t`.
#[derive(Clone)]
pub struct TensorField<R> {
    valency: Valency,
    dim: usize,
    eval: Arc<EvalFn<R>>,
    partials: Option<Arc<PartialsFn<R>>>,
}

impl<R: Real> std::fmt::Debug for TensorField<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TensorField")
            .field("valency", &self.valency)
            .field("dim", &self.dim)
            .field("analytic_partials", &self.partials.is_some())
            .finish()
    }
}

impl<R: Real> TensorField<R> {
    pub fn with_parameter(
        valency: Valency,
        dim: usize,
        f: impl Fn(&[R], R) -> Result<DenseTensor<R>> + Send + Sync + 'static,
    ) -> Self {
        Self { valency, dim, eval: Arc::new(f), partials: None }
    }

    pub fn try_new(
        valency: Valency,
        dim: usize,
        f: impl Fn(&[R]) -> Result<DenseTensor<R>> + Send + Sync + 'static,
    ) -> Self {
        Self::with_parameter(valency, dim, move |x, _| f(x))
    }

    pub fn new(
        valency: Valency,
        dim: usize,
        f: impl Fn(&[R]) -> DenseTensor<R> + Send + Sync + 'static,
    ) -> Self {
        Self::with_parameter(valency, dim, move |x, _| Ok(f(x)))
    }

    pub fn scalar(dim: usize, f: impl Fn(&[R]) -> R + Send + Sync + 'static) -> Self {
        Self::new(Valency::SCALAR, dim, move |x| DenseTensor::scalar_in(f(x), dim))
    }

    pub fn scalar_with_parameter(
        dim: usize,
        f: impl Fn(&[R], R) -> R + Send + Sync + 'static,
    ) -> Self {
        Self::with_parameter(Valency::SCALAR, dim, move |x, t| Ok(DenseTensor::scalar_in(f(x, t), dim)))
    }

    /// Contravariant vector field.
    pub fn vector(dim: usize, f: impl Fn(&[R]) -> Vec<R> + Send + Sync + 'static) -> Self {
        Self::new(Valency::VECTOR, dim, move |x| DenseTensor::vector(&f(x)))
    }

    pub fn constant(t: DenseTensor<R>) -> Self {
        let dim = t.dim();
        let zero = DenseTensor::zeros(t.valency(), dim).expect("valency already validated");
        let valency = t.valency();
        Self::new(valency, dim, move |_| t.clone())
            .with_partials(move |_, _| Ok(vec![zero.clone(); dim]))
    }

    /// Attaches analytic partial derivatives `∂X/∂x^q`, one tensor per `q`.
    pub fn with_partials(
        mut self,
        p: impl Fn(&[R], R) -> Result<Vec<DenseTensor<R>>> + Send + Sync + 'static,
    ) -> Self {
        self.partials = Some(Arc::new(p));
        self
    }

    pub fn without_partials(mut self) -> Self {
        self.partials = None;
        self
    }

    pub fn valency(&self) -> Valency {
        self.valency
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_analytic_partials(&self) -> bool {
        self.partials.is_some()
    }

    pub fn evaluate(&self, x: &[R]) -> Result<DenseTensor<R>> {
        self.evaluate_at(x, R::zero())
    }

    pub fn evaluate_at(&self, x: &[R], t: R) -> Result<DenseTensor<R>> {
        if x.len() != self.dim {
            return Err(Error::shape(format!(
                "field of dimension {} evaluated at a point with {} coordinates",
                self.dim,
                x.len()
            )));
        }
        let value = (self.eval)(x, t)?;
        if value.valency() != self.valency || value.dim() != self.dim {
            return Err(Error::shape(format!(
                "field declared {} in dimension {} produced {} in dimension {}",
                self.valency,
                self.dim,
                value.valency(),
                value.dim()
            )));
        }
        Ok(value)
    }

    /// Partial derivatives `∂X/∂x^q` for every `q`: analytic when attached,
    /// otherwise by finite differences.
    pub fn partials_at(&self, x: &[R], t: R, scheme: &DifferentiationScheme<R>) -> Result<Vec<DenseTensor<R>>> {
        match &self.partials {
            Some(p) => {
                let parts = p(x, t)?;
                if parts.len() != self.dim
                    || parts.iter().any(|d| d.valency() != self.valency || d.dim() != self.dim)
                {
                    return Err(Error::shape("analytic partials do not match the field's shape"));
                }
                Ok(parts)
            }
            None => self.fd_partials(x, t, scheme, &|_| Ok(())),
        }
    }

    fn fd_partials(
        &self,
        x: &[R],
        t: R,
        scheme: &DifferentiationScheme<R>,
        domain: &dyn Fn(&[R]) -> Result<()>,
    ) -> Result<Vec<DenseTensor<R>>> {
        (0..self.dim)
            .map(|q| {
                scheme.derivative(
                    &|p: &[R]| {
                        domain(p)?;
                        self.evaluate_at(p, t)
                    },
                    x,
                    q,
                )
            })
            .collect()
    }

    /// Largest deviation between attached analytic partials and central differences.
    pub fn check_partials(&self, points: &[Vec<R>], scheme: &DifferentiationScheme<R>) -> Result<R> {
        let Some(p) = &self.partials else {
            return Ok(R::zero());
        };
        let mut worst = R::zero();
        for x in points {
            let analytic = p(x, R::zero())?;
            let numeric = self.fd_partials(x, R::zero(), scheme, &|_| Ok(()))?;
            for (a, n) in analytic.iter().zip(&numeric) {
                worst = worst.max(a.max_abs_diff(n)?);
            }
        }
        Ok(worst)
    }

    /// The same field with the external parameter frozen at `t0`.
    pub fn at_parameter(&self, t0: R) -> Self {
        let inner = self.clone();
        let mut out = Self::with_parameter(self.valency, self.dim, move |x, _| inner.evaluate_at(x, t0));
        if let Some(p) = &self.partials {
            let p = Arc::clone(p);
            out = out.with_partials(move |x, _| p(x, t0));
        }
        out
    }

    /// Re-expresses a field given in Cartesian system `old` in Cartesian system `new`:
    /// `X̃(x̃) = transform(X(x(x̃)))` with the point map `x = a + S x̃`.
    pub fn in_cartesian_system(&self, old: &CartesianSystem<R>, new: &CartesianSystem<R>) -> Result<Self> {
        if old.basis.dim() != self.dim || new.basis.dim() != self.dim {
            return Err(Error::shape("coordinate systems and field differ in dimension"));
        }
        let pair = transition_between(&old.basis, &new.basis)?;
        let back = pair.inverse();
        let (old, new) = (old.clone(), new.clone());
        let inner = self.clone();
        Ok(Self::with_parameter(self.valency, self.dim, move |xt, t| {
            let x = change_point_coordinates(xt, &new, &old, &back)?;
            inner.evaluate_at(&x, t)?.transform(&pair, Direction::OldToNew)
        }))
    }
}

/// Finite-difference accuracy order.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub enum FdOrder {
    #[default]
    Central2,
    Central4,
}

/// Step size policy and stencil for numerical derivatives.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct DifferentiationScheme<R> {
    step: Option<R>,
    order: FdOrder,
}

impl<R: Real> Default for DifferentiationScheme<R> {
    fn default() -> Self {
        Self { step: None, order: FdOrder::Central2 }
    }
}

impl<R: Real> DifferentiationScheme<R> {
    pub fn new(order: FdOrder) -> Self {
        Self { step: None, order }
    }

    /// Fixed step for every derivative; must be positive.
    pub fn with_step(order: FdOrder, step: R) -> Result<Self> {
        if !(step > R::zero()) || !step.is_finite() {
            return Err(Error::Parameter(format!("finite-difference step {step} must be positive")));
        }
        Ok(Self { step: Some(step), order })
    }

    pub fn order(&self) -> FdOrder {
        self.order
    }

    pub fn step(&self) -> Option<R> {
        self.step
    }

    /// `∛ε · max(1, |x|)` unless a fixed step was set.
    pub fn first_step(&self, x: R) -> R {
        self.step.unwrap_or_else(|| R::epsilon().cbrt() * x.abs().max(R::one()))
    }

    /// `ε^¼ · max(1, |x|)` unless a fixed step was set.
    pub fn second_step(&self, x: R) -> R {
        self.step
            .unwrap_or_else(|| R::epsilon().sqrt().sqrt() * x.abs().max(R::one()))
    }

    /// `∂f/∂x^q` at `x`.
    pub fn derivative(
        &self,
        f: &dyn Fn(&[R]) -> Result<DenseTensor<R>>,
        x: &[R],
        q: usize,
    ) -> Result<DenseTensor<R>> {
        let h = self.first_step(x[q]);
        let at = |offset: R| -> Result<DenseTensor<R>> {
            let mut p = x.to_vec();
            p[q] += offset;
            f(&p)
        };
        self.combine_first(&at, h)
    }

    /// Derivative of a one-parameter family at `t`.
    pub fn derivative_scalar_arg(
        &self,
        f: &dyn Fn(R) -> Result<DenseTensor<R>>,
        t: R,
    ) -> Result<DenseTensor<R>> {
        let h = self.first_step(t);
        self.combine_first(&|offset| f(t + offset), h)
    }

    fn combine_first(
        &self,
        at: &dyn Fn(R) -> Result<DenseTensor<R>>,
        h: R,
    ) -> Result<DenseTensor<R>> {
        match self.order {
            FdOrder::Central2 => {
                let plus = at(h)?;
                let minus = at(-h)?;
                Ok(plus.sub(&minus)?.scale((h + h).recip()))
            }
            FdOrder::Central4 => {
                let two = R::lit(2.0);
                let p2 = at(two * h)?;
                let p1 = at(h)?;
                let m1 = at(-h)?;
                let m2 = at(-two * h)?;
                let eight = R::lit(8.0);
                let sum = p1.sub(&m1)?.scale(eight).sub(&p2.sub(&m2)?)?;
                Ok(sum.scale((R::lit(12.0) * h).recip()))
            }
        }
    }

    /// Second derivative of a one-parameter family at `t`.
    pub fn second_derivative_scalar_arg(
        &self,
        f: &dyn Fn(R) -> Result<DenseTensor<R>>,
        t: R,
    ) -> Result<DenseTensor<R>> {
        let h = self.second_step(t);
        self.combine_second(&|offset| f(t + offset), h)
    }

    fn combine_second(&self, at: &dyn Fn(R) -> Result<DenseTensor<R>>, h: R) -> Result<DenseTensor<R>> {
        let centre = at(R::zero())?;
        match self.order {
            FdOrder::Central2 => {
                let sum = at(h)?.add(&at(-h)?)?.sub(&centre.scale(R::lit(2.0)))?;
                Ok(sum.scale((h * h).recip()))
            }
            FdOrder::Central4 => {
                let two = R::lit(2.0);
                let near = at(h)?.add(&at(-h)?)?.scale(R::lit(16.0));
                let far = at(two * h)?.add(&at(-two * h)?)?;
                let sum = near.sub(&far)?.sub(&centre.scale(R::lit(30.0)))?;
                Ok(sum.scale((R::lit(12.0) * h * h).recip()))
            }
        }
    }

    /// `∂²f/∂x^i∂x^j` at `x` from function values only.
    pub fn second_derivative(
        &self,
        f: &dyn Fn(&[R]) -> Result<DenseTensor<R>>,
        x: &[R],
        i: usize,
        j: usize,
    ) -> Result<DenseTensor<R>> {
        if i == j {
            let h = self.second_step(x[i]);
            let at = |offset: R| -> Result<DenseTensor<R>> {
                let mut p = x.to_vec();
                p[i] += offset;
                f(&p)
            };
            return self.combine_second(&at, h);
        }
        let (hi, hj) = (self.second_step(x[i]), self.second_step(x[j]));
        // Tensor product of one-dimensional first-derivative stencils.
        let stencil: &[(f64, f64)] = match self.order {
            FdOrder::Central2 => &[(1.0, 0.5), (-1.0, -0.5)],
            FdOrder::Central4 => &[
                (2.0, -1.0 / 12.0),
                (1.0, 8.0 / 12.0),
                (-1.0, -8.0 / 12.0),
                (-2.0, 1.0 / 12.0),
            ],
        };
        let mut acc: Option<DenseTensor<R>> = None;
        for &(a, wa) in stencil {
            for &(b, wb) in stencil {
                let mut p = x.to_vec();
                p[i] += R::lit(a) * hi;
                p[j] += R::lit(b) * hj;
                let term = f(&p)?.scale(R::lit(wa * wb));
                acc = Some(match acc {
                    Some(s) => s.add(&term)?,
                    None => term,
                });
            }
        }
        Ok(acc.expect("non-empty stencil").scale((hi * hj).recip()))
    }
}

/// Metric and connection of a coordinate system, point by point.
pub trait Geometry<R: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn metric_at(&self, y: &[R]) -> Result<Metric<R>>;

    /// `None` means the connection vanishes identically (Cartesian coordinates).
    fn christoffel_at(&self, y: &[R]) -> Result<Option<ChristoffelArray<R>>>;

    /// Fails with a domain error at points where the coordinates are not usable.
    fn check_point(&self, _y: &[R]) -> Result<()> {
        Ok(())
    }
}

/// Cartesian coordinates with a constant metric.
#[derive(Clone, Debug)]
pub struct Flat<R> {
    metric: Metric<R>,
}

impl<R: Real> Flat<R> {
    pub fn new(metric: Metric<R>) -> Self {
        Self { metric }
    }

    pub fn orthonormal(dim: usize) -> Self {
        Self { metric: Metric::identity(dim) }
    }
}

impl<R: Real> Geometry<R> for Flat<R> {
    fn dim(&self) -> usize {
        self.metric.dim()
    }

    fn metric_at(&self, _y: &[R]) -> Result<Metric<R>> {
        Ok(self.metric.clone())
    }

    fn christoffel_at(&self, _y: &[R]) -> Result<Option<ChristoffelArray<R>>> {
        Ok(None)
    }
}

impl<R: Real, G: Geometry<R>> Geometry<R> for Arc<G> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn metric_at(&self, y: &[R]) -> Result<Metric<R>> {
        (**self).metric_at(y)
    }

    fn christoffel_at(&self, y: &[R]) -> Result<Option<ChristoffelArray<R>>> {
        (**self).christoffel_at(y)
    }

    fn check_point(&self, y: &[R]) -> Result<()> {
        (**self).check_point(y)
    }
}

fn check_dims<R: Real, G: Geometry<R>>(geometry: &G, field: &TensorField<R>) -> Result<()> {
    if geometry.dim() != field.dim() {
        return Err(Error::shape(format!(
            "field of dimension {} in a geometry of dimension {}",
            field.dim(),
            geometry.dim()
        )));
    }
    Ok(())
}

/// Partial derivatives honouring the geometry's domain at every stencil point.
fn partials_in<R: Real, G: Geometry<R>>(
    geometry: &G,
    field: &TensorField<R>,
    y: &[R],
    t: R,
    scheme: &DifferentiationScheme<R>,
) -> Result<Vec<DenseTensor<R>>> {
    geometry.check_point(y)?;
    if field.has_analytic_partials() {
        field.partials_at(y, t, scheme)
    } else {
        field.fd_partials(y, t, scheme, &|p| geometry.check_point(p))
    }
}

/// Connection correction `Σ_α Γ^{i_α}_{p m} X^{..m..} − Σ_α Γ^{n}_{p j_α} X_{..n..}`
/// for one derivative direction `p`, added to `partial`.
fn add_connection_terms<R: Real>(
    gamma: &ChristoffelArray<R>,
    x: &DenseTensor<R>,
    p: usize,
    partial: &DenseTensor<R>,
) -> Result<DenseTensor<R>> {
    let dim = x.dim();
    let Valency { upper: r, lower: s } = x.valency();
    let order = r + s;
    let mut digits = vec![0; order];
    let mut src = vec![0; order];
    let mut out = Vec::with_capacity(x.len());
    for flat in 0..x.len() {
        decompose(flat, dim, &mut digits);
        let mut value = partial.components()[flat];
        for alpha in 0..order {
            src.copy_from_slice(&digits);
            let mut correction = R::zero();
            for m in 0..dim {
                src[alpha] = m;
                let xv = x.at(&src);
                if alpha < r {
                    correction += gamma.at(digits[alpha], p, m) * xv;
                } else {
                    correction -= gamma.at(m, p, digits[alpha]) * xv;
                }
            }
            value += correction;
        }
        out.push(value);
    }
    DenseTensor::from_components(x.valency(), dim, out)
}

/// `∇_p X` in the geometry's coordinates; the new covariant slot is the first lower slot.
pub fn covariant_derivative_in<R: Real, G: Geometry<R> + Clone + 'static>(
    geometry: &G,
    field: &TensorField<R>,
    scheme: &DifferentiationScheme<R>,
) -> Result<TensorField<R>> {
    check_dims(geometry, field)?;
    let valency = Valency::new(field.valency().upper, field.valency().lower + 1);
    valency.check_capacity()?;
    let (geometry, field, scheme) = (geometry.clone(), field.clone(), *scheme);
    Ok(TensorField::with_parameter(valency, field.dim(), move |y, t| {
        let parts = partials_in(&geometry, &field, y, t, &scheme)?;
        let parts = match geometry.christoffel_at(y)? {
            None => parts,
            Some(gamma) => {
                let x = field.evaluate_at(y, t)?;
                parts
                    .iter()
                    .enumerate()
                    .map(|(p, d)| add_connection_terms(&gamma, &x, p, d))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        DenseTensor::stack_first_lower(&parts)
    }))
}

/// Covector gradient `a_q = ∇_q φ`.
pub fn gradient_covector_in<R: Real, G: Geometry<R> + Clone + 'static>(
    geometry: &G,
    phi: &TensorField<R>,
    scheme: &DifferentiationScheme<R>,
) -> Result<TensorField<R>> {
    expect_scalar(phi)?;
    covariant_derivative_in(geometry, phi, scheme)
}

/// Vector gradient `a^q = Σ g^{qi} ∇_i φ`.
pub fn gradient_vector_in<R: Real, G: Geometry<R> + Clone + 'static>(
    geometry: &G,
    phi: &TensorField<R>,
    scheme: &DifferentiationScheme<R>,
) -> Result<TensorField<R>> {
    let covector = gradient_covector_in(geometry, phi, scheme)?;
    let geometry = geometry.clone();
    Ok(TensorField::with_parameter(Valency::VECTOR, phi.dim(), move |y, t| {
        let a = covector.evaluate_at(y, t)?;
        geometry.metric_at(y)?.raise_index(&a, 1)
    }))
}

/// Contraction of `∇X` over the derivative slot and the `slot`-th upper index.
pub fn divergence_in<R: Real, G: Geometry<R> + Clone + 'static>(
    geometry: &G,
    field: &TensorField<R>,
    slot: usize,
    scheme: &DifferentiationScheme<R>,
) -> Result<TensorField<R>> {
    let Valency { upper: r, lower: s } = field.valency();
    if r == 0 {
        return Err(Error::shape("divergence needs a field with at least one upper index"));
    }
    if slot == 0 || slot > r {
        return Err(Error::index(format!("upper slot {slot} is outside 1..={r}")));
    }
    let nabla = covariant_derivative_in(geometry, field, scheme)?;
    Ok(TensorField::with_parameter(Valency::new(r - 1, s), field.dim(), move |y, t| {
        nabla.evaluate_at(y, t)?.contract(slot, 1)
    }))
}

/// `Δφ = Σ g^{ij} ∇_i ∇_j φ` with `∇_i ∇_j φ = ∂_i ∂_j φ − Γ^k_{ij} ∂_k φ`.
pub fn laplacian_in<R: Real, G: Geometry<R> + Clone + 'static>(
    geometry: &G,
    phi: &TensorField<R>,
    scheme: &DifferentiationScheme<R>,
) -> Result<TensorField<R>> {
    expect_scalar(phi)?;
    check_dims(geometry, phi)?;
    let (geometry, phi, scheme) = (geometry.clone(), phi.clone(), *scheme);
    let dim = phi.dim();
    Ok(TensorField::with_parameter(Valency::SCALAR, dim, move |y, t| {
        let g = geometry.metric_at(y)?;
        let hessian = hessian_in(&geometry, &phi, y, t, &scheme)?;
        let mut covariant = hessian;
        if let Some(gamma) = geometry.christoffel_at(y)? {
            let grad = partials_in(&geometry, &phi, y, t, &scheme)?;
            let grad: Vec<R> = grad.iter().map(|d| d.components()[0]).collect();
            for i in 0..dim {
                for j in 0..dim {
                    let corr: R = (0..dim).map(|k| gamma.at(k, i, j) * grad[k]).sum();
                    covariant[(i, j)] -= corr;
                }
            }
        }
        let mut sum = R::zero();
        for i in 0..dim {
            for j in 0..dim {
                sum += g.dual()[(i, j)] * covariant[(i, j)];
            }
        }
        Ok(DenseTensor::scalar_in(sum, dim))
    }))
}

/// Matrix of second partial derivatives of a scalar field.
fn hessian_in<R: Real, G: Geometry<R>>(
    geometry: &G,
    phi: &TensorField<R>,
    y: &[R],
    t: R,
    scheme: &DifferentiationScheme<R>,
) -> Result<Matrix<R>> {
    geometry.check_point(y)?;
    let dim = phi.dim();
    let mut h = Matrix::zeros(dim);
    if phi.has_analytic_partials() {
        // Differentiate the analytic gradient once more.
        for j in 0..dim {
            let d = scheme.derivative(
                &|p: &[R]| {
                    geometry.check_point(p)?;
                    let parts = phi.partials_at(p, t, scheme)?;
                    let comps: Vec<R> = parts.iter().map(|d| d.components()[0]).collect();
                    Ok(DenseTensor::covector(&comps))
                },
                y,
                j,
            )?;
            for i in 0..dim {
                h[(i, j)] = d.components()[i];
            }
        }
        return Ok(h.add(&h.transpose()).scale(R::lit(0.5)));
    }
    let f = |p: &[R]| {
        geometry.check_point(p)?;
        phi.evaluate_at(p, t)
    };
    for i in 0..dim {
        for j in i..dim {
            let v = scheme.second_derivative(&f, y, i, j)?.components()[0];
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

/// `(rot X)^r = Σ g^{ri} ω_{ijk} ∇^j X^k` with `∇^j = Σ g^{jp} ∇_p`.
pub fn rotor_in<R: Real, G: Geometry<R> + Clone + 'static>(
    geometry: &G,
    field: &TensorField<R>,
    scheme: &DifferentiationScheme<R>,
) -> Result<TensorField<R>> {
    if field.valency() != Valency::VECTOR {
        return Err(Error::shape(format!("rotor needs a vector field, got {}", field.valency())));
    }
    if field.dim() != 3 {
        return Err(Error::UnsupportedDimension { found: field.dim(), expected: 3 });
    }
    let nabla = covariant_derivative_in(geometry, field, scheme)?;
    let geometry = geometry.clone();
    Ok(TensorField::with_parameter(Valency::VECTOR, 3, move |y, t| {
        let g = geometry.metric_at(y)?;
        let omega = g.volume_tensor()?;
        // ∇_p X^k is stored as Y^k_p.
        let d = nabla.evaluate_at(y, t)?;
        let mut raised = Matrix::zeros(3); // raised[(j, k)] = ∇^j X^k
        for j in 0..3 {
            for k in 0..3 {
                raised[(j, k)] = (0..3).map(|p| g.dual()[(j, p)] * d.at(&[k, p])).sum();
            }
        }
        let mut lowered = [R::zero(); 3];
        for (i, a) in lowered.iter_mut().enumerate() {
            for j in 0..3 {
                for k in 0..3 {
                    *a += omega.at(&[i, j, k]) * raised[(j, k)];
                }
            }
        }
        Ok(DenseTensor::vector(&g.dual().mul_vec(&lowered)))
    }))
}

fn expect_scalar<R: Real>(phi: &TensorField<R>) -> Result<()> {
    if phi.valency() != Valency::SCALAR {
        return Err(Error::shape(format!("expected a scalar field, got {}", phi.valency())));
    }
    Ok(())
}

// Cartesian entry points.

/// `∇X` in Cartesian coordinates, where `∇_q = ∂/∂x^q`.
pub fn nabla<R: Real>(field: &TensorField<R>, scheme: &DifferentiationScheme<R>) -> Result<TensorField<R>> {
    covariant_derivative_in(&Flat::orthonormal(field.dim()), field, scheme)
}

/// `∂X/∂t` for a field depending on an external parameter; same valency.
pub fn parameter_derivative<R: Real>(
    field: &TensorField<R>,
    scheme: &DifferentiationScheme<R>,
) -> TensorField<R> {
    let (inner, scheme) = (field.clone(), *scheme);
    TensorField::with_parameter(field.valency(), field.dim(), move |x, t| {
        scheme.derivative_scalar_arg(&|tt| inner.evaluate_at(x, tt), t)
    })
}

pub fn gradient_covector<R: Real>(
    phi: &TensorField<R>,
    scheme: &DifferentiationScheme<R>,
) -> Result<TensorField<R>> {
    gradient_covector_in(&Flat::orthonormal(phi.dim()), phi, scheme)
}

pub fn gradient_vector<R: Real>(
    g: &Metric<R>,
    phi: &TensorField<R>,
    scheme: &DifferentiationScheme<R>,
) -> Result<TensorField<R>> {
    gradient_vector_in(&Flat::new(g.clone()), phi, scheme)
}

pub fn divergence<R: Real>(
    field: &TensorField<R>,
    slot: usize,
    scheme: &DifferentiationScheme<R>,
) -> Result<TensorField<R>> {
    divergence_in(&Flat::orthonormal(field.dim()), field, slot, scheme)
}

pub fn laplacian<R: Real>(
    g: &Metric<R>,
    phi: &TensorField<R>,
    scheme: &DifferentiationScheme<R>,
) -> Result<TensorField<R>> {
    laplacian_in(&Flat::new(g.clone()), phi, scheme)
}

/// Sum of pure second derivatives, the orthonormal-coordinates Laplacian.
pub fn laplacian_standard<R: Real>(
    phi: &TensorField<R>,
    scheme: &DifferentiationScheme<R>,
) -> Result<TensorField<R>> {
    expect_scalar(phi)?;
    let (phi, scheme) = (phi.clone(), *scheme);
    let dim = phi.dim();
    Ok(TensorField::with_parameter(Valency::SCALAR, dim, move |x, t| {
        let f = |p: &[R]| phi.evaluate_at(p, t);
        let mut sum = R::zero();
        for i in 0..dim {
            sum += scheme.second_derivative(&f, x, i, i)?.components()[0];
        }
        Ok(DenseTensor::scalar_in(sum, dim))
    }))
}

/// `□φ = (1/c²) ∂²φ/∂t² − Δφ` with the orthonormal metric.
pub fn dalembert<R: Real>(
    c: R,
    phi: &TensorField<R>,
    scheme: &DifferentiationScheme<R>,
) -> Result<TensorField<R>> {
    if !(c > R::zero()) || !c.is_finite() {
        return Err(Error::Parameter(format!("wave speed {c} must be positive")));
    }
    expect_scalar(phi)?;
    let (phi, scheme) = (phi.clone(), *scheme);
    let dim = phi.dim();
    let metric = Metric::identity(dim);
    Ok(TensorField::with_parameter(Valency::SCALAR, dim, move |x, t| {
        let dtt = scheme
            .second_derivative_scalar_arg(&|tt| phi.evaluate_at(x, tt), t)?
            .components()[0];
        let lap = laplacian(&metric, &phi.at_parameter(t), &scheme)?.evaluate(x)?.components()[0];
        Ok(DenseTensor::scalar_in(dtt / (c * c) - lap, dim))
    }))
}

pub fn rotor<R: Real>(
    g: &Metric<R>,
    field: &TensorField<R>,
    scheme: &DifferentiationScheme<R>,
) -> Result<TensorField<R>> {
    rotor_in(&Flat::new(g.clone()), field, scheme)
}

/// Determinant-rule curl `(∂₂X³ − ∂₃X², ∂₃X¹ − ∂₁X³, ∂₁X² − ∂₂X¹)`.
pub fn rotor_standard<R: Real>(
    field: &TensorField<R>,
    scheme: &DifferentiationScheme<R>,
) -> Result<TensorField<R>> {
    if field.valency() != Valency::VECTOR || field.dim() != 3 {
        return Err(Error::shape("determinant-rule curl needs a 3-dimensional vector field"));
    }
    let (field, scheme) = (field.clone(), *scheme);
    Ok(TensorField::with_parameter(Valency::VECTOR, 3, move |x, t| {
        let d = field.partials_at(x, t, &scheme)?;
        let part = |q: usize, k: usize| d[q].components()[k];
        Ok(DenseTensor::vector(&[
            part(1, 2) - part(2, 1),
            part(2, 0) - part(0, 2),
            part(0, 1) - part(1, 0),
        ]))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scheme() -> DifferentiationScheme<f64> {
        DifferentiationScheme::default()
    }

    fn position() -> TensorField<f64> {
        TensorField::vector(3, |x| x.to_vec())
    }

    #[test]
    fn nabla_examples() {
        let c = TensorField::constant(DenseTensor::vector(&[1.0, 2.0, 3.0]));
        let d = nabla(&c, &scheme()).unwrap().evaluate(&[0.5, 1.0, -2.0]).unwrap();
        assert_eq!(d.valency(), Valency::OPERATOR);
        assert_eq!(d.max_abs(), 0.0);

        let phi = TensorField::scalar(3, |x| x[0]);
        let g = nabla(&phi, &scheme()).unwrap().evaluate(&[0.3, 4.0, 1.0]).unwrap();
        assert_eq!(g.valency(), Valency::COVECTOR);
        assert!(g.max_abs_diff(&DenseTensor::covector(&[1.0, 0.0, 0.0])).unwrap() <= 1e-9);

        let d = nabla(&position(), &scheme()).unwrap().evaluate(&[1.5, -2.0, 0.25]).unwrap();
        assert!(d.max_abs_diff(&crate::metric::kronecker(3)).unwrap() <= 1e-9);
    }

    #[test]
    fn nabla_slot_is_first_lower() {
        // X_j = x^1 δ_{j2}: ∇_q X_j nonzero only at (q, j) = (1, 2)
        let f = TensorField::new(Valency::COVECTOR, 3, |x| DenseTensor::covector(&[0.0, x[0], 0.0]));
        let d = nabla(&f, &scheme()).unwrap().evaluate(&[1.0, 1.0, 1.0]).unwrap();
        assert!((d.get(&[], &[1, 2]).unwrap() - 1.0).abs() <= 1e-9);
        assert!(d.get(&[], &[2, 1]).unwrap().abs() <= 1e-9);
    }

    #[test]
    fn parameter_derivatives() {
        let c = DenseTensor::operator(&Matrix::from_rows(&[[1.0, 2.0, 0.0], [0.0, -1.0, 3.0], [0.5, 0.0, 1.0]]).unwrap());
        let still = TensorField::constant(c.clone());
        let d = parameter_derivative(&still, &scheme()).evaluate_at(&[0.0; 3], 2.0).unwrap();
        assert_eq!(d.max_abs(), 0.0);

        let cc = c.clone();
        let linear = TensorField::with_parameter(Valency::OPERATOR, 3, move |_, t| Ok(cc.scale(t)));
        let d = parameter_derivative(&linear, &scheme()).evaluate_at(&[0.0; 3], 0.7).unwrap();
        assert!(d.max_abs_diff(&c).unwrap() <= 1e-9);

        let cc = c.clone();
        let quad = TensorField::with_parameter(Valency::OPERATOR, 3, move |_, t| Ok(cc.scale(t * t)));
        let d = parameter_derivative(&quad, &scheme()).at_parameter(3.0).evaluate(&[0.0; 3]).unwrap();
        assert!(d.max_abs_diff(&c.scale(6.0)).unwrap() <= 1e-5);
    }

    #[test]
    fn gradients() {
        let constant = TensorField::scalar(3, |_| 4.0);
        let g = gradient_covector(&constant, &scheme()).unwrap().evaluate(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(g.max_abs(), 0.0);

        let phi = TensorField::scalar(3, |x| x[0] * x[1]);
        let p = [0.5, -1.5, 2.0];
        let cov = gradient_covector(&phi, &scheme()).unwrap().evaluate(&p).unwrap();
        let vec = gradient_vector(&Metric::identity(3), &phi, &scheme()).unwrap().evaluate(&p).unwrap();
        assert!(vec.max_abs_diff(&DenseTensor::vector(&[-1.5, 0.5, 0.0])).unwrap() <= 1e-9);
        assert_eq!(cov.components(), vec.components());
    }

    #[test]
    fn gradient_vector_raises_with_metric() {
        let g = Metric::new(Matrix::from_rows(&[[2.0, 0.5, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, 3.0]]).unwrap()).unwrap();
        let phi = TensorField::scalar(3, |x| x[0] + 2.0 * x[1] - x[2]);
        let v = gradient_vector(&g, &phi, &scheme()).unwrap().evaluate(&[0.0; 3]).unwrap();
        let expected = g.dual().mul_vec(&[1.0, 2.0, -1.0]);
        assert!(crate::linalg::max_abs_diff(v.components(), &expected) <= 1e-8);
    }

    #[test]
    fn divergences() {
        let d = divergence(&position(), 1, &scheme()).unwrap().evaluate(&[1.0, 2.0, 3.0]).unwrap();
        assert!((d.scalar_value().unwrap() - 3.0).abs() <= 1e-9);
        let c = TensorField::constant(DenseTensor::vector(&[1.0, 1.0, 1.0]));
        assert_eq!(divergence(&c, 1, &scheme()).unwrap().evaluate(&[0.0; 3]).unwrap().scalar_value().unwrap(), 0.0);
        let sq = TensorField::vector(3, |x| vec![x[0] * x[0], 0.0, 0.0]);
        let d = divergence(&sq, 1, &scheme()).unwrap().evaluate(&[2.0, 0.0, 0.0]).unwrap();
        assert!((d.scalar_value().unwrap() - 4.0).abs() <= 1e-5);
        let phi = TensorField::scalar(3, |x| x[0]);
        assert!(matches!(divergence(&phi, 1, &scheme()), Err(Error::Shape(_))));
    }

    #[test]
    fn laplacians() {
        let id = Metric::identity(3);
        let r2 = TensorField::scalar(3, |x| x.iter().map(|v| v * v).sum());
        let v = laplacian(&id, &r2, &scheme()).unwrap().evaluate(&[0.3, -2.0, 1.0]).unwrap();
        assert!((v.scalar_value().unwrap() - 6.0).abs() <= 1e-6);
        let lin = TensorField::scalar(3, |x| 2.0 * x[0] - x[1] + 0.5 * x[2]);
        let v = laplacian(&id, &lin, &scheme()).unwrap().evaluate(&[1.0, 2.0, 3.0]).unwrap();
        assert!(v.scalar_value().unwrap().abs() <= 1e-6);
        let cube = TensorField::scalar(3, |x: &[f64]| x[0].powi(3));
        let v = laplacian(&id, &cube, &scheme()).unwrap().evaluate(&[2.0, 0.0, 0.0]).unwrap();
        assert!((v.scalar_value().unwrap() - 12.0).abs() <= 1e-3);
    }

    #[test]
    fn dalembert_cases() {
        let c = 2.0;
        let wave = TensorField::scalar_with_parameter(3, move |x: &[f64], t: f64| (x[0] - c * t).powi(2));
        let v = dalembert(c, &wave, &scheme()).unwrap().evaluate_at(&[0.4, 1.0, -1.0], 0.3).unwrap();
        assert!(v.scalar_value().unwrap().abs() <= 1e-3);

        let stat = TensorField::scalar(3, |x| x[1] * x[1]);
        let v = dalembert(c, &stat, &scheme()).unwrap().evaluate(&[0.0, 1.0, 0.0]).unwrap();
        assert!((v.scalar_value().unwrap() + 2.0).abs() <= 1e-5);

        let tt = TensorField::scalar_with_parameter(3, |_, t| t * t);
        let v = dalembert(c, &tt, &scheme()).unwrap().evaluate_at(&[0.0; 3], 1.0).unwrap();
        assert!((v.scalar_value().unwrap() - 2.0 / (c * c)).abs() <= 1e-5);

        assert!(matches!(dalembert(0.0, &tt, &scheme()), Err(Error::Parameter(_))));
        assert!(matches!(dalembert(-1.0, &tt, &scheme()), Err(Error::Parameter(_))));
    }

    #[test]
    fn rotors() {
        let id = Metric::identity(3);
        let c = TensorField::constant(DenseTensor::vector(&[1.0, -1.0, 2.0]));
        assert_eq!(rotor(&id, &c, &scheme()).unwrap().evaluate(&[0.0; 3]).unwrap().max_abs(), 0.0);

        let swirl = TensorField::vector(3, |x: &[f64]| vec![-x[1], x[0], 0.0]);
        let r = rotor(&id, &swirl, &scheme()).unwrap().evaluate(&[0.3, 1.0, -2.0]).unwrap();
        assert!(r.max_abs_diff(&DenseTensor::vector(&[0.0, 0.0, 2.0])).unwrap() <= 1e-8);

        let phi = TensorField::scalar(3, |x: &[f64]| x[0] * x[0] * x[1] + x[2].powi(3) * x[0]);
        let grad = gradient_vector(&id, &phi, &scheme()).unwrap();
        let r = rotor(&id, &grad, &scheme()).unwrap().evaluate(&[0.5, -0.7, 1.1]).unwrap();
        assert!(r.max_abs() <= 1e-4);
    }

    #[test]
    fn analytic_partials_are_preferred_and_checked() {
        let f = TensorField::scalar(3, |x| x[0] * x[0] + x[1]).with_partials(|x, _| {
            Ok(vec![
                DenseTensor::scalar_in(2.0 * x[0], 3),
                DenseTensor::scalar_in(1.0, 3),
                DenseTensor::scalar_in(0.0, 3),
            ])
        });
        let pts = vec![vec![0.1, 0.2, 0.3], vec![-1.0, 2.0, 0.5]];
        assert!(f.check_partials(&pts, &scheme()).unwrap() <= 1e-4);
        let g = nabla(&f, &scheme()).unwrap().evaluate(&[1.5, 0.0, 0.0]).unwrap();
        assert_eq!(g.components(), &[3.0, 1.0, 0.0]);

        let wrong = f.clone().with_partials(|_, _| {
            Ok(vec![DenseTensor::scalar_in(0.0, 3); 3])
        });
        assert!(wrong.check_partials(&pts, &scheme()).unwrap() > 1e-4);
    }

    #[test]
    fn field_shape_is_enforced() {
        let bad = TensorField::new(Valency::VECTOR, 3, |_| DenseTensor::covector(&[0.0; 3]));
        assert!(matches!(bad.evaluate(&[0.0; 3]), Err(Error::Shape(_))));
        assert!(matches!(position().evaluate(&[0.0; 2]), Err(Error::Shape(_))));
    }

    #[test]
    fn fixed_step_must_be_positive() {
        assert!(DifferentiationScheme::<f64>::with_step(FdOrder::Central2, 0.0).is_err());
        assert!(DifferentiationScheme::<f64>::with_step(FdOrder::Central4, -1e-3).is_err());
        assert!(DifferentiationScheme::<f64>::with_step(FdOrder::Central4, 1e-3).is_ok());
    }

    #[test]
    fn fourth_order_converges_faster() {
        let phi = TensorField::scalar(3, |x: &[f64]| x[0].sin());
        let x = [0.7, 0.0, 0.0];
        let exact = 0.7f64.cos();
        let err = |order, h| {
            let s = DifferentiationScheme::with_step(order, h).unwrap();
            let g = gradient_covector(&phi, &s).unwrap().evaluate(&x).unwrap();
            (g.components()[0] - exact).abs()
        };
        let shrink2 = err(FdOrder::Central2, 0.1) / err(FdOrder::Central2, 0.05);
        let shrink4 = err(FdOrder::Central4, 0.1) / err(FdOrder::Central4, 0.05);
        // Observed orders: about 2 and about 4.
        assert!(shrink2 > 3.9 && shrink2 < 4.1, "second-order shrink {shrink2}");
        assert!(shrink4 > 15.0, "fourth-order shrink {shrink4}");
        assert!(shrink4.log2() - shrink2.log2() >= 1.9);
    }
}
