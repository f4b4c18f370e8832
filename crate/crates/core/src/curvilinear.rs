//! Curvilinear coordinate charts, moving frames, Christoffel symbols and the
//! covariant derivative.
//!
//! A chart maps curvilinear coordinates `y` to ambient Cartesian coordinates
//! `x` (orthonormal). Throughout, the ambient basis is the "old" basis and
//! the moving frame at `y` the "new" one, so `S^i_j = ∂x^i/∂y^j` and
//! `T^i_j = ∂y^i/∂x^j`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{self, DifferentiationScheme, Geometry, TensorField};
use crate::formula::{compile_all, ComponentSpec, Formula, Variables};
use crate::frames::Basis;
use crate::linalg::Matrix;
use crate::metric::Metric;
use crate::scalar::Real;
use crate::tensor::{DenseTensor, Direction, TransitionPair, Valency};

/// Tolerance on `T·S − I` when assembling the Jacobi pair at a point.
pub const JACOBIAN_TOLERANCE: f64 = 1e-6;

/// Christoffel symbols `Γ^k_{ij}` at one point, stored as `values[(k*n + i)*n + j]`.
#[derive(Clone, PartialEq)]
pub struct ChristoffelArray<R> {
    dim: usize,
    values: Vec<R>,
}

impl<R: Real> ChristoffelArray<R> {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, values: vec![R::zero(); dim * dim * dim] }
    }

    /// Builds from a 0-based generator `f(k, i, j)`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize, usize) -> R) -> Self {
        let mut values = Vec::with_capacity(dim * dim * dim);
        for k in 0..dim {
            for i in 0..dim {
                for j in 0..dim {
                    values.push(f(k, i, j));
                }
            }
        }
        Self { dim, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[R] {
        &self.values
    }

    /// 0-based access to `Γ^k_{ij}`.
    pub fn at(&self, k: usize, i: usize, j: usize) -> R {
        self.values[(k * self.dim + i) * self.dim + j]
    }

    /// 1-based access to `Γ^k_{ij}`.
    pub fn get(&self, k: usize, i: usize, j: usize) -> Result<R> {
        let n = self.dim;
        if [k, i, j].iter().any(|&v| v == 0 || v > n) {
            return Err(Error::index(format!("Christoffel index ({k},{i},{j}) outside 1..={n}")));
        }
        Ok(self.at(k - 1, i - 1, j - 1))
    }

    /// `max |Γ^k_{ij} − Γ^k_{ji}|`.
    pub fn max_asymmetry(&self) -> R {
        let n = self.dim;
        let mut worst = R::zero();
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    worst = worst.max((self.at(k, i, j) - self.at(k, j, i)).abs());
                }
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Self) -> R {
        crate::linalg::max_abs_diff(&self.values, &other.values)
    }

    /// 1-based `(k, i, j, Γ)` entries with `|Γ| > threshold`, in index order.
    pub fn nonzero(&self, threshold: R) -> Vec<(usize, usize, usize, R)> {
        let n = self.dim;
        let mut out = Vec::new();
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let v = self.at(k, i, j);
                    if v.abs() > threshold {
                        out.push((k + 1, i + 1, j + 1, v));
                    }
                }
            }
        }
        out
    }
}

impl<R: Real> fmt::Debug for ChristoffelArray<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ChristoffelArray[dim={}]{:?}", self.dim, self.values)
    }
}

type MapFn<R> = dyn Fn(&[R]) -> Vec<R> + Send + Sync;
type JacFn<R> = dyn Fn(&[R]) -> Matrix<R> + Send + Sync;
type SecondFn<R> = dyn Fn(&[R]) -> Vec<Matrix<R>> + Send + Sync;
type DomainFn<R> = dyn Fn(&[R]) -> bool + Send + Sync;

/// Invertible map between curvilinear and ambient Cartesian coordinates.
#[derive(Clone)]
pub struct Chart<R> {
    name: String,
    dim: usize,
    forward: Arc<MapFn<R>>,
    inverse: Arc<MapFn<R>>,
    jac_s: Option<Arc<JacFn<R>>>,
    jac_t: Option<Arc<JacFn<R>>>,
    second: Option<Arc<SecondFn<R>>>,
    domain: Arc<DomainFn<R>>,
    domain_text: String,
    sample_box: Vec<(f64, f64)>,
}

impl<R: Real> fmt::Debug for Chart<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Chart")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("analytic_jacobians", &self.has_analytic_jacobians())
            .field("domain", &self.domain_text)
            .finish()
    }
}

impl<R: Real> Chart<R> {
    /// Chart with numerical Jacobians, the whole space as domain and a
    /// `[-1, 1]` sampling box.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        forward: impl Fn(&[R]) -> Vec<R> + Send + Sync + 'static,
        inverse: impl Fn(&[R]) -> Vec<R> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            forward: Arc::new(forward),
            inverse: Arc::new(inverse),
            jac_s: None,
            jac_t: None,
            second: None,
            domain: Arc::new(|_| true),
            domain_text: "all points".into(),
            sample_box: vec![(-1.0, 1.0); dim],
        }
    }

    /// Analytic `S(y)`.
    pub fn with_jacobian(mut self, s: impl Fn(&[R]) -> Matrix<R> + Send + Sync + 'static) -> Self {
        self.jac_s = Some(Arc::new(s));
        self
    }

    /// Analytic `T(x)`, as a function of the ambient point.
    pub fn with_inverse_jacobian(mut self, t: impl Fn(&[R]) -> Matrix<R> + Send + Sync + 'static) -> Self {
        self.jac_t = Some(Arc::new(t));
        self
    }

    /// Analytic `H_q[(i, j)] = ∂²x^q/∂y^i∂y^j`.
    pub fn with_second_derivatives(
        mut self,
        h: impl Fn(&[R]) -> Vec<Matrix<R>> + Send + Sync + 'static,
    ) -> Self {
        self.second = Some(Arc::new(h));
        self
    }

    pub fn with_domain(
        mut self,
        description: impl Into<String>,
        predicate: impl Fn(&[R]) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.domain = Arc::new(predicate);
        self.domain_text = description.into();
        self
    }

    /// Box of curvilinear coordinates used for random sampling.
    pub fn with_sample_box(mut self, sample_box: Vec<(f64, f64)>) -> Self {
        self.sample_box = sample_box;
        self
    }

    /// `y = x`.
    pub fn cartesian(dim: usize) -> Self {
        let n = dim;
        Self::new("cartesian", dim, |y| y.to_vec(), |x| x.to_vec())
            .with_jacobian(move |_| Matrix::identity(n))
            .with_inverse_jacobian(move |_| Matrix::identity(n))
            .with_second_derivatives(move |_| vec![Matrix::zeros(n); n])
            .with_sample_box(vec![(-2.0, 2.0); dim])
    }

    /// `y = (r, θ, z)`, `x = (r cos θ, r sin θ, z)`, domain `r > 0`.
    pub fn cylindrical() -> Self {
        let forward = |y: &[R]| {
            let (r, th, z) = (y[0], y[1], y[2]);
            vec![r * th.cos(), r * th.sin(), z]
        };
        let inverse = |x: &[R]| vec![x[0].hypot(x[1]), x[1].atan2(x[0]), x[2]];
        let s = |y: &[R]| {
            let (r, th) = (y[0], y[1]);
            let (s, c) = th.sin_cos();
            let (o, l) = (R::zero(), R::one());
            m3([[c, -r * s, o], [s, r * c, o], [o, o, l]])
        };
        let t = |x: &[R]| {
            let rho2 = x[0] * x[0] + x[1] * x[1];
            let rho = rho2.sqrt();
            let (o, l) = (R::zero(), R::one());
            m3([[x[0] / rho, x[1] / rho, o], [-x[1] / rho2, x[0] / rho2, o], [o, o, l]])
        };
        let h = |y: &[R]| {
            let (r, th) = (y[0], y[1]);
            let (s, c) = th.sin_cos();
            let o = R::zero();
            vec![
                m3([[o, -s, o], [-s, -r * c, o], [o, o, o]]),
                m3([[o, c, o], [c, -r * s, o], [o, o, o]]),
                Matrix::zeros(3),
            ]
        };
        let pi = std::f64::consts::PI;
        Self::new("cylindrical", 3, forward, inverse)
            .with_jacobian(s)
            .with_inverse_jacobian(t)
            .with_second_derivatives(h)
            .with_domain("r > 0", |y: &[R]| y[0] > R::zero() && y.iter().all(|v| v.is_finite()))
            .with_sample_box(vec![(0.25, 3.0), (-pi + 0.05, pi - 0.05), (-2.0, 2.0)])
    }

    /// `y = (r, θ, φ)` with `θ` the polar angle from `+z` and `φ` the azimuth:
    /// `x = (r sin θ cos φ, r sin θ sin φ, r cos θ)`, domain `r > 0, 0 < θ < π`.
    pub fn spherical() -> Self {
        let forward = |y: &[R]| {
            let (r, th, ph) = (y[0], y[1], y[2]);
            let (st, ct) = th.sin_cos();
            let (sp, cp) = ph.sin_cos();
            vec![r * st * cp, r * st * sp, r * ct]
        };
        let inverse = |x: &[R]| {
            let rho = x[0].hypot(x[1]);
            vec![rho.hypot(x[2]), rho.atan2(x[2]), x[1].atan2(x[0])]
        };
        let s = |y: &[R]| {
            let (r, th, ph) = (y[0], y[1], y[2]);
            let (st, ct) = th.sin_cos();
            let (sp, cp) = ph.sin_cos();
            m3([
                [st * cp, r * ct * cp, -r * st * sp],
                [st * sp, r * ct * sp, r * st * cp],
                [ct, -r * st, R::zero()],
            ])
        };
        let t = |x: &[R]| {
            let rho2 = x[0] * x[0] + x[1] * x[1];
            let rho = rho2.sqrt();
            let r2 = rho2 + x[2] * x[2];
            let r = r2.sqrt();
            m3([
                [x[0] / r, x[1] / r, x[2] / r],
                [x[0] * x[2] / (r2 * rho), x[1] * x[2] / (r2 * rho), -rho / r2],
                [-x[1] / rho2, x[0] / rho2, R::zero()],
            ])
        };
        let h = |y: &[R]| {
            let (r, th, ph) = (y[0], y[1], y[2]);
            let (st, ct) = th.sin_cos();
            let (sp, cp) = ph.sin_cos();
            let o = R::zero();
            vec![
                m3([
                    [o, ct * cp, -st * sp],
                    [ct * cp, -r * st * cp, -r * ct * sp],
                    [-st * sp, -r * ct * sp, -r * st * cp],
                ]),
                m3([
                    [o, ct * sp, st * cp],
                    [ct * sp, -r * st * sp, r * ct * cp],
                    [st * cp, r * ct * cp, -r * st * sp],
                ]),
                m3([[o, -st, o], [-st, -r * ct, o], [o, o, o]]),
            ]
        };
        let pi = std::f64::consts::PI;
        Self::new("spherical", 3, forward, inverse)
            .with_jacobian(s)
            .with_inverse_jacobian(t)
            .with_second_derivatives(h)
            .with_domain("r > 0 and 0 < theta < pi", |y: &[R]| {
                y[0] > R::zero() && y[1] > R::zero() && y[1] < R::PI() && y.iter().all(|v| v.is_finite())
            })
            .with_sample_box(vec![(0.25, 3.0), (0.15, pi - 0.15), (-pi + 0.05, pi - 0.05)])
    }

    /// Built-in chart by name: `cartesian` (or `identity`), `cylindrical`, `spherical`.
    pub fn builtin(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "cartesian" | "identity" => Ok(Self::cartesian(3)),
            "cylindrical" => Ok(Self::cylindrical()),
            "spherical" => Ok(Self::spherical()),
            other => Err(Error::Parameter(format!(
                "unknown chart `{other}`; built-in charts are cartesian, cylindrical and spherical"
            ))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain_description(&self) -> &str {
        &self.domain_text
    }

    pub fn sample_box(&self) -> &[(f64, f64)] {
        &self.sample_box
    }

    pub fn has_analytic_jacobians(&self) -> bool {
        self.jac_s.is_some() && self.jac_t.is_some()
    }

    pub fn has_analytic_second_derivatives(&self) -> bool {
        self.second.is_some()
    }

    pub fn contains(&self, y: &[R]) -> bool {
        y.len() == self.dim && (self.domain)(y)
    }

    pub fn check_point(&self, y: &[R]) -> Result<()> {
        if y.len() != self.dim {
            return Err(Error::shape(format!(
                "chart {} has {} coordinates, point has {}",
                self.name,
                self.dim,
                y.len()
            )));
        }
        if !(self.domain)(y) {
            return Err(Error::domain(format!(
                "point {:?} is outside the domain of chart {} ({})",
                y.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>(),
                self.name,
                self.domain_text
            )));
        }
        Ok(())
    }

    /// `x(y)`.
    pub fn forward(&self, y: &[R]) -> Result<Vec<R>> {
        self.check_point(y)?;
        Ok((self.forward)(y))
    }

    /// `y(x)`; fails if the image is outside the domain.
    pub fn inverse(&self, x: &[R]) -> Result<Vec<R>> {
        if x.len() != self.dim {
            return Err(Error::shape("ambient point has the wrong dimension"));
        }
        let y = (self.inverse)(x);
        self.check_point(&y)?;
        Ok(y)
    }

    fn fd_step(v: R) -> R {
        R::epsilon().powf(R::lit(0.2)) * v.abs().max(R::one())
    }

    /// Fourth-order central differences of a vector map, one column per coordinate.
    fn fd_jacobian(map: &MapFn<R>, at: &[R]) -> Matrix<R> {
        let n = at.len();
        let mut jac = Matrix::zeros(n);
        for j in 0..n {
            let h = Self::fd_step(at[j]);
            let eval = |k: R| {
                let mut p = at.to_vec();
                p[j] += k * h;
                map(&p)
            };
            let (p2, p1, m1, m2) = (eval(R::lit(2.0)), eval(R::one()), eval(-R::one()), eval(R::lit(-2.0)));
            for i in 0..n {
                jac[(i, j)] =
                    (R::lit(8.0) * (p1[i] - m1[i]) - (p2[i] - m2[i])) / (R::lit(12.0) * h);
            }
        }
        jac
    }

    /// `S(y)`, analytic when available.
    pub fn jacobian_s(&self, y: &[R]) -> Result<Matrix<R>> {
        self.check_point(y)?;
        Ok(self.raw_s(y))
    }

    fn raw_s(&self, y: &[R]) -> Matrix<R> {
        match &self.jac_s {
            Some(s) => s(y),
            None => Self::fd_jacobian(&*self.forward, y),
        }
    }

    fn raw_t_at_x(&self, x: &[R]) -> Matrix<R> {
        match &self.jac_t {
            Some(t) => t(x),
            None => Self::fd_jacobian(&*self.inverse, x),
        }
    }

    /// `T` at the ambient image of `y`.
    pub fn jacobian_t(&self, y: &[R]) -> Result<Matrix<R>> {
        self.check_point(y)?;
        Ok(self.raw_t_at_x(&(self.forward)(y)))
    }

    /// Jacobi pair at one point with `T·S = I` checked.
    pub fn jacobians(&self, y: &[R]) -> Result<TransitionPair<R>> {
        self.check_point(y)?;
        let s = self.raw_s(y);
        let t = self.raw_t_at_x(&(self.forward)(y));
        if !s.is_finite() || !t.is_finite() {
            return Err(Error::DegenerateTransition(format!(
                "Jacobi matrices of chart {} are not finite at {:?}",
                self.name,
                y.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>()
            )));
        }
        TransitionPair::with_tolerance(s, t, R::lit(JACOBIAN_TOLERANCE))
    }

    /// Moving frame `E_j = Σ_i S^i_j e_i`: the columns of `S`.
    pub fn moving_frame(&self, y: &[R]) -> Result<Basis<R>> {
        Basis::new(self.jacobian_s(y)?)
    }

    /// `g_ij = (E_i, E_j) = (SᵀS)_ij`.
    pub fn metric_at(&self, y: &[R]) -> Result<Metric<R>> {
        let s = self.jacobian_s(y)?;
        Metric::new_symmetrized(s.transpose().matmul(&s))
    }

    /// `∂S^q_i/∂y^j` arranged as `H_q[(i, j)]`: analytic second derivatives
    /// when the chart has them, otherwise central differences of `S` with
    /// step `1e-5·max(1, |y^j|)`.
    pub fn second_partials(&self, y: &[R]) -> Result<Vec<Matrix<R>>> {
        self.check_point(y)?;
        if let Some(h) = &self.second {
            return Ok(h(y));
        }
        let n = self.dim;
        let mut out = vec![Matrix::zeros(n); n];
        for j in 0..n {
            let h = R::lit(1e-5) * y[j].abs().max(R::one());
            let mut plus = y.to_vec();
            let mut minus = y.to_vec();
            plus[j] += h;
            minus[j] -= h;
            let (sp, sm) = (self.raw_s(&plus), self.raw_s(&minus));
            for (q, hq) in out.iter_mut().enumerate() {
                for i in 0..n {
                    hq[(i, j)] = (sp[(q, i)] - sm[(q, i)]) / (h + h);
                }
            }
        }
        Ok(out)
    }

    /// `Γ^k_{ij} = Σ_q T^k_q ∂S^q_i/∂y^j`.
    pub fn christoffel(&self, y: &[R]) -> Result<ChristoffelArray<R>> {
        let pair = self.jacobians(y)?;
        let t = pair.inverse_matrix();
        let h = self.second_partials(y)?;
        let n = self.dim;
        Ok(ChristoffelArray::from_fn(n, |k, i, j| {
            (0..n).map(|q| t[(k, q)] * h[q][(i, j)]).sum()
        }))
    }

    /// The alternative form `Γ^k_{ij} = −Σ_q ∂T^k_q/∂y^j S^q_i`, with `T`
    /// differentiated numerically along `y` (step `1e-5·max(1, |y^j|)`).
    pub fn christoffel_alt(&self, y: &[R]) -> Result<ChristoffelArray<R>> {
        let pair = self.jacobians(y)?;
        let s = pair.direct();
        let n = self.dim;
        let mut dt = vec![Matrix::zeros(n); n];
        for (j, dtj) in dt.iter_mut().enumerate() {
            let h = R::lit(1e-5) * y[j].abs().max(R::one());
            let mut plus = y.to_vec();
            let mut minus = y.to_vec();
            plus[j] += h;
            minus[j] -= h;
            let tp = self.raw_t_at_x(&(self.forward)(&plus));
            let tm = self.raw_t_at_x(&(self.forward)(&minus));
            *dtj = tp.add(&tm.scale(-R::one())).scale((h + h).recip());
        }
        Ok(ChristoffelArray::from_fn(n, |k, i, j| {
            -(0..n).map(|q| dt[j][(k, q)] * s[(q, i)]).sum::<R>()
        }))
    }

    /// `∂g_ij/∂y^p = Σ_q (∂S^q_i/∂y^p S^q_j + S^q_i ∂S^q_j/∂y^p)`, indexed `[p][(i, j)]`.
    pub fn metric_partials(&self, y: &[R]) -> Result<Vec<Matrix<R>>> {
        let s = self.jacobian_s(y)?;
        let h = self.second_partials(y)?;
        let n = self.dim;
        Ok((0..n)
            .map(|p| {
                Matrix::from_fn(n, |i, j| {
                    (0..n).map(|q| h[q][(i, p)] * s[(q, j)] + s[(q, i)] * h[q][(j, p)]).sum()
                })
            })
            .collect())
    }

    /// Metric as a (0,2) field over chart coordinates; analytic partials are
    /// attached when the chart has analytic second derivatives.
    pub fn metric_field(&self) -> TensorField<R> {
        let chart = self.clone();
        let field = TensorField::try_new(Valency::BILINEAR, self.dim, move |y| {
            Ok(chart.metric_at(y)?.as_tensor())
        });
        if self.second.is_none() {
            return field;
        }
        let chart = self.clone();
        field.with_partials(move |y, _| {
            Ok(chart.metric_partials(y)?.iter().map(DenseTensor::bilinear).collect())
        })
    }

    /// `max_{p,i,j} |∇_p g_ij|` with `∇_p g_ij = ∂_p g_ij − Γ^n_{pi} g_nj − Γ^n_{pj} g_in`.
    pub fn concordance_residual(&self, y: &[R]) -> Result<R> {
        let g = self.metric_at(y)?;
        let g = g.matrix();
        let dg = self.metric_partials(y)?;
        let gamma = self.christoffel(y)?;
        let n = self.dim;
        let mut worst = R::zero();
        for (p, dgp) in dg.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    let corr: R = (0..n)
                        .map(|m| gamma.at(m, p, i) * g[(m, j)] + gamma.at(m, p, j) * g[(i, m)])
                        .sum();
                    worst = worst.max((dgp[(i, j)] - corr).abs());
                }
            }
        }
        Ok(worst)
    }

    /// Ambient points `x(y0 + s e_axis)` along one coordinate line (1-based axis).
    pub fn coordinate_line(&self, y0: &[R], axis: usize, params: &[R]) -> Result<Vec<Vec<R>>> {
        if axis == 0 || axis > self.dim {
            return Err(Error::index(format!("axis {axis} outside 1..={}", self.dim)));
        }
        params
            .iter()
            .map(|&s| {
                let mut y = y0.to_vec();
                y[axis - 1] += s;
                self.forward(&y)
            })
            .collect()
    }

    /// Largest residuals of the chart's structural identities over `points`.
    pub fn audit(&self, points: &[Vec<R>]) -> Result<AuditReport> {
        let analytic = self.has_analytic_jacobians();
        let mut report = AuditReport {
            chart: self.name.clone(),
            points: points.len(),
            analytic_jacobians: analytic,
            max_round_trip: 0.0,
            max_jacobian_residual: 0.0,
            max_christoffel_asymmetry: 0.0,
            max_christoffel_form_gap: 0.0,
            max_concordance: 0.0,
            tol_round_trip: 1e-9,
            tol_jacobian: if analytic { 1e-6 } else { 1e-4 },
            tol_symmetry: if self.second.is_some() { 1e-9 } else { 1e-5 },
            tol_form_gap: 1e-5,
            tol_concordance: 1e-6,
            failures: Vec::new(),
        };
        for y in points {
            self.check_point(y)?;
            let x = (self.forward)(y);
            let back = (self.inverse)(&x);
            let scale = y.iter().fold(1.0f64, |m, v| m.max(v.to_f64_lossy().abs()));
            let rt = crate::linalg::max_abs_diff(y, &back).to_f64_lossy() / scale;
            report.max_round_trip = nan_max(report.max_round_trip, rt);
            let s = self.raw_s(y);
            let t = self.raw_t_at_x(&x);
            report.max_jacobian_residual =
                nan_max(report.max_jacobian_residual, t.matmul(&s).identity_residual().to_f64_lossy());
            match (self.christoffel(y), self.christoffel_alt(y), self.concordance_residual(y)) {
                (Ok(g1), Ok(g2), Ok(conc)) => {
                    report.max_christoffel_asymmetry =
                        nan_max(report.max_christoffel_asymmetry, g1.max_asymmetry().to_f64_lossy());
                    report.max_christoffel_form_gap =
                        nan_max(report.max_christoffel_form_gap, g1.max_abs_diff(&g2).to_f64_lossy());
                    report.max_concordance = nan_max(report.max_concordance, conc.to_f64_lossy());
                }
                (a, b, c) => {
                    let err = [a.err(), b.err(), c.err()].into_iter().flatten().next();
                    report.failures.push(format!("{:?}: {}", y.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>(), err.map(|e| e.to_string()).unwrap_or_default()));
                }
            }
        }
        Ok(report)
    }
}

fn nan_max(acc: f64, v: f64) -> f64 {
    if v.is_nan() || acc.is_nan() {
        f64::NAN
    } else {
        acc.max(v)
    }
}

fn m3<R: Real>(rows: [[R; 3]; 3]) -> Matrix<R> {
    Matrix::from_rows(&rows).expect("3x3 rows")
}

/// Worst-case residuals from [`Chart::audit`] with their tolerances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub chart: String,
    pub points: usize,
    pub analytic_jacobians: bool,
    pub max_round_trip: f64,
    pub max_jacobian_residual: f64,
    pub max_christoffel_asymmetry: f64,
    pub max_christoffel_form_gap: f64,
    pub max_concordance: f64,
    pub tol_round_trip: f64,
    pub tol_jacobian: f64,
    pub tol_symmetry: f64,
    pub tol_form_gap: f64,
    pub tol_concordance: f64,
    pub failures: Vec<String>,
}

impl AuditReport {
    /// Names of the checks whose residual exceeds its tolerance (NaN counts as a breach).
    pub fn breaches(&self) -> Vec<&'static str> {
        let checks = [
            ("round-trip", self.max_round_trip, self.tol_round_trip),
            ("jacobian-inverse", self.max_jacobian_residual, self.tol_jacobian),
            ("christoffel-symmetry", self.max_christoffel_asymmetry, self.tol_symmetry),
            ("christoffel-forms", self.max_christoffel_form_gap, self.tol_form_gap),
            ("concordance", self.max_concordance, self.tol_concordance),
        ];
        let mut out: Vec<&'static str> = checks
            .iter()
            .filter(|(_, v, tol)| !(v <= tol))
            .map(|(name, _, _)| *name)
            .collect();
        if !self.failures.is_empty() {
            out.push("evaluation");
        }
        out
    }

    pub fn passed(&self) -> bool {
        self.breaches().is_empty()
    }
}

impl<R: Real> Geometry<R> for Chart<R> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn metric_at(&self, y: &[R]) -> Result<Metric<R>> {
        Chart::metric_at(self, y)
    }

    fn christoffel_at(&self, y: &[R]) -> Result<Option<ChristoffelArray<R>>> {
        self.christoffel(y).map(Some)
    }

    fn check_point(&self, y: &[R]) -> Result<()> {
        Chart::check_point(self, y)
    }
}

/// `∇X` over chart coordinates; the new covariant slot is the first lower slot.
pub fn covariant_derivative<R: Real>(
    chart: &Chart<R>,
    field: &TensorField<R>,
    scheme: &DifferentiationScheme<R>,
) -> Result<TensorField<R>> {
    field::covariant_derivative_in(chart, field, scheme)
}

pub fn gradient_covector<R: Real>(
    chart: &Chart<R>,
    phi: &TensorField<R>,
    scheme: &DifferentiationScheme<R>,
) -> Result<TensorField<R>> {
    field::gradient_covector_in(chart, phi, scheme)
}

pub fn gradient_vector<R: Real>(
    chart: &Chart<R>,
    phi: &TensorField<R>,
    scheme: &DifferentiationScheme<R>,
) -> Result<TensorField<R>> {
    field::gradient_vector_in(chart, phi, scheme)
}

pub fn divergence<R: Real>(
    chart: &Chart<R>,
    field: &TensorField<R>,
    slot: usize,
    scheme: &DifferentiationScheme<R>,
) -> Result<TensorField<R>> {
    field::divergence_in(chart, field, slot, scheme)
}

pub fn laplacian<R: Real>(
    chart: &Chart<R>,
    phi: &TensorField<R>,
    scheme: &DifferentiationScheme<R>,
) -> Result<TensorField<R>> {
    field::laplacian_in(chart, phi, scheme)
}

pub fn rotor<R: Real>(
    chart: &Chart<R>,
    field: &TensorField<R>,
    scheme: &DifferentiationScheme<R>,
) -> Result<TensorField<R>> {
    field::rotor_in(chart, field, scheme)
}

/// Re-expresses a field given over `from` coordinates as a field over `to`
/// coordinates, going through the ambient Cartesian point:
/// `X̃(ỹ) = transform(X(y(x(ỹ))))` with `S = T_from·S_to`, `T = T_to·S_from`.
pub fn chart_to_chart_transform<R: Real>(
    field: &TensorField<R>,
    from: &Chart<R>,
    to: &Chart<R>,
) -> Result<TensorField<R>> {
    if from.dim() != field.dim() || to.dim() != field.dim() {
        return Err(Error::shape("charts and field differ in dimension"));
    }
    let (field_c, from, to) = (field.clone(), from.clone(), to.clone());
    Ok(TensorField::with_parameter(field.valency(), field.dim(), move |yt, t| {
        let x = to.forward(yt)?;
        let y = from.inverse(&x)?;
        let value = field_c.evaluate_at(&y, t)?;
        if value.valency().order() == 0 {
            return Ok(value);
        }
        let pair = from.jacobians(&y)?.inverse().compose(&to.jacobians(yt)?)?;
        value.transform(&pair, Direction::OldToNew)
    }))
}

/// Serialized custom chart: component maps as formulas or coefficient tables.
///
/// ```json
/// {
///   "name": "sheared",
///   "forward": ["y1 + 0.5*y2", "y2", "y3"],
///   "inverse": ["x1 - 0.5*x2", "x2", "x3"],
///   "domain": [[null, null], [0.1, null], [null, null]],
///   "sample": [[-1, 1], [0.2, 2], [-1, 1]]
/// }
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub name: String,
    pub forward: Vec<ComponentSpec>,
    pub inverse: Vec<ComponentSpec>,
    /// Open interval per coordinate; `null` bounds are unbounded.
    #[serde(default)]
    pub domain: Option<Vec<[Option<f64>; 2]>>,
    #[serde(default)]
    pub sample: Option<Vec<[f64; 2]>>,
}

impl ChartSpec {
    pub fn build<R: Real>(&self) -> Result<Chart<R>> {
        let dim = self.forward.len();
        if dim == 0 || self.inverse.len() != dim {
            return Err(Error::Validation(format!(
                "chart {}: forward and inverse need the same non-zero number of components",
                self.name
            )));
        }
        let fwd = compile_all(&self.forward, Variables { prefixes: &['y'], dim, parameter: false })?;
        let inv = compile_all(&self.inverse, Variables { prefixes: &['x'], dim, parameter: false })?;
        let domain: Vec<[Option<f64>; 2]> = match &self.domain {
            Some(d) if d.len() != dim => {
                return Err(Error::Validation(format!("chart {}: domain needs {dim} intervals", self.name)))
            }
            Some(d) => d.clone(),
            None => vec![[None, None]; dim],
        };
        let sample: Vec<(f64, f64)> = match &self.sample {
            Some(s) if s.len() != dim => {
                return Err(Error::Validation(format!("chart {}: sample box needs {dim} intervals", self.name)))
            }
            Some(s) => s.iter().map(|[a, b]| (*a, *b)).collect(),
            None => domain
                .iter()
                .map(|[lo, hi]| match (lo, hi) {
                    (Some(a), Some(b)) => (a + 0.1 * (b - a), b - 0.1 * (b - a)),
                    (Some(a), None) => (a + 0.1, a + 2.0),
                    (None, Some(b)) => (b - 2.0, b - 0.1),
                    (None, None) => (-1.0, 1.0),
                })
                .collect(),
        };
        let text = domain
            .iter()
            .enumerate()
            .filter_map(|(i, [lo, hi])| match (lo, hi) {
                (None, None) => None,
                (Some(a), None) => Some(format!("y{} > {a}", i + 1)),
                (None, Some(b)) => Some(format!("y{} < {b}", i + 1)),
                (Some(a), Some(b)) => Some(format!("{a} < y{} < {b}", i + 1)),
            })
            .collect::<Vec<_>>();
        let text = if text.is_empty() { "all points".to_string() } else { text.join(", ") };
        let map = |formulas: Vec<Formula>| {
            move |p: &[R]| {
                let p: Vec<f64> = p.iter().map(|v| v.to_f64_lossy()).collect();
                formulas.iter().map(|f| R::lit(f.eval(&p, 0.0))).collect::<Vec<R>>()
            }
        };
        Ok(Chart::new(self.name.clone(), dim, map(fwd), map(inv))
            .with_domain(text, move |y: &[R]| {
                y.iter().zip(&domain).all(|(v, [lo, hi])| {
                    let v = v.to_f64_lossy();
                    v.is_finite() && lo.is_none_or(|a| v > a) && hi.is_none_or(|b| v < b)
                })
            })
            .with_sample_box(sample))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn forward_and_round_trip() {
        let c = Chart::<f64>::cylindrical();
        assert_eq!(c.forward(&[2.0, 0.0, 1.0]).unwrap(), vec![2.0, 0.0, 1.0]);
        let s = Chart::<f64>::spherical();
        let y = [1.3, 0.7, -2.1];
        let back = s.inverse(&s.forward(&y).unwrap()).unwrap();
        assert!(crate::linalg::max_abs_diff(&y, &back) < 1e-12);
    }

    #[test]
    fn poles_and_axis_are_outside() {
        let s = Chart::<f64>::spherical();
        assert!(matches!(s.moving_frame(&[1.0, 0.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(s.christoffel(&[1.0, PI, 0.0]), Err(Error::Domain(_))));
        let c = Chart::<f64>::cylindrical();
        assert!(matches!(c.jacobians(&[0.0, 0.3, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(Chart::<f64>::builtin("polar"), Err(Error::Parameter(_))));
    }

    #[test]
    fn cylindrical_jacobian_frame_and_metric() {
        let c = Chart::<f64>::cylindrical();
        let pair = c.jacobians(&[2.0, 0.0, 0.0]).unwrap();
        assert!(pair.direct().max_abs_diff(&Matrix::diagonal(&[1.0, 2.0, 1.0])) < 1e-15);
        let frame = c.moving_frame(&[2.0, 0.0, 0.0]).unwrap();
        assert_eq!(frame.vector(2).unwrap(), vec![0.0, 2.0, 0.0]);
        let g = c.metric_at(&[3.0, 1.0, -1.0]).unwrap();
        assert!(g.matrix().max_abs_diff(&Matrix::diagonal(&[1.0, 9.0, 1.0])) < 1e-12);
    }

    #[test]
    fn spherical_metric_and_orthogonal_frame() {
        let s = Chart::<f64>::spherical();
        let g = s.metric_at(&[2.0, FRAC_PI_2, 0.4]).unwrap();
        assert!(g.matrix().max_abs_diff(&Matrix::diagonal(&[1.0, 4.0, 4.0])) < 1e-12);
        let f = s.moving_frame(&[1.0, FRAC_PI_2, 0.0]).unwrap();
        let e: Vec<Vec<f64>> = (1..=3).map(|j| f.vector(j).unwrap()).collect();
        for a in 0..3 {
            for b in a + 1..3 {
                assert!(crate::linalg::dot(&e[a], &e[b]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn christoffel_examples() {
        let c = Chart::<f64>::cylindrical();
        let g = c.christoffel(&[2.0, 0.3, 0.0]).unwrap();
        for (k, i, j, v) in g.nonzero(1e-12) {
            let expected = match (k, i, j) {
                (1, 2, 2) => -2.0,
                (2, 1, 2) | (2, 2, 1) => 0.5,
                other => panic!("unexpected entry {other:?} = {v}"),
            };
            assert!(close(v, expected, 1e-12));
        }
        let s = Chart::<f64>::spherical();
        let g = s.christoffel(&[1.0, FRAC_PI_2, 0.2]).unwrap();
        assert!(close(g.get(1, 2, 2).unwrap(), -1.0, 1e-12));
        assert!(close(g.get(1, 3, 3).unwrap(), -1.0, 1e-12));
        assert!(close(g.get(2, 1, 2).unwrap(), 1.0, 1e-12));
        assert_eq!(Chart::<f64>::cartesian(3).christoffel(&[1.0, 2.0, 3.0]).unwrap().max_abs_diff(&ChristoffelArray::zeros(3)), 0.0);
    }

    #[test]
    fn both_christoffel_forms_agree() {
        for chart in [Chart::<f64>::cylindrical(), Chart::spherical()] {
            let y = [1.4, 1.1, 0.6];
            let a = chart.christoffel(&y).unwrap();
            let b = chart.christoffel_alt(&y).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-5);
        }
    }

    #[test]
    fn numerical_jacobians_match_analytic() {
        let s = Chart::<f64>::spherical();
        let y = [1.7, 0.9, 2.0];
        let fd = Chart::fd_jacobian(&*s.forward, &y);
        assert!(fd.max_abs_diff(&s.jacobian_s(&y).unwrap()) < 1e-5);
    }

    #[test]
    fn gradient_of_z_in_cylindrical() {
        let c = Chart::<f64>::cylindrical();
        let phi = TensorField::scalar(3, |y| y[2]);
        let g = gradient_vector(&c, &phi, &DifferentiationScheme::default()).unwrap();
        let v = g.evaluate(&[1.5, 0.4, 2.0]).unwrap();
        assert!(v.max_abs_diff(&DenseTensor::vector(&[0.0, 0.0, 1.0])).unwrap() < 1e-6);
    }

    #[test]
    fn custom_chart_from_json() {
        let spec: ChartSpec = serde_json::from_str(
            r#"{"name":"sheared","forward":["y1 + 0.5*y2","y2","y3"],"inverse":["x1 - 0.5*x2","x2","x3"]}"#,
        )
        .unwrap();
        let chart = spec.build::<f64>().unwrap();
        let pair = chart.jacobians(&[0.2, 0.3, 0.4]).unwrap();
        assert!(pair.direct().max_abs_diff(&m3([[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])) < 1e-9);
        assert!(chart.christoffel(&[0.2, 0.3, 0.4]).unwrap().nonzero(1e-6).is_empty());
        assert!(chart.audit(&[vec![0.1, 0.2, 0.3], vec![-0.5, 0.5, 0.9]]).unwrap().passed());
    }
}
