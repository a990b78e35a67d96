//! Test functions with tracked Hoelder data, fiber Fourier operators, Haar
//! quadrature and Wasserstein lower bounds.
//!
//! A `TestFunction` is a small computation DAG.  Each node carries the
//! exponent alpha, a sound upper bound on the (0,alpha)-norm
//! sup|f| + omega_alpha(f), and, when known, the fiber frequency a with
//! f in H_a relative to a chosen central subgroup.

use crate::affine::{AffineError, AffineMap, FiniteMeasure};
use crate::element::{ElementError, GroupElement, NilmanifoldPoint};
use crate::schema::{CentralSubgroupSpec, NilGroupSchema};
use crate::walk::EmpiricalMeasure;
use num_complex::Complex64;
use std::f64::consts::TAU;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("exponent alpha must lie in (0, 1], got {0}")]
    BadAlpha(f64),
    #[error("cannot combine test functions with different alpha ({0} vs {1})")]
    AlphaMismatch(f64, f64),
    #[error("cannot combine test functions over different central subgroups")]
    FiberMismatch,
    #[error("average weights must be nonnegative and sum to 1")]
    BadWeights,
    #[error("bump width must satisfy 0 < width < half the smallest lattice spacing")]
    BadWidth,
    #[error("frequency vector has length {got}, expected {want}")]
    FrequencyLength { got: usize, want: usize },
    #[error("Fejer order and quadrature grid must satisfy 1 <= N <= grid")]
    BadFejer,
    #[error(transparent)]
    Affine(#[from] AffineError),
    #[error(transparent)]
    Element(#[from] ElementError),
    #[error("quadrature did not converge: refinement changed the value by {0:.3e}")]
    QuadratureDiverged(f64),
    #[error("dictionary is empty or has no finite-norm entries")]
    EmptyDictionary,
}

#[derive(Debug, Clone)]
enum Node {
    Const(Complex64),
    /// e(a . pi_T(x)) on the maximal torus factor.
    TorusChar(Vec<i64>),
    /// chi_a on the central fiber, read off the canonical section
    /// (discontinuous across the fundamental-domain boundary).
    FiberChar(CentralSubgroupSpec, Vec<i64>),
    /// Periodized tent product centered at `center` with half-support
    /// `width` in every coordinate.
    Bump { center: Vec<f64>, width: f64 },
    Pullback(AffineMap, Arc<TestFunction>),
    Product(Arc<TestFunction>, Arc<TestFunction>),
    Conj(Arc<TestFunction>),
    Average(Vec<(f64, Arc<TestFunction>)>),
    /// F_a f by quadrature over the subgroup grid of the fiber.
    FiberProject { z: CentralSubgroupSpec, a: Vec<i64>, grid: usize, inner: Arc<TestFunction> },
    /// Fejer smoothing along the fiber: convex combination of central
    /// translates weighted by the product Fejer kernel.
    Fejer { z: CentralSubgroupSpec, order: usize, grid: usize, inner: Arc<TestFunction> },
    /// Lift of a function on the quotient torus Y through the projection.
    FactorLift { z: CentralSubgroupSpec, inner: Arc<TestFunction> },
}

#[derive(Debug, Clone)]
pub struct TestFunction {
    node: Node,
    pub alpha: f64,
    /// Sound upper bound on sup|f| + omega_alpha(f); may be infinite.
    pub norm_bound: f64,
    /// Known (Z, a) with f in H_a relative to Z.
    pub fiber: Option<(CentralSubgroupSpec, Vec<i64>)>,
}

fn check_alpha(alpha: f64) -> Result<(), ObservableError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(ObservableError::BadAlpha(alpha));
    }
    Ok(())
}

/// omega_alpha bound from a Lipschitz constant: |df| <= min(2 sup, L d)
/// gives omega_alpha <= (2 sup)^(1-alpha) L^alpha.
fn holder_from_lipschitz(sup: f64, lip: f64, alpha: f64) -> f64 {
    (2.0 * sup).powf(1.0 - alpha) * lip.powf(alpha)
}

fn wrap_half(mut t: f64, period: f64) -> f64 {
    t = t.rem_euclid(period);
    if t > period / 2.0 {
        t -= period;
    }
    t
}

/// Closed-form Fejer kernel value K_N(t) = (1/N)(sin N pi t / sin pi t)^2.
pub fn fejer_kernel(order: usize, t: f64) -> f64 {
    let n = order as f64;
    let s = (std::f64::consts::PI * t).sin();
    if s.abs() < 1e-12 {
        n
    } else {
        let sn = (n * std::f64::consts::PI * t).sin();
        sn * sn / (s * s * n)
    }
}

impl TestFunction {
    pub fn constant(c: Complex64, alpha: f64) -> Result<Self, ObservableError> {
        check_alpha(alpha)?;
        Ok(TestFunction { node: Node::Const(c), alpha, norm_bound: c.norm(), fiber: None })
    }

    pub fn one(alpha: f64) -> Self {
        TestFunction::constant(Complex64::new(1.0, 0.0), alpha).expect("alpha in range")
    }

    pub fn torus_char(schema: &NilGroupSchema, a: Vec<i64>, alpha: f64) -> Result<Self, ObservableError> {
        check_alpha(alpha)?;
        let want = schema.base_dim();
        if a.len() != want {
            return Err(ObservableError::FrequencyLength { got: a.len(), want });
        }
        let lip = TAU * (a.iter().map(|&c| (c * c) as f64).sum::<f64>()).sqrt();
        let fiber = Some((CentralSubgroupSpec::full_center(schema), fiber_part_of_torus_char(schema, &a)));
        Ok(TestFunction {
            node: Node::TorusChar(a),
            alpha,
            norm_bound: 1.0 + holder_from_lipschitz(1.0, lip, alpha),
            fiber,
        })
    }

    /// Same character, with the fiber membership tracked against an
    /// arbitrary central subgroup of a torus schema.
    pub fn torus_char_with_fiber(
        schema: &NilGroupSchema,
        a: Vec<i64>,
        z: CentralSubgroupSpec,
    ) -> Result<Self, ObservableError> {
        let mut f = TestFunction::torus_char(schema, a.clone(), 1.0)?;
        let freq: Vec<i64> = z.indices.iter().map(|&i| a[i]).collect();
        f.fiber = Some((z, freq));
        Ok(f)
    }

    pub fn fiber_char(
        schema: &NilGroupSchema,
        z: CentralSubgroupSpec,
        a: Vec<i64>,
        alpha: f64,
    ) -> Result<Self, ObservableError> {
        check_alpha(alpha)?;
        if a.len() != z.rank() {
            return Err(ObservableError::FrequencyLength { got: a.len(), want: z.rank() });
        }
        let _ = schema;
        Ok(TestFunction {
            node: Node::FiberChar(z.clone(), a.clone()),
            alpha,
            // the section is discontinuous: no finite Hoelder bound
            norm_bound: f64::INFINITY,
            fiber: Some((z, a)),
        })
    }

    pub fn bump(
        schema: &NilGroupSchema,
        center: Vec<f64>,
        width: f64,
        alpha: f64,
    ) -> Result<Self, ObservableError> {
        check_alpha(alpha)?;
        if center.len() != schema.dim() {
            return Err(ObservableError::FrequencyLength { got: center.len(), want: schema.dim() });
        }
        let min_spacing = (0..schema.dim())
            .map(|i| {
                let (p, q) = schema.lattice_spacing(i);
                p as f64 / q as f64
            })
            .fold(f64::INFINITY, f64::min);
        if !(width > 0.0 && width < min_spacing / 2.0) {
            return Err(ObservableError::BadWidth);
        }
        // coordinate reads are kappa^2-Lipschitz in the premetric (chart
        // distortion once for the left factor, once for the lattice shift)
        let kappa = schema.chart_distortion();
        let lip = schema.dim() as f64 * kappa * kappa / width;
        Ok(TestFunction {
            node: Node::Bump { center, width },
            alpha,
            norm_bound: 1.0 + holder_from_lipschitz(1.0, lip, alpha),
            fiber: None,
        })
    }

    /// U*(g) f = f o g.
    pub fn pullback(schema: &NilGroupSchema, g: AffineMap, f: &TestFunction) -> Result<Self, ObservableError> {
        let lip = g.lipschitz_upper(schema);
        let fiber = match &f.fiber {
            Some((z, a)) => match g.gamma.theta_z(schema, z) {
                Ok(m) => Some((z.clone(), m.transpose().mul_vec(a).map_err(AffineError::from)?)),
                Err(_) => None,
            },
            None => None,
        };
        Ok(TestFunction {
            alpha: f.alpha,
            norm_bound: lip.powf(f.alpha) * f.norm_bound,
            fiber,
            node: Node::Pullback(g, Arc::new(f.clone())),
        })
    }

    pub fn product(f: &TestFunction, g: &TestFunction) -> Result<Self, ObservableError> {
        if (f.alpha - g.alpha).abs() > 1e-12 {
            return Err(ObservableError::AlphaMismatch(f.alpha, g.alpha));
        }
        let fiber = match (&f.fiber, &g.fiber) {
            (Some((z1, a1)), Some((z2, a2))) if z1 == z2 => {
                Some((z1.clone(), a1.iter().zip(a2).map(|(x, y)| x + y).collect()))
            }
            _ => None,
        };
        Ok(TestFunction {
            alpha: f.alpha,
            norm_bound: f.norm_bound * g.norm_bound,
            fiber,
            node: Node::Product(Arc::new(f.clone()), Arc::new(g.clone())),
        })
    }

    pub fn conj(f: &TestFunction) -> Self {
        TestFunction {
            alpha: f.alpha,
            norm_bound: f.norm_bound,
            fiber: f.fiber.as_ref().map(|(z, a)| (z.clone(), a.iter().map(|c| -c).collect())),
            node: Node::Conj(Arc::new(f.clone())),
        }
    }

    pub fn modulus_squared(f: &TestFunction) -> Result<Self, ObservableError> {
        TestFunction::product(f, &TestFunction::conj(f))
    }

    pub fn average(terms: Vec<(f64, TestFunction)>) -> Result<Self, ObservableError> {
        if terms.is_empty() {
            return Err(ObservableError::BadWeights);
        }
        let total: f64 = terms.iter().map(|(w, _)| *w).sum();
        if terms.iter().any(|(w, _)| *w < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(ObservableError::BadWeights);
        }
        let alpha = terms[0].1.alpha;
        for (_, f) in &terms {
            if (f.alpha - alpha).abs() > 1e-12 {
                return Err(ObservableError::AlphaMismatch(alpha, f.alpha));
            }
        }
        let norm_bound = terms.iter().map(|(w, f)| w * f.norm_bound).sum();
        let fiber = {
            let first = terms[0].1.fiber.clone();
            if terms.iter().all(|(_, f)| f.fiber == first) {
                first
            } else {
                None
            }
        };
        Ok(TestFunction {
            alpha,
            norm_bound,
            fiber,
            node: Node::Average(terms.into_iter().map(|(w, f)| (w, Arc::new(f))).collect()),
        })
    }

    /// Koopman average U*(mu) f = sum of weights * f o g.
    pub fn koopman(schema: &NilGroupSchema, mu: &FiniteMeasure, f: &TestFunction) -> Result<Self, ObservableError> {
        let terms = mu
            .atoms()
            .iter()
            .map(|(g, w)| {
                Ok((crate::matrix::rational_to_f64(w), TestFunction::pullback(schema, g.clone(), f)?))
            })
            .collect::<Result<Vec<_>, ObservableError>>()?;
        TestFunction::average(terms)
    }

    /// F_a f by quadrature over the order-`grid` subgroup of the fiber.
    /// Exact on functions whose fiber spectrum lies within the grid Nyquist
    /// band; a convex combination of twisted isometric translates, so the
    /// norm bound carries over unchanged.
    pub fn fiber_project(
        schema: &NilGroupSchema,
        z: &CentralSubgroupSpec,
        f: &TestFunction,
        a: Vec<i64>,
        grid: usize,
    ) -> Result<Self, ObservableError> {
        if a.len() != z.rank() {
            return Err(ObservableError::FrequencyLength { got: a.len(), want: z.rank() });
        }
        if grid == 0 {
            return Err(ObservableError::BadFejer);
        }
        let _ = schema;
        Ok(TestFunction {
            alpha: f.alpha,
            norm_bound: f.norm_bound,
            fiber: Some((z.clone(), a.clone())),
            node: Node::FiberProject { z: z.clone(), a, grid, inner: Arc::new(f.clone()) },
        })
    }

    /// Fejer smoothing along the fiber.  Requires grid >= order so the
    /// kernel quadrature weights sum exactly to 1.
    pub fn fejer(
        schema: &NilGroupSchema,
        z: &CentralSubgroupSpec,
        f: &TestFunction,
        order: usize,
        grid: usize,
    ) -> Result<Self, ObservableError> {
        if order == 0 || grid < order {
            return Err(ObservableError::BadFejer);
        }
        let _ = schema;
        let fiber = f.fiber.clone();
        Ok(TestFunction {
            alpha: f.alpha,
            norm_bound: f.norm_bound,
            fiber,
            node: Node::Fejer { z: z.clone(), order, grid, inner: Arc::new(f.clone()) },
        })
    }

    /// Lift of a function on the quotient torus Y = X/Z.
    pub fn factor_lift(
        schema: &NilGroupSchema,
        z: &CentralSubgroupSpec,
        f_on_quotient: &TestFunction,
    ) -> Result<Self, ObservableError> {
        let _ = schema;
        Ok(TestFunction {
            alpha: f_on_quotient.alpha,
            // the projection X -> Y is 1-Lipschitz for the chart premetrics
            norm_bound: f_on_quotient.norm_bound,
            fiber: Some((z.clone(), vec![0; z.rank()])),
            node: Node::FactorLift { z: z.clone(), inner: Arc::new(f_on_quotient.clone()) },
        })
    }

    pub fn evaluate(&self, schema: &NilGroupSchema, x: &NilmanifoldPoint) -> Complex64 {
        match &self.node {
            Node::Const(c) => *c,
            Node::TorusChar(a) => {
                let t = schema.project_to_torus(x).expect("projection");
                let coords = t.to_f64();
                let phase: f64 = a.iter().zip(&coords).map(|(&ai, &ci)| ai as f64 * ci).sum();
                Complex64::from_polar(1.0, TAU * phase)
            }
            Node::FiberChar(z, a) => {
                let coords = x.to_f64();
                Complex64::from_polar(1.0, TAU * fiber_phase(schema, z, a, &coords))
            }
            Node::Bump { center, width } => bump_value(schema, center, *width, self.alpha, x),
            Node::Pullback(g, inner) => {
                inner.evaluate(schema, &g.apply(schema, x).expect("validated map"))
            }
            Node::Product(f, g) => f.evaluate(schema, x) * g.evaluate(schema, x),
            Node::Conj(f) => f.evaluate(schema, x).conj(),
            Node::Average(terms) => terms
                .iter()
                .map(|(w, f)| *w * f.evaluate(schema, x))
                .sum(),
            Node::FiberProject { z, a, grid, inner } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for_each_fiber_grid_point(schema, z, *grid, |zc, normalized| {
                    let y = central_translate(schema, x, z, zc);
                    let phase: f64 = a.iter().zip(normalized).map(|(&ai, &s)| ai as f64 * s).sum();
                    acc += Complex64::from_polar(1.0, -TAU * phase) * inner.evaluate(schema, &y);
                });
                acc / (*grid as f64).powi(z.rank() as i32)
            }
            Node::Fejer { z, order, grid, inner } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for_each_fiber_grid_point(schema, z, *grid, |zc, normalized| {
                    let w: f64 = normalized.iter().map(|&s| fejer_kernel(*order, s)).product();
                    if w != 0.0 {
                        let y = central_translate(schema, x, z, zc);
                        acc += w * inner.evaluate(schema, &y);
                    }
                });
                acc / (*grid as f64).powi(z.rank() as i32)
            }
            Node::FactorLift { z, inner } => {
                let quotient = z.quotient_schema(schema);
                let y = schema.project_to_factor(x, z).expect("projection");
                inner.evaluate(&quotient, &y)
            }
        }
    }
}

/// The restriction of a full torus character to a central fiber of the
/// schema: on a torus every coordinate of Z contributes its own frequency;
/// on 2-step schemas the torus character does not see the fiber at all.
fn fiber_part_of_torus_char(schema: &NilGroupSchema, a: &[i64]) -> Vec<i64> {
    let z = CentralSubgroupSpec::full_center(schema);
    match schema.family {
        crate::schema::Family::Torus { .. } => z.indices.iter().map(|&i| a[i]).collect(),
        _ => vec![0; z.rank()],
    }
}

/// Phase of chi_a at the fiber coordinates of x (normalized by the lattice
/// spacing so that a is a plain integer frequency).
fn fiber_phase(schema: &NilGroupSchema, z: &CentralSubgroupSpec, a: &[i64], coords: &[f64]) -> f64 {
    z.indices
        .iter()
        .zip(a)
        .map(|(&i, &ai)| {
            let (p, q) = schema.lattice_spacing(i);
            ai as f64 * coords[i] * q as f64 / p as f64
        })
        .sum()
}

/// Left-translate x by the central element with coordinates zc on the Z
/// indices (base coordinates zero).
fn central_translate(
    schema: &NilGroupSchema,
    x: &NilmanifoldPoint,
    z: &CentralSubgroupSpec,
    zc: &[f64],
) -> NilmanifoldPoint {
    let mut coords = vec![0.0; schema.dim()];
    for (&i, &v) in z.indices.iter().zip(zc) {
        coords[i] = v;
    }
    let zel = GroupElement::floats(coords);
    let prod = schema.multiply(&zel, &GroupElement::floats(x.to_f64())).expect("dims match");
    schema.reduce(&prod).expect("dims match")
}

/// Visit the order-g subgroup grid of the fiber torus.  The callback gets
/// the chart coordinates of the grid point and the normalized coordinates
/// (in [0,1) per fiber circle).
fn for_each_fiber_grid_point<F: FnMut(&[f64], &[f64])>(
    schema: &NilGroupSchema,
    z: &CentralSubgroupSpec,
    grid: usize,
    mut visit: F,
) {
    let rank = z.rank();
    let spacings: Vec<f64> = z
        .indices
        .iter()
        .map(|&i| {
            let (p, q) = schema.lattice_spacing(i);
            p as f64 / q as f64
        })
        .collect();
    let mut idx = vec![0usize; rank];
    let mut zc = vec![0.0; rank];
    let mut normalized = vec![0.0; rank];
    loop {
        for k in 0..rank {
            normalized[k] = idx[k] as f64 / grid as f64;
            zc[k] = normalized[k] * spacings[k];
        }
        visit(&zc, &normalized);
        let mut carry = 0;
        loop {
            if carry == rank {
                return;
            }
            idx[carry] += 1;
            if idx[carry] < grid {
                break;
            }
            idx[carry] = 0;
            carry += 1;
        }
    }
}

fn bump_value(
    schema: &NilGroupSchema,
    center: &[f64],
    width: f64,
    alpha: f64,
    x: &NilmanifoldPoint,
) -> Complex64 {
    let rep = x.to_f64();
    let base_dim = schema.base_dim();
    // choose the lattice shift bringing each base coordinate nearest the
    // center, then read the central coordinates of the shifted representative
    let mut lambda = vec![0.0; schema.dim()];
    for (i, l) in lambda.iter_mut().enumerate().take(base_dim) {
        *l = (center[i] - rep[i]).round();
    }
    let shifted = schema
        .multiply(&GroupElement::floats(rep), &GroupElement::floats(lambda))
        .expect("dims match");
    let coords = shifted.to_f64();
    let mut v = 1.0;
    for i in 0..schema.dim() {
        let (p, q) = schema.lattice_spacing(i);
        let period = p as f64 / q as f64;
        let d = wrap_half(coords[i] - center[i], period).abs();
        let t = 1.0 - d / width;
        if t <= 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        // the alpha-cusped edge puts the bump in the declared Hoelder class
        v *= t.powf(alpha);
    }
    Complex64::new(v, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HaarIntegral {
    pub value: Complex64,
    pub error: f64,
    pub converged: bool,
}

/// Tensor midpoint quadrature at `resolution` and `2 * resolution` points
/// per dimension; the difference is the reported error estimate.
pub fn integrate_haar(
    schema: &NilGroupSchema,
    f: &TestFunction,
    resolution: usize,
    tolerance: f64,
) -> Result<HaarIntegral, ObservableError> {
    if resolution < 2 {
        return Err(ObservableError::BadFejer);
    }
    let coarse = midpoint_grid(schema, f, resolution)?;
    let fine = midpoint_grid(schema, f, 2 * resolution)?;
    let error = (fine - coarse).norm();
    Ok(HaarIntegral { value: fine, error, converged: error <= tolerance })
}

fn midpoint_grid(
    schema: &NilGroupSchema,
    f: &TestFunction,
    n: usize,
) -> Result<Complex64, ObservableError> {
    let dim = schema.dim();
    let spacings: Vec<f64> = (0..dim)
        .map(|i| {
            let (p, q) = schema.lattice_spacing(i);
            p as f64 / q as f64
        })
        .collect();
    let mut idx = vec![0usize; dim];
    let mut acc = Complex64::new(0.0, 0.0);
    let total = (n as f64).powi(dim as i32);
    loop {
        let coords: Vec<f64> = (0..dim)
            .map(|i| (idx[i] as f64 + 0.5) / n as f64 * spacings[i])
            .collect();
        let x = schema.reduce(&GroupElement::floats(coords))?;
        acc += f.evaluate(schema, &x);
        let mut carry = 0;
        loop {
            if carry == dim {
                return Ok(acc / total);
            }
            idx[carry] += 1;
            if idx[carry] < n {
                break;
            }
            idx[carry] = 0;
            carry += 1;
        }
    }
}

pub fn integrate_empirical(
    schema: &NilGroupSchema,
    f: &TestFunction,
    nu: &EmpiricalMeasure,
) -> Complex64 {
    nu.weights_f64().map(|(x, w)| w * f.evaluate(schema, x)).sum()
}

#[derive(Debug, Clone)]
pub struct WassersteinWitness {
    pub value: f64,
    pub witness: usize,
    pub converged: bool,
    pub per_function: Vec<f64>,
}

/// Certified lower bound on W_alpha(nu, Haar): max over the dictionary of
/// |int f dnu - int f dHaar| / normBound.
pub fn wasserstein_lower(
    schema: &NilGroupSchema,
    nu: &EmpiricalMeasure,
    dictionary: &[TestFunction],
    resolution: usize,
    tolerance: f64,
) -> Result<WassersteinWitness, ObservableError> {
    let mut best = f64::NEG_INFINITY;
    let mut witness = usize::MAX;
    let mut converged = true;
    let mut per_function = Vec::with_capacity(dictionary.len());
    for (i, f) in dictionary.iter().enumerate() {
        if !f.norm_bound.is_finite() || f.norm_bound == 0.0 {
            per_function.push(f64::NAN);
            continue;
        }
        let haar = integrate_haar(schema, f, resolution, tolerance)?;
        converged &= haar.converged;
        let emp = integrate_empirical(schema, f, nu);
        let dev = (emp - haar.value).norm() / f.norm_bound;
        per_function.push(dev);
        if dev > best {
            best = dev;
            witness = i;
        }
    }
    if witness == usize::MAX {
        return Err(ObservableError::EmptyDictionary);
    }
    Ok(WassersteinWitness { value: best, witness, converged, per_function })
}
