//! Group elements, lattice reduction and the chart premetric.
//!
//! Elements carry either exact rational coordinates or floats, tagged by the
//! variant.  Exact elements compose exactly; any operation mixing the two
//! demotes to floats.

use crate::matrix::rational_to_f64;
use crate::schema::{Family, NilGroupSchema};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElementError {
    #[error("coordinate length {got} does not match schema dimension {want}")]
    Dimension { got: usize, want: usize },
    #[error("schema mismatch between operands")]
    SchemaMismatch,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Coords {
    Exact(Vec<BigRational>),
    Float(Vec<f64>),
}

impl Coords {
    pub fn len(&self) -> usize {
        match self {
            Coords::Exact(v) => v.len(),
            Coords::Float(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    pub coords: Coords,
}

impl GroupElement {
    pub fn exact(coords: Vec<BigRational>) -> Self {
        GroupElement { coords: Coords::Exact(coords) }
    }

    pub fn floats(coords: Vec<f64>) -> Self {
        GroupElement { coords: Coords::Float(coords) }
    }

    pub fn exact_from_i64(coords: &[i64]) -> Self {
        GroupElement::exact(coords.iter().map(|&c| BigRational::from_integer(BigInt::from(c))).collect())
    }

    /// Parse coordinates given as `p/q` fraction pairs.
    pub fn exact_from_ratios(coords: &[(i64, i64)]) -> Self {
        GroupElement::exact(
            coords.iter().map(|&(p, q)| BigRational::new(BigInt::from(p), BigInt::from(q))).collect(),
        )
    }

    pub fn identity(schema: &NilGroupSchema) -> Self {
        GroupElement::exact(vec![BigRational::zero(); schema.dim()])
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.coords, Coords::Exact(_))
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match &self.coords {
            Coords::Exact(v) => v.iter().map(rational_to_f64).collect(),
            Coords::Float(v) => v.clone(),
        }
    }

    pub fn as_exact(&self) -> Option<&[BigRational]> {
        match &self.coords {
            Coords::Exact(v) => Some(v),
            Coords::Float(_) => None,
        }
    }
}

/// A point of X = N/Lambda: the canonical representative with base
/// coordinates in [0,1) and central coordinates in [0, 1/q).
#[derive(Debug, Clone, PartialEq)]
pub struct NilmanifoldPoint {
    rep: GroupElement,
}

impl NilmanifoldPoint {
    pub fn representative(&self) -> &GroupElement {
        &self.rep
    }

    pub fn into_representative(self) -> GroupElement {
        self.rep
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.rep.to_f64()
    }

    pub fn is_exact(&self) -> bool {
        self.rep.is_exact()
    }
}

// ---------------------------------------------------------------------------
// group law

fn check_dim(schema: &NilGroupSchema, g: &GroupElement) -> Result<(), ElementError> {
    if g.dim() != schema.dim() {
        return Err(ElementError::Dimension { got: g.dim(), want: schema.dim() });
    }
    Ok(())
}

fn cross3<T>(a: &[T], b: &[T]) -> [T; 3]
where
    T: Clone + std::ops::Mul<Output = T> + std::ops::Sub<Output = T>,
{
    [
        a[1].clone() * b[2].clone() - a[2].clone() * b[1].clone(),
        a[2].clone() * b[0].clone() - a[0].clone() * b[2].clone(),
        a[0].clone() * b[1].clone() - a[1].clone() * b[0].clone(),
    ]
}

macro_rules! law_impl {
    ($name:ident, $t:ty, $from_i64:expr) => {
        fn $name(schema: &NilGroupSchema, a: &[$t], b: &[$t]) -> Vec<$t> {
            let from = $from_i64;
            match &schema.family {
                Family::Torus { .. } => a.iter().zip(b).map(|(x, y)| x.clone() + y.clone()).collect(),
                Family::HeisenbergPolarized { d } => {
                    let d = *d;
                    let mut out: Vec<$t> =
                        a.iter().zip(b).map(|(x, y)| x.clone() + y.clone()).collect();
                    // t + t' + p . q'
                    let mut extra = from(0);
                    for i in 0..d {
                        extra = extra + a[i].clone() * b[d + i].clone();
                    }
                    out[2 * d] = out[2 * d].clone() + extra;
                    out
                }
                Family::HeisenbergB { d, b: form } => {
                    let d = *d;
                    let mut out: Vec<$t> =
                        a.iter().zip(b).map(|(x, y)| x.clone() + y.clone()).collect();
                    let mut extra = from(0);
                    for i in 0..2 * d {
                        for j in 0..2 * d {
                            let c = form.get(i, j);
                            if c != 0 {
                                extra = extra + from(c) * a[i].clone() * b[j].clone();
                            }
                        }
                    }
                    out[2 * d] = out[2 * d].clone() + extra;
                    out
                }
                Family::Free2Step3Gen => {
                    let mut out: Vec<$t> =
                        a.iter().zip(b).map(|(x, y)| x.clone() + y.clone()).collect();
                    let w = cross3(&a[0..3], &b[0..3]);
                    for k in 0..3 {
                        out[3 + k] = out[3 + k].clone() + w[k].clone();
                    }
                    out
                }
            }
        }
    };
}

law_impl!(law_exact, BigRational, |c: i64| BigRational::from_integer(BigInt::from(c)));
law_impl!(law_float, f64, |c: i64| c as f64);

macro_rules! inverse_impl {
    ($name:ident, $t:ty, $from_i64:expr) => {
        fn $name(schema: &NilGroupSchema, a: &[$t]) -> Vec<$t> {
            let from = $from_i64;
            match &schema.family {
                Family::Torus { .. } => a.iter().map(|x| -x.clone()).collect(),
                Family::HeisenbergPolarized { d } => {
                    let d = *d;
                    let mut out: Vec<$t> = a.iter().map(|x| -x.clone()).collect();
                    // (y,t)^-1 = (-y, -t + B(y,y))
                    let mut extra = from(0);
                    for i in 0..d {
                        extra = extra + a[i].clone() * a[d + i].clone();
                    }
                    out[2 * d] = out[2 * d].clone() + extra;
                    out
                }
                Family::HeisenbergB { d, b: form } => {
                    let d = *d;
                    let mut out: Vec<$t> = a.iter().map(|x| -x.clone()).collect();
                    let mut extra = from(0);
                    for i in 0..2 * d {
                        for j in 0..2 * d {
                            let c = form.get(i, j);
                            if c != 0 {
                                extra = extra + from(c) * a[i].clone() * a[j].clone();
                            }
                        }
                    }
                    out[2 * d] = out[2 * d].clone() + extra;
                    out
                }
                // x ^ x = 0, so inversion is plain negation
                Family::Free2Step3Gen => a.iter().map(|x| -x.clone()).collect(),
            }
        }
    };
}

inverse_impl!(inverse_exact, BigRational, |c: i64| BigRational::from_integer(BigInt::from(c)));
inverse_impl!(inverse_float, f64, |c: i64| c as f64);

impl NilGroupSchema {
    pub fn multiply(&self, g: &GroupElement, h: &GroupElement) -> Result<GroupElement, ElementError> {
        check_dim(self, g)?;
        check_dim(self, h)?;
        let coords = match (&g.coords, &h.coords) {
            (Coords::Exact(a), Coords::Exact(b)) => Coords::Exact(law_exact(self, a, b)),
            _ => Coords::Float(law_float(self, &g.to_f64(), &h.to_f64())),
        };
        Ok(GroupElement { coords })
    }

    pub fn inverse(&self, g: &GroupElement) -> Result<GroupElement, ElementError> {
        check_dim(self, g)?;
        let coords = match &g.coords {
            Coords::Exact(a) => Coords::Exact(inverse_exact(self, a)),
            Coords::Float(a) => Coords::Float(inverse_float(self, a)),
        };
        Ok(GroupElement { coords })
    }

    /// Canonical fundamental-domain representative: reduce base coordinates
    /// into [0,1) by a right lattice translation, then the central
    /// correction with denominator q.
    pub fn reduce(&self, g: &GroupElement) -> Result<NilmanifoldPoint, ElementError> {
        check_dim(self, g)?;
        let rep = match &g.coords {
            Coords::Exact(a) => {
                // right-multiply by lambda = (-k, c) with k = floor(base)
                let base_dim = self.base_dim();
                let k: Vec<BigRational> = a[..base_dim].iter().map(|x| x.floor()).collect();
                let neg_k: Vec<BigRational> = k.iter().map(|x| -x.clone()).collect();
                let mut lambda = neg_k;
                lambda.resize(self.dim(), BigRational::zero());
                let shifted = law_exact(self, a, &lambda);
                let mut out = shifted;
                for i in base_dim..self.dim() {
                    let (p, q) = self.lattice_spacing(i);
                    let spacing = BigRational::new(BigInt::from(p), BigInt::from(q));
                    let m = (&out[i] / &spacing).floor();
                    out[i] -= m * &spacing;
                }
                GroupElement::exact(out)
            }
            Coords::Float(a) => {
                let base_dim = self.base_dim();
                let k: Vec<f64> = a[..base_dim].iter().map(|x| x.floor()).collect();
                let mut lambda: Vec<f64> = k.iter().map(|x| -x).collect();
                lambda.resize(self.dim(), 0.0);
                let mut out = law_float(self, a, &lambda);
                for (i, v) in out.iter_mut().enumerate() {
                    let (p, q) = self.lattice_spacing(i);
                    let spacing = p as f64 / q as f64;
                    *v = v.rem_euclid(spacing);
                    if *v >= spacing {
                        *v = 0.0;
                    }
                }
                GroupElement { coords: Coords::Float(out) }
            }
        };
        Ok(NilmanifoldPoint { rep })
    }

    /// Generating set of the lattice (one element per coordinate, central
    /// ones scaled by 1/q).
    pub fn lattice_generators(&self) -> Vec<GroupElement> {
        (0..self.dim())
            .map(|i| {
                let (p, q) = self.lattice_spacing(i);
                let mut c = vec![BigRational::zero(); self.dim()];
                c[i] = BigRational::new(BigInt::from(p), BigInt::from(q));
                GroupElement::exact(c)
            })
            .collect()
    }

    /// Chart premetric: minimum over an enumerated window of lattice
    /// elements of the Euclidean norm of the coordinates of x^-1 y lambda,
    /// symmetrized.  `radius` is the enumeration radius in word lengths.
    pub fn distance_with_radius(
        &self,
        x: &NilmanifoldPoint,
        y: &NilmanifoldPoint,
        radius: i64,
    ) -> Result<f64, ElementError> {
        let a = self.one_sided_distance(x, y, radius)?;
        let b = self.one_sided_distance(y, x, radius)?;
        Ok(a.min(b))
    }

    pub fn distance(&self, x: &NilmanifoldPoint, y: &NilmanifoldPoint) -> Result<f64, ElementError> {
        self.distance_with_radius(x, y, 2)
    }

    fn one_sided_distance(
        &self,
        x: &NilmanifoldPoint,
        y: &NilmanifoldPoint,
        radius: i64,
    ) -> Result<f64, ElementError> {
        let xi = inverse_float(self, &x.rep.to_f64());
        let w = law_float(self, &xi, &y.rep.to_f64());
        let dim = self.dim();
        let base_dim = self.base_dim();
        let mut best = f64::INFINITY;
        // enumerate lattice elements coordinate-wise in [-radius, radius]
        let mut lambda = vec![0f64; dim];
        let mut idx = vec![-radius; dim];
        loop {
            for i in 0..dim {
                let (p, q) = self.lattice_spacing(i);
                lambda[i] = idx[i] as f64 * p as f64 / q as f64;
            }
            let cand = law_float(self, &w, &lambda);
            let norm2: f64 = cand.iter().map(|c| c * c).sum();
            if norm2 < best {
                best = norm2;
            }
            // odometer
            let mut carry = 0;
            loop {
                if carry == dim {
                    return Ok(best.sqrt());
                }
                idx[carry] += 1;
                if idx[carry] <= radius {
                    break;
                }
                idx[carry] = -radius;
                carry += 1;
            }
            let _ = base_dim;
        }
    }

    /// Drop the coordinates of Z and reduce in the quotient torus chart.
    pub fn project_to_factor(
        &self,
        x: &NilmanifoldPoint,
        z: &crate::schema::CentralSubgroupSpec,
    ) -> Result<NilmanifoldPoint, ElementError> {
        let keep = z.complement(self);
        let quotient = z.quotient_schema(self);
        let g = match &x.rep.coords {
            Coords::Exact(v) => GroupElement::exact(keep.iter().map(|&i| v[i].clone()).collect()),
            Coords::Float(v) => GroupElement::floats(keep.iter().map(|&i| v[i]).collect()),
        };
        quotient.reduce(&g)
    }

    /// Projection to the maximal torus factor T = N/([N,N] Lambda).
    pub fn project_to_torus(&self, x: &NilmanifoldPoint) -> Result<NilmanifoldPoint, ElementError> {
        match self.family {
            Family::Torus { .. } => Ok(x.clone()),
            _ => {
                let z = crate::schema::CentralSubgroupSpec {
                    indices: self.commutator_indices(),
                };
                self.project_to_factor(x, &z)
            }
        }
    }
}

/// Exact equality of reduced points (exact representatives only).
pub fn points_equal_exact(a: &NilmanifoldPoint, b: &NilmanifoldPoint) -> bool {
    match (&a.rep.coords, &b.rep.coords) {
        (Coords::Exact(u), Coords::Exact(v)) => u == v,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::IMat;
    use num_traits::Signed;

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(BigInt::from(p), BigInt::from(q))
    }

    #[test]
    fn free_2step_product_example() {
        let s = NilGroupSchema::free_2step();
        let g = GroupElement::exact_from_i64(&[1, 0, 0, 0, 0, 0]);
        let h = GroupElement::exact_from_i64(&[0, 1, 0, 0, 0, 0]);
        let p = s.multiply(&g, &h).unwrap();
        assert_eq!(p, GroupElement::exact_from_i64(&[1, 1, 0, 0, 0, 1]));
    }

    #[test]
    fn heisenberg_polarized_inverse_formula() {
        let s = NilGroupSchema::heisenberg(1, 1);
        // (p,q,t)^-1 = (-p,-q,-t+pq)
        let g = GroupElement::exact(vec![rat(2, 3), rat(1, 2), rat(1, 5)]);
        let inv = s.inverse(&g).unwrap();
        assert_eq!(inv, GroupElement::exact(vec![rat(-2, 3), rat(-1, 2), rat(-1, 5) + rat(2, 3) * rat(1, 2)]));
        let e = s.multiply(&g, &inv).unwrap();
        assert_eq!(e, GroupElement::identity(&s));
    }

    #[test]
    fn heisenberg_b_commutator_is_central_antisymmetrized_b() {
        // B = [[0,1],[0,0]]: [g,h] for y=(1,0), y'=(0,1) lands in the center
        // with value B(y,y') - B(y',y) = 1
        let s = NilGroupSchema::heisenberg_b(1, IMat::new(2, 2, vec![0, 1, 0, 0]), 1);
        let g = GroupElement::exact_from_i64(&[1, 0, 0]);
        let h = GroupElement::exact_from_i64(&[0, 1, 0]);
        let gi = s.inverse(&g).unwrap();
        let hi = s.inverse(&h).unwrap();
        let comm = s
            .multiply(&s.multiply(&g, &h).unwrap(), &s.multiply(&gi, &hi).unwrap())
            .unwrap();
        assert_eq!(comm, GroupElement::exact_from_i64(&[0, 0, 1]));
    }

    #[test]
    fn torus_reduce_is_fractional_part() {
        let s = NilGroupSchema::torus(2);
        let g = GroupElement::exact(vec![rat(3, 2), rat(-1, 4)]);
        let p = s.reduce(&g).unwrap();
        assert_eq!(p.representative(), &GroupElement::exact(vec![rat(1, 2), rat(3, 4)]));
        // idempotent
        let p2 = s.reduce(p.representative()).unwrap();
        assert_eq!(&p2, &p);
    }

    #[test]
    fn heisenberg_reduce_small_center_fixed() {
        let s = NilGroupSchema::heisenberg(1, 4);
        let g = GroupElement::exact(vec![rat(0, 1), rat(0, 1), rat(1, 5)]);
        // 1/5 < 1/4 so already reduced
        let p = s.reduce(&g).unwrap();
        assert_eq!(p.representative(), &g);
    }

    #[test]
    fn reduce_against_lattice_word_oracle() {
        // brute-force: reduce(g) must equal g * lambda for some lattice word,
        // with all coordinates in their fundamental windows
        let s = NilGroupSchema::heisenberg(1, 1);
        let g = GroupElement::exact(vec![rat(3, 2), rat(1, 5), rat(7, 10)]);
        let p = s.reduce(&g).unwrap();
        let rep = p.representative().as_exact().unwrap();
        assert!(rep.iter().all(|c| !c.is_negative() && c < &rat(1, 1)));
        // enumerate lattice elements with coordinates in [-3,3]
        let mut found = false;
        for a in -3..=3i64 {
            for b in -3..=3i64 {
                for c in -3..=3i64 {
                    let lambda = GroupElement::exact_from_i64(&[a, b, c]);
                    let prod = s.multiply(&g, &lambda).unwrap();
                    if prod == *p.representative() {
                        found = true;
                    }
                }
            }
        }
        assert!(found, "reduced point must differ from g by a lattice element");
    }

    #[test]
    fn distance_wraparound_and_symmetry() {
        let s = NilGroupSchema::torus(2);
        let x = s.reduce(&GroupElement::exact(vec![rat(0, 1), rat(0, 1)])).unwrap();
        let y = s.reduce(&GroupElement::exact(vec![rat(9, 10), rat(0, 1)])).unwrap();
        let d = s.distance(&x, &y).unwrap();
        assert!((d - 0.1).abs() < 1e-12);
        assert!((s.distance(&y, &x).unwrap() - d).abs() < 1e-12);
        assert_eq!(s.distance(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn projection_to_torus() {
        let s = NilGroupSchema::heisenberg(1, 1);
        let x = s.reduce(&GroupElement::exact(vec![rat(1, 3), rat(2, 3), rat(1, 2)])).unwrap();
        let t = s.project_to_torus(&x).unwrap();
        assert_eq!(t.representative(), &GroupElement::exact(vec![rat(1, 3), rat(2, 3)]));
    }
}
