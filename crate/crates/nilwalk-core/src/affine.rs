//! Automorphisms and affine maps of the supported nilmanifolds, and finitely
//! supported probability measures on them.
//!
//! Automorphism data is family-specific: torus matrices, Heisenberg triples
//! (A, eps, L), and the (A, B)-block form for the free 2-step group.  All
//! validation is exact integer/rational arithmetic.

use crate::element::{Coords, ElementError, GroupElement, NilmanifoldPoint};
use crate::matrix::{op_norm_f64, rational_to_f64, IMat, MatrixError};
use crate::schema::{CentralSubgroupSpec, Family, NilGroupSchema};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AffineError {
    #[error("automorphism data does not match schema family {0}")]
    FamilyMismatch(&'static str),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Element(#[from] ElementError),
    #[error("eps must be +1 or -1, got {0}")]
    BadEpsilon(i64),
    #[error("covector must have length {want}, got {got}")]
    CovectorLength { got: usize, want: usize },
    #[error("covector entry {index} has denominator not dividing q={q}")]
    CovectorDenominator { index: usize, q: i64 },
    #[error("matrix does not satisfy the form compatibility A^T B A = eps B")]
    FormIncompatible,
    #[error("image of lattice generator {index} is not a lattice element")]
    LatticeNotPreserved { index: usize },
    #[error("central subgroup is not invariant under the automorphism")]
    ZNotInvariant,
    #[error("weights must be positive and sum exactly to 1")]
    NotNormalized,
    #[error("measure support must be nonempty")]
    EmptySupport,
    #[error("serialization requires exact rational coordinates")]
    NotExact,
}

mod rat_vec {
    use super::*;
    use serde::de::Error;

    pub fn serialize<S: serde::Serializer>(v: &[BigRational], s: S) -> Result<S::Ok, S::Error> {
        let strings: Vec<String> = v.iter().map(|r| r.to_string()).collect();
        strings.serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<BigRational>, D::Error> {
        let strings = Vec::<String>::deserialize(d)?;
        strings
            .iter()
            .map(|t| BigRational::from_str(t).map_err(|e| D::Error::custom(format!("bad rational {t:?}: {e}"))))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Automorphism {
    #[serde(rename = "torus")]
    Torus {
        #[serde(rename = "A")]
        a: IMat,
    },
    /// (y, t) -> (A y, eps t + L y).  Admissible iff A^T B A = eps B exactly,
    /// where B is the schema's polarization form.
    #[serde(rename = "heisenberg")]
    Heisenberg {
        #[serde(rename = "A")]
        a: IMat,
        eps: i64,
        #[serde(rename = "L", with = "rat_vec")]
        l: Vec<BigRational>,
    },
    /// g_{A,B}: (x, y) -> (A x, B x + D y) with D = det(A) (A^T)^{-1}.
    #[serde(rename = "free-2step")]
    Free2Step {
        #[serde(rename = "A")]
        a: IMat,
        #[serde(rename = "B")]
        b: IMat,
    },
}

fn check_unimodular(a: &IMat, n: usize) -> Result<(), AffineError> {
    if a.rows != n || a.cols != n {
        return Err(MatrixError::Shape(a.rows, a.cols, n, n).into());
    }
    let d = a.det()?;
    if d != 1 && d != -1 {
        return Err(MatrixError::NotUnimodular(d).into());
    }
    Ok(())
}

fn coords_in_lattice(schema: &NilGroupSchema, coords: &[BigRational]) -> bool {
    coords.iter().enumerate().all(|(i, c)| {
        let (_, q) = schema.lattice_spacing(i);
        (c * BigRational::from_integer(BigInt::from(q))).is_integer()
    })
}

impl Automorphism {
    pub fn identity(schema: &NilGroupSchema) -> Self {
        match &schema.family {
            Family::Torus { n } => Automorphism::Torus { a: IMat::identity(*n) },
            Family::HeisenbergPolarized { d } | Family::HeisenbergB { d, .. } => Automorphism::Heisenberg {
                a: IMat::identity(2 * d),
                eps: 1,
                l: vec![BigRational::zero(); 2 * d],
            },
            Family::Free2Step3Gen => {
                Automorphism::Free2Step { a: IMat::identity(3), b: IMat::zero(3, 3) }
            }
        }
    }

    pub fn torus(a: IMat) -> Self {
        Automorphism::Torus { a }
    }

    pub fn heisenberg(a: IMat, eps: i64, l: Vec<BigRational>) -> Self {
        Automorphism::Heisenberg { a, eps, l }
    }

    pub fn heisenberg_linear(a: IMat, eps: i64) -> Self {
        let n = a.rows;
        Automorphism::Heisenberg { a, eps, l: vec![BigRational::zero(); n] }
    }

    pub fn free_2step(a: IMat, b: IMat) -> Self {
        Automorphism::Free2Step { a, b }
    }

    pub fn validate(&self, schema: &NilGroupSchema) -> Result<(), AffineError> {
        match (self, &schema.family) {
            (Automorphism::Torus { a }, Family::Torus { n }) => check_unimodular(a, *n)?,
            (
                Automorphism::Heisenberg { a, eps, l },
                Family::HeisenbergPolarized { d } | Family::HeisenbergB { d, .. },
            ) => {
                check_unimodular(a, 2 * d)?;
                if *eps != 1 && *eps != -1 {
                    return Err(AffineError::BadEpsilon(*eps));
                }
                if l.len() != 2 * d {
                    return Err(AffineError::CovectorLength { got: l.len(), want: 2 * d });
                }
                let q = BigRational::from_integer(BigInt::from(schema.q));
                for (i, c) in l.iter().enumerate() {
                    if !(c * &q).is_integer() {
                        return Err(AffineError::CovectorDenominator { index: i, q: schema.q });
                    }
                }
                let form = schema.polarization_matrix().expect("heisenberg has a form");
                let lhs = a.transpose().mul(&form)?.mul(a)?;
                let rhs = form.scale(*eps)?;
                if lhs != rhs {
                    return Err(AffineError::FormIncompatible);
                }
            }
            (Automorphism::Free2Step { a, b }, Family::Free2Step3Gen) => {
                check_unimodular(a, 3)?;
                if b.rows != 3 || b.cols != 3 {
                    return Err(MatrixError::Shape(b.rows, b.cols, 3, 3).into());
                }
            }
            _ => return Err(AffineError::FamilyMismatch(schema.family_tag())),
        }
        // lattice preservation in both directions, on generators
        let inv = self.inverse()?;
        for dir in [self, &inv] {
            for (i, gen) in schema.lattice_generators().iter().enumerate() {
                let img = dir.apply_element(schema, gen)?;
                let coords = img.as_exact().expect("generators are exact");
                if !coords_in_lattice(schema, coords) {
                    return Err(AffineError::LatticeNotPreserved { index: i });
                }
            }
        }
        Ok(())
    }

    /// The lower-right block of g_{A,B}: D = det(A) (A^T)^{-1}.
    fn d_matrix(a: &IMat) -> Result<IMat, MatrixError> {
        let det = a.det()?;
        a.transpose().inverse_unimodular()?.scale(det)
    }

    pub fn apply_exact(
        &self,
        schema: &NilGroupSchema,
        coords: &[BigRational],
    ) -> Result<Vec<BigRational>, AffineError> {
        if coords.len() != schema.dim() {
            return Err(ElementError::Dimension { got: coords.len(), want: schema.dim() }.into());
        }
        match self {
            Automorphism::Torus { a } => {
                Ok(mat_mul_rational(a, coords))
            }
            Automorphism::Heisenberg { a, eps, l } => {
                let base = &coords[..coords.len() - 1];
                let t = &coords[coords.len() - 1];
                let mut out = mat_mul_rational(a, base);
                let mut central = BigRational::from_integer(BigInt::from(*eps)) * t;
                for (li, yi) in l.iter().zip(base) {
                    central += li * yi;
                }
                out.push(central);
                Ok(out)
            }
            Automorphism::Free2Step { a, b } => {
                let x = &coords[..3];
                let y = &coords[3..];
                let d = Self::d_matrix(a)?;
                let mut out = mat_mul_rational(a, x);
                let bx = mat_mul_rational(b, x);
                let dy = mat_mul_rational(&d, y);
                for k in 0..3 {
                    out.push(&bx[k] + &dy[k]);
                }
                Ok(out)
            }
        }
    }

    pub fn apply_f64(&self, schema: &NilGroupSchema, coords: &[f64]) -> Result<Vec<f64>, AffineError> {
        if coords.len() != schema.dim() {
            return Err(ElementError::Dimension { got: coords.len(), want: schema.dim() }.into());
        }
        match self {
            Automorphism::Torus { a } => Ok(mat_mul_f64(a, coords)),
            Automorphism::Heisenberg { a, eps, l } => {
                let base = &coords[..coords.len() - 1];
                let t = coords[coords.len() - 1];
                let mut out = mat_mul_f64(a, base);
                let mut central = *eps as f64 * t;
                for (li, yi) in l.iter().zip(base) {
                    central += rational_to_f64(li) * yi;
                }
                out.push(central);
                Ok(out)
            }
            Automorphism::Free2Step { a, b } => {
                let d = Self::d_matrix(a)?;
                let mut out = mat_mul_f64(a, &coords[..3]);
                let bx = mat_mul_f64(b, &coords[..3]);
                let dy = mat_mul_f64(&d, &coords[3..]);
                for k in 0..3 {
                    out.push(bx[k] + dy[k]);
                }
                Ok(out)
            }
        }
    }

    pub fn apply_element(&self, schema: &NilGroupSchema, g: &GroupElement) -> Result<GroupElement, AffineError> {
        match &g.coords {
            Coords::Exact(v) => Ok(GroupElement::exact(self.apply_exact(schema, v)?)),
            Coords::Float(v) => Ok(GroupElement::floats(self.apply_f64(schema, v)?)),
        }
    }

    pub fn compose(&self, other: &Automorphism) -> Result<Automorphism, AffineError> {
        match (self, other) {
            (Automorphism::Torus { a: a1 }, Automorphism::Torus { a: a2 }) => {
                Ok(Automorphism::Torus { a: a1.mul(a2)? })
            }
            (
                Automorphism::Heisenberg { a: a1, eps: e1, l: l1 },
                Automorphism::Heisenberg { a: a2, eps: e2, l: l2 },
            ) => {
                let a = a1.mul(a2)?;
                let e1r = BigRational::from_integer(BigInt::from(*e1));
                // L = e1 L2 + L1 A2
                let l: Vec<BigRational> = (0..a.cols)
                    .map(|j| {
                        let mut v = &e1r * &l2[j];
                        for i in 0..a2.rows {
                            v += &l1[i] * BigRational::from_integer(BigInt::from(a2.get(i, j)));
                        }
                        v
                    })
                    .collect();
                Ok(Automorphism::Heisenberg { a, eps: e1 * e2, l })
            }
            (
                Automorphism::Free2Step { a: a1, b: b1 },
                Automorphism::Free2Step { a: a2, b: b2 },
            ) => {
                let d1 = Self::d_matrix(a1)?;
                Ok(Automorphism::Free2Step { a: a1.mul(a2)?, b: b1.mul(a2)?.add(&d1.mul(b2)?)? })
            }
            _ => Err(AffineError::FamilyMismatch("mixed")),
        }
    }

    pub fn inverse(&self) -> Result<Automorphism, AffineError> {
        match self {
            Automorphism::Torus { a } => Ok(Automorphism::Torus { a: a.inverse_unimodular()? }),
            Automorphism::Heisenberg { a, eps, l } => {
                let ai = a.inverse_unimodular()?;
                // L' = -eps L A^{-1}
                let er = BigRational::from_integer(BigInt::from(-*eps));
                let li: Vec<BigRational> = (0..ai.cols)
                    .map(|j| {
                        let mut v = BigRational::zero();
                        for i in 0..ai.rows {
                            v += &l[i] * BigRational::from_integer(BigInt::from(ai.get(i, j)));
                        }
                        v * &er
                    })
                    .collect();
                Ok(Automorphism::Heisenberg { a: ai, eps: *eps, l: li })
            }
            Automorphism::Free2Step { a, b } => {
                let ai = a.inverse_unimodular()?;
                let det = a.det()?;
                // B' = -det(A) A^T B A^{-1}
                let bi = a.transpose().mul(b)?.mul(&ai)?.scale(-det)?;
                Ok(Automorphism::Free2Step { a: ai, b: bi })
            }
        }
    }

    /// The induced matrix on the maximal torus factor.
    pub fn base_matrix(&self) -> &IMat {
        match self {
            Automorphism::Torus { a } => a,
            Automorphism::Heisenberg { a, .. } => a,
            Automorphism::Free2Step { a, .. } => a,
        }
    }

    /// Integer matrix of the action restricted to the central subgroup Z,
    /// in the basis of Z's lattice.
    pub fn theta_z(&self, schema: &NilGroupSchema, z: &CentralSubgroupSpec) -> Result<IMat, AffineError> {
        match (self, &schema.family) {
            (Automorphism::Torus { a }, Family::Torus { .. }) => {
                let idx = &z.indices;
                for (i, _) in (0..a.rows).enumerate() {
                    for &j in idx {
                        if !idx.contains(&i) && a.get(i, j) != 0 {
                            return Err(AffineError::ZNotInvariant);
                        }
                    }
                }
                let k = idx.len();
                let mut sub = IMat::zero(k, k);
                for (r, &i) in idx.iter().enumerate() {
                    for (c, &j) in idx.iter().enumerate() {
                        sub.set(r, c, a.get(i, j));
                    }
                }
                let d = sub.det()?;
                if d != 1 && d != -1 {
                    return Err(AffineError::ZNotInvariant);
                }
                Ok(sub)
            }
            (Automorphism::Heisenberg { eps, .. }, _) => {
                if z.indices != schema.commutator_indices() {
                    return Err(AffineError::ZNotInvariant);
                }
                Ok(IMat::new(1, 1, vec![*eps]))
            }
            (Automorphism::Free2Step { a, .. }, _) => {
                if z.indices != schema.commutator_indices() {
                    return Err(AffineError::ZNotInvariant);
                }
                Ok(Self::d_matrix(a)?)
            }
            _ => Err(AffineError::FamilyMismatch(schema.family_tag())),
        }
    }

    /// gamma . a with chi_{gamma.a} = chi_a o gamma^{-1} on Z: a -> (M^{-1})^T a.
    pub fn dual_action(
        &self,
        schema: &NilGroupSchema,
        z: &CentralSubgroupSpec,
        a: &[i64],
    ) -> Result<Vec<i64>, AffineError> {
        let m = self.theta_z(schema, z)?;
        Ok(m.inverse_unimodular()?.transpose().mul_vec(a)?)
    }

    /// Same dual action for frequencies on the maximal torus factor.
    pub fn dual_action_base(&self, a: &[i64]) -> Result<Vec<i64>, AffineError> {
        Ok(self.base_matrix().inverse_unimodular()?.transpose().mul_vec(a)?)
    }

    /// Full chart matrix (the automorphism is linear in these coordinates).
    pub fn full_matrix_f64(&self, schema: &NilGroupSchema) -> Vec<f64> {
        let dim = schema.dim();
        let mut m = vec![0f64; dim * dim];
        match self {
            Automorphism::Torus { a } => {
                for i in 0..dim {
                    for j in 0..dim {
                        m[i * dim + j] = a.get(i, j) as f64;
                    }
                }
            }
            Automorphism::Heisenberg { a, eps, l } => {
                let n = dim - 1;
                for i in 0..n {
                    for j in 0..n {
                        m[i * dim + j] = a.get(i, j) as f64;
                    }
                }
                for j in 0..n {
                    m[n * dim + j] = rational_to_f64(&l[j]);
                }
                m[n * dim + n] = *eps as f64;
            }
            Automorphism::Free2Step { a, b } => {
                let d = Self::d_matrix(a).expect("validated");
                for i in 0..3 {
                    for j in 0..3 {
                        m[i * dim + j] = a.get(i, j) as f64;
                        m[(3 + i) * dim + j] = b.get(i, j) as f64;
                        m[(3 + i) * dim + (3 + j)] = d.get(i, j) as f64;
                    }
                }
            }
        }
        m
    }

    /// Sound Lipschitz upper bound w.r.t. the chart premetric: the operator
    /// norm of the (constant) coordinate differential.  Sound because the
    /// premetric minimizes over lattice translates, which the automorphism
    /// permutes.
    pub fn lipschitz_upper(&self, schema: &NilGroupSchema) -> f64 {
        let dim = schema.dim();
        op_norm_f64(dim, dim, &self.full_matrix_f64(schema)).max(1.0)
    }

    pub fn is_identity(&self) -> bool {
        match self {
            Automorphism::Torus { a } => a.is_identity(),
            Automorphism::Heisenberg { a, eps, l } => {
                a.is_identity() && *eps == 1 && l.iter().all(|c| c.is_zero())
            }
            Automorphism::Free2Step { a, b } => a.is_identity() && b.data.iter().all(|&v| v == 0),
        }
    }
}

fn mat_mul_rational(m: &IMat, v: &[BigRational]) -> Vec<BigRational> {
    (0..m.rows)
        .map(|i| {
            let mut s = BigRational::zero();
            for j in 0..m.cols {
                let c = m.get(i, j);
                if c != 0 {
                    s += BigRational::from_integer(BigInt::from(c)) * &v[j];
                }
            }
            s
        })
        .collect()
}

fn mat_mul_f64(m: &IMat, v: &[f64]) -> Vec<f64> {
    (0..m.rows)
        .map(|i| (0..m.cols).map(|j| m.get(i, j) as f64 * v[j]).sum())
        .collect()
}

/// x -> reduce(n . gamma(x)).
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub gamma: Automorphism,
    pub translation: GroupElement,
}

impl AffineMap {
    pub fn identity(schema: &NilGroupSchema) -> Self {
        AffineMap { gamma: Automorphism::identity(schema), translation: GroupElement::identity(schema) }
    }

    pub fn from_parts(gamma: Automorphism, translation: GroupElement) -> Self {
        AffineMap { gamma, translation }
    }

    pub fn translation_by(schema: &NilGroupSchema, n: GroupElement) -> Self {
        AffineMap { gamma: Automorphism::identity(schema), translation: n }
    }

    pub fn automorphism(schema: &NilGroupSchema, gamma: Automorphism) -> Self {
        AffineMap { gamma, translation: GroupElement::identity(schema) }
    }

    pub fn validate(&self, schema: &NilGroupSchema) -> Result<(), AffineError> {
        self.gamma.validate(schema)?;
        if self.translation.dim() != schema.dim() {
            return Err(
                ElementError::Dimension { got: self.translation.dim(), want: schema.dim() }.into(),
            );
        }
        Ok(())
    }

    pub fn theta(&self) -> &Automorphism {
        &self.gamma
    }

    /// Unreduced action on group elements: g -> n . gamma(g).
    pub fn apply_group(&self, schema: &NilGroupSchema, g: &GroupElement) -> Result<GroupElement, AffineError> {
        let img = self.gamma.apply_element(schema, g)?;
        Ok(schema.multiply(&self.translation, &img)?)
    }

    pub fn apply(&self, schema: &NilGroupSchema, x: &NilmanifoldPoint) -> Result<NilmanifoldPoint, AffineError> {
        let g = self.apply_group(schema, x.representative())?;
        Ok(schema.reduce(&g)?)
    }

    /// compose(g, h) acts as g after h.
    pub fn compose(&self, schema: &NilGroupSchema, other: &AffineMap) -> Result<AffineMap, AffineError> {
        let gamma = self.gamma.compose(&other.gamma)?;
        let translated = self.gamma.apply_element(schema, &other.translation)?;
        let translation = schema.multiply(&self.translation, &translated)?;
        Ok(AffineMap { gamma, translation })
    }

    pub fn inverse(&self, schema: &NilGroupSchema) -> Result<AffineMap, AffineError> {
        let gamma = self.gamma.inverse()?;
        let n_inv = schema.inverse(&self.translation)?;
        let translation = gamma.apply_element(schema, &n_inv)?;
        Ok(AffineMap { gamma, translation })
    }

    /// Translations are premetric isometries, so only the linear part counts.
    pub fn lipschitz_upper(&self, schema: &NilGroupSchema) -> f64 {
        self.gamma.lipschitz_upper(schema)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMeasure {
    atoms: Vec<(AffineMap, BigRational)>,
}

impl FiniteMeasure {
    pub fn new(atoms: Vec<(AffineMap, BigRational)>) -> Result<Self, AffineError> {
        if atoms.is_empty() {
            return Err(AffineError::EmptySupport);
        }
        let mut total = BigRational::zero();
        for (_, w) in &atoms {
            if !w.is_positive() {
                return Err(AffineError::NotNormalized);
            }
            total += w;
        }
        if !total.is_one() {
            return Err(AffineError::NotNormalized);
        }
        Ok(FiniteMeasure { atoms })
    }

    pub fn dirac(map: AffineMap) -> Self {
        FiniteMeasure { atoms: vec![(map, BigRational::one())] }
    }

    pub fn uniform(maps: Vec<AffineMap>) -> Result<Self, AffineError> {
        if maps.is_empty() {
            return Err(AffineError::EmptySupport);
        }
        let w = BigRational::new(BigInt::one(), BigInt::from(maps.len() as i64));
        Ok(FiniteMeasure { atoms: maps.into_iter().map(|m| (m, w.clone())).collect() })
    }

    pub fn atoms(&self) -> &[(AffineMap, BigRational)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn validate(&self, schema: &NilGroupSchema) -> Result<(), AffineError> {
        for (map, _) in &self.atoms {
            map.validate(schema)?;
        }
        let total: BigRational = self.atoms.iter().map(|(_, w)| w.clone()).sum();
        if !total.is_one() {
            return Err(AffineError::NotNormalized);
        }
        Ok(())
    }

    /// Cumulative weight table for sampling.
    pub fn cumulative_f64(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.atoms.len());
        for (_, w) in &self.atoms {
            acc += rational_to_f64(w);
            out.push(acc);
        }
        if let Some(last) = out.last_mut() {
            *last = 1.0;
        }
        out
    }

    /// C_beta = sum of weight * lipschitz_upper^beta.
    pub fn exp_moment(&self, schema: &NilGroupSchema, beta: f64) -> f64 {
        self.atoms
            .iter()
            .map(|(g, w)| rational_to_f64(w) * g.lipschitz_upper(schema).powf(beta))
            .sum()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomWire {
    automorphism: Automorphism,
    translation: Vec<String>,
    weight: String,
}

impl Serialize for FiniteMeasure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::Error;
        let wires: Result<Vec<AtomWire>, S::Error> = self
            .atoms
            .iter()
            .map(|(map, w)| {
                let coords = map
                    .translation
                    .as_exact()
                    .ok_or_else(|| S::Error::custom(AffineError::NotExact.to_string()))?;
                Ok(AtomWire {
                    automorphism: map.gamma.clone(),
                    translation: coords.iter().map(|c| c.to_string()).collect(),
                    weight: w.to_string(),
                })
            })
            .collect();
        wires?.serialize(s)
    }
}

impl<'de> Deserialize<'de> for FiniteMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let wires = Vec::<AtomWire>::deserialize(d)?;
        let parse = |t: &str| {
            BigRational::from_str(t).map_err(|e| D::Error::custom(format!("bad rational {t:?}: {e}")))
        };
        let mut atoms = Vec::with_capacity(wires.len());
        for w in wires {
            let coords: Result<Vec<BigRational>, D::Error> =
                w.translation.iter().map(|t| parse(t)).collect();
            atoms.push((
                AffineMap { gamma: w.automorphism, translation: GroupElement::exact(coords?) },
                parse(&w.weight)?,
            ));
        }
        FiniteMeasure::new(atoms).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use num_complex::Complex64;

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(BigInt::from(p), BigInt::from(q))
    }

    fn heis_omega() -> NilGroupSchema {
        NilGroupSchema::heisenberg_b(1, IMat::new(2, 2, vec![0, 1, -1, 0]), 1)
    }

    #[test]
    fn validation_examples() {
        let t = NilGroupSchema::torus(2);
        assert!(Automorphism::identity(&t).validate(&t).is_ok());
        assert!(Automorphism::torus(IMat::new(2, 2, vec![2, 1, 1, 1])).validate(&t).is_ok());
        assert!(Automorphism::torus(IMat::new(2, 2, vec![2, 0, 0, 1])).validate(&t).is_err());

        let h = NilGroupSchema::heisenberg(1, 2);
        // denominator 2q violates the covector constraint
        let bad = Automorphism::heisenberg(IMat::identity(2), 1, vec![rat(1, 4), rat(0, 1)]);
        assert!(matches!(bad.validate(&h), Err(AffineError::CovectorDenominator { .. })));
        let ok = Automorphism::heisenberg(IMat::identity(2), 1, vec![rat(1, 2), rat(0, 1)]);
        assert!(ok.validate(&h).is_ok());
    }

    #[test]
    fn antisymmetric_form_admits_all_of_sl2() {
        let h = heis_omega();
        for a in [vec![2, 1, 1, 1], vec![1, 1, 1, 2], vec![0, -1, 1, 0], vec![1, 1, 0, 1]] {
            let aut = Automorphism::heisenberg_linear(IMat::new(2, 2, a), 1);
            aut.validate(&h).unwrap();
        }
        // det = -1 requires eps = -1
        let flip = IMat::new(2, 2, vec![0, 1, 1, 0]);
        assert!(Automorphism::heisenberg_linear(flip.clone(), 1).validate(&h).is_err());
        assert!(Automorphism::heisenberg_linear(flip, -1).validate(&h).is_ok());
    }

    #[test]
    fn polarized_form_is_restrictive() {
        let h = NilGroupSchema::heisenberg(1, 1);
        let aut = Automorphism::heisenberg_linear(IMat::new(2, 2, vec![2, 1, 1, 1]), 1);
        assert!(matches!(aut.validate(&h), Err(AffineError::FormIncompatible)));
        let diag = Automorphism::heisenberg_linear(IMat::new(2, 2, vec![-1, 0, 0, -1]), 1);
        assert!(diag.validate(&h).is_ok());
    }

    #[test]
    fn torus_apply_example() {
        let t = NilGroupSchema::torus(2);
        let g = AffineMap::automorphism(&t, Automorphism::torus(IMat::new(2, 2, vec![2, 1, 1, 1])));
        let x = t.reduce(&GroupElement::exact(vec![rat(1, 3), rat(1, 3)])).unwrap();
        let y = g.apply(&t, &x).unwrap();
        assert_eq!(y.representative(), &GroupElement::exact(vec![rat(0, 1), rat(2, 3)]));
    }

    #[test]
    fn lattice_translation_fixes_points() {
        // on the torus every lattice translation acts trivially; on a
        // nilpotent group only central lattice translations do
        let t = NilGroupSchema::torus(2);
        let g = AffineMap::translation_by(&t, GroupElement::exact_from_i64(&[3, -2]));
        let x = t.reduce(&GroupElement::exact(vec![rat(1, 3), rat(2, 5)])).unwrap();
        assert_eq!(g.apply(&t, &x).unwrap(), x);

        let h = heis_omega();
        let central = AffineMap::translation_by(&h, GroupElement::exact_from_i64(&[0, 0, 3]));
        let y = h.reduce(&GroupElement::exact(vec![rat(1, 3), rat(2, 5), rat(1, 7)])).unwrap();
        assert_eq!(central.apply(&h, &y).unwrap(), y);
        let noncentral = AffineMap::translation_by(&h, GroupElement::exact_from_i64(&[1, -2, 0]));
        assert_ne!(noncentral.apply(&h, &y).unwrap(), y);
    }

    #[test]
    fn inverse_undoes_apply_exactly() {
        let h = heis_omega();
        let g = AffineMap::from_parts(
            Automorphism::heisenberg_linear(IMat::new(2, 2, vec![2, 1, 1, 1]), 1),
            GroupElement::exact(vec![rat(1, 3), rat(0, 1), rat(2, 7)]),
        );
        g.validate(&h).unwrap();
        let gi = g.inverse(&h).unwrap();
        let x = h.reduce(&GroupElement::exact(vec![rat(1, 5), rat(3, 7), rat(1, 2)])).unwrap();
        assert_eq!(gi.apply(&h, &g.apply(&h, &x).unwrap()).unwrap(), x);
        let e = g.compose(&h, &gi).unwrap();
        assert!(e.gamma.is_identity());
        assert_eq!(h.reduce(&e.translation).unwrap().representative(), &GroupElement::identity(&h));
    }

    #[test]
    fn theta_is_a_homomorphism() {
        let h = heis_omega();
        let g1 = AffineMap::from_parts(
            Automorphism::heisenberg_linear(IMat::new(2, 2, vec![2, 1, 1, 1]), 1),
            GroupElement::exact(vec![rat(1, 2), rat(1, 3), rat(0, 1)]),
        );
        let g2 = AffineMap::from_parts(
            Automorphism::heisenberg_linear(IMat::new(2, 2, vec![1, 1, 1, 2]), 1),
            GroupElement::exact(vec![rat(0, 1), rat(1, 5), rat(1, 4)]),
        );
        let c = g1.compose(&h, &g2).unwrap();
        assert_eq!(c.gamma, g1.gamma.compose(&g2.gamma).unwrap());
        // composed automorphism revalidates
        c.gamma.validate(&h).unwrap();
    }

    #[test]
    fn composition_matches_pointwise_action() {
        let s = NilGroupSchema::free_2step();
        let g1 = AffineMap::from_parts(
            Automorphism::free_2step(
                IMat::new(3, 3, vec![0, 1, 0, 0, 0, 1, 1, 0, 0]),
                IMat::new(3, 3, vec![1, 0, 0, 0, 0, 0, 0, 0, 1]),
            ),
            GroupElement::exact_from_ratios(&[(1, 2), (0, 1), (0, 1), (0, 1), (1, 3), (0, 1)]),
        );
        let g2 = AffineMap::from_parts(
            Automorphism::free_2step(IMat::new(3, 3, vec![1, 1, 0, 0, 1, 0, 0, 0, 1]), IMat::zero(3, 3)),
            GroupElement::exact_from_ratios(&[(0, 1), (1, 5), (0, 1), (0, 1), (0, 1), (1, 7)]),
        );
        g1.validate(&s).unwrap();
        g2.validate(&s).unwrap();
        let c = g1.compose(&s, &g2).unwrap();
        c.validate(&s).unwrap();
        let x = s
            .reduce(&GroupElement::exact_from_ratios(&[(1, 3), (1, 4), (1, 5), (1, 6), (1, 7), (1, 8)]))
            .unwrap();
        assert_eq!(c.apply(&s, &x).unwrap(), g1.apply(&s, &g2.apply(&s, &x).unwrap()).unwrap());
    }

    #[test]
    fn free_2step_automorphism_is_group_homomorphism() {
        let s = NilGroupSchema::free_2step();
        let aut = Automorphism::free_2step(
            IMat::new(3, 3, vec![1, 2, 0, 0, 1, 0, 1, 0, 1]),
            IMat::new(3, 3, vec![0, 1, 0, 2, 0, 0, 0, 0, 3]),
        );
        aut.validate(&s).unwrap();
        let g = GroupElement::exact_from_ratios(&[(1, 2), (1, 3), (2, 5), (0, 1), (1, 7), (3, 4)]);
        let h = GroupElement::exact_from_ratios(&[(2, 3), (1, 5), (1, 2), (1, 9), (0, 1), (1, 6)]);
        let lhs = aut.apply_element(&s, &s.multiply(&g, &h).unwrap()).unwrap();
        let rhs = s
            .multiply(&aut.apply_element(&s, &g).unwrap(), &aut.apply_element(&s, &h).unwrap())
            .unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn heisenberg_center_action_is_sign() {
        let h = heis_omega();
        let z = CentralSubgroupSpec::full_center(&h);
        for (a, eps) in [(vec![2, 1, 1, 1], 1), (vec![0, 1, 1, 0], -1)] {
            let aut = Automorphism::heisenberg_linear(IMat::new(2, 2, a), eps);
            aut.validate(&h).unwrap();
            let m = aut.theta_z(&h, &z).unwrap();
            assert_eq!(m, IMat::new(1, 1, vec![eps]));
        }
    }

    #[test]
    fn dual_action_matches_character_composition() {
        // chi_{gamma.a}(x) = chi_a(gamma^{-1} x) on a grid
        let t = NilGroupSchema::torus(2);
        let z = CentralSubgroupSpec::full_center(&t);
        let aut = Automorphism::torus(IMat::new(2, 2, vec![2, 1, 1, 1]));
        let inv = aut.inverse().unwrap();
        for a in [[1i64, 0], [0, 1], [2, -3], [5, 5]] {
            let ga = aut.dual_action(&t, &z, &a).unwrap();
            for i in 0..10 {
                for j in 0..10 {
                    let x = [i as f64 / 10.0, j as f64 / 10.0];
                    let xi = inv.apply_f64(&t, &x).unwrap();
                    let lhs = Complex64::from_polar(
                        1.0,
                        std::f64::consts::TAU * (ga[0] as f64 * x[0] + ga[1] as f64 * x[1]),
                    );
                    let rhs = Complex64::from_polar(
                        1.0,
                        std::f64::consts::TAU * (a[0] as f64 * xi[0] + a[1] as f64 * xi[1]),
                    );
                    assert!((lhs - rhs).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn dual_action_is_contravariant() {
        let t = NilGroupSchema::torus(3);
        let z = CentralSubgroupSpec::full_center(&t);
        let g1 = Automorphism::torus(IMat::new(3, 3, vec![1, 1, 0, 0, 1, 0, 0, 0, 1]));
        let g2 = Automorphism::torus(IMat::new(3, 3, vec![0, 0, 1, 1, 0, 0, 0, 1, 0]));
        let comp = g1.compose(&g2).unwrap();
        let mut rng = CounterRng::new(11, &[4]);
        for _ in 0..50 {
            let a: Vec<i64> = (0..3).map(|_| rng.next_index(11) as i64 - 5).collect();
            let lhs = comp.dual_action(&t, &z, &a).unwrap();
            let rhs = g1.dual_action(&t, &z, &g2.dual_action(&t, &z, &a).unwrap()).unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn lipschitz_values() {
        let t = NilGroupSchema::torus(2);
        let id = AffineMap::identity(&t);
        assert!((id.lipschitz_upper(&t) - 1.0).abs() < 1e-9);
        let a = Automorphism::torus(IMat::new(2, 2, vec![2, 1, 1, 1]));
        let golden = (3.0 + 5f64.sqrt()) / 2.0;
        assert!((a.lipschitz_upper(&t) - golden).abs() < 1e-9);
        let tr = AffineMap::translation_by(&t, GroupElement::exact(vec![rat(1, 3), rat(2, 7)]));
        assert!((tr.lipschitz_upper(&t) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lipschitz_submultiplicative() {
        let h = heis_omega();
        let g1 = Automorphism::heisenberg_linear(IMat::new(2, 2, vec![2, 1, 1, 1]), 1);
        let g2 = Automorphism::heisenberg_linear(IMat::new(2, 2, vec![1, 2, 0, 1]), 1);
        let c = g1.compose(&g2).unwrap();
        assert!(
            c.lipschitz_upper(&h) <= g1.lipschitz_upper(&h) * g2.lipschitz_upper(&h) * 1.01
        );
    }

    #[test]
    fn exp_moment_values() {
        let t = NilGroupSchema::torus(2);
        let id = FiniteMeasure::dirac(AffineMap::identity(&t));
        assert!((id.exp_moment(&t, 1.0) - 1.0).abs() < 1e-9);
        let a = IMat::new(2, 2, vec![2, 1, 1, 1]);
        let ai = a.inverse_unimodular().unwrap();
        let mu = FiniteMeasure::uniform(vec![
            AffineMap::automorphism(&t, Automorphism::torus(a.clone())),
            AffineMap::automorphism(&t, Automorphism::torus(ai.clone())),
        ])
        .unwrap();
        let want = (a.op_norm() + ai.op_norm()) / 2.0;
        assert!((mu.exp_moment(&t, 1.0) - want).abs() < 1e-9);
    }

    #[test]
    fn measure_json_roundtrip() {
        let h = heis_omega();
        let mu = FiniteMeasure::new(vec![
            (
                AffineMap::from_parts(
                    Automorphism::heisenberg_linear(IMat::new(2, 2, vec![2, 1, 1, 1]), 1),
                    GroupElement::exact(vec![rat(1, 2), rat(0, 1), rat(1, 3)]),
                ),
                rat(1, 3),
            ),
            (AffineMap::identity(&h), rat(2, 3)),
        ])
        .unwrap();
        let j = serde_json::to_string(&mu).unwrap();
        let back: FiniteMeasure = serde_json::from_str(&j).unwrap();
        assert_eq!(mu, back);
        back.validate(&h).unwrap();
    }
}
