//! Group schemas: the four supported families of nilpotent groups in
//! Mal'cev coordinates of the second kind, together with their lattices.
//!
//! In these coordinates the lattice is the set of integer points (with the
//! central coordinate allowed denominator `q` for Heisenberg families) and
//! Haar measure is Lebesgue measure on the unit cube.

use crate::matrix::IMat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("lattice denominator q must be >= 1, got {0}")]
    BadDenominator(i64),
    #[error("bilinear form must be {expected}x{expected}, got {rows}x{cols}")]
    BadForm { expected: usize, rows: usize, cols: usize },
    #[error("dimension parameter must be >= 1")]
    BadDimension,
    #[error("family {family} does not take field {field}")]
    UnexpectedField { family: String, field: String },
    #[error("family {family} requires field {field}")]
    MissingField { family: String, field: String },
    #[error("unknown family tag {0:?}")]
    UnknownFamily(String),
    #[error("coordinate indices {0:?} are not a central subgroup for this schema")]
    NotCentral(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// Abelian: the torus R^n / Z^n.
    Torus { n: usize },
    /// Heisenberg H_{2d+1} with the polarized law
    /// (p,q,t)(p',q',t') = (p+p', q+q', t+t' + p.q').
    HeisenbergPolarized { d: usize },
    /// Heis_B: (y,t)(y',t') = (y+y', t+t' + B(y,y')) with B an integer
    /// bilinear form on R^{2d}.
    HeisenbergB { d: usize, b: IMat },
    /// Free 2-step nilpotent group on 3 generators:
    /// (x,y)(x',y') = (x+x', y+y' + x ^ x').
    Free2Step3Gen,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NilGroupSchema {
    pub family: Family,
    /// Smallest positive integer with lattice central coordinates in (1/q)Z.
    pub q: i64,
}

impl NilGroupSchema {
    pub fn torus(n: usize) -> Self {
        NilGroupSchema { family: Family::Torus { n }, q: 1 }
    }

    pub fn heisenberg(d: usize, q: i64) -> Self {
        NilGroupSchema { family: Family::HeisenbergPolarized { d }, q }
    }

    pub fn heisenberg_b(d: usize, b: IMat, q: i64) -> Self {
        NilGroupSchema { family: Family::HeisenbergB { d, b }, q }
    }

    pub fn free_2step() -> Self {
        NilGroupSchema { family: Family::Free2Step3Gen, q: 1 }
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.q < 1 {
            return Err(SchemaError::BadDenominator(self.q));
        }
        match &self.family {
            Family::Torus { n } => {
                if *n == 0 {
                    return Err(SchemaError::BadDimension);
                }
            }
            Family::HeisenbergPolarized { d } => {
                if *d == 0 {
                    return Err(SchemaError::BadDimension);
                }
            }
            Family::HeisenbergB { d, b } => {
                if *d == 0 {
                    return Err(SchemaError::BadDimension);
                }
                if b.rows != 2 * d || b.cols != 2 * d {
                    return Err(SchemaError::BadForm { expected: 2 * d, rows: b.rows, cols: b.cols });
                }
            }
            Family::Free2Step3Gen => {}
        }
        Ok(())
    }

    /// Total chart dimension.
    pub fn dim(&self) -> usize {
        match &self.family {
            Family::Torus { n } => *n,
            Family::HeisenbergPolarized { d } | Family::HeisenbergB { d, .. } => 2 * d + 1,
            Family::Free2Step3Gen => 6,
        }
    }

    /// Dimension of the abelianization (the maximal torus factor).
    pub fn base_dim(&self) -> usize {
        match &self.family {
            Family::Torus { n } => *n,
            Family::HeisenbergPolarized { d } | Family::HeisenbergB { d, .. } => 2 * d,
            Family::Free2Step3Gen => 3,
        }
    }

    /// Indices of the [N,N] coordinates (empty for the torus).
    pub fn commutator_indices(&self) -> Vec<usize> {
        match &self.family {
            Family::Torus { .. } => vec![],
            Family::HeisenbergPolarized { d } | Family::HeisenbergB { d, .. } => vec![2 * d],
            Family::Free2Step3Gen => vec![3, 4, 5],
        }
    }

    /// Indices of coordinates that are central in N.
    pub fn central_indices(&self) -> Vec<usize> {
        match &self.family {
            // the torus is abelian: everything is central
            Family::Torus { n } => (0..*n).collect(),
            other => {
                let _ = other;
                self.commutator_indices()
            }
        }
    }

    /// Lattice spacing of coordinate `i`: 1 for base coordinates, 1/q for
    /// Heisenberg central coordinates.
    pub fn lattice_spacing(&self, i: usize) -> (i64, i64) {
        match &self.family {
            Family::HeisenbergPolarized { d } | Family::HeisenbergB { d, .. } if i == 2 * d => {
                (1, self.q)
            }
            _ => (1, 1),
        }
    }

    /// The bilinear form entering the group law, as an integer matrix on the
    /// base coordinates.  Zero for the torus.  The free 2-step law is vector
    /// valued and handled separately.
    pub fn polarization_matrix(&self) -> Option<IMat> {
        match &self.family {
            Family::Torus { .. } => None,
            Family::HeisenbergPolarized { d } => {
                let mut b = IMat::zero(2 * d, 2 * d);
                for i in 0..*d {
                    b.set(i, d + i, 1);
                }
                Some(b)
            }
            Family::HeisenbergB { b, .. } => Some(b.clone()),
            Family::Free2Step3Gen => None,
        }
    }

    /// Chart-distortion factor relating central coordinate differences to
    /// the lattice-minimized premetric; used to inflate Hoelder bounds.
    pub fn chart_distortion(&self) -> f64 {
        match self.polarization_matrix() {
            Some(b) => 1.0 + b.op_norm() * (self.base_dim() as f64).sqrt(),
            None => match self.family {
                // |x ^ u| <= |x||u| and |x| <= sqrt(3) on the unit cube
                Family::Free2Step3Gen => 1.0 + 3f64.sqrt(),
                _ => 1.0,
            },
        }
    }

    pub fn family_tag(&self) -> &'static str {
        match self.family {
            Family::Torus { .. } => "torus",
            Family::HeisenbergPolarized { .. } => "heisenberg-polarized",
            Family::HeisenbergB { .. } => "heisenberg-B",
            Family::Free2Step3Gen => "free-2step-3gen",
        }
    }
}

/// JSON wire format: {family, d|n, B (row-major integers), q}.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaWire {
    family: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", rename = "B")]
    b: Option<Vec<i64>>,
    #[serde(default = "default_q")]
    q: i64,
}

fn default_q() -> i64 {
    1
}

impl Serialize for NilGroupSchema {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let wire = match &self.family {
            Family::Torus { n } => SchemaWire {
                family: "torus".into(),
                n: Some(*n),
                d: None,
                b: None,
                q: self.q,
            },
            Family::HeisenbergPolarized { d } => SchemaWire {
                family: "heisenberg-polarized".into(),
                n: None,
                d: Some(*d),
                b: None,
                q: self.q,
            },
            Family::HeisenbergB { d, b } => SchemaWire {
                family: "heisenberg-B".into(),
                n: None,
                d: Some(*d),
                b: Some(b.data.clone()),
                q: self.q,
            },
            Family::Free2Step3Gen => SchemaWire {
                family: "free-2step-3gen".into(),
                n: None,
                d: None,
                b: None,
                q: self.q,
            },
        };
        wire.serialize(s)
    }
}

impl<'de> Deserialize<'de> for NilGroupSchema {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let wire = SchemaWire::deserialize(de)?;
        let schema = match wire.family.as_str() {
            "torus" => {
                let n = wire
                    .n
                    .ok_or_else(|| D::Error::custom("torus schema requires n"))?;
                NilGroupSchema { family: Family::Torus { n }, q: wire.q }
            }
            "heisenberg-polarized" => {
                let d = wire
                    .d
                    .ok_or_else(|| D::Error::custom("heisenberg schema requires d"))?;
                NilGroupSchema { family: Family::HeisenbergPolarized { d }, q: wire.q }
            }
            "heisenberg-B" => {
                let d = wire
                    .d
                    .ok_or_else(|| D::Error::custom("heisenberg-B schema requires d"))?;
                let b = wire
                    .b
                    .ok_or_else(|| D::Error::custom("heisenberg-B schema requires B"))?;
                if b.len() != 4 * d * d {
                    return Err(D::Error::custom("B has wrong number of entries"));
                }
                NilGroupSchema { family: Family::HeisenbergB { d, b: IMat::new(2 * d, 2 * d, b) }, q: wire.q }
            }
            "free-2step-3gen" => NilGroupSchema { family: Family::Free2Step3Gen, q: wire.q },
            other => return Err(D::Error::custom(format!("unknown family {other:?}"))),
        };
        schema.validate().map_err(D::Error::custom)?;
        Ok(schema)
    }
}

/// A choice of rational central subgroup Z, by chart coordinate indices.
/// The dual characters chi_a are indexed against the identity basis of the
/// lattice Z \cap Lambda in those coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CentralSubgroupSpec {
    pub indices: Vec<usize>,
}

impl CentralSubgroupSpec {
    pub fn full_center(schema: &NilGroupSchema) -> Self {
        match schema.family {
            Family::Torus { .. } => CentralSubgroupSpec { indices: schema.central_indices() },
            _ => CentralSubgroupSpec { indices: schema.commutator_indices() },
        }
    }

    pub fn new(schema: &NilGroupSchema, indices: Vec<usize>) -> Result<Self, SchemaError> {
        let central = schema.central_indices();
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != indices.len() || !sorted.iter().all(|i| central.contains(i)) {
            return Err(SchemaError::NotCentral(indices));
        }
        // For the 2-step families we only support the full commutator
        // subgroup; partial central quotients are not nilmanifold charts of
        // the supported kinds.
        match schema.family {
            Family::Torus { .. } => {}
            _ => {
                if sorted != schema.commutator_indices() {
                    return Err(SchemaError::NotCentral(indices));
                }
            }
        }
        Ok(CentralSubgroupSpec { indices: sorted })
    }

    pub fn rank(&self) -> usize {
        self.indices.len()
    }

    /// Schema of the quotient nilmanifold Y = N/(Lambda Z).
    pub fn quotient_schema(&self, schema: &NilGroupSchema) -> NilGroupSchema {
        NilGroupSchema::torus(schema.dim() - self.indices.len())
    }

    /// Complement coordinate indices, in order.
    pub fn complement(&self, schema: &NilGroupSchema) -> Vec<usize> {
        (0..schema.dim()).filter(|i| !self.indices.contains(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_serialization() {
        let schemas = vec![
            NilGroupSchema::torus(2),
            NilGroupSchema::heisenberg(1, 1),
            NilGroupSchema::heisenberg_b(1, IMat::new(2, 2, vec![0, 1, 0, 0]), 2),
            NilGroupSchema::free_2step(),
        ];
        for s in schemas {
            let j = serde_json::to_string(&s).unwrap();
            let back: NilGroupSchema = serde_json::from_str(&j).unwrap();
            assert_eq!(s, back);
        }
    }

    #[test]
    fn central_spec_validation() {
        let h = NilGroupSchema::heisenberg(1, 1);
        assert!(CentralSubgroupSpec::new(&h, vec![2]).is_ok());
        assert!(CentralSubgroupSpec::new(&h, vec![0]).is_err());
        let t = NilGroupSchema::torus(3);
        assert!(CentralSubgroupSpec::new(&t, vec![0, 2]).is_ok());
        let f = NilGroupSchema::free_2step();
        assert!(CentralSubgroupSpec::new(&f, vec![3, 4, 5]).is_ok());
        assert!(CentralSubgroupSpec::new(&f, vec![3]).is_err());
    }

    #[test]
    fn quotient_dims() {
        let h = NilGroupSchema::heisenberg(2, 3);
        let z = CentralSubgroupSpec::full_center(&h);
        assert_eq!(z.quotient_schema(&h), NilGroupSchema::torus(4));
    }
}
