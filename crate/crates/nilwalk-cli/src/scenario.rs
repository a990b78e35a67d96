//! Registry of ready-made walk scenarios.

use nilwalk_core::affine::{AffineMap, Automorphism, FiniteMeasure};
use nilwalk_core::matrix::IMat;
use nilwalk_core::schema::{CentralSubgroupSpec, NilGroupSchema};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario {0:?}; run `nilwalk scenario list`")]
    Unknown(String),
    #[error("scenario {0:?} is registered but out of scope: {1}")]
    OutOfScope(&'static str, &'static str),
    #[error("scenario {0:?} is arithmetic-only; equidistribution commands are not permitted")]
    ArithmeticOnly(&'static str),
}

pub struct ScenarioDescriptor {
    pub name: &'static str,
    pub description: &'static str,
    pub schema: NilGroupSchema,
    pub measure: FiniteMeasure,
    /// central subgroup used by the center-action commands
    pub z: CentralSubgroupSpec,
    /// only group arithmetic is meaningful; equidistribution commands refuse
    pub arithmetic_only: bool,
    pub expected: &'static [&'static str],
}

pub const SCENARIO_NAMES: &[(&str, &str)] = &[
    ("heisenberg-sl2", "Heisenberg quotient with two hyperbolic toral automorphisms; the center acts only by signs"),
    ("block-triangular", "4-torus with block-triangular generators [[A, I], [0, D]]; the D-walk is a k-fold convolution"),
    ("bflm-torus", "2-torus with a strongly irreducible proximal pair of hyperbolic automorphisms"),
    ("free-2step", "free 2-step 3-generator quotient; arithmetic-only (no equidistribution commands)"),
    ("heisenberg-nf", "number-field Heisenberg quotient; registered but out of scope"),
];

fn uniform(maps: Vec<AffineMap>) -> FiniteMeasure {
    FiniteMeasure::uniform(maps).expect("registry measures are valid")
}

pub fn scenario(name: &str, k: usize) -> Result<ScenarioDescriptor, ScenarioError> {
    match name {
        "heisenberg-sl2" => {
            let schema = NilGroupSchema::heisenberg_b(1, IMat::new(2, 2, vec![0, 1, -1, 0]), 1);
            let z = CentralSubgroupSpec::full_center(&schema);
            let measure = uniform(vec![
                AffineMap::automorphism(
                    &schema,
                    Automorphism::heisenberg_linear(IMat::new(2, 2, vec![2, 1, 1, 1]), 1),
                ),
                AffineMap::automorphism(
                    &schema,
                    Automorphism::heisenberg_linear(IMat::new(2, 2, vec![1, 1, 1, 2]), 1),
                ),
            ]);
            measure.validate(&schema).expect("registry measure validates");
            Ok(ScenarioDescriptor {
                name: "heisenberg-sl2",
                description: SCENARIO_NAMES[0].1,
                schema,
                measure,
                z,
                arithmetic_only: false,
                expected: &["center support in {+1, -1}", "tau_Z = 0"],
            })
        }
        "block-triangular" => {
            let schema = NilGroupSchema::torus(4);
            // the coordinate subtorus {0, 1} is invariant under [[A, I], [0, D]]
            let z = CentralSubgroupSpec::new(&schema, vec![0, 1]).expect("valid subtorus");
            // A runs over the k-step products of the hyperbolic pair; D over
            // the pair itself
            let t1 = IMat::new(2, 2, vec![2, 1, 1, 1]);
            let t2 = IMat::new(2, 2, vec![1, 1, 1, 2]);
            let mut a_atoms: Vec<IMat> = vec![IMat::identity(2)];
            for _ in 0..k.max(1) {
                let mut next = Vec::new();
                for a in &a_atoms {
                    next.push(t1.mul(a).expect("2x2"));
                    next.push(t2.mul(a).expect("2x2"));
                }
                a_atoms = next;
            }
            let mut maps = Vec::new();
            for a in &a_atoms {
                for d in [&t1, &t2] {
                    let mut m = IMat::zero(4, 4);
                    for i in 0..2 {
                        for j in 0..2 {
                            m.set(i, j, a.get(i, j));
                            m.set(i, 2 + j, if i == j { 1 } else { 0 });
                            m.set(2 + i, 2 + j, d.get(i, j));
                        }
                    }
                    maps.push(AffineMap::automorphism(&schema, Automorphism::torus(m)));
                }
            }
            let measure = uniform(maps);
            measure.validate(&schema).expect("registry measure validates");
            Ok(ScenarioDescriptor {
                name: "block-triangular",
                description: SCENARIO_NAMES[1].1,
                schema,
                measure,
                z,
                arithmetic_only: false,
                expected: &["tau_Z bounded by three times the center Lyapunov exponent"],
            })
        }
        "bflm-torus" => {
            let schema = NilGroupSchema::torus(2);
            let z = CentralSubgroupSpec::full_center(&schema);
            let measure = uniform(vec![
                AffineMap::automorphism(&schema, Automorphism::torus(IMat::new(2, 2, vec![2, 1, 1, 1]))),
                AffineMap::automorphism(&schema, Automorphism::torus(IMat::new(2, 2, vec![1, 1, 1, 2]))),
            ]);
            measure.validate(&schema).expect("registry measure validates");
            Ok(ScenarioDescriptor {
                name: "bflm-torus",
                description: SCENARIO_NAMES[2].1,
                schema,
                measure,
                z,
                arithmetic_only: false,
                expected: &["Fourier coefficients of the walk decay for Diophantine starts"],
            })
        }
        "free-2step" => {
            let schema = NilGroupSchema::free_2step();
            let z = CentralSubgroupSpec::full_center(&schema);
            let a1 = IMat::new(3, 3, vec![1, 1, 0, 0, 1, 0, 0, 0, 1]);
            let a2 = IMat::new(3, 3, vec![1, 0, 0, 0, 1, 1, 0, 0, 1]);
            let maps = [a1, a2]
                .into_iter()
                .map(|a| {
                    let b = induced_commutator_matrix(&a);
                    AffineMap::automorphism(&schema, Automorphism::free_2step(a, b))
                })
                .collect();
            let measure = uniform(maps);
            measure.validate(&schema).expect("registry measure validates");
            Ok(ScenarioDescriptor {
                name: "free-2step",
                description: SCENARIO_NAMES[3].1,
                schema,
                measure,
                z,
                arithmetic_only: true,
                expected: &["group arithmetic only"],
            })
        }
        "heisenberg-nf" => Err(ScenarioError::OutOfScope(
            "heisenberg-nf",
            "number-field lattices need exact algebraic-number arithmetic, which this \
             laboratory does not implement; the registration exists so the absence is visible",
        )),
        other => Err(ScenarioError::Unknown(other.to_string())),
    }
}

/// Induced action on the commutator coordinates: the group law composes
/// them with the cross product, so (A a) x (A b) = det(A) (A^T)^{-1} (a x b).
fn induced_commutator_matrix(a: &IMat) -> IMat {
    let det = a.det().expect("square");
    a.transpose()
        .inverse_unimodular()
        .expect("unimodular")
        .scale(det)
        .expect("scale")
}
