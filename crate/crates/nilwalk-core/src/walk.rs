//! Walk engine: distributions mu^{*m} * delta_x by Monte Carlo ensembles or
//! exact support enumeration.

use crate::affine::{AffineError, AffineMap, FiniteMeasure};
use crate::element::{ElementError, GroupElement, NilmanifoldPoint};
use crate::matrix::rational_to_f64;
use crate::rng::CounterRng;
use crate::schema::NilGroupSchema;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::One;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use thiserror::Error;

pub const DEFAULT_EXACT_CAP: usize = 2_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkError {
    #[error(transparent)]
    Affine(#[from] AffineError),
    #[error(transparent)]
    Element(#[from] ElementError),
    #[error("exact convolution support {size} exceeds cap {cap}")]
    CapExceeded { size: usize, cap: usize },
    #[error("exact mode requires exact rational translation parts")]
    NotExact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WalkMode {
    MonteCarlo,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkConfig {
    pub steps: usize,
    pub trials: usize,
    pub seed: u64,
    pub mode: WalkMode,
    #[serde(default = "default_cap")]
    pub exact_cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_EXACT_CAP
}

impl WalkConfig {
    pub fn monte_carlo(steps: usize, trials: usize, seed: u64) -> Self {
        WalkConfig { steps, trials, seed, mode: WalkMode::MonteCarlo, exact_cap: DEFAULT_EXACT_CAP }
    }

    pub fn exact(steps: usize) -> Self {
        WalkConfig { steps, trials: 1, seed: 0, mode: WalkMode::Exact, exact_cap: DEFAULT_EXACT_CAP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
}

/// Weighted atoms on X.  Weights are exact rationals; in Monte Carlo mode
/// every atom has weight 1/trials and atoms are never merged.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    pub atoms: Vec<(NilmanifoldPoint, BigRational)>,
    pub provenance: Provenance,
}

impl EmpiricalMeasure {
    pub fn dirac(x: NilmanifoldPoint, provenance: Provenance) -> Self {
        EmpiricalMeasure { atoms: vec![(x, BigRational::one())], provenance }
    }

    pub fn total_weight(&self) -> BigRational {
        self.atoms.iter().map(|(_, w)| w.clone()).sum()
    }

    pub fn weights_f64(&self) -> impl Iterator<Item = (&NilmanifoldPoint, f64)> {
        self.atoms.iter().map(|(x, w)| (x, rational_to_f64(w)))
    }

    pub fn pushforward(&self, schema: &NilGroupSchema, g: &AffineMap) -> Result<Self, WalkError> {
        let atoms = self
            .atoms
            .iter()
            .map(|(x, w)| Ok((g.apply(schema, x)?, w.clone())))
            .collect::<Result<Vec<_>, WalkError>>()?;
        Ok(EmpiricalMeasure { atoms, provenance: self.provenance.clone() })
    }

    /// Fourier coefficient of the projection to the maximal torus factor at
    /// integer frequency a.
    pub fn torus_fourier(&self, schema: &NilGroupSchema, a: &[i64]) -> Result<Complex64, WalkError> {
        let mut s = Complex64::new(0.0, 0.0);
        for (x, w) in &self.atoms {
            let t = schema.project_to_torus(x)?;
            let coords = t.to_f64();
            let phase: f64 = a.iter().zip(&coords).map(|(&ai, &ci)| ai as f64 * ci).sum();
            s += rational_to_f64(w) * Complex64::from_polar(1.0, std::f64::consts::TAU * phase);
        }
        Ok(s)
    }
}

fn hash_inputs(schema: &NilGroupSchema, mu: &FiniteMeasure, x: &NilmanifoldPoint, config: &WalkConfig) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_string(schema).expect("schema serializes").as_bytes());
    h.update(format!("{mu:?}").as_bytes());
    h.update(format!("{:?}", x.representative()).as_bytes());
    h.update(serde_json::to_string(config).expect("config serializes").as_bytes());
    hex::encode(&h.finalize()[..16])
}

/// Exact-equality merge key for affine maps with rational translation parts.
fn exact_key(g: &AffineMap) -> Result<String, WalkError> {
    let coords = g.translation.as_exact().ok_or(WalkError::NotExact)?;
    let gamma = serde_json::to_string(&g.gamma).expect("automorphism serializes");
    let t: Vec<String> = coords.iter().map(|c| c.to_string()).collect();
    Ok(format!("{gamma}|{}", t.join(",")))
}

/// Exact convolution of two finite measures on Aff(X): atoms compose(a, b)
/// over all pairs, equal maps merged, deterministic (sorted-key) order.
pub fn convolve_measures(
    schema: &NilGroupSchema,
    a: &FiniteMeasure,
    b: &FiniteMeasure,
    cap: usize,
) -> Result<FiniteMeasure, WalkError> {
    let mut merged: BTreeMap<String, (AffineMap, BigRational)> = BTreeMap::new();
    for (ga, wa) in a.atoms() {
        for (gb, wb) in b.atoms() {
            let g = ga.compose(schema, gb)?;
            let key = exact_key(&g)?;
            let w = wa * wb;
            merged
                .entry(key)
                .and_modify(|(_, acc)| *acc += &w)
                .or_insert((g, w));
            if merged.len() > cap {
                return Err(WalkError::CapExceeded { size: merged.len(), cap });
            }
        }
    }
    Ok(FiniteMeasure::new(merged.into_values().collect()).expect("convolution stays normalized"))
}

/// mu^{*m}, exactly.  The m-step increment acts as g_m ... g_1, i.e. new
/// factors compose on the left.
pub fn convolve_exact(
    schema: &NilGroupSchema,
    mu: &FiniteMeasure,
    m: usize,
    cap: usize,
) -> Result<FiniteMeasure, WalkError> {
    let mut acc = FiniteMeasure::dirac(AffineMap::identity(schema));
    for _ in 0..m {
        acc = convolve_measures(schema, mu, &acc, cap)?;
    }
    Ok(acc)
}

/// Pointwise pushforward: atoms apply(g, x) with nu's weights.
pub fn push_measure(
    schema: &NilGroupSchema,
    nu: &FiniteMeasure,
    x: &NilmanifoldPoint,
    provenance: Provenance,
) -> Result<EmpiricalMeasure, WalkError> {
    let atoms = nu
        .atoms()
        .iter()
        .map(|(g, w)| Ok((g.apply(schema, x)?, w.clone())))
        .collect::<Result<Vec<_>, WalkError>>()?;
    Ok(EmpiricalMeasure { atoms, provenance })
}

pub fn run_walk(
    schema: &NilGroupSchema,
    mu: &FiniteMeasure,
    x: &NilmanifoldPoint,
    config: &WalkConfig,
) -> Result<EmpiricalMeasure, WalkError> {
    let provenance = Provenance { seed: config.seed, config_hash: hash_inputs(schema, mu, x, config) };
    match config.mode {
        WalkMode::Exact => {
            let nu = convolve_exact(schema, mu, config.steps, config.exact_cap)?;
            push_measure(schema, &nu, x, provenance)
        }
        WalkMode::MonteCarlo => {
            let cum = mu.cumulative_f64();
            let maps = mu.atoms();
            let start = schema.reduce(&GroupElement::floats(x.to_f64()))?;
            let w = BigRational::new(1.into(), (config.trials as i64).into());
            let mut atoms = Vec::with_capacity(config.trials);
            for trial in 0..config.trials {
                let mut y = start.clone();
                for step in 0..config.steps {
                    let mut rng = CounterRng::new(config.seed, &[trial as u64, step as u64]);
                    let idx = rng.sample_cumulative(&cum);
                    y = maps[idx].0.apply(schema, &y)?;
                }
                atoms.push((y, w.clone()));
            }
            Ok(EmpiricalMeasure { atoms, provenance })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::Automorphism;
    use crate::matrix::IMat;
    use num_bigint::BigInt;

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(BigInt::from(p), BigInt::from(q))
    }

    fn torus_pair() -> (NilGroupSchema, FiniteMeasure) {
        let t = NilGroupSchema::torus(2);
        let g1 = AffineMap::from_parts(
            Automorphism::torus(IMat::new(2, 2, vec![1, 1, 0, 1])),
            GroupElement::exact(vec![rat(1, 3), rat(0, 1)]),
        );
        let g2 = AffineMap::from_parts(
            Automorphism::torus(IMat::new(2, 2, vec![1, 0, 1, 1])),
            GroupElement::exact(vec![rat(0, 1), rat(1, 5)]),
        );
        (t.clone(), FiniteMeasure::uniform(vec![g1, g2]).unwrap())
    }

    #[test]
    fn zero_steps_is_dirac() {
        let (t, mu) = torus_pair();
        let x = t.reduce(&GroupElement::exact(vec![rat(1, 7), rat(2, 7)])).unwrap();
        let out = run_walk(&t, &mu, &x, &WalkConfig::exact(0)).unwrap();
        assert_eq!(out.atoms.len(), 1);
        assert_eq!(out.atoms[0].0, x);
        assert!(out.total_weight().is_one());
    }

    #[test]
    fn deterministic_walk_is_power() {
        let t = NilGroupSchema::torus(2);
        let g = AffineMap::from_parts(
            Automorphism::torus(IMat::new(2, 2, vec![2, 1, 1, 1])),
            GroupElement::exact(vec![rat(1, 4), rat(0, 1)]),
        );
        let mu = FiniteMeasure::dirac(g.clone());
        let x = t.reduce(&GroupElement::exact(vec![rat(1, 3), rat(1, 2)])).unwrap();
        let out = run_walk(&t, &mu, &x, &WalkConfig::exact(3)).unwrap();
        let cube = g.compose(&t, &g.compose(&t, &g).unwrap()).unwrap();
        assert_eq!(out.atoms.len(), 1);
        assert_eq!(out.atoms[0].0, cube.apply(&t, &x).unwrap());
    }

    #[test]
    fn two_maps_two_steps_exact() {
        let (t, mu) = torus_pair();
        let nu = convolve_exact(&t, &mu, 2, 1000).unwrap();
        assert!(nu.len() <= 4);
        let quarter = rat(1, 4);
        for (_, w) in nu.atoms() {
            assert!((w / &quarter).is_integer());
        }
        let x = t.reduce(&GroupElement::identity(&t)).unwrap();
        let out = push_measure(&t, &nu, &x, Provenance { seed: 0, config_hash: String::new() }).unwrap();
        assert!(out.total_weight().is_one());
    }

    #[test]
    fn semigroup_law() {
        let (t, mu) = torus_pair();
        let lhs = convolve_exact(&t, &mu, 5, 100_000).unwrap();
        let m2 = convolve_exact(&t, &mu, 2, 100_000).unwrap();
        let m3 = convolve_exact(&t, &mu, 3, 100_000).unwrap();
        let rhs = convolve_measures(&t, &m3, &m2, 100_000).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn monte_carlo_matches_exact_fourier() {
        let (t, mu) = torus_pair();
        let x = t.reduce(&GroupElement::exact(vec![rat(1, 7), rat(2, 7)])).unwrap();
        let exact = run_walk(&t, &mu, &x, &WalkConfig::exact(6)).unwrap();
        let trials = 100_000;
        let mc = run_walk(&t, &mu, &x, &WalkConfig::monte_carlo(6, trials, 20260826)).unwrap();
        let tol = 3.0 / (trials as f64).sqrt();
        for a0 in -3..=3i64 {
            for a1 in -3..=3i64 {
                let a = [a0, a1];
                let ce = exact.torus_fourier(&t, &a).unwrap();
                let cm = mc.torus_fourier(&t, &a).unwrap();
                assert!(
                    (ce - cm).norm() < tol,
                    "frequency {a:?}: exact {ce} vs mc {cm}"
                );
            }
        }
    }

    #[test]
    fn monte_carlo_reproducible() {
        let (t, mu) = torus_pair();
        let x = t.reduce(&GroupElement::exact(vec![rat(1, 7), rat(2, 7)])).unwrap();
        let cfg = WalkConfig::monte_carlo(5, 500, 7);
        let a = run_walk(&t, &mu, &x, &cfg).unwrap();
        let b = run_walk(&t, &mu, &x, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fourier_equivariance_under_pushforward() {
        let (t, mu) = torus_pair();
        let x = t.reduce(&GroupElement::exact(vec![rat(1, 7), rat(3, 11)])).unwrap();
        let nu = run_walk(&t, &mu, &x, &WalkConfig::exact(4)).unwrap();
        let mut rng = CounterRng::new(99, &[1]);
        let mats = [vec![1i64, 1, 0, 1], vec![2, 1, 1, 1], vec![0, -1, 1, 0]];
        for trial in 0..20 {
            let a_mat = IMat::new(2, 2, mats[trial % mats.len()].clone());
            let n = GroupElement::exact(vec![
                rat(rng.next_index(13) as i64, 13),
                rat(rng.next_index(13) as i64, 13),
            ]);
            let g = AffineMap::from_parts(Automorphism::torus(a_mat.clone()), n.clone());
            let push = nu.pushforward(&t, &g).unwrap();
            for a in [[1i64, 0], [0, 1], [2, -1], [-3, 5]] {
                // coeff of g_*nu at a = e(<a, n>) * coeff of nu at A^T a
                let ata = a_mat.transpose().mul_vec(&a).unwrap();
                let n64: Vec<f64> = n.to_f64();
                let phase: f64 = a.iter().zip(&n64).map(|(&ai, &ni)| ai as f64 * ni).sum();
                let lhs = push.torus_fourier(&t, &a).unwrap();
                let rhs = Complex64::from_polar(1.0, std::f64::consts::TAU * phase)
                    * nu.torus_fourier(&t, &ata).unwrap();
                assert!((lhs - rhs).norm() < 1e-9, "trial {trial} freq {a:?}");
            }
        }
    }

    #[test]
    fn heisenberg_exact_walk_weights_sum_to_one() {
        let h = NilGroupSchema::heisenberg_b(1, IMat::new(2, 2, vec![0, 1, -1, 0]), 1);
        let g1 = AffineMap::automorphism(
            &h,
            Automorphism::heisenberg_linear(IMat::new(2, 2, vec![2, 1, 1, 1]), 1),
        );
        let g2 = AffineMap::automorphism(
            &h,
            Automorphism::heisenberg_linear(IMat::new(2, 2, vec![1, 1, 1, 2]), 1),
        );
        let mu = FiniteMeasure::uniform(vec![g1, g2]).unwrap();
        let x = h.reduce(&GroupElement::exact(vec![rat(1, 2), rat(1, 2), rat(0, 1)])).unwrap();
        let out = run_walk(&h, &mu, &x, &WalkConfig::exact(5)).unwrap();
        assert!(out.total_weight().is_one());
        assert!(out.atoms.len() <= 32);
    }

    #[test]
    fn cap_is_enforced() {
        let (t, mu) = torus_pair();
        let err = convolve_exact(&t, &mu, 12, 16).unwrap_err();
        assert!(matches!(err, WalkError::CapExceeded { .. }));
    }
}
