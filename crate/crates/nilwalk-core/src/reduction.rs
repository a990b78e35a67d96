//! Witness-reduction pipeline: from a function witnessing non-equidistribution
//! on X, extract a fiber character, run the Cauchy–Schwarz step into the
//! fiber-frequency-zero space, pull back to an earlier time, and project the
//! witness to the factor torus Y.  Also the structural detectors: low-height
//! invariant subgroups, nearby rational points, and finite rational orbits.

use crate::affine::{AffineError, AffineMap, FiniteMeasure};
use crate::element::NilmanifoldPoint;
use crate::matrix::{hnf_rows, in_lattice, rational_to_f64, IMat, MatrixError};
use crate::observables::{
    integrate_empirical, integrate_haar, ObservableError, TestFunction,
};
use crate::schema::{CentralSubgroupSpec, NilGroupSchema};
use crate::walk::{convolve_exact, run_walk, EmpiricalMeasure, WalkConfig, WalkError};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use serde::Serialize;
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error(transparent)]
    Affine(#[from] AffineError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("no fiber frequency in the scan box reached the deviation threshold {threshold}")]
    NoFrequencyFound { threshold: f64, scanned: Vec<(Vec<i64>, f64)> },
    #[error("witness function carries no usable fiber frequency")]
    MissingFiberData,
    #[error("measured deviation {measured} fell below the floor {floor} at {step}")]
    FloorBreached { step: &'static str, measured: f64, floor: f64, log: Vec<Value> },
    #[error("no atom of the convolution lies outside the Lipschitz-excess set")]
    NoPullbackCandidate { log: Vec<Value> },
    #[error("certificate re-verification got {reevaluated}, claimed {claimed} with tolerance {tolerance}")]
    VerificationFailed { claimed: f64, reevaluated: f64, tolerance: f64 },
    #[error("projection matrix does not have full row rank")]
    RankViolation,
}

/// Tunable constants of the pipeline.  The lemma constants are measured or
/// supplied per scenario, never assumed.
#[derive(Debug, Clone, Serialize)]
pub struct ReductionParams {
    /// Holder exponent of the witness class.
    pub alpha: f64,
    /// Fejer approximation constant: sup-error of order-N smoothing is
    /// bounded by c_hat * N^{-alpha} on the witness dictionary.
    pub c_hat: f64,
    /// Deviation threshold exponent for the frequency scan: accept when the
    /// projected deviation reaches t^c_prime.
    pub c_prime: f64,
    /// Holder-norm growth constant of the generators: max(1, max Lip^alpha).
    pub c_beta: f64,
    /// Pullback window constant: m' is picked inside
    /// (c_pi log(1/t), 2 c_pi log(1/t)).
    pub c_pi: f64,
    pub tolerance: f64,
    /// Haar quadrature resolution (points per dimension).
    pub resolution: usize,
    /// Exact-convolution atom cap.
    pub cap: usize,
}

impl ReductionParams {
    /// Defaults with c_beta measured from the generator measure.
    pub fn for_measure(schema: &NilGroupSchema, mu: &FiniteMeasure, alpha: f64) -> Self {
        let c_beta = mu
            .atoms()
            .iter()
            .map(|(g, _)| g.lipschitz_upper(schema).powf(alpha))
            .fold(1.0f64, f64::max);
        ReductionParams {
            alpha,
            c_hat: 1.0,
            c_prime: 2.0,
            c_beta,
            c_pi: 1.0,
            tolerance: 1e-9,
            resolution: 8,
            cap: 200_000,
        }
    }
}

/// Measures the Fejer sup-error constant on a dictionary: the largest value
/// of sup|F_N f - f| * N^alpha over the sampled points and orders.
pub fn measure_fejer_constant(
    schema: &NilGroupSchema,
    z: &CentralSubgroupSpec,
    dictionary: &[TestFunction],
    orders: &[usize],
    samples: &[NilmanifoldPoint],
) -> Result<f64, ReductionError> {
    let mut c = 0.0f64;
    for f in dictionary {
        for &n in orders {
            let smooth = TestFunction::fejer(schema, z, f, n, n)?;
            let mut sup = 0.0f64;
            for x in samples {
                let d = (smooth.evaluate(schema, x) - f.evaluate(schema, x)).norm();
                sup = sup.max(d);
            }
            c = c.max(sup * (n as f64).powf(f.alpha));
        }
    }
    Ok(c)
}

/// A test function together with a re-verifiable deviation claim against a
/// specific empirical measure.
#[derive(Debug, Clone)]
pub struct WitnessCertificate {
    pub f: TestFunction,
    /// Hash of the measure the claim refers to.
    pub measure_hash: String,
    pub deviation: f64,
    pub tolerance: f64,
    pub log: Vec<Value>,
}

impl WitnessCertificate {
    /// Recomputes the deviation with a fresh quadrature resolution and
    /// checks it reproduces at least `deviation - tolerance`.
    pub fn verify(
        &self,
        schema: &NilGroupSchema,
        nu: &EmpiricalMeasure,
        resolution: usize,
    ) -> Result<f64, ReductionError> {
        let re = deviation(schema, &self.f, nu, resolution, self.tolerance)?;
        if re < self.deviation - self.tolerance {
            return Err(ReductionError::VerificationFailed {
                claimed: self.deviation,
                reevaluated: re,
                tolerance: self.tolerance,
            });
        }
        Ok(re)
    }
}

/// |int f dnu - int f dHaar| / normBound.  When f carries a nonzero fiber
/// frequency its Haar integral vanishes exactly (character orthogonality
/// along the fiber), so no quadrature is needed on that side.
pub fn deviation(
    schema: &NilGroupSchema,
    f: &TestFunction,
    nu: &EmpiricalMeasure,
    resolution: usize,
    tolerance: f64,
) -> Result<f64, ReductionError> {
    if !f.norm_bound.is_finite() || f.norm_bound == 0.0 {
        return Ok(0.0);
    }
    let haar = match &f.fiber {
        Some((_, a)) if a.iter().any(|&v| v != 0) => Complex64::new(0.0, 0.0),
        _ => integrate_haar(schema, f, resolution, tolerance)?.value,
    };
    let emp = integrate_empirical(schema, f, nu);
    Ok((emp - haar).norm() / f.norm_bound)
}

/// Scans fiber frequencies in the Fejer box for one whose projection of `f`
/// still witnesses a deviation; returns the frequency and the projected
/// witness.  Candidates are ordered by Euclidean norm, then lexicographically.
pub fn find_fiber_character(
    schema: &NilGroupSchema,
    z: &CentralSubgroupSpec,
    f: &TestFunction,
    nu: &EmpiricalMeasure,
    t: f64,
    params: &ReductionParams,
) -> Result<(Vec<i64>, WitnessCertificate), ReductionError> {
    // smallest N with N^{-alpha} <= t / (4 c_hat); the window lower bound
    // t / (8 c_hat) <= N^{-alpha} then holds automatically for N >= 2.
    let n = ((4.0 * params.c_hat / t).powf(1.0 / params.alpha)).ceil().max(2.0) as i64;
    let threshold = t.powf(params.c_prime);
    let rank = z.rank();
    let mut candidates: Vec<Vec<i64>> = Vec::new();
    let mut idx = vec![-(n - 1); rank];
    loop {
        candidates.push(idx.clone());
        let mut carry = 0;
        loop {
            if carry == rank {
                break;
            }
            idx[carry] += 1;
            if idx[carry] < n {
                break;
            }
            idx[carry] = -(n - 1);
            carry += 1;
        }
        if carry == rank {
            break;
        }
    }
    candidates.sort_by_key(|a| (a.iter().map(|&v| v * v).sum::<i64>(), a.clone()));
    let grid = n as usize;
    let mut scanned = Vec::new();
    for a in candidates {
        let fa = TestFunction::fiber_project(schema, z, f, a.clone(), grid)?;
        let dev = deviation(schema, &fa, nu, params.resolution, params.tolerance)?;
        if dev >= threshold {
            let log = vec![json!({
                "step": "find-fiber-character",
                "order": n,
                "frequency": a,
                "deviation": dev,
                "threshold": threshold,
                "input-deviation-target": t,
            })];
            let cert = WitnessCertificate {
                f: fa,
                measure_hash: nu.provenance.config_hash.clone(),
                deviation: dev,
                tolerance: params.tolerance,
                log,
            };
            return Ok((a, cert));
        }
        scanned.push((a, dev));
    }
    Err(ReductionError::NoFrequencyFound { threshold, scanned })
}

/// Partition of an exact convolution by the class a = theta(g)^{-1} . a0 of
/// the dual action on the fiber frequency.  Returns (a, p_a, normalized
/// conditional measure), sorted by class key.
pub fn partition_measure(
    schema: &NilGroupSchema,
    z: &CentralSubgroupSpec,
    nu: &FiniteMeasure,
    a0: &[i64],
) -> Result<Vec<(Vec<i64>, BigRational, FiniteMeasure)>, ReductionError> {
    let mut classes: BTreeMap<Vec<i64>, Vec<(AffineMap, BigRational)>> = BTreeMap::new();
    for (g, w) in nu.atoms() {
        // theta(g)^{-1} acts on frequencies by the plain transpose
        let m = g.theta().theta_z(schema, z)?;
        let a = m.transpose().mul_vec(a0)?;
        classes.entry(a).or_default().push((g.clone(), w.clone()));
    }
    classes
        .into_iter()
        .map(|(a, atoms)| {
            let p: BigRational = atoms.iter().map(|(_, w)| w.clone()).sum();
            let normalized: Vec<(AffineMap, BigRational)> =
                atoms.into_iter().map(|(g, w)| (g, w / &p)).collect();
            Ok((a, p, FiniteMeasure::new(normalized)?))
        })
        .collect()
}

/// Cauchy–Schwarz step: from a witness with nonzero fiber frequency a0,
/// build f_a = U*(mu_a^(m)) f0 per dual-action class, pick the class whose
/// |f_a|^2 best separates eta from Haar, and certify the squared witness
/// (which has fiber frequency 0) against the floor (2 c_beta)^{-2m} t^2.
pub fn cs_step(
    schema: &NilGroupSchema,
    z: &CentralSubgroupSpec,
    f0: &WitnessCertificate,
    mu: &FiniteMeasure,
    m: usize,
    eta: &EmpiricalMeasure,
    t: f64,
    params: &ReductionParams,
) -> Result<WitnessCertificate, ReductionError> {
    let a0 = match &f0.f.fiber {
        Some((_, a)) if a.iter().any(|&v| v != 0) => a.clone(),
        _ => return Err(ReductionError::MissingFiberData),
    };
    let mu_m = convolve_exact(schema, mu, m, params.cap)?;
    let classes = partition_measure(schema, z, &mu_m, &a0)?;
    let mut best: Option<(f64, TestFunction, Vec<i64>)> = None;
    let mut class_log = Vec::new();
    for (a, p, mu_a) in &classes {
        let fa = TestFunction::koopman(schema, mu_a, &f0.f)?;
        let cand = TestFunction::modulus_squared(&fa)?;
        let emp = integrate_empirical(schema, &cand, eta);
        let haar = integrate_haar(schema, &cand, params.resolution, params.tolerance)?;
        let score = (emp - haar.value).re;
        class_log.push(json!({
            "class": a,
            "weight": rational_to_f64(p),
            "score": score,
        }));
        if best.as_ref().map_or(true, |(s, _, _)| score > *s) {
            best = Some((score, cand, a.clone()));
        }
    }
    let (_, f1, class) = best.ok_or(ReductionError::MissingFiberData)?;
    let dev = deviation(schema, &f1, eta, params.resolution, params.tolerance)?;
    let floor = (2.0 * params.c_beta).powi(-2 * m as i32) * t * t - params.tolerance;
    let mut log = f0.log.clone();
    log.push(json!({
        "step": "cs-step",
        "m": m,
        "classes": class_log,
        "selected-class": class,
        "deviation": dev,
        "floor": floor,
    }));
    if dev < floor {
        return Err(ReductionError::FloorBreached { step: "cs-step", measured: dev, floor, log });
    }
    Ok(WitnessCertificate {
        f: f1,
        measure_hash: eta.provenance.config_hash.clone(),
        deviation: dev,
        tolerance: params.tolerance,
        log,
    })
}

/// Pullback step for fiber frequency 0: scan the support of mu^{*m} outside
/// the Lipschitz-excess set Lip^alpha > 4 c_beta^m / t and return the best
/// U*(g) f0, requiring deviation >= t/2 - tolerance.
pub fn pullback_step(
    schema: &NilGroupSchema,
    f0: &WitnessCertificate,
    mu: &FiniteMeasure,
    m: usize,
    eta: &EmpiricalMeasure,
    t: f64,
    params: &ReductionParams,
) -> Result<WitnessCertificate, ReductionError> {
    let mu_m = convolve_exact(schema, mu, m, params.cap)?;
    let excess = 4.0 * params.c_beta.powi(m as i32) / t;
    // the floor is stated in units of the original witness norm: the
    // pullback inflates the tracked norm by Lip^alpha, but the pairing
    // against eta is unchanged in absolute terms
    let mut best: Option<(f64, f64, TestFunction)> = None;
    let mut skipped = 0usize;
    for (g, _) in mu_m.atoms() {
        if g.lipschitz_upper(schema).powf(params.alpha) > excess {
            skipped += 1;
            continue;
        }
        let cand = TestFunction::pullback(schema, g.clone(), &f0.f)?;
        let dev = deviation(schema, &cand, eta, params.resolution, params.tolerance)?;
        let scaled = dev * cand.norm_bound / f0.f.norm_bound;
        if best.as_ref().map_or(true, |(s, _, _)| scaled > *s) {
            best = Some((scaled, dev, cand));
        }
    }
    let mut log = f0.log.clone();
    log.push(json!({
        "step": "pullback-step",
        "m": m,
        "atoms": mu_m.len(),
        "lip-excess-threshold": excess,
        "skipped": skipped,
    }));
    let (scaled, dev, f1) = match best {
        Some(b) => b,
        None => return Err(ReductionError::NoPullbackCandidate { log }),
    };
    let floor = t / 2.0 - params.tolerance;
    if scaled < floor {
        return Err(ReductionError::FloorBreached {
            step: "pullback-step",
            measured: scaled,
            floor,
            log,
        });
    }
    if let Some(v) = log.last_mut() {
        v["deviation"] = json!(dev);
        v["original-norm-deviation"] = json!(scaled);
        v["floor"] = json!(floor);
    }
    Ok(WitnessCertificate {
        f: f1,
        measure_hash: eta.provenance.config_hash.clone(),
        deviation: dev,
        tolerance: params.tolerance,
        log,
    })
}

#[derive(Debug)]
pub struct ReductionOutcome {
    pub a0: Vec<i64>,
    pub m_prime: usize,
    /// The certified witness on X after the CS/pullback step (fiber
    /// frequency 0).
    pub x_witness: WitnessCertificate,
    /// Fiber average of the X witness: constant on central fibers, i.e. a
    /// function pulled back from Y.
    pub phi: TestFunction,
    /// Deviation of phi for the projected measure (equal to its deviation
    /// for eta, since phi is fiber-constant).
    pub y_deviation: f64,
    pub log: Vec<Value>,
}

/// Full reduction: find a fiber character for mu^{*m} * delta_x, run the
/// CS step (a0 != 0) or the pullback step (a0 = 0) against
/// eta = mu^{*(m - m')} * delta_x with m' in the pullback window, and
/// average the resulting witness along the fiber to land on Y.
pub fn reduce_witness(
    schema: &NilGroupSchema,
    z: &CentralSubgroupSpec,
    mu: &FiniteMeasure,
    x: &NilmanifoldPoint,
    f: &TestFunction,
    m: usize,
    t: f64,
    params: &ReductionParams,
) -> Result<ReductionOutcome, ReductionError> {
    // midpoint of the (c_pi log(1/t), 2 c_pi log(1/t)) window, clamped
    let w = params.c_pi * (1.0 / t).ln();
    let m_prime = ((1.5 * w).round() as usize).clamp(1, m);
    let nu = run_walk(schema, mu, x, &WalkConfig::exact(m))?;
    let (a0, f0) = find_fiber_character(schema, z, f, &nu, t, params)?;
    let eta = run_walk(schema, mu, x, &WalkConfig::exact(m - m_prime))?;
    let x_witness = if a0.iter().any(|&v| v != 0) {
        cs_step(schema, z, &f0, mu, m_prime, &eta, f0.deviation, params)?
    } else {
        pullback_step(schema, &f0, mu, m_prime, &eta, f0.deviation, params)?
    };
    let grid = 8usize;
    let phi = TestFunction::fiber_project(schema, z, &x_witness.f, vec![0; z.rank()], grid)?;
    let y_deviation = deviation(schema, &phi, &eta, params.resolution, params.tolerance)?;
    let mut log = x_witness.log.clone();
    log.push(json!({
        "step": "project-to-factor",
        "m": m,
        "m-prime": m_prime,
        "fiber-grid": grid,
        "y-deviation": y_deviation,
    }));
    Ok(ReductionOutcome { a0, m_prime, x_witness, phi, y_deviation, log })
}

// ---------------------------------------------------------------------------
// structural detectors

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SubgroupDescriptor {
    /// Hermite-normal-form basis of the dual lattice L*.
    pub dual_generators: Vec<Vec<i64>>,
    /// Max Euclidean norm over the basis.
    pub height: f64,
    /// Number of group generators against which invariance was verified.
    pub invariance_checked: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubgroupScan {
    pub found: Vec<SubgroupDescriptor>,
    /// Seeds whose dual-action closure exceeded the entry cap.
    pub overflowed_seeds: Vec<Vec<i64>>,
}

fn gcd_i64(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn primitive_vectors(dim: usize, h: f64) -> Vec<Vec<i64>> {
    let r = h.floor() as i64;
    let h2 = (h * h + 1e-9) as i64;
    let mut out = Vec::new();
    let mut idx = vec![-r; dim];
    loop {
        let norm2: i64 = idx.iter().map(|&v| v * v).sum();
        if norm2 > 0 && norm2 <= h2 {
            let g = idx.iter().fold(0i64, |acc, &v| gcd_i64(acc, v));
            // one representative per +/- pair: first nonzero entry positive
            let lead = idx.iter().find(|&&v| v != 0).copied().unwrap_or(0);
            if g == 1 && lead > 0 {
                out.push(idx.clone());
            }
        }
        let mut carry = 0;
        loop {
            if carry == dim {
                return out;
            }
            idx[carry] += 1;
            if idx[carry] <= r {
                break;
            }
            idx[carry] = -r;
            carry += 1;
        }
    }
}

/// Enumerates primitive dual seeds of norm <= h, closes each under the dual
/// action of the generators (lattice saturation with an entry cap), and
/// returns the distinct invariant dual lattices found.
pub fn detect_low_height_subgroups(
    gens: &[IMat],
    h: f64,
    entry_cap: i64,
    max_rounds: usize,
) -> Result<SubgroupScan, ReductionError> {
    let dim = gens[0].rows;
    let duals: Vec<IMat> = gens.iter().map(IMat::transpose).collect();
    let mut found: Vec<SubgroupDescriptor> = Vec::new();
    let mut seen: BTreeSet<Vec<Vec<i64>>> = BTreeSet::new();
    let mut overflowed = Vec::new();
    'seed: for seed in primitive_vectors(dim, h) {
        let mut basis = hnf_rows(&[seed.clone()])?;
        for _ in 0..max_rounds {
            let mut extra: Vec<Vec<i64>> = Vec::new();
            for d in &duals {
                for v in &basis {
                    let img = d.mul_vec(v)?;
                    if img.iter().any(|&e| e.abs() > entry_cap) {
                        overflowed.push(seed.clone());
                        continue 'seed;
                    }
                    if !in_lattice(&basis, &img) {
                        extra.push(img);
                    }
                }
            }
            if extra.is_empty() {
                if seen.insert(basis.clone()) {
                    let height = basis
                        .iter()
                        .map(|v| (v.iter().map(|&e| (e * e) as f64).sum::<f64>()).sqrt())
                        .fold(0.0f64, f64::max);
                    found.push(SubgroupDescriptor {
                        dual_generators: basis,
                        height,
                        invariance_checked: gens.len(),
                    });
                }
                continue 'seed;
            }
            let mut all = basis.clone();
            all.extend(extra);
            basis = hnf_rows(&all)?;
        }
        overflowed.push(seed);
    }
    found.sort_by(|a, b| {
        a.height.partial_cmp(&b.height).unwrap().then(a.dual_generators.cmp(&b.dual_generators))
    });
    Ok(SubgroupScan { found, overflowed_seeds: overflowed })
}

/// Exhaustive per-denominator search for the nearest rational point on the
/// torus.  Ties prefer the smaller denominator, then the smaller numerator.
pub fn nearest_rational_point(x: &[f64], q_max: i64) -> (Vec<BigRational>, i64, f64) {
    let mut best: Option<(Vec<BigRational>, i64, f64)> = None;
    for q in 1..=q_max {
        let mut nums = Vec::with_capacity(x.len());
        let mut dist2 = 0.0f64;
        for &c in x {
            let scaled = c * q as f64;
            let lo = scaled.floor();
            let hi = lo + 1.0;
            // tie goes to the smaller numerator
            let p = if scaled - lo <= hi - scaled { lo } else { hi };
            let d = (scaled - p) / q as f64;
            dist2 += d * d;
            nums.push((p as i64).rem_euclid(q));
        }
        let dist = dist2.sqrt();
        if best.as_ref().map_or(true, |(_, _, bd)| dist < bd - 1e-12) {
            let coords = nums
                .iter()
                .map(|&p| BigRational::new(BigInt::from(p), BigInt::from(q)))
                .collect();
            best = Some((coords, q, dist));
        }
    }
    best.expect("q_max >= 1")
}

#[derive(Debug, Clone, Serialize)]
pub struct RationalizedSystem {
    pub q: i64,
    /// Max coordinate perturbation applied to translations and start point.
    pub perturbation: f64,
    /// Rationalized torus-factor translations (numerators mod q).
    pub translations: Vec<Vec<i64>>,
    pub start: Vec<i64>,
    /// Orbit cardinality of the perturbed system, or None on cap overflow.
    pub orbit_size: Option<usize>,
}

/// Rounds the torus-factor translation parts and the start point to a common
/// denominator q <= q_max minimizing the max perturbation, then computes the
/// orbit closure of the perturbed system.
pub fn rationalize_affine_system(
    schema: &NilGroupSchema,
    gens: &[AffineMap],
    x: &NilmanifoldPoint,
    q_max: i64,
    cap: usize,
) -> Result<RationalizedSystem, ReductionError> {
    let base = schema.base_dim();
    let mut coords: Vec<f64> = Vec::new();
    for g in gens {
        coords.extend(g.translation.to_f64().into_iter().take(base));
    }
    coords.extend(x.to_f64().into_iter().take(base));
    let mut best: Option<(i64, f64)> = None;
    for q in 1..=q_max {
        let pert = coords
            .iter()
            .map(|&c| {
                let s = c * q as f64;
                (s - s.round()).abs() / q as f64
            })
            .fold(0.0f64, f64::max);
        if best.map_or(true, |(_, bp)| pert < bp - 1e-15) {
            best = Some((q, pert));
        }
    }
    let (q, perturbation) = best.expect("q_max >= 1");
    let round_mod = |c: f64| ((c * q as f64).round() as i64).rem_euclid(q);
    let translations: Vec<Vec<i64>> = gens
        .iter()
        .map(|g| g.translation.to_f64().iter().take(base).map(|&c| round_mod(c)).collect())
        .collect();
    let start: Vec<i64> = x.to_f64().iter().take(base).map(|&c| round_mod(c)).collect();
    let mats: Vec<&IMat> = gens.iter().map(|g| g.theta().base_matrix()).collect();
    // orbit closure over numerator vectors mod q
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    let mut stack = vec![start.clone()];
    seen.insert(start.clone());
    let mut orbit_size = Some(0usize);
    while let Some(p) = stack.pop() {
        for (mat, n) in mats.iter().zip(&translations) {
            let img = mat.mul_vec(&p)?;
            let next: Vec<i64> =
                img.iter().zip(n).map(|(&v, &ni)| (v + ni).rem_euclid(q)).collect();
            if seen.insert(next.clone()) {
                if seen.len() > cap {
                    orbit_size = None;
                    stack.clear();
                    break;
                }
                stack.push(next);
            }
        }
    }
    if orbit_size.is_some() {
        orbit_size = Some(seen.len());
    }
    Ok(RationalizedSystem { q, perturbation, translations, start, orbit_size })
}

/// Preimage of a subgroup of T' under an integer projection pi: T -> T'
/// (full row rank).  Dual generators map through the transpose; the height
/// inflation is bounded by the operator norm of the dual matrix.
pub fn preimage_subgroup(
    pi: &IMat,
    l: &SubgroupDescriptor,
) -> Result<SubgroupDescriptor, ReductionError> {
    let rows: Vec<Vec<i64>> = (0..pi.rows)
        .map(|i| (0..pi.cols).map(|j| pi.get(i, j)).collect())
        .collect();
    if hnf_rows(&rows)?.len() != pi.rows {
        return Err(ReductionError::RankViolation);
    }
    let dual = pi.transpose();
    let mapped: Vec<Vec<i64>> = l
        .dual_generators
        .iter()
        .map(|v| dual.mul_vec(v))
        .collect::<Result<_, MatrixError>>()?;
    let basis = hnf_rows(&mapped)?;
    let height = basis
        .iter()
        .map(|v| (v.iter().map(|&e| (e * e) as f64).sum::<f64>()).sqrt())
        .fold(0.0f64, f64::max);
    let bound = dual.op_norm() * l.height;
    debug_assert!(height <= bound + 1e-9);
    Ok(SubgroupDescriptor {
        dual_generators: basis,
        height,
        invariance_checked: l.invariance_checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::Automorphism;
    use crate::element::GroupElement;
    use crate::walk::push_measure;
    use num_traits::{One, Signed, Zero};

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(BigInt::from(p), BigInt::from(q))
    }

    fn heis() -> NilGroupSchema {
        NilGroupSchema::heisenberg_b(1, IMat::new(2, 2, vec![0, 1, -1, 0]), 1)
    }

    fn sl2_measure(schema: &NilGroupSchema) -> FiniteMeasure {
        let g1 = AffineMap::automorphism(
            schema,
            Automorphism::heisenberg_linear(IMat::new(2, 2, vec![2, 1, 1, 1]), 1),
        );
        let g2 = AffineMap::automorphism(
            schema,
            Automorphism::heisenberg_linear(IMat::new(2, 2, vec![1, 1, 1, 2]), 1),
        );
        FiniteMeasure::uniform(vec![g1, g2]).unwrap()
    }

    fn central_start(schema: &NilGroupSchema) -> NilmanifoldPoint {
        schema
            .reduce(&GroupElement::exact(vec![rat(0, 1), rat(0, 1), rat(1, 2)]))
            .unwrap()
    }

    /// Bump at the start point, projected to central frequency 1: a witness
    /// with negligible fiber-frequency-0 component.
    fn central_witness(h: &NilGroupSchema, z: &CentralSubgroupSpec, x: &NilmanifoldPoint) -> TestFunction {
        let b = TestFunction::bump(h, x.to_f64(), 0.3, 1.0).unwrap();
        TestFunction::fiber_project(h, z, &b, vec![1], 8).unwrap()
    }

    #[test]
    fn finds_central_frequency_of_stuck_walk() {
        let h = heis();
        let mu = sl2_measure(&h);
        let z = CentralSubgroupSpec::full_center(&h);
        let x = central_start(&h);
        let nu = run_walk(&h, &mu, &x, &WalkConfig::exact(4)).unwrap();
        let f = central_witness(&h, &z, &x);
        let mut params = ReductionParams::for_measure(&h, &mu, 1.0);
        params.c_hat = 0.2;
        let dev = deviation(&h, &f, &nu, params.resolution, params.tolerance).unwrap();
        assert!(dev > 1e-4, "the stuck walk must witness on the central character: {dev}");
        let t = (0.8 * dev).sqrt();
        let (a0, cert) = find_fiber_character(&h, &z, &f, &nu, t, &params).unwrap();
        assert_eq!(a0, vec![1], "the witness lives at central frequency 1");
        cert.verify(&h, &nu, 11).unwrap();
    }

    #[test]
    fn haar_like_measure_yields_no_frequency() {
        let t = NilGroupSchema::torus(1);
        let z = CentralSubgroupSpec::full_center(&t);
        // uniform grid of denominator 16: Fourier coefficients vanish below
        // frequency 16
        let maps: Vec<AffineMap> = (0..16)
            .map(|k| AffineMap::translation_by(&t, GroupElement::exact(vec![rat(k, 16)])))
            .collect();
        let grid = FiniteMeasure::uniform(maps).unwrap();
        let x = t.reduce(&GroupElement::exact(vec![rat(0, 1)])).unwrap();
        let nu = push_measure(
            &t,
            &grid,
            &x,
            crate::walk::Provenance { seed: 0, config_hash: "grid".into() },
        )
        .unwrap();
        let f = TestFunction::bump(&t, vec![0.0], 0.2, 1.0).unwrap();
        let mu = FiniteMeasure::dirac(AffineMap::identity(&t));
        let mut params = ReductionParams::for_measure(&t, &mu, 1.0);
        params.c_hat = 0.25; // keeps the scan box below the grid frequency
        match find_fiber_character(&t, &z, &f, &nu, 0.1, &params) {
            Err(ReductionError::NoFrequencyFound { scanned, .. }) => {
                assert!(!scanned.is_empty());
            }
            other => panic!("expected a no-frequency failure, got {other:?}"),
        }
    }

    #[test]
    fn sign_walk_partition_matches_enumeration() {
        let h = heis();
        let z = CentralSubgroupSpec::full_center(&h);
        let plus = AffineMap::automorphism(&h, Automorphism::heisenberg_linear(IMat::identity(2), 1));
        let minus = AffineMap::automorphism(
            &h,
            Automorphism::heisenberg_linear(IMat::new(2, 2, vec![0, 1, 1, 0]), -1),
        );
        let mu = FiniteMeasure::new(vec![(plus, rat(1, 3)), (minus, rat(2, 3))]).unwrap();
        let m = 6;
        let conv = convolve_exact(&h, &mu, m, 10_000).unwrap();
        let classes = partition_measure(&h, &z, &conv, &[1]).unwrap();
        assert_eq!(classes.len(), 2, "epsilon products take only the values +-1");
        // brute force over sign sequences
        let mut p_plus = BigRational::zero();
        for word in 0..(1u32 << m) {
            let minus_count = word.count_ones() as usize;
            let w = rat(1, 3).pow(((m - minus_count)) as i32) * rat(2, 3).pow(minus_count as i32);
            if minus_count % 2 == 0 {
                p_plus += w;
            }
        }
        let by_class: BTreeMap<Vec<i64>, BigRational> =
            classes.iter().map(|(a, p, _)| (a.clone(), p.clone())).collect();
        assert_eq!(by_class[&vec![1i64]], p_plus);
        assert_eq!(
            by_class[&vec![-1i64]],
            BigRational::one() - p_plus
        );
        for (_, p, cond) in &classes {
            assert!(p.is_positive());
            let total: BigRational = cond.atoms().iter().map(|(_, w)| w.clone()).sum();
            assert!(total.is_one());
        }
    }

    #[test]
    fn cs_step_respects_floor_on_stuck_walk() {
        let h = heis();
        let mu = sl2_measure(&h);
        let z = CentralSubgroupSpec::full_center(&h);
        let x = central_start(&h);
        let nu = run_walk(&h, &mu, &x, &WalkConfig::exact(4)).unwrap();
        let eta = run_walk(&h, &mu, &x, &WalkConfig::exact(1)).unwrap();
        let params = ReductionParams::for_measure(&h, &mu, 1.0);
        let f = central_witness(&h, &z, &x);
        let dev0 = deviation(&h, &f, &nu, params.resolution, params.tolerance).unwrap();
        assert!(dev0 > 1e-4);
        let f0 = WitnessCertificate {
            f,
            measure_hash: nu.provenance.config_hash.clone(),
            deviation: dev0,
            tolerance: params.tolerance,
            log: vec![],
        };
        let cert = cs_step(&h, &z, &f0, &mu, 3, &eta, f0.deviation, &params).unwrap();
        assert_eq!(cert.f.fiber.as_ref().unwrap().1, vec![0], "squared witness has frequency 0");
        cert.verify(&h, &eta, 11).unwrap();
        let floor =
            (2.0 * params.c_beta).powi(-6) * f0.deviation * f0.deviation - params.tolerance;
        assert!(cert.deviation >= floor);
    }

    #[test]
    fn pullback_of_dirac_measure_picks_the_power() {
        let t = NilGroupSchema::torus(2);
        let g = AffineMap::automorphism(&t, Automorphism::torus(IMat::new(2, 2, vec![1, 1, 0, 1])));
        let mu = FiniteMeasure::dirac(g.clone());
        let x = t.reduce(&GroupElement::exact(vec![rat(1, 2), rat(0, 1)])).unwrap();
        let eta = run_walk(&t, &mu, &x, &WalkConfig::exact(0)).unwrap();
        let f = TestFunction::torus_char(&t, vec![1, 0], 1.0).unwrap();
        let params = ReductionParams::for_measure(&t, &mu, 1.0);
        let dev0 = deviation(&t, &f, &eta, params.resolution, params.tolerance).unwrap();
        let f0 = WitnessCertificate {
            f,
            measure_hash: eta.provenance.config_hash.clone(),
            deviation: dev0,
            tolerance: params.tolerance,
            log: vec![],
        };
        let m = 4;
        let cert = pullback_step(&t, &f0, &mu, m, &eta, dev0, &params).unwrap();
        // the only candidate is U*(g^m) f0; frequency moves by the transpose
        let power = TestFunction::pullback(
            &t,
            (0..m).fold(AffineMap::identity(&t), |acc, _| g.compose(&t, &acc).unwrap()),
            &f0.f,
        )
        .unwrap();
        let want = deviation(&t, &power, &eta, params.resolution, params.tolerance).unwrap();
        assert!((cert.deviation - want).abs() < 1e-12);
    }

    #[test]
    fn reduce_witness_end_to_end_on_rational_start() {
        let h = heis();
        let mu = sl2_measure(&h);
        let z = CentralSubgroupSpec::full_center(&h);
        let x = central_start(&h);
        let f = central_witness(&h, &z, &x);
        let mut params = ReductionParams::for_measure(&h, &mu, 1.0);
        params.c_hat = 0.2;
        params.c_pi = 0.6;
        let nu = run_walk(&h, &mu, &x, &WalkConfig::exact(5)).unwrap();
        let dev = deviation(&h, &f, &nu, params.resolution, params.tolerance).unwrap();
        let t = (0.8 * dev).sqrt();
        let out = reduce_witness(&h, &z, &mu, &x, &f, 5, t, &params).unwrap();
        assert!(out.a0.iter().any(|&v| v != 0));
        assert!(out.m_prime >= 1 && out.m_prime <= 5);
        assert_eq!(out.phi.fiber.as_ref().unwrap().1, vec![0]);
        assert!(out.log.iter().any(|e| e["step"] == "cs-step"));
    }

    #[test]
    fn rotation_subgroups_at_heights_one_and_two() {
        let rot = IMat::new(2, 2, vec![0, -1, 1, 0]);
        let scan1 = detect_low_height_subgroups(&[rot.clone()], 1.0, 1 << 20, 64).unwrap();
        assert_eq!(scan1.found.len(), 1);
        assert_eq!(scan1.found[0].dual_generators, vec![vec![1, 0], vec![0, 1]]);
        assert!(scan1.overflowed_seeds.is_empty());
        let scan2 = detect_low_height_subgroups(&[rot], 2.0, 1 << 20, 64).unwrap();
        assert_eq!(scan2.found.len(), 2);
        assert_eq!(scan2.found[1].dual_generators, vec![vec![1, 1], vec![0, 2]]);
        assert!((scan2.found[1].height - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hyperbolic_generator_gives_only_the_full_dual_lattice() {
        let a = IMat::new(2, 2, vec![2, 1, 1, 1]);
        let scan = detect_low_height_subgroups(&[a], 1.0, 1 << 20, 64).unwrap();
        assert_eq!(scan.found.len(), 1);
        assert_eq!(scan.found[0].dual_generators, vec![vec![1, 0], vec![0, 1]]);
    }

    #[test]
    fn descriptors_are_exactly_invariant() {
        let rot = IMat::new(2, 2, vec![0, -1, 1, 0]);
        let scan = detect_low_height_subgroups(&[rot.clone()], 2.0, 1 << 20, 64).unwrap();
        let dual = rot.transpose();
        for desc in &scan.found {
            for v in &desc.dual_generators {
                let img = dual.mul_vec(v).unwrap();
                assert!(in_lattice(&desc.dual_generators, &img));
            }
        }
    }

    #[test]
    fn nearest_rational_examples() {
        let (p, q, d) = nearest_rational_point(&[1.0 / 3.0, 2.0 / 3.0], 3);
        assert_eq!(q, 3);
        assert!(d < 1e-12);
        assert_eq!(p, vec![rat(1, 3), rat(2, 3)]);

        let (p, q, _) = nearest_rational_point(&[0.2498, 0.5001], 4);
        assert_eq!(q, 4);
        assert_eq!(p, vec![rat(1, 4), rat(2, 4)]);

        let (p, q, _) = nearest_rational_point(&[0.8, 0.3], 1);
        assert_eq!(q, 1);
        assert_eq!(p, vec![rat(0, 1), rat(0, 1)]);
    }

    #[test]
    fn rational_distance_is_zero_iff_low_denominator() {
        let (_, _, d) = nearest_rational_point(&[0.375], 8);
        assert!(d < 1e-12);
        let (_, _, d) = nearest_rational_point(&[0.375], 7);
        assert!(d > 1e-3);
    }

    #[test]
    fn irrational_translation_rationalizes_to_best_denominator() {
        let t = NilGroupSchema::torus(1);
        let alpha = std::f64::consts::SQRT_2 - 1.0;
        let g = AffineMap::translation_by(&t, GroupElement::floats(vec![alpha]));
        let x = t.reduce(&GroupElement::exact(vec![rat(0, 1)])).unwrap();
        let sys = rationalize_affine_system(&t, &[g], &x, 10, 10_000).unwrap();
        assert_eq!(sys.q, 5, "2/5 is the best approximation of sqrt(2)-1 below denominator 10");
        assert_eq!(sys.orbit_size, Some(5));
        assert!((sys.perturbation - (alpha - 0.4)).abs() < 1e-12);
    }

    #[test]
    fn already_rational_system_has_zero_perturbation() {
        let t = NilGroupSchema::torus(2);
        let g = AffineMap::from_parts(
            Automorphism::torus(IMat::new(2, 2, vec![1, 1, 0, 1])),
            GroupElement::exact(vec![rat(1, 4), rat(0, 1)]),
        );
        let x = t.reduce(&GroupElement::exact(vec![rat(1, 4), rat(1, 2)])).unwrap();
        let sys = rationalize_affine_system(&t, &[g], &x, 8, 10_000).unwrap();
        assert_eq!(sys.q, 4);
        assert!(sys.perturbation < 1e-12);
        assert!(sys.orbit_size.is_some());
    }

    #[test]
    fn empty_generator_set_gives_singleton_orbit() {
        let t = NilGroupSchema::torus(1);
        let x = t.reduce(&GroupElement::exact(vec![rat(1, 3)])).unwrap();
        let sys = rationalize_affine_system(&t, &[], &x, 5, 100).unwrap();
        assert_eq!(sys.orbit_size, Some(1));
    }

    #[test]
    fn preimage_under_identity_and_projection() {
        let l = SubgroupDescriptor {
            dual_generators: vec![vec![1, 0], vec![0, 1]],
            height: 1.0,
            invariance_checked: 0,
        };
        let same = preimage_subgroup(&IMat::identity(2), &l).unwrap();
        assert_eq!(same.dual_generators, l.dual_generators);

        let pi = IMat::new(1, 2, vec![1, 0]);
        let trivial = SubgroupDescriptor {
            dual_generators: vec![vec![1]],
            height: 1.0,
            invariance_checked: 0,
        };
        let up = preimage_subgroup(&pi, &trivial).unwrap();
        assert_eq!(up.dual_generators, vec![vec![1, 0]]);
        assert!((up.height - 1.0).abs() < 1e-12);

        let degenerate = IMat::new(2, 2, vec![1, 1, 1, 1]);
        assert!(matches!(
            preimage_subgroup(&degenerate, &l),
            Err(ReductionError::RankViolation)
        ));
    }

    #[test]
    fn preimage_height_bounded_by_dual_norm() {
        let mut rng = crate::rng::CounterRng::new(7, &[0x7071]);
        for _ in 0..50 {
            let entries: Vec<i64> = (0..4).map(|_| rng.next_index(5) as i64 - 2).collect();
            let pi = IMat::new(2, 2, entries);
            if pi.det().map(|d| d == 0).unwrap_or(true) {
                continue;
            }
            let v: Vec<i64> = (0..2).map(|_| rng.next_index(7) as i64 - 3).collect();
            if v.iter().all(|&e| e == 0) {
                continue;
            }
            let l = SubgroupDescriptor {
                dual_generators: hnf_rows(&[v.clone()]).unwrap(),
                height: (v.iter().map(|&e| (e * e) as f64).sum::<f64>()).sqrt(),
                invariance_checked: 0,
            };
            let up = preimage_subgroup(&pi, &l).unwrap();
            assert!(up.height <= pi.transpose().op_norm() * l.height + 1e-9);
        }
    }

    #[test]
    fn fejer_constant_is_positive_and_finite() {
        let h = heis();
        let z = CentralSubgroupSpec::full_center(&h);
        let f = TestFunction::bump(&h, vec![0.1, 0.2, 0.3], 0.2, 1.0).unwrap();
        let mut rng = crate::rng::CounterRng::new(3, &[0xfe3e]);
        let samples: Vec<NilmanifoldPoint> = (0..20)
            .map(|_| {
                let c: Vec<f64> = (0..3).map(|_| rng.next_f64()).collect();
                h.reduce(&GroupElement::floats(c)).unwrap()
            })
            .collect();
        let c = measure_fejer_constant(&h, &z, &[f], &[4, 8], &samples).unwrap();
        assert!(c.is_finite() && c > 0.0);
    }
}
