//! Growth-rate estimators: top Lyapunov exponent, essential growth rate of
//! the center action (tau_Z), and spectral decay rates (sigma) via exact
//! frequency-space transfer operators.

use crate::affine::FiniteMeasure;
use crate::matrix::{rational_to_f64, IMat, MatrixError};
use crate::rng::CounterRng;
use crate::schema::{CentralSubgroupSpec, NilGroupSchema};
use crate::walk::WalkError;
use num_complex::Complex64;
use num_rational::BigRational;
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error("affine maps with nonzero translation are not supported by the frequency-space operator")]
    TranslationUnsupported,
    #[error("support size {size} exceeds cap {cap}")]
    CapExceeded { size: usize, cap: usize },
    #[error("not enough data points for a fit (got {0})")]
    FitUnderdetermined(usize),
    #[error("power iteration did not converge within {0} iterations")]
    PowerIterationDiverged(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitDiagnostics {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of y against x.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<FitDiagnostics, EstimatorError> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(EstimatorError::FitUnderdetermined(n));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(EstimatorError::FitUnderdetermined(n));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(FitDiagnostics { slope, intercept, r2 })
}

/// A finitely supported measure on d x d real matrices.
#[derive(Debug, Clone)]
pub struct MatrixMeasure {
    pub dim: usize,
    pub atoms: Vec<(Vec<f64>, f64)>,
}

impl MatrixMeasure {
    pub fn from_imats(atoms: Vec<(IMat, f64)>) -> Self {
        let dim = atoms[0].0.rows;
        MatrixMeasure {
            dim,
            atoms: atoms
                .into_iter()
                .map(|(m, w)| (m.data.iter().map(|&v| v as f64).collect(), w))
                .collect(),
        }
    }

    /// Full chart matrices of the automorphism parts.
    pub fn from_theta(schema: &NilGroupSchema, mu: &FiniteMeasure) -> Self {
        let dim = schema.dim();
        MatrixMeasure {
            dim,
            atoms: mu
                .atoms()
                .iter()
                .map(|(g, w)| (g.gamma.full_matrix_f64(schema), rational_to_f64(w)))
                .collect(),
        }
    }

    /// Matrices of the action restricted to Z.
    pub fn from_theta_z(
        schema: &NilGroupSchema,
        mu: &FiniteMeasure,
        z: &CentralSubgroupSpec,
    ) -> Result<Self, EstimatorError> {
        let atoms = mu
            .atoms()
            .iter()
            .map(|(g, w)| {
                let m = g
                    .gamma
                    .theta_z(schema, z)
                    .map_err(|_| EstimatorError::TranslationUnsupported)?;
                Ok((m, rational_to_f64(w)))
            })
            .collect::<Result<Vec<(IMat, f64)>, EstimatorError>>()?;
        Ok(MatrixMeasure::from_imats(atoms))
    }

    fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out: Vec<f64> = self
            .atoms
            .iter()
            .map(|(_, w)| {
                acc += w;
                acc
            })
            .collect();
        if let Some(last) = out.last_mut() {
            *last = 1.0;
        }
        out
    }
}

fn mat_mul_f64(d: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += a[i * d + k] * b[k * d + j];
            }
            out[i * d + j] = s;
        }
    }
}

fn frobenius(m: &[f64]) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Monte Carlo top-Lyapunov estimate: mean over trials of
/// (1/n) log ||M_n ... M_1||, with Frobenius rescaling every 16 steps.
pub fn lyapunov_estimate(
    mm: &MatrixMeasure,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<Estimate, EstimatorError> {
    if n == 0 || trials == 0 {
        return Err(EstimatorError::FitUnderdetermined(0));
    }
    let d = mm.dim;
    let cum = mm.cumulative();
    let mut samples = Vec::with_capacity(trials);
    let mut prod = vec![0.0; d * d];
    let mut tmp = vec![0.0; d * d];
    for trial in 0..trials {
        prod.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..d {
            prod[i * d + i] = 1.0;
        }
        let mut log_scale = 0.0;
        for step in 0..n {
            let mut rng = CounterRng::new(seed, &[0x4c59, trial as u64, step as u64]);
            let idx = rng.sample_cumulative(&cum);
            mat_mul_f64(d, &mm.atoms[idx].0, &prod, &mut tmp);
            std::mem::swap(&mut prod, &mut tmp);
            if step % 16 == 15 {
                let s = frobenius(&prod);
                prod.iter_mut().for_each(|v| *v /= s);
                log_scale += s.ln();
            }
        }
        samples.push((log_scale + frobenius(&prod).ln()) / n as f64);
    }
    let mean = samples.iter().sum::<f64>() / trials as f64;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
        / (trials.max(2) - 1) as f64;
    Ok(Estimate { value: mean, stderr: (var / trials as f64).sqrt() })
}

#[derive(Debug, Clone, Serialize)]
pub struct TauReport {
    pub kappa: f64,
    pub ms: Vec<usize>,
    /// minimal number of theta_Z matrices capturing mass >= 1 - e^{-kappa m}
    pub counts: Vec<usize>,
    pub support_sizes: Vec<usize>,
    pub tau_hat: f64,
    pub fit: FitDiagnostics,
}

/// Exact convolution walk of the Z-action matrices; per m, greedy count of
/// the heaviest atoms capturing mass >= 1 - e^{-kappa m}.
pub fn tau_z_estimate(
    schema: &NilGroupSchema,
    mu: &FiniteMeasure,
    z: &CentralSubgroupSpec,
    kappa: f64,
    m_max: usize,
    cap: usize,
) -> Result<TauReport, EstimatorError> {
    let gens = mu
        .atoms()
        .iter()
        .map(|(g, w)| {
            let m = g.gamma.theta_z(schema, z).map_err(WalkError::from)?;
            Ok((m, w.clone()))
        })
        .collect::<Result<Vec<(IMat, BigRational)>, EstimatorError>>()?;
    let k = gens[0].0.rows;
    let identity = IMat::identity(k);
    let mut current: BTreeMap<Vec<i64>, (IMat, BigRational)> = BTreeMap::new();
    current.insert(identity.data.clone(), (identity, BigRational::from_integer(1.into())));

    let mut ms = Vec::new();
    let mut counts = Vec::new();
    let mut support_sizes = Vec::new();
    for m in 1..=m_max {
        let mut next: BTreeMap<Vec<i64>, (IMat, BigRational)> = BTreeMap::new();
        for (g, wg) in &gens {
            for (h, wh) in current.values() {
                let prod = g.mul(h)?;
                let w = wg * wh;
                next.entry(prod.data.clone())
                    .and_modify(|(_, acc)| *acc += &w)
                    .or_insert((prod, w));
                if next.len() > cap {
                    return Err(EstimatorError::CapExceeded { size: next.len(), cap });
                }
            }
        }
        current = next;
        let mut weights: Vec<f64> = current.values().map(|(_, w)| rational_to_f64(w)).collect();
        weights.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let target = 1.0 - (-kappa * m as f64).exp();
        let mut mass = 0.0;
        let mut count = 0;
        for w in &weights {
            if mass >= target {
                break;
            }
            mass += w;
            count += 1;
        }
        ms.push(m);
        counts.push(count.max(1));
        support_sizes.push(current.len());
    }
    let xs: Vec<f64> = ms.iter().map(|&m| m as f64).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let fit = linear_fit(&xs, &ys)?;
    Ok(TauReport { kappa, ms, counts, support_sizes, tau_hat: fit.slope.max(0.0), fit })
}

// ---------------------------------------------------------------------------
// frequency-space transfer operators on torus schemas

pub type FreqVec = HashMap<Vec<i64>, Complex64>;

pub fn freq_norm(phi: &FreqVec) -> f64 {
    phi.values().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn transposed_base_matrices(
    schema: &NilGroupSchema,
    mu: &FiniteMeasure,
) -> Result<Vec<(IMat, f64)>, EstimatorError> {
    mu.atoms()
        .iter()
        .map(|(g, w)| {
            if let Some(coords) = g.translation.as_exact() {
                if !coords.iter().all(num_traits::Zero::is_zero) {
                    return Err(EstimatorError::TranslationUnsupported);
                }
            } else {
                return Err(EstimatorError::TranslationUnsupported);
            }
            let _ = schema;
            Ok((g.gamma.base_matrix().transpose(), rational_to_f64(w)))
        })
        .collect()
}

/// Linearized action on all chart frequencies: the base matrix on the
/// abelianized coordinates plus the induced central matrix on the
/// commutator coordinates (quadratic cross terms are dropped, so on
/// non-abelian schemas this is a linearization).
fn transposed_full_matrices(
    schema: &NilGroupSchema,
    mu: &FiniteMeasure,
) -> Result<Vec<(IMat, f64)>, EstimatorError> {
    let comm = schema.commutator_indices();
    if comm.is_empty() {
        return transposed_base_matrices(schema, mu);
    }
    let base = schema.base_dim();
    let dim = schema.dim();
    let center = CentralSubgroupSpec::full_center(schema);
    mu.atoms()
        .iter()
        .map(|(g, w)| {
            if let Some(coords) = g.translation.as_exact() {
                if !coords.iter().all(num_traits::Zero::is_zero) {
                    return Err(EstimatorError::TranslationUnsupported);
                }
            } else {
                return Err(EstimatorError::TranslationUnsupported);
            }
            let a = g.gamma.base_matrix();
            let th = g.gamma.theta_z(schema, &center).map_err(WalkError::from)?;
            let mut full = IMat::zero(dim, dim);
            for i in 0..base {
                for j in 0..base {
                    full.set(i, j, a.get(i, j));
                }
            }
            for (r, &i) in comm.iter().enumerate() {
                for (c, &j) in comm.iter().enumerate() {
                    full.set(i, j, th.get(r, c));
                }
            }
            Ok((full.transpose(), rational_to_f64(w)))
        })
        .collect()
}

/// One step of the Koopman operator in Fourier coordinates: the coefficient
/// at M^T c picks up weight x coefficient at c, for each atom M of the
/// automorphism measure.
pub fn apply_koopman_freq(mats: &[(IMat, f64)], phi: &FreqVec) -> Result<FreqVec, EstimatorError> {
    let mut out: FreqVec = HashMap::with_capacity(phi.len() * mats.len());
    for (mt, w) in mats {
        for (c, v) in phi {
            let img = mt.mul_vec(c)?;
            *out.entry(img).or_insert(Complex64::new(0.0, 0.0)) += w * v;
        }
    }
    out.retain(|_, v| v.norm_sqr() > 0.0);
    Ok(out)
}

fn truncate_box(phi: &mut FreqVec, radius: i64) -> f64 {
    let mut dropped = 0.0;
    phi.retain(|c, v| {
        if c.iter().all(|&x| x.abs() <= radius) {
            true
        } else {
            dropped += v.norm_sqr();
            false
        }
    });
    dropped.sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaReport {
    pub method: String,
    pub sigma_hat: f64,
    pub fit: FitDiagnostics,
    pub log_norms: Vec<f64>,
    pub escaped_mass: f64,
    pub converged: bool,
}

/// sigma estimate by iterating the frequency transfer operator restricted
/// to the box |c|_inf <= radius, seeded on the fiber frequencies of Z.
/// Escaping mass is dropped (compression), so this is an estimate, not a
/// certified bound.
pub fn sigma_frequency_truncation(
    schema: &NilGroupSchema,
    mu: &FiniteMeasure,
    z: &CentralSubgroupSpec,
    radius: i64,
    m_max: usize,
) -> Result<SigmaReport, EstimatorError> {
    let mats = transposed_full_matrices(schema, mu)?;
    let dim = schema.dim();
    // seed: unit mass on the first fiber frequency
    let mut seed = vec![0i64; dim];
    seed[z.indices[0]] = 1;
    let mut phi: FreqVec = HashMap::new();
    phi.insert(seed, Complex64::new(1.0, 0.0));
    let mut log_scale = 0.0;
    let mut log_norms = Vec::with_capacity(m_max);
    let mut escaped = 0.0f64;
    for _ in 0..m_max {
        phi = apply_koopman_freq(&mats, &phi)?;
        escaped = escaped.max(truncate_box(&mut phi, radius));
        let n = freq_norm(&phi);
        if n == 0.0 {
            break;
        }
        log_norms.push(log_scale + n.ln());
        // renormalize to avoid underflow
        let scale = 1.0 / n;
        phi.values_mut().for_each(|v| *v *= scale);
        log_scale += n.ln();
    }
    if log_norms.len() < 3 {
        return Err(EstimatorError::FitUnderdetermined(log_norms.len()));
    }
    // fit on the tail half, where transients have died down
    let start = log_norms.len() / 2;
    let xs: Vec<f64> = (start..log_norms.len()).map(|m| (m + 1) as f64).collect();
    let ys: Vec<f64> = log_norms[start..].to_vec();
    let fit = linear_fit(&xs, &ys)?;
    Ok(SigmaReport {
        method: "frequency-truncation".into(),
        sigma_hat: (-fit.slope).max(0.0),
        fit,
        log_norms,
        escaped_mass: escaped,
        converged: fit.r2 > 0.9,
    })
}

/// sigma estimate from the l2 decay of U(mu)^m f over a dictionary of
/// frequency-space functions with nonzero fiber part.  Exact sparse
/// iteration; the slowest observed decay is reported.
pub fn sigma_l2_decay(
    schema: &NilGroupSchema,
    mu: &FiniteMeasure,
    dictionary: &[FreqVec],
    m_max: usize,
    cap: usize,
) -> Result<SigmaReport, EstimatorError> {
    let mats = transposed_base_matrices(schema, mu)?;
    let mut worst: Option<(f64, FitDiagnostics, Vec<f64>)> = None;
    for f in dictionary {
        let mut phi = f.clone();
        let n0 = freq_norm(&phi);
        if n0 == 0.0 {
            continue;
        }
        let mut log_norms = Vec::with_capacity(m_max);
        for _ in 0..m_max {
            phi = apply_koopman_freq(&mats, &phi)?;
            if phi.len() > cap {
                return Err(EstimatorError::CapExceeded { size: phi.len(), cap });
            }
            let n = freq_norm(&phi);
            if n == 0.0 {
                break;
            }
            log_norms.push((n / n0).ln());
        }
        if log_norms.len() < 3 {
            continue;
        }
        let xs: Vec<f64> = (1..=log_norms.len()).map(|m| m as f64).collect();
        let fit = linear_fit(&xs, &log_norms)?;
        let rate = -fit.slope;
        if worst.as_ref().map_or(true, |(r, _, _)| rate < *r) {
            worst = Some((rate, fit, log_norms));
        }
    }
    let (rate, fit, log_norms) = worst.ok_or(EstimatorError::FitUnderdetermined(0))?;
    Ok(SigmaReport {
        method: "l2-decay".into(),
        sigma_hat: rate.max(0.0),
        fit,
        log_norms,
        escaped_mass: 0.0,
        converged: fit.r2 > 0.9,
    })
}

/// Norm estimate for the mean-zero Koopman operator of a matrix measure on
/// a torus, by power iteration of the box-compressed operator.  The value
/// is a lower bound on the true norm up to truncation.
pub fn koopman_norm_truncated(
    mats: &[(IMat, f64)],
    dim: usize,
    radius: i64,
    iterations: usize,
) -> Result<f64, EstimatorError> {
    let inv: Vec<(IMat, f64)> = mats
        .iter()
        .map(|(m, w)| Ok((m.inverse_unimodular()?, *w)))
        .collect::<Result<_, MatrixError>>()?;
    // seed: uniform over small nonzero frequencies
    let mut phi: FreqVec = HashMap::new();
    let mut idx = vec![-1i64; dim];
    loop {
        if idx.iter().any(|&x| x != 0) {
            phi.insert(idx.clone(), Complex64::new(1.0, 0.0));
        }
        let mut carry = 0;
        loop {
            if carry == dim {
                break;
            }
            idx[carry] += 1;
            if idx[carry] <= 1 {
                break;
            }
            idx[carry] = -1;
            carry += 1;
        }
        if carry == dim {
            break;
        }
    }
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let n = freq_norm(&phi);
        if n == 0.0 {
            return Ok(0.0);
        }
        let s = 1.0 / n;
        phi.values_mut().for_each(|v| *v *= s);
        let mut tphi = apply_koopman_freq(mats, &phi)?;
        truncate_box(&mut tphi, radius);
        estimate = freq_norm(&tphi);
        let mut back = apply_koopman_freq(&inv, &tphi)?;
        truncate_box(&mut back, radius);
        phi = back;
    }
    Ok(estimate)
}

#[derive(Debug, Clone, Serialize)]
pub struct Sqrt3Report {
    pub nu_norm: f64,
    pub bound: f64,
    /// per dictionary function: ||U(mu)^2 f|| for ||f|| = 1
    pub lhs: Vec<f64>,
    pub holds: bool,
}

/// For block-triangular torus walks whose atoms have base matrix
/// [[A, I], [0, D]] with block size d, checks the contraction inequality
/// ||U(mu)^2 f|| <= sqrt(3) ||U_{Y,0}(nu)|| ||f|| over a dictionary of
/// frequency functions whose first-block part is nonzero; nu is the law of
/// the D block.  The left side is exact; the nu-norm is estimated by
/// box-truncated power iteration, so `slack` is a relative tolerance.
pub fn sqrt3_check(
    schema: &NilGroupSchema,
    mu: &FiniteMeasure,
    d: usize,
    dictionary: &[FreqVec],
    radius: i64,
    iterations: usize,
    slack: f64,
) -> Result<Sqrt3Report, EstimatorError> {
    let mats = transposed_base_matrices(schema, mu)?;
    let dim = schema.dim();
    assert_eq!(dim, 2 * d, "block-triangular walks live on a torus of even dimension");
    // extract the D blocks and verify the block shape on the untransposed matrix
    let mut nu: Vec<(IMat, f64)> = Vec::with_capacity(mats.len());
    for (mt, w) in &mats {
        let m = mt.transpose();
        let mut dblock = IMat::zero(d, d);
        for i in 0..d {
            for j in 0..d {
                assert_eq!(m.get(d + i, j), 0, "lower-left block must vanish");
                assert_eq!(m.get(i, d + j), i64::from(i == j), "upper-right block must be I");
                dblock.set(i, j, m.get(d + i, d + j));
            }
        }
        nu.push((dblock.transpose(), *w));
    }
    let nu_norm = koopman_norm_truncated(&nu, d, radius, iterations)?;
    let bound = 3f64.sqrt() * nu_norm;
    let mut lhs = Vec::with_capacity(dictionary.len());
    for f in dictionary {
        let n0 = freq_norm(f);
        if n0 == 0.0 {
            continue;
        }
        for c in f.keys() {
            assert!(
                c[..d].iter().any(|&x| x != 0),
                "dictionary functions must have nonzero first-block frequencies"
            );
        }
        let once = apply_koopman_freq(&mats, f)?;
        let twice = apply_koopman_freq(&mats, &once)?;
        lhs.push(freq_norm(&twice) / n0);
    }
    let holds = lhs.iter().all(|&v| v <= bound * (1.0 + slack));
    Ok(Sqrt3Report { nu_norm, bound, lhs, holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::{AffineMap, Automorphism};
    use crate::element::GroupElement;

    #[test]
    fn fit_recovers_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [2.1, 4.2, 6.3, 8.4];
        let f = linear_fit(&xs, &ys).unwrap();
        assert!((f.slope - 2.1).abs() < 1e-12);
        assert!(f.intercept.abs() < 1e-9);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lyapunov_of_fixed_matrix() {
        let a = IMat::new(2, 2, vec![2, 1, 1, 1]);
        let mm = MatrixMeasure::from_imats(vec![(a, 1.0)]);
        let est = lyapunov_estimate(&mm, 200, 8, 1).unwrap();
        let golden = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        assert!((est.value - golden).abs() < 0.01 * golden, "{} vs {}", est.value, golden);
    }

    #[test]
    fn lyapunov_of_rotation_is_zero() {
        let r = IMat::new(2, 2, vec![0, -1, 1, 0]);
        let mm = MatrixMeasure::from_imats(vec![(r, 1.0)]);
        let est = lyapunov_estimate(&mm, 100, 4, 1).unwrap();
        assert!(est.value.abs() < 0.01);
    }

    #[test]
    fn stderr_shrinks_with_trials() {
        let a = IMat::new(2, 2, vec![1, 1, 0, 1]);
        let b = IMat::new(2, 2, vec![1, 0, 1, 1]);
        let mm = MatrixMeasure::from_imats(vec![(a, 0.5), (b, 0.5)]);
        let e1 = lyapunov_estimate(&mm, 50, 100, 3).unwrap();
        let e2 = lyapunov_estimate(&mm, 50, 400, 3).unwrap();
        let ratio = e1.stderr / e2.stderr;
        assert!(ratio > 1.4 && ratio < 2.6, "stderr should scale like 1/sqrt(trials): {ratio}");
    }

    #[test]
    fn tau_single_generator_is_zero() {
        let h = NilGroupSchema::heisenberg_b(1, IMat::new(2, 2, vec![0, 1, -1, 0]), 1);
        let g = AffineMap::automorphism(
            &h,
            Automorphism::heisenberg_linear(IMat::new(2, 2, vec![2, 1, 1, 1]), 1),
        );
        let mu = FiniteMeasure::dirac(g);
        let z = CentralSubgroupSpec::full_center(&h);
        let rep = tau_z_estimate(&h, &mu, &z, 0.5, 10, 10_000).unwrap();
        assert!(rep.counts.iter().all(|&c| c == 1));
        assert!(rep.tau_hat.abs() < 1e-9);
    }

    #[test]
    fn sigma_of_identity_is_zero() {
        let t = NilGroupSchema::torus(2);
        let mu = FiniteMeasure::dirac(AffineMap::identity(&t));
        let z = CentralSubgroupSpec::new(&t, vec![0]).unwrap();
        let rep = sigma_frequency_truncation(&t, &mu, &z, 8, 12).unwrap();
        assert!(rep.sigma_hat.abs() < 1e-9);
    }

    #[test]
    fn sigma_runs_on_a_heisenberg_quotient() {
        // seeds the full-dimension frequency vector: the central frequency
        // is fixed by eps = 1, so no decay is observed
        let h = NilGroupSchema::heisenberg_b(1, IMat::new(2, 2, vec![0, 1, -1, 0]), 1);
        let z = CentralSubgroupSpec::full_center(&h);
        let mu = FiniteMeasure::uniform(vec![
            AffineMap::automorphism(
                &h,
                crate::affine::Automorphism::heisenberg_linear(IMat::new(2, 2, vec![2, 1, 1, 1]), 1),
            ),
            AffineMap::automorphism(
                &h,
                crate::affine::Automorphism::heisenberg_linear(IMat::new(2, 2, vec![1, 1, 1, 2]), 1),
            ),
        ])
        .unwrap();
        let rep = sigma_frequency_truncation(&h, &mu, &z, 6, 10).unwrap();
        assert!(rep.sigma_hat.abs() < 1e-9);
    }

    #[test]
    fn translation_rejected_by_frequency_operator() {
        let t = NilGroupSchema::torus(2);
        let g = AffineMap::translation_by(
            &t,
            GroupElement::exact_from_ratios(&[(1, 2), (0, 1)]),
        );
        let mu = FiniteMeasure::dirac(g);
        let z = CentralSubgroupSpec::new(&t, vec![0]).unwrap();
        assert!(matches!(
            sigma_frequency_truncation(&t, &mu, &z, 8, 10),
            Err(EstimatorError::TranslationUnsupported)
        ));
    }

    fn block_triangular_atom(a: &IMat, d: &IMat) -> IMat {
        let k = a.rows;
        let mut m = IMat::zero(2 * k, 2 * k);
        for i in 0..k {
            for j in 0..k {
                m.set(i, j, a.get(i, j));
                m.set(k + i, k + j, d.get(i, j));
            }
            m.set(i, k + i, 1);
        }
        m
    }

    #[test]
    fn sqrt3_bound_holds_for_block_triangular_walk() {
        let t = NilGroupSchema::torus(4);
        let a1 = IMat::new(2, 2, vec![2, 1, 1, 1]);
        let a2 = a1.inverse_unimodular().unwrap();
        let d1 = IMat::identity(2);
        let d2 = d1.neg().unwrap();
        let quarter = BigRational::new(1.into(), 4.into());
        let atoms: Vec<(AffineMap, BigRational)> = [(&a1, &d1), (&a1, &d2), (&a2, &d1), (&a2, &d2)]
            .iter()
            .map(|(a, d)| {
                let m = block_triangular_atom(a, d);
                (AffineMap::automorphism(&t, Automorphism::torus(m)), quarter.clone())
            })
            .collect();
        let mu = FiniteMeasure::new(atoms).unwrap();
        let mut f1: FreqVec = HashMap::new();
        f1.insert(vec![1, 0, 0, 0], Complex64::new(1.0, 0.0));
        let mut f2: FreqVec = HashMap::new();
        f2.insert(vec![1, -1, 0, 2], Complex64::new(0.6, 0.0));
        f2.insert(vec![0, 1, 1, 0], Complex64::new(0.0, 0.8));
        let rep = sqrt3_check(&t, &mu, 2, &[f1, f2], 6, 15, 0.05).unwrap();
        assert!((rep.nu_norm - 1.0).abs() < 1e-9, "nu = uniform{{I,-I}} has norm 1");
        assert!(rep.holds, "lhs {:?} vs bound {}", rep.lhs, rep.bound);
        assert_eq!(rep.lhs.len(), 2);
    }

    #[test]
    fn koopman_norm_of_identity_is_one() {
        let mats = vec![(IMat::identity(2), 1.0)];
        let n = koopman_norm_truncated(&mats, 2, 6, 20).unwrap();
        assert!((n - 1.0).abs() < 1e-9);
    }

    #[test]
    fn koopman_norm_contracts_for_expanding_family() {
        // uniform measure on {T, T^-1, S, S^-1}: spectral gap on the torus
        let t1 = IMat::new(2, 2, vec![1, 2, 0, 1]);
        let t2 = IMat::new(2, 2, vec![1, 0, 2, 1]);
        let mats = vec![
            (t1.clone(), 0.25),
            (t1.inverse_unimodular().unwrap(), 0.25),
            (t2.clone(), 0.25),
            (t2.inverse_unimodular().unwrap(), 0.25),
        ];
        let n = koopman_norm_truncated(&mats, 2, 16, 40).unwrap();
        assert!(n < 1.0 - 1e-3, "expected a spectral gap, got {n}");
        assert!(n > 0.3, "norm estimate suspiciously small: {n}");
    }
}
