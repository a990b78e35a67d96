//! Measure calculus on matrix algebras: additive/multiplicative convolutions,
//! Fourier transforms, non-concentration checks, large-deviation tails,
//! return-time decomposition under a finite labeling, and Fourier-decay scans.

use crate::estimators::{linear_fit, lyapunov_estimate, Estimate, EstimatorError, FitDiagnostics, MatrixMeasure};
use crate::matrix::{rational_to_f64, QMat};
use crate::rng::CounterRng;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed};
use serde::Serialize;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppendixError {
    #[error("weights must be positive and sum to 1")]
    BadWeights,
    #[error("atom shape mismatch: expected {expected}x{expected}")]
    Shape { expected: usize },
    #[error("support size {size} exceeds cap {cap}")]
    CapExceeded { size: usize, cap: usize },
    #[error("label {label} out of range for group of order {order}")]
    BadLabel { label: usize, order: usize },
    #[error("multiplication table is not a group law")]
    BadGroupTable,
    #[error("no identity-coset return within {0} steps")]
    NoReturns(usize),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// A finitely supported measure on the matrix algebra M_k with exact
/// rational atoms.
#[derive(Debug, Clone)]
pub struct AlgebraMeasure {
    pub k: usize,
    atoms: Vec<(QMat, BigRational)>,
}

fn atom_key(m: &QMat) -> String {
    let parts: Vec<String> = m.data.iter().map(|x| x.to_string()).collect();
    parts.join(",")
}

impl AlgebraMeasure {
    pub fn new(k: usize, atoms: Vec<(QMat, BigRational)>) -> Result<Self, AppendixError> {
        if atoms.is_empty() || atoms.iter().any(|(_, w)| !w.is_positive()) {
            return Err(AppendixError::BadWeights);
        }
        let total: BigRational = atoms.iter().map(|(_, w)| w.clone()).sum();
        if !total.is_one() {
            return Err(AppendixError::BadWeights);
        }
        if atoms.iter().any(|(m, _)| m.rows != k || m.cols != k) {
            return Err(AppendixError::Shape { expected: k });
        }
        Ok(AlgebraMeasure { k, atoms })
    }

    pub fn dirac(m: QMat) -> Self {
        let k = m.rows;
        AlgebraMeasure { k, atoms: vec![(m, BigRational::one())] }
    }

    pub fn dirac_zero(k: usize) -> Self {
        AlgebraMeasure::dirac(QMat::zero(k, k))
    }

    pub fn uniform(mats: Vec<QMat>) -> Result<Self, AppendixError> {
        let n = mats.len();
        let w = BigRational::new(1.into(), (n as i64).into());
        AlgebraMeasure::new(mats[0].rows, mats.into_iter().map(|m| (m, w.clone())).collect())
    }

    pub fn atoms(&self) -> &[(QMat, BigRational)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    fn binary_convolve(
        &self,
        other: &AlgebraMeasure,
        cap: usize,
        op: impl Fn(&QMat, &QMat) -> QMat,
    ) -> Result<AlgebraMeasure, AppendixError> {
        let mut merged: BTreeMap<String, (QMat, BigRational)> = BTreeMap::new();
        for (a, wa) in &self.atoms {
            for (b, wb) in &other.atoms {
                let m = op(a, b);
                let w = wa * wb;
                merged
                    .entry(atom_key(&m))
                    .and_modify(|(_, acc)| *acc += &w)
                    .or_insert((m, w));
                if merged.len() > cap {
                    return Err(AppendixError::CapExceeded { size: merged.len(), cap });
                }
            }
        }
        Ok(AlgebraMeasure { k: self.k, atoms: merged.into_values().collect() })
    }

    /// Law of x + y.
    pub fn add_convolve(&self, other: &AlgebraMeasure, cap: usize) -> Result<Self, AppendixError> {
        self.binary_convolve(other, cap, QMat::add)
    }

    /// Law of x - y.
    pub fn sub_convolve(&self, other: &AlgebraMeasure, cap: usize) -> Result<Self, AppendixError> {
        self.binary_convolve(other, cap, QMat::sub)
    }

    /// Law of x * y.
    pub fn mult_convolve(&self, other: &AlgebraMeasure, cap: usize) -> Result<Self, AppendixError> {
        self.binary_convolve(other, cap, QMat::mul)
    }

    pub fn boxplus_power(&self, k: usize, cap: usize) -> Result<Self, AppendixError> {
        let mut acc = AlgebraMeasure::dirac_zero(self.k);
        for _ in 0..k {
            acc = acc.add_convolve(self, cap)?;
        }
        Ok(acc)
    }

    /// Fourier transform at a dual coordinate vector: sum of w e(<xi, x>).
    pub fn fourier(&self, xi: &[f64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (m, w) in &self.atoms {
            let phase: f64 = m
                .data
                .iter()
                .zip(xi)
                .map(|(x, &c)| rational_to_f64(x) * c)
                .sum();
            acc += rational_to_f64(w)
                * Complex64::new(0.0, 2.0 * std::f64::consts::PI * phase).exp();
        }
        acc
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PositivityReport {
    pub checked: usize,
    pub violations: Vec<Value>,
}

/// Checks that (nu * (nu1^{boxplus k} boxminus nu1^{boxplus k}) * nu2)^ is
/// real, non-negative, and dominates |(nu * nu1 * nu2)^|^{2k} at each
/// sampled frequency.  Violations would indicate an implementation bug.
pub fn positivity_check(
    nu: &AlgebraMeasure,
    nu1: &AlgebraMeasure,
    nu2: &AlgebraMeasure,
    k: usize,
    xis: &[Vec<f64>],
    cap: usize,
) -> Result<PositivityReport, AppendixError> {
    let p = nu1.boxplus_power(k, cap)?;
    let sym = p.sub_convolve(&p, cap)?;
    let rho = nu.mult_convolve(&sym, cap)?.mult_convolve(nu2, cap)?;
    let plain = nu.mult_convolve(nu1, cap)?.mult_convolve(nu2, cap)?;
    let mut violations = Vec::new();
    for xi in xis {
        let v = rho.fourier(xi);
        let lower = plain.fourier(xi).norm().powi(2 * k as i32);
        if v.re < -1e-9 || v.im.abs() > 1e-9 || lower > v.re + 1e-9 {
            violations.push(json!({
                "xi": xi,
                "value": [v.re, v.im],
                "lower": lower,
            }));
        }
    }
    Ok(PositivityReport { checked: xis.len(), violations })
}

#[derive(Debug, Clone, Serialize)]
pub struct NcReport {
    pub delta: f64,
    /// mass outside B(0, delta^{-eps}) and its allowance delta^tau
    pub outside_mass: f64,
    pub condition1_holds: bool,
    /// worst candidate-center mass of x + S(delta^eps); lower bound on the sup
    pub worst_center_mass: f64,
    pub worst_center: Option<usize>,
    pub condition2_holds: bool,
    /// per dyadic rho: (rho, max hyperplane-neighborhood mass, allowance)
    pub condition3_rows: Vec<(f64, f64, f64)>,
    pub condition3_holds: bool,
    pub hyperplanes_tested: usize,
}

fn float_nullvector(rows: &[Vec<f64>], dim: usize) -> Option<Vec<f64>> {
    // one unit vector orthogonal to the given (dim-1) rows, by elimination
    let mut a: Vec<Vec<f64>> = rows.to_vec();
    let m = a.len();
    let mut pivot_cols = Vec::new();
    let mut r = 0;
    for c in 0..dim {
        let Some(p) = (r..m).max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap())
        else {
            break;
        };
        if a[p][c].abs() < 1e-12 {
            continue;
        }
        a.swap(p, r);
        let pv = a[r][c];
        for i in 0..m {
            if i != r {
                let f = a[i][c] / pv;
                for j in 0..dim {
                    a[i][j] -= f * a[r][j];
                }
            }
        }
        pivot_cols.push(c);
        r += 1;
        if r == m {
            break;
        }
    }
    let free = (0..dim).find(|c| !pivot_cols.contains(c))?;
    let mut v = vec![0.0; dim];
    v[free] = 1.0;
    for (row, &pc) in pivot_cols.iter().enumerate() {
        v[pc] = -a[row][free] / a[row][pc];
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

/// Three-part non-concentration report at scale delta.  Conditions (2) and
/// (3) scan structured families (atom centers and differences; hyperplanes
/// through atom subsets plus random and locally refined ones), so their
/// reported maxima are lower bounds on the true suprema.
pub fn nc_check(
    eta: &AlgebraMeasure,
    eps: f64,
    kappa: f64,
    tau: f64,
    delta: f64,
    random_hyperplanes: usize,
    seed: u64,
) -> NcReport {
    let k = eta.k;
    let dim = k * k;
    let allowance = delta.powf(tau);
    let floats: Vec<(Vec<f64>, f64)> = eta
        .atoms()
        .iter()
        .map(|(m, w)| (m.to_f64(), rational_to_f64(w)))
        .collect();

    // (1) support bound
    let radius = delta.powf(-eps);
    let outside_mass: f64 = floats
        .iter()
        .filter(|(m, _)| m.iter().map(|x| x * x).sum::<f64>().sqrt() > radius)
        .map(|(_, w)| w)
        .sum();

    // (2) small-determinant neighborhoods; det of the left-regular action on
    // M_k is det(x)^k
    let det_cut = delta.powf(eps);
    let mut centers: Vec<QMat> = eta.atoms().iter().map(|(m, _)| m.clone()).collect();
    for i in 0..eta.len() {
        for j in 0..eta.len() {
            if i != j {
                centers.push(eta.atoms()[i].0.sub(&eta.atoms()[j].0));
            }
        }
    }
    let mut worst_center_mass = 0.0f64;
    let mut worst_center = None;
    for (ci, c) in centers.iter().enumerate() {
        let mass: f64 = eta
            .atoms()
            .iter()
            .filter(|(y, _)| {
                let d = rational_to_f64(&y.sub(c).det()).abs().powi(k as i32);
                d <= det_cut
            })
            .map(|(_, w)| rational_to_f64(w))
            .sum();
        if mass > worst_center_mass {
            worst_center_mass = mass;
            worst_center = Some(ci);
        }
    }

    // (3) affine hyperplane neighborhoods
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new(); // (unit normal, offset)
    let n_atoms = floats.len();
    if n_atoms >= dim {
        // hyperplanes through `dim` atoms (bounded enumeration)
        let mut combo: Vec<usize> = (0..dim).collect();
        let mut budget = 200usize;
        loop {
            let base = &floats[combo[0]].0;
            let rows: Vec<Vec<f64>> = combo[1..]
                .iter()
                .map(|&i| floats[i].0.iter().zip(base).map(|(a, b)| a - b).collect())
                .collect();
            if let Some(n) = float_nullvector(&rows, dim) {
                let c: f64 = n.iter().zip(base).map(|(a, b)| a * b).sum();
                planes.push((n, c));
            }
            budget -= 1;
            if budget == 0 {
                break;
            }
            // next combination
            let mut i = dim;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                if combo[i] < n_atoms - (dim - i) {
                    combo[i] += 1;
                    for j in i + 1..dim {
                        combo[j] = combo[j - 1] + 1;
                    }
                    break;
                }
                if i == 0 {
                    budget = 1;
                    break;
                }
            }
            if combo[0] > n_atoms - dim {
                break;
            }
        }
    }
    let mut rng = CounterRng::new(seed, &[0x9c]);
    for _ in 0..random_hyperplanes {
        let mut n: Vec<f64> = (0..dim).map(|_| rng.next_f64() - 0.5).collect();
        let norm = n.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        n.iter_mut().for_each(|x| *x /= norm);
        let anchor = &floats[rng.next_index(n_atoms)].0;
        let c: f64 = n.iter().zip(anchor).map(|(a, b)| a * b).sum();
        planes.push((n, c));
    }
    // local refinement around the family's best plane at mid-scale
    let mid = delta.sqrt();
    let mass_at = |plane: &(Vec<f64>, f64), rho: f64| -> f64 {
        floats
            .iter()
            .filter(|(x, _)| {
                let d: f64 = plane.0.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - plane.1;
                d.abs() <= rho
            })
            .map(|(_, w)| w)
            .sum()
    };
    if let Some(best) = planes
        .iter()
        .max_by(|p, q| mass_at(p, mid).partial_cmp(&mass_at(q, mid)).unwrap())
        .cloned()
    {
        for _ in 0..16 {
            let mut n = best.0.clone();
            for x in n.iter_mut() {
                *x += 0.05 * (rng.next_f64() - 0.5);
            }
            let norm = n.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            n.iter_mut().for_each(|x| *x /= norm);
            planes.push((n, best.1 + 0.05 * (rng.next_f64() - 0.5)));
        }
    }
    let mut condition3_rows = Vec::new();
    let mut condition3_holds = true;
    let mut rho = delta;
    while rho <= 1.0 + 1e-12 {
        let max_mass = planes
            .iter()
            .map(|p| mass_at(p, rho))
            .fold(0.0f64, f64::max);
        let bound = delta.powf(-eps) * rho.powf(kappa);
        condition3_holds &= max_mass <= bound + 1e-12;
        condition3_rows.push((rho, max_mass, bound));
        rho *= 2.0;
    }

    NcReport {
        delta,
        outside_mass,
        condition1_holds: outside_mass <= allowance,
        worst_center_mass,
        worst_center,
        condition2_holds: worst_center_mass <= allowance,
        condition3_rows,
        condition3_holds,
        hyperplanes_tested: planes.len(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LdTailReport {
    pub lambda1: f64,
    pub omega: f64,
    /// (m, empirical P[log ||g_m ... g_1|| > m (lambda1 + omega)])
    pub rows: Vec<(usize, f64)>,
    /// exponential fit on the leading nonzero rows, if any
    pub fit: Option<FitDiagnostics>,
    pub kappa_hat: f64,
}

/// Empirical large-deviation tail of the norm growth beyond rate
/// lambda1 + omega.
pub fn ld_tail(
    mm: &MatrixMeasure,
    lambda1: f64,
    omega: f64,
    ms: &[usize],
    trials: usize,
    seed: u64,
) -> Result<LdTailReport, AppendixError> {
    let d = mm.dim;
    let cum = {
        let mut acc = 0.0;
        let mut out: Vec<f64> = mm.atoms.iter().map(|(_, w)| { acc += w; acc }).collect();
        if let Some(l) = out.last_mut() {
            *l = 1.0;
        }
        out
    };
    let m_max = ms.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; ms.len()];
    let mut prod = vec![0.0; d * d];
    let mut tmp = vec![0.0; d * d];
    for trial in 0..trials {
        prod.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..d {
            prod[i * d + i] = 1.0;
        }
        let mut log_scale = 0.0;
        for step in 0..m_max {
            let mut rng = CounterRng::new(seed, &[0x1d, trial as u64, step as u64]);
            let idx = rng.sample_cumulative(&cum);
            mat_mul(d, &mm.atoms[idx].0, &prod, &mut tmp);
            std::mem::swap(&mut prod, &mut tmp);
            let s = prod.iter().map(|v| v * v).sum::<f64>().sqrt();
            prod.iter_mut().for_each(|v| *v /= s);
            log_scale += s.ln();
            let m = step + 1;
            if let Some(pos) = ms.iter().position(|&mm_| mm_ == m) {
                if log_scale > m as f64 * (lambda1 + omega) {
                    counts[pos] += 1;
                }
            }
        }
    }
    let rows: Vec<(usize, f64)> = ms
        .iter()
        .zip(&counts)
        .map(|(&m, &c)| (m, c as f64 / trials as f64))
        .collect();
    // fit on the leading run of nonzero probabilities
    let nonzero: Vec<(f64, f64)> = rows
        .iter()
        .take_while(|(_, p)| *p > 0.0)
        .map(|&(m, p)| (m as f64, p.ln()))
        .collect();
    let fit = if nonzero.len() >= 3 {
        let xs: Vec<f64> = nonzero.iter().map(|(x, _)| *x).collect();
        let ys: Vec<f64> = nonzero.iter().map(|(_, y)| *y).collect();
        linear_fit(&xs, &ys).ok()
    } else {
        None
    };
    let kappa_hat = fit.map(|f| -f.slope).unwrap_or(0.0).max(0.0);
    Ok(LdTailReport { lambda1, omega, rows, fit, kappa_hat })
}

fn mat_mul(d: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
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

/// A finite group by multiplication table; element 0 is the identity.
#[derive(Debug, Clone, Serialize)]
pub struct FiniteGroup {
    pub order: usize,
    table: Vec<usize>,
}

impl FiniteGroup {
    pub fn new(order: usize, table: Vec<usize>) -> Result<Self, AppendixError> {
        if table.len() != order * order {
            return Err(AppendixError::BadGroupTable);
        }
        for i in 0..order {
            // identity row/column and Latin-square rows
            if table[i] != i || table[i * order] != i {
                return Err(AppendixError::BadGroupTable);
            }
            let mut seen = vec![false; order];
            for j in 0..order {
                let v = table[i * order + j];
                if v >= order || seen[v] {
                    return Err(AppendixError::BadGroupTable);
                }
                seen[v] = true;
            }
        }
        Ok(FiniteGroup { order, table })
    }

    pub fn cyclic(n: usize) -> Self {
        let mut table = vec![0; n * n];
        for i in 0..n {
            for j in 0..n {
                table[i * n + j] = (i + j) % n;
            }
        }
        FiniteGroup { order: n, table }
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.table[a * self.order + b]
    }
}

/// Generator labels: atom i of the measure maps to group element labels[i].
#[derive(Debug, Clone, Serialize)]
pub struct Labeling {
    pub group: FiniteGroup,
    pub labels: Vec<usize>,
}

impl Labeling {
    pub fn validate(&self, atoms: usize) -> Result<(), AppendixError> {
        if self.labels.len() != atoms {
            return Err(AppendixError::BadGroupTable);
        }
        for &l in &self.labels {
            if l >= self.group.order {
                return Err(AppendixError::BadLabel { label: l, order: self.group.order });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReturnTimeReport {
    pub t_hat: f64,
    pub t_stderr: f64,
    pub lambda_mu: Estimate,
    pub lambda_circ: Estimate,
    /// | lambda_circ - T lambda_mu | within 3 combined standard errors
    pub consistent: bool,
    pub returns_collected: usize,
    /// (m, empirical P[|tau(m) - T m| >= omega m]) for the diagnostic omega
    pub tail: Vec<(usize, f64)>,
    pub tail_fit: Option<FitDiagnostics>,
}

/// Samples return times of the label chain to the identity and the induced
/// measure at first return, and cross-checks lambda_1(mu-at-return) against
/// T * lambda_1(mu).
pub fn return_time_sim(
    mm: &MatrixMeasure,
    labeling: &Labeling,
    m_returns: usize,
    trials: usize,
    omega: f64,
    seed: u64,
) -> Result<ReturnTimeReport, AppendixError> {
    labeling.validate(mm.atoms.len())?;
    let d = mm.dim;
    let cum = {
        let mut acc = 0.0;
        let mut out: Vec<f64> = mm.atoms.iter().map(|(_, w)| { acc += w; acc }).collect();
        if let Some(l) = out.last_mut() {
            *l = 1.0;
        }
        out
    };
    let step_cap = m_returns * labeling.group.order * 64;
    let mut gaps: Vec<usize> = Vec::new();
    let mut circ_atoms: Vec<Vec<f64>> = Vec::new();
    let mut tail_counts = vec![0usize; m_returns];
    let mut taus: Vec<Vec<usize>> = Vec::new();
    for trial in 0..trials {
        let mut label = 0usize;
        let mut prod = vec![0.0; d * d];
        for i in 0..d {
            prod[i * d + i] = 1.0;
        }
        let mut tmp = vec![0.0; d * d];
        let mut last_return = 0usize;
        let mut trial_taus = Vec::with_capacity(m_returns);
        let mut step = 0usize;
        while trial_taus.len() < m_returns {
            if step >= step_cap {
                return Err(AppendixError::NoReturns(step_cap));
            }
            let mut rng = CounterRng::new(seed, &[0x27, trial as u64, step as u64]);
            let idx = rng.sample_cumulative(&cum);
            // left products: labels compose in walk order
            label = labeling.group.mul(labeling.labels[idx], label);
            mat_mul(d, &mm.atoms[idx].0, &prod, &mut tmp);
            std::mem::swap(&mut prod, &mut tmp);
            step += 1;
            if label == 0 {
                gaps.push(step - last_return);
                if circ_atoms.len() < 4096 {
                    circ_atoms.push(prod.clone());
                }
                // restart the product at each return to keep floats bounded
                prod.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..d {
                    prod[i * d + i] = 1.0;
                }
                last_return = step;
                trial_taus.push(step);
            }
        }
        taus.push(trial_taus);
    }
    let n = gaps.len() as f64;
    let t_hat = gaps.iter().sum::<usize>() as f64 / n;
    let var = gaps.iter().map(|&g| (g as f64 - t_hat).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let t_stderr = (var / n).sqrt();
    for trial_taus in &taus {
        for (i, &tau) in trial_taus.iter().enumerate() {
            let m = i + 1;
            if (tau as f64 - t_hat * m as f64).abs() >= omega * m as f64 {
                tail_counts[i] += 1;
            }
        }
    }
    let tail: Vec<(usize, f64)> = tail_counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (i + 1, c as f64 / trials as f64))
        .collect();
    let nonzero: Vec<(f64, f64)> = tail
        .iter()
        .skip(1)
        .take_while(|(_, p)| *p > 0.0)
        .map(|&(m, p)| (m as f64, p.ln()))
        .collect();
    let tail_fit = if nonzero.len() >= 3 {
        let xs: Vec<f64> = nonzero.iter().map(|(x, _)| *x).collect();
        let ys: Vec<f64> = nonzero.iter().map(|(_, y)| *y).collect();
        linear_fit(&xs, &ys).ok()
    } else {
        None
    };
    let circ = MatrixMeasure {
        dim: d,
        atoms: circ_atoms
            .iter()
            .map(|m| (m.clone(), 1.0 / circ_atoms.len() as f64))
            .collect(),
    };
    let lambda_mu = lyapunov_estimate(mm, 220, 48, seed ^ 0xa1)?;
    let lambda_circ = lyapunov_estimate(&circ, 220, 48, seed ^ 0xa2)?;
    let combined = lambda_circ.stderr
        + t_hat * lambda_mu.stderr
        + lambda_mu.value.abs() * t_stderr;
    let consistent = (lambda_circ.value - t_hat * lambda_mu.value).abs() <= 3.0 * combined;
    Ok(ReturnTimeReport {
        t_hat,
        t_stderr,
        lambda_mu,
        lambda_circ,
        consistent,
        returns_collected: gaps.len(),
        tail,
        tail_fit,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayScanRow {
    pub coset: usize,
    pub xi_norm: f64,
    pub modulus: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayScanReport {
    pub n: usize,
    pub rows: Vec<DecayScanRow>,
    /// empirical occupancy of each coset after n steps
    pub coset_mass: Vec<f64>,
}

/// Monte Carlo moduli of the Fourier transform of mu^{*n} restricted to the
/// cosets of the labeling, at the given dual vectors.  Coset representatives
/// are applied on the left (their inverses must be supplied).
pub fn decay_scan(
    mm: &MatrixMeasure,
    labeling: &Labeling,
    rep_inverses: &[Vec<f64>],
    n: usize,
    xis: &[Vec<f64>],
    trials: usize,
    seed: u64,
) -> Result<DecayScanReport, AppendixError> {
    labeling.validate(mm.atoms.len())?;
    let order = labeling.group.order;
    if rep_inverses.len() != order {
        return Err(AppendixError::BadGroupTable);
    }
    let d = mm.dim;
    let cum = {
        let mut acc = 0.0;
        let mut out: Vec<f64> = mm.atoms.iter().map(|(_, w)| { acc += w; acc }).collect();
        if let Some(l) = out.last_mut() {
            *l = 1.0;
        }
        out
    };
    let mut acc = vec![vec![Complex64::new(0.0, 0.0); xis.len()]; order];
    let mut coset_counts = vec![0usize; order];
    let mut prod = vec![0.0; d * d];
    let mut tmp = vec![0.0; d * d];
    let mut shifted = vec![0.0; d * d];
    for trial in 0..trials {
        prod.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..d {
            prod[i * d + i] = 1.0;
        }
        let mut label = 0usize;
        for step in 0..n {
            let mut rng = CounterRng::new(seed, &[0xdc, trial as u64, step as u64]);
            let idx = rng.sample_cumulative(&cum);
            label = labeling.group.mul(labeling.labels[idx], label);
            mat_mul(d, &mm.atoms[idx].0, &prod, &mut tmp);
            std::mem::swap(&mut prod, &mut tmp);
        }
        coset_counts[label] += 1;
        mat_mul(d, &rep_inverses[label], &prod, &mut shifted);
        for (xi_i, xi) in xis.iter().enumerate() {
            let phase: f64 = shifted.iter().zip(xi).map(|(a, b)| a * b).sum();
            acc[label][xi_i] += Complex64::new(0.0, 2.0 * std::f64::consts::PI * phase).exp();
        }
    }
    let mut rows = Vec::new();
    for coset in 0..order {
        for (xi_i, xi) in xis.iter().enumerate() {
            let norm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
            rows.push(DecayScanRow {
                coset,
                xi_norm: norm,
                modulus: (acc[coset][xi_i] / trials as f64).norm(),
            });
        }
    }
    let coset_mass = coset_counts.iter().map(|&c| c as f64 / trials as f64).collect();
    Ok(DecayScanReport { n, rows, coset_mass })
}
