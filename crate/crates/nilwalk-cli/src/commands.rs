//! Command implementations: each resolves a scenario or inline system from
//! the config, runs the requested computation, and emits artifacts.

use crate::config::ExperimentConfig;
use crate::output::ArtifactWriter;
use crate::scenario::{scenario, ScenarioDescriptor, ScenarioError, SCENARIO_NAMES};
use nilwalk_core::affine::FiniteMeasure;
use nilwalk_core::appendix::{
    decay_scan, ld_tail, nc_check, return_time_sim, AlgebraMeasure, AppendixError, FiniteGroup,
    Labeling,
};
use nilwalk_core::element::{GroupElement, NilmanifoldPoint};
use nilwalk_core::estimators::{
    lyapunov_estimate, sigma_frequency_truncation, tau_z_estimate, MatrixMeasure,
};
use nilwalk_core::matrix::{IMat, QMat};
use nilwalk_core::observables::{wasserstein_lower, TestFunction};
use nilwalk_core::reduction::{
    deviation, detect_low_height_subgroups, nearest_rational_point, rationalize_affine_system,
    reduce_witness, ReductionError, ReductionParams,
};
use nilwalk_core::schema::{CentralSubgroupSpec, NilGroupSchema};
use nilwalk_core::walk::{run_walk, WalkConfig};
use num_rational::BigRational;
use serde_json::{json, Value};
use std::str::FromStr;

#[derive(Debug)]
pub enum CliError {
    /// bad invocation or config: exit code 1
    Usage(String),
    /// the computation ran but the analytic goal was not met: exit code 2
    Analytic(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Analytic(m) => write!(f, "{m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("io error: {e}"))
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Unknown(_) => CliError::Usage(e.to_string()),
            _ => CliError::Analytic(e.to_string()),
        }
    }
}

impl From<ReductionError> for CliError {
    fn from(e: ReductionError) -> Self {
        match &e {
            ReductionError::NoFrequencyFound { .. }
            | ReductionError::FloorBreached { .. }
            | ReductionError::NoPullbackCandidate { .. }
            | ReductionError::VerificationFailed { .. } => CliError::Analytic(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<AppendixError> for CliError {
    fn from(e: AppendixError) -> Self {
        match &e {
            AppendixError::NoReturns(_) => CliError::Analytic(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

macro_rules! usage_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self { CliError::Usage(e.to_string()) }
        }
    )*};
}
usage_from!(
    nilwalk_core::affine::AffineError,
    nilwalk_core::element::ElementError,
    nilwalk_core::walk::WalkError,
    nilwalk_core::estimators::EstimatorError,
    nilwalk_core::observables::ObservableError,
    nilwalk_core::schema::SchemaError
);

/// The resolved system a command operates on.
struct System {
    name: String,
    schema: NilGroupSchema,
    measure: FiniteMeasure,
    z: CentralSubgroupSpec,
    arithmetic_only: bool,
}

fn resolve(cfg: &ExperimentConfig) -> Result<System, CliError> {
    if let Some(name) = &cfg.scenario {
        let k = cfg.params.k.unwrap_or(2);
        let ScenarioDescriptor { name, schema, measure, z, arithmetic_only, .. } =
            scenario(name, k)?;
        return Ok(System { name: name.to_string(), schema, measure, z, arithmetic_only });
    }
    match (&cfg.schema, &cfg.measure) {
        (Some(schema), Some(measure)) => {
            schema.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            measure.validate(schema)?;
            let z = CentralSubgroupSpec::full_center(schema);
            Ok(System {
                name: "inline".into(),
                schema: schema.clone(),
                measure: measure.clone(),
                z,
                arithmetic_only: false,
            })
        }
        _ => Err(CliError::Usage(
            "config needs either a scenario name or an inline schema plus measure".into(),
        )),
    }
}

fn require_equidistribution(sys: &System) -> Result<(), CliError> {
    if sys.arithmetic_only {
        Err(ScenarioError::ArithmeticOnly("free-2step").into())
    } else {
        Ok(())
    }
}

fn parse_rational_point(
    schema: &NilGroupSchema,
    coords: &[String],
) -> Result<NilmanifoldPoint, CliError> {
    if coords.len() != schema.dim() {
        return Err(CliError::Usage(format!(
            "start point has {} coordinates; schema needs {}",
            coords.len(),
            schema.dim()
        )));
    }
    let parsed: Result<Vec<BigRational>, CliError> = coords
        .iter()
        .map(|c| {
            BigRational::from_str(c)
                .map_err(|e| CliError::Usage(format!("bad rational {c:?}: {e}")))
        })
        .collect();
    Ok(schema.reduce(&GroupElement::exact(parsed?))?)
}

fn start_point(cfg: &ExperimentConfig, schema: &NilGroupSchema) -> Result<NilmanifoldPoint, CliError> {
    if let Some(coords) = &cfg.params.start {
        return parse_rational_point(schema, coords);
    }
    if let Some(coords) = &cfg.params.start_float {
        if coords.len() != schema.dim() {
            return Err(CliError::Usage(format!(
                "start point has {} coordinates; schema needs {}",
                coords.len(),
                schema.dim()
            )));
        }
        return Ok(schema.reduce(&GroupElement::floats(coords.clone()))?);
    }
    Ok(schema.reduce(&GroupElement::identity(schema))?)
}

fn seed_of(cfg: &ExperimentConfig) -> u64 {
    cfg.params.seed.unwrap_or(0)
}

fn labeling_of(cfg: &ExperimentConfig, atoms: usize) -> Result<Labeling, CliError> {
    let order = cfg.params.group_order.unwrap_or(1);
    let labels = cfg.params.labels.clone().unwrap_or_else(|| vec![0; atoms]);
    let labeling = Labeling { group: FiniteGroup::cyclic(order), labels };
    labeling.validate(atoms)?;
    Ok(labeling)
}

pub fn execute(
    command: &str,
    cfg: &ExperimentConfig,
    writer: &mut ArtifactWriter,
) -> Result<Value, CliError> {
    match command {
        "walk" => cmd_walk(cfg, writer),
        "lyapunov" => cmd_lyapunov(cfg, writer),
        "tau" => cmd_tau(cfg, writer),
        "sigma" => cmd_sigma(cfg, writer),
        "wasserstein" => cmd_wasserstein(cfg, writer),
        "reduce-witness" => cmd_reduce_witness(cfg, writer),
        "detect-subgroups" => cmd_detect_subgroups(cfg, writer),
        "rationalize" => cmd_rationalize(cfg, writer),
        "ld-tail" => cmd_ld_tail(cfg, writer),
        "return-times" => cmd_return_times(cfg, writer),
        "decay-scan" => cmd_decay_scan(cfg, writer),
        "nc-check" => cmd_nc_check(cfg, writer),
        "dichotomy" => cmd_dichotomy(cfg, writer),
        other => Err(CliError::Usage(format!("unknown command {other:?}"))),
    }
}

pub fn scenario_list(writer: &mut ArtifactWriter) -> Result<Value, CliError> {
    let rows: Vec<Value> = SCENARIO_NAMES
        .iter()
        .map(|(name, desc)| {
            let status = match scenario(name, 2) {
                Ok(d) => if d.arithmetic_only { "arithmetic-only" } else { "ready" },
                Err(ScenarioError::OutOfScope(..)) => "out-of-scope",
                Err(_) => "error",
            };
            json!({ "name": name, "description": desc, "status": status })
        })
        .collect();
    let body = json!({ "scenarios": rows });
    writer.json("scenarios", body.clone())?;
    Ok(body)
}

fn cmd_walk(cfg: &ExperimentConfig, writer: &mut ArtifactWriter) -> Result<Value, CliError> {
    let sys = resolve(cfg)?;
    let m = cfg.params.m.unwrap_or(20);
    let trials = cfg.params.trials.unwrap_or(1000);
    let x = start_point(cfg, &sys.schema)?;
    let walk_cfg = if trials == 0 {
        WalkConfig::exact(m)
    } else {
        WalkConfig::monte_carlo(m, trials, seed_of(cfg))
    };
    let nu = run_walk(&sys.schema, &sys.measure, &x, &walk_cfg)?;
    let dim = sys.schema.dim();
    let header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    let rows: Vec<String> = nu
        .weights_f64()
        .map(|(p, w)| {
            let coords: Vec<String> = p.to_f64().iter().map(|c| format!("{c:.12}")).collect();
            format!("{},{w:.12e}", coords.join(","))
        })
        .collect();
    writer.csv("walk", &format!("{},weight", header.join(",")), &rows)?;
    let body = json!({
        "command": "walk",
        "scenario": sys.name,
        "m": m,
        "trials": trials,
        "atoms": nu.atoms.len(),
    });
    writer.json("walk", body.clone())?;
    Ok(body)
}

fn cmd_lyapunov(cfg: &ExperimentConfig, writer: &mut ArtifactWriter) -> Result<Value, CliError> {
    let sys = resolve(cfg)?;
    let mm = MatrixMeasure::from_theta(&sys.schema, &sys.measure);
    let n = cfg.params.m.unwrap_or(200);
    let trials = cfg.params.trials.unwrap_or(64);
    let est = lyapunov_estimate(&mm, n, trials, seed_of(cfg))?;
    let body = json!({
        "command": "lyapunov",
        "scenario": sys.name,
        "n": n,
        "trials": trials,
        "estimate": est,
    });
    writer.json("lyapunov", body.clone())?;
    Ok(body)
}

fn cmd_tau(cfg: &ExperimentConfig, writer: &mut ArtifactWriter) -> Result<Value, CliError> {
    let sys = resolve(cfg)?;
    require_equidistribution(&sys)?;
    let kappa = cfg.params.kappa.unwrap_or(0.05);
    let m_max = cfg.params.m.unwrap_or(12);
    let cap = cfg.params.cap.unwrap_or(200_000);
    let report = tau_z_estimate(&sys.schema, &sys.measure, &sys.z, kappa, m_max, cap)?;
    let rows: Vec<String> = report
        .ms
        .iter()
        .zip(report.counts.iter().zip(&report.support_sizes))
        .map(|(&m, (&c, &s))| format!("{m},{c},{s}"))
        .collect();
    writer.csv("tau", "m,captured_count,support_size", &rows)?;
    let pts: Vec<(f64, f64)> = report
        .ms
        .iter()
        .zip(&report.counts)
        .map(|(&m, &c)| (m as f64, (c as f64).ln()))
        .collect();
    writer.svg_line("tau", &pts)?;
    let body = json!({ "command": "tau", "scenario": sys.name, "report": report });
    writer.json("tau", body.clone())?;
    Ok(body)
}

fn cmd_sigma(cfg: &ExperimentConfig, writer: &mut ArtifactWriter) -> Result<Value, CliError> {
    let sys = resolve(cfg)?;
    require_equidistribution(&sys)?;
    let radius = cfg.params.radius.unwrap_or(6);
    let m_max = cfg.params.m.unwrap_or(12);
    let report = sigma_frequency_truncation(&sys.schema, &sys.measure, &sys.z, radius, m_max)?;
    let rows: Vec<String> = report
        .log_norms
        .iter()
        .enumerate()
        .map(|(i, &v)| format!("{},{v:.12e}", i + 1))
        .collect();
    writer.csv("sigma", "m,log_norm", &rows)?;
    let pts: Vec<(f64, f64)> = report
        .log_norms
        .iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64, v))
        .collect();
    writer.svg_line("sigma", &pts)?;
    let body = json!({ "command": "sigma", "scenario": sys.name, "report": report });
    writer.json("sigma", body.clone())?;
    Ok(body)
}

fn frequency_box(base_dim: usize, half_width: i64) -> Vec<Vec<i64>> {
    let mut out = vec![vec![0i64; base_dim]];
    for _ in 0..base_dim {
        let mut next = Vec::new();
        for v in &out {
            for c in -half_width..=half_width {
                let mut w = v.clone();
                w.remove(0);
                w.push(c);
                next.push(w);
            }
        }
        out = next;
    }
    out.retain(|v| v.iter().any(|&c| c != 0));
    out
}

fn cmd_wasserstein(cfg: &ExperimentConfig, writer: &mut ArtifactWriter) -> Result<Value, CliError> {
    let sys = resolve(cfg)?;
    require_equidistribution(&sys)?;
    let m = cfg.params.m.unwrap_or(15);
    let trials = cfg.params.trials.unwrap_or(5000);
    let alpha = cfg.params.alpha.unwrap_or(1.0);
    let half = cfg.params.frequency_box.unwrap_or(2);
    let x = start_point(cfg, &sys.schema)?;
    let nu = run_walk(
        &sys.schema,
        &sys.measure,
        &x,
        &WalkConfig::monte_carlo(m, trials, seed_of(cfg)),
    )?;
    let mut dictionary = Vec::new();
    for a in frequency_box(sys.schema.base_dim(), half) {
        dictionary.push(TestFunction::torus_char(&sys.schema, a, alpha)?);
    }
    let witness = wasserstein_lower(
        &sys.schema,
        &nu,
        &dictionary,
        cfg.params.resolution.unwrap_or(8),
        1e-9,
    )?;
    let rows: Vec<String> = witness
        .per_function
        .iter()
        .enumerate()
        .map(|(i, v)| format!("{i},{v:.12e}"))
        .collect();
    writer.csv("wasserstein", "dictionary_index,normalized_deviation", &rows)?;
    let body = json!({
        "command": "wasserstein",
        "scenario": sys.name,
        "m": m,
        "trials": trials,
        "lower_bound": witness.value,
        "witness_index": witness.witness,
        "converged": witness.converged,
    });
    writer.json("wasserstein", body.clone())?;
    Ok(body)
}

fn cmd_reduce_witness(cfg: &ExperimentConfig, writer: &mut ArtifactWriter) -> Result<Value, CliError> {
    let sys = resolve(cfg)?;
    require_equidistribution(&sys)?;
    if sys.z.rank() == 0 {
        return Err(CliError::Usage(
            "reduce-witness needs a scenario with a nontrivial central fiber".into(),
        ));
    }
    let m = cfg.params.m.unwrap_or(6);
    let alpha = cfg.params.alpha.unwrap_or(1.0);
    let x = start_point(cfg, &sys.schema)?;
    let mut params = ReductionParams::for_measure(&sys.schema, &sys.measure, alpha);
    params.c_hat = 0.2;
    params.c_pi = 0.6;
    if let Some(res) = cfg.params.resolution {
        params.resolution = res;
    }
    let bump = TestFunction::bump(&sys.schema, x.to_f64(), 0.3, alpha)?;
    let witness =
        TestFunction::fiber_project(&sys.schema, &sys.z, &bump, vec![1; sys.z.rank()], 8)?;
    let t = match cfg.params.t {
        Some(t) => t,
        None => {
            // calibrate the threshold against the measured deviation
            let nu = run_walk(&sys.schema, &sys.measure, &x, &WalkConfig::exact(m))?;
            let dev = deviation(&sys.schema, &witness, &nu, params.resolution, params.tolerance)?;
            if dev <= 0.0 {
                return Err(CliError::Analytic(format!(
                    "witness shows no deviation after {m} steps; nothing to reduce"
                )));
            }
            (0.8 * dev).sqrt().min(0.9)
        }
    };
    let outcome = reduce_witness(&sys.schema, &sys.z, &sys.measure, &x, &witness, m, t, &params)?;
    let body = json!({
        "command": "reduce-witness",
        "scenario": sys.name,
        "m": m,
        "t": t,
        "fiber_frequency": outcome.a0,
        "m_prime": outcome.m_prime,
        "witness_deviation": outcome.x_witness.deviation,
        "witness_measure_hash": outcome.x_witness.measure_hash,
        "factor_deviation": outcome.y_deviation,
        "log": outcome.log,
        "certificate_log": outcome.x_witness.log,
    });
    writer.json("reduce-witness", body.clone())?;
    Ok(body)
}

fn cmd_detect_subgroups(cfg: &ExperimentConfig, writer: &mut ArtifactWriter) -> Result<Value, CliError> {
    let sys = resolve(cfg)?;
    let h = cfg.params.height.unwrap_or(2) as f64;
    let gens: Vec<IMat> = sys
        .measure
        .atoms()
        .iter()
        .map(|(g, _)| g.theta().base_matrix().clone())
        .collect();
    let scan = detect_low_height_subgroups(&gens, h, 1_000_000, 64)?;
    let found: Vec<Value> = scan
        .found
        .iter()
        .map(|d| {
            json!({
                "dual_generators": d.dual_generators,
                "height": d.height,
                "invariance_checked": d.invariance_checked,
            })
        })
        .collect();
    let body = json!({
        "command": "detect-subgroups",
        "scenario": sys.name,
        "height_bound": h,
        "found": found,
        "overflowed_seeds": scan.overflowed_seeds,
    });
    writer.json("detect-subgroups", body.clone())?;
    Ok(body)
}

fn cmd_rationalize(cfg: &ExperimentConfig, writer: &mut ArtifactWriter) -> Result<Value, CliError> {
    let sys = resolve(cfg)?;
    let q_max = cfg.params.q_max.unwrap_or(16);
    let x = start_point(cfg, &sys.schema)?;
    let maps: Vec<_> = sys.measure.atoms().iter().map(|(g, _)| g.clone()).collect();
    let rationalized = rationalize_affine_system(
        &sys.schema,
        &maps,
        &x,
        q_max,
        cfg.params.cap.unwrap_or(100_000),
    )?;
    let base = sys.schema.base_dim();
    let torus_coords: Vec<f64> = x.to_f64().into_iter().take(base).collect();
    let (point, q, dist) = nearest_rational_point(&torus_coords, q_max);
    let body = json!({
        "command": "rationalize",
        "scenario": sys.name,
        "q": rationalized.q,
        "perturbation": rationalized.perturbation,
        "orbit_size": rationalized.orbit_size,
        "torus_projection": {
            "nearest": point.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
            "q": q,
            "distance": dist,
        },
    });
    writer.json("rationalize", body.clone())?;
    Ok(body)
}

fn cmd_ld_tail(cfg: &ExperimentConfig, writer: &mut ArtifactWriter) -> Result<Value, CliError> {
    let sys = resolve(cfg)?;
    let mm = MatrixMeasure::from_theta(&sys.schema, &sys.measure);
    let omega = cfg.params.omega.unwrap_or(0.2);
    let trials = cfg.params.trials.unwrap_or(10_000);
    let seed = seed_of(cfg);
    let ms: Vec<usize> = cfg
        .params
        .schedule
        .clone()
        .unwrap_or_else(|| (2..=cfg.params.m.unwrap_or(40)).step_by(2).collect());
    let lambda = lyapunov_estimate(&mm, 300, 64, seed ^ 0x11)?;
    let report = ld_tail(&mm, lambda.value, omega, &ms, trials, seed)?;
    let rows: Vec<String> = report.rows.iter().map(|&(m, p)| format!("{m},{p:.8e}")).collect();
    writer.csv("ld-tail", "m,exceedance_probability", &rows)?;
    let pts: Vec<(f64, f64)> = report
        .rows
        .iter()
        .filter(|&&(_, p)| p > 0.0)
        .map(|&(m, p)| (m as f64, p.ln()))
        .collect();
    writer.svg_line("ld-tail", &pts)?;
    let body = json!({
        "command": "ld-tail",
        "scenario": sys.name,
        "lambda1": lambda,
        "omega": omega,
        "trials": trials,
        "kappa_hat": report.kappa_hat,
        "fit": report.fit,
    });
    writer.json("ld-tail", body.clone())?;
    Ok(body)
}

fn cmd_return_times(cfg: &ExperimentConfig, writer: &mut ArtifactWriter) -> Result<Value, CliError> {
    let sys = resolve(cfg)?;
    let mm = MatrixMeasure::from_theta(&sys.schema, &sys.measure);
    let labeling = labeling_of(cfg, mm.atoms.len())?;
    let report = return_time_sim(
        &mm,
        &labeling,
        cfg.params.returns.unwrap_or(8),
        cfg.params.trials.unwrap_or(400),
        cfg.params.omega.unwrap_or(1.0),
        seed_of(cfg),
    )?;
    let rows: Vec<String> = report.tail.iter().map(|&(m, p)| format!("{m},{p:.8e}")).collect();
    writer.csv("return-times", "m,off_schedule_probability", &rows)?;
    let body = json!({
        "command": "return-times",
        "scenario": sys.name,
        "t_hat": report.t_hat,
        "t_stderr": report.t_stderr,
        "lambda_mu": report.lambda_mu,
        "lambda_induced": report.lambda_circ,
        "consistent": report.consistent,
        "returns_collected": report.returns_collected,
        "tail_fit": report.tail_fit,
    });
    writer.json("return-times", body.clone())?;
    Ok(body)
}

fn cmd_decay_scan(cfg: &ExperimentConfig, writer: &mut ArtifactWriter) -> Result<Value, CliError> {
    let sys = resolve(cfg)?;
    let mm = MatrixMeasure::from_theta(&sys.schema, &sys.measure);
    let labeling = labeling_of(cfg, mm.atoms.len())?;
    if labeling.group.order != 1 {
        return Err(CliError::Usage(
            "decay-scan currently supports the trivial labeling only; \
             use return-times for labelled statistics"
                .into(),
        ));
    }
    let d = mm.dim;
    let half = cfg.params.frequency_box.unwrap_or(1);
    let mut xis = Vec::new();
    for pos in 0..d * d {
        for k in 1..=half {
            let mut xi = vec![0.0; d * d];
            xi[pos] = k as f64;
            xis.push(xi);
        }
    }
    let mut identity = vec![0.0; d * d];
    for i in 0..d {
        identity[i * d + i] = 1.0;
    }
    let report = decay_scan(
        &mm,
        &labeling,
        &[identity],
        cfg.params.m.unwrap_or(10),
        &xis,
        cfg.params.trials.unwrap_or(5000),
        seed_of(cfg),
    )?;
    let rows: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{},{:.6},{:.8e}", r.coset, r.xi_norm, r.modulus))
        .collect();
    writer.csv("decay-scan", "coset,xi_norm,modulus", &rows)?;
    let body = json!({
        "command": "decay-scan",
        "scenario": sys.name,
        "n": report.n,
        "coset_mass": report.coset_mass,
        "max_modulus": report.rows.iter().map(|r| r.modulus).fold(0.0f64, f64::max),
    });
    writer.json("decay-scan", body.clone())?;
    Ok(body)
}

fn cmd_nc_check(cfg: &ExperimentConfig, writer: &mut ArtifactWriter) -> Result<Value, CliError> {
    let sys = resolve(cfg)?;
    let atoms: Vec<(QMat, BigRational)> = sys
        .measure
        .atoms()
        .iter()
        .map(|(g, w)| (QMat::from_imat(g.theta().base_matrix()), w.clone()))
        .collect();
    let eta = AlgebraMeasure::new(sys.schema.base_dim(), atoms)?;
    let report = nc_check(
        &eta,
        cfg.params.eps.unwrap_or(0.1),
        cfg.params.kappa.unwrap_or(1.0),
        cfg.params.tau.unwrap_or(0.5),
        cfg.params.delta.unwrap_or(0.05),
        cfg.params.hyperplanes.unwrap_or(16),
        seed_of(cfg),
    );
    let rows: Vec<String> = report
        .condition3_rows
        .iter()
        .map(|&(rho, mass, bound)| format!("{rho:.6e},{mass:.8e},{bound:.8e}"))
        .collect();
    writer.csv("nc-check", "rho,max_hyperplane_mass,allowance", &rows)?;
    let body = json!({ "command": "nc-check", "scenario": sys.name, "report": report });
    writer.json("nc-check", body.clone())?;
    Ok(body)
}

fn cmd_dichotomy(cfg: &ExperimentConfig, writer: &mut ArtifactWriter) -> Result<Value, CliError> {
    let sys = resolve(cfg)?;
    require_equidistribution(&sys)?;
    let schedule = cfg.params.schedule.clone().unwrap_or_else(|| vec![5, 10, 15, 20]);
    let trials = cfg.params.trials.unwrap_or(10_000);
    let half = cfg.params.frequency_box.unwrap_or(3);
    let threshold = cfg.params.threshold.unwrap_or(0.05);
    let q_max = cfg.params.q_max.unwrap_or(8);
    let seed = seed_of(cfg);
    let box_freqs = frequency_box(sys.schema.base_dim(), half);

    let mut starts: Vec<(String, NilmanifoldPoint)> = Vec::new();
    if let Some(list) = &cfg.params.starts {
        for coords in list {
            starts.push((coords.join(","), parse_rational_point(&sys.schema, coords)?));
        }
    }
    if let Some(list) = &cfg.params.starts_float {
        for coords in list {
            let label = coords.iter().map(|c| format!("{c:.6}")).collect::<Vec<_>>().join(",");
            starts.push((label, sys.schema.reduce(&GroupElement::floats(coords.clone()))?));
        }
    }
    if starts.is_empty() {
        return Err(CliError::Usage("dichotomy needs starts and/or starts_float".into()));
    }

    let base = sys.schema.base_dim();
    let mut table = Vec::new();
    let mut csv_rows = Vec::new();
    for (label, x) in &starts {
        let mut moduli = Vec::new();
        for &m in &schedule {
            let nu = run_walk(
                &sys.schema,
                &sys.measure,
                x,
                &WalkConfig::monte_carlo(m, trials, seed),
            )?;
            let mut max_mod = 0.0f64;
            for a in &box_freqs {
                max_mod = max_mod.max(nu.torus_fourier(&sys.schema, a)?.norm());
            }
            moduli.push(max_mod);
            csv_rows.push(format!("{label:?},{m},{max_mod:.8e}"));
        }
        let torus_coords: Vec<f64> = x.to_f64().into_iter().take(base).collect();
        let (point, q, dist) = nearest_rational_point(&torus_coords, q_max);
        let final_mod = *moduli.last().expect("schedule nonempty");
        let tag = if final_mod < threshold { "decaying" } else { "obstructed" };
        table.push(json!({
            "start": label,
            "moduli": moduli,
            "tag": tag,
            "rational": {
                "nearest": point.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
                "q": q,
                "distance": dist,
            },
        }));
    }
    writer.csv("dichotomy", "start,m,max_fourier_modulus", &csv_rows)?;
    let body = json!({
        "command": "dichotomy",
        "scenario": sys.name,
        "schedule": schedule,
        "threshold": threshold,
        "table": table,
    });
    writer.json("dichotomy", body.clone())?;
    Ok(body)
}
