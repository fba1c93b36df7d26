//! Experiment execution: deterministic parallel ensembles, per-experiment
//! check evaluation, and artifact assembly.

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::checks::{
    clt_check, ergodic_moments, growth_exponent, local_time_consistency, strong_law_check,
    toy_clt_check, tv_mixing_estimate, uniform_ball_cdf_1d, window_law_check, y_law_check,
    AnalysisError, MuMoments,
};
use crate::analysis::lyapunov::{g_derivatives, lyapunov_asymptotics_check};
use crate::analysis::stats::batch_means;
use crate::engine::rng::RngStream;
use crate::engine::sde::{
    simulate_ball, simulate_cylinder, simulate_sder, RecordMode, ReflectedPath, SimConfig,
};
use crate::engine::step::EngineError;
use crate::engine::toy::{simulate_toy, toy_diagnostics, toy_strong_law_constant};
use crate::engine::window::rescaled_window;
use crate::geometry::WindowMap;
use crate::harness::config::{
    ConfigError, EngineeringAnalysis, ExperimentKind, ModelConfig, RunConfig, SimBlock,
};
use crate::model::{spd_sqrt, CoefficientModel};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("path {path}: {source}")]
    Path { path: usize, source: EngineError },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing artifacts: {0}")]
    MissingArtifacts(String),
}

/// One evaluated acceptance check.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CheckResult {
    pub check: String,
    pub params: String,
    pub estimate: f64,
    pub stderr: f64,
    pub n: usize,
    pub target: f64,
    pub pass: bool,
}

/// A tidy table destined for one CSV artifact.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// CSV bytes; every row carries the config hash as its last column.
    pub fn to_csv(&self, config_hash: &str) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push_str(",config_hash\n");
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push(',');
            out.push_str(config_hash);
            out.push('\n');
        }
        out
    }
}

/// Shortest round-trip decimal representation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Everything one run produced, prior to persistence.
#[derive(Debug)]
pub struct RunOutput {
    pub id: String,
    pub checks: Vec<CheckResult>,
    pub tables: Vec<Table>,
}

impl RunOutput {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn checks_table(&self) -> Table {
        let mut t = Table::new(
            &format!("{}_checks", self.id),
            &["run_id", "check", "params", "estimate", "stderr", "n", "target", "pass"],
        );
        for c in &self.checks {
            t.push(vec![
                self.id.clone(),
                c.check.clone(),
                c.params.clone(),
                fmt_f64(c.estimate),
                fmt_f64(c.stderr),
                c.n.to_string(),
                fmt_f64(c.target),
                c.pass.to_string(),
            ]);
        }
        t
    }

    /// All tables including the generated checks table, in emission order.
    pub fn all_tables(&self) -> Vec<Table> {
        let mut out = vec![self.checks_table()];
        out.extend(self.tables.iter().cloned());
        out
    }
}

/// Runs path tasks 0..n on a dedicated pool; records are returned in path
/// order regardless of worker count.
pub fn ensemble_execute<T, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>, HarnessError>
where
    T: Send,
    F: Fn(usize) -> Result<T, EngineError> + Sync,
{
    assert!(workers >= 1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    let results: Result<Vec<T>, (usize, EngineError)> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| f(i).map_err(|e| (i, e)))
            .collect()
    });
    results.map_err(|(path, source)| HarnessError::Path { path, source })
}

pub fn run_experiment(run: &RunConfig, workers: usize) -> Result<RunOutput, HarnessError> {
    run.validate()?;
    match &run.experiment {
        ExperimentKind::Simulate { model, analysis } => {
            run_simulate(&run.id, model, &run.sim, analysis, workers)
        }
        ExperimentKind::Ergodic { model, analysis } => {
            run_ergodic(&run.id, model, &run.sim, analysis, workers)
        }
        ExperimentKind::Clt { model, analysis } => {
            run_clt(&run.id, model, &run.sim, analysis, workers)
        }
        ExperimentKind::Toy { toy, analysis } => {
            run_toy(&run.id, toy, &run.sim, analysis, workers)
        }
        ExperimentKind::PhaseScan { model, analysis } => {
            run_phase_scan(&run.id, model, &run.sim, analysis, workers)
        }
        ExperimentKind::Window { model, analysis } => {
            run_window(&run.id, model, &run.sim, analysis, workers)
        }
        ExperimentKind::Lyapunov { model, analysis } => run_lyapunov(&run.id, model, analysis),
        ExperimentKind::Validate { model, expect_valid } => {
            run_validate(&run.id, model, *expect_valid)
        }
        ExperimentKind::Mixing { model, analysis } => {
            run_mixing(&run.id, model, &run.sim, analysis, workers)
        }
        ExperimentKind::Engineering { model, analysis } => {
            run_engineering(&run.id, model, &run.sim, analysis, workers)
        }
    }
}

fn check(
    name: &str,
    params: String,
    estimate: f64,
    stderr: f64,
    n: usize,
    target: f64,
    pass: bool,
) -> CheckResult {
    CheckResult {
        check: name.to_string(),
        // Params land in a CSV column; keep them comma-free.
        params: params.replace(", ", ";").replace(',', ";"),
        estimate,
        stderr,
        n,
        target,
        pass,
    }
}

fn terminal_table(id: &str, dim_y: usize, records: &[(Vec<f64>, f64)]) -> Table {
    let mut header = vec!["path".to_string(), "x".to_string()];
    for j in 1..=dim_y {
        header.push(format!("y{j}"));
    }
    header.push("local_time".to_string());
    let mut t = Table {
        name: format!("{id}_terminals"),
        header,
        rows: Vec::new(),
    };
    for (i, (z, l)) in records.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(z.iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(*l));
        t.push(row);
    }
    t
}

fn trace_table(id: &str, path_index: usize, dim_y: usize, path: &ReflectedPath) -> Table {
    let mut header = vec!["t".to_string(), "x".to_string()];
    for j in 1..=dim_y {
        header.push(format!("y{j}"));
    }
    header.push("local_time".to_string());
    let mut t = Table {
        name: format!("{id}_trace_{path_index}"),
        header,
        rows: Vec::new(),
    };
    // Path figure dumps are capped at 10^4 rows.
    let n = path.times.len();
    let keep_every = n.div_ceil(10_000).max(1);
    for i in (0..n).step_by(keep_every) {
        let mut row = vec![fmt_f64(path.times[i])];
        row.extend(path.states[i].iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(path.local_time[i]));
        t.push(row);
    }
    t
}

fn run_simulate(
    id: &str,
    model_cfg: &ModelConfig,
    sim: &SimBlock,
    analysis: &crate::harness::config::SimulateAnalysis,
    workers: usize,
) -> Result<RunOutput, HarnessError> {
    let model = model_cfg.build()?;
    let need_series = analysis.local_time_c2_tol.is_some();
    let n_steps = (sim.t / sim.dt).round() as usize;
    let record = if sim.stride > 0 {
        RecordMode::Stride(sim.stride)
    } else if need_series {
        RecordMode::Stride((n_steps / 2000).max(1))
    } else {
        RecordMode::TerminalOnly
    };
    let trace_paths = analysis.trace_paths;
    struct PathRecord {
        terminal: Vec<f64>,
        local_time: f64,
        lt_rows: Option<Vec<crate::analysis::checks::LocalTimeRow>>,
        trace: Option<ReflectedPath>,
    }
    let model_ref = &model;
    let records: Vec<PathRecord> = ensemble_execute(sim.n_paths, workers, |i| {
        let cfg = SimConfig::new(sim.dt, sim.t, sim.z0.clone(), record);
        let mut rng = RngStream::new(sim.seed, i as u64);
        let path = simulate_sder(model_ref, &cfg, &mut rng)?;
        let lt_rows = if need_series {
            Some(local_time_consistency(&path, model_ref).map_err(|_| {
                EngineError::ReflectionFailed("local-time rows unavailable".into())
            })?)
        } else {
            None
        };
        Ok(PathRecord {
            terminal: path.terminal_state().to_vec(),
            local_time: path.terminal_local_time(),
            trace: (i < trace_paths).then(|| path.clone()),
            lt_rows,
        })
    })?;
    let mut checks = Vec::new();
    let mut tables = Vec::new();
    let terminal_pairs: Vec<(Vec<f64>, f64)> = records
        .iter()
        .map(|r| (r.terminal.clone(), r.local_time))
        .collect();
    tables.push(terminal_table(id, model.domain.dim_y, &terminal_pairs));
    for (i, r) in records.iter().enumerate() {
        if let Some(trace) = &r.trace {
            tables.push(trace_table(id, i, model.domain.dim_y, trace));
        }
    }
    if let Some(tol) = analysis.strong_law_tol {
        let xs: Vec<f64> = records.iter().map(|r| r.terminal[0]).collect();
        let (est, dev) = strong_law_check(&xs, sim.t, &model)?;
        checks.push(check(
            "strong_law_ratio",
            format!("beta={};t={}", model.beta(), sim.t),
            est.value,
            est.stderr,
            est.n,
            model.c1_constant(),
            dev.abs() <= tol,
        ));
    }
    if let Some(tol) = analysis.local_time_c2_tol {
        let n_times = records[0].lt_rows.as_ref().unwrap().len();
        let n = records.len() as f64;
        let mut mean_ratio = vec![0.0; n_times];
        let mut mean_c2 = vec![0.0; n_times];
        let mut times = vec![0.0; n_times];
        for r in &records {
            for (k, row) in r.lt_rows.as_ref().unwrap().iter().enumerate() {
                mean_ratio[k] += row.ratio / n;
                mean_c2[k] += row.c2_estimate / n;
                times[k] = row.t;
            }
        }
        let mut lt_table = Table::new(
            &format!("{id}_local_time"),
            &["t", "mean_balance_ratio", "mean_c2"],
        );
        for k in 0..n_times {
            lt_table.push(vec![
                fmt_f64(times[k]),
                fmt_f64(mean_ratio[k]),
                fmt_f64(mean_c2[k]),
            ]);
        }
        tables.push(lt_table);
        let target = model.c1_constant() / model.reflection.s0;
        let final_c2 = mean_c2[n_times - 1];
        checks.push(check(
            "local_time_c2",
            format!("t={}", times[n_times - 1]),
            final_c2,
            0.0,
            records.len(),
            target,
            (final_c2 - target).abs() <= tol * target,
        ));
        let decreasing = mean_ratio.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
        checks.push(check(
            "local_time_balance_decreasing",
            format!("times={times:?}"),
            mean_ratio[n_times - 1],
            0.0,
            records.len(),
            0.0,
            decreasing,
        ));
    }
    Ok(RunOutput {
        id: id.to_string(),
        checks,
        tables,
    })
}

fn run_ergodic(
    id: &str,
    model_cfg: &ModelConfig,
    sim: &SimBlock,
    analysis: &crate::harness::config::ErgodicAnalysis,
    workers: usize,
) -> Result<RunOutput, HarnessError> {
    let model = model_cfg.build()?;
    let d = model.domain.dim_y;
    let stride = if sim.stride == 0 { 10 } else { sim.stride };
    let z0 = if sim.z0.is_empty() {
        vec![0.0; d]
    } else {
        sim.z0.clone()
    };
    let model_ref = &model;
    let paths: Vec<ReflectedPath> = ensemble_execute(sim.n_paths, workers, |i| {
        let cfg = SimConfig::new(sim.dt, sim.t, z0.clone(), RecordMode::Stride(stride));
        let mut rng = RngStream::new(sim.seed, i as u64);
        simulate_ball(model_ref, &cfg, &mut rng)
    })?;
    let mm = ergodic_moments(&paths, analysis.burn_in)?;
    let mut tables = Vec::new();
    let mut t = Table::new(
        &format!("{id}_moments"),
        &["moment", "j", "k", "estimate", "stderr", "n"],
    );
    for (j, e) in mm.first.iter().enumerate() {
        t.push(vec![
            "first".into(),
            j.to_string(),
            String::new(),
            fmt_f64(e.value),
            fmt_f64(e.stderr),
            e.n.to_string(),
        ]);
    }
    for j in 0..d {
        for k in 0..d {
            let e = &mm.second[j][k];
            t.push(vec![
                "second".into(),
                j.to_string(),
                k.to_string(),
                fmt_f64(e.value),
                fmt_f64(e.stderr),
                e.n.to_string(),
            ]);
        }
    }
    tables.push(t);
    let mut checks = Vec::new();
    // Symmetry of the invariant law: first moments within noise of zero.
    for (j, e) in mm.first.iter().enumerate() {
        checks.push(check(
            "first_moment_zero",
            format!("j={j}"),
            e.value,
            e.stderr,
            e.n,
            0.0,
            e.covers(0.0, 4.0),
        ));
    }
    if let Some(tol) = analysis.second_moment_tol {
        let trace: f64 = (0..d).map(|j| mm.second[j][j].value).sum();
        let stderr: f64 = (0..d)
            .map(|j| mm.second[j][j].stderr.powi(2))
            .sum::<f64>()
            .sqrt();
        let target = d as f64 / (d as f64 + 2.0);
        checks.push(check(
            "second_moment_trace",
            format!("d={d}"),
            trace,
            stderr,
            mm.second[0][0].n,
            target,
            (trace - target).abs() <= tol,
        ));
    }
    Ok(RunOutput {
        id: id.to_string(),
        checks,
        tables,
    })
}

fn run_clt(
    id: &str,
    model_cfg: &ModelConfig,
    sim: &SimBlock,
    analysis: &crate::harness::config::CltAnalysis,
    workers: usize,
) -> Result<RunOutput, HarnessError> {
    let model = model_cfg.build()?;
    let model_ref = &model;
    let records: Vec<(Vec<f64>, f64)> = ensemble_execute(sim.n_paths, workers, |i| {
        let cfg = SimConfig::new(sim.dt, sim.t, sim.z0.clone(), RecordMode::TerminalOnly);
        let mut rng = RngStream::new(sim.seed, i as u64);
        let p = simulate_sder(model_ref, &cfg, &mut rng)?;
        Ok((p.terminal_state().to_vec(), p.terminal_local_time()))
    })?;
    let terminals: Vec<Vec<f64>> = records.iter().map(|r| r.0.clone()).collect();
    let mu = MuMoments::exact_uniform(model.domain.dim_y);
    let x0 = sim.z0.first().copied().unwrap_or(0.0);
    let rep = clt_check(&terminals, sim.t, x0, &model, &mu)?;
    let mut tables = vec![terminal_table(id, model.domain.dim_y, &records)];
    let mut fl = Table::new(&format!("{id}_fluctuations"), &["s", "y_scaled"]);
    for (s, y) in &rep.joint {
        fl.push(vec![fmt_f64(*s), fmt_f64(*y)]);
    }
    tables.push(fl);
    let params = format!("beta={};t={}", model.beta(), sim.t);
    let mut checks = Vec::new();
    checks.push(check(
        "fluctuation_mean_zero",
        params.clone(),
        rep.mean.value,
        rep.mean.stderr,
        rep.mean.n,
        0.0,
        rep.mean.covers(0.0, 3.0),
    ));
    if let Some(tol) = analysis.var_tol {
        checks.push(check(
            "fluctuation_variance",
            params.clone(),
            rep.variance.value,
            rep.variance.stderr,
            rep.variance.n,
            rep.upsilon_target,
            (rep.variance.value - rep.upsilon_target).abs() <= tol * rep.upsilon_target,
        ));
    }
    if let Some(p_min) = analysis.ks_p_min {
        checks.push(check(
            "fluctuation_normality_ks_p",
            params.clone(),
            rep.ks_p,
            0.0,
            terminals.len(),
            p_min,
            rep.ks_p > p_min,
        ));
    }
    if let Some(c_max) = analysis.corr_max {
        checks.push(check(
            "xy_independence_corr",
            params.clone(),
            rep.xy_correlation,
            0.0,
            terminals.len(),
            0.0,
            rep.xy_correlation.abs() < c_max,
        ));
    }
    if let Some(p_min) = analysis.y_law_p_min {
        let (d_stat, p, mean) = y_law_check(&terminals, &model, uniform_ball_cdf_1d);
        checks.push(check(
            "y_law_uniform_ks_p",
            format!("{params};d={d_stat}"),
            p,
            0.0,
            terminals.len(),
            p_min,
            p > p_min,
        ));
        checks.push(check(
            "y_law_mean_zero",
            params.clone(),
            mean.value,
            mean.stderr,
            mean.n,
            0.0,
            mean.covers(0.0, 3.5),
        ));
    }
    Ok(RunOutput {
        id: id.to_string(),
        checks,
        tables,
    })
}

fn run_toy(
    id: &str,
    toy: &crate::harness::config::ToyBlock,
    sim: &SimBlock,
    analysis: &crate::harness::config::ToyAnalysis,
    workers: usize,
) -> Result<RunOutput, HarnessError> {
    let need_series = analysis.stabilization.is_some();
    let n_steps = (sim.t / sim.dt).round() as usize;
    let record = if need_series {
        RecordMode::Stride((n_steps / 4000).max(1))
    } else {
        RecordMode::TerminalOnly
    };
    struct ToyRecord {
        terminal: f64,
        quarter: Option<(f64, f64)>,
        full: Option<(f64, f64)>,
    }
    let (c_prime, beta) = (toy.c_prime, toy.beta);
    let records: Vec<ToyRecord> = ensemble_execute(sim.n_paths, workers, |i| {
        let cfg = SimConfig::new(sim.dt, sim.t, sim.z0.clone(), record);
        let mut rng = RngStream::new(sim.seed, i as u64);
        let path = simulate_toy(c_prime, beta, &cfg, &mut rng)?;
        let (quarter, full) = if need_series {
            let (a, _) = toy_diagnostics(&path, beta);
            let c = toy_strong_law_constant(c_prime, beta);
            let fluct = |idx: usize| {
                let t = path.times[idx].max(sim.dt);
                let x = path.states[idx][0];
                t.powf(beta / (1.0 + beta)) * (x - c * t.powf(1.0 / (1.0 + beta)))
            };
            let n = path.times.len();
            let q = n / 4;
            (Some((a[q], fluct(q))), Some((a[n - 1], fluct(n - 1))))
        } else {
            (None, None)
        };
        Ok(ToyRecord {
            terminal: path.terminal_state()[0],
            quarter,
            full,
        })
    })?;
    let mut checks = Vec::new();
    let mut tables = Vec::new();
    let mut t = Table::new(&format!("{id}_terminals"), &["path", "x"]);
    for (i, r) in records.iter().enumerate() {
        t.push(vec![i.to_string(), fmt_f64(r.terminal)]);
    }
    tables.push(t);
    let params = format!("beta={beta};c_prime={c_prime};t={}", sim.t);
    if let Some(tol) = analysis.var_tol {
        let xs: Vec<f64> = records.iter().map(|r| r.terminal).collect();
        let (est, target) = toy_clt_check(&xs, sim.t, c_prime, beta)?;
        checks.push(check(
            "toy_fluctuation_variance",
            params.clone(),
            est.value,
            est.stderr,
            est.n,
            target,
            (est.value - target).abs() <= tol * target,
        ));
    }
    if let Some(stab) = &analysis.stabilization {
        let mut stable = 0usize;
        let mut st = Table::new(
            &format!("{id}_stabilization"),
            &["path", "a_quarter", "a_full", "fluct_quarter", "fluct_full", "stable"],
        );
        for (i, r) in records.iter().enumerate() {
            let (aq, fq) = r.quarter.unwrap();
            let (af, ff) = r.full.unwrap();
            let rel = |a: f64, b: f64| (b - a).abs() / a.abs().max(1e-12);
            let ok = rel(aq, af) < stab.change_tol && rel(fq, ff) < stab.change_tol;
            if ok {
                stable += 1;
            }
            st.push(vec![
                i.to_string(),
                fmt_f64(aq),
                fmt_f64(af),
                fmt_f64(fq),
                fmt_f64(ff),
                ok.to_string(),
            ]);
        }
        tables.push(st);
        let frac = stable as f64 / records.len() as f64;
        checks.push(check(
            "toy_stabilization_fraction",
            params.clone(),
            frac,
            0.0,
            records.len(),
            stab.min_fraction,
            frac >= stab.min_fraction,
        ));
    }
    Ok(RunOutput {
        id: id.to_string(),
        checks,
        tables,
    })
}

/// Boundary variant of a template model at a different exponent.
fn rebeta_model(template: &ModelConfig, beta: f64) -> Result<CoefficientModel, ConfigError> {
    let mut cfg = template.clone();
    cfg.boundary.beta = beta;
    if matches!(cfg.boundary.kind, crate::geometry::BoundaryKind::Cylinder) && beta != 0.0 {
        cfg.boundary.kind = crate::geometry::BoundaryKind::ShiftedPower;
    }
    cfg.build()
}

fn run_phase_scan(
    id: &str,
    model_cfg: &ModelConfig,
    sim: &SimBlock,
    analysis: &crate::harness::config::PhaseScanAnalysis,
    workers: usize,
) -> Result<RunOutput, HarnessError> {
    let times = &analysis.times;
    assert!(times.len() >= 3, "phase scan needs >= 3 time points");
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    let n_steps = (t_max / sim.dt).round() as usize;
    let stride = (n_steps / 4000).max(1);
    let mut scan = Table::new(&format!("{id}_scan"), &["beta", "t", "variance", "n"]);
    let mut slopes = Table::new(
        &format!("{id}_slopes"),
        &["beta", "slope", "stderr", "regime"],
    );
    let mut checks = Vec::new();
    let mut slope_by_beta = Vec::new();
    for &beta in &analysis.betas {
        let model = rebeta_model(model_cfg, beta)?;
        let model_ref = &model;
        let xs_at_times: Vec<Vec<f64>> = ensemble_execute(sim.n_paths, workers, |i| {
            let cfg = SimConfig::new(sim.dt, t_max, sim.z0.clone(), RecordMode::Stride(stride));
            let mut rng = RngStream::new(sim.seed, i as u64);
            let path = simulate_sder(model_ref, &cfg, &mut rng)?;
            times
                .iter()
                .map(|&t| path.state_at(t).map(|z| z[0]))
                .collect::<Result<Vec<f64>, _>>()
        })?;
        let mut variances = Vec::with_capacity(times.len());
        for (k, &t) in times.iter().enumerate() {
            let col: Vec<f64> = xs_at_times.iter().map(|r| r[k]).collect();
            let var = crate::analysis::stats::variance_iid(&col);
            variances.push(var.value);
            scan.push(vec![
                fmt_f64(beta),
                fmt_f64(t),
                fmt_f64(var.value),
                col.len().to_string(),
            ]);
        }
        let (slope, se) = growth_exponent(times, &variances);
        let regime = if beta < -1.0 / 3.0 { "no CLT" } else { "CLT" };
        slopes.push(vec![
            fmt_f64(beta),
            fmt_f64(slope),
            fmt_f64(se),
            regime.to_string(),
        ]);
        slope_by_beta.push((beta, slope, se));
    }
    for sc in &analysis.slope_checks {
        let found = slope_by_beta
            .iter()
            .find(|(b, _, _)| (b - sc.beta).abs() < 1e-12);
        let (slope, se) = found.map(|(_, s, e)| (*s, *e)).unwrap_or((f64::NAN, 0.0));
        checks.push(check(
            "variance_growth_slope",
            format!("beta={}", sc.beta),
            slope,
            se,
            sim.n_paths,
            sc.target,
            (slope - sc.target).abs() <= sc.tol,
        ));
    }
    if let Some(tol) = analysis.toy_cross_check_tol {
        for &(beta, sder_slope, _) in &slope_by_beta {
            let xs_at_times: Vec<Vec<f64>> = ensemble_execute(sim.n_paths, workers, |i| {
                let cfg = SimConfig::new(
                    sim.dt,
                    t_max,
                    vec![sim.z0.first().copied().unwrap_or(2.0)],
                    RecordMode::Stride(stride),
                );
                let mut rng = RngStream::new(sim.seed ^ 0xabcd, i as u64);
                let path = simulate_toy(1.0, beta, &cfg, &mut rng)?;
                times
                    .iter()
                    .map(|&t| path.state_at(t).map(|z| z[0]))
                    .collect::<Result<Vec<f64>, _>>()
            })?;
            let vars: Vec<f64> = (0..times.len())
                .map(|k| {
                    let col: Vec<f64> = xs_at_times.iter().map(|r| r[k]).collect();
                    crate::analysis::stats::variance_iid(&col).value
                })
                .collect();
            let (toy_slope, _) = growth_exponent(times, &vars);
            checks.push(check(
                "toy_slope_cross_check",
                format!("beta={beta}"),
                toy_slope,
                0.0,
                sim.n_paths,
                sder_slope,
                (toy_slope - sder_slope).abs() <= tol,
            ));
        }
    }
    Ok(RunOutput {
        id: id.to_string(),
        checks,
        tables: vec![scan, slopes],
    })
}

fn run_window(
    id: &str,
    model_cfg: &ModelConfig,
    sim: &SimBlock,
    analysis: &crate::harness::config::WindowAnalysis,
    workers: usize,
) -> Result<RunOutput, HarnessError> {
    let model = model_cfg.build()?;
    let anchors = &analysis.anchors;
    assert!(
        anchors.windows(2).all(|w| w[1] > w[0]),
        "window anchors must be increasing"
    );
    let s_max = analysis.s_max;
    let n_out = analysis.n_out;
    let model_ref = &model;
    // Per path: march through the anchors, opening a densely recorded window
    // leg at each, then continue from the window's endpoint.
    let per_path: Vec<Vec<ReflectedPath>> = ensemble_execute(sim.n_paths, workers, |i| {
        let mut rng = RngStream::new(sim.seed, i as u64);
        let mut z = sim.z0.clone();
        let mut t_cur = 0.0;
        let mut windows = Vec::with_capacity(anchors.len());
        for &anchor in anchors {
            let lead = anchor - t_cur;
            if lead > sim.dt {
                let cfg = SimConfig::new(sim.dt, lead, z.clone(), RecordMode::TerminalOnly);
                let path = simulate_sder(model_ref, &cfg, &mut rng)?;
                z = path.terminal_state().to_vec();
            }
            let map = WindowMap::new(z[0], &model_ref.domain.boundary);
            let horizon = (map.time_scale * s_max).max(2.0 * sim.dt);
            let n_leg = (horizon / sim.dt).round() as usize;
            let leg_stride = (n_leg / (50 * n_out)).max(1);
            let cfg = SimConfig::new(sim.dt, horizon, z.clone(), RecordMode::Stride(leg_stride));
            let leg = simulate_sder(model_ref, &cfg, &mut rng)?;
            let window =
                rescaled_window(&leg, 0.0, &model_ref.domain.boundary, s_max, n_out)?;
            z = leg.terminal_state().to_vec();
            t_cur = anchor + horizon;
            windows.push(window);
        }
        Ok(windows)
    })?;
    let mut checks = Vec::new();
    let mut tables = Vec::new();
    let mut wt = Table::new(
        &format!("{id}_windows"),
        &["anchor", "path", "x_increment", "y_terminal", "local_time"],
    );
    let mut ks_stats = Vec::new();
    let mut oracle_mean: Option<crate::analysis::stats::EstimateWithCI> = None;
    if analysis.oracle_n_paths > 0 {
        let xs: Vec<f64> = ensemble_execute(analysis.oracle_n_paths, workers, |i| {
            let mut z0 = vec![0.0; model_ref.domain.dim()];
            z0[0] = 0.0;
            let cfg = SimConfig::new(sim.dt, s_max, z0, RecordMode::TerminalOnly);
            let mut rng = RngStream::new(analysis.oracle_seed, i as u64);
            let p = simulate_cylinder(model_ref, &cfg, &mut rng)?;
            Ok(p.terminal_state()[0])
        })?;
        oracle_mean = Some(crate::analysis::stats::mean_iid(&xs));
    }
    for (k, &anchor) in anchors.iter().enumerate() {
        let windows: Vec<ReflectedPath> =
            per_path.iter().map(|ws| ws[k].clone()).collect();
        for (i, w) in windows.iter().enumerate() {
            wt.push(vec![
                fmt_f64(anchor),
                i.to_string(),
                fmt_f64(w.terminal_state()[0] - w.states[0][0]),
                fmt_f64(w.terminal_state()[1]),
                fmt_f64(w.terminal_local_time()),
            ]);
        }
        let rep = window_law_check(&windows, anchor, uniform_ball_cdf_1d)?;
        ks_stats.push(rep.ks_stat);
        let params = format!("anchor={anchor};s={s_max}");
        if let Some(p_min) = analysis.ks_p_min {
            checks.push(check(
                "window_y_law_ks_p",
                format!("{params};d={}", rep.ks_stat),
                rep.ks_p,
                0.0,
                windows.len(),
                p_min,
                rep.ks_p > p_min,
            ));
        }
        if let Some(oracle) = &oracle_mean {
            let gap = (rep.x_increment.value - oracle.value).abs();
            let band = 3.0
                * (rep.x_increment.stderr.powi(2) + oracle.stderr.powi(2)).sqrt();
            checks.push(check(
                "window_x_increment_vs_cylinder",
                params,
                rep.x_increment.value,
                rep.x_increment.stderr,
                rep.x_increment.n,
                oracle.value,
                gap <= band,
            ));
        }
    }
    if analysis.ks_nonincreasing && ks_stats.len() >= 2 {
        let ok = ks_stats.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
        checks.push(check(
            "window_ks_nonincreasing",
            format!("anchors={anchors:?}"),
            *ks_stats.last().unwrap(),
            0.0,
            per_path.len(),
            ks_stats[0],
            ok,
        ));
    }
    tables.push(wt);
    Ok(RunOutput {
        id: id.to_string(),
        checks,
        tables,
    })
}

fn run_lyapunov(
    id: &str,
    model_cfg: &ModelConfig,
    analysis: &crate::harness::config::LyapunovAnalysis,
) -> Result<RunOutput, HarnessError> {
    let model = model_cfg.build()?;
    let mut checks = Vec::new();
    // Gradient formulas against central finite differences at probe points.
    let mut max_rel: f64 = 0.0;
    let d = model.domain.dim_y;
    for &x in &[2.0, 10.0, 100.0] {
        let b = model.domain.boundary.value(x);
        for &rho in &[0.3, 0.8] {
            let mut z = vec![x];
            z.push(rho * b);
            for _ in 1..d {
                z.push(0.0);
            }
            let (_, grad, _) = g_derivatives(&model, &z);
            let g_of = |z: &[f64]| g_derivatives(&model, z).0;
            let h = 1e-6 * x.max(1.0);
            for i in 0..=d {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += h;
                zm[i] -= h;
                let fd = (g_of(&zp) - g_of(&zm)) / (2.0 * h);
                let denom = grad[i].abs().max(1e-8);
                max_rel = max_rel.max((grad[i] - fd).abs() / denom);
            }
        }
    }
    checks.push(check(
        "gradient_matches_finite_difference",
        "probes x in {2,10,100}".into(),
        max_rel,
        0.0,
        6 * (d + 1),
        0.0,
        max_rel <= analysis.grad_rel_tol,
    ));
    let rep = lyapunov_asymptotics_check(
        &model,
        analysis.x_lo,
        analysis.x_hi,
        analysis.n_x,
        analysis.n_dirs,
    );
    let mut t = Table::new(
        &format!("{id}_decay"),
        &["x", "drift_dev", "lambda_dev", "qv_dev"],
    );
    for row in &rep.rows {
        t.push(vec![
            fmt_f64(row.x),
            fmt_f64(row.drift_dev),
            fmt_f64(row.lambda_dev),
            fmt_f64(row.qv_dev),
        ]);
    }
    let params = format!("x in [{}, {}]", analysis.x_lo, analysis.x_hi);
    if analysis.expect_exact {
        let max_dev = rep
            .rows
            .iter()
            .map(|r| r.drift_dev.max(r.lambda_dev).max(r.qv_dev))
            .fold(0.0f64, f64::max);
        checks.push(check(
            "deviations_identically_zero",
            params.clone(),
            max_dev,
            0.0,
            rep.rows.len(),
            0.0,
            max_dev < 1e-9,
        ));
    } else {
        for (name, col, pass) in [
            (
                "drift_deviation_decays",
                rep.rows.last().unwrap().drift_dev,
                rep.drift_decays,
            ),
            (
                "lambda_deviation_decays",
                rep.rows.last().unwrap().lambda_dev,
                rep.lambda_decays,
            ),
            (
                "qv_deviation_decays",
                rep.rows.last().unwrap().qv_dev,
                rep.qv_decays,
            ),
        ] {
            checks.push(check(name, params.clone(), col, 0.0, rep.rows.len(), 0.0, pass));
        }
        // Monotone decrease across the whole grid, with a hair of slack for
        // the direction sampling.
        let monotone = |f: fn(&crate::analysis::lyapunov::DecayRow) -> f64| {
            rep.rows
                .windows(2)
                .all(|w| f(&w[1]) <= f(&w[0]) * (1.0 + 1e-6) + 1e-12)
        };
        checks.push(check(
            "deviations_monotone",
            params,
            0.0,
            0.0,
            rep.rows.len(),
            0.0,
            monotone(|r| r.drift_dev) && monotone(|r| r.lambda_dev) && monotone(|r| r.qv_dev),
        ));
    }
    Ok(RunOutput {
        id: id.to_string(),
        checks,
        tables: vec![t],
    })
}

fn run_validate(
    id: &str,
    model_cfg: &ModelConfig,
    expect_valid: bool,
) -> Result<RunOutput, HarnessError> {
    let model = model_cfg.build()?;
    let report = model.validate_assumptions(&crate::model::GridSpec::default());
    let mut t = Table::new(&format!("{id}_validation"), &["name", "passed", "detail"]);
    for c in &report.checks {
        t.push(vec![
            c.name.clone(),
            c.passed.to_string(),
            c.detail.replace(',', ";"),
        ]);
    }
    let all = report.all_pass();
    let checks = vec![check(
        "assumptions_valid",
        format!("expect_valid={expect_valid}"),
        if all { 1.0 } else { 0.0 },
        0.0,
        report.checks.len(),
        if expect_valid { 1.0 } else { 0.0 },
        all == expect_valid,
    )];
    Ok(RunOutput {
        id: id.to_string(),
        checks,
        tables: vec![t],
    })
}

fn run_mixing(
    id: &str,
    model_cfg: &ModelConfig,
    sim: &SimBlock,
    analysis: &crate::harness::config::MixingAnalysis,
    workers: usize,
) -> Result<RunOutput, HarnessError> {
    let model = model_cfg.build()?;
    assert_eq!(
        model.domain.dim_y, 1,
        "mixing histograms are implemented for d = 1"
    );
    let grid = &analysis.t_grid;
    assert!(grid.windows(2).all(|w| w[1] > w[0]));
    let t_max = *grid.last().unwrap();
    let dt_min = grid
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let stride = ((dt_min / sim.dt).round() as usize).max(1);
    let model_ref = &model;
    // Stream i drives the +1 start, stream n_paths + i the -1 start.
    let run_side = |start: f64, offset: usize| -> Result<Vec<Vec<f64>>, HarnessError> {
        let samples: Vec<Vec<f64>> = ensemble_execute(sim.n_paths, workers, |i| {
            let cfg = SimConfig::new(
                sim.dt,
                t_max.max(2.0 * sim.dt),
                vec![start],
                RecordMode::Stride(stride),
            );
            let mut rng = RngStream::new(sim.seed, (offset + i) as u64);
            let path = simulate_ball(model_ref, &cfg, &mut rng)?;
            grid.iter()
                .map(|&t| path.state_at(t).map(|z| z[0]))
                .collect::<Result<Vec<f64>, _>>()
        })?;
        // Transpose to per-time columns.
        Ok((0..grid.len())
            .map(|k| samples.iter().map(|r| r[k]).collect())
            .collect())
    };
    let a = run_side(1.0, 0)?;
    let b = run_side(-1.0, sim.n_paths)?;
    let rep = tv_mixing_estimate(&a, &b, grid, analysis.n_bins)?;
    let mut t = Table::new(&format!("{id}_tv"), &["t", "tv"]);
    for (ti, tv) in rep.times.iter().zip(&rep.tv) {
        t.push(vec![fmt_f64(*ti), fmt_f64(*tv)]);
    }
    let mut checks = Vec::new();
    let in_range = rep.tv.iter().all(|&v| (0.0..=1.0).contains(&v));
    checks.push(check(
        "tv_in_unit_interval",
        String::new(),
        *rep.tv.last().unwrap(),
        0.0,
        sim.n_paths,
        0.0,
        in_range,
    ));
    let band =
        analysis.noise_band_k * 0.5 * (analysis.n_bins as f64 / sim.n_paths as f64).sqrt();
    let nonincreasing = rep.tv.windows(2).all(|w| w[1] <= w[0] + band);
    checks.push(check(
        "tv_nonincreasing_within_band",
        format!("band={band}"),
        0.0,
        0.0,
        sim.n_paths,
        0.0,
        nonincreasing,
    ));
    if let Some(max_final) = analysis.tv_final_max {
        checks.push(check(
            "tv_final",
            format!("t={t_max}"),
            *rep.tv.last().unwrap(),
            0.0,
            sim.n_paths,
            max_final,
            *rep.tv.last().unwrap() < max_final,
        ));
    }
    checks.push(check(
        "lambda_hat_contracts",
        String::new(),
        rep.lambda_hat,
        rep.slope_stderr,
        sim.n_paths,
        1.0,
        rep.lambda_hat < 1.0 && rep.lambda_hat > 0.0,
    ));
    Ok(RunOutput {
        id: id.to_string(),
        checks,
        tables: vec![t],
    })
}

fn run_engineering(
    id: &str,
    model_cfg: &ModelConfig,
    sim: &SimBlock,
    analysis: &EngineeringAnalysis,
    _workers: usize,
) -> Result<RunOutput, HarnessError> {
    let model = model_cfg.build()?;
    let mut checks = Vec::new();
    let model_ref = &model;
    // Worker-count invariance: the terminal table must be byte-identical.
    let run_table = |w: usize| -> Result<String, HarnessError> {
        let records: Vec<(Vec<f64>, f64)> = ensemble_execute(sim.n_paths, w, |i| {
            let cfg =
                SimConfig::new(sim.dt, sim.t, sim.z0.clone(), RecordMode::TerminalOnly);
            let mut rng = RngStream::new(sim.seed, i as u64);
            let p = simulate_sder(model_ref, &cfg, &mut rng)?;
            Ok((p.terminal_state().to_vec(), p.terminal_local_time()))
        })?;
        Ok(terminal_table(id, model.domain.dim_y, &records).to_csv("x"))
    };
    let reference = run_table(analysis.workers_compare[0])?;
    let mut identical = true;
    for &w in &analysis.workers_compare[1..] {
        if run_table(w)? != reference {
            identical = false;
        }
    }
    checks.push(check(
        "worker_count_determinism",
        format!("workers={:?}", analysis.workers_compare),
        if identical { 1.0 } else { 0.0 },
        0.0,
        sim.n_paths,
        1.0,
        identical,
    ));
    // Matrix square root residual on pseudo-random SPD matrices.
    let mut max_residual: f64 = 0.0;
    let mut state = 0x1234_5678_9abc_def0u64;
    let mut next = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64) / (1u64 << 53) as f64 - 0.5
    };
    for dim in 2..=5 {
        let a = DMatrix::from_fn(dim, dim, |_, _| next());
        let sigma = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.1;
        let (root, _) = spd_sqrt(&sigma).expect("spd by construction");
        let residual = (&root * &root - &sigma).abs().max();
        max_residual = max_residual.max(residual);
    }
    checks.push(check(
        "sqrt_residual",
        "dims 2..=5".into(),
        max_residual,
        0.0,
        4,
        analysis.sqrt_residual_max,
        max_residual < analysis.sqrt_residual_max,
    ));
    // Step-size consistency: the ergodic second-moment discrepancy shrinks
    // (within noise) as dt halves.
    let d = model.domain.dim_y;
    let target = d as f64 / (d as f64 + 2.0);
    let mut discrepancies = Vec::new();
    let mut stderrs = Vec::new();
    for (k, &dt) in analysis.dts.iter().enumerate() {
        let stride = (0.01 / dt).round().max(1.0) as usize;
        let cfg = SimConfig::new(dt, sim.t, vec![0.0; d], RecordMode::Stride(stride));
        let mut rng = RngStream::new(sim.seed ^ (k as u64 + 1), 0);
        let path = simulate_ball(&model, &cfg, &mut rng)
            .map_err(|e| HarnessError::Path { path: 0, source: e })?;
        let series: Vec<f64> = path
            .states
            .iter()
            .map(|y| y.iter().map(|v| v * v).sum::<f64>())
            .collect();
        let est = batch_means(&series, 0.1, 50);
        discrepancies.push((est.value - target).abs());
        stderrs.push(est.stderr);
    }
    let mut shrinks = true;
    for k in 1..discrepancies.len() {
        let band = 2.0 * (stderrs[k] + stderrs[k - 1]);
        if discrepancies[k] > discrepancies[k - 1] + band {
            shrinks = false;
        }
    }
    checks.push(check(
        "step_size_consistency",
        format!("dts={:?}", analysis.dts),
        *discrepancies.last().unwrap(),
        *stderrs.last().unwrap(),
        analysis.dts.len(),
        0.0,
        shrinks,
    ));
    // Batch-means coverage on synthetic IID Gaussian input.
    let mut covered = 0usize;
    for rep in 0..analysis.coverage_reps {
        let mut rng = RngStream::new(sim.seed ^ 0x5eed, rep as u64);
        let series: Vec<f64> = (0..5000).map(|_| rng.standard_normal()).collect();
        let est = batch_means(&series, 0.0, 50);
        if (est.value - 0.0).abs() <= 1.96 * est.stderr {
            covered += 1;
        }
    }
    let coverage = covered as f64 / analysis.coverage_reps as f64;
    checks.push(check(
        "batch_means_coverage",
        format!("reps={}", analysis.coverage_reps),
        coverage,
        0.0,
        analysis.coverage_reps,
        0.95,
        coverage >= analysis.coverage_min,
    ));
    Ok(RunOutput {
        id: id.to_string(),
        checks,
        tables: Vec::new(),
    })
}
