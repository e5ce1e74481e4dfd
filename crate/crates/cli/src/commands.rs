use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use benchtrack_core::mc::{derive_seed, estimate_l};
use benchtrack_core::params::{CheckStatus, ModelParams};
use benchtrack_core::policy::evaluate;
use benchtrack_core::simulator::{simulate_benchmark, simulate_controlled, write_benchmark_csv, write_paths_csv, ControlPolicy, SimOptions, Start};
use benchtrack_core::{build_dual_field, DualField, Error, GridSpec, McConfig, Model, Result, SolverMode};
use serde_json::{json, Value};

use crate::{Common, Mode, Outcome, SCHEMA_VERSION};

/// Sub-seed salts, one per command stage.
pub const STAGE_FIELD: u64 = 1;
pub const STAGE_SIMULATE: u64 = 2;
pub const STAGE_VERIFY: u64 = 3;

pub fn load_model(c: &Common) -> Result<Model> {
    let params = match &c.params {
        Some(p) => ModelParams::load(p)?,
        None => ModelParams::reference(),
    };
    Model::new(params)
}

pub fn mc_config(c: &Common, stage: u64) -> Result<McConfig> {
    let cfg = McConfig::new(c.paths, c.dt, c.horizon, derive_seed(c.seed, stage));
    cfg.validate()?;
    Ok(cfg)
}

pub fn grid_spec(c: &Common, model: &Model, cfg: &McConfig) -> Result<GridSpec> {
    match &c.grid {
        Some(s) => GridSpec::parse(s),
        None => GridSpec::default_for(model, cfg),
    }
}

fn require_assumptions(model: &Model) -> Result<()> {
    let report = model.validate(SolverMode::DualSolver);
    let failing: Vec<String> = report.failing().map(|f| format!("({}) {}", f.id, f.condition)).collect();
    if failing.is_empty() {
        Ok(())
    } else {
        Err(Error::AssumptionViolated(failing.join(", ")))
    }
}

/// Loads `--field` or builds a field from the model.
pub fn obtain_field(c: &Common, model: &Model) -> Result<DualField> {
    if let Some(path) = &c.field {
        let field = DualField::load(path)?;
        if field.model().params != model.params && c.params.is_some() {
            return Err(Error::Config("--field was solved for different parameters".into()));
        }
        return Ok(field);
    }
    require_assumptions(model)?;
    let cfg = mc_config(c, STAGE_FIELD)?;
    let grid = grid_spec(c, model, &cfg)?;
    build_dual_field(model, &cfg, &grid)
}

pub fn out_dir(c: &Common) -> Result<PathBuf> {
    let dir = c.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn to_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s
}

/// Prints `v` and also writes it to `--out/name` when an output directory was given.
pub fn emit(c: &Common, name: &str, v: &Value) -> Result<()> {
    let s = to_string(v);
    print!("{s}");
    if c.out.is_some() {
        fs::write(out_dir(c)?.join(name), s)?;
    }
    Ok(())
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<()> {
    fs::write(dir.join(name), contents)?;
    Ok(())
}

pub fn validate(c: &Common, mode: Mode) -> Result<Outcome> {
    let model = load_model(c)?;
    let solver_mode = match mode {
        Mode::Benchmark => SolverMode::BenchmarkOnly,
        Mode::Controlled => SolverMode::DualSolver,
    };
    let report = model.validate(solver_mode);
    for check in &report.checks {
        let tag = match check.status {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "FAIL",
            CheckStatus::NotChecked => "not checked",
        };
        eprintln!("({}) {}: {tag} [{}]", check.id, check.condition, check.detail);
    }
    let pass = report.all_pass();
    emit(
        c,
        "validation.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "params": model.params,
            "derived": model.derived,
            "report": report,
            "pass": pass,
        }),
    )?;
    Ok(if pass { Outcome::Ok } else { Outcome::Failed })
}

pub fn solve(c: &Common) -> Result<Outcome> {
    let model = load_model(c)?;
    let field = obtain_field(c, &model)?;
    let dir = out_dir(c)?;
    let path = dir.join("field.json");
    field.save(&path)?;
    let residuals = field.verify_pde_residuals(&Default::default());
    let boundary = field.boundary_report(model.bench().z0);
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "field": path.file_name().and_then(|s| s.to_str()),
        "grid": field.grid,
        "mc": field.mc,
        "pde_residual": { "max_abs": residuals.max_abs_residual, "tolerance": residuals.tolerance, "pass": residuals.pass },
        "boundary": boundary,
    });
    write_file(&dir, "solve.json", to_string(&summary).as_bytes())?;
    print!("{}", to_string(&summary));
    Ok(Outcome::Ok)
}

pub fn policy(c: &Common, x: f64, h: f64, z: Option<f64>) -> Result<Outcome> {
    let field = obtain_field(c, &load_model(c)?)?;
    let z = z.unwrap_or(field.model().bench().z0);
    let e = evaluate(&field, x, h, z)?;
    emit(
        c,
        "policy.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "x": e.x,
            "h": e.h,
            "z": e.z,
            "y_star": e.y_star,
            "u": e.u_value,
            "theta_star": e.theta_star,
            "c_star": e.c_star,
            "iterations": e.iterations,
            "residual": e.residual,
            "extrapolated": e.extrapolated,
        }),
    )?;
    Ok(Outcome::Ok)
}

pub fn simulate(c: &Common, mode: Mode, wealth: f64, keep: usize) -> Result<Outcome> {
    let model = load_model(c)?;
    let cfg = mc_config(c, STAGE_SIMULATE)?;
    let dir = out_dir(c)?;
    let summary = match mode {
        Mode::Benchmark => {
            let opts = SimOptions { keep_paths: keep, ..Default::default() };
            let run = simulate_benchmark(&model, &cfg, &opts)?;
            let mut csv = Vec::new();
            write_benchmark_csv(&run, &mut csv)?;
            write_file(&dir, "benchmark_paths.csv", &csv)?;
            json!({
                "schema_version": SCHEMA_VERSION,
                "mode": "benchmark",
                "mc": cfg,
                "mean_M_1": run.mean_at(1.0),
                "mean_M_T": run.mean_big_m.last(),
                "m_nondecreasing": run.m_nondecreasing,
                "paths_csv": "benchmark_paths.csv",
            })
        }
        Mode::Controlled => {
            let field = obtain_field(c, &model)?;
            let model = field.model();
            let b = model.bench();
            if wealth.is_nan() || wealth < 0.0 {
                return Err(Error::Domain("--wealth must be nonnegative".into()));
            }
            let start = Start::primal(wealth, b.m0, b.z0, b.b0);
            let opts = SimOptions { keep_paths: keep, coupled_coarse: true, ..Default::default() };
            let run = simulate_controlled(&field, &cfg, start, ControlPolicy::Optimal, &opts)?;
            let mut csv = Vec::new();
            write_paths_csv(&run.paths, model.d(), &mut csv)?;
            write_file(&dir, "controlled_paths.csv", &csv)?;
            let s = &run.summary;
            let injection = benchtrack_core::Estimate { value: s.injection.value + start.initial_injection, ..s.injection };
            let lower = field.closed_form().tilde_w(wealth, b.z0).ok();
            json!({
                "schema_version": SCHEMA_VERSION,
                "mode": "controlled",
                "mc": cfg,
                "start": start,
                "j": s.j,
                "utility": s.utility,
                "injection": injection,
                "injection_lower_bound": lower,
                "complementarity": s.complementarity,
                "discretization_allowance": s.allowance,
                "u": benchtrack_core::policy::primal_value(&field, start.x, start.h, start.z)?,
                "paths_csv": "controlled_paths.csv",
            })
        }
    };
    let s = to_string(&summary);
    write_file(&dir, "summary.json", s.as_bytes())?;
    print!("{s}");
    Ok(Outcome::Ok)
}

pub fn bench(c: &Common) -> Result<Outcome> {
    let model = load_model(c)?;
    let mut timings = serde_json::Map::new();
    let mut time = |name: &str, f: &mut dyn FnMut() -> Result<()>| -> Result<()> {
        let t = Instant::now();
        f()?;
        timings.insert(name.into(), json!(t.elapsed().as_secs_f64()));
        Ok(())
    };
    let l = benchtrack_core::ClosedFormL::new(&model);
    let mut acc = 0.0;
    time("closed_form_1e6_evals", &mut || {
        for i in 0..1_000_000 {
            acc += l.value(i as f64 * 5e-6, 0.8);
        }
        Ok(())
    })?;
    let cfg = mc_config(c, STAGE_FIELD)?;
    time("estimate_l", &mut || estimate_l(&model, &cfg, 0.5, 1.0).map(|_| ()))?;
    time("simulate_benchmark", &mut || simulate_benchmark(&model, &cfg, &SimOptions { keep_paths: 0, ..Default::default() }).map(|_| ()))?;
    let mut field = None;
    time("build_dual_field", &mut || {
        field = Some(obtain_field(c, &model)?);
        Ok(())
    })?;
    let field = field.expect("field built");
    time("policy_1e3_evals", &mut || {
        for i in 0..1000 {
            evaluate(&field, 0.01 + i as f64 * 5e-3, 0.25, model.bench().z0)?;
        }
        Ok(())
    })?;
    std::hint::black_box(acc);
    emit(
        c,
        "bench.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "threads": rayon::current_num_threads(),
            "mc": cfg,
            "seconds": timings,
        }),
    )?;
    Ok(Outcome::Ok)
}
