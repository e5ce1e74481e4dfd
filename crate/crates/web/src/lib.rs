//! Browser bindings: derived constants and `l` curves, benchmark sample paths,
//! first-passage densities and expected local times.
//!
//! Each export takes and returns JSON strings so the page needs no glue beyond
//! the generated module.

use benchtrack_core::densities::BenchmarkKernel;
use benchtrack_core::simulator::{simulate_benchmark, SimOptions};
use benchtrack_core::{ClosedFormL, McConfig, Model, ModelParams, SolverMode};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn model_from(params_json: &str) -> Result<Model, String> {
    let params = if params_json.trim().is_empty() { ModelParams::reference() } else { ModelParams::from_json_str(params_json).map_err(|e| e.to_string())? };
    Model::new(params).map_err(|e| e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("json serializes")
}

#[derive(Serialize)]
struct Constants {
    derived: benchtrack_core::DerivedConstants,
    report: benchtrack_core::ValidationReport,
    r: Vec<f64>,
    /// `l(r, z)` for each requested `z`.
    l: Vec<Vec<f64>>,
    z: Vec<f64>,
}

/// Derived constants, assumption checks and `l(·, z)` on `[0, r_max]` for each `z`.
pub fn constants_and_l(params_json: &str, r_max: f64, n: usize, zs: &[f64]) -> Result<String, String> {
    let model = model_from(params_json)?;
    let l = ClosedFormL::new(&model);
    let n = n.clamp(2, 2000);
    let r: Vec<f64> = (0..n).map(|i| r_max * i as f64 / (n - 1) as f64).collect();
    let curves = zs.iter().map(|&z| r.iter().map(|&ri| l.value(ri, z)).collect()).collect();
    Ok(to_json(&Constants { derived: model.derived, report: model.validate(SolverMode::DualSolver), r, l: curves, z: zs.to_vec() }))
}

#[derive(Serialize)]
struct Paths {
    times: Vec<f64>,
    mean: Vec<f64>,
    m: Vec<Vec<f64>>,
    big_m: Vec<Vec<f64>>,
    m_nondecreasing: bool,
}

/// Benchmark sample paths `m` and `M = m + Z` with the sample mean of `M`.
pub fn benchmark_paths(params_json: &str, n_paths: usize, horizon: f64, dt: f64, seed: u64, shown: usize) -> Result<String, String> {
    let model = model_from(params_json)?;
    let n_paths = n_paths.clamp(2, 20_000);
    let cfg = McConfig::new(n_paths, dt, horizon, seed);
    let opts = SimOptions { record_dt: (horizon / 200.0).max(dt), keep_paths: shown.min(50), coupled_coarse: false };
    let run = simulate_benchmark(&model, &cfg, &opts).map_err(|e| e.to_string())?;
    Ok(to_json(&Paths {
        mean: run.mean_big_m.iter().map(|e| e.value).collect(),
        m: run.paths.iter().map(|p| p.m.clone()).collect(),
        big_m: run.paths.iter().map(|p| p.big_m.clone()).collect(),
        times: run.times,
        m_nondecreasing: run.m_nondecreasing,
    }))
}

#[derive(Serialize)]
struct Curves {
    s: Vec<f64>,
    first_passage: Vec<f64>,
    local_time: Vec<f64>,
}

/// First-passage density `φ2(s, h)` and `E[G_s^h]` on `s ∈ (0, t_max]`.
pub fn density_curves(mu_b: f64, sigma_b: f64, h: f64, t_max: f64, n: usize) -> Result<String, String> {
    let k = BenchmarkKernel::new(mu_b, sigma_b).map_err(|e| e.to_string())?;
    let n = n.clamp(2, 1000);
    let s: Vec<f64> = (1..=n).map(|i| t_max * i as f64 / n as f64).collect();
    let first_passage = s.iter().map(|&si| if h > 0.0 { k.phi2(si, h).unwrap_or(f64::NAN) } else { 0.0 }).collect();
    let local_time = s.iter().map(|&si| k.expected_local_time(si, h).map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    Ok(to_json(&Curves { s, first_passage, local_time }))
}

#[wasm_bindgen(js_name = constantsAndL)]
pub fn constants_and_l_js(params_json: &str, r_max: f64, n: usize, zs: Vec<f64>) -> Result<String, JsValue> {
    constants_and_l(params_json, r_max, n, &zs).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = benchmarkPaths)]
pub fn benchmark_paths_js(params_json: &str, n_paths: usize, horizon: f64, dt: f64, seed: u32, shown: usize) -> Result<String, JsValue> {
    benchmark_paths(params_json, n_paths, horizon, dt, u64::from(seed), shown).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = densityCurves)]
pub fn density_curves_js(mu_b: f64, sigma_b: f64, h: f64, t_max: f64, n: usize) -> Result<String, JsValue> {
    density_curves(mu_b, sigma_b, h, t_max, n).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = referenceParams)]
pub fn reference_params() -> String {
    ModelParams::reference().to_json_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn constants_for_reference() {
        let v: Value = serde_json::from_str(&constants_and_l("", 5.0, 11, &[0.0, 0.8]).unwrap()).unwrap();
        assert!((v["derived"]["alpha"].as_f64().unwrap() - 0.1).abs() < 1e-14);
        assert_eq!(v["l"].as_array().unwrap().len(), 2);
        assert_eq!(v["r"].as_array().unwrap().len(), 11);
    }

    #[test]
    fn bad_params_are_reported() {
        assert!(constants_and_l("{", 5.0, 11, &[0.0]).is_err());
    }

    #[test]
    fn trend_paths_are_monotone() {
        let p = ModelParams::trend_benchmark().to_json_string();
        let v: Value = serde_json::from_str(&benchmark_paths(&p, 200, 1.0, 1e-3, 7, 3).unwrap()).unwrap();
        assert_eq!(v["m_nondecreasing"], true);
        assert_eq!(v["m"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn local_time_grows() {
        let v: Value = serde_json::from_str(&density_curves(0.1, 0.1, 0.05, 5.0, 20).unwrap()).unwrap();
        let g: Vec<f64> = v["local_time"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert!(g.windows(2).all(|w| w[1] >= w[0]));
        assert!(density_curves(0.1, 0.0, 0.05, 5.0, 20).is_err());
    }
}
