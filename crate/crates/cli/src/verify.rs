//! `verify`: residuals, boundary identities and Monte Carlo cross-checks.

use benchtrack_core::mc::{estimate_l_many, estimate_phi, estimate_psi, estimate_xi, McConfig};
use benchtrack_core::policy::{invert_dual, primal_value};
use benchtrack_core::representations::PhiQuadrature;
use benchtrack_core::simulator::{simulate_controlled, ControlPolicy, SimOptions, Start};
use benchtrack_core::{ClosedFormL, DualField, Model, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::commands::{emit, load_model, mc_config, obtain_field, STAGE_VERIFY};
use crate::{Common, Level, Outcome, SCHEMA_VERSION};

#[derive(Serialize)]
struct Check {
    name: &'static str,
    status: &'static str,
    detail: Value,
}

fn check(name: &'static str, pass: bool, detail: Value) -> Check {
    Check { name, status: if pass { "pass" } else { "fail" }, detail }
}

fn skipped(name: &'static str, why: &str) -> Check {
    Check { name, status: "skipped", detail: json!({ "reason": why }) }
}

fn closed_form(model: &Model) -> Check {
    let l = ClosedFormL::new(model);
    let mut worst = 0.0f64;
    let mut worst_bc = 0.0f64;
    for i in 0..20 {
        for j in 0..20 {
            worst = worst.max(l.pde_residual(5.0 * i as f64 / 19.0, 5.0 * j as f64 / 19.0).abs());
        }
        worst_bc = worst_bc.max(l.partials(0.0, 5.0 * i as f64 / 19.0).l_r.abs());
    }
    check("closed_form_residual", worst < 1e-9 && worst_bc < 1e-12, json!({ "max_abs_residual": worst, "max_abs_l_r_at_0": worst_bc }))
}

fn ell_identity(model: &Model) -> Check {
    let dc = &model.derived;
    let b = model.bench();
    let a2 = dc.alpha * dc.alpha;
    let ell = dc.ell;
    let res = 0.5 * a2 * ell * ell + (model.rho() - dc.kappa2 - 0.5 * a2) * ell + b.mu_z - model.rho();
    check("ell_root", res.abs() < 1e-12 && ell > 0.0, json!({ "ell": ell, "residual": res }))
}

fn mc_vs_closed_form(model: &Model, cfg: &McConfig, level: Level) -> Result<Check> {
    let points: &[(f64, f64)] = match level {
        Level::Quick => &[(0.5, 1.0), (1.5, 0.5)],
        Level::Full => &[(0.0, 0.0), (0.5, 1.0), (1.0, 0.3), (1.5, 0.5), (2.0, 1.5), (2.5, 0.8), (0.2, 1.9), (0.8, 0.1), (1.2, 1.2), (3.0, 0.6)],
    };
    let l = ClosedFormL::new(model);
    let est = estimate_l_many(model, cfg, points)?;
    let mut pass = true;
    let rows: Vec<Value> = points
        .iter()
        .zip(&est)
        .map(|(&(r, z), e)| {
            let exact = l.value(r, z);
            let zscore = (e.total.value - exact).abs() / e.total.std_error;
            pass &= zscore <= 3.0;
            json!({ "r": r, "z": z, "mc": e.total, "exact": exact, "z_score": zscore })
        })
        .collect();
    Ok(check("mc_vs_closed_form", pass, json!(rows)))
}

fn factorization(model: &Model, cfg: &McConfig, level: Level) -> Result<Check> {
    let points: &[(f64, f64)] = match level {
        Level::Quick => &[(0.5, 0.0), (1.0, 0.05)],
        Level::Full => &[(0.0, 0.0), (0.5, 0.0), (0.3, 0.02), (1.0, 0.05), (2.0, 0.1)],
    };
    let quad = PhiQuadrature::new(model)?;
    let mut pass = true;
    let mut rows = Vec::new();
    for &(r, h) in points {
        let mc = estimate_phi(model, cfg, r, h)?;
        let q = quad.phi(r, h)?;
        let zscore = (mc.value - q).abs() / mc.std_error;
        pass &= zscore <= 3.0;
        rows.push(json!({ "r": r, "h": h, "mc": mc, "quadrature": q, "z_score": zscore }));
    }
    Ok(check("factorization", pass, json!(rows)))
}

fn homogenization(model: &Model, cfg: &McConfig, level: Level) -> Result<Check> {
    let points: &[(f64, f64)] = match level {
        Level::Quick => &[(0.5, 0.5)],
        Level::Full => &[(0.5, 0.5), (1.0, 1.0)],
    };
    let mut pass = true;
    let mut rows = Vec::new();
    for &(r, h) in points {
        let phi = estimate_phi(model, cfg, r, h)?;
        let xi = estimate_xi(model, cfg, r, h)?;
        let psi = estimate_psi(model, cfg, r, h)?;
        let se = (phi.std_error.powi(2) + xi.std_error.powi(2) + psi.std_error.powi(2)).sqrt();
        let gap = (phi.value + xi.value - psi.value).abs();
        pass &= gap <= 3.0 * se;
        rows.push(json!({ "r": r, "h": h, "phi": phi, "xi": xi, "psi": psi, "combined_std_error": se }));
    }
    Ok(check("homogenization", pass, json!(rows)))
}

fn field_checks(field: &DualField, checks: &mut Vec<Check>) -> Result<()> {
    let res = field.verify_pde_residuals(&Default::default());
    checks.push(check("dual_pde_residual", res.pass, json!({ "max_abs": res.max_abs_residual, "tolerance": res.tolerance })));
    let z0 = field.model().bench().z0;
    let b = field.boundary_report(z0);
    let pass = b.max_abs_u_y_at_beta < 1e-12 && b.max_abs_v_h_edge_error <= 3.0 * b.v_h_edge_std_error + 1e-14;
    checks.push(check("neumann_boundaries", pass, json!(b)));

    let beta = field.beta();
    let r_max = field.grid.r_max;
    let h_max = *field.h_nodes().last().unwrap();
    let mut min_uyy = f64::INFINITY;
    let mut round = 0.0f64;
    for i in 0..10 {
        for j in 0..10 {
            let r = r_max * (i as f64 + 0.5) / 10.0;
            let h = h_max * (j as f64 + 0.5) / 10.0;
            let y = beta * (-r).exp();
            let p = field.u_hat_partials(y, h, z0)?;
            min_uyy = min_uyy.min(p.u_yy);
            let back = invert_dual(field, -p.u_y, h, z0)?;
            round = round.max((back.y_star - y).abs());
        }
    }
    checks.push(check("dual_convexity", min_uyy > 0.0, json!({ "min_u_yy": min_uyy })));
    checks.push(check("dual_round_trip", round < 1e-9, json!({ "max_abs_dy": round })));
    Ok(())
}

fn verification_equality(field: &DualField, cfg: &McConfig) -> Result<Check> {
    let (x, h, z) = (1.0, 0.5, field.model().bench().z0);
    let u = primal_value(field, x, h, z)?;
    let opts = SimOptions { keep_paths: 0, coupled_coarse: true, ..Default::default() };
    let s = simulate_controlled(field, cfg, Start::auxiliary(x, h, z), ControlPolicy::Optimal, &opts)?.summary;
    let tol = 3.0 * (s.j.std_error + s.allowance);
    Ok(check("verification_equality", (s.j.value - u).abs() <= tol, json!({ "x": x, "h": h, "z": z, "u": u, "j": s.j, "allowance": s.allowance })))
}

pub fn run(c: &Common, level: Level) -> Result<Outcome> {
    let model = load_model(c)?;
    let cfg = mc_config(c, STAGE_VERIFY)?;
    let mut checks = vec![closed_form(&model), ell_identity(&model)];
    let full_cfg = match level {
        Level::Quick => cfg,
        Level::Full => McConfig { n_paths: cfg.n_paths.max(100_000), ..cfg },
    };
    checks.push(mc_vs_closed_form(&model, &full_cfg, level)?);
    if model.bench().sigma_b > 0.0 {
        checks.push(factorization(&model, &cfg, level)?);
        checks.push(homogenization(&model, &cfg, level)?);
        let field = obtain_field(c, &model)?;
        field_checks(&field, &mut checks)?;
        if level == Level::Full {
            checks.push(verification_equality(&field, &cfg)?);
        }
    } else {
        for name in ["factorization", "homogenization", "dual_field"] {
            checks.push(skipped(name, "sigma_B = 0"));
        }
    }
    for ch in &checks {
        eprintln!("{}: {}", ch.name, ch.status);
    }
    let pass = checks.iter().all(|ch| ch.status != "fail");
    emit(
        c,
        "verify.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "level": match level { Level::Quick => "quick", Level::Full => "full" },
            "mc": cfg,
            "checks": checks,
            "pass": pass,
        }),
    )?;
    Ok(if pass { Outcome::Ok } else { Outcome::Failed })
}
