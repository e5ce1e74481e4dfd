//! Dual value `v(r,h,z) = l(r,z) + ψ(r,h)` on a tabulated `(r,h)` grid.

use serde::{Deserialize, Serialize};

use crate::closed_form::ClosedFormL;
use crate::densities::BenchmarkKernel;
use crate::error::{Error, Result};
use crate::mc::{local_time_tables, McConfig, TermDriver};
use crate::params::{Model, ModelParams};

pub const FIELD_SCHEMA_VERSION: u32 = 1;

/// Rectangular `(r,h)` grid; `h` nodes are `h_max (j/(nh−1))^h_grading`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub r_max: f64,
    pub h_max: f64,
    pub nr: usize,
    pub nh: usize,
    #[serde(default = "one")]
    pub h_grading: f64,
}

fn one() -> f64 {
    1.0
}

impl GridSpec {
    pub fn new(r_max: f64, h_max: f64, nr: usize, nh: usize) -> Self {
        GridSpec { r_max, h_max, nr, nh, h_grading: 1.0 }
    }

    pub fn with_h_grading(mut self, g: f64) -> Self {
        self.h_grading = g;
        self
    }

    /// Parses `rmax,hmax,nr,nh`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::Grid(format!("expected rmax,hmax,nr,nh, got {s:?}")));
        }
        let f = |x: &str| x.parse::<f64>().map_err(|_| Error::Grid(format!("bad number {x:?}")));
        let n = |x: &str| x.parse::<usize>().map_err(|_| Error::Grid(format!("bad count {x:?}")));
        let g = GridSpec::new(f(parts[0])?, f(parts[1])?, n(parts[2])?, n(parts[3])?);
        g.validate()?;
        Ok(g)
    }

    /// `r_max` with `e^{−ℓ r_max} < 1e−6`, `h_max` with `E[G_T^{h_max}] < 1e−8`.
    pub fn default_for(model: &Model, cfg: &McConfig) -> Result<Self> {
        let r_max = (1e6f64.ln() / model.derived.ell).ceil();
        let b = model.bench();
        let kernel = BenchmarkKernel::new(b.mu_b, b.sigma_b)?;
        let mut h_max = 0.5;
        while kernel.expected_local_time(cfg.horizon, h_max)? >= 1e-8 {
            h_max *= 1.25;
            if h_max > 1e4 {
                return Err(Error::Grid("could not size h_max".into()));
            }
        }
        Ok(GridSpec { r_max, h_max, nr: 33, nh: 33, h_grading: 2.0 })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_max > 0.0 && self.r_max.is_finite() && self.h_max > 0.0 && self.h_max.is_finite()) {
            return Err(Error::Grid("r_max and h_max must be positive and finite".into()));
        }
        if self.nr < 2 || self.nh < 2 {
            return Err(Error::Grid("need at least 2 nodes per axis".into()));
        }
        if !(self.h_grading >= 1.0 && self.h_grading <= 4.0) {
            return Err(Error::Grid("h_grading must lie in [1, 4]".into()));
        }
        Ok(())
    }

    pub fn r_nodes(&self) -> Vec<f64> {
        (0..self.nr).map(|i| self.r_max * i as f64 / (self.nr - 1) as f64).collect()
    }

    pub fn h_nodes(&self) -> Vec<f64> {
        (0..self.nh).map(|j| self.h_max * (j as f64 / (self.nh - 1) as f64).powf(self.h_grading)).collect()
    }
}

/// How each ψ-derivative table is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeSource {
    Representation,
    Interpolant,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivativeSources {
    pub psi_r: DerivativeSource,
    pub psi_h: DerivativeSource,
    pub psi_rh: DerivativeSource,
    pub psi_rr: DerivativeSource,
    pub psi_hh: DerivativeSource,
}

const SOURCES: DerivativeSources = DerivativeSources {
    psi_r: DerivativeSource::Representation,
    psi_h: DerivativeSource::Representation,
    psi_rh: DerivativeSource::Representation,
    psi_rr: DerivativeSource::Interpolant,
    psi_hh: DerivativeSource::FiniteDifference,
};

/// Nodal values with standard errors, index `i * nh + j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub value: Vec<f64>,
    pub std_error: Vec<f64>,
}

/// Interpolated ψ and its partials at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiPoint {
    pub psi: f64,
    pub psi_r: f64,
    pub psi_h: f64,
    pub psi_rr: f64,
    pub psi_rh: f64,
    pub psi_hh: f64,
    /// Largest standard error among the four surrounding nodes, per table.
    pub se: [f64; 4],
    /// Query was outside the grid and clamped to its boundary.
    pub extrapolated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VPartials {
    pub v: f64,
    pub v_r: f64,
    pub v_h: f64,
    pub v_z: f64,
    pub v_rr: f64,
    pub v_rh: f64,
    pub v_rz: f64,
    pub v_hh: f64,
    pub v_zz: f64,
    pub v_zh: f64,
    pub extrapolated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UHatPartials {
    pub u: f64,
    pub u_y: f64,
    pub u_yy: f64,
    pub u_yh: f64,
    pub u_yz: f64,
    pub u_h: f64,
    pub u_z: f64,
    pub extrapolated: bool,
}

/// Evaluator for `v` and `û` with ψ from Monte Carlo tables.
#[derive(Debug, Clone)]
pub struct DualField {
    model: Model,
    l: ClosedFormL,
    pub grid: GridSpec,
    pub mc: McConfig,
    r_nodes: Vec<f64>,
    h_nodes: Vec<f64>,
    psi: Table,
    psi_r: Table,
    psi_h: Table,
    psi_rh: Table,
    psi_hh: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FieldFile {
    schema_version: u32,
    params: ModelParams,
    mc: McConfig,
    grid: GridSpec,
    sources: DerivativeSources,
    r_nodes: Vec<f64>,
    h_nodes: Vec<f64>,
    psi: Table,
    psi_r: Table,
    psi_h: Table,
    psi_rh: Table,
}

/// Estimates the ψ tables on `grid` with common random numbers across nodes.
pub fn build_dual_field(model: &Model, cfg: &McConfig, grid: &GridSpec) -> Result<DualField> {
    grid.validate()?;
    if !(model.bench().sigma_b > 0.0) {
        return Err(Error::AssumptionViolated("the dual field needs sigma_B > 0".into()));
    }
    let r_nodes = grid.r_nodes();
    let h_nodes = grid.h_nodes();
    let t = local_time_tables(model, cfg, &r_nodes, &h_nodes, TermDriver::Correlated)?;
    let table = |e: &[crate::mc::Estimate]| Table { value: e.iter().map(|x| x.value).collect(), std_error: e.iter().map(|x| x.std_error).collect() };
    DualField::assemble(model.clone(), *cfg, *grid, r_nodes, h_nodes, table(&t.value), table(&t.d_r), table(&t.d_h), table(&t.d_rh))
}

/// Hermite basis on `[0,1]`: value bases `[h00, h01]`, slope bases `[h10, h11]` and their derivatives.
#[inline]
fn basis(t: f64, order: usize) -> ([f64; 2], [f64; 2]) {
    let (t2, t3) = (t * t, t * t * t);
    match order {
        0 => ([2.0 * t3 - 3.0 * t2 + 1.0, -2.0 * t3 + 3.0 * t2], [t3 - 2.0 * t2 + t, t3 - t2]),
        1 => ([6.0 * t2 - 6.0 * t, -6.0 * t2 + 6.0 * t], [3.0 * t2 - 4.0 * t + 1.0, 3.0 * t2 - 2.0 * t]),
        _ => ([12.0 * t - 6.0, -12.0 * t + 6.0], [6.0 * t - 4.0, 6.0 * t - 2.0]),
    }
}

struct Loc {
    i: usize,
    j: usize,
    tr: f64,
    th: f64,
    dr: f64,
    dh: f64,
    out_r: bool,
    out_h: bool,
}

fn cell(nodes: &[f64], x: f64) -> (usize, f64, bool) {
    let last = nodes.len() - 1;
    if x >= nodes[last] {
        return (last - 1, 1.0, x > nodes[last]);
    }
    let x = x.max(0.0);
    let i = nodes.partition_point(|&v| v <= x).saturating_sub(1).min(last - 1);
    (i, (x - nodes[i]) / (nodes[i + 1] - nodes[i]), false)
}

/// Nonuniform three-point derivative of `f` along `x`.
fn nodal_derivative(x: &[f64], f: impl Fn(usize) -> f64, k: usize) -> f64 {
    let last = x.len() - 1;
    if k == 0 {
        (f(1) - f(0)) / (x[1] - x[0])
    } else if k == last {
        (f(last) - f(last - 1)) / (x[last] - x[last - 1])
    } else {
        let (h0, h1) = (x[k] - x[k - 1], x[k + 1] - x[k]);
        let (d0, d1) = ((f(k) - f(k - 1)) / h0, (f(k + 1) - f(k)) / h1);
        (h1 * d0 + h0 * d1) / (h0 + h1)
    }
}

impl DualField {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        model: Model,
        mc: McConfig,
        grid: GridSpec,
        r_nodes: Vec<f64>,
        h_nodes: Vec<f64>,
        psi: Table,
        psi_r: Table,
        psi_h: Table,
        mut psi_rh: Table,
    ) -> Result<Self> {
        let (nr, nh) = (r_nodes.len(), h_nodes.len());
        let cells = nr * nh;
        for t in [&psi, &psi_r, &psi_h, &psi_rh] {
            if t.value.len() != cells || t.std_error.len() != cells || t.value.iter().any(|v| !v.is_finite()) {
                return Err(Error::Grid("table shape does not match the grid".into()));
            }
        }
        if r_nodes[0] != 0.0 || h_nodes[0] != 0.0 {
            return Err(Error::Grid("grids must start at zero".into()));
        }
        // Keeps v_r(0,h) = 0 along the whole r = 0 edge, corner included.
        for j in 0..nh {
            psi_rh.value[j] = 0.0;
        }
        let mut psi_hh = vec![0.0; cells];
        for i in 0..nr {
            for j in 0..nh {
                psi_hh[i * nh + j] = nodal_derivative(&h_nodes, |b| psi_h.value[i * nh + b], j);
            }
        }
        let l = ClosedFormL::new(&model);
        Ok(DualField { model, l, grid, mc, r_nodes, h_nodes, psi, psi_r, psi_h, psi_rh, psi_hh })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn closed_form(&self) -> &ClosedFormL {
        &self.l
    }

    pub fn beta(&self) -> f64 {
        self.model.beta()
    }

    pub fn r_nodes(&self) -> &[f64] {
        &self.r_nodes
    }

    pub fn h_nodes(&self) -> &[f64] {
        &self.h_nodes
    }

    pub fn sources(&self) -> DerivativeSources {
        SOURCES
    }

    /// Nodal tables `[ψ, ψ_r, ψ_h, ψ_rh]`.
    pub fn tables(&self) -> [&Table; 4] {
        [&self.psi, &self.psi_r, &self.psi_h, &self.psi_rh]
    }

    pub fn covers(&self, r: f64, h: f64) -> bool {
        r <= self.grid.r_max && h <= *self.h_nodes.last().unwrap()
    }

    fn locate(&self, r: f64, h: f64) -> Loc {
        let (i, tr, out_r) = cell(&self.r_nodes, r);
        let (j, th, out_h) = cell(&self.h_nodes, h);
        Loc { i, j, tr, th, dr: self.r_nodes[i + 1] - self.r_nodes[i], dh: self.h_nodes[j + 1] - self.h_nodes[j], out_r, out_h }
    }

    #[inline]
    fn eval(&self, c: &Loc, or: usize, oh: usize) -> f64 {
        let nh = self.h_nodes.len();
        let (ar, sr) = basis(c.tr, or);
        let (ah, sh) = basis(c.th, oh);
        let mut acc = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let k = (c.i + a) * nh + c.j + b;
                acc += self.psi.value[k] * ar[a] * ah[b]
                    + self.psi_r.value[k] * c.dr * sr[a] * ah[b]
                    + self.psi_h.value[k] * c.dh * ar[a] * sh[b]
                    + self.psi_rh.value[k] * c.dr * c.dh * sr[a] * sh[b];
            }
        }
        acc / (c.dr.powi(or as i32) * c.dh.powi(oh as i32))
    }

    pub fn psi_at(&self, r: f64, h: f64) -> PsiPoint {
        let nh = self.h_nodes.len();
        let c = self.locate(r, h);
        let idx = |a: usize, b: usize| (c.i + a) * nh + c.j + b;
        let hh = {
            let k = |a: usize, b: usize| self.psi_hh[idx(a, b)];
            let (tr, th) = (c.tr, c.th);
            (1.0 - tr) * ((1.0 - th) * k(0, 0) + th * k(0, 1)) + tr * ((1.0 - th) * k(1, 0) + th * k(1, 1))
        };
        let mut se = [0.0; 4];
        for (s, t) in se.iter_mut().zip([&self.psi, &self.psi_r, &self.psi_h, &self.psi_rh]) {
            *s = (0..2).flat_map(|a| (0..2).map(move |b| (a, b))).map(|(a, b)| t.std_error[idx(a, b)]).fold(0.0, f64::max);
        }
        let zr = if c.out_r { 0.0 } else { 1.0 };
        let zh = if c.out_h { 0.0 } else { 1.0 };
        PsiPoint {
            psi: self.eval(&c, 0, 0),
            psi_r: zr * self.eval(&c, 1, 0),
            psi_h: zh * self.eval(&c, 0, 1),
            psi_rr: zr * self.eval(&c, 2, 0),
            psi_rh: zr * zh * self.eval(&c, 1, 1),
            psi_hh: zh * hh,
            se,
            extrapolated: c.out_r || c.out_h,
        }
    }

    pub fn v(&self, r: f64, h: f64, z: f64) -> f64 {
        self.l.value(r, z) + self.psi_at(r, h).psi
    }

    pub fn v_partials(&self, r: f64, h: f64, z: f64) -> VPartials {
        let l = self.l.partials(r, z);
        let p = self.psi_at(r, h);
        VPartials {
            v: self.l.value(r, z) + p.psi,
            v_r: l.l_r + p.psi_r,
            v_h: p.psi_h,
            v_z: l.l_z,
            v_rr: l.l_rr + p.psi_rr,
            v_rh: p.psi_rh,
            v_rz: l.l_rz,
            v_hh: p.psi_hh,
            v_zz: 0.0,
            v_zh: 0.0,
            extrapolated: p.extrapolated,
        }
    }

    /// `v_r(r,h,z) e^{r}`, which equals `−β û_y` at `y = βe^{−r}`.
    pub fn marginal(&self, r: f64, h: f64, z: f64) -> (f64, f64) {
        let l = self.l.partials(r, z);
        let c = self.locate(r, h);
        let (pr, prr) = if c.out_r { (0.0, 0.0) } else { (self.eval(&c, 1, 0), self.eval(&c, 2, 0)) };
        let e = r.exp();
        ((l.l_r + pr) * e, (l.l_rr + prr + l.l_r + pr) * e)
    }

    /// `(v_r, v_rr, v_rh, v_rz)`, the partials the feedback controls need.
    pub(crate) fn control_partials(&self, r: f64, h: f64, z: f64) -> (f64, f64, f64, f64) {
        let l = self.l.partials(r, z);
        let c = self.locate(r, h);
        if c.out_r {
            return (l.l_r, l.l_rr, 0.0, l.l_rz);
        }
        let rh = if c.out_h { 0.0 } else { self.eval(&c, 1, 1) };
        (l.l_r + self.eval(&c, 1, 0), l.l_rr + self.eval(&c, 2, 0), rh, l.l_rz)
    }

    fn r_of_y(&self, y: f64) -> Result<f64> {
        let beta = self.beta();
        if !(y > 0.0 && y <= beta) {
            return Err(Error::Domain(format!("y = {y} outside (0, {beta}]")));
        }
        Ok(if y == beta { 0.0 } else { -(y / beta).ln() })
    }

    pub fn u_hat(&self, y: f64, h: f64, z: f64) -> Result<f64> {
        Ok(self.v(self.r_of_y(y)?, h, z))
    }

    pub fn u_hat_partials(&self, y: f64, h: f64, z: f64) -> Result<UHatPartials> {
        let v = self.v_partials(self.r_of_y(y)?, h, z);
        Ok(UHatPartials {
            u: v.v,
            u_y: -v.v_r / y,
            u_yy: (v.v_rr + v.v_r) / (y * y),
            u_yh: -v.v_rh / y,
            u_yz: -v.v_rz / y,
            u_h: v.v_h,
            u_z: v.v_z,
            extrapolated: v.extrapolated,
        })
    }

    /// Full residual of the dual equation at `(r,h,z)` and its propagated standard error.
    pub fn pde_residual(&self, r: f64, h: f64, z: f64) -> (f64, f64) {
        let m = &self.model;
        let dc = &m.derived;
        let b = m.bench();
        let (a2, rho, beta, k) = (dc.alpha * dc.alpha, m.rho(), m.beta(), m.k());
        let v = self.v_partials(r, h, z);
        let res = 0.5 * a2 * v.v_rr + (0.5 * a2 - rho) * v.v_r + 0.5 * b.sigma_b * b.sigma_b * v.v_hh - b.mu_b * v.v_h
            + 0.5 * b.sigma_z * b.sigma_z * z * z * v.v_zz
            + b.mu_z * z * v.v_z
            - dc.kappa1 * v.v_rh
            + dc.kappa2 * z * v.v_rz
            + b.sigma_z * b.sigma_b * dc.eta_gamma * z * v.v_zh
            + (dc.kappa2 - b.mu_z) * beta * z * (-r).exp()
            + (1.0 - m.p()) / m.p() * beta.powf(-k) * (k * r).exp()
            - rho * v.v;
        let p = self.psi_at(r, h);
        let (i, _, _) = cell(&self.r_nodes, r);
        let (j, _, _) = cell(&self.h_nodes, h);
        let dr = self.r_nodes[i + 1] - self.r_nodes[i];
        let dh = self.h_nodes[j + 1] - self.h_nodes[j];
        let se = rho * p.se[0]
            + (0.5 * a2 - rho).abs() * p.se[1]
            + b.mu_b.abs() * p.se[2]
            + dc.kappa1.abs() * p.se[3]
            + 0.5 * a2 * 2.0 * p.se[1] / dr
            + 0.5 * b.sigma_b * b.sigma_b * 2.0 * p.se[2] / dh;
        (res, se)
    }

    pub fn verify_pde_residuals(&self, sample: &ResidualSample) -> ResidualReport {
        let mut points = Vec::new();
        let r_top = self.grid.r_max;
        let h_top = *self.h_nodes.last().unwrap();
        for a in 0..sample.nr {
            let r = r_top * (a as f64 + 0.5) / sample.nr as f64;
            for c in 0..sample.nh {
                let h = h_top * ((c as f64 + 0.5) / sample.nh as f64).powf(self.grid.h_grading);
                for &z in &sample.z {
                    let (res, se) = self.pde_residual(r, h, z);
                    points.push(ResidualPoint { r, h, z, residual: res, std_error: se });
                }
            }
        }
        let max_abs = points.iter().map(|p| p.residual.abs()).fold(0.0, f64::max);
        let max_se = points.iter().map(|p| p.std_error).fold(0.0, f64::max);
        let tolerance = sample.floor.max(sample.se_multiple * max_se);
        ResidualReport { max_abs_residual: max_abs, max_std_error: max_se, tolerance, pass: max_abs < tolerance, points }
    }

    /// Boundary identities on grid nodes: `û_y(β,h,z)` along `r = 0` and `v_h(r,0,z) − βe^{−r}` along `h = 0`.
    pub fn boundary_report(&self, z: f64) -> BoundaryReport {
        let beta = self.beta();
        let u_y_at_beta = self.h_nodes.iter().map(|&h| self.u_hat_partials(beta, h, z).map(|u| u.u_y.abs()).unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
        let mut v_h_edge = 0.0f64;
        let mut v_h_se = 0.0f64;
        for &r in &self.r_nodes {
            let p = self.psi_at(r, 0.0);
            v_h_edge = v_h_edge.max((p.psi_h - beta * (-r).exp()).abs());
            v_h_se = v_h_se.max(p.se[2]);
        }
        BoundaryReport { max_abs_u_y_at_beta: u_y_at_beta, max_abs_v_h_edge_error: v_h_edge, v_h_edge_std_error: v_h_se }
    }

    pub fn to_json(&self) -> String {
        let f = FieldFile {
            schema_version: FIELD_SCHEMA_VERSION,
            params: self.model.params.clone(),
            mc: self.mc,
            grid: self.grid,
            sources: SOURCES,
            r_nodes: self.r_nodes.clone(),
            h_nodes: self.h_nodes.clone(),
            psi: self.psi.clone(),
            psi_r: self.psi_r.clone(),
            psi_h: self.psi_h.clone(),
            psi_rh: self.psi_rh.clone(),
        };
        serde_json::to_string(&f).expect("field serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: FieldFile = serde_json::from_str(s)?;
        if f.schema_version != FIELD_SCHEMA_VERSION {
            return Err(Error::Config(format!("field schema version {} is not supported", f.schema_version)));
        }
        let model = Model::new(f.params)?;
        DualField::assemble(model, f.mc, f.grid, f.r_nodes, f.h_nodes, f.psi, f.psi_r, f.psi_h, f.psi_rh)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample {
    pub nr: usize,
    pub nh: usize,
    pub z: Vec<f64>,
    pub floor: f64,
    pub se_multiple: f64,
}

impl Default for ResidualSample {
    fn default() -> Self {
        ResidualSample { nr: 5, nh: 5, z: vec![0.4, 0.8, 1.6], floor: 5e-2, se_multiple: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualPoint {
    pub r: f64,
    pub h: f64,
    pub z: f64,
    pub residual: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub max_abs_residual: f64,
    pub max_std_error: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub points: Vec<ResidualPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub max_abs_u_y_at_beta: f64,
    pub max_abs_v_h_edge_error: f64,
    pub v_h_edge_std_error: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_field() -> DualField {
        let m = Model::new(ModelParams::reference()).unwrap();
        let cfg = McConfig::new(400, 2e-3, 6.0, 5);
        build_dual_field(&m, &cfg, &GridSpec::new(3.0, 1.0, 9, 9).with_h_grading(2.0)).unwrap()
    }

    /// Field with ψ given in closed form, to test the interpolation alone.
    fn synthetic(f: impl Fn(f64, f64) -> [f64; 4]) -> DualField {
        let m = Model::new(ModelParams::reference()).unwrap();
        let grid = GridSpec::new(2.0, 1.0, 21, 21);
        let (rn, hn) = (grid.r_nodes(), grid.h_nodes());
        let mut t: Vec<Table> = (0..4).map(|_| Table { value: vec![], std_error: vec![] }).collect();
        for &r in &rn {
            for &h in &hn {
                let v = f(r, h);
                for k in 0..4 {
                    t[k].value.push(v[k]);
                    t[k].std_error.push(0.0);
                }
            }
        }
        let [a, b, c, d]: [Table; 4] = t.try_into().unwrap();
        DualField::assemble(m, McConfig::default(), grid, rn, hn, a, b, c, d).unwrap()
    }

    #[test]
    fn grid_parsing() {
        let g = GridSpec::parse("4,2,17,9").unwrap();
        assert_eq!((g.r_max, g.h_max, g.nr, g.nh), (4.0, 2.0, 17, 9));
        assert!(GridSpec::parse("4,2,17").is_err());
        assert!(GridSpec::parse("4,2,1,9").is_err());
        assert!(GridSpec::parse("-1,2,5,9").is_err());
        let h = GridSpec::new(1.0, 4.0, 2, 3).with_h_grading(2.0).h_nodes();
        assert_eq!(h, vec![0.0, 1.0, 4.0]);
    }

    #[test]
    fn bicubic_reproduces_smooth_function() {
        // ψ = −0.1 e^{−r−2h} (r-derivative at r = 0 is overwritten on that edge only via ψ_rh).
        let f = |r: f64, h: f64| {
            let e = -0.1 * (-r - 2.0 * h).exp();
            [e, -e, -2.0 * e, 2.0 * e]
        };
        let field = synthetic(f);
        for (r, h) in [(0.5, 0.33), (1.37, 0.05), (1.9, 0.91)] {
            let p = field.psi_at(r, h);
            let e = f(r, h);
            assert!((p.psi - e[0]).abs() < 1e-7);
            assert!((p.psi_r - e[1]).abs() < 1e-5);
            assert!((p.psi_h - e[2]).abs() < 1e-5);
            assert!((p.psi_rh - e[3]).abs() < 1e-3);
            assert!((p.psi_rr - e[0]).abs() < 2e-3);
            assert!((p.psi_hh - 4.0 * e[0]).abs() < 5e-3);
        }
        let out = field.psi_at(3.0, 0.5);
        assert!(out.extrapolated && out.psi_r == 0.0 && out.psi_rr == 0.0);
    }

    #[test]
    fn z_dependence_exact() {
        let field = small_field();
        let l = field.closed_form();
        for (r, h) in [(0.3, 0.1), (1.2, 0.6)] {
            let (z1, z2) = (0.4, 1.7);
            let lhs = field.v(r, h, z2) - field.v(r, h, z1);
            let rhs = (z2 - z1) * (l.beta * (-r).exp() - l.beta / l.ell * (-l.ell * r).exp());
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn neumann_and_signs() {
        let field = small_field();
        let rep = field.boundary_report(0.8);
        assert!(rep.max_abs_u_y_at_beta < 1e-12);
        assert!(rep.max_abs_v_h_edge_error < 1e-14);
        let [psi, _, psi_h, psi_rh] = field.tables();
        assert!(psi.value.iter().all(|&v| v <= 0.0));
        assert!(psi_h.value.iter().all(|&v| v >= 0.0));
        for (i, &r) in field.r_nodes().iter().enumerate() {
            for j in 0..field.h_nodes().len() {
                assert!(psi_rh.value[i * field.h_nodes().len() + j].abs() <= field.beta() * (-r).exp() + 1e-15);
            }
        }
        for y in [0.05, 0.3, 0.7, 0.99] {
            let u = field.u_hat_partials(y, 0.2, 0.8).unwrap();
            assert!(u.u_y <= 0.0 && u.u_yy > 0.0);
        }
        assert!(matches!(field.u_hat(1.5, 0.0, 0.8), Err(Error::Domain(_))));
    }

    #[test]
    fn json_round_trip() {
        let field = small_field();
        let back = DualField::from_json(&field.to_json()).unwrap();
        for (r, h) in [(0.2, 0.1), (2.5, 0.7)] {
            assert_eq!(field.v(r, h, 0.8).to_bits(), back.v(r, h, 0.8).to_bits());
        }
        let bad = field.to_json().replace("\"schema_version\":1", "\"schema_version\":99");
        assert!(DualField::from_json(&bad).is_err());
    }

    #[test]
    fn l_only_residual_is_tiny() {
        let field = synthetic(|_, _| [0.0; 4]);
        let mut p = ModelParams::reference();
        p.benchmark.mu_b = 0.0;
        p.benchmark.sigma_b = 0.0;
        let m = Model::new(p).unwrap();
        let grid = field.grid;
        let (rn, hn) = (field.r_nodes().to_vec(), field.h_nodes().to_vec());
        let zeros = Table { value: vec![0.0; rn.len() * hn.len()], std_error: vec![0.0; rn.len() * hn.len()] };
        let f = DualField::assemble(m, McConfig::default(), grid, rn, hn, zeros.clone(), zeros.clone(), zeros.clone(), zeros).unwrap();
        let rep = f.verify_pde_residuals(&ResidualSample::default());
        assert!(rep.max_abs_residual < 1e-9, "{}", rep.max_abs_residual);
    }
}
