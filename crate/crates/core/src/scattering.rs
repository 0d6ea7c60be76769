//! Fast cubic soliton hitting the vertex from edge 0.
//!
//! The incident datum `sqrt(2) chi(x) e^{-i v x / 2} sech(x - x0)` travels
//! toward the vertex with speed `v`. With `t1 = x0/v - v^{-delta}`,
//! `t2 = x0/v + v^{-delta}` and `t3 = t2 + T ln v` the run is compared with
//! three approximants: the free translating soliton before `t1`, the
//! linear-scattering superposition of "ghost" solitons on `[t1, t2]`, and
//! line evolutions of the scattered pieces after `t2`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{NlsError, Result};
use crate::evolution::{Propagator, Scheme, BOUNDARY_TOL};
use crate::functionals::mass;
use crate::graph::{GraphFunction, StarGrid, VertexCondition};
use crate::standing_waves::NlsParams;

/// Largest fraction of the incident mass the cutoff may remove.
pub const MAX_CUTOFF_LOSS: f64 = 1e-8;

/// Smooth step: 0 for `x <= 1`, 1 for `x >= 2`.
pub fn cutoff(x: f64) -> f64 {
    let f = |y: f64| if y > 0.0 { (-1.0 / y).exp() } else { 0.0 };
    let a = f(x - 1.0);
    let b = f(2.0 - x);
    if a + b == 0.0 {
        return if x >= 2.0 { 1.0 } else { 0.0 };
    }
    a / (a + b)
}

/// `phi_{x0, v}(x, t) = sqrt(2) sech(x - x0 - v t) e^{i(v x/2 - v^2 t/4 + t)}`.
pub fn translating_soliton(x: f64, t: f64, x0: f64, v: f64) -> Complex64 {
    let z = (x - x0 - v * t).abs();
    let e = (-z).exp();
    let sech = 2.0 * e / (1.0 + e * e);
    Complex64::from_polar(2f64.sqrt() * sech, 0.5 * v * x - 0.25 * v * v * t + t)
}

/// Scattering column for a wave `e^{-ikx}` incoming on edge 0: the
/// amplitudes `s_j` of `e^{ikx}` on every edge.
pub fn scattering_column(cond: &VertexCondition, k: f64, n: usize) -> Result<Vec<Complex64>> {
    if !(k > 0.0) {
        return Err(NlsError::Domain(format!("wavenumber must be positive, got {k}")));
    }
    let (a, b) = cond.boundary_matrices(n)?;
    let ik = Complex64::new(0.0, k);
    // psi(0) = e0 + s, psi'(0) = -ik e0 + ik s  =>  (A + ik B) s = (ik B - A) e0
    let lhs: DMatrix<Complex64> = &a + &b * ik;
    let rhs: DVector<Complex64> = (&b * ik - &a).column(0).into_owned();
    let s = lhs.lu().solve(&rhs).ok_or_else(|| NlsError::Singular(format!("plane-wave matching is singular at k = {k}")))?;
    if s.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(NlsError::Singular(format!("plane-wave matching is singular at k = {k}")));
    }
    Ok(s.iter().copied().collect())
}

/// Reflection `R = s_0` and transmission `T = s_1` into the first outgoing edge.
pub fn linear_coefficients(cond: &VertexCondition, k: f64, n: usize) -> Result<(Complex64, Complex64)> {
    let s = scattering_column(cond, k, n)?;
    Ok((s[0], s[1]))
}

/// A scattering experiment.
#[derive(Debug, Clone)]
pub struct ScatteringSetup {
    pub params: NlsParams,
    pub cond: VertexCondition,
    pub v: f64,
    pub x0: f64,
    pub delta_exp: f64,
    /// The constant `T` in `t3 = t2 + T ln v`.
    pub t_log: f64,
    pub grid: StarGrid,
    pub dt: f64,
    /// Time between trace records.
    pub record_interval: f64,
}

impl ScatteringSetup {
    pub fn new(params: NlsParams, cond: VertexCondition, v: f64, x0: f64, delta_exp: f64, t_log: f64, grid: StarGrid, dt: f64) -> Result<Self> {
        let s = Self { params, cond, v, x0, delta_exp, t_log, grid, dt, record_interval: 0.05 };
        s.validate()?;
        Ok(s)
    }

    /// Setup with the default resolution: `h = min(0.02, 1.25/v)` (at least
    /// ten points per carrier wavelength `4 pi / v`),
    /// `dt = h/(2v)`, and edges long enough to hold the scattered pulses at `t3`.
    pub fn with_defaults(n_edges: usize, cond: VertexCondition, v: f64, x0: f64, delta_exp: f64, t_log: f64) -> Result<Self> {
        let params = NlsParams::new(n_edges, 1.0, cond.delta_strength().unwrap_or(0.0))?;
        if !(v > 1.0) {
            return Err(NlsError::Setup(format!("speed must exceed 1, got {v}")));
        }
        let h = (1.25 / v).min(0.02);
        let travel = v.powf(1.0 - delta_exp) + t_log * v * v.ln();
        // radiation outruns the pulses somewhat; leave room for it
        let length = (x0 + 30.0).max(1.3 * travel + 40.0).max(120.0);
        let grid = StarGrid::with_spacing(n_edges, length, h)?;
        Self::new(params, cond, v, x0, delta_exp, t_log, grid, h / (2.0 * v))
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.mu != 1.0 {
            return Err(NlsError::Setup(format!("scattering is set up for the cubic equation, got mu = {}", self.params.mu)));
        }
        if !(self.delta_exp > 0.0 && self.delta_exp < 1.0) {
            return Err(NlsError::Setup(format!("delta must lie in (0, 1), got {}", self.delta_exp)));
        }
        if !(self.v > 0.0) || !(self.dt > 0.0) || !(self.t_log > 0.0) {
            return Err(NlsError::Setup("v, dt and T must be positive".into()));
        }
        if self.x0 < self.v.powf(1.0 - self.delta_exp) {
            return Err(NlsError::Setup(format!(
                "x0 = {} is below v^(1 - delta) = {}",
                self.x0,
                self.v.powf(1.0 - self.delta_exp)
            )));
        }
        if self.grid.edge_length() <= self.x0 + 20.0 {
            return Err(NlsError::Setup(format!("edges of length {} do not reach x0 + 20", self.grid.edge_length())));
        }
        if self.grid.n_edges() != self.params.n_edges {
            return Err(NlsError::Shape("grid and parameters disagree on N".into()));
        }
        Ok(())
    }

    /// `(t1, t2, t3)`.
    pub fn times(&self) -> (f64, f64, f64) {
        let centre = self.x0 / self.v;
        let w = self.v.powf(-self.delta_exp);
        let t2 = centre + w;
        (centre - w, t2, t2 + self.t_log * self.v.ln())
    }

    /// `{t1/2, t1, (t1+t2)/2, t2, t2+1, t3}`, with `t2 + 1` dropped when it exceeds `t3`.
    pub fn checkpoints(&self) -> Vec<f64> {
        let (t1, t2, t3) = self.times();
        let mut c = vec![0.5 * t1, t1, 0.5 * (t1 + t2), t2];
        if t2 + 1.0 < t3 {
            c.push(t2 + 1.0);
        }
        c.push(t3);
        c
    }

    /// Vertex condition used in the run: a delta strength is scaled by `v`.
    pub fn evolution_condition(&self) -> VertexCondition {
        match self.cond.normalized() {
            VertexCondition::Delta { alpha } => VertexCondition::delta(self.v * alpha),
            other => other,
        }
    }

    /// Carrier wavenumber `v/2` of the incident pulse.
    pub fn carrier_wavenumber(&self) -> f64 {
        0.5 * self.v
    }

    pub fn scattering_column(&self) -> Result<Vec<Complex64>> {
        scattering_column(&self.evolution_condition(), self.carrier_wavenumber(), self.params.n_edges)
    }
}

/// The cut-off incident pulse on edge 0.
pub fn incident_soliton(setup: &ScatteringSetup) -> Result<GraphFunction> {
    setup.validate()?;
    let raw = GraphFunction::from_fn(setup.grid, |j, x| {
        if j == 0 {
            translating_soliton(x, 0.0, setup.x0, -setup.v)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let cut = GraphFunction::from_fn(setup.grid, |j, x| cutoff(x) * raw.edge(j)[(x / setup.grid.spacing()).round() as usize]);
    let loss = (mass(&raw) - mass(&cut)) / mass(&raw);
    if loss > MAX_CUTOFF_LOSS {
        return Err(NlsError::Setup(format!("the vertex cutoff removes a fraction {loss:e} of the pulse; move x0 away from the vertex")));
    }
    Ok(cut)
}

/// Free translating soliton on edge 0, zero elsewhere.
pub fn reference_pre(setup: &ScatteringSetup, t: f64) -> GraphFunction {
    GraphFunction::from_fn(setup.grid, |j, x| {
        if j == 0 {
            translating_soliton(x, t, setup.x0, -setup.v)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Incoming soliton plus the linearly scattered ghost soliton `phi_{-x0, v}`.
pub fn reference_interaction(setup: &ScatteringSetup, t: f64) -> Result<GraphFunction> {
    let s = setup.scattering_column()?;
    Ok(GraphFunction::from_fn(setup.grid, |j, x| {
        let ghost = s[j] * translating_soliton(x, t, -setup.x0, setup.v);
        if j == 0 {
            translating_soliton(x, t, setup.x0, -setup.v) + ghost
        } else {
            ghost
        }
    }))
}

/// Line evolutions of the scattered pieces `s_j phi_{-x0, v}(t2)`, sampled
/// at the requested times (all `>= t2`). Each auxiliary run uses an `N = 2`
/// Kirchhoff star with the main grid's length and resolution. Returns the
/// states together with the largest relative mass drift of the auxiliary runs.
pub fn reference_out(setup: &ScatteringSetup, times: &[f64]) -> Result<(Vec<GraphFunction>, f64)> {
    let (_, t2, _) = setup.times();
    if times.iter().any(|&t| t < t2) {
        return Err(NlsError::Domain("the outgoing approximant is defined for t >= t2".into()));
    }
    let s = setup.scattering_column()?;
    let line = setup.grid.with_edges(2)?;
    let prop = Propagator::new(&line, 1.0, &VertexCondition::Kirchhoff, Scheme::CrankNicolsonFixedPoint, 1e-12, 50)?;
    let mut out: Vec<GraphFunction> = times.iter().map(|_| GraphFunction::zeros(setup.grid)).collect();
    let mut drift = 0.0f64;
    let mut done: Vec<(Complex64, Vec<Vec<Complex64>>)> = Vec::new();
    for (j, &c) in s.iter().enumerate() {
        let cached = done.iter().find(|(d, _)| *d == c).map(|(_, v)| v.clone());
        let traces = match cached {
            Some(v) => v,
            None => {
                // edge 0 of the line carries y = -x, edge 1 carries y = x
                let init = GraphFunction::from_fn(line, |e, x| {
                    let y = if e == 0 { -x } else { x };
                    c * translating_soliton(y, t2, -setup.x0, setup.v)
                });
                let mut u = prop.restrict(&init);
                let m0 = prop.mass(&u);
                let mut t = t2;
                let mut traces = Vec::with_capacity(times.len());
                for &target in times {
                    prop.advance(&mut u, t, target, setup.dt)?;
                    t = target;
                    traces.push(prop.prolong(&u).edge(1).to_vec());
                }
                if m0 > 0.0 {
                    drift = drift.max((prop.mass(&u) - m0).abs() / m0);
                }
                done.push((c, traces.clone()));
                traces
            }
        };
        for (f, edge) in out.iter_mut().zip(&traces) {
            f.edge_mut(j).copy_from_slice(edge);
        }
    }
    Ok((out, drift))
}

/// Measurements at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub t: f64,
    pub edge_mass: Vec<f64>,
    /// `r_j = ||psi_j|| / ||psi||`.
    pub ratios: Vec<f64>,
    /// Distance to the free soliton (`t <= t1`).
    pub dist_pre: Option<f64>,
    /// Distance to the linear-scattering superposition (`t1 <= t <= t2`).
    pub dist_interaction: Option<f64>,
    /// Distance to the line-evolved outgoing pieces (`t >= t2`).
    pub dist_out: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ScatteringReport {
    pub v: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub k: f64,
    pub r_lin: Complex64,
    pub t_lin: Complex64,
    pub trace_times: Vec<f64>,
    pub trace_ratios: Vec<Vec<f64>>,
    pub checkpoints: Vec<Checkpoint>,
    pub final_ratios: Vec<f64>,
    /// Largest `|sum_j r_j^2 - 1|` along the run.
    pub partition_defect: f64,
    /// Largest relative drift of the total mass.
    pub mass_drift: f64,
    pub aux_mass_drift: f64,
    /// Set when mass reached the far ends of the edges before `t3`.
    pub boundary_flag: bool,
}

fn ratios(edge_mass: &[f64]) -> Vec<f64> {
    let total: f64 = edge_mass.iter().sum();
    edge_mass.iter().map(|m| (m / total).sqrt()).collect()
}

fn l2_distance(a: &GraphFunction, b: &GraphFunction) -> f64 {
    mass(&(a - b)).sqrt()
}

/// Runs the experiment to `t3`.
pub fn run_scattering(setup: &ScatteringSetup) -> Result<ScatteringReport> {
    let psi0 = incident_soliton(setup)?;
    let (t1, t2, t3) = setup.times();
    let cond = setup.evolution_condition();
    let prop = Propagator::new(&setup.grid, 1.0, &cond, Scheme::CrankNicolsonFixedPoint, 1e-12, 50)?;
    let checkpoints = setup.checkpoints();
    let out_times: Vec<f64> = checkpoints.iter().copied().filter(|&t| t >= t2).collect();
    let (out_refs, aux_mass_drift) = reference_out(setup, &out_times)?;
    let (r_lin, t_lin) = linear_coefficients(&cond, setup.carrier_wavenumber(), setup.params.n_edges)?;

    // Record times: a uniform grid merged with the checkpoints.
    let mut times: Vec<f64> = (1..).map(|i| i as f64 * setup.record_interval).take_while(|&t| t < t3).collect();
    times.extend(&checkpoints);
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let mut u = prop.restrict(&psi0);
    let m0 = prop.mass(&u);
    let first = prop.observe(&u, 0.0);
    let mut report = ScatteringReport {
        v: setup.v,
        t1,
        t2,
        t3,
        k: setup.carrier_wavenumber(),
        r_lin,
        t_lin,
        trace_times: vec![0.0],
        trace_ratios: vec![ratios(&first.edge_mass)],
        checkpoints: Vec::new(),
        final_ratios: Vec::new(),
        partition_defect: 0.0,
        mass_drift: 0.0,
        aux_mass_drift,
        boundary_flag: false,
    };
    let mut t = 0.0;
    for &target in &times {
        prop.advance(&mut u, t, target, setup.dt)?;
        t = target;
        let obs = prop.observe(&u, t);
        if obs.boundary_mass > BOUNDARY_TOL * obs.mass {
            report.boundary_flag = true;
        }
        let r = ratios(&obs.edge_mass);
        report.partition_defect = report.partition_defect.max((r.iter().map(|x| x * x).sum::<f64>() - 1.0).abs());
        report.mass_drift = report.mass_drift.max((obs.mass - m0).abs() / m0);
        if let Some(ci) = checkpoints.iter().position(|&c| (c - t).abs() < 1e-12) {
            let psi = prop.prolong(&u);
            let dist_pre = (t <= t1 + 1e-12).then(|| l2_distance(&psi, &reference_pre(setup, t)));
            let dist_interaction = if t >= t1 - 1e-12 && t <= t2 + 1e-12 {
                Some(l2_distance(&psi, &reference_interaction(setup, t)?))
            } else {
                None
            };
            let dist_out = out_times.iter().position(|&c| c == checkpoints[ci]).map(|i| l2_distance(&psi, &out_refs[i]));
            report.checkpoints.push(Checkpoint { t, edge_mass: obs.edge_mass.clone(), ratios: r.clone(), dist_pre, dist_interaction, dist_out });
        }
        report.trace_times.push(t);
        report.trace_ratios.push(r);
    }
    if report.boundary_flag {
        log::warn!("scattered pulses reached the far ends of the edges before t3");
    }
    report.final_ratios = report.trace_ratios.last().cloned().unwrap_or_default();
    Ok(report)
}
