//! Time integration of `i psi_t = H psi - |psi|^{2mu} psi` on the truncated
//! star (homogeneous Dirichlet data at `x = L`).
//!
//! The Crank-Nicolson midpoint rule is solved by fixed-point iteration with
//! the linear part implicit: with `m = (psi^n + psi^{n+1})/2`, each iterate
//! solves
//! `(W + i dt/2 K) psi^{n+1} = (W - i dt/2 K) psi^n + i dt W |m|^{2mu} m`.
//! The matrix on the left does not depend on the iterate, so it is factored
//! once per step size. At convergence the step is the midpoint rule, which
//! conserves the discrete mass and energy up to the iteration tolerance.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::discrete::{Laplacian, StarFactor, StarMatrix, VertexLayout};
use crate::error::{NlsError, Result};
use crate::graph::{inner_product, GraphFunction, StarGrid, VertexCondition};
use crate::stability::{classify_stability, discrete_stationary_state, StabilityReport};
use crate::standing_waves::{build_state, sample, NlsParams, StationaryState};

/// Fraction of each edge, at its far end, watched for mass reaching the
/// artificial boundary.
pub const BOUNDARY_FRACTION: f64 = 0.05;
/// Boundary mass above this fraction of the total flags a run.
pub const BOUNDARY_TOL: f64 = 1e-8;

/// `f64::max` that lets NaN through instead of discarding it.
fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    CrankNicolsonFixedPoint,
    StrangSplit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub fixedpoint_tol: f64,
    pub fixedpoint_max_iter: usize,
    pub record_every: usize,
    /// Threshold on the discrete H1 norm.
    pub blowup_threshold: f64,
    /// Keep a snapshot every this many steps (0 keeps none besides the final state).
    pub snapshot_every: usize,
}

impl EvolutionConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            scheme: Scheme::CrankNicolsonFixedPoint,
            fixedpoint_tol: 1e-12,
            fixedpoint_max_iter: 50,
            record_every: 1,
            blowup_threshold: 1e6,
            snapshot_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_end > 0.0) {
            return Err(NlsError::Setup(format!("dt and t_end must be positive, got {} and {}", self.dt, self.t_end)));
        }
        if self.dt >= self.t_end {
            return Err(NlsError::Setup(format!("dt = {} must be smaller than t_end = {}", self.dt, self.t_end)));
        }
        if !(self.fixedpoint_tol > 0.0) || self.fixedpoint_max_iter == 0 {
            return Err(NlsError::Setup("fixed-point tolerance and iteration cap must be positive".into()));
        }
        if self.record_every == 0 {
            return Err(NlsError::Setup("record_every must be at least 1".into()));
        }
        if !(self.blowup_threshold > 0.0) {
            return Err(NlsError::Setup("blow-up threshold must be positive".into()));
        }
        Ok(())
    }
}

/// Conserved and monitored quantities at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Observables {
    pub t: f64,
    pub mass: f64,
    pub edge_mass: Vec<f64>,
    /// Discrete energy `1/2 <u, K u> - 1/(2mu+2) sum W |u|^{2mu+2}`; the
    /// vertex interaction is part of `K`.
    pub energy: f64,
    pub vertex_modulus: f64,
    pub h1: f64,
    /// Mass in the last 5% of every edge.
    pub boundary_mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    Completed,
    BlowUp { t: f64, h1_norm: f64 },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub observables: Vec<Observables>,
    pub snapshot_times: Vec<f64>,
    pub snapshots: Vec<GraphFunction>,
    pub final_state: GraphFunction,
    pub termination: Termination,
    /// Set when the boundary mass exceeded `1e-8` of the total at some record.
    pub boundary_flag: bool,
    /// Step actually used (`t_end` divided into whole steps).
    pub dt: f64,
    pub max_fixed_point_iterations: usize,
}

impl Trajectory {
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.observables[0].mass;
        self.observables.iter().map(|o| (o.mass - m0).abs()).fold(0.0, nan_max) / m0
    }

    pub fn energy_drift(&self) -> f64 {
        let e0 = self.observables[0].energy;
        self.observables.iter().map(|o| (o.energy - e0).abs()).fold(0.0, nan_max) / e0.abs()
    }
}

/// Time stepper bound to a grid, vertex condition and nonlinearity.
#[derive(Debug, Clone)]
pub struct Propagator {
    lap: Laplacian,
    stiffness: StarMatrix<Complex64>,
    mu: f64,
    scheme: Scheme,
    tol: f64,
    max_iter: usize,
}

impl Propagator {
    pub fn new(grid: &StarGrid, mu: f64, cond: &VertexCondition, scheme: Scheme, tol: f64, max_iter: usize) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(NlsError::Domain(format!("mu must be positive, got {mu}")));
        }
        let lap = Laplacian::new(grid, cond)?;
        let stiffness = lap.stiffness.to_complex();
        Ok(Self { lap, stiffness, mu, scheme, tol, max_iter })
    }

    pub fn from_config(grid: &StarGrid, mu: f64, cond: &VertexCondition, config: &EvolutionConfig) -> Result<Self> {
        Self::new(grid, mu, cond, config.scheme, config.fixedpoint_tol, config.fixedpoint_max_iter)
    }

    pub fn laplacian(&self) -> &Laplacian {
        &self.lap
    }

    pub fn restrict(&self, f: &GraphFunction) -> Vec<Complex64> {
        self.lap.restrict(f)
    }

    pub fn prolong(&self, u: &[Complex64]) -> GraphFunction {
        self.lap.prolong(u)
    }

    /// Factorized Cayley matrix `W + i dt/2 K` of the linear part.
    fn cayley(&self, dt: f64) -> Result<StarFactor<Complex64>> {
        let c = Complex64::new(0.0, 0.5 * dt);
        let w = &self.lap.weights;
        let mut a = self.stiffness.clone();
        let nv = a.n_vertex();
        a.vertex.iter_mut().for_each(|x| *x *= c);
        a.diag.iter_mut().for_each(|x| *x *= c);
        a.off.iter_mut().for_each(|x| *x *= c);
        a.link.iter_mut().for_each(|x| *x *= c);
        for r in 0..nv {
            a.vertex[(r, r)] += w[r];
        }
        for (d, w) in a.diag.iter_mut().zip(&w[nv..]) {
            *d += w;
        }
        a.factor()
    }

    /// `(W - i dt/2 K) u`.
    fn explicit_half(&self, u: &[Complex64], dt: f64) -> Vec<Complex64> {
        let ku = self.stiffness.matvec(u);
        let c = Complex64::new(0.0, 0.5 * dt);
        u.iter().zip(&ku).zip(&self.lap.weights).map(|((u, ku), w)| w * u - c * ku).collect()
    }

    /// `|z|^{2 mu}` without a `powf` in the cubic case.
    #[inline]
    fn density(&self, z: Complex64) -> f64 {
        let r2 = z.norm_sqr();
        if self.mu == 1.0 {
            r2
        } else {
            r2.powf(self.mu)
        }
    }

    fn nonlinear_phase(&self, u: &mut [Complex64], dt: f64) {
        for z in u.iter_mut() {
            let rate = self.density(*z);
            *z *= Complex64::from_polar(1.0, rate * dt);
        }
    }

    /// Advances `u` by `dt`; returns the number of fixed-point iterations
    /// (zero for the split scheme).
    pub fn step(&self, u: &mut [Complex64], dt: f64, t: f64) -> Result<usize> {
        let cayley = self.cayley(dt)?;
        self.step_factored(&cayley, u, dt, t)
    }

    fn step_factored(&self, cayley: &StarFactor<Complex64>, u: &mut [Complex64], dt: f64, t: f64) -> Result<usize> {
        match self.scheme {
            Scheme::StrangSplit => {
                self.nonlinear_phase(u, 0.5 * dt);
                let rhs = self.explicit_half(u, dt);
                u.copy_from_slice(&cayley.solve(&rhs));
                self.nonlinear_phase(u, 0.5 * dt);
                Ok(0)
            }
            Scheme::CrankNicolsonFixedPoint => {
                // (W + i dt/2 K) u+ = (W - i dt/2 K) u + i dt W rho(m) m,  m = (u + u+)/2
                let base = self.explicit_half(u, dt);
                let w = &self.lap.weights;
                let idt = Complex64::new(0.0, dt);
                let mut next = u.to_vec();
                let mut rhs = base.clone();
                let mut increment = f64::INFINITY;
                for it in 1..=self.max_iter {
                    for i in 0..rhs.len() {
                        let m = 0.5 * (next[i] + u[i]);
                        rhs[i] = base[i] + idt * w[i] * self.density(m) * m;
                    }
                    let new = cayley.solve(&rhs);
                    increment = new.iter().zip(&next).map(|(x, y)| (x - y).norm_sqr()).fold(0.0, nan_max).sqrt();
                    let scale = new.iter().map(|z| z.norm_sqr()).fold(1.0, nan_max).sqrt();
                    next = new;
                    if increment <= self.tol * scale {
                        u.copy_from_slice(&next);
                        return Ok(it);
                    }
                    if !increment.is_finite() {
                        break;
                    }
                }
                Err(NlsError::StepNotConverged { t, increment, iterations: self.max_iter })
            }
        }
    }

    /// Takes equal steps of size at most `dt_max` from `t0` to `t1`.
    pub fn advance(&self, u: &mut [Complex64], t0: f64, t1: f64, dt_max: f64) -> Result<usize> {
        if t1 <= t0 {
            return Ok(0);
        }
        let n = ((t1 - t0) / dt_max - 1e-9).ceil().max(1.0) as usize;
        let dt = (t1 - t0) / n as f64;
        let cayley = self.cayley(dt)?;
        let mut worst = 0;
        for s in 0..n {
            worst = worst.max(self.step_factored(&cayley, u, dt, t0 + s as f64 * dt)?);
        }
        Ok(worst)
    }

    pub fn mass(&self, u: &[Complex64]) -> f64 {
        self.lap.mass(u)
    }

    /// `sum |u_{k+1} - u_k|^2 / h` along every edge, vertex to Dirichlet end.
    fn gradient_sq(&self, u: &[Complex64]) -> f64 {
        let k = &self.lap.stiffness;
        let h = self.lap.grid.spacing();
        let nv = k.n_vertex();
        let m = k.chain;
        let mut acc = 0.0;
        for j in 0..k.n_edges {
            let v = match self.lap.layout() {
                VertexLayout::Shared => u[0],
                VertexLayout::PerEdge => u[j],
            };
            let e = &u[nv + j * m..nv + (j + 1) * m];
            acc += (e[0] - v).norm_sqr();
            for w in e.windows(2) {
                acc += (w[1] - w[0]).norm_sqr();
            }
            acc += e[m - 1].norm_sqr();
        }
        acc / h
    }

    /// Discrete H1 norm of an unknown vector.
    pub fn h1_norm(&self, u: &[Complex64]) -> f64 {
        (self.gradient_sq(u) + self.mass(u)).sqrt()
    }

    pub fn energy(&self, u: &[Complex64]) -> f64 {
        let ku = self.stiffness.matvec(u);
        let quad: f64 = u.iter().zip(&ku).map(|(a, b)| (a.conj() * b).re).sum();
        let p = 2.0 * self.mu + 2.0;
        let pot: f64 = u.iter().zip(&self.lap.weights).map(|(z, w)| w * z.norm().powf(p)).sum();
        0.5 * quad - pot / p
    }

    pub fn observe(&self, u: &[Complex64], t: f64) -> Observables {
        let k = &self.lap.stiffness;
        let n = k.n_edges;
        let nv = k.n_vertex();
        let m = k.chain;
        let h = self.lap.grid.spacing();
        let w = &self.lap.weights;
        let cut = ((1.0 - BOUNDARY_FRACTION) * (self.lap.grid.n_points() - 1) as f64).ceil() as usize;
        let mut edge_mass = vec![0.0; n];
        let mut boundary_mass = 0.0;
        for (j, em) in edge_mass.iter_mut().enumerate() {
            let (vi, share) = match self.lap.layout() {
                VertexLayout::Shared => (0, 1.0 / n as f64),
                VertexLayout::PerEdge => (j, 1.0),
            };
            *em += share * w[vi] * u[vi].norm_sqr();
            for c in 0..m {
                let z = u[nv + j * m + c].norm_sqr();
                *em += h * z;
                if c + 1 >= cut {
                    boundary_mass += h * z;
                }
            }
        }
        let vertex_modulus = u[..nv].iter().map(|z| z.norm()).sum::<f64>() / nv as f64;
        Observables {
            t,
            mass: self.mass(u),
            edge_mass,
            energy: self.energy(u),
            vertex_modulus,
            h1: self.h1_norm(u),
            boundary_mass,
        }
    }
}

fn check_input(psi: &GraphFunction) -> Result<()> {
    if !psi.is_finite() {
        return Err(NlsError::Domain("initial datum has non-finite samples".into()));
    }
    Ok(())
}

/// One step of the configured scheme.
pub fn step(psi: &GraphFunction, params: &NlsParams, cond: &VertexCondition, config: &EvolutionConfig) -> Result<GraphFunction> {
    check_input(psi)?;
    let prop = Propagator::from_config(psi.grid(), params.mu, cond, config)?;
    let mut u = prop.restrict(psi);
    prop.step(&mut u, config.dt, 0.0)?;
    let h1 = prop.h1_norm(&u);
    if h1 > config.blowup_threshold {
        return Err(NlsError::BlowUp { t: config.dt, h1_norm: h1 });
    }
    Ok(prop.prolong(&u))
}

/// Integrates to `t_end` (or until the blow-up signal) recording observables
/// every `record_every` steps and at the final time.
pub fn evolve(psi0: &GraphFunction, params: &NlsParams, cond: &VertexCondition, config: &EvolutionConfig) -> Result<Trajectory> {
    config.validate()?;
    check_input(psi0)?;
    let prop = Propagator::from_config(psi0.grid(), params.mu, cond, config)?;
    evolve_with(&prop, psi0, config, |_, _| {})
}

/// [`evolve`] with a prebuilt propagator and a callback invoked at every
/// recorded time with the current state.
pub fn evolve_with(
    prop: &Propagator,
    psi0: &GraphFunction,
    config: &EvolutionConfig,
    mut on_record: impl FnMut(f64, &GraphFunction),
) -> Result<Trajectory> {
    config.validate()?;
    let n_steps = (config.t_end / config.dt - 1e-9).ceil().max(1.0) as usize;
    let dt = config.t_end / n_steps as f64;
    let mut u = prop.restrict(psi0);
    let mut traj = Trajectory {
        times: Vec::new(),
        observables: Vec::new(),
        snapshot_times: Vec::new(),
        snapshots: Vec::new(),
        final_state: psi0.clone(),
        termination: Termination::Completed,
        boundary_flag: false,
        dt,
        max_fixed_point_iterations: 0,
    };
    let mut record = |traj: &mut Trajectory, u: &[Complex64], t: f64| {
        let obs = prop.observe(u, t);
        if obs.boundary_mass > BOUNDARY_TOL * obs.mass {
            traj.boundary_flag = true;
        }
        traj.times.push(t);
        traj.observables.push(obs);
        on_record(t, &prop.prolong(u));
    };
    record(&mut traj, &u, 0.0);
    let cayley = prop.cayley(dt)?;
    if config.snapshot_every > 0 {
        traj.snapshot_times.push(0.0);
        traj.snapshots.push(prop.prolong(&u));
    }
    for s in 1..=n_steps {
        let t = s as f64 * dt;
        let iters = prop.step_factored(&cayley, &mut u, dt, t - dt)?;
        traj.max_fixed_point_iterations = traj.max_fixed_point_iterations.max(iters);
        let h1 = prop.h1_norm(&u);
        if h1 > config.blowup_threshold || !h1.is_finite() {
            log::warn!("blow-up signal at t = {t}: H1 norm {h1:e}");
            record(&mut traj, &u, t);
            traj.termination = Termination::BlowUp { t, h1_norm: h1 };
            break;
        }
        if s % config.record_every == 0 || s == n_steps {
            record(&mut traj, &u, t);
        }
        if config.snapshot_every > 0 && (s % config.snapshot_every == 0 || s == n_steps) {
            traj.snapshot_times.push(t);
            traj.snapshots.push(prop.prolong(&u));
        }
    }
    if traj.boundary_flag {
        log::warn!("mass reached the far end of the truncated edges; results are affected by the Dirichlet boundary");
    }
    traj.final_state = prop.prolong(&u);
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrbitNorm {
    L2,
    /// `(||f'||^2 + ||f||^2)^{1/2}` with the stencil of [`GraphFunction::derivative`].
    Energy,
}

fn energy_inner(f: &GraphFunction, g: &GraphFunction) -> Result<Complex64> {
    Ok(inner_product(&f.derivative(), &g.derivative())? + inner_product(f, g)?)
}

/// Golden-section minimum of a smooth `2 pi`-periodic function: a coarse
/// scan picks the basin, golden sections refine it.
fn minimize_periodic(f: impl Fn(f64) -> f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let n = 32;
    let best = (0..n).map(|k| k as f64 * tau / n as f64).min_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
    let (mut a, mut b) = (best - tau / n as f64, best + tau / n as f64);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if b - a < 1e-12 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    f(0.5 * (a + b))
}

/// `inf_theta ||psi - e^{i theta} phi||`.
pub fn orbit_distance_to(psi: &GraphFunction, phi: &GraphFunction, norm: OrbitNorm) -> Result<f64> {
    match norm {
        OrbitNorm::L2 => {
            let pp = inner_product(psi, psi)?.re;
            let ff = inner_product(phi, phi)?.re;
            let c = inner_product(psi, phi)?.norm();
            Ok((pp + ff - 2.0 * c).max(0.0).sqrt())
        }
        OrbitNorm::Energy => {
            let pp = energy_inner(psi, psi)?.re;
            let ff = energy_inner(phi, phi)?.re;
            let c = energy_inner(psi, phi)?;
            // ||psi - e^{i theta} phi||^2 expanded by sesquilinearity
            let d2 = minimize_periodic(|theta| pp + ff - 2.0 * (Complex64::from_polar(1.0, theta) * c).re);
            Ok(d2.max(0.0).sqrt())
        }
    }
}

/// Distance from `psi` to the phase orbit of a stationary state.
pub fn orbit_distance(psi: &GraphFunction, state: &StationaryState, norm: OrbitNorm) -> Result<f64> {
    let phi = sample(state, psi.grid())?;
    orbit_distance_to(psi, &phi, norm)
}

/// Sum of five smooth random bumps, continuous at the vertex, scaled to
/// energy norm `size`. Each bump is either the same profile on every edge or
/// a profile vanishing at the vertex on a single edge.
pub fn smooth_perturbation(grid: &StarGrid, size: f64, seed: u64) -> GraphFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reach = (0.25 * grid.edge_length()).min(6.0);
    let mut f = GraphFunction::zeros(*grid);
    for _ in 0..5 {
        let amp = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        let width = 0.5 + rng.random::<f64>();
        let center = rng.random::<f64>() * reach;
        let radial = rng.random::<bool>();
        let edge = rng.random_range(0..grid.n_edges());
        let bump = GraphFunction::from_fn(*grid, |j, x| {
            let g = (-((x - center) / width).powi(2)).exp();
            if radial {
                amp * g
            } else if j == edge {
                amp * g * (x / width).tanh().powi(2)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        f = &f + &bump;
    }
    let e = energy_inner(&f, &f).map(|z| z.re.sqrt()).unwrap_or(1.0);
    f.scale(Complex64::new(size / e, 0.0))
}

/// Outcome of evolving a perturbed ground state.
#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub stability: StabilityReport,
    pub initial_distance: f64,
    pub max_distance: f64,
    pub final_distance: f64,
    /// `max_distance / initial_distance` (infinite for a zero perturbation).
    pub growth_ratio: f64,
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub termination: Termination,
    pub boundary_flag: bool,
}

/// Evolves `Phi + perturbation` (energy norm `perturbation_size`) and tracks
/// the energy-norm distance to the orbit of `Phi`.
pub fn orbital_stability_probe(
    params: &NlsParams,
    j: usize,
    omega: f64,
    perturbation_size: f64,
    grid: &StarGrid,
    config: &EvolutionConfig,
    seed: u64,
) -> Result<ProbeReport> {
    let stability = classify_stability(params, j, omega, grid)?;
    let state = build_state(params, omega, j)?;
    // The Newton-refined state is stationary for the semi-discrete flow, so
    // the unperturbed run leaves its orbit only through time-stepping error.
    let phi = if params.alpha != 0.0 { discrete_stationary_state(&state, grid)? } else { sample(&state, grid)? };
    let psi0 = if perturbation_size > 0.0 { &phi + &smooth_perturbation(grid, perturbation_size, seed) } else { phi.clone() };
    let prop = Propagator::from_config(grid, params.mu, &VertexCondition::delta(params.alpha), config)?;
    let mut distances = Vec::new();
    let mut failure = None;
    let traj = evolve_with(&prop, &psi0, config, |_, psi| match orbit_distance_to(psi, &phi, OrbitNorm::Energy) {
        Ok(d) => distances.push(d),
        Err(e) => failure = Some(e),
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let initial_distance = distances[0];
    let max_distance = distances.iter().copied().fold(0.0, nan_max);
    Ok(ProbeReport {
        stability,
        initial_distance,
        max_distance,
        final_distance: *distances.last().unwrap(),
        growth_ratio: if initial_distance > 0.0 { max_distance / initial_distance } else { f64::INFINITY },
        times: traj.times,
        distances,
        termination: traj.termination,
        boundary_flag: traj.boundary_flag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::mass;
    use crate::graph::vertex_residual;
    use crate::standing_waves::{kirchhoff_state, travelling_wave_even_kirchhoff};
    use proptest::prelude::*;

    fn p(n: usize, mu: f64, alpha: f64) -> NlsParams {
        NlsParams::new(n, mu, alpha).unwrap()
    }

    fn l2(f: &GraphFunction) -> f64 {
        mass(f).sqrt()
    }

    #[test]
    fn zero_stays_zero() {
        let g = StarGrid::new(3, 10.0, 101).unwrap();
        let z = GraphFunction::zeros(g);
        let out = step(&z, &p(3, 1.0, -1.0), &VertexCondition::delta(-1.0), &EvolutionConfig::new(1e-2, 1.0)).unwrap();
        assert!(out.values().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(EvolutionConfig::new(1.0, 0.5).validate().is_err());
        assert!(EvolutionConfig::new(-1.0, 0.5).validate().is_err());
        let mut c = EvolutionConfig::new(0.1, 1.0);
        c.record_every = 0;
        assert!(c.validate().is_err());
        assert!(EvolutionConfig::new(0.1, 1.0).validate().is_ok());
    }

    #[test]
    fn general_u_is_unsupported() {
        let g = StarGrid::new(3, 10.0, 101).unwrap();
        let cond = VertexCondition::GeneralU(VertexCondition::delta_unitary(3, 1.0));
        let r = step(&GraphFunction::zeros(g), &p(3, 1.0, 0.0), &cond, &EvolutionConfig::new(0.1, 1.0));
        assert!(matches!(r, Err(NlsError::Unsupported(_))));
    }

    #[test]
    fn one_step_rotates_the_standing_wave() {
        // psi(dt) = e^{i omega dt} Phi; local error O(dt^3 + h^2 dt).
        let params = p(3, 1.0, -1.0);
        let s = build_state(&params, 1.0, 0).unwrap();
        let dt = 1e-3;
        let errs: Vec<f64> = [1501, 3001]
            .iter()
            .map(|&m| {
                let g = StarGrid::new(3, 30.0, m).unwrap();
                let phi = sample(&s, &g).unwrap();
                let out = step(&phi, &params, &VertexCondition::delta(-1.0), &EvolutionConfig::new(dt, 1.0)).unwrap();
                let exact = phi.rotate(dt);
                l2(&(&out - &exact))
            })
            .collect();
        let h = 30.0 / 1500.0;
        assert!(errs[0] < 5.0 * (dt.powi(3) + h * h * dt), "{errs:?}");
        assert!(errs[1] < errs[0] / 3.0, "{errs:?}");
    }

    #[test]
    fn linear_flow_is_unitary() {
        let g = StarGrid::new(3, 10.0, 201).unwrap();
        let f = GraphFunction::from_fn(g, |j, x| Complex64::new((-(x - 2.0).powi(2)).exp(), 0.3 * j as f64 * (-(x * x)).exp()));
        for cond in [VertexCondition::delta(-1.0), VertexCondition::Kirchhoff, VertexCondition::DeltaPrimeS { beta: 0.7 }] {
            let prop = Propagator::new(&g, 1.0, &cond, Scheme::StrangSplit, 1e-12, 50).unwrap();
            let mut u = prop.restrict(&f);
            let m0 = prop.mass(&u);
            let rhs = prop.explicit_half(&u, 1e-2);
            u = prop.cayley(1e-2).unwrap().solve(&rhs);
            assert!(((prop.mass(&u) - m0) / m0).abs() < 1e-12);
        }
    }

    #[test]
    fn mass_and_energy_are_conserved_for_all_vertices() {
        let g = StarGrid::new(3, 20.0, 801).unwrap();
        let delta = sample(&build_state(&p(3, 1.0, -1.0), 1.0, 0).unwrap(), &g).unwrap();
        let sym = sample(&kirchhoff_state(&p(3, 1.0, 0.0), 1.0, 0.0).unwrap(), &g).unwrap();
        let mut cfg = EvolutionConfig::new(1e-2, 2.0);
        cfg.record_every = 10;
        for (psi, cond) in [
            (&delta, VertexCondition::delta(-1.0)),
            (&sym, VertexCondition::Kirchhoff),
            (&sym, VertexCondition::DeltaPrimeS { beta: 0.5 }),
        ] {
            let tr = evolve(psi, &p(3, 1.0, 0.0), &cond, &cfg).unwrap();
            assert!(tr.mass_drift() < 1e-12, "{cond:?} {}", tr.mass_drift());
            assert!(tr.energy_drift() < 1e-8, "{cond:?} {}", tr.energy_drift());
            assert_eq!(tr.termination, Termination::Completed);
            assert!(!tr.boundary_flag);
        }
    }

    #[test]
    fn split_scheme_conserves_mass_too() {
        let g = StarGrid::new(3, 20.0, 401).unwrap();
        let psi = sample(&build_state(&p(3, 1.0, -1.0), 1.0, 0).unwrap(), &g).unwrap();
        let mut cfg = EvolutionConfig::new(1e-2, 1.0);
        cfg.scheme = Scheme::StrangSplit;
        let tr = evolve(&psi, &p(3, 1.0, -1.0), &VertexCondition::delta(-1.0), &cfg).unwrap();
        assert!(tr.mass_drift() < 1e-12);
        let phase = tr.final_state.rotate(-1.0);
        assert!(l2(&(&phase - &psi)) < 1e-2);
    }

    #[test]
    fn evolved_states_keep_the_vertex_condition() {
        let g = StarGrid::new(3, 20.0, 801).unwrap();
        let s = build_state(&p(3, 1.0, -1.0), 1.0, 0).unwrap();
        let psi = &sample(&s, &g).unwrap() + &smooth_perturbation(&g, 0.05, 3);
        let tr = evolve(&psi, &p(3, 1.0, -1.0), &VertexCondition::delta(-1.0), &EvolutionConfig::new(1e-2, 1.0)).unwrap();
        // continuity is exact; the flux residual is first order in h at the
        // trapezoid vertex cell
        let r = vertex_residual(&tr.final_state, &VertexCondition::delta(-1.0));
        assert!(r < 0.05, "{r}");
        let v = tr.final_state.vertex_values();
        assert!(v.iter().all(|z| (z - v[0]).norm() == 0.0));
    }

    #[test]
    fn trajectory_bookkeeping() {
        let g = StarGrid::new(3, 20.0, 201).unwrap();
        let psi = sample(&build_state(&p(3, 1.0, -1.0), 1.0, 0).unwrap(), &g).unwrap();
        let mut cfg = EvolutionConfig::new(0.03, 1.0);
        cfg.record_every = 5;
        cfg.snapshot_every = 10;
        let tr = evolve(&psi, &p(3, 1.0, -1.0), &VertexCondition::delta(-1.0), &cfg).unwrap();
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(tr.times.len(), tr.observables.len());
        assert!((tr.times.last().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(tr.snapshots.len(), tr.snapshot_times.len());
        let o = &tr.observables[0];
        assert!((o.edge_mass.iter().sum::<f64>() - o.mass).abs() < 1e-12);
        assert!((o.mass - mass(&psi)).abs() < 1e-12);
    }

    #[test]
    fn travelling_wave_matches_the_exact_solution() {
        let params = p(4, 1.0, 0.0);
        let run = |m: usize, dt: f64| {
            let g = StarGrid::new(4, 25.0, m).unwrap();
            let psi0 = travelling_wave_even_kirchhoff(&params, 1.0, -1.0, 2.0, 0.0, 0.0, &g).unwrap();
            let exact = travelling_wave_even_kirchhoff(&params, 1.0, -1.0, 2.0, 1.0, 0.0, &g).unwrap();
            let tr = evolve(&psi0, &params, &VertexCondition::Kirchhoff, &EvolutionConfig::new(dt, 1.0)).unwrap();
            l2(&(&tr.final_state - &exact)) / l2(&exact)
        };
        let coarse = run(1251, 4e-3);
        let fine = run(2501, 2e-3);
        assert!(coarse < 1e-2, "{coarse}");
        assert!(fine < coarse / 3.0, "{coarse} {fine}");
    }

    #[test]
    fn supercritical_collapse_raises_the_blow_up_signal() {
        let params = p(3, 3.0, 0.0);
        let g = StarGrid::new(3, 10.0, 2001).unwrap();
        let psi = GraphFunction::from_real_fn(g, |_, x| 2.0 * (-(x * x) * 2.0).exp());
        let prop = Propagator::new(&g, 3.0, &VertexCondition::Kirchhoff, Scheme::CrankNicolsonFixedPoint, 1e-12, 50).unwrap();
        let h1_0 = prop.h1_norm(&prop.restrict(&psi));
        let mut cfg = EvolutionConfig::new(2e-5, 1.0);
        cfg.record_every = 100;
        cfg.blowup_threshold = 10.0 * h1_0;
        let tr = evolve(&psi, &params, &VertexCondition::Kirchhoff, &cfg).unwrap();
        assert!(matches!(tr.termination, Termination::BlowUp { .. }), "{:?}", tr.termination);
    }

    #[test]
    fn orbit_distance_examples() {
        let s = build_state(&p(3, 1.0, -1.0), 1.0, 0).unwrap();
        let g = StarGrid::new(3, 20.0, 801).unwrap();
        let phi = sample(&s, &g).unwrap();
        for theta in [0.0, 1.0, 2.5, 4.0, 6.2] {
            for norm in [OrbitNorm::L2, OrbitNorm::Energy] {
                assert!(orbit_distance(&phi.rotate(theta), &s, norm).unwrap() < 1e-6);
            }
        }
        let twice = phi.scale(Complex64::new(2.0, 0.0));
        assert!((orbit_distance(&twice, &s, OrbitNorm::L2).unwrap() - l2(&phi)).abs() < 1e-12);
        let h1 = energy_inner(&phi, &phi).unwrap().re.sqrt();
        assert!((orbit_distance(&twice, &s, OrbitNorm::Energy).unwrap() - h1).abs() < 1e-6 * h1);
        // orthogonal direction: i Phi-independent bump away from the state
        let bump = GraphFunction::from_real_fn(g, |j, x| if j == 1 { (-(x - 12.0).powi(2)).exp() } else { 0.0 });
        let eps = 1e-4;
        let d = orbit_distance(&(&phi + &bump.scale(Complex64::new(eps, 0.0))), &s, OrbitNorm::L2).unwrap();
        assert!((d - eps * l2(&bump)).abs() < 1e-3 * eps * l2(&bump), "{d}");
    }

    #[test]
    fn energy_orbit_distance_matches_closed_form() {
        let g = StarGrid::new(3, 10.0, 201).unwrap();
        let phi = GraphFunction::from_real_fn(g, |_, x| (-x).exp() * (10.0 - x));
        let psi = GraphFunction::from_fn(g, |j, x| Complex64::new(0.4 * (-x).exp(), 0.2 + 0.1 * j as f64) * (10.0 - x) * 0.1);
        let d = orbit_distance_to(&psi, &phi, OrbitNorm::Energy).unwrap();
        let a = energy_inner(&psi, &psi).unwrap().re;
        let b = energy_inner(&phi, &phi).unwrap().re;
        let c = energy_inner(&psi, &phi).unwrap().norm();
        assert!((d - (a + b - 2.0 * c).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn perturbations_are_seeded_and_normalized() {
        let g = StarGrid::new(3, 20.0, 401).unwrap();
        let a = smooth_perturbation(&g, 1e-3, 7);
        let b = smooth_perturbation(&g, 1e-3, 7);
        let c = smooth_perturbation(&g, 1e-3, 8);
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
        assert!((energy_inner(&a, &a).unwrap().re.sqrt() - 1e-3).abs() < 1e-15);
        let v = a.vertex_values();
        assert!(v.iter().all(|z| (z - v[0]).norm() < 1e-18));
    }

    #[test]
    fn unperturbed_probe_stays_on_the_orbit() {
        // The midpoint rule sees |Phi| cos(omega dt / 2) in the nonlinearity,
        // so the only drift left is O(dt^2).
        let g = StarGrid::new(3, 20.0, 801).unwrap();
        let run = |dt: f64| {
            let mut cfg = EvolutionConfig::new(dt, 2.0);
            cfg.record_every = (0.1 / dt).round() as usize;
            orbital_stability_probe(&p(3, 1.0, -1.0), 0, 1.0, 0.0, &g, &cfg, 1).unwrap().max_distance
        };
        let (coarse, fine) = (run(1e-2), run(5e-3));
        assert!(coarse < 1e-4, "{coarse}");
        let ratio = coarse / fine;
        assert!(ratio > 3.5 && ratio < 4.5, "{ratio}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn evolution_is_gauge_covariant(theta in 0.0f64..6.2, seed in 0u64..1000) {
            let g = StarGrid::new(3, 10.0, 101).unwrap();
            let psi = smooth_perturbation(&g, 0.5, seed);
            let params = p(3, 1.0, -1.0);
            let cond = VertexCondition::delta(-1.0);
            let cfg = EvolutionConfig::new(1e-2, 0.2);
            let a = evolve(&psi.rotate(theta), &params, &cond, &cfg).unwrap().final_state;
            let b = evolve(&psi, &params, &cond, &cfg).unwrap().final_state.rotate(theta);
            prop_assert!(l2(&(&a - &b)) < 1e-10);
        }

        #[test]
        fn mass_is_conserved_from_random_data(seed in 0u64..1000, beta in 0.2f64..2.0) {
            let g = StarGrid::new(3, 10.0, 101).unwrap();
            let psi = smooth_perturbation(&g, 1.0, seed);
            for cond in [VertexCondition::delta(-1.0), VertexCondition::DeltaPrimeS { beta }] {
                let tr = evolve(&psi, &p(3, 1.0, 0.0), &cond, &EvolutionConfig::new(1e-2, 0.5)).unwrap();
                prop_assert!(tr.mass_drift() < 1e-12);
            }
        }
    }
}
