use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nlsgraph::evolution::{evolve_with, orbit_distance_to, smooth_perturbation, EvolutionConfig, OrbitNorm, Propagator, Termination};
use nlsgraph::functionals::{action, energy, nehari, stationary_residual};
use nlsgraph::graph::vertex_residual;
use nlsgraph::scattering::{run_scattering, ScatteringSetup};
use nlsgraph::stability::{assemble_jl, classify_stability, jl_spectrum};
use nlsgraph::standing_waves::{
    admissible_bump_counts, build_state, kirchhoff_state, mass_closed_form, sample, solve_omega_for_mass,
    travelling_wave_even_kirchhoff, BumpCounts,
};
use nlsgraph::{GraphFunction, NlsError, NlsParams, Quadrature, StationaryState, VertexCondition};
use num_complex::Complex64;

use crate::config::{ExperimentConfig, InitialData, VertexKind};

/// Largest dense JL matrix the CLI will diagonalize.
const MAX_JL_DIM: usize = 4000;

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Completed,
    BlowUp { t: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub status: Status,
    /// Header and row of the scatter summary, for sweeps.
    pub summary: Option<(Vec<String>, Vec<String>)>,
}

impl Outcome {
    fn done() -> Self {
        Self { status: Status::Completed, summary: None }
    }
}

pub fn num(x: f64) -> String {
    // adding 0.0 turns -0 into +0
    format!("{:.16e}", x + 0.0)
}

fn writer(dir: &Path, name: &str) -> Result<csv::Writer<fs::File>> {
    let path = dir.join(name);
    csv::Writer::from_path(&path).with_context(|| format!("cannot create {}", path.display()))
}

fn state_for(params: &NlsParams, omega: f64, j: usize, a: Option<f64>) -> nlsgraph::Result<StationaryState> {
    if params.alpha == 0.0 {
        kirchhoff_state(params, omega, a.unwrap_or(0.0))
    } else {
        build_state(params, omega, j)
    }
}

fn shift(state: &StationaryState) -> f64 {
    state.kirchhoff_shift.unwrap_or(state.shift)
}

pub fn stationary(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let block = cfg.stationary.as_ref().ok_or_else(|| anyhow!("the config has no stationary block"))?;
    if cfg.model.vertex == VertexKind::DeltaPrimeS {
        return Err(NlsError::Unsupported("closed-form standing waves are available for delta and Kirchhoff vertices".into()).into());
    }
    let params = cfg.params()?;
    let grid = cfg.grid()?;
    let cond = cfg.vertex();
    let branches = match (block.j, admissible_bump_counts(&params)) {
        (Some(j), _) => vec![j],
        (None, BumpCounts::Branches(b)) => b,
        (None, BumpCounts::Kirchhoff { .. }) => vec![0],
    };
    let mut w = writer(out, "states.csv")?;
    w.write_record([
        "j",
        "omega",
        "a",
        "mass_closed_form",
        "mass_quadrature",
        "energy",
        "action",
        "nehari_residual",
        "stationary_residual",
        "vertex_residual",
    ])?;
    let mut rows = 0;
    for j in branches {
        let found = match (block.omega, block.mass) {
            (Some(omega), _) => state_for(&params, omega, j, block.a),
            (None, Some(m)) => solve_omega_for_mass(&params, j, m).and_then(|omega| state_for(&params, omega, j, block.a)),
            (None, None) => unreachable!("validated"),
        };
        let state = match found {
            Ok(s) => s,
            Err(e) if block.j.is_none() => {
                log::warn!("skipping branch j = {j}: {e}");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let f = sample(&state, &grid)?;
        let omega = state.omega;
        w.write_record([
            j.to_string(),
            num(omega),
            num(shift(&state)),
            num(mass_closed_form(&state)),
            num(f.integrate_power(2.0, Quadrature::Gregory)),
            num(energy(&f, &params)),
            num(action(&f, omega, &params)),
            num(nehari(&f, omega, &params)),
            num(stationary_residual(&f, omega, &params).interior),
            num(vertex_residual(&f, &cond)),
        ])?;
        rows += 1;
    }
    w.flush()?;
    if rows == 0 {
        bail!("no admissible stationary state for these parameters");
    }
    Ok(Outcome::done())
}

pub fn stability(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let block = cfg.stability.as_ref().ok_or_else(|| anyhow!("the config has no stability block"))?;
    if cfg.model.vertex == VertexKind::DeltaPrimeS {
        return Err(NlsError::Unsupported("stability analysis is available for delta and Kirchhoff vertices".into()).into());
    }
    let params = cfg.params()?;
    let grid = cfg.grid()?;
    let mut w = writer(out, "stability.csv")?;
    w.write_record(["omega", "morse_index", "l2_kernel_residual", "l2_second_eigenvalue", "vk_derivative", "verdict", "note"])?;
    let mut jl = if block.jl_spectrum {
        let mut jw = writer(out, "jl_spectrum.csv")?;
        jw.write_record(["omega", "index", "re", "im"])?;
        Some(jw)
    } else {
        None
    };
    for &omega in &block.omega_sweep {
        let report = match classify_stability(&params, block.j, omega, &grid) {
            Ok(r) => r,
            Err(NlsError::Frequency { threshold, .. }) => {
                let note = format!("skipped: omega is not above the branch threshold {threshold}");
                w.write_record([num(omega), String::new(), String::new(), String::new(), String::new(), "skipped".into(), note])?;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let note = if report.in_theorem_scope { "" } else { "excited state: verdict is indicative only" };
        w.write_record([
            num(omega),
            report.morse.index.to_string(),
            num(report.l2_kernel_residual),
            num(report.l2_second_eigenvalue),
            num(report.vk_derivative),
            report.verdict.as_str().to_string(),
            note.to_string(),
        ])?;
        if let Some(jw) = jl.as_mut() {
            let state = build_state(&params, omega, block.j)?;
            let op = assemble_jl(&state, &grid)?;
            if 2 * op.dim() > MAX_JL_DIM {
                bail!("jl_spectrum uses a dense eigensolver; the grid gives {} unknowns, at most {MAX_JL_DIM} are allowed", 2 * op.dim());
            }
            for (i, z) in jl_spectrum(&op)?.iter().enumerate() {
                jw.write_record([num(omega), i.to_string(), num(z.re), num(z.im)])?;
            }
        }
    }
    w.flush()?;
    if let Some(mut jw) = jl {
        jw.flush()?;
    }
    Ok(Outcome::done())
}

type Reference = Box<dyn Fn(f64) -> GraphFunction>;

fn initial_data(cfg: &ExperimentConfig, initial: &InitialData, seed: Option<u64>) -> Result<(GraphFunction, Option<Reference>)> {
    let params = cfg.params()?;
    let grid = cfg.grid()?;
    Ok(match *initial {
        InitialData::StandingWave { omega, j, a } => {
            let phi = sample(&state_for(&params, omega, j, a)?, &grid)?;
            let r = phi.clone();
            (phi, Some(Box::new(move |_| r.clone())))
        }
        InitialData::PerturbedStandingWave { omega, j, size } => {
            let seed = seed.ok_or_else(|| anyhow!("perturbed_standing_wave needs a seed (config field seed or --seed)"))?;
            let phi = sample(&state_for(&params, omega, j, None)?, &grid)?;
            let psi = &phi + &smooth_perturbation(&grid, size, seed);
            (psi, Some(Box::new(move |_| phi.clone())))
        }
        InitialData::TravellingWave { omega, a, v, theta } => {
            if !matches!(cfg.vertex(), VertexCondition::Kirchhoff) && cfg.vertex().delta_strength() != Some(0.0) {
                bail!("travelling waves need a Kirchhoff vertex");
            }
            let psi = travelling_wave_even_kirchhoff(&params, omega, a, v, 0.0, theta, &grid)?;
            (psi, Some(Box::new(move |t| travelling_wave_even_kirchhoff(&params, omega, a, v, t, theta, &grid).unwrap())))
        }
        InitialData::Gaussian { edge, center, width, amplitude, velocity } => {
            if edge >= grid.n_edges() {
                bail!("gaussian edge {edge} does not exist on a star with {} edges", grid.n_edges());
            }
            if !(width > 0.0) {
                bail!("gaussian width must be positive");
            }
            let psi = GraphFunction::from_fn(grid, |j, x| {
                if j == edge {
                    let z = (x - center) / width;
                    Complex64::from_polar(amplitude * (-z * z).exp(), 0.5 * velocity * x)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            });
            (psi, None)
        }
    })
}

pub fn evolve(cfg: &ExperimentConfig, out: &Path, seed: Option<u64>) -> Result<Outcome> {
    let block = cfg.evolve.as_ref().ok_or_else(|| anyhow!("the config has no evolve block"))?;
    let params = cfg.params()?;
    let grid = cfg.grid()?;
    let cond = cfg.vertex();
    let mut config = EvolutionConfig::new(block.dt, block.t_end);
    config.scheme = block.scheme.into();
    config.record_every = block.record_every.unwrap_or(1);
    config.snapshot_every = block.snapshot_every.unwrap_or(0);
    if let Some(b) = block.blowup_threshold {
        config.blowup_threshold = b;
    }
    if let Some(t) = block.fixedpoint_tol {
        config.fixedpoint_tol = t;
    }
    if let Some(n) = block.fixedpoint_max_iter {
        config.fixedpoint_max_iter = n;
    }
    config.validate()?;
    let (psi0, reference) = initial_data(cfg, &block.initial, seed)?;
    let prop = Propagator::from_config(&grid, params.mu, &cond, &config)?;
    let mut distances = Vec::new();
    let traj = evolve_with(&prop, &psi0, &config, |t, psi| {
        if let Some(r) = &reference {
            distances.push(orbit_distance_to(psi, &r(t), OrbitNorm::L2));
        }
    })?;

    let n = grid.n_edges();
    let mut w = writer(out, "trace.csv")?;
    let mut header = vec!["t".to_string(), "total_mass".into(), "energy".into()];
    header.extend((1..=n).map(|j| format!("mass_e{j}")));
    header.extend(["vertex_abs".to_string(), "h1_norm".into()]);
    if reference.is_some() {
        header.push("orbit_distance".into());
    }
    w.write_record(&header)?;
    for (i, o) in traj.observables.iter().enumerate() {
        let mut row = vec![num(o.t), num(o.mass), num(o.energy)];
        row.extend(o.edge_mass.iter().map(|&m| num(m)));
        row.extend([num(o.vertex_modulus), num(o.h1)]);
        if let Some(d) = distances.get(i) {
            row.push(num(*d.as_ref().map_err(|e| anyhow!("{e}"))?));
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let xs = grid.coordinates();
    for (t, snap) in traj.snapshot_times.iter().zip(&traj.snapshots) {
        let mut sw = writer(out, &format!("snap_{t:.6}.csv"))?;
        let mut header = vec!["x".to_string()];
        for j in 1..=n {
            header.push(format!("re_{j}"));
            header.push(format!("im_{j}"));
        }
        sw.write_record(&header)?;
        for (k, &x) in xs.iter().enumerate() {
            let mut row = vec![num(x)];
            for j in 0..n {
                let z = snap.edge(j)[k];
                row.push(num(z.re));
                row.push(num(z.im));
            }
            sw.write_record(&row)?;
        }
        sw.flush()?;
    }
    if traj.boundary_flag {
        log::warn!("mass reached the far ends of the edges; enlarge graph.edge_length");
    }
    let status = match traj.termination {
        Termination::Completed => Status::Completed,
        Termination::BlowUp { t, .. } => Status::BlowUp { t },
    };
    Ok(Outcome { status, summary: None })
}

pub fn scatter(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let block = cfg.scatter.as_ref().ok_or_else(|| anyhow!("the config has no scatter block"))?;
    let params = cfg.params()?;
    let cond = cfg.vertex();
    let mut setup = match cfg.explicit_grid()? {
        Some(grid) => {
            let dt = block.dt.unwrap_or(grid.spacing() / (2.0 * block.v));
            ScatteringSetup::new(params, cond, block.v, block.x0, block.delta_exp, block.t_log, grid, dt)?
        }
        None => {
            if params.mu != 1.0 {
                return Err(NlsError::Setup(format!("scattering is set up for the cubic equation, got mu = {}", params.mu)).into());
            }
            let mut s = ScatteringSetup::with_defaults(params.n_edges, cond, block.v, block.x0, block.delta_exp, block.t_log)?;
            if let Some(dt) = block.dt {
                s.dt = dt;
            }
            s
        }
    };
    if let Some(r) = block.record_interval {
        if !(r > 0.0) {
            bail!("scatter.record_interval must be positive");
        }
        setup.record_interval = r;
    }
    setup.validate()?;
    let rep = run_scattering(&setup)?;
    let n = params.n_edges;

    let mut w = writer(out, "scatter.csv")?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|j| format!("r{j}")));
    header.extend(["dist_pre".to_string(), "dist_S".into(), "dist_out".into()]);
    w.write_record(&header)?;
    let opt = |d: Option<f64>| d.map(num).unwrap_or_default();
    for (t, r) in rep.trace_times.iter().zip(&rep.trace_ratios) {
        let mut row = vec![num(*t)];
        row.extend(r.iter().map(|&x| num(x)));
        match rep.checkpoints.iter().find(|c| c.t == *t) {
            Some(c) => row.extend([opt(c.dist_pre), opt(c.dist_interaction), opt(c.dist_out)]),
            None => row.extend([String::new(), String::new(), String::new()]),
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut header: Vec<String> = ["v", "t1", "t2", "t3", "R_lin_re", "R_lin_im", "T_lin_re", "T_lin_im"].map(String::from).to_vec();
    header.extend((1..=n).map(|j| format!("r{j}_t3")));
    header.push("boundary_warning".into());
    let mut row = vec![num(rep.v), num(rep.t1), num(rep.t2), num(rep.t3), num(rep.r_lin.re), num(rep.r_lin.im), num(rep.t_lin.re), num(rep.t_lin.im)];
    row.extend(rep.final_ratios.iter().map(|&x| num(x)));
    row.push(u8::from(rep.boundary_flag).to_string());
    let mut sw = writer(out, "scatter_summary.csv")?;
    sw.write_record(&header)?;
    sw.write_record(&row)?;
    sw.flush()?;
    Ok(Outcome { status: Status::Completed, summary: Some((header, row)) })
}
