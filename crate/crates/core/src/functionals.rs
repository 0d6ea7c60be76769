//! Mass, energy, action and Nehari functionals, and the discrete residual of
//! the stationary equation.

use num_complex::Complex64;

use crate::graph::{vertex_residual, GraphFunction, Quadrature, StarGrid, VertexCondition};
use crate::standing_waves::{profile, NlsParams};

const VERTEX_MISMATCH_WARN: f64 = 1e-6;

/// `M[Psi] = ||Psi||^2`.
pub fn mass(f: &GraphFunction) -> f64 {
    f.integrate_power(2.0, Quadrature::Trapezoid)
}

/// Vertex value used by the point-interaction terms: the mean over edges,
/// with a warning when the edges disagree.
pub(crate) fn vertex_value(f: &GraphFunction) -> Complex64 {
    let vals = f.vertex_values();
    let mean = vals.iter().sum::<Complex64>() / vals.len() as f64;
    let spread = vals.iter().map(|v| (v - vals[0]).norm()).fold(0.0, f64::max);
    if spread > VERTEX_MISMATCH_WARN {
        log::warn!("vertex values differ across edges by {spread:e}; using their mean");
    }
    mean
}

fn kinetic(f: &GraphFunction) -> f64 {
    f.derivative().integrate_power(2.0, Quadrature::Trapezoid)
}

fn potential(f: &GraphFunction, mu: f64) -> f64 {
    f.integrate_power(2.0 * mu + 2.0, Quadrature::Trapezoid)
}

/// `E = 1/2 ||Psi'||^2 - 1/(2mu+2) ||Psi||_{2mu+2}^{2mu+2} + alpha/2 |psi(0)|^2`.
pub fn energy(f: &GraphFunction, params: &NlsParams) -> f64 {
    energy_with_condition(f, params.mu, &VertexCondition::delta(params.alpha))
}

/// Energy with the point-interaction term of an arbitrary delta or
/// delta'_s vertex. For delta'_s the boundary term is
/// `1/2 Psi(0)^* Lambda Psi(0)` with `Lambda = (N I - J) / beta`.
pub fn energy_with_condition(f: &GraphFunction, mu: f64, cond: &VertexCondition) -> f64 {
    let bulk = 0.5 * kinetic(f) - potential(f, mu) / (2.0 * mu + 2.0);
    match cond.normalized() {
        VertexCondition::Delta { alpha } => {
            if alpha == 0.0 {
                bulk
            } else {
                bulk + 0.5 * alpha * vertex_value(f).norm_sqr()
            }
        }
        VertexCondition::DeltaPrimeS { beta } => {
            let v = f.vertex_values();
            let n = v.len() as f64;
            let total: Complex64 = v.iter().sum();
            let quad = n * v.iter().map(|z| z.norm_sqr()).sum::<f64>() - total.norm_sqr();
            bulk + 0.5 * quad / beta
        }
        _ => bulk,
    }
}

/// `S_omega = E + omega/2 M`.
pub fn action(f: &GraphFunction, omega: f64, params: &NlsParams) -> f64 {
    energy(f, params) + 0.5 * omega * mass(f)
}

/// `I_omega = ||Phi'||^2 - ||Phi||_{2mu+2}^{2mu+2} + omega ||Phi||^2 + alpha |phi(0)|^2`.
pub fn nehari(f: &GraphFunction, omega: f64, params: &NlsParams) -> f64 {
    let mut v = kinetic(f) - potential(f, params.mu) + omega * mass(f);
    if params.alpha != 0.0 {
        v += params.alpha * vertex_value(f).norm_sqr();
    }
    v
}

/// Value of the action restricted to the Nehari manifold,
/// `mu/(2mu+2) ||Phi||_{2mu+2}^{2mu+2}`.
pub fn nehari_action(f: &GraphFunction, params: &NlsParams) -> f64 {
    params.mu / (2.0 * params.mu + 2.0) * potential(f, params.mu)
}

/// Residual of `-f'' + omega f - |f|^{2mu} f = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryResidual {
    /// L2 norm over interior nodes (three-point Laplacian).
    pub interior: f64,
    /// Vertex-condition mismatch for `Delta(alpha)`.
    pub vertex: f64,
}

pub fn stationary_residual(f: &GraphFunction, omega: f64, params: &NlsParams) -> StationaryResidual {
    let grid = f.grid();
    let m = grid.n_points();
    let h = grid.spacing();
    let mut acc = 0.0;
    for j in 0..grid.n_edges() {
        let u = f.edge(j);
        for k in 1..m - 1 {
            let lap = (u[k - 1] - 2.0 * u[k] + u[k + 1]) / (h * h);
            let nl = u[k].norm().powf(2.0 * params.mu) * u[k];
            let r = -lap + omega * u[k] - nl;
            acc += h * r.norm_sqr();
        }
    }
    StationaryResidual {
        interior: acc.sqrt(),
        vertex: vertex_residual(f, &VertexCondition::delta(params.alpha)),
    }
}

/// Runaway trial state on a Kirchhoff star: a full soliton on the line made
/// of edges 0 and 1 (centred at distance `s` out along edge 0) and the
/// matching tail `phi(-s; .)` on every other edge.
pub fn runaway_state(params: &NlsParams, omega: f64, s: f64, grid: &StarGrid) -> GraphFunction {
    GraphFunction::from_real_fn(*grid, |j, x| {
        let center = if j == 0 { s } else { -s };
        profile(omega, params.mu, center, x)
    })
}
