//! Closed-form stationary states of the focusing power NLS on a star graph
//! with a delta (or Kirchhoff) vertex.
//!
//! On each edge the amplitude is a piece of the half-line soliton
//! `phi(a; x) = [(mu+1) omega]^{1/2mu} sech^{1/mu}(mu sqrt(omega) (x - a))`.
//! A state with `j` bumps carries `phi(a; .)` on edges `0..j` and the tail
//! `phi(-a; .)` on the remaining ones; the shift `a` is fixed by the flux
//! condition `tanh(mu sqrt(omega) a) (2j - N) = alpha / sqrt(omega)`.

use num_complex::Complex64;

use crate::error::{NlsError, Result};
use crate::graph::{GraphFunction, StarGrid};
use crate::quadrature::profile_integral;

/// Model parameters: `N` edges, nonlinearity `-|z|^{2 mu}`, delta strength `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlsParams {
    pub n_edges: usize,
    pub mu: f64,
    pub alpha: f64,
}

impl NlsParams {
    pub fn new(n_edges: usize, mu: f64, alpha: f64) -> Result<Self> {
        if n_edges < 2 {
            return Err(NlsError::Domain(format!("need N >= 2 edges, got {n_edges}")));
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(NlsError::Domain(format!("nonlinearity exponent must be positive, got {mu}")));
        }
        if !alpha.is_finite() {
            return Err(NlsError::Domain(format!("alpha must be finite, got {alpha}")));
        }
        Ok(Self { n_edges, mu, alpha })
    }

    pub fn is_kirchhoff(&self) -> bool {
        self.alpha == 0.0
    }
}

/// Branch structure at a given vertex strength.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BumpCounts {
    /// Admissible bump counts for `alpha != 0`.
    Branches(Vec<usize>),
    /// Kirchhoff vertex: odd `N` only admits the symmetric state, even `N` a
    /// one-parameter family of shifts.
    Kirchhoff { odd: bool },
}

pub fn admissible_bump_counts(params: &NlsParams) -> BumpCounts {
    let n = params.n_edges;
    if params.alpha < 0.0 {
        BumpCounts::Branches((0..=(n - 1) / 2).collect())
    } else if params.alpha > 0.0 {
        BumpCounts::Branches((n / 2 + 1..=n).collect())
    } else {
        BumpCounts::Kirchhoff { odd: n % 2 == 1 }
    }
}

/// Frequency threshold `alpha^2 / (N - 2j)^2` of the `j`-bump branch.
pub fn branch_threshold(params: &NlsParams, j: usize) -> f64 {
    if params.alpha == 0.0 {
        return 0.0;
    }
    let d = params.n_edges as f64 - 2.0 * j as f64;
    params.alpha * params.alpha / (d * d)
}

/// A closed-form stationary state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryState {
    pub params: NlsParams,
    pub omega: f64,
    pub n_bumps: usize,
    /// Shift `a >= 0` of the delta branches.
    pub shift: f64,
    /// Shift of the even-N Kirchhoff family (any real value).
    pub kirchhoff_shift: Option<f64>,
}

/// Half-line soliton piece centred at `a`.
pub fn half_soliton_profile(omega: f64, mu: f64, a: f64, x: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(NlsError::Domain(format!("omega must be positive, got {omega}")));
    }
    if !(mu > 0.0) {
        return Err(NlsError::Domain(format!("mu must be positive, got {mu}")));
    }
    Ok(profile(omega, mu, a, x))
}

#[inline]
pub(crate) fn profile(omega: f64, mu: f64, a: f64, x: f64) -> f64 {
    let amp = ((mu + 1.0) * omega).powf(0.5 / mu);
    let z = mu * omega.sqrt() * (x - a);
    // sech^{1/mu}(z) = (2 e^{-|z|} / (1 + e^{-2|z|}))^{1/mu}, stable for large |z|
    let e = (-z.abs()).exp();
    let sech = 2.0 * e / (1.0 + e * e);
    amp * sech.powf(1.0 / mu)
}

/// The `j`-bump state `Phi_omega^j` of a delta vertex (`alpha != 0`).
pub fn build_state(params: &NlsParams, omega: f64, j: usize) -> Result<StationaryState> {
    if params.alpha == 0.0 {
        return kirchhoff_state(params, omega, 0.0);
    }
    let BumpCounts::Branches(allowed) = admissible_bump_counts(params) else { unreachable!() };
    if !allowed.contains(&j) {
        return Err(NlsError::Branch { j, n_edges: params.n_edges, alpha: params.alpha });
    }
    let threshold = branch_threshold(params, j);
    if !(omega > threshold) {
        return Err(NlsError::Frequency { omega, threshold });
    }
    let sq = omega.sqrt();
    let ratio = params.alpha / ((2.0 * j as f64 - params.n_edges as f64) * sq);
    let shift = ratio.atanh() / (params.mu * sq);
    Ok(StationaryState { params: *params, omega, n_bumps: j, shift, kirchhoff_shift: None })
}

/// Stationary state of a Kirchhoff vertex: unique (`a = 0`) for odd `N`, a
/// family indexed by `a` for even `N`.
pub fn kirchhoff_state(params: &NlsParams, omega: f64, a: f64) -> Result<StationaryState> {
    if params.alpha != 0.0 {
        return Err(NlsError::Constraint(format!("Kirchhoff family needs alpha = 0, got {}", params.alpha)));
    }
    if !(omega > 0.0) {
        return Err(NlsError::Frequency { omega, threshold: 0.0 });
    }
    let n = params.n_edges;
    if n % 2 == 1 {
        if a != 0.0 {
            return Err(NlsError::Constraint(format!("odd N={n} Kirchhoff star only admits a = 0, got {a}")));
        }
        return Ok(StationaryState { params: *params, omega, n_bumps: 0, shift: 0.0, kirchhoff_shift: None });
    }
    Ok(StationaryState { params: *params, omega, n_bumps: n / 2, shift: a.abs(), kirchhoff_shift: Some(a) })
}

impl StationaryState {
    /// Centre of the soliton piece on `edge`.
    pub fn center(&self, edge: usize) -> f64 {
        match self.kirchhoff_shift {
            Some(a) => {
                if edge < self.params.n_edges / 2 {
                    -a
                } else {
                    a
                }
            }
            None => {
                if edge < self.n_bumps {
                    self.shift
                } else {
                    -self.shift
                }
            }
        }
    }

    pub fn value(&self, edge: usize, x: f64) -> f64 {
        profile(self.omega, self.params.mu, self.center(edge), x)
    }

    /// Value at the vertex, common to all edges.
    pub fn vertex_value(&self) -> f64 {
        self.value(0, 0.0)
    }

    pub fn is_ground_state(&self) -> bool {
        self.params.alpha < 0.0 && self.n_bumps == 0
    }
}

/// Samples the state on a grid (real and positive).
pub fn sample(state: &StationaryState, grid: &StarGrid) -> Result<GraphFunction> {
    if grid.n_edges() != state.params.n_edges {
        return Err(NlsError::Shape(format!(
            "state has {} edges, grid has {}",
            state.params.n_edges,
            grid.n_edges()
        )));
    }
    let f = GraphFunction::from_real_fn(*grid, |j, x| state.value(j, x));
    let l = grid.edge_length();
    let tail = (0..grid.n_edges()).map(|j| state.value(j, l)).fold(0.0, f64::max);
    if tail > 1e-10 {
        log::warn!("stationary state is {tail:e} at x = L = {l}; the truncated edges are too short");
    }
    Ok(f)
}

fn mass_prefactor(mu: f64, omega: f64) -> f64 {
    (mu + 1.0).powf(1.0 / mu) / mu * omega.powf(1.0 / mu - 0.5)
}

/// `I(mu) = int_0^1 (1 - t^2)^{1/mu - 1} dt`.
pub fn bump_integral(mu: f64) -> f64 {
    profile_integral(0.0, mu)
}

/// Closed-form mass of a stationary state.
///
/// Uses `M = C(mu) omega^{1/mu - 1/2} [ (N - 2j) J(c) + 2j I(mu) ]` with
/// `c = |alpha| / (|N - 2j| sqrt(omega))`; for repulsive branches
/// (`2j > N`) the same bookkeeping gives `(N - 2j) J(c) + 2j I`, with a
/// negative first coefficient.
pub fn mass_closed_form(state: &StationaryState) -> f64 {
    let p = &state.params;
    let mu = p.mu;
    let pref = mass_prefactor(mu, state.omega);
    let n = p.n_edges as f64;
    if state.kirchhoff_shift.is_some() {
        // N/2 tails and N/2 bumps pair up into N/2 full line solitons.
        return pref * n * bump_integral(mu);
    }
    let j = state.n_bumps as f64;
    let d = n - 2.0 * j;
    if p.alpha == 0.0 {
        return pref * n * bump_integral(mu);
    }
    let c = p.alpha.abs() / (d.abs() * state.omega.sqrt());
    let tails = profile_integral(c, mu);
    pref * (d * tails + 2.0 * j * bump_integral(mu))
}

/// Closed-form energy of the `j`-bump cubic state of mass `m`.
pub fn energy_closed_form_cubic(params: &NlsParams, m: f64, j: usize) -> Result<f64> {
    if params.mu != 1.0 {
        return Err(NlsError::Unsupported(format!("closed-form energy needs mu = 1, got {}", params.mu)));
    }
    if params.alpha > 0.0 {
        return Err(NlsError::Unsupported("closed-form energy is for attractive vertices (alpha <= 0)".into()));
    }
    if params.alpha < 0.0 {
        let BumpCounts::Branches(allowed) = admissible_bump_counts(params) else { unreachable!() };
        if !allowed.contains(&j) {
            return Err(NlsError::Branch { j, n_edges: params.n_edges, alpha: params.alpha });
        }
    }
    let n = params.n_edges as f64;
    let a = params.alpha.abs();
    let d = 2.0 * j as f64 - n;
    Ok(-(m + 2.0 * a).powi(3) / (24.0 * n * n) + a.powi(3) / (3.0 * d * d))
}

/// Common frequency `(m + 2|alpha|)^2 / 4N^2` at which every cubic branch has mass `m`.
pub fn cubic_omega_star(params: &NlsParams, m: f64) -> Result<f64> {
    if params.mu != 1.0 {
        return Err(NlsError::Unsupported(format!("cubic frequency needs mu = 1, got {}", params.mu)));
    }
    if !(m > 0.0) {
        return Err(NlsError::Domain(format!("mass must be positive, got {m}")));
    }
    let n = params.n_edges as f64;
    Ok((m + 2.0 * params.alpha.abs()).powi(2) / (4.0 * n * n))
}

/// Frequency at which the `j`-bump branch has mass `m`, by bisection on the
/// closed-form mass.
pub fn solve_omega_for_mass(params: &NlsParams, j: usize, m: f64) -> Result<f64> {
    if !(m > 0.0) {
        return Err(NlsError::Domain(format!("mass must be positive, got {m}")));
    }
    if params.alpha == 0.0 {
        // Pure power law in omega.
        let unit = mass_closed_form(&kirchhoff_state(params, 1.0, 0.0)?);
        let expo = 1.0 / params.mu - 0.5;
        if expo == 0.0 {
            return Err(NlsError::NoSolution { mass: m, min_mass: unit });
        }
        return Ok((m / unit).powf(1.0 / expo));
    }
    let threshold = branch_threshold(params, j);
    let mass_at = |w: f64| -> Result<f64> { Ok(mass_closed_form(&build_state(params, w, j)?)) };
    let lo0 = threshold * (1.0 + 1e-12);
    let min_mass = mass_at(lo0)?;
    if m <= min_mass {
        return Err(NlsError::NoSolution { mass: m, min_mass });
    }
    let mut lo = lo0;
    let mut hi = threshold * 10.0;
    let mut grown = 0;
    while mass_at(hi)? < m {
        lo = hi;
        hi *= 10.0;
        grown += 1;
        if grown > 30 {
            return Err(NlsError::NoSolution { mass: m, min_mass });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass_at(mid)? < m {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Mass threshold `m*` of the constrained energy minimization (attractive vertex).
///
/// For `mu = 2` the returned bound is `min{m*, pi sqrt(3) N / 4}`.
pub fn critical_mass(params: &NlsParams) -> Result<f64> {
    if params.alpha >= 0.0 {
        return Err(NlsError::Domain(format!("critical mass needs alpha < 0, got {}", params.alpha)));
    }
    let mu = params.mu;
    let n = params.n_edges as f64;
    let m_star = 2.0 * (mu + 1.0).powf(1.0 / mu) / mu
        * (params.alpha.abs() / n).powf((2.0 - mu) / mu)
        * bump_integral(mu);
    if mu == 2.0 {
        return Ok(m_star.min(std::f64::consts::PI * 3f64.sqrt() * n / 4.0));
    }
    Ok(m_star)
}

/// Exact travelling wave on an even Kirchhoff star at time `t`.
///
/// Edge `i` and edge `i + N/2` form a line with coordinate `y = -x` on the
/// first half and `y = x` on the second; the soliton sits at `y = a + v t`
/// and carries the Galilei phase `e^{i(v y / 2 - v^2 t / 4 + omega t + theta)}`.
pub fn travelling_wave_even_kirchhoff(
    params: &NlsParams,
    omega: f64,
    a: f64,
    v: f64,
    t: f64,
    theta: f64,
    grid: &StarGrid,
) -> Result<GraphFunction> {
    if params.n_edges % 2 == 1 {
        return Err(NlsError::Unsupported(format!("travelling waves need an even number of edges, got {}", params.n_edges)));
    }
    let state = kirchhoff_state(params, omega, a + v * t)?;
    if grid.n_edges() != params.n_edges {
        return Err(NlsError::Shape(format!("state has {} edges, grid has {}", params.n_edges, grid.n_edges())));
    }
    let half = params.n_edges / 2;
    Ok(GraphFunction::from_fn(*grid, |j, x| {
        let y = if j < half { -x } else { x };
        let phase = 0.5 * v * y - 0.25 * v * v * t + omega * t + theta;
        Complex64::from_polar(state.value(j, x), phase)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{energy, stationary_residual};
    use crate::graph::{vertex_residual, Quadrature, VertexCondition};
    use proptest::prelude::*;

    fn p(n: usize, mu: f64, alpha: f64) -> NlsParams {
        NlsParams::new(n, mu, alpha).unwrap()
    }

    #[test]
    fn profile_examples() {
        assert!((half_soliton_profile(1.0, 1.0, 0.0, 0.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((half_soliton_profile(4.0, 1.0, 1.0, 1.0).unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-14);
        let mut prev = f64::INFINITY;
        for k in 0..200 {
            let v = half_soliton_profile(1.0, 1.0, 0.0, k as f64 * 0.5).unwrap();
            assert!(v < prev && v >= 0.0);
            prev = v;
        }
        assert!(prev < 1e-40);
        assert!(half_soliton_profile(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(half_soliton_profile(1.0, -1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn bump_count_examples() {
        assert_eq!(admissible_bump_counts(&p(3, 1.0, -1.0)), BumpCounts::Branches(vec![0, 1]));
        assert_eq!(admissible_bump_counts(&p(2, 1.0, -1.0)), BumpCounts::Branches(vec![0]));
        assert_eq!(admissible_bump_counts(&p(4, 1.0, 1.0)), BumpCounts::Branches(vec![3, 4]));
        assert_eq!(admissible_bump_counts(&p(4, 1.0, 0.0)), BumpCounts::Kirchhoff { odd: false });
    }

    #[test]
    fn bump_counts_match_sign_pattern_enumeration() {
        // Oracle: j bumps are admissible iff the sign sum 2j - N is nonzero
        // and has the sign of alpha.
        for n in 2..=7usize {
            for alpha in [-1.0, 1.0] {
                let brute: Vec<usize> = (0..=n)
                    .filter(|&j| {
                        let s = 2 * j as i64 - n as i64;
                        s != 0 && (s as f64).signum() == alpha
                    })
                    .collect();
                let BumpCounts::Branches(got) = admissible_bump_counts(&p(n, 1.0, alpha)) else { panic!() };
                assert_eq!(got, brute);
                assert_eq!(got.len(), (n + 1) / 2);
            }
        }
    }

    #[test]
    fn shift_examples() {
        let s = build_state(&p(3, 1.0, -1.0), 1.0, 0).unwrap();
        assert!((s.shift - (1.0f64 / 3.0).atanh()).abs() < 1e-15);
        assert!((s.shift - 0.346_573_590_279_972_6).abs() < 1e-12);
        // tanh condition cross-check
        assert!(((s.shift).tanh() * -3.0 - (-1.0)).abs() < 1e-14);
        let tiny = build_state(&p(3, 1.0, -1e-12), 1.0, 0).unwrap();
        assert!(tiny.shift < 1e-12);
        assert!(matches!(build_state(&p(3, 1.0, -1.0), 0.9, 1), Err(NlsError::Frequency { .. })));
        assert!(matches!(build_state(&p(3, 1.0, -1.0), 2.0, 2), Err(NlsError::Branch { .. })));
    }

    #[test]
    fn kirchhoff_examples() {
        let k3 = kirchhoff_state(&p(3, 1.0, 0.0), 1.0, 0.0).unwrap();
        for j in 0..3 {
            assert!((k3.value(j, 0.0) - 2f64.sqrt()).abs() < 1e-15);
        }
        assert!(matches!(kirchhoff_state(&p(3, 1.0, 0.0), 1.0, 0.1), Err(NlsError::Constraint(_))));
        let k4 = kirchhoff_state(&p(4, 1.0, 0.0), 1.0, 0.7).unwrap();
        let g = StarGrid::new(4, 30.0, 3001).unwrap();
        let f = sample(&k4, &g).unwrap();
        assert!(vertex_residual(&f, &VertexCondition::Kirchhoff) < 1e-3);
    }

    #[test]
    fn sampled_tail_state_is_continuous() {
        let s = build_state(&p(3, 1.0, -1.0), 1.0, 0).unwrap();
        let g = StarGrid::new(3, 30.0, 1001).unwrap();
        let f = sample(&s, &g).unwrap();
        let expected = 2f64.sqrt() / (s.shift).cosh();
        for v in f.vertex_values() {
            assert!((v.re - expected).abs() < 1e-14);
        }
        assert!(matches!(sample(&s, &StarGrid::new(4, 30.0, 101).unwrap()), Err(NlsError::Shape(_))));
    }

    #[test]
    fn vertex_residual_converges_second_order() {
        let params = p(3, 1.0, -1.0);
        for j in [0, 1] {
            let s = build_state(&params, 2.0, j).unwrap();
            let r = |m: usize| {
                let g = StarGrid::new(3, 25.0, m).unwrap();
                vertex_residual(&sample(&s, &g).unwrap(), &VertexCondition::delta(-1.0))
            };
            let ratio = r(1001) / r(2001);
            assert!(ratio > 3.5 && ratio < 4.5, "j={j} ratio {ratio}");
        }
    }

    #[test]
    fn stationary_residual_is_second_order() {
        let params = p(4, 1.5, -0.8);
        let s = build_state(&params, 1.3, 1).unwrap();
        let r = |m: usize| {
            let g = StarGrid::new(4, 30.0, m).unwrap();
            stationary_residual(&sample(&s, &g).unwrap(), s.omega, &params).interior
        };
        let ratio = r(1501) / r(3001);
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }

    #[test]
    fn mass_examples() {
        let k = kirchhoff_state(&p(3, 1.0, 0.0), 1.0, 0.0).unwrap();
        assert!((mass_closed_form(&k) - 6.0).abs() < 1e-14);
        let g0 = build_state(&p(3, 1.0, -1.0), 1.0, 0).unwrap();
        assert!((mass_closed_form(&g0) - 4.0).abs() < 1e-14);
        let near = build_state(&p(3, 1.0, -1.0), (1.0 / 9.0) * (1.0 + 1e-10), 0).unwrap();
        assert!(mass_closed_form(&near) < 1e-5);
    }

    #[test]
    fn closed_form_mass_matches_quadrature() {
        for (n, mu, alpha, j, omega) in [
            (3, 1.0, -1.0, 0, 1.0),
            (3, 0.5, -1.0, 1, 1.5),
            (4, 2.0, -0.5, 1, 0.4),
            (5, 1.0, 2.0, 4, 1.2),
            (4, 1.5, 1.0, 3, 0.9),
        ] {
            let params = p(n, mu, alpha);
            let s = build_state(&params, omega, j).unwrap();
            let g = StarGrid::with_spacing(n, 40.0 / omega.sqrt(), 2e-3).unwrap();
            let quad = sample(&s, &g).unwrap().integrate_power(2.0, Quadrature::Gregory);
            let closed = mass_closed_form(&s);
            assert!(((quad - closed) / closed).abs() < 1e-9, "{n} {mu} {alpha} {j}: {quad} vs {closed}");
        }
    }

    #[test]
    fn cubic_energy_examples() {
        let params = p(3, 1.0, -1.0);
        for m in [1.0, 2.0, 4.0] {
            let e0 = energy_closed_form_cubic(&params, m, 0).unwrap();
            let ground = -m * (m * m + 6.0 * m + 12.0) / (24.0 * 9.0);
            assert!((e0 - ground).abs() < 1e-14);
        }
        assert!(energy_closed_form_cubic(&params, 4.0, 0).unwrap() < energy_closed_form_cubic(&params, 4.0, 1).unwrap());
        let zero = p(3, 1.0, 0.0);
        assert!((energy_closed_form_cubic(&zero, 2.0, 0).unwrap() + 8.0 / 216.0).abs() < 1e-15);
        assert!(matches!(energy_closed_form_cubic(&p(3, 2.0, -1.0), 1.0, 0), Err(NlsError::Unsupported(_))));
    }

    #[test]
    fn cubic_energy_matches_sampled_energy() {
        let params = p(3, 1.0, -1.0);
        let omega = cubic_omega_star(&params, 4.0).unwrap();
        assert!((omega - 1.0).abs() < 1e-15);
        let s = build_state(&params, omega, 0).unwrap();
        let g = StarGrid::new(3, 30.0, 6001).unwrap();
        let e = energy(&sample(&s, &g).unwrap(), &params);
        assert!((e + 4.0 * 52.0 / 216.0).abs() < 1e-4, "{e}");
    }

    #[test]
    fn omega_star_examples() {
        assert!((cubic_omega_star(&p(3, 1.0, -1.0), 2.0).unwrap() - 4.0 / 9.0).abs() < 1e-15);
        assert!((cubic_omega_star(&p(3, 1.0, 0.0), 6.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((cubic_omega_star(&p(3, 1.0, -1.0), 1e-12).unwrap() - 1.0 / 9.0).abs() < 1e-11);
        assert!(cubic_omega_star(&p(3, 1.0, -1.0), 0.0).is_err());
    }

    #[test]
    fn bisection_inverts_mass() {
        let params = p(3, 1.0, -1.0);
        assert!((solve_omega_for_mass(&params, 0, 4.0).unwrap() - 1.0).abs() < 1e-11);
        // j = 1 branch of N=3, alpha=-1 has minimal mass 4 (at omega = 1).
        match solve_omega_for_mass(&params, 1, 3.0) {
            Err(NlsError::NoSolution { min_mass, .. }) => assert!((min_mass - 4.0).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
        let kir = p(3, 1.0, 0.0);
        assert!((solve_omega_for_mass(&kir, 0, 6.0).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn critical_mass_examples() {
        assert!((critical_mass(&p(3, 1.0, -1.0)).unwrap() - 4.0 / 3.0).abs() < 1e-14);
        for alpha in [-0.5, -1.0, -2.0] {
            assert!((critical_mass(&p(3, 1.0, alpha)).unwrap() - 4.0 * alpha.abs() / 3.0).abs() < 1e-14);
        }
        let m2 = critical_mass(&p(3, 2.0, -1.0)).unwrap();
        let raw = 2.0 * 3f64.sqrt() / 2.0 * std::f64::consts::FRAC_PI_2;
        assert!((m2 - raw.min(std::f64::consts::PI * 3f64.sqrt() * 3.0 / 4.0)).abs() < 1e-13);
        assert!(critical_mass(&p(3, 1.0, 0.0)).is_err());
    }

    #[test]
    fn travelling_wave_limits() {
        let params = p(4, 1.0, 0.0);
        let g = StarGrid::new(4, 20.0, 401).unwrap();
        let standing = sample(&kirchhoff_state(&params, 1.0, 0.5).unwrap(), &g).unwrap();
        let t = 0.7;
        let w = travelling_wave_even_kirchhoff(&params, 1.0, 0.5, 0.0, t, 0.0, &g).unwrap();
        let expected = standing.rotate(t);
        assert!((&w - &expected).values().iter().all(|z| z.norm() < 1e-14));
        let w0 = travelling_wave_even_kirchhoff(&params, 1.0, 0.5, 2.0, 0.0, 0.0, &g).unwrap();
        for j in 0..4 {
            for (k, z) in w0.edge(j).iter().enumerate() {
                let x = g.x(k);
                let y = if j < 2 { -x } else { x };
                let expect = Complex64::from_polar(standing.edge(j)[k].re, y);
                assert!((z - expect).norm() < 1e-14);
            }
        }
        assert!(travelling_wave_even_kirchhoff(&p(3, 1.0, 0.0), 1.0, 0.0, 1.0, 0.0, 0.0, &StarGrid::new(3, 5.0, 11).unwrap()).is_err());
        // The travelling wave satisfies the Kirchhoff flux condition.
        let fine = StarGrid::new(4, 20.0, 4001).unwrap();
        let w1 = travelling_wave_even_kirchhoff(&params, 1.0, 0.5, 2.0, 0.3, 0.0, &fine).unwrap();
        assert!(vertex_residual(&w1, &VertexCondition::Kirchhoff) < 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn mass_increases_along_branches(n in 2usize..6, mu in 0.3f64..2.0, alpha in -2.0f64..-0.2, jsel in 0usize..3) {
            let params = p(n, mu, alpha);
            let j = jsel.min((n - 1) / 2);
            let thr = branch_threshold(&params, j);
            let mut prev = 0.0;
            for k in 1..=100 {
                let w = thr * (1.0 + 0.05 * k as f64);
                let m = mass_closed_form(&build_state(&params, w, j).unwrap());
                prop_assert!(m > prev);
                prev = m;
            }
        }

        #[test]
        fn bisection_matches_cubic_formula(n in 2usize..6, alpha in -2.0f64..-0.1, m in 0.05f64..10.0) {
            let params = p(n, 1.0, alpha);
            let star = cubic_omega_star(&params, m).unwrap();
            let w = solve_omega_for_mass(&params, 0, m).unwrap();
            prop_assert!((w - star).abs() <= 1e-10 * star);
        }

        #[test]
        fn cubic_energies_increase_with_bumps(n in 3usize..6, alpha in prop::sample::select(vec![-0.5, -1.0, -2.0]), m in 0.1f64..20.0) {
            let params = p(n, 1.0, alpha);
            let mut prev = f64::NEG_INFINITY;
            for j in 0..=(n - 1) / 2 {
                let e = energy_closed_form_cubic(&params, m, j).unwrap();
                prop_assert!(e > prev);
                prev = e;
            }
        }
    }
}
