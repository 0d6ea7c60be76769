//! Randomized cross-module checks: sampled states against the discrete
//! operators, the linearization, and the propagator.

use nlsgraph::evolution::{evolve, EvolutionConfig};
use nlsgraph::functionals::stationary_residual;
use nlsgraph::graph::vertex_residual;
use nlsgraph::stability::{assemble_l2, morse_index, vk_derivative};
use nlsgraph::standing_waves::{admissible_bump_counts, branch_threshold, BumpCounts, build_state, sample};
use nlsgraph::{GraphFunction, NlsParams, StarGrid, StationaryState, VertexCondition};
use num_complex::Complex64;
use proptest::prelude::*;

// Room for the pieces plus a long tail past the furthest centre.
fn edge_length(state: &StationaryState) -> f64 {
    let centre = (0..state.params.n_edges).map(|e| state.center(e)).fold(0.0, f64::max);
    centre + 24.0 / state.omega.sqrt()
}

fn grid(state: &StationaryState, h: f64) -> StarGrid {
    StarGrid::with_spacing(state.params.n_edges, edge_length(state), h).unwrap()
}

// Largest |f'''| of the closed-form edge profile on [0, b], by central differences.
fn max_third_derivative(state: &StationaryState, edge: usize, b: f64) -> f64 {
    let d = 1e-3;
    let f = |x: f64| state.value(edge, x);
    (0..=40)
        .map(|k| {
            let x = b * k as f64 / 40.0;
            ((f(x + 2.0 * d) - 2.0 * f(x + d) + 2.0 * f(x - d) - f(x - 2.0 * d)) / (2.0 * d * d * d)).abs()
        })
        .fold(0.0, f64::max)
}

prop_compose! {
    // An attractive or repulsive delta star with one admissible branch and a
    // frequency a little above that branch's threshold.
    fn branch()(n in 2usize..6, mu in 0.5f64..2.5, alpha in prop_oneof![-2.0f64..-0.2, 0.2f64..2.0],
                pick in 0usize..8, gap in 0.2f64..2.5)
        -> Option<(NlsParams, usize, f64)> {
        let params = NlsParams::new(n, mu, alpha).unwrap();
        let BumpCounts::Branches(bumps) = admissible_bump_counts(&params) else {
            return None;
        };
        let j = bumps[pick % bumps.len()];
        let omega = branch_threshold(&params, j) + gap;
        Some((params, j, omega))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sampled_states_solve_the_discrete_equation_to_second_order(b in branch()) {
        let Some((params, j, omega)) = b else { return Ok(()) };
        let state = build_state(&params, omega, j).unwrap();
        let h = 0.02 / omega.sqrt().max(1.0);
        let r = |h: f64| {
            let f = sample(&state, &grid(&state, h)).unwrap();
            let res = stationary_residual(&f, omega, &params);
            (res.interior, vertex_residual(&f, &VertexCondition::delta(params.alpha)))
        };
        let (i1, v1) = r(h);
        let (i2, v2) = r(h / 2.0);
        prop_assert!(i1 / i2 > 3.5 && i1 / i2 < 4.5, "interior ratio {}", i1 / i2);
        // The one-sided stencil misses f'(0) by at most h^2 max |f'''| on [0, 2h].
        // The edges' errors can cancel, so bound the flux mismatch rather than
        // asking for a ratio.
        for (h, v) in [(h, v1), (h / 2.0, v2)] {
            let bound: f64 = (0..params.n_edges).map(|e| h * h * max_third_derivative(&state, e, 2.0 * h)).sum();
            prop_assert!(v <= 1.05 * bound, "h {h}: residual {v} above {bound}");
        }
    }

    #[test]
    fn l2_annihilates_sampled_states_to_second_order(b in branch()) {
        let Some((params, j, omega)) = b else { return Ok(()) };
        let state = build_state(&params, omega, j).unwrap();
        let h = 0.04 / omega.sqrt().max(1.0);
        let r = |h: f64| {
            let op = assemble_l2(&state, &grid(&state, h)).unwrap();
            let phi = op.profile().clone();
            let out = op.apply(&phi).unwrap();
            // interior nodes only; the vertex rows carry the coupling
            let interior = |f: &GraphFunction| -> f64 {
                (0..f.grid().n_edges()).flat_map(|e| f.edge(e)[2..].iter().map(|z| z.norm_sqr()).collect::<Vec<_>>()).sum::<f64>()
            };
            (interior(&out) / interior(&phi)).sqrt()
        };
        let ratio = r(h) / r(h / 2.0);
        prop_assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn ground_state_morse_index_does_not_depend_on_the_grid(
        n in 2usize..6, mu in 0.5f64..3.0, alpha in -2.0f64..-0.2, omega in 0.3f64..4.0,
    ) {
        let params = NlsParams::new(n, mu, alpha).unwrap();
        let omega = omega.max(branch_threshold(&params, 0) + 0.1);
        let state = build_state(&params, omega, 0).unwrap();
        for h in [1e-2, 5e-3] {
            prop_assert_eq!(morse_index(&state, &grid(&state, h)).unwrap(), 1);
        }
    }

    #[test]
    fn cubic_ground_states_have_increasing_mass(n in 2usize..8, alpha in -3.0f64..-0.1) {
        let params = NlsParams::new(n, 1.0, alpha).unwrap();
        let start = branch_threshold(&params, 0) * 1.01 + 1e-3;
        for k in 0..50 {
            let omega = start + 0.2 * k as f64;
            let d = vk_derivative(&params, 0, omega).unwrap();
            prop_assert!(d > 0.0, "omega {omega}: {d}");
        }
    }
}

#[test]
fn propagation_keeps_the_vertex_condition() {
    // a pulse driven into the vertex of a delta star
    let r = |m: usize| {
        let g = StarGrid::new(3, 20.0, m).unwrap();
        let pulse = GraphFunction::from_fn(g, |e, x| {
            let x0 = if e == 0 { 4.0 } else { 12.0 };
            Complex64::new(0.0, -2.0 * x).exp() * (-(x - x0) * (x - x0)).exp() * if e == 0 { 1.5 } else { 0.1 }
        });
        let params = NlsParams::new(3, 1.0, -1.0).unwrap();
        let cond = VertexCondition::delta(-1.0);
        let mut cfg = EvolutionConfig::new(2e-3, 2.0);
        cfg.record_every = 1000;
        let traj = evolve(&pulse, &params, &cond, &cfg).unwrap();
        vertex_residual(&traj.final_state, &cond)
    };
    let (coarse, fine) = (r(1001), r(2001));
    assert!(fine < 1e-2, "residual {fine}");
    assert!(coarse / fine > 3.0, "ratio {}", coarse / fine);
}
