//! Linearization about stationary states.
//!
//! Writing `Psi = e^{i omega t}(Phi + W + i Z)` splits the linearized flow
//! into the real operators
//! `L1 = -d^2/dx^2 + omega - (2mu+1)|Phi|^{2mu}` and
//! `L2 = -d^2/dx^2 + omega - |Phi|^{2mu}`
//! acting on `W` and `Z`, coupled as `d/dt (W, Z) = JL (W, Z)` with
//! `JL = [[0, L2], [-L1, 0]]`.
//!
//! All matrices are assembled in the symmetric form
//! `W^{1/2} (H + V) W^{-1/2}` of the discrete Laplacian `H = W^{-1} K`
//! (see [`crate::discrete`]), which shares its spectrum with `H + V`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::discrete::{Laplacian, StarMatrix};
use crate::error::{NlsError, Result};
use crate::graph::{GraphFunction, StarGrid, VertexCondition};
use crate::standing_waves::{branch_threshold, build_state, mass_closed_form, sample, NlsParams, StationaryState};

/// Fewest points per edge accepted by the linearization.
pub const MIN_POINTS: usize = 16;

const EIG_RESIDUAL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    L1,
    L2,
    JL,
}

/// How the amplitude entering the potentials is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileSource {
    /// The closed-form state sampled on the grid.
    Sampled,
    /// The sampled state refined by Newton's method into an exact zero of the
    /// discrete stationary equation. Falls back to `Sampled` for a Kirchhoff
    /// vertex, where translations make the Jacobian singular.
    Discrete,
}

#[derive(Debug, Clone)]
enum Matrix {
    Symmetric(StarMatrix<f64>),
    Hamiltonian { l1: StarMatrix<f64>, l2: StarMatrix<f64> },
}

/// A discretized linearization.
#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    pub kind: OperatorKind,
    pub state: StationaryState,
    pub grid: StarGrid,
    profile: GraphFunction,
    laplacian: Laplacian,
    matrix: Matrix,
}

fn check_grid(state: &StationaryState, grid: &StarGrid) -> Result<()> {
    if grid.n_points() < MIN_POINTS {
        return Err(NlsError::Resolution(format!(
            "linearization needs at least {MIN_POINTS} points per edge, got {}",
            grid.n_points()
        )));
    }
    if grid.n_edges() != state.params.n_edges {
        return Err(NlsError::Shape(format!("state has {} edges, grid has {}", state.params.n_edges, grid.n_edges())));
    }
    Ok(())
}

fn potential(lap: &Laplacian, profile: &[f64], omega: f64, mu: f64, factor: f64) -> Vec<f64> {
    debug_assert_eq!(profile.len(), lap.dim());
    profile.iter().map(|u| omega - factor * u.abs().powf(2.0 * mu)).collect()
}

/// Newton refinement of a sampled stationary state on the discrete problem
/// `H u + omega u - |u|^{2mu} u = 0`.
pub fn discrete_stationary_state(state: &StationaryState, grid: &StarGrid) -> Result<GraphFunction> {
    check_grid(state, grid)?;
    let p = &state.params;
    let lap = Laplacian::new(grid, &VertexCondition::delta(p.alpha))?;
    let sampled = sample(state, grid)?;
    let mut u: Vec<f64> = lap.restrict(&sampled).iter().map(|z| z.re).collect();
    let sqrt_w: Vec<f64> = lap.weights.iter().map(|w| w.sqrt()).collect();
    let k = &lap.stiffness;
    for _ in 0..30 {
        let ku = k.matvec(&u);
        let f: Vec<f64> = (0..u.len())
            .map(|i| ku[i] / lap.weights[i] + (state.omega - u[i].abs().powf(2.0 * p.mu)) * u[i])
            .collect();
        let s1 = lap.symmetric_operator(&potential(&lap, &u, state.omega, p.mu, 2.0 * p.mu + 1.0));
        let rhs: Vec<f64> = f.iter().zip(&sqrt_w).map(|(f, s)| -f * s).collect();
        let y = s1.solve(&rhs)?;
        let mut biggest = 0.0f64;
        for i in 0..u.len() {
            let d = y[i] / sqrt_w[i];
            biggest = biggest.max(d.abs());
            u[i] += d;
        }
        let scale = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if biggest <= 1e-14 * scale {
            let c: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            return Ok(lap.prolong(&c));
        }
    }
    Err(NlsError::Solver { iterations: 30, reason: "Newton refinement of the discrete state did not converge".into() })
}

/// Linearization of the given kind about `state`.
pub fn assemble(kind: OperatorKind, state: &StationaryState, grid: &StarGrid, source: ProfileSource) -> Result<LinearizedOperator> {
    check_grid(state, grid)?;
    let p = &state.params;
    let lap = Laplacian::new(grid, &VertexCondition::delta(p.alpha))?;
    let profile = match source {
        ProfileSource::Discrete if p.alpha != 0.0 => discrete_stationary_state(state, grid)?,
        _ => sample(state, grid)?,
    };
    let u: Vec<f64> = lap.restrict(&profile).iter().map(|z| z.re).collect();
    let l1 = || lap.symmetric_operator(&potential(&lap, &u, state.omega, p.mu, 2.0 * p.mu + 1.0));
    let l2 = || lap.symmetric_operator(&potential(&lap, &u, state.omega, p.mu, 1.0));
    let matrix = match kind {
        OperatorKind::L1 => Matrix::Symmetric(l1()),
        OperatorKind::L2 => Matrix::Symmetric(l2()),
        OperatorKind::JL => Matrix::Hamiltonian { l1: l1(), l2: l2() },
    };
    Ok(LinearizedOperator { kind, state: *state, grid: *grid, profile, laplacian: lap, matrix })
}

pub fn assemble_l1(state: &StationaryState, grid: &StarGrid) -> Result<LinearizedOperator> {
    assemble(OperatorKind::L1, state, grid, ProfileSource::Sampled)
}

pub fn assemble_l2(state: &StationaryState, grid: &StarGrid) -> Result<LinearizedOperator> {
    assemble(OperatorKind::L2, state, grid, ProfileSource::Sampled)
}

/// `JL` about the Newton-refined discrete state, so that the gauge mode is an
/// exact discrete kernel vector of `L2` and the zero eigenvalue of `JL` is not
/// split by discretization error.
pub fn assemble_jl(state: &StationaryState, grid: &StarGrid) -> Result<LinearizedOperator> {
    assemble(OperatorKind::JL, state, grid, ProfileSource::Discrete)
}

/// Eigenvalue with its eigenvector mapped back to grid functions. For `JL`
/// the pair `(w, z)` holds the two components; for `L1`/`L2` only `w` is set.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: Complex64,
    pub w: GraphFunction,
    pub z: Option<GraphFunction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenBackend {
    /// Full dense eigendecomposition.
    Dense,
    /// Inertia bisection plus shifted inverse iteration on the star
    /// factorization (symmetric operators only; `JL` always runs dense).
    Iterative,
}

impl LinearizedOperator {
    /// Number of unknowns of one component.
    pub fn dim(&self) -> usize {
        self.laplacian.dim()
    }

    /// The amplitude the potentials were built from.
    pub fn profile(&self) -> &GraphFunction {
        &self.profile
    }

    pub fn symmetric_matrix(&self) -> Option<&StarMatrix<f64>> {
        match &self.matrix {
            Matrix::Symmetric(m) => Some(m),
            Matrix::Hamiltonian { .. } => None,
        }
    }

    /// Dense matrix: `dim x dim` for `L1`/`L2`, `2 dim x 2 dim` for `JL`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.matrix {
            Matrix::Symmetric(m) => m.to_dense(),
            Matrix::Hamiltonian { l1, l2 } => {
                let n = self.dim();
                let mut a = DMatrix::zeros(2 * n, 2 * n);
                a.view_mut((0, n), (n, n)).copy_from(&l2.to_dense());
                a.view_mut((n, 0), (n, n)).copy_from(&(-l1.to_dense()));
                a
            }
        }
    }

    /// Applies `L1` or `L2` to a grid function (the outer samples are treated
    /// as Dirichlet data and come back as zero).
    pub fn apply(&self, f: &GraphFunction) -> Result<GraphFunction> {
        let Matrix::Symmetric(m) = &self.matrix else {
            return Err(NlsError::Unsupported("apply is defined for L1 and L2".into()));
        };
        if f.grid() != &self.grid {
            return Err(NlsError::Shape("grid function lives on a different grid".into()));
        }
        let w = &self.laplacian.weights;
        let u = self.laplacian.restrict(f);
        let scaled: Vec<Complex64> = u.iter().zip(w).map(|(z, w)| z * w.sqrt()).collect();
        let y = m.to_complex().matvec(&scaled);
        let back: Vec<Complex64> = y.iter().zip(w).map(|(z, w)| z / w.sqrt()).collect();
        Ok(self.laplacian.prolong(&back))
    }

    fn to_function(&self, x: &[f64]) -> GraphFunction {
        let u: Vec<Complex64> = x.iter().zip(&self.laplacian.weights).map(|(v, w)| Complex64::new(v / w.sqrt(), 0.0)).collect();
        self.laplacian.prolong(&u)
    }

    fn to_function_c(&self, x: &[Complex64]) -> GraphFunction {
        let u: Vec<Complex64> = x.iter().zip(&self.laplacian.weights).map(|(v, w)| v / w.sqrt()).collect();
        self.laplacian.prolong(&u)
    }

    /// Size below which an eigenvalue counts as discretization noise:
    /// `10 h^2 max(1, omega)^2`. Rescaling `x -> x / sqrt(omega)` turns the
    /// operator into `omega` times a fixed one sampled at spacing
    /// `h sqrt(omega)`, hence the `omega^2`.
    pub fn spectral_tolerance(&self) -> f64 {
        10.0 * (self.grid.spacing() * self.state.omega.max(1.0)).powi(2)
    }
}

/// Symmetric dense eigendecomposition, eigenvalues ascending.
fn dense_symmetric(m: &StarMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m.to_dense().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

impl StarMatrix<f64> {
    fn gershgorin_bounds(&self) -> (f64, f64) {
        let nv = self.n_vertex();
        let mut radius = vec![0.0; self.dim()];
        let mut diag = vec![0.0; self.dim()];
        for r in 0..nv {
            diag[r] = self.vertex[(r, r)];
            for c in 0..nv {
                if c != r {
                    radius[r] += self.vertex[(r, c)].abs();
                }
            }
        }
        let m = self.chain;
        for j in 0..self.n_edges {
            let v = match self.layout {
                crate::discrete::VertexLayout::Shared => 0,
                crate::discrete::VertexLayout::PerEdge => j,
            };
            let base = nv + j * m;
            radius[v] += self.link[j].abs();
            radius[base] += self.link[j].abs();
            for k in 0..m {
                diag[base + k] = self.diag[j * m + k];
                if k + 1 < m {
                    radius[base + k] += self.off[j * m + k].abs();
                    radius[base + k + 1] += self.off[j * m + k].abs();
                }
            }
        }
        let lo = diag.iter().zip(&radius).map(|(d, r)| d - r).fold(f64::INFINITY, f64::min);
        let hi = diag.iter().zip(&radius).map(|(d, r)| d + r).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// The `i`-th smallest eigenvalue (0-based) by bisection on inertia counts.
fn bisect_eigenvalue(m: &StarMatrix<f64>, i: usize, lo: f64, hi: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    let scale = lo.abs().max(hi.abs());
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if m.count_below(mid) > i {
            b = mid;
        } else {
            a = mid;
        }
        if b - a <= 4.0 * f64::EPSILON * scale {
            break;
        }
    }
    0.5 * (a + b)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }
}

/// Lowest `k` eigenpairs of a symmetric star matrix by inertia bisection and
/// block inverse iteration (one block per cluster of close eigenvalues).
pub fn lowest_eigenpairs(m: &StarMatrix<f64>, k: usize) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = m.dim();
    if k > n {
        return Err(NlsError::Domain(format!("asked for {k} eigenvalues of a {n}x{n} matrix")));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let (lo, hi) = m.gershgorin_bounds();
    let scale = lo.abs().max(hi.abs()).max(1.0);
    let cluster_gap = 1e-9 * scale;
    let mut values: Vec<f64> = (0..k).map(|i| bisect_eigenvalue(m, i, lo, hi)).collect();
    // Extend the last cluster so that degenerate eigenvectors are resolved together.
    while values.len() < n && m.count_below(values[values.len() - 1] + cluster_gap) > values.len() {
        let i = values.len();
        values.push(bisect_eigenvalue(m, i, lo, hi));
    }
    let mut clusters: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] > cluster_gap {
            clusters.push((start, i));
            start = i;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(values.len());
    let mut out = Vec::with_capacity(values.len());
    for (s, e) in clusters {
        let size = e - s;
        let center = values[s..e].iter().sum::<f64>() / size as f64;
        let mut shift = center - 1e-10 * scale;
        let mut block: Vec<Vec<f64>> = (0..size).map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
        let mut converged = false;
        let mut pairs = Vec::new();
        let mut worst = f64::INFINITY;
        for _iter in 0..20 {
            let shifted = m.shifted(-shift);
            let mut next = Vec::with_capacity(size);
            for b in &block {
                let y = match shifted.solve(b) {
                    Ok(y) => y,
                    Err(_) => {
                        shift -= 1e-9 * scale;
                        b.clone()
                    }
                };
                next.push(y);
            }
            // Orthonormalize against earlier clusters and within the block.
            let mut q: Vec<Vec<f64>> = Vec::with_capacity(size);
            for mut v in next {
                orthogonalize(&mut v, &basis);
                orthogonalize(&mut v, &q);
                if normalize(&mut v) == 0.0 {
                    v = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
                    orthogonalize(&mut v, &basis);
                    orthogonalize(&mut v, &q);
                    normalize(&mut v);
                }
                q.push(v);
            }
            // Rayleigh-Ritz on the block.
            let aq: Vec<Vec<f64>> = q.iter().map(|v| m.matvec(v)).collect();
            let small = DMatrix::from_fn(size, size, |r, c| 0.5 * (dot(&q[r], &aq[c]) + dot(&q[c], &aq[r])));
            let eig = small.symmetric_eigen();
            let mut order: Vec<usize> = (0..size).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            pairs.clear();
            worst = 0.0f64;
            let mut rotated = Vec::with_capacity(size);
            for &c in &order {
                let mut v = vec![0.0; n];
                let mut av = vec![0.0; n];
                for r in 0..size {
                    let w = eig.eigenvectors[(r, c)];
                    v.iter_mut().zip(&q[r]).for_each(|(x, y)| *x += w * y);
                    av.iter_mut().zip(&aq[r]).for_each(|(x, y)| *x += w * y);
                }
                let lam = eig.eigenvalues[c];
                let res = av.iter().zip(&v).map(|(a, x)| (a - lam * x).powi(2)).sum::<f64>().sqrt();
                worst = worst.max(res);
                pairs.push((lam, v.clone()));
                rotated.push(v);
            }
            block = rotated;
            if worst <= EIG_RESIDUAL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(NlsError::Solver {
                iterations: 20,
                reason: format!("inverse iteration near {center:e} stalled with residual {worst:e}"),
            });
        }
        for (lam, v) in pairs {
            basis.push(v.clone());
            out.push((lam, v));
        }
    }
    out.truncate(k);
    Ok(out)
}

/// Complex eigenvalues of `JL` sorted by real part, descending (ties by
/// increasing `|Im|`).
pub fn jl_spectrum(op: &LinearizedOperator) -> Result<Vec<Complex64>> {
    if op.kind != OperatorKind::JL {
        return Err(NlsError::Unsupported("jl_spectrum needs a JL operator".into()));
    }
    let a = op.to_dense();
    let mut eigs: Vec<Complex64> = a.complex_eigenvalues().iter().copied().collect();
    if eigs.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(NlsError::Solver { iterations: 0, reason: "Schur iteration produced non-finite eigenvalues".into() });
    }
    eigs.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.abs().total_cmp(&b.im.abs())));
    Ok(eigs)
}

/// Largest distance from any eigenvalue to the nearest partner in each of
/// `-lambda`, `conj lambda` and `-conj lambda`.
pub fn quadruple_symmetry_defect(eigs: &[Complex64]) -> f64 {
    let nearest = |target: Complex64| eigs.iter().map(|z| (z - target).norm()).fold(f64::INFINITY, f64::min);
    eigs.iter()
        .map(|&l| nearest(-l).max(nearest(l.conj())).max(nearest(-l.conj())))
        .fold(0.0, f64::max)
}

fn complex_inverse_iteration(a: &DMatrix<f64>, lambda: Complex64) -> Result<(Complex64, DVector<Complex64>)> {
    let n = a.nrows();
    let ac = a.map(|x| Complex64::new(x, 0.0));
    let scale = a.amax().max(1.0);
    let shift = lambda + Complex64::new(1e-10 * scale, 1e-10 * scale);
    let shifted = &ac - DMatrix::<Complex64>::identity(n, n) * shift;
    let lu = shifted.lu();
    let mut v = DVector::from_fn(n, |i, _| Complex64::new(1.0 + (i % 7) as f64 * 0.1, 0.3 - (i % 5) as f64 * 0.05));
    v /= Complex64::new(v.norm(), 0.0);
    let mut value = lambda;
    for it in 0..10 {
        let mut y = lu.solve(&v).ok_or_else(|| NlsError::Singular("shifted JL matrix is singular".into()))?;
        let nrm = y.norm();
        y /= Complex64::new(nrm, 0.0);
        let ay = &ac * &y;
        value = y.dotc(&ay);
        let res = (&ay - &y * value).norm();
        v = y;
        if res <= EIG_RESIDUAL {
            return Ok((value, v));
        }
        if it == 9 {
            return Err(NlsError::Solver { iterations: 10, reason: format!("JL inverse iteration residual {res:e} near {value}") });
        }
    }
    Ok((value, v))
}

/// The `k` lowest eigenpairs of `L1`/`L2`, or for `JL` the first `k` in
/// order of decreasing real part.
pub fn eig_low(op: &LinearizedOperator, k: usize, backend: EigenBackend) -> Result<Vec<EigenPair>> {
    let n = op.dim();
    match &op.matrix {
        Matrix::Symmetric(m) => {
            if k > n {
                return Err(NlsError::Domain(format!("asked for {k} eigenvalues of a {n}x{n} matrix")));
            }
            let pairs: Vec<(f64, Vec<f64>)> = match backend {
                EigenBackend::Dense => {
                    let (vals, vecs) = dense_symmetric(m);
                    (0..k).map(|i| (vals[i], vecs.column(i).iter().copied().collect())).collect()
                }
                EigenBackend::Iterative => lowest_eigenpairs(m, k)?,
            };
            Ok(pairs
                .into_iter()
                .map(|(l, v)| EigenPair { value: Complex64::new(l, 0.0), w: op.to_function(&v), z: None })
                .collect())
        }
        Matrix::Hamiltonian { .. } => {
            if k > 2 * n {
                return Err(NlsError::Domain(format!("asked for {k} eigenvalues of a {0}x{0} matrix", 2 * n)));
            }
            let eigs = jl_spectrum(op)?;
            let a = op.to_dense();
            let mut out = Vec::with_capacity(k);
            for &lam in eigs.iter().take(k) {
                let (value, v) = complex_inverse_iteration(&a, lam)?;
                let (top, bottom): (Vec<Complex64>, Vec<Complex64>) = (v.rows(0, n).iter().copied().collect(), v.rows(n, n).iter().copied().collect());
                out.push(EigenPair { value, w: op.to_function_c(&top), z: Some(op.to_function_c(&bottom)) });
            }
            Ok(out)
        }
    }
}

/// Expected dimension of `ker L1`: translations of the Kirchhoff family.
fn expected_l1_kernel(state: &StationaryState) -> usize {
    let p = &state.params;
    if p.alpha != 0.0 {
        0
    } else if state.kirchhoff_shift.map_or(true, |a| a == 0.0) {
        p.n_edges - 1
    } else {
        1
    }
}

/// Negative-eigenvalue count of `L1` with its near-zero bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorseReport {
    pub index: usize,
    /// Eigenvalues within `+-tol` of zero.
    pub near_zero: usize,
    pub expected_kernel: usize,
    pub tol: f64,
    pub indeterminate: bool,
}

/// Counts eigenvalues of `L1` below `-10 h^2` from the inertia of the star
/// factorization.
pub fn morse_report(state: &StationaryState, grid: &StarGrid) -> Result<MorseReport> {
    let op = assemble_l1(state, grid)?;
    let m = op.symmetric_matrix().expect("L1 is symmetric");
    let tol = op.spectral_tolerance();
    let index = m.count_below(-tol);
    let near_zero = m.count_below(tol) - index;
    let expected_kernel = expected_l1_kernel(state);
    Ok(MorseReport { index, near_zero, expected_kernel, tol, indeterminate: near_zero != expected_kernel })
}

pub fn morse_index(state: &StationaryState, grid: &StarGrid) -> Result<usize> {
    Ok(morse_report(state, grid)?.index)
}

/// `dM/domega` by a central difference of the closed-form mass with relative
/// step `rel_step`, extrapolated once (Richardson).
pub fn vk_derivative_with_step(params: &NlsParams, j: usize, omega: f64, rel_step: f64) -> Result<f64> {
    let threshold = branch_threshold(params, j);
    let h = rel_step * omega;
    if omega - threshold < 1e-5 || omega - 2.0 * h <= threshold {
        return Err(NlsError::StepSize(format!(
            "omega = {omega} is within 1e-5 of the branch threshold {threshold}"
        )));
    }
    build_state(params, omega, j)?;
    let mass = |w: f64| -> Result<f64> { Ok(mass_closed_form(&build_state(params, w, j)?)) };
    let central = |h: f64| -> Result<f64> { Ok((mass(omega + h)? - mass(omega - h)?) / (2.0 * h)) };
    let coarse = central(h)?;
    let fine = central(0.5 * h)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Vakhitov-Kolokolov slope `dM/domega` with relative step `1e-6`.
pub fn vk_derivative(params: &NlsParams, j: usize, omega: f64) -> Result<f64> {
    vk_derivative_with_step(params, j, omega, 1e-6)
}

/// Root of the VK slope along a branch, located by scan and bisection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VkRoot {
    pub omega_star: f64,
    pub bracket: (f64, f64),
}

pub fn vk_root(params: &NlsParams, j: usize, rel_step: f64) -> Result<VkRoot> {
    let threshold = branch_threshold(params, j);
    // clear of the 1e-5 guard band in vk_derivative_with_step
    let start = if threshold > 0.0 { threshold + 2e-5 + 1e-4 * threshold } else { 1e-3 };
    let slope = |w: f64| vk_derivative_with_step(params, j, w, rel_step);
    let mut lo = start;
    let mut s_lo = slope(lo)?;
    let mut hi = lo;
    let mut found = false;
    for _ in 0..400 {
        hi = lo * 1.05 + 1e-3;
        let s_hi = slope(hi)?;
        if s_hi.signum() != s_lo.signum() {
            found = true;
            break;
        }
        lo = hi;
        s_lo = s_hi;
    }
    if !found {
        return Err(NlsError::Solver { iterations: 400, reason: format!("no VK sign change found up to omega = {hi}") });
    }
    let bracket = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s = slope(mid)?;
        if s.signum() == s_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(VkRoot { omega_star: 0.5 * (lo + hi), bracket })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    Unstable,
    Undecided,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Undecided => "undecided",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub omega: f64,
    pub j: usize,
    pub verdict: Verdict,
    pub morse: MorseReport,
    /// `|lambda_min(L2)|`.
    pub l2_kernel_residual: f64,
    pub l2_second_eigenvalue: f64,
    /// `||L2 Phi|| / ||Phi||` for the sampled state.
    pub l2_phi_residual: f64,
    pub vk_derivative: f64,
    pub mass: f64,
    /// `false` for excited states, whose verdict is only indicative.
    pub in_theorem_scope: bool,
}

/// Spectral conditions plus the VK sign.
pub fn classify_stability(params: &NlsParams, j: usize, omega: f64, grid: &StarGrid) -> Result<StabilityReport> {
    let state = build_state(params, omega, j)?;
    let morse = morse_report(&state, grid)?;
    let l2 = assemble_l2(&state, grid)?;
    let low = eig_low(&l2, 2, EigenBackend::Iterative)?;
    let tol = l2.spectral_tolerance();
    let l2_kernel_residual = low[0].value.re.abs();
    let l2_second_eigenvalue = low[1].value.re;
    let phi = l2.profile().clone();
    let l2_phi = l2.apply(&phi)?;
    let w = &l2.laplacian;
    let l2_phi_residual = (w.mass(&w.restrict(&l2_phi)) / w.mass(&w.restrict(&phi))).sqrt();
    let vk = vk_derivative(params, j, omega)?;
    let mass = mass_closed_form(&state);
    let spectral_ok = morse.index == 1 && !morse.indeterminate && l2_kernel_residual < tol && l2_second_eigenvalue > tol;
    let verdict = if !spectral_ok || vk.abs() < 1e-8 * mass {
        Verdict::Undecided
    } else if vk > 0.0 {
        Verdict::Stable
    } else {
        Verdict::Unstable
    };
    Ok(StabilityReport {
        omega,
        j,
        verdict,
        morse,
        l2_kernel_residual,
        l2_second_eigenvalue,
        l2_phi_residual,
        vk_derivative: vk,
        mass,
        in_theorem_scope: j == 0 && params.alpha < 0.0,
    })
}
