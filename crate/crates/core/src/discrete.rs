//! Finite-difference Laplacians on a star graph and the matrices built on
//! them.
//!
//! Unknowns are the interior samples `1..M-2` of every edge (the outer end
//! carries a homogeneous Dirichlet condition) plus the vertex. A delta-type
//! vertex shares a single unknown across edges; a delta'_s vertex keeps one
//! unknown per edge coupled through a Robin matrix
//! `psi'(0) = Lambda psi(0)`, `Lambda = (N I - J) / beta`.
//!
//! The Laplacian is stored in its symmetric "stiffness" form `K` with the
//! trapezoid mass weights `W` alongside, so that `H = W^{-1} K`. Every
//! matrix has the same star sparsity: one tridiagonal chain per edge hanging
//! off a small dense vertex block, which is factorized by eliminating each
//! chain from its far end toward the vertex (no fill-in).

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{NlsError, Result};
use crate::graph::{GraphFunction, StarGrid, VertexCondition};

const PIVOT_FLOOR: f64 = 1e-290;

/// How the vertex samples of a [`GraphFunction`] map to unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexLayout {
    Shared,
    PerEdge,
}

/// Symmetric matrix with star-graph sparsity.
#[derive(Debug, Clone)]
pub struct StarMatrix<T> {
    pub(crate) n_edges: usize,
    pub(crate) chain: usize,
    pub(crate) layout: VertexLayout,
    /// Dense block on the vertex unknowns (1x1 or NxN).
    pub(crate) vertex: DMatrix<T>,
    /// Chain diagonals, `n_edges * chain`.
    pub(crate) diag: Vec<T>,
    /// `off[j*chain + k]` couples chain nodes `k` and `k+1` (last entry unused).
    pub(crate) off: Vec<T>,
    /// Coupling between the vertex unknown of edge `j` and its first chain node.
    pub(crate) link: Vec<T>,
}

impl<T: ComplexField<RealField = f64> + Copy> StarMatrix<T> {
    pub fn dim(&self) -> usize {
        self.vertex.nrows() + self.n_edges * self.chain
    }

    pub fn n_vertex(&self) -> usize {
        self.vertex.nrows()
    }

    fn vertex_of(&self, j: usize) -> usize {
        match self.layout {
            VertexLayout::Shared => 0,
            VertexLayout::PerEdge => j,
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let nv = self.n_vertex();
        let m = self.chain;
        let mut y = vec![T::zero(); self.dim()];
        for r in 0..nv {
            let mut acc = T::zero();
            for c in 0..nv {
                acc += self.vertex[(r, c)] * x[c];
            }
            y[r] = acc;
        }
        for j in 0..self.n_edges {
            let v = self.vertex_of(j);
            let base = nv + j * m;
            let l = self.link[j];
            y[v] += l * x[base];
            for k in 0..m {
                let mut acc = self.diag[j * m + k] * x[base + k];
                if k == 0 {
                    acc += l * x[v];
                } else {
                    acc += self.off[j * m + k - 1] * x[base + k - 1];
                }
                if k + 1 < m {
                    acc += self.off[j * m + k] * x[base + k + 1];
                }
                y[base + k] = acc;
            }
        }
        y
    }

    /// Adds `s` to every diagonal entry.
    pub fn shifted(&self, s: T) -> Self {
        let mut out = self.clone();
        for r in 0..out.n_vertex() {
            out.vertex[(r, r)] += s;
        }
        for d in out.diag.iter_mut() {
            *d += s;
        }
        out
    }

    /// Far-end-to-vertex elimination. Returns the effective chain pivots,
    /// their reciprocals and the vertex Schur complement. An exactly vanishing
    /// pivot is replaced by a tiny negative number (the usual Sturm-count
    /// convention) and flagged.
    fn eliminate(&self) -> (Vec<T>, Vec<T>, DMatrix<T>, bool) {
        let m = self.chain;
        let mut piv = vec![T::zero(); self.n_edges * m];
        let mut inv = vec![T::zero(); self.n_edges * m];
        let mut schur = self.vertex.clone();
        let mut degenerate = false;
        let mut guard = |p: T| {
            if p.modulus_squared() == 0.0 {
                degenerate = true;
                T::from_real(-PIVOT_FLOOR)
            } else {
                p
            }
        };
        for j in 0..self.n_edges {
            let d = &self.diag[j * m..(j + 1) * m];
            let e = &self.off[j * m..(j + 1) * m];
            let p = &mut piv[j * m..(j + 1) * m];
            let q = &mut inv[j * m..(j + 1) * m];
            p[m - 1] = guard(d[m - 1]);
            q[m - 1] = T::one() / p[m - 1];
            for k in (0..m - 1).rev() {
                p[k] = guard(d[k] - e[k] * e[k] * q[k + 1]);
                q[k] = T::one() / p[k];
            }
            let v = self.vertex_of(j);
            let l = self.link[j];
            schur[(v, v)] -= l * l * q[0];
        }
        (piv, inv, schur, degenerate)
    }

    /// Factorizes the matrix for repeated solves.
    pub fn factor(&self) -> Result<StarFactor<T>> {
        let (_, inv, schur, degenerate) = self.eliminate();
        if degenerate || inv.iter().any(|q| !q.modulus_squared().is_finite()) {
            return Err(NlsError::Singular("zero pivot in star elimination".into()));
        }
        let schur_inv = if schur.nrows() == 1 {
            if schur[(0, 0)].modulus_squared() == 0.0 {
                return Err(NlsError::Singular("vertex Schur complement vanishes".into()));
            }
            DMatrix::from_element(1, 1, T::one() / schur[(0, 0)])
        } else {
            schur.try_inverse().ok_or_else(|| NlsError::Singular("vertex Schur complement is singular".into()))?
        };
        Ok(StarFactor {
            n_edges: self.n_edges,
            chain: self.chain,
            layout: self.layout,
            lower: (0..self.off.len()).map(|i| if (i + 1) % self.chain == 0 { T::zero() } else { self.off[i] * inv[i + 1] }).collect(),
            link: self.link.clone(),
            inv,
            schur_inv,
        })
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        Ok(self.factor()?.solve(b))
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let n = self.dim();
        let nv = self.n_vertex();
        let m = self.chain;
        let mut a = DMatrix::from_element(n, n, T::zero());
        for r in 0..nv {
            for c in 0..nv {
                a[(r, c)] = self.vertex[(r, c)];
            }
        }
        for j in 0..self.n_edges {
            let v = self.vertex_of(j);
            let base = nv + j * m;
            a[(v, base)] = self.link[j];
            a[(base, v)] = self.link[j];
            for k in 0..m {
                a[(base + k, base + k)] = self.diag[j * m + k];
                if k + 1 < m {
                    a[(base + k, base + k + 1)] = self.off[j * m + k];
                    a[(base + k + 1, base + k)] = self.off[j * m + k];
                }
            }
        }
        a
    }
}

impl StarMatrix<f64> {
    /// Number of eigenvalues strictly below `sigma` (Sylvester's law of
    /// inertia applied to the star elimination).
    pub fn count_below(&self, sigma: f64) -> usize {
        let shifted = self.shifted(-sigma);
        let (piv, _, schur, _) = shifted.eliminate();
        let mut count = piv.iter().filter(|&&p| p < 0.0).count();
        if schur.nrows() == 1 {
            if schur[(0, 0)] < 0.0 {
                count += 1;
            }
        } else {
            let sym = (&schur + schur.transpose()) * 0.5;
            count += sym.symmetric_eigenvalues().iter().filter(|&&l| l < 0.0).count();
        }
        count
    }

    pub fn to_complex(&self) -> StarMatrix<Complex64> {
        let c = |x: &f64| Complex64::new(*x, 0.0);
        StarMatrix {
            n_edges: self.n_edges,
            chain: self.chain,
            layout: self.layout,
            vertex: self.vertex.map(|x| Complex64::new(x, 0.0)),
            diag: self.diag.iter().map(c).collect(),
            off: self.off.iter().map(c).collect(),
            link: self.link.iter().map(c).collect(),
        }
    }
}

/// Elimination of a [`StarMatrix`]: reciprocal chain pivots and the
/// inverse vertex Schur complement.
#[derive(Debug, Clone)]
pub struct StarFactor<T> {
    n_edges: usize,
    chain: usize,
    layout: VertexLayout,
    /// `off[k] / pivot[k+1]`, the multipliers of both sweeps.
    lower: Vec<T>,
    link: Vec<T>,
    inv: Vec<T>,
    schur_inv: DMatrix<T>,
}

impl<T: ComplexField<RealField = f64> + Copy> StarFactor<T> {
    pub fn dim(&self) -> usize {
        self.schur_inv.nrows() + self.n_edges * self.chain
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let nv = self.schur_inv.nrows();
        let m = self.chain;
        let vertex_of = |j: usize| match self.layout {
            VertexLayout::Shared => 0,
            VertexLayout::PerEdge => j,
        };
        // Forward sweep on the right-hand side, from the far end inward.
        let mut r = b.to_vec();
        for j in 0..self.n_edges {
            let base = nv + j * m;
            let l = &self.lower[j * m..(j + 1) * m];
            let rj = &mut r[base..base + m];
            for k in (0..m - 1).rev() {
                let t = l[k] * rj[k + 1];
                rj[k] -= t;
            }
        }
        let mut rv = DVector::from_fn(nv, |i, _| r[i]);
        for j in 0..self.n_edges {
            rv[vertex_of(j)] -= self.link[j] * r[nv + j * m] * self.inv[j * m];
        }
        let xv = &self.schur_inv * rv;
        let mut x = vec![T::zero(); self.dim()];
        x[..nv].copy_from_slice(xv.as_slice());
        for j in 0..self.n_edges {
            let base = nv + j * m;
            let l = &self.lower[j * m..(j + 1) * m];
            let q = &self.inv[j * m..(j + 1) * m];
            let rj = &r[base..base + m];
            let xj_v = x[vertex_of(j)];
            let xj = &mut x[base..base + m];
            for k in 0..m {
                xj[k] = rj[k] * q[k];
            }
            xj[0] -= self.link[j] * xj_v * q[0];
            for k in 0..m - 1 {
                let t = l[k] * xj[k];
                xj[k + 1] -= t;
            }
        }
        x
    }
}

/// Stiffness matrix `K` and trapezoid weights `W` of the vertex-coupled
/// Laplacian, `H = W^{-1} K`.
#[derive(Debug, Clone)]
pub struct Laplacian {
    pub grid: StarGrid,
    pub stiffness: StarMatrix<f64>,
    pub weights: Vec<f64>,
}

impl Laplacian {
    pub fn new(grid: &StarGrid, cond: &VertexCondition) -> Result<Self> {
        let n = grid.n_edges();
        let m_pts = grid.n_points();
        if m_pts < 4 {
            return Err(NlsError::Resolution(format!("need at least 4 points per edge, got {m_pts}")));
        }
        let h = grid.spacing();
        let chain = m_pts - 2;
        let (layout, vertex, vweight) = match cond.normalized() {
            VertexCondition::Delta { alpha } => {
                let v = DMatrix::from_element(1, 1, n as f64 / h + alpha);
                (VertexLayout::Shared, v, vec![0.5 * n as f64 * h])
            }
            VertexCondition::DeltaPrimeS { beta } => {
                let nf = n as f64;
                let v = DMatrix::from_fn(n, n, |r, c| {
                    let lam = (if r == c { nf - 1.0 } else { -1.0 }) / beta;
                    lam + if r == c { 1.0 / h } else { 0.0 }
                });
                (VertexLayout::PerEdge, v, vec![0.5 * h; n])
            }
            VertexCondition::GeneralU(_) => {
                return Err(NlsError::Unsupported("discrete dynamics support delta, Kirchhoff and delta'_s vertices".into()))
            }
            VertexCondition::Kirchhoff => unreachable!(),
        };
        let stiffness = StarMatrix {
            n_edges: n,
            chain,
            layout,
            vertex,
            diag: vec![2.0 / h; n * chain],
            off: vec![-1.0 / h; n * chain],
            link: vec![-1.0 / h; n],
        };
        let mut weights = vweight;
        weights.extend(std::iter::repeat(h).take(n * chain));
        Ok(Self { grid: *grid, stiffness, weights })
    }

    pub fn layout(&self) -> VertexLayout {
        self.stiffness.layout
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Unknown vector of a grid function (vertex samples averaged for a
    /// shared vertex; the Dirichlet end is dropped).
    pub fn restrict(&self, f: &GraphFunction) -> Vec<Complex64> {
        let n = self.grid.n_edges();
        let m = self.stiffness.chain;
        let mut u = Vec::with_capacity(self.dim());
        match self.layout() {
            VertexLayout::Shared => {
                let s: Complex64 = f.vertex_values().iter().sum();
                u.push(s / n as f64);
            }
            VertexLayout::PerEdge => u.extend(f.vertex_values()),
        }
        for j in 0..n {
            u.extend_from_slice(&f.edge(j)[1..=m]);
        }
        u
    }

    pub fn prolong(&self, u: &[Complex64]) -> GraphFunction {
        let n = self.grid.n_edges();
        let m = self.stiffness.chain;
        let nv = self.stiffness.n_vertex();
        let mut f = GraphFunction::zeros(self.grid);
        for j in 0..n {
            let e = f.edge_mut(j);
            e[0] = match self.layout() {
                VertexLayout::Shared => u[0],
                VertexLayout::PerEdge => u[j],
            };
            e[1..=m].copy_from_slice(&u[nv + j * m..nv + (j + 1) * m]);
        }
        f
    }

    /// `W^{-1/2} K W^{-1/2} + diag(potential)`, the symmetric form of `H + V`.
    pub fn symmetric_operator(&self, potential: &[f64]) -> StarMatrix<f64> {
        let s: Vec<f64> = self.weights.iter().map(|w| 1.0 / w.sqrt()).collect();
        let k = &self.stiffness;
        let nv = k.n_vertex();
        let m = k.chain;
        let mut out = k.clone();
        for r in 0..nv {
            for c in 0..nv {
                out.vertex[(r, c)] = k.vertex[(r, c)] * s[r] * s[c];
            }
            out.vertex[(r, r)] += potential[r];
        }
        for j in 0..k.n_edges {
            let base = nv + j * m;
            let v = k.vertex_of(j);
            out.link[j] = k.link[j] * s[v] * s[base];
            for kk in 0..m {
                let i = base + kk;
                out.diag[j * m + kk] = k.diag[j * m + kk] * s[i] * s[i] + potential[i];
                if kk + 1 < m {
                    out.off[j * m + kk] = k.off[j * m + kk] * s[i] * s[i + 1];
                }
            }
        }
        out
    }

    /// Discrete mass `u^* W u` (equals the trapezoid mass of the prolonged function).
    pub fn mass(&self, u: &[Complex64]) -> f64 {
        u.iter().zip(&self.weights).map(|(z, w)| w * z.norm_sqr()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::mass;

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn solve_matches_dense_lu() {
        for cond in [VertexCondition::delta(-1.3), VertexCondition::DeltaPrimeS { beta: 0.7 }] {
            let g = StarGrid::new(3, 2.0, 12).unwrap();
            let lap = Laplacian::new(&g, &cond).unwrap();
            let pot = random_vec(lap.dim(), 3);
            let a = lap.symmetric_operator(&pot).shifted(0.3);
            let b = random_vec(a.dim(), 7);
            let x = a.solve(&b).unwrap();
            let dense = a.to_dense().lu().solve(&DVector::from_vec(b.clone())).unwrap();
            for (u, v) in x.iter().zip(dense.iter()) {
                assert!((u - v).abs() < 1e-10 * (1.0 + v.abs()));
            }
            let back = a.matvec(&x);
            for (u, v) in back.iter().zip(&b) {
                assert!((u - v).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn complex_solve_round_trips() {
        let g = StarGrid::new(4, 3.0, 30).unwrap();
        let lap = Laplacian::new(&g, &VertexCondition::Kirchhoff).unwrap();
        let a = lap.stiffness.to_complex().shifted(Complex64::new(0.5, 2.0));
        let b: Vec<Complex64> = random_vec(a.dim(), 1).into_iter().zip(random_vec(a.dim(), 2)).map(|(x, y)| Complex64::new(x, y)).collect();
        let x = a.solve(&b).unwrap();
        let back = a.matvec(&x);
        for (u, v) in back.iter().zip(&b) {
            assert!((u - v).norm() < 1e-10);
        }
    }

    #[test]
    fn inertia_matches_dense_eigenvalues() {
        for cond in [VertexCondition::delta(-2.0), VertexCondition::DeltaPrimeS { beta: -0.8 }] {
            let g = StarGrid::new(3, 3.0, 15).unwrap();
            let lap = Laplacian::new(&g, &cond).unwrap();
            let pot = random_vec(lap.dim(), 11).into_iter().map(|x| 40.0 * x).collect::<Vec<_>>();
            let a = lap.symmetric_operator(&pot);
            let eig = a.to_dense().symmetric_eigenvalues();
            for sigma in [-30.0, -5.0, 0.0, 3.0, 50.0, 500.0] {
                let expect = eig.iter().filter(|&&l| l < sigma).count();
                assert_eq!(a.count_below(sigma), expect, "sigma {sigma}");
            }
        }
    }

    #[test]
    fn discrete_mass_is_trapezoid_mass() {
        let g = StarGrid::new(3, 4.0, 41).unwrap();
        let f = GraphFunction::from_fn(g, |j, x| Complex64::new((-x).exp() * (4.0 - x), 0.1 * j as f64 * x * (4.0 - x)));
        for cond in [VertexCondition::Kirchhoff, VertexCondition::DeltaPrimeS { beta: 1.0 }] {
            let lap = Laplacian::new(&g, &cond).unwrap();
            let u = lap.restrict(&f);
            assert!((lap.mass(&u) - mass(&f)).abs() < 1e-12);
            let back = lap.prolong(&u);
            assert!((&back - &f).values().iter().all(|z| z.norm() < 1e-15));
        }
    }

    #[test]
    fn delta_spectrum_has_the_bound_state() {
        // The attractive delta star has the single eigenvalue -alpha^2/N^2.
        let g = StarGrid::new(3, 30.0, 601).unwrap();
        let lap = Laplacian::new(&g, &VertexCondition::delta(-1.5)).unwrap();
        let a = lap.symmetric_operator(&vec![0.0; lap.dim()]);
        assert_eq!(a.count_below(0.0), 1);
        let target = -0.25;
        assert_eq!(a.count_below(target - 1e-3), 0);
        assert_eq!(a.count_below(target + 1e-3), 1);
    }
}
