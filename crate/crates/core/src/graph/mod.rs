//! Discretized star graphs and functions living on them.
//!
//! Every edge of an N-star is a copy of `[0, L]` sampled at `M` uniform
//! points; index 0 on each edge is the vertex. Integrals use the composite
//! trapezoid rule and derivatives are second-order finite differences.

mod vertex;

pub use vertex::{validate_unitary, vertex_residual, VertexCondition};

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{NlsError, Result};

/// Uniform discretization of an N-edge star graph truncated at length `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarGrid {
    n_edges: usize,
    edge_length: f64,
    n_points: usize,
}

impl StarGrid {
    pub fn new(n_edges: usize, edge_length: f64, n_points: usize) -> Result<Self> {
        if n_edges < 2 {
            return Err(NlsError::Domain(format!("a star graph needs N >= 2 edges, got {n_edges}")));
        }
        if !(edge_length > 0.0) || !edge_length.is_finite() {
            return Err(NlsError::Domain(format!("edge length must be positive, got {edge_length}")));
        }
        if n_points < 3 {
            return Err(NlsError::Domain(format!("need at least 3 points per edge, got {n_points}")));
        }
        Ok(Self { n_edges, edge_length, n_points })
    }

    /// Grid with spacing as close as possible to (and not above) `h`.
    pub fn with_spacing(n_edges: usize, edge_length: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(NlsError::Domain(format!("spacing must be positive, got {h}")));
        }
        let cells = (edge_length / h - 1e-9).ceil().max(2.0) as usize;
        Self::new(n_edges, edge_length, cells + 1)
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn edge_length(&self) -> f64 {
        self.edge_length
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Grid spacing `h = L / (M - 1)`.
    pub fn spacing(&self) -> f64 {
        self.edge_length / (self.n_points - 1) as f64
    }

    /// Coordinate of sample `k` (distance from the vertex).
    pub fn x(&self, k: usize) -> f64 {
        k as f64 * self.spacing()
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.n_points).map(|k| self.x(k)).collect()
    }

    pub fn len(&self) -> usize {
        self.n_edges * self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Same edge count and resolution with a different number of edges.
    pub fn with_edges(&self, n_edges: usize) -> Result<Self> {
        Self::new(n_edges, self.edge_length, self.n_points)
    }
}

/// Quadrature rules for edge integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    /// Composite trapezoid; the rule used by every functional in the crate.
    Trapezoid,
    /// Fourth-order Gregory end corrections to the trapezoid rule.
    Gregory,
}

impl Quadrature {
    /// Weight of sample `k` on an edge of `m` points with spacing `h`.
    pub(crate) fn weight(self, k: usize, m: usize, h: f64) -> f64 {
        let last = m - 1;
        match self {
            Quadrature::Trapezoid => {
                if k == 0 || k == last {
                    0.5 * h
                } else {
                    h
                }
            }
            Quadrature::Gregory => {
                if m < 8 {
                    return Quadrature::Trapezoid.weight(k, m, h);
                }
                let from_end = k.min(last - k);
                let w = match from_end {
                    0 => 3.0 / 8.0,
                    1 => 7.0 / 6.0,
                    2 => 23.0 / 24.0,
                    _ => 1.0,
                };
                w * h
            }
        }
    }
}

/// Complex samples of a function on every edge of a [`StarGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GraphFunction {
    grid: StarGrid,
    values: Vec<Complex64>,
}

impl GraphFunction {
    pub fn zeros(grid: StarGrid) -> Self {
        Self { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    /// Samples stored edge by edge (`values[edge * M + k]`).
    pub fn from_values(grid: StarGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(NlsError::Shape(format!(
                "expected {} samples ({} edges x {} points), got {}",
                grid.len(),
                grid.n_edges(),
                grid.n_points(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(edge, x)` on every grid point.
    pub fn from_fn(grid: StarGrid, mut f: impl FnMut(usize, f64) -> Complex64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.n_edges() {
            for k in 0..grid.n_points() {
                values.push(f(j, grid.x(k)));
            }
        }
        Self { grid, values }
    }

    pub fn from_real_fn(grid: StarGrid, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        Self::from_fn(grid, |j, x| Complex64::new(f(j, x), 0.0))
    }

    pub fn grid(&self) -> &StarGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn edge(&self, j: usize) -> &[Complex64] {
        let m = self.grid.n_points();
        &self.values[j * m..(j + 1) * m]
    }

    pub fn edge_mut(&mut self, j: usize) -> &mut [Complex64] {
        let m = self.grid.n_points();
        &mut self.values[j * m..(j + 1) * m]
    }

    /// The N samples at the vertex (one per edge).
    pub fn vertex_values(&self) -> Vec<Complex64> {
        (0..self.grid.n_edges()).map(|j| self.edge(j)[0]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&z| f(z)).collect() }
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|z| c * z)
    }

    /// Global phase rotation `e^{i theta} f`.
    pub fn rotate(&self, theta: f64) -> Self {
        self.scale(Complex64::from_polar(1.0, theta))
    }

    fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(NlsError::Shape(format!("grid mismatch: {:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: Complex64, other: &Self) -> Result<Self> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| a + c * b).collect();
        Ok(Self { grid: self.grid, values })
    }

    /// Samples of the derivative along each edge: centered differences in
    /// the interior and second-order one-sided stencils at both ends.
    pub fn derivative(&self) -> Self {
        let m = self.grid.n_points();
        let h = self.grid.spacing();
        let mut out = Self::zeros(self.grid);
        for j in 0..self.grid.n_edges() {
            let u = self.edge(j);
            let du = out.edge_mut(j);
            if m == 3 {
                du[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
                du[1] = (u[2] - u[0]) / (2.0 * h);
                du[2] = (3.0 * u[2] - 4.0 * u[1] + u[0]) / (2.0 * h);
                continue;
            }
            du[0] = one_sided_derivative(u[0], u[1], u[2], h);
            for k in 1..m - 1 {
                du[k] = (u[k + 1] - u[k - 1]) / (2.0 * h);
            }
            du[m - 1] = -one_sided_derivative(u[m - 1], u[m - 2], u[m - 3], h);
        }
        out
    }

    /// Outgoing derivatives `psi_j'(0)` at the vertex.
    pub fn vertex_derivatives(&self) -> Vec<Complex64> {
        let h = self.grid.spacing();
        (0..self.grid.n_edges())
            .map(|j| {
                let u = self.edge(j);
                one_sided_derivative(u[0], u[1], u[2], h)
            })
            .collect()
    }

    /// `sum_j int |psi_j|^p` under the given rule.
    pub fn integrate_power(&self, p: f64, rule: Quadrature) -> f64 {
        let m = self.grid.n_points();
        let h = self.grid.spacing();
        (0..self.grid.n_edges()).map(|j| edge_integral(self.edge(j), p, rule, m, h)).sum()
    }

    /// `int |psi_j|^2` on a single edge.
    pub fn edge_mass(&self, j: usize) -> f64 {
        let m = self.grid.n_points();
        edge_integral(self.edge(j), 2.0, Quadrature::Trapezoid, m, self.grid.spacing())
    }
}

fn edge_integral(u: &[Complex64], p: f64, rule: Quadrature, m: usize, h: f64) -> f64 {
    u.iter()
        .enumerate()
        .map(|(k, z)| {
            let a = z.norm();
            let v = if p == 2.0 { a * a } else { a.powf(p) };
            rule.weight(k, m, h) * v
        })
        .sum()
}

/// `(-3 f0 + 4 f1 - f2) / 2h`.
pub(crate) fn one_sided_derivative(f0: Complex64, f1: Complex64, f2: Complex64, h: f64) -> Complex64 {
    (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h)
}

impl Add for &GraphFunction {
    type Output = GraphFunction;
    fn add(self, rhs: &GraphFunction) -> GraphFunction {
        assert_eq!(self.grid, rhs.grid, "grid mismatch in addition");
        let values = self.values.iter().zip(&rhs.values).map(|(&a, &b)| a + b).collect();
        GraphFunction { grid: self.grid, values }
    }
}

impl Sub for &GraphFunction {
    type Output = GraphFunction;
    fn sub(self, rhs: &GraphFunction) -> GraphFunction {
        assert_eq!(self.grid, rhs.grid, "grid mismatch in subtraction");
        let values = self.values.iter().zip(&rhs.values).map(|(&a, &b)| a - b).collect();
        GraphFunction { grid: self.grid, values }
    }
}

impl Neg for &GraphFunction {
    type Output = GraphFunction;
    fn neg(self) -> GraphFunction {
        self.map(|z| -z)
    }
}

impl Mul<&GraphFunction> for Complex64 {
    type Output = GraphFunction;
    fn mul(self, rhs: &GraphFunction) -> GraphFunction {
        rhs.scale(self)
    }
}

impl Mul<&GraphFunction> for f64 {
    type Output = GraphFunction;
    fn mul(self, rhs: &GraphFunction) -> GraphFunction {
        rhs.map(|z| self * z)
    }
}

/// `(sum_j int |psi_j|^p)^{1/p}` with the trapezoid rule.
pub fn lp_norm(f: &GraphFunction, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(NlsError::Domain(format!("L^p norm needs p >= 1, got {p}")));
    }
    let s = f.integrate_power(p, Quadrature::Trapezoid);
    if s == 0.0 {
        return Ok(0.0);
    }
    Ok(if p == 2.0 { s.sqrt() } else { s.powf(1.0 / p) })
}

/// `||Psi'||` with the derivative stencil of [`GraphFunction::derivative`].
pub fn h1_seminorm(f: &GraphFunction) -> f64 {
    f.derivative().integrate_power(2.0, Quadrature::Trapezoid).sqrt()
}

/// Discrete H1 norm `(||Psi'||^2 + ||Psi||^2)^{1/2}`.
pub fn h1_norm(f: &GraphFunction) -> f64 {
    let d = f.derivative().integrate_power(2.0, Quadrature::Trapezoid);
    let m = f.integrate_power(2.0, Quadrature::Trapezoid);
    (d + m).sqrt()
}

/// `sum_j int conj(psi_j) phi_j`, conjugate-linear in the first argument.
pub fn inner_product(f: &GraphFunction, g: &GraphFunction) -> Result<Complex64> {
    f.check_same_grid(g)?;
    let m = f.grid.n_points();
    let h = f.grid.spacing();
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..f.grid.n_edges() {
        for (k, (a, b)) in f.edge(j).iter().zip(g.edge(j)).enumerate() {
            acc += Quadrature::Trapezoid.weight(k, m, h) * a.conj() * b;
        }
    }
    Ok(acc)
}
