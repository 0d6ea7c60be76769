use nalgebra::DMatrix;
use num_complex::Complex64;

use super::GraphFunction;
use crate::error::{NlsError, Result};

const UNITARY_TOL: f64 = 1e-12;

/// Self-adjoint coupling at the vertex of a star graph.
#[derive(Debug, Clone)]
pub enum VertexCondition {
    /// Continuity plus `sum_j psi_j'(0) = alpha psi(0)`.
    Delta { alpha: f64 },
    /// `Delta` with `alpha = 0`.
    Kirchhoff,
    /// `sum_j psi_j'(0) = 0` and `psi_j(0) - psi_k(0) = (beta/N)(psi_j'(0) - psi_k'(0))`.
    DeltaPrimeS { beta: f64 },
    /// `(U - 1) Psi(0) + i (U + 1) Psi'(0) = 0` for a unitary `U`.
    GeneralU(DMatrix<Complex64>),
}

impl VertexCondition {
    pub fn delta(alpha: f64) -> Self {
        VertexCondition::Delta { alpha }
    }

    pub fn delta_prime_s(beta: f64) -> Result<Self> {
        if beta == 0.0 || !beta.is_finite() {
            return Err(NlsError::Domain(format!("delta'_s strength must be finite and nonzero, got {beta}")));
        }
        Ok(VertexCondition::DeltaPrimeS { beta })
    }

    /// Checked constructor for the unitary parametrization.
    pub fn general_u(u: DMatrix<Complex64>) -> Result<Self> {
        if !validate_unitary(&u)? {
            return Err(NlsError::Domain("vertex matrix is not unitary to 1e-12".into()));
        }
        Ok(VertexCondition::GeneralU(u))
    }

    /// The unitary matrix `U_jk = 2/(N + i alpha) - delta_jk` of a delta vertex.
    pub fn delta_unitary(n_edges: usize, alpha: f64) -> DMatrix<Complex64> {
        let c = Complex64::new(2.0, 0.0) / Complex64::new(n_edges as f64, alpha);
        DMatrix::from_fn(n_edges, n_edges, |j, k| if j == k { c - 1.0 } else { c })
    }

    /// `Kirchhoff` is folded into `Delta { alpha: 0 }`.
    pub fn normalized(&self) -> Self {
        match self {
            VertexCondition::Kirchhoff => VertexCondition::Delta { alpha: 0.0 },
            other => other.clone(),
        }
    }

    /// Strength of a delta-type vertex, `None` for other couplings.
    pub fn delta_strength(&self) -> Option<f64> {
        match self.normalized() {
            VertexCondition::Delta { alpha } => Some(alpha),
            _ => None,
        }
    }

    /// Matrices `(A, B)` such that the condition reads `A Psi(0) + B Psi'(0) = 0`.
    pub fn boundary_matrices(&self, n: usize) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let mut a = DMatrix::from_element(n, n, zero);
        let mut b = DMatrix::from_element(n, n, zero);
        match self.normalized() {
            VertexCondition::Delta { alpha } => {
                for r in 1..n {
                    a[(r - 1, 0)] = one;
                    a[(r - 1, r)] = -one;
                }
                for k in 0..n {
                    b[(n - 1, k)] = one;
                    a[(n - 1, k)] = Complex64::new(-alpha / n as f64, 0.0);
                }
            }
            VertexCondition::DeltaPrimeS { beta } => {
                let s = beta / n as f64;
                for r in 1..n {
                    a[(r - 1, 0)] = one;
                    a[(r - 1, r)] = -one;
                    b[(r - 1, 0)] = Complex64::new(-s, 0.0);
                    b[(r - 1, r)] = Complex64::new(s, 0.0);
                }
                for k in 0..n {
                    b[(n - 1, k)] = one;
                }
            }
            VertexCondition::GeneralU(u) => {
                if u.nrows() != n {
                    return Err(NlsError::Shape(format!("vertex matrix is {}x{}, graph has {n} edges", u.nrows(), u.ncols())));
                }
                let id = DMatrix::<Complex64>::identity(n, n);
                a = &u - &id;
                b = (&u + &id) * Complex64::i();
            }
            VertexCondition::Kirchhoff => unreachable!(),
        }
        Ok((a, b))
    }
}

impl PartialEq for VertexCondition {
    fn eq(&self, other: &Self) -> bool {
        use VertexCondition::*;
        match (self.normalized(), other.normalized()) {
            (Delta { alpha: a }, Delta { alpha: b }) => a == b,
            (DeltaPrimeS { beta: a }, DeltaPrimeS { beta: b }) => a == b,
            (GeneralU(a), GeneralU(b)) => a == b,
            _ => false,
        }
    }
}

/// True iff `max |U* U - I| <= 1e-12`.
pub fn validate_unitary(u: &DMatrix<Complex64>) -> Result<bool> {
    if u.nrows() != u.ncols() {
        return Err(NlsError::Shape(format!("vertex matrix must be square, got {}x{}", u.nrows(), u.ncols())));
    }
    let prod = u.adjoint() * u;
    let n = u.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for k in 0..n {
            let target = if j == k { 1.0 } else { 0.0 };
            worst = worst.max((prod[(j, k)] - target).norm());
        }
    }
    Ok(worst <= UNITARY_TOL)
}

/// Largest absolute mismatch among the condition's defining equations, with
/// `psi_j'(0)` from the second-order one-sided stencil.
pub fn vertex_residual(f: &GraphFunction, cond: &VertexCondition) -> f64 {
    let n = f.grid().n_edges();
    let values = f.vertex_values();
    let derivs = f.vertex_derivatives();
    match cond.normalized() {
        VertexCondition::Delta { alpha } => {
            let mut worst = 0.0f64;
            for k in 1..n {
                worst = worst.max((values[0] - values[k]).norm());
            }
            let mean = values.iter().sum::<Complex64>() / n as f64;
            let flux: Complex64 = derivs.iter().sum();
            worst.max((flux - alpha * mean).norm())
        }
        _ => {
            let Ok((a, b)) = cond.boundary_matrices(n) else {
                return f64::INFINITY;
            };
            let v = nalgebra::DVector::from_vec(values);
            let d = nalgebra::DVector::from_vec(derivs);
            let r = a * v + b * d;
            r.iter().map(|z| z.norm()).fold(0.0, f64::max)
        }
    }
}
