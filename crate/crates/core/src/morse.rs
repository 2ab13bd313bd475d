//! Invariant scalar fields and their Riemannian derivatives.
//!
//! The built-in functions are linear functionals of the ambient coordinates
//! (height on spheres, tr(D·X) on matrix scenarios); these have analytic
//! gradient and vanishing ambient Hessian. Quadratic forms are also
//! supported — the fixed-point locator minimises one.

use crate::error::{Error, Result};
use crate::manifold::{project_to_tangent, AmbientPoint, ManifoldSpec, TangentVector};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// A smooth scalar field on the ambient space with analytic derivatives.
pub trait ScalarField: Send + Sync {
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

/// f(x) = ⟨a, x⟩.
pub struct LinearFunctional {
    pub coeffs: DVector<f64>,
}

impl ScalarField for LinearFunctional {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.coeffs.dot(x)
    }
    fn gradient(&self, _x: &DVector<f64>) -> DVector<f64> {
        self.coeffs.clone()
    }
    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.coeffs.len(), self.coeffs.len())
    }
}

/// f(x) = xᵀ Q x with Q symmetric positive semi-definite.
pub struct QuadraticForm {
    pub matrix: DMatrix<f64>,
}

impl ScalarField for QuadraticForm {
    fn value(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.matrix * x)[(0, 0)]
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        2.0 * (&self.matrix * x)
    }
    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        2.0 * self.matrix.clone()
    }
}

/// A named scalar field used as the Morse function of a scenario.
#[derive(Clone)]
pub struct InvariantFunction {
    pub name: String,
    field: Arc<dyn ScalarField>,
}

impl std::fmt::Debug for InvariantFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "InvariantFunction({})", self.name)
    }
}

impl InvariantFunction {
    pub fn linear(name: impl Into<String>, coeffs: DVector<f64>) -> Self {
        InvariantFunction { name: name.into(), field: Arc::new(LinearFunctional { coeffs }) }
    }

    pub fn quadratic(name: impl Into<String>, matrix: DMatrix<f64>) -> Self {
        InvariantFunction { name: name.into(), field: Arc::new(QuadraticForm { matrix }) }
    }

    pub fn from_field(name: impl Into<String>, field: Arc<dyn ScalarField>) -> Self {
        InvariantFunction { name: name.into(), field }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.field.value(x)
    }

    pub fn ambient_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.field.gradient(x)
    }

    pub fn ambient_hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.field.hessian(x)
    }
}

/// Riemannian gradient: tangent projection of the ambient gradient.
pub fn riemannian_gradient(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    x: &AmbientPoint,
) -> Result<TangentVector> {
    project_to_tangent(m, x, &f.ambient_gradient(x.coords()))
}

/// Unvalidated Riemannian gradient for hot loops.
pub fn riemannian_gradient_vec(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    x: &DVector<f64>,
) -> DVector<f64> {
    m.tangent_project(x, &f.ambient_gradient(x))
}

/// The Lagrange-corrected Riemannian Hessian at a point, reduced to an
/// orthonormal tangent basis.
///
/// H = P (∇̄²f − Σᵢ λᵢ ∇²cᵢ) P with λ the least-squares solution of
/// ∇̄f = Σᵢ λᵢ ∇cᵢ. At critical points this is the intrinsic Hessian; away
/// from them it is the standard Newton model for the projected gradient
/// field.
#[derive(Debug, Clone)]
pub struct RiemannianHessian {
    pub base: DVector<f64>,
    /// N×n orthonormal tangent basis (columns).
    pub tangent_basis: DMatrix<f64>,
    /// n×n symmetric reduced Hessian.
    pub reduced: DMatrix<f64>,
    /// Eigenvalues, ascending.
    pub eigenvalues: DVector<f64>,
    /// N×n matrix whose columns are the ambient eigenvectors, matching
    /// `eigenvalues` order.
    pub eigenvectors: DMatrix<f64>,
}

impl RiemannianHessian {
    /// Columns spanning the strictly negative eigenspace E⁻.
    pub fn negative_eigenbasis(&self) -> DMatrix<f64> {
        self.eigenspace(|v| v < 0.0)
    }

    /// Columns spanning the strictly positive eigenspace E⁺.
    pub fn positive_eigenbasis(&self) -> DMatrix<f64> {
        self.eigenspace(|v| v > 0.0)
    }

    fn eigenspace(&self, keep: impl Fn(f64) -> bool) -> DMatrix<f64> {
        let cols: Vec<usize> =
            (0..self.eigenvalues.len()).filter(|&i| keep(self.eigenvalues[i])).collect();
        let mut out = DMatrix::zeros(self.eigenvectors.nrows(), cols.len());
        for (dst, &src) in cols.iter().enumerate() {
            out.set_column(dst, &self.eigenvectors.column(src));
        }
        out
    }
}

/// Assemble the reduced Hessian at any on-manifold point.
pub fn riemannian_hessian(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    x: &DVector<f64>,
) -> Result<RiemannianHessian> {
    let basis = m.tangent_basis(x)?;
    let g = f.ambient_gradient(x);
    let lambda = m.lagrange_multipliers(x, &g);
    let corrected = f.ambient_hessian(x) - m.weighted_constraint_hessian(x, &lambda);
    let mut reduced = basis.transpose() * corrected * &basis;
    // Symmetrise away rounding asymmetry.
    reduced = (&reduced + reduced.transpose()) * 0.5;
    let se = reduced.clone().symmetric_eigen();
    let n = reduced.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let mut eigenvalues = DVector::zeros(n);
    let mut eigvecs_reduced = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues[dst] = se.eigenvalues[src];
        eigvecs_reduced.set_column(dst, &se.eigenvectors.column(src));
    }
    let eigenvectors = &basis * eigvecs_reduced;
    Ok(RiemannianHessian { base: x.clone(), tangent_basis: basis, reduced, eigenvalues, eigenvectors })
}

/// The Hessian at a refined critical point, with criticality and
/// non-degeneracy gates.
pub fn riemannian_hessian_at_critical(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    p: &AmbientPoint,
    tau_crit: f64,
    tau_morse: f64,
) -> Result<RiemannianHessian> {
    let grad_norm = riemannian_gradient_vec(m, f, p.coords()).norm();
    if grad_norm > tau_crit {
        return Err(Error::NotCritical { grad_norm, tol: tau_crit });
    }
    let h = riemannian_hessian(m, f, p.coords())?;
    for &ev in h.eigenvalues.iter() {
        if ev.abs() < tau_morse {
            return Err(Error::DegenerateHessian { eigenvalue: ev, tol: tau_morse });
        }
    }
    Ok(h)
}

/// Morse index: the number of negative Hessian eigenvalues.
pub fn morse_index(h: &RiemannianHessian) -> usize {
    h.eigenvalues.iter().filter(|&&v| v < 0.0).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{ManifoldKind, ManifoldTols};

    fn sphere2() -> ManifoldSpec {
        ManifoldSpec::new("s2", ManifoldKind::Sphere { ambient_dim: 3 }, ManifoldTols::default())
            .unwrap()
    }

    fn height() -> InvariantFunction {
        InvariantFunction::linear("height", DVector::from_row_slice(&[0.0, 0.0, 1.0]))
    }

    #[test]
    fn gradient_vanishes_at_pole() {
        let m = sphere2();
        let f = height();
        let pole = AmbientPoint::from_slice(&[0.0, 0.0, 1.0]).unwrap();
        let g = riemannian_gradient(&m, &f, &pole).unwrap();
        assert!(g.norm() < 1e-14);
    }

    #[test]
    fn gradient_is_vertical_on_equator() {
        let m = sphere2();
        let f = height();
        let x = AmbientPoint::from_slice(&[1.0, 0.0, 0.0]).unwrap();
        let g = riemannian_gradient(&m, &f, &x).unwrap();
        assert!((g.direction - DVector::from_row_slice(&[0.0, 0.0, 1.0])).norm() < 1e-14);
    }

    #[test]
    fn height_hessian_indices_at_poles() {
        let m = sphere2();
        let f = height();
        let south = AmbientPoint::from_slice(&[0.0, 0.0, -1.0]).unwrap();
        let h = riemannian_hessian_at_critical(&m, &f, &south, 1e-8, 1e-6).unwrap();
        assert_eq!(morse_index(&h), 0);
        assert!(h.eigenvalues.iter().all(|&v| v > 0.0));

        let north = AmbientPoint::from_slice(&[0.0, 0.0, 1.0]).unwrap();
        let h = riemannian_hessian_at_critical(&m, &f, &north, 1e-8, 1e-6).unwrap();
        assert_eq!(morse_index(&h), 2);
        assert!(h.eigenvalues.iter().all(|&v| v < 0.0));
    }

    #[test]
    fn morse_index_counts_negatives() {
        let m = sphere2();
        let f = height();
        let north = AmbientPoint::from_slice(&[0.0, 0.0, 1.0]).unwrap();
        let h = riemannian_hessian_at_critical(&m, &f, &north, 1e-8, 1e-6).unwrap();
        assert_eq!(h.eigenvalues.len(), 2);
        assert_eq!(morse_index(&h), 2);
    }

    #[test]
    fn not_critical_is_rejected() {
        let m = sphere2();
        let f = height();
        let x = AmbientPoint::from_slice(&[1.0, 0.0, 0.0]).unwrap();
        let r = riemannian_hessian_at_critical(&m, &f, &x, 1e-8, 1e-6);
        assert!(matches!(r, Err(Error::NotCritical { .. })));
    }
}
