//! Central finite differences, used as independent oracles and in the
//! numerical-hygiene gates.

use crate::manifold::ManifoldSpec;
use crate::morse::InvariantFunction;
use nalgebra::{DMatrix, DVector};

/// Central-difference gradient of a scalar function.
pub fn fd_gradient<F>(f: F, x: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let n = x.len();
    let mut g = DVector::zeros(n);
    for i in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(&xp) - f(&xm)) / (2.0 * h);
    }
    g
}

/// Central-difference Jacobian of a vector function, symmetrised; used to
/// cross-check ambient Hessians against ambient gradients.
pub fn fd_hessian_of_gradient<G>(grad: G, x: &DVector<f64>, h: f64) -> DMatrix<f64>
where
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let col = (grad(&xp) - grad(&xm)) / (2.0 * h);
        m.set_column(i, &col);
    }
    (&m + m.transpose()) * 0.5
}

/// Intrinsic finite-difference Hessian at a critical point, built in the
/// provided orthonormal tangent frame through the retraction:
/// H_ij = ∂²/∂s∂t f(R(p + s tᵢ + t tⱼ)).
///
/// At critical points this is retraction-independent, which makes it an
/// oracle for the Lagrange-corrected analytic Hessian.
pub fn intrinsic_fd_hessian(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    p: &DVector<f64>,
    basis: &DMatrix<f64>,
    h: f64,
) -> DMatrix<f64> {
    let n = basis.ncols();
    let eval = |s: f64, t: f64, i: usize, j: usize| -> f64 {
        let x = p + basis.column(i) * s + basis.column(j) * t;
        let r = m.retract(&x).expect("retraction inside FD stencil");
        f.value(&r)
    };
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = (eval(h, h, i, j) - eval(h, -h, i, j) - eval(-h, h, i, j)
                + eval(-h, -h, i, j))
                / (4.0 * h * h);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{ManifoldKind, ManifoldTols};
    use crate::morse::{morse_index, riemannian_hessian_at_critical};
    use nalgebra::DVector;

    #[test]
    fn fd_gradient_matches_linear_functional() {
        let f = |x: &DVector<f64>| 2.0 * x[0] - 3.0 * x[2];
        let x = DVector::from_row_slice(&[0.3, -0.1, 0.7]);
        let g = fd_gradient(f, &x, 1e-5);
        assert!((g - DVector::from_row_slice(&[2.0, 0.0, -3.0])).norm() < 1e-9);
    }

    #[test]
    fn intrinsic_hessian_matches_analytic_at_sphere_pole() {
        let m =
            ManifoldSpec::new("s2", ManifoldKind::Sphere { ambient_dim: 3 }, ManifoldTols::default())
                .unwrap();
        let f = InvariantFunction::linear("height", DVector::from_row_slice(&[0.0, 0.0, 1.0]));
        let p = DVector::from_row_slice(&[0.0, 0.0, 1.0]);
        let h = riemannian_hessian_at_critical(
            &m,
            &f,
            &crate::manifold::AmbientPoint::new(p.clone()).unwrap(),
            1e-8,
            1e-6,
        )
        .unwrap();
        let fd = intrinsic_fd_hessian(&m, &f, &p, &h.tangent_basis, 1e-4);
        assert!((&fd - &h.reduced).norm() < 1e-6);
        assert_eq!(morse_index(&h), 2);
    }
}
