//! Embedded constraint manifolds M = c⁻¹(0) ⊂ ℝ^N.
//!
//! Three families cover every built-in scenario:
//!
//! * unit spheres S^{N−1}, constraint ‖x‖² − 1;
//! * rank-1 Hermitian projectors (complex projective space), realified,
//!   constraints P² − P = 0 and tr P = 1;
//! * isospectral sets of Hermitian matrices with a fixed simple spectrum,
//!   constraints the elementary symmetric functions of the eigenvalues.
//!
//! Each family ships a closed-form tangent projection and nearest-point
//! retraction. The generic constraint Jacobian is kept alongside for rank
//! validation, tangent bases and Lagrange corrections; tests check that the
//! closed-form projector agrees with the orthogonal projector onto ker Dc.
//!
//! The Riemannian metric is always the restriction of the ambient inner
//! product, which for realified matrix coordinates is the Frobenius metric
//! (see [`crate::herm`]).

use crate::error::{Error, Result};
use crate::herm::{ceye, ctrace, eigh_ascending, random_unitary, standard_normal, CMatrix, HermCoords};
use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;


/// A point of the ambient space ℝ^N. Entries are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientPoint {
    coords: DVector<f64>,
}

impl AmbientPoint {
    pub fn new(coords: DVector<f64>) -> Result<Self> {
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("ambient point has non-finite entries".into()));
        }
        Ok(AmbientPoint { coords })
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        Self::new(DVector::from_row_slice(coords))
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn into_coords(self) -> DVector<f64> {
        self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// A tangent vector attached to a base point.
#[derive(Debug, Clone)]
pub struct TangentVector {
    pub base: AmbientPoint,
    pub direction: DVector<f64>,
}

impl TangentVector {
    pub fn norm(&self) -> f64 {
        self.direction.norm()
    }
}

/// The built-in constraint families.
#[derive(Debug, Clone, PartialEq)]
pub enum ManifoldKind {
    /// Unit sphere in ℝ^{ambient_dim}.
    Sphere { ambient_dim: usize },
    /// Rank-1 Hermitian projectors of the given matrix size, realified.
    Rank1Projector { size: usize },
    /// Hermitian matrices with the given simple spectrum, realified.
    /// The spectrum is stored sorted ascending and must have distinct entries.
    Isospectral { size: usize, spectrum: Vec<f64> },
}

/// Numerical tolerances owned by a manifold.
#[derive(Debug, Clone, Copy)]
pub struct ManifoldTols {
    /// On-manifold constraint residual bound.
    pub tau_on: f64,
    /// Relative tangency bound for [`TangentVector`] validation.
    pub tau_tan: f64,
}

impl Default for ManifoldTols {
    fn default() -> Self {
        ManifoldTols { tau_on: 1e-9, tau_tan: 1e-8 }
    }
}

/// A compact embedded manifold with tangent projection and retraction.
#[derive(Debug, Clone)]
pub struct ManifoldSpec {
    pub name: String,
    pub kind: ManifoldKind,
    pub ambient_dim: usize,
    pub intrinsic_dim: usize,
    pub tols: ManifoldTols,
}

impl ManifoldSpec {
    pub fn new(name: impl Into<String>, kind: ManifoldKind, tols: ManifoldTols) -> Result<Self> {
        let (ambient_dim, intrinsic_dim) = match &kind {
            ManifoldKind::Sphere { ambient_dim } => {
                if *ambient_dim < 2 {
                    return Err(Error::Config("sphere needs ambient dimension >= 2".into()));
                }
                (*ambient_dim, ambient_dim - 1)
            }
            ManifoldKind::Rank1Projector { size } => {
                if *size < 2 {
                    return Err(Error::Config("projector manifold needs size >= 2".into()));
                }
                (size * size, 2 * (size - 1))
            }
            ManifoldKind::Isospectral { size, spectrum } => {
                if spectrum.len() != *size || !(2..=3).contains(size) {
                    return Err(Error::Config("isospectral manifold supports sizes 2 and 3".into()));
                }
                let mut s = spectrum.clone();
                s.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for w in s.windows(2) {
                    if (w[1] - w[0]).abs() < 1e-9 {
                        return Err(Error::Config(format!(
                            "isospectral spectrum has a repeated entry near {}",
                            w[0]
                        )));
                    }
                }
                (size * size, size * (size - 1))
            }
        };
        let kind = match kind {
            ManifoldKind::Isospectral { size, mut spectrum } => {
                spectrum.sort_by(|a, b| a.partial_cmp(b).unwrap());
                ManifoldKind::Isospectral { size, spectrum }
            }
            other => other,
        };
        Ok(ManifoldSpec { name: name.into(), kind, ambient_dim, intrinsic_dim, tols })
    }

    fn herm(&self) -> HermCoords {
        match &self.kind {
            ManifoldKind::Rank1Projector { size } | ManifoldKind::Isospectral { size, .. } => {
                HermCoords::new(*size)
            }
            ManifoldKind::Sphere { .. } => unreachable!("herm chart on a vector manifold"),
        }
    }

    /// Number of constraint components. For the projector family the
    /// constraint is over-determined (m² + 1 components of rank N − n).
    pub fn constraint_dim(&self) -> usize {
        match &self.kind {
            ManifoldKind::Sphere { .. } => 1,
            ManifoldKind::Rank1Projector { size } => size * size + 1,
            ManifoldKind::Isospectral { size, .. } => *size,
        }
    }

    /// Expected rank of the constraint Jacobian on the manifold.
    pub fn constraint_rank_expected(&self) -> usize {
        self.ambient_dim - self.intrinsic_dim
    }

    /// Constraint map c: ℝ^N → ℝ^k.
    pub fn constraint(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            ManifoldKind::Sphere { .. } => DVector::from_element(1, x.norm_squared() - 1.0),
            ManifoldKind::Rank1Projector { size } => {
                let hc = self.herm();
                let p = hc.to_matrix(x);
                let idem = &p * &p - &p;
                let mut c = DVector::zeros(size * size + 1);
                c.rows_mut(0, size * size).copy_from(&hc.to_vec(&idem));
                c[size * size] = ctrace(&p).re - 1.0;
                c
            }
            ManifoldKind::Isospectral { size, spectrum } => {
                let hc = self.herm();
                let xm = hc.to_matrix(x);
                elementary_symmetric_residuals(&xm, spectrum, *size)
            }
        }
    }

    pub fn constraint_residual(&self, x: &DVector<f64>) -> f64 {
        self.constraint(x).norm()
    }

    /// Jacobian Dc(x), one row per constraint component.
    pub fn constraint_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match &self.kind {
            ManifoldKind::Sphere { ambient_dim } => {
                let mut j = DMatrix::zeros(1, *ambient_dim);
                j.row_mut(0).copy_from(&(2.0 * x).transpose());
                j
            }
            ManifoldKind::Rank1Projector { size } => {
                let hc = self.herm();
                let p = hc.to_matrix(x);
                let n = size * size;
                // Derivative of vec(P² − P) is the realified map V ↦ VP + PV − V.
                let d_idem = hc.realify_linear(|v| v * &p + &p * v - v);
                let mut j = DMatrix::zeros(n + 1, n);
                j.view_mut((0, 0), (n, n)).copy_from(&d_idem);
                j.row_mut(n).copy_from(&hc.to_vec(&ceye(*size)).transpose());
                j
            }
            ManifoldKind::Isospectral { size, .. } => {
                let hc = self.herm();
                let xm = hc.to_matrix(x);
                let mut j = DMatrix::zeros(*size, size * size);
                for (row, grad) in elementary_symmetric_gradients(&xm, *size).iter().enumerate() {
                    j.row_mut(row).copy_from(&hc.to_vec(grad).transpose());
                }
                j
            }
        }
    }

    /// Σᵢ λᵢ ∇²cᵢ(x) as an N×N symmetric matrix (Lagrange curvature term).
    pub fn weighted_constraint_hessian(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> DMatrix<f64> {
        match &self.kind {
            ManifoldKind::Sphere { ambient_dim } => {
                DMatrix::identity(*ambient_dim, *ambient_dim) * (2.0 * lambda[0])
            }
            ManifoldKind::Rank1Projector { size } => {
                let hc = self.herm();
                let n = size * size;
                // Hessian of ⟨E_α, P²−P⟩ is V ↦ E_αV + VE_α, so the weighted sum
                // is V ↦ LV + VL with L the Hermitian matrix of the first N weights.
                // The trace component is linear and contributes nothing.
                let l = hc.to_matrix(&DVector::from(lambda.rows(0, n).clone_owned()));
                hc.realify_linear(|v| &l * v + v * &l)
            }
            ManifoldKind::Isospectral { size, .. } => {
                let hc = self.herm();
                let xm = hc.to_matrix(x);
                let m = *size;
                let l = lambda.clone_owned();
                hc.realify_linear(|v| {
                    let mut out = CMatrix::zeros(m, m);
                    if m >= 2 {
                        // e₂ Hessian: V ↦ (tr V) I − V
                        let tv = ctrace(v);
                        out += (ceye(m) * tv - v) * Complex::new(l[1], 0.0);
                    }
                    if m == 3 {
                        // e₃ = det Hessian via d(adj):
                        // V ↦ XV + VX − (tr V)X − (tr X)V + ((tr X)(tr V) − tr(XV)) I
                        let tx = ctrace(&xm);
                        let tv = ctrace(v);
                        let txv = ctrace(&(&xm * v));
                        let d_adj = &xm * v + v * &xm - &xm * tv - v * tx + ceye(3) * (tx * tv - txv);
                        out += d_adj * Complex::new(l[2], 0.0);
                    }
                    out
                })
            }
        }
    }

    /// Closed-form orthogonal projection onto the tangent space at x.
    ///
    /// x is assumed on (or very near) the manifold; no validation is done
    /// here because this sits inside the flow right-hand side. Use
    /// [`project_to_tangent`] for the validated operation.
    pub fn tangent_project(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            ManifoldKind::Sphere { .. } => {
                let xs = x.norm_squared();
                v - x * (x.dot(v) / xs)
            }
            ManifoldKind::Rank1Projector { size } => {
                let hc = self.herm();
                let p = hc.to_matrix(x);
                let q = ceye(*size) - &p;
                let vm = hc.to_matrix(v);
                hc.to_vec(&(&p * &vm * &q + &q * &vm * &p))
            }
            ManifoldKind::Isospectral { size, .. } => {
                // Normal space at X is span{I, X, …, X^{m−1}} (the commutant for a
                // simple spectrum); project onto it by a Gram solve and subtract.
                let hc = self.herm();
                let xm = hc.to_matrix(x);
                let vm = hc.to_matrix(v);
                let m = *size;
                let mut basis = Vec::with_capacity(m);
                let mut pw = ceye(m);
                for _ in 0..m {
                    basis.push(pw.clone());
                    pw = &pw * &xm;
                }
                let mut gram = DMatrix::zeros(m, m);
                let mut rhs = DVector::zeros(m);
                for i in 0..m {
                    for j in 0..m {
                        gram[(i, j)] = ctrace(&(&basis[i] * &basis[j])).re;
                    }
                    rhs[i] = ctrace(&(&basis[i] * &vm)).re;
                }
                let gamma = gram
                    .lu()
                    .solve(&rhs)
                    .unwrap_or_else(|| DVector::zeros(m));
                let mut normal = CMatrix::zeros(m, m);
                for i in 0..m {
                    normal += &basis[i] * Complex::new(gamma[i], 0.0);
                }
                hc.to_vec(&(&vm - &normal))
            }
        }
    }

    /// Nearest-point retraction onto the manifold.
    pub fn retract(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let out = match &self.kind {
            ManifoldKind::Sphere { .. } => {
                let n = x.norm();
                if n < 1e-12 || !n.is_finite() {
                    return Err(Error::RetractionDiverged { residual: f64::INFINITY });
                }
                x / n
            }
            ManifoldKind::Rank1Projector { size } => {
                let hc = self.herm();
                let xm = hc.to_matrix(x);
                let (_, u) = eigh_ascending(&xm);
                // Dominant eigenvector maximises v*Xv, i.e. minimises the
                // Frobenius distance to a rank-1 projector.
                let dom = u.column(*size - 1).clone_owned();
                let p = &dom * dom.adjoint();
                hc.to_vec(&p)
            }
            ManifoldKind::Isospectral { spectrum, .. } => {
                let hc = self.herm();
                let xm = hc.to_matrix(x);
                let (_, u) = eigh_ascending(&xm);
                // Snap the (ascending) eigenvalues to the fixed ascending
                // spectrum; this is the Frobenius-nearest isospectral matrix.
                let d = CMatrix::from_diagonal(
                    &DVector::from_row_slice(spectrum).map(|s| Complex::new(s, 0.0)),
                );
                hc.to_vec(&(&u * d * u.adjoint()))
            }
            #[allow(unreachable_patterns)]
            _ => unreachable!(),
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::RetractionDiverged { residual: f64::INFINITY });
        }
        let residual = self.constraint_residual(&out);
        if residual > self.tols.tau_on {
            return Err(Error::RetractionDiverged { residual });
        }
        Ok(out)
    }

    /// Rank of the constraint Jacobian, counted against the largest
    /// singular value with a 10⁻⁸ relative cutoff.
    pub fn constraint_jacobian_rank(&self, x: &DVector<f64>) -> usize {
        let j = self.constraint_jacobian(x);
        let svals = j.svd(false, false).singular_values;
        let smax = svals.iter().cloned().fold(0.0_f64, f64::max);
        if smax == 0.0 {
            return 0;
        }
        svals.iter().filter(|&&s| s > 1e-8 * smax).count()
    }

    /// True iff the constraint residual is within τ_on and the Jacobian has
    /// the expected rank.
    pub fn on_manifold(&self, x: &AmbientPoint) -> bool {
        self.constraint_residual(x.coords()) <= self.tols.tau_on
            && self.constraint_jacobian_rank(x.coords()) == self.constraint_rank_expected()
    }

    /// Orthonormal basis of the tangent space (columns), from the
    /// eigen-decomposition of Dcᵀ Dc: the tangent space is its kernel.
    pub fn tangent_basis(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let j = self.constraint_jacobian(x);
        let jtj = j.transpose() * &j;
        let se = jtj.symmetric_eigen();
        let n = self.ambient_dim;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
        let max_eig = se.eigenvalues[order[n - 1]].max(1.0);
        let cut = 1e-12 * max_eig;
        let null_count = order.iter().filter(|&&i| se.eigenvalues[i] < cut).count();
        if null_count != self.intrinsic_dim {
            return Err(Error::RankDeficient {
                rank: n - null_count,
                expected: self.constraint_rank_expected(),
            });
        }
        let mut basis = DMatrix::zeros(n, self.intrinsic_dim);
        for (col, &idx) in order.iter().take(self.intrinsic_dim).enumerate() {
            basis.set_column(col, &se.eigenvectors.column(idx));
        }
        // Orthonormalise; the eigenvectors already are, up to rounding.
        Ok(basis.qr().q())
    }

    /// Least-squares Lagrange multipliers: argmin_λ ‖g − Dcᵀ λ‖.
    pub fn lagrange_multipliers(&self, x: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
        let j = self.constraint_jacobian(x);
        let svd = (j.clone() * j.transpose()).svd(true, true);
        svd.solve(&(j * g), 1e-10 * svd.singular_values.max())
            .unwrap_or_else(|_| DVector::zeros(self.constraint_dim()))
    }

    /// Uniform-ish random on-manifold point.
    pub fn random_point<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        match &self.kind {
            ManifoldKind::Sphere { ambient_dim } => {
                let v: DVector<f64> =
                    DVector::from_fn(*ambient_dim, |_, _| standard_normal(rng));
                let n = v.norm();
                if n < 1e-9 {
                    return self.random_point(rng);
                }
                v / n
            }
            ManifoldKind::Rank1Projector { size } => {
                let hc = self.herm();
                let mut v = CMatrix::zeros(*size, 1);
                for i in 0..*size {
                    let re = standard_normal(rng);
                    let im = standard_normal(rng);
                    v[(i, 0)] = Complex::new(re, im);
                }
                let n = v.norm();
                if n < 1e-9 {
                    return self.random_point(rng);
                }
                v /= Complex::new(n, 0.0);
                hc.to_vec(&(&v * v.adjoint()))
            }
            ManifoldKind::Isospectral { size, spectrum } => {
                let hc = self.herm();
                let u = random_unitary(*size, rng);
                let d = CMatrix::from_diagonal(
                    &DVector::from_row_slice(spectrum).map(|s| Complex::new(s, 0.0)),
                );
                hc.to_vec(&(&u * d * u.adjoint()))
            }
        }
    }

    /// Random unit tangent vector at x.
    pub fn random_tangent<R: Rng>(&self, x: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        loop {
            let v = DVector::from_fn(self.ambient_dim, |_, _| standard_normal(rng));
            let t = self.tangent_project(x, &v);
            let n = t.norm();
            if n > 1e-9 {
                return t / n;
            }
        }
    }
}

/// e_j(X) − e_j(spectrum) for j = 1..m.
fn elementary_symmetric_residuals(x: &CMatrix, spectrum: &[f64], m: usize) -> DVector<f64> {
    let target = elementary_symmetric_values(spectrum);
    let mut c = DVector::zeros(m);
    let tr = ctrace(x).re;
    c[0] = tr - target[0];
    if m >= 2 {
        let tr2 = ctrace(&(x * x)).re;
        c[1] = 0.5 * (tr * tr - tr2) - target[1];
    }
    if m == 3 {
        c[2] = x.determinant().re - target[2];
    }
    c
}

fn elementary_symmetric_values(s: &[f64]) -> Vec<f64> {
    let m = s.len();
    let mut e = vec![0.0; m];
    e[0] = s.iter().sum();
    if m >= 2 {
        let mut e2 = 0.0;
        for i in 0..m {
            for j in (i + 1)..m {
                e2 += s[i] * s[j];
            }
        }
        e[1] = e2;
    }
    if m == 3 {
        e[2] = s[0] * s[1] * s[2];
    }
    e
}

/// Frobenius gradients of e_1, …, e_m as Hermitian matrices.
fn elementary_symmetric_gradients(x: &CMatrix, m: usize) -> Vec<CMatrix> {
    let mut grads = Vec::with_capacity(m);
    grads.push(ceye(m));
    if m == 2 {
        // ∇det = adj(X) = (tr X) I − X
        grads.push(ceye(2) * ctrace(x) - x);
    }
    if m == 3 {
        grads.push(ceye(3) * ctrace(x) - x);
        // adj(X) = X² − (tr X) X + e₂(X) I
        let tr = ctrace(x);
        let tr2 = ctrace(&(x * x));
        let e2 = (tr * tr - tr2) * Complex::new(0.5, 0.0);
        grads.push(x * x - x * tr + ceye(3) * e2);
    }
    grads
}

/// Validated orthogonal projection of an ambient vector onto the tangent
/// space at x.
pub fn project_to_tangent(
    m: &ManifoldSpec,
    x: &AmbientPoint,
    v: &DVector<f64>,
) -> Result<TangentVector> {
    let residual = m.constraint_residual(x.coords());
    if residual > m.tols.tau_on {
        return Err(Error::OffManifold { residual, tol: m.tols.tau_on });
    }
    let rank = m.constraint_jacobian_rank(x.coords());
    if rank != m.constraint_rank_expected() {
        return Err(Error::RankDeficient { rank, expected: m.constraint_rank_expected() });
    }
    let direction = m.tangent_project(x.coords(), v);
    Ok(TangentVector { base: x.clone(), direction })
}

/// Validated retraction of a near-manifold ambient vector.
pub fn retract(m: &ManifoldSpec, x: &DVector<f64>) -> Result<AmbientPoint> {
    AmbientPoint::new(m.retract(x)?)
}

/// On-manifold test: residual within τ_on and full-rank Jacobian.
pub fn on_manifold(m: &ManifoldSpec, x: &AmbientPoint) -> bool {
    m.on_manifold(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::herm::HermCoords;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sphere2() -> ManifoldSpec {
        ManifoldSpec::new("s2", ManifoldKind::Sphere { ambient_dim: 3 }, ManifoldTols::default())
            .unwrap()
    }

    fn cp2() -> ManifoldSpec {
        ManifoldSpec::new("cp2", ManifoldKind::Rank1Projector { size: 3 }, ManifoldTols::default())
            .unwrap()
    }

    fn flag3() -> ManifoldSpec {
        ManifoldSpec::new(
            "flag3",
            ManifoldKind::Isospectral { size: 3, spectrum: vec![0.0, 1.0, 2.0] },
            ManifoldTols::default(),
        )
        .unwrap()
    }

    #[test]
    fn sphere_projection_kills_normal_component() {
        let m = sphere2();
        let x = AmbientPoint::from_slice(&[0.0, 0.0, 1.0]).unwrap();
        let v = DVector::from_row_slice(&[1.0, 2.0, 5.0]);
        let t = project_to_tangent(&m, &x, &v).unwrap();
        assert!((t.direction - DVector::from_row_slice(&[1.0, 2.0, 0.0])).norm() < 1e-14);
    }

    #[test]
    fn projection_is_identity_on_tangent_vectors() {
        let m = sphere2();
        let x = AmbientPoint::from_slice(&[1.0, 0.0, 0.0]).unwrap();
        let v = DVector::from_row_slice(&[0.0, 3.0, -2.0]);
        let t = project_to_tangent(&m, &x, &v).unwrap();
        assert!((t.direction - v).norm() < 1e-14);
    }

    #[test]
    fn purely_normal_vector_projects_to_zero() {
        let m = sphere2();
        let x = AmbientPoint::from_slice(&[1.0, 0.0, 0.0]).unwrap();
        let v = DVector::from_row_slice(&[3.0, 0.0, 0.0]);
        let t = project_to_tangent(&m, &x, &v).unwrap();
        assert!(t.norm() < 1e-14);
    }

    #[test]
    fn sphere_retraction_normalises() {
        let m = sphere2();
        let y = m.retract(&DVector::from_row_slice(&[0.0, 0.0, 2.0])).unwrap();
        assert!((y - DVector::from_row_slice(&[0.0, 0.0, 1.0])).norm() < 1e-15);
    }

    #[test]
    fn on_manifold_examples() {
        let m = sphere2();
        assert!(on_manifold(&m, &AmbientPoint::from_slice(&[1.0, 0.0, 0.0]).unwrap()));
        assert!(!on_manifold(&m, &AmbientPoint::from_slice(&[2.0, 0.0, 0.0]).unwrap()));

        let p = cp2();
        let hc = HermCoords::new(3);
        let mut e11 = CMatrix::zeros(3, 3);
        e11[(0, 0)] = Complex::new(1.0, 0.0);
        let x = AmbientPoint::new(hc.to_vec(&e11)).unwrap();
        assert!(on_manifold(&p, &x));
    }

    #[test]
    fn retraction_is_idempotent_on_manifold_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in [sphere2(), cp2(), flag3()] {
            for _ in 0..10 {
                let x = m.random_point(&mut rng);
                let y = m.retract(&x).unwrap();
                assert!((&y - &x).norm() < 1e-10, "{} retraction moved a manifold point", m.name);
            }
        }
    }

    #[test]
    fn closed_form_projector_matches_jacobian_kernel_projector() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in [sphere2(), cp2(), flag3()] {
            for _ in 0..8 {
                let x = m.random_point(&mut rng);
                let basis = m.tangent_basis(&x).unwrap();
                let v = DVector::from_fn(m.ambient_dim, |_, _| standard_normal(&mut rng));
                let closed = m.tangent_project(&x, &v);
                let viaj = &basis * (basis.transpose() * &v);
                assert!(
                    (&closed - &viaj).norm() < 1e-9,
                    "{}: closed-form and kernel projector disagree: {:.3e}",
                    m.name,
                    (&closed - &viaj).norm()
                );
            }
        }
    }

    #[test]
    fn tangent_projector_rank_equals_intrinsic_dim() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for m in [sphere2(), cp2(), flag3()] {
            for _ in 0..100 {
                let x = m.random_point(&mut rng);
                assert_eq!(
                    m.constraint_jacobian_rank(&x),
                    m.constraint_rank_expected(),
                    "{}",
                    m.name
                );
                assert!(m.tangent_basis(&x).is_ok());
            }
        }
    }

    #[test]
    fn cp2_retraction_matches_brute_force_nearest_projector() {
        // Brute force: minimise ‖X − vv*‖_F over unit vectors v by projected
        // gradient ascent on v*Xv from many starts, independent of the
        // eigendecomposition route used by retract().
        let m = cp2();
        let hc = HermCoords::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut e11 = CMatrix::zeros(3, 3);
        e11[(0, 0)] = Complex::new(1.0, 0.0);
        let mut noise = CMatrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                let re = standard_normal(&mut rng);
                let im = standard_normal(&mut rng);
                noise[(i, j)] = Complex::new(0.003 * re, 0.003 * im);
            }
        }
        let noise = (&noise + noise.adjoint()) * Complex::new(0.5, 0.0);
        let x = &e11 * Complex::new(0.98, 0.0) + noise;

        let retracted = hc.to_matrix(&m.retract(&hc.to_vec(&x)).unwrap());

        let mut best: Option<(f64, CMatrix)> = None;
        for _ in 0..40 {
            let mut v = CMatrix::from_fn(3, 1, |_, _| {
                let re = standard_normal(&mut rng);
                let im = standard_normal(&mut rng);
                Complex::new(re, im)
            });
            v /= Complex::new(v.norm(), 0.0);
            for _ in 0..500 {
                let g = &x * &v;
                let rayleigh = (v.adjoint() * &g)[(0, 0)].re;
                let step = &g - &v * Complex::new(rayleigh, 0.0);
                v += step * Complex::new(0.5, 0.0);
                v /= Complex::new(v.norm(), 0.0);
            }
            let p = &v * v.adjoint();
            let dist = (&x - &p).norm();
            if best.as_ref().map_or(true, |(d, _)| dist < *d) {
                best = Some((dist, p));
            }
        }
        let (_, brute) = best.unwrap();
        assert!(
            (&retracted - &brute).norm() < 1e-7,
            "retraction disagrees with brute-force nearest projector: {:.3e}",
            (&retracted - &brute).norm()
        );
    }

    #[test]
    fn rejects_repeated_spectrum() {
        let r = ManifoldSpec::new(
            "bad",
            ManifoldKind::Isospectral { size: 3, spectrum: vec![0.0, 0.0, 1.0] },
            ManifoldTols::default(),
        );
        assert!(r.is_err());
    }
}
