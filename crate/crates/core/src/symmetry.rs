//! Compact connected groups acting linearly and isometrically on the
//! ambient space.
//!
//! A group is specified by skew-symmetric ambient generators; elements are
//! produced through the matrix exponential of generator combinations, which
//! is all the built-in tori and rotation groups need. Matrix scenarios use
//! the realified adjoint generators from [`crate::herm`], so conjugation
//! X ↦ gXg* appears here as plain matrix-vector action.

use crate::error::{Error, Result};
use crate::manifold::{AmbientPoint, ManifoldSpec};
use crate::morse::InvariantFunction;
use crate::solve::{dedup_points, multistart_refine, start_rng, RefineOptions};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// A compact connected group given by ambient skew-symmetric generators.
#[derive(Debug, Clone)]
pub struct GroupActionSpec {
    pub name: String,
    pub group_dim: usize,
    generators: Vec<DMatrix<f64>>,
}

/// An ambient orthogonal matrix together with the parameter that produced it.
#[derive(Debug, Clone)]
pub struct GroupElement {
    pub matrix: DMatrix<f64>,
    pub theta: DVector<f64>,
}

impl GroupActionSpec {
    pub fn new(name: impl Into<String>, generators: Vec<DMatrix<f64>>) -> Result<Self> {
        for (i, a) in generators.iter().enumerate() {
            if a.nrows() != a.ncols() {
                return Err(Error::Config(format!("generator {i} is not square")));
            }
            let skew = (a + a.transpose()).norm();
            if skew > 1e-12 {
                return Err(Error::Config(format!(
                    "generator {i} is not skew-symmetric (residual {skew:.3e})"
                )));
            }
        }
        let group_dim = generators.len();
        Ok(GroupActionSpec { name: name.into(), group_dim, generators })
    }

    pub fn generators(&self) -> &[DMatrix<f64>] {
        &self.generators
    }

    /// exp(Σ θᵢ Aᵢ) as an ambient orthogonal matrix.
    pub fn sample_element(&self, theta: &DVector<f64>) -> GroupElement {
        assert_eq!(theta.len(), self.group_dim);
        let n = self.generators.first().map_or(0, |a| a.nrows());
        let mut combo = DMatrix::zeros(n, n);
        for (a, &t) in self.generators.iter().zip(theta.iter()) {
            combo += a * t;
        }
        GroupElement { matrix: combo.exp(), theta: theta.clone() }
    }

    /// Haar sample for tori: θ uniform in [0, 2π)^d.
    pub fn random_element<R: Rng>(&self, rng: &mut R) -> GroupElement {
        let theta = DVector::from_fn(self.group_dim, |_, _| {
            rng.random_range(0.0..std::f64::consts::TAU)
        });
        self.sample_element(&theta)
    }

    /// Induced Lie-algebra field of generator i at x.
    pub fn induced_field(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.generators[i] * x
    }

    /// N×d matrix whose columns are the generator fields at x.
    pub fn field_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = x.len();
        let mut m = DMatrix::zeros(n, self.group_dim);
        for i in 0..self.group_dim {
            m.set_column(i, &self.induced_field(i, x));
        }
        m
    }

    /// Q = Σ AᵢᵀAᵢ; the quadratic form xᵀQx = Σ‖Âᵢ(x)‖² vanishes exactly on
    /// the fixed-point set.
    pub fn fixed_point_quadratic(&self, ambient_dim: usize) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(ambient_dim, ambient_dim);
        for a in &self.generators {
            q += a.transpose() * a;
        }
        q
    }
}

/// Apply a group element to an on-manifold point; the image is validated to
/// land back on M.
pub fn act(m: &ManifoldSpec, g: &GroupElement, x: &AmbientPoint) -> Result<AmbientPoint> {
    let residual = m.constraint_residual(x.coords());
    if residual > m.tols.tau_on {
        return Err(Error::OffManifold { residual, tol: m.tols.tau_on });
    }
    let y = &g.matrix * x.coords();
    let res_y = m.constraint_residual(&y);
    if res_y > m.tols.tau_on {
        return Err(Error::OffManifold { residual: res_y, tol: m.tols.tau_on });
    }
    AmbientPoint::new(y)
}

/// True iff every generator field vanishes at x to the given tolerance.
pub fn is_fixed_point(spec: &GroupActionSpec, x: &AmbientPoint, tol: f64) -> bool {
    (0..spec.group_dim).all(|i| spec.induced_field(i, x.coords()).norm() <= tol)
}

/// Max over sampled (g, x) of |f(g·x) − f(x)|.
pub fn invariance_residual(
    m: &ManifoldSpec,
    spec: &GroupActionSpec,
    f: &InvariantFunction,
    n_samples: usize,
    seed: u64,
) -> f64 {
    let mut worst = 0.0_f64;
    for k in 0..n_samples {
        let mut rng = start_rng(seed, k as u64);
        let x = m.random_point(&mut rng);
        let g = spec.random_element(&mut rng);
        let gx = &g.matrix * &x;
        worst = worst.max((f.value(&gx) - f.value(&x)).abs());
    }
    worst
}

/// Max over sampled (g, x, y) of |⟨gx, gy⟩ − ⟨x, y⟩| plus the orthogonality
/// defect of the sampled elements. Gates metric invariance of the action.
pub fn metric_invariance_residual(
    m: &ManifoldSpec,
    spec: &GroupActionSpec,
    n_samples: usize,
    seed: u64,
) -> f64 {
    let mut worst = 0.0_f64;
    for k in 0..n_samples {
        let mut rng = start_rng(seed ^ 0x5151, k as u64);
        let g = spec.random_element(&mut rng);
        let n = g.matrix.nrows();
        let defect = (g.matrix.transpose() * &g.matrix - DMatrix::identity(n, n)).norm();
        worst = worst.max(defect);
        let x = m.random_point(&mut rng);
        let y = m.random_point(&mut rng);
        let gx = &g.matrix * &x;
        let gy = &g.matrix * &y;
        worst = worst.max((gx.dot(&gy) - x.dot(&y)).abs());
    }
    worst
}

/// Max constraint residual of g·x over sampled (g, x): the action must map
/// M into M.
pub fn action_preserves_manifold_residual(
    m: &ManifoldSpec,
    spec: &GroupActionSpec,
    n_samples: usize,
    seed: u64,
) -> f64 {
    let mut worst = 0.0_f64;
    for k in 0..n_samples {
        let mut rng = start_rng(seed ^ 0xa7a7, k as u64);
        let g = spec.random_element(&mut rng);
        let x = m.random_point(&mut rng);
        worst = worst.max(m.constraint_residual(&(&g.matrix * &x)));
    }
    worst
}

#[derive(Debug, Clone, Copy)]
pub struct FixedPointSearchOptions {
    /// Generator fields below this norm count as vanishing.
    pub tol: f64,
    pub dedup_radius: f64,
    /// Cluster diameter beyond `continuum_factor × dedup_radius` is a continuum.
    pub continuum_factor: f64,
    pub refine: RefineOptions,
}

impl Default for FixedPointSearchOptions {
    fn default() -> Self {
        FixedPointSearchOptions {
            tol: 1e-8,
            dedup_radius: 1e-5,
            continuum_factor: 20.0,
            refine: RefineOptions::default(),
        }
    }
}

/// Multistart enumeration of the fixed-point set M^G.
///
/// Minimises F(x) = Σᵢ ‖Âᵢ(x)‖² over M from seeded random starts and keeps
/// the deduplicated minima with F below tol². Errors with
/// `FixedSetNotFinite` when the fixed set has positive dimension — detected
/// either by F vanishing on a fat fraction of random probes (e.g. a trivial
/// group) or by minima chaining into a continuum.
pub fn enumerate_fixed_points(
    m: &ManifoldSpec,
    spec: &GroupActionSpec,
    n_starts: usize,
    seed: u64,
    opts: &FixedPointSearchOptions,
) -> Result<Vec<AmbientPoint>> {
    let q = spec.fixed_point_quadratic(m.ambient_dim);
    let objective = InvariantFunction::quadratic("fixed-point-objective", q);
    let tol_sq = opts.tol * opts.tol;

    // Positive-measure fixed sets: probe random points directly.
    let probes = 50;
    let mut vanishing = 0;
    for k in 0..probes {
        let mut rng = start_rng(seed ^ 0xf1f1, k as u64);
        let x = m.random_point(&mut rng);
        if objective.value(&x) <= tol_sq {
            vanishing += 1;
        }
    }
    if vanishing * 2 >= probes {
        return Err(Error::FixedSetNotFinite {
            detail: format!("{vanishing}/{probes} random probes are already fixed"),
        });
    }

    let refined = multistart_refine(m, &objective, n_starts, seed, &opts.refine);
    let minima: Vec<_> = refined.into_iter().filter(|r| r.value <= tol_sq).collect();
    let reps = dedup_points(minima, opts.dedup_radius, opts.continuum_factor).map_err(|e| {
        match e {
            Error::NonFiniteCrit { detail } => Error::FixedSetNotFinite { detail },
            other => other,
        }
    })?;
    let mut out = Vec::with_capacity(reps.len());
    for r in reps {
        out.push(AmbientPoint::new(r.location)?);
    }
    // dedup_points sorts by (objective value, lex); fixed points all have
    // objective ~0, so order is effectively lexicographic as required.
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{ManifoldKind, ManifoldTols};

    fn sphere2() -> ManifoldSpec {
        ManifoldSpec::new("s2", ManifoldKind::Sphere { ambient_dim: 3 }, ManifoldTols::default())
            .unwrap()
    }

    fn so2_z() -> GroupActionSpec {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        GroupActionSpec::new("so2-z", vec![a]).unwrap()
    }

    #[test]
    fn rotation_by_pi_flips_equator_point() {
        let m = sphere2();
        let g = so2_z().sample_element(&DVector::from_row_slice(&[std::f64::consts::PI]));
        let x = AmbientPoint::from_slice(&[1.0, 0.0, 0.0]).unwrap();
        let y = act(&m, &g, &x).unwrap();
        assert!((y.coords() - DVector::from_row_slice(&[-1.0, 0.0, 0.0])).norm() < 1e-12);
    }

    #[test]
    fn identity_element_fixes_everything() {
        let m = sphere2();
        let g = so2_z().sample_element(&DVector::from_row_slice(&[0.0]));
        let x = AmbientPoint::from_slice(&[0.3, 0.4, (1.0_f64 - 0.25).sqrt()]).unwrap();
        let y = act(&m, &g, &x).unwrap();
        assert!((y.coords() - x.coords()).norm() < 1e-14);
    }

    #[test]
    fn poles_are_fixed_equator_is_not() {
        let spec = so2_z();
        let pole = AmbientPoint::from_slice(&[0.0, 0.0, 1.0]).unwrap();
        let eq = AmbientPoint::from_slice(&[1.0, 0.0, 0.0]).unwrap();
        assert!(is_fixed_point(&spec, &pole, 1e-8));
        assert!(!is_fixed_point(&spec, &eq, 1e-8));
    }

    #[test]
    fn fixed_point_enumeration_finds_the_poles() {
        let m = sphere2();
        let spec = so2_z();
        let pts =
            enumerate_fixed_points(&m, &spec, 60, 3, &FixedPointSearchOptions::default()).unwrap();
        assert_eq!(pts.len(), 2);
        for p in &pts {
            assert!(p.coords()[2].abs() > 1.0 - 1e-9);
        }
    }

    #[test]
    fn trivial_group_is_rejected_as_non_finite() {
        let m = sphere2();
        let spec = GroupActionSpec::new("trivial", vec![]).unwrap();
        let r = enumerate_fixed_points(&m, &spec, 20, 3, &FixedPointSearchOptions::default());
        assert!(matches!(r, Err(Error::FixedSetNotFinite { .. })));
    }

    #[test]
    fn height_is_invariant_x1_is_not() {
        let m = sphere2();
        let spec = so2_z();
        let height = InvariantFunction::linear("height", DVector::from_row_slice(&[0.0, 0.0, 1.0]));
        let probe = InvariantFunction::linear("x1", DVector::from_row_slice(&[1.0, 0.0, 0.0]));
        assert!(invariance_residual(&m, &spec, &height, 100, 5) < 1e-12);
        assert!(invariance_residual(&m, &spec, &probe, 100, 5) > 0.1);
    }

    #[test]
    fn metric_and_manifold_preservation() {
        let m = sphere2();
        let spec = so2_z();
        assert!(metric_invariance_residual(&m, &spec, 50, 9) < 1e-10);
        assert!(action_preserves_manifold_residual(&m, &spec, 50, 9) < 1e-9);
    }

    #[test]
    fn generator_criterion_agrees_with_group_criterion() {
        let m = sphere2();
        let spec = so2_z();
        let mut rng = start_rng(77, 0);
        for _ in 0..20 {
            let x = AmbientPoint::new(m.random_point(&mut rng)).unwrap();
            let fixed = is_fixed_point(&spec, &x, 1e-8);
            let mut moved = false;
            for k in 0..50 {
                let g = spec.random_element(&mut start_rng(78, k));
                let y = act(&m, &g, &x).unwrap();
                if (y.coords() - x.coords()).norm() > 1e-7 {
                    moved = true;
                    break;
                }
            }
            assert_eq!(fixed, !moved);
        }
    }
}
