//! Multistart search for zeros of the projected gradient field.
//!
//! Refinement is a damped Newton iteration on the tangent space using the
//! Lagrange-corrected Hessian, with a pseudo-inverse solve so saddles are
//! reached as readily as extrema. When a Newton step fails to reduce the
//! gradient norm, the iteration falls back to descent on ½‖grad‖².

use crate::error::{Error, Result};
use crate::manifold::ManifoldSpec;
use crate::morse::{riemannian_gradient_vec, riemannian_hessian, InvariantFunction};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy)]
pub struct RefineOptions {
    /// Stop when the projected gradient norm falls below this.
    pub grad_target: f64,
    pub max_iters: usize,
    /// Trust cap on the Newton step length.
    pub max_step: f64,
    /// Pseudo-inverse cutoff, relative to the largest |eigenvalue|.
    pub pinv_rel_cutoff: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions { grad_target: 1e-12, max_iters: 80, max_step: 0.5, pinv_rel_cutoff: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct RefinedPoint {
    pub location: DVector<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iters: usize,
}

/// Damped Newton refinement of a critical point of f restricted to M.
pub fn refine_critical_point(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    x0: &DVector<f64>,
    opts: &RefineOptions,
) -> Result<RefinedPoint> {
    let mut x = m.retract(x0)?;
    let mut grad = riemannian_gradient_vec(m, f, &x);
    let mut gnorm = grad.norm();
    for iter in 0..opts.max_iters {
        if gnorm <= opts.grad_target {
            let value = f.value(&x);
            return Ok(RefinedPoint { location: x, value, grad_norm: gnorm, iters: iter });
        }
        let hess = riemannian_hessian(m, f, &x)?;
        let gred = hess.tangent_basis.transpose() * &grad;
        let n = gred.len();

        // Pseudo-inverse Newton step in the eigenbasis.
        let max_abs =
            hess.eigenvalues.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs())).max(1e-300);
        let cutoff = opts.pinv_rel_cutoff * max_abs;
        let eigvecs = hess.tangent_basis.transpose() * &hess.eigenvectors; // n×n reduced frame
        let mut step_red = DVector::zeros(n);
        for k in 0..n {
            let lam = hess.eigenvalues[k];
            if lam.abs() > cutoff {
                let coeff = eigvecs.column(k).dot(&gred) / lam;
                step_red -= eigvecs.column(k) * coeff;
            }
        }
        let mut snorm = step_red.norm();
        if snorm > opts.max_step {
            step_red *= opts.max_step / snorm;
            snorm = opts.max_step;
        }
        let _ = snorm;

        let step_amb = &hess.tangent_basis * &step_red;
        let mut accepted = false;
        let mut alpha = 1.0;
        for _ in 0..8 {
            if let Ok(cand) = m.retract(&(&x + &step_amb * alpha)) {
                let cgrad = riemannian_gradient_vec(m, f, &cand);
                let cn = cgrad.norm();
                if cn < gnorm * (1.0 - 1e-4 * alpha) || cn <= opts.grad_target {
                    x = cand;
                    grad = cgrad;
                    gnorm = cn;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            // Fall back to descent on the merit function ½‖grad‖², whose
            // tangential gradient is H·grad.
            let descent_red = -(&hess.reduced * &gred);
            let dn = descent_red.norm();
            if dn < 1e-300 {
                break;
            }
            let descent_amb = &hess.tangent_basis * (descent_red / dn);
            let mut eta = opts.max_step.min(0.1);
            let mut improved = false;
            for _ in 0..20 {
                if let Ok(cand) = m.retract(&(&x + &descent_amb * eta)) {
                    let cgrad = riemannian_gradient_vec(m, f, &cand);
                    let cn = cgrad.norm();
                    if cn < gnorm {
                        x = cand;
                        grad = cgrad;
                        gnorm = cn;
                        improved = true;
                        break;
                    }
                }
                eta *= 0.5;
            }
            if !improved {
                break;
            }
        }
    }
    Ok(RefinedPoint { location: x.clone(), value: f.value(&x), grad_norm: gnorm, iters: opts.max_iters })
}

/// Deterministic per-start RNG stream.
pub fn start_rng(seed: u64, index: u64) -> ChaCha8Rng {
    // SplitMix64-style mixing keeps streams independent of each other.
    let mut z = seed ^ index.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

/// Multistart refinement from seeded random on-manifold points.
///
/// Parallel over starts; the output order is the start index, so the result
/// is deterministic for a given (seed, n_starts).
pub fn multistart_refine(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    n_starts: usize,
    seed: u64,
    opts: &RefineOptions,
) -> Vec<RefinedPoint> {
    (0..n_starts)
        .into_par_iter()
        .map(|i| {
            let mut rng = start_rng(seed, i as u64);
            let x0 = m.random_point(&mut rng);
            refine_critical_point(m, f, &x0, opts).ok()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .filter(|r| r.grad_norm <= opts.grad_target * 10.0)
        .collect()
}

/// Single-linkage deduplication of refined points.
///
/// Returns cluster representatives (smallest gradient norm per cluster),
/// sorted by (value, lexicographic location). Errors if any cluster has a
/// diameter well above the dedup radius — that is a continuum, not a point.
pub fn dedup_points(
    points: Vec<RefinedPoint>,
    radius: f64,
    continuum_factor: f64,
) -> Result<Vec<RefinedPoint>> {
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (&points[i].location - &points[j].location).norm() <= radius {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut clusters: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        clusters.entry(r).or_default().push(i);
    }
    let mut reps = Vec::new();
    for members in clusters.values() {
        let mut diameter = 0.0_f64;
        for (a, &i) in members.iter().enumerate() {
            for &j in members.iter().skip(a + 1) {
                diameter = diameter.max((&points[i].location - &points[j].location).norm());
            }
        }
        if diameter > continuum_factor * radius {
            return Err(Error::NonFiniteCrit {
                detail: format!(
                    "cluster of {} refined points has diameter {:.3e} (radius {:.3e})",
                    members.len(),
                    diameter,
                    radius
                ),
            });
        }
        let best = members
            .iter()
            .min_by(|&&a, &&b| points[a].grad_norm.partial_cmp(&points[b].grad_norm).unwrap())
            .unwrap();
        reps.push(points[*best].clone());
    }
    reps.sort_by(|a, b| {
        a.value
            .partial_cmp(&b.value)
            .unwrap()
            .then_with(|| lex_cmp(&a.location, &b.location))
    });
    Ok(reps)
}

pub fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for i in 0..a.len().min(b.len()) {
        match a[i].partial_cmp(&b[i]).unwrap() {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{ManifoldKind, ManifoldTols};

    #[test]
    fn refines_to_sphere_poles() {
        let m =
            ManifoldSpec::new("s2", ManifoldKind::Sphere { ambient_dim: 3 }, ManifoldTols::default())
                .unwrap();
        let f = InvariantFunction::linear("height", DVector::from_row_slice(&[0.0, 0.0, 1.0]));
        let reps = dedup_points(
            multistart_refine(&m, &f, 50, 7, &RefineOptions::default()),
            1e-5,
            20.0,
        )
        .unwrap();
        assert_eq!(reps.len(), 2);
        assert!((reps[0].value + 1.0).abs() < 1e-10);
        assert!((reps[1].value - 1.0).abs() < 1e-10);
        assert!(reps.iter().all(|r| r.grad_norm <= 1e-11));
    }
}
