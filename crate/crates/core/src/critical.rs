//! Critical-point enumeration and the set-level certificates built on it.

use crate::error::{Error, Result};
use crate::manifold::{AmbientPoint, ManifoldSpec};
use crate::morse::{morse_index, riemannian_hessian_at_critical, InvariantFunction};
use crate::solve::{dedup_points, multistart_refine, RefineOptions};
use crate::symmetry::{is_fixed_point, GroupActionSpec};

/// A refined critical point with its Morse data.
#[derive(Debug, Clone)]
pub struct CriticalPoint {
    pub id: usize,
    pub location: AmbientPoint,
    pub value: f64,
    pub index: usize,
    pub hessian_spectrum: Vec<f64>,
    pub is_group_fixed: bool,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct CriticalSearchOptions {
    pub dedup_radius: f64,
    pub continuum_factor: f64,
    pub tau_crit: f64,
    pub tau_morse: f64,
    /// Tolerance for the group-fixed flag.
    pub tau_fixed: f64,
    pub refine: RefineOptions,
}

impl Default for CriticalSearchOptions {
    fn default() -> Self {
        CriticalSearchOptions {
            dedup_radius: 1e-5,
            continuum_factor: 20.0,
            tau_crit: 1e-8,
            tau_morse: 1e-6,
            tau_fixed: 1e-8,
            refine: RefineOptions::default(),
        }
    }
}

/// Multistart enumeration of Cr(Φ) with Hessian spectra and indices.
///
/// Output is deduplicated and sorted by (value, lexicographic location);
/// ids are positions in that order. Degenerate Hessians propagate as
/// errors — they signal a non-Morse scenario, not a certificate failure.
pub fn enumerate_critical_points(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    spec: &GroupActionSpec,
    n_starts: usize,
    seed: u64,
    opts: &CriticalSearchOptions,
) -> Result<Vec<CriticalPoint>> {
    let refined = multistart_refine(m, f, n_starts, seed, &opts.refine);
    let reps = dedup_points(refined, opts.dedup_radius, opts.continuum_factor)?;
    let mut out = Vec::with_capacity(reps.len());
    for (id, r) in reps.into_iter().enumerate() {
        let location = AmbientPoint::new(r.location)?;
        let hess = riemannian_hessian_at_critical(m, f, &location, opts.tau_crit, opts.tau_morse)?;
        let index = morse_index(&hess);
        let is_group_fixed = is_fixed_point(spec, &location, opts.tau_fixed);
        out.push(CriticalPoint {
            id,
            value: r.value,
            index,
            hessian_spectrum: hess.eigenvalues.iter().cloned().collect(),
            is_group_fixed,
            grad_norm: r.grad_norm,
            location,
        });
    }
    Ok(out)
}

/// Set-matching certificate between the critical set and the fixed set.
#[derive(Debug, Clone)]
pub struct SetMatchCertificate {
    /// (critical id, fixed-point index) pairs within the matching radius.
    pub matched: Vec<(usize, usize)>,
    pub unmatched_critical: Vec<usize>,
    pub unmatched_fixed: Vec<usize>,
    pub radius: f64,
    pub pass: bool,
}

/// Match Cr(Φ) against M^G as sets within the given radius.
pub fn certify_cr_equals_fixed(
    crit: &[CriticalPoint],
    fixed: &[AmbientPoint],
    radius: f64,
) -> SetMatchCertificate {
    let mut matched = Vec::new();
    let mut used_fixed = vec![false; fixed.len()];
    let mut unmatched_critical = Vec::new();
    for c in crit {
        let mut best: Option<(usize, f64)> = None;
        for (j, p) in fixed.iter().enumerate() {
            if used_fixed[j] {
                continue;
            }
            let d = (c.location.coords() - p.coords()).norm();
            if d <= radius && best.map_or(true, |(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        match best {
            Some((j, _)) => {
                used_fixed[j] = true;
                matched.push((c.id, j));
            }
            None => unmatched_critical.push(c.id),
        }
    }
    let unmatched_fixed: Vec<usize> =
        (0..fixed.len()).filter(|&j| !used_fixed[j]).collect();
    let pass = unmatched_critical.is_empty() && unmatched_fixed.is_empty();
    SetMatchCertificate { matched, unmatched_critical, unmatched_fixed, radius, pass }
}

/// Weyl-count certificate for flag scenarios: |Cr(Φ)| equals the Weyl-group
/// order and every critical point is torus-fixed.
#[derive(Debug, Clone)]
pub struct WeylCertificate {
    pub weyl_order: usize,
    pub count: usize,
    pub all_group_fixed: bool,
    pub pass: bool,
}

pub fn certify_weyl_count(crit: &[CriticalPoint], weyl_order: usize) -> WeylCertificate {
    let count = crit.len();
    let all_group_fixed = crit.iter().all(|c| c.is_group_fixed);
    WeylCertificate { weyl_order, count, all_group_fixed, pass: count == weyl_order && all_group_fixed }
}

/// Σ_p (−1)^{λ(p)}; must equal the Euler characteristic of the scenario.
pub fn index_alternating_sum(crit: &[CriticalPoint]) -> i64 {
    crit.iter().map(|c| if c.index % 2 == 0 { 1 } else { -1 }).sum()
}

#[derive(Debug, Clone, Copy)]
pub struct IndexGap(pub i64);

/// Ordered pairs (p, q) with λ(p) − λ(q) = 2, the pairs the moduli module
/// accepts.
pub fn gap_two_pairs(crit: &[CriticalPoint]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for p in crit {
        for q in crit {
            if p.index as i64 - q.index as i64 == 2 {
                pairs.push((p.id, q.id));
            }
        }
    }
    pairs
}

/// Guard for moduli construction.
pub fn require_gap_two(p: &CriticalPoint, q: &CriticalPoint) -> Result<()> {
    let gap = p.index as i64 - q.index as i64;
    if gap != 2 {
        return Err(Error::IndexGapUnsupported { gap });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{ManifoldKind, ManifoldTols};
    use nalgebra::{DMatrix, DVector};

    fn sphere_setup() -> (ManifoldSpec, InvariantFunction, GroupActionSpec) {
        let m =
            ManifoldSpec::new("s2", ManifoldKind::Sphere { ambient_dim: 3 }, ManifoldTols::default())
                .unwrap();
        let f = InvariantFunction::linear("height", DVector::from_row_slice(&[0.0, 0.0, 1.0]));
        let a = DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let spec = GroupActionSpec::new("so2-z", vec![a]).unwrap();
        (m, f, spec)
    }

    #[test]
    fn sphere_height_has_two_critical_points() {
        let (m, f, spec) = sphere_setup();
        let crit = enumerate_critical_points(&m, &f, &spec, 100, 4, &CriticalSearchOptions::default())
            .unwrap();
        assert_eq!(crit.len(), 2);
        assert!((crit[0].value + 1.0).abs() < 1e-9);
        assert_eq!(crit[0].index, 0);
        assert!((crit[1].value - 1.0).abs() < 1e-9);
        assert_eq!(crit[1].index, 2);
        assert!(crit.iter().all(|c| c.is_group_fixed));
        assert_eq!(index_alternating_sum(&crit), 2);
    }

    #[test]
    fn set_match_passes_on_poles_and_reports_leftovers() {
        let (m, f, spec) = sphere_setup();
        let crit = enumerate_critical_points(&m, &f, &spec, 100, 4, &CriticalSearchOptions::default())
            .unwrap();
        let fixed = vec![
            AmbientPoint::from_slice(&[0.0, 0.0, -1.0]).unwrap(),
            AmbientPoint::from_slice(&[0.0, 0.0, 1.0]).unwrap(),
        ];
        let cert = certify_cr_equals_fixed(&crit, &fixed, 1e-5);
        assert!(cert.pass);
        assert_eq!(cert.matched.len(), 2);

        let extra = vec![
            AmbientPoint::from_slice(&[0.0, 0.0, -1.0]).unwrap(),
            AmbientPoint::from_slice(&[0.0, 0.0, 1.0]).unwrap(),
            AmbientPoint::from_slice(&[1.0, 0.0, 0.0]).unwrap(),
        ];
        let cert = certify_cr_equals_fixed(&crit, &extra, 1e-5);
        assert!(!cert.pass);
        assert_eq!(cert.unmatched_fixed, vec![2]);
    }

    #[test]
    fn gap_pairs_on_sphere() {
        let (m, f, spec) = sphere_setup();
        let crit = enumerate_critical_points(&m, &f, &spec, 100, 4, &CriticalSearchOptions::default())
            .unwrap();
        let pairs = gap_two_pairs(&crit);
        assert_eq!(pairs, vec![(1, 0)]);
        assert!(require_gap_two(&crit[1], &crit[0]).is_ok());
        assert!(matches!(
            require_gap_two(&crit[0], &crit[1]),
            Err(Error::IndexGapUnsupported { gap: -2 })
        ));
    }
}
