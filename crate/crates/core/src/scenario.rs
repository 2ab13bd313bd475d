//! Built-in scenario registry.
//!
//! Scenario names are a closed set: every scenario carries analytic
//! derivatives whose correctness is part of the test surface, so
//! user-defined manifolds are out of scope.

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::herm::{CMatrix, HermCoords};
use crate::manifold::{ManifoldKind, ManifoldSpec, ManifoldTols};
use crate::morse::InvariantFunction;
use crate::symmetry::GroupActionSpec;
use nalgebra::{Complex, DMatrix, DVector};

/// A fully assembled scenario: manifold, group action, invariant function
/// and the facts the certificates are checked against.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub manifold: ManifoldSpec,
    pub group: GroupActionSpec,
    pub function: InvariantFunction,
    pub group_desc: String,
    /// Weyl-group order for flag scenarios; None elsewhere.
    pub weyl_order: Option<usize>,
    pub expected_critical_count: usize,
    pub euler_characteristic: i64,
    /// Default multistart count for critical/fixed enumeration.
    pub multistart: usize,
}

/// Descriptor row for `morse-lab list`.
#[derive(Debug, Clone)]
pub struct ScenarioInfo {
    pub name: &'static str,
    pub manifold: &'static str,
    pub dimension: usize,
    pub group: &'static str,
    pub expected_critical_count: usize,
}

pub const SCENARIO_NAMES: [&str; 4] = ["sphere-height", "cp2-torus", "flag-su2", "flag-su3"];

pub fn list() -> Vec<ScenarioInfo> {
    vec![
        ScenarioInfo {
            name: "sphere-height",
            manifold: "unit sphere S² ⊂ ℝ³",
            dimension: 2,
            group: "SO(2) about the z-axis",
            expected_critical_count: 2,
        },
        ScenarioInfo {
            name: "cp2-torus",
            manifold: "rank-1 Hermitian 3×3 projectors (CP²)",
            dimension: 4,
            group: "T² diagonal torus",
            expected_critical_count: 3,
        },
        ScenarioInfo {
            name: "flag-su2",
            manifold: "Hermitian 2×2 with spectrum {−1, 1}",
            dimension: 2,
            group: "T¹ diagonal torus",
            expected_critical_count: 2,
        },
        ScenarioInfo {
            name: "flag-su3",
            manifold: "Hermitian 3×3 with spectrum {0, 1, 2}",
            dimension: 6,
            group: "T² diagonal torus",
            expected_critical_count: 6,
        },
    ]
}

/// Skew-Hermitian torus generator i·diag(d) for su(m).
fn torus_generator(m: usize, entries: &[f64]) -> CMatrix {
    let mut a = CMatrix::zeros(m, m);
    for (k, &d) in entries.iter().enumerate() {
        a[(k, k)] = Complex::new(0.0, d);
    }
    a
}

/// Diagonal Hermitian matrix as a realified coordinate vector.
fn diag_coeffs(entries: &[f64]) -> DVector<f64> {
    let m = entries.len();
    let hc = HermCoords::new(m);
    let mut d = CMatrix::zeros(m, m);
    for (k, &v) in entries.iter().enumerate() {
        d[(k, k)] = Complex::new(v, 0.0);
    }
    hc.to_vec(&d)
}

fn check_generic_diagonal(entries: &[f64]) -> Result<()> {
    for i in 0..entries.len() {
        for j in (i + 1)..entries.len() {
            if (entries[i] - entries[j]).abs() < 1e-9 {
                return Err(Error::Config(format!(
                    "function coefficients diag({entries:?}) have a repeated entry; \
                     the restriction would not be Morse"
                )));
            }
        }
    }
    Ok(())
}

/// Build a built-in scenario with the given tolerances.
pub fn build(name: &str, tols: &Tolerances) -> Result<Scenario> {
    let mt = ManifoldTols { tau_on: tols.tau_on, tau_tan: tols.tau_tan };
    match name {
        "sphere-height" => {
            let manifold = ManifoldSpec::new("sphere-S2", ManifoldKind::Sphere { ambient_dim: 3 }, mt)?;
            let rot_z = DMatrix::from_row_slice(
                3,
                3,
                &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            );
            let group = GroupActionSpec::new("so2-z", vec![rot_z])?;
            let function =
                InvariantFunction::linear("height-z", DVector::from_row_slice(&[0.0, 0.0, 1.0]));
            Ok(Scenario {
                name: name.into(),
                manifold,
                group,
                function,
                group_desc: "SO(2)".into(),
                weyl_order: None,
                expected_critical_count: 2,
                euler_characteristic: 2,
                multistart: 200,
            })
        }
        "cp2-torus" => {
            let manifold = ManifoldSpec::new("cp2", ManifoldKind::Rank1Projector { size: 3 }, mt)?;
            let hc = HermCoords::new(3);
            let a1 = hc.realify_ad(&torus_generator(3, &[1.0, -1.0, 0.0]));
            let a2 = hc.realify_ad(&torus_generator(3, &[0.0, 1.0, -1.0]));
            let group = GroupActionSpec::new("t2-diagonal", vec![a1, a2])?;
            let d = [0.0, 1.0, 2.0];
            check_generic_diagonal(&d)?;
            let function = InvariantFunction::linear("trace-diag012", diag_coeffs(&d));
            Ok(Scenario {
                name: name.into(),
                manifold,
                group,
                function,
                group_desc: "T²".into(),
                weyl_order: None,
                expected_critical_count: 3,
                euler_characteristic: 3,
                multistart: 600,
            })
        }
        "flag-su2" => {
            let manifold = ManifoldSpec::new(
                "flag-su2",
                ManifoldKind::Isospectral { size: 2, spectrum: vec![-1.0, 1.0] },
                mt,
            )?;
            let hc = HermCoords::new(2);
            let a1 = hc.realify_ad(&torus_generator(2, &[1.0, -1.0]));
            let group = GroupActionSpec::new("t1-diagonal", vec![a1])?;
            let d = [0.0, 1.0];
            check_generic_diagonal(&d)?;
            let function = InvariantFunction::linear("trace-diag01", diag_coeffs(&d));
            Ok(Scenario {
                name: name.into(),
                manifold,
                group,
                function,
                group_desc: "T¹".into(),
                weyl_order: Some(2),
                expected_critical_count: 2,
                euler_characteristic: 2,
                multistart: 200,
            })
        }
        "flag-su3" => build_flag_su3(&[0.0, 1.0, 2.0], tols, true),
        other => Err(Error::Config(format!(
            "unknown scenario '{other}'; available: {}",
            SCENARIO_NAMES.join(", ")
        ))),
    }
}

/// flag-su3 with a caller-chosen diagonal for the function tr(D·X).
///
/// `validate` enables the genericity guard; passing false admits degenerate
/// diagonals such as diag(0,0,1) so that the resulting non-Morse behaviour
/// can be observed downstream.
pub fn build_flag_su3(d: &[f64; 3], tols: &Tolerances, validate: bool) -> Result<Scenario> {
    let mt = ManifoldTols { tau_on: tols.tau_on, tau_tan: tols.tau_tan };
    let manifold = ManifoldSpec::new(
        "flag-su3",
        ManifoldKind::Isospectral { size: 3, spectrum: vec![0.0, 1.0, 2.0] },
        mt,
    )?;
    let hc = HermCoords::new(3);
    let a1 = hc.realify_ad(&torus_generator(3, &[1.0, -1.0, 0.0]));
    let a2 = hc.realify_ad(&torus_generator(3, &[0.0, 1.0, -1.0]));
    let group = GroupActionSpec::new("t2-diagonal", vec![a1, a2])?;
    if validate {
        check_generic_diagonal(d)?;
    }
    let function = InvariantFunction::linear("trace-diagD", diag_coeffs(d));
    Ok(Scenario {
        name: "flag-su3".into(),
        manifold,
        group,
        function,
        group_desc: "T²".into(),
        weyl_order: Some(6),
        expected_critical_count: 6,
        euler_characteristic: 6,
        multistart: 2000,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_scenarios_build() {
        let tols = Tolerances::default();
        for name in SCENARIO_NAMES {
            let s = build(name, &tols).unwrap();
            assert_eq!(s.name, name);
            assert_eq!(s.manifold.ambient_dim, s.manifold.intrinsic_dim + s.manifold.constraint_rank_expected());
        }
    }

    #[test]
    fn unknown_scenario_is_config_error() {
        assert!(matches!(build("nope", &Tolerances::default()), Err(Error::Config(_))));
    }

    #[test]
    fn degenerate_diagonal_rejected_unless_bypassed() {
        let tols = Tolerances::default();
        assert!(build_flag_su3(&[0.0, 0.0, 1.0], &tols, true).is_err());
        assert!(build_flag_su3(&[0.0, 0.0, 1.0], &tols, false).is_ok());
    }

    #[test]
    fn list_matches_buildable_names() {
        let rows = list();
        assert_eq!(rows.len(), SCENARIO_NAMES.len());
        for row in rows {
            assert!(SCENARIO_NAMES.contains(&row.name));
        }
    }
}
