//! End-to-end certification pipeline and report assembly.
//!
//! Pipeline order: gates → critical/fixed enumeration → set and count
//! certificates → equivariance (with negative control) → per-pair moduli
//! blocks (shooting, components, circle, rotation, stabilizer,
//! transversality). Deterministic for a given (scenario, seed, config):
//! parallel work is merged in index order and every random stream is
//! derived from the run seed.

use crate::config::ScenarioConfig;
use crate::critical::{
    certify_cr_equals_fixed, certify_weyl_count, enumerate_critical_points, gap_two_pairs,
    index_alternating_sum, CriticalSearchOptions,
};
use crate::error::Result;
use crate::flow::{
    equivariance_certificate, equivariance_residual_for_field, integrate_flow, FlowField,
    LimitOptions, StepControl,
};
use crate::manifold::AmbientPoint;
use crate::moduli::{
    certify_circle, certify_rotation_action, certify_stabilizer, connecting_line,
    moduli_components, orbit_sweep_members, sample_stable_sphere, sample_unstable_sphere,
    targeted_member_search, transversality_check, CircleCertificate, CriticalTable,
    DirectionSample, Fate, ModuliComponent, RotationCertificate, SamplingOptions, SectionSide,
    StabilizerCertificate, TransversalityReport,
};
use crate::morse::riemannian_gradient_vec;
use crate::numdiff::{fd_gradient, fd_hessian_of_gradient, intrinsic_fd_hessian};
use crate::report::{Check, Json};
use crate::scenario::{build, Scenario};
use crate::solve::{start_rng, RefineOptions};
use crate::symmetry::{
    action_preserves_manifold_residual, enumerate_fixed_points, invariance_residual,
    metric_invariance_residual, FixedPointSearchOptions,
};
use nalgebra::DVector;
use std::collections::BTreeMap;
use std::time::Instant;

/// Exit classification of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    /// Every applicable certificate passed.
    Pass,
    /// At least one certificate failed.
    CertificateFailed,
    /// A hypothesis failed upstream (gate, degenerate Hessian, non-finite
    /// sets); certificates were not meaningfully evaluated.
    HypothesisFailure,
}

impl RunStatus {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Pass => 0,
            RunStatus::CertificateFailed => 1,
            RunStatus::HypothesisFailure => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: Json,
    pub status: RunStatus,
    /// Verdict strings by certificate family.
    pub verdicts: BTreeMap<String, String>,
    /// (p_id, q_id) → component count, for stability comparisons.
    pub component_counts: BTreeMap<(usize, usize), usize>,
}

/// Build the named scenario and run the full pipeline.
/// Configuration problems surface as `Err` (exit code 3).
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let scenario = build(&cfg.scenario, &cfg.tolerances)?;
    Ok(run_built_scenario(&scenario, cfg))
}

/// Trajectory/direction dumps collected during a run.
#[derive(Debug, Clone, Default)]
pub struct DumpSet {
    /// (file stem suffix, CSV text)
    pub files: Vec<(String, String)>,
}

/// Run the pipeline for an already-built scenario (lets tests drive
/// corrupted scenarios through the same path).
pub fn run_built_scenario(scenario: &Scenario, cfg: &ScenarioConfig) -> RunOutcome {
    let mut dumps = DumpSet::default();
    run_with_dumps(scenario, cfg, &mut dumps)
}

pub fn run_with_dumps(scenario: &Scenario, cfg: &ScenarioConfig, dumps: &mut DumpSet) -> RunOutcome {
    let t0 = Instant::now();
    let tols = &cfg.tolerances;
    let res = &cfg.resolution;
    let seed = cfg.seed;
    let m = &scenario.manifold;
    let f = &scenario.function;
    let group = &scenario.group;

    let ctrl = StepControl {
        rtol: tols.rtol,
        atol: tols.atol,
        tau_flat: tols.tau_flat,
        ..StepControl::default()
    };
    let lo = LimitOptions {
        r_cap: tols.r_cap,
        grad_cap: 10.0 * tols.tau_crit,
        t_max: tols.t_max,
        dwell_radius: tols.dwell_radius,
        dwell_budget: tols.dwell_budget,
    };

    let mut verdicts: BTreeMap<String, String> = BTreeMap::new();
    let mut hypothesis_failures: Vec<String> = Vec::new();
    let mut root: BTreeMap<String, Json> = BTreeMap::new();
    root.insert("schema".into(), Json::str("morse-lab/report/v1"));
    root.insert(
        "scenario".into(),
        Json::obj(vec![
            ("name", Json::str(&scenario.name)),
            ("manifold", Json::str(&m.name)),
            ("ambient_dim", Json::Int(m.ambient_dim as i64)),
            ("intrinsic_dim", Json::Int(m.intrinsic_dim as i64)),
            ("group", Json::str(&scenario.group_desc)),
            ("group_dim", Json::Int(group.group_dim as i64)),
            ("function", Json::str(&f.name)),
            ("seed", Json::Int(seed as i64)),
        ]),
    );
    root.insert("config".into(), config_json(cfg));

    // ------------------------------------------------------------------
    // Gates
    // ------------------------------------------------------------------
    let t_gates = Instant::now();
    let skew = group
        .generators()
        .iter()
        .map(|a| (a + a.transpose()).norm())
        .fold(0.0_f64, f64::max);
    let gate_skew = Check::le(skew, 1e-12);

    let metric = metric_invariance_residual(m, group, res.gate_samples, seed);
    let gate_metric = Check::le(metric, 1e-10);

    let preserves = action_preserves_manifold_residual(m, group, res.gate_samples, seed);
    let gate_preserves = Check::le(preserves, tols.tau_on);

    let inv = invariance_residual(m, group, f, res.gate_samples.max(100), seed);
    let gate_inv = Check::le(inv, tols.tau_inv);

    // Numerical hygiene: analytic derivatives against central differences.
    let mut grad_fd_err = 0.0_f64;
    let mut hess_fd_err = 0.0_f64;
    for k in 0..16 {
        let mut rng = start_rng(seed ^ 0xfd, k);
        let x = m.random_point(&mut rng);
        let g_analytic = f.ambient_gradient(&x);
        let g_fd = fd_gradient(|y| f.value(y), &x, 1e-6);
        grad_fd_err = grad_fd_err.max((&g_analytic - g_fd).norm() / g_analytic.norm().max(1.0));
        let h_analytic = f.ambient_hessian(&x);
        let h_fd = fd_hessian_of_gradient(|y| f.ambient_gradient(y), &x, 1e-6);
        hess_fd_err = hess_fd_err.max((&h_analytic - h_fd).norm() / h_analytic.norm().max(1.0));
    }
    let gate_grad_fd = Check::le(grad_fd_err, 1e-6);
    let gate_hess_fd = Check::le(hess_fd_err, 1e-5);

    let gates_pass = gate_skew.pass
        && gate_metric.pass
        && gate_preserves.pass
        && gate_inv.pass
        && gate_grad_fd.pass
        && gate_hess_fd.pass;
    if !gates_pass {
        hypothesis_failures.push("scenario gates failed".into());
    }
    root.insert(
        "gates".into(),
        Json::obj(vec![
            ("generator_skew", gate_skew.to_json()),
            ("metric_invariance", gate_metric.to_json()),
            ("action_preserves_manifold", gate_preserves.to_json()),
            ("invariance", gate_inv.to_json()),
            ("gradient_fd", gate_grad_fd.to_json()),
            ("hessian_fd", gate_hess_fd.to_json()),
            ("pass", Json::Bool(gates_pass)),
        ]),
    );
    let gates_elapsed = t_gates.elapsed().as_secs_f64();
    verdicts.insert("gates".into(), pass_str(gates_pass).into());

    if !gates_pass {
        return finish_early(root, verdicts, hypothesis_failures, t0, gates_elapsed);
    }

    // ------------------------------------------------------------------
    // Enumeration: fixed points and critical points
    // ------------------------------------------------------------------
    let t_enum = Instant::now();
    let multistart = if res.multistart > 0 { res.multistart } else { scenario.multistart };
    let refine = RefineOptions { grad_target: tols.newton_target, ..RefineOptions::default() };
    let fp_opts = FixedPointSearchOptions {
        tol: tols.tau_fixed,
        dedup_radius: tols.dedup_radius,
        continuum_factor: 20.0,
        refine,
    };
    let fixed = match enumerate_fixed_points(m, group, multistart, seed, &fp_opts) {
        Ok(v) => v,
        Err(e) => {
            hypothesis_failures.push(format!("fixed-point enumeration: {e}"));
            root.insert("fixed_points".into(), Json::obj(vec![("error", Json::str(e.to_string()))]));
            verdicts.insert("fixed_point_match".into(), "hypothesis-failure".into());
            return finish_early(root, verdicts, hypothesis_failures, t0, gates_elapsed);
        }
    };

    let crit_opts = CriticalSearchOptions {
        dedup_radius: tols.dedup_radius,
        continuum_factor: 20.0,
        tau_crit: tols.tau_crit,
        tau_morse: tols.tau_morse,
        tau_fixed: tols.tau_fixed,
        refine,
    };
    let crit = match enumerate_critical_points(m, f, group, multistart, seed ^ 0xc417, &crit_opts) {
        Ok(v) => v,
        Err(e) => {
            hypothesis_failures.push(format!("critical enumeration: {e}"));
            root.insert(
                "critical_points".into(),
                Json::obj(vec![("error", Json::str(e.to_string()))]),
            );
            verdicts.insert("weyl_count".into(), "hypothesis-failure".into());
            return finish_early(root, verdicts, hypothesis_failures, t0, gates_elapsed);
        }
    };
    let table = match CriticalTable::build(m, f, crit, tols.tau_crit, tols.tau_morse) {
        Ok(t) => t,
        Err(e) => {
            hypothesis_failures.push(format!("critical Hessians: {e}"));
            root.insert(
                "critical_points".into(),
                Json::obj(vec![("error", Json::str(e.to_string()))]),
            );
            verdicts.insert("weyl_count".into(), "hypothesis-failure".into());
            return finish_early(root, verdicts, hypothesis_failures, t0, gates_elapsed);
        }
    };

    root.insert(
        "critical_points".into(),
        Json::Arr(
            table
                .points
                .iter()
                .map(|c| {
                    Json::obj(vec![
                        ("id", Json::Int(c.id as i64)),
                        ("location", Json::floats(c.location.coords().iter())),
                        ("value", Json::Float(c.value)),
                        ("index", Json::Int(c.index as i64)),
                        ("spectrum", Json::floats(c.hessian_spectrum.iter())),
                        ("is_group_fixed", Json::Bool(c.is_group_fixed)),
                        ("grad_norm", Json::Float(c.grad_norm)),
                    ])
                })
                .collect(),
        ),
    );
    root.insert(
        "fixed_points".into(),
        Json::Arr(fixed.iter().map(|p| Json::floats(p.coords().iter())).collect()),
    );

    // Intrinsic FD Hessian cross-check per critical point.
    let mut spectrum_fd_err = 0.0_f64;
    for (c, h) in table.points.iter().zip(table.hessians.iter()) {
        let fd = intrinsic_fd_hessian(m, f, c.location.coords(), &h.tangent_basis, 1e-4);
        let se = fd.symmetric_eigen();
        let mut fd_eigs: Vec<f64> = se.eigenvalues.iter().cloned().collect();
        fd_eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (ev_fd, ev) in fd_eigs.iter().zip(h.eigenvalues.iter()) {
            spectrum_fd_err = spectrum_fd_err.max((ev_fd - ev).abs() / ev.abs().max(1e-12));
        }
    }
    let gate_spectrum_fd = Check::le(spectrum_fd_err, 1e-4);

    // Strict energy decrease along sampled recorded flow lines.
    let mut max_energy_rise = 0.0_f64;
    for k in 0..5u64 {
        let mut rng = start_rng(seed ^ 0xf10f, k);
        let x0 = AmbientPoint::new(m.random_point(&mut rng)).expect("finite random point");
        if riemannian_gradient_vec(m, f, x0.coords()).norm() <= tols.tau_crit {
            continue;
        }
        if let Ok(line) = integrate_flow(m, f, &x0, 8.0, &FlowField::NegativeGradient, &ctrl) {
            for w in line.energy_profile.windows(2) {
                max_energy_rise = max_energy_rise.max(w[1] - w[0]);
            }
        }
    }
    let gate_energy = Check::le(max_energy_rise, tols.tau_flat);

    let euler = index_alternating_sum(&table.points);
    let euler_pass = euler == scenario.euler_characteristic;
    root.insert(
        "euler_characteristic".into(),
        Json::obj(vec![
            ("alternating_sum", Json::Int(euler)),
            ("expected", Json::Int(scenario.euler_characteristic)),
            ("pass", Json::Bool(euler_pass)),
        ]),
    );

    let hygiene_pass =
        gate_spectrum_fd.pass && gate_energy.pass && euler_pass && gate_grad_fd.pass && gate_hess_fd.pass;
    root.insert(
        "numerical_hygiene".into(),
        Json::obj(vec![
            ("hessian_spectrum_fd", gate_spectrum_fd.to_json()),
            ("energy_monotonicity", gate_energy.to_json()),
            ("pass", Json::Bool(hygiene_pass)),
        ]),
    );
    verdicts.insert("numerical_hygiene".into(), pass_str(hygiene_pass).into());

    // ------------------------------------------------------------------
    // Set certificates
    // ------------------------------------------------------------------
    let match_cert = certify_cr_equals_fixed(&table.points, &fixed, tols.dedup_radius);
    root.insert(
        "fixed_point_match".into(),
        Json::obj(vec![
            (
                "matched",
                Json::Arr(
                    match_cert
                        .matched
                        .iter()
                        .map(|(c, j)| Json::arr(vec![Json::Int(*c as i64), Json::Int(*j as i64)]))
                        .collect(),
                ),
            ),
            (
                "unmatched_critical",
                Json::Arr(match_cert.unmatched_critical.iter().map(|&i| Json::Int(i as i64)).collect()),
            ),
            (
                "unmatched_fixed",
                Json::Arr(match_cert.unmatched_fixed.iter().map(|&i| Json::Int(i as i64)).collect()),
            ),
            ("radius", Json::Float(match_cert.radius)),
            ("expected_count", Json::Int(scenario.expected_critical_count as i64)),
            ("critical_count", Json::Int(table.points.len() as i64)),
            ("fixed_count", Json::Int(fixed.len() as i64)),
            ("pass", Json::Bool(match_cert.pass)),
        ]),
    );
    let match_pass = match_cert.pass
        && table.points.len() == scenario.expected_critical_count
        && fixed.len() == scenario.expected_critical_count;
    verdicts.insert("fixed_point_match".into(), pass_str(match_pass).into());

    match scenario.weyl_order {
        Some(order) => {
            let weyl = certify_weyl_count(&table.points, order);
            root.insert(
                "weyl_count".into(),
                Json::obj(vec![
                    ("applicable", Json::Bool(true)),
                    ("weyl_order", Json::Int(weyl.weyl_order as i64)),
                    ("count", Json::Int(weyl.count as i64)),
                    ("all_group_fixed", Json::Bool(weyl.all_group_fixed)),
                    ("pass", Json::Bool(weyl.pass)),
                ]),
            );
            verdicts.insert("weyl_count".into(), pass_str(weyl.pass).into());
        }
        None => {
            root.insert(
                "weyl_count".into(),
                Json::obj(vec![
                    ("applicable", Json::Bool(false)),
                    ("status", Json::str("not-applicable")),
                ]),
            );
            verdicts.insert("weyl_count".into(), "not-applicable".into());
        }
    }
    let enum_elapsed = t_enum.elapsed().as_secs_f64();

    // ------------------------------------------------------------------
    // Flow equivariance with negative control
    // ------------------------------------------------------------------
    let t_equiv = Instant::now();
    let equiv = equivariance_certificate(m, f, group, res.equivariance_samples, seed ^ 0xe9, &ctrl);
    let (equiv_check, equiv_samples) = match equiv {
        Ok(c) => (Check::le(c.max_residual, tols.tau_equiv), c.samples),
        Err(e) => {
            hypothesis_failures.push(format!("equivariance integration: {e}"));
            (Check::le(f64::MAX.min(1e300), tols.tau_equiv), 0)
        }
    };
    // Weight the ambient coordinate the group moves the most, so the probe
    // genuinely breaks the symmetry (a coordinate fixed by the action, such
    // as a diagonal matrix entry under torus conjugation, would not).
    let probe_weights = {
        let moved = |i: usize| -> f64 {
            group.generators().iter().map(|a| a.column(i).norm()).fold(0.0_f64, f64::max)
        };
        let idx = (0..m.ambient_dim)
            .max_by(|&a, &b| moved(a).partial_cmp(&moved(b)).unwrap())
            .unwrap_or(0);
        let mut w = DVector::from_element(m.ambient_dim, 1.0);
        w[idx] = 2.0;
        w
    };
    let broken = equivariance_residual_for_field(
        m,
        f,
        group,
        &FlowField::BrokenMetricProbe(probe_weights),
        (res.equivariance_samples / 4).max(16),
        seed ^ 0xb7,
        &ctrl,
    );
    let control_check = match broken {
        Ok(c) => Check::ge(c.max_residual, 1e-3),
        Err(_) => Check::ge(0.0, 1e-3),
    };
    root.insert(
        "flow_equivariance".into(),
        Json::obj(vec![
            ("certificate", equiv_check.to_json()),
            ("samples", Json::Int(equiv_samples as i64)),
            ("negative_control", control_check.to_json()),
            ("pass", Json::Bool(equiv_check.pass && control_check.pass)),
        ]),
    );
    verdicts.insert(
        "flow_equivariance".into(),
        pass_str(equiv_check.pass && control_check.pass).into(),
    );
    let equiv_elapsed = t_equiv.elapsed().as_secs_f64();

    // ------------------------------------------------------------------
    // Moduli pairs
    // ------------------------------------------------------------------
    let t_pairs = Instant::now();
    let pairs = gap_two_pairs(&table.points);
    let mut pair_blocks = Vec::new();
    let mut component_counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut all_circle = true;
    let mut all_rotation = true;
    let mut all_stabilizer = true;
    let mut all_transversal = true;
    let mut any_conditional = false;

    for &(p_id, q_id) in &pairs {
        let block = process_pair(
            scenario, cfg, &table, p_id, q_id, &ctrl, &lo, seed, dumps,
        );
        component_counts.insert((p_id, q_id), block.components.len());
        for comp in &block.components {
            all_circle &= comp.circle.pass;
            all_rotation &= comp.rotation.pass;
            all_stabilizer &= comp.stabilizer.pass;
            all_transversal &= comp.transversality.pass;
            any_conditional |= comp.transversality.conditional;
        }
        if let Some(err) = &block.error {
            hypothesis_failures.push(format!("pair ({p_id},{q_id}): {err}"));
        }
        pair_blocks.push(block);
    }
    root.insert(
        "pairs".into(),
        Json::Arr(pair_blocks.iter().map(pair_block_json).collect()),
    );

    verdicts.insert("cylinder_components".into(), pass_str(all_circle).into());
    verdicts.insert("rotation_action".into(), pass_str(all_rotation).into());
    verdicts.insert("stabilizer_constancy".into(), pass_str(all_stabilizer).into());
    verdicts.insert(
        "transversality".into(),
        if any_conditional {
            "conditional".into()
        } else {
            pass_str(all_transversal).to_string()
        },
    );
    let pairs_elapsed = t_pairs.elapsed().as_secs_f64();

    // ------------------------------------------------------------------
    // Verdict rollup
    // ------------------------------------------------------------------
    let status = if !hypothesis_failures.is_empty() {
        RunStatus::HypothesisFailure
    } else if verdicts.values().all(|v| v == "pass" || v == "not-applicable") {
        RunStatus::Pass
    } else {
        RunStatus::CertificateFailed
    };
    let overall = match status {
        RunStatus::Pass => "pass",
        RunStatus::CertificateFailed => "fail",
        RunStatus::HypothesisFailure => "hypothesis-failure",
    };
    root.insert(
        "verdicts".into(),
        Json::Obj(verdicts.iter().map(|(k, v)| (k.clone(), Json::str(v.clone()))).collect()),
    );
    root.insert("overall".into(), Json::str(overall));
    if !hypothesis_failures.is_empty() {
        root.insert(
            "hypothesis_failures".into(),
            Json::Arr(hypothesis_failures.iter().map(Json::str).collect()),
        );
    }
    root.insert(
        "timings".into(),
        Json::obj(vec![
            ("gates_s", Json::Float(gates_elapsed)),
            ("enumeration_s", Json::Float(enum_elapsed)),
            ("equivariance_s", Json::Float(equiv_elapsed)),
            ("pairs_s", Json::Float(pairs_elapsed)),
            ("total_s", Json::Float(t0.elapsed().as_secs_f64())),
        ]),
    );

    RunOutcome { report: Json::Obj(root), status, verdicts, component_counts }
}

fn pass_str(b: bool) -> &'static str {
    if b {
        "pass"
    } else {
        "fail"
    }
}

fn finish_early(
    mut root: BTreeMap<String, Json>,
    verdicts: BTreeMap<String, String>,
    hypothesis_failures: Vec<String>,
    t0: Instant,
    gates_elapsed: f64,
) -> RunOutcome {
    root.insert(
        "verdicts".into(),
        Json::Obj(verdicts.iter().map(|(k, v)| (k.clone(), Json::str(v.clone()))).collect()),
    );
    root.insert("overall".into(), Json::str("hypothesis-failure"));
    root.insert(
        "hypothesis_failures".into(),
        Json::Arr(hypothesis_failures.iter().map(Json::str).collect()),
    );
    root.insert(
        "timings".into(),
        Json::obj(vec![
            ("gates_s", Json::Float(gates_elapsed)),
            ("total_s", Json::Float(t0.elapsed().as_secs_f64())),
        ]),
    );
    RunOutcome {
        report: Json::Obj(root),
        status: RunStatus::HypothesisFailure,
        verdicts,
        component_counts: BTreeMap::new(),
    }
}

fn config_json(cfg: &ScenarioConfig) -> Json {
    // Round-trip the serde structs through serde_json, then canonicalise.
    let text = serde_json::to_string(cfg).expect("config serialises");
    let value: serde_json::Value = serde_json::from_str(&text).expect("config reparses");
    canonical_from_serde(&value)
}

fn canonical_from_serde(v: &serde_json::Value) -> Json {
    match v {
        serde_json::Value::Null => Json::Null,
        serde_json::Value::Bool(b) => Json::Bool(*b),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Json::Int(i)
            } else {
                Json::Float(n.as_f64().expect("finite"))
            }
        }
        serde_json::Value::String(s) => Json::str(s.clone()),
        serde_json::Value::Array(items) => {
            Json::Arr(items.iter().map(canonical_from_serde).collect())
        }
        serde_json::Value::Object(map) => {
            Json::Obj(map.iter().map(|(k, v)| (k.clone(), canonical_from_serde(v))).collect())
        }
    }
}

// -------------------------------------------------------------------------
// Pair processing
// -------------------------------------------------------------------------

struct ComponentBlock {
    member_count: usize,
    side: SectionSide,
    circle: CircleCertificate,
    rotation: RotationCertificate,
    stabilizer: StabilizerCertificate,
    transversality: TransversalityReport,
}

struct PairBlock {
    p_id: usize,
    q_id: usize,
    lambda_p: usize,
    lambda_q: usize,
    side_label: String,
    mode: &'static str,
    fate_histogram: BTreeMap<String, usize>,
    sampled_directions: usize,
    components: Vec<ComponentBlock>,
    empty: bool,
    error: Option<String>,
}

fn fate_histogram(sample: &DirectionSample) -> BTreeMap<String, usize> {
    let mut h: BTreeMap<String, usize> = BTreeMap::new();
    for fate in &sample.fates {
        let key = match fate {
            Fate::Limit(id) => format!("limit_{id}"),
            Fate::Undetermined => "undetermined".into(),
            Fate::Shadowing(id) => format!("shadowing_{id}"),
        };
        *h.entry(key).or_insert(0) += 1;
    }
    h
}

#[allow(clippy::too_many_arguments)]
fn process_pair(
    scenario: &Scenario,
    cfg: &ScenarioConfig,
    table: &CriticalTable,
    p_id: usize,
    q_id: usize,
    ctrl: &StepControl,
    lo: &LimitOptions,
    seed: u64,
    dumps: &mut DumpSet,
) -> PairBlock {
    let m = &scenario.manifold;
    let f = &scenario.function;
    let group = &scenario.group;
    let res = &cfg.resolution;
    let tols = &cfg.tolerances;
    let n = m.intrinsic_dim;
    let p = &table.points[p_id];
    let q = &table.points[q_id];

    let so = SamplingOptions {
        circle_directions: res.circle_directions,
        sphere_directions: res.sphere_directions,
        epsilon: res.epsilon,
        seed: seed ^ ((p_id as u64) << 8) ^ (q_id as u64),
    };

    let mut block = PairBlock {
        p_id,
        q_id,
        lambda_p: p.index,
        lambda_q: q.index,
        side_label: String::new(),
        mode: "",
        fate_histogram: BTreeMap::new(),
        sampled_directions: 0,
        components: Vec::new(),
        empty: true,
        error: None,
    };

    // Choose the section side: the direction sphere on which the section has
    // codimension zero, falling back to a targeted search for interior pairs.
    let (components, sample_opt): (Vec<ModuliComponent>, Option<DirectionSample>) = if q.index == 0
    {
        block.mode = "circle_grid";
        let sample = sample_unstable_sphere(m, f, table, p_id, &so, ctrl, lo, None);
        block.side_label = sample.side.label().to_string();
        match moduli_components(&sample, p, q, res.min_cluster) {
            Ok(c) => (c, Some(sample)),
            Err(e) => {
                block.error = Some(e.to_string());
                block.fate_histogram = fate_histogram(&sample);
                block.sampled_directions = sample.directions.len();
                return block;
            }
        }
    } else if p.index == n {
        block.mode = "circle_grid";
        let sample = sample_stable_sphere(m, f, table, q_id, &so, ctrl, lo, None);
        block.side_label = sample.side.label().to_string();
        match moduli_components(&sample, p, q, res.min_cluster) {
            Ok(c) => (c, Some(sample)),
            Err(e) => {
                block.error = Some(e.to_string());
                block.fate_histogram = fate_histogram(&sample);
                block.sampled_directions = sample.directions.len();
                return block;
            }
        }
    } else {
        // Interior pair: the section has positive codimension on both
        // direction spheres. Coarse-sample the unstable sphere to rank
        // closest approaches to q, refine into members, then complete each
        // circle by a flow-verified orbit sweep.
        block.mode = "targeted_sweep";
        let coarse = sample_unstable_sphere(m, f, table, p_id, &so, ctrl, lo, Some(q_id));
        block.side_label = coarse.side.label().to_string();
        block.fate_histogram = fate_histogram(&coarse);
        block.sampled_directions = coarse.directions.len();
        let found =
            targeted_member_search(m, f, table, &coarse, q_id, res.targeted_seeds, ctrl, lo);
        let mut comps: Vec<ModuliComponent> = Vec::new();
        'seeds: for seed_dir in &found {
            for existing in &comps {
                let near = existing
                    .member_directions
                    .iter()
                    .any(|w| w.dot(seed_dir).clamp(-1.0, 1.0).acos() < 5.0 * existing.spacing);
                if near {
                    continue 'seeds;
                }
            }
            match orbit_sweep_members(
                m,
                f,
                table,
                group,
                seed_dir,
                &coarse.eigenbasis,
                p_id,
                SectionSide::UnstableAtP,
                q_id,
                res.sweep_directions,
                res.epsilon,
                ctrl,
                lo,
            ) {
                Ok((members, spacing)) if members.len() >= res.min_cluster => {
                    comps.push(ModuliComponent {
                        pair: (p_id, q_id),
                        side: SectionSide::UnstableAtP,
                        member_directions: members,
                        eigenbasis: coarse.eigenbasis.clone(),
                        spacing,
                        epsilon: res.epsilon,
                    });
                }
                Ok(_) => {}
                Err(_) => {}
            }
        }
        (comps, Some(coarse))
    };

    if let Some(sample) = &sample_opt {
        if block.fate_histogram.is_empty() {
            block.fate_histogram = fate_histogram(sample);
        }
        block.sampled_directions = sample.directions.len();
    }

    block.empty = components.is_empty();
    for comp in &components {
        let base_id = match comp.side {
            SectionSide::UnstableAtP => p_id,
            SectionSide::StableAtQ => q_id,
        };
        let base = table.points[base_id].location.coords().clone();
        let circle = certify_circle(m, comp, group, &base, tols.tau_orbit);
        let rotation = certify_rotation_action(comp, group, res.theta_grid, tols.tau_angle);
        let stabilizer =
            certify_stabilizer(m, comp, group, &base, res.stabilizer_members, tols.tau_principal_angle);
        let transversality = match connecting_line(m, f, table, comp, ctrl, lo) {
            Ok(line) => {
                if cfg.outputs.dump_trajectories {
                    dumps.files.push((
                        format!("pair{p_id}-{q_id}.trajectory.csv"),
                        trajectory_csv(&line),
                    ));
                }
                transversality_check(m, f, table, p_id, q_id, &line, tols.tau_transv)
            }
            Err(_) => TransversalityReport {
                sigma_min: 0.0,
                tau: tols.tau_transv,
                rank: 0,
                required_rank: n,
                dim_identity: p.index as i64 + (n as i64 - q.index as i64) - n as i64,
                conditional: true,
                pass: false,
            },
        };
        if cfg.outputs.dump_directions {
            dumps.files.push((
                format!("pair{p_id}-{q_id}.directions.csv"),
                directions_csv(comp),
            ));
        }
        block.components.push(ComponentBlock {
            member_count: comp.member_directions.len(),
            side: comp.side,
            circle,
            rotation,
            stabilizer,
            transversality,
        });
    }
    block
}

fn trajectory_csv(line: &crate::flow::FlowLine) -> String {
    let mut out = String::new();
    let n = line.samples.first().map_or(0, |(_, p)| p.dim());
    out.push('t');
    for i in 1..=n {
        out.push_str(&format!(",x{i}"));
    }
    out.push_str(",phi\n");
    for ((t, p), phi) in line.samples.iter().zip(line.energy_profile.iter()) {
        out.push_str(&format!("{:.12e}", t));
        for v in p.coords().iter() {
            out.push_str(&format!(",{:.12e}", v));
        }
        out.push_str(&format!(",{:.12e}\n", phi));
    }
    out
}

fn directions_csv(comp: &ModuliComponent) -> String {
    let mut out = String::new();
    let n = comp.member_directions.first().map_or(0, |d| d.len());
    for i in 1..=n {
        if i > 1 {
            out.push(',');
        }
        out.push_str(&format!("d{i}"));
    }
    out.push('\n');
    for d in &comp.member_directions {
        for (i, v) in d.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!("{:.12e}", v));
        }
        out.push('\n');
    }
    out
}

fn pair_block_json(b: &PairBlock) -> Json {
    let mut entries = vec![
        ("p", Json::Int(b.p_id as i64)),
        ("q", Json::Int(b.q_id as i64)),
        ("lambda_p", Json::Int(b.lambda_p as i64)),
        ("lambda_q", Json::Int(b.lambda_q as i64)),
        ("section_side", Json::str(b.side_label.clone())),
        ("mode", Json::str(b.mode)),
        ("sampled_directions", Json::Int(b.sampled_directions as i64)),
        (
            "fates",
            Json::Obj(
                b.fate_histogram
                    .iter()
                    .map(|(k, v)| (k.clone(), Json::Int(*v as i64)))
                    .collect(),
            ),
        ),
        ("component_count", Json::Int(b.components.len() as i64)),
        ("empty", Json::Bool(b.empty)),
        (
            "components",
            Json::Arr(b.components.iter().map(component_json).collect()),
        ),
        ("pass", Json::Bool(b.error.is_none() && b.components.iter().all(component_pass))),
    ];
    if let Some(e) = &b.error {
        entries.push(("error", Json::str(e.clone())));
    }
    Json::obj(entries)
}

fn component_pass(c: &ComponentBlock) -> bool {
    c.circle.pass && c.rotation.pass && c.stabilizer.pass && c.transversality.pass
}

fn component_json(c: &ComponentBlock) -> Json {
    Json::obj(vec![
        ("member_count", Json::Int(c.member_count as i64)),
        ("side", Json::str(c.side.label())),
        (
            "circle",
            Json::obj(vec![
                ("closed", Json::Bool(c.circle.closed)),
                ("max_gap", Check::le(c.circle.max_gap, c.circle.gap_threshold).to_json()),
                (
                    "orbit_hausdorff",
                    Check::le(c.circle.orbit_hausdorff, c.circle.orbit_tol).to_json(),
                ),
                ("pass", Json::Bool(c.circle.pass)),
            ]),
        ),
        (
            "rotation",
            Json::obj(vec![
                ("transitive", Json::Bool(c.rotation.transitive)),
                (
                    "sweep_gap",
                    Check::le(c.rotation.sweep_max_gap, c.rotation.sweep_gap_threshold).to_json(),
                ),
                (
                    "homomorphism",
                    Check::le(c.rotation.homomorphism_max_err, c.rotation.tau_angle).to_json(),
                ),
                (
                    "base_point_independence",
                    Check::le(c.rotation.base_point_max_err, c.rotation.tau_angle).to_json(),
                ),
                ("linearity_max_err", Json::Float(c.rotation.linearity_max_err)),
                ("windings", Json::floats(c.rotation.windings.iter())),
                ("pass", Json::Bool(c.rotation.pass)),
            ]),
        ),
        (
            "stabilizer",
            Json::obj(vec![
                (
                    "dims",
                    Json::Arr(c.stabilizer.dims.iter().map(|&d| Json::Int(d as i64)).collect()),
                ),
                ("expected_dim", Json::Int(c.stabilizer.expected_dim as i64)),
                (
                    "principal_angle",
                    Check::le(c.stabilizer.max_principal_angle, c.stabilizer.angle_tol).to_json(),
                ),
                ("pass", Json::Bool(c.stabilizer.pass)),
            ]),
        ),
        (
            "transversality",
            Json::obj(vec![
                ("sigma_min", Check::ge(c.transversality.sigma_min, c.transversality.tau).to_json()),
                ("rank", Json::Int(c.transversality.rank as i64)),
                ("required_rank", Json::Int(c.transversality.required_rank as i64)),
                ("dim_identity", Json::Int(c.transversality.dim_identity)),
                ("conditional", Json::Bool(c.transversality.conditional)),
                ("pass", Json::Bool(c.transversality.pass)),
            ]),
        ),
        ("pass", Json::Bool(component_pass(c))),
    ])
}
