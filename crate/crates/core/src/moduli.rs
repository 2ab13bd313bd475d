//! Heteroclinic moduli sets M̃(p,q) = W^u(p) ∩ W^s(q) for index-gap-2
//! pairs, represented through direction-sphere sections, plus the
//! certificates for their structure: each connected component is a cylinder
//! over a circle, the group acts on that circle by rotation, and the
//! stabilizer subalgebra is constant of codimension 1 along the component.
//!
//! Sections are taken on whichever side of the pair makes them
//! full-dimensional in the direction sphere: the unstable sphere at p when
//! λ(q) = 0, the stable sphere at q when λ(p) = n. Interior pairs (both
//! codimensions positive) are handled by a targeted search: coarse sphere
//! sampling ranks directions by their closest approach to q, a derivative-free
//! descent refines the best candidates into genuine members, and the member
//! circle is completed by sweeping the group orbit — with every swept
//! direction independently re-classified through the flow, so membership is
//! never assumed from symmetry.

use crate::critical::CriticalPoint;
use crate::error::{Error, Result};
use crate::flow::{
    flow_to_limit_tracked, FlowDirection, FlowLine, FlowField, LimitOptions, StepControl,
    integrate_flow,
};
use crate::manifold::{AmbientPoint, ManifoldSpec};
use crate::morse::{riemannian_hessian_at_critical, InvariantFunction, RiemannianHessian};
use crate::herm::standard_normal;
use crate::solve::start_rng;
use crate::symmetry::GroupActionSpec;
use nalgebra::{DMatrix, DVector};

use rayon::prelude::*;

/// Critical points together with their Hessian eigen-data, computed once
/// per run.
#[derive(Debug, Clone)]
pub struct CriticalTable {
    pub points: Vec<CriticalPoint>,
    pub hessians: Vec<RiemannianHessian>,
}

impl CriticalTable {
    pub fn build(
        m: &ManifoldSpec,
        f: &InvariantFunction,
        points: Vec<CriticalPoint>,
        tau_crit: f64,
        tau_morse: f64,
    ) -> Result<Self> {
        let mut hessians = Vec::with_capacity(points.len());
        for p in &points {
            hessians.push(riemannian_hessian_at_critical(m, f, &p.location, tau_crit, tau_morse)?);
        }
        Ok(CriticalTable { points, hessians })
    }

    pub fn locations(&self) -> Vec<DVector<f64>> {
        self.points.iter().map(|p| p.location.coords().clone()).collect()
    }
}

/// Which side of the pair the section sphere lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionSide {
    /// Directions in E⁻(p), classified by the forward flow.
    UnstableAtP,
    /// Directions in E⁺(q), classified by the backward flow.
    StableAtQ,
}

impl SectionSide {
    pub fn flow_direction(&self) -> FlowDirection {
        match self {
            SectionSide::UnstableAtP => FlowDirection::Forward,
            SectionSide::StableAtQ => FlowDirection::Backward,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SectionSide::UnstableAtP => "unstable_sphere_at_p",
            SectionSide::StableAtQ => "stable_sphere_at_q",
        }
    }
}

/// Per-direction classification outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fate {
    Limit(usize),
    /// Time budget exhausted or step collapse: near a broken trajectory.
    Undetermined,
    /// Dwelled at an intermediate critical point beyond budget.
    Shadowing(usize),
}

/// A sampled direction sphere at a critical point, with fates.
#[derive(Debug, Clone)]
pub struct DirectionSample {
    pub base_id: usize,
    pub side: SectionSide,
    /// N×k orthonormal basis of the eigenspace holding the sphere.
    pub eigenbasis: DMatrix<f64>,
    /// Unit ambient directions inside span(eigenbasis).
    pub directions: Vec<DVector<f64>>,
    pub fates: Vec<Fate>,
    /// Closest approach to the tracked target per direction, when tracked.
    pub min_dist_to_target: Option<Vec<f64>>,
    pub epsilon: f64,
    /// Reference angular spacing between neighbouring directions.
    pub spacing: f64,
    /// True when directions form an ordered angular grid on a circle.
    pub is_circle_grid: bool,
}

/// Angle between unit vectors.
fn angle_between(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos()
}

/// Shooting point for a direction: retract(base + ε·v).
pub fn shoot_point(
    m: &ManifoldSpec,
    base: &DVector<f64>,
    v: &DVector<f64>,
    eps: f64,
) -> Result<DVector<f64>> {
    m.retract(&(base + v * eps))
}

fn classify_directions(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    base: &DVector<f64>,
    directions: &[DVector<f64>],
    side: SectionSide,
    crit_locations: &[DVector<f64>],
    eps: f64,
    ctrl: &StepControl,
    opts: &LimitOptions,
    track: Option<usize>,
) -> (Vec<Fate>, Option<Vec<f64>>) {
    let results: Vec<(Fate, f64)> = directions
        .par_iter()
        .map(|v| {
            let x0 = match shoot_point(m, base, v, eps) {
                Ok(x) => x,
                Err(_) => return (Fate::Undetermined, f64::INFINITY),
            };
            match flow_to_limit_tracked(
                m,
                f,
                &x0,
                side.flow_direction(),
                crit_locations,
                ctrl,
                opts,
                track,
            ) {
                Ok((id, _t, dmin)) => (Fate::Limit(id), dmin),
                Err(Error::SaddleShadowing { near_id }) => (Fate::Shadowing(near_id), f64::INFINITY),
                Err(_) => (Fate::Undetermined, f64::INFINITY),
            }
        })
        .collect();
    let fates = results.iter().map(|(f, _)| f.clone()).collect();
    let dists = track.map(|_| results.iter().map(|(_, d)| *d).collect());
    (fates, dists)
}

/// Evenly spaced directions on the circle of a 2-dimensional eigenspace.
fn circle_grid(basis: &DMatrix<f64>, n: usize) -> Vec<DVector<f64>> {
    (0..n)
        .map(|i| {
            let phi = std::f64::consts::TAU * (i as f64) / (n as f64);
            basis.column(0) * phi.cos() + basis.column(1) * phi.sin()
        })
        .collect()
}

/// Seeded quasi-uniform sample of the unit sphere of a k-dimensional
/// eigenspace (k > 2).
fn sphere_sample(basis: &DMatrix<f64>, n: usize, seed: u64) -> Vec<DVector<f64>> {
    let k = basis.ncols();
    (0..n)
        .map(|i| {
            let mut rng = start_rng(seed ^ 0xd1a, i as u64);
            loop {
                let c = DVector::from_fn(k, |_, _| standard_normal(&mut rng));
                let norm = c.norm();
                if norm > 1e-9 {
                    return basis * (c / norm);
                }
            }
        })
        .collect()
}

fn median_nearest_neighbour_angle(dirs: &[DVector<f64>]) -> f64 {
    let mut nn: Vec<f64> = dirs
        .iter()
        .enumerate()
        .map(|(i, v)| {
            dirs.iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, w)| angle_between(v, w))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    nn.sort_by(|a, b| a.partial_cmp(b).unwrap());
    nn[nn.len() / 2]
}

#[derive(Debug, Clone, Copy)]
pub struct SamplingOptions {
    /// Directions on a circle grid (eigenspace dimension 2).
    pub circle_directions: usize,
    /// Directions for quasi-uniform samples (eigenspace dimension > 2).
    pub sphere_directions: usize,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        SamplingOptions { circle_directions: 720, sphere_directions: 512, epsilon: 1e-4, seed: 0 }
    }
}

/// Sample the unstable direction sphere at p and classify every direction
/// by its forward limit.
pub fn sample_unstable_sphere(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    table: &CriticalTable,
    p_id: usize,
    so: &SamplingOptions,
    ctrl: &StepControl,
    lo: &LimitOptions,
    track: Option<usize>,
) -> DirectionSample {
    sample_side(m, f, table, p_id, SectionSide::UnstableAtP, so, ctrl, lo, track)
}

/// Sample the stable direction sphere at q; directions are classified by
/// the backward (ascending) flow.
pub fn sample_stable_sphere(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    table: &CriticalTable,
    q_id: usize,
    so: &SamplingOptions,
    ctrl: &StepControl,
    lo: &LimitOptions,
    track: Option<usize>,
) -> DirectionSample {
    sample_side(m, f, table, q_id, SectionSide::StableAtQ, so, ctrl, lo, track)
}

fn sample_side(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    table: &CriticalTable,
    base_id: usize,
    side: SectionSide,
    so: &SamplingOptions,
    ctrl: &StepControl,
    lo: &LimitOptions,
    track: Option<usize>,
) -> DirectionSample {
    let hess = &table.hessians[base_id];
    let eigenbasis = match side {
        SectionSide::UnstableAtP => hess.negative_eigenbasis(),
        SectionSide::StableAtQ => hess.positive_eigenbasis(),
    };
    let k = eigenbasis.ncols();
    assert!(k >= 1, "direction sphere needs eigenspace dimension >= 1");
    let (directions, spacing, is_circle_grid) = if k == 2 {
        let dirs = circle_grid(&eigenbasis, so.circle_directions);
        (dirs, std::f64::consts::TAU / so.circle_directions as f64, true)
    } else {
        let dirs = sphere_sample(&eigenbasis, so.sphere_directions, so.seed);
        let spacing = median_nearest_neighbour_angle(&dirs);
        (dirs, spacing, false)
    };
    let base = table.points[base_id].location.coords().clone();
    let crit_locations = table.locations();
    let (fates, min_dist) = classify_directions(
        m, f, &base, &directions, side, &crit_locations, so.epsilon, ctrl, lo, track,
    );
    DirectionSample {
        base_id,
        side,
        eigenbasis,
        directions,
        fates,
        min_dist_to_target: min_dist,
        epsilon: so.epsilon,
        spacing,
        is_circle_grid,
    }
}

/// One connected component of the section of M̃(p,q).
#[derive(Debug, Clone)]
pub struct ModuliComponent {
    pub pair: (usize, usize),
    pub side: SectionSide,
    /// Unit ambient member directions, all with verified fate.
    pub member_directions: Vec<DVector<f64>>,
    /// N×k basis of the eigenspace holding the member sphere.
    pub eigenbasis: DMatrix<f64>,
    pub spacing: f64,
    pub epsilon: f64,
}

/// Minimum members per component before certification is meaningful.
pub const MIN_CLUSTER: usize = 12;

/// Cluster the fate-matching directions of a sample into connected
/// components.
///
/// The target is q for an unstable-side sample and p for a stable-side one.
/// Undetermined directions separate clusters and never join them. An empty
/// member set is a legitimate outcome (the moduli set may be empty).
pub fn moduli_components(
    sample: &DirectionSample,
    p: &CriticalPoint,
    q: &CriticalPoint,
    min_cluster: usize,
) -> Result<Vec<ModuliComponent>> {
    let gap = p.index as i64 - q.index as i64;
    if gap != 2 {
        return Err(Error::IndexGapUnsupported { gap });
    }
    let target = match sample.side {
        SectionSide::UnstableAtP => q.id,
        SectionSide::StableAtQ => p.id,
    };
    let members: Vec<usize> = sample
        .fates
        .iter()
        .enumerate()
        .filter(|(_, f)| **f == Fate::Limit(target))
        .map(|(i, _)| i)
        .collect();
    if members.is_empty() {
        return Ok(Vec::new());
    }

    let clusters: Vec<Vec<usize>> = if sample.is_circle_grid {
        cluster_circle_grid(sample, &members)
    } else {
        cluster_by_radius(sample, &members, 3.0 * sample.spacing)
    };

    let mut out = Vec::new();
    for cluster in clusters {
        if cluster.len() < min_cluster {
            return Err(Error::ResolutionInsufficient { members: cluster.len(), minimum: min_cluster });
        }
        out.push(ModuliComponent {
            pair: (p.id, q.id),
            side: sample.side,
            member_directions: cluster.iter().map(|&i| sample.directions[i].clone()).collect(),
            eigenbasis: sample.eigenbasis.clone(),
            spacing: sample.spacing,
            epsilon: sample.epsilon,
        });
    }
    Ok(out)
}

/// Split ordered circle-grid members at angular gaps above 3× spacing or at
/// intervening undetermined directions.
fn cluster_circle_grid(sample: &DirectionSample, members: &[usize]) -> Vec<Vec<usize>> {
    let n = sample.directions.len();
    let undetermined: Vec<bool> = sample
        .fates
        .iter()
        .map(|f| matches!(f, Fate::Undetermined | Fate::Shadowing(_)))
        .collect();
    // members are already in grid (angular) order
    let mut breaks = Vec::new();
    let k = members.len();
    for w in 0..k {
        let a = members[w];
        let b = members[(w + 1) % k];
        let gap_steps = if w + 1 == k { b + n - a } else { b - a };
        let gap_angle = gap_steps as f64 * sample.spacing;
        let mut separated = gap_angle > 3.0 * sample.spacing;
        if !separated {
            for s in 1..gap_steps {
                if undetermined[(a + s) % n] {
                    separated = true;
                    break;
                }
            }
        }
        if separated {
            breaks.push(w);
        }
    }
    if breaks.is_empty() {
        return vec![members.to_vec()];
    }
    let mut clusters = Vec::new();
    for (bi, &b) in breaks.iter().enumerate() {
        let start = (b + 1) % k;
        let end = breaks[(bi + 1) % breaks.len()];
        let mut cluster = Vec::new();
        let mut idx = start;
        loop {
            cluster.push(members[idx]);
            if idx == end {
                break;
            }
            idx = (idx + 1) % k;
        }
        clusters.push(cluster);
    }
    clusters
}

/// Union-find clustering by chordal-angle radius for quasi-uniform samples.
fn cluster_by_radius(sample: &DirectionSample, members: &[usize], radius: f64) -> Vec<Vec<usize>> {
    let k = members.len();
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    for i in 0..k {
        for j in (i + 1)..k {
            let a = angle_between(&sample.directions[members[i]], &sample.directions[members[j]]);
            if a <= radius {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut map: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..k {
        let r = find(&mut parent, i);
        map.entry(r).or_default().push(members[i]);
    }
    map.into_values().collect()
}

// ---------------------------------------------------------------------------
// Targeted search for interior pairs (both section codimensions positive).
// ---------------------------------------------------------------------------

/// Find member directions of the (p,q) section by descending the
/// closest-approach-to-q distance over the unstable sphere at p.
///
/// Returns directions whose trajectories are genuinely captured at q.
pub fn targeted_member_search(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    table: &CriticalTable,
    coarse: &DirectionSample,
    q_id: usize,
    max_seeds: usize,
    ctrl: &StepControl,
    lo: &LimitOptions,
) -> Vec<DVector<f64>> {
    let dists = match &coarse.min_dist_to_target {
        Some(d) => d,
        None => return Vec::new(),
    };
    let base = table.points[coarse.base_id].location.coords().clone();
    let crit_locations = table.locations();

    // Rank coarse directions by closest approach, keep well-separated seeds.
    let mut order: Vec<usize> = (0..coarse.directions.len()).collect();
    order.sort_by(|&a, &b| dists[a].partial_cmp(&dists[b]).unwrap());
    let mut seeds: Vec<usize> = Vec::new();
    for idx in order {
        if !dists[idx].is_finite() {
            break;
        }
        if seeds.iter().all(|&s| {
            angle_between(&coarse.directions[idx], &coarse.directions[s]) > 5.0 * coarse.spacing
        }) {
            seeds.push(idx);
        }
        if seeds.len() >= max_seeds {
            break;
        }
    }

    let objective = |v: &DVector<f64>| -> (Option<usize>, f64) {
        let x0 = match shoot_point(m, &base, v, coarse.epsilon) {
            Ok(x) => x,
            Err(_) => return (None, f64::INFINITY),
        };
        match flow_to_limit_tracked(
            m,
            f,
            &x0,
            coarse.side.flow_direction(),
            &crit_locations,
            ctrl,
            lo,
            Some(q_id),
        ) {
            Ok((id, _, dmin)) => (Some(id), dmin),
            Err(_) => (None, f64::INFINITY),
        }
    };

    let found: Vec<Option<DVector<f64>>> = seeds
        .par_iter()
        .map(|&s| {
            // Pattern search on the direction sphere.
            let mut v = coarse.directions[s].clone();
            let (mut fate, mut best) = objective(&v);
            let mut radius = 2.0 * coarse.spacing;
            let mut evals = 0usize;
            while fate != Some(q_id) && radius > 1e-10 && evals < 600 {
                // Orthonormal moves inside the eigenspace, orthogonal to v.
                let k = coarse.eigenbasis.ncols();
                let mut stacked = DMatrix::zeros(v.len(), k + 1);
                stacked.set_column(0, &v);
                for c in 0..k {
                    stacked.set_column(c + 1, &coarse.eigenbasis.column(c));
                }
                let q_frame = stacked.qr().q();
                let mut improved = false;
                for c in 1..q_frame.ncols() {
                    for sign in [1.0, -1.0] {
                        let cand_raw = &v + q_frame.column(c) * (sign * radius);
                        let cand = &cand_raw / cand_raw.norm();
                        let (cf, cd) = objective(&cand);
                        evals += 1;
                        if cf == Some(q_id) || cd < best {
                            v = cand;
                            fate = cf;
                            best = cd;
                            improved = true;
                            break;
                        }
                    }
                    if improved {
                        break;
                    }
                }
                if !improved {
                    radius *= 0.5;
                }
            }
            if fate == Some(q_id) {
                Some(v)
            } else {
                None
            }
        })
        .collect();
    found.into_iter().flatten().collect()
}

/// Sweep the group orbit of a member direction, re-classifying every swept
/// direction through the flow. Returns verified members and their angular
/// spacing.
///
/// The eigenspace is invariant under the isotropy action at the (fixed)
/// base point, so a generator combination restricts to a skew operator on
/// it; the orbit of a direction is a circle swept in closed form, and the
/// flow check below is what certifies that this circle really lies in the
/// section.
/// Dense sample of the group orbit of a direction, swept in closed form
/// through the effective one-parameter subgroup.
///
/// The generator combination is the fastest-moving one at the direction's
/// shooting point; because the remaining combinations stabilize it (which
/// the stabilizer certificate checks independently), the one-parameter
/// orbit fills the whole direction orbit when that orbit is a circle.
/// Returns just the seed when no combination moves the direction.
pub fn effective_orbit_directions(
    m: &ManifoldSpec,
    spec: &GroupActionSpec,
    base: &DVector<f64>,
    eigenbasis: &DMatrix<f64>,
    seed_dir: &DVector<f64>,
    eps: f64,
    n_sweep: usize,
) -> Result<Vec<DVector<f64>>> {
    let x_c = shoot_point(m, base, seed_dir, eps)?;
    let b = spec.field_matrix(&x_c);
    if b.ncols() == 0 {
        return Ok(vec![seed_dir.clone()]);
    }
    let svd = b.svd(true, true);
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let xi = v_t.row(0).transpose();

    let n = eigenbasis.nrows();
    let mut combo = DMatrix::zeros(n, n);
    for (i, a) in spec.generators().iter().enumerate() {
        combo += a * xi[i];
    }
    // Restriction to the eigenspace (invariant under the isotropy action).
    let restricted = eigenbasis.transpose() * &combo * eigenbasis;
    let c0 = eigenbasis.transpose() * seed_dir;
    let speed = (&restricted * &c0).norm();
    if speed < 1e-10 {
        return Ok(vec![seed_dir.clone()]);
    }
    let period = std::f64::consts::TAU / speed;
    Ok((0..n_sweep)
        .map(|j| {
            let s = period * (j as f64) / (n_sweep as f64);
            let rot = (restricted.clone() * s).exp();
            let c = &rot * &c0;
            let c = &c / c.norm();
            eigenbasis * c
        })
        .collect())
}

pub fn orbit_sweep_members(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    table: &CriticalTable,
    spec: &GroupActionSpec,
    seed_dir: &DVector<f64>,
    eigenbasis: &DMatrix<f64>,
    base_id: usize,
    side: SectionSide,
    target_id: usize,
    n_sweep: usize,
    eps: f64,
    ctrl: &StepControl,
    lo: &LimitOptions,
) -> Result<(Vec<DVector<f64>>, f64)> {
    let base = table.points[base_id].location.coords().clone();
    let directions =
        effective_orbit_directions(m, spec, &base, eigenbasis, seed_dir, eps, n_sweep)?;
    if directions.len() < 2 {
        return Err(Error::Config("group orbit does not move the seed direction".into()));
    }
    let mut spacing_samples: Vec<f64> = directions
        .windows(2)
        .map(|w| angle_between(&w[0], &w[1]))
        .collect();
    spacing_samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let spacing = spacing_samples[spacing_samples.len() / 2].max(1e-12);

    let crit_locations = table.locations();
    let (fates, _) = classify_directions(
        m, f, &base, &directions, side, &crit_locations, eps, ctrl, lo, None,
    );
    let members: Vec<DVector<f64>> = directions
        .into_iter()
        .zip(fates)
        .filter(|(_, fate)| *fate == Fate::Limit(target_id))
        .map(|(d, _)| d)
        .collect();
    Ok((members, spacing))
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

/// Principal-component angle chart for a near-circular direction cloud.
#[derive(Debug, Clone)]
pub struct CircleChart {
    pub center: DVector<f64>,
    pub axis_a: DVector<f64>,
    pub axis_b: DVector<f64>,
}

impl CircleChart {
    /// Best-fit plane of the cloud via the top-2 principal components.
    pub fn fit(cloud: &[DVector<f64>]) -> CircleChart {
        let n = cloud[0].len();
        let mut center = DVector::zeros(n);
        for c in cloud {
            center += c;
        }
        center /= cloud.len() as f64;
        let mut cov = DMatrix::zeros(n, n);
        for c in cloud {
            let d = c - &center;
            cov += &d * d.transpose();
        }
        let se = cov.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| se.eigenvalues[b].partial_cmp(&se.eigenvalues[a]).unwrap());
        let axis_a = se.eigenvectors.column(order[0]).clone_owned();
        let axis_b = se.eigenvectors.column(order[1]).clone_owned();
        CircleChart { center, axis_a, axis_b }
    }

    pub fn angle(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.center;
        d.dot(&self.axis_b).atan2(d.dot(&self.axis_a))
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut x = a % std::f64::consts::TAU;
    if x > std::f64::consts::PI {
        x -= std::f64::consts::TAU;
    }
    if x < -std::f64::consts::PI {
        x += std::f64::consts::TAU;
    }
    x
}

#[derive(Debug, Clone)]
pub struct CircleCertificate {
    pub closed: bool,
    pub max_gap: f64,
    pub gap_threshold: f64,
    pub orbit_hausdorff: f64,
    pub orbit_tol: f64,
    pub pass: bool,
}

/// Certify that a component's member cloud is a closed circle matching the
/// group orbit of one member.
///
/// Closedness: member angles, sorted, have no gap above 3× the sampling
/// spacing (wraparound included). Orbit match: the group orbit of one
/// member direction — swept through the action and renormalised onto the
/// direction sphere — must be within Hausdorff angular distance τ_orbit of
/// the member cloud.
pub fn certify_circle(
    m: &ManifoldSpec,
    comp: &ModuliComponent,
    spec: &GroupActionSpec,
    base: &DVector<f64>,
    orbit_tol: f64,
) -> CircleCertificate {
    let chart = CircleChart::fit(&comp.member_directions);
    let mut angles: Vec<f64> =
        comp.member_directions.iter().map(|d| chart.angle(d)).collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut max_gap = 0.0_f64;
    for i in 0..angles.len() {
        let next = if i + 1 == angles.len() {
            angles[0] + std::f64::consts::TAU
        } else {
            angles[i + 1]
        };
        max_gap = max_gap.max(next - angles[i]);
    }
    let gap_threshold = 3.0 * comp.spacing;
    let closed = max_gap <= gap_threshold;

    // Orbit match, both one-sided distances:
    //  * members must lie near the orbit — measured against a dense
    //    closed-form sweep of the effective one-parameter circle;
    //  * the whole orbit must lie near the members — measured with a
    //    coarse grid over the full θ-cube, which would stick out if the
    //    orbit were higher-dimensional.
    let dense = effective_orbit_directions(
        m,
        spec,
        base,
        &comp.eigenbasis,
        &comp.member_directions[0],
        comp.epsilon,
        1024,
    )
    .unwrap_or_else(|_| vec![comp.member_directions[0].clone()]);
    let coarse = sweep_orbit_directions(comp, spec, 16);
    let members_to_orbit = one_sided_angle(&comp.member_directions, &dense);
    let orbit_to_members = one_sided_angle(&coarse, &comp.member_directions);
    let orbit_hausdorff = members_to_orbit.max(orbit_to_members);
    let pass = closed && orbit_hausdorff <= orbit_tol;
    CircleCertificate { closed, max_gap, gap_threshold, orbit_hausdorff, orbit_tol, pass }
}

/// Directions obtained by acting on one member with a grid of group
/// elements and renormalising back onto the eigenspace sphere.
fn sweep_orbit_directions(
    comp: &ModuliComponent,
    spec: &GroupActionSpec,
    grid_per_dim: usize,
) -> Vec<DVector<f64>> {
    let v = &comp.member_directions[0];
    let d = spec.group_dim;
    let mut out = Vec::new();
    let mut theta = vec![0usize; d];
    let proj = comp.eigenbasis.clone() * comp.eigenbasis.transpose();
    loop {
        let t = DVector::from_fn(d, |i, _| {
            std::f64::consts::TAU * (theta[i] as f64) / (grid_per_dim as f64)
        });
        let g = spec.sample_element(&t);
        let w_raw = proj.clone() * (&g.matrix * v);
        let norm = w_raw.norm();
        if norm > 1e-9 {
            out.push(w_raw / norm);
        }
        // odometer over the d-dimensional θ-grid
        let mut carry = 0;
        while carry < d {
            theta[carry] += 1;
            if theta[carry] < grid_per_dim {
                break;
            }
            theta[carry] = 0;
            carry += 1;
        }
        if carry == d {
            break;
        }
    }
    out
}

fn one_sided_angle(from: &[DVector<f64>], to: &[DVector<f64>]) -> f64 {
    from.iter()
        .map(|x| to.iter().map(|y| angle_between(x, y)).fold(f64::INFINITY, f64::min))
        .fold(0.0_f64, f64::max)
}

#[derive(Debug, Clone)]
pub struct RotationCertificate {
    pub transitive: bool,
    pub sweep_max_gap: f64,
    pub sweep_gap_threshold: f64,
    pub homomorphism_max_err: f64,
    pub base_point_max_err: f64,
    pub linearity_max_err: f64,
    pub windings: Vec<f64>,
    pub tau_angle: f64,
    pub pass: bool,
}

/// Transport of a direction by a group element, staying on the eigenspace
/// sphere. Exact for linear isometries fixing the base point.
pub fn transport_direction(
    comp: &ModuliComponent,
    g_matrix: &DMatrix<f64>,
    v: &DVector<f64>,
) -> DVector<f64> {
    let w = comp.eigenbasis.clone() * (comp.eigenbasis.transpose() * (g_matrix * v));
    let n = w.norm();
    w / n
}

/// Certify that the group acts on the component circle by rotation:
/// angle shifts are additive in θ (homomorphism), independent of the base
/// point, and sweep the whole circle across the generators.
pub fn certify_rotation_action(
    comp: &ModuliComponent,
    spec: &GroupActionSpec,
    theta_grid: usize,
    tau_angle: f64,
) -> RotationCertificate {
    certify_rotation_action_with(comp, spec, theta_grid, tau_angle, |comp, g, v| {
        transport_direction(comp, g, v)
    })
}

/// Variant with a pluggable transport; negative controls inject a corrupted
/// transport here.
pub fn certify_rotation_action_with<T>(
    comp: &ModuliComponent,
    spec: &GroupActionSpec,
    theta_grid: usize,
    tau_angle: f64,
    transport: T,
) -> RotationCertificate
where
    T: Fn(&ModuliComponent, &DMatrix<f64>, &DVector<f64>) -> DVector<f64>,
{
    let chart = CircleChart::fit(&comp.member_directions);
    let n_base = comp.member_directions.len().min(12);
    let stride = (comp.member_directions.len() / n_base).max(1);
    let base_dirs: Vec<&DVector<f64>> =
        comp.member_directions.iter().step_by(stride).take(n_base).collect();
    let d = spec.group_dim;

    let shift = |theta: &DVector<f64>, x: &DVector<f64>| -> f64 {
        let g = spec.sample_element(theta);
        let y = transport(comp, &g.matrix, x);
        wrap_angle(chart.angle(&y) - chart.angle(x))
    };

    let mut all_shifts: Vec<f64> = Vec::new();
    let mut homomorphism_max_err = 0.0_f64;
    let mut base_point_max_err = 0.0_f64;
    let mut linearity_max_err = 0.0_f64;
    let mut windings = Vec::with_capacity(d);

    for gen in 0..d {
        let e_theta = |t: f64| {
            let mut v = DVector::zeros(d);
            v[gen] = t;
            v
        };
        // Unwrapped shift along a dense grid gives the winding number.
        let mut unwrapped = 0.0;
        let mut prev = 0.0;
        let mut grid_shifts = Vec::with_capacity(theta_grid);
        for k in 0..theta_grid {
            let t = std::f64::consts::TAU * (k as f64) / (theta_grid as f64);
            let s = shift(&e_theta(t), base_dirs[0]);
            grid_shifts.push(s);
            all_shifts.push(s);
            if k > 0 {
                unwrapped += wrap_angle(s - prev);
            }
            prev = s;
        }
        let t_last = std::f64::consts::TAU * ((theta_grid - 1) as f64) / (theta_grid as f64);
        let winding = if t_last > 0.0 { unwrapped / t_last } else { 0.0 };
        windings.push(winding);
        let w_int = winding.round();
        for (k, s) in grid_shifts.iter().enumerate() {
            let t = std::f64::consts::TAU * (k as f64) / (theta_grid as f64);
            linearity_max_err = linearity_max_err.max(wrap_angle(s - w_int * t).abs());
        }

        // Homomorphism: δ(θ₁+θ₂) = δ(θ₁) + δ(θ₂) mod 2π.
        for (a, b) in [(0.3, 0.5), (1.1, 0.7), (2.0, 2.5), (0.25, 3.0)] {
            let lhs = shift(&e_theta(a + b), base_dirs[0]);
            let rhs = shift(&e_theta(a), base_dirs[0]) + shift(&e_theta(b), base_dirs[0]);
            homomorphism_max_err = homomorphism_max_err.max(wrap_angle(lhs - rhs).abs());
        }

        // Base-point independence across members.
        for k in [1usize, 3, 5, 7] {
            let t = std::f64::consts::TAU * (k as f64) / 8.0;
            let reference = shift(&e_theta(t), base_dirs[0]);
            for x in base_dirs.iter().skip(1) {
                let s = shift(&e_theta(t), x);
                base_point_max_err = base_point_max_err.max(wrap_angle(s - reference).abs());
            }
        }
    }

    // Transitivity: the achieved shifts must cover the circle.
    let mut sorted: Vec<f64> = all_shifts
        .iter()
        .map(|&s| if s < 0.0 { s + std::f64::consts::TAU } else { s })
        .collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut sweep_max_gap = std::f64::consts::TAU;
    if !sorted.is_empty() {
        sweep_max_gap = 0.0;
        for i in 0..sorted.len() {
            let next = if i + 1 == sorted.len() {
                sorted[0] + std::f64::consts::TAU
            } else {
                sorted[i + 1]
            };
            sweep_max_gap = sweep_max_gap.max(next - sorted[i]);
        }
    }
    // Covers integer windings up to 4 at the default grid.
    let sweep_gap_threshold = 8.0 * std::f64::consts::PI / theta_grid as f64;
    let transitive = sweep_max_gap <= sweep_gap_threshold;

    let pass = transitive
        && homomorphism_max_err <= tau_angle
        && base_point_max_err <= tau_angle;
    RotationCertificate {
        transitive,
        sweep_max_gap,
        sweep_gap_threshold,
        homomorphism_max_err,
        base_point_max_err,
        linearity_max_err,
        windings,
        tau_angle,
        pass,
    }
}

#[derive(Debug, Clone)]
pub struct StabilizerCertificate {
    /// Estimated stabilizer subalgebra dimension at each sampled member.
    pub dims: Vec<usize>,
    pub expected_dim: usize,
    pub max_principal_angle: f64,
    pub angle_tol: f64,
    pub pass: bool,
}

/// Certify that the stabilizer subalgebra has dimension dim G − 1 at every
/// sampled member and is the same subspace across members.
pub fn certify_stabilizer(
    m: &ManifoldSpec,
    comp: &ModuliComponent,
    spec: &GroupActionSpec,
    base: &DVector<f64>,
    n_members: usize,
    angle_tol: f64,
) -> StabilizerCertificate {
    let d = spec.group_dim;
    let expected_dim = d.saturating_sub(1);
    let count = comp.member_directions.len().min(n_members.max(8));
    let stride = (comp.member_directions.len() / count).max(1);
    let mut dims = Vec::new();
    let mut kernels: Vec<DMatrix<f64>> = Vec::new();
    for v in comp.member_directions.iter().step_by(stride).take(count) {
        let x_c = match shoot_point(m, base, v, comp.epsilon) {
            Ok(x) => x,
            Err(_) => {
                dims.push(usize::MAX);
                continue;
            }
        };
        let b = spec.field_matrix(&x_c);
        let svd = b.svd(false, true);
        let smax = svd.singular_values.max();
        let cutoff = (1e-3 * smax).max(1e-12);
        let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
        dims.push(d - rank);
        let v_t = svd.v_t.as_ref().expect("svd v_t");
        let mut kernel = DMatrix::zeros(d, d - rank);
        for (col, row) in (rank..d).enumerate() {
            kernel.set_column(col, &v_t.row(row).transpose());
        }
        kernels.push(kernel);
    }
    let mut max_principal_angle = 0.0_f64;
    for i in 0..kernels.len() {
        for j in (i + 1)..kernels.len() {
            if kernels[i].ncols() == 0 || kernels[i].ncols() != kernels[j].ncols() {
                continue;
            }
            let overlap = kernels[i].transpose() * &kernels[j];
            let svals = overlap.svd(false, false).singular_values;
            let min_cos = svals.iter().cloned().fold(f64::INFINITY, f64::min);
            max_principal_angle = max_principal_angle.max(min_cos.clamp(-1.0, 1.0).acos());
        }
    }
    let pass = dims.iter().all(|&k| k == expected_dim) && max_principal_angle <= angle_tol;
    StabilizerCertificate { dims, expected_dim, max_principal_angle, angle_tol, pass }
}

// ---------------------------------------------------------------------------
// Transversality
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TransversalityReport {
    pub sigma_min: f64,
    pub tau: f64,
    pub rank: usize,
    pub required_rank: usize,
    /// λ(p) + (n − λ(q)) − n, which must equal 2 for a gap-2 pair.
    pub dim_identity: i64,
    /// Set when frame propagation degraded; the pair is then unverified.
    pub conditional: bool,
    pub pass: bool,
}

/// Integrate a p→q connecting line for transversality work, recording every
/// accepted step.
pub fn connecting_line(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    table: &CriticalTable,
    comp: &ModuliComponent,
    ctrl: &StepControl,
    lo: &LimitOptions,
) -> Result<FlowLine> {
    let (p_id, q_id) = comp.pair;
    let v = &comp.member_directions[0];
    match comp.side {
        SectionSide::UnstableAtP => {
            let base = table.points[p_id].location.coords();
            let x0 = shoot_point(m, base, v, comp.epsilon)?;
            record_until_capture(m, f, &x0, FlowDirection::Forward, table, q_id, ctrl, lo)
        }
        SectionSide::StableAtQ => {
            // Ascend from near q to p, then flip the record into a p→q line.
            let base = table.points[q_id].location.coords();
            let x0 = shoot_point(m, base, v, comp.epsilon)?;
            let up = record_until_capture(m, f, &x0, FlowDirection::Backward, table, p_id, ctrl, lo)?;
            let t_end = up.samples.last().map(|(t, _)| *t).unwrap_or(0.0);
            let mut samples: Vec<(f64, AmbientPoint)> =
                up.samples.into_iter().rev().map(|(t, x)| (t_end - t, x)).collect();
            let mut energy: Vec<f64> = up.energy_profile;
            energy.reverse();
            // Times are now increasing and the energy decreasing.
            samples.shrink_to_fit();
            Ok(FlowLine {
                samples,
                energy_profile: energy,
                origin_limit: Some(p_id),
                dest_limit: Some(q_id),
            })
        }
    }
}

fn record_until_capture(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    x0: &DVector<f64>,
    direction: FlowDirection,
    table: &CriticalTable,
    target: usize,
    ctrl: &StepControl,
    lo: &LimitOptions,
) -> Result<FlowLine> {
    // Find the capture time first, then record a fixed-horizon integration.
    let crit_locations = table.locations();
    let (id, t_cap, _) = flow_to_limit_tracked(
        m, f, x0, direction, &crit_locations, ctrl, lo, None,
    )?;
    if id != target {
        return Err(Error::LimitUndetermined { budget: lo.t_max });
    }
    let field = match direction {
        FlowDirection::Forward => FlowField::NegativeGradient,
        FlowDirection::Backward => FlowField::PositiveGradient,
    };
    let mut line =
        integrate_flow(m, f, &AmbientPoint::new(x0.clone())?, t_cap, &field, ctrl)?;
    match direction {
        FlowDirection::Forward => {
            line.dest_limit = Some(target);
        }
        FlowDirection::Backward => {
            line.dest_limit = Some(target);
        }
    }
    Ok(line)
}

/// Propagate unstable/stable tangent frames along a p→q line and measure
/// the smallest principal value of the combined frame at the energy
/// midpoint.
pub fn transversality_check(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    table: &CriticalTable,
    p_id: usize,
    q_id: usize,
    line: &FlowLine,
    tau: f64,
) -> TransversalityReport {
    let n = m.intrinsic_dim;
    let lam_p = table.points[p_id].index;
    let lam_q = table.points[q_id].index;
    let dim_identity = lam_p as i64 + (n as i64 - lam_q as i64) - n as i64;
    let required_rank = n;

    let failure = |conditional: bool| TransversalityReport {
        sigma_min: 0.0,
        tau,
        rank: 0,
        required_rank,
        dim_identity,
        conditional,
        pass: false,
    };

    if line.samples.len() < 3 {
        return failure(true);
    }

    // Energy midpoint sample.
    let phi_mid = 0.5 * (table.points[p_id].value + table.points[q_id].value);
    let mid_idx = line
        .energy_profile
        .iter()
        .position(|&e| e <= phi_mid)
        .unwrap_or(line.samples.len() / 2)
        .clamp(1, line.samples.len() - 2);

    // Seed frames from the Hessian eigenspaces, projected to the tangent
    // spaces at the line's endpoints.
    let u_seed = table.hessians[p_id].negative_eigenbasis();
    let s_seed = table.hessians[q_id].positive_eigenbasis();
    let start = line.samples.first().unwrap().1.coords().clone();
    let end = line.samples.last().unwrap().1.coords().clone();

    let u0 = match orthonormal_tangent_frame(m, &start, &u_seed) {
        Some(fr) => fr,
        None => return failure(true),
    };
    let s0 = match orthonormal_tangent_frame(m, &end, &s_seed) {
        Some(fr) => fr,
        None => return failure(true),
    };

    let forward = propagate_frame(m, f, line, 0, mid_idx, u0, 1.0);
    let backward = propagate_frame(m, f, line, line.samples.len() - 1, mid_idx, s0, -1.0);
    let (u_mid, s_mid) = match (forward, backward) {
        (Some(u), Some(s)) => (u, s),
        _ => return failure(true),
    };

    let x_mid = line.samples[mid_idx].1.coords();
    let t_basis = match m.tangent_basis(x_mid) {
        Ok(b) => b,
        Err(_) => return failure(true),
    };
    let cols = u_mid.ncols() + s_mid.ncols();
    let mut combined = DMatrix::zeros(n, cols);
    combined.view_mut((0, 0), (n, u_mid.ncols())).copy_from(&(t_basis.transpose() * &u_mid));
    combined
        .view_mut((0, u_mid.ncols()), (n, s_mid.ncols()))
        .copy_from(&(t_basis.transpose() * &s_mid));
    let svals = combined.svd(false, false).singular_values;
    let mut sv: Vec<f64> = svals.iter().cloned().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let sigma_min = if sv.len() >= n { sv[n - 1] } else { 0.0 };
    let rank = sv.iter().filter(|&&s| s >= tau).count();
    let pass = sigma_min >= tau && rank >= n && dim_identity == 2;
    TransversalityReport { sigma_min, tau, rank, required_rank, dim_identity, conditional: false, pass }
}

/// Project seed columns to the tangent space at x and orthonormalise.
fn orthonormal_tangent_frame(
    m: &ManifoldSpec,
    x: &DVector<f64>,
    seed: &DMatrix<f64>,
) -> Option<DMatrix<f64>> {
    let k = seed.ncols();
    if k == 0 {
        return Some(DMatrix::zeros(x.len(), 0));
    }
    let mut projected = DMatrix::zeros(x.len(), k);
    for c in 0..k {
        projected.set_column(c, &m.tangent_project(x, &seed.column(c).clone_owned()));
    }
    let qr = projected.qr();
    let q = qr.q();
    let r = qr.r();
    for i in 0..k {
        if r[(i, i)].abs() < 1e-8 {
            return None;
        }
    }
    Some(q)
}

/// RK4 propagation of a tangent frame along stored samples, with Hermite
/// state interpolation, per-step tangent projection and re-orthonormalisation.
/// `sign` +1 follows stored time forward, −1 backward.
fn propagate_frame(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    line: &FlowLine,
    from_idx: usize,
    to_idx: usize,
    mut frame: DMatrix<f64>,
    sign: f64,
) -> Option<DMatrix<f64>> {
    let field = FlowField::NegativeGradient;
    let fd_jacobian = |x: &DVector<f64>, u: &DVector<f64>| -> DVector<f64> {
        let h = 1e-6;
        let xp = x + u * h;
        let xm = x - u * h;
        (field.eval(m, f, &xp) - field.eval(m, f, &xm)) / (2.0 * h)
    };

    let step_range: Vec<(usize, usize)> = if sign > 0.0 {
        (from_idx..to_idx).map(|i| (i, i + 1)).collect()
    } else {
        ((to_idx..from_idx).rev()).map(|i| (i + 1, i)).collect()
    };

    for (ia, ib) in step_range {
        let (ta, xa) = (&line.samples[ia].0, line.samples[ia].1.coords());
        let (tb, xb) = (&line.samples[ib].0, line.samples[ib].1.coords());
        let dt = tb - ta;
        if dt.abs() < 1e-300 {
            continue;
        }
        let fa = field.eval(m, f, xa);
        let fb = field.eval(m, f, xb);
        // Cubic Hermite state interpolation on [ta, tb].
        let interp = |s: f64| -> DVector<f64> {
            let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
            let h10 = s * (1.0 - s) * (1.0 - s);
            let h01 = s * s * (3.0 - 2.0 * s);
            let h11 = s * s * (s - 1.0);
            xa * h00 + &fa * (h10 * dt) + xb * h01 + &fb * (h11 * dt)
        };
        let x_mid = interp(0.5);
        // One classical RK4 step for each frame column over this interval.
        let k_cols = frame.ncols();
        let mut next = DMatrix::zeros(frame.nrows(), k_cols);
        for c in 0..k_cols {
            let v = frame.column(c).clone_owned();
            let k1 = fd_jacobian(xa, &v);
            let k2 = fd_jacobian(&x_mid, &(&v + &k1 * (0.5 * dt)));
            let k3 = fd_jacobian(&x_mid, &(&v + &k2 * (0.5 * dt)));
            let k4 = fd_jacobian(xb, &(&v + &k3 * dt));
            let vb = &v + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            next.set_column(c, &vb);
        }
        if next.iter().any(|v| !v.is_finite()) {
            return None;
        }
        frame = orthonormal_tangent_frame(m, xb, &next)?;
    }
    Some(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical::{enumerate_critical_points, CriticalSearchOptions};
    use crate::manifold::{ManifoldKind, ManifoldTols};
    use crate::symmetry::GroupActionSpec;
    use nalgebra::{DMatrix, DVector};

    fn sphere_setup() -> (ManifoldSpec, InvariantFunction, GroupActionSpec, CriticalTable) {
        let m =
            ManifoldSpec::new("s2", ManifoldKind::Sphere { ambient_dim: 3 }, ManifoldTols::default())
                .unwrap();
        let f = InvariantFunction::linear("height", DVector::from_row_slice(&[0.0, 0.0, 1.0]));
        let a = DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let spec = GroupActionSpec::new("so2-z", vec![a]).unwrap();
        let crit =
            enumerate_critical_points(&m, &f, &spec, 80, 4, &CriticalSearchOptions::default())
                .unwrap();
        let table = CriticalTable::build(&m, &f, crit, 1e-8, 1e-6).unwrap();
        (m, f, spec, table)
    }

    #[test]
    fn sphere_unstable_sample_all_reach_south_pole() {
        let (m, f, _spec, table) = sphere_setup();
        let so = SamplingOptions { circle_directions: 64, ..Default::default() };
        let sample = sample_unstable_sphere(
            &m,
            &f,
            &table,
            1,
            &so,
            &StepControl::default(),
            &LimitOptions::default(),
            None,
        );
        assert!(sample.fates.iter().all(|fa| *fa == Fate::Limit(0)));
        let comps = moduli_components(&sample, &table.points[1], &table.points[0], 12).unwrap();
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].member_directions.len(), 64);
    }

    #[test]
    fn sphere_component_passes_circle_and_rotation_and_stabilizer() {
        let (m, f, spec, table) = sphere_setup();
        let so = SamplingOptions { circle_directions: 240, ..Default::default() };
        let sample = sample_unstable_sphere(
            &m,
            &f,
            &table,
            1,
            &so,
            &StepControl::default(),
            &LimitOptions::default(),
            None,
        );
        let comps = moduli_components(&sample, &table.points[1], &table.points[0], 12).unwrap();
        let comp = &comps[0];

        let circ = certify_circle(
            &m,
            comp,
            &spec,
            table.points[1].location.coords(),
            1e-2 * std::f64::consts::PI,
        );
        assert!(circ.pass, "circle: {circ:?}");

        let rot = certify_rotation_action(comp, &spec, 90, 1e-3);
        assert!(rot.pass, "rotation: {rot:?}");
        // The z-rotation acts by δ(θ) = θ on this component, up to the
        // orientation of the fitted chart.
        assert!((rot.windings[0].abs().round() - 1.0).abs() < 1e-9);
        assert!(rot.linearity_max_err < 1e-6, "linearity {:.3e}", rot.linearity_max_err);

        let stab = certify_stabilizer(
            &m,
            comp,
            &spec,
            table.points[1].location.coords(),
            8,
            1e-4,
        );
        assert!(stab.pass, "stabilizer: {stab:?}");
        assert_eq!(stab.expected_dim, 0);
    }

    #[test]
    fn truncated_half_circle_fails_closedness() {
        let (m, f, spec, table) = sphere_setup();
        let so = SamplingOptions { circle_directions: 90, ..Default::default() };
        let sample = sample_unstable_sphere(
            &m,
            &f,
            &table,
            1,
            &so,
            &StepControl::default(),
            &LimitOptions::default(),
            None,
        );
        let comps = moduli_components(&sample, &table.points[1], &table.points[0], 12).unwrap();
        let mut comp = comps[0].clone();
        let keep = comp.member_directions.len() / 2;
        comp.member_directions.truncate(keep);
        let circ = certify_circle(
            &m,
            &comp,
            &spec,
            table.points[1].location.coords(),
            1e-2 * std::f64::consts::PI,
        );
        assert!(!circ.closed);
        assert!(circ.max_gap > 2.0, "expected a ~π gap, got {:.3}", circ.max_gap);
        let _ = m;
        let _ = f;
    }

    #[test]
    fn corrupted_transport_fails_base_point_independence() {
        let (_m, _f, spec, table) = sphere_setup();
        let so = SamplingOptions { circle_directions: 90, ..Default::default() };
        let m = _m;
        let f = _f;
        let sample = sample_unstable_sphere(
            &m,
            &f,
            &table,
            1,
            &so,
            &StepControl::default(),
            &LimitOptions::default(),
            None,
        );
        let comps = moduli_components(&sample, &table.points[1], &table.points[0], 12).unwrap();
        let comp = &comps[0];
        let chart = CircleChart::fit(&comp.member_directions);
        // Slip the transported direction by an angle that depends on the
        // base point: no rotation action looks like this.
        let rot = certify_rotation_action_with(comp, &spec, 90, 1e-3, |comp, g, v| {
            let w = transport_direction(comp, g, v);
            let slip = 0.1 * chart.angle(v).sin();
            let plane_a = &chart.axis_a;
            let plane_b = &chart.axis_b;
            let a = chart.angle(&w);
            let r = ((&w - &chart.center).dot(plane_a).powi(2)
                + (&w - &chart.center).dot(plane_b).powi(2))
            .sqrt();
            let out = &chart.center
                + plane_a * (r * (a + slip).cos())
                + plane_b * (r * (a + slip).sin());
            let n = out.norm();
            out / n
        });
        assert!(!rot.pass);
        assert!(rot.base_point_max_err > 1e-3);
    }

    #[test]
    fn sphere_transversality_sigma_is_order_one() {
        let (m, f, _spec, table) = sphere_setup();
        let so = SamplingOptions { circle_directions: 64, ..Default::default() };
        let sample = sample_unstable_sphere(
            &m,
            &f,
            &table,
            1,
            &so,
            &StepControl::default(),
            &LimitOptions::default(),
            None,
        );
        let comps = moduli_components(&sample, &table.points[1], &table.points[0], 12).unwrap();
        let line = connecting_line(
            &m,
            &f,
            &table,
            &comps[0],
            &StepControl::default(),
            &LimitOptions::default(),
        )
        .unwrap();
        let rep = transversality_check(&m, &f, &table, 1, 0, &line, 1e-3);
        assert!(rep.pass, "{rep:?}");
        assert!(rep.sigma_min > 1.0, "expected σ ≈ √2, got {:.3}", rep.sigma_min);
        assert_eq!(rep.dim_identity, 2);
    }

    #[test]
    fn rank_deficient_combined_frame_is_detected() {
        // Synthetic: both frames inside the same hyperplane of a 3-dim
        // tangent space leave the combined rank at 2.
        let mut combined = DMatrix::zeros(3, 4);
        combined[(0, 0)] = 1.0;
        combined[(1, 1)] = 1.0;
        combined[(0, 2)] = 1.0;
        combined[(1, 3)] = 1.0;
        let svals = combined.svd(false, false).singular_values;
        let mut sv: Vec<f64> = svals.iter().cloned().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let sigma_min = sv[2];
        assert!(sigma_min < 1e-3);
        let rank = sv.iter().filter(|&&s| s >= 1e-3).count();
        assert!(rank < 3);
    }
}
