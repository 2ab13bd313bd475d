//! Negative-gradient flow integration.
//!
//! The integrator is an adaptive Dormand–Prince 5(4) pair on the ambient
//! field −P(x)∇̄Φ(x), with the nearest-point retraction applied after every
//! accepted step and a strict energy-decrease guard (step halved on
//! violation). Backward orbits integrate the positive gradient field rather
//! than reversing stored trajectories.

use crate::error::{Error, Result};
use crate::manifold::{AmbientPoint, ManifoldSpec};
use crate::morse::InvariantFunction;
use crate::solve::start_rng;
use crate::symmetry::GroupActionSpec;
use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;

/// Step-size controller settings.
#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    /// Energy may rise by at most this much per step before the step is
    /// rejected and halved.
    pub tau_flat: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { rtol: 1e-9, atol: 1e-11, h_init: 1e-3, h_min: 1e-14, h_max: 1.0, tau_flat: 1e-12 }
    }
}

impl StepControl {
    /// Tightened controller for certificate cross-checks.
    pub fn tightened(&self) -> StepControl {
        StepControl { rtol: self.rtol * 1e-2, atol: self.atol * 1e-2, ..*self }
    }

    /// Halved tolerances, used by the classification-stability checks.
    pub fn halved(&self) -> StepControl {
        StepControl { rtol: self.rtol * 0.5, atol: self.atol * 0.5, ..*self }
    }
}

/// Which vector field to integrate.
#[derive(Debug, Clone)]
pub enum FlowField {
    /// ẋ = −P(x) ∇̄Φ(x): the gradient descent flow.
    NegativeGradient,
    /// ẋ = +P(x) ∇̄Φ(x): ascent, used for backward orbits.
    PositiveGradient,
    /// Deliberately non-invariant probe: ẋ = −P(x) W⁻¹ P(x) ∇̄Φ(x) with
    /// anisotropic weights W. Breaks equivariance; negative controls only.
    BrokenMetricProbe(DVector<f64>),
}

impl FlowField {
    pub fn eval(&self, m: &ManifoldSpec, f: &InvariantFunction, x: &DVector<f64>) -> DVector<f64> {
        match self {
            FlowField::NegativeGradient => -m.tangent_project(x, &f.ambient_gradient(x)),
            FlowField::PositiveGradient => m.tangent_project(x, &f.ambient_gradient(x)),
            FlowField::BrokenMetricProbe(w) => {
                let g = m.tangent_project(x, &f.ambient_gradient(x));
                let weighted = DVector::from_fn(g.len(), |i, _| g[i] / w[i]);
                -m.tangent_project(x, &weighted)
            }
        }
    }

    /// Sign of the enforced energy drift: −1 for descent, +1 for ascent.
    fn energy_sign(&self) -> f64 {
        match self {
            FlowField::PositiveGradient => 1.0,
            _ => -1.0,
        }
    }
}

/// A recorded flow line.
#[derive(Debug, Clone)]
pub struct FlowLine {
    /// (t, point) samples at every accepted step, endpoints included.
    pub samples: Vec<(f64, AmbientPoint)>,
    /// Φ along the samples.
    pub energy_profile: Vec<f64>,
    /// Critical point reached as t → −∞, when classified.
    pub origin_limit: Option<usize>,
    /// Critical point reached as t → +∞, when classified.
    pub dest_limit: Option<usize>,
}

impl FlowLine {
    pub fn end(&self) -> &AmbientPoint {
        &self.samples.last().expect("flow line has samples").1
    }
}

// Dormand–Prince 5(4) coefficients.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Stepper<'a> {
    m: &'a ManifoldSpec,
    f: &'a InvariantFunction,
    field: &'a FlowField,
    ctrl: StepControl,
    t: f64,
    x: DVector<f64>,
    phi: f64,
    h: f64,
}

enum StepOutcome {
    Advanced,
    Collapsed,
}

impl<'a> Stepper<'a> {
    fn new(
        m: &'a ManifoldSpec,
        f: &'a InvariantFunction,
        field: &'a FlowField,
        ctrl: StepControl,
        x0: DVector<f64>,
    ) -> Result<Self> {
        let x = m.retract(&x0)?;
        let phi = f.value(&x);
        Ok(Stepper { m, f, field, ctrl, t: 0.0, x, phi, h: ctrl.h_init })
    }

    /// One accepted (error-controlled, energy-monotone, retracted) step of
    /// size at most `h_cap`.
    fn step(&mut self, h_cap: f64) -> Result<StepOutcome> {
        loop {
            let h = self.h.min(h_cap).min(self.ctrl.h_max);
            if h < self.ctrl.h_min {
                return Err(Error::StepCollapse { t: self.t });
            }
            let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
            k.push(self.field.eval(self.m, self.f, &self.x));
            for s in 1..7 {
                let mut y = self.x.clone();
                for (j, kj) in k.iter().enumerate() {
                    let a = A[s - 1][j];
                    if a != 0.0 {
                        y += kj * (a * h);
                    }
                }
                let _ = C[s];
                k.push(self.field.eval(self.m, self.f, &y));
            }
            let mut y5 = self.x.clone();
            let mut err = DVector::zeros(self.x.len());
            for (j, kj) in k.iter().enumerate() {
                if B5[j] != 0.0 {
                    y5 += kj * (B5[j] * h);
                }
                let d = B5[j] - B4[j];
                if d != 0.0 {
                    err += kj * (d * h);
                }
            }
            let scale = self.ctrl.atol + self.ctrl.rtol * self.x.norm().max(y5.norm());
            let err_ratio = err.norm() / scale;
            if !err_ratio.is_finite() {
                self.h = h * 0.2;
                continue;
            }
            if err_ratio > 1.0 {
                self.h = h * (0.9 * err_ratio.powf(-0.2)).clamp(0.2, 1.0);
                continue;
            }
            let retracted = self.m.retract(&y5)?;
            let phi_new = self.f.value(&retracted);
            let drift = (phi_new - self.phi) * (-self.field.energy_sign());
            // drift > 0 means the energy moved the wrong way.
            if drift > self.ctrl.tau_flat {
                self.h = h * 0.5;
                if self.h < self.ctrl.h_min {
                    return Ok(StepOutcome::Collapsed);
                }
                continue;
            }
            self.t += h;
            self.x = retracted;
            self.phi = phi_new;
            let grow = if err_ratio > 1e-12 { 0.9 * err_ratio.powf(-0.2) } else { 5.0 };
            self.h = (h * grow.clamp(0.2, 5.0)).min(self.ctrl.h_max);
            return Ok(StepOutcome::Advanced);
        }
    }
}

/// Integrate for an exact time horizon, recording every accepted step.
pub fn integrate_flow(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    x0: &AmbientPoint,
    horizon: f64,
    field: &FlowField,
    ctrl: &StepControl,
) -> Result<FlowLine> {
    let mut st = Stepper::new(m, f, field, *ctrl, x0.coords().clone())?;
    let mut samples = vec![(0.0, AmbientPoint::new(st.x.clone())?)];
    let mut energy = vec![st.phi];
    while st.t < horizon - 1e-15 {
        match st.step(horizon - st.t)? {
            StepOutcome::Advanced => {
                samples.push((st.t, AmbientPoint::new(st.x.clone())?));
                energy.push(st.phi);
            }
            StepOutcome::Collapsed => break,
        }
    }
    Ok(FlowLine { samples, energy_profile: energy, origin_limit: None, dest_limit: None })
}

/// End point of an exact-horizon integration, without recording.
pub fn flow_endpoint(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    x0: &DVector<f64>,
    horizon: f64,
    field: &FlowField,
    ctrl: &StepControl,
) -> Result<DVector<f64>> {
    let mut st = Stepper::new(m, f, field, *ctrl, x0.clone())?;
    while st.t < horizon - 1e-15 {
        if let StepOutcome::Collapsed = st.step(horizon - st.t)? {
            break;
        }
    }
    Ok(st.x)
}

/// Flow direction for limit classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowDirection {
    Forward,
    Backward,
}

/// Limit-classification options.
#[derive(Debug, Clone, Copy)]
pub struct LimitOptions {
    /// Capture needs distance ≤ r_cap AND gradient norm ≤ grad_cap.
    pub r_cap: f64,
    pub grad_cap: f64,
    pub t_max: f64,
    /// Radius within which time near a critical point counts as dwelling.
    pub dwell_radius: f64,
    /// Cumulative dwell time near a single critical point before the
    /// trajectory is reported as shadowing a broken connection.
    pub dwell_budget: f64,
}

impl Default for LimitOptions {
    fn default() -> Self {
        LimitOptions { r_cap: 1e-6, grad_cap: 1e-7, t_max: 1e3, dwell_radius: 1e-2, dwell_budget: 400.0 }
    }
}

/// Result of following a trajectory to its limit.
pub type LimitOutcome = Result<(usize, f64)>;

/// Integrate from x0 until captured by one of the given critical locations.
///
/// Capture requires both the capture radius and a small gradient norm, so a
/// fast flyby near a saddle does not classify. Budget exhaustion and saddle
/// shadowing are reported as errors, never silently dropped.
pub fn flow_to_limit(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    x0: &DVector<f64>,
    direction: FlowDirection,
    crit_locations: &[DVector<f64>],
    ctrl: &StepControl,
    opts: &LimitOptions,
) -> LimitOutcome {
    flow_to_limit_tracked(m, f, x0, direction, crit_locations, ctrl, opts, None).map(|(id, t, _)| (id, t))
}

/// Same as [`flow_to_limit`], optionally tracking the minimum distance the
/// trajectory achieves to one target location.
pub fn flow_to_limit_tracked(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    x0: &DVector<f64>,
    direction: FlowDirection,
    crit_locations: &[DVector<f64>],
    ctrl: &StepControl,
    opts: &LimitOptions,
    track: Option<usize>,
) -> Result<(usize, f64, f64)> {
    let field = match direction {
        FlowDirection::Forward => FlowField::NegativeGradient,
        FlowDirection::Backward => FlowField::PositiveGradient,
    };
    let mut st = Stepper::new(m, f, &field, *ctrl, x0.clone())?;
    let mut dwell = vec![0.0_f64; crit_locations.len()];
    let mut min_track = track.map(|i| (&st.x - &crit_locations[i]).norm()).unwrap_or(f64::INFINITY);
    loop {
        let t_before = st.t;
        match st.step(opts.t_max - st.t)? {
            StepOutcome::Advanced => {}
            StepOutcome::Collapsed => {
                return Err(Error::StepCollapse { t: st.t });
            }
        }
        let dt = st.t - t_before;
        if let Some(i) = track {
            min_track = min_track.min((&st.x - &crit_locations[i]).norm());
        }
        for (i, c) in crit_locations.iter().enumerate() {
            let dist = (&st.x - c).norm();
            if dist <= opts.r_cap {
                let gnorm = field.eval(m, f, &st.x).norm();
                if gnorm <= opts.grad_cap {
                    return Ok((i, st.t, min_track.min(dist)));
                }
            }
            if dist <= opts.dwell_radius {
                dwell[i] += dt;
                if dwell[i] > opts.dwell_budget {
                    return Err(Error::SaddleShadowing { near_id: i });
                }
            }
        }
        if st.t >= opts.t_max {
            return Err(Error::LimitUndetermined { budget: opts.t_max });
        }
    }
}

/// Certificate for flow equivariance γ_{g·x}(t) = g·γ_x(t).
#[derive(Debug, Clone)]
pub struct EquivarianceCertificate {
    pub max_residual: f64,
    pub samples: usize,
}

/// Compare integrate(g·x, t) against g·integrate(x, t) over sampled
/// (g, x, t ∈ [0, t_span]). Runs at tightened step control.
pub fn equivariance_certificate(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    spec: &GroupActionSpec,
    n_trials: usize,
    seed: u64,
    ctrl: &StepControl,
) -> Result<EquivarianceCertificate> {
    equivariance_residual_for_field(m, f, spec, &FlowField::NegativeGradient, n_trials, seed, ctrl)
}

/// Equivariance residual for an arbitrary field; the broken-metric probe
/// goes through here as the negative control.
pub fn equivariance_residual_for_field(
    m: &ManifoldSpec,
    f: &InvariantFunction,
    spec: &GroupActionSpec,
    field: &FlowField,
    n_trials: usize,
    seed: u64,
    ctrl: &StepControl,
) -> Result<EquivarianceCertificate> {
    let tight = ctrl.tightened();
    let residuals: Vec<Result<f64>> = (0..n_trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = start_rng(seed ^ 0x6571, k as u64);
            let x = m.random_point(&mut rng);
            let g = spec.random_element(&mut rng);
            let t: f64 = rng.random_range(0.0..5.0);
            let gx = &g.matrix * &x;
            let via_gx = flow_endpoint(m, f, &gx, t, field, &tight)?;
            let via_x = flow_endpoint(m, f, &x, t, field, &tight)?;
            Ok((via_gx - &g.matrix * via_x).norm())
        })
        .collect();
    let mut max_residual = 0.0_f64;
    for r in residuals {
        max_residual = max_residual.max(r?);
    }
    Ok(EquivarianceCertificate { max_residual, samples: n_trials })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{ManifoldKind, ManifoldTols};
    use nalgebra::DMatrix;

    fn sphere2() -> ManifoldSpec {
        ManifoldSpec::new("s2", ManifoldKind::Sphere { ambient_dim: 3 }, ManifoldTols::default())
            .unwrap()
    }

    fn height() -> InvariantFunction {
        InvariantFunction::linear("height", DVector::from_row_slice(&[0.0, 0.0, 1.0]))
    }

    /// Closed form for the height flow on S²: with polar angle θ from the
    /// north pole, θ̇ = sin θ, so tan(θ(t)/2) = e^t · tan(θ₀/2).
    fn exact_polar_angle(theta0: f64, t: f64) -> f64 {
        2.0 * ((theta0 / 2.0).tan() * t.exp()).atan()
    }

    #[test]
    fn integrator_matches_closed_form_height_flow() {
        let m = sphere2();
        let f = height();
        let theta0: f64 = 0.1;
        let x0 = AmbientPoint::from_slice(&[theta0.sin(), 0.0, theta0.cos()]).unwrap();
        let ctrl = StepControl::default();
        for t in [0.5, 2.0, 5.0] {
            let end = flow_endpoint(&m, &f, x0.coords(), t, &FlowField::NegativeGradient, &ctrl)
                .unwrap();
            let th = exact_polar_angle(theta0, t);
            let exact = DVector::from_row_slice(&[th.sin(), 0.0, th.cos()]);
            assert!(
                (&end - &exact).norm() < 1e-8,
                "t={t}: integrator error {:.3e}",
                (&end - &exact).norm()
            );
        }
    }

    #[test]
    fn flow_from_upper_hemisphere_reaches_south_pole() {
        let m = sphere2();
        let f = height();
        let x0 = DVector::from_row_slice(&[0.1_f64.sin(), 0.0, 0.1_f64.cos()]);
        let crits =
            vec![DVector::from_row_slice(&[0.0, 0.0, 1.0]), DVector::from_row_slice(&[0.0, 0.0, -1.0])];
        let (id, _t) = flow_to_limit(
            &m,
            &f,
            &x0,
            FlowDirection::Forward,
            &crits,
            &StepControl::default(),
            &LimitOptions::default(),
        )
        .unwrap();
        assert_eq!(id, 1);
        let (id_back, _) = flow_to_limit(
            &m,
            &f,
            &x0,
            FlowDirection::Backward,
            &crits,
            &StepControl::default(),
            &LimitOptions::default(),
        )
        .unwrap();
        assert_eq!(id_back, 0);
    }

    #[test]
    fn constant_flow_at_critical_point() {
        let m = sphere2();
        let f = height();
        let pole = AmbientPoint::from_slice(&[0.0, 0.0, -1.0]).unwrap();
        let line = integrate_flow(&m, &f, &pole, 3.0, &FlowField::NegativeGradient, &StepControl::default())
            .unwrap();
        for (_, p) in &line.samples {
            assert!((p.coords() - pole.coords()).norm() < 1e-10);
        }
    }

    #[test]
    fn energy_profile_is_monotone() {
        let m = sphere2();
        let f = height();
        let x0 = AmbientPoint::from_slice(&[0.3_f64.sin(), 0.0, 0.3_f64.cos()]).unwrap();
        let line = integrate_flow(&m, &f, &x0, 6.0, &FlowField::NegativeGradient, &StepControl::default())
            .unwrap();
        for w in line.energy_profile.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn semigroup_property() {
        let m = sphere2();
        let f = height();
        let ctrl = StepControl::default();
        let mut rng = start_rng(123, 0);
        for _ in 0..5 {
            let x0 = m.random_point(&mut rng);
            let t: f64 = rng.random_range(0.0..2.0);
            let s: f64 = rng.random_range(0.0..2.0);
            let one_shot =
                flow_endpoint(&m, &f, &x0, t + s, &FlowField::NegativeGradient, &ctrl).unwrap();
            let mid = flow_endpoint(&m, &f, &x0, t, &FlowField::NegativeGradient, &ctrl).unwrap();
            let two_shot = flow_endpoint(&m, &f, &mid, s, &FlowField::NegativeGradient, &ctrl).unwrap();
            assert!((one_shot - two_shot).norm() < 1e-8);
        }
    }

    #[test]
    fn equivariance_holds_for_rotations_and_breaks_for_probe() {
        let m = sphere2();
        let f = height();
        let a = DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let spec = GroupActionSpec::new("so2-z", vec![a]).unwrap();
        let ctrl = StepControl::default();
        let cert = equivariance_certificate(&m, &f, &spec, 25, 11, &ctrl).unwrap();
        assert!(cert.max_residual < 1e-8, "residual {:.3e}", cert.max_residual);

        let probe = FlowField::BrokenMetricProbe(DVector::from_row_slice(&[2.0, 1.0, 1.0]));
        let broken =
            equivariance_residual_for_field(&m, &f, &spec, &probe, 25, 11, &ctrl).unwrap();
        assert!(broken.max_residual > 1e-3, "probe residual {:.3e}", broken.max_residual);
    }
}
