//! Ground-truth landmark-inertial system: inputs, propagation, sensors and the
//! GNSS availability schedule.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{mixed_euler_step, ConstantMatrices, Mat3xX, Rotation, SeElement, Vec3};

pub const DEFAULT_GRAVITY: f64 = 9.81;

#[derive(Clone, Debug, PartialEq)]
pub struct SystemParams {
    pub gravity: f64,
    /// Unit reference magnetic field direction in the inertial frame.
    pub mag_reference: Vec3,
    /// Initial landmark positions.
    pub landmarks: Vec<Vec3>,
}

impl SystemParams {
    /// Normalizes `mag_reference`; rejects an empty landmark set.
    pub fn new(gravity: f64, mag_reference: Vec3, landmarks: Vec<Vec3>) -> Result<Self> {
        if landmarks.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one landmark is required".into(),
            ));
        }
        let norm = mag_reference.norm();
        if !(norm > 0.0) || !gravity.is_finite() {
            return Err(Error::InvalidParameter(
                "magnetic reference must be non-zero and gravity finite".into(),
            ));
        }
        Ok(Self {
            gravity,
            mag_reference: mag_reference / norm,
            landmarks,
        })
    }

    /// The five ground-plane landmarks of the circular scenario, `g = 9.81` and a
    /// north-pointing field.
    pub fn circle_scenario() -> Self {
        Self {
            gravity: DEFAULT_GRAVITY,
            mag_reference: Vec3::x(),
            landmarks: vec![
                Vec3::new(0.5, 0.5, 0.0),
                Vec3::new(0.5, -0.5, 0.0),
                Vec3::new(-1.0, 0.5, 0.0),
                Vec3::new(1.0, 1.0, 0.0),
                Vec3::new(-1.2, -1.2, 0.0),
            ],
        }
    }

    pub fn n(&self) -> usize {
        self.landmarks.len()
    }

    pub fn constants(&self) -> ConstantMatrices {
        ConstantMatrices::new(self.n(), self.gravity)
    }
}

/// Body-frame angular velocity (rad/s) and proper acceleration (m/s^2).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuInput {
    pub omega: Vec3,
    pub accel: Vec3,
}

/// IMU readings of the unit-radius circle flown at 1 m/s and 1 m height.
pub fn circular_trajectory_input(_t: f64, gravity: f64) -> ImuInput {
    ImuInput {
        omega: Vec3::z(),
        accel: -Vec3::x() - gravity * Vec3::z(),
    }
}

/// Initial truth state of the circle: `R = I`, `v = e2`, `x = e1 + e3`.
pub fn circle_initial_state(params: &SystemParams) -> SeElement {
    SeElement::from_parts(
        Rotation::identity(),
        Vec3::y(),
        Vec3::x() + Vec3::z(),
        &params.landmarks,
    )
}

/// Source of IMU inputs over time.
#[derive(Clone, Debug, PartialEq)]
pub enum InputProfile {
    Circle {
        gravity: f64,
    },
    Constant(ImuInput),
    /// Zero-order hold over `(t, input)` samples sorted by time.
    Series(Vec<(f64, ImuInput)>),
}

impl InputProfile {
    pub fn at(&self, t: f64) -> ImuInput {
        match self {
            InputProfile::Circle { gravity } => circular_trajectory_input(t, *gravity),
            InputProfile::Constant(u) => *u,
            InputProfile::Series(samples) => {
                let idx = samples.partition_point(|(ts, _)| *ts <= t);
                samples[idx.saturating_sub(1)].1
            }
        }
    }
}

/// One step of the true dynamics: `exp(dt (G+N)) X exp(dt (U-N))`.
pub fn propagate_truth(
    state: &SeElement,
    u: &ImuInput,
    consts: &ConstantMatrices,
    dt: f64,
) -> Result<SeElement> {
    let left = consts.gravity_coupling();
    let right = consts.input_minus_coupling(&u.omega, &u.accel);
    mixed_euler_step(state, &left, &right, dt)
}

/// Body-frame landmark positions, column `i` is `R^T (p_i - x)`.
pub fn measure_landmarks(state: &SeElement) -> Mat3xX {
    let rt = state.rotation().matrix().transpose();
    let x = state.position();
    let n = state.n();
    let mut y = Mat3xX::zeros(n);
    for i in 0..n {
        y.set_column(i, &(rt * (state.landmark(i) - x)));
    }
    y
}

/// Matrix form `-R^T V C` of [`measure_landmarks`].
pub fn measure_landmarks_matrix_form(state: &SeElement, consts: &ConstantMatrices) -> Mat3xX {
    -(state.rotation().matrix().transpose() * state.translation() * &consts.c)
}

pub fn measure_magnetometer(state: &SeElement, params: &SystemParams) -> Vec3 {
    state.rotation().matrix().transpose() * params.mag_reference
}

/// `(x, true)` while GNSS is available, `(0, false)` otherwise.
pub fn measure_gnss(state: &SeElement, sched: &GnssSchedule, t: f64) -> (Vec3, bool) {
    if sched.sigma(t) {
        (state.position(), true)
    } else {
        (Vec3::zeros(), false)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementBundle {
    /// `3 x n` body-frame landmark positions.
    pub landmarks: Mat3xX,
    pub magnetometer: Vec3,
    pub gnss: Vec3,
    pub sigma: bool,
}

impl MeasurementBundle {
    pub fn measure(state: &SeElement, params: &SystemParams, sched: &GnssSchedule, t: f64) -> Self {
        let (gnss, sigma) = measure_gnss(state, sched, t);
        Self {
            landmarks: measure_landmarks(state),
            magnetometer: measure_magnetometer(state, params),
            gnss,
            sigma,
        }
    }

    pub fn sigma_value(&self) -> f64 {
        if self.sigma {
            1.0
        } else {
            0.0
        }
    }

    /// Adds zero-mean Gaussian noise. The magnetometer reading is
    /// re-normalized and an unavailable GNSS reading stays zero.
    pub fn add_noise<R: Rng + ?Sized>(&mut self, noise: &NoiseModel, rng: &mut R) {
        let gauss = |std: f64| Normal::new(0.0, std).ok();
        if let Some(d) = gauss(noise.landmark_std).filter(|_| noise.landmark_std > 0.0) {
            self.landmarks.iter_mut().for_each(|x| *x += d.sample(rng));
        }
        if let Some(d) = gauss(noise.magnetometer_std).filter(|_| noise.magnetometer_std > 0.0) {
            self.magnetometer
                .iter_mut()
                .for_each(|x| *x += d.sample(rng));
            let n = self.magnetometer.norm();
            if n > 0.0 {
                self.magnetometer /= n;
            }
        }
        if self.sigma {
            if let Some(d) = gauss(noise.gnss_std).filter(|_| noise.gnss_std > 0.0) {
                self.gnss.iter_mut().for_each(|x| *x += d.sample(rng));
            }
        }
    }
}

/// Standard deviations of the optional additive measurement noise.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub landmark_std: f64,
    pub magnetometer_std: f64,
    pub gnss_std: f64,
}

impl NoiseModel {
    pub fn is_active(&self) -> bool {
        self.landmark_std > 0.0 || self.magnetometer_std > 0.0 || self.gnss_std > 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GnssMode {
    /// On over `[start + k period, start + k period + on_duration)` for `k >= 0`.
    Periodic {
        start: f64,
        on_duration: f64,
        period: f64,
    },
    /// On over each half-open `[begin, end)`.
    Windows {
        windows: Vec<[f64; 2]>,
    },
    AlwaysOn,
}

/// How a window of length `T` must be covered by GNSS availability.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TpeCriterion {
    /// At least `tau` seconds of availability in total.
    OnMeasure,
    /// A single uninterrupted run of at least `tau` seconds.
    Contiguous,
}

/// GNSS availability `sigma(t)` together with its persistence constants.
#[derive(Clone, Debug, PartialEq)]
pub struct GnssSchedule {
    mode: GnssMode,
    period: f64,
    on: f64,
}

/// Outcome of a persistence scan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TpeReport {
    pub period: f64,
    pub on: f64,
    pub criterion: TpeCriterion,
    /// Worst coverage found over all scanned windows.
    pub worst_coverage: f64,
    /// Start of the worst window.
    pub worst_at: f64,
}

impl TpeReport {
    pub fn passed(&self) -> bool {
        self.worst_coverage >= self.on - 1e-9
    }
}

impl GnssSchedule {
    /// `tpe` overrides the derived `(T, tau)`.
    pub fn new(mode: GnssMode, tpe: Option<(f64, f64)>) -> Result<Self> {
        match &mode {
            GnssMode::Periodic {
                start,
                on_duration,
                period,
            } => {
                if !(*start >= 0.0 && *on_duration > 0.0 && *period > *on_duration) {
                    return Err(Error::InvalidParameter(format!(
                        "periodic schedule needs start >= 0 and 0 < on_duration < period, got \
                         start {start}, on {on_duration}, period {period}"
                    )));
                }
            }
            GnssMode::Windows { windows } => {
                if windows.iter().any(|[a, b]| !(a < b) || *a < 0.0) {
                    return Err(Error::InvalidParameter(
                        "GNSS windows must satisfy 0 <= begin < end".into(),
                    ));
                }
            }
            GnssMode::AlwaysOn => {}
        }
        let (period, on) = match tpe {
            Some(c) => c,
            None => derive_tpe(&mode)?,
        };
        if !(on > 0.0 && on < period) {
            return Err(Error::InvalidParameter(format!(
                "persistence constants need 0 < tau < T, got T = {period}, tau = {on}"
            )));
        }
        Ok(Self { mode, period, on })
    }

    /// On for 5 s every 10 s starting at 5 s.
    pub fn default_periodic() -> Self {
        Self::new(
            GnssMode::Periodic {
                start: 5.0,
                on_duration: 5.0,
                period: 10.0,
            },
            None,
        )
        .expect("valid default schedule")
    }

    pub fn always_on() -> Self {
        Self::new(GnssMode::AlwaysOn, None).expect("valid schedule")
    }

    pub fn mode(&self) -> &GnssMode {
        &self.mode
    }

    /// `(T, tau)`.
    pub fn tpe_constants(&self) -> (f64, f64) {
        (self.period, self.on)
    }

    pub fn sigma(&self, t: f64) -> bool {
        match &self.mode {
            GnssMode::Periodic {
                start,
                on_duration,
                period,
            } => t >= *start && (t - start).rem_euclid(*period) < *on_duration,
            GnssMode::Windows { windows } => windows.iter().any(|[a, b]| t >= *a && t < *b),
            GnssMode::AlwaysOn => true,
        }
    }

    /// Merged on-intervals intersecting `[0, end)`.
    pub fn on_intervals(&self, end: f64) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = match &self.mode {
            GnssMode::Periodic {
                start,
                on_duration,
                period,
            } => {
                let mut v = Vec::new();
                let mut k = 0.0;
                loop {
                    let a = start + k * period;
                    if a >= end {
                        break;
                    }
                    v.push((a, (a + on_duration).min(end)));
                    k += 1.0;
                }
                v
            }
            GnssMode::Windows { windows } => windows
                .iter()
                .filter(|[a, _]| *a < end)
                .map(|[a, b]| (*a, b.min(end)))
                .collect(),
            GnssMode::AlwaysOn => vec![(0.0, end)],
        };
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(out.len());
        for (a, b) in out {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        merged
    }

    /// Scans every window `[t, t + T)` with `0 <= t <= max(horizon - T, 0)`.
    pub fn scan(&self, horizon: f64, criterion: TpeCriterion) -> TpeReport {
        let (period, on) = (self.period, self.on);
        let last_start = (horizon - period).max(0.0);
        let intervals = self.on_intervals(last_start + period);
        let coverage = |t: f64| -> f64 {
            let clipped = intervals
                .iter()
                .map(|(a, b)| (b.min(t + period) - a.max(t)).max(0.0));
            match criterion {
                TpeCriterion::OnMeasure => clipped.sum(),
                TpeCriterion::Contiguous => clipped.fold(0.0, f64::max),
            }
        };
        // Coverage is piecewise linear in t with kinks where t or t + T meets an
        // interval endpoint; the contiguous form can also bottom out where two
        // runs cross, so it additionally gets a uniform grid.
        let mut candidates = vec![0.0, last_start];
        for (a, b) in &intervals {
            for p in [*a, *b, a - period, b - period] {
                if (0.0..=last_start).contains(&p) {
                    candidates.push(p);
                }
            }
        }
        if criterion == TpeCriterion::Contiguous {
            let steps = ((last_start / 1e-3).ceil() as usize).min(10_000_000);
            candidates.extend((0..=steps).map(|k| last_start * k as f64 / steps.max(1) as f64));
        }
        let (worst_at, worst_coverage) = candidates
            .into_iter()
            .map(|t| (t, coverage(t)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((0.0, 0.0));
        TpeReport {
            period,
            on,
            criterion,
            worst_coverage,
            worst_at,
        }
    }

    /// Fails unless every window of length `T` has `tau` seconds of availability.
    pub fn validate(&self, horizon: f64) -> Result<TpeReport> {
        let report = self.scan(horizon, TpeCriterion::OnMeasure);
        if report.passed() {
            Ok(report)
        } else {
            Err(Error::NotPersistentlyExciting {
                period: report.period,
                on: report.on,
                at: report.worst_at,
                longest: report.worst_coverage,
            })
        }
    }
}

fn derive_tpe(mode: &GnssMode) -> Result<(f64, f64)> {
    match mode {
        GnssMode::Periodic {
            on_duration,
            period,
            ..
        } => Ok((*period, *on_duration)),
        GnssMode::AlwaysOn => Ok((1.0, 0.999)),
        GnssMode::Windows { windows } => {
            if windows.is_empty() {
                return Err(Error::InvalidParameter(
                    "an empty window list never provides GNSS; give explicit T and tau".into(),
                ));
            }
            let mut w = windows.clone();
            w.sort_by(|a, b| a[0].total_cmp(&b[0]));
            let on = w.iter().map(|[a, b]| b - a).fold(f64::INFINITY, f64::min);
            let mut period = w[0][1];
            for pair in w.windows(2) {
                period = period.max(pair[1][1] - pair[0][0]);
            }
            let period = if period > on { period } else { on * 2.0 };
            Ok((period, on))
        }
    }
}

/// Dense stacked form `X (0; sigma C_x)`, used to cross-check the GNSS model.
pub fn gnss_matrix_form(state: &SeElement, consts: &ConstantMatrices, sigma: f64) -> DMatrix<f64> {
    let m = consts.n() + 2;
    let mut rhs = DMatrix::zeros(m + 3, 1);
    rhs.view_mut((3, 0), (m, 1))
        .copy_from(&(&consts.cx * sigma));
    state.to_matrix() * rhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn circle_inputs_are_constant() {
        for t in [0.0, 1.3, 40.0] {
            let u = circular_trajectory_input(t, 9.81);
            assert_eq!(u.omega, Vec3::new(0.0, 0.0, 1.0));
            assert_eq!(u.accel, Vec3::new(-1.0, 0.0, -9.81));
        }
        let x0 = circle_initial_state(&SystemParams::circle_scenario());
        assert_eq!(*x0.rotation().matrix(), nalgebra::Matrix3::identity());
        assert_eq!(x0.velocity(), Vec3::y());
        assert_eq!(x0.position(), Vec3::new(1.0, 0.0, 1.0));
    }

    #[test]
    fn hover_is_an_equilibrium() {
        let params = SystemParams::circle_scenario();
        let k = params.constants();
        let mut x = SeElement::from_parts(
            Rotation::identity(),
            Vec3::zeros(),
            Vec3::new(0.3, 0.2, 1.0),
            &params.landmarks,
        );
        let u = ImuInput {
            omega: Vec3::zeros(),
            accel: -9.81 * Vec3::z(),
        };
        for _ in 0..2000 {
            x = propagate_truth(&x, &u, &k, 5e-4).unwrap();
        }
        assert!(x.velocity().norm() < 1e-12);
        assert!((x.position() - Vec3::new(0.3, 0.2, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn landmark_example_at_start() {
        let params = SystemParams::circle_scenario();
        let y = measure_landmarks(&circle_initial_state(&params));
        assert_relative_eq!(
            y.column(0).into_owned(),
            Vec3::new(-0.5, 0.5, -1.0),
            epsilon = 1e-15
        );
        let coincident = SeElement::from_parts(
            Rotation::from_axis_angle(&Vec3::x(), 0.4),
            Vec3::zeros(),
            Vec3::new(0.5, 0.5, 0.0),
            &params.landmarks,
        );
        assert_eq!(measure_landmarks(&coincident).column(0).norm(), 0.0);
    }

    #[test]
    fn magnetometer_fixed_axis() {
        let params = SystemParams::circle_scenario();
        let x = SeElement::from_parts(
            Rotation::from_axis_angle(&params.mag_reference, std::f64::consts::PI),
            Vec3::zeros(),
            Vec3::zeros(),
            &params.landmarks,
        );
        assert_relative_eq!(
            measure_magnetometer(&x, &params),
            params.mag_reference,
            epsilon = 1e-15
        );
    }

    #[test]
    fn default_schedule_pattern() {
        let s = GnssSchedule::default_periodic();
        assert!(!s.sigma(0.0));
        assert!(!s.sigma(4.999));
        assert!(s.sigma(5.0));
        assert!(s.sigma(6.0));
        assert!(!s.sigma(10.0));
        assert!(!s.sigma(12.0));
        assert!(s.sigma(15.0));
        assert_eq!(s.tpe_constants(), (10.0, 5.0));
        let (y, sigma) = measure_gnss(&SeElement::identity(1), &s, 12.0);
        assert!(!sigma);
        assert_eq!(y, Vec3::zeros());
    }

    #[test]
    fn always_on_reports_position() {
        let params = SystemParams::circle_scenario();
        let x = circle_initial_state(&params);
        let s = GnssSchedule::always_on();
        for t in [0.0, 3.0, 100.0] {
            assert_eq!(measure_gnss(&x, &s, t), (x.position(), true));
        }
    }

    #[test]
    fn schedule_rejects_bad_parameters() {
        let bad = GnssMode::Periodic {
            start: 0.0,
            on_duration: 5.0,
            period: 5.0,
        };
        assert!(GnssSchedule::new(bad, None).is_err());
        assert!(GnssSchedule::new(GnssMode::AlwaysOn, Some((1.0, 2.0))).is_err());
        assert!(GnssSchedule::new(
            GnssMode::Windows {
                windows: vec![[3.0, 1.0]]
            },
            None
        )
        .is_err());
    }

    #[test]
    fn series_profile_is_zero_order_hold() {
        let a = ImuInput {
            omega: Vec3::x(),
            accel: Vec3::zeros(),
        };
        let b = ImuInput {
            omega: Vec3::y(),
            accel: Vec3::zeros(),
        };
        let p = InputProfile::Series(vec![(0.0, a), (1.0, b)]);
        assert_eq!(p.at(0.5), a);
        assert_eq!(p.at(1.0), b);
        assert_eq!(p.at(7.0), b);
        assert_eq!(p.at(-1.0), a);
    }

    #[test]
    fn noise_keeps_unit_magnetometer_and_zero_gnss() {
        use rand::SeedableRng;
        let params = SystemParams::circle_scenario();
        let x = circle_initial_state(&params);
        let mut m = MeasurementBundle::measure(&x, &params, &GnssSchedule::default_periodic(), 0.0);
        let noise = NoiseModel {
            landmark_std: 0.01,
            magnetometer_std: 0.05,
            gnss_std: 0.1,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        m.add_noise(&noise, &mut rng);
        assert!((m.magnetometer.norm() - 1.0).abs() < 1e-14);
        assert_eq!(m.gnss, Vec3::zeros());
    }
}
