//! Run configuration, the simulation loop and CSV/JSON export.
//!
//! A run advances truth and observer in lock step with Lie-group Euler steps of
//! length `dt`. Corrections at step `k` are computed from measurements of the
//! truth at `t_k` and held constant over `[t_k, t_{k+1})`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gains::{
    az_from_p0, build_p0, check_gain_condition, structured_factor, vz_drift_unchecked,
    BoundViolation, P0Seeds, PMonitor,
};
use crate::lie::{ConstantMatrices, Mat3xX, Rotation, SeElement, Vec3};
use crate::metrics::{metrics_row, CsvWriter, MetricsRow};
use crate::observer::{
    apply_correction, compute_corrections, compute_error, lyapunov, Gains, ObserverState,
    SensorCorrections,
};
use crate::system::{
    propagate_truth, GnssMode, GnssSchedule, ImuInput, InputProfile, MeasurementBundle, NoiseModel,
    SystemParams, TpeCriterion,
};

/// Slack applied to the `P` interval monitors.
pub const P_BOUND_SLACK: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub gravity: f64,
    pub mag_reference: Vec3,
    pub landmarks: Vec<Vec3>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let p = SystemParams::circle_scenario();
        Self {
            gravity: p.gravity,
            mag_reference: p.mag_reference,
            landmarks: p.landmarks,
        }
    }
}

/// One sample of a tabulated IMU input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSample {
    pub t: f64,
    pub omega: Vec3,
    pub accel: Vec3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InputConfig {
    /// Unit circle at 1 m/s; the specific force uses the system gravity.
    Circle,
    Constant {
        omega: Vec3,
        accel: Vec3,
    },
    /// Zero-order hold; samples must be sorted and start at `t = 0`.
    Series {
        samples: Vec<InputSample>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    pub input: InputConfig,
    pub initial_rotation_vector: Vec3,
    pub initial_velocity: Vec3,
    pub initial_position: Vec3,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            input: InputConfig::Circle,
            initial_rotation_vector: Vec3::zeros(),
            initial_velocity: Vec3::y(),
            initial_position: Vec3::x() + Vec3::z(),
        }
    }
}

/// GNSS availability. `(tpe_period, tpe_on)` default to values derived from the
/// schedule and override the ones in `[gains]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GnssConfig {
    pub schedule: GnssMode,
    pub tpe_period: Option<f64>,
    pub tpe_on: Option<f64>,
}

impl Default for GnssConfig {
    fn default() -> Self {
        Self {
            schedule: GnssMode::Periodic {
                start: 5.0,
                on_duration: 5.0,
                period: 10.0,
            },
            tpe_period: None,
            tpe_on: None,
        }
    }
}

impl GnssConfig {
    pub fn build(&self) -> Result<GnssSchedule> {
        let tpe = match (self.tpe_period, self.tpe_on) {
            (Some(t), Some(tau)) => Some((t, tau)),
            (None, None) => None,
            _ => {
                return Err(Error::Config(
                    "gnss.tpe_period and gnss.tpe_on must be given together".into(),
                ))
            }
        };
        GnssSchedule::new(self.schedule.clone(), tpe)
    }
}

/// How `A_Z(0)` is obtained from `P0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AzSource {
    /// Closed-form block factor; with the reference seeds this is the
    /// circle scenario's published matrix.
    Structured,
    /// Lower-triangular Cholesky factor.
    Cholesky,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedPreset {
    Reference,
    Midpoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedConfig {
    Preset(SeedPreset),
    Explicit(P0Seeds),
}

impl SeedConfig {
    pub fn resolve(&self, gains: &Gains, n: usize) -> P0Seeds {
        match self {
            SeedConfig::Preset(SeedPreset::Reference) => P0Seeds::reference(),
            SeedConfig::Preset(SeedPreset::Midpoint) => P0Seeds::midpoint(gains, n),
            SeedConfig::Explicit(s) => *s,
        }
    }
}

/// Initial observer state. The attitude estimate is
/// `exp(attitude_angle * hat(b))` with `b = attitude_axis`, or `b` normalized
/// first when `normalize_axis` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    pub attitude_axis: Vec3,
    pub attitude_angle: f64,
    pub normalize_axis: bool,
    pub velocity: Vec3,
    pub position: Vec3,
    /// One entry per landmark; empty means all at the origin.
    pub landmarks: Vec<Vec3>,
    /// Columns of `V_Z(0)`; empty means zero.
    pub vz: Vec<Vec3>,
    pub az_source: AzSource,
    pub seeds: SeedConfig,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            attitude_axis: Vec3::new(1.0, 1.0, 1.0),
            attitude_angle: 0.25 * std::f64::consts::PI,
            normalize_axis: false,
            velocity: Vec3::zeros(),
            position: Vec3::zeros(),
            landmarks: Vec::new(),
            vz: Vec::new(),
            az_source: AzSource::Structured,
            seeds: SeedConfig::Preset(SeedPreset::Reference),
        }
    }
}

impl EstimateConfig {
    pub fn attitude(&self) -> Result<Rotation> {
        let axis = if self.normalize_axis {
            let n = self.attitude_axis.norm();
            if n == 0.0 {
                return Err(Error::Config("estimate.attitude_axis is zero".into()));
            }
            self.attitude_axis / n
        } else {
            self.attitude_axis
        };
        Ok(Rotation::from_rotation_vector(
            &(axis * self.attitude_angle),
        ))
    }
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Log every `log_interval` steps; the final step is always logged.
    pub log_interval: usize,
    pub seed: u64,
    pub system: SystemConfig,
    pub trajectory: TrajectoryConfig,
    pub gnss: GnssConfig,
    pub gains: Gains,
    pub estimate: EstimateConfig,
    pub noise: NoiseModel,
}

impl Default for RunConfig {
    /// The circle scenario: 40 s at 2000 Hz with periodic GNSS.
    fn default() -> Self {
        Self {
            dt: 5e-4,
            horizon: 40.0,
            log_interval: 4,
            seed: 0,
            system: SystemConfig::default(),
            trajectory: TrajectoryConfig::default(),
            gnss: GnssConfig::default(),
            gains: Gains::default(),
            estimate: EstimateConfig::default(),
            noise: NoiseModel::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "horizon must be non-negative, got {}",
                self.horizon
            )));
        }
        if self.log_interval == 0 {
            return Err(Error::Config("log_interval must be at least 1".into()));
        }
        let steps = (self.horizon / self.dt).round();
        if (steps * self.dt - self.horizon).abs() > 1e-9 * self.horizon.max(1.0) {
            return Err(Error::Config(format!(
                "horizon {} is not a whole number of steps of {}",
                self.horizon, self.dt
            )));
        }
        Ok(steps as usize)
    }

    /// The schedule and the gains with its persistence constants applied.
    pub fn schedule_and_gains(&self) -> Result<(GnssSchedule, Gains)> {
        let schedule = self.gnss.build()?;
        let (period, on) = schedule.tpe_constants();
        let gains = Gains {
            tpe_period: period,
            tpe_on: on,
            ..self.gains
        };
        gains.validate()?;
        Ok((schedule, gains))
    }

    /// Refuses gains that fail the feasibility condition and schedules that are
    /// not persistently exciting over the horizon.
    pub fn check_preconditions(&self) -> Result<()> {
        let (schedule, gains) = self.schedule_and_gains()?;
        let check = check_gain_condition(&gains, self.system.landmarks.len())?;
        if !check.feasible {
            return Err(Error::InfeasibleGains {
                margin: check.margin,
            });
        }
        schedule.validate(self.horizon)?;
        Ok(())
    }

    /// Resolves the configuration into concrete initial states.
    pub fn build(&self) -> Result<Scenario> {
        let sys = &self.system;
        let params = SystemParams::new(sys.gravity, sys.mag_reference, sys.landmarks.clone())?;
        let n = params.n();
        let (schedule, gains) = self.schedule_and_gains()?;

        let input = match &self.trajectory.input {
            InputConfig::Circle => InputProfile::Circle {
                gravity: params.gravity,
            },
            InputConfig::Constant { omega, accel } => InputProfile::Constant(ImuInput {
                omega: *omega,
                accel: *accel,
            }),
            InputConfig::Series { samples } => {
                if samples.is_empty() || samples[0].t != 0.0 {
                    return Err(Error::Config("input series must start at t = 0".into()));
                }
                if samples.windows(2).any(|w| !(w[0].t < w[1].t)) {
                    return Err(Error::Config("input series times must increase".into()));
                }
                InputProfile::Series(
                    samples
                        .iter()
                        .map(|s| {
                            (
                                s.t,
                                ImuInput {
                                    omega: s.omega,
                                    accel: s.accel,
                                },
                            )
                        })
                        .collect(),
                )
            }
        };

        let traj = &self.trajectory;
        let truth = SeElement::from_parts(
            Rotation::from_rotation_vector(&traj.initial_rotation_vector),
            traj.initial_velocity,
            traj.initial_position,
            &params.landmarks,
        );

        let est = &self.estimate;
        let lm_est = match est.landmarks.len() {
            0 => vec![Vec3::zeros(); n],
            k if k == n => est.landmarks.clone(),
            k => {
                return Err(Error::Config(format!(
                    "estimate.landmarks has {k} entries, expected {n}"
                )))
            }
        };
        let xhat = SeElement::from_parts(est.attitude()?, est.velocity, est.position, &lm_est);
        let vz = match est.vz.len() {
            0 => Mat3xX::zeros(n + 2),
            k if k == n + 2 => Mat3xX::from_columns(&est.vz),
            k => {
                return Err(Error::Config(format!(
                    "estimate.vz has {k} columns, expected {}",
                    n + 2
                )))
            }
        };
        let p0 = build_p0(&gains, n, &est.seeds.resolve(&gains, n))?;
        let az = match est.az_source {
            AzSource::Structured => structured_factor(&p0)?,
            AzSource::Cholesky => az_from_p0(&p0)?,
        };
        let observer = ObserverState::new(xhat, vz, az)?;

        Ok(Scenario {
            consts: params.constants(),
            params,
            input,
            schedule,
            gains,
            truth,
            observer,
            noise: self.noise,
            seed: self.seed,
        })
    }
}

/// A fully resolved run set-up.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub params: SystemParams,
    pub consts: ConstantMatrices,
    pub input: InputProfile,
    pub schedule: GnssSchedule,
    pub gains: Gains,
    pub truth: SeElement,
    pub observer: ObserverState,
    pub noise: NoiseModel,
    pub seed: u64,
}

/// Lock-step truth and observer propagation.
#[derive(Clone, Debug)]
pub struct Simulation {
    scenario: Scenario,
    dt: f64,
    step: usize,
    truth: SeElement,
    observer: ObserverState,
    rng: ChaCha8Rng,
}

/// Everything computed at one step before advancing.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub input: ImuInput,
    pub measurements: MeasurementBundle,
    pub corrections: SensorCorrections,
}

impl Simulation {
    pub fn new(scenario: Scenario, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {dt}"
            )));
        }
        Ok(Self {
            truth: scenario.truth.clone(),
            observer: scenario.observer.clone(),
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            scenario,
            dt,
            step: 0,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn truth(&self) -> &SeElement {
        &self.truth
    }

    pub fn observer(&self) -> &ObserverState {
        &self.observer
    }

    /// Measurements and corrections at the current time.
    pub fn evaluate(&mut self) -> Result<StepRecord> {
        let s = &self.scenario;
        let t = self.time();
        let mut measurements = MeasurementBundle::measure(&self.truth, &s.params, &s.schedule, t);
        if s.noise.is_active() {
            measurements.add_noise(&s.noise, &mut self.rng);
        }
        let corrections = compute_corrections(
            &self.observer,
            &measurements,
            &s.gains,
            &s.params,
            &s.consts,
        )
        .map_err(|e| self.abort(e))?;
        Ok(StepRecord {
            step: self.step,
            time: t,
            input: s.input.at(t),
            measurements,
            corrections,
        })
    }

    /// Advances both states over one step using `record`.
    pub fn advance(&mut self, record: &StepRecord) -> Result<()> {
        let s = &self.scenario;
        let total = record.corrections.total();
        let obs = apply_correction(&self.observer, &record.input, &total, &s.consts, self.dt)
            .map_err(|e| self.abort(e))?;
        let truth = propagate_truth(&self.truth, &record.input, &s.consts, self.dt)
            .map_err(|e| self.abort(e))?;
        self.observer = obs;
        self.truth = truth;
        self.step += 1;
        Ok(())
    }

    pub fn step(&mut self) -> Result<StepRecord> {
        let rec = self.evaluate()?;
        self.advance(&rec)?;
        Ok(rec)
    }

    fn abort(&self, e: Error) -> Error {
        Error::Aborted {
            step: self.step,
            source: Box::new(e),
        }
    }
}

/// Flat key to number map plus the list of bound violations.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Summary {
    #[serde(flatten)]
    pub values: BTreeMap<String, f64>,
    pub violations: Vec<BoundViolation>,
}

impl Summary {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }

    fn set(&mut self, key: impl Into<String>, value: f64) {
        self.values.insert(key.into(), value);
    }

    fn set_row(&mut self, prefix: &str, row: &MetricsRow) {
        self.set(format!("{prefix}_time"), row.t);
        self.set(format!("{prefix}_att_err"), row.att_err);
        self.set(format!("{prefix}_yaw_err"), row.yaw_err);
        self.set(format!("{prefix}_vel_err"), row.vel_err);
        self.set(format!("{prefix}_pos_err"), row.pos_err);
        for (i, e) in row.lm_err.iter().enumerate() {
            self.set(format!("{prefix}_lm_err_{}", i + 1), *e);
        }
        let max = row.lm_err.iter().copied().fold(0.0, f64::max);
        self.set(format!("{prefix}_lm_err_max"), max);
        self.set(format!("{prefix}_lm_err_rms"), row.lm_err_rms);
        self.set(format!("{prefix}_lyap"), row.lyap);
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub rows: Vec<MetricsRow>,
    pub summary: Summary,
}

impl RunOutput {
    pub fn csv(&self, n: usize) -> Result<String> {
        let mut w = CsvWriter::new(Vec::new(), n)?;
        for r in &self.rows {
            w.write_row(r)?;
        }
        String::from_utf8(w.into_inner()?).map_err(|e| Error::Config(e.to_string()))
    }

    /// Writes `metrics.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path, n: usize) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv = dir.join("metrics.csv");
        let json = dir.join("summary.json");
        fs::write(&csv, self.csv(n)?)?;
        fs::write(&json, self.summary.to_json()? + "\n")?;
        Ok((csv, json))
    }
}

/// Runs `config`; preconditions are enforced unless `allow_infeasible`.
pub fn run(config: &RunConfig, allow_infeasible: bool) -> Result<RunOutput> {
    let steps = config.steps()?;
    if !allow_infeasible {
        config.check_preconditions()?;
    }
    run_scenario(config.build()?, config.dt, steps, config.log_interval)
}

pub fn run_scenario(
    scenario: Scenario,
    dt: f64,
    steps: usize,
    log_interval: usize,
) -> Result<RunOutput> {
    let started = Instant::now();
    let n = scenario.params.n();
    let gains = scenario.gains;
    let check = check_gain_condition(&gains, n)?;
    let tpe = scenario
        .schedule
        .scan(steps as f64 * dt, TpeCriterion::OnMeasure);
    let tpe_contiguous = scenario
        .schedule
        .scan(steps as f64 * dt, TpeCriterion::Contiguous);
    let mut sim = Simulation::new(scenario, dt)?;
    let mut monitor = PMonitor::new(&gains, n, P_BOUND_SLACK);
    let mut rows = Vec::new();
    let mut summary = Summary::default();

    let err0 = compute_error(sim.truth(), sim.observer());
    let ve0 = err0.ve.norm_squared();
    let mut lyap_prev = lyapunov(&err0);
    let mut max_lyap_increase = f64::NEG_INFINITY;
    let mut max_ve_ratio: f64 = 0.0;
    let mut corr_sup = [0.0f64; 3];
    let mut vz_excess = f64::NEG_INFINITY;
    let mut vz_half_excess = f64::NEG_INFINITY;

    let row_at = |sim: &Simulation, rec: &StepRecord| {
        let s = sim.scenario();
        metrics_row(
            sim.truth(),
            sim.observer(),
            &rec.corrections,
            rec.time,
            rec.measurements.sigma,
            &s.gains,
            &s.consts,
        )
    };

    let initial = sim.evaluate()?;
    let initial_row = row_at(&sim, &initial)?;
    summary.set_row("initial", &initial_row);

    let mut rec = initial;
    for k in 0..steps {
        monitor.observe(k, rec.time, sim.observer());
        if k % log_interval == 0 {
            rows.push(if k == 0 {
                initial_row.clone()
            } else {
                row_at(&sim, &rec)?
            });
        }
        for (sup, c) in corr_sup.iter_mut().zip([
            &rec.corrections.gnss,
            &rec.corrections.landmark,
            &rec.corrections.magnetometer,
        ]) {
            *sup = sup.max(c.norm());
        }
        let s = sim.scenario();
        let drift = vz_drift_unchecked(
            sim.observer(),
            rec.measurements.sigma,
            &s.gains,
            &rec.measurements.gnss,
            &s.consts,
        )?;
        let vz = sim.observer().vz();
        // d|V_Z|^2/dt = 2 <V_Z, B - V_Z M> <= 2 (|V_Z| |B| - q |V_Z|^2)
        let rate = 2.0 * vz.dot(&drift.rate(vz));
        let (nv, nb) = (vz.norm(), drift.b.norm());
        let bound = nv * nb - gains.q * nv * nv;
        vz_excess = vz_excess.max(rate - 2.0 * bound);
        vz_half_excess = vz_half_excess.max(rate - bound);
        sim.advance(&rec)?;
        let err = compute_error(sim.truth(), sim.observer());
        let lyap = lyapunov(&err);
        max_lyap_increase = max_lyap_increase.max(lyap - lyap_prev);
        lyap_prev = lyap;
        if ve0 > 0.0 {
            let bound = ve0 * (-2.0 * gains.q * sim.time()).exp();
            max_ve_ratio = max_ve_ratio.max(err.ve.norm_squared() / bound);
        }
        rec = sim.evaluate()?;
    }
    if steps > 0 {
        monitor.observe(steps, rec.time, sim.observer());
        let last = row_at(&sim, &rec)?;
        summary.set_row("final", &last);
        rows.push(last);
    } else {
        summary.set_row("final", &initial_row);
    }

    let b = *monitor.bounds();
    summary.set("steps", steps as f64);
    summary.set("dt", dt);
    summary.set("horizon", steps as f64 * dt);
    summary.set("n_landmarks", n as f64);
    summary.set("margin", check.margin);
    summary.set("feasible", bool_num(check.feasible));
    summary.set("tpe_period", tpe.period);
    summary.set("tpe_on", tpe.on);
    summary.set("tpe_passed", bool_num(tpe.passed()));
    summary.set("tpe_worst_coverage", tpe.worst_coverage);
    summary.set("tpe_contiguous_passed", bool_num(tpe_contiguous.passed()));
    summary.set("tpe_contiguous_worst_run", tpe_contiguous.worst_coverage);
    summary.set(
        "max_lyap_increase",
        if steps > 0 { max_lyap_increase } else { 0.0 },
    );
    summary.set("max_ve_contraction_ratio", max_ve_ratio);
    if steps > 0 {
        summary.set("max_vz_bound_excess", vz_excess);
        summary.set("max_vz_half_bound_excess", vz_half_excess);
    }
    summary.set("max_corr_gnss", corr_sup[0]);
    summary.set("max_corr_landmark", corr_sup[1]);
    summary.set("max_corr_mag", corr_sup[2]);
    summary.set("min_schur_det", monitor.min_schur_det);
    summary.set("schur_det_lower_bound", b.schur_det_lower);
    summary.set("min_sv_az", monitor.min_sv_az);
    summary.set("min_p_eigenvalue", monitor.min_eigenvalue);
    summary.set("max_s_p_deviation", monitor.max_s_p_deviation);
    summary.set("max_steady_block_deviation", monitor.max_steady_deviation);
    for (name, ext, iv) in [
        ("s_x", monitor.extremes[0], b.s_x),
        ("s_vx", monitor.extremes[1], b.s_vx),
        ("s_v", monitor.extremes[2], b.s_v),
    ] {
        summary.set(format!("{name}_min"), ext.lower);
        summary.set(format!("{name}_max"), ext.upper);
        summary.set(format!("{name}_lower_bound"), iv.lower);
        summary.set(format!("{name}_upper_bound"), iv.upper);
    }
    summary.set("p_bound_violations", monitor.violations.len() as f64);
    summary.violations = monitor.violations;
    summary.set("wall_time_s", started.elapsed().as_secs_f64());
    Ok(RunOutput { rows, summary })
}

fn bool_num(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// `A_Z(0)` of the circle scenario.
pub fn reference_az() -> DMatrix<f64> {
    let p0 = build_p0(&Gains::default(), 5, &P0Seeds::reference()).expect("reference seeds");
    structured_factor(&p0).expect("reference factor")
}
