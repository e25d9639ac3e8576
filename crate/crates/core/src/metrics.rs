//! Per-step health metrics and their CSV encoding.
//!
//! The CSV header is fixed for a given landmark count `n`:
//!
//! ```text
//! time,sigma,att_err,yaw_err,vel_err,pos_err,lm_err_1..lm_err_n,lm_err_rms,lyap,tr_RE_plus1,
//! corr_gnss,corr_landmark,corr_mag,mu_x_x,mu_x_y,mu_x_z,mu_Z_x,mu_Z_y,mu_Z_z,
//! s_x,s_vx,s_v,schur_det,min_sv_AZ,margin,
//! x_true_x,x_true_y,x_true_z,x_est_x,x_est_y,x_est_z,
//! p1_true_x..pn_true_z,p1_est_x..pn_est_z
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so parsing a cell
//! recovers the exact `f64` that was logged.

use std::io::Write;

use crate::error::Result;
use crate::gains::{check_gain_condition, p_diagnostics, PDiagnostics};
use crate::lie::{ConstantMatrices, Rotation, SeElement, Vec3};
use crate::observer::{compute_error, lyapunov, Gains, ObserverState, SensorCorrections};

/// Geodesic angle of a rotation, in `[0, pi]`; `atan2` keeps full relative
/// precision near zero where `acos` of the trace rounds to 0.
pub fn attitude_error_angle(re: &Rotation) -> f64 {
    let m = re.matrix();
    let s = Vec3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    );
    (0.5 * s.norm()).atan2(0.5 * (re.trace() - 1.0))
}

/// Magnitude of the yaw (about `e3`) component of a z-y-x Euler decomposition.
pub fn yaw_error_angle(re: &Rotation) -> f64 {
    let m = re.matrix();
    m[(1, 0)].atan2(m[(0, 0)]).abs()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub t: f64,
    pub sigma: bool,
    pub att_err: f64,
    pub yaw_err: f64,
    pub vel_err: f64,
    pub pos_err: f64,
    pub lm_err: Vec<f64>,
    pub lm_err_rms: f64,
    pub lyap: f64,
    /// `tr(R_E) + 1`; zero on the unstable set of the attitude error.
    pub tr_re_plus1: f64,
    pub corr_gnss: f64,
    pub corr_landmark: f64,
    pub corr_mag: f64,
    /// `x - V_Z A_Z^{-1} Cx`.
    pub mu_x: Vec3,
    /// `V_Z A_Z^{-1} C 1`.
    pub mu_z: Vec3,
    pub p: PDiagnostics,
    pub margin: f64,
    pub x_true: Vec3,
    pub x_est: Vec3,
    pub lm_true: Vec<Vec3>,
    pub lm_est: Vec<Vec3>,
}

pub fn metrics_row(
    truth: &SeElement,
    obs: &ObserverState,
    parts: &SensorCorrections,
    t: f64,
    sigma: bool,
    gains: &Gains,
    consts: &ConstantMatrices,
) -> Result<MetricsRow> {
    let n = truth.n();
    let est = obs.estimate();
    let err = compute_error(truth, obs);
    let lm_err: Vec<f64> = (0..n)
        .map(|i| (est.landmark(i) - truth.landmark(i)).norm())
        .collect();
    let lm_err_rms = if n == 0 {
        0.0
    } else {
        (lm_err.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt()
    };
    let a_inv = obs.az_inverse()?;
    let mu_x = truth.position() - obs.vz() * (&a_inv * &consts.cx);
    let mu_z = obs.vz() * (&a_inv * (&consts.c * consts.ones()));
    Ok(MetricsRow {
        t,
        sigma,
        att_err: attitude_error_angle(&err.re),
        yaw_err: yaw_error_angle(&err.re),
        vel_err: (est.velocity() - truth.velocity()).norm(),
        pos_err: (est.position() - truth.position()).norm(),
        lm_err,
        lm_err_rms,
        lyap: lyapunov(&err),
        tr_re_plus1: err.re.trace() + 1.0,
        corr_gnss: parts.gnss.norm(),
        corr_landmark: parts.landmark.norm(),
        corr_mag: parts.magnetometer.norm(),
        mu_x,
        mu_z,
        p: p_diagnostics(obs, gains),
        margin: check_gain_condition(gains, n)?.margin,
        x_true: truth.position(),
        x_est: est.position(),
        lm_true: (0..n).map(|i| truth.landmark(i)).collect(),
        lm_est: (0..n).map(|i| est.landmark(i)).collect(),
    })
}

const XYZ: [&str; 3] = ["x", "y", "z"];

/// Column names for `n` landmarks.
pub fn csv_columns(n: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["time", "sigma", "att_err", "yaw_err", "vel_err", "pos_err"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend((1..=n).map(|i| format!("lm_err_{i}")));
    cols.extend(
        [
            "lm_err_rms",
            "lyap",
            "tr_RE_plus1",
            "corr_gnss",
            "corr_landmark",
            "corr_mag",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    for v in ["mu_x", "mu_Z"] {
        cols.extend(XYZ.iter().map(|a| format!("{v}_{a}")));
    }
    cols.extend(
        ["s_x", "s_vx", "s_v", "schur_det", "min_sv_AZ", "margin"]
            .iter()
            .map(|s| s.to_string()),
    );
    for v in ["x_true", "x_est"] {
        cols.extend(XYZ.iter().map(|a| format!("{v}_{a}")));
    }
    for kind in ["true", "est"] {
        for i in 1..=n {
            cols.extend(XYZ.iter().map(|a| format!("p{i}_{kind}_{a}")));
        }
    }
    cols
}

pub fn csv_header(n: usize) -> String {
    csv_columns(n).join(",")
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

impl MetricsRow {
    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![
            self.t,
            if self.sigma { 1.0 } else { 0.0 },
            self.att_err,
            self.yaw_err,
            self.vel_err,
            self.pos_err,
        ];
        v.extend(&self.lm_err);
        v.extend([
            self.lm_err_rms,
            self.lyap,
            self.tr_re_plus1,
            self.corr_gnss,
            self.corr_landmark,
            self.corr_mag,
        ]);
        v.extend(self.mu_x.iter());
        v.extend(self.mu_z.iter());
        v.extend([
            self.p.s_x,
            self.p.s_vx,
            self.p.s_v,
            self.p.schur_det,
            self.p.min_sv_az,
            self.margin,
        ]);
        v.extend(self.x_true.iter());
        v.extend(self.x_est.iter());
        for p in self.lm_true.iter().chain(&self.lm_est) {
            v.extend(p.iter());
        }
        v
    }

    pub fn to_csv(&self) -> String {
        self.values()
            .into_iter()
            .map(fmt_f64)
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Streams rows under a fixed header.
pub struct CsvWriter<W: Write> {
    out: W,
    n: usize,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(mut out: W, n: usize) -> Result<Self> {
        writeln!(out, "{}", csv_header(n))?;
        Ok(Self { out, n })
    }

    pub fn write_row(&mut self, row: &MetricsRow) -> Result<()> {
        debug_assert_eq!(row.lm_err.len(), self.n);
        writeln!(self.out, "{}", row.to_csv())?;
        Ok(())
    }

    pub fn into_inner(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gains::{build_p0, structured_factor, P0Seeds};
    use crate::lie::Mat3xX;
    use crate::observer::TangentCorrection;
    use crate::system::{circle_initial_state, SystemParams};

    fn zero_parts(n: usize) -> SensorCorrections {
        SensorCorrections {
            gnss: TangentCorrection::zero(n),
            landmark: TangentCorrection::zero(n),
            magnetometer: TangentCorrection::zero(n),
        }
    }

    fn reference_az(n: usize) -> nalgebra::DMatrix<f64> {
        let p0 = build_p0(&Gains::default(), n, &P0Seeds::reference()).unwrap();
        structured_factor(&p0).unwrap()
    }

    #[test]
    fn angle_examples() {
        assert_eq!(attitude_error_angle(&Rotation::identity()), 0.0);
        let half = Rotation::from_axis_angle(&Vec3::x(), std::f64::consts::PI);
        assert!((attitude_error_angle(&half) - std::f64::consts::PI).abs() < 1e-7);
        let r = Rotation::from_axis_angle(&Vec3::z(), 0.3);
        assert!((attitude_error_angle(&r) - 0.3).abs() < 1e-12);
        assert!((yaw_error_angle(&r) - 0.3).abs() < 1e-12);
        let tiny = Rotation::from_axis_angle(&Vec3::y(), 1e-9);
        assert!((attitude_error_angle(&tiny) - 1e-9).abs() < 1e-22);
        let pitch = Rotation::from_axis_angle(&Vec3::y(), 0.3);
        assert!(yaw_error_angle(&pitch) < 1e-15);
    }

    #[test]
    fn perfect_estimate_has_zero_errors() {
        let params = SystemParams::circle_scenario();
        let consts = params.constants();
        let x = circle_initial_state(&params);
        let vz = x.translation() * reference_az(5);
        let obs = ObserverState::new(x.clone(), vz, reference_az(5)).unwrap();
        let row = metrics_row(
            &x,
            &obs,
            &zero_parts(5),
            0.0,
            true,
            &Gains::default(),
            &consts,
        )
        .unwrap();
        assert_eq!(row.att_err, 0.0);
        assert_eq!(row.vel_err, 0.0);
        assert_eq!(row.pos_err, 0.0);
        assert!(row.lm_err.iter().all(|&e| e == 0.0));
        assert_eq!(row.lyap, 0.0);
        assert_eq!(row.tr_re_plus1, 4.0);
    }

    #[test]
    fn initial_position_error() {
        let params = SystemParams::circle_scenario();
        let consts = params.constants();
        let x = circle_initial_state(&params);
        let obs =
            ObserverState::new(SeElement::identity(5), Mat3xX::zeros(7), reference_az(5)).unwrap();
        let row = metrics_row(
            &x,
            &obs,
            &zero_parts(5),
            0.0,
            false,
            &Gains::default(),
            &consts,
        )
        .unwrap();
        assert!((row.pos_err - 2f64.sqrt()).abs() < 1e-15);
        assert!((row.vel_err - 1.0).abs() < 1e-15);
    }

    #[test]
    fn header_matches_row_width() {
        let params = SystemParams::circle_scenario();
        let consts = params.constants();
        let x = circle_initial_state(&params);
        let obs =
            ObserverState::new(SeElement::identity(5), Mat3xX::zeros(7), reference_az(5)).unwrap();
        let row = metrics_row(
            &x,
            &obs,
            &zero_parts(5),
            0.0,
            false,
            &Gains::default(),
            &consts,
        )
        .unwrap();
        assert_eq!(csv_columns(5).len(), row.values().len());
        assert!(csv_header(5).starts_with("time,sigma,att_err"));
        assert!(csv_header(5).contains("s_x,s_vx,s_v,schur_det,min_sv_AZ,margin"));
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 243.74, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }
}
