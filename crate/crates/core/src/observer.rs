//! Synchronous observer with state `(X_hat, Z)`, `Z = (I, V_Z, A_Z)`.
//!
//! Each sensor contributes a correction pair `(Delta, Gamma)`; the pairs are
//! summed and injected as
//!
//! ```text
//! X_hat' = X_hat U + (G + N) X_hat - X_hat N + Z Delta Z^{-1} X_hat
//! Z'     = (G + N) Z - Z Gamma
//! ```
//!
//! The error `E = Z^{-1} X X_hat^{-1} Z` then evolves independently of the
//! IMU input, and `L(E) = |V_E|^2 + tr(I - R_E)` is non-increasing under every
//! individual correction as well as under their sum.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{
    hat, min_singular_value, mixed_euler_step, ConstantMatrices, Mat3, Mat3xX, Rotation, SeElement,
    SeTangent, SimElement, SimTangent, Vec3, AXIOM_TOL, MIN_SINGULAR_VALUE,
};
use crate::system::{ImuInput, MeasurementBundle, SystemParams};

/// Observer gains and the persistence constants `(T, tau)` they were designed for.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Gains {
    pub kx: f64,
    pub kp: f64,
    pub k_rx: f64,
    pub k_rp: f64,
    pub km: f64,
    pub q: f64,
    pub tpe_period: f64,
    pub tpe_on: f64,
}

impl Default for Gains {
    /// Gains of the circular-trajectory scenario with `T = 10`, `tau = 5`.
    fn default() -> Self {
        Self {
            kx: 1.0,
            kp: 2.0,
            k_rx: 0.001,
            k_rp: 0.0005,
            km: 0.1,
            q: 0.1,
            tpe_period: 10.0,
            tpe_on: 5.0,
        }
    }
}

impl Gains {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("kx", self.kx),
            ("kp", self.kp),
            ("k_rx", self.k_rx),
            ("k_rp", self.k_rp),
            ("km", self.km),
            ("q", self.q),
            ("tpe_period", self.tpe_period),
            ("tpe_on", self.tpe_on),
        ];
        if let Some((name, v)) = named.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "gain {name} must be positive and finite, got {v}"
            )));
        }
        if !(self.tpe_on < self.tpe_period) {
            return Err(Error::InvalidParameter(format!(
                "tau ({}) must be smaller than T ({})",
                self.tpe_on, self.tpe_period
            )));
        }
        Ok(())
    }
}

/// Estimate `X_hat` plus the auxiliary state `(V_Z, A_Z)`; the rotation of `Z` is
/// fixed to the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct ObserverState {
    xhat: SeElement,
    vz: Mat3xX,
    az: DMatrix<f64>,
    // computed once on construction; every correction needs them
    az_inv: DMatrix<f64>,
    az_smin: f64,
}

impl ObserverState {
    pub fn new(xhat: SeElement, vz: Mat3xX, az: DMatrix<f64>) -> Result<Self> {
        let m = xhat.n() + 2;
        if vz.ncols() != m || az.nrows() != m || az.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: format!("V_Z 3 x {m}, A_Z {m} x {m}"),
                found: format!(
                    "V_Z 3 x {}, A_Z {} x {}",
                    vz.ncols(),
                    az.nrows(),
                    az.ncols()
                ),
            });
        }
        let smin = min_singular_value(&az);
        let singular = Error::SingularAuxiliary {
            min_singular_value: smin,
        };
        if !(smin > MIN_SINGULAR_VALUE) {
            return Err(singular);
        }
        let az_inv = az.clone().try_inverse().ok_or(singular)?;
        Ok(Self {
            xhat,
            vz,
            az,
            az_inv,
            az_smin: smin,
        })
    }

    pub fn estimate(&self) -> &SeElement {
        &self.xhat
    }

    pub fn vz(&self) -> &Mat3xX {
        &self.vz
    }

    pub fn az(&self) -> &DMatrix<f64> {
        &self.az
    }

    pub fn n(&self) -> usize {
        self.xhat.n()
    }

    /// The auxiliary state as a group element.
    pub fn z(&self) -> SimElement {
        SimElement::new(Rotation::identity(), self.vz.clone(), self.az.clone())
            .expect("dimensions checked on construction")
    }

    /// `P = A_Z A_Z^T`.
    pub fn p(&self) -> DMatrix<f64> {
        &self.az * self.az.transpose()
    }

    pub fn az_inverse(&self) -> Result<DMatrix<f64>> {
        Ok(self.az_inv.clone())
    }

    pub fn min_singular_value(&self) -> f64 {
        self.az_smin
    }

    /// `Z^{-1} = (I, -V_Z A_Z^{-1}, A_Z^{-1})`.
    pub fn z_inverse(&self) -> SimElement {
        SimElement::new(
            Rotation::identity(),
            -(&self.vz * &self.az_inv),
            self.az_inv.clone(),
        )
        .expect("dimensions checked on construction")
    }

    fn from_sim(xhat: SeElement, z: SimElement) -> Result<Self> {
        if *z.rotation().matrix() != Mat3::identity() {
            return Err(Error::NotInGroup(
                "auxiliary rotation drifted away from the identity".into(),
            ));
        }
        Self::new(xhat, z.translation().clone(), z.scaling().clone())
    }
}

/// A correction pair `(Delta, Gamma)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentCorrection {
    pub delta: SeTangent,
    pub gamma: SimTangent,
}

impl TangentCorrection {
    pub fn zero(n: usize) -> Self {
        Self {
            delta: SeTangent::zero(n),
            gamma: SimTangent::zero(n),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.delta.is_finite() && self.gamma.is_finite()
    }

    /// Frobenius norm of the stacked components.
    pub fn norm(&self) -> f64 {
        (self.delta.omega.norm_squared()
            + self.delta.w.norm_squared()
            + self.gamma.w.norm_squared()
            + self.gamma.s.norm_squared())
        .sqrt()
    }
}

/// Componentwise sum of corrections; `Omega_Gamma` stays zero.
pub fn combine_corrections<'a, I>(n: usize, parts: I) -> Result<TangentCorrection>
where
    I: IntoIterator<Item = &'a TangentCorrection>,
{
    let mut acc = TangentCorrection::zero(n);
    for p in parts {
        if p.delta.cols() != n + 2 || p.gamma.cols() != n + 2 {
            return Err(Error::DimensionMismatch {
                expected: format!("{} columns", n + 2),
                found: format!("{}", p.delta.cols()),
            });
        }
        acc.delta = &acc.delta + &p.delta;
        acc.gamma = &acc.gamma + &p.gamma;
    }
    acc.gamma.omega = Vec3::zeros();
    Ok(acc)
}

/// Per-sensor corrections of a single step.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorCorrections {
    pub gnss: TangentCorrection,
    pub landmark: TangentCorrection,
    pub magnetometer: TangentCorrection,
}

impl SensorCorrections {
    pub fn total(&self) -> TangentCorrection {
        combine_corrections(
            self.gnss.delta.cols() - 2,
            [&self.gnss, &self.landmark, &self.magnetometer],
        )
        .expect("sensor corrections share dimensions")
    }
}

fn outer3(a: &Vec3, b: &DVector<f64>) -> Mat3xX {
    a * b.transpose()
}

/// GNSS position correction.
pub fn gnss_correction(
    obs: &ObserverState,
    yx: &Vec3,
    sigma: bool,
    gains: &Gains,
    consts: &ConstantMatrices,
) -> Result<TangentCorrection> {
    let a_inv = obs.az_inverse()?;
    Ok(gnss_correction_with(obs, &a_inv, yx, sigma, gains, consts))
}

fn gnss_correction_with(
    obs: &ObserverState,
    a_inv: &DMatrix<f64>,
    yx: &Vec3,
    sigma: bool,
    gains: &Gains,
    consts: &ConstantMatrices,
) -> TangentCorrection {
    let s = if sigma { 1.0 } else { 0.0 };
    // an unavailable fix carries no information
    let yx = &(yx * s);
    let m = obs.n() + 2;
    let acx: DVector<f64> = a_inv * &consts.cx;
    let mu: Vec3 = &obs.vz * &acx;
    let xhat = obs.xhat.position();
    let k = gains.kx + gains.k_rx;

    let w_delta = outer3(&((yx - xhat * s) * k), &acx);
    let aux_res = yx - mu * s;
    let w_gamma = outer3(&(aux_res * -k), &acx);
    let omega = (xhat - mu).cross(&aux_res) * (4.0 * gains.k_rx * s);
    let s_gamma =
        &acx * acx.transpose() * (-0.5 * gains.kx * s) + DMatrix::identity(m, m) * gains.q;
    TangentCorrection {
        delta: SeTangent { omega, w: w_delta },
        gamma: SimTangent {
            omega: Vec3::zeros(),
            w: w_gamma,
            s: s_gamma,
        },
    }
}

/// Landmark position correction; `y` holds the body-frame landmark readings.
pub fn landmark_correction(
    obs: &ObserverState,
    y: &Mat3xX,
    gains: &Gains,
    consts: &ConstantMatrices,
) -> Result<TangentCorrection> {
    let a_inv = obs.az_inverse()?;
    landmark_correction_with(obs, &a_inv, y, gains, consts)
}

fn landmark_correction_with(
    obs: &ObserverState,
    a_inv: &DMatrix<f64>,
    y: &Mat3xX,
    gains: &Gains,
    consts: &ConstantMatrices,
) -> Result<TangentCorrection> {
    let n = obs.n();
    if y.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("{n} landmark readings"),
            found: y.ncols().to_string(),
        });
    }
    let rhat = obs.xhat.rotation().matrix();
    let y_hat = -(rhat.transpose() * obs.xhat.translation() * &consts.c);
    let res: Mat3xX = rhat * (y - y_hat);
    let ac: DMatrix<f64> = a_inv * &consts.c;
    let ac_t = ac.transpose();
    let k = gains.kp + n as f64 * gains.k_rp;
    let ones = consts.ones();

    let w_delta = &res * &ac_t * -k;
    let vz_ac: Mat3xX = &obs.vz * &ac;
    let w_gamma = &vz_ac * &ac_t * k;
    let s_gamma = &ac * &ac_t * (-0.5 * gains.kp);
    let mu_z: Vec3 = &vz_ac * &ones;
    let res_sum: Vec3 = &res * &ones;
    let omega = mu_z.cross(&res_sum) * (4.0 * gains.k_rp);
    Ok(TangentCorrection {
        delta: SeTangent { omega, w: w_delta },
        gamma: SimTangent {
            omega: Vec3::zeros(),
            w: w_gamma,
            s: s_gamma,
        },
    })
}

/// Magnetometer correction; only `Omega_Delta` is non-zero.
pub fn magnetometer_correction(
    obs: &ObserverState,
    ym: &Vec3,
    gains: &Gains,
    params: &SystemParams,
) -> TangentCorrection {
    let n = obs.n();
    let norm = ym.norm();
    let ym = if norm > 0.0 { ym / norm } else { *ym };
    let omega = (obs.xhat.rotation().matrix() * ym).cross(&params.mag_reference) * (4.0 * gains.km);
    TangentCorrection {
        delta: SeTangent {
            omega,
            w: Mat3xX::zeros(n + 2),
        },
        gamma: SimTangent::zero(n),
    }
}

/// All three sensor corrections for one measurement bundle.
pub fn compute_corrections(
    obs: &ObserverState,
    meas: &MeasurementBundle,
    gains: &Gains,
    params: &SystemParams,
    consts: &ConstantMatrices,
) -> Result<SensorCorrections> {
    let a_inv = obs.az_inverse()?;
    Ok(SensorCorrections {
        gnss: gnss_correction_with(obs, &a_inv, &meas.gnss, meas.sigma, gains, consts),
        landmark: landmark_correction_with(obs, &a_inv, &meas.landmarks, gains, consts)?,
        magnetometer: magnetometer_correction(obs, &meas.magnetometer, gains, params),
    })
}

/// `Z Delta Z^{-1}`, formed in the dense embedding and checked to lie in
/// `se_{n+2}(3)`.
pub fn conjugate_correction(obs: &ObserverState, delta: &SeTangent) -> Result<SeTangent> {
    let z = obs.z();
    let z_inv = obs.z_inverse();
    let dense = z.to_matrix() * delta.to_matrix() * z_inv.to_matrix();
    let t = SimTangent::from_matrix(&dense)?;
    let scale = 1.0 + t.w.amax();
    let lower = t.s.amax();
    if lower > AXIOM_TOL * scale {
        return Err(Error::NotInGroup(format!(
            "conjugated correction has lower-right block {lower:e}"
        )));
    }
    Ok(SeTangent {
        omega: t.omega,
        w: t.w,
    })
}

/// Advances the observer by `dt` holding `corr` and `u` constant.
pub fn apply_correction(
    obs: &ObserverState,
    u: &ImuInput,
    corr: &TangentCorrection,
    consts: &ConstantMatrices,
    dt: f64,
) -> Result<ObserverState> {
    if !corr.is_finite() {
        return Err(Error::NonFinite("correction term"));
    }
    let conj = conjugate_correction(obs, &corr.delta)?;
    let gn = consts.gravity_coupling();
    let left = &gn + &SimTangent::from(conj);
    let right = consts.input_minus_coupling(&u.omega, &u.accel);
    let xhat = mixed_euler_step(&obs.xhat, &left, &right, dt)?;
    let z = mixed_euler_step(&obs.z(), &gn, &corr.gamma.scale(-1.0), dt)?;
    ObserverState::from_sim(xhat, z)
}

/// One observer step; returns the new state and the corrections that drove it.
pub fn observer_step(
    obs: &ObserverState,
    u: &ImuInput,
    meas: &MeasurementBundle,
    gains: &Gains,
    params: &SystemParams,
    consts: &ConstantMatrices,
    dt: f64,
) -> Result<(ObserverState, SensorCorrections)> {
    let parts = compute_corrections(obs, meas, gains, params, consts)?;
    let next = apply_correction(obs, u, &parts.total(), consts, dt)?;
    Ok((next, parts))
}

/// Observer error `E = Z^{-1} X X_hat^{-1} Z` by its rotation and translation parts.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorState {
    pub re: Rotation,
    pub ve: Mat3xX,
}

impl ErrorState {
    pub fn identity(n: usize) -> Self {
        Self {
            re: Rotation::identity(),
            ve: Mat3xX::zeros(n + 2),
        }
    }
}

/// Component form: `R_E = R R_hat^T`, `V_E = (V A_Z - V_Z) - R_E (V_hat A_Z - V_Z)`.
pub fn compute_error(truth: &SeElement, obs: &ObserverState) -> ErrorState {
    let re = truth.rotation().compose(&obs.xhat.rotation().transpose());
    let va = truth.translation() * &obs.az - &obs.vz;
    let vhat_a = obs.xhat.translation() * &obs.az - &obs.vz;
    let ve = va - re.matrix() * vhat_a;
    ErrorState { re, ve }
}

/// Group-product form `Z^{-1} X X_hat^{-1} Z`.
pub fn compute_error_group_form(truth: &SeElement, obs: &ObserverState) -> Result<ErrorState> {
    let z = obs.z();
    let e = z
        .inverse()?
        .compose(&truth.to_sim())?
        .compose(&obs.xhat.inverse().to_sim())?
        .compose(&z)?
        .into_se()?;
    Ok(ErrorState {
        re: e.rotation().clone(),
        ve: e.translation().clone(),
    })
}

/// `|V_E|^2 + tr(I - R_E)`.
pub fn lyapunov(err: &ErrorState) -> f64 {
    err.ve.norm_squared() + 3.0 - err.re.trace()
}

/// `(dR_E, dV_E) = (-R_E hat(Omega_Delta), -V_E S_Gamma + (I - R_E) W_Gamma - R_E W_Delta)`.
pub fn error_dynamics_rhs(err: &ErrorState, corr: &TangentCorrection) -> (Mat3, Mat3xX) {
    let r = err.re.matrix();
    let dr = -r * hat(&corr.delta.omega);
    let dv =
        -(&err.ve * &corr.gamma.s) + (Mat3::identity() - r) * &corr.gamma.w - r * &corr.delta.w;
    (dr, dv)
}

/// Time derivative of [`lyapunov`] along [`error_dynamics_rhs`].
pub fn lyapunov_rate(err: &ErrorState, corr: &TangentCorrection) -> f64 {
    let (dr, dv) = error_dynamics_rhs(err, corr);
    2.0 * err.ve.dot(&dv) - dr.trace()
}

/// Upper bounds on the Lyapunov rate under each individual correction.
pub mod bounds {
    use super::*;

    fn i_minus_re_squared(err: &ErrorState) -> Mat3 {
        let r = err.re.matrix();
        Mat3::identity() - r * r
    }

    /// GNSS bound; `yx` and `sigma` are the measurement the correction was built from.
    pub fn gnss(
        err: &ErrorState,
        obs: &ObserverState,
        yx: &Vec3,
        sigma: bool,
        gains: &Gains,
        consts: &ConstantMatrices,
    ) -> Result<f64> {
        let s = if sigma { 1.0 } else { 0.0 };
        let a_inv = obs.az_inverse()?;
        let acx: DVector<f64> = &a_inv * &consts.cx;
        let mu: Vec3 = obs.vz() * &acx;
        let e_cx = (&err.ve * &acx).norm();
        let rot_term = (i_minus_re_squared(err) * (yx - mu * s)).norm();
        Ok(-2.0 * gains.k_rx * (rot_term - s * e_cx).powi(2)
            - s * gains.kx * e_cx * e_cx
            - 2.0 * gains.q * err.ve.norm_squared())
    }

    pub fn landmark(
        err: &ErrorState,
        obs: &ObserverState,
        gains: &Gains,
        consts: &ConstantMatrices,
    ) -> Result<f64> {
        let n = obs.n() as f64;
        let a_inv = obs.az_inverse()?;
        let ac = &a_inv * &consts.c;
        let e_c = (&err.ve * &ac).norm();
        let mu_z: Vec3 = obs.vz() * &ac * consts.ones();
        let rot_term = (i_minus_re_squared(err) * mu_z).norm();
        Ok(-gains.kp * e_c * e_c - 2.0 * gains.k_rp * (n.sqrt() * e_c - rot_term).powi(2))
    }

    /// Exact rate under the magnetometer correction, `-2 km |(I - R_E^2) y_ref|^2`.
    pub fn magnetometer(err: &ErrorState, gains: &Gains, params: &SystemParams) -> f64 {
        -2.0 * gains.km * (i_minus_re_squared(err) * params.mag_reference).norm_squared()
    }
}
